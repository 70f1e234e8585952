#include "lsa/context_model.hpp"
#include "lsa/gaussian_bank.hpp"
#include "lsa/scoring.hpp"
#include "lsa/synth.hpp"
#include "lsa/training.hpp"

#include <benchmark/benchmark.h>

namespace {

struct Fixture {
    lsa::SynthWorld world;
    lsa::ContextBank bank;
    std::vector<lsa::TrainItem> items;
    std::vector<lsa::EmbeddingQueue> queues;
    std::vector<lsa::ClassGaussian> gaussians;

    Fixture() : world(lsa::synth_world({}))
    {
        lsa::Rng rng(11);
        bank = lsa::init_context_bank(world.id_means, 15, 0.01, true, rng);
        const auto& train = world.split("id_train");
        std::vector<std::vector<lsa::Vector>> by_class(world.config.classes);
        for (std::size_t i = 0; i < train.size(); ++i) {
            items.push_back({train.globals[i], train.labels[i]});
            by_class[static_cast<std::size_t>(train.labels[i])].push_back(train.globals[i]);
        }
        for (std::size_t c = 0; c < by_class.size(); ++c)
            queues.push_back(lsa::bootstrap_queue(static_cast<int>(c), 500, by_class[c], rng));
        gaussians = lsa::fit_all(queues);
    }
};

const Fixture& fixture()
{
    static const Fixture f;
    return f;
}

template <bool Parallel>
void BM_ScoreDataset(benchmark::State& state)
{
    const auto& f = fixture();
    const auto& ds = f.world.split("near_ood:interleaved");
    const lsa::ScoreInput input{"near_ood:interleaved", ds.globals, ds.locals};
    const lsa::ScoreKind kind{lsa::ScoreTag::DEnergy, 1.0};
    for (auto _ : state) {
        auto out = Parallel ? lsa::score_dataset(input, f.bank, kind)
                            : lsa::serial::score_dataset(input, f.bank, kind);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(ds.size()));
}

template <bool Parallel>
void BM_LossCe(benchmark::State& state)
{
    const auto& f = fixture();
    for (auto _ : state) {
        auto out = Parallel ? lsa::loss_ce(f.items, f.bank) : lsa::serial::loss_ce(f.items, f.bank);
        benchmark::DoNotOptimize(out.value);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(f.items.size()));
}

template <bool Parallel>
void BM_RegionSets(benchmark::State& state)
{
    const auto& f = fixture();
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        lsa::Rng rng(3);
        auto out = Parallel ? lsa::build_region_sets(f.gaussians, n, rng)
                            : lsa::serial::build_region_sets(f.gaussians, n, rng);
        benchmark::DoNotOptimize(out.high.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * f.gaussians.size()));
}

} // namespace

BENCHMARK(BM_ScoreDataset<false>)->Name("score_dataset/serial");
BENCHMARK(BM_ScoreDataset<true>)->Name("score_dataset/parallel");
BENCHMARK(BM_LossCe<false>)->Name("loss_ce/serial");
BENCHMARK(BM_LossCe<true>)->Name("loss_ce/parallel");
BENCHMARK(BM_RegionSets<false>)->Name("region_sets/serial")->Arg(2000)->Arg(20000);
BENCHMARK(BM_RegionSets<true>)->Name("region_sets/parallel")->Arg(2000)->Arg(20000);

BENCHMARK_MAIN();
