#include "lsa/training.hpp"

#include "lsa/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace lsa {

void TrainConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
    if (!(gamma >= 0.0))
        fail("gamma must be >= 0");
    if (!(lambda >= 0.0))
        fail("lambda must be >= 0");
    if (!(learning_rate >= 0.0))
        fail("learning rate must be >= 0");
    if (batch_size == 0 || batch_size % 2 != 0)
        fail("batch size must be positive and even");
    if (shots_per_class == 0)
        fail("shots per class must be positive");
    if (!(refresh_fraction >= 0.0 && refresh_fraction <= 1.0))
        fail("refresh fraction must lie in [0, 1]");
    if (region_samples == 0)
        fail("region sample count must be positive");
    if (queue_capacity < 2)
        fail("queue capacity must be at least 2");
    if (!no_ood_context && num_ood == 0)
        fail("num_ood must be positive unless the OOD context is disabled");
    if (!(temperature > 0.0))
        fail("temperature must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        fail("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0))
        fail("weight decay must be >= 0");
}

GradAccumulator GradAccumulator::zeros_like(const ContextBank& bank)
{
    return {Matrix(bank.num_classes(), bank.dim()), Matrix(bank.num_ood(), bank.dim())};
}

void GradAccumulator::add(const GradAccumulator& other, double s)
{
    auto a = d_id.flat();
    auto b = other.d_id.flat();
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] += s * b[i];
    auto c = d_ood.flat();
    auto d = other.d_ood.flat();
    for (std::size_t i = 0; i < c.size(); ++i)
        c[i] += s * d[i];
}

void GradAccumulator::scale(double s)
{
    for (double& x : d_id.flat())
        x *= s;
    for (double& x : d_ood.flat())
        x *= s;
}

namespace {

// Unit-normalized copies of the context rows plus their norms.
struct RowCache {
    Matrix unit_id;
    Matrix unit_ood;
    Vector norm_id;
    Vector norm_ood;

    explicit RowCache(const ContextBank& bank)
        : unit_id(bank.id_context), unit_ood(bank.ood_context),
          norm_id(bank.num_classes()), norm_ood(bank.num_ood())
    {
        normalize_rows(unit_id, norm_id);
        normalize_rows(unit_ood, norm_ood);
    }

    static void normalize_rows(Matrix& m, Vector& norms)
    {
        for (std::size_t k = 0; k < m.rows(); ++k) {
            auto row = m.row(k);
            norms[k] = norm(row);
            if (norms[k] == 0.0)
                throw Error(ErrorCode::ZeroVector, "context row " + std::to_string(k) + " is zero");
            for (double& x : row)
                x /= norms[k];
        }
    }
};

struct Scratch {
    Vector unit;
    Vector s;
    Vector g;
};

void unit_into(std::span<const double> v, Vector& out)
{
    const double n = norm(v);
    out.assign(v.begin(), v.end());
    for (double& x : out)
        x /= n;
}

void cosines_into(const Vector& unit, const Matrix& rows, double* out)
{
    for (std::size_t k = 0; k < rows.rows(); ++k)
        out[k] = std::clamp(dot(unit, rows.row(k)), -1.0, 1.0);
}

// grad_row += g * d cos(v, t) / d t = g * (v_hat - cos * t_hat) / |t|
void add_cosine_grad(std::span<double> grad_row, double g, const Vector& unit,
                     std::span<const double> unit_row, double cos, double row_norm)
{
    const double a = g / row_norm;
    for (std::size_t i = 0; i < grad_row.size(); ++i)
        grad_row[i] += a * (unit[i] - cos * unit_row[i]);
}

void check_vectors(std::span<const Vector> vs, std::size_t dim, const char* what)
{
    if (vs.empty())
        throw Error(ErrorCode::EmptyInput, std::string(what) + " set is empty");
    for (const auto& v : vs) {
        if (v.size() != dim)
            throw Error(ErrorCode::DimensionMismatch, std::string(what) + " vector has dimension " +
                                                          std::to_string(v.size()));
        if (norm(v) == 0.0)
            throw Error(ErrorCode::ZeroVector, std::string(what) + " vector is zero");
    }
}

void check_items(std::span<const TrainItem> items, const ContextBank& bank)
{
    if (items.empty())
        throw Error(ErrorCode::EmptyInput, "cross-entropy batch is empty");
    const auto classes = static_cast<int>(bank.num_classes() + bank.num_ood());
    for (const auto& it : items) {
        if (it.embedding.size() != bank.dim())
            throw Error(ErrorCode::DimensionMismatch, "batch item has dimension " +
                                                          std::to_string(it.embedding.size()));
        if (norm(it.embedding) == 0.0)
            throw Error(ErrorCode::ZeroVector, "batch item is zero");
        if (it.label < 0 || it.label >= classes)
            throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(it.label));
    }
}

void require_ood(const ContextBank& bank)
{
    if (bank.num_ood() == 0)
        throw Error(ErrorCode::NoOodContext, "loss needs OOD context rows");
}

// Softmax cross-entropy over [id rows, ood rows] at temperature tau.
double ce_item(const TrainItem& item, const ContextBank& bank, const RowCache& rc,
               GradAccumulator& acc, Scratch& sc)
{
    const std::size_t c = bank.num_classes();
    const std::size_t m = bank.num_ood();
    const double tau = bank.temperature;
    unit_into(item.embedding, sc.unit);
    sc.s.resize(c + m);
    cosines_into(sc.unit, rc.unit_id, sc.s.data());
    cosines_into(sc.unit, rc.unit_ood, sc.s.data() + c);
    sc.g.resize(c + m);
    for (std::size_t k = 0; k < c + m; ++k)
        sc.g[k] = sc.s[k] / tau;
    const double lse = logsumexp(sc.g);
    const auto y = static_cast<std::size_t>(item.label);
    const double loss = lse - sc.g[y];
    for (std::size_t k = 0; k < c + m; ++k) {
        const double p = std::exp(sc.g[k] - lse);
        const double dz = (p - (k == y ? 1.0 : 0.0)) / tau;
        if (k < c)
            add_cosine_grad(acc.d_id.row(k), dz, sc.unit, rc.unit_id.row(k), sc.s[k], rc.norm_id[k]);
        else
            add_cosine_grad(acc.d_ood.row(k - c), dz, sc.unit, rc.unit_ood.row(k - c), sc.s[k],
                            rc.norm_ood[k - c]);
    }
    return loss;
}

// -(1/K) sum_k log softmax(s / tau)_k over one block of rows.
double uniform_item(const Vector& v, const Matrix& unit_rows, const Vector& norms, Matrix& grad,
                    double tau, Scratch& sc)
{
    const std::size_t k_rows = unit_rows.rows();
    unit_into(v, sc.unit);
    sc.s.resize(k_rows);
    cosines_into(sc.unit, unit_rows, sc.s.data());
    sc.g.resize(k_rows);
    double mean_z = 0.0;
    for (std::size_t k = 0; k < k_rows; ++k) {
        sc.g[k] = sc.s[k] / tau;
        mean_z += sc.g[k];
    }
    mean_z /= static_cast<double>(k_rows);
    const double lse = logsumexp(sc.g);
    const double inv_k = 1.0 / static_cast<double>(k_rows);
    for (std::size_t k = 0; k < k_rows; ++k) {
        const double q = std::exp(sc.g[k] - lse);
        add_cosine_grad(grad.row(k), (q - inv_k) / tau, sc.unit, unit_rows.row(k), sc.s[k],
                        norms[k]);
    }
    return lse - mean_z;
}

double bin_item(const Vector& h, const ContextBank& bank, const RowCache& rc, GradAccumulator& acc,
                Scratch& sc)
{
    const std::size_t c = bank.num_classes();
    const std::size_t m = bank.num_ood();
    unit_into(h, sc.unit);
    sc.s.resize(c + m);
    cosines_into(sc.unit, rc.unit_id, sc.s.data());
    cosines_into(sc.unit, rc.unit_ood, sc.s.data() + c);
    const auto id_best = static_cast<std::size_t>(
        std::max_element(sc.s.begin(), sc.s.begin() + static_cast<long>(c)) - sc.s.begin());
    const auto ood_best = static_cast<std::size_t>(
        std::max_element(sc.s.begin() + static_cast<long>(c), sc.s.end()) - sc.s.begin() -
        static_cast<long>(c));
    const double a = sc.s[id_best];
    const double b = sc.s[c + ood_best];
    // -log S(a) - log(1 - S(b)); 1 - S(b) = S(-b)
    const double loss = -log_sigmoid(a) - log_sigmoid(-b);
    add_cosine_grad(acc.d_id.row(id_best), -sigmoid(-a), sc.unit, rc.unit_id.row(id_best), a,
                    rc.norm_id[id_best]);
    add_cosine_grad(acc.d_ood.row(ood_best), sigmoid(b), sc.unit, rc.unit_ood.row(ood_best), b,
                    rc.norm_ood[ood_best]);
    return loss;
}

// Fixed chunking: boundaries depend only on n, and partials are summed in
// chunk order after the parallel loop.
template <typename Kernel>
LossValue reduce_chunked(std::size_t n, const ContextBank& bank, Kernel kernel)
{
    const std::size_t chunk = std::max<std::size_t>(16, (n + 63) / 64);
    const std::size_t chunks = (n + chunk - 1) / chunk;
    std::vector<LossValue> partial(chunks);

#pragma omp parallel for schedule(static)
    for (long ch = 0; ch < static_cast<long>(chunks); ++ch) {
        LossValue& p = partial[static_cast<std::size_t>(ch)];
        p.grads = GradAccumulator::zeros_like(bank);
        Scratch sc;
        const std::size_t begin = static_cast<std::size_t>(ch) * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        for (std::size_t i = begin; i < end; ++i)
            p.value += kernel(i, p.grads, sc);
    }

    LossValue out{0.0, GradAccumulator::zeros_like(bank)};
    for (const auto& p : partial) {
        out.value += p.value;
        out.grads.add(p.grads);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    out.value *= inv_n;
    out.grads.scale(inv_n);
    return out;
}

template <typename Kernel>
LossValue reduce_serial(std::size_t n, const ContextBank& bank, Kernel kernel)
{
    LossValue out{0.0, GradAccumulator::zeros_like(bank)};
    Scratch sc;
    for (std::size_t i = 0; i < n; ++i)
        out.value += kernel(i, out.grads, sc);
    const double inv_n = 1.0 / static_cast<double>(n);
    out.value *= inv_n;
    out.grads.scale(inv_n);
    return out;
}

template <bool Parallel, typename Kernel>
LossValue reduce(std::size_t n, const ContextBank& bank, Kernel kernel)
{
    if constexpr (Parallel)
        return reduce_chunked(n, bank, kernel);
    else
        return reduce_serial(n, bank, kernel);
}

template <bool Parallel>
LossValue ce_impl(std::span<const TrainItem> items, const ContextBank& bank)
{
    check_items(items, bank);
    const RowCache rc(bank);
    return reduce<Parallel>(items.size(), bank,
                            [&](std::size_t i, GradAccumulator& acc, Scratch& sc) {
                                return ce_item(items[i], bank, rc, acc, sc);
                            });
}

template <bool Parallel>
LossValue uni_impl(std::span<const Vector> regions, const ContextBank& bank)
{
    require_ood(bank);
    check_vectors(regions, bank.dim(), "uniformity");
    const RowCache rc(bank);
    return reduce<Parallel>(regions.size(), bank,
                            [&](std::size_t i, GradAccumulator& acc, Scratch& sc) {
                                return uniform_item(regions[i], rc.unit_ood, rc.norm_ood, acc.d_ood,
                                                    bank.temperature, sc);
                            });
}

template <bool Parallel>
LossValue uni_id_impl(std::span<const Vector> regions, const ContextBank& bank)
{
    check_vectors(regions, bank.dim(), "uniformity");
    const RowCache rc(bank);
    return reduce<Parallel>(regions.size(), bank,
                            [&](std::size_t i, GradAccumulator& acc, Scratch& sc) {
                                return uniform_item(regions[i], rc.unit_id, rc.norm_id, acc.d_id,
                                                    bank.temperature, sc);
                            });
}

template <bool Parallel>
LossValue bin_impl(std::span<const Vector> regions, const ContextBank& bank)
{
    require_ood(bank);
    if (bank.num_classes() == 0)
        throw Error(ErrorCode::EmptyInput, "binary loss needs ID context rows");
    check_vectors(regions, bank.dim(), "binary");
    const RowCache rc(bank);
    return reduce<Parallel>(regions.size(), bank,
                            [&](std::size_t i, GradAccumulator& acc, Scratch& sc) {
                                return bin_item(regions[i], bank, rc, acc, sc);
                            });
}

} // namespace

LossValue loss_ce(std::span<const TrainItem> items, const ContextBank& bank)
{
    return ce_impl<true>(items, bank);
}

LossValue loss_uni(std::span<const Vector> regions, const ContextBank& bank)
{
    return uni_impl<true>(regions, bank);
}

LossValue loss_bin(std::span<const Vector> regions, const ContextBank& bank)
{
    return bin_impl<true>(regions, bank);
}

LossValue loss_uni_id(std::span<const Vector> regions, const ContextBank& bank)
{
    return uni_id_impl<true>(regions, bank);
}

namespace serial {

LossValue loss_ce(std::span<const TrainItem> items, const ContextBank& bank)
{
    return ce_impl<false>(items, bank);
}

LossValue loss_uni(std::span<const Vector> regions, const ContextBank& bank)
{
    return uni_impl<false>(regions, bank);
}

LossValue loss_bin(std::span<const Vector> regions, const ContextBank& bank)
{
    return bin_impl<false>(regions, bank);
}

LossValue loss_uni_id(std::span<const Vector> regions, const ContextBank& bank)
{
    return uni_id_impl<false>(regions, bank);
}

} // namespace serial

TotalLoss total_loss(const TrainBatch& batch, const ContextBank& bank, const TrainConfig& cfg)
{
    TotalLoss out;
    LossValue ce = loss_ce(batch.items, bank);
    out.ce = ce.value;
    out.grads = std::move(ce.grads);

    const double gamma = cfg.disable_uni ? 0.0 : cfg.gamma;
    if (cfg.no_ood_context) {
        if (gamma > 0.0) {
            const LossValue uni = loss_uni_id(batch.low_regions, bank);
            out.uni = uni.value;
            out.grads.add(uni.grads, gamma);
        }
        out.total = out.ce + gamma * out.uni;
        return out;
    }

    const double lambda = cfg.disable_bin ? 0.0 : cfg.lambda;
    if (gamma > 0.0) {
        const LossValue uni = loss_uni(batch.uni_regions, bank);
        out.uni = uni.value;
        out.grads.add(uni.grads, gamma);
    }
    if (lambda > 0.0) {
        const LossValue bin = loss_bin(batch.bin_regions, bank);
        out.bin = bin.value;
        out.grads.add(bin.grads, lambda);
    }
    out.total = out.ce + gamma * out.uni + lambda * out.bin;
    return out;
}

namespace {

// One random pool image per class, standing in for h_c.
std::vector<Vector> global_substitutes(std::span<const TrainItem> pool, std::size_t classes,
                                       Rng& rng)
{
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].label >= 0 && static_cast<std::size_t>(pool[i].label) < classes)
            by_class[static_cast<std::size_t>(pool[i].label)].push_back(i);
    std::vector<Vector> out;
    out.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto& idx = by_class[c];
        const std::size_t pick = idx.empty() ? rng.uniform_index(pool.size())
                                             : idx[rng.uniform_index(idx.size())];
        out.push_back(pool[pick].embedding);
    }
    return out;
}

} // namespace

TrainBatch build_batch(std::span<const TrainItem> images, std::span<const TrainItem> pool,
                       const RegionSets& regions, const TrainConfig& cfg, Rng& rng,
                       const OutlierLabels* low_labels)
{
    const std::size_t classes = regions.high.size();
    const std::size_t s = cfg.batch_size / 2;
    if (s > classes)
        throw Error(ErrorCode::SExceedsC, "half batch " + std::to_string(s) + " exceeds " +
                                              std::to_string(classes) + " classes");
    if (pool.empty())
        throw Error(ErrorCode::EmptyInput, "few-shot pool is empty");

    TrainBatch batch;
    batch.items.reserve(images.size() + s + regions.low.size());
    batch.items.insert(batch.items.end(), images.begin(), images.end());

    if (!cfg.substitute_ce) {
        for (std::size_t c : sample_without_replacement(classes, s, rng))
            batch.items.push_back({regions.high[c], static_cast<int>(c)});
    }

    if (!cfg.no_ood_context) {
        const std::size_t m = cfg.num_ood;
        for (std::size_t j = 0; j < regions.low.size(); ++j) {
            int label;
            if (low_labels && j < low_labels->labels.size() && low_labels->labels[j] >= 0)
                label = static_cast<int>(classes) +
                        low_labels->labels[j] % static_cast<int>(m);
            else
                label = static_cast<int>(classes + rng.uniform_index(m));
            batch.items.push_back({regions.low[j], label});
        }
        batch.uni_regions =
            cfg.substitute_uni ? global_substitutes(pool, classes, rng) : regions.high;
        batch.bin_regions =
            cfg.substitute_bin ? global_substitutes(pool, classes, rng) : regions.high;
    }
    batch.low_regions = regions.low;
    return batch;
}

TrainBatch build_batch(std::span<const TrainItem> pool, const RegionSets& regions,
                       const TrainConfig& cfg, Rng& rng)
{
    std::vector<TrainItem> images;
    for (std::size_t i : sample_without_replacement(pool.size(), cfg.batch_size, rng))
        images.push_back(pool[i]);
    return build_batch(images, pool, regions, cfg, rng);
}

SgdState SgdState::zeros_like(const ContextBank& bank)
{
    return {Matrix(bank.num_classes(), bank.dim()), Matrix(bank.num_ood(), bank.dim())};
}

double cosine_learning_rate(double initial, std::size_t epoch, std::size_t total_epochs)
{
    if (total_epochs == 0)
        return initial;
    const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return initial * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

void momentum_update(std::span<double> theta, std::span<double> velocity,
                     std::span<const double> grad, double lr, double momentum, double decay)
{
    for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = momentum * velocity[i] + (grad[i] + decay * theta[i]);
        theta[i] -= lr * velocity[i];
    }
}

} // namespace

void sgd_step(ContextBank& bank, const GradAccumulator& grads, SgdState& state,
              const TrainConfig& cfg, std::size_t epoch)
{
    const double lr = cosine_learning_rate(cfg.learning_rate, epoch, cfg.epochs);
    momentum_update(bank.id_context.flat(), state.velocity_id.flat(), grads.d_id.flat(), lr,
                    cfg.momentum, cfg.weight_decay);
    momentum_update(bank.ood_context.flat(), state.velocity_ood.flat(), grads.d_ood.flat(), lr,
                    cfg.momentum, cfg.weight_decay);
}

TrainResult train(const TrainData& data, const TrainConfig& cfg)
{
    cfg.validate();
    const std::size_t classes = data.num_classes;
    if (classes == 0)
        throw Error(ErrorCode::EmptyInput, "training data declares no classes");
    if (data.embeddings.size() != data.labels.size())
        throw Error(ErrorCode::DimensionMismatch, "embedding and label counts differ");
    if (cfg.batch_size / 2 > classes)
        throw Error(ErrorCode::SExceedsC, "half batch " + std::to_string(cfg.batch_size / 2) +
                                              " exceeds " + std::to_string(classes) + " classes");

    std::vector<std::vector<Vector>> by_class(classes);
    for (std::size_t i = 0; i < data.embeddings.size(); ++i) {
        const int y = data.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw Error(ErrorCode::LabelOutOfRange, "training label " + std::to_string(y));
        by_class[static_cast<std::size_t>(y)].push_back(data.embeddings[i]);
    }

    Rng root(cfg.seed);
    Rng pool_rng = root.split(1);
    Rng queue_rng = root.split(2);
    Rng init_rng = root.split(3);
    Rng loop_rng = root.split(4);

    // Few-shot pool, fixed once.
    std::vector<TrainItem> pool;
    for (std::size_t c = 0; c < classes; ++c) {
        auto picks = sample_without_replacement(by_class[c].size(), cfg.shots_per_class, pool_rng);
        std::sort(picks.begin(), picks.end());
        for (std::size_t i : picks)
            pool.push_back({by_class[c][i], static_cast<int>(c)});
    }

    std::vector<EmbeddingQueue> queues;
    for (std::size_t c = 0; c < classes; ++c)
        queues.push_back(
            bootstrap_queue(static_cast<int>(c), cfg.queue_capacity, by_class[c], queue_rng));

    std::vector<Vector> means;
    for (const auto& g : fit_all(queues))
        means.push_back(g.mean);

    TrainResult result;
    result.bank = init_context_bank(means, cfg.no_ood_context ? 0 : cfg.num_ood, cfg.temperature,
                                    cfg.warm_start, init_rng);
    SgdState state = SgdState::zeros_like(result.bank);

    const std::size_t iters = (pool.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<TrainItem> order = pool;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[loop_rng.uniform_index(i)]);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.learning_rate = cosine_learning_rate(cfg.learning_rate, epoch, cfg.epochs);

        for (std::size_t it = 0; it < iters; ++it) {
            for (std::size_t c = 0; c < classes; ++c)
                queues[c] = refresh_queue(std::move(queues[c]), by_class[c], cfg.refresh_fraction,
                                          queue_rng);
            const auto gaussians = fit_all(queues);
            RegionSets regions = build_region_sets(gaussians, cfg.region_samples, loop_rng);

            OutlierLabels outlier_labels;
            if (!data.outliers.empty()) {
                regions.low.clear();
                for (std::size_t j : sample_without_replacement(data.outliers.size(), classes,
                                                                loop_rng)) {
                    regions.low.push_back(data.outliers[j]);
                    outlier_labels.labels.push_back(
                        j < data.outlier_labels.size() ? data.outlier_labels[j] : -1);
                }
            }

            const std::size_t begin = it * cfg.batch_size;
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const std::span<const TrainItem> images(order.data() + begin, end - begin);
            const TrainBatch batch = build_batch(images, pool, regions, cfg, loop_rng,
                                                 data.outliers.empty() ? nullptr : &outlier_labels);

            const TotalLoss loss = total_loss(batch, result.bank, cfg);
            sgd_step(result.bank, loss.grads, state, cfg, epoch);

            rec.ce += loss.ce;
            rec.uni += loss.uni;
            rec.bin += loss.bin;
            rec.total += loss.total;
        }
        const double inv = 1.0 / static_cast<double>(iters);
        rec.ce *= inv;
        rec.uni *= inv;
        rec.bin *= inv;
        rec.total *= inv;
        result.trace.push_back(rec);
    }
    return result;
}

} // namespace lsa
