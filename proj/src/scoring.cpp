#include "lsa/scoring.hpp"

#include "lsa/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace lsa {

std::string_view to_string(ScoreTag tag)
{
    switch (tag) {
    case ScoreTag::EnergyId: return "energy_id";
    case ScoreTag::DEnergy: return "d_energy";
    case ScoreTag::Mcm: return "mcm";
    case ScoreTag::McmSoftmax: return "mcm_softmax";
    case ScoreTag::McmGl: return "mcm_gl";
    }
    return "unknown";
}

ScoreTag parse_score_tag(std::string_view name)
{
    for (auto tag : {ScoreTag::EnergyId, ScoreTag::DEnergy, ScoreTag::Mcm, ScoreTag::McmSoftmax,
                     ScoreTag::McmGl})
        if (to_string(tag) == name)
            return tag;
    throw Error(ErrorCode::ConfigInvalid, "unknown score kind '" + std::string(name) + "'");
}

namespace {

double tempered_energy(std::span<const double> sims, double temperature)
{
    if (sims.empty())
        throw Error(ErrorCode::EmptyInput, "energy over zero logits");
    if (!(temperature > 0.0))
        throw Error(ErrorCode::NonPositiveTemperature, "energy temperature must be positive");
    Vector scaled(sims.begin(), sims.end());
    for (double& x : scaled)
        x /= temperature;
    return temperature * logsumexp(scaled);
}

} // namespace

double energy_id(std::span<const double> id_sims, double temperature)
{
    return tempered_energy(id_sims, temperature);
}

double energy_ood(std::span<const double> ood_sims, double temperature)
{
    return tempered_energy(ood_sims, temperature);
}

double d_energy(std::span<const double> v, const ContextBank& bank, double temperature)
{
    if (bank.num_ood() == 0)
        throw Error(ErrorCode::NoOodContext, "d_energy needs OOD context rows");
    return energy_id(id_similarities(v, bank), temperature) -
           energy_ood(ood_similarities(v, bank), temperature);
}

double mcm(std::span<const double> v, const ContextBank& bank)
{
    const Vector s = id_similarities(v, bank);
    if (s.empty())
        throw Error(ErrorCode::EmptyInput, "model has no ID classes");
    return *std::max_element(s.begin(), s.end());
}

double mcm_softmax(std::span<const double> v, const ContextBank& bank)
{
    const Vector p = softmax(id_similarities(v, bank), bank.temperature);
    return *std::max_element(p.begin(), p.end());
}

double mcm_gl(std::span<const double> v, std::span<const Vector> locals, const ContextBank& bank)
{
    if (locals.empty())
        throw Error(ErrorCode::NoLocalEmbeddings, "mcm_gl needs local embeddings");
    double best_local = -1.0;
    for (const auto& l : locals)
        best_local = std::max(best_local, mcm(l, bank));
    return mcm(v, bank) + best_local;
}

double score_one(std::span<const double> v, std::span<const Vector> locals,
                 const ContextBank& bank, const ScoreKind& kind)
{
    switch (kind.tag) {
    case ScoreTag::EnergyId: return energy_id(id_similarities(v, bank), kind.temperature);
    case ScoreTag::DEnergy: return d_energy(v, bank, kind.temperature);
    case ScoreTag::Mcm: return mcm(v, bank);
    case ScoreTag::McmSoftmax: return mcm_softmax(v, bank);
    case ScoreTag::McmGl: return mcm_gl(v, locals, bank);
    }
    throw Error(ErrorCode::ConfigInvalid, "unhandled score kind");
}

namespace {

void check_preconditions(const ScoreInput& input, const ContextBank& bank, const ScoreKind& kind)
{
    if (kind.tag == ScoreTag::DEnergy && bank.num_ood() == 0)
        throw Error(ErrorCode::NoOodContext, "d_energy needs OOD context rows");
    if (kind.tag == ScoreTag::McmGl && !input.globals.empty() && input.locals.empty())
        throw Error(ErrorCode::NoLocalEmbeddings, "split '" + input.split + "' carries no locals");
    if (!input.locals.empty() && input.locals.size() != input.globals.size())
        throw Error(ErrorCode::DimensionMismatch, "locals do not match the sample count");
}

std::span<const Vector> locals_of(const ScoreInput& input, std::size_t i)
{
    if (input.locals.empty())
        return {};
    return input.locals[i];
}

ScoredSample score_at(const ScoreInput& input, std::size_t i, const ContextBank& bank,
                      const ScoreKind& kind)
{
    try {
        return {i, input.split, kind.tag, score_one(input.globals[i], locals_of(input, i), bank, kind)};
    } catch (const Error& e) {
        throw Error(e.code(), "sample " + std::to_string(i) + " of '" + input.split + "': " + e.what());
    }
}

} // namespace

std::vector<ScoredSample> score_dataset(const ScoreInput& input, const ContextBank& bank,
                                        const ScoreKind& kind)
{
    check_preconditions(input, bank, kind);
    const auto n = static_cast<long>(input.globals.size());
    std::vector<ScoredSample> out(input.globals.size());
    std::exception_ptr failure;
    long failed_at = n;

#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = score_at(input, static_cast<std::size_t>(i), bank, kind);
        } catch (...) {
#pragma omp critical(lsa_score_failure)
            if (i < failed_at) {
                failed_at = i;
                failure = std::current_exception();
            }
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

namespace serial {

std::vector<ScoredSample> score_dataset(const ScoreInput& input, const ContextBank& bank,
                                        const ScoreKind& kind)
{
    check_preconditions(input, bank, kind);
    std::vector<ScoredSample> out;
    out.reserve(input.globals.size());
    for (std::size_t i = 0; i < input.globals.size(); ++i)
        out.push_back(score_at(input, i, bank, kind));
    return out;
}

} // namespace serial

} // namespace lsa
