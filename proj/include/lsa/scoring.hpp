#pragma once

#include "lsa/context_model.hpp"
#include "lsa/numerics.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsa {

enum class ScoreTag {
    EnergyId,   // T * logsumexp(s_id / T)
    DEnergy,    // E_id - E_ood
    Mcm,        // max ID cosine
    McmSoftmax, // max softmax(s_id / tau); comparison variant, not a default
    McmGl,      // MCM + best (local, ID row) cosine
};

struct ScoreKind {
    ScoreTag tag = ScoreTag::DEnergy;
    double temperature = 1.0; // energy temperature, independent of the training tau
};

std::string_view to_string(ScoreTag tag);
/// Accepts energy_id, d_energy, mcm, mcm_softmax, mcm_gl. Throws ConfigInvalid.
ScoreTag parse_score_tag(std::string_view name);

double energy_id(std::span<const double> id_sims, double temperature = 1.0);
double energy_ood(std::span<const double> ood_sims, double temperature = 1.0);

double d_energy(std::span<const double> v, const ContextBank& bank, double temperature = 1.0);
double mcm(std::span<const double> v, const ContextBank& bank);
double mcm_softmax(std::span<const double> v, const ContextBank& bank);
/// Throws NoLocalEmbeddings when locals is empty.
double mcm_gl(std::span<const double> v, std::span<const Vector> locals, const ContextBank& bank);

/// Score of one sample; higher means more ID-like.
double score_one(std::span<const double> v, std::span<const Vector> locals,
                 const ContextBank& bank, const ScoreKind& kind);

/// Input to dataset scoring: globals plus optional per-sample locals.
struct ScoreInput {
    std::string split;
    std::span<const Vector> globals;
    std::span<const std::vector<Vector>> locals; // empty or one entry per global
};

struct ScoredSample {
    std::size_t sample_id = 0;
    std::string split;
    ScoreTag kind = ScoreTag::DEnergy;
    double score = 0.0;
};

/// Order-preserving map over the samples. Per-sample failures are rethrown
/// with the sample id attached.
std::vector<ScoredSample> score_dataset(const ScoreInput& input, const ContextBank& bank,
                                        const ScoreKind& kind);

namespace serial {
std::vector<ScoredSample> score_dataset(const ScoreInput& input, const ContextBank& bank,
                                        const ScoreKind& kind);
} // namespace serial

} // namespace lsa
