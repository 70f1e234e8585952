#pragma once

#include "lsa/context_model.hpp"
#include "lsa/manifest.hpp"
#include "lsa/scoring.hpp"
#include "lsa/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsa {

/// Either one kind for every split, or the per-dataset recipe: near-OOD
/// splits under near_kind, far-OOD under far_kind, ID and csID under both.
struct ScoreRecipe {
    std::optional<ScoreTag> all;
    ScoreTag near_kind = ScoreTag::Mcm;
    ScoreTag far_kind = ScoreTag::DEnergy;
    double temperature = 1.0;
};

/// id_train embeddings and labels from the manifest, plus optional outliers
/// (label -1 entries get random OOD rows).
TrainData load_train_data(const Manifest& m, const std::optional<std::filesystem::path>& outliers);

std::vector<ScoredSample> score_manifest(const Manifest& m, const ContextBank& bank,
                                         const ScoreRecipe& recipe);

/// Classification accuracy over id_test and every csid split, pooled.
double manifest_accuracy(const Manifest& m, const ContextBank& bank);

std::string scores_csv(std::span<const ScoredSample> scores);
std::vector<ScoredSample> parse_scores_csv(std::string_view text);

std::string trace_csv(std::span<const EpochRecord> trace);

/// Entry point behind the `lsa` binary. Returns the process exit code.
int cli_run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace lsa
