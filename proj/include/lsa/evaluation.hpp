#pragma once

#include "lsa/context_model.hpp"
#include "lsa/scoring.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lsa {

/// ID-side scores (ID test and csID pooled, the positive class) against one
/// OOD dataset's scores.
struct ScorePair {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
};

/// threshold t = largest value with fraction(id >= t) >= tpr_target;
/// returns fraction(ood >= t).
double fpr_at_tpr(const ScorePair& p, double tpr_target = 0.95);

/// P(id > ood) + P(id = ood) / 2, by sorting and tie grouping.
double auroc(const ScorePair& p);

enum class PositiveClass { In, Out };

/// Step-wise area under precision-recall (average precision). Out treats
/// OOD as positive with scores negated. Equal scores form one threshold.
double aupr(const ScorePair& p, PositiveClass positive);

/// Fraction of samples whose argmax ID cosine equals the label.
double accuracy(std::span<const Vector> embeddings, std::span<const int> labels,
                const ContextBank& bank);

enum class SplitGroup { Id, CsId, NearOod, FarOod, Train, Unknown };

/// id_test -> Id, csid:* -> CsId, near_ood:* -> NearOod, far_ood:* -> FarOod.
SplitGroup group_of(std::string_view split);
std::string_view to_string(SplitGroup g);

struct DatasetMetrics {
    std::string name; // the split role, e.g. "near_ood:interleaved"
    SplitGroup group = SplitGroup::NearOod;
    ScoreTag kind = ScoreTag::DEnergy;
    double fpr_at_95 = 0.0;
    double auroc = 0.0;
    double aupr_in = 0.0;
    double aupr_out = 0.0;
};

struct GroupMean {
    double fpr_at_95 = 0.0;
    double auroc = 0.0;
    double aupr_in = 0.0;
    double aupr_out = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    std::vector<DatasetMetrics> datasets;
    double accuracy = 0.0;

    GroupMean mean_of(SplitGroup g) const;
};

/// Builds the report from a score table. Each OOD split is compared with the
/// ID and csID rows scored under the same kind.
EvalReport evaluate_scores(std::span<const ScoredSample> scores, double accuracy_value);

DatasetMetrics compute_metrics(const ScorePair& p);

std::string report_csv(const EvalReport& r);
EvalReport parse_report_csv(std::string_view text);
/// Aligned text table with Near-OOD and Far-OOD column groups (percentages).
std::string report_table(const EvalReport& r);

/// Histogram of scores per split group: a bin column, edges, then counts
/// for id, csid, near_ood, far_ood. Throws ConfigInvalid for bins < 2.
std::string histogram_csv(std::span<const ScoredSample> scores, std::size_t bins);
void export_histograms(std::span<const ScoredSample> scores, std::size_t bins,
                       const std::filesystem::path& path);

} // namespace lsa
