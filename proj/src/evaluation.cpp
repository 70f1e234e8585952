#include "lsa/evaluation.hpp"

#include "lsa/byte_io.hpp"
#include "lsa/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

namespace lsa {

namespace {

void require_nonempty(const ScorePair& p)
{
    if (p.id_scores.empty() || p.ood_scores.empty())
        throw Error(ErrorCode::EmptyScores, "detection metrics need ID and OOD scores");
}

std::string fmt(double v, const char* spec = "%.17g")
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

} // namespace

double fpr_at_tpr(const ScorePair& p, double tpr_target)
{
    require_nonempty(p);
    std::vector<double> id = p.id_scores;
    std::sort(id.begin(), id.end(), std::greater<>());
    const auto n = static_cast<double>(id.size());
    // Smallest k with k / n >= target; the k-th largest score is the threshold.
    std::size_t k = static_cast<std::size_t>(std::ceil(tpr_target * n));
    while (k > 1 && static_cast<double>(k - 1) / n >= tpr_target)
        --k;
    while (k < id.size() && static_cast<double>(k) / n < tpr_target)
        ++k;
    k = std::clamp<std::size_t>(k, 1, id.size());
    const double threshold = id[k - 1];
    const auto admitted = std::count_if(p.ood_scores.begin(), p.ood_scores.end(),
                                        [&](double s) { return s >= threshold; });
    return static_cast<double>(admitted) / static_cast<double>(p.ood_scores.size());
}

double auroc(const ScorePair& p)
{
    require_nonempty(p);
    std::vector<double> id = p.id_scores;
    std::vector<double> ood = p.ood_scores;
    std::sort(id.begin(), id.end());
    std::sort(ood.begin(), ood.end());
    // Counts stay integral (or half-integral), so the sum is exact in double.
    double wins = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < id.size();) {
        std::size_t i_end = i;
        while (i_end < id.size() && id[i_end] == id[i])
            ++i_end;
        while (j < ood.size() && ood[j] < id[i])
            ++j;
        std::size_t j_end = j;
        while (j_end < ood.size() && ood[j_end] == id[i])
            ++j_end;
        const auto group = static_cast<double>(i_end - i);
        wins += group * (static_cast<double>(j) + 0.5 * static_cast<double>(j_end - j));
        i = i_end;
    }
    return wins / (static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

double aupr(const ScorePair& p, PositiveClass positive)
{
    require_nonempty(p);
    struct Scored {
        double score;
        bool pos;
    };
    std::vector<Scored> all;
    all.reserve(p.id_scores.size() + p.ood_scores.size());
    const bool in = positive == PositiveClass::In;
    for (double s : p.id_scores)
        all.push_back({in ? s : -s, in});
    for (double s : p.ood_scores)
        all.push_back({in ? s : -s, !in});
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        return a.score > b.score;
    });

    const auto total_pos =
        static_cast<double>(in ? p.id_scores.size() : p.ood_scores.size());
    double tp = 0.0;
    double fp = 0.0;
    double area = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        double group_pos = 0.0;
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) {
            if (all[j].pos)
                group_pos += 1.0;
            else
                fp += 1.0;
            ++j;
        }
        tp += group_pos;
        if (group_pos > 0.0)
            area += (tp / (tp + fp)) * (group_pos / total_pos);
        i = j;
    }
    return area;
}

double accuracy(std::span<const Vector> embeddings, std::span<const int> labels,
                const ContextBank& bank)
{
    if (embeddings.size() != labels.size())
        throw Error(ErrorCode::DimensionMismatch, "embedding and label counts differ");
    if (embeddings.empty())
        throw Error(ErrorCode::EmptyInput, "accuracy over zero samples");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= bank.num_classes())
            throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(labels[i]) +
                                                        " at sample " + std::to_string(i));
        if (classify(embeddings[i], bank) == static_cast<std::size_t>(labels[i]))
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(embeddings.size());
}

SplitGroup group_of(std::string_view split)
{
    if (split == "id_test")
        return SplitGroup::Id;
    if (split == "id_train")
        return SplitGroup::Train;
    if (split.starts_with("csid:"))
        return SplitGroup::CsId;
    if (split.starts_with("near_ood:"))
        return SplitGroup::NearOod;
    if (split.starts_with("far_ood:"))
        return SplitGroup::FarOod;
    return SplitGroup::Unknown;
}

std::string_view to_string(SplitGroup g)
{
    switch (g) {
    case SplitGroup::Id: return "id";
    case SplitGroup::CsId: return "csid";
    case SplitGroup::NearOod: return "near_ood";
    case SplitGroup::FarOod: return "far_ood";
    case SplitGroup::Train: return "train";
    case SplitGroup::Unknown: break;
    }
    return "unknown";
}

GroupMean EvalReport::mean_of(SplitGroup g) const
{
    GroupMean m;
    for (const auto& d : datasets) {
        if (d.group != g)
            continue;
        m.fpr_at_95 += d.fpr_at_95;
        m.auroc += d.auroc;
        m.aupr_in += d.aupr_in;
        m.aupr_out += d.aupr_out;
        ++m.count;
    }
    if (m.count > 0) {
        const double inv = 1.0 / static_cast<double>(m.count);
        m.fpr_at_95 *= inv;
        m.auroc *= inv;
        m.aupr_in *= inv;
        m.aupr_out *= inv;
    }
    return m;
}

DatasetMetrics compute_metrics(const ScorePair& p)
{
    DatasetMetrics m;
    m.fpr_at_95 = fpr_at_tpr(p, 0.95);
    m.auroc = auroc(p);
    m.aupr_in = aupr(p, PositiveClass::In);
    m.aupr_out = aupr(p, PositiveClass::Out);
    return m;
}

EvalReport evaluate_scores(std::span<const ScoredSample> scores, double accuracy_value)
{
    // (kind) -> positive scores; (split, kind) -> negative scores. Ordered maps
    // keep the report order deterministic.
    std::map<ScoreTag, std::vector<double>> positives;
    std::map<std::pair<std::string, ScoreTag>, std::vector<double>> negatives;
    for (const auto& s : scores) {
        const SplitGroup g = group_of(s.split);
        if (g == SplitGroup::Id || g == SplitGroup::CsId)
            positives[s.kind].push_back(s.score);
        else if (g == SplitGroup::NearOod || g == SplitGroup::FarOod)
            negatives[{s.split, s.kind}].push_back(s.score);
    }

    EvalReport report;
    report.accuracy = accuracy_value;
    for (auto& [key, neg] : negatives) {
        auto pos = positives.find(key.second);
        if (pos == positives.end())
            throw Error(ErrorCode::EmptyScores, "no ID scores of kind " +
                                                    std::string(to_string(key.second)) + " for " +
                                                    key.first);
        DatasetMetrics m = compute_metrics({pos->second, neg});
        m.name = key.first;
        m.group = group_of(key.first);
        m.kind = key.second;
        report.datasets.push_back(std::move(m));
    }
    std::stable_sort(report.datasets.begin(), report.datasets.end(),
                     [](const DatasetMetrics& a, const DatasetMetrics& b) {
                         return static_cast<int>(a.group) < static_cast<int>(b.group);
                     });
    return report;
}

std::string report_csv(const EvalReport& r)
{
    std::ostringstream out;
    out << "dataset,group,kind,fpr_at_95,auroc,aupr_in,aupr_out\n";
    for (const auto& d : r.datasets)
        out << d.name << ',' << to_string(d.group) << ',' << to_string(d.kind) << ','
            << fmt(d.fpr_at_95) << ',' << fmt(d.auroc) << ',' << fmt(d.aupr_in) << ','
            << fmt(d.aupr_out) << '\n';
    for (auto g : {SplitGroup::NearOod, SplitGroup::FarOod}) {
        const GroupMean m = r.mean_of(g);
        if (m.count == 0)
            continue;
        out << "mean:" << to_string(g) << ',' << to_string(g) << ",mean," << fmt(m.fpr_at_95)
            << ',' << fmt(m.auroc) << ',' << fmt(m.aupr_in) << ',' << fmt(m.aupr_out) << '\n';
    }
    out << "accuracy,id+csid,classify," << fmt(r.accuracy) << ",,,\n";
    return out.str();
}

EvalReport parse_report_csv(std::string_view text)
{
    EvalReport r;
    std::istringstream in{std::string(text)};
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            f.push_back(cell);
        while (f.size() < 7)
            f.emplace_back();
        try {
            if (f[0] == "accuracy") {
                r.accuracy = std::stod(f[3]);
                continue;
            }
            if (f[0].starts_with("mean:"))
                continue;
            DatasetMetrics d;
            d.name = f[0];
            d.group = group_of(f[0]);
            d.kind = parse_score_tag(f[2]);
            d.fpr_at_95 = std::stod(f[3]);
            d.auroc = std::stod(f[4]);
            d.aupr_in = std::stod(f[5]);
            d.aupr_out = std::stod(f[6]);
            r.datasets.push_back(std::move(d));
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::ConfigInvalid, "malformed report line: " + line);
        }
    }
    return r;
}

std::string report_table(const EvalReport& r)
{
    auto pct = [](double v) { return fmt(100.0 * v, "%8.2f"); };
    std::ostringstream out;
    const GroupMean near = r.mean_of(SplitGroup::NearOod);
    const GroupMean far = r.mean_of(SplitGroup::FarOod);
    out << "              |          Near-OOD           |           Far-OOD           |\n";
    out << "              |  FPR@95    AUROC  AUPR-IN   |  FPR@95    AUROC  AUPR-IN   |     ACC\n";
    out << "mean          |" << pct(near.fpr_at_95) << ' ' << pct(near.auroc) << ' '
        << pct(near.aupr_in) << "   |" << pct(far.fpr_at_95) << ' ' << pct(far.auroc) << ' '
        << pct(far.aupr_in) << "   |" << pct(r.accuracy) << "\n\n";

    out << "dataset                          kind           FPR@95    AUROC  AUPR-IN AUPR-OUT\n";
    for (const auto& d : r.datasets) {
        char name[40];
        char kind[16];
        std::snprintf(name, sizeof name, "%-32s", d.name.c_str());
        std::snprintf(kind, sizeof kind, "%-12s", std::string(to_string(d.kind)).c_str());
        out << name << ' ' << kind << ' ' << pct(d.fpr_at_95) << ' ' << pct(d.auroc) << ' '
            << pct(d.aupr_in) << ' ' << pct(d.aupr_out) << '\n';
    }
    return out.str();
}

std::string histogram_csv(std::span<const ScoredSample> scores, std::size_t bins)
{
    if (bins < 2)
        throw Error(ErrorCode::ConfigInvalid, "histogram needs at least 2 bins");
    double lo = 0.0;
    double hi = 1.0;
    if (!scores.empty()) {
        const auto [mn, mx] = std::minmax_element(
            scores.begin(), scores.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });
        lo = mn->score;
        hi = mx->score;
    }
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(bins);

    constexpr SplitGroup columns[] = {SplitGroup::Id, SplitGroup::CsId, SplitGroup::NearOod,
                                      SplitGroup::FarOod};
    std::vector<std::array<std::size_t, 4>> counts(bins, {0, 0, 0, 0});
    for (const auto& s : scores) {
        const SplitGroup g = group_of(s.split);
        const auto col = std::find(std::begin(columns), std::end(columns), g) - std::begin(columns);
        if (col == 4)
            continue;
        auto b = static_cast<std::size_t>(std::floor((s.score - lo) / width));
        b = std::min(b, bins - 1);
        ++counts[b][static_cast<std::size_t>(col)];
    }

    std::ostringstream out;
    out << "bin,lower,upper,id,csid,near_ood,far_ood\n";
    for (std::size_t b = 0; b < bins; ++b) {
        const double lower = lo + width * static_cast<double>(b);
        const double upper = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
        out << b << ',' << fmt(lower) << ',' << fmt(upper);
        for (std::size_t c : counts[b])
            out << ',' << c;
        out << '\n';
    }
    return out.str();
}

void export_histograms(std::span<const ScoredSample> scores, std::size_t bins,
                       const std::filesystem::path& path)
{
    write_file_text(path, histogram_csv(scores, bins));
}

} // namespace lsa
