#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lsa/byte_io.hpp"
#include "lsa/error.hpp"
#include "lsa/evaluation.hpp"
#include "support/fixtures.hpp"
#include "support/metric_oracles.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

using namespace lsa;

namespace {

ScorePair pair_of(std::vector<double> id, std::vector<double> ood)
{
    return {std::move(id), std::move(ood)};
}

std::vector<double> replicate(std::vector<double> v, int times)
{
    std::vector<double> out;
    for (int i = 0; i < times; ++i)
        out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::vector<double> tied_scores(std::size_t n, Rng& rng)
{
    std::vector<double> v(n);
    for (double& x : v)
        x = static_cast<double>(rng.uniform_index(8)) * 0.25;
    return v;
}

ErrorCode code_of(auto&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::ConfigInvalid;
}

std::vector<ScoredSample> split_scores(const std::string& split, const std::vector<double>& s,
                                       ScoreTag kind = ScoreTag::Mcm)
{
    std::vector<ScoredSample> out;
    for (std::size_t i = 0; i < s.size(); ++i)
        out.push_back({i, split, kind, s[i]});
    return out;
}

} // namespace

TEST_CASE("fpr_at_tpr")
{
    CHECK(fpr_at_tpr(pair_of({5, 6, 7}, {1, 2, 3})) == 0.0);

    const auto id = replicate({3, 2, 1, 0}, 25);
    const std::vector<double> ood(100, 1.5);
    const double v = fpr_at_tpr(pair_of(id, ood), 0.75);
    CHECK(v == lsa::testing::brute_fpr_at_tpr(id, ood, 0.75));
    CHECK(v == 1.0);
    CHECK(fpr_at_tpr(pair_of(id, ood), 0.5) == 0.0);

    Rng rng(1);
    std::vector<double> a(20000), b(20000);
    for (double& x : a)
        x = rng.normal();
    for (double& x : b)
        x = rng.normal();
    const double cal = fpr_at_tpr(pair_of(a, b));
    CHECK(cal >= 0.93);
    CHECK(cal <= 0.97);

    for (int t = 0; t < 50; ++t) {
        const auto x = tied_scores(1 + rng.uniform_index(60), rng);
        const auto y = tied_scores(1 + rng.uniform_index(60), rng);
        double last = 2.0;
        for (double target : {0.99, 0.95, 0.8, 0.5, 0.2}) {
            const double f = fpr_at_tpr(pair_of(x, y), target);
            CHECK(f == lsa::testing::brute_fpr_at_tpr(x, y, target));
            CHECK(f <= last);
            last = f;
        }
    }
    CHECK(code_of([] { fpr_at_tpr(pair_of({}, {1.0})); }) == ErrorCode::EmptyScores);
}

TEST_CASE("auroc")
{
    CHECK(auroc(pair_of({5, 6}, {1, 2, 3})) == 1.0);
    CHECK(auroc(pair_of({1, 2, 2, 3}, {3, 2, 1, 2})) == 0.5);
    CHECK(auroc(pair_of({0.9, 0.4}, {0.5})) == 0.5);
    CHECK(code_of([] { auroc(pair_of({1.0}, {})); }) == ErrorCode::EmptyScores);

    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto x = tied_scores(1 + rng.uniform_index(200), rng);
        const auto y = tied_scores(1 + rng.uniform_index(200), rng);
        const double fast = auroc(pair_of(x, y));
        CHECK(std::fabs(fast - lsa::testing::brute_auroc(x, y)) < 1e-12);
        std::vector<double> nx, ny;
        for (double s : x)
            nx.push_back(-s);
        for (double s : y)
            ny.push_back(-s);
        CHECK(std::fabs(fast + auroc(pair_of(y, x)) - 1.0) < 1e-12);
        CHECK(std::fabs(fast + auroc(pair_of(nx, ny)) - 1.0) < 1e-12);
        CHECK(std::fabs(fast - auroc(pair_of(ny, nx))) < 1e-12);
    }
}

TEST_CASE("aupr")
{
    CHECK(aupr(pair_of({5, 6}, {1, 2, 3}), PositiveClass::In) == 1.0);
    CHECK(aupr(pair_of({5, 6}, {1, 2, 3}), PositiveClass::Out) == 1.0);

    // Ranked: P N P N P. Precision at each positive: 1, 2/3, 3/5.
    const double hand = aupr(pair_of({5, 3, 1}, {4, 2}), PositiveClass::In);
    CHECK(hand == doctest::Approx((1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0).epsilon(1e-15));
    // Out: negated, OOD positive. Ranked by -score: 1(N) 2(P) 3(N) 4(P) 5(N).
    const double out = aupr(pair_of({5, 3, 1}, {4, 2}), PositiveClass::Out);
    CHECK(out == doctest::Approx((1.0 / 2.0 + 2.0 / 4.0) / 2.0).epsilon(1e-15));
    // A tie group counts as one threshold.
    CHECK(aupr(pair_of({1, 1}, {1, 0}), PositiveClass::In) == doctest::Approx(2.0 / 3.0));

    Rng rng(3);
    std::vector<double> id, ood;
    for (int i = 0; i < 20000; ++i)
        (rng.uniform() < 0.3 ? id : ood).push_back(rng.uniform());
    const double prevalence = static_cast<double>(id.size()) / 20000.0;
    CHECK(std::fabs(aupr(pair_of(id, ood), PositiveClass::In) - prevalence) < 0.02);

    for (int t = 0; t < 100; ++t) {
        const auto x = tied_scores(1 + rng.uniform_index(40), rng);
        const auto y = tied_scores(1 + rng.uniform_index(40), rng);
        CHECK(std::fabs(aupr(pair_of(x, y), PositiveClass::In) -
                        lsa::testing::brute_average_precision(x, y)) < 1e-12);
        std::vector<double> nx, ny;
        for (double s : x)
            nx.push_back(-s);
        for (double s : y)
            ny.push_back(-s);
        CHECK(std::fabs(aupr(pair_of(x, y), PositiveClass::Out) -
                        lsa::testing::brute_average_precision(ny, nx)) < 1e-12);
    }
}

TEST_CASE("metrics are rank invariant")
{
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        const auto x = tied_scores(50, rng);
        const auto y = tied_scores(70, rng);
        std::vector<double> tx, ty;
        for (double s : x)
            tx.push_back(std::exp(3.0 * s) - 2.0);
        for (double s : y)
            ty.push_back(std::exp(3.0 * s) - 2.0);
        const auto a = compute_metrics(pair_of(x, y));
        const auto b = compute_metrics(pair_of(tx, ty));
        CHECK(a.fpr_at_95 == b.fpr_at_95);
        CHECK(a.auroc == b.auroc);
        CHECK(a.aupr_in == b.aupr_in);
        CHECK(a.aupr_out == b.aupr_out);
    }
}

TEST_CASE("accuracy")
{
    ContextBank bank;
    bank.id_context = Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    bank.ood_context = Matrix(0, 2);
    const std::vector<Vector> xs{{1.0, 0.0}, {0.0, 1.0}, {2.0, 0.1}, {0.1, 3.0}};
    CHECK(accuracy(xs, std::vector<int>{0, 1, 0, 1}, bank) == 1.0);
    CHECK(accuracy(xs, std::vector<int>{0, 1, 1, 1}, bank) == 0.75);
    const std::vector<Vector> perm{xs[3], xs[1], xs[0], xs[2]};
    CHECK(accuracy(perm, std::vector<int>{1, 1, 0, 1}, bank) == 0.75);
    CHECK(code_of([&] { accuracy(xs, std::vector<int>{0, 1, 2, 0}, bank); }) ==
          ErrorCode::LabelOutOfRange);
    CHECK(code_of([&] { accuracy(xs, std::vector<int>{0, -1, 0, 0}, bank); }) ==
          ErrorCode::LabelOutOfRange);
}

TEST_CASE("split groups")
{
    CHECK(group_of("id_test") == SplitGroup::Id);
    CHECK(group_of("csid:x") == SplitGroup::CsId);
    CHECK(group_of("near_ood:a") == SplitGroup::NearOod);
    CHECK(group_of("far_ood:b") == SplitGroup::FarOod);
    CHECK(group_of("id_train") == SplitGroup::Train);
    CHECK(group_of("other") == SplitGroup::Unknown);
}

TEST_CASE("evaluate_scores pools ID and csID as positives")
{
    std::vector<ScoredSample> all;
    for (auto& s : split_scores("id_test", {0.9, 0.8, 0.7}))
        all.push_back(s);
    for (auto& s : split_scores("csid:c", {0.6, 0.2}))
        all.push_back(s);
    for (auto& s : split_scores("near_ood:n", {0.5, 0.75}))
        all.push_back(s);
    for (auto& s : split_scores("far_ood:f", {0.1, 0.0}))
        all.push_back(s);
    for (auto& s : split_scores("far_ood:g", {0.95}))
        all.push_back(s);
    // Rows of another kind are compared only against that kind.
    for (auto& s : split_scores("id_test", {-5.0, -5.0, -5.0}, ScoreTag::DEnergy))
        all.push_back(s);

    const EvalReport r = evaluate_scores(all, 0.8);
    REQUIRE(r.datasets.size() == 3);
    const std::vector<double> positives{0.9, 0.8, 0.7, 0.6, 0.2};
    CHECK(r.datasets[0].name == "near_ood:n");
    CHECK(r.datasets[0].auroc == lsa::testing::brute_auroc(positives, {0.5, 0.75}));
    CHECK(r.datasets[1].name == "far_ood:f");
    CHECK(r.datasets[1].auroc == 1.0);
    CHECK(r.datasets[2].auroc == 0.0);
    CHECK(r.accuracy == 0.8);

    const GroupMean far = r.mean_of(SplitGroup::FarOod);
    CHECK(far.count == 2);
    CHECK(far.auroc == 0.5);
    for (const auto& d : r.datasets)
        for (double m : {d.fpr_at_95, d.auroc, d.aupr_in, d.aupr_out}) {
            CHECK(m >= 0.0);
            CHECK(m <= 1.0);
        }
}

TEST_CASE("report csv round trip and table")
{
    EvalReport r;
    r.datasets.push_back({"near_ood:n", SplitGroup::NearOod, ScoreTag::Mcm, 0.25, 0.8125, 0.7, 0.6});
    r.datasets.push_back({"far_ood:f", SplitGroup::FarOod, ScoreTag::DEnergy, 0.1, 0.95, 0.9, 1.0 / 3.0});
    r.accuracy = 0.875;
    const std::string csv = report_csv(r);
    CHECK(csv.rfind("dataset,group,kind,fpr_at_95,auroc,aupr_in,aupr_out\n", 0) == 0);
    const EvalReport back = parse_report_csv(csv);
    REQUIRE(back.datasets.size() == 2);
    CHECK(back.datasets[1].aupr_out == 1.0 / 3.0);
    CHECK(back.datasets[0].kind == ScoreTag::Mcm);
    CHECK(back.accuracy == 0.875);
    CHECK(report_csv(back) == csv);

    const std::string table = report_table(r);
    CHECK(table.find("Near-OOD") != std::string::npos);
    CHECK(table.find("Far-OOD") != std::string::npos);
    CHECK(table.find("81.25") != std::string::npos);
    CHECK(table.find("87.50") != std::string::npos);
}

TEST_CASE("histograms")
{
    std::vector<ScoredSample> s;
    for (auto& x : split_scores("id_test", {0.1, 0.5, 0.9, 0.95}))
        s.push_back(x);
    for (auto& x : split_scores("csid:c", {0.3}))
        s.push_back(x);
    for (auto& x : split_scores("near_ood:n", {0.2, 0.2}))
        s.push_back(x);
    for (auto& x : split_scores("far_ood:f", {0.0, 1.0, 0.4}))
        s.push_back(x);
    const std::string csv = histogram_csv(s, 5);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "bin,lower,upper,id,csid,near_ood,far_ood");
    std::array<int, 4> totals{};
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            f.push_back(cell);
        REQUIRE(f.size() == 7);
        for (int k = 0; k < 4; ++k)
            totals[k] += std::stoi(f[3 + k]);
        ++rows;
    }
    CHECK(rows == 5);
    CHECK(totals == std::array<int, 4>{4, 1, 2, 3});
    CHECK(histogram_csv(s, 5) == csv);

    const auto flat = split_scores("id_test", {0.3, 0.3, 0.3});
    std::istringstream fin(histogram_csv(flat, 4));
    std::getline(fin, line);
    int occupied = 0;
    while (std::getline(fin, line))
        occupied += line.find(",3,0,0,0") != std::string::npos;
    CHECK(occupied == 1);

    CHECK(code_of([&] { histogram_csv(s, 1); }) == ErrorCode::ConfigInvalid);

    const auto dir = std::filesystem::temp_directory_path() / "lsa_test_hist";
    std::filesystem::create_directories(dir);
    export_histograms(s, 5, dir / "h.csv");
    const auto bytes = read_file_bytes(dir / "h.csv");
    CHECK(std::string(bytes.begin(), bytes.end()) == csv);
    std::filesystem::remove_all(dir);
    CHECK(code_of([&] { export_histograms(s, 5, "/nonexistent_dir_lsa/h.csv"); }) ==
          ErrorCode::IoError);
}
