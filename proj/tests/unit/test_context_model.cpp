#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lsa/byte_io.hpp"
#include "lsa/context_model.hpp"
#include "lsa/error.hpp"
#include "support/fixtures.hpp"

#include <cmath>
#include <filesystem>

using namespace lsa;
using lsa::testing::random_bank;
using lsa::testing::random_vector;

namespace {

ContextBank hand_bank(std::vector<Vector> id, std::vector<Vector> ood, double tau)
{
    ContextBank b;
    b.id_context = Matrix::from_rows(id);
    b.ood_context = ood.empty() ? Matrix(0, id.front().size()) : Matrix::from_rows(ood);
    b.temperature = tau;
    return b;
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

} // namespace

TEST_CASE("similarities")
{
    Rng rng(1);
    const ContextBank bank = random_bank(3, 2, 5, 0.01, rng);
    const auto row = bank.id_context.row(1);
    const auto s = similarities(Vector(row.begin(), row.end()), bank);
    REQUIRE(s.size() == 5);
    CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-15));

    const ContextBank axes = hand_bank({{1.0, 0.0, 0.0}}, {{0.0, 1.0, 0.0}}, 1.0);
    const auto zero = similarities(Vector{0.0, 0.0, 4.0}, axes);
    CHECK(zero == Vector{0.0, 0.0});

    const ContextBank tiny = hand_bank({{1.0, 0.0}}, {{0.0, 1.0}}, 1.0);
    CHECK(similarities(Vector{1.0, 0.0}, tiny) == Vector{1.0, 0.0});

    const Vector v = random_vector(5, rng);
    const auto all = similarities(v, bank);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(all[k] == doctest::Approx(cosine(v, bank.id_context.row(k))).epsilon(1e-15));
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(all[3 + k] == doctest::Approx(cosine(v, bank.ood_context.row(k))).epsilon(1e-15));

    CHECK(code_of([&] { similarities(Vector(5, 0.0), bank); }) == ErrorCode::ZeroVector);
    CHECK(code_of([&] { similarities(Vector(4, 1.0), bank); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("predict_probs")
{
    const ContextBank sym = hand_bank({{1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}}, {{0.0, 1.0, 0.0}}, 0.01);
    for (double p : predict_probs(Vector{0.0, 0.0, 1.0}, sym))
        CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    const ContextBank two = hand_bank({{1.0, 0.0}}, {{0.0, 1.0}}, 1.0);
    const auto p = predict_probs(Vector{1.0, 0.0}, two);
    CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));

    ContextBank sharp = two;
    sharp.temperature = 0.01;
    CHECK(predict_probs(Vector{1.0, 0.0}, sharp)[0] > 1.0 - 1e-10);

    Rng rng(2);
    ContextBank bank = random_bank(4, 3, 6, 0.1, rng);
    const Vector v = random_vector(6, rng);
    const auto base = predict_probs(v, bank);
    double sum = 0.0;
    for (double q : base)
        sum += q;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (double& x : bank.id_context.row(2))
        x *= 7.5;
    for (double& x : bank.ood_context.row(0))
        x *= 0.01;
    Vector scaled = v;
    for (double& x : scaled)
        x *= 3.0;
    const auto after = predict_probs(scaled, bank);
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(after[i] == doctest::Approx(base[i]).epsilon(1e-10));
}

TEST_CASE("ood_probs")
{
    const ContextBank eq = hand_bank({{1.0, 0.0, 0.0}}, {{0.0, 1.0, 0.0}, {0.0, -1.0, 0.0}}, 0.01);
    for (double p : ood_probs(Vector{1.0, 0.0, 0.0}, eq))
        CHECK(p == doctest::Approx(0.5).epsilon(1e-15));

    ContextBank two = hand_bank({{0.0, 0.0, 1.0}}, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}, 1.0);
    const auto p = ood_probs(Vector{1.0, 0.0, 0.0}, two);
    CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));

    for (double& x : two.id_context.flat())
        x = -x + 0.3;
    CHECK(ood_probs(Vector{1.0, 0.0, 0.0}, two) == p);

    const ContextBank none = hand_bank({{1.0, 0.0}}, {}, 0.01);
    CHECK(code_of([&] { ood_probs(Vector{1.0, 0.0}, none); }) == ErrorCode::NoOodContext);
}

TEST_CASE("classify")
{
    Rng rng(3);
    const ContextBank bank = random_bank(5, 2, 8, 0.01, rng);
    const auto r3 = bank.id_context.row(3);
    Vector v(r3.begin(), r3.end());
    CHECK(classify(v, bank) == 3);
    for (int t = 0; t < 20; ++t) {
        const Vector x = random_vector(8, rng);
        Vector sx = x;
        for (double& e : sx)
            e *= 0.25;
        CHECK(classify(x, bank) == classify(sx, bank));
        const auto s = similarities(x, bank);
        CHECK(classify(x, bank) ==
              static_cast<std::size_t>(std::max_element(s.begin(), s.begin() + 5) - s.begin()));
    }

    const double c0 = 0.2;
    const double c1 = 0.9;
    const ContextBank hand =
        hand_bank({{c0, std::sqrt(1 - c0 * c0)}, {c1, std::sqrt(1 - c1 * c1)}}, {}, 0.01);
    CHECK(classify(Vector{1.0, 0.0}, hand) == 1);

    const ContextBank tie = hand_bank({{1.0, 1.0}, {1.0, 1.0}}, {}, 0.01);
    CHECK(classify(Vector{1.0, 0.0}, tie) == 0);
}

TEST_CASE("init_context_bank")
{
    Rng rng(4);
    const std::vector<Vector> means{{3.0, 0.0, 0.0}, {0.0, -2.0, 0.0}};
    const ContextBank warm = init_context_bank(means, 4, 0.01, true, rng);
    CHECK(warm.num_classes() == 2);
    CHECK(warm.num_ood() == 4);
    CHECK(warm.dim() == 3);
    CHECK(warm.temperature == 0.01);
    CHECK(warm.id_context.row(0)[0] == doctest::Approx(1.0));
    CHECK(warm.id_context.row(1)[1] == doctest::Approx(-1.0));
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(norm(warm.ood_context.row(k)) == doctest::Approx(1.0).epsilon(1e-14));

    const ContextBank cold = init_context_bank(means, 0, 0.01, false, rng);
    CHECK(cold.num_ood() == 0);
    for (std::size_t k = 0; k < 2; ++k)
        CHECK(norm(cold.id_context.row(k)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::fabs(cold.id_context.row(0)[0]) < 1.0 - 1e-9);

    Rng a(5);
    Rng b(5);
    CHECK(init_context_bank(means, 3, 0.01, true, a) == init_context_bank(means, 3, 0.01, true, b));
}

TEST_CASE("model file round trip")
{
    Rng rng(6);
    const ContextBank bank = random_bank(3, 2, 4, 0.0125, rng);
    const auto bytes = encode_bank(bank);
    CHECK(bytes.size() == 4 + 12 + 8 + 8 * (3 + 2) * 4);
    CHECK(std::string(bytes.data(), 4) == "LSA1");
    CHECK(decode_bank(bytes) == bank);

    const ContextBank empty_ood = random_bank(2, 0, 3, 0.01, rng);
    CHECK(decode_bank(encode_bank(empty_ood)) == empty_ood);

    const auto dir = std::filesystem::temp_directory_path() / "lsa_test_context_model";
    std::filesystem::create_directories(dir);
    save_bank(bank, dir / "m.lsa");
    CHECK(load_bank(dir / "m.lsa") == bank);
    CHECK(read_file_bytes(dir / "m.lsa") == bytes);
    std::filesystem::remove_all(dir);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK(code_of([&] { decode_bank(bad); }) == ErrorCode::BadMagic);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK(code_of([&] { decode_bank(cut); }) == ErrorCode::TruncatedFile);
    auto extra = bytes;
    extra.push_back('\0');
    CHECK(code_of([&] { decode_bank(extra); }) == ErrorCode::TruncatedFile);
}
