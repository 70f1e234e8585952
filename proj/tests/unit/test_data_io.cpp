#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lsa/byte_io.hpp"
#include "lsa/emb_io.hpp"
#include "lsa/error.hpp"
#include "lsa/gaussian_bank.hpp"
#include "lsa/manifest.hpp"
#include "lsa/synth.hpp"
#include "support/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

using namespace lsa;
namespace fs = std::filesystem;

namespace {

EmbDataset random_dataset(std::size_t n, std::size_t d, std::size_t locals, Precision p, Rng& rng)
{
    EmbDataset ds;
    ds.dim = d;
    ds.precision = p;
    ds.locals_per_sample = locals;
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels.push_back(static_cast<int>(rng.uniform_index(5)) - 1);
        ds.globals.push_back(lsa::testing::random_vector(d, rng));
        if (locals)
            ds.locals.push_back(lsa::testing::random_vectors(locals, d, rng));
    }
    return ds;
}

Error error_of(auto&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e;
    }
    FAIL("no error raised");
    return Error(ErrorCode::ConfigInvalid, "");
}

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name)
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

double dist(const Vector& a, const Vector& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

TEST_CASE("byte reader and writer")
{
    ByteWriter w;
    w.bytes("AB");
    w.uint<std::uint16_t>(0x0102);
    w.i32(-2);
    w.f64(0.1);
    const auto& b = w.buffer();
    REQUIRE(b.size() == 2 + 2 + 4 + 8);
    CHECK(b[2] == 0x02);
    CHECK(b[3] == 0x01);
    ByteReader r(b);
    CHECK(r.bytes(2) == "AB");
    CHECK(r.uint<std::uint16_t>() == 0x0102);
    CHECK(r.i32() == -2);
    CHECK(r.f64() == 0.1);
    const Error e = error_of([&] { r.f32(); });
    CHECK(e.code() == ErrorCode::TruncatedFile);
    CHECK(e.byte_offset() == 16);
}

TEST_CASE("EMB1 round trip at both precisions")
{
    Rng rng(1);
    const auto ds = random_dataset(25, 7, 0, Precision::F64, rng);
    const auto bytes = encode_emb(ds);
    CHECK(bytes.size() == kEmbHeaderBytes + 25 * (4 + 7 * 8));
    const auto back = decode_emb(bytes);
    CHECK(back.dim == 7);
    CHECK(back.labels == ds.labels);
    CHECK(back.globals == ds.globals);
    CHECK(encode_emb(back) == bytes);

    const auto loc = random_dataset(6, 3, 4, Precision::F64, rng);
    const auto loc_back = decode_emb(encode_emb(loc));
    CHECK(loc_back.locals == loc.locals);
    CHECK(loc_back.locals_per_sample == 4);

    auto narrow = random_dataset(30, 5, 2, Precision::F32, rng);
    const auto widened = decode_emb(encode_emb(narrow));
    for (std::size_t i = 0; i < narrow.size(); ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const double orig = narrow.globals[i][j];
            const double ulp = std::fabs(static_cast<double>(
                std::nextafter(static_cast<float>(orig), std::numeric_limits<float>::infinity()) -
                static_cast<float>(orig)));
            CHECK(std::fabs(widened.globals[i][j] - orig) <= ulp);
        }
    CHECK(encode_emb(decode_emb(encode_emb(widened))) == encode_emb(widened));

    EmbDataset empty;
    empty.dim = 3;
    CHECK(decode_emb(encode_emb(empty)).size() == 0);
}

TEST_CASE("EMB1 files are byte-identical on re-write")
{
    TempDir dir("lsa_test_emb_files");
    Rng rng(2);
    const auto ds = random_dataset(40, 4, 1, Precision::F64, rng);
    write_emb(dir.path / "a.emb", ds);
    write_emb(dir.path / "b.emb", read_emb(dir.path / "a.emb"));
    CHECK(read_file_bytes(dir.path / "a.emb") == read_file_bytes(dir.path / "b.emb"));
    CHECK(!fs::exists(dir.path / "a.emb.partial"));
    CHECK(error_of([&] { read_emb(dir.path / "missing.emb"); }).code() == ErrorCode::IoError);
}

TEST_CASE("EMB1 corruption is detected")
{
    Rng rng(3);
    const auto bytes = encode_emb(random_dataset(5, 3, 0, Precision::F64, rng));

    auto bad_magic = bytes;
    bad_magic[1] = 'X';
    const Error m = error_of([&] { decode_emb(bad_magic); });
    CHECK(m.code() == ErrorCode::BadMagic);
    CHECK(m.byte_offset() == 0);

    auto bad_version = bytes;
    bad_version[4] = 2;
    CHECK(error_of([&] { decode_emb(bad_version); }).code() == ErrorCode::BadMagic);

    auto bad_precision = bytes;
    bad_precision[18] = 2;
    CHECK(error_of([&] { decode_emb(bad_precision); }).code() == ErrorCode::BadMagic);

    auto cut = bytes;
    cut.resize(bytes.size() - 5);
    const Error t = error_of([&] { decode_emb(cut); });
    CHECK(t.code() == ErrorCode::TruncatedFile);
    REQUIRE(t.byte_offset().has_value());
    CHECK(*t.byte_offset() == kEmbHeaderBytes + 4 * (4 + 24) + 4 + 16);
    CHECK(std::string(t.what()).find("byte offset") != std::string::npos);

    const std::vector<char> header_only(bytes.begin(), bytes.begin() + 10);
    CHECK(error_of([&] { decode_emb(header_only); }).code() == ErrorCode::TruncatedFile);

    auto extra = bytes;
    extra.push_back('\0');
    CHECK(error_of([&] { decode_emb(extra); }).code() == ErrorCode::DimensionMismatch);

    EmbDataset ragged;
    ragged.dim = 3;
    ragged.labels = {0, 1};
    ragged.globals = {{1.0, 2.0, 3.0}, {1.0, 2.0}};
    CHECK(error_of([&] { encode_emb(ragged); }).code() == ErrorCode::DimensionMismatch);
}

TEST_CASE("manifest parsing")
{
    const std::string text =
        "# world\n"
        "id_train = train.emb\n"
        "id_test=test.emb   # comment\n"
        "\n"
        "csid:shifted = /abs/cs.emb\n"
        "near_ood:a = n.emb\n"
        "far_ood:b = f.emb\n";
    const Manifest m = parse_manifest(text, "/data");
    REQUIRE(m.entries.size() == 5);
    CHECK(m.find("id_test")->path == "test.emb");
    CHECK(m.resolve(*m.find("id_train")) == fs::path("/data/train.emb"));
    CHECK(m.resolve(*m.find("csid:shifted")) == fs::path("/abs/cs.emb"));
    CHECK(m.with_prefix("near_ood:").size() == 1);
    CHECK(parse_manifest(format_manifest(m), "/data").entries.size() == 5);

    CHECK(valid_role("csid:x"));
    CHECK(!valid_role("csid:"));
    CHECK(!valid_role("ood:x"));

    auto code = [](const std::string& t) {
        return error_of([&] { parse_manifest(t, "."); }).code();
    };
    CHECK(code("id_test = a.emb\n") == ErrorCode::ConfigInvalid);
    CHECK(code("id_train = a\nid_train = b\n") == ErrorCode::ConfigInvalid);
    CHECK(code("id_train a.emb\n") == ErrorCode::ConfigInvalid);
    CHECK(code("id_train = a\nbogus = b\n") == ErrorCode::ConfigInvalid);
    CHECK(code("id_train =\n") == ErrorCode::ConfigInvalid);
}

TEST_CASE("synth world structure")
{
    const SynthWorld w = synth_world({});
    REQUIRE(w.splits.size() == 5);
    CHECK(w.splits[0].first == "id_train");
    CHECK(w.split("id_train").size() == 8 * 500);
    CHECK(w.split("id_train").dim == 32);
    for (const auto& [role, ds] : w.splits) {
        const bool ood = role.starts_with("near_ood:") || role.starts_with("far_ood:");
        for (int y : ds.labels) {
            if (ood)
                CHECK(y == -1);
            else {
                CHECK(y >= 0);
                CHECK(y < 8);
            }
        }
    }
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(norm(w.id_means[c]) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(dist(w.csid_means[c], w.id_means[c]) <= w.config.csid_jitter + 1e-12);
    }

    auto nearest_id = [&](const Vector& m) {
        double best = 1e9;
        for (const auto& mu : w.id_means)
            best = std::min(best, dist(m, mu));
        return best;
    };
    double near = 0.0, far = 0.0;
    for (const auto& m : w.near_means)
        near += nearest_id(m) / static_cast<double>(w.near_means.size());
    for (const auto& m : w.far_means)
        far += nearest_id(m) / static_cast<double>(w.far_means.size());
    CHECK(near < far);
}

TEST_CASE("synth null shift reproduces the ID parameters")
{
    SynthConfig cfg;
    cfg.csid_cov_factor = 1.0;
    cfg.csid_jitter = 0.0;
    const SynthWorld w = synth_world(cfg);
    CHECK(w.csid_means == w.id_means);
}

TEST_CASE("synth is seeded")
{
    SynthConfig cfg;
    cfg.train_per_class = 40;
    const auto a = synth_world(cfg);
    const auto b = synth_world(cfg);
    for (std::size_t i = 0; i < a.splits.size(); ++i)
        CHECK(encode_emb(a.splits[i].second) == encode_emb(b.splits[i].second));
    cfg.seed = 8;
    const auto c = synth_world(cfg);
    CHECK(encode_emb(a.splits[0].second) != encode_emb(c.splits[0].second));

    SynthConfig bad;
    bad.classes = 0;
    CHECK(error_of([&] { synth_world(bad); }).code() == ErrorCode::ConfigInvalid);
    bad = {};
    bad.csid_cov_factor = 0.0;
    CHECK(error_of([&] { synth_world(bad); }).code() == ErrorCode::ConfigInvalid);
}

TEST_CASE("high-likelihood csID samples are compact around the ID mean")
{
    const SynthWorld w = synth_world({});
    const auto& train = w.split("id_train");
    const auto& csid = w.split("csid:shifted");
    for (std::size_t c = 0; c < w.config.classes; ++c) {
        EmbeddingQueue q;
        q.class_id = static_cast<int>(c);
        q.capacity = 500;
        for (std::size_t i = 0; i < train.size(); ++i)
            if (train.labels[i] == static_cast<int>(c))
                q.entries.push_back(train.globals[i]);
        const auto g = fit_class_gaussian(q);
        std::vector<std::pair<double, double>> scored; // (logpdf, distance to ID mean)
        double mean_dist = 0.0;
        for (std::size_t i = 0; i < csid.size(); ++i) {
            if (csid.labels[i] != static_cast<int>(c))
                continue;
            const double dd = dist(csid.globals[i], w.id_means[c]);
            scored.emplace_back(mvn_logpdf(csid.globals[i], g), dd);
            mean_dist += dd;
        }
        mean_dist /= static_cast<double>(scored.size());
        std::sort(scored.begin(), scored.end(), std::greater<>());
        const std::size_t top = scored.size() / 10;
        double top_dist = 0.0;
        for (std::size_t i = 0; i < top; ++i)
            top_dist += scored[i].second / static_cast<double>(top);
        CHECK(top_dist < mean_dist);
    }
}

TEST_CASE("write_world emits a readable manifest")
{
    TempDir dir("lsa_test_world");
    SynthConfig cfg;
    cfg.train_per_class = 20;
    cfg.locals_per_sample = 2;
    cfg.precision = Precision::F32;
    const SynthWorld w = synth_world(cfg);
    write_world(w, dir.path);
    const Manifest m = read_manifest(dir.path / "manifest.txt");
    REQUIRE(m.entries.size() == 5);
    for (const auto& e : m.entries) {
        const auto ds = read_emb(m.resolve(e));
        CHECK(ds.precision == Precision::F32);
        CHECK(ds.locals_per_sample == 2);
        CHECK(ds.globals == w.split(e.role).globals);
    }
    CHECK(m.find("near_ood:interleaved")->path == "near_ood_interleaved.emb");
}
