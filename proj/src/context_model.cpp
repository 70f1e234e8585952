#include "lsa/context_model.hpp"

#include "lsa/byte_io.hpp"
#include "lsa/error.hpp"

#include <algorithm>
#include <cmath>

namespace lsa {

namespace {

constexpr std::string_view kModelMagic = "LSA1";

void normalize(std::span<double> v)
{
    const double n = norm(v);
    if (n == 0.0)
        throw Error(ErrorCode::ZeroVector, "cannot normalize a zero context row");
    for (double& x : v)
        x /= n;
}

void random_unit_row(std::span<double> row, Rng& rng)
{
    do {
        for (double& x : row)
            x = rng.normal();
    } while (norm(row) == 0.0);
    normalize(row);
}

Vector cosines_against(std::span<const double> v, const Matrix& rows)
{
    if (v.size() != rows.cols())
        throw Error(ErrorCode::DimensionMismatch, "embedding has dimension " +
                                                      std::to_string(v.size()) + ", model " +
                                                      std::to_string(rows.cols()));
    Vector out(rows.rows());
    for (std::size_t k = 0; k < rows.rows(); ++k)
        out[k] = cosine(v, rows.row(k));
    return out;
}

} // namespace

ContextBank init_context_bank(std::span<const Vector> class_means, std::size_t num_ood,
                              double temperature, bool warm_start, Rng& rng)
{
    if (class_means.empty())
        throw Error(ErrorCode::EmptyInput, "context bank needs at least one class");
    if (!(temperature > 0.0))
        throw Error(ErrorCode::NonPositiveTemperature, "context temperature must be positive");
    const std::size_t d = class_means.front().size();
    ContextBank bank;
    bank.temperature = temperature;
    bank.id_context = Matrix(class_means.size(), d);
    bank.ood_context = Matrix(num_ood, d);
    for (std::size_t c = 0; c < class_means.size(); ++c) {
        auto row = bank.id_context.row(c);
        if (warm_start) {
            if (class_means[c].size() != d)
                throw Error(ErrorCode::DimensionMismatch, "class means differ in dimension");
            std::copy(class_means[c].begin(), class_means[c].end(), row.begin());
            normalize(row);
        } else {
            random_unit_row(row, rng);
        }
    }
    for (std::size_t k = 0; k < num_ood; ++k)
        random_unit_row(bank.ood_context.row(k), rng);
    return bank;
}

Vector id_similarities(std::span<const double> v, const ContextBank& bank)
{
    return cosines_against(v, bank.id_context);
}

Vector ood_similarities(std::span<const double> v, const ContextBank& bank)
{
    return cosines_against(v, bank.ood_context);
}

Vector similarities(std::span<const double> v, const ContextBank& bank)
{
    Vector s = id_similarities(v, bank);
    const Vector o = ood_similarities(v, bank);
    s.insert(s.end(), o.begin(), o.end());
    return s;
}

Vector predict_probs(std::span<const double> v, const ContextBank& bank)
{
    return softmax(similarities(v, bank), bank.temperature);
}

Vector ood_probs(std::span<const double> h, const ContextBank& bank)
{
    if (bank.num_ood() == 0)
        throw Error(ErrorCode::NoOodContext, "model has no OOD context rows");
    return softmax(ood_similarities(h, bank), bank.temperature);
}

std::size_t classify(std::span<const double> v, const ContextBank& bank)
{
    const Vector s = id_similarities(v, bank);
    if (s.empty())
        throw Error(ErrorCode::EmptyInput, "model has no ID classes");
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

std::vector<char> encode_bank(const ContextBank& bank)
{
    ByteWriter w;
    w.bytes(kModelMagic);
    w.uint(static_cast<std::uint32_t>(bank.num_classes()));
    w.uint(static_cast<std::uint32_t>(bank.num_ood()));
    w.uint(static_cast<std::uint32_t>(bank.dim()));
    w.f64(bank.temperature);
    for (double x : bank.id_context.flat())
        w.f64(x);
    for (double x : bank.ood_context.flat())
        w.f64(x);
    return w.buffer();
}

ContextBank decode_bank(std::span<const char> bytes)
{
    ByteReader r(bytes);
    if (r.remaining() < kModelMagic.size() || r.bytes(kModelMagic.size()) != kModelMagic)
        throw Error(ErrorCode::BadMagic, "not an LSA1 model file", 0);
    const auto c = r.uint<std::uint32_t>();
    const auto m = r.uint<std::uint32_t>();
    const auto d = r.uint<std::uint32_t>();
    ContextBank bank;
    bank.temperature = r.f64();
    bank.id_context = Matrix(c, d);
    bank.ood_context = Matrix(m, d);
    for (double& x : bank.id_context.flat())
        x = r.f64();
    for (double& x : bank.ood_context.flat())
        x = r.f64();
    if (r.remaining() != 0)
        throw Error(ErrorCode::TruncatedFile, "trailing bytes after model payload", r.offset());
    return bank;
}

void save_bank(const ContextBank& bank, const std::filesystem::path& path)
{
    write_file_bytes(path, encode_bank(bank));
}

ContextBank load_bank(const std::filesystem::path& path)
{
    return decode_bank(read_file_bytes(path));
}

} // namespace lsa
