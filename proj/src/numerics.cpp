#include "lsa/numerics.hpp"

#include "lsa/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace lsa {

namespace {

const char* code_names[] = {
    "NotPositiveDefinite", "DimensionMismatch", "EmptyInput",   "NonPositiveTemperature",
    "ZeroVector",          "TooFewSamples",     "EmptyIncoming", "NoOodContext",
    "SExceedsC",           "NoLocalEmbeddings", "EmptyScores",   "LabelOutOfRange",
    "IoError",             "BadMagic",          "TruncatedFile", "ConfigInvalid",
};

void require_same_dim(std::size_t a, std::size_t b, const char* what)
{
    if (a != b)
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

} // namespace

std::string_view to_string(ErrorCode code)
{
    return code_names[static_cast<int>(code)];
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code)
{
}

Error::Error(ErrorCode code, const std::string& detail, std::uint64_t byte_offset)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail + " (byte offset " +
                         std::to_string(byte_offset) + ")"),
      code_(code), offset_(byte_offset)
{
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows)
{
    if (rows.empty())
        return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require_same_dim(rows[r].size(), m.cols(), "Matrix::from_rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Matrix cholesky(const Matrix& m)
{
    require_same_dim(m.rows(), m.cols(), "cholesky of non-square matrix");
    const std::size_t n = m.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = m(j, j);
        const auto lj = l.row(j);
        for (std::size_t k = 0; k < j; ++k)
            diag -= lj[k] * lj[k];
        if (!(diag > 0.0))
            throw Error(ErrorCode::NotPositiveDefinite,
                        "pivot " + std::to_string(j) + " is " + std::to_string(diag));
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            const auto li = l.row(i);
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k)
                s -= li[k] * lj[k];
            l(i, j) = s / ljj;
        }
    }
    return l;
}

ClassGaussian make_gaussian(Vector mean, Matrix covariance, double ridge)
{
    require_same_dim(mean.size(), covariance.rows(), "make_gaussian");
    ClassGaussian g;
    g.mean = std::move(mean);
    g.covariance = std::move(covariance);
    g.ridge = ridge;
    Matrix reg = g.covariance;
    for (std::size_t i = 0; i < reg.rows(); ++i)
        reg(i, i) += ridge;
    g.chol = cholesky(reg);
    double logdet = 0.0;
    for (std::size_t i = 0; i < g.chol.rows(); ++i)
        logdet += std::log(g.chol(i, i));
    g.logdet = 2.0 * logdet;
    return g;
}

void forward_substitute(const Matrix& lower, std::span<double> b)
{
    const std::size_t n = lower.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const auto li = lower.row(i);
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k)
            s -= li[k] * b[k];
        b[i] = s / li[i];
    }
}

double mvn_logpdf(std::span<const double> x, const ClassGaussian& g)
{
    Vector scratch(x.size());
    return mvn_logpdf(x, g, scratch);
}

double mvn_logpdf(std::span<const double> x, const ClassGaussian& g, std::span<double> r)
{
    require_same_dim(x.size(), g.dim(), "mvn_logpdf");
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i)
        r[i] = x[i] - g.mean[i];
    forward_substitute(g.chol, r.first(d));
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        quad += r[i] * r[i];
    constexpr double log_two_pi = 1.8378770664093454835606594728112;
    return -0.5 * (static_cast<double>(d) * log_two_pi + g.logdet + quad);
}

double logsumexp(std::span<const double> v)
{
    if (v.empty())
        throw Error(ErrorCode::EmptyInput, "logsumexp of an empty array");
    const double m = *std::max_element(v.begin(), v.end());
    if (std::isinf(m))
        return m;
    double s = 0.0;
    for (double x : v)
        s += std::exp(x - m);
    return m + std::log(s);
}

Vector softmax(std::span<const double> v, double temperature)
{
    if (!(temperature > 0.0))
        throw Error(ErrorCode::NonPositiveTemperature, "softmax temperature must be positive");
    if (v.empty())
        throw Error(ErrorCode::EmptyInput, "softmax of an empty array");
    Vector scaled(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        scaled[i] = v[i] / temperature;
    const double lse = logsumexp(scaled);
    for (double& x : scaled)
        x = std::exp(x - lse);
    return scaled;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) noexcept
{
    return std::sqrt(dot(a, a));
}

double cosine(std::span<const double> u, std::span<const double> v)
{
    require_same_dim(u.size(), v.size(), "cosine");
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0)
        throw Error(ErrorCode::ZeroVector, "cosine with a zero vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vector sample_mvn(std::span<const double> mean, const Matrix& chol, Rng& rng)
{
    Vector z(mean.size());
    Vector x(mean.size());
    sample_mvn_into(mean, chol, rng, z, x);
    return x;
}

void sample_mvn_into(std::span<const double> mean, const Matrix& chol, Rng& rng,
                     std::span<double> z, std::span<double> out)
{
    require_same_dim(mean.size(), chol.rows(), "sample_mvn");
    const std::size_t d = mean.size();
    for (std::size_t i = 0; i < d; ++i)
        z[i] = rng.normal();
    mvn_from_standard(mean, chol, z, out);
}

void mvn_from_standard(std::span<const double> mean, const Matrix& chol, std::span<const double> z,
                       std::span<double> out)
{
    const std::size_t d = mean.size();
    for (std::size_t i = 0; i < d; ++i) {
        const auto li = chol.row(i);
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k)
            s += li[k] * z[k];
        out[i] = mean[i] + s;
    }
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng)
{
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
        idx[i] = i;
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

Vector sample_mvn(const ClassGaussian& g, Rng& rng)
{
    return sample_mvn(g.mean, g.chol, rng);
}

double log_sigmoid(double x) noexcept
{
    // log(1 / (1 + e^-x)) = -softplus(-x)
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) noexcept
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace lsa
