#pragma once

#include "lsa/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace lsa {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<Vector>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Multivariate normal with its covariance factored once.
struct ClassGaussian {
    Vector mean;
    Matrix covariance;   // the estimate before the ridge is added
    double ridge = 0.0;  // epsilon added to the diagonal before factoring
    Matrix chol;         // lower triangular, chol * chol^T = covariance + ridge * I
    double logdet = 0.0; // 2 * sum(log(diag(chol)))

    std::size_t dim() const noexcept { return mean.size(); }
};

/// Lower-triangular L with L * L^T = m. Throws NotPositiveDefinite on a
/// non-positive pivot.
Matrix cholesky(const Matrix& m);

/// Factors covariance + ridge * I into a ClassGaussian.
ClassGaussian make_gaussian(Vector mean, Matrix covariance, double ridge = 0.0);

/// Solves L y = b in place for lower-triangular L.
void forward_substitute(const Matrix& lower, std::span<double> b);

double mvn_logpdf(std::span<const double> x, const ClassGaussian& g);
/// Allocation-free variant; scratch must hold dim() doubles.
double mvn_logpdf(std::span<const double> x, const ClassGaussian& g, std::span<double> scratch);

double logsumexp(std::span<const double> v);

/// softmax(v / temperature).
Vector softmax(std::span<const double> v, double temperature);

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm(std::span<const double> a) noexcept;

/// u.v / (|u||v|), clamped to [-1, 1]. Throws ZeroVector.
double cosine(std::span<const double> u, std::span<const double> v);

/// mean + L z with z i.i.d. standard normal.
Vector sample_mvn(std::span<const double> mean, const Matrix& chol, Rng& rng);
Vector sample_mvn(const ClassGaussian& g, Rng& rng);
/// Allocation-free variant writing into out; z must hold dim doubles.
void sample_mvn_into(std::span<const double> mean, const Matrix& chol, Rng& rng,
                     std::span<double> z, std::span<double> out);
/// out = mean + chol * z for a standard-normal z.
void mvn_from_standard(std::span<const double> mean, const Matrix& chol, std::span<const double> z,
                       std::span<double> out);

/// Draws k distinct indices from [0, n) uniformly (partial Fisher-Yates).
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

/// log(sigmoid(x)) without overflow.
double log_sigmoid(double x) noexcept;
double sigmoid(double x) noexcept;

} // namespace lsa
