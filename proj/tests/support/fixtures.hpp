#pragma once

#include "lsa/context_model.hpp"
#include "lsa/numerics.hpp"
#include "lsa/rng.hpp"
#include "lsa/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace lsa::testing {

inline Vector random_vector(std::size_t d, Rng& rng)
{
    Vector v(d);
    for (auto& x : v)
        x = rng.normal();
    return v;
}

inline std::vector<Vector> random_vectors(std::size_t n, std::size_t d, Rng& rng)
{
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(random_vector(d, rng));
    return out;
}

inline ContextBank random_bank(std::size_t c, std::size_t m, std::size_t d, double tau, Rng& rng)
{
    ContextBank bank;
    bank.id_context = Matrix::from_rows(random_vectors(c, d, rng));
    bank.ood_context = m ? Matrix::from_rows(random_vectors(m, d, rng)) : Matrix(0, d);
    bank.temperature = tau;
    return bank;
}

/// Worst relative error between an analytic gradient and central differences
/// of f over every parameter of the bank.
inline double fd_relative_error(const ContextBank& bank, const GradAccumulator& analytic,
                                const std::function<double(const ContextBank&)>& f,
                                double step = 1e-5)
{
    double worst = 0.0;
    auto check = [&](bool ood, const Matrix& g) {
        const Matrix& m = ood ? bank.ood_context : bank.id_context;
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) {
                ContextBank plus = bank;
                ContextBank minus = bank;
                (ood ? plus.ood_context : plus.id_context)(r, c) += step;
                (ood ? minus.ood_context : minus.id_context)(r, c) -= step;
                const double numeric = (f(plus) - f(minus)) / (2.0 * step);
                const double a = g(r, c);
                const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(numeric));
                worst = std::max(worst, err);
            }
    };
    check(false, analytic.d_id);
    check(true, analytic.d_ood);
    return worst;
}

/// Largest gap between the two best entries, used to keep argmax losses away
/// from ties in finite-difference checks.
inline double top_two_gap(const Vector& v)
{
    if (v.size() < 2)
        return 1.0;
    Vector s = v;
    std::sort(s.begin(), s.end(), std::greater<>());
    return s[0] - s[1];
}

inline bool same_grads(const GradAccumulator& a, const GradAccumulator& b, double tol)
{
    auto close = [tol](const Matrix& x, const Matrix& y) {
        if (x.rows() != y.rows() || x.cols() != y.cols())
            return false;
        for (std::size_t i = 0; i < x.flat().size(); ++i)
            if (std::fabs(x.flat()[i] - y.flat()[i]) > tol)
                return false;
        return true;
    };
    return close(a.d_id, b.d_id) && close(a.d_ood, b.d_ood);
}

} // namespace lsa::testing
