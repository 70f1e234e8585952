#include "lsa/gaussian_bank.hpp"

#include "lsa/error.hpp"

#include <algorithm>
#include <exception>
#include <string>

namespace lsa {

EmbeddingQueue bootstrap_queue(int class_id, std::size_t capacity, std::span<const Vector> pool,
                               Rng& rng)
{
    EmbeddingQueue q;
    q.class_id = class_id;
    q.capacity = capacity;
    auto picks = sample_without_replacement(pool.size(), capacity, rng);
    std::sort(picks.begin(), picks.end());
    q.entries.reserve(picks.size());
    for (std::size_t i : picks)
        q.entries.push_back(pool[i]);
    return q;
}

double default_ridge(const Matrix& covariance)
{
    const std::size_t d = covariance.rows();
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        trace += covariance(i, i);
    return std::max(1e-6, 1e-4 * trace / static_cast<double>(d));
}

ClassGaussian fit_class_gaussian(const EmbeddingQueue& queue)
{
    const auto& xs = queue.entries;
    if (xs.size() < 2)
        throw Error(ErrorCode::TooFewSamples, "class " + std::to_string(queue.class_id) + " has " +
                                                  std::to_string(xs.size()) + " entries");
    const std::size_t d = xs.front().size();
    const double inv_n = 1.0 / static_cast<double>(xs.size());

    Vector mean(d, 0.0);
    for (const auto& x : xs) {
        if (x.size() != d)
            throw Error(ErrorCode::DimensionMismatch, "queue entries differ in dimension");
        for (std::size_t i = 0; i < d; ++i)
            mean[i] += x[i];
    }
    for (double& m : mean)
        m *= inv_n;

    Matrix cov(d, d);
    Vector centered(d);
    for (const auto& x : xs) {
        for (std::size_t i = 0; i < d; ++i)
            centered[i] = x[i] - mean[i];
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = centered[i];
            auto row = cov.row(i);
            for (std::size_t j = 0; j <= i; ++j)
                row[j] += ci * centered[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            cov(i, j) *= inv_n;
            cov(j, i) = cov(i, j);
        }

    double ridge = default_ridge(cov);
    for (int attempt = 0;; ++attempt) {
        try {
            return make_gaussian(mean, cov, ridge);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotPositiveDefinite || attempt >= 8)
                throw;
            ridge *= 10.0;
        }
    }
}

EmbeddingQueue refresh_queue(EmbeddingQueue queue, std::span<const Vector> incoming, double rho,
                             Rng& rng)
{
    const auto slots =
        static_cast<std::size_t>(rho * static_cast<double>(queue.entries.size()));
    if (rho > 0.0 && incoming.empty())
        throw Error(ErrorCode::EmptyIncoming, "refresh with rho > 0 needs incoming embeddings");
    if (slots == 0)
        return queue;
    const std::size_t d = queue.entries.front().size();
    for (const auto& v : incoming)
        if (v.size() != d)
            throw Error(ErrorCode::DimensionMismatch, "incoming embedding dimension differs");

    for (std::size_t slot : sample_without_replacement(queue.entries.size(), slots, rng))
        queue.entries[slot] = incoming[rng.uniform_index(incoming.size())];
    return queue;
}

ExtremeDraws sample_likelihood_extremes(const ClassGaussian& g, std::size_t n, Rng& rng,
                                        DrawLog* log)
{
    // x = mean + L z, so the Mahalanobis term of x under g is exactly |z|^2.
    const std::size_t d = g.dim();
    constexpr double log_two_pi = 1.8378770664093454835606594728112;
    const double offset = -0.5 * (static_cast<double>(d) * log_two_pi + g.logdet);
    Vector z(d);
    Vector z_high(d);
    Vector z_low(d);
    Vector x(d);
    ExtremeDraws out;
    if (log) {
        log->draws.clear();
        log->logpdf.clear();
    }
    for (std::size_t i = 0; i < n; ++i) {
        double quad = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            z[k] = rng.normal();
            quad += z[k] * z[k];
        }
        const double lp = offset - 0.5 * quad;
        if (log) {
            mvn_from_standard(g.mean, g.chol, z, x);
            log->draws.push_back(x);
            log->logpdf.push_back(lp);
        }
        if (i == 0 || lp > out.high_logpdf) {
            z_high = z;
            out.high_index = i;
            out.high_logpdf = lp;
        }
        if (i == 0 || lp < out.low_logpdf) {
            z_low = z;
            out.low_index = i;
            out.low_logpdf = lp;
        }
    }
    if (n > 0) {
        out.high.resize(d);
        out.low.resize(d);
        mvn_from_standard(g.mean, g.chol, z_high, out.high);
        mvn_from_standard(g.mean, g.chol, z_low, out.low);
    }
    return out;
}

namespace {

Rng class_stream(std::uint64_t base, std::size_t c)
{
    return Rng(mix64(base ^ mix64(static_cast<std::uint64_t>(c) + 1)));
}

} // namespace

std::vector<ClassGaussian> fit_all(std::span<const EmbeddingQueue> queues)
{
    std::vector<ClassGaussian> out(queues.size());
    const auto classes = static_cast<long>(queues.size());
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 1)
    for (long c = 0; c < classes; ++c) {
        try {
            out[c] = fit_class_gaussian(queues[c]);
        } catch (...) {
#pragma omp critical(lsa_fit_failure)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

RegionSets build_region_sets(std::span<const ClassGaussian> gaussians, std::size_t n, Rng& rng)
{
    const std::uint64_t base = rng.next_u64();
    const auto classes = static_cast<long>(gaussians.size());
    RegionSets out;
    out.high.resize(gaussians.size());
    out.low.resize(gaussians.size());
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 1)
    for (long c = 0; c < classes; ++c) {
        try {
            Rng stream = class_stream(base, static_cast<std::size_t>(c));
            auto draws = sample_likelihood_extremes(gaussians[c], n, stream);
            out.high[c] = std::move(draws.high);
            out.low[c] = std::move(draws.low);
        } catch (...) {
#pragma omp critical(lsa_region_failure)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

namespace serial {

std::vector<ClassGaussian> fit_all(std::span<const EmbeddingQueue> queues)
{
    std::vector<ClassGaussian> out;
    out.reserve(queues.size());
    for (const auto& q : queues)
        out.push_back(fit_class_gaussian(q));
    return out;
}

RegionSets build_region_sets(std::span<const ClassGaussian> gaussians, std::size_t n, Rng& rng)
{
    const std::uint64_t base = rng.next_u64();
    RegionSets out;
    for (std::size_t c = 0; c < gaussians.size(); ++c) {
        Rng stream = class_stream(base, c);
        auto draws = sample_likelihood_extremes(gaussians[c], n, stream);
        out.high.push_back(std::move(draws.high));
        out.low.push_back(std::move(draws.low));
    }
    return out;
}

} // namespace serial

} // namespace lsa
