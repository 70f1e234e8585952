#pragma once

#include "lsa/numerics.hpp"
#include "lsa/rng.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace lsa {

/// Fixed-capacity store of one class's embeddings.
struct EmbeddingQueue {
    int class_id = 0;
    std::size_t capacity = 0;
    std::vector<Vector> entries;
};

/// One high-density (h) and one low-density (o) region vector per class.
struct RegionSets {
    std::vector<Vector> high; // h_c, indexed by class
    std::vector<Vector> low;  // o_c, indexed by class
};

struct ExtremeDraws {
    Vector high;
    Vector low;
    std::size_t high_index = 0;
    std::size_t low_index = 0;
    double high_logpdf = 0.0;
    double low_logpdf = 0.0;
};

/// Optional record of every draw, for checking the extremes after the fact.
struct DrawLog {
    std::vector<Vector> draws;
    std::vector<double> logpdf;
};

/// Fills a queue from a class's training embeddings, keeping a uniform
/// random subset when the pool exceeds capacity.
EmbeddingQueue bootstrap_queue(int class_id, std::size_t capacity, std::span<const Vector> pool,
                               Rng& rng);

/// max(1e-6, 1e-4 * trace / D)
double default_ridge(const Matrix& covariance);

/// Mean and biased (1/N) covariance of the queue, factored with a ridge that
/// grows tenfold until the Cholesky succeeds (at most 8 escalations).
ClassGaussian fit_class_gaussian(const EmbeddingQueue& queue);

/// Overwrites floor(rho * size) distinct random slots with random incoming
/// entries.
EmbeddingQueue refresh_queue(EmbeddingQueue queue, std::span<const Vector> incoming, double rho,
                             Rng& rng);

/// Draws n samples and keeps the max- and min-density ones. Ties go to the
/// lowest draw index. A draw's log-density is computed from its
/// standard-normal preimage, which equals mvn_logpdf up to rounding.
ExtremeDraws sample_likelihood_extremes(const ClassGaussian& g, std::size_t n, Rng& rng,
                                        DrawLog* log = nullptr);

// Per-class work fans out over OpenMP threads. Class c always uses the
// stream derived from (one draw of rng, c), so the result does not depend on
// the thread count and matches the serial:: reference bit for bit.
std::vector<ClassGaussian> fit_all(std::span<const EmbeddingQueue> queues);
RegionSets build_region_sets(std::span<const ClassGaussian> gaussians, std::size_t n, Rng& rng);

namespace serial {
std::vector<ClassGaussian> fit_all(std::span<const EmbeddingQueue> queues);
RegionSets build_region_sets(std::span<const ClassGaussian> gaussians, std::size_t n, Rng& rng);
} // namespace serial

} // namespace lsa
