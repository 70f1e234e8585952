#pragma once

#include "lsa/context_model.hpp"
#include "lsa/gaussian_bank.hpp"
#include "lsa/numerics.hpp"
#include "lsa/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace lsa {

struct TrainItem {
    Vector embedding;
    int label = 0; // [0, C) for images and h, [C, C + M) for o
};

struct TrainBatch {
    std::vector<TrainItem> items;     // cross-entropy set: images, H_s, O
    std::vector<Vector> uni_regions;  // h vectors fed to the uniformity loss
    std::vector<Vector> bin_regions;  // h vectors fed to the binary loss
    std::vector<Vector> low_regions;  // o vectors; used by the no-OOD-context objective
};

struct TrainConfig {
    double gamma = 0.5;
    double lambda = 0.1;
    double learning_rate = 0.004;
    std::size_t epochs = 100;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 64;
    std::size_t shots_per_class = 16;
    double refresh_fraction = 0.1;
    std::size_t region_samples = 20000;
    std::size_t queue_capacity = 500;
    std::size_t num_ood = 15;
    double temperature = 0.01;
    std::uint64_t seed = 0;
    bool warm_start = true;

    bool disable_uni = false;
    bool disable_bin = false;
    bool no_ood_context = false;
    // Swap h for global image embeddings in one loss (the "-G" variants).
    bool substitute_ce = false;
    bool substitute_uni = false;
    bool substitute_bin = false;

    /// Throws ConfigInvalid.
    void validate() const;
};

/// Per-row gradients, shaped like the bank.
struct GradAccumulator {
    Matrix d_id;
    Matrix d_ood;

    static GradAccumulator zeros_like(const ContextBank& bank);
    void add(const GradAccumulator& other, double scale = 1.0);
    void scale(double s);
};

struct LossValue {
    double value = 0.0;
    GradAccumulator grads;
};

struct TotalLoss {
    double ce = 0.0;
    double uni = 0.0;
    double bin = 0.0;
    double total = 0.0;
    GradAccumulator grads;
};

/// Optional per-vector labels for the low regions; a non-negative entry k
/// pins the vector to OOD row k mod M instead of a random one.
struct OutlierLabels {
    std::vector<int> labels;
};

/// Batch from an explicit image slice: images, then S = B/2 random h vectors
/// labeled by class, then every o vector with a random OOD label.
TrainBatch build_batch(std::span<const TrainItem> images, std::span<const TrainItem> pool,
                       const RegionSets& regions, const TrainConfig& cfg, Rng& rng,
                       const OutlierLabels* low_labels = nullptr);

/// Draws B images without replacement from the pool, then as above.
TrainBatch build_batch(std::span<const TrainItem> pool, const RegionSets& regions,
                       const TrainConfig& cfg, Rng& rng);

// Losses are batch means. Gradient work is split into fixed-size chunks and
// reduced in chunk order, so values do not depend on the OpenMP thread count.
LossValue loss_ce(std::span<const TrainItem> items, const ContextBank& bank);
LossValue loss_uni(std::span<const Vector> regions, const ContextBank& bank);
LossValue loss_bin(std::span<const Vector> regions, const ContextBank& bank);
/// Uniformity of o over the ID rows; the OOD-context-free objective.
LossValue loss_uni_id(std::span<const Vector> regions, const ContextBank& bank);

TotalLoss total_loss(const TrainBatch& batch, const ContextBank& bank, const TrainConfig& cfg);

namespace serial {
LossValue loss_ce(std::span<const TrainItem> items, const ContextBank& bank);
LossValue loss_uni(std::span<const Vector> regions, const ContextBank& bank);
LossValue loss_bin(std::span<const Vector> regions, const ContextBank& bank);
LossValue loss_uni_id(std::span<const Vector> regions, const ContextBank& bank);
} // namespace serial

struct SgdState {
    Matrix velocity_id;
    Matrix velocity_ood;

    static SgdState zeros_like(const ContextBank& bank);
};

/// lr0 * (1 + cos(pi * epoch / total)) / 2
double cosine_learning_rate(double initial, std::size_t epoch, std::size_t total_epochs);

/// v <- momentum * v + (g + wd * theta); theta <- theta - lr * v.
void sgd_step(ContextBank& bank, const GradAccumulator& grads, SgdState& state,
              const TrainConfig& cfg, std::size_t epoch);

struct TrainData {
    std::size_t num_classes = 0;
    std::vector<Vector> embeddings;
    std::vector<int> labels;
    // Replacement for the sampled o vectors when non-empty.
    std::vector<Vector> outliers;
    std::vector<int> outlier_labels; // -1 = assign randomly
};

struct EpochRecord {
    std::size_t epoch = 0;
    double ce = 0.0;
    double uni = 0.0;
    double bin = 0.0;
    double total = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    ContextBank bank;
    std::vector<EpochRecord> trace;
};

TrainResult train(const TrainData& data, const TrainConfig& cfg);

} // namespace lsa
