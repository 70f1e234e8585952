#pragma once

#include "lsa/numerics.hpp"
#include "lsa/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace lsa {

/// Learnable context rows: C ID rows followed (logically) by M OOD rows.
struct ContextBank {
    Matrix id_context;  // C x D
    Matrix ood_context; // M x D; M = 0 disables the OOD branch
    double temperature = 0.01;

    std::size_t num_classes() const noexcept { return id_context.rows(); }
    std::size_t num_ood() const noexcept { return ood_context.rows(); }
    std::size_t dim() const noexcept { return id_context.cols(); }

    friend bool operator==(const ContextBank&, const ContextBank&) = default;
};

/// ID rows start at the unit-normalized class means (or random unit vectors
/// when warm_start is false); OOD rows are random unit vectors.
ContextBank init_context_bank(std::span<const Vector> class_means, std::size_t num_ood,
                              double temperature, bool warm_start, Rng& rng);

/// Cosines against every row, ID rows first.
Vector similarities(std::span<const double> v, const ContextBank& bank);
Vector id_similarities(std::span<const double> v, const ContextBank& bank);
Vector ood_similarities(std::span<const double> v, const ContextBank& bank);

/// softmax(similarities / tau) over all C + M rows.
Vector predict_probs(std::span<const double> v, const ContextBank& bank);

/// softmax over the M OOD cosines only. Throws NoOodContext when M = 0.
Vector ood_probs(std::span<const double> h, const ContextBank& bank);

/// Argmax over the ID cosines; ties go to the lowest index.
std::size_t classify(std::span<const double> v, const ContextBank& bank);

// "LSA1" model file: magic, u32 C, u32 M, u32 D, f64 tau, then T_id and
// T_ood as row-major f64, all little-endian.
std::vector<char> encode_bank(const ContextBank& bank);
ContextBank decode_bank(std::span<const char> bytes);
void save_bank(const ContextBank& bank, const std::filesystem::path& path);
ContextBank load_bank(const std::filesystem::path& path);

} // namespace lsa
