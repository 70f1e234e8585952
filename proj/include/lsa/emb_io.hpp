#pragma once

#include "lsa/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lsa {

// EMB1 layout, little-endian throughout:
//   "EMB1" | u16 version (1) | u32 dim | u64 count | u8 precision (4 = f32,
//   8 = f64) | u32 locals per sample
// then per sample: i32 label (-1 for unlabeled OOD), dim values for the
// global embedding, then locals * dim values.
inline constexpr std::uint16_t kEmbVersion = 1;
inline constexpr std::size_t kEmbHeaderBytes = 4 + 2 + 4 + 8 + 1 + 4;

enum class Precision : std::uint8_t { F32 = 4, F64 = 8 };

struct EmbDataset {
    std::size_t dim = 0;
    Precision precision = Precision::F64;
    std::size_t locals_per_sample = 0;
    std::vector<int> labels;
    std::vector<Vector> globals;
    std::vector<std::vector<Vector>> locals; // empty when locals_per_sample == 0

    std::size_t size() const noexcept { return globals.size(); }
};

/// Throws DimensionMismatch if the dataset is not dimension-uniform.
void validate(const EmbDataset& ds);

std::vector<char> encode_emb(const EmbDataset& ds);
/// Throws BadMagic, TruncatedFile (with byte offset) or DimensionMismatch.
EmbDataset decode_emb(std::span<const char> bytes);

void write_emb(const std::filesystem::path& path, const EmbDataset& ds);
EmbDataset read_emb(const std::filesystem::path& path);

} // namespace lsa
