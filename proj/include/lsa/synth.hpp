#pragma once

#include "lsa/emb_io.hpp"
#include "lsa/manifest.hpp"
#include "lsa/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lsa {

/// Desk-scale full-spectrum world: isotropic ID classes, a csID copy with
/// jittered means and inflated covariance, near-OOD classes mixed between ID
/// means in the ID covariance regime, and far-OOD classes with displaced
/// means and inflated covariance.
struct SynthConfig {
    std::size_t classes = 8;
    std::size_t dim = 32;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 100;
    std::size_t csid_per_class = 100;
    std::size_t near_classes = 4;
    std::size_t near_per_class = 200;
    std::size_t far_classes = 4;
    std::size_t far_per_class = 200;

    double radius = 1.0;
    double within_scale = 0.12;   // per-coordinate std of ID classes
    double csid_cov_factor = 1.5; // csID covariance = factor * ID covariance
    double csid_jitter = 0.1;     // csID mean offset norm is at most this
    double near_mix = 0.5;        // near mean = normalize((1-mix) mu_a + mix mu_b)
    double near_noise = 0.15;     // extra random direction in the near mean, relative
    double far_cov_factor = 2.0;
    double far_mean_shift = 0.5;  // far means lie at radius * (1 + shift)

    std::size_t locals_per_sample = 0;
    double local_scale = 2.0; // locals add this many within_scale units of noise

    Precision precision = Precision::F64;
    std::uint64_t seed = 7;

    /// Throws ConfigInvalid.
    void validate() const;
};

struct SynthWorld {
    SynthConfig config;
    std::vector<Vector> id_means;
    std::vector<Vector> csid_means;
    std::vector<Vector> near_means;
    std::vector<Vector> far_means;
    // (role, dataset) in manifest order.
    std::vector<std::pair<std::string, EmbDataset>> splits;

    const EmbDataset& split(const std::string& role) const;
};

SynthWorld synth_world(const SynthConfig& cfg);

/// Writes one EMB1 per split plus manifest.txt into dir; returns the manifest.
Manifest write_world(const SynthWorld& world, const std::filesystem::path& dir);

} // namespace lsa
