#include "lsa/synth.hpp"

#include "lsa/byte_io.hpp"
#include "lsa/error.hpp"
#include "lsa/rng.hpp"

#include <cmath>

namespace lsa {

void SynthConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); };
    if (classes == 0 || dim == 0 || train_per_class == 0 || test_per_class == 0 ||
        csid_per_class == 0 || near_classes == 0 || near_per_class == 0 || far_classes == 0 ||
        far_per_class == 0)
        fail("synthetic world counts must be positive");
    if (!(radius > 0.0) || !(within_scale > 0.0))
        fail("radius and within-class scale must be positive");
    if (!(csid_cov_factor > 0.0) || !(far_cov_factor > 0.0))
        fail("covariance perturbation factors must be positive");
    if (!(csid_jitter >= 0.0) || !(near_noise >= 0.0) || !(far_mean_shift >= 0.0) ||
        !(local_scale >= 0.0))
        fail("jitter, noise, shift and local scales must be non-negative");
    if (!(near_mix >= 0.0 && near_mix <= 1.0))
        fail("near_mix must lie in [0, 1]");
    if (classes < 2 && near_mix > 0.0)
        fail("mixing near-OOD means needs at least two ID classes");
}

const EmbDataset& SynthWorld::split(const std::string& role) const
{
    for (const auto& [r, ds] : splits)
        if (r == role)
            return ds;
    throw Error(ErrorCode::ConfigInvalid, "synthetic world has no split '" + role + "'");
}

namespace {

Vector random_direction(std::size_t d, Rng& rng)
{
    Vector v(d);
    double n = 0.0;
    while (n == 0.0) {
        for (double& x : v)
            x = rng.normal();
        n = norm(v);
    }
    for (double& x : v)
        x /= n;
    return v;
}

Vector scaled(Vector v, double s)
{
    for (double& x : v)
        x *= s;
    return v;
}

EmbDataset draw_split(const std::vector<Vector>& means, const std::vector<int>& labels,
                      std::size_t per_class, double scale, const SynthConfig& cfg, Rng& rng)
{
    EmbDataset ds;
    ds.dim = cfg.dim;
    ds.precision = cfg.precision;
    ds.locals_per_sample = cfg.locals_per_sample;
    for (std::size_t c = 0; c < means.size(); ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            Vector x(cfg.dim);
            for (std::size_t j = 0; j < cfg.dim; ++j)
                x[j] = means[c][j] + scale * rng.normal();
            if (cfg.locals_per_sample > 0) {
                std::vector<Vector> ls;
                for (std::size_t l = 0; l < cfg.locals_per_sample; ++l) {
                    Vector y = x;
                    for (double& v : y)
                        v += cfg.local_scale * scale * rng.normal();
                    ls.push_back(std::move(y));
                }
                ds.locals.push_back(std::move(ls));
            }
            if (cfg.precision == Precision::F32)
                for (double& v : x)
                    v = static_cast<double>(static_cast<float>(v));
            ds.globals.push_back(std::move(x));
            ds.labels.push_back(labels[c]);
        }
    }
    if (cfg.precision == Precision::F32)
        for (auto& ls : ds.locals)
            for (auto& l : ls)
                for (double& v : l)
                    v = static_cast<double>(static_cast<float>(v));
    return ds;
}

} // namespace

SynthWorld synth_world(const SynthConfig& cfg)
{
    cfg.validate();
    Rng root(cfg.seed);
    Rng geometry = root.split(1);
    Rng samples = root.split(2);
    const std::size_t d = cfg.dim;

    SynthWorld w;
    w.config = cfg;
    for (std::size_t c = 0; c < cfg.classes; ++c)
        w.id_means.push_back(scaled(random_direction(d, geometry), cfg.radius));

    for (std::size_t c = 0; c < cfg.classes; ++c) {
        const double r = cfg.csid_jitter * geometry.uniform();
        Vector m = w.id_means[c];
        const Vector u = random_direction(d, geometry);
        for (std::size_t j = 0; j < d; ++j)
            m[j] += r * u[j];
        w.csid_means.push_back(std::move(m));
    }

    for (std::size_t k = 0; k < cfg.near_classes; ++k) {
        const std::size_t a = geometry.uniform_index(cfg.classes);
        std::size_t b = a;
        if (cfg.classes > 1)
            while (b == a)
                b = geometry.uniform_index(cfg.classes);
        const Vector u = random_direction(d, geometry);
        Vector m(d);
        for (std::size_t j = 0; j < d; ++j)
            m[j] = (1.0 - cfg.near_mix) * w.id_means[a][j] + cfg.near_mix * w.id_means[b][j] +
                   cfg.near_noise * cfg.radius * u[j];
        const double n = norm(m);
        w.near_means.push_back(scaled(std::move(m), cfg.radius / n));
    }

    for (std::size_t k = 0; k < cfg.far_classes; ++k)
        w.far_means.push_back(
            scaled(random_direction(d, geometry), cfg.radius * (1.0 + cfg.far_mean_shift)));

    std::vector<int> id_labels;
    for (std::size_t c = 0; c < cfg.classes; ++c)
        id_labels.push_back(static_cast<int>(c));
    const std::vector<int> near_labels(cfg.near_classes, -1);
    const std::vector<int> far_labels(cfg.far_classes, -1);
    const double s = cfg.within_scale;

    w.splits.emplace_back("id_train",
                          draw_split(w.id_means, id_labels, cfg.train_per_class, s, cfg, samples));
    w.splits.emplace_back("id_test",
                          draw_split(w.id_means, id_labels, cfg.test_per_class, s, cfg, samples));
    w.splits.emplace_back("csid:shifted",
                          draw_split(w.csid_means, id_labels, cfg.csid_per_class,
                                     s * std::sqrt(cfg.csid_cov_factor), cfg, samples));
    w.splits.emplace_back("near_ood:interleaved",
                          draw_split(w.near_means, near_labels, cfg.near_per_class, s, cfg, samples));
    w.splits.emplace_back("far_ood:displaced",
                          draw_split(w.far_means, far_labels, cfg.far_per_class,
                                     s * std::sqrt(cfg.far_cov_factor), cfg, samples));
    return w;
}

Manifest write_world(const SynthWorld& world, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    Manifest m;
    m.base_dir = dir;
    for (const auto& [role, ds] : world.splits) {
        std::string file = role;
        for (char& ch : file)
            if (ch == ':')
                ch = '_';
        file += ".emb";
        write_emb(dir / file, ds);
        m.entries.push_back({role, file});
    }
    write_file_text(dir / "manifest.txt", format_manifest(m));
    return m;
}

} // namespace lsa
