#include "lsa/cli.hpp"

#include "lsa/byte_io.hpp"
#include "lsa/emb_io.hpp"
#include "lsa/error.hpp"
#include "lsa/evaluation.hpp"
#include "lsa/gaussian_bank.hpp"
#include "lsa/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace lsa {

namespace fs = std::filesystem;

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Removes every registered file unless the run commits.
class ArtifactTracker {
public:
    ArtifactTracker() = default;
    ArtifactTracker(const ArtifactTracker&) = delete;
    ArtifactTracker& operator=(const ArtifactTracker&) = delete;
    ~ArtifactTracker()
    {
        if (committed_)
            return;
        std::error_code ec;
        for (auto it = paths_.rbegin(); it != paths_.rend(); ++it)
            fs::remove(*it, ec);
    }

    const fs::path& add(fs::path p)
    {
        paths_.push_back(std::move(p));
        return paths_.back();
    }
    void commit() { committed_ = true; }

private:
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

std::vector<const ManifestEntry*> scored_entries(const Manifest& m)
{
    std::vector<const ManifestEntry*> out;
    if (const auto* e = m.find("id_test"))
        out.push_back(e);
    for (std::string_view prefix : {"csid:", "near_ood:", "far_ood:"})
        for (const auto* e : m.with_prefix(prefix))
            out.push_back(e);
    return out;
}

} // namespace

TrainData load_train_data(const Manifest& m, const std::optional<fs::path>& outliers)
{
    const auto* entry = m.find("id_train");
    if (!entry)
        throw Error(ErrorCode::ConfigInvalid, "manifest has no id_train entry");
    EmbDataset ds = read_emb(m.resolve(*entry));
    TrainData data;
    int max_label = -1;
    for (int y : ds.labels) {
        if (y < 0)
            throw Error(ErrorCode::LabelOutOfRange, "id_train contains unlabeled samples");
        max_label = std::max(max_label, y);
    }
    data.num_classes = static_cast<std::size_t>(max_label + 1);
    data.embeddings = std::move(ds.globals);
    data.labels = std::move(ds.labels);
    if (outliers) {
        EmbDataset out = read_emb(*outliers);
        if (out.dim != ds.dim)
            throw Error(ErrorCode::DimensionMismatch, "outlier embeddings have dimension " +
                                                          std::to_string(out.dim));
        data.outliers = std::move(out.globals);
        data.outlier_labels = std::move(out.labels);
    }
    return data;
}

std::vector<ScoredSample> score_manifest(const Manifest& m, const ContextBank& bank,
                                         const ScoreRecipe& recipe)
{
    std::vector<ScoredSample> all;
    for (const auto* e : scored_entries(m)) {
        const EmbDataset ds = read_emb(m.resolve(*e));
        if (ds.dim != bank.dim())
            throw Error(ErrorCode::DimensionMismatch, e->role + " has dimension " +
                                                          std::to_string(ds.dim) + ", model " +
                                                          std::to_string(bank.dim()));
        std::vector<ScoreTag> kinds;
        const SplitGroup g = group_of(e->role);
        if (recipe.all)
            kinds = {*recipe.all};
        else if (g == SplitGroup::NearOod)
            kinds = {recipe.near_kind};
        else if (g == SplitGroup::FarOod)
            kinds = {recipe.far_kind};
        else if (recipe.near_kind == recipe.far_kind)
            kinds = {recipe.near_kind};
        else
            kinds = {recipe.near_kind, recipe.far_kind};

        const ScoreInput input{e->role, ds.globals, ds.locals};
        for (ScoreTag tag : kinds) {
            auto scored = score_dataset(input, bank, {tag, recipe.temperature});
            all.insert(all.end(), scored.begin(), scored.end());
        }
    }
    return all;
}

double manifest_accuracy(const Manifest& m, const ContextBank& bank)
{
    std::vector<Vector> xs;
    std::vector<int> ys;
    std::vector<const ManifestEntry*> entries;
    if (const auto* e = m.find("id_test"))
        entries.push_back(e);
    for (const auto* e : m.with_prefix("csid:"))
        entries.push_back(e);
    for (const auto* e : entries) {
        EmbDataset ds = read_emb(m.resolve(*e));
        xs.insert(xs.end(), ds.globals.begin(), ds.globals.end());
        ys.insert(ys.end(), ds.labels.begin(), ds.labels.end());
    }
    if (xs.empty())
        throw Error(ErrorCode::EmptyInput, "manifest has no id_test or csid split");
    return accuracy(xs, ys, bank);
}

std::string scores_csv(std::span<const ScoredSample> scores)
{
    std::ostringstream out;
    out << "sample_id,split,score_kind,score\n";
    for (const auto& s : scores)
        out << s.sample_id << ',' << s.split << ',' << to_string(s.kind) << ',' << num(s.score)
            << '\n';
    return out.str();
}

std::vector<ScoredSample> parse_scores_csv(std::string_view text)
{
    std::vector<ScoredSample> out;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("sample_id,split,score_kind,score", 0) != 0)
        throw Error(ErrorCode::ConfigInvalid, "scores file lacks the expected header");
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            f.push_back(cell);
        if (f.size() != 4)
            throw Error(ErrorCode::ConfigInvalid, "malformed score line: " + line);
        try {
            out.push_back({std::stoull(f[0]), f[1], parse_score_tag(f[2]), std::stod(f[3])});
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::ConfigInvalid, "malformed score line: " + line);
        }
    }
    return out;
}

std::string trace_csv(std::span<const EpochRecord> trace)
{
    std::ostringstream out;
    out << "epoch,L_ce,L_uni,L_bin,total,lr\n";
    for (const auto& r : trace)
        out << r.epoch << ',' << num(r.ce) << ',' << num(r.uni) << ',' << num(r.bin) << ','
            << num(r.total) << ',' << num(r.learning_rate) << '\n';
    return out.str();
}

namespace {

struct TrainOptions {
    TrainConfig cfg;
    bool random_init = false;
    std::vector<std::string> substitute;
    std::string outlier_path;

    void bind(CLI::App& app)
    {
        app.add_option("--gamma", cfg.gamma, "weight of the uniformity loss")->capture_default_str();
        app.add_option("--lambda", cfg.lambda, "weight of the binary loss")->capture_default_str();
        app.add_option("--lr", cfg.learning_rate, "initial learning rate")->capture_default_str();
        app.add_option("--epochs", cfg.epochs)->capture_default_str();
        app.add_option("--momentum", cfg.momentum)->capture_default_str();
        app.add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
        app.add_option("--batch-size", cfg.batch_size, "image embeddings per batch (even)")
            ->capture_default_str();
        app.add_option("--shots", cfg.shots_per_class, "few-shot images per class")
            ->capture_default_str();
        app.add_option("--refresh", cfg.refresh_fraction, "queue fraction replaced per iteration")
            ->capture_default_str();
        app.add_option("--samples", cfg.region_samples, "Gaussian draws per class")
            ->capture_default_str();
        app.add_option("--queue-capacity", cfg.queue_capacity)->capture_default_str();
        app.add_option("--num-ood", cfg.num_ood, "OOD context rows")->capture_default_str();
        app.add_option("--tau", cfg.temperature, "softmax temperature")->capture_default_str();
        app.add_flag("--random-init", random_init, "random ID rows instead of class means");
        app.add_flag("--no-uni", cfg.disable_uni, "drop the uniformity loss");
        app.add_flag("--no-bin", cfg.disable_bin, "drop the binary loss");
        app.add_flag("--no-ood-context", cfg.no_ood_context, "train without OOD context rows");
        app.add_option("--global-substitute", substitute,
                       "replace h with global image embeddings in these losses")
            ->check(CLI::IsMember({"ce", "uni", "bin"}))
            ->delimiter(',');
        app.add_option("--outlier-emb", outlier_path, "EMB1 outliers replacing the low regions");
    }

    TrainConfig resolved(std::uint64_t seed) const
    {
        TrainConfig c = cfg;
        c.seed = seed;
        c.warm_start = !random_init;
        for (const auto& s : substitute) {
            c.substitute_ce |= s == "ce";
            c.substitute_uni |= s == "uni";
            c.substitute_bin |= s == "bin";
        }
        return c;
    }

    std::optional<fs::path> outliers() const
    {
        if (outlier_path.empty())
            return std::nullopt;
        return fs::path(outlier_path);
    }
};

struct ScoreOptions {
    std::string kind;
    std::string near_kind = "mcm";
    std::string far_kind = "d_energy";
    double temperature = 1.0;
    CLI::Option* far_opt = nullptr;

    void bind(CLI::App& app)
    {
        app.add_option("--kind", kind, "single score kind for every split");
        app.add_option("--near-kind", near_kind, "score kind for near-OOD splits")
            ->capture_default_str();
        far_opt = app.add_option("--far-kind", far_kind, "score kind for far-OOD splits")
                      ->capture_default_str();
        app.add_option("--energy-temperature", temperature)->capture_default_str();
    }

    ScoreRecipe recipe(const ContextBank& bank) const
    {
        ScoreRecipe r;
        r.temperature = temperature;
        if (!kind.empty()) {
            r.all = parse_score_tag(kind);
            return r;
        }
        r.near_kind = parse_score_tag(near_kind);
        r.far_kind = parse_score_tag(far_kind);
        // Without OOD rows the default far-OOD score falls back to plain energy.
        if (bank.num_ood() == 0 && far_opt->count() == 0 && r.far_kind == ScoreTag::DEnergy)
            r.far_kind = ScoreTag::EnergyId;
        return r;
    }
};

void run_synth(const SynthConfig& cfg, const fs::path& dir, ArtifactTracker& t, std::ostream& out)
{
    const SynthWorld world = synth_world(cfg);
    for (const auto& [role, ds] : world.splits) {
        std::string file = role;
        for (char& c : file)
            if (c == ':')
                c = '_';
        t.add(dir / (file + ".emb"));
    }
    t.add(dir / "manifest.txt");
    write_world(world, dir);
    out << "synth: wrote " << world.splits.size() << " splits to " << dir.string() << '\n';
}

void run_fit(const Manifest& m, const TrainConfig& cfg, const fs::path& dir, ArtifactTracker& t,
             std::ostream& out)
{
    const TrainData data = load_train_data(m, std::nullopt);
    std::vector<std::vector<Vector>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.embeddings.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(data.embeddings[i]);

    Rng rng(cfg.seed);
    Rng queue_rng = rng.split(2);
    std::vector<EmbeddingQueue> queues;
    for (std::size_t c = 0; c < data.num_classes; ++c)
        queues.push_back(
            bootstrap_queue(static_cast<int>(c), cfg.queue_capacity, by_class[c], queue_rng));
    const auto gaussians = fit_all(queues);
    Rng region_rng = rng.split(5);
    const RegionSets regions = build_region_sets(gaussians, cfg.region_samples, region_rng);

    std::ostringstream csv;
    csv << "class,count,ridge,logdet,trace,mean_norm\n";
    for (std::size_t c = 0; c < gaussians.size(); ++c) {
        const auto& g = gaussians[c];
        double trace = 0.0;
        for (std::size_t i = 0; i < g.dim(); ++i)
            trace += g.covariance(i, i);
        csv << c << ',' << queues[c].entries.size() << ',' << num(g.ridge) << ','
            << num(g.logdet) << ',' << num(trace) << ',' << num(norm(g.mean)) << '\n';
    }

    auto region_file = [&](const std::vector<Vector>& vs) {
        EmbDataset ds;
        ds.dim = vs.front().size();
        ds.globals = vs;
        for (std::size_t c = 0; c < vs.size(); ++c)
            ds.labels.push_back(static_cast<int>(c));
        return ds;
    };
    fs::create_directories(dir);
    write_file_text(t.add(dir / "gaussians.csv"), csv.str());
    write_emb(t.add(dir / "regions_high.emb"), region_file(regions.high));
    write_emb(t.add(dir / "regions_low.emb"), region_file(regions.low));
    out << "fit: " << gaussians.size() << " class Gaussians, regions from " << cfg.region_samples
        << " draws each\n";
}

ContextBank run_train(const Manifest& m, const TrainConfig& cfg,
                      const std::optional<fs::path>& outliers, const fs::path& model_path,
                      const fs::path& trace_path, ArtifactTracker& t, std::ostream& out)
{
    const TrainData data = load_train_data(m, outliers);
    const TrainResult result = train(data, cfg);
    save_bank(result.bank, t.add(model_path));
    if (!trace_path.empty())
        write_file_text(t.add(trace_path), trace_csv(result.trace));
    out << "train: C=" << result.bank.num_classes() << " M=" << result.bank.num_ood()
        << " D=" << result.bank.dim() << " epochs=" << cfg.epochs;
    if (!result.trace.empty())
        out << " final loss=" << num(result.trace.back().total);
    out << '\n';
    return result.bank;
}

std::vector<ScoredSample> run_score(const Manifest& m, const ContextBank& bank,
                                    const ScoreRecipe& recipe, const fs::path& path,
                                    ArtifactTracker& t, std::ostream& out)
{
    auto scores = score_manifest(m, bank, recipe);
    write_file_text(t.add(path), scores_csv(scores));
    out << "score: " << scores.size() << " rows\n";
    return scores;
}

EvalReport run_eval(const Manifest& m, const ContextBank& bank,
                    std::span<const ScoredSample> scores, const fs::path& csv_path,
                    const fs::path& table_path, ArtifactTracker& t, std::ostream& out)
{
    const EvalReport report = evaluate_scores(scores, manifest_accuracy(m, bank));
    if (!csv_path.empty())
        write_file_text(t.add(csv_path), report_csv(report));
    const std::string table = report_table(report);
    if (!table_path.empty())
        write_file_text(t.add(table_path), table);
    out << table;
    return report;
}

std::vector<ScoredSample> read_scores(const fs::path& p)
{
    const auto bytes = read_file_bytes(p);
    return parse_scores_csv(std::string_view(bytes.data(), bytes.size()));
}

std::vector<ScoredSample> filter_kind(std::span<const ScoredSample> scores, ScoreTag tag)
{
    std::vector<ScoredSample> out;
    for (const auto& s : scores)
        if (s.kind == tag)
            out.push_back(s);
    return out;
}

std::set<ScoreTag> kinds_in(std::span<const ScoredSample> scores)
{
    std::set<ScoreTag> kinds;
    for (const auto& s : scores)
        kinds.insert(s.kind);
    return kinds;
}

void add_synth_options(CLI::App& app, SynthConfig& cfg)
{
    app.add_option("--classes", cfg.classes)->capture_default_str();
    app.add_option("--dim", cfg.dim)->capture_default_str();
    app.add_option("--train-per-class", cfg.train_per_class)->capture_default_str();
    app.add_option("--test-per-class", cfg.test_per_class)->capture_default_str();
    app.add_option("--csid-per-class", cfg.csid_per_class)->capture_default_str();
    app.add_option("--near-classes", cfg.near_classes)->capture_default_str();
    app.add_option("--near-per-class", cfg.near_per_class)->capture_default_str();
    app.add_option("--far-classes", cfg.far_classes)->capture_default_str();
    app.add_option("--far-per-class", cfg.far_per_class)->capture_default_str();
    app.add_option("--radius", cfg.radius)->capture_default_str();
    app.add_option("--within-scale", cfg.within_scale)->capture_default_str();
    app.add_option("--csid-cov-factor", cfg.csid_cov_factor)->capture_default_str();
    app.add_option("--csid-jitter", cfg.csid_jitter)->capture_default_str();
    app.add_option("--near-mix", cfg.near_mix)->capture_default_str();
    app.add_option("--near-noise", cfg.near_noise)->capture_default_str();
    app.add_option("--far-cov-factor", cfg.far_cov_factor)->capture_default_str();
    app.add_option("--far-mean-shift", cfg.far_mean_shift)->capture_default_str();
    app.add_option("--locals", cfg.locals_per_sample, "local embeddings per sample")
        ->capture_default_str();
}

// Options given on the command line win over the file.
void apply_config(CLI::App& sub, const std::string& path)
{
    if (path.empty())
        return;
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::ConfigInvalid, "cannot open config file " + path);
    for (const CLI::ConfigItem& item : CLI::ConfigINI().from_config(in)) {
        if (item.name == "++" || item.name == "--")
            continue;
        CLI::Option* opt = nullptr;
        try {
            opt = sub.get_option("--" + item.fullname());
        } catch (const CLI::OptionNotFound&) {
            throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + item.fullname() + "'");
        }
        if (opt->count() > 0)
            continue;
        opt->add_result(item.inputs);
        opt->run_callback();
    }
}

} // namespace

int cli_run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Likelihood-aware context learning for full-spectrum OOD detection"};
    app.require_subcommand(1);

    std::uint64_t seed = 7;

    // synth
    SynthConfig synth_cfg;
    std::string synth_dir;
    bool synth_f32 = false;
    auto* synth = app.add_subcommand("synth", "generate the synthetic full-spectrum world");
    synth->add_option("--out-dir", synth_dir)->required();
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_flag("--f32", synth_f32, "store embeddings as f32");
    add_synth_options(*synth, synth_cfg);

    // fit
    std::string manifest_path;
    std::string fit_dir;
    TrainOptions fit_opts;
    auto* fit = app.add_subcommand("fit", "fit class Gaussians and export the region sets");
    fit->add_option("--manifest", manifest_path)->required();
    fit->add_option("--out-dir", fit_dir)->required();
    fit->add_option("--seed", seed)->capture_default_str();
    fit->add_option("--queue-capacity", fit_opts.cfg.queue_capacity)->capture_default_str();
    fit->add_option("--samples", fit_opts.cfg.region_samples)->capture_default_str();

    // train
    TrainOptions train_opts;
    std::string model_path;
    std::string trace_path;
    auto* trainc = app.add_subcommand("train", "learn ID and OOD context rows");
    std::string config_path;
    trainc->add_option("--config", config_path, "key = value file of training options")
        ->check(CLI::ExistingFile);
    trainc->add_option("--manifest", manifest_path)->required();
    trainc->add_option("--model", model_path, "output LSA1 model file")->required();
    trainc->add_option("--trace", trace_path, "per-epoch loss CSV");
    trainc->add_option("--seed", seed)->capture_default_str();
    train_opts.bind(*trainc);

    // score
    ScoreOptions score_opts;
    std::string scores_path;
    auto* score = app.add_subcommand("score", "score every test split");
    score->add_option("--manifest", manifest_path)->required();
    score->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    score->add_option("--out", scores_path)->required();
    score_opts.bind(*score);

    // eval
    std::string report_csv_path;
    std::string report_table_path;
    auto* eval = app.add_subcommand("eval", "detection metrics and accuracy");
    eval->add_option("--manifest", manifest_path)->required();
    eval->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--out-csv", report_csv_path);
    eval->add_option("--out-table", report_table_path);

    // export-hist
    std::size_t bins = 50;
    std::string hist_path;
    std::string hist_kind;
    auto* hist = app.add_subcommand("export-hist", "score histograms per split group");
    hist->add_option("--scores", scores_path)->required()->check(CLI::ExistingFile);
    hist->add_option("--out", hist_path)->required();
    hist->add_option("--bins", bins)->capture_default_str();
    hist->add_option("--kind", hist_kind, "score kind to histogram");

    // pipeline
    bool synth_default = false;
    std::string out_dir;
    TrainOptions pipe_train;
    ScoreOptions pipe_score;
    auto* pipe = app.add_subcommand("pipeline", "synth (optional), fit, train, score, eval, export-hist");
    pipe->add_option("--config", config_path, "key = value file of pipeline options")
        ->check(CLI::ExistingFile);
    auto* synth_flag = pipe->add_flag("--synth-default", synth_default,
                                      "generate the default synthetic world first");
    pipe->add_option("--manifest", manifest_path)->excludes(synth_flag);
    pipe->add_option("--out-dir", out_dir)->required();
    pipe->add_option("--seed", seed)->capture_default_str();
    pipe->add_option("--bins", bins)->capture_default_str();
    pipe_train.bind(*pipe);
    pipe_score.bind(*pipe);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (trainc->parsed())
            apply_config(*trainc, config_path);
        else if (pipe->parsed())
            apply_config(*pipe, config_path);
        ArtifactTracker tracker;
        if (synth->parsed()) {
            synth_cfg.seed = seed;
            synth_cfg.precision = synth_f32 ? Precision::F32 : Precision::F64;
            run_synth(synth_cfg, synth_dir, tracker, out);
        } else if (fit->parsed()) {
            TrainConfig cfg = fit_opts.cfg;
            cfg.seed = seed;
            run_fit(read_manifest(manifest_path), cfg, fit_dir, tracker, out);
        } else if (trainc->parsed()) {
            run_train(read_manifest(manifest_path), train_opts.resolved(seed), train_opts.outliers(),
                      model_path, trace_path, tracker, out);
        } else if (score->parsed()) {
            const ContextBank bank = load_bank(model_path);
            run_score(read_manifest(manifest_path), bank, score_opts.recipe(bank), scores_path,
                      tracker, out);
        } else if (eval->parsed()) {
            run_eval(read_manifest(manifest_path), load_bank(model_path), read_scores(scores_path),
                     report_csv_path, report_table_path, tracker, out);
        } else if (hist->parsed()) {
            auto scores = read_scores(scores_path);
            const auto kinds = kinds_in(scores);
            if (!hist_kind.empty())
                scores = filter_kind(scores, parse_score_tag(hist_kind));
            else if (kinds.size() > 1)
                throw Error(ErrorCode::ConfigInvalid,
                            "scores hold several kinds; choose one with --kind");
            export_histograms(scores, bins, tracker.add(hist_path));
        } else if (pipe->parsed()) {
            const fs::path dir = out_dir;
            fs::create_directories(dir);
            fs::path manifest_file = manifest_path;
            if (synth_default) {
                SynthConfig cfg;
                cfg.seed = seed;
                run_synth(cfg, dir / "world", tracker, out);
                manifest_file = dir / "world" / "manifest.txt";
            } else if (manifest_file.empty()) {
                throw Error(ErrorCode::ConfigInvalid, "pipeline needs --manifest or --synth-default");
            }
            const Manifest m = read_manifest(manifest_file);
            const TrainConfig cfg = pipe_train.resolved(seed);
            run_fit(m, cfg, dir / "fit", tracker, out);
            const ContextBank bank = run_train(m, cfg, pipe_train.outliers(), dir / "model.lsa",
                                               dir / "trace.csv", tracker, out);
            const auto scores =
                run_score(m, bank, pipe_score.recipe(bank), dir / "scores.csv", tracker, out);
            run_eval(m, bank, scores, dir / "report.csv", dir / "report.txt", tracker, out);
            for (ScoreTag tag : kinds_in(scores)) {
                const fs::path p = dir / ("hist_" + std::string(to_string(tag)) + ".csv");
                export_histograms(filter_kind(scores, tag), bins, tracker.add(p));
            }
        }
        tracker.commit();
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    std::vector<const char*> argv;
    argv.push_back("lsa");
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return cli_run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace lsa
