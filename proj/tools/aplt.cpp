// Command-line driver: gen, train, eval, compare, ablate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
// Relative output paths are placed under $APLT_OUTPUT_ROOT when it is set.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aplt/aplt.hpp"

namespace fs = std::filesystem;
using namespace aplt;
using nlohmann::ordered_json;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

/// Raised for problems with the user's inputs, mapped to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path output_path(const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return path;
    if (const char* root = std::getenv("APLT_OUTPUT_ROOT"); root != nullptr && *root != '\0')
        return fs::path(root) / path;
    return path;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::io_error, "cannot write " + path.string());
    f << text;
    if (!f) throw Error(ErrorKind::io_error, "write failed for " + path.string());
}

struct ConfigArgs {
    std::string file;
    std::string preset = "default";
    std::vector<std::string> overrides;
    std::string data;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", file, "JSON config file");
        cmd->add_option("--preset", preset, "named overlay: default, ma12, hard, easy");
        cmd->add_option("--set", overrides, "override section.key=value (repeatable)");
        cmd->add_option("--data", data, "CSV dataset; shorthand for data.source=csv data.path=<file>");
    }

    /// Defaults, then preset, then file, then --data, then --set, in that order.
    ordered_json resolve() const {
        try {
            ordered_json j = config::resolve(config::preset(preset));
            if (!file.empty()) config::detail::merge(j, config::load_file(file), "");
            if (!data.empty()) {
                config::apply_override(j, "data.source=csv");
                j["data"]["path"] = data;
            }
            for (const auto& o : overrides) config::apply_override(j, o);
            config::from_json(j);
            return j;
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    }
};

engine::PreparedData load_data(const engine::RunConfig& cfg) {
    if (cfg.data.kind == engine::DataSource::Kind::csv && !fs::exists(cfg.data.path))
        throw UsageError("dataset not found: '" + cfg.data.path + "'");
    try {
        return engine::prepare_data(cfg);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

engine::Mode parse_mode(const std::string& s) {
    if (s == "aplt") return engine::Mode::aplt;
    if (s == "fixmatch") return engine::Mode::fixmatch;
    if (s == "supervised") return engine::Mode::supervised;
    throw UsageError("unknown mode '" + s + "'");
}

std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

// ---- gen --------------------------------------------------------------------

struct GenArgs {
    std::string preset = "ma12";
    std::optional<int> classes, dim, n_per_class;
    std::optional<double> overlap, labeled_ratio;
    std::uint64_t seed = 1;
    std::string out = "dataset.csv";
};

int cmd_gen(const GenArgs& a) {
    ordered_json d;
    try {
        d = config::resolve(config::preset(a.preset))["data"];
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const int C = a.classes.value_or(d["classes"].get<int>());
    const int dim = a.dim.value_or(d["dim"].get<int>());
    const int n = a.n_per_class.value_or(d["n_per_class"].get<int>());
    const double overlap = a.overlap.value_or(d["overlap"].get<double>());

    data::FeatureDataset ds;
    try {
        ds = data::generate_synthetic(C, dim, n, overlap, a.seed);
        if (a.labeled_ratio) ds = data::apply_split(ds, {*a.labeled_ratio, a.seed, true});
    } catch (const Error& e) {
        throw UsageError(e.what());
    }

    const std::string csv = data::to_csv(ds);
    Fnv1a h;
    h.bytes(csv.data(), csv.size());

    const fs::path path = output_path(a.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_text(path, csv);

    ordered_json manifest;
    manifest["file"] = path.filename().string();
    manifest["preset"] = a.preset;
    manifest["classes"] = C;
    manifest["dim"] = dim;
    manifest["n_per_class"] = n;
    manifest["overlap"] = overlap;
    manifest["seed"] = a.seed;
    manifest["labeled_ratio"] = a.labeled_ratio ? ordered_json(*a.labeled_ratio) : ordered_json(nullptr);
    manifest["rows"] = ds.size();
    manifest["checksum_fnv1a"] = hex64(h.value());
    write_text(path.string() + ".manifest.json", manifest.dump(2) + "\n");
    std::cout << path.string() << " " << ds.size() << " rows, checksum " << hex64(h.value()) << "\n";
    return 0;
}

// ---- train ------------------------------------------------------------------

int cmd_train(const ConfigArgs& ca, const std::string& mode_name, const std::string& out_flag) {
    const ordered_json resolved = ca.resolve();
    const auto cfg = config::from_json(resolved);
    const auto mode = parse_mode(mode_name);
    const auto data = load_data(cfg);
    const fs::path dir = output_path(out_flag.empty() ? cfg.output_dir : out_flag);

    const auto result = engine::run(data.train, data.test, cfg, mode);

    fs::create_directories(dir);
    write_text(dir / "resolved_config.json", resolved.dump(2) + "\n");
    write_text(dir / "metrics.ndjson", metrics::to_ndjson(result.metrics));
    write_text(dir / "summary.csv", metrics::summary_csv_header() + metrics::summary_csv_row(result.metrics));
    checkpoint::save((dir / "checkpoint.txt").string(), result.model, result.bank ? &*result.bank : nullptr);

    std::cout << "mode " << result.metrics.mode << " seed " << cfg.seed << " test_acc "
              << format_double(result.metrics.final_test_acc) << " -> " << dir.string() << "\n";
    return 0;
}

// ---- eval -------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data_path) {
    if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: '" + ckpt_path + "'");
    if (!fs::exists(data_path)) throw UsageError("dataset not found: '" + data_path + "'");
    checkpoint::Checkpoint ck;
    data::FeatureDataset ds;
    try {
        ck = checkpoint::load(ckpt_path);
        ds = data::load_csv(data_path, static_cast<int>(ck.model.shape.num_classes));
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (ds.dim() != ck.model.shape.input_dim)
        throw UsageError("dataset has " + std::to_string(ds.dim()) + " features, model expects " +
                         std::to_string(ck.model.shape.input_dim));
    const auto acc = engine::evaluate(ck.model, ck.bank ? &*ck.bank : nullptr, ds.features, ds.true_labels);
    ordered_json j;
    j["rows"] = ds.size();
    j["proto_acc"] = acc.proto ? ordered_json(*acc.proto) : ordered_json(nullptr);
    j["param_acc"] = acc.param;
    std::cout << j.dump() << "\n";
    return 0;
}

// ---- compare ----------------------------------------------------------------

// trajectory.csv columns:
//   method        fixmatch | aplt
//   seed          run seed
//   epoch         0-based epoch index
//   phase         warmup | main
//   pseudo_source fixmatch: thresholded weak-view predictions of this epoch;
//                 offline: the frozen clustering pseudo-labels in force
//   coverage      fraction of unlabeled samples carrying a pseudo-label
//   pseudo_acc    accuracy of those pseudo-labels (evaluation only), empty if none
//   test_acc      held-out accuracy (prototype classifier once a bank exists)
constexpr const char* kTrajectoryHeader = "method,seed,epoch,phase,pseudo_source,coverage,pseudo_acc,test_acc\n";

std::string trajectory_rows(const engine::RunMetrics& m) {
    std::string out;
    for (const auto& e : m.epochs) {
        const bool offline = e.active_coverage.has_value();
        const double coverage =
            offline ? *e.active_coverage
                    : (e.unlabeled_seen ? static_cast<double>(e.pass_count) / static_cast<double>(e.unlabeled_seen)
                                        : 0.0);
        const auto pacc = offline ? e.active_pseudo_acc : e.fixmatch_pseudo_acc;
        out += m.mode + "," + std::to_string(m.seed) + "," + std::to_string(e.epoch) + "," + e.phase + "," +
               (offline ? "offline" : "fixmatch") + "," + format_double(coverage) + "," + opt_csv(pacc) + "," +
               format_double(e.proto_acc ? *e.proto_acc : e.param_acc) + "\n";
    }
    return out;
}

int cmd_compare(const ConfigArgs& ca, std::size_t seeds, std::uint64_t first_seed, const std::string& out_flag) {
    const ordered_json resolved = ca.resolve();
    const auto base = config::from_json(resolved);
    const fs::path dir = output_path(out_flag.empty() ? base.output_dir : out_flag);

    std::string traj = kTrajectoryHeader;
    std::string summary = "method,seed,test_acc,final_pseudo_acc\n";
    std::map<std::string, std::pair<double, double>> sums;
    std::map<std::string, std::size_t> pacc_n;
    for (std::size_t k = 0; k < seeds; ++k) {
        const auto cfg = engine::with_seed(base, first_seed + k);
        const auto data = load_data(cfg);
        for (auto mode : {engine::Mode::fixmatch, engine::Mode::aplt}) {
            const auto r = engine::run(data.train, data.test, cfg, mode);
            traj += trajectory_rows(r.metrics);
            std::optional<double> pacc;
            if (mode == engine::Mode::aplt && !r.metrics.offline.empty()) pacc = r.metrics.offline.back().pseudo_acc;
            if (mode == engine::Mode::fixmatch) pacc = r.metrics.epochs.back().fixmatch_pseudo_acc;
            auto& s = sums[r.metrics.mode];
            s.first += r.metrics.final_test_acc;
            if (pacc) {
                s.second += *pacc;
                ++pacc_n[r.metrics.mode];
            }
            summary += r.metrics.mode + "," + std::to_string(cfg.seed) + "," +
                       format_double(r.metrics.final_test_acc) + "," + opt_csv(pacc) + "\n";
        }
    }
    fs::create_directories(dir);
    write_text(dir / "resolved_config.json", resolved.dump(2) + "\n");
    write_text(dir / "trajectory.csv", traj);
    write_text(dir / "compare_summary.csv", summary);
    for (const auto& [mode, s] : sums) {
        const auto n = pacc_n[mode];
        std::cout << mode << ": mean test_acc " << format_double(s.first / static_cast<double>(seeds))
                  << ", mean final pseudo_acc "
                  << (n ? format_double(s.second / static_cast<double>(n)) : std::string("n/a")) << "\n";
    }
    return 0;
}

// ---- ablate -----------------------------------------------------------------

int cmd_ablate(const ConfigArgs& ca, std::size_t seeds, std::uint64_t first_seed, const std::string& out_flag,
               bool force) {
    const ordered_json resolved = ca.resolve();
    const auto base = config::from_json(resolved);
    const fs::path dir = output_path(out_flag.empty() ? base.output_dir : out_flag);

    std::vector<engine::AblationRow> rows;
    for (std::size_t k = 0; k < seeds; ++k) {
        const auto cfg = engine::with_seed(base, first_seed + k);
        const auto data = load_data(cfg);
        for (auto& r : engine::run_ablation_grid(data.train, data.test, cfg)) rows.push_back(std::move(r));
    }

    fs::create_directories(dir);
    const fs::path csv = dir / "ablation.csv";
    const bool fresh = force || !fs::exists(csv);
    std::ofstream f(csv, fresh ? std::ios::binary | std::ios::trunc : std::ios::binary | std::ios::app);
    if (!f) throw Error(ErrorKind::io_error, "cannot write " + csv.string());
    if (fresh) f << "row,seed,test_acc,proto_acc,param_acc,final_coverage,final_pseudo_acc\n";
    std::map<std::string, std::pair<double, std::size_t>> means;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        f << r.name << ',' << r.seed << ',' << format_double(r.test_acc) << ',' << opt_csv(r.proto_acc) << ','
          << format_double(r.param_acc) << ',' << opt_csv(r.final_coverage) << ',' << opt_csv(r.final_pseudo_acc)
          << '\n';
        if (!means.count(r.name)) order.push_back(r.name);
        means[r.name].first += r.test_acc;
        ++means[r.name].second;
    }
    if (!f) throw Error(ErrorKind::io_error, "write failed for " + csv.string());
    write_text(dir / "resolved_config.json", resolved.dump(2) + "\n");
    for (const auto& name : order)
        std::cout << name << ": mean test_acc "
                  << format_double(means[name].first / static_cast<double>(means[name].second)) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised training with asynchronous pseudo-labeling and prototype learning"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate a synthetic Gaussian-mixture dataset as CSV");
    g->add_option("--preset", gen.preset, "ma12, hard, easy or default");
    g->add_option("--classes", gen.classes, "number of classes");
    g->add_option("--dim", gen.dim, "feature dimension");
    g->add_option("--n-per-class", gen.n_per_class, "rows per class");
    g->add_option("--overlap", gen.overlap, "noise sigma over the closest class-mean distance");
    g->add_option("--labeled-ratio", gen.labeled_ratio, "mark a stratified labeled subset");
    g->add_option("--seed", gen.seed, "generator seed");
    g->add_option("-o,--out", gen.out, "output CSV path");

    ConfigArgs train_cfg;
    std::string train_mode = "aplt", train_out;
    auto* t = app.add_subcommand("train", "train one model and write metrics and a checkpoint");
    train_cfg.attach(t);
    t->add_option("--mode", train_mode, "aplt, fixmatch or supervised");
    t->add_option("-o,--out", train_out, "output directory (default: output_dir from the config)");

    std::string eval_ckpt, eval_data;
    auto* e = app.add_subcommand("eval", "score a checkpoint on a labeled CSV");
    e->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    e->add_option("--data", eval_data, "CSV dataset")->required();

    ConfigArgs cmp_cfg;
    std::size_t cmp_seeds = 5;
    std::uint64_t cmp_first = 0;
    std::string cmp_out;
    auto* c = app.add_subcommand("compare", "FixMatch vs APLT pseudo-label trajectories over seeds");
    cmp_cfg.attach(c);
    c->add_option("--seeds", cmp_seeds, "number of seeds");
    c->add_option("--first-seed", cmp_first, "first seed");
    c->add_option("-o,--out", cmp_out, "output directory");

    ConfigArgs abl_cfg;
    std::size_t abl_seeds = 5;
    std::uint64_t abl_first = 0;
    std::string abl_out;
    bool abl_force = false;
    auto* a = app.add_subcommand("ablate", "run the seven-row ablation grid over seeds");
    abl_cfg.attach(a);
    a->add_option("--seeds", abl_seeds, "number of seeds");
    a->add_option("--first-seed", abl_first, "first seed");
    a->add_option("-o,--out", abl_out, "output directory");
    a->add_flag("--force", abl_force, "overwrite ablation.csv instead of appending");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        if (g->parsed()) return cmd_gen(gen);
        if (t->parsed()) return cmd_train(train_cfg, train_mode, train_out);
        if (e->parsed()) return cmd_eval(eval_ckpt, eval_data);
        if (c->parsed()) return cmd_compare(cmp_cfg, cmp_seeds, cmp_first, cmp_out);
        if (a->parsed()) return cmd_ablate(abl_cfg, abl_seeds, abl_first, abl_out, abl_force);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
