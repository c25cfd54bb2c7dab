#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "engine.hpp"
#include "error.hpp"
#include "json.hpp"

namespace aplt::config {

using nlohmann::ordered_json;

/// Every accepted key with its default value. Config files and `--set`
/// overrides may only touch keys that appear here.
inline ordered_json defaults() {
    return ordered_json::parse(R"({
  "seed": 0,
  "output_dir": "out",
  "data": {"source": "synthetic", "path": "", "classes": 12, "dim": 32, "n_per_class": 100,
           "overlap": 0.35, "seed": 1, "test_fraction": 0.2},
  "split": {"labeled_ratio": 0.1, "seed": 0, "stratified": true},
  "augment": {"weak_sigma": 0.05, "strong_sigma": 0.2, "strong_mask_prob": 0.1},
  "fixmatch": {"tau": 0.95, "batch_size": 64},
  "cluster": {"max_iters": 100, "tol": 1e-6, "aug_copies": 3, "use_labeled_aug": true,
              "use_adaptive_threshold": true, "method": "sskm", "prototype_members": "filtered"},
  "margin": {"temperature": 0.1, "lambda": 1.0, "view": "strong"},
  "schedule": {"warmup_epochs": 15, "main_epochs": 40, "offline_every": 10, "sync_mode": false,
               "offline_enabled": true},
  "model": {"hidden": 64, "embed": 32, "feature_norm": true},
  "optim": {"lr": 0.002, "momentum": 0.9, "weight_decay": 0.0005}
})");
}

/// Named overlays applied on top of the defaults. "hard" and "easy" are the
/// synthetic benchmarks used for the end-to-end comparisons; they raise the
/// learning rate and lower tau because the defaults barely move a small MLP
/// in 55 epochs.
inline std::vector<std::string> preset_names() { return {"default", "ma12", "hard", "easy"}; }

inline ordered_json preset(const std::string& name) {
    if (name == "default" || name == "ma12") return ordered_json::object();
    if (name == "hard")
        return ordered_json::parse(R"({"data": {"overlap": 0.30}, "optim": {"lr": 0.1}, "fixmatch": {"tau": 0.9}})");
    if (name == "easy")
        return ordered_json::parse(R"({"data": {"overlap": 0.10}, "optim": {"lr": 0.1}, "fixmatch": {"tau": 0.9}})");
    throw Error(ErrorKind::config_error, "unknown preset '" + name + "'");
}

namespace detail {

inline bool compatible(const ordered_json& schema, const ordered_json& value) {
    if (schema.is_number()) return value.is_number();
    if (schema.is_boolean()) return value.is_boolean();
    if (schema.is_string()) return value.is_string();
    if (schema.is_object()) return value.is_object();
    return schema.type() == value.type();
}

inline void merge(ordered_json& base, const ordered_json& overlay, const std::string& prefix) {
    if (!overlay.is_object()) throw Error(ErrorKind::config_error, "expected an object at '" + prefix + "'");
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw Error(ErrorKind::config_error, "unknown config key '" + key + "'");
        auto& slot = base[it.key()];
        if (!compatible(slot, it.value()))
            throw Error(ErrorKind::config_error, "wrong type for '" + key + "'");
        if (slot.is_object()) merge(slot, it.value(), key);
        else slot = it.value();
    }
}

template <typename T>
T get(const ordered_json& j, const char* section, const char* key) {
    const auto& v = j.at(section).at(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw Error(ErrorKind::config_error, std::string(section) + "." + key + " must be an integer");
        if (v.get<long long>() < 0)
            throw Error(ErrorKind::config_error, std::string(section) + "." + key + " must be >= 0");
    }
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw Error(ErrorKind::config_error, std::string(section) + "." + key + " must be an integer");
    }
    return v.get<T>();
}

}  // namespace detail

/// Defaults overlaid with `user`; unknown keys and type mismatches throw.
inline ordered_json resolve(const ordered_json& user) {
    ordered_json out = defaults();
    detail::merge(out, user, "");
    return out;
}

/// Applies one `section.key=value` override. The value is read as JSON when
/// it parses, otherwise as a bare string.
inline void apply_override(ordered_json& resolved, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorKind::config_error, "override '" + assignment + "' is not key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    ordered_json value = ordered_json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    ordered_json overlay = value;
    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        ordered_json wrap = ordered_json::object();
        wrap[*it] = std::move(overlay);
        overlay = std::move(wrap);
    }
    detail::merge(resolved, overlay, "");
}

inline engine::RunConfig from_json(const ordered_json& j) {
    using detail::get;
    engine::RunConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.output_dir = j.at("output_dir").get<std::string>();

    const auto source = get<std::string>(j, "data", "source");
    if (source == "synthetic") c.data.kind = engine::DataSource::Kind::synthetic;
    else if (source == "csv") c.data.kind = engine::DataSource::Kind::csv;
    else throw Error(ErrorKind::config_error, "data.source must be 'synthetic' or 'csv'");
    c.data.path = get<std::string>(j, "data", "path");
    c.data.classes = get<int>(j, "data", "classes");
    c.data.dim = get<int>(j, "data", "dim");
    c.data.n_per_class = get<int>(j, "data", "n_per_class");
    c.data.overlap = get<double>(j, "data", "overlap");
    c.data.seed = get<std::uint64_t>(j, "data", "seed");
    c.data.test_fraction = get<double>(j, "data", "test_fraction");

    c.split.labeled_ratio = get<double>(j, "split", "labeled_ratio");
    c.split.seed = get<std::uint64_t>(j, "split", "seed");
    c.split.stratified = get<bool>(j, "split", "stratified");

    c.augment.weak_sigma = get<double>(j, "augment", "weak_sigma");
    c.augment.strong_sigma = get<double>(j, "augment", "strong_sigma");
    c.augment.strong_mask_prob = get<double>(j, "augment", "strong_mask_prob");

    c.fixmatch.tau = get<double>(j, "fixmatch", "tau");
    c.fixmatch.batch_size = get<std::size_t>(j, "fixmatch", "batch_size");

    c.cluster.max_iters = get<std::size_t>(j, "cluster", "max_iters");
    c.cluster.tol = get<double>(j, "cluster", "tol");
    c.cluster.aug_copies = get<std::size_t>(j, "cluster", "aug_copies");
    c.cluster.use_labeled_aug = get<bool>(j, "cluster", "use_labeled_aug");
    c.cluster.use_adaptive_threshold = get<bool>(j, "cluster", "use_adaptive_threshold");
    const auto method = get<std::string>(j, "cluster", "method");
    if (method == "sskm") c.cluster.method = cluster::Method::semi_supervised;
    else if (method == "kmeans") c.cluster.method = cluster::Method::plain_kmeans;
    else throw Error(ErrorKind::config_error, "cluster.method must be 'sskm' or 'kmeans'");
    const auto members = get<std::string>(j, "cluster", "prototype_members");
    if (members == "filtered") c.cluster.prototype_members = cluster::PrototypeMembers::filtered;
    else if (members == "all") c.cluster.prototype_members = cluster::PrototypeMembers::all;
    else throw Error(ErrorKind::config_error, "cluster.prototype_members must be 'filtered' or 'all'");

    c.margin.temperature = get<double>(j, "margin", "temperature");
    c.margin.lambda = get<double>(j, "margin", "lambda");
    const auto view = get<std::string>(j, "margin", "view");
    if (view == "strong") c.margin.view = proto::View::strong;
    else if (view == "weak") c.margin.view = proto::View::weak;
    else throw Error(ErrorKind::config_error, "margin.view must be 'strong' or 'weak'");

    c.schedule.warmup_epochs = get<std::size_t>(j, "schedule", "warmup_epochs");
    c.schedule.main_epochs = get<std::size_t>(j, "schedule", "main_epochs");
    c.schedule.offline_every = get<std::size_t>(j, "schedule", "offline_every");
    c.schedule.sync_mode = get<bool>(j, "schedule", "sync_mode");
    c.schedule.offline_enabled = get<bool>(j, "schedule", "offline_enabled");

    c.model.hidden = get<std::size_t>(j, "model", "hidden");
    c.model.embed = get<std::size_t>(j, "model", "embed");
    c.model.feature_norm = get<bool>(j, "model", "feature_norm");

    c.optim.lr = get<double>(j, "optim", "lr");
    c.optim.momentum = get<double>(j, "optim", "momentum");
    c.optim.weight_decay = get<double>(j, "optim", "weight_decay");

    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::config_error, e.what());
    }
    return c;
}

inline ordered_json to_json(const engine::RunConfig& c) {
    ordered_json j = defaults();
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["data"]["source"] = c.data.kind == engine::DataSource::Kind::synthetic ? "synthetic" : "csv";
    j["data"]["path"] = c.data.path;
    j["data"]["classes"] = c.data.classes;
    j["data"]["dim"] = c.data.dim;
    j["data"]["n_per_class"] = c.data.n_per_class;
    j["data"]["overlap"] = c.data.overlap;
    j["data"]["seed"] = c.data.seed;
    j["data"]["test_fraction"] = c.data.test_fraction;
    j["split"]["labeled_ratio"] = c.split.labeled_ratio;
    j["split"]["seed"] = c.split.seed;
    j["split"]["stratified"] = c.split.stratified;
    j["augment"]["weak_sigma"] = c.augment.weak_sigma;
    j["augment"]["strong_sigma"] = c.augment.strong_sigma;
    j["augment"]["strong_mask_prob"] = c.augment.strong_mask_prob;
    j["fixmatch"]["tau"] = c.fixmatch.tau;
    j["fixmatch"]["batch_size"] = c.fixmatch.batch_size;
    j["cluster"]["max_iters"] = c.cluster.max_iters;
    j["cluster"]["tol"] = c.cluster.tol;
    j["cluster"]["aug_copies"] = c.cluster.aug_copies;
    j["cluster"]["use_labeled_aug"] = c.cluster.use_labeled_aug;
    j["cluster"]["use_adaptive_threshold"] = c.cluster.use_adaptive_threshold;
    j["cluster"]["method"] = c.cluster.method == cluster::Method::semi_supervised ? "sskm" : "kmeans";
    j["cluster"]["prototype_members"] =
        c.cluster.prototype_members == cluster::PrototypeMembers::filtered ? "filtered" : "all";
    j["margin"]["temperature"] = c.margin.temperature;
    j["margin"]["lambda"] = c.margin.lambda;
    j["margin"]["view"] = c.margin.view == proto::View::strong ? "strong" : "weak";
    j["schedule"]["warmup_epochs"] = c.schedule.warmup_epochs;
    j["schedule"]["main_epochs"] = c.schedule.main_epochs;
    j["schedule"]["offline_every"] = c.schedule.offline_every;
    j["schedule"]["sync_mode"] = c.schedule.sync_mode;
    j["schedule"]["offline_enabled"] = c.schedule.offline_enabled;
    j["model"]["hidden"] = c.model.hidden;
    j["model"]["embed"] = c.model.embed;
    j["model"]["feature_norm"] = c.model.feature_norm;
    j["optim"]["lr"] = c.optim.lr;
    j["optim"]["momentum"] = c.optim.momentum;
    j["optim"]["weight_decay"] = c.optim.weight_decay;
    return j;
}

inline ordered_json load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::config_error, "cannot open config " + path);
    ordered_json j = ordered_json::parse(f, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::config_error, "config " + path + " is not valid JSON");
    return j;
}

}  // namespace aplt::config
