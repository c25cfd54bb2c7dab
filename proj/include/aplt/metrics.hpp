#pragma once

#include <fstream>
#include <sstream>
#include <optional>
#include <ostream>
#include <string>

#include "engine.hpp"
#include "json.hpp"

// Metrics log: newline-delimited JSON, one object per line.
//
//   {"type":"epoch","mode":..,"seed":..,"epoch":..,"phase":"warmup"|"main","lr":..,
//    "loss_logits":..,"loss_margin":..,"loss_total":..,"pass_count":..,
//    "unlabeled_seen":..,"fixmatch_pseudo_acc":..|null,"proto_acc":..|null,
//    "param_acc":..,"bank_hash":"hex"|null,"pseudo_hash":"hex"|null,
//    "active_coverage":..|null,"active_pseudo_acc":..|null}
//   {"type":"offline","mode":..,"seed":..,"epoch":..,"iterations":..,"coverage":..,
//    "tau_global":..,"tau_local":[..],"tau_adapt":[..],"pseudo_acc":..|null,
//    "assignment_acc":..,"empty_classes":[..],"warnings":[..],
//    "monotonic_violations":..,"bank_hash":"hex","pseudo_hash":"hex"}
//   {"type":"final","mode":..,"seed":..,"test_acc":..,"proto_acc":..|null,"param_acc":..}
//
// Offline records precede the epoch record of the epoch they open.

namespace aplt::metrics {

using nlohmann::ordered_json;

namespace detail {

template <typename T>
ordered_json opt(const std::optional<T>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

inline ordered_json opt_hash(const std::optional<std::uint64_t>& v) {
    return v ? ordered_json(hex64(*v)) : ordered_json(nullptr);
}

}  // namespace detail

inline ordered_json to_json(const engine::EpochRecord& r, const engine::RunMetrics& m) {
    ordered_json j;
    j["type"] = "epoch";
    j["mode"] = m.mode;
    j["seed"] = m.seed;
    j["epoch"] = r.epoch;
    j["phase"] = r.phase;
    j["lr"] = r.lr;
    j["loss_logits"] = r.loss_logits;
    j["loss_margin"] = r.loss_margin;
    j["loss_total"] = r.loss_total;
    j["pass_count"] = r.pass_count;
    j["unlabeled_seen"] = r.unlabeled_seen;
    j["fixmatch_pseudo_acc"] = detail::opt(r.fixmatch_pseudo_acc);
    j["proto_acc"] = detail::opt(r.proto_acc);
    j["param_acc"] = r.param_acc;
    j["bank_hash"] = detail::opt_hash(r.bank_hash);
    j["pseudo_hash"] = detail::opt_hash(r.pseudo_hash);
    j["active_coverage"] = detail::opt(r.active_coverage);
    j["active_pseudo_acc"] = detail::opt(r.active_pseudo_acc);
    return j;
}

inline ordered_json to_json(const engine::OfflineRecord& r, const engine::RunMetrics& m) {
    ordered_json j;
    j["type"] = "offline";
    j["mode"] = m.mode;
    j["seed"] = m.seed;
    j["epoch"] = r.epoch;
    j["iterations"] = r.iterations;
    j["coverage"] = r.coverage;
    j["tau_global"] = r.tau_global;
    j["tau_local"] = r.tau_local;
    j["tau_adapt"] = r.tau_adapt;
    j["pseudo_acc"] = detail::opt(r.pseudo_acc);
    j["assignment_acc"] = r.assignment_acc;
    j["empty_classes"] = r.empty_classes;
    j["warnings"] = r.warnings;
    j["monotonic_violations"] = r.monotonic_violations;
    j["bank_hash"] = hex64(r.bank_hash);
    j["pseudo_hash"] = hex64(r.pseudo_hash);
    return j;
}

inline void write_ndjson(std::ostream& out, const engine::RunMetrics& m) {
    std::size_t next_offline = 0;
    for (const auto& e : m.epochs) {
        while (next_offline < m.offline.size() && m.offline[next_offline].epoch <= e.epoch)
            out << to_json(m.offline[next_offline++], m).dump() << '\n';
        out << to_json(e, m).dump() << '\n';
    }
    ordered_json fin;
    fin["type"] = "final";
    fin["mode"] = m.mode;
    fin["seed"] = m.seed;
    fin["test_acc"] = m.final_test_acc;
    fin["proto_acc"] = detail::opt(m.final_proto_acc);
    fin["param_acc"] = m.final_param_acc;
    out << fin.dump() << '\n';
}

inline std::string to_ndjson(const engine::RunMetrics& m) {
    std::ostringstream s;
    write_ndjson(s, m);
    return s.str();
}

inline std::string summary_csv_header() { return "mode,seed,test_acc,proto_acc,param_acc,offline_events,final_coverage,final_pseudo_acc\n"; }

inline std::string summary_csv_row(const engine::RunMetrics& m) {
    auto o = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    std::string row = m.mode + "," + std::to_string(m.seed) + "," + format_double(m.final_test_acc) + "," +
                      o(m.final_proto_acc) + "," + format_double(m.final_param_acc) + "," +
                      std::to_string(m.offline.size()) + ",";
    if (!m.offline.empty()) row += format_double(m.offline.back().coverage) + "," + o(m.offline.back().pseudo_acc);
    else row += ",";
    return row + "\n";
}

}  // namespace aplt::metrics
