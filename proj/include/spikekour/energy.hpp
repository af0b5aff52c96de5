#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikekour/common.hpp"
#include "spikekour/env.hpp"
#include "spikekour/snn.hpp"

namespace spikekour::energy {

constexpr double kPjToMj = 1e-9;  // 1 pJ = 1e-12 J, 1 mJ = 1e-3 J

enum class LayerKind { conv, fc };

// Dimensions needed to count one layer's operations. Exactly one layer per
// network carries the first-layer flag: it runs on real-valued input and is
// charged at MAC cost; every other layer is spike-driven (AC cost).
struct LayerCostSpec {
  std::string name;
  LayerKind kind = LayerKind::fc;
  // conv dims
  int in_ch = 0, out_ch = 0, kernel = 0, out_h = 0, out_w = 0;
  // fc dims
  int in = 0, out = 0;
  bool first_layer = false;
  double firing_rate = -1.0;  // input spike-train rate; negative = unset
};

struct EnergyConfig {
  double e_mac_pj = 4.6;  // 32-bit MAC at 45 nm
  double e_ac_pj = 0.9;

  void validate() const {
    if (e_mac_pj <= 0.0 || e_ac_pj <= 0.0) throw Error("EnergyConfig: energies must be > 0");
  }
};

// MAC-count convention (no factor 2 for multiply+add).
inline double count_flops(const LayerCostSpec& l) {
  if (l.kind == LayerKind::fc) {
    if (l.in <= 0 || l.out <= 0) throw Error("count_flops: fc dims must be positive");
    return static_cast<double>(l.in) * l.out;
  }
  if (l.in_ch <= 0 || l.out_ch <= 0 || l.kernel <= 0 || l.out_h <= 0 || l.out_w <= 0)
    throw Error("count_flops: conv dims must be positive");
  return static_cast<double>(l.kernel) * l.kernel * l.in_ch * l.out_h * l.out_w * l.out_ch;
}

inline double count_sops(const LayerCostSpec& l, double fr, int timesteps) {
  if (fr < 0.0 || fr > 1.0)
    throw Error("count_sops: firing rate " + std::to_string(fr) + " outside [0,1]");
  if (timesteps < 1) throw Error("count_sops: timesteps must be >= 1");
  return fr * timesteps * count_flops(l);
}

inline double ann_energy_mJ(const std::vector<LayerCostSpec>& layers, const EnergyConfig& cfg) {
  cfg.validate();
  double flops = 0.0;
  for (const auto& l : layers) flops += count_flops(l);
  return cfg.e_mac_pj * flops * kPjToMj;
}

// E = E_MAC * FLOPs(first layer) + E_AC * (sum of SOPs over the rest).
inline double snn_energy_mJ(const std::vector<LayerCostSpec>& layers, int timesteps,
                            const EnergyConfig& cfg) {
  cfg.validate();
  int firsts = 0;
  for (const auto& l : layers) firsts += l.first_layer ? 1 : 0;
  if (firsts != 1)
    throw SpecError("snn_energy: exactly one first layer required, found " +
                    std::to_string(firsts));
  double e_pj = 0.0;
  for (const auto& l : layers) {
    if (l.first_layer) {
      e_pj += cfg.e_mac_pj * count_flops(l);
    } else {
      if (l.firing_rate < 0.0)
        throw SpecError("snn_energy: missing firing-rate stats for layer " + l.name);
      e_pj += cfg.e_ac_pj * count_sops(l, l.firing_rate, timesteps);
    }
  }
  return e_pj * kPjToMj;
}

inline double efficiency_from_counts(double flops_snn, double sops_snn, double flops_ann) {
  if (flops_ann <= 0.0) throw SpecError("efficiency: ANN FLOPs must be > 0");
  return (flops_snn + sops_snn) / flops_ann;
}

// OPs(SNN) / OPs(ANN): raw operation counts, unweighted by energy.
inline double efficiency(const std::vector<LayerCostSpec>& snn_layers, int timesteps,
                         const std::vector<LayerCostSpec>& ann_layers) {
  double flops_first = 0.0, sops = 0.0;
  for (const auto& l : snn_layers) {
    if (l.first_layer)
      flops_first += count_flops(l);
    else
      sops += count_sops(l, l.firing_rate, timesteps);
  }
  double flops_ann = 0.0;
  for (const auto& l : ann_layers) flops_ann += count_flops(l);
  return efficiency_from_counts(flops_first, sops, flops_ann);
}

// Sum of |F.v| dt over an episode log, in mJ (point mass, per-axis drives).
inline double motor_energy_mJ(const std::vector<env::MotorLogEntry>& log) {
  double joules = 0.0;
  for (const auto& e : log)
    joules += (std::fabs(static_cast<double>(e.force_fwd) * e.vel_fwd) +
               std::fabs(static_cast<double>(e.force_lat) * e.vel_lat)) *
              e.dt;
  return joules * 1000.0;
}

struct EnergyReport {
  std::string module;
  double flops_ann = 0.0;
  double flops_snn_first = 0.0;
  double sops_total = 0.0;
  double e_ann_mJ = 0.0;
  double e_snn_mJ = 0.0;
  double efficiency = 0.0;
  double savings_pct = 0.0;
  int timesteps = 1;
  nlohmann::json per_layer = nlohmann::json::array();

  nlohmann::json to_json() const {
    // rounded mirrors reproduce the two-decimal table arithmetic
    double e_ann_r = std::round(e_ann_mJ * 100.0) / 100.0;
    double e_snn_r = std::round(e_snn_mJ * 100.0) / 100.0;
    return {{"module", module},
            {"flops_ann", flops_ann},
            {"flops_snn_first", flops_snn_first},
            {"sops_total", sops_total},
            {"e_ann_mJ", e_ann_mJ},
            {"e_snn_mJ", e_snn_mJ},
            {"efficiency", efficiency},
            {"savings_pct", savings_pct},
            {"timesteps", timesteps},
            {"e_ann_mJ_rounded", e_ann_r},
            {"e_snn_mJ_rounded", e_snn_r},
            {"savings_pct_from_rounded",
             e_ann_r > 0.0 ? 100.0 * (1.0 - e_snn_r / e_ann_r) : 0.0},
            {"per_layer", per_layer}};
  }
};

// Full report for one network block; the ANN baseline is the same layer
// stack charged entirely at MAC cost.
inline EnergyReport make_report(const std::string& module,
                                const std::vector<LayerCostSpec>& layers, int timesteps,
                                const EnergyConfig& cfg) {
  EnergyReport r;
  r.module = module;
  r.timesteps = timesteps;
  r.e_ann_mJ = ann_energy_mJ(layers, cfg);
  r.e_snn_mJ = snn_energy_mJ(layers, timesteps, cfg);
  for (const auto& l : layers) {
    double flops = count_flops(l);
    r.flops_ann += flops;
    double sops = 0.0;
    if (l.first_layer) {
      r.flops_snn_first += flops;
    } else {
      sops = count_sops(l, l.firing_rate, timesteps);
      r.sops_total += sops;
    }
    r.per_layer.push_back({{"name", l.name},
                           {"kind", l.kind == LayerKind::conv ? "conv" : "fc"},
                           {"flops", flops},
                           {"first", l.first_layer},
                           {"fr", l.first_layer ? nlohmann::json(nullptr)
                                                : nlohmann::json(l.firing_rate)},
                           {"sops", sops},
                           {"term_mJ", (l.first_layer ? cfg.e_mac_pj * flops
                                                      : cfg.e_ac_pj * sops) *
                                           kPjToMj}});
  }
  r.efficiency = efficiency_from_counts(r.flops_snn_first, r.sops_total, r.flops_ann);
  r.savings_pct = 100.0 * (1.0 - r.e_snn_mJ / r.e_ann_mJ);
  return r;
}

// Report from aggregate counts (no per-layer breakdown).
inline EnergyReport report_from_counts(const std::string& module, double flops_snn_first,
                                       double sops_total, double flops_ann, int timesteps,
                                       const EnergyConfig& cfg) {
  cfg.validate();
  EnergyReport r;
  r.module = module;
  r.timesteps = timesteps;
  r.flops_ann = flops_ann;
  r.flops_snn_first = flops_snn_first;
  r.sops_total = sops_total;
  r.e_ann_mJ = cfg.e_mac_pj * flops_ann * kPjToMj;
  r.e_snn_mJ = (cfg.e_mac_pj * flops_snn_first + cfg.e_ac_pj * sops_total) * kPjToMj;
  r.efficiency = efficiency_from_counts(flops_snn_first, sops_total, flops_ann);
  r.savings_pct = 100.0 * (1.0 - r.e_snn_mJ / r.e_ann_mJ);
  return r;
}

// Maps a network spec document plus measured firing stats onto cost layers.
// The spiking path splits at the (conventional, non-spiking) GRU fusion into
// an encoder block and an actor block, each with its own first layer; layers
// are charged with the firing rate of their *input* spike train.
inline std::map<std::string, std::vector<LayerCostSpec>> layers_from_netspec(
    const nlohmann::json& spec, const snn::FiringStats& stats) {
  if (spec.value("format", "") != "spikekour-netspec")
    throw SpecError("layers_from_netspec: not a spikekour-netspec document");
  std::map<std::string, std::vector<LayerCostSpec>> modules;
  std::string module = "encoder";
  std::string prev_spiking;  // name of the layer whose output feeds the next one
  bool first_in_module = true;
  for (const auto& lj : spec.at("layers")) {
    std::string kind = lj.at("kind").get<std::string>();
    if (kind == "gru") {
      module = "actor";
      first_in_module = true;
      prev_spiking.clear();
      continue;
    }
    LayerCostSpec l;
    l.name = lj.at("name").get<std::string>();
    if (kind == "conv") {
      l.kind = LayerKind::conv;
      l.in_ch = lj.at("in_ch").get<int>();
      l.out_ch = lj.at("out_ch").get<int>();
      l.kernel = lj.at("kernel").get<int>();
      l.out_h = lj.at("out_h").get<int>();
      l.out_w = lj.at("out_w").get<int>();
    } else if (kind == "fc") {
      l.kind = LayerKind::fc;
      l.in = lj.at("in").get<int>();
      l.out = lj.at("out").get<int>();
    } else {
      throw SpecError("layers_from_netspec: unknown layer kind " + kind);
    }
    if (first_in_module) {
      l.first_layer = true;
      first_in_module = false;
    } else {
      auto it = stats.layers.find(prev_spiking);
      if (prev_spiking.empty() || it == stats.layers.end())
        throw SpecError("layers_from_netspec: missing firing-rate stats for input of layer " +
                        l.name + " (expected stats for " +
                        (prev_spiking.empty() ? std::string("<unknown>") : prev_spiking) + ")");
      l.firing_rate = it->second.rate();
    }
    if (lj.value("spiking", false)) prev_spiking = l.name;
    modules[module].push_back(l);
  }
  return modules;
}

}  // namespace spikekour::energy
