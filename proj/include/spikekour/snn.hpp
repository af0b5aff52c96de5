#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikekour/events.hpp"
#include "spikekour/nn.hpp"

namespace spikekour::snn {

using num::Graph;
using num::ParamStore;
using num::Tensor;
using num::Var;

enum class ResetMode { hard, subtract };

struct NeuronConfig {
  float beta = 1.0f;       // leak factor; 1.0 is the IF neuron
  float gamma = 1.0f;      // input gain
  float threshold = 1.0f;  // theta_th
  float v_reset = 0.0f;
  ResetMode reset = ResetMode::hard;
  float surrogate_width = 0.5f;  // rectangular surrogate half-width

  void validate() const {
    if (!(v_reset < threshold)) throw Error("NeuronConfig: v_reset must be < threshold");
    if (beta < 0.0f || beta > 1.0f) throw Error("NeuronConfig: beta must lie in [0,1]");
    if (surrogate_width <= 0.0f) throw Error("NeuronConfig: surrogate width must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const NeuronConfig& c) {
  auto dec = [](float v) {  // shortest-decimal float for readable documents
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.7g", static_cast<double>(v));
    return std::stod(buf);
  };
  j = {{"beta", dec(c.beta)},
       {"gamma", dec(c.gamma)},
       {"threshold", dec(c.threshold)},
       {"v_reset", dec(c.v_reset)},
       {"reset", c.reset == ResetMode::hard ? "hard" : "subtract"},
       {"surrogate", {{"kind", "rectangular"}, {"width", dec(c.surrogate_width)}}}};
}

inline void from_json(const nlohmann::json& j, NeuronConfig& c) {
  c.beta = j.value("beta", 1.0f);
  c.gamma = j.value("gamma", 1.0f);
  c.threshold = j.value("threshold", 1.0f);
  c.v_reset = j.value("v_reset", 0.0f);
  std::string reset = j.value("reset", "hard");
  if (reset == "hard")
    c.reset = ResetMode::hard;
  else if (reset == "subtract")
    c.reset = ResetMode::subtract;
  else
    throw Error("NeuronConfig: unknown reset mode " + reset);
  if (j.contains("surrogate")) {
    const auto& s = j.at("surrogate");
    if (s.value("kind", "rectangular") != "rectangular")
      throw Error("NeuronConfig: unknown surrogate kind");
    c.surrogate_width = s.value("width", 0.5f);
  }
  c.validate();
}

// One membrane update: V_pre = beta*V + gamma*I, spike where V_pre >= theta,
// then reset (to v_reset, or by subtracting the threshold gap).
struct LifStep {
  Tensor spikes;
  Tensor v_next;
};

inline LifStep lif_step(const Tensor& v, const Tensor& input, const NeuronConfig& cfg) {
  cfg.validate();
  num::require_same_shape(v, input, "lif_step");
  LifStep out;
  out.spikes = Tensor(v.shape);
  out.v_next = Tensor(v.shape);
  const float gap = cfg.threshold - cfg.v_reset;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    float pre = cfg.beta * v.data[i] + cfg.gamma * input.data[i];
    if (pre >= cfg.threshold) {
      out.spikes.data[i] = 1.0f;
      out.v_next.data[i] = cfg.reset == ResetMode::hard ? cfg.v_reset : pre - gap;
    } else {
      out.v_next.data[i] = pre;
    }
  }
  return out;
}

struct LifVars {
  Var spikes;
  Var v_next;
};

// Tape version; the reset is expressed through the spike value so surrogate
// gradients flow through both the spike output and the membrane carry.
inline LifVars lif_step(Graph& g, Var v, Var input, const NeuronConfig& cfg,
                        bool surrogate_forward = false) {
  cfg.validate();
  Var v_pre = g.add(g.scale(v, cfg.beta), g.scale(input, cfg.gamma));
  Var s = g.spike(v_pre, cfg.threshold, cfg.surrogate_width, surrogate_forward);
  Var v_next;
  if (cfg.reset == ResetMode::hard)
    v_next = g.sub(v_pre, g.mul(s, g.add_scalar(v_pre, -cfg.v_reset)));
  else
    v_next = g.sub(v_pre, g.scale(s, cfg.threshold - cfg.v_reset));
  return {s, v_next};
}

// Mean spike fraction per spiking layer over neurons, timesteps and batch.
struct FiringStats {
  struct Entry {
    double sum = 0.0;
    int64_t count = 0;
    double rate() const { return count ? sum / static_cast<double>(count) : 0.0; }
  };
  std::map<std::string, Entry> layers;

  void record(const std::string& name, const Tensor& spikes) {
    Entry& e = layers[name];
    for (float v : spikes.data) e.sum += v;
    e.count += spikes.numel();
  }
  void clear() { layers.clear(); }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, e] : layers)
      j[name] = {{"rate", e.rate()}, {"samples", e.count}};
    return j;
  }
  static FiringStats from_json(const nlohmann::json& j) {
    FiringStats s;
    for (auto it = j.begin(); it != j.end(); ++it) {
      Entry e;
      e.count = it.value().at("samples").get<int64_t>();
      e.sum = it.value().at("rate").get<double>() * static_cast<double>(e.count);
      s.layers[it.key()] = e;
    }
    return s;
  }
};

// Student network: spiking conv encoder on event frames, conventional GRU
// fusing the rate-decoded latent with proprioception, spiking MLP actor with
// a non-spiking readout (membrane averaged over T) for action and yaw.
struct StudentConfig {
  int frame_width = 48;
  int frame_height = 32;
  int in_channels = 2;  // positive/negative event counts; 1 for a depth baseline
  std::vector<int> conv_filters = {16, 32};
  int conv_kernel = 3;
  int conv_stride = 2;
  int conv_pad = 1;
  int latent_dim = 64;
  int proprio_dim = 7;
  int gru_hidden = 64;
  std::vector<int> actor_sizes = {512, 256, 128};
  int n_act = 4;
  int timesteps = 4;  // T
  NeuronConfig neuron;
  bool episodic = true;  // refuse to run across an episode boundary without a reset

  int conv_out_h(int layer) const {
    int h = frame_height;
    for (int i = 0; i <= layer; ++i) h = (h + 2 * conv_pad - conv_kernel) / conv_stride + 1;
    return h;
  }
  int conv_out_w(int layer) const {
    int w = frame_width;
    for (int i = 0; i <= layer; ++i) w = (w + 2 * conv_pad - conv_kernel) / conv_stride + 1;
    return w;
  }
  int flat_dim() const {
    int n = static_cast<int>(conv_filters.size());
    return conv_filters.back() * conv_out_h(n - 1) * conv_out_w(n - 1);
  }

  void validate() const {
    neuron.validate();
    if (timesteps < 1) throw Error("StudentConfig: timesteps must be >= 1");
    if (conv_filters.empty()) throw Error("StudentConfig: need at least one conv layer");
    if (n_act < 1 || latent_dim < 1 || gru_hidden < 1) throw Error("StudentConfig: bad dims");
  }
};

struct StudentOutput {
  Var action;  // [B, n_act], tanh-bounded
  Var yaw;     // [B, 1]
};

class StudentNet {
 public:
  StudentNet(StudentConfig cfg, ParamStore& store, uint64_t seed, const std::string& prefix = "student")
      : cfg_(std::move(cfg)), store_(&store), prefix_(prefix) {
    cfg_.validate();
    if (!store.has(name("enc.conv0.k"))) {
      init_params(seed);
    } else {
      verify_params();
    }
  }

  const StudentConfig& config() const { return cfg_; }
  ParamStore& store() { return *store_; }

  // Clears membranes and the GRU hidden state for a batch of the given size.
  void reset_state(int batch) {
    batch_ = batch;
    state_.clear();
    int n = static_cast<int>(cfg_.conv_filters.size());
    for (int i = 0; i < n; ++i)
      state_[v_name("conv" + std::to_string(i))] =
          Tensor({batch, cfg_.conv_filters[i], cfg_.conv_out_h(i), cfg_.conv_out_w(i)},
                 cfg_.neuron.v_reset);
    state_[v_name("latent")] = Tensor({batch, cfg_.latent_dim}, cfg_.neuron.v_reset);
    for (std::size_t i = 0; i < cfg_.actor_sizes.size(); ++i)
      state_[v_name("actor" + std::to_string(i))] =
          Tensor({batch, cfg_.actor_sizes[i]}, cfg_.neuron.v_reset);
    state_[v_name("gru_h")] = Tensor({batch, cfg_.gru_hidden});
    needs_reset_ = false;
    segment_open_ = false;
  }

  void mark_episode_done() { needs_reset_ = true; }

  // Lift the carried state into a live graph so gradients can flow through
  // time across the control ticks of one training segment.
  void begin_segment(Graph& g) {
    if (batch_ == 0) throw Error("StudentNet: reset_state must be called before use");
    graph_ = &g;
    state_vars_.clear();
    for (auto& [k, t] : state_) state_vars_[k] = g.leaf(t);
    segment_open_ = true;
  }

  // Writes the (detached) state values back out of the graph.
  void end_segment() {
    if (!segment_open_) throw Error("StudentNet: end_segment without begin_segment");
    for (auto& [k, v] : state_vars_) state_[k] = graph_->value(v);
    state_vars_.clear();
    graph_ = nullptr;
    segment_open_ = false;
  }

  // Per-environment reset inside a batch: keep rows where keep_mask is 1,
  // re-initialize rows where it is 0 (gradients stop at reset rows).
  void mask_reset(const std::vector<float>& keep_mask) {
    if (static_cast<int>(keep_mask.size()) != batch_)
      throw Error("StudentNet: mask size mismatch");
    if (!segment_open_) {
      for (auto& [k, t] : state_) {
        float fill = k == v_name("gru_h") ? 0.0f : cfg_.neuron.v_reset;
        fill_rows(t, keep_mask, fill);
      }
      return;
    }
    for (auto& [k, v] : state_vars_) {
      Tensor mask_t = row_mask(graph_->value(v).shape, keep_mask);
      state_vars_[k] = graph_->add(graph_->mul(v, graph_->leaf(mask_t)),
                                   graph_->leaf(reset_rows(graph_->value(v), keep_mask, k)));
    }
  }

  // One control tick: the same event frame and proprio vector are presented
  // at each of T internal timesteps.
  StudentOutput forward(Var frame, Var proprio, FiringStats* stats = nullptr,
                        bool surrogate_forward = false) {
    if (!segment_open_) throw Error("StudentNet: forward outside begin/end_segment");
    if (cfg_.episodic && needs_reset_)
      throw Error("StudentNet: episode ended; reset_state before the next forward");
    Graph& g = *graph_;
    const Tensor& fshape = g.value(frame);
    if (fshape.rank() != 4 || fshape.dim(0) != batch_ || fshape.dim(1) != cfg_.in_channels ||
        fshape.dim(2) != cfg_.frame_height || fshape.dim(3) != cfg_.frame_width)
      throw Error("StudentNet: frame shape " + fshape.shape_str() + " does not match config");

    int T = cfg_.timesteps;
    int n_conv = static_cast<int>(cfg_.conv_filters.size());
    Var latent_acc;
    for (int t = 0; t < T; ++t) {
      Var x = frame;
      for (int i = 0; i < n_conv; ++i) {
        Var c = g.conv2d(x, g.param(name("enc.conv" + std::to_string(i) + ".k")),
                         cfg_.conv_stride, cfg_.conv_pad);
        auto [s, v_next] =
            lif_step(g, state_vars_[v_name("conv" + std::to_string(i))], c, cfg_.neuron,
                     surrogate_forward);
        state_vars_[v_name("conv" + std::to_string(i))] = v_next;
        if (stats) stats->record(name("enc.conv" + std::to_string(i)), g.value(s));
        x = s;
      }
      Var flat = g.reshape(x, {batch_, cfg_.flat_dim()});
      Var e = num::linear(g, flat, name("enc.fc"));
      auto [s_lat, v_lat] =
          lif_step(g, state_vars_[v_name("latent")], e, cfg_.neuron, surrogate_forward);
      state_vars_[v_name("latent")] = v_lat;
      if (stats) stats->record(name("enc.fc"), g.value(s_lat));
      latent_acc = t == 0 ? s_lat : g.add(latent_acc, s_lat);
    }
    Var latent_rate = g.scale(latent_acc, 1.0f / static_cast<float>(T));

    Var fused = num::gru_cell(g, g.concat_cols(latent_rate, proprio),
                              state_vars_[v_name("gru_h")], name("gru"));
    state_vars_[v_name("gru_h")] = fused;

    Var readout_acc;
    for (int t = 0; t < T; ++t) {
      Var x = fused;
      for (std::size_t i = 0; i < cfg_.actor_sizes.size(); ++i) {
        Var a = num::linear(g, x, name("actor.fc" + std::to_string(i)));
        auto [s, v_next] = lif_step(g, state_vars_[v_name("actor" + std::to_string(i))], a,
                                    cfg_.neuron, surrogate_forward);
        state_vars_[v_name("actor" + std::to_string(i))] = v_next;
        if (stats) stats->record(name("actor.fc" + std::to_string(i)), g.value(s));
        x = s;
      }
      Var r = num::linear(g, x, name("head"));
      readout_acc = t == 0 ? r : g.add(readout_acc, r);
    }
    Var out = g.scale(readout_acc, 1.0f / static_cast<float>(T));
    StudentOutput result;
    result.action = g.tanh_(g.slice_cols(out, 0, cfg_.n_act));
    result.yaw = g.slice_cols(out, cfg_.n_act, cfg_.n_act + 1);
    return result;
  }

  // Network spec document consumed by the energy accounting CLI.
  nlohmann::json spec_json() const {
    nlohmann::json layers = nlohmann::json::array();
    int in_ch = cfg_.in_channels;
    int h = cfg_.frame_height, w = cfg_.frame_width;
    for (std::size_t i = 0; i < cfg_.conv_filters.size(); ++i) {
      int oh = cfg_.conv_out_h(static_cast<int>(i));
      int ow = cfg_.conv_out_w(static_cast<int>(i));
      layers.push_back({{"name", name("enc.conv" + std::to_string(i))},
                        {"kind", "conv"},
                        {"in_ch", in_ch},
                        {"out_ch", cfg_.conv_filters[i]},
                        {"kernel", cfg_.conv_kernel},
                        {"stride", cfg_.conv_stride},
                        {"pad", cfg_.conv_pad},
                        {"in_h", h},
                        {"in_w", w},
                        {"out_h", oh},
                        {"out_w", ow},
                        {"spiking", true}});
      in_ch = cfg_.conv_filters[i];
      h = oh;
      w = ow;
    }
    layers.push_back({{"name", name("enc.fc")},
                      {"kind", "fc"},
                      {"in", cfg_.flat_dim()},
                      {"out", cfg_.latent_dim},
                      {"spiking", true}});
    layers.push_back({{"name", name("gru")},
                      {"kind", "gru"},
                      {"in", cfg_.latent_dim + cfg_.proprio_dim},
                      {"hidden", cfg_.gru_hidden},
                      {"spiking", false}});
    int prev = cfg_.gru_hidden;
    for (std::size_t i = 0; i < cfg_.actor_sizes.size(); ++i) {
      layers.push_back({{"name", name("actor.fc" + std::to_string(i))},
                        {"kind", "fc"},
                        {"in", prev},
                        {"out", cfg_.actor_sizes[i]},
                        {"spiking", true}});
      prev = cfg_.actor_sizes[i];
    }
    layers.push_back({{"name", name("head")},
                      {"kind", "fc"},
                      {"in", prev},
                      {"out", cfg_.n_act + 1},
                      {"spiking", false},
                      {"readout", true}});
    nlohmann::json neuron;
    to_json(neuron, cfg_.neuron);
    return {{"format", "spikekour-netspec"},
            {"version", 1},
            {"timesteps", cfg_.timesteps},
            {"neuron", neuron},
            {"input", {{"channels", cfg_.in_channels},
                       {"height", cfg_.frame_height},
                       {"width", cfg_.frame_width}}},
            {"layers", layers}};
  }

 private:
  std::string name(const std::string& suffix) const { return prefix_ + "." + suffix; }
  std::string v_name(const std::string& suffix) const { return "V." + suffix; }

  void init_params(uint64_t seed) {
    std::mt19937 rng = make_rng(seed, prefix_ + ".init");
    int in_ch = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.conv_filters.size(); ++i) {
      // extra gain keeps early membrane drives near threshold
      num::init_conv(*store_, name("enc.conv" + std::to_string(i)), in_ch, cfg_.conv_filters[i],
                     cfg_.conv_kernel, rng, 2.5f);
      in_ch = cfg_.conv_filters[i];
    }
    num::init_linear(*store_, name("enc.fc"), cfg_.flat_dim(), cfg_.latent_dim, rng, 2.5f);
    num::init_gru(*store_, name("gru"), cfg_.latent_dim + cfg_.proprio_dim, cfg_.gru_hidden, rng);
    int prev = cfg_.gru_hidden;
    for (std::size_t i = 0; i < cfg_.actor_sizes.size(); ++i) {
      num::init_linear(*store_, name("actor.fc" + std::to_string(i)), prev, cfg_.actor_sizes[i],
                       rng, 2.5f);
      prev = cfg_.actor_sizes[i];
    }
    num::init_linear(*store_, name("head"), prev, cfg_.n_act + 1, rng);
  }

  void verify_params() const {
    StudentConfig c = cfg_;
    ParamStore tmp;
    StudentNet probe(c, tmp, 0, prefix_);
    std::string diff;
    for (auto& [n, t] : tmp.params()) {
      if (!store_->has(n))
        diff += "missing: " + n + " " + t.shape_str() + "\n";
      else if (store_->get(n).shape != t.shape)
        diff += "shape mismatch: " + n + " expected " + t.shape_str() + " got " +
                store_->get(n).shape_str() + "\n";
    }
    if (!diff.empty()) throw CheckpointMismatch("student parameters do not match config:\n" + diff);
  }

  static void fill_rows(Tensor& t, const std::vector<float>& keep, float fill) {
    int rows = t.dim(0);
    std::size_t stride = static_cast<std::size_t>(t.numel() / rows);
    for (int r = 0; r < rows; ++r)
      if (keep[static_cast<std::size_t>(r)] == 0.0f)
        for (std::size_t i = 0; i < stride; ++i) t.data[r * stride + i] = fill;
  }

  Tensor row_mask(const std::vector<int>& shape, const std::vector<float>& keep) const {
    Tensor m(shape);
    int rows = m.dim(0);
    std::size_t stride = static_cast<std::size_t>(m.numel() / rows);
    for (int r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < stride; ++i)
        m.data[r * stride + i] = keep[static_cast<std::size_t>(r)];
    return m;
  }

  Tensor reset_rows(const Tensor& like, const std::vector<float>& keep, const std::string& key) const {
    Tensor t(like.shape);
    float fill = key == v_name("gru_h") ? 0.0f : cfg_.neuron.v_reset;
    int rows = t.dim(0);
    std::size_t stride = static_cast<std::size_t>(t.numel() / rows);
    for (int r = 0; r < rows; ++r)
      if (keep[static_cast<std::size_t>(r)] == 0.0f)
        for (std::size_t i = 0; i < stride; ++i) t.data[r * stride + i] = fill;
    return t;
  }

  StudentConfig cfg_;
  ParamStore* store_;
  std::string prefix_;
  int batch_ = 0;
  std::map<std::string, Tensor> state_;
  std::map<std::string, Var> state_vars_;
  Graph* graph_ = nullptr;
  bool segment_open_ = false;
  bool needs_reset_ = false;
};

// Event frame (or depth frame for the baseline) to network input tensor.
inline Tensor frame_to_tensor(const events::EventFrame& f) {
  Tensor t({1, 2, f.height, f.width});
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * f.width + x;
      t.at4(0, 0, y, x) = f.pos[i];
      t.at4(0, 1, y, x) = f.neg[i];
    }
  return t;
}

inline Tensor depth_to_tensor(const events::DepthFrame& d, float max_range) {
  Tensor t({1, 1, d.height, d.width});
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) t.at4(0, 0, y, x) = d.at(x, y) / max_range;
  return t;
}

}  // namespace spikekour::snn
