#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "spikekour/env.hpp"
#include "spikekour/nn.hpp"

namespace spikekour::policy {

using env::Env;
using env::EnvConfig;
using env::Observation;
using num::Graph;
using num::ParamStore;
using num::Tensor;
using num::Var;

inline int worker_count(int jobs) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* e = std::getenv("SPIKEKOUR_THREADS")) n = std::atoi(e);
  return std::clamp(n, 1, std::max(1, jobs));
}

// Appends one JSON object per line; flushed per line so partial runs keep
// their metrics.
class MetricsSink {
 public:
  explicit MetricsSink(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write metrics file " + path);
  }
  void append(const nlohmann::json& j) {
    out_ << j.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Teacher: plain MLP over [proprio | scandots | target yaw], privileged.

struct TeacherConfig {
  int proprio_dim = 8;  // body vel (3), yaw error, last action (4)
  int scandot_dim = 55;
  std::vector<int> hidden = {256, 128};
  int n_act = env::kActionDim;

  int input_dim() const { return proprio_dim + scandot_dim + 1; }
};

struct PolicyOutput {
  Var action;  // [B, n_act], tanh-bounded
  Var yaw;     // [B, 1]
};

class TeacherNet {
 public:
  TeacherNet(TeacherConfig cfg, ParamStore& store, uint64_t seed,
             const std::string& prefix = "teacher")
      : cfg_(std::move(cfg)), store_(&store), prefix_(prefix) {
    if (!store.has(prefix_ + ".l0.w")) {
      std::mt19937 rng = make_rng(seed, prefix_ + ".init");
      int in = cfg_.input_dim();
      for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
        num::init_linear(store, layer_name(i), in, cfg_.hidden[i], rng);
        in = cfg_.hidden[i];
      }
      num::init_linear(store, prefix_ + ".head", in, cfg_.n_act + 1, rng);
    } else {
      if (!store.has(prefix_ + ".head.w") ||
          store.get(prefix_ + ".l0.w").dim(0) != cfg_.input_dim())
        throw CheckpointMismatch("teacher parameters do not match config (input dim " +
                                 std::to_string(cfg_.input_dim()) + ")");
    }
  }

  const TeacherConfig& config() const { return cfg_; }
  ParamStore& store() { return *store_; }
  const std::string& prefix() const { return prefix_; }

  PolicyOutput forward(Graph& g, Var obs) const {
    Var x = obs;
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i)
      x = g.tanh_(num::linear(g, x, layer_name(i)));
    Var out = num::linear(g, x, prefix_ + ".head");
    PolicyOutput o;
    o.action = g.tanh_(g.slice_cols(out, 0, cfg_.n_act));
    o.yaw = g.slice_cols(out, cfg_.n_act, cfg_.n_act + 1);
    return o;
  }

  // Observation row: [proprio | scandots | target_yaw]
  static void fill_obs_row(const Observation& obs, float* dst) {
    std::size_t k = 0;
    for (float v : obs.proprio) dst[k++] = v;
    for (float v : obs.scandots) dst[k++] = v;
    dst[k++] = obs.target_yaw;
  }

  Tensor obs_tensor(const std::vector<Observation>& obs) const {
    Tensor t({static_cast<int>(obs.size()), cfg_.input_dim()});
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (static_cast<int>(obs[i].proprio.size() + obs[i].scandots.size() + 1) !=
          cfg_.input_dim())
        throw Error("TeacherNet: observation dims do not match config");
      fill_obs_row(obs[i], &t.data[i * static_cast<std::size_t>(cfg_.input_dim())]);
    }
    return t;
  }

 private:
  std::string layer_name(std::size_t i) const { return prefix_ + ".l" + std::to_string(i); }

  TeacherConfig cfg_;
  ParamStore* store_;
  std::string prefix_;
};

// ---------------------------------------------------------------------------
// Scripted expert: privileged heightfield probe, cruise tracking, jump rule.

struct ExpertConfig {
  float cruise_speed = 2.2f;  // m/s
  float k_speed = 1.5f;
  float k_yaw = 2.0f;
  float k_lat = 1.5f;
  float d_trigger_base = 0.35f;  // jump lookahead in meters at difficulty 0
  float d_trigger_gain = 0.25f;  // added lookahead at difficulty 1
  float probe_step = 0.05f;
  float gap_drop = 0.3f;  // height drop that reads as a gap edge
};

struct ExpertAction {
  std::array<float, env::kActionDim> action{0, 0, 0, 0};
  float yaw = 0.0f;
};

inline ExpertAction scripted_expert(const env::Heightfield& hf, const env::RobotState& s,
                                    const Observation& obs, float difficulty,
                                    float climb_limit = 0.15f, const ExpertConfig& cfg = {}) {
  ExpertAction out;
  float cy = std::cos(s.yaw), sy = std::sin(s.yaw);
  float v_fwd = s.vx * cy + s.vy * sy;
  float v_lat = -s.vx * sy + s.vy * cy;

  out.action[0] = std::clamp(cfg.k_speed * (cfg.cruise_speed - v_fwd), -1.0f, 1.0f);
  out.action[1] = std::clamp(-cfg.k_lat * v_lat, -1.0f, 1.0f);
  out.action[2] = std::clamp(cfg.k_yaw * obs.yaw_err, -1.0f, 1.0f);
  out.yaw = obs.yaw_err;

  if (!s.airborne) {
    float d_trigger = cfg.d_trigger_base + cfg.d_trigger_gain * difficulty;
    for (float d = cfg.probe_step; d <= d_trigger + 1e-6f; d += cfg.probe_step) {
      float h = hf.height_at(s.x + d * cy, s.y + d * sy);
      if (h < s.z - cfg.gap_drop || h > s.z + climb_limit) {
        out.action[3] = 1.0f;
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vectorized environments: independent instances stepped in lockstep.

class VecEnv {
 public:
  VecEnv(const EnvConfig& base, int count, uint64_t root_seed,
         std::vector<float> difficulties = {})
      : root_seed_(root_seed) {
    for (int i = 0; i < count; ++i) {
      EnvConfig cfg = base;
      cfg.terrain.seed = substream_seed(root_seed, "terrain", static_cast<uint64_t>(i));
      if (!difficulties.empty())
        cfg.terrain.difficulty = difficulties[static_cast<std::size_t>(i) % difficulties.size()];
      envs_.emplace_back(std::make_unique<Env>(cfg));
      episode_counter_.push_back(0);
    }
  }

  int size() const { return static_cast<int>(envs_.size()); }
  Env& at(int i) { return *envs_[static_cast<std::size_t>(i)]; }

  std::vector<Observation> reset_all() {
    std::vector<Observation> obs(envs_.size());
    for_each_env([&](int i) { obs[i] = reset_env(i); });
    return obs;
  }

  Observation reset_env(int i) {
    uint64_t seed = substream_seed(root_seed_, "episode",
                                   static_cast<uint64_t>(i) * 1000003ull +
                                       static_cast<uint64_t>(episode_counter_[i]++));
    return envs_[static_cast<std::size_t>(i)]->reset(seed);
  }

  // Steps every env; envs that finish are recorded and auto-reset when asked.
  struct BatchStep {
    std::vector<env::StepResult> results;
    std::vector<env::EpisodeResult> finished;  // indexed by env, valid where done
    std::vector<char> done;
  };

  BatchStep step_all(const std::vector<std::array<float, env::kActionDim>>& actions,
                     bool auto_reset) {
    if (static_cast<int>(actions.size()) != size()) throw Error("VecEnv: action count mismatch");
    BatchStep out;
    out.results.resize(envs_.size());
    out.finished.resize(envs_.size());
    out.done.assign(envs_.size(), 0);
    for_each_env([&](int i) {
      out.results[i] = envs_[static_cast<std::size_t>(i)]->step(actions[static_cast<std::size_t>(i)]);
      if (out.results[i].done) {
        out.done[i] = 1;
        out.finished[i] = envs_[static_cast<std::size_t>(i)]->result();
        if (auto_reset) out.results[i].obs = reset_env(i);
      }
    });
    return out;
  }

 private:
  template <typename F>
  void for_each_env(F&& f) {
    int n = size();
    int workers = worker_count(n);
    if (workers <= 1) {
      for (int i = 0; i < n; ++i) f(i);
      return;
    }
    std::vector<std::thread> pool;
    int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      int lo = w * chunk, hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi]() {
        for (int i = lo; i < hi; ++i) f(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<std::unique_ptr<Env>> envs_;
  std::vector<int> episode_counter_;
  uint64_t root_seed_ = 0;
};

// ---------------------------------------------------------------------------
// Behavior cloning from the scripted expert with DAgger-style aggregation.

struct BcConfig {
  int iterations = 10;  // collection rounds
  int horizon = 50;     // ticks per env per round
  int epochs = 3;
  int minibatch = 256;
  float lr = 1e-3f;
  float yaw_loss_weight = 0.5f;
  float expert_mix_decay = 0.6f;  // chance of executing the expert action, decays per round
  float holdout_fraction = 0.1f;
  uint64_t seed = 0;
};

struct BcResult {
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  std::vector<double> round_losses;
};

namespace detail {

struct LabeledSet {
  std::vector<float> obs;     // rows of input_dim
  std::vector<float> action;  // rows of n_act
  std::vector<float> yaw;     // rows of 1
  int rows = 0;

  void push(const float* o, int obs_dim, const std::array<float, env::kActionDim>& a, float y) {
    obs.insert(obs.end(), o, o + obs_dim);
    action.insert(action.end(), a.begin(), a.end());
    yaw.push_back(y);
    ++rows;
  }
};

inline double supervised_loss(Graph& g, const TeacherNet& net, const LabeledSet& set,
                              const std::vector<int>& idx, float yaw_w, bool backward) {
  int obs_dim = net.config().input_dim();
  int n_act = net.config().n_act;
  int b = static_cast<int>(idx.size());
  Tensor obs({b, obs_dim});
  Tensor act({b, n_act});
  Tensor yaw({b, 1});
  for (int r = 0; r < b; ++r) {
    int i = idx[static_cast<std::size_t>(r)];
    std::copy_n(&set.obs[static_cast<std::size_t>(i) * obs_dim], obs_dim,
                &obs.data[static_cast<std::size_t>(r) * obs_dim]);
    std::copy_n(&set.action[static_cast<std::size_t>(i) * n_act], n_act,
                &act.data[static_cast<std::size_t>(r) * n_act]);
    yaw.data[static_cast<std::size_t>(r)] = set.yaw[static_cast<std::size_t>(i)];
  }
  PolicyOutput out = net.forward(g, g.leaf(std::move(obs)));
  Var l_action = g.mse(out.action, g.leaf(std::move(act)));
  Var wd = g.wrapped_diff(out.yaw, g.leaf(std::move(yaw)));
  Var l_yaw = g.mse(wd, g.leaf(Tensor({b, 1})));
  Var loss = g.add(l_action, g.scale(l_yaw, yaw_w));
  double v = g.value(loss).data[0];
  if (!std::isfinite(v)) throw TrainDivergence("behavior cloning: non-finite loss");
  if (backward) g.backward(loss);
  return v;
}

}  // namespace detail

inline BcResult train_teacher_bc(VecEnv& envs, TeacherNet& teacher, const BcConfig& cfg,
                                 MetricsSink* metrics = nullptr) {
  BcResult result;
  if (cfg.iterations == 0) return result;
  detail::LabeledSet train_set, holdout;
  std::mt19937 split_rng = make_rng(cfg.seed, "bc.split");
  std::mt19937 mix_rng = make_rng(cfg.seed, "bc.mix");
  std::uniform_real_distribution<float> coin(0.0f, 1.0f);
  num::AdamConfig adam;
  adam.lr = cfg.lr;
  int obs_dim = teacher.config().input_dim();

  for (int round = 0; round < cfg.iterations; ++round) {
    float beta = std::pow(cfg.expert_mix_decay, static_cast<float>(round));
    std::vector<Observation> obs = envs.reset_all();
    for (int t = 0; t < cfg.horizon; ++t) {
      // teacher proposals for the whole batch
      Graph g(&teacher.store());
      PolicyOutput pi = teacher.forward(g, g.leaf(teacher.obs_tensor(obs)));
      const Tensor& net_act = g.value(pi.action);

      std::vector<std::array<float, env::kActionDim>> act(static_cast<std::size_t>(envs.size()));
      std::vector<float> row(static_cast<std::size_t>(obs_dim));
      for (int i = 0; i < envs.size(); ++i) {
        const Env& e = envs.at(i);
        ExpertAction label = scripted_expert(e.terrain(), e.state(), obs[static_cast<std::size_t>(i)],
                                             e.config().terrain.difficulty,
                                             e.config().climb_limit);
        TeacherNet::fill_obs_row(obs[static_cast<std::size_t>(i)], row.data());
        bool to_holdout = coin(split_rng) < cfg.holdout_fraction;
        (to_holdout ? holdout : train_set).push(row.data(), obs_dim, label.action, label.yaw);
        if (coin(mix_rng) < beta) {
          act[static_cast<std::size_t>(i)] = label.action;
        } else {
          for (int k = 0; k < env::kActionDim; ++k)
            act[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
                net_act.at2(i, k);
        }
      }
      auto step = envs.step_all(act, true);
      for (int i = 0; i < envs.size(); ++i) obs[static_cast<std::size_t>(i)] = step.results[static_cast<std::size_t>(i)].obs;
    }

    if (holdout.rows == 0 || train_set.rows == 0)
      throw Error("train_teacher_bc: empty dataset; increase horizon");
    if (round == 0) {
      Graph g(&teacher.store());
      std::vector<int> all(static_cast<std::size_t>(holdout.rows));
      std::iota(all.begin(), all.end(), 0);
      result.initial_holdout_loss =
          detail::supervised_loss(g, teacher, holdout, all, cfg.yaw_loss_weight, false);
    }

    std::mt19937 shuffle_rng = make_rng(cfg.seed, "bc.shuffle", static_cast<uint64_t>(round));
    double round_loss = 0.0;
    int batches = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::vector<int> order(static_cast<std::size_t>(train_set.rows));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (int lo = 0; lo + 1 < train_set.rows; lo += cfg.minibatch) {
        int hi = std::min(train_set.rows, lo + cfg.minibatch);
        std::vector<int> idx(order.begin() + lo, order.begin() + hi);
        teacher.store().zero_grads();
        Graph g(&teacher.store());
        round_loss += detail::supervised_loss(g, teacher, train_set, idx, cfg.yaw_loss_weight, true);
        num::adam_step(teacher.store(), adam);
        ++batches;
      }
    }
    round_loss /= std::max(1, batches);
    result.round_losses.push_back(round_loss);
    if (metrics)
      metrics->append({{"phase", "bc"},
                       {"iter", round},
                       {"loss", round_loss},
                       {"dataset_rows", train_set.rows},
                       {"expert_mix", beta}});
  }

  Graph g(&teacher.store());
  std::vector<int> all(static_cast<std::size_t>(holdout.rows));
  std::iota(all.begin(), all.end(), 0);
  result.final_holdout_loss =
      detail::supervised_loss(g, teacher, holdout, all, cfg.yaw_loss_weight, false);
  return result;
}

// ---------------------------------------------------------------------------
// PPO with GAE on the vectorized envs (clipped surrogate objective).

struct PPOConfig {
  float gamma = 0.99f;
  float gae_lambda = 0.95f;
  float clip = 0.2f;
  int epochs = 4;
  int minibatches = 4;
  float entropy_coef = 0.003f;
  float value_coef = 0.5f;
  float yaw_aux_weight = 0.5f;  // supervised yaw-head regression to the privileged target
  float lr = 3e-4f;
  int horizon = 64;
  int iterations = 100;
  float init_log_std = -0.5f;
  uint64_t seed = 0;

  void validate() const {
    if (gamma < 0.0f || gamma >= 1.0f) throw Error("PPOConfig: gamma must lie in [0,1)");
    if (clip <= 0.0f) throw Error("PPOConfig: clip must be > 0");
  }
};

// advantages/returns for one env's trajectory; values has T+1 entries
inline std::pair<std::vector<float>, std::vector<float>> gae(
    const std::vector<float>& rewards, const std::vector<float>& values,
    const std::vector<char>& dones, float gamma, float lam) {
  if (values.size() != rewards.size() + 1 || dones.size() != rewards.size())
    throw Error("gae: length mismatch");
  std::vector<float> adv(rewards.size()), ret(rewards.size());
  float running = 0.0f;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    float not_done = dones[static_cast<std::size_t>(t)] ? 0.0f : 1.0f;
    float delta = rewards[static_cast<std::size_t>(t)] +
                  gamma * values[static_cast<std::size_t>(t) + 1] * not_done -
                  values[static_cast<std::size_t>(t)];
    running = delta + gamma * lam * not_done * running;
    adv[static_cast<std::size_t>(t)] = running;
    ret[static_cast<std::size_t>(t)] = running + values[static_cast<std::size_t>(t)];
  }
  return {adv, ret};
}

// -mean(min(ratio*adv, clamp(ratio, 1-clip, 1+clip)*adv))
inline Var ppo_clipped_surrogate(Graph& g, Var logp_new, Var logp_old_leaf, Var adv_leaf,
                                 float clip) {
  Var ratio = g.exp_(g.sub(logp_new, logp_old_leaf));
  Var unclipped = g.mul(ratio, adv_leaf);
  Var clipped = g.mul(g.clamp(ratio, 1.0f - clip, 1.0f + clip), adv_leaf);
  return g.neg(g.mean_all(g.min_ew(unclipped, clipped)));
}

struct PPOResult {
  std::vector<double> mean_returns;  // per iteration, completed episodes
  double initial_mean_return = 0.0;
  double final_mean_return = 0.0;
};

class PPOTrainer {
 public:
  PPOTrainer(TeacherNet& teacher, PPOConfig cfg) : teacher_(&teacher), cfg_(cfg) {
    cfg_.validate();
    ParamStore& store = teacher.store();
    std::mt19937 rng = make_rng(cfg_.seed, "ppo.init");
    if (!store.has("ppo.log_std"))
      store.create("ppo.log_std",
                   Tensor({teacher.config().n_act}, std::vector<float>(
                                                        static_cast<std::size_t>(teacher.config().n_act),
                                                        cfg_.init_log_std)));
    if (!store.has("ppo.v0.w")) {
      int in = teacher.config().input_dim();
      num::init_linear(store, "ppo.v0", in, 64, rng);
      num::init_linear(store, "ppo.v1", 64, 64, rng);
      num::init_linear(store, "ppo.vhead", 64, 1, rng);
    }
  }

  Var value(Graph& g, Var obs) const {
    Var x = g.tanh_(num::linear(g, obs, "ppo.v0"));
    x = g.tanh_(num::linear(g, x, "ppo.v1"));
    return num::linear(g, x, "ppo.vhead");
  }

  // gaussian log prob of rows in `actions` under mean=policy(obs), std=exp(log_std)
  Var log_prob(Graph& g, Var action_mean, Var actions_leaf) const {
    int b = g.value(action_mean).dim(0);
    Var log_std = g.broadcast_rows(g.param("ppo.log_std"), b);
    Var inv_std = g.exp_(g.neg(log_std));
    Var z = g.mul(g.sub(actions_leaf, action_mean), inv_std);
    Var per_dim = g.add_scalar(g.neg(g.add(g.scale(g.mul(z, z), 0.5f), log_std)),
                               -0.5f * std::log(2.0f * static_cast<float>(M_PI)));
    return g.sum_cols(per_dim);
  }

  PPOResult train(VecEnv& envs, int iterations, MetricsSink* metrics = nullptr) {
    PPOResult out;
    ParamStore& store = teacher_->store();
    num::AdamConfig adam;
    adam.lr = cfg_.lr;
    const int B = envs.size();
    const int T = cfg_.horizon;
    const int obs_dim = teacher_->config().input_dim();
    const int n_act = teacher_->config().n_act;
    std::mt19937 action_rng = make_rng(cfg_.seed, "ppo.actions");
    std::normal_distribution<float> normal(0.0f, 1.0f);

    std::vector<Observation> obs = envs.reset_all();
    for (int iter = 0; iter < iterations; ++iter) {
      Tensor obs_buf({T * B, obs_dim});
      Tensor act_buf({T * B, n_act});
      std::vector<float> yaw_target(static_cast<std::size_t>(T * B));
      std::vector<float> logp_old(static_cast<std::size_t>(T * B));
      std::vector<std::vector<float>> rewards(static_cast<std::size_t>(B));
      std::vector<std::vector<float>> values(static_cast<std::size_t>(B));
      std::vector<std::vector<char>> dones(static_cast<std::size_t>(B));
      std::vector<double> episode_returns;
      std::vector<double> running_return(static_cast<std::size_t>(B), 0.0);

      for (int t = 0; t < T; ++t) {
        Graph g(&store);
        Var obs_v = g.leaf(teacher_->obs_tensor(obs));
        PolicyOutput pi = teacher_->forward(g, obs_v);
        Var val = value(g, obs_v);
        const Tensor& mean = g.value(pi.action);
        const Tensor& log_std = store.get("ppo.log_std");

        Tensor sampled({B, n_act});
        for (int i = 0; i < B; ++i)
          for (int k = 0; k < n_act; ++k)
            sampled.at2(i, k) =
                mean.at2(i, k) + std::exp(log_std.data[static_cast<std::size_t>(k)]) * normal(action_rng);
        Var logp = log_prob(g, pi.action, g.leaf(sampled));

        std::vector<std::array<float, env::kActionDim>> act(static_cast<std::size_t>(B));
        for (int i = 0; i < B; ++i) {
          for (int k = 0; k < n_act; ++k)
            act[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = std::clamp(sampled.at2(i, k), -1.0f, 1.0f);
          std::copy_n(&g.value(obs_v).data[static_cast<std::size_t>(i) * obs_dim], obs_dim,
                      &obs_buf.data[(static_cast<std::size_t>(t) * B + i) * obs_dim]);
          std::copy_n(&sampled.data[static_cast<std::size_t>(i) * n_act], n_act,
                      &act_buf.data[(static_cast<std::size_t>(t) * B + i) * n_act]);
          yaw_target[static_cast<std::size_t>(t) * B + i] = obs[static_cast<std::size_t>(i)].yaw_err;
          logp_old[static_cast<std::size_t>(t) * B + i] = g.value(logp).at2(i, 0);
          values[static_cast<std::size_t>(i)].push_back(g.value(val).at2(i, 0));
        }
        auto step = envs.step_all(act, true);
        for (int i = 0; i < B; ++i) {
          const auto& r = step.results[static_cast<std::size_t>(i)];
          rewards[static_cast<std::size_t>(i)].push_back(r.reward);
          dones[static_cast<std::size_t>(i)].push_back(r.done ? 1 : 0);
          running_return[static_cast<std::size_t>(i)] += r.reward;
          if (r.done) {
            episode_returns.push_back(running_return[static_cast<std::size_t>(i)]);
            running_return[static_cast<std::size_t>(i)] = 0.0;
          }
          obs[static_cast<std::size_t>(i)] = r.obs;
        }
      }
      // bootstrap values for the final states
      {
        Graph g(&store);
        Var val = value(g, g.leaf(teacher_->obs_tensor(obs)));
        for (int i = 0; i < B; ++i) values[static_cast<std::size_t>(i)].push_back(g.value(val).at2(i, 0));
      }

      Tensor adv_buf({T * B, 1});
      Tensor ret_buf({T * B, 1});
      for (int i = 0; i < B; ++i) {
        auto [adv, ret] = gae(rewards[static_cast<std::size_t>(i)], values[static_cast<std::size_t>(i)],
                              dones[static_cast<std::size_t>(i)], cfg_.gamma, cfg_.gae_lambda);
        for (int t = 0; t < T; ++t) {
          adv_buf.data[static_cast<std::size_t>(t) * B + i] = adv[static_cast<std::size_t>(t)];
          ret_buf.data[static_cast<std::size_t>(t) * B + i] = ret[static_cast<std::size_t>(t)];
        }
      }
      // normalize advantages
      double mean_a = 0.0, var_a = 0.0;
      for (float a : adv_buf.data) mean_a += a;
      mean_a /= adv_buf.numel();
      for (float a : adv_buf.data) var_a += (a - mean_a) * (a - mean_a);
      float std_a = static_cast<float>(std::sqrt(var_a / adv_buf.numel()) + 1e-8);
      for (float& a : adv_buf.data) a = static_cast<float>((a - mean_a) / std_a);

      std::mt19937 shuffle_rng = make_rng(cfg_.seed, "ppo.shuffle", static_cast<uint64_t>(iter));
      int rows = T * B;
      for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(rows));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        int mb = std::max(1, rows / cfg_.minibatches);
        for (int lo = 0; lo < rows; lo += mb) {
          int hi = std::min(rows, lo + mb);
          int b = hi - lo;
          Tensor o({b, obs_dim}), a({b, n_act}), lp({b, 1}), ad({b, 1}), rt({b, 1}), yt({b, 1});
          for (int r = 0; r < b; ++r) {
            int i = order[static_cast<std::size_t>(lo + r)];
            std::copy_n(&obs_buf.data[static_cast<std::size_t>(i) * obs_dim], obs_dim,
                        &o.data[static_cast<std::size_t>(r) * obs_dim]);
            std::copy_n(&act_buf.data[static_cast<std::size_t>(i) * n_act], n_act,
                        &a.data[static_cast<std::size_t>(r) * n_act]);
            lp.data[static_cast<std::size_t>(r)] = logp_old[static_cast<std::size_t>(i)];
            ad.data[static_cast<std::size_t>(r)] = adv_buf.data[static_cast<std::size_t>(i)];
            rt.data[static_cast<std::size_t>(r)] = ret_buf.data[static_cast<std::size_t>(i)];
            yt.data[static_cast<std::size_t>(r)] = yaw_target[static_cast<std::size_t>(i)];
          }
          store.zero_grads();
          Graph g(&store);
          Var obs_v = g.leaf(std::move(o));
          PolicyOutput pi = teacher_->forward(g, obs_v);
          Var logp = log_prob(g, pi.action, g.leaf(std::move(a)));
          Var l_pi = ppo_clipped_surrogate(g, logp, g.leaf(std::move(lp)), g.leaf(std::move(ad)),
                                           cfg_.clip);
          Var l_v = g.mse(value(g, obs_v), g.leaf(std::move(rt)));
          // entropy of a diagonal gaussian depends on log_std alone
          Var entropy = g.sum_all(g.param("ppo.log_std"));
          Var l_yaw = g.mse(pi.yaw, g.leaf(std::move(yt)));
          Var loss = g.add(l_pi, g.scale(l_v, cfg_.value_coef));
          loss = g.sub(loss, g.scale(entropy, cfg_.entropy_coef));
          loss = g.add(loss, g.scale(l_yaw, cfg_.yaw_aux_weight));
          double lv = g.value(loss).data[0];
          if (!std::isfinite(lv))
            throw TrainDivergence("ppo: non-finite loss at iteration " + std::to_string(iter));
          g.backward(loss);
          num::adam_step(store, adam);
        }
      }

      double mean_ret = 0.0;
      if (!episode_returns.empty()) {
        for (double r : episode_returns) mean_ret += r;
        mean_ret /= static_cast<double>(episode_returns.size());
      }
      out.mean_returns.push_back(mean_ret);
      if (iter == 0) out.initial_mean_return = mean_ret;
      if (metrics)
        metrics->append({{"phase", "ppo"},
                         {"iter", iter},
                         {"mean_return", mean_ret},
                         {"episodes", episode_returns.size()}});
    }
    if (!out.mean_returns.empty()) out.final_mean_return = out.mean_returns.back();
    return out;
  }

 private:
  TeacherNet* teacher_;
  PPOConfig cfg_;
};

// Copy only the parameters under `prefix` (checkpointing a clean teacher out
// of a store that also carries PPO extras).
inline ParamStore filter_params(const ParamStore& store, const std::string& prefix) {
  ParamStore out;
  for (const auto& [name, t] : store.params())
    if (name.rfind(prefix + ".", 0) == 0) out.create(name, t);
  return out;
}

}  // namespace spikekour::policy
