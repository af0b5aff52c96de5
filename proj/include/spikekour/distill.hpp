#pragma once

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "spikekour/event_io.hpp"
#include "spikekour/policy.hpp"
#include "spikekour/snn.hpp"

namespace spikekour::policy {

// Depth-to-event front end for one camera: keeps the per-pixel reference
// state across a single episode and rasterizes each control tick's events.
class EventFrontend {
 public:
  EventFrontend(events::EventSimConfig cfg, int width, int height, double tick_seconds)
      : cfg_(cfg), width_(width), height_(height), tick_seconds_(tick_seconds) {}

  void reset() {
    state_ = events::PixelRefState{};
    prev_ = events::IntensityFrame{};
    tick_ = 0;
  }

  // Consumes the tick's true depth frame, returns the event count frame for
  // the interval since the previous tick (zero frame on the first tick).
  events::EventFrame next(const events::DepthFrame& depth_true) {
    events::IntensityFrame l = events::depth_to_intensity(depth_true, cfg_);
    events::EventFrame frame(width_, height_);
    if (!state_.initialized) {
      state_.init(l);
    } else {
      double t0 = (tick_ - 1) * tick_seconds_;
      double t1 = tick_ * tick_seconds_;
      events::EventStream s = events::simulate_events(prev_, l, t0, t1, cfg_, state_);
      frame = events::events_to_frame(s, t0, t1, width_, height_, true);
    }
    prev_ = l;
    ++tick_;
    return frame;
  }

 private:
  events::EventSimConfig cfg_;
  int width_;
  int height_;
  double tick_seconds_;
  events::PixelRefState state_;
  events::IntensityFrame prev_;
  int tick_ = 0;
};

// The student never sees yaw error (it must predict heading): body velocity
// plus the last action only.
inline void fill_student_proprio(const Observation& obs, float* dst) {
  dst[0] = obs.proprio[0];
  dst[1] = obs.proprio[1];
  dst[2] = obs.proprio[2];
  for (int k = 0; k < env::kActionDim; ++k) dst[3 + k] = obs.proprio[4 + static_cast<std::size_t>(k)];
}

constexpr int kStudentProprioDim = 3 + env::kActionDim;

struct DistillConfig {
  int warmup_iters = 60;
  int onpolicy_iters = 60;
  int segment_ticks = 8;  // truncated-BPTT window
  int envs = 16;
  float lr = 1e-3f;
  float onpolicy_lr = 3e-4f;  // gentler fine-tuning once the student drives
  float action_loss_weight = 1.0f;
  float yaw_loss_weight = 0.5f;
  env::TerrainKind terrain = env::TerrainKind::gap;
  std::vector<float> difficulties = {0.1f, 0.2f, 0.3f};
  int probe_envs = 4;
  int probe_ticks = 40;
  uint64_t seed = 0;

  void validate() const {
    if (warmup_iters < 0 || onpolicy_iters < 0 || segment_ticks < 1 || envs < 1)
      throw Error("DistillConfig: counts must be positive");
    if (lr <= 0.0f) throw Error("DistillConfig: lr must be > 0");
  }
};

struct DistillPhaseResult {
  std::vector<double> losses;
  double probe_loss_before = 0.0;
  double probe_loss_after = 0.0;
};

// Two-phase ANN-to-SNN distillation: the teacher (frozen) labels every state;
// the student minimizes L_action + w * L_yaw, with surrogate gradients
// flowing through its spiking layers across each training segment.
class Distiller {
 public:
  Distiller(TeacherNet& teacher, snn::StudentNet& student, const EnvConfig& env_base,
            DistillConfig cfg, events::EventSimConfig sim_cfg, bool depth_input = false)
      : teacher_(&teacher),
        student_(&student),
        cfg_(cfg),
        sim_cfg_(sim_cfg),
        depth_input_(depth_input) {
    cfg_.validate();
    if (student.config().proprio_dim != kStudentProprioDim)
      throw Error("Distiller: student proprio_dim must be " + std::to_string(kStudentProprioDim));
    EnvConfig base = env_base;
    base.render_depth = true;
    base.terrain.kind = cfg_.terrain;
    base.camera.width = student.config().frame_width;
    base.camera.height = student.config().frame_height;
    sim_cfg_.max_range = base.camera.max_range;
    envs_ = std::make_unique<VecEnv>(base, cfg_.envs, substream_seed(cfg_.seed, "train"),
                                     cfg_.difficulties);
    for (int i = 0; i < cfg_.envs; ++i)
      frontends_.emplace_back(sim_cfg_, student.config().frame_width,
                              student.config().frame_height, base.tick_seconds());
    probe_base_ = base;
  }

  // Fixed teacher-driven probe trajectories; inputs and labels are recorded
  // once, so the held-out loss is comparable across training stages.
  void build_probe() {
    probe_.clear();
    VecEnv envs(probe_base_, cfg_.probe_envs, substream_seed(cfg_.seed, "probe"),
                cfg_.difficulties);
    std::vector<EventFrontend> fronts;
    for (int i = 0; i < cfg_.probe_envs; ++i)
      fronts.emplace_back(sim_cfg_, student_->config().frame_width,
                          student_->config().frame_height, probe_base_.tick_seconds());
    std::vector<Observation> obs = envs.reset_all();
    for (auto& f : fronts) f.reset();
    for (int t = 0; t < cfg_.probe_ticks; ++t) {
      ProbeTick tick;
      tick.frames = make_frames(fronts, obs, envs);
      tick.proprio = make_proprio(obs);
      label(obs, tick.action, tick.yaw);
      // teacher drives the probe
      std::vector<std::array<float, env::kActionDim>> act(static_cast<std::size_t>(cfg_.probe_envs));
      for (int i = 0; i < cfg_.probe_envs; ++i)
        for (int k = 0; k < env::kActionDim; ++k)
          act[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = tick.action.at2(i, k);
      auto step = envs.step_all(act, true);
      tick.keep.assign(static_cast<std::size_t>(cfg_.probe_envs), 1.0f);
      for (int i = 0; i < cfg_.probe_envs; ++i) {
        obs[static_cast<std::size_t>(i)] = step.results[static_cast<std::size_t>(i)].obs;
        if (step.done[static_cast<std::size_t>(i)]) {
          tick.keep[static_cast<std::size_t>(i)] = 0.0f;
          fronts[static_cast<std::size_t>(i)].reset();
        }
      }
      probe_.push_back(std::move(tick));
      // observation snapshots let tests re-derive the labels independently
      probe_obs_.push_back(obs);
    }
  }

  // Runs the recorded probe through the current student, Eq.-normalized loss.
  double probe_loss() {
    if (probe_.empty()) throw Error("Distiller: build_probe first");
    student_->reset_state(cfg_.probe_envs);
    double total = 0.0;
    for (const ProbeTick& tick : probe_) {
      Graph g(&student_->store());
      student_->begin_segment(g);
      auto out = student_->forward(g.leaf(tick.frames), g.leaf(tick.proprio));
      Var l = tick_loss(g, out, g.leaf(tick.action), g.leaf(tick.yaw));
      total += g.value(l).data[0];
      student_->end_segment();
      student_->mask_reset(tick.keep);
    }
    return total / static_cast<double>(probe_.size());
  }

  DistillPhaseResult run_warmup(MetricsSink* metrics = nullptr) {
    return run_phase(false, cfg_.warmup_iters, "warmup", metrics);
  }
  DistillPhaseResult run_onpolicy(MetricsSink* metrics = nullptr) {
    return run_phase(true, cfg_.onpolicy_iters, "onpolicy", metrics);
  }

  snn::FiringStats& firing_stats() { return stats_; }
  const std::vector<std::vector<Observation>>& probe_observations() const { return probe_obs_; }

  // Teacher labels for arbitrary observations (exposed for label-consistency checks).
  void label(const std::vector<Observation>& obs, Tensor& action, Tensor& yaw) const {
    Graph g(&teacher_->store());
    PolicyOutput out = teacher_->forward(g, g.leaf(teacher_->obs_tensor(obs)));
    action = g.value(out.action);
    yaw = g.value(out.yaw);
  }

 private:
  struct ProbeTick {
    Tensor frames;
    Tensor proprio;
    Tensor action;
    Tensor yaw;
    std::vector<float> keep;
  };

  Tensor make_frames(std::vector<EventFrontend>& fronts, const std::vector<Observation>& obs,
                     VecEnv& envs) {
    (void)envs;
    const auto& sc = student_->config();
    Tensor t({static_cast<int>(obs.size()), sc.in_channels, sc.frame_height, sc.frame_width});
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (depth_input_) {
        // the baseline consumes the lighting-corrupted observation path
        for (int y = 0; y < sc.frame_height; ++y)
          for (int x = 0; x < sc.frame_width; ++x)
            t.at4(static_cast<int>(i), 0, y, x) =
                obs[i].depth.at(x, y) / probe_base_.camera.max_range;
      } else {
        // the event camera sees the true scene
        events::EventFrame f = fronts[i].next(obs[i].depth_true);
        for (int y = 0; y < sc.frame_height; ++y)
          for (int x = 0; x < sc.frame_width; ++x) {
            std::size_t px = static_cast<std::size_t>(y) * sc.frame_width + x;
            t.at4(static_cast<int>(i), 0, y, x) = f.pos[px];
            t.at4(static_cast<int>(i), 1, y, x) = f.neg[px];
          }
      }
    }
    return t;
  }

  Tensor make_proprio(const std::vector<Observation>& obs) const {
    Tensor t({static_cast<int>(obs.size()), kStudentProprioDim});
    for (std::size_t i = 0; i < obs.size(); ++i)
      fill_student_proprio(obs[i], &t.data[i * kStudentProprioDim]);
    return t;
  }

  // L = w_a * L_action + w_y * L_yaw with the published normalizations:
  // L_action averages over n action dims and m robots, L_yaw over m robots.
  Var tick_loss(Graph& g, const snn::StudentOutput& out, Var action_label, Var yaw_label) const {
    Var l_action = g.mse(out.action, action_label);
    Var wd = g.wrapped_diff(out.yaw, yaw_label);
    Var l_yaw = g.mse(wd, g.leaf(Tensor(g.value(wd).shape)));
    return g.add(g.scale(l_action, cfg_.action_loss_weight), g.scale(l_yaw, cfg_.yaw_loss_weight));
  }

  DistillPhaseResult run_phase(bool student_drives, int iters, const char* phase,
                               MetricsSink* metrics) {
    DistillPhaseResult result;
    if (probe_.empty()) build_probe();
    result.probe_loss_before = probe_loss();
    num::AdamConfig adam;
    adam.lr = student_drives ? cfg_.onpolicy_lr : cfg_.lr;

    if (!rollout_live_) {
      obs_ = envs_->reset_all();
      for (auto& f : frontends_) f.reset();
      student_->reset_state(cfg_.envs);
      rollout_live_ = true;
    } else {
      // probe_loss ran the student over the probe batch; restore training state
      student_->reset_state(cfg_.envs);
      for (int i = 0; i < cfg_.envs; ++i) {
        obs_[static_cast<std::size_t>(i)] = envs_->reset_env(i);
        frontends_[static_cast<std::size_t>(i)].reset();
      }
    }

    for (int iter = 0; iter < iters; ++iter) {
      Graph g(&student_->store());
      student_->begin_segment(g);
      Var loss_sum;
      for (int k = 0; k < cfg_.segment_ticks; ++k) {
        Tensor frames = make_frames(frontends_, obs_, *envs_);
        Tensor proprio = make_proprio(obs_);
        auto out = student_->forward(g.leaf(std::move(frames)), g.leaf(std::move(proprio)),
                                     &stats_);
        Tensor label_action, label_yaw;
        label(obs_, label_action, label_yaw);

        std::vector<std::array<float, env::kActionDim>> act(static_cast<std::size_t>(cfg_.envs));
        const Tensor& drive =
            student_drives ? g.value(out.action) : label_action;
        for (int i = 0; i < cfg_.envs; ++i)
          for (int kk = 0; kk < env::kActionDim; ++kk)
            act[static_cast<std::size_t>(i)][static_cast<std::size_t>(kk)] = drive.at2(i, kk);

        Var l = tick_loss(g, out, g.leaf(std::move(label_action)), g.leaf(std::move(label_yaw)));
        loss_sum = k == 0 ? l : g.add(loss_sum, l);

        auto step = envs_->step_all(act, true);
        std::vector<float> keep(static_cast<std::size_t>(cfg_.envs), 1.0f);
        bool any_done = false;
        for (int i = 0; i < cfg_.envs; ++i) {
          obs_[static_cast<std::size_t>(i)] = step.results[static_cast<std::size_t>(i)].obs;
          if (step.done[static_cast<std::size_t>(i)]) {
            keep[static_cast<std::size_t>(i)] = 0.0f;
            frontends_[static_cast<std::size_t>(i)].reset();
            any_done = true;
          }
        }
        if (any_done) student_->mask_reset(keep);
      }
      Var loss = g.scale(loss_sum, 1.0f / static_cast<float>(cfg_.segment_ticks));
      double lv = g.value(loss).data[0];
      if (!std::isfinite(lv))
        throw TrainDivergence(std::string("distill ") + phase + ": non-finite loss at iteration " +
                              std::to_string(iter));
      student_->store().zero_grads();
      g.backward(loss);
      student_->end_segment();
      num::adam_step(student_->store(), adam);
      result.losses.push_back(lv);
      if (metrics)
        metrics->append({{"phase", phase}, {"iter", iter}, {"loss", lv}});
    }
    result.probe_loss_after = probe_loss();
    rollout_live_ = false;  // probe run disturbed the live rollout state
    return result;
  }

  TeacherNet* teacher_;
  snn::StudentNet* student_;
  DistillConfig cfg_;
  events::EventSimConfig sim_cfg_;
  bool depth_input_;
  std::unique_ptr<VecEnv> envs_;
  std::vector<EventFrontend> frontends_;
  std::vector<Observation> obs_;
  bool rollout_live_ = false;
  std::vector<ProbeTick> probe_;
  std::vector<std::vector<Observation>> probe_obs_;
  EnvConfig probe_base_;
  snn::FiringStats stats_;
};

// ---------------------------------------------------------------------------
// Evaluation harness: success rates per (terrain, difficulty, lighting).

class EpisodePolicy {
 public:
  virtual ~EpisodePolicy() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(const Env& e) { (void)e; }
  virtual std::array<float, env::kActionDim> act(const Observation& obs, const Env& e) = 0;
};

class ExpertPolicy : public EpisodePolicy {
 public:
  explicit ExpertPolicy(ExpertConfig cfg = {}) : cfg_(cfg) {}
  std::string name() const override { return "expert"; }
  std::array<float, env::kActionDim> act(const Observation& obs, const Env& e) override {
    return scripted_expert(e.terrain(), e.state(), obs, e.config().terrain.difficulty,
                           e.config().climb_limit, cfg_)
        .action;
  }

 private:
  ExpertConfig cfg_;
};

class TeacherPolicy : public EpisodePolicy {
 public:
  explicit TeacherPolicy(TeacherNet& net) : net_(&net) {}
  std::string name() const override { return "teacher"; }
  std::array<float, env::kActionDim> act(const Observation& obs, const Env&) override {
    Graph g(&net_->store());
    PolicyOutput out = net_->forward(g, g.leaf(net_->obs_tensor({obs})));
    std::array<float, env::kActionDim> a{};
    for (int k = 0; k < net_->config().n_act; ++k) a[static_cast<std::size_t>(k)] = g.value(out.action).at2(0, k);
    return a;
  }

 private:
  TeacherNet* net_;
};

class StudentPolicy : public EpisodePolicy {
 public:
  StudentPolicy(snn::StudentNet& net, events::EventSimConfig sim_cfg, double tick_seconds,
                bool depth_input, std::string label = "")
      : net_(&net),
        frontend_(sim_cfg, net.config().frame_width, net.config().frame_height, tick_seconds),
        depth_input_(depth_input),
        label_(label.empty() ? (depth_input ? "depth_baseline" : "student") : std::move(label)) {}

  std::string name() const override { return label_; }

  void begin_episode(const Env& e) override {
    (void)e;
    net_->reset_state(1);
    frontend_.reset();
  }

  std::array<float, env::kActionDim> act(const Observation& obs, const Env& e) override {
    const auto& sc = net_->config();
    Tensor frame({1, sc.in_channels, sc.frame_height, sc.frame_width});
    if (depth_input_) {
      for (int y = 0; y < sc.frame_height; ++y)
        for (int x = 0; x < sc.frame_width; ++x)
          frame.at4(0, 0, y, x) = obs.depth.at(x, y) / e.config().camera.max_range;
    } else {
      events::EventFrame f = frontend_.next(obs.depth_true);
      for (int y = 0; y < sc.frame_height; ++y)
        for (int x = 0; x < sc.frame_width; ++x) {
          std::size_t px = static_cast<std::size_t>(y) * sc.frame_width + x;
          frame.at4(0, 0, y, x) = f.pos[px];
          frame.at4(0, 1, y, x) = f.neg[px];
        }
    }
    Tensor proprio({1, kStudentProprioDim});
    fill_student_proprio(obs, proprio.data.data());

    Graph g(&net_->store());
    net_->begin_segment(g);
    auto out = net_->forward(g.leaf(std::move(frame)), g.leaf(std::move(proprio)), stats_);
    std::array<float, env::kActionDim> a{};
    for (int k = 0; k < sc.n_act; ++k) a[static_cast<std::size_t>(k)] = g.value(out.action).at2(0, k);
    net_->end_segment();
    return a;
  }

  void collect_stats(snn::FiringStats* stats) { stats_ = stats; }

 private:
  snn::StudentNet* net_;
  EventFrontend frontend_;
  bool depth_input_;
  std::string label_;
  snn::FiringStats* stats_ = nullptr;
};

struct EvalRequest {
  std::vector<env::TerrainKind> terrains = {env::TerrainKind::gap};
  std::vector<float> difficulties = {0.2f};
  std::vector<env::Lighting> lightings = {env::Lighting::normal};
  int episodes = 50;
  uint64_t seed = 0;
};

struct EvalRow {
  std::string policy;
  env::TerrainKind terrain;
  float difficulty;
  env::Lighting lighting;
  int episodes;
  int successes;
  double mean_progress;
  double mean_motor_energy_mJ;

  double success_rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
};

struct EvalReport {
  std::vector<EvalRow> rows;
  bool error = false;
  std::string message;

  nlohmann::json to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : rows)
      rs.push_back({{"policy", r.policy},
                    {"terrain", env::to_string(r.terrain)},
                    {"difficulty", r.difficulty},
                    {"lighting", env::to_string(r.lighting)},
                    {"episodes", r.episodes},
                    {"successes", r.successes},
                    {"success_rate", r.success_rate()},
                    {"mean_progress", r.mean_progress},
                    {"mean_motor_energy_mJ", r.mean_motor_energy_mJ}});
    return {{"rows", rs}, {"error", error}, {"message", message}};
  }
};

inline EvalReport evaluate(EpisodePolicy& policy, const EnvConfig& base, const EvalRequest& req) {
  EvalReport report;
  if (req.episodes <= 0) {
    report.error = true;
    report.message = "no episodes requested";
    return report;
  }
  uint64_t cell = 0;
  for (env::TerrainKind terrain : req.terrains)
    for (float difficulty : req.difficulties)
      for (env::Lighting lighting : req.lightings) {
        EvalRow row;
        row.policy = policy.name();
        row.terrain = terrain;
        row.difficulty = difficulty;
        row.lighting = lighting;
        row.episodes = req.episodes;
        row.successes = 0;
        row.mean_progress = 0.0;
        row.mean_motor_energy_mJ = 0.0;
        for (int e = 0; e < req.episodes; ++e) {
          EnvConfig cfg = base;
          cfg.terrain.kind = terrain;
          cfg.terrain.difficulty = difficulty;
          cfg.lighting = lighting;
          cfg.terrain.seed = substream_seed(req.seed, "eval.terrain",
                                            cell * 1000003ull + static_cast<uint64_t>(e));
          Env envi(cfg);
          Observation obs =
              envi.reset(substream_seed(req.seed, "eval.episode", cell * 1000003ull + static_cast<uint64_t>(e)));
          policy.begin_episode(envi);
          while (!envi.done()) {
            auto r = envi.step(policy.act(obs, envi));
            obs = r.obs;
          }
          const env::EpisodeResult& res = envi.result();
          row.successes += res.success ? 1 : 0;
          row.mean_progress += res.progress;
          row.mean_motor_energy_mJ += res.motor_energy_mJ;
        }
        row.mean_progress /= req.episodes;
        row.mean_motor_energy_mJ /= req.episodes;
        report.rows.push_back(row);
        ++cell;
      }
  return report;
}

}  // namespace spikekour::policy
