#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikekour/distill.hpp"
#include "spikekour/energy.hpp"

namespace spikekour {

namespace detail {
// floats carry decimal intent (0.1, not 0.10000000149); shortest-decimal
// serialization keeps config files readable
inline double jf(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.7g", static_cast<double>(v));
  return std::stod(buf);
}
inline std::vector<double> jf(const std::vector<float>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (float x : v) out.push_back(jf(x));
  return out;
}
}  // namespace detail

// One JSON document drives a whole run; every field here has a compiled-in
// default, and files override only the keys they mention (flags win last).
struct RunConfig {
  uint64_t seed = 0;
  std::string output_dir = "out";

  // environment
  int env_count = 32;
  std::string env_terrain = "parkour";
  float env_difficulty = 0.3f;
  std::vector<float> env_difficulties = {0.1f, 0.2f, 0.3f};
  float course_length = 8.0f;
  std::string lighting = "normal";
  int max_ticks = 300;

  // event camera
  float event_threshold = 0.2f;
  std::string event_mode = "difference";
  float intensity_scale = 1.0f;
  float intensity_floor = 1e-3f;
  float max_range = 5.0f;
  float frame_rate_hz = 10.0f;
  int frame_width = 48;
  int frame_height = 32;

  // spiking network
  int timesteps = 4;
  snn::NeuronConfig neuron;  // beta=1: integrate-and-fire
  std::vector<int> encoder_filters = {16, 32};
  int latent_dim = 64;
  int gru_hidden = 64;
  std::vector<int> actor_sizes = {512, 256, 128};

  // teacher
  std::vector<int> teacher_hidden = {256, 128};
  policy::BcConfig bc;
  policy::PPOConfig ppo;

  // distillation
  policy::DistillConfig distill;

  // evaluation
  std::vector<std::string> eval_terrains = {"gap", "step", "hurdle", "parkour"};
  std::vector<float> eval_difficulties = {0.1f, 0.2f, 0.3f};
  std::vector<std::string> eval_lightings = {"normal"};
  int eval_episodes = 50;

  // energy accounting
  energy::EnergyConfig energy;

  RunConfig() {
    distill.lr = 1e-3f;  // the published learning rate
    distill.envs = 32;
    bc.seed = 0;
    ppo.seed = 0;
  }

  nlohmann::json to_json() const {
    nlohmann::json neuron_j;
    snn::to_json(neuron_j, neuron);
    return {
        {"seed", seed},
        {"output_dir", output_dir},
        {"env",
         {{"count", env_count},
          {"terrain", env_terrain},
          {"difficulty", detail::jf(env_difficulty)},
          {"difficulties", detail::jf(env_difficulties)},
          {"course_length", detail::jf(course_length)},
          {"lighting", lighting},
          {"max_ticks", max_ticks}}},
        {"event",
         {{"threshold", detail::jf(event_threshold)},
          {"mode", event_mode},
          {"intensity_scale", detail::jf(intensity_scale)},
          {"intensity_floor", detail::jf(intensity_floor)},
          {"max_range", detail::jf(max_range)},
          {"frame_rate_hz", detail::jf(frame_rate_hz)},
          {"frame_width", frame_width},
          {"frame_height", frame_height}}},
        {"snn",
         {{"timesteps", timesteps},
          {"neuron", neuron_j},
          {"encoder_filters", encoder_filters},
          {"latent_dim", latent_dim},
          {"gru_hidden", gru_hidden},
          {"actor_sizes", actor_sizes}}},
        {"teacher",
         {{"hidden", teacher_hidden},
          {"bc",
           {{"iterations", bc.iterations},
            {"horizon", bc.horizon},
            {"epochs", bc.epochs},
            {"minibatch", bc.minibatch},
            {"lr", detail::jf(bc.lr)},
            {"yaw_loss_weight", detail::jf(bc.yaw_loss_weight)},
            {"expert_mix_decay", detail::jf(bc.expert_mix_decay)}}},
          {"ppo",
           {{"gamma", detail::jf(ppo.gamma)},
            {"gae_lambda", detail::jf(ppo.gae_lambda)},
            {"clip", detail::jf(ppo.clip)},
            {"epochs", ppo.epochs},
            {"minibatches", ppo.minibatches},
            {"entropy_coef", detail::jf(ppo.entropy_coef)},
            {"value_coef", detail::jf(ppo.value_coef)},
            {"lr", detail::jf(ppo.lr)},
            {"horizon", ppo.horizon},
            {"iterations", ppo.iterations}}}}},
        {"distill",
         {{"warmup_iters", distill.warmup_iters},
          {"onpolicy_iters", distill.onpolicy_iters},
          {"segment_ticks", distill.segment_ticks},
          {"envs", distill.envs},
          {"lr", detail::jf(distill.lr)},
          {"onpolicy_lr", detail::jf(distill.onpolicy_lr)},
          {"action_loss_weight", detail::jf(distill.action_loss_weight)},
          {"yaw_loss_weight", detail::jf(distill.yaw_loss_weight)},
          {"terrain", env::to_string(distill.terrain)},
          {"difficulties", detail::jf(distill.difficulties)},
          {"probe_envs", distill.probe_envs},
          {"probe_ticks", distill.probe_ticks}}},
        {"eval",
         {{"terrains", eval_terrains},
          {"difficulties", detail::jf(eval_difficulties)},
          {"lightings", eval_lightings},
          {"episodes", eval_episodes}}},
        {"energy", {{"e_mac_pj", energy.e_mac_pj}, {"e_ac_pj", energy.e_ac_pj}}}};
  }

  // Overlays the keys present in `j` onto this config.
  void apply_json(const nlohmann::json& j) {
    seed = j.value("seed", seed);
    output_dir = j.value("output_dir", output_dir);
    if (j.contains("env")) {
      const auto& e = j.at("env");
      env_count = e.value("count", env_count);
      env_terrain = e.value("terrain", env_terrain);
      env_difficulty = e.value("difficulty", env_difficulty);
      env_difficulties = e.value("difficulties", env_difficulties);
      course_length = e.value("course_length", course_length);
      lighting = e.value("lighting", lighting);
      max_ticks = e.value("max_ticks", max_ticks);
    }
    if (j.contains("event")) {
      const auto& e = j.at("event");
      event_threshold = e.value("threshold", event_threshold);
      event_mode = e.value("mode", event_mode);
      intensity_scale = e.value("intensity_scale", intensity_scale);
      intensity_floor = e.value("intensity_floor", intensity_floor);
      max_range = e.value("max_range", max_range);
      frame_rate_hz = e.value("frame_rate_hz", frame_rate_hz);
      frame_width = e.value("frame_width", frame_width);
      frame_height = e.value("frame_height", frame_height);
    }
    if (j.contains("snn")) {
      const auto& s = j.at("snn");
      timesteps = s.value("timesteps", timesteps);
      if (s.contains("neuron")) snn::from_json(s.at("neuron"), neuron);
      encoder_filters = s.value("encoder_filters", encoder_filters);
      latent_dim = s.value("latent_dim", latent_dim);
      gru_hidden = s.value("gru_hidden", gru_hidden);
      actor_sizes = s.value("actor_sizes", actor_sizes);
    }
    if (j.contains("teacher")) {
      const auto& t = j.at("teacher");
      teacher_hidden = t.value("hidden", teacher_hidden);
      if (t.contains("bc")) {
        const auto& b = t.at("bc");
        bc.iterations = b.value("iterations", bc.iterations);
        bc.horizon = b.value("horizon", bc.horizon);
        bc.epochs = b.value("epochs", bc.epochs);
        bc.minibatch = b.value("minibatch", bc.minibatch);
        bc.lr = b.value("lr", bc.lr);
        bc.yaw_loss_weight = b.value("yaw_loss_weight", bc.yaw_loss_weight);
        bc.expert_mix_decay = b.value("expert_mix_decay", bc.expert_mix_decay);
      }
      if (t.contains("ppo")) {
        const auto& p = t.at("ppo");
        ppo.gamma = p.value("gamma", ppo.gamma);
        ppo.gae_lambda = p.value("gae_lambda", ppo.gae_lambda);
        ppo.clip = p.value("clip", ppo.clip);
        ppo.epochs = p.value("epochs", ppo.epochs);
        ppo.minibatches = p.value("minibatches", ppo.minibatches);
        ppo.entropy_coef = p.value("entropy_coef", ppo.entropy_coef);
        ppo.value_coef = p.value("value_coef", ppo.value_coef);
        ppo.lr = p.value("lr", ppo.lr);
        ppo.horizon = p.value("horizon", ppo.horizon);
        ppo.iterations = p.value("iterations", ppo.iterations);
      }
    }
    if (j.contains("distill")) {
      const auto& d = j.at("distill");
      distill.warmup_iters = d.value("warmup_iters", distill.warmup_iters);
      distill.onpolicy_iters = d.value("onpolicy_iters", distill.onpolicy_iters);
      distill.segment_ticks = d.value("segment_ticks", distill.segment_ticks);
      distill.envs = d.value("envs", distill.envs);
      distill.lr = d.value("lr", distill.lr);
      distill.onpolicy_lr = d.value("onpolicy_lr", distill.onpolicy_lr);
      distill.action_loss_weight = d.value("action_loss_weight", distill.action_loss_weight);
      distill.yaw_loss_weight = d.value("yaw_loss_weight", distill.yaw_loss_weight);
      if (d.contains("terrain"))
        distill.terrain = env::terrain_kind_from_string(d.at("terrain").get<std::string>());
      distill.difficulties = d.value("difficulties", distill.difficulties);
      distill.probe_envs = d.value("probe_envs", distill.probe_envs);
      distill.probe_ticks = d.value("probe_ticks", distill.probe_ticks);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      eval_terrains = e.value("terrains", eval_terrains);
      eval_difficulties = e.value("difficulties", eval_difficulties);
      eval_lightings = e.value("lightings", eval_lightings);
      eval_episodes = e.value("episodes", eval_episodes);
    }
    if (j.contains("energy")) {
      const auto& e = j.at("energy");
      energy.e_mac_pj = e.value("e_mac_pj", energy.e_mac_pj);
      energy.e_ac_pj = e.value("e_ac_pj", energy.e_ac_pj);
    }
  }

  static RunConfig load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const std::exception& e) {
      throw IoError("bad config JSON in " + path + ": " + e.what());
    }
    RunConfig cfg;
    cfg.apply_json(j);
    return cfg;
  }

  // --- derived module configs -------------------------------------------

  env::EnvConfig env_config() const {
    env::EnvConfig e;
    e.terrain.kind = env::terrain_kind_from_string(env_terrain);
    e.terrain.difficulty = env_difficulty;
    e.terrain.course_length = course_length;
    e.lighting = env::lighting_from_string(lighting);
    e.camera.width = frame_width;
    e.camera.height = frame_height;
    e.camera.max_range = max_range;
    e.max_ticks = max_ticks;
    e.seed = seed;
    if (frame_rate_hz != 10.0f) {
      // hold the 0.02 s physics step, adjust substeps to the requested rate
      int sub = static_cast<int>(std::lround(1.0f / (frame_rate_hz * e.dt)));
      e.substeps = std::max(1, sub);
    }
    return e;
  }

  events::EventSimConfig event_sim_config() const {
    events::EventSimConfig s;
    s.contrast = event_threshold;
    if (event_mode == "difference" || event_mode == "diff")
      s.mode = events::SimMode::difference;
    else if (event_mode == "flow")
      s.mode = events::SimMode::flow;
    else
      throw Error("unknown event mode: " + event_mode);
    s.intensity_scale = intensity_scale;
    s.intensity_floor = intensity_floor;
    s.max_range = max_range;
    return s;
  }

  snn::StudentConfig student_config(bool depth_input = false) const {
    snn::StudentConfig s;
    s.frame_width = frame_width;
    s.frame_height = frame_height;
    s.in_channels = depth_input ? 1 : 2;
    s.conv_filters = encoder_filters;
    s.latent_dim = latent_dim;
    s.proprio_dim = policy::kStudentProprioDim;
    s.gru_hidden = gru_hidden;
    s.actor_sizes = actor_sizes;
    s.timesteps = timesteps;
    s.neuron = neuron;
    return s;
  }

  policy::TeacherConfig teacher_config() const {
    policy::TeacherConfig t;
    t.hidden = teacher_hidden;
    return t;
  }
};

}  // namespace spikekour
