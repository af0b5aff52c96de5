#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikekour/events.hpp"
#include "spikekour/rng.hpp"

namespace spikekour::env {

constexpr float kGravity = 9.81f;
constexpr float kChasmDepth = -1.0f;

enum class TerrainKind { flat, gap, step, hurdle, parkour };

inline const char* to_string(TerrainKind k) {
  switch (k) {
    case TerrainKind::flat: return "flat";
    case TerrainKind::gap: return "gap";
    case TerrainKind::step: return "step";
    case TerrainKind::hurdle: return "hurdle";
    case TerrainKind::parkour: return "parkour";
  }
  return "?";
}

inline TerrainKind terrain_kind_from_string(const std::string& s) {
  if (s == "flat") return TerrainKind::flat;
  if (s == "gap") return TerrainKind::gap;
  if (s == "step") return TerrainKind::step;
  if (s == "hurdle") return TerrainKind::hurdle;
  if (s == "parkour") return TerrainKind::parkour;
  throw Error("unknown terrain kind: " + s);
}

enum class Lighting { normal, overexposed, underexposed, high_speed };

inline const char* to_string(Lighting l) {
  switch (l) {
    case Lighting::normal: return "normal";
    case Lighting::overexposed: return "overexposed";
    case Lighting::underexposed: return "underexposed";
    case Lighting::high_speed: return "high_speed";
  }
  return "?";
}

inline Lighting lighting_from_string(const std::string& s) {
  if (s == "normal") return Lighting::normal;
  if (s == "overexposed") return Lighting::overexposed;
  if (s == "underexposed") return Lighting::underexposed;
  if (s == "high_speed") return Lighting::high_speed;
  throw Error("unknown lighting condition: " + s);
}

struct TerrainSpec {
  TerrainKind kind = TerrainKind::gap;
  float difficulty = 0.5f;  // [0,1], monotonically parametrizes obstacle severity
  uint64_t seed = 0;
  float course_length = 8.0f;  // meters

  void validate() const {
    if (difficulty < 0.0f || difficulty > 1.0f)
      throw Error("TerrainSpec: difficulty must lie in [0,1]");
    if (course_length < 4.0f) throw Error("TerrainSpec: course too short");
  }
};

// Obstacle severity parametrization (meters).
inline float gap_width(float difficulty) { return 0.2f + 0.6f * difficulty; }
inline float step_height(float difficulty) { return 0.1f + 0.3f * difficulty; }
inline float hurdle_height(float difficulty) { return 0.1f + 0.25f * difficulty; }

struct Obstacle {
  TerrainKind kind;  // gap, step or hurdle
  float x_start;
  float width;
  float height;  // chasm depth for gaps
};

// 2.5-D piecewise-constant heightfield with centerline waypoints.
struct Heightfield {
  float resolution = 0.05f;  // meters per cell
  float origin_x = 0.0f;
  float origin_y = 0.0f;
  int nx = 0;
  int ny = 0;
  std::vector<float> heights;
  std::vector<std::array<float, 2>> waypoints;
  std::vector<Obstacle> obstacles;
  float course_length = 0.0f;
  float half_width = 0.0f;

  float& cell(int ix, int iy) { return heights[static_cast<std::size_t>(iy) * nx + ix]; }
  float cell(int ix, int iy) const { return heights[static_cast<std::size_t>(iy) * nx + ix]; }

  // Nearest-cell lookup; queries outside the grid clamp to the boundary cell.
  float height_at(float x, float y) const {
    int ix = static_cast<int>(std::floor((x - origin_x) / resolution));
    int iy = static_cast<int>(std::floor((y - origin_y) / resolution));
    ix = std::clamp(ix, 0, nx - 1);
    iy = std::clamp(iy, 0, ny - 1);
    return cell(ix, iy);
  }

  nlohmann::json to_json(bool with_heights = false) const {
    nlohmann::json j;
    j["resolution"] = resolution;
    j["origin"] = {origin_x, origin_y};
    j["nx"] = nx;
    j["ny"] = ny;
    j["course_length"] = course_length;
    j["half_width"] = half_width;
    nlohmann::json wps = nlohmann::json::array();
    for (auto& w : waypoints) wps.push_back({w[0], w[1]});
    j["waypoints"] = wps;
    nlohmann::json obs = nlohmann::json::array();
    for (auto& o : obstacles)
      obs.push_back({{"kind", to_string(o.kind)},
                     {"x_start", o.x_start},
                     {"width", o.width},
                     {"height", o.height}});
    j["obstacles"] = obs;
    if (with_heights) {
      static const char* hexd = "0123456789abcdef";
      std::string payload;
      payload.reserve(heights.size() * 8);
      for (float v : heights) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        for (int b = 0; b < 4; ++b) {  // little-endian byte order
          unsigned byte = (u >> (8 * b)) & 0xff;
          payload += hexd[byte >> 4];
          payload += hexd[byte & 0xf];
        }
      }
      j["heights_hex_f32le"] = payload;
    }
    return j;
  }
};

inline Heightfield generate_terrain(const TerrainSpec& spec) {
  spec.validate();
  Heightfield hf;
  hf.resolution = 0.05f;
  hf.origin_x = -1.0f;
  hf.origin_y = -1.2f;
  hf.course_length = spec.course_length;
  hf.half_width = 1.0f;
  hf.nx = static_cast<int>(std::lround((spec.course_length + 2.0f) / hf.resolution));
  hf.ny = static_cast<int>(std::lround(2.4f / hf.resolution));
  hf.heights.assign(static_cast<std::size_t>(hf.nx) * hf.ny, 0.0f);

  for (float x = 0.0f; x <= spec.course_length + 0.5f; x += 0.5f)
    hf.waypoints.push_back({x, 0.0f});

  if (spec.kind != TerrainKind::flat) {
    // obstacle slot positions depend on the seed only, not on difficulty,
    // so difficulty sweeps compare like against like
    std::mt19937 rng = make_rng(spec.seed, "terrain");
    std::uniform_real_distribution<float> jitter(-0.2f, 0.2f);
    std::uniform_int_distribution<int> pick(0, 2);
    float x = 2.0f;
    while (x < spec.course_length - 1.0f) {
      float x0 = x + jitter(rng);
      TerrainKind kind = spec.kind;
      if (kind == TerrainKind::parkour) {
        int k = pick(rng);
        kind = k == 0 ? TerrainKind::gap : (k == 1 ? TerrainKind::step : TerrainKind::hurdle);
      }
      Obstacle o;
      o.kind = kind;
      // snap to the grid so widths are exact cell counts
      o.x_start = std::round(x0 / hf.resolution) * hf.resolution;
      switch (kind) {
        case TerrainKind::gap:
          o.width = std::round(gap_width(spec.difficulty) / hf.resolution) * hf.resolution;
          o.height = kChasmDepth;
          break;
        case TerrainKind::step:
          o.width = 1.2f;
          o.height = step_height(spec.difficulty);
          break;
        case TerrainKind::hurdle:
          o.width = 0.1f;
          o.height = hurdle_height(spec.difficulty);
          break;
        default:
          throw Error("unreachable terrain kind");
      }
      int i0 = static_cast<int>(std::lround((o.x_start - hf.origin_x) / hf.resolution));
      int i1 = static_cast<int>(std::lround((o.x_start + o.width - hf.origin_x) / hf.resolution));
      for (int ix = std::max(0, i0); ix < std::min(hf.nx, i1); ++ix)
        for (int iy = 0; iy < hf.ny; ++iy) hf.cell(ix, iy) = o.height;
      hf.obstacles.push_back(o);
      x += 1.8f;
    }
  }
  // low berms mark the course edges: they block sideways drift and give the
  // camera a visible boundary rail (gaps still cut straight through)
  for (int ix = 0; ix < hf.nx; ++ix)
    for (int iy = 0; iy < hf.ny; ++iy) {
      float wy = hf.origin_y + (iy + 0.5f) * hf.resolution;
      if (std::fabs(wy) > hf.half_width && hf.cell(ix, iy) >= 0.0f)
        hf.cell(ix, iy) = std::max(hf.cell(ix, iy), 0.25f);
    }
  return hf;
}

struct RobotState {
  float x = 0.0f, y = 0.0f, z = 0.0f;
  float vx = 0.0f, vy = 0.0f, vz = 0.0f;
  float yaw = 0.0f;  // radians, wrapped to (-pi, pi]; positive turns toward +y (rightward)
  bool airborne = false;
};

inline float wrap_angle(float a) {
  double d = std::fmod(static_cast<double>(a) + M_PI, 2.0 * M_PI);
  if (d <= 0.0) d += 2.0 * M_PI;
  return static_cast<float>(d - M_PI);
}

// Heading from the robot to the first centerline waypoint at least 0.5 m
// ahead along the course; waypoints behind the robot are never selected.
inline float target_yaw(const Heightfield& hf, const RobotState& s) {
  for (const auto& w : hf.waypoints) {
    if (w[0] - s.x >= 0.5f) return std::atan2(w[1] - s.y, w[0] - s.x);
  }
  const auto& last = hf.waypoints.back();
  return std::atan2(last[1] - s.y, std::max(0.05f, last[0] - s.x));
}

struct ScanPattern {
  int nx = 11;  // forward samples
  int ny = 5;   // lateral samples
  float x0 = 0.1f;
  float x1 = 1.5f;
  float half_width = 0.4f;
};

// Privileged terrain heights relative to robot z on a yaw-aligned grid ahead.
inline std::vector<float> scandots(const Heightfield& hf, const RobotState& s,
                                   const ScanPattern& p = {}) {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(p.nx) * p.ny);
  float cy = std::cos(s.yaw), sy = std::sin(s.yaw);
  for (int i = 0; i < p.nx; ++i) {
    float fwd = p.x0 + (p.x1 - p.x0) * (p.nx == 1 ? 0.0f : static_cast<float>(i) / (p.nx - 1));
    for (int j = 0; j < p.ny; ++j) {
      float lat = -p.half_width +
                  2.0f * p.half_width * (p.ny == 1 ? 0.0f : static_cast<float>(j) / (p.ny - 1));
      // right vector is (-sin yaw, cos yaw)
      float wx = s.x + fwd * cy - lat * sy;
      float wy = s.y + fwd * sy + lat * cy;
      out.push_back(hf.height_at(wx, wy) - s.z);
    }
  }
  return out;
}

struct CameraConfig {
  int width = 48;
  int height = 32;
  float hfov_deg = 87.0f;
  float pitch_deg = -30.0f;       // negative pitches the view down
  float height_above_base = 0.3f;  // meters
  float max_range = 5.0f;
};

// Ray-marched depth against the heightfield via 2-D grid traversal; exact for
// piecewise-constant cells, so walls land on cell boundaries.
inline events::DepthFrame render_depth(const RobotState& s, const Heightfield& hf,
                                       const CameraConfig& cam) {
  events::DepthFrame out(cam.width, cam.height, cam.max_range);
  float cyaw = std::cos(s.yaw), syaw = std::sin(s.yaw);
  float pitch = cam.pitch_deg * static_cast<float>(M_PI) / 180.0f;
  float cp = std::cos(pitch), sp = std::sin(pitch);
  // camera basis in world coordinates
  float fwd[3] = {cp * cyaw, cp * syaw, sp};
  float right[3] = {-syaw, cyaw, 0.0f};
  float down[3] = {sp * cyaw, sp * syaw, -cp};
  float fx = (cam.width / 2.0f) / std::tan(cam.hfov_deg * static_cast<float>(M_PI) / 360.0f);
  float fy = fx;
  double px = s.x, py = s.y, pz = s.z + cam.height_above_base;

  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      float du = (u + 0.5f - cam.width / 2.0f) / fx;
      float dv = (v + 0.5f - cam.height / 2.0f) / fy;
      double dx = fwd[0] + du * right[0] + dv * down[0];
      double dy = fwd[1] + du * right[1] + dv * down[1];
      double dz = fwd[2] + du * right[2] + dv * down[2];
      double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
      dx /= norm;
      dy /= norm;
      dz /= norm;

      double t_hit = cam.max_range;
      double horiz = std::sqrt(dx * dx + dy * dy);
      if (horiz < 1e-9) {
        // straight up or down
        float h = hf.height_at(static_cast<float>(px), static_cast<float>(py));
        if (dz < 0.0 && pz > h) t_hit = std::min(t_hit, (h - pz) / dz);
        if (pz <= h) t_hit = 0.0;
      } else {
        // 2-D DDA over grid cells; outside cells clamp to the boundary height
        int ix = static_cast<int>(std::floor((px - hf.origin_x) / hf.resolution));
        int iy = static_cast<int>(std::floor((py - hf.origin_y) / hf.resolution));
        int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
        int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
        double inv_dx = dx != 0.0 ? 1.0 / dx : 0.0;
        double inv_dy = dy != 0.0 ? 1.0 / dy : 0.0;
        auto boundary_t = [&](int i, double origin, double p0, double inv, int stp) {
          double edge = origin + (i + (stp > 0 ? 1 : 0)) * hf.resolution;
          return (edge - p0) * inv;
        };
        double t = 0.0;
        for (int iter = 0; iter < 4 * (hf.nx + hf.ny); ++iter) {
          double tx = step_x ? boundary_t(ix, hf.origin_x, px, inv_dx, step_x)
                             : std::numeric_limits<double>::infinity();
          double ty = step_y ? boundary_t(iy, hf.origin_y, py, inv_dy, step_y)
                             : std::numeric_limits<double>::infinity();
          double t_exit = std::min(std::min(tx, ty), static_cast<double>(cam.max_range));
          int cx = std::clamp(ix, 0, hf.nx - 1);
          int cy2 = std::clamp(iy, 0, hf.ny - 1);
          double h = hf.cell(cx, cy2);
          double z_enter = pz + dz * t;
          double z_exit = pz + dz * t_exit;
          if (z_enter <= h) {
            t_hit = t;
            break;
          }
          if (dz < 0.0 && z_exit < h) {
            t_hit = (h - pz) / dz;
            break;
          }
          if (t_exit >= cam.max_range) break;
          t = t_exit;
          if (tx < ty)
            ix += step_x;
          else
            iy += step_y;
        }
      }
      out.at(u, v) = static_cast<float>(std::clamp(t_hit, 1e-3, static_cast<double>(cam.max_range)));
    }
  }
  return out;
}

// Lighting corruption models. Only the observation path is touched; callers
// keep the true frame for the event pipeline.
inline events::DepthFrame corrupt_depth(const events::DepthFrame& d, Lighting c, uint64_t seed,
                                        const events::DepthFrame* prev = nullptr,
                                        float max_range = 5.0f) {
  events::DepthFrame out = d;
  std::size_t n = d.values.size();
  auto pick_pixels = [&](float fraction, std::string_view stream) {
    std::vector<uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::mt19937 rng = make_rng(seed, stream);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
    return idx;
  };
  switch (c) {
    case Lighting::normal:
      break;
    case Lighting::overexposed: {
      for (uint32_t i : pick_pixels(0.6f, "overexposed")) out.values[i] = max_range;
      break;
    }
    case Lighting::underexposed: {
      std::mt19937 rng = make_rng(seed, "under.noise");
      std::normal_distribution<float> noise(0.0f, 0.3f);
      for (auto& v : out.values) v = std::clamp(v + noise(rng), 0.01f, max_range);
      for (uint32_t i : pick_pixels(0.3f, "under.drop")) out.values[i] = max_range;
      break;
    }
    case Lighting::high_speed: {
      if (prev) {
        for (uint32_t i : pick_pixels(0.4f, "stale")) out.values[i] = prev->values[i];
      }
      break;
    }
  }
  return out;
}

struct EpisodeResult {
  bool success = false;
  float progress = 0.0f;  // meters along the course
  bool fall = false;
  int steps = 0;
  double motor_energy_mJ = 0.0;
};

// One log record per physics substep; feeds the motor-energy accounting.
struct MotorLogEntry {
  float force_fwd = 0.0f;
  float force_lat = 0.0f;
  float vel_fwd = 0.0f;
  float vel_lat = 0.0f;
  float dt = 0.0f;
};

struct Observation {
  std::vector<float> proprio;   // [v_fwd, v_lat, v_z, yaw_err, last action (4)]
  std::vector<float> scandots;  // privileged
  float target_yaw = 0.0f;      // privileged, world frame
  float yaw_err = 0.0f;
  events::DepthFrame depth;       // observation path (lighting corruption applied)
  events::DepthFrame depth_true;  // ground truth driving the event camera
  Lighting lighting = Lighting::normal;
};

struct EnvConfig {
  TerrainSpec terrain;
  Lighting lighting = Lighting::normal;
  CameraConfig camera;
  ScanPattern scan;
  bool render_depth = true;
  float dt = 0.02f;   // physics step
  int substeps = 5;   // 5 x 0.02 s = one 10 Hz policy tick
  float a_max = 4.5f;
  float yaw_rate_max = 2.0f;
  float jump_speed = 3.4f;
  float climb_limit = 0.15f;       // max walkable ledge
  float fall_impact_speed = 1.2f;  // horizontal collision speed that counts as a crash
  float fall_z = -0.5f;            // below this the robot is lost in a chasm
  float friction = 2.0f;           // velocity damping when an axis is uncommanded
  int max_ticks = 300;
  uint64_t seed = 0;

  float tick_seconds() const { return dt * static_cast<float>(substeps); }
};

constexpr int kActionDim = 4;  // forward accel, lateral accel, yaw rate, jump trigger

struct StepInfo {
  bool success = false;
  bool fall = false;
  bool timeout = false;
  float progress = 0.0f;
};

struct StepResult {
  Observation obs;
  float reward = 0.0f;
  bool done = false;
  StepInfo info;
};

// r = 2*progress - 0.5*|yaw error| - 0.01*|a|^2 - 5*fall + 10*success
inline float reward(float progress_m, float yaw_err, const std::array<float, kActionDim>& action,
                    bool fall, bool success) {
  float a2 = 0.0f;
  for (float a : action) a2 += a * a;
  return 2.0f * progress_m - 0.5f * std::fabs(yaw_err) - 0.01f * a2 - 5.0f * (fall ? 1.0f : 0.0f) +
         10.0f * (success ? 1.0f : 0.0f);
}

// Success bumps difficulty by 0.1 (cap 1), an early fall (progress < 25% of
// the course) drops it by 0.1 (floor 0), anything else leaves it unchanged.
inline void curriculum_update(std::vector<float>& levels, const std::vector<EpisodeResult>& results,
                              float course_length) {
  if (levels.size() != results.size())
    throw Error("curriculum_update: levels/results size mismatch");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (results[i].success)
      levels[i] = std::min(1.0f, levels[i] + 0.1f);
    else if (results[i].fall && results[i].progress < 0.25f * course_length)
      levels[i] = std::max(0.0f, levels[i] - 0.1f);
  }
}

class Env {
 public:
  explicit Env(EnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.terrain.validate();
    hf_ = generate_terrain(cfg_.terrain);
  }

  const EnvConfig& config() const { return cfg_; }
  const Heightfield& terrain() const { return hf_; }
  const RobotState& state() const { return state_; }
  bool done() const { return done_; }
  const EpisodeResult& result() const { return result_; }
  const std::vector<MotorLogEntry>& motor_log() const { return motor_log_; }

  // New difficulty takes effect on the next reset (curriculum hook).
  void set_difficulty(float difficulty) {
    cfg_.terrain.difficulty = std::clamp(difficulty, 0.0f, 1.0f);
    hf_ = generate_terrain(cfg_.terrain);
  }

  Observation reset(uint64_t episode_seed) {
    episode_seed_ = episode_seed;
    state_ = RobotState{};
    state_.z = hf_.height_at(0.0f, 0.0f);
    last_action_ = {0, 0, 0, 0};
    tick_ = 0;
    done_ = false;
    result_ = EpisodeResult{};
    motor_log_.clear();
    have_prev_depth_ = false;
    return observe();
  }

  StepResult step(const std::array<float, kActionDim>& action_in) {
    if (done_) throw Error("Env::step after episode end; call reset");
    std::array<float, kActionDim> a = action_in;
    for (float& v : a) {
      if (!std::isfinite(v)) throw Error("Env::step: non-finite action");
      v = std::clamp(v, -1.0f, 1.0f);
    }
    float x_before = state_.x;
    bool fell = false, succeeded = false;

    // jump fires once per tick, only from the ground
    if (a[3] > 0.5f && !state_.airborne) {
      state_.vz = cfg_.jump_speed;
      state_.airborne = true;
    }

    for (int sub = 0; sub < cfg_.substeps && !fell && !succeeded; ++sub) {
      substep(a, fell, succeeded);
    }
    ++tick_;
    last_action_ = a;

    bool timeout = tick_ >= cfg_.max_ticks && !fell && !succeeded;
    done_ = fell || succeeded || timeout;

    Observation obs = observe();
    float r = reward(state_.x - x_before, obs.yaw_err, a, fell, succeeded);

    if (done_) {
      result_.success = succeeded;
      result_.fall = fell;
      result_.progress = state_.x;
      result_.steps = tick_;
    }
    StepResult out;
    out.obs = std::move(obs);
    out.reward = r;
    out.done = done_;
    out.info = {succeeded, fell, timeout, state_.x - x_before};
    return out;
  }

 private:
  static constexpr float kCmdDeadband = 0.05f;  // actuator dead zone

  void substep(const std::array<float, kActionDim>& a, bool& fell, bool& succeeded) {
    const float dt = cfg_.dt;
    auto live = [](float c) { return std::fabs(c) < kCmdDeadband ? 0.0f : c; };
    float cmd_fwd = live(a[0]), cmd_lat = live(a[1]), cmd_yaw = live(a[2]);

    state_.yaw = wrap_angle(state_.yaw + cmd_yaw * cfg_.yaw_rate_max * dt);
    float cy = std::cos(state_.yaw), sy = std::sin(state_.yaw);

    float v_fwd = state_.vx * cy + state_.vy * sy;
    float v_lat = -state_.vx * sy + state_.vy * cy;
    float f_fwd = 0.0f, f_lat = 0.0f;

    if (!state_.airborne) {
      f_fwd = cmd_fwd * cfg_.a_max;
      f_lat = cmd_lat * cfg_.a_max;
      v_fwd += f_fwd * dt;
      v_lat += f_lat * dt;
      float damp = std::max(0.0f, 1.0f - cfg_.friction * dt);
      if (cmd_fwd == 0.0f) v_fwd *= damp;
      // legs always resist sideways sliding
      v_lat *= damp;
    } else {
      state_.vz -= kGravity * dt;
    }
    motor_log_.push_back({f_fwd, f_lat, v_fwd, v_lat, dt});
    result_.motor_energy_mJ +=
        (std::fabs(static_cast<double>(f_fwd) * v_fwd) + std::fabs(static_cast<double>(f_lat) * v_lat)) *
        dt * 1000.0;

    state_.vx = v_fwd * cy - v_lat * sy;
    state_.vy = v_fwd * sy + v_lat * cy;

    float nx = state_.x + state_.vx * dt;
    float ny = state_.y + state_.vy * dt;
    float ht = hf_.height_at(nx, ny);

    if (!state_.airborne) {
      if (ht - state_.z > cfg_.climb_limit) {
        collide_walls(nx, ny, fell);
      } else if (ht < state_.z - 0.1f) {
        // walked off an edge
        state_.x = nx;
        state_.y = ny;
        state_.airborne = true;
        state_.vz = 0.0f;
      } else {
        state_.x = nx;
        state_.y = ny;
        state_.z = ht;
      }
    } else {
      float nz = state_.z + state_.vz * dt;
      if (ht > state_.z + cfg_.climb_limit && ht > nz) {
        collide_walls(nx, ny, fell);  // flying into a wall face; keeps falling
      } else {
        state_.x = nx;
        state_.y = ny;
        if (nz <= ht && state_.vz <= 0.0f) {
          state_.z = ht;
          state_.vz = 0.0f;
          state_.airborne = false;
        } else {
          state_.z = nz;
        }
      }
    }

    if (state_.z < cfg_.fall_z || std::fabs(state_.y) > hf_.half_width + 0.3f) fell = true;
    if (state_.x >= hf_.course_length) succeeded = true;
  }

  // Axis-separated wall response: grazing contact slides along the wall and
  // only the blocked velocity component counts as impact.
  void collide_walls(float nx, float ny, bool& fell) {
    const float dt = cfg_.dt;
    auto passable = [&](float px, float py) {
      return hf_.height_at(px, py) - state_.z <= cfg_.climb_limit;
    };
    bool x_ok = passable(nx, state_.y);
    bool y_ok = passable(state_.x, ny);
    float impact = 0.0f;
    if (x_ok && !y_ok) {
      impact = std::fabs(state_.vy);
      state_.vy = 0.0f;
      float hx = hf_.height_at(nx, state_.y);
      state_.x = nx;
      if (!state_.airborne && hx >= state_.z - 0.1f) state_.z = hx;
    } else if (y_ok && !x_ok) {
      impact = std::fabs(state_.vx);
      state_.vx = 0.0f;
      float hy = hf_.height_at(state_.x, ny);
      state_.y = ny;
      if (!state_.airborne && hy >= state_.z - 0.1f) state_.z = hy;
    } else {
      impact = std::hypot(state_.vx, state_.vy);
      state_.vx = 0.0f;
      state_.vy = 0.0f;
    }
    (void)dt;
    if (impact > cfg_.fall_impact_speed) fell = true;
  }

  Observation observe() {
    Observation obs;
    obs.lighting = cfg_.lighting;
    float cy = std::cos(state_.yaw), sy = std::sin(state_.yaw);
    float v_fwd = state_.vx * cy + state_.vy * sy;
    float v_lat = -state_.vx * sy + state_.vy * cy;
    obs.target_yaw = target_yaw(hf_, state_);
    obs.yaw_err = wrap_angle(obs.target_yaw - state_.yaw);
    obs.proprio = {v_fwd, v_lat, state_.vz, obs.yaw_err};
    for (float a : last_action_) obs.proprio.push_back(a);
    obs.scandots = scandots(hf_, state_, cfg_.scan);
    if (cfg_.render_depth) {
      obs.depth_true = render_depth(state_, hf_, cfg_.camera);
      obs.depth = corrupt_depth(obs.depth_true, cfg_.lighting,
                                substream_seed(episode_seed_, "corrupt", static_cast<uint64_t>(tick_)),
                                have_prev_depth_ ? &prev_depth_true_ : nullptr,
                                cfg_.camera.max_range);
      prev_depth_true_ = obs.depth_true;
      have_prev_depth_ = true;
    }
    return obs;
  }

  EnvConfig cfg_;
  Heightfield hf_;
  RobotState state_;
  std::array<float, kActionDim> last_action_{0, 0, 0, 0};
  int tick_ = 0;
  bool done_ = true;
  uint64_t episode_seed_ = 0;
  EpisodeResult result_;
  std::vector<MotorLogEntry> motor_log_;
  events::DepthFrame prev_depth_true_;
  bool have_prev_depth_ = false;
};

}  // namespace spikekour::env
