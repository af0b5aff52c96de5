#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "spikekour/common.hpp"

namespace spikekour::events {

struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // meters, row-major
  double timestamp = 0.0;     // seconds

  DepthFrame() = default;
  DepthFrame(int w, int h, float fill = 0.0f, double t = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill), timestamp(t) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Log-intensity proxy L(u); also reused as a plain per-pixel scalar map
// (image gradients, delta-L) where noted.
struct IntensityFrame {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  double timestamp = 0.0;

  IntensityFrame() = default;
  IntensityFrame(int w, int h, float fill = 0.0f, double t = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill), timestamp(t) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<float> gx;  // dL/dx, log-intensity per pixel
  std::vector<float> gy;  // dL/dy
};

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> vx;  // pixels per second
  std::vector<float> vy;

  FlowField() = default;
  FlowField(int w, int h, float fx = 0.0f, float fy = 0.0f)
      : width(w), height(h), vx(static_cast<std::size_t>(w) * h, fx),
        vy(static_cast<std::size_t>(w) * h, fy) {}
};

struct Event {
  uint16_t x = 0;
  uint16_t y = 0;
  double t = 0.0;  // seconds
  int8_t p = 1;    // +1 or -1

  bool operator==(const Event&) const = default;
};

using EventStream = std::vector<Event>;

enum class SimMode { difference, flow };

struct EventSimConfig {
  float contrast = 0.2f;         // C, log-intensity units
  SimMode mode = SimMode::difference;
  float intensity_scale = 1.0f;  // k in L = ln(k / (d + eps))
  float intensity_floor = 1e-3f; // eps
  float max_range = 5.0f;        // meters; sentinel depth for "no return"
  double refractory_s = 0.0;     // 0 disables the per-pixel dead time
  float noise_sigma = 0.0f;      // reserved; sensor noise models are out of scope

  void validate() const {
    if (contrast <= 0.0f) throw Error("EventSimConfig: contrast threshold must be > 0");
    if (intensity_floor < 0.0f) throw Error("EventSimConfig: intensity floor must be >= 0");
    if (intensity_scale <= 0.0f) throw Error("EventSimConfig: intensity scale must be > 0");
    if (max_range <= 0.0f) throw Error("EventSimConfig: max range must be > 0");
    if (refractory_s < 0.0) throw Error("EventSimConfig: refractory must be >= 0");
    if (noise_sigma != 0.0f)
      throw Error("EventSimConfig: threshold noise is not implemented (reserved flag)");
  }
};

// Per-pixel residual carry between frames: `ref` is the level at which each
// pixel last fired, `level` the current brightness estimate.
struct PixelRefState {
  int width = 0;
  int height = 0;
  std::vector<float> ref;
  std::vector<float> level;
  std::vector<double> last_event_t;
  double last_t = -std::numeric_limits<double>::infinity();
  bool initialized = false;

  void init(const IntensityFrame& f) {
    width = f.width;
    height = f.height;
    ref = f.values;
    level = f.values;
    last_event_t.assign(f.values.size(), -std::numeric_limits<double>::infinity());
    initialized = true;
  }

  void require_grid(int w, int h) const {
    if (w != width || h != height)
      throw Error("PixelRefState: grid mismatch (" + std::to_string(w) + "x" +
                  std::to_string(h) + " vs state " + std::to_string(width) + "x" +
                  std::to_string(height) + ")");
  }
};

// Two count channels (positive, negative) over the pixel grid.
struct EventFrame {
  int width = 0;
  int height = 0;
  std::vector<float> pos;
  std::vector<float> neg;
  double t0 = 0.0;
  double t1 = 0.0;

  EventFrame() = default;
  EventFrame(int w, int h)
      : width(w), height(h), pos(static_cast<std::size_t>(w) * h, 0.0f),
        neg(static_cast<std::size_t>(w) * h, 0.0f) {}
};

// L(u) = ln(k / (d + eps)); nearer means brighter. Pixels at or beyond
// max_range take the frame's minimum intensity (no texture in "no return").
inline IntensityFrame depth_to_intensity(const DepthFrame& d, const EventSimConfig& cfg) {
  if (d.width < 1 || d.height < 1) throw Error("depth_to_intensity: empty frame");
  IntensityFrame out(d.width, d.height, 0.0f, d.timestamp);
  float min_l = std::numeric_limits<float>::infinity();
  std::vector<char> far(d.values.size(), 0);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    float depth = d.values[i];
    if (!(depth > 0.0f)) throw Error("depth_to_intensity: depth values must be > 0");
    if (depth >= cfg.max_range) {
      far[i] = 1;
      continue;
    }
    float l = std::log(cfg.intensity_scale / (depth + cfg.intensity_floor));
    out.values[i] = l;
    min_l = std::min(min_l, l);
  }
  if (!std::isfinite(min_l))
    min_l = std::log(cfg.intensity_scale / (cfg.max_range + cfg.intensity_floor));
  for (std::size_t i = 0; i < d.values.size(); ++i)
    if (far[i]) out.values[i] = min_l;
  return out;
}

// Central differences in the interior, one-sided at the borders.
inline GradientField image_gradient(const IntensityFrame& l) {
  if (l.width < 3 || l.height < 3)
    throw Error("image_gradient: frame must be at least 3x3");
  GradientField g;
  g.width = l.width;
  g.height = l.height;
  g.gx.assign(l.values.size(), 0.0f);
  g.gy.assign(l.values.size(), 0.0f);
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * l.width + x;
      if (x == 0)
        g.gx[i] = l.at(1, y) - l.at(0, y);
      else if (x == l.width - 1)
        g.gx[i] = l.at(x, y) - l.at(x - 1, y);
      else
        g.gx[i] = 0.5f * (l.at(x + 1, y) - l.at(x - 1, y));
      if (y == 0)
        g.gy[i] = l.at(x, 1) - l.at(x, 0);
      else if (y == l.height - 1)
        g.gy[i] = l.at(x, y) - l.at(x, y - 1);
      else
        g.gy[i] = 0.5f * (l.at(x, y + 1) - l.at(x, y - 1));
    }
  return g;
}

// Brightness-constancy step: dL(u) = -(grad L(u) . v(u)) * dt.
inline IntensityFrame delta_L_flow(const GradientField& grad, const FlowField& v, double dt) {
  if (grad.width != v.width || grad.height != v.height)
    throw Error("delta_L_flow: grid mismatch");
  if (!(dt > 0.0)) throw Error("delta_L_flow: dt must be > 0");
  IntensityFrame dl(grad.width, grad.height);
  for (std::size_t i = 0; i < dl.values.size(); ++i)
    dl.values[i] = -static_cast<float>((static_cast<double>(grad.gx[i]) * v.vx[i] +
                                        static_cast<double>(grad.gy[i]) * v.vy[i]) *
                                       dt);
  return dl;
}

namespace detail {

// Shared emission: compares running levels against per-pixel references,
// emits floor(|r|/C) events with evenly interpolated timestamps in (t0, t1],
// and advances the reference by whole threshold steps (residual carries).
inline EventStream emit_events(PixelRefState& state, double t0, double t1,
                               const EventSimConfig& cfg) {
  if (!(t1 > t0)) throw Error("simulate_events: t1 must be > t0");
  if (t0 < state.last_t - 1e-12)
    throw Error("simulate_events: non-monotone interval start (t0=" + std::to_string(t0) +
                " before previous t1=" + std::to_string(state.last_t) + ")");
  EventStream out;
  const double c = cfg.contrast;
  for (int y = 0; y < state.height; ++y)
    for (int x = 0; x < state.width; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * state.width + x;
      double r = static_cast<double>(state.level[i]) - state.ref[i];
      // tiny slack so float-rounded exact multiples of C still count
      int n = static_cast<int>(std::floor(std::fabs(r) / c + 1e-6));
      if (n <= 0) continue;
      int8_t pol = r > 0 ? int8_t{1} : int8_t{-1};
      // midpoint placement keeps every timestamp strictly inside (t0, t1), so
      // tick-aligned [t0, t1) rasterization windows never drop boundary events
      for (int j = 1; j <= n; ++j) {
        double t = t0 + (t1 - t0) * (2.0 * j - 1.0) / (2.0 * n);
        if (cfg.refractory_s > 0.0 && t - state.last_event_t[i] < cfg.refractory_s) continue;
        state.last_event_t[i] = t;
        out.push_back(Event{static_cast<uint16_t>(x), static_cast<uint16_t>(y), t, pol});
      }
      state.ref[i] = static_cast<float>(state.ref[i] + pol * n * c);
    }
  std::sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });
  state.last_t = t1;
  return out;
}

}  // namespace detail

// Difference mode: the running level is the current frame itself. The state
// initializes from `prev` on first use, so a static first interval is silent.
inline EventStream simulate_events(const IntensityFrame& prev, const IntensityFrame& curr,
                                   double t0, double t1, const EventSimConfig& cfg,
                                   PixelRefState& state) {
  cfg.validate();
  if (prev.width != curr.width || prev.height != curr.height)
    throw Error("simulate_events: frame size mismatch");
  if (!state.initialized) state.init(prev);
  state.require_grid(curr.width, curr.height);
  state.level = curr.values;
  return detail::emit_events(state, t0, t1, cfg);
}

// Flow mode: callers supply the per-interval delta-L map (from delta_L_flow);
// the state integrates it into the running level.
inline EventStream simulate_events_flow(const IntensityFrame& delta_l, double t0, double t1,
                                        const EventSimConfig& cfg, PixelRefState& state) {
  cfg.validate();
  if (!state.initialized)
    throw Error("simulate_events_flow: state must be initialized from a base frame");
  state.require_grid(delta_l.width, delta_l.height);
  for (std::size_t i = 0; i < state.level.size(); ++i) state.level[i] += delta_l.values[i];
  return detail::emit_events(state, t0, t1, cfg);
}

// Rasterize events in [t0, t1) into positive/negative count channels.
inline EventFrame events_to_frame(const EventStream& s, double t0, double t1, int width,
                                  int height, bool normalize = false) {
  EventFrame f(width, height);
  f.t0 = t0;
  f.t1 = t1;
  for (const Event& e : s) {
    if (e.t < t0 || e.t >= t1) continue;
    if (e.x >= width || e.y >= height)
      throw Error("events_to_frame: event at (" + std::to_string(e.x) + "," +
                  std::to_string(e.y) + ") outside " + std::to_string(width) + "x" +
                  std::to_string(height) + " grid");
    std::size_t i = static_cast<std::size_t>(e.y) * width + e.x;
    if (e.p > 0)
      f.pos[i] += 1.0f;
    else
      f.neg[i] += 1.0f;
  }
  if (normalize) {
    float m = 0.0f;
    for (std::size_t i = 0; i < f.pos.size(); ++i) m = std::max({m, f.pos[i], f.neg[i]});
    if (m > 0.0f)
      for (std::size_t i = 0; i < f.pos.size(); ++i) {
        f.pos[i] /= m;
        f.neg[i] /= m;
      }
  }
  return f;
}

}  // namespace spikekour::events
