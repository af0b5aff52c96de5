#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spikekour/env.hpp"

using namespace spikekour;
using namespace spikekour::env;

namespace {

Heightfield flat_field(float course_length = 8.0f) {
  TerrainSpec spec;
  spec.kind = TerrainKind::flat;
  spec.course_length = course_length;
  return generate_terrain(spec);
}

EnvConfig base_config(TerrainKind kind, float difficulty, uint64_t seed) {
  EnvConfig cfg;
  cfg.terrain.kind = kind;
  cfg.terrain.difficulty = difficulty;
  cfg.terrain.seed = seed;
  cfg.render_depth = false;
  return cfg;
}

}  // namespace

TEST_CASE("terrain generation", "[env]") {
  SECTION("difficulty 0 gaps are 0.2 m wide at the seeded positions") {
    TerrainSpec spec;
    spec.kind = TerrainKind::gap;
    spec.difficulty = 0.0f;
    spec.seed = 5;
    Heightfield hf = generate_terrain(spec);
    REQUIRE(!hf.obstacles.empty());
    for (const Obstacle& o : hf.obstacles) {
      REQUIRE(o.kind == TerrainKind::gap);
      REQUIRE(o.width == Catch::Approx(0.2).margin(1e-6));
      // inside the chasm
      REQUIRE(hf.height_at(o.x_start + 0.1f, 0.0f) == Catch::Approx(kChasmDepth));
      // just outside
      REQUIRE(hf.height_at(o.x_start - 0.06f, 0.0f) == Catch::Approx(0.0));
      REQUIRE(hf.height_at(o.x_start + o.width + 0.06f, 0.0f) == Catch::Approx(0.0));
    }
  }
  SECTION("same spec generates identical heightfields") {
    TerrainSpec spec;
    spec.kind = TerrainKind::parkour;
    spec.difficulty = 0.7f;
    spec.seed = 99;
    Heightfield a = generate_terrain(spec);
    Heightfield b = generate_terrain(spec);
    REQUIRE(a.heights == b.heights);
    REQUIRE(a.obstacles.size() == b.obstacles.size());
  }
  SECTION("flat queries far from obstacles return zero") {
    TerrainSpec spec;
    spec.kind = TerrainKind::hurdle;
    spec.seed = 3;
    Heightfield hf = generate_terrain(spec);
    REQUIRE(hf.height_at(0.5f, 0.0f) == 0.0f);
    REQUIRE(hf.height_at(0.5f, 0.9f) == 0.0f);
    // outside the course the boundary berm shows up, and queries clamp to it
    REQUIRE(hf.height_at(0.5f, 50.0f) == 0.25f);
  }
  SECTION("difficulty raises obstacle severity monotonically") {
    REQUIRE(gap_width(0.0f) == Catch::Approx(0.2));
    REQUIRE(gap_width(1.0f) == Catch::Approx(0.8));
    REQUIRE(step_height(1.0f) == Catch::Approx(0.4));
    REQUIRE(hurdle_height(1.0f) == Catch::Approx(0.35));
  }
}

TEST_CASE("dynamics", "[env]") {
  SECTION("zero action on flat ground stays put and grounded") {
    Env e(base_config(TerrainKind::flat, 0, 1));
    e.reset(0);
    auto r = e.step({0, 0, 0, 0});
    REQUIRE(e.state().x == 0.0f);
    REQUIRE(e.state().y == 0.0f);
    REQUIRE(!e.state().airborne);
    REQUIRE(!r.done);
  }
  SECTION("one tick of forward accel from rest integrates exactly") {
    EnvConfig cfg = base_config(TerrainKind::flat, 0, 1);
    Env e(cfg);
    e.reset(0);
    e.step({0.5f, 0, 0, 0});
    REQUIRE(e.state().vx == Catch::Approx(0.5 * cfg.a_max * 0.1).margin(1e-5));
    REQUIRE(e.state().vy == Catch::Approx(0.0).margin(1e-6));
  }
  SECTION("jump only applies an impulse when grounded") {
    Env e(base_config(TerrainKind::flat, 0, 1));
    e.reset(0);
    e.step({0, 0, 0, 1});
    REQUIRE(e.state().airborne);
    float vz_after_tick = e.state().vz;
    REQUIRE(vz_after_tick < e.config().jump_speed);
    e.step({0, 0, 0, 1});  // jump trigger in the air does nothing
    REQUIRE(e.state().vz == Catch::Approx(vz_after_tick - kGravity * 0.1f).margin(1e-4));
  }
  SECTION("uncommanded axes bleed kinetic energy") {
    Env e(base_config(TerrainKind::flat, 0, 1));
    e.reset(0);
    for (int i = 0; i < 5; ++i) e.step({1, 0, 0, 0});
    float ke = e.state().vx * e.state().vx + e.state().vy * e.state().vy;
    REQUIRE(ke > 0.1f);
    for (int i = 0; i < 20; ++i) {
      e.step({0, 0, 0, 0});
      float ke2 = e.state().vx * e.state().vx + e.state().vy * e.state().vy;
      REQUIRE(ke2 <= ke + 1e-7f);
      ke = ke2;
    }
    REQUIRE(ke < 0.01f);
  }
  SECTION("stepping a finished episode throws") {
    EnvConfig cfg = base_config(TerrainKind::flat, 0, 1);
    cfg.max_ticks = 1;
    Env e(cfg);
    e.reset(0);
    auto r = e.step({0, 0, 0, 0});
    REQUIRE(r.done);
    REQUIRE(r.info.timeout);
    REQUIRE_THROWS_AS(e.step({0, 0, 0, 0}), Error);
  }
  SECTION("same seed and actions reproduce the trajectory exactly") {
    auto run = [&]() {
      Env e(base_config(TerrainKind::parkour, 0.4f, 7));
      e.reset(11);
      std::vector<float> trace;
      for (int i = 0; i < 40 && !e.done(); ++i) {
        auto r = e.step({0.6f, 0.05f, -0.02f, i % 13 == 5 ? 1.0f : 0.0f});
        trace.push_back(e.state().x);
        trace.push_back(e.state().z);
        trace.push_back(r.reward);
      }
      return trace;
    };
    REQUIRE(run() == run());
  }
}

TEST_CASE("scandots are privileged ground truth", "[env]") {
  SECTION("flat terrain reads all zeros") {
    Heightfield hf = flat_field();
    RobotState s;
    s.z = 0.0f;
    auto dots = scandots(hf, s);
    REQUIRE(dots.size() == 55);
    for (float d : dots) REQUIRE(d == 0.0f);
  }
  SECTION("a 0.3 m ledge ahead reads 0.3 past the edge") {
    Heightfield hf = flat_field();
    // raise everything past x = 1.0
    for (int ix = 0; ix < hf.nx; ++ix)
      for (int iy = 0; iy < hf.ny; ++iy)
        if (hf.origin_x + (ix + 0.5f) * hf.resolution >= 1.0f) hf.cell(ix, iy) = 0.3f;
    RobotState s;
    auto dots = scandots(hf, s);
    ScanPattern p;
    for (int i = 0; i < p.nx; ++i) {
      float fwd = p.x0 + (p.x1 - p.x0) * static_cast<float>(i) / (p.nx - 1);
      for (int j = 0; j < p.ny; ++j) {
        float expected = hf.height_at(fwd, 0.0f);  // robot at origin, yaw 0
        (void)expected;
        float got = dots[static_cast<std::size_t>(i) * p.ny + j];
        if (fwd >= 1.025f) REQUIRE(got == Catch::Approx(0.3));
        if (fwd <= 0.975f) REQUIRE(got == Catch::Approx(0.0));
      }
    }
  }
  SECTION("yawing by pi samples behind the robot") {
    Heightfield hf = flat_field();
    for (int ix = 0; ix < hf.nx; ++ix)
      for (int iy = 0; iy < hf.ny; ++iy)
        if (hf.origin_x + (ix + 0.5f) * hf.resolution <= -0.5f) hf.cell(ix, iy) = 0.2f;
    RobotState fwd;
    auto ahead = scandots(hf, fwd);
    for (float d : ahead) REQUIRE(d == 0.0f);
    RobotState back;
    back.yaw = static_cast<float>(M_PI);
    auto behind = scandots(hf, back);
    float sum = 0;
    for (float d : behind) sum += d;
    REQUIRE(sum > 0.5f);  // the raised region behind is now sampled
  }
}

TEST_CASE("depth rendering", "[env]") {
  SECTION("straight-down camera over flat ground reads its height") {
    Heightfield hf = flat_field();
    RobotState s;
    s.z = 0.0f;
    CameraConfig cam;
    cam.width = 49;  // odd so the center pixel sits exactly on the axis
    cam.height = 33;
    cam.pitch_deg = -90.0f;
    cam.height_above_base = 0.7f;
    events::DepthFrame d = render_depth(s, hf, cam);
    REQUIRE(d.at(24, 16) == Catch::Approx(0.7).margin(1e-4));
  }
  SECTION("forward pitch sees the ground nearer at the image bottom") {
    Heightfield hf = flat_field();
    RobotState s;
    CameraConfig cam;  // defaults: pitch -30
    events::DepthFrame d = render_depth(s, hf, cam);
    for (int u = 0; u < cam.width; u += 7) {
      for (int v = cam.height - 1; v > 0; --v) {
        float below = d.at(u, v);
        float above = d.at(u, v - 1);
        REQUIRE(above >= below - 1e-5f);
      }
    }
    REQUIRE(d.at(cam.width / 2, cam.height - 1) < 1.5f);
    REQUIRE(d.at(cam.width / 2, 0) == cam.max_range);
  }
  SECTION("a wall at 1 m reads range over ray-angle cosine") {
    Heightfield hf = flat_field();
    for (int ix = 0; ix < hf.nx; ++ix)
      for (int iy = 0; iy < hf.ny; ++iy)
        if (hf.origin_x + (ix + 0.5f) * hf.resolution >= 1.0f) hf.cell(ix, iy) = 10.0f;
    RobotState s;
    CameraConfig cam;
    cam.pitch_deg = 0.0f;
    cam.height_above_base = 2.0f;  // high enough that no ray hits the floor first
    events::DepthFrame d = render_depth(s, hf, cam);
    float fx = (cam.width / 2.0f) / std::tan(cam.hfov_deg * static_cast<float>(M_PI) / 360.0f);
    for (int v = 0; v < cam.height; v += 5)
      for (int u = 0; u < cam.width; u += 5) {
        float du = (u + 0.5f - cam.width / 2.0f) / fx;
        float dv = (v + 0.5f - cam.height / 2.0f) / fx;
        float norm = std::sqrt(1.0f + du * du + dv * dv);
        float expected = 1.0f * norm;  // = 1 / cos(angle to the wall normal)
        REQUIRE(d.at(u, v) == Catch::Approx(expected).margin(2e-3));
      }
  }
}

TEST_CASE("lighting corruption", "[env]") {
  events::DepthFrame d(16, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) d.at(x, y) = 1.0f + 0.01f * (x + 16 * y);
  const std::size_t n = d.values.size();

  SECTION("normal is the identity") {
    events::DepthFrame out = corrupt_depth(d, Lighting::normal, 4);
    REQUIRE(out.values == d.values);
  }
  SECTION("overexposed saturates exactly 60% of pixels") {
    events::DepthFrame out = corrupt_depth(d, Lighting::overexposed, 4);
    std::size_t at_max = 0;
    for (float v : out.values) at_max += v == 5.0f ? 1 : 0;
    REQUIRE(at_max == static_cast<std::size_t>(0.6 * n));
    events::DepthFrame out2 = corrupt_depth(d, Lighting::overexposed, 4);
    REQUIRE(out.values == out2.values);  // seeded mask is deterministic
  }
  SECTION("underexposed adds noise and drops at least 30%") {
    events::DepthFrame out = corrupt_depth(d, Lighting::underexposed, 9);
    std::size_t at_max = 0, changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      at_max += out.values[i] == 5.0f ? 1 : 0;
      changed += out.values[i] != d.values[i] ? 1 : 0;
    }
    REQUIRE(at_max >= static_cast<std::size_t>(0.3 * n));
    REQUIRE(changed > n / 2);
    for (float v : out.values) REQUIRE(v > 0.0f);
  }
  SECTION("high speed blends in 40% stale pixels") {
    events::DepthFrame prev(16, 12, 3.33f);
    events::DepthFrame out = corrupt_depth(d, Lighting::high_speed, 4, &prev);
    std::size_t stale = 0;
    for (float v : out.values) stale += v == 3.33f ? 1 : 0;
    REQUIRE(stale == static_cast<std::size_t>(0.4 * n));
    // without a previous frame it degrades to the identity
    events::DepthFrame out2 = corrupt_depth(d, Lighting::high_speed, 4);
    REQUIRE(out2.values == d.values);
  }
}

TEST_CASE("corruption isolation", "[env]") {
  auto trace = [&](Lighting l) {
    EnvConfig cfg = base_config(TerrainKind::gap, 0.3f, 17);
    cfg.render_depth = true;
    cfg.camera.width = 12;
    cfg.camera.height = 8;
    cfg.lighting = l;
    Env e(cfg);
    Observation obs = e.reset(3);
    std::vector<float> t;
    for (int i = 0; i < 5; ++i) {
      auto r = e.step({0.5f, 0, 0, 0});
      t.push_back(e.state().x);
      t.insert(t.end(), r.obs.scandots.begin(), r.obs.scandots.end());
      t.insert(t.end(), r.obs.depth_true.values.begin(), r.obs.depth_true.values.end());
      obs = r.obs;
    }
    return t;
  };
  // dynamics, scandots and the true-depth event source are identical across
  // lighting conditions; only the observation-path depth differs
  REQUIRE(trace(Lighting::normal) == trace(Lighting::overexposed));
  REQUIRE(trace(Lighting::normal) == trace(Lighting::underexposed));
}

TEST_CASE("reward formula", "[env]") {
  SECTION("rest with aligned yaw is zero") {
    REQUIRE(reward(0.0f, 0.0f, {0, 0, 0, 0}, false, false) == 0.0f);
  }
  SECTION("0.1 m progress alone scores 0.2") {
    REQUIRE(reward(0.1f, 0.0f, {0, 0, 0, 0}, false, false) == Catch::Approx(0.2));
  }
  SECTION("a fall subtracts 5") {
    float base = reward(0.0f, 0.0f, {0, 0, 0, 0}, false, false);
    REQUIRE(reward(0.0f, 0.0f, {0, 0, 0, 0}, true, false) == Catch::Approx(base - 5.0));
  }
  SECTION("yaw error and action norm penalties") {
    REQUIRE(reward(0.0f, 0.5f, {0, 0, 0, 0}, false, false) == Catch::Approx(-0.25));
    REQUIRE(reward(0.0f, 0.0f, {1, 1, 1, 1}, false, false) == Catch::Approx(-0.04));
  }
}

TEST_CASE("curriculum rule", "[env]") {
  SECTION("successes climb by 0.1") {
    std::vector<float> levels(4, 0.5f);
    std::vector<EpisodeResult> results(4);
    for (auto& r : results) {
      r.success = true;
      r.progress = 8.0f;
    }
    curriculum_update(levels, results, 8.0f);
    for (float l : levels) REQUIRE(l == Catch::Approx(0.6));
  }
  SECTION("cap at 1.0 and floor at 0.0") {
    std::vector<float> levels = {1.0f, 0.0f};
    std::vector<EpisodeResult> results(2);
    results[0].success = true;
    results[1].fall = true;
    results[1].progress = 0.0f;
    curriculum_update(levels, results, 8.0f);
    REQUIRE(levels[0] == 1.0f);
    REQUIRE(levels[1] == 0.0f);
  }
  SECTION("early falls drop difficulty, late falls do not") {
    std::vector<float> levels = {0.5f, 0.5f, 0.5f};
    std::vector<EpisodeResult> results(3);
    results[0].fall = true;
    results[0].progress = 1.0f;  // < 25% of 8 m
    results[1].fall = true;
    results[1].progress = 5.0f;  // past 25%
    results[2].progress = 3.0f;  // timeout, unchanged
    curriculum_update(levels, results, 8.0f);
    REQUIRE(levels[0] == Catch::Approx(0.4));
    REQUIRE(levels[1] == Catch::Approx(0.5));
    REQUIRE(levels[2] == Catch::Approx(0.5));
  }
}

TEST_CASE("target yaw from waypoints", "[env]") {
  Heightfield hf = flat_field();
  SECTION("on the centerline the target is straight ahead") {
    RobotState s;
    REQUIRE(target_yaw(hf, s) == Catch::Approx(0.0));
  }
  SECTION("offset left of the centerline steers right") {
    RobotState s;
    s.y = -0.3f;  // left of the course (+y is rightward)
    REQUIRE(target_yaw(hf, s) > 0.0f);
    s.y = 0.3f;
    REQUIRE(target_yaw(hf, s) < 0.0f);
  }
  SECTION("waypoints behind or too close are skipped") {
    RobotState s;
    s.x = 3.2f;
    // waypoints sit at 0.5 m spacing: 3.5 is too close (0.3 ahead), 3.0 is
    // behind, so 4.0 is the first eligible one
    float ty = target_yaw(hf, s);
    REQUIRE(ty == Catch::Approx(0.0));
    s.y = -0.2f;
    float expected = std::atan2(0.2, 0.8);
    REQUIRE(target_yaw(hf, s) == Catch::Approx(expected).margin(1e-6));
  }
}

TEST_CASE("motor energy accumulates work", "[env]") {
  Env e(base_config(TerrainKind::flat, 0, 1));
  e.reset(0);
  for (int i = 0; i < 10; ++i) e.step({0, 0, 0, 0});
  REQUIRE(e.result().motor_energy_mJ == 0.0);

  Env e2(base_config(TerrainKind::flat, 0, 1));
  e2.reset(0);
  for (int i = 0; i < 10 && !e2.done(); ++i) e2.step({0.8f, 0, 0, 0});
  REQUIRE(e2.result().motor_energy_mJ > 0.0);
  REQUIRE(e2.motor_log().size() == 10 * 5);
}
