#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikekour/checkpoint.hpp"
#include "spikekour/config.hpp"
#include "spikekour/distill.hpp"
#include "spikekour/energy.hpp"
#include "spikekour/event_io.hpp"
#include "spikekour/policy.hpp"

using namespace spikekour;

namespace {

// Exit codes: 0 ok, 1 usage, 2 input I/O, 3 training divergence,
// 4 checkpoint mismatch, 5 spec/stats error.
enum ExitCode {
  kOk = 0,
  kUsage = 1,
  kInputIo = 2,
  kDivergence = 3,
  kCheckpoint = 4,
  kSpec = 5,
};

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
}

std::vector<float> parse_floats(const std::vector<std::string>& items) {
  std::vector<float> out;
  for (const auto& s : items) out.push_back(std::stof(s));
  return out;
}

struct EventsArgs {
  std::string input, output, csv, flow, config_path;
  float threshold = -1.0f;
  std::string mode;
};

int cmd_events(const EventsArgs& args) {
  RunConfig run;
  if (!args.config_path.empty()) run = RunConfig::load(args.config_path);
  events::EventSimConfig sim = run.event_sim_config();
  if (args.threshold > 0.0f) sim.contrast = args.threshold;
  if (!args.mode.empty())
    sim.mode = args.mode == "flow" ? events::SimMode::flow : events::SimMode::difference;
  if (args.mode == "flow" && args.flow.empty())
    throw SpecError("--mode flow requires --flow <fseq file> (flow is supplied externally)");

  events::DepthSequence seq = events::read_dseq_file(args.input);
  if (seq.frames.size() < 1) throw ParseError("DSEQ has no frames", 16);

  events::FlowSequence flow;
  if (sim.mode == events::SimMode::flow) {
    std::ifstream fs(args.flow, std::ios::binary);
    if (!fs) throw IoError("cannot open flow file " + args.flow);
    flow = events::read_fseq(fs);
    if (flow.width != seq.width || flow.height != seq.height)
      throw SpecError("flow grid does not match depth grid");
    if (flow.frames.size() + 1 < seq.frames.size())
      throw SpecError("flow file must cover every frame interval");
  }

  events::EventStream all;
  events::PixelRefState state;
  events::IntensityFrame prev;
  double dt = 1.0 / static_cast<double>(seq.fps);
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    events::IntensityFrame l = events::depth_to_intensity(seq.frame(k), sim);
    if (k == 0) {
      state.init(l);
      prev = l;
      continue;
    }
    double t0 = (static_cast<double>(k) - 1.0) * dt;
    double t1 = static_cast<double>(k) * dt;
    events::EventStream s;
    if (sim.mode == events::SimMode::difference) {
      s = events::simulate_events(prev, l, t0, t1, sim, state);
    } else {
      events::GradientField grad = events::image_gradient(prev);
      events::IntensityFrame dl = events::delta_L_flow(grad, flow.frames[k - 1], dt);
      s = events::simulate_events_flow(dl, t0, t1, sim, state);
    }
    all.insert(all.end(), s.begin(), s.end());
    prev = l;
  }
  events::write_events_file(all, seq.width, seq.height, args.output);
  if (!args.csv.empty()) {
    std::ofstream cs(args.csv, std::ios::trunc);
    if (!cs) throw IoError("cannot write " + args.csv);
    events::write_events_csv(all, cs);
  }
  double per_pixel = static_cast<double>(all.size()) /
                     (static_cast<double>(seq.width) * seq.height);
  std::printf("frames=%zu events=%zu events_per_pixel=%.4f\n", seq.frames.size(), all.size(),
              per_pixel);
  return kOk;
}

struct TrainArgs {
  std::string config_path, method = "bc", out;
  int64_t seed = -1;
};

int cmd_train_teacher(const TrainArgs& args) {
  RunConfig run;
  if (!args.config_path.empty()) run = RunConfig::load(args.config_path);
  if (args.seed >= 0) run.seed = static_cast<uint64_t>(args.seed);
  std::string out_dir = args.out.empty() ? run.output_dir : args.out;
  std::filesystem::create_directories(out_dir);

  num::ParamStore store;
  policy::TeacherNet teacher(run.teacher_config(), store, run.seed);
  env::EnvConfig base = run.env_config();
  base.render_depth = false;
  base.terrain.kind = run.distill.terrain;
  policy::VecEnv envs(base, run.env_count, substream_seed(run.seed, "teacher.envs"),
                      run.distill.difficulties);
  policy::MetricsSink metrics(out_dir + "/teacher_metrics.jsonl");

  if (args.method == "bc") {
    policy::BcConfig cfg = run.bc;
    cfg.seed = run.seed;
    policy::BcResult res = policy::train_teacher_bc(envs, teacher, cfg, &metrics);
    std::printf("bc holdout loss %.6f -> %.6f\n", res.initial_holdout_loss,
                res.final_holdout_loss);
  } else {
    policy::PPOConfig cfg = run.ppo;
    cfg.seed = run.seed;
    policy::PPOTrainer trainer(teacher, cfg);
    policy::PPOResult res = trainer.train(envs, cfg.iterations, &metrics);
    std::printf("ppo mean return %.3f -> %.3f\n", res.initial_mean_return,
                res.final_mean_return);
  }
  num::ParamStore clean = policy::filter_params(store, "teacher");
  num::save_checkpoint(clean, out_dir + "/teacher");
  std::printf("teacher checkpoint: %s/teacher.{json,bin}\n", out_dir.c_str());
  return kOk;
}

struct DistillArgs {
  std::string config_path, teacher, out;
  int64_t seed = -1;
  bool depth_baseline = false;
};

void verify_teacher_checkpoint(const num::ParamStore& loaded, const RunConfig& run) {
  num::ParamStore expected;
  policy::TeacherNet probe(run.teacher_config(), expected, 0);
  std::string diff = num::manifest_diff(expected, loaded);
  if (!diff.empty())
    throw CheckpointMismatch("teacher checkpoint does not match config:\n" + diff);
}

int cmd_distill(const DistillArgs& args) {
  RunConfig run;
  if (!args.config_path.empty()) run = RunConfig::load(args.config_path);
  if (args.seed >= 0) run.seed = static_cast<uint64_t>(args.seed);
  std::string out_dir = args.out.empty() ? run.output_dir : args.out;
  std::filesystem::create_directories(out_dir);

  num::ParamStore teacher_store = num::load_checkpoint(args.teacher);
  verify_teacher_checkpoint(teacher_store, run);
  policy::TeacherNet teacher(run.teacher_config(), teacher_store, run.seed);

  num::ParamStore student_store;
  snn::StudentNet student(run.student_config(args.depth_baseline), student_store,
                          substream_seed(run.seed, "student.init"));
  policy::DistillConfig cfg = run.distill;
  cfg.seed = run.seed;
  policy::Distiller distiller(teacher, student, run.env_config(), cfg, run.event_sim_config(),
                              args.depth_baseline);
  policy::MetricsSink metrics(out_dir + "/distill_metrics.jsonl");

  auto warm = distiller.run_warmup(&metrics);
  std::printf("warmup probe loss %.6f -> %.6f\n", warm.probe_loss_before, warm.probe_loss_after);
  auto onp = distiller.run_onpolicy(&metrics);
  std::printf("onpolicy probe loss %.6f -> %.6f\n", onp.probe_loss_before, onp.probe_loss_after);

  std::string prefix = out_dir + (args.depth_baseline ? "/baseline" : "/student");
  num::save_checkpoint(student_store, prefix);
  write_json_file(student.spec_json(), prefix + "_netspec.json");
  write_json_file(distiller.firing_stats().to_json(), prefix + "_firing_stats.json");
  std::printf("student checkpoint: %s.{json,bin}\n", prefix.c_str());
  return kOk;
}

struct EvalArgs {
  std::string config_path, policy = "expert", checkpoint, out;
  std::vector<std::string> terrains, lightings, difficulties;
  int episodes = -1;
  int64_t seed = -1;
};

int cmd_eval(const EvalArgs& args) {
  RunConfig run;
  if (!args.config_path.empty()) run = RunConfig::load(args.config_path);
  if (args.seed >= 0) run.seed = static_cast<uint64_t>(args.seed);

  policy::EvalRequest req;
  req.seed = run.seed;
  req.episodes = args.episodes > 0 ? args.episodes : run.eval_episodes;
  req.terrains.clear();
  for (const auto& t : args.terrains.empty() ? run.eval_terrains : args.terrains)
    req.terrains.push_back(env::terrain_kind_from_string(t));
  req.difficulties =
      args.difficulties.empty() ? run.eval_difficulties : parse_floats(args.difficulties);
  req.lightings.clear();
  for (const auto& l : args.lightings.empty() ? run.eval_lightings : args.lightings)
    req.lightings.push_back(env::lighting_from_string(l));

  env::EnvConfig base = run.env_config();
  base.render_depth = false;

  std::unique_ptr<policy::EpisodePolicy> pol;
  num::ParamStore store;
  std::unique_ptr<policy::TeacherNet> teacher;
  std::unique_ptr<snn::StudentNet> student;
  if (args.policy == "expert") {
    pol = std::make_unique<policy::ExpertPolicy>();
  } else if (args.policy == "teacher") {
    if (args.checkpoint.empty()) throw SpecError("eval --policy teacher needs --checkpoint");
    store = num::load_checkpoint(args.checkpoint);
    verify_teacher_checkpoint(store, run);
    teacher = std::make_unique<policy::TeacherNet>(run.teacher_config(), store, 0);
    pol = std::make_unique<policy::TeacherPolicy>(*teacher);
  } else if (args.policy == "student" || args.policy == "depth-baseline") {
    if (args.checkpoint.empty()) throw SpecError("eval --policy " + args.policy + " needs --checkpoint");
    bool depth = args.policy == "depth-baseline";
    store = num::load_checkpoint(args.checkpoint);
    student = std::make_unique<snn::StudentNet>(run.student_config(depth), store, 0);
    base.render_depth = true;
    pol = std::make_unique<policy::StudentPolicy>(*student, run.event_sim_config(),
                                                  base.tick_seconds(), depth);
  } else {
    throw SpecError("unknown policy kind: " + args.policy);
  }

  policy::EvalReport rep = policy::evaluate(*pol, base, req);
  std::string out_path = args.out.empty() ? run.output_dir + "/eval.json" : args.out;
  write_json_file(rep.to_json(), out_path);

  std::printf("%-16s %-8s %-6s %-13s %9s %10s %12s\n", "policy", "terrain", "diff", "lighting",
              "success", "progress", "motor_mJ");
  for (const auto& r : rep.rows)
    std::printf("%-16s %-8s %-6.2f %-13s %8.1f%% %9.2fm %11.1f\n", r.policy.c_str(),
                env::to_string(r.terrain), r.difficulty, env::to_string(r.lighting),
                100.0 * r.success_rate(), r.mean_progress, r.mean_motor_energy_mJ);
  std::printf("report: %s\n", out_path.c_str());
  return kOk;
}

struct EnergyArgs {
  std::string spec, stats, out, config_path;
  bool paper_check = false;
  double e_mac = -1.0, e_ac = -1.0;
};

int paper_check(const energy::EnergyConfig& cfg) {
  // Published operation counts for the two encoder variants plus the ANN
  // actor power; the regression recomputes every derived table entry.
  auto resnet = energy::report_from_counts("resnet_encoder", 8.00e6, 8.76e7, 2.04e8, 4, cfg);
  auto mlp = energy::report_from_counts("mlp_encoder", 7.17e6, 2.61e6, 3.31e7, 4, cfg);
  double savings_resnet_rounded = 100.0 * (1.0 - 0.11 / 0.94);
  double savings_mlp_rounded = 100.0 * (1.0 - 0.04 / 0.15);

  bool ok = true;
  auto check = [&](const char* name, double got, double want, double tol) {
    bool pass = std::fabs(got - want) <= tol;
    ok = ok && pass;
    std::printf("  %-28s %12.5f (expected %g +/- %g) %s\n", name, got, want, tol,
                pass ? "ok" : "MISMATCH");
  };
  std::printf("%0.2f/%0.5f/%0.4f/%0.4f\n", resnet.e_ann_mJ, resnet.e_snn_mJ, resnet.efficiency,
              mlp.efficiency);
  check("ann_power_resnet_mJ", resnet.e_ann_mJ, 0.94, 0.005);
  check("ann_power_mlp_mJ", mlp.e_ann_mJ, 0.15, 0.005);
  check("snn_power_resnet_mJ", resnet.e_snn_mJ, 0.11564, 1e-5);
  check("snn_power_mlp_mJ", mlp.e_snn_mJ, 0.035331, 1e-5);
  check("efficiency_resnet", resnet.efficiency, 0.469, 0.005);
  check("efficiency_mlp", mlp.efficiency, 0.296, 0.005);
  check("savings_resnet_pct", savings_resnet_rounded, 88.29, 0.02);
  check("savings_mlp_pct", savings_mlp_rounded, 73.33, 0.02);
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? kOk : kSpec;
}

int cmd_energy(const EnergyArgs& args) {
  RunConfig run;
  if (!args.config_path.empty()) run = RunConfig::load(args.config_path);
  energy::EnergyConfig cfg = run.energy;
  if (args.e_mac > 0.0) cfg.e_mac_pj = args.e_mac;
  if (args.e_ac > 0.0) cfg.e_ac_pj = args.e_ac;

  if (args.paper_check) return paper_check(cfg);

  if (args.spec.empty() || args.stats.empty())
    throw SpecError("energy needs --spec and --stats (or --paper-check)");
  nlohmann::json spec_j, stats_j;
  {
    std::ifstream is(args.spec);
    if (!is) throw IoError("cannot open net spec " + args.spec);
    try {
      is >> spec_j;
    } catch (const std::exception& e) {
      throw SpecError("malformed net spec JSON in " + args.spec + ": " + e.what());
    }
  }
  {
    std::ifstream is(args.stats);
    if (!is) throw IoError("cannot open firing stats " + args.stats);
    try {
      is >> stats_j;
    } catch (const std::exception& e) {
      throw SpecError("malformed firing stats JSON in " + args.stats + ": " + e.what());
    }
  }
  snn::FiringStats stats = snn::FiringStats::from_json(stats_j);
  auto modules = energy::layers_from_netspec(spec_j, stats);
  int timesteps = spec_j.value("timesteps", 1);

  nlohmann::json reports = nlohmann::json::array();
  std::printf("%-10s %14s %14s %14s %10s %10s %8s\n", "module", "flops_ann", "snn_first",
              "sops", "e_ann_mJ", "e_snn_mJ", "savings");
  for (const auto& [name, layers] : modules) {
    energy::EnergyReport rep = energy::make_report(name, layers, timesteps, cfg);
    reports.push_back(rep.to_json());
    std::printf("%-10s %14.4g %14.4g %14.4g %10.4g %10.4g %7.2f%%\n", name.c_str(),
                rep.flops_ann, rep.flops_snn_first, rep.sops_total, rep.e_ann_mJ, rep.e_snn_mJ,
                rep.savings_pct);
  }
  if (!args.out.empty()) write_json_file({{"reports", reports}}, args.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikekour: event-camera spiking-network parkour pipeline"};
  app.require_subcommand(1);

  EventsArgs ev;
  auto* cmd_ev = app.add_subcommand("events", "simulate an event stream from a DSEQ depth file");
  cmd_ev->add_option("--input,-i", ev.input, "input DSEQ path")->required();
  cmd_ev->add_option("--output,-o", ev.output, "output EVT1 path")->required();
  cmd_ev->add_option("--csv", ev.csv, "also export events as CSV");
  cmd_ev->add_option("--threshold", ev.threshold, "contrast threshold C");
  cmd_ev->add_option("--mode", ev.mode, "diff|flow")
      ->check(CLI::IsMember({"diff", "difference", "flow"}));
  cmd_ev->add_option("--flow", ev.flow, "FSEQ flow file (flow mode)");
  cmd_ev->add_option("--config,-c", ev.config_path, "run config JSON");

  TrainArgs tr;
  auto* cmd_tr = app.add_subcommand("train-teacher", "train the privileged teacher policy");
  cmd_tr->add_option("--config,-c", tr.config_path, "run config JSON");
  cmd_tr->add_option("--method", tr.method, "bc|ppo")->check(CLI::IsMember({"bc", "ppo"}));
  cmd_tr->add_option("--out", tr.out, "output directory");
  cmd_tr->add_option("--seed", tr.seed, "root seed override");

  DistillArgs di;
  auto* cmd_di = app.add_subcommand("distill", "distill the teacher into the spiking student");
  cmd_di->add_option("--config,-c", di.config_path, "run config JSON");
  cmd_di->add_option("--teacher", di.teacher, "teacher checkpoint prefix")->required();
  cmd_di->add_option("--out", di.out, "output directory");
  cmd_di->add_option("--seed", di.seed, "root seed override");
  cmd_di->add_flag("--depth-baseline", di.depth_baseline,
                   "train the depth-input baseline instead of the event student");

  EvalArgs evl;
  auto* cmd_evl = app.add_subcommand("eval", "evaluate a policy over terrain/lighting suites");
  cmd_evl->add_option("--config,-c", evl.config_path, "run config JSON");
  cmd_evl->add_option("--policy", evl.policy, "expert|teacher|student|depth-baseline");
  cmd_evl->add_option("--checkpoint", evl.checkpoint, "checkpoint prefix for net policies");
  cmd_evl->add_option("--terrains", evl.terrains, "terrain kinds")->delimiter(',');
  cmd_evl->add_option("--difficulties", evl.difficulties, "difficulty levels")->delimiter(',');
  cmd_evl->add_option("--lightings", evl.lightings, "lighting conditions")->delimiter(',');
  cmd_evl->add_option("--episodes", evl.episodes, "episodes per cell");
  cmd_evl->add_option("--seed", evl.seed, "root seed override");
  cmd_evl->add_option("--out", evl.out, "report JSON path");

  EnergyArgs en;
  auto* cmd_en = app.add_subcommand("energy", "theoretical energy accounting");
  cmd_en->add_option("--spec", en.spec, "network spec JSON");
  cmd_en->add_option("--stats", en.stats, "firing stats JSON");
  cmd_en->add_option("--out", en.out, "report JSON path");
  cmd_en->add_option("--config,-c", en.config_path, "run config JSON");
  cmd_en->add_flag("--paper-check", en.paper_check, "run the published-table regression");
  cmd_en->add_option("--e-mac", en.e_mac, "MAC energy in pJ");
  cmd_en->add_option("--e-ac", en.e_ac, "AC energy in pJ");

  bool emit_default = false;
  auto* cmd_cfg = app.add_subcommand("config", "configuration helpers");
  cmd_cfg->add_flag("--emit-default", emit_default, "print the default run config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (cmd_ev->parsed()) return cmd_events(ev);
    if (cmd_tr->parsed()) return cmd_train_teacher(tr);
    if (cmd_di->parsed()) return cmd_distill(di);
    if (cmd_evl->parsed()) return cmd_eval(evl);
    if (cmd_en->parsed()) return cmd_energy(en);
    if (cmd_cfg->parsed()) {
      (void)emit_default;
      std::cout << RunConfig().to_json().dump(2) << "\n";
      return kOk;
    }
  } catch (const TrainDivergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDivergence;
  } catch (const CheckpointMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCheckpoint;
  } catch (const SpecError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSpec;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputIo;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInputIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
