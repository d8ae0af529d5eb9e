#include "cli.hpp"

#include "dexforge/ablation.hpp"
#include "dexforge/bridge.hpp"
#include "dexforge/kernels.hpp"
#include "dexforge/run_config.hpp"
#include "dexforge/task_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace dexforge::cli {

namespace fs = std::filesystem;

namespace {

class ArgumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Log {
  std::ostream& err;
  bool timestamps{true};

  void operator()(const std::string& line) const {
    if (timestamps) {
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::tm tm{};
      gmtime_r(&now, &tm);
      err << '[' << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << "] ";
    }
    err << line << '\n';
  }
};

// Flag values win over the config file, which wins over built-in defaults.
template <typename T>
void pick(const CLI::Option* opt, const T& flag, T& target) {
  if (opt->count() > 0) target = flag;
}

void apply_params(sim::TaskSpec& task, const std::vector<std::string>& params) {
  for (const auto& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ArgumentError("--param expects key=value, got '" + p + "'");
    sim::set_param(task, config::trim(p.substr(0, eq)), config::to_double(p.substr(eq + 1)));
  }
}

void require_dir(const fs::path& dir, const std::string& what) {
  if (!fs::is_directory(dir)) throw ContractViolation(what + " " + dir.string() + " does not exist");
}

void require_path(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ContractViolation(what + " " + p.string() + " does not exist");
}

std::vector<fs::path> files_with_suffix(const fs::path& in, const std::string& suffix) {
  std::vector<fs::path> out;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_regular_file() && e.path().filename().string().ends_with(suffix)) out.push_back(e.path());
    std::sort(out.begin(), out.end());
  } else {
    out.push_back(in);
  }
  return out;
}

std::string outcome_line(const std::string& what, int success, int partial, int failure) {
  std::ostringstream s;
  s << what << ": " << success << " success, " << partial << " partial, " << failure << " failure of "
    << success + partial + failure;
  return s.str();
}

struct Common {
  std::string config;
  CLI::Option* config_opt{nullptr};

  void add(CLI::App* app) {
    config_opt = app->add_option("--config", config, "Run configuration file (key = value lines)")
                     ->check(CLI::ExistingFile);
  }

  RunConfig load() const { return config_opt->count() ? RunConfig::load(config) : RunConfig::defaults(); }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Force-informed demonstration pipeline: record, extract, replay, train, evaluate.", "dexforge"};
  app.require_subcommand(1);
  app.fallthrough();
  bool no_timestamps = false;
  app.add_flag("--no-timestamps", no_timestamps, "Omit timestamps from log lines");
  app.set_version_flag("--version", "dexforge 0.1.0");

  // record
  auto* rec = app.add_subcommand("record", "Record kinesthetic demonstrations");
  Common rec_c;
  rec_c.add(rec);
  std::string rec_task, rec_driver = "scripted", rec_out, rec_ui;
  int rec_n = 1, rec_jobs = 0;
  std::uint16_t rec_port = bridge::kDefaultPort;
  std::uint64_t rec_seed = 0;
  bool rec_live = false;
  std::vector<std::string> rec_params;
  auto* rec_task_o = rec->add_option("--task", rec_task, "Built-in task name or .task.json file");
  rec->add_option("--driver", rec_driver, "scripted or live")->check(CLI::IsMember({"scripted", "live"}));
  rec->add_flag("--live", rec_live, "Record through the websocket bridge (same as --driver live)");
  rec->add_option("--n", rec_n, "Number of demonstrations")->check(CLI::PositiveNumber);
  auto* rec_seed_o = rec->add_option("--seed", rec_seed, "First seed; demo i uses seed + i");
  auto* rec_out_o = rec->add_option("--out", rec_out, "Output directory (default $DEXFORGE_DATA_DIR or ./data)");
  rec->add_option("--param", rec_params, "Override a task constant, key=value (repeatable)")->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  rec->add_option("--port", rec_port, "Bridge port for live recording");
  rec->add_option("--ui", rec_ui, "Directory of static UI files served during live recording")
      ->check(CLI::ExistingDirectory);
  auto* rec_jobs_o = rec->add_option("--jobs", rec_jobs, "Parallel recordings (0 = all cores)")
                         ->check(CLI::NonNegativeNumber);

  // extract
  auto* ext = app.add_subcommand("extract", "Stage 1: force-informed targets from kinesthetic demos");
  Common ext_c;
  ext_c.add(ext);
  std::string ext_in, ext_out;
  double ext_kf = 0.0;
  int ext_window = 1;
  bool ext_observed = false;
  ext->add_option("--in", ext_in, "Kinesthetic .demo.jsonl file or directory")->required()->check(CLI::ExistingPath);
  auto* ext_out_o = ext->add_option("--out", ext_out, "Output directory for .targets.json files");
  auto* ext_kf_o = ext->add_option("--kf", ext_kf, "Target compliance in m/N (default 1/220)");
  auto* ext_window_o = ext->add_option("--filter-window", ext_window, "Causal moving-average window (1 = off)");
  ext->add_flag("--observed", ext_observed, "Write the observed positions instead (naive baseline)");

  // replay
  auto* rep = app.add_subcommand("replay", "Stage 2: replay targets under impedance control");
  Common rep_c;
  rep_c.add(rep);
  std::string rep_in, rep_out, rep_task;
  double rep_kp = 0.0, rep_kv = 0.0;
  int rep_jobs = 0;
  std::vector<std::string> rep_params;
  rep->add_option("--in", rep_in, ".targets.json file or directory")->required()->check(CLI::ExistingPath);
  auto* rep_out_o = rep->add_option("--out", rep_out, "Output directory for replay demos");
  auto* rep_task_o = rep->add_option("--task", rep_task, "Task file overriding the recorded task name");
  auto* rep_kp_o = rep->add_option("--kp", rep_kp, "Impedance stiffness (N/m)");
  auto* rep_kv_o = rep->add_option("--kv", rep_kv, "Impedance damping (N*s/m; default critically damped)");
  rep->add_option("--param", rep_params, "Override a task constant, key=value (repeatable)")->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  auto* rep_jobs_o = rep->add_option("--jobs", rep_jobs, "Parallel replays (0 = all cores)")
                         ->check(CLI::NonNegativeNumber);

  // train
  auto* trn = app.add_subcommand("train", "Train a policy on replay demonstrations");
  Common trn_c;
  trn_c.add(trn);
  std::string trn_data, trn_task, trn_out, trn_action, trn_obs, trn_regressor;
  bool trn_proprio = false;
  int trn_k = 0, trn_hist = 0, trn_pred = 0, trn_exec = 0, trn_max = 0;
  double trn_iw = 0.0, trn_ww = 0.0;
  auto* trn_data_o = trn->add_option("--data", trn_data, "Directory of replay demos (default $DEXFORGE_DATA_DIR)");
  auto* trn_task_o = trn->add_option("--task", trn_task, "Task whose replay demos are used");
  trn->add_option("--out", trn_out, "Model file to write (.policy.json)")->required();
  auto* trn_action_o = trn->add_option("--action", trn_action, "force_informed or observed_position")
                           ->check(CLI::IsMember({"force_informed", "observed_position"}));
  auto* trn_obs_o = trn->add_option("--obs", trn_obs, "image_ft, image_binary or image_only")
                        ->check(CLI::IsMember({"image_ft", "image_binary", "image_only"}));
  auto* trn_proprio_o = trn->add_flag("--proprio", trn_proprio, "Include joint angles in observations");
  auto* trn_reg_o = trn->add_option("--regressor", trn_regressor, "knn or linear")
                        ->check(CLI::IsMember({"knn", "linear"}));
  auto* trn_k_o = trn->add_option("--knn-k", trn_k, "Neighbours for knn")->check(CLI::PositiveNumber);
  auto* trn_hist_o = trn->add_option("--obs-history", trn_hist, "Observation frames per decision");
  auto* trn_pred_o = trn->add_option("--pred-horizon", trn_pred, "Predicted actions per chunk");
  auto* trn_exec_o = trn->add_option("--exec-horizon", trn_exec, "Executed actions per chunk");
  auto* trn_iw_o = trn->add_option("--image-weight", trn_iw, "Weight of image features");
  auto* trn_ww_o = trn->add_option("--wrench-weight", trn_ww, "Weight of wrench features");
  trn->add_option("--max-demos", trn_max, "Use at most this many demos (0 = all)")->check(CLI::NonNegativeNumber);

  // eval
  auto* evl = app.add_subcommand("eval", "Roll out a trained policy over seeds");
  Common evl_c;
  evl_c.add(evl);
  std::string evl_model, evl_task, evl_seeds, evl_out;
  int evl_jobs = 0;
  std::vector<std::string> evl_params;
  evl->add_option("--model", evl_model, "Model file from train")->required()->check(CLI::ExistingFile);
  auto* evl_task_o = evl->add_option("--task", evl_task, "Task name (\"-ood\" suffix for the OOD variant) or file");
  auto* evl_seeds_o = evl->add_option("--seeds", evl_seeds, "Evaluation seeds, e.g. 0..29 or 1,5,9");
  evl->add_option("--out", evl_out, "Per-seed outcome table (CSV)");
  evl->add_option("--param", evl_params, "Override a task constant, key=value (repeatable)")->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  auto* evl_jobs_o = evl->add_option("--jobs", evl_jobs, "Parallel rollouts (0 = all cores)")
                         ->check(CLI::NonNegativeNumber);

  // ablate
  auto* abl = app.add_subcommand("ablate", "Run an ablation experiment");
  std::string abl_spec, abl_out;
  int abl_jobs = 0;
  std::uint64_t abl_seed = 0;
  abl->add_option("--spec", abl_spec, "Experiment spec file")->required()->check(CLI::ExistingFile);
  abl->add_option("--out", abl_out, "Report directory")->required();
  auto* abl_seed_o = abl->add_option("--seed", abl_seed, "First demo seed (overrides demo_seed in the experiment file)");
  abl->add_option("--jobs", abl_jobs, "Parallel rollouts (0 = all cores)")->check(CLI::NonNegativeNumber);

  // serve
  auto* srv = app.add_subcommand("serve", "Serve live kinesthetic sessions over a websocket");
  std::string srv_data, srv_ui, srv_address = "127.0.0.1";
  std::uint16_t srv_port = bridge::kDefaultPort;
  bool srv_lockstep = false;
  srv->add_option("--port", srv_port, "Websocket port");
  srv->add_option("--address", srv_address, "Listen address");
  auto* srv_data_o = srv->add_option("--data-dir", srv_data, "Where recordings are written");
  srv->add_option("--ui", srv_ui, "Directory of static UI files")->check(CLI::ExistingDirectory);
  srv->add_flag("--lockstep", srv_lockstep, "Advance only on client step messages (testing)");

  // validate
  auto* val = app.add_subcommand("validate", "Check demonstration files");
  std::vector<std::string> val_paths;
  val->add_option("paths", val_paths, "Files or directories")->required()->check(CLI::ExistingPath);

  // report
  auto* rpt = app.add_subcommand("report", "Render tables and charts for an ablation report");
  std::string rpt_in, rpt_out;
  rpt->add_option("--in", rpt_in, "Directory holding cells.csv and comparisons.csv")->required()
      ->check(CLI::ExistingDirectory);
  rpt->add_option("--out", rpt_out, "Output directory (default: the input directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  const Log log{err, !no_timestamps};
  try {
    if (*rec) {
      RunConfig cfg = rec_c.load();
      pick(rec_task_o, rec_task, cfg.task);
      pick(rec_seed_o, rec_seed, cfg.seed);
      pick(rec_jobs_o, rec_jobs, cfg.jobs);
      fs::path out_dir = cfg.out_dir;
      pick(rec_out_o, fs::path(rec_out), out_dir);
      if (rec_live || rec_driver == "live") {
        bridge::ServerOptions o;
        o.port = rec_port;
        o.data_dir = out_dir;
        if (!rec_ui.empty()) o.ui_dir = rec_ui;
        o.max_recordings = rec_n;
        o.log = log;
        bridge::Server server(o);
        server.run();
        for (const auto& p : server.recordings()) out << p.string() << '\n';
        return 0;
      }
      if (cfg.task.empty()) throw ArgumentError("record: --task is required");
      sim::TaskSpec task = sim::resolve_task(cfg.task);
      apply_params(task, rec_params);
      fs::create_directories(out_dir);
      std::vector<fs::path> paths(static_cast<size_t>(rec_n));
      std::vector<std::string> outcomes(paths.size());
      kernels::parallel_for(rec_n, cfg.jobs, [&](int i) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
        auto driver = pipeline::make_scripted_driver(task, seed);
        const auto demo = pipeline::record_kinesthetic(task, seed, *driver);
        paths[i] = out_dir / data::demo_file_name(demo.header);
        data::save(demo, paths[i]);
        outcomes[i] = demo.header.outcome;
      });
      for (size_t i = 0; i < paths.size(); ++i) {
        out << paths[i].string() << ' ' << outcomes[i] << '\n';
        log("recorded " + paths[i].filename().string());
      }
      return 0;
    }

    if (*ext) {
      RunConfig cfg = ext_c.load();
      pick(ext_kf_o, ext_kf, cfg.extraction.kf);
      pick(ext_window_o, ext_window, cfg.extraction.filter_window);
      cfg.extraction.validate();
      fs::path out_dir = cfg.out_dir;
      pick(ext_out_o, fs::path(ext_out), out_dir);
      fs::create_directories(out_dir);
      int written = 0;
      for (const auto& path : files_with_suffix(ext_in, ".demo.jsonl")) {
        const auto demo = data::load(path);
        if (demo.header.stage != data::Stage::Kinesthetic) continue;
        auto traj = ext_observed ? pipeline::observed_trajectory(demo) : pipeline::extract_stage1(demo, cfg.extraction);
        const fs::path target = out_dir / pipeline::trajectory_file_name(traj);
        pipeline::save_trajectory(traj, target);
        out << target.string() << '\n';
        ++written;
      }
      if (written == 0) throw ContractViolation("extract: no kinesthetic demonstrations under " + ext_in);
      log("extracted " + std::to_string(written) + " trajectories");
      return 0;
    }

    if (*rep) {
      RunConfig cfg = rep_c.load();
      pick(rep_kp_o, rep_kp, cfg.gains.kp);
      if (rep_kv_o->count()) cfg.gains.kv = rep_kv;
      else if (rep_kp_o->count()) cfg.gains = control::ImpedanceGains::critically_damped(cfg.gains.kp);
      control::validate_gains(cfg.gains);
      pick(rep_jobs_o, rep_jobs, cfg.jobs);
      fs::path out_dir = cfg.out_dir;
      pick(rep_out_o, fs::path(rep_out), out_dir);
      std::optional<sim::TaskSpec> override_task;
      if (rep_task_o->count()) override_task = sim::resolve_task(rep_task);
      fs::create_directories(out_dir);
      const auto inputs = files_with_suffix(rep_in, ".targets.json");
      std::vector<pipeline::ForceInformedTrajectory> trajs;
      for (const auto& p : inputs) trajs.push_back(pipeline::load_trajectory(p));
      if (trajs.empty()) throw ContractViolation("replay: no .targets.json files under " + rep_in);
      std::vector<fs::path> paths(trajs.size());
      std::vector<std::string> outcomes(trajs.size());
      kernels::parallel_for(static_cast<int>(trajs.size()), cfg.jobs, [&](int i) {
        sim::TaskSpec task = override_task ? *override_task : sim::builtin_task(trajs[i].task);
        apply_params(task, rep_params);
        auto traj = trajs[i];
        traj.task = task.name;
        const auto demo = pipeline::replay_stage2(task, traj.seed, traj, cfg.gains);
        paths[i] = out_dir / data::demo_file_name(demo.header);
        data::save(demo, paths[i]);
        outcomes[i] = demo.header.outcome;
      });
      int s = 0, p = 0, f = 0;
      for (size_t i = 0; i < paths.size(); ++i) {
        out << paths[i].string() << ' ' << outcomes[i] << '\n';
        (outcomes[i] == "success" ? s : outcomes[i] == "partial" ? p : f)++;
      }
      out << outcome_line("replay", s, p, f) << '\n';
      return 0;
    }

    if (*trn) {
      RunConfig cfg = trn_c.load();
      pick(trn_task_o, trn_task, cfg.task);
      fs::path data_dir = cfg.data_dir;
      pick(trn_data_o, fs::path(trn_data), data_dir);
      if (trn_action_o->count()) cfg.action = policy::action_type_from_string(trn_action);
      if (trn_obs_o->count()) cfg.obs.mode = policy::obs_mode_from_string(trn_obs);
      pick(trn_proprio_o, trn_proprio, cfg.obs.include_proprioception);
      if (trn_reg_o->count()) cfg.policy.regressor = policy::regressor_from_string(trn_regressor);
      pick(trn_k_o, trn_k, cfg.policy.knn_k);
      pick(trn_hist_o, trn_hist, cfg.policy.obs_history);
      pick(trn_pred_o, trn_pred, cfg.policy.pred_horizon);
      pick(trn_exec_o, trn_exec, cfg.policy.exec_horizon);
      pick(trn_iw_o, trn_iw, cfg.policy.image_weight);
      pick(trn_ww_o, trn_ww, cfg.policy.wrench_weight);
      cfg.validate();
      if (cfg.task.empty()) throw ArgumentError("train: --task is required");
      require_dir(data_dir, "data directory");
      auto demos = ablation::load_replay_demos(data_dir, cfg.task);
      if (trn_max > 0 && static_cast<int>(demos.size()) > trn_max) demos.resize(static_cast<size_t>(trn_max));
      if (demos.empty()) throw ContractViolation("train: no replay demos of " + cfg.task + " in " + data_dir.string());
      const auto set = policy::build_training_set(demos, cfg.obs, cfg.policy, cfg.action);
      for (const auto& w : set.warnings) log("warning: " + w);
      const auto pol = policy::train(set, cfg.policy);
      if (fs::path(trn_out).has_parent_path()) fs::create_directories(fs::path(trn_out).parent_path());
      pol.save(trn_out);
      out << trn_out << ": " << demos.size() << " demos, " << set.size() << " windows\n";
      return 0;
    }

    if (*evl) {
      RunConfig cfg = evl_c.load();
      pick(evl_task_o, evl_task, cfg.task);
      pick(evl_jobs_o, evl_jobs, cfg.jobs);
      if (evl_seeds_o->count()) cfg.seeds = config::parse_seeds(evl_seeds);
      if (cfg.task.empty()) throw ArgumentError("eval: --task is required");
      sim::TaskSpec task = sim::resolve_task(cfg.task);
      apply_params(task, evl_params);
      const auto pol = policy::Policy::load(evl_model);
      const auto results = ablation::evaluate(pol, task, cfg.seeds, cfg.jobs);
      int s = 0, p = 0, f = 0;
      std::ostringstream table;
      table << "seed,outcome,max_chunk_age\n";
      for (size_t i = 0; i < results.size(); ++i) {
        table << cfg.seeds[i] << ',' << sim::to_string(results[i].outcome) << ',' << results[i].max_chunk_age << '\n';
        (results[i].outcome == sim::Outcome::Success ? s : results[i].outcome == sim::Outcome::Partial ? p : f)++;
      }
      if (!evl_out.empty()) {
        std::ofstream o(evl_out, std::ios::binary);
        if (!o) throw ContractViolation("cannot write " + evl_out);
        o << table.str();
      }
      out << outcome_line(task.name, s, p, f) << '\n';
      return 0;
    }

    if (*abl) {
      auto spec = ablation::load_spec(abl_spec);
      if (abl_seed_o->count()) spec.demo_seed = abl_seed;
      if (!spec.dataset.empty()) require_dir(spec.dataset, "dataset directory");
      const auto report = ablation::run_ablation(spec, abl_jobs, log);
      ablation::write_report(report, abl_out);
      out << ablation::summary_text(report);
      return 0;
    }

    if (*srv) {
      bridge::ServerOptions o;
      o.address = srv_address;
      o.port = srv_port;
      o.data_dir = srv_data_o->count() ? fs::path(srv_data) : default_data_dir();
      if (!srv_ui.empty()) o.ui_dir = srv_ui;
      o.lockstep = srv_lockstep;
      o.log = log;
      bridge::Server server(o);
      out << "listening on " << srv_address << ':' << server.port() << std::endl;
      server.run();
      return 0;
    }

    if (*val) {
      int bad = 0, checked = 0;
      for (const auto& p : val_paths) {
        std::vector<fs::path> files = fs::is_directory(p) ? data::list_demos(p) : std::vector<fs::path>{p};
        for (const auto& f : files) {
          ++checked;
          std::vector<std::string> problems;
          try {
            problems = data::validate(data::load(f));
          } catch (const std::exception& e) {
            problems.push_back(e.what());
          }
          if (problems.empty()) {
            out << f.string() << ": ok\n";
            continue;
          }
          ++bad;
          for (const auto& v : problems) out << f.string() << ": " << v << '\n';
        }
      }
      out << checked - bad << " of " << checked << " valid\n";
      return bad ? 1 : 0;
    }

    if (*rpt) {
      auto read = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw ContractViolation("cannot read " + p.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
      };
      const fs::path in(rpt_in);
      require_path(in / "cells.csv", "cells table");
      const std::string comparisons = fs::exists(in / "comparisons.csv") ? read(in / "comparisons.csv") : "";
      const auto report = ablation::parse_report(read(in / "cells.csv"), comparisons);
      const fs::path dir = rpt_out.empty() ? in : fs::path(rpt_out);
      fs::create_directories(dir);
      std::ofstream(dir / "summary.txt", std::ios::binary) << ablation::summary_text(report);
      std::ofstream(dir / "report.svg", std::ios::binary) << ablation::bar_chart_svg(report);
      out << ablation::summary_text(report);
      return 0;
    }
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dexforge::cli
