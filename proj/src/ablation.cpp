#include "dexforge/ablation.hpp"

#include "dexforge/kernels.hpp"
#include "dexforge/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dexforge::ablation {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  bool contiguous = !seeds.empty();
  for (size_t i = 1; i < seeds.size(); ++i) contiguous = contiguous && seeds[i] == seeds[i - 1] + 1;
  if (contiguous && seeds.size() > 1) return std::to_string(seeds.front()) + ".." + std::to_string(seeds.back());
  std::string out;
  for (size_t i = 0; i < seeds.size(); ++i) out += (i ? ";" : "") + std::to_string(seeds[i]);
  return out;
}

std::vector<std::uint64_t> default_seeds() {
  std::vector<std::uint64_t> s(30);
  for (int i = 0; i < 30; ++i) s[i] = static_cast<std::uint64_t>(i);
  return s;
}

}  // namespace

void ExperimentSpec::validate() const {
  if (task.empty()) throw ContractViolation("experiment: task is required");
  if (demos < 1) throw ContractViolation("experiment: demos must be positive");
  if (seeds.empty()) throw ContractViolation("experiment: no evaluation seeds");
  if (actions.empty() || observations.empty() || proprioception.empty() || variants.empty())
    throw ContractViolation("experiment: every factor needs at least one level");
  for (const auto& v : variants)
    if (v != "in" && v != "ood") throw ContractViolation("experiment: unknown variant '" + v + "'");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("experiment: alpha must lie in (0, 1)");
  policy.validate();
}

ExperimentSpec parse_spec(const std::string& text, const std::filesystem::path& base_dir) {
  const auto kv = config::KeyValues::parse(text);
  kv.reject_unknown({"name", "task", "dataset", "demos", "demo_seed", "seeds", "actions", "observations",
                     "proprioception", "variants", "regressor", "knn_k", "obs_history", "pred_horizon",
                     "exec_horizon", "image_weight", "wrench_weight", "ridge", "alpha"});
  ExperimentSpec s;
  s.name = kv.get_string("name", s.name);
  s.task = kv.get_string("task", "");
  if (const auto d = kv.get("dataset")) {
    s.dataset = *d;
    if (s.dataset.is_relative() && !base_dir.empty()) s.dataset = base_dir / s.dataset;
  }
  s.demos = kv.get_int("demos", s.demos);
  s.demo_seed = kv.get_u64("demo_seed", s.demo_seed);
  s.seeds = kv.has("seeds") ? config::parse_seeds(*kv.get("seeds"), kv.line("seeds")) : default_seeds();

  auto levels = [&](const std::string& key, auto convert, auto& out) {
    if (!kv.has(key)) return;
    out.clear();
    for (const auto& item : kv.get_list(key, {})) {
      try {
        out.push_back(convert(item));
      } catch (const ContractViolation& e) {
        throw config::ConfigError(kv.line(key), e.what());
      }
    }
  };
  levels("actions", policy::action_type_from_string, s.actions);
  levels("observations", policy::obs_mode_from_string, s.observations);
  levels("proprioception", [&](const std::string& v) { return config::to_bool(v, kv.line("proprioception")); },
         s.proprioception);
  levels("variants", [](const std::string& v) { return v; }, s.variants);

  auto& p = s.policy;
  if (const auto r = kv.get("regressor")) p.regressor = policy::regressor_from_string(*r);
  p.knn_k = kv.get_int("knn_k", p.knn_k);
  p.obs_history = kv.get_int("obs_history", p.obs_history);
  p.pred_horizon = kv.get_int("pred_horizon", p.pred_horizon);
  p.exec_horizon = kv.get_int("exec_horizon", p.exec_horizon);
  p.image_weight = kv.get_double("image_weight", p.image_weight);
  p.wrench_weight = kv.get_double("wrench_weight", p.wrench_weight);
  p.ridge = kv.get_double("ridge", p.ridge);
  s.alpha = kv.get_double("alpha", s.alpha);
  s.validate();
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read experiment spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_spec(ss.str(), path.parent_path());
  } catch (const config::ConfigError& e) {
    throw ContractViolation(path.string() + ": " + e.what());
  }
}

std::string Cell::id() const {
  return policy::to_string(action) + "/" + policy::to_string(observation) + "/" +
         (proprioception ? "proprio" : "no-proprio") + "/" + variant;
}

ZTest two_proportion_z(int sa, int na, int sb, int nb) {
  if (na <= 0 || nb <= 0 || sa < 0 || sb < 0 || sa > na || sb > nb)
    throw ContractViolation("two_proportion_z: counts out of range");
  const double pa = static_cast<double>(sa) / na, pb = static_cast<double>(sb) / nb;
  const double pooled = static_cast<double>(sa + sb) / (na + nb);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
  if (se == 0.0) return {0.0, 1.0};
  ZTest t;
  t.z = (pa - pb) / se;
  t.p = std::erfc(std::abs(t.z) / std::sqrt(2.0));
  return t;
}

std::vector<Comparison> compare_cells(const std::vector<Cell>& cells, double alpha) {
  std::vector<Comparison> out;
  for (size_t a = 0; a < cells.size(); ++a)
    for (size_t b = a + 1; b < cells.size(); ++b) {
      const Cell &x = cells[a], &y = cells[b];
      if (x.absent || y.absent || !x.trials() || !y.trials()) continue;
      std::vector<std::string> diff;
      if (x.action != y.action) diff.push_back("action");
      if (x.observation != y.observation) diff.push_back("observation");
      if (x.proprioception != y.proprioception) diff.push_back("proprioception");
      if (x.variant != y.variant) diff.push_back("variant");
      if (diff.size() != 1) continue;
      Comparison c;
      c.a = static_cast<int>(a);
      c.b = static_cast<int>(b);
      c.factor = diff.front();
      c.test = two_proportion_z(x.success, x.trials(), y.success, y.trials());
      c.significant = c.test.p < alpha;
      out.push_back(c);
    }
  return out;
}

std::vector<data::Demonstration> load_replay_demos(const std::filesystem::path& dir, const std::string& task) {
  if (!std::filesystem::is_directory(dir)) throw ContractViolation("dataset directory " + dir.string() + " not found");
  std::vector<data::Demonstration> out;
  for (const auto& path : data::list_demos(dir)) {
    auto demo = data::load(path);
    if (demo.header.task != task || demo.header.stage != data::Stage::Replay || demo.header.source != "replay")
      continue;
    if (demo.header.record_hz != policy::kPolicyHz) demo = data::downsample(demo, policy::kPolicyHz);
    out.push_back(std::move(demo));
  }
  return out;
}

std::vector<data::Demonstration> generate_replay_demos(const sim::TaskSpec& task, int n, std::uint64_t demo_seed,
                                                       int jobs) {
  std::vector<data::Demonstration> out(static_cast<size_t>(std::max(n, 0)));
  kernels::parallel_for(n, jobs, [&](int i) {
    auto r = pipeline::run_pipeline(task, demo_seed + static_cast<std::uint64_t>(i), {}, control::default_gains());
    out[i] = data::downsample(r.replay, policy::kPolicyHz);
  });
  return out;
}

std::vector<policy::RolloutResult> evaluate(const policy::Policy& pol, const sim::TaskSpec& task,
                                            const std::vector<std::uint64_t>& seeds, int jobs) {
  std::vector<policy::RolloutResult> out(seeds.size());
  kernels::parallel_for(static_cast<int>(seeds.size()), jobs,
                        [&](int i) { out[i] = policy::rollout(pol, task, seeds[i]); });
  return out;
}

Report run_ablation(const ExperimentSpec& spec, int jobs, const Progress& progress) {
  spec.validate();
  const sim::TaskSpec base = sim::builtin_task(spec.task);
  auto say = [&](const std::string& line) {
    if (progress) progress(line);
  };

  std::vector<data::Demonstration> demos;
  std::string missing;
  if (!spec.dataset.empty()) {
    try {
      demos = load_replay_demos(spec.dataset, spec.task);
      if (static_cast<int>(demos.size()) > spec.demos) demos.resize(static_cast<size_t>(spec.demos));
      if (demos.empty()) missing = "no replay demos for " + spec.task + " in " + spec.dataset.string();
    } catch (const ContractViolation& e) {
      missing = e.what();
    }
  } else {
    say("generating " + std::to_string(spec.demos) + " replay demos for " + spec.task);
    demos = generate_replay_demos(base, spec.demos, spec.demo_seed, jobs);
  }

  Report report;
  report.name = spec.name;
  report.task = spec.task;
  report.seeds = spec.seeds;
  report.alpha = spec.alpha;

  for (const auto& variant : spec.variants) {
    std::optional<sim::TaskSpec> eval_task;
    std::string variant_missing = missing;
    if (variant == "in") eval_task = base;
    else if (base.ood_variant) eval_task = sim::make_ood(base);
    else if (variant_missing.empty()) variant_missing = "task " + spec.task + " has no OOD variant";

    for (const auto action : spec.actions)
      for (const auto mode : spec.observations)
        for (const bool proprio : spec.proprioception) {
          Cell cell;
          cell.action = action;
          cell.observation = mode;
          cell.proprioception = proprio;
          cell.variant = variant;
          if (!variant_missing.empty()) {
            cell.absent = true;
            cell.absent_reason = variant_missing;
            say(cell.id() + ": absent (" + variant_missing + ")");
            report.cells.push_back(std::move(cell));
            continue;
          }
          policy::ObservationConfig obs;
          obs.mode = mode;
          obs.include_proprioception = proprio;
          const auto set = policy::build_training_set(demos, obs, spec.policy, action);
          if (set.size() == 0) {
            cell.absent = true;
            cell.absent_reason = "no usable training windows";
            report.cells.push_back(std::move(cell));
            continue;
          }
          const auto pol = policy::train(set, spec.policy);
          for (const auto& r : evaluate(pol, *eval_task, spec.seeds, jobs)) {
            cell.outcomes.push_back(r.outcome);
            if (r.outcome == sim::Outcome::Success) ++cell.success;
            else if (r.outcome == sim::Outcome::Partial) ++cell.partial;
            else ++cell.failure;
          }
          say(cell.id() + ": " + std::to_string(cell.success) + "/" + std::to_string(cell.trials()) + " success");
          report.cells.push_back(std::move(cell));
        }
  }
  report.comparisons = compare_cells(report.cells, spec.alpha);
  return report;
}

std::string cells_csv(const Report& r) {
  std::ostringstream out;
  out << "experiment,task,seeds,cell,variant,action,observation,proprioception,success,partial,failure,"
         "success_rate,status\n";
  const std::string seeds = seeds_text(r.seeds);
  for (const auto& c : r.cells) {
    out << r.name << ',' << r.task << ',' << seeds << ',' << c.id() << ',' << c.variant << ','
        << policy::to_string(c.action) << ',' << policy::to_string(c.observation) << ','
        << (c.proprioception ? "on" : "off") << ',' << c.success << ',' << c.partial << ',' << c.failure << ','
        << fmt("%.4f", c.success_rate()) << ',' << (c.absent ? "absent" : "ok") << '\n';
  }
  return out.str();
}

std::string comparisons_csv(const Report& r) {
  std::ostringstream out;
  out << "cell_a,cell_b,factor,success_a,n_a,success_b,n_b,z,p_value,significant\n";
  for (const auto& c : r.comparisons) {
    const Cell &a = r.cells.at(c.a), &b = r.cells.at(c.b);
    out << a.id() << ',' << b.id() << ',' << c.factor << ',' << a.success << ',' << a.trials() << ','
        << b.success << ',' << b.trials() << ',' << fmt("%.4f", c.test.z) << ',' << fmt("%.6g", c.test.p) << ','
        << (c.significant ? "yes" : "no") << '\n';
  }
  return out.str();
}

std::string summary_text(const Report& r) {
  std::ostringstream out;
  out << "experiment " << r.name << " on " << r.task << ", seeds " << seeds_text(r.seeds) << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-58s %7s %7s %7s %6s\n", "cell", "success", "partial", "failure", "rate");
  out << line;
  for (const auto& c : r.cells) {
    if (c.absent) {
      std::snprintf(line, sizeof line, "%-58s absent: %s\n", c.id().c_str(), c.absent_reason.c_str());
    } else {
      std::snprintf(line, sizeof line, "%-58s %7d %7d %7d %5.0f%%\n", c.id().c_str(), c.success, c.partial,
                    c.failure, 100.0 * c.success_rate());
    }
    out << line;
  }
  if (!r.comparisons.empty()) {
    out << "\ntwo-proportion z-tests (alpha " << fmt("%g", r.alpha) << ")\n";
    for (const auto& c : r.comparisons) {
      std::snprintf(line, sizeof line, "  %s vs %s [%s]: z = %.3f, p = %.4g%s\n", r.cells[c.a].id().c_str(),
                    r.cells[c.b].id().c_str(), c.factor.c_str(), c.test.z, c.test.p,
                    c.significant ? " *" : "");
      out << line;
    }
  }
  return out.str();
}

std::string bar_chart_svg(const Report& r) {
  const int bar = 36, gap = 28, left = 60, top = 40, plot_h = 200, label_h = 150;
  const int n = static_cast<int>(r.cells.size());
  const int width = left + n * (bar + gap) + gap + 120;
  const int height = top + plot_h + label_h;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << r.name << ": " << r.task << "</text>\n";
  for (int pct = 0; pct <= 100; pct += 25) {
    const int y = top + plot_h - pct * plot_h / 100;
    out << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + n * (bar + gap) + gap << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << pct << "%</text>\n";
  }
  const char* colours[3] = {"#2e7d32", "#f9a825", "#c62828"};
  for (int i = 0; i < n; ++i) {
    const Cell& c = r.cells[i];
    const int x = left + gap + i * (bar + gap);
    if (c.absent || c.trials() == 0) {
      out << "<text x=\"" << x + bar / 2 << "\" y=\"" << top + plot_h - 6 << "\" text-anchor=\"middle\">n/a</text>\n";
    } else {
      const int counts[3] = {c.success, c.partial, c.failure};
      double y = top + plot_h;
      for (int k = 0; k < 3; ++k) {
        const double h = static_cast<double>(counts[k]) / c.trials() * plot_h;
        if (h <= 0.0) continue;
        y -= h;
        out << "<rect x=\"" << x << "\" y=\"" << fmt("%.2f", y) << "\" width=\"" << bar << "\" height=\""
            << fmt("%.2f", h) << "\" fill=\"" << colours[k] << "\"/>\n";
      }
    }
    out << "<text transform=\"translate(" << x + bar / 2 << "," << top + plot_h + 10
        << ") rotate(60)\">" << c.id() << "</text>\n";
  }
  const char* names[3] = {"success", "partial", "failure"};
  const int lx = left + n * (bar + gap) + gap + 16;
  for (int k = 0; k < 3; ++k) {
    out << "<rect x=\"" << lx << "\" y=\"" << top + k * 18 << "\" width=\"12\" height=\"12\" fill=\"" << colours[k]
        << "\"/>\n";
    out << "<text x=\"" << lx + 18 << "\" y=\"" << top + k * 18 + 10 << "\">" << names[k] << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text, size_t columns, const std::string& what) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != columns)
      throw ContractViolation(what + ": expected " + std::to_string(columns) + " columns in '" + line + "'");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

Report parse_report(const std::string& cells, const std::string& comparisons) {
  Report r;
  std::map<std::string, int> index;
  for (const auto& f : csv_rows(cells, 13, "cells table")) {
    r.name = f[0];
    r.task = f[1];
    if (r.seeds.empty()) r.seeds = config::parse_seeds([&] {
        std::string s = f[2];
        for (auto& ch : s) if (ch == ';') ch = ',';
        return s;
      }());
    Cell c;
    c.variant = f[4];
    c.action = policy::action_type_from_string(f[5]);
    c.observation = policy::obs_mode_from_string(f[6]);
    c.proprioception = config::to_bool(f[7]);
    c.success = static_cast<int>(config::to_int(f[8]));
    c.partial = static_cast<int>(config::to_int(f[9]));
    c.failure = static_cast<int>(config::to_int(f[10]));
    c.absent = f[12] == "absent";
    if (c.absent) c.absent_reason = "absent in source table";
    index[c.id()] = static_cast<int>(r.cells.size());
    r.cells.push_back(std::move(c));
  }
  for (const auto& f : csv_rows(comparisons, 10, "comparisons table")) {
    Comparison c;
    if (!index.count(f[0]) || !index.count(f[1])) throw ContractViolation("comparison names an unknown cell");
    c.a = index[f[0]];
    c.b = index[f[1]];
    c.factor = f[2];
    c.test.z = config::to_double(f[7]);
    c.test.p = config::to_double(f[8]);
    c.significant = f[9] == "yes";
    r.comparisons.push_back(c);
  }
  return r;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ContractViolation("cannot write " + (dir / name).string());
    out << text;
  };
  put("cells.csv", cells_csv(report));
  put("comparisons.csv", comparisons_csv(report));
  put("summary.txt", summary_text(report));
  put("report.svg", bar_chart_svg(report));
}

}  // namespace dexforge::ablation
