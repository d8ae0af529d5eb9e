#pragma once

// Ablation harness: trains and evaluates every (action x observation x
// proprioception x variant) cell on a shared seed list and compares cells
// with two-proportion z-tests.

#include "dexforge/config.hpp"
#include "dexforge/policy.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dexforge::ablation {

struct ExperimentSpec {
  std::string name{"experiment"};
  std::string task;
  /// Directory of replay demos; empty generates them with the scripted pipeline.
  std::filesystem::path dataset;
  int demos{25};
  std::uint64_t demo_seed{1000};
  std::vector<std::uint64_t> seeds;
  std::vector<policy::ActionType> actions{policy::ActionType::ForceInformed, policy::ActionType::ObservedPosition};
  std::vector<policy::ObsMode> observations{policy::ObsMode::ImageFT};
  std::vector<bool> proprioception{false};
  /// "in" and/or "ood".
  std::vector<std::string> variants{"in"};
  policy::PolicyConfig policy;
  double alpha{0.05};

  void validate() const;
};

/// Reads a spec; relative dataset paths resolve against `base_dir`.
ExperimentSpec parse_spec(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentSpec load_spec(const std::filesystem::path& path);

struct Cell {
  policy::ActionType action{policy::ActionType::ForceInformed};
  policy::ObsMode observation{policy::ObsMode::ImageFT};
  bool proprioception{false};
  std::string variant{"in"};
  bool absent{false};
  std::string absent_reason;
  int success{0};
  int partial{0};
  int failure{0};
  /// Outcome per evaluation seed, in seed order.
  std::vector<sim::Outcome> outcomes;

  std::string id() const;
  int trials() const { return success + partial + failure; }
  double success_rate() const { return trials() ? static_cast<double>(success) / trials() : 0.0; }
};

struct ZTest {
  double z{0.0};
  double p{1.0};
};

/// Pooled two-proportion z-test on success counts, two-sided.
ZTest two_proportion_z(int successes_a, int n_a, int successes_b, int n_b);

struct Comparison {
  int a{0};
  int b{0};
  /// The single factor in which the two cells differ.
  std::string factor;
  ZTest test;
  bool significant{false};
};

struct Report {
  std::string name;
  std::string task;
  std::vector<std::uint64_t> seeds;
  double alpha{0.05};
  std::vector<Cell> cells;
  std::vector<Comparison> comparisons;
};

/// Every pair of present cells differing in exactly one factor.
std::vector<Comparison> compare_cells(const std::vector<Cell>& cells, double alpha);

/// Replay demos of `task` stored under `dir`, downsampled to the policy rate.
std::vector<data::Demonstration> load_replay_demos(const std::filesystem::path& dir, const std::string& task);

/// Scripted pipeline replays for seeds demo_seed .. demo_seed+n-1 at the policy rate.
std::vector<data::Demonstration> generate_replay_demos(const sim::TaskSpec& task, int n, std::uint64_t demo_seed,
                                                       int jobs);

/// Outcome of rolling out `policy` on each seed, reduced in seed order.
std::vector<policy::RolloutResult> evaluate(const policy::Policy& policy, const sim::TaskSpec& task,
                                            const std::vector<std::uint64_t>& seeds, int jobs);

using Progress = std::function<void(const std::string& line)>;

Report run_ablation(const ExperimentSpec& spec, int jobs = 0, const Progress& progress = {});

std::string cells_csv(const Report& report);
std::string comparisons_csv(const Report& report);
std::string summary_text(const Report& report);
/// Stacked success/partial/failure bars, one per cell.
std::string bar_chart_svg(const Report& report);

/// Cells and comparisons read back from the two CSV tables.
Report parse_report(const std::string& cells, const std::string& comparisons);

/// Writes cells.csv, comparisons.csv, summary.txt and report.svg into `dir`.
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace dexforge::ablation
