#include "oracles.hpp"

#include "dexforge/ablation.hpp"
#include "dexforge/kernels.hpp"
#include "dexforge/raster.hpp"
#include "dexforge/task.hpp"

#include <doctest.h>

#include <atomic>
#include <random>

using namespace dexforge;

namespace {

// Two-sided normal tail by Simpson integration of the density, sharing
// nothing with erfc.
double normal_two_sided_p(double z) {
  z = std::abs(z);
  const int n = 20000;
  const double h = z / n;
  auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); };
  double s = phi(0) + phi(z);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * phi(i * h);
  return 2.0 * (0.5 - s * h / 3.0);
}

ablation::Cell cell(policy::ActionType a, policy::ObsMode o, bool proprio, std::string variant, int success,
                    int n = 30) {
  ablation::Cell c;
  c.action = a;
  c.observation = o;
  c.proprioception = proprio;
  c.variant = std::move(variant);
  c.success = success;
  c.failure = n - success;
  return c;
}

constexpr auto FI = policy::ActionType::ForceInformed;
constexpr auto OP = policy::ActionType::ObservedPosition;
constexpr auto FT = policy::ObsMode::ImageFT;
constexpr auto BIN = policy::ObsMode::ImageBinary;

}  // namespace

TEST_CASE("two proportion z test") {
  // 24/30 vs 3/30: pooled 0.45, se = sqrt(0.45 * 0.55 * 2/30)
  const auto t = ablation::two_proportion_z(24, 30, 3, 30);
  const double se = std::sqrt(0.45 * 0.55 * (2.0 / 30.0));
  CHECK(t.z == doctest::Approx(0.7 / se).epsilon(1e-12));
  CHECK(t.p == doctest::Approx(normal_two_sided_p(t.z)).epsilon(1e-6));
  CHECK(t.p < 0.05);

  const auto close = ablation::two_proportion_z(15, 30, 12, 30);
  CHECK(close.p == doctest::Approx(normal_two_sided_p(close.z)).epsilon(1e-8));
  CHECK(close.p > 0.05);
  CHECK(ablation::two_proportion_z(12, 30, 15, 30).z == doctest::Approx(-close.z));

  // 30/30 vs 0/30, the separation seen on slide-cube
  CHECK(ablation::two_proportion_z(30, 30, 0, 30).z == doctest::Approx(std::sqrt(60.0)));
  const auto same = ablation::two_proportion_z(30, 30, 30, 30);
  CHECK(same.z == 0.0);
  CHECK(same.p == 1.0);
  CHECK_THROWS_AS(ablation::two_proportion_z(31, 30, 0, 30), ContractViolation);
  CHECK_THROWS_AS(ablation::two_proportion_z(0, 0, 0, 30), ContractViolation);
}

TEST_CASE("cells are compared only along single factors") {
  std::vector<ablation::Cell> cells{cell(FI, FT, false, "in", 28), cell(OP, FT, false, "in", 1),
                                    cell(FI, BIN, false, "in", 20), cell(OP, BIN, true, "in", 0),
                                    cell(FI, FT, false, "ood", 25)};
  auto absent = cell(FI, FT, true, "in", 0, 0);
  absent.absent = true;
  cells.push_back(absent);
  const auto cmp = ablation::compare_cells(cells, 0.05);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& c : cmp) pairs.emplace_back(c.a, c.b);
  CHECK(pairs == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {0, 4}});
  CHECK(cmp[0].factor == "action");
  CHECK(cmp[0].significant);
  CHECK(cmp[1].factor == "observation");
  CHECK(cmp[2].factor == "variant");
  CHECK_FALSE(cmp[2].significant);
}

TEST_CASE("experiment specs") {
  const auto spec = ablation::load_spec(std::filesystem::path(DEXFORGE_SOURCE_DIR) / "experiments/slide.spec");
  CHECK(spec.name == "slide-ablation");
  CHECK(spec.task == "slide-cube");
  CHECK(spec.seeds.size() == 30);
  CHECK(spec.actions.size() == 2);
  CHECK(spec.observations.size() == 3);
  CHECK(spec.proprioception == std::vector<bool>{false, true});
  CHECK(spec.variants == std::vector<std::string>{"in", "ood"});
  CHECK(spec.policy.knn_k == 1);

  const auto rel = ablation::parse_spec("task = press-hold\ndataset = demos\n", "/data");
  CHECK(rel.dataset == "/data/demos");
  CHECK(rel.seeds.size() == 30);
  CHECK_THROWS_AS(ablation::parse_spec("task = press-hold\nvariants = in, sideways\n"), ContractViolation);
  CHECK_THROWS_AS(ablation::parse_spec("demos = 3\n"), ContractViolation);
  CHECK_THROWS_AS(ablation::parse_spec("task = x\nobservations = depth\n"), config::ConfigError);
  CHECK_THROWS_AS(ablation::parse_spec("task = x\nlearning_rate = 3\n"), config::ConfigError);
}

TEST_CASE("report tables round trip") {
  ablation::Report r;
  r.name = "x";
  r.task = "slide-cube";
  r.seeds = {0, 1, 2, 5};
  r.cells = {cell(FI, FT, false, "in", 3, 4), cell(OP, FT, false, "in", 0, 4)};
  r.cells[1].partial = 1;
  r.cells[1].failure = 3;
  r.comparisons = ablation::compare_cells(r.cells, 0.05);
  const auto back = ablation::parse_report(ablation::cells_csv(r), ablation::comparisons_csv(r));
  REQUIRE(back.cells.size() == 2);
  CHECK(back.cells[1].partial == 1);
  CHECK(back.seeds == r.seeds);
  CHECK(ablation::cells_csv(back) == ablation::cells_csv(r));
  CHECK(ablation::comparisons_csv(back) == ablation::comparisons_csv(r));
  CHECK(ablation::summary_text(back) == ablation::summary_text(r));
  CHECK(ablation::bar_chart_svg(r).rfind("<svg", 0) == 0);
}

TEST_CASE("small ablation runs are deterministic and mark missing data") {
  ablation::ExperimentSpec spec;
  spec.name = "tiny";
  spec.task = "flip-box";
  spec.demos = 3;
  spec.seeds = {0, 1, 2};
  spec.observations = {policy::ObsMode::ImageFT, policy::ObsMode::ImageOnly};
  spec.variants = {"in", "ood"};
  const auto a = ablation::run_ablation(spec);
  const auto b = ablation::run_ablation(spec, 1);
  CHECK(a.cells.size() == 8);
  CHECK(ablation::cells_csv(a) == ablation::cells_csv(b));
  CHECK(ablation::comparisons_csv(a) == ablation::comparisons_csv(b));
  for (const auto& c : a.cells) CHECK(c.trials() == 3);

  spec.task = "pinch-lift";  // no OOD variant
  spec.variants = {"ood"};
  spec.observations = {policy::ObsMode::ImageFT};
  const auto none = ablation::run_ablation(spec);
  for (const auto& c : none.cells) {
    CHECK(c.absent);
    CHECK(c.absent_reason == "task pinch-lift has no OOD variant");
  }
  spec.task = "press-hold";
  spec.variants = {"in"};
  spec.dataset = oracle::temp_dir("empty-dataset");
  const auto empty = ablation::run_ablation(spec);
  for (const auto& c : empty.cells) CHECK(c.absent);
  CHECK(empty.comparisons.empty());
  std::filesystem::remove_all(spec.dataset);
}

TEST_CASE("parallel kernels match their serial references") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rows : {1, 7, 1000}) {
    MatX m(rows, 37);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    VecX q(37);
    for (auto& x : q) x = u(rng);
    const auto serial = kernels::squared_distances(m, q);
    CHECK(serial == kernels::squared_distances_parallel(m, q));
    double naive = 0.0;
    for (int j = 0; j < 37; ++j) naive += (m(rows - 1, j) - q[j]) * (m(rows - 1, j) - q[j]);
    CHECK(serial.back() == doctest::Approx(naive).epsilon(1e-14));
  }
  const auto scene = sim::reset_task(sim::builtin_task("flip-box"), 3);
  const auto a = sim::render_raster(scene, 64, 64);
  const auto b = sim::render_raster_parallel(scene, scene.camera, 64, 64);
  CHECK(a.pixels == b.pixels);

  std::vector<int> slots(100, -1);
  std::atomic<int> calls{0};
  kernels::parallel_for(100, 4, [&](int i) {
    slots[static_cast<size_t>(i)] = i * i;
    ++calls;
  });
  CHECK(calls == 100);
  for (int i = 0; i < 100; ++i) CHECK(slots[static_cast<size_t>(i)] == i * i);
  kernels::parallel_for(0, 2, [&](int) { FAIL("no work expected"); });
}

TEST_CASE("evaluation is independent of the worker count") {
  const auto task = sim::builtin_task("slide-cube");
  const auto demos = ablation::generate_replay_demos(task, 3, 1000, 2);
  CHECK(demos.size() == 3);
  const auto serial = ablation::generate_replay_demos(task, 3, 1000, 1);
  for (size_t i = 0; i < 3; ++i) CHECK(data::identical(demos[i], serial[i]));
  const policy::PolicyConfig pc;
  const auto p = policy::train(policy::build_training_set(demos, {}, pc, policy::ActionType::ForceInformed), pc);
  const auto r1 = ablation::evaluate(p, task, {0, 1, 2, 3}, 1);
  const auto r4 = ablation::evaluate(p, task, {0, 1, 2, 3}, 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(r1[i].outcome == r4[i].outcome);
    CHECK(data::identical(r1[i].observations, r4[i].observations));
  }
}
