#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "mecsim/harness.hpp"

using namespace mecsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mecsim_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.users_M = 12;
  c.params.frames_J = 2;
  c.params.slots_T = 3;
  return c;
}

}  // namespace

TEST_CASE("empty config gives the defaults") {
  const auto c = config_from_json(json::object());
  const ScenarioConfig d;
  CHECK(c.users_M == d.users_M);
  CHECK(c.params.bandwidth_W == d.params.bandwidth_W);
  CHECK(c.params.num_programs_N == 4);
  CHECK(c.pricing == PricingScheme::CPTO);
  CHECK(c.caching == CachingStrategy::POSC);
  CHECK(c.sizes() == std::vector<double>(4, 50.0));
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("config parsing") {
  const auto c = config_from_json(json::parse(R"({
    "schema_version": 1, "scenario": "x", "seed": 9, "users_M": 7, "programs_N": 3,
    "bandwidth_mhz": 4, "edge_freq_mhz": 250, "data_size_kb": [100, 300], "tx_power_mw": [50, 60],
    "program_size": [10, 20, 30], "pricing": "scao", "offloading": "ro", "caching": "stsc",
    "information": "complete", "workload": {"zipf_s": 1.1, "drift_step": 2},
    "gndrl": {"episodes": 40, "hidden": [8, 8], "penalty_rho_c": 0.5}
  })"));
  CHECK(c.scenario == "x");
  CHECK(c.seed == 9);
  CHECK(c.users_M == 7);
  CHECK(c.params.bandwidth_W == 4e6);
  CHECK(c.params.edge_freq_F == 250e6);
  CHECK(c.population.d_min == 100.0 * 8 * 1024);
  CHECK(c.population.d_max == 300.0 * 8 * 1024);
  CHECK(c.population.p_min == Catch::Approx(0.05));
  CHECK(c.sizes() == std::vector<double>{10, 20, 30});
  CHECK(c.pricing == PricingScheme::SCAO);
  CHECK(c.offloading == OffloadModel::RO);
  CHECK(c.caching == CachingStrategy::STSC);
  CHECK(c.complete_information);
  CHECK(c.workload.zipf_s == 1.1);
  CHECK(c.workload.drift_step == 2);
  CHECK(c.gndrl.episodes == 40);
  CHECK(c.gndrl.hidden == std::vector<std::size_t>{8, 8});
  CHECK(c.penalty_rho_c == 0.5);

  CHECK(config_from_json(json::parse(R"({"programs_N": 3, "program_size": 20})")).sizes() ==
        std::vector<double>(3, 20.0));
}

TEST_CASE("config errors") {
  auto rejects = [](const char* text) {
    CHECK_THROWS_AS(validate(config_from_json(json::parse(text))), ConfigError);
  };
  rejects(R"({"bogus": 1})");
  rejects(R"({"workload": {"bogus": 1}})");
  rejects(R"({"gndrl": {"bogus": 1}})");
  rejects(R"({"schema_version": 2})");
  rejects(R"({"pricing": "cheap"})");
  rejects(R"({"users_M": -3})");
  rejects(R"({"users_M": "many"})");
  rejects(R"({"distance_m": [5, 1]})");
  rejects(R"({"programs_N": 3, "program_size": [1, 2]})");
  rejects(R"({"gndrl": {"gamma": 1.5}})");
  rejects(R"({"workload": {"source": "trace"}})");
  rejects(R"([1, 2])");
}

TEST_CASE("overrides") {
  json doc = json::parse(R"({"users_M": 5})");
  apply_override(doc, "users_M=9");
  apply_override(doc, "pricing=lp");
  apply_override(doc, "gndrl.episodes=12");
  apply_override(doc, "workload.drift_step=1");
  const auto c = config_from_json(doc);
  CHECK(c.users_M == 9);
  CHECK(c.pricing == PricingScheme::LP);
  CHECK(c.gndrl.episodes == 12);
  CHECK(c.workload.drift_step == 1);
  CHECK_THROWS_AS(apply_override(doc, "no-equals-sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "=3"), ConfigError);
}

TEST_CASE("scenario shape") {
  const auto c = small_config();
  const auto r = run_scenario(c);
  REQUIRE(r.rows.size() == 6);
  CHECK(r.caching_plan.size() == 2);
  CHECK(r.frame_utilities.size() == 2);
  CHECK(r.rows.front().frame == 1);
  CHECK(r.rows.front().slot == 1);
  CHECK(r.rows.back().frame == 2);
  CHECK(r.rows.back().slot == 3);
  double paid = 0;
  for (const auto& row : r.rows) {
    paid += row.bs_payment;
    CHECK(row.offloader_count <= c.users_M);
    CHECK(row.wall_clock_pricing == 0.0);
  }
  CHECK(r.summary.total_payments == Catch::Approx(paid).epsilon(1e-12));
  CHECK(r.summary.total_profit == r.frame_utilities[0] + r.frame_utilities[1]);
  CHECK(r.summary.user_slots == 6 * c.users_M);
}

TEST_CASE("local computing pays nothing") {
  auto c = small_config();
  c.offloading = OffloadModel::LC;
  for (const auto& row : run_scenario(c).rows) {
    CHECK(row.bs_payment == 0.0);
    CHECK(row.offloader_count == 0);
  }
}

TEST_CASE("equal seeds give byte-identical files") {
  for (auto caching : {CachingStrategy::POSC, CachingStrategy::GNDRL}) {
    auto c = small_config();
    c.caching = caching;
    c.gndrl.episodes = 20;
    for (auto fmt : {OutputFormat::CSV, OutputFormat::JSON}) {
      const auto a = scratch("det_a"), b = scratch("det_b");
      write_scenario_outputs(a, c, run_scenario(c), fmt);
      write_scenario_outputs(b, c, run_scenario(c), fmt);
      for (const auto& entry : fs::directory_iterator(a)) {
        const auto other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path()) == slurp(other));
      }
    }
  }
  auto c = small_config();
  const auto base = run_scenario(c);
  c.seed = 2;
  CHECK(run_scenario(c).summary.total_profit != base.summary.total_profit);
}

TEST_CASE("threshold pricing out-earns the smoothed pricer in the emitted summary") {
  auto c = small_config();
  c.users_M = 30;
  const auto dir = scratch("pricers");
  const auto cp = run_scenario(c);
  c.pricing = PricingScheme::SCAO;
  const auto sc = run_scenario(c);
  CHECK(cp.summary.total_profit >= sc.summary.total_profit);

  Table t;
  t.columns = summary_columns();
  t.rows.push_back(summary_values(c, sc));
  t.write_file(dir / "s.json", OutputFormat::JSON);
  const auto doc = json::parse(slurp(dir / "s.json"));
  CHECK(doc.at(0).at("total_profit").get<double>() == sc.summary.total_profit);
  CHECK(doc.at(0).at("pricing") == "scao");
}

TEST_CASE("single-value sweep reproduces the scenario") {
  const auto c = small_config();
  const auto pts = sweep(c, SweepAxis::M, {"12"}, 1);
  REQUIRE(pts.size() == 1);
  const auto direct = run_scenario(c);
  std::ostringstream a, b;
  metrics_table(pts[0].result.rows).write(a, OutputFormat::CSV);
  metrics_table(direct.rows).write(b, OutputFormat::CSV);
  CHECK(a.str() == b.str());

  CHECK_THROWS_AS(sweep(c, SweepAxis::M, {}, 1), ConfigError);
  CHECK_THROWS_AS(parse_axis("speed"), ConfigError);
  CHECK_THROWS_AS(sweep(c, SweepAxis::F, {"fast"}, 1), ConfigError);
}

TEST_CASE("parallel sweep matches serial sweep") {
  const auto c = small_config();
  const std::vector<std::string> values{"cpto", "lp", "scao"};
  const auto serial = sweep(c, SweepAxis::Pricer, values, 1);
  const auto parallel = sweep(c, SweepAxis::Pricer, values, 3);
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(serial[i].value == parallel[i].value);
    CHECK(serial[i].result.summary.total_profit == parallel[i].result.summary.total_profit);
  }
}

TEST_CASE("capacity sweep saturates once every program fits") {
  const auto pts = sweep(ScenarioConfig{}, SweepAxis::Z, {"50", "100", "150", "200", "250"}, 1);
  for (std::size_t i = 1; i < pts.size(); ++i)
    CHECK(pts[i].result.summary.total_profit >= pts[i - 1].result.summary.total_profit);
  CHECK(std::abs(pts[4].result.summary.total_profit - pts[3].result.summary.total_profit) <=
        1e-9 * std::abs(pts[3].result.summary.total_profit));
}

TEST_CASE("faster edge servers never raise the mean user cost") {
  auto c = small_config();
  c.users_M = 30;
  const auto pts = sweep(c, SweepAxis::F, {"100", "200", "400", "800", "1600"}, 1);
  for (std::size_t i = 1; i < pts.size(); ++i)
    CHECK(pts[i].result.summary.mean_user_cost <= pts[i - 1].result.summary.mean_user_cost);
}

TEST_CASE("sweep files carry the axis") {
  const auto c = small_config();
  const auto dir = scratch("sweepfiles");
  const auto pts = sweep(c, SweepAxis::Z, {"0", "100"}, 1);
  write_sweep_outputs(dir, c, SweepAxis::Z, pts, OutputFormat::CSV);
  const auto text = slurp(dir / "sweep_summary.csv");
  CHECK(text.rfind("axis,value,scenario,", 0) == 0);
  CHECK(text.find("\nZ,0,") != std::string::npos);
  CHECK(text.find("\nZ,100,") != std::string::npos);
  const auto metrics = slurp(dir / "sweep_metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 2 * 6);
}

TEST_CASE("learned caching reports its training") {
  auto c = small_config();
  c.caching = CachingStrategy::GNDRL;
  c.gndrl.episodes = 25;
  const auto r = run_scenario(c);
  CHECK(r.learning_curve.size() == 25);
  REQUIRE(r.agent.has_value());
  for (const auto& plan : r.caching_plan) CHECK(plan.feasible(c.params.cache_capacity_Z));
  const auto dir = scratch("learned");
  write_scenario_outputs(dir, c, r, OutputFormat::CSV);
  CHECK(fs::exists(dir / "learning_curve.csv"));
  CHECK(fs::exists(dir / "caching.csv"));
}

TEST_CASE("trace workloads") {
  const auto dir = scratch("trace");
  {
    std::ofstream out(dir / "t.csv");
    out << "timestamp_us,job_id,task_id,cpu,param\n";
    // Two frames of 120 s in 60 s slots; job 7 is busiest, job 9 never shows.
    for (int i = 0; i < 12; ++i) out << i * 20'000'000 << ",7," << i << ",1e9,4e6\n";
    for (int i = 0; i < 5; ++i) out << i * 45'000'000 << ",8," << 100 + i << ",,\n";
    out << "oops\n";
  }
  auto c = small_config();
  c.params.num_programs_N = 2;
  c.workload.from_trace = true;
  c.workload.path = (dir / "t.csv").string();
  c.workload.frame_len_s = 120;
  c.workload.slot_len_s = 60;
  c.params.slots_T = 2;
  const auto frames = build_workload(c);
  REQUIRE(frames.size() == 2);
  std::size_t users = 0;
  for (const auto& fw : frames) {
    REQUIRE(fw.slots() == 2);
    for (std::size_t t = 0; t < 2; ++t) users += fw.slot_users[t].size();
  }
  CHECK(users == 12 + 5);
  CHECK(frames[0].slot_tasks[0][0].cycles_r == 1e9);
  const auto r = run_scenario(c);
  CHECK(r.rows.size() == 4);

  c.workload.path = (dir / "missing.csv").string();
  CHECK_THROWS(build_workload(c));
}
