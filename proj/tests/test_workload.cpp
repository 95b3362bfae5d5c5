#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>

#include "mecsim/workload.hpp"

using namespace mecsim;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("popularity from the two previous frames") {
  const std::vector<double> a{2, 0}, b{0, 2};
  const auto y = estimate_popularity(a, b);
  CHECK(y.probs == std::vector<double>{0.5, 0.5});

  const std::vector<double> z{0, 0, 0, 0};
  const auto u = estimate_popularity(z, z);
  for (double v : u.probs) CHECK(v == 0.25);

  const std::vector<double> only{7, 0, 0}, none{3, 0, 0};
  CHECK(estimate_popularity(only, none).probs == std::vector<double>{1, 0, 0});

  const std::vector<double> neg{-1, 2};
  CHECK_THROWS_AS(estimate_popularity(neg, b), std::invalid_argument);

  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> p1(6), p2(6);
    for (auto& v : p1) v = static_cast<double>(rng.below(50));
    for (auto& v : p2) v = static_cast<double>(rng.below(3));
    const auto e = estimate_popularity(p1, p2);
    double s = 0;
    for (double v : e.probs) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK_THAT(s, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("true popularity of one frame") {
  const std::vector<double> c{3, 1};
  CHECK(true_popularity(c).probs == std::vector<double>{0.75, 0.25});
  const std::vector<double> one{0, 5, 0};
  CHECK(true_popularity(one).probs == std::vector<double>{0, 1, 0});
  const std::vector<double> empty{0, 0};
  CHECK(true_popularity(empty).probs == std::vector<double>{0.5, 0.5});
}

TEST_CASE("first two frames use the uniform prior") {
  SynthSpec s;
  s.num_programs = 3;
  s.drift = DriftSchedule::identity(3);
  s.frames = 4;
  s.slots = 2;
  s.users_per_slot = 10;
  s.seed = 3;
  const auto frames = synth_workload(s);
  const auto est = estimated_popularity(frames, 3);
  REQUIRE(est.size() == 4);
  CHECK(est[0].probs == PopularityVector::uniform(3).probs);
  CHECK(est[1].probs == PopularityVector::uniform(3).probs);
  CHECK(est[3].probs == estimate_popularity(frames[2].request_counts, frames[1].request_counts).probs);
}

TEST_CASE("trace parsing") {
  std::istringstream in(
      "timestamp,job_id,task_id,cpu,param_size\n"
      "# comment\n"
      "0,7,1,1e9,8e5\n"
      "\n"
      "10,7,2,,\n"
      "20,8,1,abc,1\n"
      "30,8\n"
      "-5,8,1,1,1\n"
      "40,9,3,0,1\n"
      "50,9,4,2e9,\n");
  const auto tp = parse_trace(in);
  REQUIRE(tp.records.size() == 3);
  CHECK(tp.lines == 7);
  CHECK(tp.diagnostics.size() == 4);
  CHECK(tp.records[0].cpu_cycles == 1e9);
  CHECK(tp.records[0].param_size_bits == 8e5);
  CHECK_FALSE(tp.records[1].cpu_cycles.has_value());
  CHECK_FALSE(tp.records[1].param_size_bits.has_value());
  CHECK(tp.records[2].cpu_cycles == 2e9);
  CHECK(tp.diagnostics[0].rfind("line 6:", 0) == 0);

  std::istringstream headless("5,1,1,1e9,1e6\n");
  CHECK(parse_trace(headless).records.size() == 1);
}

TEST_CASE("program selection ranks jobs by request count") {
  std::vector<TraceRecord> recs;
  auto add = [&](std::int64_t job, int n) {
    for (int i = 0; i < n; ++i) recs.push_back({i, job, i, std::nullopt, std::nullopt});
  };
  add(5, 3);
  add(2, 10);
  add(9, 3);
  add(4, 1);
  const auto f = select_programs(recs, 3);
  CHECK(f.program_of(2) == 0);
  CHECK(f.program_of(5) == 1);
  CHECK(f.program_of(9) == 2);
  CHECK_FALSE(f.program_of(4).has_value());

  const auto g = select_programs(recs, 5, 2, 5);
  CHECK(g.size() == 2);
  CHECK_FALSE(g.program_of(2).has_value());
}

namespace {

ProgramFilter filter_of(std::initializer_list<std::int64_t> jobs) {
  ProgramFilter f;
  int i = 0;
  for (auto j : jobs) f.job_to_program[j] = i++;
  return f;
}

}  // namespace

TEST_CASE("trace binning boundaries") {
  IngestOptions opt;
  opt.frame_len_s = 360;
  opt.slot_len_s = 60;
  const auto f = filter_of({1});
  const PopulationRanges ranges;

  std::vector<TraceRecord> at_zero{{0, 1, 0, std::nullopt, std::nullopt}};
  auto r = ingest_trace(at_zero, f, ranges, opt);
  REQUIRE(r.frames.size() == 1);
  CHECK(r.frames[0].slot_tasks[0].size() == 1);

  std::vector<TraceRecord> edge{{0, 1, 0, std::nullopt, std::nullopt}, {360'000'000, 1, 1, std::nullopt, std::nullopt}};
  r = ingest_trace(edge, f, ranges, opt);
  REQUIRE(r.frames.size() == 2);
  CHECK(r.frames[1].slot_tasks[0].size() == 1);
  CHECK(r.frames[0].slot_tasks[0].size() == 1);

  std::vector<TraceRecord> dropped_only{{0, 2, 0, std::nullopt, std::nullopt}};
  CHECK_THROWS_AS(ingest_trace(dropped_only, f, ranges, opt), std::runtime_error);

  opt.slot_len_s = 70;
  CHECK_THROWS_AS(ingest_trace(at_zero, f, ranges, opt), std::invalid_argument);
}

TEST_CASE("trace fields override the samplers") {
  IngestOptions opt;
  const PopulationRanges ranges;
  std::vector<TraceRecord> recs{{5, 1, 0, 4e9, 2e6}, {6, 1, 1, std::nullopt, 3e6}};
  const auto r = ingest_trace(recs, filter_of({1}), ranges, opt);
  const auto& tasks = r.frames[0].slot_tasks[0];
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].data_size_d == 2e6);
  CHECK_THAT(tasks[0].cycles_r, WithinRel(4e9, 1e-12));
  CHECK(tasks[1].data_size_d == 3e6);
  CHECK(tasks[1].intensity_beta >= ranges.beta_min);
  CHECK(tasks[1].intensity_beta <= ranges.beta_max);
}

TEST_CASE("ingested counts match an independent recount") {
  // 600 records over three jobs plus one unlisted job, shuffled in time.
  Rng rng(44);
  std::vector<TraceRecord> recs;
  for (int i = 0; i < 600; ++i) {
    const std::int64_t ts = static_cast<std::int64_t>(rng.below(3 * 360)) * 1'000'000 + static_cast<std::int64_t>(rng.below(1'000'000));
    const std::int64_t job = static_cast<std::int64_t>(rng.below(4)) * 11;
    recs.push_back({ts, job, i, std::nullopt, std::nullopt});
  }
  const auto f = filter_of({0, 11, 22});
  IngestOptions opt;
  opt.seed = 9;
  const auto r = ingest_trace(recs, f, PopulationRanges{}, opt);

  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, int> oracle;
  std::size_t kept = 0;
  for (const auto& x : recs) {
    if (x.job_id == 33) continue;
    ++oracle[{x.timestamp_us / 360'000'000, (x.timestamp_us % 360'000'000) / 60'000'000, x.job_id / 11}];
    ++kept;
  }
  CHECK(r.kept == kept);
  CHECK(r.kept + r.dropped == recs.size());

  std::size_t binned = 0;
  for (std::size_t j = 0; j < r.frames.size(); ++j) {
    const auto& fw = r.frames[j];
    REQUIRE(fw.slots() == 6);
    std::vector<double> frame_counts(3, 0.0);
    for (std::size_t t = 0; t < 6; ++t) {
      std::map<int, int> got;
      for (const auto& task : fw.slot_tasks[t]) ++got[task.program_psi];
      for (int n = 0; n < 3; ++n) {
        const auto it = oracle.find({static_cast<std::int64_t>(j), static_cast<std::int64_t>(t), n});
        CHECK(got[n] == (it == oracle.end() ? 0 : it->second));
        frame_counts[static_cast<std::size_t>(n)] += got[n];
      }
      binned += fw.slot_tasks[t].size();
      CHECK(fw.slot_users[t].size() == fw.slot_tasks[t].size());
    }
    CHECK(fw.request_counts == frame_counts);
  }
  CHECK(binned == kept);
}

TEST_CASE("ingestion is deterministic and insensitive to input order") {
  std::vector<TraceRecord> recs;
  for (int i = 0; i < 50; ++i) recs.push_back({static_cast<std::int64_t>((50 - i) * 7'000'000), i % 2, i, std::nullopt, std::nullopt});
  IngestOptions opt;
  opt.seed = 5;
  const auto f = filter_of({0, 1});
  const auto a = ingest_trace(recs, f, PopulationRanges{}, opt);
  const auto b = ingest_trace(recs, f, PopulationRanges{}, opt);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t j = 0; j < a.frames.size(); ++j)
    for (std::size_t t = 0; t < a.frames[j].slots(); ++t)
      for (std::size_t m = 0; m < a.frames[j].slot_users[t].size(); ++m) {
        CHECK(a.frames[j].slot_users[t][m].cpu_freq_f == b.frames[j].slot_users[t][m].cpu_freq_f);
        CHECK(a.frames[j].slot_tasks[t][m].cycles_r == b.frames[j].slot_tasks[t][m].cycles_r);
      }
}

TEST_CASE("synthetic workloads") {
  SynthSpec s;
  s.num_programs = 4;
  s.zipf_s = 0.0;
  s.drift = DriftSchedule::identity(4);
  s.users_per_slot = 500;
  s.frames = 3;
  s.slots = 4;
  s.seed = 12;

  SECTION("flat popularity without skew") {
    for (const auto& fw : synth_workload(s)) {
      const double total = 2000;
      for (double c : fw.request_counts) {
        // binomial(2000, 1/4): 3 standard deviations ~ 58
        CHECK(std::abs(c - total / 4) <= 3 * std::sqrt(total * 0.25 * 0.75));
      }
    }
  }
  SECTION("same seed, same workload") {
    s.zipf_s = 0.9;
    const auto a = synth_workload(s), b = synth_workload(s);
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j].request_counts == b[j].request_counts);
      for (std::size_t t = 0; t < a[j].slots(); ++t)
        for (std::size_t m = 0; m < a[j].slot_users[t].size(); ++m) {
          CHECK(a[j].slot_users[t][m].fading_xi == b[j].slot_users[t][m].fading_xi);
          CHECK(a[j].slot_tasks[t][m].cycles_r == b[j].slot_tasks[t][m].cycles_r);
        }
    }
  }
  SECTION("parameters stay inside the configured ranges") {
    const PopulationRanges r;
    for (const auto& fw : synth_workload(s))
      for (std::size_t t = 0; t < fw.slots(); ++t)
        for (std::size_t m = 0; m < fw.slot_users[t].size(); ++m) {
          const auto& u = fw.slot_users[t][m];
          const auto& k = fw.slot_tasks[t][m];
          CHECK((u.cpu_freq_f >= r.f_min && u.cpu_freq_f <= r.f_max));
          CHECK((u.tx_power_p >= r.p_min && u.tx_power_p <= r.p_max));
          CHECK((u.distance_o >= r.o_min && u.distance_o <= r.o_max));
          CHECK((k.data_size_d >= r.d_min && k.data_size_d <= r.d_max));
          CHECK((k.intensity_beta >= r.beta_min && k.intensity_beta <= r.beta_max));
        }
  }
  SECTION("rotation moves the most popular program") {
    s.zipf_s = 1.5;
    s.drift = DriftSchedule::rotating(4, 3, 1);
    const auto frames = synth_workload(s);
    for (std::size_t j = 0; j < frames.size(); ++j) {
      const auto& c = frames[j].request_counts;
      CHECK(static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin()) == j % 4);
    }
  }
}

TEST_CASE("Zipf rank-frequency slope") {
  // Least-squares slope of log frequency against log rank.
  const std::size_t N = 10;
  const ZipfSampler z(N, 1.2);
  Rng rng(2024);
  std::vector<double> counts(N, 0.0);
  for (int i = 0; i < 10000; ++i) counts[z(rng)] += 1;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const double x = std::log(static_cast<double>(k + 1)), y = std::log(counts[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double n = static_cast<double>(N);
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(std::abs(slope + 1.2) <= 0.1);
}
