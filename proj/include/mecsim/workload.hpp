#pragma once

// Request workloads: popularity estimates, trace ingestion (timestamp, job,
// task, cpu, param_size records) and the synthetic Zipf generator with
// per-frame rank drift.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mecsim/model.hpp"
#include "mecsim/rng.hpp"
#include "mecsim/stage2.hpp"

namespace mecsim {

inline PopularityVector estimate_popularity(std::span<const double> prev1, std::span<const double> prev2) {
  if (prev1.size() != prev2.size() || prev1.empty())
    throw std::invalid_argument("estimate_popularity: count vectors must be nonempty and equal length");
  std::vector<double> y(prev1.size());
  double total = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) {
    if (prev1[n] < 0 || prev2[n] < 0) throw std::invalid_argument("estimate_popularity: negative count");
    y[n] = prev1[n] + prev2[n];
    total += y[n];
  }
  if (total == 0.0) return PopularityVector::uniform(y.size());
  for (double& v : y) v /= total;
  return PopularityVector(std::move(y));
}

inline PopularityVector true_popularity(std::span<const double> counts) {
  std::vector<double> zero(counts.size(), 0.0);
  return estimate_popularity(counts, zero);
}

/// Sampling ranges for user devices and tasks; all in SI units (Hz, W, m, bits).
struct PopulationRanges {
  double f_min = 0.5e6, f_max = 4e6;
  double p_min = 0.080, p_max = 0.200;
  double o_min = 100.0, o_max = 1000.0;
  double d_min = 200.0 * 8 * 1024, d_max = 1000.0 * 8 * 1024;
  double beta_min = 800.0, beta_max = 2000.0;

  void validate() const {
    auto check = [](double lo, double hi, const char* what) {
      if (!(lo > 0 && lo < hi)) throw std::invalid_argument(std::string("population range ") + what + ": need 0 < min < max");
    };
    check(f_min, f_max, "cpu frequency");
    check(p_min, p_max, "transmit power");
    check(o_min, o_max, "distance");
    check(d_min, d_max, "data size");
    check(beta_min, beta_max, "intensity");
  }

  FrequencyDistribution frequency_distribution() const { return {f_min, f_max}; }

  /// Device parameters from `device`, small-scale fading from `channel`.
  UserProfile sample_user(int id, Rng& device, Rng& channel) const {
    UserProfile u;
    u.id = id;
    u.cpu_freq_f = device.uniform(f_min, f_max);
    u.tx_power_p = device.uniform(p_min, p_max);
    u.distance_o = device.uniform(o_min, o_max);
    u.fading_xi = channel.exponential();
    return u;
  }

  Task sample_task(int program, Rng& rng) const {
    const double d = rng.uniform(d_min, d_max);
    const double beta = rng.uniform(beta_min, beta_max);
    return make_task(program, d, beta);
  }
};

/// One frame of requests: T slots of (user, task) pairs plus request counts.
struct FrameWorkload {
  std::vector<std::vector<UserProfile>> slot_users;
  std::vector<std::vector<Task>> slot_tasks;
  std::vector<double> request_counts;

  std::size_t slots() const { return slot_users.size(); }
};

/// Estimated popularity for every frame from the two preceding frames;
/// frames without two frames of history use the uniform prior.
inline std::vector<PopularityVector> estimated_popularity(std::span<const FrameWorkload> frames, std::size_t N) {
  std::vector<PopularityVector> out;
  out.reserve(frames.size());
  for (std::size_t j = 0; j < frames.size(); ++j) {
    if (j < 2)
      out.push_back(PopularityVector::uniform(N));
    else
      out.push_back(estimate_popularity(frames[j - 1].request_counts, frames[j - 2].request_counts));
  }
  return out;
}

// --- trace ingestion ---------------------------------------------------------

struct TraceRecord {
  std::int64_t timestamp_us = 0;
  std::int64_t job_id = 0;
  std::int64_t task_id = 0;
  std::optional<double> cpu_cycles;
  std::optional<double> param_size_bits;
};

struct TraceParse {
  std::vector<TraceRecord> records;
  std::vector<std::string> diagnostics;
  std::size_t lines = 0;  // data lines seen (header and blank lines excluded)
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

}  // namespace detail

/// Reads `timestamp,job_id,task_id,cpu,param_size` lines. A first line whose
/// timestamp field is not numeric is treated as a header. Empty cpu or
/// param_size fields are allowed; any other defect skips the line with a
/// diagnostic.
inline TraceParse parse_trace(std::istream& in) {
  TraceParse out;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = view.find(',', start);
      cols.push_back(view.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    std::int64_t ts = 0;
    if (first) {
      first = false;
      if (!detail::parse_number(cols[0], ts)) continue;  // header
    }
    ++out.lines;
    auto fail = [&](const std::string& why) {
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": " + why);
    };
    if (cols.size() != 5) {
      fail("expected 5 columns, got " + std::to_string(cols.size()));
      continue;
    }
    TraceRecord r;
    if (!detail::parse_number(cols[0], r.timestamp_us) || r.timestamp_us < 0) {
      fail("bad timestamp");
      continue;
    }
    if (!detail::parse_number(cols[1], r.job_id) || !detail::parse_number(cols[2], r.task_id)) {
      fail("bad job or task id");
      continue;
    }
    if (!detail::trim(cols[3]).empty()) {
      double v = 0;
      if (!detail::parse_number(cols[3], v) || !(v > 0)) {
        fail("cpu cycles must be > 0");
        continue;
      }
      r.cpu_cycles = v;
    }
    if (!detail::trim(cols[4]).empty()) {
      double v = 0;
      if (!detail::parse_number(cols[4], v) || !(v > 0)) {
        fail("param size must be > 0");
        continue;
      }
      r.param_size_bits = v;
    }
    out.records.push_back(r);
  }
  return out;
}

/// Maps trace job ids to program indices; jobs not listed are dropped.
struct ProgramFilter {
  std::map<std::int64_t, int> job_to_program;

  std::optional<int> program_of(std::int64_t job) const {
    const auto it = job_to_program.find(job);
    if (it == job_to_program.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return job_to_program.size(); }
};

/// Picks up to `count` jobs whose request counts fall in [min_requests,
/// max_requests], most requested first (job id breaks ties).
inline ProgramFilter select_programs(std::span<const TraceRecord> records, std::size_t count,
                                     std::size_t min_requests = 1,
                                     std::size_t max_requests = static_cast<std::size_t>(-1)) {
  std::map<std::int64_t, std::size_t> freq;
  for (const auto& r : records) ++freq[r.job_id];
  std::vector<std::pair<std::int64_t, std::size_t>> jobs;
  for (const auto& [job, c] : freq)
    if (c >= min_requests && c <= max_requests) jobs.emplace_back(job, c);
  std::stable_sort(jobs.begin(), jobs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  ProgramFilter f;
  for (std::size_t i = 0; i < jobs.size() && i < count; ++i) f.job_to_program[jobs[i].first] = static_cast<int>(i);
  return f;
}

struct IngestResult {
  std::vector<FrameWorkload> frames;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::vector<std::string> diagnostics;
};

struct IngestOptions {
  double frame_len_s = 360.0;
  double slot_len_s = 60.0;
  std::int64_t origin_us = 0;
  std::size_t num_programs = 0;  // 0: filter size
  std::uint64_t seed = 0;
};

/// Bins records into half-open [start, end) frames and slots and turns each
/// kept record into one user with one task. Missing cpu/param fields are
/// sampled from `ranges`.
inline IngestResult ingest_trace(std::span<const TraceRecord> records, const ProgramFilter& filter,
                                 const PopulationRanges& ranges, const IngestOptions& opt) {
  if (!(opt.frame_len_s > 0) || !(opt.slot_len_s > 0)) throw std::invalid_argument("ingest_trace: lengths must be > 0");
  const double ratio = opt.frame_len_s / opt.slot_len_s;
  const auto T = static_cast<std::size_t>(std::llround(ratio));
  if (T == 0 || std::abs(ratio - static_cast<double>(T)) > 1e-9)
    throw std::invalid_argument("ingest_trace: slot length must divide frame length");
  const std::size_t N = opt.num_programs ? opt.num_programs : filter.size();
  if (N == 0) throw std::invalid_argument("ingest_trace: empty program filter");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].timestamp_us < records[b].timestamp_us; });

  Rng device(opt.seed, "workload/device");
  Rng channel(opt.seed, "workload/channel");
  Rng task_rng(opt.seed, "workload/task");

  const auto frame_us = static_cast<std::int64_t>(std::llround(opt.frame_len_s * 1e6));
  const auto slot_us = static_cast<std::int64_t>(std::llround(opt.slot_len_s * 1e6));

  IngestResult res;
  auto ensure_frame = [&](std::size_t j) {
    while (res.frames.size() <= j) {
      FrameWorkload fw;
      fw.slot_users.resize(T);
      fw.slot_tasks.resize(T);
      fw.request_counts.assign(N, 0.0);
      res.frames.push_back(std::move(fw));
    }
  };

  for (std::size_t idx : order) {
    const TraceRecord& r = records[idx];
    const auto program = filter.program_of(r.job_id);
    if (!program || static_cast<std::size_t>(*program) >= N || r.timestamp_us < opt.origin_us) {
      ++res.dropped;
      continue;
    }
    const std::int64_t rel = r.timestamp_us - opt.origin_us;
    const auto j = static_cast<std::size_t>(rel / frame_us);
    const auto t = static_cast<std::size_t>((rel % frame_us) / slot_us);
    ensure_frame(j);
    FrameWorkload& fw = res.frames[j];

    const int id = static_cast<int>(fw.slot_users[t].size());
    UserProfile u = ranges.sample_user(id, device, channel);
    const double d_draw = task_rng.uniform(ranges.d_min, ranges.d_max);
    const double b_draw = task_rng.uniform(ranges.beta_min, ranges.beta_max);
    const double d = r.param_size_bits.value_or(d_draw);
    const double beta = r.cpu_cycles ? *r.cpu_cycles / d : b_draw;
    fw.slot_users[t].push_back(u);
    fw.slot_tasks[t].push_back(make_task(*program, d, beta));
    fw.request_counts[static_cast<std::size_t>(*program)] += 1.0;
    ++res.kept;
  }
  if (res.kept == 0) throw std::runtime_error("ingest_trace: no records survived filtering");
  return res;
}

// --- synthetic workload ------------------------------------------------------

/// Rank-to-program permutations, one per frame (cycled when shorter than J).
struct DriftSchedule {
  std::vector<std::vector<int>> permutations;

  static DriftSchedule identity(std::size_t N) {
    std::vector<int> p(N);
    std::iota(p.begin(), p.end(), 0);
    return {{p}};
  }
  /// Frame j maps rank k to program (k + j * step) mod N.
  static DriftSchedule rotating(std::size_t N, std::size_t J, std::size_t step) {
    DriftSchedule d;
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<int> p(N);
      for (std::size_t k = 0; k < N; ++k) p[k] = static_cast<int>((k + j * step) % N);
      d.permutations.push_back(std::move(p));
    }
    return d;
  }
  const std::vector<int>& frame(std::size_t j) const { return permutations[j % permutations.size()]; }
};

/// Zipf(s) over ranks 0..N-1 (rank k has weight 1/(k+1)^s).
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s) : cdf_(n) {
    if (n == 0) throw std::invalid_argument("ZipfSampler: empty support");
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += 1.0 / std::pow(static_cast<double>(k + 1), s);
      cdf_[k] = acc;
    }
    for (double& c : cdf_) c /= acc;
    cdf_.back() = 1.0;
  }
  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform01();
    return static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

struct SynthSpec {
  std::size_t num_programs = 4;
  double zipf_s = 0.8;
  DriftSchedule drift = DriftSchedule::identity(4);
  std::size_t users_per_slot = 50;
  std::size_t frames = 5;
  std::size_t slots = 5;
  std::uint64_t seed = 0;
  PopulationRanges ranges{};
};

inline std::vector<FrameWorkload> synth_workload(const SynthSpec& spec) {
  if (spec.drift.permutations.empty()) throw std::invalid_argument("synth_workload: empty drift schedule");
  for (const auto& p : spec.drift.permutations)
    if (p.size() != spec.num_programs) throw std::invalid_argument("synth_workload: drift permutation size != N");
  const ZipfSampler zipf(spec.num_programs, spec.zipf_s);
  Rng program_rng(spec.seed, "workload/program");
  Rng device(spec.seed, "workload/device");
  Rng channel(spec.seed, "workload/channel");
  Rng task_rng(spec.seed, "workload/task");

  std::vector<FrameWorkload> frames(spec.frames);
  for (std::size_t j = 0; j < spec.frames; ++j) {
    FrameWorkload& fw = frames[j];
    fw.slot_users.resize(spec.slots);
    fw.slot_tasks.resize(spec.slots);
    fw.request_counts.assign(spec.num_programs, 0.0);
    const auto& perm = spec.drift.frame(j);
    for (std::size_t t = 0; t < spec.slots; ++t) {
      for (std::size_t m = 0; m < spec.users_per_slot; ++m) {
        const int program = perm[zipf(program_rng)];
        fw.slot_users[t].push_back(spec.ranges.sample_user(static_cast<int>(m), device, channel));
        fw.slot_tasks[t].push_back(spec.ranges.sample_task(program, task_rng));
        fw.request_counts[static_cast<std::size_t>(program)] += 1.0;
      }
    }
  }
  return frames;
}

}  // namespace mecsim
