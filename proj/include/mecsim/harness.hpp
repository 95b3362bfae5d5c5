#pragma once

// Scenario configuration, orchestration and metric emission.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mecsim/caching.hpp"
#include "mecsim/model.hpp"
#include "mecsim/rng.hpp"
#include "mecsim/stage1.hpp"
#include "mecsim/stage2.hpp"
#include "mecsim/workload.hpp"

namespace mecsim {

using json = nlohmann::ordered_json;

/// Invalid configuration; raised before any computation starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CachingStrategy { All, POSC, STSC, GNDRL };

inline std::string_view to_string(CachingStrategy c) {
  switch (c) {
    case CachingStrategy::All: return "all";
    case CachingStrategy::POSC: return "posc";
    case CachingStrategy::STSC: return "stsc";
    case CachingStrategy::GNDRL: return "gndrl";
  }
  return "?";
}

struct WorkloadSource {
  bool from_trace = false;
  // synthetic
  double zipf_s = 0.8;
  std::size_t drift_step = 0;
  // trace
  std::string path;
  double frame_len_s = 360.0;
  double slot_len_s = 60.0;
  std::int64_t origin_us = 0;
  std::size_t min_requests = 1;
  std::size_t max_requests = static_cast<std::size_t>(-1);
};

struct ScenarioConfig {
  std::string scenario = "default";
  SystemParams params;
  PopulationRanges population;
  std::vector<double> program_sizes;  // empty: 50 for every program
  std::size_t users_M = 50;
  PricingScheme pricing = PricingScheme::CPTO;
  OffloadModel offloading = OffloadModel::TO;
  CachingStrategy caching = CachingStrategy::POSC;
  bool complete_information = false;
  bool record_timing = false;
  GndrlConfig gndrl;
  double penalty_rho_c = 0.02;
  WorkloadSource workload;
  std::uint64_t seed = 1;

  std::vector<double> sizes() const {
    if (!program_sizes.empty()) return program_sizes;
    return std::vector<double>(static_cast<std::size_t>(params.num_programs_N), 50.0);
  }
};

// --- parsing -------------------------------------------------------------------

namespace detail {

template <class Enum, std::size_t K>
Enum parse_enum(const std::string& key, const std::string& value, const std::pair<const char*, Enum> (&table)[K]) {
  for (const auto& [name, e] : table)
    if (value == name) return e;
  std::string known;
  for (const auto& [name, e] : table) known += std::string(known.empty() ? "" : ", ") + name;
  throw ConfigError("config: unknown value '" + value + "' for '" + key + "' (expected one of: " + known + ")");
}

inline std::pair<double, double> parse_range(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError("config: '" + key + "' must be a [min, max] pair");
  const double lo = v[0].get<double>(), hi = v[1].get<double>();
  if (!(lo < hi)) throw ConfigError("config: '" + key + "' needs min < max");
  return {lo, hi};
}

template <class T>
T number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: '" + key + "' must be a number");
  return v.get<T>();
}

inline std::size_t count(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("config: '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

inline constexpr int kConfigSchemaVersion = 1;

inline PricingScheme parse_pricing(const std::string& s) {
  static const std::pair<const char*, PricingScheme> t[] = {{"cpto", PricingScheme::CPTO},
                                                            {"scao", PricingScheme::SCAO},
                                                            {"dpo", PricingScheme::DPO},
                                                            {"lp", PricingScheme::LP},
                                                            {"ltsp", PricingScheme::LTSP}};
  return detail::parse_enum("pricing", s, t);
}

inline OffloadModel parse_offloading(const std::string& s) {
  static const std::pair<const char*, OffloadModel> t[] = {
      {"to", OffloadModel::TO}, {"co", OffloadModel::CO}, {"lc", OffloadModel::LC}, {"ro", OffloadModel::RO}};
  return detail::parse_enum("offloading", s, t);
}

inline CachingStrategy parse_caching(const std::string& s) {
  static const std::pair<const char*, CachingStrategy> t[] = {{"all", CachingStrategy::All},
                                                              {"posc", CachingStrategy::POSC},
                                                              {"stsc", CachingStrategy::STSC},
                                                              {"gndrl", CachingStrategy::GNDRL}};
  return detail::parse_enum("caching", s, t);
}

/// Builds a config from a JSON document. Unknown keys are rejected. Physical
/// quantities use human-friendly units (MHz, mW, KB) and are converted here.
inline ScenarioConfig config_from_json(const json& doc) {
  using detail::number;
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  ScenarioConfig c;
  auto& p = c.params;
  auto& pop = c.population;
  for (const auto& [key, v] : doc.items()) {
    if (key == "schema_version") {
      if (number<int>(v, key) != kConfigSchemaVersion)
        throw ConfigError("config: unsupported schema_version " + v.dump());
    } else if (key == "scenario") {
      if (!v.is_string()) throw ConfigError("config: 'scenario' must be a string");
      c.scenario = v.get<std::string>();
    } else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError("config: 'seed' must be a nonnegative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "users_M") {
      c.users_M = detail::count(v, key);
    } else if (key == "programs_N") {
      p.num_programs_N = static_cast<int>(detail::count(v, key));
    } else if (key == "frames_J") {
      p.frames_J = static_cast<int>(detail::count(v, key));
    } else if (key == "slots_T") {
      p.slots_T = static_cast<int>(detail::count(v, key));
    } else if (key == "bandwidth_mhz") {
      p.bandwidth_W = number<double>(v, key) * 1e6;
    } else if (key == "edge_freq_mhz") {
      p.edge_freq_F = number<double>(v, key) * 1e6;
    } else if (key == "noise_w") {
      p.noise_var = number<double>(v, key);
    } else if (key == "theta") {
      p.theta = number<double>(v, key);
    } else if (key == "pathloss_const") {
      p.pathloss_const_lambda = number<double>(v, key);
    } else if (key == "pathloss_exp") {
      p.pathloss_exp_e = number<double>(v, key);
    } else if (key == "cache_capacity") {
      p.cache_capacity_Z = number<double>(v, key);
    } else if (key == "program_size") {
      if (v.is_number()) {
        c.program_sizes = {v.get<double>()};
      } else if (v.is_array()) {
        c.program_sizes.clear();
        for (const auto& e : v) c.program_sizes.push_back(number<double>(e, key));
      } else {
        throw ConfigError("config: 'program_size' must be a number or an array");
      }
    } else if (key == "price_weight_phi") {
      p.price_weight_phi = number<double>(v, key);
    } else if (key == "caching_cost_rate") {
      p.caching_cost_rate = number<double>(v, key);
    } else if (key == "user_freq_mhz") {
      auto [lo, hi] = detail::parse_range(v, key);
      pop.f_min = lo * 1e6;
      pop.f_max = hi * 1e6;
    } else if (key == "tx_power_mw") {
      auto [lo, hi] = detail::parse_range(v, key);
      pop.p_min = lo * 1e-3;
      pop.p_max = hi * 1e-3;
    } else if (key == "distance_m") {
      std::tie(pop.o_min, pop.o_max) = detail::parse_range(v, key);
    } else if (key == "data_size_kb") {
      auto [lo, hi] = detail::parse_range(v, key);
      pop.d_min = lo * 8 * 1024;
      pop.d_max = hi * 8 * 1024;
    } else if (key == "intensity_cycles_per_bit") {
      std::tie(pop.beta_min, pop.beta_max) = detail::parse_range(v, key);
    } else if (key == "pricing") {
      c.pricing = parse_pricing(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (key == "offloading") {
      c.offloading = parse_offloading(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (key == "caching") {
      c.caching = parse_caching(v.is_string() ? v.get<std::string>() : v.dump());
    } else if (key == "information") {
      const std::string s = v.is_string() ? v.get<std::string>() : v.dump();
      if (s == "incomplete")
        c.complete_information = false;
      else if (s == "complete")
        c.complete_information = true;
      else
        throw ConfigError("config: 'information' must be 'incomplete' or 'complete'");
    } else if (key == "record_timing") {
      if (!v.is_boolean()) throw ConfigError("config: 'record_timing' must be a boolean");
      c.record_timing = v.get<bool>();
    } else if (key == "workload") {
      if (!v.is_object()) throw ConfigError("config: 'workload' must be an object");
      auto& w = c.workload;
      for (const auto& [k, x] : v.items()) {
        const std::string kk = "workload." + k;
        if (k == "source") {
          const std::string s = x.is_string() ? x.get<std::string>() : x.dump();
          if (s == "synthetic")
            w.from_trace = false;
          else if (s == "trace")
            w.from_trace = true;
          else
            throw ConfigError("config: 'workload.source' must be 'synthetic' or 'trace'");
        } else if (k == "zipf_s") {
          w.zipf_s = number<double>(x, kk);
        } else if (k == "drift_step") {
          w.drift_step = detail::count(x, kk);
        } else if (k == "path") {
          if (!x.is_string()) throw ConfigError("config: 'workload.path' must be a string");
          w.path = x.get<std::string>();
        } else if (k == "frame_len_s") {
          w.frame_len_s = number<double>(x, kk);
        } else if (k == "slot_len_s") {
          w.slot_len_s = number<double>(x, kk);
        } else if (k == "origin_us") {
          w.origin_us = number<std::int64_t>(x, kk);
        } else if (k == "min_requests") {
          w.min_requests = detail::count(x, kk);
        } else if (k == "max_requests") {
          w.max_requests = detail::count(x, kk);
        } else {
          throw ConfigError("config: unknown key '" + kk + "'");
        }
      }
    } else if (key == "gndrl") {
      if (!v.is_object()) throw ConfigError("config: 'gndrl' must be an object");
      auto& g = c.gndrl;
      for (const auto& [k, x] : v.items()) {
        const std::string kk = "gndrl." + k;
        if (k == "episodes") {
          g.episodes = static_cast<int>(detail::count(x, kk));
        } else if (k == "batch_size") {
          g.batch_size = detail::count(x, kk);
        } else if (k == "gamma") {
          g.gamma = number<double>(x, kk);
        } else if (k == "learning_rate") {
          g.learning_rate = number<double>(x, kk);
        } else if (k == "sync_every") {
          g.sync_every = static_cast<int>(detail::count(x, kk));
        } else if (k == "replay_capacity") {
          g.replay_capacity = detail::count(x, kk);
        } else if (k == "eps_start") {
          g.eps_start = number<double>(x, kk);
        } else if (k == "eps_end") {
          g.eps_end = number<double>(x, kk);
        } else if (k == "eps_decay_fraction") {
          g.eps_decay_fraction = number<double>(x, kk);
        } else if (k == "hidden") {
          if (!x.is_array() || x.empty()) throw ConfigError("config: 'gndrl.hidden' must be a nonempty array");
          g.hidden.clear();
          for (const auto& h : x) g.hidden.push_back(detail::count(h, kk));
        } else if (k == "reward_scale") {
          g.reward_scale = number<double>(x, kk);
        } else if (k == "penalty_rho_c") {
          c.penalty_rho_c = number<double>(x, kk);
        } else {
          throw ConfigError("config: unknown key '" + kk + "'");
        }
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (c.program_sizes.size() == 1 && p.num_programs_N > 1)
    c.program_sizes.assign(static_cast<std::size_t>(p.num_programs_N), c.program_sizes.front());
  return c;
}

inline void validate(const ScenarioConfig& c) {
  try {
    c.params.validate();
    c.population.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto sizes = c.sizes();
  if (sizes.size() != static_cast<std::size_t>(c.params.num_programs_N))
    throw ConfigError("config: program_size array length must equal programs_N");
  for (double z : sizes)
    if (!(z >= 0)) throw ConfigError("config: program sizes must be >= 0");
  if (!c.workload.from_trace && c.users_M == 0) throw ConfigError("config: users_M must be >= 1");
  if (c.workload.from_trace && c.workload.path.empty()) throw ConfigError("config: trace workload needs 'path'");
  if (!(c.workload.zipf_s >= 0)) throw ConfigError("config: workload.zipf_s must be >= 0");
  const auto& g = c.gndrl;
  if (g.episodes < 1) throw ConfigError("config: gndrl.episodes must be >= 1");
  if (g.batch_size < 1 || g.sync_every < 1 || g.replay_capacity < 1)
    throw ConfigError("config: gndrl batch_size, sync_every and replay_capacity must be >= 1");
  if (!(g.gamma >= 0 && g.gamma <= 1)) throw ConfigError("config: gndrl.gamma must lie in [0,1]");
  if (!(g.learning_rate > 0)) throw ConfigError("config: gndrl.learning_rate must be > 0");
  if (!(g.eps_end >= 0 && g.eps_start <= 1 && g.eps_end <= g.eps_start))
    throw ConfigError("config: need 0 <= eps_end <= eps_start <= 1");
  if (!(c.penalty_rho_c >= 0)) throw ConfigError("config: gndrl.penalty_rho_c must be >= 0");
}

/// Applies `key=value` overrides (dotted keys reach into nested objects).
/// The value is parsed as JSON when possible, else taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  return doc;
}

// --- running -------------------------------------------------------------------

struct MetricsRow {
  std::string scenario;
  int frame = 0;  // 1-based
  int slot = 0;   // 1-based
  std::string pricing, offloading, caching;
  double bs_payment = 0.0;
  double bs_frame_utility = 0.0;
  double mean_user_cost = 0.0;
  double mean_payment = 0.0;
  double mean_delay = 0.0;
  std::size_t offloader_count = 0;
  double wall_clock_pricing = 0.0;
};

struct ScenarioSummary {
  double total_profit = 0.0;
  double total_payments = 0.0;
  double mean_user_cost = 0.0;
  double mean_payment = 0.0;
  double mean_delay = 0.0;
  double mean_offloaders = 0.0;
  double mean_pricing_seconds = 0.0;
  std::size_t user_slots = 0;
};

struct LearningPoint {
  int episode = 0;
  double ret = 0.0;
  double greedy_return = 0.0;
};

struct ScenarioResult {
  std::vector<MetricsRow> rows;
  std::vector<double> frame_utilities;
  std::vector<CachingDecision> caching_plan;
  std::vector<LearningPoint> learning_curve;
  std::optional<Checkpoint> agent;  // trained networks when caching is learned
  ScenarioSummary summary;
};

inline std::vector<FrameWorkload> build_workload(const ScenarioConfig& c) {
  const std::uint64_t wseed = derive_seed(c.seed, "workload");
  if (!c.workload.from_trace) {
    SynthSpec s;
    s.num_programs = static_cast<std::size_t>(c.params.num_programs_N);
    s.zipf_s = c.workload.zipf_s;
    s.drift = c.workload.drift_step
                  ? DriftSchedule::rotating(s.num_programs, static_cast<std::size_t>(c.params.frames_J),
                                            c.workload.drift_step)
                  : DriftSchedule::identity(s.num_programs);
    s.users_per_slot = c.users_M;
    s.frames = static_cast<std::size_t>(c.params.frames_J);
    s.slots = static_cast<std::size_t>(c.params.slots_T);
    s.seed = wseed;
    s.ranges = c.population;
    return synth_workload(s);
  }
  std::ifstream in(c.workload.path);
  if (!in) throw ConfigError("cannot open trace file '" + c.workload.path + "'");
  const TraceParse parsed = parse_trace(in);
  const auto filter = select_programs(parsed.records, static_cast<std::size_t>(c.params.num_programs_N),
                                      c.workload.min_requests, c.workload.max_requests);
  IngestOptions io;
  io.frame_len_s = c.workload.frame_len_s;
  io.slot_len_s = c.workload.slot_len_s;
  io.origin_us = c.workload.origin_us;
  io.num_programs = static_cast<std::size_t>(c.params.num_programs_N);
  io.seed = wseed;
  auto res = ingest_trace(parsed.records, filter, c.population, io);
  if (res.frames.size() > static_cast<std::size_t>(c.params.frames_J))
    res.frames.resize(static_cast<std::size_t>(c.params.frames_J));
  return std::move(res.frames);
}

inline EnvConfig env_config(const ScenarioConfig& c) {
  EnvConfig e;
  e.params = c.params;
  e.program_sizes = c.sizes();
  e.dist = c.population.frequency_distribution();
  e.play.scheme = c.pricing;
  e.play.seed = derive_seed(c.seed, "play");
  e.play.complete_information = c.complete_information;
  e.penalty_rho_c = c.penalty_rho_c;
  return e;
}

inline CachingDecision cache_all_that_fit(const std::vector<double>& sizes, double capacity) {
  CachingDecision c = CachingDecision::none(sizes);
  double used = 0.0;
  for (std::size_t n = 0; n < sizes.size(); ++n) {
    if (used + sizes[n] > capacity) continue;
    used += sizes[n];
    c.set(n, true);
  }
  return c;
}

/// Runs one scenario end to end. All randomness comes from the master seed
/// through the named sub-streams "workload", "play" and "agent".
inline ScenarioResult run_scenario(const ScenarioConfig& c) {
  validate(c);
  auto frames = build_workload(c);
  const auto sizes = c.sizes();
  const std::size_t N = sizes.size();
  const double Z = c.params.cache_capacity_Z;
  const auto popularity = estimated_popularity(frames, N);
  const EnvConfig ecfg = env_config(c);

  ScenarioResult res;
  switch (c.caching) {
    case CachingStrategy::All:
      res.caching_plan.assign(frames.size(), cache_all_that_fit(sizes, Z));
      break;
    case CachingStrategy::POSC:
      for (const auto& y : popularity) res.caching_plan.push_back(posc(y, sizes, Z));
      break;
    case CachingStrategy::STSC:
      res.caching_plan = stsc(posc(popularity.front(), sizes, Z), frames.size());
      break;
    case CachingStrategy::GNDRL: {
      CachingEnvironment env(frames, ecfg);
      GndrlConfig g = c.gndrl;
      g.seed = derive_seed(c.seed, "agent");
      const auto learned = run_gndrl(env, g);
      for (std::size_t e = 0; e < learned.episode_returns.size(); ++e)
        res.learning_curve.push_back({static_cast<int>(e + 1), learned.episode_returns[e], learned.greedy[e].total});
      res.agent = Checkpoint{learned.policy, learned.target, g, learned.reward_scale, learned.agent_rng};
      for (const auto& a : learned.caching_history) {
        // An infeasible mask cannot be installed; the frame runs with an empty cache.
        auto d = env.caching(a);
        res.caching_plan.push_back(d.feasible(Z) ? d : CachingDecision::none(sizes));
      }
      break;
    }
  }

  const std::string pricing(to_string(c.pricing)), offloading(to_string(c.offloading)),
      caching(to_string(c.caching));
  ScenarioSummary& s = res.summary;
  std::size_t slot_count = 0;
  CachingDecision prev = CachingDecision::none(sizes);
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const auto markets = frame_markets(frames[j], popularity[j], res.caching_plan[j], ecfg.dist, c.params);
    auto opt = frame_play_options(ecfg.play, j);
    opt.offloading = c.offloading;
    opt.record_timing = c.record_timing;
    const FrameResult fr = play_frame(markets, opt);
    const double utility =
        bs_frame_utility(fr.slot_payments, res.caching_plan[j], prev, fr.per_program, c.params.caching_cost_rate);
    res.frame_utilities.push_back(utility);
    s.total_profit += utility;
    s.total_payments += fr.total_payments;
    for (std::size_t t = 0; t < fr.slots.size(); ++t) {
      const auto& sr = fr.slots[t];
      MetricsRow row;
      row.scenario = c.scenario;
      row.frame = static_cast<int>(j + 1);
      row.slot = static_cast<int>(t + 1);
      row.pricing = pricing;
      row.offloading = offloading;
      row.caching = caching;
      row.bs_payment = sr.outcome.bs_payment;
      row.bs_frame_utility = utility;
      const std::size_t users = sr.outcome.costs_per_user.size();
      double cost = 0, pay = 0, delay = 0;
      for (std::size_t m = 0; m < users; ++m) {
        cost += sr.outcome.costs_per_user[m];
        pay += sr.outcome.payments_per_user[m];
        delay += sr.outcome.delays_per_user[m];
      }
      if (users) {
        row.mean_user_cost = cost / static_cast<double>(users);
        row.mean_payment = pay / static_cast<double>(users);
        row.mean_delay = delay / static_cast<double>(users);
      }
      row.offloader_count = sr.outcome.offloader_count;
      row.wall_clock_pricing = sr.pricing_seconds;
      s.mean_user_cost += cost;
      s.mean_payment += pay;
      s.mean_delay += delay;
      s.user_slots += users;
      s.mean_offloaders += static_cast<double>(sr.outcome.offloader_count);
      s.mean_pricing_seconds += sr.pricing_seconds;
      ++slot_count;
      res.rows.push_back(std::move(row));
    }
    prev = res.caching_plan[j];
  }
  if (s.user_slots) {
    s.mean_user_cost /= static_cast<double>(s.user_slots);
    s.mean_payment /= static_cast<double>(s.user_slots);
    s.mean_delay /= static_cast<double>(s.user_slots);
  }
  if (slot_count) {
    s.mean_offloaders /= static_cast<double>(slot_count);
    s.mean_pricing_seconds /= static_cast<double>(slot_count);
  }
  return res;
}

// --- sweeps --------------------------------------------------------------------

enum class SweepAxis { M, F, Z, Pricer, Caching };

inline SweepAxis parse_axis(const std::string& s) {
  static const std::pair<const char*, SweepAxis> t[] = {{"M", SweepAxis::M},
                                                        {"F", SweepAxis::F},
                                                        {"Z", SweepAxis::Z},
                                                        {"pricer", SweepAxis::Pricer},
                                                        {"caching", SweepAxis::Caching}};
  return detail::parse_enum("axis", s, t);
}

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::M: return "M";
    case SweepAxis::F: return "F";
    case SweepAxis::Z: return "Z";
    case SweepAxis::Pricer: return "pricer";
    case SweepAxis::Caching: return "caching";
  }
  return "?";
}

/// Config for one sweep point. F values are in MHz.
inline ScenarioConfig apply_axis(ScenarioConfig c, SweepAxis axis, const std::string& value) {
  auto num = [&]() {
    double v = 0;
    if (!detail::parse_number(std::string_view(value), v) || !std::isfinite(v)) throw ConfigError("sweep: value '" + value + "' is not a number");
    return v;
  };
  switch (axis) {
    case SweepAxis::M: {
      const double v = num();
      if (!(v >= 1) || v != std::floor(v)) throw ConfigError("sweep: M values must be positive integers");
      c.users_M = static_cast<std::size_t>(v);
      break;
    }
    case SweepAxis::F: c.params.edge_freq_F = num() * 1e6; break;
    case SweepAxis::Z: c.params.cache_capacity_Z = num(); break;
    case SweepAxis::Pricer: c.pricing = parse_pricing(value); break;
    case SweepAxis::Caching: c.caching = parse_caching(value); break;
  }
  return c;
}

struct SweepPoint {
  std::string value;
  ScenarioResult result;
};

/// One scenario per value. Every point reuses the master seed (common random
/// numbers), so points differ only in the swept quantity. Points run on a
/// small worker pool; results come back in value order.
inline std::vector<SweepPoint> sweep(const ScenarioConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                                     unsigned threads = 0) {
  if (values.empty()) throw ConfigError("sweep: empty value list");
  std::vector<ScenarioConfig> configs;
  for (const auto& v : values) {
    configs.push_back(apply_axis(base, axis, v));
    validate(configs.back());
  }
  std::vector<SweepPoint> out(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(values.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < values.size();) {
      try {
        out[i] = SweepPoint{values[i], run_scenario(configs[i])};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// --- output --------------------------------------------------------------------

enum class OutputFormat { CSV, JSON };

inline OutputFormat parse_format(const std::string& s) {
  static const std::pair<const char*, OutputFormat> t[] = {{"csv", OutputFormat::CSV}, {"json", OutputFormat::JSON}};
  return detail::parse_enum("format", s, t);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// A table of named columns; rendered as CSV with a header row or as a JSON
/// array of objects.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;

  void write(std::ostream& os, OutputFormat f) const {
    if (f == OutputFormat::CSV) {
      for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
      os << '\n';
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
          if (i) os << ',';
          const auto& v = r[i];
          if (v.is_string())
            os << v.get<std::string>();
          else if (v.is_number_float())
            os << fmt_double(v.get<double>());
          else
            os << v.dump();
        }
        os << '\n';
      }
    } else {
      json arr = json::array();
      for (const auto& r : rows) {
        json o = json::object();
        for (std::size_t i = 0; i < r.size(); ++i) o[columns[i]] = r[i];
        arr.push_back(std::move(o));
      }
      os << arr.dump(1) << '\n';
    }
  }

  void write_file(const std::filesystem::path& path, OutputFormat f) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    write(os, f);
  }
};

inline Table metrics_table(const std::vector<MetricsRow>& rows, const std::string& axis = {},
                           const std::vector<std::string>& axis_values = {}) {
  Table t;
  if (!axis.empty()) t.columns = {"axis", "value"};
  for (const char* c : {"scenario", "frame", "slot", "pricing", "offloading", "caching", "bs_payment",
                        "bs_frame_utility", "mean_user_cost", "mean_payment", "mean_delay", "offloader_count",
                        "wall_clock_pricing"})
    t.columns.emplace_back(c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::vector<json> v;
    if (!axis.empty()) {
      v.emplace_back(axis);
      v.emplace_back(axis_values[i]);
    }
    v.insert(v.end(), {json(r.scenario), json(r.frame), json(r.slot), json(r.pricing), json(r.offloading),
                       json(r.caching), json(r.bs_payment), json(r.bs_frame_utility), json(r.mean_user_cost),
                       json(r.mean_payment), json(r.mean_delay), json(r.offloader_count),
                       json(r.wall_clock_pricing)});
    t.rows.push_back(std::move(v));
  }
  return t;
}

inline std::vector<json> summary_values(const ScenarioConfig& c, const ScenarioResult& r) {
  const auto& s = r.summary;
  return {json(c.scenario),          json(std::string(to_string(c.pricing))),
          json(std::string(to_string(c.offloading))), json(std::string(to_string(c.caching))),
          json(c.users_M),           json(s.total_profit),
          json(s.total_payments),    json(s.mean_user_cost),
          json(s.mean_payment),      json(s.mean_delay),
          json(s.mean_offloaders),   json(s.mean_pricing_seconds)};
}

inline std::vector<std::string> summary_columns() {
  return {"scenario",       "pricing",      "offloading", "caching",         "users_M",          "total_profit",
          "total_payments", "mean_user_cost", "mean_payment", "mean_delay", "mean_offloaders", "mean_pricing_seconds"};
}

inline Table caching_table(const ScenarioResult& r) {
  Table t;
  t.columns = {"frame", "action_code", "mask", "frame_utility"};
  for (std::size_t j = 0; j < r.caching_plan.size(); ++j) {
    std::string bits;
    for (auto b : r.caching_plan[j].mask()) bits += b ? '1' : '0';
    t.rows.push_back({json(j + 1), json(encode_action(r.caching_plan[j]).code), json(bits),
                      json(r.frame_utilities[j])});
  }
  return t;
}

inline Table learning_table(const std::vector<LearningPoint>& curve) {
  Table t;
  t.columns = {"episode", "return", "greedy_return"};
  for (const auto& p : curve) t.rows.push_back({json(p.episode), json(p.ret), json(p.greedy_return)});
  return t;
}

inline std::string extension(OutputFormat f) { return f == OutputFormat::CSV ? ".csv" : ".json"; }

/// metrics, summary and caching files (plus the learning curve when there is
/// one) under `dir`.
inline void write_scenario_outputs(const std::filesystem::path& dir, const ScenarioConfig& c, const ScenarioResult& r,
                                   OutputFormat f) {
  std::filesystem::create_directories(dir);
  const std::string ext = extension(f);
  metrics_table(r.rows).write_file(dir / ("metrics" + ext), f);
  Table summary;
  summary.columns = summary_columns();
  summary.rows.push_back(summary_values(c, r));
  summary.write_file(dir / ("summary" + ext), f);
  caching_table(r).write_file(dir / ("caching" + ext), f);
  if (!r.learning_curve.empty()) learning_table(r.learning_curve).write_file(dir / ("learning_curve" + ext), f);
}

inline void write_sweep_outputs(const std::filesystem::path& dir, const ScenarioConfig& base, SweepAxis axis,
                                const std::vector<SweepPoint>& points, OutputFormat f) {
  std::filesystem::create_directories(dir);
  const std::string ext = extension(f);
  const std::string ax(to_string(axis));
  std::vector<MetricsRow> rows;
  std::vector<std::string> tags;
  Table summary;
  summary.columns = {"axis", "value"};
  for (auto& c : summary_columns()) summary.columns.push_back(c);
  for (const auto& p : points) {
    for (const auto& r : p.result.rows) {
      rows.push_back(r);
      tags.push_back(p.value);
    }
    std::vector<json> v{json(ax), json(p.value)};
    for (auto& x : summary_values(apply_axis(base, axis, p.value), p.result)) v.push_back(std::move(x));
    summary.rows.push_back(std::move(v));
  }
  metrics_table(rows, ax, tags).write_file(dir / ("sweep_metrics" + ext), f);
  summary.write_file(dir / ("sweep_summary" + ext), f);
}

}  // namespace mecsim
