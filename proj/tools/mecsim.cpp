// Command-line front end: simulate, sweep, train-cache, ingest.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "mecsim/mecsim.hpp"

namespace {

using namespace mecsim;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string format = "csv";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool config_positional = true) {
  if (config_positional) cmd->add_option("config", c.config, "scenario config (JSON)")->required();
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  cmd->add_option("--set", c.overrides, "override a config value, key=json (dotted keys for nested)");
}

ScenarioConfig load(const Common& c) {
  json doc = read_json_file(c.config);
  for (const auto& o : c.overrides) apply_override(doc, o);
  ScenarioConfig cfg = config_from_json(doc);
  // Trace paths in a config file are relative to that file.
  auto& trace = cfg.workload.path;
  if (!trace.empty() && std::filesystem::path(trace).is_relative())
    trace = (std::filesystem::path(c.config).parent_path() / trace).string();
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  return cfg;
}

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int run_simulate(const Common& c) {
  const auto cfg = load(c);
  const auto res = run_scenario(cfg);
  write_scenario_outputs(c.out, cfg, res, parse_format(c.format));
  std::cout << "scenario " << cfg.scenario << ": total profit " << fmt_double(res.summary.total_profit) << ", "
            << res.rows.size() << " rows written to " << c.out << "\n";
  return 0;
}

int run_sweep(const Common& c, const std::string& axis_name, const std::string& values, unsigned threads) {
  const auto cfg = load(c);
  const SweepAxis axis = parse_axis(axis_name);
  const auto points = sweep(cfg, axis, split_values(values), threads);
  write_sweep_outputs(c.out, cfg, axis, points, parse_format(c.format));
  for (const auto& p : points)
    std::cout << axis_name << "=" << p.value << ": total profit " << fmt_double(p.result.summary.total_profit) << "\n";
  return 0;
}

int run_train(const Common& c, const std::string& checkpoint) {
  auto cfg = load(c);
  cfg.caching = CachingStrategy::GNDRL;
  const auto res = run_scenario(cfg);
  const auto fmt = parse_format(c.format);
  write_scenario_outputs(c.out, cfg, res, fmt);
  const std::filesystem::path ck = checkpoint.empty() ? std::filesystem::path(c.out) / "checkpoint.txt"
                                                      : std::filesystem::path(checkpoint);
  std::ofstream os(ck);
  if (!os) throw std::runtime_error("cannot write '" + ck.string() + "'");
  save_checkpoint(os, *res.agent);
  const auto& curve = res.learning_curve;
  std::cout << "trained " << curve.size() << " episodes; final greedy return "
            << fmt_double(curve.empty() ? 0.0 : curve.back().greedy_return) << "; checkpoint " << ck.string() << "\n";
  return 0;
}

int run_ingest(const Common& c, const std::string& trace) {
  auto cfg = load(c);
  std::ifstream in(trace);
  if (!in) throw std::runtime_error("cannot open trace file '" + trace + "'");
  const TraceParse parsed = parse_trace(in);
  for (const auto& d : parsed.diagnostics) std::cerr << trace << ": " << d << "\n";
  const auto filter = select_programs(parsed.records, static_cast<std::size_t>(cfg.params.num_programs_N),
                                      cfg.workload.min_requests, cfg.workload.max_requests);
  IngestOptions io;
  io.frame_len_s = cfg.workload.frame_len_s;
  io.slot_len_s = cfg.workload.slot_len_s;
  io.origin_us = cfg.workload.origin_us;
  io.num_programs = static_cast<std::size_t>(cfg.params.num_programs_N);
  io.seed = derive_seed(cfg.seed, "workload");
  const auto res = ingest_trace(parsed.records, filter, cfg.population, io);
  for (const auto& d : res.diagnostics) std::cerr << trace << ": " << d << "\n";

  Table t;
  t.columns = {"frame", "slot", "program", "job_id", "requests"};
  std::map<int, std::int64_t> job_of;
  for (const auto& [job, prog] : filter.job_to_program) job_of[prog] = job;
  for (std::size_t j = 0; j < res.frames.size(); ++j) {
    const auto& fw = res.frames[j];
    for (std::size_t s = 0; s < fw.slots(); ++s) {
      std::vector<std::size_t> counts(io.num_programs, 0);
      for (const auto& task : fw.slot_tasks[s]) ++counts[static_cast<std::size_t>(task.program_psi)];
      for (std::size_t n = 0; n < counts.size(); ++n) {
        const auto it = job_of.find(static_cast<int>(n));
        t.rows.push_back({json(j + 1), json(s + 1), json(n), it == job_of.end() ? json(nullptr) : json(it->second),
                          json(counts[n])});
      }
    }
  }
  const auto fmt = parse_format(c.format);
  std::filesystem::create_directories(c.out);
  t.write_file(std::filesystem::path(c.out) / ("ingest" + extension(fmt)), fmt);
  const std::size_t malformed = parsed.diagnostics.size();
  std::cout << "records " << parsed.records.size() + malformed << ": kept " << res.kept << ", dropped "
            << res.dropped + malformed << " (" << malformed << " malformed); frames " << res.frames.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-computing pricing and service-caching simulator"};
  app.require_subcommand(1);

  Common sim, swp, trn, ing;
  auto* simulate = app.add_subcommand("simulate", "run one scenario");
  add_common(simulate, sim);

  auto* sweep_cmd = app.add_subcommand("sweep", "run a scenario once per axis value");
  add_common(sweep_cmd, swp);
  std::string axis, values;
  unsigned threads = 0;
  sweep_cmd->add_option("--axis", axis, "M, F (MHz), Z, pricer or caching")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();
  sweep_cmd->add_option("--threads", threads, "worker threads (0: hardware concurrency)");

  auto* train = app.add_subcommand("train-cache", "train the caching agent and save a checkpoint");
  add_common(train, trn);
  std::string checkpoint;
  train->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/checkpoint.txt)");

  auto* ingest = app.add_subcommand("ingest", "bin a task trace into frames and slots");
  std::string trace;
  ingest->add_option("trace", trace, "trace file (timestamp,job_id,task_id,cpu,param_size)")->required();
  add_common(ingest, ing);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return run_simulate(sim);
    if (*sweep_cmd) return run_sweep(swp, axis, values, threads);
    if (*train) return run_train(trn, checkpoint);
    if (*ingest) return run_ingest(ing, trace);
  } catch (const std::exception& e) {
    std::cerr << "mecsim: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
