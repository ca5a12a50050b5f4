// Copyright 2026 The voltsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// voltsim: run simulated aggregation tasks, print partition plans and the
// traffic table.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "voltsim/harness.hpp"

using namespace voltsim;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidConfig, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::InvalidConfig, "cannot write " + path);
  out << text;
}

struct RunArgs {
  std::string config;
  std::string mode;
  std::string chain;
  bool int_mode = false;
  std::string faults;
  std::string report;
  std::optional<std::uint64_t> seed;
  bool socket = false;
  bool scan_leaks = false;
  bool wall = false;
  std::string save_conf;
  std::string conf;
  bool quiet = false;
};

RunConfig load(const RunArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : run_config_from_json(slurp(a.config));
  if (!a.mode.empty()) cfg.strategy = parse_strategy(a.mode);
  if (!a.chain.empty()) {
    cfg.chain = chain_preset(a.chain);
    cfg.tx_capacity = cfg.chain.tx_capacity_bytes;
  }
  if (a.int_mode) cfg.int_mode = true;
  if (!a.faults.empty()) cfg.faults = faults_from_json(slurp(a.faults));
  if (a.seed) cfg.seed = *a.seed;
  if (a.socket) cfg.socket = true;
  if (a.scan_leaks) {
    cfg.scan_leaks = true;
    cfg.sentinel = true;
  }
  if (a.wall) cfg.clock = ClockMode::Wall;
  if (!a.conf.empty()) cfg.replay = conf_from_json(slurp(a.conf));
  cfg.validate();
  return cfg;
}

int run(const RunArgs& a) {
  auto cfg = load(a);
  auto result = run_task(cfg);
  const auto& rep = result.report;
  if (!a.report.empty()) spill(a.report, report_jsonl(rep));
  if (!a.save_conf.empty()) spill(a.save_conf, conf_to_json(result.conf));
  if (!a.quiet) std::cout << report_table(rep);
  if (!rep.passed()) {
    for (const auto& c : rep.checks) {
      if (!c.pass) std::cerr << "check failed: " << c.name << " " << c.detail << '\n';
    }
    for (std::size_t i = result.telemetry.log.size() > 20 ? result.telemetry.log.size() - 20 : 0;
         i < result.telemetry.log.size(); ++i) {
      std::cerr << result.telemetry.log[i] << '\n';
    }
    return 1;
  }
  return 0;
}

int plan(const RunArgs& a) {
  auto cfg = load(a);
  auto spec = cfg.task_spec();
  std::vector<NodeId> alive;
  for (std::uint32_t i = 1; i <= cfg.nodes; ++i) alive.push_back(NodeId{i});
  std::cout << conf_to_json(schedule(spec, alive, cfg.limits())) << '\n';
  return 0;
}

int traffic(std::uint64_t rounds) {
  std::printf("%-10s %10s %14s %14s %14s %14s\n", "model", "S (MB)", "n", "FL (MB)", "voltran (MB)", "delta");
  for (const char* name : {"MLP", "CNN", "ResNet18", "ResNet50"}) {
    const auto& p = find_preset(name);
    for (std::uint64_t n : {10, 50, 100, 500}) {
      double fl = traffic_fl(n, rounds, p.traffic_mb);
      double vt = traffic_voltran(n, rounds, p.traffic_mb);
      std::printf("%-10s %10.3f %14llu %14.3f %14.3f %14.3f\n", name, p.traffic_mb,
                  static_cast<unsigned long long>(n), fl, vt, vt - fl);
    }
  }
  return 0;
}

void add_config_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "run configuration (JSON)");
  cmd->add_option("--mode", a.mode, "partition strategy")->check(CLI::IsMember({"single", "clientmax", "layermax"}));
  cmd->add_option("--chain", a.chain, "ledger preset")->check(CLI::IsMember({"fabric", "fabric-mod", "tendermint"}));
  cmd->add_flag("--int-mode", a.int_mode, "keep weights on a dyadic grid so sums are exact");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--conf", a.conf, "replay partition layouts from a saved conf");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voltsim: enclave-backed federated aggregation over a simulated ledger"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "execute a task end to end and verify it");
  add_config_options(run_cmd, run_args);
  run_cmd->add_option("--faults", run_args.faults, "fault schedule (JSON)");
  run_cmd->add_option("--report", run_args.report, "write the JSONL report here");
  run_cmd->add_flag("--socket", run_args.socket, "carry every frame over a loopback TCP connection");
  run_cmd->add_flag("--scan-leaks", run_args.scan_leaks, "plant sentinel weights and scan taps, buffers and ledger");
  run_cmd->add_flag("--wall-clock", run_args.wall, "pace the simulation against real time");
  run_cmd->add_option("--save-conf", run_args.save_conf, "write the executed partition layouts");
  run_cmd->add_flag("-q,--quiet", run_args.quiet, "no summary table");

  RunArgs plan_args;
  auto* plan_cmd = app.add_subcommand("plan", "print the partition layouts a configuration produces");
  add_config_options(plan_cmd, plan_args);

  std::uint64_t rounds = 50;
  auto* traffic_cmd = app.add_subcommand("traffic", "print the traffic model table");
  traffic_cmd->add_option("--rounds", rounds, "rounds per task");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(run_args);
    if (*plan_cmd) return plan(plan_args);
    if (*traffic_cmd) return traffic(rounds);
  } catch (const Error& e) {
    std::cerr << "voltsim: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "voltsim: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
