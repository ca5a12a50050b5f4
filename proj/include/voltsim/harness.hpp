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

// Run configuration, whole-task orchestration, fault injection, metrics,
// plaintext oracle and report emission.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voltsim/committee.hpp"

namespace voltsim {

// ---- model presets ---------------------------------------------------------------------

struct ModelPreset {
  std::string name;
  std::uint64_t parameters = 0;
  /// float32 byte size of the parameters as tabulated.
  std::uint64_t size_bytes = 0;
  /// Model size used by the traffic table, MB.
  double traffic_mb = 0;
};

const std::vector<ModelPreset>& model_presets();
/// Case-insensitive. Throws InvalidConfig.
const ModelPreset& find_preset(std::string_view name);
/// Splits the parameters into `layers` equal layers; the last takes the remainder.
ModelMeta preset_meta(const ModelPreset& p, std::uint32_t layers = 8);

// ---- traffic model --------------------------------------------------------------------------

/// 2 * n * rounds * model_mb, exact at three decimals.
double traffic_fl(std::uint64_t n_clients, std::uint64_t rounds, double model_mb);
/// traffic_fl + rounds * model_mb.
double traffic_voltran(std::uint64_t n_clients, std::uint64_t rounds, double model_mb);

// ---- faults ---------------------------------------------------------------------------------------

struct KillEvent {
  NodeId node;
  /// Either a protocol point in a round, or an absolute virtual time.
  std::optional<RoundIndex> round;
  NodePoint point = NodePoint::MidRound;
  std::optional<SimTime> at;
};

struct StragglerSpec {
  ClientId client;
  SimTime lag = 0;
  std::optional<std::uint32_t> max_resends;
};

struct FaultSchedule {
  std::vector<KillEvent> kills;
  std::vector<FaultRule> rules;  // drops, tampers, delays
  std::vector<NodeId> tamper_program;
  std::vector<NodeId> forge_chunks;
  std::vector<StragglerSpec> stragglers;

  bool empty() const {
    return kills.empty() && rules.empty() && tamper_program.empty() && forge_chunks.empty() &&
           stragglers.empty();
  }
};

/// "owner", "committee", "ledger", "client:<n>", "node:<n>".
PartyId parse_party(std::string_view s);
FaultSchedule faults_from_json(const std::string& text);
std::string faults_to_json(const FaultSchedule& f);

// ---- configuration ------------------------------------------------------------------------------

enum class ClockMode { Virtual, Wall };

struct RunConfig {
  TaskId taskid = "task-1";
  std::uint64_t clients = 100;
  double participation = 0.10;
  RoundIndex rounds = 20;
  Strategy strategy = Strategy::SingleSGX;
  Selection selection = Selection::RoundRobin;
  /// Preset name, or empty to use `layers`.
  std::string model;
  std::uint32_t preset_layers = 8;
  std::vector<std::uint64_t> layers = {10};
  std::string hook = "fedavg";

  ChainParams chain = chain_preset("fabric");
  std::uint64_t epc_budget = kDefaultEpcBudget;
  bool paging = false;
  std::uint64_t tx_capacity = 2'000'000;
  std::uint32_t max_cells = 0;
  std::uint32_t nodes = 4;

  std::uint64_t seed = 1;
  bool int_mode = false;
  bool sentinel = false;
  double step = 0.01;

  LinkParams link;
  Timing timing;
  FaultSchedule faults;

  bool socket = false;
  bool scan_leaks = false;
  ClockMode clock = ClockMode::Virtual;
  /// Virtual time allowed before the run is declared stuck.
  SimTime time_limit = 3600 * kSeconds;
  std::optional<Conf> replay;

  ModelMeta meta() const;
  PlanLimits limits() const;
  TaskSpec task_spec() const;
  /// Throws InvalidConfig.
  void validate() const;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& c);

// ---- oracle ----------------------------------------------------------------------------------------

/// Clients whose update the round's layout aggregates into each layer.
std::map<std::uint32_t, std::vector<ClientId>> layer_clients(const ConfEntry& entry);

/// Dataset-weighted mean per layer over that layer's clients. Layers with no
/// clients keep `previous`. Plain loops, no crypto, no ledger.
WeightVector oracle_round(const WeightVector& previous, const std::map<std::uint32_t, std::vector<ClientId>>& cover,
                          const TaskId& taskid, RoundIndex round, std::uint64_t seed,
                          const SynthParams& synth);

// ---- report --------------------------------------------------------------------------------------

inline constexpr std::string_view kPhaseSendModel = "SendModeltoSGX";
inline constexpr std::string_view kPhaseAggregate = "Aggregate";
inline constexpr std::string_view kPhaseSendResult = "SendResulttoChain";

struct PhaseTimes {
  double send_model_ms = 0;
  double aggregate_ms = 0;
  double send_result_ms = 0;
};

struct RoundReport {
  RoundIndex round = 0;
  std::uint32_t revision = 0;
  std::size_t participants = 0;
  std::size_t partitions = 0;
  std::uint32_t chunks = 0;
  PhaseTimes phases;
  bool on_chain = false;
  bool matches_oracle = false;
  double max_abs_error = 0;
  std::string digest;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunReport {
  std::string taskid;
  std::string strategy;
  std::string chain;
  std::uint64_t seed = 0;
  bool int_mode = false;
  std::vector<RoundReport> rounds;
  std::map<std::string, KindStats> traffic;
  std::uint64_t traffic_bytes = 0;
  std::uint64_t ledger_bytes = 0;
  std::uint64_t chunks_accepted = 0;
  std::map<std::string, std::uint64_t> rejections;
  std::vector<RecoveryRecord> recoveries;
  std::map<std::string, std::uint64_t> counters;
  std::uint64_t leaks = 0;
  std::vector<std::string> leak_sites;
  std::vector<CheckResult> checks;
  std::string final_digest;
  double virtual_ms = 0;
  double wall_ms = 0;  // excluded from the digest
  bool stalled = false;
  std::string stall_reason;

  bool passed() const;
  const CheckResult* check(std::string_view name) const;
};

/// One JSON object per line: header, rounds, recoveries, checks, summary.
std::string report_jsonl(const RunReport& r, bool include_wall = true);
std::string report_table(const RunReport& r);
/// SHA-256 over the report without wall-clock fields.
std::string report_digest(const RunReport& r);

// ---- orchestration -------------------------------------------------------------------------------

struct RunResult {
  RunReport report;
  /// Global model decrypted from the ledger after each round.
  std::map<RoundIndex, WeightVector> globals;
  std::map<RoundIndex, WeightVector> oracle;
  WeightVector initial;
  Conf conf;
  Telemetry telemetry;

  // Evidence gathered for verify_report.
  std::optional<WeightVector> owner_final;
  std::map<ClientId, std::map<RoundIndex, WeightVector>> client_views;
  bool verify_key_matches = false;
  std::uint64_t stored_chunks = 0;
  std::uint64_t bad_signatures = 0;
  std::uint64_t expected_chunks = 0;
  std::string assemble_error;
  bool scanned = false;
};

/// Wraps an identity "cipher" around every client envelope. Test fixture for
/// the leak detector; a run using it must fail its confidentiality check.
class LeakyAead final : public Aead {
 public:
  Envelope seal(const SymKey& key, ByteView aad, ByteView plaintext, NonceSource& nonces) const override;
  Bytes open(const SymKey& key, const Envelope& env) const override;
};

struct RunHooks {
  const Aead* client_cipher = nullptr;
};

RunResult run_task(const RunConfig& config, const RunHooks& hooks = {});

/// Replaces `result.report.checks` with the end-to-end checks: completion,
/// on-chain rounds, authenticity, oracle agreement, consistency, lockstep,
/// confidentiality (when scanned) and recovery phases.
void verify_report(RunResult& result, const RunConfig& config);

}  // namespace voltsim
