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

// Protocol state machines for the task owner, clients, execution nodes and
// the ledger service. Each is driven only by the frames it receives and its
// own timers.

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "voltsim/ledger.hpp"
#include "voltsim/schedule.hpp"
#include "voltsim/transport.hpp"
#include "voltsim/wire.hpp"

namespace voltsim {

struct Timing {
  SimTime heartbeat_interval = 500 * kMillis;
  std::uint32_t failover_threshold = 3;
  SimTime ping_timeout = 100 * kMillis;
  SimTime install_cost = 20 * kMillis;
  SimTime schedule_cost = 5 * kMillis;
  SimTime train_cost = 5 * kMillis;
  SimTime straggler_timeout = 2 * kSeconds;
  std::uint32_t straggler_retries = 1;
  SimTime key_exchange_timeout = 1 * kSeconds;
  EnclaveCostModel enclave_cost;
};

// ---- run telemetry -----------------------------------------------------------

struct RoundTimeline {
  SimTime start = -1;               // committee issued the round
  SimTime last_envelope = -1;       // last model envelope reached a node
  SimTime first_chunk_send = -1;
  SimTime last_receipt = -1;        // last accepted chunk committed
  SimTime completed = -1;           // ledger advanced past the round
  std::int64_t aggregate_ns = 0;    // slowest partition's resume
};

struct RecoveryRecord {
  NodeId failed;
  std::optional<NodeId> replacement;
  RoundIndex round = 0;
  std::string cause;
  SimTime detected = -1;
  SimTime rescheduled = -1;
  SimTime connected = -1;

  SimTime reschedule_ns() const { return rescheduled < 0 ? 0 : rescheduled - detected; }
  SimTime connect_ns() const { return connected < 0 ? 0 : connected - rescheduled; }
};

struct TrainEvent {
  ClientId client;
  RoundIndex round = 0;
  SimTime time = 0;
};

/// Instrumentation shared by every role of one run. Not part of the protocol.
struct Telemetry {
  std::map<RoundIndex, RoundTimeline> rounds;
  std::vector<RecoveryRecord> recoveries;
  std::vector<TrainEvent> trains;
  std::map<RoundIndex, ConfEntry> conf;  // latest revision the committee issued
  std::map<std::string, std::uint64_t> counters;
  std::map<std::string, std::uint64_t> rejections;  // by reason
  std::vector<std::string> log;
  std::vector<ClientId> excluded_clients;  // failed key delivery
  bool stalled = false;
  std::string stall_reason;

  void count(const std::string& key, std::uint64_t n = 1) { counters[key] += n; }
  void note(SimTime t, const std::string& line);
  void stall(SimTime t, const std::string& why);
};

/// Observer for node-resident bytes outside any enclave (used by leak scans).
using ResidentObserver = std::function<void(PartyId holder, ByteView bytes)>;

// ---- global model reassembly ----------------------------------------------------------

/// Rebuilds a round's global model from its on-chain chunks. Throws
/// Incomplete when a chunk is missing, AuthFailure when decryption fails.
WeightVector assemble_global(const ConfEntry& entry, std::span<const SignedChunk> chunks,
                             const SymKey& msk, const TaskId& taskid, const WeightVector& previous);

struct RunContext {
  Simulator& sim;
  Network& net;
  Telemetry& telemetry;
  Timing timing;
  ResidentObserver resident;
  /// Cipher clients seal updates with; the default AES-GCM when null.
  const Aead* aead = nullptr;

  const Aead& cipher() const { return aead ? *aead : default_aead(); }
};

// ---- ledger service -----------------------------------------------------------------------

class LedgerService final : public Endpoint {
 public:
  LedgerService(RunContext& ctx, ChainParams params);

  void on_frame(PartyId src, const Frame& frame) override;
  LedgerState& state() { return state_; }
  const ChainParams& params() const { return params_; }
  std::uint64_t blocks() const { return blocks_; }

 private:
  void close_block();
  void receipt(PartyId to, wire::LedgerReceipt::Op op, const Receipt& r);

  RunContext& ctx_;
  ChainParams params_;
  LedgerState state_;
  std::map<TaskId, std::vector<PartyId>> subscribers_;
  std::deque<std::pair<PartyId, SignedChunk>> pending_;
  bool block_open_ = false;
  std::uint64_t blocks_ = 0;
};

// ---- task owner -------------------------------------------------------------------------------

class Owner final : public Endpoint {
 public:
  enum class Phase { Created, KeyExchange, Running, Done };

  Owner(RunContext& ctx, TaskSpec spec, WeightVector m_init, std::uint64_t seed);

  /// owner_initialize: key exchange with clients, then task submission.
  void start();
  void on_frame(PartyId src, const Frame& frame) override;

  Phase phase() const { return phase_; }
  const std::vector<ClientId>& enrolled() const { return enrolled_; }
  const std::optional<WeightVector>& final_model() const { return final_model_; }
  const SymKey& msk() const { return msk_; }
  std::optional<Errc> error() const { return error_; }

 private:
  void finish_key_exchange();
  void submit();

  RunContext& ctx_;
  TaskSpec spec_;
  WeightVector m_init_;
  Rng rng_;
  NonceSource nonces_;
  SymKey msk_;
  Phase phase_ = Phase::Created;
  std::map<ClientId, std::unique_ptr<RaInitiator>> pending_ra_;
  std::vector<ClientId> enrolled_;
  std::map<RoundIndex, ConfEntry> conf_;
  std::map<RoundIndex, WeightVector> globals_;
  std::optional<WeightVector> final_model_;
  std::optional<Errc> error_;
  bool submitted_ = false;
};

// ---- client -------------------------------------------------------------------------------------

struct ClientBehavior {
  SynthParams synth;
  std::uint64_t seed = 0;
  /// Program hash the client requires before it sends an update.
  Measurement expected_measurement{};
  /// Extra delay before this client's envelopes leave (straggling).
  SimTime lag = 0;
  /// Stop answering resend requests after this many (straggler never catches up).
  std::optional<std::uint32_t> max_resends;
};

class Client final : public Endpoint {
 public:
  Client(RunContext& ctx, ClientId uid, ClientBehavior behavior);

  void on_frame(PartyId src, const Frame& frame) override;

  ClientId uid() const { return uid_; }
  RoundIndex round() const { return round_; }
  bool has_msk() const { return msk_.has_value(); }
  const WeightVector& global() const { return m_glob_; }
  /// Global model after each completed round.
  const std::map<RoundIndex, WeightVector>& history() const { return history_; }
  std::size_t envelopes_sent() const { return envelopes_sent_; }
  std::size_t envelope_bytes_sent() const { return envelope_bytes_sent_; }
  /// Simulates an adversary replaying a stale envelope to a node.
  std::optional<wire::ModelEnvelope> last_envelope() const { return last_envelope_; }

 private:
  PartyId self() const { return PartyId::client(uid_); }
  void maybe_train();
  void send_partition(const PlannedPartition& p);
  void ensure_session(const PlannedPartition& p);
  void read_round(RoundIndex r);

  RunContext& ctx_;
  ClientId uid_;
  ClientBehavior behavior_;
  Rng rng_;
  NonceSource nonces_;
  std::optional<SymKey> owner_key_;
  std::optional<SymKey> msk_;
  TaskId taskid_;
  WeightVector m_glob_;
  bool initialized_ = false;
  RoundIndex round_ = 0;
  std::map<RoundIndex, ConfEntry> conf_;
  std::map<RoundIndex, WeightVector> history_;
  std::optional<LocalUpdate> update_;  // cached plaintext for the current round
  std::map<std::uint64_t, SymKey> ssk_by_eid_;
  std::map<std::uint64_t, std::unique_ptr<RaInitiator>> pending_ra_;
  std::set<std::tuple<RoundIndex, std::uint32_t, std::uint64_t>> sent_;
  std::uint32_t resends_ = 0;
  std::size_t envelopes_sent_ = 0;
  std::size_t envelope_bytes_sent_ = 0;
  std::optional<wire::ModelEnvelope> last_envelope_;
  bool ready_ = false;
  bool reading_ = false;
};

// ---- execution node -------------------------------------------------------------------------------

enum class NodePoint { RoundStart, MidRound, AfterUpload };
std::string_view node_point_name(NodePoint p);
NodePoint parse_node_point(std::string_view s);

struct NodeBehavior {
  /// Installs a program whose code differs from the one requested.
  bool tamper_program = false;
  /// Submits altered copies of each chunk ahead of the genuine ones.
  bool forge_chunks = false;
};

class Node final : public Endpoint {
 public:
  using PointObserver = std::function<void(NodeId, NodePoint, RoundIndex)>;

  Node(RunContext& ctx, SgxPlatform& platform, NodeId id, NodeBehavior behavior = {});

  void on_frame(PartyId src, const Frame& frame) override;
  /// Begins heartbeats.
  void start();
  /// Crash-stop: no more frames, timers, or uploads.
  void halt();
  bool halted() const { return halted_; }
  NodeId id() const { return id_; }
  void set_point_observer(PointObserver obs) { observer_ = std::move(obs); }

  const Enclave* enclave() const { return enclave_.get(); }
  /// Node-resident envelope buffers, as raw frame payloads.
  std::vector<Bytes> resident_buffers() const;
  std::uint64_t resumes() const { return resumes_; }

 private:
  PartyId self() const { return PartyId::node(id_); }
  void beat();
  void try_resume(RoundIndex r);
  void arm_straggler_timer(RoundIndex r);
  void on_straggler_timeout(RoundIndex r, std::uint32_t revision);
  void upload(RoundIndex r, std::vector<SignedChunk> chunks);
  const PlannedPartition* my_partition(RoundIndex r) const;

  RunContext& ctx_;
  SgxPlatform& platform_;
  NodeId id_;
  NodeBehavior behavior_;
  PointObserver observer_;
  bool halted_ = false;
  std::uint64_t beat_seq_ = 0;
  std::optional<Simulator::EventId> beat_timer_;
  std::unique_ptr<Enclave> enclave_;
  TaskId taskid_;
  std::map<RoundIndex, ConfEntry> conf_;
  std::map<RoundIndex, std::map<ClientId, std::pair<wire::ModelEnvelope, Bytes>>> inputs_;
  std::set<std::pair<RoundIndex, std::uint32_t>> processed_;
  std::map<RoundIndex, std::uint32_t> retries_;
  std::map<RoundIndex, std::optional<Simulator::EventId>> straggler_timer_;
  std::set<RoundIndex> started_;
  std::uint64_t resumes_ = 0;
};

}  // namespace voltsim
