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

// Simulated enclaves: install, attest, provision, and resume. Key material
// lives only in private members of Enclave; the hosting node sees envelopes
// and signed chunks.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "voltsim/crypto.hpp"
#include "voltsim/model.hpp"

namespace voltsim {

inline constexpr std::uint64_t kMiB = 1024ull * 1024ull;
inline constexpr std::uint64_t kDefaultEpcBudget = 128 * kMiB;

// ---- program -------------------------------------------------------------

using AggregationHook =
    std::function<PartialAggregate(std::span<const LocalUpdate>, std::span<const std::uint32_t>)>;

/// Hooks are looked up by name; "fedavg" is always present.
void register_aggregation_hook(const std::string& name, AggregationHook hook);
const AggregationHook& find_aggregation_hook(const std::string& name);

struct EnclaveProgram {
  Bytes code_id;
  Measurement measurement{};
  std::string hook = "fedavg";

  static EnclaveProgram compile(Bytes code_id, std::string hook = "fedavg");
};

// ---- partition layout ---------------------------------------------------------

struct Segment {
  std::uint32_t layer = 0;
  std::vector<ClientId> clients;  // ascending

  bool operator==(const Segment&) const = default;
};

/// One serial unit of work inside an enclave; its inputs are resident together.
struct Step {
  std::vector<Segment> segments;

  bool operator==(const Step&) const = default;
};

/// What one enclave aggregates in one round. Sent to the enclave under the
/// committee session key, so a host cannot move cells or indices around.
struct PartitionDescriptor {
  std::uint32_t partition = 0;
  std::uint32_t revision = 0;
  ChunkIndex chunk_base = 0;
  std::uint32_t chunk_count = 0;
  std::vector<Step> steps;
  std::vector<std::uint32_t> normalized_layers;  // layers this partition covers alone

  std::vector<ClientId> clients() const;
  std::vector<std::uint32_t> layers() const;
  /// Layers `c` contributes to this partition, ascending.
  std::vector<std::uint32_t> layers_of(ClientId c) const;
  std::size_t cell_count() const;
  bool operator==(const PartitionDescriptor&) const = default;
};

Bytes encode_descriptor(const PartitionDescriptor& d);
PartitionDescriptor decode_descriptor(ByteReader& in);

// ---- memory / cost estimates -------------------------------------------------

/// Per-update header allowance: fixed fields plus the longest accepted taskid.
inline constexpr std::uint64_t kUpdateHeaderBytes = kModelFixedHeader + kMaxTaskIdBytes;

/// Decrypted bytes n_clients full or partial updates occupy inside an enclave.
std::uint64_t estimate_enclave_bytes(std::uint64_t n_clients, std::span<const std::uint32_t> layers,
                                     const ModelMeta& meta);
/// Same, for a step whose clients contribute different layer sets.
std::uint64_t estimate_step_bytes(const Step& step, const ModelMeta& meta);
std::uint64_t cell_bytes(std::uint32_t layer, const ModelMeta& meta);

struct EnclaveCostModel {
  double compute_ns_per_byte = 1.0;
  double paging_ns_per_byte = 20.0;

  /// Virtual time of a resume whose steps held `step_bytes` each.
  std::int64_t resume_ns(std::span<const std::uint64_t> step_bytes, std::uint64_t epc_budget,
                         bool paging) const;
};

// ---- output --------------------------------------------------------------------

struct ShardEntry {
  std::uint32_t layer = 0;
  std::uint64_t weight_sum = 0;
  bool normalized = false;
  std::vector<double> values;

  bool operator==(const ShardEntry&) const = default;
};

Bytes encode_shard(std::span<const ShardEntry> entries);
std::vector<ShardEntry> decode_shard(ByteView data);
/// Plaintext bytes of the shard a descriptor produces; fixed by its layers.
std::size_t shard_size(const PartitionDescriptor& d, const ModelMeta& meta);
Bytes output_aad(const TaskId& taskid, RoundIndex round, std::uint32_t partition);
/// Number of chunks a partition's output occupies on chain.
std::uint32_t chunk_count_for(const PartitionDescriptor& d, const TaskId& taskid,
                              const ModelMeta& meta, std::uint64_t tx_capacity);

struct SignedChunk {
  TaskId taskid;
  RoundIndex round = 0;
  ChunkIndex index = 0;
  Bytes ct_out;  // slice of the encoded output envelope
  Signature sigma;

  bool operator==(const SignedChunk&) const = default;
};

/// taskid (u16-prefixed) || round (u64 BE) || index (u32 BE) || ct_out
Bytes canonical_message(const TaskId& taskid, RoundIndex round, ChunkIndex index, ByteView ct_out);
inline Bytes canonical_message(const SignedChunk& c) {
  return canonical_message(c.taskid, c.round, c.index, c.ct_out);
}

struct EnclaveOutput {
  std::vector<SignedChunk> chunks;
  std::vector<std::uint64_t> step_bytes;  // decrypted bytes resident per step
};

// ---- envelopes addressed to an enclave ---------------------------------------------

/// taskid || round || sender, the context every model envelope is bound to.
Bytes model_aad(const TaskId& taskid, RoundIndex round, ClientId sender);
struct ModelAad {
  TaskId taskid;
  RoundIndex round = 0;
  ClientId sender;
};
/// Throws AuthFailure if the aad is not a model aad.
ModelAad parse_model_aad(ByteView aad);

Bytes sk_aad(const TaskId& taskid);
Bytes round_aad(const TaskId& taskid);
Bytes encode_round_payload(const TaskId& taskid, RoundIndex round, const PartitionDescriptor& d);

struct EnclaveInput {
  Envelope ct_m;
  Envelope ct_msk;
  ClientId sender;
};

/// A batch-level rejection that names the client responsible.
class InputRejected : public Error {
 public:
  InputRejected(Errc code, ClientId offender, const std::string& what)
      : Error(code, "client " + std::to_string(offender.value) + ": " + what), offender_(offender) {}
  ClientId offender() const { return offender_; }

 private:
  ClientId offender_;
};

struct EnclaveConfig {
  std::uint64_t epc_budget = kDefaultEpcBudget;
  bool paging = false;
  std::uint64_t tx_capacity = 2'000'000;
};

class Enclave {
 public:
  Enclave(EnclaveId eid, TaskId taskid, EnclaveProgram program, EnclaveConfig config,
          std::uint64_t seed);

  EnclaveId eid() const { return eid_; }
  const TaskId& taskid() const { return taskid_; }
  const Measurement& measurement() const { return program_.measurement; }
  const EnclaveConfig& config() const { return config_; }

  /// Responder half of attestation; stores the session key for the initiator.
  RaReply attest(const RaHello& hello);
  bool has_session(PartyId peer) const;

  /// Installs sk_vk from an envelope under the committee session key.
  void getsk(const Envelope& enc_sk);
  bool can_sign() const { return signing_key_.has_value(); }
  std::optional<VerifyKey> verify_key() const;

  /// Sets the expected round and this round's partition layout.
  void set_round(const Envelope& enc_round);
  std::optional<RoundIndex> expected_round() const;
  const std::optional<PartitionDescriptor>& descriptor() const { return descriptor_; }

  EnclaveOutput resume(std::span<const EnclaveInput> inputs);

  /// Resumes completed so far.
  RoundIndex round_counter() const { return round_counter_; }
  std::uint64_t memory_used() const { return memory_used_; }
  std::uint64_t peak_memory() const { return peak_memory_; }

 private:
  const SymKey& session_for(PartyId peer, ClientId offender) const;

  EnclaveId eid_;
  TaskId taskid_;
  EnclaveProgram program_;
  EnclaveConfig config_;
  Rng rng_;
  NonceSource nonces_;
  std::unordered_map<std::uint64_t, SymKey> ssk_by_peer_;
  std::optional<SigningKey> signing_key_;
  std::optional<RoundIndex> round_;
  std::optional<PartitionDescriptor> descriptor_;
  std::optional<std::pair<RoundIndex, std::uint32_t>> last_completed_;
  RoundIndex round_counter_ = 0;
  std::uint64_t memory_used_ = 0;
  std::uint64_t peak_memory_ = 0;
};

/// The ideal install functionality: hands out run-unique enclave ids.
class SgxPlatform {
 public:
  explicit SgxPlatform(std::uint64_t seed) : seed_(seed) {}

  std::unique_ptr<Enclave> install(const TaskId& taskid, const EnclaveProgram& program,
                                   const EnclaveConfig& config);
  std::uint64_t installed() const { return next_; }

 private:
  std::uint64_t seed_;
  std::uint64_t next_ = 0;
};

// ---- reassembly on the reading side ---------------------------------------------

struct PartitionOutput {
  PartitionDescriptor descriptor;
  std::vector<ShardEntry> entries;
};

/// Merges decrypted partition shards into a global model. Layers with no
/// contributing client keep the value from `previous`.
WeightVector merge_shards(std::span<const PartitionOutput> outputs, const WeightVector& previous);

}  // namespace voltsim
