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

// Append-only task storage with a signature-checking write predicate, and the
// block latency model that stands in for a real chain.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "voltsim/enclave.hpp"

namespace voltsim {

struct ChainParams {
  std::string name = "fabric";
  std::int64_t block_interval_ms = 2000;
  std::uint64_t tx_capacity_bytes = 2'000'000;
  /// 0 means unbounded.
  std::uint64_t txs_per_block = 30;
};

/// "fabric", "fabric-mod", "tendermint". Throws InvalidConfig otherwise.
ChainParams chain_preset(const std::string& name);

/// Latency of committing `bytes` split into transactions of tx_capacity.
std::int64_t apply_chain_model(std::uint64_t bytes_written, const ChainParams& params);
std::uint64_t transactions_for(std::uint64_t bytes_written, const ChainParams& params);
std::uint64_t blocks_for(std::uint64_t transactions, const ChainParams& params);

enum class RejectReason : std::uint8_t {
  None = 0,
  BadSignature,
  WrongRound,
  DuplicateIndex,
  UnknownTask,
  NoKey,
  IndexOutOfRange,
  Unauthorized,
  DuplicateTask,
};

std::string_view reason_name(RejectReason r);

struct ChunkId {
  TaskId taskid;
  RoundIndex round = 0;
  ChunkIndex index = 0;
};

struct Receipt {
  bool accepted = false;
  ChunkId id;
  RejectReason reason = RejectReason::None;
};

enum class ReadStatus : std::uint8_t { Complete = 0, Incomplete = 1, NotFound = 2 };

struct ReadResult {
  ReadStatus status = ReadStatus::NotFound;
  std::vector<SignedChunk> chunks;           // ordered by index
  std::vector<ChunkIndex> present;           // indices stored so far
  std::uint32_t expected = 0;
};

struct LedgerEvent {
  std::string kind;  // reward / penalty / key / round
  TaskId taskid;
  std::string detail;
};

/// Contract state. Mutations take an exclusive lock, reads a shared one.
class LedgerState {
 public:
  explicit LedgerState(PartyId committee = PartyId::committee()) : committee_(committee) {}

  /// Throws DuplicateTask.
  void create_task(std::uint64_t eid, const TaskId& taskid);
  Receipt upload_pk(PartyId sender, const TaskId& taskid, const VerifyKey& vk);
  /// Committee declares how many chunks round `round` will hold.
  Receipt declare_round(PartyId sender, const TaskId& taskid, RoundIndex round,
                        std::uint32_t expected_chunks);
  Receipt upload_global_model(PartyId sender, const SignedChunk& chunk);
  ReadResult read(const TaskId& taskid, RoundIndex round) const;

  bool has_task(const TaskId& taskid) const;
  std::optional<RoundIndex> current_round(const TaskId& taskid) const;
  std::optional<VerifyKey> verify_key(const TaskId& taskid) const;
  std::size_t stored_chunks() const;
  std::uint64_t stored_bytes() const;
  std::vector<LedgerEvent> events() const;
  /// Every stored ciphertext slice, for leak scanning.
  std::vector<Bytes> stored_payloads() const;
  /// Hook points for incentives. They only log.
  void reward(const TaskId& taskid, const std::string& who);
  void penalize(const TaskId& taskid, const std::string& who);

 private:
  struct RoundRecord {
    std::optional<std::uint32_t> expected;
    std::map<ChunkIndex, SignedChunk> chunks;
  };
  struct TaskRecord {
    std::uint64_t eid = 0;
    std::optional<VerifyKey> vk;
    RoundIndex round = 0;
    std::map<RoundIndex, RoundRecord> rounds;
  };

  void advance_locked(TaskRecord& t);

  PartyId committee_;
  mutable std::shared_mutex mu_;
  std::map<TaskId, TaskRecord> tasks_;
  std::vector<LedgerEvent> events_;
};

}  // namespace voltsim
