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

#include "voltsim/ledger.hpp"

#include <mutex>

namespace voltsim {

ChainParams chain_preset(const std::string& name) {
  if (name == "fabric") return {"fabric", 2000, 2'000'000, 30};
  // Shorter interval, block size raised to 60 MB (30 transactions of 2 MB).
  if (name == "fabric-mod") return {"fabric-mod", 1000, 2'000'000, 30};
  if (name == "tendermint") return {"tendermint", 1000, 2'000'000, 0};
  throw Error(Errc::InvalidConfig, "unknown chain preset '" + name + "'");
}

std::uint64_t transactions_for(std::uint64_t bytes_written, const ChainParams& params) {
  return (bytes_written + params.tx_capacity_bytes - 1) / params.tx_capacity_bytes;
}

std::uint64_t blocks_for(std::uint64_t transactions, const ChainParams& params) {
  if (transactions == 0) return 0;
  if (params.txs_per_block == 0) return 1;
  return (transactions + params.txs_per_block - 1) / params.txs_per_block;
}

std::int64_t apply_chain_model(std::uint64_t bytes_written, const ChainParams& params) {
  auto blocks = blocks_for(transactions_for(bytes_written, params), params);
  return static_cast<std::int64_t>(blocks) * params.block_interval_ms;
}

std::string_view reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "None";
    case RejectReason::BadSignature: return "BadSignature";
    case RejectReason::WrongRound: return "WrongRound";
    case RejectReason::DuplicateIndex: return "DuplicateIndex";
    case RejectReason::UnknownTask: return "UnknownTask";
    case RejectReason::NoKey: return "NoKey";
    case RejectReason::IndexOutOfRange: return "IndexOutOfRange";
    case RejectReason::Unauthorized: return "Unauthorized";
    case RejectReason::DuplicateTask: return "DuplicateTask";
  }
  return "Unknown";
}

void LedgerState::create_task(std::uint64_t eid, const TaskId& taskid) {
  std::unique_lock lock(mu_);
  if (tasks_.count(taskid)) throw Error(Errc::DuplicateTask, "task '" + taskid + "' exists");
  tasks_[taskid].eid = eid;
}

Receipt LedgerState::upload_pk(PartyId sender, const TaskId& taskid, const VerifyKey& vk) {
  std::unique_lock lock(mu_);
  Receipt r{false, {taskid, 0, 0}, RejectReason::None};
  auto it = tasks_.find(taskid);
  if (it == tasks_.end()) {
    r.reason = RejectReason::UnknownTask;
    return r;
  }
  if (sender != committee_) {
    r.reason = RejectReason::Unauthorized;
    return r;
  }
  bool rotation = it->second.vk.has_value();
  it->second.vk = vk;
  events_.push_back({"key", taskid, rotation ? "rotated" : "registered"});
  r.accepted = true;
  return r;
}

Receipt LedgerState::declare_round(PartyId sender, const TaskId& taskid, RoundIndex round,
                                   std::uint32_t expected_chunks) {
  std::unique_lock lock(mu_);
  Receipt r{false, {taskid, round, 0}, RejectReason::None};
  auto it = tasks_.find(taskid);
  if (it == tasks_.end()) {
    r.reason = RejectReason::UnknownTask;
    return r;
  }
  if (sender != committee_) {
    r.reason = RejectReason::Unauthorized;
    return r;
  }
  auto& rec = it->second.rounds[round];
  if (round < it->second.round || (rec.expected && *rec.expected != expected_chunks && !rec.chunks.empty())) {
    r.reason = RejectReason::WrongRound;
    return r;
  }
  rec.expected = expected_chunks;
  events_.push_back({"round", taskid, "round " + std::to_string(round) + " expects " +
                                          std::to_string(expected_chunks) + " chunks"});
  r.accepted = true;
  return r;
}

Receipt LedgerState::upload_global_model(PartyId sender, const SignedChunk& chunk) {
  (void)sender;  // any party may submit; authority comes from the signature
  std::unique_lock lock(mu_);
  Receipt r{false, {chunk.taskid, chunk.round, chunk.index}, RejectReason::None};
  auto it = tasks_.find(chunk.taskid);
  if (it == tasks_.end()) {
    r.reason = RejectReason::UnknownTask;
    return r;
  }
  auto& task = it->second;
  if (!task.vk) {
    r.reason = RejectReason::NoKey;
    return r;
  }
  if (chunk.round != task.round) {
    r.reason = RejectReason::WrongRound;
    return r;
  }
  if (!sig_verify(*task.vk, canonical_message(chunk), chunk.sigma)) {
    r.reason = RejectReason::BadSignature;
    return r;
  }
  auto& rec = task.rounds[chunk.round];
  if (!rec.expected || chunk.index >= *rec.expected) {
    r.reason = RejectReason::IndexOutOfRange;
    return r;
  }
  if (rec.chunks.count(chunk.index)) {
    r.reason = RejectReason::DuplicateIndex;
    return r;
  }
  rec.chunks.emplace(chunk.index, chunk);
  r.accepted = true;
  advance_locked(task);
  return r;
}

void LedgerState::advance_locked(TaskRecord& t) {
  for (;;) {
    auto it = t.rounds.find(t.round);
    if (it == t.rounds.end() || !it->second.expected ||
        it->second.chunks.size() < *it->second.expected) {
      return;
    }
    ++t.round;
  }
}

ReadResult LedgerState::read(const TaskId& taskid, RoundIndex round) const {
  std::shared_lock lock(mu_);
  ReadResult out;
  auto it = tasks_.find(taskid);
  if (it == tasks_.end()) return out;
  auto rit = it->second.rounds.find(round);
  if (rit == it->second.rounds.end() || rit->second.chunks.empty()) return out;
  const auto& rec = rit->second;
  out.expected = rec.expected.value_or(0);
  for (const auto& [index, c] : rec.chunks) out.present.push_back(index);
  if (!rec.expected || rec.chunks.size() < *rec.expected) {
    out.status = ReadStatus::Incomplete;
    return out;
  }
  out.status = ReadStatus::Complete;
  for (const auto& [index, c] : rec.chunks) out.chunks.push_back(c);
  return out;
}

bool LedgerState::has_task(const TaskId& taskid) const {
  std::shared_lock lock(mu_);
  return tasks_.count(taskid) != 0;
}

std::optional<RoundIndex> LedgerState::current_round(const TaskId& taskid) const {
  std::shared_lock lock(mu_);
  auto it = tasks_.find(taskid);
  if (it == tasks_.end()) return std::nullopt;
  return it->second.round;
}

std::optional<VerifyKey> LedgerState::verify_key(const TaskId& taskid) const {
  std::shared_lock lock(mu_);
  auto it = tasks_.find(taskid);
  if (it == tasks_.end()) return std::nullopt;
  return it->second.vk;
}

std::size_t LedgerState::stored_chunks() const {
  std::shared_lock lock(mu_);
  std::size_t n = 0;
  for (const auto& [id, t] : tasks_)
    for (const auto& [r, rec] : t.rounds) n += rec.chunks.size();
  return n;
}

std::uint64_t LedgerState::stored_bytes() const {
  std::shared_lock lock(mu_);
  std::uint64_t n = 0;
  for (const auto& [id, t] : tasks_)
    for (const auto& [r, rec] : t.rounds)
      for (const auto& [i, c] : rec.chunks) n += c.ct_out.size();
  return n;
}

std::vector<LedgerEvent> LedgerState::events() const {
  std::shared_lock lock(mu_);
  return events_;
}

std::vector<Bytes> LedgerState::stored_payloads() const {
  std::shared_lock lock(mu_);
  std::vector<Bytes> out;
  for (const auto& [id, t] : tasks_)
    for (const auto& [r, rec] : t.rounds)
      for (const auto& [i, c] : rec.chunks) out.push_back(canonical_message(c));
  return out;
}

void LedgerState::reward(const TaskId& taskid, const std::string& who) {
  std::unique_lock lock(mu_);
  events_.push_back({"reward", taskid, who});
}

void LedgerState::penalize(const TaskId& taskid, const std::string& who) {
  std::unique_lock lock(mu_);
  events_.push_back({"penalty", taskid, who});
}

}  // namespace voltsim
