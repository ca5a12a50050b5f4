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

// Payload schemas, one per message kind. All integers big-endian; byte
// fields carry a u32 length unless noted. Decoders throw MalformedFrame.

#pragma once

#include <string>
#include <vector>

#include "voltsim/enclave.hpp"
#include "voltsim/ledger.hpp"

namespace voltsim::wire {

// SubmitTask: taskid, eid (u64), spec document (JSON text)
struct SubmitTask {
  TaskId taskid;
  std::uint64_t eid = 0;
  std::string spec_json;
};

// ConfDeliver: taskid, round, revision (u32), conf entry (JSON text)
struct ConfDeliver {
  TaskId taskid;
  RoundIndex round = 0;
  std::uint32_t revision = 0;
  std::string entry_json;
};

// InstallProg: taskid, code_id, hook (u16 str), epc_budget, paging (u8), tx_capacity
struct InstallProg {
  TaskId taskid;
  Bytes code_id;
  std::string hook;
  std::uint64_t epc_budget = 0;
  bool paging = false;
  std::uint64_t tx_capacity = 0;
};

// InstallAck: taskid, node (u32), eid (u64)
struct InstallAck {
  TaskId taskid;
  std::uint32_t node = 0;
  std::uint64_t eid = 0;
};

// RaHandshake1 / RaHandshake2: taskid, eid (0 between owner and client), body
struct RaMessage {
  TaskId taskid;
  std::uint64_t eid = 0;
  Bytes body;  // encoded RaHello or RaReply
};

enum class KeyPurpose : std::uint8_t { SigningKey = 1, MasterKey = 2, VerifyKey = 3 };

// KeyDeliver: taskid, purpose (u8), eid, body (envelope bytes or public point)
struct KeyDeliver {
  TaskId taskid;
  KeyPurpose purpose = KeyPurpose::SigningKey;
  std::uint64_t eid = 0;
  Bytes body;
};

enum class RoundPurpose : std::uint8_t { Enclave = 1, Declare = 2 };

// RoundDeliver: taskid, purpose (u8), eid, round, expected chunks (u32), body
struct RoundDeliver {
  TaskId taskid;
  RoundPurpose purpose = RoundPurpose::Enclave;
  std::uint64_t eid = 0;
  RoundIndex round = 0;
  std::uint32_t expected_chunks = 0;
  Bytes body;  // envelope under the committee session key
};

// ModelEnvelope: taskid (u16 str), round, sender, envelope(ct_m), envelope(ct_msk)
struct ModelEnvelope {
  TaskId taskid;
  RoundIndex round = 0;
  ClientId sender;
  Envelope ct_m;
  Envelope ct_msk;
};

// ChunkUpload: canonical signed message || signature length (u16) || signature
// LedgerRead: op (u8), taskid, round
struct LedgerRead {
  enum class Op : std::uint8_t { Read = 0, Subscribe = 1 };
  Op op = Op::Read;
  TaskId taskid;
  RoundIndex round = 0;
};

// LedgerReply: op (u8), taskid, round, status (u8), expected (u32), chunk count (u32),
// then per chunk: index (u32), ct_out, signature (u16 length)
struct LedgerReply {
  enum class Op : std::uint8_t { ReadResult = 0, RoundComplete = 1 };
  Op op = Op::ReadResult;
  TaskId taskid;
  RoundIndex round = 0;
  ReadStatus status = ReadStatus::NotFound;
  std::uint32_t expected = 0;
  std::vector<SignedChunk> chunks;
};

// LedgerReceipt: op (u8), accepted (u8), reason (u8), taskid, round, index (u32)
struct LedgerReceipt {
  enum class Op : std::uint8_t { CreateTask = 0, UploadPk = 1, Declare = 2, Chunk = 3 };
  Op op = Op::Chunk;
  Receipt receipt;
};

// Heartbeat: type (u8), node (u32), sequence (u64)
struct Heartbeat {
  enum class Type : std::uint8_t { Ping = 0, Pong = 1, Beat = 2 };
  Type type = Type::Beat;
  std::uint32_t node = 0;
  std::uint64_t seq = 0;
};

// FailoverCmd: taskid, op (u8), round, partition (u32), node (u32), eid, client
struct FailoverCmd {
  enum class Op : std::uint8_t { Reattest = 1, Exclude = 2 };
  Op op = Op::Reattest;
  TaskId taskid;
  RoundIndex round = 0;
  std::uint32_t partition = 0;
  std::uint32_t node = 0;
  std::uint64_t eid = 0;
  std::uint64_t client = 0;
};

// ResendRequest: taskid, round, eid, reason (u8)
struct ResendRequest {
  enum class Reason : std::uint8_t { Timeout = 0, AuthFailure = 1 };
  TaskId taskid;
  RoundIndex round = 0;
  std::uint64_t eid = 0;
  Reason reason = Reason::Timeout;
};

// StragglerReport: taskid, round, partition (u32), node (u32), count (u32), clients (u64 each)
struct StragglerReport {
  TaskId taskid;
  RoundIndex round = 0;
  std::uint32_t partition = 0;
  std::uint32_t node = 0;
  std::vector<ClientId> missing;
};

// InitModel: taskid, round, model bytes (canonical model layout)
struct InitModel {
  TaskId taskid;
  RoundIndex round = 0;
  Bytes model;
};

Bytes encode(const SubmitTask& m);
Bytes encode(const ConfDeliver& m);
Bytes encode(const InstallProg& m);
Bytes encode(const InstallAck& m);
Bytes encode(const RaMessage& m);
Bytes encode(const KeyDeliver& m);
Bytes encode(const RoundDeliver& m);
Bytes encode(const ModelEnvelope& m);
Bytes encode(const SignedChunk& m);  // ChunkUpload
Bytes encode(const LedgerRead& m);
Bytes encode(const LedgerReply& m);
Bytes encode(const LedgerReceipt& m);
Bytes encode(const Heartbeat& m);
Bytes encode(const FailoverCmd& m);
Bytes encode(const ResendRequest& m);
Bytes encode(const StragglerReport& m);
Bytes encode(const InitModel& m);

SubmitTask decode_submit_task(ByteView b);
ConfDeliver decode_conf_deliver(ByteView b);
InstallProg decode_install_prog(ByteView b);
InstallAck decode_install_ack(ByteView b);
RaMessage decode_ra(ByteView b);
KeyDeliver decode_key_deliver(ByteView b);
RoundDeliver decode_round_deliver(ByteView b);
ModelEnvelope decode_model_envelope(ByteView b);
SignedChunk decode_chunk_upload(ByteView b);
LedgerRead decode_ledger_read(ByteView b);
LedgerReply decode_ledger_reply(ByteView b);
LedgerReceipt decode_ledger_receipt(ByteView b);
Heartbeat decode_heartbeat(ByteView b);
FailoverCmd decode_failover(ByteView b);
ResendRequest decode_resend(ByteView b);
StragglerReport decode_straggler(ByteView b);
InitModel decode_init_model(ByteView b);

}  // namespace voltsim::wire
