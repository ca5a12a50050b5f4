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

#include "voltsim/wire.hpp"

namespace voltsim::wire {

namespace {

void blob(ByteWriter& w, ByteView b) {
  w.u32(static_cast<std::uint32_t>(b.size()));
  w.raw(b);
}

Bytes blob(ByteReader& r) {
  auto v = r.raw(r.u32());
  return {v.begin(), v.end()};
}

std::string text(ByteReader& r) {
  auto v = r.raw(r.u32());
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

ByteReader reader(ByteView b) { return ByteReader(b, Errc::MalformedFrame); }

template <class T>
T finish(ByteReader& r, T value) {
  r.expect_done();
  return value;
}

}  // namespace

Bytes encode(const SubmitTask& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u64(m.eid);
  blob(w, as_bytes(m.spec_json));
  return std::move(w).take();
}

SubmitTask decode_submit_task(ByteView b) {
  auto r = reader(b);
  SubmitTask m;
  m.taskid = r.str16();
  m.eid = r.u64();
  m.spec_json = text(r);
  return finish(r, m);
}

Bytes encode(const ConfDeliver& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u64(m.round);
  w.u32(m.revision);
  blob(w, as_bytes(m.entry_json));
  return std::move(w).take();
}

ConfDeliver decode_conf_deliver(ByteView b) {
  auto r = reader(b);
  ConfDeliver m;
  m.taskid = r.str16();
  m.round = r.u64();
  m.revision = r.u32();
  m.entry_json = text(r);
  return finish(r, m);
}

Bytes encode(const InstallProg& m) {
  ByteWriter w;
  w.str16(m.taskid);
  blob(w, m.code_id);
  w.str16(m.hook);
  w.u64(m.epc_budget);
  w.u8(m.paging ? 1 : 0);
  w.u64(m.tx_capacity);
  return std::move(w).take();
}

InstallProg decode_install_prog(ByteView b) {
  auto r = reader(b);
  InstallProg m;
  m.taskid = r.str16();
  m.code_id = blob(r);
  m.hook = r.str16();
  m.epc_budget = r.u64();
  m.paging = r.u8() != 0;
  m.tx_capacity = r.u64();
  return finish(r, m);
}

Bytes encode(const InstallAck& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u32(m.node);
  w.u64(m.eid);
  return std::move(w).take();
}

InstallAck decode_install_ack(ByteView b) {
  auto r = reader(b);
  InstallAck m;
  m.taskid = r.str16();
  m.node = r.u32();
  m.eid = r.u64();
  return finish(r, m);
}

Bytes encode(const RaMessage& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u64(m.eid);
  blob(w, m.body);
  return std::move(w).take();
}

RaMessage decode_ra(ByteView b) {
  auto r = reader(b);
  RaMessage m;
  m.taskid = r.str16();
  m.eid = r.u64();
  m.body = blob(r);
  return finish(r, m);
}

Bytes encode(const KeyDeliver& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u8(static_cast<std::uint8_t>(m.purpose));
  w.u64(m.eid);
  blob(w, m.body);
  return std::move(w).take();
}

KeyDeliver decode_key_deliver(ByteView b) {
  auto r = reader(b);
  KeyDeliver m;
  m.taskid = r.str16();
  auto p = r.u8();
  if (p < 1 || p > 3) throw Error(Errc::MalformedFrame, "unknown key purpose");
  m.purpose = static_cast<KeyPurpose>(p);
  m.eid = r.u64();
  m.body = blob(r);
  return finish(r, m);
}

Bytes encode(const RoundDeliver& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u8(static_cast<std::uint8_t>(m.purpose));
  w.u64(m.eid);
  w.u64(m.round);
  w.u32(m.expected_chunks);
  blob(w, m.body);
  return std::move(w).take();
}

RoundDeliver decode_round_deliver(ByteView b) {
  auto r = reader(b);
  RoundDeliver m;
  m.taskid = r.str16();
  auto p = r.u8();
  if (p < 1 || p > 2) throw Error(Errc::MalformedFrame, "unknown round purpose");
  m.purpose = static_cast<RoundPurpose>(p);
  m.eid = r.u64();
  m.round = r.u64();
  m.expected_chunks = r.u32();
  m.body = blob(r);
  return finish(r, m);
}

Bytes encode(const ModelEnvelope& m) {
  ByteWriter w(64 + m.ct_m.ciphertext.size() + m.ct_msk.ciphertext.size());
  w.str16(m.taskid);
  w.u64(m.round);
  w.u64(m.sender.value);
  encode_envelope(w, m.ct_m);
  encode_envelope(w, m.ct_msk);
  return std::move(w).take();
}

ModelEnvelope decode_model_envelope(ByteView b) {
  auto r = reader(b);
  ModelEnvelope m;
  m.taskid = r.str16();
  m.round = r.u64();
  m.sender = ClientId{r.u64()};
  m.ct_m = decode_envelope(r);
  m.ct_msk = decode_envelope(r);
  return finish(r, m);
}

Bytes encode(const SignedChunk& m) {
  auto msg = canonical_message(m);
  ByteWriter w(msg.size() + 2 + m.sigma.bytes.size());
  w.raw(msg);
  w.u16(static_cast<std::uint16_t>(m.sigma.bytes.size()));
  w.raw(m.sigma.bytes);
  return std::move(w).take();
}

SignedChunk decode_chunk_upload(ByteView b) {
  // The signature scheme fixes the trailer length, which delimits the
  // otherwise open-ended ciphertext slice.
  constexpr std::size_t trailer = 2 + kSignatureBytes;
  auto r = reader(b);
  SignedChunk m;
  m.taskid = r.str16();
  m.round = r.u64();
  m.index = r.u32();
  if (r.remaining() < trailer) throw Error(Errc::MalformedFrame, "chunk upload lacks a signature");
  auto ct = r.raw(r.remaining() - trailer);
  m.ct_out.assign(ct.begin(), ct.end());
  if (r.u16() != kSignatureBytes) throw Error(Errc::MalformedFrame, "unexpected signature length");
  auto sig = r.raw(kSignatureBytes);
  m.sigma.bytes.assign(sig.begin(), sig.end());
  return finish(r, m);
}

Bytes encode(const LedgerRead& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.op));
  w.str16(m.taskid);
  w.u64(m.round);
  return std::move(w).take();
}

LedgerRead decode_ledger_read(ByteView b) {
  auto r = reader(b);
  LedgerRead m;
  auto op = r.u8();
  if (op > 1) throw Error(Errc::MalformedFrame, "unknown read op");
  m.op = static_cast<LedgerRead::Op>(op);
  m.taskid = r.str16();
  m.round = r.u64();
  return finish(r, m);
}

Bytes encode(const LedgerReply& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.op));
  w.str16(m.taskid);
  w.u64(m.round);
  w.u8(static_cast<std::uint8_t>(m.status));
  w.u32(m.expected);
  w.u32(static_cast<std::uint32_t>(m.chunks.size()));
  for (const auto& c : m.chunks) {
    w.u32(c.index);
    blob(w, c.ct_out);
    w.u16(static_cast<std::uint16_t>(c.sigma.bytes.size()));
    w.raw(c.sigma.bytes);
  }
  return std::move(w).take();
}

LedgerReply decode_ledger_reply(ByteView b) {
  auto r = reader(b);
  LedgerReply m;
  auto op = r.u8();
  if (op > 1) throw Error(Errc::MalformedFrame, "unknown reply op");
  m.op = static_cast<LedgerReply::Op>(op);
  m.taskid = r.str16();
  m.round = r.u64();
  auto st = r.u8();
  if (st > 2) throw Error(Errc::MalformedFrame, "unknown read status");
  m.status = static_cast<ReadStatus>(st);
  m.expected = r.u32();
  auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    SignedChunk c;
    c.taskid = m.taskid;
    c.round = m.round;
    c.index = r.u32();
    c.ct_out = blob(r);
    auto sig = r.raw(r.u16());
    c.sigma.bytes.assign(sig.begin(), sig.end());
    m.chunks.push_back(std::move(c));
  }
  return finish(r, m);
}

Bytes encode(const LedgerReceipt& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.op));
  w.u8(m.receipt.accepted ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(m.receipt.reason));
  w.str16(m.receipt.id.taskid);
  w.u64(m.receipt.id.round);
  w.u32(m.receipt.id.index);
  return std::move(w).take();
}

LedgerReceipt decode_ledger_receipt(ByteView b) {
  auto r = reader(b);
  LedgerReceipt m;
  auto op = r.u8();
  if (op > 3) throw Error(Errc::MalformedFrame, "unknown receipt op");
  m.op = static_cast<LedgerReceipt::Op>(op);
  m.receipt.accepted = r.u8() != 0;
  auto reason = r.u8();
  if (reason > static_cast<std::uint8_t>(RejectReason::DuplicateTask)) {
    throw Error(Errc::MalformedFrame, "unknown reject reason");
  }
  m.receipt.reason = static_cast<RejectReason>(reason);
  m.receipt.id.taskid = r.str16();
  m.receipt.id.round = r.u64();
  m.receipt.id.index = r.u32();
  return finish(r, m);
}

Bytes encode(const Heartbeat& m) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(m.type));
  w.u32(m.node);
  w.u64(m.seq);
  return std::move(w).take();
}

Heartbeat decode_heartbeat(ByteView b) {
  auto r = reader(b);
  Heartbeat m;
  auto t = r.u8();
  if (t > 2) throw Error(Errc::MalformedFrame, "unknown heartbeat type");
  m.type = static_cast<Heartbeat::Type>(t);
  m.node = r.u32();
  m.seq = r.u64();
  return finish(r, m);
}

Bytes encode(const FailoverCmd& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u8(static_cast<std::uint8_t>(m.op));
  w.u64(m.round);
  w.u32(m.partition);
  w.u32(m.node);
  w.u64(m.eid);
  w.u64(m.client);
  return std::move(w).take();
}

FailoverCmd decode_failover(ByteView b) {
  auto r = reader(b);
  FailoverCmd m;
  m.taskid = r.str16();
  auto op = r.u8();
  if (op < 1 || op > 2) throw Error(Errc::MalformedFrame, "unknown failover op");
  m.op = static_cast<FailoverCmd::Op>(op);
  m.round = r.u64();
  m.partition = r.u32();
  m.node = r.u32();
  m.eid = r.u64();
  m.client = r.u64();
  return finish(r, m);
}

Bytes encode(const ResendRequest& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u64(m.round);
  w.u64(m.eid);
  w.u8(static_cast<std::uint8_t>(m.reason));
  return std::move(w).take();
}

ResendRequest decode_resend(ByteView b) {
  auto r = reader(b);
  ResendRequest m;
  m.taskid = r.str16();
  m.round = r.u64();
  m.eid = r.u64();
  auto reason = r.u8();
  if (reason > 1) throw Error(Errc::MalformedFrame, "unknown resend reason");
  m.reason = static_cast<ResendRequest::Reason>(reason);
  return finish(r, m);
}

Bytes encode(const StragglerReport& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u64(m.round);
  w.u32(m.partition);
  w.u32(m.node);
  w.u32(static_cast<std::uint32_t>(m.missing.size()));
  for (auto c : m.missing) w.u64(c.value);
  return std::move(w).take();
}

StragglerReport decode_straggler(ByteView b) {
  auto r = reader(b);
  StragglerReport m;
  m.taskid = r.str16();
  m.round = r.u64();
  m.partition = r.u32();
  m.node = r.u32();
  auto n = r.u32();
  if (n > r.remaining() / 8) throw Error(Errc::MalformedFrame, "client list overruns payload");
  for (std::uint32_t i = 0; i < n; ++i) m.missing.push_back(ClientId{r.u64()});
  return finish(r, m);
}

Bytes encode(const InitModel& m) {
  ByteWriter w;
  w.str16(m.taskid);
  w.u64(m.round);
  blob(w, m.model);
  return std::move(w).take();
}

InitModel decode_init_model(ByteView b) {
  auto r = reader(b);
  InitModel m;
  m.taskid = r.str16();
  m.round = r.u64();
  m.model = blob(r);
  return finish(r, m);
}

}  // namespace voltsim::wire
