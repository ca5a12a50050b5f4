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

#include "voltsim/roles.hpp"

#include <algorithm>
#include <cstdio>

namespace voltsim {

namespace {

Bytes msk_aad(const TaskId& taskid, ClientId client) {
  ByteWriter w;
  w.raw(as_bytes("msk"));
  w.str16(taskid);
  w.u64(client.value);
  return std::move(w).take();
}

template <class Msg>
void send(RunContext& ctx, PartyId src, PartyId dst, MessageKind kind, const Msg& msg) {
  ctx.net.send(src, dst, kind, wire::encode(msg));
}

}  // namespace

void Telemetry::note(SimTime t, const std::string& line) {
  char stamp[32];
  std::snprintf(stamp, sizeof stamp, "[%10.3f ms] ", to_ms(t));
  log.push_back(stamp + line);
}

void Telemetry::stall(SimTime t, const std::string& why) {
  if (!stalled) {
    stalled = true;
    stall_reason = why;
  }
  note(t, "stalled: " + why);
}

WeightVector assemble_global(const ConfEntry& entry, std::span<const SignedChunk> chunks,
                             const SymKey& msk, const TaskId& taskid, const WeightVector& previous) {
  std::map<ChunkIndex, const SignedChunk*> by_index;
  for (const auto& c : chunks) by_index[c.index] = &c;
  std::vector<PartitionOutput> outputs;
  for (const auto& p : entry.partitions) {
    Bytes env;
    for (std::uint32_t i = 0; i < p.desc.chunk_count; ++i) {
      auto it = by_index.find(p.desc.chunk_base + i);
      if (it == by_index.end()) {
        throw Error(Errc::Incomplete, "chunk " + std::to_string(p.desc.chunk_base + i) + " missing");
      }
      env.insert(env.end(), it->second->ct_out.begin(), it->second->ct_out.end());
    }
    Envelope e;
    try {
      e = decode_envelope(env);
    } catch (const Error& err) {
      throw Error(Errc::AuthFailure, std::string("output envelope unreadable: ") + err.what());
    }
    if (e.aad != output_aad(taskid, entry.round, p.desc.partition)) {
      throw Error(Errc::AuthFailure, "output bound to another partition or round");
    }
    outputs.push_back({p.desc, decode_shard(ae_decrypt(msk, e))});
  }
  return merge_shards(outputs, previous);
}

// ---- ledger service -------------------------------------------------------------------------------

LedgerService::LedgerService(RunContext& ctx, ChainParams params)
    : ctx_(ctx), params_(std::move(params)) {}

void LedgerService::receipt(PartyId to, wire::LedgerReceipt::Op op, const Receipt& r) {
  send(ctx_, PartyId::ledger(), to, MessageKind::LedgerReceipt, wire::LedgerReceipt{op, r});
}

void LedgerService::on_frame(PartyId src, const Frame& frame) {
  using wire::LedgerReceipt;
  try {
    switch (frame.kind) {
      case MessageKind::SubmitTask: {
        auto m = wire::decode_submit_task(frame.payload);
        Receipt r{true, {m.taskid, 0, 0}, RejectReason::None};
        try {
          state_.create_task(m.eid, m.taskid);
        } catch (const Error& e) {
          r.accepted = false;
          r.reason = RejectReason::DuplicateTask;
        }
        receipt(src, LedgerReceipt::Op::CreateTask, r);
        return;
      }
      case MessageKind::KeyDeliver: {
        auto m = wire::decode_key_deliver(frame.payload);
        if (m.purpose != wire::KeyPurpose::VerifyKey) return;
        receipt(src, LedgerReceipt::Op::UploadPk, state_.upload_pk(src, m.taskid, VerifyKey{m.body}));
        return;
      }
      case MessageKind::RoundDeliver: {
        auto m = wire::decode_round_deliver(frame.payload);
        if (m.purpose != wire::RoundPurpose::Declare) return;
        receipt(src, LedgerReceipt::Op::Declare,
                state_.declare_round(src, m.taskid, m.round, m.expected_chunks));
        return;
      }
      case MessageKind::ChunkUpload: {
        pending_.emplace_back(src, wire::decode_chunk_upload(frame.payload));
        if (!block_open_) {
          block_open_ = true;
          ctx_.sim.after(params_.block_interval_ms * kMillis, [this] { close_block(); });
        }
        return;
      }
      case MessageKind::LedgerRead: {
        auto m = wire::decode_ledger_read(frame.payload);
        if (m.op == wire::LedgerRead::Op::Subscribe) {
          auto& subs = subscribers_[m.taskid];
          if (std::find(subs.begin(), subs.end(), src) == subs.end()) subs.push_back(src);
          return;
        }
        auto res = state_.read(m.taskid, m.round);
        wire::LedgerReply reply{wire::LedgerReply::Op::ReadResult, m.taskid, m.round, res.status,
                                res.expected, std::move(res.chunks)};
        send(ctx_, PartyId::ledger(), src, MessageKind::LedgerReply, reply);
        return;
      }
      default:
        return;
    }
  } catch (const Error& e) {
    ctx_.telemetry.count("ledger_malformed");
    ctx_.telemetry.note(ctx_.sim.now(), std::string("ledger dropped frame: ") + e.what());
  }
}

void LedgerService::close_block() {
  ++blocks_;
  block_open_ = false;
  std::size_t n = pending_.size();
  if (params_.txs_per_block != 0) n = std::min<std::size_t>(n, params_.txs_per_block);
  auto& tel = ctx_.telemetry;
  for (std::size_t i = 0; i < n; ++i) {
    auto [src, chunk] = std::move(pending_.front());
    pending_.pop_front();
    auto before = state_.current_round(chunk.taskid);
    auto r = state_.upload_global_model(src, chunk);
    receipt(src, wire::LedgerReceipt::Op::Chunk, r);
    if (r.accepted) {
      tel.count("chunks_accepted");
      tel.rounds[chunk.round].last_receipt = ctx_.sim.now();
    } else {
      tel.rejections[std::string(reason_name(r.reason))]++;
    }
    auto after = state_.current_round(chunk.taskid);
    if (before && after && *after > *before) {
      for (RoundIndex done = *before; done < *after; ++done) {
        tel.rounds[done].completed = ctx_.sim.now();
        wire::LedgerReply note{wire::LedgerReply::Op::RoundComplete, chunk.taskid, done,
                               ReadStatus::Complete, 0, {}};
        for (auto sub : subscribers_[chunk.taskid]) {
          send(ctx_, PartyId::ledger(), sub, MessageKind::LedgerReply, note);
        }
      }
    }
  }
  if (!pending_.empty()) {
    block_open_ = true;
    ctx_.sim.after(params_.block_interval_ms * kMillis, [this] { close_block(); });
  }
}

// ---- owner --------------------------------------------------------------------------------------

Owner::Owner(RunContext& ctx, TaskSpec spec, WeightVector m_init, std::uint64_t seed)
    : ctx_(ctx),
      spec_(std::move(spec)),
      m_init_(std::move(m_init)),
      rng_(seed, 0x0a11),
      nonces_(Rng(seed, 0x0a12)),
      msk_(SymKey::random(rng_)) {}

void Owner::start() {
  phase_ = Phase::KeyExchange;
  for (auto c : spec_.clients) {
    auto ra = std::make_unique<RaInitiator>(PartyId::owner().wire(), rng_);
    wire::RaMessage m{spec_.taskid, 0, encode_ra_hello(ra->hello())};
    pending_ra_.emplace(c, std::move(ra));
    send(ctx_, PartyId::owner(), PartyId::client(c), MessageKind::RaHandshake1, m);
  }
  if (pending_ra_.empty()) {
    finish_key_exchange();
    return;
  }
  ctx_.sim.after(ctx_.timing.key_exchange_timeout, [this] { finish_key_exchange(); });
}

void Owner::finish_key_exchange() {
  if (submitted_) return;
  submitted_ = true;
  for (const auto& [c, ra] : pending_ra_) {
    ctx_.telemetry.excluded_clients.push_back(c);
    ctx_.telemetry.note(ctx_.sim.now(), "client " + std::to_string(c.value) + " missed key exchange");
  }
  pending_ra_.clear();
  std::sort(enrolled_.begin(), enrolled_.end());
  if (enrolled_.empty()) {
    error_ = Errc::DeliveryFailure;
    ctx_.telemetry.stall(ctx_.sim.now(), "no client completed key exchange");
    return;
  }
  submit();
}

void Owner::submit() {
  spec_.clients = enrolled_;
  wire::SubmitTask create{spec_.taskid, 1, {}};
  send(ctx_, PartyId::owner(), PartyId::ledger(), MessageKind::SubmitTask, create);
  wire::LedgerRead sub{wire::LedgerRead::Op::Subscribe, spec_.taskid, 0};
  send(ctx_, PartyId::owner(), PartyId::ledger(), MessageKind::LedgerRead, sub);
}

void Owner::on_frame(PartyId src, const Frame& frame) {
  try {
    switch (frame.kind) {
      case MessageKind::RaHandshake2: {
        if (src.kind != PartyKind::Client) return;
        ClientId c{src.index};
        auto it = pending_ra_.find(c);
        if (it == pending_ra_.end()) return;
        auto m = wire::decode_ra(frame.payload);
        ByteReader r(m.body, Errc::MalformedFrame);
        auto reply = decode_ra_reply(r);
        SymKey key = it->second->finish(reply, Measurement{});
        pending_ra_.erase(it);
        auto env = ae_encrypt(key, msk_aad(spec_.taskid, c), msk_.view(), nonces_);
        wire::KeyDeliver kd{spec_.taskid, wire::KeyPurpose::MasterKey, 0, encode_envelope(env)};
        send(ctx_, PartyId::owner(), src, MessageKind::KeyDeliver, kd);
        enrolled_.push_back(c);
        if (pending_ra_.empty()) finish_key_exchange();
        return;
      }
      case MessageKind::LedgerReceipt: {
        auto m = wire::decode_ledger_receipt(frame.payload);
        if (m.op != wire::LedgerReceipt::Op::CreateTask) return;
        if (!m.receipt.accepted) {
          error_ = Errc::DuplicateTask;
          phase_ = Phase::Created;
          ctx_.telemetry.stall(ctx_.sim.now(), "ledger refused task " + spec_.taskid);
          return;
        }
        wire::SubmitTask st{spec_.taskid, 1, task_spec_to_json(spec_)};
        send(ctx_, PartyId::owner(), PartyId::committee(), MessageKind::SubmitTask, st);
        LocalUpdate init{spec_.taskid, ClientId{0}, 0, m_init_, 1};
        wire::InitModel im{spec_.taskid, 0, encode_model(init)};
        for (auto c : enrolled_) {
          send(ctx_, PartyId::owner(), PartyId::client(c), MessageKind::InitModel, im);
        }
        phase_ = Phase::Running;
        return;
      }
      case MessageKind::ConfDeliver: {
        auto m = wire::decode_conf_deliver(frame.payload);
        auto e = conf_entry_from_json(m.entry_json);
        auto it = conf_.find(e.round);
        if (it == conf_.end() || it->second.revision <= e.revision) conf_[e.round] = std::move(e);
        return;
      }
      case MessageKind::LedgerReply: {
        auto m = wire::decode_ledger_reply(frame.payload);
        if (m.op == wire::LedgerReply::Op::RoundComplete) {
          wire::LedgerRead rd{wire::LedgerRead::Op::Read, spec_.taskid, m.round};
          send(ctx_, PartyId::owner(), PartyId::ledger(), MessageKind::LedgerRead, rd);
          return;
        }
        if (m.status != ReadStatus::Complete || !conf_.count(m.round)) return;
        const WeightVector& prev = m.round == 0 ? m_init_ : globals_.at(m.round - 1);
        globals_[m.round] = assemble_global(conf_.at(m.round), m.chunks, msk_, spec_.taskid, prev);
        if (m.round + 1 == spec_.rounds) {
          final_model_ = globals_[m.round];
          phase_ = Phase::Done;
        }
        return;
      }
      default:
        return;
    }
  } catch (const Error& e) {
    ctx_.telemetry.count("owner_errors");
    ctx_.telemetry.note(ctx_.sim.now(), std::string("owner: ") + e.what());
  }
}

// ---- client -------------------------------------------------------------------------------------

Client::Client(RunContext& ctx, ClientId uid, ClientBehavior behavior)
    : ctx_(ctx),
      uid_(uid),
      behavior_(std::move(behavior)),
      rng_(behavior_.seed, 0xc11e'0000ull ^ uid.value),
      nonces_(Rng(behavior_.seed, 0xc11f'0000ull ^ uid.value)) {}

void Client::on_frame(PartyId src, const Frame& frame) {
  try {
    switch (frame.kind) {
      case MessageKind::RaHandshake1: {
        if (src != PartyId::owner()) return;
        auto m = wire::decode_ra(frame.payload);
        ByteReader r(m.body, Errc::MalformedFrame);
        auto resp = ra_respond(decode_ra_hello(r), self().wire(), Measurement{}, rng_);
        owner_key_ = resp.key;
        taskid_ = m.taskid;
        wire::RaMessage reply{m.taskid, 0, encode_ra_reply(resp.reply)};
        send(ctx_, self(), src, MessageKind::RaHandshake2, reply);
        return;
      }
      case MessageKind::KeyDeliver: {
        auto m = wire::decode_key_deliver(frame.payload);
        if (m.purpose != wire::KeyPurpose::MasterKey || !owner_key_) return;
        auto env = decode_envelope(m.body);
        if (env.aad != msk_aad(taskid_, uid_)) throw Error(Errc::AuthFailure, "master key for another party");
        auto plain = ae_decrypt(*owner_key_, env);
        if (plain.size() != kSymKeyBytes) throw Error(Errc::AuthFailure, "master key has wrong length");
        SymKey k;
        std::copy(plain.begin(), plain.end(), k.bytes.begin());
        msk_ = k;
        maybe_train();
        return;
      }
      case MessageKind::InitModel: {
        auto m = wire::decode_init_model(frame.payload);
        m_glob_ = decode_model(m.model).weights;
        round_ = m.round;
        initialized_ = true;
        wire::LedgerRead sub{wire::LedgerRead::Op::Subscribe, taskid_, 0};
        send(ctx_, self(), PartyId::ledger(), MessageKind::LedgerRead, sub);
        maybe_train();
        return;
      }
      case MessageKind::ConfDeliver: {
        auto m = wire::decode_conf_deliver(frame.payload);
        auto e = conf_entry_from_json(m.entry_json);
        auto it = conf_.find(e.round);
        if (it != conf_.end() && it->second.revision > e.revision) return;
        auto r = e.round;
        conf_[r] = std::move(e);
        if (r == round_) maybe_train();
        return;
      }
      case MessageKind::RaHandshake2: {
        auto m = wire::decode_ra(frame.payload);
        auto it = pending_ra_.find(m.eid);
        if (it == pending_ra_.end()) return;
        auto ra = std::move(it->second);
        pending_ra_.erase(it);
        ByteReader r(m.body, Errc::MalformedFrame);
        auto reply = decode_ra_reply(r);
        try {
          ssk_by_eid_[m.eid] = ra->finish(reply, behavior_.expected_measurement);
        } catch (const Error& e) {
          ctx_.telemetry.count("client_attest_rejects");
          ctx_.telemetry.note(ctx_.sim.now(), "client " + std::to_string(uid_.value) + ": " + e.what());
          return;
        }
        maybe_train();
        return;
      }
      case MessageKind::ResendRequest: {
        auto m = wire::decode_resend(frame.payload);
        if (m.round != round_ || !update_ || !conf_.count(round_)) return;
        if (behavior_.max_resends && resends_ >= *behavior_.max_resends) return;
        ++resends_;
        ctx_.telemetry.count(m.reason == wire::ResendRequest::Reason::Timeout ? "resends_timeout"
                                                                                : "resends_auth");
        for (const auto& p : conf_.at(round_).partitions) {
          if (p.eid.value != m.eid || p.desc.layers_of(uid_).empty()) continue;
          if (ssk_by_eid_.count(m.eid)) send_partition(p);
        }
        return;
      }
      case MessageKind::FailoverCmd: {
        auto m = wire::decode_failover(frame.payload);
        if (m.op == wire::FailoverCmd::Op::Exclude) {
          ctx_.telemetry.note(ctx_.sim.now(), "client " + std::to_string(uid_.value) +
                                                  " excluded from round " + std::to_string(m.round));
          return;
        }
        maybe_train();
        return;
      }
      case MessageKind::LedgerReply: {
        auto m = wire::decode_ledger_reply(frame.payload);
        if (m.op == wire::LedgerReply::Op::RoundComplete) {
          if (m.round == round_) read_round(m.round);
          return;
        }
        reading_ = false;
        if (m.round != round_) return;
        if (m.status != ReadStatus::Complete || !conf_.count(m.round) || !msk_) {
          ctx_.sim.after(100 * kMillis, [this, r = m.round] {
            if (r == round_) read_round(r);
          });
          return;
        }
        m_glob_ = assemble_global(conf_.at(m.round), m.chunks, *msk_, taskid_, m_glob_);
        history_[m.round] = m_glob_;
        ++round_;
        update_.reset();
        ready_ = false;
        resends_ = 0;
        maybe_train();
        return;
      }
      default:
        return;
    }
  } catch (const Error& e) {
    ctx_.telemetry.count("client_errors");
    ctx_.telemetry.note(ctx_.sim.now(), "client " + std::to_string(uid_.value) + ": " + e.what());
  }
}

void Client::read_round(RoundIndex r) {
  if (reading_) return;
  reading_ = true;
  wire::LedgerRead rd{wire::LedgerRead::Op::Read, taskid_, r};
  send(ctx_, self(), PartyId::ledger(), MessageKind::LedgerRead, rd);
}

void Client::maybe_train() {
  if (!initialized_ || !msk_) return;
  auto it = conf_.find(round_);
  if (it == conf_.end()) return;
  const auto& entry = it->second;
  if (!std::binary_search(entry.participants.begin(), entry.participants.end(), uid_)) return;
  if (!update_) {
    update_ = synth_local_update(m_glob_, taskid_, uid_, round_, behavior_.seed, behavior_.synth);
    ctx_.telemetry.trains.push_back({uid_, round_, ctx_.sim.now()});
    ctx_.sim.after(ctx_.timing.train_cost + behavior_.lag, [this, r = round_] {
      if (r != round_) return;
      ready_ = true;
      maybe_train();
    });
    return;
  }
  if (!ready_) return;
  for (const auto& p : entry.partitions) {
    if (p.desc.layers_of(uid_).empty()) continue;
    if (sent_.count({round_, p.desc.partition, p.eid.value})) continue;
    if (ssk_by_eid_.count(p.eid.value)) {
      send_partition(p);
    } else {
      ensure_session(p);
    }
  }
}

void Client::ensure_session(const PlannedPartition& p) {
  if (pending_ra_.count(p.eid.value)) return;
  auto ra = std::make_unique<RaInitiator>(self().wire(), rng_);
  wire::RaMessage m{taskid_, p.eid.value, encode_ra_hello(ra->hello())};
  pending_ra_.emplace(p.eid.value, std::move(ra));
  send(ctx_, self(), PartyId::node(p.node), MessageKind::RaHandshake1, m);
}

void Client::send_partition(const PlannedPartition& p) {
  const auto& key = ssk_by_eid_.at(p.eid.value);
  auto layers = p.desc.layers_of(uid_);
  LocalUpdate part{taskid_, uid_, round_, update_->weights.slice(layers), update_->dataset_size};
  auto aad = model_aad(taskid_, round_, uid_);
  wire::ModelEnvelope m;
  m.taskid = taskid_;
  m.round = round_;
  m.sender = uid_;
  m.ct_m = ctx_.cipher().seal(key, aad, encode_model(part), nonces_);
  m.ct_msk = ctx_.cipher().seal(key, aad, msk_->view(), nonces_);
  auto payload = wire::encode(m);
  ctx_.net.send(self(), PartyId::node(p.node), MessageKind::ModelEnvelope, payload);
  sent_.insert({round_, p.desc.partition, p.eid.value});
  ++envelopes_sent_;
  envelope_bytes_sent_ += payload.size() + kFrameHeader;
  last_envelope_ = std::move(m);
}

// ---- node ---------------------------------------------------------------------------------------

std::string_view node_point_name(NodePoint p) {
  switch (p) {
    case NodePoint::RoundStart: return "round_start";
    case NodePoint::MidRound: return "mid_round";
    case NodePoint::AfterUpload: return "after_upload";
  }
  return "?";
}

NodePoint parse_node_point(std::string_view s) {
  if (s == "round_start") return NodePoint::RoundStart;
  if (s == "mid_round") return NodePoint::MidRound;
  if (s == "after_upload") return NodePoint::AfterUpload;
  throw Error(Errc::InvalidConfig, "unknown kill point " + std::string(s));
}

Node::Node(RunContext& ctx, SgxPlatform& platform, NodeId id, NodeBehavior behavior)
    : ctx_(ctx), platform_(platform), id_(id), behavior_(behavior) {}

void Node::start() {
  if (halted_ || beat_timer_) return;
  beat();
}

void Node::beat() {
  if (halted_) return;
  wire::Heartbeat hb{wire::Heartbeat::Type::Beat, id_.value, ++beat_seq_};
  send(ctx_, self(), PartyId::committee(), MessageKind::Heartbeat, hb);
  beat_timer_ = ctx_.sim.after(ctx_.timing.heartbeat_interval, [this] { beat(); });
}

void Node::halt() {
  halted_ = true;
  if (beat_timer_) ctx_.sim.cancel(*beat_timer_);
  for (auto& [r, t] : straggler_timer_) {
    if (t) ctx_.sim.cancel(*t);
  }
  ctx_.telemetry.note(ctx_.sim.now(), "node " + std::to_string(id_.value) + " halted");
}

std::vector<Bytes> Node::resident_buffers() const {
  std::vector<Bytes> out;
  for (const auto& [r, by_client] : inputs_)
    for (const auto& [c, item] : by_client) out.push_back(item.second);
  return out;
}

const PlannedPartition* Node::my_partition(RoundIndex r) const {
  auto it = conf_.find(r);
  return it == conf_.end() ? nullptr : it->second.partition_on(id_);
}

void Node::on_frame(PartyId src, const Frame& frame) {
  if (halted_) return;
  try {
    switch (frame.kind) {
      case MessageKind::Heartbeat: {
        auto m = wire::decode_heartbeat(frame.payload);
        if (m.type != wire::Heartbeat::Type::Ping) return;
        wire::Heartbeat pong{wire::Heartbeat::Type::Pong, id_.value, m.seq};
        send(ctx_, self(), src, MessageKind::Heartbeat, pong);
        return;
      }
      case MessageKind::InstallProg: {
        auto m = wire::decode_install_prog(frame.payload);
        Bytes code = m.code_id;
        if (behavior_.tamper_program) code.push_back(0xee);
        auto program = EnclaveProgram::compile(std::move(code), m.hook);
        EnclaveConfig cfg{m.epc_budget, m.paging, m.tx_capacity};
        ctx_.sim.after(ctx_.timing.install_cost, [this, src, m, program, cfg] {
          if (halted_) return;
          taskid_ = m.taskid;
          enclave_ = platform_.install(m.taskid, program, cfg);
          wire::InstallAck ack{m.taskid, id_.value, enclave_->eid().value};
          send(ctx_, self(), src, MessageKind::InstallAck, ack);
        });
        return;
      }
      case MessageKind::RaHandshake1: {
        auto m = wire::decode_ra(frame.payload);
        if (!enclave_ || m.eid != enclave_->eid().value) return;
        ByteReader r(m.body, Errc::MalformedFrame);
        auto reply = enclave_->attest(decode_ra_hello(r));
        wire::RaMessage out{m.taskid, m.eid, encode_ra_reply(reply)};
        send(ctx_, self(), src, MessageKind::RaHandshake2, out);
        return;
      }
      case MessageKind::KeyDeliver: {
        auto m = wire::decode_key_deliver(frame.payload);
        if (!enclave_ || m.purpose != wire::KeyPurpose::SigningKey) return;
        enclave_->getsk(decode_envelope(m.body));
        return;
      }
      case MessageKind::RoundDeliver: {
        auto m = wire::decode_round_deliver(frame.payload);
        if (!enclave_ || m.purpose != wire::RoundPurpose::Enclave || m.eid != enclave_->eid().value) return;
        enclave_->set_round(decode_envelope(m.body));
        if (started_.insert(m.round).second && observer_) {
          observer_(id_, NodePoint::RoundStart, m.round);
          if (halted_) return;
        }
        try_resume(m.round);
        return;
      }
      case MessageKind::ConfDeliver: {
        auto m = wire::decode_conf_deliver(frame.payload);
        auto e = conf_entry_from_json(m.entry_json);
        auto it = conf_.find(e.round);
        if (it != conf_.end() && it->second.revision >= e.revision) return;
        auto r = e.round;
        conf_[r] = std::move(e);
        for (auto old = inputs_.begin(); old != inputs_.end() && old->first < r;) old = inputs_.erase(old);
        if (my_partition(r)) arm_straggler_timer(r);
        try_resume(r);
        return;
      }
      case MessageKind::ModelEnvelope: {
        auto m = wire::decode_model_envelope(frame.payload);
        if (ctx_.resident) ctx_.resident(self(), frame.payload);
        auto& slot = inputs_[m.round][m.sender];
        slot = {std::move(m), frame.payload};
        auto r = slot.first.round;
        auto& tl = ctx_.telemetry.rounds[r];
        tl.last_envelope = std::max(tl.last_envelope, ctx_.sim.now());
        try_resume(r);
        return;
      }
      default:
        return;
    }
  } catch (const Error& e) {
    ctx_.telemetry.count("node_errors");
    ctx_.telemetry.note(ctx_.sim.now(), "node " + std::to_string(id_.value) + ": " + e.what());
  }
}

void Node::arm_straggler_timer(RoundIndex r) {
  auto& t = straggler_timer_[r];
  if (t) ctx_.sim.cancel(*t);
  retries_[r] = 0;
  auto rev = conf_.at(r).revision;
  t = ctx_.sim.after(ctx_.timing.straggler_timeout, [this, r, rev] { on_straggler_timeout(r, rev); });
}

void Node::on_straggler_timeout(RoundIndex r, std::uint32_t revision) {
  straggler_timer_[r].reset();
  if (halted_) return;
  const auto* p = my_partition(r);
  if (!p || conf_.at(r).revision != revision || processed_.count({r, p->desc.revision})) return;
  std::vector<ClientId> missing;
  const auto& have = inputs_[r];
  for (auto c : p->desc.clients()) {
    if (!have.count(c)) missing.push_back(c);
  }
  if (!missing.empty()) {
    if (retries_[r] < ctx_.timing.straggler_retries) {
      ++retries_[r];
      for (auto c : missing) {
        wire::ResendRequest req{taskid_, r, p->eid.value, wire::ResendRequest::Reason::Timeout};
        send(ctx_, self(), PartyId::client(c), MessageKind::ResendRequest, req);
      }
    } else {
      wire::StragglerReport rep{taskid_, r, p->desc.partition, id_.value, missing};
      send(ctx_, self(), PartyId::committee(), MessageKind::StragglerReport, rep);
      ctx_.telemetry.count("straggler_reports");
      return;
    }
  }
  straggler_timer_[r] = ctx_.sim.after(ctx_.timing.straggler_timeout,
                                       [this, r, revision] { on_straggler_timeout(r, revision); });
}

void Node::try_resume(RoundIndex r) {
  if (halted_ || !enclave_ || !enclave_->can_sign()) return;
  const auto* p = my_partition(r);
  if (!p || p->eid != enclave_->eid()) return;
  const auto& desc = enclave_->descriptor();
  if (enclave_->expected_round() != r || !desc || desc->partition != p->desc.partition ||
      desc->revision != p->desc.revision) {
    return;
  }
  if (processed_.count({r, desc->revision})) return;
  auto& have = inputs_[r];
  auto clients = desc->clients();
  for (auto c : clients) {
    if (!have.count(c)) return;
  }
  for (auto& rec : ctx_.telemetry.recoveries) {
    if (rec.replacement == id_ && rec.connected < 0) rec.connected = ctx_.sim.now();
  }

  std::vector<EnclaveInput> batch;
  for (auto c : clients) {
    const auto& m = have.at(c).first;
    batch.push_back({m.ct_m, m.ct_msk, m.sender});
  }
  EnclaveOutput out;
  try {
    out = enclave_->resume(batch);
  } catch (const InputRejected& e) {
    ctx_.telemetry.count(std::string("resume_reject_") + std::string(errc_name(e.code())));
    ctx_.telemetry.note(ctx_.sim.now(), "node " + std::to_string(id_.value) + " rejected input: " + e.what());
    have.erase(e.offender());
    wire::ResendRequest req{taskid_, r, p->eid.value, wire::ResendRequest::Reason::AuthFailure};
    send(ctx_, self(), PartyId::client(e.offender()), MessageKind::ResendRequest, req);
    return;
  }
  processed_.insert({r, desc->revision});
  ++resumes_;
  if (auto& t = straggler_timer_[r]) {
    ctx_.sim.cancel(*t);
    t.reset();
  }
  const auto& cfg = enclave_->config();
  auto ns = ctx_.timing.enclave_cost.resume_ns(out.step_bytes, cfg.epc_budget, cfg.paging);
  auto& tl = ctx_.telemetry.rounds[r];
  tl.aggregate_ns = std::max(tl.aggregate_ns, ns);
  ctx_.telemetry.count("resumes");
  ctx_.sim.after(ns, [this, r, chunks = std::move(out.chunks)]() mutable { upload(r, std::move(chunks)); });
}

void Node::upload(RoundIndex r, std::vector<SignedChunk> chunks) {
  if (halted_) return;
  if (observer_) {
    observer_(id_, NodePoint::MidRound, r);
    if (halted_) return;
  }
  if (behavior_.forge_chunks) {
    for (const auto& c : chunks) {
      SignedChunk forged = c;
      if (forged.ct_out.empty()) forged.ct_out.push_back(0);
      forged.ct_out[forged.ct_out.size() / 2] ^= 0x01;
      ctx_.net.send(self(), PartyId::ledger(), MessageKind::ChunkUpload, wire::encode(forged));
      ctx_.telemetry.count("forged_chunks_sent");
    }
  }
  auto& tl = ctx_.telemetry.rounds[r];
  if (tl.first_chunk_send < 0) tl.first_chunk_send = ctx_.sim.now();
  for (const auto& c : chunks) {
    ctx_.net.send(self(), PartyId::ledger(), MessageKind::ChunkUpload, wire::encode(c));
  }
  ctx_.telemetry.count("chunks_sent", chunks.size());
  if (observer_) observer_(id_, NodePoint::AfterUpload, r);
}

}  // namespace voltsim
