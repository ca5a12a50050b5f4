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

#include "voltsim/committee.hpp"

#include <algorithm>

namespace voltsim {

namespace {

template <class Msg>
void send(RunContext& ctx, PartyId dst, MessageKind kind, const Msg& msg) {
  ctx.net.send(PartyId::committee(), dst, kind, wire::encode(msg));
}

}  // namespace

Committee::Committee(RunContext& ctx, CommitteeConfig config)
    : ctx_(ctx),
      config_(std::move(config)),
      rng_(config_.seed, 0xc0'0001),
      nonces_(Rng(config_.seed, 0xc0'0002)) {
  for (auto n : config_.nodes) nodes_[n];
}

std::vector<NodeId> Committee::alive() const {
  std::vector<NodeId> out;
  for (const auto& [n, c] : nodes_) {
    if (c.alive && !c.failed) out.push_back(n);
  }
  return out;
}

bool Committee::failed(NodeId n) const {
  auto it = nodes_.find(n);
  return it != nodes_.end() && it->second.failed;
}

void Committee::stall(const std::string& why) {
  phase_ = Phase::Stalled;
  ctx_.telemetry.stall(ctx_.sim.now(), why);
}

void Committee::publish(RoundIndex r) { ctx_.telemetry.conf[r] = conf_.rounds.at(r); }

void Committee::on_frame(PartyId src, const Frame& frame) {
  try {
    switch (frame.kind) {
      case MessageKind::SubmitTask: {
        if (src != PartyId::owner() || phase_ != Phase::Idle) return;
        auto m = wire::decode_submit_task(frame.payload);
        try {
          spec_ = task_spec_from_json(m.spec_json);
          spec_.validate();
        } catch (const Error& e) {
          stall(std::string("task rejected: ") + e.what());
          return;
        }
        phase_ = Phase::Probing;
        for (const auto& [n, c] : nodes_) {
          wire::Heartbeat ping{wire::Heartbeat::Type::Ping, n.value, ++ping_seq_};
          send(ctx_, PartyId::node(n), MessageKind::Heartbeat, ping);
        }
        ctx_.sim.after(ctx_.timing.ping_timeout, [this] { end_probe(); });
        return;
      }
      case MessageKind::Heartbeat: {
        if (src.kind != PartyKind::Node) return;
        auto it = nodes_.find(NodeId{src.index});
        if (it == nodes_.end() || it->second.failed) return;
        it->second.alive = true;
        it->second.last_beat = ctx_.sim.now();
        return;
      }
      case MessageKind::InstallAck: {
        auto m = wire::decode_install_ack(frame.payload);
        auto it = nodes_.find(NodeId{m.node});
        if (it == nodes_.end() || it->second.failed || src != PartyId::node(it->first)) return;
        auto& c = it->second;
        c.eid = EnclaveId{m.eid};
        c.ra = std::make_unique<RaInitiator>(PartyId::committee().wire(), rng_);
        wire::RaMessage hello{spec_.taskid, m.eid, encode_ra_hello(c.ra->hello())};
        send(ctx_, src, MessageKind::RaHandshake1, hello);
        return;
      }
      case MessageKind::RaHandshake2: {
        if (src.kind != PartyKind::Node) return;
        NodeId n{src.index};
        auto it = nodes_.find(n);
        if (it == nodes_.end() || it->second.failed || !it->second.ra) return;
        auto& c = it->second;
        auto m = wire::decode_ra(frame.payload);
        if (!c.eid || m.eid != c.eid->value) return;
        ByteReader r(m.body, Errc::MalformedFrame);
        auto reply = decode_ra_reply(r);
        auto ra = std::move(c.ra);
        try {
          c.ssk = ra->finish(reply, spec_.program.measurement);
        } catch (const Error& e) {
          if (e.code() != Errc::MeasurementMismatch) throw;
          ctx_.telemetry.count("measurement_mismatch");
          fail_node(n, "measurement mismatch");
          return;
        }
        auto env = ae_encrypt(*c.ssk, sk_aad(spec_.taskid), keys_->secret_key.view(), nonces_);
        wire::KeyDeliver kd{spec_.taskid, wire::KeyPurpose::SigningKey, m.eid, encode_envelope(env)};
        send(ctx_, src, MessageKind::KeyDeliver, kd);
        c.ready = true;
        on_ready(n);
        return;
      }
      case MessageKind::LedgerReceipt: {
        auto m = wire::decode_ledger_receipt(frame.payload);
        if (!m.receipt.accepted) {
          ctx_.telemetry.note(ctx_.sim.now(), "committee request refused by the ledger: " +
                                                  std::string(reason_name(m.receipt.reason)));
        }
        return;
      }
      case MessageKind::LedgerReply: {
        auto m = wire::decode_ledger_reply(frame.payload);
        if (m.op != wire::LedgerReply::Op::RoundComplete || m.taskid != spec_.taskid) return;
        completed_.insert(m.round);
        if (phase_ != Phase::Running || m.round != current_) return;
        if (m.round + 1 < spec_.rounds) {
          start_round(m.round + 1);
        } else {
          phase_ = Phase::Done;
        }
        return;
      }
      case MessageKind::StragglerReport: {
        exclude(wire::decode_straggler(frame.payload));
        return;
      }
      default:
        return;
    }
  } catch (const Error& e) {
    ctx_.telemetry.count("committee_errors");
    ctx_.telemetry.note(ctx_.sim.now(), std::string("committee: ") + e.what());
  }
}

void Committee::end_probe() {
  auto live = alive();
  if (live.empty()) {
    stall("NoNodes: no node answered the probe");
    return;
  }
  keys_ = sig_keygen(random_seed(rng_));
  vk_ = keys_->public_key;
  wire::KeyDeliver vk{spec_.taskid, wire::KeyPurpose::VerifyKey, 0, vk_->point};
  send(ctx_, PartyId::ledger(), MessageKind::KeyDeliver, vk);
  wire::LedgerRead sub{wire::LedgerRead::Op::Subscribe, spec_.taskid, 0};
  send(ctx_, PartyId::ledger(), MessageKind::LedgerRead, sub);

  std::size_t needed = 0;
  try {
    if (config_.replay) {
      for (const auto& [r, e] : config_.replay->rounds) needed = std::max(needed, e.partitions.size());
    } else {
      needed = partitions_needed(spec_, config_.limits);
    }
  } catch (const Error& e) {
    stall(e.what());
    return;
  }
  if (needed > live.size()) {
    stall("InsufficientNodes: " + std::to_string(needed) + " enclaves needed, " +
          std::to_string(live.size()) + " nodes alive");
    return;
  }
  slots_.assign(live.begin(), live.begin() + static_cast<std::ptrdiff_t>(needed));
  phase_ = Phase::Provisioning;
  ctx_.telemetry.note(ctx_.sim.now(), "provisioning " + std::to_string(needed) + " enclaves");
  for (auto n : slots_) provision(n);
  ctx_.sim.after(ctx_.timing.heartbeat_interval, [this] { tick(); });
}

void Committee::tick() {
  if (phase_ == Phase::Done || phase_ == Phase::Stalled) return;
  for (auto n : monitor_tick(ctx_.sim.now())) fail_node(n, "heartbeat timeout");
  ctx_.sim.after(ctx_.timing.heartbeat_interval, [this] { tick(); });
}

std::vector<NodeId> Committee::monitor_tick(SimTime now) {
  const SimTime limit = ctx_.timing.heartbeat_interval * ctx_.timing.failover_threshold;
  std::vector<NodeId> out;
  for (auto& [n, c] : nodes_) {
    if (!c.alive || c.failed) continue;
    if (now - c.last_beat > limit) out.push_back(n);
  }
  return out;
}

void Committee::provision(NodeId n) {
  auto& c = nodes_.at(n);
  c.eid.reset();
  c.ssk.reset();
  c.ra.reset();
  c.ready = false;
  wire::InstallProg ip{spec_.taskid,        spec_.program.code_id, spec_.program.hook,
                       config_.limits.epc_budget, config_.limits.paging, config_.limits.tx_capacity};
  send(ctx_, PartyId::node(n), MessageKind::InstallProg, ip);
}

void Committee::on_ready(NodeId n) {
  auto slot = std::find(slots_.begin(), slots_.end(), n);
  if (slot == slots_.end()) return;
  std::optional<std::size_t> rec;
  if (auto it = recovering_.find(n); it != recovering_.end()) {
    rec = it->second;
    recovering_.erase(it);
  }
  if (phase_ == Phase::Provisioning) {
    if (rec) ctx_.telemetry.recoveries[*rec].connected = ctx_.sim.now();
    bool all = std::all_of(slots_.begin(), slots_.end(), [&](NodeId s) { return nodes_.at(s).ready; });
    if (all) {
      phase_ = Phase::Running;
      start_round(0);
    }
    return;
  }
  if (phase_ == Phase::Running) {
    rebind(static_cast<std::size_t>(slot - slots_.begin()), rec);
  } else if (rec) {
    ctx_.telemetry.recoveries[*rec].connected = ctx_.sim.now();
  }
}

ConfEntry Committee::plan_round(RoundIndex r) {
  ConfEntry e;
  if (config_.replay && config_.replay->rounds.count(r)) {
    e = config_.replay->rounds.at(r);
  } else {
    e.round = r;
    e.participants = select_participants(spec_, r);
    for (auto& d : plan_partitions(spec_.strategy, e.participants, spec_.meta, config_.limits, spec_.taskid)) {
      e.expected_chunks += d.chunk_count;
      e.partitions.push_back({NodeId{}, EnclaveId{}, std::move(d)});
    }
  }
  if (e.partitions.size() > slots_.size()) {
    throw Error(Errc::InsufficientNodes, "round " + std::to_string(r) + " needs " +
                                             std::to_string(e.partitions.size()) + " enclaves");
  }
  for (std::size_t i = 0; i < e.partitions.size(); ++i) {
    auto& p = e.partitions[i];
    p.node = slots_[i];
    const auto& c = nodes_.at(p.node);
    p.eid = c.ready ? *c.eid : EnclaveId{};
  }
  return e;
}

void Committee::start_round(RoundIndex r) {
  current_ = r;
  ConfEntry e;
  try {
    e = plan_round(r);
  } catch (const Error& err) {
    stall(err.what());
    return;
  }
  conf_.rounds[r] = std::move(e);
  publish(r);
  ctx_.telemetry.rounds[r].start = ctx_.sim.now();
  const auto& entry = conf_.rounds.at(r);
  wire::RoundDeliver declare{spec_.taskid, wire::RoundPurpose::Declare, 0, r, entry.expected_chunks, {}};
  send(ctx_, PartyId::ledger(), MessageKind::RoundDeliver, declare);
  for (std::size_t i = 0; i < entry.partitions.size(); ++i) deliver_round(r, i);
  broadcast_conf(r);
}

void Committee::deliver_round(RoundIndex r, std::size_t partition) {
  const auto& p = conf_.rounds.at(r).partitions.at(partition);
  const auto& c = nodes_.at(p.node);
  if (!c.ready || !c.ssk || p.eid.value == 0) return;
  auto env = ae_encrypt(*c.ssk, round_aad(spec_.taskid), encode_round_payload(spec_.taskid, r, p.desc),
                        nonces_);
  wire::RoundDeliver rd{spec_.taskid, wire::RoundPurpose::Enclave, p.eid.value, r, p.desc.chunk_count,
                        encode_envelope(env)};
  send(ctx_, PartyId::node(p.node), MessageKind::RoundDeliver, rd);
}

void Committee::broadcast_conf(RoundIndex r) {
  const auto& e = conf_.rounds.at(r);
  wire::ConfDeliver cd{spec_.taskid, r, e.revision, conf_entry_to_json(e)};
  send(ctx_, PartyId::owner(), MessageKind::ConfDeliver, cd);
  for (auto c : spec_.clients) send(ctx_, PartyId::client(c), MessageKind::ConfDeliver, cd);
  for (auto n : slots_) {
    if (!nodes_.at(n).failed) send(ctx_, PartyId::node(n), MessageKind::ConfDeliver, cd);
  }
}

void Committee::fail_node(NodeId n, const std::string& cause) {
  auto& c = nodes_.at(n);
  c.failed = true;
  c.alive = false;
  c.ready = false;
  ctx_.telemetry.note(ctx_.sim.now(), "node " + std::to_string(n.value) + " failed: " + cause);
  auto slot = std::find(slots_.begin(), slots_.end(), n);
  recovering_.erase(n);
  if (slot == slots_.end() || phase_ == Phase::Done || phase_ == Phase::Stalled) return;

  RecoveryRecord rec;
  rec.failed = n;
  rec.round = current_;
  rec.cause = cause;
  rec.detected = ctx_.sim.now();
  std::optional<NodeId> spare;
  for (const auto& [id, ctx] : nodes_) {
    if (ctx.alive && !ctx.failed && std::find(slots_.begin(), slots_.end(), id) == slots_.end()) {
      spare = id;
      break;
    }
  }
  rec.replacement = spare;
  ctx_.telemetry.recoveries.push_back(rec);
  if (!spare) {
    stall("NoSpareNodes: cannot replace node " + std::to_string(n.value));
    return;
  }
  *slot = *spare;
  const std::size_t index = ctx_.telemetry.recoveries.size() - 1;
  recovering_[*spare] = index;
  ctx_.telemetry.count("failovers");
  ctx_.sim.after(ctx_.timing.schedule_cost, [this, s = *spare, index] {
    if (nodes_.at(s).failed) return;
    ctx_.telemetry.recoveries[index].rescheduled = ctx_.sim.now();
    provision(s);
  });
}

void Committee::rebind(std::size_t slot, std::optional<std::size_t> recovery) {
  const RoundIndex r = current_;
  auto mark_connected = [&] {
    if (recovery) ctx_.telemetry.recoveries[*recovery].connected = ctx_.sim.now();
  };
  if (completed_.count(r) || !conf_.rounds.count(r)) {
    mark_connected();
    return;
  }
  auto& entry = conf_.rounds.at(r);
  if (slot >= entry.partitions.size()) {
    mark_connected();
    return;
  }
  auto& p = entry.partitions[slot];
  const NodeId n = slots_[slot];
  const EnclaveId eid = *nodes_.at(n).eid;
  if (p.node == n && p.eid == eid) return;
  p.node = n;
  p.eid = eid;
  ++p.desc.revision;
  ++entry.revision;
  publish(r);
  deliver_round(r, slot);
  broadcast_conf(r);
  for (auto c : p.desc.clients()) {
    wire::FailoverCmd cmd{wire::FailoverCmd::Op::Reattest, spec_.taskid, r, p.desc.partition,
                          n.value, eid.value, c.value};
    send(ctx_, PartyId::client(c), MessageKind::FailoverCmd, cmd);
  }
}

void Committee::exclude(const wire::StragglerReport& rep) {
  if (phase_ != Phase::Running || rep.round != current_ || completed_.count(rep.round)) return;
  auto& entry = conf_.rounds.at(rep.round);
  if (rep.partition >= entry.partitions.size()) return;
  auto& p = entry.partitions[rep.partition];
  if (p.node.value != rep.node) return;
  std::set<ClientId> gone(rep.missing.begin(), rep.missing.end());
  for (auto& step : p.desc.steps) {
    for (auto& seg : step.segments) {
      std::erase_if(seg.clients, [&](ClientId c) { return gone.count(c) != 0; });
    }
  }
  ctx_.telemetry.count("exclusions", gone.size());
  if (p.desc.clients().empty()) {
    stall("partition " + std::to_string(p.desc.partition) + " lost every client");
    return;
  }
  ++p.desc.revision;
  ++entry.revision;
  publish(rep.round);
  deliver_round(rep.round, rep.partition);
  broadcast_conf(rep.round);
  for (auto c : gone) {
    wire::FailoverCmd cmd{wire::FailoverCmd::Op::Exclude, spec_.taskid, rep.round, p.desc.partition,
                          p.node.value, p.eid.value, c.value};
    send(ctx_, PartyId::client(c), MessageKind::FailoverCmd, cmd);
  }
}

}  // namespace voltsim
