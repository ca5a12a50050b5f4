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

#include "voltsim/enclave.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

namespace voltsim {

// ---- hooks ------------------------------------------------------------------

namespace {

struct HookRegistry {
  std::mutex mu;
  std::map<std::string, AggregationHook> hooks;

  HookRegistry() {
    hooks["fedavg"] = [](std::span<const LocalUpdate> updates, std::span<const std::uint32_t> layers) {
      return partial_aggregate(updates, layers);
    };
  }
};

HookRegistry& hook_registry() {
  static HookRegistry r;
  return r;
}

}  // namespace

void register_aggregation_hook(const std::string& name, AggregationHook hook) {
  auto& r = hook_registry();
  std::lock_guard lock(r.mu);
  r.hooks[name] = std::move(hook);
}

const AggregationHook& find_aggregation_hook(const std::string& name) {
  auto& r = hook_registry();
  std::lock_guard lock(r.mu);
  auto it = r.hooks.find(name);
  if (it == r.hooks.end()) throw Error(Errc::InvalidConfig, "unknown aggregation hook '" + name + "'");
  return it->second;
}

EnclaveProgram EnclaveProgram::compile(Bytes code_id, std::string hook) {
  EnclaveProgram p;
  p.measurement = sha256(code_id);
  p.code_id = std::move(code_id);
  p.hook = std::move(hook);
  return p;
}

// ---- descriptor -------------------------------------------------------------------

std::vector<ClientId> PartitionDescriptor::clients() const {
  std::set<ClientId> all;
  for (const auto& step : steps)
    for (const auto& seg : step.segments) all.insert(seg.clients.begin(), seg.clients.end());
  return {all.begin(), all.end()};
}

std::vector<std::uint32_t> PartitionDescriptor::layers() const {
  std::set<std::uint32_t> all;
  for (const auto& step : steps)
    for (const auto& seg : step.segments) all.insert(seg.layer);
  return {all.begin(), all.end()};
}

std::vector<std::uint32_t> PartitionDescriptor::layers_of(ClientId c) const {
  std::set<std::uint32_t> out;
  for (const auto& step : steps)
    for (const auto& seg : step.segments)
      if (std::binary_search(seg.clients.begin(), seg.clients.end(), c)) out.insert(seg.layer);
  return {out.begin(), out.end()};
}

std::size_t PartitionDescriptor::cell_count() const {
  std::size_t n = 0;
  for (const auto& step : steps)
    for (const auto& seg : step.segments) n += seg.clients.size();
  return n;
}

Bytes encode_descriptor(const PartitionDescriptor& d) {
  ByteWriter w;
  w.u32(d.partition);
  w.u32(d.revision);
  w.u32(d.chunk_base);
  w.u32(d.chunk_count);
  w.u32(static_cast<std::uint32_t>(d.steps.size()));
  for (const auto& step : d.steps) {
    w.u32(static_cast<std::uint32_t>(step.segments.size()));
    for (const auto& seg : step.segments) {
      w.u32(seg.layer);
      w.u32(static_cast<std::uint32_t>(seg.clients.size()));
      for (auto c : seg.clients) w.u64(c.value);
    }
  }
  w.u32(static_cast<std::uint32_t>(d.normalized_layers.size()));
  for (auto l : d.normalized_layers) w.u32(l);
  return std::move(w).take();
}

PartitionDescriptor decode_descriptor(ByteReader& in) {
  PartitionDescriptor d;
  d.partition = in.u32();
  d.revision = in.u32();
  d.chunk_base = in.u32();
  d.chunk_count = in.u32();
  auto steps = in.u32();
  for (std::uint32_t s = 0; s < steps; ++s) {
    Step step;
    auto segs = in.u32();
    for (std::uint32_t k = 0; k < segs; ++k) {
      Segment seg;
      seg.layer = in.u32();
      auto n = in.u32();
      if (n > in.remaining() / 8) throw Error(Errc::MalformedFrame, "segment client count too large");
      for (std::uint32_t i = 0; i < n; ++i) seg.clients.push_back(ClientId{in.u64()});
      step.segments.push_back(std::move(seg));
    }
    d.steps.push_back(std::move(step));
  }
  auto norm = in.u32();
  for (std::uint32_t i = 0; i < norm; ++i) d.normalized_layers.push_back(in.u32());
  return d;
}

// ---- estimates ----------------------------------------------------------------------

std::uint64_t cell_bytes(std::uint32_t layer, const ModelMeta& meta) {
  if (layer >= meta.layer_count()) throw Error(Errc::ShapeMismatch, "layer out of range");
  return kLayerHeader + 8 * meta.layer_sizes[layer];
}

std::uint64_t estimate_enclave_bytes(std::uint64_t n_clients, std::span<const std::uint32_t> layers,
                                     const ModelMeta& meta) {
  std::uint64_t per_client = kUpdateHeaderBytes;
  for (auto l : layers) per_client += cell_bytes(l, meta);
  return per_client * n_clients;
}

std::uint64_t estimate_step_bytes(const Step& step, const ModelMeta& meta) {
  std::set<ClientId> clients;
  std::uint64_t bytes = 0;
  for (const auto& seg : step.segments) {
    clients.insert(seg.clients.begin(), seg.clients.end());
    bytes += cell_bytes(seg.layer, meta) * seg.clients.size();
  }
  return bytes + kUpdateHeaderBytes * clients.size();
}

std::int64_t EnclaveCostModel::resume_ns(std::span<const std::uint64_t> step_bytes,
                                         std::uint64_t epc_budget, bool paging) const {
  double ns = 0;
  for (auto b : step_bytes) {
    ns += compute_ns_per_byte * static_cast<double>(b);
    if (paging && b > epc_budget) ns += paging_ns_per_byte * static_cast<double>(b - epc_budget);
  }
  return static_cast<std::int64_t>(std::ceil(ns));
}

// ---- shard / chunks -------------------------------------------------------------------

Bytes encode_shard(std::span<const ShardEntry> entries) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.u32(e.layer);
    w.u64(e.weight_sum);
    w.u8(e.normalized ? 1 : 0);
    w.u64(e.values.size());
    for (double v : e.values) w.f64_le(v);
  }
  return std::move(w).take();
}

std::vector<ShardEntry> decode_shard(ByteView data) {
  ByteReader r(data, Errc::MalformedModel);
  std::vector<ShardEntry> out;
  auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    ShardEntry e;
    e.layer = r.u32();
    e.weight_sum = r.u64();
    e.normalized = r.u8() != 0;
    auto count = r.u64();
    if (count > r.remaining() / 8) throw Error(Errc::MalformedModel, "shard layer overruns payload");
    e.values.resize(count);
    for (auto& v : e.values) v = r.f64_le();
    out.push_back(std::move(e));
  }
  r.expect_done();
  return out;
}

std::size_t shard_size(const PartitionDescriptor& d, const ModelMeta& meta) {
  std::size_t n = 4;
  for (auto l : d.layers()) n += 4 + 8 + 1 + 8 + 8 * meta.layer_sizes.at(l);
  return n;
}

Bytes output_aad(const TaskId& taskid, RoundIndex round, std::uint32_t partition) {
  ByteWriter w;
  w.raw(as_bytes("out"));
  w.str16(taskid);
  w.u64(round);
  w.u32(partition);
  return std::move(w).take();
}

std::uint32_t chunk_count_for(const PartitionDescriptor& d, const TaskId& taskid,
                              const ModelMeta& meta, std::uint64_t tx_capacity) {
  auto env = encoded_envelope_size(output_aad(taskid, 0, d.partition).size(), shard_size(d, meta));
  return static_cast<std::uint32_t>((env + tx_capacity - 1) / tx_capacity);
}

Bytes canonical_message(const TaskId& taskid, RoundIndex round, ChunkIndex index, ByteView ct_out) {
  ByteWriter w(taskid.size() + 16 + ct_out.size());
  w.str16(taskid);
  w.u64(round);
  w.u32(index);
  w.raw(ct_out);
  return std::move(w).take();
}

// ---- aad helpers ---------------------------------------------------------------------------

Bytes model_aad(const TaskId& taskid, RoundIndex round, ClientId sender) {
  ByteWriter w;
  w.str16(taskid);
  w.u64(round);
  w.u64(sender.value);
  return std::move(w).take();
}

ModelAad parse_model_aad(ByteView aad) {
  ByteReader r(aad, Errc::AuthFailure);
  ModelAad out;
  out.taskid = r.str16();
  out.round = r.u64();
  out.sender = ClientId{r.u64()};
  r.expect_done();
  return out;
}

Bytes sk_aad(const TaskId& taskid) {
  ByteWriter w;
  w.raw(as_bytes("sk"));
  w.str16(taskid);
  return std::move(w).take();
}

Bytes round_aad(const TaskId& taskid) {
  ByteWriter w;
  w.raw(as_bytes("round"));
  w.str16(taskid);
  return std::move(w).take();
}

Bytes encode_round_payload(const TaskId& taskid, RoundIndex round, const PartitionDescriptor& d) {
  ByteWriter w;
  w.str16(taskid);
  w.u64(round);
  w.raw(encode_descriptor(d));
  return std::move(w).take();
}

// ---- enclave ----------------------------------------------------------------------------------

Enclave::Enclave(EnclaveId eid, TaskId taskid, EnclaveProgram program, EnclaveConfig config,
                 std::uint64_t seed)
    : eid_(eid),
      taskid_(std::move(taskid)),
      program_(std::move(program)),
      config_(config),
      rng_(seed, eid.value),
      nonces_(Rng(seed, eid.value ^ 0x5eed'0000'0000ull)) {
  if (taskid_.size() > kMaxTaskIdBytes) throw Error(Errc::InvalidConfig, "taskid too long");
  program_.measurement = sha256(program_.code_id);
}

RaReply Enclave::attest(const RaHello& hello) {
  auto resp = ra_respond(hello, eid_.value, program_.measurement, rng_);
  ssk_by_peer_[hello.initiator] = resp.key;
  return resp.reply;
}

bool Enclave::has_session(PartyId peer) const { return ssk_by_peer_.count(peer.wire()) != 0; }

const SymKey& Enclave::session_for(PartyId peer, ClientId offender) const {
  auto it = ssk_by_peer_.find(peer.wire());
  if (it == ssk_by_peer_.end()) {
    throw InputRejected(Errc::NoSessionKey, offender, "no session key with " + to_string(peer));
  }
  return it->second;
}

void Enclave::getsk(const Envelope& enc_sk) {
  auto it = ssk_by_peer_.find(PartyId::committee().wire());
  if (it == ssk_by_peer_.end()) throw Error(Errc::NoSessionKey, "no session with the committee");
  if (enc_sk.aad != sk_aad(taskid_)) throw Error(Errc::AuthFailure, "signing key bound to another task");
  auto plain = ae_decrypt(it->second, enc_sk);
  if (plain.size() != 32) throw Error(Errc::AuthFailure, "signing key has wrong length");
  SigningKey sk;
  std::copy(plain.begin(), plain.end(), sk.scalar.begin());
  signing_key_ = sk;
}

std::optional<VerifyKey> Enclave::verify_key() const {
  if (!signing_key_) return std::nullopt;
  return public_key_of(*signing_key_);
}

void Enclave::set_round(const Envelope& enc_round) {
  auto it = ssk_by_peer_.find(PartyId::committee().wire());
  if (it == ssk_by_peer_.end()) throw Error(Errc::NoSessionKey, "no session with the committee");
  if (enc_round.aad != round_aad(taskid_)) throw Error(Errc::AuthFailure, "round bound to another task");
  auto plain = ae_decrypt(it->second, enc_round);
  ByteReader r(plain, Errc::AuthFailure);
  if (r.str16() != taskid_) throw Error(Errc::AuthFailure, "round bound to another task");
  auto round = r.u64();
  auto desc = decode_descriptor(r);
  r.expect_done();
  if (round_ && round < *round_) {
    throw Error(Errc::RoundMismatch, "round " + std::to_string(round) + " is behind expected " +
                                         std::to_string(*round_));
  }
  if (last_completed_ && std::pair{round, desc.revision} <= *last_completed_) {
    throw Error(Errc::RoundMismatch, "round " + std::to_string(round) + " revision " +
                                         std::to_string(desc.revision) + " already completed");
  }
  round_ = round;
  descriptor_ = std::move(desc);
}

std::optional<RoundIndex> Enclave::expected_round() const { return round_; }

EnclaveOutput Enclave::resume(std::span<const EnclaveInput> inputs) {
  if (!signing_key_) throw Error(Errc::MissingKey, "resume before signing key delivery");
  if (!round_ || !descriptor_) throw Error(Errc::RoundMismatch, "resume before a round was set");
  const RoundIndex round = *round_;
  const auto& desc = *descriptor_;
  if (last_completed_ && std::pair{round, desc.revision} <= *last_completed_) {
    throw Error(Errc::RoundMismatch, "batch for round " + std::to_string(round) + " already processed");
  }

  // Index inputs by sender and check them against the layout before touching
  // any plaintext.
  std::map<ClientId, const EnclaveInput*> by_sender;
  for (const auto& in : inputs) {
    ModelAad aad = parse_model_aad(in.ct_m.aad);
    if (aad.round != round) {
      throw InputRejected(Errc::RoundMismatch, in.sender,
                          "envelope for round " + std::to_string(aad.round) + ", expected " +
                              std::to_string(round));
    }
    if (aad.taskid != taskid_ || aad.sender != in.sender || in.ct_msk.aad != in.ct_m.aad) {
      throw InputRejected(Errc::AuthFailure, in.sender, "envelope context does not match sender");
    }
    if (!by_sender.emplace(in.sender, &in).second) {
      throw InputRejected(Errc::CoverageOverlap, in.sender, "two envelopes in one batch");
    }
  }
  auto expected = desc.clients();
  for (auto c : expected) {
    if (!by_sender.count(c)) throw Error(Errc::Incomplete, "no envelope from client " + std::to_string(c.value));
  }
  if (by_sender.size() != expected.size()) {
    for (const auto& [c, in] : by_sender) {
      if (!std::binary_search(expected.begin(), expected.end(), c)) {
        throw InputRejected(Errc::Unauthorized, c, "not assigned to this partition");
      }
    }
  }

  const auto& hook = find_aggregation_hook(program_.hook);
  std::optional<SymKey> msk;
  std::map<std::uint32_t, PartialAggregate> acc;
  EnclaveOutput out;
  for (const auto& step : desc.steps) {
    std::set<ClientId> step_clients;
    for (const auto& seg : step.segments) step_clients.insert(seg.clients.begin(), seg.clients.end());

    std::uint64_t resident = 0;
    for (auto c : step_clients) resident += by_sender.at(c)->ct_m.ciphertext.size();
    if (!config_.paging && resident > config_.epc_budget) {
      throw Error(Errc::CapacityExceeded, std::to_string(resident) + " bytes exceed budget " +
                                              std::to_string(config_.epc_budget));
    }
    memory_used_ = resident;
    peak_memory_ = std::max(peak_memory_, resident);

    std::map<ClientId, LocalUpdate> updates;
    for (auto c : step_clients) {
      const auto* in = by_sender.at(c);
      const auto& key = session_for(PartyId::client(c), c);
      Bytes plain;
      Bytes msk_bytes;
      try {
        plain = ae_decrypt(key, in->ct_m);
        msk_bytes = ae_decrypt(key, in->ct_msk);
      } catch (const Error& e) {
        memory_used_ = 0;
        throw InputRejected(Errc::AuthFailure, c, e.what());
      }
      if (msk_bytes.size() != kSymKeyBytes) {
        throw InputRejected(Errc::AuthFailure, c, "master key has wrong length");
      }
      SymKey k;
      std::copy(msk_bytes.begin(), msk_bytes.end(), k.bytes.begin());
      if (msk && !(*msk == k)) throw InputRejected(Errc::MskDisagreement, c, "master key differs");
      msk = k;
      LocalUpdate u;
      try {
        u = decode_model(plain);
      } catch (const Error& e) {
        throw InputRejected(Errc::MalformedModel, c, e.what());
      }
      if (u.client != c || u.round != round || u.taskid != taskid_) {
        throw InputRejected(Errc::AuthFailure, c, "update header does not match its envelope");
      }
      std::vector<std::uint32_t> have;
      for (const auto& l : u.weights.layers) have.push_back(l.index);
      if (have != desc.layers_of(c)) {
        throw InputRejected(Errc::ShapeMismatch, c, "update carries the wrong layers");
      }
      updates.emplace(c, std::move(u));
    }

    for (const auto& seg : step.segments) {
      if (seg.clients.empty()) continue;  // every assigned client was excluded
      std::vector<LocalUpdate> seg_updates;
      seg_updates.reserve(seg.clients.size());
      std::uint32_t layer[] = {seg.layer};
      for (auto c : seg.clients) {
        auto& u = updates.at(c);
        LocalUpdate restricted{u.taskid, u.client, u.round, u.weights.slice(layer), u.dataset_size};
        seg_updates.push_back(std::move(restricted));
      }
      auto part = hook(seg_updates, layer);
      auto it = acc.find(seg.layer);
      if (it == acc.end()) {
        acc.emplace(seg.layer, std::move(part));
      } else {
        accumulate(it->second, part);
      }
    }
    out.step_bytes.push_back(resident);
    memory_used_ = 0;
  }
  if (!msk) throw Error(Errc::EmptyInput, "partition has no inputs");

  std::vector<ShardEntry> entries;
  for (auto layer : desc.layers()) {
    ShardEntry e;
    e.layer = layer;
    e.normalized = std::binary_search(desc.normalized_layers.begin(), desc.normalized_layers.end(),
                                      layer);
    auto it = acc.find(layer);
    if (it != acc.end()) {
      e.weight_sum = it->second.weight_sum;
      e.values = std::move(it->second.scaled_sum.layers.front().elements);
    }
    if (e.normalized && e.weight_sum != 0) {
      for (auto& v : e.values) v /= static_cast<double>(e.weight_sum);
    }
    entries.push_back(std::move(e));
  }
  auto shard = encode_shard(entries);
  auto env = encode_envelope(
      ae_encrypt(*msk, output_aad(taskid_, round, desc.partition), shard, nonces_));

  const auto cap = config_.tx_capacity;
  const std::size_t count = (env.size() + cap - 1) / cap;
  // A shard shrinks when excluded clients empty a layer; the tail chunks then
  // carry empty slices so the declared count still holds.
  if (count > desc.chunk_count) {
    throw Error(Errc::InvalidConfig, "output needs " + std::to_string(count) + " chunks, plan has " +
                                         std::to_string(desc.chunk_count));
  }
  for (std::size_t i = 0; i < desc.chunk_count; ++i) {
    SignedChunk c;
    c.taskid = taskid_;
    c.round = round;
    c.index = desc.chunk_base + static_cast<ChunkIndex>(i);
    auto begin = env.begin() + static_cast<std::ptrdiff_t>(std::min(env.size(), i * cap));
    auto end = env.begin() + static_cast<std::ptrdiff_t>(std::min(env.size(), (i + 1) * cap));
    c.ct_out.assign(begin, end);
    c.sigma = sig_sign(*signing_key_, canonical_message(c));
    out.chunks.push_back(std::move(c));
  }
  last_completed_ = std::pair{round, desc.revision};
  ++round_counter_;
  return out;
}

std::unique_ptr<Enclave> SgxPlatform::install(const TaskId& taskid, const EnclaveProgram& program,
                                              const EnclaveConfig& config) {
  EnclaveId eid{++next_};
  return std::make_unique<Enclave>(eid, taskid, program, config, seed_);
}

// ---- merge ---------------------------------------------------------------------------------------

WeightVector merge_shards(std::span<const PartitionOutput> outputs, const WeightVector& previous) {
  std::vector<const PartitionOutput*> order;
  for (const auto& o : outputs) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    return a->descriptor.partition < b->descriptor.partition;
  });

  WeightVector out = previous;
  for (auto& layer : out.layers) {
    std::set<ClientId> covered;
    std::vector<double> sum(layer.elements.size(), 0.0);
    std::uint64_t weight = 0;
    std::size_t parts = 0;
    const ShardEntry* normalized = nullptr;
    for (const auto* o : order) {
      bool listed = false;
      for (const auto& step : o->descriptor.steps) {
        for (const auto& seg : step.segments) {
          if (seg.layer != layer.index) continue;
          listed = true;
          for (auto c : seg.clients) {
            if (!covered.insert(c).second) {
              throw Error(Errc::CoverageOverlap, "layer " + std::to_string(layer.index) +
                                                     " client " + std::to_string(c.value) +
                                                     " covered twice");
            }
          }
        }
      }
      auto it = std::find_if(o->entries.begin(), o->entries.end(),
                             [&](const ShardEntry& e) { return e.layer == layer.index; });
      if (listed != (it != o->entries.end())) {
        throw Error(Errc::CoverageGap, "partition " + std::to_string(o->descriptor.partition) +
                                           " output does not match its layout for layer " +
                                           std::to_string(layer.index));
      }
      if (!listed || it->weight_sum == 0) continue;
      if (it->values.size() != layer.elements.size()) {
        throw Error(Errc::ShapeMismatch, "layer " + std::to_string(layer.index) + " size differs");
      }
      ++parts;
      if (it->normalized) normalized = &*it;
      weight += it->weight_sum;
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += it->values[i];
    }
    if (parts == 0 || weight == 0) continue;
    if (normalized) {
      if (parts != 1) {
        throw Error(Errc::CoverageOverlap, "normalized layer " + std::to_string(layer.index) +
                                               " has more than one part");
      }
      layer.elements = normalized->values;
      continue;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) layer.elements[i] = sum[i] / static_cast<double>(weight);
  }
  return out;
}

}  // namespace voltsim
