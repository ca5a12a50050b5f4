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

#include <gtest/gtest.h>

#include "direct_rig.hpp"
#include "voltsim/harness.hpp"

using namespace voltsim;
using voltsim::testing::DirectRig;

namespace {

LocalUpdate make(std::uint64_t client, RoundIndex round, std::vector<double> values, std::uint64_t d = 1) {
  LocalUpdate u;
  u.taskid = "enc";
  u.client = ClientId{client};
  u.round = round;
  u.dataset_size = d;
  u.weights.layers.push_back({0, std::move(values)});
  return u;
}

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::InvalidConfig;
}

struct TwoClients {
  DirectRig rig{"enc", ModelMeta{{2}}, PlanLimits{}, 5};
  std::vector<ClientId> who{ClientId{1}, ClientId{2}};
  std::map<ClientId, LocalUpdate> updates(RoundIndex r) {
    return {{ClientId{1}, make(1, r, {1, 3})}, {ClientId{2}, make(2, r, {3, 5})}};
  }
};

}  // namespace

TEST(Enclave, TwoClientsAverageOnChainEntry) {
  TwoClients t;
  auto entry = t.rig.plan(Strategy::SingleSGX, t.who, 0);
  WeightVector prev{{{0, {0, 0}}}};
  std::vector<SignedChunk> chunks;
  auto w = t.rig.run_round(entry, t.updates(0), prev, &chunks);
  EXPECT_EQ(w.layers[0].elements, (std::vector<double>{2, 4}));
  ASSERT_FALSE(chunks.empty());
  for (const auto& c : chunks) EXPECT_TRUE(sig_verify(t.rig.vk(), canonical_message(c), c.sigma));
  EXPECT_EQ(t.rig.enclave(0).round_counter(), 1u);
}

TEST(Enclave, ReplayedBatchAndOldEnvelopesRejected) {
  TwoClients t;
  auto e0 = t.rig.plan(Strategy::SingleSGX, t.who, 0);
  WeightVector prev{{{0, {0, 0}}}};
  t.rig.run_round(e0, t.updates(0), prev);
  auto old_inputs = t.rig.inputs_for(0, t.updates(0));
  // Same batch again without a new round.
  EXPECT_EQ(code_of([&] { t.rig.enclave(0).resume(old_inputs); }), Errc::RoundMismatch);
  // Round 0's envelopes offered in round 1.
  auto e1 = t.rig.plan(Strategy::SingleSGX, t.who, 1);
  t.rig.set_round(e1, 0);
  EXPECT_EQ(code_of([&] { t.rig.enclave(0).resume(old_inputs); }), Errc::RoundMismatch);
  // Going back to round 0 is refused at set_round.
  EXPECT_EQ(code_of([&] { t.rig.set_round(e0, 0); }), Errc::RoundMismatch);
}

TEST(Enclave, TamperedEnvelopeNamesOffender) {
  TwoClients t;
  auto entry = t.rig.plan(Strategy::SingleSGX, t.who, 0);
  t.rig.set_round(entry, 0);
  auto inputs = t.rig.inputs_for(0, t.updates(0));
  inputs[1].ct_m.ciphertext[3] ^= 0x10;
  try {
    t.rig.enclave(0).resume(inputs);
    FAIL();
  } catch (const InputRejected& e) {
    EXPECT_EQ(e.code(), Errc::AuthFailure);
    EXPECT_EQ(e.offender(), ClientId{2});
  }
}

TEST(Enclave, AadMustMatchSender) {
  TwoClients t;
  auto entry = t.rig.plan(Strategy::SingleSGX, t.who, 0);
  t.rig.set_round(entry, 0);
  auto inputs = t.rig.inputs_for(0, t.updates(0));
  std::swap(inputs[0].sender, inputs[1].sender);
  EXPECT_EQ(code_of([&] { t.rig.enclave(0).resume(inputs); }), Errc::AuthFailure);
}

TEST(Enclave, MissingAndForeignInputs) {
  TwoClients t;
  auto entry = t.rig.plan(Strategy::SingleSGX, t.who, 0);
  t.rig.set_round(entry, 0);
  auto inputs = t.rig.inputs_for(0, t.updates(0));
  std::vector<EnclaveInput> one{inputs[0]};
  EXPECT_EQ(code_of([&] { t.rig.enclave(0).resume(one); }), Errc::Incomplete);

  inputs.push_back(inputs[0]);
  inputs.back().sender = ClientId{9};
  inputs.back().ct_m.aad = model_aad("enc", 0, ClientId{9});
  inputs.back().ct_msk.aad = inputs.back().ct_m.aad;
  EXPECT_EQ(code_of([&] { t.rig.enclave(0).resume(inputs); }), Errc::Unauthorized);
}

TEST(Enclave, LifecycleGuards) {
  SgxPlatform platform(1);
  auto program = EnclaveProgram::compile(Bytes{1, 2, 3});
  auto e = platform.install("t", program, {});
  EXPECT_EQ(e->measurement(), program.measurement);
  EXPECT_EQ(code_of([&] { e->resume({}); }), Errc::MissingKey);
  Rng rng(1);
  NonceSource nonces(Rng(2));
  auto stray = ae_encrypt(SymKey::random(rng), sk_aad("t"), Bytes(32, 1), nonces);
  EXPECT_EQ(code_of([&] { e->getsk(stray); }), Errc::NoSessionKey);
  RaInitiator ra(PartyId::committee().wire(), rng);
  auto key = ra.finish(e->attest(ra.hello()), program.measurement);
  EXPECT_TRUE(e->has_session(PartyId::committee()));
  EXPECT_EQ(code_of([&] { e->getsk(ae_encrypt(key, sk_aad("other"), Bytes(32, 1), nonces)); }), Errc::AuthFailure);
  auto kp = sig_keygen(random_seed(rng));
  e->getsk(ae_encrypt(key, sk_aad("t"), kp.secret_key.view(), nonces));
  EXPECT_EQ(e->verify_key(), kp.public_key);
  EXPECT_EQ(code_of([&] { e->resume({}); }), Errc::RoundMismatch);
  auto other = platform.install("t", program, {});
  EXPECT_NE(other->eid(), e->eid());
}

TEST(Enclave, CapacityExceededWithoutPaging) {
  PlanLimits roomy;
  DirectRig rig("enc", ModelMeta{{64}}, roomy, 6);
  std::vector<ClientId> who{ClientId{1}, ClientId{2}, ClientId{3}};
  auto entry = rig.plan(Strategy::SingleSGX, who, 0);
  std::map<ClientId, LocalUpdate> ups;
  for (auto c : who) ups.emplace(c, make(c.value, 0, std::vector<double>(64, 1.0)));

  // The planner with the tight limits refuses; an enclave given the layout
  // anyway refuses at resume.
  PlanLimits tight;
  tight.epc_budget = 600;
  EXPECT_EQ(code_of([&] { plan_partitions(Strategy::SingleSGX, who, ModelMeta{{64}}, tight, "enc"); }),
            Errc::CapacityInfeasible);
  DirectRig small("enc", ModelMeta{{64}}, tight, 6);
  small.set_round(entry, 0);
  auto inputs = small.inputs_for(0, ups);
  EXPECT_EQ(code_of([&] { small.enclave(0).resume(inputs); }), Errc::CapacityExceeded);
}

TEST(Enclave, MasterKeyDisagreement) {
  TwoClients t;
  auto entry = t.rig.plan(Strategy::SingleSGX, t.who, 0);
  t.rig.set_round(entry, 0);
  auto ups = t.updates(0);
  Rng rng(40);
  auto other = SymKey::random(rng);
  std::vector<EnclaveInput> inputs{t.rig.seal_input(0, ups.at(ClientId{1})),
                                   t.rig.seal_input(0, ups.at(ClientId{2}), &other)};
  try {
    t.rig.enclave(0).resume(inputs);
    FAIL();
  } catch (const InputRejected& e) {
    EXPECT_EQ(e.code(), Errc::MskDisagreement);
    EXPECT_EQ(e.offender(), ClientId{2});
  }
  // Swapped key envelopes do not open under the other client's session.
  auto swapped = t.rig.inputs_for(0, ups);
  std::swap(swapped[0].ct_msk, swapped[1].ct_msk);
  EXPECT_EQ(code_of([&] { t.rig.enclave(0).resume(swapped); }), Errc::AuthFailure);
}

TEST(Estimates, ResNet18PairNeedsSplitting) {
  auto meta = preset_meta(find_preset("ResNet18"));
  std::vector<std::uint32_t> all(meta.layer_count());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  auto bytes = estimate_enclave_bytes(2, all, meta);
  // 2 clients x 11.18M parameters x 8 bytes, plus headers.
  std::uint64_t oracle = 2 * (kUpdateHeaderBytes + meta.layer_count() * kLayerHeader + 8 * meta.total_elements());
  EXPECT_EQ(bytes, oracle);
  EXPECT_NEAR(static_cast<double>(bytes) / 1e6, 178.9, 0.1);
  EXPECT_GT(bytes, kDefaultEpcBudget);
  PlanLimits lim;
  std::vector<ClientId> two{ClientId{1}, ClientId{2}};
  EXPECT_THROW(plan_partitions(Strategy::SingleSGX, two, meta, lim, "t"), Error);
  EXPECT_GE(plan_partitions(Strategy::ClientMax, two, meta, lim, "t").size(), 2u);
}

TEST(Estimates, PagingCostIsLinearAboveBudget) {
  EnclaveCostModel m{1.0, 20.0};
  std::uint64_t fits[] = {1000};
  std::uint64_t over[] = {2000};
  EXPECT_EQ(m.resume_ns(fits, 1000, true), 1000);
  EXPECT_EQ(m.resume_ns(over, 1000, true), 2000 + 20 * 1000);
  EXPECT_EQ(m.resume_ns(over, 1000, false), 2000);
}

TEST(Output, ShardCodecAndChunking) {
  std::vector<ShardEntry> es{{0, 5, true, {1.0, 2.0}}, {3, 0, false, {}}};
  auto b = encode_shard(es);
  EXPECT_EQ(decode_shard(b), es);
  b.pop_back();
  EXPECT_THROW(decode_shard(b), Error);

  PartitionDescriptor d;
  d.steps.push_back({{{0, {ClientId{1}}}}});
  ModelMeta meta{{1000}};
  auto big = chunk_count_for(d, "t", meta, 2'000'000);
  auto small = chunk_count_for(d, "t", meta, 1000);
  EXPECT_EQ(big, 1u);
  auto env = encoded_envelope_size(output_aad("t", 0, 0).size(), shard_size(d, meta));
  EXPECT_EQ(small, (env + 999) / 1000);
}

TEST(Output, ChunkedOutputReassembles) {
  PlanLimits lim;
  lim.tx_capacity = 50;
  DirectRig rig("enc", ModelMeta{{6, 2}}, lim, 8);
  std::vector<ClientId> who{ClientId{1}, ClientId{2}, ClientId{3}};
  std::map<ClientId, LocalUpdate> ups;
  std::vector<LocalUpdate> flat;
  for (auto c : who) {
    LocalUpdate u;
    u.taskid = "enc";
    u.client = c;
    u.dataset_size = c.value + 1;
    u.weights.layers = {{0, std::vector<double>(6, 0.5 * c.value)}, {1, {1.0 * c.value, -2.0}}};
    ups.emplace(c, u);
    flat.push_back(u);
  }
  auto entry = rig.plan(Strategy::SingleSGX, who, 0);
  EXPECT_GT(entry.expected_chunks, 1u);
  std::vector<SignedChunk> chunks;
  auto w = rig.run_round(entry, ups, fedavg(flat), &chunks);
  EXPECT_EQ(chunks.size(), entry.expected_chunks);
  auto ref = fedavg(flat);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t k = 0; k < ref.layers[l].elements.size(); ++k)
      EXPECT_DOUBLE_EQ(w.layers[l].elements[k], ref.layers[l].elements[k]);
  chunks.pop_back();
  EXPECT_EQ(code_of([&] { assemble_global(entry, chunks, rig.msk(), "enc", ref); }), Errc::Incomplete);
}

TEST(Descriptor, CodecAndQueries) {
  PartitionDescriptor d;
  d.partition = 2;
  d.revision = 1;
  d.chunk_base = 4;
  d.chunk_count = 2;
  d.steps.push_back({{{0, {ClientId{1}, ClientId{2}}}, {1, {ClientId{2}}}}});
  d.normalized_layers = {1};
  auto b = encode_descriptor(d);
  ByteReader r(b, Errc::MalformedFrame);
  EXPECT_EQ(decode_descriptor(r), d);
  EXPECT_EQ(d.cell_count(), 3u);
  EXPECT_EQ(d.layers_of(ClientId{2}), (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(d.clients(), (std::vector<ClientId>{ClientId{1}, ClientId{2}}));
}
