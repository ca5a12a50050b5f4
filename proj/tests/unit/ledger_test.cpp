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

#include "voltsim/ledger.hpp"

using namespace voltsim;

namespace {

const PartyId kComm = PartyId::committee();
const PartyId kClient = PartyId::client(ClientId{3});

SignedChunk signed_chunk(const SigningKey& sk, RoundIndex round, ChunkIndex index, Bytes ct = {1, 2, 3, 4}) {
  SignedChunk c{"t", round, index, std::move(ct), {}};
  c.sigma = sig_sign(sk, canonical_message(c));
  return c;
}

struct Fixture {
  LedgerState ledger;
  SigKeyPair keys;
  Fixture() {
    Rng rng(1);
    keys = sig_keygen(random_seed(rng));
    ledger.create_task(7, "t");
    EXPECT_TRUE(ledger.upload_pk(kComm, "t", keys.public_key).accepted);
  }
};

}  // namespace

TEST(Ledger, CreateTaskTwiceIsDuplicate) {
  LedgerState l;
  l.create_task(1, "a");
  try {
    l.create_task(2, "a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DuplicateTask);
  }
  EXPECT_TRUE(l.has_task("a"));
  EXPECT_EQ(l.current_round("a"), 0u);
  EXPECT_FALSE(l.current_round("b"));
}

TEST(Ledger, OnlyCommitteeUploadsKeys) {
  LedgerState l;
  Rng rng(2);
  auto k1 = sig_keygen(random_seed(rng));
  auto k2 = sig_keygen(random_seed(rng));
  EXPECT_EQ(l.upload_pk(kComm, "t", k1.public_key).reason, RejectReason::UnknownTask);
  l.create_task(1, "t");
  EXPECT_EQ(l.upload_pk(kClient, "t", k1.public_key).reason, RejectReason::Unauthorized);
  EXPECT_TRUE(l.upload_pk(kComm, "t", k1.public_key).accepted);
  // Rotation replaces the key: old signatures stop verifying.
  EXPECT_TRUE(l.upload_pk(kComm, "t", k2.public_key).accepted);
  EXPECT_EQ(l.verify_key("t"), k2.public_key);
  ASSERT_TRUE(l.declare_round(kComm, "t", 0, 2).accepted);
  EXPECT_EQ(l.upload_global_model(kClient, signed_chunk(k1.secret_key, 0, 0)).reason, RejectReason::BadSignature);
  EXPECT_TRUE(l.upload_global_model(kClient, signed_chunk(k2.secret_key, 0, 0)).accepted);
}

TEST(Ledger, RejectionReasonsInCheckOrder) {
  LedgerState l;
  Rng rng(3);
  auto k = sig_keygen(random_seed(rng));
  auto c = signed_chunk(k.secret_key, 0, 0);
  EXPECT_EQ(l.upload_global_model(kClient, c).reason, RejectReason::UnknownTask);
  l.create_task(1, "t");
  EXPECT_EQ(l.upload_global_model(kClient, c).reason, RejectReason::NoKey);
  l.upload_pk(kComm, "t", k.public_key);
  EXPECT_EQ(l.upload_global_model(kClient, signed_chunk(k.secret_key, 1, 0)).reason, RejectReason::WrongRound);
  EXPECT_EQ(l.upload_global_model(kClient, c).reason, RejectReason::IndexOutOfRange);  // not declared
  EXPECT_EQ(l.declare_round(kClient, "t", 0, 2).reason, RejectReason::Unauthorized);
  ASSERT_TRUE(l.declare_round(kComm, "t", 0, 2).accepted);
  EXPECT_EQ(l.upload_global_model(kClient, signed_chunk(k.secret_key, 0, 2)).reason, RejectReason::IndexOutOfRange);
  EXPECT_TRUE(l.upload_global_model(kClient, c).accepted);
  EXPECT_EQ(l.upload_global_model(kClient, c).reason, RejectReason::DuplicateIndex);
  EXPECT_EQ(l.stored_chunks(), 1u);
}

TEST(Ledger, RoundAdvancesWhenComplete) {
  Fixture f;
  auto& l = f.ledger;
  l.declare_round(kComm, "t", 0, 2);
  EXPECT_TRUE(l.upload_global_model(kClient, signed_chunk(f.keys.secret_key, 0, 1)).accepted);
  auto partial = l.read("t", 0);
  EXPECT_EQ(partial.status, ReadStatus::Incomplete);
  EXPECT_EQ(partial.present, (std::vector<ChunkIndex>{1}));
  EXPECT_TRUE(partial.chunks.empty());
  EXPECT_EQ(l.current_round("t"), 0u);
  EXPECT_TRUE(l.upload_global_model(kClient, signed_chunk(f.keys.secret_key, 0, 0)).accepted);
  EXPECT_EQ(l.current_round("t"), 1u);
  auto full = l.read("t", 0);
  EXPECT_EQ(full.status, ReadStatus::Complete);
  ASSERT_EQ(full.chunks.size(), 2u);
  EXPECT_EQ(full.chunks[0].index, 0u);
  EXPECT_EQ(l.read("t", 5).status, ReadStatus::NotFound);
  EXPECT_EQ(l.read("nope", 0).status, ReadStatus::NotFound);
  // A chunk of the finished round is now out of turn.
  EXPECT_EQ(l.upload_global_model(kClient, signed_chunk(f.keys.secret_key, 0, 0)).reason, RejectReason::WrongRound);
  // Declaring a past round is refused.
  EXPECT_EQ(l.declare_round(kComm, "t", 0, 2).reason, RejectReason::WrongRound);
}

TEST(Ledger, PreDeclaredNextRoundCompletesInOrder) {
  Fixture f;
  auto& l = f.ledger;
  l.declare_round(kComm, "t", 0, 1);
  l.declare_round(kComm, "t", 1, 1);
  l.upload_global_model(kClient, signed_chunk(f.keys.secret_key, 0, 0));
  EXPECT_TRUE(l.upload_global_model(kClient, signed_chunk(f.keys.secret_key, 1, 0)).accepted);
  EXPECT_EQ(l.current_round("t"), 2u);
}

TEST(Ledger, BitFlipsInChunkFieldsAreRejected) {
  Fixture f;
  auto& l = f.ledger;
  l.declare_round(kComm, "t", 0, 4);
  Rng rng(9);
  Bytes ct(300);
  rng.fill(ct);
  auto good = signed_chunk(f.keys.secret_key, 0, 1, ct);
  int accepted = 0;
  for (int i = 0; i < 400; ++i) {
    auto bad = good;
    switch (i % 4) {
      case 0: bad.ct_out[rng.below(bad.ct_out.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8)); break;
      case 1: bad.sigma.bytes[rng.below(bad.sigma.bytes.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8)); break;
      case 2: bad.round ^= 1ull << rng.below(64); break;
      case 3: bad.index ^= 1u << rng.below(32); break;
    }
    accepted += l.upload_global_model(kClient, bad).accepted;
  }
  EXPECT_EQ(accepted, 0);
  EXPECT_EQ(l.stored_chunks(), 0u);
  EXPECT_TRUE(l.upload_global_model(kClient, good).accepted);
}

TEST(Ledger, EventsAndPayloads) {
  Fixture f;
  auto& l = f.ledger;
  l.declare_round(kComm, "t", 0, 1);
  l.upload_global_model(kClient, signed_chunk(f.keys.secret_key, 0, 0, {9, 9}));
  l.reward("t", "node:1");
  l.penalize("t", "node:2");
  auto ev = l.events();
  ASSERT_GE(ev.size(), 4u);
  EXPECT_EQ(ev.back().kind, "penalty");
  EXPECT_EQ(l.stored_bytes(), 2u);
  ASSERT_EQ(l.stored_payloads().size(), 1u);
  EXPECT_EQ(l.stored_payloads()[0], canonical_message("t", 0, 0, Bytes{9, 9}));
}

TEST(ChainModel, PresetsAndRatios) {
  auto fabric = chain_preset("fabric");
  auto mod = chain_preset("fabric-mod");
  auto tm = chain_preset("tendermint");
  EXPECT_THROW(chain_preset("eth"), Error);
  for (std::uint64_t bytes : {1ull, 2'000'000ull, 60'000'001ull, 500'000'000ull}) {
    auto a = apply_chain_model(bytes, fabric);
    auto b = apply_chain_model(bytes, mod);
    auto c = apply_chain_model(bytes, tm);
    EXPECT_EQ(2 * b, a) << bytes;
    EXPECT_LE(c, b) << bytes;
  }
  EXPECT_EQ(apply_chain_model(0, fabric), 0);
  EXPECT_EQ(transactions_for(4'000'001, fabric), 3u);
  EXPECT_EQ(blocks_for(31, fabric), 2u);
  EXPECT_EQ(blocks_for(31, tm), 1u);
}
