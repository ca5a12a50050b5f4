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

#include <set>

#include <gtest/gtest.h>

#include "voltsim/crypto.hpp"

using namespace voltsim;

namespace {

SymKey key_from_hex(std::string_view hex) {
  auto b = from_hex(hex);
  SymKey k;
  std::copy(b.begin(), b.end(), k.bytes.begin());
  return k;
}

Nonce nonce_from_hex(std::string_view hex) {
  auto b = from_hex(hex);
  Nonce n;
  std::copy(b.begin(), b.end(), n.begin());
  return n;
}

struct GcmVector {
  const char* key;
  const char* iv;
  const char* pt;
  const char* aad;
  const char* ct;
  const char* tag;
};

// AES-128 cases from the GCM specification's test set; cross-checked against
// a second implementation when frozen.
const GcmVector kGcm[] = {
    {"00000000000000000000000000000000", "000000000000000000000000", "", "", "",
     "58e2fccefa7e3061367f1d57a4e7455a"},
    {"00000000000000000000000000000000", "000000000000000000000000", "00000000000000000000000000000000", "",
     "0388dace60b6a392f328c2b971b2fe78", "ab6e47d42cec13bdf53a67b21257bddf"},
    {"feffe9928665731c6d6a8f9467308308", "cafebabefacedbaddecaf888",
     "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa"
     "0de657ba637b391aafd255",
     "",
     "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a"
     "0aac973d58e091473f5985",
     "4d5c2af327cd64a62cf35abd2ba6fab4"},
    {"feffe9928665731c6d6a8f9467308308", "cafebabefacedbaddecaf888",
     "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa"
     "0de657ba637b39",
     "feedfacedeadbeeffeedfacedeadbeefabaddad2",
     "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a"
     "0aac973d58e091",
     "5bc94fbc3221a5db94fae95ae7121a47"},
};

}  // namespace

TEST(Gcm, KnownAnswerVectors) {
  for (const auto& v : kGcm) {
    auto env = ae_encrypt_with_nonce(key_from_hex(v.key), nonce_from_hex(v.iv), from_hex(v.aad), from_hex(v.pt));
    EXPECT_EQ(to_hex(env.ciphertext), v.ct);
    EXPECT_EQ(to_hex(env.tag), v.tag);
    EXPECT_EQ(to_hex(ae_decrypt(key_from_hex(v.key), env)), v.pt);
  }
}

TEST(Gcm, EveryBitFlipFailsAuthentication) {
  Rng rng(3);
  NonceSource nonces(Rng(4));
  auto key = SymKey::random(rng);
  auto env = ae_encrypt(key, as_bytes("ctx"), as_bytes("some plaintext bytes"), nonces);
  auto wire = encode_envelope(env);
  for (std::size_t bit = 0; bit < wire.size() * 8; ++bit) {
    auto bad = wire;
    bad[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      ae_decrypt(key, decode_envelope(bad));
      ADD_FAILURE() << "bit " << bit << " accepted";
    } catch (const Error& e) {
      // Length-field flips fail decoding, everything else fails the tag.
      EXPECT_TRUE(e.code() == Errc::AuthFailure || e.code() == Errc::MalformedFrame) << e.what();
    }
  }
}

TEST(Gcm, WrongKeyIsAuthFailure) {
  Rng rng(5);
  NonceSource nonces(Rng(6));
  auto k1 = SymKey::random(rng);
  auto k2 = SymKey::random(rng);
  auto env = ae_encrypt(k1, {}, as_bytes("x"), nonces);
  try {
    ae_decrypt(k2, env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AuthFailure);
  }
}

TEST(Gcm, NoncesNeverRepeatPerKey) {
  Rng rng(7);
  NonceSource nonces(Rng(8));
  auto key = SymKey::random(rng);
  std::set<Nonce> seen;
  for (int i = 0; i < 5000; ++i) EXPECT_TRUE(seen.insert(nonces.draw(key)).second);
  EXPECT_EQ(nonces.issued(), 5000u);
}

TEST(Gcm, EnvelopeCodecRoundTrips) {
  Rng rng(9);
  NonceSource nonces(Rng(10));
  auto key = SymKey::random(rng);
  auto env = ae_encrypt(key, as_bytes("aad"), as_bytes("payload"), nonces);
  auto bytes = encode_envelope(env);
  EXPECT_EQ(bytes.size(), encoded_envelope_size(3, 7));
  EXPECT_EQ(decode_envelope(bytes), env);
  bytes.push_back(0);
  EXPECT_THROW(decode_envelope(ByteView(bytes)), Error);
}

TEST(Signature, SignVerifyAndDeterministicKeygen) {
  Seed32 seed{};
  seed[0] = 42;
  auto a = sig_keygen(seed);
  auto b = sig_keygen(seed);
  EXPECT_EQ(a.public_key, b.public_key);
  EXPECT_EQ(a.public_key.point.size(), kPublicPointBytes);
  EXPECT_EQ(public_key_of(a.secret_key), a.public_key);

  auto sig = sig_sign(a.secret_key, as_bytes("message"));
  EXPECT_EQ(sig.bytes.size(), kSignatureBytes);
  EXPECT_TRUE(sig_verify(a.public_key, as_bytes("message"), sig));
  EXPECT_FALSE(sig_verify(a.public_key, as_bytes("messagf"), sig));

  seed[0] = 43;
  auto other = sig_keygen(seed);
  EXPECT_FALSE(sig_verify(other.public_key, as_bytes("message"), sig));
}

TEST(Signature, SingleBitMutationsNeverVerify) {
  Rng rng(11);
  auto kp = sig_keygen(random_seed(rng));
  Bytes msg(200);
  rng.fill(msg);
  auto sig = sig_sign(kp.secret_key, msg);
  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    auto bad = sig;
    auto bit = rng.below(bad.bytes.size() * 8);
    bad.bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    accepted += sig_verify(kp.public_key, msg, bad);
  }
  EXPECT_EQ(accepted, 0);
}

TEST(Signature, MalformedInputsAreFalseNotThrow) {
  Rng rng(12);
  auto kp = sig_keygen(random_seed(rng));
  auto sig = sig_sign(kp.secret_key, as_bytes("m"));
  EXPECT_FALSE(sig_verify(VerifyKey{}, as_bytes("m"), sig));
  EXPECT_FALSE(sig_verify(kp.public_key, as_bytes("m"), Signature{}));
  EXPECT_FALSE(sig_verify(VerifyKey{Bytes(65, 0x04)}, as_bytes("m"), sig));
}

TEST(Attestation, MatchingMeasurementAgreesOnKey) {
  Rng rng(13);
  auto m = sha256(as_bytes("program"));
  RaInitiator ra(1, rng);
  auto resp = ra_respond(ra.hello(), 99, m, rng);
  EXPECT_EQ(ra.finish(resp.reply, m), resp.key);
  EXPECT_EQ(resp.reply.measurement, m);
}

TEST(Attestation, MeasurementMismatchIsRejected) {
  Rng rng(14);
  auto good = sha256(as_bytes("program"));
  auto evil = sha256(as_bytes("program'"));
  try {
    ra_key_exchange(1, 2, good, evil, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MeasurementMismatch);
  }
  RaInitiator ra(1, rng);
  auto resp = ra_respond(ra.hello(), 2, good, rng);
  auto forged = resp.reply;
  forged.confirm[0] ^= 1;
  EXPECT_THROW(ra.finish(forged, good), Error);
}

TEST(Attestation, DistinctPairsGetDistinctKeys) {
  Rng rng(15);
  auto m = sha256(as_bytes("program"));
  std::set<std::array<std::uint8_t, kSymKeyBytes>> keys;
  for (std::uint64_t client = 1; client <= 50; ++client) {
    for (std::uint64_t eid = 1; eid <= 4; ++eid) {
      EXPECT_TRUE(keys.insert(ra_key_exchange(client, eid, m, m, rng).bytes).second);
    }
  }
}

TEST(Attestation, MessagesRoundTrip) {
  Rng rng(16);
  auto m = sha256(as_bytes("p"));
  RaInitiator ra(7, rng);
  auto hb = encode_ra_hello(ra.hello());
  ByteReader hr(hb, Errc::MalformedFrame);
  auto h = decode_ra_hello(hr);
  EXPECT_EQ(h.initiator, 7u);
  EXPECT_EQ(h.ephemeral, ra.hello().ephemeral);
  auto resp = ra_respond(h, 3, m, rng);
  auto rb = encode_ra_reply(resp.reply);
  ByteReader rr(rb, Errc::MalformedFrame);
  auto r = decode_ra_reply(rr);
  EXPECT_EQ(ra.finish(r, m), resp.key);
}

TEST(Hash, Sha256KnownAnswer) {
  EXPECT_EQ(to_hex(sha256(as_bytes("abc"))), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256({as_bytes("a"), as_bytes("bc")}), sha256(as_bytes("abc")));
}
