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

// Symmetric AEAD (AES-128-GCM), ECDSA over NIST P-256, SHA-256 and a
// measurement-bound ECDH key agreement standing in for remote attestation.
// All primitives are byte-string in / byte-string out; randomness comes from
// a caller-owned seeded generator so whole runs are reproducible.

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>
#include <unordered_set>

#include "voltsim/bytes.hpp"

namespace voltsim {

inline constexpr std::size_t kSymKeyBytes = 16;
inline constexpr std::size_t kNonceBytes = 12;
inline constexpr std::size_t kTagBytes = 16;
inline constexpr std::size_t kSignatureBytes = 64;
inline constexpr std::size_t kPublicPointBytes = 65;

using Digest = std::array<std::uint8_t, 32>;
using Nonce = std::array<std::uint8_t, kNonceBytes>;
/// Hash of an enclave program's code identity.
using Measurement = Digest;

Digest sha256(ByteView data);
Digest sha256(std::initializer_list<ByteView> parts);

/// Seeded pseudo-random source. Simulation-grade (mt19937_64), never a CSPRNG.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform in [lo, hi].
  double uniform(double lo, double hi);
  void fill(std::span<std::uint8_t> out);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

struct SymKey {
  std::array<std::uint8_t, kSymKeyBytes> bytes{};

  static SymKey random(Rng& rng);
  ByteView view() const { return bytes; }
  bool operator==(const SymKey&) const = default;
};

/// Draws 12-byte GCM nonces and refuses to hand out the same (key, nonce)
/// pair twice over its lifetime.
class NonceSource {
 public:
  explicit NonceSource(Rng rng) : rng_(std::move(rng)) {}

  Nonce draw(const SymKey& key);
  std::size_t issued() const { return used_.size(); }

 private:
  Rng rng_;
  std::unordered_set<std::string> used_;
};

struct Envelope {
  Nonce nonce{};
  Bytes aad;
  Bytes ciphertext;
  std::array<std::uint8_t, kTagBytes> tag{};

  bool operator==(const Envelope&) const = default;
};

/// nonce(12) + aad-len(u16) + aad + ct-len(u32) + ct + tag(16)
Bytes encode_envelope(const Envelope& env);
void encode_envelope(ByteWriter& out, const Envelope& env);
Envelope decode_envelope(ByteReader& in);
/// Decodes a buffer holding exactly one envelope.
Envelope decode_envelope(ByteView data);
constexpr std::size_t encoded_envelope_size(std::size_t aad_bytes, std::size_t ct_bytes) {
  return kNonceBytes + 2 + aad_bytes + 4 + ct_bytes + kTagBytes;
}

Envelope ae_encrypt(const SymKey& key, ByteView aad, ByteView plaintext, NonceSource& nonces);
/// Explicit-nonce variant; exists for known-answer tests.
Envelope ae_encrypt_with_nonce(const SymKey& key, const Nonce& nonce, ByteView aad,
                               ByteView plaintext);
/// Throws Error(AuthFailure) if any bit of the envelope or its aad was altered
/// or the key is wrong.
Bytes ae_decrypt(const SymKey& key, const Envelope& env);

/// Injectable AEAD so tests can swap in a deliberately broken cipher.
class Aead {
 public:
  virtual ~Aead() = default;
  virtual Envelope seal(const SymKey& key, ByteView aad, ByteView plaintext,
                        NonceSource& nonces) const = 0;
  virtual Bytes open(const SymKey& key, const Envelope& env) const = 0;
};

class AesGcmAead final : public Aead {
 public:
  Envelope seal(const SymKey& key, ByteView aad, ByteView plaintext,
                NonceSource& nonces) const override {
    return ae_encrypt(key, aad, plaintext, nonces);
  }
  Bytes open(const SymKey& key, const Envelope& env) const override {
    return ae_decrypt(key, env);
  }
};

const Aead& default_aead();

// ---- signatures ----------------------------------------------------------

using Seed32 = std::array<std::uint8_t, 32>;

struct VerifyKey {
  /// Uncompressed SEC1 point, 65 bytes.
  Bytes point;
  bool operator==(const VerifyKey&) const = default;
};

struct SigningKey {
  std::array<std::uint8_t, 32> scalar{};
  ByteView view() const { return scalar; }
};

struct SigKeyPair {
  VerifyKey public_key;
  SigningKey secret_key;
};

/// Fixed-width r || s, each 32 bytes big-endian.
struct Signature {
  Bytes bytes;
  bool operator==(const Signature&) const = default;
};

/// Deterministic: the same seed always yields the same key pair.
SigKeyPair sig_keygen(const Seed32& seed);
Seed32 random_seed(Rng& rng);
/// Recomputes the public point for a secret scalar (used inside enclaves
/// after sk delivery).
VerifyKey public_key_of(const SigningKey& sk);
Signature sig_sign(const SigningKey& sk, ByteView message);
/// Never throws. Malformed keys or signatures yield false.
bool sig_verify(const VerifyKey& pk, ByteView message, const Signature& sig);

// ---- attestation-style key agreement ---------------------------------------

struct RaHello {
  std::uint64_t initiator = 0;
  Bytes ephemeral;  // initiator's ephemeral public point
};

struct RaReply {
  std::uint64_t responder = 0;
  Measurement measurement{};  // measurement the responder reports as installed
  Bytes ephemeral;            // responder's ephemeral public point
  Digest confirm{};           // key confirmation over the transcript
};

Bytes encode_ra_hello(const RaHello& h);
RaHello decode_ra_hello(ByteReader& in);
Bytes encode_ra_reply(const RaReply& r);
RaReply decode_ra_reply(ByteReader& in);

/// Initiating side of the handshake (a client, the committee or the owner).
class RaInitiator {
 public:
  RaInitiator(std::uint64_t self, Rng& rng);

  const RaHello& hello() const { return hello_; }
  /// Derives the session key. Throws MeasurementMismatch when the responder's
  /// program hash differs from `expected`, or when key confirmation fails.
  SymKey finish(const RaReply& reply, const Measurement& expected) const;

 private:
  std::uint64_t self_;
  std::array<std::uint8_t, 32> scalar_{};
  RaHello hello_;
};

struct RaResponse {
  RaReply reply;
  SymKey key;
};

/// Responding side: runs inside the enclave with its installed measurement.
RaResponse ra_respond(const RaHello& hello, std::uint64_t responder,
                      const Measurement& installed, Rng& rng);

/// Both halves in one call, for direct (transport-free) use. Returns the
/// shared key after checking both ends derived the same one.
SymKey ra_key_exchange(std::uint64_t initiator, std::uint64_t responder,
                       const Measurement& expected, const Measurement& installed, Rng& rng);

}  // namespace voltsim
