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

#define OPENSSL_SUPPRESS_DEPRECATED

#include "voltsim/crypto.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/ecdsa.h>
#include <openssl/evp.h>
#include <openssl/obj_mac.h>
#include <openssl/sha.h>

#include <cstring>
#include <memory>

namespace voltsim {

namespace {

template <auto Fn>
struct Deleter {
  template <class T>
  void operator()(T* p) const { Fn(p); }
};

using BnPtr = std::unique_ptr<BIGNUM, Deleter<BN_clear_free>>;
using BnCtxPtr = std::unique_ptr<BN_CTX, Deleter<BN_CTX_free>>;
using PointPtr = std::unique_ptr<EC_POINT, Deleter<EC_POINT_free>>;
using EcKeyPtr = std::unique_ptr<EC_KEY, Deleter<EC_KEY_free>>;
using SigPtr = std::unique_ptr<ECDSA_SIG, Deleter<ECDSA_SIG_free>>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, Deleter<EVP_CIPHER_CTX_free>>;

const EC_GROUP* p256() {
  static const EC_GROUP* group = EC_GROUP_new_by_curve_name(NID_X9_62_prime256v1);
  return group;
}

[[noreturn]] void openssl_failure(const char* what) {
  throw std::runtime_error(std::string("openssl failure: ") + what);
}

BnPtr bn_from(ByteView bytes) {
  BnPtr bn(BN_bin2bn(bytes.data(), static_cast<int>(bytes.size()), nullptr));
  if (!bn) openssl_failure("BN_bin2bn");
  return bn;
}

// Valid scalars are in [1, n-1].
bool scalar_in_range(const BIGNUM* k) {
  return !BN_is_zero(k) && BN_cmp(k, EC_GROUP_get0_order(p256())) < 0;
}

// Rejection-samples a scalar from a stream of 32-byte candidates.
template <class NextCandidate>
std::array<std::uint8_t, 32> sample_scalar(NextCandidate next) {
  for (;;) {
    std::array<std::uint8_t, 32> candidate = next();
    auto bn = bn_from(candidate);
    if (scalar_in_range(bn.get())) return candidate;
  }
}

PointPtr mul_generator(ByteView scalar, BN_CTX* ctx) {
  auto k = bn_from(scalar);
  PointPtr pt(EC_POINT_new(p256()));
  if (!pt || EC_POINT_mul(p256(), pt.get(), k.get(), nullptr, nullptr, ctx) != 1) {
    openssl_failure("EC_POINT_mul");
  }
  return pt;
}

Bytes point_bytes(const EC_POINT* pt, BN_CTX* ctx) {
  Bytes out(kPublicPointBytes);
  auto n = EC_POINT_point2oct(p256(), pt, POINT_CONVERSION_UNCOMPRESSED, out.data(), out.size(),
                              ctx);
  if (n != kPublicPointBytes) openssl_failure("EC_POINT_point2oct");
  return out;
}

PointPtr parse_point(ByteView bytes, BN_CTX* ctx) {
  PointPtr pt(EC_POINT_new(p256()));
  if (!pt) openssl_failure("EC_POINT_new");
  if (bytes.size() != kPublicPointBytes ||
      EC_POINT_oct2point(p256(), pt.get(), bytes.data(), bytes.size(), ctx) != 1 ||
      EC_POINT_is_on_curve(p256(), pt.get(), ctx) != 1) {
    return nullptr;
  }
  return pt;
}

// x-coordinate of scalar * peer.
std::array<std::uint8_t, 32> ecdh(ByteView scalar, ByteView peer_point) {
  BnCtxPtr ctx(BN_CTX_new());
  auto peer = parse_point(peer_point, ctx.get());
  if (!peer) throw Error(Errc::AuthFailure, "peer ephemeral is not a valid P-256 point");
  auto k = bn_from(scalar);
  PointPtr shared(EC_POINT_new(p256()));
  if (!shared || EC_POINT_mul(p256(), shared.get(), nullptr, peer.get(), k.get(), ctx.get()) != 1) {
    openssl_failure("ECDH multiply");
  }
  BnPtr x(BN_new());
  if (!x || EC_POINT_get_affine_coordinates(p256(), shared.get(), x.get(), nullptr, ctx.get()) != 1) {
    openssl_failure("EC_POINT_get_affine_coordinates");
  }
  std::array<std::uint8_t, 32> out{};
  BN_bn2binpad(x.get(), out.data(), static_cast<int>(out.size()));
  return out;
}

std::array<std::uint8_t, 8> be64(std::uint64_t v) {
  std::array<std::uint8_t, 8> out{};
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
  return out;
}

SymKey derive_session_key(ByteView shared_x, std::uint64_t initiator, std::uint64_t responder,
                          const Measurement& measurement) {
  auto ini = be64(initiator);
  auto res = be64(responder);
  auto digest = sha256({as_bytes("voltsim-ssk"), shared_x, ini, res, measurement});
  SymKey key;
  std::memcpy(key.bytes.data(), digest.data(), kSymKeyBytes);
  return key;
}

Digest confirm_tag(const SymKey& key, ByteView initiator_eph, ByteView responder_eph) {
  return sha256({as_bytes("voltsim-ra-confirm"), key.view(), initiator_eph, responder_eph});
}

}  // namespace

// ---- hashing / randomness -------------------------------------------------

Digest sha256(ByteView data) { return sha256({data}); }

Digest sha256(std::initializer_list<ByteView> parts) {
  SHA256_CTX ctx;
  SHA256_Init(&ctx);
  for (auto part : parts) SHA256_Update(&ctx, part.data(), part.size());
  Digest out{};
  SHA256_Final(out.data(), &ctx);
  return out;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

void Rng::fill(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    auto word = engine_();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
      out[i] = static_cast<std::uint8_t>(word >> (8 * b));
    }
  }
}

SymKey SymKey::random(Rng& rng) {
  SymKey k;
  rng.fill(k.bytes);
  return k;
}

Nonce NonceSource::draw(const SymKey& key) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    Nonce n{};
    rng_.fill(n);
    std::string id(reinterpret_cast<const char*>(key.bytes.data()), key.bytes.size());
    id.append(reinterpret_cast<const char*>(n.data()), n.size());
    if (used_.insert(std::move(id)).second) return n;
  }
  throw Error(Errc::NonceReuse, "nonce generator keeps repeating for this key");
}

// ---- envelopes / AEAD -------------------------------------------------------

void encode_envelope(ByteWriter& out, const Envelope& env) {
  if (env.aad.size() > 0xffff) throw Error(Errc::InvalidConfig, "aad longer than 65535 bytes");
  out.raw(env.nonce);
  out.u16(static_cast<std::uint16_t>(env.aad.size()));
  out.raw(env.aad);
  out.u32(static_cast<std::uint32_t>(env.ciphertext.size()));
  out.raw(env.ciphertext);
  out.raw(env.tag);
}

Bytes encode_envelope(const Envelope& env) {
  ByteWriter w(encoded_envelope_size(env.aad.size(), env.ciphertext.size()));
  encode_envelope(w, env);
  return std::move(w).take();
}

Envelope decode_envelope(ByteReader& in) {
  Envelope env;
  auto nonce = in.raw(kNonceBytes);
  std::copy(nonce.begin(), nonce.end(), env.nonce.begin());
  auto aad_len = in.u16();
  auto aad = in.raw(aad_len);
  env.aad.assign(aad.begin(), aad.end());
  auto ct_len = in.u32();
  auto ct = in.raw(ct_len);
  env.ciphertext.assign(ct.begin(), ct.end());
  auto tag = in.raw(kTagBytes);
  std::copy(tag.begin(), tag.end(), env.tag.begin());
  return env;
}

Envelope decode_envelope(ByteView data) {
  ByteReader in(data, Errc::AuthFailure);
  auto env = decode_envelope(in);
  in.expect_done();
  return env;
}

Envelope ae_encrypt(const SymKey& key, ByteView aad, ByteView plaintext, NonceSource& nonces) {
  return ae_encrypt_with_nonce(key, nonces.draw(key), aad, plaintext);
}

Envelope ae_encrypt_with_nonce(const SymKey& key, const Nonce& nonce, ByteView aad,
                               ByteView plaintext) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  Envelope env;
  env.nonce = nonce;
  env.aad.assign(aad.begin(), aad.end());
  env.ciphertext.resize(plaintext.size());
  int len = 0;
  if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) != 1 ||
      EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes.data(), nonce.data()) != 1) {
    openssl_failure("gcm encrypt init");
  }
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
    openssl_failure("gcm aad");
  }
  if (!plaintext.empty() &&
      EVP_EncryptUpdate(ctx.get(), env.ciphertext.data(), &len, plaintext.data(),
                        static_cast<int>(plaintext.size())) != 1) {
    openssl_failure("gcm encrypt");
  }
  if (EVP_EncryptFinal_ex(ctx.get(), env.ciphertext.data() + env.ciphertext.size(), &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagBytes, env.tag.data()) != 1) {
    openssl_failure("gcm finalize");
  }
  return env;
}

Bytes ae_decrypt(const SymKey& key, const Envelope& env) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) openssl_failure("EVP_CIPHER_CTX_new");
  Bytes plaintext(env.ciphertext.size());
  int len = 0;
  if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) != 1 ||
      EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.bytes.data(), env.nonce.data()) != 1) {
    openssl_failure("gcm decrypt init");
  }
  if (!env.aad.empty() && EVP_DecryptUpdate(ctx.get(), nullptr, &len, env.aad.data(),
                                            static_cast<int>(env.aad.size())) != 1) {
    openssl_failure("gcm aad");
  }
  if (!env.ciphertext.empty() &&
      EVP_DecryptUpdate(ctx.get(), plaintext.data(), &len, env.ciphertext.data(),
                        static_cast<int>(env.ciphertext.size())) != 1) {
    openssl_failure("gcm decrypt");
  }
  auto tag = env.tag;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagBytes, tag.data()) != 1) {
    openssl_failure("gcm set tag");
  }
  if (EVP_DecryptFinal_ex(ctx.get(), plaintext.data() + plaintext.size(), &len) != 1) {
    throw Error(Errc::AuthFailure, "envelope failed authentication");
  }
  return plaintext;
}

const Aead& default_aead() {
  static const AesGcmAead aead;
  return aead;
}

// ---- signatures -------------------------------------------------------------

SigKeyPair sig_keygen(const Seed32& seed) {
  std::uint32_t counter = 0;
  auto scalar = sample_scalar([&] {
    std::array<std::uint8_t, 4> ctr{static_cast<std::uint8_t>(counter >> 24),
                                    static_cast<std::uint8_t>(counter >> 16),
                                    static_cast<std::uint8_t>(counter >> 8),
                                    static_cast<std::uint8_t>(counter)};
    ++counter;
    return sha256({as_bytes("voltsim-sig-keygen"), seed, ctr});
  });
  SigKeyPair kp;
  kp.secret_key.scalar = scalar;
  kp.public_key = public_key_of(kp.secret_key);
  return kp;
}

Seed32 random_seed(Rng& rng) {
  Seed32 s{};
  rng.fill(s);
  return s;
}

VerifyKey public_key_of(const SigningKey& sk) {
  BnCtxPtr ctx(BN_CTX_new());
  auto pt = mul_generator(sk.scalar, ctx.get());
  return VerifyKey{point_bytes(pt.get(), ctx.get())};
}

Signature sig_sign(const SigningKey& sk, ByteView message) {
  auto digest = sha256(message);
  EcKeyPtr key(EC_KEY_new());
  if (!key || EC_KEY_set_group(key.get(), p256()) != 1) openssl_failure("EC_KEY init");
  auto priv = bn_from(sk.scalar);
  if (EC_KEY_set_private_key(key.get(), priv.get()) != 1) openssl_failure("EC_KEY_set_private_key");
  SigPtr sig(ECDSA_do_sign(digest.data(), static_cast<int>(digest.size()), key.get()));
  if (!sig) openssl_failure("ECDSA_do_sign");
  const BIGNUM* r = nullptr;
  const BIGNUM* s = nullptr;
  ECDSA_SIG_get0(sig.get(), &r, &s);
  Signature out;
  out.bytes.resize(kSignatureBytes);
  BN_bn2binpad(r, out.bytes.data(), 32);
  BN_bn2binpad(s, out.bytes.data() + 32, 32);
  return out;
}

bool sig_verify(const VerifyKey& pk, ByteView message, const Signature& sig) {
  if (sig.bytes.size() != kSignatureBytes) return false;
  BnCtxPtr ctx(BN_CTX_new());
  auto pub = parse_point(pk.point, ctx.get());
  if (!pub) return false;
  EcKeyPtr key(EC_KEY_new());
  if (!key || EC_KEY_set_group(key.get(), p256()) != 1 ||
      EC_KEY_set_public_key(key.get(), pub.get()) != 1) {
    return false;
  }
  auto r = bn_from(ByteView(sig.bytes).first(32));
  auto s = bn_from(ByteView(sig.bytes).subspan(32));
  if (!scalar_in_range(r.get()) || !scalar_in_range(s.get())) return false;
  SigPtr parsed(ECDSA_SIG_new());
  if (!parsed || ECDSA_SIG_set0(parsed.get(), r.get(), s.get()) != 1) return false;
  // ownership moved into `parsed`
  (void)r.release();
  (void)s.release();
  auto digest = sha256(message);
  return ECDSA_do_verify(digest.data(), static_cast<int>(digest.size()), parsed.get(), key.get()) ==
         1;
}

// ---- key agreement ----------------------------------------------------------

Bytes encode_ra_hello(const RaHello& h) {
  ByteWriter w;
  w.u64(h.initiator);
  w.u16(static_cast<std::uint16_t>(h.ephemeral.size()));
  w.raw(h.ephemeral);
  return std::move(w).take();
}

RaHello decode_ra_hello(ByteReader& in) {
  RaHello h;
  h.initiator = in.u64();
  auto eph = in.raw(in.u16());
  h.ephemeral.assign(eph.begin(), eph.end());
  return h;
}

Bytes encode_ra_reply(const RaReply& r) {
  ByteWriter w;
  w.u64(r.responder);
  w.raw(r.measurement);
  w.u16(static_cast<std::uint16_t>(r.ephemeral.size()));
  w.raw(r.ephemeral);
  w.raw(r.confirm);
  return std::move(w).take();
}

RaReply decode_ra_reply(ByteReader& in) {
  RaReply r;
  r.responder = in.u64();
  auto m = in.raw(r.measurement.size());
  std::copy(m.begin(), m.end(), r.measurement.begin());
  auto eph = in.raw(in.u16());
  r.ephemeral.assign(eph.begin(), eph.end());
  auto c = in.raw(r.confirm.size());
  std::copy(c.begin(), c.end(), r.confirm.begin());
  return r;
}

RaInitiator::RaInitiator(std::uint64_t self, Rng& rng) : self_(self) {
  scalar_ = sample_scalar([&] {
    std::array<std::uint8_t, 32> c{};
    rng.fill(c);
    return c;
  });
  BnCtxPtr ctx(BN_CTX_new());
  hello_.initiator = self;
  hello_.ephemeral = point_bytes(mul_generator(scalar_, ctx.get()).get(), ctx.get());
}

SymKey RaInitiator::finish(const RaReply& reply, const Measurement& expected) const {
  if (reply.measurement != expected) {
    throw Error(Errc::MeasurementMismatch,
                "enclave reports measurement " + to_hex(reply.measurement).substr(0, 16) +
                    "..., expected " + to_hex(expected).substr(0, 16) + "...");
  }
  auto shared = ecdh(scalar_, reply.ephemeral);
  auto key = derive_session_key(shared, self_, reply.responder, expected);
  if (confirm_tag(key, hello_.ephemeral, reply.ephemeral) != reply.confirm) {
    throw Error(Errc::MeasurementMismatch, "key confirmation failed");
  }
  return key;
}

RaResponse ra_respond(const RaHello& hello, std::uint64_t responder, const Measurement& installed,
                      Rng& rng) {
  auto scalar = sample_scalar([&] {
    std::array<std::uint8_t, 32> c{};
    rng.fill(c);
    return c;
  });
  BnCtxPtr ctx(BN_CTX_new());
  RaResponse out;
  out.reply.responder = responder;
  out.reply.measurement = installed;
  out.reply.ephemeral = point_bytes(mul_generator(scalar, ctx.get()).get(), ctx.get());
  auto shared = ecdh(scalar, hello.ephemeral);
  out.key = derive_session_key(shared, hello.initiator, responder, installed);
  out.reply.confirm = confirm_tag(out.key, hello.ephemeral, out.reply.ephemeral);
  return out;
}

SymKey ra_key_exchange(std::uint64_t initiator, std::uint64_t responder,
                       const Measurement& expected, const Measurement& installed, Rng& rng) {
  RaInitiator ini(initiator, rng);
  auto resp = ra_respond(ini.hello(), responder, installed, rng);
  auto key = ini.finish(resp.reply, expected);
  if (!(key == resp.key)) throw Error(Errc::AuthFailure, "key agreement diverged");
  return key;
}

}  // namespace voltsim
