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

#include "voltsim/bytes.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <functional>

#include "voltsim/ids.hpp"

namespace voltsim {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::AuthFailure: return "AuthFailure";
    case Errc::MeasurementMismatch: return "MeasurementMismatch";
    case Errc::NonceReuse: return "NonceReuse";
    case Errc::MalformedModel: return "MalformedModel";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::CoverageGap: return "CoverageGap";
    case Errc::CoverageOverlap: return "CoverageOverlap";
    case Errc::MissingKey: return "MissingKey";
    case Errc::NoSessionKey: return "NoSessionKey";
    case Errc::MskDisagreement: return "MskDisagreement";
    case Errc::RoundMismatch: return "RoundMismatch";
    case Errc::CapacityExceeded: return "CapacityExceeded";
    case Errc::UnknownEnclave: return "UnknownEnclave";
    case Errc::DuplicateTask: return "DuplicateTask";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::NotFound: return "NotFound";
    case Errc::Incomplete: return "Incomplete";
    case Errc::NoNodes: return "NoNodes";
    case Errc::InsufficientNodes: return "InsufficientNodes";
    case Errc::CapacityInfeasible: return "CapacityInfeasible";
    case Errc::NoSpareNodes: return "NoSpareNodes";
    case Errc::UnknownParty: return "UnknownParty";
    case Errc::MalformedFrame: return "MalformedFrame";
    case Errc::StragglerTimeout: return "StragglerTimeout";
    case Errc::DeliveryFailure: return "DeliveryFailure";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

std::string to_string(PartyId p) {
  switch (p.kind) {
    case PartyKind::Owner: return "owner";
    case PartyKind::Committee: return "committee";
    case PartyKind::Ledger: return "ledger";
    case PartyKind::Client: return "client-" + std::to_string(p.index);
    case PartyKind::Node: return "node-" + std::to_string(p.index);
    case PartyKind::Harness: return "harness-" + std::to_string(p.index);
  }
  return "party-" + std::to_string(p.wire());
}

std::string to_hex(ByteView data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(Errc::InvalidConfig, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::InvalidConfig, "bad hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

bool contains(ByteView haystack, ByteView needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(),
                     std::boyer_moore_horspool_searcher(needle.begin(), needle.end())) !=
         haystack.end();
}

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  buf_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::f64_le(double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int shift = 0; shift < 64; shift += 8) buf_.push_back(static_cast<std::uint8_t>(bits >> shift));
}

void ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xffff) throw Error(Errc::InvalidConfig, "string too long for u16 prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(as_bytes(s));
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw Error(errc_, "truncated input: need " + std::to_string(n) + " bytes at offset " +
                           std::to_string(pos_) + ", have " + std::to_string(remaining()));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2);
  std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = v << 8 | data_[pos_ + i];
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | data_[pos_ + i];
  pos_ += 8;
  return v;
}

double ByteReader::f64_le() {
  need(8);
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = bits << 8 | data_[pos_ + i];
  pos_ += 8;
  return std::bit_cast<double>(bits);
}

ByteView ByteReader::raw(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::str16() {
  auto n = u16();
  auto view = raw(n);
  return {reinterpret_cast<const char*>(view.data()), view.size()};
}

void ByteReader::expect_done() const {
  if (!done()) {
    throw Error(errc_, std::to_string(remaining()) + " trailing bytes after offset " +
                           std::to_string(pos_));
  }
}

}  // namespace voltsim
