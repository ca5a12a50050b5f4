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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voltsim/error.hpp"

namespace voltsim {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

/// True if `needle` occurs anywhere in `haystack`. Empty needles never match.
bool contains(ByteView haystack, ByteView needle);

/// Appends integers big-endian and doubles as little-endian binary64, the
/// two conventions used by every on-wire and on-chain layout here.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }

  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64_le(double v);
  void raw(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  /// u16 length prefix followed by the bytes.
  void str16(std::string_view s);

  std::size_t size() const { return buf_.size(); }
  const Bytes& bytes() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

 private:
  Bytes buf_;
};

/// Bounds-checked cursor over a byte string. Every read past the end throws
/// `Error` with the code given at construction, so each decoder reports the
/// error kind its caller expects (MalformedModel, MalformedFrame, ...).
class ByteReader {
 public:
  ByteReader(ByteView data, Errc on_truncation)
      : data_(data), errc_(on_truncation) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64_le();
  ByteView raw(std::size_t n);
  std::string str16();

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }
  /// Throws unless every byte has been consumed.
  void expect_done() const;

 private:
  void need(std::size_t n) const;

  ByteView data_;
  std::size_t pos_ = 0;
  Errc errc_;
};

}  // namespace voltsim
