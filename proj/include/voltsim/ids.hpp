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

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>

namespace voltsim {

template <class Tag, class Rep = std::uint64_t>
struct StrongId {
  Rep value{};

  constexpr StrongId() = default;
  constexpr explicit StrongId(Rep v) : value(v) {}
  constexpr auto operator<=>(const StrongId&) const = default;
};

template <class Tag, class Rep>
std::ostream& operator<<(std::ostream& os, StrongId<Tag, Rep> id) {
  return os << id.value;
}

using ClientId = StrongId<struct ClientTag>;
using NodeId = StrongId<struct NodeTag, std::uint32_t>;
using EnclaveId = StrongId<struct EnclaveTag>;

using RoundIndex = std::uint64_t;
using ChunkIndex = std::uint32_t;
using TaskId = std::string;

enum class PartyKind : std::uint8_t {
  Owner = 1,
  Committee = 2,
  Ledger = 3,
  Client = 4,
  Node = 5,
  Harness = 6,
};

/// Transport-level principal. Packs into a u64 on the wire as kind << 32 | index.
struct PartyId {
  PartyKind kind = PartyKind::Harness;
  std::uint32_t index = 0;

  constexpr auto operator<=>(const PartyId&) const = default;

  constexpr std::uint64_t wire() const {
    return (static_cast<std::uint64_t>(kind) << 32) | index;
  }
  static constexpr PartyId from_wire(std::uint64_t v) {
    return {static_cast<PartyKind>(v >> 32), static_cast<std::uint32_t>(v)};
  }

  static constexpr PartyId owner() { return {PartyKind::Owner, 0}; }
  static constexpr PartyId committee() { return {PartyKind::Committee, 0}; }
  static constexpr PartyId ledger() { return {PartyKind::Ledger, 0}; }
  static constexpr PartyId client(ClientId c) {
    return {PartyKind::Client, static_cast<std::uint32_t>(c.value)};
  }
  static constexpr PartyId node(NodeId n) { return {PartyKind::Node, n.value}; }
};

std::string to_string(PartyId p);

}  // namespace voltsim

template <class Tag, class Rep>
struct std::hash<voltsim::StrongId<Tag, Rep>> {
  std::size_t operator()(voltsim::StrongId<Tag, Rep> id) const noexcept {
    return std::hash<Rep>{}(id.value);
  }
};

template <>
struct std::hash<voltsim::PartyId> {
  std::size_t operator()(voltsim::PartyId p) const noexcept {
    return std::hash<std::uint64_t>{}(p.wire());
  }
};
