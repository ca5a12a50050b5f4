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

// Length-prefixed frames and a router that delivers them on the virtual
// clock, with per-channel latency and bandwidth, taps, and fault rules.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "voltsim/bytes.hpp"
#include "voltsim/ids.hpp"
#include "voltsim/sim.hpp"

namespace voltsim {

enum class MessageKind : std::uint8_t {
  SubmitTask = 1,
  ConfDeliver = 2,
  InstallProg = 3,
  RaHandshake1 = 4,
  RaHandshake2 = 5,
  KeyDeliver = 6,
  RoundDeliver = 7,
  ModelEnvelope = 8,
  ChunkUpload = 9,
  LedgerRead = 10,
  LedgerReply = 11,
  Heartbeat = 12,
  FailoverCmd = 13,
  ResendRequest = 14,
  InitModel = 15,
  InstallAck = 16,
  LedgerReceipt = 17,
  StragglerReport = 18,
};

inline constexpr std::uint8_t kMaxMessageKind = 18;
std::string_view kind_name(MessageKind k);
std::optional<MessageKind> parse_kind(std::string_view name);

inline constexpr std::size_t kFrameHeader = 5;

struct Frame {
  MessageKind kind = MessageKind::Heartbeat;
  Bytes payload;
  bool operator==(const Frame&) const = default;
};

/// length (u32 BE) || tag (u8) || payload
Bytes encode_frame(MessageKind kind, ByteView payload);
/// Exactly one frame. Throws MalformedFrame.
Frame decode_frame(ByteView bytes);

/// Reassembles frames from an arbitrary split of a byte stream.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_payload = std::size_t{1} << 31) : max_payload_(max_payload) {}
  void feed(ByteView data);
  std::optional<Frame> next();
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  Bytes buf_;
  std::size_t pos_ = 0;
  std::size_t max_payload_;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void on_frame(PartyId src, const Frame& frame) = 0;
};

struct LinkParams {
  SimTime latency = 1 * kMillis;
  /// Bytes per second; 0 disables the bandwidth cap.
  double bandwidth = 0;
};

struct FaultRule {
  enum class Action { Drop, Tamper, Delay };
  Action action = Action::Drop;
  std::optional<MessageKind> kind;
  std::optional<PartyId> src;
  std::optional<PartyId> dst;
  std::uint64_t skip = 0;   // matching frames to let through first
  std::uint64_t count = 1;  // frames to hit; 0 means every later match
  SimTime delay = 0;
  /// Bit offset to flip, measured from the start of the payload, modulo its size.
  std::uint64_t bit = 0;

  std::uint64_t seen = 0;
  std::uint64_t applied = 0;
};

struct TapRecord {
  SimTime time = 0;
  PartyId src;
  PartyId dst;
  MessageKind kind = MessageKind::Heartbeat;
  ByteView frame;  // valid only during the callback
};

using TapFn = std::function<void(const TapRecord&)>;

struct KindStats {
  std::uint64_t frames = 0;
  std::uint64_t bytes = 0;
};

class SocketChannel;

class Network {
 public:
  Network(Simulator& sim, LinkParams defaults = {}) : sim_(sim), defaults_(defaults) {}

  void attach(PartyId id, Endpoint* endpoint);
  void detach(PartyId id);
  bool attached(PartyId id) const { return endpoints_.count(id) != 0; }
  /// A down party neither sends nor receives; frames to it vanish.
  void set_down(PartyId id, bool down);
  bool is_down(PartyId id) const;

  void set_link(PartyId src, PartyId dst, LinkParams params);
  /// Applies to every channel leaving or entering `party` that has no
  /// explicit link of its own.
  void set_party_link(PartyId party, LinkParams params);

  /// Throws UnknownParty when either end was never attached.
  void send(PartyId src, PartyId dst, MessageKind kind, ByteView payload);

  void add_tap(TapFn tap) { taps_.push_back(std::move(tap)); }
  std::size_t add_fault(FaultRule rule);
  const FaultRule& fault(std::size_t i) const { return faults_.at(i); }
  std::size_t fault_count() const { return faults_.size(); }

  /// Route every frame's bytes through a real TCP loopback connection.
  void use_socket(SocketChannel* channel) { socket_ = channel; }

  const std::map<MessageKind, KindStats>& stats() const { return stats_; }
  std::uint64_t total_bytes() const;
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t tampered() const { return tampered_; }
  Simulator& sim() { return sim_; }

 private:
  struct Channel {
    SimTime busy_until = 0;
    SimTime last_arrival = 0;
  };
  LinkParams link_for(PartyId src, PartyId dst) const;

  Simulator& sim_;
  LinkParams defaults_;
  std::unordered_map<PartyId, Endpoint*> endpoints_;
  std::unordered_map<PartyId, bool> down_;
  std::map<std::pair<PartyId, PartyId>, LinkParams> links_;
  std::map<PartyId, LinkParams> party_links_;
  std::map<std::pair<PartyId, PartyId>, Channel> channels_;
  std::vector<TapFn> taps_;
  std::vector<FaultRule> faults_;
  std::map<MessageKind, KindStats> stats_;
  SocketChannel* socket_ = nullptr;
  std::uint64_t dropped_ = 0;
  std::uint64_t tampered_ = 0;
};

}  // namespace voltsim
