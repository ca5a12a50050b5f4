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

#include "voltsim/transport.hpp"

#include <array>
#include <cmath>
#include <memory>

#include "voltsim/socket_channel.hpp"

namespace voltsim {

namespace {

constexpr std::array<std::string_view, kMaxMessageKind + 1> kKindNames = {
    "Invalid",      "SubmitTask",    "ConfDeliver",   "InstallProg",  "RaHandshake1",
    "RaHandshake2", "KeyDeliver",    "RoundDeliver",  "ModelEnvelope", "ChunkUpload",
    "LedgerRead",   "LedgerReply",   "Heartbeat",     "FailoverCmd",  "ResendRequest",
    "InitModel",    "InstallAck",    "LedgerReceipt", "StragglerReport"};

}  // namespace

std::string_view kind_name(MessageKind k) {
  auto i = static_cast<std::size_t>(k);
  return i < kKindNames.size() ? kKindNames[i] : "Invalid";
}

std::optional<MessageKind> parse_kind(std::string_view name) {
  for (std::size_t i = 1; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<MessageKind>(i);
  }
  return std::nullopt;
}

Bytes encode_frame(MessageKind kind, ByteView payload) {
  if (payload.size() > 0xffffffffull) throw Error(Errc::MalformedFrame, "payload over 4 GiB");
  ByteWriter w(kFrameHeader + payload.size());
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.u8(static_cast<std::uint8_t>(kind));
  w.raw(payload);
  return std::move(w).take();
}

Frame decode_frame(ByteView bytes) {
  ByteReader r(bytes, Errc::MalformedFrame);
  auto length = r.u32();
  auto tag = r.u8();
  if (tag == 0 || tag > kMaxMessageKind) {
    throw Error(Errc::MalformedFrame, "unregistered tag " + std::to_string(tag));
  }
  if (length != r.remaining()) {
    throw Error(Errc::MalformedFrame, "length field " + std::to_string(length) + " but " +
                                          std::to_string(r.remaining()) + " payload bytes");
  }
  auto payload = r.raw(length);
  return Frame{static_cast<MessageKind>(tag), Bytes(payload.begin(), payload.end())};
}

void FrameDecoder::feed(ByteView data) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), data.begin(), data.end());
}

std::optional<Frame> FrameDecoder::next() {
  if (buffered() < kFrameHeader) return std::nullopt;
  ByteReader header(ByteView(buf_).subspan(pos_, kFrameHeader), Errc::MalformedFrame);
  auto length = header.u32();
  auto tag = header.u8();
  if (tag == 0 || tag > kMaxMessageKind) {
    throw Error(Errc::MalformedFrame, "unregistered tag " + std::to_string(tag));
  }
  if (length > max_payload_) throw Error(Errc::MalformedFrame, "frame exceeds size limit");
  if (buffered() < kFrameHeader + length) return std::nullopt;
  Frame f;
  f.kind = static_cast<MessageKind>(tag);
  auto begin = buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + kFrameHeader);
  f.payload.assign(begin, begin + length);
  pos_ += kFrameHeader + length;
  return f;
}

// ---- router ---------------------------------------------------------------------

void Network::attach(PartyId id, Endpoint* endpoint) { endpoints_[id] = endpoint; }

void Network::detach(PartyId id) { endpoints_.erase(id); }

void Network::set_down(PartyId id, bool down) { down_[id] = down; }

bool Network::is_down(PartyId id) const {
  auto it = down_.find(id);
  return it != down_.end() && it->second;
}

void Network::set_link(PartyId src, PartyId dst, LinkParams params) { links_[{src, dst}] = params; }

void Network::set_party_link(PartyId party, LinkParams params) { party_links_[party] = params; }

LinkParams Network::link_for(PartyId src, PartyId dst) const {
  if (auto it = links_.find({src, dst}); it != links_.end()) return it->second;
  if (auto it = party_links_.find(src); it != party_links_.end()) return it->second;
  if (auto it = party_links_.find(dst); it != party_links_.end()) return it->second;
  return defaults_;
}

std::size_t Network::add_fault(FaultRule rule) {
  faults_.push_back(rule);
  return faults_.size() - 1;
}

std::uint64_t Network::total_bytes() const {
  std::uint64_t n = 0;
  for (const auto& [k, s] : stats_) n += s.bytes;
  return n;
}

void Network::send(PartyId src, PartyId dst, MessageKind kind, ByteView payload) {
  if (!endpoints_.count(src)) throw Error(Errc::UnknownParty, "sender " + to_string(src));
  if (!endpoints_.count(dst)) throw Error(Errc::UnknownParty, "destination " + to_string(dst));
  if (is_down(src)) return;

  auto bytes = std::make_shared<Bytes>(encode_frame(kind, payload));
  auto& st = stats_[kind];
  ++st.frames;
  st.bytes += bytes->size();
  for (const auto& tap : taps_) tap(TapRecord{sim_.now(), src, dst, kind, *bytes});

  SimTime extra = 0;
  for (auto& rule : faults_) {
    if (rule.kind && *rule.kind != kind) continue;
    if (rule.src && *rule.src != src) continue;
    if (rule.dst && *rule.dst != dst) continue;
    ++rule.seen;
    if (rule.seen <= rule.skip || (rule.count != 0 && rule.applied >= rule.count)) continue;
    ++rule.applied;
    switch (rule.action) {
      case FaultRule::Action::Drop:
        ++dropped_;
        return;
      case FaultRule::Action::Tamper:
        if (bytes->size() > kFrameHeader) {
          const std::uint64_t bits = (bytes->size() - kFrameHeader) * 8;
          const std::uint64_t bit = rule.bit % bits;
          (*bytes)[kFrameHeader + bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
          ++tampered_;
        }
        break;
      case FaultRule::Action::Delay:
        extra += rule.delay;
        break;
    }
  }

  std::shared_ptr<Frame> routed;
  if (socket_) routed = std::make_shared<Frame>(socket_->roundtrip(*bytes));

  const LinkParams link = link_for(src, dst);
  auto& ch = channels_[{src, dst}];
  SimTime depart = std::max(sim_.now(), ch.busy_until);
  SimTime transmit = 0;
  if (link.bandwidth > 0) {
    transmit = static_cast<SimTime>(
        std::ceil(static_cast<double>(bytes->size()) / link.bandwidth * static_cast<double>(kSeconds)));
  }
  ch.busy_until = depart + transmit;
  SimTime arrive = std::max(ch.busy_until + link.latency + extra, ch.last_arrival);
  ch.last_arrival = arrive;

  sim_.at(arrive, [this, src, dst, bytes, routed] {
    auto it = endpoints_.find(dst);
    if (it == endpoints_.end() || is_down(dst)) return;
    Frame f = routed ? *routed : decode_frame(*bytes);
    it->second->on_frame(src, f);
  });
}

}  // namespace voltsim
