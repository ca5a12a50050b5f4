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

#include "voltsim/socket_channel.hpp"
#include "voltsim/transport.hpp"
#include "voltsim/crypto.hpp"

using namespace voltsim;

namespace {

struct Sink : Endpoint {
  Simulator* sim = nullptr;
  struct Got {
    SimTime at;
    PartyId src;
    Frame frame;
  };
  std::vector<Got> got;
  void on_frame(PartyId src, const Frame& f) override { got.push_back({sim->now(), src, f}); }
};

const PartyId A = PartyId::client(ClientId{1});
const PartyId B = PartyId::node(NodeId{1});

struct Net {
  Simulator sim;
  Network net{sim, LinkParams{2 * kMillis, 0}};
  Sink a, b;
  Net() {
    a.sim = b.sim = &sim;
    net.attach(A, &a);
    net.attach(B, &b);
  }
  void drain() {
    while (sim.step()) {
    }
  }
};

Bytes payload(std::size_t n, std::uint8_t seed) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>(seed + i * 31);
  return b;
}

}  // namespace

TEST(Frame, CodecAndErrors) {
  auto bytes = encode_frame(MessageKind::ChunkUpload, payload(10, 1));
  EXPECT_EQ(bytes.size(), kFrameHeader + 10);
  auto f = decode_frame(bytes);
  EXPECT_EQ(f.kind, MessageKind::ChunkUpload);
  EXPECT_EQ(f.payload, payload(10, 1));
  auto bad_tag = bytes;
  bad_tag[4] = 0;
  EXPECT_THROW(decode_frame(bad_tag), Error);
  bad_tag[4] = kMaxMessageKind + 1;
  EXPECT_THROW(decode_frame(bad_tag), Error);
  auto short_len = bytes;
  short_len.pop_back();
  EXPECT_THROW(decode_frame(short_len), Error);
  EXPECT_THROW(decode_frame(Bytes{0, 0}), Error);
}

TEST(Frame, DecoderReassemblesAnySplit) {
  Bytes stream;
  std::vector<Frame> sent;
  for (std::uint8_t i = 1; i <= 6; ++i) {
    Frame f{static_cast<MessageKind>(i), payload(i * 7, i)};
    auto b = encode_frame(f.kind, f.payload);
    stream.insert(stream.end(), b.begin(), b.end());
    sent.push_back(f);
  }
  for (std::size_t piece : {1u, 3u, 11u, 64u}) {
    FrameDecoder d;
    std::vector<Frame> got;
    for (std::size_t i = 0; i < stream.size(); i += piece) {
      d.feed(ByteView(stream).subspan(i, std::min(piece, stream.size() - i)));
      while (auto f = d.next()) got.push_back(*f);
    }
    EXPECT_EQ(got, sent) << piece;
    EXPECT_EQ(d.buffered(), 0u);
  }
  FrameDecoder limited(4);
  limited.feed(encode_frame(MessageKind::Heartbeat, payload(5, 0)));
  EXPECT_THROW(limited.next(), Error);
}

TEST(Frame, KindNames) {
  for (std::uint8_t k = 1; k <= kMaxMessageKind; ++k) {
    auto kind = static_cast<MessageKind>(k);
    EXPECT_EQ(parse_kind(kind_name(kind)), kind);
  }
  EXPECT_FALSE(parse_kind("Nope"));
}

TEST(Network, LatencyAndFifoPerChannel) {
  Net n;
  n.net.set_link(A, B, LinkParams{5 * kMillis, 1000.0});  // 1000 B/s
  n.net.send(A, B, MessageKind::Heartbeat, payload(95, 0));  // 100 bytes framed -> 100 ms
  n.net.send(A, B, MessageKind::Heartbeat, payload(0, 0));
  n.net.send(B, A, MessageKind::Heartbeat, payload(1, 0));
  n.drain();
  ASSERT_EQ(n.b.got.size(), 2u);
  EXPECT_EQ(n.b.got[0].at, 100 * kMillis + 5 * kMillis);
  EXPECT_EQ(n.b.got[0].frame.payload.size(), 95u);
  EXPECT_GT(n.b.got[1].at, n.b.got[0].at);
  ASSERT_EQ(n.a.got.size(), 1u);
  EXPECT_EQ(n.a.got[0].at, 2 * kMillis);
  EXPECT_EQ(n.net.stats().at(MessageKind::Heartbeat).frames, 3u);
  EXPECT_EQ(n.net.total_bytes(), 100u + 5 + 6);
}

TEST(Network, UnknownAndDownParties) {
  Net n;
  EXPECT_THROW(n.net.send(A, PartyId::owner(), MessageKind::Heartbeat, {}), Error);
  n.net.set_down(B, true);
  n.net.send(A, B, MessageKind::Heartbeat, {});
  n.net.send(B, A, MessageKind::Heartbeat, {});
  n.drain();
  EXPECT_TRUE(n.a.got.empty());
  EXPECT_TRUE(n.b.got.empty());
  // Going down while a frame is in flight also loses it.
  n.net.set_down(B, false);
  n.net.send(A, B, MessageKind::Heartbeat, {});
  n.net.set_down(B, true);
  n.drain();
  EXPECT_TRUE(n.b.got.empty());
}

TEST(Network, FaultRulesSkipCountAndMatch) {
  Net n;
  FaultRule drop;
  drop.action = FaultRule::Action::Drop;
  drop.kind = MessageKind::ModelEnvelope;
  drop.skip = 1;
  drop.count = 2;
  auto di = n.net.add_fault(drop);
  FaultRule tamper;
  tamper.action = FaultRule::Action::Tamper;
  tamper.kind = MessageKind::ChunkUpload;
  tamper.bit = 8 * 3 + 2;
  n.net.add_fault(tamper);
  FaultRule delay;
  delay.action = FaultRule::Action::Delay;
  delay.kind = MessageKind::LedgerRead;
  delay.dst = B;
  delay.delay = 40 * kMillis;
  n.net.add_fault(delay);

  for (int i = 0; i < 5; ++i) n.net.send(A, B, MessageKind::ModelEnvelope, payload(4, static_cast<std::uint8_t>(i)));
  n.net.send(A, B, MessageKind::ChunkUpload, payload(8, 0));
  n.net.send(A, B, MessageKind::LedgerRead, payload(1, 0));
  n.net.send(B, A, MessageKind::LedgerRead, payload(1, 0));
  n.drain();

  std::vector<std::uint8_t> first_bytes;
  for (const auto& g : n.b.got)
    if (g.frame.kind == MessageKind::ModelEnvelope) first_bytes.push_back(g.frame.payload[0]);
  EXPECT_EQ(first_bytes, (std::vector<std::uint8_t>{0, 3, 4}));
  EXPECT_EQ(n.net.dropped(), 2u);
  EXPECT_EQ(n.net.fault(di).seen, 5u);
  EXPECT_EQ(n.net.fault(di).applied, 2u);

  auto chunk = std::find_if(n.b.got.begin(), n.b.got.end(),
                            [](const auto& g) { return g.frame.kind == MessageKind::ChunkUpload; });
  ASSERT_NE(chunk, n.b.got.end());
  auto want = payload(8, 0);
  want[3] ^= 1u << 2;
  EXPECT_EQ(chunk->frame.payload, want);
  EXPECT_EQ(n.net.tampered(), 1u);

  auto read = std::find_if(n.b.got.begin(), n.b.got.end(),
                           [](const auto& g) { return g.frame.kind == MessageKind::LedgerRead; });
  EXPECT_EQ(read->at, 2 * kMillis + 40 * kMillis);
  ASSERT_EQ(n.a.got.size(), 1u);
  EXPECT_EQ(n.a.got[0].at, 2 * kMillis);
}

TEST(Network, TapsSeeEveryFrame) {
  Net n;
  std::vector<std::pair<MessageKind, std::size_t>> seen;
  n.net.add_tap([&](const TapRecord& r) { seen.emplace_back(r.kind, r.frame.size()); });
  n.net.send(A, B, MessageKind::InitModel, payload(9, 0));
  FaultRule drop;
  drop.kind = MessageKind::Heartbeat;
  n.net.add_fault(drop);
  n.net.send(A, B, MessageKind::Heartbeat, {});
  n.drain();
  ASSERT_EQ(seen.size(), 2u);  // dropped frames were still on the wire
  EXPECT_EQ(seen[0], (std::pair{MessageKind::InitModel, std::size_t{14}}));
}

TEST(Simulator, OrderingCancelAndLimit) {
  Simulator sim;
  std::vector<int> order;
  sim.at(10, [&] { order.push_back(1); });
  sim.at(5, [&] { order.push_back(2); });
  sim.at(10, [&] { order.push_back(3); });
  auto id = sim.at(7, [&] { order.push_back(4); });
  sim.cancel(id);
  EXPECT_EQ(sim.next_time(), 5);
  EXPECT_FALSE(sim.run_until([] { return false; }, 8));
  EXPECT_EQ(order, (std::vector<int>{2}));
  EXPECT_TRUE(sim.run_until([&] { return order.size() == 3; }, 100));
  EXPECT_EQ(order, (std::vector<int>{2, 1, 3}));
  EXPECT_EQ(sim.now(), 10);
  sim.after(-5, [&] { order.push_back(5); });  // clamps to now
  EXPECT_TRUE(sim.step());
  EXPECT_EQ(sim.now(), 10);
  EXPECT_EQ(sim.next_time(), -1);
}

TEST(Socket, LoopbackRoundTripsLargePayload) {
  SocketChannel ch;
  EXPECT_NE(ch.port(), 0);
  Bytes big(100'000'000);
  Rng rng(21);
  rng.fill(big);
  auto frame = encode_frame(MessageKind::ModelEnvelope, big);
  auto before = sha256(big);
  auto back = ch.roundtrip(frame);
  EXPECT_EQ(back.kind, MessageKind::ModelEnvelope);
  EXPECT_EQ(sha256(back.payload), before);
  auto small = ch.roundtrip(encode_frame(MessageKind::Heartbeat, payload(3, 7)));
  EXPECT_EQ(small.payload, payload(3, 7));
  EXPECT_EQ(ch.bytes_moved(), frame.size() + kFrameHeader + 3);
}

TEST(Socket, NetworkDeliversIdenticalBytesThroughSocket) {
  Net n;
  SocketChannel ch;
  n.net.use_socket(&ch);
  n.net.send(A, B, MessageKind::RoundDeliver, payload(1000, 9));
  n.drain();
  ASSERT_EQ(n.b.got.size(), 1u);
  EXPECT_EQ(n.b.got[0].frame.payload, payload(1000, 9));
  EXPECT_GT(ch.bytes_moved(), 1000u);
}
