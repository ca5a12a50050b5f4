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

#include <cmath>

#include <gtest/gtest.h>

#include "voltsim/harness.hpp"

using namespace voltsim;

namespace {

RunConfig hundred_clients() {
  RunConfig c;
  c.clients = 100;
  c.participation = 0.1;
  c.rounds = 20;
  c.layers = {10};
  c.nodes = 4;
  return c;
}

double max_rel_diff(const WeightVector& a, const WeightVector& b) {
  double worst = 0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t k = 0; k < a.layers[l].elements.size(); ++k) {
      double x = a.layers[l].elements[k], y = b.layers[l].elements[k];
      double scale = std::max(std::abs(x), std::abs(y));
      if (scale > 0) worst = std::max(worst, std::abs(x - y) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST(Presets, SizesMatchParameterCounts) {
  for (const auto& p : model_presets()) {
    double ratio = static_cast<double>(p.size_bytes) / (4.0 * static_cast<double>(p.parameters));
    EXPECT_NEAR(ratio, 1.0, 0.01) << p.name;
    auto meta = preset_meta(p);
    EXPECT_EQ(meta.layer_count(), 8u);
    EXPECT_EQ(meta.total_elements(), p.parameters) << p.name;
  }
  EXPECT_EQ(find_preset("resnet18").name, "ResNet18");
  EXPECT_THROW(find_preset("vgg"), Error);
  EXPECT_EQ(preset_meta(find_preset("MLP"), 3).layer_sizes, (std::vector<std::uint64_t>{3633, 3633, 3635}));
}

TEST(Traffic, FormulaAndEdges) {
  EXPECT_EQ(traffic_fl(10, 50, 0.042), 42.0);
  EXPECT_EQ(traffic_voltran(10, 50, 0.042), 44.1);
  EXPECT_EQ(traffic_fl(500, 50, 42.64), 2'132'000.0);
  EXPECT_EQ(traffic_voltran(500, 50, 42.64), 2'134'132.0);
  EXPECT_EQ(traffic_fl(0, 50, 42.64), 0.0);
  EXPECT_EQ(traffic_voltran(0, 0, 42.64), 0.0);
  // The gap is exactly one model per round.
  EXPECT_NEAR(traffic_voltran(77, 9, 81.2) - traffic_fl(77, 9, 81.2), 9 * 81.2, 1e-9);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  auto c = run_config_from_json(R"({"clients": 12, "rounds": 3, "layers": [4, 4], "strategy": "clientmax",
    "chain": "tendermint", "latency_ms": 3, "heartbeat_ms": 100, "int_mode": true,
    "faults": {"kills": [{"node": 1, "round": 2, "point": "round_start"}]}})");
  EXPECT_EQ(c.clients, 12u);
  EXPECT_EQ(c.strategy, Strategy::ClientMax);
  EXPECT_EQ(c.chain.name, "tendermint");
  EXPECT_EQ(c.link.latency, 3 * kMillis);
  EXPECT_EQ(c.timing.heartbeat_interval, 100 * kMillis);
  ASSERT_EQ(c.faults.kills.size(), 1u);
  EXPECT_EQ(c.faults.kills[0].point, NodePoint::RoundStart);
  EXPECT_EQ(run_config_from_json(run_config_to_json(c)).layers, c.layers);

  EXPECT_THROW(run_config_from_json(R"({"clinets": 3})"), Error);
  EXPECT_THROW(run_config_from_json(R"({"chain": "bitcoin"})"), Error);
  EXPECT_THROW(run_config_from_json("not json"), Error);
  RunConfig bad;
  bad.layers = {};
  EXPECT_THROW(bad.validate(), Error);
  bad = RunConfig{};
  bad.participation = 1.5;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Config, ChainObjectOverridesPreset) {
  auto c = run_config_from_json(R"({"chain": {"preset": "fabric", "block_interval_ms": 10, "txs_per_block": 2}})");
  EXPECT_EQ(c.chain.block_interval_ms, 10);
  EXPECT_EQ(c.chain.txs_per_block, 2u);
  EXPECT_THROW(run_config_from_json(R"({"chain": {"blocks": 1}})"), Error);
}

TEST(Faults, JsonRoundTrip) {
  auto f = faults_from_json(R"({
    "kills": [{"node": 2, "round": 5, "point": "mid_round"}, {"node": 3, "at_ms": 250}],
    "drops": [{"kind": "ModelEnvelope", "src": "client:4", "count": 2}],
    "tampers": [{"kind": "ChunkUpload", "bit": 77}],
    "delays": [{"kind": "LedgerRead", "dst": "ledger", "delay_ms": 12.5}],
    "tamper_program": [1], "forge_chunks": [4],
    "stragglers": [{"client": 9, "lag_ms": 3000, "max_resends": 0}]})");
  ASSERT_EQ(f.kills.size(), 2u);
  EXPECT_EQ(f.kills[1].at, 250 * kMillis);
  ASSERT_EQ(f.rules.size(), 3u);
  EXPECT_EQ(f.rules[0].src, PartyId::client(ClientId{4}));
  EXPECT_EQ(f.rules[2].delay, 12'500'000);
  auto again = faults_from_json(faults_to_json(f));
  EXPECT_EQ(faults_to_json(again), faults_to_json(f));
  EXPECT_THROW(faults_from_json(R"({"kills": [{"node": 1, "when": 2}]})"), Error);
  EXPECT_THROW(faults_from_json(R"({"drops": [{"kind": "Bogus"}]})"), Error);
  EXPECT_THROW(parse_party("miner:1"), Error);
}

TEST(Run, HundredClientsSingleEnclave) {
  auto cfg = hundred_clients();
  auto res = run_task(cfg);
  ASSERT_TRUE(res.report.passed()) << report_table(res.report);
  EXPECT_EQ(res.report.rounds.size(), 20u);
  for (const auto& r : res.report.rounds) {
    EXPECT_EQ(r.participants, 10u);
    EXPECT_TRUE(r.matches_oracle);
    // Zero-size network delay still pays one block.
    EXPECT_GE(r.phases.send_result_ms, static_cast<double>(cfg.chain.block_interval_ms));
  }
  EXPECT_EQ(res.owner_final, res.globals.at(19));
}

TEST(Run, ClientMaxMatchesSingle) {
  auto single_cfg = hundred_clients();
  auto split_cfg = hundred_clients();
  split_cfg.strategy = Strategy::ClientMax;
  split_cfg.max_cells = 3;
  split_cfg.nodes = 5;
  auto a = run_task(single_cfg);
  auto b = run_task(split_cfg);
  ASSERT_TRUE(a.report.passed());
  ASSERT_TRUE(b.report.passed()) << report_table(b.report);
  EXPECT_EQ(b.report.rounds[0].partitions, 4u);
  EXPECT_LE(max_rel_diff(a.globals.at(19), b.globals.at(19)), 1e-9);

  single_cfg.int_mode = split_cfg.int_mode = true;
  auto ai = run_task(single_cfg);
  auto bi = run_task(split_cfg);
  ASSERT_TRUE(ai.report.passed() && bi.report.passed());
  EXPECT_EQ(ai.globals.at(19), bi.globals.at(19));
  EXPECT_EQ(ai.report.final_digest, bi.report.final_digest);
}

TEST(Run, KillAtRoundFiveMatchesFaultFree) {
  auto cfg = hundred_clients();
  cfg.int_mode = true;
  auto clean = run_task(cfg);
  cfg.faults.kills.push_back({NodeId{1}, RoundIndex{5}, NodePoint::MidRound, std::nullopt});
  auto faulty = run_task(cfg);
  ASSERT_TRUE(faulty.report.passed()) << report_table(faulty.report);
  EXPECT_EQ(faulty.globals.at(19), clean.globals.at(19));
  ASSERT_EQ(faulty.report.recoveries.size(), 1u);
  EXPECT_EQ(faulty.report.recoveries[0].round, 5u);
  EXPECT_GT(faulty.report.rounds[5].revision, 0u);
}

TEST(Run, ReportDigestIsReproducible) {
  auto cfg = hundred_clients();
  cfg.rounds = 4;
  auto a = run_task(cfg);
  auto b = run_task(cfg);
  EXPECT_EQ(report_digest(a.report), report_digest(b.report));
  EXPECT_EQ(report_jsonl(a.report, false), report_jsonl(b.report, false));
  cfg.seed = 2;
  EXPECT_NE(report_digest(run_task(cfg).report), report_digest(a.report));
  auto lines = report_jsonl(a.report);
  EXPECT_NE(lines.find("\"SendModeltoSGX\""), std::string::npos);
  EXPECT_NE(lines.find("\"SendResulttoChain\""), std::string::npos);
  EXPECT_NE(report_table(a.report).find("PASS"), std::string::npos);
}

TEST(Run, SocketTransportGivesSameModel) {
  auto cfg = hundred_clients();
  cfg.rounds = 3;
  auto plain = run_task(cfg);
  cfg.socket = true;
  auto sock = run_task(cfg);
  ASSERT_TRUE(sock.report.passed());
  EXPECT_EQ(sock.report.final_digest, plain.report.final_digest);
}

TEST(Run, DroppedEnvelopeIsResent) {
  auto cfg = hundred_clients();
  cfg.rounds = 2;
  FaultRule drop;
  drop.kind = MessageKind::ModelEnvelope;
  cfg.faults.rules.push_back(drop);
  auto res = run_task(cfg);
  ASSERT_TRUE(res.report.passed()) << report_table(res.report);
  EXPECT_GE(res.report.counters["resends_timeout"], 1u);
}

TEST(Run, TamperedEnvelopesAreCountedNotAccepted) {
  auto cfg = hundred_clients();
  cfg.rounds = 2;
  FaultRule t;
  t.action = FaultRule::Action::Tamper;
  t.kind = MessageKind::ModelEnvelope;
  t.count = 3;
  t.bit = 900;
  cfg.faults.rules.push_back(t);
  auto res = run_task(cfg);
  ASSERT_TRUE(res.report.passed()) << report_table(res.report);
  EXPECT_EQ(res.report.counters["resends_auth"], 3u);
  EXPECT_EQ(res.bad_signatures, 0u);
}

TEST(Run, LeakScanHonestAndLeaky) {
  auto cfg = hundred_clients();
  cfg.rounds = 3;
  cfg.sentinel = true;
  cfg.scan_leaks = true;
  auto honest = run_task(cfg);
  ASSERT_TRUE(honest.report.passed()) << report_table(honest.report);
  EXPECT_EQ(honest.report.leaks, 0u);
  ASSERT_NE(honest.report.check("confidentiality"), nullptr);

  LeakyAead leaky;
  cfg.time_limit = 30 * kSeconds;
  auto broken = run_task(cfg, RunHooks{&leaky});
  const auto* conf = broken.report.check("confidentiality");
  ASSERT_NE(conf, nullptr);
  EXPECT_FALSE(conf->pass);
  EXPECT_GT(broken.report.leaks, 0u);
  EXPECT_FALSE(broken.report.passed());
}

TEST(Run, PagingMakesAggregateSlower) {
  // Inputs twice the budget with paging, against the same layout at half
  // the size, which fits.
  RunConfig big;
  big.clients = 20;
  big.participation = 1.0;
  big.rounds = 1;
  big.layers = {200};
  std::uint32_t all[] = {0};
  const auto bytes = estimate_enclave_bytes(20, all, big.meta());
  big.epc_budget = bytes / 2;
  big.paging = true;
  auto paged = run_task(big);
  ASSERT_TRUE(paged.report.passed()) << report_table(paged.report);

  RunConfig half = big;
  half.layers = {100};
  half.paging = false;
  half.epc_budget = bytes;
  auto fits = run_task(half);
  ASSERT_TRUE(fits.report.passed());
  EXPECT_GT(paged.report.rounds[0].phases.aggregate_ms, fits.report.rounds[0].phases.aggregate_ms);
}

TEST(Oracle, LayerCoverFromLayout) {
  ConfEntry e;
  e.participants = {ClientId{1}, ClientId{2}, ClientId{3}};
  PlannedPartition p;
  p.desc.steps.push_back({{{0, {ClientId{1}, ClientId{2}}}, {1, {ClientId{2}}}}});
  PlannedPartition q;
  q.desc.steps.push_back({{{0, {ClientId{3}}}, {1, {ClientId{1}, ClientId{3}}}}});
  e.partitions = {p, q};
  auto cover = layer_clients(e);
  EXPECT_EQ(cover.at(0), (std::vector<ClientId>{ClientId{1}, ClientId{2}, ClientId{3}}));
  EXPECT_EQ(cover.at(1), (std::vector<ClientId>{ClientId{1}, ClientId{2}, ClientId{3}}));
}
