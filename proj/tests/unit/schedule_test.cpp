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

#include "voltsim/harness.hpp"

using namespace voltsim;

namespace {

std::vector<ClientId> ids(std::uint64_t lo, std::uint64_t hi) {
  std::vector<ClientId> out;
  for (auto i = lo; i <= hi; ++i) out.push_back(ClientId{i});
  return out;
}

std::vector<NodeId> nodes(std::uint32_t n) {
  std::vector<NodeId> out;
  for (std::uint32_t i = 1; i <= n; ++i) out.push_back(NodeId{i});
  return out;
}

TaskSpec spec(std::uint64_t n, std::vector<std::uint64_t> layers, Strategy s, double p = 1.0) {
  TaskSpec t;
  t.taskid = "sched";
  t.clients = ids(1, n);
  t.meta.layer_sizes = std::move(layers);
  t.rounds = 3;
  t.participation = p;
  t.strategy = s;
  t.program = EnclaveProgram::compile(Bytes{1});
  return t;
}

}  // namespace

TEST(Plan, SixClientsCapacityFour) {
  PlanLimits lim;
  lim.max_cells = 4;
  auto parts = plan_partitions(Strategy::ClientMax, ids(1, 6), ModelMeta{{10, 10}}, lim, "t");
  ASSERT_EQ(parts.size(), 3u);
  auto segs = [&](std::size_t p) { return parts[p].steps.at(0).segments; };
  ASSERT_EQ(segs(0).size(), 1u);
  EXPECT_EQ(segs(0)[0], (Segment{0, ids(1, 4)}));
  ASSERT_EQ(segs(1).size(), 2u);
  EXPECT_EQ(segs(1)[0], (Segment{0, ids(5, 6)}));
  EXPECT_EQ(segs(1)[1], (Segment{1, ids(1, 2)}));
  EXPECT_EQ(segs(2)[0], (Segment{1, ids(3, 6)}));
  // Split layers are combined outside, so no partition normalizes them.
  for (const auto& p : parts) EXPECT_TRUE(p.normalized_layers.empty());
  EXPECT_EQ(parts[1].chunk_base, parts[0].chunk_count);
}

TEST(Plan, ClientMaxPartitionCountForResNet18) {
  auto meta = preset_meta(find_preset("ResNet18"));
  PlanLimits lim;  // 128 MiB
  auto parts = plan_partitions(Strategy::ClientMax, ids(1, 50), meta, lim, "t");
  // Lower bound: total resident bytes over the budget. Any plan needs at least
  // that many enclaves; a feasible plan of that size is optimal.
  std::uint64_t total = 0;
  for (std::uint32_t l = 0; l < meta.layer_count(); ++l) total += 50 * cell_bytes(l, meta);
  std::uint64_t headers = 0;
  for (const auto& p : parts) headers += kUpdateHeaderBytes * p.clients().size();
  auto lower = (total + 50 * kUpdateHeaderBytes + lim.epc_budget - 1) / lim.epc_budget;
  EXPECT_EQ(parts.size(), lower);
  EXPECT_EQ(parts.size(), 34u);
  for (const auto& p : parts) {
    EXPECT_LE(estimate_step_bytes(p.steps.at(0), meta), lim.epc_budget);
  }
  EXPECT_GE(headers, 50 * kUpdateHeaderBytes);
}

TEST(Plan, EveryStrategyCoversTheGridOnce) {
  PlanLimits lim;
  lim.epc_budget = 4000;
  for (auto s : {Strategy::SingleSGX, Strategy::ClientMax, Strategy::LayerMax}) {
    PlanLimits l = lim;
    if (s == Strategy::SingleSGX) l.paging = true;
    auto t = spec(12, {30, 5, 70}, s);
    auto e = schedule_round(t, 0, nodes(20), l);
    EXPECT_NO_THROW(check_exact_cover(e, t.meta)) << strategy_name(s);
    std::uint32_t chunks = 0;
    for (const auto& p : e.partitions) chunks += p.desc.chunk_count;
    EXPECT_EQ(chunks, e.expected_chunks);
  }
}

TEST(Plan, LayerMaxRunsSerialStepsInOneEnclave) {
  PlanLimits lim;
  ModelMeta meta{{50, 50}};
  std::uint32_t all[] = {0, 1};
  lim.epc_budget = estimate_enclave_bytes(3, all, meta);
  auto parts = plan_partitions(Strategy::LayerMax, ids(1, 10), meta, lim, "t");
  ASSERT_EQ(parts.size(), 1u);
  ASSERT_EQ(parts[0].steps.size(), 4u);  // 3 + 3 + 3 + 1
  EXPECT_EQ(parts[0].steps[3].segments[0].clients, ids(10, 10));
  EXPECT_EQ(parts[0].normalized_layers, (std::vector<std::uint32_t>{0, 1}));
}

TEST(Plan, InfeasibleWithoutPaging) {
  PlanLimits lim;
  lim.epc_budget = 100;
  try {
    plan_partitions(Strategy::SingleSGX, ids(1, 4), ModelMeta{{100}}, lim, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CapacityInfeasible);
  }
  EXPECT_THROW(plan_partitions(Strategy::ClientMax, ids(1, 4), ModelMeta{{100}}, lim, "t"), Error);
  lim.paging = true;
  EXPECT_EQ(plan_partitions(Strategy::SingleSGX, ids(1, 4), ModelMeta{{100}}, lim, "t").size(), 1u);
  EXPECT_THROW(plan_partitions(Strategy::SingleSGX, {}, ModelMeta{{100}}, lim, "t"), Error);
}

TEST(Select, RoundRobinCoversEveryoneInTurn) {
  auto t = spec(100, {10}, Strategy::SingleSGX, 0.1);
  std::set<ClientId> seen;
  for (RoundIndex r = 0; r < 10; ++r) {
    auto p = select_participants(t, r);
    ASSERT_EQ(p.size(), 10u);
    EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
    seen.insert(p.begin(), p.end());
  }
  EXPECT_EQ(seen.size(), 100u);
  EXPECT_EQ(select_participants(t, 0), select_participants(t, 10));
  t.participation = 0.001;
  EXPECT_EQ(select_participants(t, 0).size(), 1u);
}

TEST(Select, UniformIsSeeded) {
  auto t = spec(50, {10}, Strategy::SingleSGX, 0.2);
  t.selection = Selection::Uniform;
  auto a = select_participants(t, 3);
  EXPECT_EQ(a, select_participants(t, 3));
  EXPECT_EQ(a.size(), 10u);
  t.seed = 99;
  EXPECT_NE(a, select_participants(t, 3));
}

TEST(Schedule, NodeBindingAndErrors) {
  PlanLimits lim;
  lim.max_cells = 3;
  auto t = spec(6, {4}, Strategy::ClientMax);
  std::vector<NodeId> shuffled{NodeId{9}, NodeId{2}, NodeId{5}};
  auto e = schedule_round(t, 0, shuffled, lim);
  ASSERT_EQ(e.partitions.size(), 2u);
  EXPECT_EQ(e.partitions[0].node, NodeId{2});
  EXPECT_EQ(e.partitions[1].node, NodeId{5});
  EXPECT_EQ(e.partition_on(NodeId{5})->desc.partition, 1u);
  EXPECT_EQ(e.partitions_of(ClientId{4}), (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(partitions_needed(t, lim), 2u);
  std::vector<NodeId> one{NodeId{1}};
  try {
    schedule_round(t, 0, one, lim);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::InsufficientNodes);
  }
  try {
    schedule_round(t, 0, {}, lim);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::NoNodes);
  }
}

TEST(Schedule, CoverCheckCatchesGapsAndOverlaps) {
  auto t = spec(4, {3, 3}, Strategy::SingleSGX);
  auto e = schedule_round(t, 0, nodes(1), {});
  auto gap = e;
  gap.partitions[0].desc.steps[0].segments[1].clients.pop_back();
  EXPECT_THROW(check_exact_cover(gap, t.meta), Error);
  auto overlap = e;
  overlap.partitions.push_back(overlap.partitions[0]);
  EXPECT_THROW(check_exact_cover(overlap, t.meta), Error);
}

TEST(Schedule, DocumentsRoundTrip) {
  PlanLimits lim;
  lim.max_cells = 5;
  auto t = spec(9, {4, 7}, Strategy::ClientMax, 0.5);
  auto conf = schedule(t, nodes(6), lim);
  EXPECT_EQ(conf.rounds.size(), 3u);
  EXPECT_EQ(conf_from_json(conf_to_json(conf)), conf);
  EXPECT_EQ(conf_entry_from_json(conf_entry_to_json(conf.rounds.at(1))), conf.rounds.at(1));
  auto back = task_spec_from_json(task_spec_to_json(t));
  EXPECT_EQ(back.clients, t.clients);
  EXPECT_EQ(back.meta, t.meta);
  EXPECT_EQ(back.program.measurement, t.program.measurement);
  EXPECT_THROW(conf_from_json("{"), Error);
}

TEST(Schedule, SpecValidation) {
  auto t = spec(4, {3}, Strategy::SingleSGX);
  EXPECT_NO_THROW(t.validate());
  auto bad = t;
  bad.participation = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.clients = {ClientId{2}, ClientId{1}};
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.taskid = std::string(kMaxTaskIdBytes + 1, 'x');
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(parse_strategy("layermax"), Strategy::LayerMax);
  EXPECT_THROW(parse_strategy("best"), Error);
}
