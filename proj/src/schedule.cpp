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

#include "voltsim/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"

namespace voltsim {

using nlohmann::json;

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::SingleSGX: return "SingleSGX";
    case Strategy::ClientMax: return "ClientMax";
    case Strategy::LayerMax: return "LayerMax";
  }
  return "Unknown";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "single" || s == "SingleSGX") return Strategy::SingleSGX;
  if (s == "clientmax" || s == "ClientMax") return Strategy::ClientMax;
  if (s == "layermax" || s == "LayerMax") return Strategy::LayerMax;
  throw Error(Errc::InvalidConfig, "unknown strategy '" + std::string(s) + "'");
}

void TaskSpec::validate() const {
  if (taskid.empty() || taskid.size() > kMaxTaskIdBytes) {
    throw Error(Errc::InvalidConfig, "taskid must be 1.." + std::to_string(kMaxTaskIdBytes) + " bytes");
  }
  if (rounds < 1) throw Error(Errc::InvalidConfig, "rounds must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw Error(Errc::InvalidConfig, "participation must be in (0, 1]");
  }
  if (meta.layer_sizes.empty()) throw Error(Errc::InvalidConfig, "model has no layers");
  if (clients.empty()) throw Error(Errc::InvalidConfig, "task has no clients");
  if (!std::is_sorted(clients.begin(), clients.end()) ||
      std::adjacent_find(clients.begin(), clients.end()) != clients.end()) {
    throw Error(Errc::InvalidConfig, "client ids must be unique and ascending");
  }
}

// ---- json --------------------------------------------------------------------------

namespace {

json clients_json(std::span<const ClientId> cs) {
  json a = json::array();
  for (auto c : cs) a.push_back(c.value);
  return a;
}

std::vector<ClientId> clients_from(const json& a) {
  std::vector<ClientId> out;
  for (const auto& v : a) out.push_back(ClientId{v.get<std::uint64_t>()});
  return out;
}

json entry_json(const ConfEntry& e) {
  json parts = json::array();
  for (const auto& p : e.partitions) {
    json steps = json::array();
    for (const auto& step : p.desc.steps) {
      json segs = json::array();
      for (const auto& seg : step.segments) {
        segs.push_back({{"layer", seg.layer}, {"clients", clients_json(seg.clients)}});
      }
      steps.push_back(std::move(segs));
    }
    parts.push_back({{"partition", p.desc.partition},
                     {"node", p.node.value},
                     {"eid", p.eid.value},
                     {"revision", p.desc.revision},
                     {"chunk_base", p.desc.chunk_base},
                     {"chunk_count", p.desc.chunk_count},
                     {"normalized", p.desc.normalized_layers},
                     {"steps", std::move(steps)}});
  }
  return {{"round", e.round},
          {"revision", e.revision},
          {"participants", clients_json(e.participants)},
          {"expected_chunks", e.expected_chunks},
          {"partitions", std::move(parts)}};
}

ConfEntry entry_from(const json& j) {
  ConfEntry e;
  e.round = j.at("round").get<RoundIndex>();
  e.revision = j.at("revision").get<std::uint32_t>();
  e.participants = clients_from(j.at("participants"));
  e.expected_chunks = j.at("expected_chunks").get<std::uint32_t>();
  for (const auto& pj : j.at("partitions")) {
    PlannedPartition p;
    p.node = NodeId{pj.at("node").get<std::uint32_t>()};
    p.eid = EnclaveId{pj.at("eid").get<std::uint64_t>()};
    p.desc.partition = pj.at("partition").get<std::uint32_t>();
    p.desc.revision = pj.at("revision").get<std::uint32_t>();
    p.desc.chunk_base = pj.at("chunk_base").get<ChunkIndex>();
    p.desc.chunk_count = pj.at("chunk_count").get<std::uint32_t>();
    p.desc.normalized_layers = pj.at("normalized").get<std::vector<std::uint32_t>>();
    for (const auto& sj : pj.at("steps")) {
      Step step;
      for (const auto& segj : sj) {
        step.segments.push_back({segj.at("layer").get<std::uint32_t>(), clients_from(segj.at("clients"))});
      }
      p.desc.steps.push_back(std::move(step));
    }
    e.partitions.push_back(std::move(p));
  }
  return e;
}

template <class F>
auto parse_json(const std::string& text, F&& f) {
  try {
    return f(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bad document: ") + e.what());
  }
}

}  // namespace

std::string task_spec_to_json(const TaskSpec& spec) {
  json j = {{"taskid", spec.taskid},
            {"clients", clients_json(spec.clients)},
            {"layers", spec.meta.layer_sizes},
            {"rounds", spec.rounds},
            {"participation", spec.participation},
            {"strategy", std::string(strategy_name(spec.strategy))},
            {"selection", spec.selection == Selection::Uniform ? "uniform" : "round-robin"},
            {"code_id", to_hex(spec.program.code_id)},
            {"hook", spec.program.hook},
            {"seed", spec.seed}};
  return j.dump();
}

TaskSpec task_spec_from_json(const std::string& text) {
  return parse_json(text, [](const json& j) {
    TaskSpec s;
    s.taskid = j.at("taskid").get<std::string>();
    s.clients = clients_from(j.at("clients"));
    s.meta.layer_sizes = j.at("layers").get<std::vector<std::uint64_t>>();
    s.rounds = j.at("rounds").get<RoundIndex>();
    s.participation = j.at("participation").get<double>();
    s.strategy = parse_strategy(j.at("strategy").get<std::string>());
    s.selection = j.at("selection").get<std::string>() == "uniform" ? Selection::Uniform
                                                                     : Selection::RoundRobin;
    s.program = EnclaveProgram::compile(from_hex(j.at("code_id").get<std::string>()),
                                        j.at("hook").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  });
}

std::string conf_entry_to_json(const ConfEntry& e) { return entry_json(e).dump(); }

ConfEntry conf_entry_from_json(const std::string& text) {
  return parse_json(text, [](const json& j) { return entry_from(j); });
}

std::string conf_to_json(const Conf& c) {
  json rounds = json::array();
  for (const auto& [r, e] : c.rounds) rounds.push_back(entry_json(e));
  return json{{"rounds", std::move(rounds)}}.dump(2);
}

Conf conf_from_json(const std::string& text) {
  return parse_json(text, [](const json& j) {
    Conf c;
    for (const auto& ej : j.at("rounds")) {
      auto e = entry_from(ej);
      c.rounds.emplace(e.round, std::move(e));
    }
    return c;
  });
}

// ---- conf queries ----------------------------------------------------------------------

const PlannedPartition* ConfEntry::partition_on(NodeId node) const {
  for (const auto& p : partitions)
    if (p.node == node) return &p;
  return nullptr;
}

std::vector<std::uint32_t> ConfEntry::partitions_of(ClientId c) const {
  std::vector<std::uint32_t> out;
  for (const auto& p : partitions) {
    if (!p.desc.layers_of(c).empty()) out.push_back(p.desc.partition);
  }
  return out;
}

// ---- selection ---------------------------------------------------------------------------

std::vector<ClientId> select_participants(const TaskSpec& spec, RoundIndex round) {
  const std::size_t n = spec.clients.size();
  if (n == 0) return {};
  auto k = static_cast<std::size_t>(std::ceil(spec.participation * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<ClientId> out;
  if (spec.selection == Selection::RoundRobin) {
    const std::size_t offset = spec.seed % n;
    for (std::size_t i = 0; i < k; ++i) out.push_back(spec.clients[(offset + round * k + i) % n]);
  } else {
    Rng rng(spec.seed, 0xc11e'0000ull + round);
    std::vector<ClientId> pool = spec.clients;
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---- planning --------------------------------------------------------------------------------

namespace {

std::vector<std::uint32_t> all_layers(const ModelMeta& meta) {
  std::vector<std::uint32_t> ls(meta.layer_count());
  std::iota(ls.begin(), ls.end(), 0u);
  return ls;
}

// Next-fit over cells in layer-major, client-minor order: a partition takes
// cells until the next one would overflow it.
std::vector<PartitionDescriptor> plan_clientmax(std::span<const ClientId> participants,
                                                const ModelMeta& meta, const PlanLimits& limits) {
  std::vector<PartitionDescriptor> out;
  PartitionDescriptor cur;
  std::set<ClientId> cur_clients;
  std::uint64_t cur_bytes = 0;
  std::size_t cur_cells = 0;

  auto close = [&] {
    if (cur_cells == 0) return;
    out.push_back(std::move(cur));
    cur = {};
    cur_clients.clear();
    cur_bytes = 0;
    cur_cells = 0;
  };

  for (std::uint32_t layer = 0; layer < meta.layer_count(); ++layer) {
    const auto cb = cell_bytes(layer, meta);
    if (cb + kUpdateHeaderBytes > limits.epc_budget && !limits.paging) {
      throw Error(Errc::CapacityInfeasible, "layer " + std::to_string(layer) + " needs " +
                                                std::to_string(cb + kUpdateHeaderBytes) +
                                                " bytes, budget is " +
                                                std::to_string(limits.epc_budget));
    }
    for (auto c : participants) {
      const std::uint64_t add = cb + (cur_clients.count(c) ? 0 : kUpdateHeaderBytes);
      const bool over_bytes = cur_bytes + add > limits.epc_budget;
      const bool over_cells = limits.max_cells != 0 && cur_cells + 1 > limits.max_cells;
      if (cur_cells > 0 && (over_bytes || over_cells)) close();
      if (cur.steps.empty()) cur.steps.emplace_back();
      auto& segs = cur.steps.front().segments;
      if (segs.empty() || segs.back().layer != layer) segs.push_back({layer, {}});
      segs.back().clients.push_back(c);
      cur_bytes += cb + (cur_clients.insert(c).second ? kUpdateHeaderBytes : 0);
      ++cur_cells;
    }
  }
  close();
  return out;
}

PartitionDescriptor whole_step(std::span<const ClientId> clients, const ModelMeta& meta) {
  PartitionDescriptor d;
  Step step;
  for (std::uint32_t layer = 0; layer < meta.layer_count(); ++layer) {
    step.segments.push_back({layer, {clients.begin(), clients.end()}});
  }
  d.steps.push_back(std::move(step));
  return d;
}

std::vector<PartitionDescriptor> plan_single(std::span<const ClientId> participants,
                                             const ModelMeta& meta, const PlanLimits& limits) {
  auto layers = all_layers(meta);
  auto bytes = estimate_enclave_bytes(participants.size(), layers, meta);
  if (bytes > limits.epc_budget && !limits.paging) {
    throw Error(Errc::CapacityInfeasible, "single enclave needs " + std::to_string(bytes) +
                                              " bytes, budget is " + std::to_string(limits.epc_budget) +
                                              " and paging is off");
  }
  return {whole_step(participants, meta)};
}

// One enclave; client subsets that fit the budget are processed one after
// another and summed inside the enclave.
std::vector<PartitionDescriptor> plan_layermax(std::span<const ClientId> participants,
                                               const ModelMeta& meta, const PlanLimits& limits) {
  auto layers = all_layers(meta);
  const auto per_client = estimate_enclave_bytes(1, layers, meta);
  if (per_client > limits.epc_budget && !limits.paging) {
    throw Error(Errc::CapacityInfeasible, "one full model needs " + std::to_string(per_client) +
                                              " bytes, budget is " + std::to_string(limits.epc_budget));
  }
  std::size_t k = std::max<std::uint64_t>(1, limits.epc_budget / per_client);
  if (limits.max_cells != 0) {
    k = std::min<std::size_t>(k, std::max<std::size_t>(1, limits.max_cells / meta.layer_count()));
  }
  PartitionDescriptor d;
  for (std::size_t i = 0; i < participants.size(); i += k) {
    auto subset = participants.subspan(i, std::min(k, participants.size() - i));
    d.steps.push_back(whole_step(subset, meta).steps.front());
  }
  return {d};
}

}  // namespace

std::vector<PartitionDescriptor> plan_partitions(Strategy strategy,
                                                 std::span<const ClientId> participants,
                                                 const ModelMeta& meta, const PlanLimits& limits,
                                                 const TaskId& taskid) {
  if (participants.empty()) throw Error(Errc::EmptyInput, "no participants to plan");
  std::vector<PartitionDescriptor> parts;
  switch (strategy) {
    case Strategy::SingleSGX: parts = plan_single(participants, meta, limits); break;
    case Strategy::ClientMax: parts = plan_clientmax(participants, meta, limits); break;
    case Strategy::LayerMax: parts = plan_layermax(participants, meta, limits); break;
  }
  std::map<std::uint32_t, std::size_t> layer_parts;
  for (const auto& p : parts)
    for (auto l : p.layers()) ++layer_parts[l];
  ChunkIndex base = 0;
  for (std::uint32_t i = 0; i < parts.size(); ++i) {
    auto& p = parts[i];
    p.partition = i;
    for (auto l : p.layers())
      if (layer_parts[l] == 1) p.normalized_layers.push_back(l);
    p.chunk_base = base;
    p.chunk_count = chunk_count_for(p, taskid, meta, limits.tx_capacity);
    base += p.chunk_count;
  }
  return parts;
}

ConfEntry schedule_round(const TaskSpec& spec, RoundIndex round, std::span<const NodeId> alive,
                         const PlanLimits& limits) {
  if (alive.empty()) throw Error(Errc::NoNodes, "no alive nodes");
  std::vector<NodeId> nodes(alive.begin(), alive.end());
  std::sort(nodes.begin(), nodes.end());
  ConfEntry e;
  e.round = round;
  e.participants = select_participants(spec, round);
  auto parts = plan_partitions(spec.strategy, e.participants, spec.meta, limits, spec.taskid);
  if (parts.size() > nodes.size()) {
    throw Error(Errc::InsufficientNodes, std::to_string(parts.size()) + " partitions, " +
                                             std::to_string(nodes.size()) + " alive nodes");
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    e.expected_chunks += parts[i].chunk_count;
    e.partitions.push_back({nodes[i], EnclaveId{}, std::move(parts[i])});
  }
  return e;
}

Conf schedule(const TaskSpec& spec, std::span<const NodeId> alive, const PlanLimits& limits) {
  spec.validate();
  Conf c;
  for (RoundIndex r = 0; r < spec.rounds; ++r) c.rounds.emplace(r, schedule_round(spec, r, alive, limits));
  return c;
}

std::size_t partitions_needed(const TaskSpec& spec, const PlanLimits& limits) {
  std::size_t most = 0;
  // Selection repeats with period N / gcd(N, k); bounded by the round count.
  const RoundIndex horizon = std::min<RoundIndex>(spec.rounds, spec.clients.size());
  for (RoundIndex r = 0; r < horizon; ++r) {
    auto p = select_participants(spec, r);
    most = std::max(most, plan_partitions(spec.strategy, p, spec.meta, limits, spec.taskid).size());
  }
  return most;
}

void check_exact_cover(const ConfEntry& e, const ModelMeta& meta) {
  std::set<std::pair<std::uint32_t, ClientId>> seen;
  for (const auto& p : e.partitions) {
    for (const auto& step : p.desc.steps) {
      for (const auto& seg : step.segments) {
        for (auto c : seg.clients) {
          if (!seen.insert({seg.layer, c}).second) {
            throw Error(Errc::CoverageOverlap, "layer " + std::to_string(seg.layer) + " client " +
                                                   std::to_string(c.value) + " twice");
          }
        }
      }
    }
  }
  for (std::uint32_t l = 0; l < meta.layer_count(); ++l) {
    for (auto c : e.participants) {
      if (!seen.count({l, c})) {
        throw Error(Errc::CoverageGap, "layer " + std::to_string(l) + " client " +
                                           std::to_string(c.value) + " uncovered");
      }
    }
  }
  if (seen.size() != static_cast<std::size_t>(meta.layer_count()) * e.participants.size()) {
    throw Error(Errc::CoverageOverlap, "cells outside the participant grid");
  }
}

}  // namespace voltsim
