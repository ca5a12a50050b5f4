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

// Participant selection and partition planning over the layer x client grid.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "voltsim/enclave.hpp"

namespace voltsim {

enum class Strategy : std::uint8_t { SingleSGX, ClientMax, LayerMax };
std::string_view strategy_name(Strategy s);
/// Accepts "single", "clientmax", "layermax" (and the display names).
Strategy parse_strategy(std::string_view s);

enum class Selection : std::uint8_t { RoundRobin, Uniform };

struct TaskSpec {
  TaskId taskid;
  std::vector<ClientId> clients;  // ascending
  ModelMeta meta;
  RoundIndex rounds = 1;
  double participation = 0.10;
  Strategy strategy = Strategy::ClientMax;
  Selection selection = Selection::RoundRobin;
  EnclaveProgram program;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig when an invariant does not hold.
  void validate() const;
};

std::string task_spec_to_json(const TaskSpec& spec);
TaskSpec task_spec_from_json(const std::string& text);

struct PlanLimits {
  std::uint64_t epc_budget = kDefaultEpcBudget;
  bool paging = false;
  std::uint64_t tx_capacity = 2'000'000;
  /// Cells per enclave, on top of the byte budget. 0 for no limit.
  std::uint32_t max_cells = 0;
};

struct PlannedPartition {
  NodeId node;
  EnclaveId eid;
  PartitionDescriptor desc;

  bool operator==(const PlannedPartition&) const = default;
};

struct ConfEntry {
  RoundIndex round = 0;
  std::uint32_t revision = 0;
  std::vector<ClientId> participants;
  std::vector<PlannedPartition> partitions;
  std::uint32_t expected_chunks = 0;

  const PlannedPartition* partition_on(NodeId node) const;
  std::vector<std::uint32_t> partitions_of(ClientId c) const;
  bool operator==(const ConfEntry&) const = default;
};

struct Conf {
  std::map<RoundIndex, ConfEntry> rounds;
  bool operator==(const Conf&) const = default;
};

std::string conf_entry_to_json(const ConfEntry& e);
ConfEntry conf_entry_from_json(const std::string& text);
std::string conf_to_json(const Conf& c);
Conf conf_from_json(const std::string& text);

/// k = max(1, ceil(participation * N)) clients, ascending.
std::vector<ClientId> select_participants(const TaskSpec& spec, RoundIndex round);

/// Partition layouts (without node or eid) for one round's participants.
/// Throws CapacityInfeasible.
std::vector<PartitionDescriptor> plan_partitions(Strategy strategy,
                                                 std::span<const ClientId> participants,
                                                 const ModelMeta& meta, const PlanLimits& limits,
                                                 const TaskId& taskid);

/// Plans one round and binds partitions to the lowest-id alive nodes.
/// Throws NoNodes, InsufficientNodes, CapacityInfeasible.
ConfEntry schedule_round(const TaskSpec& spec, RoundIndex round, std::span<const NodeId> alive,
                         const PlanLimits& limits);
Conf schedule(const TaskSpec& spec, std::span<const NodeId> alive, const PlanLimits& limits);

/// Throws CoverageGap / CoverageOverlap unless the entry covers every
/// (layer, participant) cell exactly once.
void check_exact_cover(const ConfEntry& e, const ModelMeta& meta);

/// Partitions any round of the task may need, i.e. the enclave count.
std::size_t partitions_needed(const TaskSpec& spec, const PlanLimits& limits);

}  // namespace voltsim
