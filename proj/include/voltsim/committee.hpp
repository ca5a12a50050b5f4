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

// The coordinating committee: node discovery, enclave provisioning and
// attestation, per-round configuration, liveness monitoring and failover.

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>

#include "voltsim/roles.hpp"

namespace voltsim {

struct CommitteeConfig {
  /// Every node the committee may probe, in any order.
  std::vector<NodeId> nodes;
  PlanLimits limits;
  std::uint64_t seed = 0;
  /// When set, rounds reuse these layouts instead of planning.
  std::optional<Conf> replay;
};

class Committee final : public Endpoint {
 public:
  enum class Phase { Idle, Probing, Provisioning, Running, Done, Stalled };

  Committee(RunContext& ctx, CommitteeConfig config);

  void on_frame(PartyId src, const Frame& frame) override;

  /// Nodes whose last heartbeat is more than threshold x interval old at
  /// `now`. Pure query; the periodic tick fails what it returns.
  std::vector<NodeId> monitor_tick(SimTime now);

  Phase phase() const { return phase_; }
  const Conf& conf() const { return conf_; }
  const std::optional<VerifyKey>& verify_key() const { return vk_; }
  const std::vector<NodeId>& slots() const { return slots_; }
  std::vector<NodeId> alive() const;
  bool failed(NodeId n) const;
  RoundIndex current_round() const { return current_; }

 private:
  struct NodeCtx {
    bool alive = false;
    bool failed = false;
    SimTime last_beat = 0;
    std::optional<EnclaveId> eid;
    std::unique_ptr<RaInitiator> ra;
    std::optional<SymKey> ssk;
    bool ready = false;
  };

  void end_probe();
  void tick();
  void provision(NodeId n);
  void on_ready(NodeId n);
  void start_round(RoundIndex r);
  ConfEntry plan_round(RoundIndex r);
  void deliver_round(RoundIndex r, std::size_t partition);
  void broadcast_conf(RoundIndex r);
  void fail_node(NodeId n, const std::string& cause);
  void rebind(std::size_t slot, std::optional<std::size_t> recovery);
  void exclude(const wire::StragglerReport& rep);
  void stall(const std::string& why);
  void publish(RoundIndex r);

  RunContext& ctx_;
  CommitteeConfig config_;
  Rng rng_;
  NonceSource nonces_;
  Phase phase_ = Phase::Idle;
  TaskSpec spec_;
  std::optional<SigKeyPair> keys_;
  std::optional<VerifyKey> vk_;
  std::map<NodeId, NodeCtx> nodes_;
  std::vector<NodeId> slots_;
  std::map<NodeId, std::size_t> recovering_;  // replacement -> recovery record index
  Conf conf_;
  RoundIndex current_ = 0;
  std::set<RoundIndex> completed_;
  std::uint64_t ping_seq_ = 0;
};

}  // namespace voltsim
