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

#include "voltsim/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "voltsim/socket_channel.hpp"

namespace voltsim {

using json = nlohmann::json;

// ---- presets ---------------------------------------------------------------------------------------

const std::vector<ModelPreset>& model_presets() {
  static const std::vector<ModelPreset> presets = {
      {"MLP", 10'901, 43'602, 0.042},
      {"CNN", 21'839, 87'357, 0.085},
      {"ResNet18", 11'180'000, 44'711'281, 42.64},
      {"ResNet50", 21'290'000, 85'144'371, 81.2},
      {"AlexNet", 1'250'000, 4'991'222, 4.76},
      {"Bert", 97'540'000, 390'160'000, 390.16},
  };
  return presets;
}

const ModelPreset& find_preset(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  for (const auto& p : model_presets()) {
    if (lower(p.name) == lower(name)) return p;
  }
  throw Error(Errc::InvalidConfig, "unknown model preset " + std::string(name));
}

ModelMeta preset_meta(const ModelPreset& p, std::uint32_t layers) {
  if (layers == 0 || layers > p.parameters) throw Error(Errc::InvalidConfig, "bad preset layer count");
  ModelMeta m;
  const std::uint64_t each = p.parameters / layers;
  for (std::uint32_t i = 0; i < layers; ++i) m.layer_sizes.push_back(each);
  m.layer_sizes.back() += p.parameters - each * layers;
  return m;
}

// ---- traffic ---------------------------------------------------------------------------------------

namespace {

std::int64_t thousandths(double mb) { return std::llround(mb * 1000.0); }

}  // namespace

double traffic_fl(std::uint64_t n_clients, std::uint64_t rounds, double model_mb) {
  auto v = 2 * static_cast<std::int64_t>(n_clients * rounds) * thousandths(model_mb);
  return static_cast<double>(v) / 1000.0;
}

double traffic_voltran(std::uint64_t n_clients, std::uint64_t rounds, double model_mb) {
  auto per_round = static_cast<std::int64_t>(2 * n_clients + 1);
  auto v = per_round * static_cast<std::int64_t>(rounds) * thousandths(model_mb);
  return static_cast<double>(v) / 1000.0;
}

// ---- faults ----------------------------------------------------------------------------------------

PartyId parse_party(std::string_view s) {
  if (s == "owner") return PartyId::owner();
  if (s == "committee") return PartyId::committee();
  if (s == "ledger") return PartyId::ledger();
  auto colon = s.find(':');
  if (colon != std::string_view::npos) {
    auto kind = s.substr(0, colon);
    auto index = static_cast<std::uint32_t>(std::stoul(std::string(s.substr(colon + 1))));
    if (kind == "client") return PartyId::client(ClientId{index});
    if (kind == "node") return PartyId::node(NodeId{index});
  }
  throw Error(Errc::InvalidConfig, "unknown party " + std::string(s));
}

namespace {

std::string party_text(PartyId p) {
  switch (p.kind) {
    case PartyKind::Client: return "client:" + std::to_string(p.index);
    case PartyKind::Node: return "node:" + std::to_string(p.index);
    default: return to_string(p);
  }
}

template <class F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::InvalidConfig, std::string(what) + ": " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, std::string(where) + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; });
    if (!ok) throw Error(Errc::InvalidConfig, std::string("unknown key '") + k + "' in " + where);
  }
}

FaultRule rule_from(const json& j, FaultRule::Action action) {
  check_keys(j, {"kind", "src", "dst", "skip", "count", "bit", "delay_ms"}, "fault rule");
  FaultRule r;
  r.action = action;
  if (j.contains("kind")) {
    auto k = parse_kind(j.at("kind").get<std::string>());
    if (!k) throw Error(Errc::InvalidConfig, "unknown message kind " + j.at("kind").get<std::string>());
    r.kind = *k;
  }
  if (j.contains("src")) r.src = parse_party(j.at("src").get<std::string>());
  if (j.contains("dst")) r.dst = parse_party(j.at("dst").get<std::string>());
  r.skip = j.value("skip", std::uint64_t{0});
  r.count = j.value("count", std::uint64_t{1});
  r.bit = j.value("bit", std::uint64_t{0});
  r.delay = static_cast<SimTime>(j.value("delay_ms", 0.0) * kMillis);
  return r;
}

json rule_to(const FaultRule& r) {
  json j;
  if (r.kind) j["kind"] = std::string(kind_name(*r.kind));
  if (r.src) j["src"] = party_text(*r.src);
  if (r.dst) j["dst"] = party_text(*r.dst);
  j["skip"] = r.skip;
  j["count"] = r.count;
  if (r.action == FaultRule::Action::Tamper) j["bit"] = r.bit;
  if (r.action == FaultRule::Action::Delay) j["delay_ms"] = to_ms(r.delay);
  return j;
}

FaultSchedule faults_from(const json& j) {
  check_keys(j, {"kills", "drops", "tampers", "delays", "tamper_program", "forge_chunks", "stragglers"},
             "fault schedule");
  FaultSchedule f;
  for (const auto& k : j.value("kills", json::array())) {
    check_keys(k, {"node", "round", "point", "at_ms"}, "kill");
    KillEvent e;
    e.node = NodeId{k.at("node").get<std::uint32_t>()};
    if (k.contains("at_ms")) {
      e.at = static_cast<SimTime>(k.at("at_ms").get<double>() * kMillis);
    } else {
      e.round = k.at("round").get<RoundIndex>();
      e.point = parse_node_point(k.value("point", std::string("mid_round")));
    }
    f.kills.push_back(e);
  }
  for (const auto& r : j.value("drops", json::array())) f.rules.push_back(rule_from(r, FaultRule::Action::Drop));
  for (const auto& r : j.value("tampers", json::array())) f.rules.push_back(rule_from(r, FaultRule::Action::Tamper));
  for (const auto& r : j.value("delays", json::array())) f.rules.push_back(rule_from(r, FaultRule::Action::Delay));
  for (auto n : j.value("tamper_program", std::vector<std::uint32_t>{})) f.tamper_program.push_back(NodeId{n});
  for (auto n : j.value("forge_chunks", std::vector<std::uint32_t>{})) f.forge_chunks.push_back(NodeId{n});
  for (const auto& s : j.value("stragglers", json::array())) {
    check_keys(s, {"client", "lag_ms", "max_resends"}, "straggler");
    StragglerSpec st;
    st.client = ClientId{s.at("client").get<std::uint64_t>()};
    st.lag = static_cast<SimTime>(s.value("lag_ms", 0.0) * kMillis);
    if (s.contains("max_resends")) st.max_resends = s.at("max_resends").get<std::uint32_t>();
    f.stragglers.push_back(st);
  }
  return f;
}

json faults_json(const FaultSchedule& f) {
  json j = json::object();
  json kills = json::array();
  for (const auto& k : f.kills) {
    json e{{"node", k.node.value}};
    if (k.at) {
      e["at_ms"] = to_ms(*k.at);
    } else {
      e["round"] = *k.round;
      e["point"] = std::string(node_point_name(k.point));
    }
    kills.push_back(e);
  }
  j["kills"] = kills;
  json drops = json::array(), tampers = json::array(), delays = json::array();
  for (const auto& r : f.rules) {
    auto& dst = r.action == FaultRule::Action::Drop ? drops : r.action == FaultRule::Action::Tamper ? tampers : delays;
    dst.push_back(rule_to(r));
  }
  j["drops"] = drops;
  j["tampers"] = tampers;
  j["delays"] = delays;
  std::vector<std::uint32_t> tp, fc;
  for (auto n : f.tamper_program) tp.push_back(n.value);
  for (auto n : f.forge_chunks) fc.push_back(n.value);
  j["tamper_program"] = tp;
  j["forge_chunks"] = fc;
  json st = json::array();
  for (const auto& s : f.stragglers) {
    json e{{"client", s.client.value}, {"lag_ms", to_ms(s.lag)}};
    if (s.max_resends) e["max_resends"] = *s.max_resends;
    st.push_back(e);
  }
  j["stragglers"] = st;
  return j;
}

}  // namespace

FaultSchedule faults_from_json(const std::string& text) {
  return guarded("fault schedule", [&] { return faults_from(json::parse(text)); });
}

std::string faults_to_json(const FaultSchedule& f) { return faults_json(f).dump(2); }

// ---- configuration ---------------------------------------------------------------------------------

ModelMeta RunConfig::meta() const {
  if (!model.empty()) return preset_meta(find_preset(model), preset_layers);
  return ModelMeta{layers};
}

PlanLimits RunConfig::limits() const { return {epc_budget, paging, tx_capacity, max_cells}; }

TaskSpec RunConfig::task_spec() const {
  TaskSpec s;
  s.taskid = taskid;
  for (std::uint64_t i = 1; i <= clients; ++i) s.clients.push_back(ClientId{i});
  s.meta = meta();
  s.rounds = rounds;
  s.participation = participation;
  s.strategy = strategy;
  s.selection = selection;
  std::string code = "voltsim-aggregation-program/" + hook;
  s.program = EnclaveProgram::compile(Bytes(code.begin(), code.end()), hook);
  s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  if (clients == 0) throw Error(Errc::InvalidConfig, "clients must be positive");
  if (nodes == 0) throw Error(Errc::InvalidConfig, "nodes must be positive");
  if (model.empty() && (layers.empty() || std::count(layers.begin(), layers.end(), 0u) != 0)) {
    throw Error(Errc::InvalidConfig, "layers must be non-empty and positive");
  }
  if (!(step > 0)) throw Error(Errc::InvalidConfig, "step must be positive");
  if (tx_capacity == 0) throw Error(Errc::InvalidConfig, "tx_capacity must be positive");
  if (chain.block_interval_ms < 0) throw Error(Errc::InvalidConfig, "negative block interval");
  task_spec().validate();
}

namespace {

std::string selection_name(Selection s) { return s == Selection::Uniform ? "uniform" : "round_robin"; }

Selection parse_selection(const std::string& s) {
  if (s == "round_robin") return Selection::RoundRobin;
  if (s == "uniform") return Selection::Uniform;
  throw Error(Errc::InvalidConfig, "unknown selection " + s);
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  return guarded("run config", [&] {
    auto j = json::parse(text);
    check_keys(j,
               {"taskid", "clients", "participation", "rounds", "strategy", "selection", "model",
                "preset_layers", "layers", "hook", "chain", "epc_budget", "paging", "tx_capacity",
                "max_cells", "nodes", "seed", "int_mode", "sentinel", "step", "latency_ms",
                "bandwidth_bps", "heartbeat_ms", "failover_threshold", "ping_timeout_ms",
                "install_ms", "schedule_ms", "train_ms", "straggler_timeout_ms",
                "straggler_retries", "key_exchange_timeout_ms", "compute_ns_per_byte",
                "paging_ns_per_byte", "socket", "scan_leaks", "clock", "time_limit_s", "faults"},
               "run config");
    RunConfig c;
    c.taskid = j.value("taskid", c.taskid);
    c.clients = j.value("clients", c.clients);
    c.participation = j.value("participation", c.participation);
    c.rounds = j.value("rounds", c.rounds);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("selection")) c.selection = parse_selection(j.at("selection").get<std::string>());
    c.model = j.value("model", c.model);
    c.preset_layers = j.value("preset_layers", c.preset_layers);
    c.layers = j.value("layers", c.layers);
    c.hook = j.value("hook", c.hook);
    if (j.contains("chain")) {
      const auto& ch = j.at("chain");
      if (ch.is_string()) {
        c.chain = chain_preset(ch.get<std::string>());
      } else {
        check_keys(ch, {"name", "preset", "block_interval_ms", "txs_per_block", "tx_capacity_bytes"}, "chain");
        c.chain = chain_preset(ch.value("preset", std::string("fabric")));
        c.chain.name = ch.value("name", c.chain.name);
        c.chain.block_interval_ms = ch.value("block_interval_ms", c.chain.block_interval_ms);
        c.chain.txs_per_block = ch.value("txs_per_block", c.chain.txs_per_block);
        c.chain.tx_capacity_bytes = ch.value("tx_capacity_bytes", c.chain.tx_capacity_bytes);
      }
      c.tx_capacity = c.chain.tx_capacity_bytes;
    }
    c.epc_budget = j.value("epc_budget", c.epc_budget);
    c.paging = j.value("paging", c.paging);
    c.tx_capacity = j.value("tx_capacity", c.tx_capacity);
    c.max_cells = j.value("max_cells", c.max_cells);
    c.nodes = j.value("nodes", c.nodes);
    c.seed = j.value("seed", c.seed);
    c.int_mode = j.value("int_mode", c.int_mode);
    c.sentinel = j.value("sentinel", c.sentinel);
    c.step = j.value("step", c.step);
    auto ms = [&](const char* key, SimTime& field) {
      if (j.contains(key)) field = static_cast<SimTime>(j.at(key).get<double>() * kMillis);
    };
    ms("latency_ms", c.link.latency);
    c.link.bandwidth = j.value("bandwidth_bps", c.link.bandwidth);
    ms("heartbeat_ms", c.timing.heartbeat_interval);
    c.timing.failover_threshold = j.value("failover_threshold", c.timing.failover_threshold);
    ms("ping_timeout_ms", c.timing.ping_timeout);
    ms("install_ms", c.timing.install_cost);
    ms("schedule_ms", c.timing.schedule_cost);
    ms("train_ms", c.timing.train_cost);
    ms("straggler_timeout_ms", c.timing.straggler_timeout);
    c.timing.straggler_retries = j.value("straggler_retries", c.timing.straggler_retries);
    ms("key_exchange_timeout_ms", c.timing.key_exchange_timeout);
    c.timing.enclave_cost.compute_ns_per_byte =
        j.value("compute_ns_per_byte", c.timing.enclave_cost.compute_ns_per_byte);
    c.timing.enclave_cost.paging_ns_per_byte =
        j.value("paging_ns_per_byte", c.timing.enclave_cost.paging_ns_per_byte);
    c.socket = j.value("socket", c.socket);
    c.scan_leaks = j.value("scan_leaks", c.scan_leaks);
    if (j.contains("clock")) {
      auto clock = j.at("clock").get<std::string>();
      if (clock == "virtual") {
        c.clock = ClockMode::Virtual;
      } else if (clock == "wall") {
        c.clock = ClockMode::Wall;
      } else {
        throw Error(Errc::InvalidConfig, "clock must be virtual or wall");
      }
    }
    if (j.contains("time_limit_s")) {
      c.time_limit = static_cast<SimTime>(j.at("time_limit_s").get<double>() * kSeconds);
    }
    if (j.contains("faults")) c.faults = faults_from(j.at("faults"));
    c.validate();
    return c;
  });
}

std::string run_config_to_json(const RunConfig& c) {
  json j{
      {"taskid", c.taskid},
      {"clients", c.clients},
      {"participation", c.participation},
      {"rounds", c.rounds},
      {"strategy", std::string(strategy_name(c.strategy))},
      {"selection", selection_name(c.selection)},
      {"hook", c.hook},
      {"chain",
       {{"name", c.chain.name},
        {"block_interval_ms", c.chain.block_interval_ms},
        {"txs_per_block", c.chain.txs_per_block},
        {"tx_capacity_bytes", c.chain.tx_capacity_bytes}}},
      {"epc_budget", c.epc_budget},
      {"paging", c.paging},
      {"tx_capacity", c.tx_capacity},
      {"max_cells", c.max_cells},
      {"nodes", c.nodes},
      {"seed", c.seed},
      {"int_mode", c.int_mode},
      {"sentinel", c.sentinel},
      {"step", c.step},
      {"latency_ms", to_ms(c.link.latency)},
      {"bandwidth_bps", c.link.bandwidth},
      {"heartbeat_ms", to_ms(c.timing.heartbeat_interval)},
      {"failover_threshold", c.timing.failover_threshold},
      {"ping_timeout_ms", to_ms(c.timing.ping_timeout)},
      {"install_ms", to_ms(c.timing.install_cost)},
      {"schedule_ms", to_ms(c.timing.schedule_cost)},
      {"train_ms", to_ms(c.timing.train_cost)},
      {"straggler_timeout_ms", to_ms(c.timing.straggler_timeout)},
      {"straggler_retries", c.timing.straggler_retries},
      {"key_exchange_timeout_ms", to_ms(c.timing.key_exchange_timeout)},
      {"compute_ns_per_byte", c.timing.enclave_cost.compute_ns_per_byte},
      {"paging_ns_per_byte", c.timing.enclave_cost.paging_ns_per_byte},
      {"socket", c.socket},
      {"scan_leaks", c.scan_leaks},
      {"clock", c.clock == ClockMode::Wall ? "wall" : "virtual"},
      {"time_limit_s", static_cast<double>(c.time_limit) / kSeconds},
      {"faults", faults_json(c.faults)},
  };
  if (!c.model.empty()) {
    j["model"] = c.model;
    j["preset_layers"] = c.preset_layers;
  } else {
    j["layers"] = c.layers;
  }
  // The chain's own name selects the preset on reload.
  j["chain"]["preset"] = c.chain.name == "fabric-mod" || c.chain.name == "tendermint" ? c.chain.name : "fabric";
  return j.dump(2);
}

// ---- oracle ----------------------------------------------------------------------------------------

std::map<std::uint32_t, std::vector<ClientId>> layer_clients(const ConfEntry& entry) {
  std::map<std::uint32_t, std::vector<ClientId>> out;
  for (const auto& p : entry.partitions)
    for (const auto& step : p.desc.steps)
      for (const auto& seg : step.segments) {
        auto& v = out[seg.layer];
        v.insert(v.end(), seg.clients.begin(), seg.clients.end());
      }
  for (auto& [l, v] : out) std::sort(v.begin(), v.end());
  return out;
}

WeightVector oracle_round(const WeightVector& previous,
                          const std::map<std::uint32_t, std::vector<ClientId>>& cover, const TaskId& taskid,
                          RoundIndex round, std::uint64_t seed, const SynthParams& synth) {
  std::map<ClientId, LocalUpdate> updates;
  for (const auto& [l, clients] : cover)
    for (auto c : clients)
      if (!updates.count(c)) updates.emplace(c, synth_local_update(previous, taskid, c, round, seed, synth));

  WeightVector out = previous;
  for (auto& layer : out.layers) {
    auto it = cover.find(layer.index);
    if (it == cover.end() || it->second.empty()) continue;
    std::vector<double> sum(layer.elements.size(), 0.0);
    std::uint64_t weight = 0;
    for (auto c : it->second) {
      const auto& u = updates.at(c);
      const auto* w = u.weights.find(layer.index);
      const double d = static_cast<double>(u.dataset_size);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += d * w->elements[i];
      weight += u.dataset_size;
    }
    for (std::size_t i = 0; i < sum.size(); ++i) layer.elements[i] = sum[i] / static_cast<double>(weight);
  }
  return out;
}

// ---- report ----------------------------------------------------------------------------------------

bool RunReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

const CheckResult* RunReport::check(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::string report_jsonl(const RunReport& r, bool include_wall) {
  std::ostringstream out;
  out << json{{"type", "header"},  {"taskid", r.taskid},     {"strategy", r.strategy},
              {"chain", r.chain},  {"seed", r.seed},         {"int_mode", r.int_mode},
              {"rounds", r.rounds.size()}}
             .dump()
      << '\n';
  for (const auto& rr : r.rounds) {
    out << json{{"type", "round"},
                {"round", rr.round},
                {"revision", rr.revision},
                {"participants", rr.participants},
                {"partitions", rr.partitions},
                {"chunks", rr.chunks},
                {std::string(kPhaseSendModel), rr.phases.send_model_ms},
                {std::string(kPhaseAggregate), rr.phases.aggregate_ms},
                {std::string(kPhaseSendResult), rr.phases.send_result_ms},
                {"on_chain", rr.on_chain},
                {"matches_oracle", rr.matches_oracle},
                {"max_abs_error", rr.max_abs_error},
                {"digest", rr.digest}}
               .dump()
        << '\n';
  }
  for (const auto& rec : r.recoveries) {
    json j{{"type", "recovery"},
           {"failed", rec.failed.value},
           {"round", rec.round},
           {"cause", rec.cause},
           {"detected_ms", to_ms(rec.detected)},
           {"Re-schedule", to_ms(rec.reschedule_ns())},
           {"Connect", to_ms(rec.connect_ns())}};
    j["replacement"] = rec.replacement ? json(rec.replacement->value) : json(nullptr);
    out << j.dump() << '\n';
  }
  json traffic = json::object();
  for (const auto& [k, s] : r.traffic) traffic[k] = {{"frames", s.frames}, {"bytes", s.bytes}};
  out << json{{"type", "traffic"}, {"by_kind", traffic}, {"total_bytes", r.traffic_bytes},
              {"ledger_bytes", r.ledger_bytes}}
             .dump()
      << '\n';
  out << json{{"type", "receipts"}, {"accepted", r.chunks_accepted}, {"rejected", r.rejections}}.dump() << '\n';
  for (const auto& c : r.checks) {
    out << json{{"type", "check"}, {"name", c.name}, {"pass", c.pass}, {"detail", c.detail}}.dump() << '\n';
  }
  json summary{{"type", "summary"},
               {"passed", r.passed()},
               {"final_digest", r.final_digest},
               {"virtual_ms", r.virtual_ms},
               {"leaks", r.leaks},
               {"leak_sites", r.leak_sites},
               {"counters", r.counters},
               {"stalled", r.stalled},
               {"stall_reason", r.stall_reason}};
  if (include_wall) summary["wall_ms"] = r.wall_ms;
  out << summary.dump() << '\n';
  return out.str();
}

std::string report_digest(const RunReport& r) {
  auto text = report_jsonl(r, false);
  return to_hex(sha256(as_bytes(text)));
}

std::string report_table(const RunReport& r) {
  std::ostringstream out;
  char line[256];
  out << "task " << r.taskid << "  strategy " << r.strategy << "  chain " << r.chain << "  seed " << r.seed
      << (r.int_mode ? "  int-mode" : "") << '\n';
  std::snprintf(line, sizeof line, "%6s %4s %6s %5s %16s %12s %19s  %s\n", "round", "rev", "parts", "chunk",
                std::string(kPhaseSendModel).c_str(), std::string(kPhaseAggregate).c_str(),
                std::string(kPhaseSendResult).c_str(), "oracle");
  out << line;
  for (const auto& rr : r.rounds) {
    std::snprintf(line, sizeof line, "%6llu %4u %6zu %5u %13.3f ms %9.3f ms %16.3f ms  %s\n",
                  static_cast<unsigned long long>(rr.round), rr.revision, rr.partitions, rr.chunks,
                  rr.phases.send_model_ms, rr.phases.aggregate_ms, rr.phases.send_result_ms,
                  rr.matches_oracle ? "ok" : "MISMATCH");
    out << line;
  }
  for (const auto& rec : r.recoveries) {
    std::snprintf(line, sizeof line, "recovery: node %u -> %s in round %llu (%s)  Re-schedule %.3f ms  Connect %.3f ms\n",
                  rec.failed.value,
                  rec.replacement ? std::to_string(rec.replacement->value).c_str() : "none",
                  static_cast<unsigned long long>(rec.round), rec.cause.c_str(), to_ms(rec.reschedule_ns()),
                  to_ms(rec.connect_ns()));
    out << line;
  }
  out << "traffic " << r.traffic_bytes << " bytes, ledger " << r.ledger_bytes << " bytes, chunks accepted "
      << r.chunks_accepted << '\n';
  for (const auto& [reason, n] : r.rejections) out << "  rejected " << reason << ": " << n << '\n';
  for (const auto& c : r.checks) {
    out << (c.pass ? "  PASS " : "  FAIL ") << c.name;
    if (!c.detail.empty()) out << "  (" << c.detail << ")";
    out << '\n';
  }
  out << "final model " << r.final_digest << '\n';
  out << (r.passed() ? "RESULT: PASS" : "RESULT: FAIL") << '\n';
  return out.str();
}

// ---- leaky fixture -----------------------------------------------------------------------------------

Envelope LeakyAead::seal(const SymKey& key, ByteView aad, ByteView plaintext, NonceSource& nonces) const {
  Envelope e;
  e.nonce = nonces.draw(key);
  e.aad.assign(aad.begin(), aad.end());
  e.ciphertext.assign(plaintext.begin(), plaintext.end());
  return e;
}

Bytes LeakyAead::open(const SymKey&, const Envelope& env) const { return env.ciphertext; }

// ---- orchestration ---------------------------------------------------------------------------------

namespace {

double max_abs_diff(const WeightVector& a, const WeightVector& b) {
  if (!a.same_shape(b)) return INFINITY;
  double m = 0;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    for (std::size_t i = 0; i < a.layers[l].elements.size(); ++i)
      m = std::max(m, std::abs(a.layers[l].elements[i] - b.layers[l].elements[i]));
  return m;
}

bool model_matches(const WeightVector& a, const WeightVector& b, bool exact, double* err = nullptr) {
  double d = max_abs_diff(a, b);
  if (err) *err = d;
  return exact ? a == b : d <= 1e-12;
}

}  // namespace

RunResult run_task(const RunConfig& cfg, const RunHooks& hooks) {
  cfg.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  RunResult res;
  const TaskSpec spec = cfg.task_spec();
  res.initial = synth_initial_model(spec.meta, cfg.seed, cfg.int_mode);

  Simulator sim;
  Network net(sim, cfg.link);
  std::unique_ptr<SocketChannel> socket;
  if (cfg.socket) {
    socket = std::make_unique<SocketChannel>();
    net.use_socket(socket.get());
  }
  Telemetry& tel = res.telemetry;

  const Bytes pattern = sentinel_pattern();
  std::uint64_t leaks = 0;
  std::vector<std::string> sites;
  auto scan = [&](const std::string& where, ByteView bytes) {
    if (!contains(bytes, pattern)) return;
    ++leaks;
    if (sites.size() < 16) sites.push_back(where);
  };

  RunContext ctx{sim, net, tel, cfg.timing, {}, hooks.client_cipher};
  if (cfg.scan_leaks) {
    ctx.resident = [&](PartyId holder, ByteView bytes) { scan("buffer at " + to_string(holder), bytes); };
    net.add_tap([&](const TapRecord& t) {
      scan("wire " + std::string(kind_name(t.kind)) + " " + to_string(t.src) + "->" + to_string(t.dst), t.frame);
    });
  }
  for (const auto& rule : cfg.faults.rules) net.add_fault(rule);

  LedgerService ledger(ctx, cfg.chain);
  net.attach(PartyId::ledger(), &ledger);

  CommitteeConfig cc;
  for (std::uint32_t i = 1; i <= cfg.nodes; ++i) cc.nodes.push_back(NodeId{i});
  cc.limits = cfg.limits();
  cc.seed = cfg.seed;
  cc.replay = cfg.replay;
  Committee committee(ctx, cc);
  net.attach(PartyId::committee(), &committee);

  Owner owner(ctx, spec, res.initial, cfg.seed);
  net.attach(PartyId::owner(), &owner);

  std::vector<std::unique_ptr<Client>> clients;
  for (auto c : spec.clients) {
    ClientBehavior b;
    b.synth = {cfg.step, cfg.int_mode, cfg.sentinel};
    b.seed = cfg.seed;
    b.expected_measurement = spec.program.measurement;
    for (const auto& s : cfg.faults.stragglers) {
      if (s.client == c) {
        b.lag = s.lag;
        b.max_resends = s.max_resends;
      }
    }
    clients.push_back(std::make_unique<Client>(ctx, c, b));
    net.attach(PartyId::client(c), clients.back().get());
  }

  SgxPlatform platform(cfg.seed);
  std::vector<std::unique_ptr<Node>> nodes;
  auto has = [](const std::vector<NodeId>& v, NodeId n) { return std::find(v.begin(), v.end(), n) != v.end(); };
  for (auto n : cc.nodes) {
    NodeBehavior b{has(cfg.faults.tamper_program, n), has(cfg.faults.forge_chunks, n)};
    nodes.push_back(std::make_unique<Node>(ctx, platform, n, b));
    net.attach(PartyId::node(n), nodes.back().get());
  }

  auto kill = [&](NodeId n) {
    auto& node = *nodes.at(n.value - 1);
    if (node.halted()) return;
    node.halt();
    net.set_down(PartyId::node(n), true);
    tel.count("kills");
  };
  std::vector<bool> fired(cfg.faults.kills.size(), false);
  for (std::size_t i = 0; i < cfg.faults.kills.size(); ++i) {
    const auto& k = cfg.faults.kills[i];
    if (k.node.value == 0 || k.node.value > cfg.nodes) {
      throw Error(Errc::InvalidConfig, "kill names unknown node " + std::to_string(k.node.value));
    }
    if (k.at) sim.at(*k.at, [&, n = k.node] { kill(n); });
  }
  for (auto& node : nodes) {
    node->set_point_observer([&](NodeId n, NodePoint p, RoundIndex r) {
      for (std::size_t i = 0; i < cfg.faults.kills.size(); ++i) {
        const auto& k = cfg.faults.kills[i];
        if (fired[i] || k.at || k.node != n || k.point != p || k.round != r) continue;
        fired[i] = true;
        kill(n);
      }
    });
  }

  for (auto& node : nodes) node->start();
  owner.start();

  auto done = [&] { return owner.phase() == Owner::Phase::Done || tel.stalled || owner.error().has_value(); };
  if (cfg.clock == ClockMode::Wall) {
    while (!done()) {
      auto t = sim.next_time();
      if (t < 0 || t > cfg.time_limit) break;
      std::this_thread::sleep_until(wall_start + std::chrono::nanoseconds(t));
      sim.step();
    }
  } else {
    sim.run_until(done, cfg.time_limit);
  }
  if (!done()) tel.stall(sim.now(), "time limit reached before the task finished");

  // ---- collect ------------------------------------------------------------------------------------
  auto& rep = res.report;
  rep.taskid = cfg.taskid;
  rep.strategy = std::string(strategy_name(cfg.strategy));
  rep.chain = cfg.chain.name;
  rep.seed = cfg.seed;
  rep.int_mode = cfg.int_mode;
  for (const auto& [kind, s] : net.stats()) rep.traffic[std::string(kind_name(kind))] = s;
  rep.traffic_bytes = net.total_bytes();
  rep.ledger_bytes = ledger.state().stored_bytes();
  rep.chunks_accepted = tel.counters["chunks_accepted"];
  rep.rejections = tel.rejections;
  rep.recoveries = tel.recoveries;
  rep.counters = tel.counters;
  rep.virtual_ms = to_ms(sim.now());
  rep.stalled = tel.stalled;
  rep.stall_reason = tel.stall_reason;
  for (const auto& [r, e] : tel.conf) res.conf.rounds[r] = e;

  if (cfg.scan_leaks) {
    for (const auto& node : nodes)
      for (const auto& b : node->resident_buffers()) scan("resident buffer", b);
    for (const auto& b : ledger.state().stored_payloads()) scan("ledger", b);
  }
  rep.leaks = leaks;
  rep.leak_sites = sites;

  // Reassemble every round from the ledger with the owner's master key.
  const SynthParams synth{cfg.step, cfg.int_mode, cfg.sentinel};
  WeightVector prev = res.initial;
  WeightVector chain_prev = res.initial;
  std::uint64_t bad_sigs = 0, stored = 0, expected_total = 0;
  std::string assemble_error;
  const auto vk = ledger.state().verify_key(cfg.taskid);
  for (RoundIndex r = 0; r < cfg.rounds; ++r) {
    RoundReport rr;
    rr.round = r;
    auto ce = tel.conf.find(r);
    const auto& tl = tel.rounds[r];
    if (tl.start >= 0 && tl.last_envelope >= 0) rr.phases.send_model_ms = to_ms(tl.last_envelope - tl.start);
    rr.phases.aggregate_ms = to_ms(tl.aggregate_ns);
    if (tl.first_chunk_send >= 0 && tl.last_receipt >= 0) {
      rr.phases.send_result_ms = to_ms(tl.last_receipt - tl.first_chunk_send);
    }
    if (ce != tel.conf.end()) {
      rr.revision = ce->second.revision;
      rr.participants = ce->second.participants.size();
      rr.partitions = ce->second.partitions.size();
      rr.chunks = ce->second.expected_chunks;
      expected_total += ce->second.expected_chunks;
    }
    auto read = ledger.state().read(cfg.taskid, r);
    rr.on_chain = read.status == ReadStatus::Complete;
    for (const auto& c : read.chunks) {
      ++stored;
      if (!vk || !sig_verify(*vk, canonical_message(c), c.sigma)) ++bad_sigs;
    }
    if (rr.on_chain && ce != tel.conf.end()) {
      try {
        auto g = assemble_global(ce->second, read.chunks, owner.msk(), cfg.taskid, prev);
        auto cover = layer_clients(ce->second);
        auto expect = oracle_round(prev, cover, cfg.taskid, r, cfg.seed, synth);
        rr.matches_oracle = model_matches(g, expect, cfg.int_mode, &rr.max_abs_error);
        rr.digest = model_digest(g);
        chain_prev = oracle_round(chain_prev, cover, cfg.taskid, r, cfg.seed, synth);
        res.oracle[r] = chain_prev;
        res.globals[r] = g;
        prev = std::move(g);
      } catch (const Error& e) {
        if (assemble_error.empty()) assemble_error = "round " + std::to_string(r) + ": " + e.what();
      }
    }
    rep.rounds.push_back(std::move(rr));
  }
  rep.final_digest = res.globals.empty() ? "" : model_digest(res.globals.rbegin()->second);

  res.owner_final = owner.final_model();
  for (const auto& c : clients) {
    if (c->has_msk()) res.client_views[c->uid()] = c->history();
  }
  res.verify_key_matches = vk && committee.verify_key() && *vk == *committee.verify_key();
  res.stored_chunks = stored;
  res.bad_signatures = bad_sigs;
  res.expected_chunks = expected_total;
  res.assemble_error = assemble_error;
  res.scanned = cfg.scan_leaks;
  verify_report(res, cfg);

  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
  return res;
}

void verify_report(RunResult& res, const RunConfig& cfg) {
  auto& rep = res.report;
  const auto& tel = res.telemetry;
  auto& checks = rep.checks;
  checks.clear();
  checks.push_back({"completed", !tel.stalled, tel.stalled ? tel.stall_reason : ""});
  {
    std::size_t on_chain = std::count_if(rep.rounds.begin(), rep.rounds.end(), [](const auto& r) { return r.on_chain; });
    checks.push_back({"rounds_on_chain", on_chain == cfg.rounds,
                      std::to_string(on_chain) + "/" + std::to_string(cfg.rounds) + " rounds complete"});
  }
  {
    bool ok = res.verify_key_matches && res.bad_signatures == 0 && res.stored_chunks == res.expected_chunks &&
              res.assemble_error.empty();
    std::string detail = std::to_string(res.stored_chunks) + " stored chunks, " +
                         std::to_string(res.bad_signatures) + " failing verification";
    if (!res.assemble_error.empty()) detail += "; " + res.assemble_error;
    std::uint64_t rejected = 0;
    for (const auto& [k, n] : rep.rejections) rejected += n;
    detail += "; " + std::to_string(rejected) + " submissions rejected";
    checks.push_back({"authenticity", ok, detail});
  }
  {
    std::size_t bad = std::count_if(rep.rounds.begin(), rep.rounds.end(),
                                    [](const auto& r) { return r.on_chain && !r.matches_oracle; });
    bool ok = bad == 0 && res.globals.size() == cfg.rounds;
    checks.push_back({"oracle_per_round", ok, std::to_string(bad) + " rounds differ from the oracle"});
  }
  {
    bool ok = !res.globals.empty() && res.globals.size() == cfg.rounds &&
              model_matches(res.globals.rbegin()->second, res.oracle.rbegin()->second, cfg.int_mode);
    checks.push_back({"oracle_chain", ok, cfg.int_mode ? "bit-exact" : "within 1e-12"});
  }
  {
    bool ok = res.owner_final && !res.globals.empty() && *res.owner_final == res.globals.rbegin()->second;
    checks.push_back({"owner_model", ok, ""});
  }
  {
    std::size_t bad = 0;
    for (const auto& [c, views] : res.client_views) {
      for (const auto& [r, g] : views) {
        auto it = res.globals.find(r);
        if (it == res.globals.end() || !(it->second == g)) ++bad;
      }
    }
    checks.push_back({"clients_consistent", bad == 0, std::to_string(bad) + " divergent client views"});
  }
  {
    std::size_t early = 0;
    for (const auto& t : tel.trains) {
      if (t.round == 0) continue;
      auto it = tel.rounds.find(t.round - 1);
      if (it == tel.rounds.end() || it->second.completed < 0 || t.time < it->second.completed) ++early;
    }
    checks.push_back({"round_lockstep", early == 0, std::to_string(early) + " updates trained early"});
  }
  if (res.scanned) {
    checks.push_back({"confidentiality", rep.leaks == 0, std::to_string(rep.leaks) + " sentinel occurrences"});
  }
  {
    bool ok = true;
    for (const auto& rec : tel.recoveries) {
      if (rec.replacement && (rec.reschedule_ns() <= 0 || rec.connect_ns() <= 0)) ok = false;
    }
    checks.push_back({"recovery_phases", ok, std::to_string(tel.recoveries.size()) + " recoveries"});
  }
}

}  // namespace voltsim
