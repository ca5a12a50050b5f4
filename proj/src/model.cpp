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

#include "voltsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "voltsim/crypto.hpp"

namespace voltsim {

std::size_t WeightVector::element_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.elements.size();
  return n;
}

bool WeightVector::same_shape(const WeightVector& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].index != other.layers[i].index ||
        layers[i].elements.size() != other.layers[i].elements.size()) {
      return false;
    }
  }
  return true;
}

const Layer* WeightVector::find(std::uint32_t layer) const {
  auto it = std::lower_bound(layers.begin(), layers.end(), layer,
                             [](const Layer& l, std::uint32_t v) { return l.index < v; });
  return it != layers.end() && it->index == layer ? &*it : nullptr;
}

WeightVector WeightVector::slice(std::span<const std::uint32_t> layer_ids) const {
  WeightVector out;
  out.layers.reserve(layer_ids.size());
  for (auto id : layer_ids) {
    const Layer* l = find(id);
    if (!l) throw Error(Errc::ShapeMismatch, "no layer " + std::to_string(id));
    out.layers.push_back(*l);
  }
  return out;
}

std::uint64_t ModelMeta::total_elements() const {
  std::uint64_t n = 0;
  for (auto s : layer_sizes) n += s;
  return n;
}

ModelMeta ModelMeta::of(const WeightVector& w) {
  ModelMeta m;
  for (const auto& l : w.layers) m.layer_sizes.push_back(l.elements.size());
  return m;
}

// ---- encoding ----------------------------------------------------------------

std::size_t encoded_model_size(std::size_t taskid_bytes, const WeightVector& w) {
  std::size_t n = kModelFixedHeader + taskid_bytes;
  for (const auto& l : w.layers) n += kLayerHeader + 8 * l.elements.size();
  return n;
}

Bytes encode_model(const LocalUpdate& u) {
  ByteWriter w(encoded_model_size(u.taskid.size(), u.weights));
  w.str16(u.taskid);
  w.u64(u.round);
  w.u64(u.client.value);
  w.u64(u.dataset_size);
  w.u32(static_cast<std::uint32_t>(u.weights.layers.size()));
  for (const auto& l : u.weights.layers) {
    w.u32(l.index);
    w.u64(l.elements.size());
    for (double v : l.elements) w.f64_le(v);
  }
  return std::move(w).take();
}

LocalUpdate decode_model(ByteView data) {
  ByteReader r(data, Errc::MalformedModel);
  LocalUpdate u;
  u.taskid = r.str16();
  u.round = r.u64();
  u.client = ClientId{r.u64()};
  u.dataset_size = r.u64();
  auto layer_count = r.u32();
  // Each layer needs at least its header; reject absurd counts before allocating.
  if (layer_count > r.remaining() / kLayerHeader) {
    throw Error(Errc::MalformedModel, "layer count exceeds payload");
  }
  u.weights.layers.reserve(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    Layer l;
    l.index = r.u32();
    if (!u.weights.layers.empty() && l.index <= u.weights.layers.back().index) {
      throw Error(Errc::MalformedModel, "layer indices not strictly increasing");
    }
    auto count = r.u64();
    if (count > r.remaining() / 8) {
      throw Error(Errc::MalformedModel, "element count " + std::to_string(count) +
                                            " exceeds remaining payload");
    }
    l.elements.resize(count);
    for (auto& v : l.elements) v = r.f64_le();
    u.weights.layers.push_back(std::move(l));
  }
  r.expect_done();
  return u;
}

// ---- aggregation ---------------------------------------------------------------

namespace {

std::vector<const LocalUpdate*> sorted_by_client(std::span<const LocalUpdate> updates) {
  std::vector<const LocalUpdate*> order;
  order.reserve(updates.size());
  for (const auto& u : updates) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(),
                   [](const LocalUpdate* a, const LocalUpdate* b) { return a->client < b->client; });
  return order;
}

}  // namespace

WeightVector fedavg(std::span<const LocalUpdate> updates) {
  if (updates.empty()) throw Error(Errc::EmptyInput, "fedavg over no updates");
  std::vector<std::uint32_t> all;
  for (const auto& l : updates.front().weights.layers) all.push_back(l.index);
  auto part = partial_aggregate(updates, all);
  for (auto& l : part.scaled_sum.layers) {
    for (auto& v : l.elements) v /= static_cast<double>(part.weight_sum);
  }
  return std::move(part.scaled_sum);
}

PartialAggregate partial_aggregate(std::span<const LocalUpdate> updates,
                                   std::span<const std::uint32_t> layers) {
  if (updates.empty()) throw Error(Errc::EmptyInput, "partial aggregate over no updates");
  auto order = sorted_by_client(updates);
  const auto& shape = order.front()->weights;
  for (const auto* u : order) {
    if (!u->weights.same_shape(shape)) {
      throw Error(Errc::ShapeMismatch, "client " + std::to_string(u->client.value) +
                                           " has a different layer structure");
    }
    if (u->dataset_size == 0) throw Error(Errc::MalformedModel, "dataset size 0");
  }
  PartialAggregate out;
  out.layers.assign(layers.begin(), layers.end());
  out.scaled_sum = shape.slice(layers);
  for (auto& l : out.scaled_sum.layers) std::fill(l.elements.begin(), l.elements.end(), 0.0);
  for (const auto* u : order) {
    if (!out.clients.empty() && out.clients.back() == u->client) {
      throw Error(Errc::CoverageOverlap, "client " + std::to_string(u->client.value) +
                                             " appears twice");
    }
    out.clients.push_back(u->client);
    out.weight_sum += u->dataset_size;
    const double d = static_cast<double>(u->dataset_size);
    for (auto& acc : out.scaled_sum.layers) {
      const auto& src = u->weights.find(acc.index)->elements;
      for (std::size_t i = 0; i < acc.elements.size(); ++i) acc.elements[i] += d * src[i];
    }
  }
  return out;
}

void accumulate(PartialAggregate& acc, const PartialAggregate& more) {
  if (acc.layers != more.layers || !acc.scaled_sum.same_shape(more.scaled_sum)) {
    throw Error(Errc::ShapeMismatch, "accumulating partials over different layers");
  }
  std::vector<ClientId> merged;
  std::merge(acc.clients.begin(), acc.clients.end(), more.clients.begin(), more.clients.end(),
             std::back_inserter(merged));
  if (std::adjacent_find(merged.begin(), merged.end()) != merged.end()) {
    throw Error(Errc::CoverageOverlap, "accumulating partials with a shared client");
  }
  acc.clients = std::move(merged);
  acc.weight_sum += more.weight_sum;
  for (std::size_t li = 0; li < acc.scaled_sum.layers.size(); ++li) {
    auto& dst = acc.scaled_sum.layers[li].elements;
    const auto& src = more.scaled_sum.layers[li].elements;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

namespace {

WeightVector combine_impl(std::span<const PartialAggregate> parts,
                          const std::set<ClientId>* expected_clients,
                          std::uint32_t expected_layers) {
  if (parts.empty()) throw Error(Errc::EmptyInput, "no partial aggregates");
  struct LayerAcc {
    std::vector<double> sum;
    std::uint64_t weight = 0;
    std::set<ClientId> clients;
  };
  std::map<std::uint32_t, LayerAcc> acc;
  std::set<ClientId> universe;
  for (const auto& p : parts) {
    for (auto c : p.clients) universe.insert(c);
    for (const auto& l : p.scaled_sum.layers) {
      auto& a = acc[l.index];
      if (a.sum.empty() && a.clients.empty()) {
        a.sum.assign(l.elements.size(), 0.0);
      } else if (a.sum.size() != l.elements.size()) {
        throw Error(Errc::ShapeMismatch, "layer " + std::to_string(l.index) +
                                             " has inconsistent element counts");
      }
      for (auto c : p.clients) {
        if (!a.clients.insert(c).second) {
          throw Error(Errc::CoverageOverlap, "layer " + std::to_string(l.index) + " client " +
                                                 std::to_string(c.value) + " covered twice");
        }
      }
      a.weight += p.weight_sum;
      for (std::size_t i = 0; i < a.sum.size(); ++i) a.sum[i] += l.elements[i];
    }
  }
  if (expected_clients) {
    for (auto c : universe) {
      if (!expected_clients->count(c)) {
        throw Error(Errc::CoverageOverlap, "client " + std::to_string(c.value) +
                                               " is outside the expected set");
      }
    }
    universe = *expected_clients;
    for (std::uint32_t l = 0; l < expected_layers; ++l) {
      if (!acc.count(l)) throw Error(Errc::CoverageGap, "layer " + std::to_string(l) + " missing");
    }
    if (acc.size() != expected_layers) {
      throw Error(Errc::CoverageOverlap, "unexpected layer beyond the model shape");
    }
  } else {
    std::uint32_t expect = 0;
    for (const auto& [index, a] : acc) {
      if (index != expect++) {
        throw Error(Errc::CoverageGap, "layer " + std::to_string(expect - 1) + " missing");
      }
    }
  }
  WeightVector out;
  for (auto& [index, a] : acc) {
    if (a.clients != universe) {
      throw Error(Errc::CoverageGap, "layer " + std::to_string(index) + " covers " +
                                         std::to_string(a.clients.size()) + " of " +
                                         std::to_string(universe.size()) + " clients");
    }
    Layer l{index, std::move(a.sum)};
    for (auto& v : l.elements) v /= static_cast<double>(a.weight);
    out.layers.push_back(std::move(l));
  }
  return out;
}

}  // namespace

WeightVector combine_partials(std::span<const PartialAggregate> parts) {
  return combine_impl(parts, nullptr, 0);
}

WeightVector combine_partials(std::span<const PartialAggregate> parts,
                              std::span<const ClientId> expected_clients,
                              std::uint32_t layer_count) {
  std::set<ClientId> expected(expected_clients.begin(), expected_clients.end());
  return combine_impl(parts, &expected, layer_count);
}

// ---- synthetic training --------------------------------------------------------

double quantize(double v) { return std::ldexp(std::nearbyint(std::ldexp(v, kIntShift)), -kIntShift); }

const std::array<double, 4>& sentinel_values() {
  // Odd multiples of 2^-20 below 2^12: exact on the integer-mode grid and their
  // bytes carry no runs a random double is likely to share.
  static const std::array<double, 4> values = {
      std::ldexp(3141592653.0, -kIntShift), std::ldexp(2718281829.0, -kIntShift),
      std::ldexp(1414213563.0, -kIntShift), std::ldexp(1732050807.0, -kIntShift)};
  return values;
}

Bytes sentinel_pattern() {
  ByteWriter w;
  for (double v : sentinel_values()) w.f64_le(v);
  return std::move(w).take();
}

LocalUpdate synth_local_update(const WeightVector& global, const TaskId& taskid, ClientId client,
                               RoundIndex round, std::uint64_t seed, const SynthParams& params) {
  Rng rng(seed, (client.value << 24) ^ round);
  LocalUpdate u;
  u.taskid = taskid;
  u.client = client;
  u.round = round;
  u.dataset_size = rng.below(1000) + 1;
  u.weights = global;
  const auto grid_steps = static_cast<std::uint64_t>(std::floor(std::ldexp(params.step, kIntShift)));
  for (auto& l : u.weights.layers) {
    for (auto& v : l.elements) {
      if (params.int_mode) {
        auto k = static_cast<std::int64_t>(rng.below(2 * grid_steps + 1)) -
                 static_cast<std::int64_t>(grid_steps);
        v = quantize(v) + std::ldexp(static_cast<double>(k), -kIntShift);
      } else {
        v += rng.uniform(-params.step, params.step);
      }
    }
  }
  if (params.sentinel) {
    if (u.weights.layers.empty() || u.weights.layers.front().elements.size() < 4) {
      throw Error(Errc::InvalidConfig, "sentinel needs at least 4 elements in layer 0");
    }
    std::copy(sentinel_values().begin(), sentinel_values().end(),
              u.weights.layers.front().elements.begin());
  }
  return u;
}

WeightVector synth_initial_model(const ModelMeta& meta, std::uint64_t seed, bool int_mode) {
  Rng rng(seed, 0x1417);
  WeightVector w;
  for (std::uint32_t i = 0; i < meta.layer_count(); ++i) {
    Layer l{i, std::vector<double>(meta.layer_sizes[i])};
    for (auto& v : l.elements) {
      v = rng.uniform(-1.0, 1.0);
      if (int_mode) v = quantize(v);
    }
    w.layers.push_back(std::move(l));
  }
  return w;
}

std::string model_digest(const WeightVector& w) {
  LocalUpdate u;
  u.weights = w;
  auto bytes = encode_model(u);
  return to_hex(sha256(bytes));
}

}  // namespace voltsim
