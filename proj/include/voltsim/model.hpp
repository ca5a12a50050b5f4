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

// Layered weight vectors, their canonical byte layout, and weighted averaging
// (whole and split into partial sums).

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "voltsim/bytes.hpp"
#include "voltsim/ids.hpp"

namespace voltsim {

struct Layer {
  std::uint32_t index = 0;
  std::vector<double> elements;

  bool operator==(const Layer&) const = default;
};

struct WeightVector {
  std::vector<Layer> layers;

  std::size_t element_count() const;
  /// Same layer indices with the same element counts.
  bool same_shape(const WeightVector& other) const;
  const Layer* find(std::uint32_t layer) const;
  /// Copy holding only the listed layers (which must exist).
  WeightVector slice(std::span<const std::uint32_t> layer_ids) const;
  bool operator==(const WeightVector&) const = default;
};

/// Per-layer element counts; the shape every vector of a task shares.
struct ModelMeta {
  std::vector<std::uint64_t> layer_sizes;

  std::uint32_t layer_count() const { return static_cast<std::uint32_t>(layer_sizes.size()); }
  std::uint64_t total_elements() const;
  static ModelMeta of(const WeightVector& w);
  bool operator==(const ModelMeta&) const = default;
};

struct LocalUpdate {
  TaskId taskid;
  ClientId client;
  RoundIndex round = 0;
  WeightVector weights;
  std::uint64_t dataset_size = 1;

  bool operator==(const LocalUpdate&) const = default;
};

inline constexpr std::size_t kMaxTaskIdBytes = 64;
/// Fixed header bytes: taskid length, round, client, dataset size, layer count.
inline constexpr std::size_t kModelFixedHeader = 2 + 8 + 8 + 8 + 4;
inline constexpr std::size_t kLayerHeader = 4 + 8;

Bytes encode_model(const LocalUpdate& u);
/// Throws MalformedModel on truncation, trailing bytes, or non-increasing
/// layer indices.
LocalUpdate decode_model(ByteView data);
std::size_t encoded_model_size(std::size_t taskid_bytes, const WeightVector& w);

/// Element-wise Σ D_i·w_i / Σ D_i, accumulated in ascending client order.
/// Throws EmptyInput or ShapeMismatch.
WeightVector fedavg(std::span<const LocalUpdate> updates);

struct PartialAggregate {
  WeightVector scaled_sum;  // Σ D_i·w_i over client_set for each covered layer
  std::uint64_t weight_sum = 0;
  std::vector<std::uint32_t> layers;
  std::vector<ClientId> clients;  // ascending
};

/// Restricts every update to `layers` and sums them. Throws EmptyInput,
/// ShapeMismatch.
PartialAggregate partial_aggregate(std::span<const LocalUpdate> updates,
                                   std::span<const std::uint32_t> layers);

/// Adds `more` into `acc` (same layers, disjoint clients).
void accumulate(PartialAggregate& acc, const PartialAggregate& more);

/// Merges parts in the given order and divides by the per-layer total weight.
/// The parts must cover every (layer, client) cell of their union exactly once.
/// Throws CoverageOverlap / CoverageGap.
WeightVector combine_partials(std::span<const PartialAggregate> parts);

/// As above, but also requires the cover to span exactly `expected_clients`
/// on layers 0..layer_count-1.
WeightVector combine_partials(std::span<const PartialAggregate> parts,
                              std::span<const ClientId> expected_clients,
                              std::uint32_t layer_count);

// ---- synthetic training --------------------------------------------------

/// Grid used by integer mode: every weight is a multiple of 2^-kIntShift.
inline constexpr int kIntShift = 20;

struct SynthParams {
  double step = 0.01;       // perturbation bound ε
  bool int_mode = false;    // keep weights on the dyadic grid
  bool sentinel = false;    // plant the sentinel pattern in every update
};

/// Deterministic stand-in for local training.
LocalUpdate synth_local_update(const WeightVector& global, const TaskId& taskid, ClientId client,
                               RoundIndex round, std::uint64_t seed, const SynthParams& params);

/// Deterministic initial model for a shape.
WeightVector synth_initial_model(const ModelMeta& meta, std::uint64_t seed, bool int_mode);

double quantize(double v);

/// Four doubles written into layer 0 of every sentinel-marked update. Their
/// little-endian bytes form the 32-byte pattern the leak detector scans for.
const std::array<double, 4>& sentinel_values();
Bytes sentinel_pattern();

/// SHA-256 over the canonical encoding of a vector, hex.
std::string model_digest(const WeightVector& w);

}  // namespace voltsim
