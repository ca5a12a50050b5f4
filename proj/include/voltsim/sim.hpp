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

// Discrete-event loop over a virtual nanosecond clock. Events at equal times
// run in scheduling order, so a run is a pure function of its inputs.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <unordered_map>
#include <utility>

namespace voltsim {

using SimTime = std::int64_t;  // nanoseconds
inline constexpr SimTime kMicros = 1'000;
inline constexpr SimTime kMillis = 1'000'000;
inline constexpr SimTime kSeconds = 1'000'000'000;

inline double to_ms(SimTime t) { return static_cast<double>(t) / kMillis; }

class Simulator {
 public:
  using Action = std::function<void()>;
  using EventId = std::uint64_t;

  SimTime now() const { return now_; }

  EventId at(SimTime when, Action action) {
    if (when < now_) when = now_;
    EventId id = ++seq_;
    queue_.emplace(std::pair{when, id}, std::move(action));
    index_.emplace(id, when);
    return id;
  }
  EventId after(SimTime delay, Action action) { return at(now_ + delay, std::move(action)); }

  void cancel(EventId id) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    queue_.erase(std::pair{it->second, id});
    index_.erase(it);
  }

  /// Runs the earliest event. False when nothing is pending.
  bool step() {
    if (queue_.empty()) return false;
    auto it = queue_.begin();
    now_ = it->first.first;
    Action action = std::move(it->second);
    index_.erase(it->first.second);
    queue_.erase(it);
    ++executed_;
    action();
    return true;
  }

  /// Runs until `stop` holds, the queue drains, or the clock passes `limit`.
  /// Returns true iff `stop` became true.
  bool run_until(const std::function<bool()>& stop, SimTime limit) {
    while (!stop()) {
      if (queue_.empty() || queue_.begin()->first.first > limit) return false;
      step();
    }
    return true;
  }

  std::size_t pending() const { return queue_.size(); }
  /// Time of the earliest pending event, or -1.
  SimTime next_time() const { return queue_.empty() ? -1 : queue_.begin()->first.first; }
  std::uint64_t executed() const { return executed_; }

 private:
  SimTime now_ = 0;
  EventId seq_ = 0;
  std::uint64_t executed_ = 0;
  std::map<std::pair<SimTime, EventId>, Action> queue_;
  std::unordered_map<EventId, SimTime> index_;
};

}  // namespace voltsim
