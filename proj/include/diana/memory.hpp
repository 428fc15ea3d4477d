#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "diana/domain.hpp"
#include "diana/error.hpp"
#include "diana/random.hpp"

namespace diana {

// Per-task reservoir of verbatim training instances.
class MemoryBuffer {
 public:
  struct Reservoir {
    std::vector<QAInstance> items;
    std::uint64_t observed = 0;
    friend bool operator==(const Reservoir&, const Reservoir&) = default;
  };

  MemoryBuffer() = default;
  MemoryBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity <= 0) throw ConfigError("memory capacity must be positive");
  }

  int capacity() const { return capacity_; }

  void observe(const QAInstance& inst) {
    if (!inst.task_id) throw InvariantError("memory observe needs a task id");
    auto& r = reservoirs_[*inst.task_id];
    ++r.observed;
    if (r.items.size() < static_cast<std::size_t>(capacity_)) {
      r.items.push_back(inst);
      return;
    }
    const auto u = rng_.uniform_index(r.observed);
    if (u < static_cast<std::uint64_t>(capacity_)) r.items[static_cast<std::size_t>(u)] = inst;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, r] : reservoirs_) n += r.items.size();
    return n;
  }
  bool empty() const { return size() == 0; }

  const std::map<int, Reservoir>& reservoirs() const { return reservoirs_; }

  // Uniform over stored instances whose task differs from `current_task`.
  std::optional<QAInstance> sample_negative(int current_task, Rng& rng) const {
    std::size_t n = 0;
    for (const auto& [id, r] : reservoirs_)
      if (id != current_task) n += r.items.size();
    if (n == 0) return std::nullopt;
    auto pick = rng.uniform_index(n);
    for (const auto& [id, r] : reservoirs_) {
      if (id == current_task) continue;
      if (pick < r.items.size()) return r.items[static_cast<std::size_t>(pick)];
      pick -= r.items.size();
    }
    return std::nullopt;
  }

  // Uniform with replacement across all stored instances; empty if nothing is stored.
  std::vector<QAInstance> rehearsal_batch(std::size_t size, Rng& rng) const {
    std::vector<QAInstance> out;
    const std::size_t n = this->size();
    if (n == 0) return out;
    out.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
      auto pick = rng.uniform_index(n);
      for (const auto& [_, r] : reservoirs_) {
        if (pick < r.items.size()) {
          out.push_back(r.items[static_cast<std::size_t>(pick)]);
          break;
        }
        pick -= r.items.size();
      }
    }
    return out;
  }

  const Rng& rng() const { return rng_; }

  // Checkpoint restore.
  void restore(std::map<int, Reservoir> reservoirs, const std::string& rng_state) {
    reservoirs_ = std::move(reservoirs);
    rng_.set_state(rng_state);
  }

  friend bool operator==(const MemoryBuffer&, const MemoryBuffer&) = default;

 private:
  int capacity_ = 50;
  Rng rng_;
  std::map<int, Reservoir> reservoirs_;
};

}  // namespace diana
