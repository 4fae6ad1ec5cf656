#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "corrtrack/model.hpp"
#include "corrtrack/random.hpp"

namespace corrtrack {

/// One cached reference frame.
struct MemoryEntry {
  std::size_t frame_index = 0;
  Reference ref;
  double score = 0.0;  // predicted overlap that admitted it (frame 0: 1.0)
};

struct AdmissionEvent {
  std::size_t frame_index = 0;
  double score = 0.0;
  bool admitted = false;
};

/// Reference store: an immutable long-term anchor (the first frame) plus a
/// bounded FIFO of admitted short-term frames. Admission is gated on the
/// predicted overlap being strictly above the threshold.
class MemoryCache {
 public:
  MemoryCache(MemoryEntry first, std::size_t capacity);

  const MemoryEntry& long_term() const { return long_term_; }
  const std::deque<MemoryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  const std::vector<AdmissionEvent>& admission_log() const { return log_; }

  /// Admits iff score > threshold (strict). Frame indices must arrive in
  /// increasing order; a stale index is an error. The oldest short-term
  /// entry is evicted once the store is full. Returns whether admitted.
  bool maybe_admit(MemoryEntry entry, double score, double threshold);

  /// Deterministic short-term ensemble of size k: the newest entry always,
  /// the rest spread evenly over the cached history (repeats fill when the
  /// store is smaller than k).
  std::vector<MemoryEntry> sample_ensemble(std::size_t k) const;

  /// Seeded-random alternative: newest entry always, the remaining k-1
  /// drawn uniformly (with replacement) from the rest.
  std::vector<MemoryEntry> sample_ensemble_random(std::size_t k, Rng& rng) const;

  /// Human-readable state: one line per entry plus the admission history.
  std::string dump() const;

 private:
  MemoryEntry long_term_;
  std::deque<MemoryEntry> entries_;
  std::size_t capacity_;
  std::size_t last_index_;
  std::vector<AdmissionEvent> log_;
};

}  // namespace corrtrack
