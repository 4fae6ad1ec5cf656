#include "corrtrack/memory.hpp"

#include <sstream>
#include <stdexcept>

namespace corrtrack {

MemoryCache::MemoryCache(MemoryEntry first, std::size_t capacity)
    : long_term_(first), capacity_(capacity), last_index_(first.frame_index) {
  if (capacity_ == 0)
    throw std::invalid_argument("memory: capacity must be positive");
  entries_.push_back(std::move(first));
}

bool MemoryCache::maybe_admit(MemoryEntry entry, double score,
                              double threshold) {
  if (entry.frame_index <= last_index_)
    throw std::invalid_argument(
        "memory: frame " + std::to_string(entry.frame_index) +
        " arrived out of order (newest cached is " +
        std::to_string(last_index_) + ")");
  last_index_ = entry.frame_index;
  const bool admit = score > threshold;  // strict: a score AT threshold stays out
  log_.push_back(AdmissionEvent{entry.frame_index, score, admit});
  if (!admit) return false;
  entry.score = score;
  entries_.push_back(std::move(entry));
  if (entries_.size() > capacity_) entries_.pop_front();
  return true;
}

std::vector<MemoryEntry> MemoryCache::sample_ensemble(std::size_t k) const {
  if (k == 0) throw std::invalid_argument("memory: ensemble size must be positive");
  const std::size_t n = entries_.size();
  std::vector<MemoryEntry> out;
  out.reserve(k);
  if (k == 1 || n == 1) {
    out.assign(k, entries_.back());
    return out;
  }
  // Even spacing across the cached history; i = k-1 lands on the newest.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t idx = i * (n - 1) / (k - 1);
    out.push_back(entries_[idx]);
  }
  return out;
}

std::vector<MemoryEntry> MemoryCache::sample_ensemble_random(std::size_t k,
                                                             Rng& rng) const {
  if (k == 0) throw std::invalid_argument("memory: ensemble size must be positive");
  std::vector<MemoryEntry> out;
  out.reserve(k);
  for (std::size_t i = 0; i + 1 < k; ++i)
    out.push_back(entries_[rng.integer(entries_.size())]);
  out.push_back(entries_.back());
  return out;
}

std::string MemoryCache::dump() const {
  std::ostringstream os;
  os << "memory capacity=" << capacity_ << " entries=" << entries_.size()
     << " long_term_frame=" << long_term_.frame_index << "\n";
  for (const MemoryEntry& e : entries_)
    os << "  entry frame=" << e.frame_index << " score=" << e.score
       << " box=[" << e.ref.box.x0 << "," << e.ref.box.y0 << ","
       << e.ref.box.x1 << "," << e.ref.box.y1 << "]\n";
  os << "admissions:\n";
  for (const AdmissionEvent& a : log_)
    os << "  frame=" << a.frame_index << " score=" << a.score << " "
       << (a.admitted ? "admitted" : "rejected") << "\n";
  return os.str();
}

}  // namespace corrtrack
