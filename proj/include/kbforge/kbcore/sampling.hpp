#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kbforge/kbcore/ids.hpp"

namespace kbforge {

// Keeps the `capacity` items with the smallest (key, tiebreak) priorities.
// Selection depends only on the multiset of offered items, never on the order
// they arrive in, so per-worker selections can be merged in any order.
template <typename T>
class BoundedSelection {
 public:
  struct Entry {
    std::uint64_t key;
    std::string tiebreak;
    T value;
  };

  explicit BoundedSelection(std::size_t capacity) : capacity_(capacity) {}

  void offer(std::uint64_t key, std::string tiebreak, T value) {
    ++offered_;
    if (capacity_ == 0) return;
    if (heap_.size() < capacity_) {
      heap_.push_back(Entry{key, std::move(tiebreak), std::move(value)});
      std::push_heap(heap_.begin(), heap_.end(), less);
      return;
    }
    Entry candidate{key, std::move(tiebreak), std::move(value)};
    if (!less(candidate, heap_.front())) return;
    std::pop_heap(heap_.begin(), heap_.end(), less);
    heap_.back() = std::move(candidate);
    std::push_heap(heap_.begin(), heap_.end(), less);
  }

  void merge(BoundedSelection&& other) {
    auto offered = offered_ + other.offered_;
    for (auto& e : other.heap_) offer(e.key, std::move(e.tiebreak), std::move(e.value));
    offered_ = offered;
    other.heap_.clear();
  }

  std::uint64_t offered() const { return offered_; }
  std::size_t size() const { return heap_.size(); }

  // Entries in ascending priority order.
  std::vector<Entry> take() && {
    std::sort_heap(heap_.begin(), heap_.end(), less);
    return std::move(heap_);
  }

 private:
  static bool less(const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key < b.key;
    return idLess(a.tiebreak, b.tiebreak);
  }

  std::size_t capacity_;
  std::uint64_t offered_ = 0;
  std::vector<Entry> heap_;
};

}  // namespace kbforge
