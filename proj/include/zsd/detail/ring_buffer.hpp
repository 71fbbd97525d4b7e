#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace zsd::detail {

/// Fixed-capacity FIFO that overwrites its oldest element when full.
/// Index 0 is the oldest retained element. Storage grows lazily up to
/// capacity, so an idle buffer costs nothing.
template <class T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity = 1) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("RingBuffer capacity must be positive");
  }

  void push_back(T value) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(value));
      return;
    }
    items_[head_] = std::move(value);
    head_ = head_ + 1 == capacity_ ? 0 : head_ + 1;
  }

  const T& operator[](std::size_t i) const { return items_[physical(i)]; }
  T& operator[](std::size_t i) { return items_[physical(i)]; }

  const T& front() const { return (*this)[0]; }
  const T& back() const { return (*this)[items_.size() - 1]; }

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return items_.empty(); }
  bool full() const noexcept { return items_.size() == capacity_; }

  void clear() {
    items_.clear();
    head_ = 0;
  }

  /// Heap bytes held by the buffer's storage.
  std::size_t storage_bytes() const noexcept { return items_.capacity() * sizeof(T); }

 private:
  std::size_t physical(std::size_t i) const {
    const std::size_t p = head_ + i;
    return p >= capacity_ ? p - capacity_ : p;
  }

  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> items_;
};

}  // namespace zsd::detail
