#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace enlg {

/// Flat parameter storage with named, shaped slots. Gradients and optimizer
/// moments use the same flat layout, which keeps AdamW, Polyak averaging,
/// checkpointing and finite-difference checks layout-agnostic.
template <class T>
class ParamStore {
 public:
  struct Slot {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add(std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    slots_.push_back({std::move(name), std::move(shape), values_.size(), n});
    values_.resize(values_.size() + n, T(0));
    return slots_.size() - 1;
  }

  T* data(std::size_t slot) { return values_.data() + slots_[slot].offset; }
  const T* data(std::size_t slot) const { return values_.data() + slots_[slot].offset; }
  std::span<T> view(std::size_t slot) { return {data(slot), slots_[slot].size}; }
  std::span<const T> view(std::size_t slot) const { return {data(slot), slots_[slot].size}; }

  const Slot& slot(std::size_t i) const { return slots_[i]; }
  const std::vector<Slot>& slots() const { return slots_; }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Slot index by name, or slots().size() if absent.
  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].name == name) return i;
    return slots_.size();
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& s : slots_) out.add(s.name, s.shape);
    for (std::size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<U>(values_[i]);
    return out;
  }

 private:
  std::vector<Slot> slots_;
  std::vector<T> values_;
};

/// Gradient buffer matching a store's layout.
template <class T>
using Grad = std::vector<T>;

}  // namespace enlg
