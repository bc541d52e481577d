#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "enlg/params.hpp"

namespace enlg {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay. Step counts are kept per slot so a step
/// restricted to a subset of slots (e.g. the V or Q half of the critic) leaves
/// the others untouched, like parameters without a gradient in a torch optimizer.
template <class T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore<T>& store, AdamWConfig cfg);

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  void step(ParamStore<T>& store, const Grad<T>& grad);
  void step(ParamStore<T>& store, const Grad<T>& grad, std::span<const std::size_t> slots);

 private:
  void step_slot(ParamStore<T>& store, const Grad<T>& grad, std::size_t slot);

  AdamWConfig cfg_;
  std::vector<T> m_, v_;
  std::vector<std::uint64_t> steps_;
};

}  // namespace enlg
