#include "enlg/optim.hpp"

#include <cmath>

namespace enlg {

template <class T>
AdamW<T>::AdamW(const ParamStore<T>& store, AdamWConfig cfg)
    : cfg_(cfg), m_(store.size(), T(0)), v_(store.size(), T(0)), steps_(store.slots().size(), 0) {}

template <class T>
void AdamW<T>::step(ParamStore<T>& store, const Grad<T>& grad) {
  for (std::size_t s = 0; s < store.slots().size(); ++s) step_slot(store, grad, s);
}

template <class T>
void AdamW<T>::step(ParamStore<T>& store, const Grad<T>& grad,
                    std::span<const std::size_t> slots) {
  for (std::size_t s : slots) step_slot(store, grad, s);
}

template <class T>
void AdamW<T>::step_slot(ParamStore<T>& store, const Grad<T>& grad, std::size_t slot) {
  const auto& s = store.slot(slot);
  const std::uint64_t t = ++steps_[slot];
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(cfg_.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.eps);
  const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
  T* p = store.values().data() + s.offset;
  const T* g = grad.data() + s.offset;
  T* m = m_.data() + s.offset;
  T* v = v_.data() + s.offset;
  for (std::size_t i = 0; i < s.size; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    p[i] *= decay;
    p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace enlg
