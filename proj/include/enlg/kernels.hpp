#pragma once

// Dense linear-algebra kernels used by every forward/backward pass.
//
// Each kernel has a portable scalar reference (templated, used for double and
// as the fallback for float) and an AVX2+FMA float variant. The variant is
// chosen once at startup from CPUID; ENLG_ISA=scalar forces the reference path.
// Both paths are compared in tests/test_kernels.cpp.

#include <cmath>
#include <cstddef>
#include <string_view>
#include <type_traits>

namespace enlg::kernels {

enum class Isa { Scalar, Avx2 };

Isa detected_isa();
Isa active_isa();
void set_active_isa(Isa isa);  // clamps to what the CPU supports
std::string_view isa_name(Isa isa);

namespace scalar {

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <class T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T v = dot(a + i * k, b + j * k, k);
      c[i * n + j] = accumulate ? c[i * n + j] + v : v;
    }
  }
}

// C[M,K] += A[M,N] * B[N,K]
template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) axpy(a[i * n + j], b + j * k, c + i * k, k);
}

// C[N,K] += A[M,N]^T * B[M,K]
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) axpy(a[i * n + j], b + i * k, c + j * k, k);
}

// GELU, tanh approximation. `th` receives tanh(c (x + 0.044715 x^3)) so the
// backward pass can reuse it.
template <class T>
void gelu_forward(const T* x, T* y, T* th, std::size_t n) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  for (std::size_t i = 0; i < n; ++i) {
    th[i] = std::tanh(c * (x[i] + T(0.044715) * x[i] * x[i] * x[i]));
    y[i] = T(0.5) * x[i] * (T(1) + th[i]);
  }
}

// dy *= gelu'(x)
template <class T>
void gelu_backward(const T* x, const T* th, T* dy, std::size_t n) {
  constexpr T c = T(0.7978845608028654);
  for (std::size_t i = 0; i < n; ++i) {
    const T sech2 = T(1) - th[i] * th[i];
    dy[i] *= T(0.5) * (T(1) + th[i]) +
             T(0.5) * x[i] * sech2 * c * (T(1) + T(3) * T(0.044715) * x[i] * x[i]);
  }
}

}  // namespace scalar

namespace avx2 {
bool available();
float dot(const float* a, const float* b, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void matmul_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
               std::size_t k, bool accumulate);
void matmul_nn_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
                   std::size_t k);
void matmul_tn_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
                   std::size_t k);
void gelu_forward(const float* x, float* y, float* th, std::size_t n);
void gelu_backward(const float* x, const float* th, float* dy, std::size_t n);
}  // namespace avx2

// Dispatching entry points.

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::dot(a, b, n);
  }
  return scalar::dot(a, b, n);
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::axpy(alpha, x, y, n);
  }
  scalar::axpy(alpha, x, y, n);
}

template <class T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate = false) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::matmul_nt(a, b, c, m, n, k, accumulate);
  }
  scalar::matmul_nt(a, b, c, m, n, k, accumulate);
}

template <class T>
void matmul_nn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::matmul_nn_acc(a, b, c, m, n, k);
  }
  scalar::matmul_nn_acc(a, b, c, m, n, k);
}

template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::matmul_tn_acc(a, b, c, m, n, k);
  }
  scalar::matmul_tn_acc(a, b, c, m, n, k);
}

template <class T>
void gelu_forward(const T* x, T* y, T* th, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::gelu_forward(x, y, th, n);
  }
  scalar::gelu_forward(x, y, th, n);
}

template <class T>
void gelu_backward(const T* x, const T* th, T* dy, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    if (active_isa() == Isa::Avx2) return avx2::gelu_backward(x, th, dy, n);
  }
  scalar::gelu_backward(x, th, dy, n);
}

}  // namespace enlg::kernels
