#include "enlg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define ENLG_X86 1
#include <immintrin.h>
#else
#define ENLG_X86 0
#endif

namespace enlg::kernels {

namespace {

Isa probe() {
#if ENLG_X86
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

Isa initial_isa() {
  Isa isa = probe();
  if (const char* env = std::getenv("ENLG_ISA"); env != nullptr && std::strcmp(env, "scalar") == 0)
    isa = Isa::Scalar;
  return isa;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::Avx2 && detected_isa() != Isa::Avx2) isa = Isa::Scalar;
  active().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

namespace avx2 {

bool available() { return detected_isa() == Isa::Avx2; }

#if ENLG_X86

#define ENLG_AVX2 __attribute__((target("avx2,fma")))

namespace {

ENLG_AVX2 inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

}  // namespace

ENLG_AVX2 float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

ENLG_AVX2 void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

ENLG_AVX2 void matmul_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
                         std::size_t k, bool accumulate) {
  const std::size_t k8 = k - k % 8;
  auto emit = [&](std::size_t i, std::size_t j, float v) {
    float& dst = c[i * n + j];
    dst = accumulate ? dst + v : v;
  };
  std::size_t j = 0;
  // Weight rows outermost: a block of four B rows stays in L1 while every row
  // of A (a short activation matrix) streams past it.
  for (; j + 4 <= n; j += 4) {
    const float* b0 = b + j * k;
    const float* b1 = b0 + k;
    const float* b2 = b1 + k;
    const float* b3 = b2 + k;
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
      const float* ar = a + i * k;
      const float* ar2 = ar + k;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      __m256 t0 = _mm256_setzero_ps(), t1 = _mm256_setzero_ps();
      __m256 t2 = _mm256_setzero_ps(), t3 = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k8; p += 8) {
        const __m256 av = _mm256_loadu_ps(ar + p);
        const __m256 av2 = _mm256_loadu_ps(ar2 + p);
        const __m256 w0 = _mm256_loadu_ps(b0 + p);
        const __m256 w1 = _mm256_loadu_ps(b1 + p);
        const __m256 w2 = _mm256_loadu_ps(b2 + p);
        const __m256 w3 = _mm256_loadu_ps(b3 + p);
        s0 = _mm256_fmadd_ps(av, w0, s0);
        s1 = _mm256_fmadd_ps(av, w1, s1);
        s2 = _mm256_fmadd_ps(av, w2, s2);
        s3 = _mm256_fmadd_ps(av, w3, s3);
        t0 = _mm256_fmadd_ps(av2, w0, t0);
        t1 = _mm256_fmadd_ps(av2, w1, t1);
        t2 = _mm256_fmadd_ps(av2, w2, t2);
        t3 = _mm256_fmadd_ps(av2, w3, t3);
      }
      float r[8] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3),
                    hsum(t0), hsum(t1), hsum(t2), hsum(t3)};
      for (std::size_t p = k8; p < k; ++p) {
        r[0] += ar[p] * b0[p];
        r[1] += ar[p] * b1[p];
        r[2] += ar[p] * b2[p];
        r[3] += ar[p] * b3[p];
        r[4] += ar2[p] * b0[p];
        r[5] += ar2[p] * b1[p];
        r[6] += ar2[p] * b2[p];
        r[7] += ar2[p] * b3[p];
      }
      for (std::size_t q = 0; q < 4; ++q) {
        emit(i, j + q, r[q]);
        emit(i + 1, j + q, r[4 + q]);
      }
    }
    for (; i < m; ++i) {
      const float* ar = a + i * k;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k8; p += 8) {
        const __m256 av = _mm256_loadu_ps(ar + p);
        s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), s0);
        s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), s1);
        s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), s2);
        s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), s3);
      }
      float r[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
      for (std::size_t p = k8; p < k; ++p) {
        r[0] += ar[p] * b0[p];
        r[1] += ar[p] * b1[p];
        r[2] += ar[p] * b2[p];
        r[3] += ar[p] * b3[p];
      }
      for (std::size_t q = 0; q < 4; ++q) emit(i, j + q, r[q]);
    }
  }
  for (; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) emit(i, j, dot(a + i * k, b + j * k, k));
}

ENLG_AVX2 void matmul_nn_acc(const float* a, const float* b, float* c, std::size_t m,
                             std::size_t n, std::size_t k) {
  const std::size_t k16 = k - k % 16;
  std::size_t i = 0;
  // Four C rows x 16 columns in registers: each B load feeds four FMAs.
  for (; i + 4 <= m; i += 4) {
    const float* a0 = a + i * n;
    for (std::size_t p = 0; p < k16; p += 16) {
      __m256 c00 = _mm256_loadu_ps(c + i * k + p), c01 = _mm256_loadu_ps(c + i * k + p + 8);
      __m256 c10 = _mm256_loadu_ps(c + (i + 1) * k + p);
      __m256 c11 = _mm256_loadu_ps(c + (i + 1) * k + p + 8);
      __m256 c20 = _mm256_loadu_ps(c + (i + 2) * k + p);
      __m256 c21 = _mm256_loadu_ps(c + (i + 2) * k + p + 8);
      __m256 c30 = _mm256_loadu_ps(c + (i + 3) * k + p);
      __m256 c31 = _mm256_loadu_ps(c + (i + 3) * k + p + 8);
      for (std::size_t j = 0; j < n; ++j) {
        const float* br = b + j * k + p;
        const __m256 b0 = _mm256_loadu_ps(br), b1 = _mm256_loadu_ps(br + 8);
        __m256 av = _mm256_broadcast_ss(a0 + j);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_broadcast_ss(a0 + n + j);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_broadcast_ss(a0 + 2 * n + j);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_broadcast_ss(a0 + 3 * n + j);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
      }
      _mm256_storeu_ps(c + i * k + p, c00);
      _mm256_storeu_ps(c + i * k + p + 8, c01);
      _mm256_storeu_ps(c + (i + 1) * k + p, c10);
      _mm256_storeu_ps(c + (i + 1) * k + p + 8, c11);
      _mm256_storeu_ps(c + (i + 2) * k + p, c20);
      _mm256_storeu_ps(c + (i + 2) * k + p + 8, c21);
      _mm256_storeu_ps(c + (i + 3) * k + p, c30);
      _mm256_storeu_ps(c + (i + 3) * k + p + 8, c31);
    }
    for (std::size_t r = i; r < i + 4; ++r)
      for (std::size_t p = k16; p < k; ++p) {
        float s = c[r * k + p];
        for (std::size_t j = 0; j < n; ++j) s += a[r * n + j] * b[j * k + p];
        c[r * k + p] = s;
      }
  }
  for (; i < m; ++i) {
    const float* ar = a + i * n;
    float* cr = c + i * k;
    std::size_t p = 0;
    for (; p + 8 <= k; p += 8) {
      __m256 c0 = _mm256_loadu_ps(cr + p);
      for (std::size_t j = 0; j < n; ++j)
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(ar[j]), _mm256_loadu_ps(b + j * k + p), c0);
      _mm256_storeu_ps(cr + p, c0);
    }
    for (; p < k; ++p) {
      float s = cr[p];
      for (std::size_t j = 0; j < n; ++j) s += ar[j] * b[j * k + p];
      cr[p] = s;
    }
  }
}

ENLG_AVX2 void matmul_tn_acc(const float* a, const float* b, float* c, std::size_t m,
                             std::size_t n, std::size_t k) {
  const std::size_t k16 = k - k % 16;
  std::size_t j = 0;
  // Four C rows x 16 columns in registers, reduced over the M rows of A and B.
  for (; j + 4 <= n; j += 4) {
    for (std::size_t p = 0; p < k16; p += 16) {
      float* c0r = c + j * k + p;
      __m256 c00 = _mm256_loadu_ps(c0r), c01 = _mm256_loadu_ps(c0r + 8);
      __m256 c10 = _mm256_loadu_ps(c0r + k), c11 = _mm256_loadu_ps(c0r + k + 8);
      __m256 c20 = _mm256_loadu_ps(c0r + 2 * k), c21 = _mm256_loadu_ps(c0r + 2 * k + 8);
      __m256 c30 = _mm256_loadu_ps(c0r + 3 * k), c31 = _mm256_loadu_ps(c0r + 3 * k + 8);
      for (std::size_t i = 0; i < m; ++i) {
        const float* br = b + i * k + p;
        const float* ar = a + i * n + j;
        const __m256 b0 = _mm256_loadu_ps(br), b1 = _mm256_loadu_ps(br + 8);
        __m256 av = _mm256_broadcast_ss(ar);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_broadcast_ss(ar + 1);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_broadcast_ss(ar + 2);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_broadcast_ss(ar + 3);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
      }
      _mm256_storeu_ps(c0r, c00);
      _mm256_storeu_ps(c0r + 8, c01);
      _mm256_storeu_ps(c0r + k, c10);
      _mm256_storeu_ps(c0r + k + 8, c11);
      _mm256_storeu_ps(c0r + 2 * k, c20);
      _mm256_storeu_ps(c0r + 2 * k + 8, c21);
      _mm256_storeu_ps(c0r + 3 * k, c30);
      _mm256_storeu_ps(c0r + 3 * k + 8, c31);
    }
    for (std::size_t r = j; r < j + 4; ++r)
      for (std::size_t p = k16; p < k; ++p) {
        float s = c[r * k + p];
        for (std::size_t i = 0; i < m; ++i) s += a[i * n + r] * b[i * k + p];
        c[r * k + p] = s;
      }
  }
  for (; j < n; ++j) {
    float* cr = c + j * k;
    std::size_t p = 0;
    for (; p + 8 <= k; p += 8) {
      __m256 c0 = _mm256_loadu_ps(cr + p);
      for (std::size_t i = 0; i < m; ++i)
        c0 = _mm256_fmadd_ps(_mm256_set1_ps(a[i * n + j]), _mm256_loadu_ps(b + i * k + p), c0);
      _mm256_storeu_ps(cr + p, c0);
    }
    for (; p < k; ++p) {
      float s = cr[p];
      for (std::size_t i = 0; i < m; ++i) s += a[i * n + j] * b[i * k + p];
      cr[p] = s;
    }
  }
}

namespace {

// exp(x) for x in [-87, 87]: range reduction by ln 2 and a degree-6 polynomial.
ENLG_AVX2 inline __m256 exp_ps(__m256 x) {
  x = _mm256_min_ps(_mm256_max_ps(x, _mm256_set1_ps(-87.0f)), _mm256_set1_ps(87.0f));
  const __m256 n = _mm256_round_ps(_mm256_mul_ps(x, _mm256_set1_ps(1.44269504088896341f)),
                                   _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256 r = _mm256_fnmadd_ps(n, _mm256_set1_ps(0.693359375f), x);
  r = _mm256_fnmadd_ps(n, _mm256_set1_ps(-2.12194440e-4f), r);
  __m256 p = _mm256_set1_ps(1.9875691500e-4f);
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(1.3981999507e-3f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(8.3334519073e-3f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(4.1665795894e-2f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(1.6666665459e-1f));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(5.0000001201e-1f));
  p = _mm256_fmadd_ps(p, _mm256_mul_ps(r, r), _mm256_add_ps(r, _mm256_set1_ps(1.0f)));
  const __m256i e = _mm256_slli_epi32(
      _mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127)), 23);
  return _mm256_mul_ps(p, _mm256_castsi256_ps(e));
}

// tanh(u) = sign(u) (1 - 2 / (exp(2|u|) + 1))
ENLG_AVX2 inline __m256 tanh_ps(__m256 u) {
  const __m256 sign_mask = _mm256_set1_ps(-0.0f);
  const __m256 au = _mm256_andnot_ps(sign_mask, u);
  const __m256 e = exp_ps(_mm256_add_ps(au, au));
  const __m256 t = _mm256_sub_ps(_mm256_set1_ps(1.0f),
                                 _mm256_div_ps(_mm256_set1_ps(2.0f),
                                               _mm256_add_ps(e, _mm256_set1_ps(1.0f))));
  return _mm256_or_ps(t, _mm256_and_ps(u, sign_mask));
}

}  // namespace

ENLG_AVX2 void gelu_forward(const float* x, float* y, float* th, std::size_t n) {
  const __m256 c = _mm256_set1_ps(0.7978845608028654f);
  const __m256 c3 = _mm256_set1_ps(0.044715f);
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 v3 = _mm256_mul_ps(_mm256_mul_ps(v, v), v);
    const __m256 t = tanh_ps(_mm256_mul_ps(c, _mm256_fmadd_ps(c3, v3, v)));
    _mm256_storeu_ps(th + i, t);
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_mul_ps(half, v), _mm256_add_ps(one, t)));
  }
  if (i < n) scalar::gelu_forward(x + i, y + i, th + i, n - i);
}

ENLG_AVX2 void gelu_backward(const float* x, const float* th, float* dy, std::size_t n) {
  const __m256 c = _mm256_set1_ps(0.7978845608028654f);
  const __m256 c3 = _mm256_set1_ps(3.0f * 0.044715f);
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 t = _mm256_loadu_ps(th + i);
    const __m256 sech2 = _mm256_fnmadd_ps(t, t, one);
    const __m256 inner = _mm256_mul_ps(c, _mm256_fmadd_ps(c3, _mm256_mul_ps(v, v), one));
    const __m256 g = _mm256_fmadd_ps(_mm256_mul_ps(_mm256_mul_ps(half, v), sech2), inner,
                                     _mm256_mul_ps(half, _mm256_add_ps(one, t)));
    _mm256_storeu_ps(dy + i, _mm256_mul_ps(_mm256_loadu_ps(dy + i), g));
  }
  if (i < n) scalar::gelu_backward(x + i, th + i, dy + i, n - i);
}

#else  // no x86: the dispatcher never selects these

float dot(const float* a, const float* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
void matmul_nt(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
               std::size_t k, bool accumulate) {
  scalar::matmul_nt(a, b, c, m, n, k, accumulate);
}
void matmul_nn_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
                   std::size_t k) {
  scalar::matmul_nn_acc(a, b, c, m, n, k);
}
void matmul_tn_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t n,
                   std::size_t k) {
  scalar::matmul_tn_acc(a, b, c, m, n, k);
}
void gelu_forward(const float* x, float* y, float* th, std::size_t n) {
  scalar::gelu_forward(x, y, th, n);
}
void gelu_backward(const float* x, const float* th, float* dy, std::size_t n) {
  scalar::gelu_backward(x, th, dy, n);
}

#endif

}  // namespace avx2
}  // namespace enlg::kernels
