#include "tkg/kernels.hpp"

#include <cmath>
#include <cstdlib>

#if defined(__x86_64__) || defined(_M_X64)
#define TKG_X86 1
#include <immintrin.h>
#if defined(__GNUC__)
#include <cpuid.h>
#endif
#endif

namespace tkg::kern {

// ============================================================
// ISA selection
// ============================================================

static Isa detect_isa() {
  const char* force = std::getenv("TKG_FORCE_SCALAR");
  if (force && force[0] == '1') return Isa::scalar;
#if defined(TKG_X86) && defined(__AVX2__)
  // Compiled with AVX2 enabled for this TU; still confirm the CPU agrees.
  unsigned eax, ebx, ecx, edx;
  if (__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx) && (ebx & bit_AVX2))
    return Isa::avx2;
#elif defined(TKG_X86)
  unsigned eax, ebx, ecx, edx;
  if (__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx) && (ebx & (1u << 5)))
    return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa active_isa() {
  static const Isa isa = detect_isa();
  return isa;
}

const char* isa_name() { return active_isa() == Isa::avx2 ? "avx2" : "scalar"; }

// ============================================================
// Scalar reference kernels
// ============================================================

static void add_scalar_k(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
static void sub_scalar_k(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}
static void mul_scalar_k(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
static void scale_scalar_k(const double* a, double c, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * c;
}
static void axpy_scalar_k(double c, const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += c * a[i];
}
static double dot_scalar_k(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

#if defined(TKG_X86) && defined(__AVX2__)

// ============================================================
// AVX2 kernels. Remainders fall through to scalar tails.
// ============================================================

static void add_avx2_k(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}
static void sub_avx2_k(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}
static void mul_avx2_k(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}
static void scale_avx2_k(const double* a, double c, double* y, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
  for (; i < n; ++i) y[i] = a[i] * c;
}
static void axpy_avx2_k(double c, const double* a, double* y, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(vc, _mm256_loadu_pd(a + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += c * a[i];
}

static inline double hsum256(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

static double dot_avx2_k(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum256(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

#endif // TKG_X86 && __AVX2__

// ============================================================
// Dispatchers
// ============================================================

void add(const double* a, const double* b, double* y, std::size_t n) {
#if defined(TKG_X86) && defined(__AVX2__)
  if (active_isa() == Isa::avx2) return add_avx2_k(a, b, y, n);
#endif
  add_scalar_k(a, b, y, n);
}
void sub(const double* a, const double* b, double* y, std::size_t n) {
#if defined(TKG_X86) && defined(__AVX2__)
  if (active_isa() == Isa::avx2) return sub_avx2_k(a, b, y, n);
#endif
  sub_scalar_k(a, b, y, n);
}
void mul(const double* a, const double* b, double* y, std::size_t n) {
#if defined(TKG_X86) && defined(__AVX2__)
  if (active_isa() == Isa::avx2) return mul_avx2_k(a, b, y, n);
#endif
  mul_scalar_k(a, b, y, n);
}
void scale(const double* a, double c, double* y, std::size_t n) {
#if defined(TKG_X86) && defined(__AVX2__)
  if (active_isa() == Isa::avx2) return scale_avx2_k(a, c, y, n);
#endif
  scale_scalar_k(a, c, y, n);
}
void axpy(double c, const double* a, double* y, std::size_t n) {
#if defined(TKG_X86) && defined(__AVX2__)
  if (active_isa() == Isa::avx2) return axpy_avx2_k(c, a, y, n);
#endif
  axpy_scalar_k(c, a, y, n);
}
double dot(const double* a, const double* b, std::size_t n) {
#if defined(TKG_X86) && defined(__AVX2__)
  if (active_isa() == Isa::avx2) return dot_avx2_k(a, b, n);
#endif
  return dot_scalar_k(a, b, n);
}

// Row-major matmul family. The nt form is the hot one (every linear layer is
// "rows times weight-rows"), and it reduces to per-cell dot products, which
// the dispatched dot() already vectorizes.

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = dot(ai, b + j * k, k);
  }
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  matmul_acc(a, b, c, m, k, n);
}

void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
  // saxpy-style: stream rows of B, scaled by a[i][p]; vectorizes along n.
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy(ai[p], b + p * n, ci, n);
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  // C[m x n] += A[k x m]^T B[k x n]; same saxpy pattern over rows of A.
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy(ap[i], bp, c + i * n, n);
  }
}

void matvec(const double* a, const double* x, double* y,
            std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot(a + i * n, x, n);
}

void tmatvec(const double* a, const double* x, double* y,
             std::size_t m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < m; ++i) axpy(x[i], a + i * n, y, n);
}

// ============================================================
// Reference entry points for the equivalence tests
// ============================================================

namespace ref {
void add(const double* a, const double* b, double* y, std::size_t n) { add_scalar_k(a, b, y, n); }
void sub(const double* a, const double* b, double* y, std::size_t n) { sub_scalar_k(a, b, y, n); }
void mul(const double* a, const double* b, double* y, std::size_t n) { mul_scalar_k(a, b, y, n); }
void scale(const double* a, double c, double* y, std::size_t n) { scale_scalar_k(a, c, y, n); }
void axpy(double c, const double* a, double* y, std::size_t n) { axpy_scalar_k(c, a, y, n); }
double dot(const double* a, const double* b, std::size_t n) { return dot_scalar_k(a, b, n); }

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = dot_scalar_k(a + i * k, b + j * k, k);
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      axpy_scalar_k(a[i * k + p], b + p * n, c + i * n, n);
}
} // namespace ref

// ============================================================
// Transcendentals (always scalar)
// ============================================================

void sigmoid(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double x = a[i];
    if (x >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      double e = std::exp(x);
      y[i] = e / (1.0 + e);
    }
  }
}

void tanh_(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(a[i]);
}

void gelu(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double x = a[i];
    double u = kGeluC * (x + kGeluCube * x * x * x);
    y[i] = 0.5 * x * (1.0 + std::tanh(u));
  }
}

void gelu_grad(const double* a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double x = a[i];
    double u = kGeluC * (x + kGeluCube * x * x * x);
    double t = std::tanh(u);
    double du = kGeluC * (1.0 + 3.0 * kGeluCube * x * x);
    y[i] = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
  }
}

} // namespace tkg::kern
