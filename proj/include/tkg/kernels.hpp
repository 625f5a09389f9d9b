#pragma once
// Numeric kernels behind the tensor ops. Every kernel has a scalar reference
// implementation; the hot, data-parallel ones (dot, axpy, elementwise
// arithmetic, row-major matmul variants) also have AVX2 variants. The active
// implementation is chosen once per process from cpuid, so a run never mixes
// instruction sets mid-stream. kernels_selftest() cross-checks the two paths.
//
// Summation order differs between the scalar and AVX2 reductions (vector
// accumulators reassociate), so reduction kernels are equivalence-tested to a
// tight relative tolerance rather than bit equality; lane-wise kernels must
// match bit-for-bit.

#include <cstddef>

namespace tkg::kern {

enum class Isa { scalar, avx2 };

// Active ISA for this process. Detection runs once; the env var
// TKG_FORCE_SCALAR=1 pins the scalar path (used by the equivalence tests).
Isa active_isa();
const char* isa_name();

// y[i] = a[i] + b[i] and friends
void add(const double* a, const double* b, double* y, std::size_t n);
void sub(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* a, double c, double* y, std::size_t n);
// y[i] += c * a[i]
void axpy(double c, const double* a, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// C[m x n] = A[m x k] * B[k x n], row-major, C overwritten
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
// C[m x n] = A[m x k] * B[n x k]^T  (linear layer over row batches)
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
// C[m x n] += A[m x k] * B[k x n]
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);
// C[m x n] += A[k x m]^T * B[k x n]
void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
// y[m] = A[m x n] * x[n]
void matvec(const double* a, const double* x, double* y,
            std::size_t m, std::size_t n);
// y[n] = A[m x n]^T * x[m]
void tmatvec(const double* a, const double* x, double* y,
             std::size_t m, std::size_t n);

// Transcendentals: scalar loops shared by both ISA paths so the choice of ISA
// never changes their bits.
void sigmoid(const double* a, double* y, std::size_t n);
void tanh_(const double* a, double* y, std::size_t n);
void gelu(const double* a, double* y, std::size_t n);
// derivative of gelu at a[i], written to y
void gelu_grad(const double* a, double* y, std::size_t n);

// The scalar reference implementations, always available regardless of the
// dispatched ISA. The equivalence tests drive these against the dispatched
// entry points above.
namespace ref {
void add(const double* a, const double* b, double* y, std::size_t n);
void sub(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* a, double c, double* y, std::size_t n);
void axpy(double c, const double* a, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
} // namespace ref

// sqrt(2/pi) in the tanh-form gelu; fixed so outputs are reproducible across
// implementations.
inline constexpr double kGeluC = 0.7978845608;
inline constexpr double kGeluCube = 0.044715;

} // namespace tkg::kern
