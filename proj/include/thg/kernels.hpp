#pragma once

#include <cstddef>
#include <string_view>

// Dense f64 vector kernels: a scalar reference implementation plus SIMD
// variants (AVX2 on x86-64, NEON on aarch64) selected once at runtime from
// CPU features. Everything numeric in this project funnels through these.
//
// SIMD reductions reassociate, so dot/norm_sq/reduce_sum may differ from the
// scalar reference in the last few ulps. Selection is stable for a given
// machine, which keeps end-to-end runs bit-reproducible there.

namespace thg::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
// Overrides dispatch (tests, apples-to-apples timing). Throws ContractError
// if the backend is not available on this CPU.
void force_backend(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double norm_sq(const double* a, std::size_t n);
double reduce_sum(const double* a, std::size_t n);
double reduce_max(const double* a, std::size_t n);  // -inf when n == 0
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void scale(const double* x, double alpha, double* out, std::size_t n);  // out may alias x
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
// out[i] = exp(x[i]); out may alias x. The AVX2 variant agrees with std::exp
// to a few ulps (the equivalence tests pin the bound).
void vexp(const double* x, double* out, std::size_t n);

// Row-major matrix products over the dispatched primitives. C is accumulated
// into, not overwritten.
// gemm_nn: C[m,n] += A[m,k] * B[k,n]
// gemm_nt: C[m,n] += A[m,k] * B[n,k]^T
// gemm_tn: C[m,n] += A[k,m]^T * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n);

// Reference kernels, always available; the equivalence tests compare the
// active backend against these.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double norm_sq(const double* a, std::size_t n);
double reduce_sum(const double* a, std::size_t n);
double reduce_max(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(const double* x, double alpha, double* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void vexp(const double* x, double* out, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double norm_sq(const double* a, std::size_t n);
double reduce_sum(const double* a, std::size_t n);
double reduce_max(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(const double* x, double alpha, double* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void vexp(const double* x, double* out, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
double norm_sq(const double* a, std::size_t n);
double reduce_sum(const double* a, std::size_t n);
double reduce_max(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(const double* x, double alpha, double* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
}  // namespace neon
#endif

}  // namespace thg::kernels
