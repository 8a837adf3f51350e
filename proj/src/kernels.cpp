#include "thg/kernels.hpp"

#include <cmath>
#include <limits>

#include "thg/errors.hpp"

namespace thg::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm_sq(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

double reduce_sum(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

double reduce_max(const double* a, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const double* x, double alpha, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vexp(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

}  // namespace scalar

namespace {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*norm_sq)(const double*, std::size_t);
  double (*reduce_sum)(const double*, std::size_t);
  double (*reduce_max)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*vexp)(const double*, double*, std::size_t);
};

constexpr KernelTable kScalarTable{
    scalar::dot, scalar::norm_sq, scalar::reduce_sum, scalar::reduce_max,
    scalar::axpy, scalar::scale, scalar::add, scalar::sub, scalar::mul,
    scalar::vexp};

#if defined(__x86_64__) || defined(_M_X64)
constexpr KernelTable kAvx2Table{
    avx2::dot, avx2::norm_sq, avx2::reduce_sum, avx2::reduce_max,
    avx2::axpy, avx2::scale, avx2::add, avx2::sub, avx2::mul,
    avx2::vexp};
#endif

#if defined(__aarch64__)
// No NEON exp variant; that slot falls back to the scalar reference.
constexpr KernelTable kNeonTable{
    neon::dot, neon::norm_sq, neon::reduce_sum, neon::reduce_max,
    neon::axpy, neon::scale, neon::add, neon::sub, neon::mul,
    scalar::vexp};
#endif

Backend detect_backend() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::Avx2;
#elif defined(__aarch64__)
  return Backend::Neon;
#endif
  return Backend::Scalar;
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &kScalarTable;
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::Avx2:
      return &kAvx2Table;
#endif
#if defined(__aarch64__)
    case Backend::Neon:
      return &kNeonTable;
#endif
    default:
      return nullptr;
  }
}

struct Dispatch {
  Backend backend;
  const KernelTable* table;
  Dispatch() : backend(detect_backend()), table(table_for(backend)) {}
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) { return table_for(b) != nullptr && (b == Backend::Scalar || detect_backend() == b); }

Backend active_backend() { return dispatch().backend; }

void force_backend(Backend b) {
  if (!backend_available(b))
    throw ContractError("kernel backend not available on this CPU: " +
                        std::string(backend_name(b)));
  dispatch().backend = b;
  dispatch().table = table_for(b);
}

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().table->dot(a, b, n);
}
double norm_sq(const double* a, std::size_t n) {
  return dispatch().table->norm_sq(a, n);
}
double reduce_sum(const double* a, std::size_t n) {
  return dispatch().table->reduce_sum(a, n);
}
double reduce_max(const double* a, std::size_t n) {
  return dispatch().table->reduce_max(a, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().table->axpy(alpha, x, y, n);
}
void scale(const double* x, double alpha, double* out, std::size_t n) {
  dispatch().table->scale(x, alpha, out, n);
}
void add(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->add(a, b, out, n);
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->sub(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  dispatch().table->mul(a, b, out, n);
}
void vexp(const double* x, double* out, std::size_t n) {
  dispatch().table->vexp(x, out, n);
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) axpy(arow[l], b + l * n, crow, n);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += dot(arow, b + j * k, k);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  // a is [k, m]; accumulate rank-1 updates row by row.
  for (std::size_t i = 0; i < k; ++i) {
    const double* arow = a + i * m;
    const double* brow = b + i * n;
    for (std::size_t l = 0; l < m; ++l) axpy(arow[l], brow, c + l * n, n);
  }
}

}  // namespace thg::kernels
