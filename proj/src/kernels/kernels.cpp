#include "edtn/kernels.hpp"

#include <cmath>
#include <cstddef>

#include "edtn/errors.hpp"

namespace edtn::kernels {

namespace detail {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby_scalar(double a, const double* x, double b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void sub_scalar(const double* x, const double* y, double* z, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

void csr_spmv_scalar(std::size_t rows, const std::int32_t* row_ptr,
                     const std::int32_t* col_idx, const double* vals, const double* x,
                     double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::int32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      s += vals[k] * x[col_idx[k]];
    y[r] = s;
  }
}

void combine_scalar(std::size_t n, std::size_t k, const double* const* terms,
                    const double* coeff, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += coeff[t] * terms[t][i];
    out[i] = s;
  }
}

void block3_apply_scalar(std::size_t nblocks, const double* blocks, const double* r,
                         double* z) {
  for (std::size_t b = 0; b < nblocks; ++b) {
    const double* m = blocks + 9 * b;
    const double* v = r + 3 * b;
    double* w = z + 3 * b;
    w[0] = m[0] * v[0] + m[1] * v[1] + m[2] * v[2];
    w[1] = m[3] * v[0] + m[4] * v[1] + m[5] * v[2];
    w[2] = m[6] * v[0] + m[7] * v[1] + m[8] * v[2];
  }
}

// AVX2 variants; defined in kernels_avx2.cpp, compiled with -mavx2 -mfma.
#if defined(__x86_64__)
double dot_avx2(const double* x, const double* y, std::size_t n);
void axpy_avx2(double a, const double* x, double* y, std::size_t n);
void axpby_avx2(double a, const double* x, double b, double* y, std::size_t n);
void scale_avx2(double a, double* x, std::size_t n);
void sub_avx2(const double* x, const double* y, double* z, std::size_t n);
void csr_spmv_avx2(std::size_t rows, const std::int32_t* row_ptr,
                   const std::int32_t* col_idx, const double* vals, const double* x,
                   double* y);
void combine_avx2(std::size_t n, std::size_t k, const double* const* terms,
                  const double* coeff, double* out);
void block3_apply_avx2(std::size_t nblocks, const double* blocks, const double* r,
                       double* z);
#endif

struct Dispatch {
  double (*dot)(const double*, const double*, std::size_t) = dot_scalar;
  void (*axpy)(double, const double*, double*, std::size_t) = axpy_scalar;
  void (*axpby)(double, const double*, double, double*, std::size_t) = axpby_scalar;
  void (*scale)(double, double*, std::size_t) = scale_scalar;
  void (*sub)(const double*, const double*, double*, std::size_t) = sub_scalar;
  void (*csr_spmv)(std::size_t, const std::int32_t*, const std::int32_t*, const double*,
                   const double*, double*) = csr_spmv_scalar;
  void (*combine)(std::size_t, std::size_t, const double* const*, const double*,
                  double*) = combine_scalar;
  void (*block3_apply)(std::size_t, const double*, const double*,
                       double*) = block3_apply_scalar;
};

Dispatch make_dispatch(Backend b) {
  Dispatch d;
#if defined(__x86_64__)
  if (b == Backend::avx2) {
    d.dot = dot_avx2;
    d.axpy = axpy_avx2;
    d.axpby = axpby_avx2;
    d.scale = scale_avx2;
    d.sub = sub_avx2;
    d.csr_spmv = csr_spmv_avx2;
    d.combine = combine_avx2;
    d.block3_apply = block3_apply_avx2;
  }
#else
  (void)b;
#endif
  return d;
}

Backend g_backend = detected_backend();
Dispatch g_dispatch = make_dispatch(g_backend);

}  // namespace detail

Backend detected_backend() {
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::avx2;
#endif
  return Backend::scalar;
}

Backend active_backend() { return detail::g_backend; }

void set_backend(Backend b) {
  if (b == Backend::avx2 && detected_backend() != Backend::avx2)
    throw ConfigError("avx2 backend requested but not supported on this CPU");
  detail::g_backend = b;
  detail::g_dispatch = detail::make_dispatch(b);
}

std::string backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

double dot(std::span<const double> x, std::span<const double> y) {
  return detail::g_dispatch.dot(x.data(), y.data(), x.size());
}

double nrm2(std::span<const double> x) {
  double s = detail::g_dispatch.dot(x.data(), x.data(), x.size());
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  detail::g_dispatch.axpy(a, x.data(), y.data(), x.size());
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  detail::g_dispatch.axpby(a, x.data(), b, y.data(), x.size());
}

void scale(double a, std::span<double> x) {
  detail::g_dispatch.scale(a, x.data(), x.size());
}

void sub(std::span<const double> x, std::span<const double> y, std::span<double> z) {
  detail::g_dispatch.sub(x.data(), y.data(), z.data(), x.size());
}

void csr_spmv(std::size_t rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y) {
  detail::g_dispatch.csr_spmv(rows, row_ptr, col_idx, vals, x, y);
}

void combine(std::size_t n, std::size_t k, const double* const* terms,
             const double* coeff, double* out) {
  detail::g_dispatch.combine(n, k, terms, coeff, out);
}

void block3_apply(std::size_t nblocks, const double* blocks, const double* r, double* z) {
  detail::g_dispatch.block3_apply(nblocks, blocks, r, z);
}

}  // namespace edtn::kernels
