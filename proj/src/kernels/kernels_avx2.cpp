// AVX2/FMA kernel variants. This translation unit is compiled with -mavx2 -mfma;
// it is only reached through the runtime dispatch in kernels.cpp.
#if defined(__x86_64__)

#include <immintrin.h>

#include <cstddef>
#include <cstdint>

namespace edtn::kernels::detail {

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  acc0 = _mm256_add_pd(acc0, acc1);
  __m128d lo = _mm256_castpd256_pd128(acc0);
  __m128d hi = _mm256_extractf128_pd(acc0, 1);
  lo = _mm_add_pd(lo, hi);
  double s = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpby_avx2(double a, const double* x, double b, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void sub_avx2(const double* x, const double* y, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i,
                     _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] - y[i];
}

void csr_spmv_avx2(std::size_t rows, const std::int32_t* row_ptr,
                   const std::int32_t* col_idx, const double* vals, const double* x,
                   double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    std::int32_t k = row_ptr[r];
    const std::int32_t end = row_ptr[r + 1];
    __m256d acc = _mm256_setzero_pd();
    for (; k + 4 <= end; k += 4) {
      __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(col_idx + k));
      __m256d xv = _mm256_i32gather_pd(x, idx, 8);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(vals + k), xv, acc);
    }
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    lo = _mm_add_pd(lo, hi);
    double s = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
    for (; k < end; ++k) s += vals[k] * x[col_idx[k]];
    y[r] = s;
  }
}

void combine_avx2(std::size_t n, std::size_t k, const double* const* terms,
                  const double* coeff, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t t = 0; t < k; ++t)
      acc = _mm256_fmadd_pd(_mm256_set1_pd(coeff[t]), _mm256_loadu_pd(terms[t] + i), acc);
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += coeff[t] * terms[t][i];
    out[i] = s;
  }
}

void block3_apply_avx2(std::size_t nblocks, const double* blocks, const double* r,
                       double* z) {
  // Row-major 3x3 blocks; the 4-lane register covers one row plus one spilled lane,
  // so a masked scalar tail is simpler and the blocks are tiny. Keep per-row dot.
  for (std::size_t b = 0; b < nblocks; ++b) {
    const double* m = blocks + 9 * b;
    const double* v = r + 3 * b;
    double* w = z + 3 * b;
    w[0] = m[0] * v[0] + m[1] * v[1] + m[2] * v[2];
    w[1] = m[3] * v[0] + m[4] * v[1] + m[5] * v[2];
    w[2] = m[6] * v[0] + m[7] * v[1] + m[8] * v[2];
  }
}

}  // namespace edtn::kernels::detail

#endif  // __x86_64__
