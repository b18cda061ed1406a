#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

// Data-parallel arithmetic kernels behind the PCG solver and matrix assembly.
// A scalar reference implementation always exists; an AVX2 variant is selected at
// runtime when the CPU supports it. Scalar and SIMD paths agree to rounding
// (FMA/reassociation), not bit-for-bit; within one process the active backend is
// fixed, so repeated runs on the same machine produce identical bytes.
namespace edtn::kernels {

enum class Backend { scalar, avx2 };

// Backend chosen at startup (avx2 when the CPU has it, else scalar).
Backend detected_backend();
Backend active_backend();
// Force a backend, e.g. scalar for equivalence tests. Throws edtn::ConfigError if the
// requested backend is not supported on this machine.
void set_backend(Backend b);
std::string backend_name(Backend b);

double dot(std::span<const double> x, std::span<const double> y);
double nrm2(std::span<const double> x);
// y += a*x
void axpy(double a, std::span<const double> x, std::span<double> y);
// y = a*x + b*y
void axpby(double a, std::span<const double> x, double b, std::span<double> y);
void scale(double a, std::span<double> x);
// z = x - y
void sub(std::span<const double> x, std::span<const double> y, std::span<double> z);

// y = A*x for CSR with int32 indices. row_ptr has rows+1 entries.
void csr_spmv(std::size_t rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y);

// out = sum_k coeff[k] * vals_k over arrays of equal length n (vals_k = terms[k]).
// Linear combination of per-subdomain matrix value arrays sharing one pattern.
void combine(std::size_t n, std::size_t k, const double* const* terms,
             const double* coeff, double* out);

// z_i = B_i * r_i for 3x3 blocks stored row-major per vertex (block-Jacobi apply).
void block3_apply(std::size_t nblocks, const double* blocks, const double* r, double* z);

}  // namespace edtn::kernels
