#include "edtn/sparse.hpp"

#include <algorithm>

#include "edtn/errors.hpp"
#include "edtn/kernels.hpp"

namespace edtn {

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (static_cast<std::int32_t>(x.size()) != cols ||
      static_cast<std::int32_t>(y.size()) != rows)
    throw DimensionError("csr multiply: vector size does not match matrix");
  kernels::csr_spmv(static_cast<std::size_t>(rows), row_ptr.data(), col_idx.data(),
                    vals.data(), x.data(), y.data());
}

static std::int64_t find_in(const std::vector<std::int32_t>& row_ptr,
                            const std::vector<std::int32_t>& col_idx, std::int32_t r,
                            std::int32_t c) {
  auto first = col_idx.begin() + row_ptr[r];
  auto last = col_idx.begin() + row_ptr[r + 1];
  auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return -1;
  return it - col_idx.begin();
}

std::int64_t CsrMatrix::find(std::int32_t r, std::int32_t c) const {
  return find_in(row_ptr, col_idx, r, c);
}

std::int64_t SparsityPattern::find(std::int32_t r, std::int32_t c) const {
  return find_in(row_ptr, col_idx, r, c);
}

CsrMatrix SparsityPattern::with_values(std::vector<double> vals) const {
  if (vals.size() != nnz()) throw DimensionError("with_values: value array size != nnz");
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr = row_ptr;
  m.col_idx = col_idx;
  m.vals = std::move(vals);
  return m;
}

void SparsityPattern::multiply(std::span<const double> v, std::span<const double> x,
                               std::span<double> y) const {
  if (v.size() != nnz() || static_cast<std::int32_t>(x.size()) != cols ||
      static_cast<std::int32_t>(y.size()) != rows)
    throw DimensionError("pattern multiply: size mismatch");
  kernels::csr_spmv(static_cast<std::size_t>(rows), row_ptr.data(), col_idx.data(),
                    v.data(), x.data(), y.data());
}

}  // namespace edtn
