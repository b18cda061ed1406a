#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace edtn {

// Symmetric-pattern CSR. Column indices are sorted within each row; assembly merges
// duplicate triplets in a fixed order so value arrays are deterministic.
struct CsrMatrix {
  std::int32_t rows = 0;
  std::int32_t cols = 0;
  std::vector<std::int32_t> row_ptr;
  std::vector<std::int32_t> col_idx;
  std::vector<double> vals;

  std::size_t nnz() const { return col_idx.size(); }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;

  // Position of (r, c) in vals; -1 if not in the pattern.
  std::int64_t find(std::int32_t r, std::int32_t c) const;
};

// Fixed sparsity pattern shared by several value arrays (per-subdomain stiffness and
// mass pieces all live on the union pattern, so parameter updates are value-array
// linear combinations and never re-assemble).
struct SparsityPattern {
  std::int32_t rows = 0;
  std::int32_t cols = 0;
  std::vector<std::int32_t> row_ptr;
  std::vector<std::int32_t> col_idx;

  std::size_t nnz() const { return col_idx.size(); }
  std::int64_t find(std::int32_t r, std::int32_t c) const;
  CsrMatrix with_values(std::vector<double> vals) const;
  void multiply(std::span<const double> vals, std::span<const double> x,
                std::span<double> y) const;
};

}  // namespace edtn
