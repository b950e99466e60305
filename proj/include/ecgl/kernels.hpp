#pragma once

#include <span>
#include <vector>

#include "ecgl/matrix.hpp"
#include "ecgl/types.hpp"

namespace ecgl {

/// Weighted sparse matrix in CSR form. Row i holds entries
/// (indices[k], values[k]) for k in [offsets[i], offsets[i+1]).
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<EdgeOffset> offsets;
    std::vector<NodeId> indices;
    std::vector<double> values;

    std::size_t nnz() const noexcept { return indices.size(); }
    SparseMatrix transposed() const;
};

namespace kernels {

// Every kernel writes each output element with a fixed summation order, so the
// serial and parallel variants agree bit for bit regardless of thread count.

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);     // c = a * b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);  // c = a^T * b
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);  // c = a * b^T
void spmm(const SparseMatrix& s, const Matrix& x, Matrix& y);
void spmv(const SparseMatrix& s, std::span<const double> x, std::span<double> y);
}  // namespace serial

namespace parallel {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void spmm(const SparseMatrix& s, const Matrix& x, Matrix& y);
void spmv(const SparseMatrix& s, std::span<const double> x, std::span<double> y);
}  // namespace parallel

/// Number of threads the parallel variants will use (1 without OpenMP).
int max_threads() noexcept;

// Default entry points used by the library.
inline void gemm(const Matrix& a, const Matrix& b, Matrix& c) { parallel::gemm(a, b, c); }
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) { parallel::gemm_tn(a, b, c); }
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) { parallel::gemm_nt(a, b, c); }
inline void spmm(const SparseMatrix& s, const Matrix& x, Matrix& y) { parallel::spmm(s, x, y); }
inline void spmv(const SparseMatrix& s, std::span<const double> x, std::span<double> y) {
    parallel::spmv(s, x, y);
}

}  // namespace kernels
}  // namespace ecgl
