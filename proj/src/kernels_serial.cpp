#include <algorithm>
#include <stdexcept>

#include "ecgl/kernels.hpp"
#include "ecgl/op_counter.hpp"

namespace ecgl {

SparseMatrix SparseMatrix::transposed() const {
    SparseMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.offsets.assign(cols + 1, 0);
    for (NodeId j : indices) ++t.offsets[static_cast<std::size_t>(j) + 1];
    for (std::size_t i = 0; i < cols; ++i) t.offsets[i + 1] += t.offsets[i];
    t.indices.resize(indices.size());
    t.values.resize(values.size());
    std::vector<EdgeOffset> cursor(t.offsets.begin(), t.offsets.end() - 1);
    // Rows are visited in order, so each transposed row stays sorted by column.
    for (std::size_t i = 0; i < rows; ++i) {
        for (EdgeOffset k = offsets[i]; k < offsets[i + 1]; ++k) {
            const auto j = static_cast<std::size_t>(indices[static_cast<std::size_t>(k)]);
            const auto dst = static_cast<std::size_t>(cursor[j]++);
            t.indices[dst] = static_cast<NodeId>(i);
            t.values[dst] = values[static_cast<std::size_t>(k)];
        }
    }
    return t;
}

namespace kernels {
namespace {

void check_gemm(std::size_t inner_a, std::size_t inner_b, const char* name) {
    if (inner_a != inner_b) throw std::invalid_argument(std::string(name) + ": inner dimension mismatch");
}

}  // namespace

namespace serial {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    check_gemm(a.cols(), b.rows(), "gemm");
    c = Matrix(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out = c.data().data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.data().data() + k * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    check_gemm(a.rows(), b.rows(), "gemm_tn");
    c = Matrix(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
        double* out = c.data().data() + k * n;
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const double aik = a(i, k);
            const double* brow = b.data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    check_gemm(a.cols(), b.cols(), "gemm_nt");
    c = Matrix(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data().data() + i * a.cols();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.data().data() + j * b.cols();
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
}

void spmm(const SparseMatrix& s, const Matrix& x, Matrix& y) {
    if (s.cols != x.rows()) throw std::invalid_argument("spmm: dimension mismatch");
    note_csr_traversal();
    y = Matrix(s.rows, x.cols());
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < s.rows; ++i) {
        double* out = y.data().data() + i * n;
        for (EdgeOffset k = s.offsets[i]; k < s.offsets[i + 1]; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            const double w = s.values[idx];
            const double* xrow = x.data().data() + static_cast<std::size_t>(s.indices[idx]) * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += w * xrow[j];
        }
    }
}

void spmv(const SparseMatrix& s, std::span<const double> x, std::span<double> y) {
    if (s.cols != x.size() || s.rows != y.size()) throw std::invalid_argument("spmv: dimension mismatch");
    note_csr_traversal();
    for (std::size_t i = 0; i < s.rows; ++i) {
        double acc = 0.0;
        for (EdgeOffset k = s.offsets[i]; k < s.offsets[i + 1]; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            acc += s.values[idx] * x[static_cast<std::size_t>(s.indices[idx])];
        }
        y[i] = acc;
    }
}

}  // namespace serial
}  // namespace kernels
}  // namespace ecgl
