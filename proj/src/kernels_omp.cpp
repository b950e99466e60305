#include <stdexcept>

#include "ecgl/kernels.hpp"
#include "ecgl/op_counter.hpp"

#ifdef ECGL_HAVE_OPENMP
#include <omp.h>
#endif

namespace ecgl::kernels {

int max_threads() noexcept {
#ifdef ECGL_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace parallel {

void gemm(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.rows()) throw std::invalid_argument("gemm: inner dimension mismatch");
    c = Matrix(a.rows(), b.cols());
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* cd = c.data().data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* out = cd + static_cast<std::size_t>(i) * n;
        const double* arow = ad + static_cast<std::size_t>(i) * inner;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* brow = bd + k * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
        }
    }
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows() != b.rows()) throw std::invalid_argument("gemm_tn: inner dimension mismatch");
    c = Matrix(a.cols(), b.cols());
    const auto out_rows = static_cast<std::ptrdiff_t>(a.cols());
    const std::size_t inner = a.rows();
    const std::size_t acols = a.cols();
    const std::size_t n = b.cols();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* cd = c.data().data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < out_rows; ++k) {
        double* out = cd + static_cast<std::size_t>(k) * n;
        for (std::size_t i = 0; i < inner; ++i) {
            const double aik = ad[i * acols + static_cast<std::size_t>(k)];
            const double* brow = bd + i * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
        }
    }
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.cols()) throw std::invalid_argument("gemm_nt: inner dimension mismatch");
    c = Matrix(a.rows(), b.rows());
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    const std::size_t inner = a.cols();
    const std::size_t n = b.rows();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* cd = c.data().data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const double* arow = ad + static_cast<std::size_t>(i) * inner;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bd + j * inner;
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
            cd[static_cast<std::size_t>(i) * n + j] = acc;
        }
    }
}

void spmm(const SparseMatrix& s, const Matrix& x, Matrix& y) {
    if (s.cols != x.rows()) throw std::invalid_argument("spmm: dimension mismatch");
    note_csr_traversal();
    y = Matrix(s.rows, x.cols());
    const auto rows = static_cast<std::ptrdiff_t>(s.rows);
    const std::size_t n = x.cols();
    const double* xd = x.data().data();
    double* yd = y.data().data();
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto row = static_cast<std::size_t>(i);
        double* out = yd + row * n;
        for (EdgeOffset k = s.offsets[row]; k < s.offsets[row + 1]; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            const double w = s.values[idx];
            const double* xrow = xd + static_cast<std::size_t>(s.indices[idx]) * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += w * xrow[j];
        }
    }
}

void spmv(const SparseMatrix& s, std::span<const double> x, std::span<double> y) {
    if (s.cols != x.size() || s.rows != y.size()) throw std::invalid_argument("spmv: dimension mismatch");
    note_csr_traversal();
    const auto rows = static_cast<std::ptrdiff_t>(s.rows);
#pragma omp parallel for schedule(dynamic, 1024)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto row = static_cast<std::size_t>(i);
        double acc = 0.0;
        for (EdgeOffset k = s.offsets[row]; k < s.offsets[row + 1]; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            acc += s.values[idx] * x[static_cast<std::size_t>(s.indices[idx])];
        }
        y[row] = acc;
    }
}

}  // namespace parallel
}  // namespace ecgl::kernels
