#include <doctest.h>

#include "ecgl/kernels.hpp"
#include "ecgl/op_counter.hpp"
#include "oracles.hpp"

using namespace ecgl;

namespace {

SparseMatrix random_sparse(std::size_t rows, std::size_t cols, double p, Rng& rng) {
    SparseMatrix s;
    s.rows = rows;
    s.cols = cols;
    s.offsets.push_back(0);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (rng.uniform() < p) {
                s.indices.push_back(static_cast<NodeId>(j));
                s.values.push_back(rng.normal());
            }
        }
        s.offsets.push_back(static_cast<EdgeOffset>(s.indices.size()));
    }
    return s;
}

oracle::Dense sparse_to_dense(const SparseMatrix& s) {
    auto d = oracle::zeros(s.rows, s.cols);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (auto k = s.offsets[i]; k < s.offsets[i + 1]; ++k)
            d[i][static_cast<std::size_t>(s.indices[static_cast<std::size_t>(k)])] += s.values[static_cast<std::size_t>(k)];
    return d;
}

void check_close(const Matrix& got, const oracle::Dense& want, double tol) {
    REQUIRE(got.rows() == want.size());
    for (std::size_t i = 0; i < got.rows(); ++i)
        for (std::size_t j = 0; j < got.cols(); ++j) CHECK(got(i, j) == doctest::Approx(want[i][j]).epsilon(tol));
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

}  // namespace

TEST_CASE("dense kernels match the naive product and agree bit for bit across variants") {
    Rng rng(7);
    for (auto [n, k, m] : {std::tuple{1, 1, 1}, {5, 3, 4}, {37, 19, 23}, {130, 64, 7}}) {
        const Matrix a = oracle::random_matrix(n, k, rng);
        const Matrix b = oracle::random_matrix(k, m, rng);
        Matrix cs, cp;
        kernels::serial::gemm(a, b, cs);
        kernels::parallel::gemm(a, b, cp);
        check_close(cs, oracle::matmul(oracle::to_dense(a), oracle::to_dense(b)), 1e-12);
        CHECK(cs == cp);

        const Matrix at = transpose(a);
        Matrix ts, tp;
        kernels::serial::gemm_tn(at, b, ts);
        kernels::parallel::gemm_tn(at, b, tp);
        check_close(ts, oracle::matmul(oracle::to_dense(a), oracle::to_dense(b)), 1e-12);
        CHECK(ts == tp);

        const Matrix bt = transpose(b);
        Matrix ns, np;
        kernels::serial::gemm_nt(a, bt, ns);
        kernels::parallel::gemm_nt(a, bt, np);
        check_close(ns, oracle::matmul(oracle::to_dense(a), oracle::to_dense(b)), 1e-12);
        CHECK(ns == np);
    }
}

TEST_CASE("sparse kernels match the dense product and agree bit for bit across variants") {
    Rng rng(11);
    for (auto [rows, cols, p] : {std::tuple{1, 1, 1.0}, {20, 20, 0.2}, {300, 150, 0.05}, {64, 64, 0.0}}) {
        const SparseMatrix s = random_sparse(rows, cols, p, rng);
        const Matrix x = oracle::random_matrix(cols, 9, rng);
        Matrix ys, yp;
        kernels::serial::spmm(s, x, ys);
        kernels::parallel::spmm(s, x, yp);
        check_close(ys, oracle::matmul(sparse_to_dense(s), oracle::to_dense(x)), 1e-12);
        CHECK(ys == yp);

        std::vector<double> v(cols), vs(rows), vp(rows);
        for (double& e : v) e = rng.normal();
        kernels::serial::spmv(s, v, vs);
        kernels::parallel::spmv(s, v, vp);
        const auto want = oracle::matvec(sparse_to_dense(s), v);
        for (std::size_t i = 0; i < vs.size(); ++i) CHECK(vs[i] == doctest::Approx(want[i]).epsilon(1e-12));
        CHECK(vs == vp);

        const SparseMatrix t = s.transposed();
        CHECK(sparse_to_dense(t.transposed()) == sparse_to_dense(s));
        const auto dt = sparse_to_dense(t);
        for (std::size_t i = 0; i < s.rows; ++i)
            for (std::size_t j = 0; j < s.cols; ++j) CHECK(dt[j][i] == sparse_to_dense(s)[i][j]);
    }
}

TEST_CASE("sparse kernels are counted, dense kernels are not") {
    Rng rng(3);
    const SparseMatrix s = random_sparse(10, 10, 0.3, rng);
    const Matrix x = oracle::random_matrix(10, 4, rng);
    Matrix y;
    const auto before = csr_traversals();
    kernels::gemm(x, transpose(x), y);
    CHECK(csr_traversals() == before);
    kernels::spmm(s, x, y);
    std::vector<double> v(10, 1.0), out(10);
    kernels::spmv(s, v, out);
    CHECK(csr_traversals() == before + 2);
}

TEST_CASE("kernels reject mismatched shapes") {
    Matrix a(3, 4), b(5, 2), c;
    CHECK_THROWS_AS(kernels::serial::gemm(a, b, c), std::invalid_argument);
    CHECK_THROWS_AS(kernels::parallel::gemm(a, b, c), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(5);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        CHECK(r.index(7) < 7u);
    }
    CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double z = r.normal();
        m += z;
        m2 += z * z;
    }
    CHECK(std::abs(m / 20000) < 0.05);
    CHECK(m2 / 20000 == doctest::Approx(1.0).epsilon(0.05));
    double g = 0.0;
    for (int i = 0; i < 20000; ++i) g += static_cast<double>(r.geometric(0.25));
    CHECK(g / 20000 == doctest::Approx(3.0).epsilon(0.05));  // (1-p)/p
    CHECK(r.geometric(1.0) == 0u);
}
