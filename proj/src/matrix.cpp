#include "ecgl/matrix.hpp"

#include <algorithm>
#include <stdexcept>

namespace ecgl {

Matrix gather_rows(const Matrix& source, std::span<const NodeId> rows) {
    Matrix out(rows.size(), source.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = source.row(static_cast<std::size_t>(rows[i]));
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.empty()) return bottom;
    if (bottom.empty()) return top;
    if (top.cols() != bottom.cols()) throw std::invalid_argument("vstack: column count mismatch");
    Matrix out(top.rows() + bottom.rows(), top.cols());
    std::copy(top.data().begin(), top.data().end(), out.data().begin());
    std::copy(bottom.data().begin(), bottom.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(top.data().size()));
    return out;
}

}  // namespace ecgl
