#pragma once

#include <Eigen/Core>
#include <span>

namespace rbfvae {

/// Batch matrices are row-major so each observation is a contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> row_span(const Matrix& m, Eigen::Index row) {
    return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(Matrix& m, Eigen::Index row) {
    return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace rbfvae
