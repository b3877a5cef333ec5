#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "adiva/error.hpp"

namespace adiva {

/// Dense row-major double matrix. Row-major so that reshapes of stacked
/// per-sample blocks are free and match the on-disk layout.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

inline std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_shape(const Mat& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw shape_mismatch(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                         ", got " + shape_str(m));
  }
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Rounds every entry to the nearest float32 value.
inline Mat round_to_float(const Mat& m) {
  Mat out = m;
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(static_cast<float>(out.data()[i]));
  return out;
}

}  // namespace adiva
