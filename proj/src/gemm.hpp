#pragma once

#include <Eigen/Core>

#include "oct1d/tape.hpp"

namespace oct1d::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MatMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Row-major view; `ld` is the distance between row starts and may be smaller
// than `cols`, which gives overlapping rows (zero-copy im2col).
struct MatRef {
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index ld;

  ConstMatMap map() const { return ConstMatMap(data, rows, cols, Eigen::OuterStride<>(ld)); }
};

inline MatRef dense_ref(const double* data, Eigen::Index rows, Eigen::Index cols) {
  return {data, rows, cols, cols};
}

// c (+)= op(a) * op(b), c dense row-major with the product's shape.
inline void gemm(Precision precision, MatRef a, bool trans_a, MatRef b, bool trans_b, double* c,
                 bool accumulate) {
  const Eigen::Index m = trans_a ? a.cols : a.rows;
  const Eigen::Index n = trans_b ? b.rows : b.cols;
  MatMap out(c, m, n, Eigen::OuterStride<>(n));
  if (precision == Precision::Double) {
    auto am = a.map();
    auto bm = b.map();
    if (!accumulate) out.setZero();
    if (!trans_a && !trans_b) out.noalias() += am * bm;
    else if (trans_a && !trans_b) out.noalias() += am.transpose() * bm;
    else if (!trans_a && trans_b) out.noalias() += am * bm.transpose();
    else out.noalias() += am.transpose() * bm.transpose();
    return;
  }
  const RowMatF af = a.map().cast<float>();
  const RowMatF bf = b.map().cast<float>();
  RowMatF prod(m, n);
  if (!trans_a && !trans_b) prod.noalias() = af * bf;
  else if (trans_a && !trans_b) prod.noalias() = af.transpose() * bf;
  else if (!trans_a && trans_b) prod.noalias() = af * bf.transpose();
  else prod.noalias() = af.transpose() * bf.transpose();
  if (accumulate) out += prod.cast<double>();
  else out = prod.cast<double>();
}

}  // namespace oct1d::detail
