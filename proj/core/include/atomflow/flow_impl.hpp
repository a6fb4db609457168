#pragma once

#include "atomflow/errors.hpp"

namespace atomflow {

template <typename Derived>
typename Derived::PlainObject interpolate_continuous(const Eigen::MatrixBase<Derived>& x1,
                                                     const Eigen::MatrixBase<Derived>& eps, double t) {
  if (x1.rows() != eps.rows() || x1.cols() != eps.cols())
    fail(ErrorKind::ShapeError, "interpolate_continuous: endpoint and noise shapes differ");
  // Exact endpoints: t = 1 returns x1 and t = 0 returns eps bit-for-bit.
  if (t == 1.0) return x1;
  if (t == 0.0) return eps;
  return t * x1 + (1.0 - t) * eps;
}

}  // namespace atomflow
