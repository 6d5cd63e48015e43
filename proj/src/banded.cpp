#include "telemanip/banded.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace telemanip {

void BandedSymmetric::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

double BandedSymmetric::get(int i, int j) const {
  if (j > i) std::swap(i, j);
  if (i - j > p_) return 0.0;
  return at(i, j);
}

Eigen::VectorXd BandedSymmetric::multiply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    const int j0 = std::max(0, i - p_);
    for (int j = j0; j < i; ++j) {
      const double a = at(i, j);
      y[i] += a * x[j];
      y[j] += a * x[i];
    }
    y[i] += at(i, i) * x[i];
  }
  return y;
}

Eigen::MatrixXd BandedSymmetric::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = std::max(0, i - p_); j <= i; ++j) {
      d(i, j) = at(i, j);
      d(j, i) = at(i, j);
    }
  }
  return d;
}

bool BandedCholesky::factor(const BandedSymmetric& a) {
  l_ = a;
  const int n = l_.size();
  const int p = l_.bandwidth();
  for (int i = 0; i < n; ++i) {
    double* ri = l_.row(i) + p - i;  // ri[k] = L(i, k)
    const int j0 = std::max(0, i - p);
    for (int j = j0; j <= i; ++j) {
      const double* rj = l_.row(j) + p - j;
      double s = ri[j];
      for (int k = std::max(j0, j - p); k < j; ++k) s -= ri[k] * rj[k];
      if (j == i) {
        if (!(s > 0.0) || !std::isfinite(s)) return false;
        ri[i] = std::sqrt(s);
      } else {
        ri[j] = s / rj[j];
      }
    }
  }
  return true;
}

Eigen::VectorXd BandedCholesky::solve(const Eigen::VectorXd& b) const {
  const int n = l_.size();
  const int p = l_.bandwidth();
  Eigen::VectorXd y = b;
  for (int i = 0; i < n; ++i) {
    double s = y[i];
    for (int k = std::max(0, i - p); k < i; ++k) s -= l_.at(i, k) * y[k];
    y[i] = s / l_.at(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k <= std::min(n - 1, i + p); ++k) s -= l_.at(k, i) * y[k];
    y[i] = s / l_.at(i, i);
  }
  return y;
}

}  // namespace telemanip
