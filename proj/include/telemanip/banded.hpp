#pragma once

#include <vector>

#include <Eigen/Core>

namespace telemanip {

/// Symmetric matrix with half-bandwidth p, lower triangle stored row-wise.
/// Entry (i, j) with i - p <= j <= i lives at data[i * (p + 1) + j - i + p].
class BandedSymmetric {
 public:
  BandedSymmetric() = default;
  BandedSymmetric(int n, int p) : n_(n), p_(p), data_(static_cast<std::size_t>(n) * (p + 1), 0.0) {}

  int size() const { return n_; }
  int bandwidth() const { return p_; }

  void set_zero();
  /// Lower-triangle element; requires i - p <= j <= i.
  double& at(int i, int j) { return data_[index(i, j)]; }
  double at(int i, int j) const { return data_[index(i, j)]; }
  /// Symmetric read that returns zero outside the band.
  double get(int i, int j) const;

  /// Row i of the band; element (i, j) sits at row(i)[j - i + p].
  double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * (p_ + 1); }
  const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * (p_ + 1); }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd to_dense() const;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * (p_ + 1) + (j - i + p_);
  }

  int n_ = 0;
  int p_ = 0;
  std::vector<double> data_;
};

/// In-place banded Cholesky A = L L^T. Cost O(n p^2).
class BandedCholesky {
 public:
  /// Returns false if a non-positive pivot is met.
  bool factor(const BandedSymmetric& a);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  BandedSymmetric l_;
};

}  // namespace telemanip
