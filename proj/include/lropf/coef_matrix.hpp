#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lropf {

/// Dense n x r factor stored column-major; column c is the c-th real vector x_c
/// with W = sum_c x_c x_c^T.
class Factor {
 public:
  Factor() = default;
  Factor(std::size_t n, std::size_t r, double fill = 0.0) : n_(n), r_(r), data_(n * r, fill) {}

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return r_; }

  double& operator()(std::size_t i, std::size_t c) { return data_[c * n_ + i]; }
  double operator()(std::size_t i, std::size_t c) const { return data_[c * n_ + i]; }

  std::span<double> col(std::size_t c) { return {data_.data() + c * n_, n_}; }
  std::span<const double> col(std::size_t c) const { return {data_.data() + c * n_, n_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Factor&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t r_ = 0;
  std::vector<double> data_;
};

/// Optional instrumentation for trace_quadform.
struct OpCounter {
  std::size_t multiply_adds = 0;
  std::size_t doublings = 0;
};

/// Sparse symmetric matrix holding only the upper triangle (i <= j). Stored
/// values are the full-matrix entries, so an off-diagonal entry contributes
/// twice to x^T A x.
class CoefMatrix {
 public:
  struct Entry {
    int i = 0;
    int j = 0;
    double value = 0.0;
    bool operator==(const Entry&) const = default;
  };

  class Builder {
   public:
    explicit Builder(std::size_t n) : n_(n) {}

    /// Adds the bilinear term coef * x_a * x_b.
    Builder& add_bilinear(int a, int b, double coef) {
      check(a);
      check(b);
      if (a == b) {
        acc_[{a, a}] += coef;
      } else {
        acc_[{std::min(a, b), std::max(a, b)}] += 0.5 * coef;
      }
      return *this;
    }

    /// Adds `value` to the symmetric pair (i,j),(j,i) of the full matrix.
    Builder& add_entry(int i, int j, double value) {
      check(i);
      check(j);
      acc_[{std::min(i, j), std::max(i, j)}] += value;
      return *this;
    }

    CoefMatrix build() const {
      CoefMatrix m;
      m.n_ = n_;
      for (const auto& [ij, v] : acc_)
        if (v != 0.0) m.entries_.push_back({ij.first, ij.second, v});
      return m;
    }

   private:
    void check(int k) const {
      if (k < 0 || static_cast<std::size_t>(k) >= n_)
        throw std::out_of_range("CoefMatrix::Builder: index out of range");
    }
    std::size_t n_;
    std::map<std::pair<int, int>, double> acc_;
  };

  CoefMatrix() = default;
  explicit CoefMatrix(std::size_t n) : n_(n) {}

  std::size_t dim() const { return n_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Full-matrix entry A(i, j).
  double at(int i, int j) const {
    if (i > j) std::swap(i, j);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{i, j},
                               [](const Entry& e, const std::pair<int, int>& k) {
                                 return std::pair{e.i, e.j} < k;
                               });
    return (it != entries_.end() && it->i == i && it->j == j) ? it->value : 0.0;
  }

  /// x^T A x for a single vector.
  double quad(std::span<const double> x) const {
    double s = 0.0;
    for (const Entry& e : entries_)
      s += (e.i == e.j ? e.value : 2.0 * e.value) * x[e.i] * x[e.j];
    return s;
  }

  bool operator==(const CoefMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Entry> entries_;
};

/// tr(A R R^T) = sum over columns of x_c^T A x_c, in O(nnz * r).
inline double trace_quadform(const CoefMatrix& A, const Factor& R,
                             OpCounter* counter = nullptr) {
  if (A.dim() != R.rows())
    throw std::invalid_argument("trace_quadform: dimension mismatch");
  double total = 0.0;
  for (std::size_t c = 0; c < R.cols(); ++c) {
    const auto x = R.col(c);
    for (const auto& e : A.entries()) {
      double v = e.value;
      if (e.i != e.j) {
        v *= 2.0;
        if (counter) ++counter->doublings;
      }
      total += v * x[e.i] * x[e.j];
      if (counter) ++counter->multiply_adds;
    }
  }
  return total;
}

/// Coordinate-list dump, one "i j value" line per stored entry, zero-based.
inline void dump(std::ostream& os, const CoefMatrix& A) {
  const auto old = os.precision(17);
  for (const auto& e : A.entries()) os << e.i << ' ' << e.j << ' ' << e.value << '\n';
  os.precision(old);
}

}  // namespace lropf
