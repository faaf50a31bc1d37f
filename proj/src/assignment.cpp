#include "relaxflow/assignment.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace relaxflow {

namespace {

constexpr std::ptrdiff_t kFree = -1;

// Dense shortest-augmenting-path solver in the Jonker-Volgenant style. Row
// potentials are implicit: u_i = c(i, x_i) - v(x_i).
class Solver {
 public:
  Solver(const double* cost, std::size_t n)
      : c_(cost), n_(n), x_(n, kFree), y_(n, kFree), v_(n), d_(n), pred_(n), cols_(n) {}

  std::vector<std::ptrdiff_t> solve() {
    std::vector<std::size_t> free_rows = column_reduction();
    for (std::size_t i : free_rows) augment(i);
    return x_;
  }

 private:
  double c(std::size_t i, std::size_t j) const { return c_[i * n_ + j]; }

  // Column minima as initial v, then reduction transfer for uniquely
  // assigned rows. Returns the rows left unassigned.
  std::vector<std::size_t> column_reduction() {
    std::vector<std::size_t> argmin(n_, 0);
    for (std::size_t j = 0; j < n_; ++j) {
      v_[j] = c(0, j);
      for (std::size_t i = 1; i < n_; ++i)
        if (c(i, j) < v_[j]) {
          v_[j] = c(i, j);
          argmin[j] = i;
        }
    }
    std::vector<char> unique(n_, 1);
    for (std::size_t j = n_; j-- > 0;) {
      const std::size_t i = argmin[j];
      if (x_[i] == kFree) {
        x_[i] = static_cast<std::ptrdiff_t>(j);
        y_[j] = static_cast<std::ptrdiff_t>(i);
      } else {
        unique[i] = 0;
      }
    }
    std::vector<std::size_t> free_rows;
    for (std::size_t i = 0; i < n_; ++i) {
      if (x_[i] == kFree) {
        free_rows.push_back(i);
      } else if (unique[i] && n_ > 1) {
        const auto j = static_cast<std::size_t>(x_[i]);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n_; ++k)
          if (k != j) best = std::min(best, c(i, k) - v_[k]);
        v_[j] -= best;
      }
    }
    return free_rows;
  }

  // Moves the columns of minimal d in [lo, n) to [lo, hi) and returns hi.
  std::size_t collect_minima(std::size_t lo) {
    std::size_t hi = lo + 1;
    double mind = d_[cols_[lo]];
    for (std::size_t k = lo + 1; k < n_; ++k) {
      const std::size_t j = cols_[k];
      if (d_[j] <= mind) {
        if (d_[j] < mind) {
          hi = lo;
          mind = d_[j];
        }
        cols_[k] = cols_[hi];
        cols_[hi++] = j;
      }
    }
    return hi;
  }

  // Scans rows matched to columns in [lo, hi); returns a free column reached
  // at the current minimal distance, or kFree.
  std::ptrdiff_t scan(std::size_t& lo, std::size_t& hi) {
    while (lo != hi) {
      std::size_t j = cols_[lo++];
      const auto i = static_cast<std::size_t>(y_[j]);
      const double mind = d_[j];
      const double h = c(i, j) - v_[j] - mind;
      const double* row = c_ + i * n_;
      for (std::size_t k = hi; k < n_; ++k) {
        j = cols_[k];
        const double reduced = row[j] - v_[j] - h;
        if (reduced < d_[j]) {
          d_[j] = reduced;
          pred_[j] = i;
          if (reduced == mind) {
            if (y_[j] == kFree) return static_cast<std::ptrdiff_t>(j);
            cols_[k] = cols_[hi];
            cols_[hi++] = j;
          }
        }
      }
    }
    return kFree;
  }

  void augment(std::size_t start) {
    std::iota(cols_.begin(), cols_.end(), std::size_t{0});
    const double* row = c_ + start * n_;
    for (std::size_t j = 0; j < n_; ++j) {
      d_[j] = row[j] - v_[j];
      pred_[j] = start;
    }
    std::size_t lo = 0, hi = 0, ready = 0;
    std::ptrdiff_t end = kFree;
    while (end == kFree) {
      if (lo == hi) {
        ready = lo;
        hi = collect_minima(lo);
        for (std::size_t k = lo; k < hi; ++k)
          if (y_[cols_[k]] == kFree) {
            end = static_cast<std::ptrdiff_t>(cols_[k]);
            break;
          }
      }
      if (end == kFree) end = scan(lo, hi);
    }
    const double mind = d_[static_cast<std::size_t>(end)];
    for (std::size_t k = 0; k < ready; ++k) {
      const std::size_t j = cols_[k];
      v_[j] += d_[j] - mind;
    }
    auto j = static_cast<std::size_t>(end);
    for (;;) {
      const std::size_t i = pred_[j];
      y_[j] = static_cast<std::ptrdiff_t>(i);
      const std::ptrdiff_t previous = x_[i];
      x_[i] = static_cast<std::ptrdiff_t>(j);
      if (i == start) break;
      j = static_cast<std::size_t>(previous);
    }
  }

  const double* c_;
  std::size_t n_;
  std::vector<std::ptrdiff_t> x_, y_;
  std::vector<double> v_, d_;
  std::vector<std::size_t> pred_, cols_;
};

}  // namespace

Assignment solve_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw std::invalid_argument("solve_assignment: non-finite cost");
  const auto n = static_cast<std::size_t>(cost.rows());
  Assignment out;
  if (n == 0) return out;

  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c = cost;
  const auto x = Solver(c.data(), n).solve();
  out.row_to_col.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.row_to_col[i] = static_cast<std::size_t>(x[i]);
    out.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(x[i]));
  }
  return out;
}

}  // namespace relaxflow
