#include "mpopf/eig.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mpopf {

namespace {

// Householder reduction to tridiagonal form. On exit `a` holds the
// accumulated orthogonal transform, `d` the diagonal and `e` the
// subdiagonal (e[0] unused).
void tridiagonalize(Eigen::MatrixXd& a, Eigen::VectorXd& d, Eigen::VectorXd& e) {
  const int n = static_cast<int>(a.rows());
  for (int i = n - 1; i > 0; --i) {
    const int l = i - 1;
    double h = 0.0;
    double scale = 0.0;
    if (l > 0) {
      for (int k = 0; k <= l; ++k) scale += std::abs(a(i, k));
      if (scale == 0.0) {
        e(i) = a(i, l);
      } else {
        for (int k = 0; k <= l; ++k) {
          a(i, k) /= scale;
          h += a(i, k) * a(i, k);
        }
        double f = a(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e(i) = scale * g;
        h -= f * g;
        a(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j <= l; ++j) {
          a(j, i) = a(i, j) / h;
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
          for (int k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
          e(j) = g / h;
          f += e(j) * a(i, j);
        }
        const double hh = f / (h + h);
        for (int j = 0; j <= l; ++j) {
          f = a(i, j);
          g = e(j) - hh * f;
          e(j) = g;
          for (int k = 0; k <= j; ++k) a(j, k) -= f * e(k) + g * a(i, k);
        }
      }
    } else {
      e(i) = a(i, l);
    }
    d(i) = h;
  }
  d(0) = 0.0;
  e(0) = 0.0;
  for (int i = 0; i < n; ++i) {
    const int l = i - 1;
    if (d(i) != 0.0) {
      for (int j = 0; j <= l; ++j) {
        double g = 0.0;
        for (int k = 0; k <= l; ++k) g += a(i, k) * a(k, j);
        for (int k = 0; k <= l; ++k) a(k, j) -= g * a(k, i);
      }
    }
    d(i) = a(i, i);
    a(i, i) = 1.0;
    for (int j = 0; j <= l; ++j) {
      a(j, i) = 0.0;
      a(i, j) = 0.0;
    }
  }
}

// Implicit-shift QL on a tridiagonal matrix, rotations folded into `z`.
bool ql_implicit(Eigen::VectorXd& d, Eigen::VectorXd& e, Eigen::MatrixXd& z) {
  const int n = static_cast<int>(d.size());
  constexpr int kMaxSweeps = 64;
  for (int i = 1; i < n; ++i) e(i - 1) = e(i);
  e(n - 1) = 0.0;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m = l;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d(m)) + std::abs(d(m + 1));
        if (std::abs(e(m)) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (iter++ == kMaxSweeps) return false;
        double g = (d(l + 1) - d(l)) / (2.0 * e(l));
        double r = std::hypot(g, 1.0);
        g = d(m) - d(l) + e(l) / (g + std::copysign(r, g));
        double s = 1.0;
        double c = 1.0;
        double p = 0.0;
        int i = m - 1;
        for (; i >= l; --i) {
          double f = s * e(i);
          const double b = c * e(i);
          r = std::hypot(f, g);
          e(i + 1) = r;
          if (r == 0.0) {
            d(i + 1) -= p;
            e(m) = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d(i + 1) - p;
          r = (d(i) - g) * s + 2.0 * c * b;
          p = s * r;
          d(i + 1) = g + p;
          g = c * r - b;
          for (int k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && i >= l) continue;
        d(l) -= p;
        e(l) = g;
        e(m) = 0.0;
      }
    } while (m != l);
  }
  return true;
}

}  // namespace

SymmetricEigen eigh(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("eigh: matrix must be square");
  const int n = static_cast<int>(m.rows());
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, scale)) {
    throw std::invalid_argument("eigh: matrix is not symmetric");
  }

  SymmetricEigen out;
  if (n == 0) {
    out.values.resize(0);
    out.vectors.resize(0, 0);
    return out;
  }

  Eigen::MatrixXd a = 0.5 * (m + m.transpose());
  Eigen::VectorXd d(n), e(n);
  tridiagonalize(a, d, e);
  if (!ql_implicit(d, e, a)) throw std::runtime_error("eigh: QL iteration did not converge");

  // sort ascending (selection sort, column swaps)
  for (int i = 0; i < n - 1; ++i) {
    int k = i;
    for (int j = i + 1; j < n; ++j) {
      if (d(j) < d(k)) k = j;
    }
    if (k != i) {
      std::swap(d(i), d(k));
      a.col(i).swap(a.col(k));
    }
  }
  out.values = std::move(d);
  out.vectors = std::move(a);
  return out;
}

EigenPair min_eigenpair(const Eigen::MatrixXd& m, double tol) {
  const SymmetricEigen full = eigh(m);
  if (full.values.size() == 0) throw std::invalid_argument("min_eigenpair: empty matrix");
  EigenPair pair;
  pair.value = full.values(0);
  pair.vector = full.vectors.col(0);
  pair.vector.normalize();

  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  double residual = (sym * pair.vector - pair.value * pair.vector).norm();
  if (residual > tol) {
    // one step of Rayleigh-quotient refinement
    pair.value = pair.vector.dot(sym * pair.vector);
    residual = (sym * pair.vector - pair.value * pair.vector).norm();
    if (residual > tol) throw std::runtime_error("min_eigenpair: residual above tolerance");
  }
  return pair;
}

}  // namespace mpopf
