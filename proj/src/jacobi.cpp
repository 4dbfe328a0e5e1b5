#include "semeig/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace semeig {

const char* to_string(Which which) {
  switch (which) {
    case Which::largest_magnitude: return "LM";
    case Which::largest_algebraic: return "LA";
    case Which::smallest_algebraic: return "SA";
  }
  return "?";
}

Which parse_which(const std::string& s) {
  if (s == "LM" || s == "largest_magnitude") return Which::largest_magnitude;
  if (s == "LA" || s == "largest_algebraic") return Which::largest_algebraic;
  if (s == "SA" || s == "smallest_algebraic") return Which::smallest_algebraic;
  throw std::invalid_argument("unknown eigenvalue selection: " + s);
}

ProjectedEigen jacobi_eigen(const SmallMatrix& t, std::size_t max_sweeps) {
  const std::size_t n = t.rows();
  if (t.cols() != n) throw std::invalid_argument("jacobi_eigen: matrix is not square");
  SmallMatrix a = t;
  SmallMatrix v = SmallMatrix::identity(n);

  const double scale = a.frobenius();
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < j; ++i) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  bool done = scale == 0.0 || n < 2;
  for (std::size_t sweep = 0; !done && sweep < max_sweeps; ++sweep) {
    if (off_norm() <= 1e-16 * scale) {
      done = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Negligible against both diagonal entries: zero it outright.
        const double app = a(p, p);
        const double aqq = a(q, q);
        if (sweep > 3 && std::abs(app) + 1e3 * std::abs(apq) == std::abs(app) &&
            std::abs(aqq) + 1e3 * std::abs(apq) == std::abs(aqq)) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double tn = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(tn * tn + 1.0);
        const double s = tn * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!done && off_norm() > 1e-16 * scale)
    throw NumericalError("jacobi_eigen: no convergence after " + std::to_string(max_sweeps) + " sweeps");

  ProjectedEigen out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
  out.vectors = std::move(v);
  return out;
}

std::vector<std::size_t> order_by(const std::vector<double>& values, Which which) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    switch (which) {
      case Which::largest_magnitude: return std::abs(values[x]) > std::abs(values[y]);
      case Which::largest_algebraic: return values[x] > values[y];
      case Which::smallest_algebraic: return values[x] < values[y];
    }
    return false;
  });
  return idx;
}

ProjectedEigen solve_projected(const SmallMatrix& t, Which which) {
  const std::size_t n = t.rows();
  if (t.cols() != n) throw std::invalid_argument("solve_projected: matrix is not square");
  SmallMatrix sym(n, n);
  double asym = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      sym(i, j) = 0.5 * (t(i, j) + t(j, i));
      asym = std::max(asym, std::abs(t(i, j) - t(j, i)));
    }
  if (asym > 1e-10 * std::max(1.0, t.max_abs()))
    throw NumericalError("solve_projected: projected matrix is not symmetric");

  ProjectedEigen raw = jacobi_eigen(sym);
  const auto order = order_by(raw.values, which);
  ProjectedEigen out;
  out.values.resize(n);
  out.vectors = SmallMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = raw.values[order[k]];
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = raw.vectors(i, order[k]);
  }
  return out;
}

}  // namespace semeig
