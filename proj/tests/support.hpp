#pragma once

// Helpers shared by the test binaries: scratch directories, random
// generators and naive oracles that do not go through the library code
// they check.

#include "semeig/dense_store.hpp"
#include "semeig/small_matrix.hpp"
#include "semeig/sparse_format.hpp"
#include "semeig/spmm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "semeig-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_); }
  bool coin(double p) { return std::bernoulli_distribution(p)(gen_); }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// Distinct (row, col) triplets sorted by (row, col).
inline std::vector<semeig::Triplet> random_triplets(std::uint64_t rows, std::uint64_t cols, double density,
                                                    Rng& rng, bool weighted) {
  const std::uint64_t target = static_cast<std::uint64_t>(density * static_cast<double>(rows * cols));
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  while (seen.size() < target) seen.insert({rng.below(rows), rng.below(cols)});
  std::vector<semeig::Triplet> out;
  for (const auto& [r, c] : seen) {
    double v = 1.0;
    if (weighted) {
      do v = rng.uniform(-4.0, 4.0);
      while (v == 0.0);
    }
    out.push_back({r, c, v});
  }
  return out;
}

/// Symmetric triplets (both (i,j) and (j,i) present with equal value).
inline std::vector<semeig::Triplet> random_symmetric_triplets(std::uint64_t n, double density, Rng& rng,
                                                              bool weighted) {
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  const std::uint64_t target = static_cast<std::uint64_t>(density * static_cast<double>(n * n) / 2.0);
  while (seen.size() < target) {
    std::uint64_t i = rng.below(n);
    std::uint64_t j = rng.below(n);
    if (i > j) std::swap(i, j);
    seen.insert({i, j});
  }
  std::vector<semeig::Triplet> out;
  for (const auto& [i, j] : seen) {
    double v = 1.0;
    if (weighted) {
      do v = rng.uniform(-4.0, 4.0);
      while (v == 0.0);
    }
    out.push_back({i, j, v});
    if (i != j) out.push_back({j, i, v});
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<semeig::Edge> to_edges(const std::vector<semeig::Triplet>& t) {
  std::vector<semeig::Edge> e;
  e.reserve(t.size());
  for (const auto& x : t) e.push_back({x.row, x.col, x.value});
  return e;
}

/// Builds a matrix file holding exactly these triplets (no symmetrization).
inline semeig::SparseTileMatrix write_matrix(const fs::path& path, std::uint64_t n,
                                             const std::vector<semeig::Triplet>& t, std::uint32_t tile,
                                             bool weighted = true) {
  semeig::BuildOptions opt;
  opt.tile_dims = semeig::TileDims::square(tile);
  opt.value_kind = weighted ? semeig::ValueKind::float64 : semeig::ValueKind::binary;
  const auto edges = to_edges(t);
  semeig::build_matrix(edges, n, opt, path);
  return semeig::SparseTileMatrix::open(path);
}

/// Row-major dense matrix.
struct Dense {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;
  Dense() = default;
  Dense(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Dense random_dense(std::size_t rows, std::size_t cols, Rng& rng) {
  Dense d(rows, cols);
  for (double& x : d.v) x = rng.uniform();
  return d;
}

/// Y = A·X with each output row summed from zero in increasing column order.
inline Dense naive_spmm(const std::vector<semeig::Triplet>& sorted, std::size_t n_rows, const Dense& x) {
  Dense y(n_rows, x.cols);
  for (const auto& t : sorted)
    for (std::size_t c = 0; c < x.cols; ++c) y(t.row, c) += t.value * x(t.col, c);
  return y;
}

inline semeig::DenseBlockMem to_block(const Dense& d, std::size_t interval_rows) {
  semeig::DenseBlockMem m(d.rows, d.cols, interval_rows, semeig::Layout::row_major);
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t j = 0; j < d.cols; ++j) m.at(i, j) = d(i, j);
  return m;
}

inline Dense from_block(const semeig::DenseBlockMem& m) {
  Dense d(m.n_rows(), m.n_cols());
  for (std::size_t i = 0; i < d.rows; ++i)
    for (std::size_t j = 0; j < d.cols; ++j) d(i, j) = m.at(i, j);
  return d;
}

/// Writes d into a TAS file through write_interval only.
inline void fill_tas(const semeig::TasPtr& m, const Dense& d) {
  for (std::size_t id = 0; id < m->interval_count(); ++id) {
    semeig::RowIntervalBuf buf;
    buf.interval_id = id;
    buf.first_row = m->first_row(id);
    buf.n_rows = m->rows_in_interval(id);
    for (std::uint32_t c = 0; c < m->n_cols(); ++c) buf.cols.push_back(c);
    buf.data.resize(buf.n_rows * m->n_cols());
    for (std::size_t c = 0; c < m->n_cols(); ++c)
      for (std::size_t r = 0; r < buf.n_rows; ++r) buf.at(r, c) = d(buf.first_row + r, c);
    m->write_interval(buf);
  }
}

inline Dense read_tas(const semeig::TasMatrix& m) {
  Dense d(m.n_rows(), m.n_cols());
  for (std::size_t id = 0; id < m.interval_count(); ++id) {
    const auto buf = m.read_interval(id);
    for (std::size_t c = 0; c < m.n_cols(); ++c)
      for (std::size_t r = 0; r < buf.n_rows; ++r) d(buf.first_row + r, c) = buf.at(r, c);
  }
  return d;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  if (a.rows != b.rows || a.cols != b.cols) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

inline double frobenius(const Dense& a) {
  double s = 0.0;
  for (double x : a.v) s += x * x;
  return std::sqrt(s);
}

inline double rel_frobenius_error(const Dense& got, const Dense& want) {
  double num = 0.0;
  for (std::size_t i = 0; i < got.v.size(); ++i) num += (got.v[i] - want.v[i]) * (got.v[i] - want.v[i]);
  const double den = frobenius(want);
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / den;
}

/// Dense symmetric eigenvalues from Eigen's self-adjoint solver, ascending.
inline std::vector<double> dense_eigenvalues(const std::vector<semeig::Triplet>& t, std::size_t n) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& x : t) a(static_cast<Eigen::Index>(x.row), static_cast<Eigen::Index>(x.col)) += x.value;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
  return out;
}

/// The k largest-magnitude values of an ascending spectrum, sorted by
/// decreasing magnitude.
inline std::vector<double> top_magnitude(std::vector<double> ev, std::size_t k) {
  std::stable_sort(ev.begin(), ev.end(), [](double a, double b) { return std::abs(a) > std::abs(b); });
  ev.resize(std::min(k, ev.size()));
  return ev;
}

/// Worst deviation of `got` from the k largest-magnitude eigenvalues of an
/// ascending spectrum. Each value is paired with a distinct eigenvalue, and
/// the magnitudes must match the top k; either sign is accepted when two
/// eigenvalues of equal magnitude straddle the cut.
inline double top_magnitude_error(std::vector<double> got, const std::vector<double>& spectrum) {
  const std::size_t k = got.size();
  std::vector<double> want_mag;
  for (double v : top_magnitude(spectrum, k)) want_mag.push_back(std::abs(v));
  std::vector<double> got_mag;
  for (double v : got) got_mag.push_back(std::abs(v));
  std::sort(want_mag.begin(), want_mag.end());
  std::sort(got_mag.begin(), got_mag.end());
  double err = 0.0;
  for (std::size_t i = 0; i < k; ++i) err = std::max(err, std::abs(got_mag[i] - want_mag[i]));
  std::vector<bool> used(spectrum.size(), false);
  std::sort(got.begin(), got.end());
  for (double v : got) {
    std::size_t best = spectrum.size();
    for (std::size_t i = 0; i < spectrum.size(); ++i)
      if (!used[i] && (best == spectrum.size() || std::abs(spectrum[i] - v) < std::abs(spectrum[best] - v))) best = i;
    if (best == spectrum.size()) return INFINITY;
    used[best] = true;
    err = std::max(err, std::abs(spectrum[best] - v));
  }
  return err;
}

/// Graph edge lists for known spectra.
inline std::vector<semeig::Edge> complete_graph(std::uint64_t n) {
  std::vector<semeig::Edge> e;
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = i + 1; j < n; ++j) e.push_back({i, j, 1.0});
  return e;
}

inline std::vector<semeig::Edge> cycle_graph(std::uint64_t n) {
  std::vector<semeig::Edge> e;
  for (std::uint64_t i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0});
  return e;
}

inline semeig::SparseTileMatrix write_graph(const fs::path& path, std::uint64_t n,
                                            const std::vector<semeig::Edge>& edges, std::uint32_t tile = 16) {
  semeig::BuildOptions opt;
  opt.symmetrize = true;
  opt.tile_dims = semeig::TileDims::square(tile);
  semeig::build_matrix(edges, n, opt, path);
  return semeig::SparseTileMatrix::open(path);
}

}  // namespace testing
