#include "semeig/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace semeig {

namespace {

// A direction whose norm after orthogonalization falls below this fraction
// of ‖A‖ (or of the block's original norm) is treated as lost.
constexpr double kRankTol = 1e-10;

SpmmOptions spmm_options(const SolverConfig& cfg) {
  SpmmOptions o;
  o.workers = cfg.ops.workers;
  o.cache_budget = cfg.spmm_cache_budget;
  return o;
}

std::vector<std::uint32_t> col_range(std::size_t first, std::size_t count) {
  std::vector<std::uint32_t> c(count);
  for (std::size_t i = 0; i < count; ++i) c[i] = static_cast<std::uint32_t>(first + i);
  return c;
}

double column_norm(const SmallMatrix& m, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

void check_store(const SparseTileMatrix& a, const DenseStore& store) {
  const std::uint32_t tile = a.tile_dims().tile_rows;
  if (store.interval_rows() < tile || store.interval_rows() % tile != 0) {
    throw std::invalid_argument("row interval size " + std::to_string(store.interval_rows()) +
                                " must be a multiple of the tile size " + std::to_string(tile));
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (block_size == 0) throw std::invalid_argument("block size must be positive");
  if (num_blocks < 2) throw std::invalid_argument("need at least two blocks");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const std::size_t m = subspace_size();
  if (m < 2 * k) {
    throw std::invalid_argument("subspace size " + std::to_string(m) + " must be at least 2k = " +
                                std::to_string(2 * k));
  }
  if (kept_columns() >= m) {
    throw std::invalid_argument("subspace size " + std::to_string(m) + " leaves no room beyond the " +
                                std::to_string(kept_columns()) + " kept columns");
  }
}

void SolverConfig::validate(std::uint64_t n) const {
  validate();
  if (subspace_size() > n) {
    throw std::invalid_argument("subspace size " + std::to_string(subspace_size()) +
                                " exceeds the matrix order " + std::to_string(n));
  }
}

KrylovSubspace::KrylovSubspace(DenseStore& store, std::uint64_t n, const SolverConfig& cfg)
    : store_(store), cfg_(cfg), n_(n), b_(cfg.block_size), m_(cfg.subspace_size()) {
  cfg_.validate(n);
  t_ = SmallMatrix(m_, m_);
  c_ = SmallMatrix(b_, m_);
}

std::uint64_t KrylovSubspace::next_seed() {
  return cfg_.seed ^ (0x9e3779b97f4a7c15ULL * (++seed_counter_));
}

void KrylovSubspace::start_random(std::uint64_t seed) {
  vr_ = store_.create(n_, static_cast<std::uint32_t>(b_));
  cache_policy(store_, *vr_);
  mv_random(vr_, seed, cfg_.ops);
  vr_null_.assign(b_, false);
  orthonormalize(vr_, {}, vr_null_);
  blocks_.clear();
  p_ = locked_ = 0;
  t_ = SmallMatrix(m_, m_);
  c_ = SmallMatrix(b_, m_);
  if (cfg_.check_orthogonality) record_ortho_check();
}

void KrylovSubspace::start_with(const ColumnView& v0) {
  if (v0.n_cols() != b_ || v0.n_rows() != n_) throw std::invalid_argument("start block must be n×b");
  vr_ = store_.create(n_, static_cast<std::uint32_t>(b_));
  cache_policy(store_, *vr_);
  const auto cols = col_range(0, b_);
  set_block(vr_, cols, v0, cfg_.ops);
  vr_null_.assign(b_, false);
  orthonormalize(vr_, {}, vr_null_);
  blocks_.clear();
  p_ = locked_ = 0;
  t_ = SmallMatrix(m_, m_);
  c_ = SmallMatrix(b_, m_);
  if (cfg_.check_orthogonality) record_ortho_check();
}

void KrylovSubspace::replace_columns(const TasPtr& w, const std::vector<std::uint32_t>& cols,
                                     const std::vector<ColumnView>& basis, std::vector<bool>& null_cols) {
  const std::size_t nz = cols.size();
  TasPtr z = store_.create(n_, static_cast<std::uint32_t>(nz));
  mv_random(z, next_seed(), cfg_.ops);
  const ColumnView zv(z);
  const auto norm0 = mv_norm(zv, cfg_.ops);
  const double scale = *std::max_element(norm0.begin(), norm0.end());

  // w's replaced columns are zero at this point and contribute nothing.
  std::vector<ColumnView> against = basis;
  against.emplace_back(w);
  for (int pass = 0; pass < 2; ++pass) {
    const SmallMatrix x = mv_trans_mv(1.0, against, zv, cfg_.ops);
    mv_times_mat_add_mv(-1.0, against, x, 1.0, z, cfg_.ops);
  }

  const SmallMatrix g = mv_trans_mv(1.0, std::span(&zv, 1), zv, cfg_.ops);
  const ProjectedEigen e = jacobi_eigen(g);
  SmallMatrix mix(nz, nz);
  for (std::size_t i = 0; i < nz; ++i) {
    const double s = std::sqrt(std::max(e.values[i], 0.0));
    if (s > kRankTol * scale) {
      for (std::size_t r = 0; r < nz; ++r) mix(r, i) = e.vectors(r, i) / s;
    } else {
      null_cols[cols[i]] = true;  // nothing orthogonal is left to draw from
    }
  }
  mv_times_mat_add_mv(1.0, std::span(&zv, 1), mix, 0.0, z, cfg_.ops);
  set_block(w, cols, zv, cfg_.ops);
}

KrylovSubspace::OrthoResult KrylovSubspace::orthonormalize(const TasPtr& w,
                                                           const std::vector<ColumnView>& basis,
                                                           std::vector<bool>& null_cols) {
  const std::size_t b = w->n_cols();
  std::size_t pb = 0;
  for (const auto& v : basis) pb += v.n_cols();
  OrthoResult res{SmallMatrix(pb, b), SmallMatrix::identity(b)};
  const ColumnView wv(w);
  const std::span<const ColumnView> self(&wv, 1);

  const auto norm0 = mv_norm(wv, cfg_.ops);
  const double wmax = *std::max_element(norm0.begin(), norm0.end());
  double scale = std::max(anorm_, wmax);
  if (scale == 0.0) scale = 1.0;

  // Invariant from here on: W_in = basis·H + W·R.
  auto gs_pass = [&] {
    const SmallMatrix x = mv_trans_mv(1.0, basis, wv, cfg_.ops);
    mv_times_mat_add_mv(-1.0, basis, x, 1.0, w, cfg_.ops);
    res.h = res.h + x * res.r;
    return x.max_abs();
  };
  if (pb > 0) {
    gs_pass();
    gs_pass();
  }

  const SmallMatrix g = mv_trans_mv(1.0, self, wv, cfg_.ops);
  const ProjectedEigen e = jacobi_eigen(g);
  SmallMatrix mix(b, b);
  SmallMatrix r(b, b);
  std::vector<std::uint32_t> bad;
  double s_min = 0.0;
  double s_max = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double s = std::sqrt(std::max(e.values[i], 0.0));
    if (s > kRankTol * scale) {
      for (std::size_t k = 0; k < b; ++k) {
        mix(k, i) = e.vectors(k, i) / s;
        r(i, k) = s * e.vectors(k, i);
      }
      s_min = s_min == 0.0 ? s : std::min(s_min, s);
      s_max = std::max(s_max, s);
    } else {
      bad.push_back(static_cast<std::uint32_t>(i));
    }
  }
  mv_times_mat_add_mv(1.0, self, mix, 0.0, w, cfg_.ops);
  res.r = r;

  bool polish = !bad.empty() || (s_min > 0.0 && (scale / s_min > 1e3 || s_max / s_min > 30.0));
  if (!bad.empty()) {
    breakdowns_ += bad.size();
    replace_columns(w, bad, basis, null_cols);
  }

  for (int round = 0; polish && round < 3; ++round) {
    const double drift = pb > 0 ? gs_pass() : 0.0;
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < b; ++i)
      if (!null_cols[i]) live.push_back(i);
    const SmallMatrix gw = mv_trans_mv(1.0, self, wv, cfg_.ops);
    SmallMatrix gl(live.size(), live.size());
    for (std::size_t j = 0; j < live.size(); ++j)
      for (std::size_t i = 0; i < live.size(); ++i) gl(i, j) = gw(live[i], live[j]);
    const ProjectedEigen el = jacobi_eigen(gl);
    SmallMatrix m_full = SmallMatrix::identity(b);
    SmallMatrix r_full = SmallMatrix::identity(b);
    double dev = 0.0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (el.values[i] <= 0.25) throw NumericalError("orthonormalization lost a direction during polishing");
      dev = std::max(dev, std::abs(el.values[i] - 1.0));
    }
    // Löwdin step: W ← W·G^{-1/2}, R ← G^{1/2}·R.
    for (std::size_t j = 0; j < live.size(); ++j)
      for (std::size_t i = 0; i < live.size(); ++i) {
        double mh = 0.0;
        double ph = 0.0;
        for (std::size_t k = 0; k < live.size(); ++k) {
          const double uu = el.vectors(i, k) * el.vectors(j, k);
          const double s = std::sqrt(el.values[k]);
          mh += uu / s;
          ph += uu * s;
        }
        m_full(live[i], live[j]) = mh;
        r_full(live[i], live[j]) = ph;
      }
    mv_times_mat_add_mv(1.0, self, m_full, 0.0, w, cfg_.ops);
    res.r = r_full * res.r;
    polish = drift > 1e-12 || dev > 1e-12;
  }
  anorm_ = std::max(anorm_, wmax);
  return res;
}

void KrylovSubspace::expand(const SparseTileMatrix& a, std::size_t steps) {
  check_store(a, store_);
  if (a.n_rows() != n_ || a.n_cols() != n_) throw std::invalid_argument("matrix order does not match subspace");
  for (std::size_t step = 0; step < steps && !full(); ++step) {
    const std::size_t p = p_;
    blocks_.emplace_back(vr_);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t i = 0; i < b_; ++i) {
        t_(p + i, j) = c_(i, j);
        t_(j, p + i) = c_(i, j);
      }

    const DenseBlockMem x = load_block(ColumnView(vr_), cfg_.ops);
    const DenseBlockMem y = spmm(a, x, spmm_options(cfg_));
    TasPtr w = store_.create(n_, static_cast<std::uint32_t>(b_));
    cache_policy(store_, *w);
    store_block(y, w, cfg_.ops);

    std::vector<bool> null_cols(b_, false);
    const OrthoResult o = orthonormalize(w, blocks_, null_cols);
    for (std::size_t j = 0; j < b_; ++j)
      for (std::size_t i = 0; i < b_; ++i) t_(p + i, p + j) = 0.5 * (o.h(p + i, j) + o.h(p + j, i));
    for (std::size_t j = 0; j < b_; ++j) anorm_ = std::max(anorm_, std::abs(t_(p + j, p + j)));

    c_ = SmallMatrix(b_, m_);
    c_.set_block(0, p, o.r);
    vr_ = w;
    vr_null_ = null_cols;
    p_ += b_;
    if (cfg_.check_orthogonality) record_ortho_check();
  }
}

void KrylovSubspace::restart(const ProjectedEigen& eig, const std::vector<std::size_t>& order,
                             std::size_t newly_converged, const std::vector<double>& converged_residuals) {
  const std::size_t lk = locked_;
  const std::size_t p = p_;
  const std::size_t keep = cfg_.kept_columns();
  if (keep <= lk || order.size() < keep - lk || newly_converged > keep - lk ||
      converged_residuals.size() != newly_converged) {
    throw std::invalid_argument("restart: inconsistent selection");
  }
  const std::size_t na = p - lk;
  SmallMatrix y(p, keep);
  std::vector<double> theta(keep);
  for (std::size_t i = 0; i < lk; ++i) {
    y(i, i) = 1.0;
    theta[i] = t_(i, i);
  }
  for (std::size_t j = 0; j < keep - lk; ++j) {
    for (std::size_t r = 0; r < na; ++r) y(lk + r, lk + j) = eig.vectors(r, order[j]);
    theta[lk + j] = eig.values[order[j]];
  }
  const SmallMatrix yty = y.transpose() * y - SmallMatrix::identity(keep);
  if (yty.max_abs() > 1e-10) throw NumericalError("restart: Ritz vectors are not orthonormal");

  TasPtr x = store_.create(n_, static_cast<std::uint32_t>(keep));
  mv_times_mat_add_mv(1.0, blocks_, y, 0.0, x, cfg_.ops);
  const SmallMatrix cy = coupling() * y;

  blocks_.clear();
  for (std::size_t q = 0; q < keep / b_; ++q) blocks_.push_back(clone_view(x, col_range(q * b_, b_)));
  t_ = SmallMatrix(m_, m_);
  for (std::size_t i = 0; i < keep; ++i) t_(i, i) = theta[i];
  c_ = SmallMatrix(b_, m_);
  c_.set_block(0, 0, cy);
  locked_ = lk + newly_converged;
  for (std::size_t j = 0; j < locked_; ++j)
    for (std::size_t i = 0; i < b_; ++i) c_(i, j) = 0.0;
  locked_residuals_.insert(locked_residuals_.end(), converged_residuals.begin(), converged_residuals.end());
  p_ = keep;

  // Residual columns that had no complement left get a fresh start now
  // that the subspace has room again; their coupling is already zero.
  std::vector<std::uint32_t> dead;
  for (std::size_t i = 0; i < b_; ++i)
    if (vr_null_[i]) dead.push_back(static_cast<std::uint32_t>(i));
  if (!dead.empty()) {
    std::vector<bool> still(b_, false);
    replace_columns(vr_, dead, blocks_, still);
    vr_null_ = still;
    breakdowns_ += dead.size();
  }
  if (cfg_.check_orthogonality) record_ortho_check();
}

double KrylovSubspace::orthogonality_error() const {
  std::vector<ColumnView> all = blocks_;
  std::vector<std::uint32_t> live;
  for (std::size_t i = 0; i < b_; ++i)
    if (!vr_null_[i]) live.push_back(static_cast<std::uint32_t>(i));
  if (vr_ && !live.empty()) all.emplace_back(vr_, live);
  double err = 0.0;
  std::size_t row0 = 0;
  std::size_t total = 0;
  for (const auto& v : all) total += v.n_cols();
  for (const auto& v : all) {
    const SmallMatrix g = mv_trans_mv(1.0, all, v, cfg_.ops);
    for (std::size_t j = 0; j < v.n_cols(); ++j)
      for (std::size_t i = 0; i < total; ++i) {
        const double expect = i == row0 + j ? 1.0 : 0.0;
        err = std::max(err, std::abs(g(i, j) - expect));
      }
    row0 += v.n_cols();
  }
  return err;
}

void KrylovSubspace::record_ortho_check() { ortho_checks_.push_back(orthogonality_error()); }

void KrylovSubspace::ritz_vectors(const SmallMatrix& y, const TasPtr& out) const {
  if (y.rows() != p_ || y.cols() != out->n_cols()) throw std::invalid_argument("ritz_vectors: shape mismatch");
  mv_times_mat_add_mv(1.0, blocks_, y, 0.0, out, cfg_.ops);
}

ResidualCheck residual_and_test(const SparseTileMatrix& a, const KrylovSubspace& s,
                                const std::vector<double>& theta, const SmallMatrix& y, double tol,
                                const SolverConfig& cfg, DenseStore& store) {
  const std::size_t q = theta.size();
  if (y.cols() != q) throw std::invalid_argument("residual_and_test: theta/y mismatch");
  ResidualCheck out;
  if (q == 0) return out;
  TasPtr x = store.create(s.n(), static_cast<std::uint32_t>(q));
  s.ritz_vectors(y, x);
  const DenseBlockMem ax_mem = spmm(a, load_block(ColumnView(x), cfg.ops), spmm_options(cfg));
  TasPtr ax = store.create(s.n(), static_cast<std::uint32_t>(q));
  store_block(ax_mem, ax, cfg.ops);
  const TasPtr xt = mv_scale(store, ColumnView(x), theta, cfg.ops);
  mv_add_mv(1.0, ColumnView(ax), -1.0, ColumnView(xt), ax, cfg.ops);
  out.residuals = mv_norm(ColumnView(ax), cfg.ops);
  out.converged.resize(q);
  for (std::size_t i = 0; i < q; ++i)
    out.converged[i] = out.residuals[i] <= tol * std::max(1.0, std::abs(theta[i]));
  return out;
}

void check_symmetric(const SparseTileMatrix& a, std::uint64_t seed, std::size_t max_probes) {
  if (a.n_rows() != a.n_cols()) throw std::invalid_argument("matrix is not square");
  const std::size_t ntr = a.n_tile_rows();
  const std::uint32_t tr = a.tile_dims().tile_rows;
  const std::uint32_t tc = a.tile_dims().tile_cols;
  std::mt19937_64 gen(seed ^ 0x5f3759dfULL);

  std::map<std::size_t, std::vector<Triplet>> rows;  // decoded tile rows, sorted
  auto tile_row = [&](std::size_t id) -> const std::vector<Triplet>& {
    auto it = rows.find(id);
    if (it != rows.end()) return it->second;
    std::vector<Triplet> t;
    for (const auto& tile : a.read_tile_row(id))
      for (const auto& e : tile.entries)
        t.push_back({std::uint64_t{id} * tr + e.row, std::uint64_t{tile.tile_col} * tc + e.col, e.value});
    std::sort(t.begin(), t.end());
    return rows.emplace(id, std::move(t)).first->second;
  };

  std::vector<std::size_t> sample(ntr);
  std::iota(sample.begin(), sample.end(), std::size_t{0});
  std::shuffle(sample.begin(), sample.end(), gen);
  if (sample.size() > 16) sample.resize(16);

  std::size_t probes = 0;
  const std::size_t per_row = std::max<std::size_t>(1, max_probes / std::max<std::size_t>(1, sample.size()));
  for (std::size_t id : sample) {
    const std::vector<Triplet> entries = tile_row(id);
    std::vector<std::size_t> pick(entries.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    if (pick.size() > per_row) {
      std::shuffle(pick.begin(), pick.end(), gen);
      pick.resize(per_row);
    }
    for (std::size_t i : pick) {
      if (probes++ >= max_probes) return;
      const Triplet& e = entries[i];
      const auto& mirror = tile_row(e.col / tr);
      const Triplet key{e.col, e.row, 0.0};
      auto it = std::lower_bound(mirror.begin(), mirror.end(), key, [](const Triplet& x, const Triplet& y) {
        return x.row != y.row ? x.row < y.row : x.col < y.col;
      });
      if (it == mirror.end() || it->row != e.col || it->col != e.row || it->value != e.value) {
        throw std::invalid_argument("matrix is not symmetric: entry (" + std::to_string(e.row) + ", " +
                                    std::to_string(e.col) + ") has no matching transpose entry");
      }
    }
  }
}

SolveResult solve(const SparseTileMatrix& a, const SolverConfig& cfg, DenseStore& store,
                  const std::filesystem::path& eigvec_path) {
  if (a.n_rows() != a.n_cols()) throw std::invalid_argument("matrix is not square");
  const std::uint64_t n = a.n_rows();
  cfg.validate(n);
  check_store(a, store);
  if (!cfg.assume_symmetric) check_symmetric(a, cfg.seed);

  const std::size_t b = cfg.block_size;
  const std::size_t k = cfg.k;
  KrylovSubspace s(store, n, cfg);
  s.start_random(cfg.seed);

  SolveResult res;
  std::size_t checks_seen = s.ortho_checks().size();
  for (std::size_t iteration = 1;; ++iteration) {
    s.expand(a, (s.capacity() - s.size()) / b);
    const std::size_t lk = s.locked();
    const std::size_t p = s.size();
    const std::size_t na = p - lk;
    const ProjectedEigen eig = solve_projected(s.active_projected(), cfg.which);
    const SmallMatrix ca = s.coupling().block(0, lk, b, na);
    const SmallMatrix tp = s.projected();

    // Wanted set: the k best of the locked and active Ritz values. A locked
    // pair can drop out of it when a better one shows up later.
    std::vector<double> all_theta;
    std::vector<int> all_src;  // < 0: locked column -1-i; >= 0: active index
    for (std::size_t i = 0; i < lk; ++i) {
      all_theta.push_back(tp(i, i));
      all_src.push_back(-1 - static_cast<int>(i));
    }
    for (std::size_t j = 0; j < na; ++j) {
      all_theta.push_back(eig.values[j]);
      all_src.push_back(static_cast<int>(j));
    }
    std::vector<std::size_t> top = order_by(all_theta, cfg.which);
    top.resize(k);
    std::vector<std::size_t> wanted_active;
    for (std::size_t i : top)
      if (all_src[i] >= 0) wanted_active.push_back(static_cast<std::size_t>(all_src[i]));

    std::vector<double> residual(na);
    for (std::size_t j = 0; j < na; ++j) {
      SmallMatrix yj(na, 1);
      for (std::size_t r = 0; r < na; ++r) yj(r, 0) = eig.vectors(r, j);
      residual[j] = column_norm(ca * yj, 0);
    }

    // Cheap screen, then the explicit residual for candidates.
    std::vector<std::size_t> cand;
    for (std::size_t j : wanted_active)
      if (residual[j] <= cfg.tol * std::max(1.0, std::abs(eig.values[j]))) cand.push_back(j);
    std::vector<bool> conv(na, false);
    if (!cand.empty()) {
      SmallMatrix y(p, cand.size());
      std::vector<double> th(cand.size());
      for (std::size_t c = 0; c < cand.size(); ++c) {
        th[c] = eig.values[cand[c]];
        for (std::size_t r = 0; r < na; ++r) y(lk + r, c) = eig.vectors(r, cand[c]);
      }
      const ResidualCheck rc = residual_and_test(a, s, th, y, cfg.tol, cfg, store);
      for (std::size_t c = 0; c < cand.size(); ++c) {
        residual[cand[c]] = rc.residuals[c];
        conv[cand[c]] = rc.converged[c];
      }
    }
    std::vector<std::size_t> newly;
    for (std::size_t j = 0; j < na; ++j)
      if (conv[j]) newly.push_back(j);

    auto theta_of = [&](std::size_t i) { return all_theta[i]; };
    auto residual_of = [&](std::size_t i) {
      return all_src[i] < 0 ? s.locked_residuals()[static_cast<std::size_t>(-1 - all_src[i])]
                            : residual[static_cast<std::size_t>(all_src[i])];
    };
    auto converged_of = [&](std::size_t i) { return all_src[i] < 0 || conv[static_cast<std::size_t>(all_src[i])]; };
    const std::size_t n_conv =
        static_cast<std::size_t>(std::count_if(top.begin(), top.end(), converged_of));

    IterationRecord rec;
    rec.iteration = iteration;
    rec.subspace_cols = p;
    rec.locked = lk;
    rec.converged = n_conv;
    rec.breakdowns = s.breakdowns();
    for (std::size_t i : top) {
      rec.ritz_values.push_back(theta_of(i));
      rec.residuals.push_back(residual_of(i));
    }
    const auto& checks = s.ortho_checks();
    for (std::size_t i = checks_seen; i < checks.size(); ++i) rec.ortho_error = std::max(rec.ortho_error, checks[i]);
    checks_seen = checks.size();
    rec.io = store.io_counters();
    res.log.push_back(rec);

    const bool done = n_conv == k;
    if (done || res.restarts >= cfg.max_restarts) {
      res.converged = done;
      SmallMatrix y(p, k);
      for (std::size_t c = 0; c < k; ++c) {
        const int src = all_src[top[c]];
        if (src < 0) {
          y(static_cast<std::size_t>(-1 - src), c) = 1.0;
        } else {
          for (std::size_t r = 0; r < na; ++r) y(lk + r, c) = eig.vectors(r, static_cast<std::size_t>(src));
        }
      }
      res.eigenvectors = eigvec_path.empty() ? store.create(n, static_cast<std::uint32_t>(k))
                                             : store.create_at(eigvec_path, n, static_cast<std::uint32_t>(k));
      s.ritz_vectors(y, res.eigenvectors);
      res.eigenvectors->flush();
      for (std::size_t c = 0; c < k; ++c) {
        res.pairs.push_back(RitzPair{theta_of(top[c]), residual_of(top[c]), converged_of(top[c]),
                                     clone_view(res.eigenvectors, {static_cast<std::uint32_t>(c)})});
      }
      res.ortho_checks = s.ortho_checks();
      return res;
    }

    // Lock newly converged pairs while leaving at least one active column.
    const std::size_t keep = cfg.kept_columns();
    const std::size_t room = keep > lk + 1 ? keep - lk - 1 : 0;
    if (newly.size() > room) newly.resize(room);
    std::vector<std::size_t> order = newly;
    std::vector<double> newly_res;
    for (std::size_t j : newly) newly_res.push_back(residual[j]);
    for (std::size_t j = 0; j < na; ++j)
      if (std::find(newly.begin(), newly.end(), j) == newly.end()) order.push_back(j);
    s.restart(eig, order, newly.size(), newly_res);
    ++res.restarts;
  }
}

}  // namespace semeig
