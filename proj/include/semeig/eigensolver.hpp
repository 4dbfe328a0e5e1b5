#pragma once

// Block Krylov-Schur eigensolver for symmetric sparse matrices.
//
// The subspace S = [V_1 … V_NB] lives on disk as n×b TAS blocks. Alongside
// it the solver keeps the Krylov-Schur relation
//
//     A·S = S·T + V_r·C
//
// with T (p×p, symmetric) and C (b×p) in memory and V_r the n×b residual
// block, orthonormal and orthogonal to S. Expansion appends V_r to S and
// orthogonalizes A·V_r to form the next residual block; a restart rotates S
// onto the wanted Ritz vectors, which turns T diagonal and C into a full row
// block.

#include "semeig/dense_ops.hpp"
#include "semeig/small_matrix.hpp"
#include "semeig/sparse_format.hpp"
#include "semeig/spmm.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace semeig {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Which { largest_magnitude, largest_algebraic, smallest_algebraic };

const char* to_string(Which which);
/// Accepts "LM", "LA", "SA" or the long names.
Which parse_which(const std::string& s);

struct SolverConfig {
  std::size_t k = 1;           // eigenpairs wanted
  std::size_t block_size = 1;  // b
  std::size_t num_blocks = 4;  // NB
  double tol = 1e-8;
  std::size_t max_restarts = 200;
  Which which = Which::largest_magnitude;
  std::uint64_t seed = 1;
  bool assume_symmetric = false;
  bool check_orthogonality = false;  // costs one extra pass over S per check
  DenseOpsConfig ops{};
  std::size_t spmm_cache_budget = kDefaultCacheBudget;

  std::size_t subspace_size() const { return block_size * num_blocks; }
  /// Columns kept across a restart: the blocks holding the k wanted pairs
  /// plus half of the remaining blocks, so pairs just past the cut survive.
  std::size_t kept_columns() const {
    const std::size_t wanted = (k + block_size - 1) / block_size;
    const std::size_t spare = num_blocks > wanted ? (num_blocks - wanted) / 2 : 0;
    return (wanted + spare) * block_size;
  }
  /// Throws std::invalid_argument for parameters that cannot work.
  void validate() const;
  void validate(std::uint64_t n) const;
};

struct ProjectedEigen {
  std::vector<double> values;  // sorted per `which`
  SmallMatrix vectors;         // column i pairs with values[i]
};

/// Cyclic Jacobi on a symmetric matrix; eigenvalues in diagonal order.
/// Throws NumericalError if the off-diagonal mass does not vanish within
/// max_sweeps sweeps.
ProjectedEigen jacobi_eigen(const SmallMatrix& t, std::size_t max_sweeps = 64);

/// Indices of values sorted per `which`; ties keep ascending index order.
std::vector<std::size_t> order_by(const std::vector<double>& values, Which which);

/// Symmetrizes t by averaging, checks it was symmetric to 1e-10 (relative),
/// runs Jacobi and sorts the pairs per `which`.
ProjectedEigen solve_projected(const SmallMatrix& t, Which which);

struct RitzPair {
  double theta = 0.0;
  double residual_norm = 0.0;
  bool converged = false;
  ColumnView x;  // n×1 view into the eigenvector matrix (no default)
};

class KrylovSubspace {
 public:
  KrylovSubspace(DenseStore& store, std::uint64_t n, const SolverConfig& cfg);

  /// Random start block (mv_random with `seed`), orthonormalized.
  void start_random(std::uint64_t seed);
  /// Start from the given n×b block, orthonormalized.
  void start_with(const ColumnView& v0);

  /// Runs `steps` block expansions (stops early when the subspace is full).
  void expand(const SparseTileMatrix& a, std::size_t steps);

  /// Contracts S to the kept Ritz vectors. `eig` is the solution of the
  /// active (unlocked) part of T; `order` lists the active pair indices to
  /// keep, converged ones first; the first `newly_converged` of them are
  /// locked.
  void restart(const ProjectedEigen& eig, const std::vector<std::size_t>& order,
               std::size_t newly_converged, const std::vector<double>& converged_residuals);

  std::size_t size() const { return p_; }
  std::size_t capacity() const { return m_; }
  bool full() const { return p_ >= m_; }
  std::size_t locked() const { return locked_; }
  std::uint64_t n() const { return n_; }

  /// Basis blocks, each n×b (views, since a restart writes all kept
  /// columns into one file).
  const std::vector<ColumnView>& blocks() const { return blocks_; }
  const TasPtr& residual_block() const { return vr_; }
  /// Leading p×p block of T.
  SmallMatrix projected() const { return t_.block(0, 0, p_, p_); }
  /// Active (unlocked) part of T.
  SmallMatrix active_projected() const { return t_.block(locked_, locked_, p_ - locked_, p_ - locked_); }
  /// b×p coupling to the residual block.
  SmallMatrix coupling() const { return c_.block(0, 0, b_, p_); }
  const std::vector<double>& locked_residuals() const { return locked_residuals_; }

  /// max |[S V_r]ᵀ[S V_r] − I| over the live columns.
  double orthogonality_error() const;
  /// Orthogonality values measured after each expansion/restart when
  /// cfg.check_orthogonality is set.
  const std::vector<double>& ortho_checks() const { return ortho_checks_; }
  std::size_t breakdowns() const { return breakdowns_; }

  /// Ritz vectors S·Y written into out (n × Y.cols()).
  void ritz_vectors(const SmallMatrix& y, const TasPtr& out) const;

 private:
  struct OrthoResult {
    SmallMatrix h;  // coefficients on the existing basis
    SmallMatrix r;  // coefficients on the new orthonormal columns
  };
  OrthoResult orthonormalize(const TasPtr& w, const std::vector<ColumnView>& basis,
                             std::vector<bool>& null_cols);
  void replace_columns(const TasPtr& w, const std::vector<std::uint32_t>& cols,
                       const std::vector<ColumnView>& basis, std::vector<bool>& null_cols);
  std::uint64_t next_seed();
  void record_ortho_check();

  DenseStore& store_;
  SolverConfig cfg_;
  std::uint64_t n_;
  std::size_t b_;
  std::size_t m_;
  std::size_t p_ = 0;
  std::size_t locked_ = 0;
  std::vector<ColumnView> blocks_;
  TasPtr vr_;
  std::vector<bool> vr_null_;  // residual columns with no orthogonal complement left
  SmallMatrix t_;
  SmallMatrix c_;
  std::vector<double> locked_residuals_;
  double anorm_ = 0.0;
  std::uint64_t seed_counter_ = 0;
  std::size_t breakdowns_ = 0;
  std::vector<double> ortho_checks_;
};

struct ResidualCheck {
  std::vector<double> residuals;
  std::vector<bool> converged;
};

/// Explicit residuals ‖A·x_i − θ_i·x_i‖ for x_i = S·y_i, computed with
/// mv_times_mat_add_mv, spmm, mv_scale, mv_add_mv and mv_norm. Converged
/// iff the residual is at most tol·max(1, |θ_i|).
ResidualCheck residual_and_test(const SparseTileMatrix& a, const KrylovSubspace& s,
                                const std::vector<double>& theta, const SmallMatrix& y, double tol,
                                const SolverConfig& cfg, DenseStore& store);

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t subspace_cols = 0;
  std::size_t locked = 0;
  std::size_t converged = 0;
  std::size_t breakdowns = 0;
  std::vector<double> ritz_values;  // k wanted values, sorted per `which`
  std::vector<double> residuals;    // matching residual norms (estimates for unconverged)
  double ortho_error = -1.0;        // worst check this iteration; -1 when unchecked
  IoStats io;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct SolveResult {
  std::vector<RitzPair> pairs;  // sorted per `which`
  bool converged = false;
  std::size_t restarts = 0;
  std::vector<IterationRecord> log;
  std::vector<double> ortho_checks;
  TasPtr eigenvectors;  // n × k, column i pairs with pairs[i]
};

/// Sampled transpose probes: throws std::invalid_argument when a probed
/// entry (i, j, v) has no matching (j, i, v).
void check_symmetric(const SparseTileMatrix& a, std::uint64_t seed, std::size_t max_probes = 4096);

/// Runs block Krylov-Schur until k pairs converge or max_restarts is hit.
/// Eigenvectors go to eigvec_path when given, otherwise to a temporary file
/// in the store.
SolveResult solve(const SparseTileMatrix& a, const SolverConfig& cfg, DenseStore& store,
                  const std::filesystem::path& eigvec_path = {});

}  // namespace semeig
