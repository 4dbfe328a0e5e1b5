#pragma once

// Block operations over on-disk TAS matrices.
//
// Every operation walks the row intervals of its operands in parallel, one
// interval per worker at a time; a worker owns that interval in every
// operand. Operations with a small (non-TAS) result compute one partial per
// interval and then sum the partials in interval order, so results do not
// depend on the worker count.

#include "semeig/dense_store.hpp"
#include "semeig/small_matrix.hpp"
#include "semeig/spmm.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace semeig {

inline constexpr std::size_t kDefaultGroupSize = 8;

struct DenseOpsConfig {
  unsigned workers = 0;                        // 0: hardware concurrency
  std::size_t group_size = kDefaultGroupSize;  // TAS blocks per group; 0: unlimited
};

/// A TAS matrix restricted to some of its columns (all by default).
class ColumnView {
 public:
  ColumnView(TasPtr m);  // NOLINT(google-explicit-constructor)
  ColumnView(TasPtr m, std::vector<std::uint32_t> cols);

  const TasPtr& matrix() const { return m_; }
  std::span<const std::uint32_t> cols() const { return cols_; }
  std::uint64_t n_rows() const { return m_->n_rows(); }
  std::size_t n_cols() const { return cols_.size(); }

  void read(std::size_t interval, RowIntervalBuf& out) const {
    m_->read_interval_into(interval, cols_, out);
  }

 private:
  TasPtr m_;
  std::vector<std::uint32_t> cols_;
};

/// Consecutive runs of at most group_size blocks, in block order.
struct BlockGroupPlan {
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [first, last) block index
  std::vector<std::size_t> col_offset;                      // first logical column of each block
};

BlockGroupPlan plan_groups(std::span<const ColumnView> blocks, std::size_t group_size);

/// CC ← alpha·AA·B + beta·CC, AA being the column concatenation of `aa`.
/// CC may be one of the matrices in `aa`. With beta == 0 the old contents of
/// CC are never read.
void mv_times_mat_add_mv(double alpha, std::span<const ColumnView> aa, const SmallMatrix& b,
                         double beta, const TasPtr& cc, const DenseOpsConfig& cfg = {});

/// alpha·AAᵀ·BB. BB is read once per interval and shared by every group.
SmallMatrix mv_trans_mv(double alpha, std::span<const ColumnView> aa, const ColumnView& bb,
                        const DenseOpsConfig& cfg = {});

/// out ← alpha·AA
void mv_scale(const ColumnView& aa, double alpha, const TasPtr& out, const DenseOpsConfig& cfg = {});
/// out ← AA·diag(vec)
void mv_scale(const ColumnView& aa, std::span<const double> vec, const TasPtr& out,
              const DenseOpsConfig& cfg = {});
TasPtr mv_scale(DenseStore& store, const ColumnView& aa, double alpha, const DenseOpsConfig& cfg = {});
TasPtr mv_scale(DenseStore& store, const ColumnView& aa, std::span<const double> vec,
                const DenseOpsConfig& cfg = {});

/// out ← alpha·AA + beta·BB
void mv_add_mv(double alpha, const ColumnView& aa, double beta, const ColumnView& bb,
               const TasPtr& out, const DenseOpsConfig& cfg = {});
TasPtr mv_add_mv(DenseStore& store, double alpha, const ColumnView& aa, double beta,
                 const ColumnView& bb, const DenseOpsConfig& cfg = {});

/// vec[i] = AA[:,i]ᵀ·BB[:,i]
std::vector<double> mv_dot(const ColumnView& aa, const ColumnView& bb, const DenseOpsConfig& cfg = {});
/// Column 2-norms, accumulated with scaling so large entries cannot overflow.
std::vector<double> mv_norm(const ColumnView& aa, const DenseOpsConfig& cfg = {});

/// AA[:, idxs] as a view; no data is copied.
ColumnView clone_view(const TasPtr& aa, std::vector<std::uint32_t> idxs);
/// AA[:, idxs] ← BB
void set_block(const TasPtr& aa, std::span<const std::uint32_t> idxs, const ColumnView& bb,
               const DenseOpsConfig& cfg = {});

/// Fills AA with uniform(-1, 1) values. Each interval draws from its own
/// mt19937_64 stream seeded from (seed, interval id), so the result depends
/// only on the seed, shape and interval size.
void mv_random(const TasPtr& aa, std::uint64_t seed, const DenseOpsConfig& cfg = {});

/// Loads a TAS view into a row-major in-memory block (column-major read,
/// then layout conversion).
DenseBlockMem load_block(const ColumnView& aa, const DenseOpsConfig& cfg = {});
/// Writes a row-major in-memory block into out, converting to the on-disk
/// column-major layout.
void store_block(const DenseBlockMem& m, const TasPtr& out, const DenseOpsConfig& cfg = {});

/// Retains a freshly produced subspace block in the store's recent-block
/// cache when it fits. Returns whether it was cached.
bool cache_policy(DenseStore& store, TasMatrix& produced);

}  // namespace semeig
