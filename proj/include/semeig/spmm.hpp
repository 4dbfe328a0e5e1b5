#pragma once

// Semi-external-memory sparse × dense multiplication.
//
// The sparse matrix streams from disk one partition (a run of contiguous tile
// rows) at a time; the dense input and output blocks live in memory, split
// into power-of-two row intervals.

#include "semeig/sparse_format.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace semeig {

enum class Layout { row_major, col_major };

/// In-memory tall-and-skinny block. Rows are grouped into intervals of
/// interval_rows (a power of two); each interval is a separate allocation
/// stored in the block's layout. The last interval may be partial.
class DenseBlockMem {
 public:
  DenseBlockMem() = default;
  DenseBlockMem(std::size_t n_rows, std::size_t n_cols, std::size_t interval_rows,
                Layout layout = Layout::row_major);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t interval_rows() const { return std::size_t{1} << shift_; }
  std::size_t interval_count() const { return intervals_.size(); }
  std::size_t rows_in_interval(std::size_t i) const;
  Layout layout() const { return layout_; }

  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  std::span<double> interval(std::size_t i) { return intervals_[i]; }
  std::span<const double> interval(std::size_t i) const { return intervals_[i]; }

  /// Pointer to row r; row-major blocks only. Rows of one interval are
  /// contiguous.
  double* row_ptr(std::size_t r) { return intervals_[r >> shift_].data() + (r & mask_) * n_cols_; }
  const double* row_ptr(std::size_t r) const {
    return intervals_[r >> shift_].data() + (r & mask_) * n_cols_;
  }

  /// Copy with the same logical contents stored in `target` order.
  DenseBlockMem conv_layout(Layout target) const;

  /// FNV-1a over the row-major serialization, independent of layout and
  /// interval size.
  std::uint64_t checksum() const;

  friend bool operator==(const DenseBlockMem& a, const DenseBlockMem& b);

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  unsigned shift_ = 0;
  std::size_t mask_ = 0;
  Layout layout_ = Layout::row_major;
  std::vector<std::vector<double>> intervals_;
};

DenseBlockMem conv_layout(const DenseBlockMem& m, Layout target);

struct SuperTilePlan {
  std::size_t tile_rows_per_partition = 1;
  std::size_t tiles_per_super_tile = 1;
};

inline constexpr std::size_t kDefaultCacheBudget = std::size_t{1} << 20;

/// Largest super tile whose dense working set (input and output rows for
/// every worker sharing the cache) fits in cache_budget bytes; at least 1.
SuperTilePlan plan_super_tiles(TileDims dims, std::size_t n_cols, std::size_t cache_budget,
                               std::size_t workers_per_cache);

/// Dynamic partition queue. Each worker starts with a contiguous run of
/// partitions, takes its own from the front, and steals from the back of
/// other workers' queues once its own run is exhausted.
class WorkQueue {
 public:
  WorkQueue(std::size_t n_partitions, unsigned n_workers);

  /// Next partition for this worker, or nullopt when every queue is empty.
  std::optional<std::size_t> next(unsigned worker);

  std::size_t n_partitions() const { return n_partitions_; }
  unsigned n_workers() const { return static_cast<unsigned>(queues_.size()); }
  std::size_t steals() const;

 private:
  struct Queue {
    std::mutex mu;
    std::deque<std::size_t> items;
  };
  std::size_t n_partitions_;
  std::vector<Queue> queues_;
  mutable std::mutex steal_mu_;
  std::size_t steals_ = 0;
};

/// Partitions of `plan.tile_rows_per_partition` tile rows each, spread over
/// n_workers queues.
WorkQueue assign_partitions(std::size_t n_tile_rows, const SuperTilePlan& plan, unsigned n_workers);

/// Per-worker I/O buffers that are reused across requests and only grow.
class IoBufferPool {
 public:
  explicit IoBufferPool(unsigned n_workers) : buffers_(n_workers) {}
  std::vector<std::byte>& buffer(unsigned worker) { return buffers_.at(worker); }
  std::size_t capacity(unsigned worker) const { return buffers_.at(worker).size(); }
  unsigned size() const { return static_cast<unsigned>(buffers_.size()); }

 private:
  std::vector<std::vector<std::byte>> buffers_;
};

/// (worker, partition) pairs in processing order per worker.
struct SchedulerLog {
  std::vector<std::vector<std::size_t>> processed;  // indexed by worker
  std::size_t steals = 0;
};

struct SpmmOptions {
  unsigned workers = 0;  // 0: hardware concurrency
  std::size_t cache_budget = kDefaultCacheBudget;
  std::size_t workers_per_cache = 1;
  std::optional<SuperTilePlan> plan;  // overrides the cache-derived plan
  SchedulerLog* log = nullptr;
  IoBufferPool* buffers = nullptr;  // reused across calls when provided
};

/// Y = A·X. X must be row-major with interval_rows a multiple of the tile
/// size. The result is row-major with X's interval size, and is bitwise
/// independent of worker count and scheduling.
DenseBlockMem spmm(const SparseTileMatrix& a, const DenseBlockMem& x, const SpmmOptions& options = {});

}  // namespace semeig
