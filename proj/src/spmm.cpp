#include "semeig/spmm.hpp"

#include "semeig/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>

namespace semeig {

// ---------------------------------------------------------------------------
// DenseBlockMem

DenseBlockMem::DenseBlockMem(std::size_t n_rows, std::size_t n_cols, std::size_t interval_rows,
                             Layout layout)
    : n_rows_(n_rows), n_cols_(n_cols), layout_(layout) {
  if (!std::has_single_bit(interval_rows)) {
    throw std::invalid_argument("row interval size must be a power of two, got " +
                                std::to_string(interval_rows));
  }
  shift_ = static_cast<unsigned>(std::countr_zero(interval_rows));
  mask_ = interval_rows - 1;
  const std::size_t count = (n_rows + interval_rows - 1) / interval_rows;
  intervals_.resize(count);
  for (std::size_t i = 0; i < count; ++i) intervals_[i].assign(rows_in_interval(i) * n_cols, 0.0);
}

std::size_t DenseBlockMem::rows_in_interval(std::size_t i) const {
  const std::size_t start = i << shift_;
  return std::min(interval_rows(), n_rows_ - start);
}

double& DenseBlockMem::at(std::size_t r, std::size_t c) {
  auto& iv = intervals_[r >> shift_];
  const std::size_t lr = r & mask_;
  return layout_ == Layout::row_major ? iv[lr * n_cols_ + c]
                                      : iv[c * rows_in_interval(r >> shift_) + lr];
}

double DenseBlockMem::at(std::size_t r, std::size_t c) const {
  return const_cast<DenseBlockMem*>(this)->at(r, c);
}

DenseBlockMem DenseBlockMem::conv_layout(Layout target) const {
  DenseBlockMem out(n_rows_, n_cols_, interval_rows(), target);
  if (target == layout_) {
    out.intervals_ = intervals_;
    return out;
  }
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    const std::size_t rows = rows_in_interval(i);
    const double* src = intervals_[i].data();
    double* dst = out.intervals_[i].data();
    if (layout_ == Layout::row_major) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n_cols_; ++c) dst[c * rows + r] = src[r * n_cols_ + c];
    } else {
      for (std::size_t c = 0; c < n_cols_; ++c)
        for (std::size_t r = 0; r < rows; ++r) dst[r * n_cols_ + c] = src[c * rows + r];
    }
  }
  return out;
}

DenseBlockMem conv_layout(const DenseBlockMem& m, Layout target) { return m.conv_layout(target); }

std::uint64_t DenseBlockMem::checksum() const {
  std::uint64_t h = fnv1a({});
  for (std::size_t r = 0; r < n_rows_; ++r) {
    for (std::size_t c = 0; c < n_cols_; ++c) {
      const double v = at(r, c);
      h = fnv1a(std::as_bytes(std::span(&v, 1)), h);
    }
  }
  return h;
}

bool operator==(const DenseBlockMem& a, const DenseBlockMem& b) {
  if (a.n_rows_ != b.n_rows_ || a.n_cols_ != b.n_cols_) return false;
  for (std::size_t r = 0; r < a.n_rows_; ++r)
    for (std::size_t c = 0; c < a.n_cols_; ++c)
      if (a.at(r, c) != b.at(r, c)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Planning and scheduling

SuperTilePlan plan_super_tiles(TileDims dims, std::size_t n_cols, std::size_t cache_budget,
                               std::size_t workers_per_cache) {
  const std::size_t per_tile = std::size_t{dims.tile_rows} * std::max<std::size_t>(n_cols, 1) *
                               sizeof(double) * 2 * std::max<std::size_t>(workers_per_cache, 1);
  const std::size_t tiles = std::max<std::size_t>(1, cache_budget / per_tile);
  return {tiles, tiles};
}

WorkQueue::WorkQueue(std::size_t n_partitions, unsigned n_workers)
    : n_partitions_(n_partitions), queues_(std::max(1u, n_workers)) {
  const std::size_t w = queues_.size();
  for (std::size_t q = 0; q < w; ++q) {
    const std::size_t begin = n_partitions * q / w;
    const std::size_t end = n_partitions * (q + 1) / w;
    for (std::size_t p = begin; p < end; ++p) queues_[q].items.push_back(p);
  }
}

std::optional<std::size_t> WorkQueue::next(unsigned worker) {
  {
    auto& own = queues_.at(worker);
    std::lock_guard lock(own.mu);
    if (!own.items.empty()) {
      const std::size_t p = own.items.front();
      own.items.pop_front();
      return p;
    }
  }
  for (std::size_t k = 1; k < queues_.size(); ++k) {
    auto& victim = queues_[(worker + k) % queues_.size()];
    std::lock_guard lock(victim.mu);
    if (!victim.items.empty()) {
      const std::size_t p = victim.items.back();
      victim.items.pop_back();
      std::lock_guard slock(steal_mu_);
      ++steals_;
      return p;
    }
  }
  return std::nullopt;
}

std::size_t WorkQueue::steals() const {
  std::lock_guard lock(steal_mu_);
  return steals_;
}

WorkQueue assign_partitions(std::size_t n_tile_rows, const SuperTilePlan& plan, unsigned n_workers) {
  if (n_workers == 0) throw std::invalid_argument("assign_partitions needs at least one worker");
  const std::size_t per = std::max<std::size_t>(1, plan.tile_rows_per_partition);
  return WorkQueue((n_tile_rows + per - 1) / per, n_workers);
}

// ---------------------------------------------------------------------------
// Kernel

namespace {

// Accumulates tile · x into y. x points at the first input row covered by the
// tile's columns and y at the first output row covered by its rows; both are
// row-major with `width` columns. Width is a compile-time constant for the
// common block sizes so the inner loops vectorize.
template <int Width, bool Binary>
void multiply_tile(const TileView& t, const double* x, double* y, std::size_t width) {
  const std::size_t b = Width > 0 ? static_cast<std::size_t>(Width) : width;
  std::size_t vi = 0;
  double* yrow = y;
  for (std::uint32_t i = 0; i < t.scsr_word_count; ++i) {
    const std::uint16_t w = t.scsr_word(i);
    if (w & kRowHeaderBit) {
      yrow = y + static_cast<std::size_t>(w & ~kRowHeaderBit) * b;
      continue;
    }
    const double* xrow = x + static_cast<std::size_t>(w) * b;
    if constexpr (Binary) {
      for (std::size_t j = 0; j < b; ++j) yrow[j] += xrow[j];
    } else {
      const double v = t.value(vi);
      for (std::size_t j = 0; j < b; ++j) yrow[j] += v * xrow[j];
    }
    ++vi;
  }
  for (std::uint32_t i = 0; i < t.coo_pair_count; ++i) {
    double* yr = y + static_cast<std::size_t>(t.coo_row(i)) * b;
    const double* xr = x + static_cast<std::size_t>(t.coo_col(i)) * b;
    if constexpr (Binary) {
      for (std::size_t j = 0; j < b; ++j) yr[j] += xr[j];
    } else {
      const double v = t.value(vi + i);
      for (std::size_t j = 0; j < b; ++j) yr[j] += v * xr[j];
    }
  }
}

using TileKernel = void (*)(const TileView&, const double*, double*, std::size_t);

template <bool Binary>
TileKernel select_kernel(std::size_t width) {
  switch (width) {
    case 1: return &multiply_tile<1, Binary>;
    case 2: return &multiply_tile<2, Binary>;
    case 4: return &multiply_tile<4, Binary>;
    case 8: return &multiply_tile<8, Binary>;
    default: return &multiply_tile<0, Binary>;
  }
}

// Tiles touching the partial last tile row/column are checked so corrupt
// indices cannot reach past the dense blocks.
void check_edge_tile(const TileView& t, std::size_t max_rows, std::size_t max_cols) {
  for (std::uint32_t i = 0; i < t.scsr_word_count; ++i) {
    const std::uint16_t w = t.scsr_word(i);
    if (w & kRowHeaderBit) {
      if (static_cast<std::size_t>(w & ~kRowHeaderBit) >= max_rows)
        throw FormatError("tile row index beyond matrix bounds");
    } else if (w >= max_cols) {
      throw FormatError("tile column index beyond matrix bounds");
    }
  }
  for (std::uint32_t i = 0; i < t.coo_pair_count; ++i) {
    if (t.coo_row(i) >= max_rows || t.coo_col(i) >= max_cols)
      throw FormatError("tile COO entry beyond matrix bounds");
  }
}

}  // namespace

DenseBlockMem spmm(const SparseTileMatrix& a, const DenseBlockMem& x, const SpmmOptions& options) {
  if (a.n_cols() != x.n_rows()) {
    throw std::invalid_argument("spmm dimension mismatch: A is " + std::to_string(a.n_rows()) +
                                "x" + std::to_string(a.n_cols()) + ", X has " +
                                std::to_string(x.n_rows()) + " rows");
  }
  if (x.layout() != Layout::row_major) {
    throw std::invalid_argument("spmm needs a row-major input block; convert it first");
  }
  const TileDims dims = a.tile_dims();
  const std::size_t ts = dims.tile_rows;
  if (x.interval_rows() % ts != 0) {
    throw std::invalid_argument("dense row interval must be a multiple of the tile size");
  }
  const std::size_t b = x.n_cols();
  const std::size_t n_out = a.n_rows();
  std::size_t out_interval = x.interval_rows();
  DenseBlockMem y(n_out, b, out_interval, Layout::row_major);
  const std::size_t ntr = a.n_tile_rows();
  if (ntr == 0 || b == 0) return y;

  const unsigned workers = options.workers == 0 ? default_workers() : options.workers;
  SuperTilePlan plan;
  if (options.plan) {
    plan = *options.plan;
  } else {
    plan = plan_super_tiles(dims, b, options.cache_budget, options.workers_per_cache);
    // Keep enough partitions around for stealing to balance the load.
    const std::size_t balanced = std::max<std::size_t>(1, (ntr + 4 * workers - 1) / (4 * workers));
    plan.tile_rows_per_partition = std::min(plan.tile_rows_per_partition, balanced);
  }
  plan.tile_rows_per_partition = std::max<std::size_t>(1, plan.tile_rows_per_partition);
  plan.tiles_per_super_tile = std::max<std::size_t>(1, plan.tiles_per_super_tile);

  WorkQueue queue = assign_partitions(ntr, plan, workers);
  IoBufferPool local_pool(workers);
  IoBufferPool& pool =
      options.buffers != nullptr && options.buffers->size() >= workers ? *options.buffers : local_pool;

  const bool binary = a.value_kind() == ValueKind::binary;
  const TileKernel kernel = binary ? select_kernel<true>(b) : select_kernel<false>(b);
  const std::size_t n_tile_cols = a.n_tile_cols();
  const std::size_t last_row_rows = a.n_rows() - (ntr - 1) * ts;
  const std::size_t last_col_cols = a.n_cols() - (n_tile_cols - 1) * ts;

  std::vector<std::vector<std::size_t>> processed(workers);
  std::exception_ptr error;
  std::mutex error_mu;

  auto work = [&](unsigned w) {
    try {
      std::vector<double> local;
      while (auto part = queue.next(w)) {
        const std::size_t first = *part * plan.tile_rows_per_partition;
        const std::size_t count = std::min(plan.tile_rows_per_partition, ntr - first);
        const auto raw = a.read_tile_rows_raw(first, count, pool.buffer(w));

        std::vector<std::vector<TileRef>> rows(count);
        for (std::size_t k = 0; k < count; ++k) {
          rows[k] = parse_tile_row(raw[k], a.value_kind());
          for (const auto& ref : rows[k]) {
            if (ref.tile_col >= n_tile_cols) throw FormatError("tile column outside matrix");
            const bool edge_row = first + k == ntr - 1 && last_row_rows != ts;
            const bool edge_col = ref.tile_col == n_tile_cols - 1 && last_col_cols != ts;
            if (edge_row || edge_col) {
              check_edge_tile(ref.view, edge_row ? last_row_rows : ts, edge_col ? last_col_cols : ts);
            }
          }
        }

        local.assign(count * ts * b, 0.0);
        std::vector<std::size_t> cursor(count, 0);
        for (std::size_t c0 = 0; c0 < n_tile_cols; c0 += plan.tiles_per_super_tile) {
          const std::size_t c1 = c0 + plan.tiles_per_super_tile;
          for (std::size_t k = 0; k < count; ++k) {
            auto& cur = cursor[k];
            while (cur < rows[k].size() && rows[k][cur].tile_col < c1) {
              const auto& ref = rows[k][cur];
              kernel(ref.view, x.row_ptr(std::size_t{ref.tile_col} * ts), local.data() + k * ts * b, b);
              ++cur;
            }
          }
        }

        const std::size_t row0 = first * ts;
        const std::size_t row1 = std::min(n_out, (first + count) * ts);
        for (std::size_t r = row0; r < row1; ++r) {
          std::memcpy(y.row_ptr(r), local.data() + (r - row0) * b, b * sizeof(double));
        }
        processed[w].push_back(*part);
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
    }
  };

  {
    std::vector<std::jthread> threads;
    for (unsigned w = 1; w < workers; ++w) threads.emplace_back(work, w);
    work(0);
  }
  if (error) std::rethrow_exception(error);
  if (options.log != nullptr) {
    options.log->processed = std::move(processed);
    options.log->steals = queue.steals();
  }
  return y;
}

}  // namespace semeig
