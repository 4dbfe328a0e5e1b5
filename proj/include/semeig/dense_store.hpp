#pragma once

// On-disk tall-and-skinny (TAS) dense matrices.
//
// One file per matrix:
//   header  "FET1" | version u16 | n_rows u64 | n_cols u32 | row_interval_rows u32 | data_id u64
//   data    row intervals back to back; inside an interval the values are
//           column-major over that interval's rows. The last interval is
//           packed to its actual row count.

#include "semeig/io.hpp"

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace semeig {

inline constexpr std::size_t kTasHeaderBytes = 4 + 2 + 8 + 4 + 4 + 8;
inline constexpr std::uint16_t kTasVersion = 1;
inline constexpr std::uint32_t kDefaultIntervalRows = 1u << 17;

/// One row interval's worth of selected columns, column-major.
struct RowIntervalBuf {
  std::size_t interval_id = 0;
  std::uint64_t first_row = 0;
  std::size_t n_rows = 0;
  std::vector<std::uint32_t> cols;  // source column of each stored column
  std::vector<double> data;         // n_rows × cols.size(), column-major

  std::span<double> col(std::size_t k) { return {data.data() + k * n_rows, n_rows}; }
  std::span<const double> col(std::size_t k) const { return {data.data() + k * n_rows, n_rows}; }
  double& at(std::size_t r, std::size_t k) { return data[k * n_rows + r]; }
  double at(std::size_t r, std::size_t k) const { return data[k * n_rows + r]; }
};

class TasMatrix;

/// Holds the most recently produced subspace block in memory. Reads of the
/// cached data_id are served from memory and writes are deferred until the
/// block is evicted or flushed. A temporary block that is deleted while
/// cached is never written at all.
class RecentBlockCache {
 public:
  explicit RecentBlockCache(std::size_t budget_bytes) : budget_(budget_bytes) {}

  std::size_t budget() const { return budget_; }

  /// Makes m the cached block if it fits the budget. The previous block is
  /// evicted (flushed if dirty) either way. With load_from_disk the current
  /// file contents are read in; otherwise the block starts as zeros and is
  /// marked dirty.
  bool admit(TasMatrix& m, bool load_from_disk);
  bool contains(std::uint64_t data_id) const;

  bool read(const TasMatrix& m, std::size_t interval, std::span<const std::uint32_t> cols,
            RowIntervalBuf& out) const;
  bool write(const TasMatrix& m, const RowIntervalBuf& in);

  void flush(std::uint64_t data_id);
  /// Forgets the entry without writing it back.
  void drop(std::uint64_t data_id);
  void evict();

  std::uint64_t hits() const { return hits_.load(); }

 private:
  struct Entry {
    std::uint64_t data_id = 0;
    TasMatrix* owner = nullptr;
    std::vector<double> payload;  // same layout as the file's data section
    std::atomic<bool> dirty{false};
  };
  std::shared_ptr<Entry> current() const;
  void flush_entry(Entry& e);

  std::size_t budget_;
  mutable std::mutex mu_;
  std::shared_ptr<Entry> entry_;
  mutable std::atomic<std::uint64_t> hits_{0};
};

class TasMatrix {
 public:
  /// Creates a new file and writes its header. Throws std::invalid_argument
  /// for a non power-of-two interval size.
  static std::shared_ptr<TasMatrix> create(const std::filesystem::path& path, std::uint64_t n_rows,
                                           std::uint32_t n_cols, std::uint32_t interval_rows,
                                           CounterSet counters = {}, bool temporary = false,
                                           std::shared_ptr<RecentBlockCache> cache = {});
  static std::shared_ptr<TasMatrix> open(const std::filesystem::path& path, CounterSet counters = {},
                                         std::shared_ptr<RecentBlockCache> cache = {});

  ~TasMatrix();
  TasMatrix(const TasMatrix&) = delete;
  TasMatrix& operator=(const TasMatrix&) = delete;

  std::uint64_t n_rows() const { return n_rows_; }
  std::uint32_t n_cols() const { return n_cols_; }
  std::uint32_t interval_rows() const { return interval_rows_; }
  std::size_t interval_count() const;
  std::size_t rows_in_interval(std::size_t id) const;
  std::uint64_t first_row(std::size_t id) const { return std::uint64_t{id} * interval_rows_; }
  std::uint64_t data_id() const { return data_id_; }
  const std::filesystem::path& path() const { return file_->path(); }

  /// File offset of interval id and of element (r, c).
  std::uint64_t interval_offset(std::size_t id) const;
  std::uint64_t element_offset(std::uint64_t r, std::uint32_t c) const;
  std::uint64_t payload_bytes() const { return n_rows_ * n_cols_ * sizeof(double); }

  /// Reads the listed columns (all when empty) of one interval. Runs of
  /// adjacent columns are fetched with one read each, so a full read is a
  /// single contiguous request.
  RowIntervalBuf read_interval(std::size_t id, std::span<const std::uint32_t> cols = {}) const;
  void read_interval_into(std::size_t id, std::span<const std::uint32_t> cols,
                          RowIntervalBuf& out) const;

  /// Persists buf.cols of interval buf.interval_id. Concurrent writes must
  /// target distinct intervals; a second writer on the same interval throws.
  void write_interval(const RowIntervalBuf& buf);

  /// Single-element read straight from disk, bypassing the cache.
  double read_element(std::uint64_t r, std::uint32_t c) const;

  /// Writes back deferred cached data so the file is complete.
  void flush();

  IoStats io_stats() const { return counters_->snapshot(); }

 private:
  friend class RecentBlockCache;
  TasMatrix() = default;

  void check_interval(std::size_t id) const;
  void disk_read(std::size_t id, std::span<const std::uint32_t> cols, RowIntervalBuf& out) const;
  void disk_write(const RowIntervalBuf& buf);

  std::shared_ptr<File> file_;
  std::shared_ptr<IoCounters> counters_;
  std::shared_ptr<RecentBlockCache> cache_;
  std::uint64_t n_rows_ = 0;
  std::uint32_t n_cols_ = 0;
  std::uint32_t interval_rows_ = 0;
  std::uint64_t data_id_ = 0;
  bool temporary_ = false;
  std::unique_ptr<std::atomic<bool>[]> writers_;
};

using TasPtr = std::shared_ptr<TasMatrix>;

/// Transposed logical view. Shares the data identifier of its source so
/// cached data keyed by data_id is recognised through either view.
class TransposedTas {
 public:
  explicit TransposedTas(std::shared_ptr<const TasMatrix> base) : base_(std::move(base)) {}
  std::uint64_t n_rows() const { return base_->n_cols(); }
  std::uint64_t n_cols() const { return base_->n_rows(); }
  std::uint64_t data_id() const { return base_->data_id(); }
  double read_element(std::uint64_t r, std::uint64_t c) const {
    return base_->read_element(c, static_cast<std::uint32_t>(r));
  }
  const TasMatrix& base() const { return *base_; }

 private:
  std::shared_ptr<const TasMatrix> base_;
};

TransposedTas transpose(const TasPtr& m);

/// Creates and tracks TAS files under one directory. Temporary matrices are
/// deleted when their last handle goes away. All files share the store's
/// I/O counters.
class DenseStore {
 public:
  explicit DenseStore(std::filesystem::path dir, std::uint32_t interval_rows = kDefaultIntervalRows,
                      std::size_t cache_budget = 0);

  TasPtr create(std::uint64_t n_rows, std::uint32_t n_cols);
  TasPtr create_at(const std::filesystem::path& path, std::uint64_t n_rows, std::uint32_t n_cols);
  TasPtr open(const std::filesystem::path& path);

  /// Marks m as the most recent subspace block (see RecentBlockCache).
  /// Returns whether it is now cached.
  bool make_recent(TasMatrix& m, bool load_from_disk = false);

  IoStats io_counters() const { return counters_->snapshot(); }
  std::uint32_t interval_rows() const { return interval_rows_; }
  const std::filesystem::path& dir() const { return dir_; }
  RecentBlockCache* cache() const { return cache_.get(); }

 private:
  std::filesystem::path dir_;
  std::uint32_t interval_rows_;
  std::shared_ptr<IoCounters> counters_;
  std::shared_ptr<RecentBlockCache> cache_;
  std::atomic<std::uint64_t> seq_{0};
};

}  // namespace semeig
