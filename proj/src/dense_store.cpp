#include "semeig/dense_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace semeig {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'E', 'T', '1'};

std::uint64_t fresh_data_id() {
  static std::atomic<std::uint64_t> next{[] {
    std::random_device rd;
    return (std::uint64_t{rd()} << 32 | rd()) & 0x7fffffff00000000ULL;
  }()};
  return next.fetch_add(1) + 1;
}

// Calls fn(first_position, first_column, run_length) for each maximal run of
// adjacent columns in cols.
template <typename Fn>
void for_each_column_run(std::span<const std::uint32_t> cols, Fn&& fn) {
  std::size_t k = 0;
  while (k < cols.size()) {
    std::size_t len = 1;
    while (k + len < cols.size() && cols[k + len] == cols[k] + len) ++len;
    fn(k, cols[k], len);
    k += len;
  }
}

std::vector<std::uint32_t> all_columns(std::uint32_t n) {
  std::vector<std::uint32_t> cols(n);
  for (std::uint32_t c = 0; c < n; ++c) cols[c] = c;
  return cols;
}

}  // namespace

// ---------------------------------------------------------------------------
// TasMatrix

std::shared_ptr<TasMatrix> TasMatrix::create(const std::filesystem::path& path, std::uint64_t n_rows,
                                             std::uint32_t n_cols, std::uint32_t interval_rows,
                                             CounterSet counters, bool temporary,
                                             std::shared_ptr<RecentBlockCache> cache) {
  if (!std::has_single_bit(interval_rows)) {
    throw std::invalid_argument("row interval size must be a power of two, got " +
                                std::to_string(interval_rows));
  }
  std::shared_ptr<TasMatrix> m(new TasMatrix());
  m->counters_ = std::make_shared<IoCounters>();
  counters.push_back(m->counters_);
  m->file_ = std::make_shared<File>(path, File::Mode::create, std::move(counters));
  m->cache_ = std::move(cache);
  m->n_rows_ = n_rows;
  m->n_cols_ = n_cols;
  m->interval_rows_ = interval_rows;
  m->data_id_ = fresh_data_id();
  m->temporary_ = temporary;
  m->writers_ = std::make_unique<std::atomic<bool>[]>(m->interval_count());

  std::vector<std::byte> head;
  head.insert(head.end(), reinterpret_cast<const std::byte*>(kMagic.data()),
              reinterpret_cast<const std::byte*>(kMagic.data()) + 4);
  put_le(head, kTasVersion);
  put_le(head, n_rows);
  put_le(head, n_cols);
  put_le(head, interval_rows);
  put_le(head, m->data_id_);
  m->file_->write_all(0, head);
  return m;
}

std::shared_ptr<TasMatrix> TasMatrix::open(const std::filesystem::path& path, CounterSet counters,
                                           std::shared_ptr<RecentBlockCache> cache) {
  std::shared_ptr<TasMatrix> m(new TasMatrix());
  m->counters_ = std::make_shared<IoCounters>();
  counters.push_back(m->counters_);
  m->file_ = std::make_shared<File>(path, File::Mode::read_write, std::move(counters));
  m->cache_ = std::move(cache);
  const std::uint64_t size = m->file_->size();
  if (size < kTasHeaderBytes) throw FormatError("corrupt TAS matrix: file too short");
  std::vector<std::byte> head(kTasHeaderBytes);
  m->file_->read_exact(0, head);
  if (std::memcmp(head.data(), kMagic.data(), 4) != 0) {
    throw FormatError("not a TAS matrix file (bad magic)");
  }
  if (get_le<std::uint16_t>(head, 4) != kTasVersion) throw FormatError("unsupported TAS version");
  m->n_rows_ = get_le<std::uint64_t>(head, 6);
  m->n_cols_ = get_le<std::uint32_t>(head, 14);
  m->interval_rows_ = get_le<std::uint32_t>(head, 18);
  m->data_id_ = get_le<std::uint64_t>(head, 22);
  if (!std::has_single_bit(m->interval_rows_)) {
    throw FormatError("corrupt TAS matrix: interval size not a power of two");
  }
  if (size != kTasHeaderBytes + m->payload_bytes()) {
    throw FormatError("corrupt TAS matrix: file size " + std::to_string(size) + ", expected " +
                      std::to_string(kTasHeaderBytes + m->payload_bytes()));
  }
  m->writers_ = std::make_unique<std::atomic<bool>[]>(m->interval_count());
  return m;
}

TasMatrix::~TasMatrix() {
  if (cache_ && cache_->contains(data_id_)) {
    if (temporary_) {
      cache_->drop(data_id_);
    } else {
      try {
        cache_->flush(data_id_);
      } catch (...) {
      }
      cache_->drop(data_id_);
    }
  }
  if (temporary_ && file_) {
    std::error_code ec;
    std::filesystem::remove(file_->path(), ec);
  }
}

std::size_t TasMatrix::interval_count() const {
  return static_cast<std::size_t>((n_rows_ + interval_rows_ - 1) / interval_rows_);
}

std::size_t TasMatrix::rows_in_interval(std::size_t id) const {
  return static_cast<std::size_t>(std::min<std::uint64_t>(interval_rows_, n_rows_ - first_row(id)));
}

std::uint64_t TasMatrix::interval_offset(std::size_t id) const {
  return kTasHeaderBytes + first_row(id) * n_cols_ * sizeof(double);
}

std::uint64_t TasMatrix::element_offset(std::uint64_t r, std::uint32_t c) const {
  const std::size_t id = static_cast<std::size_t>(r / interval_rows_);
  return interval_offset(id) +
         (std::uint64_t{c} * rows_in_interval(id) + (r - first_row(id))) * sizeof(double);
}

void TasMatrix::check_interval(std::size_t id) const {
  if (id >= interval_count()) {
    throw std::out_of_range("row interval " + std::to_string(id) + " out of range (" +
                            std::to_string(interval_count()) + " intervals)");
  }
}

RowIntervalBuf TasMatrix::read_interval(std::size_t id, std::span<const std::uint32_t> cols) const {
  RowIntervalBuf out;
  read_interval_into(id, cols, out);
  return out;
}

void TasMatrix::read_interval_into(std::size_t id, std::span<const std::uint32_t> cols,
                                   RowIntervalBuf& out) const {
  check_interval(id);
  std::vector<std::uint32_t> every;
  if (cols.empty()) {
    every = all_columns(n_cols_);
    cols = every;
  }
  for (auto c : cols) {
    if (c >= n_cols_) throw std::out_of_range("column " + std::to_string(c) + " out of range");
  }
  out.interval_id = id;
  out.first_row = first_row(id);
  out.n_rows = rows_in_interval(id);
  out.cols.assign(cols.begin(), cols.end());
  out.data.resize(out.n_rows * cols.size());
  if (cache_ && cache_->read(*this, id, cols, out)) return;
  disk_read(id, cols, out);
}

void TasMatrix::disk_read(std::size_t id, std::span<const std::uint32_t> cols,
                          RowIntervalBuf& out) const {
  const std::size_t rows = out.n_rows;
  for_each_column_run(cols, [&](std::size_t k, std::uint32_t c, std::size_t len) {
    const std::uint64_t off = interval_offset(id) + std::uint64_t{c} * rows * sizeof(double);
    file_->read_exact(off, std::as_writable_bytes(std::span(out.data.data() + k * rows, len * rows)));
  });
}

void TasMatrix::write_interval(const RowIntervalBuf& buf) {
  const std::size_t id = buf.interval_id;
  check_interval(id);
  if (buf.n_rows != rows_in_interval(id) || buf.data.size() != buf.n_rows * buf.cols.size()) {
    throw std::invalid_argument("interval buffer shape does not match interval " + std::to_string(id));
  }
  for (auto c : buf.cols) {
    if (c >= n_cols_) throw std::out_of_range("column " + std::to_string(c) + " out of range");
  }
  if (writers_[id].exchange(true, std::memory_order_acquire)) {
    throw std::logic_error("concurrent writers on row interval " + std::to_string(id));
  }
  struct Release {
    std::atomic<bool>& flag;
    ~Release() { flag.store(false, std::memory_order_release); }
  } release{writers_[id]};
  if (cache_ && cache_->write(*this, buf)) return;
  disk_write(buf);
}

void TasMatrix::disk_write(const RowIntervalBuf& buf) {
  const std::size_t rows = buf.n_rows;
  for_each_column_run(buf.cols, [&](std::size_t k, std::uint32_t c, std::size_t len) {
    const std::uint64_t off = interval_offset(buf.interval_id) + std::uint64_t{c} * rows * sizeof(double);
    file_->write_all(off, std::as_bytes(std::span(buf.data.data() + k * rows, len * rows)));
  });
}

double TasMatrix::read_element(std::uint64_t r, std::uint32_t c) const {
  if (r >= n_rows_ || c >= n_cols_) throw std::out_of_range("element outside TAS matrix");
  double v;
  file_->read_exact(element_offset(r, c), std::as_writable_bytes(std::span(&v, 1)));
  return v;
}

void TasMatrix::flush() {
  if (cache_) cache_->flush(data_id_);
}

TransposedTas transpose(const TasPtr& m) { return TransposedTas(m); }

// ---------------------------------------------------------------------------
// RecentBlockCache

std::shared_ptr<RecentBlockCache::Entry> RecentBlockCache::current() const {
  std::lock_guard lock(mu_);
  return entry_;
}

bool RecentBlockCache::contains(std::uint64_t data_id) const {
  auto e = current();
  return e && e->data_id == data_id;
}

void RecentBlockCache::flush_entry(Entry& e) {
  if (!e.dirty.load() || e.owner == nullptr) return;
  e.owner->file_->write_all(kTasHeaderBytes, std::as_bytes(std::span(e.payload)));
  e.dirty.store(false);
}

bool RecentBlockCache::admit(TasMatrix& m, bool load_from_disk) {
  std::lock_guard lock(mu_);
  if (entry_) {
    if (entry_->data_id == m.data_id()) return true;
    flush_entry(*entry_);
    entry_.reset();
  }
  if (m.payload_bytes() > budget_) return false;
  auto e = std::make_shared<Entry>();
  e->data_id = m.data_id();
  e->owner = &m;
  e->payload.assign(m.n_rows() * m.n_cols(), 0.0);
  if (load_from_disk && !e->payload.empty()) {
    m.file_->read_exact(kTasHeaderBytes, std::as_writable_bytes(std::span(e->payload)));
  }
  e->dirty.store(!load_from_disk);
  entry_ = std::move(e);
  return true;
}

bool RecentBlockCache::read(const TasMatrix& m, std::size_t interval,
                            std::span<const std::uint32_t> cols, RowIntervalBuf& out) const {
  auto e = current();
  if (!e || e->data_id != m.data_id()) return false;
  const std::size_t rows = m.rows_in_interval(interval);
  const double* base = e->payload.data() + m.first_row(interval) * m.n_cols();
  for (std::size_t k = 0; k < cols.size(); ++k) {
    std::memcpy(out.data.data() + k * rows, base + std::size_t{cols[k]} * rows, rows * sizeof(double));
  }
  hits_.fetch_add(1, std::memory_order_relaxed);
  return true;
}

bool RecentBlockCache::write(const TasMatrix& m, const RowIntervalBuf& in) {
  auto e = current();
  if (!e || e->data_id != m.data_id()) return false;
  const std::size_t rows = in.n_rows;
  double* base = e->payload.data() + m.first_row(in.interval_id) * m.n_cols();
  for (std::size_t k = 0; k < in.cols.size(); ++k) {
    std::memcpy(base + std::size_t{in.cols[k]} * rows, in.data.data() + k * rows, rows * sizeof(double));
  }
  e->dirty.store(true);
  return true;
}

void RecentBlockCache::flush(std::uint64_t data_id) {
  std::lock_guard lock(mu_);
  if (entry_ && entry_->data_id == data_id) flush_entry(*entry_);
}

void RecentBlockCache::drop(std::uint64_t data_id) {
  std::lock_guard lock(mu_);
  if (entry_ && entry_->data_id == data_id) entry_.reset();
}

void RecentBlockCache::evict() {
  std::lock_guard lock(mu_);
  if (entry_) flush_entry(*entry_);
  entry_.reset();
}

// ---------------------------------------------------------------------------
// DenseStore

DenseStore::DenseStore(std::filesystem::path dir, std::uint32_t interval_rows, std::size_t cache_budget)
    : dir_(std::move(dir)),
      interval_rows_(interval_rows),
      counters_(std::make_shared<IoCounters>()) {
  if (!std::has_single_bit(interval_rows)) {
    throw std::invalid_argument("row interval size must be a power of two");
  }
  std::filesystem::create_directories(dir_);
  if (cache_budget > 0) cache_ = std::make_shared<RecentBlockCache>(cache_budget);
}

TasPtr DenseStore::create(std::uint64_t n_rows, std::uint32_t n_cols) {
  const auto name = "tas_" + std::to_string(seq_.fetch_add(1)) + ".bin";
  return TasMatrix::create(dir_ / name, n_rows, n_cols, interval_rows_, {counters_}, true, cache_);
}

TasPtr DenseStore::create_at(const std::filesystem::path& path, std::uint64_t n_rows,
                             std::uint32_t n_cols) {
  return TasMatrix::create(path, n_rows, n_cols, interval_rows_, {counters_}, false, cache_);
}

TasPtr DenseStore::open(const std::filesystem::path& path) {
  return TasMatrix::open(path, {counters_}, cache_);
}

bool DenseStore::make_recent(TasMatrix& m, bool load_from_disk) {
  if (!cache_) return false;
  return cache_->admit(m, load_from_disk);
}

}  // namespace semeig
