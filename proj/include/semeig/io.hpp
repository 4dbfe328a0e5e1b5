#pragma once

// Instrumented file I/O shared by the sparse and dense on-disk formats.
//
// Every positioned read or write goes through File, which bumps the byte and
// operation counters of each IoCounters it was opened with (per file, per
// store, process wide). The counters only ever grow.

#include <atomic>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <cstring>
#include <type_traits>
#include <vector>

namespace semeig {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

/// Thrown for failed system calls and short reads/writes.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when on-disk bytes do not describe a valid matrix.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IoStats {
  std::uint64_t bytes_read = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t read_ops = 0;
  std::uint64_t write_ops = 0;

  friend IoStats operator-(const IoStats& a, const IoStats& b) {
    return {a.bytes_read - b.bytes_read, a.bytes_written - b.bytes_written,
            a.read_ops - b.read_ops, a.write_ops - b.write_ops};
  }
  friend bool operator==(const IoStats&, const IoStats&) = default;
};

class IoCounters {
 public:
  void add_read(std::uint64_t bytes) {
    bytes_read_.fetch_add(bytes, std::memory_order_relaxed);
    read_ops_.fetch_add(1, std::memory_order_relaxed);
  }
  void add_write(std::uint64_t bytes) {
    bytes_written_.fetch_add(bytes, std::memory_order_relaxed);
    write_ops_.fetch_add(1, std::memory_order_relaxed);
  }
  IoStats snapshot() const {
    return {bytes_read_.load(std::memory_order_relaxed),
            bytes_written_.load(std::memory_order_relaxed),
            read_ops_.load(std::memory_order_relaxed),
            write_ops_.load(std::memory_order_relaxed)};
  }

 private:
  std::atomic<std::uint64_t> bytes_read_{0};
  std::atomic<std::uint64_t> bytes_written_{0};
  std::atomic<std::uint64_t> read_ops_{0};
  std::atomic<std::uint64_t> write_ops_{0};
};

/// Counters covering every File in the process.
IoCounters& process_io_counters();

using CounterSet = std::vector<std::shared_ptr<IoCounters>>;

/// RAII wrapper over a POSIX file descriptor with counted pread/pwrite.
class File {
 public:
  enum class Mode { read_only, read_write, create };

  File(const std::filesystem::path& path, Mode mode, CounterSet counters = {});
  ~File();
  File(const File&) = delete;
  File& operator=(const File&) = delete;
  File(File&& other) noexcept;
  File& operator=(File&& other) noexcept;

  /// Reads exactly out.size() bytes at offset; throws IoError on a short read.
  void read_exact(std::uint64_t offset, std::span<std::byte> out) const;
  void write_all(std::uint64_t offset, std::span<const std::byte> in);

  std::uint64_t size() const;
  void sync();
  const std::filesystem::path& path() const { return path_; }

 private:
  int fd_ = -1;
  std::filesystem::path path_;
  CounterSet counters_;
};

/// 64-bit FNV-1a, used for content checksums in reports.
std::uint64_t fnv1a(std::span<const std::byte> bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

// Little-endian scalar (de)serialization helpers for the file headers.
template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t offset) {
  if (offset + sizeof(T) > in.size()) {
    throw FormatError("truncated field at byte " + std::to_string(offset));
  }
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

}  // namespace semeig
