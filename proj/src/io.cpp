#include "semeig/io.hpp"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

namespace semeig {

namespace {

std::string errno_message(const std::string& what, const std::filesystem::path& path) {
  return what + " '" + path.string() + "': " + std::strerror(errno);
}

}  // namespace

IoCounters& process_io_counters() {
  static IoCounters counters;
  return counters;
}

File::File(const std::filesystem::path& path, Mode mode, CounterSet counters)
    : path_(path), counters_(std::move(counters)) {
  int flags = O_CLOEXEC;
  switch (mode) {
    case Mode::read_only: flags |= O_RDONLY; break;
    case Mode::read_write: flags |= O_RDWR; break;
    case Mode::create: flags |= O_RDWR | O_CREAT | O_TRUNC; break;
  }
  fd_ = ::open(path.c_str(), flags, 0644);
  if (fd_ < 0) throw IoError(errno_message("cannot open", path));
}

File::~File() {
  if (fd_ >= 0) ::close(fd_);
}

File::File(File&& other) noexcept
    : fd_(other.fd_), path_(std::move(other.path_)), counters_(std::move(other.counters_)) {
  other.fd_ = -1;
}

File& File::operator=(File&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    path_ = std::move(other.path_);
    counters_ = std::move(other.counters_);
    other.fd_ = -1;
  }
  return *this;
}

void File::read_exact(std::uint64_t offset, std::span<std::byte> out) const {
  std::size_t done = 0;
  while (done < out.size()) {
    ssize_t n = ::pread(fd_, out.data() + done, out.size() - done,
                        static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(errno_message("read failed on", path_));
    }
    if (n == 0) {
      throw IoError("short read on '" + path_.string() + "' at offset " +
                    std::to_string(offset + done) + " (wanted " +
                    std::to_string(out.size()) + " bytes)");
    }
    done += static_cast<std::size_t>(n);
  }
  process_io_counters().add_read(out.size());
  for (const auto& c : counters_) c->add_read(out.size());
}

void File::write_all(std::uint64_t offset, std::span<const std::byte> in) {
  std::size_t done = 0;
  while (done < in.size()) {
    ssize_t n = ::pwrite(fd_, in.data() + done, in.size() - done,
                         static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(errno_message("write failed on", path_));
    }
    done += static_cast<std::size_t>(n);
  }
  process_io_counters().add_write(in.size());
  for (const auto& c : counters_) c->add_write(in.size());
}

std::uint64_t File::size() const {
  struct stat st {};
  if (::fstat(fd_, &st) != 0) throw IoError(errno_message("cannot stat", path_));
  return static_cast<std::uint64_t>(st.st_size);
}

void File::sync() {
  if (::fsync(fd_) != 0) throw IoError(errno_message("fsync failed on", path_));
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace semeig
