#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "semeig/dense_store.hpp"
#include "support.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <thread>

using namespace semeig;
using testing::Dense;
using testing::Rng;
using testing::TempDir;

namespace {

double pread_double(const std::filesystem::path& p, std::uint64_t offset) {
  const int fd = ::open(p.c_str(), O_RDONLY);
  REQUIRE(fd >= 0);
  double v = 0.0;
  const ssize_t got = ::pread(fd, &v, sizeof v, static_cast<off_t>(offset));
  ::close(fd);
  REQUIRE(got == static_cast<ssize_t>(sizeof v));
  return v;
}

}  // namespace

TEST_CASE("tas_create: interval counts and sizes") {
  TempDir dir;
  auto a = TasMatrix::create(dir / "a.tas", 8, 2, 4);
  CHECK(a->interval_count() == 2);
  auto b = TasMatrix::create(dir / "b.tas", 10, 2, 4);
  CHECK(b->interval_count() == 3);
  CHECK(b->rows_in_interval(2) == 2);
  {
    auto c = TasMatrix::create(dir / "c.tas", 1u << 20, 4, 1u << 16);
    CHECK(c->interval_count() == 16);
    Dense zero(1u << 20, 4);
    testing::fill_tas(c, zero);
  }
  CHECK(std::filesystem::file_size(dir / "c.tas") == kTasHeaderBytes + (1ull << 20) * 4 * 8);
  CHECK_THROWS_AS(TasMatrix::create(dir / "d.tas", 8, 2, 3), std::invalid_argument);
  CHECK_THROWS(TasMatrix::create(dir / "missing/d.tas", 8, 2, 4));
  CHECK(a->data_id() != b->data_id());
}

TEST_CASE("io counters: header write and one interval") {
  TempDir dir;
  auto counters = std::make_shared<IoCounters>();
  auto m = TasMatrix::create(dir / "m.tas", 1u << 11, 4, 1u << 10, {counters});
  CHECK(counters->snapshot().bytes_written == kTasHeaderBytes);
  CHECK(m->io_stats().bytes_written == kTasHeaderBytes);

  RowIntervalBuf buf;
  buf.interval_id = 0;
  buf.first_row = 0;
  buf.n_rows = 1u << 10;
  buf.cols = {0, 1, 2, 3};
  buf.data.assign(buf.n_rows * 4, 1.5);
  const IoStats before = counters->snapshot();
  m->write_interval(buf);
  const IoStats d = counters->snapshot() - before;
  CHECK(d.bytes_written == (1u << 10) * 4 * 8);
  CHECK(d.write_ops == 1);
}

TEST_CASE("interval round-trip, column subsets and range errors") {
  TempDir dir;
  Rng rng(1);
  auto m = TasMatrix::create(dir / "r.tas", 10, 2, 4);
  const Dense d = testing::random_dense(10, 2, rng);
  testing::fill_tas(m, d);
  CHECK(testing::read_tas(*m).v == d.v);

  for (std::size_t id = 0; id < m->interval_count(); ++id) {
    const auto full = m->read_interval(id);
    const std::vector<std::uint32_t> one{1};
    const auto sub = m->read_interval(id, one);
    REQUIRE(sub.data.size() == full.n_rows);
    for (std::size_t r = 0; r < full.n_rows; ++r) CHECK(sub.at(r, 0) == full.at(r, 1));
  }
  CHECK_THROWS_AS(m->read_interval(3), std::out_of_range);
  const std::vector<std::uint32_t> bad{2};
  CHECK_THROWS_AS(m->read_interval(0, bad), std::out_of_range);
}

TEST_CASE("full-column reads issue one I/O per interval") {
  TempDir dir;
  Rng rng(2);
  auto m = TasMatrix::create(dir / "f.tas", 100, 3, 32);
  testing::fill_tas(m, testing::random_dense(100, 3, rng));
  const IoStats before = m->io_stats();
  for (std::size_t id = 0; id < m->interval_count(); ++id) (void)m->read_interval(id);
  const IoStats d = m->io_stats() - before;
  CHECK(d.read_ops == m->interval_count());
  CHECK(d.bytes_read == 100 * 3 * 8);
}

TEST_CASE("open validates the file") {
  TempDir dir;
  Rng rng(3);
  {
    auto m = TasMatrix::create(dir / "v.tas", 37, 2, 8);
    testing::fill_tas(m, testing::random_dense(37, 2, rng));
  }
  auto m = TasMatrix::open(dir / "v.tas");
  CHECK(m->n_rows() == 37);
  CHECK(m->n_cols() == 2);
  CHECK(m->interval_rows() == 8);
  std::filesystem::resize_file(dir / "v.tas", std::filesystem::file_size(dir / "v.tas") - 8);
  CHECK_THROWS_AS(TasMatrix::open(dir / "v.tas"), FormatError);
}

TEST_CASE("property: layout formula addresses each element") {
  TempDir dir;
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint64_t n = 1 + rng.below(2000);
    const std::uint32_t c = 1 + static_cast<std::uint32_t>(rng.below(6));
    const std::uint32_t iv = 1u << (2 + rng.below(8));
    const Dense d = testing::random_dense(n, c, rng);
    {
      auto m = TasMatrix::create(dir / "l.tas", n, c, iv);
      testing::fill_tas(m, d);
    }
    auto m = TasMatrix::open(dir / "l.tas");
    CHECK(std::filesystem::file_size(dir / "l.tas") == kTasHeaderBytes + n * c * 8);
    for (int probe = 0; probe < 50; ++probe) {
      const std::uint64_t r = rng.below(n);
      const std::uint32_t col = static_cast<std::uint32_t>(rng.below(c));
      // interval r / iv, column-major inside it, last interval packed.
      const std::uint64_t id = r / iv;
      const std::uint64_t rows = std::min<std::uint64_t>(iv, n - id * iv);
      const std::uint64_t off = kTasHeaderBytes + (id * iv * c + col * rows + (r - id * iv)) * 8;
      CHECK(m->element_offset(r, col) == off);
      CHECK(pread_double(dir / "l.tas", off) == d(r, col));
      CHECK(m->read_element(r, col) == d(r, col));
    }
  }
}

TEST_CASE("transposed view shares the data id") {
  TempDir dir;
  Rng rng(5);
  auto m = TasMatrix::create(dir / "t.tas", 6, 2, 4);
  const Dense d = testing::random_dense(6, 2, rng);
  testing::fill_tas(m, d);
  const TransposedTas t = transpose(m);
  CHECK(t.data_id() == m->data_id());
  CHECK(t.n_rows() == 2);
  CHECK(t.n_cols() == 6);
  CHECK(t.read_element(1, 4) == d(4, 1));
}

TEST_CASE("contended writes to one interval either succeed whole or are rejected") {
  TempDir dir;
  auto m = TasMatrix::create(dir / "w.tas", 1u << 16, 1, 1u << 16);
  RowIntervalBuf buf;
  buf.interval_id = 0;
  buf.n_rows = 1u << 16;
  buf.cols = {0};
  buf.data.assign(buf.n_rows, 2.0);
  std::atomic<int> rejected{0};
  std::atomic<bool> go{false};
  {
    std::vector<std::jthread> ts;
    for (int t = 0; t < 4; ++t) {
      ts.emplace_back([&] {
        while (!go.load()) {
        }
        for (int i = 0; i < 50; ++i) {
          try {
            m->write_interval(buf);
          } catch (const std::logic_error&) {
            rejected.fetch_add(1);
          }
        }
      });
    }
    go.store(true);
  }
  // Whatever interleaving happened, the payload is intact.
  const auto back = m->read_interval(0);
  CHECK(std::all_of(back.data.begin(), back.data.end(), [](double v) { return v == 2.0; }));
  CHECK(rejected.load() < 200);  // some write always gets through
}

TEST_CASE("DenseStore: temporaries vanish, persistent files stay") {
  TempDir dir;
  std::filesystem::path tmp_path;
  {
    DenseStore store(dir.path(), 16, 0);
    auto t = store.create(40, 2);
    tmp_path = t->path();
    CHECK(std::filesystem::exists(tmp_path));
    auto p = store.create_at(dir / "keep.tas", 40, 2);
    Rng rng(6);
    testing::fill_tas(p, testing::random_dense(40, 2, rng));
  }
  CHECK(!std::filesystem::exists(tmp_path));
  CHECK(std::filesystem::exists(dir / "keep.tas"));
}

TEST_CASE("counters never decrease") {
  TempDir dir;
  DenseStore store(dir.path(), 16, 1u << 20);
  Rng rng(7);
  IoStats last = store.io_counters();
  auto check = [&] {
    const IoStats now = store.io_counters();
    CHECK(now.bytes_read >= last.bytes_read);
    CHECK(now.bytes_written >= last.bytes_written);
    CHECK(now.read_ops >= last.read_ops);
    CHECK(now.write_ops >= last.write_ops);
    last = now;
  };
  for (int i = 0; i < 20; ++i) {
    auto m = store.create(50 + rng.below(50), 2);
    check();
    if (i % 3 == 0) store.make_recent(*m);
    testing::fill_tas(m, testing::random_dense(m->n_rows(), 2, rng));
    check();
    (void)testing::read_tas(*m);
    check();
  }
}
