#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "semeig/dense_ops.hpp"
#include "support.hpp"

using namespace semeig;
using testing::Dense;
using testing::Rng;
using testing::TempDir;

namespace {

TasPtr make(DenseStore& store, const Dense& d) {
  auto m = store.create(d.rows, static_cast<std::uint32_t>(d.cols));
  testing::fill_tas(m, d);
  return m;
}

std::vector<ColumnView> split(DenseStore& store, const Dense& d, std::size_t width) {
  std::vector<ColumnView> out;
  for (std::size_t c0 = 0; c0 < d.cols; c0 += width) {
    Dense part(d.rows, std::min(width, d.cols - c0));
    for (std::size_t i = 0; i < d.rows; ++i)
      for (std::size_t j = 0; j < part.cols; ++j) part(i, j) = d(i, c0 + j);
    out.emplace_back(make(store, part));
  }
  return out;
}

SmallMatrix random_small(std::size_t r, std::size_t c, Rng& rng) {
  SmallMatrix m(r, c);
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t i = 0; i < r; ++i) m(i, j) = rng.uniform();
  return m;
}

Dense naive_times(double alpha, const Dense& a, const SmallMatrix& b, double beta, const Dense& c) {
  Dense out(a.rows, b.cols());
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t l = 0; l < b.cols(); ++l) {
      double s = 0.0;
      for (std::size_t q = 0; q < a.cols; ++q) s += a(i, q) * b(q, l);
      out(i, l) = alpha * s + beta * c(i, l);
    }
  return out;
}

SmallMatrix naive_trans(double alpha, const Dense& a, const Dense& b) {
  SmallMatrix out(a.cols, b.cols);
  for (std::size_t q = 0; q < a.cols; ++q)
    for (std::size_t l = 0; l < b.cols; ++l) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows; ++i) s += a(i, q) * b(i, l);
      out(q, l) = alpha * s;
    }
  return out;
}

double rel_err(const SmallMatrix& got, const SmallMatrix& want) {
  return (got - want).frobenius() / std::max(want.frobenius(), 1e-300);
}

}  // namespace

TEST_CASE("mv_times_mat_add_mv: worked examples") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(1);
  const Dense a = testing::random_dense(300, 4, rng);
  const auto aa = split(store, a, 4);

  SUBCASE("identity B copies AA") {
    auto cc = make(store, testing::random_dense(300, 4, rng));
    mv_times_mat_add_mv(1.0, aa, SmallMatrix::identity(4), 0.0, cc);
    CHECK(testing::read_tas(*cc).v == a.v);
  }
  SUBCASE("alpha 0, beta 1 leaves CC unchanged") {
    const Dense c = testing::random_dense(300, 4, rng);
    auto cc = make(store, c);
    mv_times_mat_add_mv(0.0, aa, random_small(4, 4, rng), 1.0, cc);
    CHECK(testing::read_tas(*cc).v == c.v);
  }
  SUBCASE("random n=512, three blocks of 4, g=2") {
    const Dense big = testing::random_dense(512, 12, rng);
    const auto blocks = split(store, big, 4);
    const SmallMatrix b = random_small(12, 4, rng);
    const Dense c = testing::random_dense(512, 4, rng);
    auto cc = make(store, c);
    DenseOpsConfig cfg;
    cfg.group_size = 2;
    mv_times_mat_add_mv(0.5, blocks, b, -2.0, cc, cfg);
    CHECK(testing::rel_frobenius_error(testing::read_tas(*cc), naive_times(0.5, big, b, -2.0, c)) < 1e-13);
  }
  SUBCASE("output may alias an input block") {
    const SmallMatrix b = random_small(4, 4, rng);
    auto self = make(store, a);
    const std::vector<ColumnView> in{ColumnView(self)};
    mv_times_mat_add_mv(1.0, in, b, 1.0, self);
    CHECK(testing::rel_frobenius_error(testing::read_tas(*self), naive_times(1.0, a, b, 1.0, a)) < 1e-13);
  }
  SUBCASE("shape errors") {
    auto cc = make(store, testing::random_dense(300, 3, rng));
    CHECK_THROWS_AS(mv_times_mat_add_mv(1.0, aa, SmallMatrix(4, 4), 0.0, cc), std::invalid_argument);
    auto other = make(store, testing::random_dense(200, 4, rng));
    CHECK_THROWS_AS(mv_times_mat_add_mv(1.0, aa, SmallMatrix(4, 4), 0.0, other), std::invalid_argument);
  }
}

TEST_CASE("mv_times_mat_add_mv with beta 0 never reads CC") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(2);
  const auto aa = split(store, testing::random_dense(256, 4, rng), 4);
  auto cc = store.create(256, 4);
  const IoStats before = cc->io_stats();
  mv_times_mat_add_mv(1.0, aa, random_small(4, 4, rng), 0.0, cc);
  CHECK((cc->io_stats() - before).bytes_read == 0);
}

TEST_CASE("mv_trans_mv: worked examples") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(3);
  SUBCASE("orthonormal block gives the identity") {
    Eigen::MatrixXd raw = Eigen::MatrixXd::Random(500, 6);
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(raw).householderQ() * Eigen::MatrixXd::Identity(500, 6);
    Dense d(500, 6);
    for (std::size_t i = 0; i < 500; ++i)
      for (std::size_t j = 0; j < 6; ++j) d(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    auto m = make(store, d);
    const std::vector<ColumnView> aa{ColumnView(m)};
    CHECK((mv_trans_mv(1.0, aa, ColumnView(m)) - SmallMatrix::identity(6)).max_abs() < 1e-12);
  }
  SUBCASE("ones 4x2, alpha 2") {
    Dense ones(4, 2);
    std::fill(ones.v.begin(), ones.v.end(), 1.0);
    auto m = make(store, ones);
    const std::vector<ColumnView> aa{ColumnView(m)};
    CHECK(mv_trans_mv(2.0, aa, ColumnView(m)) == SmallMatrix(2, 2, 8.0));
  }
  SUBCASE("random n=512, m=12, b=4") {
    const Dense a = testing::random_dense(512, 12, rng);
    const Dense b = testing::random_dense(512, 4, rng);
    const auto aa = split(store, a, 4);
    auto bb = make(store, b);
    CHECK(rel_err(mv_trans_mv(1.5, aa, ColumnView(bb)), naive_trans(1.5, a, b)) < 1e-13);
  }
  SUBCASE("row mismatch") {
    const auto aa = split(store, testing::random_dense(100, 2, rng), 2);
    auto bb = make(store, testing::random_dense(99, 2, rng));
    CHECK_THROWS_AS(mv_trans_mv(1.0, aa, ColumnView(bb)), std::invalid_argument);
  }
}

TEST_CASE("mv_trans_mv reads BB once per interval") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(4);
  const auto aa = split(store, testing::random_dense(640, 16, rng), 2);
  auto bb = make(store, testing::random_dense(640, 3, rng));
  DenseOpsConfig cfg;
  cfg.group_size = 2;  // four groups share one pass over BB
  const IoStats before = bb->io_stats();
  (void)mv_trans_mv(1.0, aa, ColumnView(bb), cfg);
  const IoStats d = bb->io_stats() - before;
  CHECK(d.bytes_read == 640 * 3 * 8);
  CHECK(d.read_ops == bb->interval_count());
}

TEST_CASE("mv_scale") {
  TempDir dir;
  DenseStore store(dir.path(), 32, 0);
  Rng rng(5);
  const Dense a = testing::random_dense(100, 2, rng);
  auto aa = make(store, a);
  CHECK(testing::read_tas(*mv_scale(store, ColumnView(aa), 1.0)).v == a.v);
  const std::vector<double> ones{1.0, 1.0};
  CHECK(testing::read_tas(*mv_scale(store, ColumnView(aa), ones)).v == a.v);
  const std::vector<double> vec{2.0, 3.0};
  const Dense got = testing::read_tas(*mv_scale(store, ColumnView(aa), vec));
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(got(i, 0) == a(i, 0) * 2.0);
    CHECK(got(i, 1) == a(i, 1) * 3.0);
  }
  const std::vector<double> short_vec{1.0};
  CHECK_THROWS_AS(mv_scale(store, ColumnView(aa), short_vec), std::invalid_argument);
}

TEST_CASE("mv_add_mv") {
  TempDir dir;
  DenseStore store(dir.path(), 32, 0);
  Rng rng(6);
  const Dense a = testing::random_dense(90, 3, rng);
  const Dense b = testing::random_dense(90, 3, rng);
  auto aa = make(store, a);
  auto bb = make(store, b);
  CHECK(testing::read_tas(*mv_add_mv(store, 1.0, aa, 0.0, bb)).v == a.v);
  const Dense zero = testing::read_tas(*mv_add_mv(store, 1.0, aa, -1.0, aa));
  CHECK(std::all_of(zero.v.begin(), zero.v.end(), [](double v) { return v == 0.0; }));
  const Dense got = testing::read_tas(*mv_add_mv(store, 0.25, aa, -3.0, bb));
  for (std::size_t i = 0; i < got.v.size(); ++i) CHECK(got.v[i] == 0.25 * a.v[i] + -3.0 * b.v[i]);
  auto wrong = make(store, testing::random_dense(90, 2, rng));
  CHECK_THROWS_AS(mv_add_mv(store, 1.0, aa, 1.0, wrong), std::invalid_argument);
}

TEST_CASE("mv_dot and mv_norm") {
  TempDir dir;
  DenseStore store(dir.path(), 32, 0);
  Rng rng(7);
  Dense z(50, 1);
  CHECK(mv_norm(ColumnView(make(store, z))) == std::vector<double>{0.0});
  Dense ones(4, 1);
  ones.v = {1, 1, 1, 1};
  CHECK(mv_norm(ColumnView(make(store, ones))) == std::vector<double>{2.0});

  const Dense a = testing::random_dense(1000, 5, rng);
  auto aa = make(store, a);
  const auto dot = mv_dot(aa, aa);
  const auto nrm = mv_norm(aa);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(dot[i] - nrm[i] * nrm[i]) < 1e-12);

  Dense huge(8, 1);
  std::fill(huge.v.begin(), huge.v.end(), 1e200);
  const double hn = mv_norm(ColumnView(make(store, huge)))[0];
  CHECK(std::isfinite(hn));
  CHECK(std::abs(hn / (1e200 * std::sqrt(8.0)) - 1.0) < 1e-14);
  Dense tiny(8, 1);
  std::fill(tiny.v.begin(), tiny.v.end(), 1e-200);
  CHECK(mv_norm(ColumnView(make(store, tiny)))[0] > 0.0);
}

TEST_CASE("clone_view and set_block") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(8);
  const Dense a = testing::random_dense(300, 4, rng);
  auto aa = make(store, a);

  SUBCASE("all columns") {
    const ColumnView v = clone_view(aa, {0, 1, 2, 3});
    Dense got(300, 4);
    for (std::size_t id = 0; id < aa->interval_count(); ++id) {
      RowIntervalBuf buf;
      v.read(id, buf);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t r = 0; r < buf.n_rows; ++r) got(buf.first_row + r, c) = buf.at(r, c);
    }
    CHECK(got.v == a.v);
  }
  SUBCASE("single column matches element reads") {
    const ColumnView v = clone_view(aa, {1});
    const DenseBlockMem mem = load_block(v);
    for (int k = 0; k < 40; ++k) {
      const std::size_t i = rng.below(300);
      CHECK(mem.at(i, 0) == a(i, 1));
    }
  }
  SUBCASE("set_block then clone_view returns BB") {
    const Dense b = testing::random_dense(300, 2, rng);
    auto bb = make(store, b);
    const std::vector<std::uint32_t> idx{3, 0};
    set_block(aa, idx, bb);
    const DenseBlockMem back = load_block(clone_view(aa, idx));
    CHECK(testing::from_block(back).v == b.v);
    const Dense after = testing::read_tas(*aa);
    for (std::size_t i = 0; i < 300; ++i) CHECK(after(i, 1) == a(i, 1));
  }
  SUBCASE("index errors") {
    CHECK_THROWS_AS(clone_view(aa, {4}), std::out_of_range);
    CHECK_THROWS_AS(clone_view(aa, {1, 1}), std::invalid_argument);
    auto bb = make(store, testing::random_dense(300, 1, rng));
    const std::vector<std::uint32_t> two{0, 1};
    CHECK_THROWS_AS(set_block(aa, two, bb), std::invalid_argument);
  }
  SUBCASE("views read only their columns") {
    const IoStats before = aa->io_stats();
    (void)load_block(clone_view(aa, {2}));
    const IoStats d = aa->io_stats() - before;
    const double file_bytes = static_cast<double>(aa->payload_bytes());
    const double interval_bytes = 64.0 * 4 * 8;
    CHECK(static_cast<double>(d.bytes_read) <= file_bytes / 4.0 + interval_bytes);
  }
}

TEST_CASE("mv_random") {
  TempDir dir;
  DenseStore store(dir.path(), 128, 0);
  auto a = store.create(1000, 3);
  auto b = store.create(1000, 3);
  auto c = store.create(1000, 3);
  mv_random(a, 42);
  mv_random(b, 42);
  mv_random(c, 43);
  const Dense da = testing::read_tas(*a);
  const Dense dc = testing::read_tas(*c);
  CHECK(da.v == testing::read_tas(*b).v);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < da.v.size(); ++i) differ += da.v[i] != dc.v[i];
  CHECK(differ >= da.v.size() * 99 / 100);
  for (double v : da.v) CHECK((v >= -1.0 && v < 1.0));
  for (double n : mv_norm(a)) CHECK(n > 0.0);
  // Worker count does not change the stream.
  DenseOpsConfig four;
  four.workers = 4;
  mv_random(b, 42, four);
  CHECK(testing::read_tas(*b).v == da.v);
}

TEST_CASE("load_block and store_block round-trip") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(9);
  const Dense a = testing::random_dense(333, 4, rng);
  auto aa = make(store, a);
  const DenseBlockMem mem = load_block(aa);
  CHECK(mem.layout() == Layout::row_major);
  CHECK(testing::from_block(mem).v == a.v);
  auto back = store.create(333, 4);
  store_block(mem, back);
  CHECK(testing::read_tas(*back).v == a.v);
  auto back2 = store.create(333, 4);
  store_block(testing::to_block(a, 16), back2);  // different interval size
  CHECK(testing::read_tas(*back2).v == a.v);
}

TEST_CASE("cache_policy: reads of the recent block are served from memory") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 1u << 20);
  Rng rng(10);
  const Dense w = testing::random_dense(500, 4, rng);
  const auto basis = split(store, testing::random_dense(500, 8, rng), 4);

  auto produced = store.create(500, 4);
  CHECK(cache_policy(store, *produced));
  testing::fill_tas(produced, w);
  const IoStats before = produced->io_stats();
  const SmallMatrix g = mv_trans_mv(1.0, basis, ColumnView(produced));
  CHECK(produced->io_stats().bytes_read == before.bytes_read);
  CHECK(produced->io_stats().bytes_written == before.bytes_written);  // deferred

  // Producing the next block evicts and flushes this one.
  auto next = store.create(500, 4);
  cache_policy(store, *next);
  CHECK(produced->io_stats().bytes_written - before.bytes_written == 500 * 4 * 8);
  CHECK(testing::read_tas(*produced).v == w.v);

  // Same result with caching off.
  TempDir dir2;
  DenseStore plain(dir2.path(), 64, 0);
  const Dense b8 = testing::read_tas(*basis[0].matrix());
  const Dense b8b = testing::read_tas(*basis[1].matrix());
  const std::vector<ColumnView> basis2{ColumnView(make(plain, b8)), ColumnView(make(plain, b8b))};
  auto p2 = make(plain, w);
  CHECK_FALSE(cache_policy(plain, *p2));
  const IoStats b2 = p2->io_stats();
  CHECK(mv_trans_mv(1.0, basis2, ColumnView(p2)) == g);
  CHECK(p2->io_stats().bytes_read - b2.bytes_read == 500 * 4 * 8);
}

TEST_CASE("cache: a temporary dropped while cached is never written") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 1u << 20);
  Rng rng(11);
  IoStats before;
  {
    auto t = store.create(400, 2);
    store.make_recent(*t);
    before = store.io_counters();
    testing::fill_tas(t, testing::random_dense(400, 2, rng));
  }
  CHECK(store.io_counters().bytes_written == before.bytes_written);
}

TEST_CASE("cache: blocks larger than the budget are not admitted") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 100);
  auto t = store.create(400, 2);
  CHECK_FALSE(cache_policy(store, *t));
}

TEST_CASE("property: group size and worker count transparency") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(2000);
    const std::size_t b = 1 + rng.below(8);
    const std::size_t nb = 1 + rng.below(8);
    const Dense a = testing::random_dense(n, b * nb, rng);
    const auto aa = split(store, a, b);
    const Dense cd = testing::random_dense(n, b, rng);
    auto bb = make(store, cd);
    const SmallMatrix coef = random_small(b * nb, b, rng);

    std::vector<SmallMatrix> trans;
    std::vector<Dense> times;
    for (std::size_t g : {1, 2, 4, 0}) {
      for (unsigned w : {1u, 4u}) {
        DenseOpsConfig cfg{w, g};
        trans.push_back(mv_trans_mv(1.0, aa, ColumnView(bb), cfg));
        auto cc = make(store, cd);
        mv_times_mat_add_mv(1.0, aa, coef, 1.0, cc, cfg);
        times.push_back(testing::read_tas(*cc));
        // Same g, any worker count: bitwise equal.
        if (w == 4u) {
          CHECK(trans[trans.size() - 1] == trans[trans.size() - 2]);
          CHECK(times[times.size() - 1].v == times[times.size() - 2].v);
        }
      }
    }
    for (std::size_t i = 1; i < trans.size(); ++i) {
      CHECK((trans[i] - trans[0]).max_abs() < 1e-12);
      CHECK(testing::max_abs_diff(times[i], times[0]) < 1e-12);
    }
    CHECK(rel_err(trans[0], naive_trans(1.0, a, cd)) < 1e-13);
  }
}

TEST_CASE("plan_groups covers blocks in order") {
  TempDir dir;
  DenseStore store(dir.path(), 64, 0);
  Rng rng(13);
  const auto aa = split(store, testing::random_dense(10, 7, rng), 2);  // widths 2,2,2,1
  const BlockGroupPlan p = plan_groups(aa, 3);
  REQUIRE(p.groups.size() == 2);
  CHECK(p.groups[0] == std::pair<std::size_t, std::size_t>{0, 3});
  CHECK(p.groups[1] == std::pair<std::size_t, std::size_t>{3, 4});
  CHECK(p.col_offset == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(plan_groups(aa, 0).groups.size() == 1);
}
