#include "semeig/dense_ops.hpp"

#include "semeig/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace semeig {

namespace {

unsigned worker_count(const DenseOpsConfig& cfg) {
  return cfg.workers == 0 ? default_workers() : cfg.workers;
}

void require_same_rows(std::uint64_t a, std::uint64_t b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": row count mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

void require_same_intervals(const TasMatrix& a, const TasMatrix& b, const char* op) {
  if (a.interval_rows() != b.interval_rows()) {
    throw std::invalid_argument(std::string(op) + ": operands use different row interval sizes");
  }
}

RowIntervalBuf fresh_buf(const TasMatrix& m, std::size_t id, std::size_t n_cols) {
  RowIntervalBuf buf;
  buf.interval_id = id;
  buf.first_row = m.first_row(id);
  buf.n_rows = m.rows_in_interval(id);
  buf.cols.resize(n_cols);
  for (std::size_t c = 0; c < n_cols; ++c) buf.cols[c] = static_cast<std::uint32_t>(c);
  buf.data.assign(buf.n_rows * n_cols, 0.0);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

ColumnView::ColumnView(TasPtr m) : m_(std::move(m)) {
  if (!m_) throw std::invalid_argument("ColumnView over a null matrix");
  cols_.resize(m_->n_cols());
  for (std::uint32_t c = 0; c < m_->n_cols(); ++c) cols_[c] = c;
}

ColumnView::ColumnView(TasPtr m, std::vector<std::uint32_t> cols)
    : m_(std::move(m)), cols_(std::move(cols)) {
  if (!m_) throw std::invalid_argument("ColumnView over a null matrix");
  for (std::size_t i = 0; i < cols_.size(); ++i) {
    if (cols_[i] >= m_->n_cols()) {
      throw std::out_of_range("column index " + std::to_string(cols_[i]) + " out of range");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (cols_[j] == cols_[i]) throw std::invalid_argument("duplicate column index in view");
    }
  }
}

BlockGroupPlan plan_groups(std::span<const ColumnView> blocks, std::size_t group_size) {
  BlockGroupPlan plan;
  const std::size_t g = group_size == 0 ? std::max<std::size_t>(blocks.size(), 1) : group_size;
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    plan.col_offset.push_back(offset);
    offset += b.n_cols();
  }
  for (std::size_t first = 0; first < blocks.size(); first += g) {
    plan.groups.emplace_back(first, std::min(first + g, blocks.size()));
  }
  return plan;
}

void mv_times_mat_add_mv(double alpha, std::span<const ColumnView> aa, const SmallMatrix& b,
                         double beta, const TasPtr& cc, const DenseOpsConfig& cfg) {
  const char* op = "mv_times_mat_add_mv";
  std::size_t m = 0;
  for (const auto& blk : aa) {
    require_same_rows(blk.n_rows(), cc->n_rows(), op);
    require_same_intervals(*blk.matrix(), *cc, op);
    m += blk.n_cols();
  }
  if (b.rows() != m || b.cols() != cc->n_cols()) {
    throw std::invalid_argument(std::string(op) + ": B is " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ", expected " + std::to_string(m) + "x" +
                                std::to_string(cc->n_cols()));
  }
  const BlockGroupPlan plan = plan_groups(aa, cfg.group_size);
  const std::size_t nb = cc->n_cols();
  const unsigned workers = worker_count(cfg);

  struct Scratch {
    std::vector<RowIntervalBuf> in;
    RowIntervalBuf cc_old;
    std::vector<double> acc;
    std::vector<double> gacc;
  };
  std::vector<Scratch> scratch(workers);

  parallel_for(cc->interval_count(), workers, [&](std::size_t id, unsigned w) {
    auto& s = scratch[w];
    const std::size_t rows = cc->rows_in_interval(id);
    s.acc.assign(rows * nb, 0.0);
    for (const auto& [first, last] : plan.groups) {
      // Only this group's intervals are resident; the group's partial is
      // folded into the running sum before the next group is read.
      s.in.resize(last - first);
      for (std::size_t k = first; k < last; ++k) aa[k].read(id, s.in[k - first]);
      s.gacc.assign(rows * nb, 0.0);
      for (std::size_t k = first; k < last; ++k) {
        const auto& buf = s.in[k - first];
        for (std::size_t j = 0; j < aa[k].n_cols(); ++j) {
          const std::size_t q = plan.col_offset[k] + j;
          const double* x = buf.data.data() + j * rows;
          for (std::size_t l = 0; l < nb; ++l) {
            const double coef = b(q, l);
            double* y = s.gacc.data() + l * rows;
            for (std::size_t r = 0; r < rows; ++r) y[r] += coef * x[r];
          }
        }
      }
      if (plan.groups.size() == 1) {
        s.acc.swap(s.gacc);
      } else {
        for (std::size_t i = 0; i < s.acc.size(); ++i) s.acc[i] += s.gacc[i];
      }
    }
    RowIntervalBuf out = fresh_buf(*cc, id, nb);
    if (beta == 0.0) {
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = alpha * s.acc[i];
    } else {
      cc->read_interval_into(id, {}, s.cc_old);
      for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = alpha * s.acc[i] + beta * s.cc_old.data[i];
    }
    cc->write_interval(out);
  });
}

SmallMatrix mv_trans_mv(double alpha, std::span<const ColumnView> aa, const ColumnView& bb,
                        const DenseOpsConfig& cfg) {
  const char* op = "mv_trans_mv";
  std::size_t m = 0;
  for (const auto& blk : aa) {
    require_same_rows(blk.n_rows(), bb.n_rows(), op);
    require_same_intervals(*blk.matrix(), *bb.matrix(), op);
    m += blk.n_cols();
  }
  const std::size_t nb = bb.n_cols();
  const BlockGroupPlan plan = plan_groups(aa, cfg.group_size);
  const unsigned workers = worker_count(cfg);
  const std::size_t n_intervals = bb.matrix()->interval_count();

  struct Scratch {
    std::vector<RowIntervalBuf> in;
    RowIntervalBuf right;
  };
  std::vector<Scratch> scratch(workers);
  std::vector<std::vector<double>> partial(n_intervals);

  parallel_for(n_intervals, workers, [&](std::size_t id, unsigned w) {
    auto& s = scratch[w];
    bb.read(id, s.right);
    const std::size_t rows = s.right.n_rows;
    auto& part = partial[id];
    part.assign(m * nb, 0.0);
    for (const auto& [first, last] : plan.groups) {
      s.in.resize(last - first);
      for (std::size_t k = first; k < last; ++k) aa[k].read(id, s.in[k - first]);
      for (std::size_t k = first; k < last; ++k) {
        for (std::size_t j = 0; j < aa[k].n_cols(); ++j) {
          const std::size_t q = plan.col_offset[k] + j;
          const double* x = s.in[k - first].data.data() + j * rows;
          for (std::size_t l = 0; l < nb; ++l) {
            const double* y = s.right.data.data() + l * rows;
            double dot = 0.0;
            for (std::size_t r = 0; r < rows; ++r) dot += x[r] * y[r];
            part[l * m + q] = dot;
          }
        }
      }
    }
  });

  SmallMatrix out(m, nb);
  for (std::size_t id = 0; id < n_intervals; ++id) {
    for (std::size_t l = 0; l < nb; ++l)
      for (std::size_t q = 0; q < m; ++q) out(q, l) += partial[id][l * m + q];
  }
  if (alpha != 1.0) out = alpha * out;
  return out;
}

void mv_scale(const ColumnView& aa, double alpha, const TasPtr& out, const DenseOpsConfig& cfg) {
  std::vector<double> vec(aa.n_cols(), alpha);
  mv_scale(aa, vec, out, cfg);
}

void mv_scale(const ColumnView& aa, std::span<const double> vec, const TasPtr& out,
              const DenseOpsConfig& cfg) {
  if (vec.size() != aa.n_cols() || out->n_cols() != aa.n_cols()) {
    throw std::invalid_argument("mv_scale: scale vector length " + std::to_string(vec.size()) +
                                " does not match " + std::to_string(aa.n_cols()) + " columns");
  }
  require_same_rows(aa.n_rows(), out->n_rows(), "mv_scale");
  require_same_intervals(*aa.matrix(), *out, "mv_scale");
  const unsigned workers = worker_count(cfg);
  std::vector<RowIntervalBuf> scratch(workers);
  parallel_for(out->interval_count(), workers, [&](std::size_t id, unsigned w) {
    auto& in = scratch[w];
    aa.read(id, in);
    RowIntervalBuf o = fresh_buf(*out, id, out->n_cols());
    for (std::size_t c = 0; c < vec.size(); ++c) {
      const auto src = in.col(c);
      auto dst = o.col(c);
      for (std::size_t r = 0; r < src.size(); ++r) dst[r] = src[r] * vec[c];
    }
    out->write_interval(o);
  });
}

TasPtr mv_scale(DenseStore& store, const ColumnView& aa, double alpha, const DenseOpsConfig& cfg) {
  auto out = store.create(aa.n_rows(), static_cast<std::uint32_t>(aa.n_cols()));
  mv_scale(aa, alpha, out, cfg);
  return out;
}

TasPtr mv_scale(DenseStore& store, const ColumnView& aa, std::span<const double> vec,
                const DenseOpsConfig& cfg) {
  auto out = store.create(aa.n_rows(), static_cast<std::uint32_t>(aa.n_cols()));
  mv_scale(aa, vec, out, cfg);
  return out;
}

void mv_add_mv(double alpha, const ColumnView& aa, double beta, const ColumnView& bb,
               const TasPtr& out, const DenseOpsConfig& cfg) {
  if (aa.n_cols() != bb.n_cols() || out->n_cols() != aa.n_cols()) {
    throw std::invalid_argument("mv_add_mv: column count mismatch");
  }
  require_same_rows(aa.n_rows(), bb.n_rows(), "mv_add_mv");
  require_same_rows(aa.n_rows(), out->n_rows(), "mv_add_mv");
  require_same_intervals(*aa.matrix(), *bb.matrix(), "mv_add_mv");
  require_same_intervals(*aa.matrix(), *out, "mv_add_mv");
  const unsigned workers = worker_count(cfg);
  std::vector<std::pair<RowIntervalBuf, RowIntervalBuf>> scratch(workers);
  parallel_for(out->interval_count(), workers, [&](std::size_t id, unsigned w) {
    auto& [a, b] = scratch[w];
    aa.read(id, a);
    bb.read(id, b);
    RowIntervalBuf o = fresh_buf(*out, id, out->n_cols());
    for (std::size_t i = 0; i < o.data.size(); ++i) o.data[i] = alpha * a.data[i] + beta * b.data[i];
    out->write_interval(o);
  });
}

TasPtr mv_add_mv(DenseStore& store, double alpha, const ColumnView& aa, double beta,
                 const ColumnView& bb, const DenseOpsConfig& cfg) {
  auto out = store.create(aa.n_rows(), static_cast<std::uint32_t>(aa.n_cols()));
  mv_add_mv(alpha, aa, beta, bb, out, cfg);
  return out;
}

std::vector<double> mv_dot(const ColumnView& aa, const ColumnView& bb, const DenseOpsConfig& cfg) {
  if (aa.n_cols() != bb.n_cols()) throw std::invalid_argument("mv_dot: column count mismatch");
  require_same_rows(aa.n_rows(), bb.n_rows(), "mv_dot");
  require_same_intervals(*aa.matrix(), *bb.matrix(), "mv_dot");
  const unsigned workers = worker_count(cfg);
  const std::size_t n_intervals = aa.matrix()->interval_count();
  const std::size_t nc = aa.n_cols();
  std::vector<std::pair<RowIntervalBuf, RowIntervalBuf>> scratch(workers);
  std::vector<std::vector<double>> partial(n_intervals);
  parallel_for(n_intervals, workers, [&](std::size_t id, unsigned w) {
    auto& [a, b] = scratch[w];
    aa.read(id, a);
    bb.read(id, b);
    partial[id].assign(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto x = a.col(c);
      const auto y = b.col(c);
      double dot = 0.0;
      for (std::size_t r = 0; r < x.size(); ++r) dot += x[r] * y[r];
      partial[id][c] = dot;
    }
  });
  std::vector<double> out(nc, 0.0);
  for (const auto& p : partial)
    for (std::size_t c = 0; c < nc; ++c) out[c] += p[c];
  return out;
}

std::vector<double> mv_norm(const ColumnView& aa, const DenseOpsConfig& cfg) {
  const unsigned workers = worker_count(cfg);
  const std::size_t n_intervals = aa.matrix()->interval_count();
  const std::size_t nc = aa.n_cols();
  struct ScaledSum {
    double scale = 0.0;
    double ssq = 1.0;
    void add(double v) {
      const double a = std::abs(v);
      if (a == 0.0) return;
      if (scale < a) {
        ssq = 1.0 + ssq * (scale / a) * (scale / a);
        scale = a;
      } else {
        ssq += (a / scale) * (a / scale);
      }
    }
    void merge(const ScaledSum& o) {
      if (o.scale == 0.0) return;
      if (scale < o.scale) {
        ssq = o.ssq + ssq * (scale / o.scale) * (scale / o.scale);
        scale = o.scale;
      } else {
        ssq += o.ssq * (o.scale / scale) * (o.scale / scale);
      }
    }
  };
  std::vector<RowIntervalBuf> scratch(workers);
  std::vector<std::vector<ScaledSum>> partial(n_intervals);
  parallel_for(n_intervals, workers, [&](std::size_t id, unsigned w) {
    auto& a = scratch[w];
    aa.read(id, a);
    partial[id].assign(nc, ScaledSum{});
    for (std::size_t c = 0; c < nc; ++c)
      for (double v : a.col(c)) partial[id][c].add(v);
  });
  std::vector<ScaledSum> total(nc);
  for (const auto& p : partial)
    for (std::size_t c = 0; c < nc; ++c) total[c].merge(p[c]);
  std::vector<double> out(nc);
  for (std::size_t c = 0; c < nc; ++c) out[c] = total[c].scale * std::sqrt(total[c].ssq);
  return out;
}

ColumnView clone_view(const TasPtr& aa, std::vector<std::uint32_t> idxs) {
  return ColumnView(aa, std::move(idxs));
}

void set_block(const TasPtr& aa, std::span<const std::uint32_t> idxs, const ColumnView& bb,
               const DenseOpsConfig& cfg) {
  if (idxs.size() != bb.n_cols()) {
    throw std::invalid_argument("set_block: " + std::to_string(idxs.size()) + " target columns but " +
                                std::to_string(bb.n_cols()) + " source columns");
  }
  ColumnView target(aa, {idxs.begin(), idxs.end()});  // validates the indices
  require_same_rows(aa->n_rows(), bb.n_rows(), "set_block");
  require_same_intervals(*aa, *bb.matrix(), "set_block");
  const unsigned workers = worker_count(cfg);
  std::vector<RowIntervalBuf> scratch(workers);
  parallel_for(aa->interval_count(), workers, [&](std::size_t id, unsigned w) {
    auto& buf = scratch[w];
    bb.read(id, buf);
    buf.cols.assign(target.cols().begin(), target.cols().end());
    aa->write_interval(buf);
  });
}

void mv_random(const TasPtr& aa, std::uint64_t seed, const DenseOpsConfig& cfg) {
  parallel_for(aa->interval_count(), worker_count(cfg), [&](std::size_t id, unsigned) {
    std::mt19937_64 gen(splitmix64(seed) ^ splitmix64(0x5eed0000ULL + id));
    RowIntervalBuf buf = fresh_buf(*aa, id, aa->n_cols());
    for (double& v : buf.data) {
      const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
      v = 2.0 * u - 1.0;
    }
    aa->write_interval(buf);
  });
}

DenseBlockMem load_block(const ColumnView& aa, const DenseOpsConfig& cfg) {
  const auto& m = *aa.matrix();
  DenseBlockMem col(m.n_rows(), aa.n_cols(), m.interval_rows(), Layout::col_major);
  const unsigned workers = worker_count(cfg);
  std::vector<RowIntervalBuf> scratch(workers);
  parallel_for(m.interval_count(), workers, [&](std::size_t id, unsigned w) {
    aa.read(id, scratch[w]);
    std::memcpy(col.interval(id).data(), scratch[w].data.data(), scratch[w].data.size() * sizeof(double));
  });
  return col.conv_layout(Layout::row_major);
}

void store_block(const DenseBlockMem& m, const TasPtr& out, const DenseOpsConfig& cfg) {
  if (m.n_rows() != out->n_rows() || m.n_cols() != out->n_cols()) {
    throw std::invalid_argument("store_block: shape mismatch");
  }
  const bool same_intervals = m.interval_rows() == out->interval_rows();
  const DenseBlockMem col = same_intervals ? m.conv_layout(Layout::col_major) : DenseBlockMem{};
  parallel_for(out->interval_count(), worker_count(cfg), [&](std::size_t id, unsigned) {
    RowIntervalBuf buf = fresh_buf(*out, id, out->n_cols());
    if (same_intervals) {
      std::memcpy(buf.data.data(), col.interval(id).data(), buf.data.size() * sizeof(double));
    } else {
      for (std::size_t c = 0; c < buf.cols.size(); ++c)
        for (std::size_t r = 0; r < buf.n_rows; ++r) buf.at(r, c) = m.at(buf.first_row + r, c);
    }
    out->write_interval(buf);
  });
}

bool cache_policy(DenseStore& store, TasMatrix& produced) { return store.make_recent(produced); }

}  // namespace semeig
