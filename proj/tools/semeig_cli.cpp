// semeig: convert edge lists, inspect files, benchmark SpMM and compute
// eigenpairs. Output is one key=value record per line.
//
// Exit codes: 0 ok, 2 usage, 3 I/O or file format, 4 numerical failure or
// no convergence.

#include "semeig/dense_ops.hpp"
#include "semeig/dense_store.hpp"
#include "semeig/eigensolver.hpp"
#include "semeig/io.hpp"
#include "semeig/parallel.hpp"
#include "semeig/report.hpp"
#include "semeig/sparse_format.hpp"
#include "semeig/spmm.hpp"

#include <CLI11.hpp>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

namespace fs = std::filesystem;
using namespace semeig;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void emit(const Record& r) { std::cout << format_record(r) << '\n'; }

std::string file_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw FormatError(path.string() + ": too short to hold a header");
  return std::string(magic, 4);
}

// --- convert ---------------------------------------------------------------

struct ConvertArgs {
  std::string edges;
  std::string out;
  std::uint64_t n = 0;
  bool symmetrize = false;
  std::uint32_t tile_size = kDefaultTileSize;
  bool weighted = false;
  bool binary = false;
};

int run_convert(const ConvertArgs& a) {
  TileDims dims = TileDims::square(a.tile_size);
  dims.validate();
  if (a.weighted && a.binary) throw std::invalid_argument("--weighted needs a text edge list");
  Stopwatch clock;
  const IoStats io0 = process_io_counters().snapshot();

  std::vector<Edge> edges = a.binary ? read_edge_list_binary(a.edges) : read_edge_list_text(fs::path(a.edges));
  std::uint64_t n = a.n;
  if (n == 0) {
    for (const auto& e : edges) n = std::max({n, e.src + 1, e.dst + 1});
  }
  BuildOptions opt;
  opt.symmetrize = a.symmetrize;
  opt.tile_dims = dims;
  opt.value_kind = a.weighted ? ValueKind::float64 : ValueKind::binary;
  const BuildStats st = build_matrix(edges, n, opt, a.out);

  RunReport rep;
  rep.command = "convert";
  rep.parameters = {{"edges", a.edges},
                    {"out", a.out},
                    {"n", std::to_string(n)},
                    {"symmetrize", a.symmetrize ? "1" : "0"},
                    {"tile_size", std::to_string(a.tile_size)},
                    {"weighted", a.weighted ? "1" : "0"}};
  rep.wall_seconds = clock.seconds();
  rep.io = process_io_counters().snapshot() - io0;
  rep.result = {{"edges_read", std::to_string(edges.size())},
                {"nnz", std::to_string(st.nnz)},
                {"tile_rows", std::to_string(st.n_tile_rows)},
                {"header_bytes", std::to_string(st.header_bytes)},
                {"data_bytes", std::to_string(st.data_bytes)}};
  std::cout << rep.to_line() << '\n';
  return 0;
}

// --- info ------------------------------------------------------------------

int run_info(const std::string& path) {
  Stopwatch clock;
  const IoStats io0 = process_io_counters().snapshot();
  const std::string magic = file_magic(path);
  RunReport rep;
  rep.command = "info";
  rep.parameters = {{"matrix", path}};
  if (magic == "FEM1") {
    const auto m = SparseTileMatrix::open(path);
    const std::uint64_t nnz = m.nnz();
    const std::uint64_t csr8 = (m.n_rows() + 1) * 8 + nnz * 8;
    rep.result = {{"format", "sparse"},
                  {"n_rows", std::to_string(m.n_rows())},
                  {"n_cols", std::to_string(m.n_cols())},
                  {"tile_size", std::to_string(m.tile_dims().tile_rows)},
                  {"value_kind", to_string(m.value_kind())},
                  {"tile_rows", std::to_string(m.n_tile_rows())},
                  {"nnz", std::to_string(nnz)},
                  {"header_bytes", std::to_string(m.header_bytes())},
                  {"data_bytes", std::to_string(m.data_bytes())},
                  {"file_bytes", std::to_string(m.file_bytes())},
                  {"csr8_bytes", std::to_string(csr8)},
                  {"checksum", std::to_string(m.data_checksum())}};
  } else if (magic == "FET1") {
    const auto m = TasMatrix::open(path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t id = 0; id < m->interval_count(); ++id) {
      const RowIntervalBuf buf = m->read_interval(id);
      h = fnv1a(std::as_bytes(std::span(buf.data)), h);
    }
    rep.result = {{"format", "tas"},
                  {"n_rows", std::to_string(m->n_rows())},
                  {"n_cols", std::to_string(m->n_cols())},
                  {"interval_rows", std::to_string(m->interval_rows())},
                  {"intervals", std::to_string(m->interval_count())},
                  {"data_id", std::to_string(m->data_id())},
                  {"header_bytes", std::to_string(kTasHeaderBytes)},
                  {"data_bytes", std::to_string(m->payload_bytes())},
                  {"checksum", std::to_string(h)}};
  } else {
    throw FormatError(path + ": unknown file magic");
  }
  rep.wall_seconds = clock.seconds();
  rep.io = process_io_counters().snapshot() - io0;
  std::cout << rep.to_line() << '\n';
  return 0;
}

// --- spmm-bench ------------------------------------------------------------

struct BenchArgs {
  std::string matrix;
  std::size_t cols = 1;
  std::size_t reps = 3;
  unsigned workers = 0;
  std::size_t cache_budget = kDefaultCacheBudget;
  std::uint64_t seed = 1;
};

int run_bench(const BenchArgs& a) {
  if (a.cols == 0 || a.reps == 0) throw std::invalid_argument("--cols and --reps must be positive");
  Stopwatch clock;
  const IoStats io0 = process_io_counters().snapshot();
  const auto m = SparseTileMatrix::open(a.matrix);
  const std::size_t interval = std::max<std::size_t>(kDefaultIntervalRows, m.tile_dims().tile_rows);

  DenseBlockMem x(m.n_cols(), a.cols, interval, Layout::row_major);
  std::mt19937_64 gen(a.seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (std::size_t r = 0; r < x.n_rows(); ++r)
    for (std::size_t c = 0; c < a.cols; ++c) x.at(r, c) = dist(gen);

  SpmmOptions opt;
  opt.workers = a.workers;
  opt.cache_budget = a.cache_budget;
  IoBufferPool pool(a.workers == 0 ? default_workers() : a.workers);
  opt.buffers = &pool;

  std::uint64_t y_sum = 0;
  std::uint64_t read_total = 0;
  double best = 0.0;
  for (std::size_t rep = 0; rep < a.reps; ++rep) {
    const IoStats before = m.io_stats();
    Stopwatch t;
    const DenseBlockMem y = spmm(m, x, opt);
    const double secs = t.seconds();
    const IoStats d = m.io_stats() - before;
    y_sum = y.checksum();
    read_total += d.bytes_read;
    best = rep == 0 ? secs : std::min(best, secs);
    emit({{"record", "rep"},
          {"rep", std::to_string(rep)},
          {"wall_s", format_double(secs)},
          {"bytes_read", std::to_string(d.bytes_read)},
          {"read_ops", std::to_string(d.read_ops)},
          {"y_checksum", std::to_string(y_sum)}});
  }

  RunReport rep;
  rep.command = "spmm-bench";
  rep.parameters = {{"matrix", a.matrix},
                    {"cols", std::to_string(a.cols)},
                    {"reps", std::to_string(a.reps)},
                    {"workers", std::to_string(a.workers)},
                    {"cache_budget", std::to_string(a.cache_budget)},
                    {"seed", std::to_string(a.seed)}};
  rep.wall_seconds = clock.seconds();
  rep.io = process_io_counters().snapshot() - io0;
  rep.result = {{"data_bytes", std::to_string(m.data_bytes())},
                {"bytes_read_per_rep", std::to_string(read_total / a.reps)},
                {"best_wall_s", format_double(best)},
                {"x_checksum", std::to_string(x.checksum())},
                {"y_checksum", std::to_string(y_sum)}};
  std::cout << rep.to_line() << '\n';
  return 0;
}

// --- eigen -----------------------------------------------------------------

struct EigenArgs {
  std::string matrix;
  std::size_t k = 1;
  std::size_t block_size = 1;
  std::size_t num_blocks = 4;
  double tol = 1e-8;
  std::uint64_t seed = 1;
  bool cache_recent = false;
  std::size_t mem_budget = 0;
  std::string which = "LM";
  std::size_t max_restarts = 200;
  unsigned workers = 0;
  std::size_t group_size = kDefaultGroupSize;
  std::uint32_t interval_rows = kDefaultIntervalRows;
  std::string out;
  std::string workdir;
  bool check_ortho = false;
  bool assume_symmetric = false;
  bool log = false;
};

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& requested) {
    if (!requested.empty()) {
      path_ = requested;
      fs::create_directories(path_);
      return;
    }
    path_ = fs::temp_directory_path() / ("semeig-" + std::to_string(::getpid()));
    fs::create_directories(path_);
    owned_ = true;
  }
  ~ScratchDir() {
    std::error_code ec;
    if (owned_) fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool owned_ = false;
};

int run_eigen(const EigenArgs& a) {
  SolverConfig cfg;
  cfg.k = a.k;
  cfg.block_size = a.block_size;
  cfg.num_blocks = a.num_blocks;
  cfg.tol = a.tol;
  cfg.seed = a.seed;
  cfg.which = parse_which(a.which);
  cfg.max_restarts = a.max_restarts;
  cfg.ops.workers = a.workers;
  cfg.ops.group_size = a.group_size;
  cfg.check_orthogonality = a.check_ortho;
  cfg.assume_symmetric = a.assume_symmetric;
  cfg.validate();  // before touching any file

  Stopwatch clock;
  const IoStats io0 = process_io_counters().snapshot();
  const auto m = SparseTileMatrix::open(a.matrix);
  cfg.validate(m.n_rows());

  const std::uint32_t interval = std::max(a.interval_rows, m.tile_dims().tile_rows);
  const std::size_t block_bytes = m.n_rows() * a.block_size * sizeof(double);
  const std::size_t budget = a.cache_recent ? (a.mem_budget ? a.mem_budget : block_bytes) : 0;
  const std::string out = a.out.empty() ? a.matrix + ".eigvecs" : a.out;

  ScratchDir scratch(a.workdir);
  SolveResult res;
  IoStats store_io;
  {
    DenseStore store(scratch.path(), interval, budget);
    res = solve(m, cfg, store, out);
    res.eigenvectors->flush();
    store_io = store.io_counters();
  }

  if (a.log) {
    for (const auto& it : res.log) {
      Record r{{"record", "iter"},
               {"iteration", std::to_string(it.iteration)},
               {"subspace", std::to_string(it.subspace_cols)},
               {"locked", std::to_string(it.locked)},
               {"converged", std::to_string(it.converged)},
               {"breakdowns", std::to_string(it.breakdowns)},
               {"bytes_read", std::to_string(it.io.bytes_read)},
               {"bytes_written", std::to_string(it.io.bytes_written)}};
      if (it.ortho_error >= 0.0) r.emplace_back("ortho", format_double(it.ortho_error));
      std::string resid;
      for (double v : it.residuals) resid += (resid.empty() ? "" : ",") + format_double(v);
      r.emplace_back("residuals", resid);
      emit(r);
    }
  }
  double ortho_max = -1.0;
  for (double v : res.ortho_checks) ortho_max = std::max(ortho_max, v);
  for (std::size_t i = 0; i < res.pairs.size(); ++i) {
    const auto& p = res.pairs[i];
    emit({{"record", "eigenpair"},
          {"index", std::to_string(i)},
          {"value", format_double(p.theta)},
          {"residual", format_double(p.residual_norm)},
          {"converged", p.converged ? "1" : "0"}});
  }

  RunReport rep;
  rep.command = "eigen";
  rep.parameters = {{"matrix", a.matrix},
                    {"k", std::to_string(a.k)},
                    {"block_size", std::to_string(a.block_size)},
                    {"num_blocks", std::to_string(a.num_blocks)},
                    {"tol", format_double(a.tol)},
                    {"seed", std::to_string(a.seed)},
                    {"which", to_string(cfg.which)},
                    {"cache_recent", a.cache_recent ? "1" : "0"},
                    {"mem_budget", std::to_string(budget)},
                    {"interval_rows", std::to_string(interval)},
                    {"group_size", std::to_string(a.group_size)}};
  rep.wall_seconds = clock.seconds();
  rep.io = process_io_counters().snapshot() - io0;
  rep.result = {{"converged", res.converged ? "1" : "0"},
                {"restarts", std::to_string(res.restarts)},
                {"iterations", std::to_string(res.log.size())},
                {"store_bytes_read", std::to_string(store_io.bytes_read)},
                {"store_bytes_written", std::to_string(store_io.bytes_written)},
                {"ortho_checks", std::to_string(res.ortho_checks.size())},
                {"eigenvectors", out}};
  if (ortho_max >= 0.0) rep.result.emplace_back("ortho_max", format_double(ortho_max));
  std::cout << rep.to_line() << '\n';
  return res.converged ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Out-of-core eigensolver for sparse graphs"};
  app.require_subcommand(1);

  ConvertArgs ca;
  auto* convert = app.add_subcommand("convert", "Build a tiled sparse matrix from an edge list");
  convert->add_option("--edges", ca.edges, "Edge list path")->required();
  convert->add_option("--out", ca.out, "Output matrix path")->required();
  convert->add_option("--n", ca.n, "Matrix order (default: largest vertex id + 1)");
  convert->add_flag("--symmetrize", ca.symmetrize, "Store every edge in both directions");
  convert->add_option("--tile-size", ca.tile_size, "Tile edge length (power of two, 16..32768)");
  convert->add_flag("--weighted", ca.weighted, "Keep the third column as a float64 value");
  convert->add_flag("--binary", ca.binary, "Input is raw little-endian u64 pairs");

  std::string info_path;
  auto* info = app.add_subcommand("info", "Print header fields of a sparse or TAS file");
  info->add_option("--matrix", info_path, "Matrix path")->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("spmm-bench", "Time repeated SpMM against a random dense block");
  bench->add_option("--matrix", ba.matrix, "Matrix path")->required();
  bench->add_option("--cols", ba.cols, "Dense block width");
  bench->add_option("--reps", ba.reps, "Repetitions");
  bench->add_option("--workers", ba.workers, "Worker threads (0: all cores)");
  bench->add_option("--cache-budget", ba.cache_budget, "Bytes of CPU cache per super tile");
  bench->add_option("--seed", ba.seed, "Seed for the dense block");

  EigenArgs ea;
  auto* eigen = app.add_subcommand("eigen", "Compute k eigenpairs with block Krylov-Schur");
  eigen->add_option("--matrix", ea.matrix, "Matrix path")->required();
  eigen->add_option("--k", ea.k, "Eigenpairs wanted");
  eigen->add_option("--block-size", ea.block_size, "Block size b");
  eigen->add_option("--num-blocks", ea.num_blocks, "Blocks in the subspace");
  eigen->add_option("--tol", ea.tol, "Residual tolerance, relative to max(1, |theta|)");
  eigen->add_option("--seed", ea.seed, "Seed for the start block");
  eigen->add_flag("--cache-recent", ea.cache_recent, "Keep the newest subspace block in memory");
  eigen->add_option("--mem-budget", ea.mem_budget, "Bytes for the cached block (default: one block)");
  eigen->add_option("--which", ea.which, "LM, LA or SA");
  eigen->add_option("--max-restarts", ea.max_restarts, "Restart limit");
  eigen->add_option("--workers", ea.workers, "Worker threads (0: all cores)");
  eigen->add_option("--group-size", ea.group_size, "Blocks per group in wide operations (0: all)");
  eigen->add_option("--interval-rows", ea.interval_rows, "Rows per TAS interval (power of two)");
  eigen->add_option("--out", ea.out, "Eigenvector output path (default: <matrix>.eigvecs)");
  eigen->add_option("--workdir", ea.workdir, "Directory for subspace files (default: a temp dir)");
  eigen->add_flag("--check-ortho", ea.check_ortho, "Measure orthogonality after each expansion and restart");
  eigen->add_flag("--assume-symmetric", ea.assume_symmetric, "Skip the symmetry probe");
  eigen->add_flag("--log", ea.log, "Print one record per iteration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*convert) return run_convert(ca);
    if (*info) return run_info(info_path);
    if (*bench) return run_bench(ba);
    if (*eigen) return run_eigen(ea);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
