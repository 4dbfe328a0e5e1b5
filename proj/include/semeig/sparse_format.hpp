#pragma once

// Tiled on-disk sparse matrix format.
//
// File layout (all little-endian):
//   header   "FEM1" | version u16 | n_rows u64 | n_cols u64 | tile_rows u32 | value_kind u8
//   index    one {offset u64, length u64} per tile row; offsets are relative
//            to the start of the data section
//   data     tile rows back to back
//
// A tile row is  n_tiles u32, then per non-empty tile  tile_col u32 | tile.
// A tile is      total_nnz u32 | scsr_word_count u32 | coo_pair_count u32 |
//                scsr words (u16) | coo pairs (u16 row, u16 col) | values (f64)
// Values are absent for binary matrices and follow the traversal order:
// SCSR entries first, then COO entries.
//
// SCSR words with the top bit set are row headers (0x8000 | local_row); the
// column indices of that row follow. Rows holding a single entry in a tile are
// stored as COO pairs instead.

#include "semeig/io.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace semeig {

enum class ValueKind : std::uint8_t { binary = 0, float64 = 1 };

const char* to_string(ValueKind kind);

inline constexpr std::uint32_t kMaxTileSize = 32768;
inline constexpr std::uint32_t kMinTileSize = 16;
inline constexpr std::uint32_t kDefaultTileSize = 16384;
inline constexpr std::uint16_t kRowHeaderBit = 0x8000;

struct TileDims {
  std::uint32_t tile_rows = kDefaultTileSize;
  std::uint32_t tile_cols = kDefaultTileSize;

  static TileDims square(std::uint32_t size) { return {size, size}; }
  /// Throws std::invalid_argument unless square, a power of two and within
  /// [kMinTileSize, kMaxTileSize].
  void validate() const;
};

struct TileEntry {
  std::uint16_t row = 0;
  std::uint16_t col = 0;
  double value = 1.0;
  friend bool operator==(const TileEntry&, const TileEntry&) = default;
};

/// Structured form of an encoded tile.
struct Tile {
  std::vector<std::uint16_t> scsr_words;
  std::vector<std::pair<std::uint16_t, std::uint16_t>> coo_pairs;
  std::vector<double> values;

  std::uint32_t nnz() const;
  std::vector<std::byte> serialize(ValueKind kind) const;
};

/// Entries must be sorted by (row, col) without duplicates and lie inside dims.
Tile encode_tile(std::span<const TileEntry> entries, TileDims dims, ValueKind kind);
std::vector<std::byte> encode_tile_bytes(std::span<const TileEntry> entries, TileDims dims,
                                         ValueKind kind);

/// Zero-copy view of one serialized tile inside a larger buffer.
struct TileView {
  std::uint32_t nnz = 0;
  std::uint32_t scsr_word_count = 0;
  std::uint32_t coo_pair_count = 0;
  const std::byte* scsr = nullptr;
  const std::byte* coo = nullptr;
  const std::byte* values = nullptr;  // null for binary matrices
  const std::byte* data = nullptr;
  std::size_t byte_size = 0;

  std::span<const std::byte> bytes() const { return {data, byte_size}; }

  std::uint16_t scsr_word(std::size_t i) const {
    std::uint16_t w;
    std::memcpy(&w, scsr + 2 * i, 2);
    return w;
  }
  std::uint16_t coo_row(std::size_t i) const {
    std::uint16_t v;
    std::memcpy(&v, coo + 4 * i, 2);
    return v;
  }
  std::uint16_t coo_col(std::size_t i) const {
    std::uint16_t v;
    std::memcpy(&v, coo + 4 * i + 2, 2);
    return v;
  }
  double value(std::size_t i) const {
    if (values == nullptr) return 1.0;
    double v;
    std::memcpy(&v, values + 8 * i, 8);
    return v;
  }
};

/// Parses the tile header and checks region lengths against the buffer.
/// Does not validate the SCSR stream; decode_tile does.
TileView parse_tile(std::span<const std::byte> bytes, ValueKind kind);

/// Exact inverse of encode_tile. Throws FormatError on malformed streams.
std::vector<TileEntry> decode_tile(std::span<const std::byte> bytes, TileDims dims,
                                   ValueKind kind);

/// Structured decode that keeps the SCSR/COO split (for storage audits).
Tile decode_tile_structure(std::span<const std::byte> bytes, TileDims dims, ValueKind kind);

struct TileRef {
  std::uint32_t tile_col = 0;
  TileView view;
};

/// Splits a serialized tile row into its tiles, in column order.
std::vector<TileRef> parse_tile_row(std::span<const std::byte> bytes, ValueKind kind);

struct DecodedTile {
  std::uint32_t tile_col = 0;
  std::vector<TileEntry> entries;
};

struct Triplet {
  std::uint64_t row = 0;
  std::uint64_t col = 0;
  double value = 1.0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
  friend bool operator<(const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  }
};

struct TileRowIndexEntry {
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

inline constexpr std::size_t kSparseHeaderBytes = 4 + 2 + 8 + 8 + 4 + 1;
inline constexpr std::size_t kIndexEntryBytes = 16;
inline constexpr std::uint16_t kSparseVersion = 1;

/// Read-only handle on a tiled sparse matrix file. The tile-row index is
/// loaded on open; tile data is read on demand.
class SparseTileMatrix {
 public:
  static SparseTileMatrix open(const std::filesystem::path& path, CounterSet counters = {});

  std::uint64_t n_rows() const { return n_rows_; }
  std::uint64_t n_cols() const { return n_cols_; }
  TileDims tile_dims() const { return dims_; }
  ValueKind value_kind() const { return kind_; }
  std::size_t n_tile_rows() const { return index_.size(); }
  std::size_t n_tile_cols() const;
  const std::vector<TileRowIndexEntry>& index() const { return index_; }

  /// Fixed header plus tile-row index.
  std::uint64_t header_bytes() const;
  std::uint64_t data_bytes() const;
  std::uint64_t file_bytes() const { return header_bytes() + data_bytes(); }
  const std::filesystem::path& path() const { return file_->path(); }

  /// Decoded tiles of one tile row, in column order; one contiguous read.
  std::vector<DecodedTile> read_tile_row(std::size_t tile_row) const;

  /// Reads tile rows [first, first + count) with a single contiguous read
  /// into buf (resized as needed) and returns the byte span of each row.
  std::vector<std::span<const std::byte>> read_tile_rows_raw(std::size_t first, std::size_t count,
                                                             std::vector<std::byte>& buf) const;

  /// Every stored entry with global coordinates, sorted by (row, col).
  std::vector<Triplet> triplets() const;
  /// Counts stored entries by scanning tile headers.
  std::uint64_t nnz() const;
  /// FNV-1a over the data section.
  std::uint64_t data_checksum() const;

  IoStats io_stats() const { return counters_->snapshot(); }

 private:
  SparseTileMatrix() = default;

  std::shared_ptr<File> file_;
  std::shared_ptr<IoCounters> counters_;
  std::uint64_t n_rows_ = 0;
  std::uint64_t n_cols_ = 0;
  TileDims dims_;
  ValueKind kind_ = ValueKind::binary;
  std::vector<TileRowIndexEntry> index_;
};

struct Edge {
  std::uint64_t src = 0;
  std::uint64_t dst = 0;
  double weight = 1.0;
};

struct BuildOptions {
  bool symmetrize = false;
  TileDims tile_dims{};
  ValueKind value_kind = ValueKind::binary;
};

struct BuildStats {
  std::uint64_t nnz = 0;
  std::uint64_t n_tile_rows = 0;
  std::uint64_t header_bytes = 0;
  std::uint64_t data_bytes = 0;
};

/// Writes an n×n matrix built from edges. Duplicate edges are deduplicated
/// (binary) or summed (float64). With symmetrize, every off-diagonal edge is
/// also stored mirrored.
BuildStats build_matrix(std::span<const Edge> edges, std::uint64_t n, const BuildOptions& options,
                        const std::filesystem::path& out);

/// Whitespace separated `src dst [weight]` lines; `#` starts a comment.
/// Throws FormatError naming the 1-based line number on bad input.
std::vector<Edge> read_edge_list_text(std::istream& in);
std::vector<Edge> read_edge_list_text(const std::filesystem::path& path);

/// Raw little-endian pairs of u64 (src, dst), no header.
std::vector<Edge> read_edge_list_binary(const std::filesystem::path& path);

}  // namespace semeig
