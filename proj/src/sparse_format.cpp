#include "semeig/sparse_format.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace semeig {

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'E', 'M', '1'};
constexpr std::size_t kTileHeaderBytes = 12;

bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::uint32_t load_u32(const std::byte* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

void append_u16(std::vector<std::byte>& out, std::uint16_t v) { put_le(out, v); }

}  // namespace

const char* to_string(ValueKind kind) {
  return kind == ValueKind::binary ? "binary" : "float64";
}

void TileDims::validate() const {
  if (tile_rows != tile_cols) throw std::invalid_argument("tiles must be square");
  if (!is_pow2(tile_rows)) throw std::invalid_argument("tile size must be a power of two");
  if (tile_rows < kMinTileSize || tile_rows > kMaxTileSize) {
    throw std::invalid_argument("tile size must lie in [16, 32768], got " +
                                std::to_string(tile_rows));
  }
}

std::uint32_t Tile::nnz() const {
  std::uint32_t cols = 0;
  for (auto w : scsr_words) cols += (w & kRowHeaderBit) ? 0 : 1;
  return cols + static_cast<std::uint32_t>(coo_pairs.size());
}

std::vector<std::byte> Tile::serialize(ValueKind kind) const {
  std::vector<std::byte> out;
  const std::uint32_t total = nnz();
  out.reserve(kTileHeaderBytes + 2 * scsr_words.size() + 4 * coo_pairs.size() +
              (kind == ValueKind::float64 ? 8 * values.size() : 0));
  put_le(out, total);
  put_le(out, static_cast<std::uint32_t>(scsr_words.size()));
  put_le(out, static_cast<std::uint32_t>(coo_pairs.size()));
  for (auto w : scsr_words) append_u16(out, w);
  for (auto [r, c] : coo_pairs) {
    append_u16(out, r);
    append_u16(out, c);
  }
  if (kind == ValueKind::float64) {
    if (values.size() != total) throw std::logic_error("tile value count mismatch");
    for (double v : values) put_le(out, v);
  }
  return out;
}

Tile encode_tile(std::span<const TileEntry> entries, TileDims dims, ValueKind kind) {
  dims.validate();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.row >= dims.tile_rows || e.col >= dims.tile_cols) {
      throw std::invalid_argument("tile entry (" + std::to_string(e.row) + "," +
                                  std::to_string(e.col) + ") outside tile");
    }
    if (i > 0) {
      const auto& p = entries[i - 1];
      if (p.row == e.row && p.col == e.col) {
        throw std::invalid_argument("duplicate tile entry (" + std::to_string(e.row) + "," +
                                    std::to_string(e.col) + ")");
      }
      if (p.row > e.row || (p.row == e.row && p.col > e.col)) {
        throw std::invalid_argument("tile entries not sorted by (row, col)");
      }
    }
  }

  Tile tile;
  std::vector<double> coo_values;
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].row == entries[i].row) ++j;
    if (j - i == 1) {
      tile.coo_pairs.emplace_back(entries[i].row, entries[i].col);
      coo_values.push_back(entries[i].value);
    } else {
      tile.scsr_words.push_back(static_cast<std::uint16_t>(kRowHeaderBit | entries[i].row));
      for (std::size_t k = i; k < j; ++k) {
        tile.scsr_words.push_back(entries[k].col);
        tile.values.push_back(entries[k].value);
      }
    }
    i = j;
  }
  tile.values.insert(tile.values.end(), coo_values.begin(), coo_values.end());
  if (kind == ValueKind::binary) tile.values.clear();
  return tile;
}

std::vector<std::byte> encode_tile_bytes(std::span<const TileEntry> entries, TileDims dims,
                                         ValueKind kind) {
  return encode_tile(entries, dims, kind).serialize(kind);
}

TileView parse_tile(std::span<const std::byte> bytes, ValueKind kind) {
  if (bytes.size() < kTileHeaderBytes) throw FormatError("tile shorter than its header");
  TileView v;
  v.nnz = load_u32(bytes.data());
  v.scsr_word_count = load_u32(bytes.data() + 4);
  v.coo_pair_count = load_u32(bytes.data() + 8);
  const std::uint64_t scsr_bytes = 2ULL * v.scsr_word_count;
  const std::uint64_t coo_bytes = 4ULL * v.coo_pair_count;
  const std::uint64_t value_bytes = kind == ValueKind::float64 ? 8ULL * v.nnz : 0;
  const std::uint64_t total = kTileHeaderBytes + scsr_bytes + coo_bytes + value_bytes;
  if (total > bytes.size()) throw FormatError("tile regions overrun the buffer");
  if (v.coo_pair_count > v.nnz || v.nnz - v.coo_pair_count > v.scsr_word_count) {
    throw FormatError("tile counts inconsistent with region lengths");
  }
  v.scsr = bytes.data() + kTileHeaderBytes;
  v.coo = v.scsr + scsr_bytes;
  v.values = kind == ValueKind::float64 ? v.coo + coo_bytes : nullptr;
  v.data = bytes.data();
  v.byte_size = static_cast<std::size_t>(total);
  return v;
}

Tile decode_tile_structure(std::span<const std::byte> bytes, TileDims dims, ValueKind kind) {
  const TileView v = parse_tile(bytes, kind);
  Tile tile;
  tile.scsr_words.reserve(v.scsr_word_count);
  std::uint32_t col_words = 0;
  int current_row = -1;
  int last_col = -1;
  std::uint32_t row_len = 0;
  for (std::uint32_t i = 0; i < v.scsr_word_count; ++i) {
    const std::uint16_t w = v.scsr_word(i);
    if (w & kRowHeaderBit) {
      const int row = w & ~kRowHeaderBit;
      if (current_row >= 0 && row_len < 2) {
        throw FormatError("SCSR row " + std::to_string(current_row) + " has fewer than 2 entries");
      }
      if (row <= current_row) throw FormatError("SCSR row headers not increasing");
      if (static_cast<std::uint32_t>(row) >= dims.tile_rows) {
        throw FormatError("SCSR row outside tile");
      }
      current_row = row;
      last_col = -1;
      row_len = 0;
    } else {
      if (current_row < 0) throw FormatError("SCSR column index before any row header");
      if (static_cast<int>(w) <= last_col) throw FormatError("SCSR columns not increasing");
      if (w >= dims.tile_cols) throw FormatError("SCSR column outside tile");
      last_col = w;
      ++row_len;
      ++col_words;
    }
    tile.scsr_words.push_back(w);
  }
  if (current_row >= 0 && row_len < 2) {
    throw FormatError("SCSR row " + std::to_string(current_row) + " has fewer than 2 entries");
  }
  if (col_words + v.coo_pair_count != v.nnz) {
    throw FormatError("tile counts inconsistent with region lengths");
  }
  tile.coo_pairs.reserve(v.coo_pair_count);
  for (std::uint32_t i = 0; i < v.coo_pair_count; ++i) {
    const auto r = v.coo_row(i);
    const auto c = v.coo_col(i);
    if (r >= dims.tile_rows || c >= dims.tile_cols) throw FormatError("COO entry outside tile");
    if (!tile.coo_pairs.empty()) {
      const auto [pr, pc] = tile.coo_pairs.back();
      if (pr > r || (pr == r && pc >= c)) throw FormatError("COO pairs not sorted");
    }
    tile.coo_pairs.emplace_back(r, c);
  }
  if (kind == ValueKind::float64) {
    tile.values.resize(v.nnz);
    for (std::uint32_t i = 0; i < v.nnz; ++i) tile.values[i] = v.value(i);
  }
  return tile;
}

std::vector<TileEntry> decode_tile(std::span<const std::byte> bytes, TileDims dims,
                                   ValueKind kind) {
  const Tile tile = decode_tile_structure(bytes, dims, kind);
  const bool has_values = kind == ValueKind::float64;
  std::vector<TileEntry> scsr;
  scsr.reserve(tile.values.size());
  std::size_t value_pos = 0;
  std::uint16_t row = 0;
  for (auto w : tile.scsr_words) {
    if (w & kRowHeaderBit) {
      row = static_cast<std::uint16_t>(w & ~kRowHeaderBit);
    } else {
      scsr.push_back({row, w, has_values ? tile.values[value_pos] : 1.0});
      ++value_pos;
    }
  }
  std::vector<TileEntry> out;
  out.reserve(scsr.size() + tile.coo_pairs.size());
  std::size_t si = 0;
  for (std::size_t ci = 0; ci < tile.coo_pairs.size(); ++ci) {
    const auto [r, c] = tile.coo_pairs[ci];
    while (si < scsr.size() && scsr[si].row < r) out.push_back(scsr[si++]);
    if (si < scsr.size() && scsr[si].row == r) {
      throw FormatError("row " + std::to_string(r) + " stored in both SCSR and COO regions");
    }
    out.push_back({r, c, has_values ? tile.values[value_pos + ci] : 1.0});
  }
  while (si < scsr.size()) out.push_back(scsr[si++]);
  return out;
}

std::vector<TileRef> parse_tile_row(std::span<const std::byte> bytes, ValueKind kind) {
  if (bytes.size() < 4) throw FormatError("tile row shorter than its tile count");
  const std::uint32_t n_tiles = load_u32(bytes.data());
  std::vector<TileRef> tiles;
  tiles.reserve(n_tiles);
  std::size_t pos = 4;
  for (std::uint32_t t = 0; t < n_tiles; ++t) {
    if (pos + 4 > bytes.size()) throw FormatError("tile row truncated");
    TileRef ref;
    ref.tile_col = load_u32(bytes.data() + pos);
    if (!tiles.empty() && ref.tile_col <= tiles.back().tile_col) {
      throw FormatError("tiles in a tile row not in column order");
    }
    pos += 4;
    ref.view = parse_tile(bytes.subspan(pos), kind);
    pos += ref.view.byte_size;
    tiles.push_back(ref);
  }
  if (pos != bytes.size()) throw FormatError("tile row length disagrees with its tiles");
  return tiles;
}

// ---------------------------------------------------------------------------
// SparseTileMatrix

SparseTileMatrix SparseTileMatrix::open(const std::filesystem::path& path, CounterSet counters) {
  SparseTileMatrix m;
  m.counters_ = std::make_shared<IoCounters>();
  counters.push_back(m.counters_);
  m.file_ = std::make_shared<File>(path, File::Mode::read_only, std::move(counters));

  const std::uint64_t file_size = m.file_->size();
  if (file_size < kSparseHeaderBytes) throw FormatError("corrupt sparse matrix: file too short");
  std::vector<std::byte> head(kSparseHeaderBytes);
  m.file_->read_exact(0, head);
  if (std::memcmp(head.data(), kMagic.data(), 4) != 0) {
    throw FormatError("not a sparse matrix file (bad magic)");
  }
  const auto version = get_le<std::uint16_t>(head, 4);
  if (version != kSparseVersion) {
    throw FormatError("unsupported sparse matrix version " + std::to_string(version));
  }
  m.n_rows_ = get_le<std::uint64_t>(head, 6);
  m.n_cols_ = get_le<std::uint64_t>(head, 14);
  const auto tile_rows = get_le<std::uint32_t>(head, 22);
  const auto kind = get_le<std::uint8_t>(head, 26);
  if (kind > 1) throw FormatError("unknown value kind " + std::to_string(kind));
  m.kind_ = static_cast<ValueKind>(kind);
  m.dims_ = TileDims::square(tile_rows);
  try {
    m.dims_.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("corrupt sparse matrix header: ") + e.what());
  }

  const std::uint64_t n_tile_rows = (m.n_rows_ + tile_rows - 1) / tile_rows;
  const std::uint64_t index_bytes = n_tile_rows * kIndexEntryBytes;
  if (kSparseHeaderBytes + index_bytes > file_size) {
    throw FormatError("corrupt sparse matrix: index extends past end of file");
  }
  std::vector<std::byte> raw(index_bytes);
  m.file_->read_exact(kSparseHeaderBytes, raw);
  m.index_.resize(n_tile_rows);
  std::uint64_t expected = 0;
  for (std::uint64_t i = 0; i < n_tile_rows; ++i) {
    auto& e = m.index_[i];
    e.offset = get_le<std::uint64_t>(raw, i * kIndexEntryBytes);
    e.length = get_le<std::uint64_t>(raw, i * kIndexEntryBytes + 8);
    if (e.offset != expected || e.length < 4) {
      throw FormatError("corrupt sparse matrix: bad index entry for tile row " + std::to_string(i));
    }
    expected += e.length;
  }
  if (kSparseHeaderBytes + index_bytes + expected != file_size) {
    throw FormatError("corrupt sparse matrix: file size " + std::to_string(file_size) +
                      " does not match index (expected " +
                      std::to_string(kSparseHeaderBytes + index_bytes + expected) + ")");
  }
  return m;
}

std::size_t SparseTileMatrix::n_tile_cols() const {
  return static_cast<std::size_t>((n_cols_ + dims_.tile_cols - 1) / dims_.tile_cols);
}

std::uint64_t SparseTileMatrix::header_bytes() const {
  return kSparseHeaderBytes + kIndexEntryBytes * index_.size();
}

std::uint64_t SparseTileMatrix::data_bytes() const {
  if (index_.empty()) return 0;
  return index_.back().offset + index_.back().length;
}

std::vector<std::span<const std::byte>> SparseTileMatrix::read_tile_rows_raw(
    std::size_t first, std::size_t count, std::vector<std::byte>& buf) const {
  if (first + count > index_.size() || count == 0) {
    throw std::out_of_range("tile row range [" + std::to_string(first) + ", " +
                            std::to_string(first + count) + ") outside matrix");
  }
  const std::uint64_t begin = index_[first].offset;
  const std::uint64_t end = index_[first + count - 1].offset + index_[first + count - 1].length;
  if (buf.size() < end - begin) buf.resize(end - begin);
  file_->read_exact(header_bytes() + begin, std::span(buf.data(), end - begin));
  std::vector<std::span<const std::byte>> rows;
  rows.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) {
    rows.emplace_back(buf.data() + (index_[i].offset - begin), index_[i].length);
  }
  return rows;
}

std::vector<DecodedTile> SparseTileMatrix::read_tile_row(std::size_t tile_row) const {
  std::vector<std::byte> buf;
  const auto rows = read_tile_rows_raw(tile_row, 1, buf);
  const std::uint64_t row_base = std::uint64_t{tile_row} * dims_.tile_rows;
  std::vector<DecodedTile> out;
  for (const auto& ref : parse_tile_row(rows[0], kind_)) {
    if (ref.tile_col >= n_tile_cols()) throw FormatError("tile column outside matrix");
    const std::uint64_t col_base = std::uint64_t{ref.tile_col} * dims_.tile_cols;
    DecodedTile tile;
    tile.tile_col = ref.tile_col;
    tile.entries = decode_tile(ref.view.bytes(), dims_, kind_);
    for (const auto& e : tile.entries) {
      if (row_base + e.row >= n_rows_ || col_base + e.col >= n_cols_) {
        throw FormatError("entry outside matrix bounds in tile row " + std::to_string(tile_row));
      }
    }
    out.push_back(std::move(tile));
  }
  return out;
}

std::vector<Triplet> SparseTileMatrix::triplets() const {
  std::vector<Triplet> out;
  for (std::size_t tr = 0; tr < n_tile_rows(); ++tr) {
    const std::uint64_t row_base = std::uint64_t{tr} * dims_.tile_rows;
    std::vector<Triplet> row_entries;
    for (const auto& tile : read_tile_row(tr)) {
      const std::uint64_t col_base = std::uint64_t{tile.tile_col} * dims_.tile_cols;
      for (const auto& e : tile.entries) {
        row_entries.push_back({row_base + e.row, col_base + e.col, e.value});
      }
    }
    std::sort(row_entries.begin(), row_entries.end());
    out.insert(out.end(), row_entries.begin(), row_entries.end());
  }
  return out;
}

std::uint64_t SparseTileMatrix::nnz() const {
  std::uint64_t total = 0;
  std::vector<std::byte> buf;
  for (std::size_t tr = 0; tr < n_tile_rows(); ++tr) {
    const auto rows = read_tile_rows_raw(tr, 1, buf);
    for (const auto& ref : parse_tile_row(rows[0], kind_)) total += ref.view.nnz;
  }
  return total;
}

std::uint64_t SparseTileMatrix::data_checksum() const {
  std::uint64_t h = fnv1a({});
  std::vector<std::byte> buf;
  for (std::size_t tr = 0; tr < n_tile_rows(); ++tr) {
    const auto rows = read_tile_rows_raw(tr, 1, buf);
    h = fnv1a(rows[0], h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Building

BuildStats build_matrix(std::span<const Edge> edges, std::uint64_t n, const BuildOptions& options,
                        const std::filesystem::path& out) {
  options.tile_dims.validate();
  const ValueKind kind = options.value_kind;

  std::vector<Triplet> trip;
  trip.reserve(edges.size() * (options.symmetrize ? 2 : 1));
  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n) {
      throw std::out_of_range("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                              ") has a vertex id >= n = " + std::to_string(n));
    }
    trip.push_back({e.src, e.dst, e.weight});
    if (options.symmetrize && e.src != e.dst) trip.push_back({e.dst, e.src, e.weight});
  }
  std::stable_sort(trip.begin(), trip.end());
  std::size_t w = 0;
  for (std::size_t i = 0; i < trip.size(); ++i) {
    if (w > 0 && trip[w - 1].row == trip[i].row && trip[w - 1].col == trip[i].col) {
      if (kind == ValueKind::float64) trip[w - 1].value += trip[i].value;
      continue;
    }
    trip[w++] = trip[i];
  }
  trip.resize(w);
  if (kind == ValueKind::binary) {
    for (auto& t : trip) t.value = 1.0;
  }

  const std::uint32_t ts = options.tile_dims.tile_rows;
  const std::uint64_t n_tile_rows = (n + ts - 1) / ts;
  const std::uint64_t header_bytes = kSparseHeaderBytes + kIndexEntryBytes * n_tile_rows;

  File file(out, File::Mode::create);
  std::vector<std::byte> head;
  head.insert(head.end(), reinterpret_cast<const std::byte*>(kMagic.data()),
              reinterpret_cast<const std::byte*>(kMagic.data()) + 4);
  put_le(head, kSparseVersion);
  put_le(head, n);
  put_le(head, n);
  put_le(head, ts);
  put_le(head, static_cast<std::uint8_t>(kind));
  file.write_all(0, head);

  std::vector<std::byte> index;
  index.reserve(kIndexEntryBytes * n_tile_rows);
  std::uint64_t offset = 0;
  std::size_t cursor = 0;
  std::vector<std::byte> row_bytes;
  for (std::uint64_t tr = 0; tr < n_tile_rows; ++tr) {
    const std::uint64_t row_end = std::min<std::uint64_t>((tr + 1) * ts, n);
    std::size_t end = cursor;
    while (end < trip.size() && trip[end].row < row_end) ++end;

    // Bucket this tile row's entries by tile column; each bucket stays
    // sorted by (row, col) because the source order is.
    std::vector<std::pair<std::uint32_t, TileEntry>> keyed;
    keyed.reserve(end - cursor);
    for (std::size_t i = cursor; i < end; ++i) {
      const auto& t = trip[i];
      keyed.push_back({static_cast<std::uint32_t>(t.col / ts),
                       {static_cast<std::uint16_t>(t.row % ts),
                        static_cast<std::uint16_t>(t.col % ts), t.value}});
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    row_bytes.clear();
    std::uint32_t n_tiles = 0;
    put_le(row_bytes, n_tiles);
    std::vector<TileEntry> entries;
    std::size_t i = 0;
    while (i < keyed.size()) {
      std::size_t j = i;
      entries.clear();
      while (j < keyed.size() && keyed[j].first == keyed[i].first) entries.push_back(keyed[j++].second);
      put_le(row_bytes, keyed[i].first);
      const auto tile = encode_tile_bytes(entries, options.tile_dims, kind);
      row_bytes.insert(row_bytes.end(), tile.begin(), tile.end());
      ++n_tiles;
      i = j;
    }
    std::memcpy(row_bytes.data(), &n_tiles, 4);
    file.write_all(header_bytes + offset, row_bytes);
    put_le(index, offset);
    put_le(index, static_cast<std::uint64_t>(row_bytes.size()));
    offset += row_bytes.size();
    cursor = end;
  }
  if (!index.empty()) file.write_all(kSparseHeaderBytes, index);
  return {trip.size(), n_tile_rows, header_bytes, offset};
}

// ---------------------------------------------------------------------------
// Edge lists

std::vector<Edge> read_edge_list_text(std::istream& in) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError("line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::vector<std::string> parts;
    for (std::string tok; tokens >> tok;) parts.push_back(tok);
    if (parts.empty()) continue;
    if (parts.size() < 2 || parts.size() > 3) {
      fail("expected 'src dst [weight]', got " + std::to_string(parts.size()) + " fields");
    }
    Edge e;
    for (int k = 0; k < 2; ++k) {
      const auto& s = parts[k];
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size()) fail("bad vertex id '" + s + "'");
      (k == 0 ? e.src : e.dst) = v;
    }
    if (parts.size() == 3) {
      const auto& s = parts[2];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), e.weight);
      if (ec != std::errc{} || p != s.data() + s.size()) fail("bad weight '" + s + "'");
    }
    edges.push_back(e);
  }
  return edges;
}

std::vector<Edge> read_edge_list_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list '" + path.string() + "'");
  return read_edge_list_text(in);
}

std::vector<Edge> read_edge_list_binary(const std::filesystem::path& path) {
  File file(path, File::Mode::read_only);
  const std::uint64_t size = file.size();
  if (size % 16 != 0) {
    throw FormatError("binary edge list size " + std::to_string(size) +
                      " is not a multiple of 16 bytes");
  }
  std::vector<std::byte> raw(size);
  file.read_exact(0, raw);
  std::vector<Edge> edges(size / 16);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i].src = get_le<std::uint64_t>(raw, 16 * i);
    edges[i].dst = get_le<std::uint64_t>(raw, 16 * i + 8);
  }
  return edges;
}

}  // namespace semeig
