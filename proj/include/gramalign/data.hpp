#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gramalign/error.hpp"
#include "gramalign/modality.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/rng.hpp"

namespace gramalign {

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

/// Raw per-modality encoder outputs, one row per entity id, stored as float32.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(Modality modality, std::size_t dim, std::vector<std::string> ids, std::vector<float> rows)
      : modality_(modality), dim_(dim), ids_(std::move(ids)), rows_(std::move(rows)) {
    require(dim_ >= 1, ErrorCode::DimensionMismatch, "embedding dim must be >= 1");
    require(rows_.size() == ids_.size() * dim_, ErrorCode::ShapeMismatch, "row data does not match ids x dim");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      require(std::isfinite(rows_[i]), ErrorCode::NonFiniteValue, "entry " + std::to_string(i) + " is not finite");
    }
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      require(index_.emplace(ids_[i], i).second, ErrorCode::InvalidArgument, "duplicate id '" + ids_[i] + "'");
    }
  }

  Modality modality() const noexcept { return modality_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<float>& data() const noexcept { return rows_; }

  std::span<const float> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Gathers the given rows into a double matrix.
  Mat gather(std::span<const std::size_t> rows) const {
    Mat out(rows.size(), dim_);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = row(rows[r]);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < dim_; ++c) dst[c] = src[c];
    }
    return out;
  }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.modality_ == b.modality_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           std::equal(a.rows_.begin(), a.rows_.end(), b.rows_.begin(), b.rows_.end(),
                      [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
  }

 private:
  Modality modality_ = Modality::Smiles;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + b])) << (8 * b);
  return v;
}

inline std::uint16_t get_u16(const std::string& in, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(in[off]) |
                                    (static_cast<unsigned char>(in[off + 1]) << 8));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

/// Shortest round-trip text for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline constexpr std::string_view kGembMagic = "GEMB1\n";

/// Serializes a table in the GEMB1 layout.
inline std::string encode_embedding_table(const EmbeddingTable& table) {
  std::string out(kGembMagic);
  out.push_back(static_cast<char>(index_of(table.modality())));
  detail::put_u32(out, static_cast<std::uint32_t>(table.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(table.dim()));
  for (float f : table.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  for (const auto& id : table.ids()) {
    require(id.size() <= 0xffff, ErrorCode::InvalidArgument, "id longer than 65535 bytes");
    detail::put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
  }
  return out;
}

inline EmbeddingTable decode_embedding_table(const std::string& bytes) {
  auto need = [&](std::size_t off, std::size_t n) {
    require(bytes.size() >= off + n, ErrorCode::TruncatedFile,
            "need " + std::to_string(n) + " bytes at offset " + std::to_string(off) + ", file has " +
                std::to_string(bytes.size()));
  };
  need(0, 7);
  require(bytes.compare(0, kGembMagic.size(), kGembMagic) == 0, ErrorCode::BadMagic, "bad magic at offset 0");
  const Modality modality = modality_from_code(static_cast<std::uint8_t>(bytes[6]));
  need(7, 8);
  const std::size_t rows = detail::get_u32(bytes, 7);
  const std::size_t cols = detail::get_u32(bytes, 11);
  std::size_t off = 15;
  need(off, rows * cols * 4);
  std::vector<float> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i, off += 4) {
    data[i] = std::bit_cast<float>(detail::get_u32(bytes, off));
    require(std::isfinite(data[i]), ErrorCode::NonFiniteValue, "non-finite float at offset " + std::to_string(off));
  }
  std::vector<std::string> ids;
  ids.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    need(off, 2);
    const std::size_t len = detail::get_u16(bytes, off);
    off += 2;
    need(off, len);
    ids.emplace_back(bytes.substr(off, len));
    off += len;
  }
  return EmbeddingTable(modality, cols, std::move(ids), std::move(data));
}

inline void write_embedding_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  detail::write_file(path, encode_embedding_table(table));
}

/// Loads a GEMB1 file and checks that it holds the expected modality.
inline EmbeddingTable load_embedding_table(const std::filesystem::path& path, Modality modality) {
  EmbeddingTable t = decode_embedding_table(detail::read_file(path));
  require(t.modality() == modality, ErrorCode::InvalidArgument,
          path.string() + " holds modality " + std::string(name_of(t.modality())) + ", expected " +
              std::string(name_of(modality)));
  return t;
}

// ---------------------------------------------------------------------------
// IC50 weak labels
// ---------------------------------------------------------------------------

inline constexpr std::size_t kIc50Classes = 3;

/// 0: < 10 uM (effective), 1: 10..1000 uM inclusive (moderate), 2: > 1000 uM.
inline int discretize_ic50(double value_um) {
  require(std::isfinite(value_um) && value_um > 0.0, ErrorCode::NonPositiveIc50,
          "IC50 must be positive and finite, got " + detail::format_double(value_um));
  if (value_um < 10.0) return 0;
  if (value_um <= 1000.0) return 1;
  return 2;
}

struct ClassWeights {
  std::array<std::size_t, kIc50Classes> counts{};
  std::size_t total = 0;
  std::size_t num_classes = kIc50Classes;
  std::array<double, kIc50Classes> weights{};
};

/// w_c = N_total / (C * N_c)
inline ClassWeights class_weights(std::span<const int> labels) {
  ClassWeights cw;
  for (int y : labels) {
    require(y >= 0 && y < static_cast<int>(kIc50Classes), ErrorCode::InvalidArgument, "label out of range");
    ++cw.counts[static_cast<std::size_t>(y)];
  }
  cw.total = labels.size();
  for (std::size_t c = 0; c < kIc50Classes; ++c) {
    require(cw.counts[c] > 0, ErrorCode::EmptyClass, "class " + std::to_string(c) + " has no samples");
    cw.weights[c] = static_cast<double>(cw.total) / (static_cast<double>(kIc50Classes) * static_cast<double>(cw.counts[c]));
  }
  return cw;
}

// ---------------------------------------------------------------------------
// Quadruplets and manifests
// ---------------------------------------------------------------------------

struct Quadruplet {
  std::array<std::size_t, kNumModalities> rows{};
  std::optional<double> ic50_um;
  std::optional<int> ic50_class;

  std::size_t row(Modality m) const { return rows[index_of(m)]; }
};

inline Quadruplet make_quadruplet(std::array<std::size_t, kNumModalities> rows, std::optional<double> ic50_um) {
  Quadruplet q;
  q.rows = rows;
  q.ic50_um = ic50_um;
  if (ic50_um) q.ic50_class = discretize_ic50(*ic50_um);
  return q;
}

using TableSet = std::array<EmbeddingTable, kNumModalities>;

/// Tables plus the quadruplets that index into them.
struct Dataset {
  TableSet tables;
  std::vector<Quadruplet> quads;

  const EmbeddingTable& table(Modality m) const { return tables[index_of(m)]; }
};

inline constexpr std::string_view kManifestHeader = "smiles_id\ttext_id\thta_id\tprotein_id\tic50_um";

inline std::string encode_manifest(const TableSet& tables, std::span<const Quadruplet> quads) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& q : quads) {
    for (Modality m : kAllModalities) {
      out += tables[index_of(m)].ids().at(q.row(m));
      out += '\t';
    }
    if (q.ic50_um) out += detail::format_double(*q.ic50_um);
    out += '\n';
  }
  return out;
}

inline std::vector<Quadruplet> decode_manifest(const std::string& text, const TableSet& tables) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::TruncatedFile, "manifest is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kManifestHeader, ErrorCode::BadMagic, "manifest header mismatch: '" + line + "'");
  std::vector<Quadruplet> quads;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    require(fields.size() == 5, ErrorCode::InvalidArgument,
            "manifest line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) + " fields");
    std::array<std::size_t, kNumModalities> rows{};
    for (Modality m : kAllModalities) {
      const auto& id = fields[index_of(m)];
      auto r = tables[index_of(m)].find(id);
      require(r.has_value(), ErrorCode::InvalidArgument,
              "manifest line " + std::to_string(lineno) + ": unknown " + std::string(name_of(m)) + " id '" + id + "'");
      rows[index_of(m)] = *r;
    }
    std::optional<double> ic50;
    if (!fields[4].empty()) {
      double v = 0.0;
      const auto& f = fields[4];
      auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      require(res.ec == std::errc() && res.ptr == f.data() + f.size(), ErrorCode::InvalidArgument,
              "manifest line " + std::to_string(lineno) + ": bad ic50 '" + f + "'");
      ic50 = v;
    }
    quads.push_back(make_quadruplet(rows, ic50));
  }
  return quads;
}

inline constexpr std::string_view kManifestFile = "manifest.tsv";

inline std::filesystem::path table_path(const std::filesystem::path& dir, Modality m) {
  return dir / (std::string(name_of(m)) + ".gemb");
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  for (Modality m : kAllModalities) write_embedding_table(table_path(dir, m), ds.table(m));
  detail::write_file(dir / kManifestFile, encode_manifest(ds.tables, ds.quads));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  for (Modality m : kAllModalities) ds.tables[index_of(m)] = load_embedding_table(table_path(dir, m), m);
  ds.quads = decode_manifest(detail::read_file(dir / kManifestFile), ds.tables);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic aligned quadruplets
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::size_t n = 256;
  std::array<std::size_t, kNumModalities> dims = {768, 768, 768, 1280};
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  std::size_t latent_dim = 8;  // clamped to the smallest modality dim
  std::size_t ic50_every = 3;  // every k-th quadruplet carries an IC50 value
};

/// Upper tercile point of the standard normal, Phi^-1(2/3).
inline constexpr double kNormalTercile = 0.4307272992954576;

/// Every raw embedding is Q_m z_i * sqrt(d_m / k) + noise, where Q_m has
/// orthonormal columns, so with zero noise each modality preserves the
/// latent cosine geometry exactly. IC50 classes are the terciles of z_i[0].
inline Dataset synth_quadruplets(const SynthOptions& opt) {
  require(opt.n >= 4, ErrorCode::InvalidArgument, "synthetic dataset needs n >= 4");
  require(opt.noise_sigma >= 0.0 && std::isfinite(opt.noise_sigma), ErrorCode::InvalidArgument, "noise_sigma must be >= 0");
  require(opt.ic50_every >= 1, ErrorCode::InvalidArgument, "ic50_every must be >= 1");
  std::size_t k = opt.latent_dim;
  for (auto d : opt.dims) {
    require(d >= 2, ErrorCode::DimensionMismatch, "synthetic dims must be >= 2");
    k = std::min(k, d);
  }

  Rng latent_rng = make_rng(opt.seed, "synth.latent");
  Mat z(opt.n, k);
  for (double& x : z.flat()) x = normal01(latent_rng);

  Dataset ds;
  for (Modality m : kAllModalities) {
    const std::size_t d = opt.dims[index_of(m)];
    Rng map_rng = make_rng(opt.seed, "synth.map", index_of(m));
    // columns of q are orthonormalized with modified Gram-Schmidt
    Mat q(k, d);
    for (double& x : q.flat()) x = normal01(map_rng);
    for (std::size_t c = 0; c < k; ++c) {
      auto col = q.row(c);
      for (std::size_t p = 0; p < c; ++p) {
        const double proj = dot(col, q.row(p));
        auto prev = q.row(p);
        for (std::size_t t = 0; t < d; ++t) col[t] -= proj * prev[t];
      }
      const double nrm = norm2(col);
      for (double& x : col) x /= nrm;
    }
    const double scale = std::sqrt(static_cast<double>(d) / static_cast<double>(k));
    Rng noise_rng = make_rng(opt.seed, "synth.noise", index_of(m));
    std::vector<float> rows(opt.n * d);
    std::vector<std::string> ids(opt.n);
    for (std::size_t i = 0; i < opt.n; ++i) {
      for (std::size_t t = 0; t < d; ++t) {
        double v = 0.0;
        for (std::size_t c = 0; c < k; ++c) v += q(c, t) * z(i, c);
        v *= scale;
        if (opt.noise_sigma > 0.0) v += opt.noise_sigma * normal01(noise_rng);
        rows[i * d + t] = static_cast<float>(v);
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%06zu", std::string(name_of(m)).c_str(), i);
      ids[i] = buf;
    }
    ds.tables[index_of(m)] = EmbeddingTable(m, d, std::move(ids), std::move(rows));
  }

  ds.quads.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    std::optional<double> ic50;
    if (i % opt.ic50_every == 0) ic50 = std::pow(10.0, 2.0 + z(i, 0) / kNormalTercile);
    ds.quads.push_back(make_quadruplet({i, i, i, i}, ic50));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Downstream pair splits
// ---------------------------------------------------------------------------

enum class SplitKind { Warm, DrugCold, TargetCold };

inline std::string_view name_of(SplitKind k) {
  switch (k) {
    case SplitKind::Warm: return "warm";
    case SplitKind::DrugCold: return "drug-cold";
    case SplitKind::TargetCold: return "target-cold";
  }
  return "?";
}

inline SplitKind split_from_name(std::string_view s) {
  for (auto k : {SplitKind::Warm, SplitKind::DrugCold, SplitKind::TargetCold}) {
    if (name_of(k) == s) return k;
  }
  fail(ErrorCode::InvalidArgument, "unknown split '" + std::string(s) + "'");
}

struct LabeledPair {
  std::string drug;
  std::string protein;
  int label = 0;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

/// One cross-validation fold.
struct PairDataset {
  SplitKind split_kind = SplitKind::Warm;
  std::size_t fold = 0;
  std::size_t fold_count = 0;
  std::vector<LabeledPair> train;
  std::vector<LabeledPair> test;

  friend bool operator==(const PairDataset&, const PairDataset&) = default;
};

inline constexpr std::size_t kNegativesPerPositive = 10;

namespace detail {

/// Draws `count` distinct cells from rows x cols (given as index lists) that
/// are not in `excluded`, uniformly without replacement.
inline std::vector<std::pair<std::size_t, std::size_t>> sample_negatives(
    std::span<const std::size_t> rows, std::span<const std::size_t> cols,
    const std::set<std::pair<std::size_t, std::size_t>>& excluded, std::size_t count, Rng& rng) {
  std::size_t excluded_here = 0;
  {
    std::unordered_set<std::size_t> rs(rows.begin(), rows.end()), cs(cols.begin(), cols.end());
    for (const auto& [r, c] : excluded) excluded_here += (rs.count(r) && cs.count(c)) ? 1 : 0;
  }
  const std::size_t pool = rows.size() * cols.size() - excluded_here;
  require(count <= pool, ErrorCode::InsufficientEntities,
          "need " + std::to_string(count) + " negatives but only " + std::to_string(pool) + " candidate pairs exist");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  if (count * 2 <= pool) {
    std::set<std::pair<std::size_t, std::size_t>> taken;
    while (out.size() < count) {
      const std::pair<std::size_t, std::size_t> cell{rows[uniform_index(rng, rows.size())], cols[uniform_index(rng, cols.size())]};
      if (excluded.count(cell) || taken.count(cell)) continue;
      taken.insert(cell);
      out.push_back(cell);
    }
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    all.reserve(pool);
    for (auto r : rows) {
      for (auto c : cols) {
        if (!excluded.count({r, c})) all.emplace_back(r, c);
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + uniform_index(rng, all.size() - i);
      std::swap(all[i], all[j]);
      out.push_back(all[i]);
    }
  }
  return out;
}

}  // namespace detail

/// Builds `folds` cross-validation folds over the positive (drug, protein)
/// pairs, adding 10 sampled negatives per positive on each side of a fold.
inline std::vector<PairDataset> make_split(std::span<const std::pair<std::string, std::string>> positives, SplitKind kind,
                                           std::size_t folds, std::uint64_t seed) {
  require(folds >= 2, ErrorCode::InvalidArgument, "folds must be >= 2");
  std::vector<std::string> drugs, proteins;
  {
    std::set<std::string> ds, ps;
    for (const auto& [d, p] : positives) {
      ds.insert(d);
      ps.insert(p);
    }
    drugs.assign(ds.begin(), ds.end());
    proteins.assign(ps.begin(), ps.end());
  }
  require(drugs.size() >= 2 && proteins.size() >= 2, ErrorCode::InsufficientEntities,
          "need at least 2 distinct drugs and 2 distinct proteins");
  auto drug_idx = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(drugs.begin(), drugs.end(), s) - drugs.begin());
  };
  auto prot_idx = [&](const std::string& s) {
    return static_cast<std::size_t>(std::lower_bound(proteins.begin(), proteins.end(), s) - proteins.begin());
  };

  std::set<std::pair<std::size_t, std::size_t>> pos_set;
  for (const auto& [d, p] : positives) pos_set.emplace(drug_idx(d), prot_idx(p));
  std::vector<std::pair<std::size_t, std::size_t>> pos(pos_set.begin(), pos_set.end());

  // fold id per positive
  std::vector<std::size_t> fold_of(pos.size());
  Rng assign_rng = make_rng(seed, "split.assign");
  if (kind == SplitKind::Warm) {
    require(pos.size() >= folds, ErrorCode::InsufficientEntities, "fewer positives than folds");
    std::vector<std::size_t> order(pos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order.begin(), order.end(), assign_rng);
    for (std::size_t r = 0; r < order.size(); ++r) fold_of[order[r]] = r % folds;
  } else {
    const bool by_drug = kind == SplitKind::DrugCold;
    const std::size_t n_entities = by_drug ? drugs.size() : proteins.size();
    require(n_entities >= folds, ErrorCode::InsufficientEntities,
            "cold split needs at least one entity per fold (" + std::to_string(n_entities) + " < " + std::to_string(folds) + ")");
    std::vector<std::size_t> order(n_entities);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order.begin(), order.end(), assign_rng);
    std::vector<std::size_t> entity_fold(n_entities);
    for (std::size_t r = 0; r < order.size(); ++r) entity_fold[order[r]] = r % folds;
    for (std::size_t i = 0; i < pos.size(); ++i) fold_of[i] = entity_fold[by_drug ? pos[i].first : pos[i].second];
  }

  std::vector<std::size_t> all_drugs(drugs.size()), all_prots(proteins.size());
  for (std::size_t i = 0; i < all_drugs.size(); ++i) all_drugs[i] = i;
  for (std::size_t i = 0; i < all_prots.size(); ++i) all_prots[i] = i;

  auto to_pair = [&](std::pair<std::size_t, std::size_t> cell, int label) {
    return LabeledPair{drugs[cell.first], proteins[cell.second], label};
  };

  std::vector<PairDataset> out;
  out.reserve(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    PairDataset ds;
    ds.split_kind = kind;
    ds.fold = f;
    ds.fold_count = folds;
    std::set<std::size_t> test_entities;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      auto& side = (fold_of[i] == f) ? ds.test : ds.train;
      side.push_back(to_pair(pos[i], 1));
      if (fold_of[i] == f) test_entities.insert(kind == SplitKind::TargetCold ? pos[i].second : pos[i].first);
    }
    require(!ds.test.empty(), ErrorCode::InsufficientEntities, "fold " + std::to_string(f) + " has no test positives");
    const std::size_t n_test_neg = kNegativesPerPositive * ds.test.size();
    const std::size_t n_train_neg = kNegativesPerPositive * ds.train.size();
    Rng neg_rng = make_rng(seed, "negatives", f);

    if (kind == SplitKind::Warm) {
      auto cells = detail::sample_negatives(all_drugs, all_prots, pos_set, n_test_neg + n_train_neg, neg_rng);
      for (std::size_t i = 0; i < cells.size(); ++i) (i < n_test_neg ? ds.test : ds.train).push_back(to_pair(cells[i], 0));
    } else {
      std::vector<std::size_t> test_side, train_side;
      const std::size_t n_entities = kind == SplitKind::DrugCold ? drugs.size() : proteins.size();
      for (std::size_t e = 0; e < n_entities; ++e) (test_entities.count(e) ? test_side : train_side).push_back(e);
      if (kind == SplitKind::DrugCold) {
        for (auto c : detail::sample_negatives(test_side, all_prots, pos_set, n_test_neg, neg_rng)) ds.test.push_back(to_pair(c, 0));
        for (auto c : detail::sample_negatives(train_side, all_prots, pos_set, n_train_neg, neg_rng)) ds.train.push_back(to_pair(c, 0));
      } else {
        // sample in (protein, drug) orientation, then flip back
        std::set<std::pair<std::size_t, std::size_t>> flipped;
        for (const auto& [d, p] : pos_set) flipped.emplace(p, d);
        for (auto c : detail::sample_negatives(test_side, all_drugs, flipped, n_test_neg, neg_rng)) ds.test.push_back(to_pair({c.second, c.first}, 0));
        for (auto c : detail::sample_negatives(train_side, all_drugs, flipped, n_train_neg, neg_rng)) ds.train.push_back(to_pair({c.second, c.first}, 0));
      }
    }
    out.push_back(std::move(ds));
  }
  return out;
}

/// (drug id, protein id) for every quadruplet, deduplicated, in first-seen order.
inline std::vector<std::pair<std::string, std::string>> interaction_pairs(const Dataset& ds) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& q : ds.quads) {
    if (!seen.emplace(q.row(Modality::Smiles), q.row(Modality::Protein)).second) continue;
    out.emplace_back(ds.table(Modality::Smiles).ids()[q.row(Modality::Smiles)],
                     ds.table(Modality::Protein).ids()[q.row(Modality::Protein)]);
  }
  return out;
}

}  // namespace gramalign
