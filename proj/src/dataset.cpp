#include "ijip/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ijip/log.hpp"

namespace ijip {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

LabelSet::LabelSet(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  if (labels_.size() < 2)
    throw InvalidArgument("label set needs at least 2 labels");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) throw InvalidArgument("label names must be non-empty");
    if (!index_.emplace(labels_[i], i).second)
      throw InvalidArgument("duplicate label \"" + labels_[i] + "\"");
  }
}

std::optional<std::size_t> LabelSet::index_of(const std::string &label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const char *to_string(PayloadKind kind) {
  return kind == PayloadKind::image ? "image" : "text";
}

namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string &what) {
  throw FormatError("manifest line " + std::to_string(line) + ": " + what);
}

std::string string_field(const json &rec, const char *key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) fail_at(line, std::string("missing \"") + key + "\"");
  if (!it->is_string())
    fail_at(line, std::string("\"") + key + "\" must be a string");
  return it->get<std::string>();
}

} // namespace

Manifest parse_manifest(std::istream &in, const fs::path &base_dir) {
  Manifest out;
  out.base_dir = base_dir;
  std::unordered_map<std::string, std::size_t> seen; // id -> line
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  std::optional<PayloadKind> kind;

  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;

    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error &e) {
      fail_at(line_no, std::string("invalid JSON (") + e.what() + ")");
    }
    if (!rec.is_object()) fail_at(line_no, "record must be a JSON object");

    if (!have_header) {
      auto it = rec.find("labels");
      if (it == rec.end() || !it->is_array())
        fail_at(line_no, "first record must be a {\"labels\": [...]} header");
      std::vector<std::string> labels;
      for (const auto &l : *it) {
        if (!l.is_string()) fail_at(line_no, "labels must be strings");
        labels.push_back(l.get<std::string>());
      }
      try {
        out.labels = LabelSet(std::move(labels));
      } catch (const InvalidArgument &e) {
        fail_at(line_no, e.what());
      }
      have_header = true;
      continue;
    }

    Instance inst;
    inst.id = string_field(rec, "id", line_no);
    inst.label = string_field(rec, "label", line_no);
    if (inst.id.empty()) fail_at(line_no, "empty id");
    const bool has_image = rec.contains("image");
    const bool has_text = rec.contains("text");
    if (has_image == has_text)
      fail_at(line_no, "record needs exactly one of \"image\" or \"text\"");
    inst.payload.kind = has_image ? PayloadKind::image : PayloadKind::text;
    inst.payload.value =
        string_field(rec, has_image ? "image" : "text", line_no);
    if (kind && *kind != inst.payload.kind)
      fail_at(line_no, "payload kind differs from earlier records");
    kind = inst.payload.kind;

    if (!out.labels.contains(inst.label))
      fail_at(line_no, "label \"" + inst.label + "\" not in header labelset");
    if (auto [it, fresh] = seen.emplace(inst.id, line_no); !fresh)
      throw FormatError("duplicate id \"" + inst.id + "\" on lines " +
                        std::to_string(it->second) + " and " +
                        std::to_string(line_no));
    inst.embedding_row = out.instances.size();
    out.instances.push_back(std::move(inst));
  }

  if (!have_header) throw FormatError("empty manifest");
  out.kind = kind.value_or(PayloadKind::image);
  return out;
}

Manifest load_manifest(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void write_manifest(std::ostream &out, const Manifest &manifest) {
  ordered_json header;
  header["labels"] = manifest.labels.labels();
  out << header.dump() << '\n';
  for (const auto &inst : manifest.instances) {
    ordered_json rec;
    rec["id"] = inst.id;
    rec["label"] = inst.label;
    rec[to_string(inst.payload.kind)] = inst.payload.value;
    out << rec.dump() << '\n';
  }
}

void write_manifest(const fs::path &path, const Manifest &manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_manifest(out, manifest);
}

// ---------------------------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(RowMatrixf rows) : rows_(std::move(rows)) {
  if (rows_.cols() <= 0 && rows_.rows() > 0)
    throw InvalidArgument("embedding dim must be positive");
  if (!rows_.allFinite()) throw FormatError("embedding contains non-finite value");
  for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
    const float norm = rows_.row(i).norm();
    if (norm == 0.0f)
      throw FormatError("embedding row " + std::to_string(i) + " is zero");
    if (std::abs(norm - 1.0f) > kNormTolerance) {
      rows_.row(i) /= norm;
      ++renormalized_;
    }
  }
}

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms unsupported");

template <typename T> T read_le(std::istream &in, const char *what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char *>(buf), sizeof(T)))
    throw FormatError(std::string("embedding file truncated reading ") + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= std::uint64_t(buf[i]) << (8 * i);
  return static_cast<T>(v);
}

template <typename T> void write_le(std::ostream &out, T value) {
  unsigned char buf[sizeof(T)];
  auto v = static_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char *>(buf), sizeof(T));
}

} // namespace

EmbeddingMatrix read_embeddings(std::istream &in,
                                std::optional<std::size_t> expected_count) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0)
    throw FormatError("embedding file: bad magic (expected \"IJEB\")");
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kEmbeddingVersion)
    throw FormatError("embedding file: unsupported version " +
                      std::to_string(version));
  const auto dim = read_le<std::uint32_t>(in, "dim");
  const auto count = read_le<std::uint64_t>(in, "count");
  if (dim == 0) throw FormatError("embedding file: dim must be positive");
  if (expected_count && count != *expected_count)
    throw FormatError("embedding count mismatch: file has " +
                      std::to_string(count) + " rows, manifest has " +
                      std::to_string(*expected_count) + " instances");

  RowMatrixf rows(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    rows.data()[i] = std::bit_cast<float>(read_le<std::uint32_t>(in, "rows"));
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("embedding file: trailing bytes after " +
                      std::to_string(count) + " rows");
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    if (!std::isfinite(rows.data()[i]))
      throw FormatError("embedding file: non-finite value in row " +
                        std::to_string(i / rows.cols()));

  EmbeddingMatrix m(std::move(rows));
  if (m.renormalized_rows() > 0)
    warn("renormalized " + std::to_string(m.renormalized_rows()) +
         " embedding row(s) deviating from unit norm");
  return m;
}

EmbeddingMatrix load_embeddings(const fs::path &path,
                                std::optional<std::size_t> expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open embeddings " + path.string());
  try {
    return read_embeddings(in, expected_count);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_embeddings(std::ostream &out, const RowMatrixf &rows) {
  out.write(kEmbeddingMagic, 4);
  write_le<std::uint32_t>(out, kEmbeddingVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows.cols()));
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(rows.data()[i]));
}

void write_embeddings(const fs::path &path, const RowMatrixf &rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_embeddings(out, rows);
}

// ---------------------------------------------------------------------------

RetrievalDatabase::RetrievalDatabase(Manifest manifest,
                                     EmbeddingMatrix embeddings,
                                     std::optional<EmbeddingMatrix> aux)
    : manifest_(std::move(manifest)), embeddings_(std::move(embeddings)),
      aux_(std::move(aux)) {
  const auto n = manifest_.instances.size();
  if (static_cast<std::size_t>(embeddings_.count()) != n)
    throw InvalidArgument("embedding count " +
                          std::to_string(embeddings_.count()) +
                          " != instance count " + std::to_string(n));
  if (aux_ && static_cast<std::size_t>(aux_->count()) != n)
    throw InvalidArgument("auxiliary embedding count mismatch");

  std::vector<std::size_t> per_label(manifest_.labels.size(), 0);
  std::uint64_t h = fnv1a("ijip-db");
  for (std::size_t i = 0; i < n; ++i) {
    const auto &inst = manifest_.instances[i];
    auto idx = manifest_.labels.index_of(inst.label);
    if (!idx) throw InvalidArgument("instance label not in labelset: " + inst.label);
    if (inst.embedding_row >= n)
      throw InvalidArgument("embedding_row out of range for " + inst.id);
    ++per_label[*idx];
    if (!by_id_.emplace(inst.id, i).second)
      throw InvalidArgument("duplicate id " + inst.id);
    h = hash_combine(h, fnv1a(inst.id));
    h = hash_combine(h, *idx);
  }
  for (std::size_t j = 0; j < per_label.size(); ++j)
    if (per_label[j] == 0)
      throw InvalidArgument("label \"" + manifest_.labels[j] +
                            "\" has no instances");
  fingerprint_ = h;
}

std::optional<std::size_t> RetrievalDatabase::find(const std::string &id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::shared_ptr<const RetrievalDatabase>
load_database(const fs::path &manifest_path, const fs::path &embeddings_path,
              const std::optional<fs::path> &aux_path) {
  auto manifest = load_manifest(manifest_path);
  const auto n = manifest.instances.size();
  auto embeddings = load_embeddings(embeddings_path, n);
  std::optional<EmbeddingMatrix> aux;
  if (aux_path) aux = load_embeddings(*aux_path, n);
  return std::make_shared<const RetrievalDatabase>(
      std::move(manifest), std::move(embeddings), std::move(aux));
}

// ---------------------------------------------------------------------------

IncompleteView::IncompleteView(std::shared_ptr<const RetrievalDatabase> base,
                               std::vector<std::string> masked,
                               std::uint64_t seed)
    : base_(std::move(base)), seed_(seed) {
  if (!base_) throw InvalidArgument("null database");
  const auto &labels = base_->labelset();
  available_mask_.assign(labels.size(), true);
  for (const auto &label : masked) {
    auto idx = labels.index_of(label);
    if (!idx) throw InvalidArgument("unknown label \"" + label + "\"");
    available_mask_[*idx] = false;
  }
  for (std::size_t j = 0; j < labels.size(); ++j)
    (available_mask_[j] ? available_ : masked_).push_back(labels[j]);
  if (available_.empty())
    throw InvalidArgument("masking would remove every label");

  const auto &instances = base_->instances();
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (available_mask_[*labels.index_of(instances[i].label)])
      members_.push_back(i);
}

bool IncompleteView::is_available(const std::string &label) const {
  auto idx = base_->labelset().index_of(label);
  return idx && available_mask_[*idx];
}

std::size_t masked_label_count(double p, std::size_t m) {
  if (!(p >= 0.0 && p < 1.0))
    throw InvalidArgument("missing proportion must be in [0, 1)");
  // The epsilon absorbs binary representation error (0.29 * 100 < 29).
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(m) + 1e-9));
}

IncompleteView mask_labels(std::shared_ptr<const RetrievalDatabase> db,
                           double missing_proportion, std::uint64_t seed) {
  if (!db) throw InvalidArgument("null database");
  const auto &labels = db->labelset();
  const auto m = labels.size();
  const auto count = masked_label_count(missing_proportion, m);
  if (count >= m)
    throw InvalidArgument("missing proportion " +
                          std::to_string(missing_proportion) +
                          " would mask all " + std::to_string(m) + " labels");

  std::mt19937_64 rng(hash_parts(
      {db->fingerprint(), std::bit_cast<std::uint64_t>(missing_proportion), seed}));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `count` slots are the draw.
  for (std::size_t i = 0; i < count; ++i)
    std::swap(order[i], order[i + uniform_index(rng, m - i)]);

  std::vector<std::string> masked;
  for (std::size_t i = 0; i < count; ++i) masked.push_back(labels[order[i]]);
  return IncompleteView(std::move(db), std::move(masked), seed);
}

IncompleteView mask_explicit(std::shared_ptr<const RetrievalDatabase> db,
                             const std::vector<std::string> &masked) {
  return IncompleteView(std::move(db), masked, 0);
}

// ---------------------------------------------------------------------------

std::vector<Query> load_queries(const fs::path &manifest_path,
                                const fs::path &embeddings_path,
                                const LabelSet &labels,
                                const std::optional<fs::path> &aux_path) {
  auto manifest = load_manifest(manifest_path);
  if (!(manifest.labels == labels))
    throw FormatError(manifest_path.string() +
                      ": label header differs from the database labelset");
  const auto n = manifest.instances.size();
  auto embeddings = load_embeddings(embeddings_path, n);
  std::optional<EmbeddingMatrix> aux;
  if (aux_path) aux = load_embeddings(*aux_path, n);

  std::vector<Query> out;
  out.reserve(n);
  for (auto &inst : manifest.instances) {
    Query q;
    q.embedding = embeddings.row(inst.embedding_row).transpose();
    if (aux) q.aux_embedding = aux->row(inst.embedding_row).transpose();
    q.base_dir = manifest.base_dir;
    q.instance = std::move(inst);
    out.push_back(std::move(q));
  }
  return out;
}

Query query_from_database(const RetrievalDatabase &db, std::size_t position) {
  Query q;
  q.instance = db.instances().at(position);
  q.embedding = db.embeddings().row(q.instance.embedding_row).transpose();
  if (db.aux_embeddings())
    q.aux_embedding = db.aux_embeddings()->row(q.instance.embedding_row).transpose();
  q.base_dir = db.manifest().base_dir;
  return q;
}

} // namespace ijip
