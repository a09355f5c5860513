#pragma once

// Pretrained vector files: static word vectors (`N d` header, one token per
// row) and per-layer contextual stacks (`N L d` header, key line followed by
// L rows). Term and concept-label embeddings are built on top by averaging.

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "medlink/error.hpp"
#include "medlink/kg_store.hpp"
#include "medlink/linalg.hpp"
#include "medlink/text.hpp"
#include "medlink/types.hpp"

namespace medlink {

namespace detail {

inline void parse_floats(LineReader& reader, std::span<const std::string_view> fields, std::span<double> out) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    auto v = parse_double(fields[i]);
    if (!v) reader.fail("invalid number '" + std::string(fields[i]) + "'");
    if (!std::isfinite(*v)) reader.fail("non-finite value");
    out[i] = *v;
  }
}

inline void append_floats(std::string& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
}

}  // namespace detail

/// Token -> fixed-dimension vector table. Tokens keep first-seen order so
/// that save() is canonical.
class WordVectorStore {
 public:
  WordVectorStore() = default;
  explicit WordVectorStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t duplicates() const noexcept { return duplicates_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Inserts or overwrites (last write wins; overwrites are counted).
  void set(std::string_view token, std::span<const double> values) {
    if (values.size() != dim_) throw ValidationError("vector dimension mismatch for '" + std::string(token) + "'");
    auto [it, fresh] = index_.try_emplace(std::string(token), tokens_.size());
    if (fresh) {
      tokens_.emplace_back(token);
      data_.insert(data_.end(), values.begin(), values.end());
    } else {
      ++duplicates_;
      std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(it->second * dim_));
    }
  }

  const double* find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? nullptr : data_.data() + it->second * dim_;
  }

  std::span<const double> at(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  static WordVectorStore load(const std::string& path) {
    LineReader reader(path);
    std::string line;
    if (!reader.next(line)) reader.fail("missing header");
    const auto header = split_ws(line);
    if (header.size() != 2) reader.fail("header must be 'N d'");
    auto n = parse_int<std::size_t>(header[0]);
    auto d = parse_int<std::size_t>(header[1]);
    if (!n || !d || *d == 0) reader.fail("invalid header");
    WordVectorStore store(*d);
    Vector buf(*d);
    std::size_t rows = 0;
    while (reader.next(line)) {
      if (line.empty()) continue;
      const auto fields = split_ws(line);
      if (fields.size() != *d + 1)
        reader.fail("expected " + std::to_string(*d) + " values, got " + std::to_string(fields.size() - 1));
      detail::parse_floats(reader, std::span(fields).subspan(1), buf);
      store.set(fields[0], buf);
      ++rows;
    }
    if (rows != *n)
      throw ParseError(path, reader.line_no(), "header declares " + std::to_string(*n) + " rows, found " + std::to_string(rows));
    return store;
  }

  std::string serialize() const {
    std::string out = std::to_string(tokens_.size()) + ' ' + std::to_string(dim_) + '\n';
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      out += tokens_[i];
      out += ' ';
      detail::append_floats(out, at(i));
      out += '\n';
    }
    return out;
  }

  void save(const std::string& path) const { write_file(path, serialize()); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
  std::size_t duplicates_ = 0;
};

inline WordVectorStore load_word_vectors(const std::string& path) { return WordVectorStore::load(path); }

struct TermVector {
  Vector values;
  bool oov = false;  // no token (or label) contributed
  std::size_t contributors = 0;
};

/// Mean of the vectors of in-vocabulary whitespace tokens of the lowercased
/// term. All tokens unknown: zero vector with the OOV flag set.
inline TermVector term_embedding(const WordVectorStore& store, std::string_view term) {
  TermVector out{Vector(store.dim(), 0.0), true, 0};
  const auto folded = fold_case(term);
  for (auto token : split_ws(folded)) {
    const double* v = store.find(token);
    if (!v) continue;
    for (std::size_t i = 0; i < store.dim(); ++i) out.values[i] += v[i];
    ++out.contributors;
  }
  if (out.contributors > 0) {
    out.oov = false;
    for (auto& x : out.values) x /= static_cast<double>(out.contributors);
  }
  return out;
}

/// Mean of the concept's label embeddings, leaving out fully OOV labels.
inline TermVector concept_label_embedding(const WordVectorStore& store, const ConceptGraph& g, Sctid id) {
  TermVector out{Vector(store.dim(), 0.0), true, 0};
  for (const auto& label : g.labels_of(id)) {
    auto t = term_embedding(store, label);
    if (t.oov) continue;
    for (std::size_t i = 0; i < store.dim(); ++i) out.values[i] += t.values[i];
    ++out.contributors;
  }
  if (out.contributors > 0) {
    out.oov = false;
    for (auto& x : out.values) x /= static_cast<double>(out.contributors);
  }
  return out;
}

/// L x d per-layer representations of one mention or label, layer-major,
/// layer 0 lowest.
struct LayerStack {
  std::size_t layers = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  LayerStack() = default;
  LayerStack(std::size_t l, std::size_t d) : layers(l), dim(d), data(l * d, 0.0) {}

  std::span<const double> layer(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<double> layer(std::size_t i) { return {data.data() + i * dim, dim}; }

  bool operator==(const LayerStack&) const = default;
};

inline std::string label_stack_key(Sctid id, std::size_t label_index) {
  return "label:" + id.str() + ':' + std::to_string(label_index);
}

/// Keyed collection of LayerStacks sharing one (L, d) shape, in file order.
class LayerStackFile {
 public:
  LayerStackFile() = default;
  LayerStackFile(std::size_t layers, std::size_t dim) : layers_(layers), dim_(dim) {}

  std::size_t layers() const noexcept { return layers_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }
  const std::vector<std::string>& keys() const noexcept { return keys_; }

  void add(std::string key, LayerStack stack) {
    if (stack.layers != layers_ || stack.dim != dim_) throw ValidationError("layer stack shape mismatch for key " + key);
    if (index_.contains(key)) throw ValidationError("duplicate layer stack key " + key);
    index_.emplace(key, stacks_.size());
    keys_.push_back(std::move(key));
    stacks_.push_back(std::move(stack));
  }

  const LayerStack* find(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &stacks_[it->second];
  }

  const LayerStack& at(const std::string& key) const {
    auto* s = find(key);
    if (!s) throw NotFoundError("no layer stack for key " + key);
    return *s;
  }

  static LayerStackFile load(const std::string& path) {
    LineReader reader(path);
    std::string line;
    if (!reader.next(line)) reader.fail("missing header");
    const auto header = split_ws(line);
    if (header.size() != 3) reader.fail("header must be 'N L d'");
    auto n = parse_int<std::size_t>(header[0]);
    auto l = parse_int<std::size_t>(header[1]);
    auto d = parse_int<std::size_t>(header[2]);
    if (!n || !l || !d || *l == 0 || *d == 0) reader.fail("invalid header");
    LayerStackFile file(*l, *d);
    for (std::size_t rec = 0; rec < *n; ++rec) {
      if (!reader.next(line) || line.empty()) reader.fail("expected record key");
      std::string key = line;
      if (file.index_.contains(key)) throw ParseError(path, reader.line_no(), "duplicate key " + key);
      LayerStack stack(*l, *d);
      for (std::size_t i = 0; i < *l; ++i) {
        if (!reader.next(line)) reader.fail("truncated record " + key);
        const auto fields = split_ws(line);
        if (fields.size() != *d)
          reader.fail("expected " + std::to_string(*d) + " values, got " + std::to_string(fields.size()));
        detail::parse_floats(reader, fields, stack.layer(i));
      }
      file.add(std::move(key), std::move(stack));
    }
    while (reader.next(line))
      if (!line.empty()) reader.fail("data after the declared " + std::to_string(*n) + " records");
    return file;
  }

  std::string serialize() const {
    std::string out = std::to_string(keys_.size()) + ' ' + std::to_string(layers_) + ' ' + std::to_string(dim_) + '\n';
    for (std::size_t k = 0; k < keys_.size(); ++k) {
      out += keys_[k];
      out += '\n';
      for (std::size_t i = 0; i < layers_; ++i) {
        detail::append_floats(out, stacks_[k].layer(i));
        out += '\n';
      }
    }
    return out;
  }

  void save(const std::string& path) const { write_file(path, serialize()); }

 private:
  std::size_t layers_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<LayerStack> stacks_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline LayerStackFile load_layer_stacks(const std::string& path) { return LayerStackFile::load(path); }

/// Mean of one layer over the concept's label stacks (`label:<sctid>:<i>`).
/// Labels without a stack are left out; none at all gives zeros + OOV flag.
inline TermVector concept_label_layer(const LayerStackFile& stacks, const ConceptGraph& g, Sctid id,
                                      std::size_t layer) {
  TermVector out{Vector(stacks.dim(), 0.0), true, 0};
  const auto& labels = g.labels_of(id);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto* s = stacks.find(label_stack_key(id, i));
    if (!s) continue;
    const auto v = s->layer(layer);
    for (std::size_t k = 0; k < v.size(); ++k) out.values[k] += v[k];
    ++out.contributors;
  }
  if (out.contributors > 0) {
    out.oov = false;
    for (auto& x : out.values) x /= static_cast<double>(out.contributors);
  }
  return out;
}

/// Concatenation in argument order.
inline Vector concat(std::span<const Vector> parts) {
  Vector out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Vector concat(std::initializer_list<std::span<const double>> parts) {
  Vector out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace medlink
