#include "vlbias/embedding_set.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vlbias/errors.hpp"
#include "vlbias/leb1.hpp"
#include "vlbias/rng.hpp"

namespace vlbias {

using json = nlohmann::ordered_json;

std::string to_string(Modality m) { return m == Modality::text ? "text" : "image"; }

Modality modality_from_string(const std::string& s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  throw DataError("unknown modality: " + s);
}

LabeledEmbeddingSet::LabeledEmbeddingSet(std::size_t dim, std::vector<LabeledRow> rows,
                                         std::map<std::string, std::vector<std::string>> vocab)
    : dim_(dim), rows_(std::move(rows)), attribute_vocab_(std::move(vocab)) {
  if (rows_.empty()) throw ConsistencyError("empty embedding set");
  if (dim_ < 2) throw DataError("embedding dimension must be >= 2");
  index_.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const LabeledRow& r = rows_[i];
    if (r.values.size() != dim_)
      throw ConsistencyError("row " + r.label.id + " has dim " +
                             std::to_string(r.values.size()) + ", expected " +
                             std::to_string(dim_));
    if (!all_finite(r.values)) throw DataError("non-finite value in row " + r.label.id);
    if (!index_.emplace(r.label.id, i).second)
      throw ConsistencyError("duplicate id: " + r.label.id);
    for (const auto& [axis, value] : r.label.attributes) {
      auto it = attribute_vocab_.find(axis);
      if (it == attribute_vocab_.end())
        throw ConsistencyError("row " + r.label.id + " uses undeclared axis " + axis);
      if (std::find(it->second.begin(), it->second.end(), value) == it->second.end())
        throw ConsistencyError("row " + r.label.id + " uses value '" + value +
                               "' outside vocabulary of axis " + axis);
    }
  }
  for (const LabeledRow& r : rows_) {
    if (!r.label.counterfactual_of) continue;
    auto it = index_.find(*r.label.counterfactual_of);
    if (it == index_.end())
      throw ConsistencyError("row " + r.label.id + " references unknown counterfactual " +
                             *r.label.counterfactual_of);
    const SampleLabel& other = rows_[it->second].label;
    if (other.concept_name != r.label.concept_name)
      throw ConsistencyError("counterfactual pair " + r.label.id + "/" + other.id +
                             " differs in concept");
    if (other.attributes == r.label.attributes)
      throw ConsistencyError("counterfactual pair " + r.label.id + "/" + other.id +
                             " does not differ on any axis");
  }
}

std::size_t LabeledEmbeddingSet::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown sample id: " + id);
  return it->second;
}

std::vector<std::size_t> LabeledEmbeddingSet::indices_of_modality(Modality m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows_.size(); ++i)
    if (rows_[i].label.modality == m) out.push_back(i);
  return out;
}

void LabeledEmbeddingSet::l2_normalize_rows() {
  for (LabeledRow& r : rows_) normalize_in_place(r.values);
}

bool LabeledEmbeddingSet::rows_unit_norm(double tol) const {
  for (const LabeledRow& r : rows_)
    if (std::abs(l2_norm(r.values) - 1.0) > tol) return false;
  return true;
}

namespace {

std::filesystem::path stem_of(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".leb1") {
    std::filesystem::path p = path;
    p.replace_extension();
    return p;
  }
  return path;
}

json label_to_json(const SampleLabel& label) {
  json j;
  j["id"] = label.id;
  j["modality"] = to_string(label.modality);
  j["concept"] = label.concept_name;
  j["attributes"] = json::object();
  for (const auto& [axis, value] : label.attributes) j["attributes"][axis] = value;
  j["counterfactual_of"] =
      label.counterfactual_of ? json(*label.counterfactual_of) : json(nullptr);
  j["prompt_text"] = label.prompt_text ? json(*label.prompt_text) : json(nullptr);
  return j;
}

SampleLabel label_from_json(const json& j) {
  SampleLabel label;
  label.id = j.at("id").get<std::string>();
  label.modality = modality_from_string(j.at("modality").get<std::string>());
  label.concept_name = j.at("concept").get<std::string>();
  for (const auto& [axis, value] : j.at("attributes").items())
    label.attributes[axis] = value.get<std::string>();
  if (j.contains("counterfactual_of") && !j.at("counterfactual_of").is_null())
    label.counterfactual_of = j.at("counterfactual_of").get<std::string>();
  if (j.contains("prompt_text") && !j.at("prompt_text").is_null())
    label.prompt_text = j.at("prompt_text").get<std::string>();
  return label;
}

}  // namespace

LabeledEmbeddingSet load_set(const std::filesystem::path& path) {
  const auto stem = stem_of(path);
  const auto manifest_path = std::filesystem::path(stem).concat(".jsonl");
  const auto matrix_path = std::filesystem::path(stem).concat(".leb1");

  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open manifest: " + manifest_path.string());

  std::string line;
  if (!std::getline(manifest, line)) throw FormatError("manifest is empty");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError("manifest header is not valid JSON: " + std::string(e.what()));
  }
  if (!header.contains("dim") || !header.contains("normalized") ||
      !header.contains("attribute_vocab"))
    throw FormatError("manifest header must declare dim, normalized, attribute_vocab");
  const std::size_t dim = header.at("dim").get<std::size_t>();
  const bool normalized = header.at("normalized").get<bool>();
  std::map<std::string, std::vector<std::string>> vocab;
  for (const auto& [axis, values] : header.at("attribute_vocab").items())
    vocab[axis] = values.get<std::vector<std::string>>();

  std::vector<SampleLabel> labels;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("manifest row " + std::to_string(labels.size()) +
                        " is not valid JSON: " + std::string(e.what()));
    }
    labels.push_back(label_from_json(j));
  }

  const MatrixF32 matrix = read_leb1_file(matrix_path);
  if (matrix.dim != dim)
    throw ConsistencyError("manifest dim " + std::to_string(dim) + " != matrix dim " +
                           std::to_string(matrix.dim));
  if (matrix.rows != labels.size())
    throw ConsistencyError("manifest has " + std::to_string(labels.size()) +
                           " rows, matrix has " + std::to_string(matrix.rows));
  if (labels.empty()) throw ConsistencyError("empty embedding set");

  std::vector<LabeledRow> rows;
  rows.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Vec v(dim);
    for (std::size_t c = 0; c < dim; ++c)
      v[c] = static_cast<double>(matrix.data[i * dim + c]);
    rows.push_back({std::move(labels[i]), std::move(v)});
  }

  LabeledEmbeddingSet set(dim, std::move(rows), std::move(vocab));
  if (!normalized) set.l2_normalize_rows();
  return set;
}

void save_set(const LabeledEmbeddingSet& set, const std::filesystem::path& path) {
  const auto stem = stem_of(path);
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto manifest_path = std::filesystem::path(stem).concat(".jsonl");
  const auto matrix_path = std::filesystem::path(stem).concat(".leb1");

  MatrixF32 matrix;
  matrix.rows = static_cast<std::uint32_t>(set.size());
  matrix.dim = static_cast<std::uint32_t>(set.dim());
  matrix.data.reserve(set.size() * set.dim());
  for (const LabeledRow& r : set.rows())
    for (double v : r.values) matrix.data.push_back(static_cast<float>(v));
  write_leb1_file(matrix_path, matrix);

  std::ofstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw IoError("cannot open manifest for writing: " + manifest_path.string());
  json header;
  header["dim"] = set.dim();
  // rows are stored exactly as they are meant to be consumed
  header["normalized"] = true;
  header["attribute_vocab"] = json::object();
  for (const auto& [axis, values] : set.attribute_vocab())
    header["attribute_vocab"][axis] = values;
  manifest << header.dump() << "\n";
  for (const LabeledRow& r : set.rows()) manifest << label_to_json(r.label).dump() << "\n";
  manifest.flush();
  if (!manifest) throw IoError("write failed: " + manifest_path.string());
}

namespace {

// canonical key of (concept, full attribute map) for grouping
std::string group_key(const SampleLabel& label) {
  std::string key = label.concept_name;
  for (const auto& [axis, value] : label.attributes) key += "\x1f" + axis + "=" + value;
  return key;
}

}  // namespace

std::map<std::string, std::string> pair_counterfactuals(const LabeledEmbeddingSet& set,
                                                        const std::vector<std::string>& axes,
                                                        std::uint64_t seed) {
  if (axes.empty()) throw ConfigError("pair_counterfactuals: no axes given");
  for (const std::string& axis : axes) {
    auto it = set.attribute_vocab().find(axis);
    if (it == set.attribute_vocab().end())
      throw ConfigError("pair_counterfactuals: undeclared axis " + axis);
    if (it->second.size() < 2)
      throw ConfigError("pair_counterfactuals: axis " + axis + " has fewer than 2 values");
  }

  const auto text_indices = set.indices_of_modality(Modality::text);
  std::vector<std::string> unmatched;

  // rows missing a requested axis cannot be paired at all
  std::vector<std::size_t> usable;
  for (std::size_t i : text_indices) {
    const SampleLabel& label = set.row(i).label;
    bool ok = true;
    for (const std::string& axis : axes)
      if (!label.attributes.count(axis)) ok = false;
    if (ok)
      usable.push_back(i);
    else
      unmatched.push_back(label.id);
  }

  bool all_binary = true;
  for (const std::string& axis : axes)
    if (set.attribute_vocab().at(axis).size() != 2) all_binary = false;

  std::map<std::string, std::vector<std::string>> groups;  // key -> sorted ids
  for (std::size_t i : usable) groups[group_key(set.row(i).label)].push_back(set.row(i).label.id);
  for (auto& [key, ids] : groups) std::sort(ids.begin(), ids.end());

  std::map<std::string, std::string> pairing;

  if (all_binary) {
    // flip every requested axis; pair rank-for-rank so the map is an involution
    for (std::size_t i : usable) {
      const SampleLabel& label = set.row(i).label;
      SampleLabel flipped = label;
      for (const std::string& axis : axes) {
        const auto& values = set.attribute_vocab().at(axis);
        flipped.attributes[axis] =
            (label.attributes.at(axis) == values[0]) ? values[1] : values[0];
      }
      const auto& own = groups.at(group_key(label));
      auto target_it = groups.find(group_key(flipped));
      if (target_it == groups.end() || target_it->second.size() != own.size()) {
        unmatched.push_back(label.id);
        continue;
      }
      const std::size_t rank = static_cast<std::size_t>(
          std::lower_bound(own.begin(), own.end(), label.id) - own.begin());
      pairing[label.id] = target_it->second[rank];
    }
  } else {
    // candidates differ on every requested axis; draw the target value combo
    // uniformly, then a row uniformly within it
    for (std::size_t i : usable) {
      const SampleLabel& label = set.row(i).label;
      std::map<std::string, std::vector<std::string>> combo_rows;  // combo key -> ids
      for (std::size_t j : usable) {
        if (j == i) continue;
        const SampleLabel& other = set.row(j).label;
        if (other.concept_name != label.concept_name) continue;
        bool candidate = true;
        for (const auto& [axis, value] : label.attributes) {
          const bool requested = std::find(axes.begin(), axes.end(), axis) != axes.end();
          auto it = other.attributes.find(axis);
          if (it == other.attributes.end() ||
              (requested ? it->second == value : it->second != value)) {
            candidate = false;
            break;
          }
        }
        if (candidate && other.attributes.size() == label.attributes.size()) {
          std::string combo;
          for (const std::string& axis : axes) combo += other.attributes.at(axis) + "\x1f";
          combo_rows[combo].push_back(other.id);
        }
      }
      if (combo_rows.empty()) {
        unmatched.push_back(label.id);
        continue;
      }
      Rng rng(mix_seed(seed, hash_string(label.id)));
      auto combo_it = combo_rows.begin();
      std::advance(combo_it, static_cast<long>(rng.below(combo_rows.size())));
      std::vector<std::string>& ids = combo_it->second;
      std::sort(ids.begin(), ids.end());
      pairing[label.id] = ids[rng.below(ids.size())];
    }
  }

  if (!unmatched.empty()) {
    std::sort(unmatched.begin(), unmatched.end());
    std::string msg = "no counterfactual counterpart for:";
    for (const std::string& id : unmatched) msg += " " + id;
    throw PairingError(msg);
  }
  return pairing;
}

}  // namespace vlbias
