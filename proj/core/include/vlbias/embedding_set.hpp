#pragma once

// Labeled embedding sets and their on-disk form: a LEB1 matrix file next to a
// JSON-lines manifest. The manifest's first line is a header
//   {"dim": d, "normalized": bool, "attribute_vocab": {axis: [values]}}
// followed by one object per matrix row with keys
//   id, modality, concept, attributes, counterfactual_of, prompt_text.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlbias/vec.hpp"

namespace vlbias {

enum class Modality { text, image };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);  // DataError

struct SampleLabel {
  std::string id;
  Modality modality = Modality::text;
  std::string concept_name;                          // e.g. "dancer"
  std::map<std::string, std::string> attributes;     // axis -> value
  std::optional<std::string> counterfactual_of;
  std::optional<std::string> prompt_text;
};

struct LabeledRow {
  SampleLabel label;
  Vec values;
};

class LabeledEmbeddingSet {
 public:
  LabeledEmbeddingSet() = default;

  /// Validates on construction: nonempty, uniform dim >= 2, unique ids,
  /// finite values, attributes drawn from the declared vocabulary,
  /// counterfactual_of references resolvable and structurally sane.
  LabeledEmbeddingSet(std::size_t dim, std::vector<LabeledRow> rows,
                      std::map<std::string, std::vector<std::string>> attribute_vocab);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }
  const std::vector<LabeledRow>& rows() const { return rows_; }
  const LabeledRow& row(std::size_t i) const { return rows_.at(i); }
  const std::map<std::string, std::vector<std::string>>& attribute_vocab() const {
    return attribute_vocab_;
  }

  bool has_id(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t index_of(const std::string& id) const;  // DataError if unknown
  const LabeledRow& by_id(const std::string& id) const { return rows_[index_of(id)]; }

  std::vector<std::size_t> indices_of_modality(Modality m) const;

  /// L2-normalizes every row in place (float64). Idempotent up to ~1e-16
  /// per component. DegenerateError on a zero row.
  void l2_normalize_rows();

  /// True when every row has unit norm within tol.
  bool rows_unit_norm(double tol = 1e-6) const;

 private:
  std::size_t dim_ = 0;
  std::vector<LabeledRow> rows_;
  std::map<std::string, std::vector<std::string>> attribute_vocab_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Loads a manifest+matrix pair. `path` may be the manifest (.jsonl), the
/// matrix (.leb1) or the common stem. Rows are L2-normalized iff the manifest
/// header says normalized=false.
LabeledEmbeddingSet load_set(const std::filesystem::path& path);

/// Writes `<stem>.leb1` and `<stem>.jsonl`. Values are stored float32;
/// loading the result back reproduces it bit-exactly.
void save_set(const LabeledEmbeddingSet& set, const std::filesystem::path& path);

/// For every text row, finds the row with identical concept and attributes
/// except that the value differs on every requested axis. Binary axes pair
/// positionally (an involution); axes with more values pick a counterpart
/// value uniformly at random under the given seed. PairingError lists every
/// id without a counterpart.
std::map<std::string, std::string> pair_counterfactuals(const LabeledEmbeddingSet& set,
                                                        const std::vector<std::string>& axes,
                                                        std::uint64_t seed = 0);

}  // namespace vlbias
