#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paircfr/feature_model.hpp"

namespace paircfr {

struct CadRecord {
  std::string text;
  int label = 0;
  std::int64_t pair_id = 0;
  Role role = Role::original;
};

// Deterministic signed feature hashing of lowercase alphanumeric token
// n-grams. For each n-gram the 64-bit FNV-1a hash of the tokens joined by the
// 0x1F byte (seed absorbed first as 8 little-endian bytes) selects
// index = hash & (dim-1) and sign = +1 when the top hash bit is clear.
struct HashFeaturizer {
  std::size_t dim = 1u << 14;  // power of two
  bool unigrams = true;
  bool bigrams = true;
  bool l2_normalize = true;
  std::uint64_t hash_seed = 0;

  void validate() const;
};

// Column mapping for human-edited CAD tables. When `pair_column` is empty the
// pairing is order-based: each original is followed by its
// `cfes_per_original` counterfactuals.
struct CadSchema {
  std::string text_column = "text";
  std::string text2_column;  // optional second sentence (e.g. hypothesis)
  std::string label_column = "label";
  std::string pair_column = "pair_id";
  std::string role_column = "role";
  std::map<std::string, int> label_table;  // e.g. {"Negative",0},{"Positive",1}
  std::size_t cfes_per_original = 1;
  std::string separator_token = "pairsep";  // joins sentence pairs
};

std::vector<std::string> tokenize(const std::string& text);

Vec hash_featurize(const std::string& text, const HashFeaturizer& f);

std::vector<CadRecord> parse_cad_table(const std::string& path,
                                       const CadSchema& schema);

// Single pseudo-block layout (dim_r1 = dim): the block theorems do not apply
// to hashed text, but training and evaluation run unchanged.
PairedDataset build_text_dataset(const std::vector<CadRecord>& records,
                                 const HashFeaturizer& f);

}  // namespace paircfr
