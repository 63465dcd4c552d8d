#include "paircfr/text_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "paircfr/rng.hpp"

namespace paircfr {

void HashFeaturizer::validate() const {
  if (dim < 2 || (dim & (dim - 1)) != 0)
    throw std::invalid_argument("HashFeaturizer: dim must be a power of two >= 2");
  if (!unigrams && !bigrams)
    throw std::invalid_argument("HashFeaturizer: no n-gram orders enabled");
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vec hash_featurize(const std::string& text, const HashFeaturizer& f) {
  f.validate();
  Vec x(f.dim, 0.0);
  const std::vector<std::string> tokens = tokenize(text);

  auto accumulate_gram = [&x, &f](const std::string& gram) {
    const std::uint64_t h =
        fnv1a64(gram.data(), gram.size(), f.hash_seed, /*use_salt=*/true);
    const std::size_t idx = h & (f.dim - 1);
    x[idx] += (h >> 63) == 0 ? 1.0 : -1.0;
  };

  if (f.unigrams)
    for (const auto& t : tokens) accumulate_gram(t);
  if (f.bigrams)
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
      accumulate_gram(tokens[i] + '\x1f' + tokens[i + 1]);

  if (f.l2_normalize) {
    double n = norm2(x);
    if (n > 0.0)
      for (double& v : x) v /= n;
  }
  return x;
}

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::size_t column_index(const std::vector<std::string>& header,
                         const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw std::runtime_error("missing column: " + name);
  return static_cast<std::size_t>(it - header.begin());
}

Role parse_role(std::string value) {
  std::transform(value.begin(), value.end(), value.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (value == "original") return Role::original;
  if (value == "counterfactual" || value == "revised" || value == "cfe")
    return Role::counterfactual;
  throw std::runtime_error("unknown role value: " + value);
}

}  // namespace

std::vector<CadRecord> parse_cad_table(const std::string& path,
                                       const CadSchema& schema) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open CAD table: " + path);

  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty CAD table: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_tsv(line);

  const std::size_t text_idx = column_index(header, schema.text_column);
  const std::size_t label_idx = column_index(header, schema.label_column);
  const bool order_based = schema.pair_column.empty();
  const std::size_t pair_idx =
      order_based ? 0 : column_index(header, schema.pair_column);
  const std::size_t role_idx =
      order_based ? 0 : column_index(header, schema.role_column);
  const bool two_texts = !schema.text2_column.empty();
  const std::size_t text2_idx =
      two_texts ? column_index(header, schema.text2_column) : 0;

  std::vector<CadRecord> records;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_tsv(line);
    if (fields.size() < header.size())
      throw std::runtime_error("row " + std::to_string(row + 2) +
                               ": expected " + std::to_string(header.size()) +
                               " columns");
    CadRecord rec;
    rec.text = fields[text_idx];
    if (two_texts)
      rec.text += " " + schema.separator_token + " " + fields[text2_idx];
    if (rec.text.empty())
      throw std::runtime_error("row " + std::to_string(row + 2) +
                               ": empty text");

    auto lt = schema.label_table.find(fields[label_idx]);
    if (lt == schema.label_table.end())
      throw std::runtime_error("unknown label string: " + fields[label_idx]);
    rec.label = lt->second;

    if (order_based) {
      const std::size_t group = schema.cfes_per_original + 1;
      rec.pair_id = static_cast<std::int64_t>(row / group);
      rec.role = (row % group == 0) ? Role::original : Role::counterfactual;
    } else {
      rec.pair_id = std::stoll(fields[pair_idx]);
      rec.role = parse_role(fields[role_idx]);
    }
    records.push_back(std::move(rec));
    ++row;
  }

  std::set<std::int64_t> originals;
  for (const auto& r : records)
    if (r.role == Role::original) originals.insert(r.pair_id);
  for (const auto& r : records)
    if (r.role == Role::counterfactual && !originals.count(r.pair_id))
      throw std::runtime_error("dangling counterfactual: pair_id " +
                               std::to_string(r.pair_id));
  return records;
}

PairedDataset build_text_dataset(const std::vector<CadRecord>& records,
                                 const HashFeaturizer& f) {
  f.validate();
  BlockLayout layout{f.dim, 0, 0};
  std::vector<Sample> samples;
  samples.reserve(records.size());
  int max_label = 1;

  // first pass: original labels by pair, for source_label bookkeeping
  std::map<std::int64_t, int> original_label;
  for (const auto& r : records)
    if (r.role == Role::original) original_label[r.pair_id] = r.label;

  for (const auto& r : records) {
    Sample s;
    s.x = hash_featurize(r.text, f);
    s.label = r.label;
    s.role = r.role;
    s.pair_id = r.pair_id;
    auto it = original_label.find(r.pair_id);
    s.source_label = it != original_label.end() ? it->second : r.label;
    max_label = std::max(max_label, r.label);
    samples.push_back(std::move(s));
  }

  DatasetProvenance prov{f.hash_seed, f.hash_seed, "text"};
  return PairedDataset(layout, max_label + 1, std::move(samples),
                       std::move(prov));
}

}  // namespace paircfr
