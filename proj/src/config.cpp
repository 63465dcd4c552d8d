#include "paircfr/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace paircfr {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& raw) {
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
    return raw.substr(1, raw.size() - 2);
  return raw;
}

std::vector<std::string> split_array(const std::string& raw,
                                     const std::string& key) {
  const std::string t = trim(raw);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']')
    throw std::invalid_argument("config key " + key + " is not an array");
  std::vector<std::string> items;
  std::string body = t.substr(1, t.size() - 2);
  std::string current;
  bool in_quote = false;
  for (char c : body) {
    if (c == '"') in_quote = !in_quote;
    if (c == ',' && !in_quote) {
      items.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!trim(current).empty()) items.push_back(trim(current));
  return items;
}

}  // namespace

ConfigTree ConfigTree::parse_string(const std::string& text) {
  ConfigTree tree;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key or value");
    tree.values_[section.empty() ? key : section + "." + key] = value;
  }
  return tree;
}

ConfigTree ConfigTree::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return parse_string(buffer.str());
}

bool ConfigTree::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string ConfigTree::get_string(const std::string& key,
                                   const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : unquote(it->second);
}

double ConfigTree::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw std::invalid_argument("config key " + key + ": not a number: " +
                                it->second);
  }
}

std::int64_t ConfigTree::get_int(const std::string& key,
                                 std::int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw std::invalid_argument("config key " + key + ": not an integer: " +
                                it->second);
  }
}

bool ConfigTree::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw std::invalid_argument("config key " + key + ": expected true/false");
}

std::vector<double> ConfigTree::get_double_array(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<double> out;
  for (const auto& item : split_array(it->second, key)) {
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw std::invalid_argument("config key " + key +
                                  ": bad array element: " + item);
    }
  }
  return out;
}

std::vector<std::string> ConfigTree::get_string_array(
    const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::vector<std::string> out;
  for (const auto& item : split_array(it->second, key))
    out.push_back(unquote(item));
  return out;
}

void ConfigTree::set(const std::string& key, const std::string& raw_value) {
  values_[key] = raw_value;
}

std::string ConfigTree::to_toml() const {
  // group keys by section so each table header appears exactly once
  std::vector<std::tuple<std::string, std::string, std::string>> rows;
  rows.reserve(values_.size());
  for (const auto& [key, value] : values_) {
    const auto dotpos = key.rfind('.');
    rows.emplace_back(dotpos == std::string::npos ? "" : key.substr(0, dotpos),
                      dotpos == std::string::npos ? key
                                                  : key.substr(dotpos + 1),
                      value);
  }
  std::sort(rows.begin(), rows.end());

  std::ostringstream os;
  std::string section;
  bool first = true;
  for (const auto& [sec, leaf, value] : rows) {
    if (sec != section || first) {
      if (!first) os << '\n';
      if (!sec.empty()) os << '[' << sec << "]\n";
      section = sec;
      first = false;
    }
    os << leaf << " = " << value << '\n';
  }
  return os.str();
}

namespace {

// shortest decimal that round-trips the exact double
std::string number_literal(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Vec to_vec(const std::vector<double>& v) { return Vec(v.begin(), v.end()); }

std::vector<std::size_t> to_sizes(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(static_cast<std::size_t>(x));
  return out;
}

std::string quoted(const std::string& s) { return '"' + s + '"'; }

template <typename T>
std::string array_literal(const std::vector<T>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    if constexpr (std::is_same_v<T, double>)
      os << number_literal(v[i]);
    else
      os << v[i];
  }
  os << ']';
  return os.str();
}

}  // namespace

ExperimentConfig experiment_from_config(const ConfigTree& t) {
  ExperimentConfig cfg;

  const std::string source = t.get_string("data.source", "synthetic_paircad");
  if (source == "synthetic_paircad")
    cfg.data.kind = DataSourceKind::synthetic_paircad;
  else if (source == "synthetic_original")
    cfg.data.kind = DataSourceKind::synthetic_original;
  else if (source == "text")
    cfg.data.kind = DataSourceKind::text;
  else
    throw std::invalid_argument("unknown data.source: " + source);

  cfg.data.n_pairs = static_cast<std::size_t>(t.get_int("data.n_pairs", 256));
  cfg.data.cfes_per_original =
      static_cast<std::size_t>(t.get_int("data.cfes_per_original", 1));
  const std::string edit = t.get_string("data.edit_mode", "exact_opposite");
  if (edit == "exact_opposite")
    cfg.data.edit_mode = EditMode::exact_opposite;
  else if (edit == "resample")
    cfg.data.edit_mode = EditMode::resample;
  else
    throw std::invalid_argument("unknown data.edit_mode: " + edit);

  if (cfg.data.kind == DataSourceKind::text) {
    cfg.data.path = t.get_string("data.path", "");
    if (cfg.data.path.empty())
      throw std::invalid_argument("data.path required for text source");
    CadSchema& schema = cfg.data.schema;
    schema.text_column = t.get_string("data.schema.text_column", "text");
    schema.text2_column = t.get_string("data.schema.text2_column", "");
    schema.label_column = t.get_string("data.schema.label_column", "label");
    schema.pair_column = t.get_string("data.schema.pair_column", "pair_id");
    schema.role_column = t.get_string("data.schema.role_column", "role");
    schema.separator_token =
        t.get_string("data.schema.separator_token", "pairsep");
    schema.cfes_per_original = static_cast<std::size_t>(
        t.get_int("data.schema.cfes_per_original", 1));
    for (const auto& entry : t.get_string_array("data.schema.labels")) {
      const auto eq = entry.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("data.schema.labels entries must be name=id");
      schema.label_table[entry.substr(0, eq)] =
          std::stoi(entry.substr(eq + 1));
    }
    if (schema.label_table.empty())
      schema.label_table = {{"Negative", 0}, {"Positive", 1}};
    HashFeaturizer& f = cfg.data.featurizer;
    f.dim = static_cast<std::size_t>(
        t.get_int("data.featurizer.dim", 1 << 14));
    f.unigrams = t.get_bool("data.featurizer.unigrams", true);
    f.bigrams = t.get_bool("data.featurizer.bigrams", true);
    f.l2_normalize = t.get_bool("data.featurizer.l2_normalize", true);
    f.hash_seed = static_cast<std::uint64_t>(
        t.get_int("data.featurizer.hash_seed", 0));
  } else {
    BlockLayout layout{
        static_cast<std::size_t>(t.get_int("data.spec.dim_r1", 2)),
        static_cast<std::size_t>(t.get_int("data.spec.dim_r2", 2)),
        static_cast<std::size_t>(t.get_int("data.spec.dim_s", 2))};
    Vec mu_r1 = to_vec(t.get_double_array("data.spec.mu_r1"));
    Vec mu_r2 = to_vec(t.get_double_array("data.spec.mu_r2"));
    Vec mu_s = to_vec(t.get_double_array("data.spec.mu_s"));
    if (mu_r1.empty()) mu_r1 = Vec{1.0, 0.5};
    if (mu_r2.empty() && layout.dim_r2 > 0) mu_r2 = Vec{1.0, 0.0};
    if (mu_s.empty() && layout.dim_s > 0) mu_s = Vec{0.8, 0.0};
    cfg.data.spec = FeatureModelSpec::isotropic(
        layout, mu_r1, mu_r2, mu_s, t.get_double("data.spec.var_r1", 1.0),
        t.get_double("data.spec.var_r2", 1.0),
        t.get_double("data.spec.var_s", 1.0),
        static_cast<int>(t.get_int("data.spec.classes", 2)));
    cfg.data.spec.label_prior = t.get_double("data.spec.label_prior", 0.5);
  }

  const auto ratios = t.get_double_array("split.ratios");
  if (!ratios.empty()) {
    if (ratios.size() != 3)
      throw std::invalid_argument("split.ratios must hold three values");
    cfg.split_ratios = {ratios[0], ratios[1], ratios[2]};
  }

  LossConfig& loss = cfg.train.loss;
  loss.lambda = t.get_double("loss.lambda", 0.5);
  loss.tau = t.get_double("loss.tau", 0.3);
  const std::string sim = t.get_string("loss.similarity", "cosine");
  if (sim == "cosine")
    loss.similarity = Similarity::cosine;
  else if (sim == "dot")
    loss.similarity = Similarity::dot;
  else
    throw std::invalid_argument("unknown loss.similarity: " + sim);
  loss.neutral_excluded = t.get_bool("loss.neutral_excluded", true);
  const std::string pol =
      t.get_string("loss.no_positive_policy", "repulsion_only");
  if (pol == "repulsion_only")
    loss.no_positive_policy = NoPositivePolicy::repulsion_only;
  else if (pol == "skip_anchor")
    loss.no_positive_policy = NoPositivePolicy::skip_anchor;
  else
    throw std::invalid_argument("unknown loss.no_positive_policy: " + pol);

  TrainConfig& train = cfg.train;
  train.batch_size =
      static_cast<std::size_t>(t.get_int("train.batch_size", 16));
  const std::string strat = t.get_string("train.strategy", "paircad");
  if (strat == "paircad")
    train.strategy = BatchStrategy::paircad;
  else if (strat == "shuffcad")
    train.strategy = BatchStrategy::shuffcad;
  else
    throw std::invalid_argument("unknown train.strategy: " + strat);
  const std::string opt = t.get_string("train.optimizer", "adamw");
  if (opt == "sgd")
    train.optimizer.kind = OptimizerKind::sgd;
  else if (opt == "adamw")
    train.optimizer.kind = OptimizerKind::adamw;
  else
    throw std::invalid_argument("unknown train.optimizer: " + opt);
  train.optimizer.lr = t.get_double("train.lr", 0.01);
  train.optimizer.momentum = t.get_double("train.momentum", 0.0);
  train.optimizer.beta1 = t.get_double("train.beta1", 0.9);
  train.optimizer.beta2 = t.get_double("train.beta2", 0.999);
  train.optimizer.epsilon = t.get_double("train.epsilon", 1e-8);
  train.optimizer.weight_decay = t.get_double("train.weight_decay", 0.0);
  train.warmup_ratio = t.get_double("train.warmup_ratio", 0.05);
  train.max_epochs =
      static_cast<std::size_t>(t.get_int("train.max_epochs", 20));
  train.patience = static_cast<std::size_t>(t.get_int("train.patience", 5));
  train.seed = static_cast<std::uint64_t>(t.get_int("train.seed", 1));

  cfg.embedding_dim =
      static_cast<std::size_t>(t.get_int("model.embedding_dim", 8));
  const std::string init = t.get_string("model.init", "scaled_normal");
  if (init == "zeros")
    cfg.init.kind = InitKind::zeros;
  else if (init == "scaled_normal")
    cfg.init.kind = InitKind::scaled_normal;
  else
    throw std::invalid_argument("unknown model.init: " + init);
  cfg.init.sigma = t.get_double("model.sigma_init", 0.1);
  cfg.identity_encoder = t.get_bool("model.identity_encoder", false);
  cfg.head_bias = t.get_bool("model.head_bias", false);

  const auto seeds = t.get_double_array("eval.seeds");
  if (!seeds.empty()) {
    cfg.seeds.clear();
    for (double s : seeds)
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  cfg.n_ood = static_cast<std::size_t>(t.get_int("eval.n_ood", 2000));
  for (const auto& name : t.get_string_array("eval.ood")) {
    auto shift = shift_from_name(name);
    if (!shift) throw std::invalid_argument("unknown eval.ood shift: " + name);
    cfg.ood_shifts.push_back(*shift);
  }
  for (const auto& entry : t.get_string_array("eval.ood_text")) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("eval.ood_text entries must be name=path");
    cfg.ood_text.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return cfg;
}

SweepGrid sweep_grid_from_config(const ConfigTree& t) {
  SweepGrid grid;
  grid.lambdas = t.get_double_array("sweep.lambda");
  grid.taus = t.get_double_array("sweep.tau");
  grid.batch_sizes = to_sizes(t.get_double_array("sweep.batch_size"));
  grid.n_pairs = to_sizes(t.get_double_array("sweep.n_pairs"));
  grid.ks = to_sizes(t.get_double_array("sweep.k"));
  if (grid.empty()) {
    // protocol default: the 0.1-step lambda grid, plus lambda = 1 as a
    // diagnostic-only point (the head receives no gradient there)
    grid.lambdas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                    0.6, 0.7, 0.8, 0.9, 1.0};
  }
  return grid;
}

std::string experiment_to_toml(const ExperimentConfig& cfg) {
  ConfigTree t;
  switch (cfg.data.kind) {
    case DataSourceKind::synthetic_paircad:
      t.set("data.source", quoted("synthetic_paircad"));
      break;
    case DataSourceKind::synthetic_original:
      t.set("data.source", quoted("synthetic_original"));
      break;
    case DataSourceKind::text:
      t.set("data.source", quoted("text"));
      break;
  }
  t.set("data.n_pairs", std::to_string(cfg.data.n_pairs));
  t.set("data.cfes_per_original", std::to_string(cfg.data.cfes_per_original));
  t.set("data.edit_mode",
        quoted(cfg.data.edit_mode == EditMode::exact_opposite
                   ? "exact_opposite"
                   : "resample"));
  if (cfg.data.kind == DataSourceKind::text) {
    t.set("data.path", quoted(cfg.data.path));
    const CadSchema& s = cfg.data.schema;
    t.set("data.schema.text_column", quoted(s.text_column));
    if (!s.text2_column.empty())
      t.set("data.schema.text2_column", quoted(s.text2_column));
    t.set("data.schema.label_column", quoted(s.label_column));
    t.set("data.schema.pair_column", quoted(s.pair_column));
    t.set("data.schema.role_column", quoted(s.role_column));
    t.set("data.schema.separator_token", quoted(s.separator_token));
    t.set("data.schema.cfes_per_original",
          std::to_string(s.cfes_per_original));
    std::vector<std::string> labels;
    for (const auto& [name, id] : s.label_table)
      labels.push_back(quoted(name + "=" + std::to_string(id)));
    t.set("data.schema.labels", array_literal(labels));
    const HashFeaturizer& f = cfg.data.featurizer;
    t.set("data.featurizer.dim", std::to_string(f.dim));
    t.set("data.featurizer.unigrams", f.unigrams ? "true" : "false");
    t.set("data.featurizer.bigrams", f.bigrams ? "true" : "false");
    t.set("data.featurizer.l2_normalize", f.l2_normalize ? "true" : "false");
    t.set("data.featurizer.hash_seed", std::to_string(f.hash_seed));
  } else {
    const FeatureModelSpec& spec = cfg.data.spec;
    t.set("data.spec.dim_r1", std::to_string(spec.layout.dim_r1));
    t.set("data.spec.dim_r2", std::to_string(spec.layout.dim_r2));
    t.set("data.spec.dim_s", std::to_string(spec.layout.dim_s));
    t.set("data.spec.mu_r1", array_literal(spec.mu_r1));
    t.set("data.spec.mu_r2", array_literal(spec.mu_r2));
    t.set("data.spec.mu_s", array_literal(spec.mu_s));
    t.set("data.spec.var_r1",
          number_literal(spec.layout.dim_r1 ? spec.sigma_r1(0, 0) : 1.0));
    t.set("data.spec.var_r2",
          number_literal(spec.layout.dim_r2 ? spec.sigma_r2(0, 0) : 1.0));
    t.set("data.spec.var_s",
          number_literal(spec.layout.dim_s ? spec.sigma_s(0, 0) : 1.0));
    t.set("data.spec.classes", std::to_string(spec.classes));
    t.set("data.spec.label_prior", number_literal(spec.label_prior));
  }
  t.set("split.ratios",
        array_literal(std::vector<double>{cfg.split_ratios[0],
                                          cfg.split_ratios[1],
                                          cfg.split_ratios[2]}));
  const LossConfig& loss = cfg.train.loss;
  t.set("loss.lambda", number_literal(loss.lambda));
  t.set("loss.tau", number_literal(loss.tau));
  t.set("loss.similarity",
        quoted(loss.similarity == Similarity::cosine ? "cosine" : "dot"));
  t.set("loss.neutral_excluded", loss.neutral_excluded ? "true" : "false");
  t.set("loss.no_positive_policy",
        quoted(loss.no_positive_policy == NoPositivePolicy::repulsion_only
                   ? "repulsion_only"
                   : "skip_anchor"));
  t.set("train.batch_size", std::to_string(cfg.train.batch_size));
  t.set("train.strategy",
        quoted(cfg.train.strategy == BatchStrategy::paircad ? "paircad"
                                                            : "shuffcad"));
  t.set("train.optimizer",
        quoted(cfg.train.optimizer.kind == OptimizerKind::sgd ? "sgd"
                                                              : "adamw"));
  t.set("train.lr", number_literal(cfg.train.optimizer.lr));
  t.set("train.momentum", number_literal(cfg.train.optimizer.momentum));
  t.set("train.beta1", number_literal(cfg.train.optimizer.beta1));
  t.set("train.beta2", number_literal(cfg.train.optimizer.beta2));
  t.set("train.epsilon", number_literal(cfg.train.optimizer.epsilon));
  t.set("train.weight_decay",
        number_literal(cfg.train.optimizer.weight_decay));
  t.set("train.warmup_ratio", number_literal(cfg.train.warmup_ratio));
  t.set("train.max_epochs", std::to_string(cfg.train.max_epochs));
  t.set("train.patience", std::to_string(cfg.train.patience));
  t.set("train.seed", std::to_string(cfg.train.seed));
  t.set("model.embedding_dim", std::to_string(cfg.embedding_dim));
  t.set("model.init",
        quoted(cfg.init.kind == InitKind::zeros ? "zeros" : "scaled_normal"));
  t.set("model.sigma_init", number_literal(cfg.init.sigma));
  t.set("model.identity_encoder", cfg.identity_encoder ? "true" : "false");
  t.set("model.head_bias", cfg.head_bias ? "true" : "false");
  std::vector<std::string> seeds;
  for (auto s : cfg.seeds) seeds.push_back(std::to_string(s));
  t.set("eval.seeds", array_literal(seeds));
  t.set("eval.n_ood", std::to_string(cfg.n_ood));
  std::vector<std::string> shifts;
  for (Shift s : cfg.ood_shifts) shifts.push_back(quoted(shift_name(s)));
  t.set("eval.ood", array_literal(shifts));
  if (!cfg.ood_text.empty()) {
    std::vector<std::string> entries;
    for (const auto& [name, path] : cfg.ood_text)
      entries.push_back(quoted(name + "=" + path));
    t.set("eval.ood_text", array_literal(entries));
  }
  return t.to_toml();
}

}  // namespace paircfr
