#include "paircfr/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace paircfr {

namespace {

using nlohmann::json;

void write_shortest(std::ostream& os, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

json spec_json(const FeatureModelSpec& spec) {
  return json{{"layout",
               {{"dim_r1", spec.layout.dim_r1},
                {"dim_r2", spec.layout.dim_r2},
                {"dim_s", spec.layout.dim_s}}},
              {"mu_r1", spec.mu_r1},
              {"mu_r2", spec.mu_r2},
              {"mu_s", spec.mu_s},
              {"sigma_r1", matrix_to_json(spec.sigma_r1)},
              {"sigma_r2", matrix_to_json(spec.sigma_r2)},
              {"sigma_s", matrix_to_json(spec.sigma_s)},
              {"classes", spec.classes},
              {"label_prior", spec.label_prior}};
}

FeatureModelSpec spec_from(const json& j) {
  FeatureModelSpec spec;
  spec.layout.dim_r1 = j.at("layout").at("dim_r1").get<std::size_t>();
  spec.layout.dim_r2 = j.at("layout").at("dim_r2").get<std::size_t>();
  spec.layout.dim_s = j.at("layout").at("dim_s").get<std::size_t>();
  spec.mu_r1 = j.at("mu_r1").get<Vec>();
  spec.mu_r2 = j.at("mu_r2").get<Vec>();
  spec.mu_s = j.at("mu_s").get<Vec>();
  spec.sigma_r1 = matrix_from_json(j.at("sigma_r1"));
  spec.sigma_r2 = matrix_from_json(j.at("sigma_r2"));
  spec.sigma_s = matrix_from_json(j.at("sigma_s"));
  spec.classes = j.at("classes").get<int>();
  spec.label_prior = j.at("label_prior").get<double>();
  return spec;
}

}  // namespace

std::string spec_to_json(const FeatureModelSpec& spec) {
  return spec_json(spec).dump(2);
}

FeatureModelSpec spec_from_json(const std::string& json_text) {
  return spec_from(json::parse(json_text));
}

void export_dataset(const PairedDataset& dataset, const std::string& tsv_path,
                    const std::string& sidecar_path,
                    const FeatureModelSpec* spec) {
  std::ofstream os(tsv_path);
  if (!os) throw std::runtime_error("cannot open for write: " + tsv_path);
  const std::size_t m = dataset.layout().total();
  os << "pair_id\trole\tlabel";
  for (std::size_t j = 0; j < m; ++j) os << "\tx_" << j;
  os << '\n';
  for (const Sample& s : dataset.samples()) {
    os << s.pair_id << '\t'
       << (s.role == Role::original ? "original" : "counterfactual") << '\t'
       << s.label;
    for (std::size_t j = 0; j < m; ++j) {
      os << '\t';
      write_shortest(os, s.x[j]);
    }
    os << '\n';
  }

  json sidecar{{"layout",
                {{"dim_r1", dataset.layout().dim_r1},
                 {"dim_r2", dataset.layout().dim_r2},
                 {"dim_s", dataset.layout().dim_s}}},
               {"classes", dataset.classes()},
               {"provenance",
                {{"spec_hash", dataset.provenance().spec_hash},
                 {"seed", dataset.provenance().seed},
                 {"mode", dataset.provenance().mode}}}};
  if (spec) sidecar["spec"] = spec_json(*spec);
  std::ofstream ss(sidecar_path);
  if (!ss) throw std::runtime_error("cannot open for write: " + sidecar_path);
  ss << sidecar.dump(2) << '\n';
}

PairedDataset import_dataset(const std::string& tsv_path,
                             const std::string& sidecar_path) {
  std::ifstream ss(sidecar_path);
  if (!ss) throw std::runtime_error("cannot open sidecar: " + sidecar_path);
  json sidecar = json::parse(ss);
  BlockLayout layout{sidecar.at("layout").at("dim_r1").get<std::size_t>(),
                     sidecar.at("layout").at("dim_r2").get<std::size_t>(),
                     sidecar.at("layout").at("dim_s").get<std::size_t>()};
  DatasetProvenance prov{
      sidecar.at("provenance").at("spec_hash").get<std::uint64_t>(),
      sidecar.at("provenance").at("seed").get<std::uint64_t>(),
      sidecar.at("provenance").at("mode").get<std::string>()};
  const int classes = sidecar.at("classes").get<int>();

  std::ifstream is(tsv_path);
  if (!is) throw std::runtime_error("cannot open dataset: " + tsv_path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty dataset file: " + tsv_path);

  const std::size_t m = layout.total();
  std::vector<Sample> samples;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sample s;
    std::string role;
    if (!(ls >> s.pair_id >> role >> s.label))
      throw std::runtime_error("bad dataset row: " + line);
    s.role = role == "original" ? Role::original : Role::counterfactual;
    s.x.resize(m);
    for (std::size_t j = 0; j < m; ++j)
      if (!(ls >> s.x[j]))
        throw std::runtime_error("bad dataset row (features): " + line);
    samples.push_back(std::move(s));
  }

  // restore source labels from each pair's original
  std::map<std::int64_t, int> original_label;
  for (const Sample& s : samples)
    if (s.role == Role::original) original_label[s.pair_id] = s.label;
  for (Sample& s : samples) {
    auto it = original_label.find(s.pair_id);
    s.source_label = it != original_label.end() ? it->second : s.label;
  }
  return PairedDataset(layout, classes, std::move(samples), std::move(prov));
}

}  // namespace paircfr
