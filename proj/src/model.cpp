#include "paircfr/model.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "paircfr/rng.hpp"

namespace paircfr {

LinearModel init_model(std::size_t m, std::size_t d, std::size_t k,
                       const InitDescriptor& init, const BlockLayout& layout,
                       bool identity_encoder, bool head_bias) {
  if (m < 1 || d < 1 || k < 1)
    throw std::invalid_argument("init_model: m, d, K must all be >= 1");
  if (identity_encoder && d != m)
    throw std::invalid_argument("identity encoder requires d == m");
  if (layout.total() != m)
    throw std::invalid_argument("init_model: layout total != m");

  LinearModel model;
  model.layout = layout;
  model.identity_encoder = identity_encoder;
  model.init = init;
  model.encoder = identity_encoder ? Matrix::identity(m) : Matrix(m, d);
  model.head = Matrix(d, k);
  if (head_bias) model.head_bias.assign(k, 0.0);

  if (init.kind == InitKind::scaled_normal) {
    Rng rng(init.seed);
    // draw order: encoder row-major (unless fixed), then head, then bias
    if (!identity_encoder)
      for (std::size_t i = 0; i < model.encoder.size(); ++i)
        model.encoder.data()[i] = init.sigma * rng.next_gaussian();
    for (std::size_t i = 0; i < model.head.size(); ++i)
      model.head.data()[i] = init.sigma * rng.next_gaussian();
    for (double& b : model.head_bias) b = init.sigma * rng.next_gaussian();
  }
  return model;
}

Forward forward(const LinearModel& model, const Matrix& features) {
  if (features.cols() != model.feature_dim())
    throw std::invalid_argument("forward: feature length != m");
  Forward f;
  f.z = matmul(features, model.encoder);
  f.logits = matmul(f.z, model.head);
  if (model.has_bias())
    for (std::size_t i = 0; i < f.logits.rows(); ++i)
      for (std::size_t j = 0; j < f.logits.cols(); ++j)
        f.logits(i, j) += model.head_bias[j];
  return f;
}

std::vector<int> predict(const LinearModel& model, const Matrix& features) {
  Forward f = forward(model, features);
  std::vector<int> labels(f.logits.rows());
  for (std::size_t i = 0; i < f.logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < f.logits.cols(); ++j)
      if (f.logits(i, j) > f.logits(i, best)) best = j;
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

void write_matrix(std::ostream& os, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << '\t';
      write_double(os, m(i, j));
    }
    os << '\n';
  }
}

Matrix read_matrix(std::istream& is, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    std::string line;
    if (!std::getline(is, line))
      throw std::runtime_error("model snapshot: truncated matrix");
    std::istringstream ls(line);
    for (std::size_t j = 0; j < cols; ++j)
      if (!(ls >> m(i, j)))
        throw std::runtime_error("model snapshot: bad matrix row");
  }
  return m;
}

}  // namespace

void save_model(const LinearModel& model, std::ostream& os) {
  os << "paircfr-model\tm=" << model.feature_dim()
     << "\td=" << model.embedding_dim() << "\tK=" << model.num_classes()
     << "\tbias=" << (model.has_bias() ? 1 : 0)
     << "\tidentity=" << (model.identity_encoder ? 1 : 0)
     << "\tr1=" << model.layout.dim_r1 << "\tr2=" << model.layout.dim_r2
     << "\ts=" << model.layout.dim_s << '\n';
  write_matrix(os, model.encoder);
  write_matrix(os, model.head);
  if (model.has_bias()) {
    for (std::size_t j = 0; j < model.head_bias.size(); ++j) {
      if (j) os << '\t';
      write_double(os, model.head_bias[j]);
    }
    os << '\n';
  }
}

LinearModel load_model(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("paircfr-model", 0) != 0)
    throw std::runtime_error("model snapshot: bad header");
  auto field = [&header](const std::string& key) -> std::size_t {
    const std::string tag = key + "=";
    auto pos = header.find(tag);
    if (pos == std::string::npos)
      throw std::runtime_error("model snapshot: missing field " + key);
    return static_cast<std::size_t>(
        std::stoull(header.substr(pos + tag.size())));
  };
  const std::size_t m = field("m"), d = field("d"), k = field("K");
  const bool bias = field("bias") != 0;
  const bool identity = field("identity") != 0;

  LinearModel model;
  model.layout = BlockLayout{field("r1"), field("r2"), field("s")};
  model.identity_encoder = identity;
  model.encoder = read_matrix(is, m, d);
  model.head = read_matrix(is, d, k);
  if (bias) {
    std::string line;
    if (!std::getline(is, line))
      throw std::runtime_error("model snapshot: truncated bias row");
    std::istringstream ls(line);
    model.head_bias.resize(k);
    for (std::size_t j = 0; j < k; ++j)
      if (!(ls >> model.head_bias[j]))
        throw std::runtime_error("model snapshot: bad bias row");
  }
  return model;
}

void save_model_file(const LinearModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_model(model, os);
}

LinearModel load_model_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for read: " + path);
  return load_model(is);
}

}  // namespace paircfr
