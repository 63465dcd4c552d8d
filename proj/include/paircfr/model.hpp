#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "paircfr/layout.hpp"
#include "paircfr/matrix.hpp"

namespace paircfr {

enum class InitKind { zeros, scaled_normal };

struct InitDescriptor {
  InitKind kind = InitKind::zeros;
  double sigma = 0.01;
  std::uint64_t seed = 0;
};

// Linear encoder/head pair: z = W^T x maps features to the embedding space,
// logits = U^T z (+ optional head bias). The contrastive loss acts on z, the
// cross-entropy loss on the logits.
struct LinearModel {
  Matrix encoder;  // m x d
  Matrix head;     // d x K
  Vec head_bias;   // empty, or K entries
  BlockLayout layout;
  bool identity_encoder = false;  // W fixed to I (requires d == m)
  InitDescriptor init;

  std::size_t feature_dim() const { return encoder.rows(); }
  std::size_t embedding_dim() const { return encoder.cols(); }
  std::size_t num_classes() const { return head.cols(); }
  bool has_bias() const { return !head_bias.empty(); }
};

LinearModel init_model(std::size_t m, std::size_t d, std::size_t k,
                       const InitDescriptor& init, const BlockLayout& layout,
                       bool identity_encoder = false, bool head_bias = false);

struct Forward {
  Matrix z;       // n x d embeddings
  Matrix logits;  // n x K
};

Forward forward(const LinearModel& model, const Matrix& features);

// Argmax class per row; ties break toward the lowest class id (a zero model
// therefore predicts class 0 everywhere).
std::vector<int> predict(const LinearModel& model, const Matrix& features);

// Flat text snapshot: a header line naming the shapes, then one row of
// numbers per matrix row (shortest round-trip decimals).
void save_model(const LinearModel& model, std::ostream& os);
LinearModel load_model(std::istream& is);
void save_model_file(const LinearModel& model, const std::string& path);
LinearModel load_model_file(const std::string& path);

}  // namespace paircfr
