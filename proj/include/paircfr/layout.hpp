#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paircfr {

// Partition of the feature vector into the three contiguous blocks of the
// generative model: edited-causal (r1), unedited-causal (r2), spurious (s).
struct BlockLayout {
  std::size_t dim_r1 = 0;
  std::size_t dim_r2 = 0;
  std::size_t dim_s = 0;

  std::size_t total() const { return dim_r1 + dim_r2 + dim_s; }
  std::size_t offset_r1() const { return 0; }
  std::size_t offset_r2() const { return dim_r1; }
  std::size_t offset_s() const { return dim_r1 + dim_r2; }

  bool valid() const { return dim_r1 >= 1 && total() >= 1; }

  void require_valid() const {
    if (!valid())
      throw std::invalid_argument(
          "BlockLayout: dim_r1 must be >= 1 (something must be editable)");
  }

  bool operator==(const BlockLayout&) const = default;
};

}  // namespace paircfr
