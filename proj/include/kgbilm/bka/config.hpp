#pragma once

#include <cstddef>
#include <string>

#include "kgbilm/kgstore/reachability.hpp"
#include "kgbilm/util/errors.hpp"

namespace kgbilm {

/// Architecture and attention-mask settings of the encoder stack.
struct BkaConfig {
  std::size_t hop_threshold = 2;  // graph hops under which entity tokens may attend
  std::size_t local_window = 2;   // |i - j| <= local_window always attends
  bool text_bidirectional = true;
  std::size_t layers = 2;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t ffn_dim = 256;
  double dropout_p = 0.1;
  std::size_t max_len = 128;

  void validate() const {
    if (heads == 0 || heads * head_dim != model_dim) {
      throw ConfigError("bka: heads (" + std::to_string(heads) + ") x head_dim (" + std::to_string(head_dim) +
                        ") must equal model_dim (" + std::to_string(model_dim) + ")");
    }
    if (ffn_dim == 0) throw ConfigError("bka: ffn_dim must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("bka: dropout_p must lie in [0, 1)");
    if (max_len < 4) throw ConfigError("bka: max_len must be >= 4");
  }
};

}  // namespace kgbilm
