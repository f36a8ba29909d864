#pragma once

#include <cstddef>
#include <set>

#include <json.hpp>

#include "geoformal/error.hpp"

namespace geoformal::gsformer {

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

struct AlignWeights {
  double contrast = 1.0;
  double match = 1.0;
  double caption = 1.0;
};

struct GSFormerConfig {
  std::size_t n_layers = 4;
  std::size_t n_queries = 8;
  std::size_t d = 64;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t d_in = 64;  // width of incoming patch features
  std::size_t vocab_size = 0;
  std::size_t max_text_len = 48;
  std::set<std::size_t> sgs_layers{2, 3};
  double lambda = 0.5;
  double tau = 1.0;
  double tau_end = 1.0;  // linear anneal target over a training run
  double init_std = 0.02;
  // Initial keep-minus-drop logit bias of each SGS head.
  double sgs_keep_bias = 1.0;
  AlignWeights align;

  /// Throws ConfigError.
  void validate() const;
  /// Number of mask states, counting the initial all-ones mask.
  std::size_t stages() const { return sgs_layers.size() + 1; }
};

void to_json(nlohmann::json& j, const GSFormerConfig& c);
void from_json(const nlohmann::json& j, GSFormerConfig& c);

}  // namespace geoformal::gsformer
