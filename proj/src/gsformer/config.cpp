#include "geoformal/gsformer/config.hpp"

#include <string>

namespace geoformal::gsformer {

void GSFormerConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("gsformer config: " + m); };
  if (n_layers == 0) fail("n_layers must be at least 1");
  if (n_queries == 0) fail("n_queries must be at least 1");
  if (d == 0 || n_heads == 0 || d % n_heads != 0) fail("d must be a positive multiple of n_heads");
  if (ffn_hidden == 0 || d_in == 0) fail("ffn_hidden and d_in must be positive");
  if (max_text_len < 2) fail("max_text_len must be at least 2");
  for (auto l : sgs_layers) {
    if (l == 0 || l >= n_layers) {
      fail("sgs layer " + std::to_string(l) + " outside 1.." + std::to_string(n_layers - 1));
    }
  }
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(tau > 0.0) || !(tau_end > 0.0)) fail("tau must be > 0");
  if (!(init_std > 0.0)) fail("init_std must be > 0");
}

void to_json(nlohmann::json& j, const GSFormerConfig& c) {
  j = {{"n_layers", c.n_layers},
       {"n_queries", c.n_queries},
       {"d", c.d},
       {"n_heads", c.n_heads},
       {"ffn_hidden", c.ffn_hidden},
       {"d_in", c.d_in},
       {"vocab_size", c.vocab_size},
       {"max_text_len", c.max_text_len},
       {"sgs_layers", c.sgs_layers},
       {"lambda", c.lambda},
       {"tau", c.tau},
       {"tau_end", c.tau_end},
       {"init_std", c.init_std},
       {"sgs_keep_bias", c.sgs_keep_bias},
       {"align_weights", {c.align.contrast, c.align.match, c.align.caption}}};
}

void from_json(const nlohmann::json& j, GSFormerConfig& c) {
  if (!j.is_object()) throw ConfigError("gsformer config must be a JSON object");
  static const std::set<std::string> known{"n_layers", "n_queries",   "d",          "n_heads",   "ffn_hidden",
                                           "d_in",     "vocab_size",  "max_text_len", "sgs_layers", "lambda",
                                           "tau",      "tau_end",     "init_std",   "sgs_keep_bias", "align_weights"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("gsformer config: unknown key '" + key + "'");
  }
  try {
    GSFormerConfig d;
    c.n_layers = j.value("n_layers", d.n_layers);
    c.n_queries = j.value("n_queries", d.n_queries);
    c.d = j.value("d", d.d);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.ffn_hidden = j.value("ffn_hidden", d.ffn_hidden);
    c.d_in = j.value("d_in", d.d_in);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.max_text_len = j.value("max_text_len", d.max_text_len);
    c.sgs_layers = j.value("sgs_layers", d.sgs_layers);
    c.lambda = j.value("lambda", d.lambda);
    c.tau = j.value("tau", d.tau);
    c.tau_end = j.value("tau_end", c.tau);
    c.init_std = j.value("init_std", d.init_std);
    c.sgs_keep_bias = j.value("sgs_keep_bias", d.sgs_keep_bias);
    if (j.contains("align_weights")) {
      const auto w = j.at("align_weights").get<std::vector<double>>();
      if (w.size() != 3) throw ConfigError("gsformer config: align_weights needs three entries");
      c.align = {w[0], w[1], w[2]};
    } else {
      c.align = d.align;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gsformer config: ") + e.what());
  }
  c.validate();
}

}  // namespace geoformal::gsformer
