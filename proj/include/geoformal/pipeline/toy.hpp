#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoformal/gsformer/gsformer.hpp"
#include "geoformal/lang/vocab.hpp"
#include "geoformal/pretrain/decoder.hpp"
#include "geoformal/pretrain/instruct.hpp"
#include "geoformal/pretrain/mae.hpp"
#include "geoformal/solver/problem.hpp"
#include "geoformal/synth/problem.hpp"
#include "geoformal/tensor/params.hpp"

namespace geoformal::pipeline {

using tensor::Rng;
using tensor::Tensor;

struct StageConfig {
  std::size_t steps = 0;
  double lr = 1e-3;
  std::size_t batch = 8;
  double clip_norm = 1.0;
};

/// Every knob of the desk-scale pipeline. Sizes that follow from others
/// (patch_dim, n_patches, d_in, vocab_size) are filled by resolve().
struct ToyConfig {
  std::size_t image_size = 64;
  std::size_t patch = 8;
  pretrain::MAEConfig mae;
  gsformer::GSFormerConfig gsformer;
  pretrain::DecoderConfig decoder;
  StageConfig mae_stage{500, 2e-3, 4, 1.0};
  StageConfig lm_stage{200, 2e-3, 8, 1.0};
  StageConfig align_stage{300, 1e-3, 8, 1.0};
  StageConfig sft_stage{1200, 1e-3, 8, 1.0};
  // Keep the diagram encoder (MAE and GS-Former) fixed during instruction tuning.
  bool freeze_encoder = false;
  bool hard_masks = true;
  std::size_t beam = 10;
  std::size_t max_decode_len = 24;
  std::uint64_t decode_seed = 0;

  ToyConfig();
  /// Fills derived sizes and validates every part. Throws DataError.
  void resolve(const lang::Vocab& vocab);
};

/// {"schema": 1, ...}; unknown keys are rejected.
nlohmann::json to_json(const ToyConfig& c);
ToyConfig toy_config_from_json(const nlohmann::json& j);
ToyConfig read_toy_config(const std::filesystem::path& path);

/// One training or evaluation item in model-ready form.
struct Example {
  solver::ProblemRecord record;
  Tensor patches;                          // (N, p^2)
  std::vector<lang::TokenId> caption;      // no BOS/EOS
  std::vector<lang::TokenId> question;     // T_p
  std::vector<lang::TokenId> program;      // S without EOS
};

Example make_example(const solver::ProblemRecord& record, const synth::Diagram& diagram, const lang::Vocab& vocab);
std::vector<Example> examples_from(const std::vector<synth::SyntheticProblem>& problems, const lang::Vocab& vocab);
/// Reads problems.jsonl and the diagrams it names (relative to its folder).
std::vector<Example> load_examples(const std::filesystem::path& problems_jsonl, const lang::Vocab& vocab,
                                   std::size_t patch);

/// The MAE encoder, GS-Former, projection head and decoder sharing one
/// parameter store.
class ToyModel {
 public:
  ToyModel(const ToyConfig& cfg, std::uint64_t seed);
  ToyModel(const ToyModel&) = delete;
  ToyModel& operator=(const ToyModel&) = delete;

  const ToyConfig& config() const { return cfg_; }
  const lang::Vocab& vocab() const { return vocab_; }
  tensor::ParamStore& params() { return ps_; }
  const tensor::ParamStore& params() const { return ps_; }
  const pretrain::MAE& mae() const { return mae_; }
  const gsformer::GSFormer& gsformer() const { return gsf_; }
  const pretrain::Decoder& decoder() const { return dec_; }

  /// T_g for one diagram; `noise` drives the SGS samples.
  Tensor visual_tokens(const Tensor& patches, const Rng& noise, bool hard) const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  /// Loads a checkpoint whose sidecar carries the config. Throws CheckpointError.
  static std::unique_ptr<ToyModel> load(const std::filesystem::path& path);

 private:
  lang::Vocab vocab_;
  ToyConfig cfg_;
  tensor::ParamStore ps_;
  Rng init_;
  pretrain::MAE mae_;
  gsformer::GSFormer gsf_;
  pretrain::Decoder dec_;
  tensor::Linear proj_;
};

enum class Stage { Mae, Lm, Align, Sft };
Stage parse_stage(std::string_view name);  // throws std::invalid_argument
std::string_view stage_name(Stage s);

struct StageSummary {
  Stage stage = Stage::Mae;
  std::size_t steps = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
  nlohmann::json to_json() const;
};

/// Called once per optimizer step with a JSON log record.
using StepLogger = std::function<void(const nlohmann::json&)>;

/// Runs `steps` (default: the stage's configured count) optimizer steps.
/// Batches and noise come from Rng(seed).split(stage name).
StageSummary train_stage(ToyModel& model, Stage stage, const std::vector<Example>& data, std::uint64_t seed,
                         const StepLogger& log = {}, std::size_t steps = 0);

/// Mean masked reconstruction loss over fixed masks (one per diagram,
/// drawn from Rng(seed)).
double mae_eval_loss(const ToyModel& model, const std::vector<Example>& data, std::uint64_t seed);

/// Ranked beam candidates per problem; the SGS noise for problem i is a
/// function of (decode_seed, problem id). Parallel over `jobs` threads.
std::vector<solver::CandidateRecord> decode(const ToyModel& model, const std::vector<Example>& data,
                                            std::size_t beam, std::size_t max_len, std::size_t jobs = 1);

}  // namespace geoformal::pipeline
