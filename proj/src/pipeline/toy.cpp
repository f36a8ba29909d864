#include "geoformal/pipeline/toy.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "geoformal/solver/operators.hpp"
#include "geoformal/tensor/ops.hpp"
#include "geoformal/tensor/optim.hpp"

namespace geoformal::pipeline {

using nlohmann::json;
using tensor::NoGradGuard;

namespace {

json stage_json(const StageConfig& s) {
  return {{"steps", s.steps}, {"lr", s.lr}, {"batch", s.batch}, {"clip_norm", s.clip_norm}};
}

StageConfig stage_from(const json& j, const std::string& name) {
  static const std::set<std::string> known{"steps", "lr", "batch", "clip_norm"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw DataError("stage '" + name + "': unknown key '" + key + "'");
  }
  StageConfig s;
  s.steps = j.at("steps").get<std::size_t>();
  s.lr = j.at("lr").get<double>();
  s.batch = j.at("batch").get<std::size_t>();
  s.clip_norm = j.at("clip_norm").get<double>();
  if (s.batch == 0 || !(s.lr > 0.0) || s.clip_norm < 0.0) throw DataError("stage '" + name + "': invalid values");
  return s;
}

std::vector<lang::TokenId> ids_of(const std::vector<std::string>& words, const lang::Vocab& vocab) {
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  return lang::tokenize(text, vocab);
}

ToyConfig resolved(ToyConfig c, const lang::Vocab& vocab) {
  c.resolve(vocab);
  return c;
}

Tensor batch_mean(const std::vector<Tensor>& parts) {
  Tensor total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = tensor::add(total, parts[i]);
  return tensor::scale(total, 1.0 / static_cast<double>(parts.size()));
}

StageConfig& stage_cfg(ToyConfig& c, Stage s) {
  switch (s) {
    case Stage::Mae: return c.mae_stage;
    case Stage::Lm: return c.lm_stage;
    case Stage::Align: return c.align_stage;
    case Stage::Sft: return c.sft_stage;
  }
  return c.sft_stage;
}

}  // namespace

ToyConfig::ToyConfig() {
  mae.enc_layers = 2;
  mae.dec_layers = 1;
  gsformer.init_std = 0.05;
  decoder.init_std = 0.05;
}

void ToyConfig::resolve(const lang::Vocab& vocab) {
  if (patch == 0 || image_size < 32 || image_size % patch != 0) {
    throw DataError("toy config: image_size must be >= 32 and a multiple of patch");
  }
  mae.patch_dim = patch * patch;
  mae.n_patches = (image_size / patch) * (image_size / patch);
  gsformer.d_in = mae.d;
  gsformer.vocab_size = vocab.size();
  decoder.vocab_size = vocab.size();
  mae.validate();
  gsformer.validate();
  decoder.validate();
  if (beam == 0 || max_decode_len == 0) throw DataError("toy config: beam and max_decode_len must be positive");
}

json to_json(const ToyConfig& c) {
  return {{"schema", 1},
          {"image_size", c.image_size},
          {"patch", c.patch},
          {"mae", json(c.mae)},
          {"gsformer", json(c.gsformer)},
          {"decoder", json(c.decoder)},
          {"stages",
           {{"mae", stage_json(c.mae_stage)},
            {"lm", stage_json(c.lm_stage)},
            {"align", stage_json(c.align_stage)},
            {"sft", stage_json(c.sft_stage)}}},
          {"freeze_encoder", c.freeze_encoder},
          {"hard_masks", c.hard_masks},
          {"beam", c.beam},
          {"max_decode_len", c.max_decode_len},
          {"decode_seed", c.decode_seed}};
}

ToyConfig toy_config_from_json(const json& input) {
  if (!input.is_object()) throw DataError("toy config must be a JSON object");
  if (input.contains("schema") && input.at("schema") != 1) {
    throw DataError("unsupported toy config schema " + input.at("schema").dump());
  }
  // Partial files override the defaults key by key.
  json j = to_json(ToyConfig{});
  const json defaults = j;
  j.merge_patch(input);
  std::function<void(const json&, const json&, const std::string&)> check = [&](const json& have, const json& ref,
                                                                                const std::string& where) {
    for (const auto& [key, value] : have.items()) {
      if (!ref.contains(key)) throw DataError("toy config: unknown key '" + where + key + "'");
      if (value.is_object() && ref.at(key).is_object()) check(value, ref.at(key), where + key + ".");
    }
  };
  check(j, defaults, "");
  try {
    ToyConfig c;
    c.image_size = j.at("image_size").get<std::size_t>();
    c.patch = j.at("patch").get<std::size_t>();
    c.mae = j.at("mae").get<pretrain::MAEConfig>();
    c.gsformer = j.at("gsformer").get<gsformer::GSFormerConfig>();
    c.decoder = j.at("decoder").get<pretrain::DecoderConfig>();
    const auto& st = j.at("stages");
    c.mae_stage = stage_from(st.at("mae"), "mae");
    c.lm_stage = stage_from(st.at("lm"), "lm");
    c.align_stage = stage_from(st.at("align"), "align");
    c.sft_stage = stage_from(st.at("sft"), "sft");
    c.freeze_encoder = j.at("freeze_encoder").get<bool>();
    c.hard_masks = j.at("hard_masks").get<bool>();
    c.beam = j.at("beam").get<std::size_t>();
    c.max_decode_len = j.at("max_decode_len").get<std::size_t>();
    c.decode_seed = j.at("decode_seed").get<std::uint64_t>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("toy config: ") + e.what());
  }
}

ToyConfig read_toy_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  try {
    return toy_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Example make_example(const solver::ProblemRecord& record, const synth::Diagram& diagram, const lang::Vocab& vocab) {
  Example e;
  e.record = record;
  e.patches = synth::patchify(diagram);
  e.caption = lang::tokenize(record.caption, vocab);
  e.question = ids_of(record.question_tokens, vocab);
  e.program = lang::tokenize(record.gt_program, vocab);
  if (e.program.empty()) throw DataError("problem " + record.id + " has an empty program");
  return e;
}

std::vector<Example> examples_from(const std::vector<synth::SyntheticProblem>& problems, const lang::Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(problems.size());
  for (const auto& p : problems) out.push_back(make_example(synth::to_record(p), p.diagram, vocab));
  return out;
}

std::vector<Example> load_examples(const std::filesystem::path& problems_jsonl, const lang::Vocab& vocab,
                                   std::size_t patch) {
  const auto base = problems_jsonl.parent_path();
  std::vector<Example> out;
  for (const auto& r : solver::read_problems(problems_jsonl)) {
    if (r.diagram.empty()) throw DataError("problem " + r.id + " names no diagram");
    out.push_back(make_example(r, synth::read_pgm(base / r.diagram, patch), vocab));
  }
  return out;
}

ToyModel::ToyModel(const ToyConfig& cfg, std::uint64_t seed)
    : vocab_(solver::standard_vocab()),
      cfg_(resolved(cfg, vocab_)),
      init_(Rng(seed).split("init")),
      mae_(cfg_.mae, ps_, init_),
      gsf_(cfg_.gsformer, ps_, init_),
      dec_(cfg_.decoder, ps_, init_),
      proj_(tensor::Linear::create(ps_, "proj", cfg_.gsformer.d, cfg_.decoder.d, init_, cfg_.decoder.init_std)) {}

Tensor ToyModel::visual_tokens(const Tensor& patches, const Rng& noise, bool hard) const {
  return pretrain::project_visual(gsf_.encode_geometry(mae_.encode(patches), noise, hard), proj_);
}

void ToyModel::save(const std::filesystem::path& path, const json& extra) const {
  json meta = extra;
  meta["config"] = to_json(cfg_);
  tensor::save_checkpoint(ps_, path, meta);
}

std::unique_ptr<ToyModel> ToyModel::load(const std::filesystem::path& path) {
  const auto meta = tensor::read_checkpoint_meta(path);
  if (!meta.contains("meta") || !meta.at("meta").contains("config")) {
    throw tensor::CheckpointError(path.string() + ": checkpoint carries no model config");
  }
  auto model = std::make_unique<ToyModel>(toy_config_from_json(meta.at("meta").at("config")), 0);
  const auto loaded = tensor::load_checkpoint(model->ps_, path);
  if (loaded != model->ps_.names().size()) {
    throw tensor::CheckpointError(path.string() + ": checkpoint covers " + std::to_string(loaded) + " of " +
                                  std::to_string(model->ps_.names().size()) + " parameters");
  }
  return model;
}

Stage parse_stage(std::string_view name) {
  if (name == "mae") return Stage::Mae;
  if (name == "lm") return Stage::Lm;
  if (name == "align") return Stage::Align;
  if (name == "sft") return Stage::Sft;
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Mae: return "mae";
    case Stage::Lm: return "lm";
    case Stage::Align: return "align";
    case Stage::Sft: return "sft";
  }
  return "?";
}

json StageSummary::to_json() const {
  return {{"stage", stage_name(stage)}, {"steps", steps}, {"first_loss", first_loss}, {"last_loss", last_loss}};
}

StageSummary train_stage(ToyModel& model, Stage stage, const std::vector<Example>& data, std::uint64_t seed,
                         const StepLogger& log, std::size_t steps) {
  if (data.empty()) throw DataError("no training data");
  ToyConfig cfg = model.config();
  const StageConfig sc = stage_cfg(cfg, stage);
  if (steps == 0) steps = sc.steps;
  auto& ps = model.params();

  std::vector<Tensor> trainable;
  switch (stage) {
    case Stage::Mae: trainable = ps.with_prefix("mae."); break;
    case Stage::Lm: trainable = ps.with_prefix("dec."); break;
    case Stage::Align: trainable = ps.with_prefix("gsf."); break;
    case Stage::Sft:
      if (cfg.freeze_encoder) {
        trainable = ps.with_prefix("dec.");
        for (auto& t : ps.with_prefix("proj.")) trainable.push_back(t);
      } else {
        trainable = ps.all();
      }
      break;
  }
  tensor::AdamConfig ac;
  ac.lr = sc.lr;
  ac.clip_norm = sc.clip_norm;
  tensor::Adam opt(trainable, ac);

  // Language-model corpus: captions and question/program pairs.
  std::vector<std::vector<lang::TokenId>> corpus;
  if (stage == Stage::Lm) {
    for (const auto& e : data) {
      std::vector<lang::TokenId> c{lang::Vocab::kBos};
      c.insert(c.end(), e.caption.begin(), e.caption.end());
      c.push_back(lang::Vocab::kEos);
      corpus.push_back(std::move(c));
      std::vector<lang::TokenId> q{lang::Vocab::kBos};
      q.insert(q.end(), e.question.begin(), e.question.end());
      q.push_back(lang::Vocab::kSep);
      q.insert(q.end(), e.program.begin(), e.program.end());
      q.push_back(lang::Vocab::kEos);
      corpus.push_back(std::move(q));
    }
  }

  const Rng root = Rng(seed).split(stage_name(stage));
  StageSummary summary{stage, steps, 0.0, 0.0};
  for (std::size_t step = 0; step < steps; ++step) {
    Rng rng = root.split(step);
    const std::size_t pool = stage == Stage::Lm ? corpus.size() : data.size();
    const std::size_t b = std::min(sc.batch, pool);
    // Batch without replacement.
    std::vector<std::size_t> order(pool);
    for (std::size_t i = 0; i < pool; ++i) order[i] = i;
    for (std::size_t i = 0; i < b; ++i) std::swap(order[i], order[i + rng.index(pool - i)]);
    order.resize(b);

    Tensor loss;
    json record{{"stage", stage_name(stage)}, {"step", step}};
    switch (stage) {
      case Stage::Mae: {
        std::vector<Tensor> parts;
        for (auto i : order) parts.push_back(model.mae().loss(pretrain::mae_mask(data[i].patches, cfg.mae.mask_ratio, rng)));
        loss = batch_mean(parts);
        break;
      }
      case Stage::Lm: {
        std::vector<Tensor> parts;
        for (auto i : order) parts.push_back(pretrain::lm_loss(model.decoder(), corpus[i]));
        loss = batch_mean(parts);
        break;
      }
      case Stage::Align: {
        std::vector<gsformer::PretrainPair> batch;
        for (auto i : order) {
          NoGradGuard ng;
          batch.push_back({model.mae().encode(data[i].patches).detach(), data[i].caption});
        }
        const auto& gc = cfg.gsformer;
        const double frac = steps > 1 ? static_cast<double>(step) / static_cast<double>(steps - 1) : 0.0;
        const double tau = gc.tau + (gc.tau_end - gc.tau) * frac;
        const auto br = model.gsformer().pretrain_loss(batch, rng.split("sgs"), false, tau);
        loss = br.l_total;
        record["breakdown"] = br.to_json();
        break;
      }
      case Stage::Sft: {
        std::vector<Tensor> parts;
        for (std::size_t k = 0; k < order.size(); ++k) {
          const auto& e = data[order[k]];
          auto target = e.program;
          target.push_back(lang::Vocab::kEos);
          const Tensor t_g = model.visual_tokens(e.patches, rng.split(k), cfg.hard_masks);
          parts.push_back(pretrain::instruction_loss(model.decoder(), t_g, e.question, target));
        }
        // Mean over problems of the per-problem summed negative log-likelihood.
        loss = batch_mean(parts);
        break;
      }
    }
    const double value = loss.item();
    if (step == 0) summary.first_loss = value;
    summary.last_loss = value;
    loss.backward();
    opt.step();
    ps.zero_grad();
    record["loss"] = value;
    record["grad_norm"] = opt.last_grad_norm();
    if (log) log(record);
  }
  return summary;
}

double mae_eval_loss(const ToyModel& model, const std::vector<Example>& data, std::uint64_t seed) {
  if (data.empty()) throw DataError("no evaluation data");
  NoGradGuard ng;
  const Rng root(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng r = root.split(i);
    total += model.mae().loss(pretrain::mae_mask(data[i].patches, model.config().mae.mask_ratio, r)).item();
  }
  return total / static_cast<double>(data.size());
}

std::vector<solver::CandidateRecord> decode(const ToyModel& model, const std::vector<Example>& data, std::size_t beam,
                                            std::size_t max_len, std::size_t jobs) {
  std::vector<solver::CandidateRecord> out(data.size());
  const Rng root(model.config().decode_seed);
  auto one = [&](std::size_t i) {
    NoGradGuard ng;
    const auto& e = data[i];
    const Tensor t_g = model.visual_tokens(e.patches, root.split(e.record.id), model.config().hard_masks);
    out[i].id = e.record.id;
    for (const auto& h : pretrain::beam_decode(model.decoder(), t_g, e.question, beam, max_len)) {
      out[i].candidates.push_back(lang::detokenize(h.ids, model.vocab()));
      out[i].scores.push_back(h.score);
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, data.size()));
  std::vector<std::exception_ptr> errors(jobs);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < data.size(); i += jobs) one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace geoformal::pipeline
