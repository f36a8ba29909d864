#include "geoformal/verify/suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "geoformal/eval/baseline.hpp"
#include "geoformal/eval/metrics.hpp"
#include "geoformal/gsformer/gsformer.hpp"
#include "geoformal/lang/caption.hpp"
#include "geoformal/pretrain/instruct.hpp"
#include "geoformal/pretrain/mae.hpp"
#include "geoformal/solver/beam.hpp"
#include "geoformal/solver/interpreter.hpp"
#include "geoformal/solver/operators.hpp"
#include "geoformal/synth/problem.hpp"
#include "geoformal/tensor/gradcheck.hpp"
#include "geoformal/tensor/ops.hpp"

namespace geoformal::verify {

using nlohmann::json;
using namespace tensor;

std::size_t SuiteReport::failed() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; }));
}

json SuiteReport::to_json() const {
  json list = json::array();
  for (const auto& c : checks) {
    list.push_back({{"module", c.module}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return {{"suite", suite},
          {"seed", seed},
          {"total", checks.size()},
          {"failed", failed()},
          {"passed", ok()},
          {"checks", std::move(list)}};
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

struct Input {
  Shape shape;
  bool positive = false;
};

using Build = std::function<Tensor(const std::vector<Tensor>&)>;

struct OpCase {
  std::string module;
  std::string name;
  std::vector<Input> inputs;
  Build build;
};

std::vector<OpCase> op_cases() {
  const std::vector<std::int32_t> ids{4, 0, 4, 2};
  const std::vector<std::int32_t> targets{0, 5, 2, 2};
  const std::vector<std::uint8_t> ignore{0, 0, 1, 0};
  const std::vector<std::uint8_t> causal{1, 0, 0, 1, 1, 0, 1, 1, 1};
  Rng noise_rng(17);
  const Tensor noise = gumbel_noise({5, 2}, noise_rng);
  return {
      {"tensor", "add", {{{3, 4}}, {{4}}}, [](auto& in) { return add(in[0], in[1]); }},
      {"tensor", "sub", {{{3, 4}}, {{3, 1}}}, [](auto& in) { return sub(in[0], in[1]); }},
      {"tensor", "mul", {{{3, 4}}, {{3, 4}}}, [](auto& in) { return mul(in[0], in[1]); }},
      {"tensor", "div", {{{2, 3}}, {{2, 3}, true}}, [](auto& in) { return div(in[0], in[1]); }},
      {"tensor", "scale", {{{5}}}, [](auto& in) { return add_scalar(scale(in[0], -2.5), 1.0); }},
      {"tensor", "exp", {{{6}}}, [](auto& in) { return exp(in[0]); }},
      {"tensor", "log", {{{6}, true}}, [](auto& in) { return log(in[0]); }},
      {"tensor", "relu", {{{6}}}, [](auto& in) { return relu(in[0]); }},
      {"tensor", "gelu", {{{6}}}, [](auto& in) { return gelu(in[0]); }},
      {"tensor", "tanh", {{{6}}}, [](auto& in) { return tanh(in[0]); }},
      {"tensor", "sigmoid", {{{6}}}, [](auto& in) { return sigmoid(in[0]); }},
      {"tensor", "abs", {{{6}}}, [](auto& in) { return abs(in[0]); }},
      {"tensor", "square", {{{6}}}, [](auto& in) { return square(in[0]); }},
      {"tensor", "matmul", {{{3, 4}}, {{4, 2}}}, [](auto& in) { return matmul(in[0], in[1]); }},
      {"tensor", "transpose", {{{3, 4}}}, [](auto& in) { return transpose(in[0]); }},
      {"tensor", "reshape", {{{3, 4}}}, [](auto& in) { return reshape(in[0], {2, 6}); }},
      {"tensor", "concat", {{{2, 3}}, {{2, 2}}}, [](auto& in) { return concat({in[0], in[1]}, 1); }},
      {"tensor", "slice", {{{4, 5}}}, [](auto& in) { return slice_cols(slice_rows(in[0], 1, 3), 2, 5); }},
      {"tensor", "sum_axis", {{{3, 4}}}, [](auto& in) { return concat({sum(in[0], 0), sum(in[0], 1)}, 0); }},
      {"tensor", "mean_pool", {{{3, 4}}}, [](auto& in) { return mean_pool(in[0], 0); }},
      {"tensor", "embedding", {{{5, 3}}}, [ids](auto& in) { return embedding_lookup(in[0], ids); }},
      {"tensor", "softmax", {{{3, 5}}}, [](auto& in) { return softmax(in[0], 1); }},
      {"tensor", "log_softmax", {{{3, 5}}}, [](auto& in) { return log_softmax(in[0], 1); }},
      {"tensor", "layer_norm", {{{3, 5}}, {{5}}, {{5}}}, [](auto& in) { return layer_norm(in[0], in[1], in[2]); }},
      {"tensor", "l2_normalize", {{{3, 5}}}, [](auto& in) { return l2_normalize_rows(in[0]); }},
      {"tensor", "masked_softmax", {{{3, 3}}, {{3}, true}},
       [causal](auto& in) { return masked_softmax(in[0], in[1], causal); }},
      {"tensor", "attention", {{{2, 4}}, {{3, 4}}, {{3, 2}}, {{3}, true}},
       [](auto& in) { return attention(in[0], in[1], in[2], in[3]); }},
      {"tensor", "linear", {{{3, 4}}, {{4, 2}}, {{2}}}, [](auto& in) { return linear(in[0], in[1], in[2]); }},
      {"tensor", "cross_entropy", {{{4, 6}}},
       [targets, ignore](auto& in) { return cross_entropy(in[0], targets, ignore); }},
      {"tensor", "mse", {{{3, 4}}, {{3, 4}}}, [](auto& in) { return mse_loss(in[0], in[1]); }},
      {"tensor", "gumbel_softmax", {{{5, 2}}},
       [noise](auto& in) { return gumbel_softmax_with_noise(in[0], noise, 0.7, false); }},
  };
}

CheckResult gradcheck_op(const OpCase& op, std::uint64_t seed, double tol, int points) {
  CheckResult r{op.module, op.name, true, ""};
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    Rng rng = Rng(seed).split(op.name).split(static_cast<std::uint64_t>(p));
    std::vector<Tensor> leaves;
    for (const auto& in : op.inputs) {
      std::vector<double> v(numel_of(in.shape));
      for (auto& x : v) x = in.positive ? rng.uniform(0.5, 2.0) : rng.normal();
      leaves.emplace_back(in.shape, std::move(v), true);
    }
    Tensor weights;
    auto f = [&] {
      Tensor out = op.build(leaves);
      if (!weights.defined()) {
        Rng wr = rng.split("weights");
        std::vector<double> w(out.numel());
        for (auto& x : w) x = wr.normal();
        weights = Tensor(out.shape(), std::move(w));
      }
      return sum(mul(out, weights));
    };
    worst = std::max(worst, max_gradient_error(f, leaves));
  }
  r.passed = worst < tol;
  r.detail = "max_rel_error " + fmt(worst);
  return r;
}

class Runner {
 public:
  explicit Runner(SuiteReport& report) : report_(report) {}

  // `fn` returns an empty string on success and a reason otherwise.
  void check(const std::string& module, const std::string& name, const std::function<std::string()>& fn) {
    CheckResult r{module, name, false, ""};
    try {
      r.detail = fn();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("threw: ") + e.what();
    }
    report_.checks.push_back(std::move(r));
  }

 private:
  SuiteReport& report_;
};

}  // namespace

SuiteReport run_gradcheck(std::uint64_t seed, double tol, int points) {
  SuiteReport report{"gradcheck", seed, {}};
  for (const auto& op : op_cases()) report.checks.push_back(gradcheck_op(op, seed, tol, points));
  return report;
}

SuiteReport run_selftest(std::uint64_t seed) {
  SuiteReport report{"selftest", seed, {}};
  Runner run(report);
  const Rng root(seed);
  const auto& vocab = solver::standard_vocab();
  const auto problems = synth::generate_dataset(64, seed);
  std::vector<solver::ProblemRecord> recs;
  for (const auto& p : problems) recs.push_back(synth::to_record(p));

  run.check("lang", "caption_round_trip", [&]() -> std::string {
    Rng rng = root.split("captions");
    for (int i = 0; i < 200; ++i) {
      const auto cap = synth::caption_of(synth::sample_scene(rng));
      const auto text = lang::format_caption(cap);
      if (lang::parse_caption(text) != cap) return "parse(format(c)) != c for '" + text + "'";
    }
    return "";
  });
  run.check("lang", "program_round_trip", [&]() -> std::string {
    Rng rng = root.split("programs");
    for (int i = 0; i < 200; ++i) {
      const auto text = eval::random_program(rng, 3);
      const auto prog = solver::parse_program(text);
      if (solver::parse_program(lang::format_program(prog)) != prog) return "round trip failed for '" + text + "'";
    }
    return "";
  });
  run.check("lang", "tokenize_round_trip", [&]() -> std::string {
    for (const auto& p : recs) {
      for (const auto& text : {p.gt_program, p.caption}) {
        if (lang::detokenize(lang::tokenize(text, vocab), vocab) != lang::canonical_text(text)) {
          return "detokenize(tokenize(t)) != t for '" + text + "'";
        }
      }
    }
    return "";
  });

  run.check("solver", "pythagoras", [&]() -> std::string {
    auto b = solver::Bindings::with_numbers({3.0, 4.0});
    const double v = solver::execute_text("gougu_add N_0 N_1", b).final;
    return std::abs(v - 5.0) < 1e-12 ? "" : "gougu_add 3 4 gave " + fmt(v);
  });
  run.check("solver", "beam_first_correct", [&]() -> std::string {
    const std::vector<std::string> beam{"gougu_add N_0 N_0", "gougu_add N_0 N_7", "nonsense", "gougu_add N_0 N_1"};
    const auto out = solver::evaluate_beam(beam, solver::Bindings::with_numbers({3.0, 4.0}), 5.0, {});
    if (out.first_executed != 0u) return "first executed should be rank 0";
    if (out.first_correct != 3u) return "first correct should be rank 3";
    return out.candidates[1].executed() || out.candidates[2].executed() ? "failures must not execute" : "";
  });
  run.check("solver", "choice_ties_go_low", [&]() -> std::string {
    const std::vector<double> choices{1.0, 3.0, 5.0};
    return solver::resolve_choice(2.0, choices) == 0 ? "" : "tie did not resolve to the lower index";
  });

  run.check("synth", "scenes_satisfy_geometry", [&]() -> std::string {
    Rng rng = root.split("scenes");
    for (int i = 0; i < 200; ++i) {
      synth::SceneConfig cfg;
      cfg.structure = static_cast<synth::Structure>(i % 6);
      if (auto bad = synth::check_scene(synth::sample_scene(rng, cfg))) return *bad;
    }
    return "";
  });
  run.check("synth", "answers_match_programs", [&]() -> std::string {
    for (const auto& p : recs) {
      auto b = solver::Bindings::with_numbers(p.numbers);
      const double v = solver::execute_text(p.gt_program, b).final;
      if (std::abs(v - p.answer) > 1e-9 * std::max(1.0, std::abs(p.answer))) return p.id + ": answer mismatch";
      if (!p.choices || std::count(p.choices->begin(), p.choices->end(), p.answer) != 1) return p.id + ": answer not unique among choices";
    }
    return "";
  });
  run.check("synth", "patchify_inverse", [&]() -> std::string {
    for (const auto& p : problems) {
      if (synth::unpatchify(synth::patchify(p.diagram), p.diagram.height, p.diagram.width, p.diagram.patch).pixels !=
          p.diagram.pixels) {
        return p.id + ": unpatchify(patchify(d)) != d";
      }
    }
    return "";
  });

  const auto grads = run_gradcheck(seed, 1e-3, 2);
  run.check("tensor", "gradcheck", [&]() -> std::string {
    for (const auto& c : grads.checks) {
      if (!c.passed) return c.name + " " + c.detail;
    }
    return "";
  });
  run.check("tensor", "softmax_rows_sum_to_one", [&]() -> std::string {
    Rng rng = root.split("softmax");
    const Tensor s = softmax(Tensor::randn({6, 9}, rng, 3.0), 1);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) total += s.at(r, c);
      if (std::abs(total - 1.0) > 1e-12) return "row " + std::to_string(r) + " sums to " + fmt(total);
    }
    return "";
  });

  run.check("gsformer", "sgs_masks_monotone", [&]() -> std::string {
    gsformer::GSFormerConfig cfg;
    cfg.vocab_size = vocab.size();
    ParamStore ps;
    Rng init = root.split("gsf");
    gsformer::GSFormer model(cfg, ps, init);
    Rng data = root.split("gsf-data");
    const Tensor feats = Tensor::randn({64, cfg.d_in}, data, 1.0);
    for (bool hard : {false, true}) {
      gsformer::SGSState state;
      NoGradGuard ng;
      model.encode_geometry(feats, root.split(hard ? "hard" : "soft"), hard, &state);
      if (state.stages() != cfg.stages()) return "wrong number of mask stages";
      for (std::size_t k = 1; k < state.stages(); ++k) {
        const auto prev = state.masks[k - 1].data();
        const auto cur = state.masks[k].data();
        for (std::size_t i = 0; i < cur.size(); ++i) {
          if (cur[i] < 0.0 || cur[i] > prev[i] + 1e-12) return "mask grew at stage " + std::to_string(k);
          if (hard && cur[i] != 0.0 && cur[i] != 1.0) return "hard mask is not binary";
        }
      }
    }
    return "";
  });

  run.check("pretrain", "mae_mask_partition", [&]() -> std::string {
    Rng rng = root.split("mae-mask");
    const Tensor patches = Tensor::zeros({64, 64});
    for (int i = 0; i < 50; ++i) {
      const auto b = pretrain::mae_mask(patches, 0.75, rng);
      std::vector<std::size_t> all = b.masked;
      all.insert(all.end(), b.visible.begin(), b.visible.end());
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> expect(64);
      std::iota(expect.begin(), expect.end(), 0);
      if (b.masked.size() != 48 || all != expect) return "masked and visible do not partition the patches";
    }
    return "";
  });
  run.check("pretrain", "mae_loss_ignores_visible", [&]() -> std::string {
    Rng rng = root.split("mae-visible");
    const Tensor original = Tensor::randn({16, 4}, rng, 1.0);
    const auto b = pretrain::mae_mask(original, 0.5, rng);
    std::vector<double> recon(original.data().begin(), original.data().end());
    for (auto& v : recon) v += rng.normal();
    const double base = pretrain::mae_loss(Tensor({16, 4}, recon), original, b).item();
    for (auto row : b.visible) {
      for (std::size_t c = 0; c < 4; ++c) recon[row * 4 + c] += 100.0 * rng.normal();
    }
    const double moved = pretrain::mae_loss(Tensor({16, 4}, recon), original, b).item();
    return base == moved ? "" : "visible rows changed the loss";
  });
  run.check("pretrain", "instruction_prefix_is_free", [&]() -> std::string {
    Rng rng = root.split("prefix");
    const std::size_t prefix = 5;
    const std::vector<lang::TokenId> target{7, 9, lang::Vocab::kEos};
    const std::size_t rows = prefix + target.size() - 1;
    std::vector<double> logits(rows * vocab.size());
    for (auto& v : logits) v = rng.normal();
    const Tensor a({rows, vocab.size()}, logits);
    const double base = pretrain::instruction_loss_from_logits(a, prefix, target).item();
    for (std::size_t i = 0; i < (prefix - 1) * vocab.size(); ++i) logits[i] += 50.0 * rng.normal();
    const double moved = pretrain::instruction_loss_from_logits(Tensor({rows, vocab.size()}, logits), prefix, target).item();
    return base == moved ? "" : "prefix logits changed the loss";
  });

  run.check("eval", "adjusted_accuracy_identity", [&]() -> std::string {
    Rng rng = root.split("baseline");
    const auto outcomes = eval::adjudicate(recs, eval::random_candidates(recs, 3, rng), 3, {});
    const double gap = eval::adjusted_accuracy(outcomes, {}) - eval::metric_top_k(outcomes, 1, {});
    const double expect = 0.25 * eval::unexecutable_fraction(outcomes);
    return gap == expect ? "" : "gap " + fmt(gap) + " expected " + fmt(expect);
  });
  run.check("eval", "report_json_round_trip", [&]() -> std::string {
    Rng rng = root.split("report");
    const auto outcomes = eval::adjudicate(recs, eval::random_candidates(recs, 5, rng), 5, {});
    const auto rep = eval::build_report(outcomes, {}, 5);
    return eval::report_from_json(eval::to_json(rep)) == rep ? "" : "report changed across JSON";
  });
  run.check("eval", "top_k_monotone", [&]() -> std::string {
    Rng rng = root.split("topk");
    const auto outcomes = eval::adjudicate(recs, eval::random_candidates(recs, 10, rng), 10, {});
    double last = 0.0;
    for (std::size_t k = 1; k <= 10; ++k) {
      const double v = eval::metric_top_k(outcomes, k, {});
      if (v < last) return "top-" + std::to_string(k) + " fell";
      last = v;
    }
    return "";
  });
  return report;
}

}  // namespace geoformal::verify
