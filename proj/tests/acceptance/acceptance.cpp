// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geoformal/eval/baseline.hpp"
#include "geoformal/eval/metrics.hpp"
#include "geoformal/gsformer/gsformer.hpp"
#include "geoformal/lang/caption.hpp"
#include "geoformal/lang/program.hpp"
#include "geoformal/pipeline/toy.hpp"
#include "geoformal/pretrain/instruct.hpp"
#include "geoformal/pretrain/mae.hpp"
#include "geoformal/solver/interpreter.hpp"
#include "geoformal/solver/operators.hpp"
#include "geoformal/synth/problem.hpp"
#include "geoformal/tensor/ops.hpp"
#include "support/generators.hpp"
#include "support/numeric_oracle.hpp"
#include "support/program_oracle.hpp"

using namespace geoformal;
using namespace geoformal::tensor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    detail += (detail.empty() ? "" : "; ") + why;
  }
  void note(const std::string& s) {
    if (pass) detail += (detail.empty() ? "" : "; ") + s;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

void check_runtime(Verdict& v, double secs, double limit) {
  if (secs >= limit) v.fail("runtime " + num(secs, 3) + " s exceeds " + num(limit) + " s");
}

// 1. Grammar round trip and robustness.
Verdict grammar() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::size_t bad_caption = 0, bad_program = 0, crashes = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto cap = testsupport::random_caption(rng);
    const auto text = lang::format_caption(cap);
    const auto back = lang::parse_caption(text);
    if (back != cap || lang::format_caption(back) != text) ++bad_caption;

    const auto ptext = testsupport::random_program_text(rng, 4, 3, -50.0, 50.0);
    const auto prog = solver::parse_program(ptext);
    const auto formatted = lang::format_program(prog);
    if (solver::parse_program(formatted) != prog ||
        lang::format_program(solver::parse_program(formatted)) != formatted) {
      ++bad_program;
    }
  }
  for (int i = 0; i < 10000; ++i) {
    const auto s = i % 2 ? testsupport::random_bytes(rng, 64) : testsupport::random_near_miss(rng);
    for (int which = 0; which < 2; ++which) {
      try {
        if (which == 0) {
          lang::parse_caption(s);
        } else {
          solver::parse_program(s);
        }
      } catch (const DataError&) {
      } catch (...) {
        ++crashes;
      }
    }
  }
  const double secs = seconds_since(t0);
  if (bad_caption) v.fail(std::to_string(bad_caption) + " caption round-trip failures");
  if (bad_program) v.fail(std::to_string(bad_program) + " program round-trip failures");
  if (crashes) v.fail(std::to_string(crashes) + " non-DataError exceptions on arbitrary bytes");
  check_runtime(v, secs, 10.0);
  v.note("10000 captions, 10000 programs, 10000 byte strings in " + num(secs, 3) + " s");
  return v;
}

// 2. Interpreter against the recursive oracle.
Verdict solver_oracle() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::size_t compared = 0, disagreements = 0;
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    const auto text = testsupport::random_program_text(rng, 4, 3);
    const std::vector<double> numbers{2.5, 7.0, 13.25};
    const auto expected = testsupport::ProgramOracle(text, numbers).evaluate();
    std::optional<double> got;
    try {
      auto b = solver::Bindings::with_numbers(numbers);
      got = solver::execute_text(text, b).final;
    } catch (const solver::DomainError&) {
    }
    if (got.has_value() != expected.has_value()) {
      ++disagreements;
      continue;
    }
    if (got) {
      ++compared;
      const double rel = std::abs(*got - *expected) / std::max(1.0, std::abs(*expected));
      worst = std::max(worst, rel);
      if (rel > 1e-9) ++disagreements;
    }
  }
  auto b = solver::Bindings::with_numbers({3.0, 4.0});
  const double hyp = solver::execute_text("gougu_add N_0 N_1", b).final;
  const double secs = seconds_since(t0);
  if (disagreements) v.fail(std::to_string(disagreements) + " programs disagree with the oracle");
  if (std::abs(hyp - 5.0) > 1e-12) v.fail("gougu_add 3 4 = " + num(hyp, 17));
  check_runtime(v, secs, 5.0);
  v.note(std::to_string(compared) + " executed programs, worst rel err " + num(worst, 3) + ", " + num(secs, 3) + " s");
  return v;
}

gsformer::GSFormerConfig small_gsformer() {
  gsformer::GSFormerConfig c;
  c.n_layers = 2;
  c.n_queries = 4;
  c.d = 8;
  c.n_heads = 2;
  c.ffn_hidden = 16;
  c.d_in = 12;
  c.vocab_size = 30;
  c.max_text_len = 12;
  c.sgs_layers = {1};
  c.init_std = 0.2;
  return c;
}

std::vector<gsformer::PretrainPair> random_pairs(std::size_t b, std::size_t n, const gsformer::GSFormerConfig& c,
                                                 Rng rng) {
  std::vector<gsformer::PretrainPair> out;
  for (std::size_t i = 0; i < b; ++i) {
    gsformer::PretrainPair p;
    p.patches = Tensor::randn({n, c.d_in}, rng, 1.0);
    const std::size_t len = 3 + rng.index(5);
    for (std::size_t t = 0; t < len; ++t) {
      p.caption.push_back(static_cast<lang::TokenId>(4 + rng.index(c.vocab_size - 4)));
    }
    out.push_back(std::move(p));
  }
  return out;
}

// 3. Sparsification loss values and the lambda composition.
Verdict sparsification() {
  Verdict v;
  using gsformer::SGSState;
  const double ones = gsformer::sparsification_loss(SGSState{{Tensor::full({4}, 1), Tensor::full({4}, 1)}, {}}).item();
  const double zeros = gsformer::sparsification_loss(SGSState{{Tensor::zeros({4}), Tensor::zeros({4})}, {}}).item();
  const double mixed =
      gsformer::sparsification_loss(SGSState{{Tensor::vector({1, 1, 0, 0}), Tensor::vector({1, 0, 0, 0})}, {}}).item();
  if (ones != 1.0) v.fail("all-ones gave " + num(ones, 17));
  if (zeros != 0.0) v.fail("all-zeros gave " + num(zeros, 17));
  if (std::abs(mixed - 0.375) > 1e-15) v.fail("K=2,N=4 fixture gave " + num(mixed, 17));

  auto c = small_gsformer();
  const auto batch = random_pairs(3, 6, c, Rng(31));
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    c.lambda = lam(rng);
    ParamStore ps;
    Rng init(32);
    gsformer::GSFormer model(c, ps, init);
    NoGradGuard ng;
    const auto l = model.pretrain_loss(batch, Rng(33 + i));
    const double expect = l.l_align.item() + c.lambda * l.l_spr.item();
    const double err = std::abs(l.l_total.item() - expect) / std::max(1.0, std::abs(expect));
    worst = std::max(worst, err);
  }
  if (worst > 4 * std::numeric_limits<double>::epsilon()) v.fail("l_total composition off by " + num(worst, 3));
  v.note("fixtures 1, 0, 3/8 exact; 100 lambdas, worst rel err " + num(worst, 3));
  return v;
}

// 4. Mask laws of the selection stage.
Verdict mask_laws() {
  Verdict v;
  Rng rng(404);
  std::size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(16);
    std::vector<double> prev(n);
    for (auto& x : prev) x = rng.uniform() < 0.6 ? 1.0 : 0.0;
    Linear head{Tensor::randn({4, 2}, rng, 2.0), Tensor::randn({2}, rng, 1.0)};
    const auto [m, p] =
        gsformer::sgs_update_mask(Tensor({n}, prev), Tensor::randn({n, 4}, rng, 1.0), head, 0.5 + rng.uniform(), true, rng);
    for (std::size_t j = 0; j < n; ++j) {
      if (!(m[j] == 0.0 || m[j] == 1.0) || m[j] > prev[j]) ++violations;
    }
  }
  if (violations) v.fail(std::to_string(violations) + " mask entries non-binary or growing");

  // Stage 0 of a full forward pass is all ones and later stages shrink.
  auto c = small_gsformer();
  c.n_layers = 3;
  c.sgs_layers = {1, 2};
  ParamStore ps;
  Rng init(41);
  gsformer::GSFormer model(c, ps, init);
  for (int t = 0; t < 20; ++t) {
    gsformer::SGSState state;
    Rng data = Rng(42).split(static_cast<std::uint64_t>(t));
    NoGradGuard ng;
    model.encode_geometry(Tensor::randn({10, c.d_in}, data, 1.0), Rng(43).split(static_cast<std::uint64_t>(t)), true,
                          &state);
    for (double x : state.masks[0].data()) {
      if (x != 1.0) v.fail("stage-0 mask is not all ones");
    }
    for (std::size_t k = 1; k < state.stages(); ++k) {
      for (std::size_t j = 0; j < state.patches(); ++j) {
        if (state.masks[k][j] > state.masks[k - 1][j]) v.fail("mask grew between stages");
      }
    }
  }

  Rng r2(405);
  Linear saturated{Tensor::zeros({4, 2}), Tensor::vector({40, -40})};
  const auto [ms, ps_] = gsformer::sgs_update_mask(Tensor::full({500}, 1.0), Tensor::randn({500, 4}, r2, 1.0),
                                                   saturated, 1.0, true, r2);
  double kept = 0;
  for (double x : ms.data()) kept += x;
  if (kept != 500.0) v.fail("saturated keep logits kept " + num(kept / 500.0) + " of patches");

  Linear uniform{Tensor::zeros({4, 2}), Tensor::zeros({2})};
  const auto [mu, pu] = gsformer::sgs_update_mask(Tensor::full({10000}, 1.0), Tensor::randn({10000, 4}, r2, 1.0),
                                                  uniform, 1.0, true, r2);
  double rate = 0;
  for (double x : mu.data()) rate += x;
  rate /= 10000.0;
  if (std::abs(rate - 0.5) > 0.02) v.fail("uniform keep-rate " + num(rate));
  v.note("1000 random states clean; uniform keep-rate " + num(rate));
  return v;
}

struct OpSpec {
  std::string name;
  std::vector<std::pair<Shape, bool>> inputs;  // shape, strictly positive
  std::function<Tensor(const std::vector<Tensor>&)> build;
};

std::vector<OpSpec> audited_ops() {
  const std::vector<std::int32_t> ids{4, 0, 4, 2};
  const std::vector<std::int32_t> targets{0, 5, 2, 2};
  const std::vector<std::uint8_t> ignore{0, 0, 1, 0};
  const std::vector<std::uint8_t> causal{1, 0, 0, 1, 1, 0, 1, 1, 1};
  Rng nr(55);
  const Tensor noise = gumbel_noise({5, 2}, nr);
  return {
      {"add", {{{3, 4}, false}, {{4}, false}}, [](auto& in) { return add(in[0], in[1]); }},
      {"add_col", {{{3, 4}, false}, {{3, 1}, false}}, [](auto& in) { return add(in[0], in[1]); }},
      {"sub", {{{3, 4}, false}, {{}, false}}, [](auto& in) { return sub(in[0], in[1]); }},
      {"mul", {{{3, 4}, false}, {{3, 4}, false}}, [](auto& in) { return mul(in[0], in[1]); }},
      {"div", {{{2, 3}, false}, {{2, 3}, true}}, [](auto& in) { return div(in[0], in[1]); }},
      {"scale", {{{5}, false}}, [](auto& in) { return scale(in[0], -2.5); }},
      {"add_scalar", {{{5}, false}}, [](auto& in) { return add_scalar(in[0], 1.5); }},
      {"neg", {{{5}, false}}, [](auto& in) { return neg(in[0]); }},
      {"exp", {{{6}, false}}, [](auto& in) { return exp(in[0]); }},
      {"log", {{{6}, true}}, [](auto& in) { return log(in[0]); }},
      {"abs", {{{6}, false}}, [](auto& in) { return abs(in[0]); }},
      {"square", {{{6}, false}}, [](auto& in) { return square(in[0]); }},
      {"relu", {{{6}, false}}, [](auto& in) { return relu(in[0]); }},
      {"gelu", {{{6}, false}}, [](auto& in) { return gelu(in[0]); }},
      {"tanh", {{{6}, false}}, [](auto& in) { return tanh(in[0]); }},
      {"sigmoid", {{{6}, false}}, [](auto& in) { return sigmoid(in[0]); }},
      {"matmul", {{{3, 4}, false}, {{4, 2}, false}}, [](auto& in) { return matmul(in[0], in[1]); }},
      {"transpose", {{{3, 4}, false}}, [](auto& in) { return transpose(in[0]); }},
      {"reshape", {{{3, 4}, false}}, [](auto& in) { return reshape(in[0], {2, 6}); }},
      {"concat_rows", {{{2, 3}, false}, {{1, 3}, false}}, [](auto& in) { return concat({in[0], in[1]}, 0); }},
      {"concat_cols", {{{2, 3}, false}, {{2, 2}, false}}, [](auto& in) { return concat({in[0], in[1]}, 1); }},
      {"slice", {{{4, 5}, false}}, [](auto& in) { return slice(slice(in[0], 0, 1, 3), 1, 2, 5); }},
      {"sum", {{{3, 4}, false}}, [](auto& in) { return sum(in[0]); }},
      {"mean", {{{3, 4}, false}}, [](auto& in) { return mean(in[0]); }},
      {"sum_axis", {{{3, 4}, false}}, [](auto& in) { return concat({sum(in[0], 0), sum(in[0], 1)}, 0); }},
      {"mean_pool", {{{3, 4}, false}}, [](auto& in) { return mean_pool(in[0], 1); }},
      {"softmax_rows", {{{3, 5}, false}}, [](auto& in) { return softmax(in[0], 1); }},
      {"softmax_cols", {{{3, 5}, false}}, [](auto& in) { return softmax(in[0], 0); }},
      {"log_softmax", {{{3, 5}, false}}, [](auto& in) { return log_softmax(in[0], 1); }},
      {"masked_softmax", {{{3, 3}, false}, {{3}, true}},
       [causal](auto& in) { return masked_softmax(in[0], in[1], causal); }},
      {"attention", {{{2, 4}, false}, {{3, 4}, false}, {{3, 2}, false}, {{3}, true}},
       [](auto& in) { return attention(in[0], in[1], in[2], in[3]); }},
      {"layer_norm", {{{3, 5}, false}, {{5}, false}, {{5}, false}},
       [](auto& in) { return layer_norm(in[0], in[1], in[2]); }},
      {"l2_normalize_rows", {{{3, 5}, false}}, [](auto& in) { return l2_normalize_rows(in[0]); }},
      {"embedding_lookup", {{{5, 3}, false}}, [ids](auto& in) { return embedding_lookup(in[0], ids); }},
      {"linear", {{{3, 4}, false}, {{4, 2}, false}, {{2}, false}},
       [](auto& in) { return linear(in[0], in[1], in[2]); }},
      {"cross_entropy_mean", {{{4, 6}, false}},
       [targets, ignore](auto& in) { return cross_entropy(in[0], targets, ignore); }},
      {"cross_entropy_sum", {{{4, 6}, false}},
       [targets](auto& in) { return cross_entropy(in[0], targets, {}, Reduction::Sum); }},
      {"mse_loss", {{{3, 4}, false}, {{3, 4}, false}}, [](auto& in) { return mse_loss(in[0], in[1]); }},
      {"gumbel_softmax_soft", {{{5, 2}, false}},
       [noise](auto& in) { return gumbel_softmax_with_noise(in[0], noise, 0.7, false); }},
  };
}

// Worst relative error of backprop against the test-side oracle for one op.
double audit_op(const OpSpec& op, int points) {
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    std::mt19937_64 rng(std::hash<std::string>{}(op.name) ^ static_cast<std::uint64_t>(p * 7919 + 1));
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> pos(0.5, 2.0);
    std::vector<std::vector<double>> raw;
    for (const auto& [shape, positive] : op.inputs) {
      std::vector<double> x(numel_of(shape));
      for (auto& e : x) e = positive ? pos(rng) : normal(rng);
      raw.push_back(std::move(x));
    }
    std::vector<double> weights;
    auto evaluate = [&](const std::vector<std::vector<double>>& values, bool grad, std::vector<Tensor>* leaves) {
      std::vector<Tensor> in;
      for (std::size_t i = 0; i < op.inputs.size(); ++i) in.emplace_back(op.inputs[i].first, values[i], grad);
      const Tensor out = op.build(in);
      if (weights.empty()) {
        for (std::size_t i = 0; i < out.numel(); ++i) weights.push_back(normal(rng));
      }
      if (leaves) *leaves = in;
      return sum(mul(out, Tensor(out.shape(), weights)));
    };
    std::vector<Tensor> leaves;
    evaluate(raw, true, &leaves).backward();
    for (std::size_t i = 0; i < op.inputs.size(); ++i) {
      auto f = [&](const std::vector<double>& xi) {
        NoGradGuard ng;
        auto values = raw;
        values[i] = xi;
        return evaluate(values, false, nullptr).item();
      };
      const auto g = leaves[i].grad();
      worst = std::max(worst, testsupport::rel_err(std::vector<double>(g.begin(), g.end()),
                                                   testsupport::central_differences(f, raw[i])));
    }
  }
  return worst;
}

// 5. Gradient audit.
Verdict gradient_audit() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_op = 0.0;
  std::string worst_name;
  const auto ops = audited_ops();
  for (const auto& op : ops) {
    const double e = audit_op(op, 50);
    if (e > worst_op) {
      worst_op = e;
      worst_name = op.name;
    }
    if (e > 1e-3) v.fail(op.name + " rel err " + num(e, 3));
  }

  // Full pretraining loss in soft mode with the Gumbel noise frozen by a
  // fixed generator: random parameter points, random probe directions.
  const auto c = small_gsformer();
  ParamStore ps;
  Rng init(51);
  gsformer::GSFormer model(c, ps, init);
  const auto batch = random_pairs(2, 5, c, Rng(52));
  auto loss = [&] { return model.pretrain_loss(batch, Rng(53), false).l_total; };
  std::mt19937_64 rng(505);
  std::normal_distribution<double> normal;
  double worst_model = 0.0;
  for (int p = 0; p < 50; ++p) {
    auto params = ps.all();
    std::vector<std::vector<double>> base;
    for (auto& t : params) {
      base.emplace_back(t.data().begin(), t.data().end());
      for (auto& x : t.mutable_data()) x += 0.05 * normal(rng);
    }
    std::vector<std::vector<double>> dir;
    for (auto& t : params) {
      std::vector<double> d(t.numel());
      for (auto& x : d) x = normal(rng);
      dir.push_back(std::move(d));
    }
    ps.zero_grad();
    loss().backward();
    double analytic = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto g = params[k].grad();
      for (std::size_t i = 0; i < g.size(); ++i) analytic += g[i] * dir[k][i];
    }
    ps.zero_grad();
    auto shifted = [&](double h) {
      std::vector<std::vector<double>> saved;
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto m = params[k].mutable_data();
        saved.emplace_back(m.begin(), m.end());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += h * dir[k][i];
      }
      NoGradGuard ng;
      const double value = loss().item();
      for (std::size_t k = 0; k < params.size(); ++k) std::ranges::copy(saved[k], params[k].mutable_data().begin());
      return value;
    };
    const double h = 1e-5;
    const double numeric = (shifted(h) - shifted(-h)) / (2 * h);
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst_model = std::max(worst_model, err);
    for (std::size_t k = 0; k < params.size(); ++k) std::ranges::copy(base[k], params[k].mutable_data().begin());
  }
  if (worst_model > 1e-3) v.fail("pretrain_loss rel err " + num(worst_model, 3));
  const double secs = seconds_since(t0);
  check_runtime(v, secs, 120.0);
  v.note(std::to_string(ops.size()) + " ops x 50 points, worst " + num(worst_op, 3) + " (" + worst_name +
         "); pretrain_loss worst " + num(worst_model, 3) + "; " + num(secs, 3) + " s");
  return v;
}

// 6. Instruction loss against an independent cross entropy.
Verdict instruction_loss_check() {
  Verdict v;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    pretrain::DecoderConfig c;
    c.vocab_size = 24;
    c.d = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.ffn_hidden = 32;
    c.max_len = 40;
    c.init_std = 0.2;
    ParamStore ps;
    Rng init = Rng(60).split(static_cast<std::uint64_t>(t));
    pretrain::Decoder dec(c, ps, init);
    Rng data = Rng(61).split(static_cast<std::uint64_t>(t));
    const Tensor t_g = Tensor::randn({1 + data.index(5), c.d}, data, 1.0);
    std::vector<lang::TokenId> tp, s;
    for (std::size_t i = 0, n = 1 + data.index(6); i < n; ++i) tp.push_back(static_cast<lang::TokenId>(4 + data.index(20)));
    for (std::size_t i = 0, n = 1 + data.index(6); i < n; ++i) s.push_back(static_cast<lang::TokenId>(4 + data.index(20)));
    s.push_back(lang::Vocab::kEos);

    const Tensor logits = pretrain::instruction_logits(dec, t_g, tp, s);
    const std::size_t p = pretrain::prefix_length(t_g, tp);
    double expected = 0.0;
    for (std::size_t l = 0; l < s.size(); ++l) {
      const std::size_t r = p - 1 + l;
      double m = -INFINITY;
      for (std::size_t j = 0; j < logits.cols(); ++j) m = std::max(m, logits.at(r, j));
      double z = 0.0;
      for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(logits.at(r, j) - m);
      expected -= logits.at(r, static_cast<std::size_t>(s[l])) - m - std::log(z);
    }
    const double got = pretrain::instruction_loss(dec, t_g, tp, s).item();
    worst = std::max(worst, std::abs(got - expected));

    // Prefix rows predict nothing: scrambling them leaves the loss unchanged.
    std::vector<double> scrambled(logits.data().begin(), logits.data().end());
    for (std::size_t i = 0; i < (p - 1) * logits.cols(); ++i) scrambled[i] += 10.0 * data.normal();
    const double base = pretrain::instruction_loss_from_logits(logits, p, s).item();
    const double moved = pretrain::instruction_loss_from_logits(Tensor(logits.shape(), scrambled), p, s).item();
    if (base != moved) v.fail("prefix perturbation changed the loss in case " + std::to_string(t));
  }
  if (worst > 1e-12) v.fail("max |loss - oracle| = " + num(worst, 3));
  v.note("20 random decoders, max |loss - oracle| " + num(worst, 3) + "; prefix perturbation exact");
  return v;
}

std::vector<solver::ProblemRecord> records_of(const std::vector<synth::SyntheticProblem>& problems) {
  std::vector<solver::ProblemRecord> out;
  for (const auto& p : problems) out.push_back(synth::to_record(p));
  return out;
}

// 7. Toy end-to-end overfit.
Verdict toy_end_to_end() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto problems = synth::generate_dataset(64, 7);
  const auto data = pipeline::examples_from(problems, solver::standard_vocab());
  const pipeline::ToyConfig cfg;
  pipeline::ToyModel model(cfg, 1);
  std::size_t tuned_steps = 0;
  std::string losses;
  for (auto stage : {pipeline::Stage::Mae, pipeline::Stage::Lm, pipeline::Stage::Align, pipeline::Stage::Sft}) {
    const auto s = pipeline::train_stage(model, stage, data, 1);
    if (stage == pipeline::Stage::Align || stage == pipeline::Stage::Sft) tuned_steps += s.steps;
    losses += std::string(losses.empty() ? "" : ", ") + std::string(pipeline::stage_name(stage)) + " " +
              num(s.first_loss, 3) + "->" + num(s.last_loss, 3);
  }
  const auto cands = pipeline::decode(model, data, 10, cfg.max_decode_len);
  const auto outcomes = eval::adjudicate(records_of(problems), cands, 10, {});
  const auto report = eval::build_report(outcomes, {}, 10);
  const double secs = seconds_since(t0);
  if (tuned_steps > 3000) v.fail("align + sft took " + std::to_string(tuned_steps) + " steps");
  if (report.top1 < 0.95) v.fail("top-1 " + num(report.top1));
  if (!(report.top1 <= report.top3 && report.top3 <= report.top10)) v.fail("top-k not monotone");
  check_runtime(v, secs, 1800.0);
  v.note("top1 " + num(report.top1) + " top3 " + num(report.top3) + " top10 " + num(report.top10) + "; align+sft " +
         std::to_string(tuned_steps) + " steps; " + losses + "; " + num(secs, 4) + " s");
  return v;
}

// 8. Metric calibration.
Verdict calibration() {
  Verdict v;
  const auto recs = records_of(synth::generate_dataset(2000, 7));
  Rng rng(8);
  const auto outcomes = eval::adjudicate(recs, eval::random_candidates(recs, 10, rng), 10, {});
  const double choice = eval::metric_choice(outcomes);
  if (std::abs(choice - 0.25) > 0.03) v.fail("random-program Choice " + num(choice));

  // Constructed fixtures with known executable and unexecutable mixes.
  for (std::size_t n : {4u, 8u, 64u, 1024u}) {
    std::vector<solver::ProblemRecord> fx;
    std::vector<solver::CandidateRecord> cand;
    std::mt19937_64 g(n);
    for (std::size_t i = 0; i < n; ++i) {
      solver::ProblemRecord r;
      r.id = "fx" + std::to_string(i);
      r.numbers = {3.0, 4.0};
      r.answer = 5.0;
      r.choices = std::vector<double>{1.0, 5.0, 7.0, 12.0};
      r.gt_program = "gougu_add N_0 N_1";
      fx.push_back(r);
      static const char* kinds[] = {"gougu_add N_0 N_1", "gougu_minus N_1 N_0", "no_such_op N_0", "gougu_add N_0 N_9"};
      cand.push_back({r.id, {kinds[g() % 4]}, {}});
    }
    const auto oc = eval::adjudicate(fx, cand, 1, {});
    const double gap = eval::adjusted_accuracy(oc, {}) - eval::metric_top_k(oc, 1, {});
    const double expect = 0.25 * eval::unexecutable_fraction(oc);
    if (gap != expect) v.fail("n=" + std::to_string(n) + " gap " + num(gap, 17) + " vs " + num(expect, 17));
  }
  v.note("Choice " + num(choice) + " over 2000 problems; adjusted gap exact on 4 fixtures");
  return v;
}

// 9. MAE contract.
Verdict mae_contract() {
  Verdict v;
  Rng rng(909);
  std::size_t moved = 0;
  for (int t = 0; t < 200; ++t) {
    const Tensor x = Tensor::randn({16, 8}, rng, 1.0);
    const auto b = pretrain::mae_mask(x, 0.25 + 0.5 * rng.uniform(), rng);
    std::vector<double> rec(128);
    for (auto& e : rec) e = rng.normal();
    const double base = pretrain::mae_loss(Tensor({16, 8}, rec), x, b).item();
    for (auto i : b.visible) {
      for (std::size_t j = 0; j < 8; ++j) rec[i * 8 + j] += 1e3 * rng.normal();
    }
    if (pretrain::mae_loss(Tensor({16, 8}, rec), x, b).item() != base) ++moved;
  }
  if (moved) v.fail(std::to_string(moved) + " cases where visible patches changed the loss");

  const auto t0 = std::chrono::steady_clock::now();
  const auto data = pipeline::examples_from(synth::generate_dataset(32, 7), solver::standard_vocab());
  pipeline::ToyModel model(pipeline::ToyConfig{}, 1);
  const double before = pipeline::mae_eval_loss(model, data, 99);
  pipeline::train_stage(model, pipeline::Stage::Mae, data, 1, {}, 500);
  const double after = pipeline::mae_eval_loss(model, data, 99);
  const double secs = seconds_since(t0);
  const double ratio = before / after;
  if (ratio < 10.0) v.fail("loss " + num(before) + " -> " + num(after) + " is only " + num(ratio, 3) + "x");
  check_runtime(v, secs, 300.0);
  v.note("visible-patch invariance on 200 masks; loss " + num(before) + " -> " + num(after) + " (" + num(ratio, 3) +
         "x) in " + num(secs, 3) + " s");
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI; returns its exit status and stdout.
std::pair<int, std::string> cli(const std::string& args, const fs::path& work) {
  const fs::path out = work / "stdout.txt";
  const std::string cmd = "cd '" + work.string() + "' && '" GEOFORMAL_CLI "' " + args + " > '" + out.string() +
                          "' 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  const int status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return {status, slurp(out)};
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

// 10. Determinism of the CLI.
Verdict determinism() {
  Verdict v;
  const fs::path work = fs::temp_directory_path() / "geoformal_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const auto s1 = cli("selftest --seed 3", work);
  const auto s2 = cli("selftest --seed 3", work);
  if (s1.first != 0) v.fail("selftest exited " + std::to_string(s1.first));
  if (s1.second != s2.second || s1.second.empty()) v.fail("selftest output differs between runs");

  const auto g1 = cli("gen-data --n 24 --seed 7 --out a", work);
  const auto g2 = cli("gen-data --n 24 --seed 7 --out b --jobs 3", work);
  if (g1.first != 0 || g2.first != 0) v.fail("gen-data failed");
  const auto ta = tree(work / "a"), tb = tree(work / "b");
  if (ta != tb || ta.size() < 24) v.fail("gen-data files differ between runs");

  const auto t = cli("train-toy --stage sft --steps 4 --seed 2 --problems a/problems.jsonl --out m/model.bin", work);
  if (t.first != 0) v.fail("train-toy exited " + std::to_string(t.first));
  const auto d1 = cli("decode --ckpt m/model.bin --problems a/problems.jsonl --beam 4 --out c1.jsonl", work);
  const auto d2 = cli("decode --ckpt m/model.bin --problems a/problems.jsonl --beam 4 --out c2.jsonl --jobs 2", work);
  if (d1.first != 0 || d2.first != 0) v.fail("decode failed");
  if (slurp(work / "c1.jsonl") != slurp(work / "c2.jsonl") || slurp(work / "c1.jsonl").empty()) {
    v.fail("decode candidates differ between runs");
  }
  v.note("selftest stdout, " + std::to_string(ta.size()) + " gen-data files and decode candidates byte-identical");
  fs::remove_all(work);
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"grammar round-trip", grammar},
      {"solver oracle equivalence", solver_oracle},
      {"sparsification exactness", sparsification},
      {"mask laws", mask_laws},
      {"gradient audit", gradient_audit},
      {"instruction loss conformance", instruction_loss_check},
      {"toy end-to-end overfit", toy_end_to_end},
      {"metric calibration", calibration},
      {"MAE contract", mae_contract},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.fail(std::string("threw: ") + e.what());
    }
    if (!v.pass) ++failed;
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
