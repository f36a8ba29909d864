// geoformal: data generation, toy training, decoding, solving, evaluation
// and verification suites. stdout carries JSON only; logs go to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoformal/eval/metrics.hpp"
#include "geoformal/pipeline/toy.hpp"
#include "geoformal/solver/interpreter.hpp"
#include "geoformal/solver/operators.hpp"
#include "geoformal/synth/problem.hpp"
#include "geoformal/verify/suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geoformal;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kVerify = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("GEOFORMAL_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("GEOFORMAL_SEED is not an unsigned integer: '" + std::string(env) + "'");
  }
  return 0;
}

// Snapshot of the resolved run configuration, written next to the outputs.
json run_snapshot(const std::string& command, std::uint64_t seed, json args) {
  return {{"schema", 1}, {"command", command}, {"seed", seed}, {"args", std::move(args)}};
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  return out.parent_path() / (out.filename().string() + suffix);
}

json outcome_json(const eval::ProblemOutcome& o, const solver::Tolerance& tol) {
  auto opt = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
  json values = json::array();
  for (const auto& c : o.beam.candidates) values.push_back(c.value ? json(*c.value) : json(nullptr));
  return {{"id", o.id},
          {"first_executed", opt(o.first_executed())},
          {"first_correct", opt(o.first_correct(tol))},
          {"chosen_option", opt(o.chosen_option())},
          {"values", std::move(values)}};
}

struct Options {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  // gen-data
  std::size_t n = 1000;
  std::string choices = "spread";
  std::size_t image_size = 64;
  // shared paths
  std::string out, problems, candidates, config, ckpt, init, log, program;
  // train-toy
  std::string stage;
  std::size_t steps = 0;
  // decode / eval
  std::size_t beam = 10;
  std::size_t max_len = 0;
  double tol = 1e-2;
  double tol_abs = 1e-2;
  double tol_rel = 1e-3;
  std::vector<double> numbers;
  // verification
  double grad_tol = 1e-3;
  int points = 5;
};

int cmd_gen_data(const Options& o) {
  const auto seed = resolve_seed(o.seed);
  synth::ProblemConfig cfg;
  cfg.image_size = o.image_size;
  if (o.choices == "spread") {
    cfg.choice_scheme = synth::ChoiceScheme::Spread;
  } else if (o.choices == "bracket") {
    cfg.choice_scheme = synth::ChoiceScheme::Bracket;
  } else if (o.choices == "none") {
    cfg.with_choices = false;
  } else {
    throw UsageError("--choices must be spread, bracket or none");
  }
  std::cerr << "generating " << o.n << " problems (seed " << seed << ")\n";
  const auto problems = synth::generate_dataset(o.n, seed, cfg, o.jobs);
  const fs::path dir(o.out);
  synth::write_dataset(problems, dir);
  write_json(dir / "run_config.json",
             run_snapshot("gen-data", seed,
                          {{"n", o.n}, {"choices", o.choices}, {"image_size", o.image_size}, {"patch", cfg.patch}}));
  emit({{"command", "gen-data"},
        {"seed", seed},
        {"n", problems.size()},
        {"problems", (dir / "problems.jsonl").string()},
        {"captions", (dir / "captions.txt").string()}});
  return 0;
}

int cmd_train(const Options& o) {
  const auto seed = resolve_seed(o.seed);
  std::vector<pipeline::Stage> stages;
  if (o.stage == "all") {
    stages = {pipeline::Stage::Mae, pipeline::Stage::Lm, pipeline::Stage::Align, pipeline::Stage::Sft};
  } else {
    try {
      stages = {pipeline::parse_stage(o.stage)};
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

  std::unique_ptr<pipeline::ToyModel> model;
  json history = json::array();
  if (!o.init.empty()) {
    model = pipeline::ToyModel::load(o.init);
    const auto meta = tensor::read_checkpoint_meta(o.init);
    if (meta.contains("meta") && meta["meta"].contains("history")) history = meta["meta"]["history"];
    std::cerr << "resuming from " << o.init << '\n';
  } else {
    const auto cfg = o.config.empty() ? pipeline::ToyConfig{} : pipeline::read_toy_config(o.config);
    model = std::make_unique<pipeline::ToyModel>(cfg, seed);
  }
  const auto data = pipeline::load_examples(o.problems, model->vocab(), model->config().patch);

  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const fs::path log_path = o.log.empty() ? sibling(out, ".log.jsonl") : fs::path(o.log);
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write " + log_path.string());

  json summaries = json::array();
  for (const auto stage : stages) {
    // Every stage draws from its own stream, so resuming reproduces a one-shot run.
    const auto summary = pipeline::train_stage(*model, stage, data, seed, [&](const json& r) {
      log << r.dump() << '\n';
      const auto step = r["step"].get<std::size_t>();
      if (step % 100 == 0) std::cerr << r["stage"].get<std::string>() << " step " << step << " loss " << r["loss"] << '\n';
    }, o.steps);
    summaries.push_back(summary.to_json());
    history.push_back({{"stage", pipeline::stage_name(stage)}, {"seed", seed}, {"steps", summary.steps}});
  }
  model->save(out, {{"history", history}});
  write_json(sibling(out, ".config.json"),
             run_snapshot("train-toy", seed,
                          {{"stage", o.stage},
                           {"problems", o.problems},
                           {"init", o.init},
                           {"steps", o.steps},
                           {"model", pipeline::to_json(model->config())}}));
  emit({{"command", "train-toy"},
        {"seed", seed},
        {"checkpoint", out.string()},
        {"log", log_path.string()},
        {"stages", summaries}});
  return 0;
}

int cmd_decode(const Options& o) {
  const auto model = pipeline::ToyModel::load(o.ckpt);
  const auto data = pipeline::load_examples(o.problems, model->vocab(), model->config().patch);
  const std::size_t max_len = o.max_len ? o.max_len : model->config().max_decode_len;
  std::cerr << "decoding " << data.size() << " problems, beam " << o.beam << '\n';
  const auto cands = pipeline::decode(*model, data, o.beam, max_len, o.jobs);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  solver::write_candidates(cands, out);
  write_json(sibling(out, ".config.json"),
             run_snapshot("decode", model->config().decode_seed,
                          {{"ckpt", o.ckpt}, {"problems", o.problems}, {"beam", o.beam}, {"max_len", max_len}}));
  emit({{"command", "decode"}, {"n", cands.size()}, {"beam", o.beam}, {"candidates", out.string()}});
  return 0;
}

int cmd_solve(const Options& o) {
  std::ifstream in(o.program);
  if (!in) throw DataError("cannot open program " + o.program);
  std::stringstream text;
  text << in.rdbuf();
  auto bindings = solver::Bindings::with_numbers(o.numbers);
  const auto trace = solver::execute_text(text.str(), bindings);
  emit({{"answer", trace.final}});
  return 0;
}

int cmd_adjudicate(const Options& o) {
  const auto problems = solver::read_problems(o.problems);
  const auto cands = solver::read_candidates(o.candidates);
  solver::Tolerance tol;
  tol.abs = o.tol;
  tol.validate();
  const auto outcomes = eval::adjudicate(problems, cands, o.beam, tol, o.jobs);
  json rows = json::array();
  for (const auto& oc : outcomes) rows.push_back(outcome_json(oc, tol));
  emit({{"command", "adjudicate"}, {"beam", o.beam}, {"outcomes", rows}});
  return 0;
}

int cmd_eval(const Options& o) {
  const auto problems = solver::read_problems(o.problems);
  const auto cands = solver::read_candidates(o.candidates);
  solver::Tolerance tol{o.tol_abs, o.tol_rel};
  tol.validate();
  const auto outcomes = eval::adjudicate(problems, cands, o.beam, tol, o.jobs);
  const auto report = eval::build_report(outcomes, tol, o.beam);
  json summary = eval::to_json(report);
  summary.erase("rows");
  if (!o.out.empty()) {
    eval::write_report(report, o.out);
    write_json(sibling(fs::path(o.out), ".config.json"),
               run_snapshot("eval", 0,
                            {{"problems", o.problems},
                             {"candidates", o.candidates},
                             {"beam", o.beam},
                             {"tol_abs", o.tol_abs},
                             {"tol_rel", o.tol_rel}}));
    summary["report"] = o.out;
  }
  emit(summary);
  return 0;
}

int emit_suite(const verify::SuiteReport& r, const std::string& out) {
  const auto j = r.to_json();
  if (!out.empty()) write_json(out, j);
  for (const auto& c : r.checks) {
    if (!c.passed) std::cerr << "FAIL " << c.module << '/' << c.name << ": " << c.detail << '\n';
  }
  emit(j);
  return r.ok() ? 0 : kVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Formal-language geometry problem solving toolkit"};
  app.require_subcommand(1);
  Options o;

  auto seed_flag = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed (falls back to GEOFORMAL_SEED, then 0)");
  };
  auto jobs_flag = [&](CLI::App* sub) {
    sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic problem set");
  gen->add_option("--n", o.n, "Number of problems")->check(CLI::PositiveNumber);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--choices", o.choices, "Distractor scheme: spread, bracket or none");
  gen->add_option("--image-size", o.image_size, "Diagram side in pixels");
  seed_flag(gen);
  jobs_flag(gen);

  auto* train = app.add_subcommand("train-toy", "Run training stages of the toy pipeline");
  train->add_option("--stage", o.stage, "mae, lm, align, sft or all")->required();
  train->add_option("--problems", o.problems, "problems.jsonl to train on")->required();
  train->add_option("--out", o.out, "Checkpoint to write")->required();
  auto* cfg_opt = train->add_option("--config", o.config, "Toy config JSON");
  train->add_option("--init", o.init, "Checkpoint to resume from")->excludes(cfg_opt);
  train->add_option("--steps", o.steps, "Override the stage step count");
  train->add_option("--log", o.log, "Run log (JSONL); defaults next to the checkpoint");
  seed_flag(train);

  auto* dec = app.add_subcommand("decode", "Beam-decode programs for a problem set");
  dec->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  dec->add_option("--problems", o.problems, "problems.jsonl")->required();
  dec->add_option("--out", o.out, "candidates.jsonl to write")->required();
  dec->add_option("--beam", o.beam, "Beam width")->check(CLI::PositiveNumber);
  dec->add_option("--max-len", o.max_len, "Longest program in tokens (default from the checkpoint)");
  jobs_flag(dec);

  auto* solve = app.add_subcommand("solve", "Execute one program");
  solve->add_option("--program", o.program, "File holding the program text")->required();
  solve->add_option("--numbers", o.numbers, "Problem numbers, comma separated")->delimiter(',');

  auto* adj = app.add_subcommand("adjudicate", "Run candidates through the solver");
  adj->add_option("--problems", o.problems, "problems.jsonl")->required();
  adj->add_option("--candidates", o.candidates, "candidates.jsonl")->required();
  adj->add_option("--beam", o.beam, "Candidates considered per problem")->check(CLI::PositiveNumber);
  adj->add_option("--tol", o.tol, "Absolute tolerance");
  jobs_flag(adj);

  auto* ev = app.add_subcommand("eval", "Score candidates and write a report");
  ev->add_option("--problems", o.problems, "problems.jsonl")->required();
  ev->add_option("--candidates", o.candidates, "candidates.jsonl")->required();
  ev->add_option("--beam", o.beam, "Beam width")->check(CLI::PositiveNumber);
  ev->add_option("--tol-abs", o.tol_abs, "Absolute tolerance");
  ev->add_option("--tol-rel", o.tol_rel, "Relative tolerance");
  ev->add_option("--out", o.out, "report.json to write");
  jobs_flag(ev);

  auto* gc = app.add_subcommand("gradcheck", "Check every differentiable op against finite differences");
  gc->add_option("--tol", o.grad_tol, "Largest accepted relative error");
  gc->add_option("--points", o.points, "Random inputs per op")->check(CLI::PositiveNumber);
  gc->add_option("--out", o.out, "Also write the report here");
  seed_flag(gc);

  auto* st = app.add_subcommand("selftest", "Run the invariant suite of every module");
  st->add_option("--out", o.out, "Also write the report here");
  seed_flag(st);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*dec) return cmd_decode(o);
    if (*solve) return cmd_solve(o);
    if (*adj) return cmd_adjudicate(o);
    if (*ev) return cmd_eval(o);
    if (*gc) return emit_suite(verify::run_gradcheck(resolve_seed(o.seed), o.grad_tol, o.points), o.out);
    if (*st) return emit_suite(verify::run_selftest(resolve_seed(o.seed)), o.out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const geoformal::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
