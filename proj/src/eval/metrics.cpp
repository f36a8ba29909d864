#include "geoformal/eval/metrics.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace geoformal::eval {

using nlohmann::json;

std::optional<std::size_t> ProblemOutcome::first_correct(const Tolerance& tol) const {
  for (std::size_t r = 0; r < beam.candidates.size(); ++r) {
    const auto& v = beam.candidates[r].value;
    if (v && tol.accepts(*v, answer)) return r;
  }
  return std::nullopt;
}

std::optional<std::size_t> ProblemOutcome::first_executed() const {
  for (std::size_t r = 0; r < beam.candidates.size(); ++r) {
    if (beam.candidates[r].executed()) return r;
  }
  return std::nullopt;
}

std::optional<std::size_t> ProblemOutcome::chosen_option() const {
  if (!choices || choices->empty()) throw MissingChoices(id);
  const auto r = first_executed();
  if (!r) return std::nullopt;
  return solver::resolve_choice(*beam.candidates[*r].value, *choices);
}

std::size_t ProblemOutcome::correct_option() const {
  if (!choices || choices->empty()) throw MissingChoices(id);
  return solver::resolve_choice(answer, *choices);
}

std::vector<ProblemOutcome> adjudicate(const std::vector<solver::ProblemRecord>& problems,
                                       const std::vector<solver::CandidateRecord>& candidates, std::size_t beam,
                                       const Tolerance& tol, std::size_t jobs) {
  tol.validate();
  std::map<std::string, const solver::CandidateRecord*> by_id;
  for (const auto& c : candidates) by_id[c.id] = &c;
  for (const auto& [id, _] : by_id) {
    const bool known =
        std::any_of(problems.begin(), problems.end(), [&](const solver::ProblemRecord& p) { return p.id == id; });
    if (!known) throw DataError("candidates given for unknown problem " + id);
  }
  std::vector<ProblemOutcome> out(problems.size());
  auto one = [&](std::size_t i) {
    const auto& p = problems[i];
    out[i].id = p.id;
    out[i].answer = p.answer;
    out[i].choices = p.choices;
    std::vector<std::string> texts;
    if (auto it = by_id.find(p.id); it != by_id.end()) {
      const auto& all = it->second->candidates;
      texts.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(beam, all.size())));
    }
    out[i].beam = solver::evaluate_beam(texts, solver::Bindings::with_numbers(p.numbers), p.answer, tol);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, problems.size()));
  std::vector<std::exception_ptr> errors(jobs);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < problems.size(); i += jobs) one(i);
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

namespace {

template <typename Pred>
double fraction(std::span<const ProblemOutcome> outcomes, Pred pred) {
  if (outcomes.empty()) throw EmptyReport();
  std::size_t hits = 0;
  for (const auto& o : outcomes) hits += pred(o) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

void require_choices(std::span<const ProblemOutcome> outcomes) {
  for (const auto& o : outcomes) {
    if (!o.choices || o.choices->empty()) throw MissingChoices(o.id);
  }
}

}  // namespace

double metric_top_k(std::span<const ProblemOutcome> outcomes, std::size_t k, const Tolerance& tol) {
  if (k == 0) throw std::invalid_argument("top-k needs k >= 1");
  return fraction(outcomes, [&](const ProblemOutcome& o) {
    const auto r = o.first_correct(tol);
    return r && *r < k;
  });
}

double metric_completion(std::span<const ProblemOutcome> outcomes, const Tolerance& tol) {
  return fraction(outcomes, [&](const ProblemOutcome& o) {
    if (o.beam.candidates.empty()) return false;
    const auto& v = o.beam.candidates.front().value;
    return v && tol.accepts(*v, o.answer);
  });
}

double metric_choice(std::span<const ProblemOutcome> outcomes) {
  if (outcomes.empty()) throw EmptyReport();
  require_choices(outcomes);
  return fraction(outcomes, [](const ProblemOutcome& o) {
    const auto chosen = o.chosen_option();
    return chosen && *chosen == o.correct_option();
  });
}

double unexecutable_fraction(std::span<const ProblemOutcome> outcomes) {
  return fraction(outcomes, [](const ProblemOutcome& o) { return !o.first_executed(); });
}

double adjusted_accuracy(std::span<const ProblemOutcome> outcomes, const Tolerance& tol) {
  if (outcomes.empty()) throw EmptyReport();
  require_choices(outcomes);
  return metric_top_k(outcomes, 1, tol) + 0.25 * unexecutable_fraction(outcomes);
}

EvaluationReport build_report(std::span<const ProblemOutcome> outcomes, const Tolerance& tol, std::size_t beam) {
  if (outcomes.empty()) throw EmptyReport();
  EvaluationReport r;
  r.n_problems = outcomes.size();
  r.beam = beam;
  r.tolerance = tol;
  r.top1 = metric_top_k(outcomes, 1, tol);
  r.top3 = metric_top_k(outcomes, 3, tol);
  r.top10 = metric_top_k(outcomes, 10, tol);
  r.completion = metric_completion(outcomes, tol);
  r.unexecutable = unexecutable_fraction(outcomes);
  const bool all_choices = std::all_of(outcomes.begin(), outcomes.end(), [](const ProblemOutcome& o) {
    return o.choices && !o.choices->empty();
  });
  if (all_choices) {
    r.choice = metric_choice(outcomes);
    r.adjusted_top1 = adjusted_accuracy(outcomes, tol);
  }
  for (const auto& o : outcomes) {
    ReportRow row{o.id, o.first_executed(), o.first_correct(tol), std::nullopt, std::nullopt};
    if (o.choices && !o.choices->empty()) {
      row.chosen_option = o.chosen_option();
      row.correct_option = o.correct_option();
    }
    r.rows.push_back(std::move(row));
  }
  return r;
}

namespace {

json opt(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}

}  // namespace

json to_json(const EvaluationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"id", row.id},
                    {"first_executed_rank", opt(row.first_executed_rank)},
                    {"first_correct_rank", opt(row.first_correct_rank)},
                    {"chosen_option", opt(row.chosen_option)},
                    {"correct_option", opt(row.correct_option)}});
  }
  return {{"schema", 1},
          {"n_problems", r.n_problems},
          {"beam", r.beam},
          {"tolerance", {{"abs", r.tolerance.abs}, {"rel", r.tolerance.rel}}},
          {"metrics",
           {{"top1", r.top1},
            {"top3", r.top3},
            {"top10", r.top10},
            {"completion", r.completion},
            {"unexecutable", r.unexecutable},
            {"choice", opt(r.choice)},
            {"adjusted_top1", opt(r.adjusted_top1)}}},
          {"rows", rows}};
}

EvaluationReport report_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw SchemaError("unsupported report schema " + j.at("schema").dump());
    EvaluationReport r;
    r.n_problems = j.at("n_problems").get<std::size_t>();
    r.beam = j.at("beam").get<std::size_t>();
    r.tolerance.abs = j.at("tolerance").at("abs").get<double>();
    r.tolerance.rel = j.at("tolerance").at("rel").get<double>();
    const auto& m = j.at("metrics");
    r.top1 = m.at("top1").get<double>();
    r.top3 = m.at("top3").get<double>();
    r.top10 = m.at("top10").get<double>();
    r.completion = m.at("completion").get<double>();
    r.unexecutable = m.at("unexecutable").get<double>();
    r.choice = get_opt<double>(m, "choice");
    r.adjusted_top1 = get_opt<double>(m, "adjusted_top1");
    for (const auto& row : j.at("rows")) {
      r.rows.push_back({row.at("id").get<std::string>(), get_opt<std::size_t>(row, "first_executed_rank"),
                        get_opt<std::size_t>(row, "first_correct_rank"), get_opt<std::size_t>(row, "chosen_option"),
                        get_opt<std::size_t>(row, "correct_option")});
    }
    for (double f : {r.top1, r.top3, r.top10, r.completion, r.unexecutable}) {
      if (!(f >= 0.0 && f <= 1.0)) throw SchemaError("report metric outside [0, 1]");
    }
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("report schema: ") + e.what());
  }
}

void write_report(const EvaluationReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

EvaluationReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace geoformal::eval
