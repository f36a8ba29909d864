#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoformal/error.hpp"
#include "geoformal/solver/beam.hpp"
#include "geoformal/solver/problem.hpp"

namespace geoformal::eval {

using solver::Tolerance;

class EmptyReport : public DataError {
 public:
  EmptyReport() : DataError("no problems to evaluate") {}
};

class MissingChoices : public DataError {
 public:
  explicit MissingChoices(const std::string& id) : DataError("problem " + id + " has no answer choices") {}
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// Everything the metrics need to know about one adjudicated problem.
struct ProblemOutcome {
  std::string id;
  double answer = 0.0;
  std::optional<std::vector<double>> choices;
  solver::BeamOutcome beam;

  /// Rank of the first candidate within tolerance, if any.
  std::optional<std::size_t> first_correct(const Tolerance& tol) const;
  std::optional<std::size_t> first_executed() const;
  /// Option index of the first executed candidate's value.
  std::optional<std::size_t> chosen_option() const;
  /// Option nearest to the ground-truth answer. Throws MissingChoices.
  std::size_t correct_option() const;
};

/// Runs the first `beam` candidates of every problem through the solver.
/// Problems without a candidate record get an empty beam. Throws DataError
/// for candidates that name an unknown problem.
std::vector<ProblemOutcome> adjudicate(const std::vector<solver::ProblemRecord>& problems,
                                       const std::vector<solver::CandidateRecord>& candidates, std::size_t beam,
                                       const Tolerance& tol, std::size_t jobs = 1);

// Every metric throws EmptyReport on an empty outcome set.

/// Fraction of problems whose first correct candidate ranks below k (k >= 1).
double metric_top_k(std::span<const ProblemOutcome> outcomes, std::size_t k, const Tolerance& tol);
/// Fraction whose rank-0 candidate executes and matches the answer.
double metric_completion(std::span<const ProblemOutcome> outcomes, const Tolerance& tol);
/// Fraction whose first executable candidate resolves to the correct option.
/// Throws MissingChoices.
double metric_choice(std::span<const ProblemOutcome> outcomes);
/// Fraction where no candidate executes.
double unexecutable_fraction(std::span<const ProblemOutcome> outcomes);
/// top1 + 0.25 x unexecutable fraction. Throws MissingChoices.
double adjusted_accuracy(std::span<const ProblemOutcome> outcomes, const Tolerance& tol);

struct ReportRow {
  std::string id;
  std::optional<std::size_t> first_executed_rank;
  std::optional<std::size_t> first_correct_rank;
  std::optional<std::size_t> chosen_option;
  std::optional<std::size_t> correct_option;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct EvaluationReport {
  std::size_t n_problems = 0;
  std::size_t beam = 10;
  Tolerance tolerance;
  double top1 = 0.0;
  double top3 = 0.0;
  double top10 = 0.0;
  double completion = 0.0;
  double unexecutable = 0.0;
  // Set only when every problem has answer choices.
  std::optional<double> choice;
  std::optional<double> adjusted_top1;
  std::vector<ReportRow> rows;

  friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

EvaluationReport build_report(std::span<const ProblemOutcome> outcomes, const Tolerance& tol, std::size_t beam);

nlohmann::json to_json(const EvaluationReport& r);
/// Throws SchemaError.
EvaluationReport report_from_json(const nlohmann::json& j);
/// Throws IoError.
void write_report(const EvaluationReport& r, const std::filesystem::path& path);
/// Throws IoError or SchemaError.
EvaluationReport read_report(const std::filesystem::path& path);

}  // namespace geoformal::eval
