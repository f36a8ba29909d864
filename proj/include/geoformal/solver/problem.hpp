#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace geoformal::solver {

/// One line of a problems JSONL file. Field order is irrelevant and unknown
/// fields are ignored on read.
struct ProblemRecord {
  std::string id;
  std::vector<double> numbers;
  std::optional<std::vector<double>> choices;
  double answer = 0.0;
  std::string gt_program;
  std::string caption;
  std::vector<std::string> question_tokens;
  std::string diagram;

  friend bool operator==(const ProblemRecord&, const ProblemRecord&) = default;
};

/// Ranked decoder output for one problem.
struct CandidateRecord {
  std::string id;
  std::vector<std::string> candidates;
  std::vector<double> scores;  // optional; empty when unknown

  friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

nlohmann::json to_json(const ProblemRecord& p);
ProblemRecord problem_from_json(const nlohmann::json& j);  // throws DataError
nlohmann::json to_json(const CandidateRecord& c);
CandidateRecord candidate_from_json(const nlohmann::json& j);  // throws DataError

std::vector<ProblemRecord> read_problems(const std::filesystem::path& path);
void write_problems(const std::vector<ProblemRecord>& problems, const std::filesystem::path& path);
std::vector<CandidateRecord> read_candidates(const std::filesystem::path& path);
void write_candidates(const std::vector<CandidateRecord>& candidates,
                      const std::filesystem::path& path);

}  // namespace geoformal::solver
