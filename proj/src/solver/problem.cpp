#include "geoformal/solver/problem.hpp"

#include <fstream>

#include "geoformal/error.hpp"

namespace geoformal::solver {

using nlohmann::json;

namespace {

std::string id_of(const json& j) {
  const auto& id = j.at("id");
  if (id.is_string()) return id.get<std::string>();
  if (id.is_number_integer()) return std::to_string(id.get<long long>());
  throw DataError("'id' must be a string or integer");
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DataError(std::string("schema error: ") + e.what());
  }
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::vector<json>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

}  // namespace

json to_json(const ProblemRecord& p) {
  json j;
  j["id"] = p.id;
  j["numbers"] = p.numbers;
  j["choices"] = p.choices ? json(*p.choices) : json(nullptr);
  j["answer"] = p.answer;
  j["gt_program"] = p.gt_program;
  j["caption"] = p.caption;
  j["question_tokens"] = p.question_tokens;
  j["diagram"] = p.diagram;
  return j;
}

ProblemRecord problem_from_json(const json& j) {
  return guarded([&] {
    ProblemRecord p;
    p.id = id_of(j);
    p.numbers = j.at("numbers").get<std::vector<double>>();
    if (j.contains("choices") && !j.at("choices").is_null()) {
      p.choices = j.at("choices").get<std::vector<double>>();
    }
    p.answer = j.at("answer").get<double>();
    p.gt_program = j.value("gt_program", std::string());
    p.caption = j.value("caption", std::string());
    p.question_tokens = j.value("question_tokens", std::vector<std::string>{});
    p.diagram = j.value("diagram", std::string());
    return p;
  });
}

json to_json(const CandidateRecord& c) {
  json j;
  j["id"] = c.id;
  j["candidates"] = c.candidates;
  if (!c.scores.empty()) j["scores"] = c.scores;
  return j;
}

CandidateRecord candidate_from_json(const json& j) {
  return guarded([&] {
    CandidateRecord c;
    c.id = id_of(j);
    c.candidates = j.at("candidates").get<std::vector<std::string>>();
    c.scores = j.value("scores", std::vector<double>{});
    return c;
  });
}

std::vector<ProblemRecord> read_problems(const std::filesystem::path& path) {
  std::vector<ProblemRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(problem_from_json(j));
  return out;
}

void write_problems(const std::vector<ProblemRecord>& problems,
                    const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& p : problems) rows.push_back(to_json(p));
  write_jsonl(rows, path);
}

std::vector<CandidateRecord> read_candidates(const std::filesystem::path& path) {
  std::vector<CandidateRecord> out;
  for (const auto& j : read_jsonl(path)) out.push_back(candidate_from_json(j));
  return out;
}

void write_candidates(const std::vector<CandidateRecord>& candidates,
                      const std::filesystem::path& path) {
  std::vector<json> rows;
  for (const auto& c : candidates) rows.push_back(to_json(c));
  write_jsonl(rows, path);
}

}  // namespace geoformal::solver
