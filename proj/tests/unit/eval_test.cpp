#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "geoformal/eval/baseline.hpp"
#include "geoformal/eval/metrics.hpp"

using namespace geoformal;
using namespace geoformal::eval;

namespace {

// An outcome whose candidates have the given values; nullopt = failed.
ProblemOutcome outcome(double answer, std::vector<std::optional<double>> values,
                       std::optional<std::vector<double>> choices = std::vector<double>{1, 2, 3, 4},
                       std::string id = "p") {
  ProblemOutcome o;
  o.id = std::move(id);
  o.answer = answer;
  o.choices = std::move(choices);
  for (const auto& v : values) {
    solver::CandidateResult c;
    c.text = "x";
    c.value = v;
    if (!v) c.error = "failed";
    o.beam.candidates.push_back(std::move(c));
  }
  return o;
}

std::vector<ProblemOutcome> random_fixture(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> len(0, 10);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_int_distribution<int> which(1, 4);
  std::vector<ProblemOutcome> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double ans = which(rng);
    std::vector<std::optional<double>> vals;
    const int l = len(rng);
    for (int r = 0; r < l; ++r) {
      const int k = kind(rng);
      vals.push_back(k == 0 ? std::nullopt : std::optional<double>(k == 1 ? ans : ans + 0.7));
    }
    out.push_back(outcome(ans, vals, std::vector<double>{1, 2, 3, 4}, "p" + std::to_string(i)));
  }
  return out;
}

}  // namespace

TEST(TopK, AllCorrectAtRankZero) {
  std::vector<ProblemOutcome> o{outcome(5, {5.0}), outcome(2, {2.0, 1.0})};
  EXPECT_EQ(metric_top_k(o, 1, {}), 1.0);
}

TEST(TopK, CorrectOnlyAtRankFive) {
  std::vector<ProblemOutcome> o{outcome(5, {1.0, 1.0, 1.0, 1.0, 1.0, 5.0})};
  EXPECT_EQ(metric_top_k(o, 1, {}), 0.0);
  EXPECT_EQ(metric_top_k(o, 5, {}), 0.0);
  EXPECT_EQ(metric_top_k(o, 6, {}), 1.0);
  EXPECT_EQ(metric_top_k(o, 10, {}), 1.0);
  EXPECT_THROW(metric_top_k(o, 0, {}), std::invalid_argument);
}

TEST(TopK, NondecreasingInK) {
  std::mt19937_64 rng(1);
  for (int f = 0; f < 50; ++f) {
    const auto o = random_fixture(rng, 30);
    double prev = 0;
    for (std::size_t k = 1; k <= 11; ++k) {
      const double v = metric_top_k(o, k, {});
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Completion, RankZeroOnly) {
  std::vector<ProblemOutcome> o{outcome(5, {std::nullopt, 5.0})};
  EXPECT_EQ(metric_completion(o, {}), 0.0);
  EXPECT_EQ(metric_top_k(o, 3, {}), 1.0);
}

TEST(Completion, AbsoluteToleranceAcceptsAnswerFormat) {
  std::vector<ProblemOutcome> o{outcome(12.1, {12.104})};
  Tolerance tol{1e-2, 0.0};
  EXPECT_EQ(metric_completion(o, tol), 1.0);
}

TEST(Metrics, EmptyOutcomeSetThrows) {
  std::vector<ProblemOutcome> none;
  EXPECT_THROW(metric_completion(none, {}), EmptyReport);
  EXPECT_THROW(metric_top_k(none, 1, {}), EmptyReport);
  EXPECT_THROW(metric_choice(none), EmptyReport);
  EXPECT_THROW(build_report(none, {}, 10), EmptyReport);
}

TEST(Choice, FirstExecutableResolvesToCorrectOption) {
  // Answer 3 is option 2; candidate 2.9 is nearest to option 2.
  std::vector<ProblemOutcome> o{outcome(3, {std::nullopt, 2.9, 1.0})};
  EXPECT_EQ(metric_choice(o), 1.0);
  EXPECT_EQ(o[0].chosen_option(), 2u);
  EXPECT_EQ(o[0].correct_option(), 2u);
}

TEST(Choice, NothingExecutesIsIncorrect) {
  std::vector<ProblemOutcome> o{outcome(3, {std::nullopt, std::nullopt}), outcome(3, {})};
  EXPECT_EQ(metric_choice(o), 0.0);
  EXPECT_EQ(adjusted_accuracy(o, {}), 0.25);
}

TEST(Choice, MissingChoicesThrows) {
  std::vector<ProblemOutcome> o{outcome(3, {3.0}, std::nullopt)};
  EXPECT_THROW(metric_choice(o), MissingChoices);
  EXPECT_THROW(adjusted_accuracy(o, {}), MissingChoices);
  const auto r = build_report(o, {}, 10);
  EXPECT_FALSE(r.choice.has_value());
  EXPECT_FALSE(r.adjusted_top1.has_value());
}

TEST(Adjusted, FormulaArithmetic) {
  // 10 problems: 6 correct at rank 0, 2 unexecutable, 2 wrong.
  std::vector<ProblemOutcome> o;
  for (int i = 0; i < 6; ++i) o.push_back(outcome(2, {2.0}));
  for (int i = 0; i < 2; ++i) o.push_back(outcome(2, {std::nullopt}));
  for (int i = 0; i < 2; ++i) o.push_back(outcome(2, {4.0}));
  EXPECT_NEAR(metric_top_k(o, 1, {}), 0.6, 1e-15);
  EXPECT_NEAR(unexecutable_fraction(o), 0.2, 1e-15);
  EXPECT_NEAR(adjusted_accuracy(o, {}), 0.65, 1e-15);
}

TEST(Adjusted, NoUnexecutableMeansRaw) {
  std::vector<ProblemOutcome> o{outcome(2, {2.0}), outcome(2, {3.0})};
  EXPECT_EQ(adjusted_accuracy(o, {}), metric_top_k(o, 1, {}));
}

TEST(Adjusted, GapIsQuarterOfUnexecutable) {
  std::mt19937_64 rng(7);
  // Power-of-two sizes keep every fraction exact in binary.
  for (std::size_t n : {4u, 8u, 64u, 1024u}) {
    const auto o = random_fixture(rng, n);
    const auto r = build_report(o, {}, 10);
    EXPECT_EQ(*r.adjusted_top1 - r.top1, 0.25 * r.unexecutable) << n;
  }
  for (std::size_t n : {20u, 100u, 1000u}) {
    const auto r = build_report(random_fixture(rng, n), {}, 10);
    const double gap = *r.adjusted_top1 - r.top1;
    EXPECT_LE(std::abs(gap - 0.25 * r.unexecutable), 2 * std::numeric_limits<double>::epsilon()) << n;
    EXPECT_GE(*r.adjusted_top1, r.top1);
  }
}

TEST(Report, InvariantsAndPermutationInvariance) {
  std::mt19937_64 rng(3);
  for (int f = 0; f < 20; ++f) {
    auto o = random_fixture(rng, 40);
    const auto r = build_report(o, {}, 10);
    EXPECT_LE(r.top1, r.top3);
    EXPECT_LE(r.top3, r.top10);
    for (double v : {r.top1, r.top3, r.top10, r.completion, *r.choice, *r.adjusted_top1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    std::shuffle(o.begin(), o.end(), rng);
    const auto s = build_report(o, {}, 10);
    EXPECT_EQ(s.top1, r.top1);
    EXPECT_EQ(s.top10, r.top10);
    EXPECT_EQ(s.completion, r.completion);
    EXPECT_EQ(s.choice, r.choice);
  }
}

TEST(Report, RoundTripFixtures) {
  const auto dir = std::filesystem::temp_directory_path();
  std::mt19937_64 rng(11);
  for (std::size_t n : {1u, 5u, 1000u}) {
    const auto r = build_report(random_fixture(rng, n), {1e-2, 1e-3}, 10);
    write_report(r, dir / "geoformal_report.json");
    EXPECT_EQ(read_report(dir / "geoformal_report.json"), r);
  }
  EvaluationReport empty_rows;
  empty_rows.top1 = 0.5;
  write_report(empty_rows, dir / "geoformal_report.json");
  EXPECT_EQ(read_report(dir / "geoformal_report.json"), empty_rows);
  std::filesystem::remove(dir / "geoformal_report.json");
}

TEST(Report, HandWrittenV1File) {
  const auto path = std::filesystem::temp_directory_path() / "geoformal_v1.json";
  std::ofstream(path) << R"({"schema": 1, "n_problems": 2, "beam": 10,
    "tolerance": {"abs": 0.01, "rel": 0.001},
    "metrics": {"top1": 0.5, "top3": 0.5, "top10": 1.0, "completion": 0.5,
                "unexecutable": 0.0, "choice": 0.5, "adjusted_top1": 0.5},
    "rows": [{"id": "a", "first_executed_rank": 0, "first_correct_rank": 0,
              "chosen_option": 1, "correct_option": 1},
             {"id": "b", "first_executed_rank": 0, "first_correct_rank": 4,
              "chosen_option": null, "correct_option": 3}]})";
  const auto r = read_report(path);
  EXPECT_EQ(r.n_problems, 2u);
  EXPECT_EQ(r.rows[1].first_correct_rank, 4u);
  EXPECT_FALSE(r.rows[1].chosen_option.has_value());
  std::ofstream(path) << R"({"schema": 2})";
  EXPECT_THROW(read_report(path), SchemaError);
  std::ofstream(path) << "{not json";
  EXPECT_THROW(read_report(path), SchemaError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_report(path), IoError);
}

TEST(Adjudicate, RunsCandidatesThroughSolver) {
  std::vector<solver::ProblemRecord> problems(2);
  problems[0].id = "a";
  problems[0].numbers = {3, 4};
  problems[0].answer = 5;
  problems[0].choices = std::vector<double>{2.5, 5, 10, 5.5};
  problems[1].id = "b";
  problems[1].numbers = {1};
  problems[1].answer = 2;
  std::vector<solver::CandidateRecord> cands{{"a", {"g_add N_0", "gougu_add N_0 N_1", "g_add N_0 N_1"}, {}}};
  const auto out = adjudicate(problems, cands, 2, {}, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].beam.candidates.size(), 2u);
  EXPECT_FALSE(out[0].beam.candidates[0].executed());
  EXPECT_EQ(out[0].first_correct({}), 1u);
  EXPECT_EQ(out[0].chosen_option(), 1u);
  EXPECT_TRUE(out[1].beam.candidates.empty());
  std::vector<solver::CandidateRecord> stray{{"zzz", {"g_add 1.0 1.0"}, {}}};
  EXPECT_THROW(adjudicate(problems, stray, 10, {}), DataError);
}

TEST(Baseline, RandomProgramsParse) {
  tensor::Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    const auto text = random_program(rng, 3);
    EXPECT_NO_THROW(solver::parse_program(text)) << text;
  }
}
