#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geoformal/solver/beam.hpp"
#include "geoformal/solver/interpreter.hpp"
#include "geoformal/solver/problem.hpp"
#include "support/generators.hpp"
#include "support/program_oracle.hpp"

using namespace geoformal;
using namespace geoformal::solver;

namespace {

double run(std::string_view text, std::vector<double> numbers = {}) {
  auto b = Bindings::with_numbers(std::move(numbers));
  return execute_text(text, b).final;
}

}  // namespace

TEST(Registry, HasSixteenOperators) {
  const auto& reg = standard_registry();
  EXPECT_EQ(reg.specs().size(), 16u);
  EXPECT_EQ(reg.arity("gougu_minus"), 2u);
  EXPECT_EQ(reg.arity("Sum"), 3u);
  EXPECT_EQ(reg.arity("nosuch"), std::nullopt);
}

TEST(Registry, RejectsDuplicates) {
  OperatorRegistry reg;
  reg.add({"f", 1, [](std::span<const double> x) { return x[0]; }, {}});
  EXPECT_THROW(reg.add({"f", 1, [](std::span<const double> x) { return x[0]; }, {}}),
               std::invalid_argument);
}

TEST(Registry, CustomOperatorsExecute) {
  OperatorRegistry reg;
  reg.add({"triple", 1, [](std::span<const double> x) { return 3 * x[0]; }, {}});
  Bindings b;
  EXPECT_DOUBLE_EQ(execute_text("triple 2.0", b, reg).final, 6.0);
}

TEST(Interpreter, PythagoreanTriple) {
  EXPECT_NEAR(run("gougu_add 3.0 4.0"), 5.0, 1e-12);
  EXPECT_NEAR(run("gougu_add N_0 N_1", {3, 4}), 5.0, 1e-12);
}

TEST(Interpreter, SumTakesThreeOperands) { EXPECT_DOUBLE_EQ(run("Sum 1.0 2.0 3.5"), 6.5); }

TEST(Interpreter, ChainedPrograms) {
  Bindings b;
  execute_text("gougu_minus 5.0 4.0", b);
  ASSERT_EQ(b.v_values.size(), 1u);
  EXPECT_NEAR(b.v_values[0], 3.0, 1e-12);
  auto trace = execute_text("g_minus 5.0 V_0", b);
  EXPECT_NEAR(trace.final, 2.0, 1e-12);
  EXPECT_EQ(b.v_values.size(), 2u);
}

TEST(Interpreter, TraceRecordsEveryStep) {
  Bindings b = Bindings::with_numbers({2.0});
  auto t = execute_text("g_double N_0 g_add V_0 1.0 g_half V_1", b);
  ASSERT_EQ(t.steps.size(), 3u);
  EXPECT_EQ(t.steps[1].op, "g_add");
  EXPECT_EQ(t.steps[1].operands, (std::vector<double>{4.0, 1.0}));
  EXPECT_DOUBLE_EQ(t.final, t.steps.back().result);
  EXPECT_DOUBLE_EQ(t.final, 2.5);
}

TEST(Interpreter, DomainErrors) {
  EXPECT_THROW(run("g_divide 1.0 0.0"), DomainError);
  EXPECT_THROW(run("g_tan 90.0"), DomainError);
  EXPECT_THROW(run("g_tan 270.0"), DomainError);
  EXPECT_NO_THROW(run("g_tan 45.0"));
  EXPECT_THROW(run("g_mul 1e300 1e300"), DomainError);
  EXPECT_THROW(run("g_add N_3 1.0", {1.0}), UnboundNumRef);
  EXPECT_THROW(run(""), EmptyProgram);
}

TEST(Interpreter, ConstantsAndAngles) {
  EXPECT_NEAR(run("cal_circle_perimeter 2.0"), 4 * M_PI, 1e-12);
  EXPECT_NEAR(run("cal_circle_area C_PI"), M_PI * M_PI * M_PI, 1e-9);
  EXPECT_NEAR(run("g_sin 30.0"), 0.5, 1e-12);
  EXPECT_NEAR(run("g_cos 60.0"), 0.5, 1e-12);
}

TEST(Interpreter, MinusIsSymmetric) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_EQ(run("g_minus N_0 N_1", {a, b}), run("g_minus N_0 N_1", {b, a}));
  }
}

TEST(Interpreter, GouguInverse) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 100);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_NEAR(run("gougu_add N_0 N_1 gougu_minus V_0 N_1", {a, b}), a, 1e-9 * std::max(1.0, a));
  }
}

TEST(Interpreter, DeterministicBitForBit) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    auto text = testsupport::random_program_text(rng, 4, 2);
    std::optional<double> first;
    for (int k = 0; k < 2; ++k) {
      try {
        const double v = run(text, {3.5, 7.25});
        if (first) {
          EXPECT_EQ(std::memcmp(&*first, &v, sizeof v), 0);
        }
        first = v;
      } catch (const DomainError&) {
      }
    }
  }
}

TEST(Interpreter, MatchesRecursiveOracle) {
  std::mt19937_64 rng(99);
  int compared = 0;
  for (int i = 0; i < 1000; ++i) {
    auto text = testsupport::random_program_text(rng, 4, 3);
    const std::vector<double> numbers = {2.5, 7.0, 13.25};
    testsupport::ProgramOracle oracle(text, numbers);
    auto expected = oracle.evaluate();
    std::optional<double> got;
    try {
      got = run(text, numbers);
    } catch (const DomainError&) {
    }
    ASSERT_EQ(got.has_value(), expected.has_value()) << text;
    if (got) {
      EXPECT_LE(std::abs(*got - *expected), 1e-9 * std::max(1.0, std::abs(*expected))) << text;
      ++compared;
    }
  }
  EXPECT_GT(compared, 900);
}

TEST(Choice, NearestWithLowestIndexTieBreak) {
  const std::vector<double> choices = {40.0, 60.0, 120.0, 140.0};
  EXPECT_EQ(resolve_choice(40.0, choices), 0u);
  EXPECT_EQ(resolve_choice(50.0, choices), 0u);
  EXPECT_EQ(resolve_choice(139.0, choices), 3u);
  EXPECT_THROW(resolve_choice(1.0, std::vector<double>{}), std::invalid_argument);
}

TEST(ToleranceRule, LooserBoundWins) {
  Tolerance t;
  EXPECT_TRUE(t.accepts(12.104, 12.1));
  EXPECT_FALSE(t.accepts(12.2, 12.1));
  EXPECT_TRUE(t.accepts(1000.9, 1000.0));  // rel 1e-3 -> 1.0
  EXPECT_THROW((Tolerance{0.0, 0.0}.validate()), std::invalid_argument);
}

TEST(Beam, InvalidThenCorrect) {
  std::vector<std::string> c = {"g_equal", "gougu_add 3.0 4.0"};
  auto out = evaluate_beam(c, Bindings{}, 5.0, Tolerance{});
  EXPECT_EQ(out.first_executed, 1u);
  EXPECT_EQ(out.first_correct, 1u);
  EXPECT_FALSE(out.candidates[0].executed());
  EXPECT_FALSE(out.candidates[0].error.empty());
}

TEST(Beam, AllInvalid) {
  std::vector<std::string> c(10, "g_divide 1.0 0.0");
  auto out = evaluate_beam(c, Bindings{}, 5.0, Tolerance{});
  EXPECT_FALSE(out.first_executed);
  EXPECT_FALSE(out.first_correct);
  EXPECT_EQ(out.candidates.size(), 10u);
}

TEST(Beam, WrongThenCorrect) {
  std::vector<std::string> c = {"g_add 3.0 4.0", "gougu_add 3.0 4.0"};
  auto out = evaluate_beam(c, Bindings{}, 5.0, Tolerance{});
  EXPECT_EQ(out.first_executed, 0u);
  EXPECT_EQ(out.first_correct, 1u);
}

TEST(Beam, FailuresDoNotLeakBetweenCandidates) {
  Bindings b = Bindings::with_numbers({3.0, 4.0});
  std::vector<std::string> c = {"gougu_add N_0 N_1 g_divide V_0 0.0", "g_equal V_0",
                                "gougu_add N_0 N_1"};
  auto out = evaluate_beam(c, b, 5.0, Tolerance{});
  EXPECT_FALSE(out.candidates[1].executed());  // V_0 was not left behind
  EXPECT_EQ(out.first_correct, 2u);
}

TEST(Beam, TailAppendDoesNotMoveFirstCorrect) {
  std::mt19937_64 rng(6);
  Bindings b = Bindings::with_numbers({3.0, 4.0});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> c;
    for (int i = 0; i < 5; ++i) c.push_back(testsupport::random_program_text(rng, 2, 2));
    c.push_back("gougu_add N_0 N_1");
    auto before = evaluate_beam(c, b, 5.0, Tolerance{});
    c.push_back(testsupport::random_program_text(rng, 2, 2));
    auto after = evaluate_beam(c, b, 5.0, Tolerance{});
    EXPECT_EQ(before.first_correct, after.first_correct);
    EXPECT_LE(*after.first_executed, *after.first_correct);
  }
}

TEST(ProblemRecords, JsonRoundTripAndUnknownFields) {
  ProblemRecord p;
  p.id = "p1";
  p.numbers = {3.0, 4.0};
  p.choices = std::vector<double>{5.0, 2.5, 10.0, 4.1};
  p.answer = 5.0;
  p.gt_program = "gougu_add N_0 N_1";
  p.caption = "Line A B";
  p.question_tokens = {"find", "hypotenuse"};
  p.diagram = "diagrams/p1.pgm";
  auto j = to_json(p);
  j["extra"] = 1;
  EXPECT_EQ(problem_from_json(j), p);
  j.erase("answer");
  EXPECT_THROW(problem_from_json(j), DataError);
}
