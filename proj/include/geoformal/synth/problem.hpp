#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoformal/lang/caption.hpp"
#include "geoformal/lang/program.hpp"
#include "geoformal/solver/problem.hpp"
#include "geoformal/synth/raster.hpp"
#include "geoformal/synth/scene.hpp"

namespace geoformal::synth {

class NoTemplateApplies : public Error {
 public:
  NoTemplateApplies() : Error("scene has no measurable quantity for any problem template") {}
};

enum class Template {
  Hypotenuse,
  Leg,
  TrianglePerimeter,
  ThirdAngle,
  PolygonPerimeter,
  Supplementary,
  CirclePerimeter,
  CircleArea,
};

std::string_view template_name(Template t);

/// How distractors sit around the answer. Bracket always has one option
/// below and two above or the reverse, so the answer is never the smallest
/// or largest. Spread puts the answer at a uniformly random rank.
enum class ChoiceScheme { Spread, Bracket };

struct ProblemConfig {
  std::size_t image_size = 64;
  std::size_t patch = 8;
  bool with_choices = true;
  ChoiceScheme choice_scheme = ChoiceScheme::Spread;
  std::vector<Template> allowed;  // empty = every template
};

struct SyntheticProblem {
  std::string id;
  Template kind = Template::Hypotenuse;
  SceneSpec scene;
  Diagram diagram;
  lang::FormalCaption caption;
  std::vector<std::string> question_tokens;
  std::vector<double> numbers;
  std::optional<std::vector<double>> choices;
  double answer = 0.0;
  lang::SolutionProgram gt_program;

  std::string question() const;
};

/// Templates whose preconditions hold in `scene`.
std::vector<Template> applicable_templates(const SceneSpec& scene);

/// Picks an applicable template, instantiates numbers from the scene's
/// proportions and computes the answer by running the program.
SyntheticProblem make_problem(const SceneSpec& scene, Rng& rng, const ProblemConfig& cfg = {});
/// Same with a fixed template; throws NoTemplateApplies when it does not fit.
SyntheticProblem make_problem(const SceneSpec& scene, Template kind, Rng& rng, const ProblemConfig& cfg = {});

/// Three distractors plus the answer, shuffled. Distractors are the answer
/// times 0.5 or 2 for the farthest option on a side and a random factor in
/// [0.7, 0.95] or [1.05, 1.3] otherwise, rounded to one decimal and
/// regenerated on collision.
std::vector<double> make_choices(double answer, Rng& rng, ChoiceScheme scheme = ChoiceScheme::Spread);

/// Problem i is a pure function of (seed, i): drawn from Rng(seed).split(i)
/// over the structured scene kinds. Work is split over `jobs` threads.
std::vector<SyntheticProblem> generate_dataset(std::size_t n, std::uint64_t seed, const ProblemConfig& cfg = {},
                                               std::size_t jobs = 1);

solver::ProblemRecord to_record(const SyntheticProblem& p);

/// problems.jsonl, captions.txt, vocab.txt and diagrams/<id>.pgm under `dir`.
void write_dataset(const std::vector<SyntheticProblem>& problems, const std::filesystem::path& dir);

}  // namespace geoformal::synth
