#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "geoformal/error.hpp"
#include "geoformal/lang/caption.hpp"
#include "geoformal/tensor/rng.hpp"

namespace geoformal::synth {

using tensor::Rng;

class RetryExhausted : public Error {
 public:
  explicit RetryExhausted(const std::string& what) : Error("scene sampling gave up: " + what) {}
};

/// Position in the unit square, image orientation (y grows downward).
struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct NamedPoint {
  std::string label;
  Point2 at;
};

struct CircleSpec {
  std::string center;
  double radius = 0.0;
  std::vector<std::string> members;
};

struct SceneSpec {
  std::vector<NamedPoint> points;
  std::vector<std::vector<std::string>> lines;
  std::vector<CircleSpec> circles;

  const Point2& at(const std::string& label) const;  // throws std::out_of_range
  bool has_point(const std::string& label) const;
};

enum class Structure { Random, Triangle, RightTriangle, Polygon, LinearPair, Circle };

struct SceneConfig {
  std::size_t min_points = 2;
  std::size_t max_points = 8;
  std::size_t min_lines = 1;
  std::size_t max_lines = 3;
  std::size_t min_circles = 0;
  std::size_t max_circles = 1;
  double min_separation = 0.08;
  Structure structure = Structure::Random;
  // Random scenes only: when >= 3, the first line carries exactly this many points.
  std::size_t collinear_points = 0;
};

/// Rejection-samples a scene. Line members are ordered left to right (ties
/// top first) and circle members clockwise from 12 o'clock.
SceneSpec sample_scene(Rng& rng, const SceneConfig& cfg = {});

/// Orders labels left to right, ties broken top to bottom.
std::vector<std::string> order_on_line(const SceneSpec& scene, std::vector<std::string> labels);
/// Orders members clockwise on screen starting from 12 o'clock.
std::vector<std::string> order_on_circle(const SceneSpec& scene, const std::string& center,
                                         std::vector<std::string> labels);

/// One Line relation per line, then one \odot relation per circle.
lang::FormalCaption caption_of(const SceneSpec& scene);

/// Empty when the scene is consistent; otherwise the first violation.
std::optional<std::string> check_scene(const SceneSpec& scene, double tol = 1e-9);

}  // namespace geoformal::synth
