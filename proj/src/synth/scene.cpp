#include "geoformal/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace geoformal::synth {

namespace {

constexpr double kLo = 0.1;
constexpr double kHi = 0.9;
constexpr int kMaxAttempts = 1000;

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool inside(Point2 p) { return p.x >= kLo && p.x <= kHi && p.y >= kLo && p.y <= kHi; }

// Labels A, B, ... in creation order, skipping O which is reserved for
// circle centers.
std::string nth_label(std::size_t i) {
  std::size_t k = 0;
  for (char c = 'A'; c <= 'Z'; ++c) {
    if (c == 'O') continue;
    if (k++ == i) return std::string(1, c);
  }
  throw std::out_of_range("too many points for single-letter labels");
}

class Builder {
 public:
  Builder(Rng& rng, double sep) : rng_(rng), sep_(sep) {}

  bool fits(Point2 p) const {
    if (!inside(p)) return false;
    return std::all_of(scene.points.begin(), scene.points.end(),
                       [&](const NamedPoint& q) { return dist(p, q.at) >= sep_; });
  }

  std::string add(Point2 p, bool center = false) {
    std::string label = center ? "O" : nth_label(next_++);
    scene.points.push_back({label, p});
    return label;
  }

  Point2 random_point() { return {rng_.uniform(kLo, kHi), rng_.uniform(kLo, kHi)}; }

  // A free point respecting the separation rule.
  std::optional<std::string> add_free() {
    for (int i = 0; i < kMaxAttempts; ++i) {
      const Point2 p = random_point();
      if (fits(p)) return add(p);
    }
    return std::nullopt;
  }

  void add_line(std::vector<std::string> labels) { scene.lines.push_back(order_on_line(scene, std::move(labels))); }

  SceneSpec scene;

 private:
  Rng& rng_;
  double sep_;
  std::size_t next_ = 0;
};

double angle_at(Point2 v, Point2 a, Point2 b) {
  const double ux = a.x - v.x, uy = a.y - v.y, wx = b.x - v.x, wy = b.y - v.y;
  const double c = (ux * wx + uy * wy) / (std::hypot(ux, uy) * std::hypot(wx, wy));
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::optional<SceneSpec> try_triangle(Rng& rng, double sep, bool right) {
  Builder b(rng, sep);
  Point2 pa, pb, pc;
  if (right) {
    pb = b.random_point();
    const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double l1 = rng.uniform(0.25, 0.6);
    const double l2 = rng.uniform(0.25, 0.6);
    pa = {pb.x + l1 * std::cos(th), pb.y + l1 * std::sin(th)};
    pc = {pb.x - l2 * std::sin(th), pb.y + l2 * std::cos(th)};
  } else {
    pa = b.random_point();
    pb = b.random_point();
    pc = b.random_point();
    const double min_angle = 20.0 * std::numbers::pi / 180.0;
    if (angle_at(pa, pb, pc) < min_angle || angle_at(pb, pa, pc) < min_angle || angle_at(pc, pa, pb) < min_angle) {
      return std::nullopt;
    }
  }
  if (!inside(pa) || !inside(pb) || !inside(pc)) return std::nullopt;
  if (dist(pa, pb) < 0.25 || dist(pb, pc) < 0.25 || dist(pa, pc) < 0.25) return std::nullopt;
  const auto a = b.add(pa), bb = b.add(pb), c = b.add(pc);
  b.add_line({a, bb});
  b.add_line({bb, c});
  b.add_line({a, c});
  return b.scene;
}

std::optional<SceneSpec> try_polygon(Rng& rng, double sep) {
  Builder b(rng, sep);
  const std::size_t k = 4 + rng.index(3);
  const double r = rng.uniform(0.2, 0.38);
  const Point2 c{rng.uniform(kLo + r, kHi - r), rng.uniform(kLo + r, kHi - r)};
  if (!inside({c.x - r, c.y - r}) || !inside({c.x + r, c.y + r})) return std::nullopt;
  const double rot = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < k; ++i) {
    // Increasing screen angle with y down runs clockwise.
    const double th = rot + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    const Point2 p{c.x + r * std::cos(th), c.y + r * std::sin(th)};
    if (!b.fits(p)) return std::nullopt;
    labels.push_back(b.add(p));
  }
  for (std::size_t i = 0; i < k; ++i) b.add_line({labels[i], labels[(i + 1) % k]});
  return b.scene;
}

std::optional<SceneSpec> try_linear_pair(Rng& rng, double sep) {
  Builder b(rng, sep);
  const Point2 pa = b.random_point();
  const Point2 pc = b.random_point();
  if (dist(pa, pc) < 0.4) return std::nullopt;
  const double t = rng.uniform(0.35, 0.65);
  const Point2 pb{pa.x + t * (pc.x - pa.x), pa.y + t * (pc.y - pa.y)};
  const double base = std::atan2(pa.y - pb.y, pa.x - pb.x);
  const double turn = rng.uniform(30.0, 150.0) * std::numbers::pi / 180.0;
  const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const double len = rng.uniform(0.2, 0.4);
  const Point2 pd{pb.x + len * std::cos(base + side * turn), pb.y + len * std::sin(base + side * turn)};
  for (Point2 p : {pa, pb, pc, pd}) {
    if (!b.fits(p)) return std::nullopt;
    b.add(p);
  }
  const auto& pts = b.scene.points;
  b.add_line({pts[0].label, pts[1].label, pts[2].label});
  b.add_line({pts[1].label, pts[3].label});
  return b.scene;
}

std::optional<SceneSpec> try_circle(Rng& rng, double sep) {
  Builder b(rng, sep);
  const double r = rng.uniform(0.18, 0.38);
  const Point2 c{rng.uniform(kLo + r, kHi - r), rng.uniform(kLo + r, kHi - r)};
  if (!(c.x - r >= kLo && c.x + r <= kHi && c.y - r >= kLo && c.y + r <= kHi)) return std::nullopt;
  b.add(c, true);
  const std::size_t m = 3 + rng.index(2);
  std::vector<std::string> members;
  for (std::size_t i = 0; i < m; ++i) {
    const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Point2 p{c.x + r * std::cos(th), c.y + r * std::sin(th)};
    if (!b.fits(p)) return std::nullopt;
    members.push_back(b.add(p));
  }
  b.scene.circles.push_back({"O", r, order_on_circle(b.scene, "O", members)});
  b.add_line({"O", members[0]});
  return b.scene;
}

std::optional<SceneSpec> try_random(Rng& rng, const SceneConfig& cfg) {
  Builder b(rng, cfg.min_separation);
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); };
  const std::size_t n_points = pick(cfg.min_points, cfg.max_points);
  const std::size_t n_lines = pick(cfg.min_lines, cfg.max_lines);
  const std::size_t n_circles = pick(cfg.min_circles, cfg.max_circles);
  std::set<std::pair<std::string, std::string>> used_pairs;

  for (std::size_t c = 0; c < n_circles && b.scene.points.size() + 3 <= n_points; ++c) {
    const double r = rng.uniform(0.12, 0.3);
    const Point2 ctr{rng.uniform(kLo + r, kHi - r), rng.uniform(kLo + r, kHi - r)};
    if (!b.fits(ctr)) return std::nullopt;
    b.add(ctr, true);
    const std::size_t m = std::min<std::size_t>(2 + rng.index(2), n_points - b.scene.points.size());
    std::vector<std::string> members;
    for (std::size_t i = 0; i < m; ++i) {
      const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const Point2 p{ctr.x + r * std::cos(th), ctr.y + r * std::sin(th)};
      if (!b.fits(p)) return std::nullopt;
      members.push_back(b.add(p));
    }
    b.scene.circles.push_back({"O", r, order_on_circle(b.scene, "O", members)});
  }

  for (std::size_t l = 0; l < n_lines; ++l) {
    const std::size_t want = l == 0 && cfg.collinear_points >= 3 ? cfg.collinear_points : 2 + rng.index(2);
    const std::size_t room = n_points - b.scene.points.size();
    if (want > 2 && room < want) return std::nullopt;
    std::vector<std::string> members;
    Point2 p0, p1;
    if (room >= want) {
      p0 = b.random_point();
      p1 = b.random_point();
      if (dist(p0, p1) < 0.3 || !b.fits(p0)) return std::nullopt;
      members.push_back(b.add(p0));
      if (!b.fits(p1)) return std::nullopt;
      members.push_back(b.add(p1));
    } else {
      // Connect two existing points not yet joined.
      std::vector<std::string> free;
      for (const auto& p : b.scene.points) {
        if (p.label != "O") free.push_back(p.label);
      }
      if (free.size() < 2) return std::nullopt;
      const auto a = free[rng.index(free.size())];
      const auto c = free[rng.index(free.size())];
      if (a == c || used_pairs.contains({std::min(a, c), std::max(a, c)})) return std::nullopt;
      members = {a, c};
      p0 = b.scene.at(a);
      p1 = b.scene.at(c);
    }
    for (std::size_t k = 2; k < want; ++k) {
      const double t = (static_cast<double>(k - 1) + rng.uniform(-0.25, 0.25)) / static_cast<double>(want - 1);
      const Point2 p{p0.x + t * (p1.x - p0.x), p0.y + t * (p1.y - p0.y)};
      if (!b.fits(p)) return std::nullopt;
      members.push_back(b.add(p));
    }
    used_pairs.insert({std::min(members[0], members[1]), std::max(members[0], members[1])});
    b.add_line(members);
  }
  while (b.scene.points.size() < n_points) {
    if (!b.add_free()) return std::nullopt;
  }
  return b.scene;
}

}  // namespace

const Point2& SceneSpec::at(const std::string& label) const {
  for (const auto& p : points) {
    if (p.label == label) return p.at;
  }
  throw std::out_of_range("no point labeled " + label);
}

bool SceneSpec::has_point(const std::string& label) const {
  return std::any_of(points.begin(), points.end(), [&](const NamedPoint& p) { return p.label == label; });
}

std::vector<std::string> order_on_line(const SceneSpec& scene, std::vector<std::string> labels) {
  std::stable_sort(labels.begin(), labels.end(), [&](const std::string& a, const std::string& b) {
    const Point2 pa = scene.at(a), pb = scene.at(b);
    return pa.x != pb.x ? pa.x < pb.x : pa.y < pb.y;
  });
  return labels;
}

std::vector<std::string> order_on_circle(const SceneSpec& scene, const std::string& center,
                                         std::vector<std::string> labels) {
  const Point2 c = scene.at(center);
  auto bearing = [&](const std::string& l) {
    const Point2 p = scene.at(l);
    // 0 at 12 o'clock, growing clockwise on screen (y points down).
    double th = std::atan2(p.x - c.x, c.y - p.y);
    if (th < 0) th += 2.0 * std::numbers::pi;
    return th;
  };
  std::stable_sort(labels.begin(), labels.end(),
                   [&](const std::string& a, const std::string& b) { return bearing(a) < bearing(b); });
  return labels;
}

lang::FormalCaption caption_of(const SceneSpec& scene) {
  lang::FormalCaption caption;
  for (const auto& line : scene.lines) {
    std::vector<lang::PointLabel> pts;
    for (const auto& l : order_on_line(scene, line)) pts.emplace_back(l);
    caption.relations.push_back(lang::Relation::collinear(std::move(pts)));
  }
  for (const auto& circle : scene.circles) {
    std::vector<lang::PointLabel> pts;
    for (const auto& l : order_on_circle(scene, circle.center, circle.members)) pts.emplace_back(l);
    caption.relations.push_back(lang::Relation::concyclic(lang::PointLabel(circle.center), std::move(pts)));
  }
  return caption;
}

std::optional<std::string> check_scene(const SceneSpec& scene, double tol) {
  std::set<std::string> seen;
  for (const auto& p : scene.points) {
    if (!seen.insert(p.label).second) return "duplicate label " + p.label;
  }
  for (const auto& line : scene.lines) {
    if (line.size() < 2) return std::string("line with fewer than two points");
    for (const auto& l : line) {
      if (!scene.has_point(l)) return "line uses unknown point " + l;
    }
    const Point2 a = scene.at(line.front()), b = scene.at(line.back());
    const double len = dist(a, b);
    for (const auto& l : line) {
      const Point2 p = scene.at(l);
      const double cross = ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / len;
      if (std::abs(cross) > tol) return "point " + l + " is off its line";
    }
    if (order_on_line(scene, line) != line) return std::string("line points are not ordered left to right");
  }
  for (const auto& c : scene.circles) {
    if (!scene.has_point(c.center)) return "circle center " + c.center + " is not a point";
    for (const auto& l : c.members) {
      if (!scene.has_point(l)) return "circle uses unknown point " + l;
      if (std::abs(dist(scene.at(l), scene.at(c.center)) - c.radius) > tol) return "point " + l + " is off its circle";
    }
    if (order_on_circle(scene, c.center, c.members) != c.members) {
      return std::string("circle points are not clockwise");
    }
  }
  return std::nullopt;
}

SceneSpec sample_scene(Rng& rng, const SceneConfig& cfg) {
  if (cfg.min_points > cfg.max_points || cfg.min_lines > cfg.max_lines || cfg.min_circles > cfg.max_circles) {
    throw std::invalid_argument("scene config has min above max");
  }
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::optional<SceneSpec> s;
    switch (cfg.structure) {
      case Structure::Random: s = try_random(rng, cfg); break;
      case Structure::Triangle: s = try_triangle(rng, cfg.min_separation, false); break;
      case Structure::RightTriangle: s = try_triangle(rng, cfg.min_separation, true); break;
      case Structure::Polygon: s = try_polygon(rng, cfg.min_separation); break;
      case Structure::LinearPair: s = try_linear_pair(rng, cfg.min_separation); break;
      case Structure::Circle: s = try_circle(rng, cfg.min_separation); break;
    }
    if (s) return *s;
  }
  throw RetryExhausted(std::to_string(kMaxAttempts) + " rejected attempts");
}

}  // namespace geoformal::synth
