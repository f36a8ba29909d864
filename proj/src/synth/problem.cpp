#include "geoformal/synth/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

#include "geoformal/solver/interpreter.hpp"
#include "geoformal/solver/operators.hpp"

namespace geoformal::synth {

namespace {

using Labels = std::vector<std::string>;

double round1(double v) { return std::round(v * 10.0) / 10.0; }

double dist(const SceneSpec& s, const std::string& a, const std::string& b) {
  const Point2 p = s.at(a), q = s.at(b);
  return std::hypot(p.x - q.x, p.y - q.y);
}

// Angle at v in degrees.
double angle_deg(const SceneSpec& s, const std::string& v, const std::string& a, const std::string& b) {
  const Point2 pv = s.at(v), pa = s.at(a), pb = s.at(b);
  const double ux = pa.x - pv.x, uy = pa.y - pv.y, wx = pb.x - pv.x, wy = pb.y - pv.y;
  const double c = (ux * wx + uy * wy) / (std::hypot(ux, uy) * std::hypot(wx, wy));
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

bool joined(const SceneSpec& s, const std::string& a, const std::string& b) {
  return std::any_of(s.lines.begin(), s.lines.end(), [&](const Labels& line) {
    return std::find(line.begin(), line.end(), a) != line.end() && std::find(line.begin(), line.end(), b) != line.end();
  });
}

bool same_line(const SceneSpec& s, const std::string& a, const std::string& b, const std::string& c) {
  return std::any_of(s.lines.begin(), s.lines.end(), [&](const Labels& line) {
    auto has = [&](const std::string& x) { return std::find(line.begin(), line.end(), x) != line.end(); };
    return has(a) && has(b) && has(c);
  });
}

std::vector<Labels> triangles(const SceneSpec& s) {
  std::vector<Labels> out;
  const auto& pts = s.points;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        const auto &a = pts[i].label, &b = pts[j].label, &c = pts[k].label;
        if (joined(s, a, b) && joined(s, b, c) && joined(s, a, c) && !same_line(s, a, b, c)) out.push_back({a, b, c});
      }
    }
  }
  return out;
}

// Triangle rotated so the right angle sits in the middle.
std::optional<Labels> right_triangle(const SceneSpec& s) {
  for (const auto& t : triangles(s)) {
    for (std::size_t v = 0; v < 3; ++v) {
      const auto& a = t[(v + 2) % 3];
      const auto& b = t[v];
      const auto& c = t[(v + 1) % 3];
      const Point2 pa = s.at(a), pb = s.at(b), pc = s.at(c);
      const double dot = (pa.x - pb.x) * (pc.x - pb.x) + (pa.y - pb.y) * (pc.y - pb.y);
      if (std::abs(dot) <= 1e-9 * dist(s, a, b) * dist(s, b, c)) return Labels{a, b, c};
    }
  }
  return std::nullopt;
}

// Vertex cycle when the scene's lines form one closed regular polygon.
std::optional<Labels> regular_polygon(const SceneSpec& s) {
  if (s.lines.size() < 4 || s.points.size() != s.lines.size() || !s.circles.empty()) return std::nullopt;
  for (const auto& l : s.lines) {
    if (l.size() != 2) return std::nullopt;
  }
  Labels cycle{s.points.front().label};
  std::set<std::string> seen{cycle.front()};
  while (cycle.size() < s.points.size()) {
    std::optional<std::string> next;
    for (const auto& l : s.lines) {
      for (std::size_t e = 0; e < 2; ++e) {
        if (l[e] == cycle.back() && !seen.contains(l[1 - e])) next = l[1 - e];
      }
      if (next) break;
    }
    if (!next) return std::nullopt;
    seen.insert(*next);
    cycle.push_back(*next);
  }
  if (!joined(s, cycle.back(), cycle.front())) return std::nullopt;
  const double side = dist(s, cycle[0], cycle[1]);
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (std::abs(dist(s, cycle[i], cycle[(i + 1) % cycle.size()]) - side) > 1e-9) return std::nullopt;
  }
  return cycle;
}

// {A, B, C, D}: B strictly inside line A..C and a second line through B and D.
std::optional<Labels> linear_pair(const SceneSpec& s) {
  for (const auto& line : s.lines) {
    for (std::size_t i = 1; i + 1 < line.size(); ++i) {
      const auto& b = line[i];
      for (const auto& other : s.lines) {
        if (&other == &line) continue;
        if (std::find(other.begin(), other.end(), b) == other.end()) continue;
        for (const auto& d : other) {
          if (d != b && std::find(line.begin(), line.end(), d) == line.end()) {
            return Labels{line.front(), b, line.back(), d};
          }
        }
      }
    }
  }
  return std::nullopt;
}

// {O, A}: a circle with a member, preferring one joined to the center.
std::optional<Labels> circle_radius(const SceneSpec& s) {
  for (const auto& c : s.circles) {
    if (c.members.empty()) continue;
    for (const auto& m : c.members) {
      if (joined(s, c.center, m)) return Labels{c.center, m};
    }
    return Labels{c.center, c.members.front()};
  }
  return std::nullopt;
}

Labels split(std::string_view text) {
  Labels out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto j = text.find(' ', i);
    const auto end = j == std::string_view::npos ? text.size() : j;
    if (end > i) out.emplace_back(text.substr(i, end - i));
    i = end + 1;
  }
  return out;
}

// Replaces {0}, {1}, ... with point labels.
Labels question_of(std::string_view pattern, const Labels& pts) {
  Labels words = split(pattern);
  for (auto& w : words) {
    if (w.size() == 3 && w.front() == '{' && w.back() == '}') w = pts.at(static_cast<std::size_t>(w[1] - '0'));
  }
  return words;
}

struct Instance {
  Labels question;
  std::vector<double> numbers;
  std::string program;
};

std::optional<Instance> instantiate(const SceneSpec& s, Template kind, Rng& rng) {
  const double scale = rng.uniform(10.0, 30.0);
  auto len = [&](const std::string& a, const std::string& b) { return std::max(0.1, round1(dist(s, a, b) * scale)); };
  switch (kind) {
    case Template::Hypotenuse: {
      const auto t = right_triangle(s);
      if (!t) return std::nullopt;
      return Instance{question_of("in right triangle {0} {1} {2} , the legs are {0} {1} = N_0 and {1} {2} = N_1 , "
                                  "find the hypotenuse {0} {2}",
                                  *t),
                      {len((*t)[0], (*t)[1]), len((*t)[1], (*t)[2])},
                      "gougu_add N_0 N_1"};
    }
    case Template::Leg: {
      const auto t = right_triangle(s);
      if (!t) return std::nullopt;
      const double hyp = len((*t)[0], (*t)[2]);
      const double leg = std::min(len((*t)[0], (*t)[1]), hyp - 0.1);
      return Instance{question_of("in right triangle {0} {1} {2} , the hypotenuse {0} {2} = N_0 and the leg "
                                  "{0} {1} = N_1 , find the length of {1} {2}",
                                  *t),
                      {hyp, leg},
                      "gougu_minus N_0 N_1"};
    }
    case Template::TrianglePerimeter: {
      const auto all = triangles(s);
      if (all.empty()) return std::nullopt;
      const auto& t = all[rng.index(all.size())];
      return Instance{question_of("triangle {0} {1} {2} has sides {0} {1} = N_0 , {1} {2} = N_1 and {0} {2} = N_2 , "
                                  "find the perimeter",
                                  t),
                      {len(t[0], t[1]), len(t[1], t[2]), len(t[0], t[2])},
                      "Sum N_0 N_1 N_2"};
    }
    case Template::ThirdAngle: {
      const auto all = triangles(s);
      if (all.empty()) return std::nullopt;
      const auto& t = all[rng.index(all.size())];
      const double a = std::max(1.0, std::round(angle_deg(s, t[0], t[1], t[2])));
      const double b = std::max(1.0, std::min(178.0 - a, std::round(angle_deg(s, t[1], t[0], t[2]))));
      return Instance{question_of("in triangle {0} {1} {2} , angle {0} = N_0 degrees and angle {1} = N_1 degrees , "
                                  "find angle {2}",
                                  t),
                      {a, b},
                      "g_add N_0 N_1 g_minus 180.0 V_0"};
    }
    case Template::PolygonPerimeter: {
      const auto cyc = regular_polygon(s);
      if (!cyc) return std::nullopt;
      Labels q{"regular", "polygon"};
      q.insert(q.end(), cyc->begin(), cyc->end());
      for (const auto& w : split("has N_1 sides , each side = N_0 , find the perimeter")) q.push_back(w);
      return Instance{q, {len((*cyc)[0], (*cyc)[1]), static_cast<double>(cyc->size())}, "PRK_Perim N_0 N_1"};
    }
    case Template::Supplementary: {
      const auto lp = linear_pair(s);
      if (!lp) return std::nullopt;
      const double a = std::clamp(std::round(angle_deg(s, (*lp)[1], (*lp)[0], (*lp)[3])), 1.0, 179.0);
      return Instance{question_of("point {1} lies on line {0} {2} , angle {0} {1} {3} = N_0 degrees , "
                                  "find angle {3} {1} {2}",
                                  *lp),
                      {a},
                      "g_minus 180.0 N_0"};
    }
    case Template::CirclePerimeter:
    case Template::CircleArea: {
      const auto cr = circle_radius(s);
      if (!cr) return std::nullopt;
      const bool area = kind == Template::CircleArea;
      return Instance{question_of(area ? "circle with center {0} has radius {0} {1} = N_0 , find the area"
                                       : "circle with center {0} has radius {0} {1} = N_0 , find the perimeter",
                                  *cr),
                      {len((*cr)[0], (*cr)[1])},
                      area ? "cal_circle_area N_0" : "cal_circle_perimeter N_0"};
    }
  }
  return std::nullopt;
}

constexpr Template kAllTemplates[] = {
    Template::Hypotenuse,    Template::Leg,           Template::TrianglePerimeter, Template::ThirdAngle,
    Template::PolygonPerimeter, Template::Supplementary, Template::CirclePerimeter, Template::CircleArea,
};

constexpr Structure kDatasetStructures[] = {
    Structure::RightTriangle, Structure::Triangle, Structure::Polygon, Structure::LinearPair, Structure::Circle,
};

}  // namespace

std::string_view template_name(Template t) {
  switch (t) {
    case Template::Hypotenuse: return "hypotenuse";
    case Template::Leg: return "leg";
    case Template::TrianglePerimeter: return "triangle_perimeter";
    case Template::ThirdAngle: return "third_angle";
    case Template::PolygonPerimeter: return "polygon_perimeter";
    case Template::Supplementary: return "supplementary";
    case Template::CirclePerimeter: return "circle_perimeter";
    case Template::CircleArea: return "circle_area";
  }
  return "?";
}

std::string SyntheticProblem::question() const {
  std::string out;
  for (const auto& w : question_tokens) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<Template> applicable_templates(const SceneSpec& scene) {
  std::vector<Template> out;
  const bool tri = !triangles(scene).empty();
  const bool right = right_triangle(scene).has_value();
  const bool poly = regular_polygon(scene).has_value();
  const bool pair = linear_pair(scene).has_value();
  const bool circ = circle_radius(scene).has_value();
  for (Template t : kAllTemplates) {
    bool ok = false;
    switch (t) {
      case Template::Hypotenuse:
      case Template::Leg: ok = right; break;
      case Template::TrianglePerimeter:
      case Template::ThirdAngle: ok = tri; break;
      case Template::PolygonPerimeter: ok = poly; break;
      case Template::Supplementary: ok = pair; break;
      case Template::CirclePerimeter:
      case Template::CircleArea: ok = circ; break;
    }
    if (ok) out.push_back(t);
  }
  return out;
}

std::vector<double> make_choices(double answer, Rng& rng, ChoiceScheme scheme) {
  const double key = round1(answer);
  std::vector<double> out{answer};
  auto fresh = [&](double v) {
    if (v == key || v <= 0.0 || !std::isfinite(v)) return false;
    return std::none_of(out.begin() + 1, out.end(), [&](double o) { return o == v; });
  };
  // Count of distractors below the answer; Bracket keeps one on each side
  // plus a third on a random side.
  std::size_t below = 0;
  if (scheme == ChoiceScheme::Spread) {
    below = rng.index(4);
  } else {
    below = rng.uniform() < 0.5 ? 1 : 2;
  }
  // The first distractor on a side uses 0.5 or 2; the rest a random factor
  // from [0.7, 0.95] or [1.05, 1.3].
  auto factor = [&](bool low, std::size_t k) {
    if (k == 0) return low ? 0.5 : 2.0;
    return low ? rng.uniform(0.7, 0.95) : rng.uniform(1.05, 1.3);
  };
  auto push = [&](bool low, std::size_t k) {
    double v = round1(answer * factor(low, k));
    for (int tries = 0; tries < 50 && !fresh(v); ++tries) v = round1(answer * factor(low, 1));
    // Tiny answers round onto each other; step away instead.
    for (int j = 1; !fresh(v); ++j) v = round1(low && key - 0.1 * j > 0.0 ? key - 0.1 * j : key + 0.1 * j);
    out.push_back(v);
  };
  for (std::size_t k = 0; k < below; ++k) push(true, k);
  for (std::size_t k = 0; k < 3 - below; ++k) push(false, k);
  for (std::size_t i = out.size() - 1; i > 0; --i) std::swap(out[i], out[rng.index(i + 1)]);
  return out;
}

SyntheticProblem make_problem(const SceneSpec& scene, Template kind, Rng& rng, const ProblemConfig& cfg) {
  auto inst = instantiate(scene, kind, rng);
  if (!inst) throw NoTemplateApplies();
  SyntheticProblem p;
  p.kind = kind;
  p.scene = scene;
  p.diagram = rasterize(scene, cfg.image_size, cfg.image_size, cfg.patch);
  p.caption = caption_of(scene);
  p.question_tokens = std::move(inst->question);
  p.numbers = std::move(inst->numbers);
  p.gt_program = solver::parse_program(inst->program);
  auto bindings = solver::Bindings::with_numbers(p.numbers);
  p.answer = solver::execute_program(p.gt_program, bindings).final;
  if (cfg.with_choices) p.choices = make_choices(p.answer, rng, cfg.choice_scheme);
  return p;
}

SyntheticProblem make_problem(const SceneSpec& scene, Rng& rng, const ProblemConfig& cfg) {
  std::vector<Template> options;
  for (Template t : applicable_templates(scene)) {
    if (cfg.allowed.empty() || std::find(cfg.allowed.begin(), cfg.allowed.end(), t) != cfg.allowed.end()) {
      options.push_back(t);
    }
  }
  if (options.empty()) throw NoTemplateApplies();
  return make_problem(scene, options[rng.index(options.size())], rng, cfg);
}

std::vector<SyntheticProblem> generate_dataset(std::size_t n, std::uint64_t seed, const ProblemConfig& cfg,
                                               std::size_t jobs) {
  std::vector<SyntheticProblem> out(n);
  const Rng root(seed);
  auto one = [&](std::size_t i) {
    Rng rng = root.split(i);
    for (;;) {
      SceneConfig sc;
      sc.structure = kDatasetStructures[rng.index(std::size(kDatasetStructures))];
      const SceneSpec scene = sample_scene(rng, sc);
      try {
        out[i] = make_problem(scene, rng, cfg);
        break;
      } catch (const NoTemplateApplies&) {
        // cfg.allowed may exclude every template of this structure.
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", i);
    out[i].id = id;
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) one(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(jobs);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += jobs) one(i);
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

solver::ProblemRecord to_record(const SyntheticProblem& p) {
  solver::ProblemRecord r;
  r.id = p.id;
  r.numbers = p.numbers;
  r.choices = p.choices;
  r.answer = p.answer;
  r.gt_program = lang::format_program(p.gt_program);
  r.caption = lang::format_caption(p.caption);
  r.question_tokens = p.question_tokens;
  r.diagram = "diagrams/" + p.id + ".pgm";
  return r;
}

void write_dataset(const std::vector<SyntheticProblem>& problems, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "diagrams");
  std::vector<solver::ProblemRecord> records;
  records.reserve(problems.size());
  std::ofstream captions(dir / "captions.txt", std::ios::binary);
  if (!captions) throw DataError("cannot write " + (dir / "captions.txt").string());
  for (const auto& p : problems) {
    records.push_back(to_record(p));
    write_pgm(p.diagram, dir / records.back().diagram);
    captions << "# " << p.id << '\n' << records.back().caption << "\n\n";
  }
  solver::write_problems(records, dir / "problems.jsonl");
  lang::write_vocab(solver::standard_vocab(), dir / "vocab.txt");
}

}  // namespace geoformal::synth
