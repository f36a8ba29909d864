#include "geoformal/synth/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace geoformal::synth {

namespace {

struct Canvas {
  Diagram& d;

  void set(long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(d.height) || c >= static_cast<long>(d.width)) return;
    d.pixels[static_cast<std::size_t>(r) * d.width + static_cast<std::size_t>(c)] = 1.0;
  }

  long col(double x) const { return std::lround(x * static_cast<double>(d.width - 1)); }
  long row(double y) const { return std::lround(y * static_cast<double>(d.height - 1)); }

  void segment(Point2 a, Point2 b) {
    long x0 = col(a.x), y0 = row(a.y);
    const long x1 = col(b.x), y1 = row(b.y);
    const long dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const long dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
      set(y0, x0);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void circle(Point2 c, double radius) {
    const double cx = c.x * static_cast<double>(d.width - 1);
    const double cy = c.y * static_cast<double>(d.height - 1);
    const double rx = radius * static_cast<double>(d.width - 1);
    const double ry = radius * static_cast<double>(d.height - 1);
    const auto steps = static_cast<std::size_t>(std::ceil(8.0 * std::numbers::pi * std::max(rx, ry))) + 8;
    for (std::size_t k = 0; k < steps; ++k) {
      const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(steps);
      set(std::lround(cy + ry * std::sin(th)), std::lround(cx + rx * std::cos(th)));
    }
  }

  void dot(Point2 p) {
    const long r = row(p.y), c = col(p.x);
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) set(r + dr, c + dc);
    }
  }
};

}  // namespace

Diagram rasterize(const SceneSpec& scene, std::size_t height, std::size_t width, std::size_t patch) {
  if (height < 32 || width < 32) throw std::invalid_argument("rasterize: image must be at least 32x32");
  Diagram d{height, width, patch, std::vector<double>(height * width, 0.0)};
  Canvas canvas{d};
  for (const auto& line : scene.lines) {
    if (line.size() < 2) continue;
    // Members are ordered along the line, so the extremes span it.
    const auto ordered = order_on_line(scene, line);
    canvas.segment(scene.at(ordered.front()), scene.at(ordered.back()));
  }
  for (const auto& c : scene.circles) canvas.circle(scene.at(c.center), c.radius);
  for (const auto& p : scene.points) canvas.dot(p.at);
  return d;
}

tensor::Tensor patchify(const Diagram& d) {
  const std::size_t p = d.patch;
  if (p == 0 || d.height % p != 0 || d.width % p != 0) {
    throw tensor::ShapeMismatch("patchify: " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                                " image is not divisible into " + std::to_string(p) + "px patches");
  }
  const std::size_t ph = d.height / p, pw = d.width / p;
  std::vector<double> out;
  out.reserve(d.height * d.width);
  for (std::size_t i = 0; i < ph; ++i) {
    for (std::size_t j = 0; j < pw; ++j) {
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) out.push_back(d.at(i * p + r, j * p + c));
      }
    }
  }
  return tensor::Tensor({ph * pw, p * p}, std::move(out));
}

Diagram unpatchify(const tensor::Tensor& patches, std::size_t height, std::size_t width, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0 ||
      patches.shape() != tensor::Shape{(height / patch) * (width / patch), patch * patch}) {
    throw tensor::ShapeMismatch("unpatchify: patches " + tensor::shape_str(patches.shape()) + " do not tile " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  Diagram d{height, width, patch, std::vector<double>(height * width)};
  const std::size_t pw = width / patch;
  for (std::size_t n = 0; n < patches.rows(); ++n) {
    const std::size_t i = n / pw, j = n % pw;
    for (std::size_t r = 0; r < patch; ++r) {
      for (std::size_t c = 0; c < patch; ++c) {
        d.pixels[(i * patch + r) * width + j * patch + c] = patches.at(n, r * patch + c);
      }
    }
  }
  return d;
}

void write_pgm(const Diagram& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << d.width << " " << d.height << "\n255\n";
  for (double v : d.pixels) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  if (!out) throw DataError("short write to " + path.string());
}

Diagram read_pgm(const std::filesystem::path& path, std::size_t patch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  auto next = [&](auto& v) {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
      in >> std::ws;
    }
    in >> v;
  };
  next(magic);
  next(w);
  next(h);
  next(maxval);
  if (!in || magic != "P5" || maxval == 0 || maxval > 255 || w == 0 || h == 0) {
    throw DataError(path.string() + ": not an 8-bit P5 graymap");
  }
  in.get();
  Diagram d{h, w, patch, std::vector<double>(w * h)};
  for (auto& v : d.pixels) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw DataError(path.string() + ": truncated pixel data");
    v = static_cast<double>(c) / static_cast<double>(maxval);
  }
  return d;
}

}  // namespace geoformal::synth
