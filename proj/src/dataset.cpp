#include "qsdc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "qsdc/errors.hpp"

namespace qsdc {

namespace {

struct Vec2 {
  double x;
  double y;
};

// Signed distance to a convex polygon (negative inside).
double polygon_sdf(Vec2 p, std::span<const Vec2> poly) {
  double best = 1e9;
  bool inside = true;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % poly.size()];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double px = p.x - a.x, py = p.y - a.y;
    const double t = std::clamp((px * ex + py * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    const double dx = px - t * ex, dy = py - t * ey;
    best = std::min(best, std::sqrt(dx * dx + dy * dy));
    if (ex * py - ey * px < 0.0) inside = false;
  }
  return inside ? -best : best;
}

double box_sdf(Vec2 p, double hx, double hy) {
  const double dx = std::abs(p.x) - hx, dy = std::abs(p.y) - hy;
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
}

// Local coordinates: p is already translated and rotated; r is the size, t the stroke.
double shape_sdf(int cls, Vec2 p, double r, double t) {
  switch (cls) {
    case 0:  // filled square
      return box_sdf(p, r, r);
    case 1:  // hollow square
      return std::abs(box_sdf(p, r, r)) - t;
    case 2:  // disc
      return std::hypot(p.x, p.y) - r;
    case 3:  // ring
      return std::abs(std::hypot(p.x, p.y) - r) - t;
    case 4: {  // triangle, counter-clockwise
      const std::array<Vec2, 3> tri{Vec2{0.0, -r}, Vec2{-r, 0.8 * r}, Vec2{r, 0.8 * r}};
      std::array<Vec2, 3> ccw{tri[0], tri[2], tri[1]};
      // orientation depends on the y-down image frame; pick whichever is CCW
      const double cross = (tri[1].x - tri[0].x) * (tri[2].y - tri[0].y) - (tri[1].y - tri[0].y) * (tri[2].x - tri[0].x);
      return cross > 0 ? polygon_sdf(p, tri) : polygon_sdf(p, ccw);
    }
    case 5:  // plus
      return std::min(box_sdf(p, r, t), box_sdf(p, t, r));
    case 6: {  // diagonal cross
      const double c = std::numbers::sqrt2 / 2.0;
      const Vec2 q{c * (p.x - p.y), c * (p.x + p.y)};
      return std::min(box_sdf(q, r, t), box_sdf(q, t, r));
    }
    case 7:  // two horizontal bars
      return std::min(box_sdf({p.x, p.y - 0.5 * r}, r, t), box_sdf({p.x, p.y + 0.5 * r}, r, t));
    case 8:  // two vertical bars
      return std::min(box_sdf({p.x - 0.5 * r, p.y}, t, r), box_sdf({p.x + 0.5 * r, p.y}, t, r));
    default: {  // diamond
      const double c = std::numbers::sqrt2 / 2.0;
      const Vec2 q{c * (p.x - p.y), c * (p.x + p.y)};
      return box_sdf(q, 0.75 * r, 0.75 * r);
    }
  }
}

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::round(c * 255.0) / 255.0);
}

}  // namespace

ImageSet generate_shapes(std::size_t count, std::uint64_t seed, std::size_t side) {
  if (side < 12) throw ConfigError("generate_shapes: side must be at least 12");
  ImageSet set;
  set.images = Tensor4({count, 1, side, side});
  set.labels.resize(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = static_cast<double>(side);
  for (std::size_t i = 0; i < count; ++i) {
    const int cls = static_cast<int>(i % kShapeClasses);
    set.labels[i] = cls;
    const double r = s * (0.17 + 0.12 * unit(rng));
    const double t = std::max(1.0, s * (0.035 + 0.03 * unit(rng)));
    const double margin = r + t + 1.0;
    const double cx = margin + (s - 2.0 * margin) * unit(rng);
    const double cy = margin + (s - 2.0 * margin) * unit(rng);
    const double angle = (unit(rng) - 0.5) * 0.5;
    const double intensity = 0.55 + 0.45 * unit(rng);
    const double background = 0.15 * unit(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const Vec2 p{ca * dx + sa * dy, -sa * dx + ca * dy};
        const double coverage = std::clamp(0.5 - shape_sdf(cls, p, r, t), 0.0, 1.0);
        const double clutter = background * unit(rng);
        set.images(i, 0, y, x) = quantize(clutter + coverage * (intensity - clutter));
      }
    }
  }
  // interleave classes randomly
  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  ImageSet shuffled;
  shuffled.images = Tensor4(set.images.shape());
  shuffled.labels.resize(count);
  const std::size_t per = side * side;
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(set.images.data().begin() + static_cast<std::ptrdiff_t>(perm[i] * per), per,
                shuffled.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    shuffled.labels[i] = set.labels[perm[i]];
  }
  return shuffled;
}

namespace {

void put_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw TruncatedError("IDX: truncated header in " + path.string());
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_idx_images(const Tensor4& images, const std::filesystem::path& path) {
  if (images.c() != 1) throw ConfigError("IDX images must be single-channel");
  auto out = open_out(path);
  put_be32(out, 0x00000803);
  put_be32(out, static_cast<std::uint32_t>(images.n()));
  put_be32(out, static_cast<std::uint32_t>(images.h()));
  put_be32(out, static_cast<std::uint32_t>(images.w()));
  std::vector<char> bytes(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(images.data()[i], 0.0f, 1.0f) * 255.0f)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_idx_labels(const std::vector<int>& labels, const std::filesystem::path& path) {
  auto out = open_out(path);
  put_be32(out, 0x00000801);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.put(static_cast<char>(static_cast<unsigned char>(l)));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor4 read_idx_images(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (get_be32(in, path) != 0x00000803) throw BadMagicError("IDX: bad image magic in " + path.string());
  const std::size_t n = get_be32(in, path);
  const std::size_t h = get_be32(in, path);
  const std::size_t w = get_be32(in, path);
  std::vector<unsigned char> bytes(n * h * w);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw TruncatedError("IDX: truncated image payload in " + path.string());
  }
  Tensor4 out({n, 1, h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) out.data()[i] = static_cast<float>(bytes[i]) / 255.0f;
  return out;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (get_be32(in, path) != 0x00000801) throw BadMagicError("IDX: bad label magic in " + path.string());
  const std::size_t n = get_be32(in, path);
  std::vector<unsigned char> bytes(n);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n))) {
    throw TruncatedError("IDX: truncated label payload in " + path.string());
  }
  return {bytes.begin(), bytes.end()};
}

ImageSet load_idx_set(const std::filesystem::path& dir, const std::string& prefix) {
  ImageSet set;
  set.images = read_idx_images(dir / (prefix + "-images.idx3-ubyte"));
  set.labels = read_idx_labels(dir / (prefix + "-labels.idx1-ubyte"));
  if (set.images.n() != set.labels.size()) throw ParseError("IDX: image/label count mismatch for " + prefix);
  return set;
}

void save_idx_set(const ImageSet& set, const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  write_idx_images(set.images, dir / (prefix + "-images.idx3-ubyte"));
  write_idx_labels(set.labels, dir / (prefix + "-labels.idx1-ubyte"));
}

}  // namespace qsdc
