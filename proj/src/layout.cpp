#include "layout.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "error.hpp"

namespace hcm {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Uniform in [0, 1) from the raw 64-bit engine output, so layouts do not
// depend on the standard library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Geometry unit_disk_with(const std::vector<Point>& centers, double radius) {
  std::vector<Shape> inclusions;
  inclusions.reserve(centers.size());
  for (Point c : centers) inclusions.push_back(Circle{c, radius});
  return Geometry(Circle{{0.0, 0.0}, 1.0}, std::move(inclusions));
}

// Largest-remainder apportionment of `total` proportional to weights.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = total * weights[k] / wsum;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    rema.emplace_back(exact - counts[k], k);
  }
  std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[rema[i % rema.size()].second];
  return counts;
}

std::vector<Point> rings_centers(std::size_t n, double radius, std::size_t rings, std::mt19937_64& rng) {
  std::vector<Point> centers{{0.0, 0.0}};
  if (n == 1 || rings == 0) return centers;
  const double spacing = (1.0 - radius) / (static_cast<double>(rings) + 0.5);
  std::vector<double> weights;
  for (std::size_t k = 1; k <= rings; ++k) weights.push_back(static_cast<double>(k));
  const auto counts = apportion(n - 1, weights);
  for (std::size_t k = 0; k < rings; ++k) {
    const double rho = spacing * static_cast<double>(k + 1);
    const std::size_t cnt = counts[k];
    if (cnt == 0) continue;
    const double phase = unit_uniform(rng) * kTwoPi / static_cast<double>(cnt);
    for (std::size_t i = 0; i < cnt; ++i) {
      const double t = phase + kTwoPi * static_cast<double>(i) / static_cast<double>(cnt);
      centers.push_back({rho * std::cos(t), rho * std::sin(t)});
    }
  }
  return centers;
}

double layout_quality(const Geometry& g) {
  const auto r = g.validate();
  return std::min(r.min_separation, r.min_clearance);
}

Geometry make_rings(std::size_t n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::optional<Geometry> best;
  double best_q = -INFINITY;
  for (std::size_t rings = 1; rings <= 16 && rings < n; ++rings) {
    Geometry g = unit_disk_with(rings_centers(n, radius, rings, rng), radius);
    const double q = layout_quality(g);
    if (q > best_q) {
      best_q = q;
      best = std::move(g);
    }
  }
  if (!best) best = unit_disk_with(rings_centers(n, radius, 0, rng), radius);
  return *best;
}

Geometry make_jittered_grid(std::size_t n, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double reach = 1.0 - 1.5 * radius;
  if (reach <= 0.0) throw Error(ErrorCode::GeometryInvalid, "inclusion radius too large for the unit disk");
  auto grid = [&](double a) {
    std::vector<Point> pts;
    const int half = static_cast<int>(std::ceil(reach / a)) + 1;
    for (int i = -half; i <= half; ++i)
      for (int j = -half; j <= half; ++j) {
        const Point p{a * i, a * j};
        if (norm(p) <= reach) pts.push_back(p);
      }
    std::stable_sort(pts.begin(), pts.end(), [](Point p, Point q) {
      const double dp = norm(p), dq = norm(q);
      if (dp != dq) return dp < dq;
      return std::atan2(p.y, p.x) < std::atan2(q.y, q.x);
    });
    return pts;
  };
  double a = 2.0;
  std::vector<Point> pts = grid(a);
  while (pts.size() < n) {
    a *= 0.99;
    if (a < 2.5 * radius) throw Error(ErrorCode::GeometryInvalid, "jittered-grid layout cannot fit the requested inclusions");
    pts = grid(a);
  }
  pts.resize(n);
  const double jitter = std::max(0.0, 0.25 * (a - 2.5 * radius));
  for (auto& p : pts) {
    const Point q{p.x + jitter * (2.0 * unit_uniform(rng) - 1.0), p.y + jitter * (2.0 * unit_uniform(rng) - 1.0)};
    // Keep the clearance to the outer circle.
    if (norm(q) <= 1.0 - 1.5 * radius) p = q;
  }
  return unit_disk_with(pts, radius);
}

}  // namespace

LayoutPattern parse_layout_pattern(const std::string& name) {
  if (name == "rings") return LayoutPattern::Rings;
  if (name == "jittered-grid") return LayoutPattern::JitteredGrid;
  throw Error(ErrorCode::InvalidArgument, "unknown layout pattern '" + name + "' (expected rings or jittered-grid)");
}

Geometry make_layout(std::size_t n, double radius, LayoutPattern pattern, std::uint64_t seed) {
  if (!(radius > 0.0) || radius >= 1.0) throw Error(ErrorCode::InvalidArgument, "inclusion radius must be in (0, 1)");
  if (n == 0) return Geometry(Circle{{0.0, 0.0}, 1.0}, {});
  Geometry g = pattern == LayoutPattern::Rings ? make_rings(n, radius, seed) : make_jittered_grid(n, radius, seed);
  const auto report = g.validate();
  if (!report.ok || report.min_separation < 0.5 * radius || report.min_clearance < 0.5 * radius)
    throw Error(ErrorCode::GeometryInvalid, "no feasible layout for " + std::to_string(n) + " inclusions of radius " +
                                                std::to_string(radius) + " (best separation " +
                                                std::to_string(report.min_separation) + ")");
  return g;
}

}  // namespace hcm
