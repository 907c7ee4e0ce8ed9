#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace hcm {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point a, Point b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
inline double distance(Point a, Point b) { return norm(a - b); }

// Distance from p to the closed segment [a, b].
double segment_distance(Point p, Point a, Point b);

// Region index: 0 is the background, m >= 1 is inclusion m.
struct RegionId {
  std::size_t value = 0;

  constexpr bool is_background() const noexcept { return value == 0; }
  friend constexpr bool operator==(RegionId a, RegionId b) { return a.value == b.value; }
  friend constexpr bool operator!=(RegionId a, RegionId b) { return a.value != b.value; }
};

struct Circle {
  Point center;
  double radius = 0.0;
};

// Simple polygon, vertices in counterclockwise order (normalized on construction).
struct Polygon {
  std::vector<Point> vertices;
};

using Shape = std::variant<Circle, Polygon>;

// Closed-set membership and distances for a single shape.
bool shape_contains(const Shape& s, Point p);           // closed set
double shape_distance(const Shape& s, Point p);         // 0 inside
double shape_boundary_distance(const Shape& s, Point p);  // |signed distance|
double shape_diameter(const Shape& s);
Polygon normalized(Polygon poly);

using RegionPredicate = std::function<bool(Point)>;

struct ValidationReport {
  bool ok = true;
  double min_separation = INFINITY;  // over inclusion pairs; +inf for M < 2
  double min_clearance = INFINITY;   // inclusion to outer boundary; +inf for M = 0
  std::size_t closest_a = 0;         // 1-based inclusion ids of the closest pair
  std::size_t closest_b = 0;
  std::string message;
};

// Composite geometry: outer boundary plus M inclusions. Immutable after
// construction.
class Geometry {
public:
  Geometry(Shape outer, std::vector<Shape> inclusions);

  const Shape& outer() const noexcept { return outer_; }
  const std::vector<Shape>& inclusions() const noexcept { return inclusions_; }
  std::size_t inclusion_count() const noexcept { return inclusions_.size(); }
  const Shape& inclusion(RegionId m) const;

  bool in_domain(Point p) const;
  RegionId classify_point(Point p) const;
  double distance_to_inclusion(RegionId m, Point p) const;
  double distance_to_outer_boundary(Point p) const;
  double diameter() const { return shape_diameter(outer_); }

  RegionPredicate delta_neighborhood(RegionId m, double delta) const;
  RegionPredicate boundary_strip(double delta) const;

  ValidationReport validate() const;
  void require_valid() const;

private:
  Shape outer_;
  std::vector<Shape> inclusions_;
};

// JSON with the shape {"domain": {...}, "inclusions": [{...}, ...]} where each
// shape is {"circle": {"center": [x, y], "radius": r}} or {"polygon": [[x, y], ...]}.
Geometry geometry_from_json(const std::string& text);
Geometry load_geometry(const std::string& path);
std::string geometry_to_json(const Geometry& g);

}  // namespace hcm
