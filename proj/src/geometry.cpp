#include "geometry.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "error.hpp"
#include "json.hpp"

namespace hcm {
namespace {

constexpr double kOnBoundaryTol = 1e-13;

double signed_area(const std::vector<Point>& v) {
  double a = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) a += cross(v[i], v[(i + 1) % n]);
  return 0.5 * a;
}

bool polygon_contains_strict(const Polygon& poly, Point p) {
  // Crossing number; boundary handled by the caller.
  bool inside = false;
  const auto& v = poly.vertices;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > p.y) != (v[j].y > p.y)) {
      const double xc = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

double polygon_boundary_distance(const Polygon& poly, Point p) {
  double d = std::numeric_limits<double>::infinity();
  const auto& v = poly.vertices;
  for (std::size_t i = 0, n = v.size(); i < n; ++i)
    d = std::min(d, segment_distance(p, v[i], v[(i + 1) % n]));
  return d;
}

bool segments_intersect(Point a, Point b, Point c, Point d) {
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  return segment_distance(c, a, b) == 0.0 || segment_distance(d, a, b) == 0.0 ||
         segment_distance(a, c, d) == 0.0 || segment_distance(b, c, d) == 0.0;
}

// Distance between the boundaries of two polygons, or -1 when they cross.
double polygon_boundary_gap(const Polygon& p, const Polygon& q) {
  double d = std::numeric_limits<double>::infinity();
  const auto& a = p.vertices;
  const auto& b = q.vertices;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point a0 = a[i], a1 = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      const Point b0 = b[j], b1 = b[(j + 1) % b.size()];
      if (segments_intersect(a0, a1, b0, b1)) return -1.0;
      d = std::min({d, segment_distance(a0, b0, b1), segment_distance(a1, b0, b1),
                    segment_distance(b0, a0, a1), segment_distance(b1, a0, a1)});
    }
  }
  return d;
}

// Positive gap between two disjoint shapes; <= 0 when they touch or overlap.
double shape_separation(const Shape& s, const Shape& t) {
  if (auto* a = std::get_if<Circle>(&s)) {
    if (auto* b = std::get_if<Circle>(&t))
      return distance(a->center, b->center) - a->radius - b->radius;
    const auto& poly = std::get<Polygon>(t);
    if (shape_contains(t, a->center)) return -1.0;
    return polygon_boundary_distance(poly, a->center) - a->radius;
  }
  if (std::holds_alternative<Circle>(t)) return shape_separation(t, s);
  const auto& p = std::get<Polygon>(s);
  const auto& q = std::get<Polygon>(t);
  if (shape_contains(s, q.vertices.front()) || shape_contains(t, p.vertices.front())) return -1.0;
  return polygon_boundary_gap(p, q);
}

// Positive clearance of `inner` from the boundary of `outer`; <= 0 when it
// touches or leaves the outer shape.
double shape_clearance(const Shape& outer, const Shape& inner) {
  if (auto* o = std::get_if<Circle>(&outer)) {
    if (auto* c = std::get_if<Circle>(&inner))
      return o->radius - distance(o->center, c->center) - c->radius;
    double far = 0.0;
    for (Point v : std::get<Polygon>(inner).vertices) far = std::max(far, distance(v, o->center));
    return o->radius - far;
  }
  const auto& op = std::get<Polygon>(outer);
  if (auto* c = std::get_if<Circle>(&inner)) {
    if (!shape_contains(outer, c->center)) return -1.0;
    return polygon_boundary_distance(op, c->center) - c->radius;
  }
  const auto& ip = std::get<Polygon>(inner);
  for (Point v : ip.vertices)
    if (!shape_contains(outer, v)) return -1.0;
  return polygon_boundary_gap(op, ip);
}

Shape shape_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 1)
    throw Error(ErrorCode::Parse, "shape must be an object with exactly one key ('circle' or 'polygon')");
  if (j.contains("circle")) {
    const auto& c = j.at("circle");
    for (auto it = c.begin(); it != c.end(); ++it)
      if (it.key() != "center" && it.key() != "radius")
        throw Error(ErrorCode::Parse, "unknown circle key '" + it.key() + "'");
    const auto& ctr = c.at("center");
    if (!ctr.is_array() || ctr.size() != 2) throw Error(ErrorCode::Parse, "circle center must be [x, y]");
    Circle circle{{ctr[0].get<double>(), ctr[1].get<double>()}, c.at("radius").get<double>()};
    if (!(circle.radius > 0.0)) throw Error(ErrorCode::GeometryInvalid, "circle radius must be positive");
    return circle;
  }
  if (j.contains("polygon")) {
    Polygon poly;
    for (const auto& v : j.at("polygon")) {
      if (!v.is_array() || v.size() != 2) throw Error(ErrorCode::Parse, "polygon vertex must be [x, y]");
      poly.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    if (poly.vertices.size() < 3) throw Error(ErrorCode::GeometryInvalid, "polygon needs at least 3 vertices");
    return normalized(std::move(poly));
  }
  throw Error(ErrorCode::Parse, "unknown shape kind '" + j.begin().key() + "'");
}

nlohmann::json shape_to_json(const Shape& s) {
  using nlohmann::json;
  if (auto* c = std::get_if<Circle>(&s))
    return json{{"circle", json{{"center", json::array({c->center.x, c->center.y})}, {"radius", c->radius}}}};
  json verts = json::array();
  for (Point v : std::get<Polygon>(s).vertices) verts.push_back(json::array({v.x, v.y}));
  return json{{"polygon", verts}};
}

}  // namespace

double segment_distance(Point p, Point a, Point b) {
  const Point ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

Polygon normalized(Polygon poly) {
  if (signed_area(poly.vertices) < 0.0) std::reverse(poly.vertices.begin(), poly.vertices.end());
  return poly;
}

bool shape_contains(const Shape& s, Point p) {
  if (auto* c = std::get_if<Circle>(&s)) {
    const double d2 = dot(p - c->center, p - c->center);
    return d2 <= c->radius * c->radius;
  }
  const auto& poly = std::get<Polygon>(s);
  return polygon_contains_strict(poly, p) || polygon_boundary_distance(poly, p) <= kOnBoundaryTol;
}

double shape_distance(const Shape& s, Point p) {
  if (auto* c = std::get_if<Circle>(&s)) return std::max(0.0, distance(p, c->center) - c->radius);
  if (shape_contains(s, p)) return 0.0;
  return polygon_boundary_distance(std::get<Polygon>(s), p);
}

double shape_boundary_distance(const Shape& s, Point p) {
  if (auto* c = std::get_if<Circle>(&s)) return std::abs(distance(p, c->center) - c->radius);
  return polygon_boundary_distance(std::get<Polygon>(s), p);
}

double shape_diameter(const Shape& s) {
  if (auto* c = std::get_if<Circle>(&s)) return 2.0 * c->radius;
  double d = 0.0;
  const auto& v = std::get<Polygon>(s).vertices;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) d = std::max(d, distance(v[i], v[j]));
  return d;
}

Geometry::Geometry(Shape outer, std::vector<Shape> inclusions)
    : outer_(std::move(outer)), inclusions_(std::move(inclusions)) {
  auto fix = [](Shape& s) {
    if (auto* p = std::get_if<Polygon>(&s)) {
      if (p->vertices.size() < 3) throw Error(ErrorCode::GeometryInvalid, "polygon needs at least 3 vertices");
      *p = normalized(std::move(*p));
    } else if (!(std::get<Circle>(s).radius > 0.0)) {
      throw Error(ErrorCode::GeometryInvalid, "circle radius must be positive");
    }
  };
  fix(outer_);
  for (auto& s : inclusions_) fix(s);
}

const Shape& Geometry::inclusion(RegionId m) const {
  if (m.value == 0 || m.value > inclusions_.size())
    throw Error(ErrorCode::InvalidRegion, "region " + std::to_string(m.value) + " is not an inclusion (M = " +
                                              std::to_string(inclusions_.size()) + ")");
  return inclusions_[m.value - 1];
}

bool Geometry::in_domain(Point p) const {
  if (shape_contains(outer_, p)) return true;
  // Points on a polygonal approximation of a curved boundary sit a rounding
  // error outside the analytic curve.
  return shape_distance(outer_, p) <= kOnBoundaryTol * std::max(1.0, diameter());
}

RegionId Geometry::classify_point(Point p) const {
  if (!in_domain(p))
    throw Error(ErrorCode::DomainMembership,
                "point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") lies outside the domain");
  for (std::size_t m = 0; m < inclusions_.size(); ++m)
    if (shape_contains(inclusions_[m], p)) return RegionId{m + 1};
  return RegionId{0};
}

double Geometry::distance_to_inclusion(RegionId m, Point p) const { return shape_distance(inclusion(m), p); }

double Geometry::distance_to_outer_boundary(Point p) const { return shape_boundary_distance(outer_, p); }

RegionPredicate Geometry::delta_neighborhood(RegionId m, double delta) const {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  Shape target = inclusion(m);
  Geometry self = *this;
  return [self = std::move(self), target = std::move(target), delta](Point p) {
    return self.in_domain(p) && shape_distance(target, p) < delta;
  };
}

RegionPredicate Geometry::boundary_strip(double delta) const {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  Geometry self = *this;
  return [self = std::move(self), delta](Point p) {
    return self.in_domain(p) && self.distance_to_outer_boundary(p) < delta;
  };
}

ValidationReport Geometry::validate() const {
  ValidationReport r;
  for (std::size_t a = 0; a < inclusions_.size(); ++a) {
    const double clear = shape_clearance(outer_, inclusions_[a]);
    r.min_clearance = std::min(r.min_clearance, clear);
    if (clear <= 0.0) {
      r.ok = false;
      if (r.message.empty()) r.message = "inclusion " + std::to_string(a + 1) + " touches or leaves the outer boundary";
    }
    for (std::size_t b = a + 1; b < inclusions_.size(); ++b) {
      const double sep = shape_separation(inclusions_[a], inclusions_[b]);
      if (sep < r.min_separation) {
        r.min_separation = sep;
        r.closest_a = a + 1;
        r.closest_b = b + 1;
      }
      if (sep <= 0.0) {
        r.ok = false;
        if (r.message.empty())
          r.message = "inclusions " + std::to_string(a + 1) + " and " + std::to_string(b + 1) + " overlap or touch";
      }
    }
  }
  return r;
}

void Geometry::require_valid() const {
  const auto r = validate();
  if (!r.ok) throw Error(ErrorCode::GeometryInvalid, r.message);
}

Geometry geometry_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("geometry JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error(ErrorCode::Parse, "geometry must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "domain" && it.key() != "inclusions")
        throw Error(ErrorCode::Parse, "unknown geometry key '" + it.key() + "'");
    Shape outer = shape_from_json(j.at("domain"));
    std::vector<Shape> inclusions;
    if (j.contains("inclusions"))
      for (const auto& s : j.at("inclusions")) inclusions.push_back(shape_from_json(s));
    return Geometry(std::move(outer), std::move(inclusions));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("geometry JSON: ") + e.what());
  }
}

Geometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open geometry file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return geometry_from_json(ss.str());
}

std::string geometry_to_json(const Geometry& g) {
  nlohmann::json j;
  j["domain"] = shape_to_json(g.outer());
  j["inclusions"] = nlohmann::json::array();
  for (const auto& s : g.inclusions()) j["inclusions"].push_back(shape_to_json(s));
  return j.dump(2) + "\n";
}

}  // namespace hcm
