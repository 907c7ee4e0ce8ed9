// Conforming Delaunay mesh generation with Ruppert-style refinement.
//
// Boundary curves are discretized into segments of length <= h, a triangular
// lattice of spacing h fills the interior away from the curves, and all
// points are inserted with Bowyer-Watson. Refinement then alternates between
// splitting encroached segments at their midpoints and inserting circumcenters
// of triangles that are too large or too skinny. A segment whose diametral
// circle is empty is a Delaunay edge, so every segment is present in the final
// triangulation without edge flips.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <unordered_map>
#include <unordered_set>

#include "error.hpp"
#include "mesh.hpp"
#include "predicates.hpp"

namespace hcm {
namespace {

constexpr Index kNone = std::numeric_limits<Index>::max();

struct Tri {
  std::array<Index, 3> v;
  std::array<Index, 3> nbr;  // nbr[i] is across the edge opposite v[i]
  bool alive = true;
};

struct Segment {
  Index a, b;
  BoundaryMarker marker;
  bool alive = true;
};

Point circumcenter(Point a, Point b, Point c) {
  const Point ab = b - a, ac = c - a;
  const double d = 2.0 * cross(ab, ac);
  const double ab2 = dot(ab, ab), ac2 = dot(ac, ac);
  return {a.x + (ac.y * ab2 - ab.y * ac2) / d, a.y + (ab.x * ac2 - ac.x * ab2) / d};
}

// Uniform bucket grid over segment midpoints for encroachment queries.
class SegmentGrid {
public:
  SegmentGrid(Point lo, Point hi, double cell) : lo_(lo), cell_(cell) {
    nx_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi.x - lo.x) / cell)) + 1);
    ny_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi.y - lo.y) / cell)) + 1);
    buckets_.resize(nx_ * ny_);
  }

  void insert(Index seg, Point mid) { buckets_[bucket(mid)].push_back(seg); }

  // Calls f(seg) for every segment whose midpoint lies within `radius` cells-worth of p.
  template <typename F>
  void near(Point p, double radius, F&& f) const {
    const auto [ix, iy] = cell_of(p);
    const long reach = static_cast<long>(std::ceil(radius / cell_)) + 1;
    for (long i = static_cast<long>(ix) - reach; i <= static_cast<long>(ix) + reach; ++i)
      for (long j = static_cast<long>(iy) - reach; j <= static_cast<long>(iy) + reach; ++j) {
        if (i < 0 || j < 0 || i >= static_cast<long>(nx_) || j >= static_cast<long>(ny_)) continue;
        for (Index s : buckets_[static_cast<std::size_t>(j) * nx_ + static_cast<std::size_t>(i)]) f(s);
      }
  }

private:
  std::pair<std::size_t, std::size_t> cell_of(Point p) const {
    const double fx = std::clamp((p.x - lo_.x) / cell_, 0.0, static_cast<double>(nx_ - 1));
    const double fy = std::clamp((p.y - lo_.y) / cell_, 0.0, static_cast<double>(ny_ - 1));
    return {static_cast<std::size_t>(fx), static_cast<std::size_t>(fy)};
  }
  std::size_t bucket(Point p) const {
    const auto [i, j] = cell_of(p);
    return j * nx_ + i;
  }

  Point lo_;
  double cell_;
  std::size_t nx_ = 1, ny_ = 1;
  std::vector<std::vector<Index>> buckets_;
};

class Triangulator {
public:
  Triangulator(const Geometry& geom, double h, const MeshOptions& opts)
      : geom_(geom), h_(h), opts_(opts),
        max_ratio_(1.0 / (2.0 * std::sin(opts.min_angle_deg * std::numbers::pi / 180.0))) {}

  Mesh run();

private:
  // --- Delaunay kernel ---
  void init_super(Point lo, Point hi);
  Index locate(Point p) const;
  bool insert(Point p, std::vector<Index>* created);
  std::pair<Index, Index> find_edge(Index a, Index b) const;
  bool is_super(Index v) const { return v < 3; }

  // --- constraints and refinement ---
  void add_segment(Index a, Index b, BoundaryMarker m);
  bool encroached(Index s) const;
  void split_segment(Index s);
  void push_encroached_near(Point p);
  bool in_domain(Index t) const;
  bool is_bad(Index t) const;
  void refine();

  // --- setup / output ---
  void discretize_boundaries();
  void fill_lattice();
  Mesh extract() const;

  const Geometry& geom_;
  double h_;
  MeshOptions opts_;
  double max_ratio_;

  std::vector<Point> pts_;
  std::vector<Tri> tris_;
  std::vector<Index> vert_tri_;
  mutable Index hint_ = 0;

  std::vector<Segment> segs_;
  std::unique_ptr<SegmentGrid> grid_;
  std::deque<Index> seg_queue_;
  std::deque<Index> tri_queue_;
  std::size_t steps_ = 0;
};

void Triangulator::init_super(Point lo, Point hi) {
  const double span = std::max(hi.x - lo.x, hi.y - lo.y);
  const Point c{0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y)};
  const double big = 64.0 * span;
  pts_ = {{c.x - big, c.y - big}, {c.x + big, c.y - big}, {c.x, c.y + big}};
  tris_ = {Tri{{0, 1, 2}, {kNone, kNone, kNone}, true}};
  vert_tri_ = {0, 0, 0};
  hint_ = 0;
}

Index Triangulator::locate(Point p) const {
  Index t = hint_;
  if (!tris_[t].alive) {
    t = static_cast<Index>(tris_.size() - 1);
    while (!tris_[t].alive) --t;
  }
  const std::size_t limit = tris_.size() + 16;
  for (std::size_t step = 0; step < limit; ++step) {
    const auto& tri = tris_[t];
    Index next = kNone;
    for (int k = 0; k < 3; ++k) {
      const int i = static_cast<int>((k + step) % 3);
      const Point a = pts_[tri.v[(i + 1) % 3]], b = pts_[tri.v[(i + 2) % 3]];
      if (predicates::orient2d(a, b, p) < 0) {
        next = tri.nbr[i];
        break;
      }
    }
    if (next == kNone) {
      // Either p is inside t, or it left the super triangle.
      for (int i = 0; i < 3; ++i)
        if (predicates::orient2d(pts_[tri.v[(i + 1) % 3]], pts_[tri.v[(i + 2) % 3]], p) < 0)
          throw Error(ErrorCode::MeshGeneration, "point outside the bounding triangle");
      return t;
    }
    t = next;
  }
  // Fallback: exhaustive search.
  for (Index s = 0; s < tris_.size(); ++s) {
    if (!tris_[s].alive) continue;
    bool inside = true;
    for (int i = 0; i < 3 && inside; ++i)
      inside = predicates::orient2d(pts_[tris_[s].v[(i + 1) % 3]], pts_[tris_[s].v[(i + 2) % 3]], p) >= 0;
    if (inside) return s;
  }
  throw Error(ErrorCode::MeshGeneration, "point location failed");
}

bool Triangulator::insert(Point p, std::vector<Index>* created) {
  const Index t0 = locate(p);
  for (Index v : tris_[t0].v)
    if (pts_[v] == p) return false;

  const Index pi = static_cast<Index>(pts_.size());
  pts_.push_back(p);
  vert_tri_.push_back(kNone);

  // Cavity: triangles whose circumcircle strictly contains p, grown from t0.
  std::vector<Index> cavity{t0};
  std::unordered_map<Index, bool> visited{{t0, true}};
  struct BoundaryEdgeRec {
    Index a, b, outside;
  };
  std::vector<BoundaryEdgeRec> boundary;
  for (std::size_t k = 0; k < cavity.size(); ++k) {
    const Index t = cavity[k];
    for (int i = 0; i < 3; ++i) {
      const Index u = tris_[t].nbr[i];
      const Index a = tris_[t].v[(i + 1) % 3], b = tris_[t].v[(i + 2) % 3];
      bool inside = false;
      if (u != kNone) {
        auto it = visited.find(u);
        if (it != visited.end()) {
          inside = it->second;
        } else {
          const auto& tu = tris_[u];
          inside = predicates::incircle(pts_[tu.v[0]], pts_[tu.v[1]], pts_[tu.v[2]], p) > 0;
          visited.emplace(u, inside);
          if (inside) cavity.push_back(u);
        }
      }
      if (!inside) boundary.push_back({a, b, u});
    }
  }

  for (Index t : cavity) tris_[t].alive = false;

  // Fan the cavity boundary to p.
  std::vector<Index> fresh;
  fresh.reserve(boundary.size());
  for (const auto& e : boundary) {
    const Index nt = static_cast<Index>(tris_.size());
    tris_.push_back(Tri{{e.a, e.b, pi}, {kNone, kNone, e.outside}, true});
    if (e.outside != kNone) {
      auto& o = tris_[e.outside];
      for (int i = 0; i < 3; ++i)
        if (o.v[(i + 1) % 3] == e.b && o.v[(i + 2) % 3] == e.a) o.nbr[i] = nt;
    }
    fresh.push_back(nt);
  }
  // Adjacent fan triangles share the edge (x, p): triangle (a, b, p) has
  // edge (b, p) opposite a, matching the triangle that starts at b.
  std::unordered_map<Index, Index> starts_at;
  for (Index nt : fresh) starts_at.emplace(tris_[nt].v[0], nt);
  for (Index nt : fresh) {
    const Index b = tris_[nt].v[1];
    const Index other = starts_at.at(b);
    tris_[nt].nbr[0] = other;  // across (b, p)
    tris_[other].nbr[1] = nt;  // across (p, b) in (b, c, p)
  }
  for (Index nt : fresh) {
    for (Index v : tris_[nt].v) vert_tri_[v] = nt;
    if (predicates::orient2d(pts_[tris_[nt].v[0]], pts_[tris_[nt].v[1]], pts_[tris_[nt].v[2]]) <= 0)
      throw Error(ErrorCode::MeshGeneration, "cavity is not star-shaped (degenerate insertion)");
  }
  hint_ = fresh.front();
  if (created) created->insert(created->end(), fresh.begin(), fresh.end());
  return true;
}

// Returns (triangle, local index of the vertex opposite edge ab) with the
// triangle on the left of a->b, or (kNone, kNone) if ab is not an edge.
std::pair<Index, Index> Triangulator::find_edge(Index a, Index b) const {
  const Index start = vert_tri_[a];
  Index t = start;
  for (std::size_t guard = 0; guard < 4096; ++guard) {
    const auto& tri = tris_[t];
    int i = 0;
    while (tri.v[i] != a) ++i;
    if (tri.v[(i + 1) % 3] == b) return {t, static_cast<Index>((i + 2) % 3)};
    // Rotate counterclockwise around a: cross the edge (v[i+2], a).
    t = tri.nbr[(i + 1) % 3];
    if (t == kNone || t == start) break;
  }
  return {kNone, kNone};
}

void Triangulator::add_segment(Index a, Index b, BoundaryMarker m) {
  const Index s = static_cast<Index>(segs_.size());
  segs_.push_back({a, b, m, true});
  grid_->insert(s, 0.5 * (pts_[a] + pts_[b]));
  seg_queue_.push_back(s);
}

bool Triangulator::encroached(Index s) const {
  const auto& seg = segs_[s];
  const Point a = pts_[seg.a], b = pts_[seg.b];
  auto enc = [&](Index v) {
    const Point q = pts_[v];
    return dot(a - q, b - q) < 0.0;
  };
  auto [t, i] = find_edge(seg.a, seg.b);
  if (t == kNone) return true;
  if (enc(tris_[t].v[i])) return true;
  auto [u, j] = find_edge(seg.b, seg.a);
  if (u == kNone) return true;
  return enc(tris_[u].v[j]);
}

void Triangulator::split_segment(Index s) {
  segs_[s].alive = false;
  const Segment seg = segs_[s];
  const Point mid = 0.5 * (pts_[seg.a] + pts_[seg.b]);
  std::vector<Index> created;
  if (!insert(mid, &created)) throw Error(ErrorCode::MeshGeneration, "segment midpoint coincides with a vertex");
  const Index m = static_cast<Index>(pts_.size() - 1);
  add_segment(seg.a, m, seg.marker);
  add_segment(m, seg.b, seg.marker);
  for (Index t : created) tri_queue_.push_back(t);
  push_encroached_near(mid);
}

void Triangulator::push_encroached_near(Point p) {
  grid_->near(p, h_, [&](Index s) {
    if (!segs_[s].alive) return;
    const Point a = pts_[segs_[s].a], b = pts_[segs_[s].b];
    if (dot(a - p, b - p) < 0.0) seg_queue_.push_back(s);
  });
}

bool Triangulator::in_domain(Index t) const {
  const auto& tri = tris_[t];
  if (is_super(tri.v[0]) || is_super(tri.v[1]) || is_super(tri.v[2])) return false;
  const Point c = (1.0 / 3.0) * (pts_[tri.v[0]] + pts_[tri.v[1]] + pts_[tri.v[2]]);
  return shape_contains(geom_.outer(), c);
}

bool Triangulator::is_bad(Index t) const {
  const auto& tri = tris_[t];
  const Point a = pts_[tri.v[0]], b = pts_[tri.v[1]], c = pts_[tri.v[2]];
  const Point cc = circumcenter(a, b, c);
  const double r = distance(cc, a);
  if (r > h_) return true;
  const double shortest = std::min({distance(a, b), distance(b, c), distance(c, a)});
  return r > max_ratio_ * shortest * (1.0 + 1e-12);
}

void Triangulator::refine() {
  for (Index t = 0; t < tris_.size(); ++t)
    if (tris_[t].alive) tri_queue_.push_back(t);

  while (true) {
    if (++steps_ > opts_.max_refinement_steps) {
      const auto r = geom_.validate();
      std::string what = "refinement did not terminate";
      if (r.closest_a != 0)
        what += " (closest inclusions " + std::to_string(r.closest_a) + " and " + std::to_string(r.closest_b) +
                ", separation " + std::to_string(r.min_separation) + ")";
      throw Error(ErrorCode::MeshGeneration, what);
    }
    if (!seg_queue_.empty()) {
      const Index s = seg_queue_.front();
      seg_queue_.pop_front();
      if (segs_[s].alive && encroached(s)) split_segment(s);
      continue;
    }
    if (tri_queue_.empty()) break;
    const Index t = tri_queue_.front();
    tri_queue_.pop_front();
    if (!tris_[t].alive || !in_domain(t) || !is_bad(t)) continue;

    const auto& tri = tris_[t];
    const Point cc = circumcenter(pts_[tri.v[0]], pts_[tri.v[1]], pts_[tri.v[2]]);
    bool blocked = false;
    grid_->near(cc, h_, [&](Index s) {
      if (!segs_[s].alive) return;
      const Point a = pts_[segs_[s].a], b = pts_[segs_[s].b];
      if (dot(a - cc, b - cc) < 0.0) {
        seg_queue_.push_back(s);
        blocked = true;
      }
    });
    if (blocked) {
      tri_queue_.push_back(t);
      continue;
    }
    if (!geom_.in_domain(cc)) continue;
    std::vector<Index> created;
    if (insert(cc, &created)) {
      for (Index n : created) tri_queue_.push_back(n);
      push_encroached_near(cc);
    }
  }
}

void Triangulator::discretize_boundaries() {
  auto add_curve = [&](const Shape& shape, BoundaryMarker marker) {
    std::vector<Point> ring;
    if (auto* c = std::get_if<Circle>(&shape)) {
      const auto n = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(2.0 * std::numbers::pi * c->radius / h_)));
      for (std::size_t k = 0; k < n; ++k) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        ring.push_back({c->center.x + c->radius * std::cos(t), c->center.y + c->radius * std::sin(t)});
      }
    } else {
      const auto& v = std::get<Polygon>(shape).vertices;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const Point a = v[i], b = v[(i + 1) % v.size()];
        const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(distance(a, b) / h_)));
        for (std::size_t k = 0; k < n; ++k) ring.push_back(a + (static_cast<double>(k) / static_cast<double>(n)) * (b - a));
      }
    }
    std::vector<Index> ids;
    for (Point p : ring) {
      if (!insert(p, nullptr)) throw Error(ErrorCode::MeshGeneration, "duplicate boundary point");
      ids.push_back(static_cast<Index>(pts_.size() - 1));
    }
    for (std::size_t i = 0; i < ids.size(); ++i) add_segment(ids[i], ids[(i + 1) % ids.size()], marker);
  };
  add_curve(geom_.outer(), BoundaryMarker::outer());
  for (std::size_t m = 0; m < geom_.inclusion_count(); ++m)
    add_curve(geom_.inclusions()[m], BoundaryMarker::of_inclusion(m + 1));
}

void Triangulator::fill_lattice() {
  Point lo{INFINITY, INFINITY}, hi{-INFINITY, -INFINITY};
  for (std::size_t v = 3; v < pts_.size(); ++v) {
    lo = {std::min(lo.x, pts_[v].x), std::min(lo.y, pts_[v].y)};
    hi = {std::max(hi.x, pts_[v].x), std::max(hi.y, pts_[v].y)};
  }
  const double dy = h_ * std::sqrt(3.0) / 2.0;
  const double clearance = 0.6 * h_;
  const auto rows = static_cast<long>(std::floor((hi.y - lo.y) / dy));
  for (long r = 1; r <= rows; ++r) {
    const double y = lo.y + static_cast<double>(r) * dy;
    const double shift = (r % 2 == 0) ? 0.0 : 0.5 * h_;
    for (double x = lo.x + shift; x <= hi.x; x += h_) {
      const Point p{x, y};
      if (!shape_contains(geom_.outer(), p)) continue;
      if (shape_boundary_distance(geom_.outer(), p) < clearance) continue;
      bool near_curve = false;
      for (const auto& s : geom_.inclusions())
        if (shape_boundary_distance(s, p) < clearance) {
          near_curve = true;
          break;
        }
      if (!near_curve) insert(p, nullptr);
    }
  }
}

Mesh Triangulator::extract() const {
  Mesh mesh;
  mesh.h_target = h_;
  std::vector<Index> remap(pts_.size(), kNone);
  for (Index v = 3; v < pts_.size(); ++v) {
    remap[v] = static_cast<Index>(mesh.vertices.size());
    mesh.vertices.push_back(pts_[v]);
  }

  std::vector<Index> kept;
  std::vector<Index> local(tris_.size(), kNone);
  for (Index t = 0; t < tris_.size(); ++t)
    if (tris_[t].alive && in_domain(t)) {
      local[t] = static_cast<Index>(kept.size());
      kept.push_back(t);
    }

  // Regions: flood fill across edges that are not segments; each component is
  // labelled by classifying the centroid of its largest triangle.
  auto key = [](Index a, Index b) { return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b); };
  std::unordered_set<std::uint64_t> constrained;
  for (const auto& s : segs_)
    if (s.alive) constrained.insert(key(s.a, s.b));

  std::vector<std::size_t> comp(kept.size(), std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> comp_region;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (comp[k] != std::numeric_limits<std::size_t>::max()) continue;
    const std::size_t id = comp_region.size();
    std::vector<std::size_t> stack{k};
    comp[k] = id;
    std::size_t best = k;
    double best_area = -1.0;
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      const auto& tri = tris_[kept[c]];
      const double area = 0.5 * cross(pts_[tri.v[1]] - pts_[tri.v[0]], pts_[tri.v[2]] - pts_[tri.v[0]]);
      if (area > best_area) {
        best_area = area;
        best = c;
      }
      for (int i = 0; i < 3; ++i) {
        const Index u = tri.nbr[i];
        if (u == kNone || local[u] == kNone) continue;
        if (constrained.count(key(tri.v[(i + 1) % 3], tri.v[(i + 2) % 3]))) continue;
        if (comp[local[u]] == std::numeric_limits<std::size_t>::max()) {
          comp[local[u]] = id;
          stack.push_back(local[u]);
        }
      }
    }
    const auto& bt = tris_[kept[best]];
    const Point c = (1.0 / 3.0) * (pts_[bt.v[0]] + pts_[bt.v[1]] + pts_[bt.v[2]]);
    comp_region.push_back(geom_.classify_point(c).value);
  }

  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& tri = tris_[kept[k]];
    mesh.triangles.push_back({remap[tri.v[0]], remap[tri.v[1]], remap[tri.v[2]]});
    mesh.tri_region.push_back(comp_region[comp[k]]);
  }
  for (const auto& s : segs_)
    if (s.alive) mesh.boundary_edges.push_back({{remap[s.a], remap[s.b]}, s.marker});
  return mesh;
}

Mesh Triangulator::run() {
  Point lo{INFINITY, INFINITY}, hi{-INFINITY, -INFINITY};
  auto grow = [&](const Shape& s) {
    if (auto* c = std::get_if<Circle>(&s)) {
      lo = {std::min(lo.x, c->center.x - c->radius), std::min(lo.y, c->center.y - c->radius)};
      hi = {std::max(hi.x, c->center.x + c->radius), std::max(hi.y, c->center.y + c->radius)};
    } else {
      for (Point p : std::get<Polygon>(s).vertices) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
      }
    }
  };
  grow(geom_.outer());
  init_super(lo, hi);
  grid_ = std::make_unique<SegmentGrid>(lo, hi, h_);
  discretize_boundaries();
  fill_lattice();
  refine();
  return extract();
}

}  // namespace

Mesh generate_mesh(const Geometry& geom, double h, const MeshOptions& opts) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "mesh size h must be positive");
  const auto report = geom.validate();
  if (!report.ok) throw Error(ErrorCode::GeometryInvalid, report.message);
  for (std::size_t m = 0; m < geom.inclusion_count(); ++m) {
    const double size = shape_diameter(geom.inclusions()[m]) / 2.0;
    if (h >= 0.5 * size)
      throw Error(ErrorCode::MeshGeneration, "h = " + std::to_string(h) + " is not below half the size of inclusion " +
                                                 std::to_string(m + 1) + " (" + std::to_string(size) + ")");
  }
  if (report.closest_a != 0 && report.min_separation < 0.05 * h)
    throw Error(ErrorCode::MeshGeneration, "inclusions " + std::to_string(report.closest_a) + " and " +
                                               std::to_string(report.closest_b) + " are separated by " +
                                               std::to_string(report.min_separation) + ", too close to resolve at h = " +
                                               std::to_string(h));
  Triangulator tri(geom, h, opts);
  Mesh mesh = tri.run();
  check_mesh(mesh);
  return mesh;
}

}  // namespace hcm
