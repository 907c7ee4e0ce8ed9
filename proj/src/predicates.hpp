#pragma once

#include "geometry.hpp"

namespace hcm::predicates {

// Sign-exact geometric predicates. A floating-point evaluation is used when
// its error bound certifies the sign; otherwise the determinant is
// re-evaluated in exact rational arithmetic.

// > 0 if a, b, c are counterclockwise, < 0 if clockwise, 0 if collinear.
int orient2d(Point a, Point b, Point c);

// > 0 if d lies strictly inside the circumcircle of the counterclockwise
// triangle (a, b, c), < 0 outside, 0 on the circle.
int incircle(Point a, Point b, Point c, Point d);

}  // namespace hcm::predicates
