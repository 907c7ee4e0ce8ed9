#pragma once

#include <cstdint>
#include <string>

#include "geometry.hpp"

namespace hcm {

enum class LayoutPattern { Rings, JitteredGrid };

LayoutPattern parse_layout_pattern(const std::string& name);

// Places n identical disks of the given radius inside the unit disk.
//
// Rings: one disk at the origin and the rest on equally spaced concentric
// rings with counts proportional to the ring radius; the ring count that
// maximizes min(separation, clearance) wins and the seed rotates each ring by
// a random phase.
// JitteredGrid: a square grid clipped to the disk with seeded jitter.
// The result passes validate() with separation >= radius / 2, otherwise an
// error is thrown after a bounded number of attempts.
Geometry make_layout(std::size_t n, double radius, LayoutPattern pattern, std::uint64_t seed);

}  // namespace hcm
