#pragma once

#include "nmf/geometry.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace nmf {

using Rng = std::mt19937_64;

/// Independent stream for (seed, path...). Streams for distinct paths do not
/// depend on how many other streams were drawn, so results are schedule-free.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {});

double uniform(Rng& rng, double lo, double hi);
/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
Rotation random_rotation(Rng& rng);
Vec3 random_unit_vector(Rng& rng);

}  // namespace nmf
