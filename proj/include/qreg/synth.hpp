#pragma once

#include <cstdint>
#include <string>

#include "qreg/geometry.hpp"

namespace qreg {

struct SynthConfig {
  std::size_t n_points = 1024;
  double keep_fraction = 0.7;
  double noise_sigma = 0.01;
  double max_rot_deg = 45.0;
  double max_trans = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthPair {
  PointCloud src;
  PointCloud ref;
  RigidTransform gt;  // maps src into the ref frame
};

// Subsample, crop each copy independently, add noise, move the reference.
SynthPair synth_pair(const SynthConfig& cfg, const PointCloud& base);

// Keeps the round(keep * n) points furthest along a random direction.
PointCloud crop_half_space(const PointCloud& c, double keep_fraction, const Point3& direction);

enum class BaseShape { cube_grid, sphere, two_planes, helix };

BaseShape parse_shape(const std::string& s);
const char* to_string(BaseShape s);

// Deterministic parametric sampling, scaled to unit diameter around the origin.
PointCloud make_base_shape(BaseShape shape, std::size_t n, std::uint64_t seed);

}  // namespace qreg
