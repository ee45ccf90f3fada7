#pragma once

#include <cstdint>
#include <vector>

#include "airwaytopo/errors.hpp"

namespace airway {

// All volumes share one axis convention: (z, y, x) row-major with x fastest.
struct Dims {
  std::int64_t d = 0;  // depth  (z)
  std::int64_t h = 0;  // height (y)
  std::int64_t w = 0;  // width  (x)

  std::int64_t count() const { return d * h * w; }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double dz = 1.0;  // mm
  double dy = 1.0;
  double dx = 1.0;

  bool operator==(const Spacing&) const = default;
};

struct VoxelCoord {
  std::int32_t z = 0;
  std::int32_t y = 0;
  std::int32_t x = 0;

  bool operator==(const VoxelCoord&) const = default;
};

enum class GridKind { Intensity, Probability, Binary };

const char* grid_kind_name(GridKind kind);
GridKind grid_kind_from_name(const std::string& name);

// Dense 3D scalar field. Storage is always float32; Binary/Probability are
// contracts on the values, not storage types. Grids are immutable at the
// interface: operations take const refs and return new grids.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(Dims dims, Spacing spacing, GridKind kind, float fill = 0.0f);
  VoxelGrid(Dims dims, Spacing spacing, GridKind kind,
            std::vector<float> values);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  GridKind kind() const { return kind_; }

  std::int64_t size() const { return dims_.count(); }

  std::int64_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return (z * dims_.h + y) * dims_.w + x;
  }
  std::int64_t index(const VoxelCoord& c) const { return index(c.z, c.y, c.x); }
  VoxelCoord coord(std::int64_t linear) const {
    const auto x = linear % dims_.w;
    const auto y = (linear / dims_.w) % dims_.h;
    const auto z = linear / (dims_.w * dims_.h);
    return {static_cast<std::int32_t>(z), static_cast<std::int32_t>(y),
            static_cast<std::int32_t>(x)};
  }

  bool in_bounds(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return z >= 0 && z < dims_.d && y >= 0 && y < dims_.h && x >= 0 &&
           x < dims_.w;
  }
  bool in_bounds(const VoxelCoord& c) const { return in_bounds(c.z, c.y, c.x); }

  float at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return values_[index(z, y, x)];
  }
  float at(const VoxelCoord& c) const { return values_[index(c)]; }
  float operator[](std::int64_t linear) const { return values_[linear]; }

  void set(std::int64_t z, std::int64_t y, std::int64_t x, float v) {
    values_[index(z, y, x)] = v;
  }
  void set(const VoxelCoord& c, float v) { values_[index(c)] = v; }
  void set_linear(std::int64_t linear, float v) { values_[linear] = v; }

  bool foreground(std::int64_t linear) const { return values_[linear] > 0.5f; }
  bool foreground(const VoxelCoord& c) const { return foreground(index(c)); }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& mutable_values() { return values_; }

  std::int64_t count_foreground() const;

  // Throws if the stated kind contract is violated (Probability in [0,1],
  // Binary in {0,1}).
  void validate() const;

  VoxelGrid with_kind(GridKind kind) const;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  GridKind kind_ = GridKind::Intensity;
  std::vector<float> values_;
};

void require_same_dims(const VoxelGrid& a, const VoxelGrid& b);

// Clamp-and-rescale intensities: out = clamp((v - lo) / (hi - lo), 0, 1).
// Dims and spacing are preserved; result kind is Probability.
VoxelGrid truncate_normalize(const VoxelGrid& grid, double lo, double hi);

}  // namespace airway
