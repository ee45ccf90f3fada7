#pragma once

#include <cstdint>
#include <vector>

#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// Connected-component labeling result. Labels are 1..K ordered by decreasing
// component size; ties broken by the smaller minimum linear index. 0 is
// background.
struct LabelGrid {
  Dims dims;
  Spacing spacing;
  std::vector<std::int32_t> labels;
  std::vector<std::int64_t> component_sizes;  // indexed by label, [0] unused

  std::int32_t label_count() const {
    return static_cast<std::int32_t>(component_sizes.size()) - 1;
  }
};

// Per-voxel shortest Euclidean distance to a target point set, in voxel
// units (isotropic lattice metric; spacing is deliberately not applied here).
struct DistanceField {
  Dims dims;
  std::vector<float> values;

  float at(const VoxelCoord& c) const {
    return values[(static_cast<std::int64_t>(c.z) * dims.h + c.y) * dims.w +
                  c.x];
  }
};

struct DtiParams {
  double t_high = 0.5;
  double t_low = 0.35;
};

LabelGrid connected_components(const VoxelGrid& mask, int connectivity);

// Keeps only the largest 26-connected component. An empty input yields an
// empty output with *empty_warning set instead of an error.
VoxelGrid largest_component(const VoxelGrid& mask,
                            bool* empty_warning = nullptr);

// Background voxels not 6-connected to the volume boundary become foreground.
VoxelGrid fill_holes(const VoxelGrid& mask);

// Exact Euclidean distance to the nearest target, plus the linear index of
// that target voxel for every grid voxel. Separable squared-distance scheme
// (Felzenszwalb & Huttenlocher), three 1D passes.
struct FeatureTransform {
  DistanceField distance;
  std::vector<std::int64_t> nearest_site;  // linear index of closest target
};

FeatureTransform feature_transform(const Dims& dims,
                                   const std::vector<VoxelCoord>& targets);

DistanceField distance_to_points(const Dims& dims,
                                 const std::vector<VoxelCoord>& targets);

// Distance from every voxel to the nearest background voxel of a binary
// mask — the local tube radius when sampled on centerline points. Errors
// with EmptyTargetSet when the mask has no background at all.
DistanceField distance_to_background(const VoxelGrid& mask);

// Hysteresis binarization: keep voxels >= t_low that are 26-connected,
// through voxels >= t_low, to a seed voxel >= t_high. Region growing from
// the seeds runs to a fixed point.
VoxelGrid dual_threshold_iteration(const VoxelGrid& prob,
                                   const DtiParams& params);

// largest_component(fill_holes(dual_threshold_iteration(prob))), exactly in
// this order.
VoxelGrid postprocess(const VoxelGrid& prob, const DtiParams& params,
                      bool* empty_warning = nullptr);

}  // namespace airway
