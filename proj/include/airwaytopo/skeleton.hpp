#pragma once

#include <unordered_map>
#include <vector>

#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// One-voxel-wide 26-connected skeleton of a binary mask, kept as an ordered
// point list plus a coord -> position lookup.
class SkeletonPointSet {
 public:
  SkeletonPointSet() = default;
  SkeletonPointSet(Dims dims, std::vector<VoxelCoord> points);

  const Dims& dims() const { return dims_; }
  const std::vector<VoxelCoord>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  bool contains(const VoxelCoord& c) const {
    return index_.count(linear(c)) != 0;
  }
  // Position in points() or -1.
  std::int32_t position_of(const VoxelCoord& c) const {
    auto it = index_.find(linear(c));
    return it == index_.end() ? -1 : it->second;
  }

  std::int64_t linear(const VoxelCoord& c) const {
    return (static_cast<std::int64_t>(c.z) * dims_.h + c.y) * dims_.w + c.x;
  }

  VoxelGrid to_mask(const Spacing& spacing = Spacing{}) const;

 private:
  Dims dims_;
  std::vector<VoxelCoord> points_;
  std::unordered_map<std::int64_t, std::int32_t> index_;
};

// Connected groups of ground-truth skeleton points missed by a prediction.
// A group is breakage-inducing when no point in it is an endpoint of the
// full skeleton (neighbor count <= 1): removing such a group cuts a line
// instead of merely shortening it.
struct MissedGroup {
  std::vector<VoxelCoord> points;
  bool is_breakage = false;
};

struct BreakageSet {
  std::vector<MissedGroup> groups;
  std::vector<VoxelCoord> breakage_points;  // union over breakage groups

  std::size_t breakage_group_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.is_breakage ? 1 : 0;
    return n;
  }
};

// Topology-preserving medial-axis thinning (Lee, Kashyap & Chu 1994;
// 6-subiteration border scheme with Euler-invariance and simple-point
// checks). Deterministic: fixed border order, lexicographic scan.
SkeletonPointSet skeletonize(const VoxelGrid& mask);

// Per skeleton point: number of other skeleton points in its 3x3x3
// neighborhood (equals the all-ones convolution over the skeleton indicator
// minus the center).
std::vector<int> neighbor_counts(const SkeletonPointSet& sk);

struct SkeletonSplit {
  std::vector<VoxelCoord> detected;
  std::vector<VoxelCoord> missed;
};

SkeletonSplit classify_skeleton_vs_prediction(const SkeletonPointSet& gt_skeleton,
                                              const VoxelGrid& pred);

// Groups missed skeleton points into 26-connected segments and flags the
// segments whose omission disconnects the skeleton. Neighbor counts are
// evaluated against the full ground-truth skeleton, not the missed subset.
BreakageSet detect_breakages(const SkeletonPointSet& gt_skeleton,
                             const VoxelGrid& pred);

}  // namespace airway
