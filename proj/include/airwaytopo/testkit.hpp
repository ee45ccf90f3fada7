#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airwaytopo/skeleton.hpp"
#include "airwaytopo/tree_parsing.hpp"
#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// Blueprint for a synthetic airway tree: straight tapered tubes in a binary
// branching layout with seeded angular jitter. Every bundle derived from a
// spec is a pure function of the spec, so generated fixtures double as exact
// oracles.
struct TreeSpec {
  int generations = 3;     // tree depth; the root branch is generation 0
  int branching_factor = 2;
  // One branch (by id, breadth-first order) may fork into three children
  // instead of two; -1 disables.
  std::int32_t trifurcation_branch = -1;
  double root_radius_vox = 3.0;
  double radius_decay = 0.8;  // per generation, in (0, 1)
  // One entry per generation. A generation-g branch tapers linearly from
  // root_radius * decay^g down to root_radius * decay^(g+1).
  std::vector<double> branch_length_vox = {16.0, 13.0, 11.0, 9.0};
  double branch_angle_deg = 30.0;     // child polar angle off the parent axis
  double angle_jitter_deg = 5.0;      // seeded, uniform, per child
  double azimuth_jitter_deg = 15.0;   // seeded rotation of the fork plane
  // Total turn of each branch along its length, bending in a seeded plane;
  // 0 keeps branches straight. Curved branches make realistic-looking masks
  // but their junction geometry is no longer exact, so the branch-count and
  // generation identities are only guaranteed for straight trees.
  double branch_curvature_deg = 0.0;
  Dims dims{96, 96, 96};
  std::uint64_t rng_seed = 1;
};

// A mask plus the exact metadata it was drawn from: the generator's own
// branch tree (ids breadth-first, generations graded, labels from the
// generation ladder) and the analytic centerline as a point set.
struct GroundTruthBundle {
  VoxelGrid mask;
  AirwayTree tree;
  SkeletonPointSet centerline;
  TreeSpec spec;  // the blueprint the bundle was drawn from
};

// Lays out the tree, verifies it fits (SpecDoesNotFit when a tube leaves the
// volume or two unrelated branches collide), and rasterizes it: a voxel is
// foreground iff its center lies within the local tube radius of a branch
// axis segment. The rasterized mask is certified to be a topological tree
// (connected, no tunnels, no cavities); shallow fork angles can fuse sibling
// tubes into a handle, which also raises SpecDoesNotFit.
GroundTruthBundle generate(const TreeSpec& spec);

// Euler characteristic of the foreground under 26-connectivity (background
// 6-connected): components - tunnels + cavities. Exactly 1 for a connected,
// cavity-free tree of tubes; generate() relies on this to reject layouts
// whose rasterization is not a tree.
std::int64_t euler_characteristic(const VoxelGrid& mask);

struct Ablation {
  enum class Mode { Whole, InteriorGap };
  Mode mode = Mode::Whole;
  // InteriorGap only: axial extent of the gap in voxels, and its start
  // offset along the branch axis (-1 centers the gap).
  double gap_len = 0.0;
  double gap_offset = -1.0;
};

// Whole: removes every foreground voxel whose nearest centerline point
// belongs to the branch (junction points shared with the parent stay with
// the parent). InteriorGap: cuts a gap_len-long slab out of the branch tube,
// strictly inside the branch — margins keep the cut clear of both junction
// balls (GapTooLarge otherwise).
VoxelGrid ablate_branch(const GroundTruthBundle& bundle,
                        std::int32_t branch_id, const Ablation& ablation);

// Foreground -> p_fg, background -> p_bg, then a separable box blur of the
// given radius (0 = none) with shrinking windows at the edges, so values
// stay within [p_bg, p_fg].
VoxelGrid to_probability(const VoxelGrid& mask, double p_fg, double p_bg,
                         int blur_radius);

std::string tree_spec_to_json(const TreeSpec& spec);
TreeSpec tree_spec_from_json(const std::string& text);

}  // namespace airway
