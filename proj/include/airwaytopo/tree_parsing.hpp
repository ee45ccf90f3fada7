#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "airwaytopo/morphology.hpp"
#include "airwaytopo/skeleton.hpp"
#include "airwaytopo/voxel_grid.hpp"

namespace airway {

enum class BranchLabel {
  Trachea,
  MainBronchus,
  Lobar,
  Segmental,
  Distal,
  Unlabeled,
};

const char* branch_label_name(BranchLabel label);
BranchLabel branch_label_from_name(const std::string& name);

// One airway segment between consecutive branch points / endpoints.
// Centerlines run proximal -> distal. The integer centerline is canonical
// for topology and metric queries; `centerline_f` carries the float
// (voxel-unit) coordinates that smoothing produces, and is what length_mm
// is computed from.
struct Branch {
  std::int32_t id = -1;
  std::int32_t parent = -1;  // -1 on the root
  std::vector<std::int32_t> children;
  std::vector<VoxelCoord> centerline;
  std::vector<std::array<double, 3>> centerline_f;
  int generation = -1;  // -1 until graded
  BranchLabel label = BranchLabel::Unlabeled;
  double length_mm = 0.0;
  double mean_radius_vox = 0.0;
};

struct AirwayTree {
  std::vector<Branch> branches;  // indexed by id
  std::int32_t root = -1;
  Dims dims;
  Spacing spacing;

  const Branch& branch(std::int32_t id) const { return branches.at(id); }
  bool graded() const;
  bool labeled() const;
};

struct ParseParams {
  int smooth_window = 5;
  double prune_min_len_vox = 3.0;
  // Leaf branches within this many edges of the root are exempt from
  // length pruning (0 = only the root itself is protected).
  int prune_max_generation_protect = 0;
};

// Checks structural invariants (single root, acyclic parent/child links,
// child start adjacent to or shared with its parent, generation rule when
// graded); throws AirwayError on violation.
void validate_tree(const AirwayTree& tree);

// Splits a skeleton into branches at points with >= 3 neighbors. Junction
// clusters (26-connected runs of such points) act as single nodes; cluster
// points are carried on the inbound (parent-side) branch and each child
// starts at the cluster point it exits from. Root = the branch with the
// largest mean radius that ends in a skeleton endpoint (tie: endpoint with
// lexicographically largest (z,y,x)); with no radius field the tie-break
// alone decides.
AirwayTree parse_skeleton(const SkeletonPointSet& sk,
                          const DistanceField* radius = nullptr,
                          const Spacing& spacing = Spacing{});

// Symmetric moving average over each centerline with both endpoints
// anchored; the window shrinks near the ends so the filter stays centered.
// Float coordinates keep the smoothed values; integer coordinates are the
// rounded (and consecutively deduplicated) version.
AirwayTree smooth_centerlines(const AirwayTree& tree, int window);

// Iterates to a fixed point: remove leaf branches shorter than
// prune_min_len_vox (voxel-unit length), then merge every branch that has
// exactly one child into that child. The root is never removed.
AirwayTree prune(const AirwayTree& tree, const ParseParams& params);

// Root generation 0, every child = parent + 1.
AirwayTree grade_topology(const AirwayTree& tree);

// Generation -> label: 0 Trachea, 1 MainBronchus, 2 Lobar, 3 Segmental,
// >= 4 Distal; a generation-2 branch nearly collinear with its parent
// (< collinear_deg) and nearly as wide (mean radius >= radius_ratio x
// parent's) absorbs the parent's label and shifts its subtree up one
// effective generation. Stored generations are left untouched.
AirwayTree match_anatomy(const AirwayTree& tree, double collinear_deg = 15.0,
                         double radius_ratio = 0.8);

// skeletonize -> parse_skeleton -> smooth -> prune -> grade -> match,
// with branch radii sampled from the mask's distance-to-background field.
AirwayTree parse_pipeline(const VoxelGrid& mask, const ParseParams& params);

std::string tree_to_json(const AirwayTree& tree);
AirwayTree tree_from_json(const std::string& text);

}  // namespace airway
