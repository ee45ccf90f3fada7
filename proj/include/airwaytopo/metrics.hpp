#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "airwaytopo/tree_parsing.hpp"
#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// Per-branch detection rule: a branch counts as detected when the fraction
// of its centerline length found in the prediction reaches the threshold
// (inclusive). Exposed as a parameter because challenge write-ups never pin
// the exact per-branch criterion.
struct BdParams {
  double branch_detect_threshold = 0.8;  // must lie in (0, 1]
};

// One row per reference branch in an evaluation report.
struct BranchReport {
  std::int32_t id = -1;
  BranchLabel label = BranchLabel::Unlabeled;
  double detected_fraction = 0.0;
  bool detected = false;
};

// Full evaluation of a predicted mask against a reference mask. All scores
// are fractions in [0, 1]. The hierarchical entries are absent (nullopt)
// when the reference tree has no branch of that class, which is different
// from scoring 0 on a populated class.
struct EvalReport {
  double td = 0.0;   // tree length detected
  double bd = 0.0;   // branches detected
  double dsc = 0.0;  // Dice similarity
  double pre = 0.0;  // precision
  std::optional<double> td_large;
  std::optional<double> bd_large;
  std::optional<double> td_small;
  std::optional<double> bd_small;
  double wms = 0.0;  // 0.3*td + 0.3*bd + 0.2*dsc + 0.2*pre
  std::vector<BranchReport> per_branch;
};

// Dice similarity 2|P&G| / (|P| + |G|); defined as 1.0 when both masks are
// empty. Throws DimMismatch on shape disagreement.
double dsc(const VoxelGrid& pred, const VoxelGrid& gt);

// |P&G| / |P|; defined as 1.0 when the prediction is empty.
double precision(const VoxelGrid& pred, const VoxelGrid& gt);

// Detected tree length. A centerline step (consecutive point pair) counts as
// detected when BOTH endpoints lie inside the prediction; step lengths are
// measured in mm via the tree spacing. per_branch holds one detected-length
// fraction per branch id; a single-point branch has no steps, so its
// fraction is the membership of that point and it contributes no length to
// the aggregate td.
struct TreeLengthResult {
  double td = 0.0;
  std::vector<double> per_branch;
};
TreeLengthResult tree_length_detected(const AirwayTree& gt_tree,
                                      const VoxelGrid& pred);

// Per-branch detection flags (fraction >= threshold) and their mean.
struct BranchDetectResult {
  double bd = 0.0;
  std::vector<bool> per_branch;
};
BranchDetectResult branch_detected(const AirwayTree& gt_tree,
                                   const VoxelGrid& pred,
                                   const BdParams& params = {});

// TD/BD restricted to anatomical classes: Large = trachea + main bronchi +
// lobar bronchi, Small = segmental bronchi. Distal branches belong to
// neither class. An entry is nullopt when its class has no branches. Throws
// UnlabeledTree when any branch is unlabeled.
struct HierarchicalResult {
  std::optional<double> td_large;
  std::optional<double> bd_large;
  std::optional<double> td_small;
  std::optional<double> bd_small;
};
HierarchicalResult hierarchical_metrics(const AirwayTree& gt_tree,
                                        const VoxelGrid& pred,
                                        const BdParams& params = {});

// 0.3*td + 0.3*bd + 0.2*dsc + 0.2*pre. Works on fractions or percentages as
// long as all four inputs share one scale; throws OutOfRange outside
// [0, 100].
double weighted_mean_score(double td, double bd, double dsc, double pre);

// Parses the reference mask into a labeled tree (skeletonize/parse/smooth/
// prune/grade/label) and scores the prediction against it. The prediction is
// evaluated exactly as given; no post-processing is applied here.
EvalReport evaluate_case(const VoxelGrid& pred, const VoxelGrid& gt,
                         const ParseParams& parse_params = {},
                         const BdParams& bd_params = {});

// JSON object with td/bd/dsc/pre, the four hierarchical entries (null when
// absent), wms, and per_branch rows {id, label, detected_fraction,
// detected}.
std::string report_to_json(const EvalReport& report);

}  // namespace airway
