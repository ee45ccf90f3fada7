#pragma once

#include <cstdint>
#include <vector>

#include "airwaytopo/skeleton.hpp"
#include "airwaytopo/tree_parsing.hpp"
#include "airwaytopo/voxel_grid.hpp"

namespace airway {

// Overlap-loss exponent and Tversky-style weights; defaults follow the
// stage-2 recipe (gamma 0.7, alpha 0.2, beta 0.8).
struct GulParams {
  double gamma = 0.7;  // in (0, 1]
  double alpha = 0.2;  // > 0, weights predicted volume (false positives)
  double beta = 0.8;   // > 0, weights reference volume (false negatives)
};

// Centerline-distance weighting. k_cap bounds the breakage-emphasis term.
// The literal emphasis term min(1 - d, K) goes negative for d > 1; the
// clamp flag (default on) floors it at zero instead. Both readings are
// supported because tube voxels adjacent to a breakage sit at d up to
// sqrt(3).
struct CenterlineParams {
  double k_cap = 2.0;
  bool eta_term_clamped_nonneg = true;
};

// Per-voxel weight fields; w = w_l + w_c elementwise.
struct WeightField {
  std::vector<double> w_l;
  std::vector<double> w_c;
  std::vector<double> w;
};

// Builds the summed field; the inputs must have equal length.
WeightField combine_weights(std::vector<double> w_l, std::vector<double> w_c);

// 1 - 2*sum(p*g) / sum(p + g); defined as 0 when both fields are all-zero.
// p holds values in [0, 1]; g is a Binary grid.
double dice_loss(const VoxelGrid& p, const VoxelGrid& g);

// Branch-size weights: each foreground voxel is assigned to the branch
// owning its nearest centerline point and weighted by
// clamp((V_max / V_b)^kappa, 1, cap), where V_b counts the voxels assigned
// to that branch and V_max is the largest such count. Background voxels get
// weight 1.
std::vector<double> local_imbalance_weights(const VoxelGrid& g,
                                            const AirwayTree& gt_tree,
                                            double kappa = 0.5,
                                            double cap = 8.0);

// 1 - sum(w_l * p^gamma * g) / sum(w_l * (alpha*p + beta*g)); 0 when the
// denominator vanishes.
double gul(const VoxelGrid& p, const VoxelGrid& g,
           const std::vector<double>& w_l, const GulParams& params = {});

// w_c = (1 - d/d_max)^2 + eta * min(1 - d, k_cap), with d the voxel-unit
// distance to the centerline, d_max its maximum over foreground voxels of g,
// and eta = 1 on the breakage points dilated by one voxel. Computed for
// every voxel of the volume.
std::vector<double> centerline_weights(const VoxelGrid& g,
                                       const SkeletonPointSet& centerline,
                                       const BreakageSet& breakages,
                                       const CenterlineParams& params = {});

// 1 - sum(w*p*g) / sum(w*(p+g)) restricted to centerline voxels. There is
// deliberately no factor 2, so a perfect binary prediction scores 0.5.
double atrl(const VoxelGrid& p, const VoxelGrid& g,
            const SkeletonPointSet& centerline, const WeightField& w);

// Stage-3 hybrid: gul + atrl.
double stage3_loss(const VoxelGrid& p, const VoxelGrid& g,
                   const std::vector<double>& w_l,
                   const SkeletonPointSet& centerline, const WeightField& w,
                   const GulParams& params = {});

// Closed-form quotient-rule d(loss)/dp fields, one value per voxel.
std::vector<double> dice_loss_gradient(const VoxelGrid& p,
                                       const VoxelGrid& g);

// Throws SingularPoint when gamma < 1 and some reference-foreground voxel
// has p exactly 0 (the p^(gamma-1) factor is unbounded there).
std::vector<double> gul_gradient(const VoxelGrid& p, const VoxelGrid& g,
                                 const std::vector<double>& w_l,
                                 const GulParams& params = {});

// Zero at every voxel off the centerline.
std::vector<double> atrl_gradient(const VoxelGrid& p, const VoxelGrid& g,
                                  const SkeletonPointSet& centerline,
                                  const WeightField& w);

}  // namespace airway
