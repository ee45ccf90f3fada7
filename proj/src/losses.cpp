#include "airwaytopo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "airwaytopo/morphology.hpp"

namespace airway {

namespace {

void require_binary(const VoxelGrid& grid, const char* role) {
  if (grid.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange,
                      std::string(role) + " must be a Binary grid");
}

void require_gul_params(const GulParams& params) {
  if (!(params.gamma > 0.0 && params.gamma <= 1.0))
    throw AirwayError(ErrorCode::BadConfig, "gamma must lie in (0, 1]");
  if (!(params.alpha > 0.0 && params.beta > 0.0))
    throw AirwayError(ErrorCode::BadConfig, "alpha and beta must be positive");
}

void require_weights(const std::vector<double>& w, const VoxelGrid& g,
                     const char* name) {
  if (w.size() != static_cast<std::size_t>(g.size()))
    throw AirwayError(ErrorCode::DimMismatch,
                      std::string(name) + " length differs from volume size");
}

void require_centerline(const SkeletonPointSet& centerline,
                        const VoxelGrid& g) {
  if (centerline.empty())
    throw AirwayError(ErrorCode::EmptyCenterline, "centerline has no points");
  if (!(centerline.dims() == g.dims()))
    throw AirwayError(ErrorCode::DimMismatch,
                      "centerline dims differ from volume dims");
}

}  // namespace

WeightField combine_weights(std::vector<double> w_l, std::vector<double> w_c) {
  if (w_l.size() != w_c.size())
    throw AirwayError(ErrorCode::DimMismatch,
                      "weight fields differ in length");
  WeightField field;
  field.w.resize(w_l.size());
  for (std::size_t i = 0; i < w_l.size(); ++i)
    field.w[i] = w_l[i] + w_c[i];
  field.w_l = std::move(w_l);
  field.w_c = std::move(w_c);
  return field;
}

double dice_loss(const VoxelGrid& p, const VoxelGrid& g) {
  require_binary(g, "reference");
  require_same_dims(p, g);
  double num = 0.0;
  double den = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    const double gi = g[i];
    num += pi * gi;
    den += pi + gi;
  }
  if (den == 0.0) return 0.0;
  return 1.0 - 2.0 * num / den;
}

std::vector<double> local_imbalance_weights(const VoxelGrid& g,
                                            const AirwayTree& gt_tree,
                                            double kappa, double cap) {
  require_binary(g, "reference");
  if (gt_tree.branches.empty() || gt_tree.root < 0)
    throw AirwayError(ErrorCode::UnparsedTree, "tree has no branches");
  if (!(gt_tree.dims == g.dims()))
    throw AirwayError(ErrorCode::DimMismatch,
                      "tree dims differ from volume dims");
  if (!(kappa > 0.0) || !(cap >= 1.0))
    throw AirwayError(ErrorCode::BadConfig,
                      "kappa must be positive and cap at least 1");

  // Centerline points, each owned by one branch; junction points shared
  // between a parent and a child stay with the lower (parent) id.
  std::vector<VoxelCoord> sites;
  std::unordered_map<std::int64_t, std::int32_t> site_branch;
  for (const Branch& b : gt_tree.branches) {
    for (const VoxelCoord& c : b.centerline) {
      const std::int64_t lin = g.index(c);
      if (site_branch.emplace(lin, b.id).second) sites.push_back(c);
    }
  }

  const FeatureTransform ft = feature_transform(g.dims(), sites);

  std::vector<std::int64_t> volume(gt_tree.branches.size(), 0);
  std::vector<std::int32_t> assigned(g.size(), -1);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    if (!g.foreground(i)) continue;
    const std::int32_t b = site_branch.at(ft.nearest_site[i]);
    assigned[i] = b;
    ++volume[b];
  }
  const std::int64_t v_max =
      *std::max_element(volume.begin(), volume.end());

  std::vector<double> w(g.size(), 1.0);
  if (v_max == 0) return w;  // empty mask: every voxel is background
  std::vector<double> per_branch(gt_tree.branches.size(), 1.0);
  for (std::size_t b = 0; b < per_branch.size(); ++b) {
    if (volume[b] == 0) continue;
    const double raw = std::pow(static_cast<double>(v_max) /
                                    static_cast<double>(volume[b]),
                                kappa);
    per_branch[b] = std::clamp(raw, 1.0, cap);
  }
  for (std::int64_t i = 0; i < g.size(); ++i)
    if (assigned[i] >= 0) w[i] = per_branch[assigned[i]];
  return w;
}

double gul(const VoxelGrid& p, const VoxelGrid& g,
           const std::vector<double>& w_l, const GulParams& params) {
  require_binary(g, "reference");
  require_same_dims(p, g);
  require_weights(w_l, g, "w_l");
  require_gul_params(params);

  double num = 0.0;
  double den = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    const double gi = g[i];
    if (gi != 0.0) num += w_l[i] * std::pow(pi, params.gamma) * gi;
    den += w_l[i] * (params.alpha * pi + params.beta * gi);
  }
  if (den == 0.0) return 0.0;
  return 1.0 - num / den;
}

std::vector<double> centerline_weights(const VoxelGrid& g,
                                       const SkeletonPointSet& centerline,
                                       const BreakageSet& breakages,
                                       const CenterlineParams& params) {
  require_binary(g, "reference");
  require_centerline(centerline, g);
  if (!(params.k_cap > 0.0))
    throw AirwayError(ErrorCode::BadConfig, "k_cap must be positive");

  const DistanceField df = distance_to_points(g.dims(), centerline.points());

  double d_max = 0.0;
  for (std::int64_t i = 0; i < g.size(); ++i)
    if (g.foreground(i))
      d_max = std::max(d_max, static_cast<double>(df.values[i]));

  // Breakage indicator, dilated by one voxel in every direction.
  std::vector<std::uint8_t> eta(g.size(), 0);
  const Dims& dims = g.dims();
  for (const VoxelCoord& c : breakages.breakage_points)
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::int64_t z = c.z + dz;
          const std::int64_t y = c.y + dy;
          const std::int64_t x = c.x + dx;
          if (z < 0 || z >= dims.d || y < 0 || y >= dims.h || x < 0 ||
              x >= dims.w)
            continue;
          eta[g.index(z, y, x)] = 1;
        }

  std::vector<double> w(g.size(), 0.0);
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const double d = df.values[i];
    const double ratio = d_max > 0.0 ? d / d_max : (d > 0.0 ? 1.0 : 0.0);
    double value = (1.0 - ratio) * (1.0 - ratio);
    if (eta[i]) {
      double term = std::min(1.0 - d, params.k_cap);
      if (params.eta_term_clamped_nonneg) term = std::max(term, 0.0);
      value += term;
    }
    w[i] = value;
  }
  return w;
}

double atrl(const VoxelGrid& p, const VoxelGrid& g,
            const SkeletonPointSet& centerline, const WeightField& w) {
  require_binary(g, "reference");
  require_same_dims(p, g);
  require_centerline(centerline, g);
  require_weights(w.w, g, "w");

  double num = 0.0;
  double den = 0.0;
  for (const VoxelCoord& c : centerline.points()) {
    const std::int64_t i = p.index(c);
    const double wi = w.w[i];
    const double pi = p[i];
    const double gi = g[i];
    num += wi * pi * gi;
    den += wi * (pi + gi);
  }
  if (den == 0.0) return 0.0;
  return 1.0 - num / den;
}

double stage3_loss(const VoxelGrid& p, const VoxelGrid& g,
                   const std::vector<double>& w_l,
                   const SkeletonPointSet& centerline, const WeightField& w,
                   const GulParams& params) {
  return gul(p, g, w_l, params) + atrl(p, g, centerline, w);
}

std::vector<double> dice_loss_gradient(const VoxelGrid& p,
                                       const VoxelGrid& g) {
  require_binary(g, "reference");
  require_same_dims(p, g);

  double num = 0.0;  // 2*sum(p*g)
  double den = 0.0;  // sum(p + g)
  for (std::int64_t i = 0; i < p.size(); ++i) {
    num += 2.0 * static_cast<double>(p[i]) * g[i];
    den += static_cast<double>(p[i]) + g[i];
  }
  std::vector<double> grad(p.size(), 0.0);
  if (den == 0.0) return grad;
  const double den2 = den * den;
  for (std::int64_t i = 0; i < p.size(); ++i)
    grad[i] = (num - 2.0 * g[i] * den) / den2;
  return grad;
}

std::vector<double> gul_gradient(const VoxelGrid& p, const VoxelGrid& g,
                                 const std::vector<double>& w_l,
                                 const GulParams& params) {
  require_binary(g, "reference");
  require_same_dims(p, g);
  require_weights(w_l, g, "w_l");
  require_gul_params(params);

  double num = 0.0;
  double den = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    const double gi = g[i];
    if (gi != 0.0) {
      if (params.gamma < 1.0 && pi == 0.0)
        throw AirwayError(ErrorCode::SingularPoint,
                          "gradient of p^gamma is unbounded at p = 0");
      num += w_l[i] * std::pow(pi, params.gamma) * gi;
    }
    den += w_l[i] * (params.alpha * pi + params.beta * gi);
  }
  std::vector<double> grad(p.size(), 0.0);
  if (den == 0.0) return grad;
  const double den2 = den * den;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double d_num =
        gi != 0.0
            ? w_l[i] * params.gamma * std::pow(p[i], params.gamma - 1.0) * gi
            : 0.0;
    const double d_den = w_l[i] * params.alpha;
    grad[i] = (num * d_den - d_num * den) / den2;
  }
  return grad;
}

std::vector<double> atrl_gradient(const VoxelGrid& p, const VoxelGrid& g,
                                  const SkeletonPointSet& centerline,
                                  const WeightField& w) {
  require_binary(g, "reference");
  require_same_dims(p, g);
  require_centerline(centerline, g);
  require_weights(w.w, g, "w");

  double num = 0.0;
  double den = 0.0;
  for (const VoxelCoord& c : centerline.points()) {
    const std::int64_t i = p.index(c);
    num += w.w[i] * static_cast<double>(p[i]) * g[i];
    den += w.w[i] * (static_cast<double>(p[i]) + g[i]);
  }
  std::vector<double> grad(p.size(), 0.0);
  if (den == 0.0) return grad;
  const double den2 = den * den;
  for (const VoxelCoord& c : centerline.points()) {
    const std::int64_t i = p.index(c);
    const double d_num = w.w[i] * g[i];
    const double d_den = w.w[i];
    grad[i] = (num * d_den - d_num * den) / den2;
  }
  return grad;
}

}  // namespace airway
