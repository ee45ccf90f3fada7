#include "airwaytopo/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace airway {
namespace {

struct Offset {
  std::int32_t z, y, x;
};

// 6-neighborhood, then the remaining 20 of the 26-neighborhood.
constexpr Offset kNeighbors26[26] = {
    {-1, 0, 0}, {1, 0, 0},  {0, -1, 0}, {0, 1, 0},  {0, 0, -1}, {0, 0, 1},
    {-1, -1, 0}, {-1, 1, 0}, {-1, 0, -1}, {-1, 0, 1}, {1, -1, 0}, {1, 1, 0},
    {1, 0, -1}, {1, 0, 1},  {0, -1, -1}, {0, -1, 1}, {0, 1, -1}, {0, 1, 1},
    {-1, -1, -1}, {-1, -1, 1}, {-1, 1, -1}, {-1, 1, 1},
    {1, -1, -1}, {1, -1, 1}, {1, 1, -1}, {1, 1, 1}};

void require_binary(const VoxelGrid& mask) {
  if (mask.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange, "operation requires a Binary grid");
}

}  // namespace

LabelGrid connected_components(const VoxelGrid& mask, int connectivity) {
  require_binary(mask);
  if (connectivity != 6 && connectivity != 26)
    throw AirwayError(ErrorCode::BadConfig, "connectivity must be 6 or 26");

  const Dims dims = mask.dims();
  const std::int64_t n = dims.count();
  const int n_offsets = connectivity == 6 ? 6 : 26;

  std::vector<std::int32_t> labels(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> sizes(1, 0);
  std::vector<std::int64_t> seeds(1, 0);
  std::vector<std::int64_t> stack;

  std::int32_t next_label = 1;
  for (std::int64_t start = 0; start < n; ++start) {
    if (!mask.foreground(start) || labels[start] != 0) continue;

    const std::int32_t label = next_label++;
    std::int64_t size = 0;
    labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      ++size;
      const VoxelCoord c = mask.coord(cur);
      for (int k = 0; k < n_offsets; ++k) {
        const std::int64_t z = c.z + kNeighbors26[k].z;
        const std::int64_t y = c.y + kNeighbors26[k].y;
        const std::int64_t x = c.x + kNeighbors26[k].x;
        if (!mask.in_bounds(z, y, x)) continue;
        const std::int64_t idx = mask.index(z, y, x);
        if (labels[idx] == 0 && mask.foreground(idx)) {
          labels[idx] = label;
          stack.push_back(idx);
        }
      }
    }
    sizes.push_back(size);
    seeds.push_back(start);  // raster scan order: start is the min index
  }

  // Canonical relabeling: decreasing size, ties by smaller seed index.
  const std::int32_t k = next_label - 1;
  std::vector<std::int32_t> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 1);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
    return seeds[a] < seeds[b];
  });
  std::vector<std::int32_t> remap(static_cast<std::size_t>(k) + 1, 0);
  for (std::int32_t i = 0; i < k; ++i) remap[order[i]] = i + 1;

  LabelGrid out;
  out.dims = dims;
  out.spacing = mask.spacing();
  out.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out.labels[i] = remap[labels[i]];
  out.component_sizes.assign(static_cast<std::size_t>(k) + 1, 0);
  for (std::int32_t i = 0; i < k; ++i)
    out.component_sizes[i + 1] = sizes[order[i]];
  return out;
}

VoxelGrid largest_component(const VoxelGrid& mask, bool* empty_warning) {
  require_binary(mask);
  if (empty_warning) *empty_warning = false;

  const LabelGrid cc = connected_components(mask, 26);
  VoxelGrid out(mask.dims(), mask.spacing(), GridKind::Binary);
  if (cc.label_count() == 0) {
    if (empty_warning) *empty_warning = true;
    return out;
  }
  for (std::size_t i = 0; i < cc.labels.size(); ++i)
    if (cc.labels[i] == 1) out.set_linear(static_cast<std::int64_t>(i), 1.0f);
  return out;
}

VoxelGrid fill_holes(const VoxelGrid& mask) {
  require_binary(mask);
  const Dims dims = mask.dims();
  const std::int64_t n = dims.count();

  // Flood the background from the volume boundary with 6-connectivity;
  // whatever background is left unreached is a cavity.
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> stack;
  auto try_seed = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    const std::int64_t idx = mask.index(z, y, x);
    if (!outside[idx] && !mask.foreground(idx)) {
      outside[idx] = 1;
      stack.push_back(idx);
    }
  };
  for (std::int64_t z = 0; z < dims.d; ++z)
    for (std::int64_t y = 0; y < dims.h; ++y)
      for (std::int64_t x = 0; x < dims.w; ++x)
        if (z == 0 || z == dims.d - 1 || y == 0 || y == dims.h - 1 || x == 0 ||
            x == dims.w - 1)
          try_seed(z, y, x);

  while (!stack.empty()) {
    const std::int64_t cur = stack.back();
    stack.pop_back();
    const VoxelCoord c = mask.coord(cur);
    for (int k = 0; k < 6; ++k) {
      const std::int64_t z = c.z + kNeighbors26[k].z;
      const std::int64_t y = c.y + kNeighbors26[k].y;
      const std::int64_t x = c.x + kNeighbors26[k].x;
      if (!mask.in_bounds(z, y, x)) continue;
      const std::int64_t idx = mask.index(z, y, x);
      if (!outside[idx] && !mask.foreground(idx)) {
        outside[idx] = 1;
        stack.push_back(idx);
      }
    }
  }

  VoxelGrid out(dims, mask.spacing(), GridKind::Binary);
  for (std::int64_t i = 0; i < n; ++i)
    out.set_linear(i, (mask.foreground(i) || !outside[i]) ? 1.0f : 0.0f);
  return out;
}

namespace {

constexpr float kInf = std::numeric_limits<float>::infinity();

// 1D lower-envelope pass over squared distances, tracking which input cell
// the winning parabola came from so the nearest-site feature can propagate.
// Coordinates and squared distances stay integer-valued, so arithmetic in
// double keeps the output exact.
void edt_1d(const float* f, const std::int64_t* feat_in, std::int64_t n,
            std::int64_t stride, float* d, std::int64_t* feat_out,
            std::vector<std::int32_t>& v, std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  constexpr double kDInf = std::numeric_limits<double>::infinity();

  auto intersect = [&](std::int32_t p, std::int32_t q) {
    const double fp = f[p * stride];
    const double fq = f[q * stride];
    return (fq + static_cast<double>(q) * q - (fp + static_cast<double>(p) * p)) /
           (2.0 * (q - p));
  };

  int k = -1;  // index of the rightmost parabola, -1 while none seen
  for (std::int32_t q = 0; q < n; ++q) {
    if (f[q * stride] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kDInf;
      z[1] = kDInf;
      continue;
    }
    double s = intersect(v[k], q);
    while (s <= z[k]) {
      --k;
      s = intersect(v[k], q);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kDInf;
  }

  if (k < 0) {
    for (std::int64_t q = 0; q < n; ++q) {
      d[q * stride] = kInf;
      feat_out[q * stride] = -1;
    }
    return;
  }

  k = 0;
  for (std::int32_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const std::int32_t p = v[k];
    const float dq = static_cast<float>(q - p);
    d[q * stride] = dq * dq + f[p * stride];
    feat_out[q * stride] = feat_in[p * stride];
  }
}

}  // namespace

namespace {

// Shared three-pass driver over pre-seeded squared-distance / feature
// arrays (0 and own index on targets, +inf and -1 elsewhere).
FeatureTransform run_edt(const Dims& dims, std::vector<float> dist,
                         std::vector<std::int64_t> feat) {
  std::vector<float> buf_d(dist.size());
  std::vector<std::int64_t> buf_f(feat.size());
  std::vector<std::int32_t> v;
  std::vector<double> z;

  // Pass along x.
  for (std::int64_t zz = 0; zz < dims.d; ++zz)
    for (std::int64_t yy = 0; yy < dims.h; ++yy) {
      const std::int64_t base = (zz * dims.h + yy) * dims.w;
      edt_1d(dist.data() + base, feat.data() + base, dims.w, 1,
             buf_d.data() + base, buf_f.data() + base, v, z);
    }
  dist.swap(buf_d);
  feat.swap(buf_f);

  // Pass along y.
  for (std::int64_t zz = 0; zz < dims.d; ++zz)
    for (std::int64_t xx = 0; xx < dims.w; ++xx) {
      const std::int64_t base = zz * dims.h * dims.w + xx;
      edt_1d(dist.data() + base, feat.data() + base, dims.h, dims.w,
             buf_d.data() + base, buf_f.data() + base, v, z);
    }
  dist.swap(buf_d);
  feat.swap(buf_f);

  // Pass along z.
  for (std::int64_t yy = 0; yy < dims.h; ++yy)
    for (std::int64_t xx = 0; xx < dims.w; ++xx) {
      const std::int64_t base = yy * dims.w + xx;
      edt_1d(dist.data() + base, feat.data() + base, dims.d, dims.h * dims.w,
             buf_d.data() + base, buf_f.data() + base, v, z);
    }
  dist.swap(buf_d);
  feat.swap(buf_f);

  FeatureTransform out;
  out.distance.dims = dims;
  out.distance.values.resize(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i)
    out.distance.values[i] = std::sqrt(dist[i]);
  out.nearest_site = std::move(feat);
  return out;
}

}  // namespace

FeatureTransform feature_transform(const Dims& dims,
                                   const std::vector<VoxelCoord>& targets) {
  if (targets.empty())
    throw AirwayError(ErrorCode::EmptyTargetSet, "no target points");
  const std::int64_t n = dims.count();
  VoxelGrid probe(dims, Spacing{}, GridKind::Binary);  // for index math

  std::vector<float> dist(static_cast<std::size_t>(n), kInf);
  std::vector<std::int64_t> feat(static_cast<std::size_t>(n), -1);
  for (const VoxelCoord& t : targets) {
    if (!probe.in_bounds(t))
      throw AirwayError(ErrorCode::OutOfRange, "target point out of bounds");
    const std::int64_t idx = probe.index(t);
    dist[idx] = 0.0f;
    feat[idx] = idx;
  }
  return run_edt(dims, std::move(dist), std::move(feat));
}

DistanceField distance_to_points(const Dims& dims,
                                 const std::vector<VoxelCoord>& targets) {
  return feature_transform(dims, targets).distance;
}

DistanceField distance_to_background(const VoxelGrid& mask) {
  const std::int64_t n = mask.size();
  std::vector<float> dist(static_cast<std::size_t>(n));
  std::vector<std::int64_t> feat(static_cast<std::size_t>(n));
  std::int64_t seeds = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const bool bg = !mask.foreground(i);
    dist[i] = bg ? 0.0f : kInf;
    feat[i] = bg ? i : -1;
    seeds += bg ? 1 : 0;
  }
  if (seeds == 0)
    throw AirwayError(ErrorCode::EmptyTargetSet, "mask has no background");
  return run_edt(mask.dims(), std::move(dist), std::move(feat)).distance;
}

VoxelGrid dual_threshold_iteration(const VoxelGrid& prob,
                                   const DtiParams& params) {
  if (prob.kind() != GridKind::Probability)
    throw AirwayError(ErrorCode::OutOfRange, "DTI requires a Probability grid");
  if (!(params.t_low >= 0.0 && params.t_low <= params.t_high &&
        params.t_high <= 1.0))
    throw AirwayError(ErrorCode::BadConfig,
                      "DTI thresholds need 0 <= t_low <= t_high <= 1");

  const Dims dims = prob.dims();
  const std::int64_t n = dims.count();
  const float t_high = static_cast<float>(params.t_high);
  const float t_low = static_cast<float>(params.t_low);

  VoxelGrid out(dims, prob.spacing(), GridKind::Binary);
  std::vector<std::int64_t> stack;
  for (std::int64_t i = 0; i < n; ++i) {
    if (prob[i] >= t_high) {
      out.set_linear(i, 1.0f);
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::int64_t cur = stack.back();
    stack.pop_back();
    const VoxelCoord c = prob.coord(cur);
    for (const Offset& o : kNeighbors26) {
      const std::int64_t z = c.z + o.z;
      const std::int64_t y = c.y + o.y;
      const std::int64_t x = c.x + o.x;
      if (!prob.in_bounds(z, y, x)) continue;
      const std::int64_t idx = prob.index(z, y, x);
      if (out[idx] == 0.0f && prob[idx] >= t_low) {
        out.set_linear(idx, 1.0f);
        stack.push_back(idx);
      }
    }
  }
  return out;
}

VoxelGrid postprocess(const VoxelGrid& prob, const DtiParams& params,
                      bool* empty_warning) {
  return largest_component(fill_holes(dual_threshold_iteration(prob, params)),
                           empty_warning);
}

}  // namespace airway
