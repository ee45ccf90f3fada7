#include "airwaytopo/testkit.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "airwaytopo/errors.hpp"
#include "airwaytopo/morphology.hpp"
#include "airwaytopo/skeleton.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace airway {

namespace {

using Vec = std::array<double, 3>;  // (z, y, x), like VoxelCoord

Vec operator+(const Vec& a, const Vec& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
Vec operator-(const Vec& a, const Vec& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec& a, const Vec& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
Vec cross(const Vec& a, const Vec& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

// Any orthonormal pair spanning the plane perpendicular to unit vector d.
std::pair<Vec, Vec> perpendicular_frame(const Vec& d) {
  const Vec ref = std::abs(d[0]) < 0.9 ? Vec{1, 0, 0} : Vec{0, 1, 0};
  Vec u = ref - dot(ref, d) * d;
  u = (1.0 / norm(u)) * u;
  return {u, cross(d, u)};
}

constexpr double kPi = std::numbers::pi;

double radians(double deg) { return deg * kPi / 180.0; }

struct Tube {
  std::int32_t parent = -1;
  int gen = 0;
  Vec start{};
  Vec dir{};  // unit tangent at the start
  double len = 0.0;  // arc length
  double r0 = 0.0;   // radius at start
  double r1 = 0.0;   // radius at end
  double turn = 0.0;  // total bend over the length, radians; 0 = straight
  Vec bend{};         // unit normal spanning the bend plane with dir
  std::vector<std::int32_t> children;

  // Circular arc of radius len/turn through the bend plane. The turn == 0
  // branches are not just limits: they keep the straight fixtures
  // bit-identical to the pre-curvature generator.
  Vec pos_at(double s) const {
    if (turn == 0.0) return start + s * dir;
    const double theta = turn * (s / len);
    const double radius = len / turn;
    return start + (radius * std::sin(theta)) * dir +
           (radius * (1.0 - std::cos(theta))) * bend;
  }
  Vec tangent_at(double s) const {
    if (turn == 0.0) return dir;
    const double theta = turn * (s / len);
    return std::cos(theta) * dir + std::sin(theta) * bend;
  }
  Vec end() const { return pos_at(len); }
};

// Polyline approximation of a tube's axis as (position, arc length) knots.
// Straight tubes get a single segment, which downstream code treats exactly
// like the analytic capsule; arcs are sampled finely enough that the
// sagitta per segment stays far below voxel resolution.
std::vector<std::pair<Vec, double>> axis_knots(const Tube& tube) {
  std::vector<std::pair<Vec, double>> knots;
  if (tube.turn == 0.0) {
    knots.push_back({tube.start, 0.0});
    knots.push_back({tube.end(), tube.len});
    return knots;
  }
  const int steps = std::max(2, static_cast<int>(std::ceil(tube.len / 0.75)));
  for (int j = 0; j <= steps; ++j) {
    const double s = tube.len * j / steps;
    knots.push_back({tube.pos_at(s), s});
  }
  return knots;
}

// Point-in-tube test for a curved tube: the union of tapered capsules over
// the axis polyline, with the radius evaluated at the arc length of the
// covering segment.
bool arc_covers(const std::vector<std::pair<Vec, double>>& knots,
                const Tube& tube, const Vec& p) {
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    const Vec& a = knots[j].first;
    const Vec seg = knots[j + 1].first - a;
    const double t =
        std::clamp(dot(p - a, seg) / dot(seg, seg), 0.0, 1.0);
    const Vec proj = a + t * seg;
    const double s =
        knots[j].second + t * (knots[j + 1].second - knots[j].second);
    const double radius = tube.r0 + (s / tube.len) * (tube.r1 - tube.r0);
    if (dot(p - proj, p - proj) <= radius * radius) return true;
  }
  return false;
}

void validate_spec(const TreeSpec& spec) {
  if (spec.generations < 0)
    throw AirwayError(ErrorCode::BadConfig, "generations must be >= 0");
  if (spec.branching_factor != 2)
    throw AirwayError(ErrorCode::BadConfig,
                      "only binary trees are supported (a single "
                      "trifurcation goes through trifurcation_branch)");
  if (spec.branch_length_vox.size() !=
      static_cast<std::size_t>(spec.generations) + 1)
    throw AirwayError(ErrorCode::BadConfig,
                      "need one branch length per generation");
  for (double len : spec.branch_length_vox)
    if (len < 4.0)
      throw AirwayError(ErrorCode::BadConfig,
                        "branch lengths must be at least 4 voxels");
  if (spec.radius_decay <= 0.0 || spec.radius_decay >= 1.0)
    throw AirwayError(ErrorCode::BadConfig,
                      "radius_decay must lie in (0, 1)");
  if (spec.root_radius_vox < 1.0)
    throw AirwayError(ErrorCode::BadConfig, "root radius must be >= 1 voxel");
  if (spec.root_radius_vox *
          std::pow(spec.radius_decay, spec.generations + 1) <
      1.0)
    throw AirwayError(ErrorCode::BadConfig,
                      "tapered leaf radius falls below 1 voxel");
  if (spec.angle_jitter_deg < 0.0 || spec.azimuth_jitter_deg < 0.0)
    throw AirwayError(ErrorCode::BadConfig, "jitter must be >= 0");
  if (spec.branch_curvature_deg < 0.0 || spec.branch_curvature_deg >= 90.0)
    throw AirwayError(ErrorCode::BadConfig,
                      "branch curvature must lie in [0, 90) degrees");
  if (spec.branch_angle_deg - spec.angle_jitter_deg <= 0.0 ||
      spec.branch_angle_deg + spec.angle_jitter_deg >= 90.0)
    throw AirwayError(ErrorCode::BadConfig,
                      "branch angle (with jitter) must stay inside (0, 90) "
                      "degrees");
  if (spec.dims.d <= 0 || spec.dims.h <= 0 || spec.dims.w <= 0)
    throw AirwayError(ErrorCode::BadConfig, "dims must be positive");
  if (spec.trifurcation_branch != -1) {
    const std::int64_t internal_nodes =
        (std::int64_t{1} << spec.generations) - 1;
    if (spec.trifurcation_branch < 0 ||
        spec.trifurcation_branch >= internal_nodes)
      throw AirwayError(ErrorCode::BadConfig,
                        "trifurcation_branch must name an internal branch");
  }
}

std::vector<Tube> lay_out(const TreeSpec& spec) {
  SplitMix rng(spec.rng_seed);
  std::vector<Tube> tubes;

  // Seeded bend plane. Only curved specs draw from the rng here, so the
  // draw sequence (and therefore every mask) of straight specs is
  // unchanged by the curvature feature.
  const double curvature = radians(spec.branch_curvature_deg);
  auto apply_bend = [&](Tube& tube) {
    if (curvature == 0.0) return;
    const auto [u, v] = perpendicular_frame(tube.dir);
    const double beta = radians(rng.uniform(0.0, 360.0));
    tube.turn = curvature;
    tube.bend = std::cos(beta) * u + std::sin(beta) * v;
  };

  Tube root;
  root.gen = 0;
  // Lattice-aligned axis: an axis between voxel centers gives an even-width
  // tube, which topology-preserving thinning consumes from the free end
  // instead of reducing to a center line.
  root.start = {spec.root_radius_vox + 1.0,
                std::round((spec.dims.h - 1) / 2.0),
                std::round((spec.dims.w - 1) / 2.0)};
  root.dir = {1.0, 0.0, 0.0};
  root.len = spec.branch_length_vox[0];
  root.r0 = spec.root_radius_vox;
  root.r1 = spec.root_radius_vox * spec.radius_decay;
  apply_bend(root);
  tubes.push_back(root);

  // Breadth-first so ids match generation order. The fork plane alternates
  // between generations and the seed jitters both the plane and the polar
  // angles, so different seeds give genuinely different trees.
  for (std::size_t t = 0; t < tubes.size(); ++t) {
    const Tube parent = tubes[t];
    if (parent.gen == spec.generations) continue;
    const int k =
        static_cast<std::int32_t>(t) == spec.trifurcation_branch ? 3 : 2;
    // Children fork off the direction the parent ends with, so curved
    // parents hand their exit tangent down instead of their entry axis.
    const Vec exit_dir = parent.tangent_at(parent.len);
    const auto [u, v] = perpendicular_frame(exit_dir);
    const double base_azimuth =
        (parent.gen % 2 == 0 ? 0.0 : 0.5 * kPi) +
        radians(rng.uniform(-spec.azimuth_jitter_deg,
                            spec.azimuth_jitter_deg));
    for (int i = 0; i < k; ++i) {
      const double azimuth = base_azimuth + i * (2.0 * kPi / k);
      const double polar = radians(
          spec.branch_angle_deg +
          rng.uniform(-spec.angle_jitter_deg, spec.angle_jitter_deg));
      Tube child;
      child.parent = static_cast<std::int32_t>(t);
      child.gen = parent.gen + 1;
      child.start = parent.end();
      child.dir = std::cos(polar) * exit_dir +
                  std::sin(polar) * (std::cos(azimuth) * u +
                                     std::sin(azimuth) * v);
      child.len = spec.branch_length_vox[child.gen];
      child.r0 = parent.r1;
      child.r1 = parent.r1 * spec.radius_decay;
      apply_bend(child);
      tubes[t].children.push_back(
          static_cast<std::int32_t>(tubes.size()));
      tubes.push_back(child);
    }
  }
  return tubes;
}

// Axis-aligned bounds of the tube's axis polyline, without the radius.
void knot_bounds(const std::vector<std::pair<Vec, double>>& knots,
                 double (&lo)[3], double (&hi)[3]) {
  for (int a = 0; a < 3; ++a) {
    lo[a] = knots.front().first[a];
    hi[a] = knots.front().first[a];
  }
  for (const auto& [p, s] : knots)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
}

void require_fits(const std::vector<Tube>& tubes, const Dims& dims) {
  const double top[3] = {static_cast<double>(dims.d - 1),
                         static_cast<double>(dims.h - 1),
                         static_cast<double>(dims.w - 1)};
  for (std::size_t t = 0; t < tubes.size(); ++t) {
    const Tube& tube = tubes[t];
    const double r = std::max(tube.r0, tube.r1);
    double lo[3], hi[3];
    knot_bounds(axis_knots(tube), lo, hi);
    for (int a = 0; a < 3; ++a) {
      if (lo[a] - r < 0.0 || hi[a] + r > top[a])
        throw AirwayError(ErrorCode::SpecDoesNotFit,
                          "branch " + std::to_string(t) +
                              " leaves the volume");
    }
  }
}

// Two tubes may share voxels only when they meet at a junction: a branch
// with its parent, or two branches forking from the same parent.
bool may_touch(const std::vector<Tube>& tubes, std::int32_t a,
               std::int32_t b) {
  if (a == b) return true;
  if (tubes[a].parent == b || tubes[b].parent == a) return true;
  return tubes[a].parent >= 0 && tubes[a].parent == tubes[b].parent;
}

// Rasterizes all tubes into one mask; `owner` records the first branch that
// claimed each voxel (breadth-first order, so junction balls belong to the
// parent side).
VoxelGrid rasterize(const std::vector<Tube>& tubes, const Dims& dims,
                    std::vector<std::int32_t>* owner) {
  VoxelGrid mask(dims, Spacing{}, GridKind::Binary);
  owner->assign(static_cast<std::size_t>(mask.size()), -1);
  std::vector<std::int64_t> filled;

  for (std::size_t t = 0; t < tubes.size(); ++t) {
    const Tube& tube = tubes[t];
    const auto knots = axis_knots(tube);
    const double r_max = std::max(tube.r0, tube.r1);
    double axis_lo[3], axis_hi[3];
    knot_bounds(knots, axis_lo, axis_hi);
    std::int32_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = static_cast<std::int32_t>(std::floor(axis_lo[a] - r_max));
      hi[a] = static_cast<std::int32_t>(std::ceil(axis_hi[a] + r_max));
    }
    for (std::int32_t z = lo[0]; z <= hi[0]; ++z)
      for (std::int32_t y = lo[1]; y <= hi[1]; ++y)
        for (std::int32_t x = lo[2]; x <= hi[2]; ++x) {
          const Vec p{static_cast<double>(z), static_cast<double>(y),
                      static_cast<double>(x)};
          if (tube.turn == 0.0) {
            const double s =
                std::clamp(dot(p - tube.start, tube.dir), 0.0, tube.len);
            const Vec proj = tube.start + s * tube.dir;
            const double radius =
                tube.r0 + (s / tube.len) * (tube.r1 - tube.r0);
            if (dot(p - proj, p - proj) > radius * radius) continue;
          } else if (!arc_covers(knots, tube, p)) {
            continue;
          }
          const std::int64_t i = mask.index({z, y, x});
          const std::int32_t prev = (*owner)[i];
          if (prev == -1) {
            (*owner)[i] = static_cast<std::int32_t>(t);
            mask.set({z, y, x}, 1.0f);
            filled.push_back(i);
          } else if (!may_touch(tubes, prev, static_cast<std::int32_t>(t))) {
            throw AirwayError(ErrorCode::SpecDoesNotFit,
                              "branches " + std::to_string(prev) + " and " +
                                  std::to_string(t) + " collide");
          }
        }
  }

  // Unrelated tubes must not even touch: a 26-connected contact would fuse
  // two branches into a cycle or a spurious junction, breaking the exact
  // tree the bundle promises.
  for (std::int64_t i : filled) {
    const VoxelCoord c = mask.coord(i);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const VoxelCoord n{c.z + dz, c.y + dy, c.x + dx};
          if (!mask.in_bounds(n)) continue;
          const std::int32_t other = (*owner)[mask.index(n)];
          if (other != -1 && !may_touch(tubes, (*owner)[i], other))
            throw AirwayError(ErrorCode::SpecDoesNotFit,
                              "branches " + std::to_string((*owner)[i]) +
                                  " and " + std::to_string(other) +
                                  " touch");
        }
  }
  return mask;
}

BranchLabel label_for_generation(int gen) {
  switch (gen) {
    case 0: return BranchLabel::Trachea;
    case 1: return BranchLabel::MainBronchus;
    case 2: return BranchLabel::Lobar;
    case 3: return BranchLabel::Segmental;
    default: return BranchLabel::Distal;
  }
}

VoxelCoord rounded(const Vec& p) {
  return {static_cast<std::int32_t>(std::lround(p[0])),
          static_cast<std::int32_t>(std::lround(p[1])),
          static_cast<std::int32_t>(std::lround(p[2]))};
}

// Analytic centerline: half-voxel steps along the axis keep consecutive
// rounded points 26-adjacent.
Branch make_branch(const Tube& tube, std::int32_t id) {
  Branch b;
  b.id = id;
  b.parent = tube.parent;
  b.children = tube.children;
  b.generation = tube.gen;
  b.label = label_for_generation(tube.gen);
  b.mean_radius_vox = 0.5 * (tube.r0 + tube.r1);

  const int steps = static_cast<int>(std::ceil(tube.len / 0.5));
  for (int j = 0; j <= steps; ++j) {
    const double s = std::min(0.5 * j, tube.len);
    const Vec p = tube.pos_at(s);
    b.centerline_f.push_back({p[0], p[1], p[2]});
    const VoxelCoord c = rounded(p);
    if (b.centerline.empty() || !(b.centerline.back() == c))
      b.centerline.push_back(c);
  }
  for (std::size_t j = 1; j < b.centerline_f.size(); ++j) {
    const auto& a = b.centerline_f[j - 1];
    const auto& c = b.centerline_f[j];
    b.length_mm += std::sqrt((c[0] - a[0]) * (c[0] - a[0]) +
                             (c[1] - a[1]) * (c[1] - a[1]) +
                             (c[2] - a[2]) * (c[2] - a[2]));
  }
  return b;
}

std::int64_t linear_index(const Dims& dims, const VoxelCoord& c) {
  return (static_cast<std::int64_t>(c.z) * dims.h + c.y) * dims.w + c.x;
}

double branch_axis_length(const Branch& b) {
  const auto& s = b.centerline_f.front();
  const auto& e = b.centerline_f.back();
  return std::sqrt((e[0] - s[0]) * (e[0] - s[0]) +
                   (e[1] - s[1]) * (e[1] - s[1]) +
                   (e[2] - s[2]) * (e[2] - s[2]));
}

// Per-pattern Euler contributions for 2x2x2 foreground blocks, bit layout
// 4*dz + 2*dy + dx. Any set of mutually 26-adjacent voxels shares a 2x2x2
// block and spans a cell of the adjacency complex; charging each cell to the
// one block whose high face it touches on every axis counts it exactly once,
// so chi is the inclusion-exclusion sum over those subsets.
std::array<int, 256> make_euler_block_lut() {
  std::array<int, 256> lut{};
  for (int p = 1; p < 256; ++p) {
    int chi = 0;
    for (int s = p; s != 0; s = (s - 1) & p)
      if ((s & 0xF0) && (s & 0xCC) && (s & 0xAA))
        chi += (std::popcount(static_cast<unsigned>(s)) & 1) ? 1 : -1;
    lut[p] = chi;
  }
  return lut;
}

// Pinpoints a handle for the topology error message: a pair of tubes whose
// contact zone falls apart into two or more 26-disjoint patches re-connects
// away from its fork. Best effort — cycles through three or more tubes have
// no such pair — but it names the culprit in the common case.
std::string diagnose_handle(const VoxelGrid& mask,
                            const std::vector<std::int32_t>& owner) {
  std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::int64_t>>
      zones;
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    if (!mask.foreground(i)) continue;
    const VoxelCoord c = mask.coord(i);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const VoxelCoord n{c.z + dz, c.y + dy, c.x + dx};
          if (!mask.in_bounds(n) || !mask.foreground(n)) continue;
          const std::int32_t other = owner[mask.index(n)];
          if (other == owner[i])
            continue;
          zones[{std::min(owner[i], other), std::max(owner[i], other)}]
              .push_back(i);
        }
  }
  for (auto& [pair, voxels] : zones) {
    std::sort(voxels.begin(), voxels.end());
    voxels.erase(std::unique(voxels.begin(), voxels.end()), voxels.end());
    const std::unordered_set<std::int64_t> zone(voxels.begin(), voxels.end());
    std::unordered_set<std::int64_t> seen;
    int islands = 0;
    std::string where;
    for (std::int64_t start : voxels) {
      if (!seen.insert(start).second) continue;
      ++islands;
      std::vector<std::int64_t> queue{start};
      std::int64_t sz = 0, sy = 0, sx = 0, n = 0;
      while (!queue.empty()) {
        const VoxelCoord c = mask.coord(queue.back());
        queue.pop_back();
        sz += c.z, sy += c.y, sx += c.x, ++n;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const VoxelCoord v{c.z + dz, c.y + dy, c.x + dx};
              if (!mask.in_bounds(v)) continue;
              const std::int64_t j = mask.index(v);
              if (zone.count(j) && seen.insert(j).second) queue.push_back(j);
            }
      }
      where += (islands > 1 ? " and (" : " (") + std::to_string(sz / n) +
               "," + std::to_string(sy / n) + "," + std::to_string(sx / n) +
               ")x" + std::to_string(n);
    }
    if (islands >= 2)
      return "branches " + std::to_string(pair.first) + " and " +
             std::to_string(pair.second) + " meet in " +
             std::to_string(islands) + " separate patches" + where;
  }

  // No single pair re-touches, so the loop threads through three or more
  // tubes. Thinning preserves the handle as a skeleton cycle; find the
  // longest back-edge loop in a BFS spanning tree of the skeleton (short
  // back edges are just 26-adjacency triangles) and name the owners on it.
  const SkeletonPointSet skel = skeletonize(mask);
  std::vector<std::int64_t> pts;
  for (const VoxelCoord& c : skel.points()) pts.push_back(mask.index(c));
  std::unordered_map<std::int64_t, std::int32_t> idx;
  for (std::size_t k = 0; k < pts.size(); ++k)
    idx.emplace(pts[k], static_cast<std::int32_t>(k));
  std::vector<std::int32_t> parent(pts.size(), -2);
  std::vector<std::int32_t> depth(pts.size(), 0);
  std::vector<std::int32_t> best_loop;
  for (std::size_t seed = 0; seed < pts.size(); ++seed) {
    if (parent[seed] != -2) continue;
    parent[seed] = -1;
    std::vector<std::int32_t> queue{static_cast<std::int32_t>(seed)};
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::int32_t u = queue[q];
      const VoxelCoord c = mask.coord(pts[u]);
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const VoxelCoord n{c.z + dz, c.y + dy, c.x + dx};
            if (!mask.in_bounds(n)) continue;
            const auto it = idx.find(mask.index(n));
            if (it == idx.end() || it->second == u) continue;
            const std::int32_t v = it->second;
            if (parent[v] == -2) {
              parent[v] = u;
              depth[v] = depth[u] + 1;
              queue.push_back(v);
            } else if (v != parent[u]) {
              // Walk both ends up to their meeting point to measure the loop.
              std::vector<std::int32_t> a{u}, b{v};
              std::int32_t pa = u, pb = v;
              while (pa != pb) {
                if (depth[pa] >= depth[pb]) a.push_back(pa = parent[pa]);
                else b.push_back(pb = parent[pb]);
              }
              if (a.size() + b.size() > best_loop.size() + 1) {
                best_loop = a;
                best_loop.insert(best_loop.end(), b.rbegin(), b.rend());
              }
            }
          }
    }
  }
  if (best_loop.size() >= 6) {
    std::set<std::int32_t> names;
    for (std::int32_t k : best_loop) names.insert(owner[pts[k]]);
    const VoxelCoord at = mask.coord(pts[best_loop.front()]);
    std::string msg = "a contact cycle of " +
                      std::to_string(best_loop.size()) +
                      " skeleton points near (" + std::to_string(at.z) + "," +
                      std::to_string(at.y) + "," + std::to_string(at.x) +
                      ") through branches";
    for (std::int32_t b : names) msg += " " + std::to_string(b);
    return msg;
  }
  return "a contact cycle through three or more tubes";
}

// The rasterized mask must be a topological tree or the downstream oracle
// identities are meaningless: thinning preserves topology, so a handle in
// the mask survives as a skeleton cycle and parsing rejects it. Pairwise
// contact rules already forbid unrelated branches from touching; this
// catches the subtler failure where two *related* tubes (siblings past
// their fork) graze, separate, and re-touch.
void require_tree_topology(const VoxelGrid& mask,
                           const std::vector<std::int32_t>& owner) {
  LabelGrid components = connected_components(mask, 26);
  if (components.label_count() != 1)
    throw AirwayError(
        ErrorCode::SpecDoesNotFit,
        "rasterized tree splits into " +
            std::to_string(components.label_count()) + " components");
  if (fill_holes(mask).count_foreground() != mask.count_foreground())
    throw AirwayError(ErrorCode::SpecDoesNotFit,
                      "rasterized tree encloses a cavity");
  const std::int64_t chi = euler_characteristic(mask);
  if (chi != 1)
    throw AirwayError(
        ErrorCode::SpecDoesNotFit,
        "rasterized tree is not simply connected (Euler characteristic " +
            std::to_string(chi) + "): " + diagnose_handle(mask, owner));
}

}  // namespace

GroundTruthBundle generate(const TreeSpec& spec) {
  validate_spec(spec);
  const std::vector<Tube> tubes = lay_out(spec);
  require_fits(tubes, spec.dims);

  std::vector<std::int32_t> owner;
  GroundTruthBundle bundle;
  bundle.spec = spec;
  bundle.mask = rasterize(tubes, spec.dims, &owner);
  require_tree_topology(bundle.mask, owner);

  bundle.tree.dims = spec.dims;
  bundle.tree.spacing = Spacing{};
  bundle.tree.root = 0;
  for (std::size_t t = 0; t < tubes.size(); ++t)
    bundle.tree.branches.push_back(
        make_branch(tubes[t], static_cast<std::int32_t>(t)));
  validate_tree(bundle.tree);

  std::vector<VoxelCoord> points;
  std::unordered_set<std::int64_t> seen;
  for (const Branch& b : bundle.tree.branches)
    for (const VoxelCoord& c : b.centerline)
      if (seen.insert(linear_index(spec.dims, c)).second) points.push_back(c);
  bundle.centerline = SkeletonPointSet(spec.dims, std::move(points));
  return bundle;
}

std::int64_t euler_characteristic(const VoxelGrid& mask) {
  if (mask.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange,
                      "euler_characteristic requires a Binary grid");
  static const std::array<int, 256> lut = make_euler_block_lut();
  const Dims dims = mask.dims();
  std::int64_t chi = 0;
  // 2x2x2 windows over the 1-padded grid, so border voxels still get a
  // block whose high face they touch on every axis.
  for (std::int64_t z = -1; z < dims.d; ++z)
    for (std::int64_t y = -1; y < dims.h; ++y)
      for (std::int64_t x = -1; x < dims.w; ++x) {
        int pattern = 0;
        for (int b = 0; b < 8; ++b) {
          const std::int64_t vz = z + (b >> 2);
          const std::int64_t vy = y + ((b >> 1) & 1);
          const std::int64_t vx = x + (b & 1);
          if (vz < 0 || vy < 0 || vx < 0 || vz >= dims.d || vy >= dims.h ||
              vx >= dims.w)
            continue;
          if (mask.foreground((vz * dims.h + vy) * dims.w + vx))
            pattern |= 1 << b;
        }
        chi += lut[pattern];
      }
  return chi;
}

VoxelGrid ablate_branch(const GroundTruthBundle& bundle,
                        std::int32_t branch_id, const Ablation& ablation) {
  const AirwayTree& tree = bundle.tree;
  if (branch_id < 0 ||
      branch_id >= static_cast<std::int32_t>(tree.branches.size()))
    throw AirwayError(ErrorCode::BranchNotFound,
                      "no branch with id " + std::to_string(branch_id));
  const Branch& target = tree.branch(branch_id);
  VoxelGrid out = bundle.mask;

  if (ablation.mode == Ablation::Mode::Whole) {
    // Voronoi ownership over the bundle's centerline points; the map keeps
    // the first branch that registered a coordinate, so junction points
    // shared between a parent's tail and a child's head stay parental.
    std::vector<VoxelCoord> sites;
    std::unordered_map<std::int64_t, std::int32_t> site_branch;
    for (const Branch& b : tree.branches)
      for (const VoxelCoord& c : b.centerline) {
        if (site_branch.emplace(linear_index(tree.dims, c), b.id).second)
          sites.push_back(c);
      }
    const FeatureTransform ft = feature_transform(tree.dims, sites);
    for (std::int64_t i = 0; i < out.size(); ++i) {
      if (!out.foreground(i)) continue;
      if (site_branch.at(ft.nearest_site[i]) == branch_id)
        out.set_linear(i, 0.0f);
    }
    return out;
  }

  // Interior gap: a slab cut through the tube, kept clear of both ends so
  // the remaining stubs stay attached to their junction balls (or keep
  // their free tip).
  if (ablation.gap_len <= 0.0)
    throw AirwayError(ErrorCode::BadConfig, "gap_len must be positive");
  const bool curved = bundle.spec.branch_curvature_deg > 0.0;
  const double len =
      curved ? target.length_mm : branch_axis_length(target);
  const double r0 = bundle.spec.root_radius_vox *
                    std::pow(bundle.spec.radius_decay, target.generation);
  const double r1 = r0 * bundle.spec.radius_decay;
  const double margin_lo = r0 + 1.5;
  const double margin_hi =
      target.children.empty() ? 2.0 : r1 + 1.5;
  const double t0 = ablation.gap_offset < 0.0
                        ? 0.5 * (len - ablation.gap_len)
                        : ablation.gap_offset;
  const double t1 = t0 + ablation.gap_len;
  if (t0 < margin_lo || t1 > len - margin_hi)
    throw AirwayError(ErrorCode::GapTooLarge,
                      "interior gap does not fit strictly inside the branch");

  // Arc length of each voxel along the branch axis: straight branches
  // project onto the chord; curved ones take the nearest point on the
  // analytic centerline polyline.
  std::vector<Vec> axis;
  std::vector<double> arc;
  if (curved) {
    double s = 0.0;
    for (std::size_t j = 0; j < target.centerline_f.size(); ++j) {
      const auto& f = target.centerline_f[j];
      axis.push_back({f[0], f[1], f[2]});
      if (j > 0) s += norm(axis[j] - axis[j - 1]);
      arc.push_back(s);
    }
  }
  const auto& sf = target.centerline_f.front();
  const auto& ef = target.centerline_f.back();
  const Vec start{sf[0], sf[1], sf[2]};
  Vec dir{ef[0] - sf[0], ef[1] - sf[1], ef[2] - sf[2]};
  dir = (1.0 / len) * dir;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    if (!out.foreground(i)) continue;
    const VoxelCoord c = out.coord(i);
    const Vec p{static_cast<double>(c.z), static_cast<double>(c.y),
                static_cast<double>(c.x)};
    double s, d2;
    if (curved) {
      s = 0.0;
      d2 = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j + 1 < axis.size(); ++j) {
        const Vec seg = axis[j + 1] - axis[j];
        const double t =
            std::clamp(dot(p - axis[j], seg) / dot(seg, seg), 0.0, 1.0);
        const Vec proj = axis[j] + t * seg;
        const double cand = dot(p - proj, p - proj);
        if (cand < d2) {
          d2 = cand;
          s = arc[j] + t * (arc[j + 1] - arc[j]);
        }
      }
    } else {
      s = dot(p - start, dir);
      const Vec proj = start + s * dir;
      d2 = dot(p - proj, p - proj);
    }
    if (s < t0 || s > t1) continue;
    const double radius = r0 + (s / len) * (r1 - r0);
    const double reach = radius + 1.0;
    if (d2 <= reach * reach) out.set_linear(i, 0.0f);
  }
  return out;
}

VoxelGrid to_probability(const VoxelGrid& mask, double p_fg, double p_bg,
                         int blur_radius) {
  if (mask.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange,
                      "to_probability requires a Binary grid");
  if (!(p_bg >= 0.0 && p_bg < p_fg && p_fg <= 1.0))
    throw AirwayError(ErrorCode::BadConfig,
                      "need 0 <= p_bg < p_fg <= 1");
  if (blur_radius < 0)
    throw AirwayError(ErrorCode::BadConfig, "blur radius must be >= 0");

  const Dims& dims = mask.dims();
  std::vector<double> values(static_cast<std::size_t>(mask.size()));
  for (std::int64_t i = 0; i < mask.size(); ++i)
    values[static_cast<std::size_t>(i)] = mask.foreground(i) ? p_fg : p_bg;

  if (blur_radius > 0) {
    // Separable mean with shrinking windows at the edges; each pass is a
    // prefix-sum sweep along one axis.
    const int n[3] = {static_cast<int>(dims.d), static_cast<int>(dims.h),
                      static_cast<int>(dims.w)};
    const std::int64_t stride[3] = {static_cast<std::int64_t>(dims.h) * dims.w,
                                    dims.w, 1};
    std::vector<double> line, prefix;
    for (int axis = 0; axis < 3; ++axis) {
      const int len = n[axis];
      const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
      line.resize(len);
      prefix.resize(len + 1);
      for (int i1 = 0; i1 < n[a1]; ++i1)
        for (int i2 = 0; i2 < n[a2]; ++i2) {
          const std::int64_t base = i1 * stride[a1] + i2 * stride[a2];
          prefix[0] = 0.0;
          for (int i = 0; i < len; ++i)
            prefix[i + 1] = prefix[i] + values[base + i * stride[axis]];
          for (int i = 0; i < len; ++i) {
            const int lo = std::max(0, i - blur_radius);
            const int hi = std::min(len - 1, i + blur_radius);
            line[i] = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1);
          }
          for (int i = 0; i < len; ++i)
            values[base + i * stride[axis]] = line[i];
        }
    }
  }

  VoxelGrid out(dims, mask.spacing(), GridKind::Probability);
  for (std::int64_t i = 0; i < out.size(); ++i)
    out.set_linear(i, static_cast<float>(values[static_cast<std::size_t>(i)]));
  return out;
}

std::string tree_spec_to_json(const TreeSpec& spec) {
  nlohmann::json j;
  j["generations"] = spec.generations;
  j["branching_factor"] = spec.branching_factor;
  j["trifurcation_branch"] = spec.trifurcation_branch;
  j["root_radius_vox"] = spec.root_radius_vox;
  j["radius_decay"] = spec.radius_decay;
  j["branch_length_vox"] = spec.branch_length_vox;
  j["branch_angle_deg"] = spec.branch_angle_deg;
  j["angle_jitter_deg"] = spec.angle_jitter_deg;
  j["azimuth_jitter_deg"] = spec.azimuth_jitter_deg;
  j["branch_curvature_deg"] = spec.branch_curvature_deg;
  j["dims"] = {spec.dims.d, spec.dims.h, spec.dims.w};
  j["rng_seed"] = spec.rng_seed;
  return j.dump(2);
}

TreeSpec tree_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::BadConfig,
                      std::string("spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw AirwayError(ErrorCode::BadConfig, "spec must be a JSON object");

  TreeSpec spec;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "generations")
        spec.generations = value.get<int>();
      else if (key == "branching_factor")
        spec.branching_factor = value.get<int>();
      else if (key == "trifurcation_branch")
        spec.trifurcation_branch = value.get<std::int32_t>();
      else if (key == "root_radius_vox")
        spec.root_radius_vox = value.get<double>();
      else if (key == "radius_decay")
        spec.radius_decay = value.get<double>();
      else if (key == "branch_length_vox")
        spec.branch_length_vox = value.get<std::vector<double>>();
      else if (key == "branch_angle_deg")
        spec.branch_angle_deg = value.get<double>();
      else if (key == "angle_jitter_deg")
        spec.angle_jitter_deg = value.get<double>();
      else if (key == "azimuth_jitter_deg")
        spec.azimuth_jitter_deg = value.get<double>();
      else if (key == "branch_curvature_deg")
        spec.branch_curvature_deg = value.get<double>();
      else if (key == "dims") {
        const auto d = value.get<std::vector<int>>();
        if (d.size() != 3)
          throw AirwayError(ErrorCode::BadConfig,
                            "dims must be [depth, height, width]");
        spec.dims = {d[0], d[1], d[2]};
      } else if (key == "rng_seed")
        spec.rng_seed = value.get<std::uint64_t>();
      else
        throw AirwayError(ErrorCode::BadConfig, "unknown spec key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::BadConfig,
                      std::string("bad spec value: ") + e.what());
  }
  return spec;
}

}  // namespace airway
