#include "airwaytopo/skeleton.hpp"

#include <algorithm>
#include <array>

namespace airway {

SkeletonPointSet::SkeletonPointSet(Dims dims, std::vector<VoxelCoord> points)
    : dims_(dims), points_(std::move(points)) {
  index_.reserve(points_.size() * 2);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const VoxelCoord& c = points_[i];
    if (c.z < 0 || c.z >= dims_.d || c.y < 0 || c.y >= dims_.h || c.x < 0 ||
        c.x >= dims_.w)
      throw AirwayError(ErrorCode::OutOfRange, "skeleton point outside dims");
    if (!index_.emplace(linear(c), static_cast<std::int32_t>(i)).second)
      throw AirwayError(ErrorCode::OutOfRange, "duplicate skeleton point");
  }
}

VoxelGrid SkeletonPointSet::to_mask(const Spacing& spacing) const {
  VoxelGrid out(dims_, spacing, GridKind::Binary);
  for (const VoxelCoord& c : points_) out.set(c, 1.0f);
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Medial-axis thinning after Lee, Kashyap & Chu (1994), in the form used by
// Fiji's Skeletonize3D and scikit-image: per iteration, six border
// subiterations (N, S, E, W, U, B); a border voxel is deletable when it is
// not a line end, deleting it keeps the Euler characteristic (octant LUT),
// and it is a simple point (one 26-connected foreground component in its
// neighborhood, tested by octree labeling). Candidates are collected per
// subiteration and rechecked sequentially so parallel deletions cannot break
// connectivity.
//
// Neighborhood indexing: i = 9*(dz+1) + 3*(dy+1) + (dx+1), center = 13.
// ---------------------------------------------------------------------------

std::array<int, 256> make_euler_lut() {
  std::array<int, 256> lut{};
  constexpr int odd[128] = {
      1,  -1, -1, 1,  -3, -1, -1, 1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      -3, -1, 3,  1,  1,  -1, 3,  1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      -3, 3,  -1, 1,  1,  3,  -1, 1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      1,  3,  3,  1,  5,  3,  3,  1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      -7, -1, -1, 1,  -3, -1, -1, 1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      -3, -1, 3,  1,  1,  -1, 3,  1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      -3, 3,  -1, 1,  1,  3,  -1, 1,  -1, 1,  1,  -1, 3,  1,  1,  -1,
      1,  3,  3,  1,  5,  3,  3,  1,  -1, 1,  1,  -1, 3,  1,  1,  -1};
  for (int i = 0; i < 128; ++i) lut[2 * i + 1] = odd[i];
  return lut;
}

const std::array<int, 256> kEulerLut = make_euler_lut();

// Neighborhood indices per octant, in bit order 128,64,32,16,8,4,2 (bit 1 is
// always set). Summing the LUT over all eight octants gives the change in
// Euler characteristic if the center were deleted.
constexpr int kEulerOctants[8][7] = {
    {24, 25, 15, 16, 21, 22, 12},  // SWU
    {26, 23, 17, 14, 25, 22, 16},  // SEU
    {18, 21, 9, 12, 19, 22, 10},   // NWU
    {20, 23, 19, 22, 11, 14, 10},  // NEU
    {6, 15, 7, 16, 3, 12, 4},      // SWB
    {8, 7, 17, 16, 5, 4, 14},      // SEB
    {0, 9, 3, 12, 1, 10, 4},       // NWB
    {2, 1, 11, 10, 5, 4, 14}};     // NEB

bool is_euler_invariant(const std::array<std::uint8_t, 27>& n) {
  int euler = 0;
  for (const auto& oct : kEulerOctants) {
    int v = 1;
    for (int b = 0; b < 7; ++b)
      if (n[oct[b]]) v |= 1 << (7 - b);
    euler += kEulerLut[v];
  }
  return euler == 0;
}

// Octree component labeling over the 26-neighborhood (center excluded; cube
// index = neighborhood index, minus one above the center). Each octant owns
// seven cells; shared cells spill the flood into the adjacent octants.
struct OctreeCell {
  int cell;
  int n_next;
  int next[3];
};

constexpr OctreeCell kOctree[8][7] = {
    {{0, 0, {}}, {1, 1, {2}}, {3, 1, {3}}, {4, 3, {2, 3, 4}},
     {9, 1, {5}}, {10, 3, {2, 5, 6}}, {12, 3, {3, 5, 7}}},
    {{1, 1, {1}}, {4, 3, {1, 3, 4}}, {10, 3, {1, 5, 6}}, {2, 0, {}},
     {5, 1, {4}}, {11, 1, {6}}, {13, 3, {4, 6, 8}}},
    {{3, 1, {1}}, {4, 3, {1, 2, 4}}, {12, 3, {1, 5, 7}}, {6, 0, {}},
     {7, 1, {4}}, {14, 1, {7}}, {15, 3, {4, 7, 8}}},
    {{4, 3, {1, 2, 3}}, {5, 1, {2}}, {13, 3, {2, 6, 8}}, {7, 1, {3}},
     {15, 3, {3, 7, 8}}, {8, 0, {}}, {16, 1, {8}}},
    {{9, 1, {1}}, {10, 3, {1, 2, 6}}, {12, 3, {1, 3, 7}}, {17, 0, {}},
     {18, 1, {6}}, {20, 1, {7}}, {21, 3, {6, 7, 8}}},
    {{10, 3, {1, 2, 5}}, {11, 1, {2}}, {13, 3, {2, 4, 8}}, {18, 1, {5}},
     {21, 3, {5, 7, 8}}, {19, 0, {}}, {22, 1, {8}}},
    {{12, 3, {1, 3, 5}}, {14, 1, {3}}, {15, 3, {3, 4, 8}}, {20, 1, {5}},
     {21, 3, {5, 6, 8}}, {23, 0, {}}, {24, 1, {8}}},
    {{13, 3, {2, 4, 6}}, {15, 3, {3, 4, 7}}, {16, 1, {4}}, {21, 3, {5, 6, 7}},
     {22, 1, {6}}, {24, 1, {7}}, {25, 0, {}}}};

// First octant (1-based) responsible for each cube cell.
constexpr int kCellOctant[26] = {1, 1, 2, 1, 1, 2, 3, 3, 4, 1, 1, 2, 1,
                                 2, 3, 3, 4, 5, 5, 6, 5, 5, 6, 7, 7, 8};

void octree_label(int octant, int label, std::array<int, 26>& cube) {
  for (const OctreeCell& c : kOctree[octant - 1]) {
    if (cube[c.cell] != 1) continue;
    cube[c.cell] = label;
    for (int i = 0; i < c.n_next; ++i) octree_label(c.next[i], label, cube);
  }
}

bool is_simple_point(const std::array<std::uint8_t, 27>& n) {
  std::array<int, 26> cube;
  for (int i = 0; i < 13; ++i) cube[i] = n[i];
  for (int i = 14; i < 27; ++i) cube[i - 1] = n[i];

  int label = 2;
  for (int i = 0; i < 26; ++i) {
    if (cube[i] != 1) continue;
    octree_label(kCellOctant[i], label, cube);
    ++label;
    if (label - 2 >= 2) return false;  // second component found
  }
  return true;
}

// Border direction offsets in padded-buffer linear units, order N,S,E,W,U,B.
struct PaddedVolume {
  std::int64_t d, h, w;  // padded dims
  std::vector<std::uint8_t> v;

  std::int64_t idx(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return (z * h + y) * w + x;
  }
};

int count_neighbors(const std::array<std::uint8_t, 27>& n) {
  int c = -static_cast<int>(n[13]);
  for (int i = 0; i < 27; ++i) c += n[i];
  return c;
}

}  // namespace

SkeletonPointSet skeletonize(const VoxelGrid& mask) {
  if (mask.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange, "skeletonize requires Binary grid");
  const Dims dims = mask.dims();

  PaddedVolume vol;
  vol.d = dims.d + 2;
  vol.h = dims.h + 2;
  vol.w = dims.w + 2;
  vol.v.assign(static_cast<std::size_t>(vol.d * vol.h * vol.w), 0);

  std::vector<std::int64_t> active;  // padded linear indices, lexicographic
  for (std::int64_t z = 0; z < dims.d; ++z)
    for (std::int64_t y = 0; y < dims.h; ++y)
      for (std::int64_t x = 0; x < dims.w; ++x)
        if (mask.foreground(mask.index(z, y, x))) {
          const std::int64_t p = vol.idx(z + 1, y + 1, x + 1);
          vol.v[p] = 1;
          active.push_back(p);
        }
  if (active.empty())
    throw AirwayError(ErrorCode::EmptyMask, "cannot skeletonize empty mask");

  std::int64_t nbr[27];
  {
    int i = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          nbr[i++] = (static_cast<std::int64_t>(dz) * vol.h + dy) * vol.w + dx;
  }
  // N, S, E, W, U, B in (z,y,x): y-1, y+1, x+1, x-1, z+1, z-1.
  const std::int64_t border_off[6] = {-vol.w, vol.w, 1, -1,
                                      vol.h * vol.w, -vol.h * vol.w};

  auto gather = [&](std::int64_t p, std::array<std::uint8_t, 27>& n) {
    for (int i = 0; i < 27; ++i) n[i] = vol.v[p + nbr[i]];
  };

  std::vector<std::int64_t> candidates;
  std::array<std::uint8_t, 27> n;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int dir = 0; dir < 6; ++dir) {
      candidates.clear();
      for (std::int64_t p : active) {
        if (!vol.v[p]) continue;
        if (vol.v[p + border_off[dir]]) continue;  // not a border point
        gather(p, n);
        const int cnt = count_neighbors(n);
        if (cnt <= 1) continue;  // line end or isolated point stays
        if (!is_euler_invariant(n)) continue;
        if (!is_simple_point(n)) continue;
        candidates.push_back(p);
      }
      for (std::int64_t p : candidates) {
        // Sequential recheck of the full predicate: earlier deletions in
        // this subiteration may have turned p into a line end, an isolated
        // point, or a non-simple point. (Rechecking only simplicity, as
        // some classical implementations do, lets compact components erode
        // to nothing, which breaks component-count preservation.)
        gather(p, n);
        if (count_neighbors(n) <= 1) continue;
        if (!is_euler_invariant(n)) continue;
        if (!is_simple_point(n)) continue;
        vol.v[p] = 0;
        changed = true;
      }
    }
    if (changed) {
      auto alive = [&](std::int64_t p) { return vol.v[p] != 0; };
      active.erase(std::remove_if(active.begin(), active.end(),
                                  [&](std::int64_t p) { return !alive(p); }),
                   active.end());
    }
  }

  std::vector<VoxelCoord> points;
  points.reserve(active.size());
  for (std::int64_t p : active) {
    const std::int64_t x = p % vol.w - 1;
    const std::int64_t y = (p / vol.w) % vol.h - 1;
    const std::int64_t z = p / (vol.w * vol.h) - 1;
    points.push_back({static_cast<std::int32_t>(z), static_cast<std::int32_t>(y),
                      static_cast<std::int32_t>(x)});
  }
  return SkeletonPointSet(dims, std::move(points));
}

std::vector<int> neighbor_counts(const SkeletonPointSet& sk) {
  std::vector<int> counts(sk.size(), 0);
  const auto& pts = sk.points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int c = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dz == 0 && dy == 0 && dx == 0) continue;
          const VoxelCoord q{pts[i].z + dz, pts[i].y + dy, pts[i].x + dx};
          if (q.z < 0 || q.z >= sk.dims().d || q.y < 0 || q.y >= sk.dims().h ||
              q.x < 0 || q.x >= sk.dims().w)
            continue;
          if (sk.contains(q)) ++c;
        }
    counts[i] = c;
  }
  return counts;
}

SkeletonSplit classify_skeleton_vs_prediction(const SkeletonPointSet& gt_skeleton,
                                              const VoxelGrid& pred) {
  if (!(gt_skeleton.dims() == pred.dims()))
    throw AirwayError(ErrorCode::DimMismatch,
                      "skeleton and prediction dims differ");
  SkeletonSplit split;
  for (const VoxelCoord& c : gt_skeleton.points()) {
    if (pred.foreground(c)) split.detected.push_back(c);
    else split.missed.push_back(c);
  }
  return split;
}

BreakageSet detect_breakages(const SkeletonPointSet& gt_skeleton,
                             const VoxelGrid& pred) {
  const SkeletonSplit split = classify_skeleton_vs_prediction(gt_skeleton, pred);
  const std::vector<int> full_counts = neighbor_counts(gt_skeleton);

  SkeletonPointSet missed_set(gt_skeleton.dims(), split.missed);
  std::vector<std::uint8_t> seen(split.missed.size(), 0);

  BreakageSet out;
  for (std::size_t i = 0; i < split.missed.size(); ++i) {
    if (seen[i]) continue;
    MissedGroup group;
    std::vector<std::int32_t> stack{static_cast<std::int32_t>(i)};
    seen[i] = 1;
    bool has_loose_end = false;
    while (!stack.empty()) {
      const std::int32_t cur = stack.back();
      stack.pop_back();
      const VoxelCoord c = missed_set.points()[cur];
      group.points.push_back(c);
      // Fig. 4 rule: a point with at most one neighbor in the full skeleton
      // is a line end; a segment containing one does not cut the tree.
      const std::int32_t full_pos = gt_skeleton.position_of(c);
      if (full_counts[full_pos] <= 1) has_loose_end = true;
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dz == 0 && dy == 0 && dx == 0) continue;
            const VoxelCoord q{c.z + dz, c.y + dy, c.x + dx};
            if (q.z < 0 || q.z >= missed_set.dims().d || q.y < 0 ||
                q.y >= missed_set.dims().h || q.x < 0 ||
                q.x >= missed_set.dims().w)
              continue;
            const std::int32_t pos = missed_set.position_of(q);
            if (pos >= 0 && !seen[pos]) {
              seen[pos] = 1;
              stack.push_back(pos);
            }
          }
    }
    group.is_breakage = !has_loose_end;
    out.groups.push_back(std::move(group));
  }

  for (const MissedGroup& g : out.groups)
    if (g.is_breakage)
      out.breakage_points.insert(out.breakage_points.end(), g.points.begin(),
                                 g.points.end());
  return out;
}

}  // namespace airway
