#include "airwaytopo/tree_parsing.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_set>

#include "json.hpp"

namespace airway {

namespace {

std::array<double, 3> to_float_coord(const VoxelCoord& c) {
  return {static_cast<double>(c.z), static_cast<double>(c.y),
          static_cast<double>(c.x)};
}

double polyline_length(const std::vector<std::array<double, 3>>& pts,
                       const Spacing& sp) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dz = (pts[i][0] - pts[i - 1][0]) * sp.dz;
    const double dy = (pts[i][1] - pts[i - 1][1]) * sp.dy;
    const double dx = (pts[i][2] - pts[i - 1][2]) * sp.dx;
    total += std::sqrt(dz * dz + dy * dy + dx * dx);
  }
  return total;
}

bool chebyshev_adjacent(const VoxelCoord& a, const VoxelCoord& b) {
  return std::abs(a.z - b.z) <= 1 && std::abs(a.y - b.y) <= 1 &&
         std::abs(a.x - b.x) <= 1;
}

void refresh_length(Branch& b, const Spacing& sp) {
  b.length_mm = polyline_length(b.centerline_f, sp);
}

void require_rooted(const AirwayTree& tree) {
  if (tree.branches.empty() || tree.root < 0 ||
      tree.root >= static_cast<std::int32_t>(tree.branches.size()))
    throw AirwayError(ErrorCode::UnparsedTree, "tree has no valid root");
}

}  // namespace

const char* branch_label_name(BranchLabel label) {
  switch (label) {
    case BranchLabel::Trachea: return "Trachea";
    case BranchLabel::MainBronchus: return "MainBronchus";
    case BranchLabel::Lobar: return "Lobar";
    case BranchLabel::Segmental: return "Segmental";
    case BranchLabel::Distal: return "Distal";
    case BranchLabel::Unlabeled: return "Unlabeled";
  }
  return "Unlabeled";
}

BranchLabel branch_label_from_name(const std::string& name) {
  for (BranchLabel l :
       {BranchLabel::Trachea, BranchLabel::MainBronchus, BranchLabel::Lobar,
        BranchLabel::Segmental, BranchLabel::Distal, BranchLabel::Unlabeled})
    if (name == branch_label_name(l)) return l;
  throw AirwayError(ErrorCode::BadConfig, "unknown branch label: " + name);
}

bool AirwayTree::graded() const {
  return std::all_of(branches.begin(), branches.end(),
                     [](const Branch& b) { return b.generation >= 0; });
}

bool AirwayTree::labeled() const {
  return std::all_of(branches.begin(), branches.end(), [](const Branch& b) {
    return b.label != BranchLabel::Unlabeled;
  });
}

void validate_tree(const AirwayTree& tree) {
  auto fail = [](const std::string& what) {
    throw AirwayError(ErrorCode::UnparsedTree, "invalid tree: " + what);
  };
  if (tree.branches.empty()) fail("no branches");
  if (tree.root < 0 ||
      tree.root >= static_cast<std::int32_t>(tree.branches.size()))
    fail("root id out of range");

  int roots = 0;
  for (std::size_t i = 0; i < tree.branches.size(); ++i) {
    const Branch& b = tree.branches[i];
    if (b.id != static_cast<std::int32_t>(i)) fail("id/index mismatch");
    if (b.centerline.empty()) fail("empty centerline");
    if (b.length_mm < 0) fail("negative length");
    if (b.parent < 0) {
      ++roots;
      if (b.id != tree.root) fail("non-root branch without parent");
    } else {
      const Branch& p = tree.branches.at(b.parent);
      if (std::find(p.children.begin(), p.children.end(), b.id) ==
          p.children.end())
        fail("parent does not list child");
      const VoxelCoord& start = b.centerline.front();
      const bool attached =
          std::any_of(p.centerline.begin(), p.centerline.end(),
                      [&](const VoxelCoord& q) {
                        return chebyshev_adjacent(start, q);
                      });
      if (!attached) fail("child start detached from parent");
    }
    for (std::int32_t c : b.children)
      if (tree.branches.at(c).parent != b.id) fail("child does not point back");
  }
  if (roots != 1) fail("tree must have exactly one root");

  // reachability == acyclicity for a graph with |E| = |V| - 1
  std::vector<std::uint8_t> seen(tree.branches.size(), 0);
  std::deque<std::int32_t> queue{tree.root};
  seen[tree.root] = 1;
  std::size_t reached = 0;
  while (!queue.empty()) {
    const std::int32_t cur = queue.front();
    queue.pop_front();
    ++reached;
    for (std::int32_t c : tree.branches[cur].children) {
      if (seen[c]) fail("cycle");
      seen[c] = 1;
      queue.push_back(c);
    }
  }
  if (reached != tree.branches.size()) fail("unreachable branches");

  if (tree.graded()) {
    if (tree.branches[tree.root].generation != 0) fail("root generation != 0");
    for (const Branch& b : tree.branches)
      for (std::int32_t c : b.children)
        if (tree.branches[c].generation != b.generation + 1)
          fail("generation must increase by one per edge");
  }
}

namespace {

constexpr std::int8_t kMid = 0;
constexpr std::int8_t kEnd = 1;
constexpr std::int8_t kJunction = 2;

struct SkeletonGraph {
  // per skeleton point
  std::vector<std::int8_t> kind;
  std::vector<std::int32_t> node_of;  // node id for end/junction points
  // per node
  std::vector<std::vector<std::int32_t>> node_points;  // sorted by position
  std::vector<bool> node_is_end;
};

struct RawEdge {
  std::int32_t na = -1, nb = -1;
  std::int32_t pa = -1, pb = -1;        // attachment points inside na / nb
  std::vector<std::int32_t> mids;       // interior chain, ordered na -> nb
  double mean_radius = 0.0;
};

}  // namespace

AirwayTree parse_skeleton(const SkeletonPointSet& sk,
                          const DistanceField* radius,
                          const Spacing& spacing) {
  if (sk.empty())
    throw AirwayError(ErrorCode::EmptyMask, "cannot parse empty skeleton");
  const auto& pts = sk.points();
  const std::int32_t n = static_cast<std::int32_t>(pts.size());

  auto for_each_neighbor = [&](std::int32_t i, auto&& fn) {
    const VoxelCoord c = pts[i];
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dz == 0 && dy == 0 && dx == 0) continue;
          const VoxelCoord q{c.z + dz, c.y + dy, c.x + dx};
          if (q.z < 0 || q.z >= sk.dims().d || q.y < 0 || q.y >= sk.dims().h ||
              q.x < 0 || q.x >= sk.dims().w)
            continue;
          const std::int32_t pos = sk.position_of(q);
          if (pos >= 0) fn(pos);
        }
  };

  auto radius_at = [&](std::int32_t i) {
    return radius == nullptr ? 0.0
                             : static_cast<double>(radius->at(pts[i]));
  };

  // single 26-connected component required
  {
    std::vector<std::uint8_t> seen(pts.size(), 0);
    std::deque<std::int32_t> queue{0};
    seen[0] = 1;
    std::int32_t reached = 0;
    while (!queue.empty()) {
      const std::int32_t cur = queue.front();
      queue.pop_front();
      ++reached;
      for_each_neighbor(cur, [&](std::int32_t r) {
        if (!seen[r]) {
          seen[r] = 1;
          queue.push_back(r);
        }
      });
    }
    if (reached != n)
      throw AirwayError(ErrorCode::DisconnectedSkeleton,
                        "skeleton has more than one component");
  }

  AirwayTree tree;
  tree.dims = sk.dims();
  tree.spacing = spacing;

  if (n == 1) {
    Branch b;
    b.id = 0;
    b.centerline = {pts[0]};
    b.centerline_f = {to_float_coord(pts[0])};
    b.mean_radius_vox = radius_at(0);
    tree.branches.push_back(std::move(b));
    tree.root = 0;
    return tree;
  }

  const std::vector<int> counts = neighbor_counts(sk);

  SkeletonGraph g;
  g.kind.resize(pts.size());
  g.node_of.assign(pts.size(), -1);
  bool any_end = false;
  for (std::int32_t i = 0; i < n; ++i) {
    g.kind[i] = counts[i] == 1 ? kEnd : (counts[i] >= 3 ? kJunction : kMid);
    any_end |= g.kind[i] == kEnd;
  }
  if (!any_end)
    throw AirwayError(ErrorCode::DegenerateSkeleton,
                      "skeleton has no endpoints (closed loop)");

  // Nodes: endpoints and 26-connected junction clusters, numbered by first
  // point encountered in skeleton order.
  for (std::int32_t i = 0; i < n; ++i) {
    if (g.node_of[i] >= 0 || g.kind[i] == kMid) continue;
    const std::int32_t id = static_cast<std::int32_t>(g.node_points.size());
    std::vector<std::int32_t> members;
    if (g.kind[i] == kEnd) {
      g.node_of[i] = id;
      members = {i};
    } else {
      std::deque<std::int32_t> queue{i};
      g.node_of[i] = id;
      while (!queue.empty()) {
        const std::int32_t cur = queue.front();
        queue.pop_front();
        members.push_back(cur);
        for_each_neighbor(cur, [&](std::int32_t r) {
          if (g.kind[r] == kJunction && g.node_of[r] < 0) {
            g.node_of[r] = id;
            queue.push_back(r);
          }
        });
      }
      std::sort(members.begin(), members.end());
    }
    g.node_is_end.push_back(g.kind[i] == kEnd);
    g.node_points.push_back(std::move(members));
  }

  // Trace edges between nodes through degree-2 chains.
  std::vector<RawEdge> edges;
  std::vector<std::uint8_t> mid_used(pts.size(), 0);
  std::unordered_set<std::int64_t> direct_used;

  for (std::size_t node = 0; node < g.node_points.size(); ++node) {
    for (std::int32_t p : g.node_points[node]) {
      for_each_neighbor(p, [&](std::int32_t q) {
        if (g.kind[q] == kMid) {
          if (mid_used[q]) return;
          RawEdge e;
          e.na = static_cast<std::int32_t>(node);
          e.pa = p;
          std::int32_t prev = p, cur = q;
          while (g.kind[cur] == kMid) {
            mid_used[cur] = 1;
            e.mids.push_back(cur);
            std::int32_t next = -1;
            for_each_neighbor(cur, [&](std::int32_t r) {
              if (r != prev && next < 0) next = r;
            });
            prev = cur;
            cur = next;
          }
          e.nb = g.node_of[cur];
          e.pb = cur;
          edges.push_back(std::move(e));
        } else if (g.node_of[q] != static_cast<std::int32_t>(node)) {
          // direct node-to-node contact, record once
          const std::int64_t lo = std::min(p, q), hi = std::max(p, q);
          if (direct_used.insert(lo * n + hi).second) {
            RawEdge e;
            e.na = static_cast<std::int32_t>(node);
            e.pa = p;
            e.nb = g.node_of[q];
            e.pb = q;
            edges.push_back(std::move(e));
          }
        }
      });
    }
  }

  for (RawEdge& e : edges) {
    double sum = radius_at(e.pa) + radius_at(e.pb);
    for (std::int32_t m : e.mids) sum += radius_at(m);
    e.mean_radius = sum / static_cast<double>(e.mids.size() + 2);
  }

  // Root: widest edge ending in an endpoint; ties resolved toward the
  // endpoint with the lexicographically largest (z, y, x).
  std::int32_t root_node = -1;
  {
    double best_radius = -1.0;
    VoxelCoord best_coord{-1, -1, -1};
    auto consider = [&](std::int32_t node, std::int32_t point, double r) {
      if (!g.node_is_end[node]) return;
      const VoxelCoord c = pts[point];
      const auto key = std::tie(c.z, c.y, c.x);
      const auto best_key = std::tie(best_coord.z, best_coord.y, best_coord.x);
      if (r > best_radius || (r == best_radius && key > best_key)) {
        best_radius = r;
        best_coord = c;
        root_node = node;
      }
    };
    for (const RawEdge& e : edges) {
      consider(e.na, e.pa, e.mean_radius);
      consider(e.nb, e.pb, e.mean_radius);
    }
  }
  if (root_node < 0)
    throw AirwayError(ErrorCode::DegenerateSkeleton,
                      "no leaf edge to root the tree at");

  // Orient edges away from the root. A branch runs from its start node's
  // attachment point through the chain; when it arrives at a junction
  // cluster, the whole cluster rides on this (parent-side) branch, and each
  // outgoing child starts at the cluster point it exits from.
  std::vector<std::vector<std::int32_t>> incident(g.node_points.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    incident[edges[i].na].push_back(static_cast<std::int32_t>(i));
    if (edges[i].nb != edges[i].na)
      incident[edges[i].nb].push_back(static_cast<std::int32_t>(i));
  }

  std::vector<std::uint8_t> node_seen(g.node_points.size(), 0);
  std::vector<std::uint8_t> edge_seen(edges.size(), 0);
  std::deque<std::pair<std::int32_t, std::int32_t>> queue;  // node, branch-in
  node_seen[root_node] = 1;
  queue.emplace_back(root_node, -1);

  while (!queue.empty()) {
    const auto [node, parent_branch] = queue.front();
    queue.pop_front();
    for (std::int32_t ei : incident[node]) {
      if (edge_seen[ei]) continue;
      edge_seen[ei] = 1;
      const RawEdge& e = edges[ei];
      if (e.na == e.nb)
        throw AirwayError(ErrorCode::DegenerateSkeleton,
                          "skeleton contains a cycle");
      const bool forward = e.na == node;
      const std::int32_t far_node = forward ? e.nb : e.na;
      if (node_seen[far_node])
        throw AirwayError(ErrorCode::DegenerateSkeleton,
                          "skeleton contains a cycle");
      node_seen[far_node] = 1;

      Branch b;
      b.id = static_cast<std::int32_t>(tree.branches.size());
      b.parent = parent_branch;
      std::vector<std::int32_t> run;
      run.push_back(forward ? e.pa : e.pb);
      if (forward)
        run.insert(run.end(), e.mids.begin(), e.mids.end());
      else
        run.insert(run.end(), e.mids.rbegin(), e.mids.rend());
      const std::int32_t arrive = forward ? e.pb : e.pa;
      if (g.node_is_end[far_node]) {
        run.push_back(arrive);
      } else {
        run.push_back(arrive);
        for (std::int32_t m : g.node_points[far_node])
          if (m != arrive) run.push_back(m);
      }

      double radius_sum = 0.0;
      for (std::int32_t i : run) {
        b.centerline.push_back(pts[i]);
        b.centerline_f.push_back(to_float_coord(pts[i]));
        radius_sum += radius_at(i);
      }
      b.mean_radius_vox = radius_sum / static_cast<double>(run.size());
      refresh_length(b, spacing);

      if (parent_branch >= 0)
        tree.branches[parent_branch].children.push_back(b.id);
      else
        tree.root = b.id;
      queue.emplace_back(far_node, b.id);
      tree.branches.push_back(std::move(b));
    }
  }

  if (std::any_of(edge_seen.begin(), edge_seen.end(),
                  [](std::uint8_t s) { return !s; }))
    throw AirwayError(ErrorCode::DegenerateSkeleton,
                      "skeleton contains a cycle");

  return tree;
}

AirwayTree smooth_centerlines(const AirwayTree& tree, int window) {
  require_rooted(tree);
  if (window < 1 || window % 2 == 0)
    throw AirwayError(ErrorCode::BadConfig, "smoothing window must be odd");
  AirwayTree out = tree;
  if (window == 1) return out;

  for (Branch& b : out.branches) {
    const auto& src = b.centerline_f;
    const std::int64_t m = static_cast<std::int64_t>(src.size());
    std::vector<std::array<double, 3>> smoothed(src.size());
    for (std::int64_t i = 0; i < m; ++i) {
      // window shrinks symmetrically toward the ends; first and last
      // points get half = 0, i.e. they are anchored
      const std::int64_t half =
          std::min<std::int64_t>({window / 2, i, m - 1 - i});
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (std::int64_t j = i - half; j <= i + half; ++j)
        for (int a = 0; a < 3; ++a) acc[a] += src[j][a];
      const double inv = 1.0 / static_cast<double>(2 * half + 1);
      for (int a = 0; a < 3; ++a) smoothed[i][a] = acc[a] * inv;
    }
    b.centerline_f = std::move(smoothed);

    std::vector<VoxelCoord> rounded;
    rounded.reserve(b.centerline_f.size());
    for (const auto& p : b.centerline_f) {
      const VoxelCoord c{static_cast<std::int32_t>(std::lround(p[0])),
                         static_cast<std::int32_t>(std::lround(p[1])),
                         static_cast<std::int32_t>(std::lround(p[2]))};
      if (rounded.empty() || !(rounded.back() == c)) rounded.push_back(c);
    }
    b.centerline = std::move(rounded);
    refresh_length(b, out.spacing);
  }
  return out;
}

namespace {

double length_vox(const Branch& b) {
  return polyline_length(b.centerline_f, Spacing{1.0, 1.0, 1.0});
}

// Depth in edges from the root for every live branch.
std::vector<int> branch_depths(const AirwayTree& t,
                               const std::vector<std::uint8_t>& alive) {
  std::vector<int> depth(t.branches.size(), -1);
  std::deque<std::int32_t> queue{t.root};
  depth[t.root] = 0;
  while (!queue.empty()) {
    const std::int32_t cur = queue.front();
    queue.pop_front();
    for (std::int32_t c : t.branches[cur].children)
      if (alive[c]) {
        depth[c] = depth[cur] + 1;
        queue.push_back(c);
      }
  }
  return depth;
}

}  // namespace

AirwayTree prune(const AirwayTree& tree, const ParseParams& params) {
  require_rooted(tree);
  AirwayTree work = tree;
  std::vector<std::uint8_t> alive(work.branches.size(), 1);

  bool changed = true;
  while (changed) {
    changed = false;

    // (1) drop short leaves (never the root, never protected depths)
    const std::vector<int> depth = branch_depths(work, alive);
    for (std::size_t i = 0; i < work.branches.size(); ++i) {
      Branch& b = work.branches[i];
      if (!alive[i] || b.id == work.root) continue;
      if (!b.children.empty()) continue;
      if (depth[i] <= params.prune_max_generation_protect) continue;
      if (length_vox(b) >= params.prune_min_len_vox) continue;
      alive[i] = 0;
      auto& sib = work.branches[b.parent].children;
      sib.erase(std::remove(sib.begin(), sib.end(), b.id), sib.end());
      changed = true;
    }

    // (2) merge single-child branches into their child
    for (std::size_t i = 0; i < work.branches.size(); ++i) {
      if (!alive[i]) continue;
      Branch& b = work.branches[i];
      while (b.children.size() == 1) {
        const std::int32_t cid = b.children[0];
        Branch& c = work.branches[cid];
        const std::size_t nb = b.centerline_f.size();
        const std::size_t nc = c.centerline_f.size();

        std::size_t skip = 0;
        if (!c.centerline.empty() && !b.centerline.empty() &&
            c.centerline.front() == b.centerline.back())
          skip = 1;  // shared junction point, keep one copy
        b.centerline.insert(b.centerline.end(), c.centerline.begin() + skip,
                            c.centerline.end());
        b.centerline_f.insert(b.centerline_f.end(),
                              c.centerline_f.begin() + skip,
                              c.centerline_f.end());
        b.mean_radius_vox =
            (b.mean_radius_vox * static_cast<double>(nb) +
             c.mean_radius_vox * static_cast<double>(nc)) /
            static_cast<double>(nb + nc);
        b.children = c.children;
        for (std::int32_t gc : b.children) work.branches[gc].parent = b.id;
        refresh_length(b, work.spacing);
        alive[cid] = 0;
        changed = true;
      }
    }
  }

  // compact ids in breadth-first order
  AirwayTree out;
  out.dims = work.dims;
  out.spacing = work.spacing;
  std::vector<std::int32_t> new_id(work.branches.size(), -1);
  std::deque<std::int32_t> queue{work.root};
  while (!queue.empty()) {
    const std::int32_t cur = queue.front();
    queue.pop_front();
    new_id[cur] = static_cast<std::int32_t>(out.branches.size());
    out.branches.push_back(work.branches[cur]);
    for (std::int32_t c : work.branches[cur].children) queue.push_back(c);
  }
  for (Branch& b : out.branches) {
    b.id = new_id[b.id];
    if (b.parent >= 0) b.parent = new_id[b.parent];
    for (std::int32_t& c : b.children) c = new_id[c];
  }
  out.root = new_id[work.root];
  return out;
}

AirwayTree grade_topology(const AirwayTree& tree) {
  require_rooted(tree);
  AirwayTree out = tree;
  std::deque<std::int32_t> queue{out.root};
  out.branches[out.root].generation = 0;
  while (!queue.empty()) {
    const std::int32_t cur = queue.front();
    queue.pop_front();
    for (std::int32_t c : out.branches[cur].children) {
      out.branches[c].generation = out.branches[cur].generation + 1;
      queue.push_back(c);
    }
  }
  return out;
}

namespace {

BranchLabel label_for_generation(int g) {
  switch (g) {
    case 0: return BranchLabel::Trachea;
    case 1: return BranchLabel::MainBronchus;
    case 2: return BranchLabel::Lobar;
    case 3: return BranchLabel::Segmental;
    default: return BranchLabel::Distal;
  }
}

// Unit direction of a branch in mm space, first -> last centerline point;
// nullopt when degenerate.
std::optional<std::array<double, 3>> branch_direction(const Branch& b,
                                                      const Spacing& sp) {
  if (b.centerline_f.size() < 2) return std::nullopt;
  const auto& a = b.centerline_f.front();
  const auto& z = b.centerline_f.back();
  std::array<double, 3> d{(z[0] - a[0]) * sp.dz, (z[1] - a[1]) * sp.dy,
                          (z[2] - a[2]) * sp.dx};
  const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (norm <= 0.0) return std::nullopt;
  for (double& v : d) v /= norm;
  return d;
}

}  // namespace

AirwayTree match_anatomy(const AirwayTree& tree, double collinear_deg,
                         double radius_ratio) {
  require_rooted(tree);
  if (!tree.graded())
    throw AirwayError(ErrorCode::UngradedTree,
                      "match_anatomy requires a graded tree");
  AirwayTree out = tree;
  const double cos_limit = std::cos(collinear_deg * std::acos(-1.0) / 180.0);

  std::vector<int> eff(out.branches.size(), 0);
  std::deque<std::int32_t> queue{out.root};
  out.branches[out.root].label = BranchLabel::Trachea;
  eff[out.root] = 0;
  while (!queue.empty()) {
    const std::int32_t cur = queue.front();
    queue.pop_front();
    for (std::int32_t ci : out.branches[cur].children) {
      Branch& c = out.branches[ci];
      const Branch& p = out.branches[cur];
      eff[ci] = eff[cur] + 1;
      c.label = label_for_generation(eff[ci]);

      if (eff[ci] == 2) {
        // A bronchus-intermedius-like continuation: nearly collinear with
        // and nearly as wide as its parent counts as part of the parent
        // level, shifting its subtree up one effective generation.
        const auto dir_c = branch_direction(c, out.spacing);
        const auto dir_p = branch_direction(p, out.spacing);
        const bool collinear =
            dir_c && dir_p &&
            ((*dir_c)[0] * (*dir_p)[0] + (*dir_c)[1] * (*dir_p)[1] +
             (*dir_c)[2] * (*dir_p)[2]) > cos_limit;
        const bool wide = c.mean_radius_vox >= radius_ratio * p.mean_radius_vox;
        if (collinear && wide) {
          eff[ci] = eff[cur];
          c.label = p.label;
        }
      }
      queue.push_back(ci);
    }
  }
  return out;
}

AirwayTree parse_pipeline(const VoxelGrid& mask, const ParseParams& params) {
  const SkeletonPointSet sk = skeletonize(mask);
  const DistanceField radius = distance_to_background(mask);
  AirwayTree t = parse_skeleton(sk, &radius, mask.spacing());
  t = smooth_centerlines(t, params.smooth_window);
  t = prune(t, params);
  t = grade_topology(t);
  t = match_anatomy(t);
  return t;
}

std::string tree_to_json(const AirwayTree& tree) {
  nlohmann::json j;
  j["root"] = tree.root;
  j["spacing"] = {tree.spacing.dz, tree.spacing.dy, tree.spacing.dx};
  j["dims"] = {tree.dims.d, tree.dims.h, tree.dims.w};
  nlohmann::json branches = nlohmann::json::array();
  for (const Branch& b : tree.branches) {
    nlohmann::json jb;
    jb["id"] = b.id;
    if (b.parent >= 0)
      jb["parent"] = b.parent;
    else
      jb["parent"] = nullptr;
    jb["children"] = b.children;
    jb["generation"] = b.generation;
    jb["label"] = branch_label_name(b.label);
    jb["length_mm"] = b.length_mm;
    jb["mean_radius_vox"] = b.mean_radius_vox;
    nlohmann::json line = nlohmann::json::array();
    for (const VoxelCoord& c : b.centerline) line.push_back({c.z, c.y, c.x});
    jb["centerline"] = std::move(line);
    branches.push_back(std::move(jb));
  }
  j["branches"] = std::move(branches);
  return j.dump(2);
}

AirwayTree tree_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::CorruptHeader,
                      std::string("bad tree JSON: ") + e.what());
  }
  AirwayTree tree;
  try {
    tree.root = j.at("root").get<std::int32_t>();
    if (j.contains("spacing")) {
      tree.spacing = {j["spacing"][0].get<double>(),
                      j["spacing"][1].get<double>(),
                      j["spacing"][2].get<double>()};
    }
    if (j.contains("dims")) {
      tree.dims = {j["dims"][0].get<std::int64_t>(),
                   j["dims"][1].get<std::int64_t>(),
                   j["dims"][2].get<std::int64_t>()};
    }
    for (const auto& jb : j.at("branches")) {
      Branch b;
      b.id = jb.at("id").get<std::int32_t>();
      b.parent = jb.at("parent").is_null() ? -1
                                           : jb.at("parent").get<std::int32_t>();
      b.children = jb.at("children").get<std::vector<std::int32_t>>();
      b.generation = jb.at("generation").get<int>();
      b.label = branch_label_from_name(jb.at("label").get<std::string>());
      b.length_mm = jb.at("length_mm").get<double>();
      if (jb.contains("mean_radius_vox"))
        b.mean_radius_vox = jb["mean_radius_vox"].get<double>();
      for (const auto& jc : jb.at("centerline")) {
        const VoxelCoord c{jc[0].get<std::int32_t>(), jc[1].get<std::int32_t>(),
                           jc[2].get<std::int32_t>()};
        b.centerline.push_back(c);
        b.centerline_f.push_back(to_float_coord(c));
      }
      tree.branches.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw AirwayError(ErrorCode::CorruptHeader,
                      std::string("bad tree JSON: ") + e.what());
  }
  validate_tree(tree);
  return tree;
}

}  // namespace airway
