#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "linerecon/common.hpp"
#include "linerecon/linecloud.hpp"
#include "linerecon/ransac.hpp"
#include "linerecon/surface.hpp"
#include "linerecon/synth.hpp"

namespace linerecon {

struct DistanceSummary {
  std::size_t count = 0;
  std::vector<double> percentile_levels{0.5, 0.9, 0.95, 0.99};
  std::vector<double> percentiles;
  std::vector<double> thresholds;           // meters
  std::vector<double> fraction_within;      // matched to thresholds
  std::vector<double> histogram_edges;
  std::vector<std::size_t> histogram_counts;
};

inline DistanceSummary summarize_distances(std::vector<double> dists,
                                           std::vector<double> thresholds, int bins = 50) {
  DistanceSummary s;
  s.count = dists.size();
  s.thresholds = std::move(thresholds);
  if (dists.empty()) return s;
  std::sort(dists.begin(), dists.end());
  for (double q : s.percentile_levels) {
    double idx = q * (dists.size() - 1);
    std::size_t lo = static_cast<std::size_t>(idx);
    double frac = idx - lo;
    double v = lo + 1 < dists.size() ? dists[lo] * (1 - frac) + dists[lo + 1] * frac : dists[lo];
    s.percentiles.push_back(v);
  }
  for (double t : s.thresholds) {
    auto it = std::upper_bound(dists.begin(), dists.end(), t);
    s.fraction_within.push_back(static_cast<double>(it - dists.begin()) / dists.size());
  }
  double hi = std::max(dists.back(), 1e-12);
  for (int b = 0; b <= bins; ++b) s.histogram_edges.push_back(hi * b / bins);
  s.histogram_counts.assign(bins, 0);
  for (double d : dists) {
    int b = std::min(bins - 1, static_cast<int>(d / hi * bins));
    s.histogram_counts[b]++;
  }
  return s;
}

// Area-weighted uniform point sampling on a mesh, deterministic per seed.
inline std::vector<Vec3> sample_surface(const PolygonMesh& mesh, std::size_t n,
                                        std::uint64_t seed) {
  if (mesh.empty()) throw EmptyMesh("sample_surface: mesh has no faces");
  if (n < 1) throw ValidationError("sample_surface: n >= 1 required");
  PolygonMesh tris = triangulate(mesh);
  std::vector<double> cum(tris.faces.size());
  double total = 0;
  for (std::size_t i = 0; i < tris.faces.size(); ++i) {
    total += tris.face_area(tris.faces[i]);
    cum[i] = total;
  }
  if (total <= 0) throw EmptyMesh("sample_surface: zero total area");
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double r = rng.uniform() * total;
    std::size_t i = std::lower_bound(cum.begin(), cum.end(), r) - cum.begin();
    if (i >= tris.faces.size()) i = tris.faces.size() - 1;
    const auto& f = tris.faces[i];
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1) {
      u = 1 - u;
      v = 1 - v;
    }
    const Vec3& a = tris.vertices[f.loop[0]];
    const Vec3& b = tris.vertices[f.loop[1]];
    const Vec3& c = tris.vertices[f.loop[2]];
    out.push_back(a + u * (b - a) + v * (c - a));
  }
  return out;
}

// Balanced kd-tree for exact nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& points) : pts_(points) {
    idx_.resize(pts_.size());
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!pts_.empty()) root_ = build(0, idx_.size(), 0);
  }

  double nearest_distance(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(root_, q, 0, best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    int point = -1;
    int left = -1, right = -1;
  };

  int build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return -1;
    std::size_t mid = (lo + hi) / 2;
    int axis = depth % 3;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
    Node node;
    node.point = idx_[mid];
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int l = build(lo, mid, depth + 1);
    int r = build(mid + 1, hi, depth + 1);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  void search(int ni, const Vec3& q, int depth, double& best) const {
    if (ni < 0) return;
    const Node& node = nodes_[ni];
    const Vec3& p = pts_[node.point];
    best = std::min(best, (p - q).squaredNorm());
    int axis = depth % 3;
    double delta = q[axis] - p[axis];
    int near = delta < 0 ? node.left : node.right;
    int far = delta < 0 ? node.right : node.left;
    search(near, q, depth + 1, best);
    if (delta * delta < best) search(far, q, depth + 1, best);
  }

  const std::vector<Vec3>& pts_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Exact 1-NN distances from each point of `from` to the set `to`.
// Asymmetric: precision = recon->GT, completeness = GT->recon.
inline std::vector<double> nn_distances(const std::vector<Vec3>& from,
                                        const std::vector<Vec3>& to, int threads = 1) {
  if (from.empty() || to.empty())
    throw ValidationError("nn_distances: point sets must be nonempty");
  KdTree tree(to);
  std::vector<double> out(from.size());
  parallel_for(from.size(), threads,
               [&](std::size_t i) { out[i] = tree.nearest_distance(from[i]); });
  return out;
}

// ---------------------------------------------------------------------------
// Cube robustness experiment
// ---------------------------------------------------------------------------

struct CubeGrid {
  std::vector<double> noise_levels;
  std::vector<int> outlier_counts;
  std::vector<std::vector<double>> mean_faces;  // [noise][outliers]
};

// A detected plane recovers a cube face iff its support contains the 4 true
// edge segments of that face (by id).
inline int recovered_faces(const SupportState& st) {
  // Edge ids per face, matching the fixed order of cube_edges(): edges along
  // axis a at (axis+1 -> u, axis+2 -> v) signs; face (axis, sign) collects
  // the 4 edges touching it.
  int count = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int sign = 0; sign < 2; ++sign) {
      // Face with normal on `axis`, offset -1/+1.
      std::vector<int> need;
      for (int e = 0; e < 12; ++e) {
        int e_axis = e / 4;
        int u = (e % 4) / 2, v = e % 2;  // signs of (e_axis+1), (e_axis+2)
        // Edge e touches the face iff its fixed coordinate on `axis` matches.
        if (e_axis == axis) continue;
        int coord_sign;
        if ((e_axis + 1) % 3 == axis)
          coord_sign = u;
        else if ((e_axis + 2) % 3 == axis)
          coord_sign = v;
        else
          continue;
        if (coord_sign == sign) need.push_back(e);
      }
      if (need.size() != 4) continue;
      for (std::size_t p = 0; p < st.planes.size(); ++p) {
        const auto& sup = st.support[p];
        bool all = true;
        for (int e : need)
          if (!std::binary_search(sup.begin(), sup.end(), e)) all = false;
        if (all) {
          ++count;
          break;
        }
      }
    }
  }
  return count;
}

// The robustness grid: per (noise, #outliers) cell, run synth_cube +
// detect_planes `runs` times and report the mean number of recovered faces.
inline CubeGrid cube_experiment(const std::vector<double>& noise_levels,
                                const std::vector<int>& outlier_counts, int runs,
                                const DetectParams& params, std::uint64_t seed,
                                int threads = 1) {
  CubeGrid grid;
  grid.noise_levels = noise_levels;
  grid.outlier_counts = outlier_counts;
  grid.mean_faces.assign(noise_levels.size(),
                         std::vector<double>(outlier_counts.size(), 0.0));

  struct Job {
    std::size_t ni, oi;
    int run;
  };
  std::vector<Job> jobs;
  for (std::size_t ni = 0; ni < noise_levels.size(); ++ni)
    for (std::size_t oi = 0; oi < outlier_counts.size(); ++oi)
      for (int r = 0; r < runs; ++r) jobs.push_back({ni, oi, r});

  std::vector<int> faces(jobs.size(), 0);
  Rng base(seed);
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const Job& job = jobs[j];
    std::uint64_t salt = (job.ni * 1000003ULL + job.oi) * 1000003ULL + job.run;
    Rng cell = base.fork(salt);
    std::uint64_t scene_seed = cell.next_u64();
    std::uint64_t detect_seed = cell.next_u64();
    LineCloud cloud =
        synth_cube(grid.noise_levels[job.ni], grid.outlier_counts[job.oi], scene_seed);
    SupportState st = detect_planes(cloud, params, detect_seed);
    faces[j] = recovered_faces(st);
  });
  for (std::size_t j = 0; j < jobs.size(); ++j)
    grid.mean_faces[jobs[j].ni][jobs[j].oi] += static_cast<double>(faces[j]) / runs;
  return grid;
}

// Delimited-text (CSV) rendering for external plotting.
inline std::string cube_grid_csv(const CubeGrid& grid) {
  std::string out = "noise_std";
  for (int o : grid.outlier_counts) out += ",outliers_" + std::to_string(o);
  out += "\n";
  char buf[64];
  for (std::size_t ni = 0; ni < grid.noise_levels.size(); ++ni) {
    std::snprintf(buf, sizeof(buf), "%.9g", grid.noise_levels[ni]);
    out += buf;
    for (std::size_t oi = 0; oi < grid.outlier_counts.size(); ++oi) {
      std::snprintf(buf, sizeof(buf), ",%.9g", grid.mean_faces[ni][oi]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace linerecon
