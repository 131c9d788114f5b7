#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "linerecon/geometry.hpp"
#include "linerecon/linecloud.hpp"

namespace linerecon {

struct DetectParams {
  double eps = 0.02;            // inlier distance, meters
  double theta_min_deg = 5.0;   // candidate pair angle threshold
  int n_iter = 50000;           // sampling trials per greedy round
  int n_max = 160;              // plane limitation
  int min_support = 4;
  double eps_fus = 0.06;        // fusion distance (> eps)
  double theta_fus_deg = 10.0;  // fusion angle
  double p_fus = 0.20;          // fusion common-inlier proportion
  bool exhaustive = false;      // systematic drawing of all legal pairs
  bool rank_by_length = false;  // rank candidates by total inlier length
  SegmentDistanceMode distance_mode = SegmentDistanceMode::Max;

  void check() const {
    if (eps <= 0) throw ValidationError("DetectParams: eps must be > 0");
    if (eps_fus <= eps) throw ValidationError("DetectParams: eps_fus must exceed eps");
    if (p_fus <= 0 || p_fus > 1) throw ValidationError("DetectParams: p_fus in (0,1]");
    if (min_support < 3) throw ValidationError("DetectParams: min_support >= 3");
  }
};

// Detection bookkeeping: planes, the support map Lambda(P), the assignment
// map Pi(l) with |Pi(l)| <= 2, and the derived partition L0/L1/L2.
class SupportState {
 public:
  std::vector<Plane> planes;
  std::vector<std::vector<int>> support;   // plane index -> sorted segment indices
  std::vector<std::vector<int>> assigned;  // segment index -> plane indices, size <= 2

  static SupportState init(const LineCloud& cloud) {
    SupportState st;
    st.segs_.reserve(cloud.segments.size());
    st.seg_ids_.reserve(cloud.segments.size());
    for (const auto& s : cloud.segments) {
      st.segs_.push_back(s.geometry);
      st.seg_ids_.push_back(s.id);
    }
    st.assigned.assign(st.segs_.size(), {});
    return st;
  }

  int num_segments() const { return static_cast<int>(segs_.size()); }
  const Segment3& segment(int i) const { return segs_[i]; }
  int segment_id(int i) const { return seg_ids_[i]; }
  int segment_index(int external_id) const {
    for (std::size_t i = 0; i < seg_ids_.size(); ++i)
      if (seg_ids_[i] == external_id) return static_cast<int>(i);
    return -1;
  }

  int support_count(int seg) const { return static_cast<int>(assigned[seg].size()); }
  bool is_structural(int seg) const { return assigned[seg].size() == 2; }

  std::vector<int> partition(int level) const {
    std::vector<int> out;
    for (int i = 0; i < num_segments(); ++i)
      if (support_count(i) == level) out.push_back(i);
    return out;
  }
  std::vector<int> l0() const { return partition(0); }
  std::vector<int> l1() const { return partition(1); }
  std::vector<int> l2() const { return partition(2); }

  // Segments eligible to support one more plane.
  std::vector<int> available() const {
    std::vector<int> out;
    for (int i = 0; i < num_segments(); ++i)
      if (support_count(i) <= 1) out.push_back(i);
    return out;
  }

  void commit(const Plane& plane, const std::vector<int>& inliers) {
    int idx = static_cast<int>(planes.size());
    planes.push_back(plane);
    std::vector<int> sorted = inliers;
    std::sort(sorted.begin(), sorted.end());
    support.push_back(sorted);
    for (int s : sorted) assigned[s].push_back(idx);
  }

 private:
  std::vector<Segment3> segs_;
  std::vector<int> seg_ids_;
};

// Consistency audit. tolerance is the distance bound applicable to the stage
// (eps after detection, eps_fus after fusion); the structural check carries a
// 2x allowance for refit drift, since inliers are admitted against
// intermediate refit iterates and never dropped. min_support <= 0 skips the
// support-size check.
inline void audit_support_state(const SupportState& st, double tolerance,
                                int min_support = 0) {
  const int n = st.num_segments();
  for (int i = 0; i < n; ++i) {
    const auto& pi = st.assigned[i];
    if (pi.size() > 2) throw ValidationError("audit: |Pi(l)| > 2");
    if (pi.size() == 2 && pi[0] == pi[1])
      throw ValidationError("audit: duplicate plane in Pi(l)");
    for (int p : pi) {
      if (p < 0 || p >= static_cast<int>(st.planes.size()))
        throw ValidationError("audit: dangling plane index");
      const auto& sup = st.support[p];
      if (!std::binary_search(sup.begin(), sup.end(), i))
        throw ValidationError("audit: Pi/Lambda mismatch (segment not in support)");
    }
    if (pi.size() == 2) {
      const Plane& a = st.planes[pi[0]];
      const Plane& b = st.planes[pi[1]];
      if (plane_angle_deg(a, b) < kMinDihedralDeg)
        throw ValidationError("audit: structural segment on near-parallel planes");
      Line3 line = plane_intersection(a, b);
      if (segment_line_distance(st.segment(i), line) > 2.0 * tolerance)
        throw ValidationError("audit: structural segment fails the crease-line test");
    }
  }
  for (std::size_t p = 0; p < st.planes.size(); ++p) {
    const auto& sup = st.support[p];
    if (min_support > 0 && static_cast<int>(sup.size()) < min_support)
      throw ValidationError("audit: plane support below min_support");
    for (std::size_t k = 0; k < sup.size(); ++k) {
      if (k > 0 && sup[k] <= sup[k - 1])
        throw ValidationError("audit: support list not sorted/unique");
      const auto& pi = st.assigned[sup[k]];
      if (std::find(pi.begin(), pi.end(), static_cast<int>(p)) == pi.end())
        throw ValidationError("audit: Lambda/Pi mismatch (plane not in assignment)");
    }
  }
}

// Draws l_a uniformly from L0 u L1; the second segment is drawn so the pair
// can never regenerate an already existing model: if l_a supports P', all of
// Lambda(P') is excluded. Returns nullopt when no legal pair remains.
inline std::optional<std::pair<int, int>> draw_candidate_pair(const SupportState& st,
                                                              Rng& rng) {
  const std::vector<int> avail = st.available();
  if (avail.size() < 2) return std::nullopt;

  auto legal_second = [&st](int la, int lb) {
    if (la == lb) return false;
    const auto& pa = st.assigned[la];
    const auto& pb = st.assigned[lb];
    for (int p : pa)
      if (std::find(pb.begin(), pb.end(), p) != pb.end()) return false;
    return true;
  };

  for (int attempt = 0; attempt < 64; ++attempt) {
    int la = avail[rng.index(avail.size())];
    for (int inner = 0; inner < 64; ++inner) {
      int lb = avail[rng.index(avail.size())];
      if (legal_second(la, lb)) return std::make_pair(la, lb);
    }
    // Dense exclusion set; enumerate the complement explicitly.
    std::vector<int> pool;
    for (int lb : avail)
      if (legal_second(la, lb)) pool.push_back(lb);
    if (!pool.empty()) return std::make_pair(la, pool[rng.index(pool.size())]);
  }
  // Existence scan; only reached when legal pairs are rare or absent.
  for (int la : avail)
    for (int lb : avail)
      if (legal_second(la, lb)) {
        // A legal pair exists; resample until one is hit.
        for (;;) {
          int a = avail[rng.index(avail.size())];
          std::vector<int> pool;
          for (int b : avail)
            if (legal_second(a, b)) pool.push_back(b);
          if (!pool.empty()) return std::make_pair(a, pool[rng.index(pool.size())]);
        }
      }
  return std::nullopt;
}

enum class RejectReason { None, Angle, NonCoplanar };

struct Hypothesis {
  std::optional<Plane> plane;
  RejectReason reject = RejectReason::None;
};

// Two non-collinear, non-parallel, (near-)coplanar segments define a plane:
// the least-squares fit over the 4 endpoints weighted by segment length.
// Parallel pairs are discarded (angle test, which also rejects collinear).
inline Hypothesis hypothesize_plane(const Segment3& la, const Segment3& lb,
                                    const DetectParams& params) {
  if (segment_angle(la, lb) < params.theta_min_deg) return {std::nullopt, RejectReason::Angle};
  if (line_line_distance(la, lb) > params.eps) return {std::nullopt, RejectReason::NonCoplanar};
  std::vector<std::pair<Vec3, double>> pts;
  double wa = la.length(), wb = lb.length();
  pts.push_back({la.p0, wa});
  pts.push_back({la.p1, wa});
  pts.push_back({lb.p0, wb});
  pts.push_back({lb.p1, wb});
  try {
    return {fit_plane(pts), RejectReason::None};
  } catch (const DegenerateFit&) {
    return {std::nullopt, RejectReason::NonCoplanar};
  }
}

// Inliers of a candidate plane among L0 u L1. An L1 segment that already
// supports P' must lie close to the line plane ^ P' (the crease test); this
// subsumes the plane-distance test and is what prevents assigning a segment
// to two near-identical planes. Ill-conditioned intersections fail the test.
inline std::vector<int> collect_inliers(const Plane& plane, const SupportState& st,
                                        double eps,
                                        SegmentDistanceMode mode = SegmentDistanceMode::Max) {
  std::vector<int> inliers;
  for (int i = 0; i < st.num_segments(); ++i) {
    const auto& pi = st.assigned[i];
    if (pi.size() >= 2) continue;
    const Segment3& seg = st.segment(i);
    if (pi.empty()) {
      if (segment_plane_distance(seg, plane, mode) <= eps) inliers.push_back(i);
    } else {
      const Plane& other = st.planes[pi[0]];
      try {
        Line3 crease = plane_intersection(plane, other);
        if (segment_line_distance(seg, crease) <= eps) inliers.push_back(i);
      } catch (const IllConditionedIntersection&) {
        // near-parallel to the segment's existing plane: not a valid crease
      }
    }
  }
  return inliers;
}

inline Plane fit_plane_to_segments(const SupportState& st, const std::vector<int>& inliers) {
  std::vector<std::pair<Vec3, double>> pts;
  pts.reserve(2 * inliers.size());
  for (int i : inliers) {
    const Segment3& s = st.segment(i);
    double w = s.length();
    pts.push_back({s.p0, w});
    pts.push_back({s.p1, w});
  }
  return fit_plane(pts);
}

// Alternate refit and re-collection until the eps-slab around the refitted
// plane stops gaining segments. Inliers are only ever added, matching the
// greedy growth of the detection stage. Capped at 20 rounds.
inline std::pair<Plane, std::vector<int>> refit_until_stable(
    Plane plane, std::vector<int> inliers, const SupportState& st,
    const DetectParams& params) {
  std::sort(inliers.begin(), inliers.end());
  for (int round = 0; round < 20; ++round) {
    plane = fit_plane_to_segments(st, inliers);  // DegenerateFit propagates
    std::vector<int> found = collect_inliers(plane, st, params.eps, params.distance_mode);
    std::vector<int> merged;
    std::set_union(inliers.begin(), inliers.end(), found.begin(), found.end(),
                   std::back_inserter(merged));
    if (merged == inliers) break;
    inliers = std::move(merged);
  }
  return {plane, inliers};
}

namespace detail {

inline double candidate_score(const SupportState& st, const std::vector<int>& inliers,
                              bool by_length) {
  if (!by_length) return static_cast<double>(inliers.size());
  double s = 0;
  for (int i : inliers) s += st.segment(i).length();
  return s;
}

// All legal generator pairs under the exclusion rule, in lexicographic order.
inline std::vector<std::pair<int, int>> legal_pairs(const SupportState& st) {
  std::vector<std::pair<int, int>> out;
  const auto avail = st.available();
  for (std::size_t a = 0; a < avail.size(); ++a) {
    for (std::size_t b = a + 1; b < avail.size(); ++b) {
      int i = avail[a], j = avail[b];
      const auto& pi = st.assigned[i];
      const auto& pj = st.assigned[j];
      bool shared = false;
      for (int p : pi)
        if (std::find(pj.begin(), pj.end(), p) != pj.end()) shared = true;
      if (!shared) out.push_back({i, j});
    }
  }
  return out;
}

}  // namespace detail

// Greedy multi-support RANSAC: per round, sample N_iter candidate pairs (or
// enumerate all legal pairs exhaustively), keep the plane with the largest
// support, refit to stability, and commit. Stops when the best support drops
// below min_support or N_max planes are committed.
inline SupportState detect_planes(const LineCloud& cloud, const DetectParams& params,
                                  std::uint64_t seed) {
  params.check();
  SupportState st = SupportState::init(cloud);
  Rng rng = Rng(seed);

  while (static_cast<int>(st.planes.size()) < params.n_max) {
    std::optional<Plane> best_plane;
    std::vector<int> best_inliers;
    double best_score = -1;

    auto consider = [&](int ia, int ib) {
      Hypothesis hyp = hypothesize_plane(st.segment(ia), st.segment(ib), params);
      if (!hyp.plane) return;
      std::vector<int> inl = collect_inliers(*hyp.plane, st, params.eps, params.distance_mode);
      double score = detail::candidate_score(st, inl, params.rank_by_length);
      if (score > best_score) {
        best_score = score;
        best_plane = hyp.plane;
        best_inliers = std::move(inl);
      }
    };

    if (params.exhaustive) {
      for (auto [i, j] : detail::legal_pairs(st)) consider(i, j);
    } else {
      bool exhausted = false;
      for (int it = 0; it < params.n_iter; ++it) {
        auto pair = draw_candidate_pair(st, rng);
        if (!pair) { exhausted = true; break; }
        consider(pair->first, pair->second);
      }
      if (exhausted && !best_plane) break;
    }

    if (!best_plane || static_cast<int>(best_inliers.size()) < params.min_support) break;
    try {
      auto [plane, inliers] = refit_until_stable(*best_plane, best_inliers, st, params);
      st.commit(plane, inliers);
    } catch (const DegenerateFit&) {
      break;  // collinear support set; no usable model this round
    }
  }
  return st;
}

// Plane fusion: merge near-coplanar plane fragments (construction-tolerance
// wall splits) at the looser eps_fus accuracy. Pairs under theta_fus are
// processed by increasing angle; a merge is accepted iff the common-inlier
// proportion over the smaller support reaches p_fus and every union inlier
// fits the refitted plane within eps_fus.
inline SupportState fuse_planes(const SupportState& input, const DetectParams& params) {
  SupportState st = input;
  std::vector<bool> alive(st.planes.size(), true);
  std::set<std::pair<int, int>> failed;

  auto pair_key = [](int a, int b) { return std::make_pair(std::min(a, b), std::max(a, b)); };

  auto next_pair = [&]() -> std::optional<std::pair<int, int>> {
    double best_angle = params.theta_fus_deg;
    std::optional<std::pair<int, int>> best;
    for (std::size_t a = 0; a < st.planes.size(); ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < st.planes.size(); ++b) {
        if (!alive[b]) continue;
        auto key = pair_key(static_cast<int>(a), static_cast<int>(b));
        if (failed.count(key)) continue;
        double angle = plane_angle_deg(st.planes[a], st.planes[b]);
        if (angle < best_angle) {
          best_angle = angle;
          best = key;
        }
      }
    }
    return best;
  };

  while (auto pk = next_pair()) {
    auto [a, b] = *pk;
    const auto& sa = st.support[a];
    const auto& sb = st.support[b];
    std::vector<int> common, uni;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(uni));
    double proportion =
        static_cast<double>(common.size()) / std::max<std::size_t>(1, std::min(sa.size(), sb.size()));

    bool ok = proportion >= params.p_fus;
    Plane refit;
    if (ok) {
      try {
        refit = fit_plane_to_segments(st, uni);
      } catch (const DegenerateFit&) {
        ok = false;
      }
    }
    if (ok) {
      for (int i : uni)
        if (segment_plane_distance(st.segment(i), refit, params.distance_mode) > params.eps_fus) {
          ok = false;
          break;
        }
    }
    if (!ok) {
      failed.insert(*pk);
      continue;
    }

    // Accept: retire a and b, append the refitted plane, reassign segments.
    int fresh = static_cast<int>(st.planes.size());
    st.planes.push_back(refit);
    alive.push_back(true);
    alive[a] = alive[b] = false;

    std::vector<int> fresh_support;
    for (int i : uni) {
      auto& pi = st.assigned[i];
      std::vector<int> others;
      for (int p : pi)
        if (p != a && p != b) others.push_back(p);
      bool keep_fresh = true;
      if (!others.empty()) {
        // Structural segment against a surviving plane: the crease test must
        // still hold or the segment keeps only the closer plane.
        int q = others[0];
        double ang = plane_angle_deg(refit, st.planes[q]);
        bool crease_ok = false;
        if (ang >= kMinDihedralDeg) {
          Line3 line = plane_intersection(refit, st.planes[q]);
          crease_ok = segment_line_distance(st.segment(i), line) <= params.eps_fus;
        }
        if (crease_ok) {
          pi = {q, fresh};
        } else {
          double d_fresh = segment_plane_distance(st.segment(i), refit, params.distance_mode);
          double d_other = segment_plane_distance(st.segment(i), st.planes[q], params.distance_mode);
          if (d_fresh <= d_other) {
            pi = {fresh};
            auto& supq = st.support[q];
            supq.erase(std::remove(supq.begin(), supq.end(), i), supq.end());
          } else {
            pi = {q};
            keep_fresh = false;
          }
        }
      } else {
        pi = {fresh};
      }
      if (keep_fresh) fresh_support.push_back(i);
    }
    std::sort(fresh_support.begin(), fresh_support.end());
    st.support.push_back(fresh_support);
  }

  // Compact dead planes, remapping indices.
  SupportState out = st;
  out.planes.clear();
  out.support.clear();
  std::vector<int> remap(st.planes.size(), -1);
  for (std::size_t p = 0; p < st.planes.size(); ++p) {
    if (!alive[p]) continue;
    remap[p] = static_cast<int>(out.planes.size());
    out.planes.push_back(st.planes[p]);
    out.support.push_back(st.support[p]);
  }
  for (auto& pi : out.assigned) {
    for (auto& p : pi) p = remap[p];
    pi.erase(std::remove(pi.begin(), pi.end(), -1), pi.end());
  }
  return out;
}

}  // namespace linerecon
