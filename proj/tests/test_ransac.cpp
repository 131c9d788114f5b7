#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "linerecon/ransac.hpp"
#include "linerecon/synth.hpp"

using namespace linerecon;

namespace {

DetectParams cube_params() {
  DetectParams p;
  p.eps = 0.06;
  p.eps_fus = 0.18;
  p.min_support = 4;
  p.exhaustive = true;
  return p;
}

// Match a detected plane to an ideal axis-aligned cube face.
bool matches_face(const Plane& p, int axis) {
  Vec3 n = Vec3::Zero();
  n[axis] = 1;
  return std::abs(p.normal.dot(n)) > 0.9999 && std::abs(std::abs(p.offset) - 1.0) < 1e-6;
}

ObservedSegment make_obs(int id, Vec3 a, Vec3 b) {
  ObservedSegment s;
  s.id = id;
  s.geometry = {a, b};
  s.views.push_back({0, 0.0, 1.0});
  return s;
}

}  // namespace

TEST_CASE("draw_candidate_pair: uniform over fresh state, exclusion rule enforced") {
  LineCloud cloud = synth_cube(0.0, 0, 3);
  SupportState st = SupportState::init(cloud);

  Rng rng(17);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 5000; ++i) {
    auto pair = draw_candidate_pair(st, rng);
    REQUIRE(pair.has_value());
    auto [a, b] = *pair;
    CHECK(a != b);
    seen.insert(std::minmax(a, b));
  }
  CHECK(seen.size() == 66);  // all 12-choose-2 unordered pairs reachable

  // Commit a plane supported by {0, 1}; a pair drawn from the same support
  // set would regenerate the existing model, so it must never appear.
  st.commit(Plane::make(Vec3(0, 0, 1), 1), {0, 1});
  Rng rng2(18);
  for (int i = 0; i < 10000; ++i) {
    auto pair = draw_candidate_pair(st, rng2);
    REQUIRE(pair.has_value());
    auto [a, b] = *pair;
    bool both_on_plane = (a == 0 || a == 1) && (b == 0 || b == 1);
    CHECK(!both_on_plane);
  }

  // All segments in L2: no candidates left.
  SupportState full = SupportState::init(cloud);
  std::vector<int> everyone(12);
  for (int i = 0; i < 12; ++i) everyone[i] = i;
  full.commit(Plane::make(Vec3(0, 0, 1), 1), everyone);
  full.commit(Plane::make(Vec3(0, 1, 0), 1), everyone);
  Rng rng3(19);
  CHECK(!draw_candidate_pair(full, rng3).has_value());
}

TEST_CASE("hypothesize_plane accepts coplanar pairs and rejects parallel/skew") {
  DetectParams params = cube_params();
  Segment3 e_x_z1{Vec3(-1, -1, 1), Vec3(1, -1, 1)};
  Segment3 e_y_z1{Vec3(1, -1, 1), Vec3(1, 1, 1)};
  Hypothesis h = hypothesize_plane(e_x_z1, e_y_z1, params);
  REQUIRE(h.plane.has_value());
  CHECK(std::abs(h.plane->normal.z()) > 0.9999);
  CHECK(std::abs(h.plane->offset - 1.0) < 1e-9);

  // Parallel edges of the same face: rejected by the angle test.
  Segment3 e_x_z1_far{Vec3(-1, 1, 1), Vec3(1, 1, 1)};
  Hypothesis hp = hypothesize_plane(e_x_z1, e_x_z1_far, params);
  CHECK(!hp.plane.has_value());
  CHECK(hp.reject == RejectReason::Angle);

  // Perpendicular but skew at distance 2.
  Segment3 e_y_zm1{Vec3(1, -1, -1), Vec3(1, 1, -1)};
  Hypothesis hs = hypothesize_plane(e_x_z1, e_y_zm1, params);
  CHECK(!hs.plane.has_value());
  CHECK(hs.reject == RejectReason::NonCoplanar);
}

TEST_CASE("collect_inliers: plane test for L0, crease test for L1") {
  LineCloud cloud = synth_cube(0.0, 0, 3);
  SupportState st = SupportState::init(cloud);
  Plane z1 = Plane::make(Vec3(0, 0, 1), 1);

  auto inl = collect_inliers(z1, st, 0.06);
  REQUIRE(inl.size() == 4);
  for (int i : inl) CHECK(segment_plane_distance(st.segment(i), z1) < 1e-12);

  // Commit z=1, then collect for x=1: the shared edge passes the crease test.
  st.commit(z1, inl);
  Plane x1 = Plane::make(Vec3(1, 0, 0), 1);
  auto inl2 = collect_inliers(x1, st, 0.06);
  CHECK(inl2.size() == 4);
  bool has_crease_edge = false;
  for (int i : inl2) {
    const Segment3& s = st.segment(i);
    if (segment_plane_distance(s, z1) < 1e-9 && segment_plane_distance(s, x1) < 1e-9)
      has_crease_edge = true;
  }
  CHECK(has_crease_edge);
}

TEST_CASE("collect_inliers excludes L1 segments far from a shallow crease") {
  // P' = z=0 already detected; the candidate sits at 2 degrees to it. A
  // segment on P' 0.5 m away from the intersection line is within eps of
  // both planes yet far from the crease, and must be excluded.
  const double angle = deg2rad(2.0);
  Plane p_prime = Plane::make(Vec3(0, 0, 1), 0);
  Plane cand = Plane::make(Vec3(std::sin(angle), 0, std::cos(angle)), 0);

  LineCloud cloud;
  cloud.viewpoints.push_back({0, Vec3(0, 0, 5)});
  cloud.segments.push_back(make_obs(0, Vec3(0.5, -1, 0), Vec3(0.5, 1, 0)));
  cloud.segments.push_back(make_obs(1, Vec3(0, -1, 0), Vec3(0, 1, 0)));

  SupportState st = SupportState::init(cloud);
  st.commit(p_prime, {0, 1});

  CHECK(segment_plane_distance(cloud.segments[0].geometry, cand) < 0.06);
  auto inl = collect_inliers(cand, st, 0.06);
  CHECK(std::find(inl.begin(), inl.end(), 0) == inl.end());  // far from the crease
  CHECK(std::find(inl.begin(), inl.end(), 1) != inl.end());  // on the crease
}

TEST_CASE("refit_until_stable: fixpoint on exact data, growth on constructed data") {
  LineCloud cloud = synth_cube(0.0, 0, 3);
  SupportState st = SupportState::init(cloud);
  Plane z1 = Plane::make(Vec3(0, 0, 1), 1);
  auto inliers = collect_inliers(z1, st, 0.06);
  DetectParams params = cube_params();
  auto [plane, grown] = refit_until_stable(z1, inliers, st, params);
  CHECK((plane.normal - z1.normal).norm() < 1e-12);
  CHECK(std::abs(plane.offset - z1.offset) < 1e-12);
  CHECK(grown == inliers);

  // Noisy face: the refit plane has no larger weighted SSE than the
  // 2-segment hypothesis plane over the final inliers (least-squares
  // oracle).
  LineCloud noisy = synth_cube(0.01, 0, 11);
  SupportState stn = SupportState::init(noisy);
  Hypothesis hyp = hypothesize_plane(stn.segment(1), stn.segment(7), params);
  REQUIRE(hyp.plane.has_value());
  auto inl0 = collect_inliers(*hyp.plane, stn, params.eps);
  REQUIRE(inl0.size() >= 4);
  auto [refit, inl1] = refit_until_stable(*hyp.plane, inl0, stn, params);
  auto sse = [&](const Plane& p, const std::vector<int>& ids) {
    double s = 0;
    for (int i : ids) {
      const Segment3& seg = stn.segment(i);
      double w = seg.length();
      s += w * signed_distance(seg.p0, p) * signed_distance(seg.p0, p);
      s += w * signed_distance(seg.p1, p) * signed_distance(seg.p1, p);
    }
    return s;
  };
  CHECK(sse(refit, inl1) <= sse(*hyp.plane, inl1) + 1e-12);

  // Constructed growth: a 5th segment at 1.4 eps from the hypothesis plane
  // but within 0.9 eps of the refit gets pulled in.
  LineCloud grow_cloud;
  grow_cloud.viewpoints.push_back({0, Vec3(0, 0, 5)});
  const double eps = 0.06;
  grow_cloud.segments.push_back(make_obs(0, Vec3(-1, -1, 0.05), Vec3(-1, 1, 0.05)));
  grow_cloud.segments.push_back(make_obs(1, Vec3(-0.5, -1, 0.03), Vec3(-0.5, 1, 0.03)));
  grow_cloud.segments.push_back(make_obs(2, Vec3(0.5, -1, -0.03), Vec3(0.5, 1, -0.03)));
  grow_cloud.segments.push_back(make_obs(3, Vec3(1, -1, -0.05), Vec3(1, 1, -0.05)));
  grow_cloud.segments.push_back(make_obs(4, Vec3(2, -1, -0.084), Vec3(2, 1, -0.084)));
  SupportState stg = SupportState::init(grow_cloud);
  Plane flat = Plane::make(Vec3(0, 0, 1), 0);
  CHECK(segment_plane_distance(stg.segment(4), flat) == Catch::Approx(0.084));  // 1.4 eps
  DetectParams gp = cube_params();
  gp.eps = eps;
  auto [gplane, ginl] = refit_until_stable(flat, {0, 1, 2, 3}, stg, gp);
  CHECK(std::find(ginl.begin(), ginl.end(), 4) != ginl.end());
  CHECK(ginl.size() >= 5);
}

TEST_CASE("detect_planes on the clean cube: exhaustive recovers all 6 faces") {
  LineCloud cloud = synth_cube(0.0, 0, 123);
  SupportState st = detect_planes(cloud, cube_params(), 5);
  REQUIRE(st.planes.size() == 6);
  for (const auto& sup : st.support) CHECK(sup.size() == 4);
  CHECK(st.l2().size() == 12);
  CHECK(st.l0().empty());
  CHECK(st.l1().empty());
  audit_support_state(st, 0.06, 4);

  int matched = 0;
  for (const auto& p : st.planes)
    for (int axis = 0; axis < 3; ++axis)
      if (matches_face(p, axis)) ++matched;
  CHECK(matched == 6);

  // No duplicate (plane, support-set) committed.
  std::set<std::vector<int>> supports(st.support.begin(), st.support.end());
  CHECK(supports.size() == 6);
}

TEST_CASE("detect_planes: N_max cap and sampled-mode determinism") {
  LineCloud cloud = synth_cube(0.0, 0, 9);
  DetectParams p = cube_params();
  p.n_max = 1;
  SupportState st = detect_planes(cloud, p, 5);
  CHECK(st.planes.size() == 1);

  DetectParams sampled = cube_params();
  sampled.exhaustive = false;
  sampled.n_iter = 200;
  SupportState a = detect_planes(cloud, sampled, 42);
  SupportState b = detect_planes(cloud, sampled, 42);
  REQUIRE(a.planes.size() == b.planes.size());
  for (std::size_t i = 0; i < a.planes.size(); ++i) {
    CHECK((a.planes[i].normal - b.planes[i].normal).norm() == 0.0);
    CHECK(a.support[i] == b.support[i]);
  }
}

TEST_CASE("detect_planes is invariant under segment permutation in exhaustive mode") {
  LineCloud cloud = synth_cube(0.0, 0, 77);
  LineCloud shuffled = cloud;
  std::rotate(shuffled.segments.begin(), shuffled.segments.begin() + 5, shuffled.segments.end());
  SupportState a = detect_planes(cloud, cube_params(), 1);
  SupportState b = detect_planes(shuffled, cube_params(), 1);
  REQUIRE(a.planes.size() == b.planes.size());
  auto key = [](const SupportState& st) {
    std::set<std::string> keys;
    for (const auto& p : st.planes) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", p.normal.x(), p.normal.y(),
                    p.normal.z(), p.offset);
      keys.insert(buf);
    }
    return keys;
  };
  CHECK(key(a) == key(b));
}

TEST_CASE("fuse_planes merges coplanar wall fragments and keeps distinct faces") {
  // Wall split into two near-coplanar planes at 0.5 deg sharing 2 of their
  // inliers (proportion over the smaller support: 2/4 = 50%).
  LineCloud cloud;
  cloud.viewpoints.push_back({0, Vec3(0, 0, 5)});
  const double tilt = deg2rad(0.5);
  auto tz = [&](double x) { return x * std::tan(tilt); };
  cloud.segments.push_back(make_obs(0, Vec3(-2, 0, 0), Vec3(-1, 1, 0)));
  cloud.segments.push_back(make_obs(1, Vec3(-2, 1, 0), Vec3(-1, 0, 0)));
  cloud.segments.push_back(make_obs(2, Vec3(-1.5, 0.2, 0), Vec3(-0.2, 0.8, 0)));
  cloud.segments.push_back(make_obs(3, Vec3(-0.5, 0, 0), Vec3(0.5, 1, tz(0.5))));
  cloud.segments.push_back(make_obs(4, Vec3(-0.5, 1, 0), Vec3(0.5, 0, tz(0.5))));
  cloud.segments.push_back(make_obs(5, Vec3(1, 0, tz(1)), Vec3(2, 1, tz(2))));
  cloud.segments.push_back(make_obs(6, Vec3(1, 1, tz(1)), Vec3(2, 0, tz(2))));

  SupportState st = SupportState::init(cloud);
  st.commit(Plane::make(Vec3(0, 0, 1), 0), {0, 1, 2, 3, 4});
  st.commit(Plane::make(Vec3(-std::sin(tilt), 0, std::cos(tilt)), 0), {3, 4, 5, 6});

  DetectParams params;
  params.eps = 0.02;
  params.eps_fus = 0.06;
  SupportState fused = fuse_planes(st, params);
  CHECK(fused.planes.size() == 1);
  CHECK(fused.support[0].size() == 7);
  audit_support_state(fused, params.eps_fus);

  // Perpendicular cube faces are never considered for fusion.
  LineCloud cube = synth_cube(0.0, 0, 31);
  SupportState det = detect_planes(cube, cube_params(), 2);
  SupportState same = fuse_planes(det, cube_params());
  CHECK(same.planes.size() == det.planes.size());

  // Two planes at 5 deg with zero common inliers: merge rejected, both kept.
  LineCloud lc2;
  lc2.viewpoints.push_back({0, Vec3(0, 0, 5)});
  const double a5 = deg2rad(5.0);
  lc2.segments.push_back(make_obs(0, Vec3(-2, 0, 0), Vec3(-1, 1, 0)));
  lc2.segments.push_back(make_obs(1, Vec3(-2, 1, 0), Vec3(-1, 0, 0)));
  lc2.segments.push_back(make_obs(2, Vec3(1, 0, std::tan(a5)), Vec3(2, 1, 2 * std::tan(a5))));
  lc2.segments.push_back(make_obs(3, Vec3(1, 1, std::tan(a5)), Vec3(2, 0, 2 * std::tan(a5))));
  SupportState st2 = SupportState::init(lc2);
  st2.commit(Plane::make(Vec3(0, 0, 1), 0), {0, 1});
  st2.commit(Plane::make(Vec3(-std::sin(a5), 0, std::cos(a5)), 0), {2, 3});
  SupportState kept = fuse_planes(st2, params);
  CHECK(kept.planes.size() == 2);
}

TEST_CASE("fusion never orphans segments or increases plane count") {
  for (int trial = 0; trial < 10; ++trial) {
    LineCloud cloud = synth_cube(0.05, 10, 1000 + trial);
    DetectParams p = cube_params();
    SupportState det = detect_planes(cloud, p, trial);
    SupportState fused = fuse_planes(det, p);
    CHECK(fused.planes.size() <= det.planes.size());
    audit_support_state(fused, p.eps_fus);
    for (int i = 0; i < det.num_segments(); ++i)
      if (det.support_count(i) > 0) CHECK(fused.support_count(i) > 0);
  }
}
