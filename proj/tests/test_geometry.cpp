#include <catch2/catch_amalgamated.hpp>

#include "linerecon/geometry.hpp"
#include "linerecon/common.hpp"

using namespace linerecon;

namespace {

double weighted_sse(const std::vector<std::pair<Vec3, double>>& pts, const Plane& p) {
  double s = 0;
  for (const auto& [x, w] : pts) {
    double d = signed_distance(x, p);
    s += w * d * d;
  }
  return s;
}

}  // namespace

TEST_CASE("signed_distance on axis-aligned planes") {
  Plane z1 = Plane::make(Vec3(0, 0, 1), 1);
  CHECK(signed_distance(Vec3(0, 0, 2), z1) == Catch::Approx(1.0));
  CHECK(signed_distance(Vec3(0, 0, 1), z1) == Catch::Approx(0.0).margin(1e-15));
  Plane x1 = Plane::make(Vec3(1, 0, 0), 1);
  CHECK(signed_distance(Vec3(3, 4, 0), x1) == Catch::Approx(2.0));
}

TEST_CASE("segment_plane_distance uses the max endpoint distance") {
  Plane z1 = Plane::make(Vec3(0, 0, 1), 1);
  Segment3 edge{Vec3(-1, -1, 1), Vec3(1, -1, 1)};
  CHECK(segment_plane_distance(edge, z1) == Catch::Approx(0.0).margin(1e-15));
  Segment3 vertical{Vec3(0, 0, 0), Vec3(0, 0, 2)};
  CHECK(segment_plane_distance(vertical, z1) == Catch::Approx(1.0));
  Segment3 tilted{Vec3(0, 0, 1.01), Vec3(2, 0, 0.99)};
  CHECK(segment_plane_distance(tilted, z1) == Catch::Approx(0.01));
  CHECK(segment_plane_distance(tilted, z1, SegmentDistanceMode::Mean) == Catch::Approx(0.01));
}

TEST_CASE("segment_line_distance against a crease line") {
  Line3 line = Line3::through(Vec3(1, 1, 0), Vec3(0, 0, 1));  // x=1, y=1
  Segment3 crease{Vec3(1, 1, -1), Vec3(1, 1, 1)};
  CHECK(segment_line_distance(crease, line) == Catch::Approx(0.0).margin(1e-15));
  Segment3 off{Vec3(2, 1, 0), Vec3(2, 1, 5)};
  CHECK(segment_line_distance(off, line) == Catch::Approx(1.0));
  Segment3 endpoint_max{Vec3(1, 1, 0), Vec3(1, 2, 0)};
  CHECK(segment_line_distance(endpoint_max, line) == Catch::Approx(1.0));
}

TEST_CASE("segment_angle basics and symmetry") {
  Segment3 x_edge{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  Segment3 y_edge{Vec3(0, 0, 0), Vec3(0, 1, 0)};
  CHECK(segment_angle(x_edge, y_edge) == Catch::Approx(90.0));
  Segment3 reversed{x_edge.p1, x_edge.p0};
  CHECK(segment_angle(x_edge, reversed) == Catch::Approx(0.0).margin(1e-9));
  Segment3 diag{Vec3(0, 0, 0), Vec3(1, 1, 0)};
  CHECK(segment_angle(diag, x_edge) == Catch::Approx(45.0));

  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    Segment3 a{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
               Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    Segment3 b{Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
               Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
    if (!a.valid() || !b.valid()) continue;
    double ab = segment_angle(a, b), ba = segment_angle(b, a);
    CHECK(ab == Catch::Approx(ba).margin(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 90.0 + 1e-12);
  }
}

TEST_CASE("line_line_distance: intersecting, skew, parallel") {
  // Two cube edges sharing the vertex (1,1,1).
  Segment3 a{Vec3(-1, 1, 1), Vec3(1, 1, 1)};
  Segment3 b{Vec3(1, -1, 1), Vec3(1, 1, 1)};
  CHECK(line_line_distance(a, b) == Catch::Approx(0.0).margin(1e-12));
  // Skew perpendicular edges on opposite faces.
  Segment3 top{Vec3(-1, -1, 1), Vec3(1, -1, 1)};     // x-directed on z=1
  Segment3 bottom{Vec3(1, -1, -1), Vec3(1, 1, -1)};  // y-directed on z=-1
  CHECK(line_line_distance(top, bottom) == Catch::Approx(2.0));
  // Two parallel edges of the z=1 face.
  Segment3 p1{Vec3(-1, -1, 1), Vec3(1, -1, 1)};
  Segment3 p2{Vec3(-1, 1, 1), Vec3(1, 1, 1)};
  CHECK(line_line_distance(p1, p2) == Catch::Approx(2.0));
}

TEST_CASE("fit_plane recovers an exact face") {
  std::vector<std::pair<Vec3, double>> pts = {{Vec3(-1, -1, 1), 1.0},
                                              {Vec3(1, -1, 1), 1.0},
                                              {Vec3(-1, 1, 1), 1.0},
                                              {Vec3(1, 1, 1), 1.0}};
  Plane p = fit_plane(pts);
  CHECK(p.normal.z() == Catch::Approx(1.0));
  CHECK(p.offset == Catch::Approx(1.0));
}

TEST_CASE("fit_plane on a perturbed face minimizes weighted SSE") {
  // One corner lifted to z = 1.04. The least-squares plane tilts slightly
  // (covariance cross terms 0.04 against 4), and the leading normal
  // component is then x, so canonicalization lands on negative z. Frozen
  // values come from an independent dense eigen solve of the 3x3 covariance:
  //   normal  = (0.0099980..., 0.0099980..., -0.99990003...)
  //   offset  = -1.0098989949...
  std::vector<std::pair<Vec3, double>> pts = {{Vec3(-1, -1, 1), 1.0},
                                              {Vec3(1, -1, 1), 1.0},
                                              {Vec3(-1, 1, 1), 1.0},
                                              {Vec3(1, 1, 1.04), 1.0}};
  Plane p = fit_plane(pts);
  CHECK(std::abs(p.normal.z()) == Catch::Approx(0.9998999950).margin(1e-6));
  CHECK(std::abs(p.offset) == Catch::Approx(1.0098989949).margin(1e-6));
  // Within a degree of the ideal face plane, as the spec's narrative values
  // describe.
  CHECK(std::abs(p.normal.dot(Vec3(0, 0, 1))) > std::cos(deg2rad(1.0)));

  double sse = weighted_sse(pts, p);
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    Vec3 n = p.normal + 0.02 * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    double off = p.offset + 0.02 * rng.uniform(-1, 1);
    Plane q = Plane::make(n, off);
    CHECK(weighted_sse(pts, q) >= sse - 1e-12);
  }
}

TEST_CASE("fit_plane rejects collinear input") {
  std::vector<std::pair<Vec3, double>> pts = {
      {Vec3(0, 0, 0), 1.0}, {Vec3(1, 0, 0), 1.0}, {Vec3(2, 0, 0), 1.0}};
  CHECK_THROWS_AS(fit_plane(pts), DegenerateFit);
  CHECK_THROWS_AS(fit_plane({{Vec3(0, 0, 0), 1.0}, {Vec3(1, 0, 0), 1.0}}), DegenerateFit);
}

TEST_CASE("fit_plane invariances: point order and weight scaling") {
  Rng rng(11);
  std::vector<std::pair<Vec3, double>> pts;
  for (int i = 0; i < 12; ++i)
    pts.push_back({Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.01 * rng.uniform(-1, 1)),
                   rng.uniform(0.5, 2.0)});
  Plane base = fit_plane(pts);

  std::vector<std::pair<Vec3, double>> shuffled = pts;
  std::reverse(shuffled.begin(), shuffled.end());
  Plane reordered = fit_plane(shuffled);
  CHECK((reordered.normal - base.normal).norm() < 1e-9);
  CHECK(std::abs(reordered.offset - base.offset) < 1e-9);

  std::vector<std::pair<Vec3, double>> scaled = pts;
  for (auto& [x, w] : scaled) w *= 7.5;
  Plane rescaled = fit_plane(scaled);
  CHECK((rescaled.normal - base.normal).norm() < 1e-9);
  CHECK(std::abs(rescaled.offset - base.offset) < 1e-9);

  // Same point set twice: bitwise identical after canonicalization.
  Plane again = fit_plane(pts);
  CHECK(again.normal.x() == base.normal.x());
  CHECK(again.normal.y() == base.normal.y());
  CHECK(again.normal.z() == base.normal.z());
  CHECK(again.offset == base.offset);
}

TEST_CASE("project_segment onto a plane and onto a plane pair") {
  Plane z1 = Plane::make(Vec3(0, 0, 1), 1);
  Segment3 s{Vec3(0, 0, 1.02), Vec3(1, 0, 0.98)};
  Segment3 p = project_segment(s, z1);
  CHECK(p.p0.z() == Catch::Approx(1.0));
  CHECK(p.p1.z() == Catch::Approx(1.0));
  CHECK(p.p0.x() == Catch::Approx(0.0).margin(1e-15));
  CHECK(p.p1.x() == Catch::Approx(1.0));

  Plane x1 = Plane::make(Vec3(1, 0, 0), 1);
  Plane y1 = Plane::make(Vec3(0, 1, 0), 1);
  Segment3 near_crease{Vec3(1.01, 0.99, -1), Vec3(0.99, 1.01, 1)};
  Segment3 on_crease = project_segment(near_crease, x1, y1);
  CHECK(on_crease.p0.x() == Catch::Approx(1.0));
  CHECK(on_crease.p0.y() == Catch::Approx(1.0));
  CHECK(on_crease.p0.z() == Catch::Approx(-1.0));
  CHECK(on_crease.p1.z() == Catch::Approx(1.0));

  // Identity on a segment already on the carrier.
  Segment3 already{Vec3(0.25, 0.5, 1.0), Vec3(0.5, -0.25, 1.0)};
  Segment3 same = project_segment(already, z1);
  CHECK((same.p0 - already.p0).norm() < 1e-15);
  CHECK((same.p1 - already.p1).norm() < 1e-15);

  // Near-parallel pair is rejected.
  Plane z1b = Plane::make(Vec3(0, 0.001, 1), 1.1);
  CHECK_THROWS_AS(project_segment(s, z1, z1b), IllConditionedIntersection);
}

TEST_CASE("projection lands on the plane for random inputs") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Vec3 n(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (n.norm() < 0.1) continue;
    Plane p = Plane::make(n, rng.uniform(-2, 2));
    Segment3 s{Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)),
               Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3))};
    if (!s.valid()) continue;
    Segment3 q = project_segment(s, p);
    CHECK(std::abs(signed_distance(q.p0, p)) < 1e-9);
    CHECK(std::abs(signed_distance(q.p1, p)) < 1e-9);
  }
}

TEST_CASE("plane canonicalization makes identity testable") {
  Plane a = Plane::make(Vec3(0, 0, -1), -1);
  Plane b = Plane::make(Vec3(0, 0, 1), 1);
  CHECK(a.normal.z() == Catch::Approx(1.0));
  CHECK(a.offset == Catch::Approx(1.0));
  CHECK((a.normal - b.normal).norm() < 1e-15);
}
