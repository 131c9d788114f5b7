#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "linerecon/common.hpp"

namespace linerecon {

using Vec3 = Eigen::Vector3d;

constexpr double kUnitTol = 1e-12;       // Direction3 norm tolerance
constexpr double kMinSegmentLen = 1e-12; // Segment3 validity
constexpr double kParallelSin = 1e-6;    // line_line_distance fallback
constexpr double kMinDihedralDeg = 1.0;  // two-plane projection conditioning

inline double deg2rad(double d) { return d * M_PI / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / M_PI; }

// Unit-norm direction. Throws on (near-)zero input.
inline Vec3 unit(const Vec3& v) {
  double n = v.norm();
  if (n < kMinSegmentLen) throw DegenerateFit("unit: zero-length direction");
  return v / n;
}

// Infinite line as point + unit direction.
struct Line3 {
  Vec3 point;
  Vec3 dir;  // unit

  static Line3 through(const Vec3& p, const Vec3& direction) {
    return Line3{p, unit(direction)};
  }
};

// Oriented plane { x : normal . x - offset = 0 }, normal unit, canonical
// orientation: first nonzero normal component positive. Canonical form makes
// planes comparable and hashable.
struct Plane {
  Vec3 normal{0, 0, 1};
  double offset{0};

  static Plane make(const Vec3& n, double d) {
    Vec3 nn = unit(n);
    double dd = d;
    for (int i = 0; i < 3; ++i) {
      if (std::abs(nn[i]) > kUnitTol) {
        if (nn[i] < 0) { nn = -nn; dd = -dd; }
        break;
      }
    }
    Plane p;
    p.normal = nn;
    p.offset = dd;
    return p;
  }

  // Plane through a point with the given normal.
  static Plane through(const Vec3& point, const Vec3& n) {
    Vec3 nn = unit(n);
    return make(nn, nn.dot(point));
  }
};

struct Segment3 {
  Vec3 p0, p1;

  Vec3 dir() const { return unit(p1 - p0); }
  double length() const { return (p1 - p0).norm(); }
  Vec3 midpoint() const { return 0.5 * (p0 + p1); }
  Vec3 at(double t) const { return p0 + t * (p1 - p0); }
  bool valid() const { return (p1 - p0).norm() > kMinSegmentLen; }
};

inline double signed_distance(const Vec3& point, const Plane& plane) {
  return plane.normal.dot(point) - plane.offset;
}

enum class SegmentDistanceMode { Max, Mean };

// d(l, P): max (default) or mean of endpoint distances to the plane. Max
// guarantees the whole segment sits inside the eps-slab.
inline double segment_plane_distance(const Segment3& seg, const Plane& plane,
                                     SegmentDistanceMode mode = SegmentDistanceMode::Max) {
  double d0 = std::abs(signed_distance(seg.p0, plane));
  double d1 = std::abs(signed_distance(seg.p1, plane));
  return mode == SegmentDistanceMode::Max ? std::max(d0, d1) : 0.5 * (d0 + d1);
}

inline double point_line_distance(const Vec3& p, const Line3& line) {
  return (p - line.point).cross(line.dir).norm();
}

// d(l, P ∩ P') building block: max over endpoints of distance to an infinite line.
inline double segment_line_distance(const Segment3& seg, const Line3& line) {
  return std::max(point_line_distance(seg.p0, line), point_line_distance(seg.p1, line));
}

// Angle between unoriented segment directions, degrees in [0, 90].
inline double segment_angle(const Segment3& a, const Segment3& b) {
  double c = std::abs(a.dir().dot(b.dir()));
  return rad2deg(std::acos(std::min(1.0, c)));
}

// Distance between the two infinite supporting lines. Near-parallel pairs
// (sin < 1e-6) fall back to midpoint-to-line distance.
inline double line_line_distance(const Segment3& a, const Segment3& b) {
  Vec3 u = a.dir(), v = b.dir();
  Vec3 n = u.cross(v);
  double s = n.norm();
  if (s < kParallelSin)
    return point_line_distance(b.midpoint(), Line3{a.p0, u});
  return std::abs((b.p0 - a.p0).dot(n)) / s;
}

inline double plane_angle_deg(const Plane& a, const Plane& b) {
  double c = std::abs(a.normal.dot(b.normal));
  return rad2deg(std::acos(std::min(1.0, c)));
}

// Intersection line of two planes. Throws IllConditionedIntersection when the
// dihedral angle is below min_angle_deg.
inline Line3 plane_intersection(const Plane& a, const Plane& b,
                                double min_angle_deg = kMinDihedralDeg) {
  Vec3 d = a.normal.cross(b.normal);
  double s = d.norm();
  if (s < std::sin(deg2rad(min_angle_deg)))
    throw IllConditionedIntersection("plane_intersection: dihedral angle below threshold");
  d /= s;
  // Point on both planes: minimum-norm solution of the 2x3 system.
  // q = ((o_a * n_b - o_b * n_a) x d) / |n_a x n_b| reshuffled via 3x3 solve
  // for robustness.
  Eigen::Matrix3d m;
  m.row(0) = a.normal.transpose();
  m.row(1) = b.normal.transpose();
  m.row(2) = d.transpose();
  Vec3 rhs(a.offset, b.offset, 0.0);
  Vec3 q = m.fullPivLu().solve(rhs);
  return Line3{q, d};
}

// Weighted total-least-squares plane: normal = eigenvector of the smallest
// eigenvalue of the weighted covariance, through the weighted centroid.
// Throws DegenerateFit for < 3 points or (near-)collinear input.
inline Plane fit_plane(const std::vector<std::pair<Vec3, double>>& weighted_points) {
  if (weighted_points.size() < 3)
    throw DegenerateFit("fit_plane: need at least 3 points");
  double wsum = 0;
  Vec3 centroid = Vec3::Zero();
  for (const auto& [p, w] : weighted_points) {
    wsum += w;
    centroid += w * p;
  }
  if (wsum <= 0) throw DegenerateFit("fit_plane: nonpositive total weight");
  centroid /= wsum;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& [p, w] : weighted_points) {
    Vec3 d = p - centroid;
    cov += w * d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const auto& ev = es.eigenvalues();  // ascending
  double scale = std::max(ev[2], kMinSegmentLen);
  if ((ev[1] - ev[0]) / scale <= 1e-10)
    throw DegenerateFit("fit_plane: points are (near-)collinear");
  Vec3 n = es.eigenvectors().col(0);
  return Plane::make(n, n.dot(centroid));
}

inline Vec3 project_point(const Vec3& p, const Plane& plane) {
  return p - signed_distance(p, plane) * plane.normal;
}

inline Vec3 project_point(const Vec3& p, const Line3& line) {
  return line.point + (p - line.point).dot(line.dir) * line.dir;
}

// Orthogonal projection of a segment onto a plane or onto the intersection
// line of two planes (noisy inliers are snapped onto their carrier).
inline Segment3 project_segment(const Segment3& seg, const Plane& plane) {
  return Segment3{project_point(seg.p0, plane), project_point(seg.p1, plane)};
}

inline Segment3 project_segment(const Segment3& seg, const Plane& a, const Plane& b) {
  Line3 line = plane_intersection(a, b);  // throws when ill-conditioned
  return Segment3{project_point(seg.p0, line), project_point(seg.p1, line)};
}

// Axis-aligned bounding box.
struct Box3 {
  Vec3 lo{0, 0, 0}, hi{0, 0, 0};

  static Box3 empty() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return Box3{Vec3(inf, inf, inf), Vec3(-inf, -inf, -inf)};
  }
  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Box3& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool overlaps(const Box3& b) const {
    return (lo.array() <= b.hi.array()).all() && (hi.array() >= b.lo.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  Box3 inflated(double fraction) const {
    Vec3 pad = fraction * extent();
    return Box3{lo - pad, hi + pad};
  }
  Box3 padded(double absolute) const {
    Vec3 pad = Vec3::Constant(absolute);
    return Box3{lo - pad, hi + pad};
  }
  double volume() const {
    Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }
};

}  // namespace linerecon
