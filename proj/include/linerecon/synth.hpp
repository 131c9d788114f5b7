#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "linerecon/arrangement.hpp"
#include "linerecon/energy.hpp"
#include "linerecon/linecloud.hpp"
#include "linerecon/surface.hpp"

namespace linerecon {

namespace synth_detail {

// Uniform per-coordinate noise on [-sigma*sqrt(3), +sigma*sqrt(3)], which has
// standard deviation sigma.
inline Vec3 uniform_noise(Rng& rng, double sigma) {
  const double a = sigma * std::sqrt(3.0);
  return Vec3(rng.uniform(-a, a), rng.uniform(-a, a), rng.uniform(-a, a));
}

inline Vec3 uniform_in_ball(Rng& rng, double radius) {
  for (;;) {
    Vec3 p(rng.uniform(-radius, radius), rng.uniform(-radius, radius),
           rng.uniform(-radius, radius));
    if (p.norm() <= radius) return p;
  }
}

}  // namespace synth_detail

// The 12 edges of the cube [-1,1]^3 in a fixed order (x-, y-, z-aligned).
inline std::vector<Segment3> cube_edges() {
  std::vector<Segment3> edges;
  const double signs[2] = {-1.0, 1.0};
  for (int axis = 0; axis < 3; ++axis)
    for (double u : signs)
      for (double v : signs) {
        Vec3 p0, p1;
        p0[axis] = -1;
        p1[axis] = 1;
        p0[(axis + 1) % 3] = p1[(axis + 1) % 3] = u;
        p0[(axis + 2) % 3] = p1[(axis + 2) % 3] = v;
        edges.push_back({p0, p1});
      }
  return edges;
}

inline std::vector<Plane> cube_face_planes() {
  return {Plane::make(Vec3(1, 0, 0), 1),  Plane::make(Vec3(1, 0, 0), -1),
          Plane::make(Vec3(0, 1, 0), 1),  Plane::make(Vec3(0, 1, 0), -1),
          Plane::make(Vec3(0, 0, 1), 1),  Plane::make(Vec3(0, 0, 1), -1)};
}

// Toy scene from the robustness experiment: the 12 cube edges with uniform
// endpoint noise, plus outlier segments drawn as point pairs in a 2-radius
// ball. 26 viewpoints sit on a radius-6 sphere; a segment is seen from every
// viewpoint on its hemisphere.
inline LineCloud synth_cube(double noise_std, int n_outliers, std::uint64_t seed) {
  if (noise_std < 0 || n_outliers < 0)
    throw ValidationError("synth_cube: noise_std and n_outliers must be >= 0");
  Rng rng(seed);
  LineCloud cloud;

  int vid = 0;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        Vec3 dir = unit(Vec3(dx, dy, dz));
        cloud.viewpoints.push_back({vid++, 6.0 * dir});
      }

  std::vector<Segment3> segments = cube_edges();
  for (auto& s : segments) {
    s.p0 += synth_detail::uniform_noise(rng, noise_std);
    s.p1 += synth_detail::uniform_noise(rng, noise_std);
  }
  for (int k = 0; k < n_outliers; ++k) {
    Segment3 s;
    do {
      s.p0 = synth_detail::uniform_in_ball(rng, 2.0);
      s.p1 = synth_detail::uniform_in_ball(rng, 2.0);
    } while (s.length() < 0.05);
    segments.push_back(s);
  }

  for (std::size_t i = 0; i < segments.size(); ++i) {
    ObservedSegment obs;
    obs.id = static_cast<int>(i);
    obs.geometry = segments[i];
    Vec3 mid = segments[i].midpoint();
    double mn = mid.norm();
    int best_vp = 0;
    double best_dot = -2;
    for (const auto& vp : cloud.viewpoints) {
      double d = mn > 1e-9 ? unit(vp.position).dot(mid / mn) : 0.0;
      if (d > best_dot) {
        best_dot = d;
        best_vp = vp.id;
      }
      if (d > 0.1) obs.views.push_back({vp.id, 0.0, 1.0});
    }
    if (obs.views.empty()) obs.views.push_back({best_vp, 0.0, 1.0});
    cloud.segments.push_back(std::move(obs));
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Room generator
// ---------------------------------------------------------------------------

struct RoomSpec {
  double width = 4.0, depth = 5.0, height = 2.5;  // room spans [0,w]x[0,d]x[0,h]
  struct FurnitureBox {
    Vec3 lo, hi;
  };
  std::vector<FurnitureBox> furniture;
  int num_viewpoints = 8;
  double noise_std = 0.0;
  int n_outliers = 0;
  int textural_per_face = 0;  // extra in-plane segments per room face
  std::uint64_t seed = 0;
};

struct RoomScene {
  LineCloud cloud;
  PolygonMesh ground_truth;       // closed interior shell (room walls + furniture)
  std::vector<Plane> true_planes;
  Box3 room;
};

namespace synth_detail {

inline void check_furniture(const RoomSpec& spec) {
  const double margin = 1e-3;
  Box3 room{Vec3(0, 0, 0), Vec3(spec.width, spec.depth, spec.height)};
  for (std::size_t i = 0; i < spec.furniture.size(); ++i) {
    const auto& b = spec.furniture[i];
    if ((b.hi - b.lo).minCoeff() <= margin)
      throw SpecError("synth_room: furniture box has no volume");
    if (b.lo.x() < margin || b.lo.y() < margin || b.lo.z() < 0 ||
        b.hi.x() > spec.width - margin || b.hi.y() > spec.depth - margin ||
        b.hi.z() > spec.height - margin)
      throw SpecError("synth_room: furniture must stay clear of walls and ceiling");
    if (b.lo.z() != 0 && b.lo.z() < margin)
      throw SpecError("synth_room: furniture must rest on the floor (lo.z == 0) or float above it");
    for (std::size_t j = i + 1; j < spec.furniture.size(); ++j) {
      const auto& c = spec.furniture[j];
      bool separated = false;
      for (int a = 0; a < 3; ++a)
        if (b.hi[a] < c.lo[a] - margin || c.hi[a] < b.lo[a] - margin) separated = true;
      if (!separated)
        throw SpecError("synth_room: furniture boxes touch or overlap (non-manifold placement)");
    }
  }
}

inline std::vector<Segment3> box_edges(const Vec3& lo, const Vec3& hi) {
  std::vector<Segment3> edges;
  for (int axis = 0; axis < 3; ++axis) {
    int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (double u : {0, 1})
      for (double v : {0, 1}) {
        Vec3 p0, p1;
        p0[axis] = lo[axis];
        p1[axis] = hi[axis];
        p0[a1] = p1[a1] = u ? hi[a1] : lo[a1];
        p0[a2] = p1[a2] = v ? hi[a2] : lo[a2];
        edges.push_back({p0, p1});
      }
  }
  return edges;
}

// Ray (origin -> target) vs axis-aligned box: does the open part of the ray
// strictly before the target pass through the box interior?
inline bool box_blocks(const Vec3& origin, const Vec3& target, const Box3& box) {
  Vec3 d = target - origin;
  double t_enter = 0.0, t_exit = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) return false;
      continue;
    }
    double t0 = (box.lo[a] - origin[a]) / d[a];
    double t1 = (box.hi[a] - origin[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    if (t_enter > t_exit) return false;
  }
  return t_enter < 1.0 - 1e-6 && t_exit > 1e-6 && t_exit - t_enter > 1e-9;
}

// Visible sub-intervals of a segment from a viewpoint, occluded by boxes.
// Sampled on a fine grid with bisection refinement; deterministic.
inline std::vector<std::pair<double, double>> visible_intervals(
    const Vec3& vp, const Segment3& seg, const std::vector<Box3>& occluders) {
  constexpr int kSamples = 512;
  auto blocked = [&](double t) {
    Vec3 p = seg.at(t);
    for (const auto& box : occluders)
      if (box_blocks(vp, p, box)) return true;
    return false;
  };
  std::vector<char> occ(kSamples + 1);
  bool any_visible = false, any_blocked = false;
  for (int i = 0; i <= kSamples; ++i) {
    occ[i] = blocked(static_cast<double>(i) / kSamples);
    any_visible |= !occ[i];
    any_blocked |= occ[i];
  }
  if (!any_visible) return {};
  if (!any_blocked) return {{0.0, 1.0}};

  auto refine = [&](double lo, double hi, bool lo_blocked) {
    for (int it = 0; it < 40; ++it) {
      double mid = 0.5 * (lo + hi);
      if (blocked(mid) == lo_blocked)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  };

  std::vector<std::pair<double, double>> out;
  double start = -1;
  for (int i = 0; i <= kSamples; ++i) {
    double t = static_cast<double>(i) / kSamples;
    if (!occ[i] && start < 0) {
      start = i == 0 ? 0.0 : refine((i - 1.0) / kSamples, t, true);
    } else if (occ[i] && start >= 0) {
      double end = refine((i - 1.0) / kSamples, t, false);
      if (end - start > 1e-6) out.push_back({start, end});
      start = -1;
    }
  }
  if (start >= 0 && 1.0 - start > 1e-6) out.push_back({start, 1.0});
  return out;
}

}  // namespace synth_detail

// Desk-scale interior: segments on every crease edge (room shell plus
// furniture), optional textural lines on the room faces, interior viewpoints
// with exact box-occlusion intervals, and a closed ground-truth mesh built
// from the true plane arrangement.
inline RoomScene synth_room(const RoomSpec& spec) {
  synth_detail::check_furniture(spec);
  Rng rng(spec.seed);
  RoomScene scene;
  scene.room = Box3{Vec3(0, 0, 0), Vec3(spec.width, spec.depth, spec.height)};

  // True planes: room shell + furniture (floor shared when a box rests on it).
  auto add_plane = [&](const Plane& p) {
    for (const auto& q : scene.true_planes)
      if (plane_angle_deg(p, q) < 1e-9 && std::abs(p.offset - q.offset) < 1e-12) return;
    scene.true_planes.push_back(p);
  };
  add_plane(Plane::make(Vec3(1, 0, 0), 0));
  add_plane(Plane::make(Vec3(1, 0, 0), spec.width));
  add_plane(Plane::make(Vec3(0, 1, 0), 0));
  add_plane(Plane::make(Vec3(0, 1, 0), spec.depth));
  add_plane(Plane::make(Vec3(0, 0, 1), 0));
  add_plane(Plane::make(Vec3(0, 0, 1), spec.height));
  for (const auto& b : spec.furniture) {
    add_plane(Plane::make(Vec3(1, 0, 0), b.lo.x()));
    add_plane(Plane::make(Vec3(1, 0, 0), b.hi.x()));
    add_plane(Plane::make(Vec3(0, 1, 0), b.lo.y()));
    add_plane(Plane::make(Vec3(0, 1, 0), b.hi.y()));
    if (b.lo.z() > 0) add_plane(Plane::make(Vec3(0, 0, 1), b.lo.z()));
    add_plane(Plane::make(Vec3(0, 0, 1), b.hi.z()));
  }

  // Crease segments.
  std::vector<Segment3> segments =
      synth_detail::box_edges(Vec3(0, 0, 0), Vec3(spec.width, spec.depth, spec.height));
  for (const auto& b : spec.furniture) {
    auto edges = synth_detail::box_edges(b.lo, b.hi);
    segments.insert(segments.end(), edges.begin(), edges.end());
  }

  // Textural lines inside room faces (inset 10% from the borders).
  if (spec.textural_per_face > 0) {
    struct FaceFrame {
      Vec3 origin, u, v;  // rectangle origin + spanning vectors
    };
    const double w = spec.width, d = spec.depth, h = spec.height;
    std::vector<FaceFrame> frames = {
        {Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, d, 0)},  // floor
        {Vec3(0, 0, h), Vec3(w, 0, 0), Vec3(0, d, 0)},  // ceiling
        {Vec3(0, 0, 0), Vec3(w, 0, 0), Vec3(0, 0, h)},  // y = 0 wall
        {Vec3(0, d, 0), Vec3(w, 0, 0), Vec3(0, 0, h)},  // y = d wall
        {Vec3(0, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h)},  // x = 0 wall
        {Vec3(w, 0, 0), Vec3(0, d, 0), Vec3(0, 0, h)},  // x = w wall
    };
    for (const auto& fr : frames)
      for (int k = 0; k < spec.textural_per_face; ++k) {
        Segment3 s;
        do {
          double a0 = rng.uniform(0.1, 0.9), b0 = rng.uniform(0.1, 0.9);
          double a1 = rng.uniform(0.1, 0.9), b1 = rng.uniform(0.1, 0.9);
          s.p0 = fr.origin + a0 * fr.u + b0 * fr.v;
          s.p1 = fr.origin + a1 * fr.u + b1 * fr.v;
        } while (s.length() < 0.3);
        segments.push_back(s);
      }
  }

  // Outliers floating in the free interior.
  std::vector<Box3> furniture_boxes;
  for (const auto& b : spec.furniture) furniture_boxes.push_back(Box3{b.lo, b.hi});
  auto free_point = [&]() {
    for (;;) {
      Vec3 p(rng.uniform(0.05, spec.width - 0.05), rng.uniform(0.05, spec.depth - 0.05),
             rng.uniform(0.05, spec.height - 0.05));
      bool inside = false;
      for (const auto& fb : furniture_boxes)
        if (fb.contains(p)) inside = true;
      if (!inside) return p;
    }
  };
  const int n_crease_textural = static_cast<int>(segments.size());
  for (int k = 0; k < spec.n_outliers; ++k) {
    Segment3 s;
    do {
      s.p0 = free_point();
      s.p1 = free_point();
    } while (s.length() < 0.1 || s.length() > 1.5);
    segments.push_back(s);
  }

  // Interior viewpoints at deterministic fractional positions, jittered and
  // kept out of the furniture.
  const double fr[2] = {0.3, 0.7};
  for (int i = 0; i < spec.num_viewpoints; ++i) {
    Vec3 pos;
    do {
      Vec3 base(fr[i & 1] * spec.width, fr[(i >> 1) & 1] * spec.depth,
                fr[(i >> 2) & 1] * spec.height);
      pos = base + Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
      bool inside = false;
      for (const auto& fb : furniture_boxes)
        if (fb.padded(0.05).contains(pos)) inside = true;
      if (!inside && scene.room.padded(-0.05).contains(pos)) break;
    } while (true);
    scene.cloud.viewpoints.push_back({i, pos});
  }

  // Visibility with exact box occlusion, computed on the clean geometry.
  for (std::size_t i = 0; i < segments.size(); ++i) {
    ObservedSegment obs;
    obs.id = static_cast<int>(i);
    obs.geometry = segments[i];
    for (const auto& vp : scene.cloud.viewpoints) {
      auto intervals = synth_detail::visible_intervals(vp.position, segments[i], furniture_boxes);
      for (auto [t0, t1] : intervals) obs.views.push_back({vp.id, t0, t1});
    }
    if (obs.views.empty()) continue;  // fully hidden; drop like a real pipeline would
    obs.geometry.p0 += synth_detail::uniform_noise(rng, spec.noise_std);
    obs.geometry.p1 += synth_detail::uniform_noise(rng, spec.noise_std);
    scene.cloud.segments.push_back(std::move(obs));
  }
  (void)n_crease_textural;

  // Ground truth: label the true arrangement (full = outside the room or
  // inside furniture) and extract the interior shell.
  CellComplex cx = build_complex(scene.true_planes, scene.room.inflated(0.05));
  Labeling gt(cx.cells.size(), 0.0);
  for (std::size_t c = 0; c < cx.cells.size(); ++c) {
    const Vec3& p = cx.cells[c].centroid;
    bool inside_room = scene.room.contains(p);
    bool inside_furniture = false;
    for (const auto& fb : furniture_boxes)
      if (fb.contains(p)) inside_furniture = true;
    gt[c] = (!inside_room || inside_furniture) ? 1.0 : 0.0;
  }
  ExtractOptions opts;
  opts.include_box_faces = false;
  scene.ground_truth = extract_surface(cx, gt, opts);
  return scene;
}

}  // namespace linerecon
