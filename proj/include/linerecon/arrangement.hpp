#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "linerecon/geometry.hpp"

namespace linerecon {

constexpr double kSnapTol = 1e-9;     // vertex snapping, meters
constexpr double kGrazingTol = 1e-9;  // viewpoint-on-plane rejection

// Bounded plane arrangement with full adjacency: convex cells tile the box,
// every interior face has exactly two incident cells, and every edge knows
// the cyclically ordered ring of faces and cells around it.
class CellComplex {
 public:
  struct Face {
    int plane = -1;     // arrangement plane index, or -1 when on the box
    int box_side = -1;  // 0..5 when on the box boundary
    std::vector<int> loop;  // vertex ids, CCW w.r.t. the carrier +normal
    std::array<int, 2> cells{-1, -1};
    Vec3 centroid{0, 0, 0};
    double area = 0;
    Box3 bbox;
    bool interior() const { return cells[1] >= 0; }
  };

  struct Edge {
    int v0 = -1, v1 = -1;
    std::vector<int> faces;  // sorted by angle around the edge axis
    std::vector<int> cells;  // ring in the same cyclic order (open arc on the box)
    bool interior = false;   // closed ring, all incident faces interior
    double length = 0;
  };

  struct Cell {
    std::vector<int> faces;
    Vec3 centroid{0, 0, 0};  // strictly interior point
    double volume = 0;
    std::vector<std::int8_t> side;  // per arrangement plane: +1 / -1
  };

  std::vector<Plane> planes;
  Box3 box;
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Edge> edges;
  std::vector<Cell> cells;

  const Plane& face_plane(int f) const {
    return faces[f].plane >= 0 ? planes[faces[f].plane] : box_planes_[faces[f].box_side];
  }

  // Carrier planes of an edge (the distinct arrangement planes among its
  // incident faces); size 2 in generic position.
  std::vector<int> edge_planes(int e) const {
    std::vector<int> out;
    for (int f : edges[e].faces)
      if (faces[f].plane >= 0) out.push_back(faces[f].plane);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  int locate(const Vec3& p) const;
  // Face ids whose bbox overlaps the query box.
  void bvh_query(const Box3& query, std::vector<int>& out) const;

  // Internals used by the builder.
  std::array<Plane, 6> box_planes_;
  std::map<std::vector<std::int8_t>, int> cell_index_;
  struct BvhNode {
    Box3 bbox;
    int left = -1, right = -1;
    std::vector<int> face_ids;  // leaf payload
  };
  std::vector<BvhNode> bvh_;
};

namespace arr_detail {

// Global vertex table with snapping at kSnapTol: near-coincident vertices
// collapse to one id, which keeps the subdivision conforming across cells.
class VertexTable {
 public:
  int add(const Vec3& p, std::vector<Vec3>& verts) {
    const double inv = 1.0 / kSnapTol;
    std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p.x() * inv)),
                                    static_cast<std::int64_t>(std::floor(p.y() * inv)),
                                    static_cast<std::int64_t>(std::floor(p.z() * inv))};
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid_.find({key[0] + dx, key[1] + dy, key[2] + dz});
          if (it == grid_.end()) continue;
          for (int v : it->second)
            if ((verts[v] - p).norm() <= kSnapTol) return v;
        }
    int id = static_cast<int>(verts.size());
    verts.push_back(p);
    grid_[key].push_back(id);
    return id;
  }

 private:
  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
      std::size_t h = 1469598103934665603ULL;
      for (auto v : k) {
        h ^= static_cast<std::size_t>(v);
        h *= 1099511628211ULL;
      }
      return h;
    }
  };
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<int>, KeyHash> grid_;
};

struct BuildFace {
  int plane = -1;
  int box_side = -1;
  std::vector<int> loop;
};

struct BuildCell {
  std::vector<BuildFace> faces;
};

inline void dedupe_loop(std::vector<int>& loop) {
  std::vector<int> out;
  for (int v : loop)
    if (out.empty() || out.back() != v) out.push_back(v);
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  loop = std::move(out);
}

// Angular sort of coplanar points around their centroid; valid for convex
// sections.
inline std::vector<int> sort_convex_loop(const std::vector<int>& ids,
                                         const std::vector<Vec3>& verts, const Vec3& normal) {
  Vec3 c = Vec3::Zero();
  for (int v : ids) c += verts[v];
  c /= static_cast<double>(ids.size());
  Vec3 ref = std::abs(normal.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  Vec3 e1 = unit(normal.cross(ref));
  Vec3 e2 = normal.cross(e1);
  std::vector<std::pair<double, int>> ang;
  ang.reserve(ids.size());
  for (int v : ids) {
    Vec3 d = verts[v] - c;
    ang.push_back({std::atan2(d.dot(e2), d.dot(e1)), v});
  }
  std::sort(ang.begin(), ang.end());
  std::vector<int> out;
  out.reserve(ids.size());
  for (auto& [a, v] : ang) out.push_back(v);
  return out;
}

inline Vec3 polygon_normal(const std::vector<int>& loop, const std::vector<Vec3>& verts) {
  Vec3 n = Vec3::Zero();  // Newell
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec3& a = verts[loop[i]];
    const Vec3& b = verts[loop[(i + 1) % loop.size()]];
    n += Vec3((a.y() - b.y()) * (a.z() + b.z()), (a.z() - b.z()) * (a.x() + b.x()),
              (a.x() - b.x()) * (a.y() + b.y()));
  }
  return 0.5 * n;  // magnitude = area
}

inline Vec3 polygon_centroid(const std::vector<int>& loop, const std::vector<Vec3>& verts) {
  Vec3 c = Vec3::Zero();
  for (int v : loop) c += verts[v];
  return c / static_cast<double>(loop.size());
}

}  // namespace arr_detail

struct ArrangementOptions {
  int max_planes = 160;
  double dedupe_angle_deg = 0.1;
};

// Incremental construction: start from the box cell; each plane splits every
// cell it properly intersects into two convex cells. Vertices are snapped in
// a single global table, so faces stay conforming between neighboring cells.
inline CellComplex build_complex(const std::vector<Plane>& planes, const Box3& box,
                                 const ArrangementOptions& opts = {}) {
  using namespace arr_detail;
  if (static_cast<int>(planes.size()) > opts.max_planes)
    throw TooManyPlanes("build_complex: " + std::to_string(planes.size()) + " planes exceed limit " +
                        std::to_string(opts.max_planes));
  {
    std::string dup;
    for (std::size_t a = 0; a < planes.size(); ++a)
      for (std::size_t b = a + 1; b < planes.size(); ++b) {
        if (plane_angle_deg(planes[a], planes[b]) > opts.dedupe_angle_deg) continue;
        double sign = planes[a].normal.dot(planes[b].normal) >= 0 ? 1.0 : -1.0;
        Vec3 c = box.center();
        double gap = std::abs(signed_distance(c, planes[a]) - sign * signed_distance(c, planes[b]));
        if (gap <= kSnapTol)
          dup += " (" + std::to_string(a) + "," + std::to_string(b) + ")";
      }
    if (!dup.empty()) throw NearDuplicatePlanes("build_complex: near-duplicate plane pairs:" + dup);
  }

  CellComplex cx;
  cx.planes = planes;
  cx.box = box;
  cx.box_planes_ = {Plane::make(Vec3(-1, 0, 0), -box.lo.x()), Plane::make(Vec3(1, 0, 0), box.hi.x()),
                    Plane::make(Vec3(0, -1, 0), -box.lo.y()), Plane::make(Vec3(0, 1, 0), box.hi.y()),
                    Plane::make(Vec3(0, 0, -1), -box.lo.z()), Plane::make(Vec3(0, 0, 1), box.hi.z())};

  VertexTable table;
  auto add_vertex = [&](const Vec3& p) { return table.add(p, cx.vertices); };

  // Box corner ids: bit i of the index selects hi (1) or lo (0) per axis.
  std::array<int, 8> corner;
  for (int i = 0; i < 8; ++i) {
    Vec3 p(i & 1 ? box.hi.x() : box.lo.x(), i & 2 ? box.hi.y() : box.lo.y(),
           i & 4 ? box.hi.z() : box.lo.z());
    corner[i] = add_vertex(p);
  }
  std::vector<BuildCell> build_cells(1);
  auto box_face = [&](int side, std::array<int, 4> c) {
    BuildFace f;
    f.box_side = side;
    f.loop = {corner[c[0]], corner[c[1]], corner[c[2]], corner[c[3]]};
    build_cells[0].faces.push_back(f);
  };
  box_face(0, {0, 4, 6, 2});  // x = lo
  box_face(1, {1, 3, 7, 5});  // x = hi
  box_face(2, {0, 1, 5, 4});  // y = lo
  box_face(3, {2, 6, 7, 3});  // y = hi
  box_face(4, {0, 2, 3, 1});  // z = lo
  box_face(5, {4, 5, 7, 6});  // z = hi

  for (std::size_t pi = 0; pi < planes.size(); ++pi) {
    const Plane& plane = planes[pi];
    std::vector<double> dist(cx.vertices.size());
    for (std::size_t v = 0; v < cx.vertices.size(); ++v)
      dist[v] = signed_distance(cx.vertices[v], plane);
    auto side_of = [&](int v) -> int {
      if (v >= static_cast<int>(dist.size())) return 0;  // cut vertex from this pass
      if (dist[v] > kSnapTol) return 1;
      if (dist[v] < -kSnapTol) return -1;
      return 0;
    };
    std::map<std::pair<int, int>, int> cut_cache;
    auto cut_vertex = [&](int u, int v) {
      auto key = std::minmax(u, v);
      auto it = cut_cache.find(key);
      if (it != cut_cache.end()) return it->second;
      double du = dist[key.first], dv = dist[key.second];
      double t = du / (du - dv);
      Vec3 p = cx.vertices[key.first] + t * (cx.vertices[key.second] - cx.vertices[key.first]);
      int id = add_vertex(p);
      cut_cache.emplace(key, id);
      return id;
    };

    std::vector<BuildCell> next;
    next.reserve(build_cells.size() + 8);
    for (auto& cell : build_cells) {
      bool has_pos = false, has_neg = false;
      for (const auto& f : cell.faces)
        for (int v : f.loop) {
          int s = side_of(v);
          has_pos |= s > 0;
          has_neg |= s < 0;
        }
      if (!has_pos || !has_neg) {
        next.push_back(std::move(cell));
        continue;
      }

      BuildCell neg, pos;
      std::vector<int> section;
      auto add_section = [&](int v) {
        if (std::find(section.begin(), section.end(), v) == section.end()) section.push_back(v);
      };
      for (const auto& f : cell.faces) {
        std::vector<int> lneg, lpos;
        const std::size_t n = f.loop.size();
        for (std::size_t k = 0; k < n; ++k) {
          int u = f.loop[k], v = f.loop[(k + 1) % n];
          int su = side_of(u), sv = side_of(v);
          if (su >= 0) lpos.push_back(u);
          if (su <= 0) lneg.push_back(u);
          if (su == 0) add_section(u);
          if (su * sv < 0) {
            int w = cut_vertex(u, v);
            lpos.push_back(w);
            lneg.push_back(w);
            add_section(w);
          }
        }
        dedupe_loop(lneg);
        dedupe_loop(lpos);
        if (lneg.size() >= 3) neg.faces.push_back({f.plane, f.box_side, std::move(lneg)});
        if (lpos.size() >= 3) pos.faces.push_back({f.plane, f.box_side, std::move(lpos)});
      }
      if (section.size() >= 3) {
        std::vector<int> loop = sort_convex_loop(section, cx.vertices, plane.normal);
        neg.faces.push_back({static_cast<int>(pi), -1, loop});
        pos.faces.push_back({static_cast<int>(pi), -1, loop});
      }
      next.push_back(std::move(neg));
      next.push_back(std::move(pos));
    }
    build_cells = std::move(next);
  }

  // Assemble shared faces: identical (carrier, vertex set) pairs across cells
  // collapse to one face with two incident cells.
  std::map<std::tuple<int, int, std::vector<int>>, int> face_index;
  cx.cells.resize(build_cells.size());
  for (std::size_t ci = 0; ci < build_cells.size(); ++ci) {
    for (auto& f : build_cells[ci].faces) {
      std::vector<int> key_ids = f.loop;
      std::sort(key_ids.begin(), key_ids.end());
      auto key = std::make_tuple(f.plane, f.box_side, std::move(key_ids));
      auto it = face_index.find(key);
      int fid;
      if (it == face_index.end()) {
        fid = static_cast<int>(cx.faces.size());
        face_index.emplace(std::move(key), fid);
        CellComplex::Face face;
        face.plane = f.plane;
        face.box_side = f.box_side;
        face.loop = f.loop;
        cx.faces.push_back(std::move(face));
      } else {
        fid = it->second;
      }
      auto& cells2 = cx.faces[fid].cells;
      if (cells2[0] < 0)
        cells2[0] = static_cast<int>(ci);
      else if (cells2[1] < 0 && cells2[0] != static_cast<int>(ci))
        cells2[1] = static_cast<int>(ci);
      cx.cells[ci].faces.push_back(fid);
    }
  }

  // Face geometry + canonical CCW orientation w.r.t. the carrier +normal.
  for (auto& f : cx.faces) {
    const Plane& carrier = f.plane >= 0 ? cx.planes[f.plane] : cx.box_planes_[f.box_side];
    Vec3 n = arr_detail::polygon_normal(f.loop, cx.vertices);
    if (n.dot(carrier.normal) < 0) std::reverse(f.loop.begin(), f.loop.end());
    n = arr_detail::polygon_normal(f.loop, cx.vertices);
    f.area = n.norm();
    f.centroid = arr_detail::polygon_centroid(f.loop, cx.vertices);
    f.bbox = Box3::empty();
    for (int v : f.loop) f.bbox.expand(cx.vertices[v]);
    f.bbox = f.bbox.padded(1e-9);
  }

  // Cell geometry, plane sides, and the side-vector index used by locate().
  for (std::size_t ci = 0; ci < cx.cells.size(); ++ci) {
    auto& cell = cx.cells[ci];
    std::vector<int> vset;
    for (int fid : cell.faces)
      for (int v : cx.faces[fid].loop) vset.push_back(v);
    std::sort(vset.begin(), vset.end());
    vset.erase(std::unique(vset.begin(), vset.end()), vset.end());
    Vec3 c = Vec3::Zero();
    for (int v : vset) c += cx.vertices[v];
    cell.centroid = c / static_cast<double>(vset.size());

    double vol = 0;
    for (int fid : cell.faces) {
      const auto& f = cx.faces[fid];
      Vec3 n = arr_detail::polygon_normal(f.loop, cx.vertices);
      if (n.dot(f.centroid - cell.centroid) < 0) n = -n;
      vol += f.centroid.dot(n) / 3.0;
    }
    cell.volume = vol;

    cell.side.resize(cx.planes.size());
    for (std::size_t p = 0; p < cx.planes.size(); ++p) {
      double d = signed_distance(cell.centroid, cx.planes[p]);
      cell.side[p] = d > 0 ? 1 : -1;
    }
    cx.cell_index_[cell.side] = static_cast<int>(ci);
  }

  // Edges: face boundary segments, with faces and cells ordered angularly
  // around the edge axis.
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (std::size_t fid = 0; fid < cx.faces.size(); ++fid) {
    const auto& loop = cx.faces[fid].loop;
    for (std::size_t k = 0; k < loop.size(); ++k) {
      auto key = std::minmax(loop[k], loop[(k + 1) % loop.size()]);
      edge_faces[key].push_back(static_cast<int>(fid));
    }
  }
  for (auto& [key, incident] : edge_faces) {
    CellComplex::Edge e;
    e.v0 = key.first;
    e.v1 = key.second;
    Vec3 a = cx.vertices[e.v0], b = cx.vertices[e.v1];
    e.length = (b - a).norm();
    Vec3 axis = unit(b - a);
    Vec3 mid = 0.5 * (a + b);
    Vec3 ref = std::abs(axis.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    Vec3 e1 = unit(axis.cross(ref));
    Vec3 e2 = axis.cross(e1);
    std::vector<std::pair<double, int>> ang;
    for (int f : incident) {
      Vec3 d = cx.faces[f].centroid - mid;
      d -= d.dot(axis) * axis;
      ang.push_back({std::atan2(d.dot(e2), d.dot(e1)), f});
    }
    std::sort(ang.begin(), ang.end());
    e.faces.clear();
    for (auto& [angle, f] : ang) e.faces.push_back(f);

    bool closed = true;
    const std::size_t m = e.faces.size();
    for (std::size_t k = 0; k < m; ++k) {
      int f = e.faces[k], g = e.faces[(k + 1) % m];
      const auto& cf = cx.faces[f].cells;
      const auto& cg = cx.faces[g].cells;
      int shared = -1;
      for (int c1 : cf)
        for (int c2 : cg)
          if (c1 >= 0 && c1 == c2) shared = c1;
      if (shared >= 0)
        e.cells.push_back(shared);
      else
        closed = false;
    }
    bool all_interior = true;
    for (int f : e.faces)
      if (!cx.faces[f].interior() || cx.faces[f].plane < 0) all_interior = false;
    e.interior = closed && all_interior && m >= 3;
    cx.edges.push_back(std::move(e));
  }

  // BVH over face bounding boxes for sight-crossing queries.
  struct Builder {
    CellComplex& cx;
    int build(std::vector<int> ids) {
      CellComplex::BvhNode node;
      node.bbox = Box3::empty();
      for (int f : ids) node.bbox.expand(cx.faces[f].bbox);
      if (ids.size() <= 8) {
        node.face_ids = std::move(ids);
        cx.bvh_.push_back(std::move(node));
        return static_cast<int>(cx.bvh_.size()) - 1;
      }
      Vec3 ext = node.bbox.extent();
      int axis = ext.x() >= ext.y() && ext.x() >= ext.z() ? 0 : (ext.y() >= ext.z() ? 1 : 2);
      std::sort(ids.begin(), ids.end(), [&](int l, int r) {
        return cx.faces[l].centroid[axis] < cx.faces[r].centroid[axis];
      });
      std::vector<int> left(ids.begin(), ids.begin() + ids.size() / 2);
      std::vector<int> right(ids.begin() + ids.size() / 2, ids.end());
      int li = build(std::move(left));
      int ri = build(std::move(right));
      node.left = li;
      node.right = ri;
      cx.bvh_.push_back(std::move(node));
      return static_cast<int>(cx.bvh_.size()) - 1;
    }
  };
  if (!cx.faces.empty()) {
    std::vector<int> all(cx.faces.size());
    std::iota(all.begin(), all.end(), 0);
    Builder{cx}.build(std::move(all));
  }
  return cx;
}

inline int CellComplex::locate(const Vec3& p) const {
  if (!box.contains(p)) throw OutsideBox("locate: point outside bounding box");
  std::vector<std::int8_t> key(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i) {
    double d = signed_distance(p, planes[i]);
    if (std::abs(d) <= kGrazingTol)
      throw OnBoundary("locate: point on arrangement plane " + std::to_string(i));
    key[i] = d > 0 ? 1 : -1;
  }
  auto it = cell_index_.find(key);
  if (it == cell_index_.end()) throw OutsideBox("locate: no cell matches side vector");
  return it->second;
}

inline void CellComplex::bvh_query(const Box3& query, std::vector<int>& out) const {
  if (bvh_.empty()) return;
  std::vector<int> stack{static_cast<int>(bvh_.size()) - 1};
  while (!stack.empty()) {
    int ni = stack.back();
    stack.pop_back();
    const BvhNode& node = bvh_[ni];
    if (!node.bbox.overlaps(query)) continue;
    if (node.left < 0) {
      for (int f : node.face_ids)
        if (faces[f].bbox.overlaps(query)) out.push_back(f);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  std::sort(out.begin(), out.end());
}

// A maximal sub-segment lying in a single carrier of the complex.
struct Fragment {
  enum class Kind { Cell, Face, Edge };
  double t0 = 0, t1 = 1;
  Kind kind = Kind::Cell;
  int id = -1;  // cell, face, or edge id

  double mid() const { return 0.5 * (t0 + t1); }
};

// Fragments of a segment, ordered by parameter, classified by carrier: Face
// when the segment lies on exactly one arrangement plane, Edge on two (or
// more), Cell otherwise.
inline std::vector<Fragment> split_segment(const CellComplex& cx, const Segment3& seg) {
  const Box3 roomy{cx.box.lo - Vec3::Constant(kSnapTol), cx.box.hi + Vec3::Constant(kSnapTol)};
  if (!roomy.contains(seg.p0) || !roomy.contains(seg.p1))
    throw OutsideBox("split_segment: segment endpoint outside bounding box");

  std::vector<int> carriers;  // planes containing the whole segment
  std::vector<double> cuts{0.0, 1.0};
  for (std::size_t p = 0; p < cx.planes.size(); ++p) {
    double d0 = signed_distance(seg.p0, cx.planes[p]);
    double d1 = signed_distance(seg.p1, cx.planes[p]);
    if (std::abs(d0) <= kSnapTol && std::abs(d1) <= kSnapTol) {
      carriers.push_back(static_cast<int>(p));
    } else if ((d0 > kSnapTol && d1 < -kSnapTol) || (d0 < -kSnapTol && d1 > kSnapTol)) {
      cuts.push_back(d0 / (d0 - d1));
    }
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             cuts.end());

  std::vector<Fragment> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    Fragment frag;
    frag.t0 = cuts[k];
    frag.t1 = cuts[k + 1];
    if (frag.t1 - frag.t0 < 1e-12) continue;
    Vec3 m = seg.at(frag.mid());
    if (carriers.empty()) {
      frag.kind = Fragment::Kind::Cell;
      frag.id = -1;
      for (double lerp : {0.5, 0.25, 0.75}) {
        try {
          frag.id = cx.locate(seg.at(frag.t0 + lerp * (frag.t1 - frag.t0)));
          break;
        } catch (const OnBoundary&) {
        }
      }
      if (frag.id < 0) continue;  // sliver hugging a plane
    } else if (carriers.size() == 1) {
      frag.kind = Fragment::Kind::Face;
      frag.id = -1;
      for (std::size_t f = 0; f < cx.faces.size(); ++f) {
        if (cx.faces[f].plane != carriers[0]) continue;
        if (!cx.faces[f].bbox.padded(1e-7).contains(m)) continue;
        // Inside test against the CCW loop.
        const auto& loop = cx.faces[f].loop;
        const Vec3& n = cx.planes[carriers[0]].normal;
        bool inside = true;
        for (std::size_t i = 0; i < loop.size() && inside; ++i) {
          Vec3 a = cx.vertices[loop[i]], b = cx.vertices[loop[(i + 1) % loop.size()]];
          if (n.cross(b - a).dot(m - a) < -1e-9) inside = false;
        }
        if (inside) {
          frag.id = static_cast<int>(f);
          break;
        }
      }
      if (frag.id < 0) continue;  // sliver between snapped faces
    } else {
      frag.kind = Fragment::Kind::Edge;
      frag.id = -1;
      for (std::size_t e = 0; e < cx.edges.size(); ++e) {
        const Vec3& a = cx.vertices[cx.edges[e].v0];
        const Vec3& b = cx.vertices[cx.edges[e].v1];
        Vec3 ab = b - a;
        double len2 = ab.squaredNorm();
        double t = (m - a).dot(ab) / len2;
        if (t < -1e-9 || t > 1 + 1e-9) continue;
        if ((m - (a + t * ab)).norm() <= 1e-7) {
          frag.id = static_cast<int>(e);
          break;
        }
      }
      if (frag.id < 0) continue;
    }
    out.push_back(frag);
  }
  return out;
}

// Cells immediately behind a fragment w.r.t. a viewpoint: the single opposite
// cell for a face carrier, or the full edge ring minus the wedge cell facing
// the viewpoint for an edge carrier.
inline std::vector<int> behind_cells(const CellComplex& cx, const Segment3& seg,
                                     const Fragment& frag, const Vec3& viewpoint) {
  if (frag.kind == Fragment::Kind::Face) {
    const auto& face = cx.faces[frag.id];
    const Plane& pl = cx.planes[face.plane];
    double dv = signed_distance(viewpoint, pl);
    if (std::abs(dv) <= kGrazingTol)
      throw GrazingViewpoint("behind_cells: viewpoint on the carrier plane");
    int want = dv > 0 ? -1 : 1;
    for (int c : face.cells)
      if (c >= 0 && cx.cells[c].side[face.plane] == want) return {c};
    throw OnBoundary("behind_cells: face has no cell on the far side");
  }
  if (frag.kind != Fragment::Kind::Edge)
    throw std::invalid_argument("behind_cells: fragment carrier must be Face or Edge");

  const auto& edge = cx.edges[frag.id];
  for (int p : cx.edge_planes(frag.id))
    if (std::abs(signed_distance(viewpoint, cx.planes[p])) <= kGrazingTol)
      throw GrazingViewpoint("behind_cells: viewpoint on a carrier plane of the edge");
  if (!edge.interior || edge.cells.size() != edge.faces.size())
    throw OnBoundary("behind_cells: edge ring is not closed");

  Vec3 a = cx.vertices[edge.v0], b = cx.vertices[edge.v1];
  Vec3 axis = unit(b - a);
  Vec3 mid = seg.at(frag.mid());
  Vec3 ref = std::abs(axis.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  Vec3 e1 = unit(axis.cross(ref));
  Vec3 e2 = axis.cross(e1);
  auto angle_of = [&](const Vec3& p) {
    Vec3 d = p - mid;
    d -= d.dot(axis) * axis;
    return std::atan2(d.dot(e2), d.dot(e1));
  };
  double av = angle_of(viewpoint);
  // Face k sits between ring cells k-1 and k; the wedge containing the
  // viewpoint direction is bounded by the consecutive pair of face angles
  // enclosing av.
  const std::size_t m = edge.faces.size();
  std::vector<double> fang(m);
  for (std::size_t k = 0; k < m; ++k) fang[k] = angle_of(cx.faces[edge.faces[k]].centroid);
  int front = -1;
  for (std::size_t k = 0; k < m; ++k) {
    double lo = fang[k];
    double hi = fang[(k + 1) % m];
    double x = av;
    if (hi < lo) hi += 2 * M_PI;
    if (x < lo) x += 2 * M_PI;
    if (x >= lo && x <= hi) {
      front = edge.cells[k];
      break;
    }
  }
  if (front < 0) front = edge.cells[0];
  std::vector<int> out;
  for (int c : edge.cells)
    if (c != front) out.push_back(c);
  return out;
}

// Faces crossed by the visibility triangle (viewpoint, visible part of seg),
// with the covered length (meters of segment parameter) per face. Carrier
// faces of the segment and faces through the viewpoint are excluded.
inline std::vector<std::pair<int, double>> sight_crossings(
    const CellComplex& cx, const Vec3& viewpoint, const Segment3& seg,
    const std::vector<std::pair<double, double>>& visible_intervals) {
  std::map<int, double> acc;
  const double seg_len = seg.length();

  for (auto [ia, ib] : visible_intervals) {
    double a = std::max(0.0, ia), b = std::min(1.0, ib);
    if (b - a <= 1e-9) continue;
    Vec3 A = seg.at(a), B = seg.at(b);
    Vec3 nT = (A - viewpoint).cross(B - viewpoint);
    double nTlen = nT.norm();
    if (nTlen < 1e-14)
      throw GrazingViewpoint("sight_crossings: viewpoint collinear with the segment");
    nT /= nTlen;

    // Inward triangle edge constraints, expressed as 3D half-spaces that
    // contain the triangle plane's normal direction.
    Vec3 tc = (viewpoint + A + B) / 3.0;
    std::array<std::pair<Vec3, double>, 3> tri;
    auto edge_constraint = [&](const Vec3& p, const Vec3& q, int idx) {
      Vec3 n = nT.cross(q - p);
      if (n.dot(tc - p) < 0) n = -n;
      tri[idx] = {n, n.dot(p)};
    };
    edge_constraint(viewpoint, A, 0);
    edge_constraint(A, B, 1);
    edge_constraint(B, viewpoint, 2);

    Box3 tb = Box3::empty();
    tb.expand(viewpoint);
    tb.expand(A);
    tb.expand(B);
    std::vector<int> candidates;
    cx.bvh_query(tb, candidates);

    for (int f : candidates) {
      const auto& face = cx.faces[f];
      const Plane& pf = cx.face_plane(f);
      if (std::abs(signed_distance(viewpoint, pf)) <= kGrazingTol) continue;
      if (std::abs(signed_distance(A, pf)) <= 10 * kSnapTol &&
          std::abs(signed_distance(B, pf)) <= 10 * kSnapTol)
        continue;  // carrier plane of the segment
      Vec3 dL = pf.normal.cross(nT);
      double dLn = dL.norm();
      if (dLn < 1e-12) continue;  // parallel planes, no transversal crossing
      dL /= dLn;
      // A point on both planes.
      Eigen::Matrix3d m3;
      m3.row(0) = pf.normal.transpose();
      m3.row(1) = nT.transpose();
      m3.row(2) = dL.transpose();
      Vec3 q0 = m3.fullPivLu().solve(Vec3(pf.offset, nT.dot(viewpoint), 0.0));

      double s_lo = -std::numeric_limits<double>::infinity();
      double s_hi = std::numeric_limits<double>::infinity();
      auto clip = [&](const Vec3& n, double c) {
        double num = c - n.dot(q0);
        double den = n.dot(dL);
        if (std::abs(den) < 1e-14) {
          if (num > 0) s_lo = 1, s_hi = 0;  // fully outside
          return;
        }
        double s = num / den;
        if (den > 0)
          s_lo = std::max(s_lo, s);
        else
          s_hi = std::min(s_hi, s);
      };
      for (const auto& [n, c] : tri) clip(n, c);
      const auto& loop = face.loop;
      for (std::size_t k = 0; k < loop.size() && s_lo < s_hi; ++k) {
        Vec3 va = cx.vertices[loop[k]], vb = cx.vertices[loop[(k + 1) % loop.size()]];
        Vec3 n = pf.normal.cross(vb - va);  // inward for CCW loops
        clip(n, n.dot(va));
      }
      if (s_lo >= s_hi - 1e-12) continue;

      auto param_of = [&](double s) {
        Vec3 q = q0 + s * dL;
        Vec3 w = q - viewpoint;
        double num = (seg.p0 - viewpoint).cross(w).dot(nT);
        double den = (seg.p1 - seg.p0).cross(w).dot(nT);
        return -num / den;
      };
      double t0 = param_of(s_lo), t1 = param_of(s_hi);
      if (t0 > t1) std::swap(t0, t1);
      t0 = std::max(t0, a);
      t1 = std::min(t1, b);
      if (t1 - t0 > 1e-12) acc[f] += (t1 - t0) * seg_len;
    }
  }
  return {acc.begin(), acc.end()};
}

}  // namespace linerecon
