#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "linerecon/arrangement.hpp"
#include "linerecon/energy.hpp"

namespace linerecon {

// Oriented boundary surface between full and empty cells. Face normals point
// from the full cell into the empty one.
struct PolygonMesh {
  struct Face {
    std::vector<int> loop;   // vertex indices, CCW around the outgoing normal
    int carrier_plane = -1;  // arrangement plane, -1 for box-contact faces
    int cell_full = -1, cell_empty = -1;
  };
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }

  double area() const {
    double a = 0;
    for (const auto& f : faces) a += face_area(f);
    return a;
  }
  double face_area(const Face& f) const {
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 0; i < f.loop.size(); ++i) {
      const Vec3& p = vertices[f.loop[i]];
      const Vec3& q = vertices[f.loop[(i + 1) % f.loop.size()]];
      n += p.cross(q);
    }
    return 0.5 * n.norm();
  }
  Vec3 face_normal(const Face& f) const {
    Vec3 n = Vec3::Zero();
    for (std::size_t i = 0; i < f.loop.size(); ++i) {
      const Vec3& p = vertices[f.loop[i]];
      const Vec3& q = vertices[f.loop[(i + 1) % f.loop.size()]];
      n += p.cross(q);
    }
    return unit(n);
  }
};

struct ExtractOptions {
  bool include_box_faces = true;  // faces where a full cell meets the bounding box
};

// One mesh face per arrangement face whose incident cells differ in
// occupancy, oriented full -> empty. Vertices are welded through the
// complex's snapped vertex table.
inline PolygonMesh extract_surface(const CellComplex& cx, const Labeling& x,
                                   const ExtractOptions& opts = {}) {
  if (static_cast<int>(x.size()) != static_cast<int>(cx.cells.size()))
    throw ValidationError("extract_surface: labeling size mismatch");
  for (double v : x)
    if (v != 0.0 && v != 1.0) throw ValidationError("extract_surface: labeling is not binary");

  PolygonMesh mesh;
  std::vector<int> vmap(cx.vertices.size(), -1);
  auto emit_vertex = [&](int v) {
    if (vmap[v] < 0) {
      vmap[v] = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(cx.vertices[v]);
    }
    return vmap[v];
  };

  for (std::size_t fid = 0; fid < cx.faces.size(); ++fid) {
    const auto& face = cx.faces[fid];
    int c0 = face.cells[0], c1 = face.cells[1];
    bool full0 = c0 >= 0 && x[c0] == 1.0;
    bool full1 = c1 >= 0 && x[c1] == 1.0;  // box side counts as empty
    if (full0 == full1) continue;
    if (c1 < 0 && !opts.include_box_faces) continue;

    PolygonMesh::Face out;
    out.carrier_plane = face.plane;
    out.cell_full = full0 ? c0 : c1;
    out.cell_empty = full0 ? c1 : c0;
    out.loop.reserve(face.loop.size());
    for (int v : face.loop) out.loop.push_back(emit_vertex(v));
    // Loop is CCW w.r.t. the carrier +normal; flip when that normal points
    // into the full cell.
    bool flip;
    if (face.plane >= 0) {
      flip = cx.cells[out.cell_full].side[face.plane] > 0;
    } else {
      flip = false;  // box planes are outward, full cell is inside
    }
    if (flip) std::reverse(out.loop.begin(), out.loop.end());
    mesh.faces.push_back(std::move(out));
  }
  return mesh;
}

// Fan triangulation of convex faces; orientation preserved.
inline PolygonMesh triangulate(const PolygonMesh& mesh) {
  PolygonMesh out;
  out.vertices = mesh.vertices;
  for (const auto& f : mesh.faces) {
    if (f.loop.size() < 3) continue;
    // Convexity check against the face normal.
    Vec3 n = mesh.face_normal(f);
    const std::size_t m = f.loop.size();
    for (std::size_t i = 0; i < m; ++i) {
      Vec3 a = mesh.vertices[f.loop[i]];
      Vec3 b = mesh.vertices[f.loop[(i + 1) % m]];
      Vec3 c = mesh.vertices[f.loop[(i + 2) % m]];
      if ((b - a).cross(c - b).dot(n) < -1e-9 * (b - a).norm() * (c - b).norm())
        throw NonConvexFace("triangulate: reflex corner in face");
    }
    for (std::size_t i = 1; i + 1 < m; ++i) {
      PolygonMesh::Face tri;
      tri.loop = {f.loop[0], f.loop[i], f.loop[i + 1]};
      tri.carrier_plane = f.carrier_plane;
      tri.cell_full = f.cell_full;
      tri.cell_empty = f.cell_empty;
      out.faces.push_back(std::move(tri));
    }
  }
  return out;
}

struct MeshReport {
  int boundary_edges = 0;
  int non_manifold_edges = 0;
  int connected_components = 0;
  double total_area = 0;
  int self_intersections = 0;
  bool watertight() const { return boundary_edges == 0; }
  bool clean() const {
    return boundary_edges == 0 && non_manifold_edges == 0 && self_intersections == 0;
  }
};

namespace mesh_detail {

// Proper (interior) segment-triangle crossing, tolerance 1e-9.
inline bool segment_crosses_triangle(const Vec3& p, const Vec3& q, const Vec3& a, const Vec3& b,
                                     const Vec3& c) {
  Vec3 n = (b - a).cross(c - a);
  double nn = n.norm();
  if (nn < 1e-18) return false;
  n /= nn;
  double dp = n.dot(p - a), dq = n.dot(q - a);
  if (dp * dq >= -1e-18) return false;  // no strict straddle
  if (std::min(std::abs(dp), std::abs(dq)) < 1e-9) return false;
  double t = dp / (dp - dq);
  Vec3 x = p + t * (q - p);
  // Strictly inside the triangle (distance to each edge above tolerance).
  std::array<std::pair<Vec3, Vec3>, 3> edges{{{a, b}, {b, c}, {c, a}}};
  for (auto& [u, v] : edges) {
    Vec3 en = n.cross(v - u);
    double side = en.dot(x - u) / en.norm();
    if (side < 1e-9) return false;
  }
  return true;
}

inline bool triangles_intersect(const PolygonMesh& m, const PolygonMesh::Face& f,
                                const PolygonMesh::Face& g) {
  auto edge_test = [&](const PolygonMesh::Face& s, const PolygonMesh::Face& t) {
    for (int i = 0; i < 3; ++i) {
      const Vec3& p = m.vertices[s.loop[i]];
      const Vec3& q = m.vertices[s.loop[(i + 1) % 3]];
      if (segment_crosses_triangle(p, q, m.vertices[t.loop[0]], m.vertices[t.loop[1]],
                                   m.vertices[t.loop[2]]))
        return true;
    }
    return false;
  };
  return edge_test(f, g) || edge_test(g, f);
}

}  // namespace mesh_detail

// Structural certification: boundary edges (watertightness), non-manifold
// edges, connected components, area, and exact-ish triangle-triangle
// intersection count among non-adjacent triangles.
inline MeshReport validate(const PolygonMesh& mesh) {
  MeshReport rep;
  rep.total_area = mesh.area();

  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& f : mesh.faces)
    for (std::size_t i = 0; i < f.loop.size(); ++i) {
      auto key = std::minmax(f.loop[i], f.loop[(i + 1) % f.loop.size()]);
      edge_count[key]++;
    }
  for (auto& [e, c] : edge_count) {
    if (c == 1) rep.boundary_edges++;
    if (c > 2) rep.non_manifold_edges++;
  }

  // Components over faces sharing an edge.
  std::vector<int> parent(mesh.faces.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  std::map<std::pair<int, int>, int> first_face;
  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    for (std::size_t i = 0; i < f.loop.size(); ++i) {
      auto key = std::minmax(f.loop[i], f.loop[(i + 1) % f.loop.size()]);
      auto it = first_face.find(key);
      if (it == first_face.end())
        first_face[key] = static_cast<int>(fi);
      else
        parent[find(static_cast<int>(fi))] = find(it->second);
    }
  }
  std::set<int> roots;
  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) roots.insert(find(static_cast<int>(fi)));
  rep.connected_components = static_cast<int>(roots.size());

  // Self-intersections on the triangulated mesh with a bbox prefilter.
  PolygonMesh tris = triangulate(mesh);
  std::vector<Box3> boxes(tris.faces.size());
  for (std::size_t i = 0; i < tris.faces.size(); ++i) {
    boxes[i] = Box3::empty();
    for (int v : tris.faces[i].loop) boxes[i].expand(tris.vertices[v]);
    boxes[i].lo -= Vec3::Constant(1e-9);
    boxes[i].hi += Vec3::Constant(1e-9);
  }
  for (std::size_t i = 0; i < tris.faces.size(); ++i) {
    for (std::size_t j = i + 1; j < tris.faces.size(); ++j) {
      if (!boxes[i].overlaps(boxes[j])) continue;
      bool adjacent = false;
      for (int u : tris.faces[i].loop)
        for (int v : tris.faces[j].loop)
          if (u == v) adjacent = true;
      if (adjacent) continue;
      if (mesh_detail::triangles_intersect(tris, tris.faces[i], tris.faces[j]))
        rep.self_intersections++;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// OFF / OBJ export and import (format by file extension)
// ---------------------------------------------------------------------------

namespace mesh_detail {

inline std::string lower_ext(const std::string& path) {
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline std::string g9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

}  // namespace mesh_detail

inline void export_mesh(const PolygonMesh& mesh, const std::string& path) {
  const std::string ext = mesh_detail::lower_ext(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  if (ext == "off") {
    f << "OFF\n" << mesh.vertices.size() << " " << mesh.faces.size() << " 0\n";
    for (const auto& v : mesh.vertices)
      f << mesh_detail::g9(v.x()) << " " << mesh_detail::g9(v.y()) << " "
        << mesh_detail::g9(v.z()) << "\n";
    for (const auto& face : mesh.faces) {
      f << face.loop.size();
      for (int v : face.loop) f << " " << v;
      f << "\n";
    }
  } else if (ext == "obj") {
    for (const auto& v : mesh.vertices)
      f << "v " << mesh_detail::g9(v.x()) << " " << mesh_detail::g9(v.y()) << " "
        << mesh_detail::g9(v.z()) << "\n";
    for (const auto& face : mesh.faces) {
      f << "f";
      for (int v : face.loop) f << " " << v + 1;
      f << "\n";
    }
  } else {
    throw IoError("export_mesh: unsupported extension ." + ext + " (use .off or .obj)");
  }
  if (!f) throw IoError("write failed: " + path);
}

inline PolygonMesh import_mesh(const std::string& path) {
  const std::string ext = mesh_detail::lower_ext(path);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  PolygonMesh mesh;
  if (ext == "off") {
    std::string header;
    f >> header;
    if (header != "OFF") throw ParseError("import_mesh: missing OFF header");
    std::size_t nv = 0, nf = 0, ne = 0;
    f >> nv >> nf >> ne;
    for (std::size_t i = 0; i < nv; ++i) {
      double x, y, z;
      f >> x >> y >> z;
      mesh.vertices.push_back(Vec3(x, y, z));
    }
    for (std::size_t i = 0; i < nf; ++i) {
      std::size_t k;
      f >> k;
      PolygonMesh::Face face;
      for (std::size_t j = 0; j < k; ++j) {
        int v;
        f >> v;
        face.loop.push_back(v);
      }
      mesh.faces.push_back(std::move(face));
    }
    if (!f) throw ParseError("import_mesh: truncated OFF file");
  } else if (ext == "obj") {
    std::string line;
    while (std::getline(f, line)) {
      std::istringstream ss(line);
      std::string tok;
      ss >> tok;
      if (tok == "v") {
        double x, y, z;
        ss >> x >> y >> z;
        mesh.vertices.push_back(Vec3(x, y, z));
      } else if (tok == "f") {
        PolygonMesh::Face face;
        std::string item;
        while (ss >> item) {
          // Accept v, v/vt, v//vn forms.
          face.loop.push_back(std::stoi(item) - 1);
        }
        if (face.loop.size() >= 3) mesh.faces.push_back(std::move(face));
      }
    }
  } else {
    throw IoError("import_mesh: unsupported extension ." + ext);
  }
  for (const auto& face : mesh.faces)
    for (int v : face.loop)
      if (v < 0 || v >= static_cast<int>(mesh.vertices.size()))
        throw ParseError("import_mesh: face references missing vertex");
  return mesh;
}

// Axis-aligned closed box mesh, outward-oriented; ground truth for synthetic
// scenes.
inline PolygonMesh make_box_mesh(const Vec3& lo, const Vec3& hi) {
  PolygonMesh m;
  auto add = [&](double x, double y, double z) {
    m.vertices.push_back(Vec3(x, y, z));
  };
  add(lo.x(), lo.y(), lo.z());  // 0
  add(hi.x(), lo.y(), lo.z());  // 1
  add(hi.x(), hi.y(), lo.z());  // 2
  add(lo.x(), hi.y(), lo.z());  // 3
  add(lo.x(), lo.y(), hi.z());  // 4
  add(hi.x(), lo.y(), hi.z());  // 5
  add(hi.x(), hi.y(), hi.z());  // 6
  add(lo.x(), hi.y(), hi.z());  // 7
  auto quad = [&](int a, int b, int c, int d) {
    PolygonMesh::Face f;
    f.loop = {a, b, c, d};
    m.faces.push_back(std::move(f));
  };
  quad(0, 3, 2, 1);  // z = lo, normal -z
  quad(4, 5, 6, 7);  // z = hi, normal +z
  quad(0, 1, 5, 4);  // y = lo, normal -y
  quad(2, 3, 7, 6);  // y = hi, normal +y
  quad(0, 4, 7, 3);  // x = lo, normal -x
  quad(1, 2, 6, 5);  // x = hi, normal +x
  return m;
}

}  // namespace linerecon
