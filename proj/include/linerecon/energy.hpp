#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "linerecon/arrangement.hpp"
#include "linerecon/common.hpp"
#include "linerecon/linecloud.hpp"
#include "linerecon/lp.hpp"
#include "linerecon/ransac.hpp"

namespace linerecon {

struct EnergyParams {
  double sigma = 1.0;          // scale of interest, meters
  double lambda_vis = 0.1;
  double lambda_edge = 0.01;
  double lambda_corner = 0.01;
  bool viewpoint_cells_empty = true;  // hard x = 0 for cells containing viewpoints
  int threads = 1;
};

// Weighted term lists of E(X) = E_prim + E_vis + E_reg over cell occupancies.
struct EnergyModel {
  // max(0, 1 - sum x_c) over the cells behind (textural) or around
  // (structural) a visible fragment.
  struct Group {
    std::vector<int> cells;
    double weight = 0;
  };
  // |x_a - x_b| across a face crossed by a visibility triangle.
  struct VisPair {
    int a = -1, b = -1;
    double weight = 0;
  };
  // Cyclic cell ring around an interior edge; cost = weight * (number of
  // ring positions whose cell is a local extremum).
  struct EdgeTerm {
    std::vector<int> ring;
    double weight = 0;   // lambda_edge * edge length
    double length = 0;
    int line_class = 0;  // edges on the same infinite line share a class
    int edge_id = -1;    // arrangement edge
  };
  // A corner exists where two non-collinear creased edges meet at a vertex.
  struct CornerTerm {
    std::vector<int> edge_terms;   // indices into edge_terms
    std::vector<int> line_class;   // parallel arrays
    double weight = 0;
    int vertex_id = -1;
  };

  int num_cells = 0;
  std::vector<Group> groups;
  std::vector<VisPair> pairs;
  std::vector<EdgeTerm> edge_terms;
  std::vector<CornerTerm> corner_terms;
  std::vector<int> hard_empty;  // sorted cell ids fixed to 0

  // Assembly diagnostics.
  int skipped_grazing_pairs = 0;
  int skipped_boundary_viewpoints = 0;

  bool is_hard_empty(int cell) const {
    return std::binary_search(hard_empty.begin(), hard_empty.end(), cell);
  }
};

// Occupancy assignment; binary uses exactly 0.0 / 1.0.
using Labeling = std::vector<double>;

struct EnergyBreakdown {
  double prim = 0, vis = 0, reg = 0;
  double total() const { return prim + vis + reg; }
};

namespace energy_detail {

inline int ring_extrema_count(const EnergyModel::EdgeTerm& e, const Labeling& x) {
  const std::size_t m = e.ring.size();
  int count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double xi = x[e.ring[i]];
    double xp = x[e.ring[(i + m - 1) % m]];
    double xn = x[e.ring[(i + 1) % m]];
    double y = std::max(0.0, std::max(2 * xi - xp - xn - 1, xp + xn - 2 * xi - 1));
    if (y > 0.5) ++count;
  }
  return count;
}

}  // namespace energy_detail

// Exact energy of a binary labeling.
inline EnergyBreakdown evaluate(const EnergyModel& model, const Labeling& x) {
  if (static_cast<int>(x.size()) != model.num_cells)
    throw ValidationError("evaluate: labeling size mismatch");
  for (double v : x)
    if (v != 0.0 && v != 1.0) throw ValidationError("evaluate: labeling is not binary");
  for (int c : model.hard_empty)
    if (x[c] != 0.0)
      throw HardConstraintViolated("evaluate: hard-empty cell " + std::to_string(c) + " is full");

  EnergyBreakdown e;
  for (const auto& g : model.groups) {
    double sum = 0;
    for (int c : g.cells) sum += x[c];
    e.prim += g.weight * std::max(0.0, 1.0 - sum);
  }
  for (const auto& p : model.pairs) e.vis += p.weight * std::abs(x[p.a] - x[p.b]);
  std::vector<char> creased(model.edge_terms.size(), 0);
  for (std::size_t i = 0; i < model.edge_terms.size(); ++i) {
    int extrema = energy_detail::ring_extrema_count(model.edge_terms[i], x);
    creased[i] = extrema > 0;
    e.reg += model.edge_terms[i].weight * extrema;
  }
  for (const auto& corner : model.corner_terms) {
    bool is_corner = false;
    for (std::size_t i = 0; i < corner.edge_terms.size() && !is_corner; ++i)
      for (std::size_t j = i + 1; j < corner.edge_terms.size() && !is_corner; ++j)
        if (corner.line_class[i] != corner.line_class[j] && creased[corner.edge_terms[i]] &&
            creased[corner.edge_terms[j]])
          is_corner = true;
    if (is_corner) e.reg += corner.weight;
  }
  return e;
}

struct LpEncoding {
  LinearProgram lp;
  std::vector<int> cell_var;  // cell -> LP column, -1 when fixed to 0
  double constant = 0;        // cost already decided by fixed cells
  std::vector<std::vector<int>> edge_y_vars;  // per edge term, per ring position
  std::vector<int> edge_kappa_var;            // per edge term, -1 when unused
  std::vector<int> corner_z_var;              // per corner term
};

// Relax occupancies to [0,1] and introduce slack variables: s_k for each
// primitive group, t_j for each visibility pair, corner-cell variables y per
// ring position, per-edge crease variables kappa and per-vertex corner
// variables z. All auxiliary optima are tight at binary x, so the LP value
// of a binary labeling equals evaluate().
inline LpEncoding to_lp(const EnergyModel& model) {
  LpEncoding enc;
  LinearProgram& lp = enc.lp;
  enc.cell_var.assign(model.num_cells, -1);
  for (int c = 0; c < model.num_cells; ++c)
    if (!model.is_hard_empty(c)) enc.cell_var[c] = lp.add_var("x" + std::to_string(c), 0.0);

  for (std::size_t k = 0; k < model.groups.size(); ++k) {
    const auto& g = model.groups[k];
    std::vector<std::pair<int, double>> terms;
    for (int c : g.cells)
      if (enc.cell_var[c] >= 0) terms.push_back({enc.cell_var[c], -1.0});
    if (terms.empty()) {
      enc.constant += g.weight;  // all cells fixed empty: cost is 1
      continue;
    }
    int s = lp.add_var("s" + std::to_string(k), g.weight);
    terms.push_back({s, -1.0});
    lp.add_row(std::move(terms), -1.0);  // s + sum x >= 1
  }

  for (std::size_t j = 0; j < model.pairs.size(); ++j) {
    const auto& p = model.pairs[j];
    int va = enc.cell_var[p.a], vb = enc.cell_var[p.b];
    if (va < 0 && vb < 0) continue;
    int t = lp.add_var("t" + std::to_string(j), p.weight);
    if (va >= 0 && vb >= 0) {
      lp.add_row({{va, 1.0}, {vb, -1.0}, {t, -1.0}}, 0.0);
      lp.add_row({{vb, 1.0}, {va, -1.0}, {t, -1.0}}, 0.0);
    } else {
      int vc = va >= 0 ? va : vb;
      lp.add_row({{vc, 1.0}, {t, -1.0}}, 0.0);
    }
  }

  // y_{e,i} >= max(0, 2x_i - x_prev - x_next - 1, x_prev + x_next - 2x_i - 1)
  std::vector<std::vector<int>>& ring_y = enc.edge_y_vars;
  ring_y.resize(model.edge_terms.size());
  for (std::size_t e = 0; e < model.edge_terms.size(); ++e) {
    const auto& ring = model.edge_terms[e].ring;
    const std::size_t m = ring.size();
    for (std::size_t i = 0; i < m; ++i) {
      int y = lp.add_var("y" + std::to_string(e) + "_" + std::to_string(i),
                         model.edge_terms[e].weight);
      ring_y[e].push_back(y);
      int ci = enc.cell_var[ring[i]];
      int cp = enc.cell_var[ring[(i + m - 1) % m]];
      int cn = enc.cell_var[ring[(i + 1) % m]];
      auto row = [&](double wi, double wp, double wn) {
        std::vector<std::pair<int, double>> terms{{y, -1.0}};
        if (ci >= 0 && wi != 0) terms.push_back({ci, wi});
        if (cp >= 0 && wp != 0) terms.push_back({cp, wp});
        if (cn >= 0 && wn != 0) terms.push_back({cn, wn});
        lp.add_row(std::move(terms), 1.0);
      };
      row(2.0, -1.0, -1.0);
      row(-2.0, 1.0, 1.0);
    }
  }

  // kappa_e >= y_{e,i}: the edge's crease level; z_v >= kappa_e + kappa_e' - 1
  // for every non-collinear incident pair.
  std::vector<int>& kappa = enc.edge_kappa_var;
  kappa.assign(model.edge_terms.size(), -1);
  auto kappa_of = [&](int e) {
    if (kappa[e] < 0) {
      kappa[e] = lp.add_var("k" + std::to_string(e), 0.0);
      for (int y : ring_y[e]) lp.add_row({{y, 1.0}, {kappa[e], -1.0}}, 0.0);
    }
    return kappa[e];
  };
  for (std::size_t vtx = 0; vtx < model.corner_terms.size(); ++vtx) {
    const auto& corner = model.corner_terms[vtx];
    int z = lp.add_var("z" + std::to_string(vtx), corner.weight);
    enc.corner_z_var.push_back(z);
    for (std::size_t i = 0; i < corner.edge_terms.size(); ++i)
      for (std::size_t j = i + 1; j < corner.edge_terms.size(); ++j) {
        if (corner.line_class[i] == corner.line_class[j]) continue;
        int ka = kappa_of(corner.edge_terms[i]);
        int kb = kappa_of(corner.edge_terms[j]);
        lp.add_row({{ka, 1.0}, {kb, 1.0}, {z, -1.0}}, 1.0);
      }
  }
  return enc;
}

struct FractionalResult {
  Labeling values;      // per cell, fixed cells at 0
  double objective = 0; // includes the fixed-cell constant
  int iterations = 0;
};

inline FractionalResult solve_relaxation(const EnergyModel& model, double tol = 1e-9) {
  LpEncoding enc = to_lp(model);
  LpSolution sol = solve_lp(enc.lp, tol);
  FractionalResult out;
  out.values.assign(model.num_cells, 0.0);
  for (int c = 0; c < model.num_cells; ++c)
    if (enc.cell_var[c] >= 0) out.values[c] = sol.values[enc.cell_var[c]];
  out.objective = sol.objective + enc.constant;
  out.iterations = sol.iterations;
  return out;
}

// Fractional results are rounded at 0.5 (ties to full); hard-empty cells
// stay empty.
inline Labeling round_labeling(const EnergyModel& model, const Labeling& fractional) {
  Labeling out(fractional.size(), 0.0);
  for (std::size_t c = 0; c < fractional.size(); ++c)
    out[c] = fractional[c] >= 0.5 ? 1.0 : 0.0;
  for (int c : model.hard_empty) out[c] = 0.0;
  return out;
}

// Exact minimizer by enumeration; the independent oracle for the relaxation.
// Ties break toward fewer full cells, then lexicographically smallest
// labeling.
inline Labeling exhaustive_min(const EnergyModel& model, int max_free_cells = 22) {
  std::vector<int> free_cells;
  for (int c = 0; c < model.num_cells; ++c)
    if (!model.is_hard_empty(c)) free_cells.push_back(c);
  const int k = static_cast<int>(free_cells.size());
  if (k > max_free_cells)
    throw TooLarge("exhaustive_min: " + std::to_string(k) + " free cells exceed limit " +
                   std::to_string(max_free_cells));

  Labeling best;
  double best_val = 0;
  int best_full = 0;
  Labeling x(model.num_cells, 0.0);
  for (std::uint64_t mask = 0; mask < (1ULL << k); ++mask) {
    int full = 0;
    for (int i = 0; i < k; ++i) {
      double v = (mask >> i) & 1 ? 1.0 : 0.0;
      x[free_cells[i]] = v;
      full += v == 1.0;
    }
    double val = evaluate(model, x).total();
    bool better;
    if (best.empty()) {
      better = true;
    } else if (val != best_val) {
      better = val < best_val;
    } else if (full != best_full) {
      better = full < best_full;
    } else {
      better = std::lexicographical_compare(x.begin(), x.end(), best.begin(), best.end());
    }
    if (better) {
      best = x;
      best_val = val;
      best_full = full;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

// Projects inliers onto their carrier (plane for textural, plane-pair
// intersection line for structural) so fragments land exactly on arrangement
// faces and edges. Outliers are untouched.
inline LineCloud project_inliers(const LineCloud& cloud, const SupportState& support,
                                 const std::vector<Plane>& planes) {
  LineCloud out = cloud;
  for (std::size_t i = 0; i < out.segments.size(); ++i) {
    const auto& pi = support.assigned[i];
    if (pi.size() == 1) {
      out.segments[i].geometry = project_segment(out.segments[i].geometry, planes[pi[0]]);
    } else if (pi.size() == 2) {
      out.segments[i].geometry =
          project_segment(out.segments[i].geometry, planes[pi[0]], planes[pi[1]]);
    }
  }
  return out;
}

// Builds the full energy. `cloud` must already be projected (see
// project_inliers); `support.planes` must all appear in the complex.
inline EnergyModel assemble(const CellComplex& cx, const LineCloud& cloud,
                            const SupportState& support, const EnergyParams& params) {
  EnergyModel model;
  model.num_cells = static_cast<int>(cx.cells.size());

  // Support planes must be present in the arrangement.
  for (const auto& p : support.planes) {
    bool found = false;
    for (const auto& q : cx.planes)
      if (plane_angle_deg(p, q) < 1e-6 && std::abs(p.offset - q.offset) < 1e-9) found = true;
    if (!found) throw MissingPlane("assemble: support plane missing from the complex");
  }

  struct PairResult {
    std::vector<EnergyModel::Group> groups;
    std::vector<std::tuple<int, int, double>> vis;  // cell pair + raw length
    int grazing = 0;
  };

  // Work items: one per (segment, viewpoint). Fragments are shared per
  // segment.
  const int n_segs = static_cast<int>(cloud.segments.size());
  std::vector<std::vector<Fragment>> frags(n_segs);
  std::vector<int> seg_level(n_segs, 0);
  for (int i = 0; i < n_segs; ++i) {
    seg_level[i] = support.support_count(i);
    if (seg_level[i] >= 1) frags[i] = split_segment(cx, cloud.segments[i].geometry);
  }

  struct WorkItem {
    int seg;
    int viewpoint_id;
    Vec3 viewpoint_pos;
    std::vector<std::pair<double, double>> intervals;
  };
  std::vector<WorkItem> items;
  for (int i = 0; i < n_segs; ++i) {
    std::map<int, std::vector<std::pair<double, double>>> by_vp;
    for (const auto& iv : cloud.segments[i].views)
      by_vp[iv.viewpoint_id].push_back({iv.t0, iv.t1});
    for (auto& [vp, ivs] : by_vp) {
      const Viewpoint* v = cloud.find_viewpoint(vp);
      if (!v) continue;
      std::sort(ivs.begin(), ivs.end());
      items.push_back({i, vp, v->position, std::move(ivs)});
    }
  }

  std::vector<PairResult> results(items.size());
  parallel_for(items.size(), params.threads, [&](std::size_t w) {
    const WorkItem& item = items[w];
    PairResult& res = results[w];
    const Segment3& seg = cloud.segments[item.seg].geometry;
    const double seg_len = seg.length();
    try {
      // Primitive term: textural and structural segments only.
      if (seg_level[item.seg] >= 1) {
        for (const auto& frag : frags[item.seg]) {
          if (frag.kind == Fragment::Kind::Cell) continue;
          double covered = 0;
          for (auto [a, b] : item.intervals)
            covered += std::max(0.0, std::min(frag.t1, b) - std::max(frag.t0, a));
          if (covered * seg_len <= 1e-12) continue;
          std::vector<int> behind = behind_cells(cx, seg, frag, item.viewpoint_pos);
          if (behind.empty()) continue;
          res.groups.push_back({std::move(behind), covered * seg_len / params.sigma});
        }
      }
      // Visibility term: every segment, outliers included.
      for (auto [fid, len] : sight_crossings(cx, item.viewpoint_pos, seg, item.intervals)) {
        const auto& face = cx.faces[fid];
        if (!face.interior()) continue;
        res.vis.push_back({face.cells[0], face.cells[1], len});
      }
    } catch (const GrazingViewpoint&) {
      res.groups.clear();
      res.vis.clear();
      res.grazing = 1;
    }
  });

  // Deterministic merge, coalescing identical cell sets / cell pairs.
  std::map<std::vector<int>, double> group_acc;
  std::map<std::pair<int, int>, double> pair_acc;
  for (const auto& res : results) {
    model.skipped_grazing_pairs += res.grazing;
    for (const auto& g : res.groups) {
      std::vector<int> key = g.cells;
      std::sort(key.begin(), key.end());
      group_acc[key] += g.weight;
    }
    for (auto [a, b, len] : res.vis)
      pair_acc[std::minmax(a, b)] += params.lambda_vis * len / params.sigma;
  }
  for (auto& [cells, weight] : group_acc) model.groups.push_back({cells, weight});
  for (auto& [cells, weight] : pair_acc)
    model.pairs.push_back({cells.first, cells.second, weight});

  // Regularizer: every interior edge, with line classes for corner tests.
  std::vector<int> edge_term_of(cx.edges.size(), -1);
  std::vector<std::pair<Vec3, int>> line_dirs;  // canonical direction -> class
  auto class_of = [&](const Vec3& dir) {
    Vec3 d = dir;
    for (int i = 0; i < 3; ++i) {
      if (std::abs(d[i]) > 1e-9) {
        if (d[i] < 0) d = -d;
        break;
      }
    }
    for (auto& [v, cls] : line_dirs)
      if ((v - d).norm() < 1e-7) return cls;
    line_dirs.push_back({d, static_cast<int>(line_dirs.size())});
    return line_dirs.back().second;
  };
  for (std::size_t e = 0; e < cx.edges.size(); ++e) {
    const auto& edge = cx.edges[e];
    if (!edge.interior) continue;
    EnergyModel::EdgeTerm term;
    term.ring = edge.cells;
    term.length = edge.length;
    term.weight = params.lambda_edge * edge.length;
    term.line_class = class_of(unit(cx.vertices[edge.v1] - cx.vertices[edge.v0]));
    term.edge_id = static_cast<int>(e);
    edge_term_of[e] = static_cast<int>(model.edge_terms.size());
    model.edge_terms.push_back(std::move(term));
  }

  // Corner terms at vertices with >= 2 non-collinear incident interior edges.
  std::map<int, std::vector<int>> vertex_edges;
  for (std::size_t e = 0; e < cx.edges.size(); ++e) {
    if (edge_term_of[e] < 0) continue;
    vertex_edges[cx.edges[e].v0].push_back(static_cast<int>(e));
    vertex_edges[cx.edges[e].v1].push_back(static_cast<int>(e));
  }
  for (auto& [vtx, edge_list] : vertex_edges) {
    if (edge_list.size() < 2) continue;
    EnergyModel::CornerTerm corner;
    corner.vertex_id = vtx;
    corner.weight = params.lambda_corner;
    for (int e : edge_list) {
      corner.edge_terms.push_back(edge_term_of[e]);
      corner.line_class.push_back(model.edge_terms[edge_term_of[e]].line_class);
    }
    bool has_pair = false;
    for (std::size_t i = 0; i < corner.line_class.size() && !has_pair; ++i)
      for (std::size_t j = i + 1; j < corner.line_class.size(); ++j)
        if (corner.line_class[i] != corner.line_class[j]) {
          has_pair = true;
          break;
        }
    if (has_pair) model.corner_terms.push_back(std::move(corner));
  }

  // Hard-empty cells: cells containing viewpoints.
  if (params.viewpoint_cells_empty) {
    std::vector<int> hard;
    for (const auto& vp : cloud.viewpoints) {
      try {
        hard.push_back(cx.locate(vp.position));
      } catch (const OnBoundary&) {
        ++model.skipped_boundary_viewpoints;
      } catch (const OutsideBox&) {
        ++model.skipped_boundary_viewpoints;
      }
    }
    std::sort(hard.begin(), hard.end());
    hard.erase(std::unique(hard.begin(), hard.end()), hard.end());
    model.hard_empty = std::move(hard);
  }
  return model;
}

}  // namespace linerecon
