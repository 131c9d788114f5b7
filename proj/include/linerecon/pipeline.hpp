#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linerecon/arrangement.hpp"
#include "linerecon/energy.hpp"
#include "linerecon/evalmetrics.hpp"
#include "linerecon/linecloud.hpp"
#include "linerecon/ransac.hpp"
#include "linerecon/surface.hpp"
#include "linerecon/synth.hpp"

namespace linerecon {

struct PipelineConfig {
  DetectParams detect;
  EnergyParams energy;
  double bbox_inflation = 0.05;  // per side, fraction of extent
  std::uint64_t seed = 0;
  double solver_tol = 1e-9;
  int threads = 1;
  bool suppress_box_faces = false;
  bool report_timings = true;
};

namespace cfg_detail {

inline bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ParseError("config: bad boolean value '" + v + "'");
}

}  // namespace cfg_detail

// Flat key = value config document mirroring the CLI flag names.
inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& value) {
  using cfg_detail::parse_bool;
  if (key == "eps") cfg.detect.eps = std::stod(value);
  else if (key == "eps-fus") cfg.detect.eps_fus = std::stod(value);
  else if (key == "theta-fus") cfg.detect.theta_fus_deg = std::stod(value);
  else if (key == "p-fus") cfg.detect.p_fus = std::stod(value);
  else if (key == "n-iter") cfg.detect.n_iter = std::stoi(value);
  else if (key == "n-max") cfg.detect.n_max = std::stoi(value);
  else if (key == "min-support") cfg.detect.min_support = std::stoi(value);
  else if (key == "theta-min") cfg.detect.theta_min_deg = std::stod(value);
  else if (key == "exhaustive") cfg.detect.exhaustive = parse_bool(value);
  else if (key == "rank-by-length") cfg.detect.rank_by_length = parse_bool(value);
  else if (key == "distance-mode") {
    if (value == "max") cfg.detect.distance_mode = SegmentDistanceMode::Max;
    else if (value == "mean") cfg.detect.distance_mode = SegmentDistanceMode::Mean;
    else throw ParseError("config: distance-mode must be max or mean");
  }
  else if (key == "sigma") cfg.energy.sigma = std::stod(value);
  else if (key == "lambda-vis") cfg.energy.lambda_vis = std::stod(value);
  else if (key == "lambda-edge") cfg.energy.lambda_edge = std::stod(value);
  else if (key == "lambda-corner") cfg.energy.lambda_corner = std::stod(value);
  else if (key == "viewpoint-cells-empty") cfg.energy.viewpoint_cells_empty = parse_bool(value);
  else if (key == "bbox-inflation") cfg.bbox_inflation = std::stod(value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "solver-tol") cfg.solver_tol = std::stod(value);
  else if (key == "threads") cfg.threads = std::stoi(value);
  else if (key == "suppress-box-faces") cfg.suppress_box_faces = parse_bool(value);
  else if (key == "report-timings") cfg.report_timings = parse_bool(value);
  else throw ParseError("config: unknown key '" + key + "'");
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

// ---------------------------------------------------------------------------
// planes/1 document
// ---------------------------------------------------------------------------

namespace doc_detail {

inline std::string g17(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace doc_detail

inline std::string serialize_planes(const SupportState& st) {
  std::ostringstream out;
  out << "{\n  \"format\": \"planes/1\",\n  \"planes\": [\n";
  for (std::size_t p = 0; p < st.planes.size(); ++p) {
    const Plane& pl = st.planes[p];
    out << "    {\"normal\": [" << doc_detail::g17(pl.normal.x()) << ", "
        << doc_detail::g17(pl.normal.y()) << ", " << doc_detail::g17(pl.normal.z())
        << "], \"offset\": " << doc_detail::g17(pl.offset) << ", \"inliers\": [";
    for (std::size_t k = 0; k < st.support[p].size(); ++k)
      out << (k ? ", " : "") << st.segment_id(st.support[p][k]);
    out << "], \"structural\": [";
    bool first = true;
    for (int seg : st.support[p])
      if (st.is_structural(seg)) {
        out << (first ? "" : ", ") << st.segment_id(seg);
        first = false;
      }
    out << "]}" << (p + 1 < st.planes.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  return out.str();
}

inline void save_planes(const SupportState& st, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << serialize_planes(st);
}

inline SupportState load_planes(const std::string& path, const LineCloud& cloud) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("planes: ") + e.what());
  }
  if (j.value("format", "") != "planes/1")
    throw ParseError("planes: missing or unknown \"format\" header (want planes/1)");
  SupportState st = SupportState::init(cloud);
  for (const auto& jp : j.value("planes", nlohmann::json::array())) {
    const auto& jn = jp.at("normal");
    Plane plane = Plane::make(Vec3(jn[0].get<double>(), jn[1].get<double>(), jn[2].get<double>()),
                              jp.at("offset").get<double>());
    std::vector<int> inliers;
    for (const auto& id : jp.at("inliers")) {
      int idx = st.segment_index(id.get<int>());
      if (idx < 0) throw ValidationError("planes: inlier id not present in the cloud");
      inliers.push_back(idx);
    }
    st.commit(plane, inliers);
  }
  return st;
}

// ---------------------------------------------------------------------------
// complex/1 debug dump
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json dump_complex(const CellComplex& cx) {
  nlohmann::ordered_json j;
  j["format"] = "complex/1";
  j["planes"] = nlohmann::ordered_json::array();
  for (const auto& p : cx.planes)
    j["planes"].push_back({{"normal", {p.normal.x(), p.normal.y(), p.normal.z()}},
                           {"offset", p.offset}});
  j["box"] = {{"lo", {cx.box.lo.x(), cx.box.lo.y(), cx.box.lo.z()}},
              {"hi", {cx.box.hi.x(), cx.box.hi.y(), cx.box.hi.z()}}};
  j["counts"] = {{"vertices", cx.vertices.size()},
                 {"faces", cx.faces.size()},
                 {"edges", cx.edges.size()},
                 {"cells", cx.cells.size()}};
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cx.cells)
    j["cells"].push_back({{"volume", c.volume},
                          {"centroid", {c.centroid.x(), c.centroid.y(), c.centroid.z()}},
                          {"faces", c.faces}});
  j["faces"] = nlohmann::ordered_json::array();
  for (const auto& f : cx.faces)
    j["faces"].push_back({{"plane", f.plane},
                          {"box_side", f.box_side},
                          {"cells", {f.cells[0], f.cells[1]}},
                          {"area", f.area},
                          {"vertices", f.loop}});
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : cx.edges)
    j["edges"].push_back({{"v", {e.v0, e.v1}},
                          {"length", e.length},
                          {"interior", e.interior},
                          {"faces", e.faces},
                          {"cells", e.cells}});
  return j;
}

// ---------------------------------------------------------------------------
// Full reconstruction
// ---------------------------------------------------------------------------

struct PipelineResult {
  SupportState detected;       // before fusion
  SupportState fused;          // state the arrangement is built from
  CellComplex complex;
  EnergyModel model;
  FractionalResult fractional;
  Labeling labeling;
  PolygonMesh mesh;
  MeshReport mesh_report;
  nlohmann::ordered_json report;
};

inline Box3 scene_bounding_box(const LineCloud& cloud, double inflation) {
  Box3 box = Box3::empty();
  for (const auto& v : cloud.viewpoints) box.expand(v.position);
  for (const auto& s : cloud.segments) {
    box.expand(s.geometry.p0);
    box.expand(s.geometry.p1);
  }
  return box.inflated(inflation);
}

inline PipelineResult reconstruct(const LineCloud& cloud, const PipelineConfig& cfg,
                                  std::optional<SupportState> preset = std::nullopt) {
  using Clock = std::chrono::steady_clock;
  auto now = [] { return Clock::now(); };
  auto ms = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };
  require_valid(cloud);

  PipelineResult res;
  nlohmann::ordered_json timings;

  auto t0 = now();
  res.detected = preset ? std::move(*preset) : detect_planes(cloud, cfg.detect, cfg.seed);
  auto t1 = now();
  timings["detect_ms"] = ms(t0, t1);

  res.fused = fuse_planes(res.detected, cfg.detect);
  audit_support_state(res.fused, cfg.detect.eps_fus);
  auto t2 = now();
  timings["fuse_ms"] = ms(t1, t2);

  LineCloud projected = project_inliers(cloud, res.fused, res.fused.planes);
  Box3 box = scene_bounding_box(projected, cfg.bbox_inflation);
  ArrangementOptions arr_opts;
  arr_opts.max_planes = cfg.detect.n_max;
  res.complex = build_complex(res.fused.planes, box, arr_opts);
  auto t3 = now();
  timings["arrange_ms"] = ms(t2, t3);

  EnergyParams eparams = cfg.energy;
  eparams.threads = effective_threads(cfg.threads);
  res.model = assemble(res.complex, projected, res.fused, eparams);
  auto t4 = now();
  timings["energy_ms"] = ms(t3, t4);

  res.fractional = solve_relaxation(res.model, cfg.solver_tol);
  res.labeling = round_labeling(res.model, res.fractional.values);
  EnergyBreakdown rounded_energy = evaluate(res.model, res.labeling);
  auto t5 = now();
  timings["solve_ms"] = ms(t4, t5);

  ExtractOptions ex;
  ex.include_box_faces = !cfg.suppress_box_faces;
  res.mesh = extract_surface(res.complex, res.labeling, ex);
  res.mesh_report = validate(res.mesh);
  auto t6 = now();
  timings["extract_ms"] = ms(t5, t6);

  // Sub-segment count over all segments (outliers included).
  std::size_t sub_segments = 0;
  for (const auto& s : projected.segments) {
    try {
      sub_segments += split_segment(res.complex, s.geometry).size();
    } catch (const OutsideBox&) {
    }
  }

  int full_cells = 0;
  for (double v : res.labeling) full_cells += v == 1.0;

  nlohmann::ordered_json rep;
  rep["format"] = "report/1";
  rep["seed"] = cfg.seed;
  rep["input"] = {{"viewpoints", cloud.viewpoints.size()}, {"segments", cloud.segments.size()}};
  rep["detect"] = {{"planes_before_fusion", res.detected.planes.size()},
                   {"planes_after_fusion", res.fused.planes.size()},
                   {"l0", res.fused.l0().size()},
                   {"l1", res.fused.l1().size()},
                   {"l2", res.fused.l2().size()}};
  rep["arrange"] = {{"cells", res.complex.cells.size()},
                    {"faces", res.complex.faces.size()},
                    {"edges", res.complex.edges.size()},
                    {"vertices", res.complex.vertices.size()},
                    {"sub_segments", sub_segments}};
  rep["energy"] = {{"primitive_groups", res.model.groups.size()},
                   {"visibility_pairs", res.model.pairs.size()},
                   {"edge_terms", res.model.edge_terms.size()},
                   {"corner_terms", res.model.corner_terms.size()},
                   {"hard_empty_cells", res.model.hard_empty.size()},
                   {"skipped_grazing_pairs", res.model.skipped_grazing_pairs},
                   {"skipped_boundary_viewpoints", res.model.skipped_boundary_viewpoints}};
  rep["solve"] = {{"lp_objective", res.fractional.objective},
                  {"lp_iterations", res.fractional.iterations},
                  {"rounded_prim", rounded_energy.prim},
                  {"rounded_vis", rounded_energy.vis},
                  {"rounded_reg", rounded_energy.reg},
                  {"rounded_total", rounded_energy.total()},
                  {"full_cells", full_cells}};
  rep["surface"] = {{"vertices", res.mesh.vertices.size()},
                    {"faces", res.mesh.faces.size()},
                    {"area", res.mesh.area()},
                    {"boundary_edges", res.mesh_report.boundary_edges},
                    {"non_manifold_edges", res.mesh_report.non_manifold_edges},
                    {"self_intersections", res.mesh_report.self_intersections},
                    {"connected_components", res.mesh_report.connected_components}};
  if (cfg.report_timings) rep["timings"] = timings;
  res.report = std::move(rep);
  return res;
}

}  // namespace linerecon
