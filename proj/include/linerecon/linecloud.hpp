#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linerecon/geometry.hpp"

namespace linerecon {

constexpr double kMinInterval = 1e-9;

struct Viewpoint {
  int id = 0;
  Vec3 position{0, 0, 0};
};

// Visible sub-interval of a segment, in its [0,1] parameterization, as seen
// from one viewpoint. A (segment, viewpoint) pair may carry several disjoint
// intervals when occluders fragment the view.
struct ViewInterval {
  int viewpoint_id = 0;
  double t0 = 0.0;
  double t1 = 1.0;
};

struct ObservedSegment {
  int id = 0;
  Segment3 geometry;
  std::vector<ViewInterval> views;

  double visible_length(int viewpoint_id) const {
    double sum = 0;
    for (const auto& v : views)
      if (v.viewpoint_id == viewpoint_id) sum += v.t1 - v.t0;
    return sum * geometry.length();
  }
  std::vector<int> viewpoint_ids() const {
    std::vector<int> ids;
    for (const auto& v : views) ids.push_back(v.viewpoint_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }
};

// The sole sensor input: viewpoints plus 3D segments with per-viewpoint
// visible intervals. Coordinates are metric.
struct LineCloud {
  std::vector<Viewpoint> viewpoints;
  std::vector<ObservedSegment> segments;

  const Viewpoint* find_viewpoint(int id) const {
    for (const auto& v : viewpoints)
      if (v.id == id) return &v;
    return nullptr;
  }
};

// Collects every violated invariant instead of stopping at the first.
inline std::vector<std::string> validate_line_cloud(const LineCloud& cloud) {
  std::vector<std::string> problems;
  std::set<int> vp_ids;
  for (const auto& v : cloud.viewpoints) {
    if (!vp_ids.insert(v.id).second)
      problems.push_back("duplicate viewpoint id " + std::to_string(v.id));
  }
  std::set<int> seg_ids;
  for (const auto& s : cloud.segments) {
    const std::string tag = "segment " + std::to_string(s.id);
    if (!seg_ids.insert(s.id).second) problems.push_back("duplicate " + tag + " id");
    if (!s.geometry.valid()) problems.push_back(tag + ": zero-length geometry");
    if (s.views.empty()) problems.push_back(tag + ": has no views");
    std::map<int, std::vector<std::pair<double, double>>> per_vp;
    for (const auto& iv : s.views) {
      if (vp_ids.find(iv.viewpoint_id) == vp_ids.end())
        problems.push_back(tag + ": references missing viewpoint id " +
                           std::to_string(iv.viewpoint_id));
      if (iv.t0 < 0.0 || iv.t1 > 1.0)
        problems.push_back(tag + ": interval outside [0,1]");
      if (iv.t1 - iv.t0 <= kMinInterval)
        problems.push_back(tag + ": empty or inverted interval");
      per_vp[iv.viewpoint_id].push_back({iv.t0, iv.t1});
    }
    for (auto& [vp, ivs] : per_vp) {
      std::sort(ivs.begin(), ivs.end());
      for (std::size_t i = 1; i < ivs.size(); ++i)
        if (ivs[i].first < ivs[i - 1].second - kMinInterval)
          problems.push_back(tag + ": overlapping intervals for viewpoint " +
                             std::to_string(vp));
    }
  }
  return problems;
}

inline void require_valid(const LineCloud& cloud) {
  auto problems = validate_line_cloud(cloud);
  if (!problems.empty()) {
    std::string msg = "line cloud invalid:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
}

// Split an observed segment at parameter t into two halves with visible
// intervals remapped into each half's own [0,1] parameterization. Used to
// model detector over-segmentation.
inline std::pair<ObservedSegment, ObservedSegment> split_observed(const ObservedSegment& s,
                                                                  double t, int id_a, int id_b) {
  if (t <= 0.0 || t >= 1.0) throw ValidationError("split_observed: t must be inside (0,1)");
  ObservedSegment a, b;
  a.id = id_a;
  b.id = id_b;
  a.geometry = {s.geometry.p0, s.geometry.at(t)};
  b.geometry = {s.geometry.at(t), s.geometry.p1};
  for (const auto& iv : s.views) {
    if (iv.t0 < t) {
      double lo = iv.t0 / t, hi = std::min(iv.t1, t) / t;
      if (hi - lo > kMinInterval) a.views.push_back({iv.viewpoint_id, lo, std::min(1.0, hi)});
    }
    if (iv.t1 > t) {
      double lo = (std::max(iv.t0, t) - t) / (1.0 - t), hi = (iv.t1 - t) / (1.0 - t);
      if (hi - lo > kMinInterval)
        b.views.push_back({iv.viewpoint_id, std::max(0.0, lo), std::min(1.0, hi)});
    }
  }
  return {a, b};
}

namespace detail {

// 9 significant digits round-trips its own text exactly, which gives the
// byte-identical save/load/save property.
inline std::string fmt_g9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

inline std::string fmt_vec(const Vec3& v) {
  return "[" + fmt_g9(v.x()) + ", " + fmt_g9(v.y()) + ", " + fmt_g9(v.z()) + "]";
}

inline Vec3 parse_vec(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError(where + ": expected a 3-element coordinate array");
  for (const auto& c : j)
    if (!c.is_number()) throw ParseError(where + ": non-numeric coordinate");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace detail

// linecloud/1: a self-describing JSON document. Field order and number
// formatting are fixed so that save/load round trips byte-identically.
inline std::string serialize_line_cloud(const LineCloud& cloud) {
  std::ostringstream out;
  out << "{\n  \"format\": \"linecloud/1\",\n  \"unit\": \"meter\",\n";
  out << "  \"viewpoints\": [\n";
  for (std::size_t i = 0; i < cloud.viewpoints.size(); ++i) {
    const auto& v = cloud.viewpoints[i];
    out << "    {\"id\": " << v.id << ", \"position\": " << detail::fmt_vec(v.position) << "}"
        << (i + 1 < cloud.viewpoints.size() ? "," : "") << "\n";
  }
  out << "  ],\n  \"segments\": [\n";
  for (std::size_t i = 0; i < cloud.segments.size(); ++i) {
    const auto& s = cloud.segments[i];
    out << "    {\"id\": " << s.id << ", \"p0\": " << detail::fmt_vec(s.geometry.p0)
        << ", \"p1\": " << detail::fmt_vec(s.geometry.p1) << ", \"views\": [";
    for (std::size_t k = 0; k < s.views.size(); ++k) {
      const auto& iv = s.views[k];
      out << "[" << iv.viewpoint_id << ", " << detail::fmt_g9(iv.t0) << ", "
          << detail::fmt_g9(iv.t1) << "]" << (k + 1 < s.views.size() ? ", " : "");
    }
    out << "]}" << (i + 1 < cloud.segments.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  return out.str();
}

inline LineCloud parse_line_cloud(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("linecloud: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "linecloud/1")
    throw ParseError("linecloud: missing or unknown \"format\" header (want linecloud/1)");
  LineCloud cloud;
  for (const auto& jv : j.value("viewpoints", nlohmann::json::array())) {
    Viewpoint v;
    if (!jv.contains("id") || !jv["id"].is_number_integer())
      throw ParseError("viewpoint: missing integer \"id\"");
    v.id = jv["id"].get<int>();
    v.position = detail::parse_vec(jv.at("position"), "viewpoint " + std::to_string(v.id));
    cloud.viewpoints.push_back(v);
  }
  for (const auto& js : j.value("segments", nlohmann::json::array())) {
    ObservedSegment s;
    if (!js.contains("id") || !js["id"].is_number_integer())
      throw ParseError("segment: missing integer \"id\"");
    s.id = js["id"].get<int>();
    const std::string tag = "segment " + std::to_string(s.id);
    s.geometry.p0 = detail::parse_vec(js.at("p0"), tag);
    s.geometry.p1 = detail::parse_vec(js.at("p1"), tag);
    if (!js.contains("views"))
      throw ParseError(tag + ": missing \"views\" (visibility is required input)");
    for (const auto& jiv : js["views"]) {
      if (!jiv.is_array() || jiv.size() != 3)
        throw ParseError(tag + ": view entry must be [viewpoint_id, t0, t1]");
      ViewInterval iv;
      iv.viewpoint_id = jiv[0].get<int>();
      iv.t0 = jiv[1].get<double>();
      iv.t1 = jiv[2].get<double>();
      s.views.push_back(iv);
    }
    cloud.segments.push_back(s);
  }
  require_valid(cloud);
  return cloud;
}

inline void save_line_cloud(const LineCloud& cloud, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << serialize_line_cloud(cloud);
  if (!f) throw IoError("write failed: " + path);
}

inline LineCloud load_line_cloud(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_line_cloud(ss.str());
}

}  // namespace linerecon
