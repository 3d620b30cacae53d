#pragma once

#include "dualsq/problem.hpp"

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace dualsq {

/// Instance files are JSON:
///   { "format": "dualsq-instance", "version": 1, "case_tag": "...",
///     "coupling": { "kind": "...", "scale": s, "offset": [...] },
///     "agents": [ { "f": {...}, "g": {...}, "A": [[...], ...] }, ... ] }
/// f: {"kind": "quadratic", "P": [[...]], "q": [...]} or {"kind": "scaled_sq_norm", "dim": d, "beta": b}
/// g: {"kind": "zero", "dim": d}, {"kind": "l1", "dim": d, "weight": w},
///    {"kind": "box", "lower": [...], "upper": [...]} or {"kind": "singleton", "b": [...]}
/// Matrices are lists of rows. Custom callbacks cannot be serialized.
inline constexpr int kInstanceVersion = 1;

namespace io_detail {

using nlohmann::json;

inline json to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Mat& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) rows.push_back(to_json(Vec(M.row(i).transpose())));
  return rows;
}

inline Vec vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

inline Mat mat_from(const json& j, Index cols_if_empty = 0) {
  if (!j.is_array()) throw ConfigError("instance: matrix must be a list of rows");
  const Index r = static_cast<Index>(j.size());
  const Index c = r ? static_cast<Index>(j[0].size()) : cols_if_empty;
  Mat M(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(j[i].size()) != c) throw ConfigError("instance: ragged matrix");
    for (Index k = 0; k < c; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

inline const char* coupling_kind(Coupling::Kind k) {
  switch (k) {
    case Coupling::Kind::shifted_quadratic: return "shifted_quadratic";
    case Coupling::Kind::clipped_quadratic: return "clipped_quadratic";
    case Coupling::Kind::linear: return "linear";
    case Coupling::Kind::linear_nonneg: return "linear_nonneg";
  }
  return "?";
}

}  // namespace io_detail

inline nlohmann::json instance_to_json(const ProblemInstance& pr) {
  using io_detail::json;
  using io_detail::to_json;
  json j;
  j["format"] = "dualsq-instance";
  j["version"] = kInstanceVersion;
  j["case_tag"] = to_string(pr.case_tag());
  const Coupling& h = pr.coupling();
  j["coupling"] = {{"kind", io_detail::coupling_kind(h.kind())}, {"scale", h.scale()}, {"offset", to_json(h.offset())}};
  json agents = json::array();
  for (const auto& a : pr.agents()) {
    json ja;
    if (a.f.kind() != SmoothFn::Kind::quadratic) throw ConfigError("instance: custom f cannot be serialized");
    if (a.f.is_isotropic())
      ja["f"] = {{"kind", "scaled_sq_norm"}, {"dim", a.f.dim()}, {"beta", a.f.beta()}};
    else
      ja["f"] = {{"kind", "quadratic"}, {"P", to_json(a.f.P())}, {"q", to_json(a.f.q())}};
    switch (a.g.kind()) {
      case ProxFn::Kind::zero: ja["g"] = {{"kind", "zero"}, {"dim", a.g.dim()}}; break;
      case ProxFn::Kind::l1: ja["g"] = {{"kind", "l1"}, {"dim", a.g.dim()}, {"weight", a.g.weight()}}; break;
      case ProxFn::Kind::box:
        ja["g"] = {{"kind", "box"}, {"lower", to_json(a.g.lower())}, {"upper", to_json(a.g.upper())}};
        break;
      case ProxFn::Kind::singleton: ja["g"] = {{"kind", "singleton"}, {"b", to_json(a.g.lower())}}; break;
      case ProxFn::Kind::custom: throw ConfigError("instance: custom g cannot be serialized");
    }
    ja["A"] = to_json(a.A);
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  return j;
}

inline ProblemInstance instance_from_json(const nlohmann::json& j) {
  using io_detail::mat_from;
  using io_detail::vec_from;
  try {
    if (j.value("format", "") != "dualsq-instance") throw ConfigError("instance: unknown format");
    if (j.at("version").get<int>() != kInstanceVersion) throw ConfigError("instance: unsupported version");
    const auto& jc = j.at("coupling");
    const std::string ck = jc.at("kind").get<std::string>();
    const Vec off = vec_from(jc.at("offset"));
    const double scale = jc.value("scale", 0.0);
    Coupling h = ck == "shifted_quadratic"   ? Coupling::shifted_quadratic(scale, off)
                 : ck == "clipped_quadratic" ? Coupling::clipped_quadratic(scale, off)
                 : ck == "linear"            ? Coupling::linear(off)
                 : ck == "linear_nonneg"     ? Coupling::linear_nonneg(off)
                                             : throw ConfigError("instance: unknown coupling kind " + ck);
    std::vector<AgentLocalProblem> agents;
    for (const auto& ja : j.at("agents")) {
      const auto& jf = ja.at("f");
      const std::string fk = jf.at("kind").get<std::string>();
      SmoothFn f = fk == "scaled_sq_norm" ? SmoothFn::scaled_sq_norm(jf.at("dim").get<Index>(), jf.at("beta").get<double>())
                   : fk == "quadratic"    ? SmoothFn::quadratic(mat_from(jf.at("P")), vec_from(jf.at("q")))
                                          : throw ConfigError("instance: unknown f kind " + fk);
      const auto& jg = ja.at("g");
      const std::string gk = jg.at("kind").get<std::string>();
      ProxFn g = gk == "zero"        ? ProxFn::zero(jg.at("dim").get<Index>())
                 : gk == "l1"        ? ProxFn::l1(jg.at("dim").get<Index>(), jg.at("weight").get<double>())
                 : gk == "box"       ? ProxFn::box(vec_from(jg.at("lower")), vec_from(jg.at("upper")))
                 : gk == "singleton" ? ProxFn::singleton(vec_from(jg.at("b")))
                                     : throw ConfigError("instance: unknown g kind " + gk);
      Mat A = mat_from(ja.at("A"), f.dim());
      agents.emplace_back(std::move(f), std::move(g), std::move(A));
    }
    return ProblemInstance(std::move(agents), std::move(h), case_tag_from_string(j.at("case_tag").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("instance: malformed file: ") + e.what());
  }
}

inline void save_instance(const std::string& path, const ProblemInstance& pr) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << instance_to_json(pr).dump(1) << '\n';
}

inline ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("instance: not valid JSON: ") + e.what());
  }
  return instance_from_json(j);
}

}  // namespace dualsq
