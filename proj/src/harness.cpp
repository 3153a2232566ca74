#include "npcflow/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "npcflow/proximal.hpp"
#include "npcflow/rng.hpp"
#include "npcflow/version.hpp"

namespace npcflow {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw ConfigError(msg); }

void require_object(const Json& j, const std::string& ctx) {
  if (!j.is_object()) bad_config(ctx + " must be an object");
}

/// Fail-closed key validation: unknown keys reject the config.
void check_keys(const Json& j, const std::string& ctx,
                const std::set<std::string>& allowed,
                const std::set<std::string>& required = {}) {
  require_object(j, ctx);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) bad_config(ctx + ": unknown key '" + key + "'");
  }
  for (const auto& key : required)
    if (!j.contains(key)) bad_config(ctx + ": missing required key '" + key + "'");
}

double get_num(const Json& j, const std::string& ctx) {
  if (!j.is_number()) bad_config(ctx + " must be a number");
  return j.get<double>();
}

std::vector<double> get_vec(const Json& j, const std::string& ctx) {
  if (!j.is_array()) bad_config(ctx + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(get_num(v, ctx + " entry"));
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

Json js_num(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

Json anchor_to_json(const SpacePoint& anchor);

}  // namespace

// --- serialization ----------------------------------------------------------

Json space_to_json(const GeodesicSpace& space) {
  Json j;
  j["kind"] = to_string(space.kind);
  switch (space.kind) {
    case SpaceKind::euclidean:
    case SpaceKind::hyperbolic:
      j["dim"] = space.dim;
      break;
    case SpaceKind::spider:
      j["legs"] = space.legs;
      break;
    case SpaceKind::product:
      j["factors"] = Json::array({space_to_json(space.factors[0]),
                                  space_to_json(space.factors[1])});
      break;
  }
  return j;
}

GeodesicSpace space_from_json(const Json& j) {
  check_keys(j, "space", {"kind", "dim", "legs", "factors"}, {"kind"});
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "euclidean") {
    check_keys(j, "space", {"kind", "dim"}, {"dim"});
    return GeodesicSpace::euclidean(j.at("dim").get<int>());
  }
  if (kind == "hyperbolic") {
    check_keys(j, "space", {"kind", "dim"}, {"dim"});
    return GeodesicSpace::hyperbolic(j.at("dim").get<int>());
  }
  if (kind == "spider") {
    check_keys(j, "space", {"kind", "legs"}, {"legs"});
    return GeodesicSpace::spider(j.at("legs").get<int>());
  }
  if (kind == "product") {
    check_keys(j, "space", {"kind", "factors"}, {"factors"});
    const auto& f = j.at("factors");
    if (!f.is_array() || f.size() != 2) bad_config("product space needs exactly 2 factors");
    return GeodesicSpace::product(space_from_json(f[0]), space_from_json(f[1]));
  }
  bad_config("unknown space kind '" + kind + "'");
}

Json point_to_json(const GeodesicSpace& space, const SpacePoint& p) {
  switch (space.kind) {
    case SpaceKind::euclidean:
      return Json(p.coords);
    case SpaceKind::hyperbolic: {
      Json j;
      j["ambient"] = p.coords;
      return j;
    }
    case SpaceKind::spider: {
      Json j;
      j["leg"] = p.leg;
      j["radius"] = p.radius;
      return j;
    }
    case SpaceKind::product: {
      Json j;
      j["factors"] = Json::array({point_to_json(space.factors[0], p.factors[0]),
                                  point_to_json(space.factors[1], p.factors[1])});
      return j;
    }
  }
  bad_config("unreachable");
}

SpacePoint point_from_json(const GeodesicSpace& space, const Json& j) {
  SpacePoint p;
  switch (space.kind) {
    case SpaceKind::euclidean:
      p = euclidean_point(get_vec(j, "euclidean point"));
      break;
    case SpaceKind::hyperbolic: {
      check_keys(j, "hyperbolic point", {"ambient", "spatial"});
      if (j.contains("ambient") == j.contains("spatial"))
        bad_config("hyperbolic point needs exactly one of 'ambient' or 'spatial'");
      p = j.contains("ambient")
              ? hyperbolic_point_ambient(get_vec(j.at("ambient"), "ambient coordinates"))
              : hyperbolic_point(get_vec(j.at("spatial"), "spatial coordinates"));
      break;
    }
    case SpaceKind::spider:
      check_keys(j, "spider point", {"leg", "radius"}, {"leg", "radius"});
      p = spider_point(j.at("leg").get<int>(), get_num(j.at("radius"), "radius"));
      break;
    case SpaceKind::product: {
      check_keys(j, "product point", {"factors"}, {"factors"});
      const auto& f = j.at("factors");
      if (!f.is_array() || f.size() != 2) bad_config("product point needs exactly 2 factors");
      p = product_point(point_from_json(space.factors[0], f[0]),
                        point_from_json(space.factors[1], f[1]));
      break;
    }
  }
  validate_point(space, p);
  return p;
}

namespace {

Json anchor_to_json(const SpacePoint& anchor) {
  switch (anchor.kind) {
    case SpaceKind::euclidean:
      return Json(anchor.coords);
    case SpaceKind::hyperbolic:
      return Json{{"ambient", anchor.coords}};
    case SpaceKind::spider:
      return Json{{"leg", anchor.leg}, {"radius", anchor.radius}};
    case SpaceKind::product: {
      Json j;
      j["factors"] = Json::array({anchor_to_json(anchor.factors[0]),
                                  anchor_to_json(anchor.factors[1])});
      return j;
    }
  }
  bad_config("unreachable");
}

SpacePoint anchor_from_json(const Json& j, const std::string& ctx) {
  if (j.is_array()) return euclidean_point(get_vec(j, ctx));
  require_object(j, ctx);
  if (j.contains("factors")) {
    check_keys(j, ctx, {"factors"}, {"factors"});
    const auto& f = j.at("factors");
    if (!f.is_array() || f.size() != 2) bad_config(ctx + ": product anchor needs 2 factors");
    return product_point(anchor_from_json(f[0], ctx), anchor_from_json(f[1], ctx));
  }
  if (j.contains("ambient"))
    return hyperbolic_point_ambient(get_vec(j.at("ambient"), ctx + ".ambient"));
  if (j.contains("spatial"))
    return hyperbolic_point(get_vec(j.at("spatial"), ctx + ".spatial"));
  if (j.contains("leg")) {
    check_keys(j, ctx, {"leg", "radius"}, {"leg", "radius"});
    return spider_point(j.at("leg").get<int>(), get_num(j.at("radius"), ctx + ".radius"));
  }
  bad_config(ctx + ": unrecognized anchor payload");
}

}  // namespace

Json functional_to_json(const ConvexFunctional& f) {
  Json j;
  j["kind"] = f.kind_name();
  if (const auto* h = std::get_if<HalfSquaredDistance>(&f.instance())) {
    j["anchor"] = anchor_to_json(h->anchor);
  } else if (const auto* s = std::get_if<ScaledDistance>(&f.instance())) {
    j["scale"] = s->scale;
    j["anchor"] = anchor_to_json(s->anchor);
  } else if (const auto* q = std::get_if<QuadraticForm>(&f.instance())) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < q->matrix.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < q->matrix.cols(); ++c) row.push_back(q->matrix(r, c));
      rows.push_back(std::move(row));
    }
    j["matrix"] = std::move(rows);
    j["offset"] = std::vector<double>(q->offset.data(), q->offset.data() + q->offset.size());
  } else if (const auto* b = std::get_if<Busemann>(&f.instance())) {
    j["ideal"] = b->ideal;
  } else {
    const auto& m = std::get<MaxAffine>(f.instance());
    Json pieces = Json::array();
    for (const auto& piece : m.pieces)
      pieces.push_back(Json{{"gradient", piece.gradient}, {"offset", piece.offset}});
    j["pieces"] = std::move(pieces);
  }
  return j;
}

ConvexFunctional functional_from_json(const Json& j) {
  check_keys(j, "functional",
             {"kind", "anchor", "scale", "matrix", "offset", "ideal", "pieces"}, {"kind"});
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "half_squared_distance") {
    check_keys(j, "functional", {"kind", "anchor"}, {"anchor"});
    return ConvexFunctional::half_squared_distance(anchor_from_json(j.at("anchor"), "anchor"));
  }
  if (kind == "scaled_distance") {
    check_keys(j, "functional", {"kind", "scale", "anchor"}, {"scale", "anchor"});
    return ConvexFunctional::scaled_distance(get_num(j.at("scale"), "scale"),
                                             anchor_from_json(j.at("anchor"), "anchor"));
  }
  if (kind == "quadratic_form") {
    check_keys(j, "functional", {"kind", "matrix", "offset"}, {"matrix", "offset"});
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || rows.empty()) bad_config("matrix must be a nonempty array of rows");
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto row = get_vec(rows[static_cast<std::size_t>(r)], "matrix row");
      if (static_cast<Eigen::Index>(row.size()) != n) bad_config("matrix must be square");
      for (Eigen::Index c = 0; c < n; ++c) A(r, c) = row[static_cast<std::size_t>(c)];
    }
    const auto b = get_vec(j.at("offset"), "offset");
    if (static_cast<Eigen::Index>(b.size()) != n) bad_config("offset dimension mismatch");
    return ConvexFunctional::quadratic_form(
        A, Eigen::Map<const Eigen::VectorXd>(b.data(), n));
  }
  if (kind == "busemann") {
    check_keys(j, "functional", {"kind", "ideal"}, {"ideal"});
    return ConvexFunctional::busemann(get_vec(j.at("ideal"), "ideal"));
  }
  if (kind == "max_affine") {
    check_keys(j, "functional", {"kind", "pieces"}, {"pieces"});
    const auto& pieces = j.at("pieces");
    if (!pieces.is_array() || pieces.empty()) bad_config("pieces must be a nonempty array");
    std::vector<MaxAffinePiece> out;
    for (const auto& piece : pieces) {
      check_keys(piece, "piece", {"gradient", "offset"}, {"gradient", "offset"});
      out.push_back({get_vec(piece.at("gradient"), "gradient"),
                     get_num(piece.at("offset"), "piece offset")});
    }
    return ConvexFunctional::max_affine(std::move(out));
  }
  bad_config("unknown functional kind '" + kind + "'");
}

Json set_to_json(const GeodesicSpace& space, const ConvexSetDescriptor& set) {
  Json j;
  switch (set.kind) {
    case ConvexSetDescriptor::Kind::geodesic_segment:
      j["kind"] = "segment";
      j["a"] = point_to_json(space, set.a);
      j["b"] = point_to_json(space, set.b);
      break;
    case ConvexSetDescriptor::Kind::ball:
      j["kind"] = "ball";
      j["center"] = point_to_json(space, set.a);
      j["radius"] = set.radius;
      break;
    case ConvexSetDescriptor::Kind::euclidean_hull: {
      j["kind"] = "euclidean_hull";
      Json pts = Json::array();
      for (const auto& p : set.hull_points) pts.push_back(point_to_json(space, p));
      j["points"] = std::move(pts);
      break;
    }
    case ConvexSetDescriptor::Kind::spider_subtree:
      j["kind"] = "spider_subtree";
      j["legs"] = set.legs;
      j["max_radii"] = set.max_radii;
      break;
  }
  return j;
}

ConvexSetDescriptor set_from_json(const GeodesicSpace& space, const Json& j) {
  check_keys(j, "set", {"kind", "a", "b", "center", "radius", "points", "legs", "max_radii"},
             {"kind"});
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "segment") {
    check_keys(j, "set", {"kind", "a", "b"}, {"a", "b"});
    return ConvexSetDescriptor::segment(point_from_json(space, j.at("a")),
                                        point_from_json(space, j.at("b")));
  }
  if (kind == "ball") {
    check_keys(j, "set", {"kind", "center", "radius"}, {"center", "radius"});
    return ConvexSetDescriptor::ball(point_from_json(space, j.at("center")),
                                     get_num(j.at("radius"), "radius"));
  }
  if (kind == "euclidean_hull") {
    check_keys(j, "set", {"kind", "points"}, {"points"});
    std::vector<SpacePoint> pts;
    for (const auto& p : j.at("points")) pts.push_back(point_from_json(space, p));
    return ConvexSetDescriptor::euclidean_hull(std::move(pts));
  }
  if (kind == "spider_subtree") {
    check_keys(j, "set", {"kind", "legs", "max_radii"}, {"legs", "max_radii"});
    std::vector<int> legs;
    for (const auto& l : j.at("legs")) legs.push_back(l.get<int>());
    return ConvexSetDescriptor::spider_subtree(legs, get_vec(j.at("max_radii"), "max_radii"));
  }
  bad_config("unknown set kind '" + kind + "'");
}

// --- config parsing ---------------------------------------------------------

namespace {

const std::set<std::string> kKnownChecks = {
    "npc",          "convexity",        "slope_bound",
    "resolvent_contraction", "slope_monotone",  "consistency",
    "evi",          "distance_nonincreasing", "speed_slope",
    "half_order",   "dissipation",      "infimum_realization",
    "stationarity", "projection_obtuseness",  "weak_convergence",
    "weak_limits_in_convex", "weak_lsc", "minimizer_convergence"};

const std::set<std::string> kCheckParams = {
    "name",      "trials",      "tolerance", "box_radius", "tau",
    "sample_count", "witnesses", "pairs",    "slope_floor", "rel_tol",
    "t_max",     "eps_energy",  "eps_slope", "expected_residual_slope",
    "slope_radii", "set",       "targets",   "center_tol"};

}  // namespace

RunConfig parse_config(const Json& j) {
  check_keys(j, "config",
             {"schema_version", "seed", "space", "functional", "initial_points", "horizon",
              "n_per_unit", "n_list", "samples", "box_radius", "output_dir", "checks"},
             {"schema_version", "seed", "space"});
  RunConfig cfg;
  cfg.schema_version = j.at("schema_version").get<int>();
  if (cfg.schema_version != 1) bad_config("unsupported schema_version");
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.space = space_from_json(j.at("space"));
  if (j.contains("functional")) {
    cfg.functional = functional_from_json(j.at("functional"));
    try {
      cfg.functional->require_space(cfg.space);
    } catch (const std::domain_error& e) {
      bad_config(e.what());
    }
  }
  if (j.contains("initial_points"))
    for (const auto& p : j.at("initial_points"))
      cfg.initial_points.push_back(point_from_json(cfg.space, p));
  if (j.contains("horizon")) {
    cfg.horizon = get_num(j.at("horizon"), "horizon");
    if (!(cfg.horizon > 0.0)) bad_config("horizon must be > 0");
  }
  if (j.contains("n_per_unit")) {
    cfg.n_per_unit = j.at("n_per_unit").get<long>();
    if (cfg.n_per_unit < 1) bad_config("n_per_unit must be >= 1");
  }
  if (j.contains("n_list")) {
    for (const auto& n : j.at("n_list")) {
      cfg.n_list.push_back(n.get<long>());
      if (cfg.n_list.back() < 1) bad_config("n_list entries must be >= 1");
    }
  }
  if (j.contains("samples")) {
    cfg.samples = j.at("samples").get<long>();
    if (cfg.samples < 2) bad_config("samples must be >= 2");
  }
  if (j.contains("box_radius")) {
    cfg.box_radius = get_num(j.at("box_radius"), "box_radius");
    if (!(cfg.box_radius > 0.0)) bad_config("box_radius must be > 0");
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("checks")) {
    if (!j.at("checks").is_array()) bad_config("checks must be an array");
    for (const auto& c : j.at("checks")) {
      check_keys(c, "check", kCheckParams, {"name"});
      CheckSpec spec;
      spec.name = c.at("name").get<std::string>();
      if (!kKnownChecks.count(spec.name)) bad_config("unknown check '" + spec.name + "'");
      spec.params = c;
      cfg.checks.push_back(std::move(spec));
    }
  }

  // Normalized echo for the manifest.
  Json echo;
  echo["schema_version"] = cfg.schema_version;
  echo["seed"] = cfg.seed;
  echo["space"] = space_to_json(cfg.space);
  if (cfg.functional) echo["functional"] = functional_to_json(*cfg.functional);
  if (!cfg.initial_points.empty()) {
    Json pts = Json::array();
    for (const auto& p : cfg.initial_points) pts.push_back(point_to_json(cfg.space, p));
    echo["initial_points"] = std::move(pts);
  }
  echo["horizon"] = cfg.horizon;
  echo["n_per_unit"] = cfg.n_per_unit;
  if (!cfg.n_list.empty()) echo["n_list"] = cfg.n_list;
  echo["samples"] = cfg.samples;
  echo["box_radius"] = cfg.box_radius;
  echo["output_dir"] = cfg.output_dir;
  Json checks = Json::array();
  for (const auto& c : cfg.checks) checks.push_back(c.params);
  echo["checks"] = std::move(checks);
  cfg.echo = std::move(echo);
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad_config("cannot open config file " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    bad_config("config is not valid json: " + std::string(e.what()));
  }
  return parse_config(j);
}

// --- execution --------------------------------------------------------------

Json report_to_json(const CheckReport& report) {
  Json j;
  j["name"] = report.name;
  j["trials"] = report.trials;
  j["failures"] = report.failures;
  j["skipped"] = report.skipped;
  j["worst_violation"] = js_num(report.worst_violation);
  j["tolerance"] = js_num(report.tolerance);
  j["passed"] = report.passed;
  j["details"] = report.details;
  return j;
}

std::string trajectory_csv(const GeodesicSpace& space, const Trajectory& traj) {
  std::string out = "t";
  const int k = flat_size(space);
  for (int i = 0; i < k; ++i) out += ",c" + std::to_string(i);
  out += ",value,slope,step_distance\n";
  for (const auto& node : traj.nodes) {
    out += format_double(node.t);
    for (double c : flatten(space, node.point)) out += "," + format_double(c);
    out += "," + format_double(node.value);
    out += ",";
    if (node.slope) out += format_double(*node.slope);
    out += "," + format_double(node.step_distance);
    out += "\n";
  }
  return out;
}

Json trajectory_to_json(const GeodesicSpace& space, const Trajectory& traj) {
  Json j;
  j["scheme"] = traj.scheme == Scheme::minimizing_movement ? "minimizing_movement" : "smooth_ode";
  if (traj.scheme == Scheme::minimizing_movement) {
    j["tau"] = traj.tau;
    j["n_per_unit"] = traj.n_per_unit;
  } else {
    j["ode_tolerance"] = traj.ode_tolerance;
  }
  j["seed"] = traj.seed;
  j["certified"] = traj.certified;
  j["space"] = space_to_json(space);
  Json nodes = Json::array();
  for (const auto& node : traj.nodes) {
    Json n;
    n["t"] = node.t;
    n["step_index"] = node.step_index;
    n["point"] = point_to_json(space, node.point);
    n["value"] = node.value;
    if (node.slope) n["slope"] = *node.slope;
    n["step_distance"] = node.step_distance;
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  return j;
}

Json RunManifest::to_json() const {
  Json j;
  j["version"] = version;
  j["status"] = passed ? "pass" : "fail";
  j["config"] = config;
  Json reports = Json::array();
  for (const auto& o : outcomes) {
    Json r = report_to_json(o.report);
    if (!o.extra.is_null()) r["extra"] = o.extra;
    reports.push_back(std::move(r));
  }
  j["reports"] = std::move(reports);
  j["artifacts"] = artifacts;
  j["timings"] = Json{{"total_seconds", total_seconds}};
  return j;
}

namespace {

double param_num(const Json& params, const std::string& key, double fallback) {
  return params.contains(key) ? get_num(params.at(key), key) : fallback;
}

long param_int(const Json& params, const std::string& key, long fallback) {
  return params.contains(key) ? params.at(key).get<long>() : fallback;
}

const ConvexFunctional& need_functional(const RunConfig& cfg, const std::string& check) {
  if (!cfg.functional) bad_config("check '" + check + "' needs a functional");
  return *cfg.functional;
}

const SpacePoint& need_point(const RunConfig& cfg, std::size_t i, const std::string& check) {
  if (cfg.initial_points.size() <= i)
    bad_config("check '" + check + "' needs at least " + std::to_string(i + 1) +
               " initial point(s)");
  return cfg.initial_points[i];
}

}  // namespace

RunManifest run(const RunConfig& cfg, const std::string& output_root, bool force_trajectory) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.config = cfg.echo;
  manifest.version = version;
  manifest.run_dir = (fs::path(output_root) / cfg.output_dir).string();

  // One shared chain per run; built on first use.
  std::optional<Trajectory> traj;
  auto trajectory = [&]() -> const Trajectory& {
    if (!traj) {
      const auto& f = need_functional(cfg, "trajectory");
      traj = mm_trajectory(f, cfg.space, need_point(cfg, 0, "trajectory"), cfg.horizon,
                           cfg.samples, cfg.n_per_unit, true, cfg.seed);
    }
    return *traj;
  };
  auto sequence = [&]() {
    PointSequence seq;
    for (const auto& node : trajectory().nodes) seq.points.push_back(node.point);
    return seq;
  };

  for (std::size_t ci = 0; ci < cfg.checks.size(); ++ci) {
    const auto& spec = cfg.checks[ci];
    const Json& p = spec.params;
    const std::uint64_t seed = mix_seed(cfg.seed + 1000 + ci);
    CheckOutcome outcome;
    if (spec.name == "npc") {
      outcome.report =
          npc_certify(cfg.space, param_int(p, "trials", 1000), seed,
                      param_num(p, "box_radius", cfg.box_radius),
                      param_num(p, "tolerance", 1e-9));
    } else if (spec.name == "convexity") {
      outcome.report = convexity_certify(need_functional(cfg, spec.name), cfg.space,
                                         param_int(p, "trials", 1000), seed,
                                         param_num(p, "box_radius", cfg.box_radius),
                                         param_num(p, "tolerance", 1e-9));
    } else if (spec.name == "slope_bound") {
      outcome.report = slope_bound_check(need_functional(cfg, spec.name), cfg.space,
                                         param_int(p, "trials", 500), seed,
                                         param_num(p, "box_radius", cfg.box_radius));
    } else if (spec.name == "resolvent_contraction") {
      outcome.report = resolvent_contraction_check(
          need_functional(cfg, spec.name), cfg.space, param_int(p, "trials", 200),
          param_num(p, "tau", 0.5), seed, param_num(p, "box_radius", cfg.box_radius));
    } else if (spec.name == "slope_monotone") {
      outcome.report = slope_monotone_check(
          need_functional(cfg, spec.name), cfg.space, param_int(p, "trials", 200),
          param_num(p, "tau", 0.5), seed, param_num(p, "box_radius", cfg.box_radius));
    } else if (spec.name == "consistency") {
      if (cfg.n_list.empty()) bad_config("consistency needs n_list");
      const ConsistencyReport rep = consistency_report(
          need_functional(cfg, spec.name), cfg.space, need_point(cfg, 0, spec.name),
          cfg.horizon, cfg.n_list, param_int(p, "sample_count", 17));
      CheckReport r;
      r.name = "consistency";
      r.tolerance = 0.0;
      r.details = "errors must decrease in n; observed order within [0.9, 1.1] when defined";
      r.record(rep.errors_decreasing ? -1.0 : 1.0);
      if (rep.observed_order) {
        r.record(*rep.observed_order - 1.1);
        r.record(0.9 - *rep.observed_order);
      }
      outcome.report = r.finish();
      outcome.extra["n_values"] = rep.n_values;
      Json errs = Json::array();
      for (double e : rep.sup_errors) errs.push_back(e);
      outcome.extra["sup_errors"] = std::move(errs);
      if (rep.observed_order) outcome.extra["observed_order"] = *rep.observed_order;
    } else if (spec.name == "evi") {
      const auto& f = need_functional(cfg, spec.name);
      auto rng = make_rng(seed);
      const Trajectory& tr = trajectory();
      std::vector<SpacePoint> witnesses;
      const long n_wit = param_int(p, "witnesses", 20);
      for (long i = 0; i < n_wit; ++i)
        witnesses.push_back(random_point(cfg.space, rng, cfg.box_radius));
      std::vector<std::pair<double, double>> pairs;
      std::uniform_int_distribution<std::size_t> pick(0, tr.nodes.size() - 1);
      const long n_pairs = param_int(p, "pairs", 20);
      for (long i = 0; i < n_pairs; ++i) {
        auto a = pick(rng), b = pick(rng);
        if (a > b) std::swap(a, b);
        pairs.push_back({tr.nodes[a].t, tr.nodes[b].t - tr.nodes[a].t});
      }
      outcome.report = evi_check(tr, f, cfg.space, witnesses, pairs);
    } else if (spec.name == "distance_nonincreasing") {
      outcome.report = distance_nonincreasing_check(
          need_functional(cfg, spec.name), cfg.space, need_point(cfg, 0, spec.name),
          need_point(cfg, 1, spec.name), cfg.horizon, cfg.n_per_unit);
    } else if (spec.name == "speed_slope") {
      outcome.report = speed_slope_check(trajectory(), need_functional(cfg, spec.name),
                                         cfg.space, param_num(p, "slope_floor", 0.1),
                                         param_num(p, "rel_tol", 0.05));
    } else if (spec.name == "half_order") {
      outcome.report =
          half_order_distance_check(trajectory(), need_functional(cfg, spec.name), cfg.space);
    } else if (spec.name == "dissipation") {
      outcome.report = dissipation_check(trajectory(), need_functional(cfg, spec.name),
                                         cfg.space, param_num(p, "rel_tol", 0.02));
    } else if (spec.name == "infimum_realization") {
      InfimumRealizationOptions opts;
      opts.n_per_unit = cfg.n_per_unit;
      opts.eps_energy = param_num(p, "eps_energy", 1e-4);
      opts.eps_slope = param_num(p, "eps_slope", 1e-2);
      if (p.contains("expected_residual_slope"))
        opts.expected_residual_slope = get_num(p.at("expected_residual_slope"),
                                               "expected_residual_slope");
      if (p.contains("slope_radii")) opts.slope_radii = get_vec(p.at("slope_radii"), "slope_radii");
      outcome.report = infimum_realization_check(
          need_functional(cfg, spec.name), cfg.space, need_point(cfg, 0, spec.name),
          param_num(p, "t_max", 50.0), opts);
    } else if (spec.name == "stationarity") {
      outcome.report = stationarity_check(need_functional(cfg, spec.name), cfg.space,
                                          need_point(cfg, 0, spec.name));
    } else if (spec.name == "projection_obtuseness") {
      if (!p.contains("set")) bad_config("projection_obtuseness needs a set descriptor");
      const ConvexSetDescriptor set = set_from_json(cfg.space, p.at("set"));
      outcome.report = projection_obtuseness_check(cfg.space, set,
                                                   param_int(p, "trials", 500), seed,
                                                   param_num(p, "box_radius", cfg.box_radius));
    } else if (spec.name == "weak_convergence") {
      const auto& f = need_functional(cfg, spec.name);
      const PointSequence seq = sequence();
      const SpacePoint x =
          f.has_minimizer() ? *f.minimizer(cfg.space) : seq.points.back();
      std::vector<SpacePoint> targets;
      if (p.contains("targets")) {
        for (const auto& t : p.at("targets"))
          targets.push_back(point_from_json(cfg.space, t));
      } else {
        auto rng = make_rng(seed);
        for (int i = 0; i < 4; ++i) targets.push_back(random_point(cfg.space, rng, cfg.box_radius));
      }
      outcome.report =
          weak_convergence_check(cfg.space, seq, x, targets, param_num(p, "tolerance", 1e-3));
    } else if (spec.name == "weak_limits_in_convex") {
      if (!p.contains("set")) bad_config("weak_limits_in_convex needs a set descriptor");
      const ConvexSetDescriptor set = set_from_json(cfg.space, p.at("set"));
      outcome.report = weak_limits_in_convex_check(cfg.space, set, sequence(),
                                                   param_num(p, "tolerance", 1e-6));
    } else if (spec.name == "weak_lsc") {
      outcome.report = weak_lsc_check(need_functional(cfg, spec.name), cfg.space, sequence(),
                                      param_num(p, "tolerance", 1e-6));
    } else if (spec.name == "minimizer_convergence") {
      MinimizerConvergenceOptions opts;
      opts.n_per_unit = cfg.n_per_unit;
      opts.samples = cfg.samples;
      opts.value_tol = param_num(p, "tolerance", 1e-6);
      opts.center_tol = param_num(p, "center_tol", 1e-3);
      outcome.report = minimizer_convergence_check(
          need_functional(cfg, spec.name), cfg.space, need_point(cfg, 0, spec.name),
          param_num(p, "t_max", 50.0), opts);
    } else {
      bad_config("unknown check '" + spec.name + "'");
    }
    manifest.outcomes.push_back(std::move(outcome));
  }

  if (force_trajectory) trajectory();

  manifest.passed = true;
  for (const auto& o : manifest.outcomes) manifest.passed = manifest.passed && o.report.passed;

  Json reports = Json::array();
  for (const auto& o : manifest.outcomes) {
    Json r = report_to_json(o.report);
    if (!o.extra.is_null()) r["extra"] = o.extra;
    reports.push_back(std::move(r));
  }
  write_file_atomic(fs::path(manifest.run_dir) / "reports.json", reports.dump(2) + "\n");
  manifest.artifacts.push_back("reports.json");
  if (traj) {
    write_file_atomic(fs::path(manifest.run_dir) / "trajectory.csv",
                      trajectory_csv(cfg.space, *traj));
    write_file_atomic(fs::path(manifest.run_dir) / "trajectory.json",
                      trajectory_to_json(cfg.space, *traj).dump(2) + "\n");
    manifest.artifacts.push_back("trajectory.csv");
    manifest.artifacts.push_back("trajectory.json");
  }
  manifest.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_atomic(fs::path(manifest.run_dir) / "manifest.json",
                    manifest.to_json().dump(2) + "\n");
  manifest.artifacts.push_back("manifest.json");
  return manifest;
}

void export_run(const std::string& run_dir, const std::string& format) {
  const fs::path dir(run_dir);
  std::ifstream in(dir / "manifest.json");
  if (!in) bad_config("no manifest.json under " + run_dir);
  Json manifest;
  in >> manifest;
  if (format == "json") {
    write_file_atomic(dir / "reports_export.json", manifest.at("reports").dump(2) + "\n");
    return;
  }
  if (format == "csv") {
    std::string out = "name,trials,failures,skipped,worst_violation,tolerance,passed\n";
    for (const auto& r : manifest.at("reports")) {
      out += r.at("name").get<std::string>();
      out += "," + std::to_string(r.at("trials").get<long>());
      out += "," + std::to_string(r.at("failures").get<long>());
      out += "," + std::to_string(r.at("skipped").get<long>());
      const auto& wv = r.at("worst_violation");
      out += "," + (wv.is_number() ? format_double(wv.get<double>()) : wv.get<std::string>());
      const auto& tol = r.at("tolerance");
      out += "," + (tol.is_number() ? format_double(tol.get<double>()) : tol.get<std::string>());
      out += r.at("passed").get<bool>() ? ",1\n" : ",0\n";
    }
    write_file_atomic(dir / "reports_export.csv", out);
    return;
  }
  bad_config("unknown export format '" + format + "' (use csv or json)");
}

std::string default_output_root() {
  if (const char* env = std::getenv("NPCFLOW_OUT")) return env;
  return "runs";
}

}  // namespace npcflow
