#include "ehsrb/config.hpp"

#include <cmath>

#include "ehsrb/errors.hpp"

namespace ehsrb {

Json default_config() {
  const SystemSpec s;
  const OdeOptions o;
  const ConeFieldSpec k;
  const EhConfig e;
  const CurveConfig c;
  const SrbConfig r;
  const OracleConfig q;
  const VerifyConfig v;
  return Json{
      {"system",
       {{"gamma", s.gamma}, {"beta", s.beta}, {"alpha", s.alpha}, {"r0", s.r0}, {"r1", s.r1},
        {"blend_width", s.blend_width}, {"base_expansion", s.base_expansion},
        {"contraction", s.contraction}, {"offset", s.offset}}},
      {"model", {{"kind", "solenoid"}, {"variant", "slowed"}}},
      {"integrator", {{"atol", o.atol}, {"rtol", o.rtol}, {"max_steps", o.max_steps}}},
      {"cones",
       {{"half_angle", k.half_angle}, {"lattice", k.lattice}, {"boundary_rays", k.boundary_rays},
        {"max_backward", k.max_backward}}},
      {"run", {{"seed", 1}, {"threads", 1}}},
      {"simulate", {{"n", 10000}, {"x0", {1.0, 0.1, 0.05}}}},
      {"eht",
       {{"n", e.n}, {"lambda_bar", e.lambda_bar}, {"C", e.C}, {"theta_bar", e.theta_bar},
        {"lattice", e.lattice}, {"q_list", {1, 5, 10, 20}},
        {"theta_bar_list", {0.4, 0.2, 0.1, 0.05, 0.02, 0.01}}, {"bounds_samples", e.bounds_samples},
        {"seeds", e.seeds},
        {"thresholds",
         {{"eh1_min_mean", e.eh1_min_mean}, {"eh1prime_min_lower", e.eh1prime_min_lower},
          {"eh2_max_freq", e.eh2_max_freq}, {"eh1_max_drift", e.eh1_max_drift}}}}},
      {"curves",
       {{"seed_length", c.seed_length}, {"seed_samples", c.seed_samples}, {"steps", c.steps},
        {"h_max", c.evolve.h_max}, {"max_samples", c.evolve.max_samples},
        {"gamma_bar", c.caps.gamma_bar}, {"kappa_bar", c.caps.kappa_bar}, {"r_bar", c.caps.r_bar},
        {"holder_stencil", c.caps.holder_stencil}, {"seed_theta", c.seed_theta}, {"seed_y", c.seed_y},
        {"itinerary",
         {{"n", c.itinerary.n_itineraries}, {"length", c.itinerary.length},
          {"max_return", c.itinerary.max_return}, {"window", c.itinerary.window},
          {"mean_slack", c.itinerary.mean_slack}, {"min_count", c.itinerary.min_count}}},
        {"decomposition",
         {{"epsilon", c.decomposition.epsilon}, {"holder_L", c.decomposition.holder_L},
          {"max_return", c.decomposition.max_return}, {"merge_cap", c.decomposition.merge_cap},
          {"boundary_tol", c.decomposition.boundary_tol},
          {"image_samples", c.decomposition.image_samples}, {"h_max", c.decomposition.h_max},
          {"max_resolved_tau", c.decomposition.max_resolved_tau}}},
        {"tail",
         {{"points", c.tail_points}, {"t_min", c.tail_t_min}, {"t_max", c.tail_t_max},
          {"bins_per_decade", c.tail_bins_per_decade}, {"min_occupied", c.tail_min_occupied},
          {"min_bin_count", c.tail_min_bin_count}}}}},
      {"srb",
       {{"n", r.n}, {"grid", r.grid}, {"points", r.points}, {"seed_length", r.seed_length},
        {"lyapunov_n", r.lyapunov_n}, {"burn_in", r.burn_in}, {"ratio_cap", r.ratio_cap},
        {"marginal_bins", r.marginal_bins}, {"test_family", TestFamilyName}}},
      {"verify",
       {{"c1_samples", v.c1_samples}, {"c1_max_return", v.c1_max_return}, {"curves", v.curves},
        {"curve_spacing", v.curve_spacing}, {"tail_points", v.tail_points},
        {"distortion_pairs", v.distortion_pairs}, {"tail_t_min", v.tail_t_min},
        {"c3_pieces", v.c3_pieces}}},
      {"oracles",
       {{"n_traces", q.n_traces}, {"sample_dt", q.sample_dt}, {"fine_dt", q.fine_dt},
        {"T_lo", q.T_lo}, {"T_hi", q.T_hi}, {"kappa", q.kappa}, {"floor_factor", q.floor_factor},
        {"tan_tol", q.tan_tol}, {"radial_tol", q.radial_tol}, {"identity_tol", q.identity_tol},
        {"T0_bins", q.T0_bins}, {"bin_halfwidth", q.bin_halfwidth}, {"batches", q.batches},
        {"per_batch", q.per_batch}, {"transient_ratio", q.transient_ratio},
        {"pair_image_gap", q.pair_image_gap}}}};
}

void merge_config(Json& base, const Json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw ConfigError("config" + (path.empty() ? "" : " section " + path) + " must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
    Json& b = base[it.key()];
    const Json& v = it.value();
    if (b.is_object()) {
      merge_config(b, v, key);
    } else if (b.is_number_float()) {
      if (!v.is_number()) throw ConfigError("config key " + key + " must be a number");
      b = v.get<double>();
    } else if (b.is_number_integer()) {
      if (!v.is_number_integer()) throw ConfigError("config key " + key + " must be an integer");
      b = v;
    } else if (b.type() != v.type()) {
      throw ConfigError("config key " + key + " has the wrong type");
    } else {
      b = v;
    }
  }
}

Json load_config(const std::filesystem::path& file) {
  Json cfg = default_config();
  Json over;
  try {
    over = Json::parse(read_text_file(file));
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }
  merge_config(cfg, over);
  return cfg;
}

void set_config_key(Json& cfg, const std::string& dotted, const Json& value) {
  Json overlay = value;
  std::string rest = dotted;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) overlay = Json{{*it, overlay}};
  merge_config(cfg, overlay);
}

namespace {

template <class T>
T get(const Json& cfg, const char* section, const char* key) {
  try {
    return cfg.at(section).at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key ") + section + "." + key + ": " + e.what());
  }
}

template <class T>
T get(const Json& cfg, const char* section, const char* sub, const char* key) {
  try {
    return cfg.at(section).at(sub).at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key ") + section + "." + sub + "." + key + ": " + e.what());
  }
}

void positive(double v, const char* name) {
  if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
}

}  // namespace

SystemSpec system_spec_from(const Json& cfg) {
  SystemSpec s;
  s.gamma = get<double>(cfg, "system", "gamma");
  s.beta = get<double>(cfg, "system", "beta");
  s.alpha = get<double>(cfg, "system", "alpha");
  s.r0 = get<double>(cfg, "system", "r0");
  s.r1 = get<double>(cfg, "system", "r1");
  s.blend_width = get<double>(cfg, "system", "blend_width");
  s.base_expansion = get<int>(cfg, "system", "base_expansion");
  s.contraction = get<double>(cfg, "system", "contraction");
  s.offset = get<double>(cfg, "system", "offset");
  s.validate();
  return s;
}

ModelKind model_kind_from(const Json& cfg) {
  const auto k = get<std::string>(cfg, "model", "kind");
  if (k == "solenoid") return ModelKind::kSolenoid;
  if (k == "local") return ModelKind::kLocal;
  throw ConfigError("model.kind must be \"solenoid\" or \"local\"");
}

MapVariant map_variant_from(const Json& cfg) {
  const auto v = get<std::string>(cfg, "model", "variant");
  if (v == "slowed") return MapVariant::kSlowed;
  if (v == "base") return MapVariant::kBase;
  throw ConfigError("model.variant must be \"slowed\" or \"base\"");
}

OdeOptions ode_options_from(const Json& cfg) {
  OdeOptions o;
  o.atol = get<double>(cfg, "integrator", "atol");
  o.rtol = get<double>(cfg, "integrator", "rtol");
  o.max_steps = get<std::size_t>(cfg, "integrator", "max_steps");
  positive(o.atol, "integrator.atol");
  positive(o.rtol, "integrator.rtol");
  return o;
}

ConeFieldSpec cone_spec_from(const Json& cfg) {
  ConeFieldSpec k;
  k.half_angle = get<double>(cfg, "cones", "half_angle");
  k.lattice = get<int>(cfg, "cones", "lattice");
  k.boundary_rays = get<int>(cfg, "cones", "boundary_rays");
  k.max_backward = get<int>(cfg, "cones", "max_backward");
  if (!(k.half_angle > 0 && k.half_angle < kPi / 4)) throw ConfigError("cones.half_angle must lie in (0, pi/4)");
  if (k.lattice < 8 || k.boundary_rays < 8) throw ConfigError("cones.lattice and cones.boundary_rays must be >= 8");
  return k;
}

EhConfig eh_config_from(const Json& cfg) {
  EhConfig e;
  e.n = get<long>(cfg, "eht", "n");
  e.lambda_bar = get<double>(cfg, "eht", "lambda_bar");
  e.C = get<double>(cfg, "eht", "C");
  e.theta_bar = get<double>(cfg, "eht", "theta_bar");
  e.lattice = get<int>(cfg, "eht", "lattice");
  e.q_list = get<std::vector<int>>(cfg, "eht", "q_list");
  e.theta_bar_list = get<std::vector<double>>(cfg, "eht", "theta_bar_list");
  e.bounds_samples = get<long>(cfg, "eht", "bounds_samples");
  e.seeds = get<int>(cfg, "eht", "seeds");
  e.eh1_min_mean = get<double>(cfg, "eht", "thresholds", "eh1_min_mean");
  e.eh1prime_min_lower = get<double>(cfg, "eht", "thresholds", "eh1prime_min_lower");
  e.eh2_max_freq = get<double>(cfg, "eht", "thresholds", "eh2_max_freq");
  e.eh1_max_drift = get<double>(cfg, "eht", "thresholds", "eh1_max_drift");
  if (e.n < 1) throw ConfigError("eht.n must be >= 1");
  positive(e.lambda_bar, "eht.lambda_bar");
  positive(e.C, "eht.C");
  positive(e.theta_bar, "eht.theta_bar");
  if (e.seeds < 1) throw ConfigError("eht.seeds must be >= 1");
  for (int q : e.q_list)
    if (q < 0) throw ConfigError("eht.q_list entries must be >= 0");
  return e;
}

CurveConfig curve_config_from(const Json& cfg) {
  CurveConfig c;
  c.seed_length = get<double>(cfg, "curves", "seed_length");
  c.seed_samples = get<std::size_t>(cfg, "curves", "seed_samples");
  c.steps = get<long>(cfg, "curves", "steps");
  c.evolve.h_max = get<double>(cfg, "curves", "h_max");
  c.evolve.max_samples = get<std::size_t>(cfg, "curves", "max_samples");
  c.caps.gamma_bar = get<double>(cfg, "curves", "gamma_bar");
  c.caps.kappa_bar = get<double>(cfg, "curves", "kappa_bar");
  c.caps.r_bar = get<double>(cfg, "curves", "r_bar");
  c.caps.holder_stencil = get<int>(cfg, "curves", "holder_stencil");
  auto& d = c.decomposition;
  d.epsilon = get<double>(cfg, "curves", "decomposition", "epsilon");
  d.holder_L = get<double>(cfg, "curves", "decomposition", "holder_L");
  d.max_return = get<long>(cfg, "curves", "decomposition", "max_return");
  d.merge_cap = get<int>(cfg, "curves", "decomposition", "merge_cap");
  d.boundary_tol = get<double>(cfg, "curves", "decomposition", "boundary_tol");
  d.image_samples = get<std::size_t>(cfg, "curves", "decomposition", "image_samples");
  d.h_max = get<double>(cfg, "curves", "decomposition", "h_max");
  d.max_resolved_tau = get<long>(cfg, "curves", "decomposition", "max_resolved_tau");
  d.cone_half_angle = get<double>(cfg, "cones", "half_angle");
  c.tail_points = get<long>(cfg, "curves", "tail", "points");
  c.tail_t_min = get<double>(cfg, "curves", "tail", "t_min");
  c.tail_t_max = get<double>(cfg, "curves", "tail", "t_max");
  c.tail_bins_per_decade = get<int>(cfg, "curves", "tail", "bins_per_decade");
  c.tail_min_occupied = get<long>(cfg, "curves", "tail", "min_occupied");
  c.tail_min_bin_count = get<double>(cfg, "curves", "tail", "min_bin_count");
  c.seed_theta = get<double>(cfg, "curves", "seed_theta");
  c.seed_y = get<double>(cfg, "curves", "seed_y");
  auto& it = c.itinerary;
  it.n_itineraries = get<long>(cfg, "curves", "itinerary", "n");
  it.length = get<long>(cfg, "curves", "itinerary", "length");
  it.max_return = get<long>(cfg, "curves", "itinerary", "max_return");
  it.window = get<long>(cfg, "curves", "itinerary", "window");
  it.mean_slack = get<double>(cfg, "curves", "itinerary", "mean_slack");
  it.min_count = get<double>(cfg, "curves", "itinerary", "min_count");
  if (it.n_itineraries < 1 || it.length < 2 || it.window < 1)
    throw ConfigError("curves.itinerary: need n >= 1, length >= 2, window >= 1");
  positive(c.seed_length, "curves.seed_length");
  positive(c.evolve.h_max, "curves.h_max");
  positive(d.epsilon, "curves.decomposition.epsilon");
  if (c.seed_samples < 2) throw ConfigError("curves.seed_samples must be >= 2");
  if (c.steps < 0) throw ConfigError("curves.steps must be >= 0");
  if (c.tail_points < 1) throw ConfigError("curves.tail.points must be >= 1");
  return c;
}

SrbConfig srb_config_from(const Json& cfg) {
  SrbConfig r;
  r.n = get<long>(cfg, "srb", "n");
  r.grid = get<int>(cfg, "srb", "grid");
  r.points = get<std::size_t>(cfg, "srb", "points");
  r.seed_length = get<double>(cfg, "srb", "seed_length");
  r.lyapunov_n = get<long>(cfg, "srb", "lyapunov_n");
  r.burn_in = get<long>(cfg, "srb", "burn_in");
  r.ratio_cap = get<double>(cfg, "srb", "ratio_cap");
  r.marginal_bins = get<int>(cfg, "srb", "marginal_bins");
  if (get<std::string>(cfg, "srb", "test_family") != TestFamilyName)
    throw ConfigError(std::string("srb.test_family must be \"") + TestFamilyName + "\"");
  if (r.n < 1) throw ConfigError("srb.n must be >= 1");
  if (r.grid < 1 || r.grid > 4096) throw ConfigError("srb.grid must lie in [1, 4096]");
  if (r.points < 2) throw ConfigError("srb.points must be >= 2");
  positive(r.seed_length, "srb.seed_length");
  return r;
}

OracleConfig oracle_config_from(const Json& cfg) {
  OracleConfig q;
  q.n_traces = get<long>(cfg, "oracles", "n_traces");
  q.seed = get<unsigned long long>(cfg, "run", "seed");
  q.sample_dt = get<double>(cfg, "oracles", "sample_dt");
  q.fine_dt = get<double>(cfg, "oracles", "fine_dt");
  q.T_lo = get<double>(cfg, "oracles", "T_lo");
  q.T_hi = get<double>(cfg, "oracles", "T_hi");
  q.kappa = get<double>(cfg, "oracles", "kappa");
  q.floor_factor = get<double>(cfg, "oracles", "floor_factor");
  q.tan_tol = get<double>(cfg, "oracles", "tan_tol");
  q.radial_tol = get<double>(cfg, "oracles", "radial_tol");
  q.identity_tol = get<double>(cfg, "oracles", "identity_tol");
  q.T0_bins = get<std::vector<double>>(cfg, "oracles", "T0_bins");
  q.bin_halfwidth = get<double>(cfg, "oracles", "bin_halfwidth");
  q.batches = get<int>(cfg, "oracles", "batches");
  q.per_batch = get<int>(cfg, "oracles", "per_batch");
  q.transient_ratio = get<double>(cfg, "oracles", "transient_ratio");
  q.pair_image_gap = get<double>(cfg, "oracles", "pair_image_gap");
  if (q.n_traces < 1) throw ConfigError("oracles.n_traces must be >= 1");
  if (!(q.T_lo > 0 && q.T_hi > q.T_lo)) throw ConfigError("oracles.T_lo, T_hi must satisfy 0 < T_lo < T_hi");
  if (!(q.kappa > 0 && q.kappa < 1)) throw ConfigError("oracles.kappa must lie in (0, 1)");
  if (q.T0_bins.size() < 2 && q.batches * static_cast<long>(q.T0_bins.size()) < 3)
    throw ConfigError("oracles: need at least 3 regression points");
  positive(q.sample_dt, "oracles.sample_dt");
  positive(q.fine_dt, "oracles.fine_dt");
  return q;
}

VerifyConfig verify_config_from(const Json& cfg) {
  VerifyConfig v;
  v.c1_samples = get<long>(cfg, "verify", "c1_samples");
  v.c1_max_return = get<long>(cfg, "verify", "c1_max_return");
  v.curves = get<int>(cfg, "verify", "curves");
  v.curve_spacing = get<double>(cfg, "verify", "curve_spacing");
  v.tail_points = get<long>(cfg, "verify", "tail_points");
  v.distortion_pairs = get<long>(cfg, "verify", "distortion_pairs");
  v.tail_t_min = get<double>(cfg, "verify", "tail_t_min");
  v.c3_pieces = get<long>(cfg, "verify", "c3_pieces");
  if (v.c1_samples < 1 || v.curves < 1 || v.tail_points < 1 || v.distortion_pairs < 0)
    throw ConfigError("verify: sample counts must be positive");
  return v;
}

CurveChain seed_chain(const System& sys, const CurveConfig& c, double length, std::size_t samples,
                      double shift) {
  Vec a = Vec::Zero(sys.dim());
  a(0) = c.seed_theta;
  a(1) = c.seed_y + shift;
  Vec dir = Vec::Zero(sys.dim());
  dir(0) = 1.0;
  const Vec start = sys.from_local(a);
  if (!sys.in_trapping_region(start)) throw ConfigError("seed curve starts outside the trapping region");
  return make_chain(SeedCurve::segment(start, dir, length), 0.0, length, samples);
}

System system_from(const Json& cfg) {
  return System(system_spec_from(cfg), model_kind_from(cfg), map_variant_from(cfg), ode_options_from(cfg));
}

}  // namespace ehsrb
