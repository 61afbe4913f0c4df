#include "ehsrb/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "ehsrb/config.hpp"
#include "ehsrb/eht.hpp"
#include "ehsrb/errors.hpp"

#ifndef EHSRB_VERSION
#define EHSRB_VERSION "0.0.0"
#endif

namespace ehsrb {

namespace fs = std::filesystem;

namespace {

// Usage errors get their own type so they map to exit 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct CommandInfo {
  const char* name;
  const char* summary;
  // flag name -> dotted config key (or "" for flags handled by hand)
  std::vector<std::pair<const char*, const char*>> flags;
};

const std::vector<CommandInfo>& commands() {
  static const std::vector<CommandInfo> c = {
      {"simulate", "orbit of simulate.x0 with its rates, angles and cones (orbit.csv)",
       {{"n", "simulate.n"}, {"theta-bar", "eht.theta_bar"}}},
      {"eht-density", "EH1 / EH1' / EH2 statistics on seeded orbits (eht_report.json)",
       {{"n", "eht.n"}, {"q", ""}, {"theta-bar", "eht.theta_bar"}}},
      {"decompose", "admissible decomposition of the seed curve, return-time histogram and tail fit",
       {{"n", "curves.tail.points"}}},
      {"srb", "Cesaro measure histograms, marginals, Lyapunov spectrum, leaf diagnostics",
       {{"n", "srb.n"}, {"grid", "srb.grid"}}},
      {"oracle-check", "passage-flow laws and uniformity surrogates (oracle_report.json)",
       {{"n", "oracles.n_traces"}}},
      {"tail-fit", "return-time tail exponent, from --histogram or a fresh sample",
       {{"n", "curves.tail.points"}}},
      {"verify-conditions", "cone invariance, decomposition and partial-sum certificates",
       {{"n", "verify.c1_samples"}}},
  };
  return c;
}

const CommandInfo* find_command(const std::string& name) {
  for (const auto& c : commands())
    if (name == c.name) return &c;
  return nullptr;
}

bool has_flag(const CommandInfo& c, const std::string& f) {
  return std::any_of(c.flags.begin(), c.flags.end(), [&](const auto& p) { return f == p.first; });
}

const char* key_for(const CommandInfo& c, const std::string& f) {
  for (const auto& [name, key] : c.flags)
    if (f == name) return key;
  return "";
}

// Collects artifacts written by a run.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}
  void json(const std::string& name, const Json& j) { text(name, dump_json(j)); }
  void text(const std::string& name, const std::string& s) {
    write_text_file(dir_ / name, s);
    files_[name] = sha256_hex(s);
  }
  template <class F>
  void csv(const std::string& name, F&& writer) {
    std::ostringstream os;
    writer(os);
    text(name, os.str());
  }
  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> files_;
};

struct Context {
  const Json& cfg;
  const RunFlags& flags;
  Artifacts& art;
  std::ostream& out;
  std::uint64_t seed;
};

// Return false when a verification verdict is negative.
using Runner = std::function<bool(Context&)>;

Vec x0_from(const Json& cfg, int dim) {
  const auto v = cfg.at("simulate").at("x0").get<std::vector<double>>();
  if (static_cast<int>(v.size()) != dim)
    throw ConfigError("simulate.x0 must have " + std::to_string(dim) + " entries for this model");
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x(i) = v[i];
  return x;
}

Json tail_fit_json(const TailFit& f, double alpha) {
  return Json{{"exponent", f.exponent},
              {"ci_lo", f.ci_lo},
              {"ci_hi", f.ci_hi},
              {"t_min", f.t_min},
              {"t_max", f.t_max},
              {"bins", f.bins},
              {"occupied", f.occupied},
              {"slope", f.fit.slope},
              {"intercept", f.fit.intercept},
              {"target", 1.0 + 1.0 / alpha}};
}

IntHistogram mass_of(const IntHistogram& counts, double length, long total) {
  IntHistogram m;
  for (const auto& [t, c] : counts) m[t] = c * length / static_cast<double>(total);
  return m;
}

bool run_simulate(Context& x) {
  const System sys = system_from(x.cfg);
  const EhConfig e = eh_config_from(x.cfg);
  const long n = x.cfg.at("simulate").at("n").get<long>();
  if (n < 1) throw ConfigError("simulate.n must be >= 1");
  const Vec x0 = x0_from(x.cfg, sys.dim());
  const GlobalBounds gb = estimate_global_bounds(sys, e.bounds_samples, x.seed);
  const ConeField field(sys, cone_spec_from(x.cfg));
  OrbitLogOptions o;
  o.theta_bar = e.theta_bar;
  o.L2 = gb.L2;
  o.lattice = e.lattice;
  const OrbitLog log = orbit_log(field, x0, n, o);
  x.art.csv("orbit.csv", [&](std::ostream& os) { log.write_csv(os); });
  long in_z = 0;
  double mean = 0;
  for (std::size_t k = 0; k < log.size(); ++k) {
    in_z += log.in_z[k];
    mean += log.lambda[k];
  }
  mean /= static_cast<double>(log.size());
  x.art.json("orbit_summary.json", Json{{"n", n},
                                        {"L", gb.L},
                                        {"L1", gb.L1},
                                        {"L2", gb.L2},
                                        {"in_z_fraction", static_cast<double>(in_z) / static_cast<double>(n)},
                                        {"lambda_mean", mean}});
  x.out << "simulate: " << n << " steps, mean lambda " << format_double(mean) << "\n";
  return true;
}

bool run_eht(Context& x) {
  const System sys = system_from(x.cfg);
  EhConfig e = eh_config_from(x.cfg);
  if (x.flags.q) {
    if (*x.flags.q < 0) throw ConfigError("--q must be >= 0");
    e.q_list = {*x.flags.q};
  }
  const CurveConfig cc = curve_config_from(x.cfg);
  const GlobalBounds gb = estimate_global_bounds(sys, e.bounds_samples, x.seed);
  const ConeField field(sys, cone_spec_from(x.cfg));
  const CurveChain seeds = seed_chain(sys, cc, cc.seed_length, 2);
  std::mt19937_64 rng(x.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  OrbitLogOptions o;
  o.theta_bar = e.theta_bar;
  o.L2 = gb.L2;
  o.lattice = e.lattice;

  Json runs = Json::array();
  bool eh1 = true, eh1p = true, eh2 = true;
  for (int s = 0; s < e.seeds; ++s) {
    // stratified over the seed curve so the seeds are m_W-typical
    const double sigma = cc.seed_length * (s + U(rng)) / e.seeds;
    const Vec z0 = seeds.seed->eval(sigma).first;
    const OrbitLog log = orbit_log(field, z0, e.n, o);
    const EhReport rep = eh_statistics(log, e.lambda_bar, e.C, e.q_list, e.theta_bar_list);
    const auto& cp = rep.birkhoff_checkpoints;
    const double drift = std::abs(cp.back() - cp[cp.size() - 2]);
    const bool s1 = cp.back() > e.eh1_min_mean && cp[cp.size() - 2] > e.eh1_min_mean && drift <= e.eh1_max_drift;
    bool s1p = true;
    for (const auto& r : rep.eh1prime)
      if (r.q <= 20 && !(r.density_lower > e.eh1prime_min_lower)) s1p = false;
    // frequencies ordered by decreasing theta_bar must not increase
    std::vector<EhReport::ThetaRow> rows = rep.eh2;
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.theta_bar > b.theta_bar; });
    bool s2 = !rows.empty() && rows.back().freq < e.eh2_max_freq;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].freq > rows[i - 1].freq) s2 = false;
    Json j = rep.to_json();
    j["sigma"] = sigma;
    j["eh1_drift"] = drift;
    j["pass"] = {{"eh1", s1}, {"eh1prime", s1p}, {"eh2", s2}};
    runs.push_back(j);
    eh1 = eh1 && s1;
    eh1p = eh1p && s1p;
    eh2 = eh2 && s2;
  }
  x.art.json("eht_report.json",
             Json{{"bounds", {{"L", gb.L}, {"L1", gb.L1}, {"L2", gb.L2}}},
                  {"seeds", runs},
                  {"thresholds",
                   {{"eh1_min_mean", e.eh1_min_mean}, {"eh1_max_drift", e.eh1_max_drift},
                    {"eh1prime_min_lower", e.eh1prime_min_lower}, {"eh2_max_freq", e.eh2_max_freq}}},
                  {"pass", {{"eh1", eh1}, {"eh1prime", eh1p}, {"eh2", eh2}}}});
  x.out << "eht-density: " << e.seeds << " seeds, EH1 " << (eh1 ? "ok" : "FAIL") << ", EH1' "
        << (eh1p ? "ok" : "FAIL") << ", EH2 " << (eh2 ? "ok" : "FAIL") << "\n";
  return true;
}

void tail_artifacts(Context& x, const System& sys, const CurveConfig& cc, const CurveChain& chain) {
  long unresolved = 0;
  const IntHistogram h = return_time_histogram(sys, chain, cc.tail_points, x.seed,
                                               cc.decomposition.max_return, &unresolved);
  x.art.csv("tail_histogram.csv", [&](std::ostream& os) {
    write_histogram_csv(os, h, mass_of(h, chain.image_length(), cc.tail_points));
  });
  Json j;
  try {
    const TailFit f = return_time_tail_fit(h, cc.tail_t_min, cc.tail_t_max, cc.tail_bins_per_decade,
                                           cc.tail_min_occupied, cc.tail_min_bin_count);
    j = tail_fit_json(f, sys.spec().alpha);
    x.out << "tail exponent " << format_double(f.exponent) << " [" << format_double(f.ci_lo) << ", "
          << format_double(f.ci_hi) << "]\n";
  } catch (const StatisticsError& err) {
    j = Json{{"error", err.what()}};
    x.out << "tail fit: " << err.what() << "\n";
  }
  j["points"] = cc.tail_points;
  j["unresolved"] = unresolved;
  j["max_return"] = cc.decomposition.max_return;
  x.art.json("tail_fit.json", j);
}

bool run_decompose(Context& x) {
  const System sys = system_from(x.cfg);
  const CurveConfig cc = curve_config_from(x.cfg);
  const CurveChain chain = seed_chain(sys, cc, cc.seed_length, cc.seed_samples);
  const auto pieces = admissible_decomposition(sys, chain, cc.decomposition);
  Json ps = Json::array();
  double residual = 0;
  for (const auto& p : pieces) {
    ps.push_back(p.to_json());
    if (p.residual) residual += p.sigma_hi - p.sigma_lo;
  }
  x.art.json("pieces.json", Json{{"epsilon", cc.decomposition.epsilon},
                                 {"curve_length", chain.image_length()},
                                 {"residual_length", residual},
                                 {"pieces", ps}});
  x.out << "decompose: " << pieces.size() << " pieces\n";
  tail_artifacts(x, sys, cc, chain);
  return true;
}

bool run_srb(Context& x) {
  const System sys = system_from(x.cfg);
  const SrbConfig sc = srb_config_from(x.cfg);
  const CurveConfig cc = curve_config_from(x.cfg);
  const GridSpec grid{sys.dim(), sc.grid};
  const CurveChain chain = seed_chain(sys, cc, sc.seed_length, sc.points);
  const CesaroResult r = cesaro_measure(sys, chain, sc.n, grid, true);
  x.art.csv("mu_boxes.csv", [&](std::ostream& os) { r.measure.write_box_csv(os); });
  const Json prov = {{"n", sc.n}, {"points", sc.points}, {"seed_length", sc.seed_length},
                     {"kind", to_string(sys.kind())}, {"variant", to_string(sys.variant())}};
  x.art.json("mu_sidecar.json", r.measure.sidecar(prov));
  x.art.csv("marginals.csv", [&](std::ostream& os) { r.measure.write_marginals_csv(os, sc.marginal_bins); });
  x.art.json("moments.json", Json{{"test_family", TestFamily::name()},
                                  {"moments", r.moments},
                                  {"image_moments", r.image_moments},
                                  {"invariance_defect", r.invariance_defect},
                                  {"defect_bound", r.defect_bound},
                                  {"angular_ks", r.measure.angular_ks()}});
  const Vec x0 = x0_from(x.cfg, sys.dim());
  const LyapunovEstimate ly = lyapunov_exponents(sys, x0, sc.lyapunov_n, sc.burn_in);
  x.art.json("lyapunov.json", ly.to_json());
  PushforwardOptions po;
  po.h_max = cc.evolve.h_max;
  po.track_leaves = true;
  const EmpiricalMeasure leaf = pushforward_leaf_volume(sys, chain, std::min(sc.n, cc.steps), grid, po);
  x.art.json("leaf_report.json", leaf_absolute_continuity(leaf, sc.ratio_cap).to_json());
  x.out << "srb: n = " << sc.n << ", top exponent " << format_double(ly.exponents.front()) << "\n";
  return true;
}

bool run_oracles(Context& x) {
  const System sys = system_from(x.cfg);
  const OracleConfig oc = oracle_config_from(x.cfg);
  const PassageParams p = sys.spec().passage(sys.dim());
  const OdeOptions ode = ode_options_from(x.cfg);
  std::vector<LawResult> laws = run_residual_laws(p, oc, ode);
  for (auto& l : run_uniformity_laws(p, oc, ode)) laws.push_back(std::move(l));
  const Json rep = oracle_report(laws);
  x.art.json("oracle_report.json", rep);
  long failed = 0;
  for (const auto& l : laws) failed += !l.pass;
  x.out << "oracle-check: " << laws.size() - failed << "/" << laws.size() << " laws pass\n";
  return rep.at("all_pass").get<bool>();
}

IntHistogram read_histogram_csv(const fs::path& p) {
  std::istringstream is(read_text_file(p));
  std::string line;
  IntHistogram h;
  bool header = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("t,", 0) == 0) continue;
    }
    std::istringstream ls(line);
    std::string t, c;
    if (!std::getline(ls, t, ',') || !std::getline(ls, c, ','))
      throw ConfigError("histogram " + p.string() + ": expected t,count rows");
    try {
      h[std::stol(t)] += std::stod(c);
    } catch (const std::exception&) {
      throw ConfigError("histogram " + p.string() + ": bad row '" + line + "'");
    }
  }
  if (h.empty()) throw ConfigError("histogram " + p.string() + " is empty");
  return h;
}

bool run_tail_fit(Context& x) {
  const CurveConfig cc = curve_config_from(x.cfg);
  if (x.flags.histogram) {
    if (!fs::exists(*x.flags.histogram)) throw ConfigError("no such histogram: " + x.flags.histogram->string());
    const IntHistogram h = read_histogram_csv(*x.flags.histogram);
    const double alpha = system_spec_from(x.cfg).alpha;
    Json j;
    try {
      const TailFit f = return_time_tail_fit(h, cc.tail_t_min, cc.tail_t_max, cc.tail_bins_per_decade,
                                             cc.tail_min_occupied, cc.tail_min_bin_count);
      j = tail_fit_json(f, alpha);
      x.out << "tail exponent " << format_double(f.exponent) << "\n";
    } catch (const StatisticsError& err) {
      j = Json{{"error", err.what()}};
      x.out << "tail fit: " << err.what() << "\n";
    }
    j["input_sha256"] = sha256_file(*x.flags.histogram);
    x.art.json("tail_fit.json", j);
    return true;
  }
  const System sys = system_from(x.cfg);
  tail_artifacts(x, sys, cc, seed_chain(sys, cc, cc.seed_length, 2));
  return true;
}

bool run_verify(Context& x) {
  const System sys = system_from(x.cfg);
  const VerifyConfig vc = verify_config_from(x.cfg);
  const CurveConfig cc = curve_config_from(x.cfg);
  const ConeFieldSpec cs = cone_spec_from(x.cfg);
  const double alpha = sys.spec().alpha;
  const double eps = cc.decomposition.epsilon;

  const C1Report c1 = check_c1(sys, cs.half_angle, vc.c1_samples, x.seed, vc.c1_max_return, cs.boundary_rays);
  const bool c1_ok = c1.violations == 0;
  Json j1 = {{"samples", c1.samples},
             {"through_z", c1.through_z},
             {"unresolved", c1.unresolved},
             {"violations", c1.violations},
             {"worst_unstable_margin", c1.worst_unstable_margin},
             {"worst_stable_margin", c1.worst_stable_margin},
             {"min_angle", c1.min_angle},
             {"pass", c1_ok}};

  // C2: decompositions of parallel seed curves
  std::vector<CurveChain> chains;
  std::vector<std::vector<CurvePiece>> all;
  bool images_ok = true, lengths_ok = true, partition_ok = true;
  long n_pieces = 0;
  double residual = 0, total = 0;
  for (int i = 0; i < vc.curves; ++i) {
    chains.push_back(seed_chain(sys, cc, cc.seed_length, cc.seed_samples, i * vc.curve_spacing));
    all.push_back(admissible_decomposition(sys, chains.back(), cc.decomposition, i));
    const auto& ps = all.back();
    const auto& c = chains.back();
    if (std::abs(ps.front().sigma_lo - c.samples.front().sigma) > 1e-12 ||
        std::abs(ps.back().sigma_hi - c.samples.back().sigma) > 1e-12)
      partition_ok = false;
    for (std::size_t k = 0; k < ps.size(); ++k) {
      if (k > 0 && ps[k].sigma_lo != ps[k - 1].sigma_hi) partition_ok = false;
      total += ps[k].sigma_hi - ps[k].sigma_lo;
      if (ps[k].residual) {
        residual += ps[k].sigma_hi - ps[k].sigma_lo;
        continue;
      }
      ++n_pieces;
      images_ok = images_ok && ps[k].image_outside_z;
      if (ps[k].image_length < eps * (1 - 1e-9) || ps[k].image_length > 2 * eps * (1 + 1e-9)) lengths_ok = false;
    }
  }

  long unresolved = 0;
  const IntHistogram h = return_time_histogram(sys, chains.front(), vc.tail_points, x.seed,
                                               cc.decomposition.max_return, &unresolved);
  double mean_t = 0, mass = 0;
  for (const auto& [t, c] : h) {
    mean_t += static_cast<double>(t) * c;
    mass += c;
  }
  mean_t /= mass;
  Json jt;
  bool summable = false;
  try {
    const TailFit f = return_time_tail_fit(h, vc.tail_t_min, cc.tail_t_max, cc.tail_bins_per_decade,
                                           cc.tail_min_occupied, cc.tail_min_bin_count);
    jt = tail_fit_json(f, alpha);
    summable = f.ci_lo > 2.0;  // sum t p(t) < infinity
  } catch (const StatisticsError& err) {
    jt = Json{{"error", err.what()}};
  }
  jt["mean_return"] = mean_t;
  jt["summable"] = summable;

  // distortion on random pairs within random resolved pieces
  std::mt19937_64 rng(x.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t k = 0; k < all[i].size(); ++k)
      if (!all[i][k].residual) index.push_back({i, k});
  double q_a = 0, q_a2 = 0, max_log = 0;
  long pairs = 0;
  for (long s = 0; s < vc.distortion_pairs && !index.empty(); ++s) {
    const auto [i, k] = index[static_cast<std::size_t>(U(rng) * static_cast<double>(index.size())) % index.size()];
    const CurvePiece& pc = all[i][k];
    const double a = pc.sigma_lo + (pc.sigma_hi - pc.sigma_lo) * U(rng);
    const double b = pc.sigma_lo + (pc.sigma_hi - pc.sigma_lo) * U(rng);
    const DistortionSample d = distortion_ratio(sys, chains[i], pc, a, b);
    if (!(d.image_distance > 0)) continue;
    q_a = std::max(q_a, std::abs(d.log_ratio) / std::pow(d.image_distance, alpha));
    q_a2 = std::max(q_a2, std::abs(d.log_ratio) / std::pow(d.image_distance, alpha * alpha));
    max_log = std::max(max_log, std::abs(d.log_ratio));
    ++pairs;
  }
  const bool dist_ok = std::isfinite(q_a) && std::isfinite(q_a2);
  const bool c2_ok = images_ok && lengths_ok && partition_ok && summable && dist_ok;
  Json j2 = {{"curves", vc.curves},
             {"pieces", n_pieces},
             {"residual_fraction", residual / total},
             {"images_outside_z", images_ok},
             {"lengths_in_range", lengths_ok},
             {"partition", partition_ok},
             {"tail", jt},
             {"tail_unresolved", unresolved},
             {"distortion",
              {{"pairs", pairs}, {"Q_alpha", q_a}, {"Q_alpha_squared", q_a2}, {"max_abs_log_ratio", max_log}}},
             {"pass", c2_ok}};

  // C3: partial sums on an even subsample of the pieces
  const ConeField field(sys, cs);
  std::vector<CurvePiece> sub;
  const double stride = std::max(1.0, static_cast<double>(index.size()) / static_cast<double>(std::max<long>(1, vc.c3_pieces)));
  PartialSumReport c3;
  for (std::size_t i = 0; i < all.size(); ++i) {
    sub.clear();
    for (double f = 0; f < static_cast<double>(index.size()); f += stride) {
      const auto [ci, k] = index[static_cast<std::size_t>(f)];
      if (ci == i) sub.push_back(all[ci][k]);
    }
    const PartialSumReport r = piece_partial_sums(field, chains[i], sub);
    c3.pieces += r.pieces;
    c3.min_unstable = std::min(c3.min_unstable, r.min_unstable);
    c3.max_stable = std::max(c3.max_stable, r.max_stable);
  }
  c3.C_fit = std::max({-c3.min_unstable, c3.max_stable, 0.0}) + 0.0;
  const bool c3_ok = std::isfinite(c3.C_fit);
  Json j3 = c3.to_json();
  j3["pass"] = c3_ok;

  const ItineraryReport it = return_itineraries(sys, chains.front(), cc.itinerary, x.seed);
  const bool k_stable = it.K_fit > 0 && std::isfinite(it.K_fit) && it.K_first_half <= 2 * it.K_second_half &&
                        it.K_second_half <= 2 * it.K_first_half;
  Json ji = it.to_json();
  ji["K_stable"] = k_stable;
  ji["pass"] = k_stable && it.mean_ok;

  const bool all_ok = c1_ok && c2_ok && c3_ok && ji["pass"].get<bool>();
  x.art.json("conditions.json", Json{{"C1", j1}, {"C2", j2}, {"C3", j3}, {"returns", ji}, {"all_pass", all_ok}});
  x.out << "verify-conditions: C1 " << (c1_ok ? "ok" : "FAIL") << ", C2 " << (c2_ok ? "ok" : "FAIL") << ", C3 "
        << (c3_ok ? "ok" : "FAIL") << ", returns " << (ji["pass"].get<bool>() ? "ok" : "FAIL") << "\n";
  return all_ok;
}

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> r = {
      {"simulate", run_simulate},       {"eht-density", run_eht},   {"decompose", run_decompose},
      {"srb", run_srb},                 {"oracle-check", run_oracles}, {"tail-fit", run_tail_fit},
      {"verify-conditions", run_verify}};
  return r;
}

void check_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".ehsrb_probe";
  {
    std::ofstream f(probe);
    if (!f || !(f << "x") || !f.flush()) throw Error("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

}  // namespace

Json RunFlags::to_json() const {
  Json j = Json::object();
  if (config) j["config"] = config->string();
  if (seed) j["seed"] = *seed;
  if (threads) j["threads"] = *threads;
  j["out"] = out.string();
  if (n) j["n"] = *n;
  if (q) j["q"] = *q;
  if (theta_bar) j["theta_bar"] = *theta_bar;
  if (alpha) j["alpha"] = *alpha;
  if (grid) j["grid"] = *grid;
  if (histogram) j["histogram"] = histogram->string();
  j["resume"] = resume;
  return j;
}

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : commands()) v.push_back(c.name);
    return v;
  }();
  return names;
}

std::string usage_text() {
  std::ostringstream os;
  os << "usage: ehsrb <subcommand> [--config PATH] [--seed N] [--threads N] [--out DIR] [--resume]\n"
        "                        [--n N] [--q Q] [--theta-bar X] [--alpha A] [--grid G] [--histogram CSV]\n\n"
        "subcommands:\n";
  for (const auto& c : commands()) {
    os << "  " << c.name;
    for (std::size_t i = std::string(c.name).size(); i < 19; ++i) os << ' ';
    os << c.summary << "\n";
  }
  os << "\nexit codes: 0 ok, 1 verification failed, 2 usage, 3 config, 4 output dir, 5 resume mismatch, 6 runtime\n";
  return os.str();
}

std::string tool_version() { return EHSRB_VERSION; }

Json effective_config(const std::string& name, const RunFlags& f) {
  const CommandInfo* c = find_command(name);
  if (!c) throw UsageError("unknown subcommand: " + name);
  Json cfg = f.config ? load_config(*f.config) : default_config();
  if (f.seed) set_config_key(cfg, "run.seed", Json(*f.seed));
  if (f.threads) {
    if (*f.threads < 1) throw ConfigError("--threads must be >= 1");
    set_config_key(cfg, "run.threads", Json(*f.threads));
  }
  if (f.alpha) set_config_key(cfg, "system.alpha", Json(*f.alpha));
  auto apply = [&](const char* flag, bool given, const Json& v) {
    if (!given) return;
    if (!has_flag(*c, flag)) throw UsageError(std::string("--") + flag + " is not accepted by " + name);
    const std::string key = key_for(*c, flag);
    if (!key.empty()) set_config_key(cfg, key, v);
  };
  apply("n", f.n.has_value(), f.n ? Json(*f.n) : Json());
  apply("q", f.q.has_value(), f.q ? Json(*f.q) : Json());
  apply("theta-bar", f.theta_bar.has_value(), f.theta_bar ? Json(*f.theta_bar) : Json());
  apply("grid", f.grid.has_value(), f.grid ? Json(*f.grid) : Json());
  if (f.histogram && name != "tail-fit") throw UsageError("--histogram is only accepted by tail-fit");
  if (f.q) set_config_key(cfg, "eht.q_list", Json::array({*f.q}));
  return cfg;
}

std::string run_digest(const std::string& name, const Json& config) {
  return sha256_hex(dump_json(Json{{"command", name}, {"config", config}, {"tool_version", tool_version()}}));
}

int run_subcommand(const std::string& name, const RunFlags& flags, std::ostream& out, std::ostream& err) {
  const auto it = runners().find(name);
  if (it == runners().end()) {
    err << "ehsrb: unknown subcommand '" << name << "'\n\n" << usage_text();
    return kExitUsage;
  }
  Json cfg;
  try {
    cfg = effective_config(name, flags);
    // fail fast on invalid sections shared by every subcommand
    system_spec_from(cfg);
    ode_options_from(cfg);
  } catch (const UsageError& e) {
    err << "ehsrb: " << e.what() << "\n\n" << usage_text();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "ehsrb: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "ehsrb: config error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string digest = run_digest(name, cfg);
  const fs::path manifest_path = flags.out / "manifest.json";
  if (flags.resume && fs::exists(manifest_path)) {
    Json old;
    try {
      old = Json::parse(read_text_file(manifest_path));
    } catch (const std::exception& e) {
      err << "ehsrb: unreadable manifest " << manifest_path.string() << ": " << e.what() << "\n";
      return kExitResumeMismatch;
    }
    if (old.value("digest", std::string()) != digest) {
      err << "ehsrb: --resume: " << manifest_path.string() << " belongs to a different run ("
          << old.value("digest", std::string("?")) << " != " << digest << "); refusing to overwrite\n";
      return kExitResumeMismatch;
    }
    bool complete = old.contains("outputs") && old.value("complete", false);
    if (complete)
      for (const auto& [file, sha] : old["outputs"].items()) {
        const fs::path p = flags.out / file;
        if (!fs::exists(p) || sha256_file(p) != sha.get<std::string>()) complete = false;
      }
    if (complete) {
      out << name << ": up to date (" << digest.substr(0, 12) << ")\n";
      return old.value("verdict", true) ? kExitOk : kExitCheckFailed;
    }
  }

  try {
    check_writable(flags.out);
  } catch (const Error& e) {
    err << "ehsrb: " << e.what() << "\n";
    return kExitOutput;
  }

  const std::uint64_t seed = cfg.at("run").at("seed").get<std::uint64_t>();
  Artifacts art(flags.out);
  Context ctx{cfg, flags, art, out, seed};
  const auto t0 = std::chrono::steady_clock::now();
  bool verdict = false;
  int code = kExitOk;
  try {
    verdict = it->second(ctx);
    code = verdict ? kExitOk : kExitCheckFailed;
  } catch (const ConfigError& e) {
    err << "ehsrb: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "ehsrb: " << name << " failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json outputs = Json::object();
  for (const auto& [file, sha] : art.files()) outputs[file] = sha;
  const Json manifest = {{"command", name},
                         {"flags", flags.to_json()},
                         {"seed", seed},
                         {"threads", cfg.at("run").at("threads")},
                         {"tool_version", tool_version()},
                         {"spec", cfg.at("system")},
                         {"config", cfg},
                         {"digest", digest},
                         {"outputs", outputs},
                         {"verdict", verdict},
                         {"complete", true},
                         {"wall_time_s", wall}};
  try {
    write_json_file(manifest_path, manifest);
  } catch (const std::exception& e) {
    err << "ehsrb: " << e.what() << "\n";
    return kExitOutput;
  }
  return code;
}

}  // namespace ehsrb
