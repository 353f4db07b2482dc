#pragma once
// Run configuration: INI text (key = value, [sections]) read with
// boost::property_tree.  Unknown sections or keys are rejected.  The resolved
// form lists every key with round-trip precision, so feeding it back
// reproduces the run.
//
//   [potential]  family = none | square_well | gaussian | two_well
//                c, c2, radius, radius2, width
//   [spectral]   max_ell, N, order, lambda1, tol, R_out
//   [evolve]     multiplier, mass, channels, born, times, pairs, filon_order, lambda_min, rel_tol
//   [fit]        model = auto | comma list of rate names, weight = none | log_plus | bracket_half,
//                pair, series
//   [tune]       channel, count, c_max, step
//   [run]        seed, jobs
//
// times: "logspace A B N" or a comma list.  pairs: "r r' cos; r r' cos; ...".

#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "decayfit.hpp"
#include "evolution.hpp"
#include "spectral.hpp"

namespace lowdisp {

struct RunConfig {
  bool free = false;  // family = none: V = 0
  SpectralConfig spectral;
  Multiplier multiplier;
  int channels = 2;
  int born = -1;
  std::string times_spec = "logspace 1e3 1e7 13";
  std::vector<double> times;
  std::vector<RadialPair> pairs{{0.5, 0.7, 1.0}};
  FilonConfig quad;
  std::string fit_model = "auto";
  SpatialWeight weight = SpatialWeight::none;
  int fit_pair = 0;
  std::string fit_series;  // CSV to fit; empty: evolve first
  int tune_channel = 0, tune_count = 1;
  double tune_c_max = 200, tune_step = 0.25;
  unsigned long seed = 2024;
  int jobs = 1;
};

namespace detail {

// shortest text that reads back to the same double
inline std::string fmt(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    auto a = cur.find_first_not_of(" \t"), b = cur.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(cur.substr(a, b - a + 1));
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " is not a number: '" + s + "'");
  }
}

inline std::vector<double> parse_times(const std::string& spec) {
  auto w = split(spec, ' ');
  if (!w.empty() && w[0] == "logspace") {
    if (w.size() != 4) throw ConfigError("config: times = logspace A B N");
    int n = static_cast<int>(to_double("times", w[3]));
    if (n < 2) throw ConfigError("config: logspace needs N >= 2");
    return logspace(to_double("times", w[1]), to_double("times", w[2]), n);
  }
  std::vector<double> t;
  for (const auto& s : split(spec, ',')) t.push_back(to_double("times", s));
  if (t.empty()) throw ConfigError("config: empty time grid");
  return t;
}

inline std::vector<RadialPair> parse_pairs(const std::string& spec) {
  std::vector<RadialPair> out;
  for (const auto& item : split(spec, ';')) {
    auto w = split(item, ' ');
    if (w.size() != 3) throw ConfigError("config: pairs are 'r r' cos' triples separated by ';'");
    out.push_back({to_double("pairs", w[0]), to_double("pairs", w[1]), to_double("pairs", w[2])});
  }
  if (out.empty()) throw ConfigError("config: empty pair grid");
  return out;
}

inline std::vector<Rate> parse_rates(const std::string& spec) {
  static const std::vector<Rate> all{Rate::one,      Rate::inv_log, Rate::inv_t, Rate::inv_tlog,
                                     Rate::inv_tlog2, Rate::t_m32,  Rate::t_m2};
  std::vector<Rate> out;
  for (const auto& s : split(spec, ',')) {
    auto it = std::find_if(all.begin(), all.end(), [&](Rate r) { return s == rate_name(r); });
    if (it == all.end()) throw ConfigError("config: unknown rate '" + s + "'");
    out.push_back(*it);
  }
  return out;
}

inline SpatialWeight parse_weight(const std::string& s) {
  if (s == "none") return SpatialWeight::none;
  if (s == "log_plus") return SpatialWeight::log_plus;
  if (s == "bracket_half") return SpatialWeight::bracket_half;
  throw ConfigError("config: unknown weight '" + s + "'");
}

inline const char* weight_name(SpatialWeight w) {
  switch (w) {
    case SpatialWeight::none: return "none";
    case SpatialWeight::log_plus: return "log_plus";
    case SpatialWeight::bracket_half: return "bracket_half";
  }
  return "none";
}

}  // namespace detail

inline RunConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> schema{
      {"potential", {"family", "c", "c2", "radius", "radius2", "width"}},
      {"spectral", {"max_ell", "N", "order", "lambda1", "tol", "R_out"}},
      {"evolve", {"multiplier", "mass", "channels", "born", "times", "pairs", "filon_order", "lambda_min", "rel_tol"}},
      {"fit", {"model", "weight", "pair", "series"}},
      {"tune", {"channel", "count", "c_max", "step"}},
      {"run", {"seed", "jobs"}}};
  for (const auto& [sec, body] : tree) {
    auto it = schema.find(sec);
    if (it == schema.end()) throw ConfigError("config: unknown section [" + sec + "]");
    for (const auto& [key, v] : body)
      if (!it->second.count(key)) throw ConfigError("config: unknown key " + sec + "." + key);
  }
  auto str = [&](const char* k, const std::string& d) { return tree.get<std::string>(k, d); };
  auto num = [&](const char* k, double d) {
    auto v = tree.get_optional<std::string>(k);
    return v ? detail::to_double(k, *v) : d;
  };
  auto integer = [&](const char* k, int d) {
    double v = num(k, d);
    if (v != std::floor(v)) throw ConfigError(std::string("config: ") + k + " must be an integer");
    return static_cast<int>(v);
  };

  RunConfig c;
  std::string fam = str("potential.family", "square_well");
  PotentialSpec& V = c.spectral.potential;
  if (fam == "none") {
    c.free = true;
  } else if (fam == "square_well") {
    V = PotentialSpec::square_well(num("potential.c", 1), num("potential.radius", 1));
  } else if (fam == "gaussian") {
    V = PotentialSpec::gaussian(num("potential.c", 1), num("potential.width", 1));
  } else if (fam == "two_well") {
    auto ref = reference_two_well();
    V = PotentialSpec::two_well(num("potential.c", ref.c), num("potential.c2", ref.c2),
                                num("potential.radius", ref.radius), num("potential.radius2", ref.radius2));
  } else {
    throw ConfigError("config: unknown potential.family '" + fam + "'");
  }
  c.spectral.max_ell = integer("spectral.max_ell", 2);
  c.spectral.N = integer("spectral.N", 128);
  c.spectral.order = integer("spectral.order", 16);
  c.spectral.lambda1 = num("spectral.lambda1", 0.25);
  c.spectral.tol = num("spectral.tol", 1e-8);
  c.spectral.R_out = num("spectral.R_out", 60);
  if (!(c.spectral.lambda1 > 0)) throw ConfigError("config: spectral.lambda1 must be positive");

  c.multiplier = Multiplier::parse(str("evolve.multiplier", "schrod"), num("evolve.mass", 0));
  c.channels = integer("evolve.channels", c.spectral.max_ell);
  if (c.channels < 0 || c.channels > 8) throw ConfigError("config: evolve.channels must be in 0..8");
  if (!c.free && c.channels > c.spectral.max_ell)
    throw ConfigError("config: evolve.channels exceeds spectral.max_ell");
  c.born = integer("evolve.born", -1);
  if (c.born < -1 || c.born > 3) throw ConfigError("config: evolve.born must be in -1..3");
  c.times_spec = str("evolve.times", c.times_spec);
  c.times = detail::parse_times(c.times_spec);
  for (double t : c.times)
    if (!(t > 2)) throw ConfigError("config: times must be > 2");
  if (auto p = tree.get_optional<std::string>("evolve.pairs")) c.pairs = detail::parse_pairs(*p);
  for (const auto& p : c.pairs)
    if (!(p.r > 0 && p.rp > 0 && std::abs(p.cos_theta) <= 1)) throw ConfigError("config: bad pair");
  c.quad.order = integer("evolve.filon_order", c.quad.order);
  c.quad.lambda_min = num("evolve.lambda_min", c.quad.lambda_min);
  c.quad.rel_tol = num("evolve.rel_tol", c.quad.rel_tol);

  c.fit_model = str("fit.model", "auto");
  if (c.fit_model != "auto") detail::parse_rates(c.fit_model);
  c.weight = detail::parse_weight(str("fit.weight", "none"));
  c.fit_pair = integer("fit.pair", 0);
  if (c.fit_pair < 0 || c.fit_pair >= static_cast<int>(c.pairs.size()))
    throw ConfigError("config: fit.pair out of range");
  c.fit_series = str("fit.series", "");

  c.tune_channel = integer("tune.channel", 0);
  c.tune_count = integer("tune.count", 1);
  c.tune_c_max = num("tune.c_max", 200);
  c.tune_step = num("tune.step", 0.25);
  if (c.tune_count < 1 || !(c.tune_step > 0)) throw ConfigError("config: bad [tune] values");

  double seed = num("run.seed", 2024);
  if (seed < 0 || seed != std::floor(seed)) throw ConfigError("config: run.seed must be a non-negative integer");
  c.seed = static_cast<unsigned long>(seed);
  c.jobs = integer("run.jobs", 1);
  if (c.jobs < 1) throw ConfigError("config: run.jobs must be >= 1");
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline void write_config(std::ostream& os, const RunConfig& c) {
  using detail::fmt;
  const PotentialSpec& V = c.spectral.potential;
  os << "[potential]\n";
  if (c.free) {
    os << "family = none\n";
  } else {
    os << "family = " << family_name(V.family) << "\n";
    os << "c = " << fmt(V.c) << "\n";
    if (V.family == Family::two_well) os << "c2 = " << fmt(V.c2) << "\nradius2 = " << fmt(V.radius2) << "\n";
    if (V.family == Family::gaussian)
      os << "width = " << fmt(V.width) << "\n";
    else
      os << "radius = " << fmt(V.radius) << "\n";
  }
  os << "\n[spectral]\nmax_ell = " << c.spectral.max_ell << "\nN = " << c.spectral.N << "\norder = " << c.spectral.order
     << "\nlambda1 = " << fmt(c.spectral.lambda1) << "\ntol = " << fmt(c.spectral.tol)
     << "\nR_out = " << fmt(c.spectral.R_out) << "\n";
  os << "\n[evolve]\nmultiplier = " << c.multiplier.name() << "\nmass = " << fmt(c.multiplier.mass)
     << "\nchannels = " << c.channels << "\nborn = " << c.born << "\ntimes = ";
  if (c.times_spec.rfind("logspace", 0) == 0)
    os << c.times_spec;
  else
    for (size_t i = 0; i < c.times.size(); ++i) os << (i ? ", " : "") << fmt(c.times[i]);
  os << "\npairs = ";
  for (size_t i = 0; i < c.pairs.size(); ++i)
    os << (i ? "; " : "") << fmt(c.pairs[i].r) << ' ' << fmt(c.pairs[i].rp) << ' ' << fmt(c.pairs[i].cos_theta);
  os << "\nfilon_order = " << c.quad.order << "\nlambda_min = " << fmt(c.quad.lambda_min)
     << "\nrel_tol = " << fmt(c.quad.rel_tol) << "\n";
  os << "\n[fit]\nmodel = " << c.fit_model << "\nweight = " << detail::weight_name(c.weight) << "\npair = " << c.fit_pair
     << "\n";
  if (!c.fit_series.empty()) os << "series = " << c.fit_series << "\n";
  os << "\n[tune]\nchannel = " << c.tune_channel << "\ncount = " << c.tune_count << "\nc_max = " << fmt(c.tune_c_max)
     << "\nstep = " << fmt(c.tune_step) << "\n";
  os << "\n[run]\nseed = " << c.seed << "\njobs = " << c.jobs << "\n";
}

// Request for evolve built from the config.
inline PropagatorRequest make_request(const RunConfig& c) {
  PropagatorRequest r;
  r.times = c.times;
  r.pairs = c.pairs;
  r.multiplier = c.multiplier;
  r.channels = c.channels;
  r.quad = c.quad;
  r.born = c.born;
  return r;
}

// Read a TimeSeries CSV written by TimeSeries::write_csv.
inline TimeSeries read_series_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "t,pair_id,re,im,abs,err_est,multiplier,classification")
    throw ConfigError("series CSV: unexpected header");
  TimeSeries ts;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 8) throw ConfigError("series CSV: expected 8 columns");
    TimeRow r;
    r.t = detail::to_double("t", f[0]);
    r.pair_id = static_cast<int>(detail::to_double("pair_id", f[1]));
    r.value = cplx(detail::to_double("re", f[2]), detail::to_double("im", f[3]));
    r.err_est = detail::to_double("err_est", f[5]);
    ts.multiplier = f[6];
    ts.classification = f[7];
    ts.rows.push_back(r);
  }
  return ts;
}

}  // namespace lowdisp
