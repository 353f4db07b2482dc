// lowdisp: classify | tune | evolve | fit | verify | report
//
// Every command writes resolved.ini next to its artifacts in --out.  Errors go
// to stderr as {"error": {...}} with exit status 2 (bad input) or 1.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include <lowdisp/config.hpp>
#include <lowdisp/decayfit.hpp>
#include <lowdisp/evolution.hpp>
#include <lowdisp/oscint.hpp>
#include <lowdisp/potentials.hpp>
#include <lowdisp/spectral.hpp>

namespace fs = std::filesystem;
using namespace lowdisp;
using nlohmann::json;

namespace {

struct Options {
  std::string config, out = ".", lemma, multiplier;
  int jobs = 0, channel = -1;
  std::optional<double> mass;
};

struct Context {
  RunConfig cfg;
  fs::path out;
};

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << s;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

Context load(const Options& o) {
  Context c;
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) throw ConfigError("cannot read config " + o.config);
    c.cfg = parse_config(f);
  } else {
    c.cfg = parse_config(std::string());
  }
  if (!o.multiplier.empty() || o.mass)
    c.cfg.multiplier = Multiplier::parse(o.multiplier.empty() ? c.cfg.multiplier.name() : o.multiplier,
                                         o.mass ? *o.mass : c.cfg.multiplier.mass);
  if (o.channel >= 0) c.cfg.tune_channel = o.channel;
  if (o.jobs > 0) c.cfg.jobs = o.jobs;
  c.out = o.out;
  fs::create_directories(c.out);
  std::ostringstream os;
  write_config(os, c.cfg);
  write_file(c.out / "resolved.ini", os.str());
  return c;
}

std::unique_ptr<SpectralModel> build_model(const RunConfig& cfg) {
  if (cfg.free) return nullptr;
  return std::make_unique<SpectralModel>(cfg.spectral);
}

RateModel auto_model(const RunConfig& cfg, const SpectralModel* m) {
  if (cfg.fit_model != "auto") return {detail::parse_rates(cfg.fit_model), cfg.weight};
  Classification k = m ? m->classify().kind : Classification::Regular;
  OrthogonalityFlags flags = m ? orthogonality_flags(m->classify()) : OrthogonalityFlags{};
  RateModel r = expected_model(k, cfg.multiplier, flags);
  r.weight = cfg.weight;
  return r;
}

int cmd_classify(const Context& c) {
  auto m = build_model(c.cfg);
  json j = m ? m->report_json() : json{{"verdict", "free"}};
  write_file(c.out / "classification.json", dump(j));
  std::cout << j["verdict"].get<std::string>() << "\n";
  return 0;
}

// Scan the coupling for sign changes of the shooting defect, then refine.
int cmd_tune(const Context& c) {
  if (c.cfg.free) throw ConfigError("tune needs a potential");
  const RunConfig& cfg = c.cfg;
  PotentialSpec base = cfg.spectral.potential;
  int ell = cfg.tune_channel;
  auto spec_at = [&](double x) {
    PotentialSpec s = base;
    s.c = x;
    return s;
  };
  auto defect = [&](double x) {
    PotentialSpec s = spec_at(x);
    return shoot_defect(ell, s, s.support());
  };
  json rows = json::array();
  std::ostringstream csv;
  csv << "index,channel,c,defect\n" << std::setprecision(12);
  double lo = cfg.tune_step, flo = defect(lo);
  for (double hi = lo + cfg.tune_step; hi <= cfg.tune_c_max && static_cast<int>(rows.size()) < cfg.tune_count;
       hi += cfg.tune_step) {
    double fhi = defect(hi);
    if ((flo < 0) != (fhi < 0)) {
      auto r = tune_threshold(ell, base, [](PotentialSpec& s, double x) { s.c = x; }, lo, hi);
      // defect is sin(theta_u - theta_d): it also changes sign across a pole of
      // the log-derivative mismatch; keep only true zeros
      if (std::abs(r.defect) < 1e-8) {
        int index = static_cast<int>(rows.size()) + 1;
        rows.push_back({{"index", index}, {"channel", ell}, {"c", r.coupling}, {"defect", r.defect}});
        csv << index << ',' << ell << ',' << r.coupling << ',' << r.defect << '\n';
        std::cout << "c* = " << std::setprecision(10) << r.coupling << "  (channel " << ell << ", #" << index << ")\n";
      }
    }
    lo = hi;
    flo = fhi;
  }
  if (rows.empty()) throw BracketError("tune: no threshold found below c_max");
  write_file(c.out / "tune.json", dump({{"family", family_name(base.family)}, {"channel", ell}, {"thresholds", rows}}));
  write_file(c.out / "tune.csv", csv.str());
  return 0;
}

TimeSeries evolve(const RunConfig& cfg, const SpectralModel* m) {
  return stone_evolve(make_request(cfg), m, cfg.spectral.lambda1);
}

int cmd_evolve(const Context& c) {
  auto m = build_model(c.cfg);
  auto ts = evolve(c.cfg, m.get());
  std::ostringstream os;
  ts.write_csv(os);
  write_file(c.out / "series.csv", os.str());
  size_t ok = 0;
  for (const auto& r : ts.rows) ok += r.accepted;
  std::cout << ok << "/" << ts.rows.size() << " rows accepted (" << ts.classification << ", " << ts.multiplier << ")\n";
  return 0;
}

json fit_json(const RunConfig& cfg, const SpectralModel* m, const TimeSeries& ts) {
  RateModel model = auto_model(cfg, m);
  auto r = fit(ts, cfg.fit_pair, cfg.pairs.at(cfg.fit_pair), model);
  json j = r.to_json();
  j["pair_id"] = cfg.fit_pair;
  j["classification"] = ts.classification;
  j["multiplier"] = ts.multiplier;
  j["weight"] = detail::weight_name(model.weight);
  for (Rate b : model.basis) j["model"].push_back(rate_name(b));
  return j;
}

int cmd_fit(const Context& c) {
  auto m = build_model(c.cfg);
  TimeSeries ts;
  if (!c.cfg.fit_series.empty()) {
    std::ifstream f(c.cfg.fit_series);
    if (!f) throw ConfigError("cannot read series " + c.cfg.fit_series);
    ts = read_series_csv(f);
  } else {
    ts = evolve(c.cfg, m.get());
  }
  json j = fit_json(c.cfg, m.get(), ts);
  write_file(c.out / "fit.json", dump(j));
  std::cout << "dominant " << j["dominant"].get<std::string>() << ", slope " << j["slope"].get<double>() << "\n";
  return 0;
}

int cmd_verify(const Context& c, const std::string& lemma) {
  std::vector<LemmaResult> rs;
  if (lemma.empty() || lemma == "all") {
    rs = verify_all(c.cfg.jobs);
    rs.push_back(verify_spatial());
  } else if (lemma == "eg_spatial") {
    rs.push_back(verify_spatial());
  } else {
    rs.push_back(verify(lemma));
  }
  json j = table_json(rs);
  if (lemma.empty() || lemma == "all" || lemma == "eg_spatial") {
    SpatialParams p;
    double q = spatial_quadrature(p);
    auto mc = spatial_monte_carlo(p, 10000000, static_cast<unsigned>(c.cfg.seed));
    double rel = std::abs(q - mc.mean) / q;
    json e{{"id", "eg_monte_carlo"}, {"quadrature", q}, {"monte_carlo", mc.mean}, {"stderr", mc.stderr_},
           {"rel_diff", rel}, {"samples", 10000000}, {"seed", c.cfg.seed}, {"pass", rel <= 0.05}};
    j.push_back(e);
    std::cout << "eg_monte_carlo: " << (rel <= 0.05 ? "pass" : "FAIL") << "\n";
  }
  write_file(c.out / "lemmas.json", dump(j));
  std::ostringstream os;
  write_table_csv(os, rs);
  write_file(c.out / "lemmas.csv", os.str());
  for (const auto& r : rs) std::cout << r.id << ": " << (r.pass ? "pass" : "FAIL") << "\n";
  return 0;
}

int cmd_report(const Context& c) {
  auto m = build_model(c.cfg);
  auto ts = evolve(c.cfg, m.get());
  json f = fit_json(c.cfg, m.get(), ts);
  std::ostringstream os;
  os << "# lowdisp report\n\n";
  os << "| item | value |\n|---|---|\n";
  os << "| potential | " << (c.cfg.free ? "none" : family_name(c.cfg.spectral.potential.family)) << " |\n";
  if (!c.cfg.free) os << "| coupling c | " << detail::fmt(c.cfg.spectral.potential.c) << " |\n";
  os << "| classification | " << ts.classification << " |\n";
  os << "| multiplier | " << ts.multiplier << " |\n";
  if (m) os << "| rank S1 / S2 | " << m->classify().rank_S1() << " / " << m->classify().rank_S2() << " |\n";
  os << "| expected rates | ";
  for (size_t i = 0; i < f["model"].size(); ++i) os << (i ? ", " : "") << f["model"][i].get<std::string>();
  os << " |\n";
  os << "| dominant fitted rate | " << f["dominant"].get<std::string>() << " |\n";
  os << "| log-log slope | " << detail::fmt(f["slope"].get<double>()) << " |\n";
  os << "| fit residual | " << detail::fmt(f["residual"].get<double>()) << " |\n\n";
  os << "## Fitted coefficients (pair " << c.cfg.fit_pair << ")\n\n| rate | coefficient |\n|---|---|\n";
  for (auto& [k, v] : f["coefficients"].items()) os << "| " << k << " | " << detail::fmt(v.get<double>()) << " |\n";
  os << "\n## Series\n\n| t | |K| | err_est |\n|---|---|---|\n";
  for (const auto& r : ts.rows)
    if (r.pair_id == c.cfg.fit_pair && r.accepted)
      os << "| " << detail::fmt(r.t) << " | " << detail::fmt(std::abs(r.value)) << " | " << detail::fmt(r.err_est)
         << " |\n";
  write_file(c.out / "report.md", os.str());
  std::ostringstream csv;
  ts.write_csv(csv);
  write_file(c.out / "series.csv", csv.str());
  write_file(c.out / "fit.json", dump(f));
  std::cout << ts.classification << ": dominant " << f["dominant"].get<std::string>() << "\n";
  return 0;
}

const char* error_type(const std::exception& e) {
  if (dynamic_cast<const CollinearBasis*>(&e)) return "CollinearBasis";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const BracketError*>(&e)) return "BracketError";
  if (dynamic_cast<const PotentialError*>(&e)) return "PotentialError";
  if (dynamic_cast<const AmbiguousThreshold*>(&e)) return "AmbiguousThreshold";
  if (dynamic_cast<const NearSingular*>(&e)) return "NearSingular";
  if (dynamic_cast<const StaleOracle*>(&e)) return "StaleOracle";
  return "Error";
}

int fail(const std::string& command, const std::string& type, const std::string& message, int status) {
  json j{{"error", {{"command", command}, {"type", type}, {"message", message}}}};
  std::cerr << j.dump() << "\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-energy dispersive decay in four dimensions"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "INI config file");
    s->add_option("--out", o.out, "output directory");
    s->add_option("--jobs", o.jobs, "worker cap");
    s->add_option("--channel", o.channel, "angular channel for tune");
    s->add_option("--lemma", o.lemma, "lemma id for verify (default: all)");
    s->add_option("--multiplier", o.multiplier, "schrod|kgcos|kgsin|wavecos|wavesin");
    s->add_option("--mass", o.mass, "Klein-Gordon mass");
  };
  std::vector<std::string> names{"classify", "tune", "evolve", "fit", "verify", "report"};
  for (const auto& n : names) common(app.add_subcommand(n));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("", "UsageError", e.what(), 2);
  }
  std::string cmd = app.get_subcommands().front()->get_name();
  try {
    Context c = load(o);
    if (cmd == "classify") return cmd_classify(c);
    if (cmd == "tune") return cmd_tune(c);
    if (cmd == "evolve") return cmd_evolve(c);
    if (cmd == "fit") return cmd_fit(c);
    if (cmd == "verify") return cmd_verify(c, o.lemma);
    return cmd_report(c);
  } catch (const std::exception& e) {
    const char* type = error_type(e);
    int status = std::string(type) == "ConfigError" ? 2 : 1;
    return fail(cmd, type, e.what(), status);
  }
}
