#include "polymerlab/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "polymerlab/csv.hpp"
#include "polymerlab/diagnostics.hpp"
#include "polymerlab/localization.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/polymer.hpp"
#include "polymerlab/stats.hpp"

#ifndef POLYMERLAB_VERSION
#define POLYMERLAB_VERSION "unknown"
#endif

namespace polymerlab::harness {

namespace {

constexpr std::array<std::pair<Kind, const char*>, 8> kKindNames{{
    {Kind::free_energy, "free-energy"},
    {Kind::phase_scan, "phase-scan"},
    {Kind::overlap, "overlap"},
    {Kind::atoms, "atoms"},
    {Kind::fluct, "fluct"},
    {Kind::blocks, "blocks"},
    {Kind::bound, "bound"},
    {Kind::walk_check, "walk-check"},
}};

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Typed access to one JSON object. Every key read is remembered so that
// finish() can reject the rest.
class Reader {
 public:
  Reader(const Json* node, std::string path, std::vector<std::string>& errors)
      : node_(node), path_(std::move(path)), errors_(&errors) {
    if (node_ && node_->is_null()) node_ = nullptr;
    if (node_ && !node_->is_object()) {
      error(path_.empty() ? "config" : path_, "expected an object");
      node_ = nullptr;
    }
  }

  std::string at(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }
  void error(const std::string& where, const std::string& what) const {
    errors_->push_back(where + ": " + what);
  }
  void check(bool ok, std::string_view key, const std::string& what) const {
    if (!ok) error(at(key), what);
  }

  const Json* find(std::string_view key) {
    known_.insert(std::string(key));
    if (!node_) return nullptr;
    const auto it = node_->find(std::string(key));
    if (it == node_->end() || it->is_null()) return nullptr;
    return &*it;
  }
  bool has(std::string_view key) { return find(key) != nullptr; }

  Reader child(std::string_view key) { return Reader(find(key), at(key), *errors_); }

  void number(std::string_view key, double& out) {
    if (const auto* v = find(key)) {
      if (v->is_number())
        out = v->get<double>();
      else
        error(at(key), "expected a number");
    }
  }
  void number(std::string_view key, std::optional<double>& out) {
    if (const auto* v = find(key)) {
      double x = 0.0;
      number(key, x);
      if (v->is_number()) out = x;
    }
  }
  void integer(std::string_view key, std::int64_t& out) {
    if (const auto* v = find(key)) {
      if (v->is_number_integer())
        out = v->get<std::int64_t>();
      else
        error(at(key), "expected an integer");
    }
  }
  void integer(std::string_view key, std::optional<std::int64_t>& out) {
    if (const auto* v = find(key)) {
      std::int64_t x = 0;
      integer(key, x);
      if (v->is_number_integer()) out = x;
    }
  }
  void count(std::string_view key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0))
        out = v->get<std::size_t>();
      else
        error(at(key), "expected a non-negative integer");
    }
  }
  void seed(std::string_view key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0))
        out = v->get<std::uint64_t>();
      else
        error(at(key), "expected a non-negative integer");
    }
  }
  void boolean(std::string_view key, bool& out) {
    if (const auto* v = find(key)) {
      if (v->is_boolean())
        out = v->get<bool>();
      else
        error(at(key), "expected true or false");
    }
  }
  void string(std::string_view key, std::string& out) {
    if (const auto* v = find(key)) {
      if (v->is_string())
        out = v->get<std::string>();
      else
        error(at(key), "expected a string");
    }
  }
  void numbers(std::string_view key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) return error(at(key), "expected an array of numbers");
      std::vector<double> xs;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) return error(fmt::format("{}[{}]", at(key), i), "expected a number");
        xs.push_back((*v)[i].get<double>());
      }
      out = std::move(xs);
    }
  }
  void integers(std::string_view key, std::vector<std::int64_t>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) return error(at(key), "expected an array of integers");
      std::vector<std::int64_t> xs;
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer())
          return error(fmt::format("{}[{}]", at(key), i), "expected an integer");
        xs.push_back((*v)[i].get<std::int64_t>());
      }
      out = std::move(xs);
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items())
      if (!known_.count(key)) error(at(key), "unknown key");
  }

 private:
  const Json* node_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> known_;
};

std::string env_family_name(env::Family f) { return env::to_string(f); }

std::optional<env::Family> parse_env_family(const std::string& s) {
  if (s == "gaussian") return env::Family::gaussian;
  if (s == "rademacher") return env::Family::rademacher;
  if (s == "tabulated") return env::Family::tabulated;
  return std::nullopt;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }
Json optional_json(const std::optional<std::int64_t>& v) { return v ? Json(*v) : Json(nullptr); }

bool needs_N(Kind k) { return k != Kind::bound && k != Kind::walk_check; }
bool needs_beta(Kind k) { return k != Kind::walk_check; }
bool uses_replicas(Kind k) { return k != Kind::bound && k != Kind::walk_check; }

void read_walk(Reader r, WalkSection& w) {
  r.number("alpha", w.alpha);
  r.check(w.alpha > 0.0 && w.alpha <= 2.0 && std::isfinite(w.alpha), "alpha",
          fmt::format("must lie in (0, 2], got {}", w.alpha));
  {
    Reader l = r.child("L");
    std::string family = "constant";
    std::vector<double> params;
    l.string("family", family);
    l.numbers("params", params);
    if (family == "constant") {
      if (params.size() > 1)
        l.error(l.at("params"), "constant family takes at most one parameter [c]");
      w.L = walk::SlowlyVaryingSpec::constant(params.empty() ? 1.0 : params[0]);
    } else if (family == "log-power") {
      if (params.size() != 2)
        l.error(l.at("params"), "log-power family takes [c, gamma]");
      else
        w.L = walk::SlowlyVaryingSpec::log_power(params[0], params[1]);
    } else {
      l.error(l.at("family"), fmt::format("unknown family '{}' (expected constant or log-power)", family));
    }
    if (!(w.L.c > 0.0) || !std::isfinite(w.L.c)) l.error(l.at("params"), "c must be positive");
    if (!std::isfinite(w.L.gamma)) l.error(l.at("params"), "gamma must be finite");
    l.finish();
  }
  r.number("p0", w.p0);
  r.check(w.p0 >= 0.0 && w.p0 < 1.0, "p0", fmt::format("must lie in [0, 1), got {}", w.p0));
  r.number("tail_tolerance", w.tail_tolerance);
  r.check(w.tail_tolerance > 0.0 && w.tail_tolerance < 1.0, "tail_tolerance",
          fmt::format("must lie in (0, 1), got {}", w.tail_tolerance));
  r.integer("support", w.support);
  if (w.support)
    r.check(*w.support >= 1 && *w.support <= walk::kMaxSupport, "support",
            fmt::format("must lie in [1, {}], got {}", walk::kMaxSupport, *w.support));
  r.finish();
}

void read_env(Reader r, EnvSection& e) {
  std::string family = "gaussian";
  r.string("family", family);
  if (const auto f = parse_env_family(family))
    e.family = *f;
  else
    r.error(r.at("family"), fmt::format("unknown family '{}' (expected gaussian, rademacher or tabulated)", family));
  {
    Reader p = r.child("params");
    p.numbers("values", e.values);
    p.numbers("probabilities", e.probabilities);
    p.finish();
  }
  if (e.family == env::Family::tabulated) {
    if (e.values.size() < 2)
      r.error(r.at("params.values"), "tabulated family needs at least two values");
    if (e.values.size() != e.probabilities.size())
      r.error(r.at("params.probabilities"), "must have one entry per value");
  } else if (!e.values.empty() || !e.probabilities.empty()) {
    r.error(r.at("params"), "only the tabulated family takes values and probabilities");
  }
  std::optional<double> interval;
  r.number("interval", interval);
  if (interval) {
    r.check(*interval > 0.0, "interval", fmt::format("must be positive, got {}", *interval));
    e.interval = *interval;
  }
  if (e.family == env::Family::tabulated && e.values.size() >= 2 && e.values.size() == e.probabilities.size()) {
    try {
      (void)e.model();
    } catch (const std::exception& ex) {
      r.error(r.at("params"), ex.what());
    }
  }
  r.finish();
}

void check_unit_open(Reader& r, std::string_view key, double v) {
  r.check(v > 0.0 && v < 1.0, key, fmt::format("must lie in (0, 1), got {}", v));
}

void read_fm_grid(Reader& r, std::vector<std::int64_t>& grid, const std::vector<std::int64_t>& Ns) {
  r.integers("fm_grid", grid);
  if (!grid.empty()) {
    r.check(grid.size() >= 2, "fm_grid", "needs at least two horizons for a rate");
    const std::int64_t n_min = Ns.empty() ? 0 : *std::min_element(Ns.begin(), Ns.end());
    for (auto n : grid)
      r.check(n >= 1 && (Ns.empty() || n <= n_min), "fm_grid",
              fmt::format("entries must lie in [1, min N = {}], got {}", n_min, n));
  } else {
    for (auto n : Ns)
      r.check(n >= 8, "fm_grid", fmt::format("default grid {{N/8, N/4, N/2, N}} needs N >= 8, got {}", n));
  }
}

}  // namespace

std::string to_string(Kind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "unknown";
}

std::optional<Kind> parse_kind(std::string_view name) {
  for (const auto& [kind, n] : kKindNames)
    if (name == n) return kind;
  return std::nullopt;
}

const std::vector<Kind>& all_kinds() {
  static const std::vector<Kind> kinds = [] {
    std::vector<Kind> v;
    for (const auto& [kind, name] : kKindNames) v.push_back(kind);
    return v;
  }();
  return kinds;
}

std::string section_name(Kind k) {
  auto s = to_string(k);
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

ValidationError::ValidationError(std::vector<std::string> errs)
    : std::runtime_error("invalid config:\n  " + join(errs, "\n  ")), errors(std::move(errs)) {}

env::EnvModel EnvSection::model() const {
  switch (family) {
    case env::Family::gaussian:
      return env::EnvModel::gaussian(interval);
    case env::Family::rademacher:
      return env::EnvModel::rademacher(interval);
    case env::Family::tabulated:
      return env::EnvModel::tabulated(values, probabilities, interval);
  }
  return env::EnvModel::gaussian(interval);
}

Json read_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError({fmt::format("{}: cannot open config file", path.string())});
  try {
    return Json::parse(f, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ValidationError({fmt::format("{}: {}", path.string(), e.what())});
  }
}

ExperimentConfig validate(const Json& tree, std::optional<Kind> kind) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  Reader root(&tree, "", errors);
  if (!tree.is_object()) throw ValidationError(errors);

  std::string kind_name;
  root.string("kind", kind_name);
  if (!kind_name.empty()) {
    const auto parsed = parse_kind(kind_name);
    if (!parsed) {
      std::vector<std::string> names;
      for (auto k : all_kinds()) names.push_back(to_string(k));
      root.error("kind", fmt::format("unknown experiment kind '{}' (expected one of {})", kind_name,
                                     join(names, ", ")));
    } else if (kind && *kind != *parsed) {
      root.error("kind", fmt::format("config says '{}' but '{}' was requested", kind_name, to_string(*kind)));
    } else {
      kind = parsed;
    }
  } else if (!kind) {
    root.error("kind", "missing experiment kind");
  }
  if (!kind) throw ValidationError(errors);
  c.kind = *kind;

  read_walk(root.child("walk"), c.walk);
  read_env(root.child("env"), c.env);

  {
    Reader g = root.child("grid");
    c.alphas = {c.walk.alpha};
    g.numbers("alpha", c.alphas);
    g.numbers("beta", c.betas);
    g.integers("N", c.Ns);
    g.check(!c.alphas.empty(), "alpha", "must not be empty");
    for (double a : c.alphas)
      g.check(a > 0.0 && a <= 2.0, "alpha", fmt::format("entries must lie in (0, 2], got {}", a));
    for (double b : c.betas)
      g.check(b >= 0.0 && std::isfinite(b), "beta", fmt::format("entries must be finite and >= 0, got {}", b));
    for (auto n : c.Ns) g.check(n >= 1, "N", fmt::format("entries must be >= 1, got {}", n));
    if (needs_beta(c.kind)) g.check(!c.betas.empty(), "beta", "required for this experiment kind");
    if (needs_N(c.kind)) g.check(!c.Ns.empty(), "N", "required for this experiment kind");
    g.finish();
  }

  root.count("replicas", c.replicas);
  if (uses_replicas(c.kind))
    root.check(c.replicas >= 2, "replicas", fmt::format("must be at least 2, got {}", c.replicas));
  root.seed("master_seed", c.master_seed);
  {
    std::size_t threads = c.threads;
    root.count("threads", threads);
    root.check(threads <= 4096, "threads", fmt::format("must be at most 4096, got {}", threads));
    c.threads = static_cast<unsigned>(std::min<std::size_t>(threads, 4096));
  }
  root.string("output_dir", c.output_dir);
  root.check(!c.output_dir.empty(), "output_dir", "must not be empty");
  root.number("leak_budget", c.leak_budget);
  root.check(c.leak_budget > 0.0 && c.leak_budget < 1.0, "leak_budget",
             fmt::format("must lie in (0, 1), got {}", c.leak_budget));
  root.boolean("share_seeds", c.share_seeds);

  // Every kind section is a known key; only the selected one is read in full.
  for (auto k : all_kinds()) {
    Reader s = root.child(section_name(k));
    if (k != c.kind) {
      if (root.has(section_name(k)))
        s.error(section_name(k), fmt::format("section does not apply to a {} experiment", to_string(c.kind)));
      continue;
    }
    switch (k) {
      case Kind::free_energy: {
        auto& o = c.free_energy;
        s.number("theta", o.theta);
        check_unit_open(s, "theta", o.theta);
        read_fm_grid(s, o.fm_grid, c.Ns);
        s.boolean("traces", o.traces);
        s.count("endpoint_replicas", o.endpoint_replicas);
        s.check(o.endpoint_replicas <= c.replicas, "endpoint_replicas",
                fmt::format("must not exceed replicas = {}", c.replicas));
        break;
      }
      case Kind::phase_scan: {
        auto& o = c.phase_scan;
        s.number("theta", o.theta);
        check_unit_open(s, "theta", o.theta);
        read_fm_grid(s, o.fm_grid, c.Ns);
        s.integer("pi_horizon", o.pi_horizon);
        s.check(o.pi_horizon >= 10, "pi_horizon", fmt::format("must be at least 10, got {}", o.pi_horizon));
        break;
      }
      case Kind::overlap: {
        auto& o = c.overlap;
        s.count("mc_samples", o.mc_samples);
        s.check(o.mc_samples >= 2, "mc_samples", fmt::format("must be at least 2, got {}", o.mc_samples));
        s.number("lo", o.lo);
        s.number("hi", o.hi);
        s.check(o.lo > 0.0 && o.lo < o.hi, "lo", fmt::format("need 0 < lo < hi, got [{}, {}]", o.lo, o.hi));
        break;
      }
      case Kind::atoms: {
        auto& o = c.atoms;
        s.number("epsilon", o.epsilon);
        check_unit_open(s, "epsilon", o.epsilon);
        s.boolean("per_step", o.per_step);
        break;
      }
      case Kind::fluct: {
        auto& o = c.fluct;
        s.number("eps", o.eps);
        check_unit_open(s, "eps", o.eps);
        s.number("radius", o.radius);
        if (o.radius) s.check(*o.radius >= 1.0, "radius", fmt::format("must be >= 1, got {}", *o.radius));
        break;
      }
      case Kind::blocks: {
        auto& o = c.blocks;
        s.integer("M", o.M);
        s.check(o.M >= 0, "M", fmt::format("must be >= 0, got {}", o.M));
        s.integer("L", o.L);
        if (o.L) s.check(*o.L >= 1, "L", fmt::format("must be >= 1, got {}", *o.L));
        s.number("eps", o.eps);
        check_unit_open(s, "eps", o.eps);
        s.number("delta", o.delta);
        s.check(o.delta > 0.0, "delta", fmt::format("must be positive, got {}", o.delta));
        s.integer("shift_k_max", o.shift_k_max);
        s.check(o.shift_k_max >= 1, "shift_k_max", fmt::format("must be >= 1, got {}", o.shift_k_max));
        for (auto n : c.Ns) s.check(n % 2 == 0, "N", fmt::format("block experiments need even N, got {}", n));
        if (!o.L && o.M >= 0 && o.eps > 0.0 && o.eps < 1.0) {
          for (double a : c.alphas)
            for (double b : c.betas)
              for (auto n : c.Ns) {
                if (n < 2 || n % 2) continue;
                try {
                  (void)loc::BlockLayout::from_theorem(a, b, n, o.eps, o.M);
                } catch (const std::exception& e) {
                  s.error(s.at("L"), fmt::format("alpha={} beta={} N={}: {}; set an explicit L", a, b, n, e.what()));
                }
              }
        }
        break;
      }
      case Kind::bound: {
        auto& o = c.bound;
        auto& b = o.config;
        s.number("C1", b.C1);
        s.number("C2", b.C2);
        std::optional<double> theta, gamma;
        s.number("theta", theta);
        s.number("gamma", gamma);
        b.theta = theta.value_or(0.0);
        b.gamma = gamma.value_or(0.0);
        s.number("K_cut", b.K_cut);
        s.count("mc_samples", b.mc_samples);
        s.integer("mc_max_steps", b.mc_max_steps);
        s.check(b.mc_max_steps >= 1, "mc_max_steps", fmt::format("must be >= 1, got {}", b.mc_max_steps));
        std::int64_t rungs = b.max_rungs;
        s.integer("max_rungs", rungs);
        s.check(rungs >= 0 && rungs <= 64, "max_rungs", fmt::format("must lie in [0, 64], got {}", rungs));
        b.max_rungs = static_cast<int>(std::clamp<std::int64_t>(rungs, 0, 64));
        s.boolean("analytic", o.analytic);
        for (double a : c.alphas) {
          try {
            (void)bounds::resolve(b, a);
          } catch (const std::exception& e) {
            s.error("bound", fmt::format("alpha={}: {}", a, e.what()));
          }
        }
        for (double beta : c.betas)
          s.check(beta > 0.0, "beta", fmt::format("bound experiments need beta > 0, got {}", beta));
        break;
      }
      case Kind::walk_check: {
        auto& o = c.walk_check;
        s.integer("horizon", o.horizon);
        s.check(o.horizon >= 1, "horizon", fmt::format("must be >= 1, got {}", o.horizon));
        s.integer("pi_horizon", o.pi_horizon);
        s.check(o.pi_horizon >= 10, "pi_horizon", fmt::format("must be at least 10, got {}", o.pi_horizon));
        break;
      }
    }
    s.finish();
  }

  const bool gaussian_only = c.kind == Kind::bound || c.kind == Kind::fluct || c.kind == Kind::blocks;
  if (gaussian_only && c.env.family != env::Family::gaussian)
    root.error("env.family", fmt::format("{} experiments need the gaussian environment", to_string(c.kind)));
  if (c.kind == Kind::fluct || c.kind == Kind::blocks)
    for (double a : c.alphas)
      if (!(a > 1.0)) root.error("grid.alpha", fmt::format("{} experiments need alpha > 1, got {}", to_string(c.kind), a));

  root.finish();
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return c;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["kind"] = to_string(kind);
  Json w;
  w["alpha"] = walk.alpha;
  Json L;
  if (walk.L.family == walk::LFamily::constant) {
    L["family"] = "constant";
    L["params"] = Json::array({walk.L.c});
  } else {
    L["family"] = "log-power";
    L["params"] = Json::array({walk.L.c, walk.L.gamma});
  }
  w["L"] = L;
  w["p0"] = walk.p0;
  w["tail_tolerance"] = walk.tail_tolerance;
  w["support"] = optional_json(walk.support);
  j["walk"] = w;
  Json e;
  e["family"] = env_family_name(env.family);
  if (env.family == env::Family::tabulated)
    e["params"] = Json{{"values", env.values}, {"probabilities", env.probabilities}};
  e["interval"] = std::isfinite(env.interval) ? Json(env.interval) : Json(nullptr);
  j["env"] = e;
  j["grid"] = Json{{"alpha", alphas}, {"beta", betas}, {"N", Ns}};
  j["replicas"] = replicas;
  j["master_seed"] = master_seed;
  j["threads"] = threads;
  j["output_dir"] = output_dir;
  j["leak_budget"] = leak_budget;
  j["share_seeds"] = share_seeds;
  Json s;
  switch (kind) {
    case Kind::free_energy:
      s = Json{{"theta", free_energy.theta}, {"fm_grid", free_energy.fm_grid},
               {"traces", free_energy.traces}, {"endpoint_replicas", free_energy.endpoint_replicas}};
      break;
    case Kind::phase_scan:
      s = Json{{"theta", phase_scan.theta}, {"fm_grid", phase_scan.fm_grid},
               {"pi_horizon", phase_scan.pi_horizon}};
      break;
    case Kind::overlap:
      s = Json{{"mc_samples", overlap.mc_samples}, {"lo", overlap.lo}, {"hi", overlap.hi}};
      break;
    case Kind::atoms:
      s = Json{{"epsilon", atoms.epsilon}, {"per_step", atoms.per_step}};
      break;
    case Kind::fluct:
      s = Json{{"eps", fluct.eps}, {"radius", optional_json(fluct.radius)}};
      break;
    case Kind::blocks:
      s = Json{{"M", blocks.M}, {"L", optional_json(blocks.L)}, {"eps", blocks.eps},
               {"delta", blocks.delta}, {"shift_k_max", blocks.shift_k_max}};
      break;
    case Kind::bound: {
      const auto& b = bound.config;
      s = Json{{"C1", b.C1},
               {"C2", b.C2},
               {"theta", b.theta > 0.0 ? Json(b.theta) : Json(nullptr)},
               {"gamma", b.gamma > 0.0 ? Json(b.gamma) : Json(nullptr)},
               {"K_cut", b.K_cut},
               {"mc_samples", b.mc_samples},
               {"mc_max_steps", b.mc_max_steps},
               {"max_rungs", b.max_rungs},
               {"analytic", bound.analytic}};
      break;
    }
    case Kind::walk_check:
      s = Json{{"horizon", walk_check.horizon}, {"pi_horizon", walk_check.pi_horizon}};
      break;
  }
  j[section_name(kind)] = s;
  return j;
}

namespace {

template <class T>
std::optional<T> parse_env_number(const char* name) {
  const char* raw = std::getenv(name);
  if (!raw || !*raw) return std::nullopt;
  std::istringstream in(raw);
  unsigned long long v = 0;
  in >> v;
  if (!in || !in.eof() || std::string_view(raw).front() == '-')
    throw ValidationError({fmt::format("{}: expected a non-negative integer, got '{}'", name, raw)});
  return static_cast<T>(v);
}

}  // namespace

Overrides with_environment(Overrides cli) {
  if (!cli.seed) cli.seed = parse_env_number<std::uint64_t>("POLYMERLAB_SEED");
  if (!cli.threads) cli.threads = parse_env_number<unsigned>("POLYMERLAB_THREADS");
  return cli;
}

void apply_overrides(Json& tree, const Overrides& o, Kind kind) {
  if (!tree.is_object()) return;
  if (o.seed) tree["master_seed"] = *o.seed;
  if (o.threads) tree["threads"] = *o.threads;
  if (o.out) tree["output_dir"] = *o.out;
  if (o.betas) {
    if (!tree.contains("grid") || !tree["grid"].is_object()) tree["grid"] = Json::object();
    tree["grid"]["beta"] = *o.betas;
  }
  const bool bound_flags = o.C1 || o.C2 || o.theta || o.gamma || o.mc_samples;
  if (bound_flags) {
    if (kind != Kind::bound)
      throw ValidationError({"--C1/--C2/--theta/--gamma/--mc-samples apply to the bound experiment only"});
    auto& s = tree["bound"];
    if (!s.is_object()) s = Json::object();
    if (o.C1) s["C1"] = *o.C1;
    if (o.C2) s["C2"] = *o.C2;
    if (o.theta) s["theta"] = *o.theta;
    if (o.gamma) s["gamma"] = *o.gamma;
    if (o.mc_samples) s["mc_samples"] = *o.mc_samples;
  }
}

std::string version() { return POLYMERLAB_VERSION; }

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (f) {
    f.read(buf.data(), buf.size());
    if (f.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(f.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

Json RunManifest::to_json() const {
  Json j;
  j["version"] = version;
  j["config"] = config;
  Json files_json = Json::array();
  for (const auto& f : files) files_json.push_back(Json{{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  j["files"] = files_json;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["shared_seeds"] = shared_seeds;
  Json ledger = Json::array();
  for (const auto& s : seed_ledger)
    ledger.push_back(Json{{"cell", s.cell},
                          {"alpha", s.alpha},
                          {"beta", s.beta},
                          {"N", s.N},
                          {"seed", s.seed},
                          {"first_replica", s.first_replica},
                          {"replicas", s.replicas}});
  j["seed_ledger"] = ledger;
  Json errs = Json::array();
  for (const auto& e : errors) errs.push_back(Json{{"cell", e.cell}, {"message", e.message}});
  j["errors"] = errs;
  j["partial"] = partial();
  return j;
}

namespace {

struct Cell {
  double alpha = 0.0;
  double beta = 0.0;
  std::int64_t N = 0;
};

class Runner {
 public:
  explicit Runner(const ExperimentConfig& c) : c_(c), env_(c.env.model()), dir_(c.output_dir) {
    std::filesystem::create_directories(dir_);
  }

  RunManifest finish(double seconds) {
    RunManifest m;
    m.config = c_.to_json();
    m.version = version();
    for (const auto& name : written_) {
      const auto p = dir_ / name;
      m.files.push_back({name, sha256_file(p), std::filesystem::file_size(p)});
    }
    m.wall_clock_seconds = seconds;
    m.seed_ledger = ledger_;
    m.shared_seeds = c_.share_seeds;
    m.errors = errors_;
    auto j = m.to_json();
    std::ofstream f(dir_ / "manifest.json", std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("failed writing manifest.json");
    return m;
  }

  void run() {
    switch (c_.kind) {
      case Kind::free_energy: return free_energy();
      case Kind::phase_scan: return phase_scan();
      case Kind::overlap: return overlap();
      case Kind::atoms: return atoms();
      case Kind::fluct: return fluct();
      case Kind::blocks: return blocks();
      case Kind::bound: return bound();
      case Kind::walk_check: return walk_check();
    }
  }

 private:
  const ExperimentConfig& c_;
  env::EnvModel env_;
  std::filesystem::path dir_;
  std::vector<std::string> written_;
  std::vector<SeedEntry> ledger_;
  std::vector<CellError> errors_;
  std::map<double, walk::WalkModel> walks_;

  void write(const std::string& name, const csv::Table& t) {
    t.write(dir_ / name);
    written_.push_back(name);
  }
  void write(const std::string& name, const Json& j) {
    std::ofstream f(dir_ / name, std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("failed writing " + name);
    written_.push_back(name);
  }

  const walk::WalkModel& walk_for(double alpha) {
    auto it = walks_.find(alpha);
    if (it == walks_.end()) {
      const auto& w = c_.walk;
      auto model = w.support ? walk::build_walk_with_support(alpha, w.L, w.p0, *w.support)
                             : walk::build_walk(alpha, w.L, w.p0, w.tail_tolerance);
      it = walks_.emplace(alpha, std::move(model)).first;
    }
    return it->second;
  }

  std::vector<Cell> cells() const {
    std::vector<Cell> out;
    for (double a : c_.alphas)
      for (double b : c_.betas)
        for (auto n : c_.Ns) out.push_back({a, b, n});
    return out;
  }

  /// Replica keys for cell i, recorded in the ledger.
  diag::Ensemble ensemble(std::size_t i, const Cell& cell) {
    diag::Ensemble e;
    e.env = env_;
    e.seed = c_.master_seed;
    e.first_replica = c_.share_seeds ? 0 : static_cast<std::uint64_t>(i) * c_.replicas;
    e.threads = c_.threads;
    e.leak_budget = c_.leak_budget;
    ledger_.push_back({i, cell.alpha, cell.beta, cell.N, e.seed, e.first_replica, c_.replicas});
    return e;
  }

  template <class F>
  void guarded(std::size_t i, const Cell& cell, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      errors_.push_back({i, fmt::format("alpha={} beta={} N={}: {}", cell.alpha, cell.beta, cell.N, e.what())});
    }
  }

  static std::vector<std::int64_t> fm_grid(const std::vector<std::int64_t>& configured, std::int64_t N) {
    if (!configured.empty()) return configured;
    std::vector<std::int64_t> g;
    for (std::int64_t d : {8, 4, 2, 1})
      if (N / d >= 1 && (g.empty() || g.back() != N / d)) g.push_back(N / d);
    return g;
  }

  void free_energy() {
    const auto& o = c_.free_energy;
    csv::Table fe({"alpha", "beta", "N", "replicas", "p_hat", "p_se", "theta", "fm_rate", "fm_se",
                   "zhat_mean", "zhat_se", "zhat_median", "overlap_sum", "max_leaked_mass"});
    csv::Table fm({"alpha", "beta", "N", "theta", "n", "moment_mean", "moment_se"});
    csv::Table ends({"alpha", "beta", "N", "replica_id", "x", "probability"});
    const auto all = cells();
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto cell = all[i];
      const auto ens = ensemble(i, cell);
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        const auto traces = diag::simulate(ens, w, cell.beta, cell.N, c_.replicas);
        const auto f = diag::free_energy_from(traces, cell.N);
        const auto m = diag::fractional_moment_from(traces, o.theta, fm_grid(o.fm_grid, cell.N));
        std::vector<double> z;
        double leaked = 0.0;
        for (const auto& t : traces) {
          z.push_back(std::exp(t.back().log_zhat));
          for (const auto& row : t) leaked = std::max(leaked, row.leaked_mass);
        }
        const auto zs = stats::mean_se(z);
        fe.add(cell.alpha, cell.beta, cell.N, c_.replicas, f.p_hat, f.se, o.theta, m.rate, m.rate_se,
               zs.mean, zs.se, stats::quantile(z, 0.5), diag::mean_overlap_sum(traces, cell.N), leaked);
        for (const auto& r : m.rows) fm.add(cell.alpha, cell.beta, cell.N, o.theta, r.N, r.mean, r.se);
        if (o.traces) {
          csv::Table tr({"replica_id", "n", "log_zhat", "overlap", "max_endpoint_mass", "argmax_x", "leaked_mass"});
          for (std::size_t r = 0; r < traces.size(); ++r)
            for (const auto& row : traces[r])
              tr.add(ens.first_replica + r, row.n, row.log_zhat, row.overlap, row.max_endpoint_mass,
                     row.argmax_x, row.leaked_mass);
          write(fmt::format("traces_cell{}.csv", i), tr);
        }
        const auto ctx = polymer::make_context(w, env_, cell.beta, c_.leak_budget);
        for (std::size_t r = 0; r < o.endpoint_replicas; ++r) {
          const std::uint64_t id = ens.first_replica + r;
          const env::EnvField field(env_, ens.seed, id);
          const auto s = polymer::run(field, ctx, cell.N);
          for (std::size_t k = 0; k < s.rho.size(); ++k)
            if (s.rho[k] >= 1e-12)
              ends.add(cell.alpha, cell.beta, cell.N, id, s.x_lo + static_cast<std::int64_t>(k), s.rho[k]);
        }
      });
    }
    write("free_energy.csv", fe);
    write("fractional_moments.csv", fm);
    write("endpoints.csv", ends);
  }

  void phase_scan() {
    const auto& o = c_.phase_scan;
    csv::Table t({"alpha", "beta", "N", "theta", "replicas", "p_hat", "p_se", "fm_rate", "fm_se",
                  "overlap_sum", "weak_crit", "strong_crit", "verdict"});
    Json rows = Json::array();
    std::size_t base = 0;
    for (auto N : c_.Ns) {
      diag::PhaseScanConfig pc;
      for (double a : c_.alphas)
        for (double b : c_.betas) pc.cells.push_back({a, b});
      pc.L = c_.walk.L;
      pc.p0 = c_.walk.p0;
      pc.tail_tolerance = c_.walk.tail_tolerance;
      pc.support = c_.walk.support;
      pc.ensemble.env = env_;
      pc.ensemble.seed = c_.master_seed;
      pc.ensemble.first_replica = c_.share_seeds ? 0 : base * c_.replicas;
      pc.ensemble.threads = c_.threads;
      pc.ensemble.leak_budget = c_.leak_budget;
      pc.N = N;
      pc.replicas = c_.replicas;
      pc.theta = o.theta;
      pc.fm_grid = o.fm_grid;
      pc.pi_horizon = o.pi_horizon;
      pc.share_seeds = c_.share_seeds;
      for (std::size_t i = 0; i < pc.cells.size(); ++i)
        ledger_.push_back({base + i, pc.cells[i].alpha, pc.cells[i].beta, N, c_.master_seed,
                           pc.ensemble.first_replica + (c_.share_seeds ? 0 : i * c_.replicas), c_.replicas});
      const auto points = diag::phase_scan(pc);
      for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        t.add(p.alpha, p.beta, p.N, p.theta, p.replicas, p.p_hat, p.p_se, p.fm_rate, p.fm_se, p.overlap_sum,
              diag::to_string(p.weak), diag::to_string(p.strong), diag::to_string(p.verdict));
        Json r{{"alpha", p.alpha},
               {"beta", p.beta},
               {"N", p.N},
               {"theta", p.theta},
               {"replicas", p.replicas},
               {"p_hat", p.p_hat},
               {"p_se", p.p_se},
               {"fm_rate", p.fm_rate},
               {"fm_se", p.fm_se},
               {"overlap_sum", p.overlap_sum},
               {"weak_crit", diag::to_string(p.weak)},
               {"strong_crit", diag::to_string(p.strong)},
               {"verdict", diag::to_string(p.verdict)}};
        if (!p.error.empty()) {
          r["error"] = p.error;
          errors_.push_back({base + i, fmt::format("alpha={} beta={} N={}: {}", p.alpha, p.beta, p.N, p.error)});
        }
        rows.push_back(std::move(r));
      }
      base += pc.cells.size();
    }
    write("phase_scan.csv", t);
    write("phase_scan.json", Json{{"config", c_.to_json()}, {"rows", rows}});
  }

  void overlap() {
    const auto& o = c_.overlap;
    csv::Table per({"alpha", "beta", "N", "replica_id", "exact_overlap", "mc_overlap", "mc_se", "overlap_sum",
                    "neg_log_zhat", "ratio", "inside"});
    csv::Table sum({"alpha", "beta", "N", "replicas", "valid", "flagged", "inside", "fraction_inside",
                    "ratio_median", "ratio_q05", "ratio_q95", "mc_within_3se"});
    const auto all = cells();
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto cell = all[i];
      const auto ens = ensemble(i, cell);
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        const auto traces = diag::simulate(ens, w, cell.beta, cell.N, c_.replicas);
        const auto ratios = diag::overlap_log_ratio_from(traces, {cell.N}, o.lo, o.hi);
        const auto ctx = polymer::make_context(w, env_, cell.beta, c_.leak_budget);
        std::vector<stats::MeanSe> mc(c_.replicas);
        parallel_for(c_.replicas, c_.threads, [&](std::size_t r) {
          const env::EnvField field(env_, ens.seed, ens.first_replica + r);
          mc[r] = polymer::two_replica_overlap_mc(field, ctx, cell.N, o.mc_samples, ens.seed,
                                                  ens.first_replica + r);
        });
        std::size_t agree = 0;
        for (std::size_t r = 0; r < c_.replicas; ++r) {
          const auto& t = traces[r];
          double overlap_sum = 0.0;
          for (const auto& row : t) overlap_sum += row.overlap;
          const double exact = t.back().overlap;
          const double ratio = ratios.ratios[r][0];
          agree += std::fabs(exact - mc[r].mean) <= 3.0 * mc[r].se;
          per.add(cell.alpha, cell.beta, cell.N, ens.first_replica + r, exact, mc[r].mean, mc[r].se, overlap_sum,
                  -t.back().log_zhat, ratio, !std::isnan(ratio) && ratio >= o.lo && ratio <= o.hi);
        }
        const auto& s = ratios.per_N[0];
        sum.add(cell.alpha, cell.beta, cell.N, c_.replicas, s.valid, s.flagged, s.inside, s.fraction_inside(),
                s.median, s.q05, s.q95, agree);
      });
    }
    write("overlap.csv", per);
    write("overlap_summary.csv", sum);
  }

  void atoms() {
    const auto& o = c_.atoms;
    csv::Table per({"alpha", "beta", "N", "epsilon", "replica_id", "fraction_second_half", "fraction_all",
                    "final_max_mass"});
    csv::Table sum({"alpha", "beta", "N", "epsilon", "replicas", "mean_fraction", "se_fraction"});
    csv::Table steps({"alpha", "beta", "N", "replica_id", "n", "max_mass", "indicator", "running_fraction"});
    const auto all = cells();
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto cell = all[i];
      const auto ens = ensemble(i, cell);
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        const auto ctx = polymer::make_context(w, env_, cell.beta, c_.leak_budget);
        std::vector<loc::AtomTrace> traces(c_.replicas);
        parallel_for(c_.replicas, c_.threads, [&](std::size_t r) {
          const env::EnvField field(env_, ens.seed, ens.first_replica + r);
          traces[r] = loc::atom_trace(field, ctx, cell.N, o.epsilon);
        });
        std::vector<double> fractions;
        const std::int64_t from = std::max<std::int64_t>(1, cell.N / 2);
        for (std::size_t r = 0; r < c_.replicas; ++r) {
          const auto& t = traces[r];
          const double f = t.fraction(from, cell.N);
          fractions.push_back(f);
          per.add(cell.alpha, cell.beta, cell.N, o.epsilon, ens.first_replica + r, f, t.fraction(1, cell.N),
                  t.rows.back().max_mass);
          if (o.per_step)
            for (const auto& row : t.rows)
              steps.add(cell.alpha, cell.beta, cell.N, ens.first_replica + r, row.n, row.max_mass, row.indicator,
                        row.running_fraction);
        }
        const auto m = stats::mean_se(fractions);
        sum.add(cell.alpha, cell.beta, cell.N, o.epsilon, c_.replicas, m.mean, m.se);
      });
    }
    write("atoms.csv", per);
    write("atoms_summary.csv", sum);
    if (o.per_step) write("atoms_trace.csv", steps);
  }

  void fluct() {
    const auto& o = c_.fluct;
    csv::Table per({"alpha", "beta", "N", "replica_id", "radius", "exit_probability"});
    csv::Table sum({"alpha", "beta", "N", "eps", "radius", "theorem_mode", "radius_below_one", "replicas",
                    "mean", "se"});
    const auto all = cells();
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto cell = all[i];
      const auto ens = ensemble(i, cell);
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        const auto f = loc::fluctuation_probability(ens, w, cell.beta, cell.N, o.eps, c_.replicas, o.radius);
        if (f.theorem_mode)
          fmt::print("fluct: alpha={} beta={} N={} theorem radius {:.17g}{}\n", cell.alpha, cell.beta, cell.N,
                     f.radius, f.radius_below_one ? " (below 1)" : "");
        for (std::size_t r = 0; r < f.per_replica.size(); ++r)
          per.add(cell.alpha, cell.beta, cell.N, ens.first_replica + r, f.radius, f.per_replica[r]);
        sum.add(cell.alpha, cell.beta, cell.N, o.eps, f.radius, f.theorem_mode, f.radius_below_one, c_.replicas,
                f.mean.mean, f.mean.se);
      });
    }
    write("fluct.csv", per);
    write("fluct_summary.csv", sum);
  }

  void blocks() {
    const auto& o = c_.blocks;
    csv::Table per({"alpha", "beta", "N", "L", "M", "replica_id", "k", "log_zhat_block", "log_zhat_free"});
    csv::Table ex({"alpha", "beta", "N", "L", "M", "replicas", "hits", "frequency", "se", "expected"});
    csv::Table sh({"alpha", "beta", "N", "L", "k", "h", "exact_min", "argmin_x", "floor", "floor_exponent",
                   "potter_constant", "excluded_mass"});
    const auto all = cells();
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto cell = all[i];
      const auto ens = ensemble(i, cell);
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        const auto layout = o.L ? loc::BlockLayout::with_half_width(cell.N, *o.L, o.M)
                                : loc::BlockLayout::from_theorem(cell.alpha, cell.beta, cell.N, o.eps, o.M);
        const auto ctx = polymer::make_context(w, env_, cell.beta, c_.leak_budget);
        std::vector<loc::BlockValues> values(c_.replicas);
        parallel_for(c_.replicas, c_.threads, [&](std::size_t r) {
          const env::EnvField field(env_, ens.seed, ens.first_replica + r);
          values[r] = loc::block_partition_functions(field, ctx, layout);
        });
        for (std::size_t r = 0; r < c_.replicas; ++r)
          for (std::int64_t k = -layout.M; k <= layout.M; ++k)
            per.add(cell.alpha, cell.beta, cell.N, layout.L, layout.M, ens.first_replica + r, k,
                    values[r].log_zhat[static_cast<std::size_t>(k + layout.M)], values[r].log_zhat_free);
        const auto e = loc::exchangeability_frequency(ens, w, cell.beta, layout, c_.replicas);
        ex.add(cell.alpha, cell.beta, cell.N, layout.L, layout.M, c_.replicas, e.hits, e.frequency.estimate,
               e.frequency.se, e.expected);
        for (std::int64_t k = 1; k <= o.shift_k_max; ++k) {
          const auto s = loc::shift_rn_bound(w, layout, k, o.delta);
          sh.add(cell.alpha, cell.beta, cell.N, layout.L, k, s.h, s.exact_min, s.argmin_x, s.floor,
                 s.floor_exponent, s.potter_constant, s.excluded_mass);
        }
      });
    }
    write("blocks.csv", per);
    write("exchangeability.csv", ex);
    write("shift_bounds.csv", sh);
  }

  void bound() {
    const auto& o = c_.bound;
    csv::Table t({"alpha", "beta", "C1", "C2", "theta", "gamma", "K_cut", "rung", "n_of_beta", "log_n", "a_n",
                  "log_a_n", "delta_n", "log_delta_n", "cost_factor", "moment", "moment_se", "mc", "tail_sum",
                  "block_term", "block_se", "log_block_over_bound", "bracket", "bracket_over", "certified_by",
                  "p_upper", "log_neg_p_upper"});
    Json per_alpha = Json::array();
    for (std::size_t i = 0; i < c_.alphas.size(); ++i) {
      const Cell cell{c_.alphas[i], c_.betas.front(), 0};
      ledger_.push_back({i, cell.alpha, 0.0, 0, c_.master_seed, 0, 0});
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        auto cfg = o.config;
        cfg.seed = c_.master_seed;
        cfg.threads = c_.threads;
        const auto rows = bounds::bound_curve(w, env_, c_.betas, cfg, o.analytic);
        for (const auto& r : rows)
          t.add(cell.alpha, r.beta, r.C1, r.C2, r.theta, r.gamma, r.K_cut, r.rung, r.n_of_beta, r.log_n, r.a_n,
                r.log_a_n, r.delta_n, r.log_delta_n, r.cost_factor, r.moment, r.moment_se, r.mc, r.tail_sum,
                r.block_term, r.block_se, r.log_block_over_bound, r.bracket, r.bracket_over,
                bounds::to_string(r.certified_by), r.p_upper.value_or(std::nan("")), r.log_neg_p_upper);
        Json a{{"alpha", cell.alpha}};
        if (!rows.empty()) {
          const auto& r = rows.front();
          a["constants"] = Json{{"C1", r.C1}, {"C2", r.C2}, {"theta", r.theta}, {"gamma", r.gamma},
                                {"K_cut", r.K_cut}, {"rung", r.rung}};
        }
        const bool all_certified = std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.p_upper.has_value(); });
        a["certified"] = all_certified;
        a["slope"] = rows.size() >= 2 && all_certified ? Json(bounds::log_log_slope(rows)) : Json(nullptr);
        a["expected_slope"] = 2.0 * cell.alpha / (cell.alpha - 1.0);
        {
          try {
            const auto conj = bounds::conjugate_slowly_varying(w.L(), cell.alpha, o.config.C2);
            auto form = [](const bounds::LogPowerForm& f) {
              return Json{{"coefficient", f.coefficient}, {"exponent", f.exponent}};
            };
            a["conjugate"] = Json{{"l", form(conj.l)},
                                  {"l_alpha", form(conj.l_alpha)},
                                  {"l_sharp", form(conj.l_sharp)},
                                  {"phi", form(conj.phi)},
                                  {"description", conj.description}};
          } catch (const std::exception& e) {
            a["conjugate"] = Json{{"error", e.what()}};
          }
        }
        per_alpha.push_back(std::move(a));
      });
    }
    write("bound.csv", t);
    write("bound.json", Json{{"config", c_.to_json()}, {"alphas", per_alpha}});
  }

  void walk_check() {
    const auto& o = c_.walk_check;
    csv::Table t({"alpha", "L_family", "c", "L_gamma", "p0", "support", "tail_mass", "recurrence", "entropy",
                  "entropy_tail_bound", "pi_p", "pi_lo", "pi_hi", "scaling_rule"});
    csv::Table sc({"alpha", "n", "a_n"});
    for (std::size_t i = 0; i < c_.alphas.size(); ++i) {
      const Cell cell{c_.alphas[i], 0.0, o.horizon};
      ledger_.push_back({i, cell.alpha, 0.0, o.horizon, c_.master_seed, 0, 0});
      guarded(i, cell, [&] {
        const auto& w = walk_for(cell.alpha);
        const auto rec = walk::classify_recurrence(w);
        const auto h = walk::walk_entropy(w);
        const double nan = std::nan("");
        walk::IntersectionEstimate pi;
        pi.pi_p = pi.pi_lo = pi.pi_hi = nan;
        if (rec == walk::Recurrence::transient) pi = walk::intersection_probability(w, o.pi_horizon);
        const auto seq = walk::scaling_sequence(w, o.horizon);
        const std::string family = w.L().family == walk::LFamily::constant ? "constant" : "log-power";
        t.add(cell.alpha, family, w.L().c, w.L().gamma, w.p0(), w.support(), w.tail_mass(), walk::to_string(rec),
              h.value, h.tail_bound, pi.pi_p, pi.pi_lo, pi.pi_hi, seq.rule);
        for (std::int64_t n = 1; n <= seq.horizon(); ++n) sc.add(cell.alpha, n, seq[n]);
      });
    }
    write("walk_check.csv", t);
    write("scaling.csv", sc);
  }
};

}  // namespace

RunManifest run(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Runner r(config);
  r.run();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r.finish(seconds);
}

}  // namespace polymerlab::harness
