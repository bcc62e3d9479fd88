#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "causalflow/error.hpp"

namespace causalflow::cli {

namespace {

using nlohmann::json;

const std::pair<Kind, const char*> kKindNames[] = {
    {Kind::kRegression, "regression"}, {Kind::kPortfolio, "portfolio"},
    {Kind::kAugmentation, "augmentation"}, {Kind::kUap, "uap"},
    {Kind::kExample35, "example35"}, {Kind::kWgBounds, "wg-bounds"},
};

// Reads keys of one JSON object and complains about whatever is left over.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing key '" + key + "'");
    get(key, out);
  }

  const json& sub(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

void positive(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what + " must be positive");
}

// Unsigned counts arrive as JSON integers; negative ones would wrap.
void count(Reader& r, const std::string& key, std::size_t& out) {
  long long v = static_cast<long long>(out);
  r.get(key, v);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  out = static_cast<std::size_t>(v);
}

DagSpec parse_dag(const json& j) {
  Reader r(j, "dag");
  DagSpec s;
  r.require("d", s.d);
  if (s.d < 1) throw ConfigError("dag.d must be at least 1");
  if (r.has("p") == r.has("edges")) throw ConfigError("dag: give exactly one of 'p' and 'edges'");
  if (r.has("p")) {
    double p = 0;
    r.get("p", p);
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("dag.p must lie in [0, 1]");
    s.p = p;
  } else {
    std::vector<std::vector<int>> e;
    r.get("edges", e);
    for (const auto& pair : e) {
      if (pair.size() != 2) throw ConfigError("dag.edges: each edge is [from, to]");
      s.edges.emplace_back(pair[0], pair[1]);
    }
    try {
      Dag(s.d, s.edges);
    } catch (const InvalidArgument& ex) {
      throw ConfigError(std::string("dag.edges: ") + ex.what());
    }
  }
  r.finish();
  return s;
}

FlowConfig parse_model(const json& j) {
  Reader r(j, "model");
  FlowConfig m;
  r.get("width", m.width);
  r.get("alpha", m.alpha);
  r.get("hidden", m.hidden);
  std::string base = to_string(m.base);
  r.get("base", base);
  r.get("positivity_floor", m.positivity_floor);
  r.get("head_init_scale", m.head_init_scale);
  r.finish();
  try {
    m.base = base_kind_from_string(base);
    m.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("model: ") + ex.what());
  }
  return m;
}

TrainConfig parse_train(const json& j) {
  Reader r(j, "train");
  TrainConfig t;
  r.get("learning_rate", t.learning_rate);
  count(r, "batch_size", t.batch_size);
  r.get("max_epochs", t.max_epochs);
  r.get("patience", t.patience);
  r.get("val_fraction", t.val_fraction);
  r.get("grad_clip", t.grad_clip);
  r.get("standardize", t.standardize);
  r.get("kink_correction", t.kink_correction);
  r.finish();
  try {
    t.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("train: ") + ex.what());
  }
  return t;
}

std::string witness_text(const std::vector<int>& cycle) {
  std::string s;
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (i) s += " -> ";
    s += cycle[i] == 0 ? "T" : std::to_string(cycle[i]);
  }
  return s;
}

void check_targets(const ExperimentConfig& c) {
  if (c.targets.empty()) throw ConfigError("targets must be non-empty");
  TargetSet t = [&] {
    try {
      return TargetSet(c.targets, c.dag->d);
    } catch (const InvalidArgument& ex) {
      throw ConfigError(std::string("targets: ") + ex.what());
    }
  }();
  if (t.indices().size() == static_cast<std::size_t>(c.dag->d))
    throw ConfigError("targets: at least one vertex must stay outside T");
  if (c.dag->p) return;  // sampled DAGs are redrawn until the condition holds
  Dag dag(c.dag->d, c.dag->edges);
  auto cycle = quotient_cycle_witness(dag, t);
  if (!cycle.empty())
    throw ConfigError("target set violates the quotient condition; cycle " + witness_text(cycle));
}

}  // namespace

std::string to_string(Kind k) {
  for (auto [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

ExperimentConfig parse_config(const json& j) {
  Reader r(j, "config");
  ExperimentConfig c;
  std::string kind;
  r.require("kind", kind);
  bool known = false;
  for (auto [k, name] : kKindNames)
    if (kind == name) {
      c.kind = k;
      known = true;
    }
  if (!known) throw ConfigError("unknown kind '" + kind + "'");
  r.get("output_dir", c.output_dir);
  if (c.output_dir.empty()) throw ConfigError("output_dir must be non-empty");
  r.get("seeds", c.seeds);
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");

  const bool regression_like = c.kind == Kind::kRegression || c.kind == Kind::kAugmentation;
  const bool tasks = regression_like || c.kind == Kind::kPortfolio;
  const bool flows = c.kind == Kind::kAugmentation || c.kind == Kind::kUap;

  if (regression_like || c.kind == Kind::kUap || c.kind == Kind::kWgBounds) {
    if (!r.has("dag")) throw ConfigError("config: missing key 'dag'");
    c.dag = parse_dag(r.sub("dag"));
  }
  if (regression_like) {
    r.require("targets", c.targets);
    check_targets(c);
  }
  if (tasks) {
    count(r, "interventions", c.interventions);
    count(r, "n_train", c.n_train);
    count(r, "n_test", c.n_test);
    count(r, "buckets", c.buckets);
    positive(c.n_train >= 2 && c.n_test >= 2, "n_train and n_test (at least 2)");
    positive(c.buckets >= 1 && c.interventions >= c.buckets, "interventions >= buckets >= 1, so each");
  }
  if (c.kind == Kind::kPortfolio) {
    r.get("gamma", c.gamma);
    positive(c.gamma > 0.0, "gamma");
    if (r.has("portfolio")) {
      Reader p(r.sub("portfolio"), "portfolio");
      p.get("stocks", c.portfolio.stocks);
      p.get("drivers", c.portfolio.drivers);
      p.get("signals", c.portfolio.signals);
      p.get("p", c.portfolio.p);
      p.finish();
      positive(c.portfolio.stocks >= 1, "portfolio.stocks");
      if (c.portfolio.drivers < 0 || c.portfolio.signals < 0 || c.portfolio.drivers + c.portfolio.signals < 1)
        throw ConfigError("portfolio needs at least one driver or signal factor");
      if (!(c.portfolio.p >= 0.0 && c.portfolio.p <= 1.0)) throw ConfigError("portfolio.p must lie in [0, 1]");
    }
  }
  if (flows) {
    if (r.has("model")) c.model = parse_model(r.sub("model"));
    if (r.has("train")) c.train = parse_train(r.sub("train"));
  }
  if (c.kind == Kind::kAugmentation) {
    count(r, "n_synth", c.n_synth);
    positive(c.n_synth >= 2, "n_synth (at least 2)");
    if (r.has("generators")) {
      std::vector<std::string> names;
      r.get("generators", names);
      if (names.empty()) throw ConfigError("generators must be non-empty");
      c.generators.clear();
      for (const auto& n : names) {
        try {
          c.generators.push_back(generator_from_string(n));
        } catch (const InvalidArgument&) {
          throw ConfigError("unknown generator '" + n + "'");
        }
      }
    }
  }
  if (c.kind == Kind::kUap) {
    count(r, "n_train", c.n_train);
    count(r, "n_test", c.n_test);
    count(r, "n_samples", c.n_samples);
    positive(c.n_test >= 1 && c.n_samples >= 1, "n_test and n_samples");
    if (c.n_train < 2 * c.train.batch_size) throw ConfigError("n_train must be at least 2 * batch_size");
  }
  if (c.kind == Kind::kExample35) {
    r.get("eps", c.eps);
    count(r, "n_samples", c.n_samples);
    positive(c.n_samples >= 2, "n_samples (at least 2)");
    for (double e : c.eps)
      if (!(e >= 0.0 && std::isfinite(e))) throw ConfigError("eps values must be finite and >= 0");
  }
  if (c.kind == Kind::kWgBounds) {
    count(r, "instances", c.instances);
    r.get("max_support", c.max_support);
    if (c.max_support < 1) throw ConfigError("max_support must be at least 1");
    if (c.dag->d > 6) throw ConfigError("wg-bounds: dag.d must be at most 6");
    if (c.dag->p) throw ConfigError("wg-bounds: give explicit dag.edges");
  }
  r.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ConfigError(path + ": " + ex.what());
  }
  return parse_config(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  json j{{"kind", cli::to_string(kind)}, {"output_dir", output_dir}, {"seeds", seeds}};
  if (dag) {
    json d{{"d", dag->d}};
    if (dag->p) {
      d["p"] = *dag->p;
    } else {
      json e = json::array();
      for (auto [a, b] : dag->edges) e.push_back({a, b});
      d["edges"] = e;
    }
    j["dag"] = d;
  }
  const bool regression_like = kind == Kind::kRegression || kind == Kind::kAugmentation;
  if (regression_like) j["targets"] = targets;
  if (regression_like || kind == Kind::kPortfolio) {
    j["interventions"] = interventions;
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["buckets"] = buckets;
  }
  if (kind == Kind::kPortfolio) {
    j["gamma"] = gamma;
    j["portfolio"] = {{"stocks", portfolio.stocks}, {"drivers", portfolio.drivers},
                      {"signals", portfolio.signals}, {"p", portfolio.p}};
  }
  if (kind == Kind::kAugmentation || kind == Kind::kUap) {
    j["model"] = {{"width", model.width}, {"alpha", model.alpha}, {"hidden", model.hidden},
                  {"base", causalflow::to_string(model.base)}, {"positivity_floor", model.positivity_floor},
                  {"head_init_scale", model.head_init_scale}};
    j["train"] = {{"learning_rate", train.learning_rate}, {"batch_size", train.batch_size},
                  {"max_epochs", train.max_epochs}, {"patience", train.patience},
                  {"val_fraction", train.val_fraction}, {"grad_clip", train.grad_clip},
                  {"standardize", train.standardize}, {"kink_correction", train.kink_correction}};
  }
  if (kind == Kind::kAugmentation) {
    j["n_synth"] = n_synth;
    json g = json::array();
    for (auto k : generators) g.push_back(causalflow::to_string(k));
    j["generators"] = g;
  }
  if (kind == Kind::kUap) {
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["n_samples"] = n_samples;
  }
  if (kind == Kind::kExample35) {
    j["eps"] = eps;
    j["n_samples"] = n_samples;
  }
  if (kind == Kind::kWgBounds) {
    j["instances"] = instances;
    j["max_support"] = max_support;
  }
  return j;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = cfg.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace causalflow::cli
