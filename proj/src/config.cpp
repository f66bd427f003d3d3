#include "poe/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "poe/annealing.hpp"
#include "poe/ar.hpp"
#include "poe/errors.hpp"
#include "poe/schedule.hpp"
#include "poe/smc.hpp"

namespace poe::config {
namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& message) {
  fail(ErrorKind::kInvalidConfig, (path.empty() ? std::string("config") : path) + ": " + message);
}

template <typename T>
struct Tag {};

double read(const Json& j, const std::string& path, Tag<double>) {
  if (!j.is_number()) config_error(path, "expected a number");
  return j.get<double>();
}

long read(const Json& j, const std::string& path, Tag<long>) {
  if (!j.is_number_integer()) config_error(path, "expected an integer");
  return j.get<long>();
}

int read(const Json& j, const std::string& path, Tag<int>) {
  const long v = read(j, path, Tag<long>{});
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) config_error(path, "out of range");
  return static_cast<int>(v);
}

std::uint64_t read(const Json& j, const std::string& path, Tag<std::uint64_t>) {
  if (!j.is_number_unsigned()) config_error(path, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

bool read(const Json& j, const std::string& path, Tag<bool>) {
  if (!j.is_boolean()) config_error(path, "expected true or false");
  return j.get<bool>();
}

std::string read(const Json& j, const std::string& path, Tag<std::string>) {
  if (!j.is_string()) config_error(path, "expected a string");
  return j.get<std::string>();
}

template <typename T>
std::vector<T> read(const Json& j, const std::string& path, Tag<std::vector<T>>) {
  if (!j.is_array()) config_error(path, "expected an array");
  std::vector<T> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read(j[i], path + "[" + std::to_string(i) + "]", Tag<T>{}));
  return out;
}

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown fields.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) config_error(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_->contains(key); }

  std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  T required(const std::string& key) {
    seen_.insert(key);
    if (!j_->contains(key)) config_error(path(key), "missing required field");
    return read(j_->at(key), path(key), Tag<T>{});
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_->contains(key)) return fallback;
    return read(j_->at(key), path(key), Tag<T>{});
  }

  Node child(const std::string& key) {
    seen_.insert(key);
    return Node(j_->at(key), path(key));
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_->at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_->items()) {
      if (!seen_.count(key)) config_error(path(key), "unknown field");
    }
  }

  const std::string& here() const { return path_; }

 private:
  const Json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Parse>
void check_choice(const std::string& path, const std::string& value, Parse parse) {
  try {
    parse(value);
  } catch (const Error& e) {
    config_error(path, e.what());
  }
}

void check_one_of(const std::string& path, const std::string& value, std::initializer_list<const char*> options) {
  for (const char* o : options) {
    if (value == o) return;
  }
  std::string list;
  for (const char* o : options) list += (list.empty() ? "" : ", ") + std::string(o);
  config_error(path, "'" + value + "' is not one of: " + list);
}

ExpertDecl parse_expert(Node n) {
  ExpertDecl e;
  e.name = n.required<std::string>("name");
  const std::string kind = n.required<std::string>("kind");
  if (kind == "gaussian") {
    e.params = GaussianParams{n.required<std::vector<double>>("mean"), n.required<Matrix>("cov")};
  } else if (kind == "gmm") {
    e.params = GmmParams{n.required<std::vector<double>>("weights"), n.required<std::vector<std::vector<double>>>("means"),
                         n.required<std::vector<Matrix>>("covs")};
  } else if (kind == "tabular_ar") {
    TabularParams p;
    p.levels = n.optional<std::vector<std::vector<double>>>("levels", {});
    p.file = n.optional<std::string>("file", "");
    if (p.levels.empty() == p.file.empty()) config_error(n.here(), "tabular_ar needs exactly one of 'levels' or 'file'");
    e.params = p;
  } else if (kind == "random_tabular_ar" || kind == "random_markov_ar") {
    RandomTabularParams p;
    p.markov = kind == "random_markov_ar";
    p.concentration = n.required<double>("concentration");
    p.seed = n.required<std::uint64_t>("seed");
    if (!(p.concentration > 0.0)) config_error(n.path("concentration"), "must be positive");
    e.params = p;
  } else if (kind == "uniform_ar") {
    e.params = UniformArParams{};
  } else {
    config_error(n.path("kind"), "unknown expert kind '" + kind + "'");
  }
  e.region = n.optional<std::vector<long>>("region", {});
  e.weight = n.optional<std::vector<double>>("weight", {});
  e.jacobian = n.optional<std::string>("jacobian", "analytic");
  check_one_of(n.path("jacobian"), e.jacobian, {"analytic", "finite_difference"});
  e.fd_step = n.optional<double>("fd_step", 1e-4);
  if (!(e.fd_step > 0.0)) config_error(n.path("fd_step"), "must be positive");
  n.finish();
  return e;
}

RewardDecl parse_reward(Node n) {
  RewardDecl r;
  r.name = n.optional<std::string>("name", "");
  const std::string kind = n.required<std::string>("kind");
  if (kind == "linear") {
    r.params = LinearParams{n.required<std::vector<double>>("a")};
  } else if (kind == "quadratic") {
    r.params = QuadraticParams{n.required<Matrix>("A"), n.required<std::vector<double>>("b")};
  } else if (kind == "indicator") {
    IndicatorParams p;
    p.normal = n.required<std::vector<double>>("normal");
    p.offset = n.optional<double>("offset", 0.0);
    p.sharpness = n.optional<double>("sharpness", 1.0);
    p.hard = n.optional<bool>("hard", false);
    r.params = p;
  } else {
    config_error(n.path("kind"), "unknown reward kind '" + kind + "'");
  }
  if (r.name.empty()) r.name = kind;
  n.finish();
  return r;
}

std::string_view expert_kind(const ExpertParams& p) {
  switch (p.index()) {
    case 0: return "gaussian";
    case 1: return "gmm";
    case 2: return "tabular_ar";
    case 3: return std::get<RandomTabularParams>(p).markov ? "random_markov_ar" : "random_tabular_ar";
    default: return "uniform_ar";
  }
}

std::string_view reward_kind(const RewardParams& p) {
  switch (p.index()) {
    case 0: return "linear";
    case 1: return "quadratic";
    default: return "indicator";
  }
}

void validate(const ExperimentConfig& c) {
  const bool discrete = c.state.kind == "discrete";
  std::set<std::string> names;
  for (std::size_t i = 0; i < c.experts.size(); ++i) {
    const auto& e = c.experts[i];
    const std::string path = "experts[" + std::to_string(i) + "]";
    if (e.name.empty()) config_error(path + ".name", "must not be empty");
    if (!names.insert(e.name).second) config_error(path + ".name", "duplicate expert name '" + e.name + "'");
    const bool ar_kind = e.params.index() >= 2;
    if (ar_kind != discrete) {
      config_error(path + ".kind", "'" + std::string(expert_kind(e.params)) + "' does not fit a " + c.state.kind + " state");
    }
    if (discrete && (!e.region.empty() || !e.weight.empty())) {
      config_error(path, "autoregressive experts take no region or weight");
    }
  }
  for (const auto& [child, parents] : c.conditional.parents) {
    if (!names.count(child)) config_error("conditional.parents." + child, "unknown expert");
    for (const auto& p : parents) {
      if (!names.count(p)) config_error("conditional.parents." + child, "unknown parent '" + p + "'");
    }
  }
  if (discrete && c.schedule.T != c.state.num_slices) {
    config_error("schedule.T", "must equal state.num_slices (" + std::to_string(c.state.num_slices) +
                                   ") for autoregressive products");
  }
  if (c.oracle) {
    const auto& o = *c.oracle;
    if (discrete != (o.kind == "enumeration")) config_error("oracle.kind", "'" + o.kind + "' does not fit the state");
  }
}

}  // namespace

ExperimentConfig from_json(const Json& json, const std::filesystem::path& base_dir) {
  Node root(json, "");
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.version = root.required<int>("version");
  if (c.version != kSchemaVersion) {
    config_error("version", "unsupported schema version " + std::to_string(c.version) + " (expected " +
                                std::to_string(kSchemaVersion) + ")");
  }
  c.name = root.optional<std::string>("name", "");
  c.description = root.optional<std::string>("description", "");

  {
    Node n = root.child("state");
    c.state.kind = n.required<std::string>("kind");
    check_one_of(n.path("kind"), c.state.kind, {"continuous", "discrete"});
    if (c.state.kind == "continuous") {
      c.state.dim = n.required<long>("dim");
      if (c.state.dim < 1) config_error(n.path("dim"), "must be >= 1");
    } else {
      c.state.num_slices = n.required<int>("num_slices");
      c.state.alphabet = n.required<int>("alphabet");
      c.state.slice_shape = n.optional<int>("slice_shape", 1);
      if (c.state.num_slices < 2) config_error(n.path("num_slices"), "must be >= 2");
      if (c.state.alphabet < 1) config_error(n.path("alphabet"), "must be >= 1");
      if (c.state.slice_shape < 1) config_error(n.path("slice_shape"), "must be >= 1");
    }
    n.finish();
  }

  if (!root.has("experts")) config_error("experts", "missing required field");
  const Json& experts = root.raw("experts");
  if (!experts.is_array() || experts.empty()) config_error("experts", "expected a non-empty array");
  for (std::size_t i = 0; i < experts.size(); ++i) {
    c.experts.push_back(parse_expert(Node(experts[i], "experts[" + std::to_string(i) + "]")));
  }

  if (root.has("rewards")) {
    const Json& rewards = root.raw("rewards");
    if (!rewards.is_array()) config_error("rewards", "expected an array");
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      c.rewards.push_back(parse_reward(Node(rewards[i], "rewards[" + std::to_string(i) + "]")));
    }
  }

  if (root.has("schedule")) {
    Node n = root.child("schedule");
    auto& s = c.schedule;
    s.T = n.optional<int>("T", s.T);
    s.grid = n.optional<std::string>("grid", s.grid);
    check_choice(n.path("grid"), s.grid, parse_time_grid);
    s.path = n.optional<std::string>("path", s.path);
    check_choice(n.path("path"), s.path, parse_path_kind);
    s.K = n.optional<int>("K", s.K);
    s.kappa_rule = n.optional<std::string>("kappa_rule", s.kappa_rule);
    check_one_of(n.path("kappa_rule"), s.kappa_rule, {"sigma_proportional", "constant"});
    s.kappa_scale = n.optional<double>("kappa_scale", s.kappa_scale);
    s.kappa_floor = n.optional<double>("kappa_floor", s.kappa_floor);
    s.mcmc = n.optional<std::string>("mcmc", s.mcmc);
    check_choice(n.path("mcmc"), s.mcmc, parse_mcmc_kind);
    s.score_time_ceiling = n.optional<double>("score_time_ceiling", s.score_time_ceiling);
    s.sweep_order = n.optional<std::string>("sweep_order", s.sweep_order);
    check_choice(n.path("sweep_order"), s.sweep_order, parse_sweep_order);
    s.append = n.optional<std::string>("append", s.append);
    check_one_of(n.path("append"), s.append, {"sample", "argmax"});
    if (s.T < 2) config_error(n.path("T"), "must be >= 2");
    if (s.K < 0) config_error(n.path("K"), "must be >= 0");
    if (!(s.kappa_scale >= 0.0)) config_error(n.path("kappa_scale"), "must be >= 0");
    if (!(s.kappa_floor >= 0.0)) config_error(n.path("kappa_floor"), "must be >= 0");
    if (!(s.score_time_ceiling > 0.0 && s.score_time_ceiling <= 1.0)) {
      config_error(n.path("score_time_ceiling"), "must lie in (0, 1]");
    }
    n.finish();
  }

  if (root.has("smc")) {
    Node n = root.child("smc");
    auto& s = c.smc;
    s.L = n.optional<long>("L", s.L);
    if (s.L < 1) config_error(n.path("L"), "must be >= 1");
    s.resample = n.optional<std::string>("resample", s.resample);
    if (s.resample == "on") s.resample = "ess";
    if (s.resample == "off") s.resample = "never";
    check_choice(n.path("resample"), s.resample, parse_resample_kind);
    s.ess_fraction = n.optional<double>("ess_fraction", s.ess_fraction);
    if (!(s.ess_fraction > 0.0 && s.ess_fraction <= 1.0)) config_error(n.path("ess_fraction"), "must lie in (0, 1]");
    s.checkpoints = n.optional<std::vector<int>>("checkpoints", {});
    s.binarize = n.optional<bool>("binarize", false);
    s.scheme = n.optional<std::string>("scheme", s.scheme);
    check_choice(n.path("scheme"), s.scheme, parse_resample_scheme);
    s.weight_mode = n.optional<std::string>("weight_mode", s.weight_mode);
    check_choice(n.path("weight_mode"), s.weight_mode, parse_weight_mode);
    n.finish();
  }

  if (root.has("conditional")) {
    Node n = root.child("conditional");
    auto& cd = c.conditional;
    if (n.has("parents")) {
      Node p = n.child("parents");
      const Json& raw = n.raw("parents");
      for (const auto& [child, list] : raw.items()) {
        cd.parents[child] = p.required<std::vector<std::string>>(child);
      }
      p.finish();
    }
    cd.w = n.optional<double>("w", cd.w);
    if (!(cd.w >= 0.0)) config_error(n.path("w"), "must be >= 0");
    cd.num_updates = n.optional<int>("num_updates", cd.num_updates);
    if (cd.num_updates < 0) config_error(n.path("num_updates"), "must be >= 0");
    n.finish();
  }

  if (root.has("oracle") && !root.raw("oracle").is_null()) {
    Node n = root.child("oracle");
    OracleDecl o;
    o.kind = n.required<std::string>("kind");
    check_one_of(n.path("kind"), o.kind, {"gaussian", "grid", "enumeration"});
    o.runs = n.optional<long>("runs", o.runs);
    if (o.runs < 1) config_error(n.path("runs"), "must be >= 1");
    o.use = n.optional<std::string>("use", o.use);
    check_one_of(n.path("use"), o.use, {"selected", "population"});
    o.lower = n.optional<std::vector<double>>("lower", {});
    o.upper = n.optional<std::vector<double>>("upper", {});
    o.points = n.optional<long>("points", o.points);
    o.bins = n.optional<long>("bins", o.bins);
    if (o.bins < 2) config_error(n.path("bins"), "must be >= 2");
    if (o.kind == "grid") {
      if (o.lower.empty() || o.lower.size() != o.upper.size() || o.lower.size() > 2) {
        config_error(n.path("lower"), "grid oracles need 1D or 2D lower/upper bounds");
      }
      if (o.points < 512) config_error(n.path("points"), "must be >= 512");
    }
    const auto threshold = [&](const char* key) -> std::optional<double> {
      if (!n.has(key)) return std::nullopt;
      const double v = n.required<double>(key);
      if (!(v >= 0.0)) config_error(n.path(key), "must be >= 0");
      return v;
    };
    o.mean_tol = threshold("mean_tol");
    o.var_tol = threshold("var_tol");
    o.cov_rel_tol = threshold("cov_rel_tol");
    o.tv_max = threshold("tv_max");
    o.mode_tol = threshold("mode_tol");
    n.finish();
    c.oracle = o;
  }

  c.seeds = root.optional<std::vector<std::uint64_t>>("seeds", c.seeds);
  if (c.seeds.empty()) config_error("seeds", "must list at least one seed");
  c.output_dir = root.optional<std::string>("output_dir", c.output_dir);
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, std::string_view source) {
  Json json;
  try {
    json = Json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const Json::parse_error& e) {
    // Translate the byte offset into line and column.
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string message = e.what();
    if (const auto pos = message.find("syntax error"); pos != std::string::npos) message = message.substr(pos);
    fail(ErrorKind::kInvalidConfig,
         std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + message);
  }
  return from_json(json, base_dir);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kInvalidConfig, "cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.parent_path(), path.string());
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["version"] = c.version;
  j["name"] = c.name;
  j["description"] = c.description;
  if (c.state.kind == "continuous") {
    j["state"] = {{"kind", c.state.kind}, {"dim", c.state.dim}};
  } else {
    j["state"] = {{"kind", c.state.kind},
                  {"num_slices", c.state.num_slices},
                  {"alphabet", c.state.alphabet},
                  {"slice_shape", c.state.slice_shape}};
  }
  j["experts"] = Json::array();
  for (const auto& e : c.experts) {
    Json x;
    x["name"] = e.name;
    x["kind"] = std::string(expert_kind(e.params));
    if (const auto* g = std::get_if<GaussianParams>(&e.params)) {
      x["mean"] = g->mean;
      x["cov"] = g->cov;
    } else if (const auto* m = std::get_if<GmmParams>(&e.params)) {
      x["weights"] = m->weights;
      x["means"] = m->means;
      x["covs"] = m->covs;
    } else if (const auto* t = std::get_if<TabularParams>(&e.params)) {
      if (t->file.empty()) {
        x["levels"] = t->levels;
      } else {
        x["file"] = t->file;
      }
    } else if (const auto* r = std::get_if<RandomTabularParams>(&e.params)) {
      x["concentration"] = r->concentration;
      x["seed"] = r->seed;
    }
    if (c.state.kind == "continuous") {
      x["region"] = e.region;
      x["weight"] = e.weight;
      x["jacobian"] = e.jacobian;
      x["fd_step"] = e.fd_step;
    }
    j["experts"].push_back(std::move(x));
  }
  j["rewards"] = Json::array();
  for (const auto& r : c.rewards) {
    Json x;
    x["name"] = r.name;
    x["kind"] = std::string(reward_kind(r.params));
    if (const auto* l = std::get_if<LinearParams>(&r.params)) {
      x["a"] = l->a;
    } else if (const auto* q = std::get_if<QuadraticParams>(&r.params)) {
      x["A"] = q->A;
      x["b"] = q->b;
    } else {
      const auto& ind = std::get<IndicatorParams>(r.params);
      x["normal"] = ind.normal;
      x["offset"] = ind.offset;
      x["sharpness"] = ind.sharpness;
      x["hard"] = ind.hard;
    }
    j["rewards"].push_back(std::move(x));
  }
  const auto& s = c.schedule;
  j["schedule"] = {{"T", s.T},
                   {"grid", s.grid},
                   {"path", s.path},
                   {"K", s.K},
                   {"kappa_rule", s.kappa_rule},
                   {"kappa_scale", s.kappa_scale},
                   {"kappa_floor", s.kappa_floor},
                   {"mcmc", s.mcmc},
                   {"score_time_ceiling", s.score_time_ceiling},
                   {"sweep_order", s.sweep_order},
                   {"append", s.append}};
  const auto& m = c.smc;
  j["smc"] = {{"L", m.L},
              {"resample", m.resample},
              {"ess_fraction", m.ess_fraction},
              {"checkpoints", m.checkpoints},
              {"binarize", m.binarize},
              {"scheme", m.scheme},
              {"weight_mode", m.weight_mode}};
  Json parents = Json::object();
  for (const auto& [child, list] : c.conditional.parents) parents[child] = list;
  j["conditional"] = {{"parents", parents}, {"w", c.conditional.w}, {"num_updates", c.conditional.num_updates}};
  if (c.oracle) {
    const auto& o = *c.oracle;
    Json x = {{"kind", o.kind}, {"runs", o.runs}, {"use", o.use}, {"lower", o.lower},
              {"upper", o.upper}, {"points", o.points}, {"bins", o.bins}};
    if (o.mean_tol) x["mean_tol"] = *o.mean_tol;
    if (o.var_tol) x["var_tol"] = *o.var_tol;
    if (o.cov_rel_tol) x["cov_rel_tol"] = *o.cov_rel_tol;
    if (o.tv_max) x["tv_max"] = *o.tv_max;
    if (o.mode_tol) x["mode_tol"] = *o.mode_tol;
    j["oracle"] = std::move(x);
  }
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

void apply_override(Json& json, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorKind::kInvalidConfig, "override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &json;
  std::stringstream parts(key);
  std::string part;
  std::string walked;
  while (std::getline(parts, part, '.')) {
    walked += (walked.empty() ? "" : ".") + part;
    if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(part);
      } catch (const std::exception&) {
        fail(ErrorKind::kInvalidConfig, walked + ": expected an array index");
      }
      if (index >= node->size()) fail(ErrorKind::kInvalidConfig, walked + ": index out of range");
      node = &(*node)[index];
    } else if (node->is_object()) {
      node = &(*node)[part];
    } else {
      fail(ErrorKind::kInvalidConfig, walked + ": cannot descend into a scalar");
    }
  }
  *node = std::move(value);
}

ExperimentConfig with_overrides(const ExperimentConfig& config, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return config;
  Json json = to_json(config);
  for (const auto& o : overrides) apply_override(json, o);
  return from_json(json, config.base_dir);
}

bool is_scalar_field(const ExperimentConfig& config, std::string_view dotted) {
  const Json json = to_json(config);
  const Json* node = &json;
  std::stringstream parts{std::string(dotted)};
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (node->is_object()) {
      if (!node->contains(part)) return false;
      node = &node->at(part);
    } else if (node->is_array()) {
      std::size_t index = 0;
      try {
        index = std::stoul(part);
      } catch (const std::exception&) {
        return false;
      }
      if (index >= node->size()) return false;
      node = &node->at(index);
    } else {
      return false;
    }
  }
  return node->is_primitive() && !node->is_null();
}

}  // namespace poe::config
