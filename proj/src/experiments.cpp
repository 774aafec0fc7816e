#include "webweave/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include <unistd.h>

#include <openssl/evp.h>

#include "webweave/brownian_sim.hpp"
#include "webweave/counting.hpp"
#include "webweave/diagnostics.hpp"
#include "webweave/error.hpp"
#include "webweave/lattice_walks.hpp"
#include "webweave/path_space.hpp"
#include "webweave/rng.hpp"
#include "webweave/stats.hpp"

#ifndef WEBWEAVE_VERSION
#define WEBWEAVE_VERSION "0.0.0"
#endif

namespace webweave {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view version() noexcept { return WEBWEAVE_VERSION; }

SchemaError::SchemaError(std::vector<Violation> v)
    : std::runtime_error(v.empty() ? "schema violation" : v.front().pointer + ": " + v.front().message),
      violations_(std::move(v))
{
}

// ---------------------------------------------------------------------------
// Schema checking

namespace {

std::string escape_pointer(std::string_view key)
{
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

struct Node
{
  const json *j;
  std::string ptr;
};

class Checker
{
public:
  std::vector<Violation> violations;

  void fail(const std::string &ptr, std::string message) { violations.push_back({ptr, std::move(message)}); }

  std::optional<Node> get(const Node &parent, const char *key, bool required)
  {
    const std::string ptr = parent.ptr + "/" + escape_pointer(key);
    auto it = parent.j->find(key);
    if (it == parent.j->end()) {
      if (required) fail(ptr, "required property is missing");
      return std::nullopt;
    }
    return Node{&*it, ptr};
  }

  bool object(const Node &n, std::initializer_list<const char *> allowed)
  {
    if (!n.j->is_object()) {
      fail(n.ptr, "expected an object");
      return false;
    }
    for (const auto &item : n.j->items()) {
      const bool known =
          std::any_of(allowed.begin(), allowed.end(), [&](const char *k) { return item.key() == k; });
      if (!known) fail(n.ptr + "/" + escape_pointer(item.key()), "unknown property");
    }
    return true;
  }

  bool number(const std::optional<Node> &n)
  {
    if (!n) return false;
    if (!n->j->is_number()) {
      fail(n->ptr, "expected a number");
      return false;
    }
    return true;
  }

  void real(const std::optional<Node> &n) { number(n); }

  void positive(const std::optional<Node> &n)
  {
    if (number(n) && !(n->j->get<double>() > 0.0)) fail(n->ptr, "must be greater than 0");
  }

  void nonnegative(const std::optional<Node> &n)
  {
    if (number(n) && !(n->j->get<double>() >= 0.0)) fail(n->ptr, "must be at least 0");
  }

  void integer(const std::optional<Node> &n, long long min)
  {
    if (!n) return;
    if (!n->j->is_number_integer()) {
      fail(n->ptr, "expected an integer");
      return;
    }
    if (n->j->is_number_unsigned()) {
      if (min > 0 && n->j->get<std::uint64_t>() < static_cast<std::uint64_t>(min))
        fail(n->ptr, "must be at least " + std::to_string(min));
      return;
    }
    if (n->j->get<long long>() < min) fail(n->ptr, "must be at least " + std::to_string(min));
  }

  void int32(const std::optional<Node> &n)
  {
    if (!n) return;
    if (!n->j->is_number_integer()) {
      fail(n->ptr, "expected an integer");
      return;
    }
    const bool fits = n->j->is_number_unsigned() ? n->j->get<std::uint64_t>() <= 1'000'000'000u
                                                 : std::abs(n->j->get<long long>()) <= 1'000'000'000LL;
    if (!fits) fail(n->ptr, "magnitude must not exceed 1e9");
  }

  void boolean(const std::optional<Node> &n)
  {
    if (n && !n->j->is_boolean()) fail(n->ptr, "expected a boolean");
  }

  bool one_of(const std::optional<Node> &n, std::initializer_list<std::string_view> names)
  {
    if (!n) return false;
    if (!n->j->is_string()) {
      fail(n->ptr, "expected a string");
      return false;
    }
    const auto s = n->j->get<std::string>();
    if (std::find(names.begin(), names.end(), s) == names.end()) {
      std::string list;
      for (auto nm : names) list += (list.empty() ? "" : ", ") + std::string(nm);
      fail(n->ptr, "must be one of: " + list);
      return false;
    }
    return true;
  }

  /// Array of numbers; `positive` restricts elements to > 0.
  void numbers(const std::optional<Node> &n, std::size_t min_items, bool positive_only, std::size_t max_items = 0)
  {
    if (!n) return;
    if (!n->j->is_array()) {
      fail(n->ptr, "expected an array");
      return;
    }
    if (n->j->size() < min_items) fail(n->ptr, "must contain at least " + std::to_string(min_items) + " items");
    if (max_items && n->j->size() > max_items)
      fail(n->ptr, "must contain at most " + std::to_string(max_items) + " items");
    for (std::size_t i = 0; i < n->j->size(); ++i) {
      const Node e{&(*n->j)[i], n->ptr + "/" + std::to_string(i)};
      if (positive_only) positive(e);
      else real(e);
    }
  }

  /// Array of [x, t] pairs.
  void points(const std::optional<Node> &n, std::size_t min_items)
  {
    if (!n) return;
    if (!n->j->is_array()) {
      fail(n->ptr, "expected an array");
      return;
    }
    if (n->j->size() < min_items) fail(n->ptr, "must contain at least " + std::to_string(min_items) + " items");
    for (std::size_t i = 0; i < n->j->size(); ++i) {
      const Node e{&(*n->j)[i], n->ptr + "/" + std::to_string(i)};
      if (!e.j->is_array() || e.j->size() != 2) {
        fail(e.ptr, "expected a pair [x, t]");
        continue;
      }
      real(Node{&(*e.j)[0], e.ptr + "/0"});
      real(Node{&(*e.j)[1], e.ptr + "/1"});
    }
  }

  void law(const std::optional<Node> &n)
  {
    if (!n) return;
    if (n->j->is_string()) {
      if (n->j->get<std::string>() != "simple") fail(n->ptr, "must be \"simple\" or an object with a support");
      return;
    }
    if (!object(*n, {"support"})) return;
    const auto s = get(*n, "support", true);
    if (!s) return;
    if (!s->j->is_array() || s->j->empty()) {
      fail(s->ptr, "expected a non-empty array of [value, probability] pairs");
      return;
    }
    for (std::size_t i = 0; i < s->j->size(); ++i) {
      const Node e{&(*s->j)[i], s->ptr + "/" + std::to_string(i)};
      if (!e.j->is_array() || e.j->size() != 2) {
        fail(e.ptr, "expected a pair [value, probability]");
        continue;
      }
      int32(Node{&(*e.j)[0], e.ptr + "/0"});
      positive(Node{&(*e.j)[1], e.ptr + "/1"});
    }
  }

  void window(const std::optional<Node> &n, bool integer_time)
  {
    if (!n || !object(*n, {"x_min", "x_max", "t_min", "t_max"})) return;
    int32(get(*n, "x_min", true));
    int32(get(*n, "x_max", true));
    for (const char *k : {"t_min", "t_max"}) {
      if (integer_time) int32(get(*n, k, true));
      else real(get(*n, k, true));
    }
  }

  void query(const std::optional<Node> &n)
  {
    if (!n || !object(*n, {"t0", "t", "a", "b"})) return;
    real(get(*n, "t0", true));
    positive(get(*n, "t", true));
    real(get(*n, "a", true));
    real(get(*n, "b", true));
  }

  /// Returns the ensemble kind when it is readable.
  std::string ensemble(const std::optional<Node> &n)
  {
    if (!n) return {};
    if (!n->j->is_object()) {
      fail(n->ptr, "expected an object");
      return {};
    }
    const auto kind = get(*n, "kind", true);
    if (!one_of(kind, {"walk", "skeleton"})) return {};
    const auto k = kind->j->get<std::string>();
    if (k == "walk") {
      object(*n, {"kind", "law", "delta"});
      law(get(*n, "law", true));
      positive(get(*n, "delta", true));
    } else {
      object(*n, {"kind", "grid_dt", "start_spacing", "pad", "bridge_correction"});
      positive(get(*n, "grid_dt", true));
      positive(get(*n, "start_spacing", true));
      nonnegative(get(*n, "pad", false));
      boolean(get(*n, "bridge_correction", false));
    }
    return k;
  }

  void simulate(const Node &p)
  {
    const auto model = get(p, "model", true);
    if (!one_of(model, {"lattice", "continuous", "skeleton", "double-skeleton"})) return;
    const auto m = model->j->get<std::string>();
    if (m == "lattice") {
      object(p, {"model", "window", "law", "dual", "dual_starts", "delta"});
      window(get(p, "window", true), true);
      law(get(p, "law", true));
      boolean(get(p, "dual", false));
      one_of(get(p, "dual_starts", false), {"top-row", "all-sites"});
      positive(get(p, "delta", false));
    } else if (m == "continuous") {
      object(p, {"model", "window", "rate"});
      window(get(p, "window", true), false);
      positive(get(p, "rate", true));
    } else {
      object(p, {"model", "starts", "grid_dt", "horizon", "bridge_correction"});
      points(get(p, "starts", true), 1);
      positive(get(p, "grid_dt", true));
      real(get(p, "horizon", true));
      boolean(get(p, "bridge_correction", false));
    }
  }

  void eta_stats(const Node &p)
  {
    object(p, {"ensemble", "query", "k_max", "z", "grid_refinement"});
    const auto kind = ensemble(get(p, "ensemble", true));
    query(get(p, "query", true));
    integer(get(p, "k_max", true), 1);
    positive(get(p, "z", true));
    const auto refine = get(p, "grid_refinement", false);
    boolean(refine);
    if (refine && refine->j->is_boolean() && refine->j->get<bool>() && kind == "walk")
      fail(refine->ptr, "grid refinement applies to skeleton ensembles only");
  }

  void duality(const Node &p)
  {
    object(p, {"window", "queries", "probe_depth"});
    window(get(p, "window", true), true);
    integer(get(p, "queries", true), 1);
    integer(get(p, "probe_depth", false), 1);
  }

  void converge(const Node &p)
  {
    const auto cond = get(p, "condition", true);
    if (!one_of(cond, {"I1", "B", "Bprime", "walk-bound"})) {
      ensemble(get(p, "ensemble", true));
      return;
    }
    const auto c = cond->j->get<std::string>();
    const auto kind = ensemble(get(p, "ensemble", true));
    if (c == "I1") {
      object(p, {"condition", "ensemble", "starts", "delta_seq", "horizon", "z"});
      numbers(get(p, "starts", true), 1, false, 4);
      positive(get(p, "horizon", true));
      positive(get(p, "z", true));
      const auto ds = get(p, "delta_seq", kind == "walk");
      if (ds && kind == "skeleton") fail(ds->ptr, "delta_seq applies to walk ensembles only");
      else numbers(ds, 1, true);
    } else if (c == "B") {
      object(p, {"condition", "ensemble", "t", "eps_seq", "probes", "z"});
      positive(get(p, "t", true));
      numbers(get(p, "eps_seq", true), 1, true);
      points(get(p, "probes", true), 1);
      positive(get(p, "z", true));
    } else if (c == "Bprime") {
      object(p, {"condition", "ensemble", "beta", "t_seq", "eps_seq", "probes", "z"});
      positive(get(p, "beta", true));
      numbers(get(p, "t_seq", true), 1, true);
      numbers(get(p, "eps_seq", true), 1, true);
      points(get(p, "probes", true), 1);
      positive(get(p, "z", true));
    } else {
      object(p, {"condition", "ensemble", "query", "k", "z"});
      if (kind == "skeleton") fail(p.ptr + "/ensemble/kind", "the walk bound applies to walk ensembles only");
      query(get(p, "query", true));
      integer(get(p, "k", true), 2);
      positive(get(p, "z", true));
    }
  }

  void tightness(const Node &p)
  {
    object(p, {"ensemble", "t_seq", "u", "probes", "z"});
    ensemble(get(p, "ensemble", true));
    numbers(get(p, "t_seq", true), 1, true);
    positive(get(p, "u", true));
    points(get(p, "probes", true), 1);
    positive(get(p, "z", true));
  }

  void dimension(const Node &p)
  {
    const auto src = get(p, "source", true);
    if (!one_of(src, {"walk-graph", "record-projection", "line", "square"})) return;
    const auto s = src->j->get<std::string>();
    if (s == "walk-graph") {
      object(p, {"source", "scales", "min_points", "law", "delta", "t_end", "spacing"});
      law(get(p, "law", true));
      positive(get(p, "delta", true));
      positive(get(p, "t_end", true));
      positive(get(p, "spacing", true));
    } else if (s == "record-projection") {
      object(p, {"source", "scales", "min_points", "law", "delta", "t0", "a", "b"});
      law(get(p, "law", true));
      positive(get(p, "delta", true));
      positive(get(p, "t0", true));
      real(get(p, "a", true));
      real(get(p, "b", true));
    } else {
      object(p, {"source", "scales", "min_points", "n_points"});
      integer(get(p, "n_points", true), 1);
    }
    numbers(get(p, "scales", true), 3, true);
    integer(get(p, "min_points", false), 1);
  }

  void metric(const Node &p)
  {
    object(p, {"knots", "time_range", "spread", "grid_points", "set_size"});
    integer(get(p, "knots", true), 2);
    const auto tr = get(p, "time_range", true);
    numbers(tr, 2, false, 2);
    if (tr && tr->j->is_array() && tr->j->size() == 2 && (*tr->j)[0].is_number() && (*tr->j)[1].is_number() &&
        !((*tr->j)[0].get<double>() < (*tr->j)[1].get<double>()))
      fail(tr->ptr, "must be an increasing pair [t_lo, t_hi]");
    positive(get(p, "spread", true));
    integer(get(p, "grid_points", true), 2);
    integer(get(p, "set_size", true), 1);
  }

  void cr(const Node &p)
  {
    object(p, {"grid_dt", "t2", "t1", "x_forward", "x_backward", "horizon"});
    positive(get(p, "grid_dt", true));
    real(get(p, "t2", true));
    real(get(p, "t1", true));
    real(get(p, "x_forward", true));
    real(get(p, "x_backward", true));
    real(get(p, "horizon", true));
  }
};

} // namespace

std::vector<Violation> validate_config(const json &config)
{
  Checker c;
  const Node root{&config, ""};
  if (!c.object(root, {"experiment", "seed", "replicas", "output_dir", "parameters"})) return c.violations;

  const auto exp = c.get(root, "experiment", true);
  std::string name;
  if (exp) {
    if (!exp->j->is_string()) {
      c.fail(exp->ptr, "expected a string");
    } else {
      name = exp->j->get<std::string>();
      if (std::find(std::begin(experiment_names), std::end(experiment_names), name) == std::end(experiment_names)) {
        c.fail(exp->ptr, "unknown experiment \"" + name + "\"");
        name.clear();
      }
    }
  }
  if (const auto seed = c.get(root, "seed", true)) {
    if (!seed->j->is_number_integer() || (!seed->j->is_number_unsigned() && seed->j->get<long long>() < 0))
      c.fail(seed->ptr, "expected an unsigned 64-bit integer");
  }
  c.integer(c.get(root, "replicas", true), 1);
  if (const auto out = c.get(root, "output_dir", true)) {
    if (!out->j->is_string() || out->j->get<std::string>().empty()) c.fail(out->ptr, "expected a non-empty string");
  }
  const auto params = c.get(root, "parameters", true);
  if (!params) return c.violations;
  if (!params->j->is_object()) {
    c.fail(params->ptr, "expected an object");
    return c.violations;
  }
  if (name == "simulate") c.simulate(*params);
  else if (name == "eta-stats") c.eta_stats(*params);
  else if (name == "duality-check") c.duality(*params);
  else if (name == "converge") c.converge(*params);
  else if (name == "tightness") c.tightness(*params);
  else if (name == "dimension") c.dimension(*params);
  else if (name == "metric") c.metric(*params);
  else if (name == "cr-reflect") c.cr(*params);
  return c.violations;
}

json load_config(const fs::path &file)
{
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error &e) {
    throw SchemaError({{"", std::string("config is not valid JSON: ") + e.what()}});
  }
}

// ---------------------------------------------------------------------------
// Output plumbing

std::string sha256_hex(std::string_view data)
{
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

void write_atomic(const fs::path &file, std::string_view data)
{
  const fs::path tmp = file.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, file);
}

std::string format_real(double v)
{
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t experiment_stream(std::uint64_t seed, std::string_view experiment)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : experiment) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(seed, h);
}

namespace {

using Cell = std::variant<long long, std::uint64_t, double, std::string, bool>;

struct Table
{
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

std::string csv_field(const std::string &s)
{
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render(const Cell &c)
{
  return std::visit(
      [](const auto &v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) return format_real(v);
        else if constexpr (std::is_same_v<T, std::string>) return csv_field(v);
        else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
        else return std::to_string(v);
      },
      c);
}

struct Series
{
  std::string x_name, y_name;
  std::vector<std::array<double, 3>> points;
};

class Bundle
{
public:
  explicit Bundle(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void table(const std::string &name, const Table &t)
  {
    std::string out;
    for (std::size_t i = 0; i < t.header.size(); ++i) out += (i ? "," : "") + csv_field(t.header[i]);
    out += '\n';
    for (const auto &row : t.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + render(row[i]);
      out += '\n';
    }
    file(name, out, "table");
  }

  void plot(const std::string &name, const Series &s)
  {
    std::string out = "# " + s.x_name + " " + s.y_name + " " + s.y_name + "_err\n";
    for (const auto &p : s.points) out += format_real(p[0]) + " " + format_real(p[1]) + " " + format_real(p[2]) + "\n";
    file(name, out, "plotdata");
  }

  void file(const std::string &name, const std::string &content, const char *kind)
  {
    write_atomic(dir_ / name, content);
    files_.push_back({{"path", name}, {"kind", kind}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  }

  json manifest() const
  {
    auto f = files_;
    std::sort(f.begin(), f.end(), [](const json &a, const json &b) { return a["path"] < b["path"]; });
    return f;
  }

  const fs::path &dir() const { return dir_; }

private:
  fs::path dir_;
  std::vector<json> files_;
};

struct Context
{
  const json &params;
  std::string experiment;
  std::uint64_t seed;
  std::uint64_t stream;
  std::size_t replicas;
  unsigned threads;
  Bundle &out;

  McOptions mc(double z) const { return {replicas, stream, threads, z}; }
  std::uint64_t replica_seed(std::size_t i) const { return derive_seed(stream, i); }
};

// Work ceiling shared by the experiments, in elementary simulation steps.
constexpr double work_budget = 4e11;
constexpr std::size_t row_budget = 20'000'000;

void check_work(double estimate, const std::string &what)
{
  if (estimate > work_budget) {
    throw ResourceLimit(what + ": estimated " + format_real(estimate) + " simulation steps exceeds the budget of " +
                        format_real(work_budget));
  }
}

void check_rows(double estimate, const std::string &what)
{
  if (estimate > static_cast<double>(row_budget)) {
    throw ResourceLimit(what + ": about " + format_real(estimate) + " table rows exceeds the budget of " +
                        std::to_string(row_budget));
  }
}

IncrementLaw parse_law(const json &j)
{
  if (j.is_string()) return IncrementLaw::simple();
  std::vector<std::pair<int, double>> support;
  for (const auto &e : j.at("support")) support.emplace_back(e[0].get<int>(), e[1].get<double>());
  return IncrementLaw::general(std::move(support));
}

EnsembleLaw parse_ensemble(const json &j)
{
  if (j.at("kind") == "walk") return WalkEnsemble{parse_law(j.at("law")), j.at("delta").get<double>()};
  SkeletonEnsemble s;
  s.grid_dt = j.at("grid_dt").get<double>();
  s.start_spacing = j.at("start_spacing").get<double>();
  s.pad = j.value("pad", 0.0);
  s.bridge_correction = j.value("bridge_correction", true);
  return s;
}

CountingQuery parse_query(const json &j)
{
  CountingQuery q{j.at("t0").get<double>(), j.at("t").get<double>(), j.at("a").get<double>(), j.at("b").get<double>()};
  q.validate();
  return q;
}

std::vector<double> parse_numbers(const json &j) { return j.get<std::vector<double>>(); }

std::vector<SpacePoint> parse_points(const json &j)
{
  std::vector<SpacePoint> out;
  for (const auto &p : j) out.push_back({p[0].get<double>(), p[1].get<double>()});
  return out;
}

json query_json(const CountingQuery &q) { return {{"t0", q.t0}, {"t", q.t}, {"a", q.a}, {"b", q.b}}; }

// Rough step count for one eta replica, used for the work budget.
double eta_work(const EnsembleLaw &law, const CountingQuery &q)
{
  if (const auto *w = std::get_if<WalkEnsemble>(&law)) {
    const double sites = (q.b - q.a) / w->space_unit() + 1.0;
    return sites * (q.t / w->time_unit() + 1.0);
  }
  const auto &s = std::get<SkeletonEnsemble>(law);
  const double starts = (q.b - q.a + 2.0 * s.pad) / s.start_spacing + 1.0;
  return starts * std::sqrt(q.t / s.grid_dt) + q.t / s.grid_dt;
}

// --- simulate --------------------------------------------------------------

void add_paths(Table &t, std::size_t replica, std::uint64_t seed, const PathSet &set)
{
  for (std::size_t i = 0; i < set.paths.size(); ++i)
    for (const auto &k : set.paths[i].knots())
      t.add({static_cast<std::uint64_t>(replica), seed, set.label, static_cast<std::uint64_t>(i), k.t, k.x});
}

json run_simulate(Context &ctx)
{
  const auto &p = ctx.params;
  const std::string model = p.at("model");
  Table paths{{"replica", "seed", "family", "path", "t", "x"}, {}};
  Table events{{"replica", "seed", "tau", "into", "path"}, {}};
  json per = json::array();
  std::size_t fb_cross = 0, ff_cross = 0;

  if (model == "lattice") {
    const auto &w = p.at("window");
    const LatticeWindow win{w.at("x_min").get<int>(), w.at("x_max").get<int>(), w.at("t_min").get<int>(),
                            w.at("t_max").get<int>()};
    win.validate();
    const auto law = parse_law(p.at("law"));
    const bool dual = p.value("dual", false);
    const auto starts = p.value("dual_starts", std::string("top-row")) == "all-sites" ? DualStarts::all_sites
                                                                                       : DualStarts::top_row;
    const double sites = static_cast<double>(win.site_count());
    check_rows(static_cast<double>(ctx.replicas) * sites * (win.t_max - win.t_min + 1) * (dual ? 2.0 : 1.0),
               "simulate");
    for (std::size_t r = 0; r < ctx.replicas; ++r) {
      const auto rs = ctx.replica_seed(r);
      const auto field = generate_field(win, law, rs);
      auto fwd = build_ensemble_all(field);
      std::optional<PathSet> bwd;
      if (dual) bwd = build_dual(field, starts);
      const bool ff = find_crossing(fwd).has_value();
      const bool fb = bwd && find_crossing(fwd, *bwd).has_value();
      ff_cross += ff;
      fb_cross += fb;
      if (p.contains("delta")) {
        const ScalingParams sc{p.at("delta").get<double>()};
        fwd = rescale(fwd, sc);
        if (bwd) bwd = rescale(*bwd, sc);
      }
      add_paths(paths, r, rs, fwd);
      if (bwd) add_paths(paths, r, rs, *bwd);
      per.push_back({{"replica", r}, {"seed", rs}, {"forward_paths", fwd.size()},
                     {"backward_paths", bwd ? bwd->size() : 0}, {"forward_crossing", ff}, {"dual_crossing", fb}});
    }
  } else if (model == "continuous") {
    const auto &w = p.at("window");
    const ContinuousWindow win{w.at("x_min").get<int>(), w.at("x_max").get<int>(), w.at("t_min").get<double>(),
                               w.at("t_max").get<double>()};
    win.validate();
    const double rate = p.at("rate").get<double>();
    const double expected_events = rate * (win.t_max - win.t_min) * (win.x_max - win.x_min + 1);
    check_rows(static_cast<double>(ctx.replicas) * 2.0 * (win.x_max - win.x_min + 1) * (expected_events + 2.0),
               "simulate");
    for (std::size_t r = 0; r < ctx.replicas; ++r) {
      const auto rs = ctx.replica_seed(r);
      const auto [fwd, bwd] = simulate_continuous(win, rate, rs);
      const bool fb = find_jump_crossing(fwd, bwd).has_value();
      fb_cross += fb;
      add_paths(paths, r, rs, fwd);
      add_paths(paths, r, rs, bwd);
      per.push_back({{"replica", r}, {"seed", rs}, {"forward_paths", fwd.size()}, {"backward_paths", bwd.size()},
                     {"dual_crossing", fb}});
    }
  } else {
    SkeletonSpec spec;
    spec.starts = parse_points(p.at("starts"));
    spec.grid_dt = p.at("grid_dt").get<double>();
    spec.horizon = p.at("horizon").get<double>();
    spec.bridge_correction = p.value("bridge_correction", true);
    spec.validate();
    double t_lo = spec.horizon;
    for (const auto &s : spec.starts) t_lo = std::min(t_lo, s.t);
    const double steps = (spec.horizon - t_lo) / spec.grid_dt;
    const double fams = model == "double-skeleton" ? 2.0 : 1.0;
    check_rows(static_cast<double>(ctx.replicas) * fams * static_cast<double>(spec.starts.size()) * steps,
               "simulate");
    for (std::size_t r = 0; r < ctx.replicas; ++r) {
      const auto rs = ctx.replica_seed(r);
      spec.seed = rs;
      if (model == "skeleton") {
        const auto res = sample_skeleton(spec);
        add_paths(paths, r, rs, res.paths);
        for (const auto &e : res.events)
          events.add({static_cast<std::uint64_t>(r), rs, e.tau, static_cast<std::uint64_t>(e.into),
                      static_cast<std::uint64_t>(e.path)});
        per.push_back({{"replica", r}, {"seed", rs}, {"paths", res.paths.size()}, {"coalescences", res.events.size()}});
      } else {
        const auto [fwd, bwd] = sample_double_skeleton(spec);
        const bool fb = find_crossing(fwd, bwd).has_value();
        fb_cross += fb;
        add_paths(paths, r, rs, fwd);
        add_paths(paths, r, rs, bwd);
        per.push_back({{"replica", r}, {"seed", rs}, {"forward_paths", fwd.size()}, {"backward_paths", bwd.size()},
                       {"dual_crossing", fb}});
      }
    }
  }

  ctx.out.table("paths.csv", paths);
  if (model == "skeleton") ctx.out.table("events.csv", events);
  json res = {{"model", model}, {"replicas", per}};
  if (model != "skeleton") res["replicas_with_dual_crossing"] = fb_cross;
  if (model == "lattice") res["replicas_with_forward_crossing"] = ff_cross;
  return res;
}

// --- eta-stats -------------------------------------------------------------

json run_eta_stats(Context &ctx)
{
  const auto &p = ctx.params;
  const auto law = parse_ensemble(p.at("ensemble"));
  validate(law);
  const auto q = parse_query(p.at("query"));
  const int k_max = p.at("k_max").get<int>();
  const double z = p.at("z").get<double>();
  check_work(static_cast<double>(ctx.replicas) * eta_work(law, q), "eta-stats");

  const auto opt = ctx.mc(z);
  const auto etas = sample_eta(law, q, opt);
  const auto chk = check_counting(etas, q, k_max, z);

  Table eta_t{{"t0", "t", "a", "b", "count", "replica", "seed"}, {}};
  for (std::size_t i = 0; i < etas.size(); ++i)
    eta_t.add({q.t0, q.t, q.a, q.b, static_cast<std::uint64_t>(etas[i]), static_cast<std::uint64_t>(i),
               ctx.replica_seed(i)});
  ctx.out.table("eta.csv", eta_t);

  Table tails{{"k", "p", "se", "bound", "bound_ok", "submult", "submult_se", "submult_ok"}, {}};
  Series tail_plot{"k", "p", {}};
  json tails_j = json::array();
  for (const auto &r : chk.tails) {
    tails.add({static_cast<long long>(r.k), r.p, r.se, r.bound, r.bound_ok, r.submult, r.submult_se, r.submult_ok});
    tail_plot.points.push_back({static_cast<double>(r.k), r.p, r.se});
    tails_j.push_back({{"k", r.k}, {"p", r.p}, {"se", r.se}, {"bound", r.bound}, {"bound_ok", r.bound_ok},
                       {"submult", r.submult}, {"submult_se", r.submult_se}, {"submult_ok", r.submult_ok}});
  }
  ctx.out.table("tails.csv", tails);
  ctx.out.plot("tails.dat", tail_plot);

  json res = {{"ensemble", describe(law)},
              {"query", query_json(q)},
              {"mean_eta", chk.mean_eta.estimate},
              {"std_error", chk.mean_eta.std_error},
              {"replicas", chk.mean_eta.replicas},
              {"expected", chk.expected},
              {"z", z},
              {"mean_ok", chk.mean_ok},
              {"tails", tails_j}};

  if (p.value("grid_refinement", false)) {
    auto fine = std::get<SkeletonEnsemble>(law);
    fine.grid_dt /= 2.0;
    McOptions fopt = opt;
    fopt.seed = experiment_stream(ctx.seed, ctx.experiment + "/refined");
    const auto fetas = sample_eta(EnsembleLaw{fine}, q, fopt);
    std::vector<double> fv(fetas.begin(), fetas.end());
    const auto fm = stats::mean_se(fv);
    const double shift = fm.mean - chk.mean_eta.estimate;
    const double comb = std::hypot(fm.se, chk.mean_eta.std_error);
    Table ft{{"t0", "t", "a", "b", "count", "replica", "seed"}, {}};
    for (std::size_t i = 0; i < fetas.size(); ++i)
      ft.add({q.t0, q.t, q.a, q.b, static_cast<std::uint64_t>(fetas[i]), static_cast<std::uint64_t>(i),
              derive_seed(fopt.seed, i)});
    ctx.out.table("eta_refined.csv", ft);
    res["refinement"] = json{{"grid_dt", fine.grid_dt}, {"mean_eta", fm.mean},  {"std_error", fm.se},
                         {"shift", shift},          {"combined_se", comb}, {"ok", std::abs(shift) < z * comb}};
  }
  return res;
}

// --- duality-check ---------------------------------------------------------

json run_duality(Context &ctx)
{
  const auto &p = ctx.params;
  const auto &w = p.at("window");
  const LatticeWindow win{w.at("x_min").get<int>(), w.at("x_max").get<int>(), w.at("t_min").get<int>(),
                          w.at("t_max").get<int>()};
  win.validate();
  if (win.site_count() > default_site_budget)
    throw ResourceLimit("duality-check: window has " + std::to_string(win.site_count()) + " sites, budget is " +
                        std::to_string(default_site_budget));
  const auto nq = p.at("queries").get<std::size_t>();
  const std::optional<int> depth =
      p.contains("probe_depth") ? std::optional<int>(p.at("probe_depth").get<int>()) : std::nullopt;
  const double height = win.t_max - win.t_min + 1;
  check_work(static_cast<double>(ctx.replicas) * static_cast<double>(win.site_count()) * height * (depth ? 3.0 : 2.0),
             "duality-check");

  struct Row
  {
    std::uint64_t seed;
    Tally duality, type;
  };
  const auto rows = run_replicas(ctx.replicas, ctx.threads, [&](std::size_t f) {
    Row r{ctx.replica_seed(f), {}, {}};
    const auto field = generate_field(win, IncrementLaw::simple(), r.seed);
    const auto queries = duality_battery(win, nq, derive_seed(r.seed, 1));
    r.duality = duality_check(field, queries);
    if (depth) r.type = type_duality_check(field, *depth);
    return r;
  });

  Table t{{"field", "seed", "queries", "violations", "type_sites", "type_violations"}, {}};
  std::size_t checked = 0, viol = 0, tchecked = 0, tviol = 0;
  for (std::size_t f = 0; f < rows.size(); ++f) {
    const auto &r = rows[f];
    t.add({static_cast<std::uint64_t>(f), r.seed, static_cast<std::uint64_t>(r.duality.checked),
           static_cast<std::uint64_t>(r.duality.violations), static_cast<std::uint64_t>(r.type.checked),
           static_cast<std::uint64_t>(r.type.violations)});
    checked += r.duality.checked;
    viol += r.duality.violations;
    tchecked += r.type.checked;
    tviol += r.type.violations;
  }
  ctx.out.table("duality.csv", t);
  json res = {{"fields", rows.size()}, {"queries_checked", checked}, {"violations", viol}};
  if (depth) {
    res["probe_depth"] = *depth;
    res["type_sites_checked"] = tchecked;
    res["type_violations"] = tviol;
  }
  return res;
}

// --- converge --------------------------------------------------------------

json run_converge(Context &ctx)
{
  const auto &p = ctx.params;
  const std::string cond = p.at("condition");
  const auto law = parse_ensemble(p.at("ensemble"));
  validate(law);
  const double z = p.at("z").get<double>();
  const auto opt = ctx.mc(z);

  if (cond == "I1") {
    const auto starts = parse_numbers(p.at("starts"));
    const double horizon = p.at("horizon").get<double>();
    std::vector<double> deltas = p.contains("delta_seq") ? parse_numbers(p.at("delta_seq")) : std::vector<double>{};
    double work = 0.0;
    if (std::holds_alternative<WalkEnsemble>(law)) {
      for (double d : deltas) work += starts.size() * std::max(1.0, horizon) / (d * d);
    } else {
      const auto &s = std::get<SkeletonEnsemble>(law);
      work = starts.size() * std::max(1.0, horizon) / s.grid_dt;
    }
    check_work(work * static_cast<double>(ctx.replicas), "converge");
    const auto rep = check_I1(law, starts, deltas, horizon, opt);

    Table marg{{"delta", "ks", "ks_se", "ks_p"}, {}};
    Table pairs{{"delta", "i", "j", "u", "ks", "ks_se", "ks_p", "p_meet", "p_meet_se", "p_meet_expected"}, {}};
    Series mplot{"delta", "marginal_ks", {}}, pplot{"delta", "pair_ks", {}};
    json rows = json::array();
    for (const auto &r : rep.rows) {
      marg.add({r.delta, r.marginal_ks, r.marginal_ks_se, r.marginal_ks_p});
      mplot.points.push_back({r.delta, r.marginal_ks, r.marginal_ks_se});
      json pj = json::array();
      for (const auto &s : r.pairs) {
        pairs.add({r.delta, static_cast<std::uint64_t>(s.i), static_cast<std::uint64_t>(s.j), s.u, s.ks, s.ks_se,
                   s.ks_p, s.p_meet, s.p_meet_se, s.p_meet_expected});
        pj.push_back({{"i", s.i}, {"j", s.j}, {"u", s.u}, {"ks", s.ks}, {"ks_se", s.ks_se}, {"ks_p", s.ks_p},
                      {"p_meet", s.p_meet}, {"p_meet_se", s.p_meet_se}, {"p_meet_expected", s.p_meet_expected}});
      }
      if (!r.pairs.empty()) pplot.points.push_back({r.delta, r.pairs[0].ks, r.pairs[0].ks_se});
      rows.push_back({{"delta", r.delta}, {"marginal_ks", r.marginal_ks}, {"marginal_ks_se", r.marginal_ks_se},
                      {"marginal_ks_p", r.marginal_ks_p}, {"pairs", pj}});
    }
    ctx.out.table("i1_marginal.csv", marg);
    ctx.out.table("i1_pairs.csv", pairs);
    ctx.out.plot("i1_marginal.dat", mplot);
    if (!pplot.points.empty()) ctx.out.plot("i1_pair.dat", pplot);
    return {{"condition", cond}, {"parameters", rep.parameters}, {"rows", rows},
            {"marginal_trend_ok", rep.marginal_trend_ok}, {"pair_trend_ok", rep.pair_trend_ok}};
  }

  if (cond == "B") {
    const double t = p.at("t").get<double>();
    const auto eps = parse_numbers(p.at("eps_seq"));
    const auto probes = parse_points(p.at("probes"));
    double work = 0.0;
    for (double e : eps)
      for (const auto &pr : probes) work += eta_work(law, {pr.t, t, pr.x, pr.x + e});
    check_work(work * static_cast<double>(ctx.replicas), "converge");
    const auto rep = estimate_B(law, t, eps, probes, opt);
    Table tb{{"eps", "p1", "p1_se", "p2", "p2_se", "p2_over_eps", "p2_over_eps_se"}, {}};
    Series b1{"eps", "p1", {}}, b2{"eps", "p2_over_eps", {}};
    json rows = json::array();
    for (const auto &r : rep.rows) {
      tb.add({r.eps, r.p1, r.p1_se, r.p2, r.p2_se, r.p2_over_eps, r.p2_over_eps_se});
      b1.points.push_back({r.eps, r.p1, r.p1_se});
      b2.points.push_back({r.eps, r.p2_over_eps, r.p2_over_eps_se});
      rows.push_back({{"eps", r.eps}, {"p1", r.p1}, {"p1_se", r.p1_se}, {"p2", r.p2}, {"p2_se", r.p2_se},
                      {"p2_over_eps", r.p2_over_eps}, {"p2_over_eps_se", r.p2_over_eps_se}});
    }
    ctx.out.table("b.csv", tb);
    ctx.out.plot("b1.dat", b1);
    ctx.out.plot("b2.dat", b2);
    return {{"condition", cond}, {"parameters", rep.parameters}, {"rows", rows},
            {"b1_trend_ok", rep.b1_trend_ok}, {"b2_trend_ok", rep.b2_trend_ok}};
  }

  if (cond == "Bprime") {
    const double beta = p.at("beta").get<double>();
    const auto ts = parse_numbers(p.at("t_seq"));
    const auto eps = parse_numbers(p.at("eps_seq"));
    const auto probes = parse_points(p.at("probes"));
    const double t_max = *std::max_element(ts.begin(), ts.end());
    double work = 0.0;
    for (double e : eps)
      for (const auto &pr : probes) work += eta_work(law, {pr.t, t_max, pr.x - e, pr.x + e});
    check_work(work * static_cast<double>(ctx.replicas), "converge");
    const auto rep = estimate_Bprime(law, beta, ts, eps, probes, opt);
    Table tb{{"eps", "p_multi", "p_multi_se", "p_split_over_eps", "p_split_over_eps_se"}, {}};
    Series m{"eps", "p_multi", {}}, s{"eps", "p_split_over_eps", {}};
    json rows = json::array();
    for (const auto &r : rep.rows) {
      tb.add({r.eps, r.p_multi, r.p_multi_se, r.p_split_over_eps, r.p_split_over_eps_se});
      m.points.push_back({r.eps, r.p_multi, r.p_multi_se});
      s.points.push_back({r.eps, r.p_split_over_eps, r.p_split_over_eps_se});
      rows.push_back({{"eps", r.eps}, {"p_multi", r.p_multi}, {"p_multi_se", r.p_multi_se},
                      {"p_split_over_eps", r.p_split_over_eps}, {"p_split_over_eps_se", r.p_split_over_eps_se}});
    }
    ctx.out.table("bprime.csv", tb);
    ctx.out.plot("bprime_multi.dat", m);
    ctx.out.plot("bprime_split.dat", s);
    return {{"condition", cond}, {"parameters", rep.parameters}, {"rows", rows},
            {"multi_trend_ok", rep.multi_trend_ok}, {"split_trend_ok", rep.split_trend_ok}};
  }

  const auto *walk = std::get_if<WalkEnsemble>(&law);
  require(walk != nullptr, "the walk bound applies to walk ensembles only");
  const auto q = parse_query(p.at("query"));
  const int k = p.at("k").get<int>();
  check_work(eta_work(law, q) * static_cast<double>(ctx.replicas), "converge");
  const auto rep = verify_walkbound(*walk, q, k, opt);
  Table tb{{"k", "p_k", "p_k_se", "p2", "p2_se", "bound", "bound_se", "combined_se", "pass", "replicas"}, {}};
  tb.add({static_cast<long long>(rep.k), rep.p_k, rep.p_k_se, rep.p2, rep.p2_se, rep.bound, rep.bound_se,
          rep.combined_se, rep.pass, static_cast<std::uint64_t>(rep.replicas)});
  ctx.out.table("walkbound.csv", tb);
  return {{"condition", cond}, {"ensemble", describe(law)}, {"query", query_json(q)}, {"k", k}, {"z", z},
          {"p_k", rep.p_k}, {"p_k_se", rep.p_k_se}, {"p2", rep.p2}, {"p2_se", rep.p2_se}, {"bound", rep.bound},
          {"bound_se", rep.bound_se}, {"combined_se", rep.combined_se}, {"pass", rep.pass}};
}

// --- tightness -------------------------------------------------------------

json run_tightness(Context &ctx)
{
  const auto &p = ctx.params;
  const auto law = parse_ensemble(p.at("ensemble"));
  validate(law);
  const auto ts = parse_numbers(p.at("t_seq"));
  const double u = p.at("u").get<double>();
  const auto probes = parse_points(p.at("probes"));
  const double z = p.at("z").get<double>();
  double work = 0.0;
  for (double t : ts) {
    if (const auto *w = std::get_if<WalkEnsemble>(&law)) {
      work += (u / w->space_unit()) * (2.0 * t / w->time_unit());
    } else {
      const auto &s = std::get<SkeletonEnsemble>(law);
      work += (u / s.start_spacing) * std::max(1.0, t * s.grid_dt / (s.start_spacing * s.start_spacing)) *
              (2.0 * t / s.grid_dt);
    }
  }
  check_work(work * static_cast<double>(probes.size() * ctx.replicas), "tightness");
  const auto rep = estimate_tightness(law, ts, u, probes, ctx.mc(z));
  Table tb{{"t", "p", "p_se", "g", "g_se"}, {}};
  Series g{"t", "g", {}};
  json rows = json::array();
  for (const auto &r : rep.rows) {
    tb.add({r.t, r.p, r.p_se, r.g, r.g_se});
    g.points.push_back({r.t, r.g, r.g_se});
    rows.push_back({{"t", r.t}, {"p", r.p}, {"p_se", r.p_se}, {"g", r.g}, {"g_se", r.g_se}});
  }
  ctx.out.table("tightness.csv", tb);
  ctx.out.plot("tightness.dat", g);
  return {{"parameters", rep.parameters}, {"rows", rows}, {"trend_ok", rep.trend_ok}};
}

// --- dimension -------------------------------------------------------------

json run_dimension(Context &ctx)
{
  const auto &p = ctx.params;
  const std::string src = p.at("source");
  const auto scales = parse_numbers(p.at("scales"));
  const auto min_points = p.value("min_points", default_min_points);
  json source = {{"source", src}};

  std::vector<std::vector<SpacePoint>> sets;
  if (src == "line" || src == "square") {
    const auto n = p.at("n_points").get<std::size_t>();
    check_rows(static_cast<double>(n), "dimension");
    std::vector<SpacePoint> pts;
    if (src == "line") {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        pts.push_back({s, s});
      }
    } else {
      const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
      require(m * m == n, "square control needs a perfect-square n_points");
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          pts.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(m),
                         (static_cast<double>(j) + 0.5) / static_cast<double>(m)});
    }
    source["n_points"] = n;
    sets.push_back(std::move(pts));
  } else {
    const WalkEnsemble ens{parse_law(p.at("law")), p.at("delta").get<double>()};
    validate(EnsembleLaw{ens});
    source["ensemble"] = describe(EnsembleLaw{ens});
    const double t_end = src == "walk-graph" ? p.at("t_end").get<double>() : p.at("t0").get<double>();
    const double steps = t_end / ens.time_unit();
    check_work(static_cast<double>(ctx.replicas) * steps * 2.0, "dimension");
    if (src == "walk-graph") {
      const double spacing = p.at("spacing").get<double>();
      source["t_end"] = t_end;
      source["spacing"] = spacing;
      check_rows(static_cast<double>(ctx.replicas) * (t_end / spacing + steps), "dimension");
      sets = run_replicas(ctx.replicas, ctx.threads, [&](std::size_t r) {
        return graph_points(walk_path(ens, t_end, ctx.replica_seed(r)), spacing);
      });
    } else {
      const double a = p.at("a").get<double>(), b = p.at("b").get<double>();
      source["t0"] = t_end;
      source["a"] = a;
      source["b"] = b;
      sets = run_replicas(ctx.replicas, ctx.threads, [&](std::size_t r) {
        const auto rs = ctx.replica_seed(r);
        return record_projection(walk_path(ens, t_end, derive_seed(rs, 0)), walk_path(ens, t_end, derive_seed(rs, 1)),
                                 a, b, t_end);
      });
    }
  }

  const auto series = sets.size() == 1 ? box_dimension(sets.front(), scales, min_points)
                                       : box_dimension_pooled(sets, scales, min_points);
  std::size_t total = 0;
  for (const auto &s : sets) total += s.size();

  Table tb{{"scale", "count", "log_count_se"}, {}};
  Series pl{"log_inverse_scale", "log_count", {}};
  for (std::size_t k = 0; k < series.scales.size(); ++k) {
    tb.add({series.scales[k], series.counts[k], series.log_count_se[k]});
    pl.points.push_back({std::log(1.0 / series.scales[k]), std::log(series.counts[k]), series.log_count_se[k]});
  }
  ctx.out.table("boxcount.csv", tb);
  ctx.out.plot("boxcount.dat", pl);
  return {{"source", source},        {"scales", series.scales},         {"sets", sets.size()},
          {"points", total},         {"fitted_dimension", series.fitted_dimension},
          {"fit_r2", series.fit_r2}, {"slope_se", series.slope_se},     {"cap", series.cap},
          {"within_cap", series.within_cap}};
}

// --- metric ----------------------------------------------------------------

Path random_path(Xoshiro256 &gen, std::size_t knots, double lo, double hi, double spread)
{
  const double mid = 0.5 * (lo + hi);
  std::vector<double> ts{lo + (mid - lo) * gen.uniform(), mid + (hi - mid) * gen.uniform_open_closed()};
  for (std::size_t i = 2; i < knots; ++i) ts.push_back(ts[0] + (ts[1] - ts[0]) * gen.uniform());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<Knot> k;
  for (double t : ts) k.push_back({t, spread * (2.0 * gen.uniform() - 1.0)});
  return Path(std::move(k));
}

// Largest amount by which the sup integrand, sampled on a uniform grid,
// exceeds a claimed supremum.
double grid_excess(const Path &p, const Path &q, double claimed, std::size_t n)
{
  const double lo = std::min(p.begin_time(), q.begin_time()) - 1.0;
  const double hi = std::max(p.end_time(), q.end_time()) + 1.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    const double v = std::abs(compactify(p.extended(t), t).phi - compactify(q.extended(t), t).phi);
    worst = std::max(worst, v - claimed);
  }
  return worst;
}

json run_metric(Context &ctx)
{
  const auto &p = ctx.params;
  const auto knots = p.at("knots").get<std::size_t>();
  const double lo = p.at("time_range")[0].get<double>(), hi = p.at("time_range")[1].get<double>();
  const double spread = p.at("spread").get<double>();
  const auto grid = p.at("grid_points").get<std::size_t>();
  const auto set_size = p.at("set_size").get<std::size_t>();
  check_work(static_cast<double>(ctx.replicas) * (3.0 * grid + 9.0 * set_size * set_size * knots * 40.0), "metric");

  constexpr double triangle_slack = 1e-9;
  constexpr double grid_slack = 1e-8;
  struct Row
  {
    std::uint64_t seed;
    double d12, d13, d23, h12, h13, h23;
    double triangle_margin, h_triangle_margin, grid_excess;
    bool symmetric, h_symmetric, h_brute_ok;
  };
  const auto rows = run_replicas(ctx.replicas, ctx.threads, [&](std::size_t r) {
    Row row{};
    row.seed = ctx.replica_seed(r);
    Xoshiro256 gen(row.seed);
    const Path a = random_path(gen, knots, lo, hi, spread), b = random_path(gen, knots, lo, hi, spread),
               c = random_path(gen, knots, lo, hi, spread);
    const auto dab = path_distance(a, b), dac = path_distance(a, c), dbc = path_distance(b, c);
    row.d12 = dab.value;
    row.d13 = dac.value;
    row.d23 = dbc.value;
    row.symmetric = path_distance(b, a).value == dab.value && path_distance(c, a).value == dac.value &&
                    path_distance(c, b).value == dbc.value && path_distance(a, a).value == 0.0;
    row.triangle_margin = std::min({dab.value + dbc.value - dac.value, dac.value + dbc.value - dab.value,
                                    dab.value + dac.value - dbc.value});
    row.grid_excess = std::max({grid_excess(a, b, dab.value, grid), grid_excess(a, c, dac.value, grid),
                                grid_excess(b, c, dbc.value, grid)});

    PathSet s[3];
    for (auto &set : s)
      for (std::size_t i = 0; i < set_size; ++i) set.paths.push_back(random_path(gen, knots, lo, hi, spread));
    auto brute = [](const PathSet &x, const PathSet &y) {
      double fwd = 0.0, bwd = 0.0;
      for (const auto &g : x.paths) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto &h : y.paths) m = std::min(m, path_distance(g, h).value);
        fwd = std::max(fwd, m);
      }
      for (const auto &h : y.paths) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto &g : x.paths) m = std::min(m, path_distance(g, h).value);
        bwd = std::max(bwd, m);
      }
      return std::max(fwd, bwd);
    };
    const double h01 = hausdorff_distance(s[0], s[1]).value, h02 = hausdorff_distance(s[0], s[2]).value,
                 h12 = hausdorff_distance(s[1], s[2]).value;
    row.h12 = h01;
    row.h13 = h02;
    row.h23 = h12;
    row.h_symmetric = hausdorff_distance(s[1], s[0]).value == h01 && hausdorff_distance(s[2], s[0]).value == h02 &&
                      hausdorff_distance(s[2], s[1]).value == h12;
    row.h_triangle_margin = std::min({h01 + h12 - h02, h02 + h12 - h01, h01 + h02 - h12});
    row.h_brute_ok = brute(s[0], s[1]) == h01 && brute(s[0], s[2]) == h02 && brute(s[1], s[2]) == h12;
    return row;
  });

  Table tb{{"triple", "seed", "d12", "d13", "d23", "symmetric", "triangle_margin", "grid_excess", "h12", "h13", "h23",
            "h_symmetric", "h_triangle_margin", "h_brute_force_ok"},
           {}};
  std::size_t sym = 0, tri = 0, sound = 0, hsym = 0, htri = 0, hbrute = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  double worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto &w = rows[r];
    tb.add({static_cast<std::uint64_t>(r), w.seed, w.d12, w.d13, w.d23, w.symmetric, w.triangle_margin, w.grid_excess,
            w.h12, w.h13, w.h23, w.h_symmetric, w.h_triangle_margin, w.h_brute_ok});
    sym += !w.symmetric;
    tri += w.triangle_margin < -triangle_slack;
    sound += w.grid_excess > grid_slack;
    hsym += !w.h_symmetric;
    htri += w.h_triangle_margin < -triangle_slack;
    hbrute += !w.h_brute_ok;
    worst_excess = std::max(worst_excess, w.grid_excess);
    worst_margin = std::min({worst_margin, w.triangle_margin, w.h_triangle_margin});
  }
  ctx.out.table("metric.csv", tb);
  return {{"triples", rows.size()},
          {"symmetry_violations", sym},
          {"triangle_violations", tri},
          {"soundness_violations", sound},
          {"hausdorff_symmetry_violations", hsym},
          {"hausdorff_triangle_violations", htri},
          {"hausdorff_brute_force_mismatches", hbrute},
          {"worst_triangle_margin", worst_margin},
          {"worst_grid_excess", worst_excess},
          {"triangle_slack", triangle_slack},
          {"grid_slack", grid_slack}};
}

// --- cr-reflect ------------------------------------------------------------

json run_cr(Context &ctx)
{
  const auto &p = ctx.params;
  const double dt = p.at("grid_dt").get<double>();
  const double t2 = p.at("t2").get<double>(), t1 = p.at("t1").get<double>();
  const double x2 = p.at("x_forward").get<double>(), x1 = p.at("x_backward").get<double>();
  const double horizon = p.at("horizon").get<double>();
  require(t2 < t1, "cr-reflect: t2 must be less than t1");
  require(horizon >= t1, "cr-reflect: horizon must be at least t1");
  require(x1 != x2, "cr-reflect: forward and backward start values must differ");
  const double n_back_d = (t1 - t2) / dt;
  const auto n_back = static_cast<std::size_t>(std::llround(n_back_d));
  require(n_back >= 1 && std::abs(n_back_d - static_cast<double>(n_back)) < 1e-9,
          "cr-reflect: t1 - t2 must be a positive multiple of grid_dt");
  const auto n_fwd = static_cast<std::size_t>(std::llround(std::ceil((horizon - t2) / dt - 1e-9)));
  check_work(static_cast<double>(ctx.replicas) * static_cast<double>(n_fwd + n_back), "cr-reflect");

  constexpr double tolerance = 1e-12;
  struct Row
  {
    std::uint64_t seed;
    double min_gap, max_gap;
    bool violation;
  };
  const auto rows = run_replicas(ctx.replicas, ctx.threads, [&](std::size_t r) {
    Row row{ctx.replica_seed(r), 0, 0, false};
    NormalStream normal(row.seed);
    const double sdt = std::sqrt(dt);
    std::vector<Knot> fk{{t2, x2}};
    for (std::size_t k = 1; k <= n_fwd; ++k) {
      const double t = k == n_fwd ? horizon : t2 + static_cast<double>(k) * dt;
      fk.push_back({t, fk.back().x + std::sqrt(t - fk.back().t) * normal()});
    }
    std::vector<Knot> bk(n_back + 1);
    bk[n_back] = {t1, x1};
    for (std::size_t k = n_back; k-- > 0;) bk[k] = {t2 + static_cast<double>(k) * dt, bk[k + 1].x + sdt * normal()};
    const Path fwd(std::move(fk)), bwd(std::move(bk), Direction::backward);
    const Path out = reflect_cr(fwd, bwd);
    const double side = x2 > bwd.at(t2) ? 1.0 : -1.0;
    row.min_gap = std::numeric_limits<double>::infinity();
    row.max_gap = -row.min_gap;
    for (const auto &k : out.knots()) {
      if (k.t > t1) break;
      const double g = side * (k.x - bwd.at(k.t));
      row.min_gap = std::min(row.min_gap, g);
      row.max_gap = std::max(row.max_gap, g);
    }
    row.violation = row.min_gap < -tolerance;
    return row;
  });

  Table tb{{"run", "seed", "min_gap", "max_gap", "violation"}, {}};
  std::size_t viol = 0, touched = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    tb.add({static_cast<std::uint64_t>(r), rows[r].seed, rows[r].min_gap, rows[r].max_gap, rows[r].violation});
    viol += rows[r].violation;
    touched += rows[r].min_gap <= tolerance;
  }
  ctx.out.table("cr.csv", tb);
  return {{"runs", rows.size()}, {"violations", viol}, {"runs_with_contact", touched}, {"tolerance", tolerance}};
}

std::string utc_now()
{
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

json run_experiment(json config, const RunOverrides &overrides)
{
  if (overrides.seed && config.is_object()) config["seed"] = *overrides.seed;
  if (overrides.output_dir && config.is_object()) config["output_dir"] = *overrides.output_dir;
  if (auto v = validate_config(config); !v.empty()) throw SchemaError(std::move(v));
  if (overrides.threads < 1) throw InvalidArgument("threads must be at least 1");

  const auto started = utc_now();
  const auto t_start = std::chrono::steady_clock::now();
  const std::string name = config.at("experiment");
  const auto seed = config.at("seed").get<std::uint64_t>();
  Bundle bundle(config.at("output_dir").get<std::string>());
  Context ctx{config.at("parameters"), name, seed, experiment_stream(seed, name), config.at("replicas").get<std::size_t>(),
              overrides.threads, bundle};

  json results;
  if (name == "simulate") results = run_simulate(ctx);
  else if (name == "eta-stats") results = run_eta_stats(ctx);
  else if (name == "duality-check") results = run_duality(ctx);
  else if (name == "converge") results = run_converge(ctx);
  else if (name == "tightness") results = run_tightness(ctx);
  else if (name == "dimension") results = run_dimension(ctx);
  else if (name == "metric") results = run_metric(ctx);
  else results = run_cr(ctx);

  json summary = {{"config", config}, {"results", results}, {"files", bundle.manifest()}, {"version", version()}};
  write_atomic(bundle.dir() / "summary.json", summary.dump(2) + "\n");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  const json info = {{"started_utc", started}, {"finished_utc", utc_now()}, {"wall_seconds", secs},
                     {"threads", overrides.threads}, {"summary_sha256", sha256_hex(summary.dump(2) + "\n")}};
  write_atomic(bundle.dir() / "run_info.json", info.dump(2) + "\n");
  return summary;
}

std::pair<ExitCode, json> current_error()
{
  auto doc = [](const char *kind, ExitCode code, const std::string &msg) {
    return json{{"error", {{"kind", kind}, {"exit_code", static_cast<int>(code)}, {"message", msg}}}};
  };
  try {
    throw;
  } catch (const SchemaError &e) {
    auto d = doc("schema_violation", ExitCode::schema, e.what());
    json v = json::array();
    for (const auto &x : e.violations()) v.push_back({{"pointer", x.pointer}, {"message", x.message}});
    d["error"]["violations"] = v;
    return {ExitCode::schema, d};
  } catch (const ResourceLimit &e) {
    return {ExitCode::resource, doc("resource_limit", ExitCode::resource, e.what())};
  } catch (const InvalidArgument &e) {
    return {ExitCode::range, doc("out_of_range", ExitCode::range, e.what())};
  } catch (const Unsupported &e) {
    return {ExitCode::range, doc("out_of_range", ExitCode::range, e.what())};
  } catch (const std::bad_alloc &) {
    return {ExitCode::resource, doc("resource_limit", ExitCode::resource, "out of memory")};
  } catch (const std::exception &e) {
    return {ExitCode::failure, doc("failure", ExitCode::failure, e.what())};
  } catch (...) {
    return {ExitCode::failure, doc("failure", ExitCode::failure, "unknown error")};
  }
}

} // namespace webweave
