#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>

#include "webweave/error.hpp"
#include "webweave/experiments.hpp"

using namespace webweave;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path config_dir = WEBWEAVE_CONFIG_DIR;

fs::path scratch(const std::string &name)
{
  const auto dir = fs::temp_directory_path() / ("webweave_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path &f)
{
  std::ifstream in(f, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json small_eta_config()
{
  return json::parse(R"({
    "experiment": "eta-stats", "seed": 5, "replicas": 100, "output_dir": "unused",
    "parameters": {
      "ensemble": {"kind": "walk", "law": "simple", "delta": 0.1},
      "query": {"t0": 0.0, "t": 1.0, "a": 0.0, "b": 1.0},
      "k_max": 2, "z": 3.0
    }})");
}

// Runs the example config with the replica count capped so the whole file stays fast.
json run_example(const std::string &name, std::size_t max_replicas, unsigned threads = 1)
{
  auto cfg = load_config(config_dir / (name + ".json"));
  cfg["replicas"] = std::min(cfg["replicas"].get<std::size_t>(), max_replicas);
  return run_experiment(cfg, {std::nullopt, scratch(name + std::to_string(threads)).string(), threads});
}

int run_cli(const std::string &args)
{
  const std::string cmd = std::string(WEBWEAVE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("sha256 matches the standard test vectors")
{
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("format_real keeps 17 significant digits and round-trips")
{
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(format_real(1.0) == "1");
  CHECK(format_real(-2.0 / 3.0) == "-0.66666666666666663");
  for (double v : {1.0 / 3.0, 1e17 + 8.0, 6.02214076e23, -0.0}) CHECK(std::strtod(format_real(v).c_str(), nullptr) == v);
}

TEST_CASE("write_atomic replaces the file and leaves no temporaries")
{
  const auto dir = scratch("atomic");
  fs::create_directories(dir);
  write_atomic(dir / "a.txt", "first");
  write_atomic(dir / "a.txt", "second");
  CHECK(slurp(dir / "a.txt") == "second");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
  CHECK_THROWS(write_atomic(dir / "missing" / "b.txt", "x"));
}

TEST_CASE("experiment streams differ by seed and by experiment")
{
  CHECK(experiment_stream(1, "eta-stats") == experiment_stream(1, "eta-stats"));
  CHECK(experiment_stream(1, "eta-stats") != experiment_stream(2, "eta-stats"));
  CHECK(experiment_stream(1, "eta-stats") != experiment_stream(1, "converge"));
}

TEST_CASE("every example config validates")
{
  std::size_t n = 0;
  for (const auto &e : fs::directory_iterator(config_dir)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    CHECK(validate_config(load_config(e.path())).empty());
    ++n;
  }
  for (const auto &e : fs::directory_iterator(config_dir / "acceptance")) {
    CAPTURE(e.path().string());
    CHECK(validate_config(load_config(e.path())).empty());
    ++n;
  }
  CHECK(n >= 15);
}

TEST_CASE("validator reports violations by JSON pointer")
{
  auto cfg = small_eta_config();
  CHECK(validate_config(cfg).empty());

  SUBCASE("negative replicas")
  {
    cfg["replicas"] = -1;
    const auto v = validate_config(cfg);
    REQUIRE(v.size() == 1);
    CHECK(v[0].pointer == "/replicas");
  }
  SUBCASE("unknown experiment")
  {
    cfg["experiment"] = "nope";
    const auto v = validate_config(cfg);
    REQUIRE(v.size() == 1);
    CHECK(v[0].pointer == "/experiment");
  }
  SUBCASE("missing seed is not defaulted")
  {
    cfg.erase("seed");
    const auto v = validate_config(cfg);
    REQUIRE(v.size() == 1);
    CHECK(v[0].pointer == "/seed");
  }
  SUBCASE("missing z is not defaulted")
  {
    cfg["parameters"].erase("z");
    const auto v = validate_config(cfg);
    REQUIRE(v.size() == 1);
    CHECK(v[0].pointer == "/parameters/z");
  }
  SUBCASE("unknown and mistyped nested keys")
  {
    cfg["parameters"]["ensemble"]["delta"] = "small";
    cfg["parameters"]["extra"] = 1;
    const auto v = validate_config(cfg);
    REQUIRE(v.size() == 2);
    CHECK(v[0].pointer == "/parameters/extra");
    CHECK(v[1].pointer == "/parameters/ensemble/delta");
  }
  SUBCASE("refinement needs a skeleton")
  {
    cfg["parameters"]["grid_refinement"] = true;
    const auto v = validate_config(cfg);
    REQUIRE(v.size() == 1);
    CHECK(v[0].pointer == "/parameters/grid_refinement");
  }
  SUBCASE("top level must be an object")
  {
    CHECK(validate_config(json::array()).size() == 1);
  }
}

TEST_CASE("errors map to exit codes and JSON documents")
{
  auto code_of = [](auto thrower) {
    try {
      thrower();
    } catch (...) {
      return current_error();
    }
    return std::pair{ExitCode::ok, json{}};
  };
  auto [c1, d1] = code_of([] { throw SchemaError(std::vector<Violation>{{"/seed", "bad"}}); });
  CHECK(c1 == ExitCode::schema);
  CHECK(d1["error"]["violations"][0]["pointer"] == "/seed");
  CHECK(d1["error"]["exit_code"] == 2);
  CHECK(code_of([] { throw InvalidArgument("x"); }).first == ExitCode::range);
  CHECK(code_of([] { throw Unsupported("x"); }).first == ExitCode::range);
  CHECK(code_of([] { throw ResourceLimit("x"); }).first == ExitCode::resource);
  CHECK(code_of([] { throw std::bad_alloc(); }).first == ExitCode::resource);
  CHECK(code_of([] { throw std::runtime_error("x"); }).first == ExitCode::failure);
}

TEST_CASE("run_experiment rejects bad configs before touching the output directory")
{
  auto cfg = small_eta_config();
  const auto dir = scratch("rejected");
  cfg["replicas"] = 0;
  CHECK_THROWS_AS(run_experiment(cfg, {std::nullopt, dir.string(), 1}), SchemaError);
  CHECK_FALSE(fs::exists(dir));

  cfg = small_eta_config();
  cfg["parameters"]["query"]["b"] = -1.0;
  CHECK_THROWS_AS(run_experiment(cfg, {std::nullopt, dir.string(), 1}), InvalidArgument);

  cfg = small_eta_config();
  cfg["replicas"] = 1'000'000'000'000LL;
  CHECK_THROWS_AS(run_experiment(cfg, {std::nullopt, dir.string(), 1}), ResourceLimit);
}

TEST_CASE("summary is reproducible and lists hashed files")
{
  const auto dir = scratch("summary");
  const RunOverrides o{std::nullopt, dir.string(), 1};
  const auto s1 = run_experiment(small_eta_config(), o);
  const auto first = slurp(dir / "summary.json");
  const auto s2 = run_experiment(small_eta_config(), {std::nullopt, dir.string(), 3});
  CHECK(slurp(dir / "summary.json") == first);
  CHECK(s1 == s2);

  CHECK(s1.contains("config"));
  CHECK(s1.contains("results"));
  CHECK(s1.contains("version"));
  CHECK(s1["config"]["seed"] == 5);
  REQUIRE(s1["files"].size() == 3);
  for (const auto &f : s1["files"]) {
    const auto body = slurp(dir / f["path"].get<std::string>());
    CHECK(f["sha256"] == sha256_hex(body));
    CHECK(f["bytes"] == body.size());
  }
  const auto info = json::parse(slurp(dir / "run_info.json"));
  CHECK(info.contains("started_utc"));
  CHECK(info["summary_sha256"] == sha256_hex(first));

  const auto other = run_experiment(small_eta_config(), {std::uint64_t{6}, dir.string(), 1});
  CHECK(other["config"]["seed"] == 6);
  CHECK(other["results"] != s1["results"]);
}

TEST_CASE("tables have a header and plot files have three columns")
{
  const auto dir = scratch("formats");
  run_experiment(small_eta_config(), {std::nullopt, dir.string(), 1});
  std::istringstream eta(slurp(dir / "eta.csv"));
  std::string line;
  std::getline(eta, line);
  CHECK(line == "t0,t,a,b,count,replica,seed");
  std::size_t rows = 0;
  while (std::getline(eta, line)) ++rows;
  CHECK(rows == 100);

  std::istringstream tails(slurp(dir / "tails.csv"));
  std::getline(tails, line);
  std::getline(tails, line);
  const auto p_field = line.substr(line.find(',') + 1);
  const auto p_text = p_field.substr(0, p_field.find(','));
  CHECK(std::strtod(p_text.c_str(), nullptr) == std::strtod(format_real(std::strtod(p_text.c_str(), nullptr)).c_str(), nullptr));

  std::istringstream dat(slurp(dir / "tails.dat"));
  std::getline(dat, line);
  CHECK(line.front() == '#');
  while (std::getline(dat, line)) {
    std::istringstream cols(line);
    double x, y, e;
    CHECK(static_cast<bool>(cols >> x >> y >> e));
  }
}

TEST_CASE("example experiments run and report their checks")
{
  CHECK(run_example("simulate_lattice", 2)["results"]["replicas_with_dual_crossing"] == 0);
  CHECK(run_example("simulate_lattice", 2)["results"]["replicas_with_forward_crossing"] == 0);
  CHECK(run_example("simulate_continuous", 2)["results"]["replicas_with_dual_crossing"] == 0);
  CHECK(run_example("simulate_double_skeleton", 2)["results"]["replicas_with_dual_crossing"] == 0);
  CHECK(run_example("simulate_skeleton", 3)["results"]["replicas"].size() == 3);

  const auto d = run_example("duality_check", 3)["results"];
  CHECK(d["violations"] == 0);
  CHECK(d["type_violations"] == 0);
  CHECK(d["queries_checked"] == 60);

  const auto m = run_example("metric", 100)["results"];
  CHECK(m["symmetry_violations"] == 0);
  CHECK(m["triangle_violations"] == 0);
  CHECK(m["soundness_violations"] == 0);
  CHECK(m["hausdorff_brute_force_mismatches"] == 0);

  const auto cr = run_example("cr_reflect", 100)["results"];
  CHECK(cr["violations"] == 0);
  CHECK(cr["runs_with_contact"].get<int>() > 0);

  const auto line = run_example("dimension_line", 1)["results"];
  CHECK(line["fitted_dimension"].get<double>() == doctest::Approx(1.0).epsilon(0.05));

  CHECK(run_example("converge_walkbound", 2000)["results"].contains("pass"));
  CHECK(run_example("converge_b", 200)["results"]["rows"].size() == 3);
  CHECK(run_example("converge_bprime", 200)["results"]["rows"].size() == 3);
  CHECK(run_example("converge_i1", 500)["results"]["rows"].size() == 2);
  CHECK(run_example("tightness", 100)["results"]["rows"].size() == 3);
  CHECK(run_example("dimension_walk_graph", 1)["results"]["sets"] == 1);
  CHECK(run_example("eta_stats", 100)["results"]["replicas"] == 100);
}

TEST_CASE("results do not depend on the thread count")
{
  CHECK(run_example("converge_b", 100, 1)["results"] == run_example("converge_b", 100, 4)["results"]);
  CHECK(run_example("metric", 50, 1)["results"] == run_example("metric", 50, 3)["results"]);
}

TEST_CASE("command line exit codes")
{
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  auto write = [&](const std::string &name, const json &j) {
    const auto f = dir / name;
    write_atomic(f, j.dump());
    return f.string();
  };
  auto good = small_eta_config();
  good["output_dir"] = (dir / "out").string();
  const auto good_f = write("good.json", good);

  CHECK(run_cli("validate --config " + good_f) == 0);
  CHECK(run_cli("eta-stats --config " + good_f + " --seed 3") == 0);
  CHECK(fs::exists(dir / "out" / "summary.json"));
  CHECK(run_cli("converge --config " + good_f) == 2);

  auto bad = good;
  bad.erase("seed");
  CHECK(run_cli("validate --config " + write("noseed.json", bad)) == 2);
  CHECK(run_cli("eta-stats --config " + write("noseed2.json", bad)) == 2);

  auto range = good;
  range["parameters"]["query"]["b"] = -5.0;
  CHECK(run_cli("eta-stats --config " + write("range.json", range)) == 3);

  auto huge = good;
  huge["replicas"] = 1'000'000'000'000LL;
  CHECK(run_cli("eta-stats --config " + write("huge.json", huge)) == 4);

  std::ofstream(dir / "broken.json") << "{not json";
  CHECK(run_cli("validate --config " + (dir / "broken.json").string()) == 2);
}
