#include <doctest.h>

#include "shpc/cli_io.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace shpc;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string render(const RunConfig& c) {
  std::ostringstream out;
  write_config(out, c);
  return out.str();
}

struct PlyData {
  std::size_t declared = 0;
  std::vector<std::array<double, 3>> xyz;
  std::vector<std::array<int, 3>> rgb;
};

/// Minimal ASCII PLY reader: header keywords, then one vertex per line.
PlyData read_ply(std::istream& in) {
  PlyData d;
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "ply");
  std::vector<std::string> props;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream s(line);
    std::string word;
    s >> word;
    if (word == "element") {
      std::string name;
      s >> name >> d.declared;
      REQUIRE(name == "vertex");
    } else if (word == "property") {
      std::string type, name;
      s >> type >> name;
      props.push_back(name);
    }
  }
  REQUIRE(props == std::vector<std::string>{"x", "y", "z", "red", "green", "blue"});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream s(line);
    std::array<double, 3> p{};
    std::array<int, 3> c{};
    s >> p[0] >> p[1] >> p[2] >> c[0] >> c[1] >> c[2];
    REQUIRE_FALSE(s.fail());
    d.xyz.push_back(p);
    d.rgb.push_back(c);
  }
  return d;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SHPC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = parse(
      "# comment\n"
      "[run]\n"
      "seed = 42   ; trailing comment\n"
      "max_nbv = 3\n"
      "selector = geometry\n"
      "[safety]\n"
      "theta_safe = 0.85\n"
      "[cost]\n"
      "semantic = false\n"
      "[scene]\n"
      "start = 1 2 0 0.5\n"
      "[noise]\n"
      "base_logit = 6\n");
  CHECK(c.pipeline.seed == 42);
  CHECK(c.pipeline.max_nbv == 3);
  CHECK(c.pipeline.selector == NbvSelector::GeometryOnly);
  CHECK(c.pipeline.planner.safety.theta_safe == 0.85);
  CHECK_FALSE(c.pipeline.planner.cost.semantic);
  REQUIRE(c.start);
  CHECK(c.start->translation().x() == 1.0);
  CHECK(attitude(*c.start).yaw == doctest::Approx(0.5));
  CHECK(c.pipeline.noise.base_logit == 6.0);
}

TEST_CASE("dotted keys work outside sections") {
  const RunConfig c = parse("camera.width = 64\nsurvey_noise.passes = 7\n");
  CHECK(c.pipeline.rig.width == 64);
  CHECK(c.pipeline.survey_noise.passes == 7);
  CHECK_THROWS_AS(parse("[camera]\ncamera.width = 64\n"), ConfigError);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse("[run]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("nosection = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nseed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nseed = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nmax_nbv = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nselector = best\n"), ConfigError);
  CHECK_THROWS_AS(parse("[cost]\nsemantic = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse("[scene]\nstart = 1 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\njust a line\n"), ConfigError);
  try {
    parse("[run]\nseed = 1\n[camera]\nzoom = 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("validation maps invariant violations to config errors") {
  RunConfig c = parse("[safety]\ntheta_safe = 0.9\ntheta_unsafe = 0.05\n");
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("1 - theta_safe < theta_unsafe") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("[run]\ntrials = 0\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse("[scene]\ngenerator = moon\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse("[scene]\nfile = x.txt\n").validate(), ConfigError);
  CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("effective config round trip covers every key") {
  RunConfig c = parse("[run]\nseed = 7\nfusion = literal_paper\n[weights]\nbeta_d = 0.25\nbeta_q = 0.45\n"
                      "[scene]\ngoal = 3 4 0.5 -1.25\n");
  const std::string text = render(c);
  const RunConfig back = parse(text);
  CHECK(render(back) == text);
  for (const auto& key : config_keys()) {
    CAPTURE(key);
    CHECK(config_value(back, key) == config_value(c, key));
    CHECK(text.find(key.substr(key.find('.') + 1) + " = ") != std::string::npos);
  }
  CHECK(back.pipeline.fusion == FusionMode::LiteralPaper);
  CHECK(config_keys().size() >= 60);
}

TEST_CASE("every module default is overridable") {
  // Setting each key to its own rendered value must be accepted.
  const RunConfig d;
  for (const auto& key : config_keys()) {
    RunConfig c;
    CAPTURE(key);
    CHECK_NOTHROW(apply_config_value(c, key, config_value(d, key)));
  }
}

TEST_CASE("scene resolution") {
  RunConfig c = parse("[scene]\ngenerator = flat-corridor\nstart = 2 0 0 0\n");
  const SceneSetup s = resolve_scene(c);
  CHECK(s.start.translation().x() == 2.0);
  CHECK(s.goal.translation().x() == 8.5);

  const fs::path file = fs::temp_directory_path() / "shpc_cli_io_scene.txt";
  save_scene(file.string(), s.scene);
  RunConfig f = parse("[scene]\nfile = " + file.string() + "\nstart = 1 0 0 0\ngoal = 8 0 0 0\n");
  CHECK(resolve_scene(f).scene.size() == s.scene.size());
  fs::remove(file);
}

TEST_CASE("PLY export") {
  const auto cat = ClassCatalog::from_safe_set({"grass", "gravel", "dirt", "water"}, {0, 1});
  Eigen::Matrix3Xd pts(3, 40);
  for (int i = 0; i < 40; ++i) pts.col(i) = Eigen::Vector3d(0.1 * (i % 10), 0.1 * (i / 10), 0.0);
  auto cloud = SemanticPointCloud::init(pts, cat);
  auto set = [&](int i, Eigen::Vector4d p, double s) { cloud.set_state(i, p, Eigen::Vector4d::Constant(s), 1); };
  for (int i = 0; i < 10; ++i) set(i, Eigen::Vector4d(1, 0, 0, 0), 0.0);
  for (int i = 10; i < 20; ++i) set(i, Eigen::Vector4d(0, 0, 1, 0), 0.0);
  for (int i = 20; i < 30; ++i) set(i, Eigen::Vector4d(0.3, 0.3, 0.3, 0.1), 0.1);

  std::stringstream io;
  write_ply(io, cloud, PlyColoring::Safety);
  const PlyData safety = read_ply(io);
  CHECK(safety.declared == cloud.size());
  REQUIRE(safety.xyz.size() == cloud.size());
  CHECK(safety.rgb[0] == std::array<int, 3>{255, 255, 255});
  CHECK(safety.rgb[15] == std::array<int, 3>{0, 0, 0});
  CHECK(safety.rgb[35] == std::array<int, 3>{255, 140, 0});
  // One unclear region, one colour, neither white nor black.
  for (int i = 21; i < 30; ++i) CHECK(safety.rgb[i] == safety.rgb[20]);
  CHECK(safety.rgb[20] != safety.rgb[0]);
  CHECK(safety.rgb[20] != safety.rgb[15]);
  CHECK(safety.xyz[13][0] == doctest::Approx(0.3));
  CHECK(safety.xyz[13][1] == doctest::Approx(0.1));

  std::stringstream io2;
  write_ply(io2, cloud, PlyColoring::Class);
  const PlyData cls = read_ply(io2);
  REQUIRE(cls.rgb.size() == cloud.size());
  const auto grass = class_color(0), dirt = class_color(2);
  CHECK(cls.rgb[0] == std::array<int, 3>{grass[0], grass[1], grass[2]});
  CHECK(cls.rgb[10] == std::array<int, 3>{dirt[0], dirt[1], dirt[2]});
  CHECK(cls.rgb[39] == std::array<int, 3>{255, 140, 0});
  CHECK(class_color(8) == class_color(0));
  CHECK_THROWS_AS(ply_coloring_from_string("rainbow"), std::invalid_argument);
}

TEST_CASE("cli: flat corridor plan and exports") {
  const fs::path dir = fs::temp_directory_path() / "shpc_cli_flat";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "flat.ini";
  {
    std::ofstream out(cfg);
    out << "# flat corridor\n[scene]\ngenerator = flat-corridor\n[run]\nseed = 5\n";
  }
  const fs::path log = dir / "log.txt";
  REQUIRE(run_cli("gen-scene --config " + cfg.string() + " --out " + (dir / "out").string(), log) == 0);
  CHECK(load_scene((dir / "out" / "scene.txt").string()).size() > 0);
  REQUIRE(run_cli("plan --config " + cfg.string() + " --out " + (dir / "out").string(), log) == 0);
  CHECK(slurp(log).find("outcome=confirmed_safe") != std::string::npos);
  CHECK(slurp(dir / "out" / "config.ini") == slurp(cfg));
  CHECK(slurp(dir / "out" / "result.json").find("\"confirmed_safe\"") != std::string::npos);
  CHECK(slurp(dir / "out" / "path.csv").rfind("step,vertex,x,y,z,roll,pitch,yaw,cost\n0,0,", 0) == 0);
  CHECK(slurp(dir / "out" / "graph.txt").find("\nvertex 0 ") != std::string::npos);
  {
    std::istringstream eff(slurp(dir / "out" / "effective_config.ini"));
    const RunConfig c = parse_config(eff);
    CHECK(c.pipeline.seed == 5);
    CHECK(c.scene.generator == "flat-corridor");
  }

  REQUIRE(run_cli("export-ply --color class --out " + (dir / "out").string(), log) == 0);
  std::ifstream ply(dir / "out" / "cloud_class.ply");
  const PlyData d = read_ply(ply);
  const auto cloud = load_cloud((dir / "out" / "cloud.shpc").string());
  CHECK(d.declared == cloud.size());
  CHECK(d.xyz.size() == cloud.size());
  fs::remove_all(dir);
}

TEST_CASE("cli: error lines and exit codes") {
  const fs::path dir = fs::temp_directory_path() / "shpc_cli_errors";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "log.txt";
  const fs::path bad = dir / "bad.ini";
  {
    std::ofstream out(bad);
    out << "[safety]\ntheta_safe = 0.9\ntheta_unsafe = 0.05\n";
  }
  CHECK(run_cli("validate-config --config " + bad.string(), log) == 2);
  const std::string err = slurp(log);
  CHECK(err.rfind("error: code=2 message=", 0) == 0);
  CHECK(err.find("1 - theta_safe < theta_unsafe") != std::string::npos);
  CHECK(std::count(err.begin(), err.end(), '\n') == 1);

  CHECK(run_cli("validate-config --config " + (dir / "missing.ini").string(), log) == 4);
  CHECK(slurp(log).rfind("error: code=4 message=", 0) == 0);
  CHECK(run_cli("export-ply --cloud " + (dir / "none.shpc").string() + " --out " + dir.string(), log) == 4);
  CHECK(run_cli("plan --selector best", log) == 2);
  CHECK(run_cli("no-such-command", log) == 2);
  CHECK(run_cli("validate-config --seed 9 --nbv 2", log) == 0);
  CHECK(slurp(log).find("seed = 9\n") != std::string::npos);
  CHECK(slurp(log).find("max_nbv = 2\n") != std::string::npos);

  // A start off the terrain cannot grow any graph.
  const fs::path off = dir / "off.ini";
  {
    std::ofstream out(off);
    out << "[scene]\ngenerator = flat-corridor\nstart = 50 50 0 0\n";
  }
  CHECK(run_cli("plan --config " + off.string() + " --out " + (dir / "o").string(), log) == 3);
  CHECK(slurp(log).find("error: code=3 message=") != std::string::npos);
  fs::remove_all(dir);
}
