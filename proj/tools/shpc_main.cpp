#include "shpc/cli_io.hpp"
#include "shpc/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace shpc;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kPlanning = 3, kIo = 4 };

struct Failure : std::runtime_error {
  Failure(int c, const std::string& m) : std::runtime_error(m), code(c) {}
  int code;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> trials;
  std::optional<int> nbv;
  std::string selector;
  std::string generator;
  std::string cloud_path;
  std::string color = "safety";
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(kIo, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure(kIo, "cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw Failure(kIo, "write failed: " + path.string());
}

struct Loaded {
  RunConfig config;
  std::string text;  // verbatim config file, empty without --config
};

Loaded load(const Options& o) {
  Loaded l;
  if (!o.config_path.empty()) {
    l.text = read_text(o.config_path);
    std::istringstream in(l.text);
    l.config = parse_config(in);
  }
  RunConfig& c = l.config;
  if (o.seed) c.pipeline.seed = *o.seed;
  if (o.trials) c.trials = *o.trials;
  if (o.nbv) c.pipeline.max_nbv = *o.nbv;
  if (!o.selector.empty()) apply_config_value(c, "run.selector", o.selector);
  c.validate();
  return l;
}

fs::path prepare_out(const Options& o, const Loaded& l) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure(kIo, "cannot create " + dir.string() + ": " + ec.message());
  if (!o.config_path.empty()) write_file(dir / "config.ini", [&](std::ostream& out) { out << l.text; });
  write_file(dir / "effective_config.ini", [&](std::ostream& out) { write_config(out, l.config); });
  return dir;
}

int gen_scene(const Options& o) {
  Loaded l = load(o);
  if (!o.generator.empty()) {
    l.config.scene.generator = o.generator;
    l.config.scene_file.clear();
    l.config.validate();
  }
  const fs::path dir = prepare_out(o, l);
  const SceneSetup setup = resolve_scene(l.config);
  write_file(dir / "scene.txt", [&](std::ostream& out) { write_scene(out, setup.scene); });
  std::cout << "scene " << l.config.scene.generator << " points=" << setup.scene.size() << " -> "
            << (dir / "scene.txt").string() << '\n';
  return kOk;
}

int plan(const Options& o) {
  const Loaded l = load(o);
  const fs::path dir = prepare_out(o, l);
  const PipelineConfig& cfg = l.config.pipeline;
  const SceneSetup setup = resolve_scene(l.config);
  SemanticPointCloud cloud = l.config.cloud_file.empty()
                                 ? initial_cloud(setup.scene, setup.start, cfg, derive_seed(cfg.seed, "view", 0))
                                 : load_cloud(l.config.cloud_file);
  if (cloud.size() != setup.scene.size()) throw Failure(kConfig, "run.cloud_file does not match the scene size");
  if (!attach_node(cloud, setup.start, cfg.planner.traversability)) {
    throw Failure(kPlanning, "start pose does not attach to the terrain");
  }

  std::ofstream diag(dir / "nbv_diagnostics.csv", std::ios::binary);
  if (!diag) throw Failure(kIo, "cannot write nbv_diagnostics.csv");
  write_nbv_diagnostics_header(diag);
  PipelineOptions opts;
  opts.observer = [&](int k, const std::vector<NbvCandidate>& cands, std::optional<std::size_t> pick) {
    write_nbv_diagnostics(diag, k, cands, pick);
  };
  const PipelineRun run = run_pipeline(setup.scene, std::move(cloud), setup.start, setup.goal, cfg, opts);
  diag.close();

  write_file(dir / "result.json", [&](std::ostream& out) { out << trial_result_json(run.result, &run.graph) << '\n'; });
  write_file(dir / "path.csv", [&](std::ostream& out) {
    if (run.result.path) {
      write_path_csv(out, run.graph, *run.result.path);
    } else {
      out << "step,vertex,x,y,z,roll,pitch,yaw,cost\n";
    }
  });
  write_file(dir / "graph.txt", [&](std::ostream& out) { write_graph(out, run.graph); });
  write_file(dir / "cloud.shpc", [&](std::ostream& out) { write_cloud(out, run.cloud); });

  std::cout << "outcome=" << to_string(run.result.outcome) << " nbv_used=" << run.result.nbv_used;
  if (run.result.path) std::cout << " cost=" << run.result.path->cost;
  std::cout << " vertices=" << run.graph.size() << '\n';
  if (run.graph.size() <= 1) throw Failure(kPlanning, "hypothesis graph has only the root vertex");
  return kOk;
}

int safety_eval(const Options& o) {
  const Loaded l = load(o);
  const fs::path dir = prepare_out(o, l);
  const SafetyReport r = run_safety_experiment(resolve_scene(l.config), l.config.pipeline, l.config.trials);
  write_file(dir / "metrics.csv", [&](std::ostream& out) { write_metrics_csv(out, r); });
  write_file(dir / "trials.jsonl", [&](std::ostream& out) { write_trial_log(out, r); });
  write_metrics_csv(std::cout, r);
  return kOk;
}

int nbv_ablation(const Options& o) {
  const Loaded l = load(o);
  const fs::path dir = prepare_out(o, l);
  const AblationReport r = run_nbv_ablation(resolve_scene(l.config), l.config.pipeline, l.config.trials);
  write_file(dir / "ablation.csv", [&](std::ostream& out) { write_ablation_csv(out, r); });
  write_file(dir / "ablation_trials.csv", [&](std::ostream& out) { write_ablation_trials_csv(out, r); });
  write_ablation_csv(std::cout, r);
  return kOk;
}

int export_ply(const Options& o) {
  const Loaded l = load(o);
  PlyColoring coloring;
  try {
    coloring = ply_coloring_from_string(o.color);
  } catch (const std::invalid_argument& e) {
    throw Failure(kConfig, e.what());
  }
  const std::string src = o.cloud_path.empty() ? (fs::path(o.out) / "cloud.shpc").string() : o.cloud_path;
  const SemanticPointCloud cloud = load_cloud(src);
  const fs::path dir = prepare_out(o, l);
  const fs::path dst = dir / ("cloud_" + o.color + ".ply");
  const PipelineConfig& cfg = l.config.pipeline;
  write_file(dst, [&](std::ostream& out) {
    write_ply(out, cloud, coloring, cfg.planner.safety, cfg.region_eps_factor, cfg.region_min_pts);
  });
  std::cout << "points=" << cloud.size() << " -> " << dst.string() << '\n';
  return kOk;
}

int validate_config(const Options& o) {
  write_config(std::cout, load(o).config);
  return kOk;
}

int fail(int code, const std::string& message) {
  std::string m = message;
  for (char& c : m) {
    if (c == '\n') c = ' ';
  }
  std::cerr << "error: code=" << code << " message=" << m << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic hypothesis path planning with next-best-view selection"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "INI configuration file");
  app.add_option("--seed", o.seed, "master seed (overrides run.seed)");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--trials", o.trials, "experiment trials (overrides run.trials)");
  app.add_option("--nbv", o.nbv, "NBV iterations (overrides run.max_nbv)");
  app.add_option("--selector", o.selector, "full, random, geometry or uncertainty");

  std::function<int(const Options&)> action;
  auto sub = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    CLI::App* s = app.add_subcommand(name, help);
    s->callback([&action, fn] { action = fn; });
    return s;
  };
  sub("gen-scene", "write a built-in scene as SHPC-SCENE text", gen_scene)
      ->add_option("--generator", o.generator, "flat-corridor, two-bridges, annulus-trap or inclined-field");
  sub("plan", "run the pipeline once", plan);
  sub("safety-eval", "path-safety experiment", safety_eval);
  sub("nbv-ablation", "NBV selector ablation", nbv_ablation);
  CLI::App* ply = sub("export-ply", "export an SHPC1 cloud as ASCII PLY", export_ply);
  ply->add_option("--cloud", o.cloud_path, "SHPC1 cloud (default OUT/cloud.shpc)");
  ply->add_option("--color", o.color, "class or safety")->check(CLI::IsMember({"class", "safety"}));
  sub("validate-config", "check a configuration and print the effective values", validate_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kConfig, e.what());
  }

  try {
    return action(o);
  } catch (const Failure& e) {
    return fail(e.code, e.what());
  } catch (const ConfigError& e) {
    return fail(kConfig, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kConfig, e.what());
  } catch (const std::exception& e) {
    return fail(kIo, e.what());
  }
}
