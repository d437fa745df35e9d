#include "shpc/pipeline.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace shpc {

void PipelineConfig::validate() const {
  if (max_nbv < 0) throw std::invalid_argument("max_nbv must be >= 0");
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (!(goal_radius > 0.0)) throw std::invalid_argument("goal radius must be positive");
  if (!(region_eps_factor > 0.0) || region_min_pts < 1) throw std::invalid_argument("invalid region parameters");
  if (!(merge_radius_factor > 0.0)) throw std::invalid_argument("merge radius factor must be positive");
  if (render_size <= 0 || pixel_threshold < 0) throw std::invalid_argument("invalid NBV render settings");
  if (n_unsafe < 1) throw std::invalid_argument("n_unsafe must be >= 1");
  if (!(perturbation_radius >= 0.0) || max_perturbation_attempts < 1) {
    throw std::invalid_argument("invalid perturbation settings");
  }
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (!(candidates.radius > 0.0) || candidates.count < 1 || candidates.budget < 0) {
    throw std::invalid_argument("invalid candidate parameters");
  }
  planner.validate();
  rig.validate();
  noise.validate();
  survey_noise.validate();
  weights.validate();
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::SelectedSafe: return "selected_safe";
    case Outcome::SelectedUnsafe: return "selected_unsafe";
    case Outcome::ConfirmedSafe: return "confirmed_safe";
    case Outcome::ConfirmedUnsafe: return "confirmed_unsafe";
  }
  return "?";
}

SafetyOracle SafetyOracle::from_scene(const GroundTruthScene& scene, int n_unsafe) {
  if (n_unsafe < 1) throw std::invalid_argument("n_unsafe must be >= 1");
  SafetyOracle o;
  o.n_unsafe = n_unsafe;
  o.unsafe.resize(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) o.unsafe[i] = scene.truly_unsafe(i);
  return o;
}

bool judge_path(const std::vector<TrajectoryNode>& path, const SafetyOracle& oracle) {
  for (const auto& v : path) {
    int overlap = 0;
    for (std::size_t i : v.support) overlap += oracle.unsafe[i] ? 1 : 0;
    if (overlap > oracle.n_unsafe) return false;
  }
  return true;
}

namespace {

RegionParams region_params(const SemanticPointCloud& cloud, const PipelineConfig& config) {
  const DbscanParams p{config.region_eps_factor * cloud.resolution(), config.region_min_pts};
  return {p, p};
}

double mean_uncertainty(const HypothesisGraph& graph, const SemanticPointCloud& cloud, const std::vector<int>& vs) {
  double sum = 0.0;
  for (int v : vs) sum += vertex_uncertainty(graph.nodes[static_cast<std::size_t>(v)], cloud);
  return sum / static_cast<double>(vs.size());
}

}  // namespace

HypothesisGraph grow_graph(const SemanticPointCloud& cloud, const Pose6D& start, const Pose6D& goal,
                           const PipelineConfig& config) {
  const SafetyPartition partition = partition_cloud(cloud, config.planner.safety);
  const RegionSet regions = two_stage_cluster(cloud, partition, region_params(cloud, config));
  return grow_hypothesis_graph(cloud, partition, regions, start, GoalRegion{goal, config.goal_radius}, config.planner,
                               derive_seed(config.seed, "graph"));
}

PipelineRun run_pipeline(const GroundTruthScene& scene, SemanticPointCloud cloud, const Pose6D& start,
                         const Pose6D& goal, const PipelineConfig& config, const PipelineOptions& options) {
  config.validate();
  if (cloud.size() != scene.size()) throw std::invalid_argument("cloud and scene differ in size");
  const PlannerParams& planner = config.planner;
  const bool semantic = planner.cost.semantic;
  const SafetyOracle oracle = SafetyOracle::from_scene(scene, config.n_unsafe);
  CandidateParams cand_params = config.candidates;
  cand_params.planner = planner;

  PipelineRun run;
  SafetyPartition partition = partition_cloud(cloud, planner.safety);
  run.graph = options.graph ? *options.graph : grow_graph(cloud, start, goal, config);
  HypothesisGraph& graph = run.graph;

  Rng select_rng(derive_seed(config.seed, "selector"));
  std::vector<int> frozen;
  std::vector<double> trace;
  run.checkpoints.resize(static_cast<std::size_t>(config.max_nbv) + 1);
  auto fill_from = [&](int k, const TrialResult& r) {
    for (int j = k; j <= config.max_nbv; ++j) run.checkpoints[static_cast<std::size_t>(j)] = r;
  };

  for (int k = 0; k <= config.max_nbv; ++k) {
    const auto paths = k_shortest_paths(graph, config.m);
    const StatusReport status = path_status(graph, paths);
    const std::vector<int> vnbv = nbv_vertex_set(graph, paths);
    if (k == 0) frozen = vnbv;
    if (!frozen.empty()) trace.push_back(mean_uncertainty(graph, cloud, frozen));

    TrialResult now;
    now.nbv_used = k;
    if (status.status == PathStatus::ConfirmedUnsafe) {
      now.outcome = Outcome::ConfirmedUnsafe;
    } else {
      now.path = status.status == PathStatus::ConfirmedSafe ? *status.path : paths.front();
      const bool safe = judge_path(path_nodes(graph, *now.path), oracle);
      if (status.status == PathStatus::ConfirmedSafe && semantic && safe) {
        now.outcome = Outcome::ConfirmedSafe;
      } else {
        now.outcome = safe ? Outcome::SelectedSafe : Outcome::SelectedUnsafe;
      }
    }
    run.checkpoints[static_cast<std::size_t>(k)] = now;
    const bool confirmed = status.status != PathStatus::Undecided;
    if ((confirmed && options.early_termination) || k == config.max_nbv) {
      fill_from(k, now);
      break;
    }

    const std::vector<int>& targets = vnbv.empty() ? frozen : vnbv;
    std::vector<Pose6D> cands;
    if (!targets.empty()) {
      cands = generate_candidates(cloud, partition, start, goal.translation(), cand_params,
                                  derive_seed(config.seed, "candidates", k));
    }
    if (cands.empty()) {
      fill_from(k, now);
      break;
    }
    const NbvEvaluation ev = evaluate_candidates(cloud, graph, targets, cands, start, config.rig, config.render_size,
                                                 config.pixel_threshold, config.weights);
    const auto pick = select_with(config.selector, ev, config.weights, select_rng);
    if (options.observer) options.observer(k, ev.candidates, pick);

    const ViewMeasurement view =
        take_view(scene, config.rig.camera_pose(cands[*pick]), config.rig.intrinsics(), config.rig.width,
                  config.rig.height, config.noise, derive_seed(config.seed, "view", k + 1));
    cloud.integrate_view(view, config.merge_radius_factor * cloud.resolution());
    partition = partition_cloud(cloud, planner.safety);
    recost(graph, cloud, partition, planner);
  }

  for (auto& c : run.checkpoints) {
    const std::size_t n = std::min(trace.size(), static_cast<std::size_t>(c.nbv_used) + 1);
    c.uncertainty_trace.assign(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(n));
  }
  run.result = run.checkpoints.back();
  run.cloud = std::move(cloud);
  return run;
}

SemanticPointCloud initial_cloud(const GroundTruthScene& scene, const Pose6D& start, const PipelineConfig& config,
                                 std::uint64_t seed) {
  SemanticPointCloud cloud = SemanticPointCloud::init(scene.positions(), scene.catalog(), config.fusion);
  const auto robot = attach_node(cloud, start, config.planner.traversability);
  const Eigen::Vector3d eye = config.rig.camera_pose(robot ? robot->pose : start).translation();
  const PointMeasurements m = survey_points(scene, eye, config.survey_noise, seed);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    cloud.set_state(i, m.probs.col(col), m.uncerts.col(col), 1);
  }
  return cloud;
}

std::optional<TrialPoses> perturb_poses(const GroundTruthScene& scene, const Pose6D& start, const Pose6D& goal,
                                        const PipelineConfig& config, std::uint64_t seed) {
  const SemanticPointCloud cloud = SemanticPointCloud::init(scene.positions(), scene.catalog());
  const auto& tp = config.planner.traversability;
  Rng rng(seed);
  auto jitter = [&](const Eigen::Vector3d& p) {
    const double r = config.perturbation_radius * std::sqrt(rng.uniform());
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return Eigen::Vector3d(p.x() + r * std::cos(a), p.y() + r * std::sin(a), p.z());
  };
  for (int attempt = 1; attempt <= config.max_perturbation_attempts; ++attempt) {
    const Eigen::Vector3d s = jitter(start.translation());
    const Eigen::Vector3d g = jitter(goal.translation());
    const double yaw = std::atan2(g.y() - s.y(), g.x() - s.x());
    TrialPoses out{planar_pose(s.x(), s.y(), yaw, s.z()), planar_pose(g.x(), g.y(), attitude(goal).yaw, g.z()),
                   attempt};
    if (attach_node(cloud, out.start, tp) && attach_node(cloud, out.goal, tp)) return out;
  }
  return std::nullopt;
}

namespace {

/// Runs body(i) for i in [0, n) on `threads` workers; results must be written by index.
template <typename Body>
void parallel_for(int n, int threads, Body&& body) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, std::max(n, 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct TrialSetup {
  std::uint64_t seed = 0;
  std::optional<TrialPoses> poses;
  PipelineConfig config;
};

TrialSetup prepare_trial(const SceneSetup& setup, const PipelineConfig& config, int index) {
  TrialSetup t;
  t.seed = derive_seed(config.seed, "trial", index);
  t.poses = perturb_poses(setup.scene, setup.start, setup.goal, config, derive_seed(t.seed, "poses"));
  t.config = config;
  t.config.seed = t.seed;
  return t;
}

}  // namespace

ColumnMetrics column_metrics(const std::string& name, const std::vector<const TrialResult*>& results) {
  ColumnMetrics c;
  c.name = name;
  int safe = 0, unsafe = 0, cs = 0, cn = 0;
  for (const TrialResult* r : results) {
    ++c.trials;
    switch (r->outcome) {
      case Outcome::SelectedSafe: ++safe; break;
      case Outcome::ConfirmedSafe: ++safe; ++cs; break;
      case Outcome::SelectedUnsafe: ++unsafe; break;
      case Outcome::ConfirmedUnsafe: ++cn; break;
    }
  }
  if (c.trials > 0) {
    const double n = c.trials;
    c.safe = 100.0 * safe / n;
    c.unsafe = 100.0 * unsafe / n;
    c.confirmed_safe = 100.0 * cs / n;
    c.confirmed_unsafe = 100.0 * cn / n;
  }
  return c;
}

SafetyReport run_safety_experiment(const SceneSetup& setup, const PipelineConfig& config, int trials) {
  config.validate();
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  SafetyReport report;
  report.trials.resize(static_cast<std::size_t>(trials));
  parallel_for(trials, config.threads, [&](int i) {
    SafetyTrial& out = report.trials[static_cast<std::size_t>(i)];
    const TrialSetup t = prepare_trial(setup, config, i);
    out.index = i;
    out.seed = t.seed;
    if (!t.poses) {
      out.skipped = true;
      return;
    }
    out.poses = *t.poses;
    const SemanticPointCloud cloud = initial_cloud(setup.scene, t.poses->start, t.config, derive_seed(t.seed, "view", 0));
    out.checkpoints = run_pipeline(setup.scene, cloud, t.poses->start, t.poses->goal, t.config).checkpoints;
    PipelineConfig b1 = t.config;
    b1.planner.cost.semantic = false;
    b1.max_nbv = 0;
    out.b1 = run_pipeline(setup.scene, cloud, t.poses->start, t.poses->goal, b1).result;
  });

  auto column = [&](const std::string& name, auto pick) {
    std::vector<const TrialResult*> rs;
    for (const auto& t : report.trials) {
      if (!t.skipped) rs.push_back(pick(t));
    }
    report.columns.push_back(column_metrics(name, rs));
  };
  column("B1", [](const SafetyTrial& t) { return &t.b1; });
  column("B2", [](const SafetyTrial& t) { return &t.checkpoints[0]; });
  for (int k = 1; k <= config.max_nbv; ++k) {
    column(std::to_string(k) + "N", [k](const SafetyTrial& t) { return &t.checkpoints[static_cast<std::size_t>(k)]; });
  }
  return report;
}

void write_metrics_csv(std::ostream& out, const SafetyReport& report) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << "metric";
  for (const auto& c : report.columns) s << ',' << c.name;
  s << '\n';
  const std::pair<const char*, double ColumnMetrics::*> rows[] = {{"Safe%", &ColumnMetrics::safe},
                                                                  {"Unsafe%", &ColumnMetrics::unsafe},
                                                                  {"CS%", &ColumnMetrics::confirmed_safe},
                                                                  {"CN%", &ColumnMetrics::confirmed_unsafe}};
  for (const auto& [label, field] : rows) {
    s << label;
    for (const auto& c : report.columns) s << ',' << c.*field;
    s << '\n';
  }
  out << s.str();
}

namespace {

nlohmann::json result_json(const TrialResult& r) {
  nlohmann::json j;
  j["outcome"] = to_string(r.outcome);
  j["nbv_used"] = r.nbv_used;
  if (r.path) {
    j["path"] = {{"vertices", r.path->vertices}, {"cost", r.path->cost}};
  } else {
    j["path"] = nullptr;
  }
  j["uncertainty_trace"] = r.uncertainty_trace;
  return j;
}

}  // namespace

std::string trial_result_json(const TrialResult& r, const HypothesisGraph* graph) {
  nlohmann::json j = result_json(r);
  if (graph) {
    j["graph"] = {{"vertices", graph->size()},
                  {"arcs", graph->arcs.size()},
                  {"goal_vertices", graph->goal_vertices.size()},
                  {"iterations", graph->stats.iterations},
                  {"paths_found", graph->stats.paths_found},
                  {"regions_removed", graph->stats.regions_removed},
                  {"restarts", graph->stats.restarts},
                  {"reconnections", graph->stats.reconnections}};
  }
  return j.dump(2);
}

void write_trial_log(std::ostream& out, const SafetyReport& report) {
  for (const auto& t : report.trials) {
    nlohmann::json j;
    j["trial"] = t.index;
    j["seed"] = t.seed;
    j["skipped"] = t.skipped;
    if (!t.skipped) {
      const Eigen::Vector3d s = t.poses.start.translation(), g = t.poses.goal.translation();
      j["start"] = {s.x(), s.y(), s.z()};
      j["goal"] = {g.x(), g.y(), g.z()};
      j["pose_attempts"] = t.poses.attempts;
      j["B1"] = result_json(t.b1);
      nlohmann::json cps = nlohmann::json::array();
      for (const auto& c : t.checkpoints) cps.push_back(result_json(c));
      j["checkpoints"] = cps;
    }
    out << j.dump() << '\n';
  }
}

AblationReport run_nbv_ablation(const SceneSetup& setup, const PipelineConfig& config, int trials) {
  config.validate();
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  AblationReport report;
  report.trials.resize(static_cast<std::size_t>(trials));
  const std::size_t len = static_cast<std::size_t>(config.max_nbv) + 1;
  parallel_for(trials, config.threads, [&](int i) {
    AblationTrial& out = report.trials[static_cast<std::size_t>(i)];
    const TrialSetup t = prepare_trial(setup, config, i);
    out.index = i;
    out.seed = t.seed;
    if (!t.poses) {
      out.skipped = true;
      return;
    }
    const SemanticPointCloud cloud = initial_cloud(setup.scene, t.poses->start, t.config, derive_seed(t.seed, "view", 0));
    const HypothesisGraph graph = grow_graph(cloud, t.poses->start, t.poses->goal, t.config);
    PipelineOptions opts;
    opts.early_termination = false;
    opts.graph = &graph;
    for (std::size_t s = 0; s < kAllSelectors.size(); ++s) {
      PipelineConfig c = t.config;
      c.selector = kAllSelectors[s];
      PipelineRun run = run_pipeline(setup.scene, cloud, t.poses->start, t.poses->goal, c, opts);
      auto trace = std::move(run.result.uncertainty_trace);
      if (trace.empty()) {
        out.skipped = true;
        return;
      }
      // No candidates left: the uncertainty stays where it is.
      trace.resize(len, trace.back());
      out.traces[s] = std::move(trace);
    }
  });
  for (std::size_t s = 0; s < kAllSelectors.size(); ++s) {
    report.mean[s].assign(len, 0.0);
    int n = 0;
    for (const auto& t : report.trials) {
      if (t.skipped) continue;
      ++n;
      for (std::size_t k = 0; k < len; ++k) report.mean[s][k] += t.traces[s][k];
    }
    if (n > 0) {
      for (double& v : report.mean[s]) v /= n;
    }
  }
  return report;
}

void write_ablation_csv(std::ostream& out, const AblationReport& report) {
  std::ostringstream s;
  s << std::setprecision(9) << "iteration";
  for (NbvSelector sel : kAllSelectors) s << ',' << to_string(sel);
  s << '\n';
  for (std::size_t k = 0; k < report.mean[0].size(); ++k) {
    s << k;
    for (const auto& m : report.mean) s << ',' << m[k];
    s << '\n';
  }
  out << s.str();
}

void write_ablation_trials_csv(std::ostream& out, const AblationReport& report) {
  std::ostringstream s;
  s << std::setprecision(9) << "trial,selector,iteration,uncertainty\n";
  for (const auto& t : report.trials) {
    if (t.skipped) continue;
    for (std::size_t sel = 0; sel < kAllSelectors.size(); ++sel) {
      for (std::size_t k = 0; k < t.traces[sel].size(); ++k) {
        s << t.index << ',' << to_string(kAllSelectors[sel]) << ',' << k << ',' << t.traces[sel][k] << '\n';
      }
    }
  }
  out << s.str();
}

double paired_t_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired test needs two equal samples of n >= 2");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    if (mean == 0.0) return 0.0;
    return mean < 0.0 ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }
  return mean / (sd / std::sqrt(n));
}

}  // namespace shpc
