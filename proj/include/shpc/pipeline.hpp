#pragma once

#include "shpc/hypothesis.hpp"
#include "shpc/nbv.hpp"
#include "shpc/regions.hpp"
#include "shpc/scenes.hpp"
#include "shpc/semantic_cloud.hpp"
#include "shpc/sensor.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shpc {

struct PipelineConfig {
  int max_nbv = 5;     ///< NBV iterations
  int m = 5;           ///< promising paths ranked per iteration
  NbvSelector selector = NbvSelector::Full;
  FusionMode fusion = FusionMode::MeasurementNormalized;
  std::uint64_t seed = 1;
  double goal_radius = 1.0;          ///< m
  double region_eps_factor = 4.0;    ///< DBSCAN eps in cloud resolutions, both stages
  int region_min_pts = 5;
  double merge_radius_factor = 1.0;  ///< backprojection merge radius in cloud resolutions
  int render_size = 256;             ///< NBV visibility image side
  int pixel_threshold = 10;
  int n_unsafe = 4;                  ///< ground-truth overlap threshold for judging paths
  double perturbation_radius = 1.0;  ///< start/goal jitter in experiments, m
  int max_perturbation_attempts = 100;
  int threads = 0;                   ///< experiment workers, 0 = hardware concurrency
  PlannerParams planner;
  CandidateParams candidates;
  CameraRig rig;
  NoiseModel noise;         ///< NBV camera
  NoiseModel survey_noise;  ///< initial survey
  NbvWeights weights;

  void validate() const;
};

enum class Outcome { SelectedSafe, SelectedUnsafe, ConfirmedSafe, ConfirmedUnsafe };

const char* to_string(Outcome o);

/// Ground-truth judge for selected paths.
struct SafetyOracle {
  std::vector<bool> unsafe;  ///< per cloud point
  int n_unsafe = 4;

  static SafetyOracle from_scene(const GroundTruthScene& scene, int n_unsafe);
};

/// Unsafe iff some vertex's support holds more than n_unsafe truly unsafe points.
bool judge_path(const std::vector<TrajectoryNode>& path, const SafetyOracle& oracle);

struct TrialResult {
  Outcome outcome = Outcome::ConfirmedUnsafe;
  int nbv_used = 0;
  std::optional<CandidatePath> path;
  /// Mean vertex uncertainty over the first iteration's V_NBV, before the
  /// first view and after each view.
  std::vector<double> uncertainty_trace;
};

struct PipelineRun {
  TrialResult result;
  /// checkpoints[k]: the result had the loop been capped at k views.
  std::vector<TrialResult> checkpoints;
  HypothesisGraph graph;
  SemanticPointCloud cloud;
};

/// Per-iteration hook: iteration, scored candidates, selected index.
using NbvObserver =
    std::function<void(int iteration, const std::vector<NbvCandidate>& candidates, std::optional<std::size_t>)>;

struct PipelineOptions {
  bool early_termination = true;
  NbvObserver observer;
  /// Reuse a graph grown on the same cloud and config instead of growing one.
  const HypothesisGraph* graph = nullptr;
};

/// Hypothesis graph for the pipeline's configuration (regions from the cloud's
/// current partition, seed derived from config.seed).
HypothesisGraph grow_graph(const SemanticPointCloud& cloud, const Pose6D& start, const Pose6D& goal,
                           const PipelineConfig& config);

/// Grows the hypothesis graph on `cloud`, then alternates path ranking, status
/// checks and NBV measurements up to config.max_nbv times, re-costing the
/// graph after each view. A ConfirmedSafe path that the oracle finds unsafe is
/// reported as SelectedUnsafe; with semantic costs disabled a zero-cost path is
/// only ever Selected. Start pose must attach to the terrain.
PipelineRun run_pipeline(const GroundTruthScene& scene, SemanticPointCloud cloud, const Pose6D& start,
                         const Pose6D& goal, const PipelineConfig& config, const PipelineOptions& options = {});

/// Cloud over the scene points, each holding one survey measurement taken
/// from the camera position at the start pose.
SemanticPointCloud initial_cloud(const GroundTruthScene& scene, const Pose6D& start, const PipelineConfig& config,
                                 std::uint64_t seed);

/// Start and goal jittered uniformly within config.perturbation_radius in the
/// plane; nullopt once the attempts run out without both attaching.
struct TrialPoses {
  Pose6D start;
  Pose6D goal;
  int attempts = 0;
};
std::optional<TrialPoses> perturb_poses(const GroundTruthScene& scene, const Pose6D& start, const Pose6D& goal,
                                        const PipelineConfig& config, std::uint64_t seed);

struct SafetyTrial {
  int index = 0;
  std::uint64_t seed = 0;
  bool skipped = false;
  TrialPoses poses;
  TrialResult b1;
  std::vector<TrialResult> checkpoints;  ///< 0..max_nbv views; index 0 is B2
};

struct ColumnMetrics {
  std::string name;
  int trials = 0;
  double safe = 0.0;
  double unsafe = 0.0;
  double confirmed_safe = 0.0;
  double confirmed_unsafe = 0.0;
};

struct SafetyReport {
  std::vector<SafetyTrial> trials;
  std::vector<ColumnMetrics> columns;  ///< B1, B2, 1N..XN
};

SafetyReport run_safety_experiment(const SceneSetup& setup, const PipelineConfig& config, int trials);

/// Percentages over the non-skipped trials.
ColumnMetrics column_metrics(const std::string& name, const std::vector<const TrialResult*>& results);

/// Rows Safe%, Unsafe%, CS%, CN%; columns B1, B2, 1N..XN.
void write_metrics_csv(std::ostream& out, const SafetyReport& report);
/// One JSON object per trial.
void write_trial_log(std::ostream& out, const SafetyReport& report);

inline constexpr std::array<NbvSelector, 4> kAllSelectors{NbvSelector::Full, NbvSelector::Random,
                                                          NbvSelector::GeometryOnly, NbvSelector::UncertaintyOnly};

struct AblationTrial {
  int index = 0;
  std::uint64_t seed = 0;
  bool skipped = false;
  /// Per selector (kAllSelectors order), traces of length max_nbv + 1.
  std::array<std::vector<double>, 4> traces;
};

struct AblationReport {
  std::vector<AblationTrial> trials;
  /// Per selector, mean trace over non-skipped trials.
  std::array<std::vector<double>, 4> mean;
};

/// Every selector runs max_nbv views from the same initial state without early
/// termination; uncertainty is tracked over the first iteration's V_NBV.
AblationReport run_nbv_ablation(const SceneSetup& setup, const PipelineConfig& config, int trials);

/// CSV: iteration,full,random,geometry,uncertainty.
void write_ablation_csv(std::ostream& out, const AblationReport& report);
/// CSV: trial,selector,iteration,uncertainty (non-skipped trials).
void write_ablation_trials_csv(std::ostream& out, const AblationReport& report);

/// Paired one-sided t statistic of a - b (negative when a is smaller).
double paired_t_statistic(const std::vector<double>& a, const std::vector<double>& b);

/// TrialResult as a JSON object.
std::string trial_result_json(const TrialResult& r, const HypothesisGraph* graph = nullptr);

}  // namespace shpc
