#pragma once

#include "shpc/hypothesis.hpp"
#include "shpc/pipeline.hpp"
#include "shpc/regions.hpp"
#include "shpc/scenes.hpp"
#include "shpc/semantic_cloud.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace shpc {

/// Bad configuration text or values (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run needs. Keys are "section.key"; see config_keys().
struct RunConfig {
  SceneSpec scene;
  std::string scene_file;  ///< SHPC-SCENE file used instead of the generator
  std::string cloud_file;  ///< SHPC1 initial cloud used instead of the start survey
  std::optional<Pose6D> start;
  std::optional<Pose6D> goal;
  int trials = 100;
  PipelineConfig pipeline;

  /// Throws ConfigError.
  void validate() const;
};

/// Every accepted key, in output order.
std::vector<std::string> config_keys();

/// INI text: "[section]" headers, "key = value" lines, '#' or ';' comments.
/// Keys outside a section must be written as "section.key". Unknown keys,
/// duplicates and malformed values throw ConfigError naming the line.
RunConfig parse_config(std::istream& in);
void apply_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string config_value(const RunConfig& config, const std::string& key);

/// The effective configuration as INI text that parses back to the same values.
void write_config(std::ostream& out, const RunConfig& config);

/// Scene from scene_file or the generator; start/goal overrides applied.
/// A scene file needs both poses.
SceneSetup resolve_scene(const RunConfig& config);

enum class PlyColoring { Class, Safety };

PlyColoring ply_coloring_from_string(const std::string& s);

/// Fixed class palette, cycled for catalogs with more classes.
std::array<std::uint8_t, 3> class_color(int cls);
/// Colour for never-measured points in either mode.
inline constexpr std::array<std::uint8_t, 3> kUnmeasuredColor{255, 140, 0};

/// ASCII PLY with x y z as float and uchar red green blue. Class mode paints
/// the argmax class; safety mode paints Safe white, Unsafe black and each
/// unclear region a colour hashed from its id.
void write_ply(std::ostream& out, const SemanticPointCloud& cloud, PlyColoring coloring,
               const SafetyParams& safety = {}, double region_eps_factor = 4.0, int region_min_pts = 5);

/// CSV: step,vertex,x,y,z,roll,pitch,yaw,cost.
void write_path_csv(std::ostream& out, const HypothesisGraph& graph, const CandidatePath& path);

}  // namespace shpc
