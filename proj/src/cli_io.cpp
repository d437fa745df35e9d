#include "shpc/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace shpc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto r = std::from_chars(first, last, v);
  if (r.ec != std::errc{} || r.ptr != last) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("bad value for " + key + ": '" + text + "' (expected true or false)");
}

std::optional<Pose6D> parse_pose(const std::string& key, const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::istringstream s(text);
  std::vector<double> v;
  std::string tok;
  while (s >> tok) v.push_back(parse_number<double>(key, tok));
  if (v.size() != 4) throw ConfigError("bad value for " + key + ": expected 'x y z yaw'");
  return planar_pose(v[0], v[1], v[3], v[2]);
}

std::string format_pose(const std::optional<Pose6D>& p) {
  if (!p) return "";
  const Eigen::Vector3d t = p->translation();
  return format_double(t.x()) + ' ' + format_double(t.y()) + ' ' + format_double(t.z()) + ' ' +
         format_double(attitude(*p).yaw);
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Field>
Entry bind(std::string key, Field field) {
  using T = std::remove_reference_t<decltype(field(std::declval<RunConfig&>()))>;
  Entry e;
  e.key = key;
  e.get = [field](const RunConfig& c) {
    const T& v = field(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, double>) {
      return format_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      return std::to_string(v);
    }
  };
  e.set = [field, key](RunConfig& c, const std::string& text) {
    T& v = field(c);
    if constexpr (std::is_same_v<T, bool>) {
      v = parse_bool(key, text);
    } else if constexpr (std::is_same_v<T, std::string>) {
      v = text;
    } else {
      v = parse_number<T>(key, text);
    }
  };
  return e;
}

#define SHPC_KEY(name, expr) bind(name, [](RunConfig& c) -> auto& { return expr; })

void add_noise(std::vector<Entry>& out, const std::string& section, NoiseModel PipelineConfig::*member) {
  auto n = [member](RunConfig& c) -> NoiseModel& { return c.pipeline.*member; };
  out.push_back(bind(section + ".base_logit", [n](RunConfig& c) -> auto& { return n(c).base_logit; }));
  out.push_back(bind(section + ".distance_coeff", [n](RunConfig& c) -> auto& { return n(c).distance_coeff; }));
  out.push_back(bind(section + ".boundary_coeff", [n](RunConfig& c) -> auto& { return n(c).boundary_coeff; }));
  out.push_back(bind(section + ".boundary_scale", [n](RunConfig& c) -> auto& { return n(c).boundary_scale; }));
  out.push_back(bind(section + ".passes", [n](RunConfig& c) -> auto& { return n(c).passes; }));
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t{
        SHPC_KEY("run.seed", c.pipeline.seed),
        SHPC_KEY("run.trials", c.trials),
        SHPC_KEY("run.threads", c.pipeline.threads),
        SHPC_KEY("run.max_nbv", c.pipeline.max_nbv),
        SHPC_KEY("run.m", c.pipeline.m),
        SHPC_KEY("run.goal_radius", c.pipeline.goal_radius),
        SHPC_KEY("run.region_eps_factor", c.pipeline.region_eps_factor),
        SHPC_KEY("run.region_min_pts", c.pipeline.region_min_pts),
        SHPC_KEY("run.merge_radius_factor", c.pipeline.merge_radius_factor),
        SHPC_KEY("run.render_size", c.pipeline.render_size),
        SHPC_KEY("run.pixel_threshold", c.pipeline.pixel_threshold),
        SHPC_KEY("run.n_unsafe", c.pipeline.n_unsafe),
        SHPC_KEY("run.perturbation_radius", c.pipeline.perturbation_radius),
        SHPC_KEY("run.max_perturbation_attempts", c.pipeline.max_perturbation_attempts),
        SHPC_KEY("run.cloud_file", c.cloud_file),
        SHPC_KEY("scene.generator", c.scene.generator),
        SHPC_KEY("scene.resolution", c.scene.resolution),
        SHPC_KEY("scene.file", c.scene_file),
        SHPC_KEY("safety.theta_safe", c.pipeline.planner.safety.theta_safe),
        SHPC_KEY("safety.theta_unsafe", c.pipeline.planner.safety.theta_unsafe),
        SHPC_KEY("safety.w_sigma", c.pipeline.planner.safety.w_sigma),
        SHPC_KEY("traversability.max_roll", c.pipeline.planner.traversability.max_roll),
        SHPC_KEY("traversability.max_pitch", c.pipeline.planner.traversability.max_pitch),
        SHPC_KEY("traversability.max_residual", c.pipeline.planner.traversability.max_residual),
        SHPC_KEY("traversability.K", c.pipeline.planner.traversability.K),
        SHPC_KEY("traversability.max_support_gap", c.pipeline.planner.traversability.max_support_gap),
        SHPC_KEY("kinematics.segment_length", c.pipeline.planner.kinematics.segment_length),
        SHPC_KEY("kinematics.kappa_max", c.pipeline.planner.kinematics.kappa_max),
        SHPC_KEY("cost.phi_v", c.pipeline.planner.cost.phi_v),
        SHPC_KEY("cost.start_relax_radius", c.pipeline.planner.cost.start_relax_radius),
        SHPC_KEY("cost.relax_threshold", c.pipeline.planner.cost.relax_threshold),
        SHPC_KEY("cost.semantic", c.pipeline.planner.cost.semantic),
        SHPC_KEY("planner.budget", c.pipeline.planner.budget),
        SHPC_KEY("planner.goal_bias", c.pipeline.planner.goal_bias),
        SHPC_KEY("planner.heading_weight", c.pipeline.planner.heading_weight),
        SHPC_KEY("planner.max_restarts", c.pipeline.planner.max_restarts),
        SHPC_KEY("planner.reconnect_radius_factor", c.pipeline.planner.reconnect_radius_factor),
        SHPC_KEY("planner.max_reconnect_attempts", c.pipeline.planner.max_reconnect_attempts),
        SHPC_KEY("planner.reconnect_tolerance", c.pipeline.planner.reconnect_tolerance),
        SHPC_KEY("candidates.radius", c.pipeline.candidates.radius),
        SHPC_KEY("candidates.count", c.pipeline.candidates.count),
        SHPC_KEY("candidates.budget", c.pipeline.candidates.budget),
        SHPC_KEY("camera.mount_height", c.pipeline.rig.mount_height),
        SHPC_KEY("camera.pitch_down", c.pipeline.rig.pitch_down),
        SHPC_KEY("camera.fov", c.pipeline.rig.fov),
        SHPC_KEY("camera.width", c.pipeline.rig.width),
        SHPC_KEY("camera.height", c.pipeline.rig.height),
        SHPC_KEY("weights.beta_d", c.pipeline.weights.beta_d),
        SHPC_KEY("weights.beta_gamma", c.pipeline.weights.beta_gamma),
        SHPC_KEY("weights.beta_vis", c.pipeline.weights.beta_vis),
        SHPC_KEY("weights.beta_q", c.pipeline.weights.beta_q),
        SHPC_KEY("weights.alpha_i", c.pipeline.weights.alpha_i),
        SHPC_KEY("weights.alpha_sigma", c.pipeline.weights.alpha_sigma),
    };
    t.push_back({"run.selector", [](const RunConfig& c) { return std::string(to_string(c.pipeline.selector)); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.pipeline.selector = nbv_selector_from_string(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("bad value for run.selector: ") + e.what());
                   }
                 }});
    t.push_back({"run.fusion", [](const RunConfig& c) { return std::string(to_string(c.pipeline.fusion)); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.pipeline.fusion = fusion_mode_from_string(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(std::string("bad value for run.fusion: ") + e.what());
                   }
                 }});
    t.push_back({"scene.start", [](const RunConfig& c) { return format_pose(c.start); },
                 [](RunConfig& c, const std::string& v) { c.start = parse_pose("scene.start", v); }});
    t.push_back({"scene.goal", [](const RunConfig& c) { return format_pose(c.goal); },
                 [](RunConfig& c, const std::string& v) { c.goal = parse_pose("scene.goal", v); }});
    add_noise(t, "noise", &PipelineConfig::noise);
    add_noise(t, "survey_noise", &PipelineConfig::survey_noise);
    std::stable_sort(t.begin(), t.end(), [](const Entry& a, const Entry& b) {
      return a.key.substr(0, a.key.find('.')) < b.key.substr(0, b.key.find('.'));
    });
    return t;
  }();
  return table;
}

#undef SHPC_KEY

const Entry& entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key: " + key);
}

}  // namespace

void RunConfig::validate() const {
  if (trials < 1) throw ConfigError("run.trials must be >= 1");
  try {
    if (scene_file.empty()) scene.validate();
    pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!scene_file.empty() && (!start || !goal)) throw ConfigError("scene.file needs scene.start and scene.goal");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  entry(key).set(config, value);
}

std::string config_value(const RunConfig& config, const std::string& key) { return entry(key).get(config); }

RunConfig parse_config(std::istream& in) {
  RunConfig config;
  std::string section;
  std::string line;
  std::map<std::string, int> seen;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = "line " + std::to_string(number) + ": ";
    const auto comment = line.find_first_of("#;");
    const std::string text = trim(comment == std::string::npos ? line : line.substr(0, comment));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (section.empty() || section.find('.') != std::string::npos) throw ConfigError(where + "bad section name");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string name = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (name.empty()) throw ConfigError(where + "empty key");
    std::string key = name;
    if (!section.empty()) {
      if (name.find('.') != std::string::npos) throw ConfigError(where + "dotted key inside a section: " + name);
      key = section + '.' + name;
    }
    if (seen.count(key)) throw ConfigError(where + "duplicate key " + key);
    seen[key] = number;
    try {
      apply_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

void write_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& e : entries()) {
    const auto dot = e.key.find('.');
    const std::string s = e.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << e.key.substr(dot + 1) << " = " << e.get(config) << '\n';
  }
}

SceneSetup resolve_scene(const RunConfig& config) {
  SceneSetup setup;
  if (!config.scene_file.empty()) {
    if (!config.start || !config.goal) throw ConfigError("scene.file needs scene.start and scene.goal");
    setup.scene = load_scene(config.scene_file);
  } else {
    try {
      setup = generate_scene(config.scene);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (config.start) setup.start = *config.start;
  if (config.goal) setup.goal = *config.goal;
  return setup;
}

PlyColoring ply_coloring_from_string(const std::string& s) {
  if (s == "class") return PlyColoring::Class;
  if (s == "safety") return PlyColoring::Safety;
  throw std::invalid_argument("unknown PLY colouring: " + s);
}

std::array<std::uint8_t, 3> class_color(int cls) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 8> palette{{{34, 139, 34},
                                                                       {160, 160, 160},
                                                                       {139, 90, 43},
                                                                       {30, 144, 255},
                                                                       {255, 215, 0},
                                                                       {220, 20, 60},
                                                                       {148, 0, 211},
                                                                       {0, 206, 209}}};
  return palette[static_cast<std::size_t>(cls) % palette.size()];
}

void write_ply(std::ostream& out, const SemanticPointCloud& cloud, PlyColoring coloring, const SafetyParams& safety,
               double region_eps_factor, int region_min_pts) {
  std::vector<std::array<std::uint8_t, 3>> colors(cloud.size());
  if (coloring == PlyColoring::Class) {
    for (std::size_t i = 0; i < cloud.size(); ++i) colors[i] = class_color(cloud.argmax_class(i));
  } else {
    const SafetyPartition part = partition_cloud(cloud, safety);
    const DbscanParams dp{region_eps_factor * cloud.resolution(), region_min_pts};
    const RegionSet regions = two_stage_cluster(cloud, part, RegionParams{dp, dp});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      switch (part.labels[i]) {
        case SafetyLabel::Safe: colors[i] = {255, 255, 255}; break;
        case SafetyLabel::Unsafe: colors[i] = {0, 0, 0}; break;
        case SafetyLabel::Unclear: {
          // Channels kept in [40, 215] so no region reads as white or black.
          const std::uint64_t h = mix64(static_cast<std::uint64_t>(regions.region_of(i)) + 1);
          for (int ch = 0; ch < 3; ++ch) colors[i][ch] = static_cast<std::uint8_t>(40 + ((h >> (8 * ch)) & 0xff) % 176);
          break;
        }
      }
    }
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.measurement_count(i) == 0) colors[i] = kUnmeasuredColor;
  }

  std::ostringstream s;
  s << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
    << "\nproperty float x\nproperty float y\nproperty float z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  s.precision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d p = cloud.position(i);
    s << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << int{colors[i][0]} << ' ' << int{colors[i][1]} << ' '
      << int{colors[i][2]} << '\n';
  }
  out << s.str();
}

void write_path_csv(std::ostream& out, const HypothesisGraph& graph, const CandidatePath& path) {
  std::ostringstream s;
  s.precision(17);
  s << "step,vertex,x,y,z,roll,pitch,yaw,cost\n";
  for (std::size_t k = 0; k < path.vertices.size(); ++k) {
    const int v = path.vertices[k];
    const Pose6D& pose = graph.nodes[static_cast<std::size_t>(v)].pose;
    const Eigen::Vector3d t = pose.translation();
    const auto a = attitude(pose);
    s << k << ',' << v << ',' << t.x() << ',' << t.y() << ',' << t.z() << ',' << a.roll << ',' << a.pitch << ','
      << a.yaw << ',' << graph.costs[static_cast<std::size_t>(v)] << '\n';
  }
  out << s.str();
}

}  // namespace shpc
