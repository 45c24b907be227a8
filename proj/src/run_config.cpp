#include "reachlab/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

extern char** environ;

namespace reachlab {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.size() - start : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

std::int64_t to_int(const std::string& s) {
  std::string digits;
  for (char c : s)
    if (c != '_' && c != '\'') digits.push_back(c);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty())
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  const auto v = lower(s);
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw std::invalid_argument("expected a boolean (true/false/on/off), got '" + s + "'");
}

// "lo:hi" or a single fixed value.
std::pair<double, double> to_interval(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() == 1) {
    const double v = to_double(parts[0]);
    return {v, v};
  }
  if (parts.size() != 2) throw std::invalid_argument("expected 'lo:hi' or a value, got '" + s + "'");
  const double lo = to_double(parts[0]), hi = to_double(parts[1]);
  if (hi < lo) throw std::invalid_argument("interval '" + s + "' is reversed");
  return {lo, hi};
}

JointVector to_joints(const std::string& s) {
  const auto parts = split(s, ',');
  JointVector q;
  if (parts.size() == 1) {
    q.deg.fill(to_double(parts[0]));
    return q;
  }
  if (parts.size() != kNumJoints) throw std::invalid_argument("expected 1 or 6 comma-separated values");
  for (std::size_t i = 0; i < kNumJoints; ++i) q[i] = to_double(parts[i]);
  return q;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

std::string fmt_interval(double lo, double hi) {
  return lo == hi ? fmt(lo) : fmt(lo) + ":" + fmt(hi);
}

std::string fmt_joints(const JointVector& q) {
  std::string out;
  for (std::size_t i = 0; i < kNumJoints; ++i) out += (i ? "," : "") + fmt(q[i]);
  return out;
}

void set_value(RunConfig& c, const std::string& section, const std::string& key,
               const std::string& value) {
  auto unknown = [&] { throw std::invalid_argument("unknown key '" + key + "' in [" + section + "]"); };
  if (section == "run") {
    if (key == "model_id") c.model_id = value;
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(value));
    else unknown();
  } else if (section == "arm_kinematics") {
    auto& g = c.env.geometry;
    if (key == "base_height") g.base_height = to_double(value);
    else if (key == "upper_arm") g.upper_arm = to_double(value);
    else if (key == "elbow_offset") g.elbow_offset = to_double(value);
    else if (key == "forearm") g.forearm = to_double(value);
    else if (key == "wrist_to_flange") g.wrist_to_flange = to_double(value);
    else unknown();
  } else if (section == "scene_renderer") {
    auto& r = c.env.render;
    if (key == "vertical_fov_deg") r.vertical_fov_deg = to_double(value);
    else if (key == "anchor_z") r.anchor.z() = to_double(value);
    else if (key == "shadow") c.env.shadow_enabled = to_bool(value);
    else if (key == "shadow_factor") r.shadow_factor = to_double(value);
    else if (key == "camera_radius") c.env.camera_radius = to_double(value);
    else unknown();
  } else if (section == "reach_env") {
    auto& m = c.env.mdp;
    if (key == "variant") m.variant = parse_variant(value);
    else if (key == "mpi") m.mpi = to_joints(value);
    else if (key == "success_distance") m.success_distance = to_double(value);
    else if (key == "rewarding_distance") m.rewarding_distance = to_double(value);
    else if (key == "max_steps") m.max_steps = static_cast<int>(to_int(value));
    else if (key == "azimuth") std::tie(c.env.dr.azimuth_lo, c.env.dr.azimuth_hi) = to_interval(value);
    else if (key == "elevation") std::tie(c.env.dr.elevation_lo, c.env.dr.elevation_hi) = to_interval(value);
    else if (key == "target_x") std::tie(c.env.targets.x_lo, c.env.targets.x_hi) = to_interval(value);
    else if (key == "target_y") std::tie(c.env.targets.y_lo, c.env.targets.y_hi) = to_interval(value);
    else unknown();
  } else if (section == "a3c_trainer") {
    auto& t = c.train;
    if (key == "total_steps") t.total_steps = to_int(value);
    else if (key == "gamma") t.gamma = to_double(value);
    else if (key == "n_step") t.n_step = static_cast<int>(to_int(value));
    else if (key == "workers") t.workers = static_cast<int>(to_int(value));
    else if (key == "learning_rate") t.learning_rate = to_double(value);
    else if (key == "entropy_weight") t.entropy_weight = to_double(value);
    else if (key == "value_weight") t.value_weight = to_double(value);
    else if (key == "grad_clip_norm") t.grad_clip_norm = to_double(value);
    else if (key == "eval_interval") t.eval_interval = to_int(value);
    else if (key == "eval_episodes") t.eval_episodes = static_cast<int>(to_int(value));
    else if (key == "eval_greedy") t.eval_greedy = to_bool(value);
    else if (key == "eval_camera") {
      if (lower(value) == "training") {
        t.eval_dr.reset();
      } else {
        const auto parts = split(value, ',');
        if (parts.size() != 2) throw std::invalid_argument("eval_camera expects 'training' or 'az,el' intervals");
        DrSpec dr;
        std::tie(dr.azimuth_lo, dr.azimuth_hi) = to_interval(parts[0]);
        std::tie(dr.elevation_lo, dr.elevation_hi) = to_interval(parts[1]);
        t.eval_dr = dr;
      }
    } else unknown();
  } else if (section == "robustness_bench") {
    if (key == "grid") parse_grid_flag(value, c.grid);
    else if (key == "episodes_per_cell") c.grid.episodes_per_cell = static_cast<int>(to_int(value));
    else if (key == "success_tolerance") c.grid.success_tolerance = to_double(value);
    else if (key == "threads") c.sweep_threads = static_cast<int>(to_int(value));
    else if (key == "greedy") c.sweep_greedy = to_bool(value);
    else unknown();
  } else {
    throw std::invalid_argument("unknown section [" + section + "]");
  }
}

void check(const RunConfig& c, const std::string& source) {
  try {
    c.train.validate();
    c.grid.cell_count();
    if (c.grid.episodes_per_cell < 1) throw std::invalid_argument("episodes_per_cell must be >= 1");
    if (!(c.env.camera_radius > 0.0)) throw std::invalid_argument("camera_radius must be positive");
    if (!(c.env.mdp.success_distance > 0.0)) throw std::invalid_argument("success_distance must be positive");
    for (std::size_t i = 0; i < kNumJoints; ++i)
      if (!(c.env.mdp.mpi[i] > 0.0)) throw std::invalid_argument("mpi entries must be positive");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::string source, int line, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message
                                  : source + ": " + message),
      line_(line) {}

RunConfig RunConfig::baseline() {
  RunConfig c;
  c.train.seed = c.seed;
  return c;
}

RunConfig RunConfig::randomized() {
  RunConfig c = baseline();
  c.model_id = "dr";
  c.output_dir = "runs/dr";
  c.env.dr = DrSpec::randomized();
  return c;
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig c = RunConfig::baseline();
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto hash = raw.find_first_of("#;");
    std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(source, lineno, "unterminated section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, lineno, "expected 'key = value'");
    if (section.empty()) throw ConfigError(source, lineno, "key outside of any [section]");
    try {
      set_value(c, section, lower(trim(line.substr(0, eq))), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(source, lineno, e.what());
    }
  }
  c.train.seed = c.seed;
  check(c, source);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

void apply_override(RunConfig& config, std::string_view section, std::string_view key,
                    std::string_view value, const std::string& source) {
  try {
    set_value(config, lower(std::string(section)), lower(std::string(key)), trim(value));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  config.train.seed = config.seed;
}

int apply_env_overrides(RunConfig& config, std::string_view prefix) {
  int applied = 0;
  for (char** env = environ; env && *env; ++env) {
    const std::string_view entry(*env);
    if (!entry.starts_with(prefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const std::string_view name = entry.substr(prefix.size(), eq - prefix.size());
    const auto sep = name.find("__");
    if (sep == std::string_view::npos) continue;
    apply_override(config, name.substr(0, sep), name.substr(sep + 2), entry.substr(eq + 1),
                   std::string(entry.substr(0, eq)));
    ++applied;
  }
  return applied;
}

void parse_grid_flag(std::string_view text, GridSpec& grid) {
  const auto axes = split(text, ',');
  if (axes.size() != 2) throw std::invalid_argument("grid expects 'az_min:az_max:step,el_min:el_max:step'");
  auto axis = [](const std::string& s, double& lo, double& hi, double& step) {
    const auto p = split(s, ':');
    if (p.size() != 3) throw std::invalid_argument("grid axis '" + s + "' must be min:max:step");
    lo = to_double(p[0]);
    hi = to_double(p[1]);
    step = to_double(p[2]);
  };
  GridSpec g = grid;
  axis(axes[0], g.azimuth_min, g.azimuth_max, g.azimuth_step);
  axis(axes[1], g.elevation_min, g.elevation_max, g.elevation_step);
  g.cell_count();
  grid = g;
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  const auto& g = c.env.geometry;
  const auto& m = c.env.mdp;
  const auto& t = c.train;
  o << "[run]\n"
    << "model_id = " << c.model_id << "\n"
    << "output_dir = " << c.output_dir.string() << "\n"
    << "seed = " << c.seed << "\n\n";
  o << "[arm_kinematics]\n"
    << "base_height = " << fmt(g.base_height) << "\n"
    << "upper_arm = " << fmt(g.upper_arm) << "\n"
    << "elbow_offset = " << fmt(g.elbow_offset) << "\n"
    << "forearm = " << fmt(g.forearm) << "\n"
    << "wrist_to_flange = " << fmt(g.wrist_to_flange) << "\n\n";
  o << "[scene_renderer]\n"
    << "vertical_fov_deg = " << fmt(c.env.render.vertical_fov_deg) << "\n"
    << "anchor_z = " << fmt(c.env.render.anchor.z()) << "\n"
    << "shadow = " << (c.env.shadow_enabled ? "on" : "off") << "\n"
    << "shadow_factor = " << fmt(c.env.render.shadow_factor) << "\n"
    << "camera_radius = " << fmt(c.env.camera_radius) << "\n\n";
  o << "[reach_env]\n"
    << "variant = " << to_string(m.variant) << "\n"
    << "mpi = " << fmt_joints(m.mpi) << "\n"
    << "success_distance = " << fmt(m.success_distance) << "\n"
    << "rewarding_distance = " << fmt(m.rewarding_distance) << "\n"
    << "max_steps = " << m.max_steps << "\n"
    << "azimuth = " << fmt_interval(c.env.dr.azimuth_lo, c.env.dr.azimuth_hi) << "\n"
    << "elevation = " << fmt_interval(c.env.dr.elevation_lo, c.env.dr.elevation_hi) << "\n"
    << "target_x = " << fmt_interval(c.env.targets.x_lo, c.env.targets.x_hi) << "\n"
    << "target_y = " << fmt_interval(c.env.targets.y_lo, c.env.targets.y_hi) << "\n\n";
  o << "[a3c_trainer]\n"
    << "total_steps = " << t.total_steps << "\n"
    << "gamma = " << fmt(t.gamma) << "\n"
    << "n_step = " << t.n_step << "\n"
    << "workers = " << t.workers << "\n"
    << "learning_rate = " << fmt(t.learning_rate) << "\n"
    << "entropy_weight = " << fmt(t.entropy_weight) << "\n"
    << "value_weight = " << fmt(t.value_weight) << "\n"
    << "grad_clip_norm = " << fmt(t.grad_clip_norm) << "\n"
    << "eval_interval = " << t.eval_interval << "\n"
    << "eval_episodes = " << t.eval_episodes << "\n"
    << "eval_greedy = " << (t.eval_greedy ? "true" : "false") << "\n"
    << "eval_camera = "
    << (t.eval_dr ? fmt_interval(t.eval_dr->azimuth_lo, t.eval_dr->azimuth_hi) + "," +
                        fmt_interval(t.eval_dr->elevation_lo, t.eval_dr->elevation_hi)
                  : std::string("training"))
    << "\n\n";
  o << "[robustness_bench]\n"
    << "grid = " << fmt(c.grid.azimuth_min) << ":" << fmt(c.grid.azimuth_max) << ":"
    << fmt(c.grid.azimuth_step) << "," << fmt(c.grid.elevation_min) << ":"
    << fmt(c.grid.elevation_max) << ":" << fmt(c.grid.elevation_step) << "\n"
    << "episodes_per_cell = " << c.grid.episodes_per_cell << "\n"
    << "success_tolerance = " << fmt(c.grid.success_tolerance) << "\n"
    << "threads = " << c.sweep_threads << "\n"
    << "greedy = " << (c.sweep_greedy ? "true" : "false") << "\n";
  return o.str();
}

}  // namespace reachlab
