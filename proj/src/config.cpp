#include "isaccal/config.hpp"

#include <cstdio>
#include <fstream>

#include "isaccal/precoder.hpp"

namespace isaccal {

using nlohmann::json;

namespace {

json desk_tree() {
  return json::parse(R"({
    "waveform": {"S": 64, "delta_f_hz": 240000.0, "lambda_m": 0.005, "power_w": 0.1, "K": 16, "fov_deg": 90.0},
    "scenario": {"t_max": 3, "t_tilde_max": 6, "rcs_mean_m2": 1.0, "snr_s_db": -3.0, "snr_c_db": 14.4,
                 "range_min_m": 10.0, "range_max_m": 43.75, "ue_range_min_m": 10.0, "ue_range_max_m": 200.0,
                 "cp_fraction": 0.25, "sector_center_max_deg": 60.0, "sector_width_min_deg": 10.0,
                 "sector_width_max_deg": 20.0, "scatterer_min_distance_m": 1.0},
    "constellation": "qpsk",
    "precoder": {"grid_step_deg": 1.0, "sigma_over_lambda": 5.0},
    "sensing": {"n_theta": 181, "n_tau_per_subcarrier": 2, "max_iter_slack": 3},
    "loss": {"sensing_kind": "omp_residual", "omp_iters": 1, "eta_mode": "tied", "eta_value": 1.0},
    "train": {"batch": 128, "iterations": 800, "lr_gains": 0.01, "lr_positions": 0.0001,
              "scheduler_factor": 0.5, "scheduler_patience": 500, "scheduler_cooldown": 500,
              "scheduler_threshold": 0.0001, "mode": "unsupervised", "train_tx": true, "train_rx": true,
              "tx_known": false, "threads": 1},
    "eval": {"test_samples": 10000, "noise_samples": 1000, "target_pfa": 0.01, "omega_r": 0.5,
             "gospa_mu": 2.0, "gospa_order": 2.0}
  })");
}

json paper_full_tree() {
  json t = desk_tree();
  t["waveform"]["S"] = 256;
  t["waveform"]["K"] = 64;
  t["scenario"]["t_max"] = 5;
  t["train"]["batch"] = 4000;
  t["train"]["iterations"] = 5000;
  t["eval"]["test_samples"] = 1000000;
  return t;
}

const json& at(const json& tree, const std::string& section, const std::string& key) {
  const std::string name = section.empty() ? key : section + "." + key;
  const json* node = &tree;
  if (!section.empty()) {
    if (!tree.contains(section) || !tree[section].is_object())
      fail(ErrorCode::config, "missing config key: " + name);
    node = &tree[section];
  }
  if (!node->contains(key)) fail(ErrorCode::config, "missing config key: " + name);
  return (*node)[key];
}

template <typename T>
T get(const json& tree, const std::string& section, const std::string& key) {
  const json& v = at(tree, section, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::config, "config key " + section + "." + key + " has the wrong type");
  }
}

} // namespace

std::vector<std::string> preset_names() { return {"desk", "paper_full"}; }

json preset_tree(const std::string& name) {
  if (name == "desk") return desk_tree();
  if (name == "paper_full") return paper_full_tree();
  fail(ErrorCode::config, "unknown preset '" + name + "' (expected desk or paper_full)");
}

Config config_from_tree(const json& tree) {
  Config c;
  c.tree = tree;

  auto& w = c.waveform;
  w.num_subcarriers = get<int>(tree, "waveform", "S");
  w.subcarrier_spacing = get<double>(tree, "waveform", "delta_f_hz");
  w.wavelength = get<double>(tree, "waveform", "lambda_m");
  w.tx_power = get<double>(tree, "waveform", "power_w");
  w.num_antennas = get<int>(tree, "waveform", "K");
  w.field_of_view = deg2rad(get<double>(tree, "waveform", "fov_deg"));

  auto& s = c.scenario;
  s.t_max = get<int>(tree, "scenario", "t_max");
  s.t_tilde_max = get<int>(tree, "scenario", "t_tilde_max");
  s.rcs_mean = get<double>(tree, "scenario", "rcs_mean_m2");
  s.snr_s_db = get<double>(tree, "scenario", "snr_s_db");
  s.snr_c_db = get<double>(tree, "scenario", "snr_c_db");
  s.range_min = get<double>(tree, "scenario", "range_min_m");
  s.range_max = get<double>(tree, "scenario", "range_max_m");
  s.ue_range_min = get<double>(tree, "scenario", "ue_range_min_m");
  s.ue_range_max = get<double>(tree, "scenario", "ue_range_max_m");
  s.cp_fraction = get<double>(tree, "scenario", "cp_fraction");
  s.sector_center_max = deg2rad(get<double>(tree, "scenario", "sector_center_max_deg"));
  s.sector_width_min = deg2rad(get<double>(tree, "scenario", "sector_width_min_deg"));
  s.sector_width_max = deg2rad(get<double>(tree, "scenario", "sector_width_max_deg"));
  s.scatterer_min_distance = get<double>(tree, "scenario", "scatterer_min_distance_m");

  c.constellation = parse_constellation(get<std::string>(tree, "", "constellation"));

  c.grid_step_deg = get<double>(tree, "precoder", "grid_step_deg");
  c.train.sigma_over_lambda = get<double>(tree, "precoder", "sigma_over_lambda");

  c.n_theta = get<int>(tree, "sensing", "n_theta");
  c.n_tau_per_subcarrier = get<int>(tree, "sensing", "n_tau_per_subcarrier");
  c.eval.max_iter_slack = get<int>(tree, "sensing", "max_iter_slack");

  c.train.loss_kind = parse_sensing_loss(get<std::string>(tree, "loss", "sensing_kind"));
  c.train.omp_iters = get<int>(tree, "loss", "omp_iters");
  c.train.eta_mode = parse_eta_mode(get<std::string>(tree, "loss", "eta_mode"));
  c.train.eta_value = get<double>(tree, "loss", "eta_value");

  auto& t = c.train;
  t.batch = get<int>(tree, "train", "batch");
  t.iterations = get<int>(tree, "train", "iterations");
  t.lr_gains = get<double>(tree, "train", "lr_gains");
  t.lr_positions = get<double>(tree, "train", "lr_positions");
  t.scheduler_factor = get<double>(tree, "train", "scheduler_factor");
  t.scheduler_patience = get<int>(tree, "train", "scheduler_patience");
  t.scheduler_cooldown = get<int>(tree, "train", "scheduler_cooldown");
  t.scheduler_threshold = get<double>(tree, "train", "scheduler_threshold");
  t.mode = parse_train_mode(get<std::string>(tree, "train", "mode"));
  t.train_tx = get<bool>(tree, "train", "train_tx");
  t.train_rx = get<bool>(tree, "train", "train_rx");
  t.tx_known = get<bool>(tree, "train", "tx_known");
  t.threads = get<int>(tree, "train", "threads");

  auto& e = c.eval;
  e.test_samples = get<int>(tree, "eval", "test_samples");
  e.noise_samples = get<int>(tree, "eval", "noise_samples");
  e.target_pfa = get<double>(tree, "eval", "target_pfa");
  e.omega_r = get<double>(tree, "eval", "omega_r");
  e.gospa_mu = get<double>(tree, "eval", "gospa_mu");
  e.gospa_order = get<double>(tree, "eval", "gospa_order");

  w.noise_psd = derive_noise_psd(s, w, s.snr_s_db, LinkMode::sensing);
  w.validate();
  s.validate();
  t.validate();
  if (c.grid_step_deg <= 0.0) fail(ErrorCode::config, "precoder.grid_step_deg must be > 0");
  if (c.n_theta < 2) fail(ErrorCode::config, "sensing.n_theta must be >= 2");
  if (c.n_tau_per_subcarrier < 1) fail(ErrorCode::config, "sensing.n_tau_per_subcarrier must be >= 1");
  if (e.max_iter_slack < 0) fail(ErrorCode::config, "sensing.max_iter_slack must be >= 0");
  if (e.test_samples < 1) fail(ErrorCode::config, "eval.test_samples must be >= 1");
  if (e.omega_r < 0.0 || e.omega_r > 1.0) fail(ErrorCode::config, "eval.omega_r must be in [0, 1]");
  if (!(e.target_pfa > 0.0 && e.target_pfa <= 1.0)) fail(ErrorCode::config, "eval.target_pfa must be in (0, 1]");
  c.gospa().validate();
  return c;
}

Environment Config::environment() const { return environment_at_snr(scenario.snr_s_db); }

Environment Config::environment_at_snr(double snr_s_db) const {
  Environment env;
  env.waveform = waveform;
  env.scenario = scenario;
  env.scenario.snr_s_db = snr_s_db;
  env.constellation = constellation;
  env.noise_psd_sensing = derive_noise_psd(scenario, waveform, snr_s_db, LinkMode::sensing);
  env.noise_psd_comm = derive_noise_psd(scenario, waveform, scenario.snr_c_db, LinkMode::comm);
  env.waveform.noise_psd = env.noise_psd_sensing;
  env.precoder_grid = make_angle_grid(waveform.field_of_view, deg2rad(grid_step_deg));
  env.angle_grid.resize(n_theta);
  for (int i = 0; i < n_theta; ++i)
    env.angle_grid[i] = -waveform.field_of_view + 2.0 * waveform.field_of_view * i / (n_theta - 1);
  env.n_tau = n_tau_per_subcarrier * waveform.num_subcarriers;
  return env;
}

GospaConfig Config::gospa() const { return {scenario.range_max - scenario.range_min, eval.gospa_mu, eval.gospa_order}; }

std::string Config::hash() const {
  const std::string text = tree.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Config load_preset(const std::string& name) { return config_from_tree(preset_tree(name)); }

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open config file '" + path + "'");
  json file;
  try {
    file = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, "config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!file.is_object()) fail(ErrorCode::config, "config file '" + path + "' must hold a JSON object");
  if (file.contains("extends")) {
    json base = preset_tree(file["extends"].get<std::string>());
    file.erase("extends");
    base.merge_patch(file);
    return config_from_tree(base);
  }
  return config_from_tree(file);
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorCode::config, "override '" + assignment + "' must look like section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorCode::config, "override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      if (!node->contains(part)) fail(ErrorCode::config, "override names unknown config key: " + path);
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object())
      fail(ErrorCode::config, "override names unknown config key: " + path);
    node = &(*node)[part];
    start = dot + 1;
  }
}

} // namespace isaccal
