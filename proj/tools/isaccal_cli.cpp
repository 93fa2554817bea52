#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "isaccal/isaccal.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCsvSchemas = R"(CSV outputs (header row always present; std is the sample standard deviation across impairment seeds):
  calibrate     <out>/imp_<seed>/trainlog.csv
                iter,loss,sens_loss,comm_loss,lr_mult_gain,lr_mult_pos,grad_norm_tx,grad_norm_rx
  roc           <out>/roc.csv
                method,impairment_seed,stat,target_pfa,delta,p_fa,p_md,gospa
                (with --delta-grid the fourth column is delta_grid)
  tradeoff      <out>/tradeoff.csv
                method,impairment_seed,stat,omega_r,delta,p_fa,p_md,gospa,ser
  snr-sweep     <out>/snr_sweep.csv
                method,impairment_seed,stat,snr_s_db,delta,p_fa,p_md,gospa
  precoder-dump <out>/precoder.csv
                impairment_seed,variant,angle_deg,response_db
  adm-dump      <out>/adm.csv         impairment_seed,variant,angle_deg,range_m,adm
                <out>/adm_points.csv  impairment_seed,variant,kind,index,angle_deg,range_m
                <out>/adm_residual.csv impairment_seed,variant,iteration,residual_norm
Rows with stat=value hold one impairment seed; stat=mean and stat=std rows aggregate over seeds
(impairment_seed is then empty).
Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 numerical failure.)";

struct CliFailure {
  int code;
  std::string message;
};

int exit_code(isaccal_status s) {
  switch (s) {
    case ISACCAL_OK: return 0;
    case ISACCAL_ERR_IO: return 1;
    case ISACCAL_ERR_CONFIG:
    case ISACCAL_ERR_INVALID_ARGUMENT: return 2;
    default: return 3;
  }
}

void check(isaccal_status s) {
  if (s != ISACCAL_OK) throw CliFailure{exit_code(s), isaccal_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw CliFailure{2, msg}; }

struct ConfigDeleter {
  void operator()(isaccal_config* c) const { isaccal_config_free(c); }
};
struct ModelDeleter {
  void operator()(isaccal_model* m) const { isaccal_model_free(m); }
};
struct EvalDeleter {
  void operator()(isaccal_sensing_eval* e) const { isaccal_sensing_eval_free(e); }
};
using ConfigPtr = std::unique_ptr<isaccal_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<isaccal_model, ModelDeleter>;
using EvalPtr = std::unique_ptr<isaccal_sensing_eval, EvalDeleter>;

struct Options {
  std::string config_path;
  std::string preset = "desk";
  std::vector<std::string> overrides;
  std::uint64_t seed = 7;
  std::uint64_t train_seed = 7;
  std::vector<std::uint64_t> impairment_seeds{1};
  std::string out = "out";
  std::string baseline;
  std::vector<std::string> checkpoints;
  int threads = 0;
  int samples = 0;
  double pfa = -1.0;
  std::vector<double> pfa_grid{1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1, 2e-1, 5e-1, 1.0};
  std::vector<double> delta_grid;
  std::vector<double> omega_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> snr_grid{-12.0, -9.0, -6.0, -3.0, 0.0, 3.0};
  std::vector<double> sensing_sector{-40.0, -20.0};
  std::vector<double> comm_sector{30.0, 40.0};
  double omega_r = 0.5;
  bool noiseless = false;
  std::string resume;
  int iterations = 0;
};

ConfigPtr load_config(const Options& o) {
  isaccal_config* raw = nullptr;
  if (!o.config_path.empty())
    check(isaccal_config_from_file(o.config_path.c_str(), &raw));
  else
    check(isaccal_config_from_preset(o.preset.c_str(), &raw));
  ConfigPtr cfg(raw);
  for (const auto& s : o.overrides) check(isaccal_config_override(cfg.get(), s.c_str()));
  if (o.threads > 0) {
    const std::string t = "train.threads=" + std::to_string(o.threads);
    check(isaccal_config_override(cfg.get(), t.c_str()));
  }
  return cfg;
}

json config_json(const isaccal_config* cfg) {
  size_t needed = 0;
  check(isaccal_config_json(cfg, nullptr, 0, &needed));
  std::string text(needed, '\0');
  check(isaccal_config_json(cfg, text.data(), text.size(), &needed));
  text.resize(needed - 1);
  return json::parse(text);
}

std::string config_hash(const isaccal_config* cfg) {
  char buf[17];
  check(isaccal_config_hash(cfg, buf));
  return buf;
}

double config_number(const isaccal_config* cfg, const char* key) {
  double v = 0.0;
  check(isaccal_config_get_number(cfg, key, &v));
  return v;
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw CliFailure{1, "cannot create output directory '" + p.string() + "': " + ec.message()};
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw CliFailure{1, "cannot write '" + p.string() + "'"};
  return f;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, const isaccal_config* cfg, const Options& o, int argc, char** argv)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["code_version"] = isaccal_version();
    doc_["config_hash"] = config_hash(cfg);
    doc_["config"] = config_json(cfg);
    doc_["seed"] = o.seed;
    doc_["impairment_seeds"] = o.impairment_seeds;
    doc_["argv"] = std::vector<std::string>(argv, argv + argc);
    if (!o.baseline.empty()) doc_["baseline"] = o.baseline;
    if (!o.checkpoints.empty()) doc_["checkpoints"] = o.checkpoints;
  }
  json& operator[](const char* key) { return doc_[key]; }
  void add_output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void write(const fs::path& dir) {
    doc_["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    auto f = open_out(dir / "manifest.json");
    f << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

struct TrainLogSink {
  std::ofstream* csv = nullptr;
  long infeasible = 0;
  int every = 0;
};

void log_row(const isaccal_log_row* r, int feasible, void* user) {
  auto* sink = static_cast<TrainLogSink*>(user);
  if (!feasible) ++sink->infeasible;
  char line[400];
  std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r->iter, r->loss, r->sens_loss,
                r->comm_loss, r->lr_mult_gain, r->lr_mult_pos, r->grad_norm_tx, r->grad_norm_rx);
  *sink->csv << line;
  if (sink->every > 0 && (r->iter + 1) % sink->every == 0)
    std::fprintf(stderr, "  iter %5d  loss %.6g\n", r->iter + 1, r->loss);
}

constexpr const char* kTrainLogHeader =
    "iter,loss,sens_loss,comm_loss,lr_mult_gain,lr_mult_pos,grad_norm_tx,grad_norm_rx\n";

bool is_model_based(const std::string& m) { return m == "matched" || m == "mismatched"; }

// A model to evaluate: one per impairment seed for a baseline, or one per checkpoint.
struct ModelEntry {
  std::string method;
  std::uint64_t impairment_seed = 0;
  ModelPtr model;
};

std::vector<ModelEntry> models_for(const Options& o, const isaccal_config* cfg) {
  std::vector<ModelEntry> out;
  if (!o.checkpoints.empty()) {
    for (const auto& path : o.checkpoints) {
      isaccal_model* raw = nullptr;
      check(isaccal_model_load(path.c_str(), &raw));
      ModelPtr m(raw);
      isaccal_model_info info{};
      check(isaccal_model_info_get(m.get(), &info));
      out.push_back({info.method, info.impairment_seed, std::move(m)});
    }
    return out;
  }
  const std::string method = o.baseline.empty() ? "matched" : o.baseline;
  for (auto s : o.impairment_seeds) {
    isaccal_model* raw = nullptr;
    if (is_model_based(method)) {
      check(isaccal_model_baseline(cfg, method.c_str(), s, &raw));
    } else {
      std::fprintf(stderr, "training %s for impairment seed %llu\n", method.c_str(),
                   static_cast<unsigned long long>(s));
      check(isaccal_model_train(cfg, method.c_str(), s, o.train_seed, nullptr, nullptr, &raw));
    }
    out.push_back({method, s, ModelPtr(raw)});
  }
  return out;
}

isaccal_eval_options eval_options(const Options& o, const isaccal_config* cfg) {
  isaccal_eval_options e{};
  check(isaccal_eval_options_init(cfg, &e));
  e.seed = o.seed;
  if (o.samples > 0) e.samples = o.samples;
  if (o.threads > 0) e.threads = o.threads;
  if (e.samples < 1000) usage_error("evaluation needs at least 1000 test samples (got " + std::to_string(e.samples) + ")");
  return e;
}

double target_pfa(const Options& o, const isaccal_config* cfg) {
  return o.pfa >= 0.0 ? o.pfa : config_number(cfg, "eval.target_pfa");
}

// Per-seed rows plus mean/std rows over seeds for each (method, grid point).
class Table {
 public:
  Table(std::string key_name, std::vector<std::string> columns)
      : key_name_(std::move(key_name)), columns_(std::move(columns)) {}

  void add(const std::string& method, std::uint64_t seed, double key, const std::vector<double>& values) {
    rows_.push_back({method, seed, key, values});
  }

  void write(std::ostream& os) const {
    os << "method,impairment_seed,stat," << key_name_;
    for (const auto& c : columns_) os << ',' << c;
    os << '\n';
    std::map<std::pair<std::string, double>, std::vector<const Row*>> groups;
    std::vector<std::pair<std::string, double>> order;
    for (const auto& r : rows_) {
      os << r.method << ',' << r.seed << ",value," << num(r.key);
      for (double v : r.values) os << ',' << num(v);
      os << '\n';
      auto& g = groups[{r.method, r.key}];
      if (g.empty()) order.push_back({r.method, r.key});
      g.push_back(&r);
    }
    for (const auto& k : order) {
      const auto& g = groups.at(k);
      const std::size_t n = g.size();
      std::vector<double> mean(columns_.size(), 0.0), sd(columns_.size(), 0.0);
      for (std::size_t c = 0; c < columns_.size(); ++c) {
        for (const Row* r : g) mean[c] += r->values[c];
        mean[c] /= static_cast<double>(n);
        for (const Row* r : g) sd[c] += (r->values[c] - mean[c]) * (r->values[c] - mean[c]);
        sd[c] = n > 1 ? std::sqrt(sd[c] / static_cast<double>(n - 1)) : 0.0;
      }
      for (int which = 0; which < 2; ++which) {
        os << k.first << ",," << (which == 0 ? "mean" : "std") << ',' << num(k.second);
        for (double v : which == 0 ? mean : sd) os << ',' << num(v);
        os << '\n';
      }
    }
  }

 private:
  struct Row {
    std::string method;
    std::uint64_t seed;
    double key;
    std::vector<double> values;
  };
  std::string key_name_;
  std::vector<std::string> columns_;
  std::vector<Row> rows_;
};

// ---- commands ----

int cmd_calibrate(const Options& o, int argc, char** argv) {
  ConfigPtr cfg = load_config(o);
  const fs::path out(o.out);
  ensure_dir(out);
  Manifest manifest("calibrate", cfg.get(), o, argc, argv);
  const int every = std::max(1, static_cast<int>(config_number(cfg.get(), "train.iterations")) / 10);
  long infeasible = 0;

  if (!o.resume.empty()) {
    isaccal_model* raw = nullptr;
    check(isaccal_model_load(o.resume.c_str(), &raw));
    ModelPtr m(raw);
    isaccal_model_info info{};
    check(isaccal_model_info_get(m.get(), &info));
    auto log = open_out(out / "trainlog.csv");
    log << kTrainLogHeader;
    TrainLogSink sink{&log, 0, every};
    check(isaccal_model_resume(m.get(), o.iterations, log_row, &sink));
    check(isaccal_model_save(m.get(), (out / "checkpoint.json").string().c_str()));
    manifest["resumed_from"] = o.resume;
    manifest["data_seed"] = info.data_seed;
    manifest.add_output(out / "checkpoint.json");
    manifest.add_output(out / "trainlog.csv");
    manifest.write(out);
    infeasible = sink.infeasible;
  } else {
    const std::string method = o.baseline.empty() ? "ul" : o.baseline;
    for (auto s : o.impairment_seeds) {
      const fs::path dir = out / ("imp_" + std::to_string(s));
      ensure_dir(dir);
      isaccal_model* raw = nullptr;
      auto log = open_out(dir / "trainlog.csv");
      log << kTrainLogHeader;
      if (is_model_based(method)) {
        check(isaccal_model_baseline(cfg.get(), method.c_str(), s, &raw));
      } else {
        if (s == o.seed) usage_error("impairment seed " + std::to_string(s) + " equals the data seed; pick another --seed");
        std::fprintf(stderr, "calibrating (%s) impairment seed %llu\n", method.c_str(),
                     static_cast<unsigned long long>(s));
        TrainLogSink sink{&log, 0, every};
        check(isaccal_model_train(cfg.get(), method.c_str(), s, o.seed, log_row, &sink, &raw));
        infeasible += sink.infeasible;
      }
      ModelPtr m(raw);
      check(isaccal_model_save(m.get(), (dir / "checkpoint.json").string().c_str()));
      manifest.add_output(dir / "checkpoint.json");
      manifest.add_output(dir / "trainlog.csv");
    }
    manifest["method"] = method;
    manifest["data_seed"] = o.seed;
    manifest["infeasible_iterations"] = infeasible;
    manifest.write(out);
  }
  if (infeasible > 0) {
    std::fprintf(stderr, "error: %ld iterations left infeasible parameters\n", infeasible);
    return 3;
  }
  return 0;
}

int cmd_roc(const Options& o, int argc, char** argv) {
  ConfigPtr cfg = load_config(o);
  const fs::path out(o.out);
  ensure_dir(out);
  Manifest manifest("roc", cfg.get(), o, argc, argv);
  const bool by_delta = !o.delta_grid.empty();
  Table table(by_delta ? "delta_grid" : "target_pfa", {"delta", "p_fa", "p_md", "gospa"});
  const isaccal_eval_options eo = eval_options(o, cfg.get());
  for (auto& entry : models_for(o, cfg.get())) {
    isaccal_sensing_eval* raw = nullptr;
    check(isaccal_sensing_evaluate(entry.model.get(), cfg.get(), &eo, &raw));
    EvalPtr eval(raw);
    for (double g : by_delta ? o.delta_grid : o.pfa_grid) {
      isaccal_operating_point op{};
      check(by_delta ? isaccal_sensing_at_delta(eval.get(), g, &op) : isaccal_sensing_at_pfa(eval.get(), g, &op));
      table.add(entry.method, entry.impairment_seed, g, {op.delta, op.p_fa, op.p_md, op.gospa});
    }
  }
  auto f = open_out(out / "roc.csv");
  table.write(f);
  manifest["samples"] = eo.samples;
  manifest.add_output(out / "roc.csv");
  manifest.write(out);
  return 0;
}

int cmd_tradeoff(const Options& o, int argc, char** argv) {
  ConfigPtr cfg = load_config(o);
  const fs::path out(o.out);
  ensure_dir(out);
  Manifest manifest("tradeoff", cfg.get(), o, argc, argv);
  const double pfa = target_pfa(o, cfg.get());
  Table table("omega_r", {"delta", "p_fa", "p_md", "gospa", "ser"});
  for (auto& entry : models_for(o, cfg.get())) {
    for (double w : o.omega_grid) {
      isaccal_eval_options eo = eval_options(o, cfg.get());
      eo.omega_r = w;
      isaccal_sensing_eval* raw = nullptr;
      check(isaccal_sensing_evaluate(entry.model.get(), cfg.get(), &eo, &raw));
      EvalPtr eval(raw);
      isaccal_operating_point op{};
      check(isaccal_sensing_at_pfa(eval.get(), pfa, &op));
      isaccal_ser ser{};
      check(isaccal_ser_evaluate(entry.model.get(), cfg.get(), &eo, &ser));
      table.add(entry.method, entry.impairment_seed, w, {op.delta, op.p_fa, op.p_md, op.gospa, ser.ser});
    }
  }
  auto f = open_out(out / "tradeoff.csv");
  table.write(f);
  manifest["target_pfa"] = pfa;
  manifest.add_output(out / "tradeoff.csv");
  manifest.write(out);
  return 0;
}

int cmd_snr_sweep(const Options& o, int argc, char** argv) {
  ConfigPtr cfg = load_config(o);
  const fs::path out(o.out);
  ensure_dir(out);
  Manifest manifest("snr-sweep", cfg.get(), o, argc, argv);
  const double pfa = target_pfa(o, cfg.get());
  Table table("snr_s_db", {"delta", "p_fa", "p_md", "gospa"});
  for (auto& entry : models_for(o, cfg.get())) {
    for (double snr : o.snr_grid) {
      isaccal_eval_options eo = eval_options(o, cfg.get());
      eo.snr_s_db = snr;
      isaccal_sensing_eval* raw = nullptr;
      check(isaccal_sensing_evaluate(entry.model.get(), cfg.get(), &eo, &raw));
      EvalPtr eval(raw);
      isaccal_operating_point op{};
      check(isaccal_sensing_at_pfa(eval.get(), pfa, &op));
      table.add(entry.method, entry.impairment_seed, snr, {op.delta, op.p_fa, op.p_md, op.gospa});
    }
  }
  auto f = open_out(out / "snr_sweep.csv");
  table.write(f);
  manifest["target_pfa"] = pfa;
  manifest.add_output(out / "snr_sweep.csv");
  manifest.write(out);
  return 0;
}

// matched, mismatched and learned variants for each impairment seed (or checkpoint).
struct Variants {
  std::uint64_t impairment_seed;
  std::vector<std::pair<std::string, ModelPtr>> models;
};

std::vector<Variants> variants_for(const Options& o, const isaccal_config* cfg) {
  std::vector<Variants> out;
  Options learned = o;
  if (o.checkpoints.empty() && (o.baseline.empty() || is_model_based(o.baseline))) learned.baseline = "ul";
  for (auto& entry : models_for(learned, cfg)) {
    Variants v{entry.impairment_seed, {}};
    for (const char* base : {"matched", "mismatched"}) {
      isaccal_model* raw = nullptr;
      check(isaccal_model_baseline(cfg, base, entry.impairment_seed, &raw));
      v.models.emplace_back(base, ModelPtr(raw));
    }
    v.models.emplace_back("learned", std::move(entry.model));
    out.push_back(std::move(v));
  }
  return out;
}

int cmd_precoder_dump(const Options& o, int argc, char** argv) {
  ConfigPtr cfg = load_config(o);
  const fs::path out(o.out);
  ensure_dir(out);
  Manifest manifest("precoder-dump", cfg.get(), o, argc, argv);
  auto f = open_out(out / "precoder.csv");
  f << "impairment_seed,variant,angle_deg,response_db\n";
  for (auto& v : variants_for(o, cfg.get())) {
    for (auto& [name, model] : v.models) {
      size_t n = 0;
      check(isaccal_precoder_response(model.get(), cfg.get(), o.sensing_sector[0], o.sensing_sector[1],
                                      o.comm_sector[0], o.comm_sector[1], o.omega_r, nullptr, nullptr, 0, &n));
      std::vector<double> angles(n), resp(n);
      check(isaccal_precoder_response(model.get(), cfg.get(), o.sensing_sector[0], o.sensing_sector[1],
                                      o.comm_sector[0], o.comm_sector[1], o.omega_r, angles.data(), resp.data(), n,
                                      &n));
      for (size_t i = 0; i < n; ++i)
        f << v.impairment_seed << ',' << name << ',' << num(angles[i]) << ',' << num(resp[i]) << '\n';
    }
  }
  manifest["sensing_sector_deg"] = o.sensing_sector;
  manifest["comm_sector_deg"] = o.comm_sector;
  manifest["omega_r"] = o.omega_r;
  manifest.add_output(out / "precoder.csv");
  manifest.write(out);
  return 0;
}

int cmd_adm_dump(const Options& o, int argc, char** argv) {
  ConfigPtr cfg = load_config(o);
  const fs::path out(o.out);
  ensure_dir(out);
  Manifest manifest("adm-dump", cfg.get(), o, argc, argv);
  auto fmap = open_out(out / "adm.csv");
  auto fpts = open_out(out / "adm_points.csv");
  auto fres = open_out(out / "adm_residual.csv");
  fmap << "impairment_seed,variant,angle_deg,range_m,adm\n";
  fpts << "impairment_seed,variant,kind,index,angle_deg,range_m\n";
  fres << "impairment_seed,variant,iteration,residual_norm\n";
  for (auto& v : variants_for(o, cfg.get())) {
    for (auto& [name, model] : v.models) {
      isaccal_adm_info info{};
      check(isaccal_adm_dump(model.get(), cfg.get(), o.seed, o.noiseless, &info, nullptr, nullptr, nullptr, nullptr,
                             nullptr, nullptr));
      std::vector<double> angles(info.num_angles), ranges(info.num_delays),
          map(static_cast<size_t>(info.num_angles) * info.num_delays), targets(2 * info.num_targets),
          dets(2 * info.num_detections), res(info.num_detections + 1);
      check(isaccal_adm_dump(model.get(), cfg.get(), o.seed, o.noiseless, &info, angles.data(), ranges.data(),
                             map.data(), targets.data(), dets.data(), res.data()));
      const std::string prefix = std::to_string(v.impairment_seed) + "," + name + ",";
      for (int j = 0; j < info.num_delays; ++j)
        for (int i = 0; i < info.num_angles; ++i)
          fmap << prefix << num(angles[i]) << ',' << num(ranges[j]) << ','
               << num(map[static_cast<size_t>(j) * info.num_angles + i]) << '\n';
      for (int t = 0; t < info.num_targets; ++t)
        fpts << prefix << "target," << t << ',' << num(targets[2 * t]) << ',' << num(targets[2 * t + 1]) << '\n';
      for (int t = 0; t < info.num_detections; ++t)
        fpts << prefix << "detection," << t << ',' << num(dets[2 * t]) << ',' << num(dets[2 * t + 1]) << '\n';
      for (int t = 0; t <= info.num_detections; ++t) fres << prefix << t << ',' << num(res[t]) << '\n';
    }
  }
  manifest["noiseless"] = o.noiseless;
  for (const char* name : {"adm.csv", "adm_points.csv", "adm_residual.csv"}) manifest.add_output(out / name);
  manifest.write(out);
  return 0;
}

int cmd_selftest(const Options& o) {
  size_t needed = 0;
  int failures = 0;
  check(isaccal_selftest(o.seed, nullptr, 0, &needed, &failures));
  std::string report(needed, '\0');
  check(isaccal_selftest(o.seed, report.data(), report.size(), &needed, &failures));
  std::fputs(report.c_str(), stdout);
  std::printf("%d check(s) failed\n", failures);
  return failures == 0 ? 0 : 3;
}

std::vector<std::uint64_t> parse_seed_list(const std::vector<std::string>& items) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (part.empty()) continue;
      const auto dash = part.find('-', 1);
      try {
        if (dash != std::string::npos) {
          const auto a = std::stoull(part.substr(0, dash)), b = std::stoull(part.substr(dash + 1));
          if (b < a) usage_error("bad seed range '" + part + "'");
          for (auto s = a; s <= b; ++s) seeds.push_back(s);
        } else {
          seeds.push_back(std::stoull(part));
        }
      } catch (const std::logic_error&) {
        usage_error("bad seed '" + part + "'");
      }
    }
  }
  if (seeds.empty()) usage_error("--impairment-seeds needs at least one seed");
  return seeds;
}

} // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Keep per-sample work buffers on the heap instead of fresh mmap pages.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 128 << 20);
#endif
  CLI::App app{"Unsupervised calibration of impaired ISAC antenna arrays"};
  app.footer(kCsvSchemas);
  app.require_subcommand(1);
  app.set_version_flag("--version", isaccal_version());

  Options o;
  std::vector<std::string> seed_items;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file (may \"extends\" a preset)")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "Built-in preset when no --config is given")
        ->check(CLI::IsMember({"desk", "paper_full"}));
    sub->add_option("--set", o.overrides, "Override a config entry, section.key=value (repeatable)");
    sub->add_option("--seed", o.seed, "Data seed (training data for calibrate, test data otherwise)");
    sub->add_option("--impairment-seeds", seed_items, "Impairment draws, e.g. 1,2,5-9");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto add_eval = [&](CLI::App* sub, bool learned_default) {
    sub->add_option("--baseline", o.baseline,
                    learned_default ? "Learned variant to train when no checkpoint is given"
                                    : "Model to evaluate when no checkpoint is given (default matched)")
        ->check(CLI::IsMember({"matched", "mismatched", "ul", "slcb", "slcb-perturbed"}));
    sub->add_option("--checkpoint", o.checkpoints, "Calibrated checkpoint(s); overrides --baseline/--impairment-seeds");
    sub->add_option("--train-seed", o.train_seed, "Training data seed for learned baselines trained on the fly");
    sub->add_option("--samples", o.samples, "Test samples (default eval.test_samples, at least 1000)");
  };

  auto* calibrate = app.add_subcommand("calibrate", "Train array parameters; writes checkpoint, trainlog.csv, manifest");
  add_common(calibrate);
  calibrate->add_option("--baseline", o.baseline, "Training method (default ul)")
      ->check(CLI::IsMember({"matched", "mismatched", "ul", "slcb", "slcb-perturbed"}));
  calibrate->add_option("--resume", o.resume, "Continue training from a checkpoint")->check(CLI::ExistingFile);
  calibrate->add_option("--iterations", o.iterations, "Total iterations when resuming (default: the checkpoint's)")
      ->check(CLI::PositiveNumber);

  auto* roc = app.add_subcommand("roc", "Misdetection vs false alarm; writes roc.csv");
  add_common(roc);
  add_eval(roc, false);
  roc->add_option("--pfa-grid", o.pfa_grid, "Target false-alarm rates")->delimiter(',');
  roc->add_option("--delta-grid", o.delta_grid, "Fixed OMP thresholds instead of target rates")->delimiter(',');

  auto* tradeoff = app.add_subcommand("tradeoff", "GOSPA and SER over the power split; writes tradeoff.csv");
  add_common(tradeoff);
  add_eval(tradeoff, false);
  tradeoff->add_option("--omega-grid", o.omega_grid, "Power splits omega_r")->delimiter(',');
  tradeoff->add_option("--pfa", o.pfa, "Target false-alarm rate (default eval.target_pfa)");

  auto* snr = app.add_subcommand("snr-sweep", "Misdetection over the sensing SNR; writes snr_sweep.csv");
  add_common(snr);
  add_eval(snr, false);
  snr->add_option("--snr-grid", o.snr_grid, "Maximum achievable sensing SNRs in dB")->delimiter(',');
  snr->add_option("--pfa", o.pfa, "Target false-alarm rate (default eval.target_pfa)");

  auto* precoder = app.add_subcommand("precoder-dump", "Precoder response of matched, mismatched and learned arrays");
  add_common(precoder);
  add_eval(precoder, true);
  precoder->add_option("--sensing-sector", o.sensing_sector, "Sensing sector min,max in degrees")
      ->delimiter(',')
      ->expected(2);
  precoder->add_option("--comm-sector", o.comm_sector, "Communication sector min,max in degrees")
      ->delimiter(',')
      ->expected(2);
  precoder->add_option("--omega-r", o.omega_r, "Power split")->check(CLI::Range(0.0, 1.0));

  auto* admd = app.add_subcommand("adm-dump", "Angle-delay maps of a fixed multi-target scene");
  add_common(admd);
  add_eval(admd, true);
  admd->add_flag("--noiseless", o.noiseless, "Drop the receiver noise");

  auto* selftest = app.add_subcommand("selftest", "Finite-difference gradient checks and metric oracles");
  selftest->add_option("--seed", o.seed, "Seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!seed_items.empty()) o.impairment_seeds = parse_seed_list(seed_items);
    if (*calibrate) return cmd_calibrate(o, argc, argv);
    if (*roc) return cmd_roc(o, argc, argv);
    if (*tradeoff) return cmd_tradeoff(o, argc, argv);
    if (*snr) return cmd_snr_sweep(o, argc, argv);
    if (*precoder) return cmd_precoder_dump(o, argc, argv);
    if (*admd) return cmd_adm_dump(o, argc, argv);
    if (*selftest) return cmd_selftest(o);
  } catch (const CliFailure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
