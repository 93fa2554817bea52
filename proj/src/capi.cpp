#include "isaccal/isaccal.h"

#include <cmath>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "isaccal/checkpoint.hpp"
#include "isaccal/config.hpp"
#include "isaccal/experiments.hpp"
#include "isaccal/selftest.hpp"

using namespace isaccal;

struct isaccal_config {
  Config cfg;
};

struct isaccal_model {
  Config cfg;
  Checkpoint ckpt;
  ArrayPair truth;
};

struct isaccal_sensing_eval {
  SensingEval eval;
  GospaConfig gospa;
};

namespace {

thread_local std::string g_last_error;

isaccal_status set_error(isaccal_status code, const std::string& what) {
  g_last_error = what;
  return code;
}

template <typename Fn>
isaccal_status guarded(Fn&& fn) {
  try {
    fn();
    return ISACCAL_OK;
  } catch (const Error& e) {
    return set_error(static_cast<isaccal_status>(static_cast<int>(e.code())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(ISACCAL_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(ISACCAL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(ISACCAL_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(ISACCAL_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

std::string method_mode(const std::string& method) {
  if (method == "ul") return "unsupervised";
  if (method == "slcb") return "slcb";
  if (method == "slcb-perturbed") return "slcb_perturbed";
  fail(ErrorCode::config, "unknown training method '" + method + "' (expected ul, slcb or slcb-perturbed)");
}

ArrayPair truth_for(const Config& cfg, std::uint64_t impairment_seed) {
  return draw_array_pair(cfg.waveform.num_antennas, cfg.waveform.wavelength, impairment_seed);
}

TrainObserver observer_for(isaccal_log_fn log, void* user) {
  if (log == nullptr) return {};
  return [log, user](const TrainState& s, const TrainLogRow& r) {
    const ParamsPair p = s.params.unpack();
    const isaccal_log_row row{r.iter,          r.loss,         r.sens_loss,    r.comm_loss,
                              r.lr_mult_gain,  r.lr_mult_pos,  r.grad_norm_tx, r.grad_norm_rx};
    log(&row, p.tx.feasible() && p.rx.feasible() ? 1 : 0, user);
  };
}

Environment eval_environment(const Config& cfg, const isaccal_eval_options& o) {
  return std::isnan(o.snr_s_db) ? cfg.environment() : cfg.environment_at_snr(o.snr_s_db);
}

EvalOptions eval_options(const Config& cfg, const isaccal_eval_options& o) {
  EvalOptions e;
  e.samples = o.samples;
  e.seed = o.seed;
  if (!std::isnan(o.omega_r)) {
    if (o.omega_r < 0.0 || o.omega_r > 1.0) fail(ErrorCode::invalid_argument, "omega_r must be in [0, 1]");
    e.omega_r = o.omega_r;
  }
  e.max_iter = o.max_iter > 0 ? o.max_iter : cfg.eval_max_iter();
  e.threads = o.threads > 0 ? o.threads : 1;
  if (e.samples < 1) fail(ErrorCode::invalid_argument, "evaluation needs at least one sample");
  return e;
}

void check_compatible(const isaccal_model* m, const Config& cfg) {
  if (cfg.waveform.num_antennas != m->cfg.waveform.num_antennas)
    fail(ErrorCode::config, "evaluation config has K = " + std::to_string(cfg.waveform.num_antennas) +
                                " but the model has K = " + std::to_string(m->cfg.waveform.num_antennas));
}

void write_text(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
}

} // namespace

extern "C" {

const char* isaccal_version(void) { return ISACCAL_VERSION; }

const char* isaccal_last_error(void) { return g_last_error.c_str(); }

isaccal_status isaccal_config_from_preset(const char* name, isaccal_config** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = new isaccal_config{load_preset(name)};
  });
}

isaccal_status isaccal_config_from_file(const char* path, isaccal_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new isaccal_config{load_config(path)};
  });
}

isaccal_status isaccal_config_copy(const isaccal_config* cfg, isaccal_config** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = new isaccal_config{cfg->cfg};
  });
}

isaccal_status isaccal_config_override(isaccal_config* cfg, const char* assignment) {
  return guarded([&] {
    require(cfg, "cfg");
    require(assignment, "assignment");
    nlohmann::json tree = cfg->cfg.tree;
    apply_override(tree, assignment);
    cfg->cfg = config_from_tree(tree);
  });
}

isaccal_status isaccal_config_get_number(const isaccal_config* cfg, const char* key, double* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    const nlohmann::json* node = &cfg->cfg.tree;
    std::stringstream path(key);
    std::string part;
    while (std::getline(path, part, '.')) {
      if (!node->is_object() || !node->contains(part)) fail(ErrorCode::config, std::string("unknown config key: ") + key);
      node = &(*node)[part];
    }
    if (node->is_boolean())
      *value = node->get<bool>() ? 1.0 : 0.0;
    else if (node->is_number())
      *value = node->get<double>();
    else
      fail(ErrorCode::config, std::string("config key ") + key + " is not numeric");
  });
}

isaccal_status isaccal_config_json(const isaccal_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(cfg, "cfg");
    write_text(cfg->cfg.tree.dump(), buf, cap, needed);
  });
}

isaccal_status isaccal_config_hash(const isaccal_config* cfg, char out[17]) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    write_text(cfg->cfg.hash(), out, 17, nullptr);
  });
}

void isaccal_config_free(isaccal_config* cfg) { delete cfg; }

isaccal_status isaccal_model_baseline(const isaccal_config* cfg, const char* method, uint64_t impairment_seed,
                                      isaccal_model** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(method, "method");
    require(out, "out");
    const std::string m = method;
    auto model = std::make_unique<isaccal_model>();
    model->cfg = cfg->cfg;
    model->truth = truth_for(cfg->cfg, impairment_seed);
    ParamsPair p;
    if (m == "matched")
      p = ParamsPair::from(model->truth);
    else if (m == "mismatched")
      p = ParamsPair::ideal(cfg->cfg.waveform.num_antennas, cfg->cfg.waveform.wavelength);
    else
      fail(ErrorCode::config, "unknown baseline '" + m + "' (expected matched or mismatched)");
    model->ckpt.config = cfg->cfg.tree;
    model->ckpt.config_hash = cfg->cfg.hash();
    model->ckpt.method = m;
    model->ckpt.impairment_seed = impairment_seed;
    model->ckpt.state.params = ParamVector::pack(p);
    model->ckpt.state.adam = AdamState::zeros(model->ckpt.state.params.values.size());
    *out = model.release();
  });
}

isaccal_status isaccal_model_train(const isaccal_config* cfg, const char* method, uint64_t impairment_seed,
                                   uint64_t data_seed, isaccal_log_fn log, void* user, isaccal_model** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(method, "method");
    require(out, "out");
    if (impairment_seed == data_seed)
      fail(ErrorCode::config, "the impairment seed must differ from the training data seed");
    nlohmann::json tree = cfg->cfg.tree;
    tree["train"]["mode"] = method_mode(method);
    auto model = std::make_unique<isaccal_model>();
    model->cfg = config_from_tree(tree);
    model->truth = truth_for(model->cfg, impairment_seed);
    const Environment env = model->cfg.environment();
    TrainResult r = train(model->cfg.train, env, model->truth, data_seed, observer_for(log, user));
    model->ckpt.config = model->cfg.tree;
    model->ckpt.config_hash = model->cfg.hash();
    model->ckpt.method = method;
    model->ckpt.impairment_seed = impairment_seed;
    model->ckpt.data_seed = data_seed;
    model->ckpt.state = std::move(r.state);
    *out = model.release();
  });
}

isaccal_status isaccal_model_resume(isaccal_model* model, int total_iterations, isaccal_log_fn log, void* user) {
  return guarded([&] {
    require(model, "model");
    if (model->ckpt.method == "matched" || model->ckpt.method == "mismatched")
      fail(ErrorCode::config, "a model-based baseline has no training to resume");
    if (total_iterations > 0) {
      nlohmann::json tree = model->cfg.tree;
      tree["train"]["iterations"] = total_iterations;
      model->cfg = config_from_tree(tree);
      model->ckpt.config = model->cfg.tree;
      model->ckpt.config_hash = model->cfg.hash();
    }
    const Environment env = model->cfg.environment();
    TrainResult r = train(model->cfg.train, env, model->truth, model->ckpt.data_seed, model->ckpt.state,
                          observer_for(log, user));
    model->ckpt.state = std::move(r.state);
  });
}

isaccal_status isaccal_model_save(const isaccal_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    save_checkpoint(path, model->ckpt);
  });
}

isaccal_status isaccal_model_load(const char* path, isaccal_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto model = std::make_unique<isaccal_model>();
    model->ckpt = load_checkpoint(path);
    model->cfg = config_from_tree(model->ckpt.config);
    if (model->cfg.hash() != model->ckpt.config_hash)
      fail(ErrorCode::config, "checkpoint '" + std::string(path) + "' has a config hash that does not match its config");
    if (model->ckpt.state.params.num_antennas() != model->cfg.waveform.num_antennas)
      fail(ErrorCode::config, "checkpoint parameters do not match the configured number of antennas");
    model->truth = truth_for(model->cfg, model->ckpt.impairment_seed);
    *out = model.release();
  });
}

isaccal_status isaccal_model_config(const isaccal_model* model, isaccal_config** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new isaccal_config{model->cfg};
  });
}

isaccal_status isaccal_model_info_get(const isaccal_model* model, isaccal_model_info* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = {};
    out->num_antennas = model->cfg.waveform.num_antennas;
    out->iterations_done = model->ckpt.state.iteration;
    out->impairment_seed = model->ckpt.impairment_seed;
    out->data_seed = model->ckpt.data_seed;
    write_text(model->ckpt.method, out->method, sizeof out->method, nullptr);
  });
}

isaccal_status isaccal_model_params(const isaccal_model* model, double* out, size_t cap) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    const RVec& v = model->ckpt.state.params.values;
    if (cap < static_cast<size_t>(v.size()))
      fail(ErrorCode::invalid_argument, "parameter buffer needs " + std::to_string(v.size()) + " entries");
    std::copy(v.data(), v.data() + v.size(), out);
  });
}

void isaccal_model_free(isaccal_model* model) { delete model; }

isaccal_status isaccal_eval_options_init(const isaccal_config* cfg, isaccal_eval_options* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    out->samples = cfg->cfg.eval.test_samples;
    out->seed = 0;
    out->omega_r = std::nan("");
    out->snr_s_db = std::nan("");
    out->max_iter = cfg->cfg.eval_max_iter();
    out->threads = cfg->cfg.train.threads;
  });
}

isaccal_status isaccal_sensing_evaluate(const isaccal_model* model, const isaccal_config* cfg,
                                        const isaccal_eval_options* opt, isaccal_sensing_eval** out) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(opt, "opt");
    require(out, "out");
    check_compatible(model, cfg->cfg);
    const Environment env = eval_environment(cfg->cfg, *opt);
    auto e = std::make_unique<isaccal_sensing_eval>();
    e->eval = evaluate_sensing(env, model->ckpt.state.params.unpack(), model->truth, eval_options(cfg->cfg, *opt));
    e->gospa = cfg->cfg.gospa();
    *out = e.release();
  });
}

isaccal_status isaccal_sensing_at_delta(const isaccal_sensing_eval* eval, double delta, isaccal_operating_point* out) {
  return guarded([&] {
    require(eval, "eval");
    require(out, "out");
    if (!(delta >= 0.0)) fail(ErrorCode::invalid_argument, "threshold must be >= 0");
    const OperatingPoint op = operating_point(eval->eval, delta, eval->gospa);
    *out = {op.delta, op.p_fa, op.p_md, op.gospa, op.detections};
  });
}

isaccal_status isaccal_sensing_at_pfa(const isaccal_sensing_eval* eval, double target_pfa,
                                      isaccal_operating_point* out) {
  return guarded([&] {
    require(eval, "eval");
    require(out, "out");
    if (!(target_pfa >= 0.0 && target_pfa <= 1.0)) fail(ErrorCode::invalid_argument, "target p_fa must be in [0, 1]");
    const OperatingPoint op = operating_point_at_pfa(eval->eval, target_pfa, eval->gospa);
    *out = {op.delta, op.p_fa, op.p_md, op.gospa, op.detections};
  });
}

void isaccal_sensing_eval_free(isaccal_sensing_eval* eval) { delete eval; }

isaccal_status isaccal_noise_threshold(const isaccal_model* model, const isaccal_config* cfg,
                                       const isaccal_eval_options* opt, double target_pfa, double* delta) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(opt, "opt");
    require(delta, "delta");
    check_compatible(model, cfg->cfg);
    const Environment env = eval_environment(cfg->cfg, *opt);
    *delta = noise_threshold(env, model->ckpt.state.params.unpack(), model->truth, eval_options(cfg->cfg, *opt),
                             target_pfa);
  });
}

isaccal_status isaccal_ser_evaluate(const isaccal_model* model, const isaccal_config* cfg,
                                    const isaccal_eval_options* opt, isaccal_ser* out) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(opt, "opt");
    require(out, "out");
    check_compatible(model, cfg->cfg);
    const Environment env = eval_environment(cfg->cfg, *opt);
    const SerResult r =
        evaluate_ser(env, model->ckpt.state.params.unpack(), model->truth, eval_options(cfg->cfg, *opt));
    *out = {r.ser, r.symbols, r.errors};
  });
}

isaccal_status isaccal_precoder_response(const isaccal_model* model, const isaccal_config* cfg,
                                         double sensing_min_deg, double sensing_max_deg, double comm_min_deg,
                                         double comm_max_deg, double omega_r, double* angles_deg,
                                         double* response_db, size_t cap, size_t* count) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(count, "count");
    check_compatible(model, cfg->cfg);
    const Environment env = cfg->cfg.environment();
    *count = env.precoder_grid.size();
    if (angles_deg == nullptr && response_db == nullptr) return;
    if (cap < env.precoder_grid.size())
      fail(ErrorCode::invalid_argument, "response buffers need " + std::to_string(env.precoder_grid.size()) + " entries");
    if (!(sensing_min_deg < sensing_max_deg) || !(comm_min_deg < comm_max_deg))
      fail(ErrorCode::invalid_argument, "sector bounds must satisfy min < max");
    if (omega_r < 0.0 || omega_r > 1.0) fail(ErrorCode::invalid_argument, "omega_r must be in [0, 1]");
    const Sector sensing{deg2rad(sensing_min_deg), deg2rad(sensing_max_deg)};
    const Sector comm{deg2rad(comm_min_deg), deg2rad(comm_max_deg)};
    const RVec r =
        precoder_response_db(env, model->ckpt.state.params.unpack().tx, model->truth.tx, sensing, comm, omega_r);
    for (std::size_t i = 0; i < env.precoder_grid.size(); ++i) {
      if (angles_deg) angles_deg[i] = rad2deg(env.precoder_grid[i]);
      if (response_db) response_db[i] = r[static_cast<Eigen::Index>(i)];
    }
  });
}

isaccal_status isaccal_adm_dump(const isaccal_model* model, const isaccal_config* cfg, uint64_t seed, int noiseless,
                                isaccal_adm_info* info, double* angles_deg, double* ranges_m, double* map,
                                double* targets, double* detections, double* residual_norms) {
  return guarded([&] {
    require(model, "model");
    require(cfg, "cfg");
    require(info, "info");
    check_compatible(model, cfg->cfg);
    const Environment env = cfg->cfg.environment();
    const SampleContext ctx = reference_context(env, seed);
    const AdmSnapshot s = adm_snapshot(env, model->ckpt.state.params.unpack().rx, model->truth, ctx,
                                       noiseless ? 0.0 : env.noise_psd_sensing, seed, cfg->cfg.eval_max_iter());
    info->num_angles = static_cast<int>(s.angles.size());
    info->num_delays = static_cast<int>(s.delays.size());
    info->num_targets = static_cast<int>(ctx.sensing.targets.size());
    info->num_detections = static_cast<int>(s.omp.detections.size());
    if (angles_deg)
      for (std::size_t i = 0; i < s.angles.size(); ++i) angles_deg[i] = rad2deg(s.angles[i]);
    if (ranges_m)
      for (std::size_t j = 0; j < s.delays.size(); ++j) ranges_m[j] = 0.5 * kSpeedOfLight * s.delays[j];
    if (map) std::copy(s.map.data(), s.map.data() + s.map.size(), map);
    if (targets)
      for (std::size_t t = 0; t < ctx.sensing.targets.size(); ++t) {
        targets[2 * t] = rad2deg(ctx.sensing.targets[t].angle);
        targets[2 * t + 1] = ctx.sensing.targets[t].range;
      }
    if (detections)
      for (std::size_t t = 0; t < s.omp.detections.size(); ++t) {
        detections[2 * t] = rad2deg(s.omp.detections[t].angle);
        detections[2 * t + 1] = 0.5 * kSpeedOfLight * s.omp.detections[t].delay;
      }
    if (residual_norms) std::copy(s.omp.residual_norms.begin(), s.omp.residual_norms.end(), residual_norms);
  });
}

isaccal_status isaccal_selftest(uint64_t seed, char* report, size_t cap, size_t* needed, int* failures) {
  return guarded([&] {
    require(failures, "failures");
    const std::vector<CheckResult> checks = run_selftest(seed);
    std::ostringstream os;
    *failures = 0;
    for (const auto& c : checks) {
      *failures += c.passed ? 0 : 1;
      char line[160];
      std::snprintf(line, sizeof line, "%s %-48s %.3e (tolerance %.1e)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                    c.value, c.tolerance);
      os << line;
    }
    write_text(os.str(), report, cap, needed);
  });
}

} // extern "C"
