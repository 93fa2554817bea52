#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "isaccal/isaccal.h"

namespace {

struct LogProbe {
  int rows = 0;
  int infeasible = 0;
  int last_iter = -1;
};

void on_row(const isaccal_log_row* row, int feasible, void* user) {
  auto* p = static_cast<LogProbe*>(user);
  ++p->rows;
  p->infeasible += feasible ? 0 : 1;
  p->last_iter = row->iter;
}

isaccal_config* tiny_config() {
  isaccal_config* cfg = nullptr;
  REQUIRE(isaccal_config_from_preset("desk", &cfg) == ISACCAL_OK);
  REQUIRE(isaccal_config_override(cfg, "waveform.K=4") == ISACCAL_OK);
  REQUIRE(isaccal_config_override(cfg, "waveform.S=8") == ISACCAL_OK);
  REQUIRE(isaccal_config_override(cfg, "sensing.n_theta=31") == ISACCAL_OK);
  REQUIRE(isaccal_config_override(cfg, "train.batch=4") == ISACCAL_OK);
  REQUIRE(isaccal_config_override(cfg, "train.iterations=3") == ISACCAL_OK);
  return cfg;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / (std::string("isaccal_capi_") + name)).string();
}

} // namespace

TEST_CASE("version and configuration") {
  CHECK(std::strlen(isaccal_version()) > 0);

  isaccal_config* cfg = nullptr;
  CHECK(isaccal_config_from_preset("nope", &cfg) == ISACCAL_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(isaccal_last_error()).find("nope") != std::string::npos);
  CHECK(isaccal_config_from_preset(nullptr, &cfg) == ISACCAL_ERR_INVALID_ARGUMENT);
  CHECK(isaccal_config_from_preset("desk", nullptr) == ISACCAL_ERR_INVALID_ARGUMENT);

  REQUIRE(isaccal_config_from_preset("desk", &cfg) == ISACCAL_OK);
  double v = 0.0;
  CHECK(isaccal_config_get_number(cfg, "waveform.K", &v) == ISACCAL_OK);
  CHECK(v == 16.0);
  CHECK(isaccal_config_get_number(cfg, "train.tx_known", &v) == ISACCAL_OK);
  CHECK(v == 0.0);
  CHECK(isaccal_config_get_number(cfg, "waveform.nothing", &v) == ISACCAL_ERR_CONFIG);
  CHECK(isaccal_config_get_number(cfg, "constellation", &v) == ISACCAL_ERR_CONFIG);

  CHECK(isaccal_config_override(cfg, "train.nothing=1") == ISACCAL_ERR_CONFIG);
  CHECK(isaccal_config_override(cfg, "train.batch=0") == ISACCAL_ERR_CONFIG);
  CHECK(isaccal_config_get_number(cfg, "train.batch", &v) == ISACCAL_OK);
  CHECK(v == 128.0); // a rejected override leaves the config untouched

  size_t needed = 0;
  CHECK(isaccal_config_json(cfg, nullptr, 0, &needed) == ISACCAL_OK);
  CHECK(needed > 10);
  std::vector<char> buf(needed);
  CHECK(isaccal_config_json(cfg, buf.data(), buf.size(), &needed) == ISACCAL_OK);
  CHECK(std::strlen(buf.data()) + 1 == needed);
  char small[8];
  CHECK(isaccal_config_json(cfg, small, sizeof small, &needed) == ISACCAL_OK);
  CHECK(std::strlen(small) == 7);

  char h1[17], h2[17];
  CHECK(isaccal_config_hash(cfg, h1) == ISACCAL_OK);
  CHECK(std::strlen(h1) == 16);
  isaccal_config* copy = nullptr;
  REQUIRE(isaccal_config_copy(cfg, &copy) == ISACCAL_OK);
  CHECK(isaccal_config_override(copy, "train.iterations=5") == ISACCAL_OK);
  CHECK(isaccal_config_hash(copy, h2) == ISACCAL_OK);
  CHECK(std::string(h1) != std::string(h2));
  CHECK(isaccal_config_from_file(temp_path("missing.json").c_str(), &cfg) == ISACCAL_ERR_IO);

  isaccal_config_free(copy);
  isaccal_config_free(cfg);
  isaccal_config_free(nullptr);
}

TEST_CASE("models") {
  isaccal_config* cfg = tiny_config();
  isaccal_model* m = nullptr;

  CHECK(isaccal_model_train(cfg, "ul", 3, 3, nullptr, nullptr, &m) == ISACCAL_ERR_CONFIG);
  CHECK(isaccal_model_train(cfg, "rl", 3, 4, nullptr, nullptr, &m) == ISACCAL_ERR_CONFIG);
  CHECK(isaccal_model_baseline(cfg, "oracle", 3, &m) == ISACCAL_ERR_CONFIG);
  CHECK(m == nullptr);

  LogProbe probe;
  REQUIRE(isaccal_model_train(cfg, "ul", 3, 4, on_row, &probe, &m) == ISACCAL_OK);
  CHECK(probe.rows == 3);
  CHECK(probe.infeasible == 0);
  isaccal_model_info info{};
  CHECK(isaccal_model_info_get(m, &info) == ISACCAL_OK);
  CHECK(info.num_antennas == 4);
  CHECK(info.iterations_done == 3);
  CHECK(info.impairment_seed == 3);
  CHECK(info.data_seed == 4);
  CHECK(std::string(info.method) == "ul");

  double params[24];
  CHECK(isaccal_model_params(m, params, 23) == ISACCAL_ERR_INVALID_ARGUMENT);
  CHECK(isaccal_model_params(m, params, 24) == ISACCAL_OK);

  const std::string path = temp_path("model.json");
  CHECK(isaccal_model_save(m, path.c_str()) == ISACCAL_OK);
  isaccal_model* loaded = nullptr;
  REQUIRE(isaccal_model_load(path.c_str(), &loaded) == ISACCAL_OK);
  double again[24];
  CHECK(isaccal_model_params(loaded, again, 24) == ISACCAL_OK);
  CHECK(std::memcmp(params, again, sizeof params) == 0);

  SUBCASE("resume continues the same run") {
    isaccal_config* longer = nullptr;
    REQUIRE(isaccal_config_copy(cfg, &longer) == ISACCAL_OK);
    REQUIRE(isaccal_config_override(longer, "train.iterations=5") == ISACCAL_OK);
    isaccal_model* straight = nullptr;
    REQUIRE(isaccal_model_train(longer, "ul", 3, 4, nullptr, nullptr, &straight) == ISACCAL_OK);
    LogProbe more;
    CHECK(isaccal_model_resume(loaded, 5, on_row, &more) == ISACCAL_OK);
    CHECK(more.rows == 2);
    CHECK(more.last_iter == 4);
    double a[24], b[24];
    isaccal_model_params(loaded, a, 24);
    isaccal_model_params(straight, b, 24);
    CHECK(std::memcmp(a, b, sizeof a) == 0);
    isaccal_model_free(straight);
    isaccal_config_free(longer);
  }
  SUBCASE("corrupted checkpoints are rejected") {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("{\"format\": \"isaccal-checkpoint\"}", f);
    std::fclose(f);
    isaccal_model* bad = nullptr;
    CHECK(isaccal_model_load(path.c_str(), &bad) == ISACCAL_ERR_CONFIG);
    CHECK(bad == nullptr);
    CHECK(isaccal_model_load(temp_path("none.json").c_str(), &bad) == ISACCAL_ERR_IO);
  }
  SUBCASE("baselines cannot be resumed") {
    isaccal_model* base = nullptr;
    REQUIRE(isaccal_model_baseline(cfg, "matched", 3, &base) == ISACCAL_OK);
    CHECK(isaccal_model_resume(base, 10, nullptr, nullptr) == ISACCAL_ERR_CONFIG);
    isaccal_model_free(base);
  }
  SUBCASE("evaluation against a config of another size is refused") {
    isaccal_config* desk = nullptr;
    REQUIRE(isaccal_config_from_preset("desk", &desk) == ISACCAL_OK);
    isaccal_eval_options opt;
    REQUIRE(isaccal_eval_options_init(desk, &opt) == ISACCAL_OK);
    opt.samples = 10;
    isaccal_sensing_eval* ev = nullptr;
    CHECK(isaccal_sensing_evaluate(m, desk, &opt, &ev) == ISACCAL_ERR_CONFIG);
    isaccal_config_free(desk);
  }

  std::remove(path.c_str());
  isaccal_model_free(loaded);
  isaccal_model_free(m);
  isaccal_config_free(cfg);
}

TEST_CASE("evaluation") {
  isaccal_config* cfg = tiny_config();
  isaccal_model* m = nullptr;
  REQUIRE(isaccal_model_baseline(cfg, "matched", 2, &m) == ISACCAL_OK);
  isaccal_eval_options opt;
  REQUIRE(isaccal_eval_options_init(cfg, &opt) == ISACCAL_OK);
  CHECK(opt.samples == 10000);
  CHECK(std::isnan(opt.omega_r));
  CHECK(opt.max_iter == 6);
  opt.samples = 300;
  opt.seed = 5;

  isaccal_sensing_eval* ev = nullptr;
  REQUIRE(isaccal_sensing_evaluate(m, cfg, &opt, &ev) == ISACCAL_OK);
  isaccal_operating_point hi{}, lo{}, at{};
  CHECK(isaccal_sensing_at_delta(ev, 1e300, &hi) == ISACCAL_OK);
  CHECK(hi.p_fa == 0.0);
  CHECK(hi.p_md == 1.0);
  CHECK(hi.detections == 0);
  CHECK(isaccal_sensing_at_delta(ev, 0.0, &lo) == ISACCAL_OK);
  CHECK(lo.p_md == 0.0);
  CHECK(isaccal_sensing_at_delta(ev, -1.0, &lo) == ISACCAL_ERR_INVALID_ARGUMENT);
  CHECK(isaccal_sensing_at_pfa(ev, 0.05, &at) == ISACCAL_OK);
  CHECK(at.p_fa <= 0.05);
  CHECK(isaccal_sensing_at_pfa(ev, 2.0, &at) == ISACCAL_ERR_INVALID_ARGUMENT);
  isaccal_sensing_eval_free(ev);

  double delta = 0.0;
  opt.samples = 100;
  CHECK(isaccal_noise_threshold(m, cfg, &opt, 0.01, &delta) == ISACCAL_ERR_CALIBRATION);
  opt.samples = 1000;
  CHECK(isaccal_noise_threshold(m, cfg, &opt, 0.01, &delta) == ISACCAL_OK);
  CHECK(delta > 0.0);

  isaccal_ser ser{};
  opt.samples = 200;
  opt.omega_r = 0.5;
  CHECK(isaccal_ser_evaluate(m, cfg, &opt, &ser) == ISACCAL_OK);
  CHECK(ser.symbols == 200 * 8);
  CHECK(ser.ser == doctest::Approx(static_cast<double>(ser.errors) / ser.symbols));
  opt.omega_r = 1.5;
  CHECK(isaccal_ser_evaluate(m, cfg, &opt, &ser) == ISACCAL_ERR_INVALID_ARGUMENT);
  opt.omega_r = 0.5;
  opt.samples = 0;
  CHECK(isaccal_ser_evaluate(m, cfg, &opt, &ser) == ISACCAL_ERR_INVALID_ARGUMENT);

  size_t count = 0;
  CHECK(isaccal_precoder_response(m, cfg, -40, -20, 30, 40, 0.75, nullptr, nullptr, 0, &count) == ISACCAL_OK);
  CHECK(count == 181);
  std::vector<double> ang(count), resp(count);
  CHECK(isaccal_precoder_response(m, cfg, -40, -20, 30, 40, 0.75, ang.data(), resp.data(), 10, &count) ==
        ISACCAL_ERR_INVALID_ARGUMENT);
  CHECK(isaccal_precoder_response(m, cfg, -40, -20, 30, 40, 0.75, ang.data(), resp.data(), count, &count) ==
        ISACCAL_OK);
  CHECK(ang.front() == doctest::Approx(-90.0));
  CHECK(ang.back() == doctest::Approx(90.0));

  isaccal_adm_info info{};
  CHECK(isaccal_adm_dump(m, cfg, 1, 1, &info, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr) == ISACCAL_OK);
  CHECK(info.num_angles == 31);
  CHECK(info.num_delays == 16);
  CHECK(info.num_targets >= 2);
  std::vector<double> map(static_cast<size_t>(info.num_angles) * info.num_delays);
  std::vector<double> res(64, -1.0);
  CHECK(isaccal_adm_dump(m, cfg, 1, 1, &info, nullptr, nullptr, map.data(), nullptr, nullptr, res.data()) ==
        ISACCAL_OK);
  CHECK(*std::min_element(map.begin(), map.end()) >= 0.0);
  CHECK(res[static_cast<size_t>(info.num_detections)] <= res[0]);

  isaccal_model_free(m);
  isaccal_config_free(cfg);
}

TEST_CASE("self-test entry point") {
  size_t needed = 0;
  int failures = -1;
  CHECK(isaccal_selftest(1, nullptr, 0, &needed, &failures) == ISACCAL_OK);
  CHECK(failures == 0);
  CHECK(needed > 1);
  std::vector<char> report(needed);
  CHECK(isaccal_selftest(1, report.data(), report.size(), &needed, &failures) == ISACCAL_OK);
  CHECK(std::string(report.data()).find("precoder jacobian") != std::string::npos);
}
