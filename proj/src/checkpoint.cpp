#include "isaccal/checkpoint.hpp"

#include <fstream>

namespace isaccal {

using nlohmann::json;

namespace {

json vec(const RVec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RVec vec_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const RVec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace

json to_json(const Checkpoint& c) {
  const auto& s = c.state;
  return {
      {"format", "isaccal-checkpoint"},
      {"version", kCheckpointVersion},
      {"code_version", ISACCAL_VERSION},
      {"config_hash", c.config_hash},
      {"config", c.config},
      {"method", c.method},
      {"impairment_seed", c.impairment_seed},
      {"rng", {{"data_seed", c.data_seed}, {"next_iteration", s.iteration}}},
      {"params", vec(s.params.values)},
      {"adam",
       {{"m", vec(s.adam.m)},
        {"v", vec(s.adam.v)},
        {"step", s.adam.step},
        {"beta1", s.adam.beta1},
        {"beta2", s.adam.beta2},
        {"eps", s.adam.eps}}},
      {"scheduler",
       {{"factor", s.scheduler.factor},
        {"patience", s.scheduler.patience},
        {"cooldown", s.scheduler.cooldown},
        {"threshold", s.scheduler.threshold},
        {"best", s.scheduler.best},
        {"num_bad", s.scheduler.num_bad},
        {"cooldown_counter", s.scheduler.cooldown_counter},
        {"multiplier", s.scheduler.multiplier},
        {"reductions", s.scheduler.reductions}}},
  };
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.value("format", "") != "isaccal-checkpoint") fail(ErrorCode::config, "not an isaccal checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      fail(ErrorCode::config, "unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config = j.at("config");
    c.config_hash = j.at("config_hash").get<std::string>();
    c.method = j.at("method").get<std::string>();
    c.impairment_seed = j.at("impairment_seed").get<std::uint64_t>();
    c.data_seed = j.at("rng").at("data_seed").get<std::uint64_t>();
    auto& s = c.state;
    s.iteration = j.at("rng").at("next_iteration").get<int>();
    s.params.values = vec_from(j.at("params"));
    const json& a = j.at("adam");
    s.adam.m = vec_from(a.at("m"));
    s.adam.v = vec_from(a.at("v"));
    s.adam.step = a.at("step").get<long>();
    s.adam.beta1 = a.at("beta1").get<double>();
    s.adam.beta2 = a.at("beta2").get<double>();
    s.adam.eps = a.at("eps").get<double>();
    const json& p = j.at("scheduler");
    s.scheduler.factor = p.at("factor").get<double>();
    s.scheduler.patience = p.at("patience").get<int>();
    s.scheduler.cooldown = p.at("cooldown").get<int>();
    s.scheduler.threshold = p.at("threshold").get<double>();
    // JSON has no infinity; a scheduler that never saw a loss stores null.
    s.scheduler.best = p.at("best").is_null() ? std::numeric_limits<double>::infinity() : p.at("best").get<double>();
    s.scheduler.num_bad = p.at("num_bad").get<int>();
    s.scheduler.cooldown_counter = p.at("cooldown_counter").get<int>();
    s.scheduler.multiplier = p.at("multiplier").get<double>();
    s.scheduler.reductions = p.at("reductions").get<int>();
    const auto n = s.params.values.size();
    if (n == 0 || n % 6 != 0 || s.adam.m.size() != n || s.adam.v.size() != n)
      fail(ErrorCode::config, "checkpoint parameter vectors have inconsistent sizes");
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write checkpoint '" + path + "'");
  out << to_json(c).dump(1) << '\n';
  if (!out) fail(ErrorCode::io, "failed while writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open checkpoint '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, "checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

} // namespace isaccal
