#include "batt/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "batt/parallel.hpp"

namespace batt {

namespace {

using nlohmann::json;

struct HitCount {
  size_t hits = 0;
  size_t evaluated = 0;
  double fraction() const {
    return static_cast<double>(hits) / static_cast<double>(evaluated);
  }
};

// ASR at one parameter value; the single code path behind both
// attack_success_rate and theta_sweep.
HitCount asr_at_theta(const TrainedModel& model, const Dataset& test,
                      const PoisonConfig& config, double theta, int threads) {
  PoisonConfig at = config;
  at.theta_star = theta;
  const Dataset triggered = build_asr_test_set(test, at, threads);
  const std::vector<int> pred = predict_batch(model, triggered, threads);
  HitCount hc;
  hc.evaluated = pred.size();
  for (int p : pred)
    if (p == config.target_label) ++hc.hits;
  return hc;
}

void validate_grid_entry(TransformKind kind, double theta, int width) {
  if (kind == TransformKind::Rotation) {
    if (!(theta > -180.0 && theta <= 180.0))
      throw RangeError("sweep angle outside (-180, 180]");
  } else if (std::abs(theta) >= width) {
    throw RangeError("sweep translation magnitude >= image width");
  }
}

}  // namespace

void EvalReport::validate() const {
  if (ba < 0 || ba > 1 || asr < 0 || asr > 1)
    throw ValidationError("report fractions outside [0,1]");
  for (size_t i = 1; i < sweep.size(); ++i)
    if (!(sweep[i - 1].theta < sweep[i].theta))
      throw ValidationError("sweep parameters not strictly increasing");
}

double benign_accuracy(const TrainedModel& model, const Dataset& test,
                       int threads) {
  if (test.samples.empty()) throw ValidationError("empty evaluation set");
  const std::vector<int> pred = predict_batch(model, test, threads);
  size_t correct = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test.samples[i].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double benign_accuracy_transformed(const TrainedModel& model, const Dataset& test,
                                   const ParamDomain& domain, float fill,
                                   uint64_t seed, int threads) {
  if (test.samples.empty()) throw ValidationError("empty evaluation set");
  Dataset transformed;
  transformed.num_classes = test.num_classes;
  transformed.split = test.split;
  transformed.source = test.source;
  transformed.samples.resize(test.size());
  parallel_for(test.size(), threads, [&](size_t i) {
    RngStream stream(seed, "benign-eval", i);
    const TransformSpec spec{domain.kind, sample_param(domain, stream), fill};
    transformed.samples[i].image = apply(spec, test.samples[i].image);
    transformed.samples[i].label = test.samples[i].label;
  });
  return benign_accuracy(model, transformed, threads);
}

double attack_success_rate(const TrainedModel& model, const Dataset& test,
                           const PoisonConfig& config, int threads) {
  return asr_at_theta(model, test, config, config.theta_star, threads).fraction();
}

std::vector<SweepPoint> theta_sweep(const TrainedModel& model, const Dataset& test,
                                    const PoisonConfig& config,
                                    const std::vector<double>& grid,
                                    int threads) {
  if (grid.empty()) throw ValidationError("empty sweep grid");
  test.validate();
  const int width = test.samples.front().image.width;

  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  for (double theta : sorted) validate_grid_entry(config.kind, theta, width);

  std::vector<SweepPoint> curve;
  curve.reserve(sorted.size());
  for (double theta : sorted) {
    const HitCount hc = asr_at_theta(model, test, config, theta, threads);
    curve.push_back({theta, hc.fraction(), hc.evaluated, hc.hits});
  }
  return curve;
}

std::vector<double> default_sweep_grid(TransformKind kind) {
  std::vector<double> grid;
  if (kind == TransformKind::Rotation) {
    for (int a = -180; a <= 180; a += 4) grid.push_back(a);
  } else {
    for (int d = -16; d <= 16; ++d) grid.push_back(d);
  }
  return grid;
}

EvalReport evaluate(const TrainedModel& model, const Dataset& test,
                    const PoisonConfig& config, const std::vector<double>& grid,
                    int threads) {
  EvalReport report;
  report.config_digest = config.digest();
  report.model_digest = model.digest();

  const std::vector<int> pred = predict_batch(model, test, threads);
  report.counts.ba_evaluated = pred.size();
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test.samples[i].label) ++report.counts.ba_correct;
  report.ba = static_cast<double>(report.counts.ba_correct) /
              static_cast<double>(report.counts.ba_evaluated);

  const HitCount hc =
      asr_at_theta(model, test, config, config.theta_star, threads);
  report.counts.asr_evaluated = hc.evaluated;
  report.counts.asr_hits = hc.hits;
  report.asr = hc.fraction();

  report.sweep = theta_sweep(model, test, config, grid, threads);
  report.validate();
  return report;
}

void emit_report(const EvalReport& report, const std::string& json_path,
                 const std::string& csv_path) {
  json j;
  j["ba"] = report.ba;
  j["asr"] = report.asr;
  j["counts"] = {{"ba_evaluated", report.counts.ba_evaluated},
                 {"ba_correct", report.counts.ba_correct},
                 {"asr_evaluated", report.counts.asr_evaluated},
                 {"asr_hits", report.counts.asr_hits}};
  json sweep = json::array();
  for (const auto& p : report.sweep)
    sweep.push_back({{"theta", p.theta},
                     {"asr", p.asr},
                     {"n_evaluated", p.n_evaluated},
                     {"n_hits", p.n_hits}});
  j["sweep"] = sweep;
  j["config_digest"] = to_hex(report.config_digest);
  j["model_digest"] = to_hex(report.model_digest);

  std::ofstream jf(json_path, std::ios::trunc);
  if (!jf) throw IoError("cannot open " + json_path + " for writing");
  jf << j.dump(2) << "\n";
  if (!jf) throw IoError("short write on " + json_path);

  std::ofstream cf(csv_path, std::ios::trunc);
  if (!cf) throw IoError("cannot open " + csv_path + " for writing");
  cf << "theta,asr,n_evaluated,n_hits\n";
  char line[128];
  for (const auto& p : report.sweep) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%zu,%zu\n", p.theta, p.asr,
                  p.n_evaluated, p.n_hits);
    cf << line;
  }
  if (!cf) throw IoError("short write on " + csv_path);
}

EvalReport read_report(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open " + json_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(json_path + ": bad report JSON: " + e.what());
  }
  EvalReport report;
  report.ba = j.at("ba").get<double>();
  report.asr = j.at("asr").get<double>();
  report.counts.ba_evaluated = j.at("counts").at("ba_evaluated").get<size_t>();
  report.counts.ba_correct = j.at("counts").at("ba_correct").get<size_t>();
  report.counts.asr_evaluated = j.at("counts").at("asr_evaluated").get<size_t>();
  report.counts.asr_hits = j.at("counts").at("asr_hits").get<size_t>();
  for (const auto& e : j.at("sweep"))
    report.sweep.push_back({e.at("theta").get<double>(), e.at("asr").get<double>(),
                            e.at("n_evaluated").get<size_t>(),
                            e.at("n_hits").get<size_t>()});
  report.config_digest = std::stoull(j.at("config_digest").get<std::string>(),
                                     nullptr, 16);
  report.model_digest = std::stoull(j.at("model_digest").get<std::string>(),
                                    nullptr, 16);
  report.validate();
  return report;
}

}  // namespace batt
