#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/data.hpp"
#include "ipguard/error.hpp"
#include "ipguard/fingerprint.hpp"
#include "ipguard/metrics.hpp"
#include "ipguard/model_io.hpp"
#include "ipguard/nn.hpp"
#include "ipguard/suspects.hpp"
#include "ipguard/train.hpp"
#include "ipguard/verify.hpp"

namespace ipguard {

inline constexpr int kReportVersion = 1;

struct SuspectRate {
  std::string kind;
  SuspectTag tag;
  double fraction;
  double matching_rate;

  bool operator==(const SuspectRate&) const = default;
};

/// Metrics of one fingerprint against one suspect population.
struct EvalReport {
  std::string method;  // tag such as "ipguard-TL"
  nlohmann::json params;
  std::vector<SuspectRate> rates;
  std::vector<CurvePoint> curve;
  double aruc = 0.0;
  double auc = 0.0;
  double gap = 0.0;
  double calibrated_tau = 0.0;
  double extraction_seconds = 0.0;

  bool operator==(const EvalReport&) const = default;
};

inline EvalReport evaluate(const Fingerprint& fp, const SuspectSet& suite, int r = 100, unsigned threads = 1) {
  EvalReport rep;
  rep.method = fp.params.tag();
  rep.params = to_json(fp.params);
  rep.rates.resize(suite.entries.size());
  parallel_for(suite.entries.size(), threads, [&](std::size_t s) {
    const auto& e = suite.entries[s];
    rep.rates[s] = {e.kind, e.tag, e.fraction, matching_rate(fp, *e.oracle)};
  });
  std::vector<double> pos, neg;
  for (const auto& sr : rep.rates) (sr.tag == SuspectTag::positive ? pos : neg).push_back(sr.matching_rate);
  rep.curve = ru_curve(pos, neg, r);
  rep.aruc = aruc_from_curve(rep.curve);
  rep.auc = auc(pos, neg);
  rep.gap = gap(pos, neg);
  rep.calibrated_tau = calibrate_tau(rep.curve);
  return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rates = nlohmann::json::array();
  for (const auto& s : r.rates)
    rates.push_back(
        {{"kind", s.kind}, {"tag", to_string(s.tag)}, {"fraction", s.fraction}, {"matching_rate", s.matching_rate}});
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.curve) curve.push_back({{"tau", p.tau}, {"R", p.robustness}, {"U", p.uniqueness}});
  return {{"version", kReportVersion}, {"method", r.method}, {"params", r.params},
          {"rates", std::move(rates)},  {"curve", std::move(curve)}, {"aruc", r.aruc},
          {"auc", r.auc},               {"gap", r.gap},              {"calibrated_tau", r.calibrated_tau},
          {"extraction_seconds", r.extraction_seconds}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kReportVersion)
      throw FormatError("unsupported report version " + j.at("version").dump());
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.params = j.at("params");
    for (const auto& s : j.at("rates"))
      r.rates.push_back({s.at("kind").get<std::string>(),
                         s.at("tag").get<std::string>() == "positive" ? SuspectTag::positive : SuspectTag::negative,
                         s.at("fraction").get<double>(), s.at("matching_rate").get<double>()});
    for (const auto& p : j.at("curve"))
      r.curve.push_back({p.at("tau").get<double>(), p.at("R").get<double>(), p.at("U").get<double>()});
    r.aruc = j.at("aruc").get<double>();
    r.auc = j.at("auc").get<double>();
    r.gap = j.at("gap").get<double>();
    r.calibrated_tau = j.at("calibrated_tau").get<double>();
    r.extraction_seconds = j.value("extraction_seconds", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

/// Writes the report as schema-versioned JSON or as a curve CSV (tau,R,U,min rows then a
/// summary row carrying aruc, auc and gap).
inline void emit_report(const EvalReport& r, const std::string& format, const std::string& path) {
  if (format == "json") {
    write_file(path, to_json(r).dump(1) + "\n");
  } else if (format == "csv") {
    std::ostringstream out;
    out.precision(17);
    out << "tau,R,U,min\n";
    for (const auto& p : r.curve)
      out << p.tau << ',' << p.robustness << ',' << p.uniqueness << ',' << std::min(p.robustness, p.uniqueness)
          << '\n';
    out << "summary," << r.aruc << ',' << r.auc << ',' << r.gap << '\n';
    write_file(path, out.str());
  } else {
    throw InputError("unknown report format '" + format + "' (expected json or csv)");
  }
}

/// One extraction method swept over a single parameter.
struct MethodSweep {
  ExtractConfig base;
  std::string parameter;  // "k", "epsilon" or empty
  std::vector<double> values;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  SyntheticSpec dataset;
  bool dataset_seed_given = false;
  double train_fraction = 0.8;
  std::string target_arch = "small-MLP";
  TrainConfig target_train;
  SuiteConfig suite;
  bool finetune_given = false;
  std::vector<MethodSweep> methods;
  std::size_t n = 100;
  int r = 100;
  std::string output_dir;
  unsigned threads = 1;
  nlohmann::json source;  // echoed into the report
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    c.source = j;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.dataset = synthetic_spec_from_json(j.at("dataset"));
    c.dataset_seed_given = j.at("dataset").contains("seed");
    c.dataset.validate();
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    if (j.contains("target")) {
      const auto& t = j.at("target");
      c.target_arch = t.value("arch", c.target_arch);
      if (t.contains("train")) c.target_train = train_config_from_json(t.at("train"));
    }
    hidden_widths_for(c.target_arch);
    c.suite.retrain = c.target_train;
    c.suite.finetune = default_finetune(c.target_train);
    if (j.contains("suite")) {
      const auto& s = j.at("suite");
      c.suite.n_same_arch = s.value("n_same_arch", c.suite.n_same_arch);
      c.suite.n_diff_arch = s.value("n_diff_arch", c.suite.n_diff_arch);
      c.suite.n_forests = s.value("n_forests", c.suite.n_forests);
      c.suite.n_trees = s.value("n_trees", c.suite.n_trees);
      c.suite.alt_arch = s.value("alt_arch", c.suite.alt_arch);
      hidden_widths_for(c.suite.alt_arch);
      c.suite.wp_step = s.value("wp_step", c.suite.wp_step);
      c.suite.fp_step = s.value("fp_step", c.suite.fp_step);
      c.suite.max_acc_loss = s.value("max_acc_loss", c.suite.max_acc_loss);
      c.suite.weight_ladder = s.value("weight_ladder", c.suite.weight_ladder);
      c.suite.filter_ladder = s.value("filter_ladder", c.suite.filter_ladder);
      if (s.contains("finetune")) c.suite.finetune = train_config_from_json(s.at("finetune"), c.suite.finetune);
    }
    if (j.contains("fingerprint")) c.n = j.at("fingerprint").value("n", c.n);
    c.r = j.value("r", c.r);
    c.output_dir = j.value("output_dir", std::string());
    for (const auto& m : j.at("methods")) {
      MethodSweep sweep;
      sweep.base = extract_config_from_json(m);
      sweep.base.method = method_from_string(m.at("method").get<std::string>());
      sweep.base.n = c.n;
      if (m.contains("sweep")) {
        const auto& sw = m.at("sweep");
        if (sw.size() != 1) throw InputError("a method sweep names exactly one parameter");
        sweep.parameter = sw.begin().key();
        if (sweep.parameter != "k" && sweep.parameter != "epsilon")
          throw InputError("sweep parameter must be k or epsilon, got '" + sweep.parameter + "'");
        sweep.values = sw.begin().value().get<std::vector<double>>();
        if (sweep.values.empty()) throw InputError("empty sweep for " + sweep.parameter);
      }
      c.methods.push_back(std::move(sweep));
    }
    if (c.methods.empty()) throw InputError("experiment lists no methods");
    if (c.r < 1) throw InputError("r must be at least 1");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed experiment config: ") + e.what());
  }
}

struct SweepResult {
  std::string method;
  std::string parameter;
  std::vector<double> values;
  std::vector<EvalReport> reports;
  std::size_t best_index = 0;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::string target_digest;
  double target_test_accuracy = 0.0;
  double target_train_accuracy = 0.0;
  std::vector<SuspectRate> suspects;  // matching_rate holds the member's test accuracy
  std::vector<SweepResult> sweeps;

  const SweepResult& sweep(const std::string& method_tag) const {
    for (const auto& s : sweeps)
      if (s.method == method_tag) return s;
    throw InputError("no sweep for method '" + method_tag + "'");
  }

  double best_aruc(const std::string& method_tag) const {
    const auto& s = sweep(method_tag);
    return s.reports[s.best_index].aruc;
  }
};

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json suspects = nlohmann::json::array();
  for (const auto& s : r.suspects)
    suspects.push_back(
        {{"kind", s.kind}, {"tag", to_string(s.tag)}, {"fraction", s.fraction}, {"test_accuracy", s.matching_rate}});
  nlohmann::json sweeps = nlohmann::json::array();
  for (const auto& s : r.sweeps) {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& rep : s.reports) results.push_back(to_json(rep));
    sweeps.push_back({{"method", s.method},
                      {"parameter", s.parameter},
                      {"values", s.values},
                      {"results", std::move(results)},
                      {"best_index", s.best_index},
                      {"best_aruc", s.reports[s.best_index].aruc},
                      {"best_value", s.values.empty() ? nlohmann::json() : nlohmann::json(s.values[s.best_index])}});
  }
  return {{"version", kReportVersion},
          {"seed", r.seed},
          {"config", r.config},
          {"target",
           {{"digest", r.target_digest},
            {"test_accuracy", r.target_test_accuracy},
            {"train_accuracy", r.target_train_accuracy}}},
          {"suspects", std::move(suspects)},
          {"sweeps", std::move(sweeps)}};
}

/// Drops every "extraction_seconds" field so reports can be compared byte for byte.
inline nlohmann::json without_timing(nlohmann::json j) {
  if (j.is_object()) {
    j.erase("extraction_seconds");
    for (auto& [key, value] : j.items()) value = without_timing(value);
  } else if (j.is_array()) {
    for (auto& v : j) v = without_timing(v);
  }
  return j;
}

struct PreparedTarget {
  Dataset train;
  Dataset test;
  Network net;
};

/// Generates and splits the dataset, then trains the target, with seeds derived from cfg.seed.
/// Errors carry the stage ("data" or "train") as a prefix.
inline PreparedTarget prepare_target(const ExperimentConfig& cfg) {
  PreparedTarget t;
  try {
    SyntheticSpec spec = cfg.dataset;
    if (!cfg.dataset_seed_given) spec.seed = derive_seed(cfg.seed, {tag_hash("data")});
    const auto all = generate(spec);
    std::tie(t.train, t.test) = split(all, cfg.train_fraction, derive_seed(cfg.seed, {tag_hash("split")}));
  } catch (const Error& e) {
    rethrow_tagged("data", e);
  }
  try {
    TrainConfig tc = cfg.target_train;
    tc.seed = derive_seed(cfg.seed, {tag_hash("target-train")});
    t.net = train(make_architecture(cfg.target_arch, t.train.d, t.train.c,
                                    derive_seed(cfg.seed, {tag_hash("target-init")})),
                  t.train, tc);
  } catch (const Error& e) {
    rethrow_tagged("train", e);
  }
  return t;
}

/// Trains the target, builds the suspect suite, then extracts and scores a fingerprint for
/// every sweep value of every method. The best value per method maximizes ARUC (first wins).
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  ExperimentReport rep;
  rep.seed = cfg.seed;
  rep.config = cfg.source;

  auto [train_data, test_data, target] = prepare_target(cfg);
  rep.target_digest = model_digest(target);
  rep.target_test_accuracy = accuracy(target, test_data);
  rep.target_train_accuracy = accuracy(target, train_data);
  SuspectSet suite;
  try {
    SuiteConfig sc = cfg.suite;
    sc.seed = derive_seed(cfg.seed, {tag_hash("suite")});
    sc.threads = cfg.threads;
    suite = build_suspect_suite(target, train_data, test_data, sc);
    if (suite.count(SuspectTag::positive) == 0 || suite.count(SuspectTag::negative) == 0)
      throw InputError("suite needs both positive and negative suspects");
  } catch (const Error& e) {
    rethrow_tagged("suite", e);
  }
  for (const auto& e : suite.entries) rep.suspects.push_back({e.kind, e.tag, e.fraction, e.test_accuracy});

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const auto& sweep = cfg.methods[mi];
    SweepResult sr;
    sr.method = sweep.base.tag();
    sr.parameter = sweep.parameter;
    sr.values = sweep.values;
    const std::size_t count = sweep.values.empty() ? 1 : sweep.values.size();
    for (std::size_t vi = 0; vi < count; ++vi) {
      ExtractConfig ec = sweep.base;
      if (sweep.parameter == "k") ec.k = sweep.values[vi];
      if (sweep.parameter == "epsilon") ec.epsilon = sweep.values[vi];
      if (ec.method == Method::igsm) ec.alpha = std::min(ec.alpha, ec.epsilon);
      ec.seed = derive_seed(cfg.seed, {tag_hash("extract"), mi});
      ec.threads = cfg.threads;
      try {
        const auto start = std::chrono::steady_clock::now();
        const auto fp = extract(target, &train_data, ec);
        const auto stop = std::chrono::steady_clock::now();
        auto er = evaluate(fp, suite, cfg.r, cfg.threads);
        er.extraction_seconds = std::chrono::duration<double>(stop - start).count();
        sr.reports.push_back(std::move(er));
      } catch (const Error& e) {
        rethrow_tagged("extract/" + sr.method, e);
      }
    }
    for (std::size_t vi = 1; vi < sr.reports.size(); ++vi)
      if (sr.reports[vi].aruc > sr.reports[sr.best_index].aruc) sr.best_index = vi;
    rep.sweeps.push_back(std::move(sr));
  }

  if (!cfg.output_dir.empty()) {
    try {
      std::filesystem::create_directories(cfg.output_dir);
      write_file((std::filesystem::path(cfg.output_dir) / "report.json").string(), to_json(rep).dump(1) + "\n");
    } catch (const std::filesystem::filesystem_error& e) {
      throw Error(ErrorKind::input, std::string("report: ") + e.what());
    }
  }
  return rep;
}

}  // namespace ipguard
