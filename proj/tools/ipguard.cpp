// Command-line front end: data, train, suite, extract, verify, evaluate, experiment.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "ipguard/ipguard.hpp"

namespace {

using nlohmann::json;
using namespace ipguard;

struct CsvArgs {
  std::string path;
  bool header = false;
  bool no_rescale = false;
  std::size_t classes = 0;

  void add_to(CLI::App* cmd, const std::string& flag = "--data") {
    cmd->add_option(flag, path, "CSV file: feature columns then an integer label")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--header", header, "CSV has a header row");
    cmd->add_flag("--no-rescale", no_rescale, "Keep features as-is (they must already lie in [0,1])");
    cmd->add_option("--classes", classes, "Class count (default: max label + 1)");
  }

  Dataset load() const {
    CsvOptions o;
    o.header = header;
    o.rescale = !no_rescale;
    if (classes > 0) o.num_classes = classes;
    return load_csv(path, o).data;
  }

  json echo() const { return {{"path", path}, {"header", header}, {"rescale", !no_rescale}, {"classes", classes}}; }
};

void echo_config(const std::string& command, const json& cfg) {
  std::cerr << json{{"command", command}, {"config", cfg}}.dump() << '\n';
}

void check_output_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw InputError("output directory '" + parent.string() + "' does not exist");
}

struct MethodSpec {
  Method method;
  std::optional<InitStrategy> init;
  std::optional<LabelStrategy> label;
};

/// Accepts "ipguard", "cw-TL", "igsm-RR", ...
MethodSpec parse_method(const std::string& text) {
  try {
    const auto dash = text.find('-');
    MethodSpec spec{method_from_string(text.substr(0, dash)), std::nullopt, std::nullopt};
    if (dash != std::string::npos) {
      const std::string suffix = text.substr(dash + 1);
      if (suffix.size() != 2) throw UsageError("strategy suffix must be one of -TR, -TL, -RR, -RL");
      spec.init = init_strategy_from_string(suffix.substr(0, 1));
      spec.label = label_strategy_from_string(suffix.substr(1, 1));
    }
    return spec;
  } catch (const InputError& e) {
    throw UsageError(std::string("--method: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary fingerprinting of classifiers: extract, verify and evaluate"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: BMK_THREADS or all cores)");

  // data
  auto* data_cmd = app.add_subcommand("data", "Generate a synthetic dataset as CSV plus a manifest");
  SyntheticSpec synth;
  std::string synth_kind = "blobs";
  std::string data_out;
  data_cmd->add_option("--kind", synth_kind, "blobs | moons | spirals");
  data_cmd->add_option("--n-per-class", synth.n_per_class);
  data_cmd->add_option("--classes", synth.c);
  data_cmd->add_option("--dim", synth.d);
  data_cmd->add_option("--noise", synth.noise_sigma);
  data_cmd->add_option("--seed", synth.seed)->required();
  data_cmd->add_option("--out", data_out, "Output CSV path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a target network and save it");
  CsvArgs train_csv;
  train_csv.add_to(train_cmd);
  TrainConfig train_cfg;
  std::string arch = "small-MLP";
  std::string optimizer = "adam";
  std::string train_out;
  train_cmd->add_option("--arch", arch, "small-MLP | tiny-MLP");
  train_cmd->add_option("--optimizer", optimizer, "adam | sgd");
  train_cmd->add_option("--lr", train_cfg.learning_rate);
  train_cmd->add_option("--epochs", train_cfg.epochs);
  train_cmd->add_option("--batch-size", train_cfg.batch_size);
  train_cmd->add_option("--l2", train_cfg.l2_penalty);
  train_cmd->add_option("--seed", train_cfg.seed)->required();
  train_cmd->add_option("--out", train_out, "Model file")->required();

  // suite
  auto* suite_cmd = app.add_subcommand("suite", "Build positive and negative suspect classifiers");
  std::string suite_model, suite_out;
  CsvArgs suite_csv;
  suite_csv.add_to(suite_cmd);
  double suite_test_fraction = 0.2;
  SuiteConfig suite_cfg;
  double ft_lr = 0.001;
  std::size_t ft_epochs = 0;
  suite_cmd->add_option("--model", suite_model, "Target model file")->required()->check(CLI::ExistingFile);
  suite_cmd->add_option("--test-fraction", suite_test_fraction, "Held-out share used to measure accuracy");
  suite_cmd->add_option("--n-same-arch", suite_cfg.n_same_arch);
  suite_cmd->add_option("--n-diff-arch", suite_cfg.n_diff_arch);
  suite_cmd->add_option("--n-forests", suite_cfg.n_forests);
  suite_cmd->add_option("--trees", suite_cfg.n_trees);
  suite_cmd->add_option("--epochs", suite_cfg.retrain.epochs, "Epochs for networks trained from scratch");
  suite_cmd->add_option("--lr", suite_cfg.retrain.learning_rate, "Learning rate for networks trained from scratch");
  suite_cmd->add_option("--ft-lr", ft_lr, "Fine-tuning learning rate");
  suite_cmd->add_option("--ft-epochs", ft_epochs, "Fine-tuning epochs (default: 20% of --epochs)");
  suite_cmd->add_option("--max-acc-loss", suite_cfg.max_acc_loss);
  suite_cmd->add_option("--seed", suite_cfg.seed)->required();
  suite_cmd->add_option("--out", suite_out, "Output directory")->required();

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "Extract a fingerprint from a target network");
  std::string extract_model, extract_out, method_text = "ipguard", init_text, label_text;
  std::string extract_data;
  bool extract_header = false, extract_no_rescale = false;
  ExtractConfig ec;
  extract_cmd->add_option("--model", extract_model, "Target model file")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--data", extract_data, "Training CSV (needed for T initialization)")
      ->check(CLI::ExistingFile);
  extract_cmd->add_flag("--header", extract_header);
  extract_cmd->add_flag("--no-rescale", extract_no_rescale);
  extract_cmd->add_option("--method", method_text, "ipguard | random | fgsm | igsm | cw, optionally -TR/-TL/-RR/-RL");
  extract_cmd->add_option("--n", ec.n);
  extract_cmd->add_option("--k", ec.k);
  extract_cmd->add_option("--epsilon", ec.epsilon);
  extract_cmd->add_option("--alpha", ec.alpha);
  extract_cmd->add_option("--lr", ec.lr);
  extract_cmd->add_option("--max-iters", ec.max_iters);
  extract_cmd->add_option("--init", init_text, "T | R")->check(CLI::IsMember({"T", "R"}));
  extract_cmd->add_option("--label", label_text, "R | L")->check(CLI::IsMember({"R", "L"}));
  extract_cmd->add_option("--cw-steps", ec.cw.binary_search_steps);
  extract_cmd->add_option("--cw-c", ec.cw.c_init);
  extract_cmd->add_option("--cw-iters", ec.cw.inner_iters);
  extract_cmd->add_option("--seed", ec.seed)->required();
  extract_cmd->add_option("--out", extract_out, "Fingerprint JSON")->required();

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "Verify one suspect against a fingerprint");
  std::string verify_fp, verify_model, verify_remote, verify_calibration, verify_out;
  std::optional<double> tau;
  RemoteOracleConfig remote;
  verify_cmd->add_option("--fingerprint", verify_fp)->required()->check(CLI::ExistingFile);
  auto* model_opt = verify_cmd->add_option("--model", verify_model, "Suspect model file")->check(CLI::ExistingFile);
  auto* remote_opt = verify_cmd->add_option("--remote", verify_remote, "Command serving label queries on stdin/stdout");
  model_opt->excludes(remote_opt);
  verify_cmd->add_option("--remote-dim", remote.input_dim, "Dimension the remote expects (0: it adapts)");
  verify_cmd->add_option("--timeout-ms", remote.timeout_ms);
  verify_cmd->add_option("--retries", remote.retries);
  verify_cmd->add_option("--tau", tau, "Matching-rate threshold");
  verify_cmd->add_option("--calibration", verify_calibration, "Evaluation report carrying calibrated_tau")
      ->check(CLI::ExistingFile);
  verify_cmd->add_option("--out", verify_out, "Also write the verdict JSON here");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a fingerprint against a suspect suite");
  std::string eval_fp, eval_suite, eval_out, eval_format = "json";
  int eval_r = 100;
  eval_cmd->add_option("--fingerprint", eval_fp)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--suite", eval_suite, "Suite manifest.json")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--r", eval_r, "Threshold grid intervals");
  eval_cmd->add_option("--format", eval_format, "json | csv");
  eval_cmd->add_option("--out", eval_out)->required();

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a full experiment from a JSON config");
  std::string exp_config, exp_out;
  std::optional<std::uint64_t> exp_seed;
  exp_cmd->add_option("--config", exp_config)->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--seed", exp_seed, "Override the config seed");
  exp_cmd->add_option("--out", exp_out, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const unsigned workers = resolve_threads(threads);
  std::string stage = "cli";
  try {
    if (data_cmd->parsed()) {
      stage = "data";
      synth.kind = synthetic_kind_from_string(synth_kind);
      check_output_parent(data_out);
      const auto data = generate(synth);
      emit_csv(data, data_out);
      const std::string manifest = data_out + ".manifest.json";
      write_file(manifest, dataset_manifest(data, synth, {}).dump(1) + "\n");
      echo_config("data", to_json(synth));
      std::cout << json{{"points", data.size()}, {"d", data.d}, {"c", data.c}, {"csv", data_out},
                        {"manifest", manifest}}.dump()
                << '\n';
    } else if (train_cmd->parsed()) {
      stage = "train";
      train_cfg.optimizer = optimizer == "sgd" ? Optimizer::sgd : Optimizer::adam;
      if (optimizer != "sgd" && optimizer != "adam") throw UsageError("--optimizer must be adam or sgd");
      check_output_parent(train_out);
      const auto data = train_csv.load();
      const auto init = make_architecture(arch, data.d, data.c, derive_seed(train_cfg.seed, {tag_hash("init")}));
      const auto net = train(init, data, train_cfg);
      save_model(net, train_out);
      echo_config("train", {{"data", train_csv.echo()}, {"arch", arch}, {"train", to_json(train_cfg)}});
      std::cout << json{{"model", train_out}, {"train_accuracy", accuracy(net, data)}, {"digest", model_digest(net)}}
                       .dump()
                << '\n';
    } else if (suite_cmd->parsed()) {
      stage = "suite";
      const auto target = load_model(suite_model);
      const auto data = suite_csv.load();
      const auto [tr, te] = split(data, 1.0 - suite_test_fraction, derive_seed(suite_cfg.seed, {tag_hash("split")}));
      suite_cfg.finetune = default_finetune(suite_cfg.retrain);
      suite_cfg.finetune.learning_rate = ft_lr;
      if (ft_epochs > 0) suite_cfg.finetune.epochs = ft_epochs;
      suite_cfg.threads = workers;
      const auto set = build_suspect_suite(target, tr, te, suite_cfg);
      const auto manifest = save_suite(set, suite_out);
      echo_config("suite", {{"model", suite_model},
                            {"data", suite_csv.echo()},
                            {"test_fraction", suite_test_fraction},
                            {"n_same_arch", suite_cfg.n_same_arch},
                            {"n_diff_arch", suite_cfg.n_diff_arch},
                            {"n_forests", suite_cfg.n_forests},
                            {"trees", suite_cfg.n_trees},
                            {"retrain", to_json(suite_cfg.retrain)},
                            {"finetune", to_json(suite_cfg.finetune)},
                            {"max_acc_loss", suite_cfg.max_acc_loss},
                            {"seed", suite_cfg.seed}});
      std::cout << json{{"manifest", manifest},
                        {"positives", set.count(SuspectTag::positive)},
                        {"negatives", set.count(SuspectTag::negative)}}
                       .dump()
                << '\n';
    } else if (extract_cmd->parsed()) {
      stage = "extract";
      const auto spec = parse_method(method_text);
      ec.method = spec.method;
      if (spec.init) ec.init = *spec.init;
      if (spec.label) ec.label = *spec.label;
      if (!init_text.empty()) {
        const auto v = init_strategy_from_string(init_text);
        if (spec.init && *spec.init != v) throw UsageError("--init conflicts with the method suffix");
        ec.init = v;
      }
      if (!label_text.empty()) {
        const auto v = label_strategy_from_string(label_text);
        if (spec.label && *spec.label != v) throw UsageError("--label conflicts with the method suffix");
        ec.label = v;
      }
      ec.threads = workers;
      check_output_parent(extract_out);
      const auto target = load_model(extract_model);
      std::optional<Dataset> data;
      if (!extract_data.empty()) {
        CsvOptions o;
        o.header = extract_header;
        o.rescale = !extract_no_rescale;
        o.num_classes = target.num_classes();
        data = load_csv(extract_data, o).data;
      } else if (ec.method != Method::random && ec.init == InitStrategy::training) {
        throw UsageError("--data is required for training-example (T) initialization");
      }
      const auto fp = extract(target, data ? &*data : nullptr, ec);
      save_fingerprint(fp, extract_out);
      std::size_t converged = 0;
      for (bool c : fp.converged) converged += c ? 1 : 0;
      json cfg_echo = to_json(ec);
      cfg_echo["method"] = to_string(ec.method);
      cfg_echo["n"] = ec.n;
      cfg_echo["seed"] = ec.seed;
      cfg_echo["model"] = extract_model;
      if (!extract_data.empty()) cfg_echo["data"] = extract_data;
      echo_config("extract", cfg_echo);
      std::cout << json{{"fingerprint", extract_out}, {"method", ec.tag()}, {"n", fp.size()}, {"converged", converged}}
                       .dump()
                << '\n';
    } else if (verify_cmd->parsed()) {
      stage = "verify";
      if (!tau && verify_calibration.empty())
        throw UsageError("verify needs --tau or a --calibration report");
      if (verify_model.empty() && verify_remote.empty()) throw UsageError("verify needs --model or --remote");
      double threshold = 0.0;
      if (tau) {
        threshold = *tau;
      } else {
        threshold = eval_report_from_json(json::parse(read_file(verify_calibration))).calibrated_tau;
      }
      const auto fp = load_fingerprint(verify_fp);
      std::shared_ptr<const ClassifierOracle> oracle;
      if (!verify_model.empty()) {
        oracle = make_oracle(load_any_model(verify_model));
      } else {
        std::istringstream words(verify_remote);
        for (std::string w; words >> w;) remote.command.push_back(w);
        oracle = std::make_shared<SubprocessOracle>(remote);
      }
      const auto verdict = verify(fp, *oracle, threshold, workers);
      echo_config("verify", {{"fingerprint", verify_fp},
                             {"model", verify_model},
                             {"remote", verify_remote},
                             {"tau", threshold},
                             {"calibration", verify_calibration}});
      const std::string text = to_json(verdict).dump();
      if (!verify_out.empty()) write_file(verify_out, text + "\n");
      std::cout << text << '\n';
    } else if (eval_cmd->parsed()) {
      stage = "evaluate";
      check_output_parent(eval_out);
      if (eval_format != "json" && eval_format != "csv") throw UsageError("--format must be json or csv");
      const auto fp = load_fingerprint(eval_fp);
      const auto suite = load_suite(eval_suite);
      const auto report = evaluate(fp, suite, eval_r, workers);
      emit_report(report, eval_format, eval_out);
      echo_config("evaluate", {{"fingerprint", eval_fp}, {"suite", eval_suite}, {"r", eval_r}, {"format", eval_format}});
      std::cout << json{{"report", eval_out},
                        {"aruc", report.aruc},
                        {"auc", report.auc},
                        {"gap", report.gap},
                        {"calibrated_tau", report.calibrated_tau}}
                       .dump()
                << '\n';
    } else if (exp_cmd->parsed()) {
      stage = "experiment";
      json j;
      try {
        j = json::parse(read_file(exp_config));
      } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
      }
      if (exp_seed) j["seed"] = *exp_seed;
      if (!exp_out.empty()) j["output_dir"] = exp_out;
      if (!j.contains("output_dir")) j["output_dir"] = "out";
      auto cfg = experiment_config_from_json(j);
      cfg.threads = workers;
      const auto report = run_experiment(cfg);
      echo_config("experiment", j);
      json summary{{"report", (std::filesystem::path(cfg.output_dir) / "report.json").string()}};
      for (const auto& s : report.sweeps) summary["best_aruc"][s.method] = s.reports[s.best_index].aruc;
      std::cout << summary.dump() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "ipguard " << stage << ": " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "ipguard " << stage << ": " << e.what() << '\n';
    return 3;
  }
  return 0;
}
