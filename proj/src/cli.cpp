#include "vsdoa/cli.hpp"

#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "vsdoa/binary_io.hpp"
#include "vsdoa/dataset.hpp"
#include "vsdoa/errors.hpp"
#include "vsdoa/evaluation.hpp"
#include "vsdoa/features.hpp"
#include "vsdoa/nn.hpp"
#include "vsdoa/pipeline.hpp"

namespace vsdoa::cli {

using nlohmann::json;
namespace fs = std::filesystem;

FieldOfView parse_fov(const std::string& text) {
  if (text == "full") return FieldOfView::full();
  if (text == "limited") return FieldOfView::limited();
  const auto comma = text.find(',');
  if (comma == std::string::npos) {
    throw ConfigError("--fov expects full, limited or elo:ehi,alo:ahi, got '" + text + "'");
  }
  const auto [elo, ehi] = parse_range(text.substr(0, comma));
  const auto [alo, ahi] = parse_range(text.substr(comma + 1));
  FieldOfView f{elo, ehi, alo, ahi};
  f.validate();
  return f;
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("not a number in range '" + text + "'");
    return v;
  };
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const double v = to_double(text);
    return {v, v};
  }
  const double lo = to_double(text.substr(0, colon));
  const double hi = to_double(text.substr(colon + 1));
  if (lo > hi) throw ConfigError("range '" + text + "' has lo > hi");
  return {lo, hi};
}

fs::path resolve_data_path(const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  const char* dir = std::getenv(kDataDirEnv);
  if (dir == nullptr || *dir == '\0') return p;
  return fs::path(dir) / p;
}

namespace {

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError("bad list element '" + item + "' in '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

json read_json(const fs::path& path) {
  const auto raw = io::read_file(path);
  try {
    return json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { io::write_text_atomic(path, j.dump(2) + "\n"); }

// Defaults, then config file, then flags. Flags record into `overrides`
// only when given on the command line.
struct Resolver {
  json overrides = json::object();
  std::string config_file;

  template <class T>
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& desc) {
    return app->add_option_function<T>(
        flag, [this, pointer](const T& v) { overrides[json::json_pointer(pointer)] = v; }, desc);
  }

  CLI::Option* bind_range(CLI::App* app, const std::string& flag, const std::string& pointer,
                          const std::string& desc) {
    return app->add_option_function<std::string>(
        flag,
        [this, pointer](const std::string& v) {
          const auto [lo, hi] = parse_range(v);
          overrides[json::json_pointer(pointer)] = {lo, hi};
        },
        desc);
  }

  void add_config_flag(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file (flags take precedence)");
  }

  json resolve(json defaults) const {
    if (!config_file.empty()) defaults.merge_patch(read_json(resolve_data_path(config_file)));
    defaults.merge_patch(overrides);
    return defaults;
  }
};

json architecture_json(const ArchitectureOptions& a) { return {{"hidden", a.hidden}, {"init_seed", a.init_seed}}; }

ArchitectureOptions architecture_from_json(const json& j) {
  ArchitectureOptions a;
  try {
    a.hidden = j.value("hidden", a.hidden);
    a.init_seed = j.value("init_seed", a.init_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed architecture config: ") + e.what());
  }
  if (a.hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int h : a.hidden) {
    if (h < 1) throw ConfigError("hidden layer widths must be positive");
  }
  return a;
}

json training_defaults() {
  return {{"training", nn::to_json(nn::TrainOptions{})},
          {"architecture", architecture_json({})},
          {"split", {{"fractions", {0.8, 0.1, 0.1}}, {"seed", 0}}}};
}

void add_training_flags(CLI::App* app, Resolver& r) {
  r.add_config_flag(app);
  r.bind<int>(app, "--epochs", "/training/max_epochs", "Maximum epochs");
  r.bind<int>(app, "--batch", "/training/batch_size", "Mini-batch size");
  r.bind<double>(app, "--lr", "/training/learning_rate", "Adam step size");
  r.bind<double>(app, "--lr-decay", "/training/lr_decay", "Step size multiplier per epoch");
  r.bind<double>(app, "--dropout", "/training/dropout", "Dropout probability");
  r.bind<int>(app, "--patience", "/training/patience", "Early-stopping patience (epochs)");
  r.bind<std::string>(app, "--loss", "/training/loss", "mse_angles | chordal");
  r.bind<int>(app, "--warmup", "/training/mse_warmup_epochs", "Epochs of MSE before the main loss");
  app->add_option_function<std::uint64_t>(
      "--seed",
      [&r](std::uint64_t s) {
        r.overrides["training"]["seed"] = s;
        r.overrides["architecture"]["init_seed"] = s;
      },
      "Seed for initialization and batch order");
  app->add_option_function<std::string>(
      "--hidden", [&r](const std::string& v) { r.overrides["architecture"]["hidden"] = parse_list<int>(v); },
      "Hidden widths, e.g. 128,128,128");
  app->add_option_function<std::string>(
      "--split",
      [&r](const std::string& v) {
        const auto f = parse_list<double>(v);
        if (f.size() != 3) throw ConfigError("--split expects train,validation,test fractions");
        r.overrides["split"]["fractions"] = f;
      },
      "Train,validation,test fractions");
  r.bind<std::uint64_t>(app, "--split-seed", "/split/seed", "Seed of the shuffled split");
}

struct TrainingSetup {
  nn::TrainOptions train;
  ArchitectureOptions arch;
  std::array<double, 3> fractions{};
  std::uint64_t split_seed = 0;
};

TrainingSetup training_setup(const json& cfg) {
  TrainingSetup s;
  s.train = nn::train_options_from_json(cfg.at("training"));
  s.train.validate();
  s.arch = architecture_from_json(cfg.at("architecture"));
  try {
    const auto f = cfg.at("split").at("fractions").get<std::vector<double>>();
    if (f.size() != 3) throw ConfigError("split fractions must have three entries");
    s.fractions = {f[0], f[1], f[2]};
    s.split_seed = cfg.at("split").at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed split config: ") + e.what());
  }
  return s;
}

std::vector<std::vector<DoA>> truths_of(const LabeledDataset& ds) {
  std::vector<std::vector<DoA>> t;
  for (std::size_t i = 0; i < ds.size(); ++i) t.push_back(ds.doas(i));
  return t;
}

json doas_json(const std::vector<DoA>& doas) {
  json a = json::array();
  for (const DoA& d : doas) a.push_back({{"elevation_deg", d.elevation_deg()}, {"azimuth_deg", d.azimuth_deg()}});
  return a;
}

void print_metrics(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(3) << "  scored " << r.scored_samples << "/" << r.samples
      << "  elevation MAE " << r.elevation.mae << " RMSE " << r.elevation.rmse << "  azimuth MAE " << r.azimuth.mae
      << " RMSE " << r.azimuth.rmse << " (deg)\n";
  out.unsetf(std::ios::floatfield);
}

void print_confusion(std::ostream& out, const ConfusionMatrix& c) {
  out << "  truth\\pred      1      2      3      4      5\n";
  for (int t = 1; t <= ConfusionMatrix::kClasses; ++t) {
    out << "  " << std::setw(10) << t;
    for (int p = 1; p <= ConfusionMatrix::kClasses; ++p) out << std::setw(7) << c.at(t, p);
    out << '\n';
  }
  out << "  accuracy " << c.accuracy() << ", share of errors between 4 and 5: " << c.pair45_error_fraction() << '\n';
}

// ---- generate ------------------------------------------------------------

struct GenerateCmd {
  Resolver r;
  std::string output;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());

  void setup(CLI::App* app) {
    r.add_config_flag(app);
    r.bind<int>(app, "--k", "/generation/num_sources", "Sources per sample (1..5)");
    app->add_flag_function("--mixed", [this](std::int64_t) { r.overrides["generation"]["mixed"] = true; },
                           "Classifier data: sample i has 1 + i%5 sources");
    r.bind<std::size_t>(app, "--samples", "/generation/samples", "Number of samples");
    r.bind<std::size_t>(app, "--snapshots", "/generation/snapshots", "Snapshots per sample (N)");
    r.bind_range(app, "--snr", "/generation/snr_db", "SNR range in dB, lo:hi");
    app->add_flag_function("--noiseless", [this](std::int64_t) { r.overrides["generation"]["noiseless"] = true; },
                           "Omit the noise term");
    r.bind_range(app, "--power-ratio", "/generation/power_ratio_db", "Power of sources 2..K relative to 1, lo:hi dB");
    app->add_option_function<std::string>(
        "--fov", [this](const std::string& v) { r.overrides["generation"]["fov"] = to_json(parse_fov(v)); },
        "full | limited | elo:ehi,alo:ahi (degrees)");
    r.bind<std::string>(app, "--waveform", "/generation/waveform", "digital | single_tone");
    app->add_option_function<double>(
        "--gamma", [this](double deg) { r.overrides["generation"]["polarization_rad"]["gamma"] = deg2rad(deg); },
        "Polarization auxiliary angle (degrees)");
    app->add_option_function<double>(
        "--eta", [this](double deg) { r.overrides["generation"]["polarization_rad"]["eta"] = deg2rad(deg); },
        "Polarization phase difference (degrees)");
    r.bind<std::uint64_t>(app, "--seed", "/generation/master_seed", "Master seed");
    app->add_option("--workers", workers, "Generator threads (output does not depend on it)")
        ->check(CLI::PositiveNumber);
    app->add_option("-o,--output", output, "Output dataset file")->required();
  }

  int exec(std::ostream& out) {
    json defaults{{"generation", to_json(GenerationConfig{})}};
    const json cfg = r.resolve(defaults);
    const GenerationConfig gc = generation_config_from_json(cfg.at("generation"));
    gc.validate();
    const LabeledDataset ds = generate(gc, workers);
    const fs::path path = resolve_data_path(output);
    save(ds, path);
    out << "wrote " << ds.size() << " samples (" << (gc.mixed ? "mixed K" : "K=" + std::to_string(gc.num_sources))
        << ") to " << path.string() << '\n';
    return kOk;
  }
};

// ---- train-estimator / train-classifier ------------------------------------

struct TrainCmd {
  bool classifier = false;
  Resolver r;
  int k = 0;
  std::string data, output, history, report;

  void setup(CLI::App* app) {
    add_training_flags(app, r);
    if (!classifier) app->add_option("--k", k, "Number of sources of the estimator")->required()->check(CLI::Range(1, 5));
    app->add_option("--data", data, classifier ? "Mixed dataset file" : "Per-K dataset file")->required();
    app->add_option("-o,--output", output, "Output model file")->required();
    app->add_option("--history", history, "Write the training history as JSON");
    app->add_option("--report", report, "Write the held-out evaluation report as JSON");
  }

  int exec(std::ostream& out) {
    const json cfg = r.resolve(training_defaults());
    const TrainingSetup s = training_setup(cfg);
    const LabeledDataset ds = load(resolve_data_path(data));
    const SplitResult parts = split(ds, s.fractions, s.split_seed);

    nn::TrainResult res = classifier ? train_classifier(parts.train, parts.validation, s.train, s.arch)
                                     : train_estimator(k, parts.train, parts.validation, s.train, s.arch);
    res.model.training_echo["run"] = cfg;
    res.model.training_echo["history"] = nn::to_json(res.history);
    nn::save_model(res.model, resolve_data_path(output));
    out << "trained " << (classifier ? "classifier" : "estimator K=" + std::to_string(k)) << ": "
        << res.history.stopped_epoch << " epochs, best epoch " << res.history.best_epoch << '\n';

    EvalReport rep;
    if (parts.test.size() > 0) {
      if (classifier) {
        const Eigen::MatrixXd probs = classify(res.model, parts.test.feature_matrix());
        ConfusionMatrix cm;
        for (Eigen::Index c = 0; c < probs.cols(); ++c) {
          Eigen::Index best = 0;
          probs.col(c).maxCoeff(&best);
          cm.add(parts.test.count(static_cast<std::size_t>(c)), static_cast<int>(best) + 1);
        }
        rep.samples = parts.test.size();
        rep.confusion = cm;
        print_confusion(out, cm);
      } else {
        rep = evaluate_estimator(res.model, parts.test);
        print_metrics(out, rep);
      }
      rep.config["run"] = cfg;
    }
    if (!history.empty()) write_json(resolve_data_path(history), nn::to_json(res.history));
    if (!report.empty()) write_json(resolve_data_path(report), to_json(rep));
    return kOk;
  }
};

// ---- train-system ------------------------------------------------------

struct TrainSystemCmd {
  Resolver r;
  std::string classifier_data, classifier_model, output;
  std::vector<std::string> estimator_data, estimator_model;

  void setup(CLI::App* app) {
    add_training_flags(app, r);
    app->add_option("--classifier-data", classifier_data, "Mixed dataset for the classifier");
    app->add_option("--classifier-model", classifier_model, "Use an already trained classifier");
    app->add_option("--estimator-data", estimator_data, "K=path per-K dataset (repeatable)");
    app->add_option("--estimator-model", estimator_model, "K=path already trained estimator (repeatable)");
    app->add_option("-o,--output", output, "Output system directory")->required();
  }

  static std::map<int, std::string> parse_pairs(const std::vector<std::string>& items, const char* flag) {
    std::map<int, std::string> m;
    for (const std::string& it : items) {
      const auto eq = it.find('=');
      int key = 0;
      try {
        key = eq == std::string::npos ? 0 : std::stoi(it.substr(0, eq));
      } catch (const std::exception&) {
        key = 0;
      }
      if (key < 1 || key > kMaxSources) throw ConfigError(std::string(flag) + " expects K=path with K in 1..5");
      if (!m.emplace(key, it.substr(eq + 1)).second) {
        throw ConfigError(std::string(flag) + " repeats K=" + std::to_string(key));
      }
    }
    return m;
  }

  int exec(std::ostream& out) {
    const json cfg = r.resolve(training_defaults());
    const TrainingSetup s = training_setup(cfg);
    if (classifier_data.empty() == classifier_model.empty()) {
      throw ConfigError("give exactly one of --classifier-data and --classifier-model");
    }
    const auto data = parse_pairs(estimator_data, "--estimator-data");
    const auto models = parse_pairs(estimator_model, "--estimator-model");
    for (int k = 1; k <= kMaxSources; ++k) {
      if (data.count(k) + models.count(k) != 1) {
        throw ConfigError("K=" + std::to_string(k) + " needs exactly one estimator dataset or model");
      }
    }

    DoaSystem system;
    if (!classifier_model.empty()) {
      system.classifier = nn::load_model(resolve_data_path(classifier_model));
    } else {
      const SplitResult parts = split(load(resolve_data_path(classifier_data)), s.fractions, s.split_seed);
      nn::TrainResult res = train_classifier(parts.train, parts.validation, s.train, s.arch);
      res.model.training_echo["run"] = cfg;
      res.model.training_echo["history"] = nn::to_json(res.history);
      out << "classifier: " << res.history.stopped_epoch << " epochs\n";
      system.classifier = std::move(res.model);
    }
    for (int k = 1; k <= kMaxSources; ++k) {
      if (auto it = models.find(k); it != models.end()) {
        system.estimators.emplace(k, nn::load_model(resolve_data_path(it->second)));
        continue;
      }
      const SplitResult parts = split(load(resolve_data_path(data.at(k))), s.fractions, s.split_seed);
      nn::TrainResult res = train_estimator(k, parts.train, parts.validation, s.train, s.arch);
      res.model.training_echo["run"] = cfg;
      res.model.training_echo["history"] = nn::to_json(res.history);
      out << "estimator K=" << k << ": " << res.history.stopped_epoch << " epochs\n";
      system.estimators.emplace(k, std::move(res.model));
    }
    save_system(system, resolve_data_path(output));
    out << "wrote system to " << resolve_data_path(output).string() << '\n';
    return kOk;
  }
};

// ---- eval ----------------------------------------------------------------

struct EvalCmd {
  std::string system_dir, model, data, report, quiver, grid;
  GridSpec spec;

  void setup(CLI::App* app) {
    auto* sys = app->add_option("--system", system_dir, "System directory");
    auto* mod = app->add_option("--model", model, "Single estimator model file");
    sys->excludes(mod);
    app->add_option("--data", data, "Test dataset file")->required();
    app->add_option("--report", report, "Output JSON report");
    app->add_option("--quiver", quiver, "Output CSV, one row per (sample, source)");
    app->add_option("--grid", grid, "Output JSON of per-cell mean errors");
    app->add_option("--elevation-bins", spec.elevation_bins, "Region grid rows")->check(CLI::PositiveNumber);
    app->add_option("--azimuth-bins", spec.azimuth_bins, "Region grid columns")->check(CLI::PositiveNumber);
  }

  int exec(std::ostream& out) {
    if (system_dir.empty() == model.empty()) throw ConfigError("give exactly one of --system and --model");
    const LabeledDataset ds = load(resolve_data_path(data));
    if (ds.size() == 0) throw ConfigError("empty test set");
    const auto truths = truths_of(ds);
    const std::vector<double> snr(ds.snr_db.begin(), ds.snr_db.end());

    std::vector<std::vector<DoA>> preds;
    std::optional<ConfusionMatrix> cm;
    json echo{{"dataset", to_json(ds.config)}};
    if (!model.empty()) {
      const nn::MlpModel m = nn::load_model(resolve_data_path(model));
      if (m.head() != nn::HeadKind::regression) throw ConfigError("--model must be an estimator");
      if (ds.config.mixed || static_cast<int>(ds.label_slots) != m.output_dim()) {
        throw DimensionError("dataset labels do not match the model's output width");
      }
      preds = estimate_doas(m, ds.feature_matrix());
      echo["model"] = m.training_echo;
      echo["model_path"] = model;
    } else {
      const DoaSystem sys = load_system(resolve_data_path(system_dir));
      const auto p = predict_features(sys, ds.feature_matrix());
      ConfusionMatrix c;
      for (std::size_t i = 0; i < p.size(); ++i) {
        preds.push_back(p[i].doas);
        c.add(ds.count(i), p[i].k_hat);
      }
      cm = c;
      echo["system_path"] = system_dir;
    }

    EvalReport rep = evaluate(preds, truths, snr);
    rep.confusion = cm;
    rep.config = echo;
    print_metrics(out, rep);
    if (cm) print_confusion(out, *cm);

    if (!report.empty()) write_json(resolve_data_path(report), to_json(rep));
    if (!quiver.empty() || !grid.empty()) {
      std::vector<std::vector<DoA>> mp, mt;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].size() != truths[i].size()) continue;
        mp.push_back(preds[i]);
        mt.push_back(truths[i]);
      }
      const RegionAnalysis ra = region_analysis(mp, mt, spec);
      if (!quiver.empty()) write_quiver_csv(resolve_data_path(quiver), ra.records);
      if (!grid.empty()) write_json(resolve_data_path(grid), to_json(ra.grid));
    }
    return kOk;
  }
};

// ---- predict -------------------------------------------------------------

SnapshotMatrix snapshots_from_json(const json& j) {
  try {
    const auto re = j.at("real").get<std::vector<std::vector<double>>>();
    const auto im = j.at("imag").get<std::vector<std::vector<double>>>();
    if (re.size() != kSensorChannels || im.size() != kSensorChannels) {
      throw DimensionError("snapshot input needs 6 rows of real and imaginary parts");
    }
    const std::size_t n = re[0].size();
    SnapshotMatrix x(kSensorChannels, static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < kSensorChannels; ++r) {
      if (re[r].size() != n || im[r].size() != n) throw DimensionError("snapshot rows differ in length");
      for (std::size_t c = 0; c < n; ++c) {
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cd(re[r][c], im[r][c]);
      }
    }
    if (n == 0) throw DimensionError("snapshot input has no columns");
    return x;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed snapshot input: ") + e.what());
  }
}

struct PredictCmd {
  std::string system_dir, data, input, output;
  std::vector<std::size_t> indices;
  bool cross_product = false;

  void setup(CLI::App* app) {
    app->add_option("--system", system_dir, "System directory")->required();
    auto* d = app->add_option("--data", data, "Dataset file; predicts from its stored features");
    auto* in = app->add_option("--input", input, "JSON snapshots {\"real\": 6xN, \"imag\": 6xN}");
    d->excludes(in);
    app->add_option("--index", indices, "Sample indices of --data (default: all)");
    app->add_flag("--cross-product", cross_product, "Also report the single-source cross-product estimate");
    app->add_option("-o,--output", output, "Output JSON (default: stdout)");
  }

  static json prediction_json(const Prediction& p) {
    return {{"k_hat", p.k_hat}, {"probabilities", p.probabilities}, {"doas", doas_json(p.doas)}};
  }

  int exec(std::ostream& out) {
    if (data.empty() == input.empty()) throw ConfigError("give exactly one of --data and --input");
    const DoaSystem sys = load_system(resolve_data_path(system_dir));
    json result{{"system_path", system_dir}, {"predictions", json::array()}};

    if (!input.empty()) {
      const SnapshotMatrix x = snapshots_from_json(read_json(resolve_data_path(input)));
      json p = prediction_json(predict(sys, x));
      if (cross_product) {
        const CrossProductEstimate cp = cross_product_doa(x);
        p["cross_product"] = {{"doa", doas_json({cp.doa})[0]},
                              {"confidence", cp.confidence},
                              {"low_confidence", cp.low_confidence}};
      }
      result["predictions"].push_back(p);
    } else {
      if (cross_product) throw ConfigError("--cross-product needs raw snapshots (--input)");
      const LabeledDataset ds = load(resolve_data_path(data));
      std::vector<std::size_t> idx = indices;
      if (idx.empty()) {
        for (std::size_t i = 0; i < ds.size(); ++i) idx.push_back(i);
      }
      for (std::size_t i : idx) {
        if (i >= ds.size()) throw ConfigError("--index " + std::to_string(i) + " is out of range");
      }
      const LabeledDataset sub = ds.subset(idx);
      const auto preds = predict_features(sys, sub.feature_matrix());
      for (std::size_t i = 0; i < preds.size(); ++i) {
        json p = prediction_json(preds[i]);
        p["index"] = idx[i];
        p["true_doas"] = doas_json(sub.doas(i));
        result["predictions"].push_back(p);
      }
    }
    if (output.empty()) {
      out << result.dump(2) << '\n';
    } else {
      write_json(resolve_data_path(output), result);
    }
    return kOk;
  }
};

// ---- inspect-knn ---------------------------------------------------------

struct KnnCmd {
  std::string data, output;
  std::size_t index = 0;
  std::size_t k = 5;
  bool include_self = false;

  void setup(CLI::App* app) {
    app->add_option("--data", data, "Dataset file")->required();
    app->add_option("--index", index, "Query sample index")->required();
    app->add_option("--k", k, "Number of neighbours")->check(CLI::PositiveNumber);
    app->add_flag("--include-self", include_self, "Let the query be its own neighbour");
    app->add_option("-o,--output", output, "Output JSON (default: stdout)");
  }

  int exec(std::ostream& out) {
    const LabeledDataset ds = load(resolve_data_path(data));
    json j = to_json(knn_fingerprint(ds, index, k, !include_self));
    j["dataset"] = to_json(ds.config);
    if (output.empty()) {
      out << j.dump(2) << '\n';
    } else {
      write_json(resolve_data_path(output), j);
    }
    return kOk;
  }
};

// ---- fov-cross -----------------------------------------------------------

struct FovCrossCmd {
  Resolver r;
  int k = 1;
  std::string full, limited, output;

  void setup(CLI::App* app) {
    add_training_flags(app, r);
    app->add_option("--k", k, "Number of sources")->check(CLI::Range(1, 5));
    app->add_option("--full", full, "Full-FoV dataset file")->required();
    app->add_option("--limited", limited, "Limited-FoV dataset file")->required();
    app->add_option("-o,--output", output, "Output JSON table");
  }

  int exec(std::ostream& out) {
    const json cfg = r.resolve(training_defaults());
    const TrainingSetup s = training_setup(cfg);
    const SplitResult f = split(load(resolve_data_path(full)), s.fractions, s.split_seed);
    const SplitResult l = split(load(resolve_data_path(limited)), s.fractions, s.split_seed);
    const FovCrossTable t =
        fov_cross_experiment(k, {&f.train, &f.validation, &f.test}, {&l.train, &l.validation, &l.test}, {s.train, s.arch});
    const char* names[2] = {"full", "limited"};
    out << "train/test        elev RMSE   az RMSE   overall\n";
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        const EvalReport& rep = t.reports[i][j];
        out << std::setw(8) << names[i] << "/" << std::left << std::setw(8) << names[j] << std::right << std::fixed
            << std::setprecision(3) << std::setw(11) << rep.elevation.rmse << std::setw(10) << rep.azimuth.rmse
            << std::setw(10) << rep.overall_rmse << '\n';
      }
    }
    out.unsetf(std::ios::floatfield);
    json j = to_json(t);
    j["run"] = cfg;
    if (!output.empty()) write_json(resolve_data_path(output), j);
    return kOk;
  }
};

// ---- tradeoff ------------------------------------------------------------

struct TradeoffCmd {
  std::string snr = "0,5,10", snapshots = "100,1000,10000", fov = "full", waveform = "digital", output;
  std::size_t trials = 50;
  int k = 1;
  std::uint64_t seed = 0;

  void setup(CLI::App* app) {
    app->add_option("--snr", snr, "Comma-separated SNR grid (dB)");
    app->add_option("--snapshots", snapshots, "Comma-separated snapshot counts");
    app->add_option("--trials", trials, "Random scenarios per cell")->check(CLI::PositiveNumber);
    app->add_option("--k", k, "Sources per scenario")->check(CLI::Range(1, 5));
    app->add_option("--fov", fov, "full | limited | elo:ehi,alo:ahi");
    app->add_option("--waveform", waveform, "digital | single_tone");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("-o,--output", output, "Output JSON");
  }

  int exec(std::ostream& out) {
    const auto snr_grid = parse_list<double>(snr);
    const auto n_grid = parse_list<std::size_t>(snapshots);
    TradeoffScenario sc;
    sc.num_sources = k;
    sc.fov = parse_fov(fov);
    sc.waveform = waveform_from_string(waveform);
    const auto cells = snapshot_snr_tradeoff(snr_grid, n_grid, trials, seed, sc);
    out << "  snr_db  snapshots  mean_feature_error  mean_sq_error\n";
    json rows = json::array();
    for (const TradeoffCell& c : cells) {
      out << std::setw(8) << c.snr_db << std::setw(11) << c.snapshots << std::setw(20) << c.mean_feature_error
          << std::setw(15) << c.mean_sq_error << '\n';
      rows.push_back({{"snr_db", c.snr_db},
                      {"snapshots", c.snapshots},
                      {"mean_feature_error", c.mean_feature_error},
                      {"mean_sq_error", c.mean_sq_error}});
    }
    if (!output.empty()) {
      write_json(resolve_data_path(output),
                 {{"cells", rows},
                  {"run",
                   {{"snr_db", snr_grid},
                    {"snapshots", n_grid},
                    {"trials", trials},
                    {"num_sources", k},
                    {"fov", to_json(sc.fov)},
                    {"waveform", waveform},
                    {"seed", seed}}}});
    }
    return kOk;
  }
};

int run_app(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vector-sensor DoA estimation: data generation, training and evaluation", "vsdoa"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vsdoa 1.0.0");

  GenerateCmd gen;
  TrainCmd est, cls;
  cls.classifier = true;
  TrainSystemCmd sys;
  EvalCmd ev;
  PredictCmd pred;
  KnnCmd knn;
  FovCrossCmd fov;
  TradeoffCmd trade;

  auto* c_gen = app.add_subcommand("generate", "Simulate a labeled dataset");
  auto* c_cls = app.add_subcommand("train-classifier", "Train the source-count classifier");
  auto* c_est = app.add_subcommand("train-estimator", "Train the DoA regressor for one K");
  auto* c_sys = app.add_subcommand("train-system", "Train or assemble the classifier and five estimators");
  auto* c_ev = app.add_subcommand("eval", "Evaluate a system or an estimator on a dataset");
  auto* c_pred = app.add_subcommand("predict", "Predict source count and DoAs");
  auto* c_knn = app.add_subcommand("inspect-knn", "Nearest neighbours of a sample in feature space");
  auto* c_fov = app.add_subcommand("fov-cross", "Full/limited FoV train-test table");
  auto* c_trade = app.add_subcommand("tradeoff", "Feature error over an SNR x snapshot grid");
  gen.setup(c_gen);
  cls.setup(c_cls);
  est.setup(c_est);
  sys.setup(c_sys);
  ev.setup(c_ev);
  pred.setup(c_pred);
  knn.setup(c_knn);
  fov.setup(c_fov);
  trade.setup(c_trade);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  if (c_gen->parsed()) return gen.exec(out);
  if (c_cls->parsed()) return cls.exec(out);
  if (c_est->parsed()) return est.exec(out);
  if (c_sys->parsed()) return sys.exec(out);
  if (c_ev->parsed()) return ev.exec(out);
  if (c_pred->parsed()) return pred.exec(out);
  if (c_knn->parsed()) return knn.exec(out);
  if (c_fov->parsed()) return fov.exec(out);
  if (c_trade->parsed()) return trade.exec(out);
  return kUsage;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto fail = [&err](const char* category, const std::string& msg, int code) {
    err << "error[" << category << "]: " << msg << '\n';
    return code;
  };
  try {
    return run_app(argc, argv, out, err);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const FormatError& e) {
    return fail("format", e.what(), kFormat);
  } catch (const DimensionError& e) {
    return fail("dimension", e.what(), kDimension);
  } catch (const TrainingError& e) {
    return fail("training", e.what(), kTraining);
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what(), kConfig);
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what(), kIo);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"vsdoa"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace vsdoa::cli
