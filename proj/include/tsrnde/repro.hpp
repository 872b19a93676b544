#ifndef TSRNDE_REPRO_HPP
#define TSRNDE_REPRO_HPP

// End-to-end experiments with pinned seeds:
//
//  synthetic-2class  two pure-class videos (semi-infinite vs. insulated
//                    plate cooling) and a composite outsample video,
//                    degree-8 features, 16/32/16 ReLU network.
//  surrogate-4class  four-quadrant delamination scene (0 / 0.1 / 0.2 /
//                    0.3 mm gaps at 5 mm depth), degree-4 features,
//                    10/20/4 tanh network with Adam, +-3% perturbed replay.
//
// Both write `results.json` (machine readable) and `report.txt`.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "eval.hpp"
#include "features.hpp"
#include "gradcheck.hpp"
#include "nn.hpp"
#include "pipeline.hpp"
#include "synthgen.hpp"
#include "tsr.hpp"

namespace tsrnde {

using json = nlohmann::ordered_json;

/// Four-state test matrix of the PLA delamination study (rows actual,
/// columns predicted: normal, 0.1 mm, 0.2 mm, 0.3 mm).
inline ConfusionMatrix reference_four_state_matrix() {
  return ConfusionMatrix::from_rows(
      {{1152, 83, 1, 18}, {61, 1241, 0, 12}, {6, 6, 1377, 11}, {19, 14, 19, 1408}},
      {"normal", "0.1mm", "0.2mm", "0.3mm"});
}

struct ReferenceTarget {
  const char* key;
  double percent;
};

/// Published percentages the reference matrix must reproduce.
inline constexpr ReferenceTarget reference_targets[] = {
    {"four_state_accuracy", 95.4},       {"binary_accuracy", 96.5},  {"binary_precision", 97.6},
    {"binary_recall", 97.9},             {"second_accuracy", 98.6},  {"second_precision", 98.9},
    {"second_recall", 98.4},
};

inline constexpr double reference_tolerance_pp = 0.1;

/// Metric reproduction from the reference matrix.
inline json reference_metrics_check() {
  const auto cm = reference_four_state_matrix();
  const auto report = evaluate_matrix(cm, default_collapses(4));
  const auto& b1 = report.collapsed_metrics[0];
  const auto& b2 = report.collapsed_metrics[1];
  const double achieved[] = {report.overall.accuracy, b1.accuracy, b1.precision.value_or(NAN), b1.recall.value_or(NAN),
                             b2.accuracy,             b2.precision.value_or(NAN), b2.recall.value_or(NAN)};
  json j;
  j["tolerance_pp"] = reference_tolerance_pp;
  bool all = true;
  for (std::size_t i = 0; i < std::size(reference_targets); ++i) {
    const double pct = 100.0 * achieved[i];
    const bool ok = std::abs(pct - reference_targets[i].percent) <= reference_tolerance_pp + 1e-9;
    all = all && ok;
    j["metrics"][reference_targets[i].key] = {{"achieved_percent", pct}, {"target_percent", reference_targets[i].percent}, {"pass", ok}};
  }
  const auto& second = report.collapsed[1].second;
  j["binary_matrix"] = {{report.collapsed[0].second.at(0, 0), report.collapsed[0].second.at(0, 1)},
                        {report.collapsed[0].second.at(1, 0), report.collapsed[0].second.at(1, 1)}};
  j["second_matrix"] = {{second.at(0, 0), second.at(0, 1)}, {second.at(1, 0), second.at(1, 1)}};
  j["summed_total"] = cm.total();
  j["notes"] = {
      "the reference tables print n=5429 but the four-state counts sum to " + std::to_string(cm.total()),
      "the reference second binary table prints 2538 acceptable/acceptable; summing the four-state counts gives " +
          std::to_string(second.at(0, 0)) + ", which is used here",
  };
  j["pass"] = all;
  return j;
}

/// Noiseless power-law and polynomial recovery.
inline json tsr_exactness_check() {
  const auto t = uniform_timestamps(15.0, 300);
  std::vector<double> series(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) series[k] = std::pow(t[k], -0.5);
  const auto fit = fit_pixel(series, t, 4);
  const auto d = derivatives(fit);
  double first_dev = 0.0;
  double second_max = 0.0;
  for (double x = fit.domain_lo; x <= fit.domain_hi; x += (fit.domain_hi - fit.domain_lo) / 50.0) {
    first_dev = std::max(first_dev, std::abs(d.first(x) + 0.5));
    second_max = std::max(second_max, std::abs(d.second(x)));
  }
  const std::vector<double> truth{0.3, -0.45, 0.08, -0.02, 0.005};
  for (std::size_t k = 0; k < t.size(); ++k) series[k] = std::pow(10.0, Polynomial{truth}(std::log10(t[k])));
  const auto poly = fit_pixel(series, t, 4);
  double poly_err = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) poly_err = std::max(poly_err, std::abs(poly.coefficients[i] - truth[i]));
  const bool ok = std::abs(fit.coefficients[1] + 0.5) <= 1e-8 && first_dev <= 1e-8 && second_max <= 1e-8 && poly_err <= 1e-8;
  return {{"a1", fit.coefficients[1]},
          {"first_derivative_max_deviation", first_dev},
          {"second_derivative_max_abs", second_max},
          {"polynomial_max_coefficient_error", poly_err},
          {"tolerance", 1e-8},
          {"pass", ok}};
}

inline json schedule_checks() {
  TrainConfig c;
  c.optimizer = OptimizerKind::sgd_decay;
  c.learning_rate = 1e-7;
  c.decay_step = 1000;
  c.decay_rate = 0.9;
  const double lr = lr_at(c, 2500);
  EarlyStopper stopper(3);
  std::size_t halted_at = 0;
  const double losses[] = {0.50, 0.52, 0.55, 0.58};
  for (std::size_t i = 0; i < 4; ++i)
    if (stopper.observe(losses[i]) && halted_at == 0) halted_at = i + 1;
  const bool ok = std::abs(lr - 8.1e-8) <= 1e-20 && halted_at == 4 && stopper.anchor() == 0;
  return {{"lr_at_2500", lr}, {"halted_at_check", halted_at}, {"restored_check", stopper.anchor() + 1}, {"pass", ok}};
}

inline json gradient_self_check(std::uint64_t seed, std::size_t pairs_per_architecture = 100) {
  double worst = 0.0;
  const std::vector<std::vector<std::size_t>> archs{{27, 16, 32, 16, 2}, {15, 10, 20, 4}};
  const std::vector<std::vector<Activation>> acts{
      {Activation::relu, Activation::relu, Activation::relu, Activation::softmax},
      {Activation::tanh, Activation::tanh, Activation::softmax}};
  for (std::size_t a = 0; a < archs.size(); ++a) {
    std::size_t checked = 0;
    for (std::uint64_t trial = 0; checked < pairs_per_architecture; ++trial) {
      const auto m = MlpModel::create(archs[a], acts[a], derive_seed(seed, {a, trial}));
      Dataset batch{archs[a].front(), archs[a].back(), {}, {}, {}};
      Rng rng(derive_seed(seed, {a, trial, 7}));
      std::vector<double> x(archs[a].front());
      for (int r = 0; r < 4; ++r) {
        for (auto& v : x) v = standard_normal(rng);
        batch.push_back(x, static_cast<std::uint8_t>(uniform_index(rng, archs[a].back())), {});
      }
      if (relu_margin(m, batch) < 1e-3) continue;  // too close to a kink for finite differences
      worst = std::max(worst, check_gradients(m, batch).max_relative_error);
      ++checked;
    }
  }
  return {{"pairs_per_architecture", pairs_per_architecture}, {"max_relative_error", worst}, {"tolerance", 1e-4}, {"pass", worst < 1e-4}};
}

struct ReproOptions {
  std::ostream* log = nullptr;
  std::vector<std::pair<std::string, std::string>> overrides;  // key=value applied over the defaults
  std::optional<std::uint64_t> seed;
};

inline const char* synthetic_2class_defaults = R"(seed = 20190601
[scene]
width = 160
height = 120
fps = 15
frames = 300
clamp = 0 254
noise_sigma_rel = 0.005
normal_profile = power-law 100 -0.5
delaminated_profile = adiabatic-plate 100 2.5 0.1 1
inner_fraction = 0.5
[tsr]
degree = 8
packing = concat-padded
[features]
train_fraction = 0.8
validation_fraction = 0.1
trim = 0
augment_copies = 0
[nn]
hidden = 16 32 16
activations = relu relu relu softmax
optimizer = sgd-decay
learning_rate = 0.05
decay_step = 1000
decay_rate = 0.9
batch_size = 512
max_steps = 100000
early_stopping = 100 3
[targets]
insample_accuracy = 0.93
outsample_accuracy = 0.88
)";

inline const char* surrogate_4class_defaults = R"(seed = 20190602
[scene]
width = 236
height = 182
fps = 15
frames = 3600
clamp = 0 254
noise_sigma_rel = 0.005
gaps = 0 0.1 0.2 0.3
defect_depth = 5
base_thickness = 10
diffusivity = 0.1
layer_height = 0.3
amplitude = 100
[tsr]
degree = 4
packing = concat-padded
[features]
train_fraction = 0.8
validation_fraction = 0.1
trim = 5
augment_amplitude = 0.05
augment_copies = 50
perturb_amplitude = 0.03
[nn]
hidden = 10 20
activations = tanh tanh softmax
optimizer = adam
learning_rate = 1e-5
batch_size = 2048
epochs = 150
early_stopping = off
[targets]
validation_accuracy = 0.90
max_perturbed_drop_pp = 5
)";

inline text::KeyValueFile experiment_settings(const std::string& experiment, const ReproOptions& options) {
  const char* defaults = nullptr;
  if (experiment == "synthetic-2class") defaults = synthetic_2class_defaults;
  else if (experiment == "surrogate-4class") defaults = surrogate_4class_defaults;
  else fail(Errc::invalid_argument, "unknown experiment '" + experiment + "' (synthetic-2class | surrogate-4class)");
  auto kv = text::KeyValueFile::parse(defaults, experiment);
  for (const auto& [k, v] : options.overrides) kv.set(k, v);
  if (options.seed) kv.set("seed", std::to_string(*options.seed));
  if (!kv.has("seed")) fail(Errc::invalid_argument, "repro mode requires a seed");
  return kv;
}

inline text::KeyValueFile scene_keys(const text::KeyValueFile& kv) {
  text::KeyValueFile scene;
  for (const auto& [k, v] : kv.entries())
    if (k.rfind("scene.", 0) == 0) scene.add(k.substr(6), v);
  return scene;
}

inline json digests(const fs::path& dir, const std::vector<std::string>& names) {
  json j;
  for (const auto& n : names) j[n] = hex64(file_digest(dir / n));
  return j;
}

inline double accuracy_of(const ConfusionMatrix& cm) {
  return cm.total() ? static_cast<double>(cm.trace()) / static_cast<double>(cm.total()) : 0.0;
}

inline json confusion_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (std::size_t i = 0; i < cm.classes; ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < cm.classes; ++j) r.push_back(cm.at(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline json run_synthetic_2class(const text::KeyValueFile& kv, const fs::path& out, std::ostream* log) {
  const auto config = run_stage("config", [&] { return PipelineConfig::parse(kv); });
  const auto sk = scene_keys(kv);
  auto base = sk;
  base.set("layout", "uniform");
  const auto normal_profile = parse_profile(sk.get("normal_profile"));
  const auto delam_profile = parse_profile(sk.get("delaminated_profile"));

  auto render = [&](const char* stage, const Scene& scene) { return run_stage(stage, [&] { return scene.render(); }); };
  auto make_uniform = [&](std::uint8_t cls, const TemperatureProfile& p, std::uint64_t stream) {
    auto s = base;
    s.set("class", std::to_string(cls));
    s.set("profile", format_profile(p));
    Scene scene = parse_scene(s);
    scene.noise.seed = config.stage_seed(seed_render + stream);
    return scene;
  };
  const auto scene_normal = make_uniform(0, normal_profile, 1);
  const auto scene_delam = make_uniform(1, delam_profile, 2);
  Scene scene_composite = scene_normal;
  {
    const double frac = sk.get_double_or("inner_fraction", 0.5);
    const auto w = scene_normal.layout.width;
    const auto h = scene_normal.layout.height;
    const auto inner = centered_rect(w, h, static_cast<std::size_t>(std::lround(frac * static_cast<double>(w))),
                                     static_cast<std::size_t>(std::lround(frac * static_cast<double>(h))));
    scene_composite.layout = composite_layout(w, h, inner, 1, 0, delam_profile, normal_profile);
    scene_composite.noise.seed = config.stage_seed(seed_render + 3);
  }

  fs::create_directories(out);
  FitReport rep;
  auto fit = [&](const char* name, const Scene& scene) {
    const auto seq = render("synth", scene);
    auto f = run_stage("fit", [&] { return extract_features(seq, config, &rep); });
    save_feature_image(out / name, f);
    if (log) *log << name << ": " << rep.fitted << " fitted, " << rep.all_saturated << " saturated\n";
    return f;
  };
  const auto f_normal = fit("features_normal.csv", scene_normal);
  const auto f_delam = fit("features_delaminated.csv", scene_delam);
  const auto f_comp = fit("features_composite.csv", scene_composite);

  auto data = run_stage("assemble", [&] {
    auto d = assemble(f_normal, scene_normal.truth());
    const auto d2 = assemble(f_delam, scene_delam.truth());
    d.class_count = 2;
    d.values.insert(d.values.end(), d2.values.begin(), d2.values.end());
    d.labels.insert(d.labels.end(), d2.labels.begin(), d2.labels.end());
    d.provenance.insert(d.provenance.end(), d2.provenance.begin(), d2.provenance.end());
    return d;
  });
  const auto outcome = train_on(data, config, log);
  write_training_outputs(outcome, out);

  const auto truth = scene_composite.truth();
  const auto predicted = run_stage("predict", [&] { return predict_map(outcome.model, f_comp); });
  const auto outsample = confusion(truth, predicted, 2);
  text::write_file(out / "outsample_confusion.csv", encode_confusion_csv(outsample));
  write_pgm(out / "segmentation_composite.pgm", render_segmentation(predicted, 2));
  write_pgm(out / "truth_composite.pgm", render_segmentation(truth, 2));

  const double insample = outcome.test_accuracy;
  const double outsample_acc = accuracy_of(outsample);
  const double in_target = kv.get_double("targets.insample_accuracy");
  const double out_target = kv.get_double("targets.outsample_accuracy");
  json j;
  j["experiment"] = "synthetic-2class";
  j["seed"] = config.seed;
  j["canvas"] = {scene_normal.layout.width, scene_normal.layout.height};
  j["frames"] = scene_normal.timestamps.size();
  j["feature_count"] = data.feature_count;
  j["rows"] = {{"train", outcome.sizes.train}, {"validation", outcome.sizes.validation}, {"test", outcome.sizes.test}};
  j["training"] = {{"steps", outcome.trace.entries.empty() ? 0 : outcome.trace.entries.back().step},
                   {"stop_reason", outcome.trace.stop_reason},
                   {"restored_step", outcome.trace.entries[outcome.trace.restored_check].step}};
  j["insample_accuracy"] = insample;
  j["outsample_accuracy"] = outsample_acc;
  j["outsample_confusion"] = confusion_json(outsample);
  j["targets"] = {{"insample_accuracy", in_target}, {"outsample_accuracy", out_target},
                  {"reference_insample", 0.957}, {"reference_outsample", 0.928}};
  j["pass"] = insample >= in_target && outsample_acc >= out_target;
  j["digests"] = digests(out, {"features_normal.csv", "features_delaminated.csv", "features_composite.csv", "model.txt",
                               "trace.csv", "validation_confusion.csv", "test_confusion.csv", "outsample_confusion.csv",
                               "segmentation_composite.pgm"});
  return j;
}

inline json run_surrogate_4class(const text::KeyValueFile& kv, const fs::path& out, std::ostream* log) {
  const auto config = run_stage("config", [&] { return PipelineConfig::parse(kv); });
  auto sk = scene_keys(kv);
  sk.set("layout", "four-class");
  auto scene = run_stage("scene", [&] { return parse_scene(sk); });
  scene.noise.seed = config.stage_seed(seed_render);

  fs::create_directories(out);
  FitReport rep;
  FeatureImage features;
  {
    const auto seq = run_stage("synth", [&] { return scene.render(); });
    features = run_stage("fit", [&] { return extract_features(seq, config, &rep); });
  }
  if (log) *log << "fitted " << rep.fitted << " pixels, " << rep.all_saturated << " saturated\n";
  save_feature_image(out / "features.csv", features);
  const auto truth_full = scene.truth();
  const auto mask = trim_mask(truth_full, config.trim);
  save_mask(out / "truth.pgm", truth_full);
  const auto data = run_stage("assemble", [&] { return assemble(features, mask); });
  std::vector<std::size_t> per_class(4, 0);
  for (auto l : data.labels) ++per_class[l];

  const auto outcome = train_on(data, config, log);
  write_training_outputs(outcome, out);

  const auto eval = evaluate_matrix(outcome.validation_confusion, default_collapses(4));
  write_eval_outputs(eval, out / "validation_eval");

  // Replay over every usable pixel, clean and with +-p% coefficient noise.
  const auto clean_map = run_stage("predict", [&] { return predict_map(outcome.model, features); });
  const auto noisy_features = perturb(features, config.perturb_amplitude, config.stage_seed(seed_perturb));
  const auto noisy_map = run_stage("predict", [&] { return predict_map(outcome.model, noisy_features); });
  const auto clean_cm = confusion(mask, clean_map, 4);
  const auto noisy_cm = confusion(mask, noisy_map, 4);
  text::write_file(out / "replay_clean_confusion.csv", encode_confusion_csv(clean_cm));
  text::write_file(out / "replay_perturbed_confusion.csv", encode_confusion_csv(noisy_cm));
  write_pgm(out / "segmentation.pgm", render_segmentation(clean_map, 4));
  write_pgm(out / "segmentation_perturbed.pgm", render_segmentation(noisy_map, 4));
  const auto regions = region_report(noisy_map, mask);

  const double val_acc = outcome.validation_accuracy;
  const double clean_acc = accuracy_of(clean_cm);
  const double noisy_acc = accuracy_of(noisy_cm);
  const double drop_pp = 100.0 * (clean_acc - noisy_acc);
  const double val_target = kv.get_double("targets.validation_accuracy");
  const double drop_target = kv.get_double("targets.max_perturbed_drop_pp");

  json j;
  j["experiment"] = "surrogate-4class";
  j["seed"] = config.seed;
  j["canvas"] = {scene.layout.width, scene.layout.height};
  j["frames"] = scene.timestamps.size();
  j["feature_count"] = features.feature_count;
  j["pixels_per_class"] = per_class;
  j["rows"] = {{"train", outcome.sizes.train}, {"augmented_train", outcome.augmented_rows},
               {"validation", outcome.sizes.validation}, {"test", outcome.sizes.test}};
  j["training"] = {{"epochs", outcome.trace.entries.back().epoch}, {"steps", outcome.trace.entries.back().step},
                   {"stop_reason", outcome.trace.stop_reason}};
  j["validation_accuracy"] = val_acc;
  j["test_accuracy"] = outcome.test_accuracy;
  j["validation_confusion"] = confusion_json(outcome.validation_confusion);
  j["validation_binary"] = {
      {"normal_vs_defect", {{"accuracy", eval.collapsed_metrics[0].accuracy},
                            {"precision", eval.collapsed_metrics[0].precision.value_or(NAN)},
                            {"recall", eval.collapsed_metrics[0].recall.value_or(NAN)}}},
      {"acceptable_vs_unacceptable", {{"accuracy", eval.collapsed_metrics[1].accuracy},
                                      {"precision", eval.collapsed_metrics[1].precision.value_or(NAN)},
                                      {"recall", eval.collapsed_metrics[1].recall.value_or(NAN)}}}};
  j["replay"] = {{"clean_accuracy", clean_acc},
                 {"perturbed_accuracy", noisy_acc},
                 {"drop_pp", drop_pp},
                 {"perturb_amplitude", config.perturb_amplitude}};
  json reg = json::array();
  for (const auto& r : regions.regions)
    reg.push_back({{"class", r.truth_class}, {"majority", r.majority_class}, {"fraction_correct", r.fraction_correct}});
  j["replay"]["regions"] = reg;
  j["targets"] = {{"validation_accuracy", val_target}, {"max_perturbed_drop_pp", drop_target},
                  {"reference_validation_accuracy", 0.954}};
  j["pass"] = val_acc >= val_target && drop_pp <= drop_target;
  j["digests"] = digests(out, {"features.csv", "truth.pgm", "model.txt", "trace.csv", "validation_confusion.csv",
                               "test_confusion.csv", "validation_eval/confusion.csv", "replay_clean_confusion.csv",
                               "replay_perturbed_confusion.csv", "segmentation.pgm", "segmentation_perturbed.pgm"});
  return j;
}

inline std::string format_repro_report(const json& r) {
  std::string s = "experiment " + r["experiment"].get<std::string>() + " (seed " + std::to_string(r["seed"].get<std::uint64_t>()) + ")\n\n";
  s += "reference metric reproduction (tolerance +-0.1 pp)\n";
  for (const auto& [k, v] : r["reference_metrics"]["metrics"].items()) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-22s %7.3f%%  target %5.1f%%  %s\n", k.c_str(), v["achieved_percent"].get<double>(),
                  v["target_percent"].get<double>(), v["pass"].get<bool>() ? "ok" : "FAIL");
    s += buf;
  }
  for (const auto& n : r["reference_metrics"]["notes"]) s += "  note: " + n.get<std::string>() + "\n";
  s += "\nexperiment results\n";
  const auto& e = r["result"];
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
    return std::string(buf);
  };
  if (e["experiment"] == "synthetic-2class") {
    s += "  in-sample accuracy   " + pct(e["insample_accuracy"].get<double>()) + "  (target >= " +
         pct(e["targets"]["insample_accuracy"].get<double>()) + ", reference 95.7%)\n";
    s += "  outsample accuracy   " + pct(e["outsample_accuracy"].get<double>()) + "  (target >= " +
         pct(e["targets"]["outsample_accuracy"].get<double>()) + ", reference 92.8%)\n";
  } else {
    s += "  validation accuracy  " + pct(e["validation_accuracy"].get<double>()) + "  (target >= " +
         pct(e["targets"]["validation_accuracy"].get<double>()) + ", reference 95.4%)\n";
    s += "  test accuracy        " + pct(e["test_accuracy"].get<double>()) + "\n";
    s += "  replay clean         " + pct(e["replay"]["clean_accuracy"].get<double>()) + "\n";
    s += "  replay perturbed     " + pct(e["replay"]["perturbed_accuracy"].get<double>()) + "  (drop " +
         std::to_string(e["replay"]["drop_pp"].get<double>()) + " pp, limit " +
         std::to_string(e["targets"]["max_perturbed_drop_pp"].get<double>()) + " pp)\n";
  }
  s += "  stop reason          " + e["training"]["stop_reason"].get<std::string>() + "\n";
  s += "\nchecks\n";
  s += std::string("  tsr exactness        ") + (r["tsr_exactness"]["pass"].get<bool>() ? "ok" : "FAIL") + "\n";
  s += std::string("  gradient check       ") + (r["gradient_check"]["pass"].get<bool>() ? "ok" : "FAIL") + "\n";
  s += std::string("  schedule/early stop  ") + (r["schedule"]["pass"].get<bool>() ? "ok" : "FAIL") + "\n";
  s += "\nreal-hardware accuracy is not reproducible without the original thermal recordings;\n"
       "the synthetic experiments above stand in for it.\n";
  s += std::string("\noverall: ") + (r["pass"].get<bool>() ? "PASS" : "FAIL") + "\n";
  return s;
}

/// Runs one experiment end to end and writes results.json and report.txt.
inline json cmd_repro(const std::string& experiment, const fs::path& out, const ReproOptions& options = {}) {
  const auto kv = experiment_settings(experiment, options);
  const auto started = std::chrono::steady_clock::now();
  json r;
  r["experiment"] = experiment;
  r["seed"] = static_cast<std::uint64_t>(kv.get_int("seed"));
  r["reference_metrics"] = reference_metrics_check();
  r["tsr_exactness"] = tsr_exactness_check();
  r["schedule"] = schedule_checks();
  r["gradient_check"] = gradient_self_check(static_cast<std::uint64_t>(kv.get_int("seed")));
  r["result"] = experiment == "synthetic-2class" ? run_synthetic_2class(kv, out, options.log)
                                                 : run_surrogate_4class(kv, out, options.log);
  r["real_hardware_reproducible"] = false;
  r["pass"] = r["reference_metrics"]["pass"].get<bool>() && r["tsr_exactness"]["pass"].get<bool>() &&
              r["schedule"]["pass"].get<bool>() && r["gradient_check"]["pass"].get<bool>() &&
              r["result"]["pass"].get<bool>();
  text::write_file(out / "results.json", r.dump(2) + "\n");
  text::write_file(out / "report.txt", format_repro_report(r));
  if (options.log) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    *options.log << experiment << " finished in " << secs << " s\n";
  }
  return r;
}

}  // namespace tsrnde

#endif
