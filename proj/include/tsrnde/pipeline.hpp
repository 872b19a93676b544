#ifndef TSRNDE_PIPELINE_HPP
#define TSRNDE_PIPELINE_HPP

// Subcommand implementations behind the `tsrnde` tool. Every command reads
// its inputs from files, writes its outputs into an output directory and is
// byte-for-byte reproducible for a fixed seed.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "ingest.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "synthgen.hpp"
#include "textio.hpp"
#include "tsr.hpp"

namespace tsrnde {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::uint64_t seed = 0;
  bool seed_given = false;

  // [paths]
  fs::path sequence;  // manifest or scene file
  fs::path mask;
  fs::path out = "out";

  // [tsr]
  TsrOptions tsr;
  std::optional<Rect> crop;

  // [features]
  SplitSpec split;
  std::size_t trim = 5;
  double augment_amplitude = 0.05;
  std::size_t augment_copies = 50;
  double perturb_amplitude = 0.03;

  // [nn]
  std::vector<std::size_t> hidden{10, 20};
  std::vector<Activation> activations{Activation::tanh, Activation::tanh, Activation::softmax};
  TrainConfig train;

  /// Reads a flat key=value config with [paths], [tsr], [features] and [nn]
  /// sections. Everything is validated here, before any compute.
  static PipelineConfig parse(const text::KeyValueFile& kv) {
    PipelineConfig c;
    if (kv.has("seed")) {
      c.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
      c.seed_given = true;
    }
    if (kv.has("paths.sequence")) c.sequence = kv.get("paths.sequence");
    if (kv.has("paths.mask")) c.mask = kv.get("paths.mask");
    if (kv.has("paths.out")) c.out = kv.get("paths.out");

    c.tsr.degree = static_cast<std::size_t>(kv.get_int_or("tsr.degree", static_cast<long long>(c.tsr.degree)));
    if (kv.has("tsr.packing")) c.tsr.packing = parse_packing(kv.get("tsr.packing"));
    if (kv.has("tsr.log_base")) {
      const auto& b = kv.get("tsr.log_base");
      c.tsr.log_base = (b == "e") ? std::numbers::e : text::parse_double(b, "tsr.log_base");
    }
    if (kv.has("tsr.crop")) {
      const auto w = text::words(kv.get("tsr.crop"));
      if (w.size() != 4) fail(Errc::parse_error, "tsr.crop takes <x0> <y0> <w> <h>");
      c.crop = Rect{static_cast<std::size_t>(text::parse_int(w[0])), static_cast<std::size_t>(text::parse_int(w[1])),
                    static_cast<std::size_t>(text::parse_int(w[2])), static_cast<std::size_t>(text::parse_int(w[3]))};
    }

    c.split.train_fraction = kv.get_double_or("features.train_fraction", c.split.train_fraction);
    c.split.validation_fraction_of_train =
        kv.get_double_or("features.validation_fraction", c.split.validation_fraction_of_train);
    c.trim = static_cast<std::size_t>(kv.get_int_or("features.trim", static_cast<long long>(c.trim)));
    c.augment_amplitude = kv.get_double_or("features.augment_amplitude", c.augment_amplitude);
    c.augment_copies =
        static_cast<std::size_t>(kv.get_int_or("features.augment_copies", static_cast<long long>(c.augment_copies)));
    c.perturb_amplitude = kv.get_double_or("features.perturb_amplitude", c.perturb_amplitude);

    if (kv.has("nn.hidden")) {
      c.hidden.clear();
      for (auto w : text::words(kv.get("nn.hidden"))) c.hidden.push_back(static_cast<std::size_t>(text::parse_int(w)));
    }
    if (kv.has("nn.activations")) {
      c.activations.clear();
      for (auto w : text::words(kv.get("nn.activations"))) c.activations.push_back(parse_activation(w));
    }
    auto& t = c.train;
    if (kv.has("nn.optimizer")) t.optimizer = parse_optimizer(kv.get("nn.optimizer"));
    t.learning_rate = kv.get_double_or("nn.learning_rate", t.learning_rate);
    t.decay_step = static_cast<std::size_t>(kv.get_int_or("nn.decay_step", static_cast<long long>(t.decay_step)));
    t.decay_rate = kv.get_double_or("nn.decay_rate", t.decay_rate);
    t.batch_size = static_cast<std::size_t>(kv.get_int_or("nn.batch_size", static_cast<long long>(t.batch_size)));
    t.max_steps = static_cast<std::size_t>(kv.get_int_or("nn.max_steps", static_cast<long long>(t.max_steps)));
    t.epochs = static_cast<std::size_t>(kv.get_int_or("nn.epochs", static_cast<long long>(t.epochs)));
    t.check_interval =
        static_cast<std::size_t>(kv.get_int_or("nn.check_interval", static_cast<long long>(t.check_interval)));
    if (kv.has("nn.early_stopping")) {
      const auto w = text::words(kv.get("nn.early_stopping"));
      if (w.size() == 1 && w[0] == "off") {
        t.early_stopping.enabled = false;
      } else if (w.size() == 2) {
        t.early_stopping = {true, static_cast<std::size_t>(text::parse_int(w[0])),
                            static_cast<std::size_t>(text::parse_int(w[1]))};
      } else {
        fail(Errc::parse_error, "nn.early_stopping takes 'off' or '<checks_apart> <consecutive_increases>'");
      }
    }
    c.validate();
    return c;
  }

  static PipelineConfig load(const fs::path& path) { return parse(text::KeyValueFile::load(path)); }

  void validate() const {
    if (tsr.degree < 2) fail(Errc::invalid_argument, "tsr.degree must be >= 2");
    if (!(tsr.log_base > 1.0)) fail(Errc::invalid_argument, "tsr.log_base must be > 1");
    if (activations.size() != hidden.size() + 1)
      fail(Errc::invalid_argument, "nn.activations needs one entry per hidden layer plus the output");
    if (activations.back() != Activation::softmax) fail(Errc::invalid_argument, "output activation must be softmax");
    for (auto h : hidden)
      if (h == 0) fail(Errc::invalid_argument, "hidden layer widths must be >= 1");
    if (!(augment_amplitude >= 0.0) || !(perturb_amplitude >= 0.0))
      fail(Errc::invalid_argument, "augmentation amplitudes must be >= 0");
    split_sizes(1000, split);  // fraction range check
    train.validate();
  }

  /// Independent stream for one pipeline stage.
  std::uint64_t stage_seed(std::uint64_t stage) const { return derive_seed(seed, {stage}); }
};

enum SeedStage : std::uint64_t { seed_split = 1, seed_augment, seed_init, seed_train, seed_perturb, seed_render };

/// Runs `body`, prefixing any error with the stage name.
template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("[") + stage + "] " + e.what());
  }
}

inline std::uint64_t file_digest(const fs::path& path) {
  const auto bytes = text::read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOutput {
  fs::path manifest;
  fs::path mask;
};

inline SynthOutput cmd_synth(const fs::path& scene_file, const fs::path& out_dir) {
  const auto scene = run_stage("synth", [&] { return load_scene(scene_file); });
  const auto seq = run_stage("synth", [&] { return scene.render(); });
  SynthOutput out;
  out.manifest = write_sequence(seq, out_dir, "frame");
  out.mask = out_dir / "truth.pgm";
  save_mask(out.mask, scene.truth());
  return out;
}

// ---------------------------------------------------------------------------
// fit

inline FeatureImage extract_features(const FrameSequence& seq, const PipelineConfig& config, FitReport* report = nullptr) {
  if (config.crop) return fit_sequence(crop(seq, *config.crop), config.tsr, report);
  return fit_sequence(seq, config.tsr, report);
}

/// Loads a manifest (or renders a scene file ending in .scene) and writes
/// `features.csv`.
inline fs::path cmd_fit(const fs::path& input, const PipelineConfig& config, const fs::path& out_dir,
                        std::ostream* log = nullptr) {
  const auto seq = run_stage("load", [&] {
    return input.extension() == ".scene" ? load_scene(input).render() : load_sequence(input);
  });
  FitReport report;
  const auto features = run_stage("fit", [&] { return extract_features(seq, config, &report); });
  if (log)
    *log << "fitted " << report.fitted << " pixels; invalid: " << report.all_saturated << " saturated, "
         << report.non_positive << " non-positive, " << report.other_errors << " other\n";
  const auto path = out_dir / "features.csv";
  save_feature_image(path, features);
  return path;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  MlpModel model;
  TrainTrace trace;
  SplitSizes sizes;
  std::size_t augmented_rows = 0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  ConfusionMatrix validation_confusion;
  ConfusionMatrix test_confusion;
};

inline std::vector<std::size_t> architecture(const PipelineConfig& c, std::size_t inputs, std::size_t classes) {
  std::vector<std::size_t> sizes{inputs};
  sizes.insert(sizes.end(), c.hidden.begin(), c.hidden.end());
  sizes.push_back(classes);
  return sizes;
}

inline ConfusionMatrix dataset_confusion(const MlpModel& m, const Dataset& ds) {
  std::vector<std::uint8_t> predicted(ds.size());
  std::vector<double> buf;
  for (std::size_t i = 0; i < ds.size(); ++i)
    predicted[i] = static_cast<std::uint8_t>(detail::argmax(detail::forward_into(m, ds.row(i), buf)));
  return confusion(ds.labels, predicted, m.output_size());
}

/// Split, augment the training part, scale with statistics from the
/// (unaugmented) training part, then train. The model carries the stats.
inline TrainOutcome train_on(const Dataset& data, const PipelineConfig& config, std::ostream* log = nullptr) {
  auto parts = run_stage("split", [&] {
    SplitSpec spec = config.split;
    spec.seed = config.stage_seed(seed_split);
    return split(data, spec);
  });
  TrainOutcome out;
  out.sizes = {parts.train.size(), parts.validation.size(), parts.test.size()};
  const auto stats = run_stage("scale", [&] { return fit_scaler(parts.train); });
  auto train_rows = config.augment_copies > 0 ? augment(parts.train, config.augment_amplitude, config.augment_copies,
                                                        config.stage_seed(seed_augment))
                                              : parts.train;
  out.augmented_rows = train_rows.size();
  train_rows = apply_scaler(train_rows, stats);
  const auto val = apply_scaler(parts.validation, stats);
  const auto test = apply_scaler(parts.test, stats);

  const auto sizes = architecture(config, data.feature_count, data.class_count);
  auto model = MlpModel::create(sizes, config.activations, config.stage_seed(seed_init));
  TrainConfig tc = config.train;
  tc.seed = config.stage_seed(seed_train);
  if (log)
    *log << "training on " << train_rows.size() << " rows (" << parts.train.size() << " before augmentation), "
         << val.size() << " validation, " << test.size() << " test\n";
  auto [trained, trace] = run_stage("train", [&] { return train(std::move(model), train_rows, val, tc, log); });
  trained.scaling = stats;
  out.validation_confusion = dataset_confusion(trained, val);
  out.test_confusion = dataset_confusion(trained, test);
  out.validation_accuracy = static_cast<double>(out.validation_confusion.trace()) /
                            static_cast<double>(std::max<std::uint64_t>(1, out.validation_confusion.total()));
  out.test_accuracy = static_cast<double>(out.test_confusion.trace()) /
                      static_cast<double>(std::max<std::uint64_t>(1, out.test_confusion.total()));
  out.model = std::move(trained);
  out.trace = std::move(trace);
  return out;
}

inline void write_training_outputs(const TrainOutcome& t, const fs::path& out_dir) {
  save_model(out_dir / "model.txt", t.model);
  text::write_file(out_dir / "trace.csv", encode_trace(t.trace));
  text::write_file(out_dir / "scaling.csv", encode_stats(t.model.scaling));
  text::write_file(out_dir / "validation_confusion.csv", encode_confusion_csv(t.validation_confusion));
  text::write_file(out_dir / "test_confusion.csv", encode_confusion_csv(t.test_confusion));
}

inline LabelMask prepare_mask(const fs::path& mask_path, std::size_t trim) {
  auto mask = run_stage("mask", [&] { return load_mask(mask_path); });
  return trim_mask(mask, trim);
}

inline TrainOutcome cmd_train(const fs::path& features_path, const fs::path& mask_path, const PipelineConfig& config,
                              const fs::path& out_dir, std::ostream* log = nullptr) {
  const auto features = run_stage("load", [&] { return load_feature_image(features_path); });
  const auto mask = prepare_mask(mask_path, config.trim);
  const auto data = run_stage("assemble", [&] { return assemble(features, mask); });
  auto outcome = train_on(data, config, log);
  write_training_outputs(outcome, out_dir);
  return outcome;
}

// ---------------------------------------------------------------------------
// eval

/// Default binary views for a four-state defect scale: any defect, and only
/// the two thickest gaps.
inline std::vector<BinaryCollapseSpec> default_collapses(std::size_t k) {
  if (k == 4) return {{{1, 2, 3}, "normal-vs-defect"}, {{2, 3}, "acceptable-vs-unacceptable"}};
  return {};
}

struct EvalReport {
  ConfusionMatrix matrix;
  Metrics overall;
  std::vector<std::pair<BinaryCollapseSpec, ConfusionMatrix>> collapsed;
  std::vector<Metrics> collapsed_metrics;
};

inline EvalReport evaluate_matrix(const ConfusionMatrix& cm, const std::vector<BinaryCollapseSpec>& collapses) {
  EvalReport r;
  r.matrix = cm;
  std::vector<std::size_t> positive;
  for (std::size_t c = 1; c < cm.classes; ++c) positive.push_back(c);
  r.overall = metrics(cm, positive);
  for (const auto& spec : collapses) {
    auto two = collapse(cm, spec);
    r.collapsed_metrics.push_back(binary_metrics(two));
    r.collapsed.emplace_back(spec, std::move(two));
  }
  return r;
}

inline std::string format_eval_report(const EvalReport& r) {
  std::string out = "confusion matrix (rows actual, columns predicted)\n" + format_confusion_text(r.matrix);
  out += "accuracy " + format_percent(r.overall.accuracy) + "\n";
  for (std::size_t i = 0; i < r.collapsed.size(); ++i) {
    const auto& [spec, two] = r.collapsed[i];
    const auto& m = r.collapsed_metrics[i];
    out += "\n" + spec.name + "\n" + format_confusion_text(two);
    out += "accuracy " + format_percent(m.accuracy) + "  precision " + format_percent(m.precision) + "  recall " +
           format_percent(m.recall) + "\n";
  }
  return out;
}

inline std::string encode_metrics_csv(const EvalReport& r) {
  std::string out = "view,accuracy,precision,recall\n";
  out += "all-classes," + text::fmt_double(r.overall.accuracy) + "," + format_metric(r.overall.precision) + "," +
         format_metric(r.overall.recall) + "\n";
  for (std::size_t i = 0; i < r.collapsed.size(); ++i) {
    const auto& m = r.collapsed_metrics[i];
    out += r.collapsed[i].first.name + "," + text::fmt_double(m.accuracy) + "," + format_metric(m.precision) + "," +
           format_metric(m.recall) + "\n";
  }
  return out;
}

inline void write_eval_outputs(const EvalReport& r, const fs::path& out_dir) {
  text::write_file(out_dir / "confusion.csv", encode_confusion_csv(r.matrix));
  text::write_file(out_dir / "metrics.csv", encode_metrics_csv(r));
  for (const auto& [spec, two] : r.collapsed) text::write_file(out_dir / ("confusion_" + spec.name + ".csv"), encode_confusion_csv(two));
  text::write_file(out_dir / "report.txt", format_eval_report(r));
}

inline EvalReport cmd_eval(const fs::path& model_path, const fs::path& features_path, const fs::path& mask_path,
                           const PipelineConfig& config, const fs::path& out_dir) {
  const auto model = run_stage("load", [&] { return load_model(model_path); });
  const auto features = run_stage("load", [&] { return load_feature_image(features_path); });
  const auto mask = prepare_mask(mask_path, config.trim);
  const auto predicted = run_stage("predict", [&] { return predict_map(model, features); });
  const auto cm = run_stage("eval", [&] { return confusion(mask, predicted, model.output_size()); });
  auto report = evaluate_matrix(cm, default_collapses(cm.classes));
  write_eval_outputs(report, out_dir);
  return report;
}

/// Scores a stored confusion matrix CSV.
inline EvalReport cmd_eval_matrix(const fs::path& matrix_path, const fs::path& out_dir) {
  const auto cm = run_stage("load", [&] { return decode_confusion_csv(text::read_file(matrix_path), matrix_path.string()); });
  auto report = evaluate_matrix(cm, default_collapses(cm.classes));
  write_eval_outputs(report, out_dir);
  return report;
}

// ---------------------------------------------------------------------------
// segment

inline fs::path cmd_segment(const fs::path& model_path, const fs::path& features_path, const fs::path& out_path) {
  const auto model = run_stage("load", [&] { return load_model(model_path); });
  const auto features = run_stage("load", [&] { return load_feature_image(features_path); });
  const auto map = run_stage("predict", [&] { return predict_map(model, features); });
  write_pgm(out_path, render_segmentation(map, model.output_size()));
  return out_path;
}

}  // namespace tsrnde

#endif
