// tsrnde: flash-thermography TSR feature extraction and per-pixel defect
// classification.
//
//   tsrnde synth   --scene s.scene --out dir
//   tsrnde fit     --config c.ini [--input manifest|scene] --out dir
//   tsrnde train   --config c.ini --features f.csv --mask m.pgm --out dir
//   tsrnde eval    --config c.ini --model model.txt --features f.csv --mask m.pgm --out dir
//   tsrnde eval    --matrix confusion.csv --out dir
//   tsrnde segment --model model.txt --features f.csv --out map.pgm
//   tsrnde repro   synthetic-2class|surrogate-4class --out dir [--seed N] [--config overrides.ini]
//
// Exit codes: 0 success, 2 validation error, 3 compute error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "tsrnde/tsrnde.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tsrnde;

int exit_code(const Error& e) { return is_validation(e.code()) ? 2 : 3; }

PipelineConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  auto kv = path.empty() ? text::KeyValueFile{} : text::KeyValueFile::load(path);
  if (seed) kv.set("seed", std::to_string(*seed));
  return PipelineConfig::parse(kv);
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) fail(Errc::invalid_argument, std::string("no ") + what + " given");
  if (!fs::exists(p)) fail(Errc::missing_file, std::string(what) + " not found: " + p.string());
}

fs::path pick(const fs::path& flag, const fs::path& from_config) { return flag.empty() ? from_config : flag; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSR feature extraction and per-pixel thermography classification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  std::string out;
  bool quiet = false;
  app.add_option("--config", config_path, "config file (key = value with [sections])");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--workers", workers, "cap on parallel workers (0 = hardware)");
  app.add_option("--out", out, "output directory (or file for segment)");
  app.add_flag("-q,--quiet", quiet, "no progress output");

  std::string scene, input, features, mask, model, matrix, experiment;
  auto* synth = app.add_subcommand("synth", "render a synthetic scene to frames + truth mask");
  synth->add_option("--scene", scene, "scene file")->required();
  auto* fit = app.add_subcommand("fit", "fit TSR polynomials to every pixel");
  fit->add_option("--input", input, "sequence manifest or .scene file (default paths.sequence)");
  auto* train = app.add_subcommand("train", "train the classifier on a feature image and mask");
  train->add_option("--features", features, "feature image");
  train->add_option("--mask", mask, "label mask PGM (default paths.mask)");
  auto* eval = app.add_subcommand("eval", "score a model, or a stored confusion matrix");
  eval->add_option("--model", model, "model file");
  eval->add_option("--features", features, "feature image");
  eval->add_option("--mask", mask, "label mask PGM (default paths.mask)");
  eval->add_option("--matrix", matrix, "confusion matrix CSV to score instead of a model");
  auto* segment = app.add_subcommand("segment", "render a class map");
  segment->add_option("--model", model, "model file")->required();
  segment->add_option("--features", features, "feature image")->required();
  auto* repro = app.add_subcommand("repro", "run a full experiment with pinned seeds");
  repro->add_option("experiment", experiment, "synthetic-2class | surrogate-4class")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (workers) worker_limit().store(static_cast<unsigned>(workers));
  std::ostream* log = quiet ? nullptr : &std::cerr;

  try {
    if (*synth) {
      require_file(scene, "scene file");
      const auto r = cmd_synth(scene, out.empty() ? fs::path("out") : fs::path(out));
      std::cout << r.manifest.string() << "\n" << r.mask.string() << "\n";
    } else if (*fit) {
      const auto cfg = load_config(config_path, seed);
      const auto in = pick(input, cfg.sequence);
      require_file(in, "input sequence");
      std::cout << cmd_fit(in, cfg, pick(out, cfg.out), log).string() << "\n";
    } else if (*train) {
      const auto cfg = load_config(config_path, seed);
      if (!cfg.seed_given) fail(Errc::invalid_argument, "train needs a seed (--seed or seed = in the config)");
      const auto dir = pick(out, cfg.out);
      const auto f = pick(features, dir / "features.csv");
      require_file(f, "feature image");
      require_file(pick(mask, cfg.mask), "mask");
      const auto r = cmd_train(f, pick(mask, cfg.mask), cfg, dir, log);
      std::cout << "validation accuracy " << format_percent(r.validation_accuracy) << ", test accuracy "
                << format_percent(r.test_accuracy) << "\n";
    } else if (*eval) {
      const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
      EvalReport r;
      if (!matrix.empty()) {
        require_file(matrix, "confusion matrix");
        r = cmd_eval_matrix(matrix, dir);
      } else {
        const auto cfg = load_config(config_path, seed);
        require_file(model, "model");
        require_file(features, "feature image");
        require_file(pick(mask, cfg.mask), "mask");
        r = cmd_eval(model, features, pick(mask, cfg.mask), cfg, dir);
      }
      std::cout << format_eval_report(r);
    } else if (*segment) {
      require_file(model, "model");
      require_file(features, "feature image");
      std::cout << cmd_segment(model, features, out.empty() ? fs::path("segmentation.pgm") : fs::path(out)).string()
                << "\n";
    } else if (*repro) {
      ReproOptions opts;
      opts.log = log;
      opts.seed = seed;
      if (!config_path.empty())
        for (const auto& [k, v] : text::KeyValueFile::load(config_path).entries()) opts.overrides.emplace_back(k, v);
      const fs::path dir = out.empty() ? fs::path("out") / experiment : fs::path(out);
      const auto r = cmd_repro(experiment, dir, opts);
      std::cout << text::read_file(dir / "report.txt");
      return r["pass"].get<bool>() ? 0 : 3;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
