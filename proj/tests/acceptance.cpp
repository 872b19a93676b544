// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.
//
//   acceptance --out dir [--workers N] [-v]
//
// Both experiments are run twice with the same seed; the second run is only
// there for the byte-identity check. Expect roughly 15 minutes on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>

#include "CLI11.hpp"

#include "tsrnde/tsrnde.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tsrnde;

struct Line {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Line> lines;

void report(int id, bool pass, const std::string& detail) {
  lines.push_back({id, pass, detail});
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

bool criterion_metrics(const json& repro_ref) {
  // Oracle: sum the published four-state counts by hand, independent of collapse().
  const double m[4][4] = {{1152, 83, 1, 18}, {61, 1241, 0, 12}, {6, 6, 1377, 11}, {19, 14, 19, 1408}};
  double total = 0, diag = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      total += m[i][j];
      if (i == j) diag += m[i][j];
    }
  auto block = [&](int r0, int r1, int c0, int c1) {
    double s = 0;
    for (int i = r0; i < r1; ++i)
      for (int j = c0; j < c1; ++j) s += m[i][j];
    return s;
  };
  // normal vs any defect: positive = classes 1..3
  const double a_tn = block(0, 1, 0, 1), a_fp = block(0, 1, 1, 4), a_fn = block(1, 4, 0, 1), a_tp = block(1, 4, 1, 4);
  // acceptable {0,1} vs unacceptable {2,3}
  const double b_tn = block(0, 2, 0, 2), b_fp = block(0, 2, 2, 4), b_fn = block(2, 4, 0, 2), b_tp = block(2, 4, 2, 4);
  const std::map<std::string, std::pair<double, double>> expect{
      {"four_state_accuracy", {100 * diag / total, 95.4}},
      {"binary_accuracy", {100 * (a_tp + a_tn) / total, 96.5}},
      {"binary_precision", {100 * a_tp / (a_tp + a_fp), 97.6}},
      {"binary_recall", {100 * a_tp / (a_tp + a_fn), 97.9}},
      {"second_accuracy", {100 * (b_tp + b_tn) / total, 98.6}},
      {"second_precision", {100 * b_tp / (b_tp + b_fp), 98.9}},
      {"second_recall", {100 * b_tp / (b_tp + b_fn), 98.4}},
  };

  const auto r = evaluate_matrix(decode_confusion_csv(encode_confusion_csv(ConfusionMatrix::from_rows(
                                     {{1152, 83, 1, 18}, {61, 1241, 0, 12}, {6, 6, 1377, 11}, {19, 14, 19, 1408}}))),
                                 default_collapses(4));
  const std::map<std::string, double> got{
      {"four_state_accuracy", 100 * r.overall.accuracy},
      {"binary_accuracy", 100 * r.collapsed_metrics[0].accuracy},
      {"binary_precision", 100 * r.collapsed_metrics[0].precision.value_or(NAN)},
      {"binary_recall", 100 * r.collapsed_metrics[0].recall.value_or(NAN)},
      {"second_accuracy", 100 * r.collapsed_metrics[1].accuracy},
      {"second_precision", 100 * r.collapsed_metrics[1].precision.value_or(NAN)},
      {"second_recall", 100 * r.collapsed_metrics[1].recall.value_or(NAN)},
  };
  bool ok = b_tn == 2537 && r.collapsed[1].second.at(0, 0) == 2537;
  std::string detail;
  for (const auto& [k, e] : expect) {
    const double g = got.at(k);
    ok = ok && std::abs(g - e.first) < 1e-9 && std::abs(g - e.second) <= 0.1;
    detail += k + "=" + fmt("%.2f", g) + " ";
  }
  // the repro report must carry the 2537/2538 note
  bool noted = false;
  for (const auto& n : repro_ref["notes"])
    if (n.get<std::string>().find("2537") != std::string::npos && n.get<std::string>().find("2538") != std::string::npos)
      noted = true;
  ok = ok && noted && repro_ref["pass"].get<bool>();
  report(1, ok, detail + (noted ? "(2537 vs 2538 documented)" : "(2537 vs 2538 note missing)"));
  return ok;
}

void criterion_tsr() {
  const auto j = tsr_exactness_check();
  bool ok = j["pass"].get<bool>();
  // any log-polynomial of degree <= d, fitted at degree d
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> coef(-0.3, 0.3);
  const auto t = uniform_timestamps(15.0, 400);
  double worst = 0.0;
  for (std::size_t d = 1; d <= 8; ++d)
    for (std::size_t fit_degree = std::max<std::size_t>(d, 2); fit_degree <= 8; ++fit_degree)
      for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> truth(d + 1);
        for (auto& c : truth) c = coef(rng) / static_cast<double>(d);
        std::vector<double> y(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) {
          double lx = std::log10(t[k]), acc = 0.0, p = 1.0;
          for (double c : truth) {
            acc += c * p;
            p *= lx;
          }
          y[k] = std::pow(10.0, acc);
        }
        const auto fit = fit_pixel(y, t, fit_degree);
        for (std::size_t i = 0; i <= fit_degree; ++i)
          worst = std::max(worst, std::abs(fit.coefficients[i] - (i <= d ? truth[i] : 0.0)));
      }
  ok = ok && worst <= 1e-8;
  report(4, ok, "a1=" + fmt("%.12f", j["a1"].get<double>()) + " dT/dlogt dev=" +
                    fmt("%.1e", j["first_derivative_max_deviation"].get<double>()) + " d2 max=" +
                    fmt("%.1e", j["second_derivative_max_abs"].get<double>()) + " poly err=" + fmt("%.1e", worst));
}

void criterion_gradients(std::uint64_t seed) {
  const auto j = gradient_self_check(seed, 100);
  report(5, j["pass"].get<bool>(),
         "100 pairs x 2 architectures, max relative error " + fmt("%.2e", j["max_relative_error"].get<double>()));
}

void criterion_schedule() {
  const auto j = schedule_checks();
  // direct replay of the spec sequence
  EarlyStopper s(3);
  std::vector<bool> halts;
  for (double l : {0.50, 0.52, 0.55, 0.58}) halts.push_back(s.observe(l));
  TrainConfig c;
  c.optimizer = OptimizerKind::sgd_decay;
  c.learning_rate = 1e-7;
  c.decay_step = 1000;
  c.decay_rate = 0.9;
  const double lr = lr_at(c, 2500);
  const bool ok = j["pass"].get<bool>() && halts == std::vector<bool>{false, false, false, true} && s.anchor() == 0 &&
                  std::abs(lr - 1e-7 * 0.81) <= 1e-21;
  report(7, ok, "halt at check 4, restore check " + std::to_string(s.anchor() + 1) + ", lr_at(2500)=" + fmt("%.3g", lr));
}

// Every regular file under `a` must exist under `b` with identical bytes.
bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files, std::string& first_diff) {
  files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    if (!fs::exists(b / rel) || text::read_file(e.path()) != text::read_file(b / rel)) {
      first_diff = rel.string();
      return false;
    }
  }
  return files > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string out = "acceptance_out";
  std::size_t workers = 0;
  bool verbose = false;
  app.add_option("--out", out, "scratch/output directory");
  app.add_option("--workers", workers, "cap on parallel workers");
  app.add_flag("-v,--verbose", verbose, "training progress on stderr");
  CLI11_PARSE(app, argc, argv);
  if (workers) worker_limit().store(static_cast<unsigned>(workers));

  const fs::path root = out;
  fs::remove_all(root);
  fs::create_directories(root);
  ReproOptions opts;
  opts.log = verbose ? &std::cerr : nullptr;

  struct Run {
    json result;
    double seconds;
  };
  auto run = [&](const std::string& exp, const fs::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = cmd_repro(exp, dir, opts);
    return Run{r, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  };

  try {
    const auto two_a = run("synthetic-2class", root / "synthetic-2class/run1");
    criterion_metrics(two_a.result["reference_metrics"]);

    const auto& e2 = two_a.result["result"];
    report(2, e2["pass"].get<bool>() && two_a.seconds <= 15 * 60,
           "in-sample " + fmt("%.2f%%", 100 * e2["insample_accuracy"].get<double>()) + " (>= 93%), composite " +
               fmt("%.2f%%", 100 * e2["outsample_accuracy"].get<double>()) + " (>= 88%), " +
               fmt("%.0f s", two_a.seconds) + " (<= 900 s)");

    const auto four_a = run("surrogate-4class", root / "surrogate-4class/run1");
    const auto& e4 = four_a.result["result"];
    report(3, e4["pass"].get<bool>() && e4["feature_count"].get<std::size_t>() == 15 && four_a.seconds <= 30 * 60,
           "validation " + fmt("%.2f%%", 100 * e4["validation_accuracy"].get<double>()) + " (>= 90%), perturbed drop " +
               fmt("%.2f pp", e4["replay"]["drop_pp"].get<double>()) + " (<= 5 pp), " +
               fmt("%.0f s", four_a.seconds) + " (<= 1800 s)");

    criterion_tsr();
    criterion_gradients(two_a.result["seed"].get<std::uint64_t>());

    run("synthetic-2class", root / "synthetic-2class/run2");
    run("surrogate-4class", root / "surrogate-4class/run2");
    bool det = true;
    std::string detail;
    for (const char* exp : {"synthetic-2class", "surrogate-4class"}) {
      std::size_t files = 0;
      std::string diff;
      const bool same = same_tree(root / exp / "run1", root / exp / "run2", files, diff);
      det = det && same;
      detail += std::string(exp) + ": " + (same ? std::to_string(files) + " files identical" : "differs at " + diff) + "; ";
    }
    report(6, det, detail);

    criterion_schedule();

    const bool documented = two_a.result["real_hardware_reproducible"] == false &&
                            four_a.result["real_hardware_reproducible"] == false &&
                            text::read_file(root / "surrogate-4class/run1/report.txt").find("not reproducible") != std::string::npos;
    report(8, documented,
           "real-hardware accuracy not reproducible without the original recordings; recorded as such in results.json "
           "and report.txt, with criteria 2-3 as substitutes");
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }

  bool all = lines.size() == 8;
  for (const auto& l : lines) all = all && l.pass;
  std::printf("%s: %zu/8 criteria passed\n", all ? "PASS" : "FAIL",
              static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [](const Line& l) { return l.pass; })));
  return all ? 0 : 1;
}
