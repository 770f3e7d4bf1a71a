// Command-line front end: gradient checking, synthetic data generation,
// single-configuration training, the ablation grid, the layer sweep, and a
// small worked example of one attention step.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "triattn/ablation.hpp"
#include "triattn/data.hpp"
#include "triattn/grad.hpp"
#include "triattn/model.hpp"
#include "triattn/serialize.hpp"

namespace {

using namespace triattn;

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void writeFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  out << text;
  if (!out) {
    throw std::runtime_error("write failed for " + path);
  }
}

TriVariant variantOrThrow(const std::string& s) {
  const auto v = parseVariant(s);
  if (!v) {
    throw std::invalid_argument("unknown variant '" + s + "'");
  }
  return *v;
}

ValueIntegration integrationOrThrow(const std::string& s) {
  const auto v = parseIntegration(s);
  if (!v) {
    throw std::invalid_argument("unknown integration '" + s + "'");
  }
  return *v;
}

NetMode modeOrThrow(const std::string& s) {
  const auto v = parseMode(s);
  if (!v) {
    throw std::invalid_argument("unknown mode '" + s + "'");
  }
  return *v;
}

std::vector<std::uint64_t> seedRange(int n) {
  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= n; ++s) {
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  return seeds;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckOpts {
  std::string variant;
  std::string integration;
  std::uint64_t seed = 1;
};

int runGradcheck(const GradcheckOpts& opt) {
  constexpr Index d = 5, i = 4, j = 3;
  if (!opt.variant.empty()) {
    const TriVariant v = variantOrThrow(opt.variant);
    const ValueIntegration integ = opt.integration.empty()
                                       ? defaultIntegration(v)
                                       : integrationOrThrow(opt.integration);
    const GradCheckReport report = gradcheckReport(v, integ, d, i, j, opt.seed);
    std::cout << toJson(report) << "\n";
    return report.pass ? 0 : 1;
  }
  std::vector<GradCheckReport> reports;
  bool all_pass = true;
  for (const TriVariant v :
       {TriVariant::TAdd, TriVariant::TDP, TriVariant::TSDP,
        TriVariant::TriliFull, TriVariant::TriliEconomic}) {
    for (const ValueIntegration integ :
         {ValueIntegration::Additive, ValueIntegration::Multiplicative,
          ValueIntegration::Bilinear}) {
      for (const std::uint64_t seed : {1, 2, 3}) {
        reports.push_back(gradcheckReport(v, integ, d, i, j, seed));
        all_pass = all_pass && reports.back().pass;
      }
    }
  }
  std::cout << toJson(reports) << "\n";
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------- gen

struct GenOpts {
  std::string out = "synthetic";
  std::uint64_t seed = 7;
};

int runGen(const GenOpts& opt) {
  SyntheticSpec spec;
  spec.seed = opt.seed;
  const Dataset ds = genSynthetic(spec);
  const std::string train_path = opt.out + ".train.jsonl";
  const std::string test_path = opt.out + ".test.jsonl";
  writeJsonl(train_path, ds.train);
  writeJsonl(test_path, ds.test);
  std::cout << "wrote " << ds.train.size() << " examples to " << train_path
            << "\n";
  std::cout << "wrote " << ds.test.size() << " examples to " << test_path
            << "\n";
  return 0;
}

// -------------------------------------------------------------------- train

struct TrainOpts {
  std::string config_path;
  std::string variant;
  std::string integration;
  std::string mode;
  int layers = 0;
  bool layers_set = false;
  bool seed_set = false;
  std::uint64_t seed = 1;
  std::string out;
};

TanConfig resolveConfig(const std::string& config_path,
                        const std::string& variant,
                        const std::string& integration,
                        const std::string& mode, bool layers_set, int layers,
                        bool seed_set, std::uint64_t seed) {
  TanConfig cfg = config_path.empty() ? defaultAblationConfig()
                                      : configFromJson(readFile(config_path));
  if (!variant.empty()) {
    cfg.variant = variantOrThrow(variant);
    // A variant override without an explicit integration falls back to the
    // matched pairing rather than keeping a stale one.
    if (integration.empty()) {
      cfg.integration = defaultIntegration(cfg.variant);
    }
  }
  if (!integration.empty()) {
    cfg.integration = integrationOrThrow(integration);
  }
  if (!mode.empty()) {
    cfg.mode = modeOrThrow(mode);
  }
  if (layers_set) {
    cfg.layers = layers;
  }
  if (seed_set) {
    cfg.seed = seed;
  }
  return cfg;
}

int runTrain(const TrainOpts& opt) {
  const TanConfig cfg =
      resolveConfig(opt.config_path, opt.variant, opt.integration, opt.mode,
                    opt.layers_set, opt.layers, opt.seed_set, opt.seed);
  validateConfig(cfg);
  const SyntheticSpec spec;
  const Dataset ds = genSynthetic(spec);
  std::cout << "mode=" << modeName(cfg.mode)
            << " variant=" << variantName(cfg.variant)
            << " integration=" << integrationName(cfg.integration)
            << " layers=" << cfg.layers << " seed=" << cfg.seed << "\n";
  std::cout << "train " << ds.train.size() << " / test " << ds.test.size()
            << " examples\n";
  const TrainResult result = train(cfg, ds.train, spec.vocab_size);
  for (std::size_t e = 0; e < result.epochs.size(); ++e) {
    std::printf("epoch %2zu  loss %.4f  acc %.4f\n", e + 1,
                result.epochs[e].loss, result.epochs[e].accuracy);
  }
  const EvalMetrics metrics = evaluate(result.state, cfg, ds.test);
  std::printf("test accuracy %.4f  f1 %.4f\n", metrics.accuracy, metrics.f1);
  if (!opt.out.empty()) {
    saveModel(opt.out, result.state);
    std::cout << "saved model to " << opt.out << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- ablate

struct AblateOpts {
  std::string config_path;
  int seeds = 5;
  std::string out;
};

int runAblate(const AblateOpts& opt) {
  const TanConfig base = opt.config_path.empty()
                             ? defaultAblationConfig()
                             : configFromJson(readFile(opt.config_path));
  const std::vector<AblationCell> grid = defaultAblationGrid();
  std::cerr << "running " << grid.size() << " cells x " << opt.seeds
            << " seeds\n";
  const AblationReport report =
      runAblation(grid, base, SyntheticSpec{}, seedRange(opt.seeds));
  const std::string csv = ablationCsv(report);
  if (opt.out.empty()) {
    std::cout << csv;
  } else {
    writeFile(opt.out, csv);
    std::cout << "wrote " << opt.out << "\n";
  }
  return 0;
}

// -------------------------------------------------------------------- sweep

struct SweepOpts {
  std::string config_path;
  int layers = 4;
  int seeds = 2;
  std::string out;
};

int runSweep(const SweepOpts& opt) {
  const TanConfig base = opt.config_path.empty()
                             ? defaultAblationConfig()
                             : configFromJson(readFile(opt.config_path));
  std::vector<int> layer_counts;
  for (int n = 1; n <= opt.layers; ++n) {
    layer_counts.push_back(n);
  }
  std::cerr << "sweeping layers 1.." << opt.layers << " x " << opt.seeds
            << " seeds\n";
  const AblationReport report =
      runLayerSweep(base, SyntheticSpec{}, layer_counts, seedRange(opt.seeds));
  const std::string csv = sweepCsv(report);
  if (opt.out.empty()) {
    std::cout << csv;
  } else {
    writeFile(opt.out, csv);
    writeFile(opt.out + ".plot", sweepPlotData(report));
    std::cout << "wrote " << opt.out << " and " << opt.out << ".plot\n";
  }
  return 0;
}

// --------------------------------------------------------------------- demo

struct DemoOpts {
  std::string variant = "tdp";
  std::string integration;
};

void printVector(const char* label, const Vectord& v) {
  std::printf("%s", label);
  for (Index i = 0; i < v.size(); ++i) {
    std::printf(" % .4f", v[i]);
  }
  std::printf("\n");
}

void printColumns(const char* label, const Matrixd& m) {
  std::printf("%s\n", label);
  for (Index c = 0; c < m.cols(); ++c) {
    std::printf("  col %lld:", static_cast<long long>(c));
    for (Index r = 0; r < m.rows(); ++r) {
      std::printf(" % .4f", m(r, c));
    }
    std::printf("\n");
  }
}

int runDemo(const DemoOpts& opt) {
  const TriVariant variant = variantOrThrow(opt.variant);
  const ValueIntegration integration =
      opt.integration.empty() ? defaultIntegration(variant)
                              : integrationOrThrow(opt.integration);
  constexpr Index d = 3;

  Vectord q(d);
  q << 0.2, -0.4, 0.6;
  Matrixd K(d, 2);
  K << 1.0, -0.5, 0.0, 0.8, 0.5, 0.1;
  Matrixd V(d, 2);
  V << 0.3, 0.7, 0.9, -0.1, -0.2, 0.4;
  Matrixd C(d, 2);
  C << 0.5, -0.2, 0.5, 0.3, 0.0, 0.9;

  TriParams<double> params;
  params.W.resize(d, d);
  params.W << 0.4, 0.1, 0.0, 0.0, 0.5, -0.1, 0.2, 0.0, 0.3;
  params.U.resize(d, d);
  params.U << 0.3, 0.0, 0.1, -0.1, 0.4, 0.0, 0.0, 0.2, 0.5;
  params.H.resize(d, d);
  params.H << 0.5, -0.2, 0.0, 0.0, 0.3, 0.1, 0.1, 0.0, 0.4;
  params.p.resize(d);
  params.p << 1.0, 0.5, 0.25;
  params.Uv.resize(d, d);
  params.Uv << 0.6, 0.0, 0.1, 0.0, 0.7, 0.0, 0.1, 0.0, 0.5;
  params.Hc.resize(d, d);
  params.Hc << 0.5, 0.1, 0.0, 0.0, 0.6, 0.1, 0.0, 0.0, 0.7;
  params.Wt = Tensor3<double>(d, d, d);
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) {
      for (Index c = 0; c < d; ++c) {
        params.Wt(a, b, c) =
            0.1 * double(a + 1) + 0.05 * double(b + 1) - 0.02 * double(c + 1);
      }
    }
  }

  std::printf("one attention step: variant=%s integration=%s\n",
              variantName(variant), integrationName(integration));
  printVector("query q:", q);
  printColumns("keys K:", K);
  printColumns("values V:", V);
  printColumns("context C:", C);

  const Matrixd s = triScore(variant, q, K, C, params);
  std::printf("score grid s(key, context):\n");
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.cols(); ++j) {
      std::printf("  s(%lld,%lld) = % .6f\n", static_cast<long long>(i),
                  static_cast<long long>(j), s(i, j));
    }
  }

  const auto result = triAttendDetailed(variant, integration, q, K, V, C,
                                        params);
  std::printf("attention weights, joint softmax over all key-context pairs:\n");
  double sum = 0.0;
  for (Index i = 0; i < result.weights.rows(); ++i) {
    for (Index j = 0; j < result.weights.cols(); ++j) {
      std::printf("  a(%lld,%lld) = %.12f\n", static_cast<long long>(i),
                  static_cast<long long>(j), result.weights(i, j));
      sum += result.weights(i, j);
    }
  }
  std::printf("weight sum = %.12f\n", sum);

  const Tensor3<double> vc = contextualValue(integration, V, C, params);
  std::printf("contextual values, fiber (key, context):\n");
  for (Index i = 0; i < vc.dim1(); ++i) {
    for (Index j = 0; j < vc.dim2(); ++j) {
      std::printf("  vc(%lld,%lld) =", static_cast<long long>(i),
                  static_cast<long long>(j));
      for (Index r = 0; r < vc.dim3(); ++r) {
        std::printf(" % .4f", vc(i, j, r));
      }
      std::printf("\n");
    }
  }
  printVector("attended embedding:", result.q_new);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "triattn: query-key-context attention with a stacked pair classifier"};
  app.require_subcommand(0, 1);

  const std::vector<std::string> variant_names = {"tadd", "tdp", "tsdp",
                                                  "trili-full", "trili-econ"};
  const std::vector<std::string> integration_names = {"add", "mul", "bili"};
  const std::vector<std::string> mode_names = {"bi", "c-bi", "tri"};

  GradcheckOpts gc;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "compare analytic attention gradients with central "
                   "differences and print a JSON report");
  gradcheck->add_option("--variant", gc.variant, "score variant; omit to run "
                                                 "the full suite")
      ->check(CLI::IsMember(variant_names));
  gradcheck->add_option("--integration", gc.integration,
                        "value integration; defaults to the variant's pairing")
      ->check(CLI::IsMember(integration_names));
  gradcheck->add_option("--seed", gc.seed, "random input seed");

  GenOpts gen;
  CLI::App* gen_cmd = app.add_subcommand(
      "gen", "write the synthetic gated-pair dataset as line-delimited JSON");
  gen_cmd->add_option("--out", gen.out,
                      "output path prefix (<out>.train.jsonl, "
                      "<out>.test.jsonl)");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");

  TrainOpts tr;
  CLI::App* train_cmd = app.add_subcommand(
      "train", "train one configuration on the synthetic dataset");
  train_cmd->add_option("--config", tr.config_path,
                        "JSON config file; flags override its fields");
  train_cmd->add_option("--variant", tr.variant, "score variant")
      ->check(CLI::IsMember(variant_names));
  train_cmd->add_option("--integration", tr.integration, "value integration")
      ->check(CLI::IsMember(integration_names));
  train_cmd->add_option("--mode", tr.mode, "attention mode")
      ->check(CLI::IsMember(mode_names));
  CLI::Option* tr_layers =
      train_cmd->add_option("--layers", tr.layers, "interaction stack depth")
          ->check(CLI::Range(1, 8));
  CLI::Option* tr_seed =
      train_cmd->add_option("--seed", tr.seed, "training seed");
  train_cmd->add_option("--out", tr.out, "save the trained model as JSON");

  AblateOpts ab;
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "run the bi / c-bi / tri grid over four variants and report "
                "mean accuracy per cell as CSV");
  ablate_cmd->add_option("--config", ab.config_path,
                         "JSON config file overriding the training recipe");
  ablate_cmd->add_option("--seeds", ab.seeds, "number of seeds (1..n)")
      ->check(CLI::Range(1, 64));
  ablate_cmd->add_option("--out", ab.out, "CSV output path (default stdout)");

  SweepOpts sw;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "sweep the interaction stack depth for every variant and "
               "report accuracy per depth as CSV");
  sweep_cmd->add_option("--config", sw.config_path,
                        "JSON config file overriding the training recipe");
  sweep_cmd->add_option("--layers", sw.layers, "sweep depths 1..n")
      ->check(CLI::Range(1, 8));
  sweep_cmd->add_option("--seeds", sw.seeds, "number of seeds (1..n)")
      ->check(CLI::Range(1, 64));
  sweep_cmd->add_option("--out", sw.out,
                        "CSV output path; also writes <out>.plot "
                        "(default stdout, no plot file)");

  DemoOpts dm;
  CLI::App* demo_cmd = app.add_subcommand(
      "demo", "print one worked attention step on fixed small inputs");
  demo_cmd->add_option("--variant", dm.variant, "score variant")
      ->check(CLI::IsMember(variant_names));
  demo_cmd->add_option("--integration", dm.integration,
                       "value integration; defaults to the variant's pairing")
      ->check(CLI::IsMember(integration_names));

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  tr.layers_set = tr_layers->count() > 0;
  tr.seed_set = tr_seed->count() > 0;

  try {
    if (gradcheck->parsed()) {
      return runGradcheck(gc);
    }
    if (gen_cmd->parsed()) {
      return runGen(gen);
    }
    if (train_cmd->parsed()) {
      return runTrain(tr);
    }
    if (ablate_cmd->parsed()) {
      return runAblate(ab);
    }
    if (sweep_cmd->parsed()) {
      return runSweep(sw);
    }
    if (demo_cmd->parsed()) {
      return runDemo(dm);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help();
  return 2;
}
