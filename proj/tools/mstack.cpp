#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mstack/psis.hpp"
#include "mstack/scoring.hpp"
#include "mstack/simlab.hpp"
#include "mstack/weights.hpp"

using nlohmann::json;

namespace {

using namespace mstack;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

const std::vector<std::string> kMethodOrder = {
    "stacking",        "stack-means", "pseudo-bma", "pseudo-bma-lognormal",
    "pseudo-bma-plus", "bma",         "select-loo", "select-marginal"};

std::string round6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct WeightBlock {
  std::string method;
  WeightVector weights;
  std::optional<double> objective;
  json diagnostics = json::object();
};

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, delim)) out.push_back(item);
  return out;
}

// which optional manifest fields a method needs
void require_log_marginal(const Manifest& mf, const std::string& method) {
  std::vector<std::string> missing;
  for (const auto& m : mf.models)
    if (!m.log_marginal) missing.push_back(m.model_id);
  if (!missing.empty()) {
    std::string msg = "method '" + method + "' needs log_marginal for every model; missing in:";
    for (const auto& id : missing) msg += " '" + id + "'";
    throw ValidationError(msg);
  }
}

void require_pred_mean_and_y(const Manifest& mf) {
  std::vector<std::string> missing;
  for (const auto& m : mf.models)
    if (!m.pred_mean) missing.push_back(m.model_id);
  if (!missing.empty()) {
    std::string msg = "method 'stack-means' needs pred_mean for every model; missing in:";
    for (const auto& id : missing) msg += " '" + id + "'";
    throw MissingPredMean(msg);
  }
  if (!mf.y) throw ValidationError("method 'stack-means' needs the manifest \"y\" vector");
}

bool method_available(const std::string& method, const Manifest& mf, bool have_seed) {
  if (method == "stack-means") {
    for (const auto& m : mf.models)
      if (!m.pred_mean) return false;
    return mf.y.has_value();
  }
  if (method == "bma" || method == "select-marginal") {
    for (const auto& m : mf.models)
      if (!m.log_marginal) return false;
    return true;
  }
  if (method == "pseudo-bma-plus") return have_seed;
  return true;
}

WeightBlock compute_weights(const std::string& method, const Manifest& mf, const LooResult& loo,
                            int bb_samples, std::optional<uint64_t> seed) {
  const Index K = mf.K;
  VectorXd totals(K), ses(K);
  for (Index k = 0; k < K; ++k) {
    totals(k) = loo.elpd[static_cast<size_t>(k)].total;
    ses(k) = loo.elpd[static_cast<size_t>(k)].se;
  }

  WeightBlock block;
  block.method = method;

  if (method == "stacking") {
    const StackingSolution sol = stack_logscore(loo.loo_lpd);
    block.weights = sol.weights;
    block.objective = sol.objective;
    block.diagnostics["iterations"] = sol.iterations;
    block.diagnostics["converged"] = sol.converged;
  } else if (method == "stack-means") {
    require_pred_mean_and_y(mf);
    const StackingSolution sol = stack_means(*loo.loo_mean, *mf.y);
    block.weights = sol.weights;
    block.objective = sol.objective;
    block.diagnostics["converged"] = sol.converged;
  } else if (method == "pseudo-bma") {
    block.weights = pseudo_bma(totals);
  } else if (method == "pseudo-bma-lognormal") {
    block.weights = pseudo_bma_lognormal(totals, ses);
  } else if (method == "pseudo-bma-plus") {
    if (!seed)
      throw ValidationError("method 'pseudo-bma-plus' is randomized; provide --seed or a "
                            "manifest \"seed\"");
    block.weights = pseudo_bma_plus(loo.loo_lpd, bb_samples, *seed);
    block.diagnostics["bb_samples"] = bb_samples;
    block.diagnostics["seed"] = *seed;
  } else if (method == "bma") {
    require_log_marginal(mf, method);
    VectorXd lm(K);
    for (Index k = 0; k < K; ++k) lm(k) = *mf.models[static_cast<size_t>(k)].log_marginal;
    block.weights = bma_weights(lm, mf.prior_or_uniform());
  } else if (method == "select-loo") {
    block.weights = select_best(totals);
  } else if (method == "select-marginal") {
    require_log_marginal(mf, method);
    VectorXd lm(K);
    for (Index k = 0; k < K; ++k) lm(k) = *mf.models[static_cast<size_t>(k)].log_marginal;
    block.weights = select_best(lm);
  } else {
    throw ValidationError("unknown method '" + method + "'");
  }
  return block;
}

std::string table_heading(const std::string& method) {
  if (method == "stacking") return "The stacking weights are:";
  if (method == "pseudo-bma-plus") return "The Pseudo-BMA+ weights using Bayesian Bootstrap are:";
  if (method == "stack-means") return "The stacking-of-means weights are:";
  if (method == "pseudo-bma") return "The Pseudo-BMA weights are:";
  if (method == "pseudo-bma-lognormal") return "The Pseudo-BMA (lognormal) weights are:";
  if (method == "bma") return "The BMA weights are:";
  if (method == "select-loo") return "The selection-by-LOO weights are:";
  return "The selection-by-marginal-likelihood weights are:";
}

void print_weight_table(std::ostream& os, const Manifest& mf, const WeightBlock& block) {
  os << table_heading(block.method) << "\n";
  std::vector<std::string> ids, vals;
  for (Index k = 0; k < mf.K; ++k) {
    ids.push_back("\"" + mf.models[static_cast<size_t>(k)].model_id + "\"");
    vals.push_back("\"" + round6(block.weights.w(k)) + "\"");
  }
  std::string row1 = "[1,]", row2 = "[2,]";
  for (Index k = 0; k < mf.K; ++k) {
    const size_t width = std::max(ids[static_cast<size_t>(k)].size(),
                                  vals[static_cast<size_t>(k)].size()) + 1;
    row1 += " " + ids[static_cast<size_t>(k)] +
            std::string(width - ids[static_cast<size_t>(k)].size() - 1, ' ');
    row2 += " " + vals[static_cast<size_t>(k)] +
            std::string(width - vals[static_cast<size_t>(k)].size() - 1, ' ');
  }
  os << row1 << "\n" << row2 << "\n\n";
}

json block_to_json(const Manifest& mf, const WeightBlock& block) {
  json jw = json::array();
  for (Index k = 0; k < mf.K; ++k) {
    // round to 6 decimals so the file matches the printed table
    const double w6 = std::stod(round6(block.weights.w(k)));
    jw.push_back({{"model", mf.models[static_cast<size_t>(k)].model_id}, {"weight", w6}});
  }
  json j = {{"method", block.method}, {"weights", std::move(jw)}};
  if (block.objective) j["objective"] = *block.objective;
  j["diagnostics"] = block.diagnostics;
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << content;
}

// ---------------------------------------------------------------------------

struct WeightsArgs {
  std::string manifest_path;
  std::string methods = "all";
  int bb_samples = kDefaultBbSamples;
  std::optional<uint64_t> seed;
  std::string out_path;
  std::string format = "json";
  int threads = 1;
};

int cmd_weights(const WeightsArgs& args) {
  if (args.format != "json" && args.format != "csv")
    throw ValidationError("unknown format '" + args.format + "'");
  const Manifest mf = load_manifest(args.manifest_path);
  std::optional<uint64_t> seed = args.seed ? args.seed : mf.seed;

  std::vector<std::string> methods;
  for (const auto& tok : split(args.methods, ',')) {
    if (tok == "all") {
      for (const auto& m : kMethodOrder) {
        if (method_available(m, mf, seed.has_value()))
          methods.push_back(m);
        else
          std::cerr << "note: skipping method '" << m << "' (inputs not in manifest)\n";
      }
    } else {
      if (std::find(kMethodOrder.begin(), kMethodOrder.end(), tok) == kMethodOrder.end())
        throw ValidationError("unknown method '" + tok + "'");
      methods.push_back(tok);
    }
  }
  if (methods.empty()) throw ValidationError("no usable method requested");

  const LooResult loo = loo_all(mf, args.threads);
  std::cerr << loo.high_khat.size() << " of " << mf.n * mf.K
            << " cells have k_hat > " << khat_threshold() << "\n";

  json out_blocks = json::array();
  std::ostringstream csv;
  csv << "method,model,weight\n";
  for (const auto& method : methods) {
    const WeightBlock block = compute_weights(method, mf, loo, args.bb_samples, seed);
    print_weight_table(std::cout, mf, block);
    out_blocks.push_back(block_to_json(mf, block));
    for (Index k = 0; k < mf.K; ++k)
      csv << method << ',' << mf.models[static_cast<size_t>(k)].model_id << ','
          << round6(block.weights.w(k)) << '\n';
  }

  if (!args.out_path.empty()) {
    if (args.format == "json")
      write_text_file(args.out_path, out_blocks.dump(2) + "\n");
    else
      write_text_file(args.out_path, csv.str());
  }
  return kExitOk;
}

struct PsisArgs {
  std::string manifest_path;
  std::string out_prefix = "psis";
  int threads = 1;
};

int cmd_psis(const PsisArgs& args) {
  const Manifest mf = load_manifest(args.manifest_path);
  const LooResult loo = loo_all(mf, args.threads);

  write_matrix_csv(args.out_prefix + "_loo_lpd.csv", loo.loo_lpd);
  write_matrix_csv(args.out_prefix + "_khat.csv", loo.k_hat);

  json elpd = json::array();
  for (Index k = 0; k < mf.K; ++k) {
    const auto& e = loo.elpd[static_cast<size_t>(k)];
    elpd.push_back({{"model", mf.models[static_cast<size_t>(k)].model_id},
                    {"elpd_loo", e.total},
                    {"se", e.se},
                    {"p_loo", e.p_loo}});
  }
  write_text_file(args.out_prefix + "_elpd.json", elpd.dump(2) + "\n");

  json warn = json::array();
  for (const auto& w : loo.high_khat)  // 1-based indices, matching the CSV row/col order
    warn.push_back({{"i", w.i + 1}, {"k", w.k + 1}, {"k_hat", w.k_hat}});
  write_text_file(args.out_prefix + "_warnings.json", warn.dump(2) + "\n");

  std::cerr << loo.high_khat.size() << " of " << mf.n * mf.K
            << " cells have k_hat > " << khat_threshold() << "\n";
  for (const Index k : loo.small_sample_models)
    std::cerr << "model '" << mf.models[static_cast<size_t>(k)].model_id
              << "': n < 5 * p_loo, LOO weighting may be unstable\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_prefix = "report";
  std::optional<uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw ValidationError("cannot open config '" + args.config_path + "'");
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!cfg.contains("experiment")) throw ValidationError("config lacks \"experiment\"");

  ExperimentReport report;
  try {
    const std::string experiment = cfg["experiment"].get<std::string>();
    if (experiment == "gm") {
      GmConfig c;
      if (cfg.contains("mu_true")) c.mu_true = cfg["mu_true"].get<double>();
      if (cfg.contains("model_means")) c.model_means = cfg["model_means"].get<std::vector<double>>();
      if (cfg.contains("n")) c.n = cfg["n"].get<Index>();
      if (cfg.contains("n_test")) c.n_test = cfg["n_test"].get<Index>();
      if (cfg.contains("reps")) c.reps = cfg["reps"].get<int>();
      if (cfg.contains("duplicates_of_4")) c.duplicates_of_4 = cfg["duplicates_of_4"].get<int>();
      if (cfg.contains("seed")) c.seed = cfg["seed"].get<uint64_t>();
      if (args.seed) c.seed = *args.seed;
      report = run_gm_experiment(c);
    } else if (experiment == "regression") {
      RegConfig c;
      if (cfg.contains("J")) c.J = cfg["J"].get<Index>();
      if (cfg.contains("h")) c.h = cfg["h"].get<double>();
      if (cfg.contains("snr")) c.snr = cfg["snr"].get<double>();
      if (cfg.contains("n")) c.n = cfg["n"].get<Index>();
      if (cfg.contains("n_test")) c.n_test = cfg["n_test"].get<Index>();
      if (cfg.contains("mode")) c.mode = parse_reg_mode(cfg["mode"].get<std::string>());
      if (cfg.contains("draws")) c.draws = cfg["draws"].get<Index>();
      if (cfg.contains("reps")) c.reps = cfg["reps"].get<int>();
      if (cfg.contains("seed")) c.seed = cfg["seed"].get<uint64_t>();
      if (args.seed) c.seed = *args.seed;
      report = run_regression_experiment(c);
    } else {
      throw ValidationError("unknown experiment '" + experiment + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }

  write_text_file(args.out_prefix + ".json", report_to_json(report));
  write_text_file(args.out_prefix + ".csv", report_to_csv(report));
  if (!report.gm_duplicates.empty())
    write_text_file(args.out_prefix + "_duplicates.csv", duplicates_to_csv(report));
  if (!report.model_diags.empty())
    write_text_file(args.out_prefix + "_models.csv", model_diags_to_csv(report));

  std::cout << "wrote " << args.out_prefix << ".json and " << args.out_prefix << ".csv\n";
  return kExitOk;
}

struct ScoreArgs {
  std::string draws_path;
  std::string weights_path;
  std::string rule = "log";
  double beta = 1.0;
  std::string grid = "-10:10:1000";
  std::string y_values;
  int samples = 4000;
  std::optional<uint64_t> seed;
  std::string out_path;
};

ScoreGrid parse_grid(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw ValidationError("grid must be LO:HI:N");
  ScoreGrid g;
  try {
    g.lo = std::stod(parts[0]);
    g.hi = std::stod(parts[1]);
    g.points = std::stoi(parts[2]);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse grid '" + s + "'");
  }
  check_grid(g);
  return g;
}

int cmd_score(const ScoreArgs& args) {
  const MatrixXd draws = read_matrix_csv(args.draws_path);
  const Index K = draws.cols();
  if (draws.rows() < 2) throw ValidationError("score: need at least 2 draws per model");

  VectorXd w = VectorXd::Constant(K, 1.0 / static_cast<double>(K));
  if (!args.weights_path.empty()) {
    std::ifstream in(args.weights_path);
    if (!in) throw ValidationError("cannot open weights '" + args.weights_path + "'");
    json jw;
    try {
      in >> jw;
      if (jw.is_object() && jw.contains("weights")) jw = jw["weights"];
      if (jw.is_array() && !jw.empty() && jw[0].is_object() && jw[0].contains("weight")) {
        if (static_cast<Index>(jw.size()) != K)
          throw ValidationError("weights length does not match draw columns");
        for (Index k = 0; k < K; ++k) w(k) = jw[static_cast<size_t>(k)]["weight"].get<double>();
      } else if (jw.is_array()) {
        if (static_cast<Index>(jw.size()) != K)
          throw ValidationError("weights length does not match draw columns");
        for (Index k = 0; k < K; ++k) w(k) = jw[static_cast<size_t>(k)].get<double>();
      } else {
        throw ValidationError("unrecognized weights JSON shape");
      }
    } catch (const json::exception& e) {
      throw ValidationError(std::string("bad weights file: ") + e.what());
    }
  }

  MixtureDensity mix;
  mix.weights = WeightVector::checked(w);
  for (Index k = 0; k < K; ++k) mix.components.push_back(kde_density(draws.col(k)));

  if (args.y_values.empty()) throw ValidationError("score: provide --y as a comma list");
  std::vector<double> ys;
  for (const auto& tok : split(args.y_values, ',')) {
    try {
      ys.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ValidationError("cannot parse y value '" + tok + "'");
    }
  }

  ScoreSpec spec;
  spec.rule = parse_score_rule(args.rule);
  spec.beta = args.beta;
  spec.grid = parse_grid(args.grid);

  std::vector<double> mix_draws;
  if (spec.rule == ScoreRule::energy) {
    if (!args.seed) throw ValidationError("energy score is randomized; provide --seed");
    check_beta(spec.beta);
    if (args.samples < 1000) throw ValidationError("energy score needs --samples >= 1000");
    Rng rng(*args.seed);
    mix_draws.reserve(static_cast<size_t>(args.samples));
    for (int s = 0; s < args.samples; ++s) mix_draws.push_back(mix.sample(rng));
  }

  json results = json::array();
  for (const double y : ys) {
    double score = 0.0;
    switch (spec.rule) {
      case ScoreRule::log: score = log_score(mix, y); break;
      case ScoreRule::quadratic: score = quadratic_score(mix, y, spec.grid); break;
      case ScoreRule::crps: score = crps(mix, y, spec.grid); break;
      case ScoreRule::energy: score = energy_score(mix_draws, y, spec.beta); break;
    }
    results.push_back({{"y", y}, {"score", score}});
  }
  const json out = {{"rule", args.rule}, {"scores", results}};

  if (!args.out_path.empty())
    write_text_file(args.out_path, out.dump(2) + "\n");
  else
    std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model combination weights from pointwise log-likelihood matrices"};
  app.require_subcommand(1);

  WeightsArgs wargs;
  uint64_t seed_in = 0;
  auto* w = app.add_subcommand("weights", "compute combination weights for a manifest");
  w->add_option("--manifest", wargs.manifest_path, "manifest JSON path")->required();
  w->add_option("--method", wargs.methods, "comma list or 'all'");
  w->add_option("--bb-samples", wargs.bb_samples, "Bayesian bootstrap replicates");
  auto* wseed = w->add_option("--seed", seed_in, "seed for randomized methods");
  w->add_option("--out", wargs.out_path, "output file");
  w->add_option("--format", wargs.format, "json|csv");
  w->add_option("--threads", wargs.threads, "worker cap for PSIS-LOO");

  PsisArgs pargs;
  auto* p = app.add_subcommand("psis", "PSIS-LOO diagnostics for a manifest");
  p->add_option("--manifest", pargs.manifest_path, "manifest JSON path")->required();
  p->add_option("--out", pargs.out_prefix, "output file prefix");
  p->add_option("--threads", pargs.threads, "worker cap for PSIS-LOO");

  SimulateArgs sargs;
  uint64_t sim_seed_in = 0;
  auto* s = app.add_subcommand("simulate", "run a bundled simulation experiment");
  s->add_option("--config", sargs.config_path, "experiment config JSON")->required();
  s->add_option("--out", sargs.out_prefix, "output file prefix");
  auto* sseed = s->add_option("--seed", sim_seed_in, "override config seed");

  ScoreArgs cargs;
  uint64_t score_seed_in = 0;
  auto* c = app.add_subcommand("score", "score a weighted mixture of predictive draws");
  c->add_option("--draws", cargs.draws_path, "CSV of predictive draws, one column per model")
      ->required();
  c->add_option("--weights", cargs.weights_path, "weight JSON (defaults to uniform)");
  c->add_option("--rule", cargs.rule, "log|quadratic|crps|energy");
  c->add_option("--beta", cargs.beta, "energy score exponent");
  c->add_option("--grid", cargs.grid, "LO:HI:N quadrature grid");
  c->add_option("--y", cargs.y_values, "comma list of outcomes to score");
  c->add_option("--samples", cargs.samples, "mixture draws for the energy score");
  auto* cseed = c->add_option("--seed", score_seed_in, "seed for the energy score");
  c->add_option("--out", cargs.out_path, "output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (wseed->count() > 0) wargs.seed = seed_in;
  if (sseed->count() > 0) sargs.seed = sim_seed_in;
  if (cseed->count() > 0) cargs.seed = score_seed_in;

  try {
    if (w->parsed()) return cmd_weights(wargs);
    if (p->parsed()) return cmd_psis(pargs);
    if (s->parsed()) return cmd_simulate(sargs);
    if (c->parsed()) return cmd_score(cargs);
    throw ValidationError("no subcommand given");
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
