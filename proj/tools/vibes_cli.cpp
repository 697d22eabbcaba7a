// vibes: budgeted backbone selection from the command line.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vibes/vibes.hpp"

namespace fs = std::filesystem;
using namespace vibes;

namespace {

struct StudyConfig {
  fs::path workdir = ".";
  std::string registry;
  std::string trace;
  std::string cache_root;
  std::vector<std::string> strategies;
  std::vector<std::string> evaluators;
  double t_max = 0.0;
  std::string t_grid;
  std::size_t n_runs = 30;
  std::uint64_t seed = 0;
  std::string out = ".";
  bool final_full_eval = false;
  bool tau_includes_extraction = false;
  std::string stats = "median";
  std::size_t threads = 0;
  bool svg = false;
  bool log_x = false;
  std::vector<std::string> baselines;
  double reg_c = 1.0;
  std::size_t max_iter = 100;
};

fs::path resolve(const StudyConfig& cfg, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : cfg.workdir / path;
}

std::string joined_names(auto const& all) {
  std::string out;
  for (const auto v : all) out += (out.empty() ? "" : ", ") + std::string(to_string(v));
  return out;
}

Strategy strategy_from(const std::string& name) {
  if (const auto s = parse_strategy(name)) return *s;
  throw ConfigError("unknown strategy '" + name + "'; valid names: " + joined_names(kAllStrategies));
}

Evaluator evaluator_from(const std::string& name) {
  if (const auto e = parse_evaluator(name)) return *e;
  throw ConfigError("unknown evaluator '" + name + "'; valid names: " + joined_names(kAllEvaluators));
}

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ','))
      if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  for (const auto& part : split_list({text})) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size()) throw ConfigError("bad budget value '" + part + "'");
    grid.push_back(v);
  }
  return grid;
}

std::size_t thread_count(const StudyConfig& cfg) {
  std::size_t n = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("VIBES_THREADS")) {
    const long limit = std::strtol(cap, nullptr, 10);
    if (limit >= 1) n = std::min(n, static_cast<std::size_t>(limit));
  }
  return n;
}

struct Backend {
  Registry registry;
  std::unique_ptr<EvaluationBackend> backend;
  LiveBackend* live = nullptr;
};

Backend open_backend(const StudyConfig& cfg) {
  if (cfg.registry.empty()) throw ConfigError("--registry is required");
  if (cfg.trace.empty() == cfg.cache_root.empty()) throw ConfigError("give exactly one of --trace or --cache-root");
  Backend b{load_registry(resolve(cfg, cfg.registry)), nullptr};
  if (!cfg.trace.empty()) {
    b.backend = std::make_unique<ReplayBackend>(load_trace(resolve(cfg, cfg.trace), b.registry));
  } else {
    LiveOptions opts;
    opts.logreg.reg_c = cfg.reg_c;
    opts.logreg.max_iter = cfg.max_iter;
    opts.tau_includes_extraction = cfg.tau_includes_extraction;
    const fs::path root = resolve(cfg, cfg.cache_root);
    const Registry* registry = &b.registry;
    auto live = std::make_unique<LiveBackend>(
        [root, registry](std::string_view id) {
          const fs::path dir = root / std::string(id);
          if (!fs::exists(dir / "meta.json")) throw DataError("missing feature cache '" + dir.string() + "'");
          return load_feature_cache(dir, *registry);
        },
        opts);
    b.live = live.get();
    b.backend = std::move(live);
  }
  return b;
}

void write_emitted_trace(const StudyConfig& cfg, const Backend& b) {
  if (b.live == nullptr) return;
  const fs::path path = resolve(cfg, cfg.out) / "trace.jsonl";
  write_trace(path, b.live->emitted_trace());
  std::cerr << "wrote " << path.string() << "\n";
}

int cmd_search(const StudyConfig& cfg) {
  if (cfg.strategies.size() != 1 || cfg.evaluators.size() != 1)
    throw ConfigError("search takes exactly one --strategy and one --evaluator");
  const Strategy strategy = strategy_from(cfg.strategies.front());
  const Evaluator evaluator = evaluator_from(cfg.evaluators.front());
  if (!(cfg.t_max > 0.0)) throw ConfigError("--t-max must be positive");
  auto b = open_backend(cfg);

  const auto perm = make_permutation(strategy, b.registry, cfg.seed);
  const auto outcome = budgeted_search(perm, *b.backend, evaluator, cfg.t_max);

  auto j = outcome_to_json(outcome);
  j["strategy"] = std::string(to_string(strategy));
  j["evaluator"] = std::string(to_string(evaluator));
  j["t_max_seconds"] = cfg.t_max;
  j["seed"] = cfg.seed;
  j["selected_test_metric"] = nullptr;
  if (outcome.selected) {
    j["selected_test_metric"] = b.backend->evaluate(*outcome.selected, evaluator).test_metric;
    if (cfg.final_full_eval) {
      const auto full = b.backend->evaluate(*outcome.selected, Evaluator::logreg);
      j["final_full_eval"] = {{"evaluator", "logreg"},
                              {"val_metric", full.val_metric},
                              {"test_metric", full.test_metric},
                              {"tau_seconds", full.tau_seconds}};
    }
  }
  const fs::path path = resolve(cfg, cfg.out) / "search_outcome.json";
  write_file_atomic(path, j.dump(2) + "\n");
  std::cout << "selected " << (outcome.selected ? *outcome.selected : std::string("none")) << " after k=" << outcome.k
            << " evaluations (" << format_number(outcome.budget_used_seconds) << " s)\n";
  write_emitted_trace(cfg, b);
  return 0;
}

int cmd_bsec(const StudyConfig& cfg) {
  if (cfg.strategies.empty()) throw ConfigError("bsec needs at least one --strategy");
  if (cfg.evaluators.empty()) throw ConfigError("bsec needs at least one --evaluator");
  std::vector<Strategy> strategies;
  for (const auto& s : cfg.strategies) strategies.push_back(strategy_from(s));
  std::vector<Evaluator> evaluators;
  for (const auto& e : cfg.evaluators) evaluators.push_back(evaluator_from(e));
  if (cfg.stats != "median" && cfg.stats != "mean") throw ConfigError("--stats must be 'median' or 'mean'");
  const auto grid = parse_grid(cfg.t_grid);
  auto b = open_backend(cfg);
  if (b.live != nullptr) std::cerr << "warning: live BSEC uses measured wall time; the budget grid is in wall seconds\n";

  BsecOptions opts;
  opts.n_runs = cfg.n_runs;
  opts.base_seed = cfg.seed;
  opts.threads = thread_count(cfg);
  opts.stat = cfg.stats == "mean" ? CentralStat::mean : CentralStat::median;
  opts.final_full_eval = cfg.final_full_eval;

  const fs::path out = resolve(cfg, cfg.out);
  std::vector<BsecCurve> curves;
  for (const auto strategy : strategies) {
    for (const auto evaluator : evaluators) {
      auto curve = bsec(b.registry, *b.backend, strategy, evaluator, grid, opts);
      const fs::path path =
          out / ("bsec_" + std::string(to_string(strategy)) + "_" + std::string(to_string(evaluator)) + ".csv");
      write_file_atomic(path, format_bsec_csv(curve));
      std::cout << "wrote " << path.string() << " (" << curve.points.size() << " points)\n";
      curves.push_back(std::move(curve));
    }
  }

  if (cfg.svg) {
    std::vector<SvgBaseline> baselines;
    for (const auto& baseline : cfg.baselines) {
      const auto colon = baseline.find(':');
      const std::string id = baseline.substr(0, colon);
      const std::string label = colon == std::string::npos ? id : baseline.substr(colon + 1);
      if (b.registry.find(id) == nullptr) throw DataError("baseline backbone '" + id + "' is not in the registry");
      baselines.push_back({label, b.backend->evaluate(id, Evaluator::logreg).test_metric});
    }
    SvgOptions svg_opts;
    svg_opts.log_x = cfg.log_x;
    const fs::path path = out / "bsec.svg";
    write_file_atomic(path, render_bsec_svg(curves, baselines, svg_opts));
    std::cout << "wrote " << path.string() << "\n";
  }
  write_emitted_trace(cfg, b);
  return 0;
}

int cmd_correlate(const StudyConfig& cfg, const std::string& trace_a, const std::string& trace_b,
                  const std::string& eval_a, const std::string& eval_b, const std::string& output) {
  std::optional<Registry> registry;
  if (!cfg.registry.empty()) registry = load_registry(resolve(cfg, cfg.registry));
  const Registry* reg = registry ? &*registry : nullptr;
  const auto a = load_trace(resolve(cfg, trace_a), reg);
  const auto b = load_trace(resolve(cfg, trace_b), reg);
  std::optional<Evaluator> ea, eb;
  if (!eval_a.empty()) ea = evaluator_from(eval_a);
  if (!eval_b.empty()) eb = evaluator_from(eval_b);
  const auto report = correlate_evaluators(a, b, ea, eb);
  const fs::path path = resolve(cfg, output);
  write_file_atomic(path, format_correlation_csv(report));
  std::cout << "pearson_r=" << format_number(report.pearson_r)
            << " fraction_a_ge_b=" << format_number(report.fraction_a_ge_b) << " over " << report.points.size()
            << " backbones\n";
  return 0;
}

int cmd_split(const StudyConfig& cfg, const std::string& labels_path, std::size_t n_per_class,
              const std::string& output) {
  std::istringstream in(read_text_file(resolve(cfg, labels_path)));
  std::vector<std::int64_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(line.data() + first, line.data() + last + 1, v);
    if (ec != std::errc{} || ptr != line.data() + last + 1)
      throw DataError(labels_path + ":" + std::to_string(line_no) + ": expected an integer label");
    labels.push_back(v);
  }
  const auto indices = subsample_per_class(labels, n_per_class, cfg.seed);

  std::map<std::int64_t, std::size_t> counts;
  for (const auto y : labels) ++counts[y];
  for (const auto& [label, count] : counts)
    if (count < n_per_class)
      std::cerr << "warning: class " << label << " has only " << count << " items; taking all of them\n";

  std::string text;
  for (const auto i : indices) text += std::to_string(i) + "\n";
  write_file_atomic(resolve(cfg, output), text);
  return 0;
}

int cmd_eval_live(StudyConfig cfg, const std::string& output) {
  if (cfg.cache_root.empty()) throw ConfigError("eval-live needs --cache-root");
  if (cfg.evaluators.empty()) throw ConfigError("eval-live needs at least one --evaluator");
  std::vector<Evaluator> evaluators;
  for (const auto& e : cfg.evaluators) evaluators.push_back(evaluator_from(e));
  cfg.trace.clear();
  auto b = open_backend(cfg);
  for (const auto& record : b.registry.backbones())
    for (const auto e : evaluators) b.backend->evaluate(record.id, e);
  const fs::path path = resolve(cfg, output);
  write_trace(path, b.live->emitted_trace());
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted backbone selection: searches, efficiency curves, evaluator correlation."};
  app.require_subcommand(1);
  StudyConfig cfg;
  app.add_option("--workdir", cfg.workdir, "Base directory for relative paths");
  app.fallthrough();

  auto add_source = [&](CLI::App* sub) {
    sub->add_option("--registry", cfg.registry, "Registry file (JSON lines)");
    sub->add_option("--trace", cfg.trace, "Recorded trace to replay");
    sub->add_option("--cache-root", cfg.cache_root, "Directory of feature caches, one subdirectory per backbone id");
    sub->add_flag("--tau-includes-extraction", cfg.tau_includes_extraction,
                  "Add recorded download/extraction seconds to live costs");
    sub->add_option("--reg-c", cfg.reg_c, "Logistic regression inverse L2 strength");
    sub->add_option("--max-iter", cfg.max_iter, "Logistic regression iteration cap");
  };

  auto* search = app.add_subcommand("search", "Run one budgeted search");
  add_source(search);
  search->add_option("--strategy", cfg.strategies, "Sampling strategy");
  search->add_option("--evaluator", cfg.evaluators, "Evaluator used during search");
  search->add_option("--t-max", cfg.t_max, "Time budget in seconds")->required();
  search->add_option("--seed", cfg.seed, "Seed for stochastic strategies");
  search->add_option("--out", cfg.out, "Output directory");
  search->add_flag("--final-full-eval", cfg.final_full_eval, "Re-score the selection with logistic regression");

  auto* bsec_cmd = app.add_subcommand("bsec", "Build backbone selection efficiency curves");
  add_source(bsec_cmd);
  bsec_cmd->add_option("--strategy", cfg.strategies, "Sampling strategies (repeat or comma-separate)");
  bsec_cmd->add_option("--evaluator", cfg.evaluators, "Evaluators (repeat or comma-separate)");
  bsec_cmd->add_option("--t-grid", cfg.t_grid, "Comma-separated, strictly increasing budgets in seconds")->required();
  bsec_cmd->add_option("--n-runs", cfg.n_runs, "Runs per strategy");
  bsec_cmd->add_option("--seed", cfg.seed, "Base seed; run r uses seed + r");
  bsec_cmd->add_option("--out", cfg.out, "Output directory");
  bsec_cmd->add_option("--stats", cfg.stats, "median (25-75 band) or mean (+/- one std)");
  bsec_cmd->add_option("--threads", cfg.threads, "Worker threads (capped by VIBES_THREADS)");
  bsec_cmd->add_flag("--final-full-eval", cfg.final_full_eval, "Score selections with logistic regression");
  bsec_cmd->add_flag("--svg", cfg.svg, "Also write bsec.svg");
  bsec_cmd->add_flag("--log-x", cfg.log_x, "Logarithmic budget axis in the SVG");
  bsec_cmd->add_option("--baseline", cfg.baselines, "Baseline backbone as id:label (repeatable)");

  std::string trace_a, trace_b, eval_a, eval_b, corr_out = "correlation.csv";
  auto* correlate = app.add_subcommand("correlate", "Correlate validation metrics of two traces");
  correlate->add_option("--trace-a", trace_a, "First trace")->required();
  correlate->add_option("--trace-b", trace_b, "Second trace")->required();
  correlate->add_option("--evaluator-a", eval_a, "Only use this evaluator from trace a");
  correlate->add_option("--evaluator-b", eval_b, "Only use this evaluator from trace b");
  correlate->add_option("--registry", cfg.registry, "Optional registry to validate ids against");
  correlate->add_option("--out", corr_out, "Output CSV");

  std::string labels_path, split_out = "indices.txt";
  std::size_t n_per_class = 10;
  auto* split = app.add_subcommand("split", "Sample N indices per class");
  split->add_option("--labels", labels_path, "Labels file, one integer per line")->required();
  split->add_option("--n-per-class", n_per_class, "Samples per class");
  split->add_option("--seed", cfg.seed, "Seed");
  split->add_option("--out", split_out, "Output index file");

  std::string live_out = "trace.jsonl";
  auto* eval_live = app.add_subcommand("eval-live", "Evaluate every registry backbone on its feature cache");
  add_source(eval_live);
  eval_live->add_option("--evaluator", cfg.evaluators, "Evaluators (repeat or comma-separate)");
  eval_live->add_option("--out", live_out, "Output trace file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  cfg.strategies = split_list(cfg.strategies);
  cfg.evaluators = split_list(cfg.evaluators);
  try {
    if (*search) return cmd_search(cfg);
    if (*bsec_cmd) return cmd_bsec(cfg);
    if (*correlate) return cmd_correlate(cfg, trace_a, trace_b, eval_a, eval_b, corr_out);
    if (*split) return cmd_split(cfg, labels_path, n_per_class, split_out);
    if (*eval_live) return cmd_eval_live(cfg, live_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
