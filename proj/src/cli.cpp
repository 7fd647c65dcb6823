#include "rewire/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rewire/config.hpp"
#include "rewire/metrics.hpp"
#include "rewire/rng.hpp"

namespace rewire {

namespace {

namespace fs = std::filesystem;

struct FlagSettings {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> kv;  // in CLI order
};

// Every subcommand exposes the same key set; flags funnel through
// apply_setting so file and CLI semantics cannot drift apart.
void add_config_flags(CLI::App* cmd, FlagSettings& flags) {
  cmd->add_option("--config", flags.config_file, "key=value config file");
  static const std::vector<std::array<const char*, 3>> kOptions = {
      {"--dataset", "dataset", "cora | citeseer | pubmed | sbm"},
      {"--data-dir", "data-dir", "directory with converted citation datasets"},
      {"--graph-file", "graph-file", "saved graph container (overrides --dataset)"},
      {"--sbm-block-sizes", "sbm.block-sizes", "comma list of SBM block sizes"},
      {"--sbm-p-in", "sbm.p-in", "within-block edge probability"},
      {"--sbm-p-out", "sbm.p-out", "cross-block edge probability"},
      {"--sbm-feature-dim", "sbm.feature-dim", "SBM feature dimension (0 = blocks+8)"},
      {"--sbm-noise", "sbm.noise", "SBM feature noise scale"},
      {"--arch", "arch", "gcn | gat | graphsage"},
      {"--epochs", "train.epochs", "training epochs"},
      {"--lr", "train.lr", "training learning rate"},
      {"--weight-decay", "train.weight-decay", "L2 weight decay"},
      {"--dropout", "train.dropout", "dropout rate (negative = per-arch default)"},
      {"--hidden", "train.hidden", "hidden layer width"},
      {"--method", "explain.method", "gnnexplainer | pgexplainer"},
      {"--explain-epochs", "explain.epochs", "explainer epochs (negative = default)"},
      {"--explain-lr", "explain.lr", "explainer learning rate (negative = default)"},
      {"--top-k", "explain.top-k", "edges kept per node explanation"},
      {"--lambda-size", "explain.lambda-size", "mask size penalty"},
      {"--lambda-entropy", "explain.lambda-entropy", "mask entropy penalty"},
      {"--gamma", "attack.gamma", "insertion:deletion ratio"},
      {"--edr", "attack.edr", "net edge-difference-rate target"},
      {"--total-ops", "attack.total-ops", "total insertions+deletions"},
      {"--gammas", "sweep.gammas", "comma list of sweep gamma values"},
      {"--inverse", "sweep.inverse", "sweep with 1/gamma (true/false)"},
      {"--num-seeds", "sweep.seeds", "number of sweep seeds"},
      {"--total-rate", "sweep.total-rate", "sweep budget as a fraction of |E|"},
      {"--jobs", "jobs", "worker threads"},
      {"--seed", "seed", "global seed"},
      {"--out", "out", "output root directory"},
  };
  for (const auto& [flag, key, desc] : kOptions) {
    cmd->add_option_function<std::string>(
        flag,
        [&flags, key = std::string(key)](const std::string& value) {
          flags.kv.emplace_back(key, value);
        },
        desc);
  }
}

RunConfig build_config(const FlagSettings& flags) {
  RunConfig config;
  if (!flags.config_file.empty()) config = load_config_file(flags.config_file, config);
  for (const auto& [key, value] : flags.kv) apply_setting(config, key, value);
  return config;
}

// Per-run output directory: <out>/<command>-<timestamp>[-n].
class RunDir {
 public:
  RunDir(const RunConfig& config, const std::string& command,
         const std::vector<std::string>& args) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::tm tm_buf{};
    localtime_r(&now, &tm_buf);
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_buf);
    fs::path base = fs::path(config.out_dir) / (command + "-" + stamp);
    dir_ = base;
    for (int n = 1; fs::exists(dir_); ++n) {
      dir_ = base.concat("-" + std::to_string(n));
    }
    fs::create_directories(dir_);
    manifest_["command"] = command;
    manifest_["args"] = args;
    start_ = std::chrono::steady_clock::now();
    save_config_file(config, file("effective.config"));
    note("effective.config");
  }

  std::string file(const std::string& name) {
    return (dir_ / name).string();
  }

  void note(const std::string& name) { outputs_.push_back(name); }

  std::string path() const { return dir_.string(); }

  void finish() {
    manifest_["outputs"] = outputs_;
    manifest_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ofstream out(dir_ / "manifest.json");
    out << manifest_.dump(2) << "\n";
  }

 private:
  fs::path dir_;
  nlohmann::json manifest_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

void print_graph_stats(const Graph& g) {
  const auto part = partition_edges_by_class(g);
  std::cout << "nodes=" << g.num_nodes() << " directed_edges=" << g.num_directed_edges()
            << " classes=" << g.num_classes() << " feature_dim=" << g.feature_dim()
            << " train=" << mask_indices(g.train_mask()).size()
            << " val=" << mask_indices(g.val_mask()).size()
            << " test=" << mask_indices(g.test_mask()).size()
            << " intra_directed=" << 2 * part.intra_count()
            << " inter_directed=" << 2 * part.inter_count() << "\n";
}

CombinedMask compute_mask(const RunConfig& config, const ModelParams& model,
                          const Graph& graph) {
  ExplainerConfig ec = config.explain;
  ec.seed = derive_seed(config.seed, "explain");
  const auto masks = explain_all_nodes(model, graph, ec, config.jobs);
  return combine_masks(masks, graph);
}

EvalReport evaluate_attack(const RunConfig& config, const ModelParams& model,
                           const Graph& graph, const Graph& rewired,
                           const RewirePlan& plan, const std::string& targeting) {
  EvalReport r;
  r.dataset = config.dataset;
  r.architecture = config.arch;
  r.explainer = to_string(config.explain.method);
  r.top_k = config.explain.top_k;
  r.targeting = targeting;
  r.gamma = config.attack_gamma;
  r.seed = config.seed;
  r.edr_net = edr_net(graph, rewired);
  r.edr_total = edr_total(plan, graph);
  r.mcr_clean = mcr(model, graph);
  r.mcr_attacked = mcr(model, rewired);
  r.degree_tv_distance = degree_distance(graph, rewired);
  return r;
}

int cmd_ingest(const RunConfig& config, const std::vector<std::string>& args) {
  if (config.dataset == "sbm") {
    throw std::invalid_argument("ingest: use gen-sbm for synthetic graphs");
  }
  RunDir run(config, "ingest", args);
  const Graph g = resolve_graph(config);
  const std::string out = run.file(config.dataset + ".graph");
  save_graph(g, out);
  run.note(config.dataset + ".graph");
  print_graph_stats(g);
  std::cout << "graph=" << out << "\n";
  run.finish();
  return 0;
}

int cmd_gen_sbm(const RunConfig& config, const std::vector<std::string>& args) {
  RunDir run(config, "gen-sbm", args);
  SbmParams p = config.sbm;
  if (p.seed == 0) p.seed = derive_seed(config.seed, "sbm");
  const Graph g = generate_sbm(p);
  const std::string out = run.file("sbm.graph");
  save_graph(g, out);
  run.note("sbm.graph");
  print_graph_stats(g);
  std::cout << "graph=" << out << "\n";
  run.finish();
  return 0;
}

int cmd_train(const RunConfig& config, const std::vector<std::string>& args) {
  RunDir run(config, "train", args);
  const Graph g = resolve_graph(config);
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, "train");
  const TrainResult result = train(g, arch_from_string(config.arch), tc);

  const std::string ckpt = run.file("model.ckpt");
  save_checkpoint(result.params, tc, ckpt);
  run.note("model.ckpt");

  std::ofstream log(run.file("train_log.csv"));
  log << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& e : result.log) {
    log << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy
        << '\n';
  }
  run.note("train_log.csv");

  std::cout << "best_epoch=" << result.best_epoch << " best_val_loss=" << result.best_val_loss
            << " clean_mcr=" << mcr(result.params, g) << "\n";
  std::cout << "checkpoint=" << ckpt << "\n";
  run.finish();
  return 0;
}

int cmd_explain(const RunConfig& config, const std::vector<std::string>& args,
                const std::string& checkpoint) {
  RunDir run(config, "explain", args);
  const Graph g = resolve_graph(config);
  const auto [model, tc] = load_checkpoint(checkpoint);
  const CombinedMask mask = compute_mask(config, model, g);
  const std::string out = run.file("mask.edges");
  save_mask(mask, out);
  run.note("mask.edges");
  std::cout << "mask_edges=" << mask.edges.size()
            << " important_nodes=" << mask.important_nodes.size() << "\n";
  std::cout << "mask=" << out << "\n";
  run.finish();
  return 0;
}

int cmd_attack(const RunConfig& config, const std::vector<std::string>& args,
               const std::string& checkpoint, const std::string& mask_file,
               bool with_baseline) {
  RunDir run(config, "attack", args);
  const Graph g = resolve_graph(config);
  const auto [model, tc] = load_checkpoint(checkpoint);
  const CombinedMask mask =
      mask_file.empty() ? compute_mask(config, model, g) : load_mask(mask_file, g);

  AttackBudget budget;
  budget.gamma = config.attack_gamma;
  budget.edr_target = config.attack_edr;
  budget.total_ops = config.attack_total_ops;
  budget.seed = derive_seed(config.seed, "attack");

  const RewirePlan plan = build_plan(g, mask, budget);
  const Graph rewired = apply_plan(g, plan);

  save_plan(plan, run.file("plan.txt"));
  run.note("plan.txt");
  save_graph(rewired, run.file("rewired.graph"));
  run.note("rewired.graph");
  save_degree_histogram_csv(g, run.file("degrees_clean.csv"));
  run.note("degrees_clean.csv");
  save_degree_histogram_csv(rewired, run.file("degrees_attacked.csv"));
  run.note("degrees_attacked.csv");

  std::vector<EvalReport> reports = {
      evaluate_attack(config, model, g, rewired, plan, "important")};
  if (with_baseline) {
    const RewirePlan base_plan = random_baseline_plan(g, budget);
    const Graph base_rewired = apply_plan(g, base_plan);
    reports.push_back(
        evaluate_attack(config, model, g, base_rewired, base_plan, "random"));
  }
  save_reports_csv(reports, run.file("report.csv"));
  run.note("report.csv");
  save_reports_jsonl(reports, run.file("report.jsonl"));
  run.note("report.jsonl");

  const EvalReport& r = reports.front();
  std::cout << "clean_mcr=" << r.mcr_clean << " attacked_mcr=" << r.mcr_attacked
            << " edr_net=" << r.edr_net << " edr_total=" << r.edr_total
            << " degree_tv=" << r.degree_tv_distance
            << " inserted=" << plan.insertions.size()
            << " deleted=" << plan.deletions.size()
            << (plan.truncated ? " truncated=1" : "") << "\n";
  std::cout << "report=" << run.file("report.csv") << "\n";
  run.finish();
  return 0;
}

int cmd_sweep(const RunConfig& config, const std::vector<std::string>& args) {
  RunDir run(config, "sweep", args);
  const Graph g = resolve_graph(config);

  SweepConfig sc;
  sc.dataset_name = config.dataset;
  sc.arch = arch_from_string(config.arch);
  sc.train = config.train;
  sc.explainer = config.explain;
  sc.total_rate = config.sweep_total_rate;
  sc.jobs = config.jobs;
  sc.gammas = config.sweep_gammas;
  if (config.sweep_inverse) {
    for (double& gamma : sc.gammas) gamma = 1.0 / gamma;
  }
  sc.seeds.clear();
  for (int i = 0; i < config.sweep_seeds; ++i) {
    sc.seeds.push_back(derive_seed(config.seed, "sweep:" + std::to_string(i)));
  }

  const auto reports = run_sweep(g, sc);
  save_reports_csv(reports, run.file("sweep.csv"));
  run.note("sweep.csv");
  save_reports_jsonl(reports, run.file("sweep.jsonl"));
  run.note("sweep.jsonl");

  // mean attacked MCR per (gamma, targeting)
  std::map<std::pair<double, std::string>, std::pair<double, int>> agg;
  for (const auto& r : reports) {
    if (r.failed) continue;
    auto& cell = agg[{r.gamma, r.targeting}];
    cell.first += r.mcr_attacked;
    cell.second += 1;
  }
  for (const auto& [key, cell] : agg) {
    std::cout << "gamma=" << key.first << " targeting=" << key.second
              << " mean_attacked_mcr=" << cell.first / cell.second << " n=" << cell.second
              << "\n";
  }
  std::cout << "sweep=" << run.file("sweep.csv") << "\n";
  run.finish();
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs) {
  struct Key {
    std::string dataset, arch, explainer, targeting;
    double gamma;
    bool operator<(const Key& o) const {
      return std::tie(dataset, arch, explainer, targeting, gamma) <
             std::tie(o.dataset, o.arch, o.explainer, o.targeting, o.gamma);
    }
  };
  struct Cell {
    double mcr_clean = 0, mcr_attacked = 0, tv = 0;
    int n = 0, failed = 0;
  };
  std::map<Key, Cell> table;
  for (const auto& path : inputs) {
    for (const auto& r : load_reports_csv(path)) {
      Cell& cell = table[{r.dataset, r.architecture, r.explainer, r.targeting, r.gamma}];
      if (r.failed) {
        ++cell.failed;
        continue;
      }
      cell.mcr_clean += r.mcr_clean;
      cell.mcr_attacked += r.mcr_attacked;
      cell.tv += r.degree_tv_distance;
      ++cell.n;
    }
  }
  std::printf("%-10s %-10s %-14s %-10s %8s %6s %10s %12s %10s\n", "dataset", "arch",
              "explainer", "targeting", "gamma", "n", "clean_mcr", "attacked_mcr",
              "degree_tv");
  for (const auto& [key, cell] : table) {
    if (cell.n == 0) {
      std::printf("%-10s %-10s %-14s %-10s %8.3f %6s %10s %12s %10s  (%d failed)\n",
                  key.dataset.c_str(), key.arch.c_str(), key.explainer.c_str(),
                  key.targeting.c_str(), key.gamma, "0", "-", "-", "-", cell.failed);
      continue;
    }
    std::printf("%-10s %-10s %-14s %-10s %8.3f %6d %10.4f %12.4f %10.4f\n",
                key.dataset.c_str(), key.arch.c_str(), key.explainer.c_str(),
                key.targeting.c_str(), key.gamma, cell.n, cell.mcr_clean / cell.n,
                cell.mcr_attacked / cell.n, cell.tv / cell.n);
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"train, explain, attack and evaluate small graph neural networks"};
  app.require_subcommand(1);

  FlagSettings ingest_flags, gen_flags, train_flags, explain_flags, attack_flags,
      sweep_flags;
  std::string explain_ckpt, attack_ckpt, attack_mask;
  bool attack_with_baseline = false;
  std::vector<std::string> report_inputs;

  CLI::App* ingest = app.add_subcommand("ingest", "convert a citation dataset to a graph container");
  add_config_flags(ingest, ingest_flags);
  CLI::App* gen = app.add_subcommand("gen-sbm", "generate a stochastic-block-model graph");
  add_config_flags(gen, gen_flags);
  CLI::App* tr = app.add_subcommand("train", "train a model and report its clean error");
  add_config_flags(tr, train_flags);
  CLI::App* ex = app.add_subcommand("explain", "compute the combined explanation mask");
  add_config_flags(ex, explain_flags);
  ex->add_option("--checkpoint", explain_ckpt, "trained model checkpoint")->required();
  CLI::App* at = app.add_subcommand("attack", "rewire the graph and evaluate the damage");
  add_config_flags(at, attack_flags);
  at->add_option("--checkpoint", attack_ckpt, "trained model checkpoint")->required();
  at->add_option("--mask", attack_mask, "precomputed mask file (skips explanation)");
  at->add_flag("--with-baseline", attack_with_baseline,
               "also evaluate the whole-graph random baseline");
  CLI::App* sw = app.add_subcommand("sweep", "gamma sweep with targeted and random plans");
  add_config_flags(sw, sweep_flags);
  CLI::App* rp = app.add_subcommand("report", "aggregate report CSVs into a summary table");
  rp->add_option("--in", report_inputs, "report/sweep CSV files")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest(build_config(ingest_flags), args);
    if (app.got_subcommand(gen)) return cmd_gen_sbm(build_config(gen_flags), args);
    if (app.got_subcommand(tr)) return cmd_train(build_config(train_flags), args);
    if (app.got_subcommand(ex)) {
      return cmd_explain(build_config(explain_flags), args, explain_ckpt);
    }
    if (app.got_subcommand(at)) {
      return cmd_attack(build_config(attack_flags), args, attack_ckpt, attack_mask,
                        attack_with_baseline);
    }
    if (app.got_subcommand(sw)) return cmd_sweep(build_config(sweep_flags), args);
    if (app.got_subcommand(rp)) return cmd_report(report_inputs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace rewire
