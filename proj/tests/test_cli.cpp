#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rewire/cli.hpp"
#include "rewire/config.hpp"
#include "rewire/dataset.hpp"
#include "rewire/metrics.hpp"
#include "rewire/rng.hpp"

using namespace rewire;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("rewire-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

// Finds the single run directory created under `root` for `command`.
fs::path run_dir(const fs::path& root, const std::string& command) {
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.path().filename().string().starts_with(command + "-")) return entry.path();
  }
  FAIL("no run directory for ", command);
  return {};
}

std::string file_contents(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Report rows minus the wall-time column, which is timing metadata and the
// one legitimately nondeterministic field.
std::string sweep_results(const fs::path& csv) {
  std::ostringstream out;
  for (const auto& r : load_reports_csv(csv.string())) {
    out << r.dataset << '|' << r.architecture << '|' << r.explainer << '|' << r.top_k
        << '|' << r.targeting << '|' << r.gamma << '|' << r.seed << '|' << r.edr_net
        << '|' << r.edr_total << '|' << r.mcr_clean << '|' << r.mcr_attacked << '|'
        << r.degree_tv_distance << '|' << r.failed << '|' << r.error << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("config: precedence is flags > file > defaults") {
  TempDir dir;
  const std::string cfg_path = dir.str("run.config");
  std::ofstream(cfg_path) << "arch=gat\ntrain.epochs=42\n# comment\nseed=9\n";
  RunConfig base = load_config_file(cfg_path);
  CHECK(base.arch == "gat");
  CHECK(base.train.epochs == 42);
  CHECK(base.seed == 9);
  apply_setting(base, "train.epochs", "7");  // flag override
  CHECK(base.train.epochs == 7);
  CHECK(base.arch == "gat");  // untouched

  CHECK_THROWS_AS(apply_setting(base, "not-a-key", "1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(base, "train.epochs", "abc"), std::invalid_argument);
}

TEST_CASE("config: effective file reproduces the configuration") {
  RunConfig c;
  c.arch = "graphsage";
  c.train.epochs = 17;
  c.sweep_gammas = {1, 2.5, 4};
  c.explain.method = ExplainerMethod::kPgExplainer;
  c.attack_edr = 0.049999999999999999;
  c.seed = 31;
  TempDir dir;
  const std::string path = dir.str("eff.config");
  save_config_file(c, path);
  const RunConfig back = load_config_file(path);
  CHECK(back.arch == c.arch);
  CHECK(back.train.epochs == c.train.epochs);
  CHECK(back.sweep_gammas == c.sweep_gammas);
  CHECK(back.explain.method == c.explain.method);
  CHECK(back.attack_edr == c.attack_edr);
  CHECK(back.seed == c.seed);
}

TEST_CASE("cli: usage errors exit 1, unknown files exit 2") {
  CHECK(run_cli({"no-such-command"}) == 1);
  CHECK(run_cli({"train", "--no-such-flag", "1"}) == 1);
  TempDir dir;
  CHECK(run_cli({"train", "--dataset", "cora", "--data-dir", dir.str(), "--out",
                 dir.str("runs")}) == 2);  // missing dataset path
  CHECK(run_cli({"ingest", "--dataset", "sbm", "--out", dir.str("runs2")}) == 2);
}

TEST_CASE("cli: missing dataset error names the path") {
  // captured via the library error message on resolve
  RunConfig c;
  c.dataset = "cora";
  c.data_dir = "/definitely/missing";
  try {
    (void)resolve_graph(c);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("/definitely/missing/cora") != std::string::npos);
  }
}

TEST_CASE("cli: gen-sbm then train, attack, and sweep run end to end") {
  TempDir dir;
  const std::string runs = dir.str("runs");

  REQUIRE(run_cli({"gen-sbm", "--sbm-block-sizes", "40,40", "--sbm-p-in", "0.15",
                   "--sbm-p-out", "0.03", "--sbm-noise", "0.6", "--seed", "4", "--out",
                   runs}) == 0);
  const fs::path gen = run_dir(runs, "gen-sbm");
  const std::string graph_file = (gen / "sbm.graph").string();
  REQUIRE(fs::exists(graph_file));
  CHECK(fs::exists(gen / "manifest.json"));
  CHECK(fs::exists(gen / "effective.config"));

  REQUIRE(run_cli({"train", "--graph-file", graph_file, "--arch", "gcn", "--epochs",
                   "60", "--seed", "1", "--out", runs}) == 0);
  const fs::path tr = run_dir(runs, "train");
  const std::string ckpt = (tr / "model.ckpt").string();
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(tr / "train_log.csv"));

  SUBCASE("same seed gives an identical checkpoint") {
    const std::string runs2 = dir.str("runs-repeat");
    REQUIRE(run_cli({"train", "--graph-file", graph_file, "--arch", "gcn", "--epochs",
                     "60", "--seed", "1", "--out", runs2}) == 0);
    const fs::path tr2 = run_dir(runs2, "train");
    CHECK(file_contents(tr2 / "model.ckpt") == file_contents(ckpt));
  }

  SUBCASE("explain emits a loadable mask") {
    REQUIRE(run_cli({"explain", "--graph-file", graph_file, "--checkpoint", ckpt,
                     "--method", "gnnexplainer", "--explain-epochs", "25", "--top-k",
                     "2", "--jobs", "2", "--seed", "1", "--out", runs}) == 0);
    const fs::path ex = run_dir(runs, "explain");
    const Graph g = load_graph(graph_file);
    const CombinedMask mask = load_mask((ex / "mask.edges").string(), g);
    CHECK(!mask.edges.empty());
    CHECK(!mask.important_nodes.empty());
  }

  SUBCASE("attack writes plan, rewired graph and report") {
    REQUIRE(run_cli({"attack", "--graph-file", graph_file, "--checkpoint", ckpt,
                     "--explain-epochs", "25", "--top-k", "2", "--gamma", "3",
                     "--total-ops", "40", "--jobs", "2", "--seed", "2", "--out",
                     runs}) == 0);
    const fs::path at = run_dir(runs, "attack");
    REQUIRE(fs::exists(at / "report.csv"));
    const auto reports = load_reports_csv((at / "report.csv").string());
    REQUIRE(reports.size() == 1);
    CHECK(!reports[0].failed);
    CHECK(reports[0].edr_total > 0);
    const RewirePlan plan = load_plan((at / "plan.txt").string());
    CHECK(plan.insertions.size() == 30);
    CHECK(plan.deletions.size() == 10);
    const Graph g = load_graph(graph_file);
    const Graph rewired = load_graph((at / "rewired.graph").string());
    CHECK(rewired.num_edges() == g.num_edges() + 20);
  }

  SUBCASE("zero-budget attack keeps the clean error rate") {
    REQUIRE(run_cli({"attack", "--graph-file", graph_file, "--checkpoint", ckpt,
                     "--explain-epochs", "10", "--gamma", "1", "--total-ops", "0",
                     "--seed", "3", "--out", runs}) == 0);
    const fs::path at = run_dir(runs, "attack");
    const auto reports = load_reports_csv((at / "report.csv").string());
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].mcr_attacked == reports[0].mcr_clean);
    CHECK(reports[0].edr_net == 0.0);
  }

  SUBCASE("sweep writes one row per cell and reruns identically") {
    auto sweep_args = [&](const std::string& out) {
      return std::vector<std::string>{
          "sweep", "--graph-file", graph_file, "--arch", "gcn", "--epochs", "40",
          "--explain-epochs", "15", "--gammas", "1,2,3", "--num-seeds", "2",
          "--total-rate", "0.08", "--jobs", "2", "--seed", "5", "--out", out};
    };
    REQUIRE(run_cli(sweep_args(runs)) == 0);
    const fs::path sw = run_dir(runs, "sweep");
    const auto reports = load_reports_csv((sw / "sweep.csv").string());
    CHECK(reports.size() == 3 * 2 * 2);

    const std::string runs3 = dir.str("runs-sweep2");
    REQUIRE(run_cli(sweep_args(runs3)) == 0);
    const fs::path sw2 = run_dir(runs3, "sweep");
    CHECK(sweep_results(sw2 / "sweep.csv") == sweep_results(sw / "sweep.csv"));

    CHECK(run_cli({"report", "--in", (sw / "sweep.csv").string()}) == 0);
  }
}
