#include "rewire/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "rewire/rng.hpp"

#include <nlohmann/json.hpp>

namespace rewire {

namespace {

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// CSV cells are plain tokens except the error column, which is quoted.
constexpr const char* kCsvHeader =
    "dataset,architecture,explainer,top_k,targeting,gamma,seed,edr_net,"
    "edr_total,mcr_clean,mcr_attacked,degree_tv_distance,wall_time_seconds,"
    "status,error";

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

double mcr(const ModelParams& params, const Graph& graph) {
  const std::vector<int> rows = mask_indices(graph.test_mask());
  if (rows.empty()) throw std::invalid_argument("mcr: graph has an empty test mask");
  const std::vector<int> preds = predict(params, graph);
  int correct = 0;
  for (int r : rows) {
    if (preds[static_cast<std::size_t>(r)] == graph.labels()[static_cast<std::size_t>(r)]) {
      ++correct;
    }
  }
  return 1.0 - static_cast<double>(correct) / static_cast<double>(rows.size());
}

double degree_distance(const Graph& a, const Graph& b) {
  const auto ha = degree_histogram(a);
  const auto hb = degree_histogram(b);
  const double na = a.num_nodes(), nb = b.num_nodes();
  std::map<int, double> diff;
  for (const auto& [d, c] : ha) diff[d] += c / na;
  for (const auto& [d, c] : hb) diff[d] -= c / nb;
  double tv = 0.0;
  for (const auto& [d, x] : diff) tv += std::abs(x);
  return 0.5 * tv;
}

EmbeddingProjection embedding_projection(const ModelParams& params, const Graph& graph) {
  const Matrixd z = forward(params, graph, unit_weights(graph), Mode::kEval);
  const Matrixd centered = z.rowwise() - z.colwise().mean();
  const Matrixd cov = centered.transpose() * centered / std::max(1, graph.num_nodes() - 1);

  Eigen::SelfAdjointEigenSolver<Matrixd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("embedding_projection: eigensolver failed");
  }
  // Eigenvalues ascend; take the last two columns, largest first, and fix
  // each component's sign so projections are reproducible.
  const auto d = z.cols();
  Matrixd basis = Matrixd::Zero(d, 2);
  basis.col(0) = solver.eigenvectors().col(d - 1);
  if (d >= 2) basis.col(1) = solver.eigenvectors().col(d - 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index peak;
    basis.col(c).cwiseAbs().maxCoeff(&peak);
    if (basis(peak, c) < 0) basis.col(c) = -basis.col(c);
  }

  EmbeddingProjection out;
  out.coords = centered * basis;

  // Separation: mean pairwise distance between class centroids over the mean
  // distance of an embedding to its class centroid, in the full space.
  const int m = graph.num_classes();
  Matrixd centroids = Matrixd::Zero(m, d);
  std::vector<int> counts(static_cast<std::size_t>(m), 0);
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const int y = graph.labels()[static_cast<std::size_t>(i)];
    centroids.row(y) += z.row(i);
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < m; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      centroids.row(c) /= counts[static_cast<std::size_t>(c)];
    }
  }
  double spread = 0.0;
  for (int i = 0; i < graph.num_nodes(); ++i) {
    spread += (z.row(i) - centroids.row(graph.labels()[static_cast<std::size_t>(i)])).norm();
  }
  spread /= std::max(1, graph.num_nodes());
  double inter = 0.0;
  int pairs = 0;
  for (int a = 0; a < m; ++a) {
    for (int b = a + 1; b < m; ++b) {
      if (counts[static_cast<std::size_t>(a)] == 0 || counts[static_cast<std::size_t>(b)] == 0) {
        continue;
      }
      inter += (centroids.row(a) - centroids.row(b)).norm();
      ++pairs;
    }
  }
  if (pairs > 0) inter /= pairs;
  out.separation = inter / (spread + 1e-12);
  return out;
}

void save_projection_csv(const EmbeddingProjection& proj, const Graph& graph,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("projection: cannot open " + path);
  out << "node,class,x,y\n";
  for (int i = 0; i < graph.num_nodes(); ++i) {
    out << i << ',' << graph.labels()[static_cast<std::size_t>(i)] << ','
        << fmt_double(proj.coords(i, 0)) << ',' << fmt_double(proj.coords(i, 1)) << '\n';
  }
}

void save_degree_histogram_csv(const Graph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("histogram: cannot open " + path);
  out << "degree,count\n";
  for (const auto& [d, c] : degree_histogram(graph)) out << d << ',' << c << '\n';
}

std::vector<EvalReport> run_sweep(const Graph& graph, const SweepConfig& config) {
  std::vector<EvalReport> reports;
  const long total_ops =
      std::lround(config.total_rate * static_cast<double>(graph.num_edges()));

  for (const std::uint64_t seed : config.seeds) {
    EvalReport base;
    base.dataset = config.dataset_name;
    base.architecture = to_string(config.arch);
    base.explainer = to_string(config.explainer.method);
    base.top_k = config.explainer.top_k;
    base.seed = seed;

    ModelParams model;
    CombinedMask mask;
    double clean = 0.0;
    try {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(seed, "train");
      model = train(graph, config.arch, tc).params;
      clean = mcr(model, graph);

      ExplainerConfig ec = config.explainer;
      ec.seed = derive_seed(seed, "explain");
      const auto masks = explain_all_nodes(model, graph, ec, config.jobs);
      mask = combine_masks(masks, graph);
    } catch (const std::exception& e) {
      for (const double gamma : config.gammas) {
        for (const char* targeting : {"important", "random"}) {
          EvalReport r = base;
          r.gamma = gamma;
          r.targeting = targeting;
          r.failed = true;
          r.error = e.what();
          reports.push_back(std::move(r));
        }
      }
      continue;
    }

    for (const double gamma : config.gammas) {
      for (const bool important : {true, false}) {
        EvalReport r = base;
        r.gamma = gamma;
        r.targeting = important ? "important" : "random";
        r.mcr_clean = clean;
        const auto start = std::chrono::steady_clock::now();
        try {
          AttackBudget budget;
          budget.gamma = gamma;
          budget.total_ops = total_ops;
          budget.seed = derive_seed(
              seed, (r.targeting + ":gamma:" + fmt_double(gamma)).c_str());
          const RewirePlan plan = important ? build_plan(graph, mask, budget)
                                            : random_baseline_plan(graph, budget);
          const Graph rewired = apply_plan(graph, plan);
          r.edr_net = edr_net(graph, rewired);
          r.edr_total = edr_total(plan, graph);
          r.mcr_attacked = mcr(model, rewired);
          r.degree_tv_distance = degree_distance(graph, rewired);
        } catch (const std::exception& e) {
          r.failed = true;
          r.error = e.what();
        }
        r.wall_time_seconds = elapsed_seconds(start);
        reports.push_back(std::move(r));
      }
    }
  }
  return reports;
}

void save_reports_csv(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("reports: cannot open " + path);
  out << kCsvHeader << '\n';
  for (const auto& r : reports) {
    out << r.dataset << ',' << r.architecture << ',' << r.explainer << ',' << r.top_k
        << ',' << r.targeting << ',' << fmt_double(r.gamma) << ',' << r.seed << ','
        << fmt_double(r.edr_net) << ',' << fmt_double(r.edr_total) << ','
        << fmt_double(r.mcr_clean) << ',' << fmt_double(r.mcr_attacked) << ','
        << fmt_double(r.degree_tv_distance) << ',' << fmt_double(r.wall_time_seconds)
        << ',' << (r.failed ? "failed" : "ok") << ",\"" << r.error << "\"\n";
    out.flush();  // interrupted sweeps keep their completed rows
  }
}

std::vector<EvalReport> load_reports_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("reports: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error("reports: " + path + ": unexpected header");
  }
  std::vector<EvalReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // the final (error) field is quoted and may contain commas
    const auto quote = line.find('"');
    std::string head = quote == std::string::npos ? line : line.substr(0, quote);
    std::string error = quote == std::string::npos
                            ? ""
                            : line.substr(quote + 1, line.rfind('"') - quote - 1);
    std::replace(head.begin(), head.end(), ',', ' ');
    std::istringstream ss(head);
    EvalReport r;
    std::string status;
    ss >> r.dataset >> r.architecture >> r.explainer >> r.top_k >> r.targeting >>
        r.gamma >> r.seed >> r.edr_net >> r.edr_total >> r.mcr_clean >>
        r.mcr_attacked >> r.degree_tv_distance >> r.wall_time_seconds >> status;
    if (!ss && status.empty()) throw std::runtime_error("reports: malformed row: " + line);
    r.failed = status == "failed";
    r.error = std::move(error);
    out.push_back(std::move(r));
  }
  return out;
}

void save_reports_jsonl(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("reports: cannot open " + path);
  for (const auto& r : reports) {
    nlohmann::json j{{"dataset", r.dataset},
                     {"architecture", r.architecture},
                     {"explainer", r.explainer},
                     {"top_k", r.top_k},
                     {"targeting", r.targeting},
                     {"gamma", r.gamma},
                     {"seed", r.seed},
                     {"edr_net", r.edr_net},
                     {"edr_total", r.edr_total},
                     {"mcr_clean", r.mcr_clean},
                     {"mcr_attacked", r.mcr_attacked},
                     {"degree_tv_distance", r.degree_tv_distance},
                     {"wall_time_seconds", r.wall_time_seconds},
                     {"status", r.failed ? "failed" : "ok"},
                     {"error", r.error}};
    out << j.dump() << '\n';
  }
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("least_squares_slope: need >= 2 paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0) throw std::invalid_argument("least_squares_slope: degenerate x values");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace rewire
