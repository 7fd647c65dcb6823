#include "rewire/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rewire/rng.hpp"

namespace rewire {

namespace {

[[noreturn]] void load_error(const std::string& path, const std::string& what) {
  throw std::runtime_error("dataset: " + path + ": " + what);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) load_error(path, "cannot open file");
  return in;
}

// Parses "key=value" tokens out of a `#`-prefixed header line.
long header_value(const std::string& line, const std::string& key, const std::string& path) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) load_error(path, "missing header field " + key);
  return std::strtol(line.c_str() + pos + key.size() + 1, nullptr, 10);
}

std::string hex_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

double parse_double(const std::string& tok, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str()) load_error(path, "bad numeric token '" + tok + "'");
  return v;
}

}  // namespace

std::optional<DatasetStats> known_dataset_stats(const std::string& name) {
  if (name == "cora") {
    return DatasetStats{2708, 10556, 7, 1433, 140, 500, 1000, 8550, 2006};
  }
  if (name == "citeseer") {
    return DatasetStats{3327, 9104, 6, 3703, 120, 500, 1000, 6696, 2408};
  }
  if (name == "pubmed") {
    return DatasetStats{19717, 88648, 3, 500, 60, 500, 1000, 71130, 17518};
  }
  return std::nullopt;
}

Graph load_planetoid(const DatasetSpec& spec) {
  const std::string base = spec.path + "/" + spec.name;

  // features
  const std::string feat_path = base + ".features.csv";
  auto fin = open_or_throw(feat_path);
  std::string line;
  if (!std::getline(fin, line) || line.empty() || line[0] != '#') {
    load_error(feat_path, "missing '# nodes=N features=D' header");
  }
  const int n = static_cast<int>(header_value(line, "nodes", feat_path));
  const int d = static_cast<int>(header_value(line, "features", feat_path));
  if (n <= 0 || d <= 0) load_error(feat_path, "non-positive dimensions");
  Matrixd features = Matrixd::Zero(n, d);
  while (std::getline(fin, line)) {
    if (line.empty() || line[0] == '#' || line == "node,feature,value") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int i, j;
    std::string val;
    if (!(ss >> i >> j >> val)) load_error(feat_path, "malformed row '" + line + "'");
    if (i < 0 || i >= n || j < 0 || j >= d) load_error(feat_path, "index out of range");
    features(i, j) = parse_double(val, feat_path);
  }
  // Row normalization, the standard preprocessing for these bag-of-words
  // datasets.
  for (int i = 0; i < n; ++i) {
    const double s = features.row(i).sum();
    if (s > 0) features.row(i) /= s;
  }

  // labels
  const std::string lab_path = base + ".labels.csv";
  auto lin = open_or_throw(lab_path);
  if (!std::getline(lin, line) || line.empty() || line[0] != '#') {
    load_error(lab_path, "missing '# classes=M' header");
  }
  const int m = static_cast<int>(header_value(line, "classes", lab_path));
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  while (std::getline(lin, line)) {
    if (line.empty() || line[0] == '#' || line == "node,label") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int i, y;
    if (!(ss >> i >> y)) load_error(lab_path, "malformed row '" + line + "'");
    if (i < 0 || i >= n) load_error(lab_path, "node out of range");
    labels[static_cast<std::size_t>(i)] = y;
  }
  for (int y : labels) {
    if (y < 0) load_error(lab_path, "node without label");
  }

  // edges
  const std::string edge_path = base + ".edges";
  auto ein = open_or_throw(edge_path);
  std::vector<Edge> edges;
  while (std::getline(ein, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    int u, v;
    if (!(ss >> u >> v)) load_error(edge_path, "malformed row '" + line + "'");
    if (u == v) continue;  // datasets occasionally carry self-citations
    edges.push_back(canonical_edge(u, v));
  }

  // masks
  const std::string mask_path = base + ".masks.csv";
  auto min = open_or_throw(mask_path);
  Mask train(static_cast<std::size_t>(n), 0), val(train), test(train);
  while (std::getline(min, line)) {
    if (line.empty() || line[0] == '#' || line == "node,split") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int i;
    std::string split;
    if (!(ss >> i >> split)) load_error(mask_path, "malformed row '" + line + "'");
    if (i < 0 || i >= n) load_error(mask_path, "node out of range");
    if (split == "train") {
      train[static_cast<std::size_t>(i)] = 1;
    } else if (split == "val") {
      val[static_cast<std::size_t>(i)] = 1;
    } else if (split == "test") {
      test[static_cast<std::size_t>(i)] = 1;
    } else if (split != "none") {
      load_error(mask_path, "unknown split '" + split + "'");
    }
  }

  Graph graph(std::move(features), std::move(labels), m, std::move(edges),
              std::move(train), std::move(val), std::move(test));

  if (const auto stats = known_dataset_stats(spec.name)) {
    const auto part = partition_edges_by_class(graph);
    const auto expect = [&](long got, long want, const char* what) {
      if (got != want) {
        load_error(base, std::string(what) + " mismatch: got " + std::to_string(got) +
                             ", expected " + std::to_string(want));
      }
    };
    expect(graph.num_nodes(), stats->num_nodes, "node count");
    expect(static_cast<long>(graph.num_directed_edges()), stats->num_directed_edges,
           "directed edge count");
    expect(graph.num_classes(), stats->num_classes, "class count");
    expect(graph.feature_dim(), stats->feature_dim, "feature dimension");
    expect(static_cast<long>(mask_indices(graph.train_mask()).size()), stats->train_nodes,
           "train split size");
    expect(static_cast<long>(mask_indices(graph.val_mask()).size()), stats->val_nodes,
           "val split size");
    expect(static_cast<long>(mask_indices(graph.test_mask()).size()), stats->test_nodes,
           "test split size");
    expect(static_cast<long>(part.intra_count() * 2), stats->intra_directed,
           "intra-class edge count");
    expect(static_cast<long>(part.inter_count() * 2), stats->inter_directed,
           "inter-class edge count");
  }
  return graph;
}

Graph generate_sbm(const SbmParams& p) {
  if (p.block_sizes.empty()) throw std::invalid_argument("sbm: no blocks");
  for (int s : p.block_sizes) {
    if (s < 1) throw std::invalid_argument("sbm: empty block");
  }
  if (p.p_in < 0 || p.p_in > 1 || p.p_out < 0 || p.p_out > 1) {
    throw std::invalid_argument("sbm: probabilities must be in [0,1]");
  }
  const int blocks = static_cast<int>(p.block_sizes.size());
  const int n = std::accumulate(p.block_sizes.begin(), p.block_sizes.end(), 0);
  const int d = p.feature_dim > 0 ? p.feature_dim : blocks + 8;
  if (d < blocks) throw std::invalid_argument("sbm: feature_dim < num_blocks");

  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (int b = 0; b < blocks; ++b) {
    labels.insert(labels.end(), static_cast<std::size_t>(p.block_sizes[b]), b);
  }

  Rng rng(p.seed);
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double prob = labels[u] == labels[v] ? p.p_in : p.p_out;
      if (rng.next_bernoulli(prob)) edges.emplace_back(u, v);
    }
  }

  Matrixd features(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      features(i, j) = p.noise_scale * rng.next_normal();
    }
    features(i, labels[static_cast<std::size_t>(i)]) += p.centroid_scale;
  }

  Mask train(static_cast<std::size_t>(n), 0), val(train), test(train);
  int offset = 0;
  for (int b = 0; b < blocks; ++b) {
    const int s = p.block_sizes[b];
    if (s < 3) throw std::invalid_argument("sbm: block too small to split (need >= 3)");
    int n_train = std::clamp(static_cast<int>(std::lround(p.train_fraction * s)), 1, s - 2);
    int n_val = std::clamp(static_cast<int>(std::lround(p.val_fraction * s)), 1, s - 1 - n_train);
    for (int i = 0; i < s; ++i) {
      const auto idx = static_cast<std::size_t>(offset + i);
      if (i < n_train) {
        train[idx] = 1;
      } else if (i < n_train + n_val) {
        val[idx] = 1;
      } else {
        test[idx] = 1;
      }
    }
    offset += s;
  }

  return Graph(std::move(features), std::move(labels), blocks, std::move(edges),
               std::move(train), std::move(val), std::move(test));
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) load_error(path, "cannot open for writing");
  const int n = g.num_nodes();
  const int d = g.feature_dim();
  std::size_t nnz = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      if (g.features()(i, j) != 0.0) ++nnz;
    }
  }
  out << "rewire-graph v1\n";
  out << "nodes " << n << " features " << d << " classes " << g.num_classes()
      << " edges " << g.num_edges() << " nnz " << nnz << "\n";
  out << "section features\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double x = g.features()(i, j);
      if (x != 0.0) out << i << ' ' << j << ' ' << hex_double(x) << '\n';
    }
  }
  out << "section labels\n";
  for (int i = 0; i < n; ++i) out << g.labels()[static_cast<std::size_t>(i)] << '\n';
  out << "section edges\n";
  for (const auto& [u, v] : g.edges()) out << u << ' ' << v << '\n';
  out << "section masks\n";
  for (int i = 0; i < n; ++i) {
    const char c = g.train_mask()[i] ? 't' : g.val_mask()[i] ? 'v' : g.test_mask()[i] ? 's' : '-';
    out << c;
  }
  out << "\nend\n";
  if (!out) load_error(path, "write failed");
}

Graph load_graph(const std::string& path) {
  auto in = open_or_throw(path);
  std::string line;
  if (!std::getline(in, line)) load_error(path, "empty file");
  if (line != "rewire-graph v1") load_error(path, "unsupported container version '" + line + "'");

  std::string kw;
  int n, d, m;
  std::size_t num_edges, nnz;
  if (!std::getline(in, line)) load_error(path, "truncated header");
  {
    std::istringstream ss(line);
    std::string k1, k2, k3, k4, k5;
    if (!(ss >> k1 >> n >> k2 >> d >> k3 >> m >> k4 >> num_edges >> k5 >> nnz) ||
        k1 != "nodes" || k2 != "features" || k3 != "classes" || k4 != "edges" || k5 != "nnz") {
      load_error(path, "malformed header line");
    }
  }

  auto expect_section = [&](const char* name) {
    if (!std::getline(in, line) || line != std::string("section ") + name) {
      load_error(path, std::string("missing section ") + name);
    }
  };

  expect_section("features");
  Matrixd features = Matrixd::Zero(n, d);
  for (std::size_t k = 0; k < nnz; ++k) {
    int i, j;
    std::string val;
    if (!(in >> i >> j >> val)) load_error(path, "truncated features section");
    if (i < 0 || i >= n || j < 0 || j >= d) load_error(path, "feature index out of range");
    features(i, j) = parse_double(val, path);
  }
  std::getline(in, line);  // trailing newline

  expect_section("labels");
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (!(in >> labels[static_cast<std::size_t>(i)])) load_error(path, "truncated labels section");
  }
  std::getline(in, line);

  expect_section("edges");
  std::vector<Edge> edges;
  edges.reserve(num_edges);
  for (std::size_t k = 0; k < num_edges; ++k) {
    int u, v;
    if (!(in >> u >> v)) load_error(path, "truncated edges section");
    edges.emplace_back(u, v);
  }
  std::getline(in, line);

  expect_section("masks");
  if (!std::getline(in, line) || static_cast<int>(line.size()) != n) {
    load_error(path, "truncated masks section");
  }
  Mask train(static_cast<std::size_t>(n), 0), val(train), test(train);
  for (int i = 0; i < n; ++i) {
    switch (line[static_cast<std::size_t>(i)]) {
      case 't': train[static_cast<std::size_t>(i)] = 1; break;
      case 'v': val[static_cast<std::size_t>(i)] = 1; break;
      case 's': test[static_cast<std::size_t>(i)] = 1; break;
      case '-': break;
      default: load_error(path, "bad mask character");
    }
  }
  if (!std::getline(in, line) || line != "end") load_error(path, "missing end marker");

  return Graph(std::move(features), std::move(labels), m, std::move(edges),
               std::move(train), std::move(val), std::move(test));
}

}  // namespace rewire
