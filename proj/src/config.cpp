#include "rewire/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rewire/rng.hpp"

namespace rewire {

namespace {

double to_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double x = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0') {
    throw std::invalid_argument("config: bad numeric value for " + key + ": '" + value + "'");
  }
  return x;
}

long to_long(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long x = std::strtol(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0') {
    throw std::invalid_argument("config: bad integer value for " + key + ": '" + value + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean value for " + key + ": '" + value + "'");
}

std::vector<double> to_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(to_double(key, tok));
  }
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (double x : to_double_list(key, value)) out.push_back(static_cast<int>(x));
  return out;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt(xs[i]);
  }
  return out;
}

std::string join(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    c.dataset = value;
  } else if (key == "data-dir") {
    c.data_dir = value;
  } else if (key == "graph-file") {
    c.graph_file = value;
  } else if (key == "sbm.block-sizes") {
    c.sbm.block_sizes = to_int_list(key, value);
  } else if (key == "sbm.p-in") {
    c.sbm.p_in = to_double(key, value);
  } else if (key == "sbm.p-out") {
    c.sbm.p_out = to_double(key, value);
  } else if (key == "sbm.feature-dim") {
    c.sbm.feature_dim = static_cast<int>(to_long(key, value));
  } else if (key == "sbm.noise") {
    c.sbm.noise_scale = to_double(key, value);
  } else if (key == "arch") {
    (void)arch_from_string(value);  // validate
    c.arch = value;
  } else if (key == "train.epochs") {
    c.train.epochs = static_cast<int>(to_long(key, value));
  } else if (key == "train.lr") {
    c.train.learning_rate = to_double(key, value);
  } else if (key == "train.weight-decay") {
    c.train.weight_decay = to_double(key, value);
  } else if (key == "train.dropout") {
    c.train.dropout = to_double(key, value);
  } else if (key == "train.hidden") {
    c.train.hidden_dim = static_cast<int>(to_long(key, value));
  } else if (key == "explain.method") {
    c.explain.method = explainer_from_string(value);
  } else if (key == "explain.epochs") {
    c.explain.epochs = static_cast<int>(to_long(key, value));
  } else if (key == "explain.lr") {
    c.explain.learning_rate = to_double(key, value);
  } else if (key == "explain.top-k") {
    c.explain.top_k = static_cast<int>(to_long(key, value));
  } else if (key == "explain.lambda-size") {
    c.explain.lambda_size = to_double(key, value);
  } else if (key == "explain.lambda-entropy") {
    c.explain.lambda_entropy = to_double(key, value);
  } else if (key == "attack.gamma") {
    c.attack_gamma = to_double(key, value);
  } else if (key == "attack.edr") {
    c.attack_edr = to_double(key, value);
  } else if (key == "attack.total-ops") {
    c.attack_total_ops = to_long(key, value);
  } else if (key == "sweep.gammas") {
    c.sweep_gammas = to_double_list(key, value);
  } else if (key == "sweep.inverse") {
    c.sweep_inverse = to_bool(key, value);
  } else if (key == "sweep.seeds") {
    c.sweep_seeds = static_cast<int>(to_long(key, value));
  } else if (key == "sweep.total-rate") {
    c.sweep_total_rate = to_double(key, value);
  } else if (key == "jobs") {
    c.jobs = static_cast<int>(to_long(key, value));
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(to_long(key, value));
  } else if (key == "out") {
    c.out_dir = value;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    }
    apply_setting(base, line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

void save_config_file(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot open " + path + " for writing");
  out << "dataset=" << c.dataset << "\n";
  out << "data-dir=" << c.data_dir << "\n";
  if (!c.graph_file.empty()) out << "graph-file=" << c.graph_file << "\n";
  out << "sbm.block-sizes=" << join(c.sbm.block_sizes) << "\n";
  out << "sbm.p-in=" << fmt(c.sbm.p_in) << "\n";
  out << "sbm.p-out=" << fmt(c.sbm.p_out) << "\n";
  out << "sbm.feature-dim=" << c.sbm.feature_dim << "\n";
  out << "sbm.noise=" << fmt(c.sbm.noise_scale) << "\n";
  out << "arch=" << c.arch << "\n";
  out << "train.epochs=" << c.train.epochs << "\n";
  out << "train.lr=" << fmt(c.train.learning_rate) << "\n";
  out << "train.weight-decay=" << fmt(c.train.weight_decay) << "\n";
  out << "train.dropout=" << fmt(c.train.dropout) << "\n";
  out << "train.hidden=" << c.train.hidden_dim << "\n";
  out << "explain.method=" << to_string(c.explain.method) << "\n";
  out << "explain.epochs=" << c.explain.epochs << "\n";
  out << "explain.lr=" << fmt(c.explain.learning_rate) << "\n";
  out << "explain.top-k=" << c.explain.top_k << "\n";
  out << "explain.lambda-size=" << fmt(c.explain.lambda_size) << "\n";
  out << "explain.lambda-entropy=" << fmt(c.explain.lambda_entropy) << "\n";
  out << "attack.gamma=" << fmt(c.attack_gamma) << "\n";
  out << "attack.edr=" << fmt(c.attack_edr) << "\n";
  out << "attack.total-ops=" << c.attack_total_ops << "\n";
  out << "sweep.gammas=" << join(c.sweep_gammas) << "\n";
  out << "sweep.inverse=" << (c.sweep_inverse ? "true" : "false") << "\n";
  out << "sweep.seeds=" << c.sweep_seeds << "\n";
  out << "sweep.total-rate=" << fmt(c.sweep_total_rate) << "\n";
  out << "jobs=" << c.jobs << "\n";
  out << "seed=" << c.seed << "\n";
  out << "out=" << c.out_dir << "\n";
  if (!out) throw std::runtime_error("config: write failed for " + path);
}

Graph resolve_graph(const RunConfig& c) {
  if (!c.graph_file.empty()) return load_graph(c.graph_file);
  if (c.dataset == "sbm") {
    SbmParams p = c.sbm;
    if (p.seed == 0) p.seed = derive_seed(c.seed, "sbm");
    return generate_sbm(p);
  }
  DatasetSpec spec;
  spec.name = c.dataset;
  spec.path = c.data_dir;
  return load_planetoid(spec);
}

}  // namespace rewire
