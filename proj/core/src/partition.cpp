#include "zipfmax/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace zipfmax {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> prefix_probs(const std::vector<double>& probs) {
  std::vector<double> prefix(probs.size() + 1, 0.0);
  for (size_t i = 0; i < probs.size(); ++i) prefix[i + 1] = prefix[i] + probs[i];
  return prefix;
}

std::string join_int64(const std::vector<int64_t>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<int64_t> split_int64(const std::string& text) {
  std::vector<int64_t> values;
  std::string field;
  std::istringstream ss(text);
  while (std::getline(ss, field, ',')) {
    if (!field.empty()) values.push_back(std::stoll(field));
  }
  return values;
}

// Candidate boundary positions: every stride-th word plus the vocabulary end.
std::vector<int64_t> boundary_grid(int64_t k, int64_t stride) {
  std::vector<int64_t> pts;
  for (int64_t p = 0; p < k; p += stride) pts.push_back(p);
  pts.push_back(k);
  return pts;
}

// Shared DP table: suffix[j][g] = minimal cost of covering words
// [pts[g], k) with exactly j clusters; choice[j][g] = grid index of the
// tie-broken best next boundary. Iterating boundaries in ascending order and
// updating only on strict improvement yields the lexicographically smallest
// boundary vector among cost ties.
struct DpTables {
  std::vector<int64_t> pts;
  std::vector<std::vector<double>> suffix;
  std::vector<std::vector<int32_t>> choice;
};

DpTables build_dp_tables(const std::vector<double>& prefix, int64_t k, int64_t j_max,
                         const CostModelParams& params, double batch, int64_t stride) {
  DpTables t;
  t.pts = boundary_grid(k, stride);
  const auto n = static_cast<int64_t>(t.pts.size());
  t.suffix.assign(static_cast<size_t>(j_max) + 1, std::vector<double>(t.pts.size(), kInf));
  t.choice.assign(static_cast<size_t>(j_max) + 1, std::vector<int32_t>(t.pts.size(), -1));

  auto segment_cost = [&](int64_t gs, int64_t ge) {
    const int64_t words = t.pts[static_cast<size_t>(ge)] - t.pts[static_cast<size_t>(gs)];
    const double mass = prefix[static_cast<size_t>(t.pts[static_cast<size_t>(ge)])] -
                        prefix[static_cast<size_t>(t.pts[static_cast<size_t>(gs)])];
    return g(params, words, mass * batch);
  };

  for (int64_t gs = 0; gs < n - 1; ++gs) {
    t.suffix[1][static_cast<size_t>(gs)] = segment_cost(gs, n - 1);
    t.choice[1][static_cast<size_t>(gs)] = static_cast<int32_t>(n - 1);
  }
  for (int64_t j = 2; j <= j_max; ++j) {
    for (int64_t gs = 0; gs < n - 1; ++gs) {
      double best = kInf;
      int32_t best_e = -1;
      for (int64_t ge = gs + 1; ge < n - 1; ++ge) {
        const double rest = t.suffix[static_cast<size_t>(j - 1)][static_cast<size_t>(ge)];
        if (rest == kInf) continue;
        const double cost = segment_cost(gs, ge) + rest;
        if (cost < best) {
          best = cost;
          best_e = static_cast<int32_t>(ge);
        }
      }
      t.suffix[static_cast<size_t>(j)][static_cast<size_t>(gs)] = best;
      t.choice[static_cast<size_t>(j)][static_cast<size_t>(gs)] = best_e;
    }
  }
  return t;
}

OptimizeResult answer_for_j(const std::vector<double>& probs, const DpTables& t, int64_t j,
                            const CostModelParams& params, double batch) {
  const auto n = static_cast<int64_t>(t.pts.size());
  const int64_t k = t.pts.back();
  if (j == 0) {
    OptimizeResult r;
    r.partition = make_partition(probs, k, {});
    r.cost = partition_cost(r.partition, params, batch);
    return r;
  }
  double best = kInf;
  int64_t best_g = -1;
  for (int64_t gh = 1; gh < n - 1; ++gh) {
    const double rest = t.suffix[static_cast<size_t>(j)][static_cast<size_t>(gh)];
    if (rest == kInf) continue;
    const double cost = g(params, j + t.pts[static_cast<size_t>(gh)], batch) + rest;
    if (cost < best) {
      best = cost;
      best_g = gh;
    }
  }
  if (best_g < 0) {
    throw std::invalid_argument("optimize_fixed_j: " + std::to_string(j) +
                                " clusters do not fit a vocabulary of " + std::to_string(k) +
                                " on this boundary grid");
  }

  std::vector<int64_t> tail_sizes;
  int64_t gcur = best_g;
  for (int64_t jj = j; jj >= 1; --jj) {
    const int32_t ge = t.choice[static_cast<size_t>(jj)][static_cast<size_t>(gcur)];
    tail_sizes.push_back(t.pts[static_cast<size_t>(ge)] - t.pts[static_cast<size_t>(gcur)]);
    gcur = ge;
  }
  OptimizeResult r;
  r.partition = make_partition(probs, t.pts[static_cast<size_t>(best_g)], std::move(tail_sizes));
  r.cost = partition_cost(r.partition, params, batch);
  return r;
}

}  // namespace

Partition make_partition(const std::vector<double>& probs, int64_t k_h,
                         std::vector<int64_t> tail_sizes, std::vector<int64_t> cluster_dims) {
  const auto k = static_cast<int64_t>(probs.size());
  if (k_h < 1) throw std::invalid_argument("partition: head must hold at least one word");
  int64_t total = k_h;
  for (size_t i = 0; i < tail_sizes.size(); ++i) {
    if (tail_sizes[i] < 1) {
      throw std::invalid_argument("partition: tail cluster " + std::to_string(i + 1) +
                                  " is empty");
    }
    if (i > 0 && tail_sizes[i] < tail_sizes[i - 1]) {
      throw std::invalid_argument("partition: tail sizes must be non-decreasing, cluster " +
                                  std::to_string(i + 1) + " shrinks");
    }
    total += tail_sizes[i];
  }
  if (total != k) {
    throw std::invalid_argument("partition: sizes cover " + std::to_string(total) + " words, vocabulary has " +
                                std::to_string(k));
  }
  if (!cluster_dims.empty()) {
    if (cluster_dims.size() != tail_sizes.size()) {
      throw std::invalid_argument("partition: expected " + std::to_string(tail_sizes.size()) +
                                  " cluster capacities, got " + std::to_string(cluster_dims.size()));
    }
    for (size_t i = 0; i < cluster_dims.size(); ++i) {
      if (cluster_dims[i] < 1) {
        throw std::invalid_argument("partition: capacity of tail cluster " +
                                    std::to_string(i + 1) + " must be >= 1");
      }
      if (i > 0 && cluster_dims[i] > cluster_dims[i - 1]) {
        throw std::invalid_argument("partition: capacities must be non-increasing, cluster " +
                                    std::to_string(i + 1) + " grows");
      }
    }
  }

  Partition part;
  part.k_h = k_h;
  part.tail_sizes = std::move(tail_sizes);
  part.cluster_dims = std::move(cluster_dims);
  const auto prefix = prefix_probs(probs);
  part.head_prob = prefix[static_cast<size_t>(k_h)];
  int64_t pos = k_h;
  for (const int64_t size : part.tail_sizes) {
    part.tail_probs.push_back(prefix[static_cast<size_t>(pos + size)] -
                              prefix[static_cast<size_t>(pos)]);
    pos += size;
  }
  return part;
}

std::vector<int64_t> cluster_starts(const Partition& part) {
  std::vector<int64_t> starts{0, part.k_h};
  for (const int64_t size : part.tail_sizes) starts.push_back(starts.back() + size);
  return starts;
}

double partition_cost(const Partition& part, const CostModelParams& params, double batch) {
  const int64_t j = part.num_tail_clusters();
  if (part.k_h < 1) throw std::invalid_argument("partition_cost: empty head");
  double total = g(params, j + part.k_h, batch);
  for (int64_t i = 0; i < j; ++i) {
    const int64_t size = part.tail_sizes[static_cast<size_t>(i)];
    if (size < 1) {
      throw std::invalid_argument("partition_cost: tail cluster " + std::to_string(i + 1) +
                                  " is empty");
    }
    total += g(params, size, part.tail_probs[static_cast<size_t>(i)] * batch);
  }
  return total;
}

double affine_cost(const Partition& part, const CostModelParams& params, double batch) {
  const int64_t j = part.num_tail_clusters();
  if (!constraint_satisfied(params, j + part.k_h, batch)) {
    throw std::invalid_argument("affine_cost: head (k=" + std::to_string(j + part.k_h) +
                                ", batch=" + format_double(batch) +
                                ") violates k*batch >= k0*B0");
  }
  double weighted = 0.0;
  for (int64_t i = 0; i < j; ++i) {
    const int64_t size = part.tail_sizes[static_cast<size_t>(i)];
    const double p = part.tail_probs[static_cast<size_t>(i)];
    if (!constraint_satisfied(params, size, p * batch)) {
      throw std::invalid_argument("affine_cost: tail cluster " + std::to_string(i + 1) +
                                  " (k=" + std::to_string(size) + ", p=" + format_double(p) +
                                  ") violates k*p*batch >= k0*B0");
    }
    weighted += p * static_cast<double>(size);
  }
  return static_cast<double>(j + 1) * params.c +
         params.lambda * batch * (static_cast<double>(j + part.k_h) + weighted);
}

OptimizeResult optimize_fixed_j(const std::vector<double>& probs, int64_t J,
                                const CostModelParams& params, double batch, int64_t stride) {
  const auto k = static_cast<int64_t>(probs.size());
  if (J < 0) throw std::invalid_argument("optimize_fixed_j: J must be >= 0");
  if (J + 1 > k) {
    throw std::invalid_argument("optimize_fixed_j: " + std::to_string(J) +
                                " tail clusters plus a head need more than " + std::to_string(k) +
                                " words");
  }
  if (stride < 1) throw std::invalid_argument("optimize_fixed_j: stride must be >= 1");
  params.validate();
  if (J == 0) {
    OptimizeResult r;
    r.partition = make_partition(probs, k, {});
    r.cost = partition_cost(r.partition, params, batch);
    return r;
  }
  const auto prefix = prefix_probs(probs);
  const DpTables tables = build_dp_tables(prefix, k, J, params, batch, stride);
  return answer_for_j(probs, tables, J, params, batch);
}

OptimizeResult optimize_fixed_j(const Vocabulary& v, int64_t J, const CostModelParams& params,
                                double batch, int64_t stride) {
  return optimize_fixed_j(v.probs, J, params, batch, stride);
}

std::vector<SweepEntry> sweep_clusters(const std::vector<double>& probs, int64_t J_max,
                                       const CostModelParams& params, double batch,
                                       int64_t stride) {
  if (J_max < 1) throw std::invalid_argument("sweep_clusters: J_max must be >= 1");
  const auto k = static_cast<int64_t>(probs.size());
  params.validate();
  const auto prefix = prefix_probs(probs);
  const DpTables tables = build_dp_tables(prefix, k, J_max, params, batch, stride);
  std::vector<SweepEntry> entries;
  for (int64_t j = 1; j <= J_max; ++j) {
    OptimizeResult r = answer_for_j(probs, tables, j, params, batch);
    entries.push_back({j, std::move(r.partition), r.cost});
  }
  return entries;
}

TwoClusterCurve two_cluster_curve(const std::vector<double>& probs, const CostModelParams& params,
                                  double batch, int64_t stride) {
  const auto k = static_cast<int64_t>(probs.size());
  if (k < 2) throw std::invalid_argument("two_cluster_curve: need at least two words");
  if (stride < 1) throw std::invalid_argument("two_cluster_curve: stride must be >= 1");
  const auto prefix = prefix_probs(probs);
  TwoClusterCurve curve;
  curve.equal_split_k_h = k;
  for (int64_t k_h = 1; k_h < k; ++k_h) {
    if (k_h % stride != 0 && k_h != 1 && k_h != k - 1) continue;
    const double tail_mass = prefix[static_cast<size_t>(k)] - prefix[static_cast<size_t>(k_h)];
    const double cost =
        g(params, 1 + k_h, batch) + g(params, k - k_h, tail_mass * batch);
    curve.points.push_back({k_h, cost});
  }
  for (int64_t k_h = 1; k_h <= k; ++k_h) {
    if (prefix[static_cast<size_t>(k_h)] >= 0.5) {
      curve.equal_split_k_h = k_h;
      break;
    }
  }
  return curve;
}

std::vector<int64_t> assign_capacities(int64_t num_tail_clusters, int64_t d, double decay,
                                       int64_t d_min) {
  if (d_min < 1) throw std::invalid_argument("assign_capacities: d_min must be >= 1");
  if (d < d_min) throw std::invalid_argument("assign_capacities: d must be >= d_min");
  if (!(decay > 1.0)) throw std::invalid_argument("assign_capacities: decay must be > 1");
  std::vector<int64_t> dims;
  double denom = 1.0;
  for (int64_t i = 1; i <= num_tail_clusters; ++i) {
    denom *= decay;
    dims.push_back(std::max(d_min, static_cast<int64_t>(std::floor(static_cast<double>(d) / denom))));
  }
  return dims;
}

void save_partition(const Partition& part, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_partition: cannot open " + path);
  out << "k_h=" << part.k_h << '\n'
      << "tail_sizes=" << join_int64(part.tail_sizes) << '\n'
      << "cluster_dims=" << join_int64(part.cluster_dims) << '\n';
  if (!out) throw std::runtime_error("save_partition: write failed for " + path);
}

Partition load_partition(const std::string& path, const std::vector<double>& probs) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_partition: cannot open " + path);
  int64_t k_h = -1;
  std::vector<int64_t> tail_sizes, cluster_dims;
  bool seen_tails = false, seen_dims = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("load_partition: malformed line '" + line + "' in " + path);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "k_h") {
      k_h = std::stoll(value);
    } else if (key == "tail_sizes") {
      tail_sizes = split_int64(value);
      seen_tails = true;
    } else if (key == "cluster_dims") {
      cluster_dims = split_int64(value);
      seen_dims = true;
    } else {
      throw std::runtime_error("load_partition: unknown key '" + key + "' in " + path);
    }
  }
  if (k_h < 0 || !seen_tails || !seen_dims) {
    throw std::runtime_error("load_partition: missing keys in " + path);
  }
  return make_partition(probs, k_h, std::move(tail_sizes), std::move(cluster_dims));
}

void save_two_cluster_csv(const TwoClusterCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_two_cluster_csv: cannot open " + path);
  out << "k_h,cost_seconds\n";
  for (const TwoClusterPoint& p : curve.points) {
    out << p.k_h << ',' << format_double(p.cost) << '\n';
  }
  if (!out) throw std::runtime_error("save_two_cluster_csv: write failed for " + path);
}

void save_sweep_csv(const std::vector<SweepEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_sweep_csv: cannot open " + path);
  out << "J,cost_seconds\n";
  for (const SweepEntry& e : entries) {
    out << e.J << ',' << format_double(e.cost) << '\n';
  }
  if (!out) throw std::runtime_error("save_sweep_csv: write failed for " + path);
}

}  // namespace zipfmax
