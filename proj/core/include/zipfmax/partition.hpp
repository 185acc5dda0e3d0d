#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zipfmax/cost_model.hpp"
#include "zipfmax/vocab.hpp"

namespace zipfmax {

// Split of a frequency-sorted vocabulary into a head short-list (indices
// [0, k_h)) plus J contiguous tail clusters of non-decreasing size. Cluster
// probabilities are derived from the vocabulary on construction. Projected
// tail capacities may be empty until assigned.
struct Partition {
  int64_t k_h = 0;
  std::vector<int64_t> tail_sizes;
  std::vector<int64_t> cluster_dims;
  double head_prob = 0.0;
  std::vector<double> tail_probs;

  int64_t num_tail_clusters() const { return static_cast<int64_t>(tail_sizes.size()); }
  int64_t total_words() const {
    int64_t n = k_h;
    for (const int64_t s : tail_sizes) n += s;
    return n;
  }
};

// Validates cardinalities (every cluster >= 1 word, sizes cover the
// vocabulary, tail sizes non-decreasing, capacities non-increasing when
// present) and fills the cluster probabilities from `probs`.
Partition make_partition(const std::vector<double>& probs, int64_t k_h,
                         std::vector<int64_t> tail_sizes, std::vector<int64_t> cluster_dims = {});

// Word offsets where each cluster begins: [0, k_h, k_h + k_1, ...];
// size J + 2, last entry = total word count.
std::vector<int64_t> cluster_starts(const Partition& part);

// Expected step cost: g(J + k_h, batch) + sum_i g(k_i, p_i * batch).
// J = 0 degenerates to the single full product g(k_h, batch).
double partition_cost(const Partition& part, const CostModelParams& params, double batch);

// Closed affine form (J+1)c + lambda*batch*(J + k_h + sum_i p_i k_i); equals
// partition_cost exactly when every term satisfies k * (effective batch) >=
// k0 * B0, and reports the offending cluster otherwise.
double affine_cost(const Partition& part, const CostModelParams& params, double batch);

struct OptimizeResult {
  Partition partition;
  double cost = 0.0;  // partition_cost of the returned partition
};

// Minimizes partition_cost over all splits of the frequency-sorted list into
// a head plus exactly J contiguous clusters, by dynamic programming over word
// boundaries with prefix-sum probabilities. Ties break toward the smaller
// k_h, then the lexicographically smaller boundary vector. `stride` > 1
// coarsens candidate boundaries to every stride-th word for large
// vocabularies (the head scan stays exact only on that grid).
OptimizeResult optimize_fixed_j(const std::vector<double>& probs, int64_t J,
                                const CostModelParams& params, double batch, int64_t stride = 1);
OptimizeResult optimize_fixed_j(const Vocabulary& v, int64_t J, const CostModelParams& params,
                                double batch, int64_t stride = 1);

struct SweepEntry {
  int64_t J = 0;
  Partition partition;
  double cost = 0.0;
};

// optimize_fixed_j for J = 1..J_max off one shared table; returns the full
// cost curve for plotting plus per-J optima. The argmin is the entry with
// the smallest cost (first such J on ties).
std::vector<SweepEntry> sweep_clusters(const std::vector<double>& probs, int64_t J_max,
                                       const CostModelParams& params, double batch,
                                       int64_t stride = 1);

struct TwoClusterPoint {
  int64_t k_h = 0;
  double cost = 0.0;
};

struct TwoClusterCurve {
  std::vector<TwoClusterPoint> points;
  int64_t equal_split_k_h = 0;  // smallest k_h whose head mass reaches 1/2
};

// Predicted cost of the J=1 split for every head size on the stride grid.
TwoClusterCurve two_cluster_curve(const std::vector<double>& probs, const CostModelParams& params,
                                  double batch, int64_t stride = 1);

// Tail cluster i (1-indexed) gets capacity max(d_min, floor(d / decay^i));
// the head keeps full d.
std::vector<int64_t> assign_capacities(int64_t num_tail_clusters, int64_t d, double decay = 4.0,
                                       int64_t d_min = 8);

// Partition file: line 1 `k_h=<n>`; line 2 `tail_sizes=<n1,n2,...>`;
// line 3 `cluster_dims=<d1,d2,...>`.
void save_partition(const Partition& part, const std::string& path);
Partition load_partition(const std::string& path, const std::vector<double>& probs);

// `k_h,cost_seconds` rows for two_cluster_curve; `J,cost_seconds` for sweeps.
void save_two_cluster_csv(const TwoClusterCurve& curve, const std::string& path);
void save_sweep_csv(const std::vector<SweepEntry>& entries, const std::string& path);

}  // namespace zipfmax
