#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zipfmax/matrix.hpp"
#include "zipfmax/partition.hpp"
#include "zipfmax/rng.hpp"

namespace zipfmax {

// Per-example log-probabilities produced by an output layer. `full` holds
// one row per example over the whole vocabulary and is only populated on
// request (training never materializes it).
template <typename T>
struct LogProbBatch {
  std::vector<T> target_logp;
  Matrix<T> full;
};

// Named view of one parameter matrix. Gradients live in caller-owned buffers
// aligned index-for-index with parameters(); biases are 1-row matrices so
// every parameter group moves through the same machinery.
template <typename T>
struct ParamView {
  std::string name;
  Matrix<T>* value;
};

// Common surface of the output layers: exact log-probabilities, mean
// cross-entropy loss, and a fused forward+backward producing analytic
// gradients. A layer is immutable during forward/backward — gradients
// accumulate into buffers owned by the caller — so a layer value may be
// shared read-only across workers. Parameters change only through the
// pointers exposed by parameters().
template <typename T>
class OutputLayer {
 public:
  virtual ~OutputLayer() = default;

  virtual const char* kind() const = 0;
  virtual int64_t hidden_dim() const = 0;
  virtual int64_t vocab_size() const = 0;

  virtual std::vector<ParamView<T>> parameters() = 0;

  // Mean over the batch of -log p(target | hidden row). Optionally reports
  // each example's target log-probability. Throws std::invalid_argument on
  // non-finite hidden input or out-of-range targets.
  virtual T loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
                 std::vector<T>* target_logp = nullptr) const = 0;

  // Fused forward + backward of `scale * mean loss`. Parameter gradients are
  // accumulated (+=) into `grads`, one matrix per parameters() entry with
  // matching shapes; the gradient with respect to hidden is accumulated into
  // *hidden_grad when non-null. Returns the unscaled mean loss.
  virtual T forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                             std::span<Matrix<T>> grads, Matrix<T>* hidden_grad,
                             T scale = T(1)) const = 0;

  // Exact log-distribution over the whole vocabulary, one row per example.
  // Rows are normalized: sum_w exp(out(b, w)) = 1 up to rounding.
  virtual Matrix<T> log_distribution(const Matrix<T>& hidden) const = 0;

  // Convenience wrapper bundling target log-probs with, on request, the full
  // distribution.
  LogProbBatch<T> log_probs(const Matrix<T>& hidden, std::span<const int32_t> targets,
                            bool with_full = false) const {
    LogProbBatch<T> out;
    loss(hidden, targets, &out.target_logp);
    if (with_full) out.full = log_distribution(hidden);
    return out;
  }
};

// Zero-filled gradient buffers matching the layer's parameters.
template <typename T>
std::vector<Matrix<T>> make_grad_buffers(std::span<const ParamView<T>> params) {
  std::vector<Matrix<T>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.emplace_back(p.value->rows(), p.value->cols());
  return grads;
}

// Flat softmax over the whole vocabulary: logits = hidden * W + b, one
// log-sum-exp per row. O(B * d * k) per batch.
template <typename T>
class FullSoftmax final : public OutputLayer<T> {
 public:
  FullSoftmax(int64_t d, int64_t k, Rng& rng);

  const char* kind() const override { return "full"; }
  int64_t hidden_dim() const override { return weight_.rows(); }
  int64_t vocab_size() const override { return weight_.cols(); }

  std::vector<ParamView<T>> parameters() override;
  T loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
         std::vector<T>* target_logp = nullptr) const override;
  T forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                     std::span<Matrix<T>> grads, Matrix<T>* hidden_grad, T scale) const override;
  Matrix<T> log_distribution(const Matrix<T>& hidden) const override;

  Matrix<T>& weight() { return weight_; }
  Matrix<T>& bias() { return bias_; }

 private:
  Matrix<T> weight_;  // d x k
  Matrix<T> bias_;    // 1 x k
};

// Two-level output layer over a frequency partition. The head scores the
// k_h short-list words (indices 0..k_h-1, frequency order) plus J cluster
// logits at indices k_h..k_h+J-1. A word in tail cluster i is scored as
// head log-prob of cluster logit i plus the in-cluster log-prob computed on
// the hidden state projected from d down to cluster_dims[i]. Forward and
// backward route each example only through its target's cluster, so a batch
// touches cluster i at expected share p_i.
template <typename T>
class AdaptiveSoftmax final : public OutputLayer<T> {
 public:
  // If the partition carries no cluster capacities they default to
  // assign_capacities(J, d). Capacities must not exceed d.
  AdaptiveSoftmax(int64_t d, Partition partition, Rng& rng);

  const char* kind() const override { return "adaptive"; }
  int64_t hidden_dim() const override { return head_w_.rows(); }
  int64_t vocab_size() const override { return partition_.total_words(); }

  std::vector<ParamView<T>> parameters() override;
  T loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
         std::vector<T>* target_logp = nullptr) const override;
  T forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                     std::span<Matrix<T>> grads, Matrix<T>* hidden_grad, T scale) const override;
  Matrix<T> log_distribution(const Matrix<T>& hidden) const override;

  const Partition& partition() const { return partition_; }
  Matrix<T>& head_weight() { return head_w_; }
  Matrix<T>& head_bias() { return head_b_; }

 private:
  Partition partition_;
  std::vector<int64_t> starts_;  // cluster_starts(partition_)
  Matrix<T> head_w_;             // d x (k_h + J)
  Matrix<T> head_b_;             // 1 x (k_h + J)
  struct Cluster {
    Matrix<T> proj;  // d x d_i (no bias: a plain linear map)
    Matrix<T> out;   // d_i x k_i
    Matrix<T> bias;  // 1 x k_i
  };
  std::vector<Cluster> clusters_;
};

// Two-level class-factorized softmax: p(w|h) = p1(class(w)|h) * p2(w|class,
// h). Classes are contiguous frequency bands built by spreading the words'
// square-root counts evenly over ~sqrt(k) bins, which balances the per-class
// work and brings the cost to O(B * d * sqrt(k)).
template <typename T>
class HsmFreq final : public OutputLayer<T> {
 public:
  HsmFreq(int64_t d, const std::vector<int64_t>& counts, Rng& rng);

  const char* kind() const override { return "hsm"; }
  int64_t hidden_dim() const override { return class_w_.rows(); }
  int64_t vocab_size() const override { return vocab_size_; }

  std::vector<ParamView<T>> parameters() override;
  T loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
         std::vector<T>* target_logp = nullptr) const override;
  T forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                     std::span<Matrix<T>> grads, Matrix<T>* hidden_grad, T scale) const override;
  Matrix<T> log_distribution(const Matrix<T>& hidden) const override;

  int64_t num_classes() const { return static_cast<int64_t>(class_sizes_.size()); }
  const std::vector<int64_t>& class_sizes() const { return class_sizes_; }
  int64_t class_of(int64_t word) const;

 private:
  int64_t vocab_size_ = 0;
  std::vector<int64_t> class_sizes_;   // contiguous bands over frequency order
  std::vector<int64_t> class_starts_;  // size num_classes + 1
  Matrix<T> class_w_;                  // d x num_classes
  Matrix<T> class_b_;                  // 1 x num_classes
  struct Class {
    Matrix<T> out;   // d x k_c
    Matrix<T> bias;  // 1 x k_c
  };
  std::vector<Class> classes_;
};

// Word-class boundaries used by HsmFreq: square-root counts accumulated into
// ~sqrt(k) contiguous bins over frequency-sorted words. Exposed for tests
// and planning. All-zero counts fall back to equal-width bins.
std::vector<int64_t> sqrt_count_class_sizes(const std::vector<int64_t>& counts);

enum class DSoftmaxVariant {
  sliced,     // cluster words read a disjoint slice of the hidden state
  projected,  // cluster words read the whole state through a d x d_i projection
};

// Flat softmax over all k words with frequency-dependent capacity: one
// log-sum-exp over the full vocabulary every step (no cluster logits, no
// routing). Short-list words use full capacity; tail cluster i uses
// cluster_dims[i], either as a disjoint slice of the hidden state (sliced)
// or through a projection of the whole state (projected). In the sliced
// variant the short-list occupies the leading d - sum(d_i) dimensions, so
// slices are disjoint and cover exactly d.
template <typename T>
class DSoftmax final : public OutputLayer<T> {
 public:
  DSoftmax(int64_t d, Partition partition, DSoftmaxVariant variant, Rng& rng);

  const char* kind() const override {
    return variant_ == DSoftmaxVariant::sliced ? "dsoftmax" : "dsoftmax-star";
  }
  int64_t hidden_dim() const override { return d_; }
  int64_t vocab_size() const override { return partition_.total_words(); }

  std::vector<ParamView<T>> parameters() override;
  T loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
         std::vector<T>* target_logp = nullptr) const override;
  T forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                     std::span<Matrix<T>> grads, Matrix<T>* hidden_grad, T scale) const override;
  Matrix<T> log_distribution(const Matrix<T>& hidden) const override;

  const Partition& partition() const { return partition_; }
  DSoftmaxVariant variant() const { return variant_; }
  int64_t head_slice_dim() const { return head_dim_; }
  Matrix<T>& cluster_projection(int64_t i) { return clusters_.at(static_cast<size_t>(i)).proj; }
  Matrix<T>& cluster_weight(int64_t i) { return clusters_.at(static_cast<size_t>(i)).out; }

 private:
  int64_t d_ = 0;
  Partition partition_;
  std::vector<int64_t> starts_;
  DSoftmaxVariant variant_ = DSoftmaxVariant::sliced;
  int64_t head_dim_ = 0;  // sliced: d - sum(d_i); projected: d
  Matrix<T> head_w_;      // head_dim x k_h
  Matrix<T> head_b_;      // 1 x k_h
  struct Cluster {
    Matrix<T> proj;  // d x d_i, projected variant only
    Matrix<T> out;   // d_i x k_i
    Matrix<T> bias;  // 1 x k_i
  };
  std::vector<Cluster> clusters_;
};

// Median wall-clock seconds of one fused forward+backward step on random
// hidden states, with targets drawn from `unigram` so tail routing reflects
// the clusters' probability masses. Targets are resampled per repeat and all
// buffers are prepared outside the timed region. repeats >= 3.
template <typename T>
double measure_layer_time(OutputLayer<T>& layer, const std::vector<double>& unigram,
                          int64_t batch, int repeats, uint64_t seed);

extern template class FullSoftmax<float>;
extern template class FullSoftmax<double>;
extern template class AdaptiveSoftmax<float>;
extern template class AdaptiveSoftmax<double>;
extern template class HsmFreq<float>;
extern template class HsmFreq<double>;
extern template class DSoftmax<float>;
extern template class DSoftmax<double>;

extern template double measure_layer_time<float>(OutputLayer<float>&, const std::vector<double>&,
                                                 int64_t, int, uint64_t);
extern template double measure_layer_time<double>(OutputLayer<double>&, const std::vector<double>&,
                                                  int64_t, int, uint64_t);

}  // namespace zipfmax
