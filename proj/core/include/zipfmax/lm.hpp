#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zipfmax/layers.hpp"
#include "zipfmax/matrix.hpp"
#include "zipfmax/rng.hpp"

namespace zipfmax {

enum class Nonlinearity { sigmoid, tanh };

Nonlinearity nonlinearity_from_name(const std::string& name);
const char* nonlinearity_name(Nonlinearity act);

// Desk-scale language models over a fixed vocabulary, generic in the output
// layer. Both models present the same stream protocol so one trainer drives
// either: a stream is split into B parallel shards, and each training step
// consumes a window of min_context() + tokens_per_step() consecutive tokens
// per shard, predicting the last tokens_per_step() of them.
template <typename T>
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const char* kind() const = 0;
  virtual int64_t vocab_size() const = 0;
  virtual int64_t hidden_dim() const = 0;
  virtual int64_t emb_dim() const = 0;
  virtual OutputLayer<T>& output_layer() = 0;
  virtual const OutputLayer<T>& output_layer() const = 0;

  // Model parameters followed by the output layer's (names prefixed
  // "output."). Gradient buffers align index-for-index.
  virtual std::vector<ParamView<T>> parameters() = 0;

  // Leading tokens of each shard consumed as context before the first
  // prediction: the window size N for the feedforward model, 1 for the
  // recurrent model.
  virtual int64_t min_context() const = 0;
  // Positions predicted (and advanced) per training step.
  virtual int64_t tokens_per_step() const = 0;

  // One training step. window(b, :) holds min_context() + tokens_per_step()
  // consecutive tokens of stream b; the last tokens_per_step() positions are
  // predicted. Returns the mean loss over all predictions of the step and
  // accumulates parameter gradients into `grads`.
  virtual T train_step(const Matrix<int32_t>& window, std::span<Matrix<T>> grads) = 0;

  // Clears carried state and sizes it for `batch` parallel streams (called
  // at epoch boundaries; a no-op for stateless models).
  virtual void reset_state(int64_t batch) = 0;

  // Appends the exact log-probability of stream[i] for every position
  // i >= min_context(), in order, computed with the output layer's
  // full-distribution mode. Does not disturb training state.
  virtual void eval_logp(std::span<const int32_t> stream, std::vector<double>& out) = 0;
};

// Feedforward N-gram model: the previous `window` words are embedded,
// concatenated, and mapped through one nonlinear hidden layer,
// h = act(A * [e_1; ...; e_N]). No hidden bias.
template <typename T>
class FeedforwardLM final : public LanguageModel<T> {
 public:
  FeedforwardLM(int64_t vocab, int64_t emb_dim, int64_t d, int64_t window, Nonlinearity act,
                std::unique_ptr<OutputLayer<T>> output, Rng& rng);

  const char* kind() const override { return "feedforward"; }
  int64_t vocab_size() const override { return embed_.rows(); }
  int64_t hidden_dim() const override { return hidden_map_.cols(); }
  int64_t emb_dim() const override { return embed_.cols(); }
  OutputLayer<T>& output_layer() override { return *output_; }
  const OutputLayer<T>& output_layer() const override { return *output_; }
  std::vector<ParamView<T>> parameters() override;

  int64_t min_context() const override { return window_; }
  int64_t tokens_per_step() const override { return 1; }
  T train_step(const Matrix<int32_t>& window, std::span<Matrix<T>> grads) override;
  void reset_state(int64_t) override {}
  void eval_logp(std::span<const int32_t> stream, std::vector<double>& out) override;

  int64_t window() const { return window_; }
  Nonlinearity nonlinearity() const { return act_; }
  Matrix<T>& embeddings() { return embed_; }
  Matrix<T>& hidden_map() { return hidden_map_; }

  // Hidden states for a batch of contexts (one row of `window` tokens each).
  Matrix<T> hidden_for(const Matrix<int32_t>& contexts) const;

 private:
  int64_t window_ = 0;
  Matrix<T> embed_;       // k x emb
  Matrix<T> hidden_map_;  // (window * emb) x d
  Nonlinearity act_ = Nonlinearity::sigmoid;
  std::unique_ptr<OutputLayer<T>> output_;
};

// Elman recurrent model, h_t = act(x_t * A + h_{t-1} * R), trained with
// truncated backpropagation through time over `unroll` steps: gradients stop
// at each window's entry state, which is the (detached) exit state of the
// previous window.
template <typename T>
class ElmanRNN final : public LanguageModel<T> {
 public:
  ElmanRNN(int64_t vocab, int64_t emb_dim, int64_t d, int64_t unroll, Nonlinearity act,
           std::unique_ptr<OutputLayer<T>> output, Rng& rng);

  const char* kind() const override { return "elman"; }
  int64_t vocab_size() const override { return embed_.rows(); }
  int64_t hidden_dim() const override { return rec_.rows(); }
  int64_t emb_dim() const override { return embed_.cols(); }
  OutputLayer<T>& output_layer() override { return *output_; }
  const OutputLayer<T>& output_layer() const override { return *output_; }
  std::vector<ParamView<T>> parameters() override;

  int64_t min_context() const override { return 1; }
  int64_t tokens_per_step() const override { return unroll_; }
  T train_step(const Matrix<int32_t>& window, std::span<Matrix<T>> grads) override;
  void reset_state(int64_t batch) override;
  void eval_logp(std::span<const int32_t> stream, std::vector<double>& out) override;

  int64_t unroll() const { return unroll_; }
  Nonlinearity nonlinearity() const { return act_; }
  Matrix<T>& embeddings() { return embed_; }
  Matrix<T>& input_map() { return in_map_; }
  Matrix<T>& recurrence() { return rec_; }

 private:
  int64_t unroll_ = 0;
  Matrix<T> embed_;   // k x emb
  Matrix<T> in_map_;  // emb x d
  Matrix<T> rec_;     // d x d
  Nonlinearity act_ = Nonlinearity::sigmoid;
  std::unique_ptr<OutputLayer<T>> output_;
  Matrix<T> state_;  // B x d carried across steps within an epoch
};

extern template class FeedforwardLM<float>;
extern template class FeedforwardLM<double>;
extern template class ElmanRNN<float>;
extern template class ElmanRNN<double>;

}  // namespace zipfmax
