#include "zipfmax/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "zipfmax/fast_math.hpp"

namespace zipfmax {

namespace {

template <typename T>
void apply_activation(Matrix<T>& m, Nonlinearity act) {
  T* p = m.data();
  const int64_t n = m.rows() * m.cols();
  if (act == Nonlinearity::sigmoid) {
    for (int64_t i = 0; i < n; ++i) {
      p[i] = T(1) / (T(1) + fexp(-p[i]));
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      p[i] = std::tanh(p[i]);
    }
  }
}

// In place: d = d * act'(pre), where `out` holds act(pre). Both nonlinearities
// expose their derivative through the activation value alone.
template <typename T>
void chain_activation(Matrix<T>& d, const Matrix<T>& out, Nonlinearity act) {
  T* dp = d.data();
  const T* op = out.data();
  const int64_t n = d.rows() * d.cols();
  if (act == Nonlinearity::sigmoid) {
    for (int64_t i = 0; i < n; ++i) {
      dp[i] *= op[i] * (T(1) - op[i]);
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      dp[i] *= T(1) - op[i] * op[i];
    }
  }
}

void check_token(int64_t token, int64_t vocab, const char* where) {
  if (token < 0 || token >= vocab) {
    throw std::invalid_argument(std::string(where) + ": token " + std::to_string(token) +
                                " out of range for vocabulary of " + std::to_string(vocab));
  }
}

// Copies embedding rows for the tokens in `ids` columns [col0, col0 + n) into
// `out` starting at column `dst0`, one block of n*emb values per output row.
template <typename T>
void gather_embeddings(const Matrix<T>& embed, const Matrix<int32_t>& ids, int64_t col0,
                       int64_t n, Matrix<T>& out, int64_t dst0) {
  const int64_t emb = embed.cols();
  for (int64_t b = 0; b < ids.rows(); ++b) {
    for (int64_t j = 0; j < n; ++j) {
      const int64_t token = ids(b, col0 + j);
      check_token(token, embed.rows(), "language model");
      const T* src = embed.data() + token * emb;
      std::copy(src, src + emb, out.data() + b * out.cols() + dst0 + j * emb);
    }
  }
}

// Accumulates blocks of embedding gradients back onto the rows named by
// `ids` (transpose of gather_embeddings).
template <typename T>
void scatter_embedding_grads(const Matrix<T>& d, const Matrix<int32_t>& ids, int64_t col0,
                             int64_t n, int64_t src0, Matrix<T>& grad) {
  const int64_t emb = grad.cols();
  for (int64_t b = 0; b < ids.rows(); ++b) {
    for (int64_t j = 0; j < n; ++j) {
      const int64_t token = ids(b, col0 + j);
      T* dst = grad.data() + token * emb;
      const T* src = d.data() + b * d.cols() + src0 + j * emb;
      for (int64_t e = 0; e < emb; ++e) {
        dst[e] += src[e];
      }
    }
  }
}

template <typename T>
void check_model_args(int64_t vocab, int64_t emb_dim, int64_t d, int64_t span, const char* span_name,
                      const OutputLayer<T>& output) {
  if (vocab < 1 || emb_dim < 1 || d < 1) {
    throw std::invalid_argument("language model: vocab, embedding, and hidden dims must be >= 1");
  }
  if (span < 1) {
    throw std::invalid_argument(std::string("language model: ") + span_name + " must be >= 1");
  }
  if (output.hidden_dim() != d) {
    throw std::invalid_argument("language model: output layer expects hidden dim " +
                                std::to_string(output.hidden_dim()) + ", model produces " +
                                std::to_string(d));
  }
  if (output.vocab_size() != vocab) {
    throw std::invalid_argument("language model: output layer covers " +
                                std::to_string(output.vocab_size()) + " words, vocabulary has " +
                                std::to_string(vocab));
  }
}

template <typename T>
void check_window_shape(const Matrix<int32_t>& window, int64_t want_cols, const char* kind) {
  if (window.rows() < 1 || window.cols() != want_cols) {
    throw std::invalid_argument(std::string(kind) + ": training window must be B x " +
                                std::to_string(want_cols) + ", got " + window.shape());
  }
}

template <typename T>
void init_param(Matrix<T>& m, int64_t fan_in, Rng& rng) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  fill_uniform(m, rng, -bound, bound);
}

}  // namespace

Nonlinearity nonlinearity_from_name(const std::string& name) {
  if (name == "sigmoid") {
    return Nonlinearity::sigmoid;
  }
  if (name == "tanh") {
    return Nonlinearity::tanh;
  }
  throw std::invalid_argument("unknown nonlinearity '" + name + "' (expected sigmoid or tanh)");
}

const char* nonlinearity_name(Nonlinearity act) {
  return act == Nonlinearity::sigmoid ? "sigmoid" : "tanh";
}

// ---------------------------------------------------------------------------
// FeedforwardLM

template <typename T>
FeedforwardLM<T>::FeedforwardLM(int64_t vocab, int64_t emb_dim, int64_t d, int64_t window,
                                Nonlinearity act, std::unique_ptr<OutputLayer<T>> output, Rng& rng)
    : window_(window),
      embed_(vocab, emb_dim),
      hidden_map_(window * emb_dim, d),
      act_(act),
      output_(std::move(output)) {
  check_model_args(vocab, emb_dim, d, window, "context window", *output_);
  init_param(embed_, emb_dim, rng);
  init_param(hidden_map_, window * emb_dim, rng);
}

template <typename T>
std::vector<ParamView<T>> FeedforwardLM<T>::parameters() {
  std::vector<ParamView<T>> params;
  params.push_back({"embed", &embed_});
  params.push_back({"hidden.w", &hidden_map_});
  for (const auto& p : output_->parameters()) {
    params.push_back({"output." + p.name, p.value});
  }
  return params;
}

template <typename T>
Matrix<T> FeedforwardLM<T>::hidden_for(const Matrix<int32_t>& contexts) const {
  if (contexts.cols() != window_) {
    throw std::invalid_argument("feedforward: context batch must be B x " +
                                std::to_string(window_) + ", got " + contexts.shape());
  }
  Matrix<T> x(contexts.rows(), window_ * embed_.cols());
  gather_embeddings(embed_, contexts, 0, window_, x, 0);
  Matrix<T> h = gemm(x, hidden_map_);
  apply_activation(h, act_);
  return h;
}

template <typename T>
T FeedforwardLM<T>::train_step(const Matrix<int32_t>& window, std::span<Matrix<T>> grads) {
  check_window_shape<T>(window, window_ + 1, "feedforward");
  if (grads.size() < 2) {
    throw std::invalid_argument("feedforward: gradient buffers misaligned with parameters");
  }
  const int64_t batch = window.rows();
  const int64_t emb = embed_.cols();

  Matrix<T> x(batch, window_ * emb);
  gather_embeddings(embed_, window, 0, window_, x, 0);
  Matrix<T> h = gemm(x, hidden_map_);
  apply_activation(h, act_);

  std::vector<int32_t> targets(batch);
  for (int64_t b = 0; b < batch; ++b) {
    targets[b] = window(b, window_);
  }

  Matrix<T> dh(batch, h.cols());
  dh.set_zero();
  const T loss =
      output_->forward_backward(h, targets, grads.subspan(2), &dh, T(1));

  chain_activation(dh, h, act_);
  gemm_into(x, Trans::yes, dh, Trans::none, grads[1], T(1), T(1));
  Matrix<T> dx(batch, window_ * emb);
  gemm_into(dh, Trans::none, hidden_map_, Trans::yes, dx, T(1), T(0));
  scatter_embedding_grads(dx, window, 0, window_, 0, grads[0]);
  return loss;
}

template <typename T>
void FeedforwardLM<T>::eval_logp(std::span<const int32_t> stream, std::vector<double>& out) {
  const int64_t n = static_cast<int64_t>(stream.size());
  constexpr int64_t kChunk = 256;
  for (int64_t first = window_; first < n; first += kChunk) {
    const int64_t rows = std::min(kChunk, n - first);
    Matrix<int32_t> contexts(rows, window_);
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t j = 0; j < window_; ++j) {
        contexts(r, j) = stream[first + r - window_ + j];
      }
    }
    const Matrix<T> h = hidden_for(contexts);
    const Matrix<T> logp = output_->log_distribution(h);
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t target = stream[first + r];
      check_token(target, vocab_size(), "language model");
      out.push_back(static_cast<double>(logp(r, target)));
    }
  }
}

// ---------------------------------------------------------------------------
// ElmanRNN

template <typename T>
ElmanRNN<T>::ElmanRNN(int64_t vocab, int64_t emb_dim, int64_t d, int64_t unroll, Nonlinearity act,
                      std::unique_ptr<OutputLayer<T>> output, Rng& rng)
    : unroll_(unroll),
      embed_(vocab, emb_dim),
      in_map_(emb_dim, d),
      rec_(d, d),
      act_(act),
      output_(std::move(output)),
      state_(0, d) {
  check_model_args(vocab, emb_dim, d, unroll, "unroll length", *output_);
  init_param(embed_, emb_dim, rng);
  init_param(in_map_, emb_dim, rng);
  init_param(rec_, d, rng);
}

template <typename T>
std::vector<ParamView<T>> ElmanRNN<T>::parameters() {
  std::vector<ParamView<T>> params;
  params.push_back({"embed", &embed_});
  params.push_back({"in.w", &in_map_});
  params.push_back({"rec.w", &rec_});
  for (const auto& p : output_->parameters()) {
    params.push_back({"output." + p.name, p.value});
  }
  return params;
}

template <typename T>
void ElmanRNN<T>::reset_state(int64_t batch) {
  if (batch < 0) {
    throw std::invalid_argument("elman: batch must be >= 0");
  }
  state_ = Matrix<T>(batch, rec_.rows());
  state_.set_zero();
}

template <typename T>
T ElmanRNN<T>::train_step(const Matrix<int32_t>& window, std::span<Matrix<T>> grads) {
  check_window_shape<T>(window, unroll_ + 1, "elman");
  if (grads.size() < 3) {
    throw std::invalid_argument("elman: gradient buffers misaligned with parameters");
  }
  const int64_t batch = window.rows();
  const int64_t d = rec_.rows();
  const int64_t emb = embed_.cols();
  if (state_.rows() != batch) {
    reset_state(batch);
  }

  // Forward: h_t = act(x_t * A + h_{t-1} * R) for t = 0..unroll-1, where x_t
  // embeds window column t and the prediction target is column t + 1.
  std::vector<Matrix<T>> xs;
  std::vector<Matrix<T>> hs;
  xs.reserve(unroll_);
  hs.reserve(unroll_);
  for (int64_t t = 0; t < unroll_; ++t) {
    Matrix<T> x(batch, emb);
    gather_embeddings(embed_, window, t, 1, x, 0);
    Matrix<T> pre = gemm(x, in_map_);
    const Matrix<T>& prev = t == 0 ? state_ : hs[t - 1];
    gemm_into(prev, Trans::none, rec_, Trans::none, pre, T(1), T(1));
    apply_activation(pre, act_);
    xs.push_back(std::move(x));
    hs.push_back(std::move(pre));
  }

  // Loss at every step, averaged over the unroll; the output layer scales its
  // own gradients, hidden gradients land in dhs[t].
  const T scale = T(1) / static_cast<T>(unroll_);
  std::vector<Matrix<T>> dhs;
  dhs.reserve(unroll_);
  double total = 0.0;
  std::vector<int32_t> targets(batch);
  for (int64_t t = 0; t < unroll_; ++t) {
    for (int64_t b = 0; b < batch; ++b) {
      targets[b] = window(b, t + 1);
    }
    Matrix<T> dh(batch, d);
    dh.set_zero();
    total += static_cast<double>(
        output_->forward_backward(hs[t], targets, grads.subspan(3), &dh, scale));
    dhs.push_back(std::move(dh));
  }

  // Backward through time; gradients stop at the window's entry state.
  Matrix<T> carry(batch, d);
  carry.set_zero();
  for (int64_t t = unroll_ - 1; t >= 0; --t) {
    Matrix<T>& dtotal = dhs[t];
    add_scaled(dtotal, carry, T(1));
    chain_activation(dtotal, hs[t], act_);
    const Matrix<T>& prev = t == 0 ? state_ : hs[t - 1];
    gemm_into(prev, Trans::yes, dtotal, Trans::none, grads[2], T(1), T(1));
    gemm_into(xs[t], Trans::yes, dtotal, Trans::none, grads[1], T(1), T(1));
    Matrix<T> dx(batch, emb);
    gemm_into(dtotal, Trans::none, in_map_, Trans::yes, dx, T(1), T(0));
    scatter_embedding_grads(dx, window, t, 1, 0, grads[0]);
    if (t > 0) {
      gemm_into(dtotal, Trans::none, rec_, Trans::yes, carry, T(1), T(0));
    }
  }

  state_ = hs[unroll_ - 1];  // truncation: the next window starts from a detached copy
  return static_cast<T>(total / static_cast<double>(unroll_));
}

template <typename T>
void ElmanRNN<T>::eval_logp(std::span<const int32_t> stream, std::vector<double>& out) {
  const int64_t n = static_cast<int64_t>(stream.size());
  if (n < 2) {
    return;
  }
  const int64_t d = rec_.rows();
  Matrix<T> h(1, d);
  h.set_zero();
  Matrix<int32_t> token(1, 1);
  for (int64_t i = 1; i < n; ++i) {
    token(0, 0) = stream[i - 1];
    Matrix<T> x(1, embed_.cols());
    gather_embeddings(embed_, token, 0, 1, x, 0);
    Matrix<T> pre = gemm(x, in_map_);
    gemm_into(h, Trans::none, rec_, Trans::none, pre, T(1), T(1));
    apply_activation(pre, act_);
    h = std::move(pre);
    const Matrix<T> logp = output_->log_distribution(h);
    const int64_t target = stream[i];
    check_token(target, vocab_size(), "language model");
    out.push_back(static_cast<double>(logp(0, target)));
  }
}

template class FeedforwardLM<float>;
template class FeedforwardLM<double>;
template class ElmanRNN<float>;
template class ElmanRNN<double>;

}  // namespace zipfmax
