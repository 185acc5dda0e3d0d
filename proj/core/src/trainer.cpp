#include "zipfmax/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "zipfmax/checkpoint.hpp"
#include "zipfmax/timing.hpp"

namespace zipfmax {

template <>
const char* precision_name<float>() {
  return "f32";
}

template <>
const char* precision_name<double>() {
  return "f64";
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
AdagradState<T> make_adagrad_state(std::span<const ParamView<T>> params) {
  AdagradState<T> state;
  state.acc.reserve(params.size());
  for (const auto& p : params) {
    Matrix<T> a(p.value->rows(), p.value->cols());
    a.set_zero();
    state.acc.push_back(std::move(a));
  }
  return state;
}

template <typename T>
void adagrad_step(std::span<const ParamView<T>> params, std::span<const Matrix<T>> grads,
                  AdagradState<T>& state, double step, double epsilon) {
  if (step <= 0.0 || epsilon <= 0.0) {
    throw std::invalid_argument("adagrad: step and epsilon must be > 0");
  }
  if (params.size() != grads.size() || params.size() != state.acc.size()) {
    throw std::invalid_argument("adagrad: parameter, gradient, and state counts differ");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Matrix<T>& theta = *params[i].value;
    const Matrix<T>& g = grads[i];
    Matrix<T>& acc = state.acc[i];
    if (!g.same_shape(theta) || !acc.same_shape(theta)) {
      throw std::invalid_argument(std::string("adagrad: shape mismatch for parameter '") +
                                  params[i].name + "'");
    }
    T* tp = theta.data();
    const T* gp = g.data();
    T* ap = acc.data();
    const int64_t n = theta.rows() * theta.cols();
    for (int64_t j = 0; j < n; ++j) {
      const double gv = static_cast<double>(gp[j]);
      const double a = static_cast<double>(ap[j]) + gv * gv;
      ap[j] = static_cast<T>(a);
      tp[j] -= static_cast<T>(step * gv / std::sqrt(a + epsilon));
    }
  }
}

template <typename T>
double clip_global_norm(std::span<Matrix<T>> grads, double clip) {
  if (clip <= 0.0) {
    throw std::invalid_argument("clip_global_norm: clip must be > 0");
  }
  double sq = 0.0;
  for (const auto& g : grads) {
    sq += squared_norm(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const T scale = static_cast<T>(clip / norm);
    for (auto& g : grads) {
      T* p = g.data();
      const int64_t n = g.rows() * g.cols();
      for (int64_t j = 0; j < n; ++j) {
        p[j] *= scale;
      }
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

void TrainConfig::validate() const {
  if (step <= 0.0) {
    throw std::invalid_argument("train: step must be > 0");
  }
  if (adagrad_epsilon <= 0.0) {
    throw std::invalid_argument("train: adagrad_epsilon must be > 0");
  }
  if (clip <= 0.0) {
    throw std::invalid_argument("train: clip must be > 0");
  }
  if (epochs < 1) {
    throw std::invalid_argument("train: epochs must be >= 1");
  }
  if (batch < 1) {
    throw std::invalid_argument("train: batch must be >= 1");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("train: weight_decay must be >= 0");
  }
}

void save_training_log(const std::vector<EpochLog>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write training log '" + path + "'");
  }
  out << "epoch,step,loss,ppl_valid,seconds\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.17g,%.3f\n",
                  static_cast<long long>(r.epoch), static_cast<long long>(r.step), r.loss,
                  r.ppl_valid, r.seconds);
    out << buf;
  }
  if (!out.flush()) {
    throw std::runtime_error("cannot write training log '" + path + "'");
  }
}

template <typename T>
std::vector<EpochLog> train(LanguageModel<T>& model, const Vocabulary& vocab,
                            std::span<const int32_t> train_tokens,
                            std::span<const int32_t> valid_tokens, const TrainConfig& config,
                            const std::string& out_dir) {
  config.validate();
  const int64_t batch = config.batch;
  const int64_t context = model.min_context();
  const int64_t step_tokens = model.tokens_per_step();
  const int64_t shard = static_cast<int64_t>(train_tokens.size()) / batch;
  if (shard < context + step_tokens) {
    throw std::invalid_argument(
        "train: corpus too small: " + std::to_string(train_tokens.size()) + " tokens over " +
        std::to_string(batch) + " streams leaves " + std::to_string(shard) +
        " per stream, need at least " + std::to_string(context + step_tokens));
  }
  if (static_cast<int64_t>(valid_tokens.size()) <= context) {
    throw std::invalid_argument("train: validation stream needs more than " +
                                std::to_string(context) + " tokens");
  }
  const int64_t steps_per_epoch = (shard - context) / step_tokens;

  auto params = model.parameters();
  const std::span<const ParamView<T>> param_span(params);
  auto grads = make_grad_buffers(param_span);
  auto state = make_adagrad_state(param_span);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
  }

  Matrix<int32_t> window(batch, context + step_tokens);
  std::vector<EpochLog> logs;
  int64_t seen_steps = 0;
  Stopwatch watch;
  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.reset_state(batch);
    double loss_sum = 0.0;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const int64_t pos = context + s * step_tokens;  // first predicted offset in each stream
      for (int64_t b = 0; b < batch; ++b) {
        const int64_t base = b * shard + pos - context;
        for (int64_t j = 0; j < window.cols(); ++j) {
          window(b, j) = train_tokens[base + j];
        }
      }
      for (auto& g : grads) {
        g.set_zero();
      }
      const double loss = static_cast<double>(model.train_step(window, grads));
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train: loss became non-finite at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(s + 1) +
                                 " — stopping; try a smaller step size");
      }
      if (config.weight_decay > 0.0) {
        for (size_t i = 0; i < params.size(); ++i) {
          add_scaled(grads[i], *params[i].value, static_cast<T>(config.weight_decay));
        }
      }
      clip_global_norm(std::span<Matrix<T>>(grads), config.clip);
      adagrad_step(param_span, std::span<const Matrix<T>>(grads), state, config.step,
                   config.adagrad_epsilon);
      loss_sum += loss;
      ++seen_steps;
    }
    EpochLog row;
    row.epoch = epoch;
    row.step = seen_steps;
    row.loss = loss_sum / static_cast<double>(steps_per_epoch);
    row.ppl_valid = perplexity(model, valid_tokens);
    row.seconds = watch.seconds();
    logs.push_back(row);
    if (!out_dir.empty()) {
      save_training_log(logs, out_dir + "/log.csv");
      if (config.save_checkpoints) {
        save_model(model, vocab, out_dir + "/checkpoint_epoch" + std::to_string(epoch) + ".bin");
      }
    }
  }
  return logs;
}

template <typename T>
double perplexity(LanguageModel<T>& model, std::span<const int32_t> stream) {
  std::vector<double> logp;
  logp.reserve(stream.size());
  model.eval_logp(stream, logp);
  if (logp.empty()) {
    throw std::invalid_argument("perplexity: stream has no predictable positions (needs more than " +
                                std::to_string(model.min_context()) + " tokens)");
  }
  double sum = 0.0;
  for (const double v : logp) {
    sum += v;
  }
  return std::exp(-sum / static_cast<double>(logp.size()));
}

// ---------------------------------------------------------------------------
// Model assembly and checkpoints

template <typename T>
std::unique_ptr<OutputLayer<T>> make_output_layer(const std::string& kind, int64_t d,
                                                  const Vocabulary& vocab,
                                                  const Partition* partition, Rng& rng) {
  const auto need_partition = [&]() -> const Partition& {
    if (partition == nullptr) {
      throw std::invalid_argument("output layer '" + kind + "' requires a partition");
    }
    return *partition;
  };
  if (kind == "full") {
    return std::make_unique<FullSoftmax<T>>(d, vocab.size(), rng);
  }
  if (kind == "adaptive") {
    return std::make_unique<AdaptiveSoftmax<T>>(d, need_partition(), rng);
  }
  if (kind == "hsm") {
    return std::make_unique<HsmFreq<T>>(d, vocab.counts, rng);
  }
  if (kind == "dsoftmax") {
    return std::make_unique<DSoftmax<T>>(d, need_partition(), DSoftmaxVariant::sliced, rng);
  }
  if (kind == "dsoftmax-star") {
    return std::make_unique<DSoftmax<T>>(d, need_partition(), DSoftmaxVariant::projected, rng);
  }
  throw std::invalid_argument("unknown output layer '" + kind +
                              "' (expected full, adaptive, hsm, dsoftmax, or dsoftmax-star)");
}

namespace {

void add_partition_sections(CheckpointWriter& w, const Partition& p) {
  w.add_i64("partition.k_h", p.k_h);
  w.add_i64_list("partition.tails", p.tail_sizes);
  w.add_i64_list("partition.dims", p.cluster_dims);
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i > 0) {
      out += '\n';
    }
    out += words[i];
  }
  return out;
}

std::vector<std::string> split_words(const std::string& joined) {
  std::vector<std::string> words;
  if (joined.empty()) {
    return words;
  }
  size_t start = 0;
  while (true) {
    const size_t pos = joined.find('\n', start);
    if (pos == std::string::npos) {
      words.push_back(joined.substr(start));
      break;
    }
    words.push_back(joined.substr(start, pos - start));
    start = pos + 1;
  }
  return words;
}

}  // namespace

template <typename T>
void save_model(LanguageModel<T>& model, const Vocabulary& vocab, const std::string& path) {
  CheckpointWriter w;
  w.add_string("model.kind", model.kind());
  w.add_string("model.precision", precision_name<T>());
  w.add_i64("model.vocab_size", model.vocab_size());
  w.add_i64("model.emb_dim", model.emb_dim());
  w.add_i64("model.hidden_dim", model.hidden_dim());

  const OutputLayer<T>& layer = model.output_layer();
  if (auto* ff = dynamic_cast<FeedforwardLM<T>*>(&model)) {
    w.add_i64("model.window", ff->window());
    w.add_string("model.act", nonlinearity_name(ff->nonlinearity()));
  } else if (auto* rnn = dynamic_cast<ElmanRNN<T>*>(&model)) {
    w.add_i64("model.unroll", rnn->unroll());
    w.add_string("model.act", nonlinearity_name(rnn->nonlinearity()));
  } else {
    throw std::invalid_argument(std::string("save_model: unknown model kind '") + model.kind() +
                                "'");
  }

  w.add_string("output.kind", layer.kind());
  if (auto* adaptive = dynamic_cast<const AdaptiveSoftmax<T>*>(&layer)) {
    add_partition_sections(w, adaptive->partition());
  } else if (auto* dsm = dynamic_cast<const DSoftmax<T>*>(&layer)) {
    add_partition_sections(w, dsm->partition());
  }

  if (static_cast<int64_t>(vocab.words.size()) != model.vocab_size()) {
    throw std::invalid_argument("save_model: vocabulary has " +
                                std::to_string(vocab.words.size()) + " words, model covers " +
                                std::to_string(model.vocab_size()));
  }
  w.add_string("vocab.words", join_words(vocab.words));
  w.add_i64_list("vocab.counts", vocab.counts);
  w.add_i64("vocab.unk", vocab.unk_index);

  for (const auto& p : model.parameters()) {
    w.add_matrix(p.name, *p.value);
  }
  w.save(path);
}

template <typename T>
LoadedModel<T> load_model(const std::string& path) {
  const Checkpoint ckpt = Checkpoint::load(path);

  const std::string precision = ckpt.str("model.precision");
  if (precision != precision_name<T>()) {
    throw std::runtime_error("checkpoint '" + path + "' stores " + precision +
                             " parameters, but " + precision_name<T>() + " was requested");
  }

  Vocabulary vocab;
  vocab.words = split_words(ckpt.str("vocab.words"));
  vocab.counts = ckpt.i64_list("vocab.counts");
  vocab.unk_index = ckpt.i64("vocab.unk");
  if (vocab.words.size() != vocab.counts.size()) {
    throw std::runtime_error("checkpoint '" + path + "' vocabulary is inconsistent: " +
                             std::to_string(vocab.words.size()) + " words, " +
                             std::to_string(vocab.counts.size()) + " counts");
  }
  int64_t total = 0;
  for (const int64_t c : vocab.counts) {
    total += c;
  }
  vocab.probs.resize(vocab.counts.size());
  for (size_t i = 0; i < vocab.counts.size(); ++i) {
    vocab.probs[i] =
        total > 0 ? static_cast<double>(vocab.counts[i]) / static_cast<double>(total) : 0.0;
  }
  if (ckpt.i64("model.vocab_size") != vocab.size()) {
    throw std::runtime_error("checkpoint '" + path + "' vocabulary size does not match the model");
  }

  const int64_t emb_dim = ckpt.i64("model.emb_dim");
  const int64_t d = ckpt.i64("model.hidden_dim");
  const Nonlinearity act = nonlinearity_from_name(ckpt.str("model.act"));

  Partition partition;
  const bool has_partition = ckpt.has("partition.k_h");
  if (has_partition) {
    partition = make_partition(vocab.probs, ckpt.i64("partition.k_h"),
                               ckpt.i64_list("partition.tails"), ckpt.i64_list("partition.dims"));
  }

  Rng rng(1);  // placeholder init; every parameter is overwritten below
  auto layer = make_output_layer<T>(ckpt.str("output.kind"), d, vocab,
                                    has_partition ? &partition : nullptr, rng);

  const std::string kind = ckpt.str("model.kind");
  std::unique_ptr<LanguageModel<T>> model;
  if (kind == "feedforward") {
    model = std::make_unique<FeedforwardLM<T>>(vocab.size(), emb_dim, d, ckpt.i64("model.window"),
                                               act, std::move(layer), rng);
  } else if (kind == "elman") {
    model = std::make_unique<ElmanRNN<T>>(vocab.size(), emb_dim, d, ckpt.i64("model.unroll"), act,
                                          std::move(layer), rng);
  } else {
    throw std::runtime_error("checkpoint '" + path + "' has unknown model kind '" + kind + "'");
  }

  auto params = model->parameters();
  if (ckpt.matrix_section_count() != static_cast<int64_t>(params.size())) {
    throw std::runtime_error("checkpoint '" + path + "' holds " +
                             std::to_string(ckpt.matrix_section_count()) +
                             " parameter matrices, the model expects " +
                             std::to_string(params.size()));
  }
  for (auto& p : params) {
    Matrix<T> m = ckpt.matrix<T>(p.name);
    if (!m.same_shape(*p.value)) {
      throw std::runtime_error("checkpoint parameter '" + p.name + "' has shape " +
                               m.shape() + ", the model expects " +
                               p.value->shape());
    }
    *p.value = std::move(m);
  }
  return {std::move(model), std::move(vocab)};
}

template AdagradState<float> make_adagrad_state(std::span<const ParamView<float>>);
template AdagradState<double> make_adagrad_state(std::span<const ParamView<double>>);
template void adagrad_step(std::span<const ParamView<float>>, std::span<const Matrix<float>>,
                           AdagradState<float>&, double, double);
template void adagrad_step(std::span<const ParamView<double>>, std::span<const Matrix<double>>,
                           AdagradState<double>&, double, double);
template double clip_global_norm(std::span<Matrix<float>>, double);
template double clip_global_norm(std::span<Matrix<double>>, double);
template std::vector<EpochLog> train(LanguageModel<float>&, const Vocabulary&,
                                     std::span<const int32_t>, std::span<const int32_t>,
                                     const TrainConfig&, const std::string&);
template std::vector<EpochLog> train(LanguageModel<double>&, const Vocabulary&,
                                     std::span<const int32_t>, std::span<const int32_t>,
                                     const TrainConfig&, const std::string&);
template double perplexity(LanguageModel<float>&, std::span<const int32_t>);
template double perplexity(LanguageModel<double>&, std::span<const int32_t>);
template std::unique_ptr<OutputLayer<float>> make_output_layer(const std::string&, int64_t,
                                                               const Vocabulary&, const Partition*,
                                                               Rng&);
template std::unique_ptr<OutputLayer<double>> make_output_layer(const std::string&, int64_t,
                                                                const Vocabulary&, const Partition*,
                                                                Rng&);
template void save_model(LanguageModel<float>&, const Vocabulary&, const std::string&);
template void save_model(LanguageModel<double>&, const Vocabulary&, const std::string&);
template LoadedModel<float> load_model(const std::string&);
template LoadedModel<double> load_model(const std::string&);

}  // namespace zipfmax
