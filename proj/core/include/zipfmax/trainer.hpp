#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zipfmax/lm.hpp"
#include "zipfmax/matrix.hpp"
#include "zipfmax/partition.hpp"
#include "zipfmax/vocab.hpp"

namespace zipfmax {

// Adagrad: per coordinate, acc += g^2 then theta -= step * g / sqrt(acc + eps).
template <typename T>
struct AdagradState {
  std::vector<Matrix<T>> acc;
};

template <typename T>
AdagradState<T> make_adagrad_state(std::span<const ParamView<T>> params);

template <typename T>
void adagrad_step(std::span<const ParamView<T>> params, std::span<const Matrix<T>> grads,
                  AdagradState<T>& state, double step, double epsilon = 1e-10);

// Rescales all gradients in place so their joint L2 norm is at most `clip`;
// returns the norm before clipping.
template <typename T>
double clip_global_norm(std::span<Matrix<T>> grads, double clip);

struct TrainConfig {
  double step = 0.1;             // Adagrad step size
  double adagrad_epsilon = 1e-10;
  double clip = 1.0;             // global gradient-norm ceiling
  int64_t epochs = 5;
  int64_t batch = 128;           // parallel streams
  double weight_decay = 0.0;     // L2 penalty added to gradients before clipping
  bool save_checkpoints = true;  // write checkpoint_epochN.bin into out_dir

  void validate() const;
};

struct EpochLog {
  int64_t epoch = 0;
  int64_t step = 0;  // cumulative optimizer steps
  double loss = 0.0;
  double ppl_valid = 0.0;
  double seconds = 0.0;  // wall time since training started
};

// Writes `rows` as CSV with header epoch,step,loss,ppl_valid,seconds.
void save_training_log(const std::vector<EpochLog>& rows, const std::string& path);

// Trains `model` on `train_tokens` split into config.batch contiguous streams,
// evaluating exact perplexity on `valid_tokens` after every epoch. When
// `out_dir` is non-empty the training log and per-epoch checkpoints are
// written there. Aborts with a diagnostic if the loss turns non-finite.
template <typename T>
std::vector<EpochLog> train(LanguageModel<T>& model, const Vocabulary& vocab,
                            std::span<const int32_t> train_tokens,
                            std::span<const int32_t> valid_tokens, const TrainConfig& config,
                            const std::string& out_dir = {});

// Perplexity exp(mean -ln p) over every predictable position of the stream,
// using the output layer's full-distribution mode and double accumulation.
template <typename T>
double perplexity(LanguageModel<T>& model, std::span<const int32_t> stream);

// Output-layer factory shared by training, loading, and the command-line
// tools. `kind` is one of full, adaptive, hsm, dsoftmax, dsoftmax-star;
// adaptive and the d-softmax variants require a partition.
template <typename T>
std::unique_ptr<OutputLayer<T>> make_output_layer(const std::string& kind, int64_t d,
                                                  const Vocabulary& vocab,
                                                  const Partition* partition, Rng& rng);

// Model checkpoint files: architecture, vocabulary, and every parameter
// matrix in one container, restored by load_model into a ready-to-use model.
template <typename T>
void save_model(LanguageModel<T>& model, const Vocabulary& vocab, const std::string& path);

template <typename T>
struct LoadedModel {
  std::unique_ptr<LanguageModel<T>> model;
  Vocabulary vocab;
};

template <typename T>
LoadedModel<T> load_model(const std::string& path);

// Scalar tag recorded in checkpoints: "f32" or "f64".
template <typename T>
const char* precision_name();
template <>
const char* precision_name<float>();
template <>
const char* precision_name<double>();

extern template AdagradState<float> make_adagrad_state(std::span<const ParamView<float>>);
extern template AdagradState<double> make_adagrad_state(std::span<const ParamView<double>>);
extern template void adagrad_step(std::span<const ParamView<float>>, std::span<const Matrix<float>>,
                                  AdagradState<float>&, double, double);
extern template void adagrad_step(std::span<const ParamView<double>>,
                                  std::span<const Matrix<double>>, AdagradState<double>&, double,
                                  double);
extern template double clip_global_norm(std::span<Matrix<float>>, double);
extern template double clip_global_norm(std::span<Matrix<double>>, double);
extern template std::vector<EpochLog> train(LanguageModel<float>&, const Vocabulary&,
                                            std::span<const int32_t>, std::span<const int32_t>,
                                            const TrainConfig&, const std::string&);
extern template std::vector<EpochLog> train(LanguageModel<double>&, const Vocabulary&,
                                            std::span<const int32_t>, std::span<const int32_t>,
                                            const TrainConfig&, const std::string&);
extern template double perplexity(LanguageModel<float>&, std::span<const int32_t>);
extern template double perplexity(LanguageModel<double>&, std::span<const int32_t>);
extern template std::unique_ptr<OutputLayer<float>> make_output_layer(const std::string&, int64_t,
                                                                      const Vocabulary&,
                                                                      const Partition*, Rng&);
extern template std::unique_ptr<OutputLayer<double>> make_output_layer(const std::string&, int64_t,
                                                                       const Vocabulary&,
                                                                       const Partition*, Rng&);
extern template void save_model(LanguageModel<float>&, const Vocabulary&, const std::string&);
extern template void save_model(LanguageModel<double>&, const Vocabulary&, const std::string&);
extern template LoadedModel<float> load_model(const std::string&);
extern template LoadedModel<double> load_model(const std::string&);

}  // namespace zipfmax
