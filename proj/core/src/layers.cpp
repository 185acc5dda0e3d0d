#include "zipfmax/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "zipfmax/fast_math.hpp"
#include "zipfmax/timing.hpp"

namespace zipfmax {

namespace {

template <typename T>
void check_hidden(const Matrix<T>& hidden, int64_t d, const char* who) {
  if (hidden.cols() != d) {
    throw std::invalid_argument(std::string(who) + ": hidden is " + hidden.shape() +
                                ", expected " + std::to_string(hidden.rows()) + "x" +
                                std::to_string(d));
  }
  if (!all_finite(hidden)) {
    throw std::invalid_argument(std::string(who) + ": non-finite hidden input");
  }
}

template <typename T>
void check_targets(std::span<const int32_t> targets, const Matrix<T>& hidden, int64_t k,
                   const char* who) {
  if (static_cast<int64_t>(targets.size()) != hidden.rows()) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(hidden.rows()) + " rows");
  }
  for (const int32_t t : targets) {
    if (t < 0 || t >= k) {
      throw std::invalid_argument(std::string(who) + ": target " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(k));
    }
  }
}

template <typename T>
void check_grads(std::span<Matrix<T>> grads, const std::vector<const Matrix<T>*>& params,
                 const char* who) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(grads.size()) +
                                " gradient buffers for " + std::to_string(params.size()) +
                                " parameters");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(*params[i])) {
      throw std::invalid_argument(std::string(who) + ": gradient buffer " + std::to_string(i) +
                                  " is " + grads[i].shape() + ", parameter is " +
                                  params[i]->shape());
    }
  }
}

// m(r, :) += bias(0, :) for every row.
template <typename T>
void add_bias_row(Matrix<T>& m, const Matrix<T>& bias) {
  for (int64_t r = 0; r < m.rows(); ++r) {
    T* row = m.data() + r * m.cols();
    const T* b = bias.data();
    for (int64_t j = 0; j < m.cols(); ++j) row[j] += b[j];
  }
}

// g(0, :) += column sums of m.
template <typename T>
void add_col_sums(Matrix<T>& g, const Matrix<T>& m) {
  for (int64_t r = 0; r < m.rows(); ++r) {
    const T* row = m.data() + r * m.cols();
    T* out = g.data();
    for (int64_t j = 0; j < m.cols(); ++j) out[j] += row[j];
  }
}

// Logits -> log-probabilities, one log-sum-exp per row.
template <typename T>
void logp_rows(Matrix<T>& m) {
  for (int64_t r = 0; r < m.rows(); ++r) {
    const auto lse = static_cast<T>(log_sum_exp(std::span<const T>(m.row(r))));
    for (T& v : m.row(r)) v -= lse;
  }
}

// Log-probability row -> gradient of coeff * (-logp[target]) with respect to
// the logits: dlogit[j] = coeff * (p[j] - 1[j == target]).
template <typename T>
void logp_row_to_dlogit(std::span<T> row, int64_t target, T coeff) {
  for (T& v : row) v = fexp(v) * coeff;
  row[static_cast<size_t>(target)] -= coeff;
}

template <typename T>
Matrix<T> gather_rows(const Matrix<T>& src, const std::vector<int64_t>& rows) {
  Matrix<T> out(static_cast<int64_t>(rows.size()), src.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.row(rows[i]).data(), src.cols(), out.row(static_cast<int64_t>(i)).data());
  }
  return out;
}

template <typename T>
void scatter_add_rows(Matrix<T>& dst, const Matrix<T>& src, const std::vector<int64_t>& rows) {
  for (size_t i = 0; i < rows.size(); ++i) {
    const T* s = src.row(static_cast<int64_t>(i)).data();
    T* d = dst.row(rows[i]).data();
    for (int64_t j = 0; j < src.cols(); ++j) d[j] += s[j];
  }
}

template <typename T>
Matrix<T> gather_cols(const Matrix<T>& src, int64_t begin, int64_t width) {
  Matrix<T> out(src.rows(), width);
  for (int64_t r = 0; r < src.rows(); ++r) {
    std::copy_n(src.row(r).data() + begin, width, out.row(r).data());
  }
  return out;
}

template <typename T>
void scatter_add_cols(Matrix<T>& dst, const Matrix<T>& src, int64_t begin) {
  for (int64_t r = 0; r < src.rows(); ++r) {
    const T* s = src.row(r).data();
    T* d = dst.row(r).data() + begin;
    for (int64_t j = 0; j < src.cols(); ++j) d[j] += s[j];
  }
}

template <typename T>
void init_pm(Matrix<T>& m, Rng& rng, int64_t fan_in) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  fill_uniform(m, rng, -bound, bound);
}

// Index of the value range containing `word` given range starts (first entry
// 0, last entry the total), i.e. the j with starts[j] <= word < starts[j+1].
int64_t range_of(const std::vector<int64_t>& starts, int64_t word) {
  const auto it = std::upper_bound(starts.begin(), starts.end(), word);
  return static_cast<int64_t>(it - starts.begin()) - 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// FullSoftmax

template <typename T>
FullSoftmax<T>::FullSoftmax(int64_t d, int64_t k, Rng& rng) : weight_(d, k), bias_(1, k) {
  if (d < 1 || k < 1) {
    throw std::invalid_argument("FullSoftmax: need d >= 1 and k >= 1, got d=" +
                                std::to_string(d) + " k=" + std::to_string(k));
  }
  init_pm(weight_, rng, d);
}

template <typename T>
std::vector<ParamView<T>> FullSoftmax<T>::parameters() {
  return {{"full.w", &weight_}, {"full.b", &bias_}};
}

template <typename T>
T FullSoftmax<T>::loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
                       std::vector<T>* target_logp) const {
  check_hidden(hidden, weight_.rows(), "full softmax");
  check_targets(targets, hidden, weight_.cols(), "full softmax");
  Matrix<T> logits = gemm(hidden, weight_);
  add_bias_row(logits, bias_);
  logp_rows(logits);
  if (target_logp) target_logp->resize(targets.size());
  double total = 0.0;
  for (int64_t b = 0; b < hidden.rows(); ++b) {
    const T lp = logits(b, targets[static_cast<size_t>(b)]);
    if (target_logp) (*target_logp)[static_cast<size_t>(b)] = lp;
    total -= static_cast<double>(lp);
  }
  return static_cast<T>(total / static_cast<double>(hidden.rows()));
}

template <typename T>
T FullSoftmax<T>::forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                                   std::span<Matrix<T>> grads, Matrix<T>* hidden_grad,
                                   T scale) const {
  check_hidden(hidden, weight_.rows(), "full softmax");
  check_targets(targets, hidden, weight_.cols(), "full softmax");
  check_grads(grads, {&weight_, &bias_}, "full softmax");

  Matrix<T> logits = gemm(hidden, weight_);
  add_bias_row(logits, bias_);
  logp_rows(logits);

  const int64_t B = hidden.rows();
  const T coeff = scale / static_cast<T>(B);
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const int64_t t = targets[static_cast<size_t>(b)];
    total -= static_cast<double>(logits(b, t));
    logp_row_to_dlogit(logits.row(b), t, coeff);
  }
  gemm_into(hidden, Trans::yes, logits, Trans::none, grads[0], T(1), T(1));
  add_col_sums(grads[1], logits);
  if (hidden_grad) {
    gemm_into(logits, Trans::none, weight_, Trans::yes, *hidden_grad, T(1), T(1));
  }
  return static_cast<T>(total / static_cast<double>(B));
}

template <typename T>
Matrix<T> FullSoftmax<T>::log_distribution(const Matrix<T>& hidden) const {
  check_hidden(hidden, weight_.rows(), "full softmax");
  Matrix<T> logits = gemm(hidden, weight_);
  add_bias_row(logits, bias_);
  logp_rows(logits);
  return logits;
}

// ---------------------------------------------------------------------------
// AdaptiveSoftmax

template <typename T>
AdaptiveSoftmax<T>::AdaptiveSoftmax(int64_t d, Partition partition, Rng& rng)
    : partition_(std::move(partition)) {
  if (d < 1) throw std::invalid_argument("adaptive softmax: need d >= 1");
  const int64_t J = partition_.num_tail_clusters();
  if (partition_.cluster_dims.empty() && J > 0) {
    partition_.cluster_dims = assign_capacities(J, d);
  }
  for (int64_t i = 0; i < J; ++i) {
    const int64_t di = partition_.cluster_dims[static_cast<size_t>(i)];
    if (di < 1 || di > d) {
      throw std::invalid_argument("adaptive softmax: cluster " + std::to_string(i + 1) +
                                  " capacity " + std::to_string(di) + " outside [1, " +
                                  std::to_string(d) + "]");
    }
  }
  starts_ = cluster_starts(partition_);

  head_w_ = Matrix<T>(d, partition_.k_h + J);
  head_b_ = Matrix<T>(1, partition_.k_h + J);
  init_pm(head_w_, rng, d);
  clusters_.resize(static_cast<size_t>(J));
  for (int64_t i = 0; i < J; ++i) {
    auto& cl = clusters_[static_cast<size_t>(i)];
    const int64_t di = partition_.cluster_dims[static_cast<size_t>(i)];
    const int64_t ki = partition_.tail_sizes[static_cast<size_t>(i)];
    cl.proj = Matrix<T>(d, di);
    cl.out = Matrix<T>(di, ki);
    cl.bias = Matrix<T>(1, ki);
    init_pm(cl.proj, rng, d);
    init_pm(cl.out, rng, di);
  }
}

template <typename T>
std::vector<ParamView<T>> AdaptiveSoftmax<T>::parameters() {
  std::vector<ParamView<T>> out{{"head.w", &head_w_}, {"head.b", &head_b_}};
  for (size_t i = 0; i < clusters_.size(); ++i) {
    const std::string base = "cluster" + std::to_string(i + 1);
    out.push_back({base + ".proj", &clusters_[i].proj});
    out.push_back({base + ".out", &clusters_[i].out});
    out.push_back({base + ".b", &clusters_[i].bias});
  }
  return out;
}

template <typename T>
T AdaptiveSoftmax<T>::loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
                           std::vector<T>* target_logp) const {
  const int64_t d = head_w_.rows();
  const int64_t k = partition_.total_words();
  const int64_t k_h = partition_.k_h;
  const int64_t J = partition_.num_tail_clusters();
  check_hidden(hidden, d, "adaptive softmax");
  check_targets(targets, hidden, k, "adaptive softmax");

  Matrix<T> head = gemm(hidden, head_w_);
  add_bias_row(head, head_b_);
  logp_rows(head);

  std::vector<std::vector<int64_t>> groups(static_cast<size_t>(J));
  std::vector<double> logp(targets.size());
  for (int64_t b = 0; b < hidden.rows(); ++b) {
    const int64_t t = targets[static_cast<size_t>(b)];
    int64_t head_index = t;
    if (t >= k_h) {
      const int64_t cl = range_of(starts_, t) - 1;
      groups[static_cast<size_t>(cl)].push_back(b);
      head_index = k_h + cl;
    }
    logp[static_cast<size_t>(b)] = static_cast<double>(head(b, head_index));
  }
  for (int64_t i = 0; i < J; ++i) {
    const auto& rows = groups[static_cast<size_t>(i)];
    if (rows.empty()) continue;
    const auto& cl = clusters_[static_cast<size_t>(i)];
    const int64_t start = starts_[static_cast<size_t>(i) + 1];
    Matrix<T> sub = gather_rows(hidden, rows);
    Matrix<T> z = gemm(sub, cl.proj);
    Matrix<T> logits = gemm(z, cl.out);
    add_bias_row(logits, cl.bias);
    logp_rows(logits);
    for (size_t r = 0; r < rows.size(); ++r) {
      const int64_t t = targets[static_cast<size_t>(rows[r])] - start;
      logp[static_cast<size_t>(rows[r])] +=
          static_cast<double>(logits(static_cast<int64_t>(r), t));
    }
  }
  if (target_logp) target_logp->resize(targets.size());
  double total = 0.0;
  for (size_t b = 0; b < logp.size(); ++b) {
    if (target_logp) (*target_logp)[b] = static_cast<T>(logp[b]);
    total -= logp[b];
  }
  return static_cast<T>(total / static_cast<double>(hidden.rows()));
}

template <typename T>
T AdaptiveSoftmax<T>::forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                                       std::span<Matrix<T>> grads, Matrix<T>* hidden_grad,
                                       T scale) const {
  const int64_t d = head_w_.rows();
  const int64_t k = partition_.total_words();
  const int64_t k_h = partition_.k_h;
  const int64_t J = partition_.num_tail_clusters();
  check_hidden(hidden, d, "adaptive softmax");
  check_targets(targets, hidden, k, "adaptive softmax");
  {
    std::vector<const Matrix<T>*> refs{&head_w_, &head_b_};
    for (const auto& cl : clusters_) {
      refs.push_back(&cl.proj);
      refs.push_back(&cl.out);
      refs.push_back(&cl.bias);
    }
    check_grads(grads, refs, "adaptive softmax");
  }

  const int64_t B = hidden.rows();
  const T coeff = scale / static_cast<T>(B);

  Matrix<T> head = gemm(hidden, head_w_);
  add_bias_row(head, head_b_);
  logp_rows(head);

  // Route examples to their target's cluster.
  std::vector<std::vector<int64_t>> groups(static_cast<size_t>(J));
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const int64_t t = targets[static_cast<size_t>(b)];
    int64_t head_index = t;
    if (t >= k_h) {
      const int64_t cl = range_of(starts_, t) - 1;
      groups[static_cast<size_t>(cl)].push_back(b);
      head_index = k_h + cl;
    }
    total -= static_cast<double>(head(b, head_index));
    logp_row_to_dlogit(head.row(b), head_index, coeff);
  }

  gemm_into(hidden, Trans::yes, head, Trans::none, grads[0], T(1), T(1));
  add_col_sums(grads[1], head);
  if (hidden_grad) gemm_into(head, Trans::none, head_w_, Trans::yes, *hidden_grad, T(1), T(1));

  for (int64_t i = 0; i < J; ++i) {
    const auto& rows = groups[static_cast<size_t>(i)];
    if (rows.empty()) continue;
    const auto& cl = clusters_[static_cast<size_t>(i)];
    const int64_t start = starts_[static_cast<size_t>(i) + 1];

    Matrix<T> sub = gather_rows(hidden, rows);
    Matrix<T> z = gemm(sub, cl.proj);
    Matrix<T> logits = gemm(z, cl.out);
    add_bias_row(logits, cl.bias);
    logp_rows(logits);
    for (size_t r = 0; r < rows.size(); ++r) {
      const int64_t t = targets[static_cast<size_t>(rows[r])] - start;
      total -= static_cast<double>(logits(static_cast<int64_t>(r), t));
      logp_row_to_dlogit(logits.row(static_cast<int64_t>(r)), t, coeff);
    }

    Matrix<T>& g_proj = grads[2 + 3 * static_cast<size_t>(i)];
    Matrix<T>& g_out = grads[3 + 3 * static_cast<size_t>(i)];
    Matrix<T>& g_bias = grads[4 + 3 * static_cast<size_t>(i)];
    gemm_into(z, Trans::yes, logits, Trans::none, g_out, T(1), T(1));
    add_col_sums(g_bias, logits);
    Matrix<T> dz(static_cast<int64_t>(rows.size()), cl.proj.cols());
    gemm_into(logits, Trans::none, cl.out, Trans::yes, dz);
    gemm_into(sub, Trans::yes, dz, Trans::none, g_proj, T(1), T(1));
    if (hidden_grad) {
      Matrix<T> dsub(static_cast<int64_t>(rows.size()), d);
      gemm_into(dz, Trans::none, cl.proj, Trans::yes, dsub);
      scatter_add_rows(*hidden_grad, dsub, rows);
    }
  }
  return static_cast<T>(total / static_cast<double>(B));
}

template <typename T>
Matrix<T> AdaptiveSoftmax<T>::log_distribution(const Matrix<T>& hidden) const {
  const int64_t d = head_w_.rows();
  check_hidden(hidden, d, "adaptive softmax");
  const int64_t B = hidden.rows();
  const int64_t k = partition_.total_words();
  const int64_t k_h = partition_.k_h;

  Matrix<T> head = gemm(hidden, head_w_);
  add_bias_row(head, head_b_);
  logp_rows(head);

  Matrix<T> out(B, k);
  for (int64_t b = 0; b < B; ++b) {
    std::copy_n(head.row(b).data(), k_h, out.row(b).data());
  }
  for (size_t i = 0; i < clusters_.size(); ++i) {
    const auto& cl = clusters_[i];
    const int64_t start = starts_[i + 1];
    Matrix<T> z = gemm(hidden, cl.proj);
    Matrix<T> logits = gemm(z, cl.out);
    add_bias_row(logits, cl.bias);
    logp_rows(logits);
    for (int64_t b = 0; b < B; ++b) {
      const T gate = head(b, k_h + static_cast<int64_t>(i));
      const T* in = logits.row(b).data();
      T* dst = out.row(b).data() + start;
      for (int64_t j = 0; j < logits.cols(); ++j) dst[j] = gate + in[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// HsmFreq

std::vector<int64_t> sqrt_count_class_sizes(const std::vector<int64_t>& counts) {
  const auto k = static_cast<int64_t>(counts.size());
  if (k < 1) throw std::invalid_argument("class binning: empty vocabulary");
  double total = 0.0;
  std::vector<double> mass(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw std::invalid_argument("class binning: negative count");
    mass[i] = std::sqrt(static_cast<double>(counts[i]));
    total += mass[i];
  }
  if (total == 0.0) {
    std::fill(mass.begin(), mass.end(), 1.0);
    total = static_cast<double>(k);
  }
  const int64_t n = std::min<int64_t>(
      k, std::max<int64_t>(1, std::llround(std::sqrt(static_cast<double>(k)))));

  std::vector<int64_t> sizes;
  sizes.reserve(static_cast<size_t>(n));
  double cum = 0.0;
  int64_t word = 0;
  for (int64_t j = 1; j < n; ++j) {
    const double quota = total * static_cast<double>(j) / static_cast<double>(n);
    int64_t boundary = word;
    double c = cum;
    while (boundary < k && c < quota) c += mass[static_cast<size_t>(boundary++)];
    boundary = std::max(boundary, word + 1);        // at least one word per class
    boundary = std::min(boundary, k - (n - j));     // leave one word per later class
    sizes.push_back(boundary - word);
    while (word < boundary) cum += mass[static_cast<size_t>(word++)];
  }
  sizes.push_back(k - word);
  return sizes;
}

template <typename T>
HsmFreq<T>::HsmFreq(int64_t d, const std::vector<int64_t>& counts, Rng& rng)
    : vocab_size_(static_cast<int64_t>(counts.size())) {
  if (d < 1) throw std::invalid_argument("hsm: need d >= 1");
  class_sizes_ = sqrt_count_class_sizes(counts);
  class_starts_.assign(1, 0);
  for (const int64_t s : class_sizes_) class_starts_.push_back(class_starts_.back() + s);

  const auto n = static_cast<int64_t>(class_sizes_.size());
  class_w_ = Matrix<T>(d, n);
  class_b_ = Matrix<T>(1, n);
  init_pm(class_w_, rng, d);
  classes_.resize(static_cast<size_t>(n));
  for (int64_t c = 0; c < n; ++c) {
    auto& cls = classes_[static_cast<size_t>(c)];
    cls.out = Matrix<T>(d, class_sizes_[static_cast<size_t>(c)]);
    cls.bias = Matrix<T>(1, class_sizes_[static_cast<size_t>(c)]);
    init_pm(cls.out, rng, d);
  }
}

template <typename T>
int64_t HsmFreq<T>::class_of(int64_t word) const {
  if (word < 0 || word >= vocab_size_) {
    throw std::invalid_argument("hsm: word " + std::to_string(word) + " outside vocabulary");
  }
  return range_of(class_starts_, word);
}

template <typename T>
std::vector<ParamView<T>> HsmFreq<T>::parameters() {
  std::vector<ParamView<T>> out{{"class.w", &class_w_}, {"class.b", &class_b_}};
  for (size_t c = 0; c < classes_.size(); ++c) {
    const std::string base = "class" + std::to_string(c + 1);
    out.push_back({base + ".out", &classes_[c].out});
    out.push_back({base + ".b", &classes_[c].bias});
  }
  return out;
}

template <typename T>
T HsmFreq<T>::loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
                   std::vector<T>* target_logp) const {
  check_hidden(hidden, class_w_.rows(), "hsm");
  check_targets(targets, hidden, vocab_size_, "hsm");

  Matrix<T> class_logp = gemm(hidden, class_w_);
  add_bias_row(class_logp, class_b_);
  logp_rows(class_logp);

  std::vector<std::vector<int64_t>> groups(classes_.size());
  std::vector<double> logp(targets.size());
  for (int64_t b = 0; b < hidden.rows(); ++b) {
    const int64_t c = range_of(class_starts_, targets[static_cast<size_t>(b)]);
    groups[static_cast<size_t>(c)].push_back(b);
    logp[static_cast<size_t>(b)] = static_cast<double>(class_logp(b, c));
  }
  for (size_t c = 0; c < classes_.size(); ++c) {
    const auto& rows = groups[c];
    if (rows.empty()) continue;
    Matrix<T> sub = gather_rows(hidden, rows);
    Matrix<T> logits = gemm(sub, classes_[c].out);
    add_bias_row(logits, classes_[c].bias);
    logp_rows(logits);
    for (size_t r = 0; r < rows.size(); ++r) {
      const int64_t t = targets[static_cast<size_t>(rows[r])] - class_starts_[c];
      logp[static_cast<size_t>(rows[r])] +=
          static_cast<double>(logits(static_cast<int64_t>(r), t));
    }
  }
  if (target_logp) target_logp->resize(targets.size());
  double total = 0.0;
  for (size_t b = 0; b < logp.size(); ++b) {
    if (target_logp) (*target_logp)[b] = static_cast<T>(logp[b]);
    total -= logp[b];
  }
  return static_cast<T>(total / static_cast<double>(hidden.rows()));
}

template <typename T>
T HsmFreq<T>::forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                               std::span<Matrix<T>> grads, Matrix<T>* hidden_grad,
                               T scale) const {
  const int64_t d = class_w_.rows();
  check_hidden(hidden, d, "hsm");
  check_targets(targets, hidden, vocab_size_, "hsm");
  {
    std::vector<const Matrix<T>*> refs{&class_w_, &class_b_};
    for (const auto& cls : classes_) {
      refs.push_back(&cls.out);
      refs.push_back(&cls.bias);
    }
    check_grads(grads, refs, "hsm");
  }

  const int64_t B = hidden.rows();
  const T coeff = scale / static_cast<T>(B);

  Matrix<T> class_logp = gemm(hidden, class_w_);
  add_bias_row(class_logp, class_b_);
  logp_rows(class_logp);

  std::vector<std::vector<int64_t>> groups(classes_.size());
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const int64_t c = range_of(class_starts_, targets[static_cast<size_t>(b)]);
    groups[static_cast<size_t>(c)].push_back(b);
    total -= static_cast<double>(class_logp(b, c));
    logp_row_to_dlogit(class_logp.row(b), c, coeff);
  }
  gemm_into(hidden, Trans::yes, class_logp, Trans::none, grads[0], T(1), T(1));
  add_col_sums(grads[1], class_logp);
  if (hidden_grad) {
    gemm_into(class_logp, Trans::none, class_w_, Trans::yes, *hidden_grad, T(1), T(1));
  }

  for (size_t c = 0; c < classes_.size(); ++c) {
    const auto& rows = groups[c];
    if (rows.empty()) continue;
    const auto& cls = classes_[c];
    Matrix<T> sub = gather_rows(hidden, rows);
    Matrix<T> logits = gemm(sub, cls.out);
    add_bias_row(logits, cls.bias);
    logp_rows(logits);
    for (size_t r = 0; r < rows.size(); ++r) {
      const int64_t t = targets[static_cast<size_t>(rows[r])] - class_starts_[c];
      total -= static_cast<double>(logits(static_cast<int64_t>(r), t));
      logp_row_to_dlogit(logits.row(static_cast<int64_t>(r)), t, coeff);
    }
    Matrix<T>& g_out = grads[2 + 2 * c];
    Matrix<T>& g_bias = grads[3 + 2 * c];
    gemm_into(sub, Trans::yes, logits, Trans::none, g_out, T(1), T(1));
    add_col_sums(g_bias, logits);
    if (hidden_grad) {
      Matrix<T> dsub(static_cast<int64_t>(rows.size()), d);
      gemm_into(logits, Trans::none, cls.out, Trans::yes, dsub);
      scatter_add_rows(*hidden_grad, dsub, rows);
    }
  }
  return static_cast<T>(total / static_cast<double>(B));
}

template <typename T>
Matrix<T> HsmFreq<T>::log_distribution(const Matrix<T>& hidden) const {
  check_hidden(hidden, class_w_.rows(), "hsm");
  const int64_t B = hidden.rows();

  Matrix<T> class_logp = gemm(hidden, class_w_);
  add_bias_row(class_logp, class_b_);
  logp_rows(class_logp);

  Matrix<T> out(B, vocab_size_);
  for (size_t c = 0; c < classes_.size(); ++c) {
    Matrix<T> logits = gemm(hidden, classes_[c].out);
    add_bias_row(logits, classes_[c].bias);
    logp_rows(logits);
    const int64_t start = class_starts_[c];
    for (int64_t b = 0; b < B; ++b) {
      const T gate = class_logp(b, static_cast<int64_t>(c));
      const T* in = logits.row(b).data();
      T* dst = out.row(b).data() + start;
      for (int64_t j = 0; j < logits.cols(); ++j) dst[j] = gate + in[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DSoftmax

template <typename T>
DSoftmax<T>::DSoftmax(int64_t d, Partition partition, DSoftmaxVariant variant, Rng& rng)
    : d_(d), partition_(std::move(partition)), variant_(variant) {
  if (d < 1) throw std::invalid_argument("d-softmax: need d >= 1");
  const int64_t J = partition_.num_tail_clusters();
  if (partition_.cluster_dims.empty() && J > 0) {
    partition_.cluster_dims = assign_capacities(J, d);
  }
  int64_t dim_sum = 0;
  for (int64_t i = 0; i < J; ++i) {
    const int64_t di = partition_.cluster_dims[static_cast<size_t>(i)];
    if (di < 1 || di > d) {
      throw std::invalid_argument("d-softmax: cluster " + std::to_string(i + 1) + " capacity " +
                                  std::to_string(di) + " outside [1, " + std::to_string(d) + "]");
    }
    dim_sum += di;
  }
  if (variant_ == DSoftmaxVariant::sliced) {
    head_dim_ = d - dim_sum;
    if (head_dim_ < 1) {
      throw std::invalid_argument(
          "d-softmax: cluster capacities sum to " + std::to_string(dim_sum) +
          ", leaving no hidden slice for the short-list (d=" + std::to_string(d) + ")");
    }
  } else {
    head_dim_ = d;
  }
  starts_ = cluster_starts(partition_);

  head_w_ = Matrix<T>(head_dim_, partition_.k_h);
  head_b_ = Matrix<T>(1, partition_.k_h);
  init_pm(head_w_, rng, head_dim_);
  clusters_.resize(static_cast<size_t>(J));
  for (int64_t i = 0; i < J; ++i) {
    auto& cl = clusters_[static_cast<size_t>(i)];
    const int64_t di = partition_.cluster_dims[static_cast<size_t>(i)];
    const int64_t ki = partition_.tail_sizes[static_cast<size_t>(i)];
    if (variant_ == DSoftmaxVariant::projected) {
      cl.proj = Matrix<T>(d, di);
      init_pm(cl.proj, rng, d);
    }
    cl.out = Matrix<T>(di, ki);
    cl.bias = Matrix<T>(1, ki);
    init_pm(cl.out, rng, di);
  }
}

template <typename T>
std::vector<ParamView<T>> DSoftmax<T>::parameters() {
  std::vector<ParamView<T>> out{{"head.w", &head_w_}, {"head.b", &head_b_}};
  for (size_t i = 0; i < clusters_.size(); ++i) {
    const std::string base = "cluster" + std::to_string(i + 1);
    if (variant_ == DSoftmaxVariant::projected) {
      out.push_back({base + ".proj", &clusters_[i].proj});
    }
    out.push_back({base + ".out", &clusters_[i].out});
    out.push_back({base + ".b", &clusters_[i].bias});
  }
  return out;
}

template <typename T>
T DSoftmax<T>::loss(const Matrix<T>& hidden, std::span<const int32_t> targets,
                    std::vector<T>* target_logp) const {
  Matrix<T> logp = log_distribution(hidden);
  check_targets(targets, hidden, vocab_size(), "d-softmax");
  if (target_logp) target_logp->resize(targets.size());
  double total = 0.0;
  for (int64_t b = 0; b < hidden.rows(); ++b) {
    const T lp = logp(b, targets[static_cast<size_t>(b)]);
    if (target_logp) (*target_logp)[static_cast<size_t>(b)] = lp;
    total -= static_cast<double>(lp);
  }
  return static_cast<T>(total / static_cast<double>(hidden.rows()));
}

template <typename T>
T DSoftmax<T>::forward_backward(const Matrix<T>& hidden, std::span<const int32_t> targets,
                                std::span<Matrix<T>> grads, Matrix<T>* hidden_grad,
                                T scale) const {
  check_hidden(hidden, d_, "d-softmax");
  const int64_t k = partition_.total_words();
  check_targets(targets, hidden, k, "d-softmax");
  {
    std::vector<const Matrix<T>*> refs{&head_w_, &head_b_};
    for (const auto& cl : clusters_) {
      if (variant_ == DSoftmaxVariant::projected) refs.push_back(&cl.proj);
      refs.push_back(&cl.out);
      refs.push_back(&cl.bias);
    }
    check_grads(grads, refs, "d-softmax");
  }

  const int64_t B = hidden.rows();
  const int64_t k_h = partition_.k_h;
  const bool projected = variant_ == DSoftmaxVariant::projected;

  // Forward: assemble the flat logits, keeping each block's input activation.
  Matrix<T> logits(B, k);
  Matrix<T> head_in;
  if (!projected) head_in = gather_cols(hidden, 0, head_dim_);
  const Matrix<T>& head_src = projected ? hidden : head_in;
  {
    Matrix<T> block = gemm(head_src, head_w_);
    add_bias_row(block, head_b_);
    for (int64_t b = 0; b < B; ++b) std::copy_n(block.row(b).data(), k_h, logits.row(b).data());
  }
  std::vector<Matrix<T>> tail_in(clusters_.size());
  int64_t slice_off = head_dim_;
  for (size_t i = 0; i < clusters_.size(); ++i) {
    const auto& cl = clusters_[i];
    if (projected) {
      tail_in[i] = gemm(hidden, cl.proj);
    } else {
      tail_in[i] = gather_cols(hidden, slice_off, cl.out.rows());
      slice_off += cl.out.rows();
    }
    Matrix<T> block = gemm(tail_in[i], cl.out);
    add_bias_row(block, cl.bias);
    const int64_t start = starts_[i + 1];
    for (int64_t b = 0; b < B; ++b) {
      std::copy_n(block.row(b).data(), block.cols(), logits.row(b).data() + start);
    }
  }
  logp_rows(logits);

  const T coeff = scale / static_cast<T>(B);
  double total = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const int64_t t = targets[static_cast<size_t>(b)];
    total -= static_cast<double>(logits(b, t));
    logp_row_to_dlogit(logits.row(b), t, coeff);
  }

  // Backward per block.
  {
    Matrix<T> dblock = gather_cols(logits, 0, k_h);
    gemm_into(head_src, Trans::yes, dblock, Trans::none, grads[0], T(1), T(1));
    add_col_sums(grads[1], dblock);
    if (hidden_grad) {
      Matrix<T> din(B, head_dim_);
      gemm_into(dblock, Trans::none, head_w_, Trans::yes, din);
      if (projected) {
        add_scaled(*hidden_grad, din, T(1));
      } else {
        scatter_add_cols(*hidden_grad, din, 0);
      }
    }
  }
  slice_off = head_dim_;
  size_t gi = 2;
  for (size_t i = 0; i < clusters_.size(); ++i) {
    const auto& cl = clusters_[i];
    const int64_t start = starts_[i + 1];
    Matrix<T> dblock = gather_cols(logits, start, cl.out.cols());
    Matrix<T>* g_proj = projected ? &grads[gi++] : nullptr;
    Matrix<T>& g_out = grads[gi++];
    Matrix<T>& g_bias = grads[gi++];
    gemm_into(tail_in[i], Trans::yes, dblock, Trans::none, g_out, T(1), T(1));
    add_col_sums(g_bias, dblock);
    if (projected) {
      Matrix<T> dz(B, cl.out.rows());
      gemm_into(dblock, Trans::none, cl.out, Trans::yes, dz);
      gemm_into(hidden, Trans::yes, dz, Trans::none, *g_proj, T(1), T(1));
      if (hidden_grad) {
        gemm_into(dz, Trans::none, cl.proj, Trans::yes, *hidden_grad, T(1), T(1));
      }
    } else {
      if (hidden_grad) {
        Matrix<T> din(B, cl.out.rows());
        gemm_into(dblock, Trans::none, cl.out, Trans::yes, din);
        scatter_add_cols(*hidden_grad, din, slice_off);
      }
      slice_off += cl.out.rows();
    }
  }
  return static_cast<T>(total / static_cast<double>(B));
}

template <typename T>
Matrix<T> DSoftmax<T>::log_distribution(const Matrix<T>& hidden) const {
  check_hidden(hidden, d_, "d-softmax");
  const int64_t B = hidden.rows();
  const int64_t k = partition_.total_words();
  const int64_t k_h = partition_.k_h;
  const bool projected = variant_ == DSoftmaxVariant::projected;

  Matrix<T> logits(B, k);
  {
    Matrix<T> in = projected ? hidden : gather_cols(hidden, 0, head_dim_);
    Matrix<T> block = gemm(in, head_w_);
    add_bias_row(block, head_b_);
    for (int64_t b = 0; b < B; ++b) std::copy_n(block.row(b).data(), k_h, logits.row(b).data());
  }
  int64_t slice_off = head_dim_;
  for (size_t i = 0; i < clusters_.size(); ++i) {
    const auto& cl = clusters_[i];
    Matrix<T> in;
    if (projected) {
      in = gemm(hidden, cl.proj);
    } else {
      in = gather_cols(hidden, slice_off, cl.out.rows());
      slice_off += cl.out.rows();
    }
    Matrix<T> block = gemm(in, cl.out);
    add_bias_row(block, cl.bias);
    const int64_t start = starts_[i + 1];
    for (int64_t b = 0; b < B; ++b) {
      std::copy_n(block.row(b).data(), block.cols(), logits.row(b).data() + start);
    }
  }
  logp_rows(logits);
  return logits;
}

// ---------------------------------------------------------------------------
// Timing

template <typename T>
double measure_layer_time(OutputLayer<T>& layer, const std::vector<double>& unigram,
                          int64_t batch, int repeats, uint64_t seed) {
  if (repeats < 3) {
    throw std::invalid_argument("measure_layer_time: need repeats >= 3 for a median");
  }
  if (batch < 1) throw std::invalid_argument("measure_layer_time: need batch >= 1");
  if (static_cast<int64_t>(unigram.size()) != layer.vocab_size()) {
    throw std::invalid_argument("measure_layer_time: unigram size " +
                                std::to_string(unigram.size()) + " != vocabulary " +
                                std::to_string(layer.vocab_size()));
  }

  Rng rng(seed);
  Matrix<T> hidden(batch, layer.hidden_dim());
  fill_uniform(hidden, rng, T(-1), T(1));
  DiscreteSampler sampler(unigram);
  std::vector<std::vector<int32_t>> target_sets(static_cast<size_t>(repeats));
  for (auto& set : target_sets) {
    set.resize(static_cast<size_t>(batch));
    for (auto& t : set) t = static_cast<int32_t>(sampler.sample(rng));
  }

  auto params = layer.parameters();
  auto grads = make_grad_buffers<T>(std::span<const ParamView<T>>(params));
  Matrix<T> hidden_grad(batch, layer.hidden_dim());

  layer.forward_backward(hidden, target_sets[0], grads, &hidden_grad);  // warm-up, untimed

  std::vector<double> times(static_cast<size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    for (auto& g : grads) g.set_zero();
    hidden_grad.set_zero();
    Stopwatch clock;
    layer.forward_backward(hidden, target_sets[static_cast<size_t>(r)], grads, &hidden_grad);
    times[static_cast<size_t>(r)] = clock.seconds();
  }
  const auto mid = times.begin() + times.size() / 2;
  std::nth_element(times.begin(), mid, times.end());
  return std::max(*mid, 1e-9);
}

template class FullSoftmax<float>;
template class FullSoftmax<double>;
template class AdaptiveSoftmax<float>;
template class AdaptiveSoftmax<double>;
template class HsmFreq<float>;
template class HsmFreq<double>;
template class DSoftmax<float>;
template class DSoftmax<double>;

template double measure_layer_time<float>(OutputLayer<float>&, const std::vector<double>&,
                                          int64_t, int, uint64_t);
template double measure_layer_time<double>(OutputLayer<double>&, const std::vector<double>&,
                                           int64_t, int, uint64_t);

}  // namespace zipfmax
