#include "prpo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "prpo/chainsum.hpp"

namespace prpo {
namespace {

constexpr std::size_t kTableCells = 10 * 10 * 3;
constexpr std::size_t kControlCells = 2 * 2 * 3;

std::vector<double> log_softmax(std::vector<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  for (double& v : z) v -= lse;
  return z;
}

std::vector<double> softmax(const std::vector<double>& z) {
  auto lp = log_softmax(z);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

void check_tokens(std::span<const int> tokens, int vocab) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= vocab) {
      throw Error(ErrorCode::InvalidDistribution,
                  "token " + std::to_string(tokens[i]) + " outside vocabulary", i);
    }
  }
}

// grad[f, :] += coeff * dlogits for every active feature f.
void scatter(Weights& grad, const std::vector<std::uint32_t>& feats, double coeff,
             const std::vector<double>& dlogits) {
  for (std::uint32_t f : feats) {
    double* row = &grad.data[static_cast<std::size_t>(f) * grad.cols];
    for (std::size_t v = 0; v < grad.cols; ++v) row[v] += coeff * dlogits[v];
  }
}

std::vector<double> logits_for(const Weights& w, const std::vector<std::uint32_t>& feats) {
  std::vector<double> z(w.cols, 0.0);
  for (std::uint32_t f : feats) {
    const double* row = &w.data[static_cast<std::size_t>(f) * w.cols];
    for (std::size_t v = 0; v < w.cols; ++v) z[v] += row[v];
  }
  return z;
}

std::size_t gen_length(const Trajectory& tr) { return tr.tokens.size() - tr.gen_start; }

void check_alignment(const Trajectory& tr, const AdvantageVector& adv) {
  if (adv.size() != gen_length(tr)) {
    throw Error(ErrorCode::MisalignedAdvantage,
                "advantage length " + std::to_string(adv.size()) + " != generated length " +
                    std::to_string(gen_length(tr)));
  }
}

int draw(const std::vector<double>& p, double u) {
  double acc = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    acc += p[v];
    if (u < acc) return static_cast<int>(v);
  }
  // u landed in the rounding slack: take the last token with mass.
  for (std::size_t v = p.size(); v-- > 0;) {
    if (p[v] > 0.0) return static_cast<int>(v);
  }
  return 0;
}

std::vector<double> shape_for_sampling(const std::vector<double>& logits,
                                       const SamplingOptions& opts) {
  std::vector<double> z = logits;
  const double temp = std::max(opts.temperature, 1e-12);
  for (double& v : z) v /= temp;
  std::vector<double> p = softmax(z);
  if (opts.top_p >= 1.0) return p;
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::vector<double> kept(p.size(), 0.0);
  double mass = 0.0;
  for (std::size_t i : order) {
    kept[i] = p[i];
    mass += p[i];
    if (mass >= opts.top_p) break;
  }
  for (double& v : kept) v /= mass;
  return kept;
}

}  // namespace

ContextEncoder::ContextEncoder(EncoderSpec spec) : spec_(spec) {
  if (spec_.vocab < 2) throw Error(ErrorCode::Config, "policy.vocab: must be >= 2");
  if (spec_.window < 0) throw Error(ErrorCode::Config, "policy.window: must be >= 0");
  if (spec_.eos < 0 || spec_.eos >= spec_.vocab) {
    throw Error(ErrorCode::Config, "policy.eos: outside vocabulary");
  }
  if (spec_.chainsum_features && spec_.vocab != chainsum::kVocab) {
    throw Error(ErrorCode::Config, "policy.vocab: ChainSum features need 13 symbols");
  }
  table_base_ = slot_base_ + static_cast<std::size_t>(spec_.window * spec_.vocab);
  dim_ = table_base_;
  if (spec_.chainsum_features) {
    overflow_ = table_base_ + kTableCells;
    control_base_ = overflow_ + 1;
    dim_ = control_base_ + kControlCells;
  }
}

void ContextEncoder::active(std::span<const int> tokens, std::size_t gen_start,
                            std::size_t pos, std::vector<std::uint32_t>& out) const {
  out.clear();
  out.push_back(0);
  for (int k = 1; k <= spec_.window; ++k) {
    if (pos < static_cast<std::size_t>(k)) break;
    const int tok = tokens[pos - static_cast<std::size_t>(k)];
    out.push_back(static_cast<std::uint32_t>(slot_base_ +
                                             static_cast<std::size_t>((k - 1) * spec_.vocab + tok)));
  }
  if (!spec_.chainsum_features) return;

  const std::size_t prompt_end = std::min(gen_start, pos);
  int digits = 0;
  int running = 0;  // sum mod 10 of the digits before the current step
  chainsum::ParseState state;
  for (std::size_t t = gen_start; t < pos; ++t) state = chainsum::advance(state, tokens[t]);

  int next_digit = -1;
  for (std::size_t t = 0; t < prompt_end; ++t) {
    if (!chainsum::is_digit(tokens[t])) continue;
    if (static_cast<std::size_t>(digits) == state.step) next_digit = tokens[t];
    if (static_cast<std::size_t>(digits) < state.step) running = (running + tokens[t]) % 10;
    ++digits;
  }
  const std::size_t jcap = std::min<std::size_t>(state.digit_pos, 2);
  if (next_digit >= 0) {
    out.push_back(static_cast<std::uint32_t>(
        table_base_ + (static_cast<std::size_t>(running * 10 + next_digit)) * 3 + jcap));
  } else {
    out.push_back(static_cast<std::uint32_t>(overflow_));
  }
  const std::size_t last_step = state.step + 1 == static_cast<std::size_t>(digits) ? 1 : 0;
  const std::size_t phase = state.answer_phase ? 1 : 0;
  out.push_back(
      static_cast<std::uint32_t>(control_base_ + (phase * 2 + last_step) * 3 + jcap));
}

void Weights::axpy(double a, const Weights& x) {
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += a * x.data[i];
}

double Weights::squared_norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return s;
}

Policy::Policy(EncoderSpec spec)
    : encoder_(spec), weights_(encoder_.feature_dim(), static_cast<std::size_t>(spec.vocab)) {}

Policy::Policy(EncoderSpec spec, Weights weights) : encoder_(spec), weights_(std::move(weights)) {
  if (weights_.rows != encoder_.feature_dim() ||
      weights_.cols != static_cast<std::size_t>(spec.vocab)) {
    throw Error(ErrorCode::Config, "policy weights do not match the encoder shape");
  }
}

std::vector<double> Policy::logits(std::span<const int> tokens, std::size_t gen_start,
                                   std::size_t pos) const {
  std::vector<std::uint32_t> feats;
  encoder_.active(tokens, gen_start, pos, feats);
  return logits_for(weights_, feats);
}

std::vector<double> Policy::step_dist(std::span<const int> tokens, std::size_t gen_start,
                                      std::size_t pos) const {
  return softmax(logits(tokens, gen_start, pos));
}

std::vector<double> Policy::token_logprobs(std::span<const int> tokens,
                                           std::size_t gen_start) const {
  check_tokens(tokens, vocab());
  std::vector<double> out;
  out.reserve(tokens.size() - gen_start);
  for (std::size_t t = gen_start; t < tokens.size(); ++t) {
    out.push_back(log_softmax(logits(tokens, gen_start, t))[static_cast<std::size_t>(tokens[t])]);
  }
  return out;
}

Trajectory sample_trajectory(const Policy& policy, std::span<const int> prompt,
                             std::size_t max_len, std::uint64_t seed,
                             const SamplingOptions& opts) {
  check_tokens(prompt, policy.vocab());
  Trajectory tr;
  tr.tokens.assign(prompt.begin(), prompt.end());
  tr.gen_start = prompt.size();
  const auto vocab = static_cast<std::size_t>(policy.vocab());
  for (int tok : prompt) {
    std::vector<double> point(vocab, 0.0);
    point[static_cast<std::size_t>(tok)] = 1.0;
    tr.dists.push_back(std::move(point));
    tr.entropies.push_back(0.0);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::size_t pos = tr.tokens.size();
    const auto z = policy.logits(tr.tokens, tr.gen_start, pos);
    std::vector<double> p = softmax(z);
    double h = 0.0;
    for (double v : p) {
      if (v > 0.0) h -= v * std::log(v);
    }
    const bool plain = opts.temperature == 1.0 && opts.top_p >= 1.0;
    const int tok = draw(plain ? p : shape_for_sampling(z, opts), unit(rng));
    tr.tokens.push_back(tok);
    tr.dists.push_back(std::move(p));
    tr.entropies.push_back(std::max(h, 0.0));
    if (tok == policy.eos()) break;
  }
  return tr;
}

std::vector<int> decode_greedy(const Policy& policy, std::span<const int> prompt,
                               std::size_t max_len) {
  std::vector<int> tokens(prompt.begin(), prompt.end());
  const std::size_t gen_start = tokens.size();
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto z = policy.logits(tokens, gen_start, tokens.size());
    const int tok = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    tokens.push_back(tok);
    if (tok == policy.eos()) break;
  }
  return std::vector<int>(tokens.begin() + static_cast<std::ptrdiff_t>(gen_start), tokens.end());
}

Objective grad_weighted_logratio(const Policy& pi, const Policy& ref, const Trajectory& tr,
                                 const AdvantageVector& adv) {
  check_alignment(tr, adv);
  check_tokens(tr.tokens, pi.vocab());
  Objective out{0.0, Weights(pi.weights().rows, pi.weights().cols)};
  const std::size_t T = gen_length(tr);
  if (T == 0) return out;
  const double inv_t = 1.0 / static_cast<double>(T);
  std::vector<std::uint32_t> feats;
  for (std::size_t t = tr.gen_start; t < tr.tokens.size(); ++t) {
    const auto x = static_cast<std::size_t>(tr.tokens[t]);
    const double a = adv[t - tr.gen_start];
    pi.encoder().active(tr.tokens, tr.gen_start, t, feats);
    const auto lp = log_softmax(logits_for(pi.weights(), feats));
    const auto lq = log_softmax(ref.logits(tr.tokens, tr.gen_start, t));
    out.value += a * (lp[x] - lq[x]);
    if (a == 0.0) continue;
    std::vector<double> d(lp.size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = (v == x ? 1.0 : 0.0) - std::exp(lp[v]);
    scatter(out.grad, feats, a * inv_t, d);
  }
  out.value *= inv_t;
  return out;
}

Objective clipped_surrogate(const Policy& pi, std::span<const double> old_logprobs,
                            const Trajectory& tr, const AdvantageVector& adv,
                            double clip_ratio) {
  check_alignment(tr, adv);
  check_tokens(tr.tokens, pi.vocab());
  const std::size_t T = gen_length(tr);
  if (old_logprobs.size() != T) {
    throw Error(ErrorCode::MisalignedAdvantage, "old log-probabilities misaligned");
  }
  Objective out{0.0, Weights(pi.weights().rows, pi.weights().cols)};
  if (T == 0) return out;
  const double inv_t = 1.0 / static_cast<double>(T);
  std::vector<std::uint32_t> feats;
  for (std::size_t t = tr.gen_start; t < tr.tokens.size(); ++t) {
    const std::size_t i = t - tr.gen_start;
    const auto x = static_cast<std::size_t>(tr.tokens[t]);
    const double a = adv[i];
    pi.encoder().active(tr.tokens, tr.gen_start, t, feats);
    const auto lp = log_softmax(logits_for(pi.weights(), feats));
    const double r = std::exp(lp[x] - old_logprobs[i]);
    const bool clipped = (a >= 0.0 && r > 1.0 + clip_ratio) || (a < 0.0 && r < 1.0 - clip_ratio);
    if (clipped) {
      out.value += a * std::clamp(r, 1.0 - clip_ratio, 1.0 + clip_ratio);
      continue;
    }
    out.value += a * r;
    if (a == 0.0) continue;
    std::vector<double> d(lp.size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = (v == x ? 1.0 : 0.0) - std::exp(lp[v]);
    scatter(out.grad, feats, a * r * inv_t, d);
  }
  out.value *= inv_t;
  return out;
}

Objective kl_to_ref_with_grad(const Policy& pi, const Policy& ref, const Trajectory& tr) {
  check_tokens(tr.tokens, pi.vocab());
  Objective out{0.0, Weights(pi.weights().rows, pi.weights().cols)};
  const std::size_t T = gen_length(tr);
  if (T == 0) return out;
  const double inv_t = 1.0 / static_cast<double>(T);
  std::vector<std::uint32_t> feats;
  for (std::size_t t = tr.gen_start; t < tr.tokens.size(); ++t) {
    pi.encoder().active(tr.tokens, tr.gen_start, t, feats);
    const auto lp = log_softmax(logits_for(pi.weights(), feats));
    const auto lq = log_softmax(ref.logits(tr.tokens, tr.gen_start, t));
    double kl = 0.0;
    for (std::size_t v = 0; v < lp.size(); ++v) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
    out.value += kl;
    std::vector<double> d(lp.size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = std::exp(lp[v]) * (lp[v] - lq[v] - kl);
    scatter(out.grad, feats, inv_t, d);
  }
  out.value *= inv_t;
  return out;
}

double kl_to_ref(const Policy& pi, const Policy& ref, const Trajectory& tr) {
  return kl_to_ref_with_grad(pi, ref, tr).value;
}

double prefix_logprob(const Policy& pi, std::span<const int> tokens, std::size_t gen_start,
                      std::size_t end) {
  double s = 0.0;
  for (std::size_t t = gen_start; t < end; ++t) {
    s += log_softmax(pi.logits(tokens, gen_start, t))[static_cast<std::size_t>(tokens[t])];
  }
  return s;
}

namespace {

constexpr char kMagic[8] = {'P', 'R', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written in host order, which must be little-endian");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const Policy& policy, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string());
  const auto& spec = policy.encoder().spec();
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::int32_t>(os, spec.vocab);
  put<std::int32_t>(os, spec.window);
  put<std::int32_t>(os, spec.chainsum_features ? 1 : 0);
  put<std::int32_t>(os, spec.eos);
  put<std::uint64_t>(os, policy.weights().rows);
  put<std::uint64_t>(os, policy.weights().cols);
  os.write(reinterpret_cast<const char*>(policy.weights().data.data()),
           static_cast<std::streamsize>(policy.weights().data.size() * sizeof(double)));
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Policy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::Io, path.string() + " is not a policy checkpoint");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::Io, "unsupported checkpoint version " + std::to_string(version));
  }
  EncoderSpec spec;
  spec.vocab = get<std::int32_t>(is);
  spec.window = get<std::int32_t>(is);
  spec.chainsum_features = get<std::int32_t>(is) != 0;
  spec.eos = get<std::int32_t>(is);
  const auto rows = get<std::uint64_t>(is);
  const auto cols = get<std::uint64_t>(is);
  Weights w(rows, cols);
  is.read(reinterpret_cast<char*>(w.data.data()),
          static_cast<std::streamsize>(w.data.size() * sizeof(double)));
  if (!is) throw Error(ErrorCode::Io, "truncated checkpoint " + path.string());
  return Policy(spec, std::move(w));
}

}  // namespace prpo
