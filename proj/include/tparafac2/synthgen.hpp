#ifndef TPARAFAC2_SYNTHGEN_HPP_
#define TPARAFAC2_SYNTHGEN_HPP_

// Topic-model style synthetic data: authors x words x time tensors whose
// concepts drift over time, with ground-truth PARAFAC2 factors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tparafac2/core.hpp"

namespace tparafac2::synth {

enum class DriftKind { sudden, gradual, reoccurring, incremental };
enum class StrengthKind { constant, increasing, decreasing, periodic };

inline std::string_view to_string(DriftKind k) {
  switch (k) {
    case DriftKind::sudden: return "sudden";
    case DriftKind::gradual: return "gradual";
    case DriftKind::reoccurring: return "reoccurring";
    case DriftKind::incremental: return "incremental";
  }
  return "unknown";
}

inline DriftKind drift_kind_from_string(std::string_view s) {
  if (s == "sudden") return DriftKind::sudden;
  if (s == "gradual") return DriftKind::gradual;
  if (s == "reoccurring") return DriftKind::reoccurring;
  if (s == "incremental") return DriftKind::incremental;
  throw std::invalid_argument("unknown drift kind: " + std::string(s));
}

inline std::string_view to_string(StrengthKind k) {
  switch (k) {
    case StrengthKind::constant: return "constant";
    case StrengthKind::increasing: return "increasing";
    case StrengthKind::decreasing: return "decreasing";
    case StrengthKind::periodic: return "periodic";
  }
  return "unknown";
}

inline StrengthKind strength_kind_from_string(std::string_view s) {
  if (s == "constant") return StrengthKind::constant;
  if (s == "increasing") return StrengthKind::increasing;
  if (s == "decreasing") return StrengthKind::decreasing;
  if (s == "periodic") return StrengthKind::periodic;
  throw std::invalid_argument("unknown strength kind: " + std::string(s));
}

/// How a concept's active word set evolves.
///
/// Time points t are 1-based. `set2[i]` takes over the importance of
/// `set1[i]` when it becomes active, so both sets must have equal size
/// (set2 may be left empty for a concept that never changes).
struct DriftSpec {
  DriftKind kind = DriftKind::sudden;
  int t0 = 2;               // sudden, gradual: first time point using set2 only
  int tp = 2;               // reoccurring: half-period
  double p_new = 0.2;       // incremental: per-step activation probability
  double steepness = 1.0;   // incremental: sigmoid ramp steepness (may be +inf)
  std::vector<Index> set1;
  std::vector<Index> set2;

  void validate(Index J, Index K) const {
    if (set1.empty()) throw std::invalid_argument("DriftSpec: set1 must be non-empty");
    if (!set2.empty() && set2.size() != set1.size())
      throw std::invalid_argument("DriftSpec: set1 and set2 must have equal size");
    for (const auto* s : {&set1, &set2})
      for (Index w : *s)
        if (w < 0 || w >= J) throw std::invalid_argument("DriftSpec: word index out of range");
    const bool two_sets = !set2.empty();
    if (two_sets && (kind == DriftKind::sudden || kind == DriftKind::gradual) && (t0 < 2 || t0 > K - 2))
      throw std::invalid_argument("DriftSpec: t0 must lie in [2, K-2]");
    if (two_sets && kind == DriftKind::reoccurring && (tp < 2 || tp > K - 2))
      throw std::invalid_argument("DriftSpec: tp must lie in [2, K-2]");
    if (kind == DriftKind::incremental && !(p_new > 0.0 && p_new <= 1.0))
      throw std::invalid_argument("DriftSpec: p_new must lie in (0, 1]");
    if (kind == DriftKind::incremental && !(steepness > 0.0))
      throw std::invalid_argument("DriftSpec: steepness must be positive");
  }
};

/// Concept strength over time (one column of C).
struct StrengthProfile {
  StrengthKind kind = StrengthKind::constant;
  double base = 1.0;       // minimum level of the profile
  double amplitude = 0.5;  // ramp height / oscillation peak-to-peak
  double period = 6.0;     // periodic only, in time points
  // Optional window of near-zero strength (0-based start slice).
  int low_start = -1;
  int low_length = 0;
  double low_level = 0.01;

  std::vector<double> sequence(Index K) const {
    std::vector<double> s(static_cast<std::size_t>(K));
    const double span = K > 1 ? static_cast<double>(K - 1) : 1.0;
    for (Index k = 0; k < K; ++k) {
      const double t = static_cast<double>(k);
      double v = base;
      switch (kind) {
        case StrengthKind::constant: break;
        case StrengthKind::increasing: v += amplitude * t / span; break;
        case StrengthKind::decreasing: v += amplitude * (1.0 - t / span); break;
        case StrengthKind::periodic:
          v += 0.5 * amplitude * (1.0 + std::sin(2.0 * std::numbers::pi * t / period));
          break;
      }
      s[static_cast<std::size_t>(k)] = v;
    }
    if (low_start >= 0)
      for (int k = low_start; k < low_start + low_length && k < K; ++k) s[static_cast<std::size_t>(k)] = low_level;
    return s;
  }

  bool has_low_window() const { return low_start >= 0 && low_length > 0; }

  void validate(Index K) const {
    if (!(base >= 0.0) || !(amplitude >= 0.0)) throw std::invalid_argument("StrengthProfile: negative level");
    if (kind == StrengthKind::periodic && !(period > 0.0))
      throw std::invalid_argument("StrengthProfile: period must be positive");
    if (has_low_window()) {
      if (low_length < 4 || low_length > 6) throw std::invalid_argument("StrengthProfile: low window must span 4-6 slices");
      if (low_start + low_length > K) throw std::invalid_argument("StrengthProfile: low window exceeds K");
      if (!(low_level >= 0.0)) throw std::invalid_argument("StrengthProfile: negative low level");
    }
  }
};

struct ConceptSpec {
  DriftSpec drift;
  StrengthProfile strength;
  Index author_set_size = 20;
};

struct SyntheticConfig {
  Index I = 60;
  Index J = 40;
  Index K = 15;
  std::vector<ConceptSpec> concepts;
  double overlap_fraction = 0.0;
  double eta = 0.0;
  std::uint64_t seed = 0;

  Index R() const { return static_cast<Index>(concepts.size()); }

  void validate() const {
    if (I < 1 || J < 1 || K < 1) throw std::invalid_argument("SyntheticConfig: empty dimensions");
    if (concepts.empty()) throw std::invalid_argument("SyntheticConfig: no concepts");
    if (!(eta >= 0.0)) throw std::invalid_argument("SyntheticConfig: eta must be non-negative");
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
      throw std::invalid_argument("SyntheticConfig: overlap_fraction must lie in [0, 1)");
    for (const auto& c : concepts) {
      c.drift.validate(J, K);
      c.strength.validate(K);
      if (c.author_set_size < 1 || c.author_set_size > I)
        throw std::invalid_argument("SyntheticConfig: author set size out of range");
    }
    // Concepts evolve differently, except in the all-incremental overlap setting.
    const bool all_incremental = std::all_of(concepts.begin(), concepts.end(), [](const ConceptSpec& c) {
      return c.drift.kind == DriftKind::incremental;
    });
    if (!all_incremental && R() <= 4) {
      std::set<DriftKind> kinds;
      for (const auto& c : concepts) kinds.insert(c.drift.kind);
      if (static_cast<Index>(kinds.size()) != R())
        throw std::invalid_argument("SyntheticConfig: drift kinds must be pairwise distinct");
    }
  }
};

struct Dataset {
  TensorSlices noisy;
  TensorSlices clean;
  Parafac2Factors truth;
};

/// Active words of one concept at one time point, with their importance
/// multipliers (1 except for ramping words of incremental drift).
struct ActiveWord {
  Index word;
  Index position;  // index into the concept's importance vector
  double weight;
};

using ActivityPattern = std::vector<std::vector<ActiveWord>>;

namespace detail {

inline double clipped_normal(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.5, 0.5);
  return std::max(0.0, n(rng));
}

inline std::vector<ActiveWord> whole_set(const std::vector<Index>& words) {
  std::vector<ActiveWord> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) out.push_back({words[i], static_cast<Index>(i), 1.0});
  return out;
}

inline double ramp(double steepness, int elapsed) {
  if (std::isinf(steepness)) return 1.0;
  return 1.0 / (1.0 + std::exp(-steepness * (static_cast<double>(elapsed) + 0.5)));
}

}  // namespace detail

/// Word activity for each of the K time points. Randomness (gradual
/// switching, incremental activation) is drawn from `rng`.
inline ActivityPattern drift_activity(const DriftSpec& spec, Index K, std::mt19937_64& rng) {
  ActivityPattern out(static_cast<std::size_t>(K));
  const auto first = detail::whole_set(spec.set1);
  if (spec.set2.empty()) {
    std::fill(out.begin(), out.end(), first);
    return out;
  }
  const auto second = detail::whole_set(spec.set2);
  switch (spec.kind) {
    case DriftKind::sudden:
      for (Index k = 0; k < K; ++k) out[static_cast<std::size_t>(k)] = (k + 1 < spec.t0) ? first : second;
      break;
    case DriftKind::gradual: {
      std::bernoulli_distribution coin(0.5);
      for (Index k = 0; k < K; ++k)
        out[static_cast<std::size_t>(k)] = (k + 1 < spec.t0 && !coin(rng)) ? first : second;
      break;
    }
    case DriftKind::reoccurring:
      for (Index k = 0; k < K; ++k) out[static_cast<std::size_t>(k)] = ((k / spec.tp) % 2 == 0) ? first : second;
      break;
    case DriftKind::incremental: {
      // Words of set2 that are not in set1 replace their positional partner
      // once activated and fade in along a sigmoid.
      const std::set<Index> initial(spec.set1.begin(), spec.set1.end());
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < spec.set2.size(); ++i)
        if (!initial.count(spec.set2[i])) candidates.push_back(i);
      std::vector<int> activated(spec.set2.size(), std::numeric_limits<int>::max());
      std::bernoulli_distribution activate(spec.p_new);
      for (Index k = 0; k < K; ++k) {
        const int t = static_cast<int>(k) + 1;
        if (t >= 2) {
          for (std::size_t i : candidates)
            if (activated[i] == std::numeric_limits<int>::max() && (activate(rng) || t == K)) activated[i] = t;
        }
        auto& slot = out[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < spec.set1.size(); ++i) {
          const bool replaced = activated[i] <= t && spec.set2[i] != spec.set1[i];
          if (!replaced) {
            slot.push_back({spec.set1[i], static_cast<Index>(i), 1.0});
          } else {
            slot.push_back({spec.set2[i], static_cast<Index>(i), detail::ramp(spec.steepness, t - activated[i])});
          }
        }
      }
      break;
    }
  }
  return out;
}

/// Draws ground truth and data for `config`. The clean tensor and truth
/// depend only on the seed; the noise direction is drawn from an
/// independent stream of the same seed and rescaled to relative norm eta.
inline Dataset generate(const SyntheticConfig& config) {
  config.validate();
  const Index I = config.I, J = config.J, K = config.K, R = config.R();
  std::mt19937_64 rng(config.seed);

  Parafac2Factors truth;
  truth.A = Matrix::Zero(I, R);
  truth.B.assign(static_cast<std::size_t>(K), Matrix::Zero(J, R));
  truth.D.assign(static_cast<std::size_t>(K), Vector::Zero(R));

  std::vector<Index> authors(static_cast<std::size_t>(I));
  for (Index r = 0; r < R; ++r) {
    const auto& concept_spec = config.concepts[static_cast<std::size_t>(r)];
    std::iota(authors.begin(), authors.end(), Index{0});
    std::shuffle(authors.begin(), authors.end(), rng);
    for (Index a = 0; a < concept_spec.author_set_size; ++a)
      truth.A(authors[static_cast<std::size_t>(a)], r) = detail::clipped_normal(rng);

    std::vector<double> importance(concept_spec.drift.set1.size());
    for (auto& v : importance) v = detail::clipped_normal(rng);
    const ActivityPattern pattern = drift_activity(concept_spec.drift, K, rng);
    for (Index k = 0; k < K; ++k)
      for (const ActiveWord& w : pattern[static_cast<std::size_t>(k)])
        truth.B[static_cast<std::size_t>(k)](w.word, r) = importance[static_cast<std::size_t>(w.position)] * w.weight;

    const auto strength = concept_spec.strength.sequence(K);
    for (Index k = 0; k < K; ++k) truth.D[static_cast<std::size_t>(k)](r) = strength[static_cast<std::size_t>(k)];
  }

  std::vector<Matrix> clean(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) clean[static_cast<std::size_t>(k)] = reconstruct_slice(truth, k);

  Dataset ds;
  ds.clean = TensorSlices(clean);
  ds.truth = std::move(truth);
  if (config.eta == 0.0) {
    ds.noisy = ds.clean;
    return ds;
  }
  std::mt19937_64 noise_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Matrix> theta(static_cast<std::size_t>(K), Matrix(I, J));
  double theta_sq = 0.0;
  for (auto& t : theta) {
    for (Index j = 0; j < J; ++j)
      for (Index i = 0; i < I; ++i) t(i, j) = gauss(noise_rng);
    theta_sq += t.squaredNorm();
  }
  const double scale = config.eta * ds.clean.norm() / std::sqrt(theta_sq);
  std::vector<Matrix> noisy(static_cast<std::size_t>(K));
  for (std::size_t k = 0; k < noisy.size(); ++k) noisy[k] = clean[k] + scale * theta[k];
  ds.noisy = TensorSlices(std::move(noisy));
  return ds;
}

// ---------------------------------------------------------------------------
// Presets

/// Tensor dimensions and set sizes shared by the presets.
struct PresetShape {
  Index I = 60;
  Index J = 40;
  Index K = 15;
  Index R = 3;
  Index word_set_size = 8;
  Index author_set_size = 20;

  static PresetShape desk() { return {}; }
  static PresetShape paper() { return {150, 100, 20, 3, 20, 50}; }
};

namespace detail {

// Salts keep the preset's structural draws independent of generate()'s.
inline constexpr std::uint64_t kPresetSalt = 0x5bd1e9955bd1e995ULL;
inline constexpr std::uint64_t kOverlapSalt = 0xc2b2ae3d27d4eb4fULL;

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline StrengthProfile easy_strength(StrengthKind kind, std::mt19937_64& rng) {
  StrengthProfile s;
  s.kind = kind;
  s.base = uniform_real(rng, 0.5, 1.0);
  s.amplitude = uniform_real(rng, 1.5, 3.0);
  s.period = static_cast<double>(uniform_int(rng, 4, 8));
  return s;
}

}  // namespace detail

/// Three concepts with distinct sudden/gradual/reoccurring drifts and
/// distinct constant/periodic/decreasing strengths, all at least 0.5.
///
/// Concepts use disjoint words; set2 replaces the second half of set1 and
/// reuses its importances, so the truth has constant B_k^T B_k.
inline SyntheticConfig easy_preset(std::uint64_t seed, const PresetShape& shape = PresetShape::desk(),
                                   double eta = 0.0) {
  std::mt19937_64 rng(seed ^ detail::kPresetSalt);
  const Index size = shape.word_set_size;
  const Index swapped = size / 2;
  if (shape.R * (size + swapped) > shape.J)
    throw std::invalid_argument("easy_preset: J too small for disjoint concept word sets");
  if (shape.K < 4) throw std::invalid_argument("easy_preset: K must be >= 4");

  std::vector<Index> words(static_cast<std::size_t>(shape.J));
  std::iota(words.begin(), words.end(), Index{0});
  std::shuffle(words.begin(), words.end(), rng);

  std::vector<DriftKind> drifts{DriftKind::sudden, DriftKind::gradual, DriftKind::reoccurring};
  std::vector<StrengthKind> strengths{StrengthKind::constant, StrengthKind::periodic, StrengthKind::decreasing};
  std::shuffle(drifts.begin(), drifts.end(), rng);
  std::shuffle(strengths.begin(), strengths.end(), rng);

  SyntheticConfig cfg;
  cfg.I = shape.I;
  cfg.J = shape.J;
  cfg.K = shape.K;
  cfg.eta = eta;
  cfg.seed = seed;
  std::size_t next_word = 0;
  const int t_hi = static_cast<int>(shape.K) - 2;
  for (Index r = 0; r < shape.R; ++r) {
    ConceptSpec c;
    c.author_set_size = shape.author_set_size;
    c.drift.kind = drifts[static_cast<std::size_t>(r) % drifts.size()];
    c.drift.t0 = detail::uniform_int(rng, 2, t_hi);
    c.drift.tp = detail::uniform_int(rng, 2, t_hi);
    for (Index w = 0; w < size; ++w) c.drift.set1.push_back(words[next_word++]);
    c.drift.set2 = c.drift.set1;
    for (Index w = size - swapped; w < size; ++w) c.drift.set2[static_cast<std::size_t>(w)] = words[next_word++];
    c.strength = detail::easy_strength(strengths[static_cast<std::size_t>(r) % strengths.size()], rng);
    cfg.concepts.push_back(std::move(c));
  }
  return cfg;
}

/// Easy-case data where `n_low_concepts` concepts drop to strength 0.01 for
/// a contiguous window of 4-6 slices.
inline SyntheticConfig almostzero_preset(std::uint64_t seed, int n_low_concepts,
                                         const PresetShape& shape = PresetShape::desk(), double eta = 0.0) {
  if (n_low_concepts < 1 || n_low_concepts > shape.R)
    throw std::invalid_argument("almostzero_preset: n_low_concepts out of range");
  SyntheticConfig cfg = easy_preset(seed, shape, eta);
  std::mt19937_64 rng(seed ^ detail::kPresetSalt ^ 0x1ULL);
  std::vector<std::size_t> order(cfg.concepts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n_low_concepts; ++i) {
    StrengthProfile& s = cfg.concepts[order[static_cast<std::size_t>(i)]].strength;
    s.low_length = detail::uniform_int(rng, 4, 6);
    if (s.low_length + 2 > shape.K) throw std::invalid_argument("almostzero_preset: K too small");
    s.low_start = detail::uniform_int(rng, 1, static_cast<int>(shape.K) - s.low_length - 1);
    s.low_level = 0.01;
  }
  return cfg;
}

/// Turns every concept into an incremental drift whose initial word set
/// shares round(fraction * size) words with every other concept. The shared
/// words are gradually replaced by concept-private words, so the final
/// active sets are pairwise disjoint.
inline SyntheticConfig make_overlapping(SyntheticConfig config, double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw std::invalid_argument("make_overlapping: fraction must lie in [0, 1)");
  if (config.concepts.empty()) throw std::invalid_argument("make_overlapping: no concepts");
  const Index R = config.R();
  const Index size = static_cast<Index>(config.concepts.front().drift.set1.size());
  const Index shared = static_cast<Index>(std::llround(overlap_fraction * static_cast<double>(size)));
  if (shared + R * size > config.J)
    throw std::invalid_argument("make_overlapping: J too small for disjoint final word sets");

  std::mt19937_64 rng(config.seed ^ detail::kOverlapSalt);
  std::vector<Index> words(static_cast<std::size_t>(config.J));
  std::iota(words.begin(), words.end(), Index{0});
  std::shuffle(words.begin(), words.end(), rng);
  std::size_t next_word = 0;
  std::vector<Index> common(words.begin(), words.begin() + shared);
  next_word += static_cast<std::size_t>(shared);

  for (auto& c : config.concepts) {
    DriftSpec d;
    d.kind = DriftKind::incremental;
    if (c.drift.kind == DriftKind::incremental) {
      d.p_new = c.drift.p_new;
      d.steepness = c.drift.steepness;
    }
    d.set1 = common;
    for (Index w = shared; w < size; ++w) d.set1.push_back(words[next_word++]);
    d.set2 = d.set1;
    for (Index w = 0; w < shared; ++w) d.set2[static_cast<std::size_t>(w)] = words[next_word++];
    c.drift = std::move(d);
  }
  config.overlap_fraction = overlap_fraction;
  return config;
}

/// Easy-style strengths with all concepts drifting incrementally out of an
/// initial overlap.
inline SyntheticConfig overlap_preset(std::uint64_t seed, double overlap_fraction,
                                      const PresetShape& shape = PresetShape::desk(), double eta = 0.0) {
  return make_overlapping(easy_preset(seed, shape, eta), overlap_fraction);
}

}  // namespace tparafac2::synth

#endif  // TPARAFAC2_SYNTHGEN_HPP_
