#pragma once

// Single-head cross-attention with Gaussian blurring of the logits before the
// softmax, multi-prior token concatenation, and a small seeded velocity head
// built on top of it.

#include "relaxflow/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace relaxflow {

struct TokenOrigin {
  enum class Kind { observation, prior };
  Kind kind = Kind::observation;
  int prior_index = 0;

  static TokenOrigin observation() { return {Kind::observation, 0}; }
  static TokenOrigin prior(int n) { return {Kind::prior, n}; }

  friend bool operator==(const TokenOrigin&, const TokenOrigin&) = default;
};

/// Tokens are the rows of a (count x dim) matrix; each carries an origin tag.
class TokenSequence {
 public:
  TokenSequence() = default;
  TokenSequence(Matrix tokens, TokenOrigin origin);
  TokenSequence(Matrix tokens, std::vector<TokenOrigin> origins);

  Eigen::Index size() const noexcept { return tokens_.rows(); }
  Eigen::Index dim() const noexcept { return tokens_.cols(); }
  const Matrix& tokens() const noexcept { return tokens_; }
  const std::vector<TokenOrigin>& origins() const noexcept { return origins_; }

  /// Half-open boundaries [b0=0, b1, ..., bk=size) of maximal runs with the
  /// same origin tag.
  std::vector<std::size_t> segments() const;

 private:
  Matrix tokens_;
  std::vector<TokenOrigin> origins_;
};

/// L[i][j] = q_i . k_j / sqrt(d).
Matrix attention_logits(const TokenSequence& queries, const TokenSequence& keys);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// softmax(L) V. Output tokens carry the query origins.
TokenSequence cross_attention(const TokenSequence& queries, const TokenSequence& keys,
                              const TokenSequence& values);

/// 1D Gaussian convolution along the query index, then along the key index,
/// with boundary-renormalized taps. Optional segment boundaries restrict each
/// axis's convolution to runs (e.g. one run per concatenated prior). sigma == 0
/// returns the input unchanged.
Matrix blur_logits(const Matrix& logits, double sigma, std::span<const std::size_t> query_segments = {},
                   std::span<const std::size_t> key_segments = {});

/// Cross-attention with blur_logits applied before the softmax. The key axis
/// is blurred within each origin run of `keys`.
TokenSequence relaxed_attention(const TokenSequence& queries, const TokenSequence& keys,
                                const TokenSequence& values, double sigma);

/// Concatenation in order; origin tags preserved per token.
TokenSequence concat_priors(std::span<const TokenSequence> priors);

/// One token per CSV row (no header); every row must have the same width.
TokenSequence read_tokens_csv(const std::filesystem::path& path, TokenOrigin origin);

/// Seeded single-layer head mapping (state, time, conditioning tokens) to a
/// velocity.
///
/// Query i is W_q [x; t; sin(i w); cos(i w)], keys/values are W_k c_j and
/// W_v c_j, and the velocity is W_o applied to the query-averaged attention
/// output. All matrices are drawn N(0, 1/fan_in) from the seed.
class ToyVelocityHead {
 public:
  ToyVelocityHead(std::size_t state_dim, std::size_t cond_dim, std::uint64_t seed,
                  std::size_t model_dim = 16, std::size_t query_count = 8);

  std::size_t state_dim() const noexcept { return state_dim_; }
  std::size_t cond_dim() const noexcept { return cond_dim_; }
  std::size_t model_dim() const noexcept { return model_dim_; }

  TokenSequence queries(const Vector& x, double t) const;
  TokenSequence keys(const TokenSequence& cond) const;
  TokenSequence values(const TokenSequence& cond) const;

  Matrix logits(const Vector& x, double t, const TokenSequence& cond) const;

  /// Velocity for an explicit logit matrix (used for sensitivity analysis).
  Vector velocity_from_logits(const TokenSequence& cond, const Matrix& logits) const;

  Vector velocity(const Vector& x, double t, const TokenSequence& cond, double sigma) const;

 private:
  std::size_t state_dim_, cond_dim_, model_dim_, query_count_;
  Matrix w_q_, w_k_, w_v_, w_o_;
};

}  // namespace relaxflow
