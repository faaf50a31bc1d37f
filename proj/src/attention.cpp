#include "relaxflow/attention.hpp"

#include "relaxflow/relaxation.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace relaxflow {

TokenSequence::TokenSequence(Matrix tokens, TokenOrigin origin)
    : TokenSequence(std::move(tokens), std::vector<TokenOrigin>{}) {
  origins_.assign(static_cast<std::size_t>(tokens_.rows()), origin);
}

TokenSequence::TokenSequence(Matrix tokens, std::vector<TokenOrigin> origins)
    : tokens_(std::move(tokens)), origins_(std::move(origins)) {
  if (tokens_.rows() == 0) throw std::invalid_argument("TokenSequence: empty sequence");
  if (tokens_.cols() == 0) throw std::invalid_argument("TokenSequence: zero token dimension");
  if (!origins_.empty() && origins_.size() != static_cast<std::size_t>(tokens_.rows()))
    throw std::invalid_argument("TokenSequence: origin count mismatch");
  if (!tokens_.allFinite()) throw std::invalid_argument("TokenSequence: non-finite token");
}

std::vector<std::size_t> TokenSequence::segments() const {
  std::vector<std::size_t> bounds{0};
  for (std::size_t i = 1; i < origins_.size(); ++i)
    if (!(origins_[i] == origins_[i - 1])) bounds.push_back(i);
  bounds.push_back(static_cast<std::size_t>(size()));
  return bounds;
}

Matrix attention_logits(const TokenSequence& queries, const TokenSequence& keys) {
  if (queries.dim() != keys.dim()) throw std::invalid_argument("attention: query/key dimension mismatch");
  return (queries.tokens() * keys.tokens().transpose()) / std::sqrt(static_cast<double>(queries.dim()));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - top).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

namespace {

TokenSequence attend(const TokenSequence& queries, const Matrix& logits, const TokenSequence& values) {
  return TokenSequence(softmax_rows(logits) * values.tokens(), queries.origins());
}

void check_kv(const TokenSequence& keys, const TokenSequence& values) {
  if (keys.size() != values.size()) throw std::invalid_argument("attention: key/value count mismatch");
}

void blur_axis(Matrix& m, const GaussianKernel1D& kernel, bool along_rows,
               std::span<const std::size_t> segments) {
  // along_rows: convolve down each column (query axis). Eigen is column-major.
  const Eigen::Index n = along_rows ? m.rows() : m.cols();
  const Eigen::Index lines = along_rows ? m.cols() : m.rows();
  const std::size_t stride = along_rows ? 1 : static_cast<std::size_t>(m.rows());
  const std::size_t line_step = along_rows ? static_cast<std::size_t>(m.rows()) : 1;

  std::vector<std::size_t> bounds(segments.begin(), segments.end());
  if (bounds.empty()) bounds = {0, static_cast<std::size_t>(n)};
  if (bounds.front() != 0 || bounds.back() != static_cast<std::size_t>(n))
    throw std::invalid_argument("blur_logits: segments must span the axis");

  Matrix out(m.rows(), m.cols());
  for (Eigen::Index line = 0; line < lines; ++line) {
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
      const std::size_t offset = static_cast<std::size_t>(line) * line_step + bounds[s] * stride;
      convolve_renormalized(m.data() + offset, out.data() + offset, bounds[s + 1] - bounds[s], stride, kernel);
    }
  }
  m.swap(out);
}

}  // namespace

TokenSequence cross_attention(const TokenSequence& queries, const TokenSequence& keys,
                              const TokenSequence& values) {
  check_kv(keys, values);
  return attend(queries, attention_logits(queries, keys), values);
}

Matrix blur_logits(const Matrix& logits, double sigma, std::span<const std::size_t> query_segments,
                   std::span<const std::size_t> key_segments) {
  if (sigma < 0.0) throw std::invalid_argument("blur_logits: sigma must be >= 0");
  if (sigma == 0.0) return logits;
  const GaussianKernel1D kernel = make_kernel(sigma);
  Matrix out = logits;
  blur_axis(out, kernel, true, query_segments);
  blur_axis(out, kernel, false, key_segments);
  return out;
}

TokenSequence relaxed_attention(const TokenSequence& queries, const TokenSequence& keys,
                                const TokenSequence& values, double sigma) {
  check_kv(keys, values);
  const Matrix logits = attention_logits(queries, keys);
  if (sigma == 0.0) return attend(queries, logits, values);
  const auto q_seg = queries.segments();
  const auto k_seg = keys.segments();
  return attend(queries, blur_logits(logits, sigma, q_seg, k_seg), values);
}

TokenSequence concat_priors(std::span<const TokenSequence> priors) {
  if (priors.empty()) throw std::invalid_argument("concat_priors: empty prior list");
  const Eigen::Index dim = priors.front().dim();
  Eigen::Index total = 0;
  for (const auto& p : priors) {
    if (p.dim() != dim) throw std::invalid_argument("concat_priors: token dimension mismatch");
    total += p.size();
  }
  Matrix tokens(total, dim);
  std::vector<TokenOrigin> origins;
  origins.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (const auto& p : priors) {
    tokens.middleRows(row, p.size()) = p.tokens();
    origins.insert(origins.end(), p.origins().begin(), p.origins().end());
    row += p.size();
  }
  return TokenSequence(std::move(tokens), std::move(origins));
}

TokenSequence read_tokens_csv(const std::filesystem::path& path, TokenOrigin origin) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("read_tokens_csv: ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("read_tokens_csv: no tokens in " + path.string());
  Matrix tokens(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      tokens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return TokenSequence(std::move(tokens), origin);
}

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace

ToyVelocityHead::ToyVelocityHead(std::size_t state_dim, std::size_t cond_dim, std::uint64_t seed,
                                 std::size_t model_dim, std::size_t query_count)
    : state_dim_(state_dim), cond_dim_(cond_dim), model_dim_(model_dim), query_count_(query_count) {
  if (state_dim_ == 0 || cond_dim_ == 0 || model_dim_ == 0 || query_count_ == 0)
    throw std::invalid_argument("ToyVelocityHead: dimensions must be positive");
  std::mt19937_64 rng(seed);
  w_q_ = random_matrix(rng, model_dim_, state_dim_ + 3);
  w_k_ = random_matrix(rng, model_dim_, cond_dim_);
  w_v_ = random_matrix(rng, model_dim_, cond_dim_);
  w_o_ = random_matrix(rng, state_dim_, model_dim_);
}

TokenSequence ToyVelocityHead::queries(const Vector& x, double t) const {
  if (static_cast<std::size_t>(x.size()) != state_dim_)
    throw std::invalid_argument("ToyVelocityHead: state dimension mismatch");
  Matrix features(static_cast<Eigen::Index>(query_count_), static_cast<Eigen::Index>(state_dim_ + 3));
  const double w = 1.0 / static_cast<double>(query_count_);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    features.row(i).head(x.size()) = x.transpose();
    features(i, x.size()) = t;
    features(i, x.size() + 1) = std::sin(static_cast<double>(i) * w);
    features(i, x.size() + 2) = std::cos(static_cast<double>(i) * w);
  }
  return TokenSequence(features * w_q_.transpose(), TokenOrigin::observation());
}

TokenSequence ToyVelocityHead::keys(const TokenSequence& cond) const {
  if (static_cast<std::size_t>(cond.dim()) != cond_dim_)
    throw std::invalid_argument("ToyVelocityHead: conditioning dimension mismatch");
  return TokenSequence(cond.tokens() * w_k_.transpose(), cond.origins());
}

TokenSequence ToyVelocityHead::values(const TokenSequence& cond) const {
  if (static_cast<std::size_t>(cond.dim()) != cond_dim_)
    throw std::invalid_argument("ToyVelocityHead: conditioning dimension mismatch");
  return TokenSequence(cond.tokens() * w_v_.transpose(), cond.origins());
}

Matrix ToyVelocityHead::logits(const Vector& x, double t, const TokenSequence& cond) const {
  return attention_logits(queries(x, t), keys(cond));
}

Vector ToyVelocityHead::velocity_from_logits(const TokenSequence& cond, const Matrix& logits) const {
  const Matrix attended = softmax_rows(logits) * values(cond).tokens();
  const Vector pooled = attended.colwise().mean().transpose();
  return w_o_ * pooled;
}

Vector ToyVelocityHead::velocity(const Vector& x, double t, const TokenSequence& cond, double sigma) const {
  const Matrix l = logits(x, t, cond);
  if (sigma == 0.0) return velocity_from_logits(cond, l);
  const auto k_seg = cond.segments();
  return velocity_from_logits(cond, blur_logits(l, sigma, {}, k_seg));
}

}  // namespace relaxflow
