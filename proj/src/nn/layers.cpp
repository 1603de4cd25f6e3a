#include "ded/nn/layers.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace ded::nn {

Var ParamStore::add(std::string name, Matrix init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  Var v = leaf(std::move(init));
  params_.push_back({std::move(name), v});
  return v;
}

Var ParamStore::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw std::out_of_range("no parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.mutable_grad().resize(0, 0);
}

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               std::mt19937_64& rng)
    : weight(store.add(name + ".w", xavier_uniform(in, out, rng))),
      bias(store.add(name + ".b", Matrix::Zero(1, out))) {}

Var Linear::operator()(const Var& x) const { return add_row(matmul(x, weight), bias); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim)
    : gain(store.add(name + ".gain", Matrix::Ones(1, dim))),
      bias(store.add(name + ".bias", Matrix::Zero(1, dim))) {}

FeedForward::FeedForward(ParamStore& store, const std::string& name, Eigen::Index dim,
                         Eigen::Index width, std::mt19937_64& rng)
    : hidden(store, name + ".hidden", dim, width, rng), out(store, name + ".out", width, dim, rng) {}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name,
                                       Eigen::Index d_model, int heads_, std::mt19937_64& rng)
    : query(store, name + ".q", d_model, d_model, rng),
      key(store, name + ".k", d_model, d_model, rng),
      value(store, name + ".v", d_model, d_model, rng),
      output(store, name + ".o", d_model, d_model, rng),
      heads(heads_) {
  if (heads < 1 || d_model % heads != 0) {
    throw std::invalid_argument("d_model must be divisible by the head count");
  }
}

Var MultiHeadAttention::operator()(const Var& xq, const Var& xkv,
                                   std::span<const Segment> q_segments,
                                   std::span<const Segment> kv_segments) const {
  Var heads_out = segmented_attention(query(xq), key(xkv), value(xkv), q_segments, kv_segments,
                                      heads);
  return output(heads_out);
}

EncoderBlock::EncoderBlock(ParamStore& store, const std::string& name, Eigen::Index d_model,
                           int heads, std::mt19937_64& rng)
    : attention(store, name + ".attn", d_model, heads, rng),
      norm1(store, name + ".ln1", d_model),
      ff(store, name + ".ff", d_model, 2 * d_model, rng),
      norm2(store, name + ".ln2", d_model) {}

Var EncoderBlock::operator()(const Var& x, std::span<const Segment> segments) const {
  Var h = norm1(add(x, attention(x, x, segments, segments)));
  return norm2(add(h, ff(h)));
}

CrossBlock::CrossBlock(ParamStore& store, const std::string& name, Eigen::Index d_model,
                       int heads, std::mt19937_64& rng)
    : attention(store, name + ".attn", d_model, heads, rng),
      norm1(store, name + ".ln1", d_model),
      ff(store, name + ".ff", d_model, 2 * d_model, rng),
      norm2(store, name + ".ln2", d_model) {}

Var CrossBlock::operator()(const Var& queries, const Var& memory,
                           std::span<const Segment> q_segments,
                           std::span<const Segment> memory_segments) const {
  Var h = norm1(add(queries, attention(queries, memory, q_segments, memory_segments)));
  return norm2(add(h, ff(h)));
}

Lstm::Lstm(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
           std::mt19937_64& rng) {
  Matrix wx = xavier_uniform(in, 4 * hidden, rng);
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();  // forget gate starts open
  input.weight = store.add(name + ".wx", std::move(wx));
  input.bias = store.add(name + ".b", std::move(b));
  recurrent = store.add(name + ".wh", xavier_uniform(hidden, 4 * hidden, rng));
}

Var Lstm::operator()(const Var& inputs, Eigen::Index steps, Eigen::Index batch,
                     const std::vector<bool>& mask) const {
  if (inputs.rows() != steps * batch) throw std::invalid_argument("lstm input row count");
  const Eigen::Index hd = hidden_dim();
  const bool masked = !mask.empty();
  if (masked && static_cast<Eigen::Index>(mask.size()) != steps * batch) {
    throw std::invalid_argument("lstm mask size");
  }
  Var projected = input(inputs);
  Var h = constant(Matrix::Zero(batch, hd));
  Var c = constant(Matrix::Zero(batch, hd));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Var gates = add(slice_rows(projected, t * batch, batch), matmul(h, recurrent));
    Var i = sigmoid(slice_cols(gates, 0, hd));
    Var f = sigmoid(slice_cols(gates, hd, hd));
    Var g = tanh(slice_cols(gates, 2 * hd, hd));
    Var o = sigmoid(slice_cols(gates, 3 * hd, hd));
    Var c_new = add(mul(f, c), mul(i, g));
    Var h_new = mul(o, tanh(c_new));
    bool all_present = true;
    Matrix m(batch, 1);
    if (masked) {
      for (Eigen::Index b = 0; b < batch; ++b) {
        const bool on = mask[static_cast<std::size_t>(t * batch + b)];
        m(b, 0) = on ? 1.0 : 0.0;
        all_present = all_present && on;
      }
    }
    if (all_present) {
      c = c_new;
      h = h_new;
    } else {
      Var mv = constant(std::move(m));
      c = add(c, mul_col(sub(c_new, c), mv));
      h = add(h, mul_col(sub(h_new, h), mv));
    }
  }
  return h;
}

}  // namespace ded::nn
