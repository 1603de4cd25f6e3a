#pragma once

#include "ded/nn/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ded::nn {

struct NamedParam {
  std::string name;
  Var var;
};

// Owns every trainable tensor of a model in registration order. Layers keep
// handles to the same nodes, so updating a value here updates the layer.
class ParamStore {
 public:
  Var add(std::string name, Matrix init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<NamedParam>& items() { return params_; }
  const std::vector<NamedParam>& items() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<NamedParam> params_;
};

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         std::mt19937_64& rng);
  Var operator()(const Var& x) const;
  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }
};

struct LayerNorm {
  Var gain;
  Var bias;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim);
  Var operator()(const Var& x) const { return layer_norm(x, gain, bias); }
};

struct FeedForward {
  Linear hidden;
  Linear out;

  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, Eigen::Index dim, Eigen::Index width,
              std::mt19937_64& rng);
  Var operator()(const Var& x) const { return out(silu(hidden(x))); }
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index d_model, int heads,
                     std::mt19937_64& rng);
  Var operator()(const Var& xq, const Var& xkv, std::span<const Segment> q_segments,
                 std::span<const Segment> kv_segments) const;
};

// Post-norm transformer encoder block: self-attention then feed-forward,
// each wrapped in a residual connection and layer normalization.
struct EncoderBlock {
  MultiHeadAttention attention;
  LayerNorm norm1;
  FeedForward ff;
  LayerNorm norm2;

  EncoderBlock() = default;
  EncoderBlock(ParamStore& store, const std::string& name, Eigen::Index d_model, int heads,
               std::mt19937_64& rng);
  Var operator()(const Var& x, std::span<const Segment> segments) const;
};

// Same layout, but queries attend to a separate memory.
struct CrossBlock {
  MultiHeadAttention attention;
  LayerNorm norm1;
  FeedForward ff;
  LayerNorm norm2;

  CrossBlock() = default;
  CrossBlock(ParamStore& store, const std::string& name, Eigen::Index d_model, int heads,
             std::mt19937_64& rng);
  Var operator()(const Var& queries, const Var& memory, std::span<const Segment> q_segments,
                 std::span<const Segment> memory_segments) const;
};

// Single-layer LSTM over a time-major batch. `inputs` holds steps*batch rows
// (all agents for step 0, then step 1, ...). `mask`, when non-empty, has one
// entry per row; a false entry carries the previous state through that step.
struct Lstm {
  Linear input;   // in -> 4H (gates i, f, g, o)
  Var recurrent;  // H x 4H

  Lstm() = default;
  Lstm(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
       std::mt19937_64& rng);
  Eigen::Index hidden_dim() const { return recurrent.rows(); }
  Var operator()(const Var& inputs, Eigen::Index steps, Eigen::Index batch,
                 const std::vector<bool>& mask = {}) const;
};

}  // namespace ded::nn
