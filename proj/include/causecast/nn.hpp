#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "causecast/ops.hpp"
#include "causecast/random.hpp"
#include "causecast/tensor.hpp"

namespace causecast::nn {

// Ordered registry of named trainable arrays.
class ParamStore {
 public:
  Tensor create(const std::string& name, Shape shape, std::vector<double> init);
  Tensor create_xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, Shape shape, Rng& rng);
  Tensor create_constant(const std::string& name, Shape shape, double value);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  Tensor* find(const std::string& name);
  std::size_t parameter_count() const;

  void zero_grad();
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Per-call forward settings. Dropout draws from `rng` only when `training`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
  double dropout = 0.0;

  Tensor maybe_dropout(const Tensor& x) const;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  Tensor weight_;  // [in, out]
  Tensor bias_;    // [out]
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor gamma_;
  Tensor beta_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, std::size_t width, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;

 private:
  Linear up_;
  Linear down_;
};

// Projected keys/values in head layout [B, H, S, d_head].
struct KeyValue {
  Tensor keys;
  Tensor values;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t query_width, std::size_t kv_width,
                     std::size_t model_width, std::size_t heads, Rng& rng);

  // query: [B, T, query_width]; key_value: [B, S, kv_width] -> [B, T, model_width]
  Tensor operator()(const Tensor& query, const Tensor& key_value, const ops::AttentionMask& mask) const;

  KeyValue project_kv(const Tensor& key_value) const;
  Tensor attend(const Tensor& query, const KeyValue& kv, const ops::AttentionMask& mask) const;

  std::size_t heads() const { return heads_; }
  std::size_t model_width() const { return width_; }

 private:
  Tensor split_heads(const Tensor& x) const;

  Linear q_proj_;
  Linear k_proj_;
  Linear v_proj_;
  Linear out_proj_;
  std::size_t width_ = 0;
  std::size_t heads_ = 1;
};

// Post-norm Transformer encoder layer: self-attention then position-wise FFN.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParamStore& store, const std::string& name, std::size_t width, std::size_t ffn, std::size_t heads,
               Rng& rng);
  Tensor operator()(const Tensor& x, const ops::AttentionMask& mask, const ForwardContext& ctx) const;

 private:
  MultiHeadAttention attention_;
  LayerNorm norm1_;
  FeedForward ffn_;
  LayerNorm norm2_;
};

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(ParamStore& store, const std::string& name, std::size_t layers, std::size_t width, std::size_t ffn,
               std::size_t heads, Rng& rng);
  Tensor operator()(Tensor x, const ops::AttentionMask& mask, const ForwardContext& ctx) const;

 private:
  std::vector<EncoderLayer> layers_;
};

// Fixed sinusoidal encoding [positions, width]; odd widths drop the final cosine.
Tensor sinusoidal_positions(std::size_t positions, std::size_t width, std::size_t offset = 0);

}  // namespace causecast::nn
