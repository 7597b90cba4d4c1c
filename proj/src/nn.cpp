#include "causecast/nn.hpp"

#include <cmath>

#include "causecast/error.hpp"

namespace causecast::nn {

Tensor ParamStore::create(const std::string& name, Shape shape, std::vector<double> init) {
  if (find(name)) fail(ErrorCategory::config, "duplicate parameter name: " + name);
  entries_.emplace_back(name, Tensor(std::move(shape), std::move(init), true));
  return entries_.back().second;
}

Tensor ParamStore::create_xavier(const std::string& name, std::size_t fan_in, std::size_t fan_out, Shape shape,
                                 Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> init(shape_numel(shape));
  for (double& v : init) v = rng.uniform(-limit, limit);
  return create(name, std::move(shape), std::move(init));
}

Tensor ParamStore::create_constant(const std::string& name, Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return create(name, std::move(shape), std::vector<double>(n, value));
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [n, t] : entries_) total += t.numel();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : entries_) t.zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void ParamStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) fail(ErrorCategory::dimension, "parameter snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = entries_[i].second.values_mut();
    if (dst.size() != values[i].size()) fail(ErrorCategory::dimension, "parameter snapshot shape mismatch");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Tensor ForwardContext::maybe_dropout(const Tensor& x) const {
  if (!training || dropout <= 0.0 || rng == nullptr) return x;
  return ops::dropout(x, dropout, *rng);
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : in_(in), out_(out) {
  weight_ = store.create_xavier(name + ".weight", in, out, {in, out}, rng);
  bias_ = store.create_constant(name + ".bias", {out}, 0.0);
}

Tensor Linear::operator()(const Tensor& x) const { return ops::add(ops::matmul(x, weight_), bias_); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t width) {
  gamma_ = store.create_constant(name + ".gamma", {width}, 1.0);
  beta_ = store.create_constant(name + ".beta", {width}, 0.0);
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gamma_, beta_); }

FeedForward::FeedForward(ParamStore& store, const std::string& name, std::size_t width, std::size_t hidden, Rng& rng)
    : up_(store, name + ".up", width, hidden, rng), down_(store, name + ".down", hidden, width, rng) {}

Tensor FeedForward::operator()(const Tensor& x, const ForwardContext& ctx) const {
  return down_(ctx.maybe_dropout(ops::gelu(up_(x))));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t query_width,
                                       std::size_t kv_width, std::size_t model_width, std::size_t heads, Rng& rng)
    : width_(model_width), heads_(heads) {
  if (heads == 0 || model_width % heads != 0) {
    fail(ErrorCategory::config, name + ": model width " + std::to_string(model_width) + " not divisible by " +
                                    std::to_string(heads) + " heads");
  }
  q_proj_ = Linear(store, name + ".q", query_width, model_width, rng);
  k_proj_ = Linear(store, name + ".k", kv_width, model_width, rng);
  v_proj_ = Linear(store, name + ".v", kv_width, model_width, rng);
  out_proj_ = Linear(store, name + ".out", model_width, model_width, rng);
}

Tensor MultiHeadAttention::split_heads(const Tensor& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t s = x.dim(1);
  return ops::permute(ops::reshape(x, {b, s, heads_, width_ / heads_}), {0, 2, 1, 3});
}

KeyValue MultiHeadAttention::project_kv(const Tensor& key_value) const {
  return {split_heads(k_proj_(key_value)), split_heads(v_proj_(key_value))};
}

Tensor MultiHeadAttention::attend(const Tensor& query, const KeyValue& kv, const ops::AttentionMask& mask) const {
  const std::size_t b = query.dim(0);
  const std::size_t t = query.dim(1);
  const Tensor q = split_heads(q_proj_(query));
  const double scale = 1.0 / std::sqrt(static_cast<double>(width_ / heads_));
  const Tensor scores = ops::scale(ops::matmul(q, ops::transpose_last2(kv.keys)), scale);
  const Tensor weights = ops::masked_softmax_lastdim(scores, mask);
  const Tensor context = ops::matmul(weights, kv.values);  // [B, H, T, dh]
  const Tensor merged = ops::reshape(ops::permute(context, {0, 2, 1, 3}), {b, t, width_});
  return out_proj_(merged);
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& key_value,
                                      const ops::AttentionMask& mask) const {
  return attend(query, project_kv(key_value), mask);
}

EncoderLayer::EncoderLayer(ParamStore& store, const std::string& name, std::size_t width, std::size_t ffn,
                           std::size_t heads, Rng& rng)
    : attention_(store, name + ".attn", width, width, width, heads, rng),
      norm1_(store, name + ".norm1", width),
      ffn_(store, name + ".ffn", width, ffn, rng),
      norm2_(store, name + ".norm2", width) {}

Tensor EncoderLayer::operator()(const Tensor& x, const ops::AttentionMask& mask, const ForwardContext& ctx) const {
  Tensor h = norm1_(ops::add(x, ctx.maybe_dropout(attention_(x, x, mask))));
  return norm2_(ops::add(h, ctx.maybe_dropout(ffn_(h, ctx))));
}

EncoderStack::EncoderStack(ParamStore& store, const std::string& name, std::size_t layers, std::size_t width,
                           std::size_t ffn, std::size_t heads, Rng& rng) {
  for (std::size_t i = 0; i < layers; ++i)
    layers_.emplace_back(store, name + ".layer" + std::to_string(i), width, ffn, heads, rng);
}

Tensor EncoderStack::operator()(Tensor x, const ops::AttentionMask& mask, const ForwardContext& ctx) const {
  for (const auto& layer : layers_) x = layer(x, mask, ctx);
  return x;
}

Tensor sinusoidal_positions(std::size_t positions, std::size_t width, std::size_t offset) {
  std::vector<double> pe(positions * width, 0.0);
  for (std::size_t p = 0; p < positions; ++p) {
    const double pos = static_cast<double>(p + offset);
    for (std::size_t i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(width));
      pe[p * width + i] = std::sin(pos * freq);
      if (i + 1 < width) pe[p * width + i + 1] = std::cos(pos * freq);
    }
  }
  return Tensor({positions, width}, std::move(pe));
}

}  // namespace causecast::nn
