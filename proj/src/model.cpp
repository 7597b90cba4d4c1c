#include "causecast/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "causecast/dataset.hpp"
#include "causecast/error.hpp"

namespace causecast {

std::string_view encoder_name(EncoderKind k) { return k == EncoderKind::dense ? "dense" : "triplet"; }

std::string_view decoder_name(DecoderKind k) {
  switch (k) {
    case DecoderKind::dms: return "dms";
    case DecoderKind::ims: return "ims";
    case DecoderKind::linear: return "linear";
    case DecoderKind::dlinear: return "dlinear";
  }
  return "?";
}

EncoderKind parse_encoder(std::string_view name) {
  if (name == "dense") return EncoderKind::dense;
  if (name == "triplet") return EncoderKind::triplet;
  fail(ErrorCategory::config, "unknown encoder '" + std::string(name) + "'");
}

DecoderKind parse_decoder(std::string_view name) {
  if (name == "dms") return DecoderKind::dms;
  if (name == "ims") return DecoderKind::ims;
  if (name == "linear") return DecoderKind::linear;
  if (name == "dlinear") return DecoderKind::dlinear;
  fail(ErrorCategory::config, "unknown decoder '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCategory::config, msg);
  };
  need(variables > 0, "model needs at least one variable");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  if ((decoder == DecoderKind::linear || decoder == DecoderKind::dlinear) && encoder != EncoderKind::dense)
    fail(ErrorCategory::config, "linear and dlinear decoders take dense input");
  if (regression_head && encoder != EncoderKind::dense)
    fail(ErrorCategory::config, "regression head needs the dense encoder");
  if (uses_encoder() || regression_head) {
    need(embedding_size > 0 && hidden_size_encoder > 0, "encoder sizes must be positive");
    need(encoder_layers > 0, "encoder_layers must be positive");
    need(attention_heads_encoder > 0 && embedding_size % attention_heads_encoder == 0,
         "embedding_size must be divisible by attention_heads_encoder");
  }
  if (decoder == DecoderKind::dms) {
    need(dms_decoder_layers > 0 && hidden_size_dms_decoder > 0, "dms decoder sizes must be positive");
    need(attention_heads_dms_decoder > 0 && embedding_size % attention_heads_dms_decoder == 0,
         "embedding_size must be divisible by attention_heads_dms_decoder");
  }
  if (decoder == DecoderKind::ims) {
    need(ims_decoder_layers > 0 && ims_ffn_size > 0, "ims decoder sizes must be positive");
    need(attention_heads_ims_decoder > 0 && ims_width() % attention_heads_ims_decoder == 0,
         "ims decoder width must be divisible by attention_heads_ims_decoder");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder", encoder_name(encoder)},
          {"decoder", decoder_name(decoder)},
          {"variables", variables},
          {"statics", statics},
          {"embedding_size", embedding_size},
          {"hidden_size_encoder", hidden_size_encoder},
          {"encoder_layers", encoder_layers},
          {"attention_heads_encoder", attention_heads_encoder},
          {"hidden_size_dms_decoder", hidden_size_dms_decoder},
          {"dms_decoder_layers", dms_decoder_layers},
          {"attention_heads_dms_decoder", attention_heads_dms_decoder},
          {"ims_decoder_layers", ims_decoder_layers},
          {"attention_heads_ims_decoder", attention_heads_ims_decoder},
          {"ims_ffn_size", ims_ffn_size},
          {"hidden_size_ims_decoder", hidden_size_ims_decoder},
          {"regression_head", regression_head},
          {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.encoder = parse_encoder(j.at("encoder").get<std::string>());
    c.decoder = parse_decoder(j.at("decoder").get<std::string>());
    c.variables = j.at("variables").get<std::size_t>();
    c.statics = j.at("statics").get<std::size_t>();
    c.embedding_size = j.at("embedding_size").get<std::size_t>();
    c.hidden_size_encoder = j.at("hidden_size_encoder").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.attention_heads_encoder = j.at("attention_heads_encoder").get<std::size_t>();
    c.hidden_size_dms_decoder = j.at("hidden_size_dms_decoder").get<std::size_t>();
    c.dms_decoder_layers = j.at("dms_decoder_layers").get<std::size_t>();
    c.attention_heads_dms_decoder = j.at("attention_heads_dms_decoder").get<std::size_t>();
    c.ims_decoder_layers = j.at("ims_decoder_layers").get<std::size_t>();
    c.attention_heads_ims_decoder = j.at("attention_heads_ims_decoder").get<std::size_t>();
    c.ims_ffn_size = j.at("ims_ffn_size").get<std::size_t>();
    c.hidden_size_ims_decoder = j.value("hidden_size_ims_decoder", std::size_t{0});
    c.regression_head = j.at("regression_head").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::data, std::string("model config: ") + e.what());
  }
}

Batch make_batch(const std::vector<const WindowPair*>& windows, std::size_t variables, std::size_t statics) {
  if (windows.empty()) fail(ErrorCategory::empty_input, "empty batch");
  const std::size_t b = windows.size();
  const std::size_t f = variables;
  const std::size_t in_width = 2 * f + statics;
  Batch out;
  out.size = b;
  out.variables = f;
  out.statics = statics;
  std::vector<double> dense(b * kObservationHours * in_width, 0.0);
  std::vector<double> values(b * kObservationHours * f, 0.0);
  std::vector<double> target(b * kHorizon * f, 0.0);
  std::vector<double> target_mask(b * kHorizon * f, 0.0);
  out.triplet_lengths.resize(b);

  for (std::size_t i = 0; i < b; ++i) {
    const WindowPair& w = *windows[i];
    const DenseGrid& g = w.observation_grid;
    if (g.rows != kObservationHours || w.target.rows != kHorizon)
      fail(ErrorCategory::window, "window for " + w.patient_id + " has " + std::to_string(g.rows) + "+" +
                                      std::to_string(w.target.rows) + " hours, expected 24+24");
    if (g.cols != f || w.target.cols != f)
      fail(ErrorCategory::dimension, "window for " + w.patient_id + " has " + std::to_string(g.cols) +
                                         " variables, model expects " + std::to_string(f));
    if (g.statics.size() != statics)
      fail(ErrorCategory::dimension, "window for " + w.patient_id + " has " + std::to_string(g.statics.size()) +
                                         " statics, model expects " + std::to_string(statics));
    for (std::size_t h = 0; h < kObservationHours; ++h) {
      double* row = &dense[(i * kObservationHours + h) * in_width];
      for (std::size_t v = 0; v < f; ++v) {
        const bool seen = g.observed(h, v);
        row[v] = seen ? g.value(h, v) : 0.0;
        row[f + v] = seen ? 1.0 : 0.0;
        values[(i * kObservationHours + h) * f + v] = row[v];
      }
      for (std::size_t s = 0; s < statics; ++s) row[2 * f + s] = g.statics[s];
    }
    for (std::size_t h = 0; h < kHorizon; ++h)
      for (std::size_t v = 0; v < f; ++v) {
        if (!w.target.observed(h, v)) continue;
        target[(i * kHorizon + h) * f + v] = w.target.value(h, v);
        target_mask[(i * kHorizon + h) * f + v] = 1.0;
      }
    std::size_t n = 0;
    for (std::size_t s = 0; s < w.observation.statics.size(); ++s)
      if (!std::isnan(w.observation.statics[s])) ++n;
    for (const Observation& o : w.observation.observations)
      if (o.t >= 0.0 && o.t < static_cast<double>(kObservationHours)) ++n;
    out.triplet_lengths[i] = n;
    out.max_triplets = std::max(out.max_triplets, n);
  }

  const std::size_t l = out.max_triplets;
  out.triplet_time.assign(b * l, 0.0);
  out.triplet_var.assign(b * l, 0);
  out.triplet_value.assign(b * l, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const SparseSeries& s = windows[i]->observation;
    std::size_t k = i * l;
    for (std::size_t j = 0; j < s.statics.size(); ++j) {
      if (std::isnan(s.statics[j])) continue;
      out.triplet_var[k] = f + j;
      out.triplet_value[k] = s.statics[j];
      ++k;
    }
    for (const Observation& o : s.observations) {
      if (o.t < 0.0 || o.t >= static_cast<double>(kObservationHours)) continue;
      out.triplet_time[k] = o.t / static_cast<double>(kObservationHours);
      out.triplet_var[k] = o.variable;
      out.triplet_value[k] = o.value;
      ++k;
    }
  }

  out.dense_input = Tensor({b, kObservationHours, in_width}, std::move(dense));
  out.obs_values = Tensor({b, kObservationHours, f}, std::move(values));
  out.target = Tensor({b, kHorizon, f}, std::move(target));
  out.target_mask = Tensor({b, kHorizon, f}, std::move(target_mask));
  return out;
}

DenseEncoder::DenseEncoder(nn::ParamStore& store, const ModelConfig& c, Rng& rng)
    : input_(store, "encoder.input", 2 * c.variables + c.statics, c.embedding_size, rng),
      stack_(store, "encoder", c.encoder_layers, c.embedding_size, c.hidden_size_encoder, c.attention_heads_encoder,
             rng),
      positions_(nn::sinusoidal_positions(kObservationHours, c.embedding_size)) {}

Memory DenseEncoder::operator()(const Batch& batch, const nn::ForwardContext& ctx) const {
  Tensor x = ops::add(input_(batch.dense_input), positions_);
  x = ctx.maybe_dropout(x);
  return {stack_(x, {}, ctx), {}};
}

TripletEncoder::TripletEncoder(nn::ParamStore& store, const ModelConfig& c, Rng& rng)
    : time_(store, "encoder.time", 1, c.embedding_size, rng),
      value_(store, "encoder.value", 1, c.embedding_size, rng),
      variables_(store.create_xavier("encoder.variables", c.variables + c.statics, c.embedding_size,
                                     {c.variables + c.statics, c.embedding_size}, rng)),
      stack_(store, "encoder", c.encoder_layers, c.embedding_size, c.hidden_size_encoder, c.attention_heads_encoder,
             rng) {}

Memory TripletEncoder::operator()(const Batch& batch, const nn::ForwardContext& ctx) const {
  for (std::size_t i = 0; i < batch.size; ++i)
    if (batch.triplet_lengths[i] == 0) fail(ErrorCategory::empty_input, "window without observations or statics");
  const std::size_t b = batch.size;
  const std::size_t l = batch.max_triplets;
  const Tensor t({b, l, 1}, batch.triplet_time);
  const Tensor v({b, l, 1}, batch.triplet_value);
  Tensor x = ops::add(ops::tanh(time_(t)), ops::tanh(value_(v)));
  x = ops::add(x, ops::embedding_lookup(variables_, batch.triplet_var, {b, l}));
  x = ctx.maybe_dropout(x);
  ops::AttentionMask mask{false, batch.triplet_lengths};
  return {stack_(x, mask, ctx), mask};
}

DmsDecoder::DmsDecoder(nn::ParamStore& store, const ModelConfig& c, Rng& rng) {
  const std::size_t m = c.embedding_size;
  queries_ = store.create_xavier("dms.queries", kHorizon, m, {kHorizon, m}, rng);
  for (std::size_t i = 0; i < c.dms_decoder_layers; ++i) {
    const std::string name = "dms.layer" + std::to_string(i);
    layers_.push_back({nn::MultiHeadAttention(store, name + ".cross", m, m, m, c.attention_heads_dms_decoder, rng),
                       nn::LayerNorm(store, name + ".norm1", m),
                       nn::FeedForward(store, name + ".ffn", m, c.hidden_size_dms_decoder, rng),
                       nn::LayerNorm(store, name + ".norm2", m)});
  }
  head_weight_ = store.create_xavier("dms.head.weight", m, c.variables, {kHorizon, m, c.variables}, rng);
  head_bias_ = store.create_constant("dms.head.bias", {kHorizon, c.variables}, 0.0);
}

Tensor DmsDecoder::operator()(const Memory& memory, const nn::ForwardContext& ctx) const {
  const std::size_t b = memory.states.dim(0);
  Tensor x = ops::expand_leading(queries_, b);
  for (const Layer& layer : layers_) {
    x = layer.norm1(ops::add(x, ctx.maybe_dropout(layer.cross(x, memory.states, memory.mask))));
    x = layer.norm2(ops::add(x, ctx.maybe_dropout(layer.ffn(x, ctx))));
  }
  const Tensor per_step = ops::matmul(ops::permute(x, {1, 0, 2}), head_weight_);  // [24, B, F]
  return ops::add(ops::permute(per_step, {1, 0, 2}), head_bias_);
}

struct ImsDecoder::Cache {
  std::vector<nn::KeyValue> self;
  std::vector<nn::KeyValue> cross;
  ops::AttentionMask memory_mask;
};

ImsDecoder::ImsDecoder(nn::ParamStore& store, const ModelConfig& c, Rng& rng)
    : width_(c.variables), hidden_(c.ims_width()) {
  const std::size_t f = c.variables;
  const std::size_t d = hidden_;
  start_ = store.create_constant("ims.start", {f}, 0.0);
  if (d != f) input_ = nn::Linear(store, "ims.input", f, d, rng);
  for (std::size_t i = 0; i < c.ims_decoder_layers; ++i) {
    const std::string name = "ims.layer" + std::to_string(i);
    layers_.push_back({nn::MultiHeadAttention(store, name + ".self", d, d, d, c.attention_heads_ims_decoder, rng),
                       nn::LayerNorm(store, name + ".norm1", d),
                       nn::MultiHeadAttention(store, name + ".cross", d, c.embedding_size, d,
                                              c.attention_heads_ims_decoder, rng),
                       nn::LayerNorm(store, name + ".norm2", d),
                       nn::FeedForward(store, name + ".ffn", d, c.ims_ffn_size, rng),
                       nn::LayerNorm(store, name + ".norm3", d)});
  }
  output_ = nn::Linear(store, "ims.output", d, f, rng);
  positions_ = nn::sinusoidal_positions(kHorizon, d);
}

Tensor ImsDecoder::step(const Tensor& input, std::size_t t, Cache& cache, const nn::ForwardContext& ctx) const {
  const std::size_t b = input.dim(0);
  Tensor x = ops::add(hidden_ == width_ ? input : input_(input), ops::slice(positions_, 0, t, t + 1));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    nn::KeyValue fresh = layer.self.project_kv(x);
    if (t == 0) {
      cache.self[i] = fresh;
    } else {
      cache.self[i] = {ops::concat({cache.self[i].keys, fresh.keys}, 2),
                       ops::concat({cache.self[i].values, fresh.values}, 2)};
    }
    x = layer.norm1(ops::add(x, ctx.maybe_dropout(layer.self.attend(x, cache.self[i], {}))));
    x = layer.norm2(ops::add(x, ctx.maybe_dropout(layer.cross.attend(x, cache.cross[i], cache.memory_mask))));
    x = layer.norm3(ops::add(x, ctx.maybe_dropout(layer.ffn(x, ctx))));
  }
  return ops::reshape(output_(x), {b, width_});
}

std::vector<Tensor> ImsDecoder::rollout(const Memory& memory, const ImsOptions& options,
                                        const nn::ForwardContext& ctx) const {
  const std::size_t b = memory.states.dim(0);
  const std::size_t f = width_;
  const std::size_t steps = options.steps;
  if (steps == 0 || steps > kHorizon) fail(ErrorCategory::rollout, "rollout length must be in [1, 24]");
  const HistoryPlan* plan = options.history;
  if (plan != nullptr) {
    if (plan->batch != b || plan->steps < steps || plan->teacher.size() != plan->batch * plan->steps)
      fail(ErrorCategory::rollout, "history plan does not match the batch");
    if (options.gold == nullptr && std::any_of(plan->teacher.begin(), plan->teacher.end(), [](auto v) { return v; }))
      fail(ErrorCategory::rollout, "teacher positions need gold targets");
    if (options.gold != nullptr && options.gold->shape() != Shape{b, kHorizon, f})
      fail(ErrorCategory::dimension, "gold targets have shape " + shape_str(options.gold->shape()));
  }

  Tensor keep;
  Tensor fixed;
  if (options.clamp) {
    if (options.clamp->first >= f) fail(ErrorCategory::catalog, "clamped channel out of range");
    std::vector<double> k(f, 1.0);
    std::vector<double> c(f, 0.0);
    k[options.clamp->first] = 0.0;
    c[options.clamp->first] = options.clamp->second;
    keep = Tensor({f}, std::move(k));
    fixed = Tensor({f}, std::move(c));
  }

  Cache cache;
  cache.self.resize(layers_.size());
  cache.memory_mask = memory.mask;
  for (const Layer& layer : layers_) cache.cross.push_back(layer.cross.project_kv(memory.states));

  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor input;
    if (t == 0) {
      input = ops::reshape(ops::expand_leading(start_, b), {b, 1, f});
    } else {
      std::size_t teacher = 0;
      if (plan != nullptr)
        for (std::size_t i = 0; i < b; ++i) teacher += plan->at(i, t) ? 1 : 0;
      const Tensor& prev = outputs.back();
      const Tensor fed = options.backprop_predictions ? prev : prev.detach();
      if (teacher == b) {
        input = ops::slice(*options.gold, 1, t - 1, t);
      } else if (teacher == 0) {
        input = ops::reshape(fed, {b, 1, f});
      } else {
        std::vector<double> gold_weight(b * f, 0.0);
        std::vector<double> own_weight(b * f, 1.0);
        for (std::size_t i = 0; i < b; ++i) {
          if (!plan->at(i, t)) continue;
          std::fill_n(gold_weight.begin() + i * f, f, 1.0);
          std::fill_n(own_weight.begin() + i * f, f, 0.0);
        }
        const Tensor gold_row = ops::reshape(ops::slice(*options.gold, 1, t - 1, t), {b, f});
        const Tensor mixed = ops::add(ops::mul(fed, Tensor({b, f}, std::move(own_weight))),
                                      ops::mul(gold_row, Tensor({b, f}, std::move(gold_weight))));
        input = ops::reshape(mixed, {b, 1, f});
      }
      if (options.clamp) input = ops::add(ops::mul(input, keep), fixed);
    }
    outputs.push_back(step(input, t, cache, ctx));
  }
  return outputs;
}

std::vector<Tensor> ImsDecoder::run_inputs(const Memory& memory, const Tensor& inputs,
                                           const nn::ForwardContext& ctx) const {
  const std::size_t b = memory.states.dim(0);
  if (inputs.rank() != 3 || inputs.dim(0) != b || inputs.dim(2) != width_ || inputs.dim(1) > kHorizon)
    fail(ErrorCategory::dimension, "decoder inputs have shape " + shape_str(inputs.shape()));
  Cache cache;
  cache.self.resize(layers_.size());
  cache.memory_mask = memory.mask;
  for (const Layer& layer : layers_) cache.cross.push_back(layer.cross.project_kv(memory.states));
  std::vector<Tensor> outputs;
  for (std::size_t t = 0; t < inputs.dim(1); ++t) {
    const Tensor input =
        t == 0 ? ops::reshape(ops::expand_leading(start_, b), {b, 1, width_}) : ops::slice(inputs, 1, t, t + 1);
    outputs.push_back(step(input, t, cache, ctx));
  }
  return outputs;
}

std::vector<double> moving_average_matrix(std::size_t length, std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0) fail(ErrorCategory::config, "moving average kernel must be odd");
  const long pad = static_cast<long>(kernel / 2);
  const long n = static_cast<long>(length);
  std::vector<double> m(length * length, 0.0);
  for (long i = 0; i < n; ++i)
    for (long k = -pad; k <= pad; ++k) {
      const long j = std::clamp(i + k, 0L, n - 1);
      m[static_cast<std::size_t>(j * n + i)] += 1.0 / static_cast<double>(kernel);
    }
  return m;
}

LinearDecoder::LinearDecoder(nn::ParamStore& store, const ModelConfig&, bool decompose) : decompose_(decompose) {
  const std::size_t n = kObservationHours;
  const double avg = 1.0 / static_cast<double>(n);
  if (decompose) {
    trend_matrix_ = Tensor({n, kObservationHours}, moving_average_matrix(n, 25));
    trend_weight_ = store.create_constant("dlinear.trend.weight", {n, kHorizon}, avg);
    trend_bias_ = store.create_constant("dlinear.trend.bias", {kHorizon}, 0.0);
    weight_ = store.create_constant("dlinear.seasonal.weight", {n, kHorizon}, avg);
    bias_ = store.create_constant("dlinear.seasonal.bias", {kHorizon}, 0.0);
  } else {
    weight_ = store.create_constant("linear.weight", {n, kHorizon}, avg);
    bias_ = store.create_constant("linear.bias", {kHorizon}, 0.0);
  }
}

Tensor LinearDecoder::operator()(const Batch& batch) const {
  const Tensor x = ops::permute(batch.obs_values, {0, 2, 1});  // [B, F, 24]
  Tensor y;
  if (decompose_) {
    const Tensor trend = ops::matmul(x, trend_matrix_);
    const Tensor seasonal = ops::sub(x, trend);
    y = ops::add(ops::add(ops::matmul(trend, trend_weight_), trend_bias_),
                 ops::add(ops::matmul(seasonal, weight_), bias_));
  } else {
    y = ops::add(ops::matmul(x, weight_), bias_);
  }
  return ops::permute(y, {0, 2, 1});
}

ForecastModel::ForecastModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  if (config_.uses_encoder() || config_.regression_head) {
    if (config_.encoder == EncoderKind::dense)
      dense_ = DenseEncoder(store_, config_, rng);
    else
      triplet_ = TripletEncoder(store_, config_, rng);
  }
  switch (config_.decoder) {
    case DecoderKind::dms: dms_ = DmsDecoder(store_, config_, rng); break;
    case DecoderKind::ims: ims_ = ImsDecoder(store_, config_, rng); break;
    case DecoderKind::linear: linear_ = LinearDecoder(store_, config_, false); break;
    case DecoderKind::dlinear: linear_ = LinearDecoder(store_, config_, true); break;
  }
  if (config_.regression_head) head_ = nn::Linear(store_, "regression", config_.embedding_size, 1, rng);
}

Memory ForecastModel::encode(const Batch& batch, const nn::ForwardContext& ctx) const {
  if (batch.variables != config_.variables || batch.statics != config_.statics)
    fail(ErrorCategory::dimension, "batch layout does not match the model");
  if (!config_.uses_encoder() && !config_.regression_head)
    fail(ErrorCategory::config, "model has no encoder");
  return config_.encoder == EncoderKind::dense ? dense_(batch, ctx) : triplet_(batch, ctx);
}

std::vector<Tensor> ForecastModel::ims_steps(const Batch& batch, const nn::ForwardContext& ctx,
                                             const ImsOptions& ims) const {
  if (config_.decoder != DecoderKind::ims) fail(ErrorCategory::config, "model does not use the ims decoder");
  ImsOptions options = ims;
  if (options.history != nullptr && options.gold == nullptr) options.gold = &batch.target;
  return ims_.rollout(encode(batch, ctx), options, ctx);
}

Tensor ForecastModel::forecast(const Batch& batch, const nn::ForwardContext& ctx, const ImsOptions& ims) const {
  switch (config_.decoder) {
    case DecoderKind::dms: return dms_(encode(batch, ctx), ctx);
    case DecoderKind::ims: {
      ImsOptions options = ims;
      options.steps = kHorizon;
      return stack_steps(ims_steps(batch, ctx, options));
    }
    case DecoderKind::linear:
    case DecoderKind::dlinear:
      if (batch.variables != config_.variables) fail(ErrorCategory::dimension, "batch layout does not match the model");
      return linear_(batch);
  }
  fail(ErrorCategory::config, "unknown decoder");
}

Tensor ForecastModel::regress(const Batch& batch, const nn::ForwardContext& ctx) const {
  if (!config_.regression_head) fail(ErrorCategory::config, "model has no regression head");
  const Tensor pooled = ops::mean_axis(encode(batch, ctx).states, 1);
  return ops::reshape(head_(pooled), {batch.size});
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) fail(ErrorCategory::rollout, "no decoder steps");
  std::vector<Tensor> rows;
  rows.reserve(steps.size());
  for (const Tensor& s : steps) rows.push_back(ops::reshape(s, {s.dim(0), 1, s.dim(1)}));
  return ops::concat(rows, 1);
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(ErrorCategory::io, "truncated checkpoint " + path_.string());
  }
  const std::string& data_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model, const nlohmann::json& metadata) {
  nlohmann::json meta = metadata;
  meta["model"] = model.config().to_json();
  const std::string text = meta.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto& entries = model.params().entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& [name, tensor] : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : tensor.values()) put<double>(out, v);
  }
  write_file_atomically(path, out);
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();
  Reader r(data, path);
  if (r.bytes(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic)))
    fail(ErrorCategory::io, path.string() + " is not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    fail(ErrorCategory::io, "unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint ck;
  const auto text_len = r.get<std::uint64_t>();
  try {
    ck.metadata = nlohmann::json::parse(r.bytes(text_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::io, "corrupt checkpoint metadata: " + std::string(e.what()));
  }
  if (!ck.metadata.contains("model")) fail(ErrorCategory::io, "checkpoint lacks a model description");
  ck.config = ModelConfig::from_json(ck.metadata.at("model"));
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) n *= r.get<std::uint64_t>();
    std::vector<double> values(n);
    for (double& v : values) v = r.get<double>();
    ck.parameters.emplace_back(std::move(name), std::move(values));
  }
  if (!r.done()) fail(ErrorCategory::io, "trailing bytes in checkpoint " + path.string());
  return ck;
}

ForecastModel load_model(const LoadedCheckpoint& checkpoint) {
  ForecastModel model(checkpoint.config, 0);
  auto& store = model.params();
  if (store.entries().size() != checkpoint.parameters.size())
    fail(ErrorCategory::io, "checkpoint parameter count does not match the model");
  for (const auto& [name, values] : checkpoint.parameters) {
    Tensor* t = store.find(name);
    if (t == nullptr) fail(ErrorCategory::io, "checkpoint parameter '" + name + "' not in model");
    if (t->numel() != values.size()) fail(ErrorCategory::io, "checkpoint parameter '" + name + "' has wrong size");
    std::copy(values.begin(), values.end(), t->values_mut().begin());
  }
  return model;
}

}  // namespace causecast
