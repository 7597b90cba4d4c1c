#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "causecast/nn.hpp"
#include "causecast/series.hpp"

namespace causecast {

enum class EncoderKind { triplet, dense };
enum class DecoderKind { dms, ims, linear, dlinear };

std::string_view encoder_name(EncoderKind k);
std::string_view decoder_name(DecoderKind k);
EncoderKind parse_encoder(std::string_view name);
DecoderKind parse_decoder(std::string_view name);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::dense;
  DecoderKind decoder = DecoderKind::ims;
  std::size_t variables = 0;  // |F|
  std::size_t statics = 0;
  std::size_t embedding_size = 32;
  std::size_t hidden_size_encoder = 64;
  std::size_t encoder_layers = 2;
  std::size_t attention_heads_encoder = 4;
  std::size_t hidden_size_dms_decoder = 64;
  std::size_t dms_decoder_layers = 1;
  std::size_t attention_heads_dms_decoder = 4;
  std::size_t ims_decoder_layers = 1;
  std::size_t attention_heads_ims_decoder = 1;
  // 0: run at the output width |F|; otherwise project F -> width -> F around the layers.
  std::size_t hidden_size_ims_decoder = 0;
  std::size_t ims_ffn_size = 64;
  bool regression_head = false;
  double dropout = 0.1;

  std::size_t ims_width() const { return hidden_size_ims_decoder ? hidden_size_ims_decoder : variables; }
  bool uses_encoder() const { return decoder == DecoderKind::dms || decoder == DecoderKind::ims; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Standardized model inputs for a batch of windows.
struct Batch {
  std::size_t size = 0;
  std::size_t variables = 0;
  std::size_t statics = 0;
  Tensor dense_input;   // [B, 24, 2F + S]: values | mask | statics
  Tensor obs_values;    // [B, 24, F]
  // Triplets padded to the longest sample; statics come first as t = 0 pseudo-triplets.
  std::size_t max_triplets = 0;
  std::vector<std::size_t> triplet_lengths;
  std::vector<double> triplet_time;    // [B * L], hours / 24
  std::vector<std::size_t> triplet_var;  // [B * L], statics use F + s
  std::vector<double> triplet_value;   // [B * L]
  Tensor target;       // [B, 24, F]
  Tensor target_mask;  // [B, 24, F]
  std::vector<double> regression_target;  // per sample, optional
};

Batch make_batch(const std::vector<const WindowPair*>& windows, std::size_t variables, std::size_t statics);

struct Memory {
  Tensor states;  // [B, L, m]
  ops::AttentionMask mask;
};

class DenseEncoder {
 public:
  DenseEncoder() = default;
  DenseEncoder(nn::ParamStore& store, const ModelConfig& config, Rng& rng);
  Memory operator()(const Batch& batch, const nn::ForwardContext& ctx) const;

 private:
  nn::Linear input_;
  nn::EncoderStack stack_;
  Tensor positions_;
};

class TripletEncoder {
 public:
  TripletEncoder() = default;
  TripletEncoder(nn::ParamStore& store, const ModelConfig& config, Rng& rng);
  Memory operator()(const Batch& batch, const nn::ForwardContext& ctx) const;

 private:
  nn::Linear time_;
  nn::Linear value_;
  Tensor variables_;  // [F + S, m]
  nn::EncoderStack stack_;
};

class DmsDecoder {
 public:
  DmsDecoder() = default;
  DmsDecoder(nn::ParamStore& store, const ModelConfig& config, Rng& rng);
  // [B, 24, F]
  Tensor operator()(const Memory& memory, const nn::ForwardContext& ctx) const;
  const Tensor& queries() const { return queries_; }

 private:
  struct Layer {
    nn::MultiHeadAttention cross;
    nn::LayerNorm norm1;
    nn::FeedForward ffn;
    nn::LayerNorm norm2;
  };
  Tensor queries_;  // [24, m]
  std::vector<Layer> layers_;
  Tensor head_weight_;  // [24, m, F]
  Tensor head_bias_;    // [24, F]
};

// Per (sample, position) choice of the decoder input: 1 = gold y_{t-1}, 0 = own prediction.
// Position 0 always reads the learned start token.
struct HistoryPlan {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::uint8_t> teacher;

  bool at(std::size_t b, std::size_t t) const { return teacher[b * steps + t] != 0; }
};

struct ImsOptions {
  const HistoryPlan* history = nullptr;  // null: pure rollout on own predictions
  const Tensor* gold = nullptr;          // [B, 24, F], needed when history has teacher positions
  bool backprop_predictions = true;
  // Overwrites one channel of every fed-back input with a constant.
  std::optional<std::pair<std::size_t, double>> clamp;
  std::size_t steps = kHorizon;
};

class ImsDecoder {
 public:
  ImsDecoder() = default;
  ImsDecoder(nn::ParamStore& store, const ModelConfig& config, Rng& rng);
  // Step outputs, each [B, F].
  std::vector<Tensor> rollout(const Memory& memory, const ImsOptions& options, const nn::ForwardContext& ctx) const;
  // Runs the decoder over explicit inputs [B, T, F] (position 0 is replaced by the start token).
  std::vector<Tensor> run_inputs(const Memory& memory, const Tensor& inputs, const nn::ForwardContext& ctx) const;

 private:
  struct Layer {
    nn::MultiHeadAttention self;
    nn::LayerNorm norm1;
    nn::MultiHeadAttention cross;
    nn::LayerNorm norm2;
    nn::FeedForward ffn;
    nn::LayerNorm norm3;
  };
  struct Cache;
  Tensor step(const Tensor& input, std::size_t t, Cache& cache, const nn::ForwardContext& ctx) const;

  std::size_t width_ = 0;  // |F|
  std::size_t hidden_ = 0;
  nn::Linear input_;  // only when hidden_ != width_
  Tensor start_;  // [F]
  std::vector<Layer> layers_;
  nn::Linear output_;
  Tensor positions_;  // [24, F]
};

class LinearDecoder {
 public:
  LinearDecoder() = default;
  LinearDecoder(nn::ParamStore& store, const ModelConfig& config, bool decompose);
  Tensor operator()(const Batch& batch) const;

 private:
  bool decompose_ = false;
  Tensor trend_matrix_;  // [24, 24], constant moving average with edge replication
  Tensor weight_;        // [24, 24] seasonal (or only) map
  Tensor bias_;
  Tensor trend_weight_;
  Tensor trend_bias_;
};

// Moving average of `kernel` taps over a 24-step input, replicating edge values.
std::vector<double> moving_average_matrix(std::size_t length, std::size_t kernel);

class ForecastModel {
 public:
  ForecastModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  Memory encode(const Batch& batch, const nn::ForwardContext& ctx) const;
  // [B, 24, F] standardized forecast.
  Tensor forecast(const Batch& batch, const nn::ForwardContext& ctx, const ImsOptions& ims = {}) const;
  // IMS step outputs (for gradient probes).
  std::vector<Tensor> ims_steps(const Batch& batch, const nn::ForwardContext& ctx, const ImsOptions& ims) const;
  // [B] regression-head output from the pooled dense memory.
  Tensor regress(const Batch& batch, const nn::ForwardContext& ctx) const;

  const DmsDecoder& dms() const { return dms_; }
  const ImsDecoder& ims() const { return ims_; }

 private:
  ModelConfig config_;
  nn::ParamStore store_;
  DenseEncoder dense_;
  TripletEncoder triplet_;
  DmsDecoder dms_;
  ImsDecoder ims_;
  LinearDecoder linear_;
  nn::Linear head_;
};

Tensor stack_steps(const std::vector<Tensor>& steps);  // list of [B, F] -> [B, T, F]

inline constexpr char kCheckpointMagic[8] = {'P', 'O', 'C', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model, const nlohmann::json& metadata);
struct LoadedCheckpoint {
  nlohmann::json metadata;
  ModelConfig config;
  std::vector<std::pair<std::string, std::vector<double>>> parameters;
};
LoadedCheckpoint read_checkpoint(const std::filesystem::path& path);
// Builds the model described by the checkpoint and loads its parameters.
ForecastModel load_model(const LoadedCheckpoint& checkpoint);

}  // namespace causecast
