#include "causecast/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "causecast/dataset.hpp"
#include "causecast/error.hpp"

namespace causecast {

std::string_view curriculum_name(CurriculumKind k) {
  switch (k) {
    case CurriculumKind::none: return "none";
    case CurriculumKind::teacher: return "teacher";
    case CurriculumKind::student: return "student";
    case CurriculumKind::scheduled: return "scheduled";
  }
  return "?";
}

CurriculumKind parse_curriculum(std::string_view name) {
  if (name == "none") return CurriculumKind::none;
  if (name == "teacher") return CurriculumKind::teacher;
  if (name == "student") return CurriculumKind::student;
  if (name == "scheduled") return CurriculumKind::scheduled;
  fail(ErrorCategory::config, "unknown curriculum '" + std::string(name) + "'");
}

std::string_view selection_name(Selection s) { return s == Selection::random ? "random" : "deterministic"; }

Selection parse_selection(std::string_view name) {
  if (name == "random") return Selection::random;
  if (name == "deterministic") return Selection::deterministic;
  fail(ErrorCategory::config, "unknown selection '" + std::string(name) + "'");
}

void Curriculum::validate() const {
  if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0))
    fail(ErrorCategory::config, "curriculum eps values must lie in [0, 1]");
  if (length < 1) fail(ErrorCategory::config, "curriculum_length must be at least 1");
}

double curriculum_ratio(const Curriculum& c, std::size_t epoch) {
  switch (c.kind) {
    case CurriculumKind::none:
    case CurriculumKind::teacher: return 1.0;
    case CurriculumKind::student: return 0.0;
    case CurriculumKind::scheduled: break;
  }
  const double l = static_cast<double>(c.length);
  const double e = static_cast<double>(std::min(epoch, c.length));
  return c.eps_start + (c.eps_end - c.eps_start) * e / l;
}

HistoryPlan build_history(const Curriculum& c, std::size_t epoch, std::size_t batch, Rng& rng) {
  HistoryPlan plan{batch, kHorizon, std::vector<std::uint8_t>(batch * kHorizon, 0)};
  const double ratio = curriculum_ratio(c, epoch);
  if (c.kind != CurriculumKind::scheduled) {
    std::fill(plan.teacher.begin(), plan.teacher.end(), ratio >= 1.0 ? 1 : 0);
    return plan;
  }
  if (c.selection == Selection::deterministic) {
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(kHorizon) * ratio));
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < std::min(k, kHorizon); ++t) plan.teacher[b * kHorizon + t] = 1;
  } else {
    for (auto& flag : plan.teacher) flag = rng.bernoulli(ratio) ? 1 : 0;
  }
  return plan;
}

Tensor masked_mse_loss(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  if (pred.rank() != 3) fail(ErrorCategory::dimension, "loss expects [B, T, F] predictions");
  const double denom = static_cast<double>(pred.dim(0) * pred.dim(1));
  return ops::scale(ops::masked_squared_error(pred, target, mask), 1.0 / denom);
}

Tensor training_loss(const ForecastModel& model, const Batch& batch, const Curriculum& c, std::size_t epoch,
                     Rng& history_rng, const nn::ForwardContext& ctx) {
  Tensor pred;
  if (model.config().decoder == DecoderKind::ims) {
    const HistoryPlan plan = build_history(c, epoch, batch.size, history_rng);
    ImsOptions options;
    options.history = &plan;
    options.gold = &batch.target;
    options.backprop_predictions = c.bp_through_predictions;
    pred = model.forecast(batch, ctx, options);
  } else {
    pred = model.forecast(batch, ctx);
  }
  return masked_mse_loss(pred, batch.target, batch.target_mask);
}

Adam::Adam(nn::ParamStore& store, double learning_rate, double beta1, double beta2, double eps)
    : store_(&store), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(learning_rate > 0.0)) fail(ErrorCategory::config, "learning_rate must be positive");
  for (const auto& [name, t] : store.entries()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& entries = store_->entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = entries[i].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.values_mut();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
}

double clip_gradients(nn::ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : store.entries())
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, t] : store.entries())
      if (t.has_grad())
        for (double& g : t.grad_mut()) g *= f;
  }
  return norm;
}

StepOutcome training_step(ForecastModel& model, const Batch& batch, const Curriculum& c, std::size_t epoch,
                          Adam& optimizer, double grad_clip, Rng& history_rng, const nn::ForwardContext& ctx) {
  model.params().zero_grad();
  const Tensor loss = training_loss(model, batch, c, epoch, history_rng, ctx);
  const double value = loss.item();
  if (!std::isfinite(value))
    fail(ErrorCategory::numeric, "non-finite training loss at epoch " + std::to_string(epoch) + " (batch of " +
                                     std::to_string(batch.size) + " windows)");
  const auto mask = batch.target_mask.values();
  if (std::none_of(mask.begin(), mask.end(), [](double m) { return m != 0.0; })) return {value, false};
  loss.backward();
  const double norm = clip_gradients(model.params(), grad_clip);
  if (!std::isfinite(norm)) fail(ErrorCategory::numeric, "non-finite gradient at epoch " + std::to_string(epoch));
  optimizer.step();
  return {value, true};
}

namespace {

std::vector<const WindowPair*> pointers(const std::vector<WindowPair>& windows, const std::vector<std::size_t>& order,
                                        std::size_t begin, std::size_t end) {
  std::vector<const WindowPair*> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(&windows[order[i]]);
  return out;
}

}  // namespace

double evaluate_mse(const ForecastModel& model, const std::vector<WindowPair>& windows, std::size_t batch_size) {
  if (windows.empty()) fail(ErrorCategory::empty_input, "no windows to evaluate");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  const auto& cfg = model.config();
  for (std::size_t begin = 0; begin < windows.size(); begin += batch_size) {
    const std::size_t end = std::min(windows.size(), begin + batch_size);
    const Batch batch = make_batch(pointers(windows, order, begin, end), cfg.variables, cfg.statics);
    total += ops::masked_squared_error(model.forecast(batch, {}).detach(), batch.target, batch.target_mask).item();
  }
  return total / static_cast<double>(windows.size() * kHorizon);
}

FitResult fit(ForecastModel& model, const std::vector<WindowPair>& train, const std::vector<WindowPair>& dev,
              const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty()) fail(ErrorCategory::config, "training split has no windows");
  if (dev.empty()) fail(ErrorCategory::config, "development split has no windows");
  if (config.batch_size == 0) fail(ErrorCategory::config, "batch_size must be positive");
  if (config.epochs == 0) fail(ErrorCategory::config, "epochs must be positive");
  config.curriculum.validate();

  Rng shuffle_rng = Rng::derive(config.seed, 1);
  Rng dropout_rng = Rng::derive(config.seed, 2);
  Rng history_rng = Rng::derive(config.seed, 3);
  Adam optimizer(model.params(), config.learning_rate);
  nn::ForwardContext ctx{true, &dropout_rng, model.config().dropout};
  const auto& cfg = model.config();

  FitResult result;
  result.best_dev = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best = model.params().snapshot();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double sum = 0.0;
    for (std::size_t begin = 0; begin < train.size(); begin += config.batch_size) {
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      const Batch batch = make_batch(pointers(train, order, begin, end), cfg.variables, cfg.statics);
      const StepOutcome out =
          training_step(model, batch, config.curriculum, epoch, optimizer, config.grad_clip, history_rng, ctx);
      sum += out.loss * static_cast<double>(batch.size);
      result.optimizer_steps += out.updated ? 1 : 0;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = sum / static_cast<double>(train.size());
    rec.dev_mse = evaluate_mse(model, dev, config.batch_size);
    rec.ratio = curriculum_ratio(config.curriculum, epoch);
    rec.learning_rate = optimizer.learning_rate();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(rec.dev_mse)) fail(ErrorCategory::numeric, "non-finite dev loss at epoch " + std::to_string(epoch));
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.dev_mse < result.best_dev) {
      result.best_dev = rec.dev_mse;
      result.best_epoch = epoch;
      best = model.params().snapshot();
      stale = 0;
    } else if (++stale >= config.patience) {
      result.stop_reason = "patience";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  model.params().restore(best);
  return result;
}

std::string format_log_record(const EpochRecord& r, bool with_time) {
  return std::to_string(r.epoch) + "," + format_double(r.train_mse) + "," + format_double(r.dev_mse) + "," +
         format_double(r.ratio) + "," + format_double(r.learning_rate) + "," +
         (with_time ? format_double(r.seconds) : std::string("-"));
}

}  // namespace causecast
