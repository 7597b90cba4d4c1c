#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "causecast/model.hpp"

namespace causecast {

enum class CurriculumKind { none, teacher, student, scheduled };
enum class Selection { random, deterministic };

std::string_view curriculum_name(CurriculumKind k);
CurriculumKind parse_curriculum(std::string_view name);
std::string_view selection_name(Selection s);
Selection parse_selection(std::string_view name);

struct Curriculum {
  CurriculumKind kind = CurriculumKind::teacher;
  double eps_start = 1.0;
  double eps_end = 0.0;
  std::size_t length = 200;
  Selection selection = Selection::random;
  bool bp_through_predictions = true;

  void validate() const;
};

// Teacher-forcing ratio at epoch e (0-based): 1 for teacher, 0 for student,
// linear interpolation held at eps_end after `length` epochs for scheduled.
double curriculum_ratio(const Curriculum& c, std::size_t epoch);

// Per (sample, position) history source for one batch. Positions are
// 0-based here; position p (p >= 1) reads y_{p-1}.
HistoryPlan build_history(const Curriculum& c, std::size_t epoch, std::size_t batch, Rng& rng);

// Masked squared error summed and divided by B * T.
Tensor masked_mse_loss(const Tensor& pred, const Tensor& target, const Tensor& mask);

// Forward pass under the curriculum; returns the differentiable loss.
Tensor training_loss(const ForecastModel& model, const Batch& batch, const Curriculum& c, std::size_t epoch,
                     Rng& history_rng, const nn::ForwardContext& ctx);

class Adam {
 public:
  Adam(nn::ParamStore& store, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  double learning_rate() const { return lr_; }
  std::size_t steps() const { return t_; }

 private:
  nn::ParamStore* store_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Rescales all gradients so their global l2 norm is at most max_norm; returns the norm before clipping.
double clip_gradients(nn::ParamStore& store, double max_norm);

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t patience = 6;
  double grad_clip = 1.0;  // 0 disables
  std::uint64_t seed = 0;
  Curriculum curriculum;
  bool record_wall_time = false;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double dev_mse = 0.0;
  double ratio = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_dev = 0.0;
  std::string stop_reason;  // "patience" or "max_epochs"
  std::size_t optimizer_steps = 0;
};

struct StepOutcome {
  double loss = 0.0;
  bool updated = false;
};

// One optimizer step on a batch. Batches without observed targets leave parameters untouched.
StepOutcome training_step(ForecastModel& model, const Batch& batch, const Curriculum& c, std::size_t epoch,
                          Adam& optimizer, double grad_clip, Rng& history_rng, const nn::ForwardContext& ctx);

// Masked MSE of free-running forecasts over windows (inference mode).
double evaluate_mse(const ForecastModel& model, const std::vector<WindowPair>& windows, std::size_t batch_size);

// Trains with early stopping on dev masked MSE and restores the best parameters.
FitResult fit(ForecastModel& model, const std::vector<WindowPair>& train, const std::vector<WindowPair>& dev,
              const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch = {});

inline constexpr std::string_view kTrainingLogHeader = "epoch,train_mse,dev_mse,ratio,lr,seconds";
std::string format_log_record(const EpochRecord& r, bool with_time);

}  // namespace causecast
