#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "setsum/adadelta.hpp"
#include "setsum/augment.hpp"
#include "setsum/data.hpp"
#include "setsum/regressor.hpp"

namespace setsum {

enum class Method { setsum, baseline, mixup };

std::string to_string(Method method);
Method parse_method(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 100;
  SetSamplerConfig sampler{};  // n and p of the set-sum method
  LossKind loss = LossKind::mse;
  Method method = Method::setsum;
  // Images per optimizer step for baseline/mixup; for setsum a multiple of n
  // (b = n gives one set per step).
  std::size_t batch_size = 4;
  bool augment = true;
  AugmentationConfig augmentation{};
  AdadeltaOptions optimizer{};
  std::uint64_t seed = 0;
  bool record_timing = true;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_mse;
  std::vector<double> seconds;
  std::vector<std::size_t> optimizer_steps;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  RegressorModel model;  // parameters of the best validation epoch
  TrainHistory history;
};

// Called after every optimizer step with (epoch, step within epoch, parameters).
using StepObserver = std::function<void(std::size_t, std::size_t, const ParameterStore&)>;

// Trains from `initial`. Deterministic for a fixed config.seed; randomness is
// split into independent streams for sample order, augmentation, dropout and
// mixup so that the set-sum method with n = 1, p = 0 follows exactly the same
// trajectory as the baseline with b = 1. Throws DivergenceError on a
// non-finite loss.
TrainResult train(const RegressorModel& initial, const LabeledImages& train_set,
                  const LabeledImages& val_set, const TrainConfig& config,
                  const StepObserver& observer = {});

// Per-image predictions without augmentation or dropout.
std::vector<double> infer(const RegressorModel& model, std::span<const Tensor> images);

// Picks `size` indices so the subsample spans the label distribution: distinct
// label values are grouped into min(size, #distinct) quantile bins, and bins
// are filled round-robin with randomly chosen members.
std::vector<std::size_t> stratified_subsample(std::span<const double> labels, std::size_t size,
                                              Rng& rng);

struct CurveSettings {
  std::vector<std::size_t> sizes{12, 16, 20, 24};
  std::vector<Method> methods{Method::setsum, Method::baseline};
  std::size_t num_seeds = 3;
  std::uint64_t master_seed = 0;
  std::size_t jobs = 1;
  ArchitectureConfig architecture{};
  TrainConfig train{};
  bool record_timing = false;
};

struct CurveJobResult {
  std::size_t size = 0;
  Method method = Method::setsum;
  std::uint64_t seed = 0;
  double test_mse = 0.0;
  std::optional<double> test_icc;
  double train_seconds = 0.0;
};

struct LearningCurvePoint {
  std::size_t training_set_size = 0;
  Method method = Method::setsum;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_mse;
  std::vector<std::optional<double>> test_icc;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  std::optional<double> mean_icc;
  std::optional<double> std_icc;
};

struct CurveResult {
  std::vector<CurveJobResult> jobs;  // ordered by size, method, seed
  std::vector<LearningCurvePoint> points;
};

// One training job per (size, method, seed). Jobs with the same size and seed
// share the training subsample, initial weights and random streams, so
// methods are compared on paired runs. Results do not depend on `jobs`.
CurveResult learning_curve_experiment(const LabeledImages& pool, const LabeledImages& val_set,
                                      const LabeledImages& test_set, const CurveSettings& settings);

// Mean and sample standard deviation; a single value has deviation 0.
LearningCurvePoint summarize(std::size_t size, Method method,
                             const std::vector<CurveJobResult>& jobs);

// size,method,seed,test_mse,test_icc,train_seconds
std::string curve_jobs_csv(const std::vector<CurveJobResult>& jobs);
// size,method,mean_mse,std_mse,mean_icc,std_icc
std::string curve_summary_csv(const std::vector<LearningCurvePoint>& points);
// epoch,train_loss,val_mse,seconds
std::string history_csv(const TrainHistory& history);

}  // namespace setsum
