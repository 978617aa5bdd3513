#include "setsum/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "detail/text.hpp"
#include "setsum/errors.hpp"
#include "setsum/metrics.hpp"

namespace setsum {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kOrderStream = 1,
  kAugmentStream = 2,
  kDropoutStream = 3,
  kMixupStream = 4,
  kSubsampleStream = 5,
  kInitStream = 6,
  kTrainStream = 7,
};

class Streams {
 public:
  explicit Streams(std::uint64_t seed)
      : order(derive_seed(seed, {kOrderStream})),
        augment(derive_seed(seed, {kAugmentStream})),
        dropout(derive_seed(seed, {kDropoutStream})),
        mixup(derive_seed(seed, {kMixupStream})) {}

  Rng order;
  Rng augment;
  Rng dropout;
  Rng mixup;
};

double mean_squared_error(const std::vector<double>& truth, const std::vector<double>& prediction) {
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = prediction[i] - truth[i];
    total += d * d;
  }
  return total / static_cast<double>(truth.size());
}

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
  }
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::setsum: return "setsum";
    case Method::baseline: return "baseline";
    case Method::mixup: return "mixup";
  }
  return "setsum";
}

Method parse_method(const std::string& text) {
  if (text == "setsum") return Method::setsum;
  if (text == "baseline") return Method::baseline;
  if (text == "mixup") return Method::mixup;
  throw std::invalid_argument("method must be setsum, baseline or mixup, got '" + text + "'");
}

std::vector<double> infer(const RegressorModel& model, std::span<const Tensor> images) {
  std::vector<double> predictions;
  predictions.reserve(images.size());
  for (const Tensor& image : images) predictions.push_back(model.predict(image));
  return predictions;
}

TrainResult train(const RegressorModel& initial, const LabeledImages& train_set,
                  const LabeledImages& val_set, const TrainConfig& config,
                  const StepObserver& observer) {
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training split");
  if (val_set.size() == 0) throw std::invalid_argument("train: empty validation split");
  if (config.epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (config.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (config.method == Method::setsum &&
      (config.sampler.n == 0 || config.batch_size % config.sampler.n != 0)) {
    throw std::invalid_argument("train: setsum batch size " + std::to_string(config.batch_size) +
                                " must be a multiple of n = " + std::to_string(config.sampler.n));
  }

  RegressorModel model = initial;
  const Tensor black = black_image(model.architecture());
  AdadeltaState optimizer(model.parameters(), config.optimizer);
  Streams streams(config.seed);
  const ForwardMode mode{true, &streams.dropout};
  auto augmented = [&](std::size_t index) {
    return config.augment
               ? random_geometric_augment(train_set.images[index], config.augmentation, streams.augment)
               : train_set.images[index];
  };

  TrainResult result{model, {}};
  double best = std::numeric_limits<double>::infinity();
  const std::size_t m = train_set.size();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_total = 0.0;
    std::size_t loss_terms = 0;
    std::size_t steps = 0;
    auto step = [&](const GradientMap& grads) {
      adadelta_step(model.parameters(), grads, optimizer);
      if (observer) observer(epoch, steps, model.parameters());
      ++steps;
    };

    if (config.method == Method::setsum) {
      const std::vector<SampleSet> sets = make_epoch_sets(train_set.labels, config.sampler, streams.order);
      const std::size_t sets_per_step = config.batch_size / config.sampler.n;
      for (std::size_t first = 0; first < sets.size(); first += sets_per_step) {
        const std::size_t last = std::min(sets.size(), first + sets_per_step);
        GradientMap grads = zero_gradients(model.parameters());
        for (std::size_t s = first; s < last; ++s) {
          std::vector<Tensor> slots;
          for (const SampleSlot& slot : sets[s].slots) {
            slots.push_back(slot.is_real() ? augmented(slot.image) : black);
          }
          const LossEvaluation eval =
              hydra_loss(model, slots, sets[s].virtual_label, config.loss, mode);
          check_finite(eval.loss, epoch);
          accumulate(grads, eval.gradients, 1.0 / static_cast<double>(last - first));
          loss_total += eval.loss;
          ++loss_terms;
        }
        step(grads);
      }
    } else {
      const std::vector<std::size_t> order = streams.order.permutation(m);
      for (std::size_t first = 0; first < m; first += config.batch_size) {
        const std::size_t last = std::min(m, first + config.batch_size);
        const std::size_t count = last - first;
        std::vector<Tensor> images;
        std::vector<double> labels;
        for (std::size_t i = first; i < last; ++i) {
          images.push_back(augmented(order[i]));
          labels.push_back(train_set.labels[order[i]]);
        }
        if (config.method == Method::mixup) {
          const std::vector<std::size_t> partner = streams.mixup.permutation(count);
          std::vector<Tensor> mixed_images;
          std::vector<double> mixed_labels;
          for (std::size_t i = 0; i < count; ++i) {
            const double lambda = streams.mixup.uniform();
            auto [x, y] = mixup_pair(images[i], labels[i], images[partner[i]], labels[partner[i]], lambda);
            mixed_images.push_back(std::move(x));
            mixed_labels.push_back(y);
          }
          images = std::move(mixed_images);
          labels = std::move(mixed_labels);
        }
        GradientMap grads = zero_gradients(model.parameters());
        for (std::size_t i = 0; i < count; ++i) {
          // A one-slot set: the grouped loss reduces to the per-sample loss.
          const LossEvaluation eval =
              hydra_loss(model, std::span<const Tensor>(&images[i], 1), labels[i], config.loss, mode);
          check_finite(eval.loss, epoch);
          accumulate(grads, eval.gradients, 1.0 / static_cast<double>(count));
          loss_total += eval.loss;
          ++loss_terms;
        }
        step(grads);
      }
    }

    const double val_mse = mean_squared_error(val_set.labels, infer(model, val_set.images));
    check_finite(val_mse, epoch);
    TrainHistory& h = result.history;
    h.train_loss.push_back(loss_total / static_cast<double>(loss_terms));
    h.val_mse.push_back(val_mse);
    h.optimizer_steps.push_back(steps);
    h.seconds.push_back(
        config.record_timing
            ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
            : 0.0);
    if (val_mse < best) {
      best = val_mse;
      h.best_epoch = epoch;
      h.best_val_mse = val_mse;
      result.model = model;
    }
  }
  return result;
}

std::vector<std::size_t> stratified_subsample(std::span<const double> labels, std::size_t size,
                                              Rng& rng) {
  if (size > labels.size()) {
    throw std::invalid_argument("subsample size " + std::to_string(size) + " exceeds pool of " +
                                std::to_string(labels.size()));
  }
  if (size == 0) return {};
  std::vector<double> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const std::size_t bins = std::min(size, distinct.size());

  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto rank = static_cast<std::size_t>(
        std::lower_bound(distinct.begin(), distinct.end(), labels[i]) - distinct.begin());
    members[rank * bins / distinct.size()].push_back(i);
  }
  for (auto& bin : members) std::shuffle(bin.begin(), bin.end(), rng.engine());

  std::vector<std::size_t> chosen;
  std::vector<std::size_t> cursor(bins, 0);
  while (chosen.size() < size) {
    for (std::size_t b = 0; b < bins && chosen.size() < size; ++b) {
      if (cursor[b] < members[b].size()) chosen.push_back(members[b][cursor[b]++]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

LearningCurvePoint summarize(std::size_t size, Method method,
                             const std::vector<CurveJobResult>& jobs) {
  LearningCurvePoint point;
  point.training_set_size = size;
  point.method = method;
  std::vector<double> iccs;
  for (const CurveJobResult& j : jobs) {
    if (j.size != size || j.method != method) continue;
    point.seeds.push_back(j.seed);
    point.test_mse.push_back(j.test_mse);
    point.test_icc.push_back(j.test_icc);
    if (j.test_icc) iccs.push_back(*j.test_icc);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  if (!point.test_mse.empty()) std::tie(point.mean_mse, point.std_mse) = mean_std(point.test_mse);
  if (!iccs.empty()) {
    const auto [m, s] = mean_std(iccs);
    point.mean_icc = m;
    point.std_icc = s;
  }
  return point;
}

CurveResult learning_curve_experiment(const LabeledImages& pool, const LabeledImages& val_set,
                                      const LabeledImages& test_set, const CurveSettings& settings) {
  for (std::size_t size : settings.sizes) {
    if (size > pool.size()) {
      throw std::invalid_argument("training size " + std::to_string(size) +
                                  " exceeds the pool of " + std::to_string(pool.size()) + " records");
    }
    if (size == 0) throw std::invalid_argument("training sizes must be positive");
  }
  if (settings.num_seeds == 0) throw std::invalid_argument("num_seeds must be positive");
  if (test_set.size() < 2) throw std::invalid_argument("learning curve needs at least 2 test records");

  struct Job {
    std::size_t size;
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t size : settings.sizes)
    for (Method method : settings.methods)
      for (std::size_t s = 0; s < settings.num_seeds; ++s) jobs.push_back({size, method, settings.master_seed + s});

  CurveResult result;
  result.jobs.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  auto run = [&](std::size_t index) {
    const Job& job = jobs[index];
    Rng subsample_rng(derive_seed(job.seed, {kSubsampleStream, job.size}));
    const LabeledImages train_set = pool.subset(stratified_subsample(pool.labels, job.size, subsample_rng));
    ArchitectureConfig arch = settings.architecture;
    arch.seed = derive_seed(job.seed, {kInitStream, job.size});
    TrainConfig config = settings.train;
    config.method = job.method;
    config.seed = derive_seed(job.seed, {kTrainStream, job.size});
    config.record_timing = settings.record_timing;

    const auto start = std::chrono::steady_clock::now();
    const TrainResult trained = train(build_base_regressor(arch), train_set, val_set, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::vector<double> predictions = infer(trained.model, test_set.images);

    CurveJobResult& r = result.jobs[index];
    r.size = job.size;
    r.method = job.method;
    r.seed = job.seed;
    r.test_mse = mse(test_set.labels, predictions);
    r.test_icc = icc(test_set.labels, predictions);
    r.train_seconds = settings.record_timing ? seconds : 0.0;
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(settings.jobs, jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        run(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t size : settings.sizes)
    for (Method method : settings.methods) result.points.push_back(summarize(size, method, result.jobs));
  return result;
}

std::string curve_jobs_csv(const std::vector<CurveJobResult>& jobs) {
  std::ostringstream out;
  out << "size,method,seed,test_mse,test_icc,train_seconds\n";
  for (const CurveJobResult& j : jobs) {
    out << j.size << "," << to_string(j.method) << "," << j.seed << ","
        << detail::format_double(j.test_mse) << "," << format_optional(j.test_icc) << ","
        << detail::format_double(j.train_seconds) << "\n";
  }
  return out.str();
}

std::string curve_summary_csv(const std::vector<LearningCurvePoint>& points) {
  std::ostringstream out;
  out << "size,method,mean_mse,std_mse,mean_icc,std_icc\n";
  for (const LearningCurvePoint& p : points) {
    out << p.training_set_size << "," << to_string(p.method) << ","
        << detail::format_double(p.mean_mse) << "," << detail::format_double(p.std_mse) << ","
        << format_optional(p.mean_icc) << "," << format_optional(p.std_icc) << "\n";
  }
  return out.str();
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_mse,seconds\n";
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    out << e << "," << detail::format_double(history.train_loss[e]) << ","
        << detail::format_double(history.val_mse[e]) << ","
        << detail::format_double(history.seconds[e]) << "\n";
  }
  return out.str();
}

}  // namespace setsum
