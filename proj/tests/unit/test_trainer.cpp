#include <doctest.h>

#include <cmath>
#include <set>

#include "setsum/data.hpp"
#include "setsum/errors.hpp"
#include "setsum/trainer.hpp"

using namespace setsum;

namespace {

LabeledImages synthetic_set(std::size_t count, std::uint64_t seed) {
  SyntheticConfig c;
  Rng rng(seed);
  LabeledImages out;
  for (std::size_t i = 0; i < count; ++i) {
    const GeneratedImage g = generate_blob_image(c, rng);
    out.images.push_back(rescale_intensity(g.image));
    out.labels.push_back(static_cast<double>(g.count_label));
    out.paths.push_back("img" + std::to_string(i));
  }
  return out;
}

ArchitectureConfig small_architecture(double dropout = 0.0) {
  ArchitectureConfig a;
  a.conv_blocks = {{4, 3}, {6, 3}};
  a.skip_connections = {{0, 2}};
  a.dropout_rate = dropout;
  a.seed = 3;
  return a;
}

using Trajectory = std::vector<ParameterStore>;

Trajectory record(const RegressorModel& model, const LabeledImages& train_set, const LabeledImages& val,
                  const TrainConfig& config) {
  Trajectory t;
  train(model, train_set, val, config, [&](std::size_t, std::size_t, const ParameterStore& p) { t.push_back(p); });
  return t;
}

double trajectory_distance(const Trajectory& a, const Trajectory& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t s = 0; s < a[i].size(); ++s)
      worst = std::max(worst, max_abs_difference(a[i].value(s), b[i].value(s)));
  return worst;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("setsum with n = 1, p = 0 follows the baseline with b = 1") {
    const LabeledImages train_set = synthetic_set(12, 1);
    const LabeledImages val = synthetic_set(4, 2);
    for (double dropout : {0.0, 0.3}) {
      const RegressorModel model = build_base_regressor(small_architecture(dropout));
      TrainConfig setsum_cfg;
      setsum_cfg.epochs = 3;
      setsum_cfg.method = Method::setsum;
      setsum_cfg.sampler = {1, 0.0};
      setsum_cfg.batch_size = 1;
      setsum_cfg.seed = 9;
      TrainConfig baseline_cfg = setsum_cfg;
      baseline_cfg.method = Method::baseline;
      const Trajectory a = record(model, train_set, val, setsum_cfg);
      const Trajectory b = record(model, train_set, val, baseline_cfg);
      REQUIRE(a.size() == 36);
      REQUIRE(b.size() == 36);
      CHECK(trajectory_distance(a, b) <= 1e-10);
    }
  }

  TEST_CASE("optimizer steps per epoch") {
    const LabeledImages train_set = synthetic_set(10, 3);
    const LabeledImages val = synthetic_set(3, 4);
    const RegressorModel model = build_base_regressor(small_architecture());
    TrainConfig c;
    c.epochs = 2;
    c.record_timing = false;
    CHECK(train(model, train_set, val, c).history.optimizer_steps == std::vector<std::size_t>{3, 3});
    c.method = Method::baseline;
    c.batch_size = 3;
    CHECK(train(model, train_set, val, c).history.optimizer_steps == std::vector<std::size_t>{4, 4});
    c.method = Method::setsum;
    c.batch_size = 8;  // two sets per step
    CHECK(train(model, train_set, val, c).history.optimizer_steps == std::vector<std::size_t>{2, 2});
  }

  TEST_CASE("same seed gives a bit-identical history") {
    const LabeledImages train_set = synthetic_set(8, 5);
    const LabeledImages val = synthetic_set(3, 6);
    const RegressorModel model = build_base_regressor(small_architecture(0.2));
    for (Method method : {Method::setsum, Method::baseline, Method::mixup}) {
      TrainConfig c;
      c.epochs = 3;
      c.method = method;
      c.record_timing = false;
      const TrainResult a = train(model, train_set, val, c);
      const TrainResult b = train(model, train_set, val, c);
      CHECK(a.history == b.history);
      CHECK(a.model == b.model);
      CHECK(a.history.train_loss.size() == 3);
      CHECK(a.history.val_mse.size() == 3);
      CHECK(a.history.seconds.size() == 3);
    }
  }

  TEST_CASE("returned model reproduces the best validation MSE") {
    const LabeledImages train_set = synthetic_set(8, 7);
    const LabeledImages val = synthetic_set(4, 8);
    TrainConfig c;
    c.epochs = 6;
    const TrainResult r = train(build_base_regressor(small_architecture()), train_set, val, c);
    const auto predictions = infer(r.model, val.images);
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
      total += (predictions[i] - val.labels[i]) * (predictions[i] - val.labels[i]);
    CHECK(total / 4.0 == doctest::Approx(r.history.best_val_mse).epsilon(1e-12));
    CHECK(r.history.val_mse[r.history.best_epoch] == r.history.best_val_mse);
    for (double v : r.history.val_mse) CHECK(v >= r.history.best_val_mse);
  }

  TEST_CASE("200 epochs on 24 images lower the training loss") {
    const LabeledImages train_set = synthetic_set(24, 9);
    const LabeledImages val = synthetic_set(8, 10);
    TrainConfig c;
    c.epochs = 200;
    c.record_timing = false;
    const TrainResult r = train(build_base_regressor(ArchitectureConfig{}), train_set, val, c);
    CHECK(r.history.train_loss.back() < r.history.train_loss.front());
  }

  TEST_CASE("divergence names the epoch") {
    const LabeledImages train_set = synthetic_set(8, 11);
    const LabeledImages val = synthetic_set(3, 12);
    TrainConfig c;
    c.epochs = 50;
    c.optimizer.learning_rate = 1e300;
    try {
      train(build_base_regressor(small_architecture()), train_set, val, c);
      FAIL("expected divergence");
    } catch (const DivergenceError& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  TEST_CASE("invalid inputs are rejected") {
    const LabeledImages train_set = synthetic_set(4, 13);
    const RegressorModel model = build_base_regressor(small_architecture());
    TrainConfig c;
    c.epochs = 1;
    CHECK_THROWS(train(model, LabeledImages{}, train_set, c));
    CHECK_THROWS(train(model, train_set, LabeledImages{}, c));
    c.batch_size = 6;  // not a multiple of n = 4
    CHECK_THROWS(train(model, train_set, train_set, c));
  }
}

TEST_SUITE("infer") {
  TEST_CASE("equals the zero-padded hydra evaluation") {
    const LabeledImages images = synthetic_set(10, 14);
    const RegressorModel model = build_base_regressor(ArchitectureConfig{});
    const Tensor black = black_image(model.architecture());
    const auto predictions = infer(model, images.images);
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::vector<Tensor> set{images.images[i], black, black, black};
      CHECK(std::abs(predictions[i] - hydra_forward(model, set)) <= 1e-12);
    }
    CHECK(infer(model, images.images) == predictions);
  }

  TEST_CASE("independent of ordering") {
    const LabeledImages images = synthetic_set(6, 15);
    const RegressorModel model = build_base_regressor(small_architecture());
    std::vector<Tensor> reversed(images.images.rbegin(), images.images.rend());
    auto forward = infer(model, images.images);
    const auto backward = infer(model, reversed);
    std::reverse(forward.begin(), forward.end());
    CHECK(forward == backward);
  }

  TEST_CASE("shape mismatch is rejected") {
    const RegressorModel model = build_base_regressor(small_architecture());
    const std::vector<Tensor> wrong{Tensor({1, 8, 8})};
    CHECK_THROWS_AS(infer(model, wrong), ShapeError);
  }
}

TEST_SUITE("stratified_subsample") {
  TEST_CASE("every quantile bin is represented") {
    std::vector<double> labels;
    for (int r = 0; r < 3; ++r)
      for (int l = 0; l < 12; ++l) labels.push_back(l);
    Rng rng(16);
    const auto chosen = stratified_subsample(labels, 12, rng);
    CHECK(chosen.size() == 12);
    std::set<double> seen;
    for (std::size_t i : chosen) seen.insert(labels[i]);
    CHECK(seen.size() == 12);
  }

  TEST_CASE("coarser sizes still cover the label range") {
    std::vector<double> labels;
    for (int l = 0; l < 9; ++l)
      for (int r = 0; r < 4; ++r) labels.push_back(l);
    Rng rng(17);
    const auto chosen = stratified_subsample(labels, 5, rng);
    std::set<std::size_t> unique(chosen.begin(), chosen.end());
    CHECK(unique.size() == 5);
    double lo = 99, hi = -1;
    for (std::size_t i : chosen) {
      lo = std::min(lo, labels[i]);
      hi = std::max(hi, labels[i]);
    }
    CHECK(lo <= 1);
    CHECK(hi >= 7);
  }

  TEST_CASE("oversized request is rejected") {
    const std::vector<double> labels{1, 2, 3};
    Rng rng(18);
    CHECK_THROWS(stratified_subsample(labels, 4, rng));
    CHECK(stratified_subsample(labels, 3, rng).size() == 3);
  }
}

TEST_SUITE("learning_curve_experiment") {
  TEST_CASE("one size, one method, one seed") {
    const LabeledImages pool = synthetic_set(14, 19);
    const LabeledImages val = synthetic_set(3, 20);
    const LabeledImages test = synthetic_set(6, 21);
    CurveSettings s;
    s.sizes = {12};
    s.methods = {Method::baseline};
    s.num_seeds = 1;
    s.architecture = small_architecture();
    s.train.epochs = 2;
    const CurveResult r = learning_curve_experiment(pool, val, test, s);
    REQUIRE(r.points.size() == 1);
    REQUIRE(r.jobs.size() == 1);
    CHECK(r.points[0].training_set_size == 12);
    CHECK(r.points[0].mean_mse == r.jobs[0].test_mse);
    CHECK(r.points[0].std_mse == 0.0);
    CHECK(r.jobs[0].train_seconds == 0.0);
  }

  TEST_CASE("statistics are recomputable and jobs do not change results") {
    const LabeledImages pool = synthetic_set(14, 22);
    const LabeledImages val = synthetic_set(3, 23);
    const LabeledImages test = synthetic_set(6, 24);
    CurveSettings s;
    s.sizes = {8, 12};
    s.num_seeds = 2;
    s.architecture = small_architecture();
    s.train.epochs = 2;
    const CurveResult serial = learning_curve_experiment(pool, val, test, s);
    s.jobs = 3;
    const CurveResult parallel = learning_curve_experiment(pool, val, test, s);
    CHECK(curve_jobs_csv(serial.jobs) == curve_jobs_csv(parallel.jobs));
    CHECK(curve_summary_csv(serial.points) == curve_summary_csv(parallel.points));
    REQUIRE(serial.points.size() == 4);
    CHECK(serial.jobs.size() == 8);
    for (const LearningCurvePoint& p : serial.points) {
      CHECK(p.test_mse.size() == 2);
      const double mean = (p.test_mse[0] + p.test_mse[1]) / 2;
      CHECK(p.mean_mse == doctest::Approx(mean).epsilon(1e-14));
      CHECK(p.std_mse == doctest::Approx(std::abs(p.test_mse[0] - p.test_mse[1]) / std::sqrt(2.0)).epsilon(1e-12));
    }
    CHECK(curve_jobs_csv(serial.jobs).rfind("size,method,seed,test_mse,test_icc,train_seconds\n", 0) == 0);
    CHECK(curve_summary_csv(serial.points).rfind("size,method,mean_mse,std_mse,mean_icc,std_icc\n", 0) == 0);
  }

  TEST_CASE("size beyond the pool is rejected") {
    const LabeledImages pool = synthetic_set(5, 25);
    CurveSettings s;
    s.sizes = {6};
    s.architecture = small_architecture();
    CHECK_THROWS(learning_curve_experiment(pool, pool, pool, s));
  }

  TEST_CASE("history csv") {
    TrainHistory h;
    h.train_loss = {2.0, 1.5};
    h.val_mse = {3.0, 2.5};
    h.seconds = {0.0, 0.0};
    h.optimizer_steps = {1, 1};
    CHECK(history_csv(h) == "epoch,train_loss,val_mse,seconds\n0,2,3,0\n1,1.5,2.5,0\n");
  }
}
