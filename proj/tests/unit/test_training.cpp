#include <doctest.h>

#include "micro.hpp"
#include "piconv/adam.hpp"
#include "piconv/dataset.hpp"
#include "piconv/metrics.hpp"
#include "piconv/study.hpp"
#include "piconv/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <sstream>

using namespace piconv;

namespace {

std::shared_ptr<const FrameSeries> counting_series(Index n, Index rows = 4, Index cols = 4) {
  auto s = std::make_shared<FrameSeries>();
  for (Index k = 0; k < n; ++k) {
    s->channels.push_back({Field::Constant(rows, cols, 23.0 + double(k))});
    s->active.push_back(Mask::Constant(rows, cols, true));
    s->flux.push_back(Field::Zero(rows, cols));
  }
  s->physics.grid.rows = rows;
  s->physics.grid.cols = cols;
  return s;
}

TrainConfig quick_train(Index epochs = 2) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 4;
  tc.seed = 5;
  tc.learning_rate = 5e-3;
  return tc;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("window_dataset counts and indices") {
  const auto s10 = counting_series(10);
  const WindowedDataset d = window_dataset(s10, 5, 1);
  CHECK(d.size() == 5);
  for (const WindowedSample& w : d.samples) {
    CHECK(w.last == w.first + 4);
    CHECK(w.target == w.last + 1);
    CHECK(w.prev == w.target - 1);
  }
  CHECK(window_dataset(counting_series(7), 4, 3).size() == 1);
  const WindowedDataset far = window_dataset(s10, 2, 4);
  CHECK(far.size() == 10 - 2 - 4 + 1);
  for (const WindowedSample& w : far.samples) {
    CHECK(w.target == w.last + 4);
    CHECK(w.prev == w.target - 1);
  }
  for (std::size_t k = 1; k < d.samples.size(); ++k)
    CHECK(d.samples[k].first == d.samples[k - 1].first + 1);
  CHECK_THROWS_WITH_AS(window_dataset(counting_series(5), 5, 1),
                       doctest::Contains("insufficient frames"), ValidationError);
  CHECK_THROWS_AS(window_dataset(counting_series(0), 1, 1), ValidationError);

  const SampleInput in = d.input(d.samples[2]);
  REQUIRE(in.window.size() == 5);
  CHECK(in.window.front().front()(0, 0) == 23.0 + 2);
  CHECK(in.window.back().front()(0, 0) == 23.0 + 6);
  CHECK(d.target(d.samples[2])(0, 0) == 23.0 + 7);
}

TEST_CASE("chronological split") {
  const WindowedDataset d = window_dataset(counting_series(40), 3, 2);
  const DatasetSplit sp = split_dataset(d, 0.8);
  CHECK(sp.train.size() == Index(std::floor(0.8 * double(d.size()))));
  CHECK(sp.train.size() + sp.validation.size() == d.size());
  Index max_train = 0, min_val = 1 << 30;
  for (const auto& w : sp.train.samples) max_train = std::max(max_train, w.target);
  for (const auto& w : sp.validation.samples) min_val = std::min(min_val, w.target);
  CHECK(max_train < min_val);
  CHECK_THROWS_AS(split_dataset(d, 1.0), ValidationError);
}

TEST_CASE("metrics hand case") {
  Field target(1, 2), pred(1, 2);
  target << 100, 200;
  pred << 110, 190;
  const Metrics m = field_metrics(pred, target);
  CHECK(m.mse == 100.0);
  CHECK(m.mae == 10.0);
  CHECK(m.mape == 7.5);

  const Metrics zero = field_metrics(target, target);
  CHECK(zero.mse == 0.0);
  CHECK(zero.mae == 0.0);
  CHECK(zero.mape == 0.0);

  Field big(3, 4);
  big << 23, 40, 100, 512, 900, 1200, 77, 31, 64, 1800, 250, 33;
  const Field shifted = (big.array() - 2.5).matrix();
  CHECK(field_metrics(shifted, big).mae == 2.5);

  std::vector<Metrics> one{m};
  const Metrics avg = mean_metrics(one);
  CHECK(avg.mse == m.mse);
  CHECK(avg.mae == m.mae);
  CHECK(avg.mape == m.mape);
}

TEST_CASE("MAPE leaves out near-zero targets") {
  Field target(1, 3), pred(1, 3);
  target << 0.2, 100, -200;
  pred << 5.0, 110, -190;
  const Metrics m = field_metrics(pred, target);
  CHECK(m.mape == doctest::Approx((10.0 + 5.0) / 2));
  CHECK(m.mae == doctest::Approx((4.8 + 10 + 10) / 3));
  CHECK_THROWS_AS(field_metrics(Field::Ones(2, 2), Field::Zero(2, 2)), ValidationError);
  CHECK_THROWS_AS(field_metrics(Field::Ones(2, 2), Field::Ones(2, 3)), ValidationError);
  CHECK_THROWS_AS(mean_metrics({}), ValidationError);
}

TEST_CASE("adam one step by hand") {
  Adam adam({0.01});
  Array x = Array::Constant(1, 3.0);
  const Array g = Array::Ones(1);
  adam.step({&x}, {&g}, {"w"});
  // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1.
  const double expected = 3.0 - 0.01 * 1.0 / (1.0 + 1e-8);
  CHECK(x[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(adam.steps_taken() == 1);
  CHECK(adam.moments()[0].m[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(adam.moments()[0].v[0] == doctest::Approx(0.001).epsilon(1e-15));
}

TEST_CASE("adam with zero gradients leaves parameters and decays moments") {
  Adam adam({0.01});
  Array x = Array::Constant(2, 1.0);
  const Array zero = Array::Zero(2);
  adam.step({&x}, {&zero}, {"w"});
  CHECK((x == 1.0).all());

  Adam warm({0.01});
  Array y = Array::Constant(1, 1.0);
  const Array g = Array::Constant(1, 2.0);
  warm.step({&y}, {&g}, {"w"});
  const double m1 = warm.moments()[0].m[0], v1 = warm.moments()[0].v[0];
  const Array empty;
  warm.step({&y}, {&empty}, {"w"});
  CHECK(warm.moments()[0].m[0] == doctest::Approx(0.9 * m1).epsilon(1e-15));
  CHECK(warm.moments()[0].v[0] == doctest::Approx(0.999 * v1).epsilon(1e-15));
}

TEST_CASE("adam step size approaches the learning rate") {
  const double lr = 1e-3;
  Adam adam({lr});
  Array x = Array::Zero(1);
  const Array g = Array::Constant(1, 0.37);
  double last = 0;
  for (int t = 0; t < 20000; ++t) {
    const double before = x[0];
    adam.step({&x}, {&g}, {"w"});
    last = before - x[0];
  }
  CHECK(last == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients without touching anything") {
  Adam adam({0.01});
  Array a = Array::Ones(2), b = Array::Ones(2);
  const Array ga = Array::Ones(2);
  Array gb = Array::Ones(2);
  gb[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(adam.step({&a, &b}, {&ga, &gb}, {"alpha", "beta"}),
                       doctest::Contains("beta"), NumericError);
  CHECK((a == 1.0).all());
  CHECK((b == 1.0).all());
  CHECK(adam.steps_taken() == 0);
}

TEST_CASE("zero learning rate leaves the parameters alone") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  const WindowedDataset d = window_dataset(series, 2, 1);
  TrainConfig tc = quick_train(3);
  tc.learning_rate = 0.0;
  tc.batch_size = d.size();  // epoch means do not depend on the shuffle
  const TrainResult r = train(d, c, tc);
  CHECK(r.checkpoint.params == init_params(c, tc.seed));
  REQUIRE(r.history.size() == 3);
  for (const EpochRecord& e : r.history) {
    CHECK(e.loss.l_data == doctest::Approx(r.history.front().loss.l_data).epsilon(1e-12));
    CHECK(e.loss.l_total == doctest::Approx(r.history.front().loss.l_total).epsilon(1e-12));
  }
}

TEST_CASE("micro training lowers the data loss") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  const WindowedDataset d = window_dataset(series, 2, 1);
  TrainConfig tc = quick_train(12);
  const TrainResult r = train(d, c, tc);
  REQUIRE(r.history.size() == 12);
  CHECK(r.history.back().loss.l_data < r.history.front().loss.l_data);
  CHECK(r.checkpoint.epochs == 12);
  CHECK(r.checkpoint.use_pi_loss);
}

TEST_CASE("weighted-sum identity holds every epoch") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  const TrainResult r = train(window_dataset(series, 2, 1), c, quick_train(4));
  const LossWeights& w = r.weights;
  CHECK(w.w_d == 1.0);
  for (const EpochRecord& e : r.history) {
    const LossBreakdown& l = e.loss;
    const double combo = weighted_total(w, l.l_pde, l.l_ic, l.l_bc, l.l_data);
    CHECK(std::abs(l.l_total - combo) <= 1e-12 * std::abs(l.l_total));
  }
}

TEST_CASE("balanced weights equalise the first batch") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  const WindowedDataset d = window_dataset(series, 2, 1);
  TrainConfig tc = quick_train(1);
  tc.batch_size = Index(d.size());  // one batch per epoch
  tc.learning_rate = 0.0;
  const TrainResult r = train(d, c, tc);
  const LossBreakdown& l = r.history.front().loss;
  if (l.l_pde > 0) CHECK(r.weights.w_p * l.l_pde == doctest::Approx(l.l_data));
  if (l.l_ic > 0) CHECK(r.weights.w_i * l.l_ic == doctest::Approx(l.l_data));
  if (l.l_bc > 0) CHECK(r.weights.w_b * l.l_bc == doctest::Approx(l.l_data));
}

TEST_CASE("switching off the physics loss") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  const WindowedDataset d = window_dataset(series, 2, 1);
  TrainConfig off = quick_train(3);
  off.use_pi_loss = false;
  const TrainResult a = train(d, c, off);
  for (const EpochRecord& e : a.history) {
    CHECK(e.loss.l_total == e.loss.l_data);
    CHECK(e.loss.l_pde > 0.0);
  }
  // Same trajectory as an explicit data-only weighting.
  TrainConfig data_only = quick_train(3);
  data_only.weights = LossWeights{0, 0, 0, 1};
  const TrainResult b = train(d, c, data_only);
  CHECK(a.checkpoint.params == b.checkpoint.params);
  // And different from the physics-informed run.
  const TrainResult full = train(d, c, quick_train(3));
  CHECK(!(full.checkpoint.params == a.checkpoint.params));
}

TEST_CASE("training is deterministic") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  const WindowedDataset d = window_dataset(series, 2, 1);
  TrainConfig tc = quick_train(2);
  tc.target_noise = 5.0;
  const TrainResult a = train(d, c, tc), b = train(d, c, tc);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    CHECK(a.history[k].loss.l_total == b.history[k].loss.l_total);
    CHECK(a.history[k].loss.l_data == b.history[k].loss.l_data);
  }
  tc.seed = 6;
  CHECK(encode_checkpoint(train(d, c, tc).checkpoint) != encode_checkpoint(a.checkpoint));
}

TEST_CASE("laser power can be learned") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  TrainConfig tc = quick_train(2);
  tc.train_laser_power = true;
  tc.learning_rate = 1e-2;
  const TrainResult r = train(window_dataset(series, 2, 1), c, tc);
  CHECK(std::isfinite(r.laser_power_scale));
  CHECK(r.laser_power_scale != 1.0);
}

TEST_CASE("train argument errors") {
  const auto series = test::micro_series();
  ModelConfig c = test::micro_config(*series);
  const WindowedDataset d = window_dataset(series, 2, 1);
  TrainConfig tc = quick_train(1);
  tc.split = 1.5;
  CHECK_THROWS_AS(train(d, c, tc), ValidationError);
  c.window = 3;
  CHECK_THROWS_AS(train(d, c, quick_train(1)), ValidationError);
}

TEST_CASE("evaluate on one sample equals the single-sample formulas") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  WindowedDataset d = window_dataset(series, 2, 1);
  Checkpoint ck;
  ck.config = c;
  ck.params = init_params(c, 4);
  ck.use_pi_input = true;
  d.samples.resize(1);
  const Metrics m = evaluate(ck, d);
  const Field p = predict(ck.params, c, d.input(d.samples[0]));
  const Metrics ref = field_metrics(p, d.target(d.samples[0]));
  CHECK(m.mse == ref.mse);
  CHECK(m.mae == ref.mae);
  CHECK(m.mape == ref.mape);
  d.samples.clear();
  CHECK_THROWS_AS(evaluate(ck, d), ValidationError);
}

TEST_CASE("default model configuration follows the data") {
  const auto series = test::micro_series();
  const ModelConfig c = default_model_config(*series, 3, 2);
  CHECK(c.window == 3);
  CHECK(c.horizon == 2);
  CHECK(c.t_min == series->physics.material.t_amb);
  CHECK(c.t_max == doctest::Approx(1.1 * series->process_temperature));
  CHECK(c.flux_norm == series->peak_flux);
}

TEST_CASE("median and seeds") {
  std::vector<Metrics> v{{3, 30, 0.3}, {1, 10, 0.1}, {2, 20, 0.2}};
  const Metrics m = median_metrics(v);
  CHECK(m.mse == 2);
  CHECK(m.mae == 20);
  CHECK(m.mape == 0.2);
  CHECK(replicate_seed(10, 0) == 10);
  CHECK(replicate_seed(10, 3) == (10 ^ 3));
}

TEST_CASE("study harnesses") {
  const auto series = test::micro_series();
  const ModelConfig c = test::micro_config(*series);
  TrainConfig tc = quick_train(1);
  StudyParams sp;
  sp.seeds = 1;

  sp.windows = {1};
  const StudyReport w = run_study(StudyKind::window, series, c, tc, sp);
  REQUIRE(w.rows.size() == 1);
  CHECK(w.rows[0].label == "w=1");

  const StudyReport ab = run_study(StudyKind::ablation, series, c, tc, sp);
  REQUIRE(ab.rows.size() == 4);
  CHECK(ab.rows[0].label == "ML Only");
  CHECK(ab.rows[1].label == "PI input");
  CHECK(ab.rows[2].label == "PI loss");
  CHECK(ab.rows[3].label == "PI input + PI loss");

  sp.ablation_rows = {"PI loss", "ML Only"};
  const StudyReport sub = run_study(StudyKind::ablation, series, c, tc, sp);
  REQUIRE(sub.rows.size() == 2);
  CHECK(sub.rows[0].label == "ML Only");
  CHECK(sub.rows[1].label == "PI loss");
  CHECK(sub.rows[1].metrics.mse == ab.rows[2].metrics.mse);
  sp.ablation_rows = {"PI everything"};
  CHECK_THROWS_WITH_AS(run_study(StudyKind::ablation, series, c, tc, sp),
                       doctest::Contains("PI everything"), ValidationError);
  sp.ablation_rows.clear();

  sp.sizes = {30, 5, 12};
  const StudyReport ds = run_study(StudyKind::datasize, series, c, tc, sp);
  REQUIRE(ds.rows.size() == 3);
  CHECK(ds.rows[0].label == "n=5");
  CHECK(ds.rows[1].label == "n=12");
  CHECK(ds.rows[2].label == "n=30");
  for (const StudyRow& r : ds.rows) {
    CHECK(r.per_seed.size() == 1);
    CHECK(r.seconds >= 0.0);
  }

  const auto j = nlohmann::json::parse(report_json(ab));
  CHECK(j.at("kind") == "ablation");
  REQUIRE(j.at("rows").size() == 4);
  for (const auto& row : j.at("rows")) {
    for (const char* key : {"label", "mse", "mae", "mape", "seconds"}) CHECK(row.contains(key));
  }
  std::istringstream csv(report_csv(ab));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "label,mse,mae,mape,seconds");
  int rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  CHECK(rows == 4);

  sp.windows = {};
  CHECK_THROWS_AS(run_study(StudyKind::window, series, c, tc, sp), ValidationError);
}

TEST_CASE("study errors name the grid point") {
  const auto series = test::micro_series(12);
  const ModelConfig c = test::micro_config(*series);
  StudyParams sp;
  sp.seeds = 1;
  sp.windows = {2, 20};
  CHECK_THROWS_WITH(run_study(StudyKind::window, series, c, quick_train(1), sp),
                    doctest::Contains("w=20"));
}

TEST_CASE("history csv") {
  std::vector<EpochRecord> h{{0, {1, 2, 3, 4, 5}}, {1, {0.5, 0.25, 0.125, 2, 3}}};
  std::istringstream csv(history_csv(h));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "epoch,l_data,l_pde,l_bc,l_ic,l_total");
  std::getline(csv, line);
  CHECK(line == "0,4,1,3,2,5");
}

}  // TEST_SUITE
