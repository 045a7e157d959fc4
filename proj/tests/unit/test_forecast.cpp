#include <doctest.h>

#include "micro.hpp"
#include "piconv/checkpoint.hpp"
#include "piconv/forecast.hpp"
#include "piconv/study.hpp"

#include <algorithm>

using namespace piconv;

namespace {

struct ForecastFixture {
  std::shared_ptr<const FrameSeries> series = test::micro_series();
  Checkpoint ck;

  explicit ForecastFixture(Index horizon = 1, std::uint64_t seed = 3) {
    ck.config = test::micro_config(*series, 2, horizon);
    ck.params = init_params(ck.config, seed);
    ck.use_pi_input = true;
  }

  std::vector<std::vector<Field>> window_at(Index first) const {
    return {series->channels[std::size_t(first)], series->channels[std::size_t(first + 1)]};
  }

  std::vector<Field> flux_from(Index n, Index count) const {
    return {series->flux.begin() + n, series->flux.begin() + n + count};
  }
};

}  // namespace

TEST_SUITE("forecast") {

TEST_CASE("one rolling step is a single prediction") {
  const ForecastFixture fx;
  const auto window = fx.window_at(20);
  const auto flux = fx.flux_from(22, 1);
  const std::vector<Field> r = rolling_predict(fx.ck, window, flux, 1);
  REQUIRE(r.size() == 1);
  const Field p = predict(fx.ck.params, fx.ck.config, SampleInput{window, flux[0]});
  CHECK(r[0] == p);
  CHECK(rolling_predict(fx.ck, window, flux, 0).empty());
}

TEST_CASE("rolling feeds predictions back") {
  const ForecastFixture fx;
  const auto window = fx.window_at(10);
  const auto flux = fx.flux_from(12, 3);
  const std::vector<Field> r = rolling_predict(fx.ck, window, flux, 3);
  REQUIRE(r.size() == 3);
  const Field second = predict(fx.ck.params, fx.ck.config,
                               SampleInput{{window[1], {r[0]}}, flux[1]});
  CHECK(r[1] == second);
  const Field third =
      predict(fx.ck.params, fx.ck.config, SampleInput{{{r[0]}, {r[1]}}, flux[2]});
  CHECK(r[2] == third);
}

TEST_CASE("rolling leaves the checkpoint untouched") {
  const ForecastFixture fx;
  const std::string before = encode_checkpoint(fx.ck);
  rolling_predict(fx.ck, fx.window_at(5), fx.flux_from(7, 4), 4);
  CHECK(encode_checkpoint(fx.ck) == before);
}

TEST_CASE("rolling argument errors") {
  const ForecastFixture fx;
  CHECK_THROWS_WITH_AS(rolling_predict(fx.ck, fx.window_at(5), fx.flux_from(7, 2), 3),
                       doctest::Contains("rolling prediction"), ValidationError);
  CHECK_THROWS_AS(rolling_predict(fx.ck, fx.window_at(5), fx.flux_from(7, 2), -1),
                  ValidationError);
  CHECK_THROWS_AS(rolling_predict(fx.ck, {fx.series->channels[5]}, fx.flux_from(7, 1), 1),
                  ValidationError);
  const ForecastFixture far(4);
  CHECK_THROWS_WITH_AS(rolling_predict(far.ck, far.window_at(5), far.flux_from(7, 1), 1),
                       doctest::Contains("horizon-1"), ValidationError);
}

TEST_CASE("direct at horizon one equals rolling one step") {
  const ForecastFixture fx;
  const auto window = fx.window_at(30);
  const auto flux = fx.flux_from(32, 1);
  CHECK(direct_predict(fx.ck, window, flux[0], 1) == rolling_predict(fx.ck, window, flux, 1)[0]);
  CHECK_THROWS_WITH_AS(direct_predict(fx.ck, window, flux[0], 3),
                       doctest::Contains("horizon 3"), ValidationError);
}

TEST_CASE("zero parameters predict a constant field at any horizon") {
  for (Index h : {1, 2, 5}) {
    ForecastFixture fx(h);
    for (NamedArray& a : fx.ck.params.arrays) a.value.setZero();
    const Field p = direct_predict(fx.ck, fx.window_at(3), fx.series->flux[10], h);
    CHECK((p.array() == p(0, 0)).all());
    CHECK(p(0, 0) == doctest::Approx(fx.ck.config.denormalize(0.0)));
  }
}

TEST_CASE("rolling metrics at horizon one equal plain evaluation") {
  const ForecastFixture fx;
  const WindowedDataset d = window_dataset(fx.series, 2, 1);
  const Metrics a = rolling_metrics(fx.ck, d), b = evaluate(fx.ck, d);
  CHECK(a.mse == doctest::Approx(b.mse).epsilon(1e-12));
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
  CHECK(a.mape == doctest::Approx(b.mape).epsilon(1e-12));
}

TEST_CASE("rolling metrics agree with rolling_predict") {
  const ForecastFixture fx;
  WindowedDataset d = window_dataset(fx.series, 2, 3);
  d.samples = {d.samples[7]};
  const WindowedSample& s = d.samples[0];
  const auto r = rolling_predict(fx.ck, fx.window_at(s.first), fx.flux_from(s.last + 1, 3), 3);
  const Metrics ref = field_metrics(r.back(), fx.series->frame(s.target));
  const Metrics m = rolling_metrics(fx.ck, d);
  CHECK(m.mse == doctest::Approx(ref.mse).epsilon(1e-12));
  CHECK(m.mae == doctest::Approx(ref.mae).epsilon(1e-12));
}

TEST_CASE("horizon study shape") {
  const ForecastFixture fx;
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  const HorizonStudy one = horizon_study(fx.series, {1}, fx.ck.config, tc, 1);
  REQUIRE(one.rolling.points.size() == 1);
  REQUIRE(one.direct.points.size() == 1);
  CHECK(one.rolling.points[0].metrics.mse ==
        doctest::Approx(one.direct.points[0].metrics.mse).epsilon(1e-12));

  const HorizonStudy two = horizon_study(fx.series, {3, 1}, fx.ck.config, tc, 1);
  REQUIRE(two.rolling.points.size() == 2);
  CHECK(two.rolling.points[0].horizon == 1);
  CHECK(two.rolling.points[1].horizon == 3);
  CHECK(two.direct.points[1].per_seed.size() == 1);

  const StudyReport rep = horizon_report(two);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].label == "rolling i=1");
  CHECK(rep.rows[3].label == "direct i=3");

  CHECK_THROWS_WITH_AS(horizon_study(fx.series, {2, 2}, fx.ck.config, tc, 1),
                       doctest::Contains("duplicate"), ValidationError);
  CHECK_THROWS_AS(horizon_study(fx.series, {}, fx.ck.config, tc, 1), ValidationError);
  CHECK_THROWS_AS(horizon_study(fx.series, {0}, fx.ck.config, tc, 1), ValidationError);
}

TEST_CASE("micro scenario: rolling error accumulates and direct beats rolling at 10") {
  const auto series = test::micro_series();
  const DatasetSplit split10 = split_dataset(window_dataset(series, 2, 10), 0.8);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 8;
  tc.learning_rate = 3e-3;
  std::vector<std::vector<double>> per_step(10);
  std::vector<Metrics> direct, rolling10;
  for (Index r = 0; r < 3; ++r) {
    TrainConfig run = tc;
    run.seed = replicate_seed(11, r);
    const DatasetSplit split1 = split_dataset(window_dataset(series, 2, 1), 0.8);
    const Checkpoint one = train(split1.train, test::micro_config(*series, 2, 1), run).checkpoint;
    std::vector<std::vector<Metrics>> steps(10);
    for (const WindowedSample& s : split10.validation.samples) {
      const SampleInput in = split10.validation.input(s);
      const std::vector<Field> flux(series->flux.begin() + s.last + 1,
                                    series->flux.begin() + s.last + 11);
      const auto frames = rolling_predict(one, in.window, flux, 10);
      for (Index k = 0; k < 10; ++k)
        steps[std::size_t(k)].push_back(field_metrics(frames[std::size_t(k)],
                                                      series->frame(s.last + 1 + k)));
    }
    for (std::size_t k = 0; k < 10; ++k) per_step[k].push_back(mean_metrics(steps[k]).mape);
    rolling10.push_back(rolling_metrics(one, split10.validation));
    const Checkpoint ten =
        train(split10.train, test::micro_config(*series, 2, 10), run).checkpoint;
    direct.push_back(evaluate(ten, split10.validation));
  }
  std::vector<double> medians;
  for (auto& v : per_step) {
    std::sort(v.begin(), v.end());
    medians.push_back(v[1]);
  }
  for (std::size_t k = 1; k < medians.size(); ++k) {
    INFO("step ", k + 1, ": ", medians[k], " after ", medians[k - 1]);
    CHECK(medians[k] >= medians[k - 1]);
  }
  CHECK(median_metrics(rolling10).mape == doctest::Approx(medians.back()).epsilon(1e-12));
  const double d = median_metrics(direct).mape, r = median_metrics(rolling10).mape;
  INFO("direct ", d, " rolling ", r);
  CHECK(d <= r);
}

}  // TEST_SUITE
