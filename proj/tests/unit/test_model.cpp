#include <doctest.h>

#include "micro.hpp"
#include "oracles.hpp"
#include "piconv/checkpoint.hpp"
#include "piconv/grad_check.hpp"
#include "piconv/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace piconv;
using piconv::test::random_field;

namespace {

Array random_array(Index n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(n);
  for (Index k = 0; k < n; ++k) a[k] = u(rng);
  return a;
}

ModelConfig small_config() {
  ModelConfig c;
  c.convlstm_layers = 2;
  c.conv_layers = 2;
  c.filters = 3;
  c.window = 3;
  c.flux_norm = 1e7;
  return c;
}

SampleInput random_sample(const ModelConfig& c, Index rows, Index cols, std::uint64_t seed) {
  SampleInput s;
  for (Index k = 0; k < c.window; ++k) {
    std::vector<Field> channels;
    for (Index ch = 0; ch < c.input_channels; ++ch)
      channels.push_back(random_field(rows, cols, seed + 17 * k + ch, 23, 1500));
    s.window.push_back(channels);
  }
  s.flux = random_field(rows, cols, seed + 1000, 0, 2e7);
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("piconv_unit_" + name);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("cell with zero parameters stays at zero") {
  Tape tape;
  const Index f = 3;
  Tensor x = tape.constant({1, 2, 5, 5}, random_array(50, 1));
  Tensor h = tape.zeros({1, f, 5, 5});
  Tensor c = tape.zeros({1, f, 5, 5});
  Tensor kernel = tape.zeros({4 * f, 2 + f, 3, 3});
  Tensor bias = tape.zeros({4 * f});
  CellOutput out = cell_forward(x, h, c, kernel, bias);
  CHECK((out.c.value() == 0.0).all());
  CHECK((out.h.value() == 0.0).all());
}

TEST_CASE("saturated forget gate carries the cell state") {
  Tape tape;
  const Index f = 2;
  Tensor x = tape.constant({1, 1, 4, 4}, random_array(16, 2));
  Tensor h = tape.constant({1, f, 4, 4}, random_array(32, 3));
  const Array cv = random_array(32, 4, -2, 2);
  Tensor c = tape.constant({1, f, 4, 4}, cv);
  const Array kv = random_array(4 * f * (1 + f) * 9, 5, -0.3, 0.3);
  Tensor kernel = tape.constant({4 * f, 1 + f, 3, 3}, kv);
  Array bv = Array::Zero(4 * f);
  bv.segment(f, f).setConstant(50.0);
  Tensor bias = tape.constant({4 * f}, bv);
  CellOutput out = cell_forward(x, h, c, kernel, bias);

  // Gates recomputed by hand from the same convolution.
  Tensor gates = conv2d(concat_channels(x, h), kernel, bias);
  const Array gv = gates.value();
  const Index plane = 16;
  for (Index ch = 0; ch < f; ++ch)
    for (Index p = 0; p < plane; ++p) {
      const double i = 1 / (1 + std::exp(-gv[ch * plane + p]));
      const double fg = 1 / (1 + std::exp(-gv[(f + ch) * plane + p]));
      const double g = std::tanh(gv[(2 * f + ch) * plane + p]);
      CHECK(1.0 - fg < 1e-20);
      CHECK(out.c.value()[ch * plane + p] ==
            doctest::Approx(cv[ch * plane + p] + i * g).epsilon(1e-15));
    }
}

TEST_CASE("cell gradient matches finite differences") {
  const Index f = 3;
  const Array xv = random_array(2 * 2 * 36, 6);
  const Array hv = random_array(2 * f * 36, 7);
  const Array cv = random_array(2 * f * 36, 8);
  const Array bv = random_array(4 * f, 9);
  const Shape ks{4 * f, 2 + f, 3, 3};
  auto loss = [&](Tape& tape, const Tensor& k) {
    CellOutput o = cell_forward(tape.constant({2, 2, 6, 6}, xv),
                                tape.constant({2, f, 6, 6}, hv),
                                tape.constant({2, f, 6, 6}, cv), k,
                                tape.constant({4 * f}, bv));
    return add(mean(square(o.h)), mean(mul(o.c, o.h)));
  };
  CHECK(grad_check(loss, ks, random_array(shape_size(ks), 10, -0.5, 0.5)) < 1e-6);
  auto loss_x = [&](Tape& tape, const Tensor& x) {
    CellOutput o = cell_forward(x, tape.constant({2, f, 6, 6}, hv),
                                tape.constant({2, f, 6, 6}, cv),
                                tape.constant(ks, random_array(shape_size(ks), 11, -0.5, 0.5)),
                                tape.constant({4 * f}, bv));
    return sum(square(o.c));
  };
  CHECK(grad_check(loss_x, {2, 2, 6, 6}, xv) < 1e-6);
}

TEST_CASE("cell shape errors") {
  Tape tape;
  Tensor x = tape.zeros({1, 1, 4, 4});
  Tensor h = tape.zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(cell_forward(x, h, h, tape.zeros({4, 3, 3, 3}), tape.zeros({4})),
                  ShapeError);
  CHECK_THROWS_AS(cell_forward(x, h, tape.zeros({1, 2, 4, 5}), tape.zeros({8, 3, 3, 3}),
                               tape.zeros({8})),
                  ShapeError);
}

TEST_CASE("forward preserves the frame shape") {
  for (Index channels : {1, 2}) {
    ModelConfig c = small_config();
    c.input_channels = channels;
    const ModelParams p = init_params(c, 3);
    for (auto [rows, cols] : {std::pair<Index, Index>{6, 9}, {11, 4}}) {
      const Field out = predict(p, c, random_sample(c, rows, cols, 5));
      CHECK(out.rows() == rows);
      CHECK(out.cols() == cols);
    }
  }
}

TEST_CASE("zero parameters give the denormalized head bias") {
  ModelConfig c = small_config();
  ModelParams p = init_params(c, 1);
  for (NamedArray& a : p.arrays) a.value.setZero();
  p.at("head.bias").value[0] = 0.37;
  const Field out = predict(p, c, random_sample(c, 7, 7, 8));
  CHECK((out.array() == c.denormalize(0.37)).all());
}

TEST_CASE("window order matters") {
  const ModelConfig c = small_config();
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 5 && !differs; ++seed) {
    const ModelParams p = init_params(c, seed);
    SampleInput s = random_sample(c, 6, 6, 40 + seed);
    const Field a = predict(p, c, s);
    std::swap(s.window[0], s.window[2]);
    const Field b = predict(p, c, s);
    differs = (a - b).cwiseAbs().maxCoeff() > 1e-9;
  }
  CHECK(differs);
}

TEST_CASE("forward input errors") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 1);
  SampleInput s = random_sample(c, 5, 5, 2);
  s.window.pop_back();
  CHECK_THROWS_AS(predict(p, c, s), ShapeError);
  SampleInput t = random_sample(c, 5, 5, 3);
  t.flux = Field::Zero(4, 5);
  CHECK_THROWS_AS(predict(p, c, t), ShapeError);
}

TEST_CASE("forward is deterministic and batch-consistent") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 11);
  const SampleInput a = random_sample(c, 6, 7, 1), b = random_sample(c, 6, 7, 2);
  const Field pa = predict(p, c, a), pa2 = predict(p, c, a);
  CHECK((pa.array() == pa2.array()).all());
  std::vector<const SampleInput*> both{&a, &b};
  const std::vector<Field> batch = predict_batch(p, c, both);
  CHECK((batch[0] - pa).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((batch[1] - predict(p, c, b)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero flux input differs from the true flux") {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 12);
  const SampleInput a = random_sample(c, 6, 6, 3);
  const Field with = predict(p, c, a, false);
  const Field without = predict(p, c, a, true);
  SampleInput z = a;
  z.flux.setZero();
  CHECK((without.array() == predict(p, c, z).array()).all());
  CHECK((with - without).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("normalization round trip") {
  const ModelConfig c;
  for (int k = 0; k <= 1000; ++k) {
    const double t = c.t_min + (c.t_max - c.t_min) * k / 1000.0;
    CHECK(std::abs(c.denormalize(c.normalize(t)) - t) <= 1e-12 * c.t_max);
  }
  CHECK(c.normalize(c.t_min) == 0.0);
  CHECK(c.normalize(c.t_max) == 1.0);
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.kernel_size = 4;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ModelConfig{};
  c.t_max = c.t_min;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = ModelConfig{};
  c.window = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("init is deterministic with the stated ranges") {
  ModelConfig c;  // 3 ConvLSTM layers, 10 filters
  const ModelParams a = init_params(c, 42), b = init_params(c, 42);
  CHECK(a == b);
  CHECK(!(a == init_params(c, 43)));
  for (Index l = 0; l < c.convlstm_layers; ++l) {
    const Array& bias = a.at("convlstm" + std::to_string(l) + ".bias").value;
    CHECK((bias.segment(0, c.filters) == 0.0).all());
    CHECK((bias.segment(c.filters, c.filters) == 1.0).all());
    CHECK((bias.segment(2 * c.filters, 2 * c.filters) == 0.0).all());
  }
  Index sampled = 0;
  for (const NamedArray& p : a.arrays) {
    if (p.shape.size() != 4) continue;
    const double bound = std::sqrt(1.0 / double(p.shape[1] * p.shape[2] * p.shape[3]));
    CHECK(p.value.abs().maxCoeff() <= bound);
    // Draws fill the range rather than collapsing onto a point.
    CHECK(p.value.abs().maxCoeff() > 0.8 * bound);
    sampled += p.value.size();
  }
  CHECK(sampled >= 10000);
}

TEST_CASE("layout names and shapes") {
  ModelConfig c = small_config();
  c.input_channels = 2;
  const auto layout = parameter_layout(c);
  CHECK(layout.front().first == "convlstm0.kernel");
  CHECK(layout.front().second == Shape{12, 5, 3, 3});
  CHECK(layout[2].second == Shape{12, 6, 3, 3});
  CHECK(layout[4].first == "conv0.kernel");
  CHECK(layout[4].second == Shape{3, 4, 3, 3});
  CHECK(layout.back().first == "head.bias");
}

TEST_CASE("micro-model parameter gradients") {
  const test::MicroCase mc = test::micro_case(3);
  for (const NamedArray& a : mc.params.arrays) {
    INFO(a.name);
    CHECK(test::micro_group_error(mc, a.name) < 1e-4);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint ck;
  ck.config = small_config();
  ck.config.t_max = 1980.0000000000002;
  ck.params = init_params(ck.config, 77);
  ck.params.arrays.front().value[0] = -0.0;
  ck.params.arrays.front().value[1] = 1e-310;
  ck.seed = 0xfeedfacecafebeefULL;
  ck.epochs = 17;
  ck.use_pi_loss = true;
  const auto path = temp_path("roundtrip.bin");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path, ck.config);
  CHECK(back.config == ck.config);
  CHECK(back.params == ck.params);
  CHECK(std::signbit(back.params.arrays.front().value[0]));
  CHECK(back.seed == ck.seed);
  CHECK(back.epochs == 17);
  CHECK(back.use_pi_loss);
  CHECK(!back.use_pi_input);
  CHECK(encode_checkpoint(back) == encode_checkpoint(ck));
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Checkpoint ck;
  ck.config = small_config();
  ck.params = init_params(ck.config, 1);
  const std::string bytes = encode_checkpoint(ck);
  for (std::size_t cut : {std::size_t(0), std::size_t(5), std::size_t(15), bytes.size() / 2,
                          bytes.size() - 1}) {
    INFO(cut);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), CorruptError);
  }
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), CorruptError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CorruptError);

  std::string version = bytes;
  version[8] = 9;
  CHECK_THROWS_WITH_AS(decode_checkpoint(version), doctest::Contains("version"),
                       ValidationError);

  const auto path = temp_path("truncated.bin");
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes.substr(0, bytes.size() - 8);
  }
  CHECK_THROWS_AS(load_checkpoint(path), CorruptError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.bin")), Error);
}

TEST_CASE("checkpoint configuration mismatch names the field") {
  Checkpoint ck;
  ck.config = small_config();
  ck.params = init_params(ck.config, 1);
  const auto path = temp_path("mismatch.bin");
  save_checkpoint(path, ck);
  ModelConfig other = ck.config;
  other.filters = 5;
  CHECK_THROWS_WITH_AS(load_checkpoint(path, other), doctest::Contains("'filters'"),
                       ValidationError);
  other = ck.config;
  other.window = 4;
  CHECK_THROWS_WITH_AS(load_checkpoint(path, other), doctest::Contains("'window'"),
                       ValidationError);
  CHECK(config_difference(ck.config, ck.config) == std::nullopt);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint arrays must match the configuration layout") {
  Checkpoint ck;
  ck.config = small_config();
  ck.params = init_params(ck.config, 1);
  ck.params.arrays.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(ck)), CorruptError);
}

}  // TEST_SUITE
