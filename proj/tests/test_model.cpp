#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "causecast/error.hpp"
#include "causecast/model.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace causecast;
namespace ct = causecast::testing;
using ct::compact_windows;
using ct::small_config;

namespace {

const ct::WindowSet& windows() {
  static const ct::WindowSet set = compact_windows(12, 5);
  return set;
}

Tensor param(ForecastModel& m, const std::string& name) {
  Tensor* t = m.params().find(name);
  if (t == nullptr) throw std::runtime_error("no parameter " + name);
  return *t;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

ErrorCategory category_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.category();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCategory::config;
}

}  // namespace

TEST(Batch, LayoutCarriesValuesMaskAndStatics) {
  const auto& ws = windows();
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  const std::size_t f = ws.catalog.size();
  const std::size_t width = 2 * f + ws.catalog.static_count();
  ASSERT_EQ(b.dense_input.shape(), (Shape{2, 24, width}));
  const DenseGrid& g = ws.windows[1].observation_grid;
  for (std::size_t h = 0; h < 24; ++h)
    for (std::size_t v = 0; v < f; ++v) {
      EXPECT_EQ(b.dense_input.at({1, h, f + v}), g.observed(h, v) ? 1.0 : 0.0);
      EXPECT_EQ(b.dense_input.at({1, h, v}), g.observed(h, v) ? g.value(h, v) : 0.0);
    }
  std::size_t expect = 0;
  for (const auto& o : ws.windows[0].observation.observations) expect += o.t < 24.0 ? 1 : 0;
  EXPECT_EQ(b.triplet_lengths[0], expect + ws.catalog.static_count());
}

TEST(Batch, EmptyAndMalformedWindowsRejected) {
  const auto& ws = windows();
  EXPECT_EQ(category_of([&] { make_batch({}, ws.catalog.size(), 2); }), ErrorCategory::empty_input);
  WindowPair short_window = ws.windows[0];
  short_window.observation_grid = DenseGrid(23, ws.catalog.size());
  EXPECT_EQ(category_of([&] { make_batch({&short_window}, ws.catalog.size(), ws.catalog.static_count()); }),
            ErrorCategory::window);
  EXPECT_EQ(category_of([&] { make_batch(ws.first(1), ws.catalog.size() + 1, ws.catalog.static_count()); }),
            ErrorCategory::dimension);
}

TEST(Encoders, OutputShapes) {
  const auto& ws = windows();
  const Batch b = make_batch(ws.first(3), ws.catalog.size(), ws.catalog.static_count());
  ForecastModel dense(small_config(ws.catalog, EncoderKind::dense, DecoderKind::dms), 1);
  ForecastModel trip(small_config(ws.catalog, EncoderKind::triplet, DecoderKind::dms), 1);
  EXPECT_EQ(dense.encode(b, {}).states.shape(), (Shape{3, 24, 8}));
  EXPECT_EQ(trip.encode(b, {}).states.shape(), (Shape{3, b.max_triplets, 8}));
  EXPECT_EQ(dense.forecast(b, {}).shape(), (Shape{3, 24, ws.catalog.size()}));
  EXPECT_EQ(trip.forecast(b, {}).shape(), (Shape{3, 24, ws.catalog.size()}));
}

TEST(Encoders, TripletIsPermutationEquivariant) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::triplet, DecoderKind::dms), 2);
  const Batch b = make_batch(ws.first(1), ws.catalog.size(), ws.catalog.static_count());
  const std::size_t n = b.triplet_lengths[0];
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 7 + 3) % n;
  ASSERT_EQ(std::gcd(n, std::size_t{7}), 1u) << "choose another stride";
  Batch p = b;
  for (std::size_t i = 0; i < n; ++i) {
    p.triplet_time[i] = b.triplet_time[perm[i]];
    p.triplet_var[i] = b.triplet_var[perm[i]];
    p.triplet_value[i] = b.triplet_value[perm[i]];
  }
  const Tensor a = m.encode(b, {}).states;
  const Tensor c = m.encode(p, {}).states;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 8; ++k) worst = std::max(worst, std::abs(c.at({0, i, k}) - a.at({0, perm[i], k})));
  EXPECT_LT(worst, 1e-12);
  // Forecasts only see the set of triplets.
  EXPECT_LT(max_abs_diff(m.forecast(b, {}).values(), m.forecast(p, {}).values()), 1e-12);
}

TEST(Encoders, TripletSeesObservationTimes) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::triplet, DecoderKind::dms), 3);
  const Batch b = make_batch(ws.first(1), ws.catalog.size(), ws.catalog.static_count());
  Batch shuffled = b;
  for (std::size_t i = 0; i < b.triplet_lengths[0]; ++i)
    if (b.triplet_var[i] < ws.catalog.size()) shuffled.triplet_time[i] = std::fmod(b.triplet_time[i] + 0.5, 1.0);
  EXPECT_GT(max_abs_diff(m.forecast(b, {}).values(), m.forecast(shuffled, {}).values()), 1e-6);
}

TEST(Encoders, DenseSeesHourOrder) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::dense, DecoderKind::dms), 3);
  const Batch b = make_batch(ws.first(1), ws.catalog.size(), ws.catalog.static_count());
  Batch rev = b;
  const std::size_t width = b.dense_input.dim(2);
  std::vector<double> data(b.dense_input.values().begin(), b.dense_input.values().end());
  std::vector<double> flipped(data.size());
  for (std::size_t h = 0; h < 24; ++h)
    std::copy_n(data.begin() + (23 - h) * width, width, flipped.begin() + h * width);
  rev.dense_input = Tensor(b.dense_input.shape(), flipped);
  EXPECT_GT(max_abs_diff(m.forecast(b, {}).values(), m.forecast(rev, {}).values()), 1e-6);
}

TEST(Encoders, TripletWithNothingObservedIsEmptyInput) {
  const auto& ws = windows();
  WindowPair w = ws.windows[0];
  w.observation.observations.clear();
  for (double& s : w.observation.statics) s = std::nan("");
  ForecastModel m(small_config(ws.catalog, EncoderKind::triplet, DecoderKind::dms), 1);
  const Batch b = make_batch({&w}, ws.catalog.size(), ws.catalog.static_count());
  EXPECT_EQ(category_of([&] { m.encode(b, {}); }), ErrorCategory::empty_input);
  // The dense encoder accepts an all-masked window.
  ForecastModel d(small_config(ws.catalog, EncoderKind::dense, DecoderKind::dms), 1);
  EXPECT_EQ(d.forecast(b, {}).numel(), 24 * ws.catalog.size());
}

TEST(Encoders, PaddingDoesNotLeak) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::triplet, DecoderKind::dms), 4);
  const WindowPair* shortest = &ws.windows[0];
  const WindowPair* longest = &ws.windows[0];
  for (const auto& w : ws.windows) {
    if (w.observation.observations.size() < shortest->observation.observations.size()) shortest = &w;
    if (w.observation.observations.size() > longest->observation.observations.size()) longest = &w;
  }
  const Batch alone = make_batch({shortest}, ws.catalog.size(), ws.catalog.static_count());
  const std::vector<const WindowPair*> pair = {shortest, longest};
  const Batch padded = make_batch(pair, ws.catalog.size(), ws.catalog.static_count());
  ASSERT_GT(padded.max_triplets, alone.max_triplets);
  const Tensor a = m.forecast(alone, {});
  const Tensor p = m.forecast(padded, {});
  EXPECT_LT(max_abs_diff(a.values(), p.values().subspan(0, a.numel())), 1e-12);
}

TEST(Encoders, GradientsMatchFiniteDifferences) {
  const auto& ws = windows();
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  for (EncoderKind kind : {EncoderKind::dense, EncoderKind::triplet}) {
    ModelConfig c = small_config(ws.catalog, kind, DecoderKind::dms);
    c.embedding_size = 4;
    c.hidden_size_encoder = 6;
    c.hidden_size_dms_decoder = 6;
    ForecastModel m(c, 9);
    auto loss = [&] { return ops::masked_squared_error(m.forecast(b, {}), b.target, b.target_mask); };
    std::vector<Tensor> probe = {param(m, "encoder.layer0.attn.q.weight"), param(m, "encoder.layer0.ffn.up.weight")};
    probe.push_back(kind == EncoderKind::dense ? param(m, "encoder.input.weight") : param(m, "encoder.variables"));
    EXPECT_LT(ct::gradient_error(loss, probe), 1e-5) << encoder_name(kind);
  }
}

TEST(Decoders, DmsStepsAreIndependent) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::dense, DecoderKind::dms), 6);
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  const std::size_t f = ws.catalog.size();
  const std::size_t t = 7;
  m.params().zero_grad();
  const Tensor y = m.forecast(b, {});
  ops::sum_all(ops::slice(y, 1, t, t + 1)).backward();
  Tensor q = m.dms().queries();
  ASSERT_TRUE(q.has_grad());
  for (std::size_t s = 0; s < 24; ++s) {
    double norm = 0.0;
    for (std::size_t k = 0; k < 8; ++k) norm += std::abs(q.grad()[s * 8 + k]);
    if (s == t)
      EXPECT_GT(norm, 0.0);
    else
      EXPECT_EQ(norm, 0.0) << "step " << s;
  }
  // Perturbing another step's query leaves step t bit-identical.
  q.values_mut()[3 * 8 + 1] += 0.5;
  const Tensor y2 = m.forecast(b, {});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t v = 0; v < f; ++v) EXPECT_EQ(y.at({i, t, v}), y2.at({i, t, v}));
}

TEST(Decoders, ImsIsCausal) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::dense, DecoderKind::ims), 7);
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  const Memory mem = m.encode(b, {});
  Rng rng(1);
  const Tensor in = ct::random_tensor({2, 24, ws.catalog.size()}, rng, false);
  const auto base = m.ims().run_inputs(mem, in, {});
  for (std::size_t t : {0u, 5u, 22u}) {
    std::vector<double> data(in.values().begin(), in.values().end());
    const std::size_t f = ws.catalog.size();
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t s = t + 1; s < 24; ++s)
        for (std::size_t v = 0; v < f; ++v) data[(i * 24 + s) * f + v] += 1.0 + rng.uniform();
    const auto moved = m.ims().run_inputs(mem, Tensor(in.shape(), data), {});
    for (std::size_t s = 0; s <= t; ++s)
      EXPECT_EQ(max_abs_diff(base[s].values(), moved[s].values()), 0.0) << "t=" << t << " s=" << s;
    EXPECT_GT(max_abs_diff(base[t + 1].values(), moved[t + 1].values()), 0.0);
  }
  // Incremental decoding of a prefix agrees with the full run.
  const auto prefix = m.ims().run_inputs(mem, ops::slice(in, 1, 0, 10), {});
  for (std::size_t s = 0; s < 10; ++s) EXPECT_EQ(max_abs_diff(prefix[s].values(), base[s].values()), 0.0);
}

TEST(Decoders, TeacherAndStudentAgreeWhenGoldIsOwnPrediction) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::triplet, DecoderKind::ims), 8);
  const Batch b = make_batch(ws.first(3), ws.catalog.size(), ws.catalog.static_count());
  const Tensor own = m.forecast(b, {});
  HistoryPlan teacher{3, 24, std::vector<std::uint8_t>(72, 1)};
  HistoryPlan mixed{3, 24, std::vector<std::uint8_t>(72, 0)};
  for (std::size_t i = 0; i < 72; i += 3) mixed.teacher[i] = 1;
  const Tensor gold = own.detach();
  ImsOptions tf;
  tf.history = &teacher;
  tf.gold = &gold;
  EXPECT_LT(max_abs_diff(stack_steps(m.ims_steps(b, {}, tf)).values(), own.values()), 1e-12);
  tf.history = &mixed;
  EXPECT_LT(max_abs_diff(stack_steps(m.ims_steps(b, {}, tf)).values(), own.values()), 1e-12);
}

TEST(Decoders, GradientProbeFollowsHistorySource) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::dense, DecoderKind::ims), 10);
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  HistoryPlan teacher{2, 24, std::vector<std::uint8_t>(48, 1)};
  auto probe = [&](const HistoryPlan* plan, bool bp) {
    ImsOptions o;
    o.history = plan;
    o.backprop_predictions = bp;
    o.steps = 2;
    const auto steps = m.ims_steps(b, {}, o);
    const Tensor loss = ops::sum_all(ops::mul(steps[1], steps[1]));
    loss.backward();
    double norm = 0.0;
    if (steps[0].has_grad())
      for (double g : steps[0].grad()) norm += g * g;
    return std::sqrt(norm);
  };
  EXPECT_EQ(probe(&teacher, true), 0.0);
  EXPECT_EQ(probe(nullptr, false), 0.0);
  EXPECT_GT(probe(nullptr, true), 0.0);
}

TEST(Decoders, ImsGradientsMatchFiniteDifferences) {
  const auto& ws = windows();
  ModelConfig c = small_config(ws.catalog, EncoderKind::dense, DecoderKind::ims);
  c.embedding_size = 4;
  c.hidden_size_encoder = 4;
  ForecastModel m(c, 11);
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  ImsOptions o;
  o.steps = 4;
  auto loss = [&] {
    return ops::masked_squared_error(stack_steps(m.ims_steps(b, {}, o)), ops::slice(b.target, 1, 0, 4),
                                     ops::slice(b.target_mask, 1, 0, 4));
  };
  EXPECT_LT(ct::gradient_error(loss, {param(m, "ims.start"), param(m, "ims.layer0.self.q.weight"),
                                           param(m, "ims.layer0.cross.k.weight"), param(m, "encoder.input.bias")}),
            1e-5);
}

TEST(Decoders, ClampFixesFedBackChannel) {
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::dense, DecoderKind::ims), 12);
  const Batch b = make_batch(ws.first(2), ws.catalog.size(), ws.catalog.static_count());
  const std::size_t drug = ws.catalog.size() - 1;
  ImsOptions lo, hi;
  lo.clamp = std::make_pair(drug, -1.0);
  hi.clamp = std::make_pair(drug, 2.0);
  const Tensor a = m.forecast(b, {}, lo);
  const Tensor c = m.forecast(b, {}, hi);
  // Step 0 reads only the start token; later steps see the clamped channel.
  for (std::size_t v = 0; v < ws.catalog.size(); ++v) EXPECT_EQ(a.at({0, 0, v}), c.at({0, 0, v}));
  EXPECT_GT(std::abs(a.at({0, 5, 0}) - c.at({0, 5, 0})), 0.0);
}

TEST(Decoders, MovingAverageReplicatesEdges) {
  const auto m = moving_average_matrix(24, 25);
  for (std::size_t i = 0; i < 24; ++i) {
    double col = 0.0;
    for (std::size_t j = 0; j < 24; ++j) col += m[j * 24 + i];
    EXPECT_NEAR(col, 1.0, 1e-15);
  }
  // Output 0 averages x0 x 13 (12 replicated + itself) and x1..x12.
  EXPECT_NEAR(m[0], 13.0 / 25.0, 1e-15);
  EXPECT_NEAR(m[12 * 24 + 0], 1.0 / 25.0, 1e-15);
  EXPECT_EQ(m[13 * 24 + 0], 0.0);
  // Output 12 sees x0 (replicated once) to x23 plus x23 once more.
  EXPECT_NEAR(m[0 * 24 + 12], 1.0 / 25.0, 1e-15);
  EXPECT_NEAR(m[23 * 24 + 12], 2.0 / 25.0, 1e-15);
}

TEST(Decoders, LinearFamiliesKeepConstantInputsConstant) {
  const auto& ws = windows();
  Batch b = make_batch(ws.first(1), ws.catalog.size(), ws.catalog.static_count());
  const std::size_t f = ws.catalog.size();
  std::vector<double> x(24 * f);
  for (std::size_t h = 0; h < 24; ++h)
    for (std::size_t v = 0; v < f; ++v) x[h * f + v] = 0.25 * static_cast<double>(v) - 0.4;
  b.obs_values = Tensor({1, 24, f}, x);
  ForecastModel dl(small_config(ws.catalog, EncoderKind::dense, DecoderKind::dlinear), 1);
  const Tensor y = dl.forecast(b, {});
  for (std::size_t h = 0; h < 24; ++h)
    for (std::size_t v = 0; v < f; ++v) EXPECT_NEAR(y.at({0, h, v}), x[v], 1e-12);

  ForecastModel lin(small_config(ws.catalog, EncoderKind::dense, DecoderKind::linear), 1);
  auto w = param(lin, "linear.weight").values_mut();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t i = 0; i < 24; ++i) w[i * 24 + i] = 1.0;
  const Tensor z = lin.forecast(b, {});
  for (std::size_t h = 0; h < 24; ++h)
    for (std::size_t v = 0; v < f; ++v) EXPECT_EQ(z.at({0, h, v}), x[v]);
}

TEST(ModelConfig, InvalidCombinationsRejected) {
  const auto& ws = windows();
  ModelConfig c = small_config(ws.catalog, EncoderKind::triplet, DecoderKind::linear);
  EXPECT_EQ(category_of([&] { ForecastModel m(c, 1); }), ErrorCategory::config);
  c = small_config(ws.catalog, EncoderKind::dense, DecoderKind::dms);
  c.attention_heads_encoder = 3;
  EXPECT_EQ(category_of([&] { ForecastModel m(c, 1); }), ErrorCategory::config);
  c = small_config(ws.catalog, EncoderKind::dense, DecoderKind::ims);
  c.attention_heads_ims_decoder = 3;  // 4 variables
  EXPECT_EQ(category_of([&] { ForecastModel m(c, 1); }), ErrorCategory::config);
  EXPECT_EQ(category_of([] { parse_decoder("lstm"); }), ErrorCategory::config);
}

TEST(Checkpoint, RoundTripIsLossless) {
  const auto& ws = windows();
  const auto dir = std::filesystem::temp_directory_path() / "causecast_ckpt_test";
  std::filesystem::create_directories(dir);
  const Batch b = make_batch(ws.first(3), ws.catalog.size(), ws.catalog.static_count());
  for (DecoderKind dec : {DecoderKind::dms, DecoderKind::ims, DecoderKind::dlinear}) {
    ModelConfig c = small_config(ws.catalog, EncoderKind::dense, dec);
    ForecastModel m(c, 21);
    Rng rng(3);
    for (auto& [name, t] : m.params().entries())
      for (double& v : t.values_mut()) v += rng.normal(0.0, 1e-3) * std::sqrt(2.0);
    const auto path = dir / "m.ckpt";
    save_checkpoint(path, m, {{"note", "x"}});
    const LoadedCheckpoint ck = read_checkpoint(path);
    EXPECT_EQ(ck.metadata.at("note"), "x");
    ForecastModel back = load_model(ck);
    ASSERT_EQ(back.params().entries().size(), m.params().entries().size());
    for (std::size_t i = 0; i < m.params().entries().size(); ++i) {
      const auto a = m.params().entries()[i].second.values();
      const auto z = back.params().entries()[i].second.values();
      ASSERT_TRUE(std::equal(a.begin(), a.end(), z.begin()));
    }
    const Tensor y1 = m.forecast(b, {});
    const Tensor y2 = back.forecast(b, {});
    EXPECT_TRUE(std::equal(y1.values().begin(), y1.values().end(), y2.values().begin()));
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto dir = std::filesystem::temp_directory_path() / "causecast_ckpt_bad";
  std::filesystem::create_directories(dir);
  const auto& ws = windows();
  ForecastModel m(small_config(ws.catalog, EncoderKind::dense, DecoderKind::linear), 1);
  save_checkpoint(dir / "good.ckpt", m, nlohmann::json::object());
  std::ifstream in(dir / "good.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  {
    std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 5);
  }
  {
    std::ofstream out(dir / "magic.ckpt", std::ios::binary);
    out << "NOTACKPT" << bytes.substr(8);
  }
  EXPECT_EQ(category_of([&] { read_checkpoint(dir / "trunc.ckpt"); }), ErrorCategory::io);
  EXPECT_EQ(category_of([&] { read_checkpoint(dir / "magic.ckpt"); }), ErrorCategory::io);
  EXPECT_EQ(category_of([&] { read_checkpoint(dir / "missing.ckpt"); }), ErrorCategory::io);
  std::filesystem::remove_all(dir);
}
