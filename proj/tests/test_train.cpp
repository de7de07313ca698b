#include <doctest.h>

#include <fstream>
#include <cstring>
#include <set>

#include "dydec/checkpoint.hpp"
#include "dydec/gradcheck.hpp"
#include "dydec/graph.hpp"
#include "dydec/synth.hpp"
#include "dydec/train.hpp"
#include "helpers.hpp"

using namespace dydec;

namespace {

constexpr Eigen::Index kSamples = 1024;

Model small_model(std::uint64_t seed = 1, NormMode norm = NormMode::egnorm) {
  ModelConfig c = miniature_model_config(3, 33, 8000.0);
  c.frontend.norm = norm;
  c.backbone.stages = {{2, 6}, {2, 4}};
  c.backbone.lowpass_len = 7;
  return init_model(c, seed, kSamples);
}

std::vector<Example> small_examples(const Model& m, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Example> out;
  const double len = static_cast<double>(kSamples) / 8000.0;
  for (int i = 0; i < n; ++i) {
    AudioClip clip{testutil::random_vector(kSamples, rng, -0.3, 0.3), 8000.0};
    std::vector<EventLabel> ev;
    const int k = 1 + static_cast<int>(rng() % 3);
    for (int e = 0; e < k; ++e) {
      const double a = std::uniform_real_distribution<double>(0.0, len * 0.6)(rng);
      ev.push_back({a, a + len * 0.3, 0});
      clip.samples.segment(static_cast<Eigen::Index>(a * 8000.0), 300).array() += 0.5;
    }
    out.push_back(make_example("c" + std::to_string(i), clip, ev, m));
  }
  return out;
}

std::vector<const Example*> ptrs(const std::vector<Example>& v) {
  std::vector<const Example*> p;
  for (const auto& e : v) p.push_back(&e);
  return p;
}

bool same_bits(const Model& a, const Model& b) {
  const Vector x = pack_parameters(a), y = pack_parameters(b);
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), sizeof(double) * x.size()) == 0;
}

Vector non_frontend(const Model& g) {
  std::vector<double> v;
  Model copy = g;
  visit_parameters(copy, [&](double& x, ParamKind k) {
    if (!is_frontend(k)) v.push_back(x);
  });
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("learning-rate schedule halves every 20 epochs") {
  const TrainConfig c;
  CHECK(learning_rate_at(c, 0) == 0.001);
  CHECK(learning_rate_at(c, 19) == 0.001);
  CHECK(learning_rate_at(c, 20) == 0.0005);
  CHECK(learning_rate_at(c, 45) == 0.00025);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(validate_train_config(c), Error);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(validate_train_config(c), Error);
}

TEST_CASE("adam: first step from zero state is lr * g / (|g| + eps)") {
  Model m = small_model();
  Model g = zeros_like(m);
  std::mt19937_64 rng(3);
  Vector gv = testutil::random_vector(static_cast<Eigen::Index>(parameter_count(m)), rng);
  gv[5] = 0.0;
  unpack_parameters(g, gv);
  TrainConfig c;
  c.normalized_cutoffs = false;
  const Vector before = pack_parameters(m);
  AdamState s;
  adam_step(m, g, s, 1e-3, c);
  const Vector after = pack_parameters(m);
  CHECK(s.step == 1);
  Vector expect(gv.size());
  for (Eigen::Index i = 0; i < gv.size(); ++i) expect[i] = before[i] - 1e-3 * gv[i] / (std::abs(gv[i]) + 1e-8);
  // Parameters pushed past a feasibility bound come back through the clamp.
  Model clamped = small_model();
  unpack_parameters(clamped, expect);
  clamp_model(clamped);
  const Vector bounded = pack_parameters(clamped);
  CHECK(after[5] == before[5]);
  for (Eigen::Index i = 0; i < gv.size(); ++i)
    CHECK(std::abs(after[i] - bounded[i]) <= 1e-15 * std::max(1.0, std::abs(bounded[i])));
}

TEST_CASE("adam: zero gradients leave parameters alone while moments decay") {
  Model m = small_model();
  const Vector before = pack_parameters(m);
  const auto n = static_cast<Eigen::Index>(before.size());
  AdamState s;
  s.m = Vector::Zero(n);
  s.v = Vector::Constant(n, 0.25);
  s.step = 3;
  adam_step(m, zeros_like(m), s, 1e-3, TrainConfig{});
  CHECK(same_bits(m, small_model()));
  CHECK(s.m.isZero());
  CHECK((s.v.array() == 0.999 * 0.25).all());
}

TEST_CASE("forward_backward: predictions equal to targets give zero loss and gradients") {
  const Model m = small_model();
  auto ex = small_examples(m, 3, 5);
  for (auto& e : ex) {
    e.density = predict(m, e.clip).frame_scores;
    e.count = e.density.sum();
  }
  const StepResult r = forward_backward(m, ptrs(ex));
  CHECK(r.loss == 0.0);
  CHECK(pack_parameters(r.grads).isZero());
}

TEST_CASE("forward_backward: the tape loss equals the inference-path loss") {
  const Model m = small_model();
  const auto ex = small_examples(m, 3, 6);
  const StepResult r = forward_backward(m, ptrs(ex));
  double loss = 0.0;
  for (const auto& e : ex) loss += (predict(m, e.clip).frame_scores - e.density).squaredNorm() / e.density.size();
  CHECK(r.loss == doctest::Approx(loss / 3.0).epsilon(1e-12));
}

TEST_CASE("forward_backward: a frozen front end leaves backbone gradients unchanged") {
  const Model m = small_model();
  const auto ex = small_examples(m, 2, 7);
  const StepResult full = forward_backward(m, ptrs(ex));

  // Backbone-only backprop from a constant time-frequency input.
  Model grads = zeros_like(m);
  GradTape fe_tape;
  std::vector<Matrix> input;
  for (const auto& e : ex) input.push_back(Eigen::Map<const Matrix>(e.clip.samples.data(), 1, kSamples));
  Model discard = zeros_like(m);
  const FrontendOutputs fe = frontend_graph(fe_tape, m, discard, make_var(input, false), true);
  GradTape tape;
  const Var tf = make_var(fe.tf->value, false);
  const Var scores = backbone_graph(tape, m, grads, tf);
  auto& gs = scores->grad_buffer();
  for (std::size_t b = 0; b < ex.size(); ++b) {
    const double frames = static_cast<double>(scores->value[b].cols());
    gs[b] = (scores->value[b] - ex[b].density.transpose()) * (2.0 / frames / static_cast<double>(ex.size()));
  }
  tape.backward();
  const Vector a = non_frontend(full.grads), b = non_frontend(grads);
  REQUIRE(a.size() == b.size());
  CHECK(a.cwiseAbs().maxCoeff() > 0.0);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-14 * a.cwiseAbs().maxCoeff());
  // Zeroing the front-end gradients is all that freezing does to the update.
  const Vector all = pack_parameters(full.grads);
  const auto kinds = parameter_kinds(m);
  for (std::size_t i = 0; i < kinds.size(); ++i)
    if (is_frontend(kinds[i])) CHECK(std::isfinite(all[static_cast<Eigen::Index>(i)]));
}

TEST_CASE("forward_backward: gradients agree with finite differences for every parameter kind") {
  GradCheckOptions opt;
  opt.samples = 2048;
  opt.per_kind = 1;
  opt.seed = 3;
  for (const auto& row : check_training(opt)) {
    INFO(row.check << " " << row.param << " analytic " << row.analytic << " numeric " << row.numeric);
    CHECK(row.pass);
  }
}

TEST_CASE("forward_backward: a non-finite loss aborts with the offending clip") {
  const Model m = small_model();
  auto ex = small_examples(m, 2, 8);
  ex[1].density[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    forward_backward(m, ptrs(ex));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("c1") != std::string::npos);
  }
}

TEST_CASE("memorization: full-batch loss falls at every one of the first 20 steps") {
  DatasetConfig dc;
  dc.quotas = {{1, 4}, {2, 4}};
  dc.classes = {0};
  dc.duration_s = 2.0;
  dc.sample_rate = 8000.0;
  dc.event_budget = 4;
  dc.seed = 3;
  const auto clips = synthesize_dataset(dc);
  int decreasing = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Model m = init_model(miniature_model_config(3, 65, 8000.0), seed, 16000);
    std::vector<Example> ex;
    for (const auto& c : clips) ex.push_back(make_example(c.clip_id, c.scene.mix, c.scene.labels, m));
    std::vector<const Example*> batch;
    for (const auto& e : ex) batch.push_back(&e);
    TrainConfig tc;
    tc.batch_size = 8;
    TrainState st = init_train_state(m);
    double prev = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (int step = 0; step < 20; ++step) {
      const double loss = train_step(st, batch, tc);
      ok = ok && loss < prev;
      prev = loss;
    }
    decreasing += ok;
  }
  CHECK(decreasing >= 9);
}

TEST_CASE("split and epoch order are seeded permutations") {
  const Split s = split_dataset(50, 0.2, 9);
  CHECK(s.val.size() == 10);
  CHECK(s.train.size() == 40);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  CHECK(all.size() == 50);
  CHECK(split_dataset(50, 0.2, 9).val == s.val);
  CHECK(split_dataset(50, 0.2, 10).val != s.val);
  const auto o = epoch_order(30, 4, 2);
  CHECK(o == epoch_order(30, 4, 2));
  CHECK(o != epoch_order(30, 4, 3));
  CHECK(std::set<std::size_t>(o.begin(), o.end()).size() == 30);
}

TEST_CASE("train_loop: one epoch on two clips writes a history file") {
  const Model m = small_model();
  const auto ex = small_examples(m, 2, 10);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 2;
  c.val_fraction = 0.0;
  TrainState st = init_train_state(m);
  const TrainHistory h = train_loop(st, ex, split_dataset(2, 0.0, 0), c);
  CHECK(h.steps.size() == 1);
  CHECK(h.evals.size() == 1);
  CHECK(std::isfinite(st.best_score));
  const auto dir = testutil::temp_dir("history");
  write_history_csv(dir / "history.csv", h);
  std::ifstream in(dir / "history.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "epoch,step,lr,loss");
  CHECK(row.rfind("0,1,0.001,", 0) == 0);
}

TEST_CASE("train_loop: identical seeds give identical trajectories") {
  const Model m = small_model();
  const auto ex = small_examples(m, 6, 11);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.val_fraction = 0.3;
  c.seed = 4;
  auto run = [&] {
    TrainState st = init_train_state(m);
    return std::pair{train_loop(st, ex, split_dataset(ex.size(), c.val_fraction, c.seed), c), st};
  };
  const auto [h1, s1] = run();
  const auto [h2, s2] = run();
  REQUIRE(h1.steps.size() == h2.steps.size());
  for (std::size_t i = 0; i < h1.steps.size(); ++i) CHECK(h1.steps[i].loss == h2.steps[i].loss);
  CHECK(same_bits(s1.model, s2.model));
  CHECK(!std::isnan(h1.evals.back().val_mae));
}

TEST_CASE("train_loop: resuming from a checkpoint reproduces the next step bit for bit") {
  const Model m = small_model(2);
  const auto ex = small_examples(m, 5, 12);
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  c.val_fraction = 0.0;
  c.seed = 8;
  const Split sp = split_dataset(ex.size(), 0.0, c.seed);

  TrainState straight = init_train_state(m);
  const TrainHistory full = train_loop(straight, ex, sp, c);

  TrainConfig first = c;
  first.max_steps = 4;  // stops mid-epoch
  TrainState st = init_train_state(m);
  train_loop(st, ex, sp, first);
  const auto dir = testutil::temp_dir("resume");
  save_checkpoint(dir / "ck.bin", {first, st, {}});
  Checkpoint ck = load_checkpoint(dir / "ck.bin");
  CHECK(same_bits(ck.state.model, st.model));
  CHECK(ck.state.batch_in_epoch == st.batch_in_epoch);
  const TrainHistory rest = train_loop(ck.state, ex, sp, c);
  REQUIRE(!rest.steps.empty());
  CHECK(rest.steps.front().step == 5);
  CHECK(rest.steps.front().loss == full.steps[4].loss);
  CHECK(rest.steps.back().loss == full.steps.back().loss);
  CHECK(same_bits(ck.state.model, straight.model));
}

TEST_CASE("clamp safety: invariants survive aggressive updates") {
  Model m = small_model(3);
  const auto ex = small_examples(m, 4, 13);
  TrainConfig c;
  c.learning_rate = 0.5;
  c.epochs = 3;
  c.batch_size = 2;
  c.val_fraction = 0.0;
  TrainState st = init_train_state(m);
  train_loop(st, ex, split_dataset(4, 0.0, 0), c);
  for (const auto& level : st.model.tree.levels) {
    for (const auto& node : level) {
      CHECK(node.filter.f_low >= 0.0);
      CHECK(node.filter.f_low < node.filter.f_high);
      CHECK(node.filter.f_high <= node.filter.max_freq);
      CHECK(node.egnorm.sigma >= kEgNormFloor);
      CHECK(node.egnorm.delta >= kEgNormFloor);
      CHECK(node.egnorm.gamma >= kEgNormFloor);
    }
  }
  for (const auto& layer : st.model.backbone.layers)
    for (double f : layer.lowpass_cutoff) {
      CHECK(f > 0.0);
      CHECK(f <= layer.input_rate / 2.0);
    }
}

TEST_CASE("batch-norm ablation tracks running statistics") {
  Model m = small_model(4, NormMode::batchnorm);
  const auto ex = small_examples(m, 2, 14);
  const StepResult r = forward_backward(m, ptrs(ex));
  REQUIRE(r.bn_batch.size() == m.tree.node_count());
  const NodeStats& root = r.bn_batch.front();
  CHECK(root.depth == 1);
  double mean = 0.0, sq = 0.0;
  for (const auto& e : ex) {
    mean += e.clip.samples.sum();
    sq += e.clip.samples.squaredNorm();
  }
  mean /= 2.0 * kSamples;
  CHECK(root.stats.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(root.stats.var == doctest::Approx(sq / (2.0 * kSamples) - mean * mean).epsilon(1e-9));
  update_running_stats(m, r.bn_batch, 0.9);
  CHECK(m.tree.node(1, 0).bn.mean == doctest::Approx(0.1 * mean));
  CHECK(m.tree.node(1, 0).bn.var == doctest::Approx(0.9 + 0.1 * root.stats.var));
}
