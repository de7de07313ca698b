#include "dydec/gradcheck.hpp"

#include <cmath>
#include <random>

#include "dydec/graph.hpp"
#include "dydec/train.hpp"

namespace dydec {

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-12) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

namespace {

GradCheckRow make_row(std::string check, std::string param, double a, double n, double tol) {
  GradCheckRow r{std::move(check), std::move(param), a, n, relative_error(a, n), tol, false};
  r.pass = r.rel_error < tol;
  return r;
}

Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Gaussian noise with a few louder bursts, so eg-Norm sees a varying envelope.
AudioClip test_clip(Eigen::Index n, double rate, std::mt19937_64& rng) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples = random_vector(n, rng, 0.05);
  std::uniform_int_distribution<Eigen::Index> pos(0, n - 257);
  for (int k = 0; k < 3; ++k) {
    const Eigen::Index p = pos(rng);
    for (Eigen::Index i = 0; i < 256; ++i)
      c.samples[p + i] += 0.5 * std::sin(0.3 * static_cast<double>(i) * (k + 1)) * std::sin(M_PI * i / 256.0);
  }
  return c;
}

std::string node_name(int d, int i, const char* field) {
  return "d" + std::to_string(d) + "n" + std::to_string(i) + "." + field;
}

double& egnorm_field(EgNormParams& p, int k) {
  switch (k) {
    case 0: return p.sigma;
    case 1: return p.alpha;
    case 2: return p.delta;
    default: return p.gamma;
  }
}
const char* egnorm_name(int k) {
  static const char* names[] = {"sigma", "alpha", "delta", "gamma"};
  return names[k];
}

double frob_dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

// Moves every eg-Norm parameter off its init value. The init sigma = 0.5 sits exactly where the
// truncation radius ceil(4 sigma) switches, so the envelope is not differentiable there.
void jitter_egnorm(Model& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.15, 0.15);
  for (auto& level : model.tree.levels) {
    for (auto& node : level) {
      auto& p = node.egnorm;
      do {
        p.sigma = 0.5 * (1.0 + u(rng));
      } while (std::abs(4.0 * p.sigma - std::round(4.0 * p.sigma)) < 0.05);
      p.alpha *= 1.0 + u(rng);
      p.delta *= 1.0 + u(rng);
      p.gamma *= 1.0 + u(rng);
    }
  }
}

// Tape-free batch loss evaluated in Scalar; the finite-difference oracle for forward_backward.
template <typename S>
std::vector<VectorX<S>> oracle_block(const std::vector<VectorX<S>>& xs, const TreeNode& node,
                                     const SincBandPass& filter, Taper taper, NormMode norm) {
  std::vector<VectorX<S>> normed(xs.size());
  if (norm == NormMode::batchnorm) {
    S sum(0);
    S count(0);
    for (const auto& x : xs) {
      sum += x.sum();
      count += static_cast<S>(x.size());
    }
    const S mean = sum / count;
    S sq(0);
    for (const auto& x : xs) sq += (x.array() - mean).square().sum();
    const S inv = S(1) / std::sqrt(sq / count + static_cast<S>(kBatchNormEpsilon));
    for (std::size_t b = 0; b < xs.size(); ++b) normed[b] = ((xs[b].array() - mean) * inv).matrix();
  } else {
    for (std::size_t b = 0; b < xs.size(); ++b) normed[b] = detail::normalize_node(xs[b], node, norm);
  }
  const VectorX<S> k = materialize_kernel<S>(filter, taper);
  std::vector<VectorX<S>> out(xs.size());
  for (std::size_t b = 0; b < xs.size(); ++b) out[b] = conv_same(normed[b], k) + xs[b];
  return out;
}

template <typename S>
S oracle_loss(const Model& model, const std::vector<const Example*>& batch) {
  const DyadicTree& tree = model.tree;
  const auto& fc = model.config.frontend;
  const std::size_t n = batch.size();
  std::vector<VectorX<S>> input(n);
  for (std::size_t b = 0; b < n; ++b) input[b] = batch[b]->clip.samples.cast<S>();

  std::vector<std::vector<VectorX<S>>> leaves;  // [leaf][item]
  if (fc.mode == DecomposeMode::single_scale) {
    for (int i = 0; i < tree.leaf_count(); ++i) {
      SincBandPass f = tree.node(tree.depth, i).filter;
      f.sample_rate = tree.base_sample_rate;
      auto y = oracle_block(input, tree.node(tree.depth, i), f, tree.taper, fc.norm);
      for (auto& v : y) v = decimate(v, tree.total_decimation());
      leaves.push_back(std::move(y));
    }
  } else {
    std::vector<std::vector<VectorX<S>>> level_in{input};
    for (int d = 1; d <= tree.depth; ++d) {
      std::vector<std::vector<VectorX<S>>> level_out;
      for (int i = 0; i < (1 << d); ++i) {
        const TreeNode& node = tree.node(d, i);
        auto y = oracle_block(level_in[i / 2], node, node.filter, tree.taper, fc.norm);
        if (tree.decimates_after(d))
          for (auto& v : y) v = decimate(v, 2);
        level_out.push_back(std::move(y));
      }
      level_in = std::move(level_out);
    }
    leaves = std::move(level_in);
  }

  S total(0);
  for (std::size_t b = 0; b < n; ++b) {
    MatrixRX<S> tf(static_cast<Eigen::Index>(leaves.size()), leaves.front()[b].size());
    for (std::size_t l = 0; l < leaves.size(); ++l) tf.row(static_cast<Eigen::Index>(l)) = leaves[l][b].transpose();
    const VectorX<S> scores = backbone_forward(tf, model.backbone);
    const auto frames = static_cast<S>(scores.size());
    if (model.config.head == HeadMode::density) {
      total += (scores - batch[b]->density.template cast<S>()).squaredNorm() / frames;
    } else {
      const S count = static_cast<S>(model.head.weight) * scores.sum() / frames + static_cast<S>(model.head.bias);
      const S e = count - static_cast<S>(batch[b]->count);
      total += e * e;
    }
  }
  return total / static_cast<S>(n);
}

}  // namespace

std::vector<GradCheckRow> check_kernel_cutoffs(const GradCheckOptions& opt) {
  constexpr double h = 1e-4;
  constexpr double tol = 1e-5;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  DyadicTree tree = init_dyadic_tree(opt.depth, opt.sample_rate / 2.0, opt.kernel_len, opt.sample_rate,
                                     std::vector<int>{});
  std::vector<GradCheckRow> rows;
  for (int d = 1; d <= tree.depth; ++d) {
    for (int i = 0; i < static_cast<int>(tree.levels[d - 1].size()); ++i) {
      SincBandPass f = tree.node(d, i).filter;
      const double width = f.f_high - f.f_low;
      f.f_low = std::max(0.0, f.f_low + jitter(rng) * width);
      f.f_high = f.f_high + jitter(rng) * width;
      const KernelJacobian jac = kernel_cutoff_jacobian(f, tree.taper);
      for (int which = 0; which < 2; ++which) {
        SincBandPass lo = f;
        SincBandPass hi = f;
        double& lo_v = which == 0 ? lo.f_low : lo.f_high;
        double& hi_v = which == 0 ? hi.f_low : hi.f_high;
        lo_v -= h;
        hi_v += h;
        const Vector numeric = (materialize_kernel<double>(hi, tree.taper) - materialize_kernel<double>(lo, tree.taper)) / (2.0 * h);
        const Vector& analytic = which == 0 ? jac.d_low : jac.d_high;
        const double err = (analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm());
        GradCheckRow r{"kernel", node_name(d, i, which == 0 ? "f_low" : "f_high"), analytic.norm(), numeric.norm(),
                       err, tol, err < tol};
        rows.push_back(r);
      }
    }
  }
  return rows;
}

std::vector<GradCheckRow> check_egnorm(const GradCheckOptions& opt) {
  constexpr double h = 1e-5;
  constexpr double tol = 1e-4;
  std::mt19937_64 rng(opt.seed + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GradCheckRow> rows;
  for (int trial = 0; trial < 4; ++trial) {
    // Non-degenerate point: away from radius switches and from the signed-power singularity.
    EgNormParams p;
    Vector x;
    for (;;) {
      p.sigma = 0.3 + 2.5 * u(rng);
      p.alpha = 0.5 + 0.5 * u(rng);
      p.delta = 1.0 + 2.0 * u(rng);
      p.gamma = 0.3 + 0.6 * u(rng);
      x = random_vector(256, rng, 0.3);
      // |x| has a kink at 0 and x / W^alpha a cusp when W is small.
      for (auto& v : x) v = std::copysign(0.02 + std::abs(v), v);
      if (std::abs(4.0 * p.sigma - std::round(4.0 * p.sigma)) < 0.05) continue;
      const Vector w = gaussian_smooth(x, p.sigma);
      const Vector base = x.array() / w.array().pow(p.alpha) + p.delta;
      if (base.cwiseAbs().minCoeff() > 0.05) break;
    }
    const Vector r = random_vector(256, rng);
    const EgNormGrad g = eg_normalize_vjp(x, p, r);
    const std::string tag = "#" + std::to_string(trial);
    for (int k = 0; k < 4; ++k) {
      EgNormParams lo = p;
      EgNormParams hi = p;
      egnorm_field(lo, k) -= h;
      egnorm_field(hi, k) += h;
      const double numeric = r.dot(eg_normalize(x, hi) - eg_normalize(x, lo)) / (2.0 * h);
      EgNormParams gp = g.params;
      rows.push_back(make_row("egnorm", std::string(egnorm_name(k)) + tag, egnorm_field(gp, k), numeric, tol));
    }
    const Vector dir = random_vector(256, rng);
    const double numeric = r.dot(eg_normalize<double>(x + h * dir, p) - eg_normalize<double>(x - h * dir, p)) / (2.0 * h);
    rows.push_back(make_row("egnorm", "input" + tag, g.input.dot(dir), numeric, tol));
  }
  return rows;
}

std::vector<GradCheckRow> check_frontend_jvp(const GradCheckOptions& opt) {
  constexpr double tol = 1e-3;
  std::mt19937_64 rng(opt.seed + 2);
  const ModelConfig cfg = miniature_model_config(opt.depth, opt.kernel_len, opt.sample_rate);
  Model model = init_model(cfg, opt.seed, opt.samples);
  jitter_egnorm(model, rng);
  const AudioClip clip = test_clip(opt.samples, opt.sample_rate, rng);
  const TFMap base = decompose<double>(clip, model.tree);
  const Matrix r = Eigen::Map<const Matrix>(random_vector(base.values.size(), rng).data(), base.bins(), base.frames());

  Model grads = zeros_like(model);
  GradTape tape;
  Var x = make_var({Eigen::Map<const Matrix>(clip.samples.data(), 1, clip.size())}, false);
  FrontendOutputs fe = frontend_graph(tape, model, grads, x, true);
  fe.tf->grad_buffer()[0] = r;
  tape.backward();

  auto objective = [&](const DyadicTree& tree) { return frob_dot(decompose<double>(clip, tree).values, r); };

  std::vector<GradCheckRow> rows;
  std::uniform_int_distribution<int> pick_depth(1, model.tree.depth);
  for (int k = 0; k < opt.per_kind; ++k) {
    const int d = pick_depth(rng);
    const int i = std::uniform_int_distribution<int>(0, (1 << d) - 1)(rng);
    for (int field = 0; field < 6; ++field) {
      DyadicTree lo = model.tree;
      DyadicTree hi = model.tree;
      double* lo_v = nullptr;
      double* hi_v = nullptr;
      double analytic = 0.0;
      double h = opt.frontend_step;
      std::string name;
      if (field < 2) {
        lo_v = field == 0 ? &lo.node(d, i).filter.f_low : &lo.node(d, i).filter.f_high;
        hi_v = field == 0 ? &hi.node(d, i).filter.f_low : &hi.node(d, i).filter.f_high;
        analytic = field == 0 ? grads.tree.node(d, i).filter.f_low : grads.tree.node(d, i).filter.f_high;
        h = opt.frontend_step * opt.sample_rate / 2.0;
        name = node_name(d, i, field == 0 ? "f_low" : "f_high");
      } else {
        lo_v = &egnorm_field(lo.node(d, i).egnorm, field - 2);
        hi_v = &egnorm_field(hi.node(d, i).egnorm, field - 2);
        analytic = egnorm_field(grads.tree.node(d, i).egnorm, field - 2);
        name = node_name(d, i, egnorm_name(field - 2));
      }
      *lo_v -= h;
      *hi_v += h;
      const double numeric = (objective(hi) - objective(lo)) / (2.0 * h);
      rows.push_back(make_row("frontend_jvp", name, analytic, numeric, tol));
    }
  }
  return rows;
}

std::vector<GradCheckRow> check_backbone(const GradCheckOptions& opt) {
  constexpr double tol = 1e-4;
  std::mt19937_64 rng(opt.seed + 3);
  Model model;
  model.config.backbone.stages = {{2, 5}, {3, 4}, {1, 3}};
  model.config.backbone.lowpass_len = 7;
  model.backbone = init_backbone(model.config.backbone, 4, 100.0, opt.seed);
  const Matrix tf = Eigen::Map<const Matrix>(random_vector(4 * 60, rng).data(), 4, 60);
  const Vector r = random_vector(10, rng);

  Model grads = zeros_like(model);
  GradTape tape;
  Var x = make_var({tf}, true);
  Var s = backbone_graph(tape, model, grads, x);
  s->grad_buffer()[0] = r.transpose();
  tape.backward();

  auto objective = [&](const Model& m, const Matrix& input) {
    TFMap map;
    map.values = input;
    return backbone_forward(map, m.backbone).dot(r);
  };

  std::vector<GradCheckRow> rows;
  const Vector theta = pack_parameters(model);
  const Vector analytic = pack_parameters(grads);
  const auto kinds = parameter_kinds(model);
  for (Eigen::Index p = 0; p < theta.size(); ++p) {
    const double h = opt.backbone_step * std::max(1.0, std::abs(theta[p]));
    Model lo = model;
    Model hi = model;
    Vector t = theta;
    t[p] -= h;
    unpack_parameters(lo, t);
    t[p] += 2.0 * h;
    unpack_parameters(hi, t);
    const double numeric = (objective(hi, tf) - objective(lo, tf)) / (2.0 * h);
    rows.push_back(make_row("backbone", std::string(to_string(kinds[p])) + "[" + std::to_string(p) + "]",
                            analytic[p], numeric, tol));
  }
  const Matrix dir = Eigen::Map<const Matrix>(random_vector(tf.size(), rng).data(), tf.rows(), tf.cols());
  const double h = opt.backbone_step;
  const double numeric = (objective(model, tf + h * dir) - objective(model, tf - h * dir)) / (2.0 * h);
  rows.push_back(make_row("backbone", "input", frob_dot(x->grad[0], dir), numeric, tol));
  return rows;
}

std::vector<GradCheckRow> check_training(const GradCheckOptions& opt) {
  constexpr double tol = 1e-3;
  struct Variant {
    const char* name;
    DecomposeMode mode;
    NormMode norm;
    HeadMode head;
  };
  const Variant variants[] = {
      {"full", DecomposeMode::dyadic, NormMode::egnorm, HeadMode::density},
      {"single_scale", DecomposeMode::single_scale, NormMode::egnorm, HeadMode::density},
      {"bn", DecomposeMode::dyadic, NormMode::batchnorm, HeadMode::density},
      {"nonorm", DecomposeMode::dyadic, NormMode::none, HeadMode::density},
      {"reg_count", DecomposeMode::dyadic, NormMode::egnorm, HeadMode::reg_count},
  };
  std::vector<GradCheckRow> rows;
  std::mt19937_64 rng(opt.seed + 4);
  for (const auto& v : variants) {
    ModelConfig cfg = miniature_model_config(opt.depth, opt.kernel_len, opt.sample_rate);
    cfg.frontend.mode = v.mode;
    cfg.frontend.norm = v.norm;
    cfg.head = v.head;
    Model model = init_model(cfg, opt.seed, opt.samples);
    jitter_egnorm(model, rng);

    std::vector<Example> examples;
    for (int b = 0; b < 2; ++b) {
      AudioClip clip = test_clip(opt.samples, opt.sample_rate, rng);
      const double len = clip.duration();
      std::uniform_real_distribution<double> t(0.0, len);
      std::vector<EventLabel> events;
      for (int e = 0; e < 2 + b; ++e) {
        double a = t(rng);
        double c = t(rng);
        if (a > c) std::swap(a, c);
        events.push_back({a, std::max(c, a + 1e-3 * len), std::nullopt});
      }
      examples.push_back(make_example("clip" + std::to_string(b), std::move(clip), std::move(events), model));
    }
    const std::vector<const Example*> batch{&examples[0], &examples[1]};
    const StepResult res = forward_backward(model, batch, true);
    const Vector theta = pack_parameters(model);
    const Vector analytic = pack_parameters(res.grads);
    const auto kinds = parameter_kinds(model);

    // Group parameter indices by kind, then sample per_kind of each that the variant actually uses.
    std::vector<std::vector<Eigen::Index>> by_kind(static_cast<std::size_t>(ParamKind::head_bias) + 1);
    for (Eigen::Index p = 0; p < theta.size(); ++p) by_kind[static_cast<std::size_t>(kinds[p])].push_back(p);
    for (std::size_t k = 0; k < by_kind.size(); ++k) {
      const auto kind = static_cast<ParamKind>(k);
      if (by_kind[k].empty()) continue;
      if (v.norm != NormMode::egnorm && is_frontend(kind) && kind != ParamKind::f_low && kind != ParamKind::f_high)
        continue;
      if (v.head != HeadMode::reg_count && (kind == ParamKind::head_weight || kind == ParamKind::head_bias)) continue;
      std::vector<Eigen::Index> pool = by_kind[k];
      if (v.mode == DecomposeMode::single_scale && is_frontend(kind)) {
        // Only the leaves take part in single-scale mode; they are the last 2^D nodes.
        const std::size_t leaves = std::size_t{1} << opt.depth;
        pool.erase(pool.begin(), pool.end() - static_cast<std::ptrdiff_t>(leaves));
      }
      for (int s = 0; s < opt.per_kind && !pool.empty(); ++s) {
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
        const Eigen::Index p = pool[pick];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        // Cutoffs step relative to the Nyquist rate so that f_low = 0 still gets a usable step.
        const double scale = kind == ParamKind::f_low || kind == ParamKind::f_high || kind == ParamKind::pool_cutoff
                                 ? opt.sample_rate / 2.0
                                 : std::max(1.0, std::abs(theta[p]));
        Model lo = model;
        Model hi = model;
        Vector t = theta;
        t[p] = theta[p] - opt.training_step * scale;
        const double lo_v = t[p];
        unpack_parameters(lo, t);
        t[p] = theta[p] + opt.training_step * scale;
        const double hi_v = t[p];
        unpack_parameters(hi, t);
        const long double diff = oracle_loss<long double>(hi, batch) - oracle_loss<long double>(lo, batch);
        const auto numeric = static_cast<double>(diff / (static_cast<long double>(hi_v) - lo_v));
        rows.push_back(make_row(std::string("training/") + v.name,
                                std::string(to_string(kind)) + "[" + std::to_string(p) + "]", analytic[p], numeric,
                                tol));
      }
    }
  }
  return rows;
}

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& opt) {
  std::vector<GradCheckRow> all;
  for (auto* fn : {&check_kernel_cutoffs, &check_egnorm, &check_frontend_jvp, &check_backbone, &check_training}) {
    auto rows = fn(opt);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

}  // namespace dydec
