// Acceptance gate: every release-blocking behaviour gets one criterion with a
// pinned tolerance and one [PASS]/[FAIL] line. Exit is non-zero when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "reference_ops.hpp"
#include "synthetic_data.hpp"
#include "unetkit/checkpoint.hpp"
#include "unetkit/data.hpp"
#include "unetkit/errors.hpp"
#include "unetkit/evaluate.hpp"
#include "unetkit/grad_check.hpp"
#include "unetkit/layers.hpp"
#include "unetkit/loss.hpp"
#include "unetkit/metrics.hpp"
#include "unetkit/optim.hpp"
#include "unetkit/report.hpp"
#include "unetkit/rng.hpp"
#include "unetkit/train.hpp"
#include "unetkit/unet.hpp"

namespace fs = std::filesystem;
using namespace unetkit;
using refops::TempDir;

using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report_line(int n, const std::string& label, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", n, label.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void run_criterion(int n, const std::string& label,
                   const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [ok, detail] = body();
    report_line(n, label, ok, detail);
  } catch (const std::exception& e) {
    report_line(n, label, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- criterion 1: finite-difference gradient suite ----

struct FdWorst {
  double err = 0.0;
  std::string where;

  void take(const GradCheckStats& stats, const std::string& tag) {
    if (stats.max_rel_err > err) {
      err = stats.max_rel_err;
      where = tag + "/" + stats.worst_name + "[" + std::to_string(stats.worst_index) + "]";
    }
  }
};

GradBufferView<double> vec_view(const std::string& name, std::vector<double>& values,
                                std::vector<double>& grad) {
  return GradBufferView<double>{name, values.data(), grad.data(),
                                static_cast<long>(values.size())};
}

void fd_ops_for_seed(unsigned long long seed, FdWorst& worst) {
  Rng rng(seed);
  using DT = BasicTensor<double>;

  {  // conv2d, random geometry
    const int k = 1 + static_cast<int>(rng.index(3));
    const int stride = 1 + static_cast<int>(rng.index(2));
    const int pad = static_cast<int>(rng.index(2));
    const int h = k + 4, w = k + 6;  // even h+2p-k and w+2p-k keep stride 2 exact
    DT x = refops::random_tensor<double>(rng, 2, 2, h, w);
    auto p = make_conv_params<double>(3, 2, k, k, stride, pad);
    for (auto& v : p.weight.data) v = rng.uniform(-0.7, 0.7);
    for (auto& v : p.bias) v = rng.uniform(-0.7, 0.7);
    DT y0 = conv2d(x, p);
    DT u = refops::random_tensor<double>(rng, y0.n, y0.c, y0.h, y0.w);
    x.ensure_grad();
    p.weight.ensure_grad();
    conv2d_backward(x, p, u);
    auto loss = [&]() { return refops::dot(conv2d(x, p), u); };
    std::vector<GradBufferView<double>> views{view_of<double>("x", x),
                                              view_of<double>("w", p.weight),
                                              vec_view("b", p.bias, p.bias_grad)};
    worst.take(grad_check<double>(loss, views), "conv2d");
  }

  {  // conv_transpose2d
    DT x = refops::random_tensor<double>(rng, 1, 3, 4, 5);
    auto p = make_conv_transpose_params<double>(3, 2, 2, 2, 2, 0);
    for (auto& v : p.weight.data) v = rng.uniform(-0.7, 0.7);
    for (auto& v : p.bias) v = rng.uniform(-0.7, 0.7);
    DT y0 = conv_transpose2d(x, p);
    DT u = refops::random_tensor<double>(rng, y0.n, y0.c, y0.h, y0.w);
    x.ensure_grad();
    p.weight.ensure_grad();
    conv_transpose2d_backward(x, p, u);
    auto loss = [&]() { return refops::dot(conv_transpose2d(x, p), u); };
    std::vector<GradBufferView<double>> views{view_of<double>("x", x),
                                              view_of<double>("w", p.weight),
                                              vec_view("b", p.bias, p.bias_grad)};
    worst.take(grad_check<double>(loss, views), "conv_transpose2d");
  }

  {  // batchnorm (training)
    DT x = refops::random_tensor<double>(rng, 2, 2, 3, 4);
    BatchNormState<double> s;
    s.gamma = {rng.uniform(0.5, 1.5), rng.uniform(-1.5, -0.5)};
    s.beta = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    s.gamma_grad.assign(2, 0.0);
    s.beta_grad.assign(2, 0.0);
    s.running_mean.assign(2, 0.0);
    s.running_var.assign(2, 1.0);
    BatchNormCache<double> cache;
    DT y0 = batchnorm2d(x, s, &cache);
    DT u = refops::random_tensor<double>(rng, y0.n, y0.c, y0.h, y0.w);
    x.ensure_grad();
    batchnorm2d_backward(x, s, &cache, u);
    auto loss = [&]() { return refops::dot(batchnorm2d(x, s), u); };
    std::vector<GradBufferView<double>> views{view_of<double>("x", x),
                                              vec_view("gamma", s.gamma, s.gamma_grad),
                                              vec_view("beta", s.beta, s.beta_grad)};
    worst.take(grad_check<double>(loss, views), "batchnorm2d");
  }

  {  // relu and maxpool want well-separated inputs
    DT x = refops::spaced_tensor<double>(rng, 1, 2, 4, 4);
    DT u = refops::random_tensor<double>(rng, 1, 2, 4, 4);
    x.ensure_grad();
    relu_backward(x, u);
    auto loss = [&]() { return refops::dot(relu(x), u); };
    std::vector<GradBufferView<double>> views{view_of<double>("x", x)};
    worst.take(grad_check<double>(loss, views), "relu");
  }

  {
    DT x = refops::spaced_tensor<double>(rng, 1, 1, 6, 6);
    DT y0 = maxpool2d(x);
    DT u = refops::random_tensor<double>(rng, y0.n, y0.c, y0.h, y0.w);
    x.ensure_grad();
    maxpool2d_backward(x, u);
    auto loss = [&]() { return refops::dot(maxpool2d(x), u); };
    std::vector<GradBufferView<double>> views{view_of<double>("x", x)};
    worst.take(grad_check<double>(loss, views), "maxpool2d");
  }

  {
    DT x = refops::random_tensor<double>(rng, 1, 1, 3, 8, -3.0, 3.0);
    DT y = sigmoid(x);
    DT u = refops::random_tensor<double>(rng, 1, 1, 3, 8);
    x.ensure_grad();
    sigmoid_backward(x, y, u);
    auto loss = [&]() { return refops::dot(sigmoid(x), u); };
    std::vector<GradBufferView<double>> views{view_of<double>("x", x)};
    worst.take(grad_check<double>(loss, views), "sigmoid");
  }

  {  // dice+bce on logits
    DT logits = refops::random_tensor<double>(rng, 1, 1, 4, 4, -2.0, 2.0);
    DT target(1, 1, 4, 4);
    for (auto& v : target.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    auto res = dice_bce_loss(logits, target);
    logits.ensure_grad();
    for (std::size_t i = 0; i < logits.size(); ++i) logits.grad[i] = res.grad.data[i];
    auto loss = [&]() { return dice_bce_loss(logits, target).value; };
    std::vector<GradBufferView<double>> views{view_of<double>("logits", logits)};
    GradCheckOptions opts;
    opts.h = 1e-5;
    worst.take(grad_check<double>(loss, views, opts), "dice_bce");
  }
}

double fd_composite_for_seed(unsigned long long seed, FdWorst& worst) {
  Rng rng(seed * 31 + 7);
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  cfg.base_channels = 2;
  cfg.depth = 1;
  auto model = build_unet<double>(cfg, seed);
  BasicTensor<double> x = refops::random_tensor<double>(rng, 1, 1, 8, 8);
  BasicTensor<double> target(1, 1, 8, 8);
  for (auto& v : target.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;

  UNetCache<double> cache;
  auto logits = unet_forward(model, x, &cache);
  auto res = dice_bce_loss(logits, target);
  zero_grad(model);
  unet_backward(model, cache, res.grad);

  auto loss = [&]() { return dice_bce_loss(unet_forward(model, x), target).value; };
  std::vector<GradBufferView<double>> views;
  for (auto& pv : named_state(model)) {
    if (!pv.trainable) continue;
    views.push_back(GradBufferView<double>{pv.name, pv.values, pv.grad, pv.count});
  }
  GradCheckOptions opts;
  // small enough that a relu or pooling kink almost never sits inside +/-h
  opts.h = 1e-5;
  opts.max_per_buffer = 6;
  Rng pick(seed + 1);
  opts.rng = &pick;
  auto stats = grad_check<double>(loss, views, opts);
  worst.take(stats, "unet");
  return stats.max_rel_err;
}

std::pair<bool, std::string> criterion_gradients() {
  const auto t0 = Clock::now();
  constexpr double kOpTol = 1e-4;
  constexpr double kNetTol = 1e-3;
  constexpr double kBudgetSecs = 120.0;

  FdWorst op_worst, net_worst;
  for (unsigned long long seed = 1; seed <= 20; ++seed) {
    fd_ops_for_seed(seed, op_worst);
    fd_composite_for_seed(seed, net_worst);
  }
  const double secs = seconds_since(t0);
  char detail[256];
  std::snprintf(detail, sizeof(detail),
                "20 seeds, op max rel err %.3g (tol %.0e) at %s, net max %.3g (tol %.0e), %.1fs",
                op_worst.err, kOpTol, op_worst.where.c_str(), net_worst.err, kNetTol, secs);
  const bool ok = op_worst.err < kOpTol && net_worst.err < kNetTol && secs < kBudgetSecs;
  return {ok, detail};
}

// ---- criterion 2: conv against the direct-sum oracle ----

std::pair<bool, std::string> criterion_conv_oracle() {
  constexpr double kTol = 1e-6;  // double evaluation on both routes
  Rng rng(9001);
  double worst = 0.0;
  for (int tested = 0; tested < 200; ++tested) {
    const int n = 1 + static_cast<int>(rng.index(2));
    const int ic = 1 + static_cast<int>(rng.index(4));
    const int oc = 1 + static_cast<int>(rng.index(4));
    const int kh = 1 + static_cast<int>(rng.index(5));
    const int kw = 1 + static_cast<int>(rng.index(5));
    const int stride = 1 + static_cast<int>(rng.index(3));
    const int pad = static_cast<int>(rng.index(3));
    // derive input dims from a chosen output size so the stride division is exact
    const int oh = 1 + static_cast<int>(rng.index(8));
    const int ow = 1 + static_cast<int>(rng.index(8));
    int h = (oh - 1) * stride + kh - 2 * pad;
    int w = (ow - 1) * stride + kw - 2 * pad;
    while (h < 1) h += stride;
    while (w < 1) w += stride;
    auto x = refops::random_tensor<double>(rng, n, ic, h, w);
    auto p = make_conv_params<double>(oc, ic, kh, kw, stride, pad);
    for (auto& v : p.weight.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : p.bias) v = rng.uniform(-1.0, 1.0);
    auto got = conv2d(x, p);
    auto want = refops::naive_conv2d(x, p);
    if (!got.same_shape(want)) return {false, "shape mismatch vs oracle"};
    worst = std::max(worst, refops::max_abs_diff(got, want));
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail), "200 random configs, max abs diff %.3g (tol %.0e)",
                worst, kTol);
  return {worst <= kTol, detail};
}

// ---- criterion 3: adjoint identity <Ax,u> == <x,A'u> ----

std::pair<bool, std::string> criterion_adjoint() {
  constexpr double kTol = 1e-5;
  Rng rng(9002);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(4));
    const int stride = 1 + static_cast<int>(rng.index(2));
    const int pad = static_cast<int>(rng.index(2));
    const int oh = 2 + static_cast<int>(rng.index(5));
    const int ow = 2 + static_cast<int>(rng.index(5));
    int h = (oh - 1) * stride + k - 2 * pad;
    int w = (ow - 1) * stride + k - 2 * pad;
    while (h < 1) h += stride;
    while (w < 1) w += stride;
    const int ic = 1 + static_cast<int>(rng.index(3));
    const int oc = 1 + static_cast<int>(rng.index(3));

    {  // conv2d pair
      auto x = refops::random_tensor<double>(rng, 1, ic, h, w);
      auto p = make_conv_params<double>(oc, ic, k, k, stride, pad);
      for (auto& v : p.weight.data) v = rng.uniform(-1.0, 1.0);
      auto y = conv2d(x, p);
      auto u = refops::random_tensor<double>(rng, y.n, y.c, y.h, y.w);
      auto xt = conv2d_input_grad(u, p, h, w);
      const double lhs = refops::dot(y, u);
      const double rhs = refops::dot(x, xt);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    {  // conv_transpose2d pair
      auto x = refops::random_tensor<double>(rng, 1, ic, 3 + static_cast<int>(rng.index(4)),
                                             3 + static_cast<int>(rng.index(4)));
      auto p = make_conv_transpose_params<double>(ic, oc, 2, 2, 2, 0);
      for (auto& v : p.weight.data) v = rng.uniform(-1.0, 1.0);
      auto y = conv_transpose2d(x, p);
      auto u = refops::random_tensor<double>(rng, y.n, y.c, y.h, y.w);
      auto xt = conv_transpose2d_input_grad(u, p, x.h, x.w);
      const double lhs = refops::dot(y, u);
      const double rhs = refops::dot(x, xt);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail), "50 instance pairs, worst relative gap %.3g (tol %.0e)",
                worst, kTol);
  return {worst <= kTol, detail};
}

// ---- criterion 4: segmentation metrics against brute-force counting ----

std::pair<bool, std::string> criterion_metrics_oracle() {
  Rng rng(9003);
  for (int trial = 0; trial < 1000; ++trial) {
    const double density_p = rng.uniform(0.0, 1.0);
    const double density_g = rng.uniform(0.0, 1.0);
    std::vector<int> pred(256), gt(256);
    Tensor tp(1, 1, 16, 16), tg(1, 1, 16, 16);
    for (int i = 0; i < 256; ++i) {
      pred[static_cast<std::size_t>(i)] = rng.uniform() < density_p ? 1 : 0;
      gt[static_cast<std::size_t>(i)] = rng.uniform() < density_g ? 1 : 0;
      tp.data[static_cast<std::size_t>(i)] = static_cast<float>(pred[static_cast<std::size_t>(i)]);
      tg.data[static_cast<std::size_t>(i)] = static_cast<float>(gt[static_cast<std::size_t>(i)]);
    }
    const auto rec = segmentation_metrics(tp, tg);
    const auto brute = refops::brute_confusion(pred, gt);
    if (rec.counts.tp != brute.tp || rec.counts.fp != brute.fp || rec.counts.fn != brute.fn ||
        rec.counts.tn != brute.tn) {
      return {false, "confusion counts diverge from brute force at trial " +
                         std::to_string(trial)};
    }
    auto ratio = [](double num, double den) { return den == 0.0 ? 1.0 : num / den; };
    const double jaccard =
        ratio(static_cast<double>(brute.tp),
              static_cast<double>(brute.tp + brute.fp + brute.fn));
    const double f1 = ratio(2.0 * static_cast<double>(brute.tp),
                            static_cast<double>(2 * brute.tp + brute.fp + brute.fn));
    if (rec.jaccard != jaccard || rec.f1 != f1) {
      return {false, "ratio mismatch at trial " + std::to_string(trial)};
    }
    if (rec.jaccard > rec.f1 + 1e-15) {
      return {false, "jaccard exceeded f1 at trial " + std::to_string(trial)};
    }
  }
  // Degenerate 0/0 case pins to perfect agreement.
  Tensor z(1, 1, 16, 16);
  z.fill(0.0f);
  const auto rec = segmentation_metrics(z, z);
  if (rec.jaccard != 1.0 || rec.f1 != 1.0 || rec.recall != 1.0 || rec.precision != 1.0) {
    return {false, "0/0 convention violated"};
  }
  return {true, "1000 random 16x16 pairs exact vs brute force, 0/0 -> 1.0"};
}

// ---- criterion 5: quadratic weighted kappa oracle ----

std::pair<bool, std::string> criterion_qwk() {
  constexpr double kTol = 1e-12;
  Rng rng(9004);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> pred(200), truth(200);
    for (int i = 0; i < 200; ++i) {
      pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(5));
      truth[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(5));
    }
    worst = std::max(worst, std::abs(quadratic_weighted_kappa(pred, truth) -
                                     refops::pairwise_qwk(pred, truth)));
  }
  std::vector<int> perfect = {0, 1, 2, 3, 4, 4, 3, 2, 1, 0};
  const bool perfect_ok = quadratic_weighted_kappa(perfect, perfect) == 1.0;
  const std::vector<int> rev_pred = {0, 0, 4, 4}, rev_truth = {4, 4, 0, 0};
  const double rev = quadratic_weighted_kappa(rev_pred, rev_truth);
  const bool rev_ok = std::abs(rev - (-1.0)) <= kTol;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "100x200 samples, worst |diff| %.3g (tol %.0e); perfect=1 %s; reversed=%.17g",
                worst, kTol, perfect_ok ? "yes" : "no", rev);
  return {worst <= kTol && perfect_ok && rev_ok, detail};
}

// ---- criterion 6: memorize 8 synthetic samples ----

std::pair<bool, std::string> criterion_overfit() {
  constexpr double kDiceTarget = 0.95;
  constexpr int kMaxEpochs = 300;
  constexpr int kChunk = 25;
  constexpr double kBudgetSecs = 600.0;

  std::string detail;
  bool all_ok = true;
  for (unsigned long long seed : {101ULL, 202ULL}) {
    const auto t0 = Clock::now();
    auto samples = refops::blob_tensor_dataset(8, 64, 64, seed);
    UNetConfig mc;
    mc.in_channels = 3;
    mc.out_channels = 1;
    mc.base_channels = 8;
    mc.depth = 4;
    auto model = build_unet<float>(mc, seed);

    double dice = 0.0;
    int epochs_used = 0;
    while (epochs_used < kMaxEpochs) {
      TrainConfig tc;
      tc.epochs = std::min(kChunk, kMaxEpochs - epochs_used);
      tc.batch_size = 4;
      tc.learning_rate = 1e-3;
      tc.seed = seed + static_cast<std::uint64_t>(epochs_used);
      train(model, samples, samples, tc);
      epochs_used += tc.epochs;
      dice = mean_dice(model, samples, 0.5);
      if (dice >= kDiceTarget) break;
      if (seconds_since(t0) > kBudgetSecs) break;
    }
    const double secs = seconds_since(t0);
    char part[128];
    std::snprintf(part, sizeof(part), "seed %llu: dice %.4f after %d epochs (%.0fs); ", seed,
                  dice, epochs_used, secs);
    detail += part;
    all_ok = all_ok && dice >= kDiceTarget && epochs_used <= kMaxEpochs && secs <= kBudgetSecs;
  }
  return {all_ok, detail + "target dice >= 0.95 within 300 epochs"};
}

// ---- criterion 7: augmentation properties ----

std::pair<bool, std::string> criterion_augmentation() {
  // tensor-level invariants
  auto ds = refops::blob_tensor_dataset(4, 32, 32, 77);
  for (const auto& p : ds) {
    auto hh = hflip(hflip(p));
    auto vv = vflip(vflip(p));
    if (refops::max_abs_diff(hh.image, p.image) != 0.0 ||
        refops::max_abs_diff(hh.mask, p.mask) != 0.0) {
      return {false, "hflip is not an involution"};
    }
    if (refops::max_abs_diff(vv.image, p.image) != 0.0 ||
        refops::max_abs_diff(vv.mask, p.mask) != 0.0) {
      return {false, "vflip is not an involution"};
    }
    auto r0 = rotate(p, 0.0);
    if (refops::max_abs_diff(r0.image, p.image) > 1e-6 ||
        refops::max_abs_diff(r0.mask, p.mask) != 0.0) {
      return {false, "rotate(0) deviates from identity"};
    }
    double area = 0.0, area90 = 0.0;
    auto r90 = rotate(p, 90.0);
    for (float v : p.mask.data) area += v;
    for (float v : r90.mask.data) area90 += v;
    if (area != area90) return {false, "rotate(90) changed the mask area on a square canvas"};
    for (double angle : {13.0, 45.0, -70.5}) {
      auto r = rotate(p, angle);
      for (float v : r.mask.data) {
        if (v != 0.0f && v != 1.0f) return {false, "rotation produced a non-binary mask"};
      }
    }
  }

  // dataset-level counts and byte determinism
  TempDir src("acc-aug-src");
  refops::write_blob_dataset(src.path(), 3, 24, 24, 78);
  auto manifest = scan_dataset(src.str());
  AugmentOptions opts;
  opts.enabled = true;
  opts.angle = 35.0;
  opts.target_h = 24;
  opts.target_w = 24;

  TempDir out_a("acc-aug-a"), out_b("acc-aug-b"), out_plain("acc-aug-p");
  auto ra = augment_dataset(manifest, out_a.str(), opts);
  auto rb = augment_dataset(manifest, out_b.str(), opts);
  if (ra.source_pairs != 3 || ra.written_pairs != 12) {
    return {false, "enabled augmentation did not write 4 variants per pair"};
  }
  AugmentOptions plain = opts;
  plain.enabled = false;
  if (augment_dataset(manifest, out_plain.str(), plain).written_pairs != 3) {
    return {false, "disabled augmentation should write originals only"};
  }

  auto read_all = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  for (const auto& ea : ra.manifest.entries) {
    const ManifestEntry* eb = nullptr;
    for (const auto& cand : rb.manifest.entries) {
      if (cand.id == ea.id) eb = &cand;
    }
    if (!eb) return {false, "repeat run produced different ids"};
    if (read_all(ea.image_path) != read_all(eb->image_path) ||
        read_all(ea.mask_path) != read_all(eb->mask_path)) {
      return {false, "repeat run produced different bytes for " + ea.id};
    }
    auto s = load_sample(ea, 24, 24);
    for (float v : s.mask.data) {
      if (v != 0.0f && v != 1.0f) return {false, "written mask not binary: " + ea.id};
    }
  }
  return {true, "involutions exact, rot0/rot90 invariants hold, 4x/1x counts, byte-deterministic"};
}

// ---- criterion 8: checkpoint round-trip and corruption handling ----

std::pair<bool, std::string> criterion_checkpoint() {
  TempDir tmp("acc-ckpt");
  UNetConfig mc;
  mc.in_channels = 3;
  mc.out_channels = 1;
  mc.base_channels = 2;
  mc.depth = 2;
  auto model = build_unet<float>(mc, 404);
  Rng rng(405);
  Tensor x = refops::random_tensor<float>(rng, 1, 3, 16, 16);
  unet_forward(model, x);  // dirty the running stats

  const std::string path = (tmp.path() / "m.ckpt").string();
  save_checkpoint(checkpoint_from_model(model, 9, 0.25), path);
  auto restored = model_from_checkpoint(load_checkpoint(path));
  auto va = named_state(model);
  auto vb = named_state(restored);
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].name != vb[i].name || va[i].count != vb[i].count) {
      return {false, "named state diverged after reload"};
    }
    for (long j = 0; j < va[i].count; ++j) {
      if (va[i].values[j] != vb[i].values[j]) {
        return {false, "value not bit-identical after reload: " + va[i].name};
      }
    }
  }

  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  auto write_bytes = [&](const std::vector<char>& b) {
    const std::string p = (tmp.path() / "bad.ckpt").string();
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    return p;
  };

  int structured = 0, total = 0;
  auto expect_structured = [&](const std::vector<char>& b) {
    ++total;
    try {
      load_checkpoint(write_bytes(b));
    } catch (const FormatError&) {  // includes CorruptionError
      ++structured;
    } catch (...) {
    }
  };

  expect_structured({});  // empty file
  {
    auto b = bytes;
    b[0] = 'Z';
    expect_structured(b);  // bad magic
  }
  {
    auto b = bytes;
    b[4] = 42;
    expect_structured(b);  // unsupported version
  }
  for (std::size_t cut = 1; cut <= 10; ++cut) {
    const std::size_t at = bytes.size() * cut / 11;
    expect_structured(std::vector<char>(bytes.begin(), bytes.begin() + at));
  }
  {
    auto b = bytes;
    b.push_back('\0');
    expect_structured(b);  // trailing bytes
  }

  bool missing_ok = false;
  try {
    load_checkpoint((tmp.path() / "nope.ckpt").string());
  } catch (const IoError&) {
    missing_ok = true;
  }

  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "bitwise round-trip; %d/%d corruptions raised typed errors; missing file IoError %s",
                structured, total, missing_ok ? "yes" : "no");
  return {structured == total && missing_ok, detail};
}

// ---- criterion 9: training determinism ----

std::pair<bool, std::string> criterion_determinism() {
  auto data = refops::blob_tensor_dataset(6, 16, 16, 555);
  std::vector<SamplePair> train_set(data.begin(), data.begin() + 4);
  std::vector<SamplePair> val_set(data.begin() + 4, data.end());

  auto run = [&]() {
    UNetConfig mc;
    mc.in_channels = 3;
    mc.out_channels = 1;
    mc.base_channels = 2;
    mc.depth = 2;
    auto model = build_unet<float>(mc, 606);
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 2;
    tc.learning_rate = 1e-3;
    tc.seed = 607;
    auto summary = train(model, train_set, val_set, tc);
    std::vector<float> flat;
    for (auto& v : named_state(model)) {
      for (long i = 0; i < v.count; ++i) flat.push_back(v.values[i]);
    }
    return std::make_pair(summary, flat);
  };

  auto [s1, p1] = run();
  auto [s2, p2] = run();
  for (std::size_t i = 0; i < s1.epochs.size(); ++i) {
    if (s1.epochs[i].train_loss != s2.epochs[i].train_loss ||
        s1.epochs[i].val_loss != s2.epochs[i].val_loss) {
      return {false, "epoch losses diverged at epoch " + std::to_string(i + 1)};
    }
  }
  if (p1 != p2) return {false, "final parameters are not bit-identical"};
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "two 5-epoch runs: losses and %zu parameters bit-identical", p1.size());
  return {true, detail};
}

// ---- criterion 10: report composer ----

std::pair<bool, std::string> criterion_composer() {
  const std::array<LesionState, 3> all = {LesionState::Absent, LesionState::Present,
                                          LesionState::Unknown};
  int composed = 0;
  for (int grade = 0; grade <= 4; ++grade) {
    for (int code = 0; code < 729; ++code) {
      Findings f;
      f.grade = grade;
      int c = code;
      for (int i = 0; i < kLesionCount; ++i) {
        f.states[static_cast<std::size_t>(i)] = all[static_cast<std::size_t>(c % 3)];
        if (f.states[static_cast<std::size_t>(i)] == LesionState::Present) {
          f.fractions[static_cast<std::size_t>(i)] = 0.001 + 0.002 * i;
        }
        c /= 3;
      }
      Report r = compose_report(f);
      if (r.text.empty() || r.lesion_lines.size() != kLesionCount) {
        return {false, "incomplete report for grade " + std::to_string(grade)};
      }
      if (!(parse_findings_block(r.text) == f)) {
        return {false, "findings block did not round-trip"};
      }
      if (grade == 4 && r.urgency != Urgency::Immediate) {
        return {false, "grade 4 was not immediate"};
      }
      ++composed;
    }
  }

  // urgency monotone in grade for every lesion pattern
  for (int code = 0; code < 729; ++code) {
    Findings f;
    int c = code;
    for (int i = 0; i < kLesionCount; ++i) {
      f.states[static_cast<std::size_t>(i)] = all[static_cast<std::size_t>(c % 3)];
      c /= 3;
    }
    int prev = -1;
    for (int grade = 0; grade <= 4; ++grade) {
      f.grade = grade;
      const int rank = static_cast<int>(compose_report(f).urgency);
      if (rank < prev) return {false, "urgency decreased with the grade"};
      prev = rank;
    }
  }

  Findings esc;
  esc.grade = 1;
  esc.states[1] = LesionState::Present;
  esc.fractions[1] = 0.01;
  auto r = compose_report(esc);
  if (r.urgency != Urgency::Soon || r.recommendation.find("discordan") == std::string::npos) {
    return {false, "haemorrhage escalation missing"};
  }
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "%d findings composed, block round-trips, monotone urgency, escalation applied",
                composed);
  return {composed == 3645, detail};
}

// ---- criterion 11: plateau scheduler trace ----

std::pair<bool, std::string> criterion_scheduler() {
  PlateauScheduler sched;
  sched.lr = 1e-4;
  double lr_at_6 = 0.0;
  bool early_stable = true;
  for (int epoch = 1; epoch <= 6; ++epoch) {
    const double lr = sched.step(1.0);
    if (epoch < 6) early_stable = early_stable && lr == 1e-4;
    if (epoch == 6) lr_at_6 = lr;
  }

  PlateauScheduler floor_sched;
  floor_sched.lr = 1e-4;
  bool never_below = true;
  double final_lr = floor_sched.lr;
  for (int epoch = 0; epoch < 200; ++epoch) {
    final_lr = floor_sched.step(1.0);
    never_below = never_below && final_lr >= 1e-7;
  }

  PlateauScheduler improving;
  improving.lr = 1e-4;
  bool stays = true;
  double v = 1.0;
  for (int epoch = 0; epoch < 40; ++epoch) {
    stays = stays && improving.step(v) == 1e-4;
    v -= 0.01;
  }

  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "flat losses: lr %.8g after epoch 6 (want 5e-05); 200 epochs floor %.3g; "
                "improving run untouched %s",
                lr_at_6, final_lr, stays ? "yes" : "no");
  const bool ok = early_stable && lr_at_6 == 5e-5 && never_below && final_lr == 1e-7 && stays;
  return {ok, detail};
}

// ---- criterion 12: throughput measurement ----

std::pair<bool, std::string> criterion_fps() {
  UNetConfig mc;
  mc.in_channels = 3;
  mc.out_channels = 1;
  mc.base_channels = 4;
  mc.depth = 4;
  auto model = build_unet<float>(mc, 777);
  Rng rng(778);
  std::vector<Tensor> frames;
  for (int i = 0; i < 2; ++i) frames.push_back(refops::random_tensor<float>(rng, 1, 3, 256, 256));

  std::array<double, 3> fps{};
  for (auto& f : fps) {
    const auto r = measure_fps(model, frames, 1);
    if (!(r.fps > 0.0) || !std::isfinite(r.fps)) return {false, "non-finite or zero fps"};
    f = r.fps;
  }
  std::array<double, 3> sorted = fps;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[1];
  const double spread = std::max(std::abs(fps[0] - median),
                                 std::max(std::abs(fps[1] - median), std::abs(fps[2] - median)));
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "base-4 model at 256x256: runs %.2f/%.2f/%.2f fps, spread %.1f%% of median "
                "(tol 30%%)",
                fps[0], fps[1], fps[2], 100.0 * spread / median);
  return {spread <= 0.30 * median, detail};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion(1, "analytic gradients match finite differences across ops and the full net",
                criterion_gradients);
  run_criterion(2, "conv2d agrees with an independent direct-sum oracle", criterion_conv_oracle);
  run_criterion(3, "backward operators satisfy the adjoint identity", criterion_adjoint);
  run_criterion(4, "segmentation metrics agree with brute-force counting",
                criterion_metrics_oracle);
  run_criterion(5, "quadratic weighted kappa agrees with the pairwise oracle", criterion_qwk);
  run_criterion(6, "the pipeline memorizes 8 synthetic samples to dice >= 0.95",
                criterion_overfit);
  run_criterion(7, "augmentation invariants hold and outputs are deterministic",
                criterion_augmentation);
  run_criterion(8, "checkpoints round-trip bitwise and corruption raises typed errors",
                criterion_checkpoint);
  run_criterion(9, "training is bit-deterministic for a fixed seed", criterion_determinism);
  run_criterion(10, "report composition is total, monotone and round-trips its block",
                criterion_composer);
  run_criterion(11, "plateau scheduler halves on schedule and respects the floor",
                criterion_scheduler);
  run_criterion(12, "inference throughput is measurable and stable", criterion_fps);

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
