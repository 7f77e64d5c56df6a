#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "featdp/dataset.hpp"
#include "featdp/error.hpp"
#include "featdp/impute.hpp"
#include "featdp/model.hpp"

using namespace featdp;

namespace {

// Straight-line reimplementation of the network math, indexing the flat
// parameter vector by the documented order (per block: weight row-major,
// bias, scale, shift; then head weight and bias). Shares nothing with the
// library's forward path.
double oracle_forward(const std::vector<double>& p,
                      const std::vector<std::size_t>& widths, double ln_eps,
                      std::span<const double> x, const DropoutMasks* masks,
                      std::vector<double>* hidden_out) {
  auto gelu = [](double a) { return 0.5 * a * (1.0 + std::erf(a / std::sqrt(2.0))); };
  std::vector<double> cur(x.begin(), x.end());
  std::size_t off = 0;
  for (int block = 0; block < 3; ++block) {
    std::size_t in_w = widths[block], out_w = widths[block + 1];
    std::vector<double> next(out_w);
    for (std::size_t r = 0; r < out_w; ++r) {
      double acc = p[off + out_w * in_w + r];  // bias
      for (std::size_t c = 0; c < in_w; ++c) acc += p[off + r * in_w + c] * cur[c];
      next[r] = gelu(acc);
    }
    double mean = 0.0;
    for (double v : next) mean += v;
    mean /= out_w;
    double var = 0.0;
    for (double v : next) var += (v - mean) * (v - mean);
    var /= out_w;
    double inv = 1.0 / std::sqrt(var + ln_eps);
    std::size_t scale_off = off + out_w * in_w + out_w;
    std::size_t shift_off = scale_off + out_w;
    for (std::size_t r = 0; r < out_w; ++r) {
      double xhat = (next[r] - mean) * inv;
      next[r] = p[scale_off + r] * xhat + p[shift_off + r];
      if (masks) next[r] *= masks->factors[block][r];
    }
    cur = next;
    off = shift_off + out_w;
  }
  if (hidden_out) *hidden_out = cur;
  double logit = p[off + widths[3]];
  for (std::size_t c = 0; c < widths[3]; ++c) logit += p[off + c] * cur[c];
  return logit;
}

MlpModel random_model(std::size_t input, std::vector<std::size_t> hidden,
                      std::uint64_t seed) {
  MlpModel model(MlpConfig{input, std::move(hidden), 0.15, 1e-5});
  model.init_params(seed);
  return model;
}

std::vector<double> random_vec(std::size_t n, RngStream& s) {
  std::vector<double> v(n);
  for (double& x : v) x = s.next_gaussian();
  return v;
}

double variant_loss(const MlpModel& m, PrivateLossVariant variant, double beta,
                    std::span<const double> x, std::span<const double> xt, int y,
                    const DropoutMasks& masks) {
  return private_loss(m, variant, beta, x, xt, y, masks).loss;
}

// Central finite differences of the variant loss with step 1e-5.
std::vector<double> fd_gradient(MlpModel model, PrivateLossVariant variant,
                                double beta, std::span<const double> x,
                                std::span<const double> xt, int y,
                                const DropoutMasks& masks) {
  const double h = 1e-5;
  std::vector<double> grad(model.param_count());
  std::span<double> params = model.params();
  for (std::size_t j = 0; j < grad.size(); ++j) {
    double keep = params[j];
    params[j] = keep + h;
    double up = variant_loss(model, variant, beta, x, xt, y, masks);
    params[j] = keep - h;
    double down = variant_loss(model, variant, beta, x, xt, y, masks);
    params[j] = keep;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double scale = std::max({std::fabs(a[j]), std::fabs(b[j]), 1e-6});
    worst = std::max(worst, std::fabs(a[j] - b[j]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("all-zero parameters give a zero logit and zero hidden vector") {
  MlpModel model(MlpConfig{4, {8, 8, 8}, 0.15, 1e-5});
  std::vector<double> x{0.3, -1.0, 2.0, 0.7};
  ForwardTrace trace = model.forward_eval(x);
  CHECK(trace.logit == 0.0);
  for (double h : trace.hidden) CHECK(h == 0.0);
}

TEST_CASE("eval-mode forward is deterministic and replayable") {
  MlpModel model = random_model(5, {8, 8, 8}, 11);
  RngStream s(1, StreamPurpose::kGeneric);
  std::vector<double> x = random_vec(5, s);
  ForwardTrace a = model.forward_eval(x);
  ForwardTrace b = model.forward_eval(x);
  CHECK(a.logit == b.logit);
  // Recompute the head from the cached hidden vector: bit-for-bit replay.
  std::span<const double> p = model.params();
  std::size_t head = model.param_layout()[model.param_layout().size() - 2].offset;
  double logit = p[model.param_layout().back().offset];
  for (std::size_t c = 0; c < a.hidden.size(); ++c) logit += p[head + c] * a.hidden[c];
  CHECK(logit == a.logit);
}

TEST_CASE("forward matches an independent straight-line implementation") {
  RngStream s(2, StreamPurpose::kGeneric);
  for (int trial = 0; trial < 25; ++trial) {
    MlpModel model = random_model(7, {8, 8, 8}, 100 + trial);
    std::vector<double> x = random_vec(7, s);
    std::vector<double> params(model.params().begin(), model.params().end());

    ForwardTrace trace = model.forward_eval(x);
    double oracle = oracle_forward(params, {7, 8, 8, 8}, 1e-5, x, nullptr, nullptr);
    CHECK(trace.logit == doctest::Approx(oracle).epsilon(1e-10));

    // Train mode with drawn masks agrees too.
    RngStream drop(3, StreamPurpose::kDropoutPublic, trial);
    DropoutMasks masks = DropoutMasks::draw(model.config(), drop);
    ForwardTrace trained = model.forward(x, masks);
    double oracle_train = oracle_forward(params, {7, 8, 8, 8}, 1e-5, x, &masks, nullptr);
    CHECK(trained.logit == doctest::Approx(oracle_train).epsilon(1e-10));
  }
}

TEST_CASE("forward rejects dimension mismatches") {
  MlpModel model = random_model(6, {8, 8, 8}, 5);
  std::vector<double> wrong(5, 0.0);
  CHECK_THROWS_AS(model.forward_eval(wrong), Error);
}

TEST_CASE("binary cross-entropy on the logit") {
  CHECK(bce_logit_loss(0.0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_logit_loss(0.0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_logit_loss(100.0, 1) < 1e-10);
  CHECK(bce_logit_loss(100.0, 1) >= 0.0);
  CHECK(bce_logit_loss(-2.0, 1) == doctest::Approx(2.1269280110429727).epsilon(1e-12));
  CHECK(bce_logit_loss(-100.0, 0) < 1e-10);
}

TEST_CASE("identity-imputed calibrated loss has an exactly zero gradient") {
  MlpModel model = random_model(6, {8, 8, 8}, 21);
  RngStream s(4, StreamPurpose::kGeneric);
  std::vector<double> x = random_vec(6, s);
  std::vector<double> grad(model.param_count(), 1.0);
  RngStream drop(5, StreamPurpose::kDropoutPrivate, 0);
  DropoutMasks masks = DropoutMasks::draw(model.config(), drop);
  per_sample_grad_private(model, PrivateLossVariant::kCalibrated, 0.0, x, x, 1,
                          masks, grad);
  for (double g : grad) CHECK(g == 0.0);
  // The fusiondp variant cancels exactly for any beta as well.
  per_sample_grad_private(model, PrivateLossVariant::kFusionDp, 3.7, x, x, 0,
                          masks, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("per-sample gradients match central finite differences (all variants)") {
  RngStream s(6, StreamPurpose::kGeneric);
  DropoutMasks eval_masks = DropoutMasks::eval(MlpConfig{6, {8, 8, 8}, 0.15, 1e-5});
  for (PrivateLossVariant variant :
       {PrivateLossVariant::kNaive, PrivateLossVariant::kCalibrated,
        PrivateLossVariant::kFusionDp}) {
    double worst = 0.0;
    for (int trial = 0; trial < 12; ++trial) {
      MlpModel model = random_model(6, {8, 8, 8}, 700 + trial);
      std::vector<double> x = random_vec(6, s);
      std::vector<double> xt = random_vec(6, s);
      int y = trial % 2;
      double beta = (variant == PrivateLossVariant::kFusionDp) ? 0.4 : 0.0;

      std::vector<double> analytic(model.param_count());
      per_sample_grad_private(model, variant, beta, x, xt, y, eval_masks, analytic);
      std::vector<double> numeric =
          fd_gradient(model, variant, beta, x, xt, y, eval_masks);
      worst = std::max(worst, max_rel_error(analytic, numeric));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("mean of per-sample gradients equals the batch-mean gradient") {
  MlpModel model = random_model(5, {8, 8, 8}, 33);
  RngStream s(7, StreamPurpose::kGeneric);
  const std::size_t batch = 6;
  DropoutMasks masks = DropoutMasks::eval(model.config());

  std::vector<double> accumulated(model.param_count(), 0.0);
  std::vector<double> per_sample(model.param_count());
  std::vector<double> mean(model.param_count(), 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<double> x = random_vec(5, s);
    int y = static_cast<int>(i % 2);
    per_sample_grad_clean(model, x, y, masks, per_sample);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += per_sample[j];
    ForwardTrace trace = model.forward(x, masks);
    model.backward(trace, bce_logit_grad(trace.logit, y), {}, accumulated);
  }
  for (std::size_t j = 0; j < mean.size(); ++j) {
    mean[j] /= batch;
    accumulated[j] /= batch;
    CHECK(std::fabs(mean[j] - accumulated[j]) <= 1e-10);
  }
}

TEST_CASE("private loss values: cancellation, beta=0 equivalence, hand oracle") {
  MlpModel model = random_model(2, {2, 2, 2}, 55);
  DropoutMasks masks = DropoutMasks::eval(model.config());
  std::vector<double> x{0.4, -1.2}, xt{0.1, 0.9};

  PrivateLossValue same =
      private_loss(model, PrivateLossVariant::kCalibrated, 0.0, x, x, 1, masks);
  CHECK(same.loss == 0.0);
  PrivateLossValue same_fdp =
      private_loss(model, PrivateLossVariant::kFusionDp, 9.0, x, x, 1, masks);
  CHECK(same_fdp.loss == 0.0);

  PrivateLossValue cal =
      private_loss(model, PrivateLossVariant::kCalibrated, 0.0, x, xt, 1, masks);
  PrivateLossValue fdp0 =
      private_loss(model, PrivateLossVariant::kFusionDp, 0.0, x, xt, 1, masks);
  CHECK(cal.loss == fdp0.loss);

  // Straight-line oracle of the fusiondp loss at beta = 0.5.
  std::vector<double> params(model.params().begin(), model.params().end());
  std::vector<double> hx, ht;
  double zx = oracle_forward(params, {2, 2, 2, 2}, 1e-5, x, nullptr, &hx);
  double zt = oracle_forward(params, {2, 2, 2, 2}, 1e-5, xt, nullptr, &ht);
  auto bce = [](double z, int y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  };
  double consistency = 0.0;
  for (std::size_t c = 0; c < hx.size(); ++c)
    consistency += (hx[c] - ht[c]) * (hx[c] - ht[c]);
  double oracle = bce(zx, 1) - bce(zt, 1) + 0.5 * consistency;
  PrivateLossValue fdp =
      private_loss(model, PrivateLossVariant::kFusionDp, 0.5, x, xt, 1, masks);
  CHECK(fdp.loss == doctest::Approx(oracle).epsilon(1e-10));

  CHECK_THROWS_AS(
      private_loss(model, PrivateLossVariant::kCalibrated, 0.0, x, {}, 1, masks),
      Error);
}

TEST_CASE("consistency term is nonnegative and zero iff hidden states agree") {
  MlpModel model = random_model(4, {8, 8, 8}, 77);
  DropoutMasks masks = DropoutMasks::eval(model.config());
  RngStream s(8, StreamPurpose::kGeneric);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x = random_vec(4, s);
    std::vector<double> xt = random_vec(4, s);
    PrivateLossValue v =
        private_loss(model, PrivateLossVariant::kFusionDp, 1.0, x, xt, 1, masks);
    CHECK(v.consistency >= 0.0);
  }
  std::vector<double> x = random_vec(4, s);
  PrivateLossValue v =
      private_loss(model, PrivateLossVariant::kFusionDp, 1.0, x, x, 1, masks);
  CHECK(v.consistency == 0.0);
}

TEST_CASE("calibrated loss lowers the median per-sample gradient norm") {
  // Good imputer on strongly coupled data: the x~ pass nearly cancels the
  // x pass, so calibrated gradients are smaller at the median.
  Dataset full = generate_synthetic(1500, default_synthetic_schema(), 0.9, 91);
  SplitResult parts = split(full, SplitSpec{0.3, 0.5, 0.1, 0.1}, 91);
  std::vector<ColumnStats> stats = standardize_fit(parts.train);
  standardize_apply(parts.support, stats);
  standardize_apply(parts.train, stats);
  Imputer knn = Imputer::knn(5);
  knn.fit(parts.support);
  HybridDataset hybrid = knn.impute(parts.train);

  const FeatureSchema& schema = parts.train.schema();
  MlpModel model(MlpConfig{schema.encoded_width(), {16, 8, 8}, 0.15, 1e-5});
  model.init_params(17);
  DropoutMasks masks = DropoutMasks::eval(model.config());

  std::vector<double> norm_naive, norm_cal;
  std::vector<double> raw(schema.column_count());
  std::vector<double> enc_x(schema.encoded_width()), enc_t(schema.encoded_width());
  std::vector<double> grad(model.param_count());
  const std::size_t samples = std::min<std::size_t>(250, parts.train.rows());
  for (std::size_t i = 0; i < samples; ++i) {
    parts.train.copy_row(i, raw);
    encode_row(schema, raw, enc_x);
    hybrid.data().copy_row(i, raw);
    encode_row(schema, raw, enc_t);
    int y = parts.train.label(i);
    per_sample_grad_private(model, PrivateLossVariant::kNaive, 0.0, enc_x, {}, y,
                            masks, grad);
    double acc = 0.0;
    for (double g : grad) acc += g * g;
    norm_naive.push_back(std::sqrt(acc));
    per_sample_grad_private(model, PrivateLossVariant::kCalibrated, 0.0, enc_x,
                            enc_t, y, masks, grad);
    acc = 0.0;
    for (double g : grad) acc += g * g;
    norm_cal.push_back(std::sqrt(acc));
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  CHECK(median(norm_cal) < median(norm_naive));
}

TEST_CASE("identical seeds give identical per-sample gradients") {
  MlpModel model = random_model(5, {8, 8, 8}, 99);
  RngStream sx(10, StreamPurpose::kGeneric);
  std::vector<double> x = random_vec(5, sx);
  std::vector<double> xt = random_vec(5, sx);

  auto run = [&]() {
    RngStream drop(123, StreamPurpose::kDropoutPrivate, 7, 3);
    DropoutMasks masks = DropoutMasks::draw(model.config(), drop);
    std::vector<double> grad(model.param_count());
    per_sample_grad_private(model, PrivateLossVariant::kFusionDp, 0.3, x, xt, 1,
                            masks, grad);
    return grad;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoints round-trip parameters exactly") {
  MlpModel model = random_model(9, {8, 8, 8}, 123);
  RngStream s(11, StreamPurpose::kGeneric);
  std::vector<double> x = random_vec(9, s);
  double logit_before = model.logit_eval(x);

  std::filesystem::path path =
      std::filesystem::temp_directory_path() / "featdp_model_tests" / "m.ckpt";
  std::filesystem::create_directories(path.parent_path());
  save_model(model, path);
  MlpModel loaded = load_model(path);
  REQUIRE(loaded.param_count() == model.param_count());
  for (std::size_t j = 0; j < model.param_count(); ++j)
    CHECK(loaded.params()[j] == model.params()[j]);
  CHECK(loaded.logit_eval(x) == logit_before);
}
