#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "progtex/diffusion.hpp"
#include "test_util.hpp"

using namespace progtex;

namespace {

NoiseSchedule default_schedule(int steps = 1000) { return NoiseSchedule::linear(steps, 1e-4, 0.02); }

Latent filled(int res, double v) {
    Latent z = Latent::zeros(res, res, 3);
    for (auto& x : z.values) x = v;
    return z;
}

double linf(const Latent& a, const Latent& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

// Foreground disc of depth in [0.3, 0.7] inside a background ring.
Conditioning disc_condition(int res, const std::string& prompt, const Color& background = Color(0.2, 0.2, 0.2)) {
    Conditioning c{prompt, {res, std::vector<double>(static_cast<std::size_t>(res) * res, 1.0)},
                   ViewImage::filled(res, background)};
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const double dx = (x + 0.5) / res - 0.5, dy = (y + 0.5) / res - 0.5;
            if (dx * dx + dy * dy < 0.16) c.depth.values[static_cast<std::size_t>(y) * res + x] = 0.3 + 0.4 * (x + 0.5) / res;
        }
    }
    return c;
}

GenerationMask uniform_mask(int res, Label l) { return GenerationMask::filled(res, l); }

struct ThrowingPredictor {
    Latent predict(const Latent&, int, const Conditioning&) const { throw std::runtime_error("model crashed"); }
};

struct ShrinkingPredictor {
    Latent predict(const Latent&, int, const Conditioning&) const { return Latent::zeros(1, 1, 3); }
};

} // namespace

// ---------------------------------------------------------------- schedule

TEST(Schedule, SingleStep) {
    const NoiseSchedule s = NoiseSchedule::linear(1, 0.5, 0.5);
    ASSERT_EQ(s.steps(), 1);
    EXPECT_EQ(s.beta(1), 0.5);
    EXPECT_EQ(s.alphabar(0), 1.0);
    EXPECT_EQ(s.alphabar(1), 0.5);
}

TEST(Schedule, AlphabarMatchesLongDoubleProduct) {
    const NoiseSchedule s = default_schedule();
    long double prod = 1.0L;
    for (int t = 1; t <= 1000; ++t) {
        const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
        prod *= 1.0L - beta;
        EXPECT_NEAR(s.beta(t), static_cast<double>(beta), 1e-15);
    }
    EXPECT_NEAR(s.alphabar(1000) / static_cast<double>(prod), 1.0, 1e-12);
    EXPECT_EQ(s.beta(1), 1e-4);
    EXPECT_NEAR(s.beta(1000), 0.02, 1e-17);
}

TEST(Schedule, AlphabarStrictlyDecreasingBetasAscending) {
    for (const auto& s : {default_schedule(), default_schedule(50), NoiseSchedule::linear(10, 0.3, 0.3)}) {
        for (int t = 1; t <= s.steps(); ++t) {
            EXPECT_LT(s.alphabar(t), s.alphabar(t - 1));
            EXPECT_GT(s.beta(t), 0.0);
            if (t > 1) {
                EXPECT_GE(s.beta(t), s.beta(t - 1));
            }
        }
    }
}

TEST(Schedule, RejectsBadRanges) {
    EXPECT_ERROR_CODE(NoiseSchedule::linear(0, 0.1, 0.2), ErrorCode::InvalidRange);
    EXPECT_ERROR_CODE(NoiseSchedule::linear(10, 0.0, 0.2), ErrorCode::InvalidRange);
    EXPECT_ERROR_CODE(NoiseSchedule::linear(10, 0.3, 0.2), ErrorCode::InvalidRange);
    EXPECT_ERROR_CODE(NoiseSchedule::linear(10, 0.1, 1.0), ErrorCode::InvalidRange);
}

// ---------------------------------------------------------------- q_sample

TEST(QSample, StepZeroIsIdentity) {
    const Latent z0 = Latent::gaussian(4, 4, 3, NoiseStream(1));
    const Latent noise = Latent::gaussian(4, 4, 3, NoiseStream(2));
    EXPECT_EQ(q_sample(z0, 0, noise, default_schedule()), z0);
}

TEST(QSample, ZeroNoiseScales) {
    const NoiseSchedule s = default_schedule();
    const Latent z0 = Latent::gaussian(4, 4, 3, NoiseStream(1));
    const Latent out = q_sample(z0, 400, Latent::zeros(4, 4, 3), s);
    for (std::size_t i = 0; i < z0.values.size(); ++i) EXPECT_DOUBLE_EQ(out.values[i], std::sqrt(s.alphabar(400)) * z0.values[i]);
}

TEST(QSample, Errors) {
    const NoiseSchedule s = default_schedule(10);
    const Latent z = Latent::zeros(2, 2, 3);
    EXPECT_ERROR_CODE(q_sample(z, 11, z, s), ErrorCode::StepOutOfRange);
    EXPECT_ERROR_CODE(q_sample(z, -1, z, s), ErrorCode::StepOutOfRange);
    EXPECT_ERROR_CODE(q_sample(z, 1, Latent::zeros(2, 3, 3), s), ErrorCode::ShapeMismatch);
}

TEST(QSample, EmpiricalMomentsMatchForwardDistribution) {
    const NoiseSchedule s = default_schedule();
    // 10^5 independent draws as cells of one latent.
    const Latent z1 = Latent{100, 100, 10, std::vector<double>(100000, 1.0)};
    for (int t : {1, 250, 500, 1000}) {
        const Latent out = q_sample(z1, t, Latent::gaussian(100, 100, 10, NoiseStream(t)), s);
        double mean = 0.0, var = 0.0;
        for (double v : out.values) mean += v;
        mean /= out.values.size();
        for (double v : out.values) var += (v - mean) * (v - mean);
        var /= out.values.size() - 1;
        const double mu = std::sqrt(s.alphabar(t)), sigma2 = 1.0 - s.alphabar(t);
        // Mean error relative to the larger of |mu| and sigma: at t = T, mu is ~0.
        EXPECT_LT(std::abs(mean - mu) / std::max(mu, std::sqrt(sigma2)), 0.02) << t;
        EXPECT_LT(std::abs(var / sigma2 - 1.0), 0.02) << t;
    }
}

TEST(QSample, IteratedMarkovChainMatchesClosedForm) {
    const NoiseSchedule s = default_schedule();
    // Analytic: Var after iterating x_t = sqrt(1-b) x + sqrt(b) e from 0.
    long double v = 0.0L;
    for (int t = 1; t <= 1000; ++t) v = (1.0L - s.beta(t)) * v + s.beta(t);
    EXPECT_NEAR(static_cast<double>(v), 1.0 - s.alphabar(1000), 1e-12);

    // Empirical: 10^4 chains with fresh noise per step.
    const int n = 10000;
    std::vector<double> x(n, 0.0);
    const NoiseStream root(99);
    for (int t = 1; t <= 1000; ++t) {
        const NoiseStream step = root.fork(t);
        const double a = std::sqrt(1.0 - s.beta(t)), b = std::sqrt(s.beta(t));
        for (int i = 0; i < n; ++i) x[i] = a * x[i] + b * step.gaussian(i);
    }
    double var = 0.0;
    for (double xi : x) var += xi * xi;
    var /= n;
    EXPECT_LT(std::abs(var / (1.0 - s.alphabar(1000)) - 1.0), 0.02);
}

// ---------------------------------------------------------------- ddpm_step

TEST(DdpmStep, InvertsFirstStep) {
    const NoiseSchedule s = default_schedule();
    const Latent z0 = Latent::gaussian(5, 5, 3, NoiseStream(3));
    const Latent eps = Latent::gaussian(5, 5, 3, NoiseStream(4));
    const Latent z1 = q_sample(z0, 1, eps, s);
    const Latent back = ddpm_step(z1, eps, 1, Latent::gaussian(5, 5, 3, NoiseStream(5)), s);
    EXPECT_LT(linf(back, z0), 1e-10);
}

TEST(DdpmStep, VanishingBetaIsNoOp) {
    const NoiseSchedule s = NoiseSchedule::linear(3, 1e-15, 1e-15);
    const Latent z = Latent::gaussian(4, 4, 3, NoiseStream(6));
    const Latent zero = Latent::zeros(4, 4, 3);
    EXPECT_LT(linf(ddpm_step(z, zero, 2, zero, s), z), 1e-12);
}

TEST(DdpmStep, ClosedFormPredictorConverges) {
    const NoiseSchedule s = default_schedule();
    const Latent target = Latent::gaussian(6, 6, 3, NoiseStream(7));
    Latent z = Latent::gaussian(6, 6, 3, NoiseStream(8));
    for (int t = 1000; t >= 1; --t) {
        Latent eps = z;
        const double a = std::sqrt(s.alphabar(t)), b = std::sqrt(1.0 - s.alphabar(t));
        for (std::size_t i = 0; i < eps.values.size(); ++i) eps.values[i] = (z.values[i] - a * target.values[i]) / b;
        z = ddpm_step(z, eps, t, Latent::gaussian(6, 6, 3, NoiseStream(1000 + t)), s);
    }
    EXPECT_LT(linf(z, target), 1e-3);
}

TEST(DdpmStep, Errors) {
    const NoiseSchedule s = default_schedule(10);
    const Latent z = Latent::zeros(2, 2, 3);
    EXPECT_ERROR_CODE(ddpm_step(z, z, 0, z, s), ErrorCode::StepOutOfRange);
    EXPECT_ERROR_CODE(ddpm_step(z, z, 11, z, s), ErrorCode::StepOutOfRange);
    EXPECT_ERROR_CODE(ddpm_step(z, Latent::zeros(2, 2, 1), 1, z, s), ErrorCode::ShapeMismatch);
}

// ---------------------------------------------------------------- masked_sample

class MaskedSample : public ::testing::Test {
protected:
    static constexpr int kRes = 8;
    NoiseSchedule schedule = default_schedule();
    ToyPredictor predictor{schedule};
    Conditioning cond = disc_condition(kRes, "a red vase");
    Latent init = Latent::gaussian(kRes, kRes, 3, NoiseStream(11));

    SamplerConfig config(double strength, std::uint64_t seed = 5) const { return {strength, seed, schedule}; }
};

TEST_F(MaskedSample, AllKeepOrIgnoreReturnsInitExactly) {
    for (Label l : {Label::Keep, Label::Ignore}) {
        const Latent out = masked_sample(init, uniform_mask(kRes, l), config(0.5), predictor, cond);
        EXPECT_TRUE(testutil::bitwise_equal(out.values, init.values));
    }
}

TEST_F(MaskedSample, ClampedCellsAreBitExact) {
    GenerationMask mask = uniform_mask(kRes, Label::New);
    const NoiseStream pick(21);
    for (std::size_t c = 0; c < mask.pixel_count(); ++c) mask.label[c] = static_cast<Label>(pick.bits(c) % 4);
    const Latent out = masked_sample(init, mask, config(0.7), predictor, cond);
    for (std::size_t c = 0; c < mask.pixel_count(); ++c) {
        if (mask.label[c] != Label::Keep && mask.label[c] != Label::Ignore) continue;
        for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(out.values[c * 3 + ch], init.values[c * 3 + ch]);
    }
}

TEST_F(MaskedSample, AllNewReachesTargetIndependentOfInit) {
    const BlockCodec codec(8);
    const ViewImage target = codec.decode(ToyPredictor::target(cond));
    for (std::uint64_t k : {1, 2, 3}) {
        const Latent other = Latent::gaussian(kRes, kRes, 3, NoiseStream(100 + k));
        const ViewImage out = codec.decode(masked_sample(other, uniform_mask(kRes, Label::New), config(0.3, k), predictor, cond));
        for (std::size_t p = 0; p < out.pixel_count(); ++p) EXPECT_LE((out.rgb[p] - target.rgb[p]).cwiseAbs().maxCoeff(), 2.0 / 255);
    }
}

TEST_F(MaskedSample, UpdateOnTargetIsFixedPoint) {
    const Latent target = ToyPredictor::target(cond);
    const Latent out = masked_sample(target, uniform_mask(kRes, Label::Update), config(0.5), predictor, cond);
    EXPECT_LE(linf(out, target), 2.0 / 255);
}

TEST_F(MaskedSample, SeedDeterminism) {
    const GenerationMask mask = uniform_mask(kRes, Label::Update);
    const Latent a = masked_sample(init, mask, config(0.4, 9), predictor, cond);
    const Latent b = masked_sample(init, mask, config(0.4, 9), predictor, cond);
    EXPECT_TRUE(testutil::bitwise_equal(a.values, b.values));
}

namespace {

double update_distance(const Latent& out, const Latent& start, const GenerationMask& mask) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < mask.pixel_count(); ++c) {
        if (mask.label[c] != Label::Update) continue;
        for (int ch = 0; ch < 3; ++ch) d2 += std::pow(out.values[c * 3 + ch] - start.values[c * 3 + ch], 2);
    }
    return std::sqrt(d2);
}

struct ZeroPredictor {
    Latent predict(const Latent& z, int, const Conditioning&) const { return Latent::zeros(z.width, z.height, z.channels); }
};

} // namespace

TEST_F(MaskedSample, DistanceFromInitGrowsWithStrength) {
    const Latent start = filled(kRes, 0.5);
    GenerationMask mask = uniform_mask(kRes, Label::Keep);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) mask.label[static_cast<std::size_t>(y) * kRes + x] = Label::Update;
    // The exact toy predictor lands on its target at t = 1 whatever the window,
    // so the distance is flat in gamma up to rounding.
    double prev = 0.0;
    for (double g : {0.1, 0.3, 0.5, 0.8, 1.0}) {
        const double d = update_distance(masked_sample(start, mask, config(g), predictor, cond), start, mask);
        EXPECT_GE(d, prev * (1 - 1e-12)) << g;
        prev = d;
    }
    EXPECT_GT(prev, 0.5);
    // Without denoising the window length shows directly.
    prev = 0.0;
    for (double g : {0.1, 0.3, 0.5, 0.8, 1.0}) {
        const double d = update_distance(masked_sample(start, mask, config(g), ZeroPredictor{}, cond), start, mask);
        EXPECT_GT(d, prev) << g;
        prev = d;
    }
}

TEST_F(MaskedSample, Errors) {
    EXPECT_ERROR_CODE(masked_sample(init, uniform_mask(4, Label::New), config(1.0), predictor, cond), ErrorCode::ShapeMismatch);
    EXPECT_ERROR_CODE(masked_sample(init, uniform_mask(kRes, Label::New), config(1.0), ShrinkingPredictor{}, cond),
                      ErrorCode::ShapeMismatch);
    EXPECT_ERROR_CODE(masked_sample(init, uniform_mask(kRes, Label::New), config(0.0), predictor, cond), ErrorCode::InvalidRange);
    EXPECT_ERROR_CODE(masked_sample(init, uniform_mask(kRes, Label::New), config(1.5), predictor, cond), ErrorCode::InvalidRange);
    EXPECT_ERROR_CODE(masked_sample(init, uniform_mask(kRes, Label::New), config(1.0), ThrowingPredictor{}, cond),
                      ErrorCode::PredictorFailure);
    // Library errors from the predictor keep their code.
    Conditioning wrong = disc_condition(4, "red");
    EXPECT_ERROR_CODE(masked_sample(init, uniform_mask(kRes, Label::New), config(1.0), predictor, wrong), ErrorCode::ShapeMismatch);
}

TEST(StartStep, RoundsStrengthTimesSteps) {
    EXPECT_EQ(start_step(1.0, 1000), 1000);
    EXPECT_EQ(start_step(0.5, 1000), 500);
    EXPECT_EQ(start_step(0.25, 10), 3);
    EXPECT_EQ(start_step(0.04, 10), 0);
}

// ---------------------------------------------------------------- codec, toy target

TEST(BlockCodec, FactorOneIsIdentity) {
    ViewImage img = ViewImage::filled(5, Color::Zero());
    for (std::size_t p = 0; p < img.pixel_count(); ++p) img.rgb[p] = Color(p / 25.0, 1 - p / 25.0, 0.125);
    const BlockCodec codec(1);
    EXPECT_EQ(codec.decode(codec.encode(img)).rgb, img.rgb);
}

TEST(BlockCodec, AveragesBlocksAndRoundTripsBlockConstantImages) {
    const BlockCodec codec(4);
    ViewImage img = ViewImage::filled(8, Color::Zero());
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) img.rgb[y * 8 + x] = Color(x / 4, y / 4, (x + y) % 2);
    const Latent z = codec.encode(img);
    ASSERT_EQ(z.width, 2);
    EXPECT_EQ(z.at(1, 0, 0), 1.0);
    EXPECT_EQ(z.at(0, 1, 1), 1.0);
    EXPECT_EQ(z.at(1, 1, 2), 0.5);
    ViewImage blocky = img;
    for (auto& c : blocky.rgb) c[2] = 0.25;
    EXPECT_EQ(codec.decode(codec.encode(blocky)).rgb, blocky.rgb);
    EXPECT_ERROR_CODE(codec.encode(ViewImage::filled(6, Color::Zero())), ErrorCode::IndivisibleFactor);
    EXPECT_ERROR_CODE(BlockCodec(0), ErrorCode::InvalidArgument);
}

TEST(PromptColor, NamedAndHashed) {
    EXPECT_EQ(prompt_color("red"), Color(1, 0, 0));
    EXPECT_EQ(prompt_color("A shiny BLUE car"), Color(0.0, 0.2, 1.0));
    EXPECT_EQ(prompt_color("a reddish teapot"), prompt_color("a reddish teapot"));
    const Color c = prompt_color("an ornate teapot");
    EXPECT_TRUE((c.array() > 0.0).all() && (c.array() < 1.0).all());
}

TEST(ToyPredictor, FlatDepthRedIsUniformScaledRed) {
    Conditioning c = disc_condition(6, "red", Color(0.1, 0.2, 0.3));
    for (std::size_t p = 0; p < c.depth.values.size(); ++p)
        if (c.depth.values[p] < 1.0) c.depth.values[p] = 0.5;
    const Latent t = ToyPredictor::target(c);
    std::size_t fg = 0;
    for (std::size_t p = 0; p < t.cell_count(); ++p) {
        const Color v(t.values[p * 3], t.values[p * 3 + 1], t.values[p * 3 + 2]);
        if (c.depth.values[p] < 1.0) {
            ++fg;
            EXPECT_EQ(v, Color(1.0, 0.0, 0.0));
        } else {
            EXPECT_EQ(v, Color(0.1, 0.2, 0.3));
        }
    }
    EXPECT_GT(fg, 0u);
}

TEST(ToyPredictor, PredictsSeparatingNoise) {
    const NoiseSchedule s = default_schedule();
    const ToyPredictor p(s);
    const Conditioning c = disc_condition(4, "green");
    const Latent eps = Latent::gaussian(4, 4, 3, NoiseStream(31));
    const Latent zt = q_sample(ToyPredictor::target(c), 300, eps, s);
    EXPECT_LT(linf(p.predict(zt, 300, c), eps), 1e-9);
    EXPECT_ERROR_CODE(p.predict(zt, 0, c), ErrorCode::StepOutOfRange);
}

TEST(DownsampleDepth, IgnoresBackground) {
    DepthImage d{4, std::vector<double>(16, 1.0)};
    d.values[0] = 0.2;
    d.values[1] = 0.4;
    d.values[10] = 0.9;
    const DepthImage out = downsample_depth(d, 2);
    ASSERT_EQ(out.resolution, 2);
    EXPECT_DOUBLE_EQ(out.values[0], 0.3);
    EXPECT_EQ(out.values[1], 1.0);
    EXPECT_EQ(out.values[2], 1.0);
    EXPECT_EQ(out.values[3], 0.9);
    EXPECT_ERROR_CODE(downsample_depth(d, 3), ErrorCode::IndivisibleFactor);
}
