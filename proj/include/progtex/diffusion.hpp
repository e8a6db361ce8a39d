#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <string>
#include <string_view>
#include <vector>

#include "progtex/atlas.hpp"
#include "progtex/error.hpp"
#include "progtex/raster.hpp"
#include "progtex/rng.hpp"
#include "progtex/texstate.hpp"

namespace progtex {

/// Forward-process variances. beta(t) for t in [1, T]; alphabar(t) for t in
/// [0, T] with alphabar(0) = 1 and alphabar(t) = prod_{s<=t} (1 - beta(s)).
class NoiseSchedule {
public:
    NoiseSchedule() = default;

    static NoiseSchedule linear(int steps, double beta_start, double beta_end) {
        if (steps < 1) fail(ErrorCode::InvalidRange, "schedule needs at least one step");
        if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
            fail(ErrorCode::InvalidRange, "betas must satisfy 0 < beta_start <= beta_end < 1");
        }
        NoiseSchedule s;
        s.betas_.resize(steps);
        s.alphabars_.resize(steps + 1);
        s.alphabars_[0] = 1.0;
        for (int t = 1; t <= steps; ++t) {
            const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
            s.betas_[t - 1] = beta_start + (beta_end - beta_start) * frac;
            s.alphabars_[t] = s.alphabars_[t - 1] * (1.0 - s.betas_[t - 1]);
        }
        return s;
    }

    int steps() const { return static_cast<int>(betas_.size()); }
    double beta(int t) const { return betas_.at(static_cast<std::size_t>(t - 1)); }
    double alphabar(int t) const { return alphabars_.at(static_cast<std::size_t>(t)); }
    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alphabars() const { return alphabars_; }

private:
    std::vector<double> betas_;
    std::vector<double> alphabars_;
};

/// Dense latent grid, interleaved channels, row 0 at the top.
struct Latent {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> values;

    static Latent zeros(int width, int height, int channels) {
        if (width <= 0 || height <= 0 || channels <= 0) fail(ErrorCode::ShapeMismatch, "latent dimensions must be positive");
        return {width, height, channels, std::vector<double>(static_cast<std::size_t>(width) * height * channels, 0.0)};
    }

    static Latent gaussian(int width, int height, int channels, const NoiseStream& stream) {
        Latent z = zeros(width, height, channels);
        for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] = stream.gaussian(i);
        return z;
    }

    std::size_t cell_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Latent& o) const { return width == o.width && height == o.height && channels == o.channels; }
    double& at(int x, int y, int c) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int x, int y, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

    bool operator==(const Latent&) const = default;
};

/// Normalised depth image, 1 = background.
struct DepthImage {
    int resolution = 0;
    std::vector<double> values;
};

struct Conditioning {
    std::string prompt;
    DepthImage depth;
    ViewImage init_view;
};

struct SamplerConfig {
    double strength = 1.0; // gamma in (0, 1]
    std::uint64_t seed = 0;
    NoiseSchedule schedule;
};

template <class P>
concept NoisePredictor = requires(const P& p, const Latent& z, int t, const Conditioning& c) {
    { p.predict(z, t, c) } -> std::convertible_to<Latent>;
};

template <class C>
concept LatentCodec = requires(const C& c, const ViewImage& image, const Latent& z) {
    { c.encode(image) } -> std::convertible_to<Latent>;
    { c.decode(z) } -> std::convertible_to<ViewImage>;
    { c.factor() } -> std::convertible_to<int>;
};

/// RGB "latent" at 1/factor resolution: block-average encode, nearest-neighbour
/// decode. factor = 1 is an exact identity.
class BlockCodec {
public:
    explicit BlockCodec(int factor = 8) : factor_(factor) {
        if (factor <= 0) fail(ErrorCode::InvalidArgument, "codec factor must be positive");
    }

    int factor() const { return factor_; }

    Latent encode(const ViewImage& image) const {
        if (image.resolution % factor_ != 0) {
            fail(ErrorCode::IndivisibleFactor, "codec factor does not divide image resolution");
        }
        const int res = image.resolution / factor_;
        Latent z = Latent::zeros(res, res, 3);
        if (factor_ == 1) {
            for (std::size_t p = 0; p < image.pixel_count(); ++p)
                for (int c = 0; c < 3; ++c) z.values[p * 3 + c] = image.rgb[p][c];
            return z;
        }
        const double norm = 1.0 / (static_cast<double>(factor_) * factor_);
        for (int y = 0; y < image.resolution; ++y)
            for (int x = 0; x < image.resolution; ++x)
                for (int c = 0; c < 3; ++c)
                    z.at(x / factor_, y / factor_, c) += image.rgb[static_cast<std::size_t>(y) * image.resolution + x][c];
        for (auto& v : z.values) v *= norm;
        return z;
    }

    ViewImage decode(const Latent& z) const {
        if (z.channels != 3 || z.width != z.height) fail(ErrorCode::ShapeMismatch, "codec expects a square RGB latent");
        const int res = z.width * factor_;
        ViewImage image = ViewImage::filled(res, Color::Zero());
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x)
                for (int c = 0; c < 3; ++c)
                    image.rgb[static_cast<std::size_t>(y) * res + x][c] = z.at(x / factor_, y / factor_, c);
        return image;
    }

private:
    int factor_;
};

static_assert(LatentCodec<BlockCodec>);

/// Block-average a depth map, ignoring background pixels; all-background blocks stay 1.
inline DepthImage downsample_depth(const DepthImage& depth, int factor) {
    if (factor <= 0 || depth.resolution % factor != 0) fail(ErrorCode::IndivisibleFactor, "factor does not divide depth resolution");
    const int res = depth.resolution / factor;
    std::vector<double> sum(static_cast<std::size_t>(res) * res, 0.0);
    std::vector<int> count(sum.size(), 0);
    for (int y = 0; y < depth.resolution; ++y) {
        for (int x = 0; x < depth.resolution; ++x) {
            const double d = depth.values[static_cast<std::size_t>(y) * depth.resolution + x];
            if (d >= 1.0) continue;
            const auto cell = static_cast<std::size_t>(y / factor) * res + x / factor;
            sum[cell] += d;
            ++count[cell];
        }
    }
    DepthImage out{res, std::vector<double>(sum.size(), 1.0)};
    for (std::size_t i = 0; i < sum.size(); ++i)
        if (count[i] > 0) out.values[i] = sum[i] / count[i];
    return out;
}

inline void check_step(int t, int lo, const NoiseSchedule& schedule) {
    if (t < lo || t > schedule.steps()) {
        fail(ErrorCode::StepOutOfRange, "step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                                            std::to_string(schedule.steps()) + "]");
    }
}

/// Closed-form forward noising: sqrt(abar_t) z0 + sqrt(1 - abar_t) noise. t = 0 returns z0.
inline Latent q_sample(const Latent& z0, int t, const Latent& noise, const NoiseSchedule& schedule) {
    if (!z0.same_shape(noise)) fail(ErrorCode::ShapeMismatch, "q_sample: latent and noise shapes differ");
    check_step(t, 0, schedule);
    if (t == 0) return z0;
    const double a = std::sqrt(schedule.alphabar(t));
    const double b = std::sqrt(1.0 - schedule.alphabar(t));
    Latent out = z0;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a * z0.values[i] + b * noise.values[i];
    return out;
}

/// One ancestral step from t to t-1 with epsilon prediction and sigma_t^2 = beta_t
/// (sigma_1 = 0).
inline Latent ddpm_step(const Latent& z_t, const Latent& eps_hat, int t, const Latent& noise,
                        const NoiseSchedule& schedule) {
    if (!z_t.same_shape(eps_hat) || !z_t.same_shape(noise)) fail(ErrorCode::ShapeMismatch, "ddpm_step: shapes differ");
    check_step(t, 1, schedule);
    const double beta = schedule.beta(t);
    const double scale = 1.0 / std::sqrt(1.0 - beta);
    const double eps_scale = beta / std::sqrt(1.0 - schedule.alphabar(t));
    const double sigma = t > 1 ? std::sqrt(beta) : 0.0;
    Latent out = z_t;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = scale * (z_t.values[i] - eps_scale * eps_hat.values[i]) + sigma * noise.values[i];
    }
    return out;
}

/// Step at which Update regions start denoising: round(gamma * T).
inline int start_step(double strength, int steps) {
    return static_cast<int>(std::lround(strength * steps));
}

namespace detail {
inline constexpr std::uint64_t kBranchInit = 0;
inline constexpr std::uint64_t kBranchReverse = 1;
inline constexpr std::uint64_t kBranchKnown = 2;
} // namespace detail

/// Mask-blended reverse process. New cells are generated over all T steps,
/// Update cells over the last round(gamma * T) steps, and every other cell is
/// replaced at each step by the init latent noised to the matching level.
template <NoisePredictor Predictor>
Latent masked_sample(const Latent& init, const GenerationMask& mask, const SamplerConfig& config,
                     const Predictor& predictor, const Conditioning& cond) {
    if (init.width != mask.resolution || init.height != mask.resolution) {
        fail(ErrorCode::ShapeMismatch, "mask resolution must equal the latent resolution");
    }
    if (!(config.strength > 0.0 && config.strength <= 1.0)) fail(ErrorCode::InvalidRange, "strength must lie in (0, 1]");
    for (double v : init.values)
        if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "init latent has non-finite values");

    const NoiseSchedule& schedule = config.schedule;
    const int T = schedule.steps();
    const int t_start = start_step(config.strength, T);
    const NoiseStream root(config.seed);
    const int ch = init.channels;

    Latent z = Latent::gaussian(init.width, init.height, ch, root.fork(detail::kBranchInit));
    for (int t = T; t >= 1; --t) {
        Latent eps;
        try {
            eps = predictor.predict(z, t, cond);
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            fail(ErrorCode::PredictorFailure, e.what());
        }
        if (!eps.same_shape(z)) fail(ErrorCode::ShapeMismatch, "predictor changed the latent shape");

        // Noise is position-indexed, so draw each stream only where it is used:
        // reverse noise on generated cells, forward noise on clamped ones.
        const NoiseStream step_stream = root.fork(static_cast<std::uint64_t>(t));
        const NoiseStream reverse_stream = step_stream.fork(detail::kBranchReverse);
        const NoiseStream known_stream = step_stream.fork(detail::kBranchKnown);
        Latent reverse_noise = Latent::zeros(z.width, z.height, ch);
        Latent known_noise = Latent::zeros(z.width, z.height, ch);
        std::vector<std::uint8_t> generate(z.cell_count());
        for (std::size_t cell = 0; cell < z.cell_count(); ++cell) {
            const Label l = mask.label[cell];
            generate[cell] = l == Label::New || (l == Label::Update && t <= t_start);
            if (t == 1) continue; // sigma_1 = 0 and q_sample at 0 is init
            Latent& target = generate[cell] ? reverse_noise : known_noise;
            const NoiseStream& stream = generate[cell] ? reverse_stream : known_stream;
            for (int c = 0; c < ch; ++c) {
                const std::size_t i = cell * ch + c;
                target.values[i] = stream.gaussian(i);
            }
        }
        Latent next = ddpm_step(z, eps, t, reverse_noise, schedule);
        const Latent known = q_sample(init, t - 1, known_noise, schedule);
        for (std::size_t cell = 0; cell < z.cell_count(); ++cell) {
            if (generate[cell]) continue;
            for (int c = 0; c < ch; ++c) next.values[cell * ch + c] = known.values[cell * ch + c];
        }
        z = std::move(next);
    }
    return z;
}

/// Base colour for a prompt: the first colour word it contains, otherwise a
/// palette entry picked by hashing the text.
inline Color prompt_color(std::string_view prompt) {
    struct Named {
        std::string_view name;
        std::array<double, 3> rgb;
    };
    static constexpr std::array<Named, 16> kNamed{{
        {"red", {1.0, 0.0, 0.0}},     {"green", {0.0, 0.6, 0.0}},   {"blue", {0.0, 0.2, 1.0}},
        {"yellow", {1.0, 0.9, 0.0}},  {"orange", {1.0, 0.5, 0.0}},  {"purple", {0.5, 0.0, 0.6}},
        {"pink", {1.0, 0.5, 0.7}},    {"brown", {0.5, 0.3, 0.1}},   {"black", {0.05, 0.05, 0.05}},
        {"white", {0.95, 0.95, 0.95}}, {"gray", {0.5, 0.5, 0.5}},   {"grey", {0.5, 0.5, 0.5}},
        {"cyan", {0.0, 0.8, 0.8}},    {"magenta", {0.8, 0.0, 0.8}}, {"gold", {0.85, 0.65, 0.1}},
        {"silver", {0.75, 0.75, 0.78}},
    }};
    std::string word;
    const auto match = [&]() -> const Named* {
        for (const auto& n : kNamed)
            if (word == n.name) return &n;
        return nullptr;
    };
    for (std::size_t i = 0; i <= prompt.size(); ++i) {
        const char ch = i < prompt.size() ? prompt[i] : ' ';
        if (std::isalpha(static_cast<unsigned char>(ch))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
            continue;
        }
        if (const Named* n = match()) return {n->rgb[0], n->rgb[1], n->rgb[2]};
        word.clear();
    }
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (char ch : prompt) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    static constexpr std::array<std::array<double, 3>, 8> kPalette{{
        {0.80, 0.36, 0.27}, {0.27, 0.55, 0.80}, {0.35, 0.70, 0.35}, {0.85, 0.75, 0.30},
        {0.60, 0.40, 0.70}, {0.30, 0.70, 0.70}, {0.75, 0.50, 0.35}, {0.55, 0.55, 0.60},
    }};
    const auto& c = kPalette[h % kPalette.size()];
    return {c[0], c[1], c[2]};
}

/// Deterministic stand-in for a pretrained denoiser: predicts exactly the noise
/// that separates z_t from a depth-shaded prompt colour (foreground) or the
/// conditioning image (background), so sampling lands on that target.
class ToyPredictor {
public:
    explicit ToyPredictor(NoiseSchedule schedule) : schedule_(std::move(schedule)) {}

    /// Target latent at the conditioning's (latent) resolution.
    static Latent target(const Conditioning& cond) {
        const int res = cond.depth.resolution;
        if (cond.init_view.resolution != res) fail(ErrorCode::ShapeMismatch, "depth and init view resolutions differ");
        const Color base = prompt_color(cond.prompt);
        Latent z = Latent::zeros(res, res, 3);
        for (std::size_t p = 0; p < z.cell_count(); ++p) {
            const double d = cond.depth.values[p];
            for (int c = 0; c < 3; ++c) {
                z.values[p * 3 + c] = d < 1.0 ? std::clamp(base[c] * (1.25 - 0.5 * d), 0.0, 1.0) : cond.init_view.rgb[p][c];
            }
        }
        return z;
    }

    Latent predict(const Latent& z_t, int t, const Conditioning& cond) const {
        if (cond.depth.resolution != z_t.width || z_t.width != z_t.height || z_t.channels != 3) {
            fail(ErrorCode::ShapeMismatch, "toy predictor needs a square RGB latent matching the depth map");
        }
        check_step(t, 1, schedule_);
        const Latent tgt = target(cond);
        const double a = std::sqrt(schedule_.alphabar(t));
        const double b = std::sqrt(1.0 - schedule_.alphabar(t));
        Latent eps = z_t;
        for (std::size_t i = 0; i < eps.values.size(); ++i) eps.values[i] = (z_t.values[i] - a * tgt.values[i]) / b;
        return eps;
    }

    const NoiseSchedule& schedule() const { return schedule_; }

private:
    NoiseSchedule schedule_;
};

static_assert(NoisePredictor<ToyPredictor>);

} // namespace progtex
