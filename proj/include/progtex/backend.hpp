#pragma once

// Eigen must precede httplib: <resolv.h> defines a _res macro.
#include <Eigen/Core>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <utility>

#include "progtex/diffusion.hpp"
#include "progtex/error.hpp"
#include "progtex/image_io.hpp"
#include "progtex/raster.hpp"
#include "progtex/texstate.hpp"

namespace progtex {

inline constexpr int kProtocolVersion = 1;

/// Maximum per-channel deviation a backend may introduce on Keep/Ignore pixels.
inline constexpr double kKeepTolerance = 16.0 / 255.0;

/// Mask palette, indexed by Label value.
inline const std::vector<std::array<std::uint8_t, 3>>& mask_palette() {
    static const std::vector<std::array<std::uint8_t, 3>> palette{
        {255, 255, 255}, // New
        {255, 165, 0},   // Update
        {0, 0, 255},     // Keep
        {0, 0, 0},       // Ignore
    };
    return palette;
}

// PNG payload codecs ---------------------------------------------------------

inline std::uint16_t quantize8(double v) {
    return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::string encode_view_png(const ViewImage& image) {
    PngImage png{image.resolution, image.resolution, 3, 8, false, {}, {}};
    png.samples.resize(png.sample_count());
    for (std::size_t p = 0; p < image.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) png.samples[p * 3 + c] = quantize8(image.rgb[p][c]);
    return encode_png(png);
}

inline ViewImage view_from_png(const PngImage& png) {
    if (png.indexed || png.channels != 3 || png.bit_depth != 8 || png.width != png.height) {
        fail(ErrorCode::ProtocolError, "expected a square 8-bit RGB PNG");
    }
    ViewImage image = ViewImage::filled(png.width, Color::Zero());
    for (std::size_t p = 0; p < image.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) image.rgb[p][c] = png.samples[p * 3 + c] / 255.0;
    return image;
}

inline ViewImage decode_view_png(std::string_view bytes) { return view_from_png(decode_png(bytes)); }

inline std::string encode_depth_png(const DepthImage& depth) {
    PngImage png{depth.resolution, depth.resolution, 1, 16, false, {}, {}};
    png.samples.resize(png.sample_count());
    for (std::size_t p = 0; p < depth.values.size(); ++p)
        png.samples[p] = static_cast<std::uint16_t>(std::lround(std::clamp(depth.values[p], 0.0, 1.0) * 65535.0));
    return encode_png(png);
}

inline DepthImage decode_depth_png(std::string_view bytes) {
    const PngImage png = decode_png(bytes);
    if (png.indexed || png.channels != 1 || png.bit_depth != 16 || png.width != png.height) {
        fail(ErrorCode::ProtocolError, "depth must be a square 16-bit grayscale PNG");
    }
    DepthImage depth{png.width, std::vector<double>(png.samples.size())};
    for (std::size_t p = 0; p < png.samples.size(); ++p) depth.values[p] = png.samples[p] / 65535.0;
    return depth;
}

inline std::string encode_mask_png(const GenerationMask& mask) {
    PngImage png{mask.resolution, mask.resolution, 1, 8, true, mask_palette(), {}};
    png.samples.resize(png.sample_count());
    for (std::size_t p = 0; p < mask.pixel_count(); ++p) png.samples[p] = static_cast<std::uint16_t>(mask.label[p]);
    return encode_png(png);
}

inline GenerationMask decode_mask_png(std::string_view bytes) {
    const PngImage png = decode_png(bytes);
    if (!png.indexed || png.width != png.height) fail(ErrorCode::ProtocolError, "mask must be a square indexed PNG");
    GenerationMask mask = GenerationMask::filled(png.width, Label::Ignore);
    for (std::size_t p = 0; p < png.samples.size(); ++p) {
        if (png.samples[p] > static_cast<std::uint16_t>(Label::Ignore)) fail(ErrorCode::ProtocolError, "mask index out of range");
        mask.label[p] = static_cast<Label>(png.samples[p]);
    }
    return mask;
}

inline DepthImage depth_image(const GBuffer& gbuffer) { return {gbuffer.resolution, gbuffer.depth}; }

// Wire types ------------------------------------------------------------------

/// One view-synthesis job. Image fields hold raw PNG bytes; they travel base64-encoded.
struct GenerateRequest {
    std::string prompt;
    std::string depth_png;
    std::string init_image_png;
    std::string mask_png;
    double strength_update = 0.5;
    std::uint64_t seed = 0;
    int steps = 1000;

    bool operator==(const GenerateRequest&) const = default;
};

struct GenerateResponse {
    std::string image_png;
    std::string backend_id;
    double elapsed_ms = 0.0;
    /// Client-side only: Keep/Ignore pixels deviating beyond kKeepTolerance.
    std::size_t keep_violations = 0;
};

inline GenerateRequest make_request(std::string prompt, const DepthImage& depth, const ViewImage& init,
                                    const GenerationMask& mask, double strength_update, std::uint64_t seed, int steps) {
    return {std::move(prompt), encode_depth_png(depth), encode_view_png(init), encode_mask_png(mask), strength_update, seed, steps};
}

namespace detail {

inline void require_version(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorCode::ProtocolError, "payload must be a JSON object");
    const auto it = j.find("protocol_version");
    if (it == j.end() || !it->is_number_integer()) fail(ErrorCode::ProtocolError, "missing protocol_version");
    if (it->get<int>() != kProtocolVersion) {
        fail(ErrorCode::ProtocolError, "unsupported protocol_version " + it->dump());
    }
}

template <class T>
T required(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) fail(ErrorCode::ProtocolError, std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::ProtocolError, std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace detail

inline nlohmann::json to_json(const GenerateRequest& r) {
    return {{"protocol_version", kProtocolVersion},
            {"prompt", r.prompt},
            {"depth", base64_encode(r.depth_png)},
            {"init_image", base64_encode(r.init_image_png)},
            {"mask", base64_encode(r.mask_png)},
            {"strength_update", r.strength_update},
            {"seed", r.seed},
            {"steps", r.steps}};
}

inline GenerateRequest request_from_json(const nlohmann::json& j) {
    detail::require_version(j);
    GenerateRequest r;
    r.prompt = detail::required<std::string>(j, "prompt");
    r.depth_png = base64_decode(detail::required<std::string>(j, "depth"));
    r.init_image_png = base64_decode(detail::required<std::string>(j, "init_image"));
    r.mask_png = base64_decode(detail::required<std::string>(j, "mask"));
    r.strength_update = detail::required<double>(j, "strength_update");
    r.seed = detail::required<std::uint64_t>(j, "seed");
    r.steps = detail::required<int>(j, "steps");
    return r;
}

inline nlohmann::json to_json(const GenerateResponse& r) {
    return {{"protocol_version", kProtocolVersion},
            {"image", base64_encode(r.image_png)},
            {"backend_id", r.backend_id},
            {"elapsed_ms", r.elapsed_ms}};
}

inline GenerateResponse response_from_json(const nlohmann::json& j) {
    detail::require_version(j);
    GenerateResponse r;
    r.image_png = base64_decode(detail::required<std::string>(j, "image"));
    r.backend_id = detail::required<std::string>(j, "backend_id");
    r.elapsed_ms = detail::required<double>(j, "elapsed_ms");
    return r;
}

/// Decoded request payloads, validated for a shared resolution.
struct DecodedRequest {
    DepthImage depth;
    ViewImage init;
    GenerationMask mask;
};

inline DecodedRequest decode_request(const GenerateRequest& request) {
    DecodedRequest d{decode_depth_png(request.depth_png), decode_view_png(request.init_image_png),
                     decode_mask_png(request.mask_png)};
    if (d.depth.resolution != d.init.resolution || d.mask.resolution != d.init.resolution) {
        fail(ErrorCode::ShapeMismatch, "depth, init_image and mask must share one resolution");
    }
    if (!(request.strength_update > 0.0 && request.strength_update <= 1.0)) {
        fail(ErrorCode::InvalidRange, "strength_update must lie in (0, 1]");
    }
    if (request.steps < 1) fail(ErrorCode::InvalidRange, "steps must be at least 1");
    return d;
}

/// Count Keep/Ignore pixels of `image` that deviate from the request's init image
/// by more than kKeepTolerance in any channel.
inline std::size_t count_keep_violations(const GenerateRequest& request, const ViewImage& image) {
    const ViewImage init = decode_view_png(request.init_image_png);
    const GenerationMask mask = decode_mask_png(request.mask_png);
    if (image.resolution != init.resolution) fail(ErrorCode::ProtocolError, "response resolution differs from request");
    std::size_t violations = 0;
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        if (mask.label[p] != Label::Keep && mask.label[p] != Label::Ignore) continue;
        if ((image.rgb[p] - init.rgb[p]).cwiseAbs().maxCoeff() > kKeepTolerance + 1e-12) ++violations;
    }
    return violations;
}

// Backends --------------------------------------------------------------------

struct LocalBackendOptions {
    int codec_factor = 8;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

inline constexpr const char* kToyBackendId = "toy-local/1";

/// In-process backend: toy predictor + block codec through masked_sample. Keep and
/// Ignore pixels are copied from the init image after decoding.
inline GenerateResponse local_generate(const GenerateRequest& request, const LocalBackendOptions& options = {}) {
    const auto started = std::chrono::steady_clock::now();
    const DecodedRequest in = decode_request(request);
    const BlockCodec codec(options.codec_factor);

    const Latent init_latent = codec.encode(in.init);
    const GenerationMask latent_mask = downsample_mask(in.mask, codec.factor());
    Conditioning cond{request.prompt, downsample_depth(in.depth, codec.factor()),
                      ViewImage::filled(init_latent.width, Color::Zero())};
    for (std::size_t p = 0; p < init_latent.cell_count(); ++p)
        for (int c = 0; c < 3; ++c) cond.init_view.rgb[p][c] = init_latent.values[p * 3 + c];

    SamplerConfig config{request.strength_update, request.seed,
                         NoiseSchedule::linear(request.steps, options.beta_start, options.beta_end)};
    const ToyPredictor predictor(config.schedule);
    const Latent z0 = masked_sample(init_latent, latent_mask, config, predictor, cond);

    ViewImage out = codec.decode(z0);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        const Label l = in.mask.label[p];
        out.rgb[p] = (l == Label::Keep || l == Label::Ignore) ? in.init.rgb[p] : out.rgb[p].cwiseMax(0.0).cwiseMin(1.0);
    }
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started);
    return {encode_view_png(out), kToyBackendId, elapsed.count(), 0};
}

class Backend {
public:
    virtual ~Backend() = default;
    virtual GenerateResponse generate(const GenerateRequest& request) = 0;
    virtual std::string describe() const = 0;
};

class LocalBackend final : public Backend {
public:
    explicit LocalBackend(LocalBackendOptions options = {}) : options_(options) {}
    GenerateResponse generate(const GenerateRequest& request) override { return local_generate(request, options_); }
    std::string describe() const override { return "local"; }

private:
    LocalBackendOptions options_;
};

namespace detail {

struct Endpoint {
    std::string scheme_host_port;
    std::string base_path;
};

inline Endpoint parse_endpoint(const std::string& url) {
    constexpr std::string_view kScheme = "http://";
    if (url.rfind(kScheme, 0) != 0) fail(ErrorCode::InvalidArgument, "endpoint must be an http:// URL: " + url);
    const auto slash = url.find('/', kScheme.size());
    Endpoint e{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
    while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
    return e;
}

inline void configure_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
}

} // namespace detail

/// POST the request to `<endpoint>/v1/generate`. Transport failures (refused,
/// unreachable, timed out) surface as Timeout. Keep-pixel deviations are
/// logged and counted in `keep_violations`, not thrown.
inline GenerateResponse remote_generate(const std::string& endpoint, const GenerateRequest& request,
                                        std::chrono::milliseconds timeout) {
    const auto ep = detail::parse_endpoint(endpoint);
    httplib::Client client(ep.scheme_host_port);
    detail::configure_timeouts(client, timeout);
    const auto result = client.Post(ep.base_path + "/v1/generate", to_json(request).dump(), "application/json");
    if (!result) {
        fail(ErrorCode::Timeout, "no response from " + endpoint + " within " + std::to_string(timeout.count()) +
                                     " ms (" + httplib::to_string(result.error()) + ")");
    }
    nlohmann::json body;
    try {
        body = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception&) {
        if (result->status != 200) fail(ErrorCode::BackendError, "HTTP " + std::to_string(result->status) + ": " + result->body);
        fail(ErrorCode::ProtocolError, "response is not JSON");
    }
    if (result->status != 200) {
        const std::string message = body.is_object() && body.contains("error") && body["error"].is_string()
            ? body["error"].get<std::string>()
            : result->body;
        fail(ErrorCode::BackendError, "HTTP " + std::to_string(result->status) + ": " + message);
    }
    GenerateResponse response = response_from_json(body);
    const ViewImage image = decode_view_png(response.image_png);
    response.keep_violations = count_keep_violations(request, image);
    if (response.keep_violations > 0) {
        std::clog << "progtex: ContractViolation: " << response.keep_violations
                  << " keep/ignore pixels deviate beyond 16/255 (backend " << response.backend_id << ")\n";
    }
    return response;
}

/// GET `<endpoint>/v1/health`.
inline nlohmann::json remote_health(const std::string& endpoint, std::chrono::milliseconds timeout) {
    const auto ep = detail::parse_endpoint(endpoint);
    httplib::Client client(ep.scheme_host_port);
    detail::configure_timeouts(client, timeout);
    const auto result = client.Get(ep.base_path + "/v1/health");
    if (!result) fail(ErrorCode::Timeout, "no response from " + endpoint);
    if (result->status != 200) fail(ErrorCode::BackendError, "HTTP " + std::to_string(result->status));
    try {
        return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::ProtocolError, "health response is not JSON");
    }
}

class RemoteBackend final : public Backend {
public:
    RemoteBackend(std::string endpoint, std::chrono::milliseconds timeout)
        : endpoint_(std::move(endpoint)), timeout_(timeout) {
        detail::parse_endpoint(endpoint_);
    }
    GenerateResponse generate(const GenerateRequest& request) override {
        return remote_generate(endpoint_, request, timeout_);
    }
    std::string describe() const override { return endpoint_; }

private:
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
};

using GenerateHandler = std::function<GenerateResponse(const GenerateRequest&)>;

/// Install `/v1/generate` and `/v1/health` on a server. Malformed requests get
/// 400, handler failures 500, both with a JSON `error` message.
inline void mount_protocol_routes(httplib::Server& server, GenerateHandler handler, std::string backend_id) {
    server.Post("/v1/generate", [handler = std::move(handler)](const httplib::Request& req, httplib::Response& res) {
        const auto reply_error = [&](int status, const std::string& message) {
            res.status = status;
            res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
        };
        GenerateRequest request;
        try {
            request = request_from_json(nlohmann::json::parse(req.body));
            decode_request(request);
        } catch (const nlohmann::json::exception& e) {
            return reply_error(400, std::string("malformed JSON: ") + e.what());
        } catch (const Error& e) {
            return reply_error(400, e.what());
        }
        try {
            res.set_content(to_json(handler(request)).dump(), "application/json");
        } catch (const std::exception& e) {
            reply_error(500, e.what());
        }
    });
    server.Get("/v1/health", [backend_id = std::move(backend_id)](const httplib::Request&, httplib::Response& res) {
        res.set_content(nlohmann::json{{"status", "ok"}, {"backend_id", backend_id}, {"protocol_version", kProtocolVersion}}.dump(),
                        "application/json");
    });
}

} // namespace progtex
