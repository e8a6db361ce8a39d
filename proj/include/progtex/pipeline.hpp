#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "progtex/atlas.hpp"
#include "progtex/backend.hpp"
#include "progtex/camera.hpp"
#include "progtex/error.hpp"
#include "progtex/geometry.hpp"
#include "progtex/raster.hpp"
#include "progtex/rng.hpp"
#include "progtex/texstate.hpp"

namespace progtex {

/// Per-label weights of the view heat. Ignore pixels never contribute.
struct HeatWeights {
    double new_region = 1.0;
    double update = 0.8;
    double keep = 0.0;

    double operator[](Label l) const {
        switch (l) {
        case Label::New: return new_region;
        case Label::Update: return update;
        case Label::Keep: return keep;
        case Label::Ignore: return 0.0;
        }
        return 0.0;
    }
    double max() const { return std::max({new_region, update, keep}); }
};

/// Weighted fraction of non-background pixels worth regenerating; 0 for an empty view.
inline double compute_view_heat(const GenerationMask& mask, const HeatWeights& weights) {
    double sum = 0.0;
    std::size_t foreground = 0;
    for (Label l : mask.label) {
        if (l == Label::Ignore) continue;
        ++foreground;
        sum += weights[l];
    }
    return foreground == 0 ? 0.0 : sum / static_cast<double>(foreground);
}

struct PipelineConfig {
    std::string prompt;
    double gamma_g = 0.5;
    double gamma_r = 0.3;
    int image_resolution = 512;
    int texture_resolution = 1024;
    int n_refine_select = 20;
    HeatWeights weights;
    double heat_stop_threshold = 0.01;
    std::uint64_t seed = 0;
    int steps = 1000;
    double camera_distance = 1.8;
    double fov_deg = 50.0;
    double depth_tolerance = 0.01;
    bool disable_partition = false;
    bool disable_update = false;
    Color unpainted = Color::Constant(0.5);
    /// Overrides the six axis-aligned generation views when set.
    std::optional<std::vector<Viewpoint>> generation_views;

    void validate() const {
        const auto in_unit = [](double g) { return g > 0.0 && g <= 1.0; };
        if (!in_unit(gamma_g) || !in_unit(gamma_r)) fail(ErrorCode::InvalidRange, "gamma_g and gamma_r must lie in (0, 1]");
        if (n_refine_select < 0 || n_refine_select > 36) fail(ErrorCode::InvalidRange, "n_refine_select must lie in [0, 36]");
        if (!(weights.update > weights.keep)) fail(ErrorCode::InvalidRange, "w_update must exceed w_keep");
        if (image_resolution <= 0 || texture_resolution <= 0) fail(ErrorCode::InvalidRange, "resolutions must be positive");
        if (steps < 1) fail(ErrorCode::InvalidRange, "steps must be at least 1");
        if (!(depth_tolerance > 0.0)) fail(ErrorCode::InvalidRange, "depth tolerance must be positive");
    }

    std::vector<Viewpoint> generation_viewpoints() const {
        return generation_views ? *generation_views : preset_generation_views(camera_distance);
    }
};

struct ViewRecord {
    std::string stage;
    int ordinal = 0;
    int candidate = -1; // refinement candidate index, -1 for generation views
    Viewpoint viewpoint;
    std::array<std::size_t, 4> region_pixels{}; // indexed by Label
    double heat = 0.0;
    std::size_t written_texels = 0;
    std::size_t overwritten_texels = 0;
    double coverage = 0.0;
    double mean_best_similarity = 0.0;
    std::uint64_t seed = 0;
    std::string backend_id;
    double wall_ms = 0.0;
};

struct RefineStep {
    int step = 0;
    std::vector<int> candidates; // remaining pool, ascending
    std::vector<double> heats;   // parallel to candidates
    int chosen = -1;
    double chosen_heat = 0.0;
};

struct RunReport {
    std::vector<ViewRecord> views;
    std::vector<RefineStep> refine_steps;
    double coverage = 0.0;
    std::string stop_reason;
    std::optional<std::string> error;

    int total_views() const { return static_cast<int>(views.size()); }
};

inline nlohmann::json to_json(const Viewpoint& v) { return {{"theta", v.theta}, {"phi", v.phi}, {"r", v.r}}; }

inline nlohmann::json to_json(const RunReport& report) {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : report.views) {
        views.push_back({{"stage", v.stage},
                         {"ordinal", v.ordinal},
                         {"candidate", v.candidate},
                         {"viewpoint", to_json(v.viewpoint)},
                         {"regions",
                          {{"new", v.region_pixels[0]}, {"update", v.region_pixels[1]}, {"keep", v.region_pixels[2]},
                           {"ignore", v.region_pixels[3]}}},
                         {"heat", v.heat},
                         {"written_texels", v.written_texels},
                         {"overwritten_texels", v.overwritten_texels},
                         {"coverage", v.coverage},
                         {"mean_best_similarity", v.mean_best_similarity},
                         {"seed", v.seed},
                         {"backend_id", v.backend_id},
                         {"wall_ms", v.wall_ms}});
    }
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : report.refine_steps) {
        steps.push_back({{"step", s.step}, {"candidates", s.candidates}, {"heats", s.heats}, {"chosen", s.chosen},
                         {"chosen_heat", s.chosen_heat}});
    }
    nlohmann::json j{{"views", views},
                     {"refine_steps", steps},
                     {"coverage", report.coverage},
                     {"total_views", report.total_views()},
                     {"stop_reason", report.stop_reason}};
    j["error"] = report.error ? nlohmann::json(*report.error) : nlohmann::json(nullptr);
    return j;
}

/// Everything a hook may want to inspect about one synthesised view.
struct ViewTrace {
    const ViewRecord& record;
    const Camera& camera;
    const GBuffer& gbuffer;
    const GenerationMask& mask;
    const ViewImage& init;
    const ViewImage& result;
    const TextureAtlas& atlas;
};

/// Refinement state right before the chosen view is synthesised.
struct SelectionTrace {
    const RefineStep& step;
    const TextureAtlas& atlas;
};

struct PipelineHooks {
    std::function<void(const ViewTrace&)> on_view;
    std::function<void(const SelectionTrace&)> on_select;
};

namespace detail {

inline PartitionOptions partition_options(const PipelineConfig& config) {
    return {config.disable_partition, config.disable_update, config.depth_tolerance};
}

struct ViewJob {
    std::string stage;
    int candidate = -1;
    Viewpoint viewpoint;
    double strength = 0.5;
    double heat = 0.0;
};

inline void synthesize_view(const Mesh& mesh, const TexelGeometry& geo, TextureAtlas& atlas, const PipelineConfig& config,
                            Backend& backend, const ViewJob& job, const Camera& camera, const GBuffer& gbuffer,
                            const GenerationMask& mask, RunReport& report, const PipelineHooks& hooks) {
    const auto started = std::chrono::steady_clock::now();
    ViewRecord record;
    record.stage = job.stage;
    record.ordinal = report.total_views();
    record.candidate = job.candidate;
    record.viewpoint = job.viewpoint;
    record.region_pixels = mask.counts();
    record.heat = job.heat;
    record.seed = hash_combine(config.seed, static_cast<std::uint64_t>(record.ordinal));

    const ViewImage init = render_view(mesh, atlas, gbuffer, geo, config.unpainted);
    const GenerateRequest request =
        make_request(config.prompt, depth_image(gbuffer), init, mask, job.strength, record.seed, config.steps);
    const GenerateResponse response = backend.generate(request);
    const ViewImage result = decode_view_png(response.image_png);
    if (result.resolution != gbuffer.resolution) fail(ErrorCode::ProtocolError, "backend returned a different resolution");

    const BackProjectResult bp = back_project(result, mask, camera, gbuffer, geo, mesh, atlas,
                                              {config.depth_tolerance, !config.disable_partition});
    record.written_texels = bp.written;
    record.overwritten_texels = bp.overwritten;
    record.coverage = painted_coverage(atlas, geo);
    record.mean_best_similarity = mean_best_similarity(atlas, geo);
    record.backend_id = response.backend_id;
    record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    report.views.push_back(record);
    report.coverage = record.coverage;
    if (hooks.on_view) hooks.on_view({report.views.back(), camera, gbuffer, mask, init, result, atlas});
}

} // namespace detail

/// Paint the mesh progressively from the generation viewpoints, in order.
/// On a backend failure the exception propagates; views already written stay in `atlas`.
inline void generate_stage(const Mesh& mesh, const TexelGeometry& geo, TextureAtlas& atlas, const PipelineConfig& config,
                           Backend& backend, RunReport& report, const PipelineHooks& hooks = {}) {
    config.validate();
    for (const Viewpoint& v : config.generation_viewpoints()) {
        const Camera camera = viewpoint_to_camera(v, config.image_resolution, config.fov_deg);
        const GBuffer gbuffer = rasterize(mesh, camera);
        const GenerationMask mask = partition_view(gbuffer, mesh, geo, atlas, detail::partition_options(config));
        const detail::ViewJob job{"generate", -1, v, config.gamma_g, compute_view_heat(mask, config.weights)};
        detail::synthesize_view(mesh, geo, atlas, config, backend, job, camera, gbuffer, mask, report, hooks);
    }
}

/// Greedy next-best-view refinement over the 36 hemisphere candidates, without
/// replacement. Stops after n_refine_select views or when the best heat falls
/// below the threshold. Ties go to the lowest candidate index.
inline void refine_stage(const Mesh& mesh, const TexelGeometry& geo, TextureAtlas& atlas, const PipelineConfig& config,
                         Backend& backend, RunReport& report, const PipelineHooks& hooks = {}) {
    config.validate();
    const std::vector<Viewpoint> candidates = candidate_refinement_views(config.camera_distance);
    std::vector<Camera> cameras;
    std::vector<GBuffer> gbuffers;
    for (const auto& v : candidates) {
        cameras.push_back(viewpoint_to_camera(v, config.image_resolution, config.fov_deg));
        gbuffers.push_back(rasterize(mesh, cameras.back()));
    }
    std::vector<int> pool(candidates.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);

    report.stop_reason = "budget";
    for (int step = 0; step < config.n_refine_select; ++step) {
        if (pool.empty()) {
            report.stop_reason = "exhausted";
            break;
        }
        RefineStep record;
        record.step = step;
        record.candidates = pool;
        std::vector<GenerationMask> masks;
        std::size_t best = 0;
        for (std::size_t k = 0; k < pool.size(); ++k) {
            masks.push_back(partition_view(gbuffers[pool[k]], mesh, geo, atlas, detail::partition_options(config)));
            record.heats.push_back(compute_view_heat(masks.back(), config.weights));
            if (record.heats[k] > record.heats[best]) best = k;
        }
        record.chosen = pool[best];
        record.chosen_heat = record.heats[best];
        report.refine_steps.push_back(record);
        if (record.chosen_heat < config.heat_stop_threshold) {
            report.refine_steps.back().chosen = -1;
            report.stop_reason = "heat below threshold";
            break;
        }
        if (hooks.on_select) hooks.on_select({report.refine_steps.back(), atlas});

        const int chosen = record.chosen;
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
        const detail::ViewJob job{"refine", chosen, candidates[chosen], config.gamma_r, record.chosen_heat};
        detail::synthesize_view(mesh, geo, atlas, config, backend, job, cameras[chosen], gbuffers[chosen], masks[best],
                                report, hooks);
    }
}

struct RunResult {
    Mesh mesh;
    TexelGeometry texel_geometry;
    TextureAtlas atlas;
    RunReport report;

    bool ok() const { return !report.error.has_value(); }
};

/// Load, normalise, bake, generate, refine. Failures are recorded in
/// `report.error`; whatever was painted before the failure is kept.
inline RunResult run_full(const std::filesystem::path& mesh_path, const PipelineConfig& config, Backend& backend,
                          const PipelineHooks& hooks = {}) {
    RunResult run;
    try {
        config.validate();
        run.mesh = normalize_mesh(load_mesh(mesh_path));
        run.texel_geometry = bake_texel_geometry(run.mesh, config.texture_resolution);
        run.atlas = TextureAtlas::empty(config.texture_resolution, config.unpainted);
        generate_stage(run.mesh, run.texel_geometry, run.atlas, config, backend, run.report, hooks);
        if (config.n_refine_select > 0) {
            refine_stage(run.mesh, run.texel_geometry, run.atlas, config, backend, run.report, hooks);
        } else {
            run.report.stop_reason = "refinement disabled";
        }
    } catch (const std::exception& e) {
        run.report.error = e.what();
    }
    return run;
}

} // namespace progtex
