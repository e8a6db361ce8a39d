#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "progtex/backend.hpp"
#include "progtex/camera.hpp"
#include "progtex/error.hpp"
#include "progtex/export.hpp"
#include "progtex/geometry.hpp"
#include "progtex/pipeline.hpp"
#include "progtex/raster.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <toml.hpp>

namespace progtex::cli {

namespace fs = std::filesystem;

/// Flat key/value settings from a JSON or TOML file (chosen by extension).
inline nlohmann::json load_config_file(const fs::path& path) {
    const std::string text = read_file(path);
    if (path.extension() == ".toml") {
        try {
            const toml::table table = toml::parse(text, path.string());
            std::ostringstream json_text;
            json_text << toml::json_formatter{table};
            return nlohmann::json::parse(json_text.str());
        } catch (const toml::parse_error& e) {
            fail(ErrorCode::ParseError, path.string() + ": " + std::string(e.description()));
        }
    }
    try {
        auto j = nlohmann::json::parse(text);
        if (!j.is_object()) fail(ErrorCode::ParseError, path.string() + ": config must be an object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

/// Fully resolved `generate` settings.
struct CliConfig {
    PipelineConfig pipeline;
    fs::path mesh;
    fs::path out = "out";
    std::string backend = "local";
    bool debug_dumps = false;
    bool deterministic = false;
    bool seed_given = false;
    int timeout_ms = 600000;
    int latent_factor = 8;
};

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& target) {
    if (!j.contains(key)) return;
    try {
        target = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::ParseError, std::string("config key '") + key + "' has the wrong type");
    }
}

inline void apply_settings(const nlohmann::json& j, CliConfig& c) {
    static const std::vector<std::string> kKnown{
        "mesh", "prompt", "out", "backend", "seed", "image_res", "tex_res", "gamma_g", "gamma_r", "refine_views",
        "steps", "debug_dumps", "disable_partition", "disable_update", "deterministic", "timeout_ms",
        "latent_factor", "camera_distance", "fov", "heat_stop_threshold", "w_new", "w_update", "w_keep",
        "depth_tolerance"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
            fail(ErrorCode::ParseError, "unknown config key '" + key + "'");
        }
    }
    std::string path;
    if (j.contains("mesh")) {
        take(j, "mesh", path);
        c.mesh = path;
    }
    if (j.contains("out")) {
        take(j, "out", path);
        c.out = path;
    }
    auto& p = c.pipeline;
    take(j, "prompt", p.prompt);
    take(j, "backend", c.backend);
    if (j.contains("seed")) {
        take(j, "seed", p.seed);
        c.seed_given = true;
    }
    take(j, "image_res", p.image_resolution);
    take(j, "tex_res", p.texture_resolution);
    take(j, "gamma_g", p.gamma_g);
    take(j, "gamma_r", p.gamma_r);
    take(j, "refine_views", p.n_refine_select);
    take(j, "steps", p.steps);
    take(j, "debug_dumps", c.debug_dumps);
    take(j, "disable_partition", p.disable_partition);
    take(j, "disable_update", p.disable_update);
    take(j, "deterministic", c.deterministic);
    take(j, "timeout_ms", c.timeout_ms);
    take(j, "latent_factor", c.latent_factor);
    take(j, "camera_distance", p.camera_distance);
    take(j, "fov", p.fov_deg);
    take(j, "heat_stop_threshold", p.heat_stop_threshold);
    take(j, "w_new", p.weights.new_region);
    take(j, "w_update", p.weights.update);
    take(j, "w_keep", p.weights.keep);
    take(j, "depth_tolerance", p.depth_tolerance);
}

inline std::unique_ptr<Backend> make_backend(const CliConfig& c) {
    if (c.backend == "local") return std::make_unique<LocalBackend>(LocalBackendOptions{c.latent_factor});
    return std::make_unique<RemoteBackend>(c.backend, std::chrono::milliseconds(c.timeout_ms));
}

inline void write_debug_view(const fs::path& dir, const ViewTrace& trace) {
    fs::create_directories(dir);
    char prefix[64];
    std::snprintf(prefix, sizeof prefix, "%02d_%s", trace.record.ordinal, trace.record.stage.c_str());
    const std::string p = prefix;
    write_file(dir / (p + "_depth.png"), encode_depth_png(depth_image(trace.gbuffer)));
    write_file(dir / (p + "_similarity.png"), encode_gray16_png(trace.gbuffer.resolution, trace.gbuffer.similarity));
    write_file(dir / (p + "_mask.png"), encode_mask_png(trace.mask));
    write_file(dir / (p + "_init.png"), encode_view_png(trace.init));
    write_file(dir / (p + "_image.png"), encode_view_png(trace.result));
}

} // namespace detail

/// Runs the full pipeline; always leaves report.json in the output directory.
inline int cmd_generate(const CliConfig& config, std::ostream& out, std::ostream& err) {
    CliConfig c = config;
    fs::create_directories(c.out);
    nlohmann::json report_json;
    const auto write_report = [&](const nlohmann::json& j) {
        write_file(c.out / "report.json", j.dump(2) + "\n");
    };
    const auto fail_early = [&](const std::string& message) {
        RunReport r;
        r.error = message;
        auto j = to_json(r);
        j["seed"] = c.pipeline.seed;
        write_report(j);
        err << "error: " << message << '\n';
        return 1;
    };

    if (c.deterministic && !c.seed_given) return fail_early("--deterministic requires --seed");
    if (!c.seed_given) c.pipeline.seed = std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32);
    if (c.mesh.empty()) return fail_early("no mesh given (--mesh)");
    if (!fs::exists(c.mesh)) return fail_early("mesh not found: " + c.mesh.string());

    std::unique_ptr<Backend> backend;
    try {
        backend = detail::make_backend(c);
    } catch (const std::exception& e) {
        return fail_early(e.what());
    }
    PipelineHooks hooks;
    if (c.debug_dumps) {
        hooks.on_view = [dir = c.out / "debug"](const ViewTrace& t) { detail::write_debug_view(dir, t); };
    }
    hooks.on_view = [inner = hooks.on_view, &out](const ViewTrace& t) {
        out << t.record.stage << " view " << t.record.ordinal << ": theta=" << t.record.viewpoint.theta
            << " phi=" << t.record.viewpoint.phi << " written=" << t.record.written_texels
            << " coverage=" << t.record.coverage << '\n';
        if (inner) inner(t);
    };

    RunResult run = run_full(c.mesh, c.pipeline, *backend, hooks);
    report_json = to_json(run.report);
    report_json["seed"] = c.pipeline.seed;
    report_json["prompt"] = c.pipeline.prompt;
    report_json["backend"] = backend->describe();
    if (run.atlas.resolution > 0 && !run.mesh.faces.empty()) {
        try {
            export_textured_mesh(c.out, run.mesh, run.atlas);
        } catch (const std::exception& e) {
            if (!run.report.error) run.report.error = e.what();
            report_json["error"] = *run.report.error;
        }
    }
    write_report(report_json);
    if (!run.ok()) {
        err << "error: " << *run.report.error << '\n';
        return 1;
    }
    out << "coverage " << run.report.coverage << " after " << run.report.total_views() << " views; wrote "
        << (c.out / "model.obj").string() << '\n';
    return 0;
}

struct TurntableConfig {
    fs::path input;
    fs::path out = "turntable";
    int frames = 8;
    double elevation = 20.0;
    double start_azimuth = 0.0;
    double distance = 1.8;
    double fov = 50.0;
    int image_resolution = 512;
};

inline int cmd_turntable(const TurntableConfig& c, std::ostream& out, std::ostream& err) {
    try {
        if (c.frames < 1) fail(ErrorCode::InvalidArgument, "--frames must be at least 1");
        fs::path obj = c.input;
        if (fs::is_directory(obj)) obj /= "model.obj";
        if (!fs::exists(obj)) fail(ErrorCode::IoError, "missing textured mesh: " + obj.string());
        const fs::path texture = find_texture_for(obj);
        if (!fs::exists(texture)) fail(ErrorCode::IoError, "missing texture: " + texture.string());
        const Mesh mesh = normalize_mesh(load_mesh(obj));
        const TextureAtlas atlas = decode_texture_png(read_file(texture));
        const TexelGeometry geo = bake_texel_geometry(mesh, atlas.resolution);
        fs::create_directories(c.out);
        for (int k = 0; k < c.frames; ++k) {
            const Viewpoint v = Viewpoint::make(c.start_azimuth + 360.0 * k / c.frames, c.elevation, c.distance);
            const Camera camera = viewpoint_to_camera(v, c.image_resolution, c.fov);
            const ViewImage frame = render_view(mesh, atlas, rasterize(mesh, camera), geo);
            char name[32];
            std::snprintf(name, sizeof name, "frame_%03d.png", k);
            write_file(c.out / name, encode_view_png(frame));
        }
        out << "wrote " << c.frames << " frames to " << c.out.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

inline int cmd_validate(const fs::path& mesh_path, int tex_res, std::ostream& out, std::ostream& err) {
    try {
        const Mesh mesh = normalize_mesh(load_mesh(mesh_path));
        const TexelGeometry geo = bake_texel_geometry(mesh, tex_res);
        out << "vertices: " << mesh.vertex_count() << '\n'
            << "faces: " << mesh.face_count() << '\n'
            << "texture resolution: " << tex_res << '\n'
            << "valid texels: " << geo.valid_count() << '\n'
            << "uv coverage: " << geo.coverage() << '\n'
            << "overlapping texels: " << geo.overlap_texels << '\n';
        if (geo.overlap_texels > 0) {
            err << "warning: " << geo.overlap_texels << " texels are claimed by more than one face (first face kept)\n";
        }
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

inline int cmd_serve(const std::string& host, int port, int latent_factor, std::ostream& out) {
    httplib::Server server;
    const LocalBackendOptions options{latent_factor};
    mount_protocol_routes(server, [options](const GenerateRequest& r) { return local_generate(r, options); },
                          kToyBackendId);
    out << "serving toy backend on http://" << host << ':' << port << '\n' << std::flush;
    return server.listen(host, port) ? 0 : 1;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Progressive depth-conditioned mesh texturing"};
    app.require_subcommand(1);

    CliConfig gen;
    std::string config_path;
    std::string mesh, out_dir;
    auto* generate = app.add_subcommand("generate", "Texture a mesh from a text prompt");
    generate->add_option("--config", config_path, "JSON or TOML settings file (flags take precedence)");
    auto* o_mesh = generate->add_option("--mesh", mesh, "Input OBJ with UVs");
    auto* o_prompt = generate->add_option("--prompt", gen.pipeline.prompt, "Text prompt");
    auto* o_out = generate->add_option("--out", out_dir, "Output directory");
    auto* o_backend = generate->add_option("--backend", gen.backend, "local or http://host:port");
    auto* o_seed = generate->add_option("--seed", gen.pipeline.seed, "Seed for all randomness");
    auto* o_det = generate->add_flag("--deterministic", gen.deterministic, "Require an explicit --seed");
    auto* o_ires = generate->add_option("--image-res", gen.pipeline.image_resolution, "View resolution (pixels)");
    auto* o_tres = generate->add_option("--tex-res", gen.pipeline.texture_resolution, "Texture resolution (texels)");
    auto* o_gg = generate->add_option("--gamma-g", gen.pipeline.gamma_g, "Update strength, generation stage");
    auto* o_gr = generate->add_option("--gamma-r", gen.pipeline.gamma_r, "Update strength, refinement stage");
    auto* o_rv = generate->add_option("--refine-views", gen.pipeline.n_refine_select, "Refinement views to select (0-36)");
    auto* o_steps = generate->add_option("--steps", gen.pipeline.steps, "Diffusion steps per view");
    auto* o_dbg = generate->add_flag("--debug-dumps", gen.debug_dumps, "Write per-view debug PNGs");
    auto* o_dp = generate->add_flag("--disable-partition", gen.pipeline.disable_partition, "Ablation: regenerate every visible pixel");
    auto* o_du = generate->add_flag("--disable-update", gen.pipeline.disable_update, "Ablation: never update painted texels");
    auto* o_to = generate->add_option("--timeout-ms", gen.timeout_ms, "Remote backend timeout");
    auto* o_lf = generate->add_option("--latent-factor", gen.latent_factor, "Local backend latent downsampling");

    TurntableConfig tt;
    std::string tt_in, tt_out;
    auto* turntable = app.add_subcommand("turntable", "Render frames around a textured mesh");
    turntable->add_option("--in", tt_in, "Output directory of generate, or a textured OBJ")->required();
    turntable->add_option("--out", tt_out, "Frame directory");
    turntable->add_option("--frames", tt.frames, "Number of frames");
    turntable->add_option("--elevation", tt.elevation, "Camera elevation (degrees)");
    turntable->add_option("--start-azimuth", tt.start_azimuth, "Azimuth of frame 0 (degrees)");
    turntable->add_option("--distance", tt.distance, "Camera distance");
    turntable->add_option("--image-res", tt.image_resolution, "Frame resolution");

    std::string validate_mesh;
    int validate_res = 1024;
    auto* validate = app.add_subcommand("validate", "Check a mesh and its UV atlas");
    validate->add_option("--mesh", validate_mesh, "Input OBJ")->required();
    validate->add_option("--tex-res", validate_res, "Texture resolution");

    std::string host = "127.0.0.1";
    int port = 8080, serve_factor = 8;
    auto* serve = app.add_subcommand("serve", "Serve the toy backend over HTTP");
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Listen port")->capture_default_str();
    serve->add_option("--latent-factor", serve_factor, "Latent downsampling factor")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    if (*generate) {
        // Precedence: flags > config file > defaults.
        CliConfig merged;
        try {
            if (!config_path.empty()) detail::apply_settings(load_config_file(config_path), merged);
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return 2;
        }
        auto& p = merged.pipeline;
        if (o_mesh->count()) merged.mesh = mesh;
        if (o_out->count()) merged.out = out_dir;
        if (o_prompt->count()) p.prompt = gen.pipeline.prompt;
        if (o_backend->count()) merged.backend = gen.backend;
        if (o_seed->count()) {
            p.seed = gen.pipeline.seed;
            merged.seed_given = true;
        }
        if (o_det->count()) merged.deterministic = gen.deterministic;
        if (o_ires->count()) p.image_resolution = gen.pipeline.image_resolution;
        if (o_tres->count()) p.texture_resolution = gen.pipeline.texture_resolution;
        if (o_gg->count()) p.gamma_g = gen.pipeline.gamma_g;
        if (o_gr->count()) p.gamma_r = gen.pipeline.gamma_r;
        if (o_rv->count()) p.n_refine_select = gen.pipeline.n_refine_select;
        if (o_steps->count()) p.steps = gen.pipeline.steps;
        if (o_dbg->count()) merged.debug_dumps = gen.debug_dumps;
        if (o_dp->count()) p.disable_partition = gen.pipeline.disable_partition;
        if (o_du->count()) p.disable_update = gen.pipeline.disable_update;
        if (o_to->count()) merged.timeout_ms = gen.timeout_ms;
        if (o_lf->count()) merged.latent_factor = gen.latent_factor;
        return cmd_generate(merged, out, err);
    }
    if (*turntable) {
        tt.input = tt_in;
        tt.out = tt_out.empty() ? fs::path(tt_in) / "turntable" : fs::path(tt_out);
        return cmd_turntable(tt, out, err);
    }
    if (*validate) return cmd_validate(validate_mesh, validate_res, out, err);
    if (*serve) return cmd_serve(host, port, serve_factor, out);
    return 2;
}

} // namespace progtex::cli
