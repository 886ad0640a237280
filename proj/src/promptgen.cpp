#include "realm/promptgen.hpp"

#include <sstream>
#include <thread>

#include <json.hpp>

#include "realm/errors.hpp"

// httplib is pulled in by exactly one TU to keep build times sane.
#include <httplib.h>

namespace realm {

using nlohmann::json;

const char* camera_name(Camera c) {
    switch (c) {
        case Camera::VehicleFront: return "vehicle_front";
        case Camera::Infrastructure: return "infrastructure";
    }
    throw ConfigError("unknown camera");
}

Camera camera_from_name(const std::string& name) {
    if (name == "vehicle_front" || name == "vehicle") return Camera::VehicleFront;
    if (name == "infrastructure" || name == "infra") return Camera::Infrastructure;
    throw ConfigError("unknown camera name: " + name);
}

namespace {

const char* camera_phrase(Camera c) {
    switch (c) {
        case Camera::VehicleFront: return "ego vehicle front camera";
        case Camera::Infrastructure: return "infrastructure camera";
    }
    throw ConfigError("unknown camera");
}

struct PromptTemplate {
    std::string system;
    std::string scene_phrase; // fills "into a realistic <...> for ..."
    std::vector<std::string> transformations;
    std::vector<std::string> specifications;
    std::string closing;
};

const PromptTemplate& snow_template() {
    static const PromptTemplate t{
        "You are a professional image transformation specialist for autonomous driving "
        "scenarios. Create photorealistic snow transformations with accurate snow physics "
        "and lighting effects.",
        "heavy snow scene",
        {
            "Add falling snow particles of varying sizes throughout the image;",
            "Create snow accumulation on appropriate horizontal surfaces (road edges, vehicle tops);",
            "Apply snow coverage to roadside areas, signs, and infrastructure;",
            "Reduce road marking visibility with partial snow coverage on the roadway;",
            "Add appropriate brightness/reflection changes due to snow's high albedo;",
            "Create realistic snow flurry effects that partially obscure distant objects;",
            "Add snow buildup on edges of what would be the camera lens/housing;",
            "Introduce glare effects where light sources interact with falling snow.",
        },
        {
            "Maintain original image resolution and aspect ratio;",
            "Ensure realistic snow physics (size, distribution, accumulation patterns);",
            "Apply proper light reflectance properties of snow surfaces;",
            "Create realistic road conditions with tire tracks where appropriate;",
            "Adjust overall scene brightness and contrast to account for snow's reflective properties;",
            "Ensure snow distribution follows physical laws (more on horizontal surfaces, less on vertical);",
            "Add subtle blue tint to shadows in snow areas;",
            "Create a realistic depth effect with denser snow appearance in the distance.",
        },
        "This transformed image will help expand the dataset with realistic snowy driving "
        "scenarios, dedicated to enhancing model performance in challenging winter conditions.",
    };
    return t;
}

const PromptTemplate& fog_template() {
    static const PromptTemplate t{
        "You are a professional image transformation specialist for autonomous driving "
        "scenarios. Create photorealistic fog transformations with accurate fog physics "
        "and lighting effects.",
        "dense fog scene",
        {
            "Add realistic fog effect with visibility reduced to approximately 30-50 meters;",
            "Create a gradual fog density that increases with distance from camera;",
            "Reduce contrast and color saturation throughout the image;",
            "Add light diffusion effects around bright objects (lights, signals);",
            "Maintain the structural integrity of all key elements (vehicles, pedestrians, roads, signs);",
            "Ensure that closer objects remain more visible than distant ones;",
            "Add subtle light halos where applicable (headlights, traffic signals);",
            "Apply a slight uniform brightening effect to simulate light scattering in fog.",
        },
        {
            "Maintain original image resolution and aspect ratio;",
            "Ensure the fog effect follows accurate atmospheric physics principles;",
            "Keep road markings partially visible but degraded according to distance;",
            "Apply appropriate fog-induced changes to shadows and reflections;",
            "Create realistic depth-dependent visibility falloff;",
            "Simulate the slight color shift typical in foggy conditions (slightly cooler tones);",
            "Add subtle volumetric lighting effects where light sources interact with fog;",
            "Ensure consistent fog density across the entire frame with proper perspective.",
        },
        "This transformed image will help expand the dataset with realistic snowy driving "
        "scenarios, dedicated to enhancing model performance in challenging low-visibility "
        "conditions.",
    };
    return t;
}

const PromptTemplate& template_for(Weather w) {
    return w == Weather::Snow ? snow_template() : fog_template();
}

} // namespace

RenderedPrompt build_prompt(Weather weather, Camera camera) {
    const PromptTemplate& t = template_for(weather);
    std::ostringstream user;
    user << "Please transform this image captured by the " << camera_phrase(camera)
         << " into a realistic " << t.scene_phrase
         << " for autonomous driving perception evaluation.\n";
    user << "\nApply the following transformations:\n";
    for (const std::string& item : t.transformations) user << "- " << item << "\n";
    user << "\nTechnical specifications:\n";
    for (const std::string& item : t.specifications) user << "- " << item << "\n";
    user << "\n" << t.closing << "\n";
    return RenderedPrompt{t.system, user.str()};
}

std::string render_prompt_text(Weather weather, Camera camera) {
    RenderedPrompt p = build_prompt(weather, camera);
    return "System:\n" + p.system + "\n\nUser:\n" + p.user;
}

GenerationRequest make_request(const std::string& scene_id, Weather weather, Camera camera,
                               const std::string& source_image_ref) {
    if (scene_id.empty()) throw ConfigError("scene_id must be non-empty");
    if (scene_id.find(':') != std::string::npos)
        throw ConfigError("scene_id must not contain ':': " + scene_id);
    if (source_image_ref.empty()) throw ConfigError("source_image_ref must be non-empty");
    GenerationRequest req;
    req.request_id = scene_id + ":" + camera_name(camera);
    req.weather = weather;
    req.camera = camera;
    req.source_image_ref = source_image_ref;
    req.rendered_prompt = build_prompt(weather, camera);
    return req;
}

GenerationResult submit(const GenerationRequest& req, GenerationTransport& transport,
                        const RetryPolicy& policy) {
    if (policy.backoff_factor < 1.0) throw ConfigError("backoff_factor must be >= 1");

    json wire = {
        {"request_id", req.request_id},
        {"system", req.rendered_prompt.system},
        {"user", req.rendered_prompt.user},
        {"image_ref", req.source_image_ref},
    };
    const std::string body = wire.dump();

    GenerationResult result;
    result.request_id = req.request_id;
    result.scenario_label = scenario_for(req.weather);

    std::string last_reason = "no attempt made";
    double backoff_ms = static_cast<double>(policy.initial_backoff.count());
    for (std::size_t attempt = 0; attempt <= policy.max_retries; ++attempt) {
        if (attempt > 0 && backoff_ms > 0.0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(static_cast<long long>(backoff_ms)));
            backoff_ms *= policy.backoff_factor;
        }
        ++result.attempts;
        std::string response;
        try {
            response = transport.send(body);
        } catch (const ProtocolError&) {
            throw;
        } catch (const std::exception& e) {
            last_reason = e.what();
            continue;
        }

        json parsed;
        try {
            parsed = json::parse(response);
        } catch (const json::parse_error& e) {
            throw ProtocolError(std::string("unparseable generation response: ") + e.what());
        }
        if (parsed.contains("error")) {
            last_reason = parsed["error"].get<std::string>();
            continue;
        }
        if (!parsed.contains("image_ref") || !parsed["image_ref"].is_string())
            throw ProtocolError("generation response carries neither image_ref nor error: " +
                                response);

        result.output_image_ref = parsed["image_ref"].get<std::string>();
        result.status = GenStatus::Ok;
        return result;
    }

    result.status = GenStatus::Failed;
    result.reason = last_reason;
    return result;
}

std::string MockTransport::send(const std::string& request_json) {
    ++total_calls;
    json req;
    try {
        req = json::parse(request_json);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("mock received unparseable request: ") + e.what());
    }
    for (const char* key : {"request_id", "system", "user", "image_ref"}) {
        if (!req.contains(key) || !req[key].is_string())
            throw ProtocolError(std::string("mock request missing field: ") + key);
    }
    const std::string id = req["request_id"].get<std::string>();

    auto done = completed_.find(id);
    if (done != completed_.end()) return done->second; // dedup: replay cached response

    std::size_t n = ++attempts_[id];
    if (always_fail || n <= fail_first) {
        if (throw_on_failure) throw Error("mock transport unavailable");
        return json{{"error", "transient generation failure"}}.dump();
    }

    std::string out = "generated/" + id + ".png";
    std::string response = json{{"request_id", id}, {"image_ref", out}}.dump();
    completed_[id] = response;
    return response;
}

std::size_t MockTransport::calls_for(const std::string& request_id) const {
    auto it = attempts_.find(request_id);
    return it == attempts_.end() ? 0 : it->second;
}

HttpTransport::HttpTransport(std::string host, int port, std::string path)
    : host_(std::move(host)), port_(port), path_(std::move(path)) {
    if (port_ <= 0 || port_ > 65535) throw ConfigError("http transport port out of range");
    if (path_.empty() || path_[0] != '/') throw ConfigError("http transport path must start with /");
}

std::string HttpTransport::send(const std::string& request_json) {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(30, 0);
    auto res = client.Post(path_, request_json, "application/json");
    if (!res) throw Error("http transport: connection failed");
    if (res->status < 200 || res->status >= 300)
        throw Error("http transport: status " + std::to_string(res->status));
    return res->body;
}

namespace {

struct SceneViews {
    const GenerationResult* vehicle = nullptr;
    const GenerationResult* infra = nullptr;
    std::vector<const GenerationResult*> failed;
    bool malformed_id = false;
};

} // namespace

ManifestOutput annotate_manifest(const std::vector<GenerationResult>& results,
                                 const std::map<std::string, std::string>& descriptions) {
    std::map<std::string, SceneViews> scenes;
    ManifestOutput out;

    for (const GenerationResult& r : results) {
        std::size_t sep = r.request_id.find(':');
        if (sep == std::string::npos || sep == 0) {
            out.errors.push_back("malformed request_id: " + r.request_id);
            continue;
        }
        std::string scene_id = r.request_id.substr(0, sep);
        std::string view = r.request_id.substr(sep + 1);
        SceneViews& sv = scenes[scene_id];
        if (r.status == GenStatus::Failed) {
            sv.failed.push_back(&r);
            continue;
        }
        if (view == camera_name(Camera::VehicleFront)) {
            if (sv.vehicle) sv.malformed_id = true;
            sv.vehicle = &r;
        } else if (view == camera_name(Camera::Infrastructure)) {
            if (sv.infra) sv.malformed_id = true;
            sv.infra = &r;
        } else {
            sv.malformed_id = true;
        }
    }

    for (const auto& [scene_id, sv] : scenes) {
        if (!sv.failed.empty()) {
            std::string why;
            for (const GenerationResult* f : sv.failed) {
                if (!why.empty()) why += "; ";
                why += f->request_id + ": " + f->reason;
            }
            out.errors.push_back("scene " + scene_id + " has failed views (" + why + ")");
            continue;
        }
        if (sv.malformed_id) {
            out.errors.push_back("scene " + scene_id + " has duplicate or unknown views");
            continue;
        }
        if (!sv.vehicle || !sv.infra) {
            out.errors.push_back("scene " + scene_id + " is missing a view (" +
                                 std::string(sv.vehicle ? "infrastructure" : "vehicle_front") +
                                 ")");
            continue;
        }
        if (sv.vehicle->scenario_label != sv.infra->scenario_label) {
            out.errors.push_back("scene " + scene_id + " has inconsistent scenario labels");
            continue;
        }
        Scenario label = sv.vehicle->scenario_label;
        if (label != Scenario::Snow && label != Scenario::Fog) {
            out.errors.push_back("scene " + scene_id + " carries a non-adverse scenario label");
            continue;
        }
        auto desc = descriptions.find(scene_id);
        if (desc == descriptions.end() || desc->second.empty()) {
            out.errors.push_back("scene " + scene_id + " has no description text");
            continue;
        }
        ManifestRow row;
        row.scene_id = scene_id;
        row.vehicle_image = sv.vehicle->output_image_ref;
        row.infra_image = sv.infra->output_image_ref;
        row.description_text = desc->second;
        row.scenario_label = label;
        out.rows.push_back(std::move(row));
    }
    return out;
}

std::string manifest_row_json(const ManifestRow& row) {
    json j = {
        {"scene_id", row.scene_id},
        {"vehicle_image", row.vehicle_image},
        {"infra_image", row.infra_image},
        {"description_text", row.description_text},
        {"scenario_label", static_cast<std::size_t>(row.scenario_label)},
    };
    return j.dump();
}

SceneSpec parse_scene_spec(const std::string& json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("unparseable scene spec: ") + e.what());
    }
    for (const char* key : {"scene_id", "weather", "vehicle_image", "infra_image"}) {
        if (!j.contains(key) || !j[key].is_string())
            throw ProtocolError(std::string("scene spec missing field: ") + key);
    }
    SceneSpec spec;
    spec.scene_id = j["scene_id"].get<std::string>();
    spec.weather = weather_from_name(j["weather"].get<std::string>());
    spec.vehicle_image = j["vehicle_image"].get<std::string>();
    spec.infra_image = j["infra_image"].get<std::string>();
    if (j.contains("description")) spec.description = j["description"].get<std::string>();
    return spec;
}

ManifestOutput generate_scenes(const std::vector<SceneSpec>& scenes,
                               GenerationTransport& transport, const RetryPolicy& policy,
                               const std::map<std::string, std::string>& external_descriptions) {
    std::vector<GenerationResult> results;
    std::map<std::string, std::string> descriptions;
    results.reserve(scenes.size() * 2);
    for (const SceneSpec& s : scenes) {
        auto ext = external_descriptions.find(s.scene_id);
        descriptions[s.scene_id] = ext != external_descriptions.end() ? ext->second : s.description;
        results.push_back(submit(
            make_request(s.scene_id, s.weather, Camera::VehicleFront, s.vehicle_image),
            transport, policy));
        results.push_back(submit(
            make_request(s.scene_id, s.weather, Camera::Infrastructure, s.infra_image),
            transport, policy));
    }
    return annotate_manifest(results, descriptions);
}

} // namespace realm
