#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "realm/scenario.hpp"

namespace realm {

enum class Camera { VehicleFront, Infrastructure };

const char* camera_name(Camera c);            // vehicle_front / infrastructure
Camera camera_from_name(const std::string&);  // accepts the short forms too

struct RenderedPrompt {
    std::string system;
    std::string user;
};

// Deterministic assembly of the weather transformation prompt with the
// camera perspective filled in.
RenderedPrompt build_prompt(Weather weather, Camera camera);

// Display form used by the CLI and pinned by golden files.
std::string render_prompt_text(Weather weather, Camera camera);

struct GenerationRequest {
    std::string request_id; // "<scene_id>:<camera>"
    Weather weather = Weather::Snow;
    Camera camera = Camera::VehicleFront;
    std::string source_image_ref;
    RenderedPrompt rendered_prompt;
};

GenerationRequest make_request(const std::string& scene_id, Weather weather, Camera camera,
                               const std::string& source_image_ref);

enum class GenStatus { Ok, Failed };

struct GenerationResult {
    std::string request_id;
    std::string output_image_ref;
    Scenario scenario_label = Scenario::Snow;
    GenStatus status = GenStatus::Failed;
    std::string reason;       // failure explanation
    std::size_t attempts = 0; // transport calls made for this request
};

// Abstract image-generation service. Wire format is JSON both ways:
// request {request_id, system, user, image_ref},
// response {image_ref} on success or {error} on failure.
// Implementations may also throw to signal transient transport faults.
class GenerationTransport {
public:
    virtual ~GenerationTransport() = default;
    virtual std::string send(const std::string& request_json) = 0;
};

struct RetryPolicy {
    std::size_t max_retries = 3; // extra attempts after the first
    std::chrono::milliseconds initial_backoff{100};
    double backoff_factor = 2.0;
};

// Sends one request, retrying transient failures with exponential backoff.
// Exhausted retries yield a Failed result; an unparseable or key-less
// response is a protocol error.
GenerationResult submit(const GenerationRequest& req, GenerationTransport& transport,
                        const RetryPolicy& policy = {});

// In-process stand-in for the external generator. Deterministic: success
// responses derive the output reference from the request id. Failures can be
// scripted per request, and completed requests are deduplicated so repeated
// submission returns the cached response.
class MockTransport : public GenerationTransport {
public:
    MockTransport() = default;

    std::size_t fail_first = 0;     // transient failures before each success
    bool always_fail = false;
    bool throw_on_failure = false;  // fault as exception instead of error body

    std::string send(const std::string& request_json) override;

    std::size_t calls_for(const std::string& request_id) const;
    std::size_t total_calls = 0;

private:
    std::map<std::string, std::size_t> attempts_;
    std::map<std::string, std::string> completed_;
};

// POSTs the wire request to <host:port><path> and returns the response body.
// Non-2xx statuses and connection faults are thrown as transport errors so
// the retry loop can treat them as transient.
class HttpTransport : public GenerationTransport {
public:
    HttpTransport(std::string host, int port, std::string path = "/generate");
    std::string send(const std::string& request_json) override;

private:
    std::string host_;
    int port_;
    std::string path_;
};

struct ManifestRow {
    std::string scene_id;
    std::string vehicle_image;
    std::string infra_image;
    std::string description_text;
    Scenario scenario_label = Scenario::Snow;
};

struct ManifestOutput {
    std::vector<ManifestRow> rows;       // ordered by scene_id
    std::vector<std::string> errors;     // unpaired or failed scenes
};

// Folds per-view results into scene rows. A scene contributes a row only
// when both camera views succeeded with one consistent label and a
// description is available; everything else becomes an error entry.
ManifestOutput annotate_manifest(const std::vector<GenerationResult>& results,
                                 const std::map<std::string, std::string>& descriptions);

std::string manifest_row_json(const ManifestRow& row);

// One source scene to transform (both views share the weather).
struct SceneSpec {
    std::string scene_id;
    Weather weather = Weather::Snow;
    std::string vehicle_image;
    std::string infra_image;
    std::string description;
};

SceneSpec parse_scene_spec(const std::string& json_line);

// Drives both views of every scene through the transport and assembles the
// manifest. Submission is sequential and deterministic. Descriptions from the
// external map take precedence over any inline spec text; scenes ending up
// with no description become error entries.
ManifestOutput generate_scenes(const std::vector<SceneSpec>& scenes,
                               GenerationTransport& transport,
                               const RetryPolicy& policy = {},
                               const std::map<std::string, std::string>& external_descriptions = {});

} // namespace realm
