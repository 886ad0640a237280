#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "realm/errors.hpp"
#include "realm/harness.hpp"
#include "realm/promptgen.hpp"
#include "realm/scoring.hpp"
#include "realm/trajeval.hpp"

namespace {

using nlohmann::json;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw realm::ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw realm::Error("cannot write " + path.string());
    out << text;
}

realm::RunConfig load_cli_config(const std::string& config_path, const std::string& ablation,
                                 const std::string& out_dir, std::size_t epochs,
                                 long long seed) {
    realm::RunConfig cfg = realm::load_run_config(config_path);
    if (!ablation.empty()) cfg.ablation = ablation;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (epochs > 0) cfg.epochs = epochs;
    if (seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.synthetic.seed = cfg.seed;
    }
    cfg.validate();
    return cfg;
}

int cmd_train_toy(const std::string& config_path, const std::string& ablation,
                  const std::string& out_dir, std::size_t epochs, long long seed) {
    realm::RunConfig cfg = load_cli_config(config_path, ablation, out_dir, epochs, seed);
    realm::TrainResult result = realm::train_toy_run(cfg);
    json summary = {
        {"out_dir", cfg.out_dir},
        {"ablation", cfg.ablation},
        {"epochs", cfg.epochs},
        {"final_train_total", result.telemetry.back().l_total},
        {"heldout_gen_loss", result.heldout_gen_loss},
        {"heldout_count", result.heldout_count},
    };
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_score(const std::string& input, double threshold, const std::string& profile_path,
              const std::string& out_dir) {
    realm::ProfileSet profiles;
    if (!profile_path.empty()) profiles = realm::profile_set_from_json(slurp(profile_path));

    realm::ScoreBatchResult result;
    if (input == "-") {
        result = realm::score_lines(std::cin, profiles, threshold);
    } else {
        std::ifstream in(input, std::ios::binary);
        if (!in.good()) throw realm::ConfigError("cannot open " + input);
        result = realm::score_lines(in, profiles, threshold);
    }

    if (!out_dir.empty()) {
        std::ostringstream rows;
        for (const realm::ScoredScene& s : result.scenes)
            rows << realm::scored_scene_json(s) << "\n";
        write_file(std::filesystem::path(out_dir) / "scored.jsonl", rows.str());
        write_file(std::filesystem::path(out_dir) / "summary.json",
                   realm::score_summary_json(result, threshold));
    }
    std::cout << realm::score_summary_json(result, threshold) << "\n";
    return result.errors.empty() ? 0 : 2;
}

int cmd_evaluate(const std::string& input, const std::string& footprint,
                 const std::vector<double>& horizons, bool point_at_horizon,
                 const std::string& out_dir) {
    realm::ReportOptions options;
    if (!footprint.empty()) {
        double w = 0.0, l = 0.0;
        char comma = 0;
        std::istringstream ss(footprint);
        if (!(ss >> w >> comma >> l) || comma != ',')
            throw realm::ConfigError("footprint must be \"width,length\"");
        options.footprint = realm::rectangle_footprint(w, l);
    }
    if (!horizons.empty()) options.horizons = horizons;
    options.point_at_horizon = point_at_horizon;

    std::ifstream in(input, std::ios::binary);
    if (!in.good()) throw realm::ConfigError("cannot open " + input);
    std::vector<realm::EvalSample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            samples.push_back(realm::parse_eval_sample(line));
        } catch (const realm::Error& e) {
            throw realm::ProtocolError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }

    realm::EvalReport report = realm::scenario_report(samples, options);
    std::string text = realm::eval_report_json(report);
    if (!out_dir.empty()) write_file(std::filesystem::path(out_dir) / "report.json", text);
    std::cout << text << "\n";
    return 0;
}

int cmd_prompts(const std::string& weather, const std::string& camera) {
    std::cout << realm::render_prompt_text(realm::weather_from_name(weather),
                                           realm::camera_from_name(camera));
    return 0;
}

int cmd_generate(const std::string& manifest_in, const std::string& transport_name,
                 const std::string& host, int port, const std::string& path,
                 const std::string& descriptions_path, const std::string& out_dir,
                 std::size_t retries, std::size_t backoff_ms, std::size_t fail_first) {
    std::ifstream in(manifest_in, std::ios::binary);
    if (!in.good()) throw realm::ConfigError("cannot open " + manifest_in);
    std::vector<realm::SceneSpec> scenes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            scenes.push_back(realm::parse_scene_spec(line));
        } catch (const realm::Error& e) {
            throw realm::ProtocolError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }

    std::map<std::string, std::string> descriptions;
    if (!descriptions_path.empty()) {
        json d = json::parse(slurp(descriptions_path), nullptr, false);
        if (d.is_discarded() || !d.is_object())
            throw realm::ConfigError("descriptions file must be a JSON object");
        for (auto it = d.begin(); it != d.end(); ++it)
            descriptions[it.key()] = it.value().get<std::string>();
    }

    std::unique_ptr<realm::GenerationTransport> transport;
    if (transport_name == "mock") {
        auto mock = std::make_unique<realm::MockTransport>();
        mock->fail_first = fail_first;
        transport = std::move(mock);
    } else if (transport_name == "http") {
        transport = std::make_unique<realm::HttpTransport>(host, port, path);
    } else {
        throw realm::ConfigError("transport must be mock or http");
    }

    realm::RetryPolicy policy;
    policy.max_retries = retries;
    policy.initial_backoff = std::chrono::milliseconds(backoff_ms);
    realm::ManifestOutput manifest =
        realm::generate_scenes(scenes, *transport, policy, descriptions);

    std::ostringstream rows;
    for (const realm::ManifestRow& row : manifest.rows)
        rows << realm::manifest_row_json(row) << "\n";
    std::ostringstream errors;
    for (const std::string& e : manifest.errors) errors << json(e).dump() << "\n";
    if (!out_dir.empty()) {
        write_file(std::filesystem::path(out_dir) / "manifest.jsonl", rows.str());
        write_file(std::filesystem::path(out_dir) / "errors.jsonl", errors.str());
    } else {
        std::cout << rows.str();
    }
    json summary = {{"scenes", scenes.size()},
                    {"rows", manifest.rows.size()},
                    {"errors", manifest.errors.size()}};
    std::cerr << summary.dump() << "\n";
    return manifest.errors.empty() ? 0 : 2;
}

int cmd_export_attention(const std::string& config_path, const std::string& ablation,
                         const std::string& out_dir, long long seed) {
    realm::RunConfig cfg = load_cli_config(config_path, ablation, out_dir, 0, seed);
    realm::AblationFlags flags = realm::resolve_ablation(cfg);
    realm::ToyModel model = realm::build_model(cfg);
    realm::SyntheticDataset data = realm::generate_synthetic(cfg.synthetic);
    std::string text =
        realm::attention_aggregate_json(realm::export_attention(model, data, flags));
    if (!out_dir.empty())
        write_file(std::filesystem::path(cfg.out_dir) / "attention.json", text);
    std::cout << text << "\n";
    return 0;
}

int cmd_export_embeddings(const std::string& config_path, const std::string& ablation,
                          const std::string& out_dir, long long seed) {
    realm::RunConfig cfg = load_cli_config(config_path, ablation, out_dir, 0, seed);
    realm::AblationFlags flags = realm::resolve_ablation(cfg);
    realm::ToyModel model = realm::build_model(cfg);
    realm::SyntheticDataset data = realm::generate_synthetic(cfg.synthetic);
    realm::EmbeddingExport ex = realm::export_embeddings(model, data, flags);
    if (!out_dir.empty()) {
        std::ostringstream rows;
        for (const realm::EmbeddingRow& row : ex.rows)
            rows << realm::embedding_row_json(row) << "\n";
        write_file(std::filesystem::path(cfg.out_dir) / "embeddings.jsonl", rows.str());
        write_file(std::filesystem::path(cfg.out_dir) / "embeddings_stats.json",
                   realm::embedding_stats_json(ex));
    }
    std::cout << realm::embedding_stats_json(ex) << "\n";
    return 0;
}

int cmd_report_timing(const std::string& config_path, const std::string& ablation,
                      long long seed) {
    realm::RunConfig cfg = load_cli_config(config_path, ablation, "", 0, seed);
    std::cout << realm::timing_report_json(realm::timing_report(cfg)) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"V2X scenario-adaptive perception toolkit"};
    app.require_subcommand(1);

    std::string config_path, ablation, out_dir;
    std::size_t epochs = 0;
    long long seed = -1;

    auto add_run_options = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("--config", config_path, "run config JSON file");
        cmd->add_option("--ablation", ablation, "ablation row name");
        if (with_out) cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "override model and data seed");
    };

    CLI::App* train = app.add_subcommand("train-toy", "train the toy model and dump artifacts");
    add_run_options(train, true);
    train->add_option("--epochs", epochs, "override epoch count");

    std::string score_input = "-", profile_path;
    double threshold = 0.5;
    CLI::App* score = app.add_subcommand("score", "composite-score metric records (JSONL)");
    score->add_option("--input", score_input, "metric records file, - for stdin");
    score->add_option("--threshold", threshold, "acceptance threshold");
    score->add_option("--profile", profile_path, "weight profile JSON file");
    score->add_option("--out", out_dir, "directory for scored.jsonl and summary.json");

    std::string eval_input, footprint;
    std::vector<double> horizons;
    bool point_at_horizon = false;
    CLI::App* evaluate = app.add_subcommand("evaluate", "trajectory evaluation report (JSONL)");
    evaluate->add_option("--input", eval_input, "evaluation samples file")->required();
    evaluate->add_option("--footprint", footprint, "ego footprint \"width,length\" in meters");
    evaluate->add_option("--horizons", horizons, "horizons in seconds");
    evaluate->add_flag("--point-at-horizon", point_at_horizon,
                       "report displacement at the horizon instant only");
    evaluate->add_option("--out", out_dir, "directory for report.json");

    std::string weather = "snow", camera = "vehicle_front";
    CLI::App* prompts = app.add_subcommand("prompts", "emit a rendered generation prompt");
    prompts->add_option("--weather", weather, "snow or fog");
    prompts->add_option("--camera", camera, "vehicle_front or infrastructure");

    std::string manifest_in, transport_name = "mock", host = "127.0.0.1";
    std::string http_path = "/generate", descriptions_path;
    int port = 8080;
    std::size_t retries = 3, backoff_ms = 100, fail_first = 0;
    CLI::App* generate = app.add_subcommand("generate", "drive scene specs through a transport");
    generate->add_option("--manifest-in", manifest_in, "scene specs file (JSONL)")->required();
    generate->add_option("--transport", transport_name, "mock or http");
    generate->add_option("--host", host, "http transport host");
    generate->add_option("--port", port, "http transport port");
    generate->add_option("--path", http_path, "http transport path");
    generate->add_option("--descriptions", descriptions_path,
                         "JSON object of scene_id to description text");
    generate->add_option("--out", out_dir, "directory for manifest.jsonl and errors.jsonl");
    generate->add_option("--retries", retries, "extra attempts per request");
    generate->add_option("--backoff-ms", backoff_ms, "initial backoff in milliseconds");
    generate->add_option("--fail-first", fail_first, "mock: transient failures per request");

    CLI::App* attn = app.add_subcommand("export-attention",
                                        "attention aggregate of the untrained model");
    add_run_options(attn, true);

    CLI::App* emb = app.add_subcommand("export-embeddings",
                                       "embedding export of the untrained model");
    add_run_options(emb, true);

    CLI::App* timing = app.add_subcommand("report-timing", "stage timing over one dataset pass");
    add_run_options(timing, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train_toy(config_path, ablation, out_dir, epochs, seed);
        if (score->parsed()) return cmd_score(score_input, threshold, profile_path, out_dir);
        if (evaluate->parsed())
            return cmd_evaluate(eval_input, footprint, horizons, point_at_horizon, out_dir);
        if (prompts->parsed()) return cmd_prompts(weather, camera);
        if (generate->parsed())
            return cmd_generate(manifest_in, transport_name, host, port, http_path,
                                descriptions_path, out_dir, retries, backoff_ms, fail_first);
        if (attn->parsed()) return cmd_export_attention(config_path, ablation, out_dir, seed);
        if (emb->parsed()) return cmd_export_embeddings(config_path, ablation, out_dir, seed);
        if (timing->parsed()) return cmd_report_timing(config_path, ablation, seed);
    } catch (const realm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
