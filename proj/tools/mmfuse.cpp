// mmfuse command line: train, evaluate, predict, gradcheck, synth.
// Exit codes: 0 success, 1 validation error, 2 numeric failure, 64 usage.

#include "mmfuse/checkpoint.hpp"
#include "mmfuse/data.hpp"
#include "mmfuse/errors.hpp"
#include "mmfuse/kernels.hpp"
#include "mmfuse/losses.hpp"
#include "mmfuse/probe.hpp"
#include "mmfuse/train_eval.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using nlohmann::json;
using namespace mmfuse;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct RunConfig {
    FusionConfig fusion;
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    std::size_t min_count = 1;
    std::optional<std::string> embeddings;
    std::optional<std::string> manifest;
    std::optional<std::string> posts;
    std::optional<std::string> features;
    std::string checkpoint_out;
    std::optional<std::string> metrics_out;
    std::string raw_bytes;
};

RunConfig parse_run_config(const std::string& path) {
    RunConfig rc;
    rc.raw_bytes = file_bytes(path);
    json j;
    try {
        j = json::parse(rc.raw_bytes);
    } catch (const json::parse_error& e) {
        throw ValidationError("run config parse error: " + std::string(e.what()));
    }
    static const std::vector<std::string> known = {
        "mode",       "pooling",      "aggregation",   "d",          "h",
        "g",          "lambda",       "dropout",       "learning_rate", "image_dim",
        "freeze_embeddings", "epochs", "seed",         "min_count",  "embeddings",
        "manifest",   "posts",        "features",      "checkpoint_out", "metrics_out"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ValidationError("run config: unknown key '" + key + "'");
        }
    }
    if (!j.contains("mode")) throw ValidationError("run config: missing 'mode'");
    rc.fusion.mode = fusion_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("pooling")) rc.fusion.pooling = pooling_from_string(j["pooling"]);
    if (j.contains("aggregation"))
        rc.fusion.aggregation = aggregation_from_string(j["aggregation"]);
    if (j.contains("d")) rc.fusion.d = j["d"].get<std::size_t>();
    if (j.contains("h")) rc.fusion.h = j["h"].get<std::size_t>();
    if (j.contains("g")) rc.fusion.g = j["g"].get<std::size_t>();
    if (j.contains("lambda")) rc.fusion.lambda = j["lambda"].get<double>();
    if (j.contains("dropout")) rc.fusion.dropout_p = j["dropout"].get<double>();
    if (j.contains("learning_rate")) rc.fusion.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("image_dim")) rc.fusion.image_dim = j["image_dim"].get<std::size_t>();
    if (j.contains("freeze_embeddings"))
        rc.fusion.freeze_embeddings = j["freeze_embeddings"].get<bool>();
    if (j.contains("epochs")) rc.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("min_count")) rc.min_count = j["min_count"].get<std::size_t>();
    if (j.contains("embeddings")) rc.embeddings = j["embeddings"].get<std::string>();
    if (j.contains("manifest")) rc.manifest = j["manifest"].get<std::string>();
    if (j.contains("posts")) rc.posts = j["posts"].get<std::string>();
    if (j.contains("features")) rc.features = j["features"].get<std::string>();
    if (!j.contains("checkpoint_out")) throw ValidationError("run config: missing 'checkpoint_out'");
    rc.checkpoint_out = j["checkpoint_out"].get<std::string>();
    if (j.contains("metrics_out")) rc.metrics_out = j["metrics_out"].get<std::string>();
    if (!rc.manifest && !rc.posts) {
        throw ValidationError("run config: need 'manifest' or 'posts'");
    }
    return rc;
}

Dataset load_dataset(const std::optional<std::string>& manifest,
                     const std::optional<std::string>& posts,
                     const std::optional<std::string>& features) {
    if (manifest) return load_manifest(*manifest);
    return load_posts(*posts, features);
}

int cmd_train(const std::string& config_path) {
    const RunConfig rc = parse_run_config(config_path);
    const Dataset ds = load_dataset(rc.manifest, rc.posts, rc.features);
    const DatasetSplit split = make_splits(ds.posts);

    TrainOptions options;
    options.epochs = rc.epochs;
    options.seed = rc.seed;
    options.embedding_path = rc.embeddings;
    options.min_count = rc.min_count;

    const TrainResult result = train(ds, split, rc.fusion, options);
    save_model(rc.checkpoint_out, result.model);

    const MetricsReport test = evaluate(ds, split.test, result.model, ModalityFilter::Both);

    json meta;
    meta["seed"] = rc.seed;
    meta["epochs"] = rc.epochs;
    meta["mode"] = to_string(result.model.config.mode);
    meta["config_hash"] = hex64(fnv1a(rc.raw_bytes));
    std::string data_bytes;
    if (rc.manifest) {
        data_bytes = file_bytes(*rc.manifest);
    } else {
        data_bytes = file_bytes(*rc.posts);
        if (rc.features) data_bytes += file_bytes(*rc.features);
    }
    meta["dataset_hash"] = hex64(fnv1a(data_bytes));
    meta["best_val_accuracy"] = result.best_val_accuracy;
    meta["kernels"] = kernels::active().name;

    json out = json::parse(metrics_to_json(test, result.model.classes));
    out["run"] = meta;
    const std::string payload = out.dump(2) + "\n";
    if (rc.metrics_out) {
        std::ofstream mo(*rc.metrics_out, std::ios::trunc);
        mo << payload;
    }
    std::cout << payload;
    return 0;
}

const std::vector<std::size_t>& pick_split(const DatasetSplit& split, const std::string& name,
                                           std::vector<std::size_t>& all_storage,
                                           std::size_t n_posts) {
    if (name == "test") return split.test;
    if (name == "validation") return split.validation;
    if (name == "train") return split.train;
    if (name == "all") {
        all_storage.resize(n_posts);
        for (std::size_t i = 0; i < n_posts; ++i) all_storage[i] = i;
        return all_storage;
    }
    throw ValidationError("unknown split: " + name);
}

int cmd_evaluate(const std::string& checkpoint, const std::optional<std::string>& manifest,
                 const std::optional<std::string>& posts,
                 const std::optional<std::string>& features, const std::string& split_name,
                 const std::string& modality, const std::string& expect_mode,
                 const std::optional<std::string>& json_out) {
    const Model model = load_model(checkpoint);
    if (!expect_mode.empty() &&
        fusion_mode_from_string(expect_mode) != model.config.mode) {
        throw ValidationError("checkpoint mode is " +
                              std::string(to_string(model.config.mode)) + ", expected " +
                              expect_mode);
    }
    const Dataset ds = load_dataset(manifest, posts, features);
    const DatasetSplit split = make_splits(ds.posts);
    std::vector<std::size_t> all_storage;
    const auto& indices = pick_split(split, split_name, all_storage, ds.posts.size());

    const MetricsReport report =
        evaluate(ds, indices, model, modality_filter_from_string(modality));
    const std::string payload = metrics_to_json(report, model.classes) + "\n";
    if (json_out) {
        std::ofstream jo(*json_out, std::ios::trunc);
        jo << payload;
    }
    std::cout << payload;
    std::cout << metrics_to_table(report, model.classes);
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& text,
                const std::optional<std::string>& features, std::int64_t feature_index,
                const std::string& feature_inline) {
    const Model model = load_model(checkpoint);
    ModelInput input;
    if (!text.empty()) input.tokens = default_tokenize(text);
    if (!feature_inline.empty()) {
        DenseVector v;
        std::istringstream ss(feature_inline);
        std::string part;
        while (std::getline(ss, part, ',')) v.values.push_back(std::stod(part));
        input.image = std::move(v);
    } else if (features) {
        if (feature_index < 0) throw ValidationError("predict: --index is required with --features");
        const FeatureStore store = read_feature_file(*features);
        input.image = store.get(static_cast<std::size_t>(feature_index));
    }
    if (!input.has_text() && !input.has_image()) {
        throw ValidationError("predict: provide --text and/or image features");
    }
    const DenseVector scores = model_scores(model, input);
    const std::size_t pred = argmax(scores);
    json out;
    out["class"] = model.classes.at(pred);
    out["class_index"] = pred;
    out["scores"] = scores.values;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t n_seeds, const std::string& mode_name,
                  double step, double tolerance, const ProbeDims& dims,
                  const std::optional<std::string>& json_out) {
    std::vector<FusionMode> modes;
    if (mode_name == "all") {
        modes = {FusionMode::TextOnly, FusionMode::ImageOnly, FusionMode::Early, FusionMode::Joint,
                 FusionMode::CommonSpace};
    } else {
        modes = {fusion_mode_from_string(mode_name)};
    }
    std::ofstream jl;
    if (json_out) jl.open(*json_out, std::ios::trunc);

    bool all_pass = true;
    for (const FusionMode mode : modes) {
        for (std::size_t k = 0; k < n_seeds; ++k) {
            const std::uint64_t s = seed + k;
            const ProbeFixture fx = make_probe_fixture(mode, dims, s);
            const GradCheckReport report =
                grad_check(fx.params, fx.input, fx.label, fx.negative_tokens, fx.vocab, fx.config,
                           step, tolerance, /*dropout_seed=*/s ^ 0x5eedULL);
            for (const auto& t : report.tensors) {
                std::cout << to_string(mode) << " seed=" << s << " " << t.name
                          << " max_rel_err=" << t.max_rel_error << " coord=" << t.worst_coord
                          << (t.pass ? " PASS" : " FAIL") << "\n";
                if (jl.is_open()) {
                    json line;
                    line["mode"] = to_string(mode);
                    line["seed"] = s;
                    line["tensor"] = t.name;
                    line["max_rel_error"] = t.max_rel_error;
                    line["worst_coord"] = t.worst_coord;
                    line["pass"] = t.pass;
                    jl << line.dump() << "\n";
                }
            }
            all_pass = all_pass && report.pass;
        }
    }
    if (!all_pass) {
        std::cerr << "gradient check FAILED\n";
        return 2;
    }
    std::cout << "gradient check passed\n";
    return 0;
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, const SyntheticSpec& spec) {
    SeededRng rng(seed);
    const SyntheticFiles files = gen_synthetic(rng, spec, out_dir);
    std::cout << "wrote " << files.posts_path << "\n"
              << "wrote " << files.features_path << "\n"
              << "wrote " << files.manifest_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal text+image fusion classifier"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON run config");
    std::string config_path;
    train_cmd->add_option("--config", config_path, "run config JSON")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
    std::string checkpoint, split_name = "test", modality = "both", expect_mode;
    std::string posts_path, features_path, manifest_path, json_out_path;
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--manifest", manifest_path);
    eval_cmd->add_option("--posts", posts_path);
    eval_cmd->add_option("--features", features_path);
    eval_cmd->add_option("--split", split_name, "test|validation|train|all");
    eval_cmd->add_option("--modality", modality, "both|text|image");
    eval_cmd->add_option("--mode", expect_mode, "fail unless the checkpoint has this mode");
    eval_cmd->add_option("--json-out", json_out_path);

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "classify a single post");
    std::string p_checkpoint, p_text, p_features, p_inline;
    std::int64_t p_index = -1;
    predict_cmd->add_option("--checkpoint", p_checkpoint)->required();
    predict_cmd->add_option("--text", p_text);
    predict_cmd->add_option("--features", p_features, "MMF1 feature file");
    predict_cmd->add_option("--index", p_index, "record index into --features");
    predict_cmd->add_option("--feature-inline", p_inline, "comma-separated feature values");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::uint64_t g_seed = 7;
    std::size_t g_nseeds = 1;
    std::string g_mode = "all", g_json_out;
    double g_step = 1e-5, g_tol = 1e-4;
    ProbeDims dims;
    grad_cmd->add_option("--seed", g_seed);
    grad_cmd->add_option("--seeds", g_nseeds, "number of consecutive seeds");
    grad_cmd->add_option("--mode", g_mode, "fusion mode or 'all'");
    grad_cmd->add_option("--step", g_step);
    grad_cmd->add_option("--tolerance", g_tol);
    grad_cmd->add_option("--text-dim", dims.d);
    grad_cmd->add_option("--hidden-dim", dims.h);
    grad_cmd->add_option("--image-dim", dims.image_dim);
    grad_cmd->add_option("--classes", dims.class_count);
    grad_cmd->add_option("--g", dims.g);
    grad_cmd->add_option("--dropout", dims.dropout_p);
    grad_cmd->add_option("--json-out", g_json_out, "JSON-lines summary");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string s_out_dir;
    std::uint64_t s_seed = 1;
    SyntheticSpec spec;
    synth_cmd->add_option("--out-dir", s_out_dir)->required();
    synth_cmd->add_option("--seed", s_seed);
    synth_cmd->add_option("--per-class", spec.per_class);
    synth_cmd->add_option("--classes", spec.classes);
    synth_cmd->add_option("--xor-fraction", spec.xor_fraction);
    synth_cmd->add_option("--image-dim", spec.n_image);
    synth_cmd->add_option("--filler-vocab", spec.filler_vocab);
    synth_cmd->add_option("--noise-sigma", spec.noise_sigma);
    synth_cmd->add_option("--signal", spec.signal);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 64;
    }

    try {
        if (*train_cmd) return cmd_train(config_path);
        if (*eval_cmd) {
            auto opt = [](const std::string& s) {
                return s.empty() ? std::nullopt : std::optional<std::string>(s);
            };
            if (manifest_path.empty() && posts_path.empty()) {
                throw mmfuse::ValidationError("evaluate: need --manifest or --posts");
            }
            return cmd_evaluate(checkpoint, opt(manifest_path), opt(posts_path),
                                opt(features_path), split_name, modality, expect_mode,
                                opt(json_out_path));
        }
        if (*predict_cmd) {
            return cmd_predict(p_checkpoint, p_text,
                               p_features.empty() ? std::nullopt
                                                  : std::optional<std::string>(p_features),
                               p_index, p_inline);
        }
        if (*grad_cmd) {
            return cmd_gradcheck(g_seed, g_nseeds, g_mode, g_step, g_tol, dims,
                                 g_json_out.empty() ? std::nullopt
                                                    : std::optional<std::string>(g_json_out));
        }
        if (*synth_cmd) return cmd_synth(s_out_dir, s_seed, spec);
    } catch (const mmfuse::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 64;
}
