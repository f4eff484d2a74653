#include "mmfuse/data.hpp"

#include "mmfuse/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace mmfuse {

using nlohmann::json;

std::size_t Dataset::class_index(const std::string& label) const {
    const auto it = std::find(classes.begin(), classes.end(), label);
    if (it == classes.end()) throw ValidationError("unknown class label: " + label);
    return static_cast<std::size_t>(it - classes.begin());
}

std::size_t Dataset::image_dim() const {
    if (features) return features->dim();
    for (const auto& post : posts) {
        if (post.feature_inline) return post.feature_inline->dim();
    }
    return 0;
}

ModelInput Dataset::input_for(const Post& post) const {
    ModelInput input;
    input.tokens = post.tokens;
    if (post.feature_inline) {
        input.image = *post.feature_inline;
    } else if (post.feature_ref) {
        if (!features) throw ValidationError("post " + post.id + " references a feature file");
        input.image = features->get(*post.feature_ref);
    }
    return input;
}

Dataset load_posts(const std::string& posts_path,
                   const std::optional<std::string>& features_path) {
    std::ifstream in(posts_path);
    if (!in) throw ValidationError("cannot open posts file: " + posts_path);

    Dataset ds;
    if (features_path) ds.features = read_feature_file(*features_path);

    std::unordered_set<std::string> seen_ids;
    std::unordered_map<std::string, std::size_t> class_index;
    bool any_inline = false;
    bool any_ref = false;
    std::size_t inline_dim = 0;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError("posts file line " + std::to_string(line_no) + ": " + e.what());
        }
        Post post;
        if (!rec.contains("id") || !rec["id"].is_string()) {
            throw ValidationError("posts file line " + std::to_string(line_no) + ": missing id");
        }
        post.id = rec["id"].get<std::string>();
        if (!seen_ids.insert(post.id).second) {
            throw ValidationError("duplicate post id: " + post.id);
        }
        if (!rec.contains("label") || !rec["label"].is_string()) {
            throw ValidationError("post " + post.id + ": missing label");
        }
        post.label = rec["label"].get<std::string>();
        if (rec.contains("sort_key")) post.sort_key = rec["sort_key"].get<long long>();
        if (rec.contains("text")) {
            post.tokens = default_tokenize(rec["text"].get<std::string>());
            if (post.tokens->empty()) post.tokens.reset();
        }
        if (rec.contains("feat") && rec.contains("feat_inline")) {
            throw ValidationError("post " + post.id + ": feat and feat_inline are exclusive");
        }
        if (rec.contains("feat")) {
            post.feature_ref = rec["feat"].get<std::size_t>();
            any_ref = true;
            if (!ds.features) {
                throw ValidationError("post " + post.id +
                                      " references a feature index but no feature file was given");
            }
            if (*post.feature_ref >= ds.features->count()) {
                throw ValidationError("post " + post.id + ": feature index " +
                                      std::to_string(*post.feature_ref) + " out of range (count " +
                                      std::to_string(ds.features->count()) + ")");
            }
        }
        if (rec.contains("feat_inline")) {
            DenseVector v;
            for (const auto& x : rec["feat_inline"]) v.values.push_back(x.get<double>());
            if (inline_dim == 0) inline_dim = v.dim();
            if (v.dim() != inline_dim) {
                throw ValidationError("post " + post.id + ": inline feature dim " +
                                      std::to_string(v.dim()) + " vs " +
                                      std::to_string(inline_dim));
            }
            post.feature_inline = std::move(v);
            any_inline = true;
        }
        if (!post.has_text() && !post.has_image()) {
            throw ValidationError("post " + post.id + ": neither text nor image feature present");
        }
        if (class_index.emplace(post.label, ds.classes.size()).second) {
            ds.classes.push_back(post.label);
        }
        ds.posts.push_back(std::move(post));
    }
    if (any_inline && any_ref) {
        throw ValidationError("dataset mixes inline features and feature-file records");
    }
    return ds;
}

Dataset load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest: " + manifest_path);
    json m;
    try {
        m = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("manifest parse error: ") + e.what());
    }
    if (!m.contains("posts")) throw ValidationError("manifest missing 'posts'");
    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    std::optional<std::string> features;
    if (m.contains("features") && !m["features"].is_null()) {
        features = resolve(m["features"].get<std::string>());
    }
    return load_posts(resolve(m["posts"].get<std::string>()), features);
}

void write_posts(const std::string& path, const std::vector<Post>& posts) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write posts file: " + path);
    for (const auto& post : posts) {
        json rec;
        rec["id"] = post.id;
        rec["label"] = post.label;
        rec["sort_key"] = post.sort_key;
        if (post.tokens) {
            std::string text;
            for (std::size_t i = 0; i < post.tokens->size(); ++i) {
                if (i) text += ' ';
                text += (*post.tokens)[i];
            }
            rec["text"] = text;
        }
        if (post.feature_ref) rec["feat"] = *post.feature_ref;
        if (post.feature_inline) rec["feat_inline"] = post.feature_inline->values;
        out << rec.dump() << '\n';
    }
}

DatasetSplit make_splits(const std::vector<Post>& posts) {
    const std::size_t n = posts.size();
    if (n < 10) {
        throw ValidationError("make_splits: need at least 10 posts, got " + std::to_string(n));
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (posts[a].sort_key != posts[b].sort_key) return posts[a].sort_key > posts[b].sort_key;
        return posts[a].id < posts[b].id;
    });
    const std::size_t tenth = (n + 9) / 10; // ceil(0.1 N)
    DatasetSplit split;
    split.test.assign(order.begin(), order.begin() + tenth);
    split.validation.assign(order.begin() + tenth, order.begin() + 2 * tenth);
    split.train.assign(order.begin() + 2 * tenth, order.end());
    return split;
}

SyntheticFiles gen_synthetic(SeededRng& rng, const SyntheticSpec& spec,
                             const std::string& out_dir) {
    if (spec.classes != 4) throw ConfigError("gen_synthetic: classes must be 4 (two latent bits)");
    if (spec.per_class < 25) throw ConfigError("gen_synthetic: per_class must be >= 25");
    if (spec.xor_fraction < 0.0 || spec.xor_fraction > 1.0) {
        throw ConfigError("gen_synthetic: xor_fraction must be in [0, 1]");
    }
    if (spec.n_image < 2 || spec.filler_vocab < 1) {
        throw ConfigError("gen_synthetic: n_image must be >= 2 and filler_vocab >= 1");
    }

    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    SyntheticFiles files{(dir / "posts.jsonl").string(), (dir / "features.mmf").string(),
                         (dir / "manifest.json").string()};

    static const char* kClassNames[4] = {"calm_dim", "calm_bright", "tense_dim", "tense_bright"};

    std::vector<Post> posts;
    FeatureStore store;
    const std::size_t total = spec.per_class * 4;
    const std::size_t half = spec.n_image / 2;

    for (std::size_t c = 0; c < 4; ++c) {
        const int b_t = static_cast<int>(c >> 1);
        const int b_v = static_cast<int>(c & 1);
        for (std::size_t k = 0; k < spec.per_class; ++k) {
            Post post;
            post.id = "p" + std::to_string(posts.size());
            post.label = kClassNames[c];
            post.sort_key = static_cast<long long>(rng.next_below(10 * total));

            // text: always the text bit, sometimes a visual hint, plus filler
            std::vector<std::string> tokens;
            tokens.push_back(b_t ? "tense" : "calm");
            if (rng.uniform(0.0, 1.0) < 1.0 - spec.xor_fraction) {
                tokens.push_back(b_v ? "bright" : "dim");
            }
            for (int f = 0; f < 3; ++f) {
                tokens.push_back("filler" + std::to_string(rng.next_below(spec.filler_vocab)));
            }
            post.tokens = std::move(tokens);

            // image: first half carries the visual bit; second half hints the
            // text bit only for non-xor posts
            DenseVector feat(spec.n_image);
            const double v_mean = b_v ? spec.signal : -spec.signal;
            const bool leak_text = rng.uniform(0.0, 1.0) < 1.0 - spec.xor_fraction;
            const double t_mean = leak_text ? (b_t ? spec.signal : -spec.signal) : 0.0;
            for (std::size_t j = 0; j < spec.n_image; ++j) {
                const double mean = j < half ? v_mean : t_mean;
                feat[j] = mean + spec.noise_sigma * rng.normal();
            }
            post.feature_ref = store.count();
            store.append(feat);
            posts.push_back(std::move(post));
        }
    }

    write_posts(files.posts_path, posts);
    write_feature_file(files.features_path, store);

    json manifest;
    manifest["posts"] = "posts.jsonl";
    manifest["features"] = "features.mmf";
    manifest["classes"] = json::array();
    for (const auto* name : kClassNames) manifest["classes"].push_back(name);
    manifest["provenance"] = {{"generator", "synthetic-xor"},
                              {"seed", rng.seed()},
                              {"per_class", spec.per_class},
                              {"filler_vocab", spec.filler_vocab},
                              {"n_image", spec.n_image},
                              {"xor_fraction", spec.xor_fraction},
                              {"noise_sigma", spec.noise_sigma},
                              {"signal", spec.signal}};
    std::ofstream mf(files.manifest_path, std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    return files;
}

} // namespace mmfuse
