#pragma once
// Post schema, dataset ingestion (JSON-lines posts + MMF1 features), the
// upvote-ordered split protocol, and a synthetic generator whose labels
// encode two latent bits so that unimodal classifiers are provably capped.

#include "mmfuse/encoders.hpp"
#include "mmfuse/fusion.hpp"
#include "mmfuse/numkit.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmfuse {

struct Post {
    std::string id;
    std::optional<std::vector<std::string>> tokens;
    std::optional<std::size_t> feature_ref;      // record index into the feature file
    std::optional<DenseVector> feature_inline;
    std::string label;
    long long sort_key = 0; // upvotes / annotator agreements

    bool has_text() const { return tokens.has_value(); }
    bool has_image() const { return feature_ref.has_value() || feature_inline.has_value(); }
};

struct Dataset {
    std::vector<Post> posts;
    std::vector<std::string> classes; // ordered by first appearance
    std::optional<FeatureStore> features;

    std::size_t class_index(const std::string& label) const;
    std::size_t image_dim() const;
    ModelInput input_for(const Post& post) const;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

Dataset load_posts(const std::string& posts_path,
                   const std::optional<std::string>& features_path);

// resolves a manifest JSON {posts, features?, classes?, ...}
Dataset load_manifest(const std::string& manifest_path);

void write_posts(const std::string& path, const std::vector<Post>& posts);

// sort by (sort_key desc, id asc); top ceil(0.1 N) -> test, next ceil(0.1 N)
// -> validation, rest -> train
DatasetSplit make_splits(const std::vector<Post>& posts);

struct SyntheticSpec {
    std::size_t per_class = 250;
    std::size_t classes = 4; // fixed: two latent bits
    std::size_t filler_vocab = 1000;
    std::size_t n_image = 64;
    double xor_fraction = 1.0;
    double noise_sigma = 0.5;
    double signal = 0.15; // |mean| of informative feature coordinates
};

struct SyntheticFiles {
    std::string posts_path;
    std::string features_path;
    std::string manifest_path;
};

// Label encodes bits (b_t, b_v). The text always reveals b_t and, with
// probability (1 - xor_fraction), hints b_v; the image feature always
// reveals b_v and, with the same probability, hints b_t. At xor_fraction=1
// each single modality carries exactly one of the two label bits.
SyntheticFiles gen_synthetic(SeededRng& rng, const SyntheticSpec& spec,
                             const std::string& out_dir);

} // namespace mmfuse
