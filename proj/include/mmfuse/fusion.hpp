#pragma once
// Fusion model assembly: per-mode post vectors and class probabilities.
// Late fusion multiplies two unimodal models; the other modes share a
// linear stack (optional projection, fusion, low-rank hidden layer, head).

#include "mmfuse/encoders.hpp"
#include "mmfuse/numkit.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmfuse {

enum class FusionMode { TextOnly, ImageOnly, Early, Late, Joint, CommonSpace };
enum class Pooling { Max, Avg };

const char* to_string(FusionMode mode);
const char* to_string(Pooling p);
const char* to_string(Aggregation a);
FusionMode fusion_mode_from_string(const std::string& s);
Pooling pooling_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

struct FusionConfig {
    FusionMode mode = FusionMode::Joint;
    Pooling pooling = Pooling::Max;
    Aggregation aggregation = Aggregation::Max;
    std::size_t d = 200;         // word embedding size; also the common space dim
    std::size_t h = 100;         // hidden vector space
    std::size_t g = 3;           // negative samples per iteration
    double lambda = 3.0;         // classification main task weight
    double dropout_p = 0.25;
    double learning_rate = 0.01;
    std::size_t image_dim = 2048;
    std::size_t class_count = 0;
    bool freeze_embeddings = false;

    void validate() const; // throws ConfigError
};

bool mode_uses_text(FusionMode mode);
bool mode_uses_image(FusionMode mode);
bool mode_has_projection(FusionMode mode);
bool mode_has_hidden(FusionMode mode);

// post-vector dimension fed to the classifier stack
std::size_t post_vector_dim(const FusionConfig& config);

struct ModelParams {
    EmbeddingTable embeddings; // empty unless the mode uses text
    ProjectionParams proj;     // empty unless joint/common
    DenseMatrix hidden_w;      // empty for image_only
    DenseVector hidden_b;
    DenseMatrix head_w;
    DenseVector head_b;
};

// parameters drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in));
// embeddings are supplied separately (pretrained file or uniform init)
ModelParams init_params(const FusionConfig& config, EmbeddingTable embeddings, SeededRng& rng);

// A post resolved to raw model inputs.
struct ModelInput {
    std::optional<std::vector<std::string>> tokens;
    std::optional<DenseVector> image; // raw gamma(i)

    bool has_text() const { return tokens.has_value(); }
    bool has_image() const { return image.has_value(); }
};

enum class Provenance { Both, TextOnly, ImageOnly };

struct PostVector {
    DenseVector vec;
    Provenance provenance = Provenance::Both;
};

// early: [image; text] concatenation; joint/common: elementwise pooling,
// passthrough when only one modality is present
PostVector fuse(const std::optional<DenseVector>& text_vec,
                const std::optional<DenseVector>& image_vec_projected,
                const FusionConfig& config);

struct ForwardCache {
    std::optional<TextEncoding> text; // classification-path encoding
    bool text_oov_zero = false;       // fully-OOV text replaced by the zero vector
    std::optional<DenseVector> image_raw;
    std::optional<DenseVector> image_proj;
    PostVector post;
    std::vector<std::uint8_t> pool_from_image; // max pooling: per-coordinate winner flag
    DenseVector hidden_out;
    DenseVector logits;
    DenseVector probs;
    bool train_mode = false;
};

// rng is only consumed for dropout masks (train mode)
ForwardCache forward(const ModelInput& input, const ModelParams& params, const Vocabulary& vocab,
                     const FusionConfig& config, bool train_mode, SeededRng* rng = nullptr);

// elementwise product of two class distributions; argmax breaks ties low
std::pair<DenseVector, std::size_t> late_fuse(const DenseVector& p_image,
                                              const DenseVector& p_text);

std::size_t predict(const ModelInput& input, const ModelParams& params, const Vocabulary& vocab,
                    const FusionConfig& config);

// Full trained model. Late fusion carries two unimodal parameter sets.
struct Model {
    FusionConfig config;
    std::vector<std::string> classes;
    Vocabulary vocab;
    ModelParams params;                      // unused when mode == Late
    std::optional<ModelParams> late_text;    // text_only branch (mode == Late)
    std::optional<ModelParams> late_image;   // image_only branch (mode == Late)
};

FusionConfig late_branch_config(const FusionConfig& config, FusionMode branch);

// class probabilities (late fusion: unnormalized product scores)
DenseVector model_scores(const Model& model, const ModelInput& input);
std::size_t model_predict(const Model& model, const ModelInput& input);

} // namespace mmfuse
