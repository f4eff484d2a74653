#include "mmfuse/fusion.hpp"

#include "mmfuse/errors.hpp"
#include "mmfuse/kernels.hpp"

#include <cmath>
#include <string>

namespace mmfuse {

const char* to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::TextOnly: return "text_only";
        case FusionMode::ImageOnly: return "image_only";
        case FusionMode::Early: return "early";
        case FusionMode::Late: return "late";
        case FusionMode::Joint: return "joint";
        case FusionMode::CommonSpace: return "common_space";
    }
    return "?";
}

const char* to_string(Pooling p) {
    return p == Pooling::Max ? "max" : "avg";
}

const char* to_string(Aggregation a) {
    return a == Aggregation::Max ? "max" : "avg";
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "text_only") return FusionMode::TextOnly;
    if (s == "image_only") return FusionMode::ImageOnly;
    if (s == "early") return FusionMode::Early;
    if (s == "late") return FusionMode::Late;
    if (s == "joint") return FusionMode::Joint;
    if (s == "common_space") return FusionMode::CommonSpace;
    throw ConfigError("unknown fusion mode: " + s);
}

Pooling pooling_from_string(const std::string& s) {
    if (s == "max") return Pooling::Max;
    if (s == "avg") return Pooling::Avg;
    throw ConfigError("unknown pooling function: " + s);
}

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "max") return Aggregation::Max;
    if (s == "avg") return Aggregation::Avg;
    throw ConfigError("unknown aggregation function: " + s);
}

void FusionConfig::validate() const {
    if (class_count < 2) throw ConfigError("class_count must be >= 2");
    if (d < 1 || h < 1 || image_dim < 1) throw ConfigError("d, h and image_dim must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
    if (mode == FusionMode::CommonSpace && g < 1) {
        throw ConfigError("common_space requires g >= 1");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout_p must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

bool mode_uses_text(FusionMode mode) {
    return mode != FusionMode::ImageOnly;
}

bool mode_uses_image(FusionMode mode) {
    return mode != FusionMode::TextOnly;
}

bool mode_has_projection(FusionMode mode) {
    return mode == FusionMode::Joint || mode == FusionMode::CommonSpace;
}

bool mode_has_hidden(FusionMode mode) {
    return mode != FusionMode::ImageOnly && mode != FusionMode::Late;
}

std::size_t post_vector_dim(const FusionConfig& config) {
    switch (config.mode) {
        case FusionMode::TextOnly: return config.d;
        case FusionMode::ImageOnly: return config.image_dim;
        case FusionMode::Early: return config.image_dim + config.d;
        case FusionMode::Joint:
        case FusionMode::CommonSpace: return config.d;
        case FusionMode::Late: break;
    }
    throw ConfigError("post_vector_dim is undefined for late fusion");
}

namespace {

void fill_uniform(DenseMatrix& m, SeededRng& rng, double bound) {
    for (auto& v : m.values) v = rng.uniform(-bound, bound);
}

void fill_uniform(DenseVector& v, SeededRng& rng, double bound) {
    for (auto& x : v.values) x = rng.uniform(-bound, bound);
}

} // namespace

ModelParams init_params(const FusionConfig& config, EmbeddingTable embeddings, SeededRng& rng) {
    config.validate();
    ModelParams params;
    params.embeddings = std::move(embeddings);
    if (mode_has_projection(config.mode)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(config.image_dim));
        params.proj.w = DenseMatrix(config.d, config.image_dim);
        params.proj.b = DenseVector(config.d);
        fill_uniform(params.proj.w, rng, bound);
        fill_uniform(params.proj.b, rng, bound);
    }
    const std::size_t x_dim = post_vector_dim(config);
    if (mode_has_hidden(config.mode)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(x_dim));
        params.hidden_w = DenseMatrix(config.h, x_dim);
        params.hidden_b = DenseVector(config.h);
        fill_uniform(params.hidden_w, rng, bound);
        fill_uniform(params.hidden_b, rng, bound);
        const double hbound = 1.0 / std::sqrt(static_cast<double>(config.h));
        params.head_w = DenseMatrix(config.class_count, config.h);
        params.head_b = DenseVector(config.class_count);
        fill_uniform(params.head_w, rng, hbound);
        fill_uniform(params.head_b, rng, hbound);
    } else {
        const double bound = 1.0 / std::sqrt(static_cast<double>(x_dim));
        params.head_w = DenseMatrix(config.class_count, x_dim);
        params.head_b = DenseVector(config.class_count);
        fill_uniform(params.head_w, rng, bound);
        fill_uniform(params.head_b, rng, bound);
    }
    return params;
}

PostVector fuse(const std::optional<DenseVector>& text_vec,
                const std::optional<DenseVector>& image_vec_projected,
                const FusionConfig& config) {
    if (!text_vec && !image_vec_projected) {
        throw ValidationError("fuse: both modalities missing");
    }
    PostVector out;
    switch (config.mode) {
        case FusionMode::Early: {
            if (!text_vec || !image_vec_projected) {
                throw ValidationError("fuse: early fusion requires both modalities");
            }
            out.vec = DenseVector(image_vec_projected->dim() + text_vec->dim());
            std::size_t k = 0;
            for (double v : image_vec_projected->values) out.vec[k++] = v;
            for (double v : text_vec->values) out.vec[k++] = v;
            out.provenance = Provenance::Both;
            return out;
        }
        case FusionMode::Joint:
        case FusionMode::CommonSpace: {
            if (text_vec && image_vec_projected) {
                if (text_vec->dim() != image_vec_projected->dim()) {
                    throw ShapeError("fuse: pooled dims " + std::to_string(text_vec->dim()) +
                                     " vs " + std::to_string(image_vec_projected->dim()));
                }
                out.vec = DenseVector(text_vec->dim());
                if (config.pooling == Pooling::Max) {
                    kernels::active().vmax(text_vec->data(), image_vec_projected->data(),
                                           out.vec.data(), out.vec.dim());
                } else {
                    for (std::size_t i = 0; i < out.vec.dim(); ++i) {
                        out.vec[i] = 0.5 * ((*text_vec)[i] + (*image_vec_projected)[i]);
                    }
                }
                out.provenance = Provenance::Both;
            } else if (text_vec) { // pooling over a singleton
                out.vec = *text_vec;
                out.provenance = Provenance::TextOnly;
            } else {
                out.vec = *image_vec_projected;
                out.provenance = Provenance::ImageOnly;
            }
            return out;
        }
        default:
            throw ConfigError("fuse: mode " + std::string(to_string(config.mode)) +
                              " has no fusion layer");
    }
}

ForwardCache forward(const ModelInput& input, const ModelParams& params, const Vocabulary& vocab,
                     const FusionConfig& config, bool train_mode, SeededRng* rng) {
    if (config.mode == FusionMode::Late) {
        throw ConfigError("forward: late fusion is evaluated through its two unimodal models");
    }
    if (mode_uses_text(config.mode) && config.mode == FusionMode::TextOnly && !input.has_text()) {
        throw ValidationError("forward: text_only mode requires text");
    }
    if (config.mode == FusionMode::ImageOnly && !input.has_image()) {
        throw ValidationError("forward: image_only mode requires an image feature");
    }
    if (config.mode == FusionMode::Early && (!input.has_text() || !input.has_image())) {
        throw ValidationError("forward: early fusion requires both modalities");
    }
    if (!input.has_text() && !input.has_image()) {
        throw ValidationError("forward: post has no modality");
    }

    ForwardCache cache;
    cache.train_mode = train_mode;

    std::optional<DenseVector> text_vec;
    if (mode_uses_text(config.mode) && input.has_text()) {
        DropoutSpec dropout{train_mode, train_mode ? config.dropout_p : 0.0, rng};
        try {
            cache.text = encode_text_detailed(*input.tokens, params.embeddings, vocab,
                                              config.aggregation, dropout);
            text_vec = cache.text->vec;
        } catch (const EmptyTextError&) {
            // fully-OOV text: substitute the zero vector and flag the post
            cache.text_oov_zero = true;
            text_vec = DenseVector(config.d);
        }
    }

    std::optional<DenseVector> image_vec;
    if (mode_uses_image(config.mode) && input.has_image()) {
        if (input.image->dim() != config.image_dim) {
            throw ShapeError("forward: image feature dim " + std::to_string(input.image->dim()) +
                             " vs configured " + std::to_string(config.image_dim));
        }
        cache.image_raw = *input.image;
        if (mode_has_projection(config.mode)) {
            cache.image_proj = project_image(*input.image, params.proj);
            image_vec = cache.image_proj;
        } else {
            image_vec = cache.image_raw;
        }
    }

    if (config.mode == FusionMode::TextOnly) {
        cache.post = PostVector{*text_vec, Provenance::TextOnly};
    } else if (config.mode == FusionMode::ImageOnly) {
        cache.post = PostVector{*image_vec, Provenance::ImageOnly};
    } else {
        cache.post = fuse(text_vec, image_vec, config);
        if (mode_has_projection(config.mode) && config.pooling == Pooling::Max && text_vec &&
            image_vec) {
            // record per-coordinate winners for backward; ties go to the text side
            cache.pool_from_image.resize(cache.post.vec.dim());
            for (std::size_t i = 0; i < cache.post.vec.dim(); ++i) {
                cache.pool_from_image[i] = (*image_vec)[i] > (*text_vec)[i] ? 1 : 0;
            }
        }
    }

    const std::size_t expected = post_vector_dim(config);
    if (cache.post.vec.dim() != expected) {
        throw ShapeError("forward: post vector dim " + std::to_string(cache.post.vec.dim()) +
                         " vs expected " + std::to_string(expected));
    }

    if (mode_has_hidden(config.mode)) {
        cache.hidden_out = affine(params.hidden_w, cache.post.vec, params.hidden_b);
        cache.logits = affine(params.head_w, cache.hidden_out, params.head_b);
    } else {
        cache.logits = affine(params.head_w, cache.post.vec, params.head_b);
    }
    if (!all_finite(cache.logits)) throw NumericError("forward: non-finite logits");
    cache.probs = stable_softmax(cache.logits);
    return cache;
}

std::pair<DenseVector, std::size_t> late_fuse(const DenseVector& p_image,
                                              const DenseVector& p_text) {
    if (p_image.dim() != p_text.dim()) {
        throw ShapeError("late_fuse: dims " + std::to_string(p_image.dim()) + " vs " +
                         std::to_string(p_text.dim()));
    }
    DenseVector scores(p_image.dim());
    for (std::size_t i = 0; i < scores.dim(); ++i) scores[i] = p_image[i] * p_text[i];
    return {scores, argmax(scores)};
}

std::size_t predict(const ModelInput& input, const ModelParams& params, const Vocabulary& vocab,
                    const FusionConfig& config) {
    return argmax(forward(input, params, vocab, config, /*train_mode=*/false).probs);
}

FusionConfig late_branch_config(const FusionConfig& config, FusionMode branch) {
    FusionConfig out = config;
    out.mode = branch;
    return out;
}

DenseVector model_scores(const Model& model, const ModelInput& input) {
    if (model.config.mode != FusionMode::Late) {
        return forward(input, model.params, model.vocab, model.config, false).probs;
    }
    if (!model.late_text || !model.late_image) {
        throw ConfigError("late fusion model is missing a unimodal branch");
    }
    std::optional<DenseVector> p_text;
    std::optional<DenseVector> p_image;
    if (input.has_text()) {
        const FusionConfig tc = late_branch_config(model.config, FusionMode::TextOnly);
        p_text = forward(input, *model.late_text, model.vocab, tc, false).probs;
    }
    if (input.has_image()) {
        const FusionConfig ic = late_branch_config(model.config, FusionMode::ImageOnly);
        p_image = forward(input, *model.late_image, model.vocab, ic, false).probs;
    }
    if (p_text && p_image) return late_fuse(*p_image, *p_text).first;
    if (p_text) return *p_text;
    if (p_image) return *p_image;
    throw ValidationError("late fusion: post has no modality");
}

std::size_t model_predict(const Model& model, const ModelInput& input) {
    return argmax(model_scores(model, input));
}

} // namespace mmfuse
