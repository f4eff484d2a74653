#include "mmfuse/train_eval.hpp"

#include "mmfuse/errors.hpp"
#include "mmfuse/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace mmfuse {

const char* to_string(ModalityFilter f) {
    switch (f) {
        case ModalityFilter::Both: return "both";
        case ModalityFilter::TextOnly: return "text_only";
        case ModalityFilter::ImageOnly: return "image_only";
    }
    return "?";
}

ModalityFilter modality_filter_from_string(const std::string& s) {
    if (s == "both") return ModalityFilter::Both;
    if (s == "text_only" || s == "text") return ModalityFilter::TextOnly;
    if (s == "image_only" || s == "image") return ModalityFilter::ImageOnly;
    throw ConfigError("unknown modality filter: " + s);
}

NegativePool NegativePool::build(const Dataset& ds, const std::vector<std::size_t>& train_indices) {
    NegativePool pool;
    pool.by_class.assign(ds.classes.size(), {});
    for (std::size_t idx : train_indices) {
        const Post& post = ds.posts[idx];
        if (post.has_text()) pool.by_class[ds.class_index(post.label)].push_back(idx);
    }
    return pool;
}

std::size_t NegativePool::available_outside(std::size_t class_idx) const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (c != class_idx) n += by_class[c].size();
    }
    return n;
}

std::vector<std::size_t> sample_negatives(SeededRng& rng, std::size_t anchor_class,
                                          const NegativePool& pool, std::size_t g) {
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < pool.by_class.size(); ++c) {
        if (c == anchor_class) continue;
        candidates.insert(candidates.end(), pool.by_class[c].begin(), pool.by_class[c].end());
    }
    if (g > candidates.size()) {
        throw CapacityError("sample_negatives: need " + std::to_string(g) +
                            " other-class posts with text, have " +
                            std::to_string(candidates.size()));
    }
    const auto picks = sample_distinct(rng, candidates.size(), g);
    std::vector<std::size_t> out;
    out.reserve(g);
    for (std::size_t p : picks) out.push_back(candidates[p]);
    return out;
}

void sgd_apply(ModelParams& params, const GradientSet& grads, double learning_rate,
               bool freeze_embeddings) {
    const auto& ops = kernels::active();
    if (!freeze_embeddings) {
        for (const auto& [row, grad] : grads.embedding_rows) {
            ops.axpy(-learning_rate, grad.data(), params.embeddings.e.row(row), grad.dim());
        }
    }
    auto step_mat = [&](DenseMatrix& p, const DenseMatrix& g) {
        if (!g.values.empty()) ops.axpy(-learning_rate, g.values.data(), p.values.data(), g.values.size());
    };
    auto step_vec = [&](DenseVector& p, const DenseVector& g) {
        if (!g.values.empty()) ops.axpy(-learning_rate, g.data(), p.data(), g.dim());
    };
    step_mat(params.proj.w, grads.proj_w);
    step_vec(params.proj.b, grads.proj_b);
    step_mat(params.hidden_w, grads.hidden_w);
    step_vec(params.hidden_b, grads.hidden_b);
    step_mat(params.head_w, grads.head_w);
    step_vec(params.head_b, grads.head_b);
}

namespace {

bool post_trainable(const Post& post, FusionMode mode) {
    switch (mode) {
        case FusionMode::TextOnly: return post.has_text();
        case FusionMode::ImageOnly: return post.has_image();
        case FusionMode::Early: return post.has_text() && post.has_image();
        case FusionMode::Joint:
        case FusionMode::CommonSpace: return post.has_text() || post.has_image();
        case FusionMode::Late: break;
    }
    throw ConfigError("post_trainable: late fusion is trained per branch");
}

void shuffle_in_place(std::vector<std::size_t>& v, SeededRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.next_below(i)]);
    }
}

TrainResult train_single(const Dataset& ds, const DatasetSplit& split, FusionConfig config,
                         const TrainOptions& options) {
    config.class_count = ds.classes.size();
    if (mode_uses_image(config.mode)) {
        const std::size_t dim = ds.image_dim();
        if (dim == 0) throw ValidationError("train: mode needs image features but none present");
        config.image_dim = dim;
    }
    config.validate();

    SeededRng master(options.seed);

    Model model;
    model.config = config;
    model.classes = ds.classes;

    if (mode_uses_text(config.mode)) {
        std::vector<std::vector<std::string>> corpus;
        for (std::size_t idx : split.train) {
            if (ds.posts[idx].has_text()) corpus.push_back(*ds.posts[idx].tokens);
        }
        model.vocab = build_vocabulary(corpus, options.min_count);
    }

    EmbeddingTable embeddings;
    if (mode_uses_text(config.mode)) {
        SeededRng emb_rng = master.substream(1);
        embeddings = options.embedding_path
                         ? load_embeddings(*options.embedding_path, model.vocab, config.d, emb_rng)
                         : init_embeddings(model.vocab, config.d, emb_rng);
    }
    SeededRng init_rng = master.substream(2);
    model.params = init_params(config, std::move(embeddings), init_rng);

    TrainResult result;
    result.model = model;

    const NegativePool pool = NegativePool::build(ds, split.train);

    ModelParams best_params = model.params;
    double best_val = -1.0;

    std::vector<std::size_t> order(split.train);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        SeededRng rng_e = master.substream(1000 + epoch);
        shuffle_in_place(order, rng_e);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t idx : order) {
            const Post& post = ds.posts[idx];
            if (!post_trainable(post, config.mode)) continue;
            const ModelInput input = ds.input_for(post);
            const std::size_t label = ds.class_index(post.label);

            const ForwardCache cache =
                forward(input, model.params, model.vocab, config, true, &rng_e);
            double loss = nll_from_logits(cache.logits, label);
            if (config.mode == FusionMode::CommonSpace) loss *= config.lambda;

            std::optional<PairBatch> batch;
            if (config.mode == FusionMode::CommonSpace && post.has_text() && post.has_image() &&
                pool.available_outside(label) >= config.g) {
                const auto neg_idx = sample_negatives(rng_e, label, pool, config.g);
                std::vector<std::vector<std::string>> neg_tokens;
                neg_tokens.reserve(neg_idx.size());
                for (std::size_t n : neg_idx) neg_tokens.push_back(*ds.posts[n].tokens);
                try {
                    batch = build_pair_batch(*input.image, *post.tokens, neg_tokens, model.params,
                                             model.vocab, config);
                    loss += aux_loss(*batch);
                } catch (const EmptyTextError&) {
                    batch.reset(); // fully-OOV pair text: fall back to the classification term
                }
            }

            if (!std::isfinite(loss)) {
                throw NumericError("train: non-finite loss " + std::to_string(loss) +
                                   " at epoch " + std::to_string(epoch) + ", post " + post.id);
            }
            loss_sum += loss;
            ++loss_count;

            const GradientSet grads = backward(label, batch, model.params, config, cache);
            sgd_apply(model.params, grads, config.learning_rate, config.freeze_embeddings);
        }

        EpochStats stats;
        stats.mean_train_loss = loss_count ? loss_sum / loss_count : 0.0;
        const MetricsReport val = evaluate(ds, split.validation, model, ModalityFilter::Both);
        stats.val_accuracy = val.accuracy;
        result.history.push_back(stats);
        if (val.accuracy > best_val) {
            best_val = val.accuracy;
            best_params = model.params;
        }
        result.final_val_accuracy = val.accuracy;
    }

    result.model.params = options.epochs ? best_params : model.params;
    result.best_val_accuracy = best_val < 0.0 ? 0.0 : best_val;
    return result;
}

} // namespace

TrainResult train(const Dataset& ds, const DatasetSplit& split, FusionConfig config,
                  const TrainOptions& options) {
    if (config.mode != FusionMode::Late) return train_single(ds, split, config, options);

    // late fusion: two independently trained unimodal classifiers
    TrainOptions text_opts = options;
    text_opts.seed = SeededRng(options.seed).substream(11).seed();
    TrainOptions image_opts = options;
    image_opts.seed = SeededRng(options.seed).substream(12).seed();
    TrainResult text_res =
        train_single(ds, split, late_branch_config(config, FusionMode::TextOnly), text_opts);
    TrainResult image_res =
        train_single(ds, split, late_branch_config(config, FusionMode::ImageOnly), image_opts);

    TrainResult result;
    result.model.config = config;
    result.model.config.class_count = ds.classes.size();
    result.model.config.image_dim = image_res.model.config.image_dim;
    result.model.classes = ds.classes;
    result.model.vocab = text_res.model.vocab;
    result.model.late_text = std::move(text_res.model.params);
    result.model.late_image = std::move(image_res.model.params);
    if (options.epochs) {
        const MetricsReport val = evaluate(ds, split.validation, result.model, ModalityFilter::Both);
        result.best_val_accuracy = val.accuracy;
        result.final_val_accuracy = val.accuracy;
    }
    for (std::size_t e = 0; e < text_res.history.size(); ++e) {
        EpochStats stats;
        stats.mean_train_loss =
            0.5 * (text_res.history[e].mean_train_loss + image_res.history[e].mean_train_loss);
        stats.val_accuracy = 0.0;
        result.history.push_back(stats);
    }
    return result;
}

MetricsReport evaluate(const Dataset& ds, const std::vector<std::size_t>& indices,
                       const Model& model, ModalityFilter filter) {
    std::vector<std::size_t> y_true;
    std::vector<std::size_t> y_pred;
    std::size_t skipped = 0;

    for (std::size_t idx : indices) {
        const Post& post = ds.posts[idx];
        ModelInput input = ds.input_for(post);
        if (filter == ModalityFilter::TextOnly) input.image.reset();
        if (filter == ModalityFilter::ImageOnly) input.tokens.reset();

        bool usable = input.has_text() || input.has_image();
        switch (model.config.mode) {
            case FusionMode::TextOnly: usable = input.has_text(); break;
            case FusionMode::ImageOnly: usable = input.has_image(); break;
            case FusionMode::Early: usable = input.has_text() && input.has_image(); break;
            default: break;
        }
        if (!usable) {
            ++skipped;
            continue;
        }
        y_true.push_back(ds.class_index(post.label));
        y_pred.push_back(model_predict(model, input));
    }
    if (y_true.empty()) {
        throw ValidationError("evaluate: no evaluable posts under filter " +
                              std::string(to_string(filter)));
    }
    MetricsReport report = compute_metrics(y_true, y_pred, ds.classes.size());
    report.skipped = skipped;
    return report;
}

} // namespace mmfuse
