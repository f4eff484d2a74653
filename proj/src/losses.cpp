#include "mmfuse/losses.hpp"

#include "mmfuse/errors.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace mmfuse {

namespace {

// log(1 + exp(t)) without overflow
double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
    return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

// route a gradient on the aggregated text vector back into embedding rows
void accumulate_text_grad(const TextEncoding& enc, const DenseVector& dtext,
                          std::map<std::size_t, DenseVector>& emb_grads, std::size_t d) {
    auto row_grad = [&](std::size_t row) -> DenseVector& {
        auto it = emb_grads.find(row);
        if (it == emb_grads.end()) it = emb_grads.emplace(row, DenseVector(d)).first;
        return it->second;
    };
    const bool dropped = !enc.scales.empty();
    if (enc.agg == Aggregation::Avg) {
        const double coef = 1.0 / static_cast<double>(enc.rows.size());
        for (std::size_t t = 0; t < enc.rows.size(); ++t) {
            DenseVector& g = row_grad(enc.rows[t]);
            for (std::size_t j = 0; j < d; ++j) {
                const double scale = dropped ? enc.scales[t][j] : 1.0;
                g[j] += dtext[j] * coef * scale;
            }
        }
    } else {
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t t = enc.winners[j];
            const double scale = dropped ? enc.scales[t][j] : 1.0;
            row_grad(enc.rows[t])[j] += dtext[j] * scale;
        }
    }
}

} // namespace

double nll_loss(const DenseVector& probabilities, std::size_t true_class) {
    if (true_class >= probabilities.dim()) {
        throw ValidationError("nll_loss: class " + std::to_string(true_class) +
                              " out of range for " + std::to_string(probabilities.dim()) +
                              " classes");
    }
    return -std::log(probabilities[true_class]);
}

double nll_from_logits(const DenseVector& logits, std::size_t true_class) {
    if (true_class >= logits.dim()) {
        throw ValidationError("nll_from_logits: class " + std::to_string(true_class) +
                              " out of range for " + std::to_string(logits.dim()) + " classes");
    }
    return log_sum_exp(logits) - logits[true_class];
}

double aux_loss(const PairBatch& batch) {
    if (batch.negatives.empty()) throw ValidationError("aux_loss: empty negative batch");
    const double dp = squared_distance(batch.anchor_proj, batch.positive.vec);
    double loss = 0.0;
    for (const auto& neg : batch.negatives) {
        const double dn = squared_distance(batch.anchor_proj, neg.vec);
        loss += softplus(dp - dn);
    }
    return loss;
}

PairBatch build_pair_batch(const DenseVector& image_raw,
                           const std::vector<std::string>& positive_tokens,
                           const std::vector<std::vector<std::string>>& negative_tokens,
                           const ModelParams& params, const Vocabulary& vocab,
                           const FusionConfig& config) {
    PairBatch batch;
    batch.anchor_raw = image_raw;
    batch.anchor_proj = project_image(image_raw, params.proj);
    const DropoutSpec eval_mode{}; // pair distances use dropout-free encodings
    batch.positive = encode_text_detailed(positive_tokens, params.embeddings, vocab,
                                          config.aggregation, eval_mode);
    batch.negatives.reserve(negative_tokens.size());
    for (const auto& tokens : negative_tokens) {
        batch.negatives.push_back(encode_text_detailed(tokens, params.embeddings, vocab,
                                                       config.aggregation, eval_mode));
    }
    return batch;
}

double combined_loss(double nll, double aux, double lambda) {
    return lambda * nll + aux;
}

GradientSet backward(std::size_t true_class, const std::optional<PairBatch>& batch,
                     const ModelParams& params, const FusionConfig& config,
                     const ForwardCache& cache) {
    if (cache.logits.dim() != config.class_count) {
        throw ValidationError("backward: cache does not match config (logit dim " +
                              std::to_string(cache.logits.dim()) + " vs " +
                              std::to_string(config.class_count) + " classes)");
    }
    GradientSet g;
    g.proj_w = DenseMatrix(params.proj.w.rows, params.proj.w.cols);
    g.proj_b = DenseVector(params.proj.b.dim());
    g.hidden_w = DenseMatrix(params.hidden_w.rows, params.hidden_w.cols);
    g.hidden_b = DenseVector(params.hidden_b.dim());
    g.head_w = DenseMatrix(params.head_w.rows, params.head_w.cols);
    g.head_b = DenseVector(params.head_b.dim());

    // classification term; scaled by lambda when the combined loss is active
    const double scale = config.mode == FusionMode::CommonSpace ? config.lambda : 1.0;
    DenseVector dlogits = cache.probs;
    dlogits[true_class] -= 1.0;
    for (auto& v : dlogits.values) v *= scale;

    DenseVector dx;
    if (mode_has_hidden(config.mode)) {
        add_outer(g.head_w, dlogits, cache.hidden_out);
        axpy(1.0, dlogits, g.head_b);
        const DenseVector du = matvec_transpose(params.head_w, dlogits);
        add_outer(g.hidden_w, du, cache.post.vec);
        axpy(1.0, du, g.hidden_b);
        dx = matvec_transpose(params.hidden_w, du);
    } else {
        add_outer(g.head_w, dlogits, cache.post.vec);
        axpy(1.0, dlogits, g.head_b);
        dx = DenseVector(); // image_only: the raw feature is not trainable
    }

    DenseVector dtext;
    DenseVector dproj;
    switch (config.mode) {
        case FusionMode::TextOnly:
            dtext = dx;
            break;
        case FusionMode::ImageOnly:
            break;
        case FusionMode::Early: {
            // dx = [image part; text part]; the raw image half has no parameters
            dtext = DenseVector(config.d);
            for (std::size_t j = 0; j < config.d; ++j) dtext[j] = dx[config.image_dim + j];
            break;
        }
        case FusionMode::Joint:
        case FusionMode::CommonSpace: {
            if (cache.post.provenance == Provenance::Both) {
                dtext = DenseVector(config.d);
                dproj = DenseVector(config.d);
                if (config.pooling == Pooling::Max) {
                    for (std::size_t j = 0; j < config.d; ++j) {
                        if (cache.pool_from_image[j]) {
                            dproj[j] = dx[j];
                        } else {
                            dtext[j] = dx[j];
                        }
                    }
                } else {
                    for (std::size_t j = 0; j < config.d; ++j) {
                        dtext[j] = 0.5 * dx[j];
                        dproj[j] = 0.5 * dx[j];
                    }
                }
            } else if (cache.post.provenance == Provenance::TextOnly) {
                dtext = dx;
            } else {
                dproj = dx;
            }
            break;
        }
        case FusionMode::Late:
            throw ConfigError("backward: late fusion has no joint backward pass");
    }

    if (dtext.dim() > 0 && cache.text && !cache.text_oov_zero) {
        accumulate_text_grad(*cache.text, dtext, g.embedding_rows, config.d);
    }
    if (dproj.dim() > 0) {
        add_outer(g.proj_w, dproj, *cache.image_raw);
        axpy(1.0, dproj, g.proj_b);
    }

    // auxiliary common-space term
    if (batch) {
        if (config.mode != FusionMode::CommonSpace) {
            throw ConfigError("backward: pair batch given outside common_space mode");
        }
        const DenseVector& gp = batch->anchor_proj;
        const double dp = squared_distance(gp, batch->positive.vec);
        DenseVector dgamma(gp.dim());
        double sigma_sum = 0.0;
        for (const auto& neg : batch->negatives) {
            const double dn = squared_distance(gp, neg.vec);
            const double s = sigmoid(dp - dn);
            sigma_sum += s;
            // d term / d psi(s-) = +2 sigma (gamma~ - psi(s-)); chain into E rows
            DenseVector dneg(gp.dim());
            for (std::size_t j = 0; j < gp.dim(); ++j) {
                const double diff = gp[j] - neg.vec[j];
                dgamma[j] -= 2.0 * s * diff;
                dneg[j] = 2.0 * s * diff;
            }
            accumulate_text_grad(neg, dneg, g.embedding_rows, config.d);
        }
        DenseVector dpos(gp.dim());
        for (std::size_t j = 0; j < gp.dim(); ++j) {
            const double diff = gp[j] - batch->positive.vec[j];
            dgamma[j] += 2.0 * sigma_sum * diff;
            dpos[j] = -2.0 * sigma_sum * diff;
        }
        accumulate_text_grad(batch->positive, dpos, g.embedding_rows, config.d);
        add_outer(g.proj_w, dgamma, batch->anchor_raw);
        axpy(1.0, dgamma, g.proj_b);
    }
    return g;
}

namespace {

struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
    const double* analytic;
};

} // namespace

GradCheckReport grad_check(const ModelParams& params, const ModelInput& input,
                           std::size_t true_class,
                           const std::vector<std::vector<std::string>>& negative_tokens,
                           const Vocabulary& vocab, const FusionConfig& config, double step,
                           double tolerance, std::uint64_t dropout_seed, std::size_t max_coords,
                           const GradientSet* analytic_override) {
    if (!(step > 0.0)) throw ConfigError("grad_check: step must be > 0");

    const bool use_aux = config.mode == FusionMode::CommonSpace && !negative_tokens.empty() &&
                         input.has_text() && input.has_image();

    ModelParams work = params;

    const auto loss_of = [&]() {
        SeededRng drop(dropout_seed); // identical mask sequence on every evaluation
        const ForwardCache cache = forward(input, work, vocab, config, true, &drop);
        double loss = nll_from_logits(cache.logits, true_class);
        if (config.mode == FusionMode::CommonSpace) loss *= config.lambda;
        if (use_aux) {
            const PairBatch batch =
                build_pair_batch(*input.image, *input.tokens, negative_tokens, work, vocab, config);
            loss += aux_loss(batch);
        }
        if (!std::isfinite(loss)) throw NumericError("grad_check: non-finite loss");
        return loss;
    };

    // analytic gradients once, at the unperturbed point
    GradientSet analytic;
    {
        SeededRng drop(dropout_seed);
        const ForwardCache cache = forward(input, work, vocab, config, true, &drop);
        std::optional<PairBatch> batch;
        if (use_aux) {
            batch =
                build_pair_batch(*input.image, *input.tokens, negative_tokens, work, vocab, config);
        }
        analytic = backward(true_class, batch, work, config, cache);
    }
    if (analytic_override) analytic = *analytic_override;

    // expand sparse embedding gradients into a dense view for probing
    DenseMatrix emb_grad(work.embeddings.e.rows, work.embeddings.e.cols);
    for (const auto& [row, grad] : analytic.embedding_rows) {
        for (std::size_t j = 0; j < grad.dim(); ++j) emb_grad.at(row, j) = grad[j];
    }

    std::vector<TensorRef> tensors;
    auto add_mat = [&](const std::string& name, DenseMatrix& m, const DenseMatrix& a) {
        if (!m.values.empty()) tensors.push_back({name, m.values.data(), m.values.size(), a.values.data()});
    };
    auto add_vec = [&](const std::string& name, DenseVector& v, const DenseVector& a) {
        if (!v.values.empty()) tensors.push_back({name, v.values.data(), v.values.size(), a.values.data()});
    };
    add_mat("embeddings", work.embeddings.e, emb_grad);
    add_mat("proj_w", work.proj.w, analytic.proj_w);
    add_vec("proj_b", work.proj.b, analytic.proj_b);
    add_mat("hidden_w", work.hidden_w, analytic.hidden_w);
    add_vec("hidden_b", work.hidden_b, analytic.hidden_b);
    add_mat("head_w", work.head_w, analytic.head_w);
    add_vec("head_b", work.head_b, analytic.head_b);

    // Central differences cannot resolve derivatives below the cancellation
    // noise of (f(x+h) - f(x-h)) / 2h, about eps * |f| / h. Coordinates where
    // both gradients sit under that floor are unverifiable and are skipped.
    const double noise_floor =
        8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss_of())) / step;

    GradCheckReport report;
    for (const auto& t : tensors) {
        TensorCheck check;
        check.name = t.name;
        const std::size_t stride = t.size > max_coords ? (t.size + max_coords - 1) / max_coords : 1;
        for (std::size_t i = 0; i < t.size; i += stride) {
            const double saved = t.data[i];
            t.data[i] = saved + step;
            const double up = loss_of();
            t.data[i] = saved - step;
            const double down = loss_of();
            t.data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = t.analytic[i];
            if (std::abs(a) <= noise_floor && std::abs(numeric) <= noise_floor) continue;
            const double rel =
                std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            if (rel > check.max_rel_error) {
                check.max_rel_error = rel;
                check.worst_coord = i;
            }
        }
        check.pass = check.max_rel_error < tolerance;
        if (check.max_rel_error > report.max_rel_error) {
            report.max_rel_error = check.max_rel_error;
            report.worst_tensor = check.name;
        }
        report.pass = report.pass && check.pass;
        report.tensors.push_back(std::move(check));
    }
    return report;
}

} // namespace mmfuse
