#pragma once
// Training objectives and their hand-derived gradients: classification NLL,
// the common-space auxiliary loss over positive/negative pairs, the
// lambda-weighted combined loss, and a finite-difference gradient checker.

#include "mmfuse/fusion.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmfuse {

// One anchor image against its own text and g other-class texts.
// Text encodings are eval-mode (dropout-free) by design.
struct PairBatch {
    DenseVector anchor_raw;  // gamma(i)
    DenseVector anchor_proj; // projected gamma~(i)
    TextEncoding positive;   // psi(s+)
    std::vector<TextEncoding> negatives;
};

// -log(p[true_class]); prefer nll_from_logits on a live model
double nll_loss(const DenseVector& probabilities, std::size_t true_class);

// computed through log-softmax, never through the normalized probabilities
double nll_from_logits(const DenseVector& logits, std::size_t true_class);

// sum over negatives of log(1 + exp(d(pos) - d(neg))), evaluated in log space
double aux_loss(const PairBatch& batch);

PairBatch build_pair_batch(const DenseVector& image_raw,
                           const std::vector<std::string>& positive_tokens,
                           const std::vector<std::vector<std::string>>& negative_tokens,
                           const ModelParams& params, const Vocabulary& vocab,
                           const FusionConfig& config);

// lambda * nll + aux; the loss actually minimized under common_space
double combined_loss(double nll, double aux, double lambda);

struct GradientSet {
    std::map<std::size_t, DenseVector> embedding_rows; // sparse, only touched rows
    DenseMatrix proj_w;
    DenseVector proj_b;
    DenseMatrix hidden_w;
    DenseVector hidden_b;
    DenseMatrix head_w;
    DenseVector head_b;
};

// Gradients of the active loss (nll, or lambda*nll + aux when a batch is
// given) w.r.t. every trainable parameter. Max pooling/aggregation route
// gradient only to the winning input per coordinate.
GradientSet backward(std::size_t true_class, const std::optional<PairBatch>& batch,
                     const ModelParams& params, const FusionConfig& config,
                     const ForwardCache& cache);

struct TensorCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_coord = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    std::string worst_tensor;
    bool pass = true;
};

// Compares analytic gradients against central finite differences at the
// given step. Dropout masks are frozen by reseeding the dropout stream with
// dropout_seed before every forward pass. At most max_coords coordinates per
// tensor are probed (deterministic stride).
// analytic_override substitutes the gradients under test (detector checks).
GradCheckReport grad_check(const ModelParams& params, const ModelInput& input,
                           std::size_t true_class,
                           const std::vector<std::vector<std::string>>& negative_tokens,
                           const Vocabulary& vocab, const FusionConfig& config, double step,
                           double tolerance, std::uint64_t dropout_seed = 42,
                           std::size_t max_coords = 200,
                           const GradientSet* analytic_override = nullptr);

} // namespace mmfuse
