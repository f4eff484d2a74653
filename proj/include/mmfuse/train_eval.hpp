#pragma once
// Per-sample SGD training with negative sampling and validation-based model
// selection, plus the evaluation protocol including missing-modality runs.

#include "mmfuse/data.hpp"
#include "mmfuse/fusion.hpp"
#include "mmfuse/losses.hpp"
#include "mmfuse/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mmfuse {

enum class ModalityFilter { Both, TextOnly, ImageOnly };

const char* to_string(ModalityFilter f);
ModalityFilter modality_filter_from_string(const std::string& s);

// Per-class indices of training posts that carry text.
struct NegativePool {
    std::vector<std::vector<std::size_t>> by_class;

    static NegativePool build(const Dataset& ds, const std::vector<std::size_t>& train_indices);
    std::size_t available_outside(std::size_t class_idx) const;
};

// g distinct posts with text whose class differs from the anchor's
std::vector<std::size_t> sample_negatives(SeededRng& rng, std::size_t anchor_class,
                                          const NegativePool& pool, std::size_t g);

// p -= lr * grad for every tensor; embedding rows are updated sparsely
void sgd_apply(ModelParams& params, const GradientSet& grads, double learning_rate,
               bool freeze_embeddings);

struct TrainOptions {
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    std::optional<std::string> embedding_path;
    std::size_t min_count = 1;
};

struct EpochStats {
    double mean_train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    Model model; // best-on-validation snapshot
    double best_val_accuracy = 0.0;
    double final_val_accuracy = 0.0;
    std::vector<EpochStats> history;
};

TrainResult train(const Dataset& ds, const DatasetSplit& split, FusionConfig config,
                  const TrainOptions& options);

MetricsReport evaluate(const Dataset& ds, const std::vector<std::size_t>& indices,
                       const Model& model, ModalityFilter filter);

} // namespace mmfuse
