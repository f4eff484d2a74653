#pragma once
// Modality encoders: text -> embedding lookup + aggregation, image ->
// precomputed CNN feature vectors plus a learned projection into text space.

#include "mmfuse/numkit.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmfuse {

enum class Aggregation { Avg, Max };

class Vocabulary {
public:
    Vocabulary() = default;

    std::size_t size() const { return tokens_.size(); }
    std::optional<std::size_t> lookup(const std::string& token) const;
    const std::string& token(std::size_t index) const { return tokens_[index]; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    // appends a token; index is the current size
    std::size_t add(const std::string& token);

private:
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> tokens_;
};

struct EmbeddingTable {
    DenseMatrix e; // |V| x d

    std::size_t vocab_size() const { return e.rows; }
    std::size_t dim() const { return e.cols; }
};

struct ProjectionParams {
    DenseMatrix w; // m x n, image feature space -> text space
    DenseVector b; // m
};

// Precomputed image feature vectors, stored as f32 and widened on access.
class FeatureStore {
public:
    FeatureStore() = default;
    FeatureStore(std::size_t dim, std::vector<float> data);

    std::size_t count() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    std::size_t dim() const { return dim_; }
    DenseVector get(std::size_t record) const;
    void append(const DenseVector& row);

private:
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

// `MMF1` binary: magic, u32 count, u32 dim, count*dim little-endian f32.
FeatureStore read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const FeatureStore& store);

struct DropoutSpec {
    bool train = false;
    double p = 0.0;
    SeededRng* rng = nullptr; // required when train && p > 0
};

// Everything backward needs about one text encoding.
struct TextEncoding {
    DenseVector vec;
    std::vector<std::size_t> rows;            // embedding row per in-vocab token
    std::vector<std::vector<double>> scales;  // dropout scale per token coordinate (empty in eval)
    std::vector<std::size_t> winners;         // max aggregation: winning token slot per coordinate
    Aggregation agg = Aggregation::Avg;
};

std::vector<std::string> default_tokenize(const std::string& text);

// lowercase token counting; order by descending count, ties lexicographic
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_count);

// GloVe text convention: token followed by d floats per line. Vocab tokens
// absent from the file are drawn from uniform(-0.05, 0.05).
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t d,
                               SeededRng& rng);

// all rows from uniform(-0.05, 0.05); used when no pretrained file is given
EmbeddingTable init_embeddings(const Vocabulary& vocab, std::size_t d, SeededRng& rng);

TextEncoding encode_text_detailed(const std::vector<std::string>& tokens,
                                  const EmbeddingTable& table, const Vocabulary& vocab,
                                  Aggregation agg, const DropoutSpec& dropout);

DenseVector encode_text(const std::vector<std::string>& tokens, const EmbeddingTable& table,
                        const Vocabulary& vocab, Aggregation agg, const DropoutSpec& dropout);

DenseVector project_image(const DenseVector& feature, const ProjectionParams& proj);

} // namespace mmfuse
