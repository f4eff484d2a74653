#pragma once
// Randomized tiny-model fixtures for gradient checking.

#include "mmfuse/fusion.hpp"

#include <vector>

namespace mmfuse {

struct ProbeDims {
    std::size_t d = 4;
    std::size_t h = 3;
    std::size_t image_dim = 6;
    std::size_t class_count = 3;
    std::size_t g = 2;
    std::size_t vocab_size = 10;
    double dropout_p = 0.25;
    Pooling pooling = Pooling::Max;
    Aggregation aggregation = Aggregation::Max;
};

struct ProbeFixture {
    FusionConfig config;
    Vocabulary vocab;
    ModelParams params;
    ModelInput input;
    std::size_t label = 0;
    std::vector<std::vector<std::string>> negative_tokens;
};

// random small model + post + negative texts, fully determined by the seed
ProbeFixture make_probe_fixture(FusionMode mode, const ProbeDims& dims, std::uint64_t seed);

} // namespace mmfuse
