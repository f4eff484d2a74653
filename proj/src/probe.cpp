#include "mmfuse/probe.hpp"

#include <string>

namespace mmfuse {

ProbeFixture make_probe_fixture(FusionMode mode, const ProbeDims& dims, std::uint64_t seed) {
    ProbeFixture fx;
    fx.config.mode = mode;
    fx.config.pooling = dims.pooling;
    fx.config.aggregation = dims.aggregation;
    fx.config.d = dims.d;
    fx.config.h = dims.h;
    fx.config.g = dims.g;
    fx.config.image_dim = dims.image_dim;
    fx.config.class_count = dims.class_count;
    fx.config.dropout_p = dims.dropout_p;

    SeededRng master(seed);

    for (std::size_t i = 0; i < dims.vocab_size; ++i) fx.vocab.add("w" + std::to_string(i));

    EmbeddingTable emb;
    if (mode_uses_text(mode)) {
        SeededRng emb_rng = master.substream(1);
        emb = init_embeddings(fx.vocab, dims.d, emb_rng);
        // widen the init range so max aggregation has distinct winners
        for (auto& v : emb.e.values) v *= 10.0;
    }
    SeededRng init_rng = master.substream(2);
    fx.params = init_params(fx.config, std::move(emb), init_rng);

    SeededRng data_rng = master.substream(3);
    auto random_tokens = [&](std::size_t count) {
        std::vector<std::string> tokens;
        for (std::size_t i = 0; i < count; ++i) {
            tokens.push_back("w" + std::to_string(data_rng.next_below(dims.vocab_size)));
        }
        return tokens;
    };
    if (mode_uses_text(mode)) fx.input.tokens = random_tokens(3);
    if (mode_uses_image(mode)) {
        DenseVector img(dims.image_dim);
        for (auto& v : img.values) v = data_rng.normal();
        fx.input.image = std::move(img);
    }
    fx.label = data_rng.next_below(dims.class_count);
    if (mode == FusionMode::CommonSpace) {
        for (std::size_t j = 0; j < dims.g; ++j) {
            fx.negative_tokens.push_back(random_tokens(3));
        }
    }
    return fx;
}

} // namespace mmfuse
