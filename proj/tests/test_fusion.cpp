#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mmfuse/errors.hpp"
#include "mmfuse/fusion.hpp"
#include "mmfuse/probe.hpp"

#include <cmath>
#include <string>
#include <vector>

using namespace mmfuse;

namespace {

// tiny joint model: d=2, h=2, n=2, |Y|=2, every weight written out by hand
struct TinyFixture {
    FusionConfig config;
    Vocabulary vocab;
    ModelParams params;
};

TinyFixture make_tiny() {
    TinyFixture fx;
    fx.config.mode = FusionMode::Joint;
    fx.config.d = 2;
    fx.config.h = 2;
    fx.config.image_dim = 2;
    fx.config.class_count = 2;
    fx.config.dropout_p = 0.0;

    fx.vocab.add("a");
    fx.vocab.add("b");

    fx.params.embeddings.e = DenseMatrix(2, 2);
    fx.params.embeddings.e.at(0, 0) = 1.0;
    fx.params.embeddings.e.at(0, 1) = 0.0;
    fx.params.embeddings.e.at(1, 0) = 0.0;
    fx.params.embeddings.e.at(1, 1) = 2.0;

    fx.params.proj.w = DenseMatrix::identity(2);
    fx.params.proj.b = DenseVector{0.5, -0.5};

    fx.params.hidden_w = DenseMatrix(2, 2);
    fx.params.hidden_w.at(0, 0) = 1.0;
    fx.params.hidden_w.at(0, 1) = -1.0;
    fx.params.hidden_w.at(1, 0) = 0.5;
    fx.params.hidden_w.at(1, 1) = 0.5;
    fx.params.hidden_b = DenseVector{0.0, 1.0};

    fx.params.head_w = DenseMatrix(2, 2);
    fx.params.head_w.at(0, 0) = 2.0;
    fx.params.head_w.at(0, 1) = 0.0;
    fx.params.head_w.at(1, 0) = 0.0;
    fx.params.head_w.at(1, 1) = 1.0;
    fx.params.head_b = DenseVector{0.1, -0.1};
    return fx;
}

} // namespace

TEST_CASE("fuse") {
    FusionConfig joint;
    joint.mode = FusionMode::Joint;
    joint.d = 2;
    joint.class_count = 2;

    SUBCASE("joint max pooling") {
        const PostVector p = fuse(DenseVector{1.0, 3.0}, DenseVector{2.0, 2.0}, joint);
        CHECK(p.vec.values == std::vector<double>{2.0, 3.0});
        CHECK(p.provenance == Provenance::Both);
    }
    SUBCASE("joint avg pooling") {
        joint.pooling = Pooling::Avg;
        const PostVector p = fuse(DenseVector{1.0, 3.0}, DenseVector{2.0, 2.0}, joint);
        CHECK(p.vec.values == std::vector<double>{1.5, 2.5});
    }
    SUBCASE("singleton pooling passes through") {
        joint.pooling = Pooling::Avg;
        const PostVector p = fuse(DenseVector{4.0, 6.0}, std::nullopt, joint);
        CHECK(p.vec.values == std::vector<double>{4.0, 6.0});
        CHECK(p.provenance == Provenance::TextOnly);
        const PostVector q = fuse(std::nullopt, DenseVector{7.0, 8.0}, joint);
        CHECK(q.vec.values == std::vector<double>{7.0, 8.0});
        CHECK(q.provenance == Provenance::ImageOnly);
    }
    SUBCASE("pooling is commutative in its inputs") {
        SeededRng rng(5);
        for (Pooling p : {Pooling::Max, Pooling::Avg}) {
            joint.pooling = p;
            DenseVector a(2), b(2);
            for (auto& v : a.values) v = rng.uniform(-3, 3);
            for (auto& v : b.values) v = rng.uniform(-3, 3);
            CHECK(fuse(a, b, joint).vec.values == fuse(b, a, joint).vec.values);
        }
    }
    SUBCASE("early fusion concatenates image then text") {
        FusionConfig early;
        early.mode = FusionMode::Early;
        early.d = 2;
        early.image_dim = 3;
        early.class_count = 2;
        const PostVector p = fuse(DenseVector{4.0, 5.0}, DenseVector{1.0, 2.0, 3.0}, early);
        CHECK(p.vec.values == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0});
        CHECK(p.vec.dim() == 5);
    }
    SUBCASE("early fusion requires both modalities") {
        FusionConfig early;
        early.mode = FusionMode::Early;
        early.d = 2;
        early.image_dim = 3;
        early.class_count = 2;
        CHECK_THROWS_AS(fuse(DenseVector{1.0, 2.0}, std::nullopt, early), ValidationError);
        CHECK_THROWS_AS(fuse(std::nullopt, DenseVector{1.0, 2.0, 3.0}, early), ValidationError);
    }
    SUBCASE("both missing is an error") {
        CHECK_THROWS_AS(fuse(std::nullopt, std::nullopt, joint), ValidationError);
    }
    SUBCASE("dimension mismatch is an error") {
        CHECK_THROWS_AS(fuse(DenseVector{1.0, 2.0}, DenseVector{1.0, 2.0, 3.0}, joint),
                        ShapeError);
    }
}

TEST_CASE("forward") {
    const TinyFixture fx = make_tiny();

    SUBCASE("hand-propagated joint forward") {
        ModelInput input;
        input.tokens = std::vector<std::string>{"a", "b"};
        input.image = DenseVector{1.0, 1.0};
        const ForwardCache cache = forward(input, fx.params, fx.vocab, fx.config, false);
        // text max([1,0],[0,2]) = [1,2]; image proj = [1.5, 0.5]
        // pooled max = [1.5, 2]; hidden = [1.5-2, 0.75+1+1] = [-0.5, 2.75]
        // logits = [2*-0.5+0.1, 2.75-0.1] = [-0.9, 2.65]
        CHECK(cache.post.vec.values == std::vector<double>{1.5, 2.0});
        CHECK(cache.hidden_out[0] == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(cache.hidden_out[1] == doctest::Approx(2.75).epsilon(1e-12));
        CHECK(cache.logits[0] == doctest::Approx(-0.9).epsilon(1e-12));
        CHECK(cache.logits[1] == doctest::Approx(2.65).epsilon(1e-12));
        const double z = std::exp(-0.9) + std::exp(2.65);
        CHECK(cache.probs[0] == doctest::Approx(std::exp(-0.9) / z).epsilon(1e-12));
        CHECK(cache.probs[1] == doctest::Approx(std::exp(2.65) / z).epsilon(1e-12));
        CHECK(cache.pool_from_image == std::vector<std::uint8_t>{1, 0});
    }
    SUBCASE("zero weights give a uniform distribution") {
        TinyFixture zero = make_tiny();
        zero.params.head_w = DenseMatrix(2, 2);
        zero.params.head_b = DenseVector(2);
        ModelInput input;
        input.tokens = std::vector<std::string>{"a"};
        input.image = DenseVector{0.3, 0.7};
        const ForwardCache cache = forward(input, zero.params, zero.vocab, zero.config, false);
        CHECK(cache.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(cache.probs[1] == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("text_only mode ignores the image entirely") {
        FusionConfig cfg = fx.config;
        cfg.mode = FusionMode::TextOnly;
        ModelParams params = fx.params;
        params.proj = ProjectionParams{}; // not part of this mode
        ModelInput with_image;
        with_image.tokens = std::vector<std::string>{"a", "b"};
        with_image.image = DenseVector{100.0, -100.0};
        ModelInput without_image;
        without_image.tokens = with_image.tokens;
        const ForwardCache c1 = forward(with_image, params, fx.vocab, cfg, false);
        const ForwardCache c2 = forward(without_image, params, fx.vocab, cfg, false);
        CHECK(c1.probs.values == c2.probs.values);
    }
    SUBCASE("probabilities always normalize") {
        ModelInput input;
        input.tokens = std::vector<std::string>{"b"};
        input.image = DenseVector{-2.0, 4.0};
        const ForwardCache cache = forward(input, fx.params, fx.vocab, fx.config, false);
        double sum = 0.0;
        for (double p : cache.probs.values) sum += p;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    SUBCASE("eval forward is bit-identical across calls") {
        ModelInput input;
        input.tokens = std::vector<std::string>{"a", "b"};
        input.image = DenseVector{0.25, -1.5};
        const ForwardCache c1 = forward(input, fx.params, fx.vocab, fx.config, false);
        const ForwardCache c2 = forward(input, fx.params, fx.vocab, fx.config, false);
        CHECK(c1.probs.values == c2.probs.values);
        CHECK(c1.logits.values == c2.logits.values);
    }
    SUBCASE("missing required modality propagates") {
        ModelInput text_only;
        text_only.tokens = std::vector<std::string>{"a"};
        FusionConfig early = fx.config;
        early.mode = FusionMode::Early;
        CHECK_THROWS_AS(forward(text_only, fx.params, fx.vocab, early, false), ValidationError);
    }
    SUBCASE("shift invariance of predict") {
        ModelInput input;
        input.tokens = std::vector<std::string>{"a", "b"};
        input.image = DenseVector{1.0, 1.0};
        const std::size_t base = predict(input, fx.params, fx.vocab, fx.config);
        TinyFixture shifted = make_tiny();
        for (auto& v : shifted.params.head_b.values) v += 123.0;
        CHECK(predict(input, shifted.params, shifted.vocab, shifted.config) == base);
    }
}

TEST_CASE("late_fuse") {
    SUBCASE("hand product oracle") {
        const auto [scores, arg] = late_fuse({0.6, 0.4}, {0.3, 0.7});
        CHECK(scores[0] == doctest::Approx(0.18).epsilon(1e-15));
        CHECK(scores[1] == doctest::Approx(0.28).epsilon(1e-15));
        CHECK(arg == 1);
    }
    SUBCASE("uniform factor never changes the ordering") {
        const auto [scores, arg] = late_fuse({0.25, 0.25, 0.25, 0.25}, {0.1, 0.2, 0.4, 0.3});
        CHECK(arg == 2);
        (void)scores;
    }
    SUBCASE("agreement on a one-hot class") {
        const auto [scores, arg] = late_fuse({0.0, 0.0, 1.0}, {0.0, 0.0, 1.0});
        CHECK(arg == 2);
        (void)scores;
    }
    SUBCASE("tie breaks to the smallest index") {
        const auto [scores, arg] = late_fuse({0.5, 0.5}, {0.5, 0.5});
        CHECK(arg == 0);
        (void)scores;
    }
    SUBCASE("dim mismatch") {
        CHECK_THROWS_AS(late_fuse(DenseVector(2), DenseVector(3)), ShapeError);
    }
    SUBCASE("argmax equals brute force on random distributions") {
        SeededRng rng(31);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t k = 2 + rng.next_below(15);
            DenseVector a(k), b(k);
            double sa = 0, sb = 0;
            for (std::size_t i = 0; i < k; ++i) {
                a[i] = rng.uniform(0.0, 1.0) + 1e-9;
                b[i] = rng.uniform(0.0, 1.0) + 1e-9;
                sa += a[i];
                sb += b[i];
            }
            for (std::size_t i = 0; i < k; ++i) {
                a[i] /= sa;
                b[i] /= sb;
            }
            const auto [scores, arg] = late_fuse(a, b);
            std::size_t brute = 0;
            for (std::size_t i = 1; i < k; ++i) {
                if (a[i] * b[i] > a[brute] * b[brute]) brute = i;
            }
            CHECK(arg == brute);
            for (std::size_t i = 0; i < k; ++i) {
                CHECK(scores[i] == a[i] * b[i]);
            }
        }
    }
}

TEST_CASE("mode predicates and dimensions") {
    CHECK(mode_uses_text(FusionMode::TextOnly));
    CHECK_FALSE(mode_uses_text(FusionMode::ImageOnly));
    CHECK(mode_uses_image(FusionMode::CommonSpace));
    CHECK(mode_has_projection(FusionMode::Joint));
    CHECK_FALSE(mode_has_projection(FusionMode::Early));

    FusionConfig cfg;
    cfg.d = 5;
    cfg.image_dim = 7;
    cfg.class_count = 3;
    cfg.mode = FusionMode::Early;
    CHECK(post_vector_dim(cfg) == 12);
    cfg.mode = FusionMode::Joint;
    CHECK(post_vector_dim(cfg) == 5);
    cfg.mode = FusionMode::ImageOnly;
    CHECK(post_vector_dim(cfg) == 7);
}

TEST_CASE("config validation and enum round trips") {
    FusionConfig cfg;
    cfg.class_count = 2;
    CHECK_NOTHROW(cfg.validate());
    FusionConfig bad = cfg;
    bad.mode = FusionMode::CommonSpace;
    bad.g = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.class_count = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    for (FusionMode m : {FusionMode::TextOnly, FusionMode::ImageOnly, FusionMode::Early,
                         FusionMode::Late, FusionMode::Joint, FusionMode::CommonSpace}) {
        CHECK(fusion_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(fusion_mode_from_string("bogus"), ConfigError);
    CHECK(pooling_from_string("max") == Pooling::Max);
    CHECK(aggregation_from_string("avg") == Aggregation::Avg);
}

TEST_CASE("probe fixtures are deterministic and well-formed") {
    for (FusionMode m : {FusionMode::TextOnly, FusionMode::ImageOnly, FusionMode::Early,
                         FusionMode::Joint, FusionMode::CommonSpace}) {
        const ProbeFixture a = make_probe_fixture(m, {}, 17);
        const ProbeFixture b = make_probe_fixture(m, {}, 17);
        CHECK(a.label == b.label);
        if (mode_uses_text(m)) {
            REQUIRE(a.input.has_text());
            CHECK(*a.input.tokens == *b.input.tokens);
        }
        if (mode_uses_image(m)) {
            REQUIRE(a.input.has_image());
            CHECK(a.input.image->values == b.input.image->values);
        }
        // fixture must run through forward
        const ForwardCache cache = forward(a.input, a.params, a.vocab, a.config, false);
        CHECK(cache.probs.dim() == a.config.class_count);
    }
}
