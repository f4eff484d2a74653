#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mmfuse/data.hpp"
#include "mmfuse/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

using namespace mmfuse;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/mmfuse_data_") + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<Post> ranked_posts(std::size_t n) {
    std::vector<Post> posts;
    for (std::size_t i = 0; i < n; ++i) {
        Post p;
        p.id = "p" + std::to_string(i);
        p.label = i % 2 ? "pos" : "neg";
        p.sort_key = static_cast<long long>(i); // p(n-1) has the top key
        p.tokens = std::vector<std::string>{"tok"};
        posts.push_back(std::move(p));
    }
    return posts;
}

} // namespace

TEST_CASE("load_posts") {
    SUBCASE("happy path with first-appearance class order") {
        const std::string path = temp_path("posts_ok.jsonl");
        std::ofstream(path)
            << R"({"id":"a","label":"joy","sort_key":5,"text":"Nice Day"})" << "\n"
            << R"({"id":"b","label":"fear","sort_key":9,"feat_inline":[1.0,2.0]})" << "\n"
            << R"({"id":"c","label":"joy","sort_key":1,"text":"ok","feat_inline":[3.0,4.0]})"
            << "\n";
        const Dataset ds = load_posts(path, std::nullopt);
        REQUIRE(ds.posts.size() == 3);
        CHECK(ds.classes == std::vector<std::string>{"joy", "fear"});
        CHECK(ds.class_index("fear") == 1);
        CHECK(*ds.posts[0].tokens == std::vector<std::string>{"nice", "day"});
        CHECK_FALSE(ds.posts[0].has_image());
        CHECK(ds.posts[1].has_image());
        CHECK_FALSE(ds.posts[1].has_text());
        CHECK(ds.image_dim() == 2);
        const ModelInput in = ds.input_for(ds.posts[2]);
        CHECK(in.image->values == std::vector<double>{3.0, 4.0});
        std::remove(path.c_str());
    }
    SUBCASE("post with neither modality names the id") {
        const std::string path = temp_path("posts_empty.jsonl");
        std::ofstream(path) << R"({"id":"ghost","label":"joy","sort_key":0})" << "\n";
        CHECK_THROWS_WITH_AS(load_posts(path, std::nullopt), doctest::Contains("ghost"),
                             ValidationError);
        std::remove(path.c_str());
    }
    SUBCASE("duplicate id is rejected") {
        const std::string path = temp_path("posts_dup.jsonl");
        std::ofstream(path) << R"({"id":"x","label":"a","sort_key":0,"text":"hi"})" << "\n"
                            << R"({"id":"x","label":"b","sort_key":1,"text":"yo"})" << "\n";
        CHECK_THROWS_WITH_AS(load_posts(path, std::nullopt), doctest::Contains("x"),
                             ValidationError);
        std::remove(path.c_str());
    }
    SUBCASE("feature index beyond the feature file is a range error") {
        const std::string posts = temp_path("posts_range.jsonl");
        const std::string feats = temp_path("posts_range.mmf");
        FeatureStore store;
        store.append({1.0, 2.0});
        write_feature_file(feats, store);
        std::ofstream(posts) << R"({"id":"a","label":"l","sort_key":0,"feat":1})" << "\n";
        CHECK_THROWS_AS(load_posts(posts, feats), ValidationError);
        std::remove(posts.c_str());
        std::remove(feats.c_str());
    }
    SUBCASE("malformed json names the line") {
        const std::string path = temp_path("posts_bad.jsonl");
        std::ofstream(path) << R"({"id":"a","label":"l","sort_key":0,"text":"hi"})" << "\n"
                            << "{nonsense\n";
        CHECK_THROWS_WITH_AS(load_posts(path, std::nullopt), doctest::Contains("2"),
                             ValidationError);
        std::remove(path.c_str());
    }
}

TEST_CASE("posts round trip through write_posts/load_posts") {
    SeededRng rng(7);
    std::vector<Post> posts;
    for (int i = 0; i < 30; ++i) {
        Post p;
        p.id = "r" + std::to_string(i);
        p.label = "c" + std::to_string(rng.next_below(3));
        p.sort_key = static_cast<long long>(rng.next_below(1000));
        if (rng.uniform(0, 1) < 0.7) {
            p.tokens = std::vector<std::string>{"w" + std::to_string(rng.next_below(10)), "x"};
        }
        if (!p.has_text() || rng.uniform(0, 1) < 0.5) {
            DenseVector f(3);
            // f32-representable values survive the widening round trip exactly
            for (auto& v : f.values) v = static_cast<float>(rng.uniform(-2, 2));
            p.feature_inline = std::move(f);
        }
        posts.push_back(std::move(p));
    }
    const std::string path = temp_path("round.jsonl");
    write_posts(path, posts);
    const Dataset ds = load_posts(path, std::nullopt);
    REQUIRE(ds.posts.size() == posts.size());
    for (std::size_t i = 0; i < posts.size(); ++i) {
        CHECK(ds.posts[i].id == posts[i].id);
        CHECK(ds.posts[i].label == posts[i].label);
        CHECK(ds.posts[i].sort_key == posts[i].sort_key);
        CHECK(ds.posts[i].tokens == posts[i].tokens);
        if (posts[i].feature_inline) {
            CHECK(ds.posts[i].feature_inline->values == posts[i].feature_inline->values);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("make_splits") {
    SUBCASE("distinct keys: 10/10/80 with the largest keys in test") {
        const auto posts = ranked_posts(100);
        const DatasetSplit split = make_splits(posts);
        REQUIRE(split.test.size() == 10);
        REQUIRE(split.validation.size() == 10);
        REQUIRE(split.train.size() == 80);
        for (std::size_t idx : split.test) CHECK(posts[idx].sort_key >= 90);
        for (std::size_t idx : split.validation) {
            CHECK(posts[idx].sort_key >= 80);
            CHECK(posts[idx].sort_key < 90);
        }
    }
    SUBCASE("all keys equal: id order decides") {
        auto posts = ranked_posts(20);
        for (auto& p : posts) p.sort_key = 7;
        const DatasetSplit split = make_splits(posts);
        REQUIRE(split.test.size() == 2);
        // ids sort lexicographically: p0, p1, p10, p11, ...
        CHECK(posts[split.test[0]].id == "p0");
        CHECK(posts[split.test[1]].id == "p1");
    }
    SUBCASE("N=10 gives 1/1/8") {
        const auto posts = ranked_posts(10);
        const DatasetSplit split = make_splits(posts);
        CHECK(split.test.size() == 1);
        CHECK(split.validation.size() == 1);
        CHECK(split.train.size() == 8);
    }
    SUBCASE("too small errors") {
        CHECK_THROWS_AS(make_splits(ranked_posts(9)), ValidationError);
    }
    SUBCASE("splits partition the dataset") {
        const auto posts = ranked_posts(53);
        const DatasetSplit split = make_splits(posts);
        std::set<std::size_t> all;
        for (std::size_t i : split.test) all.insert(i);
        for (std::size_t i : split.validation) all.insert(i);
        for (std::size_t i : split.train) all.insert(i);
        CHECK(all.size() == split.test.size() + split.validation.size() + split.train.size());
        CHECK(all.size() == posts.size());
        CHECK(*all.rbegin() == posts.size() - 1);
    }
    SUBCASE("invariant under input permutation") {
        auto posts = ranked_posts(40);
        const DatasetSplit a = make_splits(posts);
        auto shuffled = posts;
        SeededRng rng(3);
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
        }
        const DatasetSplit b = make_splits(shuffled);
        auto ids_of = [](const std::vector<Post>& ps, const std::vector<std::size_t>& idx) {
            std::vector<std::string> ids;
            for (std::size_t i : idx) ids.push_back(ps[i].id);
            std::sort(ids.begin(), ids.end());
            return ids;
        };
        CHECK(ids_of(posts, a.test) == ids_of(shuffled, b.test));
        CHECK(ids_of(posts, a.validation) == ids_of(shuffled, b.validation));
        CHECK(ids_of(posts, a.train) == ids_of(shuffled, b.train));
    }
}

TEST_CASE("gen_synthetic") {
    SyntheticSpec spec;
    spec.per_class = 25; // smallest permitted; keeps the test fast

    SUBCASE("regenerates byte-identically from the same seed") {
        const std::string d1 = temp_path("synth_a");
        const std::string d2 = temp_path("synth_b");
        SeededRng r1(99), r2(99);
        const SyntheticFiles f1 = gen_synthetic(r1, spec, d1);
        const SyntheticFiles f2 = gen_synthetic(r2, spec, d2);
        CHECK(slurp(f1.posts_path) == slurp(f2.posts_path));
        CHECK(slurp(f1.features_path) == slurp(f2.features_path));
        CHECK(slurp(f1.manifest_path) == slurp(f2.manifest_path));
        std::filesystem::remove_all(d1);
        std::filesystem::remove_all(d2);
    }
    SUBCASE("balanced classes and loadable output") {
        const std::string dir = temp_path("synth_c");
        SeededRng rng(5);
        const SyntheticFiles files = gen_synthetic(rng, spec, dir);
        const Dataset ds = load_manifest(files.manifest_path);
        REQUIRE(ds.posts.size() == 100);
        REQUIRE(ds.classes.size() == 4);
        std::vector<int> counts(4, 0);
        for (const auto& p : ds.posts) {
            ++counts[ds.class_index(p.label)];
            CHECK(p.has_text());
            CHECK(p.has_image());
        }
        for (int c : counts) CHECK(c == 25);
        CHECK(ds.image_dim() == spec.n_image);
        std::filesystem::remove_all(dir);
    }
    SUBCASE("xor_fraction=1 never leaks the visual bit into text") {
        const std::string dir = temp_path("synth_d");
        SeededRng rng(6);
        const SyntheticFiles files = gen_synthetic(rng, spec, dir);
        const Dataset ds = load_manifest(files.manifest_path);
        for (const auto& p : ds.posts) {
            for (const auto& tok : *p.tokens) {
                CHECK(tok != "dim");
                CHECK(tok != "bright");
            }
        }
        std::filesystem::remove_all(dir);
    }
    SUBCASE("xor_fraction=0 always includes both hint tokens") {
        SyntheticSpec full = spec;
        full.xor_fraction = 0.0;
        const std::string dir = temp_path("synth_e");
        SeededRng rng(7);
        const SyntheticFiles files = gen_synthetic(rng, full, dir);
        const Dataset ds = load_manifest(files.manifest_path);
        for (const auto& p : ds.posts) {
            const bool hinted =
                std::any_of(p.tokens->begin(), p.tokens->end(),
                            [](const std::string& t) { return t == "dim" || t == "bright"; });
            CHECK(hinted);
        }
        std::filesystem::remove_all(dir);
    }
    SUBCASE("invalid parameters are config errors") {
        SeededRng rng(1);
        SyntheticSpec bad = spec;
        bad.classes = 3;
        CHECK_THROWS_AS(gen_synthetic(rng, bad, temp_path("synth_x")), ConfigError);
        bad = spec;
        bad.per_class = 10;
        CHECK_THROWS_AS(gen_synthetic(rng, bad, temp_path("synth_x")), ConfigError);
        bad = spec;
        bad.xor_fraction = 1.5;
        CHECK_THROWS_AS(gen_synthetic(rng, bad, temp_path("synth_x")), ConfigError);
    }
}

TEST_CASE("load_manifest resolves paths relative to the manifest") {
    const std::string dir = temp_path("manifest_rel");
    std::filesystem::create_directories(dir);
    {
        FeatureStore store;
        store.append({0.5, 1.5});
        write_feature_file(dir + "/f.mmf", store);
        std::ofstream(dir + "/p.jsonl")
            << R"({"id":"a","label":"l","sort_key":0,"feat":0})" << "\n";
        std::ofstream(dir + "/m.json")
            << R"({"posts":"p.jsonl","features":"f.mmf"})" << "\n";
    }
    const Dataset ds = load_manifest(dir + "/m.json");
    REQUIRE(ds.posts.size() == 1);
    CHECK(ds.input_for(ds.posts[0]).image->values == std::vector<double>{0.5, 1.5});
    std::filesystem::remove_all(dir);
}
