#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mmfuse/errors.hpp"
#include "mmfuse/metrics.hpp"
#include "mmfuse/numkit.hpp"

#include <cstddef>
#include <vector>

using namespace mmfuse;

namespace {

// expand a confusion matrix [true][pred] into label vectors
void expand(const std::vector<std::vector<std::size_t>>& confusion,
            std::vector<std::size_t>& y_true, std::vector<std::size_t>& y_pred) {
    for (std::size_t t = 0; t < confusion.size(); ++t) {
        for (std::size_t p = 0; p < confusion[t].size(); ++p) {
            for (std::size_t k = 0; k < confusion[t][p]; ++k) {
                y_true.push_back(t);
                y_pred.push_back(p);
            }
        }
    }
}

} // namespace

TEST_CASE("perfect predictions") {
    const std::vector<std::size_t> y = {0, 1, 2, 1, 0, 2};
    const MetricsReport r = compute_metrics(y, y, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.f_macro == 1.0);
    CHECK(r.f_micro == 1.0);
    CHECK(r.total == 6);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(r.precision[c] == 1.0);
        CHECK(r.recall[c] == 1.0);
        CHECK(r.f1[c] == 1.0);
        CHECK(r.confusion[c][c] == 2);
    }
}

TEST_CASE("two-class confusion fixture") {
    // confusion [true][pred] = [[3,1],[2,4]]
    std::vector<std::size_t> y_true;
    std::vector<std::size_t> y_pred;
    expand({{3, 1}, {2, 4}}, y_true, y_pred);
    const MetricsReport r = compute_metrics(y_true, y_pred, 2);

    REQUIRE(r.confusion.size() == 2);
    CHECK(r.confusion[0] == std::vector<std::size_t>{3, 1});
    CHECK(r.confusion[1] == std::vector<std::size_t>{2, 4});
    CHECK(r.total == 10);
    CHECK(r.accuracy == doctest::Approx(0.7).epsilon(1e-9));

    // class 0: precision 3/5, recall 3/4, f1 = 2*0.6*0.75/1.35
    CHECK(r.precision[0] == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(r.recall[0] == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(r.f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    // class 1: precision 4/5, recall 4/6, f1 = 2*0.8*(2/3)/(0.8+2/3)
    CHECK(r.precision[1] == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(r.recall[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(r.f1[1] == doctest::Approx(8.0 / 11.0).epsilon(1e-9));

    CHECK(r.f_macro == doctest::Approx((2.0 / 3.0 + 8.0 / 11.0) / 2.0).epsilon(1e-9));
    CHECK(r.f_micro == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("micro F1 equals accuracy on random single-label fixtures") {
    SeededRng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t classes = 2 + rng.next_below(7);
        const std::size_t n = 5 + rng.next_below(60);
        std::vector<std::size_t> y_true(n), y_pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            y_true[i] = rng.next_below(classes);
            y_pred[i] = rng.next_below(classes);
        }
        const MetricsReport r = compute_metrics(y_true, y_pred, classes);
        CHECK(r.f_micro == doctest::Approx(r.accuracy).epsilon(1e-12));
        // row sums of the confusion matrix recover the true-class counts
        std::size_t sum = 0;
        for (const auto& row : r.confusion) {
            for (std::size_t v : row) sum += v;
        }
        CHECK(sum == n);
        for (std::size_t c = 0; c < classes; ++c) {
            CHECK(r.f1[c] >= 0.0);
            CHECK(r.f1[c] <= 1.0);
        }
    }
}

TEST_CASE("absent classes contribute zero F1 to the macro average") {
    // class 2 never appears as truth or prediction
    const std::vector<std::size_t> y_true = {0, 0, 1, 1};
    const std::vector<std::size_t> y_pred = {0, 0, 1, 1};
    const MetricsReport r = compute_metrics(y_true, y_pred, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.f1[2] == 0.0);
    CHECK(r.f_macro == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(r.f_micro == 1.0);
}

TEST_CASE("degenerate predictions keep precision well-defined") {
    // everything predicted class 0
    const std::vector<std::size_t> y_true = {0, 1, 1, 1};
    const std::vector<std::size_t> y_pred = {0, 0, 0, 0};
    const MetricsReport r = compute_metrics(y_true, y_pred, 2);
    CHECK(r.accuracy == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.precision[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.recall[0] == 1.0);
    CHECK(r.precision[1] == 0.0); // no predictions: defined as 0
    CHECK(r.recall[1] == 0.0);
    CHECK(r.f1[1] == 0.0);
}

TEST_CASE("input validation") {
    CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), ValidationError);   // length mismatch
    CHECK_THROWS_AS(compute_metrics({0, 2}, {0, 1}, 2), ValidationError); // label out of range
    CHECK_THROWS_AS(compute_metrics({0, 1}, {0, 2}, 2), ValidationError);
    CHECK_THROWS_AS(compute_metrics({}, {}, 2), ValidationError);        // empty evaluation
}

TEST_CASE("report serializers mention every class name") {
    std::vector<std::size_t> y_true;
    std::vector<std::size_t> y_pred;
    expand({{3, 1}, {2, 4}}, y_true, y_pred);
    const MetricsReport r = compute_metrics(y_true, y_pred, 2);
    const std::vector<std::string> names = {"joy", "fear"};
    for (const std::string& out : {metrics_to_json(r, names), metrics_to_table(r, names)}) {
        CHECK(out.find("joy") != std::string::npos);
        CHECK(out.find("fear") != std::string::npos);
    }
    // json output parses back with the headline numbers intact
    const std::string js = metrics_to_json(r, names);
    CHECK(js.find("accuracy") != std::string::npos);
    CHECK(js.find("f_macro") != std::string::npos);
    CHECK(js.find("f_micro") != std::string::npos);
}
