#pragma once
// Minimal dense numeric layer: vectors, row-major matrices, stable softmax,
// squared distance, and a deterministic cross-platform RNG. No broadcasting,
// no autodiff; gradients are derived by hand elsewhere.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace mmfuse {

struct DenseVector {
    std::vector<double> values;

    DenseVector() = default;
    explicit DenseVector(std::size_t dim, double fill = 0.0) : values(dim, fill) {}
    DenseVector(std::initializer_list<double> init) : values(init) {}

    std::size_t dim() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    double* data() { return values.data(); }
    const double* data() const { return values.data(); }

    bool operator==(const DenseVector&) const = default;
};

struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row-major

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double* row(std::size_t r) { return values.data() + r * cols; }
    const double* row(std::size_t r) const { return values.data() + r * cols; }

    static DenseMatrix identity(std::size_t n);

    bool operator==(const DenseMatrix&) const = default;
};

// xoshiro256** seeded through splitmix64. Identical seeds give identical
// sequences on every platform; substream() derives an independent stream
// so per-epoch randomness stays reproducible.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t next_u64();
    // uniform in [0, bound), bound > 0
    std::uint64_t next_below(std::uint64_t bound);
    // uniform in [lo, hi)
    double uniform(double lo, double hi);
    // standard normal (Box-Muller, one cached value)
    double normal();

    SeededRng substream(std::uint64_t label) const;
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// Wx + b
DenseVector affine(const DenseMatrix& w, const DenseVector& x, const DenseVector& b);

// exp(z - max z) / sum, guarded against overflow
DenseVector stable_softmax(const DenseVector& z);

// log of stable_softmax, computed without forming the softmax
DenseVector log_softmax(const DenseVector& z);

double log_sum_exp(const DenseVector& z);

double squared_distance(const DenseVector& a, const DenseVector& b);

// k distinct indices in [0, pool_size), deterministic given the rng state
std::vector<std::size_t> sample_distinct(SeededRng& rng, std::size_t pool_size, std::size_t k);

// smallest index attaining the maximum
std::size_t argmax(const DenseVector& v);

// W^T y, dim == W.cols
DenseVector matvec_transpose(const DenseMatrix& w, const DenseVector& y);

// A += alpha * y x^T (A.rows == y.dim, A.cols == x.dim)
void add_outer(DenseMatrix& a, const DenseVector& y, const DenseVector& x, double alpha = 1.0);

// y += alpha * x
void axpy(double alpha, const DenseVector& x, DenseVector& y);

bool all_finite(const DenseVector& v);
bool all_finite(const DenseMatrix& m);

} // namespace mmfuse
