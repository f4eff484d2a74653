#include "mmfuse/numkit.hpp"

#include "mmfuse/errors.hpp"
#include "mmfuse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mmfuse {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

[[noreturn]] void shape_fail(const std::string& what) {
    throw ShapeError(what);
}

} // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

std::uint64_t SeededRng::next_below(std::uint64_t bound) {
    // rejection sampling keeps the draw unbiased and platform-independent
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

double SeededRng::uniform(double lo, double hi) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

double SeededRng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform(0.0, 1.0);
    } while (u1 <= 0.0);
    const double u2 = uniform(0.0, 1.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

SeededRng SeededRng::substream(std::uint64_t label) const {
    std::uint64_t sm = seed_ ^ (0x9e3779b97f4a7c15ULL + label * 0xd1b54a32d192ed03ULL);
    return SeededRng(splitmix64(sm));
}

DenseVector affine(const DenseMatrix& w, const DenseVector& x, const DenseVector& b) {
    if (w.cols != x.dim() || w.rows != b.dim()) {
        shape_fail("affine: W is " + std::to_string(w.rows) + "x" + std::to_string(w.cols) +
                   ", x has dim " + std::to_string(x.dim()) + ", b has dim " +
                   std::to_string(b.dim()));
    }
    const auto& ops = kernels::active();
    DenseVector out(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
        out[r] = ops.dot(w.row(r), x.data(), w.cols) + b[r];
    }
    return out;
}

DenseVector stable_softmax(const DenseVector& z) {
    if (z.dim() == 0) shape_fail("stable_softmax: empty input");
    const double m = *std::max_element(z.values.begin(), z.values.end());
    DenseVector out(z.dim());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.dim(); ++i) {
        out[i] = std::exp(z[i] - m);
        sum += out[i];
    }
    for (auto& v : out.values) v /= sum;
    return out;
}

DenseVector log_softmax(const DenseVector& z) {
    if (z.dim() == 0) shape_fail("log_softmax: empty input");
    const double lse = log_sum_exp(z);
    DenseVector out(z.dim());
    for (std::size_t i = 0; i < z.dim(); ++i) out[i] = z[i] - lse;
    return out;
}

double log_sum_exp(const DenseVector& z) {
    if (z.dim() == 0) shape_fail("log_sum_exp: empty input");
    const double m = *std::max_element(z.values.begin(), z.values.end());
    double sum = 0.0;
    for (double v : z.values) sum += std::exp(v - m);
    return m + std::log(sum);
}

double squared_distance(const DenseVector& a, const DenseVector& b) {
    if (a.dim() != b.dim()) {
        shape_fail("squared_distance: dims " + std::to_string(a.dim()) + " vs " +
                   std::to_string(b.dim()));
    }
    return kernels::active().sqdist(a.data(), b.data(), a.dim());
}

std::vector<std::size_t> sample_distinct(SeededRng& rng, std::size_t pool_size, std::size_t k) {
    if (k > pool_size) {
        throw CapacityError("sample_distinct: k=" + std::to_string(k) + " exceeds pool of " +
                            std::to_string(pool_size));
    }
    std::vector<std::size_t> pool(pool_size);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // partial Fisher-Yates: first k slots become the draw
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.next_below(pool_size - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

std::size_t argmax(const DenseVector& v) {
    if (v.dim() == 0) shape_fail("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.dim(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

DenseVector matvec_transpose(const DenseMatrix& w, const DenseVector& y) {
    if (w.rows != y.dim()) {
        shape_fail("matvec_transpose: W is " + std::to_string(w.rows) + "x" +
                   std::to_string(w.cols) + ", y has dim " + std::to_string(y.dim()));
    }
    const auto& ops = kernels::active();
    DenseVector out(w.cols);
    for (std::size_t r = 0; r < w.rows; ++r) {
        ops.axpy(y[r], w.row(r), out.data(), w.cols);
    }
    return out;
}

void add_outer(DenseMatrix& a, const DenseVector& y, const DenseVector& x, double alpha) {
    if (a.rows != y.dim() || a.cols != x.dim()) {
        shape_fail("add_outer: A is " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                   ", y has dim " + std::to_string(y.dim()) + ", x has dim " +
                   std::to_string(x.dim()));
    }
    const auto& ops = kernels::active();
    for (std::size_t r = 0; r < a.rows; ++r) {
        ops.axpy(alpha * y[r], x.data(), a.row(r), a.cols);
    }
}

void axpy(double alpha, const DenseVector& x, DenseVector& y) {
    if (x.dim() != y.dim()) {
        shape_fail("axpy: dims " + std::to_string(x.dim()) + " vs " + std::to_string(y.dim()));
    }
    kernels::active().axpy(alpha, x.data(), y.data(), x.dim());
}

bool all_finite(const DenseVector& v) {
    return std::all_of(v.values.begin(), v.values.end(),
                       [](double x) { return std::isfinite(x); });
}

bool all_finite(const DenseMatrix& m) {
    return std::all_of(m.values.begin(), m.values.end(),
                       [](double x) { return std::isfinite(x); });
}

} // namespace mmfuse
