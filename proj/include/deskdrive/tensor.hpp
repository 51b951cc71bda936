#pragma once

// Dense row-major f64 tensors and the plain (untraced) math kernels.
// Everything in the stack runs on these; the tape in autodiff.hpp wraps
// the same kernels when gradients are needed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace deskdrive {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Deterministic RNG. One instance per run; all draws go through here so a
// seed pins every random choice in the pipeline.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0,1) with 53 bits, independent of libstdc++ distribution details
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t bits() { return gen_(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(bits() % n); }
    double normal() {
        // Box-Muller, cached second value
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * 3.14159265358979323846 * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bits() % i]);
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// plain kernels

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
    require(a.cols() == b.rows(),
            "matmul shape mismatch: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &a.data[i * k];
        double* orow = &out.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b.data[p * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

inline Tensor transpose2d(const Tensor& a) {
    require(a.rank() == 2, "transpose expects rank-2");
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at2(j, i) = a.at2(i, j);
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "add shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "sub shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mul shape mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.data[i];
    return out;
}

inline Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

// bias broadcast over the rows of a rank-2 tensor
inline Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
    require(a.rank() == 2 && bias.rank() == 1, "add_rowwise expects (m,n) + (n)");
    require(a.cols() == bias.shape[0], "bias width mismatch");
    Tensor out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at2(i, j) += bias.data[j];
    return out;
}

enum class Activation { Tanh, Sigmoid, Relu };

inline double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Tensor activation(const Tensor& x, Activation kind) {
    Tensor out = x;
    switch (kind) {
        case Activation::Tanh:
            for (double& v : out.data) v = std::tanh(v);
            break;
        case Activation::Sigmoid:
            for (double& v : out.data) v = sigmoid_s(v);
            break;
        case Activation::Relu:
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            break;
    }
    return out;
}

// softmax along `axis` with max-subtraction
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    require(axis < x.rank(), "softmax axis out of range");
    Tensor out = x;
    std::size_t inner = 1, outer = 1;
    const std::size_t n = x.shape[axis];
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x.data[base + i * inner]);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double e = std::exp(x.data[base + i * inner] - mx);
                out.data[base + i * inner] = e;
                sum += e;
            }
            for (std::size_t i = 0; i < n; ++i) out.data[base + i * inner] /= sum;
        }
    }
    return out;
}

namespace detail {
// Sum in ascending-value order: the result is invariant to any permutation
// of the terms, which keeps attention exactly permutation-equivariant.
inline double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}
}  // namespace detail

// Row softmax whose normalizer is an order-canonical sum over the keys.
inline Tensor softmax_keys(const Tensor& x) {
    require(x.rank() == 2, "softmax_keys expects rank-2");
    const std::size_t rows = x.rows(), n = x.cols();
    Tensor out = x;
    std::vector<double> terms(n);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x.at2(r, j));
        for (std::size_t j = 0; j < n; ++j) {
            out.at2(r, j) = std::exp(x.at2(r, j) - mx);
            terms[j] = out.at2(r, j);
        }
        const double denom = detail::sorted_sum(terms);
        for (std::size_t j = 0; j < n; ++j) out.at2(r, j) /= denom;
    }
    return out;
}

// Matrix product with an order-canonical contraction; used where the
// contraction index runs over tokens.
inline Tensor matmul_keys(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
            "matmul_keys shape mismatch: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < k; ++p) terms[p] = a.at2(i, p) * b.at2(p, j);
            out.at2(i, j) = detail::sorted_sum(terms);
        }
    }
    return out;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require(a.rank() == 1 && b.rank() == 1, "concat_rows expects rank-1");
    Tensor out({a.numel() + b.numel()});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.numel()));
    return out;
}

inline Tensor concat(const Tensor& a, const Tensor& b) { return concat_rows(a, b); }

inline Tensor reshape(const Tensor& a, Shape s) {
    require(shape_numel(s) == a.numel(),
            "reshape numel mismatch: " + shape_str(a.shape) + " -> " + shape_str(s));
    Tensor out = a;
    out.shape = std::move(s);
    return out;
}

inline double sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    return s;
}

inline bool all_finite(const Tensor& a) {
    for (double v : a.data) if (!std::isfinite(v)) return false;
    return true;
}

// conv2d, channels-first (C,H,W), stride s, symmetric zero padding p.
// weight shape (Cout, Cin, kh, kw), bias (Cout).
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                     std::size_t stride, std::size_t pad) {
    require(x.rank() == 3 && w.rank() == 4, "conv2d expects (C,H,W) input and (O,C,kh,kw) weight");
    const std::size_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const std::size_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    require(w.shape[1] == cin, "conv2d channel mismatch");
    require(b.rank() == 1 && b.shape[0] == cout, "conv2d bias mismatch");
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor out({cout, oh, ow});
    for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = b.data[oc];
                for (std::size_t ic = 0; ic < cin; ++ic) {
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            acc += x.data[(ic * h + static_cast<std::size_t>(iy)) * wd +
                                          static_cast<std::size_t>(ix)] *
                                   w.data[((oc * cin + ic) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.data[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    return out;
}

// mean over the spatial dims of a (C,H,W) tensor -> (C)
inline Tensor global_avg_pool(const Tensor& x) {
    require(x.rank() == 3, "global_avg_pool expects (C,H,W)");
    const std::size_t c = x.shape[0], hw = x.shape[1] * x.shape[2];
    Tensor out({c});
    for (std::size_t i = 0; i < c; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < hw; ++j) s += x.data[i * hw + j];
        out.data[i] = s / static_cast<double>(hw);
    }
    return out;
}

}  // namespace deskdrive
