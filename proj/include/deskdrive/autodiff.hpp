#pragma once

// Reverse-mode differentiation on a tape of recorded primitive ops.
// Var is a lightweight handle into the tape; ops on Var mirror the plain
// Tensor kernels in tensor.hpp and register their backward closures.

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deskdrive/tensor.hpp"

namespace deskdrive {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
    const Tensor& val() const;
};

class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<Tensor(const Tape&)> fwd;  // empty for leaves
        std::function<void(Tape&)> bwd;          // empty for leaves
    };

    Var leaf(Tensor v) {
        Node n;
        n.grad = Tensor(v.shape);
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    Var record(Tensor value, std::function<Tensor(const Tape&)> fwd,
               std::function<void(Tape&)> bwd) {
        Node n;
        n.grad = Tensor(value.shape);
        n.value = std::move(value);
        n.fwd = std::move(fwd);
        n.bwd = std::move(bwd);
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    const Tensor& val(std::size_t id) const { return nodes_[id].value; }
    Tensor& grad(std::size_t id) { return nodes_[id].grad; }
    const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    void zero_grad() {
        for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }

    // Reverse sweep from a scalar loss. Node ids are already topological
    // (creation order), so a single reverse pass suffices.
    void backward(Var loss) {
        require(loss.tape == this, "backward: var from another tape");
        require(nodes_[loss.id].value.numel() == 1, "backward requires a scalar loss");
        zero_grad();
        nodes_[loss.id].grad.data[0] = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            if (nodes_[i].bwd) nodes_[i].bwd(*this);
        }
    }

    // Re-run every recorded forward closure and compare bit-exactly against
    // the stored values.
    bool replay_matches() const {
        for (const Node& n : nodes_) {
            if (!n.fwd) continue;
            Tensor v = n.fwd(*this);
            if (v.shape != n.value.shape || v.data != n.value.data) return false;
        }
        return true;
    }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape->val(id); }

namespace detail {
inline void accum(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}
}  // namespace detail

// ---------------------------------------------------------------------------
// traced ops (same names as the plain kernels, overloaded on Var)

inline Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    Tensor v = matmul(a.val(), b.val());
    auto fwd = [a, b](const Tape& tp) { return matmul(tp.val(a.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, b, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        detail::accum(tp.grad(a.id), matmul(g, transpose2d(tp.val(b.id))));
        detail::accum(tp.grad(b.id), matmul(transpose2d(tp.val(a.id)), g));
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var transpose2d(Var a) {
    Tape& t = *a.tape;
    Tensor v = transpose2d(a.val());
    auto fwd = [a](const Tape& tp) { return transpose2d(tp.val(a.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, out_id](Tape& tp) { detail::accum(tp.grad(a.id), transpose2d(tp.grad(out_id))); };
    return t.record(std::move(v), fwd, bwd);
}

// y = W x + b for rank-1 x; the linear-layer workhorse
inline Tensor matvec(const Tensor& w, const Tensor& x, const Tensor& b) {
    require(w.rank() == 2 && x.rank() == 1 && b.rank() == 1, "matvec expects (o,i),(i),(o)");
    require(w.cols() == x.numel() && w.rows() == b.numel(),
            "matvec shape mismatch: " + shape_str(w.shape) + " x " + shape_str(x.shape));
    Tensor out = b;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double acc = 0.0;
        const double* row = &w.data[i * w.cols()];
        for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x.data[j];
        out.data[i] += acc;
    }
    return out;
}

inline Var matvec(Var w, Var x, Var b) {
    Tape& t = *w.tape;
    Tensor v = matvec(w.val(), x.val(), b.val());
    auto fwd = [w, x, b](const Tape& tp) { return matvec(tp.val(w.id), tp.val(x.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [w, x, b, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        const Tensor& wv = tp.val(w.id);
        const Tensor& xv = tp.val(x.id);
        Tensor& gw = tp.grad(w.id);
        Tensor& gx = tp.grad(x.id);
        for (std::size_t i = 0; i < wv.rows(); ++i) {
            const double gi = g.data[i];
            for (std::size_t j = 0; j < wv.cols(); ++j) {
                gw.data[i * wv.cols() + j] += gi * xv.data[j];
                gx.data[j] += gi * wv.data[i * wv.cols() + j];
            }
        }
        detail::accum(tp.grad(b.id), g);
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var add(Var a, Var b) {
    Tape& t = *a.tape;
    Tensor v = add(a.val(), b.val());
    auto fwd = [a, b](const Tape& tp) { return add(tp.val(a.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, b, out_id](Tape& tp) {
        detail::accum(tp.grad(a.id), tp.grad(out_id));
        detail::accum(tp.grad(b.id), tp.grad(out_id));
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var sub(Var a, Var b) {
    Tape& t = *a.tape;
    Tensor v = sub(a.val(), b.val());
    auto fwd = [a, b](const Tape& tp) { return sub(tp.val(a.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, b, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        detail::accum(tp.grad(a.id), g);
        Tensor& gb = tp.grad(b.id);
        for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] -= g.data[i];
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var mul(Var a, Var b) {
    Tape& t = *a.tape;
    Tensor v = mul(a.val(), b.val());
    auto fwd = [a, b](const Tape& tp) { return mul(tp.val(a.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, b, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        detail::accum(tp.grad(a.id), mul(g, tp.val(b.id)));
        detail::accum(tp.grad(b.id), mul(g, tp.val(a.id)));
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Tensor v = scale(a.val(), s);
    auto fwd = [a, s](const Tape& tp) { return scale(tp.val(a.id), s); };
    std::size_t out_id = t.size();
    auto bwd = [a, s, out_id](Tape& tp) {
        detail::accum(tp.grad(a.id), scale(tp.grad(out_id), s));
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var add_rowwise(Var a, Var bias) {
    Tape& t = *a.tape;
    Tensor v = add_rowwise(a.val(), bias.val());
    auto fwd = [a, bias](const Tape& tp) { return add_rowwise(tp.val(a.id), tp.val(bias.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, bias, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        detail::accum(tp.grad(a.id), g);
        Tensor& gb = tp.grad(bias.id);
        const std::size_t n = g.cols();
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
    };
    return t.record(std::move(v), fwd, bwd);
}

// add a fixed tensor (positional encodings, attention masks); no gradient
// flows into the constant
inline Var add_const(Var a, const Tensor& c) {
    Tape& t = *a.tape;
    Tensor v = add(a.val(), c);
    auto fwd = [a, c](const Tape& tp) { return add(tp.val(a.id), c); };
    std::size_t out_id = t.size();
    auto bwd = [a, out_id](Tape& tp) { detail::accum(tp.grad(a.id), tp.grad(out_id)); };
    return t.record(std::move(v), fwd, bwd);
}

inline Var activation(Var x, Activation kind) {
    Tape& t = *x.tape;
    Tensor v = activation(x.val(), kind);
    auto fwd = [x, kind](const Tape& tp) { return activation(tp.val(x.id), kind); };
    std::size_t out_id = t.size();
    auto bwd = [x, kind, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        const Tensor& y = tp.val(out_id);
        Tensor& gx = tp.grad(x.id);
        switch (kind) {
            case Activation::Tanh:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    gx.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
                break;
            case Activation::Sigmoid:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    gx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
                break;
            case Activation::Relu:
                for (std::size_t i = 0; i < g.numel(); ++i)
                    gx.data[i] += y.data[i] > 0.0 ? g.data[i] : 0.0;
                break;
        }
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var softmax(Var x, std::size_t axis) {
    Tape& t = *x.tape;
    Tensor v = softmax(x.val(), axis);
    auto fwd = [x, axis](const Tape& tp) { return softmax(tp.val(x.id), axis); };
    std::size_t out_id = t.size();
    auto bwd = [x, axis, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        const Tensor& s = tp.val(out_id);
        Tensor& gx = tp.grad(x.id);
        std::size_t inner = 1, outer = 1;
        const std::size_t n = s.shape[axis];
        for (std::size_t i = 0; i < axis; ++i) outer *= s.shape[i];
        for (std::size_t i = axis + 1; i < s.rank(); ++i) inner *= s.shape[i];
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    dot += g.data[base + i * inner] * s.data[base + i * inner];
                for (std::size_t i = 0; i < n; ++i)
                    gx.data[base + i * inner] +=
                        s.data[base + i * inner] * (g.data[base + i * inner] - dot);
            }
        }
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var softmax_keys(Var x) {
    Tape& t = *x.tape;
    Tensor v = softmax_keys(x.val());
    auto fwd = [x](const Tape& tp) { return softmax_keys(tp.val(x.id)); };
    std::size_t out_id = t.size();
    auto bwd = [x, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        const Tensor& s = tp.val(out_id);
        Tensor& gx = tp.grad(x.id);
        const std::size_t n = s.cols();
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g.at2(r, j) * s.at2(r, j);
            for (std::size_t j = 0; j < n; ++j)
                gx.data[r * n + j] += s.at2(r, j) * (g.at2(r, j) - dot);
        }
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var matmul_keys(Var a, Var b) {
    Tape& t = *a.tape;
    Tensor v = matmul_keys(a.val(), b.val());
    auto fwd = [a, b](const Tape& tp) { return matmul_keys(tp.val(a.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, b, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        detail::accum(tp.grad(a.id), matmul(g, transpose2d(tp.val(b.id))));
        detail::accum(tp.grad(b.id), matmul(transpose2d(tp.val(a.id)), g));
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var concat(Var a, Var b) {
    Tape& t = *a.tape;
    Tensor v = concat_rows(a.val(), b.val());
    auto fwd = [a, b](const Tape& tp) { return concat_rows(tp.val(a.id), tp.val(b.id)); };
    std::size_t out_id = t.size();
    auto bwd = [a, b, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        Tensor& ga = tp.grad(a.id);
        Tensor& gb = tp.grad(b.id);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g.data[i];
        for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += g.data[ga.numel() + i];
    };
    return t.record(std::move(v), fwd, bwd);
}

// concatenate rank-2 tensors along columns (multi-head reassembly)
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const Tensor& p : parts) {
        require(p.rank() == 2 && p.rows() == rows, "concat_cols row mismatch");
        cols += p.cols();
    }
    Tensor out({rows, cols});
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(p.data.begin() + static_cast<std::ptrdiff_t>(r * p.cols()),
                      p.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * p.cols()),
                      out.data.begin() + static_cast<std::ptrdiff_t>(r * cols + off));
        off += p.cols();
    }
    return out;
}

inline Var concat_cols(const std::vector<Var>& parts) {
    Tape& t = *parts[0].tape;
    std::vector<Tensor> vals;
    vals.reserve(parts.size());
    for (Var p : parts) vals.push_back(p.val());
    Tensor v = concat_cols(vals);
    auto fwd = [parts](const Tape& tp) {
        std::vector<Tensor> vs;
        vs.reserve(parts.size());
        for (Var p : parts) vs.push_back(tp.val(p.id));
        return concat_cols(vs);
    };
    std::size_t out_id = t.size();
    auto bwd = [parts, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        const std::size_t cols = g.cols();
        std::size_t off = 0;
        for (Var p : parts) {
            Tensor& gp = tp.grad(p.id);
            const std::size_t pc = gp.cols();
            for (std::size_t r = 0; r < gp.rows(); ++r)
                for (std::size_t c = 0; c < pc; ++c) gp.data[r * pc + c] += g.data[r * cols + off + c];
            off += pc;
        }
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var reshape(Var a, Shape s) {
    Tape& t = *a.tape;
    Tensor v = reshape(a.val(), s);
    auto fwd = [a, s](const Tape& tp) { return reshape(tp.val(a.id), s); };
    std::size_t out_id = t.size();
    auto bwd = [a, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        Tensor& ga = tp.grad(a.id);
        for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g.data[i];
    };
    return t.record(std::move(v), fwd, bwd);
}

// extract row r of a rank-2 tensor as a rank-1 vector
inline Tensor row(const Tensor& a, std::size_t r) {
    require(a.rank() == 2 && r < a.rows(), "row out of range");
    Tensor out({a.cols()});
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(r * a.cols()),
              a.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * a.cols()), out.data.begin());
    return out;
}

inline Var row(Var a, std::size_t r) {
    Tape& t = *a.tape;
    Tensor v = row(a.val(), r);
    auto fwd = [a, r](const Tape& tp) { return row(tp.val(a.id), r); };
    std::size_t out_id = t.size();
    auto bwd = [a, r, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        Tensor& ga = tp.grad(a.id);
        for (std::size_t j = 0; j < g.numel(); ++j) ga.data[r * g.numel() + j] += g.data[j];
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var sum_all(Var a) {
    Tape& t = *a.tape;
    Tensor v = Tensor::scalar(sum_all(a.val()));
    auto fwd = [a](const Tape& tp) { return Tensor::scalar(sum_all(tp.val(a.id))); };
    std::size_t out_id = t.size();
    auto bwd = [a, out_id](Tape& tp) {
        const double g = tp.grad(out_id).data[0];
        Tensor& ga = tp.grad(a.id);
        for (double& v2 : ga.data) v2 += g;
    };
    return t.record(std::move(v), fwd, bwd);
}

// sum_i |a_i - target_i|; the waypoint / box regression loss term
inline Var l1_to(Var a, const Tensor& target) {
    require(a.val().same_shape(target), "l1_to shape mismatch");
    Tape& t = *a.tape;
    double s = 0.0;
    for (std::size_t i = 0; i < target.numel(); ++i) s += std::abs(a.val().data[i] - target.data[i]);
    auto fwd = [a, target](const Tape& tp) {
        double s2 = 0.0;
        for (std::size_t i = 0; i < target.numel(); ++i)
            s2 += std::abs(tp.val(a.id).data[i] - target.data[i]);
        return Tensor::scalar(s2);
    };
    std::size_t out_id = t.size();
    auto bwd = [a, target, out_id](Tape& tp) {
        const double g = tp.grad(out_id).data[0];
        const Tensor& v = tp.val(a.id);
        Tensor& ga = tp.grad(a.id);
        for (std::size_t i = 0; i < target.numel(); ++i) {
            const double d = v.data[i] - target.data[i];
            ga.data[i] += g * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        }
    };
    return t.record(Tensor::scalar(s), fwd, bwd);
}

// weighted cross-entropy from logits against a class index
inline double ce_logits_value(const Tensor& logits, std::size_t target, double weight) {
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits.data) lse += std::exp(v - mx);
    return weight * (std::log(lse) + mx - logits.data[target]);
}

inline Var ce_logits(Var logits, std::size_t target, double weight) {
    require(logits.val().rank() == 1 && target < logits.val().numel(), "ce_logits bad target");
    Tape& t = *logits.tape;
    Tensor v = Tensor::scalar(ce_logits_value(logits.val(), target, weight));
    auto fwd = [logits, target, weight](const Tape& tp) {
        return Tensor::scalar(ce_logits_value(tp.val(logits.id), target, weight));
    };
    std::size_t out_id = t.size();
    auto bwd = [logits, target, weight, out_id](Tape& tp) {
        const double g = tp.grad(out_id).data[0] * weight;
        Tensor p = softmax(tp.val(logits.id), 0);
        Tensor& gl = tp.grad(logits.id);
        for (std::size_t i = 0; i < p.numel(); ++i)
            gl.data[i] += g * (p.data[i] - (i == target ? 1.0 : 0.0));
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
    Tape& t = *x.tape;
    Tensor v = conv2d(x.val(), w.val(), b.val(), stride, pad);
    auto fwd = [x, w, b, stride, pad](const Tape& tp) {
        return conv2d(tp.val(x.id), tp.val(w.id), tp.val(b.id), stride, pad);
    };
    std::size_t out_id = t.size();
    auto bwd = [x, w, b, stride, pad, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        const Tensor& xv = tp.val(x.id);
        const Tensor& wv = tp.val(w.id);
        Tensor& gx = tp.grad(x.id);
        Tensor& gw = tp.grad(w.id);
        Tensor& gb = tp.grad(b.id);
        const std::size_t cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
        const std::size_t cout = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
        const std::size_t oh = g.shape[1], ow = g.shape[2];
        for (std::size_t oc = 0; oc < cout; ++oc) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double gv = g.data[(oc * oh + oy) * ow + ox];
                    if (gv == 0.0) continue;
                    gb.data[oc] += gv;
                    for (std::size_t ic = 0; ic < cin; ++ic) {
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                                const std::size_t xi =
                                    (ic * h + static_cast<std::size_t>(iy)) * wd +
                                    static_cast<std::size_t>(ix);
                                const std::size_t wi = ((oc * cin + ic) * kh + ky) * kw + kx;
                                gw.data[wi] += gv * xv.data[xi];
                                gx.data[xi] += gv * wv.data[wi];
                            }
                        }
                    }
                }
            }
        }
    };
    return t.record(std::move(v), fwd, bwd);
}

inline Var global_avg_pool(Var x) {
    Tape& t = *x.tape;
    Tensor v = global_avg_pool(x.val());
    auto fwd = [x](const Tape& tp) { return global_avg_pool(tp.val(x.id)); };
    std::size_t out_id = t.size();
    auto bwd = [x, out_id](Tape& tp) {
        const Tensor& g = tp.grad(out_id);
        Tensor& gx = tp.grad(x.id);
        const std::size_t c = gx.shape[0], hw = gx.shape[1] * gx.shape[2];
        for (std::size_t i = 0; i < c; ++i) {
            const double gv = g.data[i] / static_cast<double>(hw);
            for (std::size_t j = 0; j < hw; ++j) gx.data[i * hw + j] += gv;
        }
    };
    return t.record(std::move(v), fwd, bwd);
}

}  // namespace deskdrive
