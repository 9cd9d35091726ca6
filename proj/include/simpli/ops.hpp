#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "simpli/gemm.hpp"
#include "simpli/parallel.hpp"
#include "simpli/tensor.hpp"

namespace simpli {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

enum class UnaryKind { relu, sigmoid, exp, negate, scale, abs, square };

struct UnaryFn {
    UnaryKind kind;
    double constant = 1.0;

    static UnaryFn relu() { return {UnaryKind::relu}; }
    static UnaryFn sigmoid() { return {UnaryKind::sigmoid}; }
    static UnaryFn exp() { return {UnaryKind::exp}; }
    static UnaryFn negate() { return {UnaryKind::negate}; }
    static UnaryFn scale(double c) { return {UnaryKind::scale, c}; }
    static UnaryFn abs() { return {UnaryKind::abs}; }
    static UnaryFn square() { return {UnaryKind::square}; }
};

/// Parses "relu", "sigmoid", "exp", "negate", "abs", "square"; scale needs a constant.
inline UnaryFn unary_from_name(std::string_view name, double constant = 1.0) {
    if (name == "relu") return UnaryFn::relu();
    if (name == "sigmoid") return UnaryFn::sigmoid();
    if (name == "exp") return UnaryFn::exp();
    if (name == "negate") return UnaryFn::negate();
    if (name == "scale") return UnaryFn::scale(constant);
    if (name == "abs") return UnaryFn::abs();
    if (name == "square") return UnaryFn::square();
    throw std::invalid_argument("unknown elementwise function '" + std::string(name) + "'");
}

template <std::floating_point T>
Tensor<T> apply_elementwise(const Tensor<T>& x, UnaryFn fn) {
    Tensor<T> out(x.shape());
    const T* xv = x.data();
    T* ov = out.data();
    const std::size_t n = x.numel();
    const T c = static_cast<T>(fn.constant);
    switch (fn.kind) {
        case UnaryKind::relu:
            for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
            break;
        case UnaryKind::sigmoid:
            for (std::size_t i = 0; i < n; ++i) {
                // split branches keep exp() from overflowing
                ov[i] = xv[i] >= T(0) ? T(1) / (T(1) + std::exp(-xv[i])) : std::exp(xv[i]) / (T(1) + std::exp(xv[i]));
            }
            break;
        case UnaryKind::exp:
            for (std::size_t i = 0; i < n; ++i) ov[i] = std::exp(xv[i]);
            break;
        case UnaryKind::negate:
            for (std::size_t i = 0; i < n; ++i) ov[i] = -xv[i];
            break;
        case UnaryKind::scale:
            for (std::size_t i = 0; i < n; ++i) ov[i] = c * xv[i];
            break;
        case UnaryKind::abs:
            for (std::size_t i = 0; i < n; ++i) ov[i] = std::abs(xv[i]);
            break;
        case UnaryKind::square:
            for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] * xv[i];
            break;
        default:
            throw std::invalid_argument("unknown elementwise function id");
    }
    detail::check_finite(out, "apply_elementwise");
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out, fn, c]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto& gx = x.grad_buffer();
            const T* xv = x.data();
            const T* ov = out.data();
            const std::size_t n = g.size();
            switch (fn.kind) {
                case UnaryKind::relu:
                    for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > T(0) ? g[i] : T(0);
                    break;
                case UnaryKind::sigmoid:
                    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * ov[i] * (T(1) - ov[i]);
                    break;
                case UnaryKind::exp:
                    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * ov[i];
                    break;
                case UnaryKind::negate:
                    for (std::size_t i = 0; i < n; ++i) gx[i] -= g[i];
                    break;
                case UnaryKind::scale:
                    for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
                    break;
                case UnaryKind::abs:
                    for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > T(0) ? g[i] : (xv[i] < T(0) ? -g[i] : T(0));
                    break;
                case UnaryKind::square:
                    for (std::size_t i = 0; i < n; ++i) gx[i] += T(2) * xv[i] * g[i];
                    break;
            }
        });
    }
    return out;
}

template <std::floating_point T> Tensor<T> relu(const Tensor<T>& x) { return apply_elementwise(x, UnaryFn::relu()); }
template <std::floating_point T> Tensor<T> sigmoid(const Tensor<T>& x) { return apply_elementwise(x, UnaryFn::sigmoid()); }
template <std::floating_point T> Tensor<T> exp(const Tensor<T>& x) { return apply_elementwise(x, UnaryFn::exp()); }
template <std::floating_point T> Tensor<T> negate(const Tensor<T>& x) { return apply_elementwise(x, UnaryFn::negate()); }
template <std::floating_point T> Tensor<T> scale(const Tensor<T>& x, double c) { return apply_elementwise(x, UnaryFn::scale(c)); }
template <std::floating_point T> Tensor<T> abs(const Tensor<T>& x) { return apply_elementwise(x, UnaryFn::abs()); }
template <std::floating_point T> Tensor<T> square(const Tensor<T>& x) { return apply_elementwise(x, UnaryFn::square()); }

// ---------------------------------------------------------------------------
// Broadcast binary ops
// ---------------------------------------------------------------------------

enum class BinaryKind { add, sub, mul, div };

namespace detail {

/// Trailing-axis broadcast. Index maps are empty when the operand already has
/// the output shape.
struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> ia;
    std::vector<std::size_t> ib;
    std::size_t period_a = 0, period_b = 0;  ///< nonzero: operand tiles the output, index = i % period

    std::size_t a_index(std::size_t i) const { return period_a ? i % period_a : (ia.empty() ? i : ia[i]); }
    std::size_t b_index(std::size_t i) const { return period_b ? i % period_b : (ib.empty() ? i : ib[i]); }

    /// Calls fn(i, index_a, index_b) for every output element, in order.
    template <typename Fn>
    void visit(std::size_t n, Fn&& fn) const {
        const bool a_same = ia.empty() && !period_a, b_same = ib.empty() && !period_b;
        if (a_same && period_b) {
            for (std::size_t base = 0; base < n; base += period_b)
                for (std::size_t j = 0; j < period_b; ++j) fn(base + j, base + j, j);
        } else if (b_same && period_a) {
            for (std::size_t base = 0; base < n; base += period_a)
                for (std::size_t j = 0; j < period_a; ++j) fn(base + j, j, base + j);
        } else {
            for (std::size_t i = 0; i < n; ++i) fn(i, a_index(i), b_index(i));
        }
    }
};

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
        out[i] = da == 1 ? db : da;
    }
    return out;
}

/// Flat index into `src` for each element of `out` under broadcasting.
inline std::vector<std::size_t> broadcast_index(const Shape& src, const Shape& out) {
    const std::size_t r = out.size();
    const std::size_t off = r - src.size();
    std::vector<std::size_t> stride(r, 0);
    std::size_t s = 1;
    for (std::size_t i = src.size(); i-- > 0;) {
        stride[i + off] = src[i] == 1 ? 0 : s;
        s *= src[i];
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> idx(n);
    std::vector<std::size_t> counter(r, 0);
    std::size_t cur = 0;
    for (std::size_t f = 0; f < n; ++f) {
        idx[f] = cur;
        for (std::size_t ax = r; ax-- > 0;) {
            ++counter[ax];
            cur += stride[ax];
            if (counter[ax] < out[ax]) break;
            cur -= stride[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    return idx;
}

/// True when `src` (leading unit axes ignored) equals the trailing axes of `out`.
inline bool tiles_output(const Shape& src, const Shape& out) {
    std::size_t lead = 0;
    while (lead < src.size() && src[lead] == 1) ++lead;
    const std::size_t r = src.size() - lead;
    if (r > out.size()) return false;
    return std::equal(src.begin() + static_cast<std::ptrdiff_t>(lead), src.end(), out.end() - static_cast<std::ptrdiff_t>(r));
}

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan p;
    p.out = broadcast_shape(a, b);
    if (a != p.out) {
        if (tiles_output(a, p.out)) p.period_a = shape_numel(a);
        else p.ia = broadcast_index(a, p.out);
    }
    if (b != p.out) {
        if (tiles_output(b, p.out)) p.period_b = shape_numel(b);
        else p.ib = broadcast_index(b, p.out);
    }
    return p;
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> combine_elementwise(const Tensor<T>& a, const Tensor<T>& b, BinaryKind op) {
    auto plan = std::make_shared<detail::BroadcastPlan>(detail::plan_broadcast(a.shape(), b.shape()));
    Tensor<T> out(plan->out);
    const std::size_t n = out.numel();
    const T* av = a.data();
    const T* bv = b.data();
    T* ov = out.data();
    const bool same = plan->ia.empty() && plan->ib.empty() && !plan->period_a && !plan->period_b;
    auto run = [&](auto f) {
        if (same) {
#pragma omp simd
            for (std::size_t i = 0; i < n; ++i) ov[i] = f(av[i], bv[i]);
        } else {
            plan->visit(n, [&](std::size_t i, std::size_t ja, std::size_t jb) { ov[i] = f(av[ja], bv[jb]); });
        }
    };
    switch (op) {
        case BinaryKind::add: run([](T x, T y) { return x + y; }); break;
        case BinaryKind::sub: run([](T x, T y) { return x - y; }); break;
        case BinaryKind::mul: run([](T x, T y) { return x * y; }); break;
        case BinaryKind::div: run([](T x, T y) { return x / y; }); break;
        default: throw std::invalid_argument("unknown binary op id");
    }
    detail::check_finite(out, "combine_elementwise");
    if (detail::any_requires_grad<T>({&a, &b})) {
        detail::record(out, [a, b, out, plan, op, same]() mutable {
            if (!out.has_grad()) return;
            auto g = out.grad();
            const std::size_t n = g.size();
            const T* av = a.data();
            const T* bv = b.data();
            if (a.requires_grad()) {
                T* ga = a.grad_buffer().data();
                if (same && (op == BinaryKind::add || op == BinaryKind::sub)) {
#pragma omp simd
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                } else {
                    plan->visit(n, [&](std::size_t i, std::size_t ja, std::size_t jb) {
                        switch (op) {
                            case BinaryKind::add:
                            case BinaryKind::sub: ga[ja] += g[i]; break;
                            case BinaryKind::mul: ga[ja] += g[i] * bv[jb]; break;
                            default: ga[ja] += g[i] / bv[jb]; break;
                        }
                    });
                }
            }
            if (b.requires_grad()) {
                T* gb = b.grad_buffer().data();
                if (same && op == BinaryKind::add) {
#pragma omp simd
                    for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
                } else {
                    plan->visit(n, [&](std::size_t i, std::size_t ja, std::size_t jb) {
                        switch (op) {
                            case BinaryKind::add: gb[jb] += g[i]; break;
                            case BinaryKind::sub: gb[jb] -= g[i]; break;
                            case BinaryKind::mul: gb[jb] += g[i] * av[ja]; break;
                            default: gb[jb] -= g[i] * av[ja] / (bv[jb] * bv[jb]); break;
                        }
                    });
                }
            }
        });
    }
    return out;
}

template <std::floating_point T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return combine_elementwise(a, b, BinaryKind::add); }
template <std::floating_point T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return combine_elementwise(a, b, BinaryKind::sub); }
template <std::floating_point T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return combine_elementwise(a, b, BinaryKind::mul); }
template <std::floating_point T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return combine_elementwise(a, b, BinaryKind::div); }

// ---------------------------------------------------------------------------
// Matmul
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands need rank >= 2");
    const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
    const std::size_t kb = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (k != kb) throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    Shape batch = detail::broadcast_shape(batch_a, batch_b);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<T> out(out_shape);

    // b without batch axes: one GEMM over all rows of a.
    if (batch_b.empty()) {
        const std::size_t rows = a.numel() / k;
        detail::gemm_nn(rows, n, k, a.data(), b.data(), out.data());
        detail::check_finite(out, "matmul");
        if (detail::any_requires_grad<T>({&a, &b})) {
            detail::record(out, [a, b, out, rows, n, k]() mutable {
                if (!out.has_grad()) return;
                const T* g = out.grad().data();
                if (a.requires_grad()) detail::gemm_nt(rows, k, n, g, b.data(), a.grad_buffer().data());
                if (b.requires_grad()) detail::gemm_tn(k, n, rows, a.data(), g, b.grad_buffer().data());
            });
        }
        return out;
    }

    const std::size_t nb = shape_numel(batch);
    auto ia = std::make_shared<std::vector<std::size_t>>(batch_a == batch ? std::vector<std::size_t>{} : detail::broadcast_index(batch_a, batch));
    auto ib = std::make_shared<std::vector<std::size_t>>(batch_b == batch ? std::vector<std::size_t>{} : detail::broadcast_index(batch_b, batch));
    auto oa = [ia](std::size_t i) { return ia->empty() ? i : (*ia)[i]; };
    auto ob = [ib](std::size_t i) { return ib->empty() ? i : (*ib)[i]; };
    for (std::size_t i = 0; i < nb; ++i)
        detail::gemm_nn(m, n, k, a.data() + oa(i) * m * k, b.data() + ob(i) * k * n, out.data() + i * m * n);
    detail::check_finite(out, "matmul");
    if (detail::any_requires_grad<T>({&a, &b})) {
        detail::record(out, [a, b, out, nb, m, n, k, oa, ob]() mutable {
            if (!out.has_grad()) return;
            const T* g = out.grad().data();
            if (a.requires_grad()) {
                T* ga = a.grad_buffer().data();
                for (std::size_t i = 0; i < nb; ++i)
                    detail::gemm_nt(m, k, n, g + i * m * n, b.data() + ob(i) * k * n, ga + oa(i) * m * k);
            }
            if (b.requires_grad()) {
                T* gb = b.grad_buffer().data();
                for (std::size_t i = 0; i < nb; ++i)
                    detail::gemm_tn(k, n, m, a.data() + oa(i) * m * k, g + i * m * n, gb + ob(i) * k * n);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor<T> out(std::move(shape), x.storage());
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto& gx = x.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

/// out.shape[i] = x.shape[axes[i]]
template <std::floating_point T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    const std::size_t r = x.rank();
    if (axes.size() != r) throw ShapeError("permute: axis count mismatch");
    std::vector<bool> seen(r, false);
    for (auto ax : axes) {
        if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axes");
        seen[ax] = true;
    }
    Shape out_shape(r);
    std::vector<std::size_t> in_stride(r);
    std::size_t s = 1;
    for (std::size_t i = r; i-- > 0;) {
        in_stride[i] = s;
        s *= x.dim(i);
    }
    std::vector<std::size_t> stride(r);
    for (std::size_t i = 0; i < r; ++i) {
        out_shape[i] = x.dim(axes[i]);
        stride[i] = in_stride[axes[i]];
    }
    Tensor<T> out(out_shape);
    auto src_index = std::make_shared<std::vector<std::size_t>>(out.numel());
    {
        std::vector<std::size_t> counter(r, 0);
        std::size_t cur = 0;
        for (std::size_t f = 0; f < out.numel(); ++f) {
            (*src_index)[f] = cur;
            for (std::size_t ax = r; ax-- > 0;) {
                ++counter[ax];
                cur += stride[ax];
                if (counter[ax] < out_shape[ax]) break;
                cur -= stride[ax] * counter[ax];
                counter[ax] = 0;
            }
        }
    }
    const T* xv = x.data();
    T* ov = out.data();
    for (std::size_t f = 0; f < out.numel(); ++f) ov[f] = xv[(*src_index)[f]];
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out, src_index]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto& gx = x.grad_buffer();
            for (std::size_t f = 0; f < g.size(); ++f) gx[(*src_index)[f]] += g[f];
        });
    }
    return out;
}

template <std::floating_point T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < s0.size(); ++i)
            if (i != axis && p.dim(i) != s0[i]) throw ShapeError("concat: extent mismatch on axis " + std::to_string(i));
        total += p.dim(axis);
    }
    Shape out_shape = s0;
    out_shape[axis] = total;
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t block = p.dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(p.data() + o * block, block, out.data() + o * total * inner + off * inner);
        off += p.dim(axis);
    }
    bool any = false;
    for (const auto& p : parts) any = any || detail::any_requires_grad<T>({&p});
    if (any) {
        detail::record(out, [parts, out, offsets, outer, inner, total, axis]() mutable {
            if (!out.has_grad()) return;
            const T* g = out.grad().data();
            for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                auto& p = parts[pi];
                if (!p.requires_grad()) continue;
                auto& gp = p.grad_buffer();
                const std::size_t block = p.dim(axis) * inner;
                for (std::size_t o = 0; o < outer; ++o) {
                    const T* src = g + o * total * inner + offsets[pi] * inner;
                    T* dst = gp.data() + o * block;
                    for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

/// Half-open [begin, end) along `axis`.
template <std::floating_point T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= x.rank() || begin > end || end > x.dim(axis)) throw ShapeError("slice: bad range");
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    Tensor<T> out(out_shape);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t full = x.dim(axis) * inner;
    const std::size_t block = (end - begin) * inner;
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(x.data() + o * full + begin * inner, block, out.data() + o * block);
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out, outer, inner, full, block, begin]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const T* g = out.grad().data();
            auto& gx = x.grad_buffer();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < block; ++i) gx[o * full + begin * inner + i] += g[o * block + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.values()) s += v;
    Tensor<T> out = Tensor<T>::scalar(s);
    detail::check_finite(out, "sum");
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const T g = out.grad()[0];
            for (auto& v : x.grad_buffer()) v += g;
        });
    }
    return out;
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), 1.0 / static_cast<double>(std::max<std::size_t>(1, x.numel())));
}

namespace detail {
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};
inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisSplit a;
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    a.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}
inline Shape drop_axis(Shape s, std::size_t axis) {
    s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
    return s;
}
}  // namespace detail

/// Sums out `axis` (the axis is removed).
template <std::floating_point T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis) {
    auto sp = detail::split_axis(x.shape(), axis);
    Tensor<T> out(detail::drop_axis(x.shape(), axis));
    const T* xv = x.data();
    T* ov = out.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t e = 0; e < sp.extent; ++e)
            for (std::size_t i = 0; i < sp.inner; ++i) ov[o * sp.inner + i] += xv[(o * sp.extent + e) * sp.inner + i];
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out, sp]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto& gx = x.grad_buffer();
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t e = 0; e < sp.extent; ++e)
                    for (std::size_t i = 0; i < sp.inner; ++i) gx[(o * sp.extent + e) * sp.inner + i] += g[o * sp.inner + i];
        });
    }
    return out;
}

/// Max-subtracted softmax along `axis`.
template <std::floating_point T>
Tensor<T> softmax_axis(const Tensor<T>& x, std::size_t axis) {
    auto sp = detail::split_axis(x.shape(), axis);
    Tensor<T> out(x.shape());
    const T* xv = x.data();
    T* ov = out.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t e = 0; e < sp.extent; ++e) mx = std::max(mx, xv[base + e * sp.inner]);
            T s = T(0);
            for (std::size_t e = 0; e < sp.extent; ++e) {
                T v = std::exp(xv[base + e * sp.inner] - mx);
                ov[base + e * sp.inner] = v;
                s += v;
            }
            for (std::size_t e = 0; e < sp.extent; ++e) ov[base + e * sp.inner] /= s;
        }
    }
    detail::check_finite(out, "softmax_axis");
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(out, [x, out, sp]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            auto g = out.grad();
            auto& gx = x.grad_buffer();
            const T* y = out.data();
            for (std::size_t o = 0; o < sp.outer; ++o) {
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    const std::size_t base = o * sp.extent * sp.inner + i;
                    T dot = T(0);
                    for (std::size_t e = 0; e < sp.extent; ++e) dot += g[base + e * sp.inner] * y[base + e * sp.inner];
                    for (std::size_t e = 0; e < sp.extent; ++e) {
                        const std::size_t j = base + e * sp.inner;
                        gx[j] += y[j] * (g[j] - dot);
                    }
                }
            }
        });
    }
    return out;
}

/// Mean and biased variance along `axis` (axis removed from both results).
template <std::floating_point T>
std::pair<Tensor<T>, Tensor<T>> reduce_stats(const Tensor<T>& x, std::size_t axis) {
    auto sp = detail::split_axis(x.shape(), axis);
    if (sp.extent == 0) throw ShapeError("reduce_stats: empty axis");
    Shape rs = detail::drop_axis(x.shape(), axis);
    Tensor<T> mu(rs), var(rs);
    const T* xv = x.data();
    const T inv_n = T(1) / static_cast<T>(sp.extent);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            T s = T(0);
            for (std::size_t e = 0; e < sp.extent; ++e) s += xv[base + e * sp.inner];
            const T m = s * inv_n;
            T q = T(0);
            for (std::size_t e = 0; e < sp.extent; ++e) {
                const T d = xv[base + e * sp.inner] - m;
                q += d * d;
            }
            mu[o * sp.inner + i] = m;
            var[o * sp.inner + i] = q * inv_n;
        }
    }
    detail::check_finite(var, "reduce_stats");
    if (detail::any_requires_grad<T>({&x})) {
        detail::record(mu, [x, mu, sp, inv_n]() mutable {
            if (!mu.has_grad() || !x.requires_grad()) return;
            auto g = mu.grad();
            auto& gx = x.grad_buffer();
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t e = 0; e < sp.extent; ++e)
                    for (std::size_t i = 0; i < sp.inner; ++i) gx[(o * sp.extent + e) * sp.inner + i] += g[o * sp.inner + i] * inv_n;
        });
        detail::record(var, [x, mu, var, sp, inv_n]() mutable {
            if (!var.has_grad() || !x.requires_grad()) return;
            auto g = var.grad();
            auto& gx = x.grad_buffer();
            const T* xv = x.data();
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t e = 0; e < sp.extent; ++e)
                    for (std::size_t i = 0; i < sp.inner; ++i) {
                        const std::size_t j = (o * sp.extent + e) * sp.inner + i;
                        gx[j] += g[o * sp.inner + i] * T(2) * inv_n * (xv[j] - mu[o * sp.inner + i]);
                    }
        });
    }
    return {mu, var};
}

// ---------------------------------------------------------------------------
// Convolution ("same" padding, stride 1)
// ---------------------------------------------------------------------------

namespace detail {

struct ConvGeom {
    std::size_t batch, cin, cout, d, h, w, kd, kh, kw;
    std::size_t spatial() const { return d * h * w; }
    std::size_t patch() const { return cin * kd * kh * kw; }
};

/// Valid output range [lo, hi) along an axis of extent n for tap offset o.
inline std::pair<std::size_t, std::size_t> tap_range(std::size_t n, long o) {
    const long lo = std::max(0L, -o), hi = std::min(static_cast<long>(n), static_cast<long>(n) - o);
    return lo < hi ? std::pair{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)} : std::pair{std::size_t{0}, std::size_t{0}};
}

template <typename T>
void im2col(const ConvGeom& g, const T* x, T* cols) {
    const long pd = static_cast<long>(g.kd / 2), ph = static_cast<long>(g.kh / 2), pw = static_cast<long>(g.kw / 2);
    const std::size_t sp = g.spatial();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t a = 0; a < g.kd; ++a)
            for (std::size_t b = 0; b < g.kh; ++b)
                for (std::size_t e = 0; e < g.kw; ++e, ++row) {
                    T* dst = cols + row * sp;
                    const long oz = static_cast<long>(a) - pd, oy = static_cast<long>(b) - ph, ox = static_cast<long>(e) - pw;
                    const auto [x0, x1] = tap_range(g.w, ox);
                    for (std::size_t z = 0; z < g.d; ++z) {
                        const long sz = static_cast<long>(z) + oz;
                        for (std::size_t y = 0; y < g.h; ++y) {
                            const long sy = static_cast<long>(y) + oy;
                            T* drow = dst + (z * g.h + y) * g.w;
                            if (sz < 0 || sz >= static_cast<long>(g.d) || sy < 0 || sy >= static_cast<long>(g.h) || x0 == x1) {
                                std::fill_n(drow, g.w, T(0));
                                continue;
                            }
                            const T* srow = x + ((c * g.d + static_cast<std::size_t>(sz)) * g.h + static_cast<std::size_t>(sy)) * g.w;
                            std::fill(drow, drow + x0, T(0));
                            std::copy(srow + static_cast<long>(x0) + ox, srow + static_cast<long>(x1) + ox, drow + x0);
                            std::fill(drow + x1, drow + g.w, T(0));
                        }
                    }
                }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* cols, T* x) {
    const long pd = static_cast<long>(g.kd / 2), ph = static_cast<long>(g.kh / 2), pw = static_cast<long>(g.kw / 2);
    const std::size_t sp = g.spatial();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t a = 0; a < g.kd; ++a)
            for (std::size_t b = 0; b < g.kh; ++b)
                for (std::size_t e = 0; e < g.kw; ++e, ++row) {
                    const T* src = cols + row * sp;
                    const long oz = static_cast<long>(a) - pd, oy = static_cast<long>(b) - ph, ox = static_cast<long>(e) - pw;
                    const auto [x0, x1] = tap_range(g.w, ox);
                    if (x0 == x1) continue;
                    for (std::size_t z = 0; z < g.d; ++z) {
                        const long sz = static_cast<long>(z) + oz;
                        if (sz < 0 || sz >= static_cast<long>(g.d)) continue;
                        for (std::size_t y = 0; y < g.h; ++y) {
                            const long sy = static_cast<long>(y) + oy;
                            if (sy < 0 || sy >= static_cast<long>(g.h)) continue;
                            const T* srow = src + (z * g.h + y) * g.w;
                            T* drow = x + ((c * g.d + static_cast<std::size_t>(sz)) * g.h + static_cast<std::size_t>(sy)) * g.w;
#pragma omp simd
                            for (std::size_t xx = x0; xx < x1; ++xx) drow[static_cast<long>(xx) + ox] += srow[xx];
                        }
                    }
                }
}

/// Per-thread scratch reused across calls; contents are unspecified.
template <typename T>
T* scratch(std::size_t n, int slot = 0) {
    thread_local std::vector<T> buffers[2];
    auto& b = buffers[slot];
    if (b.size() < n) b.resize(n);
    return b.data();
}

/// input [N, Cin, D, H, W], kernels [Cout, Cin, kd, kh, kw], optional bias [Cout].
template <std::floating_point T>
Tensor<T> conv_nd(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>* bias, const ConvGeom& g, Shape out_shape) {
    if (g.kd % 2 == 0 || g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("conv: kernel extents must be odd for 'same' padding");
    Tensor<T> out(std::move(out_shape));
    const std::size_t sp = g.spatial(), K = g.patch();
    const std::size_t in_stride = g.cin * sp, out_stride = g.cout * sp;
    const T* bv = bias ? bias->data() : nullptr;
    parallel_for(0, g.batch, [&](std::size_t n) {
        T* cols = scratch<T>(K * sp);
        im2col(g, input.data() + n * in_stride, cols);
        T* o = out.data() + n * out_stride;
        if (bv)
            for (std::size_t c = 0; c < g.cout; ++c) std::fill_n(o + c * sp, sp, bv[c]);
        gemm_nn(g.cout, sp, K, kernels.data(), cols, o);
    });
    check_finite(out, "conv");
    Tensor<T> b = bias ? *bias : Tensor<T>();
    const bool grad = bias ? any_requires_grad<T>({&input, &kernels, bias}) : any_requires_grad<T>({&input, &kernels});
    if (grad) {
        record(out, [input, kernels, b, out, g]() mutable {
            if (!out.has_grad()) return;
            const std::size_t sp = g.spatial(), K = g.patch();
            const std::size_t in_stride = g.cin * sp, out_stride = g.cout * sp;
            const T* go = out.grad().data();
            T* cols = scratch<T>(K * sp, 0);
            T* dcols = scratch<T>(K * sp, 1);
            T* gk = kernels.requires_grad() ? kernels.grad_buffer().data() : nullptr;
            T* gx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
            T* gb = (b.defined() && b.requires_grad()) ? b.grad_buffer().data() : nullptr;
            for (std::size_t n = 0; n < g.batch; ++n) {
                const T* gon = go + n * out_stride;
                if (gb)
                    for (std::size_t c = 0; c < g.cout; ++c) {
                        T s = T(0);
                        for (std::size_t i = 0; i < sp; ++i) s += gon[c * sp + i];
                        gb[c] += s;
                    }
                if (gk) {
                    im2col(g, input.data() + n * in_stride, cols);
                    gemm_nt(g.cout, K, sp, gon, cols, gk);
                }
                if (gx) {
                    gemm_tn_assign(K, sp, g.cout, kernels.data(), gon, dcols);
                    col2im_add(g, dcols, gx + n * in_stride);
                }
            }
        });
    }
    return out;
}

}  // namespace detail

/// Batched 2D conv: x [N, Cin, H, W], kernels [Cout, Cin, kh, kw], bias [Cout] or undefined.
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias = Tensor<T>()) {
    if (x.rank() != 4 || kernels.rank() != 4) throw ShapeError("conv2d: expects x [N,C,H,W] and kernels [Co,Ci,kh,kw]");
    if (x.dim(1) != kernels.dim(1)) throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(kernels.shape()));
    detail::ConvGeom g{x.dim(0), x.dim(1), kernels.dim(0), 1, x.dim(2), x.dim(3), 1, kernels.dim(2), kernels.dim(3)};
    return detail::conv_nd(x, kernels, bias.defined() ? &bias : nullptr, g, Shape{x.dim(0), kernels.dim(0), x.dim(2), x.dim(3)});
}

/// 3D conv: x [Cin, D, H, W], kernels [Cout, Cin, kd, kh, kw].
template <std::floating_point T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias = Tensor<T>()) {
    if (x.rank() != 4 || kernels.rank() != 5) throw ShapeError("conv3d: expects x [C,D,H,W] and kernels [Co,Ci,kd,kh,kw]");
    if (x.dim(0) != kernels.dim(1)) throw ShapeError("conv3d: channel mismatch");
    detail::ConvGeom g{1, x.dim(0), kernels.dim(0), x.dim(1), x.dim(2), x.dim(3), kernels.dim(2), kernels.dim(3), kernels.dim(4)};
    return detail::conv_nd(x, kernels, bias.defined() ? &bias : nullptr, g, Shape{kernels.dim(0), x.dim(1), x.dim(2), x.dim(3)});
}

/// input [Cin, H, W] with kernels [Cout, Cin, kh, kw], or [Cin, D, H, W] with [Cout, Cin, kd, kh, kw].
template <std::floating_point T>
Tensor<T> conv(const Tensor<T>& input, const Tensor<T>& kernels) {
    if (input.rank() == 3 && kernels.rank() == 4) {
        auto out = conv2d(reshape(input, Shape{1, input.dim(0), input.dim(1), input.dim(2)}), kernels);
        return reshape(out, Shape{kernels.dim(0), input.dim(1), input.dim(2)});
    }
    if (input.rank() == 4 && kernels.rank() == 5) return conv3d(input, kernels);
    throw ShapeError("conv: unsupported ranks " + shape_str(input.shape()) + " / " + shape_str(kernels.shape()));
}

// ---------------------------------------------------------------------------
// Bilinear sampling and resampling
// ---------------------------------------------------------------------------

namespace detail {

/// Four-tap bilinear stencil. `valid` is false outside [0,W-1]x[0,H-1].
struct BilinearTap {
    std::size_t i00 = 0, i01 = 0, i10 = 0, i11 = 0;
    double w00 = 0, w01 = 0, w10 = 0, w11 = 0;
    bool valid = false;
};

inline BilinearTap bilinear_tap(double x, double y, std::size_t W, std::size_t H) {
    BilinearTap t;
    if (!(x >= 0.0 && y >= 0.0 && x <= static_cast<double>(W - 1) && y <= static_cast<double>(H - 1))) return t;
    std::size_t x0 = static_cast<std::size_t>(std::floor(x));
    std::size_t y0 = static_cast<std::size_t>(std::floor(y));
    x0 = std::min(x0, W - 1);
    y0 = std::min(y0, H - 1);
    const std::size_t x1 = std::min(x0 + 1, W - 1);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    t.i00 = y0 * W + x0;
    t.i01 = y0 * W + x1;
    t.i10 = y1 * W + x0;
    t.i11 = y1 * W + x1;
    t.w00 = (1 - fx) * (1 - fy);
    t.w01 = fx * (1 - fy);
    t.w10 = (1 - fx) * fy;
    t.w11 = fx * fy;
    t.valid = true;
    return t;
}

}  // namespace detail

/// src [N, C, H, W], coords [N, M, h, w, 2] (x, y in pixel units) -> [N, M, C, h, w].
/// Coordinates carry no gradient.
template <std::floating_point T>
Tensor<T> grid_sample_batched(const Tensor<T>& src, const Tensor<T>& coords) {
    if (src.rank() != 4 || coords.rank() != 5 || coords.dim(4) != 2 || coords.dim(0) != src.dim(0))
        throw ShapeError("grid_sample: expects src [N,C,H,W], coords [N,M,h,w,2]; got " + shape_str(src.shape()) + ", " + shape_str(coords.shape()));
    const std::size_t N = src.dim(0), C = src.dim(1), H = src.dim(2), W = src.dim(3);
    const std::size_t M = coords.dim(1), h = coords.dim(2), w = coords.dim(3);
    const std::size_t hw = h * w;
    auto taps = std::make_shared<std::vector<detail::BilinearTap>>(N * M * hw);
    const T* cv = coords.data();
    for (std::size_t i = 0; i < N * M * hw; ++i) {
        if (!std::isfinite(cv[2 * i]) || !std::isfinite(cv[2 * i + 1])) throw NumericError("grid_sample: non-finite coordinate");
        (*taps)[i] = detail::bilinear_tap(cv[2 * i], cv[2 * i + 1], W, H);
    }
    Tensor<T> out(Shape{N, M, C, h, w});
    const T* sv = src.data();
    T* ov = out.data();
    parallel_for(0, N * M, [&](std::size_t nm) {
        const std::size_t n = nm / M;
        const detail::BilinearTap* tp = taps->data() + nm * hw;
        for (std::size_t c = 0; c < C; ++c) {
            const T* plane = sv + (n * C + c) * H * W;
            T* o = ov + (nm * C + c) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                const auto& t = tp[p];
                o[p] = t.valid ? static_cast<T>(t.w00 * plane[t.i00] + t.w01 * plane[t.i01] + t.w10 * plane[t.i10] + t.w11 * plane[t.i11]) : T(0);
            }
        }
    });
    if (detail::any_requires_grad<T>({&src})) {
        detail::record(out, [src, out, taps, N, M, C, H, W, hw]() mutable {
            if (!out.has_grad() || !src.requires_grad()) return;
            const T* g = out.grad().data();
            T* gs = src.grad_buffer().data();
            for (std::size_t nm = 0; nm < N * M; ++nm) {
                const std::size_t n = nm / M;
                const detail::BilinearTap* tp = taps->data() + nm * hw;
                for (std::size_t c = 0; c < C; ++c) {
                    T* plane = gs + (n * C + c) * H * W;
                    const T* go = g + (nm * C + c) * hw;
                    for (std::size_t p = 0; p < hw; ++p) {
                        const auto& t = tp[p];
                        if (!t.valid || go[p] == T(0)) continue;
                        plane[t.i00] += static_cast<T>(t.w00) * go[p];
                        plane[t.i01] += static_cast<T>(t.w01) * go[p];
                        plane[t.i10] += static_cast<T>(t.w10) * go[p];
                        plane[t.i11] += static_cast<T>(t.w11) * go[p];
                    }
                }
            }
        });
    }
    return out;
}

/// src [C, H, W], coords [h, w, 2] -> [C, h, w]. Outside [0,W-1]x[0,H-1] samples are 0.
template <std::floating_point T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& src, const Tensor<T>& coords) {
    if (src.rank() != 3 || coords.rank() != 3) throw ShapeError("grid_sample_bilinear: expects [C,H,W] and [h,w,2]");
    auto out = grid_sample_batched(reshape(src, Shape{1, src.dim(0), src.dim(1), src.dim(2)}),
                                   reshape(coords, Shape{1, 1, coords.dim(0), coords.dim(1), 2}));
    return reshape(out, Shape{src.dim(0), coords.dim(0), coords.dim(1)});
}

namespace detail {

/// Row-stochastic [out x in] bilinear resampling matrix, half-pixel centers.
inline std::vector<double> bilinear_matrix(std::size_t in, std::size_t out) {
    std::vector<double> m(out * in, 0.0);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double s = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        std::size_t i0 = static_cast<std::size_t>(std::floor(s));
        std::size_t i1 = std::min(i0 + 1, in - 1);
        double f = s - static_cast<double>(i0);
        m[o * in + i0] += 1.0 - f;
        m[o * in + i1] += f;
    }
    return m;
}

inline std::vector<double> area_matrix(std::size_t in, std::size_t factor) {
    const std::size_t out = in / factor;
    std::vector<double> m(out * in, 0.0);
    for (std::size_t o = 0; o < out; ++o)
        for (std::size_t k = 0; k < factor; ++k) m[o * in + o * factor + k] = 1.0 / static_cast<double>(factor);
    return m;
}

/// out[..., oh, ow] = Ry * x[..., H, W] * Rx^T
template <std::floating_point T>
Tensor<T> resample_separable(const Tensor<T>& x, const std::vector<double>& ry_d, std::size_t oh, const std::vector<double>& rx_d, std::size_t ow) {
    if (x.rank() < 2) throw ShapeError("resample: rank < 2");
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    const std::size_t slices = x.numel() / (H * W);
    std::vector<T> ry(ry_d.begin(), ry_d.end());
    std::vector<T> rx(rx_d.begin(), rx_d.end());
    Shape out_shape = x.shape();
    out_shape[x.rank() - 2] = oh;
    out_shape[x.rank() - 1] = ow;
    Tensor<T> out(out_shape);
    parallel_for(0, slices, [&](std::size_t s) {
        std::vector<T> tmp(oh * W, T(0));
        gemm_nn(oh, W, H, ry.data(), x.data() + s * H * W, tmp.data());
        gemm_nt(oh, ow, W, tmp.data(), rx.data(), out.data() + s * oh * ow);
    });
    if (any_requires_grad<T>({&x})) {
        record(out, [x, out, ry, rx, H, W, oh, ow, slices]() mutable {
            if (!out.has_grad() || !x.requires_grad()) return;
            const T* g = out.grad().data();
            T* gx = x.grad_buffer().data();
            std::vector<T> tmp(oh * W);
            for (std::size_t s = 0; s < slices; ++s) {
                std::fill(tmp.begin(), tmp.end(), T(0));
                gemm_nn(oh, W, ow, g + s * oh * ow, rx.data(), tmp.data());
                gemm_tn(H, W, oh, ry.data(), tmp.data(), gx + s * H * W);
            }
        });
    }
    return out;
}

}  // namespace detail

/// Bilinear resize of the two trailing axes (half-pixel centers, edge clamp).
template <std::floating_point T>
Tensor<T> resize_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    if (H == out_h && W == out_w) return x;
    return detail::resample_separable(x, detail::bilinear_matrix(H, out_h), out_h, detail::bilinear_matrix(W, out_w), out_w);
}

/// Box-filter downsampling of the two trailing axes by an integer factor.
template <std::floating_point T>
Tensor<T> downsample_area(const Tensor<T>& x, std::size_t factor) {
    const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1);
    if (factor == 1) return x;
    if (H % factor != 0 || W % factor != 0) throw ShapeError("downsample_area: extents not divisible by factor");
    return detail::resample_separable(x, detail::area_matrix(H, factor), H / factor, detail::area_matrix(W, factor), W / factor);
}

// ---------------------------------------------------------------------------
// Small conveniences
// ---------------------------------------------------------------------------

/// x [..., in] * weight [in, out] + bias [out]
template <std::floating_point T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    auto y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

template <std::floating_point T>
Tensor<T> transpose_last(const Tensor<T>& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
    return permute(x, axes);
}

}  // namespace simpli
