#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "somno/errors.hpp"
#include "somno/parallel.hpp"
#include "somno/tensor.hpp"

namespace somno {
namespace ops {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size());
    std::int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = acc;
        acc *= s[static_cast<std::size_t>(i)];
    }
    return st;
}

/// Flat input index for every flat output index of a permutation.
inline std::vector<std::int64_t> permute_index_map(const Shape& out_shape,
                                                   const std::vector<std::int64_t>& map_stride) {
    const int r = static_cast<int>(out_shape.size());
    const std::int64_t n = shape_numel(out_shape);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::vector<std::int64_t> coord(static_cast<std::size_t>(r), 0);
    std::int64_t in_idx = 0;
    for (std::int64_t o = 0; o < n; ++o) {
        idx[static_cast<std::size_t>(o)] = in_idx;
        for (int k = r - 1; k >= 0; --k) {
            auto ku = static_cast<std::size_t>(k);
            if (++coord[ku] < out_shape[ku]) {
                in_idx += map_stride[ku];
                break;
            }
            in_idx -= map_stride[ku] * (out_shape[ku] - 1);
            coord[ku] = 0;
        }
    }
    return idx;
}

} // namespace detail

// ---- elementwise arithmetic ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> v(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += bd[i];
    return somno::detail::make_op_result(a.shape(), std::move(v), {a, b}, [](TensorNode& n) {
        for (int p = 0; p < 2; ++p) {
            auto& par = *n.parents[static_cast<std::size_t>(p)];
            if (!par.requires_grad) continue;
            par.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) par.grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> v(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bd[i];
    return somno::detail::make_op_result(a.shape(), std::move(v), {a, b}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> v(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bd[i];
    return somno::detail::make_op_result(a.shape(), std::move(v), {a, b}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "div");
    std::vector<double> v(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] /= bd[i];
    return somno::detail::make_op_result(a.shape(), std::move(v), {a, b}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] / pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pb.grad[i] -= n.grad[i] * n.value[i] / pb.value[i];
        }
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> v(a.data());
    for (double& x : v) x += c;
    return somno::detail::make_op_result(a.shape(), std::move(v), {a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.data());
    for (double& x : v) x *= c;
    return somno::detail::make_op_result(a.shape(), std::move(v), {a}, [c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    });
}

// ---- activations ----

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.data());
    for (double& x : v) x = x > 0.0 ? x : 0.0;
    return somno::detail::make_op_result(a.shape(), std::move(v), {a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += n.grad[i];
    });
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
    std::vector<double> v(a.data());
    for (double& x : v) x = x > 0.0 ? x : slope * x;
    return somno::detail::make_op_result(a.shape(), std::move(v), {a}, [slope](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += n.grad[i] * (p.value[i] > 0.0 ? 1.0 : slope);
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.data());
    for (double& x : v) x = 1.0 / (1.0 + std::exp(-x));
    return somno::detail::make_op_result(a.shape(), std::move(v), {a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double y = n.value[i];
            p.grad[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

// ---- shape manipulation ----

inline Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                         shape_str(new_shape));
    std::vector<double> v(a.data());
    return somno::detail::make_op_result(std::move(new_shape), std::move(v), {a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
    const Shape& in_shape = a.shape();
    const int r = a.rank();
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
    std::vector<bool> used(static_cast<std::size_t>(r), false);
    Shape out_shape(static_cast<std::size_t>(r));
    for (int k = 0; k < r; ++k) {
        const int ax = perm[static_cast<std::size_t>(k)];
        if (ax < 0 || ax >= r || used[static_cast<std::size_t>(ax)])
            throw ShapeError("permute: invalid axis list");
        used[static_cast<std::size_t>(ax)] = true;
        out_shape[static_cast<std::size_t>(k)] = in_shape[static_cast<std::size_t>(ax)];
    }
    const auto in_strides = detail::row_major_strides(in_shape);
    std::vector<std::int64_t> map_stride(static_cast<std::size_t>(r));
    for (int k = 0; k < r; ++k)
        map_stride[static_cast<std::size_t>(k)] =
            in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];

    const std::vector<std::int64_t> idx_map = detail::permute_index_map(out_shape, map_stride);
    const std::int64_t n = a.numel();
    std::vector<double> v(static_cast<std::size_t>(n));
    const auto& src = a.data();
    for (std::int64_t o = 0; o < n; ++o)
        v[static_cast<std::size_t>(o)] = src[static_cast<std::size_t>(idx_map[static_cast<std::size_t>(o)])];

    return somno::detail::make_op_result(
        std::move(out_shape), std::move(v), {a}, [idx_map](TensorNode& nd) {
            auto& p = *nd.parents[0];
            p.ensure_grad();
            for (std::size_t o = 0; o < nd.grad.size(); ++o)
                p.grad[static_cast<std::size_t>(idx_map[o])] += nd.grad[o];
        });
}

/// Swap the last two axes (rank >= 2).
inline Tensor transpose_last2(const Tensor& a) {
    const int r = a.rank();
    if (r < 2) throw ShapeError("transpose_last2: rank must be >= 2");
    std::vector<int> perm(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::swap(perm[static_cast<std::size_t>(r - 2)], perm[static_cast<std::size_t>(r - 1)]);
    return permute(a, perm);
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int r = parts[0].rank();
    if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    std::int64_t axis_total = 0;
    for (const Tensor& t : parts) {
        if (t.rank() != r) throw ShapeError("concat: rank mismatch");
        for (int k = 0; k < r; ++k)
            if (k != axis && t.dim(k) != out_shape[static_cast<std::size_t>(k)])
                throw ShapeError("concat: incompatible shape " + shape_str(t.shape()));
        axis_total += t.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k) outer *= out_shape[static_cast<std::size_t>(k)];
    for (int k = axis + 1; k < r; ++k) inner *= out_shape[static_cast<std::size_t>(k)];

    std::vector<double> v(static_cast<std::size_t>(shape_numel(out_shape)));
    std::vector<std::int64_t> chunks; // per-part contiguous run length
    chunks.reserve(parts.size());
    for (const Tensor& t : parts) chunks.push_back(t.dim(axis) * inner);
    const std::int64_t out_row = axis_total * inner;
    for (std::int64_t ou = 0; ou < outer; ++ou) {
        std::int64_t off = ou * out_row;
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const auto& src = parts[pi].data();
            std::copy_n(src.begin() + ou * chunks[pi], chunks[pi], v.begin() + off);
            off += chunks[pi];
        }
    }
    return somno::detail::make_op_result(
        std::move(out_shape), std::move(v), parts, [outer, out_row, chunks](TensorNode& nd) {
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                std::int64_t off = ou * out_row;
                for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
                    auto& p = *nd.parents[pi];
                    if (p.requires_grad) {
                        p.ensure_grad();
                        for (std::int64_t i = 0; i < chunks[pi]; ++i)
                            p.grad[static_cast<std::size_t>(ou * chunks[pi] + i)] +=
                                nd.grad[static_cast<std::size_t>(off + i)];
                    }
                    off += chunks[pi];
                }
            }
        });
}

// ---- reductions ----

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return somno::detail::make_op_result(Shape{}, {s}, {a}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const double g = n.grad[0];
        for (double& d : p.grad) d += g;
    });
}

inline Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    const double inv = 1.0 / static_cast<double>(a.numel());
    return somno::detail::make_op_result(Shape{}, {s * inv}, {a}, [inv](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        const double g = n.grad[0] * inv;
        for (double& d : p.grad) d += g;
    });
}

/// Mean over the time axis of [batch, time, d] -> [batch, d].
inline Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("global_avg_pool: expected [batch, time, d]");
    const std::int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    const double inv = 1.0 / static_cast<double>(t);
    std::vector<double> v(static_cast<std::size_t>(b * d), 0.0);
    const auto& src = x.data();
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t ti = 0; ti < t; ++ti)
            for (std::int64_t di = 0; di < d; ++di)
                v[static_cast<std::size_t>(bi * d + di)] +=
                    src[static_cast<std::size_t>((bi * t + ti) * d + di)];
    for (double& e : v) e *= inv;
    return somno::detail::make_op_result(Shape{b, d}, std::move(v), {x}, [b, t, d, inv](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::int64_t bi = 0; bi < b; ++bi)
            for (std::int64_t ti = 0; ti < t; ++ti)
                for (std::int64_t di = 0; di < d; ++di)
                    p.grad[static_cast<std::size_t>((bi * t + ti) * d + di)] +=
                        n.grad[static_cast<std::size_t>(bi * d + di)] * inv;
    });
}

/// Multiply each batch slice of x by the matching scalar in w ([b] or [b,1]).
inline Tensor scale_per_batch(const Tensor& x, const Tensor& w) {
    if (x.rank() < 1) throw ShapeError("scale_per_batch: x must have a batch axis");
    const std::int64_t b = x.dim(0);
    if (w.numel() != b)
        throw ShapeError("scale_per_batch: weight count " + std::to_string(w.numel()) +
                         " != batch " + std::to_string(b));
    const std::int64_t slice = x.numel() / b;
    std::vector<double> v(x.data());
    const auto& wd = w.data();
    for (std::int64_t bi = 0; bi < b; ++bi) {
        const double c = wd[static_cast<std::size_t>(bi)];
        for (std::int64_t i = 0; i < slice; ++i) v[static_cast<std::size_t>(bi * slice + i)] *= c;
    }
    return somno::detail::make_op_result(x.shape(), std::move(v), {x, w}, [b, slice](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const double c = pw.value[static_cast<std::size_t>(bi)];
                for (std::int64_t i = 0; i < slice; ++i)
                    px.grad[static_cast<std::size_t>(bi * slice + i)] +=
                        n.grad[static_cast<std::size_t>(bi * slice + i)] * c;
            }
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            for (std::int64_t bi = 0; bi < b; ++bi) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < slice; ++i)
                    acc += n.grad[static_cast<std::size_t>(bi * slice + i)] *
                           px.value[static_cast<std::size_t>(bi * slice + i)];
                pw.grad[static_cast<std::size_t>(bi)] += acc;
            }
        }
    });
}

// ---- dense / matmul ----

/// Affine map over the last axis: y[..., o] = sum_i x[..., i] w[i, o] + bias[o].
/// Pass an undefined bias tensor to omit the bias term.
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
    if (w.rank() != 2) throw ShapeError("dense: weight must be [d_in, d_out]");
    const std::int64_t din = w.dim(0), dout = w.dim(1);
    if (x.rank() < 1 || x.dim(x.rank() - 1) != din)
        throw ShapeError("dense: input last dim != d_in, input " + shape_str(x.shape()));
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != dout))
        throw ShapeError("dense: bias must be [d_out]");
    const std::int64_t rows = x.numel() / din;

    std::vector<double> v(static_cast<std::size_t>(rows * dout), 0.0);
    {
        const double* xd = x.data().data();
        const double* wd = w.data().data();
        double* out = v.data();
        parallel_for(rows, 16, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                double* yrow = out + r * dout;
                const double* xrow = xd + r * din;
                for (std::int64_t i = 0; i < din; ++i) {
                    const double a = xrow[i];
                    const double* wrow = wd + i * dout;
                    for (std::int64_t o = 0; o < dout; ++o) yrow[o] += a * wrow[o];
                }
            }
        });
        if (has_bias) {
            const double* bd = bias.data().data();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t o = 0; o < dout; ++o) out[r * dout + o] += bd[o];
        }
    }
    Shape out_shape = x.shape();
    out_shape.back() = dout;

    std::vector<Tensor> inputs = {x, w};
    if (has_bias) inputs.push_back(bias);
    return somno::detail::make_op_result(
        std::move(out_shape), std::move(v), std::move(inputs),
        [rows, din, dout, has_bias](TensorNode& n) {
            auto& px = *n.parents[0];
            auto& pw = *n.parents[1];
            const double* g = n.grad.data();
            if (px.requires_grad) {
                px.ensure_grad();
                const double* wd = pw.value.data();
                double* gx = px.grad.data();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t i = 0; i < din; ++i) {
                        const double* wrow = wd + i * dout;
                        const double* grow = g + r * dout;
                        double acc = 0.0;
                        for (std::int64_t o = 0; o < dout; ++o) acc += grow[o] * wrow[o];
                        gx[r * din + i] += acc;
                    }
            }
            if (pw.requires_grad) {
                pw.ensure_grad();
                const double* xd = px.value.data();
                double* gw = pw.grad.data();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t i = 0; i < din; ++i) {
                        const double a = xd[r * din + i];
                        if (a == 0.0) continue;
                        const double* grow = g + r * dout;
                        double* gwrow = gw + i * dout;
                        for (std::int64_t o = 0; o < dout; ++o) gwrow[o] += a * grow[o];
                    }
            }
            if (has_bias && n.parents[2]->requires_grad) {
                auto& pb = *n.parents[2];
                pb.ensure_grad();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t o = 0; o < dout; ++o)
                        pb.grad[static_cast<std::size_t>(o)] += g[r * dout + o];
            }
        });
}

/// Batched matmul: [b, m, k] x [b, k, n] -> [b, m, n].
inline Tensor bmm(const Tensor& a, const Tensor& w) {
    if (a.rank() != 3 || w.rank() != 3 || a.dim(0) != w.dim(0) || a.dim(2) != w.dim(1))
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(w.shape()));
    const std::int64_t b = a.dim(0), m = a.dim(1), k = a.dim(2), nn = w.dim(2);
    std::vector<double> v(static_cast<std::size_t>(b * m * nn), 0.0);
    {
        const double* ad = a.data().data();
        const double* wd = w.data().data();
        double* out = v.data();
        parallel_for(b * m, 8, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                const std::int64_t bi = r / m;
                const double* arow = ad + r * k;
                const double* wmat = wd + bi * k * nn;
                double* yrow = out + r * nn;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const double av = arow[kk];
                    const double* wrow = wmat + kk * nn;
                    for (std::int64_t o = 0; o < nn; ++o) yrow[o] += av * wrow[o];
                }
            }
        });
    }
    return somno::detail::make_op_result(
        Shape{b, m, nn}, std::move(v), {a, w}, [b, m, k, nn](TensorNode& node) {
            auto& pa = *node.parents[0];
            auto& pw = *node.parents[1];
            const double* g = node.grad.data();
            if (pa.requires_grad) {
                pa.ensure_grad();
                const double* wd = pw.value.data();
                double* ga = pa.grad.data();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t mi = 0; mi < m; ++mi)
                        for (std::int64_t kk = 0; kk < k; ++kk) {
                            const double* grow = g + (bi * m + mi) * nn;
                            const double* wrow = wd + (bi * k + kk) * nn;
                            double acc = 0.0;
                            for (std::int64_t o = 0; o < nn; ++o) acc += grow[o] * wrow[o];
                            ga[(bi * m + mi) * k + kk] += acc;
                        }
            }
            if (pw.requires_grad) {
                pw.ensure_grad();
                const double* ad = pa.value.data();
                double* gw = pw.grad.data();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t mi = 0; mi < m; ++mi) {
                        const double* arow = ad + (bi * m + mi) * k;
                        const double* grow = g + (bi * m + mi) * nn;
                        for (std::int64_t kk = 0; kk < k; ++kk) {
                            const double av = arow[kk];
                            double* gwrow = gw + (bi * k + kk) * nn;
                            for (std::int64_t o = 0; o < nn; ++o) gwrow[o] += av * grow[o];
                        }
                    }
            }
        });
}

/// Batched matmul with transposed second operand: [b, m, k] x [b, n, k] -> [b, m, n].
inline Tensor bmm_nt(const Tensor& a, const Tensor& w) {
    if (a.rank() != 3 || w.rank() != 3 || a.dim(0) != w.dim(0) || a.dim(2) != w.dim(2))
        throw ShapeError("bmm_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(w.shape()));
    const std::int64_t b = a.dim(0), m = a.dim(1), k = a.dim(2), nn = w.dim(1);
    std::vector<double> v(static_cast<std::size_t>(b * m * nn));
    {
        const double* ad = a.data().data();
        const double* wd = w.data().data();
        double* out = v.data();
        parallel_for(b * m, 8, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                const std::int64_t bi = r / m;
                const double* arow = ad + r * k;
                const double* wmat = wd + bi * nn * k;
                double* yrow = out + r * nn;
                for (std::int64_t o = 0; o < nn; ++o) {
                    const double* wrow = wmat + o * k;
                    double acc = 0.0;
                    for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * wrow[kk];
                    yrow[o] = acc;
                }
            }
        });
    }
    return somno::detail::make_op_result(
        Shape{b, m, nn}, std::move(v), {a, w}, [b, m, k, nn](TensorNode& node) {
            auto& pa = *node.parents[0];
            auto& pw = *node.parents[1];
            const double* g = node.grad.data();
            if (pa.requires_grad) {
                pa.ensure_grad();
                const double* wd = pw.value.data();
                double* ga = pa.grad.data();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t mi = 0; mi < m; ++mi) {
                        const double* grow = g + (bi * m + mi) * nn;
                        double* garow = ga + (bi * m + mi) * k;
                        for (std::int64_t o = 0; o < nn; ++o) {
                            const double gv = grow[o];
                            if (gv == 0.0) continue;
                            const double* wrow = wd + (bi * nn + o) * k;
                            for (std::int64_t kk = 0; kk < k; ++kk) garow[kk] += gv * wrow[kk];
                        }
                    }
            }
            if (pw.requires_grad) {
                pw.ensure_grad();
                const double* ad = pa.value.data();
                double* gw = pw.grad.data();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t mi = 0; mi < m; ++mi) {
                        const double* arow = ad + (bi * m + mi) * k;
                        const double* grow = g + (bi * m + mi) * nn;
                        for (std::int64_t o = 0; o < nn; ++o) {
                            const double gv = grow[o];
                            if (gv == 0.0) continue;
                            double* gwrow = gw + (bi * nn + o) * k;
                            for (std::int64_t kk = 0; kk < k; ++kk) gwrow[kk] += gv * arow[kk];
                        }
                    }
            }
        });
}

// ---- normalization / softmax ----

inline Tensor softmax(const Tensor& x) {
    if (x.rank() < 1) throw ShapeError("softmax: rank must be >= 1");
    const std::int64_t d = x.dim(x.rank() - 1);
    const std::int64_t rows = x.numel() / d;
    std::vector<double> v(x.data());
    for (std::int64_t r = 0; r < rows; ++r) {
        double* row = v.data() + r * d;
        double mx = row[0];
        for (std::int64_t i = 1; i < d; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
            row[i] = std::exp(row[i] - mx);
            sum += row[i];
        }
        const double inv = 1.0 / sum;
        for (std::int64_t i = 0; i < d; ++i) row[i] *= inv;
    }
    return somno::detail::make_op_result(x.shape(), std::move(v), {x}, [rows, d](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = n.value.data() + r * d;
            const double* g = n.grad.data() + r * d;
            double dot = 0.0;
            for (std::int64_t i = 0; i < d; ++i) dot += g[i] * y[i];
            double* out = p.grad.data() + r * d;
            for (std::int64_t i = 0; i < d; ++i) out[i] += y[i] * (g[i] - dot);
        }
    });
}

/// Standardize over the last axis then apply elementwise affine [d] params.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: rank must be >= 1");
    const std::int64_t d = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
        throw ShapeError("layer_norm: gain/bias must be [d]");
    const std::int64_t rows = x.numel() / d;
    std::vector<double> v(static_cast<std::size_t>(x.numel()));
    std::vector<double> mean(static_cast<std::size_t>(rows));
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    {
        const double* xd = x.data().data();
        const double* gd = gain.data().data();
        const double* bd = bias.data().data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = xd + r * d;
            double mu = 0.0;
            for (std::int64_t i = 0; i < d; ++i) mu += row[i];
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::int64_t i = 0; i < d; ++i) {
                const double c = row[i] - mu;
                var += c * c;
            }
            var /= static_cast<double>(d);
            const double inv = 1.0 / std::sqrt(var + eps);
            mean[static_cast<std::size_t>(r)] = mu;
            inv_std[static_cast<std::size_t>(r)] = inv;
            double* out = v.data() + r * d;
            for (std::int64_t i = 0; i < d; ++i) out[i] = (row[i] - mu) * inv * gd[i] + bd[i];
        }
    }
    return somno::detail::make_op_result(
        x.shape(), std::move(v), {x, gain, bias},
        [rows, d, mean = std::move(mean), inv_std = std::move(inv_std)](TensorNode& n) {
            auto& px = *n.parents[0];
            auto& pg = *n.parents[1];
            auto& pb = *n.parents[2];
            const double* g = n.grad.data();
            const double* xd = px.value.data();
            const double* gd = pg.value.data();
            const bool need_x = px.requires_grad;
            const bool need_g = pg.requires_grad;
            const bool need_b = pb.requires_grad;
            if (need_x) px.ensure_grad();
            if (need_g) pg.ensure_grad();
            if (need_b) pb.ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double mu = mean[static_cast<std::size_t>(r)];
                const double inv = inv_std[static_cast<std::size_t>(r)];
                const double* grow = g + r * d;
                const double* xrow = xd + r * d;
                if (need_g || need_b) {
                    for (std::int64_t i = 0; i < d; ++i) {
                        const double xhat = (xrow[i] - mu) * inv;
                        if (need_g) pg.grad[static_cast<std::size_t>(i)] += grow[i] * xhat;
                        if (need_b) pb.grad[static_cast<std::size_t>(i)] += grow[i];
                    }
                }
                if (need_x) {
                    // dxhat = g * gain; dx = inv*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                    double s1 = 0.0, s2 = 0.0;
                    for (std::int64_t i = 0; i < d; ++i) {
                        const double dxh = grow[i] * gd[i];
                        const double xhat = (xrow[i] - mu) * inv;
                        s1 += dxh;
                        s2 += dxh * xhat;
                    }
                    s1 /= static_cast<double>(d);
                    s2 /= static_cast<double>(d);
                    double* out = px.grad.data() + r * d;
                    for (std::int64_t i = 0; i < d; ++i) {
                        const double dxh = grow[i] * gd[i];
                        const double xhat = (xrow[i] - mu) * inv;
                        out[i] += inv * (dxh - s1 - xhat * s2);
                    }
                }
            }
        });
}

// ---- convolution / pooling ----

enum class Padding { Same, Valid };

/// 1-D cross-correlation over [batch, c_in, time] with kernel
/// [c_out, c_in, k]; optional bias [c_out].
inline Tensor conv1d(const Tensor& x, const Tensor& kernel, Padding padding, std::int64_t dilation = 1,
                     const Tensor& bias = Tensor()) {
    if (x.rank() != 3 || kernel.rank() != 3)
        throw ShapeError("conv1d: expected input [b, c_in, t] and kernel [c_out, c_in, k]");
    if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
    const std::int64_t b = x.dim(0), cin = x.dim(1), t = x.dim(2);
    const std::int64_t cout = kernel.dim(0), kw = kernel.dim(2);
    if (kernel.dim(1) != cin)
        throw ShapeError("conv1d: kernel c_in " + std::to_string(kernel.dim(1)) +
                         " != input c_in " + std::to_string(cin));
    const std::int64_t span = dilation * (kw - 1);
    const std::int64_t tout = padding == Padding::Same ? t : t - span;
    if (tout < 1) throw ShapeError("conv1d: kernel span exceeds input length");
    const std::int64_t left = padding == Padding::Same ? span / 2 : 0;
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout))
        throw ShapeError("conv1d: bias must be [c_out]");

    std::vector<double> v(static_cast<std::size_t>(b * cout * tout), 0.0);
    {
        const double* xd = x.data().data();
        const double* kd = kernel.data().data();
        double* out = v.data();
        parallel_for(b * cout, 1, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                const std::int64_t bi = r / cout, co = r % cout;
                double* yrow = out + r * tout;
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                    const double* xrow = xd + (bi * cin + ci) * t;
                    const double* krow = kd + (co * cin + ci) * kw;
                    for (std::int64_t j = 0; j < kw; ++j) {
                        const double wv = krow[j];
                        if (wv == 0.0) continue;
                        const std::int64_t shift = j * dilation - left;
                        const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                        const std::int64_t hi = std::min(tout - 1, t - 1 - shift);
                        const double* xs = xrow + shift;
                        for (std::int64_t ti = lo; ti <= hi; ++ti) yrow[ti] += wv * xs[ti];
                    }
                }
                if (has_bias) {
                    const double bv = bias.data()[static_cast<std::size_t>(co)];
                    for (std::int64_t ti = 0; ti < tout; ++ti) yrow[ti] += bv;
                }
            }
        });
    }
    std::vector<Tensor> inputs = {x, kernel};
    if (has_bias) inputs.push_back(bias);
    return somno::detail::make_op_result(
        Shape{b, cout, tout}, std::move(v), std::move(inputs),
        [b, cin, t, cout, kw, tout, left, dilation, has_bias](TensorNode& n) {
            auto& px = *n.parents[0];
            auto& pk = *n.parents[1];
            const double* g = n.grad.data();
            if (px.requires_grad) {
                px.ensure_grad();
                const double* kd = pk.value.data();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t co = 0; co < cout; ++co) {
                        const double* grow = g + (bi * cout + co) * tout;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            double* gx = px.grad.data() + (bi * cin + ci) * t;
                            const double* krow = kd + (co * cin + ci) * kw;
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const double wv = krow[j];
                                if (wv == 0.0) continue;
                                const std::int64_t shift = j * dilation - left;
                                const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                                const std::int64_t hi = std::min(tout - 1, t - 1 - shift);
                                double* gxs = gx + shift;
                                for (std::int64_t ti = lo; ti <= hi; ++ti)
                                    gxs[ti] += wv * grow[ti];
                            }
                        }
                    }
            }
            if (pk.requires_grad) {
                pk.ensure_grad();
                const double* xd = px.value.data();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t co = 0; co < cout; ++co) {
                        const double* grow = g + (bi * cout + co) * tout;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const double* xrow = xd + (bi * cin + ci) * t;
                            double* gk = pk.grad.data() + (co * cin + ci) * kw;
                            for (std::int64_t j = 0; j < kw; ++j) {
                                const std::int64_t shift = j * dilation - left;
                                const std::int64_t lo = std::max<std::int64_t>(0, -shift);
                                const std::int64_t hi = std::min(tout - 1, t - 1 - shift);
                                const double* xs = xrow + shift;
                                double acc = 0.0;
                                for (std::int64_t ti = lo; ti <= hi; ++ti)
                                    acc += grow[ti] * xs[ti];
                                gk[j] += acc;
                            }
                        }
                    }
            }
            if (has_bias && n.parents[2]->requires_grad) {
                auto& pb = *n.parents[2];
                pb.ensure_grad();
                for (std::int64_t bi = 0; bi < b; ++bi)
                    for (std::int64_t co = 0; co < cout; ++co) {
                        const double* grow = g + (bi * cout + co) * tout;
                        double acc = 0.0;
                        for (std::int64_t ti = 0; ti < tout; ++ti) acc += grow[ti];
                        pb.grad[static_cast<std::size_t>(co)] += acc;
                    }
            }
        });
}

/// Width-2 stride-2 max pool over [batch, channels, time]; ties pick the
/// earlier sample.
inline Tensor max_pool1d(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("max_pool1d: expected [b, c, t]");
    const std::int64_t b = x.dim(0), c = x.dim(1), t = x.dim(2);
    if (t % 2 != 0) throw ShapeError("max_pool1d: time axis must be even, got " + std::to_string(t));
    const std::int64_t to = t / 2;
    std::vector<double> v(static_cast<std::size_t>(b * c * to));
    std::vector<std::uint8_t> sel(static_cast<std::size_t>(b * c * to));
    const auto& src = x.data();
    for (std::int64_t r = 0; r < b * c; ++r) {
        const double* row = src.data() + r * t;
        double* out = v.data() + r * to;
        std::uint8_t* srow = sel.data() + r * to;
        for (std::int64_t u = 0; u < to; ++u) {
            const double x0 = row[2 * u], x1 = row[2 * u + 1];
            const bool second = x1 > x0;
            out[u] = second ? x1 : x0;
            srow[u] = second ? 1 : 0;
        }
    }
    return somno::detail::make_op_result(
        Shape{b, c, to}, std::move(v), {x}, [b, c, t, to, sel = std::move(sel)](TensorNode& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            for (std::int64_t r = 0; r < b * c; ++r) {
                const double* grow = n.grad.data() + r * to;
                double* gx = p.grad.data() + r * t;
                const std::uint8_t* srow = sel.data() + r * to;
                for (std::int64_t u = 0; u < to; ++u) gx[2 * u + srow[u]] += grow[u];
            }
        });
}

// ---- loss ----

/// Mean cross-entropy over all leading positions of logits[..., n_classes]
/// against one integer label per position.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
    if (logits.rank() < 1) throw ShapeError("cross_entropy: rank must be >= 1");
    const std::int64_t nc = logits.dim(logits.rank() - 1);
    const std::int64_t rows = logits.numel() / nc;
    if (static_cast<std::int64_t>(labels.size()) != rows)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " positions");
    for (std::int64_t lab : labels)
        if (lab < 0 || lab >= nc)
            throw DataError("cross_entropy: label " + std::to_string(lab) + " outside [0, " +
                            std::to_string(nc) + ")");
    std::vector<double> probs(static_cast<std::size_t>(logits.numel()));
    double total = 0.0;
    const double* xd = logits.data().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = xd + r * nc;
        double mx = row[0];
        for (std::int64_t i = 1; i < nc; ++i) mx = std::max(mx, row[i]);
        double sum = 0.0;
        double* prow = probs.data() + r * nc;
        for (std::int64_t i = 0; i < nc; ++i) {
            prow[i] = std::exp(row[i] - mx);
            sum += prow[i];
        }
        const double inv = 1.0 / sum;
        for (std::int64_t i = 0; i < nc; ++i) prow[i] *= inv;
        const double lse = mx + std::log(sum);
        total += lse - row[labels[static_cast<std::size_t>(r)]];
    }
    const double inv_rows = 1.0 / static_cast<double>(rows);
    return somno::detail::make_op_result(
        Shape{}, {total * inv_rows}, {logits},
        [rows, nc, inv_rows, labels, probs = std::move(probs)](TensorNode& n) {
            auto& p = *n.parents[0];
            p.ensure_grad();
            const double g = n.grad[0] * inv_rows;
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* prow = probs.data() + r * nc;
                double* out = p.grad.data() + r * nc;
                for (std::int64_t i = 0; i < nc; ++i) out[i] += g * prow[i];
                out[labels[static_cast<std::size_t>(r)]] -= g;
            }
        });
}

// ---- attention ----

struct AttentionParams {
    Tensor w_q; // [d, d]
    Tensor w_k;
    Tensor w_v;
    Tensor w_o;
};

namespace detail {

/// [b, t, d] -> [b*heads, t, d/heads]
inline Tensor split_heads(const Tensor& x, std::int64_t heads) {
    const std::int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    const std::int64_t dh = d / heads;
    Tensor r = reshape(x, {b, t, heads, dh});
    r = permute(r, {0, 2, 1, 3});
    return reshape(r, {b * heads, t, dh});
}

/// [b*heads, t, d/heads] -> [b, t, d]
inline Tensor merge_heads(const Tensor& x, std::int64_t b, std::int64_t heads) {
    const std::int64_t t = x.dim(1), dh = x.dim(2);
    Tensor r = reshape(x, {b, heads, t, dh});
    r = permute(r, {0, 2, 1, 3});
    return reshape(r, {b, t, heads * dh});
}

} // namespace detail

/// Scaled dot-product multi-head attention; queries from q_src, keys and
/// values from kv_src. No positional encoding.
inline Tensor multi_head_attention(const Tensor& q_src, const Tensor& kv_src,
                                   const AttentionParams& params, std::int64_t heads) {
    if (q_src.rank() != 3 || kv_src.rank() != 3)
        throw ShapeError("attention: expected [b, t, d] inputs");
    const std::int64_t b = q_src.dim(0), d = q_src.dim(2);
    if (kv_src.dim(0) != b || kv_src.dim(2) != d)
        throw ShapeError("attention: stream shape mismatch " + shape_str(q_src.shape()) + " vs " +
                         shape_str(kv_src.shape()));
    if (heads < 1 || d % heads != 0)
        throw ConfigError("attention: feature dim " + std::to_string(d) +
                          " not divisible by heads " + std::to_string(heads));
    const std::int64_t dh = d / heads;

    Tensor q = detail::split_heads(dense(q_src, params.w_q), heads);
    Tensor k = detail::split_heads(dense(kv_src, params.w_k), heads);
    Tensor v = detail::split_heads(dense(kv_src, params.w_v), heads);

    Tensor scores = scale(bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor attn = softmax(scores);
    Tensor ctx = detail::merge_heads(bmm(attn, v), b, heads);
    return dense(ctx, params.w_o);
}

} // namespace ops
} // namespace somno
