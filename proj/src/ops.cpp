#include "iccnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace iccnn {

namespace {

// ---------------------------------------------------------------------------
// im2col / col2im + a small axpy-style GEMM. This is the fast convolution
// path; tests compare it against a naive nested-loop oracle.
// ---------------------------------------------------------------------------

// col is (Cin*k*k, H*W); column j = (i*W + jj) holds the zero-padded patch
// centered at (i, jj).
void im2col(const double* in, int cin, int h, int w, int k, double* col) {
    const int pad = (k - 1) / 2;
    const int hw = h * w;
    int row = 0;
    for (int c = 0; c < cin; ++c) {
        const double* plane = in + static_cast<size_t>(c) * hw;
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj, ++row) {
                double* dst = col + static_cast<size_t>(row) * hw;
                const int src_i0 = di - pad;
                const int src_j0 = dj - pad;
                for (int i = 0; i < h; ++i) {
                    const int si = i + src_i0;
                    double* drow = dst + static_cast<size_t>(i) * w;
                    if (si < 0 || si >= h) {
                        std::memset(drow, 0, sizeof(double) * static_cast<size_t>(w));
                        continue;
                    }
                    const double* srow = plane + static_cast<size_t>(si) * w;
                    int j0 = std::max(0, -src_j0);
                    int j1 = std::min(w, w - src_j0);
                    for (int j = 0; j < j0; ++j) drow[j] = 0.0;
                    for (int j = j0; j < j1; ++j) drow[j] = srow[j + src_j0];
                    for (int j = j1; j < w; ++j) drow[j] = 0.0;
                }
            }
        }
    }
}

void col2im_add(const double* col, int cin, int h, int w, int k, double* in_grad) {
    const int pad = (k - 1) / 2;
    const int hw = h * w;
    int row = 0;
    for (int c = 0; c < cin; ++c) {
        double* plane = in_grad + static_cast<size_t>(c) * hw;
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj, ++row) {
                const double* src = col + static_cast<size_t>(row) * hw;
                const int src_i0 = di - pad;
                const int src_j0 = dj - pad;
                for (int i = 0; i < h; ++i) {
                    const int si = i + src_i0;
                    if (si < 0 || si >= h) continue;
                    const double* srow = src + static_cast<size_t>(i) * w;
                    double* drow = plane + static_cast<size_t>(si) * w;
                    int j0 = std::max(0, -src_j0);
                    int j1 = std::min(w, w - src_j0);
                    for (int j = j0; j < j1; ++j) drow[j + src_j0] += srow[j];
                }
            }
        }
    }
}

// C[M,N] += A[M,K] * B[K,N]. Four C rows share each B row; every C element
// still accumulates over l in ascending order, so results are reproducible
// run to run.
void gemm_acc(int m, int n, int k, const double* a, const double* b, double* c) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + static_cast<size_t>(i) * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* c0 = c + static_cast<size_t>(i) * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        for (int l = 0; l < k; ++l) {
            const double* brow = b + static_cast<size_t>(l) * n;
            const double v0 = a0[l], v1 = a1[l], v2 = a2[l], v3 = a3[l];
            for (int j = 0; j < n; ++j) {
                const double bj = brow[j];
                c0[j] += v0 * bj;
                c1[j] += v1 * bj;
                c2[j] += v2 * bj;
                c3[j] += v3 * bj;
            }
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = b + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// Given A (M0,K0) and G (M0,N), accumulates C[K0,N] += A^T * G. Four G rows
// are fused per sweep; per-element accumulation order stays fixed.
void gemm_at_acc(int m0, int k0, int n, const double* a, const double* g, double* c) {
    int i = 0;
    for (; i + 4 <= m0; i += 4) {
        const double* a0 = a + static_cast<size_t>(i) * k0;
        const double* a1 = a0 + k0;
        const double* a2 = a1 + k0;
        const double* a3 = a2 + k0;
        const double* g0 = g + static_cast<size_t>(i) * n;
        const double* g1 = g0 + n;
        const double* g2 = g1 + n;
        const double* g3 = g2 + n;
        for (int l = 0; l < k0; ++l) {
            double* crow = c + static_cast<size_t>(l) * n;
            const double v0 = a0[l], v1 = a1[l], v2 = a2[l], v3 = a3[l];
            for (int j = 0; j < n; ++j) {
                crow[j] += v0 * g0[j] + v1 * g1[j] + v2 * g2[j] + v3 * g3[j];
            }
        }
    }
    for (; i < m0; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k0;
        const double* grow = g + static_cast<size_t>(i) * n;
        for (int l = 0; l < k0; ++l) {
            const double av = arow[l];
            double* crow = c + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

// C[M,K] += G[M,N] * B^T where B is (K,N). Runs on transposed copies so the
// hot loop is a fused four-way axpy over contiguous rows.
void gemm_bt_acc(int m, int k, int n, const double* g, const double* b, double* c) {
    // blocked transposes: B (K,N) -> bt (N,K), G (M,N) -> gt (N,M)
    std::vector<double> bt(static_cast<size_t>(n) * k);
    constexpr int kTile = 32;
    for (int l0 = 0; l0 < k; l0 += kTile) {
        const int l1 = std::min(k, l0 + kTile);
        for (int j0 = 0; j0 < n; j0 += kTile) {
            const int j1 = std::min(n, j0 + kTile);
            for (int l = l0; l < l1; ++l) {
                for (int j = j0; j < j1; ++j) {
                    bt[static_cast<size_t>(j) * k + l] = b[static_cast<size_t>(l) * n + j];
                }
            }
        }
    }
    std::vector<double> gt(static_cast<size_t>(n) * m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            gt[static_cast<size_t>(j) * m + i] = g[static_cast<size_t>(i) * n + j];
        }
    }
    gemm_at_acc(n, m, k, gt.data(), bt.data(), c);
}

struct UpsampleAxis {
    std::vector<int> i0, i1;
    std::vector<double> w0, w1;
};

UpsampleAxis make_upsample_axis(int n_in) {
    UpsampleAxis ax;
    const int n_out = 2 * n_in;
    ax.i0.resize(n_out);
    ax.i1.resize(n_out);
    ax.w0.resize(n_out);
    ax.w1.resize(n_out);
    for (int i = 0; i < n_out; ++i) {
        double src = (i + 0.5) / 2.0 - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = static_cast<int>(src);
        if (lo > n_in - 1) lo = n_in - 1;
        int hi = std::min(lo + 1, n_in - 1);
        double frac = src - lo;
        ax.i0[i] = lo;
        ax.i1[i] = hi;
        ax.w0[i] = 1.0 - frac;
        ax.w1[i] = frac;
    }
    return ax;
}

void check_chw(const TensorPtr& t, const char* what) {
    if (t->rank() != 3) {
        throw ShapeError(std::string(what) + " expects a (C,H,W) tensor, got " + t->shape_str());
    }
}

}  // namespace

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias) {
    check_chw(input, "conv2d");
    if (weight->rank() != 4) {
        throw ShapeError("conv2d weight must be (Cout,Cin,k,k), got " + weight->shape_str());
    }
    const int cin = input->dim(0), h = input->dim(1), w = input->dim(2);
    const int cout = weight->dim(0);
    const int k = weight->dim(2);
    if (weight->dim(3) != k) {
        throw ShapeError("conv2d kernel must be square, got " + weight->shape_str());
    }
    if (k % 2 == 0) throw ConfigError("conv2d kernel size must be odd, got " + std::to_string(k));
    if (weight->dim(1) != cin) {
        throw ShapeError("conv2d channel mismatch: input " + input->shape_str() + " vs weight " +
                         weight->shape_str());
    }
    if (bias->rank() != 1 || bias->dim(0) != cout) {
        throw ShapeError("conv2d bias must be (Cout), got " + bias->shape_str());
    }

    const int hw = h * w;
    const int krows = cin * k * k;
    std::vector<double> col(static_cast<size_t>(krows) * hw);
    im2col(input->data.data(), cin, h, w, k, col.data());

    auto out = Tensor::zeros({cout, h, w});
    gemm_acc(cout, hw, krows, weight->data.data(), col.data(), out->data.data());
    for (int c = 0; c < cout; ++c) {
        const double b = bias->data[static_cast<size_t>(c)];
        double* row = out->data.data() + static_cast<size_t>(c) * hw;
        for (int j = 0; j < hw; ++j) row[j] += b;
    }
    require_finite(*out, "conv2d");

    tape.record({input, weight, bias}, out, [input, weight, bias, out, cin, h, w, k, cout]() {
        const int hw = h * w;
        const int krows = cin * k * k;
        const double* g = out->grad.data();
        if (weight->needs_grad || bias->needs_grad) {
            if (bias->needs_grad) {
                bias->ensure_grad();
                for (int c = 0; c < cout; ++c) {
                    const double* grow = g + static_cast<size_t>(c) * hw;
                    double s = 0.0;
                    for (int j = 0; j < hw; ++j) s += grow[j];
                    bias->grad[static_cast<size_t>(c)] += s;
                }
            }
            if (weight->needs_grad) {
                weight->ensure_grad();
                std::vector<double> col(static_cast<size_t>(krows) * hw);
                im2col(input->data.data(), cin, h, w, k, col.data());
                gemm_bt_acc(cout, krows, hw, g, col.data(), weight->grad.data());
            }
        }
        if (input->needs_grad) {
            input->ensure_grad();
            std::vector<double> colgrad(static_cast<size_t>(krows) * hw, 0.0);
            gemm_at_acc(cout, krows, hw, weight->data.data(), g, colgrad.data());
            col2im_add(colgrad.data(), cin, h, w, k, input->grad.data());
        }
    });
    return out;
}

TensorPtr maxpool2(Tape& tape, const TensorPtr& input) {
    check_chw(input, "maxpool2");
    const int c = input->dim(0), h = input->dim(1), w = input->dim(2);
    if (h < 2 || w < 2) {
        throw ShapeError("maxpool2 needs H,W >= 2, got " + input->shape_str());
    }
    const int ho = h / 2, wo = w / 2;
    auto out = Tensor::zeros({c, ho, wo});
    std::vector<int> argmax(static_cast<size_t>(c) * ho * wo);
    const double* in = input->data.data();
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + static_cast<size_t>(ch) * h * w;
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                const int r = 2 * i, cc = 2 * j;
                // Row-major scan of the window; strict > keeps the first max.
                int best = r * w + cc;
                double bv = plane[best];
                const int cand[3] = {r * w + cc + 1, (r + 1) * w + cc, (r + 1) * w + cc + 1};
                for (int t = 0; t < 3; ++t) {
                    if (plane[cand[t]] > bv) {
                        bv = plane[cand[t]];
                        best = cand[t];
                    }
                }
                const size_t oi = (static_cast<size_t>(ch) * ho + i) * wo + j;
                out->data[oi] = bv;
                argmax[oi] = ch * h * w + best;
            }
        }
    }
    require_finite(*out, "maxpool2");

    tape.record({input}, out, [input, out, argmax = std::move(argmax)]() {
        if (!input->needs_grad) return;
        input->ensure_grad();
        for (size_t i = 0; i < argmax.size(); ++i) {
            input->grad[static_cast<size_t>(argmax[i])] += out->grad[i];
        }
    });
    return out;
}

TensorPtr relu(Tape& tape, const TensorPtr& input) {
    auto out = Tensor::zeros(input->shape);
    for (size_t i = 0; i < input->data.size(); ++i) {
        out->data[i] = input->data[i] > 0.0 ? input->data[i] : 0.0;
    }
    require_finite(*out, "relu");
    tape.record({input}, out, [input, out]() {
        if (!input->needs_grad) return;
        input->ensure_grad();
        for (size_t i = 0; i < input->data.size(); ++i) {
            if (input->data[i] > 0.0) input->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr upsample2_bilinear(Tape& tape, const TensorPtr& input) {
    check_chw(input, "upsample2_bilinear");
    const int c = input->dim(0), h = input->dim(1), w = input->dim(2);
    const int ho = 2 * h, wo = 2 * w;
    UpsampleAxis ay = make_upsample_axis(h);
    UpsampleAxis ax = make_upsample_axis(w);
    auto out = Tensor::zeros({c, ho, wo});
    const double* in = input->data.data();
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + static_cast<size_t>(ch) * h * w;
        double* oplane = out->data.data() + static_cast<size_t>(ch) * ho * wo;
        for (int i = 0; i < ho; ++i) {
            const double* r0 = plane + static_cast<size_t>(ay.i0[i]) * w;
            const double* r1 = plane + static_cast<size_t>(ay.i1[i]) * w;
            const double wy0 = ay.w0[i], wy1 = ay.w1[i];
            double* orow = oplane + static_cast<size_t>(i) * wo;
            for (int j = 0; j < wo; ++j) {
                orow[j] = wy0 * (ax.w0[j] * r0[ax.i0[j]] + ax.w1[j] * r0[ax.i1[j]]) +
                          wy1 * (ax.w0[j] * r1[ax.i0[j]] + ax.w1[j] * r1[ax.i1[j]]);
            }
        }
    }
    require_finite(*out, "upsample2_bilinear");

    tape.record({input}, out, [input, out, ay = std::move(ay), ax = std::move(ax), c, h, w]() {
        if (!input->needs_grad) return;
        input->ensure_grad();
        const int ho = 2 * h, wo = 2 * w;
        for (int ch = 0; ch < c; ++ch) {
            double* gplane = input->grad.data() + static_cast<size_t>(ch) * h * w;
            const double* oplane = out->grad.data() + static_cast<size_t>(ch) * ho * wo;
            for (int i = 0; i < ho; ++i) {
                double* g0 = gplane + static_cast<size_t>(ay.i0[i]) * w;
                double* g1 = gplane + static_cast<size_t>(ay.i1[i]) * w;
                const double wy0 = ay.w0[i], wy1 = ay.w1[i];
                const double* orow = oplane + static_cast<size_t>(i) * wo;
                for (int j = 0; j < wo; ++j) {
                    const double g = orow[j];
                    g0[ax.i0[j]] += wy0 * ax.w0[j] * g;
                    g0[ax.i1[j]] += wy0 * ax.w1[j] * g;
                    g1[ax.i0[j]] += wy1 * ax.w0[j] * g;
                    g1[ax.i1[j]] += wy1 * ax.w1[j] * g;
                }
            }
        }
    });
    return out;
}

TensorPtr concat_channels(Tape& tape, const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels needs at least one part");
    check_chw(parts[0], "concat_channels");
    const int h = parts[0]->dim(1), w = parts[0]->dim(2);
    int ctot = 0;
    for (const auto& p : parts) {
        check_chw(p, "concat_channels");
        if (p->dim(1) != h || p->dim(2) != w) {
            throw ShapeError("concat_channels spatial mismatch: " + parts[0]->shape_str() +
                             " vs " + p->shape_str());
        }
        ctot += p->dim(0);
    }
    auto out = Tensor::zeros({ctot, h, w});
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
        off += p->data.size();
    }
    tape.record(parts, out, [parts, out]() {
        size_t off = 0;
        for (const auto& p : parts) {
            if (p->needs_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += out->grad[off + i];
            }
            off += p->data.size();
        }
    });
    return out;
}

namespace detail {
void block_sum_plane(const double* in, int h, int w, int factor, double* out) {
    const int ho = h / factor, wo = w / factor;
    for (int i = 0; i < ho; ++i) {
        for (int j = 0; j < wo; ++j) {
            double s = 0.0;
            for (int bi = 0; bi < factor; ++bi) {
                const double* row = in + static_cast<size_t>(i * factor + bi) * w + j * factor;
                for (int bj = 0; bj < factor; ++bj) s += row[bj];
            }
            out[static_cast<size_t>(i) * wo + j] = s;
        }
    }
}
}  // namespace detail

TensorPtr block_sum(Tape& tape, const TensorPtr& input, int factor) {
    check_chw(input, "block_sum");
    if (factor < 1) throw ConfigError("block_sum factor must be >= 1");
    const int c = input->dim(0), h = input->dim(1), w = input->dim(2);
    if (h % factor != 0 || w % factor != 0) {
        throw ShapeError("block_sum: dims " + input->shape_str() + " not divisible by " +
                         std::to_string(factor));
    }
    const int ho = h / factor, wo = w / factor;
    auto out = Tensor::zeros({c, ho, wo});
    for (int ch = 0; ch < c; ++ch) {
        detail::block_sum_plane(input->data.data() + static_cast<size_t>(ch) * h * w, h, w,
                                factor, out->data.data() + static_cast<size_t>(ch) * ho * wo);
    }
    tape.record({input}, out, [input, out, factor, c, h, w]() {
        if (!input->needs_grad) return;
        input->ensure_grad();
        const int ho = h / factor, wo = w / factor;
        for (int ch = 0; ch < c; ++ch) {
            const double* gp = out->grad.data() + static_cast<size_t>(ch) * ho * wo;
            double* ip = input->grad.data() + static_cast<size_t>(ch) * h * w;
            for (int i = 0; i < h; ++i) {
                const double* grow = gp + static_cast<size_t>(i / factor) * wo;
                double* irow = ip + static_cast<size_t>(i) * w;
                for (int j = 0; j < w; ++j) irow[j] += grow[j / factor];
            }
        }
    });
    return out;
}

TensorPtr sum_squared_error(Tape& tape, const TensorPtr& pred, const TensorPtr& target) {
    if (!same_shape(*pred, *target)) {
        throw ShapeError("sum_squared_error shape mismatch: " + pred->shape_str() + " vs " +
                         target->shape_str());
    }
    double s = 0.0;
    for (size_t i = 0; i < pred->data.size(); ++i) {
        const double d = pred->data[i] - target->data[i];
        s += d * d;
    }
    auto out = Tensor::scalar(s);
    require_finite(*out, "sum_squared_error");
    tape.record({pred, target}, out, [pred, target, out]() {
        const double g = out->grad[0];
        if (pred->needs_grad) {
            pred->ensure_grad();
            for (size_t i = 0; i < pred->data.size(); ++i) {
                pred->grad[i] += 2.0 * (pred->data[i] - target->data[i]) * g;
            }
        }
        if (target->needs_grad) {
            target->ensure_grad();
            for (size_t i = 0; i < target->data.size(); ++i) {
                target->grad[i] -= 2.0 * (pred->data[i] - target->data[i]) * g;
            }
        }
    });
    return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (!same_shape(*a, *b)) {
        throw ShapeError("add shape mismatch: " + a->shape_str() + " vs " + b->shape_str());
    }
    auto out = Tensor::zeros(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    require_finite(*out, "add");
    tape.record({a, b}, out, [a, b, out]() {
        for (const auto& t : {a, b}) {
            if (!t->needs_grad) continue;
            t->ensure_grad();
            for (size_t i = 0; i < t->data.size(); ++i) t->grad[i] += out->grad[i];
        }
    });
    return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& a, double c) {
    if (!std::isfinite(c)) throw ConfigError("scale factor must be finite");
    auto out = Tensor::zeros(a->shape);
    for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = c * a->data[i];
    require_finite(*out, "scale");
    tape.record({a}, out, [a, out, c]() {
        if (!a->needs_grad) return;
        a->ensure_grad();
        for (size_t i = 0; i < a->data.size(); ++i) a->grad[i] += c * out->grad[i];
    });
    return out;
}

TensorPtr slice_channels(const TensorPtr& t, int c0, int c1) {
    check_chw(t, "slice_channels");
    const int c = t->dim(0), h = t->dim(1), w = t->dim(2);
    if (c0 < 0 || c1 > c || c0 >= c1) {
        throw ShapeError("slice_channels range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") out of " + std::to_string(c));
    }
    auto out = Tensor::zeros({c1 - c0, h, w});
    const size_t plane = static_cast<size_t>(h) * w;
    std::copy(t->data.begin() + c0 * plane, t->data.begin() + c1 * plane, out->data.begin());
    return out;
}

}  // namespace iccnn
