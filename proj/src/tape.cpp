#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "errors.hpp"

namespace smac {

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<size_t>(p) * m;
        const double* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                s0 += arow[p] * brow[p];
                s1 += arow[p + 1] * brow[p + 1];
                s2 += arow[p + 2] * brow[p + 2];
                s3 += arow[p + 3] * brow[p + 3];
            }
            for (; p < k; ++p) s0 += arow[p] * brow[p];
            c[static_cast<size_t>(i) * n + j] += (s0 + s1) + (s2 + s3);
        }
    }
}

Var Tape::push(Tensor out) {
    Node node;
    node.out = std::move(out);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_vjp(Var v, std::function<void()> vjp) {
    nodes_[static_cast<size_t>(v.id)].vjp = std::move(vjp);
}

Tensor& Tape::grad_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.touched) {
        n.grad = Tensor::zeros(n.out.shape());
        n.touched = true;
    }
    return n.grad;
}

const Tensor& Tape::node_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

Var Tape::leaf(Tensor t) { return push(std::move(t)); }

Var Tape::param(Parameter& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return Var{it->second};
    Var v = push(p.value);
    Parameter* bound = &p;
    const int self = v.id;
    nodes_[static_cast<size_t>(self)].bound = bound;
    set_vjp(v, [this, self, bound]() {
        const Tensor& g = node_grad(self);
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) bound->grad[i] += g[i];
    });
    param_cache_.emplace(&p, v.id);
    return v;
}

void Tape::backward(Var loss) {
    if (!loss.valid() || loss.id >= static_cast<int>(nodes_.size()))
        throw NumericError("backward: invalid loss variable");
    if (nodes_[static_cast<size_t>(loss.id)].out.numel() != 1)
        throw NumericError("backward requires a scalar loss, got shape " +
                           nodes_[static_cast<size_t>(loss.id)].out.shape_str());
    for (Node& n : nodes_) n.touched = false;
    grad_of(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.touched && n.vjp) n.vjp();
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0))
        throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " and " + tb.shape_str());
    const int m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out({m, n});
    gemm_nn(ta.data(), tb.data(), out.data(), m, k, n);
    Var v = push(std::move(out));
    const int self = v.id, aid = a.id, bid = b.id;
    set_vjp(v, [this, self, aid, bid, m, k, n]() {
        const Tensor& g = node_grad(self);
        // dA = dC * B^T, dB = A^T * dC
        gemm_nt(g.data(), val(Var{bid}).data(), grad_of(aid).data(), m, n, k);
        gemm_tn(val(Var{aid}).data(), g.data(), grad_of(bid).data(), k, m, n);
    });
    return v;
}

Var Tape::transpose2d(Var a) {
    const Tensor& ta = val(a);
    if (ta.rank() != 2) throw ShapeError("transpose2d: expected rank-2, got " + ta.shape_str());
    const int r = ta.dim(0), c = ta.dim(1);
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at2(j, i) = ta.at2(i, j);
    Var v = push(std::move(out));
    const int self = v.id, aid = a.id;
    set_vjp(v, [this, self, aid, r, c]() {
        const Tensor& g = node_grad(self);
        Tensor& da = grad_of(aid);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) da.at2(i, j) += g.at2(j, i);
    });
    return v;
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const Tensor& tb = val(b);
    const int n = static_cast<int>(tx.numel());
    if (tw.rank() != 2 || tw.dim(1) != n)
        throw ShapeError("linear: weight " + tw.shape_str() + " does not accept input of length " +
                         std::to_string(n));
    const int m = tw.dim(0);
    if (tb.numel() != m) throw ShapeError("linear: bias length mismatch");
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        const double* wrow = tw.data() + static_cast<size_t>(i) * n;
        double s = tb[i];
        for (int j = 0; j < n; ++j) s += wrow[j] * tx[j];
        out[i] = s;
    }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id, wid = w.id, bid = b.id;
    set_vjp(v, [this, self, xid, wid, bid, m, n]() {
        const Tensor& g = node_grad(self);
        const Tensor& tx = val(Var{xid});
        const Tensor& tw = val(Var{wid});
        Tensor& dx = grad_of(xid);
        Tensor& dw = grad_of(wid);
        Tensor& db = grad_of(bid);
        for (int i = 0; i < m; ++i) {
            const double gi = g[i];
            const double* wrow = tw.data() + static_cast<size_t>(i) * n;
            double* dwrow = dw.data() + static_cast<size_t>(i) * n;
            db[i] += gi;
            for (int j = 0; j < n; ++j) {
                dx[j] += gi * wrow[j];
                dwrow[j] += gi * tx[j];
            }
        }
    });
    return v;
}

namespace {

struct ConvGeom {
    int c_in, h, w;
    int c_out, k;
    int stride, dilation;
    int out_h, out_w;
    int pad_top, pad_left;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, int stride, int dilation) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be CxHxW, got " + x.shape_str());
    if (w.rank() != 4 || w.dim(2) != w.dim(3))
        throw ShapeError("conv2d: weight must be [C_out x C_in x k x k], got " + w.shape_str());
    if (w.dim(1) != x.dim(0))
        throw ShapeError("conv2d: input channels " + x.shape_str() + " do not match weight " +
                         w.shape_str());
    const int k = w.dim(2);
    if (k != 1 && k != 3) throw ShapeError("conv2d: kernel size must be 1 or 3");
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    if (dilation < 1) throw ShapeError("conv2d: dilation must be >= 1");
    ConvGeom g;
    g.c_in = x.dim(0);
    g.h = x.dim(1);
    g.w = x.dim(2);
    g.c_out = w.dim(0);
    g.k = k;
    g.stride = stride;
    g.dilation = dilation;
    g.out_h = (g.h + stride - 1) / stride;
    g.out_w = (g.w + stride - 1) / stride;
    const int ke = (k - 1) * dilation + 1;
    const int pad_h = std::max(0, (g.out_h - 1) * stride + ke - g.h);
    const int pad_w = std::max(0, (g.out_w - 1) * stride + ke - g.w);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
}

// col is [(c_in*k*k) x (out_h*out_w)]
void im2col(const Tensor& x, const ConvGeom& g, std::vector<double>& col) {
    const int cols = g.out_h * g.out_w;
    col.assign(static_cast<size_t>(g.c_in) * g.k * g.k * cols, 0.0);
    size_t row = 0;
    for (int ci = 0; ci < g.c_in; ++ci) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx, ++row) {
                double* dst = col.data() + row * cols;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride + ky * g.dilation - g.pad_top;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride + kx * g.dilation - g.pad_left;
                        if (ix < 0 || ix >= g.w) continue;
                        dst[oy * g.out_w + ox] = x.at3(ci, iy, ix);
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<double>& col, const ConvGeom& g, Tensor& dx) {
    const int cols = g.out_h * g.out_w;
    size_t row = 0;
    for (int ci = 0; ci < g.c_in; ++ci) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx, ++row) {
                const double* src = col.data() + row * cols;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride + ky * g.dilation - g.pad_top;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride + kx * g.dilation - g.pad_left;
                        if (ix < 0 || ix >= g.w) continue;
                        dx.at3(ci, iy, ix) += src[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Var Tape::conv2d(Var x, Var w, Var b, int stride, int dilation) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    const ConvGeom g = conv_geometry(tx, tw, stride, dilation);
    if (b.valid() && val(b).numel() != g.c_out)
        throw ShapeError("conv2d: bias length does not match output channels");

    std::vector<double> col;
    im2col(tx, g, col);
    const int kk = g.c_in * g.k * g.k;
    const int cols = g.out_h * g.out_w;
    Tensor out({g.c_out, g.out_h, g.out_w});
    gemm_nn(tw.data(), col.data(), out.data(), g.c_out, kk, cols);
    if (b.valid()) {
        const Tensor& tb = val(b);
        for (int co = 0; co < g.c_out; ++co) {
            double* orow = out.data() + static_cast<size_t>(co) * cols;
            const double bv = tb[co];
            for (int i = 0; i < cols; ++i) orow[i] += bv;
        }
    }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id, wid = w.id, bid = b.valid() ? b.id : -1;
    set_vjp(v, [this, self, xid, wid, bid, g, kk, cols]() {
        const Tensor& gy = node_grad(self);
        const Tensor& tx = val(Var{xid});
        const Tensor& tw = val(Var{wid});
        if (bid >= 0) {
            Tensor& db = grad_of(bid);
            for (int co = 0; co < g.c_out; ++co) {
                const double* grow = gy.data() + static_cast<size_t>(co) * cols;
                double s = 0.0;
                for (int i = 0; i < cols; ++i) s += grow[i];
                db[co] += s;
            }
        }
        std::vector<double> col;
        im2col(tx, g, col); // recomputed to keep forward nodes light
        gemm_nt(gy.data(), col.data(), grad_of(wid).data(), g.c_out, cols, kk);
        std::vector<double> dcol(static_cast<size_t>(kk) * cols, 0.0);
        gemm_tn(tw.data(), gy.data(), dcol.data(), kk, g.c_out, cols);
        col2im_add(dcol, g, grad_of(xid));
    });
    return v;
}

Var Tape::maxpool(Var x, int kernel, int stride) {
    const Tensor& tx = val(x);
    if (tx.rank() != 3) throw ShapeError("maxpool: input must be CxHxW");
    const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    if (kernel > h || kernel > w)
        throw ShapeError("maxpool: kernel " + std::to_string(kernel) + " larger than input " +
                         tx.shape_str());
    const int oh = (h - kernel) / stride + 1;
    const int ow = (w - kernel) / stride + 1;
    Tensor out({c, oh, ow});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(c) * oh * ow);
    for (int ci = 0; ci < c; ++ci) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -1e300;
                int best_idx = -1;
                for (int ky = 0; ky < kernel; ++ky) {
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int iy = oy * stride + ky, ix = ox * stride + kx;
                        const double v = tx.at3(ci, iy, ix);
                        if (v > best) { // first-index tie-break: strict comparison
                            best = v;
                            best_idx = iy * w + ix;
                        }
                    }
                }
                out.at3(ci, oy, ox) = best;
                (*argmax)[(static_cast<size_t>(ci) * oh + oy) * ow + ox] = best_idx;
            }
        }
    }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, argmax, c, h, w, oh, ow]() {
        const Tensor& gy = node_grad(self);
        Tensor& dx = grad_of(xid);
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const int idx = (*argmax)[(static_cast<size_t>(ci) * oh + oy) * ow + ox];
                    dx[static_cast<int64_t>(ci) * h * w + idx] += gy.at3(ci, oy, ox);
                }
    });
    return v;
}

Var Tape::avgpool(Var x, int kernel, int stride) {
    const Tensor& tx = val(x);
    if (tx.rank() != 3) throw ShapeError("avgpool: input must be CxHxW");
    const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    if (kernel > h || kernel > w)
        throw ShapeError("avgpool: kernel " + std::to_string(kernel) + " larger than input " +
                         tx.shape_str());
    const int oh = (h - kernel) / stride + 1;
    const int ow = (w - kernel) / stride + 1;
    const double inv = 1.0 / (kernel * kernel);
    Tensor out({c, oh, ow});
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = 0.0;
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx)
                        s += tx.at3(ci, oy * stride + ky, ox * stride + kx);
                out.at3(ci, oy, ox) = s * inv;
            }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, c, oh, ow, kernel, stride, inv]() {
        const Tensor& gy = node_grad(self);
        Tensor& dx = grad_of(xid);
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double gv = gy.at3(ci, oy, ox) * inv;
                    for (int ky = 0; ky < kernel; ++ky)
                        for (int kx = 0; kx < kernel; ++kx)
                            dx.at3(ci, oy * stride + ky, ox * stride + kx) += gv;
                }
    });
    return v;
}

Var Tape::global_avgpool(Var x) {
    const Tensor& tx = val(x);
    if (tx.rank() != 3) throw ShapeError("global_avgpool: input must be CxHxW");
    const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor out({c, 1, 1});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        const double* row = tx.data() + static_cast<size_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) s += row[i];
        out[ci] = s * inv;
    }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, c, h, w, inv]() {
        const Tensor& gy = node_grad(self);
        Tensor& dx = grad_of(xid);
        for (int ci = 0; ci < c; ++ci) {
            const double gv = gy[ci] * inv;
            double* row = dx.data() + static_cast<size_t>(ci) * h * w;
            for (int i = 0; i < h * w; ++i) row[i] += gv;
        }
    });
    return v;
}

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<double> f;
};

// align-corners=false source coordinates
LerpAxis lerp_axis(int in, int out) {
    LerpAxis a;
    a.i0.resize(static_cast<size_t>(out));
    a.i1.resize(static_cast<size_t>(out));
    a.f.resize(static_cast<size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        if (src > in - 1) src = in - 1;
        const int lo = static_cast<int>(std::floor(src));
        a.i0[static_cast<size_t>(o)] = lo;
        a.i1[static_cast<size_t>(o)] = std::min(lo + 1, in - 1);
        a.f[static_cast<size_t>(o)] = src - lo;
    }
    return a;
}

} // namespace

Var Tape::upsample_bilinear(Var x, int out_h, int out_w) {
    const Tensor& tx = val(x);
    if (tx.rank() != 3) throw ShapeError("upsample_bilinear: input must be CxHxW");
    if (out_h < 1 || out_w < 1) throw ShapeError("upsample_bilinear: output size must be >= 1");
    const int c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    auto ay = std::make_shared<LerpAxis>(lerp_axis(h, out_h));
    auto ax = std::make_shared<LerpAxis>(lerp_axis(w, out_w));
    Tensor out({c, out_h, out_w});
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = ay->i0[static_cast<size_t>(oy)], y1 = ay->i1[static_cast<size_t>(oy)];
            const double fy = ay->f[static_cast<size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
                const int x0 = ax->i0[static_cast<size_t>(ox)], x1 = ax->i1[static_cast<size_t>(ox)];
                const double fx = ax->f[static_cast<size_t>(ox)];
                out.at3(ci, oy, ox) = (1 - fy) * ((1 - fx) * tx.at3(ci, y0, x0) + fx * tx.at3(ci, y0, x1)) +
                                      fy * ((1 - fx) * tx.at3(ci, y1, x0) + fx * tx.at3(ci, y1, x1));
            }
        }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, ay, ax, c, out_h, out_w]() {
        const Tensor& gy = node_grad(self);
        Tensor& dx = grad_of(xid);
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < out_h; ++oy) {
                const int y0 = ay->i0[static_cast<size_t>(oy)], y1 = ay->i1[static_cast<size_t>(oy)];
                const double fy = ay->f[static_cast<size_t>(oy)];
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = ax->i0[static_cast<size_t>(ox)], x1 = ax->i1[static_cast<size_t>(ox)];
                    const double fx = ax->f[static_cast<size_t>(ox)];
                    const double g = gy.at3(ci, oy, ox);
                    dx.at3(ci, y0, x0) += (1 - fy) * (1 - fx) * g;
                    dx.at3(ci, y0, x1) += (1 - fy) * fx * g;
                    dx.at3(ci, y1, x0) += fy * (1 - fx) * g;
                    dx.at3(ci, y1, x1) += fy * fx * g;
                }
            }
    });
    return v;
}

Var Tape::batchnorm(Var x, Var gamma, Var beta, Tensor& run_mean, Tensor& run_var,
                    bool train, double momentum, double eps) {
    const Tensor& tx = val(x);
    if (tx.rank() != 3) throw ShapeError("batchnorm: input must be CxHxW");
    const int c = tx.dim(0);
    const int spatial = tx.dim(1) * tx.dim(2);
    if (spatial < 1) throw ShapeError("batchnorm: empty spatial extent");
    if (val(gamma).numel() != c || val(beta).numel() != c ||
        run_mean.numel() != c || run_var.numel() != c)
        throw ShapeError("batchnorm: per-channel parameter length mismatch");

    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
    auto xhat = std::make_shared<Tensor>(tx.shape());
    const Tensor& tg = val(gamma);
    const Tensor& tb = val(beta);
    Tensor out(tx.shape());
    for (int ci = 0; ci < c; ++ci) {
        const double* row = tx.data() + static_cast<size_t>(ci) * spatial;
        double mean, var;
        if (train) {
            double s = 0.0;
            for (int i = 0; i < spatial; ++i) s += row[i];
            mean = s / spatial;
            double v2 = 0.0;
            for (int i = 0; i < spatial; ++i) {
                const double d = row[i] - mean;
                v2 += d * d;
            }
            var = v2 / spatial;
            run_mean[ci] = (1.0 - momentum) * run_mean[ci] + momentum * mean;
            run_var[ci] = (1.0 - momentum) * run_var[ci] + momentum * var;
        } else {
            mean = run_mean[ci];
            var = run_var[ci];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(ci)] = inv;
        double* xh = xhat->data() + static_cast<size_t>(ci) * spatial;
        double* orow = out.data() + static_cast<size_t>(ci) * spatial;
        const double g = tg[ci], b = tb[ci];
        for (int i = 0; i < spatial; ++i) {
            xh[i] = (row[i] - mean) * inv;
            orow[i] = g * xh[i] + b;
        }
    }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id, gid = gamma.id, bid = beta.id;
    set_vjp(v, [this, self, xid, gid, bid, xhat, inv_std, c, spatial, train]() {
        const Tensor& gy = node_grad(self);
        const Tensor& tg = val(Var{gid});
        Tensor& dx = grad_of(xid);
        Tensor& dgamma = grad_of(gid);
        Tensor& dbeta = grad_of(bid);
        for (int ci = 0; ci < c; ++ci) {
            const double* gr = gy.data() + static_cast<size_t>(ci) * spatial;
            const double* xh = xhat->data() + static_cast<size_t>(ci) * spatial;
            double* dxr = dx.data() + static_cast<size_t>(ci) * spatial;
            double sum_gy = 0.0, sum_gy_xh = 0.0;
            for (int i = 0; i < spatial; ++i) {
                sum_gy += gr[i];
                sum_gy_xh += gr[i] * xh[i];
            }
            dgamma[ci] += sum_gy_xh;
            dbeta[ci] += sum_gy;
            const double scale = tg[ci] * (*inv_std)[static_cast<size_t>(ci)];
            if (train) {
                const double mg = sum_gy / spatial;
                const double mgx = sum_gy_xh / spatial;
                for (int i = 0; i < spatial; ++i)
                    dxr[i] += scale * (gr[i] - mg - xh[i] * mgx);
            } else {
                for (int i = 0; i < spatial; ++i) dxr[i] += scale * gr[i];
            }
        }
    });
    return v;
}

Var Tape::concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_ch: no inputs");
    const Tensor& t0 = val(xs[0]);
    if (t0.rank() != 3) throw ShapeError("concat_ch: inputs must be CxHxW");
    const int h = t0.dim(1), w = t0.dim(2);
    int total_c = 0;
    for (Var x : xs) {
        const Tensor& t = val(x);
        if (t.rank() != 3 || t.dim(1) != h || t.dim(2) != w)
            throw ShapeError("concat_ch: spatial mismatch between " + t0.shape_str() + " and " +
                             t.shape_str());
        total_c += t.dim(0);
    }
    Tensor out({total_c, h, w});
    auto ids = std::make_shared<std::vector<int>>();
    auto chans = std::make_shared<std::vector<int>>();
    int64_t offset = 0;
    for (Var x : xs) {
        const Tensor& t = val(x);
        std::memcpy(out.data() + offset, t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
        offset += t.numel();
        ids->push_back(x.id);
        chans->push_back(t.dim(0));
    }
    Var v = push(std::move(out));
    const int self = v.id;
    set_vjp(v, [this, self, ids, chans, h, w]() {
        const Tensor& gy = node_grad(self);
        int64_t offset = 0;
        for (size_t i = 0; i < ids->size(); ++i) {
            Tensor& dx = grad_of((*ids)[i]);
            const int64_t n = static_cast<int64_t>((*chans)[i]) * h * w;
            for (int64_t j = 0; j < n; ++j) dx[j] += gy[offset + j];
            offset += n;
        }
    });
    return v;
}

Var Tape::softmax_rows(Var x) {
    const Tensor& tx = val(x);
    if (tx.rank() != 2) throw ShapeError("softmax_rows: input must be rank-2, got " + tx.shape_str());
    const int r = tx.dim(0), c = tx.dim(1);
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
        const double* row = tx.data() + static_cast<size_t>(i) * c;
        double* orow = out.data() + static_cast<size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            s += orow[j];
        }
        const double inv = 1.0 / s;
        for (int j = 0; j < c; ++j) orow[j] *= inv;
    }
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, r, c]() {
        const Tensor& gy = node_grad(self);
        const Tensor& y = val(Var{self});
        Tensor& dx = grad_of(xid);
        for (int i = 0; i < r; ++i) {
            const double* gr = gy.data() + static_cast<size_t>(i) * c;
            const double* yr = y.data() + static_cast<size_t>(i) * c;
            double* dxr = dx.data() + static_cast<size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += gr[j] * yr[j];
            for (int j = 0; j < c; ++j) dxr[j] += yr[j] * (gr[j] - dot);
        }
    });
    return v;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

} // namespace

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_same_shape(ta, tb, "add");
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] + tb[i];
    Var v = push(std::move(out));
    const int self = v.id, aid = a.id, bid = b.id;
    set_vjp(v, [this, self, aid, bid, n]() {
        const Tensor& g = node_grad(self);
        Tensor& da = grad_of(aid);
        Tensor& db = grad_of(bid);
        for (int64_t i = 0; i < n; ++i) {
            da[i] += g[i];
            db[i] += g[i];
        }
    });
    return v;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_same_shape(ta, tb, "sub");
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] - tb[i];
    Var v = push(std::move(out));
    const int self = v.id, aid = a.id, bid = b.id;
    set_vjp(v, [this, self, aid, bid, n]() {
        const Tensor& g = node_grad(self);
        Tensor& da = grad_of(aid);
        Tensor& db = grad_of(bid);
        for (int64_t i = 0; i < n; ++i) {
            da[i] += g[i];
            db[i] -= g[i];
        }
    });
    return v;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    check_same_shape(ta, tb, "mul");
    Tensor out(ta.shape());
    const int64_t n = ta.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = ta[i] * tb[i];
    Var v = push(std::move(out));
    const int self = v.id, aid = a.id, bid = b.id;
    set_vjp(v, [this, self, aid, bid, n]() {
        const Tensor& g = node_grad(self);
        const Tensor& ta = val(Var{aid});
        const Tensor& tb = val(Var{bid});
        Tensor& da = grad_of(aid);
        Tensor& db = grad_of(bid);
        for (int64_t i = 0; i < n; ++i) {
            da[i] += g[i] * tb[i];
            db[i] += g[i] * ta[i];
        }
    });
    return v;
}

Var Tape::scale(Var x, double cst) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    const int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = tx[i] * cst;
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, cst, n]() {
        const Tensor& g = node_grad(self);
        Tensor& dx = grad_of(xid);
        for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * cst;
    });
    return v;
}

Var Tape::scale_by(Var x, Var s) {
    const Tensor& tx = val(x);
    const Tensor& ts = val(s);
    if (ts.numel() != 1) throw ShapeError("scale_by: scale must be a single element");
    const double sv = ts[0];
    Tensor out(tx.shape());
    const int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = tx[i] * sv;
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id, sid = s.id;
    set_vjp(v, [this, self, xid, sid, sv, n]() {
        const Tensor& g = node_grad(self);
        const Tensor& tx = val(Var{xid});
        Tensor& dx = grad_of(xid);
        Tensor& ds = grad_of(sid);
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            dx[i] += g[i] * sv;
            acc += g[i] * tx[i];
        }
        ds[0] += acc;
    });
    return v;
}

Var Tape::relu(Var x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    const int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = tx[i] > 0 ? tx[i] : 0.0;
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, n]() {
        const Tensor& g = node_grad(self);
        const Tensor& tx = val(Var{xid});
        Tensor& dx = grad_of(xid);
        for (int64_t i = 0; i < n; ++i)
            if (tx[i] > 0) dx[i] += g[i];
    });
    return v;
}

Var Tape::sigmoid(Var x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    const int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-tx[i]));
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, n]() {
        const Tensor& g = node_grad(self);
        const Tensor& y = val(Var{self});
        Tensor& dx = grad_of(xid);
        for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
    return v;
}

Var Tape::exp(Var x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    const int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = std::exp(tx[i]);
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, n]() {
        const Tensor& g = node_grad(self);
        const Tensor& y = val(Var{self});
        Tensor& dx = grad_of(xid);
        for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * y[i];
    });
    return v;
}

Var Tape::reshape(Var x, std::vector<int> shape) {
    const Tensor& tx = val(x);
    if (shape_numel(shape) != tx.numel())
        throw ShapeError("reshape: cannot view " + tx.shape_str() + " as " + shape_to_string(shape));
    Tensor out(std::move(shape));
    std::memcpy(out.data(), tx.data(), static_cast<size_t>(tx.numel()) * sizeof(double));
    Var v = push(std::move(out));
    const int self = v.id, xid = x.id;
    const int64_t n = tx.numel();
    set_vjp(v, [this, self, xid, n]() {
        const Tensor& g = node_grad(self);
        Tensor& dx = grad_of(xid);
        for (int64_t i = 0; i < n; ++i) dx[i] += g[i];
    });
    return v;
}

Var Tape::sum(Var x) {
    const Tensor& tx = val(x);
    double s = 0.0;
    const int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i) s += tx[i];
    Var v = push(Tensor::scalar(s));
    const int self = v.id, xid = x.id;
    set_vjp(v, [this, self, xid, n]() {
        const double g = node_grad(self)[0];
        Tensor& dx = grad_of(xid);
        for (int64_t i = 0; i < n; ++i) dx[i] += g;
    });
    return v;
}

Var Tape::bce_mean(Var pred, const Tensor& gt) {
    const Tensor& tp = val(pred);
    check_same_shape(tp, gt, "bce_mean");
    const int64_t n = tp.numel();
    constexpr double kClamp = 1e-7;
    auto gts = std::make_shared<Tensor>(gt);
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double y = gt[i];
        if (y != 0.0 && y != 1.0)
            throw DataError("bce_mean: ground truth must be binary, found " + std::to_string(y));
        const double p = std::clamp(tp[i], kClamp, 1.0 - kClamp);
        loss += y > 0.5 ? -std::log(p) : -std::log(1.0 - p);
    }
    loss /= static_cast<double>(n);
    Var v = push(Tensor::scalar(loss));
    const int self = v.id, pid = pred.id;
    set_vjp(v, [this, self, pid, gts, n]() {
        const double g = node_grad(self)[0] / static_cast<double>(n);
        const Tensor& tp = val(Var{pid});
        Tensor& dp = grad_of(pid);
        for (int64_t i = 0; i < n; ++i) {
            const double p = tp[i];
            if (p <= kClamp || p >= 1.0 - kClamp) continue; // clamped region: zero slope
            const double y = (*gts)[i];
            dp[i] += g * (y > 0.5 ? -1.0 / p : 1.0 / (1.0 - p));
        }
    });
    return v;
}

} // namespace smac
