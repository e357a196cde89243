#include "headswap/nn/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace headswap::nn {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p)
{
    nodes_.push_back(Node{p.value, {}, {}, {}, &p, p.trainable});
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn fn)
{
    bool req = false;
    for (int p : parents)
        req = req || nodes_[static_cast<std::size_t>(p)].requires_grad;
    nodes_.push_back(Node{std::move(value), {}, std::move(parents), req ? std::move(fn) : BackwardFn{}, nullptr, req});
    return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad_ref(int id)
{
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape())
        n.grad = Tensor(n.value.shape());
    return n.grad;
}

const Tensor& Tape::grad(Var v) const
{
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.shape() != n.value.shape())
        throw std::logic_error("no gradient recorded for this node");
    return n.grad;
}

void Tape::backward(Var loss)
{
    if (loss.tape != this)
        throw std::invalid_argument("loss belongs to a different tape");
    if (value(loss.id).size() != 1)
        throw std::invalid_argument("backward() needs a scalar loss, got " + shape_str(value(loss.id).shape()));
    for (Node& n : nodes_)
        n.grad = Tensor();
    grad_ref(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id)
    {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.size() == 0)
            continue;
        if (n.backward)
            n.backward(*this, id);
        if (n.param != nullptr && n.param->trainable)
        {
            Tensor& pg = n.param->grad;
            if (!pg.same_shape(n.value))
                pg = Tensor(n.value.shape());
            for (std::size_t i = 0; i < pg.size(); ++i)
                pg[i] += n.grad[i];
        }
    }
    // Leaves the loss does not depend on get an explicit zero gradient.
    for (Node& n : nodes_)
        if (n.requires_grad && n.parents.empty() && n.grad.size() != n.value.size())
            n.grad = Tensor(n.value.shape());
}

namespace {

Tape& tape_of(Var a) { return *a.tape; }

void require_same(const Tensor& a, const Tensor& b, const char* op)
{
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

void require_rank(const Tensor& a, std::size_t r, const char* op)
{
    if (a.rank() != r)
        throw std::invalid_argument(std::string("shape mismatch in ") + op + ": expected rank " + std::to_string(r) +
                                    ", got " + shape_str(a.shape()));
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv)
{
    Tape& t = tape_of(a);
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = fwd(x[i]);
    const int ia = a.id;
    return t.record(std::move(y), {ia}, [ia, deriv](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& x = tp.value(ia);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * deriv(x[i], y[i]);
    });
}

} // namespace

Var add(Var a, Var b)
{
    require_same(a.value(), b.value(), "add");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += bv[i];
    const int ia = a.id, ib = b.id;
    return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        for (int p : {ia, ib})
            if (tp.requires_grad(p))
            {
                Tensor& gp = tp.grad_ref(p);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gp[i] += g[i];
            }
    });
}

Var sub(Var a, Var b)
{
    require_same(a.value(), b.value(), "sub");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] -= bv[i];
    const int ia = a.id, ib = b.id;
    return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        if (tp.requires_grad(ia))
        {
            Tensor& ga = tp.grad_ref(ia);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i];
        }
        if (tp.requires_grad(ib))
        {
            Tensor& gb = tp.grad_ref(ib);
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b)
{
    require_same(a.value(), b.value(), "mul");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] *= bv[i];
    const int ia = a.id, ib = b.id;
    return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        if (tp.requires_grad(ia))
        {
            Tensor& ga = tp.grad_ref(ia);
            const Tensor& bv = tp.value(ib);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] * bv[i];
        }
        if (tp.requires_grad(ib))
        {
            Tensor& gb = tp.grad_ref(ib);
            const Tensor& av = tp.value(ia);
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i] += g[i] * av[i];
        }
    });
}

Var div(Var a, Var b)
{
    require_same(a.value(), b.value(), "div");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] /= bv[i];
    const int ia = a.id, ib = b.id;
    return tape_of(a).record(std::move(y), {ia, ib}, [ia, ib](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& bv = tp.value(ib);
        const Tensor& yv = tp.value(self);
        if (tp.requires_grad(ia))
        {
            Tensor& ga = tp.grad_ref(ia);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i] / bv[i];
        }
        if (tp.requires_grad(ib))
        {
            Tensor& gb = tp.grad_ref(ib);
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i] -= g[i] * yv[i] / bv[i];
        }
    });
}

Var scale(Var a, double s)
{
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s)
{
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a)
{
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope)
{
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(Var a)
{
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a)
{
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var sqrt(Var a)
{
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var rsqrt(Var a, double eps)
{
    return unary(
        a, [eps](double x) { return 1.0 / std::sqrt(x + eps); },
        [](double, double y) { return -0.5 * y * y * y; });
}

Var clamp(Var a, double lo, double hi)
{
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return x > lo && x < hi ? 1.0 : 0.0; });
}

Var sum(Var a)
{
    const Tensor& x = a.value();
    double s = 0.0;
    for (double v : x.values())
        s += v;
    const int ia = a.id;
    return tape_of(a).record(Tensor::scalar(s), {ia}, [ia](Tape& tp, int self) {
        const double g = tp.grad_ref(self)[0];
        Tensor& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < ga.size(); ++i)
            ga[i] += g;
    });
}

Var mean(Var a)
{
    const std::size_t n = a.value().size();
    if (n == 0)
        throw std::invalid_argument("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var dot(Var a, Var b)
{
    require_same(a.value(), b.value(), "dot");
    return sum(mul(a, b));
}

Var l1_loss(Var a, Var b)
{
    require_same(a.value(), b.value(), "l1_loss");
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += std::abs(x[i] - y[i]);
    const double n = static_cast<double>(x.size());
    const int ia = a.id, ib = b.id;
    return tape_of(a).record(Tensor::scalar(s / n), {ia, ib}, [ia, ib, n](Tape& tp, int self) {
        const double g = tp.grad_ref(self)[0] / n;
        const Tensor& x = tp.value(ia);
        const Tensor& y = tp.value(ib);
        const bool ra = tp.requires_grad(ia), rb = tp.requires_grad(ib);
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            const double d = x[i] - y[i];
            const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (ra)
                tp.grad_ref(ia)[i] += g * sgn;
            if (rb)
                tp.grad_ref(ib)[i] -= g * sgn;
        }
    });
}

Var mse_loss(Var a, Var b)
{
    require_same(a.value(), b.value(), "mse_loss");
    const Var d = sub(a, b);
    return mean(mul(d, d));
}

Var average(const std::vector<Var>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("average of nothing");
    const Tensor& first = parts.front().value();
    std::vector<int> ids;
    for (const Var& p : parts)
    {
        require_same(first, p.value(), "average");
        ids.push_back(p.id);
    }
    const double m = static_cast<double>(parts.size());
    Tensor y(first.shape());
    std::vector<double> column(parts.size());
    for (std::size_t i = 0; i < y.size(); ++i)
    {
        for (std::size_t k = 0; k < parts.size(); ++k)
            column[k] = parts[k].value()[i];
        std::sort(column.begin(), column.end());
        double s = 0.0;
        for (double v : column)
            s += v;
        y[i] = s / m;
    }
    return tape_of(parts.front()).record(std::move(y), ids, [ids, m](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        for (int p : ids)
        {
            if (!tp.requires_grad(p))
                continue;
            Tensor& gp = tp.grad_ref(p);
            for (std::size_t i = 0; i < g.size(); ++i)
                gp[i] += g[i] / m;
        }
    });
}

Var matmul(Var a, Var b)
{
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank(A, 2, "matmul");
    require_rank(B, 2, "matmul");
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (B.dim(0) != k)
        throw std::invalid_argument("shape mismatch in matmul: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    Tensor C({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p)
        {
            const double aip = A[static_cast<std::size_t>(i) * k + p];
            for (int j = 0; j < n; ++j)
                C[static_cast<std::size_t>(i) * n + j] += aip * B[static_cast<std::size_t>(p) * n + j];
        }
    const int ia = a.id, ib = b.id;
    return tape_of(a).record(std::move(C), {ia, ib}, [ia, ib, m, k, n](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        const Tensor& A = tp.value(ia);
        const Tensor& B = tp.value(ib);
        if (tp.requires_grad(ia))
        {
            Tensor& GA = tp.grad_ref(ia);
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p)
                {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j)
                        s += G[static_cast<std::size_t>(i) * n + j] * B[static_cast<std::size_t>(p) * n + j];
                    GA[static_cast<std::size_t>(i) * k + p] += s;
                }
        }
        if (tp.requires_grad(ib))
        {
            Tensor& GB = tp.grad_ref(ib);
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p)
                {
                    const double aip = A[static_cast<std::size_t>(i) * k + p];
                    for (int j = 0; j < n; ++j)
                        GB[static_cast<std::size_t>(p) * n + j] += aip * G[static_cast<std::size_t>(i) * n + j];
                }
        }
    });
}

Var reshape(Var a, Shape shape)
{
    Tensor y = a.value().reshaped(std::move(shape));
    const int ia = a.id;
    return tape_of(a).record(std::move(y), {ia}, [ia](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        Tensor& ga = tp.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i];
    });
}

Var conv2d(Var x, Var weight, Var bias, int stride)
{
    const Tensor& X = x.value();
    const Tensor& Wt = weight.value();
    const Tensor& Bs = bias.value();
    require_rank(X, 3, "conv2d");
    require_rank(Wt, 4, "conv2d");
    const int C = X.dim(0), H = X.dim(1), W = X.dim(2);
    const int O = Wt.dim(0), K = Wt.dim(2);
    if (Wt.dim(1) != C || Wt.dim(3) != K || K % 2 == 0 || Bs.shape() != Shape{O})
        throw std::invalid_argument("shape mismatch in conv2d: input " + shape_str(X.shape()) + ", weight " +
                                    shape_str(Wt.shape()) + ", bias " + shape_str(Bs.shape()));
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv2d supports stride 1 or 2");
    const int pad = K / 2;
    const int Ho = (H + 2 * pad - K) / stride + 1;
    const int Wo = (W + 2 * pad - K) / stride + 1;

    Tensor Y({O, Ho, Wo});
    for (int o = 0; o < O; ++o)
    {
        double* out = Y.data() + static_cast<std::size_t>(o) * Ho * Wo;
        std::fill(out, out + static_cast<std::size_t>(Ho) * Wo, Bs[static_cast<std::size_t>(o)]);
        for (int c = 0; c < C; ++c)
        {
            const double* in = X.data() + static_cast<std::size_t>(c) * H * W;
            for (int ky = 0; ky < K; ++ky)
                for (int kx = 0; kx < K; ++kx)
                {
                    const double w = Wt[((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx];
                    for (int oy = 0; oy < Ho; ++oy)
                    {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H)
                            continue;
                        const double* row = in + static_cast<std::size_t>(iy) * W;
                        double* orow = out + static_cast<std::size_t>(oy) * Wo;
                        const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                        const int ox_hi = std::min(Wo, (W - 1 - kx + pad) / stride + 1);
                        for (int ox = ox_lo; ox < ox_hi; ++ox)
                            orow[ox] += w * row[ox * stride + kx - pad];
                    }
                }
        }
    }

    const int ix = x.id, iw = weight.id, ib = bias.id;
    return tape_of(x).record(std::move(Y), {ix, iw, ib}, [=](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        const Tensor& X = tp.value(ix);
        const Tensor& Wt = tp.value(iw);
        const bool rx = tp.requires_grad(ix), rw = tp.requires_grad(iw), rb = tp.requires_grad(ib);
        if (rb)
        {
            Tensor& GB = tp.grad_ref(ib);
            for (int o = 0; o < O; ++o)
            {
                double s = 0.0;
                const double* g = G.data() + static_cast<std::size_t>(o) * Ho * Wo;
                for (int i = 0; i < Ho * Wo; ++i)
                    s += g[i];
                GB[static_cast<std::size_t>(o)] += s;
            }
        }
        Tensor* GX = rx ? &tp.grad_ref(ix) : nullptr;
        Tensor* GW = rw ? &tp.grad_ref(iw) : nullptr;
        if (!rx && !rw)
            return;
        for (int o = 0; o < O; ++o)
        {
            const double* g = G.data() + static_cast<std::size_t>(o) * Ho * Wo;
            for (int c = 0; c < C; ++c)
            {
                const double* in = X.data() + static_cast<std::size_t>(c) * H * W;
                double* gin = rx ? GX->data() + static_cast<std::size_t>(c) * H * W : nullptr;
                for (int ky = 0; ky < K; ++ky)
                    for (int kx = 0; kx < K; ++kx)
                    {
                        const std::size_t widx = ((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx;
                        const double w = Wt[widx];
                        double gw = 0.0;
                        const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                        const int ox_hi = std::min(Wo, (W - 1 - kx + pad) / stride + 1);
                        for (int oy = 0; oy < Ho; ++oy)
                        {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H)
                                continue;
                            const double* grow = g + static_cast<std::size_t>(oy) * Wo;
                            const std::size_t base = static_cast<std::size_t>(iy) * W;
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                            {
                                const std::size_t ii = base + static_cast<std::size_t>(ox * stride + kx - pad);
                                gw += grow[ox] * in[ii];
                                if (gin)
                                    gin[ii] += w * grow[ox];
                            }
                        }
                        if (rw)
                            (*GW)[widx] += gw;
                    }
            }
        }
    });
}

Var upsample2x(Var x)
{
    const Tensor& X = x.value();
    require_rank(X, 3, "upsample2x");
    const int C = X.dim(0), H = X.dim(1), W = X.dim(2);
    Tensor Y({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx)
                Y[(static_cast<std::size_t>(c) * 2 * H + y) * 2 * W + xx] =
                    X[(static_cast<std::size_t>(c) * H + y / 2) * W + xx / 2];
    const int ix = x.id;
    return tape_of(x).record(std::move(Y), {ix}, [ix, C, H, W](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        Tensor& GX = tp.grad_ref(ix);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx)
                    GX[(static_cast<std::size_t>(c) * H + y / 2) * W + xx / 2] +=
                        G[(static_cast<std::size_t>(c) * 2 * H + y) * 2 * W + xx];
    });
}

Var channel_mean(Var x)
{
    const Tensor& X = x.value();
    require_rank(X, 3, "channel_mean");
    const int C = X.dim(0);
    const std::size_t hw = static_cast<std::size_t>(X.dim(1)) * X.dim(2);
    Tensor Y({C});
    for (int c = 0; c < C; ++c)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i)
            s += X[c * hw + i];
        Y[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
    }
    const int ix = x.id;
    return tape_of(x).record(std::move(Y), {ix}, [ix, C, hw](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        Tensor& GX = tp.grad_ref(ix);
        for (int c = 0; c < C; ++c)
        {
            const double g = G[static_cast<std::size_t>(c)] / static_cast<double>(hw);
            for (std::size_t i = 0; i < hw; ++i)
                GX[c * hw + i] += g;
        }
    });
}

Var channel_var(Var x)
{
    const Tensor& X = x.value();
    require_rank(X, 3, "channel_var");
    const int C = X.dim(0);
    const std::size_t hw = static_cast<std::size_t>(X.dim(1)) * X.dim(2);
    Tensor Y({C});
    std::vector<double> mu(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i)
            s += X[c * hw + i];
        mu[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
        double v = 0.0;
        for (std::size_t i = 0; i < hw; ++i)
        {
            const double d = X[c * hw + i] - mu[static_cast<std::size_t>(c)];
            v += d * d;
        }
        Y[static_cast<std::size_t>(c)] = v / static_cast<double>(hw);
    }
    const int ix = x.id;
    return tape_of(x).record(std::move(Y), {ix}, [ix, C, hw, mu](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        const Tensor& X = tp.value(ix);
        Tensor& GX = tp.grad_ref(ix);
        for (int c = 0; c < C; ++c)
        {
            const double g = 2.0 * G[static_cast<std::size_t>(c)] / static_cast<double>(hw);
            for (std::size_t i = 0; i < hw; ++i)
                GX[c * hw + i] += g * (X[c * hw + i] - mu[static_cast<std::size_t>(c)]);
        }
    });
}

namespace {

enum class ChannelOp
{
    add,
    sub,
    mul
};

Var channel_binary(Var x, Var v, ChannelOp op, const char* name)
{
    const Tensor& X = x.value();
    const Tensor& V = v.value();
    require_rank(X, 3, name);
    const int C = X.dim(0);
    if (V.shape() != Shape{C})
        throw std::invalid_argument(std::string("shape mismatch in ") + name + ": " + shape_str(X.shape()) + " vs " +
                                    shape_str(V.shape()));
    const std::size_t hw = static_cast<std::size_t>(X.dim(1)) * X.dim(2);
    Tensor Y = X;
    for (int c = 0; c < C; ++c)
    {
        const double vc = V[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < hw; ++i)
        {
            double& y = Y[c * hw + i];
            y = op == ChannelOp::add ? y + vc : op == ChannelOp::sub ? y - vc : y * vc;
        }
    }
    const int ix = x.id, iv = v.id;
    return tape_of(x).record(std::move(Y), {ix, iv}, [ix, iv, C, hw, op](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        const Tensor& X = tp.value(ix);
        const Tensor& V = tp.value(iv);
        if (tp.requires_grad(ix))
        {
            Tensor& GX = tp.grad_ref(ix);
            for (int c = 0; c < C; ++c)
            {
                const double f = op == ChannelOp::mul ? V[static_cast<std::size_t>(c)] : 1.0;
                for (std::size_t i = 0; i < hw; ++i)
                    GX[c * hw + i] += f * G[c * hw + i];
            }
        }
        if (tp.requires_grad(iv))
        {
            Tensor& GV = tp.grad_ref(iv);
            for (int c = 0; c < C; ++c)
            {
                double s = 0.0;
                for (std::size_t i = 0; i < hw; ++i)
                    s += op == ChannelOp::mul ? G[c * hw + i] * X[c * hw + i] : G[c * hw + i];
                GV[static_cast<std::size_t>(c)] += op == ChannelOp::sub ? -s : s;
            }
        }
    });
}

} // namespace

Var sub_channel(Var x, Var v) { return channel_binary(x, v, ChannelOp::sub, "sub_channel"); }
Var mul_channel(Var x, Var v) { return channel_binary(x, v, ChannelOp::mul, "mul_channel"); }
Var add_channel(Var x, Var v) { return channel_binary(x, v, ChannelOp::add, "add_channel"); }

Var concat(const std::vector<Var>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat of nothing");
    const Shape& first = parts.front().shape();
    Shape out_shape = first;
    out_shape[0] = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const Var& p : parts)
    {
        const Shape& s = p.shape();
        if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1))
            throw std::invalid_argument("shape mismatch in concat: " + shape_str(first) + " vs " + shape_str(s));
        out_shape[0] += s[0];
        ids.push_back(p.id);
        offsets.push_back(total);
        total += p.value().size();
    }
    Tensor Y(out_shape);
    for (std::size_t k = 0; k < parts.size(); ++k)
    {
        const Tensor& v = parts[k].value();
        std::copy(v.data(), v.data() + v.size(), Y.data() + offsets[k]);
    }
    return tape_of(parts.front()).record(std::move(Y), ids, [ids, offsets](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        for (std::size_t k = 0; k < ids.size(); ++k)
        {
            if (!tp.requires_grad(ids[k]))
                continue;
            Tensor& gp = tp.grad_ref(ids[k]);
            for (std::size_t i = 0; i < gp.size(); ++i)
                gp[i] += G[offsets[k] + i];
        }
    });
}

Var slice(Var x, int start, int count)
{
    const Tensor& X = x.value();
    if (X.rank() < 1 || start < 0 || count < 0 || start + count > X.dim(0))
        throw std::invalid_argument("slice out of range for " + shape_str(X.shape()));
    Shape s = X.shape();
    s[0] = count;
    const std::size_t inner = X.size() / static_cast<std::size_t>(X.dim(0));
    const std::size_t off = inner * static_cast<std::size_t>(start);
    Tensor Y(s);
    std::copy(X.data() + off, X.data() + off + Y.size(), Y.data());
    const int ix = x.id;
    return tape_of(x).record(std::move(Y), {ix}, [ix, off](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        Tensor& GX = tp.grad_ref(ix);
        for (std::size_t i = 0; i < G.size(); ++i)
            GX[off + i] += G[i];
    });
}

Var crop(Var x, int top, int left, int height, int width)
{
    const Tensor& X = x.value();
    require_rank(X, 3, "crop");
    const int C = X.dim(0), H = X.dim(1), W = X.dim(2);
    if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > H || left + width > W)
        throw std::invalid_argument("crop rectangle outside " + shape_str(X.shape()));
    Tensor Y({C, height, width});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < height; ++y)
            for (int xx = 0; xx < width; ++xx)
                Y[(static_cast<std::size_t>(c) * height + y) * width + xx] =
                    X[(static_cast<std::size_t>(c) * H + top + y) * W + left + xx];
    const int ix = x.id;
    return tape_of(x).record(std::move(Y), {ix}, [=](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        Tensor& GX = tp.grad_ref(ix);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < height; ++y)
                for (int xx = 0; xx < width; ++xx)
                    GX[(static_cast<std::size_t>(c) * H + top + y) * W + left + xx] +=
                        G[(static_cast<std::size_t>(c) * height + y) * width + xx];
    });
}

Var resize_bilinear(Var x, int height, int width)
{
    const Tensor& X = x.value();
    require_rank(X, 3, "resize_bilinear");
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("resize_bilinear: target size must be positive");
    const int C = X.dim(0), H = X.dim(1), W = X.dim(2);

    // Half-pixel-centre sampling, clamped at the border.
    struct Tap
    {
        int i0, i1;
        double w1;
    };
    auto taps = [](int out, int in) {
        std::vector<Tap> t(static_cast<std::size_t>(out));
        const double ratio = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o)
        {
            const double src = std::clamp((o + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(src));
            const int i1 = std::min(i0 + 1, in - 1);
            t[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
        }
        return t;
    };
    const auto ty = taps(height, H);
    const auto tx = taps(width, W);

    Tensor Y({C, height, width});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < height; ++y)
            for (int xx = 0; xx < width; ++xx)
            {
                const auto& a = ty[static_cast<std::size_t>(y)];
                const auto& b = tx[static_cast<std::size_t>(xx)];
                auto at = [&](int r, int q) { return X[(static_cast<std::size_t>(c) * H + r) * W + q]; };
                const double top = (1 - b.w1) * at(a.i0, b.i0) + b.w1 * at(a.i0, b.i1);
                const double bot = (1 - b.w1) * at(a.i1, b.i0) + b.w1 * at(a.i1, b.i1);
                Y[(static_cast<std::size_t>(c) * height + y) * width + xx] = (1 - a.w1) * top + a.w1 * bot;
            }
    const int ix = x.id;
    return tape_of(x).record(std::move(Y), {ix}, [=](Tape& tp, int self) {
        const Tensor& G = tp.grad_ref(self);
        Tensor& GX = tp.grad_ref(ix);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < height; ++y)
                for (int xx = 0; xx < width; ++xx)
                {
                    const auto& a = ty[static_cast<std::size_t>(y)];
                    const auto& b = tx[static_cast<std::size_t>(xx)];
                    const double g = G[(static_cast<std::size_t>(c) * height + y) * width + xx];
                    auto acc = [&](int r, int q, double w) { GX[(static_cast<std::size_t>(c) * H + r) * W + q] += w * g; };
                    acc(a.i0, b.i0, (1 - a.w1) * (1 - b.w1));
                    acc(a.i0, b.i1, (1 - a.w1) * b.w1);
                    acc(a.i1, b.i0, a.w1 * (1 - b.w1));
                    acc(a.i1, b.i1, a.w1 * b.w1);
                }
    });
}

} // namespace headswap::nn
