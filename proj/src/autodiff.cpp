#include "rsqair/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "rsqair/kernels.hpp"

namespace rsqair::ad {

// ---- ParamStore ----

ParamRef ParamStore::add(const std::string& name, Shape s) {
    if (find(name) >= 0) throw Error("duplicate parameter " + name);
    entries_.push_back(Entry{name, Tensor(s), Tensor(s)});
    return static_cast<ParamRef>(entries_.size()) - 1;
}

ParamRef ParamStore::find(const std::string& name) const {
    for (int i = 0; i < count(); ++i)
        if (entries_[i].name == name) return i;
    return -1;
}

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

int64_t ParamStore::total_params(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& e : entries_)
        if (e.name.rfind(prefix, 0) == 0) n += e.value.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) std::memset(e.grad.data(), 0, sizeof(double) * e.grad.size());
}

double ParamStore::grad_norm() const {
    double s = 0.0;
    for (const auto& e : entries_)
        for (int i = 0; i < e.grad.size(); ++i) s += e.grad[i] * e.grad[i];
    return std::sqrt(s);
}

void ParamStore::scale_grads(double s) {
    for (auto& e : entries_)
        for (int i = 0; i < e.grad.size(); ++i) e.grad[i] *= s;
}

// ---- Tape ----

double* Tape::Arena::alloc(size_t n) {
    if (n > kChunk) throw Error("tape allocation exceeds arena chunk size");
    if (chunks.empty()) chunks.push_back(std::make_unique<double[]>(kChunk));
    if (off + n > kChunk) {
        ++cur;
        off = 0;
        if (cur >= chunks.size()) chunks.push_back(std::make_unique<double[]>(kChunk));
    }
    double* p = chunks[cur].get() + off;
    off += n;
    return p;
}

void Tape::Arena::zero_used() {
    for (size_t i = 0; i < cur && i < chunks.size(); ++i)
        std::memset(chunks[i].get(), 0, sizeof(double) * kChunk);
    if (cur < chunks.size() && off > 0)
        std::memset(chunks[cur].get(), 0, sizeof(double) * off);
}

Var Tape::constant(const Tensor& t) {
    Var x;
    x.t = this;
    x.shape = t.shape();
    double* p = vals_.alloc(t.size());
    std::memcpy(p, t.data(), sizeof(double) * t.size());
    x.v = p;
    return x;
}

Var Tape::constant(Shape s, double fill) {
    Var x;
    x.t = this;
    x.shape = s;
    double* p = vals_.alloc(s.numel());
    for (int i = 0; i < s.numel(); ++i) p[i] = fill;
    x.v = p;
    return x;
}

Var Tape::param(ParamRef r) {
    if (!params_) throw Error("tape has no parameter store");
    if (param_cache_.size() <= static_cast<size_t>(r)) param_cache_.resize(r + 1);
    if (param_cache_[r].valid()) return param_cache_[r];
    auto& e = params_->at(r);
    Var x;
    x.t = this;
    x.shape = e.value.shape();
    x.v = e.value.data();
    if (grads_on_) {
        x.g = grads_.alloc(e.value.size());
        param_uses_.push_back({r, x});
    }
    param_cache_[r] = x;
    return x;
}

Var Tape::node(Shape s, bool want_grad) {
    Var x;
    x.t = this;
    x.shape = s;
    x.v = vals_.alloc(s.numel());
    if (want_grad && grads_on_) x.g = grads_.alloc(s.numel());
    return x;
}

void Tape::backward(Var loss) {
    if (loss.numel() != 1) throw ShapeError("backward needs a scalar loss");
    if (!loss.g) throw Error("loss has no gradient slot");
    grads_.zero_used();
    loss.g[0] = 1.0;
    for (auto it = closures_.rbegin(); it != closures_.rend(); ++it) (*it)();
}

void Tape::fold_param_grads() {
    for (auto& [r, x] : param_uses_) {
        auto& e = params_->at(r);
        for (int i = 0; i < e.grad.size(); ++i) e.grad[i] += x.g[i];
    }
}

void Tape::reset() {
    closures_.clear();
    param_uses_.clear();
    param_cache_.clear();
    vals_.reset();
    grads_.reset();
}

Tensor materialize(Var x) {
    Tensor t(x.shape);
    std::memcpy(t.data(), x.v, sizeof(double) * x.numel());
    return t;
}

// ---- op helpers ----

namespace {

inline void check_same(const Var& a, const Var& b, const char* op) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": " + a.shape.str() + " vs " + b.shape.str());
}

inline double* mut(Var x) { return const_cast<double*>(x.v); }

inline bool want(Tape& T, std::initializer_list<const Var*> ins) {
    if (!T.grads_on()) return false;
    for (const Var* x : ins)
        if (x->g) return true;
    return false;
}

}  // namespace

// ---- elementwise ----

Var add(Var a, Var b) {
    check_same(a, b, "add");
    Tape& T = *a.t;
    bool w = want(T, {&a, &b});
    Var y = T.node(a.shape, w);
    int n = a.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = a.v[i] + b.v[i];
    if (w)
        T.push([a, b, y, n] {
            if (a.g)
                for (int i = 0; i < n; ++i) a.g[i] += y.g[i];
            if (b.g)
                for (int i = 0; i < n; ++i) b.g[i] += y.g[i];
        });
    return y;
}

Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    Tape& T = *a.t;
    bool w = want(T, {&a, &b});
    Var y = T.node(a.shape, w);
    int n = a.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = a.v[i] - b.v[i];
    if (w)
        T.push([a, b, y, n] {
            if (a.g)
                for (int i = 0; i < n; ++i) a.g[i] += y.g[i];
            if (b.g)
                for (int i = 0; i < n; ++i) b.g[i] -= y.g[i];
        });
    return y;
}

Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Tape& T = *a.t;
    bool w = want(T, {&a, &b});
    Var y = T.node(a.shape, w);
    int n = a.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = a.v[i] * b.v[i];
    if (w)
        T.push([a, b, y, n] {
            if (a.g)
                for (int i = 0; i < n; ++i) a.g[i] += y.g[i] * b.v[i];
            if (b.g)
                for (int i = 0; i < n; ++i) b.g[i] += y.g[i] * a.v[i];
        });
    return y;
}

Var div(Var a, Var b) {
    check_same(a, b, "div");
    Tape& T = *a.t;
    bool w = want(T, {&a, &b});
    Var y = T.node(a.shape, w);
    int n = a.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = a.v[i] / b.v[i];
    if (w)
        T.push([a, b, y, n] {
            for (int i = 0; i < n; ++i) {
                double inv = 1.0 / b.v[i];
                if (a.g) a.g[i] += y.g[i] * inv;
                if (b.g) b.g[i] -= y.g[i] * y.v[i] * inv;
            }
        });
    return y;
}

Var add_const(Var a, double c) {
    Tape& T = *a.t;
    bool w = want(T, {&a});
    Var y = T.node(a.shape, w);
    int n = a.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = a.v[i] + c;
    if (w)
        T.push([a, y, n] {
            for (int i = 0; i < n; ++i) a.g[i] += y.g[i];
        });
    return y;
}

Var mul_const(Var a, double c) {
    Tape& T = *a.t;
    bool w = want(T, {&a});
    Var y = T.node(a.shape, w);
    int n = a.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = a.v[i] * c;
    if (w)
        T.push([a, y, n, c] {
            for (int i = 0; i < n; ++i) a.g[i] += y.g[i] * c;
        });
    return y;
}

// ---- unary ----

Var tanh_(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = std::tanh(x.v[i]);
    if (w)
        T.push([x, y, n] {
            for (int i = 0; i < n; ++i) x.g[i] += y.g[i] * (1.0 - y.v[i] * y.v[i]);
        });
    return y;
}

Var sigmoid_(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = 1.0 / (1.0 + std::exp(-x.v[i]));
    if (w)
        T.push([x, y, n] {
            for (int i = 0; i < n; ++i) x.g[i] += y.g[i] * y.v[i] * (1.0 - y.v[i]);
        });
    return y;
}

Var softplus_(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) {
        double v = x.v[i];
        yv[i] = v > 30.0 ? v : std::log1p(std::exp(v));
    }
    if (w)
        T.push([x, y, n] {
            for (int i = 0; i < n; ++i) x.g[i] += y.g[i] / (1.0 + std::exp(-x.v[i]));
        });
    return y;
}

Var exp_(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = std::exp(x.v[i]);
    if (w)
        T.push([x, y, n] {
            for (int i = 0; i < n; ++i) x.g[i] += y.g[i] * y.v[i];
        });
    return y;
}

Var log_clamped(Var x, double lo) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = std::log(std::max(x.v[i], lo));
    if (w)
        T.push([x, y, n, lo] {
            for (int i = 0; i < n; ++i)
                if (x.v[i] > lo) x.g[i] += y.g[i] / x.v[i];
        });
    return y;
}

Var clamp01(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = std::fmin(1.0, std::fmax(0.0, x.v[i]));
    if (w)
        T.push([x, y, n] {
            for (int i = 0; i < n; ++i)
                if (x.v[i] > 0.0 && x.v[i] < 1.0) x.g[i] += y.g[i];
        });
    return y;
}

// ---- structure ----

Var reshape(Var x, Shape s) {
    if (s.numel() != x.numel())
        throw ShapeError("reshape " + x.shape.str() + " -> " + s.str());
    Var y = x;
    y.shape = s;
    return y;
}

Var concat_vec(const std::vector<Var>& xs) {
    Tape& T = *xs.front().t;
    int n = 0;
    bool w = false;
    for (const Var& x : xs) {
        n += x.numel();
        w = w || (T.grads_on() && x.g);
    }
    Var y = T.node(Shape::vec(n), w);
    double* yv = mut(y);
    int off = 0;
    for (const Var& x : xs) {
        std::memcpy(yv + off, x.v, sizeof(double) * x.numel());
        off += x.numel();
    }
    if (w) {
        auto parts = xs;
        T.push([parts, y] {
            int off = 0;
            for (const Var& x : parts) {
                if (x.g)
                    for (int i = 0; i < x.numel(); ++i) x.g[i] += y.g[off + i];
                off += x.numel();
            }
        });
    }
    return y;
}

Var slice_(Var x, int off, int len) {
    if (off < 0 || off + len > x.numel()) throw ShapeError("slice out of range");
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(Shape::vec(len), w);
    std::memcpy(mut(y), x.v + off, sizeof(double) * len);
    if (w)
        T.push([x, y, off, len] {
            for (int i = 0; i < len; ++i) x.g[off + i] += y.g[i];
        });
    return y;
}

Var row_(Var X, int i) {
    if (X.shape.rank != 2) throw ShapeError("row_ expects a matrix");
    int c = X.shape.cols();
    return slice_(reshape(X, Shape::vec(X.numel())), i * c, c);
}

Var stack_rows(const std::vector<Var>& rows) {
    int c = rows.front().numel();
    std::vector<Var> flat;
    flat.reserve(rows.size());
    for (const Var& r : rows) flat.push_back(reshape(r, Shape::vec(c)));
    return reshape(concat_vec(flat), Shape::mat(static_cast<int>(rows.size()), c));
}

Var stack_scalars(const std::vector<Var>& xs) { return concat_vec(xs); }

Var gather_rows(Var X, const std::vector<int>& idx) {
    if (X.shape.rank != 2) throw ShapeError("gather_rows expects a matrix");
    Tape& T = *X.t;
    int c = X.shape.cols(), r = static_cast<int>(idx.size());
    bool w = want(T, {&X});
    Var y = T.node(Shape::mat(r, c), w);
    double* yv = mut(y);
    for (int i = 0; i < r; ++i)
        std::memcpy(yv + i * c, X.v + idx[i] * c, sizeof(double) * c);
    if (w)
        T.push([X, y, idx, c, r] {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) X.g[idx[i] * c + j] += y.g[i * c + j];
        });
    return y;
}

Var scatter_sum_rows(Var X, const std::vector<int>& idx, int out_rows) {
    if (X.shape.rank != 2) throw ShapeError("scatter_sum_rows expects a matrix");
    if (static_cast<int>(idx.size()) != X.shape.rows())
        throw ShapeError("scatter_sum_rows index count");
    Tape& T = *X.t;
    int c = X.shape.cols(), r = X.shape.rows();
    bool w = want(T, {&X});
    Var y = T.node(Shape::mat(out_rows, c), w);
    double* yv = mut(y);
    std::memset(yv, 0, sizeof(double) * y.numel());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) yv[idx[i] * c + j] += X.v[i * c + j];
    if (w)
        T.push([X, y, idx, c, r] {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) X.g[i * c + j] += y.g[idx[i] * c + j];
        });
    return y;
}

Var scale_rows(Var X, Var s) {
    if (X.shape.rank != 2 || s.numel() != X.shape.rows())
        throw ShapeError("scale_rows: " + X.shape.str() + " by " + s.shape.str());
    Tape& T = *X.t;
    int r = X.shape.rows(), c = X.shape.cols();
    bool w = want(T, {&X, &s});
    Var y = T.node(X.shape, w);
    double* yv = mut(y);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) yv[i * c + j] = X.v[i * c + j] * s.v[i];
    if (w)
        T.push([X, s, y, r, c] {
            for (int i = 0; i < r; ++i) {
                if (X.g)
                    for (int j = 0; j < c; ++j) X.g[i * c + j] += y.g[i * c + j] * s.v[i];
                if (s.g) {
                    double acc = 0.0;
                    for (int j = 0; j < c; ++j) acc += y.g[i * c + j] * X.v[i * c + j];
                    s.g[i] += acc;
                }
            }
        });
    return y;
}

Var scale_by(Var x, Var s) {
    if (s.numel() != 1) throw ShapeError("scale_by: scale must be a scalar");
    Tape& T = *x.t;
    bool w = want(T, {&x, &s});
    Var y = T.node(x.shape, w);
    int n = x.numel();
    double sv = s.v[0];
    double* yv = mut(y);
    for (int i = 0; i < n; ++i) yv[i] = x.v[i] * sv;
    if (w)
        T.push([x, s, y, n] {
            double sv = s.v[0];
            if (x.g)
                for (int i = 0; i < n; ++i) x.g[i] += y.g[i] * sv;
            if (s.g) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i) acc += y.g[i] * x.v[i];
                s.g[0] += acc;
            }
        });
    return y;
}

// ---- linear algebra ----

Var linear(Var x, Var W, Var b) {
    if (W.shape.rank != 2) throw ShapeError("linear: W must be a matrix");
    int out = W.shape.rows(), in = W.shape.cols();
    bool vec_in = (x.shape.rank == 1);
    int r = vec_in ? 1 : x.shape.rows();
    int xin = vec_in ? x.numel() : x.shape.cols();
    if (xin != in) throw ShapeError("linear: input " + x.shape.str() + " vs W " + W.shape.str());
    if (b.valid() && b.numel() != out) throw ShapeError("linear: bias size");
    Tape& T = *x.t;
    bool w = want(T, {&x, &W}) || (b.valid() && b.g);
    Var y = T.node(vec_in ? Shape::vec(out) : Shape::mat(r, out), w);
    kernels::linear_rows(x.v, W.v, b.valid() ? b.v : nullptr, mut(y), r, in, out);
    if (w)
        T.push([x, W, b, y, r, in, out] {
            kernels::linear_rows_bwd(x.v, W.v, y.g, x.g, W.g, b.valid() ? b.g : nullptr,
                                     r, in, out);
        });
    return y;
}

Var matmul_(Var A, Var B) {
    if (A.shape.rank != 2 || B.shape.rank != 2 || A.shape.cols() != B.shape.rows())
        throw ShapeError("matmul: " + A.shape.str() + " x " + B.shape.str());
    Tape& T = *A.t;
    int m = A.shape.rows(), k = A.shape.cols(), n = B.shape.cols();
    bool w = want(T, {&A, &B});
    Var y = T.node(Shape::mat(m, n), w);
    kernels::matmul(A.v, B.v, mut(y), m, k, n, false);
    if (w)
        T.push([A, B, y, m, k, n] {
            if (A.g) kernels::matmul_nt(y.g, B.v, A.g, m, n, k, true);  // gA = gY * B^T
            if (B.g) kernels::matmul_tn(A.v, y.g, B.g, k, m, n, true);  // gB = A^T * gY
        });
    return y;
}

Var matmul_nt_(Var A, Var B) {
    if (A.shape.rank != 2 || B.shape.rank != 2 || A.shape.cols() != B.shape.cols())
        throw ShapeError("matmul_nt: " + A.shape.str() + " x " + B.shape.str());
    Tape& T = *A.t;
    int m = A.shape.rows(), k = A.shape.cols(), n = B.shape.rows();
    bool w = want(T, {&A, &B});
    Var y = T.node(Shape::mat(m, n), w);
    kernels::matmul_nt(A.v, B.v, mut(y), m, k, n, false);
    if (w)
        T.push([A, B, y, m, k, n] {
            if (A.g) kernels::matmul(y.g, B.v, A.g, m, n, k, true);     // gA = gY * B
            if (B.g) kernels::matmul_tn(y.g, A.v, B.g, n, m, k, true);  // gB = gY^T * A
        });
    return y;
}

Var sum_(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(Shape::scalar(), w);
    mut(y)[0] = kernels::block_sum(x.v, x.numel());
    if (w)
        T.push([x, y] {
            double g = y.g[0];
            for (int i = 0; i < x.numel(); ++i) x.g[i] += g;
        });
    return y;
}

Var dot(Var a, Var b) {
    check_same(a, b, "dot");
    Tape& T = *a.t;
    bool w = want(T, {&a, &b});
    Var y = T.node(Shape::scalar(), w);
    int n = a.numel();
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a.v[i] * b.v[i];
    mut(y)[0] = s;
    if (w)
        T.push([a, b, y, n] {
            double g = y.g[0];
            if (a.g)
                for (int i = 0; i < n; ++i) a.g[i] += g * b.v[i];
            if (b.g)
                for (int i = 0; i < n; ++i) b.g[i] += g * a.v[i];
        });
    return y;
}

Var logsumexp(Var x) {
    Tape& T = *x.t;
    bool w = want(T, {&x});
    Var y = T.node(Shape::scalar(), w);
    int n = x.numel();
    double m = x.v[0];
    for (int i = 1; i < n; ++i) m = std::fmax(m, x.v[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(x.v[i] - m);
    mut(y)[0] = m + std::log(s);
    if (w)
        T.push([x, y, n] {
            double g = y.g[0];
            for (int i = 0; i < n; ++i) x.g[i] += g * std::exp(x.v[i] - y.v[0]);
        });
    return y;
}

Var softmax_rows(Var X) {
    if (X.shape.rank != 2) throw ShapeError("softmax_rows expects a matrix");
    Tape& T = *X.t;
    int r = X.shape.rows(), c = X.shape.cols();
    bool w = want(T, {&X});
    Var y = T.node(X.shape, w);
    double* yv = mut(y);
    for (int i = 0; i < r; ++i) {
        const double* xi = X.v + i * c;
        double* yi = yv + i * c;
        double m = xi[0];
        for (int j = 1; j < c; ++j) m = std::fmax(m, xi[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - m);
            s += yi[j];
        }
        double inv = 1.0 / s;
        for (int j = 0; j < c; ++j) yi[j] *= inv;
    }
    if (w)
        T.push([X, y, r, c] {
            for (int i = 0; i < r; ++i) {
                const double* yi = y.v + i * c;
                const double* gy = y.g + i * c;
                double dotv = 0.0;
                for (int j = 0; j < c; ++j) dotv += gy[j] * yi[j];
                for (int j = 0; j < c; ++j) X.g[i * c + j] += yi[j] * (gy[j] - dotv);
            }
        });
    return y;
}

// ---- image ops ----

Var conv2d_(Var x, Var W, Var b, int k, int stride) {
    if (x.shape.rank != 3) throw ShapeError("conv2d: input must be (C,H,W)");
    int C = x.shape.d[0], H = x.shape.d[1], Wd = x.shape.d[2];
    int Co = W.shape.rows();
    if (W.shape.cols() != C * k * k) throw ShapeError("conv2d: weight shape");
    if (k < 1 || stride < 1) throw ShapeError("conv2d: kernel and stride must be positive");
    if (k > H || k > Wd)
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " exceeds input " +
                         x.shape.str());
    int Ho = kernels::conv_out(H, k, stride), Wo = kernels::conv_out(Wd, k, stride);
    Tape& T = *x.t;
    bool w = want(T, {&x, &W}) || (b.valid() && b.g);
    Var y = T.node(Shape::chw(Co, Ho, Wo), w);
    kernels::conv2d(x.v, C, H, Wd, W.v, b.valid() ? b.v : nullptr, Co, k, stride, mut(y));
    if (w)
        T.push([x, W, b, y, C, H, Wd, Co, k, stride] {
            kernels::conv2d_bwd(x.v, C, H, Wd, W.v, y.g, x.g, W.g,
                                b.valid() ? b.g : nullptr, Co, k, stride);
        });
    return y;
}

Var bilinear_extract_(Var frame, Var win, int G) {
    if (frame.shape.rank != 2) throw ShapeError("bilinear_extract: frame must be 2-d");
    if (win.numel() != 4) throw ShapeError("bilinear_extract: window must have 4 entries");
    Tape& T = *frame.t;
    int H = frame.shape.rows(), W = frame.shape.cols();
    bool w = want(T, {&frame, &win});
    Var y = T.node(Shape::mat(G, G), w);
    kernels::bilinear_extract(frame.v, H, W, win.v, mut(y), G);
    if (w)
        T.push([frame, win, y, H, W, G] {
            kernels::bilinear_extract_bwd(frame.v, H, W, win.v, y.g, frame.g, win.g, G);
        });
    return y;
}

Var bilinear_place_(Var glimpse, Var win, int H, int W) {
    if (glimpse.shape.rank != 2 || glimpse.shape.rows() != glimpse.shape.cols())
        throw ShapeError("bilinear_place: glimpse must be square");
    if (win.numel() != 4) throw ShapeError("bilinear_place: window must have 4 entries");
    Tape& T = *glimpse.t;
    int G = glimpse.shape.rows();
    bool w = want(T, {&glimpse, &win});
    Var y = T.node(Shape::mat(H, W), w);
    kernels::bilinear_place(glimpse.v, G, win.v, mut(y), H, W);
    if (w)
        T.push([glimpse, win, y, H, W, G] {
            kernels::bilinear_place_bwd(glimpse.v, G, win.v, y.g, glimpse.g, win.g, H, W);
        });
    return y;
}

}  // namespace rsqair::ad
