#ifndef RSQAIR_AUTODIFF_HPP
#define RSQAIR_AUTODIFF_HPP

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Tape owns two chunked arenas (values and gradients) whose chunks never
// move, so ops can capture raw pointers in their backward closures. Graphs
// are rebuilt per sequence and the tape is reset between builds; chunks are
// retained across resets. All inner loops go through rsqair::kernels, so a
// graph evaluates bit-identically for any OpenMP thread count.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rsqair/tensor.hpp"

namespace rsqair::ad {

using ParamRef = int;

// Named trainable leaves. Values and accumulated gradients live here;
// optimizer state is kept by the optimizer, keyed by ParamRef.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
    };

    ParamRef add(const std::string& name, Shape s);
    ParamRef find(const std::string& name) const;  // -1 if absent
    Entry& at(ParamRef r) { return entries_[r]; }
    const Entry& at(ParamRef r) const { return entries_[r]; }
    int count() const { return static_cast<int>(entries_.size()); }

    int64_t total_params() const;
    int64_t total_params(const std::string& prefix) const;
    void zero_grads();
    double grad_norm() const;
    void scale_grads(double s);

private:
    std::vector<Entry> entries_;
};

class Tape;

struct Var {
    Tape* t = nullptr;
    const double* v = nullptr;
    double* g = nullptr;  // null for constants and in no-grad tapes
    Shape shape;

    bool valid() const { return t != nullptr; }
    int numel() const { return shape.numel(); }
    double val() const { return v[0]; }
};

class Tape {
public:
    explicit Tape(ParamStore* params = nullptr, bool grads_on = true)
        : params_(params), grads_on_(grads_on) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grads_on() const { return grads_on_; }
    ParamStore* params() { return params_; }

    Var constant(const Tensor& t);
    Var constant(Shape s, double fill = 0.0);
    Var scalar(double v) { return constant(Shape::scalar(), v); }
    Var param(ParamRef r);

    // raw node: caller fills values; grad allocated when wanted and grads on
    Var node(Shape s, bool want_grad);
    double* alloc_val(int n) { return vals_.alloc(n); }
    double* alloc_grad(int n) { return grads_.alloc(n); }
    void push(std::function<void()> bwd) { closures_.push_back(std::move(bwd)); }

    // runs the recorded closures in reverse from a scalar loss
    void backward(Var loss);

    // parameter-gradient shadows accumulated by this tape, insertion order
    const std::vector<std::pair<ParamRef, Var>>& param_uses() const { return param_uses_; }
    // folds shadows into the ParamStore grads (fixed order)
    void fold_param_grads();

    void reset();
    size_t bytes_used() const { return (vals_.used() + grads_.used()) * sizeof(double); }

private:
    struct Arena {
        static constexpr size_t kChunk = 1u << 19;  // doubles per chunk (4 MB)
        std::vector<std::unique_ptr<double[]>> chunks;
        size_t cur = 0, off = 0;
        double* alloc(size_t n);
        void reset() { cur = 0; off = 0; }
        void zero_used();
        size_t used() const { return cur * kChunk + off; }
    };

    ParamStore* params_;
    bool grads_on_;
    Arena vals_, grads_;
    std::vector<std::function<void()>> closures_;
    std::vector<std::pair<ParamRef, Var>> param_uses_;
    std::vector<Var> param_cache_;  // by ParamRef
};

Tensor materialize(Var x);

// ---- ops ----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_const(Var a, double c);
Var mul_const(Var a, double c);

Var tanh_(Var x);
Var sigmoid_(Var x);
Var softplus_(Var x);
Var exp_(Var x);
Var log_clamped(Var x, double lo);
Var clamp01(Var x);

Var reshape(Var x, Shape s);
Var concat_vec(const std::vector<Var>& xs);
Var slice_(Var x, int off, int len);
Var row_(Var X, int i);
Var stack_rows(const std::vector<Var>& rows);
Var stack_scalars(const std::vector<Var>& xs);
Var gather_rows(Var X, const std::vector<int>& idx);
Var scatter_sum_rows(Var X, const std::vector<int>& idx, int out_rows);
Var scale_rows(Var X, Var s);
Var scale_by(Var x, Var s);  // x * scalar s, broadcast

// x {in} or {r,in}; W {out,in}; optional b {out}
Var linear(Var x, Var W, Var b);
Var matmul_(Var A, Var B);
Var matmul_nt_(Var A, Var B);

Var sum_(Var x);
Var dot(Var a, Var b);
Var logsumexp(Var x);
Var softmax_rows(Var X);

Var conv2d_(Var x, Var W, Var b, int k, int stride);
Var bilinear_extract_(Var frame, Var win, int G);
Var bilinear_place_(Var glimpse, Var win, int H, int W);

}  // namespace rsqair::ad

#endif
