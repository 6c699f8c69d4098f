#ifndef RSQAIR_TENSOR_HPP
#define RSQAIR_TENSOR_HPP

#include <array>
#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

#include "rsqair/errors.hpp"

namespace rsqair {

// Dense row-major shape, rank 1..3. Rank 3 is used for channel stacks (C,H,W).
struct Shape {
    int rank = 1;
    std::array<int, 3> d{1, 1, 1};

    static Shape vec(int n) { return Shape{1, {n, 1, 1}}; }
    static Shape mat(int r, int c) { return Shape{2, {r, c, 1}}; }
    static Shape chw(int c, int h, int w) { return Shape{3, {c, h, w}}; }
    static Shape scalar() { return vec(1); }

    int numel() const {
        int n = 1;
        for (int i = 0; i < rank; ++i) n *= d[i];
        return n;
    }
    int rows() const { return d[0]; }
    int cols() const { return d[1]; }

    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (d[i] != o.d[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "(";
        for (int i = 0; i < rank; ++i) s += std::to_string(d[i]) + (i + 1 < rank ? "," : "");
        return s + ")";
    }
};

class Tensor {
public:
    Tensor() : shape_(Shape::vec(0)) {}
    explicit Tensor(Shape s, double fill = 0.0) : shape_(s), v_(s.numel(), fill) {}
    Tensor(Shape s, std::vector<double> data) : shape_(s), v_(std::move(data)) {
        if (static_cast<int>(v_.size()) != shape_.numel())
            throw ShapeError("tensor data size does not match shape " + shape_.str());
    }

    const Shape& shape() const { return shape_; }
    int size() const { return static_cast<int>(v_.size()); }
    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double& operator[](int i) { return v_[i]; }
    double operator[](int i) const { return v_[i]; }
    double& operator()(int i, int j) { return v_[i * shape_.d[1] + j]; }
    double operator()(int i, int j) const { return v_[i * shape_.d[1] + j]; }
    double& operator()(int c, int i, int j) { return v_[(c * shape_.d[1] + i) * shape_.d[2] + j]; }
    double operator()(int c, int i, int j) const { return v_[(c * shape_.d[1] + i) * shape_.d[2] + j]; }

    std::vector<double>& vec() { return v_; }
    const std::vector<double>& vec() const { return v_; }

private:
    Shape shape_;
    std::vector<double> v_;
};

}  // namespace rsqair

#endif
