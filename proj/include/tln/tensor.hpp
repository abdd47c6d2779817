#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace tln {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense n-d array of doubles with an optional gradient buffer of the same
// extent. 64-bit storage throughout: gradient checking requires it and the
// desk-scale workloads do not need the 32-bit variant.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty, or data.size() elements

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);
    Tensor(Shape s, std::initializer_list<double> d);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t ndim() const { return static_cast<std::int64_t>(shape.size()); }
    bool has_grad() const { return !grad.empty(); }
    void ensure_grad();
    void zero_grad();
    void drop_grad() { grad.clear(); }

    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // Row-major accessors for the common ranks.
    double& at2(std::int64_t r, std::int64_t c) { return data[std::size_t(r * shape[1] + c)]; }
    double at2(std::int64_t r, std::int64_t c) const { return data[std::size_t(r * shape[1] + c)]; }
};

}  // namespace tln
