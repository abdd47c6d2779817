#include "tln/tensor.hpp"

#include <sstream>

#include "tln/error.hpp"

namespace tln {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (auto dim : shape) {
        if (dim <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
    }
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
    }
}

Tensor::Tensor(Shape s, std::initializer_list<double> d)
    : Tensor(std::move(s), std::vector<double>(d)) {}

Tensor Tensor::zeros(Shape s) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double v) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

}  // namespace tln
