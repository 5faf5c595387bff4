#include "hvg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hvg {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::from_scalar(double value) { return Tensor({1}, {value}); }

int64_t Tensor::offset(std::initializer_list<int64_t> idx) const {
    if (static_cast<int64_t>(idx.size()) != ndim()) {
        throw std::invalid_argument("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                                    std::to_string(ndim()));
    }
    int64_t off = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= shape_[k]) {
            throw std::out_of_range("index " + std::to_string(i) + " out of range for dim " + std::to_string(k) +
                                    " of shape " + shape_str(shape_));
        }
        off = off * shape_[k] + i;
        ++k;
    }
    return off;
}

double& Tensor::at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }

double Tensor::at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(offset(idx))]; }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

}  // namespace hvg
