#ifndef RIVERCAST_TENSOR_HPP
#define RIVERCAST_TENSOR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rivercast {

/**
 * Dense row-major matrix of doubles.
 *
 * Every tensor in the model graph is rank-2 (reaches x features); scalars
 * are 1x1. Storage is plain std::vector so tensors copy and move with value
 * semantics.
 */
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative dimension");
    }
    Tensor(int rows, int cols, std::vector<double> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != static_cast<std::size_t>(rows) * cols)
            throw std::invalid_argument("Tensor: value count " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str());
    }

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
    static Tensor full(int rows, int cols, double v) {
        Tensor t(rows, cols);
        for (auto& x : t.data_) x = v;
        return t;
    }
    static Tensor identity(int n) {
        Tensor t(n, n);
        for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }
    static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    /// Scalar payload of a 1x1 tensor.
    double item() const {
        if (size() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_str());
        return data_[0];
    }

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    bool all_finite() const;

    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "," + std::to_string(cols_) + ")";
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

} // namespace rivercast

#endif
