#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "marvin/common.hpp"

namespace marvin::nn {

/// Row-major buffer of doubles with an explicit shape. Rank 1 and rank 2 are
/// the only ranks the ops use; a rank-1 tensor of length n behaves as n x 1
/// where a matrix is expected.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)), data(count(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != count(shape))
            throw Error("tensor: " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    static std::string shape_string(const std::vector<std::size_t>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
        return out + "]";
    }

    static Tensor from_matrix(const Matrix& m) { return Tensor({m.rows, m.cols}, m.data); }
    Matrix to_matrix() const {
        Matrix m(rows(), cols());
        m.data = data;
        return m;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    std::string shape_str() const { return shape_string(shape); }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool operator==(const Tensor&) const = default;
};

}  // namespace marvin::nn
