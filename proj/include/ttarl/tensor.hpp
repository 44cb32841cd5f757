#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ttarl {

// Dense row-major tensor of doubles, rank 1 or 2. All model math runs in
// 64-bit; checkpoints narrow to 32-bit on disk.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> shp, std::vector<double> values);

    static Tensor zeros(std::vector<int> shp);
    static Tensor ones(std::vector<int> shp);
    static Tensor full(std::vector<int> shp, double value);
    static Tensor vec(std::vector<double> values);
    static Tensor identity(int n);

    int rank() const { return static_cast<int>(shape.size()); }
    // Rows/cols of the 2-D view: rank-1 tensors are a single row.
    int rows() const { return rank() == 2 ? shape[0] : 1; }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }
    size_t numel() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;

    // Throws ContractError when any value is non-finite.
    void ensure_finite(const char* where) const;
    uint64_t digest() const;
};

// Raw kernels shared by the autodiff graph and the no-grad inference paths.
// These validate shapes and throw DimError on mismatch.
namespace kern {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// Adds a length-n vector to every row of an m-by-n matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
// Per-row layer normalization with population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);
Tensor concat_rows(const std::vector<const Tensor*>& parts);
Tensor tanh(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
// Cosine similarity of two equal-length vectors; throws on zero norm.
double cosine(const Tensor& a, const Tensor& b);
Tensor l2_normalize(const Tensor& v);
double sigmoid(double x);

} // namespace kern

} // namespace ttarl
