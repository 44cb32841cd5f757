#include "ttarl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ttarl/errors.hpp"
#include "ttarl/rng.hpp"

namespace ttarl {

namespace {
size_t shape_numel(const std::vector<int>& shp) {
    size_t n = 1;
    for (int d : shp) {
        if (d <= 0) throw DimError("non-positive dimension in shape");
        n *= static_cast<size_t>(d);
    }
    return n;
}
} // namespace

Tensor::Tensor(std::vector<int> shp, std::vector<double> values)
    : shape(std::move(shp)), data(std::move(values)) {
    if (shape_numel(shape) != data.size())
        throw DimError("shape " + shape_str() + " does not match data length " +
                       std::to_string(data.size()));
}

Tensor Tensor::zeros(std::vector<int> shp) {
    const size_t n = shape_numel(shp);
    return Tensor(std::move(shp), std::vector<double>(n, 0.0));
}

Tensor Tensor::ones(std::vector<int> shp) { return full(std::move(shp), 1.0); }

Tensor Tensor::full(std::vector<int> shp, double value) {
    const size_t n = shape_numel(shp);
    return Tensor(std::move(shp), std::vector<double>(n, value));
}

Tensor Tensor::vec(std::vector<double> values) {
    const int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::identity(int n) {
    Tensor t = zeros({n, n});
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void Tensor::ensure_finite(const char* where) const {
    for (double v : data)
        if (!std::isfinite(v))
            throw ContractError(std::string("non-finite value produced by ") + where);
}

uint64_t Tensor::digest() const {
    uint64_t h = fnv1a64(shape.data(), shape.size() * sizeof(int));
    return fnv1a64(data.data(), data.size() * sizeof(double), h);
}

namespace kern {

Tensor matmul(const Tensor& a, const Tensor& b) {
    const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2)
        throw DimError("matmul inner dimensions disagree: " + a.shape_str() + " vs " +
                       b.shape_str());
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * k];
        double* orow = &out.data[static_cast<size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = &b.data[static_cast<size_t>(p) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimError("add shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimError("sub shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimError("mul shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (m.cols() != v.cols() || v.rows() != 1)
        throw DimError("add_rowvec shapes disagree: " + m.shape_str() + " vs " + v.shape_str());
    Tensor out = m;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out.at(i, j) += v.data[static_cast<size_t>(j)];
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.numel() == 0 || x.cols() < 1) throw DimError("softmax of empty input");
    Tensor out = x;
    const int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
    }
    return out;
}

Tensor log_softmax_rows(const Tensor& x) {
    if (x.numel() == 0 || x.cols() < 1) throw DimError("log_softmax of empty input");
    Tensor out = x;
    const int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(out.at(i, j) - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < c; ++j) out.at(i, j) -= lse;
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int d = x.cols();
    if (gamma.numel() != static_cast<size_t>(d) || beta.numel() != static_cast<size_t>(d))
        throw DimError("layer_norm parameter length " + gamma.shape_str() + "/" +
                       beta.shape_str() + " does not match input " + x.shape_str());
    if (eps < 0.0) throw ContractError("layer_norm eps must be non-negative");
    Tensor out = x;
    for (int i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += x.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dv = x.at(i, j) - mean;
            var += dv * dv;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j)
            out.at(i, j) =
                gamma.data[static_cast<size_t>(j)] * (x.at(i, j) - mean) * inv +
                beta.data[static_cast<size_t>(j)];
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
    const int n = table.rows(), d = table.cols();
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
    for (size_t t = 0; t < idx.size(); ++t) {
        if (idx[t] < 0 || idx[t] >= n)
            throw ContractError("gather_rows index " + std::to_string(idx[t]) +
                                " out of range [0, " + std::to_string(n) + ")");
        std::copy_n(&table.data[static_cast<size_t>(idx[t]) * d], d,
                    &out.data[t * static_cast<size_t>(d)]);
    }
    return out;
}

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw DimError("concat_rows of nothing");
    const int d = parts[0]->cols();
    int total = 0;
    for (const Tensor* p : parts) {
        if (p->cols() != d) throw DimError("concat_rows column mismatch");
        total += p->rows();
    }
    Tensor out = Tensor::zeros({total, d});
    size_t off = 0;
    for (const Tensor* p : parts) {
        std::copy(p->data.begin(), p->data.end(), out.data.begin() + static_cast<long>(off));
        off += p->data.size();
    }
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw DimError("dot length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double cosine(const Tensor& a, const Tensor& b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw ContractError("cosine of zero-norm vector");
    return dot(a, b) / (na * nb);
}

Tensor l2_normalize(const Tensor& v) {
    const double n = l2_norm(v);
    if (n == 0.0) throw ContractError("normalize of zero-norm vector");
    return scale(v, 1.0 / n);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace kern

} // namespace ttarl
