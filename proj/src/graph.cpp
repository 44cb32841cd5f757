#include "ttarl/graph.hpp"

#include <algorithm>
#include <cmath>

#include "ttarl/errors.hpp"

namespace ttarl {

NodeId Graph::push(Node n, const char* opname) {
    n.value.ensure_finite(opname);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Graph::Node& Graph::node(NodeId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
        throw LookupError("unknown node id " + std::to_string(id));
    return nodes_[static_cast<size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

NodeId Graph::leaf(Tensor value, bool trainable) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.trainable = trainable || n.value.requires_grad;
    return push(std::move(n), "leaf");
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Matmul;
    n.inputs = {a, b};
    n.value = kern::matmul(value(a), value(b));
    return push(std::move(n), "matmul");
}

NodeId Graph::transpose(NodeId a) {
    Node n;
    n.op = Op::Transpose;
    n.inputs = {a};
    n.value = kern::transpose(value(a));
    return push(std::move(n), "transpose");
}

NodeId Graph::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.value = kern::add(value(a), value(b));
    return push(std::move(n), "add");
}

NodeId Graph::sub(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Sub;
    n.inputs = {a, b};
    n.value = kern::sub(value(a), value(b));
    return push(std::move(n), "sub");
}

NodeId Graph::mul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    n.value = kern::mul(value(a), value(b));
    return push(std::move(n), "mul");
}

NodeId Graph::div(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Div;
    n.inputs = {a, b};
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw DimError("div shapes disagree: " + ta.shape_str() + " vs " + tb.shape_str());
    n.value = ta;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] /= tb.data[i];
    return push(std::move(n), "div");
}

NodeId Graph::scale(NodeId a, double c) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.scalar = c;
    n.value = kern::scale(value(a), c);
    return push(std::move(n), "scale");
}

NodeId Graph::add_rowvec(NodeId m, NodeId v) {
    Node n;
    n.op = Op::AddRowvec;
    n.inputs = {m, v};
    n.value = kern::add_rowvec(value(m), value(v));
    return push(std::move(n), "add_rowvec");
}

NodeId Graph::softmax_rows(NodeId x) {
    Node n;
    n.op = Op::Softmax;
    n.inputs = {x};
    n.value = kern::softmax_rows(value(x));
    return push(std::move(n), "softmax");
}

NodeId Graph::log_softmax_rows(NodeId x) {
    Node n;
    n.op = Op::LogSoftmax;
    n.inputs = {x};
    n.value = kern::log_softmax_rows(value(x));
    return push(std::move(n), "log_softmax");
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::LayerNorm;
    n.inputs = {x, gamma, beta};
    n.scalar = eps;
    n.value = kern::layer_norm(tx, value(gamma), value(beta), eps);
    // Save mean and 1/sigma per row for the reverse pass.
    const int d = tx.cols();
    n.saved.resize(static_cast<size_t>(tx.rows()) * 2);
    for (int i = 0; i < tx.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += tx.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dv = tx.at(i, j) - mean;
            var += dv * dv;
        }
        var /= d;
        n.saved[static_cast<size_t>(i) * 2] = mean;
        n.saved[static_cast<size_t>(i) * 2 + 1] = 1.0 / std::sqrt(var + eps);
    }
    return push(std::move(n), "layer_norm");
}

NodeId Graph::gather_rows(NodeId table, std::vector<int> idx) {
    Node n;
    n.op = Op::GatherRows;
    n.inputs = {table};
    n.value = kern::gather_rows(value(table), idx);
    n.idx = std::move(idx);
    return push(std::move(n), "gather_rows");
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    Node n;
    n.op = Op::ConcatRows;
    n.inputs = parts;
    std::vector<const Tensor*> vs;
    vs.reserve(parts.size());
    for (NodeId p : parts) vs.push_back(&value(p));
    n.value = kern::concat_rows(vs);
    return push(std::move(n), "concat_rows");
}

NodeId Graph::slice_rows(NodeId x, int begin, int end) {
    const Tensor& tx = value(x);
    if (begin < 0 || end > tx.rows() || begin >= end)
        throw DimError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                       ") out of range for " + tx.shape_str());
    Node n;
    n.op = Op::SliceRows;
    n.inputs = {x};
    n.idx = {begin, end};
    n.value = Tensor::zeros({end - begin, tx.cols()});
    std::copy_n(&tx.data[static_cast<size_t>(begin) * tx.cols()],
                static_cast<size_t>(end - begin) * tx.cols(), n.value.data.begin());
    return push(std::move(n), "slice_rows");
}

NodeId Graph::pick(NodeId x, std::vector<int> idx) {
    const Tensor& tx = value(x);
    if (static_cast<int>(idx.size()) != tx.rows())
        throw DimError("pick index count " + std::to_string(idx.size()) +
                       " does not match rows of " + tx.shape_str());
    Node n;
    n.op = Op::Pick;
    n.inputs = {x};
    n.value = Tensor::zeros({static_cast<int>(idx.size())});
    for (size_t t = 0; t < idx.size(); ++t) {
        if (idx[t] < 0 || idx[t] >= tx.cols())
            throw ContractError("pick index " + std::to_string(idx[t]) + " out of range");
        n.value.data[t] = tx.at(static_cast<int>(t), idx[t]);
    }
    n.idx = std::move(idx);
    return push(std::move(n), "pick");
}

NodeId Graph::sum(NodeId x) {
    Node n;
    n.op = Op::Sum;
    n.inputs = {x};
    double s = 0.0;
    for (double v : value(x).data) s += v;
    n.value = Tensor({1}, {s});
    return push(std::move(n), "sum");
}

NodeId Graph::mean(NodeId x) {
    Node n;
    n.op = Op::Mean;
    n.inputs = {x};
    double s = 0.0;
    for (double v : value(x).data) s += v;
    n.value = Tensor({1}, {s / static_cast<double>(value(x).numel())});
    return push(std::move(n), "mean");
}

NodeId Graph::tanh(NodeId x) {
    Node n;
    n.op = Op::Tanh;
    n.inputs = {x};
    n.value = kern::tanh(value(x));
    return push(std::move(n), "tanh");
}

NodeId Graph::sigmoid(NodeId x) {
    Node n;
    n.op = Op::Sigmoid;
    n.inputs = {x};
    n.value = value(x);
    for (double& v : n.value.data) v = kern::sigmoid(v);
    return push(std::move(n), "sigmoid");
}

NodeId Graph::softplus(NodeId x) {
    Node n;
    n.op = Op::Softplus;
    n.inputs = {x};
    n.value = value(x);
    for (double& v : n.value.data)
        v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return push(std::move(n), "softplus");
}

NodeId Graph::exp(NodeId x) {
    Node n;
    n.op = Op::Exp;
    n.inputs = {x};
    n.value = value(x);
    for (double& v : n.value.data) v = std::exp(v);
    return push(std::move(n), "exp");
}

NodeId Graph::log(NodeId x) {
    Node n;
    n.op = Op::Log;
    n.inputs = {x};
    n.value = value(x);
    for (double& v : n.value.data) v = std::log(v);
    return push(std::move(n), "log");
}

NodeId Graph::sqrt(NodeId x) {
    Node n;
    n.op = Op::Sqrt;
    n.inputs = {x};
    n.value = value(x);
    for (double& v : n.value.data) v = std::sqrt(v);
    return push(std::move(n), "sqrt");
}

NodeId Graph::l2_normalize_rows(NodeId x) {
    const Tensor& tx = value(x);
    Node n;
    n.op = Op::L2NormRows;
    n.inputs = {x};
    n.value = tx;
    n.saved.resize(static_cast<size_t>(tx.rows()));
    for (int i = 0; i < tx.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < tx.cols(); ++j) s += tx.at(i, j) * tx.at(i, j);
        const double norm = std::sqrt(s);
        if (norm == 0.0) throw ContractError("normalize of zero-norm row");
        n.saved[static_cast<size_t>(i)] = norm;
        for (int j = 0; j < tx.cols(); ++j) n.value.at(i, j) = tx.at(i, j) / norm;
    }
    return push(std::move(n), "l2_normalize_rows");
}

NodeId Graph::cross_attention(NodeId q, NodeId k, NodeId v) {
    const int d = value(q).cols();
    if (d <= 0 || value(k).cols() != d || value(v).cols() != d)
        throw DimError("cross_attention feature dims disagree: q " + value(q).shape_str() +
                       " k " + value(k).shape_str() + " v " + value(v).shape_str());
    if (value(k).rows() != value(v).rows())
        throw DimError("cross_attention key/value row counts disagree");
    NodeId scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    return matmul(softmax_rows(scores), v);
}

NodeId Graph::cosine(NodeId a, NodeId b) {
    NodeId num = sum(mul(a, b));
    NodeId na = sqrt(sum(mul(a, a)));
    NodeId nb = sqrt(sum(mul(b, b)));
    return div(num, mul(na, nb));
}

void Graph::accumulate(NodeId id, const Tensor& g) {
    auto& slot = adjoint_[static_cast<size_t>(id)];
    if (!has_adjoint_[static_cast<size_t>(id)]) {
        slot = g;
        has_adjoint_[static_cast<size_t>(id)] = 1;
    } else {
        for (size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
    }
}

bool Graph::backward_touched(NodeId id) const {
    return static_cast<size_t>(id) < has_adjoint_.size() &&
           has_adjoint_[static_cast<size_t>(id)] != 0;
}

std::unordered_map<NodeId, Tensor> Graph::backward(NodeId loss,
                                                   const std::vector<NodeId>& wrt) {
    const Node& ln = node(loss);
    if (ln.value.numel() != 1) throw ContractError("backward loss must be scalar");
    for (NodeId p : wrt) {
        const Node& pn = node(p);
        if (pn.op != Op::Leaf || !pn.trainable)
            throw ContractError("node " + std::to_string(p) +
                                " is not a registered trainable parameter");
    }

    // Adjoints are propagated only through nodes lying between a requested
    // parameter and the loss.
    reachable_.assign(nodes_.size(), 0);
    for (NodeId p : wrt) reachable_[static_cast<size_t>(p)] = 1;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (reachable_[i]) continue;
        for (NodeId in : nodes_[i].inputs) {
            if (reachable_[static_cast<size_t>(in)]) {
                reachable_[i] = 1;
                break;
            }
        }
    }

    adjoint_.assign(nodes_.size(), Tensor{});
    has_adjoint_.assign(nodes_.size(), 0);

    if (reachable_[static_cast<size_t>(loss)]) {
        accumulate(loss, Tensor::ones(ln.value.shape));
        for (NodeId id = loss; id >= 0; --id) {
            if (!has_adjoint_[static_cast<size_t>(id)] || !reachable_[static_cast<size_t>(id)])
                continue;
            const Node& n = nodes_[static_cast<size_t>(id)];
            const Tensor& g = adjoint_[static_cast<size_t>(id)];
            auto wants = [&](size_t slot) {
                return reachable_[static_cast<size_t>(n.inputs[slot])] != 0;
            };
            switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Matmul: {
                const Tensor& a = value(n.inputs[0]);
                const Tensor& b = value(n.inputs[1]);
                if (wants(0)) accumulate(n.inputs[0], kern::matmul(g, kern::transpose(b)));
                if (wants(1)) accumulate(n.inputs[1], kern::matmul(kern::transpose(a), g));
                break;
            }
            case Op::Transpose:
                if (wants(0)) {
                    Tensor gt = kern::transpose(g);
                    gt.shape = value(n.inputs[0]).shape;
                    accumulate(n.inputs[0], gt);
                }
                break;
            case Op::Add:
                if (wants(0)) accumulate(n.inputs[0], g);
                if (wants(1)) accumulate(n.inputs[1], g);
                break;
            case Op::Sub:
                if (wants(0)) accumulate(n.inputs[0], g);
                if (wants(1)) accumulate(n.inputs[1], kern::scale(g, -1.0));
                break;
            case Op::Mul:
                if (wants(0)) accumulate(n.inputs[0], kern::mul(g, value(n.inputs[1])));
                if (wants(1)) accumulate(n.inputs[1], kern::mul(g, value(n.inputs[0])));
                break;
            case Op::Div: {
                const Tensor& b = value(n.inputs[1]);
                if (wants(0)) {
                    Tensor ga = g;
                    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] /= b.data[i];
                    accumulate(n.inputs[0], ga);
                }
                if (wants(1)) {
                    Tensor gb = g;
                    for (size_t i = 0; i < gb.data.size(); ++i)
                        gb.data[i] *= -n.value.data[i] / b.data[i];
                    accumulate(n.inputs[1], gb);
                }
                break;
            }
            case Op::Scale:
                if (wants(0)) accumulate(n.inputs[0], kern::scale(g, n.scalar));
                break;
            case Op::AddRowvec: {
                if (wants(0)) accumulate(n.inputs[0], g);
                if (wants(1)) {
                    Tensor gv = Tensor::zeros(value(n.inputs[1]).shape);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) gv.data[static_cast<size_t>(j)] += g.at(i, j);
                    accumulate(n.inputs[1], gv);
                }
                break;
            }
            case Op::Softmax: {
                if (!wants(0)) break;
                Tensor gx = g;
                const Tensor& y = n.value;
                for (int i = 0; i < y.rows(); ++i) {
                    double s = 0.0;
                    for (int j = 0; j < y.cols(); ++j) s += g.at(i, j) * y.at(i, j);
                    for (int j = 0; j < y.cols(); ++j) gx.at(i, j) = y.at(i, j) * (g.at(i, j) - s);
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::LogSoftmax: {
                if (!wants(0)) break;
                Tensor gx = g;
                const Tensor& y = n.value;
                for (int i = 0; i < y.rows(); ++i) {
                    double s = 0.0;
                    for (int j = 0; j < y.cols(); ++j) s += g.at(i, j);
                    for (int j = 0; j < y.cols(); ++j)
                        gx.at(i, j) = g.at(i, j) - std::exp(y.at(i, j)) * s;
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::LayerNorm: {
                const Tensor& x = value(n.inputs[0]);
                const Tensor& gamma = value(n.inputs[1]);
                const int d = x.cols();
                const bool wx = wants(0), wg = wants(1), wb = wants(2);
                Tensor gx = wx ? Tensor::zeros(x.shape) : Tensor{};
                Tensor gg = wg ? Tensor::zeros(gamma.shape) : Tensor{};
                Tensor gb = wb ? Tensor::zeros(value(n.inputs[2]).shape) : Tensor{};
                for (int i = 0; i < x.rows(); ++i) {
                    const double mean = n.saved[static_cast<size_t>(i) * 2];
                    const double inv = n.saved[static_cast<size_t>(i) * 2 + 1];
                    double m1 = 0.0, m2 = 0.0; // means of gamma*g and gamma*g*xhat
                    for (int j = 0; j < d; ++j) {
                        const double xh = (x.at(i, j) - mean) * inv;
                        const double gg_j = gamma.data[static_cast<size_t>(j)] * g.at(i, j);
                        m1 += gg_j;
                        m2 += gg_j * xh;
                        if (wg) gg.data[static_cast<size_t>(j)] += g.at(i, j) * xh;
                        if (wb) gb.data[static_cast<size_t>(j)] += g.at(i, j);
                    }
                    m1 /= d;
                    m2 /= d;
                    if (wx)
                        for (int j = 0; j < d; ++j) {
                            const double xh = (x.at(i, j) - mean) * inv;
                            const double gg_j = gamma.data[static_cast<size_t>(j)] * g.at(i, j);
                            gx.at(i, j) = inv * (gg_j - m1 - xh * m2);
                        }
                }
                if (wx) accumulate(n.inputs[0], gx);
                if (wg) accumulate(n.inputs[1], gg);
                if (wb) accumulate(n.inputs[2], gb);
                break;
            }
            case Op::GatherRows: {
                if (!wants(0)) break;
                const Tensor& table = value(n.inputs[0]);
                Tensor gt = Tensor::zeros(table.shape);
                const int d = table.cols();
                for (size_t t = 0; t < n.idx.size(); ++t)
                    for (int j = 0; j < d; ++j)
                        gt.at(n.idx[t], j) += g.at(static_cast<int>(t), j);
                accumulate(n.inputs[0], gt);
                break;
            }
            case Op::ConcatRows: {
                int row = 0;
                for (size_t p = 0; p < n.inputs.size(); ++p) {
                    const Tensor& part = value(n.inputs[p]);
                    if (wants(p)) {
                        Tensor gp = Tensor::zeros(part.shape);
                        std::copy_n(&g.data[static_cast<size_t>(row) * g.cols()], part.numel(),
                                    gp.data.begin());
                        accumulate(n.inputs[p], gp);
                    }
                    row += part.rows();
                }
                break;
            }
            case Op::SliceRows: {
                if (!wants(0)) break;
                const Tensor& x = value(n.inputs[0]);
                Tensor gx = Tensor::zeros(x.shape);
                std::copy(g.data.begin(), g.data.end(),
                          gx.data.begin() + static_cast<long>(n.idx[0]) * x.cols());
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Pick: {
                if (!wants(0)) break;
                const Tensor& x = value(n.inputs[0]);
                Tensor gx = Tensor::zeros(x.shape);
                for (size_t t = 0; t < n.idx.size(); ++t)
                    gx.at(static_cast<int>(t), n.idx[t]) += g.data[t];
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Sum: {
                if (!wants(0)) break;
                accumulate(n.inputs[0], Tensor::full(value(n.inputs[0]).shape, g.data[0]));
                break;
            }
            case Op::Mean: {
                if (!wants(0)) break;
                const Tensor& x = value(n.inputs[0]);
                accumulate(n.inputs[0],
                           Tensor::full(x.shape, g.data[0] / static_cast<double>(x.numel())));
                break;
            }
            case Op::Tanh: {
                if (!wants(0)) break;
                Tensor gx = g;
                for (size_t i = 0; i < gx.data.size(); ++i)
                    gx.data[i] *= 1.0 - n.value.data[i] * n.value.data[i];
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Sigmoid: {
                if (!wants(0)) break;
                Tensor gx = g;
                for (size_t i = 0; i < gx.data.size(); ++i)
                    gx.data[i] *= n.value.data[i] * (1.0 - n.value.data[i]);
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Softplus: {
                if (!wants(0)) break;
                const Tensor& x = value(n.inputs[0]);
                Tensor gx = g;
                for (size_t i = 0; i < gx.data.size(); ++i)
                    gx.data[i] *= kern::sigmoid(x.data[i]);
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Exp: {
                if (!wants(0)) break;
                accumulate(n.inputs[0], kern::mul(g, n.value));
                break;
            }
            case Op::Log: {
                if (!wants(0)) break;
                const Tensor& x = value(n.inputs[0]);
                Tensor gx = g;
                for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] /= x.data[i];
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::Sqrt: {
                if (!wants(0)) break;
                Tensor gx = g;
                for (size_t i = 0; i < gx.data.size(); ++i)
                    gx.data[i] *= 0.5 / n.value.data[i];
                accumulate(n.inputs[0], gx);
                break;
            }
            case Op::L2NormRows: {
                if (!wants(0)) break;
                const Tensor& y = n.value;
                Tensor gx = g;
                for (int i = 0; i < y.rows(); ++i) {
                    double dotgy = 0.0;
                    for (int j = 0; j < y.cols(); ++j) dotgy += g.at(i, j) * y.at(i, j);
                    const double inv = 1.0 / n.saved[static_cast<size_t>(i)];
                    for (int j = 0; j < y.cols(); ++j)
                        gx.at(i, j) = (g.at(i, j) - dotgy * y.at(i, j)) * inv;
                }
                accumulate(n.inputs[0], gx);
                break;
            }
            }
        }
    }

    std::unordered_map<NodeId, Tensor> grads;
    grads.reserve(wrt.size());
    for (NodeId p : wrt) {
        if (has_adjoint_[static_cast<size_t>(p)])
            grads.emplace(p, adjoint_[static_cast<size_t>(p)]);
        else
            grads.emplace(p, Tensor::zeros(value(p).shape));
    }
    return grads;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& p,
                        double h) {
    if (h <= 0.0) throw ContractError("finite_diff_grad requires h > 0");
    Tensor grad = Tensor::zeros(p.shape);
    Tensor probe = p;
    for (size_t i = 0; i < p.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        grad.data[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double max_rel_error(const Tensor& analytic, const Tensor& numeric, double floor) {
    if (!analytic.same_shape(numeric)) throw DimError("max_rel_error shape mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < analytic.data.size(); ++i) {
        const double a = analytic.data[i], b = numeric.data[i];
        const double denom = std::max({std::abs(a), std::abs(b), floor});
        worst = std::max(worst, std::abs(a - b) / denom);
    }
    return worst;
}

} // namespace ttarl
