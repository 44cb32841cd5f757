#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "ttarl/tensor.hpp"

namespace ttarl {

using NodeId = int;

// Tape-based reverse-mode autodiff over Tensor values. A Graph records one
// forward computation; backward() then yields exact gradients for a
// requested set of trainable leaves and nothing else. Adjoint storage is
// allocated only for nodes that lie on a path from a requested parameter
// to the loss, which is both the efficiency story and a tested contract.
//
// A Graph is confined to one thread; independent graphs may run in
// parallel. Node values are immutable once recorded.
class Graph {
public:
    // Leaves -------------------------------------------------------------
    NodeId leaf(Tensor value, bool trainable = false);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }

    // Ops ----------------------------------------------------------------
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_rowvec(NodeId m, NodeId v);
    NodeId softmax_rows(NodeId x);
    NodeId log_softmax_rows(NodeId x);
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps);
    NodeId gather_rows(NodeId table, std::vector<int> idx);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId slice_rows(NodeId x, int begin, int end);
    // out[t] = x[t, idx[t]]
    NodeId pick(NodeId x, std::vector<int> idx);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId softplus(NodeId x);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId sqrt(NodeId x);
    NodeId l2_normalize_rows(NodeId x);

    // Single-head scaled dot-product attention: softmax(q k^T / sqrt(d)) v.
    NodeId cross_attention(NodeId q, NodeId k, NodeId v);
    // Cosine similarity of two vectors as a scalar node.
    NodeId cosine(NodeId a, NodeId b);

    // Access ---------------------------------------------------------------
    const Tensor& value(NodeId id) const;
    size_t size() const { return nodes_.size(); }

    // Reverse pass. `loss` must be scalar; every id in `wrt` must be a
    // trainable leaf. Returns one gradient per requested id (zeros when the
    // loss does not depend on it).
    std::unordered_map<NodeId, Tensor> backward(NodeId loss, const std::vector<NodeId>& wrt);

    // True when the last backward() allocated adjoint storage for `id`.
    bool backward_touched(NodeId id) const;

private:
    enum class Op {
        Leaf, Matmul, Transpose, Add, Sub, Mul, Div, Scale, AddRowvec,
        Softmax, LogSoftmax, LayerNorm, GatherRows, ConcatRows, SliceRows,
        Pick, Sum, Mean, Tanh, Sigmoid, Softplus, Exp, Log, Sqrt, L2NormRows,
    };

    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        bool trainable = false;
        std::vector<int> idx;      // gather/pick/slice metadata
        double scalar = 0.0;       // scale factor or layer_norm eps
        std::vector<double> saved; // per-row statistics for LayerNorm / L2NormRows
    };

    NodeId push(Node n, const char* opname);
    const Node& node(NodeId id) const;
    void accumulate(NodeId id, const Tensor& g);

    std::vector<Node> nodes_;
    std::vector<Tensor> adjoint_;
    std::vector<char> has_adjoint_;
    std::vector<char> reachable_;
};

// Central finite differences (f(p + h e_i) - f(p - h e_i)) / 2h. The
// independent gradient oracle used by the test suites and `gradcheck`.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& p,
                        double h);

// max_i |a_i - f_i| / max(|a_i|, |f_i|, floor); the agreement measure used
// by gradient checks.
double max_rel_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

} // namespace ttarl
