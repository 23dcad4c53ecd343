#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tpgst/errors.hpp"

namespace tpgst {

// Shapes are rank 1 or 2; scalars use shape {1}.
using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// A persistent trainable array. Lives outside any graph; gradients accumulate
// across backward passes until zeroed.
struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    int id = -1;

    std::size_t size() const { return value.size(); }
};

// Ordered parameter registry. Registration order is the canonical order for
// initialization draws, checkpoint layout, and gradient reduction.
class ParamSet {
  public:
    Parameter& add(const std::string& name, Shape shape);
    Parameter* find(std::string_view name);
    const Parameter* find(std::string_view name) const;
    void zero_grads();
    std::size_t count() const { return params_.size(); }
    std::size_t total_size() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    Parameter& at(std::size_t i) { return *params_[i]; }
    const Parameter& at(std::size_t i) const { return *params_[i]; }

  private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

// Per-evaluation gradient sink, one slot per parameter. Lets independent
// graphs run concurrently and still reduce in a fixed order.
class GradStore {
  public:
    explicit GradStore(const ParamSet& params);
    std::vector<double>& slot(int param_id) { return slots_[param_id]; }
    // grad += slot, in registration order
    void accumulate_into(ParamSet& params) const;

  private:
    std::vector<std::vector<double>> slots_;
};

enum class Op : std::uint8_t {
    Leaf,
    ParamLeaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddRowVec,
    Matmul,
    Affine,    // W x (+ b)
    MatvecT,   // A^T x
    Concat,
    Row,
    StackRows,
    Softmax,
    Unary,
    GruCell,
    Conv1d,
    EmbedRows,
    Sum,
    L1Loss,
    CrossEntropyDist,
    StopGrad,
    Reshape,
};

enum class Unary : std::uint8_t { Tanh, Relu, Sigmoid, Log, Exp };

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> adjoint;  // pass-local, valid during/after one backward
    std::vector<double> grad;     // accumulated across backward passes
    std::vector<Node*> inputs;
    std::vector<double> scratch;  // op-specific saved intermediates
    std::vector<int> iargs;       // op-specific integer payload (axis, stride, ids, ...)
    Parameter* param = nullptr;   // bound parameter for ParamLeaf
    int index = -1;               // position in the tape
    Op op = Op::Leaf;
    Unary unary = Unary::Tanh;
    bool requires_grad = false;
};

class Graph;

// Lightweight handle to a node owned by a Graph.
class Tensor {
  public:
    Tensor() = default;

    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return node_->value.size(); }
    const std::vector<double>& values() const { return node_->value; }
    double scalar() const;
    bool requires_grad() const { return node_->requires_grad; }
    // Accumulated gradient; for parameter-bound leaves this is the parameter's.
    const std::vector<double>& grad() const;

    explicit operator bool() const { return node_ != nullptr; }

  private:
    friend class Graph;
    friend Graph& graph_of(Tensor t);
    friend Node* node_of(Tensor t);
    friend Tensor make_node(Graph& g, Op op, Shape shape, std::vector<Node*> inputs);
    Tensor(Graph* g, Node* n) : graph_(g), node_(n) {}
    Graph* graph_ = nullptr;
    Node* node_ = nullptr;
};

// A tape of executed operations. Nodes appear in execution order, so every
// operation's inputs precede it and one reverse sweep replays all adjoints.
class Graph {
  public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Tensor constant(Shape shape, std::vector<double> values);
    Tensor constant_scalar(double v) { return constant({1}, {v}); }
    Tensor zeros(Shape shape) { return constant(std::move(shape), {}); }
    Tensor value(Shape shape, std::vector<double> values, bool requires_grad);
    // Memoized per graph: repeated calls return the same node.
    Tensor param(Parameter& p);

    // Populates adjoints along the tape and accumulates into grad fields
    // (or into `sink` slots for parameter leaves, when given).
    void backward(Tensor loss, GradStore* sink = nullptr);

    void zero_node_grads();
    std::size_t size() const { return nodes_.size(); }

  private:
    friend Tensor make_node(Graph& g, Op op, Shape shape, std::vector<Node*> inputs);
    Node* alloc();
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<std::pair<Parameter*, Node*>> param_nodes_;
};

// ---- differentiable operations -------------------------------------------

Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor a, double c);
// matrix (m x n) + row vector (n), broadcast over rows
Tensor add_rowvec(Tensor m, Tensor v);
Tensor matmul(Tensor a, Tensor b);
// w: (m x n), x: (n) -> (m); optional bias b: (m). Pass Tensor{} for no bias.
Tensor affine(Tensor w, Tensor x, Tensor b);
inline Tensor matvec(Tensor w, Tensor x) { return affine(w, x, Tensor{}); }
// a: (m x n), x: (m) -> (n)
Tensor matvec_t(Tensor a, Tensor x);
Tensor concat(const std::vector<Tensor>& parts);
Tensor row(Tensor m, int i);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor softmax(Tensor x, int axis);
Tensor unary(Tensor x, Unary kind);
inline Tensor tanh(Tensor x) { return unary(x, Unary::Tanh); }
inline Tensor relu(Tensor x) { return unary(x, Unary::Relu); }
inline Tensor sigmoid(Tensor x) { return unary(x, Unary::Sigmoid); }
inline Tensor log(Tensor x) { return unary(x, Unary::Log); }
inline Tensor exp(Tensor x) { return unary(x, Unary::Exp); }

// z = sigmoid(Wz [x;h] + bz), r = sigmoid(Wr [x;h] + br),
// c = tanh(Wc [x; r.h] + bc), h' = (1-z).h + z.c
Tensor gru_cell(Tensor x, Tensor h, Tensor wz, Tensor bz, Tensor wr, Tensor br, Tensor wc,
                Tensor bc);

// x: (T x Cin) rows are timesteps; w: (ksize*Cin x Cout); b: (Cout).
// Zero-padded so out length = ceil(T / stride).
Tensor conv1d(Tensor x, Tensor w, Tensor b, int stride, int ksize);

Tensor embed_rows(Tensor table, const std::vector<int>& ids);
Tensor reshape(Tensor x, Shape shape);
Tensor sum(Tensor x);
Tensor mean(Tensor x);
Tensor l1_loss(Tensor pred, Tensor target);
Tensor cross_entropy_from_distribution(Tensor logits, Tensor target_dist);
Tensor stop_gradient(Tensor x);

// ---- gradient oracle -------------------------------------------------------

// Builds a scalar from a leaf inside the supplied graph.
using ScalarFn = std::function<Tensor(Graph&, Tensor)>;

// Central finite differences per coordinate (all coordinates, or `coords`).
// Relative error is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double finite_difference_check(const ScalarFn& f, const Shape& shape,
                               const std::vector<double>& x, double eps = 1e-5,
                               const std::vector<std::size_t>* coords = nullptr);

namespace debug {
// Test fixture: multiplies the named unary adjoint by a wrong factor so the
// finite-difference oracle can be shown to catch a corrupted op.
void set_adjoint_fault(Unary kind, bool enabled);
}  // namespace debug

}  // namespace tpgst
