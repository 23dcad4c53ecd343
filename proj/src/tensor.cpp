#include "tpgst/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tpgst {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// ---- ParamSet / GradStore ---------------------------------------------------

Parameter& ParamSet::add(const std::string& name, Shape shape) {
    if (find(name) != nullptr) {
        throw UsageError("parameter already registered: " + name);
    }
    for (int d : shape) {
        if (d <= 0) throw DimensionError("parameter " + name + ": bad shape " + shape_str(shape));
    }
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->shape = std::move(shape);
    p->value.assign(numel(p->shape), 0.0);
    p->grad.assign(p->value.size(), 0.0);
    p->id = static_cast<int>(params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter* ParamSet::find(std::string_view name) {
    for (auto& p : params_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

const Parameter* ParamSet::find(std::string_view name) const {
    return const_cast<ParamSet*>(this)->find(name);
}

void ParamSet::zero_grads() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
}

GradStore::GradStore(const ParamSet& params) {
    slots_.resize(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        slots_[i].assign(params.at(i).size(), 0.0);
    }
}

void GradStore::accumulate_into(ParamSet& params) const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        Parameter& p = params.at(i);
        const std::vector<double>& s = slots_[i];
        for (std::size_t j = 0; j < s.size(); ++j) p.grad[j] += s[j];
    }
}

// ---- Tensor -----------------------------------------------------------------

double Tensor::scalar() const {
    if (!node_ || node_->value.size() != 1) {
        throw UsageError("scalar() on tensor of shape " +
                         (node_ ? shape_str(node_->shape) : std::string("<null>")));
    }
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->param != nullptr) return node_->param->grad;
    return node_->grad;
}

Graph& graph_of(Tensor t) { return *t.graph_; }
Node* node_of(Tensor t) { return t.node_; }

// ---- Graph ------------------------------------------------------------------

Node* Graph::alloc() {
    nodes_.push_back(std::make_unique<Node>());
    Node* n = nodes_.back().get();
    n->index = static_cast<int>(nodes_.size()) - 1;
    return n;
}

Tensor Graph::constant(Shape shape, std::vector<double> values) {
    for (int d : shape) {
        if (d <= 0) throw DimensionError("constant: bad shape " + shape_str(shape));
    }
    std::size_t n = numel(shape);
    if (values.empty()) values.assign(n, 0.0);
    if (values.size() != n) {
        throw DimensionError("constant: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(shape));
    }
    Node* node = alloc();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = Op::Leaf;
    node->requires_grad = false;
    return Tensor(this, node);
}

Tensor Graph::value(Shape shape, std::vector<double> values, bool requires_grad) {
    Tensor t = constant(std::move(shape), std::move(values));
    node_of(t)->requires_grad = requires_grad;
    return t;
}

Tensor Graph::param(Parameter& p) {
    for (auto& [pp, node] : param_nodes_) {
        if (pp == &p) return Tensor(this, node);
    }
    Node* node = alloc();
    node->shape = p.shape;
    node->value = p.value;
    node->op = Op::ParamLeaf;
    node->requires_grad = true;
    node->param = &p;
    param_nodes_.emplace_back(&p, node);
    return Tensor(this, node);
}

void Graph::zero_node_grads() {
    for (auto& n : nodes_) std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

// ---- op construction helpers -------------------------------------------------

namespace {

Node* check_same_graph(Graph* g, const std::vector<Tensor>& ts) {
    for (Tensor t : ts) {
        if (&graph_of(t) != g) throw UsageError("operands belong to different graphs");
    }
    return nullptr;
}

double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += a * x
inline void axpy(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(std::size_t n, const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

bool fault_flags[5] = {false, false, false, false, false};

}  // namespace

namespace debug {
void set_adjoint_fault(Unary kind, bool enabled) {
    fault_flags[static_cast<int>(kind)] = enabled;
}
}  // namespace debug

Tensor make_node(Graph& g, Op op, Shape shape, std::vector<Node*> inputs) {
    Node* n = g.alloc();
    n->op = op;
    n->shape = std::move(shape);
    n->value.assign(numel(n->shape), 0.0);
    n->inputs = std::move(inputs);
    for (Node* in : n->inputs) {
        if (in->requires_grad) n->requires_grad = true;
    }
    return Tensor(&g, n);
}

// ---- elementwise / simple ops -------------------------------------------------

static void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

Tensor add(Tensor a, Tensor b) {
    require_same_shape(a, b, "add");
    check_same_graph(&graph_of(a), {a, b});
    Tensor out = make_node(graph_of(a), Op::Add, a.shape(), {node_of(a), node_of(b)});
    Node* n = node_of(out);
    const double* pa = node_of(a)->value.data();
    const double* pb = node_of(b)->value.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] + pb[i];
    return out;
}

Tensor sub(Tensor a, Tensor b) {
    require_same_shape(a, b, "sub");
    check_same_graph(&graph_of(a), {a, b});
    Tensor out = make_node(graph_of(a), Op::Sub, a.shape(), {node_of(a), node_of(b)});
    Node* n = node_of(out);
    const double* pa = node_of(a)->value.data();
    const double* pb = node_of(b)->value.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] - pb[i];
    return out;
}

Tensor mul(Tensor a, Tensor b) {
    require_same_shape(a, b, "mul");
    check_same_graph(&graph_of(a), {a, b});
    Tensor out = make_node(graph_of(a), Op::Mul, a.shape(), {node_of(a), node_of(b)});
    Node* n = node_of(out);
    const double* pa = node_of(a)->value.data();
    const double* pb = node_of(b)->value.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] * pb[i];
    return out;
}

Tensor scale(Tensor a, double c) {
    Tensor out = make_node(graph_of(a), Op::Scale, a.shape(), {node_of(a)});
    Node* n = node_of(out);
    n->scratch = {c};
    const double* pa = node_of(a)->value.data();
    for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = pa[i] * c;
    return out;
}

Tensor add_rowvec(Tensor m, Tensor v) {
    if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0)) {
        throw DimensionError("add_rowvec: " + shape_str(m.shape()) + " vs " +
                             shape_str(v.shape()));
    }
    check_same_graph(&graph_of(m), {m, v});
    Tensor out = make_node(graph_of(m), Op::AddRowVec, m.shape(), {node_of(m), node_of(v)});
    Node* n = node_of(out);
    const std::size_t rows = static_cast<std::size_t>(m.dim(0));
    const std::size_t cols = static_cast<std::size_t>(m.dim(1));
    const double* pm = node_of(m)->value.data();
    const double* pv = node_of(v)->value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) n->value[r * cols + c] = pm[r * cols + c] + pv[c];
    }
    return out;
}

Tensor matmul(Tensor a, Tensor b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    check_same_graph(&graph_of(a), {a, b});
    const std::size_t m = static_cast<std::size_t>(a.dim(0));
    const std::size_t k = static_cast<std::size_t>(a.dim(1));
    const std::size_t nn = static_cast<std::size_t>(b.dim(1));
    Tensor out = make_node(graph_of(a), Op::Matmul, {a.dim(0), b.dim(1)}, {node_of(a), node_of(b)});
    Node* n = node_of(out);
    const double* pa = node_of(a)->value.data();
    const double* pb = node_of(b)->value.data();
    double* pc = n->value.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            axpy(nn, pa[i * k + p], pb + p * nn, pc + i * nn);
        }
    }
    return out;
}

Tensor affine(Tensor w, Tensor x, Tensor b) {
    if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0)) {
        throw DimensionError("affine: weight " + shape_str(w.shape()) + " vs input " +
                             shape_str(x.shape()));
    }
    if (b && (b.rank() != 1 || b.dim(0) != w.dim(0))) {
        throw DimensionError("affine: bias " + shape_str(b.shape()) + " vs weight " +
                             shape_str(w.shape()));
    }
    std::vector<Node*> ins = {node_of(w), node_of(x)};
    if (b) ins.push_back(node_of(b));
    check_same_graph(&graph_of(w), b ? std::vector<Tensor>{w, x, b} : std::vector<Tensor>{w, x});
    const std::size_t m = static_cast<std::size_t>(w.dim(0));
    const std::size_t k = static_cast<std::size_t>(w.dim(1));
    Tensor out = make_node(graph_of(w), Op::Affine, {w.dim(0)}, std::move(ins));
    Node* n = node_of(out);
    const double* pw = node_of(w)->value.data();
    const double* px = node_of(x)->value.data();
    for (std::size_t i = 0; i < m; ++i) n->value[i] = dot(k, pw + i * k, px);
    if (b) {
        const double* pb = node_of(b)->value.data();
        for (std::size_t i = 0; i < m; ++i) n->value[i] += pb[i];
    }
    return out;
}

Tensor matvec_t(Tensor a, Tensor x) {
    if (a.rank() != 2 || x.rank() != 1 || a.dim(0) != x.dim(0)) {
        throw DimensionError("matvec_t: " + shape_str(a.shape()) + " vs " + shape_str(x.shape()));
    }
    check_same_graph(&graph_of(a), {a, x});
    const std::size_t m = static_cast<std::size_t>(a.dim(0));
    const std::size_t k = static_cast<std::size_t>(a.dim(1));
    Tensor out = make_node(graph_of(a), Op::MatvecT, {a.dim(1)}, {node_of(a), node_of(x)});
    Node* n = node_of(out);
    const double* pa = node_of(a)->value.data();
    const double* px = node_of(x)->value.data();
    for (std::size_t i = 0; i < m; ++i) axpy(k, px[i], pa + i * k, n->value.data());
    return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    std::vector<Node*> ins;
    int total = 0;
    for (Tensor t : parts) {
        if (t.rank() != 1) throw DimensionError("concat: rank-1 inputs only");
        ins.push_back(node_of(t));
        total += t.dim(0);
    }
    check_same_graph(&graph_of(parts[0]), parts);
    Tensor out = make_node(graph_of(parts[0]), Op::Concat, {total}, std::move(ins));
    Node* n = node_of(out);
    std::size_t off = 0;
    for (Node* in : n->inputs) {
        std::memcpy(n->value.data() + off, in->value.data(), in->value.size() * sizeof(double));
        off += in->value.size();
    }
    return out;
}

Tensor row(Tensor m, int i) {
    if (m.rank() != 2) throw DimensionError("row: need rank-2, got " + shape_str(m.shape()));
    if (i < 0 || i >= m.dim(0)) {
        throw ValidationError("row: index " + std::to_string(i) + " out of range for " +
                              shape_str(m.shape()));
    }
    Tensor out = make_node(graph_of(m), Op::Row, {m.dim(1)}, {node_of(m)});
    Node* n = node_of(out);
    n->iargs = {i};
    const std::size_t cols = static_cast<std::size_t>(m.dim(1));
    std::memcpy(n->value.data(), node_of(m)->value.data() + static_cast<std::size_t>(i) * cols,
                cols * sizeof(double));
    return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    const int d = rows[0].dim(0);
    std::vector<Node*> ins;
    for (Tensor t : rows) {
        if (t.rank() != 1 || t.dim(0) != d) {
            throw DimensionError("stack_rows: inconsistent row shape " + shape_str(t.shape()));
        }
        ins.push_back(node_of(t));
    }
    check_same_graph(&graph_of(rows[0]), rows);
    Tensor out = make_node(graph_of(rows[0]), Op::StackRows,
                           {static_cast<int>(rows.size()), d}, std::move(ins));
    Node* n = node_of(out);
    for (std::size_t r = 0; r < n->inputs.size(); ++r) {
        std::memcpy(n->value.data() + r * static_cast<std::size_t>(d),
                    n->inputs[r]->value.data(), static_cast<std::size_t>(d) * sizeof(double));
    }
    return out;
}

// slice decomposition for softmax: count slices of length `len` with stride `stride`
struct AxisView {
    std::size_t slices, len, stride, slice_step;
};

static AxisView axis_view(const Shape& shape, int axis) {
    if (shape.size() == 1) {
        if (axis != 0) throw DimensionError("softmax: axis " + std::to_string(axis) +
                                            " invalid for " + shape_str(shape));
        return {1, static_cast<std::size_t>(shape[0]), 1, 0};
    }
    if (shape.size() == 2) {
        const auto r = static_cast<std::size_t>(shape[0]);
        const auto c = static_cast<std::size_t>(shape[1]);
        if (axis == 1) return {r, c, 1, c};
        if (axis == 0) return {c, r, c, 1};
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                             shape_str(shape));
    }
    throw DimensionError("softmax: rank > 2 unsupported");
}

Tensor softmax(Tensor x, int axis) {
    AxisView v = axis_view(x.shape(), axis);
    Tensor out = make_node(graph_of(x), Op::Softmax, x.shape(), {node_of(x)});
    Node* n = node_of(out);
    n->iargs = {axis};
    const double* px = node_of(x)->value.data();
    double* py = n->value.data();
    for (std::size_t s = 0; s < v.slices; ++s) {
        const double* in = px + s * v.slice_step;
        double* o = py + s * v.slice_step;
        double mx = in[0];
        for (std::size_t i = 1; i < v.len; ++i) mx = std::max(mx, in[i * v.stride]);
        double denom = 0.0;
        for (std::size_t i = 0; i < v.len; ++i) {
            const double e = std::exp(in[i * v.stride] - mx);
            o[i * v.stride] = e;
            denom += e;
        }
        const double inv = 1.0 / denom;
        for (std::size_t i = 0; i < v.len; ++i) o[i * v.stride] *= inv;
    }
    return out;
}

Tensor unary(Tensor x, Unary kind) {
    const double* px = node_of(x)->value.data();
    if (kind == Unary::Log) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (px[i] <= 0.0) {
                throw ValidationError("log: non-positive input at index " + std::to_string(i));
            }
        }
    }
    Tensor out = make_node(graph_of(x), Op::Unary, x.shape(), {node_of(x)});
    Node* n = node_of(out);
    n->unary = kind;
    px = node_of(x)->value.data();
    double* py = n->value.data();
    switch (kind) {
        case Unary::Tanh:
            for (std::size_t i = 0; i < n->value.size(); ++i) py[i] = std::tanh(px[i]);
            break;
        case Unary::Relu:
            for (std::size_t i = 0; i < n->value.size(); ++i) py[i] = px[i] > 0.0 ? px[i] : 0.0;
            break;
        case Unary::Sigmoid:
            for (std::size_t i = 0; i < n->value.size(); ++i) py[i] = sigmoid_d(px[i]);
            break;
        case Unary::Log:
            for (std::size_t i = 0; i < n->value.size(); ++i) py[i] = std::log(px[i]);
            break;
        case Unary::Exp:
            for (std::size_t i = 0; i < n->value.size(); ++i) py[i] = std::exp(px[i]);
            break;
    }
    return out;
}

Tensor gru_cell(Tensor x, Tensor h, Tensor wz, Tensor bz, Tensor wr, Tensor br, Tensor wc,
                Tensor bc) {
    const int dx = x.dim(0);
    const int dh = h.dim(0);
    if (x.rank() != 1 || h.rank() != 1) throw DimensionError("gru_cell: x and h must be rank-1");
    for (Tensor w : {wz, wr, wc}) {
        if (w.rank() != 2 || w.dim(0) != dh || w.dim(1) != dx + dh) {
            throw DimensionError("gru_cell: gate weight " + shape_str(w.shape()) + " vs expected (" +
                                 std::to_string(dh) + "x" + std::to_string(dx + dh) + ")");
        }
    }
    for (Tensor b : {bz, br, bc}) {
        if (b.rank() != 1 || b.dim(0) != dh) {
            throw DimensionError("gru_cell: gate bias " + shape_str(b.shape()));
        }
    }
    check_same_graph(&graph_of(x), {x, h, wz, bz, wr, br, wc, bc});
    Tensor out = make_node(graph_of(x), Op::GruCell, {dh},
                           {node_of(x), node_of(h), node_of(wz), node_of(bz), node_of(wr),
                            node_of(br), node_of(wc), node_of(bc)});
    Node* n = node_of(out);
    const std::size_t udx = static_cast<std::size_t>(dx);
    const std::size_t udh = static_cast<std::size_t>(dh);
    const std::size_t din = udx + udh;
    n->scratch.assign(3 * udh, 0.0);  // z, r, c
    double* z = n->scratch.data();
    double* r = z + udh;
    double* c = r + udh;

    std::vector<double> xh(din);
    std::memcpy(xh.data(), node_of(x)->value.data(), udx * sizeof(double));
    std::memcpy(xh.data() + udx, node_of(h)->value.data(), udh * sizeof(double));

    const double* pwz = node_of(wz)->value.data();
    const double* pbz = node_of(bz)->value.data();
    const double* pwr = node_of(wr)->value.data();
    const double* pbr = node_of(br)->value.data();
    for (std::size_t i = 0; i < udh; ++i) {
        z[i] = sigmoid_d(dot(din, pwz + i * din, xh.data()) + pbz[i]);
        r[i] = sigmoid_d(dot(din, pwr + i * din, xh.data()) + pbr[i]);
    }

    std::vector<double> xrh(din);
    std::memcpy(xrh.data(), node_of(x)->value.data(), udx * sizeof(double));
    const double* ph = node_of(h)->value.data();
    for (std::size_t i = 0; i < udh; ++i) xrh[udx + i] = r[i] * ph[i];

    const double* pwc = node_of(wc)->value.data();
    const double* pbc = node_of(bc)->value.data();
    for (std::size_t i = 0; i < udh; ++i) {
        c[i] = std::tanh(dot(din, pwc + i * din, xrh.data()) + pbc[i]);
        n->value[i] = (1.0 - z[i]) * ph[i] + z[i] * c[i];
    }
    return out;
}

Tensor conv1d(Tensor x, Tensor w, Tensor b, int stride, int ksize) {
    if (x.rank() != 2) throw DimensionError("conv1d: input must be rank-2 (T x Cin)");
    if (stride < 1 || ksize < 1 || ksize % 2 == 0) {
        throw ValidationError("conv1d: stride must be >= 1 and ksize odd");
    }
    const int cin = x.dim(1);
    if (w.rank() != 2 || w.dim(0) != ksize * cin) {
        throw DimensionError("conv1d: weight " + shape_str(w.shape()) + " vs expected (" +
                             std::to_string(ksize * cin) + " x Cout)");
    }
    const int cout = w.dim(1);
    if (b.rank() != 1 || b.dim(0) != cout) {
        throw DimensionError("conv1d: bias " + shape_str(b.shape()));
    }
    check_same_graph(&graph_of(x), {x, w, b});
    const int t_in = x.dim(0);
    const int t_out = (t_in + stride - 1) / stride;
    Tensor out = make_node(graph_of(x), Op::Conv1d, {t_out, cout},
                           {node_of(x), node_of(w), node_of(b)});
    Node* n = node_of(out);
    n->iargs = {stride, ksize};
    const int pad = ksize / 2;
    const double* px = node_of(x)->value.data();
    const double* pw = node_of(w)->value.data();
    const double* pb = node_of(b)->value.data();
    for (int o = 0; o < t_out; ++o) {
        double* orow = n->value.data() + static_cast<std::size_t>(o) * cout;
        for (int j = 0; j < cout; ++j) orow[j] = pb[j];
        for (int k = 0; k < ksize; ++k) {
            const int t = o * stride + k - pad;
            if (t < 0 || t >= t_in) continue;
            const double* xrow = px + static_cast<std::size_t>(t) * cin;
            for (int ci = 0; ci < cin; ++ci) {
                axpy(static_cast<std::size_t>(cout), xrow[ci],
                     pw + static_cast<std::size_t>(k * cin + ci) * cout, orow);
            }
        }
    }
    return out;
}

Tensor embed_rows(Tensor table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw DimensionError("embed_rows: table must be rank-2");
    if (ids.empty()) throw ValidationError("embed_rows: empty id list");
    const int v = table.dim(0);
    const int d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw ValidationError("embed_rows: id " + std::to_string(id) + " out of range [0, " +
                                  std::to_string(v) + ")");
        }
    }
    Tensor out = make_node(graph_of(table), Op::EmbedRows,
                           {static_cast<int>(ids.size()), d}, {node_of(table)});
    Node* n = node_of(out);
    n->iargs = ids;
    const double* pt = node_of(table)->value.data();
    for (std::size_t t = 0; t < ids.size(); ++t) {
        std::memcpy(n->value.data() + t * static_cast<std::size_t>(d),
                    pt + static_cast<std::size_t>(ids[t]) * d,
                    static_cast<std::size_t>(d) * sizeof(double));
    }
    return out;
}

Tensor reshape(Tensor x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    Tensor out = make_node(graph_of(x), Op::Reshape, std::move(shape), {node_of(x)});
    node_of(out)->value = node_of(x)->value;
    return out;
}

Tensor sum(Tensor x) {
    Tensor out = make_node(graph_of(x), Op::Sum, {1}, {node_of(x)});
    Node* n = node_of(out);
    double s = 0.0;
    for (double v : node_of(x)->value) s += v;
    n->value[0] = s;
    return out;
}

Tensor mean(Tensor x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor l1_loss(Tensor pred, Tensor target) {
    require_same_shape(pred, target, "l1_loss");
    check_same_graph(&graph_of(pred), {pred, target});
    Tensor out = make_node(graph_of(pred), Op::L1Loss, {1}, {node_of(pred), node_of(target)});
    Node* n = node_of(out);
    const double* pp = node_of(pred)->value.data();
    const double* pt = node_of(target)->value.data();
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pp[i] - pt[i]);
    n->value[0] = s / static_cast<double>(pred.size());
    return out;
}

Tensor cross_entropy_from_distribution(Tensor logits, Tensor target_dist) {
    if (logits.rank() != 1 || target_dist.rank() != 1) {
        throw DimensionError("cross_entropy_from_distribution: rank-1 inputs required");
    }
    require_same_shape(logits, target_dist, "cross_entropy_from_distribution");
    const double* pt = node_of(target_dist)->value.data();
    double tsum = 0.0;
    for (std::size_t i = 0; i < target_dist.size(); ++i) {
        if (pt[i] < 0.0) {
            throw ValidationError("cross_entropy_from_distribution: negative target at index " +
                                  std::to_string(i));
        }
        tsum += pt[i];
    }
    if (std::abs(tsum - 1.0) > 1e-6) {
        throw ValidationError("cross_entropy_from_distribution: target sums to " +
                              std::to_string(tsum) + ", expected 1");
    }
    check_same_graph(&graph_of(logits), {logits, target_dist});
    Tensor out = make_node(graph_of(logits), Op::CrossEntropyDist, {1},
                           {node_of(logits), node_of(target_dist)});
    Node* n = node_of(out);
    const std::size_t k = logits.size();
    const double* pl = node_of(logits)->value.data();
    double mx = pl[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, pl[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < k; ++i) denom += std::exp(pl[i] - mx);
    const double lse = mx + std::log(denom);
    // scratch: softmax probabilities and the actual target mass
    n->scratch.assign(k + 1, 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        n->scratch[i] = std::exp(pl[i] - lse);
        loss += pt[i] * (lse - pl[i]);
    }
    n->scratch[k] = tsum;
    n->value[0] = loss;
    return out;
}

Tensor stop_gradient(Tensor x) {
    Tensor out = make_node(graph_of(x), Op::StopGrad, x.shape(), {node_of(x)});
    Node* n = node_of(out);
    n->value = node_of(x)->value;
    n->requires_grad = false;
    return out;
}

// ---- backward ----------------------------------------------------------------

namespace {

void backward_one(Node* n) {
    const double* g = n->adjoint.data();
    const std::size_t count = n->value.size();
    switch (n->op) {
        case Op::Leaf:
        case Op::ParamLeaf:
        case Op::StopGrad:
            break;
        case Op::Add: {
            Node* a = n->inputs[0];
            Node* b = n->inputs[1];
            if (a->requires_grad) axpy(count, 1.0, g, a->adjoint.data());
            if (b->requires_grad) axpy(count, 1.0, g, b->adjoint.data());
            break;
        }
        case Op::Sub: {
            Node* a = n->inputs[0];
            Node* b = n->inputs[1];
            if (a->requires_grad) axpy(count, 1.0, g, a->adjoint.data());
            if (b->requires_grad) axpy(count, -1.0, g, b->adjoint.data());
            break;
        }
        case Op::Mul: {
            Node* a = n->inputs[0];
            Node* b = n->inputs[1];
            if (a->requires_grad) {
                for (std::size_t i = 0; i < count; ++i) a->adjoint[i] += g[i] * b->value[i];
            }
            if (b->requires_grad) {
                for (std::size_t i = 0; i < count; ++i) b->adjoint[i] += g[i] * a->value[i];
            }
            break;
        }
        case Op::Scale: {
            Node* a = n->inputs[0];
            if (a->requires_grad) axpy(count, n->scratch[0], g, a->adjoint.data());
            break;
        }
        case Op::AddRowVec: {
            Node* m = n->inputs[0];
            Node* v = n->inputs[1];
            const std::size_t cols = v->value.size();
            const std::size_t rows = count / cols;
            if (m->requires_grad) axpy(count, 1.0, g, m->adjoint.data());
            if (v->requires_grad) {
                for (std::size_t r = 0; r < rows; ++r) {
                    axpy(cols, 1.0, g + r * cols, v->adjoint.data());
                }
            }
            break;
        }
        case Op::Matmul: {
            Node* a = n->inputs[0];
            Node* b = n->inputs[1];
            const std::size_t m = static_cast<std::size_t>(a->shape[0]);
            const std::size_t k = static_cast<std::size_t>(a->shape[1]);
            const std::size_t nn = static_cast<std::size_t>(b->shape[1]);
            if (a->requires_grad) {
                // dA = G B^T
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        a->adjoint[i * k + p] += dot(nn, g + i * nn, b->value.data() + p * nn);
                    }
                }
            }
            if (b->requires_grad) {
                // dB = A^T G
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        axpy(nn, a->value[i * k + p], g + i * nn, b->adjoint.data() + p * nn);
                    }
                }
            }
            break;
        }
        case Op::Affine: {
            Node* w = n->inputs[0];
            Node* x = n->inputs[1];
            const std::size_t m = static_cast<std::size_t>(w->shape[0]);
            const std::size_t k = static_cast<std::size_t>(w->shape[1]);
            if (w->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    axpy(k, g[i], x->value.data(), w->adjoint.data() + i * k);
                }
            }
            if (x->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    axpy(k, g[i], w->value.data() + i * k, x->adjoint.data());
                }
            }
            if (n->inputs.size() == 3 && n->inputs[2]->requires_grad) {
                axpy(m, 1.0, g, n->inputs[2]->adjoint.data());
            }
            break;
        }
        case Op::MatvecT: {
            Node* a = n->inputs[0];
            Node* x = n->inputs[1];
            const std::size_t m = static_cast<std::size_t>(a->shape[0]);
            const std::size_t k = static_cast<std::size_t>(a->shape[1]);
            if (a->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    axpy(k, x->value[i], g, a->adjoint.data() + i * k);
                }
            }
            if (x->requires_grad) {
                for (std::size_t i = 0; i < m; ++i) {
                    x->adjoint[i] += dot(k, a->value.data() + i * k, g);
                }
            }
            break;
        }
        case Op::Concat: {
            std::size_t off = 0;
            for (Node* in : n->inputs) {
                if (in->requires_grad) axpy(in->value.size(), 1.0, g + off, in->adjoint.data());
                off += in->value.size();
            }
            break;
        }
        case Op::Row: {
            Node* m = n->inputs[0];
            if (m->requires_grad) {
                const std::size_t cols = count;
                axpy(cols, 1.0, g, m->adjoint.data() + static_cast<std::size_t>(n->iargs[0]) * cols);
            }
            break;
        }
        case Op::StackRows: {
            const std::size_t d = static_cast<std::size_t>(n->shape[1]);
            for (std::size_t r = 0; r < n->inputs.size(); ++r) {
                if (n->inputs[r]->requires_grad) {
                    axpy(d, 1.0, g + r * d, n->inputs[r]->adjoint.data());
                }
            }
            break;
        }
        case Op::Softmax: {
            Node* x = n->inputs[0];
            if (!x->requires_grad) break;
            AxisView v = axis_view(n->shape, n->iargs[0]);
            for (std::size_t s = 0; s < v.slices; ++s) {
                const double* y = n->value.data() + s * v.slice_step;
                const double* gy = g + s * v.slice_step;
                double* dx = x->adjoint.data() + s * v.slice_step;
                double acc = 0.0;
                for (std::size_t i = 0; i < v.len; ++i) acc += gy[i * v.stride] * y[i * v.stride];
                for (std::size_t i = 0; i < v.len; ++i) {
                    dx[i * v.stride] += y[i * v.stride] * (gy[i * v.stride] - acc);
                }
            }
            break;
        }
        case Op::Unary: {
            Node* x = n->inputs[0];
            if (!x->requires_grad) break;
            const double fault = fault_flags[static_cast<int>(n->unary)] ? 1.01 : 1.0;
            const double* y = n->value.data();
            const double* px = x->value.data();
            double* dx = x->adjoint.data();
            switch (n->unary) {
                case Unary::Tanh:
                    for (std::size_t i = 0; i < count; ++i) {
                        dx[i] += fault * g[i] * (1.0 - y[i] * y[i]);
                    }
                    break;
                case Unary::Relu:
                    for (std::size_t i = 0; i < count; ++i) {
                        dx[i] += fault * (px[i] > 0.0 ? g[i] : 0.0);
                    }
                    break;
                case Unary::Sigmoid:
                    for (std::size_t i = 0; i < count; ++i) {
                        dx[i] += fault * g[i] * y[i] * (1.0 - y[i]);
                    }
                    break;
                case Unary::Log:
                    for (std::size_t i = 0; i < count; ++i) dx[i] += fault * g[i] / px[i];
                    break;
                case Unary::Exp:
                    for (std::size_t i = 0; i < count; ++i) dx[i] += fault * g[i] * y[i];
                    break;
            }
            break;
        }
        case Op::GruCell: {
            Node* x = n->inputs[0];
            Node* h = n->inputs[1];
            Node* wz = n->inputs[2];
            Node* bz = n->inputs[3];
            Node* wr = n->inputs[4];
            Node* br = n->inputs[5];
            Node* wc = n->inputs[6];
            Node* bc = n->inputs[7];
            const std::size_t dh = count;
            const std::size_t dx = x->value.size();
            const std::size_t din = dx + dh;
            const double* z = n->scratch.data();
            const double* r = z + dh;
            const double* c = r + dh;
            const double* ph = h->value.data();

            std::vector<double> xh(din), xrh(din), dxh(din, 0.0), dxrh(din, 0.0);
            std::memcpy(xh.data(), x->value.data(), dx * sizeof(double));
            std::memcpy(xh.data() + dx, ph, dh * sizeof(double));
            std::memcpy(xrh.data(), x->value.data(), dx * sizeof(double));
            for (std::size_t i = 0; i < dh; ++i) xrh[dx + i] = r[i] * ph[i];

            std::vector<double> daz(dh), dar(dh), dac(dh);
            for (std::size_t i = 0; i < dh; ++i) {
                const double gi = g[i];
                dac[i] = gi * z[i] * (1.0 - c[i] * c[i]);
                daz[i] = gi * (c[i] - ph[i]) * z[i] * (1.0 - z[i]);
                if (h->requires_grad) h->adjoint[i] += gi * (1.0 - z[i]);
            }
            // candidate path
            for (std::size_t i = 0; i < dh; ++i) {
                if (wc->requires_grad) {
                    axpy(din, dac[i], xrh.data(), wc->adjoint.data() + i * din);
                }
                if (bc->requires_grad) bc->adjoint[i] += dac[i];
                axpy(din, dac[i], wc->value.data() + i * din, dxrh.data());
            }
            for (std::size_t i = 0; i < dh; ++i) {
                const double drh = dxrh[dx + i];
                if (h->requires_grad) h->adjoint[i] += drh * r[i];
                dar[i] = drh * ph[i] * r[i] * (1.0 - r[i]);
            }
            // gate paths
            for (std::size_t i = 0; i < dh; ++i) {
                if (wr->requires_grad) {
                    axpy(din, dar[i], xh.data(), wr->adjoint.data() + i * din);
                }
                if (br->requires_grad) br->adjoint[i] += dar[i];
                axpy(din, dar[i], wr->value.data() + i * din, dxh.data());
                if (wz->requires_grad) {
                    axpy(din, daz[i], xh.data(), wz->adjoint.data() + i * din);
                }
                if (bz->requires_grad) bz->adjoint[i] += daz[i];
                axpy(din, daz[i], wz->value.data() + i * din, dxh.data());
            }
            if (x->requires_grad) {
                for (std::size_t i = 0; i < dx; ++i) x->adjoint[i] += dxh[i] + dxrh[i];
            }
            if (h->requires_grad) {
                for (std::size_t i = 0; i < dh; ++i) h->adjoint[i] += dxh[dx + i];
            }
            break;
        }
        case Op::Conv1d: {
            Node* x = n->inputs[0];
            Node* w = n->inputs[1];
            Node* b = n->inputs[2];
            const int stride = n->iargs[0];
            const int ksize = n->iargs[1];
            const int pad = ksize / 2;
            const int t_out = n->shape[0];
            const int cout = n->shape[1];
            const int t_in = x->shape[0];
            const int cin = x->shape[1];
            for (int o = 0; o < t_out; ++o) {
                const double* grow = g + static_cast<std::size_t>(o) * cout;
                if (b->requires_grad) {
                    axpy(static_cast<std::size_t>(cout), 1.0, grow, b->adjoint.data());
                }
                for (int k = 0; k < ksize; ++k) {
                    const int t = o * stride + k - pad;
                    if (t < 0 || t >= t_in) continue;
                    const double* xrow = x->value.data() + static_cast<std::size_t>(t) * cin;
                    double* dxrow = x->requires_grad
                                        ? x->adjoint.data() + static_cast<std::size_t>(t) * cin
                                        : nullptr;
                    for (int ci = 0; ci < cin; ++ci) {
                        const std::size_t wrow = static_cast<std::size_t>(k * cin + ci) * cout;
                        if (w->requires_grad) {
                            axpy(static_cast<std::size_t>(cout), xrow[ci], grow,
                                 w->adjoint.data() + wrow);
                        }
                        if (dxrow != nullptr) {
                            dxrow[ci] += dot(static_cast<std::size_t>(cout),
                                             w->value.data() + wrow, grow);
                        }
                    }
                }
            }
            break;
        }
        case Op::EmbedRows: {
            Node* table = n->inputs[0];
            if (!table->requires_grad) break;
            const std::size_t d = static_cast<std::size_t>(n->shape[1]);
            for (std::size_t t = 0; t < n->iargs.size(); ++t) {
                axpy(d, 1.0, g + t * d,
                     table->adjoint.data() + static_cast<std::size_t>(n->iargs[t]) * d);
            }
            break;
        }
        case Op::Reshape: {
            Node* x = n->inputs[0];
            if (x->requires_grad) axpy(count, 1.0, g, x->adjoint.data());
            break;
        }
        case Op::Sum: {
            Node* x = n->inputs[0];
            if (!x->requires_grad) break;
            const double gv = g[0];
            for (std::size_t i = 0; i < x->value.size(); ++i) x->adjoint[i] += gv;
            break;
        }
        case Op::L1Loss: {
            Node* p = n->inputs[0];
            Node* t = n->inputs[1];
            const std::size_t k = p->value.size();
            const double gv = g[0] / static_cast<double>(k);
            for (std::size_t i = 0; i < k; ++i) {
                const double d = p->value[i] - t->value[i];
                const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                if (p->requires_grad) p->adjoint[i] += gv * s;
                if (t->requires_grad) t->adjoint[i] -= gv * s;
            }
            break;
        }
        case Op::CrossEntropyDist: {
            Node* l = n->inputs[0];
            Node* t = n->inputs[1];
            const std::size_t k = l->value.size();
            const double gv = g[0];
            const double tsum = n->scratch[k];
            if (l->requires_grad) {
                for (std::size_t i = 0; i < k; ++i) {
                    l->adjoint[i] += gv * (tsum * n->scratch[i] - t->value[i]);
                }
            }
            if (t->requires_grad) {
                // d/dt_i = lse - l_i = -log p_i
                for (std::size_t i = 0; i < k; ++i) {
                    t->adjoint[i] -= gv * std::log(n->scratch[i]);
                }
            }
            break;
        }
    }
}

}  // namespace

void Graph::backward(Tensor loss, GradStore* sink) {
    Node* ln = node_of(loss);
    if (ln == nullptr || &graph_of(loss) != this) {
        throw UsageError("backward: loss does not belong to this graph");
    }
    if (ln->value.size() != 1) {
        throw UsageError("backward: loss must be scalar, got shape " + shape_str(ln->shape));
    }
    const int top = ln->index;
    for (int i = 0; i <= top; ++i) {
        Node* n = nodes_[static_cast<std::size_t>(i)].get();
        n->adjoint.assign(n->value.size(), 0.0);
    }
    ln->adjoint[0] = 1.0;
    for (int i = top; i >= 0; --i) {
        Node* n = nodes_[static_cast<std::size_t>(i)].get();
        if (n->requires_grad) backward_one(n);
    }
    for (int i = 0; i <= top; ++i) {
        Node* n = nodes_[static_cast<std::size_t>(i)].get();
        if (!n->requires_grad) continue;
        if (n->op == Op::ParamLeaf) {
            std::vector<double>& dst =
                sink != nullptr ? sink->slot(n->param->id) : n->param->grad;
            for (std::size_t j = 0; j < n->adjoint.size(); ++j) dst[j] += n->adjoint[j];
        } else {
            if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
            for (std::size_t j = 0; j < n->adjoint.size(); ++j) n->grad[j] += n->adjoint[j];
        }
    }
}

// ---- finite differences -------------------------------------------------------

double finite_difference_check(const ScalarFn& f, const Shape& shape,
                               const std::vector<double>& x, double eps,
                               const std::vector<std::size_t>* coords) {
    std::vector<double> grad_ad;
    {
        Graph g;
        Tensor leaf = g.value(shape, x, true);
        Tensor out = f(g, leaf);
        if (out.size() != 1) throw UsageError("finite_difference_check: f must return a scalar");
        g.backward(out);
        grad_ad = leaf.grad();
    }
    auto eval = [&](const std::vector<double>& xv) {
        Graph g;
        Tensor leaf = g.value(shape, xv, false);
        return f(g, leaf).scalar();
    };
    std::vector<std::size_t> all;
    if (coords == nullptr) {
        all.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) all[i] = i;
        coords = &all;
    }
    double max_rel = 0.0;
    std::vector<double> xp = x;
    for (std::size_t c : *coords) {
        const double orig = xp[c];
        xp[c] = orig + eps;
        const double fp = eval(xp);
        xp[c] = orig - eps;
        const double fm = eval(xp);
        xp[c] = orig;
        const double g_fd = (fp - fm) / (2.0 * eps);
        const double g_ad = grad_ad[c];
        const double rel =
            std::abs(g_ad - g_fd) / std::max({1.0, std::abs(g_ad), std::abs(g_fd)});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace tpgst
