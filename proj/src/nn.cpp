#include "tabsight/nn.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "tabsight/error.hpp"

namespace tabsight::nn {

namespace {

void check(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::numeric, what);
}

bool row_less(const double* a, const double* b, int n) {
    for (int k = 0; k < n; ++k) {
        if (a[k] < b[k]) return true;
        if (b[k] < a[k]) return false;
    }
    return false;
}

}  // namespace

Matrix Matrix::row(std::vector<double> values) {
    Matrix m(1, static_cast<int>(values.size()));
    m.data_ = std::move(values);
    return m;
}

void Matrix::addInPlace(const Matrix& o) {
    check(sameShape(o), "matrix shape mismatch in addInPlace");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

int ParamSet::add(std::string name, Matrix init) {
    params_.push_back(Param{std::move(name), std::move(init)});
    return static_cast<int>(params_.size()) - 1;
}

int ParamSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

std::size_t ParamSet::scalarCount() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::uint64_t ParamSet::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params_) {
        mix(p.name.data(), p.name.size());
        const int shape[2] = {p.value.rows(), p.value.cols()};
        mix(shape, sizeof(shape));
        mix(p.value.data().data(), p.value.size() * sizeof(double));
    }
    return h;
}

bool ParamSet::operator==(const ParamSet& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != o.params_[i].name || !(params_[i].value == o.params_[i].value)) return false;
    }
    return true;
}

Grads::Grads(const ParamSet& params) {
    for (int i = 0; i < params.size(); ++i) g_.emplace_back(params.at(i).value.rows(), params.at(i).value.cols());
}

void Grads::setZero() {
    for (auto& m : g_) m.setZero();
}

void Grads::addInPlace(const Grads& o) {
    for (std::size_t i = 0; i < g_.size(); ++i) g_[i].addInPlace(o.g_[i]);
}

void Grads::scale(double s) {
    for (auto& m : g_) {
        for (auto& x : m.data()) x *= s;
    }
}

double Grads::norm() const {
    double s = 0.0;
    for (const auto& m : g_) {
        for (double x : m.data()) s += x * x;
    }
    return std::sqrt(s);
}

double Grads::clip(double maxNorm) {
    const double n = norm();
    if (n > maxNorm && n > 0.0) scale(maxNorm / n);
    return n;
}

bool Grads::finite() const {
    for (const auto& m : g_) {
        for (double x : m.data()) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

Matrix uniform_init(int rows, int cols, double limit, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& x : m.data()) x = uniform(rng, -limit, limit);
    return m;
}

Matrix glorot(int fanIn, int fanOut, Rng& rng) {
    return uniform_init(fanIn, fanOut, std::sqrt(6.0 / (fanIn + fanOut)), rng);
}

Adam::Adam(const ParamSet& params, double lr_, double beta1, double beta2, double eps)
    : lr(lr_), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (int i = 0; i < params.size(); ++i) {
        m.emplace_back(params.at(i).value.rows(), params.at(i).value.cols());
        v.emplace_back(params.at(i).value.rows(), params.at(i).value.cols());
    }
}

void Adam::step(ParamSet& params, const Grads& grads, const std::vector<int>& only) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    auto update = [&](int i) {
        auto& p = params.at(i).value.data();
        const auto& g = grads.at(i).data();
        auto& mi = m[static_cast<std::size_t>(i)].data();
        auto& vi = v[static_cast<std::size_t>(i)].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            mi[k] = beta1_ * mi[k] + (1.0 - beta1_) * g[k];
            vi[k] = beta2_ * vi[k] + (1.0 - beta2_) * g[k] * g[k];
            p[k] -= lr * (mi[k] / c1) / (std::sqrt(vi[k] / c2) + eps_);
        }
    };
    if (only.empty()) {
        for (int i = 0; i < params.size(); ++i) update(i);
    } else {
        for (int i : only) update(i);
    }
}

// Tape ------------------------------------------------------------------------

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(int index) {
    check(params_ != nullptr, "tape has no parameter set");
    Node n;
    n.needsGrad = true;
    n.paramIndex = index;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.paramIndex >= 0 ? params_->at(n.paramIndex).value : n.value;
}

Matrix& Tape::grad(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.empty()) {
        const Matrix& val = value(v);
        n.grad = Matrix(val.rows(), val.cols());
    }
    return n.grad;
}

Var Tape::push(Matrix value, bool needsGrad, std::function<void()> bw) {
    Node n;
    n.value = std::move(value);
    n.needsGrad = needsGrad;
    if (needsGrad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var out) {
    const Matrix& v = value(out);
    check(v.rows() == 1 && v.cols() == 1, "backward needs a scalar output");
    grad(out)(0, 0) += 1.0;
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.backward && !n.grad.empty()) n.backward();
    }
}

void Tape::accumulate(Grads& grads) const {
    for (const Node& n : nodes_) {
        if (n.paramIndex >= 0 && !n.grad.empty()) grads.at(n.paramIndex).addInPlace(n.grad);
    }
}

// Ops -------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    check(A.cols() == B.rows(), "matmul shape mismatch");
    Matrix C(A.rows(), B.cols());
    const int n = A.rows(), m = A.cols(), p = B.cols();
    for (int i = 0; i < n; ++i) {
        double* c = C.rowPtr(i);
        const double* ar = A.rowPtr(i);
        for (int k = 0; k < m; ++k) {
            const double x = ar[k];
            const double* br = B.rowPtr(k);
            for (int j = 0; j < p; ++j) c[j] += x * br[j];
        }
    }
    const int self = t.size();
    const bool ng = t.needsGrad(a) || t.needsGrad(b);
    return t.push(std::move(C), ng, [&t, a, b, self, n, m, p] {
        const Matrix& G = t.grad(Var{self});
        const Matrix& A = t.value(a);
        const Matrix& B = t.value(b);
        if (t.needsGrad(a)) {
            Matrix& GA = t.grad(a);
            for (int i = 0; i < n; ++i) {
                const double* g = G.rowPtr(i);
                double* ga = GA.rowPtr(i);
                for (int k = 0; k < m; ++k) {
                    const double* br = B.rowPtr(k);
                    double s = 0.0;
                    for (int j = 0; j < p; ++j) s += g[j] * br[j];
                    ga[k] += s;
                }
            }
        }
        if (t.needsGrad(b)) {
            Matrix& GB = t.grad(b);
            for (int i = 0; i < n; ++i) {
                const double* g = G.rowPtr(i);
                const double* ar = A.rowPtr(i);
                for (int k = 0; k < m; ++k) {
                    const double x = ar[k];
                    double* gb = GB.rowPtr(k);
                    for (int j = 0; j < p; ++j) gb[j] += x * g[j];
                }
            }
        }
    });
}

namespace {

template <class F, class DA, class DB>
Var binary(Tape& t, Var a, Var b, F f, DA da, DB db) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(b);
    check(A.sameShape(B), "elementwise shape mismatch");
    Matrix C(A.rows(), A.cols());
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = f(A[i], B[i]);
    const int self = t.size();
    const bool ng = t.needsGrad(a) || t.needsGrad(b);
    return t.push(std::move(C), ng, [&t, a, b, self, da, db] {
        const Matrix& G = t.grad(Var{self});
        const Matrix& A = t.value(a);
        const Matrix& B = t.value(b);
        if (t.needsGrad(a)) {
            Matrix& GA = t.grad(a);
            for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i] * da(A[i], B[i]);
        }
        if (t.needsGrad(b)) {
            Matrix& GB = t.grad(b);
            for (std::size_t i = 0; i < G.size(); ++i) GB[i] += G[i] * db(A[i], B[i]);
        }
    });
}

// Unary op whose derivative is expressed through input x and output y.
template <class F, class D>
Var unary(Tape& t, Var a, F f, D d) {
    const Matrix& A = t.value(a);
    Matrix C(A.rows(), A.cols());
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = f(A[i]);
    const int self = t.size();
    return t.push(std::move(C), t.needsGrad(a), [&t, a, self, d] {
        const Matrix& G = t.grad(Var{self});
        const Matrix& A = t.value(a);
        const Matrix& Y = t.value(Var{self});
        Matrix& GA = t.grad(a);
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i] * d(A[i], Y[i]);
    });
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
    return binary(
        t, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Tape& t, Var a, Var b) {
    return binary(
        t, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Tape& t, Var a, Var b) {
    return binary(
        t, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var add_bias(Tape& t, Var a, Var bias) {
    const Matrix& A = t.value(a);
    const Matrix& B = t.value(bias);
    check(B.rows() == 1 && B.cols() == A.cols(), "bias shape mismatch");
    Matrix C = A;
    for (int i = 0; i < C.rows(); ++i) {
        double* c = C.rowPtr(i);
        for (int j = 0; j < C.cols(); ++j) c[j] += B[static_cast<std::size_t>(j)];
    }
    const int self = t.size();
    const bool ng = t.needsGrad(a) || t.needsGrad(bias);
    return t.push(std::move(C), ng, [&t, a, bias, self] {
        const Matrix& G = t.grad(Var{self});
        if (t.needsGrad(a)) t.grad(a).addInPlace(G);
        if (t.needsGrad(bias)) {
            Matrix& GB = t.grad(bias);
            for (int i = 0; i < G.rows(); ++i) {
                const double* g = G.rowPtr(i);
                for (int j = 0; j < G.cols(); ++j) GB[static_cast<std::size_t>(j)] += g[j];
            }
        }
    });
}

Var scale(Tape& t, Var a, double s) {
    return unary(
        t, a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var relu(Tape& t, Var a) {
    return unary(
        t, a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Tape& t, Var a) {
    return unary(
        t, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Tape& t, Var a) {
    return unary(
        t, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var square(Tape& t, Var a) {
    return unary(
        t, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    check(!parts.empty(), "concat of nothing");
    const int rows = t.value(parts.front()).rows();
    int cols = 0;
    bool ng = false;
    for (Var p : parts) {
        check(t.value(p).rows() == rows, "concat_cols row mismatch");
        cols += t.value(p).cols();
        ng = ng || t.needsGrad(p);
    }
    Matrix C(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Matrix& P = t.value(p);
        for (int i = 0; i < rows; ++i) std::copy(P.rowPtr(i), P.rowPtr(i) + P.cols(), C.rowPtr(i) + off);
        off += P.cols();
    }
    const int self = t.size();
    return t.push(std::move(C), ng, [&t, parts, self] {
        const Matrix& G = t.grad(Var{self});
        int off = 0;
        for (Var p : parts) {
            const int pc = t.value(p).cols();
            if (t.needsGrad(p)) {
                Matrix& GP = t.grad(p);
                for (int i = 0; i < G.rows(); ++i) {
                    for (int j = 0; j < pc; ++j) GP(i, j) += G(i, off + j);
                }
            }
            off += pc;
        }
    });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
    check(!parts.empty(), "concat of nothing");
    const int cols = t.value(parts.front()).cols();
    int rows = 0;
    bool ng = false;
    for (Var p : parts) {
        check(t.value(p).cols() == cols, "concat_rows column mismatch");
        rows += t.value(p).rows();
        ng = ng || t.needsGrad(p);
    }
    Matrix C(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Matrix& P = t.value(p);
        std::copy(P.data().begin(), P.data().end(), C.rowPtr(off));
        off += P.rows();
    }
    const int self = t.size();
    return t.push(std::move(C), ng, [&t, parts, self] {
        const Matrix& G = t.grad(Var{self});
        int off = 0;
        for (Var p : parts) {
            const Matrix& P = t.value(p);
            if (t.needsGrad(p)) {
                Matrix& GP = t.grad(p);
                for (std::size_t k = 0; k < P.size(); ++k) GP[k] += G.rowPtr(off)[k];
            }
            off += P.rows();
        }
    });
}

Var slice_cols(Tape& t, Var a, int begin, int end) {
    const Matrix& A = t.value(a);
    check(begin >= 0 && begin <= end && end <= A.cols(), "slice_cols out of range");
    Matrix C(A.rows(), end - begin);
    for (int i = 0; i < A.rows(); ++i) std::copy(A.rowPtr(i) + begin, A.rowPtr(i) + end, C.rowPtr(i));
    const int self = t.size();
    return t.push(std::move(C), t.needsGrad(a), [&t, a, begin, end, self] {
        const Matrix& G = t.grad(Var{self});
        Matrix& GA = t.grad(a);
        for (int i = 0; i < G.rows(); ++i) {
            for (int j = begin; j < end; ++j) GA(i, j) += G(i, j - begin);
        }
    });
}

Var slice_rows(Tape& t, Var a, int begin, int end) {
    std::vector<int> rows(static_cast<std::size_t>(end - begin));
    std::iota(rows.begin(), rows.end(), begin);
    return gather_rows(t, a, rows);
}

Var gather_rows(Tape& t, Var a, const std::vector<int>& rows) {
    const Matrix& A = t.value(a);
    Matrix C(static_cast<int>(rows.size()), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        check(rows[i] >= 0 && rows[i] < A.rows(), "gather_rows index out of range");
        std::copy(A.rowPtr(rows[i]), A.rowPtr(rows[i]) + A.cols(), C.rowPtr(static_cast<int>(i)));
    }
    const int self = t.size();
    return t.push(std::move(C), t.needsGrad(a), [&t, a, rows, self] {
        const Matrix& G = t.grad(Var{self});
        Matrix& GA = t.grad(a);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* g = G.rowPtr(static_cast<int>(i));
            double* ga = GA.rowPtr(rows[i]);
            for (int j = 0; j < G.cols(); ++j) ga[j] += g[j];
        }
    });
}

Var mean_rows_sorted(Tape& t, Var a) {
    const Matrix& A = t.value(a);
    check(A.rows() > 0, "mean over zero rows");
    std::vector<int> order(static_cast<std::size_t>(A.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return row_less(A.rowPtr(x), A.rowPtr(y), A.cols()); });
    Matrix C(1, A.cols());
    for (int r : order) {
        const double* ar = A.rowPtr(r);
        for (int j = 0; j < A.cols(); ++j) C[static_cast<std::size_t>(j)] += ar[j];
    }
    const double inv = 1.0 / A.rows();
    for (auto& x : C.data()) x *= inv;
    const int self = t.size();
    return t.push(std::move(C), t.needsGrad(a), [&t, a, inv, self] {
        const Matrix& G = t.grad(Var{self});
        Matrix& GA = t.grad(a);
        for (int i = 0; i < GA.rows(); ++i) {
            double* ga = GA.rowPtr(i);
            for (int j = 0; j < GA.cols(); ++j) ga[j] += G[static_cast<std::size_t>(j)] * inv;
        }
    });
}

Var sum_all(Tape& t, Var a) {
    const Matrix& A = t.value(a);
    double s = 0.0;
    for (double x : A.data()) s += x;
    const int self = t.size();
    return t.push(Matrix(1, 1, s), t.needsGrad(a), [&t, a, self] {
        const double g = t.grad(Var{self})[0];
        for (auto& x : t.grad(a).data()) x += g;
    });
}

Var mean_all(Tape& t, Var a) { return scale(t, sum_all(t, a), 1.0 / static_cast<double>(t.value(a).size())); }

Var squared_distance(Tape& t, Var a, Var b) {
    const Var d = sub(t, a, b);
    return sum_all(t, square(t, d));
}

Var graph_aggregate(Tape& t, Var h, Var gate, const std::vector<GraphEdge>& edges) {
    const Matrix& H = t.value(h);
    const Matrix& W = t.value(gate);
    const int n = H.rows(), d = H.cols();
    struct Term {
        int node;
        int cls;
    };
    std::vector<std::vector<Term>> nbr(static_cast<std::size_t>(n));
    for (const GraphEdge& e : edges) {
        check(e.a >= 0 && e.a < n && e.b >= 0 && e.b < n, "graph edge out of range");
        check(e.cls >= 0 && e.cls < W.cols(), "graph edge class out of range");
        nbr[static_cast<std::size_t>(e.a)].push_back(Term{e.b, e.cls});
        nbr[static_cast<std::size_t>(e.b)].push_back(Term{e.a, e.cls});
    }
    Matrix C = H;
    std::vector<double> buf;
    for (int i = 0; i < n; ++i) {
        auto& terms = nbr[static_cast<std::size_t>(i)];
        buf.assign(terms.size() * static_cast<std::size_t>(d), 0.0);
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const double w = W[static_cast<std::size_t>(terms[k].cls)];
            const double* hj = H.rowPtr(terms[k].node);
            for (int c = 0; c < d; ++c) buf[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] = w * hj[c];
        }
        std::vector<std::size_t> order(terms.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return row_less(&buf[x * static_cast<std::size_t>(d)], &buf[y * static_cast<std::size_t>(d)], d);
        });
        double* out = C.rowPtr(i);
        for (std::size_t k : order) {
            for (int c = 0; c < d; ++c) out[c] += buf[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
        }
    }
    const int self = t.size();
    const bool ng = t.needsGrad(h) || t.needsGrad(gate);
    return t.push(std::move(C), ng, [&t, h, gate, nbr, self, n, d] {
        const Matrix& G = t.grad(Var{self});
        const Matrix& H = t.value(h);
        const Matrix& W = t.value(gate);
        if (t.needsGrad(h)) {
            Matrix& GH = t.grad(h);
            GH.addInPlace(G);
            for (int i = 0; i < n; ++i) {
                const double* g = G.rowPtr(i);
                for (const auto& term : nbr[static_cast<std::size_t>(i)]) {
                    const double w = W[static_cast<std::size_t>(term.cls)];
                    double* gh = GH.rowPtr(term.node);
                    for (int c = 0; c < d; ++c) gh[c] += w * g[c];
                }
            }
        }
        if (t.needsGrad(gate)) {
            Matrix& GW = t.grad(gate);
            for (int i = 0; i < n; ++i) {
                const double* g = G.rowPtr(i);
                for (const auto& term : nbr[static_cast<std::size_t>(i)]) {
                    const double* hj = H.rowPtr(term.node);
                    double s = 0.0;
                    for (int c = 0; c < d; ++c) s += g[c] * hj[c];
                    GW[static_cast<std::size_t>(term.cls)] += s;
                }
            }
        }
    });
}

Var lstm_pointwise(Tape& t, Var gates, Var cPrev) {
    const Matrix& Z = t.value(gates);
    const Matrix& Cp = t.value(cPrev);
    const int B = Z.rows(), H = Cp.cols();
    check(Z.cols() == 4 * H && Cp.rows() == B, "lstm_pointwise shape mismatch");
    Matrix out(B, 2 * H);
    // cache: i, f, g, o, tanh(c)
    auto cache = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B) * static_cast<std::size_t>(5 * H));
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    for (int b = 0; b < B; ++b) {
        const double* z = Z.rowPtr(b);
        const double* cp = Cp.rowPtr(b);
        double* o = out.rowPtr(b);
        double* k = cache->data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(5 * H);
        for (int j = 0; j < H; ++j) {
            const double ig = sig(z[j]);
            const double fg = sig(z[H + j]);
            const double gg = std::tanh(z[2 * H + j]);
            const double og = sig(z[3 * H + j]);
            const double c = fg * cp[j] + ig * gg;
            const double tc = std::tanh(c);
            o[j] = og * tc;
            o[H + j] = c;
            k[j] = ig;
            k[H + j] = fg;
            k[2 * H + j] = gg;
            k[3 * H + j] = og;
            k[4 * H + j] = tc;
        }
    }
    const int self = t.size();
    const bool ng = t.needsGrad(gates) || t.needsGrad(cPrev);
    return t.push(std::move(out), ng, [&t, gates, cPrev, cache, self, B, H] {
        const Matrix& G = t.grad(Var{self});
        const Matrix& Cp = t.value(cPrev);
        Matrix* GZ = t.needsGrad(gates) ? &t.grad(gates) : nullptr;
        Matrix* GC = t.needsGrad(cPrev) ? &t.grad(cPrev) : nullptr;
        for (int b = 0; b < B; ++b) {
            const double* g = G.rowPtr(b);
            const double* k = cache->data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(5 * H);
            const double* cp = Cp.rowPtr(b);
            for (int j = 0; j < H; ++j) {
                const double ig = k[j], fg = k[H + j], gg = k[2 * H + j], og = k[3 * H + j], tc = k[4 * H + j];
                const double dh = g[j];
                const double dc = g[H + j] + dh * og * (1.0 - tc * tc);
                if (GZ) {
                    double* gz = GZ->rowPtr(b);
                    gz[j] += dc * gg * ig * (1.0 - ig);
                    gz[H + j] += dc * cp[j] * fg * (1.0 - fg);
                    gz[2 * H + j] += dc * ig * (1.0 - gg * gg);
                    gz[3 * H + j] += dh * tc * og * (1.0 - og);
                }
                if (GC) GC->rowPtr(b)[j] += dc * fg;
            }
        }
    });
}

Var lstm_sequence(Tape& t, Var x, Var wx, Var wh, Var bias, const std::vector<std::vector<int>>& steps) {
    const Matrix& X = t.value(x);
    const Matrix& Wx = t.value(wx);
    const Matrix& Wh = t.value(wh);
    const Matrix& Bv = t.value(bias);
    const int F = X.cols(), H = Wh.rows(), G4 = 4 * H;
    const int T = static_cast<int>(steps.size());
    check(T > 0, "lstm_sequence needs at least one step");
    const int B = static_cast<int>(steps.front().size());
    check(Wx.rows() == F && Wx.cols() == G4 && Wh.cols() == G4 && Bv.rows() == 1 && Bv.cols() == G4,
          "lstm_sequence shape mismatch");
    for (const auto& st : steps) {
        check(static_cast<int>(st.size()) == B, "lstm_sequence ragged batch");
        for (int r : st) check(r >= 0 && r < X.rows(), "lstm_sequence index out of range");
    }
    // Per step: activated gates (B x 4H), cell state and hidden state (B x H each).
    struct Cache {
        std::vector<Matrix> act, c, h;
    };
    auto cache = std::make_shared<Cache>();
    cache->act.reserve(static_cast<std::size_t>(T));
    Matrix h(B, H), c(B, H);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (int s = 0; s < T; ++s) {
        const auto& rows = steps[static_cast<std::size_t>(s)];
        Matrix z(B, G4);
        for (int b = 0; b < B; ++b) {
            double* zr = z.rowPtr(b);
            for (int j = 0; j < G4; ++j) zr[j] = Bv[static_cast<std::size_t>(j)];
            const double* xr = X.rowPtr(rows[static_cast<std::size_t>(b)]);
            for (int k = 0; k < F; ++k) {
                const double v = xr[k];
                const double* w = Wx.rowPtr(k);
                for (int j = 0; j < G4; ++j) zr[j] += v * w[j];
            }
            const double* hr = h.rowPtr(b);
            for (int k = 0; k < H; ++k) {
                const double v = hr[k];
                const double* w = Wh.rowPtr(k);
                for (int j = 0; j < G4; ++j) zr[j] += v * w[j];
            }
        }
        Matrix cn(B, H), hn(B, H);
        for (int b = 0; b < B; ++b) {
            double* zr = z.rowPtr(b);
            const double* cp = c.rowPtr(b);
            for (int j = 0; j < H; ++j) {
                zr[j] = sig(zr[j]);
                zr[H + j] = sig(zr[H + j]);
                zr[2 * H + j] = std::tanh(zr[2 * H + j]);
                zr[3 * H + j] = sig(zr[3 * H + j]);
                const double cv = zr[H + j] * cp[j] + zr[j] * zr[2 * H + j];
                cn(b, j) = cv;
                hn(b, j) = zr[3 * H + j] * std::tanh(cv);
            }
        }
        cache->act.push_back(std::move(z));
        cache->c.push_back(cn);
        cache->h.push_back(hn);
        c = std::move(cn);
        h = std::move(hn);
    }
    const int self = t.size();
    const bool ng = t.needsGrad(x) || t.needsGrad(wx) || t.needsGrad(wh) || t.needsGrad(bias);
    return t.push(std::move(h), ng, [&t, x, wx, wh, bias, steps, cache, self, B, H, F, T, G4] {
        const Matrix& X = t.value(x);
        const Matrix& Wx = t.value(wx);
        const Matrix& Wh = t.value(wh);
        Matrix* GX = t.needsGrad(x) ? &t.grad(x) : nullptr;
        Matrix* GWx = t.needsGrad(wx) ? &t.grad(wx) : nullptr;
        Matrix* GWh = t.needsGrad(wh) ? &t.grad(wh) : nullptr;
        Matrix* GB = t.needsGrad(bias) ? &t.grad(bias) : nullptr;
        Matrix dh = t.grad(Var{self});
        Matrix dc(B, H), dz(B, G4);
        for (int s = T - 1; s >= 0; --s) {
            const Matrix& a = cache->act[static_cast<std::size_t>(s)];
            const Matrix& cs = cache->c[static_cast<std::size_t>(s)];
            const Matrix* cp = s > 0 ? &cache->c[static_cast<std::size_t>(s - 1)] : nullptr;
            const Matrix* hp = s > 0 ? &cache->h[static_cast<std::size_t>(s - 1)] : nullptr;
            for (int b = 0; b < B; ++b) {
                const double* ar = a.rowPtr(b);
                double* dzr = dz.rowPtr(b);
                for (int j = 0; j < H; ++j) {
                    const double ig = ar[j], fg = ar[H + j], gg = ar[2 * H + j], og = ar[3 * H + j];
                    const double tc = std::tanh(cs(b, j));
                    const double dhv = dh(b, j);
                    const double dcv = dc(b, j) + dhv * og * (1.0 - tc * tc);
                    const double cpv = cp ? (*cp)(b, j) : 0.0;
                    dzr[j] = dcv * gg * ig * (1.0 - ig);
                    dzr[H + j] = dcv * cpv * fg * (1.0 - fg);
                    dzr[2 * H + j] = dcv * ig * (1.0 - gg * gg);
                    dzr[3 * H + j] = dhv * tc * og * (1.0 - og);
                    dc(b, j) = dcv * fg;
                }
            }
            const auto& rows = steps[static_cast<std::size_t>(s)];
            for (int b = 0; b < B; ++b) {
                const double* dzr = dz.rowPtr(b);
                const int xr = rows[static_cast<std::size_t>(b)];
                if (GB) {
                    for (int j = 0; j < G4; ++j) (*GB)[static_cast<std::size_t>(j)] += dzr[j];
                }
                if (GWx) {
                    const double* xv = X.rowPtr(xr);
                    for (int k = 0; k < F; ++k) {
                        double* g = GWx->rowPtr(k);
                        for (int j = 0; j < G4; ++j) g[j] += xv[k] * dzr[j];
                    }
                }
                if (GX) {
                    double* g = GX->rowPtr(xr);
                    for (int k = 0; k < F; ++k) {
                        const double* w = Wx.rowPtr(k);
                        double sum = 0.0;
                        for (int j = 0; j < G4; ++j) sum += w[j] * dzr[j];
                        g[k] += sum;
                    }
                }
                if (GWh && hp) {
                    const double* hv = hp->rowPtr(b);
                    for (int k = 0; k < H; ++k) {
                        double* g = GWh->rowPtr(k);
                        for (int j = 0; j < G4; ++j) g[j] += hv[k] * dzr[j];
                    }
                }
                double* dhr = dh.rowPtr(b);
                for (int k = 0; k < H; ++k) {
                    const double* w = Wh.rowPtr(k);
                    double sum = 0.0;
                    for (int j = 0; j < G4; ++j) sum += w[j] * dzr[j];
                    dhr[k] = sum;
                }
            }
        }
    });
}

Var masked_log_softmax(Tape& t, Var logits, const std::vector<bool>& mask) {
    const Matrix& L = t.value(logits);
    check(L.rows() == 1 && static_cast<std::size_t>(L.cols()) == mask.size(), "masked_log_softmax shape mismatch");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) mx = std::max(mx, L[i]);
    }
    if (!std::isfinite(mx)) throw Error(ErrorCode::illegal_action, "every action is masked");
    double z = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) z += std::exp(L[i] - mx);
    }
    const double lse = mx + std::log(z);
    Matrix out(1, L.cols(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out[i] = L[i] - lse;
    }
    const int self = t.size();
    return t.push(std::move(out), t.needsGrad(logits), [&t, logits, mask, self] {
        const Matrix& G = t.grad(Var{self});
        const Matrix& Y = t.value(Var{self});
        Matrix& GL = t.grad(logits);
        double gs = 0.0;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) gs += G[i];
        }
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) GL[i] += G[i] - std::exp(Y[i]) * gs;
        }
    });
}

Var masked_entropy(Tape& t, Var logp, const std::vector<bool>& mask) {
    const Matrix& L = t.value(logp);
    double h = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) h -= std::exp(L[i]) * L[i];
    }
    const int self = t.size();
    return t.push(Matrix(1, 1, h), t.needsGrad(logp), [&t, logp, mask, self] {
        const double g = t.grad(Var{self})[0];
        const Matrix& L = t.value(logp);
        Matrix& GL = t.grad(logp);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i]) GL[i] += -g * std::exp(L[i]) * (L[i] + 1.0);
        }
    });
}

Var pick(Tape& t, Var a, int r, int c) {
    const Matrix& A = t.value(a);
    check(r >= 0 && r < A.rows() && c >= 0 && c < A.cols(), "pick out of range");
    const int self = t.size();
    return t.push(Matrix(1, 1, A(r, c)), t.needsGrad(a), [&t, a, r, c, self] { t.grad(a)(r, c) += t.grad(Var{self})[0]; });
}

Var ppo_clip_loss(Tape& t, Var newLogp, double oldLogp, double advantage, double eps) {
    const double lp = t.value(newLogp)[0];
    const double ratio = std::exp(lp - oldLogp);
    const double unclipped = ratio * advantage;
    const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage;
    // The gradient flows only through the unclipped branch when it is the minimum.
    const bool active = unclipped <= clipped;
    const double loss = -std::min(unclipped, clipped);
    const int self = t.size();
    return t.push(Matrix(1, 1, loss), t.needsGrad(newLogp), [&t, newLogp, ratio, advantage, active, self] {
        if (!active) return;
        t.grad(newLogp)[0] += -t.grad(Var{self})[0] * ratio * advantage;
    });
}

Linear Linear::create(ParamSet& ps, const std::string& name, int in, int out, Rng& rng) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weight = ps.add(name + ".w", glorot(in, out, rng));
    l.bias = ps.add(name + ".b", Matrix(1, out));
    return l;
}

Var Linear::operator()(Tape& t, Var x) const { return add_bias(t, matmul(t, x, t.param(weight)), t.param(bias)); }

}  // namespace tabsight::nn
