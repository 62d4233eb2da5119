#include "hfgn/numkernel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hfgn::nk {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor& t) {
    return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor& t) {
    return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
}

Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape() == nullptr || a.tape() != b.tape()) {
        throw std::invalid_argument(std::string(op) + ": operands on different tapes");
    }
    return *a.tape();
}

Var checked(Tape& tape, const char* op, Tensor value, Tape::Backward back) {
    if (!value.all_finite()) {
        throw NonFiniteError(std::string(op) + ": produced non-finite values");
    }
    return tape.record(std::move(value), std::move(back));
}

void accumulate(Tensor& dst, const Tensor& src) {
    auto d = dst.values();
    auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void check_offsets(std::span<const std::size_t> offsets, std::size_t rows, const char* op) {
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows) {
        throw ShapeError(std::string(op) + ": offsets must span [0, rows]");
    }
    for (std::size_t k = 1; k < offsets.size(); ++k) {
        if (offsets[k] < offsets[k - 1]) {
            throw ShapeError(std::string(op) + ": offsets must be non-decreasing");
        }
    }
}

} // namespace

// ---- Tensor ----

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values for shape (" +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
    }
}

Tensor Tensor::column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(n, 1, std::move(values));
}

Tensor Tensor::row(std::vector<double> values) {
    const auto n = values.size();
    return Tensor(1, n, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '(' << rows_ << 'x' << cols_ << ')';
    return os.str();
}

// ---- Var / Tape ----

const Tensor& Var::value() const {
    if (tape_ == nullptr) throw std::logic_error("Var: unbound handle");
    return tape_->value_of(id_);
}

Var Tape::record(Tensor value, Backward back) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
}

Tape::ParamSlot& Tape::slot_for(const Parameter& p) {
    for (auto& s : slots_) {
        if (s.param == &p) return s;
    }
    slots_.push_back(ParamSlot{&p, Tensor(), {}, false, 0});
    return slots_.back();
}

const Tape::ParamSlot* Tape::find_slot(const Parameter& p) const {
    for (const auto& s : slots_) {
        if (s.param == &p) return &s;
    }
    return nullptr;
}

Var Tape::constant(Tensor value) {
    if (!value.all_finite()) throw NonFiniteError("constant: non-finite input");
    return record(std::move(value), nullptr);
}

Var Tape::param(const Parameter& p) {
    if (!p.value.all_finite()) throw NonFiniteError("parameter " + p.name + " is non-finite");
    ParamSlot& slot = slot_for(p);
    if (slot.whole) return Var(this, slot.whole_node);
    slot.whole = true;
    const std::size_t slot_index = static_cast<std::size_t>(&slot - slots_.data());
    Var leaf = record(p.value, [slot_index](Tape& t, std::size_t self) {
        ParamSlot& s = t.slots_[slot_index];
        if (s.grad.empty()) s.grad = Tensor(s.param->value.rows(), s.param->value.cols());
        accumulate(s.grad, t.nodes_[self].grad);
    });
    slots_[slot_index].whole_node = leaf.id();
    return leaf;
}

Var Tape::param_rows(const Parameter& p, std::span<const std::size_t> rows) {
    const Tensor& src = p.value;
    Tensor out(rows.size(), src.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= src.rows()) {
            throw ShapeError("param_rows: row " + std::to_string(rows[k]) + " out of range for " +
                             p.name + src.shape_string());
        }
        std::copy_n(src.row_span(rows[k]).begin(), src.cols(), out.row_span(k).begin());
    }
    if (!out.all_finite()) throw NonFiniteError("parameter " + p.name + " is non-finite");
    ParamSlot& slot = slot_for(p);
    slot.rows.insert(slot.rows.end(), rows.begin(), rows.end());
    std::sort(slot.rows.begin(), slot.rows.end());
    slot.rows.erase(std::unique(slot.rows.begin(), slot.rows.end()), slot.rows.end());
    const std::size_t slot_index = static_cast<std::size_t>(&slot - slots_.data());
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return record(std::move(out), [slot_index, idx = std::move(idx)](Tape& t, std::size_t self) {
        ParamSlot& s = t.slots_[slot_index];
        if (s.grad.empty()) s.grad = Tensor(s.param->value.rows(), s.param->value.cols());
        const Tensor& g = t.nodes_[self].grad;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto dst = s.grad.row_span(idx[k]);
            auto src = g.row_span(k);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
    });
}

Var Tape::touched_sq_norm() {
    struct Entry {
        std::size_t slot;
        bool whole;
        std::vector<std::size_t> rows;
    };
    std::vector<Entry> entries;
    double total = 0.0;
    for (std::size_t k = 0; k < slots_.size(); ++k) {
        const ParamSlot& s = slots_[k];
        const Tensor& v = s.param->value;
        if (s.whole) {
            for (double x : v.values()) total += x * x;
            entries.push_back({k, true, {}});
        } else if (!s.rows.empty()) {
            for (std::size_t r : s.rows) {
                for (double x : v.row_span(r)) total += x * x;
            }
            entries.push_back({k, false, s.rows});
        }
    }
    return record(Tensor::scalar(total), [entries = std::move(entries)](Tape& t, std::size_t self) {
        const double g = t.nodes_[self].grad[0];
        for (const Entry& e : entries) {
            ParamSlot& s = t.slots_[e.slot];
            const Tensor& v = s.param->value;
            if (s.grad.empty()) s.grad = Tensor(v.rows(), v.cols());
            if (e.whole) {
                for (std::size_t i = 0; i < v.size(); ++i) s.grad[i] += 2.0 * g * v[i];
            } else {
                for (std::size_t r : e.rows) {
                    auto dst = s.grad.row_span(r);
                    auto src = v.row_span(r);
                    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += 2.0 * g * src[c];
                }
            }
        }
    });
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw std::invalid_argument("backward: loss is not on this tape");
    if (backward_done_) throw std::logic_error("backward: already run on this tape; reset() first");
    const Tensor& v = loss.value();
    if (v.rows() != 1 || v.cols() != 1) {
        throw ShapeError("backward: loss must be 1x1, got " + v.shape_string());
    }
    backward_done_ = true;
    grad_of(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.back && !n.grad.empty()) n.back(*this, id);
    }
}

Tensor Tape::gradient(const Parameter& p) const {
    const ParamSlot* s = find_slot(p);
    if (s == nullptr || s->grad.empty()) return Tensor(p.value.rows(), p.value.cols());
    return s->grad;
}

bool Tape::touched(const Parameter& p) const { return find_slot(p) != nullptr; }

void Tape::reset() {
    nodes_.clear();
    slots_.clear();
    backward_done_ = false;
}

// ---- ops ----

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
    Tensor out(av.rows(), bv.cols());
    view(out).noalias() = view(av) * view(bv);
    const auto ai = a.id(), bi = b.id();
    return checked(t, "matmul", std::move(out), [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        view(tp.grad_of(ai)).noalias() += view(g) * view(tp.value_of(bi)).transpose();
        view(tp.grad_of(bi)).noalias() += view(tp.value_of(ai)).transpose() * view(g);
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul_nt");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
    Tensor out(av.rows(), bv.rows());
    view(out).noalias() = view(av) * view(bv).transpose();
    const auto ai = a.id(), bi = b.id();
    return checked(t, "matmul_nt", std::move(out), [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        view(tp.grad_of(ai)).noalias() += view(g) * view(tp.value_of(bi));
        view(tp.grad_of(bi)).noalias() += view(g).transpose() * view(tp.value_of(ai));
    });
}

Var transpose(Var a) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    Tensor out(av.cols(), av.rows());
    view(out) = view(av).transpose();
    const auto ai = a.id();
    return checked(t, "transpose", std::move(out), [ai](Tape& tp, std::size_t self) {
        view(tp.grad_of(ai)) += view(tp.grad_of(self)).transpose();
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_fail("add", av, bv);
    Tensor out = av;
    accumulate(out, bv);
    const auto ai = a.id(), bi = b.id();
    return checked(t, "add", std::move(out), [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        accumulate(tp.grad_of(ai), g);
        accumulate(tp.grad_of(bi), g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_fail("sub", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const auto ai = a.id(), bi = b.id();
    return checked(t, "sub", std::move(out), [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        accumulate(tp.grad_of(ai), g);
        Tensor& gb = tp.grad_of(bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
}

Var hadamard(Var a, Var b) {
    Tape& t = same_tape(a, b, "hadamard");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_fail("hadamard", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const auto ai = a.id(), bi = b.id();
    return checked(t, "hadamard", std::move(out), [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        const Tensor& x = tp.value_of(ai);
        const Tensor& y = tp.value_of(bi);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        Tensor& gb = tp.grad_of(bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape();
    Tensor out = a.value();
    for (double& v : out.values()) v *= s;
    const auto ai = a.id();
    return checked(t, "scale", std::move(out), [ai, s](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

Var add_row(Var a, Var bias) {
    Tape& t = same_tape(a, bias, "add_row");
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) shape_fail("add_row", av, bv);
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
    }
    const auto ai = a.id(), bi = bias.id();
    return checked(t, "add_row", std::move(out), [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        accumulate(tp.grad_of(ai), g);
        Tensor& gb = tp.grad_of(bi);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto row = g.row_span(r);
            for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
        }
    });
}

Var leaky_relu(Var a, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
    Tape& t = *a.tape();
    Tensor out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : slope * v;
    const auto ai = a.id();
    return checked(t, "leaky_relu", std::move(out), [ai, slope](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        const Tensor& x = tp.value_of(ai);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : slope);
    });
}

Var softmax_rows(Var a) {
    Tape& t = *a.tape();
    Tensor out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        if (row.empty()) continue;
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : row) v /= z;
    }
    const auto ai = a.id();
    return checked(t, "softmax_rows", std::move(out), [ai](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        const Tensor& y = tp.value_of(self);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            auto yr = y.row_span(r);
            auto gr = g.row_span(r);
            double dot = 0.0;
            for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
            auto out_row = ga.row_span(r);
            for (std::size_t c = 0; c < yr.size(); ++c) out_row[c] += yr[c] * (gr[c] - dot);
        }
    });
}

Var segment_softmax(Var a, std::span<const std::size_t> offsets) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    check_offsets(offsets, av.rows(), "segment_softmax");
    Tensor out = av;
    const std::size_t cols = av.cols();
    for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
        const std::size_t lo = offsets[k], hi = offsets[k + 1];
        if (lo == hi) continue;
        for (std::size_t c = 0; c < cols; ++c) {
            double mx = out(lo, c);
            for (std::size_t r = lo + 1; r < hi; ++r) mx = std::max(mx, out(r, c));
            double z = 0.0;
            for (std::size_t r = lo; r < hi; ++r) {
                out(r, c) = std::exp(out(r, c) - mx);
                z += out(r, c);
            }
            for (std::size_t r = lo; r < hi; ++r) out(r, c) /= z;
        }
    }
    const auto ai = a.id();
    std::vector<std::size_t> offs(offsets.begin(), offsets.end());
    return checked(t, "segment_softmax", std::move(out),
                   [ai, offs = std::move(offs)](Tape& tp, std::size_t self) {
                       const Tensor& g = tp.grad_of(self);
                       const Tensor& y = tp.value_of(self);
                       Tensor& ga = tp.grad_of(ai);
                       for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
                           for (std::size_t c = 0; c < y.cols(); ++c) {
                               double dot = 0.0;
                               for (std::size_t r = offs[k]; r < offs[k + 1]; ++r) dot += y(r, c) * g(r, c);
                               for (std::size_t r = offs[k]; r < offs[k + 1]; ++r) {
                                   ga(r, c) += y(r, c) * (g(r, c) - dot);
                               }
                           }
                       }
                   });
}

Var segment_sum(Var a, std::span<const std::size_t> offsets) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    check_offsets(offsets, av.rows(), "segment_sum");
    const std::size_t segs = offsets.size() - 1;
    Tensor out(segs, av.cols());
    for (std::size_t k = 0; k < segs; ++k) {
        auto dst = out.row_span(k);
        for (std::size_t r = offsets[k]; r < offsets[k + 1]; ++r) {
            auto src = av.row_span(r);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
    }
    const auto ai = a.id();
    std::vector<std::size_t> offs(offsets.begin(), offsets.end());
    return checked(t, "segment_sum", std::move(out),
                   [ai, offs = std::move(offs)](Tape& tp, std::size_t self) {
                       const Tensor& g = tp.grad_of(self);
                       Tensor& ga = tp.grad_of(ai);
                       for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
                           auto src = g.row_span(k);
                           for (std::size_t r = offs[k]; r < offs[k + 1]; ++r) {
                               auto dst = ga.row_span(r);
                               for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                           }
                       }
                   });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    Tensor out(rows.size(), av.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= av.rows()) {
            throw ShapeError("gather_rows: row " + std::to_string(rows[k]) + " out of range " +
                             av.shape_string());
        }
        std::copy_n(av.row_span(rows[k]).begin(), av.cols(), out.row_span(k).begin());
    }
    const auto ai = a.id();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return checked(t, "gather_rows", std::move(out), [ai, idx = std::move(idx)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto dst = ga.row_span(idx[k]);
            auto src = g.row_span(k);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
    });
}

Var scatter_add_rows(Var a, std::span<const std::size_t> rows, std::size_t out_rows) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (rows.size() != av.rows()) {
        throw ShapeError("scatter_add_rows: " + std::to_string(rows.size()) + " targets for " +
                         av.shape_string());
    }
    Tensor out(out_rows, av.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= out_rows) throw ShapeError("scatter_add_rows: target row out of range");
        auto dst = out.row_span(rows[k]);
        auto src = av.row_span(k);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    const auto ai = a.id();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return checked(t, "scatter_add_rows", std::move(out),
                   [ai, idx = std::move(idx)](Tape& tp, std::size_t self) {
                       const Tensor& g = tp.grad_of(self);
                       Tensor& ga = tp.grad_of(ai);
                       for (std::size_t k = 0; k < idx.size(); ++k) {
                           auto dst = ga.row_span(k);
                           auto src = g.row_span(idx[k]);
                           for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                       }
                   });
}

Var scale_rows(Var a, std::span<const double> weights) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    if (weights.size() != av.rows()) {
        throw ShapeError("scale_rows: " + std::to_string(weights.size()) + " weights for " +
                         av.shape_string());
    }
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (double& v : out.row_span(r)) v *= weights[r];
    }
    const auto ai = a.id();
    std::vector<double> w(weights.begin(), weights.end());
    return checked(t, "scale_rows", std::move(out), [ai, w = std::move(w)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            auto dst = ga.row_span(r);
            auto src = g.row_span(r);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w[r] * src[c];
        }
    });
}

Var row_sum(Var a) {
    Tape& t = *a.tape();
    const Tensor& av = a.value();
    Tensor out(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        double s = 0.0;
        for (double v : av.row_span(r)) s += v;
        out[r] = s;
    }
    const auto ai = a.id();
    return checked(t, "row_sum", std::move(out), [ai](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t r = 0; r < ga.rows(); ++r) {
            for (double& v : ga.row_span(r)) v += g[r];
        }
    });
}

Var sum(Var a) {
    Tape& t = *a.tape();
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const auto ai = a.id();
    return checked(t, "sum", Tensor::scalar(s), [ai](Tape& tp, std::size_t self) {
        const double g = tp.grad_of(self)[0];
        for (double& v : tp.grad_of(ai).values()) v += g;
    });
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

Var log_sigmoid(Var a) {
    Tape& t = *a.tape();
    Tensor out = a.value();
    for (double& v : out.values()) v = log_sigmoid(v);
    const auto ai = a.id();
    return checked(t, "log_sigmoid", std::move(out), [ai](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_of(self);
        const Tensor& x = tp.value_of(ai);
        Tensor& ga = tp.grad_of(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sigmoid(-x[i]);
    });
}

// ---- gradient check ----

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<Parameter* const> params,
                                  std::span<const Tensor> analytic, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
    if (params.size() != analytic.size()) {
        throw std::invalid_argument("finite_diff_check: one analytic gradient per parameter required");
    }
    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Parameter& param = *params[p];
        const Tensor& grad = analytic[p];
        if (!grad.same_shape(param.value)) shape_fail("finite_diff_check", grad, param.value);
        double worst = 0.0;
        for (std::size_t i = 0; i < param.value.size(); ++i) {
            const double saved = param.value[i];
            param.value[i] = saved + eps;
            const double up = loss();
            param.value[i] = saved - eps;
            const double down = loss();
            param.value[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = grad[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        report.per_parameter.emplace_back(param.name, worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }
    return report;
}

} // namespace hfgn::nk
