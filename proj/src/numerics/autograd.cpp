#include "safsar/numerics/autograd.hpp"

#include <cmath>
#include <memory>

#include "safsar/numerics/kernels.hpp"

namespace safsar {

namespace {

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
    if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
    return a.tape();
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src, T factor = T{1}) {
    T* d = dst.data();
    const T* s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += factor * s[i];
}

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    Tensor<T> out = safsar::matmul(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(ia);
        const Tensor<T>& bv = t.value(ib);
        const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
        if (t.requires_grad(ia)) {
            // dA = dC * B^T
            kernels::matmul_nt(g.data(), bv.data(), t.grad_ref(ia).data(), m, n, k, true);
        }
        if (t.requires_grad(ib)) {
            // dB = A^T * dC
            kernels::matmul_tn(av.data(), g.data(), t.grad_ref(ib).data(), k, m, n, true);
        }
    });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    Tensor<T> out = safsar::matmul_nt(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(ia);
        const Tensor<T>& bv = t.value(ib);
        const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
        if (t.requires_grad(ia)) {
            // C = A B^T: dA = dC * B
            kernels::matmul_nn(g.data(), bv.data(), t.grad_ref(ia).data(), m, n, k, true);
        }
        if (t.requires_grad(ib)) {
            // dB = dC^T * A
            kernels::matmul_tn(g.data(), av.data(), t.grad_ref(ib).data(), n, m, k, true);
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    require_same_shape(a, b, "add");
    Tensor<T> out = a.value();
    add_into(out, b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) add_into(t.grad_ref(ia), g);
        if (t.requires_grad(ib)) add_into(t.grad_ref(ib), g);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    require_same_shape(a, b, "sub");
    Tensor<T> out = a.value();
    add_into(out, b.value(), T{-1});
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) add_into(t.grad_ref(ia), g);
        if (t.requires_grad(ib)) add_into(t.grad_ref(ib), g, T{-1});
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    const bool a_scalar = av.size() == 1 && bv.size() != 1;
    const bool b_scalar = bv.size() == 1 && av.size() != 1;
    if (!a_scalar && !b_scalar) require_same_shape(a, b, "mul");
    Tensor<T> out(a_scalar ? bv.shape() : av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[a_scalar ? 0 : i] * bv[b_scalar ? 0 : i];
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(std::move(out), {a, b},
                       [ia, ib, a_scalar, b_scalar](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& x = t.value(ia);
                           const Tensor<T>& y = t.value(ib);
                           if (t.requires_grad(ia)) {
                               Tensor<T>& ga = t.grad_ref(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   ga[a_scalar ? 0 : i] += g[i] * y[b_scalar ? 0 : i];
                               }
                           }
                           if (t.requires_grad(ib)) {
                               Tensor<T>& gb = t.grad_ref(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   gb[b_scalar ? 0 : i] += g[i] * x[a_scalar ? 0 : i];
                               }
                           }
                       });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
    Tensor<T> out = a.value();
    for (auto& e : out.values()) e *= factor;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia, factor](Tape<T>& t, const Tensor<T>& g) {
        add_into(t.grad_ref(ia), g, factor);
    });
}

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& bias) {
    Tape<T>& tape = same_tape(x, bias);
    const Tensor<T>& xv = x.value();
    if (bias.value().size() != xv.cols()) {
        throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " vs input " +
                             shape_str(xv.shape()));
    }
    Tensor<T> out = xv;
    const T* b = bias.value().data();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
    }
    const std::size_t ix = x.id(), ib = bias.id();
    return tape.record(std::move(out), {x, bias}, [ix, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ix)) add_into(t.grad_ref(ix), g);
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad_ref(ib);
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto row = g.row(r);
                for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
            }
        }
    });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
    T s{0};
    for (T e : a.value().values()) s += e;
    const std::size_t ia = a.id();
    return a.tape().record(Tensor<T>::scalar(s), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
        for (auto& e : t.grad_ref(ia).values()) e += g[0];
    });
}

template <typename T>
Var<T> mean_rows(const Var<T>& a) {
    const Tensor<T>& av = a.value();
    const std::size_t rows = av.rows(), cols = av.cols();
    Tensor<T> out({cols});
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = av.row(r);
        for (std::size_t j = 0; j < cols; ++j) out[j] += row[j];
    }
    const T inv = T{1} / static_cast<T>(rows);
    for (auto& e : out.values()) e *= inv;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia, inv](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < ga.rows(); ++r) {
            auto row = ga.row(r);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += inv * g[j];
        }
    });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t start, std::size_t count) {
    const Tensor<T>& av = a.value();
    if (av.rank() != 2 || count == 0 || start + count > av.rows()) {
        throw DimensionError("slice_rows [" + std::to_string(start) + ", +" +
                             std::to_string(count) + ") out of range for " + shape_str(av.shape()));
    }
    const std::size_t cols = av.cols();
    Tensor<T> out({count, cols});
    std::copy_n(av.data() + start * cols, count * cols, out.data());
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia, start, cols](Tape<T>& t, const Tensor<T>& g) {
        T* dst = t.grad_ref(ia).data() + start * cols;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

template <typename T>
Var<T> row(const Var<T>& a, std::size_t r) {
    const Tensor<T>& av = a.value();
    if (av.rank() == 1) {
        if (r != 0) throw DimensionError("row index out of range for a vector");
        return a;
    }
    if (r >= av.rows()) {
        throw DimensionError("row " + std::to_string(r) + " out of range for " +
                             shape_str(av.shape()));
    }
    const std::size_t cols = av.cols();
    Tensor<T> out({cols});
    std::copy_n(av.data() + r * cols, cols, out.data());
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia, r, cols](Tape<T>& t, const Tensor<T>& g) {
        T* dst = t.grad_ref(ia).data() + r * cols;
        for (std::size_t i = 0; i < cols; ++i) dst[i] += g[i];
    });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count) {
    const Tensor<T>& av = a.value();
    if (av.rank() != 2 || count == 0 || start + count > av.cols()) {
        throw DimensionError("slice_cols [" + std::to_string(start) + ", +" +
                             std::to_string(count) + ") out of range for " + shape_str(av.shape()));
    }
    const std::size_t rows = av.rows(), cols = av.cols();
    Tensor<T> out({rows, count});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.data() + r * cols + start, count, out.data() + r * count);
    }
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a},
                           [ia, start, count, rows, cols](Tape<T>& t, const Tensor<T>& g) {
                               T* dst = t.grad_ref(ia).data();
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < count; ++j)
                                       dst[r * cols + start + j] += g[r * count + j];
                           });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
    if (parts.empty()) throw DimensionError("concat_rows of zero parts");
    Tape<T>& tape = parts[0].tape();
    const std::size_t cols = parts[0].value().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (&p.tape() != &tape) throw ContractError("operands live on different tapes");
        if (p.value().rank() > 2 || p.value().cols() != cols) {
            throw DimensionError("concat_rows: part " + shape_str(p.shape()) +
                                 " does not have " + std::to_string(cols) + " columns");
        }
        rows += p.value().rows();
    }
    Tensor<T> out({rows, cols});
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy_n(p.value().data(), p.value().size(), out.data() + off);
        ids.push_back(p.id());
        offsets.push_back(off);
        off += p.value().size();
    }
    return tape.record(std::move(out), parts,
                       [ids = std::move(ids), offsets = std::move(offsets)](Tape<T>& t,
                                                                            const Tensor<T>& g) {
                           for (std::size_t i = 0; i < ids.size(); ++i) {
                               if (!t.requires_grad(ids[i])) continue;
                               Tensor<T>& gp = t.grad_ref(ids[i]);
                               const T* src = g.data() + offsets[i];
                               for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += src[j];
                           }
                       });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
    if (parts.empty()) throw DimensionError("concat_cols of zero parts");
    Tape<T>& tape = parts[0].tape();
    const std::size_t rows = parts[0].value().rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (&p.tape() != &tape) throw ContractError("operands live on different tapes");
        if (p.value().rank() != 2 || p.value().rows() != rows) {
            throw DimensionError("concat_cols: part " + shape_str(p.shape()) + " does not have " +
                                 std::to_string(rows) + " rows");
        }
        cols += p.value().cols();
    }
    Tensor<T> out({rows, cols});
    std::vector<std::size_t> ids;
    std::vector<std::size_t> col_offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Tensor<T>& pv = p.value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pv.data() + r * pv.cols(), pv.cols(), out.data() + r * cols + off);
        }
        ids.push_back(p.id());
        col_offsets.push_back(off);
        off += pv.cols();
    }
    return tape.record(std::move(out), parts,
                       [ids = std::move(ids), col_offsets = std::move(col_offsets), rows,
                        cols](Tape<T>& t, const Tensor<T>& g) {
                           for (std::size_t i = 0; i < ids.size(); ++i) {
                               if (!t.requires_grad(ids[i])) continue;
                               Tensor<T>& gp = t.grad_ref(ids[i]);
                               const std::size_t pc = gp.cols();
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < pc; ++j)
                                       gp[r * pc + j] += g[r * cols + col_offsets[i] + j];
                           }
                       });
}

template <typename T>
Var<T> stack_scalars(std::span<const Var<T>> parts) {
    if (parts.empty()) throw DimensionError("stack_scalars of zero parts");
    Tape<T>& tape = parts[0].tape();
    Tensor<T> out({parts.size()});
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (&parts[i].tape() != &tape) throw ContractError("operands live on different tapes");
        out[i] = parts[i].value().item();
        ids.push_back(parts[i].id());
    }
    return tape.record(std::move(out), parts, [ids = std::move(ids)](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.requires_grad(ids[i])) t.grad_ref(ids[i])[0] += g[i];
        }
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids) {
    const Tensor<T>& tv = table.value();
    if (tv.rank() != 2 || ids.empty()) {
        throw DimensionError("gather_rows expects a matrix table and at least one id");
    }
    const std::size_t cols = tv.cols();
    Tensor<T> out({ids.size(), cols});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= tv.rows()) {
            throw ContractError("row id " + std::to_string(ids[i]) + " out of range for table " +
                                shape_str(tv.shape()));
        }
        std::copy_n(tv.data() + ids[i] * cols, cols, out.data() + i * cols);
    }
    const std::size_t it = table.id();
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    return table.tape().record(std::move(out), {table},
                               [it, rows = std::move(rows), cols](Tape<T>& t, const Tensor<T>& g) {
                                   T* dst = t.grad_ref(it).data();
                                   for (std::size_t i = 0; i < rows.size(); ++i)
                                       for (std::size_t j = 0; j < cols; ++j)
                                           dst[rows[i] * cols + j] += g[i * cols + j];
                               });
}

template <typename T>
Var<T> pick(const Var<T>& a, std::size_t i) {
    if (i >= a.value().size()) {
        throw DimensionError("pick index " + std::to_string(i) + " out of range for " +
                             shape_str(a.shape()));
    }
    const std::size_t ia = a.id();
    return a.tape().record(Tensor<T>::scalar(a.value()[i]), {a},
                           [ia, i](Tape<T>& t, const Tensor<T>& g) { t.grad_ref(ia)[i] += g[0]; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& e : out.values()) {
        if (!(e > T{0})) throw DomainError("log of a non-positive value");
        e = std::log(e);
    }
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ia);
        Tensor<T>& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    });
}

template <typename T>
Var<T> softmax(const Var<T>& v) {
    Tensor<T> out = safsar::softmax(v.value());
    const std::size_t iv = v.id();
    auto y = std::make_shared<Tensor<T>>(out);
    return v.tape().record(std::move(out), {v}, [iv, y](Tape<T>& t, const Tensor<T>& g) {
        // dx_j = y_j (g_j - sum_k g_k y_k), per row
        Tensor<T>& gx = t.grad_ref(iv);
        for (std::size_t r = 0; r < y->rows(); ++r) {
            auto yr = y->row(r);
            auto gr = g.row(r);
            T s{0};
            for (std::size_t j = 0; j < yr.size(); ++j) s += gr[j] * yr[j];
            auto dx = gx.row(r);
            for (std::size_t j = 0; j < yr.size(); ++j) dx[j] += yr[j] * (gr[j] - s);
        }
    });
}

template <typename T>
Var<T> log_softmax(const Var<T>& v) {
    Tensor<T> out = safsar::log_softmax(v.value());
    const std::size_t iv = v.id();
    auto ls = std::make_shared<Tensor<T>>(out);
    return v.tape().record(std::move(out), {v}, [iv, ls](Tape<T>& t, const Tensor<T>& g) {
        // dx_j = g_j - softmax_j * sum_k g_k
        Tensor<T>& gx = t.grad_ref(iv);
        for (std::size_t r = 0; r < ls->rows(); ++r) {
            auto lr = ls->row(r);
            auto gr = g.row(r);
            T s{0};
            for (T e : gr) s += e;
            auto dx = gx.row(r);
            for (std::size_t j = 0; j < lr.size(); ++j) dx[j] += gr[j] - std::exp(lr[j]) * s;
        }
    });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
    Tape<T>& tape = same_tape(x, gain);
    same_tape(x, bias);
    const Tensor<T>& xv = x.value();
    if (gain.value().size() != xv.cols() || bias.value().size() != xv.cols()) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match input " +
                             shape_str(xv.shape()));
    }
    if (!(eps > T{0})) throw DomainError("layer_norm: eps must be positive");
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor<T> y(xv.shape());
    auto z = std::make_shared<Tensor<T>>(xv.shape());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    kernels::layer_norm_rows(xv.data(), gain.value().data(), bias.value().data(), eps, y.data(),
                             z->data(), inv_std->data(), rows, cols);
    const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
    return tape.record(
        std::move(y), {x, gain, bias},
        [ix, ig, ib, z, inv_std, rows, cols](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& gv = t.value(ig);
            if (t.requires_grad(ig) || t.requires_grad(ib)) {
                for (std::size_t r = 0; r < rows; ++r) {
                    auto gr = g.row(r);
                    auto zr = z->row(r);
                    if (t.requires_grad(ig)) {
                        Tensor<T>& gg = t.grad_ref(ig);
                        for (std::size_t j = 0; j < cols; ++j) gg[j] += gr[j] * zr[j];
                    }
                    if (t.requires_grad(ib)) {
                        Tensor<T>& gb = t.grad_ref(ib);
                        for (std::size_t j = 0; j < cols; ++j) gb[j] += gr[j];
                    }
                }
            }
            if (t.requires_grad(ix)) {
                // dx = inv_std * (dz - mean(dz) - z * mean(dz * z)), dz = g * gain
                Tensor<T>& gx = t.grad_ref(ix);
                const T n = static_cast<T>(cols);
                std::vector<T> dz(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                    auto gr = g.row(r);
                    auto zr = z->row(r);
                    T mean_dz{0}, mean_dzz{0};
                    for (std::size_t j = 0; j < cols; ++j) {
                        dz[j] = gr[j] * gv[j];
                        mean_dz += dz[j];
                        mean_dzz += dz[j] * zr[j];
                    }
                    mean_dz /= n;
                    mean_dzz /= n;
                    auto dx = gx.row(r);
                    const T is = (*inv_std)[r];
                    for (std::size_t j = 0; j < cols; ++j) {
                        dx[j] += is * (dz[j] - mean_dz - zr[j] * mean_dzz);
                    }
                }
            }
        });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
    Tensor<T> out = a.value();
    for (auto& e : out.values()) e = safsar::gelu(e);
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ia);
        Tensor<T>& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_derivative(x[i]);
    });
}

template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    if (a.value().size() != b.value().size()) {
        throw DimensionError("dot: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    T s{0};
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(Tensor<T>::scalar(s), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) add_into(t.grad_ref(ia), t.value(ib), g[0]);
        if (t.requires_grad(ib)) add_into(t.grad_ref(ib), t.value(ia), g[0]);
    });
}

template <typename T>
Var<T> cosine(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.size() != bv.size()) {
        throw DimensionError("cosine: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    T ab{0}, aa{0}, bb{0};
    for (std::size_t i = 0; i < av.size(); ++i) {
        ab += av[i] * bv[i];
        aa += av[i] * av[i];
        bb += bv[i] * bv[i];
    }
    const T na = std::sqrt(aa), nb = std::sqrt(bb);
    if (!(na >= T{1e-12}) || !(nb >= T{1e-12})) {
        throw DegenerateVectorError("cosine of a vector with norm below 1e-12");
    }
    const T c = ab / (na * nb);
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(Tensor<T>::scalar(c), {a, b},
                       [ia, ib, na, nb, c](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& x = t.value(ia);
                           const Tensor<T>& y = t.value(ib);
                           // dc/dx = y/(|x||y|) - c x/|x|^2
                           if (t.requires_grad(ia)) {
                               Tensor<T>& gx = t.grad_ref(ia);
                               for (std::size_t i = 0; i < x.size(); ++i)
                                   gx[i] += g[0] * (y[i] / (na * nb) - c * x[i] / (na * na));
                           }
                           if (t.requires_grad(ib)) {
                               Tensor<T>& gy = t.grad_ref(ib);
                               for (std::size_t i = 0; i < y.size(); ++i)
                                   gy[i] += g[0] * (x[i] / (na * nb) - c * y[i] / (nb * nb));
                           }
                       });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t target) {
    const Tensor<T>& lv = logits.value();
    if (lv.rank() != 1) throw DimensionError("cross_entropy expects a logit vector");
    if (target >= lv.size()) {
        throw ContractError("cross_entropy target " + std::to_string(target) +
                            " out of range for " + std::to_string(lv.size()) + " classes");
    }
    Tensor<T> ls = safsar::log_softmax(lv);
    const T loss = -ls[target];
    const std::size_t il = logits.id();
    auto lsp = std::make_shared<Tensor<T>>(std::move(ls));
    return logits.tape().record(Tensor<T>::scalar(loss), {logits},
                                [il, lsp, target](Tape<T>& t, const Tensor<T>& g) {
                                    Tensor<T>& gl = t.grad_ref(il);
                                    for (std::size_t j = 0; j < gl.size(); ++j) {
                                        const T p = std::exp((*lsp)[j]);
                                        gl[j] += g[0] * (p - (j == target ? T{1} : T{0}));
                                    }
                                });
}

#define SAFSAR_INSTANTIATE_AUTOGRAD(T)                                                      \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                \
    template Var<T> matmul_nt<T>(const Var<T>&, const Var<T>&);                             \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> scale<T>(const Var<T>&, T);                                             \
    template Var<T> add_row<T>(const Var<T>&, const Var<T>&);                               \
    template Var<T> sum<T>(const Var<T>&);                                                  \
    template Var<T> mean_rows<T>(const Var<T>&);                                            \
    template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                 \
    template Var<T> row<T>(const Var<T>&, std::size_t);                                     \
    template Var<T> slice_cols<T>(const Var<T>&, std::size_t, std::size_t);                 \
    template Var<T> concat_rows<T>(std::span<const Var<T>>);                                \
    template Var<T> concat_cols<T>(std::span<const Var<T>>);                                \
    template Var<T> stack_scalars<T>(std::span<const Var<T>>);                              \
    template Var<T> reshape<T>(const Var<T>&, Shape);                                       \
    template Var<T> gather_rows<T>(const Var<T>&, std::span<const std::size_t>);            \
    template Var<T> pick<T>(const Var<T>&, std::size_t);                                    \
    template Var<T> log<T>(const Var<T>&);                                                  \
    template Var<T> softmax<T>(const Var<T>&);                                              \
    template Var<T> log_softmax<T>(const Var<T>&);                                          \
    template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);          \
    template Var<T> gelu<T>(const Var<T>&);                                                 \
    template Var<T> dot<T>(const Var<T>&, const Var<T>&);                                   \
    template Var<T> cosine<T>(const Var<T>&, const Var<T>&);                                \
    template Var<T> cross_entropy<T>(const Var<T>&, std::size_t);

SAFSAR_INSTANTIATE_AUTOGRAD(float)
SAFSAR_INSTANTIATE_AUTOGRAD(double)

}  // namespace safsar
