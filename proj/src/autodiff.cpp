#include "linr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "linr/errors.hpp"

namespace linr::nn {

// ---------------------------------------------------------------- parameters

template <typename T>
int ParameterSet<T>::add(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                         std::size_t fan_out) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter name " + name);
  Parameter<T> p;
  p.name = std::move(name);
  p.value = Matrix<T>(rows, cols);
  p.grad = Matrix<T>(rows, cols);
  p.fan_in = fan_in;
  p.fan_out = fan_out;
  params_.push_back(std::move(p));

  order_.resize(params_.size());
  std::iota(order_.begin(), order_.end(), 0);
  std::sort(order_.begin(), order_.end(),
            [&](int a, int b) { return params_[a].name < params_[b].name; });
  return static_cast<int>(params_.size()) - 1;
}

template <typename T>
std::size_t ParameterSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
int ParameterSet<T>::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

template <typename T>
std::vector<T> ParameterSet<T>::flatten() const {
  std::vector<T> out;
  out.reserve(count());
  for (int id : order_) {
    const auto& d = params_[id].value.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

template <typename T>
std::vector<T> ParameterSet<T>::flatten_grad() const {
  std::vector<T> out;
  out.reserve(count());
  for (int id : order_) {
    const auto& d = params_[id].grad.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

template <typename T>
void ParameterSet<T>::unflatten(std::span<const T> values) {
  if (values.size() != count()) {
    throw CountMismatch("parameter vector has " + std::to_string(values.size()) +
                        " entries, model expects " + std::to_string(count()));
  }
  std::size_t off = 0;
  for (int id : order_) {
    auto& d = params_[id].value.data();
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), d.size(), d.begin());
    off += d.size();
  }
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.grad.fill(T(0));
}

template <typename T>
double ParameterSet<T>::squared_norm() const {
  double s = 0.0;
  for (int id : order_) {
    for (T v : params_[id].value.data()) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return s;
}

// ---------------------------------------------------------------- kernels

namespace {

template <typename T>
void linear_forward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b, Matrix<T>& y) {
  const std::size_t n = x.rows(), cin = x.cols(), cout = w.cols();
  y = Matrix<T>(n, cout);
  for (std::size_t p = 0; p < n; ++p) {
    T* out = y.row(p);
    std::copy_n(b.row(0), cout, out);
    const T* in = x.row(p);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T xv = in[ci];
      if (xv == T(0)) continue;
      const T* wr = w.row(ci);
      for (std::size_t co = 0; co < cout; ++co) out[co] += xv * wr[co];
    }
  }
}

template <typename T>
void sparse_conv_forward(const Matrix<T>& x, const NeighborTable& nb, const Matrix<T>& w,
                         const Matrix<T>& b, Matrix<T>& y) {
  const std::size_t n = x.rows(), cin = x.cols(), cout = w.cols();
  y = Matrix<T>(n, cout);
  for (std::size_t p = 0; p < n; ++p) {
    T* out = y.row(p);
    std::copy_n(b.row(0), cout, out);
    const auto taps = nb.row(p);
    for (int k = 0; k < kKernelVolume; ++k) {
      const auto q = taps[k];
      if (q < 0) continue;
      const T* in = x.row(static_cast<std::size_t>(q));
      const T* wk = w.row(static_cast<std::size_t>(k) * cin);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T xv = in[ci];
        if (xv == T(0)) continue;
        const T* wr = wk + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) out[co] += xv * wr[co];
      }
    }
  }
}

template <typename T>
T clamp_probability(T p) {
  const T eps = static_cast<T>(kProbabilityEpsilon);
  return std::clamp(p, eps, T(1) - eps);
}

}  // namespace

// ---------------------------------------------------------------- tape

template <typename T>
Tape<T>::Tape(ParameterSet<T>& params, bool record) : params_(&params), record_(record) {
  nodes_.reserve(256);
}

template <typename T>
Var Tape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

template <typename T>
Var Tape<T>::input(Matrix<T> value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::linear(Var x, int weight, int bias) {
  const auto& w = (*params_)[weight].value;
  const auto& b = (*params_)[bias].value;
  const auto& xv = value(x);
  if (xv.cols() != w.rows() || b.cols() != w.cols() || b.rows() != 1) {
    throw ShapeError("linear: input has " + std::to_string(xv.cols()) + " channels, layer expects " +
                     std::to_string(w.rows()));
  }
  Node n;
  n.op = Op::Linear;
  n.a = x;
  n.weight = weight;
  n.bias = bias;
  linear_forward(xv, w, b, n.value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sparse_conv(Var x, const NeighborTable& nb, int weight, int bias) {
  const auto& w = (*params_)[weight].value;
  const auto& b = (*params_)[bias].value;
  const auto& xv = value(x);
  if (w.rows() != xv.cols() * kKernelVolume || b.cols() != w.cols() || b.rows() != 1) {
    throw ShapeError("sparse_conv: input has " + std::to_string(xv.cols()) +
                     " channels, layer expects " + std::to_string(w.rows() / kKernelVolume));
  }
  if (nb.rows() != xv.rows()) throw ShapeError("sparse_conv: neighbor table row mismatch");
  Node n;
  n.op = Op::SparseConv;
  n.a = x;
  n.weight = weight;
  n.bias = bias;
  n.nb = &nb;
  sparse_conv_forward(xv, nb, w, b, n.value);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::relu(Var x) {
  Node n;
  n.op = Op::Relu;
  n.a = x;
  n.value = value(x);
  for (auto& v : n.value.data()) v = v > T(0) ? v : T(0);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sigmoid(Var x) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = x;
  n.value = value(x);
  for (auto& v : n.value.data()) v = T(1) / (T(1) + std::exp(-v));
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  if (!value(a).same_shape(value(b))) throw ShapeError("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.value = value(a);
  const auto& bv = value(b).data();
  auto& out = n.value.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::concat(Var a, Var b) {
  const auto& av = value(a);
  const auto& bv = value(b);
  if (av.rows() != bv.rows()) throw ShapeError("concat: row mismatch");
  Node n;
  n.op = Op::Concat;
  n.a = a;
  n.b = b;
  n.value = Matrix<T>(av.rows(), av.cols() + bv.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row(r), av.cols(), n.value.row(r));
    std::copy_n(bv.row(r), bv.cols(), n.value.row(r) + av.cols());
  }
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::embed_row(int table, std::size_t row, std::size_t count) {
  const auto& t = (*params_)[table].value;
  if (row >= t.rows()) {
    throw IndexError("embedding row " + std::to_string(row) + " out of range (table has " +
                     std::to_string(t.rows()) + ")");
  }
  Node n;
  n.op = Op::EmbedRow;
  n.weight = table;
  n.row = row;
  n.value = Matrix<T>(count, t.cols());
  for (std::size_t r = 0; r < count; ++r) std::copy_n(t.row(row), t.cols(), n.value.row(r));
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::bce_bits(Var probs, std::span<const std::uint8_t> targets) {
  const auto& p = value(probs);
  if (p.cols() != 1 || p.rows() != targets.size()) throw ShapeError("bce_bits: shape mismatch");
  Node n;
  n.op = Op::BceBits;
  n.a = probs;
  n.targets.assign(targets.begin(), targets.end());
  T total = T(0);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const T q = clamp_probability(p(r, 0));
    total += targets[r] ? -std::log2(q) : -std::log2(T(1) - q);
  }
  n.value = Matrix<T>(1, 1, total);
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sum(std::span<const Var> scalars) {
  Node n;
  n.op = Op::Sum;
  n.inputs.assign(scalars.begin(), scalars.end());
  T total = T(0);
  for (Var v : scalars) {
    if (value(v).size() != 1) throw ShapeError("sum: expects 1x1 inputs");
    total += scalar(v);
  }
  n.value = Matrix<T>(1, 1, total);
  return push(std::move(n));
}

template <typename T>
void Tape<T>::accumulate(Var v, const Matrix<T>& g) {
  auto& n = node(v);
  if (n.grad.size() == 0) {
    n.grad = g;
    return;
  }
  auto& d = n.grad.data();
  const auto& s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
void Tape<T>::backward(Var root) {
  if (!record_) throw std::logic_error("backward() on a non-recording tape");
  if (value(root).size() != 1) throw ShapeError("backward root must be a scalar");
  for (auto& n : nodes_) n.grad = Matrix<T>();
  node(root).grad = Matrix<T>(1, 1, T(1));
  for (Var v = root; v >= 0; --v) {
    auto& n = node(v);
    if (n.grad.size() == 0) continue;
    backward_node(n);
  }
}

template <typename T>
void Tape<T>::backward_node(Node& n) {
  const Matrix<T>& g = n.grad;
  switch (n.op) {
    case Op::Input:
      break;

    case Op::Linear: {
      auto& W = (*params_)[n.weight];
      auto& B = (*params_)[n.bias];
      const auto& x = value(n.a);
      const std::size_t rows = x.rows(), cin = x.cols(), cout = W.value.cols();
      Matrix<T> gx(rows, cin);
      for (std::size_t p = 0; p < rows; ++p) {
        const T* gp = g.row(p);
        const T* xp = x.row(p);
        T* gxp = gx.row(p);
        T* gb = B.grad.row(0);
        for (std::size_t co = 0; co < cout; ++co) gb[co] += gp[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* wr = W.value.row(ci);
          T* gw = W.grad.row(ci);
          T acc = T(0);
          const T xv = xp[ci];
          for (std::size_t co = 0; co < cout; ++co) {
            acc += gp[co] * wr[co];
            gw[co] += xv * gp[co];
          }
          gxp[ci] = acc;
        }
      }
      accumulate(n.a, gx);
      break;
    }

    case Op::SparseConv: {
      auto& W = (*params_)[n.weight];
      auto& B = (*params_)[n.bias];
      const auto& x = value(n.a);
      const std::size_t rows = x.rows(), cin = x.cols(), cout = W.value.cols();
      Matrix<T> gx(rows, cin);
      T* gb = B.grad.row(0);
      for (std::size_t p = 0; p < rows; ++p) {
        const T* gp = g.row(p);
        for (std::size_t co = 0; co < cout; ++co) gb[co] += gp[co];
        const auto taps = n.nb->row(p);
        for (int k = 0; k < kKernelVolume; ++k) {
          const auto q = taps[k];
          if (q < 0) continue;
          const T* xq = x.row(static_cast<std::size_t>(q));
          T* gxq = gx.row(static_cast<std::size_t>(q));
          const std::size_t base = static_cast<std::size_t>(k) * cin;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* wr = W.value.row(base + ci);
            T* gw = W.grad.row(base + ci);
            const T xv = xq[ci];
            T acc = T(0);
            for (std::size_t co = 0; co < cout; ++co) {
              acc += gp[co] * wr[co];
              gw[co] += xv * gp[co];
            }
            gxq[ci] += acc;
          }
        }
      }
      accumulate(n.a, gx);
      break;
    }

    case Op::Relu: {
      Matrix<T> gx = g;
      const auto& y = n.value.data();
      auto& d = gx.data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(y[i] > T(0))) d[i] = T(0);
      }
      accumulate(n.a, gx);
      break;
    }

    case Op::Sigmoid: {
      Matrix<T> gx = g;
      const auto& y = n.value.data();
      auto& d = gx.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (T(1) - y[i]);
      accumulate(n.a, gx);
      break;
    }

    case Op::Add:
      accumulate(n.a, g);
      accumulate(n.b, g);
      break;

    case Op::Concat: {
      const auto& av = value(n.a);
      const auto& bv = value(n.b);
      Matrix<T> ga(av.rows(), av.cols());
      Matrix<T> gbm(bv.rows(), bv.cols());
      for (std::size_t r = 0; r < av.rows(); ++r) {
        std::copy_n(g.row(r), av.cols(), ga.row(r));
        std::copy_n(g.row(r) + av.cols(), bv.cols(), gbm.row(r));
      }
      accumulate(n.a, ga);
      accumulate(n.b, gbm);
      break;
    }

    case Op::EmbedRow: {
      auto& table = (*params_)[n.weight];
      T* gr = table.grad.row(n.row);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
      }
      break;
    }

    case Op::BceBits: {
      const auto& p = value(n.a);
      const T seed = g(0, 0);
      const T eps = static_cast<T>(kProbabilityEpsilon);
      const T inv_ln2 = T(1) / std::log(T(2));
      Matrix<T> gx(p.rows(), 1);
      for (std::size_t r = 0; r < p.rows(); ++r) {
        const T q = p(r, 0);
        if (q <= eps || q >= T(1) - eps) continue;  // clamped: flat
        const T d = n.targets[r] ? -T(1) / q : T(1) / (T(1) - q);
        gx(r, 0) = seed * d * inv_ln2;
      }
      accumulate(n.a, gx);
      break;
    }

    case Op::Sum:
      for (Var v : n.inputs) accumulate(v, g);
      break;
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace linr::nn
