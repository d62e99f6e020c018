// SPDX-License-Identifier: Apache-2.0
#include "cml/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "cml/errors.hpp"

namespace cml {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractViolation("vars recorded on different tapes");
}

void check_segments(const Segments& seg, std::size_t rows) {
  if (seg.size() < 2 || seg.front() != 0 || seg.back() != rows) {
    throw ContractViolation("segments do not cover the " + std::to_string(rows) + " packed rows");
  }
  for (std::size_t i = 1; i < seg.size(); ++i) {
    if (seg[i] < seg[i - 1]) throw ContractViolation("segments must be non-decreasing");
  }
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const NamedParamStore& store, const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return {this, it->second};
  Node n;
  n.op = "param";
  n.value = store.value(name);
  n.requires_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  params_.emplace(name, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

namespace {

std::string describe(const Tape::Node& n, std::size_t id) {
  std::string s = "node #" + std::to_string(id) + " (" + n.op;
  if (!n.param_name.empty()) s += " '" + n.param_name + "'";
  return s + ")";
}

}  // namespace

GradMap backward_pass(const Var& loss) {
  if (loss.tape == nullptr) throw ContractViolation("backward_pass on an unbound var");
  Tape& tape = *loss.tape;
  if (loss.value().numel() != 1) {
    throw ContractViolation("backward_pass needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    if (!tape.nodes_[i].value.all_finite()) {
      throw NumericFault("non-finite forward value at " + describe(tape.nodes_[i], i));
    }
  }
  GradMap out;
  if (!tape.nodes_[loss.id].requires_grad) return out;
  tape.grad(loss.id).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Tape::Node& n = tape.nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    if (!n.grad.all_finite()) throw NumericFault("non-finite gradient at " + describe(n, i));
    if (n.backward) n.backward(tape, i);
  }
  for (std::size_t i = 0; i <= loss.id; ++i) {
    const Tape::Node& n = tape.nodes_[i];
    if (!n.param_name.empty() && n.has_grad) out.emplace(n.param_name, n.grad);
  }
  return out;
}

namespace ops {

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2 || av.rank() == 0 || av.cols() != bv.dim(0)) {
    throw ContractViolation("matmul shape mismatch " + shape_to_string(av.shape()) + " x " +
                            shape_to_string(bv.shape()));
  }
  Shape out_shape = av.shape();
  out_shape.back() = bv.dim(1);
  Tensor out(out_shape);
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return a.tape->record("matmul", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ai)) as_matrix(t.grad(ai)).noalias() += as_matrix(g) * as_matrix(t.value(bi)).transpose();
    if (t.requires_grad(bi)) as_matrix(t.grad(bi)).noalias() += as_matrix(t.value(ai)).transpose() * as_matrix(g);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool bias = !same && bv.rank() == 1 && av.rank() >= 1 && bv.dim(0) == av.cols();
  if (!same && !bias) {
    throw ContractViolation("add shape mismatch " + shape_to_string(av.shape()) + " + " + shape_to_string(bv.shape()));
  }
  Tensor out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bias ? bv[i % cols] : bv[i];
  return a.tape->record("add", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id, bias, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[bias ? i % cols : i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw ContractViolation("mul shape mismatch " + shape_to_string(av.shape()) + " * " + shape_to_string(bv.shape()));
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  return a.tape->record("mul", std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(bi);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape->record("scale", std::move(out), {a.id}, [ai = a.id, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  });
}

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + kGeluCoeff * v * v * v)));
  }
  return x.tape->record("gelu", std::move(out), {x.id}, [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kSqrt2OverPi * (v + kGeluCoeff * v * v * v));
      const double dinner = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner);
    }
  });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  const std::size_t cols = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const double* in = xv.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return x.tape->record("softmax", std::move(out), {x.id}, [xi = x.id, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const std::size_t base = r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * y[base + c];
      for (std::size_t c = 0; c < cols; ++c) gx[base + c] += y[base + c] * (g[base + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
    throw ContractViolation("layer_norm gain/bias must have shape [" + std::to_string(d) + "]");
  }
  const std::size_t rows = xv.rows();
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(rows);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (in[c] - mu) * is;
      xhat[r * d + c] = h;
      out[r * d + c] = h * gv[c] + bv[c];
    }
  }
  return x.tape->record(
      "layer_norm", std::move(out), {x.id, gain.id, bias.id},
      [xi = x.id, gi = gain.id, bi = bias.id, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                                      std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(gi);
        const std::size_t rows = g.rows();
        if (t.requires_grad(gi) || t.requires_grad(bi)) {
          Tensor* gg = t.requires_grad(gi) ? &t.grad(gi) : nullptr;
          Tensor* gb = t.requires_grad(bi) ? &t.grad(bi) : nullptr;
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              if (gg) (*gg)[c] += g[r * d + c] * xhat[r * d + c];
              if (gb) (*gb)[c] += g[r * d + c];
            }
          }
        }
        if (t.requires_grad(xi)) {
          Tensor& gx = t.grad(xi);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dh = g[r * d + c] * gv[c];
              s1 += dh;
              s2 += dh * xhat[r * d + c];
            }
            for (std::size_t c = 0; c < d; ++c) {
              const double dh = g[r * d + c] * gv[c];
              gx[r * d + c] += inv_std[r] * (dh - inv_d * s1 - xhat[r * d + c] * inv_d * s2);
            }
          }
        }
      });
}

Var embedding(Var table, const std::vector<int>& ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ContractViolation("embedding table must be 2-D");
  const std::size_t vocab = tv.dim(0);
  const std::size_t d = tv.dim(1);
  Tensor out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw InputError("embedding id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data().data() + i * d);
  }
  return table.tape->record("embedding", std::move(out), {table.id}, [ti = table.id, ids, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(ti);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = gt.data().data() + static_cast<std::size_t>(ids[i]) * d;
      const double* src = g.data().data() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var attention(Var q, Var k, Var v, const Segments& segments, std::size_t n_heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Tensor& qv = q.value();
  if (qv.rank() != 2 || k.value().shape() != qv.shape() || v.value().shape() != qv.shape()) {
    throw ContractViolation("attention expects q, k, v of identical 2-D shape");
  }
  const std::size_t d = qv.cols();
  if (n_heads == 0 || d % n_heads != 0) throw ContractViolation("attention width not divisible by head count");
  check_segments(segments, qv.rows());
  const std::size_t dh = d / n_heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();

  // probs holds, per segment and head, an L x L row-stochastic block.
  std::vector<double> probs;
  std::vector<std::size_t> prob_offset(segments.size() - 1);
  std::size_t total = 0;
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    prob_offset[s] = total;
    const std::size_t len = segments[s + 1] - segments[s];
    total += n_heads * len * len;
  }
  probs.resize(total);
  Tensor out(qv.shape());
  for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
    const std::size_t b = segments[s];
    const std::size_t len = segments[s + 1] - b;
    for (std::size_t h = 0; h < n_heads; ++h) {
      double* p = probs.data() + prob_offset[s] + h * len * len;
      for (std::size_t i = 0; i < len; ++i) {
        const double* qi = qv.data().data() + (b + i) * d + h * dh;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < len; ++j) {
          const double* kj = kv.data().data() + (b + j) * d + h * dh;
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          p[i * len + j] = acc * sc;
          mx = std::max(mx, p[i * len + j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) z += (p[i * len + j] = std::exp(p[i * len + j] - mx));
        for (std::size_t j = 0; j < len; ++j) p[i * len + j] /= z;
        double* oi = out.data().data() + (b + i) * d + h * dh;
        for (std::size_t j = 0; j < len; ++j) {
          const double* vj = vv.data().data() + (b + j) * d + h * dh;
          const double w = p[i * len + j];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }
  return q.tape->record(
      "attention", std::move(out), {q.id, k.id, v.id},
      [qi_ = q.id, ki_ = k.id, vi_ = v.id, segments, n_heads, dh, d, sc, probs = std::move(probs),
       prob_offset = std::move(prob_offset)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& qv = t.value(qi_);
        const Tensor& kv = t.value(ki_);
        const Tensor& vv = t.value(vi_);
        Tensor* gq = t.requires_grad(qi_) ? &t.grad(qi_) : nullptr;
        Tensor* gk = t.requires_grad(ki_) ? &t.grad(ki_) : nullptr;
        Tensor* gv = t.requires_grad(vi_) ? &t.grad(vi_) : nullptr;
        std::vector<double> ds;
        for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
          const std::size_t b = segments[s];
          const std::size_t len = segments[s + 1] - b;
          ds.assign(len * len, 0.0);
          for (std::size_t h = 0; h < n_heads; ++h) {
            const double* p = probs.data() + prob_offset[s] + h * len * len;
            const std::size_t off = h * dh;
            // dP = dO V^T, then dS = P * (dP - rowsum(dP * P))
            for (std::size_t i = 0; i < len; ++i) {
              const double* gi = g.data().data() + (b + i) * d + off;
              double row = 0.0;
              for (std::size_t j = 0; j < len; ++j) {
                const double* vj = vv.data().data() + (b + j) * d + off;
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c) acc += gi[c] * vj[c];
                ds[i * len + j] = acc;
                row += acc * p[i * len + j];
              }
              for (std::size_t j = 0; j < len; ++j) ds[i * len + j] = p[i * len + j] * (ds[i * len + j] - row);
            }
            if (gv) {
              for (std::size_t j = 0; j < len; ++j) {
                double* gvj = gv->data().data() + (b + j) * d + off;
                for (std::size_t i = 0; i < len; ++i) {
                  const double w = p[i * len + j];
                  const double* gi = g.data().data() + (b + i) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += w * gi[c];
                }
              }
            }
            for (std::size_t i = 0; i < len; ++i) {
              for (std::size_t j = 0; j < len; ++j) {
                const double w = ds[i * len + j] * sc;
                if (w == 0.0) continue;
                if (gq) {
                  double* gqi = gq->data().data() + (b + i) * d + off;
                  const double* kj = kv.data().data() + (b + j) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += w * kj[c];
                }
                if (gk) {
                  double* gkj = gk->data().data() + (b + j) * d + off;
                  const double* qi = qv.data().data() + (b + i) * d + off;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += w * qi[c];
                }
              }
            }
          }
        }
      });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record("sum", Tensor::scalar(s), {x.id}, [xi = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    for (double& v : t.grad(xi).data()) v += g;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().numel());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record("mean", Tensor::scalar(s / n), {x.id}, [xi = x.id, n](Tape& t, std::size_t self) {
    const double g = t.grad(self).item() / n;
    for (double& v : t.grad(xi).data()) v += g;
  });
}

Var segment_mean(Var x, const Segments& segments) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ContractViolation("segment_mean expects a 2-D input");
  check_segments(segments, xv.rows());
  const std::size_t d = xv.cols();
  const std::size_t batch = segments.size() - 1;
  Tensor out(Shape{batch, d});
  for (std::size_t s = 0; s < batch; ++s) {
    const std::size_t len = segments[s + 1] - segments[s];
    if (len == 0) throw ContractViolation("segment_mean over an empty segment");
    for (std::size_t r = segments[s]; r < segments[s + 1]; ++r) {
      for (std::size_t c = 0; c < d; ++c) out[s * d + c] += xv[r * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) out[s * d + c] /= static_cast<double>(len);
  }
  return x.tape->record("segment_mean", std::move(out), {x.id}, [xi = x.id, segments, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t s = 0; s + 1 < segments.size(); ++s) {
      const double inv = 1.0 / static_cast<double>(segments[s + 1] - segments[s]);
      for (std::size_t r = segments[s]; r < segments[s + 1]; ++r) {
        for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[s * d + c] * inv;
      }
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& targets) {
  const Tensor& lv = logits.value();
  const std::size_t classes = lv.cols();
  const std::size_t rows = lv.rows();
  if (targets.size() != rows) {
    throw ContractViolation("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(rows) + " rows");
  }
  Tensor probs(Shape{rows, classes});
  double total = 0.0;
  std::size_t active = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = lv.data().data() + r * classes;
    double* p = probs.data().data() + r * classes;
    const double mx = *std::max_element(in, in + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += (p[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < classes; ++c) p[c] /= z;
    const int tgt = targets[r];
    if (tgt < 0) continue;
    if (static_cast<std::size_t>(tgt) >= classes) throw InputError("cross_entropy target out of range");
    total += -(in[tgt] - mx - std::log(z));
    ++active;
  }
  if (active == 0) throw ContractViolation("cross_entropy with no active targets");
  const double n = static_cast<double>(active);
  return logits.tape->record(
      "cross_entropy", Tensor::scalar(total / n), {logits.id},
      [li = logits.id, targets, classes, n, probs = std::move(probs)](Tape& t, std::size_t self) {
        const double g = t.grad(self).item() / n;
        Tensor& gl = t.grad(li);
        for (std::size_t r = 0; r < targets.size(); ++r) {
          if (targets[r] < 0) continue;
          for (std::size_t c = 0; c < classes; ++c) {
            const double y = (static_cast<int>(c) == targets[r]) ? 1.0 : 0.0;
            gl[r * classes + c] += g * (probs[r * classes + c] - y);
          }
        }
      });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->record("reshape", std::move(out), {x.id}, [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

}  // namespace ops
}  // namespace cml
