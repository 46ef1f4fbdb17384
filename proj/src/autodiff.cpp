#include "metasched/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metasched {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("tape: invalid var");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("tape: invalid var");
  return nodes_[v.id];
}

Tape::Var Tape::make_leaf(Tensor value, bool requires_grad) {
  ensure_finite(value, "leaf");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::make_node(Tensor value, bool requires_grad, std::function<void(Tape&)> back, const char* what) {
  ensure_finite(value, what);
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2) throw std::invalid_argument("matmul: rank-2 tensors required");
  if (ta.cols() != tb.rows()) {
    throw std::invalid_argument("matmul: inner dimensions " + ta.shape_str() + " vs " + tb.shape_str());
  }
  const int m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += static_cast<double>(ta.at(i, l)) * tb.at(l, j);
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  const bool rg = requires_grad(a) || requires_grad(b);
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), rg,
      [a, b, out_id, m, k, n](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& ta = t.nodes_[a.id].value;
        const Tensor& tb = t.nodes_[b.id].value;
        if (t.nodes_[a.id].requires_grad) {
          Tensor& ga = t.nodes_[a.id].grad;
          for (int i = 0; i < m; ++i)
            for (int l = 0; l < k; ++l) {
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += static_cast<double>(g.at(i, j)) * tb.at(l, j);
              ga.at(i, l) += static_cast<float>(acc);
            }
        }
        if (t.nodes_[b.id].requires_grad) {
          Tensor& gb = t.nodes_[b.id].grad;
          for (int l = 0; l < k; ++l)
            for (int j = 0; j < n; ++j) {
              double acc = 0.0;
              for (int i = 0; i < m; ++i) acc += static_cast<double>(ta.at(i, l)) * g.at(i, j);
              gb.at(l, j) += static_cast<float>(acc);
            }
        }
      },
      "matmul");
}

Tape::Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a) || requires_grad(b),
      [a, b, out_id](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        for (Var p : {a, b}) {
          if (!t.nodes_[p.id].requires_grad) continue;
          Tensor& gp = t.nodes_[p.id].grad;
          for (std::size_t i = 0; i < g.data.size(); ++i) gp.data[i] += g.data[i];
        }
      },
      "add");
}

Tape::Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a) || requires_grad(b),
      [a, b, out_id](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        if (t.nodes_[a.id].requires_grad) {
          Tensor& ga = t.nodes_[a.id].grad;
          for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[b.id].requires_grad) {
          Tensor& gb = t.nodes_[b.id].grad;
          for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
        }
      },
      "sub");
}

Tape::Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a) || requires_grad(b),
      [a, b, out_id](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& ta = t.nodes_[a.id].value;
        const Tensor& tb = t.nodes_[b.id].value;
        if (t.nodes_[a.id].requires_grad) {
          Tensor& ga = t.nodes_[a.id].grad;
          for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * tb.data[i];
        }
        if (t.nodes_[b.id].requires_grad) {
          Tensor& gb = t.nodes_[b.id].grad;
          for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * ta.data[i];
        }
      },
      "mul");
}

Tape::Var Tape::scale(Var a, double s) {
  Tensor out = value(a);
  for (auto& v : out.data) v = static_cast<float>(v * s);
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, s, out_id](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        Tensor& ga = t.nodes_[a.id].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += static_cast<float>(g.data[i] * s);
      },
      "scale");
}

Tape::Var Tape::add_rowvec(Var a, Var v) {
  const Tensor& ta = value(a);
  const Tensor& tv = value(v);
  if (tv.rank() != 1 || tv.cols() != ta.cols()) {
    throw std::invalid_argument("add_rowvec: vector length must match columns");
  }
  Tensor out = ta;
  const int r = ta.rows(), c = ta.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) += tv.data[j];
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a) || requires_grad(v),
      [a, v, out_id, r, c](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        if (t.nodes_[a.id].requires_grad) {
          Tensor& ga = t.nodes_[a.id].grad;
          for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        }
        if (t.nodes_[v.id].requires_grad) {
          Tensor& gv = t.nodes_[v.id].grad;
          for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) gv.data[j] += g.at(i, j);
          }
        }
      },
      "add_rowvec");
}

Tape::Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (auto& x : out.data) x = std::max(0.0f, x);
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, out_id](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& ta = t.nodes_[a.id].value;
        Tensor& ga = t.nodes_[a.id].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          if (ta.data[i] > 0.0f) ga.data[i] += g.data[i];
        }
      },
      "relu");
}

Tape::Var Tape::sigmoid(Var a) {
  Tensor out = value(a);
  for (auto& x : out.data) x = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, out_id](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& y = t.nodes_[out_id].value;
        Tensor& ga = t.nodes_[a.id].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          const double s = y.data[i];
          ga.data[i] += static_cast<float>(g.data[i] * s * (1.0 - s));
        }
      },
      "sigmoid");
}

Tape::Var Tape::softmax_rows(Var a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  const int r = ta.rows(), c = ta.cols();
  for (int i = 0; i < r; ++i) {
    float mx = ta.at(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, ta.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(ta.at(i, j)) - mx);
    for (int j = 0; j < c; ++j) {
      out.at(i, j) = static_cast<float>(std::exp(static_cast<double>(ta.at(i, j)) - mx) / denom);
    }
  }
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, out_id, r, c](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& p = t.nodes_[out_id].value;
        Tensor& ga = t.nodes_[a.id].grad;
        for (int i = 0; i < r; ++i) {
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += static_cast<double>(g.at(i, j)) * p.at(i, j);
          for (int j = 0; j < c; ++j) {
            ga.at(i, j) += static_cast<float>((static_cast<double>(g.at(i, j)) - dot) * p.at(i, j));
          }
        }
      },
      "softmax_rows");
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias) {
  const Tensor& tx = value(x);
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  const int r = tx.rows(), c = tx.cols();
  if (c < 1) throw std::invalid_argument("layer_norm: empty rows");
  if (tg.rank() != 1 || tg.cols() != c || tb.rank() != 1 || tb.cols() != c) {
    throw std::invalid_argument("layer_norm: gain/bias must be rank-1 of row width");
  }
  Tensor out = tx;
  for (int i = 0; i < r; ++i) {
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += tx.at(i, j);
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = tx.at(i, j) - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int j = 0; j < c; ++j) {
      const double xhat = (tx.at(i, j) - mean) * inv;
      out.at(i, j) = static_cast<float>(xhat * tg.data[j] + tb.data[j]);
    }
  }
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(x) || requires_grad(gain) || requires_grad(bias),
      [x, gain, bias, out_id, r, c](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        const Tensor& tx = t.nodes_[x.id].value;
        const Tensor& tg = t.nodes_[gain.id].value;
        for (int i = 0; i < r; ++i) {
          double mean = 0.0;
          for (int j = 0; j < c; ++j) mean += tx.at(i, j);
          mean /= c;
          double var = 0.0;
          for (int j = 0; j < c; ++j) {
            const double d = tx.at(i, j) - mean;
            var += d * d;
          }
          var /= c;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          // dL/dxhat_j = g_j * gain_j
          std::vector<double> dxhat(c);
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int j = 0; j < c; ++j) {
            const double xhat = (tx.at(i, j) - mean) * inv;
            dxhat[j] = static_cast<double>(g.at(i, j)) * tg.data[j];
            sum_dxhat += dxhat[j];
            sum_dxhat_xhat += dxhat[j] * xhat;
          }
          if (t.nodes_[x.id].requires_grad) {
            Tensor& gx = t.nodes_[x.id].grad;
            for (int j = 0; j < c; ++j) {
              const double xhat = (tx.at(i, j) - mean) * inv;
              const double dx = inv * (dxhat[j] - sum_dxhat / c - xhat * sum_dxhat_xhat / c);
              gx.at(i, j) += static_cast<float>(dx);
            }
          }
          if (t.nodes_[gain.id].requires_grad) {
            Tensor& gg = t.nodes_[gain.id].grad;
            for (int j = 0; j < c; ++j) {
              const double xhat = (tx.at(i, j) - mean) * inv;
              gg.data[j] += static_cast<float>(static_cast<double>(g.at(i, j)) * xhat);
            }
          }
          if (t.nodes_[bias.id].requires_grad) {
            Tensor& gb = t.nodes_[bias.id].grad;
            for (int j = 0; j < c; ++j) gb.data[j] += g.at(i, j);
          }
        }
      },
      "layer_norm");
}

Tape::Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  int cols = -1, rows = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    if (cols < 0)
      cols = tp.cols();
    else if (tp.cols() != cols && tp.size() > 0)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += tp.rows() * (tp.size() > 0 ? 1 : 0);
    rg = rg || requires_grad(p);
  }
  Tensor out = Tensor::zeros({rows, cols});
  int at = 0;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    if (tp.size() == 0) continue;
    std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(at) * cols);
    at += tp.rows();
  }
  const int out_id = static_cast<int>(nodes_.size());
  std::vector<Var> ps = parts;
  return make_node(
      std::move(out), rg,
      [ps, out_id, cols](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        int at = 0;
        for (Var p : ps) {
          Tensor& val = t.nodes_[p.id].value;
          if (val.size() == 0) continue;
          const int r = val.rows();
          if (t.nodes_[p.id].requires_grad) {
            Tensor& gp = t.nodes_[p.id].grad;
            for (std::size_t i = 0; i < gp.data.size(); ++i) {
              gp.data[i] += g.data[static_cast<std::size_t>(at) * cols + i];
            }
          }
          at += r;
        }
      },
      "concat_rows");
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int rows = value(parts[0]).rows();
  int cols = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    if (tp.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += tp.cols();
    rg = rg || requires_grad(p);
  }
  Tensor out = Tensor::zeros({rows, cols});
  int at = 0;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < tp.cols(); ++j) out.at(i, at + j) = tp.at(i, j);
    at += tp.cols();
  }
  const int out_id = static_cast<int>(nodes_.size());
  std::vector<Var> ps = parts;
  return make_node(
      std::move(out), rg,
      [ps, out_id, rows](Tape& t) {
        const Tensor& g = t.nodes_[out_id].grad;
        int at = 0;
        for (Var p : ps) {
          const int c = t.nodes_[p.id].value.cols();
          if (t.nodes_[p.id].requires_grad) {
            Tensor& gp = t.nodes_[p.id].grad;
            for (int i = 0; i < rows; ++i)
              for (int j = 0; j < c; ++j) gp.at(i, j) += g.at(i, at + j);
          }
          at += c;
        }
      },
      "concat_cols");
}

Tape::Var Tape::mean_rows(Var a) {
  const Tensor& ta = value(a);
  const int r = ta.rows(), c = ta.cols();
  if (r < 1) throw std::invalid_argument("mean_rows: no rows");
  Tensor out = Tensor::zeros({c});
  for (int j = 0; j < c; ++j) {
    double acc = 0.0;
    for (int i = 0; i < r; ++i) acc += ta.at(i, j);
    out.data[j] = static_cast<float>(acc / r);
  }
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, out_id, r, c](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        Tensor& ga = t.nodes_[a.id].grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) ga.at(i, j) += static_cast<float>(g.data[j] / static_cast<double>(r));
      },
      "mean_rows");
}

Tape::Var Tape::broadcast_rows(Var v, int n) {
  const Tensor& tv = value(v);
  if (tv.rank() != 1) throw std::invalid_argument("broadcast_rows: rank-1 input required");
  if (n < 1) throw std::invalid_argument("broadcast_rows: need at least one row");
  const int c = tv.cols();
  Tensor out = Tensor::zeros({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = tv.data[j];
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(v),
      [v, out_id, n, c](Tape& t) {
        if (!t.nodes_[v.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        Tensor& gv = t.nodes_[v.id].grad;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) gv.data[j] += g.at(i, j);
      },
      "broadcast_rows");
}

Tape::Var Tape::transpose(Var a) {
  const Tensor& ta = value(a);
  if (ta.rank() != 2) throw std::invalid_argument("transpose: rank-2 required");
  const int r = ta.rows(), c = ta.cols();
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = ta.at(i, j);
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, out_id, r, c](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const Tensor& g = t.nodes_[out_id].grad;
        Tensor& ga = t.nodes_[a.id].grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
      },
      "transpose");
}

Tape::Var Tape::pick(Var v, int index) {
  const Tensor& tv = value(v);
  if (tv.rank() != 1) throw std::invalid_argument("pick: rank-1 required");
  if (index < 0 || index >= tv.cols()) throw std::invalid_argument("pick: index out of range");
  Tensor out = Tensor::zeros({1});
  out.data[0] = tv.data[index];
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(v),
      [v, index, out_id](Tape& t) {
        if (!t.nodes_[v.id].requires_grad) return;
        t.nodes_[v.id].grad.data[index] += t.nodes_[out_id].grad.data[0];
      },
      "pick");
}

Tape::Var Tape::sum(Var a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (float x : ta.data) acc += x;
  Tensor out = Tensor::zeros({1});
  out.data[0] = static_cast<float>(acc);
  const int out_id = static_cast<int>(nodes_.size());
  return make_node(
      std::move(out), requires_grad(a),
      [a, out_id](Tape& t) {
        if (!t.nodes_[a.id].requires_grad) return;
        const float g = t.nodes_[out_id].grad.data[0];
        Tensor& ga = t.nodes_[a.id].grad;
        for (auto& x : ga.data) x += g;
      },
      "sum");
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.size() != 1) throw std::invalid_argument("backward: loss must be a scalar node");
  for (auto& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape);
  }
  nodes_[loss.id].grad.data[0] = 1.0f;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back && nodes_[i].requires_grad) nodes_[i].back(*this);
  }
}

Tape::Var multi_head_attention(Tape& t, Tape::Var q, Tape::Var k, Tape::Var v, const AttentionWeights& w) {
  const int z = static_cast<int>(w.wq.size());
  if (z < 1 || w.wk.size() != w.wq.size() || w.wv.size() != w.wq.size()) {
    throw std::invalid_argument("multi_head_attention: inconsistent head weights");
  }
  const int d = t.value(q).cols();
  if (t.value(w.wq[0]).rows() != d) throw std::invalid_argument("multi_head_attention: weight/input width mismatch");
  const int dh = t.value(w.wq[0]).cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tape::Var> heads;
  heads.reserve(z);
  for (int h = 0; h < z; ++h) {
    Tape::Var qi = t.matmul(q, w.wq[h]);
    Tape::Var ki = t.matmul(k, w.wk[h]);
    Tape::Var vi = t.matmul(v, w.wv[h]);
    Tape::Var scores = t.scale(t.matmul(qi, t.transpose(ki)), scale);
    Tape::Var attn = t.softmax_rows(scores);
    heads.push_back(t.matmul(attn, vi));
  }
  Tape::Var cat = z == 1 ? heads[0] : t.concat_cols(heads);
  return t.matmul(cat, w.wo);
}

}  // namespace metasched
