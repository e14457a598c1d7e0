#include "evego/tensor_tape.hpp"

#include <algorithm>
#include <cmath>

#include "evego/errors.hpp"

namespace evego::nn {

namespace {

void require_shape(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

}  // namespace

void matmul_into(const Mat& a, const Mat& b, Mat& out) {
  const Eigen::Index n = a.rows(), k = a.cols(), m = b.cols();
  out.setZero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ai = a.data() + i * k;
    for (Eigen::Index p = 0; p < k; ++p) {
      const double s = ai[p];
      const double* bp = b.data() + p * m;
      for (Eigen::Index j = 0; j < m; ++j) o[j] += s * bp[j];
    }
  }
}

Tape::Id Tape::push(Mat value, std::vector<Id> inputs, std::function<void(Tape&, Id)> back) {
  if (consumed_) throw Error(ErrorCode::TapeExhausted, "tape already differentiated");
  nodes_.push_back(Node{std::move(value), Mat(), std::move(inputs), std::move(back), nullptr});
  return nodes_.size() - 1;
}

Tape::Id Tape::parameter(Tensor& tensor) {
  Mat m(static_cast<Eigen::Index>(tensor.rows()), static_cast<Eigen::Index>(tensor.cols()));
  std::copy(tensor.data.begin(), tensor.data.end(), m.data());
  const Id id = push(std::move(m), {}, nullptr);
  nodes_[id].parameter = &tensor;
  return id;
}

Tape::Id Tape::constant(Mat value) { return push(std::move(value), {}, nullptr); }

Tape::Id Tape::matmul(Id a, Id b) {
  require_shape(value(a).cols() == value(b).rows(), "matmul inner dimensions differ");
  Mat out;
  matmul_into(value(a), value(b), out);
  return push(std::move(out), {a, b}, [](Tape& t, Id self) {
    const Id a = t.nodes_[self].inputs[0], b = t.nodes_[self].inputs[1];
    const Mat& dc = t.g(self);
    Mat tmp;
    matmul_into(dc, t.value(b).transpose(), tmp);
    t.g(a) += tmp;
    matmul_into(t.value(a).transpose(), dc, tmp);
    t.g(b) += tmp;
  });
}

Tape::Id Tape::add(Id a, Id b) {
  require_shape(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shapes differ");
  return push(value(a) + value(b), {a, b}, [](Tape& t, Id self) {
    t.g(t.nodes_[self].inputs[0]) += t.g(self);
    t.g(t.nodes_[self].inputs[1]) += t.g(self);
  });
}

Tape::Id Tape::add_row(Id a, Id row) {
  require_shape(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "bias row shape differs");
  Mat out = value(a);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), {a, row}, [](Tape& t, Id self) {
    const Mat& dc = t.g(self);
    t.g(t.nodes_[self].inputs[0]) += dc;
    t.g(t.nodes_[self].inputs[1]) += dc.colwise().sum();
  });
}

Tape::Id Tape::relu(Id a) {
  return push(value(a).cwiseMax(0.0), {a}, [](Tape& t, Id self) {
    const Mat& y = t.value(self);
    t.g(t.nodes_[self].inputs[0]) += (y.array() > 0.0).select(t.g(self), 0.0);
  });
}

Tape::Id Tape::max_rows(Id a, std::size_t rows) {
  const Mat& x = value(a);
  require_shape(rows <= static_cast<std::size_t>(x.rows()), "max_rows beyond matrix");
  Mat out = Mat::Zero(1, x.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()), -1);
  if (rows > 0) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(rows); ++i)
        if (x(i, j) > x(best, j)) best = i;
      out(0, j) = x(best, j);
      arg[static_cast<std::size_t>(j)] = best;
    }
  }
  return push(std::move(out), {a}, [arg = std::move(arg)](Tape& t, Id self) {
    Mat& da = t.g(t.nodes_[self].inputs[0]);
    for (std::size_t j = 0; j < arg.size(); ++j)
      if (arg[j] >= 0) da(arg[j], static_cast<Eigen::Index>(j)) += t.g(self)(0, static_cast<Eigen::Index>(j));
  });
}

Tape::Id Tape::reshape(Id a, std::size_t rows, std::size_t cols) {
  const Mat& x = value(a);
  require_shape(static_cast<std::size_t>(x.size()) == rows * cols, "reshape changes element count");
  Mat out = Eigen::Map<const Mat>(x.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return push(std::move(out), {a}, [](Tape& t, Id self) {
    Mat& da = t.g(t.nodes_[self].inputs[0]);
    da += Eigen::Map<const Mat>(t.g(self).data(), da.rows(), da.cols());
  });
}

Tape::Id Tape::transpose(Id a) {
  return push(value(a).transpose(), {a},
              [](Tape& t, Id self) { t.g(t.nodes_[self].inputs[0]) += t.g(self).transpose(); });
}

Tape::Id Tape::scale(Id a, double s) {
  return push(value(a) * s, {a}, [s](Tape& t, Id self) { t.g(t.nodes_[self].inputs[0]) += t.g(self) * s; });
}

Tape::Id Tape::softmax_rows(Id a) {
  Mat out = value(a);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double peak = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - peak).exp();
    out.row(i) /= out.row(i).sum();
  }
  return push(std::move(out), {a}, [](Tape& t, Id self) {
    const Mat& y = t.value(self);
    const Mat& dy = t.g(self);
    Mat& dx = t.g(t.nodes_[self].inputs[0]);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double inner = y.row(i).dot(dy.row(i));
      dx.row(i).array() += y.row(i).array() * (dy.row(i).array() - inner);
    }
  });
}

Tape::Id Tape::slice_cols(Id a, std::size_t begin, std::size_t end) {
  const Mat& x = value(a);
  require_shape(begin < end && end <= static_cast<std::size_t>(x.cols()), "column slice out of range");
  const auto b = static_cast<Eigen::Index>(begin), w = static_cast<Eigen::Index>(end - begin);
  return push(x.middleCols(b, w), {a}, [b, w](Tape& t, Id self) {
    t.g(t.nodes_[self].inputs[0]).middleCols(b, w) += t.g(self);
  });
}

Tape::Id Tape::concat_cols(std::span<const Id> parts) {
  require_shape(!parts.empty(), "concat of nothing");
  Eigen::Index cols = 0;
  const Eigen::Index rows = value(parts[0]).rows();
  for (Id p : parts) {
    require_shape(value(p).rows() == rows, "concat row counts differ");
    cols += value(p).cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (Id p : parts) {
    out.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  return push(std::move(out), std::vector<Id>(parts.begin(), parts.end()), [](Tape& t, Id self) {
    Eigen::Index c = 0;
    for (Id p : t.nodes_[self].inputs) {
      const Eigen::Index w = t.value(p).cols();
      t.g(p) += t.g(self).middleCols(c, w);
      c += w;
    }
  });
}

Tape::Id Tape::sum(Id a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), {a}, [](Tape& t, Id self) { t.g(t.nodes_[self].inputs[0]).array() += t.g(self)(0, 0); });
}

Tape::Id Tape::sum_squares(Id a) {
  Mat out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  return push(std::move(out), {a}, [](Tape& t, Id self) {
    const Id a = t.nodes_[self].inputs[0];
    t.g(a) += 2.0 * t.g(self)(0, 0) * t.value(a);
  });
}

Tape::Id Tape::custom(std::vector<Id> inputs, Mat value, Vjp vjp) {
  return push(std::move(value), std::move(inputs), [vjp = std::move(vjp)](Tape& t, Id self) {
    std::vector<Mat*> grads;
    for (Id in : t.nodes_[self].inputs) grads.push_back(&t.g(in));
    vjp(t.g(self), grads);
  });
}

void Tape::backward(Id loss, bool accumulate_into_parameters) {
  if (consumed_) throw Error(ErrorCode::TapeExhausted, "backward called twice on one tape");
  if (loss >= nodes_.size() || value(loss).size() != 1)
    throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar loss node");
  consumed_ = true;
  for (std::size_t i = 0; i <= loss; ++i) nodes_[i].grad.setZero(nodes_[i].value.rows(), nodes_[i].value.cols());
  nodes_[loss].grad(0, 0) = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;)
    if (nodes_[i].back) nodes_[i].back(*this, i);
  if (!accumulate_into_parameters) return;
  for (std::size_t i = 0; i <= loss; ++i) {
    Tensor* p = nodes_[i].parameter;
    if (!p) continue;
    if (p->grad.size() != p->data.size()) p->grad.assign(p->data.size(), 0.0);
    const Mat& gi = nodes_[i].grad;
    for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad[k] += gi.data()[k];
  }
}

}  // namespace evego::nn
