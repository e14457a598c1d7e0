#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace evego::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense float64 parameter with an optional gradient buffer of equal size.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols) : shape{rows, cols}, data(rows * cols, 0.0) {}

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : (shape.size() == 1 ? 1 : shape[0]); }
  std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
  void zero_grad() { grad.assign(data.size(), 0.0); }
};

// Reverse-mode tape over row-major matrices. Nodes are appended in
// evaluation order; backward() walks them once in reverse.
class Tape {
 public:
  using Id = std::size_t;

  Id parameter(Tensor& tensor);
  Id constant(Mat value);

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id add_row(Id a, Id row);  // broadcasts a 1 x m row over a's rows
  Id relu(Id a);
  // Column-wise max over the first `rows` rows; a 1 x m zero row when rows == 0.
  Id max_rows(Id a, std::size_t rows);
  Id reshape(Id a, std::size_t rows, std::size_t cols);
  Id transpose(Id a);
  Id scale(Id a, double s);
  Id softmax_rows(Id a);
  Id slice_cols(Id a, std::size_t begin, std::size_t end);
  Id concat_cols(std::span<const Id> parts);
  Id sum(Id a);
  Id sum_squares(Id a);

  // Node with an externally computed value; `vjp` receives the output
  // gradient and must accumulate into one gradient matrix per input.
  using Vjp = std::function<void(const Mat& out_grad, std::span<Mat*> input_grads)>;
  Id custom(std::vector<Id> inputs, Mat value, Vjp vjp);

  const Mat& value(Id id) const { return nodes_[id].value; }
  const Mat& grad(Id id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 for a 1 x 1 node. Parameter gradients are
  // added into Tensor::grad when `accumulate_into_parameters` is set.
  // Throws TapeExhausted when called a second time.
  void backward(Id loss, bool accumulate_into_parameters = true);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::vector<Id> inputs;
    std::function<void(Tape&, Id)> back;
    Tensor* parameter = nullptr;
  };

  Id push(Mat value, std::vector<Id> inputs, std::function<void(Tape&, Id)> back);
  Mat& g(Id id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Deterministic row-wise product; each output row is computed with the same
// operation order regardless of its position.
void matmul_into(const Mat& a, const Mat& b, Mat& out);

}  // namespace evego::nn
