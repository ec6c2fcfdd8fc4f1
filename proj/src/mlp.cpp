#include "uasabi/error.hpp"
#include "uasabi/neural.hpp"
#include "neural_detail.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uasabi {
namespace {

void activate(Activation a, Eigen::MatrixXd& m) {
  switch (a) {
    case Activation::Tanh: m = m.array().tanh().matrix(); break;
    case Activation::Relu: m = m.cwiseMax(0.0); break;
    case Activation::Identity: break;
  }
}

/// Multiplies `g` in place by the activation derivative, given outputs `h`.
void activate_backward(Activation a, const Eigen::MatrixXd& h, Eigen::MatrixXd& g) {
  switch (a) {
    case Activation::Tanh: g.array() *= 1.0 - h.array().square(); break;
    case Activation::Relu: g.array() *= (h.array() > 0.0).cast<double>(); break;
    case Activation::Identity: break;
  }
}

void check_spec(const MlpSpec& spec, Eigen::Index n_weights) {
  if (spec.widths.size() < 2) throw InvalidParameter("mlp: need at least input and output widths");
  if (spec.n_params() != n_weights)
    throw DimensionMismatch("mlp: weight vector has " + std::to_string(n_weights) +
                            " entries, network needs " + std::to_string(spec.n_params()));
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw InvalidParameter("unknown activation '" + s + "'");
}

Eigen::Index MlpSpec::n_params() const {
  Eigen::Index n = 0;
  for (int l = 0; l < n_layers(); ++l) n += Eigen::Index{widths[l + 1]} * (widths[l] + 1);
  return n;
}

Eigen::MatrixXd mlp_apply(const MlpSpec& spec, ConstParamsRef w, const Eigen::MatrixXd& input,
                          MlpCache* cache) {
  check_spec(spec, w.size());
  if (input.rows() != spec.in())
    throw DimensionMismatch("mlp: input has " + std::to_string(input.rows()) + " rows, expected " +
                            std::to_string(spec.in()));
  if (cache) {
    cache->act.clear();
    cache->act.push_back(input);
  }
  Eigen::MatrixXd h = input;
  Eigen::Index off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int rows = spec.widths[l + 1], cols = spec.widths[l];
    const Eigen::Map<const Eigen::MatrixXd> W(w.data() + off, rows, cols);
    off += Eigen::Index{rows} * cols;
    const auto b = w.segment(off, rows);
    off += rows;
    Eigen::MatrixXd next = W * h;
    next.colwise() += b;
    if (l + 1 < spec.n_layers()) activate(spec.hidden, next);
    h = std::move(next);
    if (cache) cache->act.push_back(h);
  }
  return h;
}

Eigen::MatrixXd mlp_grad(const MlpSpec& spec, ConstParamsRef w, const MlpCache& cache,
                         const Eigen::MatrixXd& dout, ParamsRef grad) {
  check_spec(spec, w.size());
  if (grad.size() != w.size()) throw DimensionMismatch("mlp: gradient buffer size mismatch");
  if (static_cast<int>(cache.act.size()) != spec.n_layers() + 1)
    throw InvalidParameter("mlp: cache does not match network");

  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(spec.n_layers()));
  Eigen::Index off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    offsets[static_cast<std::size_t>(l)] = off;
    off += Eigen::Index{spec.widths[l + 1]} * (spec.widths[l] + 1);
  }

  Eigen::MatrixXd g = dout;
  for (int l = spec.n_layers() - 1; l >= 0; --l) {
    const int rows = spec.widths[l + 1], cols = spec.widths[l];
    const Eigen::Index o = offsets[static_cast<std::size_t>(l)];
    if (l + 1 < spec.n_layers()) activate_backward(spec.hidden, cache.act[l + 1], g);
    Eigen::Map<Eigen::MatrixXd> gW(grad.data() + o, rows, cols);
    gW.noalias() += g * cache.act[l].transpose();
    grad.segment(o + Eigen::Index{rows} * cols, rows) += g.rowwise().sum();
    const Eigen::Map<const Eigen::MatrixXd> W(w.data() + o, rows, cols);
    g = W.transpose() * g;
  }
  return g;
}

void mlp_init(const MlpSpec& spec, ParamsRef w, RngStream& rng, bool zero_final) {
  check_spec(spec, w.size());
  Eigen::Index off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int rows = spec.widths[l + 1], cols = spec.widths[l];
    const Eigen::Index nw = Eigen::Index{rows} * cols;
    const bool zero = zero_final && l + 1 == spec.n_layers();
    const double a = std::sqrt(3.0 / cols);
    for (Eigen::Index i = 0; i < nw; ++i) w(off + i) = zero ? 0.0 : a * (2.0 * rng.uniform() - 1.0);
    w.segment(off + nw, rows).setZero();
    off += nw + rows;
  }
}

void ObservationSet::validate() const {
  if (y.rows() == 0) throw EmptySet("observation set is empty");
  if (x.rows() != y.rows())
    throw DimensionMismatch("observation set: x has " + std::to_string(x.rows()) +
                            " rows, y has " + std::to_string(y.rows()));
}

namespace detail {

void assemble_elements(const std::vector<ObservationSet>& sets, int width,
                       Eigen::MatrixXd& elements, std::vector<Eigen::Index>& offsets) {
  offsets.assign(1, 0);
  for (const auto& s : sets) {
    s.validate();
    if (s.x.cols() + s.y.cols() != width)
      throw DimensionMismatch("deepset: element width " + std::to_string(s.x.cols() + s.y.cols()) +
                              " does not match network input " + std::to_string(width));
    offsets.push_back(offsets.back() + s.size());
  }
  elements.resize(width, offsets.back());
  Eigen::Index col = 0;
  for (const auto& s : sets) {
    for (Eigen::Index j = 0; j < s.size(); ++j, ++col) {
      elements.col(col).head(s.x.cols()) = s.x.row(j).transpose();
      elements.col(col).tail(s.y.cols()) = s.y.row(j).transpose();
    }
  }
}

Eigen::MatrixXd pool_mean(const Eigen::MatrixXd& h, const Eigen::MatrixXd& elements,
                          const std::vector<Eigen::Index>& offsets) {
  const auto n_sets = static_cast<Eigen::Index>(offsets.size()) - 1;
  const Eigen::Index width = elements.rows();
  Eigen::MatrixXd pooled(h.rows(), n_sets);
  std::vector<Eigen::Index> order;
  for (Eigen::Index b = 0; b < n_sets; ++b) {
    const Eigen::Index lo = offsets[static_cast<std::size_t>(b)];
    const Eigen::Index hi = offsets[static_cast<std::size_t>(b) + 1];
    order.resize(static_cast<std::size_t>(hi - lo));
    std::iota(order.begin(), order.end(), lo);
    std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
      const double* ci = elements.col(i).data();
      const double* cj = elements.col(j).data();
      return std::lexicographical_compare(ci, ci + width, cj, cj + width);
    });
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(h.rows());
    for (const auto i : order) acc += h.col(i);
    pooled.col(b) = acc / static_cast<double>(hi - lo);
  }
  return pooled;
}

}  // namespace detail

Eigen::MatrixXd deepset_summary_batch(const DeepSetSpec& spec, ConstParamsRef element_w,
                                      ConstParamsRef post_w,
                                      const std::vector<ObservationSet>& sets) {
  Eigen::MatrixXd elements;
  std::vector<Eigen::Index> offsets;
  detail::assemble_elements(sets, spec.element_net.in(), elements, offsets);
  const Eigen::MatrixXd h = mlp_apply(spec.element_net, element_w, elements);
  return mlp_apply(spec.post_net, post_w, detail::pool_mean(h, elements, offsets));
}

}  // namespace uasabi
