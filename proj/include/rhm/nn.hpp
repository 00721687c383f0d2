#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rhm/dataset.hpp"
#include "rhm/error.hpp"
#include "rhm/params.hpp"
#include "rhm/random.hpp"

namespace rhm {

enum class ArchKind { shallow_fcn, deep_fcn, tree_cnn };

inline std::string to_string(ArchKind k) {
  switch (k) {
    case ArchKind::shallow_fcn: return "shallow-fcn";
    case ArchKind::deep_fcn: return "deep-fcn";
    case ArchKind::tree_cnn: return "tree-cnn";
  }
  return "?";
}

inline ArchKind parse_arch_kind(const std::string& s) {
  if (s == "shallow-fcn" || s == "fcn") return ArchKind::shallow_fcn;
  if (s == "deep-fcn") return ArchKind::deep_fcn;
  if (s == "tree-cnn" || s == "cnn") return ArchKind::tree_cnn;
  throw Error(ErrorCode::config, "unknown architecture '" + s + "'");
}

/// standard: weights drawn with variance gain/fan_in and used as is.
/// ntk: unit-variance weights multiplied by sqrt(gain/fan_in) in the forward
/// pass, which makes the SGD step size independent of the width.
enum class Parameterization { standard, ntk };

inline std::string to_string(Parameterization p) { return p == Parameterization::ntk ? "ntk" : "standard"; }

inline Parameterization parse_parameterization(const std::string& s) {
  if (s == "standard") return Parameterization::standard;
  if (s == "ntk") return Parameterization::ntk;
  throw Error(ErrorCode::config, "unknown parameterization '" + s + "'");
}

/// width 0 and depth 0 select the defaults for the data shape.
struct Architecture {
  ArchKind kind = ArchKind::tree_cnn;
  int width = 0;
  /// Hidden layers of the deep FCN; ignored otherwise.
  int depth = 0;
  Parameterization param = Parameterization::standard;
};

/// Tree CNN: 2 v^s. With a fixed learning rate and standard scaling, wider
/// tree CNNs generalize worse at the same P.
inline int default_width(ArchKind kind, const ModelParams& p) {
  switch (kind) {
    case ArchKind::tree_cnn: return 2 * p.tuple_count();
    case ArchKind::shallow_fcn: return 512;
    case ArchKind::deep_fcn: return 256;
  }
  return 256;
}

inline Architecture resolved(Architecture a, const ModelParams& p) {
  if (a.width <= 0) a.width = default_width(a.kind, p);
  if (a.kind == ArchKind::shallow_fcn) a.depth = 1;
  if (a.kind == ArchKind::tree_cnn) a.depth = p.L;
  if (a.kind == ArchKind::deep_fcn && a.depth <= 0) a.depth = 3;
  return a;
}

inline std::vector<std::string> architecture_warnings(const Architecture& arch, const ModelParams& p) {
  std::vector<std::string> w;
  const auto a = resolved(arch, p);
  if (a.kind == ArchKind::tree_cnn && a.width <= p.tuple_count()) {
    w.push_back("tree-cnn width " + std::to_string(a.width) + " does not exceed v^s=" +
                std::to_string(p.tuple_count()));
  }
  return w;
}

/// Affine map applied to consecutive groups of `group` positions, each with
/// `in` channels, producing one position with `out` channels. A convolution
/// with filter size = stride = group when group < positions, a dense layer when
/// it covers all of them.
template <class Scalar>
struct Layer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  int group = 1;
  int in = 0;
  int out = 0;
  bool relu = true;
  /// Forward multiplier on W (1 under the standard parameterization).
  Scalar scale = Scalar(1);
  Matrix W;  // (group*in) x out
  RowVector b;
};

template <class Scalar>
using Activations = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
struct Network {
  Architecture arch;
  int d = 0;
  int v = 0;
  int n_c = 0;
  std::vector<Layer<Scalar>> layers;
  std::vector<std::string> warnings;

  /// Positions at the output of each layer; entry 0 is the input.
  std::vector<int> positions() const {
    std::vector<int> pos{d};
    for (const auto& l : layers) pos.push_back(pos.back() / l.group);
    return pos;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
  }
};

template <class Scalar>
Network<Scalar> init_network(const Architecture& arch_in, const ModelParams& p, Rng& rng) {
  validate(p);
  const auto arch = resolved(arch_in, p);
  require(arch.width >= 1 && arch.depth >= 1, ErrorCode::config, "architecture needs positive width and depth");
  Network<Scalar> net;
  net.arch = arch;
  net.d = p.input_dim();
  net.v = p.v;
  net.n_c = p.n_c;
  net.warnings = architecture_warnings(arch, p);
  auto add = [&](int group, int in, int out, bool relu) {
    Layer<Scalar> l;
    l.group = group;
    l.in = in;
    l.out = out;
    l.relu = relu;
    const int fan_in = group * in;
    // He scale for rectified layers, 1/fan_in for the linear readout.
    double sd = std::sqrt((relu ? 2.0 : 1.0) / fan_in);
    if (arch.param == Parameterization::ntk) {
      l.scale = static_cast<Scalar>(sd);
      sd = 1.0;
    }
    l.W.resize(fan_in, out);
    for (Eigen::Index j = 0; j < l.W.cols(); ++j)
      for (Eigen::Index i = 0; i < l.W.rows(); ++i) l.W(i, j) = static_cast<Scalar>(sd * rng.normal());
    l.b = Layer<Scalar>::RowVector::Zero(out);
    net.layers.push_back(std::move(l));
  };
  const int H = arch.width;
  switch (arch.kind) {
    case ArchKind::shallow_fcn:
      add(net.d, p.v, H, true);
      break;
    case ArchKind::deep_fcn:
      add(net.d, p.v, H, true);
      for (int k = 1; k < arch.depth; ++k) add(1, H, H, true);
      break;
    case ArchKind::tree_cnn:
      add(p.s, p.v, H, true);
      for (int k = 1; k < p.L; ++k) add(p.s, H, H, true);
      break;
  }
  add(1, H, p.n_c, false);
  return net;
}

/// Encoded rows for the given data: datum i occupies rows [i*d, (i+1)*d).
template <class Scalar>
Activations<Scalar> encode_batch(const Dataset& data, std::span<const std::size_t> idx, int v, bool whiten = true) {
  const int d = data.dim;
  const Scalar off = whiten ? static_cast<Scalar>(1.0 / v) : Scalar(0);
  Activations<Scalar> x(static_cast<Eigen::Index>(idx.size()) * d, v);
  x.setConstant(-off);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = data.row(idx[r]);
    for (int i = 0; i < d; ++i) x(static_cast<Eigen::Index>(r) * d + i, row[i]) += Scalar(1);
  }
  return x;
}

template <class Scalar>
Activations<Scalar> encode_batch(const Dataset& data, int v, bool whiten = true) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return encode_batch<Scalar>(data, idx, v, whiten);
}

/// acts[0] is the input, acts[k] the output of layer k; the last entry holds
/// the logits (batch x n_c).
template <class Scalar>
std::vector<Activations<Scalar>> forward(const Network<Scalar>& net, const Activations<Scalar>& x) {
  require(x.cols() == net.v && x.rows() % net.d == 0, ErrorCode::out_of_range, "input batch has wrong shape");
  std::vector<Activations<Scalar>> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(x);
  for (const auto& l : net.layers) {
    const auto& in = acts.back();
    require(in.cols() == l.in && in.rows() % l.group == 0, ErrorCode::out_of_range, "layer shape mismatch");
    Eigen::Map<const Activations<Scalar>> grouped(in.data(), in.rows() / l.group, static_cast<Eigen::Index>(l.group) * l.in);
    Activations<Scalar> z = grouped * l.W;
    if (l.scale != Scalar(1)) z *= l.scale;
    z.rowwise() += l.b;
    if (l.relu) z = z.cwiseMax(Scalar(0));
    acts.push_back(std::move(z));
  }
  return acts;
}

template <class Scalar>
Activations<Scalar> logits(const Network<Scalar>& net, const Activations<Scalar>& x) {
  return std::move(forward(net, x).back());
}

template <class Scalar>
struct Gradients {
  std::vector<typename Layer<Scalar>::Matrix> dW;
  std::vector<typename Layer<Scalar>::RowVector> db;
};

/// Mean cross-entropy over the batch, computed with log-sum-exp.
template <class Scalar>
double cross_entropy(const Activations<Scalar>& z, std::span<const int> labels) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = static_cast<double>(z.row(i).maxCoeff());
    double acc = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) acc += std::exp(static_cast<double>(z(i, c)) - mx);
    loss += mx + std::log(acc) - static_cast<double>(z(i, labels[static_cast<std::size_t>(i)]));
  }
  return loss / static_cast<double>(z.rows());
}

/// Loss and exact gradients by backpropagation.
template <class Scalar>
double loss_and_gradient(const Network<Scalar>& net, const Activations<Scalar>& x, std::span<const int> labels,
                         Gradients<Scalar>& grad) {
  const auto acts = forward(net, x);
  const auto& z = acts.back();
  require(static_cast<std::size_t>(z.rows()) == labels.size(), ErrorCode::out_of_range, "label count mismatch");
  const double loss = cross_entropy(z, labels);
  const auto B = static_cast<Scalar>(z.rows());

  Activations<Scalar> delta(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Scalar mx = z.row(i).maxCoeff();
    auto e = (z.row(i).array() - mx).exp();
    delta.row(i) = e / e.sum();
    delta(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
  }
  delta /= B;

  const auto n = net.layers.size();
  grad.dW.resize(n);
  grad.db.resize(n);
  for (std::size_t k = n; k-- > 0;) {
    const auto& l = net.layers[k];
    if (l.relu) delta = (acts[k + 1].array() > Scalar(0)).select(delta, Scalar(0));
    const auto& in = acts[k];
    Eigen::Map<const Activations<Scalar>> grouped(in.data(), in.rows() / l.group, static_cast<Eigen::Index>(l.group) * l.in);
    grad.dW[k].noalias() = grouped.transpose() * delta;
    if (l.scale != Scalar(1)) grad.dW[k] *= l.scale;
    grad.db[k] = delta.colwise().sum();
    if (k > 0) {
      Activations<Scalar> back = delta * l.W.transpose();
      if (l.scale != Scalar(1)) back *= l.scale;
      delta = Eigen::Map<Activations<Scalar>>(back.data(), in.rows(), in.cols());
    }
  }
  return loss;
}

struct TrainConfig {
  int batch = 128;
  double lr = 0.3;
  double stop_loss = 1e-3;
  int max_epochs = 1000;
  std::uint64_t seed = 0;
  bool whiten = true;
};

struct TrainResult {
  /// Mean minibatch loss of each epoch.
  std::vector<double> loss_history;
  int epochs = 0;
  std::uint64_t steps = 0;
  bool converged = false;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
};

inline void validate(const TrainConfig& c) {
  require(c.batch >= 1, ErrorCode::config, "batch size must be positive");
  require(c.lr > 0 && std::isfinite(c.lr), ErrorCode::config, "learning rate must be positive");
  require(c.stop_loss > 0, ErrorCode::config, "stop threshold must be positive");
  require(c.max_epochs >= 1, ErrorCode::config, "epoch cap must be positive");
}

/// Minibatch SGD with a fresh shuffle each epoch. Stops once the epoch-mean
/// minibatch loss drops below the threshold, or at the epoch cap.
template <class Scalar>
TrainResult train(Network<Scalar>& net, const Dataset& data, const TrainConfig& cfg, Rng& rng) {
  validate(cfg);
  require(!data.empty(), ErrorCode::out_of_range, "training set is empty");
  require(data.dim == net.d, ErrorCode::out_of_range, "training data has wrong dimension");
  const auto all = encode_batch<Scalar>(data, net.v, cfg.whiten);
  const std::size_t P = data.size();
  const int d = net.d;
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult res;
  Gradients<Scalar> grad;
  Activations<Scalar> xb;
  std::vector<int> yb;
  const auto lr = static_cast<Scalar>(cfg.lr);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < P; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t B = std::min(P - start, static_cast<std::size_t>(cfg.batch));
      xb.resize(static_cast<Eigen::Index>(B) * d, net.v);
      yb.resize(B);
      for (std::size_t r = 0; r < B; ++r) {
        const auto src = order[start + r];
        xb.middleRows(static_cast<Eigen::Index>(r) * d, d) = all.middleRows(static_cast<Eigen::Index>(src) * d, d);
        yb[r] = data.labels[src];
      }
      const double loss = loss_and_gradient(net, xb, yb, grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::divergence,
                    "loss is not finite at step " + std::to_string(res.steps) + " (epoch " + std::to_string(epoch) + ")");
      }
      for (std::size_t k = 0; k < net.layers.size(); ++k) {
        net.layers[k].W.noalias() -= lr * grad.dW[k];
        net.layers[k].b.noalias() -= lr * grad.db[k];
      }
      epoch_loss += loss * static_cast<double>(B);
      ++res.steps;
    }
    epoch_loss /= static_cast<double>(P);
    res.loss_history.push_back(epoch_loss);
    res.epochs = epoch + 1;
    res.final_loss = epoch_loss;
    if (epoch_loss < cfg.stop_loss) {
      res.converged = true;
      break;
    }
  }
  return res;
}

/// Predicted class per datum (argmax, lowest index on ties), in chunks.
template <class Scalar>
std::vector<int> predict(const Network<Scalar>& net, const Dataset& data, bool whiten = true,
                         std::size_t chunk = 2048) {
  std::vector<int> out(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    const auto z = logits(net, encode_batch<Scalar>(data, idx, net.v, whiten));
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < z.cols(); ++c)
        if (z(static_cast<Eigen::Index>(i), c) > z(static_cast<Eigen::Index>(i), best)) best = c;
      out[start + i] = static_cast<int>(best);
    }
  }
  return out;
}

template <class Scalar>
double test_error(const Network<Scalar>& net, const Dataset& data, bool whiten = true) {
  require(!data.empty(), ErrorCode::out_of_range, "test set is empty");
  const auto pred = predict(net, data, whiten);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) wrong += pred[i] != data.labels[i];
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

/// Self-describing weight dump.
template <class Scalar>
nlohmann::json to_json(const Network<Scalar>& net) {
  nlohmann::json j;
  j["schema"] = "rhm-network-v1";
  j["arch"] = {{"kind", to_string(net.arch.kind)},
               {"width", net.arch.width},
               {"depth", net.arch.depth},
               {"param", to_string(net.arch.param)}};
  j["d"] = net.d;
  j["v"] = net.v;
  j["n_c"] = net.n_c;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers) {
    std::vector<double> w(static_cast<std::size_t>(l.W.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) w[k++] = static_cast<double>(l.W(r, c));
    std::vector<double> b(static_cast<std::size_t>(l.b.size()));
    for (Eigen::Index c = 0; c < l.b.size(); ++c) b[static_cast<std::size_t>(c)] = static_cast<double>(l.b(c));
    j["layers"].push_back({{"group", l.group},
                           {"in", l.in},
                           {"out", l.out},
                           {"relu", l.relu},
                           {"scale", static_cast<double>(l.scale)},
                           {"W", w},
                           {"b", b}});
  }
  return j;
}

template <class Scalar>
Network<Scalar> network_from_json(const nlohmann::json& j) {
  try {
    require(j.at("schema") == "rhm-network-v1", ErrorCode::parse, "unexpected network schema");
    Network<Scalar> net;
    net.arch.kind = parse_arch_kind(j.at("arch").at("kind").get<std::string>());
    net.arch.width = j.at("arch").at("width").get<int>();
    net.arch.depth = j.at("arch").at("depth").get<int>();
    net.arch.param = parse_parameterization(j.at("arch").value("param", std::string("standard")));
    net.d = j.at("d").get<int>();
    net.v = j.at("v").get<int>();
    net.n_c = j.at("n_c").get<int>();
    for (const auto& jl : j.at("layers")) {
      Layer<Scalar> l;
      l.group = jl.at("group").get<int>();
      l.in = jl.at("in").get<int>();
      l.out = jl.at("out").get<int>();
      l.relu = jl.at("relu").get<bool>();
      l.scale = static_cast<Scalar>(jl.value("scale", 1.0));
      const auto w = jl.at("W").get<std::vector<double>>();
      const auto b = jl.at("b").get<std::vector<double>>();
      require(w.size() == static_cast<std::size_t>(l.group) * l.in * l.out && b.size() == static_cast<std::size_t>(l.out),
              ErrorCode::parse, "layer weights have wrong size");
      l.W.resize(static_cast<Eigen::Index>(l.group) * l.in, l.out);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < l.W.rows(); ++r)
        for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = static_cast<Scalar>(w[k++]);
      l.b.resize(l.out);
      for (int c = 0; c < l.out; ++c) l.b(c) = static_cast<Scalar>(b[static_cast<std::size_t>(c)]);
      net.layers.push_back(std::move(l));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("network file: ") + e.what());
  }
}

}  // namespace rhm
