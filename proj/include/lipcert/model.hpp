#pragma once

// Feed-forward networks x^{k+1} = phi(W^k x^k + b^k), f(x) = W^l x^l + b^l,
// with a single scalar activation shared by all hidden layers.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lipcert/errors.hpp"
#include "lipcert/numerics.hpp"

namespace lipcert {

/// Slope bounds alpha <= (phi(x) - phi(y)) / (x - y) <= beta.
struct SectorBounds {
  double alpha = 0.0;
  double beta = 1.0;

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || !(alpha < beta)) {
      throw ValidationError("invalid sector: need 0 <= alpha < beta < inf (got alpha=" +
                            std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
    }
  }
  bool operator==(const SectorBounds&) const = default;
};

enum class ActivationName { kRelu, kTanh, kSigmoid, kLeakyRelu };

inline std::string_view to_string(ActivationName n) {
  switch (n) {
    case ActivationName::kRelu: return "relu";
    case ActivationName::kTanh: return "tanh";
    case ActivationName::kSigmoid: return "sigmoid";
    case ActivationName::kLeakyRelu: return "leaky_relu";
  }
  return "?";
}

inline ActivationName parse_activation_name(std::string_view s) {
  if (s == "relu") return ActivationName::kRelu;
  if (s == "tanh") return ActivationName::kTanh;
  if (s == "sigmoid") return ActivationName::kSigmoid;
  if (s == "leaky_relu") return ActivationName::kLeakyRelu;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

struct Activation {
  ActivationName name = ActivationName::kRelu;
  double negative_slope = 0.0;  // leaky_relu only
  std::optional<double> alpha_override;
  std::optional<double> beta_override;

  void validate() const {
    if (name == ActivationName::kLeakyRelu &&
        !(negative_slope > 0.0 && negative_slope < 1.0)) {
      throw ValidationError("leaky_relu requires 0 < negative_slope < 1");
    }
  }

  double apply(double x) const {
    switch (name) {
      case ActivationName::kRelu: return x > 0.0 ? x : 0.0;
      case ActivationName::kTanh: return std::tanh(x);
      case ActivationName::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
      case ActivationName::kLeakyRelu: return x > 0.0 ? x : negative_slope * x;
    }
    return x;
  }

  /// Derivative, taking the left slope at the kink of piecewise-linear units.
  double derivative(double x) const {
    switch (name) {
      case ActivationName::kRelu: return x > 0.0 ? 1.0 : 0.0;
      case ActivationName::kTanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case ActivationName::kSigmoid: {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      }
      case ActivationName::kLeakyRelu: return x > 0.0 ? 1.0 : negative_slope;
    }
    return 1.0;
  }

  bool piecewise_linear() const {
    return name == ActivationName::kRelu || name == ActivationName::kLeakyRelu;
  }

  bool operator==(const Activation&) const = default;
};

/// Sector of the activation: (0, 1) for relu, tanh and sigmoid, (a, 1) for
/// leaky_relu(a). Explicit overrides replace the table value.
inline SectorBounds sector_for(const Activation& act) {
  SectorBounds s{0.0, 1.0};
  if (act.name == ActivationName::kLeakyRelu) s.alpha = act.negative_slope;
  if (act.alpha_override) s.alpha = *act.alpha_override;
  if (act.beta_override) s.beta = *act.beta_override;
  return s;
}

struct Layer {
  DenseMatrix weight;  // n_{k+1} x n_k
  Vector bias;         // n_{k+1}

  bool operator==(const Layer&) const = default;
};

/// Validated network. layers.size() == hidden_layers() + 1.
class FeedForwardNetwork {
 public:
  FeedForwardNetwork(std::vector<Layer> layers, Activation activation)
      : layers_(std::move(layers)), activation_(std::move(activation)) {
    if (layers_.empty()) throw ValidationError("network has no layers");
    activation_.validate();
    sector_ = sector_for(activation_);
    sector_.validate();
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const Layer& L = layers_[k];
      if (L.weight.rows() == 0 || L.weight.cols() == 0) {
        throw ValidationError("layer " + std::to_string(k) + " has an empty weight");
      }
      if (L.bias.size() != L.weight.rows()) {
        throw ValidationError("layer " + std::to_string(k) + ": bias length " +
                              std::to_string(L.bias.size()) + " != weight rows " +
                              std::to_string(L.weight.rows()));
      }
      if (k > 0 && L.weight.cols() != layers_[k - 1].weight.rows()) {
        throw ValidationError("dimension mismatch: layer " + std::to_string(k) + " has " +
                              std::to_string(L.weight.cols()) + " columns but layer " +
                              std::to_string(k - 1) + " has " +
                              std::to_string(layers_[k - 1].weight.rows()) + " rows");
      }
      for (double v : L.weight.data())
        if (!std::isfinite(v)) throw ValidationError("non-finite weight entry");
      for (double v : L.bias)
        if (!std::isfinite(v)) throw ValidationError("non-finite bias entry");
    }
    dims_.push_back(layers_.front().weight.cols());
    for (const auto& L : layers_) dims_.push_back(L.weight.rows());
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t k) const { return layers_.at(k); }
  const Activation& activation() const noexcept { return activation_; }
  const SectorBounds& sector() const noexcept { return sector_; }

  /// (n_0, n_1, ..., n_{l+1}).
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t hidden_layers() const noexcept { return layers_.size() - 1; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }
  std::vector<std::size_t> hidden_widths() const {
    return {dims_.begin() + 1, dims_.end() - 1};
  }
  std::size_t hidden_total() const {
    std::size_t n = 0;
    for (std::size_t k = 1; k + 1 < dims_.size(); ++k) n += dims_[k];
    return n;
  }

  bool operator==(const FeedForwardNetwork& o) const {
    return layers_ == o.layers_ && activation_ == o.activation_;
  }

 private:
  std::vector<Layer> layers_;
  Activation activation_;
  SectorBounds sector_;
  std::vector<std::size_t> dims_;
};

// ---------------------------------------------------------------------------
// Documents

namespace detail {

inline double number_at(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) throw ValidationError(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(std::string(what) + " is not finite");
  return v;
}

inline Vector vector_from(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array");
  Vector out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(number_at(e, what));
  return out;
}

inline DenseMatrix matrix_from(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ValidationError("weight must be a non-empty array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  Vector data;
  for (std::size_t i = 0; i < rows; ++i) {
    Vector r = vector_from(j[i], "weight entry");
    if (i == 0) {
      cols = r.size();
      if (cols == 0) throw ValidationError("weight rows must be non-empty");
      data.reserve(rows * cols);
    } else if (r.size() != cols) {
      throw ValidationError("weight rows have different lengths");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return DenseMatrix(rows, cols, std::move(data));
}

inline nlohmann::json matrix_to_json(const DenseMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(Vector(r.begin(), r.end()));
  }
  return rows;
}

}  // namespace detail

inline Activation activation_from_json(const nlohmann::json& j) {
  Activation act;
  if (j.is_string()) {
    act.name = parse_activation_name(j.get<std::string>());
  } else if (j.is_object()) {
    if (!j.contains("name") || !j["name"].is_string()) {
      throw ValidationError("activation.name must be a string");
    }
    act.name = parse_activation_name(j["name"].get<std::string>());
    if (j.contains("negative_slope")) {
      act.negative_slope = detail::number_at(j["negative_slope"], "negative_slope");
    } else if (act.name == ActivationName::kLeakyRelu) {
      throw ValidationError("leaky_relu requires negative_slope");
    }
    if (j.contains("alpha")) act.alpha_override = detail::number_at(j["alpha"], "alpha");
    if (j.contains("beta")) act.beta_override = detail::number_at(j["beta"], "beta");
  } else {
    throw ValidationError("activation must be an object or a name");
  }
  act.validate();
  return act;
}

inline nlohmann::json activation_to_json(const Activation& act) {
  nlohmann::json j;
  j["name"] = std::string(to_string(act.name));
  if (act.name == ActivationName::kLeakyRelu) j["negative_slope"] = act.negative_slope;
  if (act.alpha_override) j["alpha"] = *act.alpha_override;
  if (act.beta_override) j["beta"] = *act.beta_override;
  return j;
}

inline FeedForwardNetwork network_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("network document must be an object");
  if (!doc.contains("layers") || !doc["layers"].is_array()) {
    throw ValidationError("network document needs a 'layers' array");
  }
  std::vector<Layer> layers;
  for (const auto& jl : doc["layers"]) {
    if (!jl.is_object() || !jl.contains("weight")) {
      throw ValidationError("each layer needs a 'weight'");
    }
    Layer L;
    L.weight = detail::matrix_from(jl["weight"]);
    if (jl.contains("bias") && !jl["bias"].is_null()) {
      L.bias = detail::vector_from(jl["bias"], "bias");
    } else {
      L.bias.assign(L.weight.rows(), 0.0);
    }
    layers.push_back(std::move(L));
  }
  Activation act;
  if (doc.contains("activation")) act = activation_from_json(doc["activation"]);
  return FeedForwardNetwork(std::move(layers), act);
}

/// Parses and validates a network document.
inline FeedForwardNetwork load_network(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed network document: ") + e.what());
  }
  return network_from_json(doc);
}

inline nlohmann::json network_to_json(const FeedForwardNetwork& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : net.layers()) {
    layers.push_back({{"weight", detail::matrix_to_json(L.weight)}, {"bias", L.bias}});
  }
  return {{"layers", std::move(layers)}, {"activation", activation_to_json(net.activation())}};
}

inline std::string serialize_network(const FeedForwardNetwork& net) {
  return network_to_json(net).dump();
}

/// Input-vector document: either a bare array of numbers or {"x": [...]}.
inline Vector load_vector(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed vector document: ") + e.what());
  }
  if (doc.is_object()) {
    if (!doc.contains("x")) throw ValidationError("vector document object needs an \"x\" array");
    doc = doc["x"];
  }
  Vector v = detail::vector_from(doc, "input vector");
  if (v.empty()) throw ValidationError("input vector is empty");
  return v;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Hidden signals of one forward pass: x^0 (the input), ..., x^l.
struct ForwardTrace {
  std::vector<Vector> signals;
  std::vector<Vector> preactivations;  // W^k x^k + b^k for k < l
  Vector output;
};

inline ForwardTrace forward_trace(const FeedForwardNetwork& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) {
    throw ValidationError("input length " + std::to_string(x.size()) + " != network input dim " +
                          std::to_string(net.input_dim()));
  }
  ForwardTrace tr;
  tr.signals.emplace_back(x.begin(), x.end());
  const auto& layers = net.layers();
  const auto& act = net.activation();
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
    Vector z = matvec(layers[k].weight, tr.signals.back());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layers[k].bias[i];
    Vector h(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) h[i] = act.apply(z[i]);
    tr.preactivations.push_back(std::move(z));
    tr.signals.push_back(std::move(h));
  }
  tr.output = matvec(layers.back().weight, tr.signals.back());
  for (std::size_t i = 0; i < tr.output.size(); ++i) tr.output[i] += layers.back().bias[i];
  return tr;
}

inline Vector forward(const FeedForwardNetwork& net, std::span<const double> x) {
  return forward_trace(net, x).output;
}

/// Cuts the network after every `chunk` activation layers. Every piece but the
/// last ends with an identity output layer, so composing the pieces reproduces
/// the original map exactly.
inline std::vector<FeedForwardNetwork> split_network(const FeedForwardNetwork& net,
                                                     std::size_t chunk) {
  if (chunk < 1) throw ValidationError("split chunk must be at least 1");
  const std::size_t ell = net.hidden_layers();
  if (ell < 1) throw ValidationError("cannot split a network without hidden layers");
  if (chunk >= ell) return {net};

  std::vector<FeedForwardNetwork> parts;
  const auto& layers = net.layers();
  for (std::size_t start = 0; start < ell; start += chunk) {
    const std::size_t stop = std::min(start + chunk, ell);
    std::vector<Layer> piece(layers.begin() + static_cast<std::ptrdiff_t>(start),
                             layers.begin() + static_cast<std::ptrdiff_t>(stop));
    if (stop == ell) {
      piece.push_back(layers.back());
    } else {
      const std::size_t width = layers[stop - 1].weight.rows();
      piece.push_back(Layer{DenseMatrix::identity(width), Vector(width, 0.0)});
    }
    parts.emplace_back(std::move(piece), net.activation());
  }
  return parts;
}

/// Same network with every bias replaced.
inline FeedForwardNetwork with_biases(const FeedForwardNetwork& net, std::vector<Vector> biases) {
  std::vector<Layer> layers = net.layers();
  if (biases.size() != layers.size()) throw ValidationError("bias count mismatch");
  for (std::size_t k = 0; k < layers.size(); ++k) layers[k].bias = std::move(biases[k]);
  return FeedForwardNetwork(std::move(layers), net.activation());
}

/// Same network with the final weight multiplied by `c`.
inline FeedForwardNetwork with_scaled_output(const FeedForwardNetwork& net, double c) {
  std::vector<Layer> layers = net.layers();
  for (double& v : layers.back().weight.data()) v *= c;
  return FeedForwardNetwork(std::move(layers), net.activation());
}

/// Random network with N(0, scale^2) entries; scale defaults to 1/sqrt(fan-in).
inline FeedForwardNetwork random_network(const std::vector<std::size_t>& dims, std::uint64_t seed,
                                         std::optional<double> scale = std::nullopt,
                                         Activation activation = {}) {
  if (dims.size() < 2) throw ValidationError("random_network needs at least two dims");
  for (std::size_t d : dims)
    if (d == 0) throw ValidationError("random_network dims must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Layer> layers;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(dims[k])));
    Layer L{DenseMatrix(dims[k + 1], dims[k]), Vector(dims[k + 1])};
    for (double& v : L.weight.data()) v = s * normal(rng);
    for (double& v : L.bias) v = s * normal(rng);
    layers.push_back(std::move(L));
  }
  return FeedForwardNetwork(std::move(layers), activation);
}

}  // namespace lipcert
