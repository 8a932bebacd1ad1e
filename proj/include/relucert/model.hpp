#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relucert/errors.hpp"
#include "relucert/linalg.hpp"
#include "relucert/rng.hpp"

namespace relucert {

struct Layer {
  Matrix W;  // n_k x n_{k-1}
  Vec b;     // n_k
};

// Feed-forward ReLU network f(x) = W^(m) sigma(... sigma(W^(1) x + b^(1)) ...) + b^(m).
// ReLU after every layer except the last.
struct Network {
  std::vector<Layer> layers;

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().W.cols; }
  std::size_t output_dim() const { return layers.back().W.rows; }

  void validate() const {
    if (layers.empty()) throw schema_error("network has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const Layer& L = layers[k];
      if (L.W.rows == 0 || L.W.cols == 0)
        throw schema_error("layer has empty weight matrix",
                           static_cast<int>(k));
      if (L.b.size() != L.W.rows)
        throw dimension_mismatch(
            "bias length " + std::to_string(L.b.size()) +
                " does not match weight rows " + std::to_string(L.W.rows),
            static_cast<int>(k));
      if (k > 0 && L.W.cols != layers[k - 1].W.rows)
        throw dimension_mismatch(
            "layer " + std::to_string(k) + " expects input dim " +
                std::to_string(L.W.cols) + " but previous layer outputs " +
                std::to_string(layers[k - 1].W.rows),
            static_cast<int>(k));
      if (!all_finite(L.W) || !all_finite(L.b))
        throw schema_error("non-finite entry in layer", static_cast<int>(k));
    }
  }
};

// A Network whose final layer has exactly one output row: g(x) = f_c(x) - f_j(x).
struct MarginNetwork {
  Network net;

  MarginNetwork() = default;
  explicit MarginNetwork(Network n) : net(std::move(n)) {
    if (net.layers.empty() || net.layers.back().W.rows != 1)
      throw invalid_parameter(
          "margin network requires exactly one output row");
  }

  const Vec& wbar() const { return net.layers.back().W.a; }
  double bbar() const { return net.layers.back().b[0]; }
};

inline Vec forward(const Network& net, const Vec& x) {
  if (x.size() != net.input_dim())
    throw shape_error("forward: input length " + std::to_string(x.size()) +
                      " does not match network input dim " +
                      std::to_string(net.input_dim()));
  Vec h = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Vec z = matvec(net.layers[k].W, h);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += net.layers[k].b[i];
    if (k + 1 < net.layers.size())
      for (double& v : z) v = std::max(v, 0.0);
    h = std::move(z);
  }
  return h;
}

inline double forward_margin(const MarginNetwork& m, const Vec& x) {
  return forward(m.net, x)[0];
}

// Replace the last layer with the single row w = W_{c,:} - W_{j,:},
// b = b_c - b_j, so the merged network computes f_c - f_j.
inline MarginNetwork merge_last_layer(const Network& net, std::size_t c,
                                      std::size_t j) {
  const std::size_t nout = net.output_dim();
  if (c >= nout || j >= nout)
    throw invalid_parameter("class index out of range");
  if (c == j) throw invalid_parameter("margin requires two distinct classes");
  Network out;
  out.layers.assign(net.layers.begin(), net.layers.end() - 1);
  const Layer& last = net.layers.back();
  Layer merged;
  merged.W = Matrix(1, last.W.cols);
  for (std::size_t k = 0; k < last.W.cols; ++k)
    merged.W(0, k) = last.W(c, k) - last.W(j, k);
  merged.b = Vec{last.b[c] - last.b[j]};
  out.layers.push_back(std::move(merged));
  return MarginNetwork(std::move(out));
}

// Weights i.i.d. normal with standard deviation 1/sqrt(fan-in), biases zero.
// Deterministic per seed.
inline Network random_network(const std::vector<std::size_t>& dims,
                              std::uint64_t seed) {
  if (dims.size() < 2)
    throw invalid_parameter("random_network: need at least input and output dims");
  for (std::size_t d : dims)
    if (d == 0) throw invalid_parameter("random_network: zero-sized layer");
  Rng rng(seed);
  Network net;
  for (std::size_t k = 1; k < dims.size(); ++k) {
    Layer L;
    L.W = Matrix(dims[k], dims[k - 1]);
    const double sd = 1.0 / std::sqrt(static_cast<double>(dims[k - 1]));
    for (double& v : L.W.a) v = sd * rng.normal();
    L.b = Vec(dims[k], 0.0);
    net.layers.push_back(std::move(L));
  }
  return net;
}

// ---- File format ----
// Model: {"layers": [{"weights": [[row...], ...], "bias": [...]}, ...]}
// Input: {"input": [...], "label": optional integer}
// Unknown keys are rejected.

namespace detail {

inline nlohmann::json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(path + ": " + e.what());
  } catch (const nlohmann::json::out_of_range& e) {
    // Number literals that overflow double are value violations, not syntax.
    throw schema_error(path + ": " + e.what());
  }
}

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) throw schema_error(where + ": unknown key \"" + it.key() + "\"");
  }
}

inline double number_at(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number())
    throw schema_error(where + ": expected a number");
  return v.get<double>();
}

}  // namespace detail

inline Network network_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw schema_error("model: top level must be a mapping");
  detail::reject_unknown_keys(doc, {"layers"}, "model");
  if (!doc.contains("layers") || !doc["layers"].is_array() ||
      doc["layers"].empty())
    throw schema_error("model: \"layers\" must be a non-empty array");
  Network net;
  int k = 0;
  for (const auto& lj : doc["layers"]) {
    const std::string where = "layer " + std::to_string(k);
    if (!lj.is_object()) throw schema_error(where + ": must be a mapping", k);
    detail::reject_unknown_keys(lj, {"weights", "bias"}, where);
    if (!lj.contains("weights") || !lj["weights"].is_array() ||
        lj["weights"].empty())
      throw schema_error(where + ": \"weights\" must be a non-empty array of rows", k);
    if (!lj.contains("bias") || !lj["bias"].is_array())
      throw schema_error(where + ": \"bias\" must be an array", k);
    Layer L;
    const auto& rows = lj["weights"];
    const std::size_t nrows = rows.size();
    if (!rows[0].is_array() || rows[0].empty())
      throw schema_error(where + ": weight rows must be non-empty arrays", k);
    const std::size_t ncols = rows[0].size();
    L.W = Matrix(nrows, ncols);
    for (std::size_t i = 0; i < nrows; ++i) {
      if (!rows[i].is_array() || rows[i].size() != ncols)
        throw schema_error(where + ": ragged weight rows", k);
      for (std::size_t jcol = 0; jcol < ncols; ++jcol)
        L.W(i, jcol) = detail::number_at(rows[i][jcol], where + " weights");
    }
    L.b.reserve(lj["bias"].size());
    for (const auto& bv : lj["bias"])
      L.b.push_back(detail::number_at(bv, where + " bias"));
    if (!all_finite(L.W) || !all_finite(L.b))
      throw schema_error(where + ": non-finite entry", k);
    net.layers.push_back(std::move(L));
    ++k;
  }
  net.validate();
  return net;
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& L : net.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < L.W.rows; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < L.W.cols; ++j) row.push_back(L.W(i, j));
      rows.push_back(std::move(row));
    }
    layers.push_back(nlohmann::json{{"weights", std::move(rows)}, {"bias", L.b}});
  }
  return nlohmann::json{{"layers", std::move(layers)}};
}

inline Network load_network(const std::string& path) {
  return network_from_json(detail::parse_file(path));
}

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write file: " + path);
  out << network_to_json(net).dump(2) << "\n";
}

struct InputSpec {
  Vec x;
  std::optional<int> label;
};

inline InputSpec input_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw schema_error("input: top level must be a mapping");
  detail::reject_unknown_keys(doc, {"input", "label"}, "input");
  if (!doc.contains("input") || !doc["input"].is_array() || doc["input"].empty())
    throw schema_error("input: \"input\" must be a non-empty array");
  InputSpec spec;
  for (const auto& v : doc["input"])
    spec.x.push_back(detail::number_at(v, "input vector"));
  if (!all_finite(spec.x)) throw schema_error("input: non-finite entry");
  if (doc.contains("label")) {
    if (!doc["label"].is_number_integer())
      throw schema_error("input: \"label\" must be an integer");
    spec.label = doc["label"].get<int>();
  }
  return spec;
}

inline InputSpec load_input(const std::string& path) {
  return input_from_json(detail::parse_file(path));
}

inline void save_input(const InputSpec& spec, const std::string& path) {
  nlohmann::json doc{{"input", spec.x}};
  if (spec.label) doc["label"] = *spec.label;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write file: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace relucert
