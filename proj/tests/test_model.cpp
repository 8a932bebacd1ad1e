#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "relucert/model.hpp"

using namespace relucert;
using Catch::Approx;

namespace {

std::string write_temp(const std::string& text) {
  static int counter = 0;
  std::string path = "model_test_" + std::to_string(counter++) + ".json";
  std::ofstream out(path);
  out << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("single-layer model file loads", "[model]") {
  const std::string path =
      write_temp(R"({"layers":[{"weights":[[1,-1]],"bias":[0]}]})");
  const Network net = load_network(path);
  CHECK(net.depth() == 1);
  CHECK(net.input_dim() == 2);
  CHECK(net.output_dim() == 1);
  std::remove(path.c_str());
}

TEST_CASE("chained shapes load and validate", "[model]") {
  const Network gen = random_network({784, 20, 20, 10}, 5);
  save_network(gen, "chain_test.json");
  const Network net = load_network("chain_test.json");
  CHECK(net.depth() == 3);
  CHECK(net.input_dim() == 784);
  CHECK(net.output_dim() == 10);
  std::remove("chain_test.json");
}

TEST_CASE("dimension mismatch between layers is rejected", "[model]") {
  const std::string path = write_temp(
      R"({"layers":[{"weights":[[1,0],[0,1]],"bias":[0,0]},
                    {"weights":[[1,2,3]],"bias":[0]}]})");
  CHECK_THROWS_AS(load_network(path), dimension_mismatch);
  std::remove(path.c_str());
}

TEST_CASE("bias length must match weight rows", "[model]") {
  const std::string path =
      write_temp(R"({"layers":[{"weights":[[1,0]],"bias":[0,0]}]})");
  CHECK_THROWS_AS(load_network(path), dimension_mismatch);
  std::remove(path.c_str());
}

TEST_CASE("non-finite and non-numeric entries are rejected", "[model]") {
  const std::string bad_token =
      write_temp(R"({"layers":[{"weights":[["x"]],"bias":[0]}]})");
  CHECK_THROWS_AS(load_network(bad_token), schema_error);
  std::remove(bad_token.c_str());

  // JSON has no Inf literal; a parse error is the expected failure mode.
  const std::string inf_token =
      write_temp(R"({"layers":[{"weights":[[Infinity]],"bias":[0]}]})");
  CHECK_THROWS_AS(load_network(inf_token), parse_error);
  std::remove(inf_token.c_str());

  // An overflowing literal parses to an infinite double and must be caught.
  const std::string overflow =
      write_temp(R"({"layers":[{"weights":[[1e999]],"bias":[0]}]})");
  CHECK_THROWS_AS(load_network(overflow), schema_error);
  std::remove(overflow.c_str());
}

TEST_CASE("unknown keys are rejected at both levels", "[model]") {
  const std::string top =
      write_temp(R"({"layers":[{"weights":[[1]],"bias":[0]}],"extra":1})");
  CHECK_THROWS_AS(load_network(top), schema_error);
  std::remove(top.c_str());

  const std::string inner = write_temp(
      R"({"layers":[{"weights":[[1]],"bias":[0],"activation":"relu"}]})");
  CHECK_THROWS_AS(load_network(inner), schema_error);
  std::remove(inner.c_str());
}

TEST_CASE("ragged weight rows are rejected", "[model]") {
  const std::string path =
      write_temp(R"({"layers":[{"weights":[[1,2],[3]],"bias":[0,0]}]})");
  CHECK_THROWS_AS(load_network(path), schema_error);
  std::remove(path.c_str());
}

TEST_CASE("malformed JSON is a parse error with the path named", "[model]") {
  const std::string path = write_temp("{\"layers\": [");
  try {
    load_network(path);
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("missing file is an io error", "[model]") {
  CHECK_THROWS_AS(load_network("does_not_exist_9951.json"), io_error);
}

TEST_CASE("forward pass applies ReLU everywhere but the last layer", "[model]") {
  Network single;
  single.layers.push_back(
      {testutil::make_matrix(1, 2, {1, -1}), Vec{0.0}});
  CHECK(forward(single, {3.0, 1.0})[0] == Approx(2.0));

  Network two = testutil::identity_net();
  Layer sum{testutil::make_matrix(1, 2, {1, 1}), Vec{0.0}};
  two.layers.push_back(sum);
  CHECK(forward(two, {-1.0, 2.0})[0] == Approx(2.0));  // ReLU kills the -1

  const Network rand = random_network({4, 6, 3}, 9);
  const Vec zero(4, 0.0);
  for (double v : forward(rand, zero)) CHECK(v == 0.0);

  CHECK_THROWS_AS(forward(rand, Vec{1.0}), shape_error);
}

TEST_CASE("margin merge computes f_c - f_j", "[model]") {
  Network net = testutil::identity_net();
  net.layers.back().b = Vec{0.5, -0.5};
  const MarginNetwork m = merge_last_layer(net, 0, 1);
  CHECK(m.wbar()[0] == Approx(1.0));
  CHECK(m.wbar()[1] == Approx(-1.0));
  CHECK(m.bbar() == Approx(1.0));

  const Network rand = random_network({3, 8, 5}, 21);
  const MarginNetwork rm = merge_last_layer(rand, 2, 4);
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    Vec x(3);
    for (double& v : x) v = rng.normal();
    const Vec out = forward(rand, x);
    CHECK(forward_margin(rm, x) == Approx(out[2] - out[4]).margin(1e-12));
  }

  CHECK_THROWS_AS(merge_last_layer(rand, 1, 1), invalid_parameter);
  CHECK_THROWS_AS(merge_last_layer(rand, 0, 9), invalid_parameter);
}

TEST_CASE("random networks are seed-deterministic with the right shape", "[model]") {
  const Network a = random_network({784, 1024, 1024, 10}, 7);
  CHECK(a.depth() == 3);
  const Network b = random_network({784, 1024, 1024, 10}, 7);
  for (std::size_t k = 0; k < a.depth(); ++k) {
    CHECK(a.layers[k].W.a == b.layers[k].W.a);  // bit-identical
    CHECK(a.layers[k].b == b.layers[k].b);
  }
  const Network c = random_network({2, 20, 20, 2}, 1);
  CHECK(c.depth() == 3);
  CHECK(c.input_dim() == 2);

  CHECK_THROWS_AS(random_network({5}, 1), invalid_parameter);
  CHECK_THROWS_AS(random_network({5, 0, 2}, 1), invalid_parameter);
}

TEST_CASE("random weights match the 1/sqrt(fan-in) scale", "[model]") {
  const Network net = random_network({100, 400, 10}, 33);
  double ss = 0.0;
  for (double v : net.layers[0].W.a) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(net.layers[0].W.a.size()));
  CHECK(sd == Approx(0.1).epsilon(0.05));
  for (double v : net.layers[0].b) CHECK(v == 0.0);
}

TEST_CASE("save/load round-trip reproduces numeric content bit-exactly", "[model]") {
  const Network net = random_network({5, 9, 4}, 1234);
  save_network(net, "roundtrip_a.json");
  const Network back = load_network("roundtrip_a.json");
  for (std::size_t k = 0; k < net.depth(); ++k) {
    CHECK(net.layers[k].W.a == back.layers[k].W.a);
    CHECK(net.layers[k].b == back.layers[k].b);
  }
  save_network(back, "roundtrip_b.json");
  CHECK(slurp("roundtrip_a.json") == slurp("roundtrip_b.json"));
  std::remove("roundtrip_a.json");
  std::remove("roundtrip_b.json");
}

TEST_CASE("input files parse with optional label and strict keys", "[model]") {
  const std::string ok = write_temp(R"({"input":[1.5,-2.0],"label":3})");
  const InputSpec spec = load_input(ok);
  CHECK(spec.x == Vec{1.5, -2.0});
  REQUIRE(spec.label.has_value());
  CHECK(*spec.label == 3);
  std::remove(ok.c_str());

  const std::string nolabel = write_temp(R"({"input":[0.25]})");
  CHECK_FALSE(load_input(nolabel).label.has_value());
  std::remove(nolabel.c_str());

  const std::string unknown = write_temp(R"({"input":[1],"labels":2})");
  CHECK_THROWS_AS(load_input(unknown), schema_error);
  std::remove(unknown.c_str());
}

TEST_CASE("margin differences respect the operator-norm product", "[model]") {
  Rng rng(55);
  for (int t = 0; t < 10; ++t) {
    const auto inst = testutil::random_instance({4, 10, 8, 3}, 600 + t);
    for (Norm p : {Norm::one, Norm::two, Norm::inf}) {
      double lip = vec_qnorm(inst.margin.wbar(), dual_order(p));
      for (std::size_t k = 0; k + 1 < inst.margin.net.layers.size(); ++k)
        lip *= induced_norm(inst.margin.net.layers[k].W, p);
      for (int s = 0; s < 30; ++s) {
        Vec x = inst.x0, y = inst.x0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          x[i] += 0.5 * rng.normal();
          y[i] += 0.5 * rng.normal();
        }
        Vec diff(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
        const double lhs =
            std::fabs(forward_margin(inst.margin, x) - forward_margin(inst.margin, y));
        CHECK(lhs <= lip * vec_qnorm(diff, p) + 1e-9);
      }
    }
  }
}
