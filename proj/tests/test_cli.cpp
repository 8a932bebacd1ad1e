#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "relucert/model.hpp"
#include "relucert/report.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

#ifndef RELUCERT_CLI_PATH
#error "RELUCERT_CLI_PATH must point at the command line binary"
#endif

namespace {

const std::string& scratch_dir() {
  static const std::string dir = [] {
    std::string tmpl =
        (fs::temp_directory_path() / "relucert_cli_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    return tmpl;
  }();
  return dir;
}

std::string path_in_scratch(const std::string& name) {
  return scratch_dir() + "/" + name;
}

// Exit code of the binary; stdout/stderr land in the given file or /dev/null.
int run_cli(const std::string& args, const std::string& capture = "") {
  const std::string sink = capture.empty() ? "/dev/null" : capture;
  const std::string cmd =
      std::string(RELUCERT_CLI_PATH) + " " + args + " > " + sink + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const std::string& path) { return json::parse(read_file(path)); }

// Seeded model + input fixture on disk, generated once per shape/seed pair.
struct Generated {
  std::string model, input;
};

Generated gen_fixture(const std::string& shape, unsigned seed) {
  Generated g;
  const std::string tag = shape + "_" + std::to_string(seed);
  g.model = path_in_scratch("model_" + tag + ".json");
  g.input = path_in_scratch("input_" + tag + ".json");
  if (!fs::exists(g.model)) {
    REQUIRE(run_cli("gen --shape " + shape + " --seed " + std::to_string(seed) +
                    " --out " + g.model + " --input-out " + g.input) == 0);
  }
  return g;
}

}  // namespace

TEST_CASE("gen writes a loadable seeded model and input", "[cli]") {
  const auto g = gen_fixture("3x8x4", 5);
  const relucert::Network net = relucert::load_network(g.model);
  REQUIRE(net.depth() == 2);
  CHECK(net.input_dim() == 3);
  CHECK(net.output_dim() == 4);

  // The file content is exactly the seeded generator output.
  const relucert::Network ref = relucert::random_network({3, 8, 4}, 5);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    CHECK(net.layers[k].W.a == ref.layers[k].W.a);
    CHECK(net.layers[k].b == ref.layers[k].b);
  }

  const relucert::InputSpec spec = relucert::load_input(g.input);
  REQUIRE(spec.x.size() == 3);
  REQUIRE(spec.label.has_value());
  const relucert::Vec logits = relucert::forward(net, spec.x);
  const auto argmax = static_cast<int>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  CHECK(*spec.label == argmax);
}

TEST_CASE("verify writes a canonical report with one certificate", "[cli]") {
  const auto g = gen_fixture("2x6x2", 3);
  const std::string rep_path = path_in_scratch("verify_single.json");
  REQUIRE(run_cli("verify --model " + g.model + " --input " + g.input +
                  " --p inf --method fast-lin --out " + rep_path) == 0);

  const std::string raw = read_file(rep_path);
  const json rep = json::parse(raw);
  CHECK(rep.at("schema_version") == 1);
  CHECK(rep.at("command") == "verify");
  CHECK(rep.at("p") == "inf");
  CHECK(rep.at("mode") == "targeted");
  CHECK(rep.at("method") == "fast-lin");
  CHECK(rep.at("label_match") == true);
  REQUIRE(rep.at("certificates").is_array());
  REQUIRE(rep.at("certificates").size() == 1);
  const json& cert = rep.at("certificates")[0];
  CHECK(cert.at("method") == "fast-lin");
  CHECK(cert.at("true_class") == rep.at("predicted_class"));
  CHECK(cert.at("target_class").is_number());
  REQUIRE(cert.at("radius").is_number());
  CHECK(cert.at("radius").get<double>() >= 0.0);
  CHECK(cert.at("bracket").at("safe") == cert.at("radius"));

  // Canonical form round-trips byte for byte.
  CHECK(relucert::canonical_report_text(rep) == raw);
}

TEST_CASE("verify with every method and untargeted mode", "[cli]") {
  const auto g = gen_fixture("3x10x4", 8);
  const std::string rep_path = path_in_scratch("verify_all.json");
  REQUIRE(run_cli("verify --model " + g.model + " --input " + g.input +
                  " --p 2 --method all --untargeted --threads 2 --out " +
                  rep_path) == 0);
  const json rep = load_json(rep_path);
  CHECK(rep.at("mode") == "untargeted");
  // Depth-2 model: fast-lin, fast-lip, op-norm, norm-split.
  REQUIRE(rep.at("certificates").size() == 4);
  for (const json& cert : rep.at("certificates")) {
    CHECK(cert.at("target_class").is_null());
    REQUIRE(cert.at("per_target").is_array());
    REQUIRE(cert.at("per_target").size() == 3);
    if (!cert.at("radius").is_number()) continue;  // unbounded methods
    const double overall = cert.at("radius").get<double>();
    for (const json& per : cert.at("per_target")) {
      REQUIRE(per.at("target_class").is_number());
      if (per.at("radius").is_number())
        CHECK(per.at("radius").get<double>() >= overall - 1e-15);
    }
  }
}

TEST_CASE("verify accepts an explicit target index", "[cli]") {
  const auto g = gen_fixture("3x10x4", 8);
  const json rep_input = load_json(g.input);
  const int label = rep_input.at("label").get<int>();
  const int target = label == 0 ? 1 : 0;
  const std::string rep_path = path_in_scratch("verify_target_idx.json");
  REQUIRE(run_cli("verify --model " + g.model + " --input " + g.input +
                  " --target " + std::to_string(target) + " --out " +
                  rep_path) == 0);
  const json rep = load_json(rep_path);
  CHECK(rep.at("certificates")[0].at("target_class") == target);
}

TEST_CASE("command line rejects bad usage with exit code one", "[cli]") {
  const auto g = gen_fixture("2x6x2", 3);
  const std::string base = "verify --model " + g.model + " --input " + g.input;
  CHECK(run_cli(base + " --p 3") == 1);
  CHECK(run_cli(base + " --method bogus") == 1);
  CHECK(run_cli(base + " --target notaclass") == 1);
  CHECK(run_cli(base + " --target 99") == 1);
  CHECK(run_cli(base + " --clip-lo 0") == 1);
  CHECK(run_cli(base + " --p 2 --clip-lo 0 --clip-hi 1") == 1);
  CHECK(run_cli(base + " --clip-lo 1 --clip-hi 0") == 1);
  CHECK(run_cli(base + " --eps0 0") == 1);
  CHECK(run_cli(base + " --no-such-flag") == 1);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("bench") == 1);
  CHECK(run_cli("gen --shape 2x4x2") == 1);
  CHECK(run_cli("gen --shape 7 --seed 1 --out " + path_in_scratch("g7.json")) == 1);
}

TEST_CASE("unreadable or malformed inputs exit with code two", "[cli]") {
  const auto g = gen_fixture("2x6x2", 3);
  CHECK(run_cli("verify --model " + path_in_scratch("missing.json") +
                " --input " + g.input) == 2);
  const std::string bad = path_in_scratch("corrupt.json");
  std::ofstream(bad) << "{ not json";
  CHECK(run_cli("verify --model " + bad + " --input " + g.input) == 2);
  const std::string wrong = path_in_scratch("wrongdim.json");
  std::ofstream(wrong) << R"({"input":[1,2,3,4,5]})";
  CHECK(run_cli("verify --model " + g.model + " --input " + wrong) == 2);
}

TEST_CASE("verify prints the report to stdout when no output path is given",
          "[cli]") {
  const auto g = gen_fixture("2x6x2", 3);
  const std::string captured = path_in_scratch("stdout_capture.json");
  REQUIRE(run_cli("verify --model " + g.model + " --input " + g.input, captured) == 0);
  const json rep = json::parse(read_file(captured));
  CHECK(rep.at("command") == "verify");
  CHECK(relucert::canonical_report_text(rep) == read_file(captured));
}

TEST_CASE("compare reports upper bounds and certified-to-upper gaps", "[cli]") {
  const auto g = gen_fixture("2x20x20x2", 11);
  const std::string rep_path = path_in_scratch("compare.json");
  REQUIRE(run_cli("compare --model " + g.model + " --input " + g.input +
                  " --p inf --method fast-lin --budget 4000 --restarts 4"
                  " --resolution 201 --out " + rep_path) == 0);
  const json rep = load_json(rep_path);
  CHECK(rep.at("command") == "compare");
  REQUIRE(rep.at("oracles").is_object());
  REQUIRE(rep.at("oracles").size() == 1);
  const json& entry = rep.at("oracles").begin().value();
  CHECK(entry.at("attack").at("kind") == "attack-upper");
  CHECK(entry.at("grid").at("kind") == "grid-min");  // n0 = 2 keeps the grid on

  REQUIRE(rep.at("gaps").is_array());
  REQUIRE(rep.at("gaps").size() == 1);
  const json& gap = rep.at("gaps")[0];
  CHECK(gap.at("method") == "fast-lin");
  REQUIRE(gap.at("certified").is_number());
  if (gap.at("upper").is_number()) {
    CHECK(gap.at("certified").get<double>() <= gap.at("upper").get<double>());
    REQUIRE(gap.at("ratio").is_number());
    CHECK(gap.at("ratio").get<double>() >= 1.0);
  }
  CHECK(relucert::canonical_report_text(rep) == read_file(rep_path));
}

TEST_CASE("compare skips the grid oracle on wide inputs", "[cli]") {
  const auto g = gen_fixture("5x8x3", 21);
  const std::string rep_path = path_in_scratch("compare_wide.json");
  REQUIRE(run_cli("compare --model " + g.model + " --input " + g.input +
                  " --budget 2000 --restarts 3 --out " + rep_path) == 0);
  const json rep = load_json(rep_path);
  const json& entry = rep.at("oracles").begin().value();
  CHECK(entry.at("grid").contains("skipped"));
}

TEST_CASE("bench emits one row per shape and is seed deterministic", "[cli]") {
  const std::string rep1 = path_in_scratch("bench1.json");
  const std::string rep2 = path_in_scratch("bench2.json");
  const std::string args = "bench --shape 4x12x3 --shape 3x9x3 --seed 9"
                           " --method fast-lin --out ";
  REQUIRE(run_cli(args + rep1) == 0);
  REQUIRE(run_cli(args + rep2) == 0);
  const json a = load_json(rep1);
  const json b = load_json(rep2);
  REQUIRE(a.at("rows").size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.at("rows")[i].at("shape") == b.at("rows")[i].at("shape"));
    CHECK(a.at("rows")[i].at("radius") == b.at("rows")[i].at("radius"));
    CHECK(a.at("rows")[i].at("radius").is_number());
  }
}

TEST_CASE("reports parse and re-emit byte-identically", "[cli]") {
  const auto g = gen_fixture("3x10x4", 8);
  const std::string rep_path = path_in_scratch("roundtrip.json");
  REQUIRE(run_cli("verify --model " + g.model + " --input " + g.input +
                  " --method all --out " + rep_path) == 0);
  const std::string raw = read_file(rep_path);
  const json rep = json::parse(raw);
  const std::string emitted = relucert::canonical_report_text(rep);
  CHECK(emitted == raw);
  CHECK(relucert::canonical_report_text(json::parse(emitted)) == emitted);
}
