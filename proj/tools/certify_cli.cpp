// relucert: certified lower bounds on minimum adversarial distortion for
// fully-connected ReLU classifiers.
//
// Subcommands:
//   verify   certify robustness radii for one input
//   compare  certify and measure the gap against attack/grid upper bounds
//   bench    time certification on seeded random networks
//   gen      write seeded random model/input files
//
// Exit codes: 0 success, 1 usage error, 2 input error, 3 numeric failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relucert/relucert.hpp"

namespace rc = relucert;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string model_path, input_path, p_str = "inf", method_str = "fast-lin";
  std::string target_str = "runner-up";
  bool untargeted = false;
  double eps0 = 0.05;
  int max_iter = 15;
  double tol = 1e-5;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out_path;
  double clip_lo = 0.0, clip_hi = 0.0;
  bool has_clip_lo = false, has_clip_hi = false;
};

std::vector<rc::Method> resolve_methods(const std::string& s, std::size_t depth) {
  if (s == "all") {
    std::vector<rc::Method> ms{rc::Method::fast_lin, rc::Method::fast_lip,
                               rc::Method::op_norm};
    if (depth == 2) ms.push_back(rc::Method::norm_split);
    return ms;
  }
  return {rc::method_from_string(s)};
}

std::vector<std::size_t> parse_shape(const std::string& s) {
  std::vector<std::size_t> dims;
  std::string cur;
  for (char ch : s + "x") {
    if (ch == 'x' || ch == 'X' || ch == ',') {
      if (cur.empty()) throw rc::invalid_parameter("bad shape: " + s);
      dims.push_back(static_cast<std::size_t>(std::stoull(cur)));
      cur.clear();
    } else if (ch >= '0' && ch <= '9') {
      cur += ch;
    } else {
      throw rc::invalid_parameter("bad shape character in: " + s);
    }
  }
  if (dims.size() < 2)
    throw rc::invalid_parameter("shape needs at least input and output dims: " + s);
  return dims;
}

rc::SearchConfig search_config(const CommonFlags& f) {
  rc::SearchConfig cfg;
  cfg.eps0 = f.eps0;
  cfg.max_iter = f.max_iter;
  cfg.rel_tol = f.tol;
  if (cfg.eps0 <= 0.0) throw rc::invalid_parameter("--eps0 must be positive");
  if (cfg.max_iter < 0) throw rc::invalid_parameter("--max-iter must be >= 0");
  return cfg;
}

std::optional<rc::ClipBox> clip_box(const CommonFlags& f, rc::Norm p) {
  if (!f.has_clip_lo && !f.has_clip_hi) return std::nullopt;
  if (!(f.has_clip_lo && f.has_clip_hi))
    throw rc::invalid_parameter("--clip-lo and --clip-hi must be given together");
  if (p != rc::Norm::inf)
    throw rc::invalid_parameter("ball clipping is defined for p=inf only");
  if (f.clip_lo >= f.clip_hi)
    throw rc::invalid_parameter("--clip-lo must be below --clip-hi");
  return rc::ClipBox{f.clip_lo, f.clip_hi};
}

// Targets to certify: explicit list for untargeted mode, one chosen class
// otherwise.
std::vector<std::size_t> resolve_targets(const CommonFlags& f, const rc::Vec& logits,
                                         std::size_t c) {
  if (f.untargeted) {
    std::vector<std::size_t> all;
    for (std::size_t j = 0; j < logits.size(); ++j)
      if (j != c) all.push_back(j);
    return all;
  }
  if (f.target_str == "runner-up")
    return {rc::select_target(logits, c, rc::TargetMode::runner_up)};
  if (f.target_str == "least")
    return {rc::select_target(logits, c, rc::TargetMode::least_likely)};
  if (f.target_str == "random")
    return {rc::select_target(logits, c, rc::TargetMode::random, f.seed)};
  std::size_t j = 0;
  try {
    j = static_cast<std::size_t>(std::stoull(f.target_str));
  } catch (...) {
    throw rc::invalid_parameter(
        "--target must be runner-up, random, least, or a class index; got \"" +
        f.target_str + "\"");
  }
  if (j >= logits.size()) throw rc::invalid_parameter("--target class index out of range");
  if (j == c) throw rc::invalid_parameter("--target class equals the predicted class");
  return {j};
}

void emit(const json& report, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << rc::canonical_report_text(report);
  } else {
    rc::write_report(report, out_path);
    std::cout << "report written to " << out_path << "\n";
  }
}

json run_certifications(const rc::Network& net, const rc::InputSpec& input,
                        const CommonFlags& flags, std::size_t c,
                        const std::vector<std::size_t>& targets,
                        const std::vector<rc::Method>& methods,
                        std::vector<rc::Certificate>& out_certs,
                        double& certify_ms) {
  const rc::Norm p = rc::norm_from_string(flags.p_str);
  const rc::SearchConfig cfg = search_config(flags);
  const auto clip = clip_box(flags, p);
  json certs = json::array();
  const auto t0 = std::chrono::steady_clock::now();
  for (rc::Method method : methods) {
    if (flags.untargeted) {
      rc::UntargetedResult res = rc::certify_untargeted(net, input.x, c, p, method,
                                                        cfg, clip, flags.threads);
      json per = json::array();
      for (const rc::Certificate& cert : res.per_target) {
        per.push_back(rc::certificate_to_json(cert));
        out_certs.push_back(cert);
      }
      json item = rc::certificate_to_json(res.overall);
      item["per_target"] = std::move(per);
      out_certs.push_back(res.overall);
      certs.push_back(std::move(item));
    } else {
      for (std::size_t j : targets) {
        rc::Certificate cert = rc::certify_target(net, input.x, c, j, p, method, cfg, clip);
        certs.push_back(rc::certificate_to_json(cert));
        out_certs.push_back(cert);
      }
    }
  }
  certify_ms = std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
  return certs;
}

json base_report(const char* command, const CommonFlags& flags,
                 const rc::InputSpec& input, std::size_t predicted) {
  json rep{
      {"schema_version", rc::kReportSchemaVersion},
      {"command", command},
      {"model", flags.model_path},
      {"input", flags.input_path},
      {"p", flags.p_str},
      {"mode", flags.untargeted ? "untargeted" : "targeted"},
      {"method", flags.method_str},
      {"predicted_class", predicted},
  };
  rep["label"] = input.label ? json(*input.label) : json(nullptr);
  rep["label_match"] =
      input.label ? json(*input.label == static_cast<int>(predicted)) : json(nullptr);
  return rep;
}

int cmd_verify(const CommonFlags& flags) {
  const rc::Network net = rc::load_network(flags.model_path);
  const rc::InputSpec input = rc::load_input(flags.input_path);
  const rc::Vec logits = rc::forward(net, input.x);
  const std::size_t c = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  const auto methods = resolve_methods(flags.method_str, net.depth());
  const auto targets = resolve_targets(flags, logits, c);

  std::vector<rc::Certificate> certs;
  double certify_ms = 0.0;
  json certs_json =
      run_certifications(net, input, flags, c, targets, methods, certs, certify_ms);
  json rep = base_report("verify", flags, input, c);
  rep["certificates"] = std::move(certs_json);
  rep["timing_ms"] = json{{"certify", certify_ms}};
  emit(rep, flags.out_path);
  return 0;
}

int cmd_compare(const CommonFlags& flags, std::size_t budget, std::size_t restarts,
                std::size_t resolution, double box_radius) {
  const rc::Network net = rc::load_network(flags.model_path);
  const rc::InputSpec input = rc::load_input(flags.input_path);
  const rc::Vec logits = rc::forward(net, input.x);
  const std::size_t c = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  const auto methods = resolve_methods(flags.method_str, net.depth());
  const auto targets = resolve_targets(flags, logits, c);

  std::vector<rc::Certificate> certs;
  double certify_ms = 0.0;
  json certs_json =
      run_certifications(net, input, flags, c, targets, methods, certs, certify_ms);

  // Upper-bound oracles per target class.
  json oracles = json::object();
  std::map<std::size_t, double> upper_by_target;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> oracle_targets = targets;
  for (std::size_t j : oracle_targets) {
    json entry;
    rc::OracleResult attack =
        rc::attack_upper_bound(net, input.x, c, j, rc::norm_from_string(flags.p_str),
                               budget, restarts, rc::Rng::split(flags.seed, j));
    entry["attack"] = rc::oracle_to_json(attack);
    double upper = attack.found ? attack.value
                                : std::numeric_limits<double>::infinity();
    if (net.input_dim() <= 3) {
      const double box = box_radius > 0.0
                             ? box_radius
                             : (attack.found ? 1.5 * attack.value
                                             : 4.0 * std::max(1.0, rc::vec_qnorm(
                                                                       input.x,
                                                                       rc::norm_from_string(
                                                                           flags.p_str))));
      rc::OracleResult grid = rc::grid_min_distortion(
          net, input.x, c, j, rc::norm_from_string(flags.p_str), resolution, box);
      entry["grid"] = rc::oracle_to_json(grid);
      if (grid.found) upper = std::min(upper, grid.value);
    } else {
      entry["grid"] = json{{"skipped", "grid oracle supports n0 <= 3"}};
    }
    upper_by_target[j] = upper;
    oracles[std::to_string(j)] = std::move(entry);
  }
  const double oracle_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();

  // Gap rows: certified radius vs best upper bound for the same target.
  json gaps = json::array();
  for (const rc::Certificate& cert : certs) {
    if (!cert.target_class) continue;
    const double upper = upper_by_target.count(*cert.target_class)
                             ? upper_by_target[*cert.target_class]
                             : std::numeric_limits<double>::infinity();
    json row{
        {"method", rc::to_string(cert.method)},
        {"target", *cert.target_class},
        {"certified", cert.radius},
        {"upper", std::isfinite(upper) ? json(upper) : json(nullptr)},
        {"ratio", std::isfinite(upper) && cert.radius > 0.0
                      ? json(upper / cert.radius)
                      : json(nullptr)},
    };
    gaps.push_back(std::move(row));
  }

  json rep = base_report("compare", flags, input, c);
  rep["certificates"] = std::move(certs_json);
  rep["oracles"] = std::move(oracles);
  rep["gaps"] = std::move(gaps);
  rep["timing_ms"] = json{{"certify", certify_ms}, {"oracles", oracle_ms}};
  emit(rep, flags.out_path);
  return 0;
}

int cmd_bench(const std::vector<std::string>& shapes, const CommonFlags& flags) {
  if (shapes.empty()) throw rc::invalid_parameter("bench needs at least one --shape");
  const rc::Norm p = rc::norm_from_string(flags.p_str);
  const rc::SearchConfig cfg = search_config(flags);
  json rows = json::array();
  std::printf("%-24s %-10s %-12s %-12s %-10s\n", "shape", "method", "radius",
              "time_ms", flags.threads > 1 ? "speedup" : "");
  for (std::size_t si = 0; si < shapes.size(); ++si) {
    const auto dims = parse_shape(shapes[si]);
    const rc::Network net = rc::random_network(dims, flags.seed + si);
    rc::Rng rng(rc::Rng::split(flags.seed, 1000 + si));
    rc::Vec x0(dims.front());
    for (double& v : x0) v = rng.normal();
    const rc::Vec logits = rc::forward(net, x0);
    const std::size_t c = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    for (rc::Method method : resolve_methods(flags.method_str, net.depth())) {
      double radius = 0.0, ms1 = 0.0, msN = 0.0;
      if (flags.threads > 1) {
        auto t0 = std::chrono::steady_clock::now();
        rc::UntargetedResult r1 = rc::certify_untargeted(net, x0, c, p, method, cfg,
                                                         std::nullopt, 1);
        ms1 = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
        t0 = std::chrono::steady_clock::now();
        rc::UntargetedResult rN = rc::certify_untargeted(net, x0, c, p, method, cfg,
                                                         std::nullopt, flags.threads);
        msN = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
        radius = rN.overall.radius;
      } else {
        const std::size_t j = rc::select_target(logits, c, rc::TargetMode::runner_up);
        auto t0 = std::chrono::steady_clock::now();
        rc::Certificate cert = rc::certify_target(net, x0, c, j, p, method, cfg);
        ms1 = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
        radius = cert.radius;
      }
      json row{{"shape", shapes[si]},
               {"method", rc::to_string(method)},
               {"radius", radius},
               {"time_ms", flags.threads > 1 ? msN : ms1}};
      if (flags.threads > 1) {
        row["time_ms_single"] = ms1;
        row["speedup"] = msN > 0.0 ? ms1 / msN : 0.0;
        std::printf("%-24s %-10s %-12.6g %-12.2f %-10.2f\n", shapes[si].c_str(),
                    rc::to_string(method).c_str(), radius, msN, ms1 / msN);
      } else {
        std::printf("%-24s %-10s %-12.6g %-12.2f\n", shapes[si].c_str(),
                    rc::to_string(method).c_str(), radius, ms1);
      }
      rows.push_back(std::move(row));
    }
  }
  if (!flags.out_path.empty()) {
    json rep{{"schema_version", rc::kReportSchemaVersion},
             {"command", "bench"},
             {"p", flags.p_str},
             {"method", flags.method_str},
             {"seed", flags.seed},
             {"threads", flags.threads},
             {"rows", std::move(rows)}};
    rc::write_report(rep, flags.out_path);
    std::printf("report written to %s\n", flags.out_path.c_str());
  }
  return 0;
}

int cmd_gen(const std::string& shape, std::uint64_t seed, const std::string& out,
            const std::string& input_out) {
  const auto dims = parse_shape(shape);
  const rc::Network net = rc::random_network(dims, seed);
  if (out.empty()) throw rc::invalid_parameter("gen requires --out for the model file");
  rc::save_network(net, out);
  std::printf("model written to %s\n", out.c_str());
  if (!input_out.empty()) {
    rc::Rng rng(rc::Rng::split(seed, 1));
    rc::InputSpec spec;
    spec.x.resize(dims.front());
    for (double& v : spec.x) v = rng.normal();
    const rc::Vec logits = rc::forward(net, spec.x);
    spec.label = static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    rc::save_input(spec, input_out);
    std::printf("input written to %s\n", input_out.c_str());
  }
  return 0;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_files) {
  auto* model = cmd->add_option("--model", f.model_path, "model file (JSON)");
  auto* input = cmd->add_option("--input", f.input_path, "input vector file (JSON)");
  if (needs_files) {
    model->required();
    input->required();
  }
  cmd->add_option("--p", f.p_str, "perturbation norm {1,2,inf}")
      ->default_val("inf");
  cmd->add_option("--method", f.method_str,
                  "bound method {fast-lin,fast-lip,op-norm,norm-split,all}")
      ->default_val("fast-lin");
  cmd->add_option("--target", f.target_str,
                  "target class {runner-up,random,least,<index>}")
      ->default_val("runner-up");
  cmd->add_flag("--untargeted", f.untargeted, "certify against every other class");
  cmd->add_option("--eps0", f.eps0, "initial search radius")->default_val(0.05);
  cmd->add_option("--max-iter", f.max_iter, "bisection iterations")->default_val(15);
  cmd->add_option("--tol", f.tol, "relative bracket-width stop tolerance")
      ->default_val(1e-5);
  cmd->add_option("--seed", f.seed, "seed for random target selection / oracles")
      ->default_val(0);
  cmd->add_option("--threads", f.threads, "parallelism over targets")->default_val(1);
  cmd->add_option("--out", f.out_path, "write the report to this path");
  cmd->add_option("--clip-lo", f.clip_lo, "clamp the ball to [lo,hi] (p=inf only)")
      ->each([&f](const std::string&) { f.has_clip_lo = true; });
  cmd->add_option("--clip-hi", f.clip_hi, "clamp the ball to [lo,hi] (p=inf only)")
      ->each([&f](const std::string&) { f.has_clip_hi = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "certified lower bounds on minimum adversarial distortion for ReLU "
      "networks"};
  app.require_subcommand(1);

  CommonFlags vf, cf, bf;
  auto* verify = app.add_subcommand("verify", "certify robustness radii for one input");
  add_common(verify, vf, true);

  auto* compare = app.add_subcommand(
      "compare", "certify and compare against attack/grid upper bounds");
  add_common(compare, cf, true);
  std::size_t budget = 20000, restarts = 10, resolution = 801;
  double box_radius = 0.0;
  compare->add_option("--budget", budget, "attack evaluation budget")->default_val(20000);
  compare->add_option("--restarts", restarts, "attack restarts")->default_val(10);
  compare->add_option("--resolution", resolution, "grid points per axis")
      ->default_val(801);
  compare->add_option("--box-radius", box_radius,
                      "grid box half-width (0 = derive from the attack)")
      ->default_val(0.0);

  auto* bench = app.add_subcommand("bench", "time certification on seeded random nets");
  add_common(bench, bf, false);
  std::vector<std::string> shapes;
  bench->add_option("--shape", shapes, "network shape, e.g. 784x1024x10 (repeatable)");

  auto* gen = app.add_subcommand("gen", "write a seeded random model file");
  std::string gshape = "2x20x20x2", gout, ginput;
  std::uint64_t gseed = 0;
  gen->add_option("--shape", gshape, "network shape, e.g. 2x20x20x2");
  gen->add_option("--seed", gseed, "generator seed")->default_val(0);
  gen->add_option("--out", gout, "model output path")->required();
  gen->add_option("--input-out", ginput, "also write a random input file here");

  try {
    app.parse(argc, argv);
    if (verify->parsed()) return cmd_verify(vf);
    if (compare->parsed())
      return cmd_compare(cf, budget, restarts, resolution, box_radius);
    if (bench->parsed()) return cmd_bench(shapes, bf);
    if (gen->parsed()) return cmd_gen(gshape, gseed, gout, ginput);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const rc::invalid_parameter& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const rc::io_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const rc::parse_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const rc::schema_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const rc::dimension_mismatch& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const rc::shape_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
}
