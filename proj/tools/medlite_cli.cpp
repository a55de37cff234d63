// SPDX-License-Identifier: Apache-2.0
// medlite: command-line front end for the service and offline tools.
//
// Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime failure.

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"
#include "medlite/distill/toy_trainer.hpp"
#include "medlite/placement/solver.hpp"
#include "medlite/quant/checkpoint.hpp"
#include "medlite/service/bench.hpp"
#include "medlite/service/http_server.hpp"

namespace {

using namespace medlite;

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

PrecisionPolicy policy_arg(const std::string& policy_path, const std::string& config_path) {
  if (!policy_path.empty()) return policy_from_json(detail::read_json_file(policy_path, "policy"));
  if (!config_path.empty()) return load_config(config_path).quantization;
  return PrecisionPolicy{};
}

ModelManifest manifest_arg(const std::string& path) {
  if (path.empty() || path == "synthetic-7b") return synthetic_7b_manifest();
  return manifest_from_json(detail::read_json_file(path, "manifest"));
}

// ---- serve ----

struct ServeArgs {
  std::string config;
  std::string host;
  int port = -1;
  std::size_t threads = 0;
  std::string cache_dir;
};

int run_serve(const ServeArgs& a) {
  auto cfg = load_config(a.config);
  if (!a.host.empty()) cfg.server.host = a.host;
  if (a.port >= 0) cfg.server.port = a.port;
  if (a.threads > 0) cfg.server.threads = a.threads;
  if (!a.cache_dir.empty()) cfg.cache.directory = a.cache_dir;

  // Block the control signals before any thread starts so only the waiter sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGHUP);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  MedService service(cfg, std::make_shared<SteadyClock>());
  auto server = make_http_server(service, cfg.server.threads);
  if (!server->bind_to_port(cfg.server.host, cfg.server.port)) {
    throw Error("cannot listen on " + cfg.server.host + ":" + std::to_string(cfg.server.port));
  }
  const auto d = service.deployment();
  std::cerr << "medlite: serving on " << cfg.server.host << ":" << cfg.server.port << " engine=" << d.engine_id
            << " mode=" << to_string(d.mode) << std::endl;

  std::thread waiter([&] {
    for (;;) {
      int sig = 0;
      if (sigwait(&signals, &sig) != 0) continue;
      if (sig == SIGHUP) {
        try {
          service.reload_decision(load_config(a.config));
          const auto now = service.deployment();
          std::cerr << "medlite: reloaded decision engine=" << now.engine_id << " mode=" << to_string(now.mode)
                    << std::endl;
        } catch (const std::exception& e) {
          std::cerr << "medlite: reload failed, keeping previous decision: " << e.what() << std::endl;
        }
        continue;
      }
      server->stop();
      return;
    }
  });
  const bool ok = server->listen_after_bind();
  if (!ok) {
    // The listener failed on its own; wake the waiter so it can exit.
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  service.cache().flush();
  std::cerr << "medlite: stopped" << std::endl;
  return ok ? 0 : kExitRuntime;
}

// ---- classify ----

int run_classify(const std::string& config, const std::string& lexicon_path, const std::string& templates_path,
                 const std::vector<std::string>& words, bool show_prompt) {
  std::string lex = lexicon_path, tpl = templates_path;
  if (!config.empty()) {
    const auto cfg = load_config(config);
    if (lex.empty()) lex = cfg.lexicon_path;
    if (tpl.empty()) tpl = cfg.templates_path;
  }
  if (lex.empty()) throw ConfigError("classify needs --lexicon or --config");
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  const auto result = classify(text, load_lexicon(lex));
  nlohmann::json scores = nlohmann::json::object();
  for (MedicalCategory c : kAllCategories) scores[std::string(to_string(c))] = result.scores[index_of(c)];
  nlohmann::json out = {{"category", to_string(result.category)}, {"scores", scores}, {"tokens", result.tokens}};
  if (show_prompt) {
    if (tpl.empty()) throw ConfigError("--prompt needs --templates or --config");
    out["prompt"] = build_prompt(result, load_templates(tpl));
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---- quantize ----

int run_quantize(const std::string& manifest_path, const std::string& policy_path, const std::string& config,
                 const std::string& weights, const std::string& out_path, const std::string& report_path) {
  const auto manifest = manifest_arg(manifest_path);
  const auto policy = policy_arg(policy_path, config);
  QuantizationPlan plan;
  if (!weights.empty()) {
    if (out_path.empty()) throw ConfigError("--weights requires --out for the checkpoint");
    plan = quantize_weight_file(weights, manifest, policy, out_path);
    std::cerr << "medlite: wrote checkpoint " << out_path << std::endl;
  } else {
    plan = apply_policy(manifest, policy);
  }
  write_output(footprint_report(plan), report_path);
  return 0;
}

// ---- place ----

int run_place(const std::string& devices_path, const std::string& manifest_path, const std::string& policy_path,
              const std::string& config, const std::string& mode, std::uint64_t budget, const std::string& out_path) {
  const auto devices = devices_from_json(detail::read_json_file(devices_path, "devices"));
  const auto layers = profiles_from_manifest(manifest_arg(manifest_path), policy_arg(policy_path, config));
  SolverOptions opt;
  opt.node_budget = budget;
  if (mode == "exact") {
    opt.exact_max_layers = std::numeric_limits<std::size_t>::max();
  } else if (mode == "greedy") {
    opt.exact_max_layers = 0;
    opt.exact_max_devices = 0;
  }
  const auto plan = solve_placement(layers, devices, opt);
  write_output(plan_to_json(plan, layers, devices).dump(2) + "\n", out_path);
  return 0;
}

// ---- bench ----

int run_bench_cmd(const std::string& config, const BenchSpec& spec, const std::string& out_path) {
  write_output(format_bench_report(run_bench(load_config(config), spec)), out_path);
  return 0;
}

// ---- distill-demo ----

int run_distill_demo(std::uint64_t seed, std::int64_t steps, double temperature, const std::string& metrics_path) {
  ToyDistillConfig cfg;
  cfg.seed = seed;
  cfg.steps = steps;
  cfg.temperature = temperature;
  const auto report = train_toy_distill(cfg);
  if (!metrics_path.empty()) {
    std::ofstream out(metrics_path);
    if (!out) throw Error("cannot open '" + metrics_path + "' for writing");
    write_metrics(out, report);
  }
  if (!report.ok()) {
    std::cerr << "medlite: training diverged at step " << *report.diverged_at << std::endl;
    return kExitRuntime;
  }
  const double reduction = report.initial_kl > 0 ? 1.0 - report.final_kl / report.initial_kl : 0.0;
  std::printf("seed: %llu\nsteps: %lld\nsamples: %zu\ninitial_kl: %.6f\nfinal_kl: %.6f\nkl_reduction: %.4f\n",
              static_cast<unsigned long long>(seed), static_cast<long long>(steps), report.samples, report.initial_kl,
              report.final_kl, reduction);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medlite: lightweight medical LLM serving toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "medlite 1.0.0");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP query service (SIGHUP re-evaluates the deployment decision)");
  serve_cmd->add_option("-c,--config", serve.config, "Service config (medlite.config/1)")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", serve.host, "Listen address (overrides config)");
  serve_cmd->add_option("-p,--port", serve.port, "Listen port (overrides config)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--threads", serve.threads, "Worker threads (overrides config)");
  serve_cmd->add_option("--cache-dir", serve.cache_dir, "Disk cache directory (overrides config)");

  std::string cls_config, cls_lexicon, cls_templates;
  std::vector<std::string> cls_text;
  bool cls_prompt = false;
  auto* cls_cmd = app.add_subcommand("classify", "Classify a query and optionally show the built prompt");
  cls_cmd->add_option("-c,--config", cls_config, "Service config supplying lexicon and templates");
  cls_cmd->add_option("--lexicon", cls_lexicon, "Lexicon file (medlite.lexicon/1)");
  cls_cmd->add_option("--templates", cls_templates, "Template file (medlite.templates/1)");
  cls_cmd->add_flag("--prompt", cls_prompt, "Include the category prompt in the output");
  cls_cmd->add_option("text", cls_text, "Query text")->required();

  std::string q_manifest, q_policy, q_config, q_weights, q_out, q_report;
  auto* q_cmd = app.add_subcommand("quantize", "Report the mixed-precision footprint and optionally write a checkpoint");
  q_cmd->add_option("-m,--manifest", q_manifest, "Model manifest (medlite.manifest/1) or 'synthetic-7b'")
      ->default_str("synthetic-7b");
  q_cmd->add_option("--policy", q_policy, "Precision policy JSON");
  q_cmd->add_option("-c,--config", q_config, "Take the policy from a service config");
  q_cmd->add_option("--weights", q_weights, "Raw little-endian f32 weights, layers in manifest order");
  q_cmd->add_option("-o,--out", q_out, "Checkpoint output path (with --weights)");
  q_cmd->add_option("--report", q_report, "Write the footprint report here instead of stdout");

  std::string p_devices, p_manifest, p_policy, p_config, p_mode = "auto", p_out;
  std::uint64_t p_budget = SolverOptions{}.node_budget;
  auto* p_cmd = app.add_subcommand("place", "Assign layers to devices under memory limits");
  p_cmd->add_option("-d,--devices", p_devices, "Device inventory (medlite.devices/1)")->required()->check(CLI::ExistingFile);
  p_cmd->add_option("-m,--manifest", p_manifest, "Model manifest or 'synthetic-7b'")->default_str("synthetic-7b");
  p_cmd->add_option("--policy", p_policy, "Precision policy JSON");
  p_cmd->add_option("-c,--config", p_config, "Take the policy from a service config");
  p_cmd->add_option("--mode", p_mode, "auto, exact or greedy")->check(CLI::IsMember({"auto", "exact", "greedy"}));
  p_cmd->add_option("--node-budget", p_budget, "Exact-search node budget");
  p_cmd->add_option("-o,--out", p_out, "Write the plan JSON here instead of stdout");

  std::string b_config, b_out;
  BenchSpec b_spec;
  auto* b_cmd = app.add_subcommand("bench", "Replay a seeded workload with the mock engine and print a report");
  b_cmd->add_option("-c,--config", b_config, "Service config")->required()->check(CLI::ExistingFile);
  b_cmd->add_option("-n,--requests", b_spec.requests, "Number of requests")->capture_default_str();
  b_cmd->add_option("--seed", b_spec.seed, "Workload and mock engine seed")->capture_default_str();
  b_cmd->add_option("--duplicates", b_spec.duplicate_fraction, "Share of repeated queries")->capture_default_str();
  b_cmd->add_option("--delay-ms", b_spec.mock_delay_ms, "Mean mock engine delay")->capture_default_str();
  b_cmd->add_option("--batch", b_spec.batch_capacity, "Batch capacity for the policy comparison")->capture_default_str();
  b_cmd->add_option("--tile", b_spec.attention_tile, "Attention tile size")->capture_default_str();
  b_cmd->add_option("-o,--out", b_out, "Write the report here instead of stdout");

  std::uint64_t d_seed = 7;
  std::int64_t d_steps = 500;
  double d_temperature = 2.0;
  std::string d_metrics;
  auto* d_cmd = app.add_subcommand("distill-demo", "Train the toy student against the toy teacher");
  d_cmd->add_option("--seed", d_seed, "Seed")->capture_default_str();
  d_cmd->add_option("--steps", d_steps, "Optimizer steps")->capture_default_str();
  d_cmd->add_option("--temperature", d_temperature, "Distillation temperature")->capture_default_str();
  d_cmd->add_option("--metrics", d_metrics, "Write per-step CSV metrics here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*serve_cmd) return run_serve(serve);
    if (*cls_cmd) return run_classify(cls_config, cls_lexicon, cls_templates, cls_text, cls_prompt);
    if (*q_cmd) return run_quantize(q_manifest, q_policy, q_config, q_weights, q_out, q_report);
    if (*p_cmd) return run_place(p_devices, p_manifest, p_policy, p_config, p_mode, p_budget, p_out);
    if (*b_cmd) return run_bench_cmd(b_config, b_spec, b_out);
    if (*d_cmd) return run_distill_demo(d_seed, d_steps, d_temperature, d_metrics);
  } catch (const ConfigError& e) {
    std::cerr << "medlite: configuration error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "medlite: error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
