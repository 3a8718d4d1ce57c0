#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rvp/config.hpp"
#include "rvp/report.hpp"
#include "rvp/service.hpp"
#include "rvp/synth.hpp"

namespace rvp {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitData = 3, kExitAnalysis = 4 };

inline int exit_code_for(const Error& e) {
  switch (category(e.kind())) {
    case ErrorCategory::Config: return kExitConfig;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Analysis: return kExitAnalysis;
  }
  return kExitAnalysis;
}

namespace detail {

struct RunFlags {
  std::string config;
  std::string out = "rvp-out";
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed_override;
  std::string format = "csv";
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

inline Json read_document(const std::string& path) {
  return parse_config_text(read_text_file(path, ErrorKind::ConfigError));
}

inline ScenarioConfig config_for(const RunFlags& flags, std::optional<AnalysisSpec::Kind> kind) {
  Json doc = read_document(flags.config);
  if (!doc.is_object()) throw ConfigError("", "config must be an object");
  if (kind) {
    const std::string want = to_string(*kind);
    if (*kind == AnalysisSpec::Kind::Evaluate) {
      doc["analysis"] = {{"kind", want}};
    } else {
      if (!doc.contains("analysis")) throw ConfigError("analysis", "required field is missing");
      auto& a = doc["analysis"];
      if (!a.is_object()) throw ConfigError("analysis", "expected an object");
      if (!a.contains("kind")) a["kind"] = want;
      if (a["kind"] != want) throw ConfigError("analysis.kind", "this subcommand runs " + want + " analyses");
    }
  }
  ConfigContext ctx;
  const std::filesystem::path p(flags.config);
  ctx.base_dir = p.parent_path().empty() ? std::filesystem::path(".") : p.parent_path();
  ctx.seed_override = flags.seed_override;
  return build_config(std::move(doc), ctx);
}

inline void print_summary(std::ostream& out, const ScenarioConfig& cfg) {
  const auto& s = cfg.scenario;
  out << "config_hash " << cfg.hash << "\n";
  out << "records " << s.pop().size() << " labeled " << s.pop().labeled_count() << " (share "
      << format_double(s.pop().label_share()) << ")\n";
  out << "direction " << to_string(s.pop().direction()) << "\n";
  out << "utility " << s.utility.name() << "\n";
  out << "capacity " << format_double(s.constraint.capacity) << " slots " << s.constraint.slots() << "\n";
  out << "seed " << s.policy.seed << "\n";
  for (const auto& [name, m] : cfg.masks) out << "mask " << name << " " << m.count() << " records\n";
  for (const auto& [name, l] : cfg.levers)
    out << "lever " << name << " " << l.kind_name() << " theta " << format_double(l.theta()) << " cost "
        << to_string(l.cost.kind) << "\n";
  out << "analysis " << to_string(cfg.analysis.kind) << " (" << format_double(cfg.analysis.cell_count())
      << " evaluations)\n";
}

inline int run_analysis_command(const RunFlags& flags, std::optional<AnalysisSpec::Kind> kind, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioConfig cfg = config_for(flags, kind);
  const RunOutput r = run_analysis(cfg, flags.workers);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::filesystem::path dir(flags.out);
  std::filesystem::create_directories(dir);
  const std::string doc = render_document(r.document);
  write_file(dir / "result.json", doc);
  if (flags.format == "json")
    write_file(dir / "table.json", render_table_json(r.table));
  else
    write_file(dir / "table.csv", render_table_csv(r.table));
  write_file(dir / "manifest.json", make_manifest(cfg, doc, secs, flags.workers).dump(2) + "\n");

  out << to_string(cfg.analysis.kind) << " " << cfg.hash << "\n";
  const Json& res = r.document["result"];
  for (const char* key : {"welfare", "random_baseline", "perfect_baseline", "ratio_to_random", "theta_star",
                          "lever_gain", "total_welfare", "welfare_gain"}) {
    if (res.contains(key)) out << key << " " << res[key].dump() << "\n";
  }
  out << "wrote " << (dir / "result.json").string() << "\n";
  return kExitOk;
}

inline int run_synth_command(const std::string& spec_path, const std::string& out_path, std::ostream& out) {
  Json doc = read_document(spec_path);
  detail::Field root(doc, "");
  // Accept a bare synth block or a full config holding one.
  const detail::Field f = root.has("synth") ? root.at("synth") : root;
  const SynthSpec spec = synth_spec_from_json(f);
  Population pop = generate(spec);
  if (auto share = f.opt("label_share")) {
    LabelingOrder order;
    if (auto s = f.opt("label_seed")) order.seed = s->u64();
    const double v = share->number();
    pop = detail::at_path(share->path(), [&] { return apply_labeling(pop, v, order); });
  }
  if (out_path == "-") {
    write_population(out, pop);
  } else {
    std::ofstream file(out_path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + out_path);
    write_population(file, pop);
    out << "wrote " << pop.size() << " records to " << out_path << "\n";
  }
  return kExitOk;
}

}  // namespace detail

/// Entry point of the rvp command-line tool.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"rvp: welfare simulation for prediction-based allocation"};
  app.name("rvp");
  app.require_subcommand(1);

  detail::RunFlags flags;
  std::string synth_spec, synth_out;
  std::string host = "127.0.0.1";
  int port = 8080;
  ServiceOptions service_opt;

  auto add_run_flags = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config,-c", flags.config, "scenario config (JSON with comments)")->required();
    if (!needs_out) return;
    sub->add_option("--out,-o", flags.out, "output directory");
    sub->add_option("--workers,-j", flags.workers, "sweep workers")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", flags.seed_override, "replace policy.seed");
    sub->add_option("--format", flags.format, "table format")->check(CLI::IsMember({"json", "csv"}));
  };

  struct Sub {
    const char* name;
    const char* help;
    std::optional<AnalysisSpec::Kind> kind;
  };
  const Sub analysis_subs[] = {
      {"evaluate", "welfare, random and perfect baselines", AnalysisSpec::Kind::Evaluate},
      {"curve", "welfare over a lever grid", AnalysisSpec::Kind::Curve},
      {"break-even", "smallest improvement matching a benchmark lever", AnalysisSpec::Kind::BreakEven},
      {"equiv-cost", "benchmark spend matching a lever's gain", AnalysisSpec::Kind::EquivalentCost},
      {"ratio-grid", "relative value of two levers over a grid", AnalysisSpec::Kind::RatioGrid},
      {"optimize", "best budget split across levers", AnalysisSpec::Kind::Optimize},
      {"run", "run the analysis named in the config", std::nullopt},
  };
  std::vector<std::pair<CLI::App*, std::optional<AnalysisSpec::Kind>>> subs;
  auto* validate_cmd = app.add_subcommand("validate", "check a config and print the resolved scenario");
  add_run_flags(validate_cmd, false);
  validate_cmd->add_option("--seed-override", flags.seed_override, "replace policy.seed");
  for (const auto& s : analysis_subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_run_flags(sub, true);
    subs.emplace_back(sub, s.kind);
  }
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic population");
  synth_cmd->add_option("--spec", synth_spec, "synth spec (JSON)")->required();
  synth_cmd->add_option("--out,-o", synth_out, "output file, - for stdout")->required();
  auto* serve_cmd = app.add_subcommand("serve", "start the HTTP service");
  serve_cmd->add_option("--host", host, "bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "listen port")->capture_default_str();
  serve_cmd->add_option("--job-threshold", service_opt.job_threshold_cells, "evaluations above which sweeps run as jobs");
  serve_cmd->add_option("--job-workers", service_opt.job_workers, "jobs run at once")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--workers,-j", service_opt.sweep_workers, "sweep workers per analysis")->check(CLI::PositiveNumber);

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands([](CLI::App*) { return true; })) known = known || sub->get_name() == argv[1];
    if (!known) {
      err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (validate_cmd->parsed()) {
      const ScenarioConfig cfg = detail::config_for(flags, std::nullopt);
      detail::print_summary(out, cfg);
      out << "ok\n";
      return kExitOk;
    }
    if (synth_cmd->parsed()) return detail::run_synth_command(synth_spec, synth_out, out);
    if (serve_cmd->parsed()) {
      Service service(service_opt);
      out << "listening on " << host << ":" << port << std::endl;
      return serve(service, host, port) ? kExitOk : kExitUsage;
    }
    for (const auto& [sub, kind] : subs)
      if (sub->parsed()) return detail::run_analysis_command(flags, kind, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitAnalysis;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace rvp
