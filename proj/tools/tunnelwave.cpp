// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tunnelwave Authors

// tunnelwave: simulate tunnels, build datasets, train and evaluate the
// super-resolution network, render slices and run the built-in checks.
//
// Exit codes: 0 success, 1 failed check or runtime failure, 2 usage or
// configuration error.

#include <CLI11.hpp>

#include <tunnelwave/checkpoint.hpp>
#include <tunnelwave/dataset.hpp>
#include <tunnelwave/inference.hpp>
#include <tunnelwave/metrics.hpp>
#include <tunnelwave/plot.hpp>
#include <tunnelwave/run_config.hpp>
#include <tunnelwave/selfcheck.hpp>
#include <tunnelwave/train.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace tunnelwave;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string out = "out";
};

RunConfig load_config(const Globals& g) {
  Json j = Json::object();
  if (!g.config_path.empty()) {
    const auto bytes = io::read_file(g.config_path);
    try {
      j = Json::parse(bytes.begin(), bytes.end());
    } catch (const Json::parse_error& e) {
      throw ConfigError("$", std::string("not valid JSON: ") + e.what());
    }
  }
  std::optional<Preset> preset;
  if (!g.preset.empty()) preset = preset_from_string(g.preset);
  RunConfig c = parse_run_config(j, preset);
  if (g.seed) c.train.seed = *g.seed;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string case_label(const TunnelCase& c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s %.3g GHz eps_r %g sigma %g tx (%g, %g)", to_string(c.section.kind).data(),
                c.pwe.frequency / 1e9, c.pwe.material.eps_r, c.pwe.material.sigma, c.pwe.tx.x, c.pwe.tx.y);
  return buf;
}

Split split_of(const TunnelCase& c) {
  if (in_split(c.pwe.tx, Split::train)) return Split::train;
  if (in_split(c.pwe.tx, Split::test)) return Split::test;
  return Split::all;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Globals& g, std::size_t index) {
  const auto cfg = load_config(g);
  const auto cases = cfg.cases();
  if (index >= cases.size()) {
    throw InvalidArgument("--index " + std::to_string(index) + " outside the " + std::to_string(cases.size()) +
                          " configured cases");
  }
  const auto& c = cases[index];
  std::cerr << "simulating " << case_label(c) << ", " << c.pwe.length << " m\n";
  const auto pair = generate_pair(c, cfg.pair_options());
  const fs::path out(g.out);
  save_volume(pair.coarse, out / "coarse.rssv");
  save_volume(pair.fine, out / "fine.rssv");
  write_text(out / "case.json", Json(c).dump(2) + "\n");
  std::cout << "coarse " << pair.coarse.grid.nx << "x" << pair.coarse.grid.ny << "x" << pair.coarse.nz << ", fine "
            << pair.fine.grid.nx << "x" << pair.fine.grid.ny << "x" << pair.fine.nz << ", dz "
            << c.pwe.delta_z << " m -> " << out.string() << "\n";
  return 0;
}

int cmd_dataset(const Globals& g) {
  const auto cfg = load_config(g);
  const auto cases = cfg.cases();
  const fs::path out(g.out);
  const unsigned workers = g.deterministic ? 1u : g.workers;
  std::vector<ManifestEntry> entries(cases.size());
  std::vector<NormStats> ranges(cases.size());
  std::mutex log_mutex;
  std::size_t done = 0;
  parallel_for(cases.size(), workers, [&](std::size_t i) {
    const auto pair = generate_pair(cases[i], cfg.pair_options());
    char stem[32];
    std::snprintf(stem, sizeof stem, "pairs/%05zu", i);
    save_volume(pair.coarse, out / (std::string(stem) + "_coarse.rssv"));
    save_volume(pair.fine, out / (std::string(stem) + "_fine.rssv"));
    entries[i] = {std::string(stem) + "_coarse.rssv", std::string(stem) + "_fine.rssv", split_of(cases[i]), cases[i]};
    const auto a = interior_range(pair.coarse), b = interior_range(pair.fine);
    ranges[i] = {std::min(a.min_db, b.min_db), std::max(a.max_db, b.max_db)};
    std::lock_guard lock(log_mutex);
    std::cerr << "[" << ++done << "/" << cases.size() << "] " << case_label(cases[i]) << "\n";
  });
  Manifest m;
  m.pairs = entries;
  for (Split s : {Split::train, Split::test}) {
    NormStats st{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    bool any = false;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].split == s) {
        st.min_db = std::min(st.min_db, ranges[i].min_db);
        st.max_db = std::max(st.max_db, ranges[i].max_db);
        any = true;
      }
    if (any) m.stats[std::string(to_string(s))] = st;
  }
  m.save(out / "manifest.json");
  std::cout << cases.size() << " pairs -> " << (out / "manifest.json").string() << "\n";
  return 0;
}

struct LoadedSplit {
  std::vector<VolumePair> pairs;
  Manifest manifest;
};

LoadedSplit load_split(const fs::path& manifest_path, std::optional<Split> split) {
  LoadedSplit r{{}, Manifest::load(manifest_path)};
  const auto dir = manifest_path.parent_path();
  for (const auto& e : r.manifest.pairs) {
    if (split && e.split != *split) continue;
    r.pairs.push_back({load_volume(dir / e.coarse), load_volume(dir / e.fine)});
  }
  return r;
}

NormStats train_stats(const Manifest& m) {
  const auto it = m.stats.find("train");
  if (it == m.stats.end()) throw InvalidArgument("manifest has no train-split normalisation stats");
  return it->second;
}

int cmd_train(const Globals& g, const std::string& manifest_path, const std::string& resume) {
  auto cfg = load_config(g);
  auto data = load_split(manifest_path, Split::train);
  if (data.pairs.empty()) throw InvalidArgument("manifest has no train-split pairs");
  const auto stats = train_stats(data.manifest);
  std::vector<VolumePair> held_out;
  if (cfg.train.eval_every > 0) held_out = load_split(manifest_path, Split::test).pairs;

  const fs::path out(g.out);
  if (cfg.train.checkpoint_dir.empty()) cfg.train.checkpoint_dir = (out / "checkpoints").string();
  Prbpn model(cfg.model);
  model.initialize(cfg.train.seed);
  Trainer trainer(model, data.pairs, stats, cfg.train);
  if (!resume.empty()) trainer.resume(load_checkpoint(resume));

  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw FormatError(FormatError::Kind::io, "cannot write " + (out / "train_log.jsonl").string());
  // wall-clock fields are the only non-reproducible bytes in a run
  trainer.set_log_timing(!g.deterministic);
  const auto result = trainer.run(&log, held_out.empty() ? nullptr : &held_out);
  save_checkpoint(trainer.checkpoint(), out / "model.prbw");
  std::cout << "trained " << result.iterations << " iterations, loss " << result.initial_loss << " -> "
            << result.final_loss << (result.early_stopped ? " (target reached)" : "") << "\n";
  if (result.last_eval) std::cout << result.last_eval->to_text();
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split_name) {
  const auto cfg = load_config(g);
  const auto ckpt = load_checkpoint(checkpoint_path);
  if (!ckpt.norm_stats) throw InvalidArgument("checkpoint carries no normalisation stats");
  const auto model = restore_model(ckpt);
  const auto split = split_from_string(split_name);
  const auto data = load_split(manifest_path, split == Split::all ? std::nullopt : std::optional(split));
  if (data.pairs.empty()) throw InvalidArgument("no " + split_name + "-split pairs in the manifest");
  const auto table = evaluate(model, data.pairs, *ckpt.norm_stats, cfg.eval_slices);
  std::cout << table.to_text();
  Json j{{"split", split_name}, {"slices", cfg.eval_slices}, {"groups", table.to_json()},
         {"overall", overall(table)}};
  write_text(fs::path(g.out) / "metrics.json", j.dump(2) + "\n");
  return 0;
}

int cmd_infer(const Globals& g, const std::string& checkpoint_path, const std::string& volume_path, int t) {
  const auto ckpt = load_checkpoint(checkpoint_path);
  if (!ckpt.norm_stats) throw InvalidArgument("checkpoint carries no normalisation stats");
  const auto model = restore_model(ckpt);
  const auto coarse = load_volume(volume_path);
  if (t < 0 || t >= coarse.nz) {
    throw InvalidArgument("--t " + std::to_string(t) + " outside [0, " + std::to_string(coarse.nz) + ")");
  }
  const std::vector<int> ts{t};
  const auto pred = predict_volume(model, coarse, *ckpt.norm_stats, ts);
  const fs::path path = fs::path(g.out) / "prediction.rssv";
  save_volume(pred, path);
  std::cout << "slice " << t << ": " << pred.grid.nx << "x" << pred.grid.ny << " -> " << path.string() << "\n";
  return 0;
}

int cmd_plot(const Globals& g, const std::string& volume_path, const std::string& kind, int t, double rx_x,
             double rx_y) {
  const auto v = load_volume(volume_path);
  const fs::path out(g.out);
  if (kind == "heatmap") {
    const auto map = make_heatmap(v, t);
    io::write_file(out / "heatmap.pgm", encode_pgm(map));
    auto side = heatmap_sidecar(map);
    side["t"] = t;
    side["z"] = (t + 1) * v.config.delta_z;
    write_text(out / "heatmap.json", side.dump(2) + "\n");
    std::cout << map.width << "x" << map.height << " [" << map.min_db << ", " << map.max_db << "] dB -> "
              << (out / "heatmap.pgm").string() << "\n";
  } else {
    write_text(out / "axial.csv", axial_csv(axial_curve(v, rx_x, rx_y)));
    std::cout << v.nz << " points -> " << (out / "axial.csv").string() << "\n";
  }
  return 0;
}

int cmd_selfcheck(const std::string& fault) {
  if (!fault.empty()) tc::inject_gradient_fault(fault);
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  using Suite = selfcheck::CheckOutcome (*)();
  const std::vector<Suite> suites{
      [] { return selfcheck::beam_oracle(); },  [] { return selfcheck::unitarity(); },
      [] { return selfcheck::wall_screen(); },  [] { return selfcheck::adjoint(); },
      [] { return selfcheck::gradients(); },    [] { return selfcheck::metrics_oracle(); }};
  for (auto suite : suites) {
    const auto o = suite();
    ok = ok && o.passed;
    std::printf("%-4s %-20s err %.3g (bound %.3g)  %s\n", o.passed ? "ok" : "FAIL", o.name.c_str(), o.value, o.bound,
                o.detail.c_str());
    std::fflush(stdout);
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s in %.1f s\n", ok ? "all checks passed" : "checks FAILED", s);
  return ok ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tunnel radio coverage: wave-equation simulation and learned super-resolution"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "Parameter preset")->check(CLI::IsMember({"tableI", "figures", "massif"}));
  app.add_option("--seed", g.seed, "Training seed (overrides train.seed)");
  app.add_flag("--deterministic", g.deterministic, "Single worker; omit wall-clock fields from logs");
  app.add_option("--workers", g.workers, "Simulation worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "Simulate one coarse/fine pair");
  std::size_t index = 0;
  sim->add_option("--index", index, "Case index in the configured enumeration")->capture_default_str();

  auto* ds = app.add_subcommand("dataset", "Simulate every configured case and write a manifest");

  std::string manifest, checkpoint, volume, resume, split = "test", kind;
  auto* tr = app.add_subcommand("train", "Train the network on the train split of a manifest");
  tr->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest split");
  ev->add_option("--checkpoint", checkpoint, "PRBW1 checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", split, "train, test or all")->capture_default_str();

  int t = 0;
  auto* inf = app.add_subcommand("infer", "Super-resolve one slice of a coarse volume");
  inf->add_option("--checkpoint", checkpoint, "PRBW1 checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--volume", volume, "Coarse RSSV1 volume")->required()->check(CLI::ExistingFile);
  inf->add_option("--t", t, "Slice index")->required();

  double rx_x = 0.0, rx_y = 2.0;
  auto* pl = app.add_subcommand("plot", "Render a slice heatmap (PGM) or an axial curve (CSV)");
  pl->add_option("--volume", volume, "RSSV1 volume or prediction")->required()->check(CLI::ExistingFile);
  pl->add_option("--kind", kind, "heatmap or axial")->required()->check(CLI::IsMember({"heatmap", "axial"}));
  pl->add_option("--t", t, "Slice index (heatmap)")->capture_default_str();
  pl->add_option("--rx-x", rx_x, "Receiver x (axial)")->capture_default_str();
  pl->add_option("--rx-y", rx_y, "Receiver y (axial)")->capture_default_str();

  std::string fault;
  auto* sc = app.add_subcommand("selfcheck", "Run the built-in oracle checks");
  sc->add_option("--inject-fault", fault, "Double the gradient of the named op")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(g, index);
    if (*ds) return cmd_dataset(g);
    if (*tr) return cmd_train(g, manifest, resume);
    if (*ev) return cmd_eval(g, checkpoint, manifest, split);
    if (*inf) return cmd_infer(g, checkpoint, volume, t);
    if (*pl) return cmd_plot(g, volume, kind, t, rx_x, rx_y);
    if (*sc) return cmd_selfcheck(fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return 0;
}
