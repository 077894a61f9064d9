#pragma once

// Command implementations behind the `aircomp` executable. Each command is a
// pure function of (config, seed, input checkpoint) to the bytes of its CSV
// outputs; the manifest adds timestamps and the build identifier.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aircomp/autoencoder.hpp"
#include "aircomp/config.hpp"
#include "aircomp/constellation.hpp"
#include "aircomp/fl.hpp"
#include "aircomp/quantizer.hpp"

#ifndef AIRCOMP_BUILD_ID
#define AIRCOMP_BUILD_ID "unknown"
#endif

namespace aircomp::cli {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string snr_grid;
  std::optional<std::uint64_t> trials;
  std::size_t jobs = 1;
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed",
      "ae.clients", "ae.bits", "ae.m", "ae.encoder_hidden", "ae.decoder_hidden", "ae.shared_encoder",
      "ae.labeler", "ae.bin_width", "ae.train_snr_db", "ae.batch_size", "ae.steps", "ae.learning_rate",
      "ae.log_every",
      "channel.snr_db", "channel.fading", "channel.fading_sigma", "channel.inversion_epsilon", "channel.seed",
      "quant.k", "quant.gain", "quant.gain_schedule",
      "fl.clients", "fl.local_steps", "fl.learning_rate", "fl.lr_decay", "fl.rounds", "fl.participation",
      "fl.batch_size", "fl.partition", "fl.hidden", "fl.link", "fl.checkpoint", "fl.baseline",
      "data.source", "data.train_samples", "data.test_samples", "data.dim", "data.classes", "data.separation",
      "data.seed", "data.train_features", "data.train_labels", "data.test_features", "data.test_labels",
      "eval.snr_grid", "eval.trials",
  };
  return keys;
}

/// SNR points used by the FL comparison runs.
inline const std::vector<double>& preset_snrs() {
  static const std::vector<double> snrs{-10.0, 0.0, 15.0};
  return snrs;
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp, const char* fmt) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::strftime(buf, sizeof(buf), fmt, &tm);
  return buf;
}

inline Config load_config(const Options& opt) {
  Config cfg = opt.config_path.empty() ? Config::parse_string("", "<defaults>") : Config::load(opt.config_path);
  cfg.reject_unknown(known_keys());
  if (opt.seed) cfg.set("seed", std::to_string(*opt.seed));
  return cfg;
}

/// --out wins; otherwise <root>/<timestamp>-<command> where root is
/// $AIRCOMP_OUT_DIR or ./runs.
inline fs::path resolve_out_dir(const Options& opt, const std::string& command,
                                std::chrono::system_clock::time_point started) {
  fs::path dir;
  if (!opt.out.empty()) {
    dir = opt.out;
  } else {
    const char* env = std::getenv("AIRCOMP_OUT_DIR");
    const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
    dir = root / (utc_timestamp(started, "%Y%m%dT%H%M%SZ") + "-" + command);
  }
  fs::create_directories(dir);
  return dir;
}

/// One manifest per artifact directory.
inline void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg, std::uint64_t seed,
                           const std::map<std::string, std::string>& inputs,
                           std::chrono::system_clock::time_point started) {
  std::ofstream os(dir / "manifest.txt");
  os << "command=" << command << '\n'
     << "seed=" << seed << '\n'
     << "build=" << AIRCOMP_BUILD_ID << '\n'
     << "output_dir=" << dir.string() << '\n'
     << "started=" << utc_timestamp(started, "%Y-%m-%dT%H:%M:%SZ") << '\n'
     << "finished=" << utc_timestamp(std::chrono::system_clock::now(), "%Y-%m-%dT%H:%M:%SZ") << '\n';
  for (const auto& [k, v] : inputs) os << "input." << k << '=' << v << '\n';
  os << "[config]\n";
  for (const auto& [k, v] : cfg.resolved()) os << k << '=' << v << '\n';
}

inline TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.clients = cfg.get<std::size_t>("ae.clients", tc.clients);
  tc.bits = cfg.get<int>("ae.bits", tc.bits);
  tc.m = cfg.get<std::size_t>("ae.m", tc.m);
  tc.encoder_hidden = cfg.get<std::vector<std::size_t>>("ae.encoder_hidden", tc.encoder_hidden);
  tc.decoder_hidden = cfg.get<std::vector<std::size_t>>("ae.decoder_hidden", tc.decoder_hidden);
  tc.shared_encoder = cfg.get<bool>("ae.shared_encoder", tc.shared_encoder);
  tc.label_mode = parse_label_mode(cfg.get<std::string>("ae.labeler", "exact"));
  tc.bin_width = cfg.get<std::size_t>("ae.bin_width", tc.bin_width);
  tc.train_snr_db = cfg.get<double>("ae.train_snr_db", tc.train_snr_db);
  tc.fading = parse_fading(cfg.get<std::string>("channel.fading", "none"));
  tc.batch_size = cfg.get<std::size_t>("ae.batch_size", tc.batch_size);
  tc.steps = cfg.get<std::uint64_t>("ae.steps", tc.steps);
  tc.learning_rate = cfg.get<double>("ae.learning_rate", tc.learning_rate);
  tc.log_every = cfg.get<std::uint64_t>("ae.log_every", tc.log_every);
  tc.seed = cfg.get<std::uint64_t>("seed", 0);
  tc.validate();
  return tc;
}

inline ChannelConfig channel_config_from(const Config& cfg, std::size_t m) {
  ChannelConfig ch;
  ch.m = m;
  ch.fading = parse_fading(cfg.get<std::string>("channel.fading", "none"));
  ch.fading_sigma = cfg.get<double>("channel.fading_sigma", ch.fading_sigma);
  ch.inversion_epsilon = cfg.get<double>("channel.inversion_epsilon", ch.inversion_epsilon);
  ch.seed = cfg.get<std::uint64_t>("channel.seed", cfg.get<std::uint64_t>("seed", 0));
  ch.validate();
  return ch;
}

/// quant.gain_schedule: "none", "two_phase", or "round:gain,round:gain,...".
inline QuantizerConfig quant_config_from(const Config& cfg, std::uint64_t rounds) {
  QuantizerConfig q;
  q.bits = cfg.get<int>("quant.k", q.bits);
  q.gain = cfg.get<double>("quant.gain", q.gain);
  const std::string schedule = cfg.get<std::string>("quant.gain_schedule", "none");
  if (schedule == "two_phase") {
    q.gain_schedule = two_phase_schedule(q.gain, rounds);
  } else if (schedule != "none" && !schedule.empty()) {
    for (const auto& item : Config::split_list(schedule)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError("quant.gain_schedule: expected 'round:gain', got '" + item + "'");
      }
      std::uint64_t round = 0;
      const std::string head = item.substr(0, colon);
      auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), round);
      if (ec != std::errc{} || ptr != head.data() + head.size()) {
        throw ConfigError("quant.gain_schedule: bad round '" + head + "'");
      }
      q.gain_schedule[round] = nn::parse_double(item.substr(colon + 1));
    }
  }
  q.validate();
  return q;
}

inline fl::FLConfig fl_config_from(const Config& cfg) {
  fl::FLConfig f;
  f.clients = cfg.get<std::size_t>("fl.clients", f.clients);
  f.local_steps = cfg.get<std::size_t>("fl.local_steps", f.local_steps);
  f.learning_rate = cfg.get<double>("fl.learning_rate", f.learning_rate);
  f.lr_decay = cfg.get<double>("fl.lr_decay", f.lr_decay);
  f.rounds = cfg.get<std::uint64_t>("fl.rounds", f.rounds);
  f.participation = cfg.get<double>("fl.participation", f.participation);
  f.batch_size = cfg.get<std::size_t>("fl.batch_size", f.batch_size);
  f.partition = fl::parse_partition(cfg.get<std::string>("fl.partition", "iid"));
  f.hidden = cfg.get<std::vector<std::size_t>>("fl.hidden", f.hidden);
  f.link = fl::parse_link_mode(cfg.get<std::string>("fl.link", "perfect"));
  f.quant = quant_config_from(cfg, f.rounds);
  f.seed = cfg.get<std::uint64_t>("seed", 0);
  f.channel = channel_config_from(cfg, 2);
  f.validate();
  return f;
}

inline std::pair<fl::Dataset, fl::Dataset> dataset_from(const Config& cfg) {
  const std::string source = cfg.get<std::string>("data.source", "synthetic");
  const auto dim = cfg.get<std::size_t>("data.dim", 20);
  const auto classes = cfg.get<std::size_t>("data.classes", 10);
  if (source == "synthetic") {
    return fl::make_gaussian_task(cfg.get<std::size_t>("data.train_samples", 8000),
                                  cfg.get<std::size_t>("data.test_samples", 2000), dim, classes,
                                  cfg.get<double>("data.separation", 3.0), cfg.get<std::uint64_t>("data.seed", 100));
  }
  if (source == "files") {
    cfg.require_keys({"data.train_features", "data.train_labels", "data.test_features", "data.test_labels"});
    return {fl::read_dataset(cfg.require<std::string>("data.train_features"),
                             cfg.require<std::string>("data.train_labels"), dim, classes),
            fl::read_dataset(cfg.require<std::string>("data.test_features"),
                             cfg.require<std::string>("data.test_labels"), dim, classes)};
  }
  throw ConfigError("data.source must be 'synthetic' or 'files', got '" + source + "'");
}

inline Link load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path + ": cannot open checkpoint");
  try {
    return load_link(is);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

inline std::vector<double> parse_snr_grid(const std::string& text) {
  return Config::parse_string("g=" + text, "--snr-grid").get<std::vector<double>>("g", {});
}

inline int cmd_train_ae(const Options& opt, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  const Config cfg = load_config(opt);
  const TrainConfig tc = train_config_from(cfg);
  const fs::path dir = resolve_out_dir(opt, "train-ae", started);
  log << "training (" << tc.bits << "," << tc.m << ") link, n=" << tc.clients << ", rate " << tc.rate()
      << " bit/use, " << tc.steps << " steps at " << tc.train_snr_db << " dB\n";
  const TrainResult result = train(tc, [&](const LossPoint& p) {
    if (p.step % (tc.log_every * 50) == 0) log << "  step " << p.step << " loss " << p.loss << '\n';
  });
  {
    std::ofstream os(dir / "link.ckpt");
    save_link(os, result.link);
  }
  {
    std::ofstream os(dir / "loss.csv");
    write_loss_csv(os, result.loss_curve);
  }
  write_manifest(dir, "train-ae", cfg, tc.seed, {{"rate_bits_per_use", nn::format_double(tc.rate())}}, started);
  log << "wrote " << (dir / "link.ckpt").string() << '\n';
  return 0;
}

inline int cmd_eval_bler(const Options& opt, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  if (opt.checkpoint.empty()) throw ConfigError("eval-bler: --checkpoint is required");
  const Config cfg = load_config(opt);
  const Link link = load_checkpoint(opt.checkpoint);
  const auto& shape = link.bank.shape();
  if ((cfg.has("ae.clients") && cfg.get<std::size_t>("ae.clients", 0) != shape.clients) ||
      (cfg.has("ae.bits") && cfg.get<int>("ae.bits", 0) != shape.bits) ||
      (cfg.has("ae.m") && cfg.get<std::size_t>("ae.m", 0) != shape.m)) {
    throw ConfigError("eval-bler: checkpoint (n=" + std::to_string(shape.clients) + ", k=" +
                      std::to_string(shape.bits) + ", m=" + std::to_string(shape.m) +
                      ") incompatible with config dimensions");
  }
  const std::vector<double> grid =
      opt.snr_grid.empty() ? cfg.get<std::vector<double>>("eval.snr_grid", {-10, -5, 0, 5, 10, 15})
                           : parse_snr_grid(opt.snr_grid);
  const std::uint64_t trials = opt.trials ? *opt.trials : cfg.get<std::uint64_t>("eval.trials", 10000);
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 0);
  const ChannelConfig ch = channel_config_from(cfg, shape.m);
  const fs::path dir = resolve_out_dir(opt, "eval-bler", started);
  const auto points = sweep_bler(FrozenLink(link), ch, grid, trials, seed, opt.jobs);
  {
    std::ofstream os(dir / "bler.csv");
    write_bler_csv(os, points);
  }
  for (const auto& p : points) log << "  " << p.snr_db << " dB: BLER " << p.bler << '\n';
  write_manifest(dir, "eval-bler", cfg, seed,
                 {{"checkpoint", opt.checkpoint}, {"snr_grid", Config::split_list(opt.snr_grid).empty() ? "config" : opt.snr_grid},
                  {"trials", std::to_string(trials)}},
                 started);
  return 0;
}

inline int cmd_export_constellation(const Options& opt, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  if (opt.checkpoint.empty()) throw ConfigError("export-constellation: --checkpoint is required");
  const Config cfg = load_config(opt);
  const Link link = load_checkpoint(opt.checkpoint);
  const fs::path dir = resolve_out_dir(opt, "export-constellation", started);
  const auto rows = export_constellation(link.bank);
  {
    std::ofstream os(dir / "constellation.csv");
    write_constellation_csv(os, rows, link.m());
  }
  write_manifest(dir, "export-constellation", cfg, cfg.get<std::uint64_t>("seed", 0), {{"checkpoint", opt.checkpoint}},
                 started);
  log << "wrote " << rows.size() << " constellation points\n";
  return 0;
}

/// channel.snr_db takes one value, a comma list, or `preset` (-10, 0, 15 dB).
/// ae/quantized/perfect runs go to one metrics.csv; fl.baseline=true prepends
/// a perfect-communication run on the same partition.
inline int cmd_fl_run(const Options& opt, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  const Config cfg = load_config(opt);
  cfg.require_keys({"fl.rounds", "fl.link"});
  fl::FLConfig base = fl_config_from(cfg);
  const std::string snr_text = cfg.get<std::string>("channel.snr_db", "15");
  const std::vector<double> snrs = snr_text == "preset" ? preset_snrs() : parse_snr_grid(snr_text);
  if (snrs.empty()) throw ConfigError("channel.snr_db: no SNR values");
  const bool baseline = cfg.get<bool>("fl.baseline", false);

  std::optional<FrozenLink> link;
  std::string checkpoint = opt.checkpoint.empty() ? cfg.get<std::string>("fl.checkpoint", "") : opt.checkpoint;
  if (base.link == fl::LinkMode::ae) {
    if (checkpoint.empty()) throw ConfigError("fl-run: ae link requires --checkpoint or fl.checkpoint");
    const Link loaded = load_checkpoint(checkpoint);
    if (loaded.clients() != base.clients) {
      throw ConfigError("fl-run: checkpoint has n=" + std::to_string(loaded.clients()) + " but fl.clients=" +
                        std::to_string(base.clients));
    }
    if (loaded.bank.shape().bits != base.quant.bits) {
      throw ConfigError("fl-run: checkpoint has k=" + std::to_string(loaded.bank.shape().bits) +
                        " but quant.k=" + std::to_string(base.quant.bits));
    }
    link.emplace(loaded);
    base.channel.m = loaded.m();
  }
  const auto [train_set, test_set] = dataset_from(cfg);
  const fs::path dir = resolve_out_dir(opt, "fl-run", started);
  std::ofstream os(dir / "metrics.csv");
  bool header = true;
  auto run = [&](fl::FLConfig run_cfg, double snr_db) {
    run_cfg.channel.snr_db = snr_db;
    const fl::FLResult result = fl::run_training(run_cfg, train_set, test_set, link ? &*link : nullptr);
    const double shown = run_cfg.link == fl::LinkMode::ae ? snr_db : std::numeric_limits<double>::infinity();
    fl::write_metrics_csv(os, result.metrics, run_cfg.link, shown, header);
    header = false;
    log << "  " << to_string(run_cfg.link) << " @ " << shown << " dB: final accuracy "
        << result.metrics.back().test_accuracy << '\n';
  };
  if (baseline && base.link != fl::LinkMode::perfect) {
    fl::FLConfig p = base;
    p.link = fl::LinkMode::perfect;
    run(p, std::numeric_limits<double>::infinity());
  }
  if (base.link == fl::LinkMode::ae) {
    for (double s : snrs) run(base, s);
  } else {
    run(base, std::numeric_limits<double>::infinity());
  }
  os.close();
  std::map<std::string, std::string> inputs;
  if (!checkpoint.empty()) inputs["checkpoint"] = checkpoint;
  write_manifest(dir, "fl-run", cfg, base.seed, inputs, started);
  return 0;
}

/// Writes the synthetic task as dataset files for the `files` source.
inline int cmd_gen_data(const Options& opt, std::ostream& log) {
  const auto started = std::chrono::system_clock::now();
  const Config cfg = load_config(opt);
  Config synth = cfg;
  synth.set("data.source", "synthetic");
  const auto [train_set, test_set] = dataset_from(synth);
  const fs::path dir = resolve_out_dir(opt, "gen-data", started);
  fl::write_dataset(train_set, dir / "train.features.f64", dir / "train.labels.txt");
  fl::write_dataset(test_set, dir / "test.features.f64", dir / "test.labels.txt");
  write_manifest(dir, "gen-data", synth, synth.get<std::uint64_t>("data.seed", 100), {}, started);
  log << "wrote " << train_set.size() << " train / " << test_set.size() << " test samples, dim " << train_set.dim
      << '\n';
  return 0;
}

}  // namespace aircomp::cli
