/* Copyright 2026 The DUET Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "duet/cli.hpp"

#include <pthread.h>

#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "CLI11.hpp"
#include "duet/config.hpp"
#include "duet/dataio.hpp"
#include "duet/runtime.hpp"
#include "duet/trainer.hpp"

namespace duet {

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override one config key (key=value); repeatable");
}

Config resolve_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const std::string& o : c.overrides) apply_override(cfg, o);
  return cfg;
}

ClientOptions client_options(const Config& cfg) {
  ClientOptions o;
  o.profile = BandwidthProfile::preset(cfg.bandwidth_profile);
  o.rtt_ms = cfg.rtt_ms;
  o.finetune_steps = cfg.finetune_steps;
  o.finetune_lr = cfg.finetune_lr;
  o.finetune_ratio = cfg.train_ratio;
  o.seed = cfg.seed;
  return o;
}

std::string movielens_dir(const std::string& flag, const Config& cfg) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MOVIELENS_100K_PATH")) return env;
  return cfg.dataset_path;
}

int cmd_synth(const Common& common, const std::string& out_path, const std::string& movielens, std::ostream& out) {
  const Config cfg = resolve_config(common);
  Dataset d;
  if (!movielens.empty()) {
    const auto interactions = parse_movielens(std::filesystem::path(movielens) / "u.data");
    d = movielens_dataset(interactions, cfg.context_len, cfg.session_len, cfg.train_ratio, cfg.test_ratio, cfg.seed);
  } else {
    d = synth_shift(cfg.synth_config());
  }
  write_dataset(out_path, d);
  out << "wrote " << d.train.size() << " train and " << d.test.size() << " test sessions (" << d.num_items
      << " items) to " << out_path << "\n";
  return kExitOk;
}

int cmd_train(const Common& common, const std::string& dataset, const std::string& out_path, bool umn_only,
              std::ostream& out) {
  const Config cfg = resolve_config(common);
  const Dataset d = read_dataset(dataset);
  TrainConfig tc = cfg.train_config();
  tc.mode = umn_only ? TrainMode::kUmnOnly : TrainMode::kJoint;
  TrainResult r = train_joint(d.train, d.num_items, tc, cfg.echo());
  if (umn_only) r.checkpoint.model.generators.clear();
  save_checkpoint(r.checkpoint, out_path);
  out << "trained " << r.checkpoint.step << " steps; final batch loss " << std::setprecision(6)
      << (r.step_losses.empty() ? 0.0f : r.step_losses.back()) << "; checkpoint " << out_path << "\n";
  return kExitOk;
}

int cmd_serve(const std::string& checkpoint, std::uint16_t port, std::ostream& out) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  CloudServer server(ServingModel::from_checkpoint(load_checkpoint(checkpoint)));
  server.model().generator();
  server.listen(port);
  server.start();
  out << "listening on 127.0.0.1:" << server.port() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  const auto c = server.counters();
  out << "served " << c.downloads << " downloads, " << c.errors << " errors\n";
  return kExitOk;
}

void print_session_summary(const std::string& mode, const std::vector<SessionMetrics>& ms, std::ostream& out) {
  double auc = 0.0, up = 0.0, down = 0.0, delay = 0.0, compute = 0.0;
  std::size_t n_auc = 0;
  for (const SessionMetrics& m : ms) {
    if (!std::isnan(m.auc)) {
      auc += m.auc;
      ++n_auc;
    }
    up += static_cast<double>(m.upload_bytes);
    down += static_cast<double>(m.download_bytes);
    delay += m.modeled_delay_ms;
    compute += m.compute_ms;
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, ms.size()));
  out << std::fixed << std::setprecision(4) << mode << ": sessions=" << ms.size()
      << " auc=" << (n_auc ? auc / static_cast<double>(n_auc) : 0.0) << " upload_bytes=" << up / n
      << " download_bytes=" << down / n << " modeled_delay_ms=" << delay / n << " compute_ms=" << compute / n
      << "\n";
}

int cmd_device(const Common& common, const std::string& checkpoint, const std::string& dataset,
               const std::string& host, std::uint16_t port, const std::string& mode, std::ostream& out) {
  const Config cfg = resolve_config(common);
  auto local = ServingModel::from_checkpoint(load_checkpoint(checkpoint));
  const Dataset d = read_dataset(dataset);
  ClientOptions opts = client_options(cfg);
  opts.mode = parse_client_mode(mode);
  std::unique_ptr<TcpTransport> transport;
  if (opts.mode == ClientMode::kUploadSamples || opts.mode == ClientMode::kUploadEmbedding) {
    transport = std::make_unique<TcpTransport>(host, port);
  }
  DeviceClient client(local, opts, transport.get());
  std::vector<SessionMetrics> ms;
  for (std::size_t s = 0; s < d.test.size(); ++s) {
    ms.push_back(client.run_session(d.test[s], s));
    if (!ms.back().ok) throw RuntimeError("session " + std::to_string(s) + " aborted: " + ms.back().error);
  }
  print_session_summary(mode, ms, out);
  return kExitOk;
}

std::vector<SimulationRun> load_runs(const std::vector<std::string>& paths) {
  if (paths.empty()) {
    throw CheckpointError(CheckpointError::Kind::kMissing, "simulate: no checkpoint given (use --checkpoint)");
  }
  std::vector<SimulationRun> runs;
  for (const std::string& p : paths) {
    SimulationRun run;
    run.checkpoint = load_checkpoint(p);
    for (const auto& [key, value] : run.checkpoint.config) {
      if (key == "seed") run.seed = std::stoull(value);
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

int cmd_simulate(const Common& common, const std::vector<std::string>& checkpoints, const std::string& dataset,
                 const std::string& out_path, std::ostream& out) {
  const Config cfg = resolve_config(common);
  const std::vector<SimulationRun> runs = load_runs(checkpoints);
  const Dataset d = read_dataset(dataset);
  std::vector<ClientMode> modes;
  for (const std::string& m : cfg.modes()) modes.push_back(parse_client_mode(m));
  const Report report = simulate(runs, d.test, modes, client_options(cfg), cfg.echo(), cfg.report_timing);
  const std::string csv = to_csv(report);
  if (out_path.empty()) {
    out << csv;
  } else {
    std::ofstream f(out_path);
    if (!f) throw DataError("cannot write " + out_path);
    f << csv;
    out << "wrote " << report.rows.size() << " rows to " << out_path << "\n";
  }
  return kExitOk;
}

int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& dataset, std::ostream& out) {
  const Config cfg = resolve_config(common);
  auto local = ServingModel::from_checkpoint(load_checkpoint(checkpoint));
  const Dataset d = read_dataset(dataset);
  CloudServer server(local);
  InProcessTransport transport(server);
  for (const std::string& mode : cfg.modes()) {
    ClientOptions opts = client_options(cfg);
    opts.mode = parse_client_mode(mode);
    DeviceClient client(local, opts, &transport);
    std::vector<SessionMetrics> ms;
    for (std::size_t s = 0; s < d.test.size(); ++s) ms.push_back(client.run_session(d.test[s], s));
    print_session_summary(mode, ms, out);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Device-cloud parameter generation: synthesize data, train, serve and simulate."};
  app.name("duet");
  app.require_subcommand(1);

  Common common;
  std::string out_path, dataset, movielens, checkpoint, host = "127.0.0.1", mode = "duet";
  std::vector<std::string> checkpoints;
  std::uint16_t port = 7070;
  bool umn_only = false;

  auto* synth = app.add_subcommand("synth", "write a dataset file (synthetic drift benchmark or MovieLens-100k)");
  add_common(synth, common);
  synth->add_option("--out", out_path, "dataset file to write")->required();
  std::string source = "synthetic";
  synth->add_option("--source", source, "synthetic | movielens")->check(CLI::IsMember({"synthetic", "movielens"}));
  synth->add_option("--movielens", movielens, "directory holding MovieLens-100k u.data");

  auto* train = app.add_subcommand("train", "train backbone, global head and generator ensemble");
  add_common(train, common);
  train->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_path, "checkpoint to write")->required();
  train->add_flag("--umn-only", umn_only, "train the global model only (no generators)");

  auto* serve = app.add_subcommand("serve", "serve generated parameters over TCP on 127.0.0.1");
  serve->add_option("--checkpoint", checkpoint, "checkpoint to serve")->required();
  serve->add_option("--port", port, "TCP port (0 picks a free one)");

  auto* device = app.add_subcommand("device", "run a dataset's test sessions against a running server");
  add_common(device, common);
  device->add_option("--checkpoint", checkpoint, "device-side model checkpoint")->required();
  device->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  device->add_option("--host", host, "server host");
  device->add_option("--port", port, "server port");
  device->add_option("--mode", mode, "duet | duet-embedding | static | finetune");

  auto* sim = app.add_subcommand("simulate", "run every mode over the test split and write the CSV report");
  add_common(sim, common);
  sim->add_option("--checkpoint", checkpoints, "trained checkpoint, one per seed; repeatable");
  sim->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out_path, "report path (default: stdout)");

  auto* eval = app.add_subcommand("eval", "print per-mode test metrics for one checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  eval->add_option("--dataset", dataset, "dataset file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // CLI11 checks required options before leftovers; name the stray
    // argument first since it is usually the real mistake.
    const std::vector<std::string> stray = app.remaining(true);
    if (!stray.empty()) {
      err << "duet: unrecognized argument";
      for (const std::string& s : stray) err << " " << s;
      err << "\n";
    } else {
      err << "duet: " << e.what() << "\n";
    }
    err << "run 'duet --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (*synth) {
      std::string dir;
      if (source == "movielens" || !movielens.empty()) {
        dir = movielens_dir(movielens, resolve_config(common));
        if (dir.empty()) throw DataError("movielens: no directory (use --movielens, MOVIELENS_100K_PATH or dataset.path)");
      }
      return cmd_synth(common, out_path, dir, out);
    }
    if (*train) return cmd_train(common, dataset, out_path, umn_only, out);
    if (*serve) return cmd_serve(checkpoint, port, out);
    if (*device) return cmd_device(common, checkpoint, dataset, host, port, mode, out);
    if (*sim) return cmd_simulate(common, checkpoints, dataset, out_path, out);
    if (*eval) return cmd_eval(common, checkpoint, dataset, out);
  } catch (const ConfigError& e) {
    err << "duet: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "duet: checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const DataError& e) {
    err << "duet: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ProtocolError& e) {
    err << "duet: protocol error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const RuntimeError& e) {
    err << "duet: runtime error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "duet: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace duet
