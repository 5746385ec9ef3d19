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

// Cloud server, device client and the session simulator.
//
// The server is stateless per session: every Upload frame is answered with
// one DownloadParams frame generated by the fused generator, or with an
// Error frame. The served snapshot is immutable, so handle() may run on any
// number of threads at once.

#ifndef DUET_RUNTIME_HPP_
#define DUET_RUNTIME_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "duet/dataio.hpp"
#include "duet/model.hpp"
#include "duet/ppg.hpp"
#include "duet/protocol.hpp"
#include "duet/trainer.hpp"

namespace duet {

class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Frozen view of a checkpoint shared by servers and clients.
struct ServingModel {
  std::shared_ptr<const BackboneParams> backbone;
  DynamicLayerSpec spec;
  DynamicParams global;                  // static-baseline head
  std::optional<GeneratorParams> fused;  // absent for checkpoints without generators

  static std::shared_ptr<const ServingModel> from_checkpoint(const Checkpoint& ckpt);
  // Throws RuntimeError if the checkpoint carried no generators.
  const GeneratorParams& generator() const;
};

class CloudServer {
 public:
  struct Counters {
    std::uint64_t requests = 0;
    std::uint64_t downloads = 0;
    std::uint64_t errors = 0;
  };

  explicit CloudServer(std::shared_ptr<const ServingModel> model);
  ~CloudServer();
  CloudServer(const CloudServer&) = delete;
  CloudServer& operator=(const CloudServer&) = delete;

  // One request frame in, one response frame out. Never throws for bad
  // input; malformed or unexpected frames get an Error frame.
  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> frame) const;

  Counters counters() const;
  const ServingModel& model() const { return *model_; }

  // TCP service on 127.0.0.1. Port 0 picks a free port. Throws RuntimeError
  // if the endpoint is busy.
  void listen(std::uint16_t port);
  std::uint16_t port() const { return port_; }
  void start();  // accept loop on a background thread
  void stop();

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<const ServingModel> model_;
  mutable std::atomic<std::uint64_t> requests_{0}, downloads_{0}, errors_{0};

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> workers_;
  std::vector<int> conn_fds_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Sends one frame and returns the response frame. Throws RuntimeError on
  // transport failure.
  virtual std::vector<std::uint8_t> round_trip(std::span<const std::uint8_t> frame) = 0;
};

class InProcessTransport : public Transport {
 public:
  explicit InProcessTransport(const CloudServer& server) : server_(server) {}
  std::vector<std::uint8_t> round_trip(std::span<const std::uint8_t> frame) override;

 private:
  const CloudServer& server_;
};

class TcpTransport : public Transport {
 public:
  TcpTransport(const std::string& host, std::uint16_t port);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;
  std::vector<std::uint8_t> round_trip(std::span<const std::uint8_t> frame) override;

 private:
  int fd_ = -1;
};

enum class ClientMode : std::uint8_t { kUploadSamples, kUploadEmbedding, kStatic, kFinetune };
const char* to_string(ClientMode mode);  // duet, duet-embedding, static, finetune
ClientMode parse_client_mode(const std::string& name);

struct ClientOptions {
  ClientMode mode = ClientMode::kUploadSamples;
  BandwidthProfile profile = BandwidthProfile::preset("4g-5");
  double rtt_ms = 0.0;
  std::size_t finetune_steps = 50;
  float finetune_lr = 0.01f;
  std::size_t finetune_ratio = 4;  // negatives per context positive
  std::uint64_t seed = 1;
};

struct SessionMetrics {
  std::uint64_t session = 0;
  bool ok = true;
  std::string error;
  std::vector<float> scores;
  std::vector<float> labels;
  double auc = 0.0;  // NaN when the session's labels are single-class
  std::size_t upload_bytes = 0;
  std::size_t download_bytes = 0;
  double modeled_delay_ms = 0.0;
  double compute_ms = 0.0;  // generation round trip, or fine-tune wall time
  DynamicParams installed;
};

class DeviceClient {
 public:
  // transport may be null for the static and fine-tune modes.
  DeviceClient(std::shared_ptr<const ServingModel> local, ClientOptions options, Transport* transport);

  // Requests parameters once (DUET modes), installs them and scores the
  // session's labeled samples. On any transport or protocol failure the
  // session is aborted: ok = false and nothing is installed.
  SessionMetrics run_session(const Session& session, std::uint64_t session_id);

  std::uint64_t requests_sent() const { return requests_; }
  const PrimaryModel& model() const { return model_; }

 private:
  std::shared_ptr<const ServingModel> local_;
  ClientOptions options_;
  Transport* transport_;
  PrimaryModel model_;
  std::uint64_t requests_ = 0;
};

// Probability that a random positive outscores a random negative, ties
// counted one half, via average ranks. Throws std::invalid_argument unless
// both classes are present.
double evaluate_auc(std::span<const float> scores, std::span<const float> labels);

// Fine-tune training data for a session: every context item as a positive
// and `ratio` negatives per positive drawn from items outside the context.
Session finetune_session(const Session& session, std::size_t num_items, std::size_t ratio, std::uint64_t seed);

struct ReportRow {
  std::string mode;
  std::string seed;  // "all" for the across-seed summary
  double auc = 0.0;
  double auc_std = 0.0;
  double upload_bytes = 0.0;
  double download_bytes = 0.0;
  double modeled_delay_ms = 0.0;
  double compute_ms = 0.0;
};

struct Report {
  ConfigEcho config;
  bool timing = false;  // compute_ms is written as NA when false
  std::vector<ReportRow> rows;
};

struct SimulationRun {
  std::uint64_t seed = 0;
  Checkpoint checkpoint;
};

// One row per (mode, run) with the mean and std of per-session AUC, then
// one "all" row per mode with the mean over runs and the std across runs.
Report simulate(std::span<const SimulationRun> runs, std::span<const Session> test,
                std::span<const ClientMode> modes, const ClientOptions& base, ConfigEcho echo = {},
                bool timing = false);

std::string to_csv(const Report& report);

}  // namespace duet

#endif  // DUET_RUNTIME_HPP_
