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

#include "duet/runtime.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "duet/rng.hpp"
#include "duet/swa.hpp"

namespace duet {

namespace {

constexpr std::size_t kMaxFrameBytes = 64u << 20;

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

// Reads one length-prefixed frame; nullopt on EOF or socket error.
std::optional<std::vector<std::uint8_t>> read_frame(int fd) {
  std::vector<std::uint8_t> frame(4);
  if (!read_all(fd, frame.data(), 4)) return std::nullopt;
  const std::size_t total = *peek_frame_size(frame);
  if (total > kMaxFrameBytes) return std::nullopt;
  frame.resize(total);
  if (total > 4 && !read_all(fd, frame.data() + 4, total - 4)) return std::nullopt;
  return frame;
}

std::uint64_t session_of(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderBytes) return 0;
  std::uint64_t s = 0;
  for (int i = 0; i < 8; ++i) s |= static_cast<std::uint64_t>(frame[5 + i]) << (8 * i);
  return s;
}

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// ServingModel / CloudServer
// ---------------------------------------------------------------------------

std::shared_ptr<const ServingModel> ServingModel::from_checkpoint(const Checkpoint& ckpt) {
  auto m = std::make_shared<ServingModel>();
  StaticDynamicSplit split = split_static_dynamic(ckpt.model.backbone, ckpt.model.spec);
  m->backbone = split.backbone;
  m->spec = split.spec;
  m->global = ckpt.model.global_params();
  if (!ckpt.model.generators.empty()) {
    SwaEnsemble ensemble{ckpt.model.generators, ckpt.model.tau};
    m->fused = combine(ensemble);
  }
  return m;
}

const GeneratorParams& ServingModel::generator() const {
  if (!fused) throw RuntimeError("checkpoint has no generators; only the static baseline can be served");
  return *fused;
}

CloudServer::CloudServer(std::shared_ptr<const ServingModel> model) : model_(std::move(model)) {
  if (!model_) throw RuntimeError("server: no model loaded");
}

CloudServer::~CloudServer() { stop(); }

std::vector<std::uint8_t> CloudServer::handle(std::span<const std::uint8_t> frame) const {
  ++requests_;
  const std::uint64_t session = session_of(frame);
  try {
    const WireMessage msg = decode(frame);
    DynamicParams params;
    if (const auto* up = std::get_if<UploadSamples>(&msg.body)) {
      for (std::uint32_t id : up->items) {
        if (id >= model_->backbone->num_items()) {
          throw ProtocolError(ProtocolError::Kind::kInvalid,
                              "upload: item id " + std::to_string(id) + " out of range");
        }
      }
      params = generate_all(up->items, model_->backbone->embedding.value, model_->generator(), model_->spec);
    } else if (const auto* emb = std::get_if<UploadEmbedding>(&msg.body)) {
      if (emb->shared.cols() != shared_dim(model_->generator())) {
        throw ProtocolError(ProtocolError::Kind::kInvalid,
                            "upload: embedding width " + std::to_string(emb->shared.cols()) + ", expected " +
                                std::to_string(shared_dim(model_->generator())));
      }
      params = generate_from_shared(emb->shared, model_->generator(), model_->spec);
    } else {
      throw ProtocolError(ProtocolError::Kind::kInvalid, "server accepts only upload frames");
    }
    ++downloads_;
    return encode(make_download_params(msg.session, std::move(params)));
  } catch (const std::exception& e) {
    ++errors_;
    return encode(make_error(session, e.what()));
  }
}

CloudServer::Counters CloudServer::counters() const {
  return {requests_.load(), downloads_.load(), errors_.load()};
}

void CloudServer::listen(std::uint16_t port) {
  if (listen_fd_ >= 0) throw RuntimeError("server: already listening");
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw RuntimeError(std::string("server: socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 16) != 0) {
    const int err = errno;
    ::close(fd);
    throw RuntimeError("server: endpoint 127.0.0.1:" + std::to_string(port) + " busy (" + std::strerror(err) + ")");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listen_fd_ = fd;
}

void CloudServer::start() {
  if (listen_fd_ < 0) throw RuntimeError("server: listen() first");
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void CloudServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conn_mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void CloudServer::serve_connection(int fd) {
  while (true) {
    auto frame = read_frame(fd);
    if (!frame) break;
    const std::vector<std::uint8_t> reply = handle(*frame);
    if (!write_all(fd, reply.data(), reply.size())) break;
  }
  std::lock_guard lock(conn_mu_);
  conn_fds_.erase(std::remove(conn_fds_.begin(), conn_fds_.end(), fd), conn_fds_.end());
  ::close(fd);
}

void CloudServer::stop() {
  if (listen_fd_ < 0) return;
  running_ = false;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (std::thread& t : workers) t.join();
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> InProcessTransport::round_trip(std::span<const std::uint8_t> frame) {
  return server_.handle(frame);
}

TcpTransport::TcpTransport(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw RuntimeError("transport: cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    const int err = errno;
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw RuntimeError("transport: cannot connect to " + host + ":" + std::to_string(port) + " (" +
                       std::strerror(err) + ")");
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpTransport::~TcpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

std::vector<std::uint8_t> TcpTransport::round_trip(std::span<const std::uint8_t> frame) {
  if (!write_all(fd_, frame.data(), frame.size())) throw RuntimeError("transport: send failed");
  auto reply = read_frame(fd_);
  if (!reply) throw RuntimeError("transport: connection closed before a reply");
  return std::move(*reply);
}

// ---------------------------------------------------------------------------
// Device client
// ---------------------------------------------------------------------------

const char* to_string(ClientMode mode) {
  switch (mode) {
    case ClientMode::kUploadSamples:
      return "duet";
    case ClientMode::kUploadEmbedding:
      return "duet-embedding";
    case ClientMode::kStatic:
      return "static";
    case ClientMode::kFinetune:
      return "finetune";
  }
  return "unknown";
}

ClientMode parse_client_mode(const std::string& name) {
  for (ClientMode m : {ClientMode::kUploadSamples, ClientMode::kUploadEmbedding, ClientMode::kStatic,
                       ClientMode::kFinetune}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mode '" + name + "' (known: duet, duet-embedding, static, finetune)");
}

DeviceClient::DeviceClient(std::shared_ptr<const ServingModel> local, ClientOptions options, Transport* transport)
    : local_(std::move(local)),
      options_(std::move(options)),
      transport_(transport),
      model_(local_->backbone, local_->spec, local_->global) {
  const bool needs_wire = options_.mode == ClientMode::kUploadSamples || options_.mode == ClientMode::kUploadEmbedding;
  if (needs_wire && !transport_) throw RuntimeError("client: DUET modes need a transport");
}

Session finetune_session(const Session& session, std::size_t num_items, std::size_t ratio, std::uint64_t seed) {
  std::vector<std::uint32_t> seen = canonical_order(session.context);
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  if (num_items - seen.size() < ratio) throw DataError("finetune: item universe too small for the ratio");
  Rng rng(Rng::derive(seed, (static_cast<std::uint64_t>(session.device) << 32) | session.id));
  Session out{session.device, session.id, session.context, {}};
  for (std::uint32_t pos : session.context) {
    out.samples.push_back({pos, 1.0f, 0});
    for (std::size_t k = 0; k < ratio;) {
      const auto item = static_cast<std::uint32_t>(rng.below(num_items));
      if (std::binary_search(seen.begin(), seen.end(), item)) continue;
      out.samples.push_back({item, 0.0f, 0});
      ++k;
    }
  }
  return out;
}

SessionMetrics DeviceClient::run_session(const Session& session, std::uint64_t session_id) {
  SessionMetrics m;
  m.session = session_id;
  std::vector<std::uint32_t> candidates;
  for (const LabeledSample& x : session.samples) {
    candidates.push_back(x.item);
    m.labels.push_back(x.label);
  }

  try {
    switch (options_.mode) {
      case ClientMode::kStatic:
        model_.install_dynamic_params(local_->global);
        break;
      case ClientMode::kFinetune: {
        const Session train = finetune_session(session, local_->backbone->num_items(), options_.finetune_ratio,
                                               options_.seed);
        FinetuneResult r = finetune_baseline(*local_->backbone, local_->global, train, options_.finetune_steps,
                                             options_.finetune_lr);
        m.compute_ms = r.wall_ms;
        model_.install_dynamic_params(std::move(r.params));
        break;
      }
      case ClientMode::kUploadSamples:
      case ClientMode::kUploadEmbedding: {
        const WireMessage up =
            options_.mode == ClientMode::kUploadSamples
                ? make_upload_samples(session_id, session.context)
                : make_upload_embedding(session_id, encode_session(session.context,
                                                                   local_->backbone->embedding.value,
                                                                   local_->generator()));
        const std::vector<std::uint8_t> frame = encode(up);
        ++requests_;
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<std::uint8_t> reply = transport_->round_trip(frame);
        m.compute_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        m.upload_bytes = frame.size();
        m.download_bytes = reply.size();
        m.modeled_delay_ms = 1000.0 * (transfer_delay(static_cast<double>(frame.size()), options_.profile) +
                                       transfer_delay(static_cast<double>(reply.size()), options_.profile)) +
                             options_.rtt_ms;
        WireMessage down = decode(reply);
        if (const auto* err = std::get_if<ErrorMessage>(&down.body)) {
          throw RuntimeError("server error: " + err->message);
        }
        auto* params = std::get_if<DownloadParams>(&down.body);
        if (!params) throw RuntimeError("server replied with a non-download frame");
        if (down.session != session_id) throw RuntimeError("server replied for a different session");
        model_.install_dynamic_params(std::move(params->params));
        break;
      }
    }
    const Tensor scores = model_.score(session.context, candidates);
    m.scores.assign(scores.data().begin(), scores.data().end());
    m.installed = model_.dynamic_params();
    try {
      m.auc = evaluate_auc(m.scores, m.labels);
    } catch (const std::invalid_argument&) {
      m.auc = std::numeric_limits<double>::quiet_NaN();
    }
  } catch (const std::exception& e) {
    m.ok = false;
    m.error = e.what();
    m.scores.clear();
    m.auc = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double evaluate_auc(std::span<const float> scores, std::span<const float> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] > 0.5f) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: needs at least one positive and one negative");
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

Report simulate(std::span<const SimulationRun> runs, std::span<const Session> test,
                std::span<const ClientMode> modes, const ClientOptions& base, ConfigEcho echo, bool timing) {
  if (runs.empty()) throw RuntimeError("simulate: no checkpoints");
  if (test.empty()) throw RuntimeError("simulate: dataset has no test sessions");
  Report report;
  report.config = std::move(echo);
  report.timing = timing;

  struct PerRun {
    double auc, up, down, delay, compute;
  };
  std::vector<std::vector<PerRun>> per_mode(modes.size());
  std::vector<ReportRow> run_rows;

  for (const SimulationRun& run : runs) {
    auto serving = ServingModel::from_checkpoint(run.checkpoint);
    CloudServer server(serving);
    InProcessTransport transport(server);
    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
      ClientOptions opts = base;
      opts.mode = modes[mi];
      DeviceClient client(serving, opts, &transport);
      std::vector<double> aucs, up, down, delay, compute;
      for (std::size_t s = 0; s < test.size(); ++s) {
        SessionMetrics m = client.run_session(test[s], s);
        if (!m.ok) throw RuntimeError("simulate: session " + std::to_string(s) + " failed: " + m.error);
        if (!std::isnan(m.auc)) aucs.push_back(m.auc);
        up.push_back(static_cast<double>(m.upload_bytes));
        down.push_back(static_cast<double>(m.download_bytes));
        delay.push_back(m.modeled_delay_ms);
        compute.push_back(m.compute_ms);
      }
      ReportRow row{to_string(modes[mi]), std::to_string(run.seed), mean(aucs), stddev(aucs),
                    mean(up),             mean(down),                mean(delay), mean(compute)};
      per_mode[mi].push_back({row.auc, row.upload_bytes, row.download_bytes, row.modeled_delay_ms, row.compute_ms});
      report.rows.push_back(std::move(row));
    }
  }
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    std::vector<double> auc, up, down, delay, compute;
    for (const PerRun& r : per_mode[mi]) {
      auc.push_back(r.auc);
      up.push_back(r.up);
      down.push_back(r.down);
      delay.push_back(r.delay);
      compute.push_back(r.compute);
    }
    report.rows.push_back({to_string(modes[mi]), "all", mean(auc), stddev(auc), mean(up), mean(down), mean(delay),
                           mean(compute)});
  }
  return report;
}

std::string to_csv(const Report& report) {
  std::string out;
  for (const auto& [key, value] : report.config) out += "# " + key + " = " + value + "\n";
  out += "mode,seed,auc,auc_std,upload_bytes,download_bytes,modeled_delay_ms,compute_ms\n";
  char buf[512];
  for (const ReportRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.1f,%.1f,%.6f,", r.mode.c_str(), r.seed.c_str(), r.auc,
                  r.auc_std, r.upload_bytes, r.download_bytes, r.modeled_delay_ms);
    out += buf;
    if (report.timing) {
      std::snprintf(buf, sizeof buf, "%.6f", r.compute_ms);
      out += buf;
    } else {
      out += "NA";
    }
    out += "\n";
  }
  return out;
}

}  // namespace duet
