// Copyright (C) 2026 syncsde contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "syncsde/error.hpp"
#include "syncsde/grid.hpp"
#include "syncsde/protocol.hpp"
#include "syncsde/score_model.hpp"

namespace syncsde {

// Bidirectional byte stream over one socket. Owns the descriptor and, for
// stdio providers, the child process.
class Connection {
 public:
  explicit Connection(int fd, pid_t child = -1) : fd_(fd), child_(child) {}
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection() {
    if (fd_ >= 0) ::close(fd_);
    if (child_ > 0) {
      int status = 0;
      if (::waitpid(child_, &status, WNOHANG) == 0) {
        ::kill(child_, SIGTERM);
        ::waitpid(child_, &status, 0);
      }
    }
  }

  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }

  void write_all(std::string_view bytes) {
    while (!bytes.empty()) {
      const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  void read_exact(char* out, std::size_t len) {
    while (len > 0) {
      pollfd p{fd_, POLLIN, 0};
      const int ready = ::poll(&p, 1, static_cast<int>(timeout_.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (ready == 0) throw TransportError("timed out waiting for provider");
      const ssize_t n = ::recv(fd_, out, len, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("provider closed the connection");
      out += n;
      len -= static_cast<std::size_t>(n);
    }
  }

  void send_message(const nlohmann::json& m) { write_all(protocol::frame(m)); }

  nlohmann::json receive_message() {
    unsigned char header[4];
    read_exact(reinterpret_cast<char*>(header), 4);
    std::string body(protocol::frame_length(header), '\0');
    read_exact(body.data(), body.size());
    auto parsed = nlohmann::json::parse(body, nullptr, false);
    if (parsed.is_discarded()) throw ProviderContractError("provider sent unparseable JSON");
    return parsed;
  }

 private:
  int fd_;
  pid_t child_;
  std::chrono::milliseconds timeout_{30000};
};

inline std::unique_ptr<Connection> connect_tcp(const std::string& host, const std::string& port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  std::string last = "no addresses";
  for (addrinfo* a = res; a; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) return std::make_unique<Connection>(fd);
    last = std::strerror(errno);
    ::close(fd);
  }
  throw TransportError("cannot connect to " + host + ":" + port + ": " + last);
}

// Launches `argv` with its stdin and stdout bound to one end of a socket pair.
inline std::unique_ptr<Connection> spawn_stdio(const std::vector<std::string>& argv) {
  if (argv.empty()) throw ConfigError("models.endpoint", "empty provider command");
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
    throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw TransportError(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::close(sv[0]);
    ::close(sv[1]);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(sv[1]);
  return std::make_unique<Connection>(sv[0], pid);
}

// "tcp://host:port" or "stdio:command arg ...".
inline std::unique_ptr<Connection> open_endpoint(std::string_view endpoint) {
  constexpr std::string_view tcp = "tcp://", stdio = "stdio:";
  if (endpoint.starts_with(tcp)) {
    const auto rest = endpoint.substr(tcp.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos) throw ConfigError("models.endpoint", "tcp endpoint needs host:port");
    return connect_tcp(std::string(rest.substr(0, colon)), std::string(rest.substr(colon + 1)));
  }
  if (endpoint.starts_with(stdio)) {
    std::vector<std::string> argv;
    std::string cur;
    for (char ch : endpoint.substr(stdio.size())) {
      if (ch == ' ') {
        if (!cur.empty()) argv.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) argv.push_back(std::move(cur));
    return spawn_stdio(argv);
  }
  throw ConfigError("models.endpoint", "unsupported endpoint '" + std::string(endpoint) + "'");
}

// Client side of one provider session. Calls are serialized per connection
// so messages never interleave; a transport failure poisons the session.
class ProviderClient {
 public:
  ProviderClient(std::unique_ptr<Connection> conn, std::string schedule_digest)
      : conn_(std::move(conn)), digest_(std::move(schedule_digest)) {
    handshake();
  }

  const std::vector<std::string>& conditions() const noexcept { return conditions_; }

  Grid epsilon(const Grid& y, int t, double alpha_t, std::string_view cond) {
    const std::uint64_t id = next_id_.fetch_add(1);
    const auto request = protocol::eps_request(id, t, alpha_t, cond, y);
    nlohmann::json reply;
    {
      std::lock_guard lock(mutex_);
      if (broken_) throw TransportError("provider session is closed after an earlier transport failure");
      try {
        conn_->send_message(request);
        reply = conn_->receive_message();
      } catch (const TransportError&) {
        broken_ = true;
        throw;
      } catch (const ProviderContractError&) {
        broken_ = true;
        throw;
      }
    }
    return protocol::decode_eps(reply, id, y.shape());
  }

 private:
  void handshake() {
    conn_->send_message(protocol::hello(digest_));
    const auto reply = conn_->receive_message();
    const auto type = protocol::message_type(reply);
    if (type == "error") throw HandshakeError("provider refused handshake: " + reply.value("message", std::string()));
    if (type != "ready") throw HandshakeError("expected 'ready', got '" + type + "'");
    if (!reply.contains("conditions") || !reply["conditions"].is_array())
      throw HandshakeError("ready message lacks a conditions list");
    conditions_ = reply["conditions"].get<std::vector<std::string>>();
  }

  std::unique_ptr<Connection> conn_;
  std::string digest_;
  std::vector<std::string> conditions_;
  std::mutex mutex_;
  bool broken_ = false;
  std::atomic<std::uint64_t> next_id_{1};
};

// ScoreModel backed by a provider session.
class RemoteScore final : public ScoreModel {
 public:
  explicit RemoteScore(std::shared_ptr<ProviderClient> client) : client_(std::move(client)) {}

  Grid epsilon(const Grid& y, int t, double alpha_t, std::string_view cond) const override {
    return client_->epsilon(y, t, alpha_t, cond);
  }

 private:
  std::shared_ptr<ProviderClient> client_;
};

inline Grid remote_epsilon(ProviderClient& client, const Grid& y, int t, double alpha_t, std::string_view cond) {
  return client.epsilon(y, t, alpha_t, cond);
}

}  // namespace syncsde
