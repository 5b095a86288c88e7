#pragma once

// Scorer wire protocol: newline-delimited JSON over TCP.
//   request  {"condition":[...],"prefix":[...],"top_k":int|null}
//   response {"tokens":[...],"logprobs":[...],"truncated":bool}
// Servers may answer {"error":"..."} instead of a response.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <list>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "ner_aug/scorer.hpp"

namespace ner_aug::wire {

/// Full replies from external scorers must normalize within this tolerance;
/// the client then renormalizes them exactly.
inline constexpr double kReplyTolerance = 1e-4;

inline std::string encode_request(const ScoreRequest& req) {
  nlohmann::ordered_json j;
  j["condition"] = req.condition;
  j["prefix"] = req.prefix;
  j["top_k"] = req.top_k ? nlohmann::ordered_json(*req.top_k) : nlohmann::ordered_json();
  return j.dump();
}

inline ScoreRequest decode_request(const std::string& line) {
  using C = ScorerError::Code;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ScorerError(C::ProtocolError, std::string("request is not JSON: ") + e.what());
  }
  auto strings = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_array())
      throw ScorerError(C::ProtocolError, std::string("request needs array \"") + key + "\"");
    std::vector<std::string> out;
    for (const auto& v : *it) {
      if (!v.is_string())
        throw ScorerError(C::ProtocolError, std::string("\"") + key + "\" must hold strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  if (!j.is_object()) throw ScorerError(C::ProtocolError, "request must be an object");
  ScoreRequest req;
  req.condition = strings("condition");
  req.prefix = strings("prefix");
  if (auto it = j.find("top_k"); it != j.end() && !it->is_null()) {
    if (!it->is_number_unsigned() || it->get<std::size_t>() == 0)
      throw ScorerError(C::ProtocolError, "top_k must be a positive integer or null");
    req.top_k = it->get<std::size_t>();
  }
  return req;
}

/// -inf log-probabilities are written as null.
inline std::string encode_response(const ScoreResponse& r) {
  nlohmann::ordered_json j;
  j["tokens"] = r.tokens;
  auto lps = nlohmann::ordered_json::array();
  for (double x : r.logprobs)
    lps.push_back(std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json());
  j["logprobs"] = std::move(lps);
  j["truncated"] = r.truncated;
  return j.dump();
}

inline std::string encode_error(const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = message;
  return j.dump();
}

/// Parses and checks a reply against `req`. Full replies are renormalized.
inline ScoreResponse decode_response(const std::string& line, const ScoreRequest& req) {
  using C = ScorerError::Code;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ScorerError(C::ProtocolError, std::string("reply is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ScorerError(C::ProtocolError, "reply must be an object");
  if (auto it = j.find("error"); it != j.end())
    throw ScorerError(C::ServerError,
                      "server error: " + (it->is_string() ? it->get<std::string>() : it->dump()));
  auto tok = j.find("tokens");
  auto lps = j.find("logprobs");
  auto trunc = j.find("truncated");
  if (tok == j.end() || !tok->is_array() || lps == j.end() || !lps->is_array() ||
      trunc == j.end() || !trunc->is_boolean())
    throw ScorerError(C::ProtocolError, "reply needs tokens, logprobs and truncated");
  if (tok->size() != lps->size())
    throw ScorerError(C::ProtocolError, "tokens and logprobs differ in length");
  if (tok->empty()) throw ScorerError(C::ProtocolError, "empty distribution");

  ScoreResponse r;
  r.truncated = trunc->get<bool>();
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tok->size(); ++i) {
    const auto& t = (*tok)[i];
    const auto& v = (*lps)[i];
    if (!t.is_string()) throw ScorerError(C::ProtocolError, "tokens must be strings");
    if (!seen.insert(t.get<std::string>()).second)
      throw ScorerError(C::ProtocolError, "duplicate token '" + t.get<std::string>() + "'");
    double x;
    if (v.is_null()) {
      x = -std::numeric_limits<double>::infinity();
    } else if (v.is_number()) {
      x = v.get<double>();
      if (std::isnan(x) || x > 1e-9)
        throw ScorerError(C::ProtocolError, "log-probability out of range");
    } else {
      throw ScorerError(C::ProtocolError, "logprobs must be numbers");
    }
    r.tokens.push_back(t.get<std::string>());
    r.logprobs.push_back(x);
  }
  if (req.top_k && r.tokens.size() > *req.top_k)
    throw ScorerError(C::ProtocolError, "reply has more than top_k entries");
  if (!r.truncated) {
    const double z = logsumexp(r.logprobs);
    if (!(std::abs(z) <= kReplyTolerance))
      throw ScorerError(C::ProtocolError,
                        "full reply is not normalized (logsumexp " + std::to_string(z) + ")");
    for (auto& x : r.logprobs) x -= z;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Sockets

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host;
  std::string port;

  /// Accepts "tcp://host:port" or "host:port".
  static Endpoint parse(std::string s) {
    if (s.rfind("tcp://", 0) == 0) s = s.substr(6);
    const auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
      throw Error("endpoint must look like host:port, got '" + s + "'");
    return {s.substr(0, colon), s.substr(colon + 1)};
  }

  std::string str() const { return host + ":" + port; }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() > 0 ? static_cast<int>(left.count()) : 0;
}

/// Waits for `events` on fd; false on timeout.
inline bool wait_fd(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) return false;
  }
}

inline void send_all(int fd, const std::string& data, Clock::time_point deadline,
                     const std::string& context) {
  std::size_t off = 0;
  while (off < data.size()) {
    if (!wait_fd(fd, POLLOUT, deadline))
      throw ScorerError(ScorerError::Code::Timeout, "timed out sending to " + context);
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ScorerError(ScorerError::Code::ServerError,
                        "send to " + context + " failed: " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

/// Reads up to and excluding the next '\n'. `buffer` keeps bytes past it.
/// Returns false on orderly EOF before any newline.
inline bool read_line(int fd, std::string& buffer, std::string& line,
                      Clock::time_point deadline, const std::string& context,
                      bool timeout_is_error = true) {
  for (;;) {
    if (auto nl = buffer.find('\n'); nl != std::string::npos) {
      line = buffer.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      buffer.erase(0, nl + 1);
      return true;
    }
    if (!wait_fd(fd, POLLIN, deadline)) {
      if (!timeout_is_error) return false;
      throw ScorerError(ScorerError::Code::Timeout, "timed out waiting for " + context);
    }
    char chunk[4096];
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw ScorerError(ScorerError::Code::ServerError,
                        "recv from " + context + " failed: " + std::strerror(errno));
    }
    if (n == 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

inline Socket connect_to(const Endpoint& ep, Clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(ep.host.c_str(), ep.port.c_str(), &hints, &res); rc != 0)
    throw ScorerError(ScorerError::Code::Unreachable,
                      "cannot resolve " + ep.str() + ": " + ::gai_strerror(rc));
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);

  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
    if (!s.valid()) continue;
    ::fcntl(s.fd(), F_SETFL, ::fcntl(s.fd(), F_GETFL) | O_NONBLOCK);
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) return s;
    if (errno != EINPROGRESS) {
      last_error = std::strerror(errno);
      continue;
    }
    if (!wait_fd(s.fd(), POLLOUT, deadline))
      throw ScorerError(ScorerError::Code::Timeout, "timed out connecting to " + ep.str());
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err == 0) return s;
    last_error = std::strerror(err);
  }
  throw ScorerError(ScorerError::Code::Unreachable,
                    "cannot connect to " + ep.str() + ": " + last_error);
}

}  // namespace detail

/// Client for an external scorer. Each request uses its own connection and
/// deadline, so concurrent callers never share state.
class ExternalScorer final : public Scorer {
 public:
  ExternalScorer(Endpoint endpoint, std::chrono::milliseconds timeout)
      : endpoint_(std::move(endpoint)), timeout_(timeout) {}

  ScoreResponse score(const ScoreRequest& req) const override {
    check_request(req);
    const auto deadline = detail::Clock::now() + timeout_;
    const std::string context = endpoint_.str();
    try {
      Socket s = detail::connect_to(endpoint_, deadline);
      detail::send_all(s.fd(), encode_request(req) + "\n", deadline, context);
      std::string buffer, line;
      if (!detail::read_line(s.fd(), buffer, line, deadline, context))
        throw ScorerError(ScorerError::Code::ProtocolError,
                          "connection closed before a complete reply");
      return decode_response(line, req);
    } catch (const ScorerError& e) {
      throw ScorerError(e.code(), std::string(e.what()) + " [prefix length " +
                                      std::to_string(req.prefix.size()) + "]");
    }
  }

  const Endpoint& endpoint() const { return endpoint_; }

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

// ---------------------------------------------------------------------------

/// Line-oriented TCP server on a background thread. The handler maps one
/// request line to one reply line (without the trailing newline).
class LineServer {
 public:
  using Handler = std::function<std::string(const std::string&)>;

  LineServer(Handler handler, const std::string& host = "127.0.0.1", std::uint16_t port = 0)
      : handler_(std::move(handler)) {
    listener_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!listener_.valid()) throw Error("socket() failed");
    int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
      throw Error("bad bind address '" + host + "'");
    if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
      throw Error(std::string("bind failed: ") + std::strerror(errno));
    if (::listen(listener_.fd(), 64) != 0)
      throw Error(std::string("listen failed: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    host_ = host;
    thread_ = std::thread([this] { accept_loop(); });
  }

  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  ~LineServer() { stop(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(listener_.fd(), SHUT_RDWR);
    if (thread_.joinable()) thread_.join();
    std::list<Worker> workers;
    {
      std::lock_guard lock(mu_);
      workers.swap(workers_);
    }
    for (auto& w : workers) w.thread.join();
  }

  std::uint16_t port() const { return port_; }
  Endpoint endpoint() const { return {host_, std::to_string(port_)}; }

 private:
  void accept_loop() {
    while (!stopping_) {
      pollfd p{listener_.fd(), POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
      if (fd < 0) continue;
      std::lock_guard lock(mu_);
      reap_finished();
      auto& w = workers_.emplace_back();
      w.thread = std::thread([this, fd, done = w.done] {
        serve(Socket(fd));
        done->store(true);
      });
    }
  }

  void serve(Socket s) {
    std::string buffer, line;
    while (!stopping_) {
      const auto deadline = detail::Clock::now() + std::chrono::milliseconds(100);
      bool got;
      try {
        got = detail::read_line(s.fd(), buffer, line, deadline, "client",
                                /*timeout_is_error=*/false);
      } catch (const Error&) {
        return;
      }
      if (!got) {
        // Distinguish idle timeout from EOF by peeking.
        char c;
        ssize_t n = ::recv(s.fd(), &c, 1, MSG_PEEK | MSG_DONTWAIT);
        if (n == 0 || (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK)) return;
        continue;
      }
      std::string reply;
      try {
        reply = handler_(line);
      } catch (const std::exception& e) {
        reply = encode_error(e.what());
      }
      try {
        detail::send_all(s.fd(), reply + "\n",
                         detail::Clock::now() + std::chrono::seconds(10), "client");
      } catch (const Error&) {
        return;
      }
    }
  }

  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done = std::make_shared<std::atomic<bool>>(false);
  };

  // Caller holds mu_.
  void reap_finished() {
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (it->done->load()) {
        it->thread.join();
        it = workers_.erase(it);
      } else {
        ++it;
      }
    }
  }

  Handler handler_;
  Socket listener_;
  std::string host_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
  std::mutex mu_;
  std::list<Worker> workers_;
};

/// Handler that answers protocol requests from an in-process scorer.
template <TokenScorer S>
LineServer::Handler scorer_handler(const S& scorer) {
  return [&scorer](const std::string& line) {
    return encode_response(scorer.score(decode_request(line)));
  };
}

}  // namespace ner_aug::wire
