#include "debias/external_scorer.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>

#include <nlohmann/json.hpp>

#include "debias/error.hpp"

extern char** environ;

namespace debias {

ExternalScorer::ExternalScorer(std::vector<std::string> command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
  if (command_.empty()) throw Error(ErrorCode::PROCESS_SPAWN_FAILED, "empty command");
  spawn();
  try {
    handshake();
  } catch (...) {
    shutdown();
    throw;
  }
}

ExternalScorer::~ExternalScorer() { shutdown(); }

std::vector<double> ExternalScorer::score_batch(const std::vector<std::vector<std::string_view>>& batch) const {
  std::lock_guard lock(mutex_);
  if (broken_) violation("scorer unusable after an earlier protocol failure");
  try {
    return exchange(batch);
  } catch (...) {
    broken_ = true;
    throw;
  }
}

std::vector<double> ExternalScorer::exchange(const std::vector<std::vector<std::string_view>>& batch) const {
  std::vector<double> out(batch.size(), 0.0);
  std::map<std::string, std::size_t> in_flight;  // request id -> batch index
  std::size_t next = 0;
  while (next < batch.size() || !in_flight.empty()) {
    while (next < batch.size() && in_flight.size() < static_cast<std::size_t>(concurrency_)) {
      const auto id = std::to_string(++request_counter_);
      nlohmann::json req;
      req["id"] = id;
      req["tokens"] = nlohmann::json::array();
      for (auto t : batch[next]) req["tokens"].push_back(std::string(t));
      send_line(req.dump(), id);
      in_flight.emplace(id, next++);
    }
    const auto context = "awaiting " + std::to_string(in_flight.size()) + " response(s), first id " +
                         in_flight.begin()->first;
    const auto line = read_line(Clock::now() + timeout_, context);
    nlohmann::json resp;
    try {
      resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      violation("unparseable response '" + line + "' (" + context + ")");
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_string() || !resp.contains("p_fake") ||
        !resp["p_fake"].is_number()) {
      violation("response lacks string id / numeric p_fake: " + line);
    }
    const auto id = resp["id"].get<std::string>();
    const auto it = in_flight.find(id);
    if (it == in_flight.end()) violation("response for unknown request id '" + id + "'");
    const double p = resp["p_fake"].get<double>();
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      violation("p_fake " + resp["p_fake"].dump() + " outside [0,1] for request " + id + " (" +
                std::to_string(batch[it->second].size()) + " tokens)");
    }
    out[it->second] = p;
    in_flight.erase(it);
  }
  return out;
}

void ExternalScorer::violation(const std::string& what) {
  throw Error(ErrorCode::PROTOCOL_VIOLATION, what);
}

void ExternalScorer::spawn() {
  // Writes to a dead child must surface as EPIPE, not kill us.
  static const bool sigpipe_ignored = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;

  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::PROCESS_SPAWN_FAILED, std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw Error(ErrorCode::PROCESS_SPAWN_FAILED, std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

  std::vector<char*> argv;
  for (auto& a : command_) argv.push_back(a.data());
  argv.push_back(nullptr);
  const int rc = ::posix_spawnp(&pid_, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    pid_ = -1;
    throw Error(ErrorCode::PROCESS_SPAWN_FAILED, "cannot launch '" + command_[0] + "': " + std::strerror(rc));
  }
  write_fd_ = to_child[1];
  read_fd_ = from_child[0];
}

void ExternalScorer::handshake() {
  std::string line;
  try {
    line = read_line(Clock::now() + timeout_, "handshake");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::PROTOCOL_VIOLATION) {
      // A child that dies before greeting usually failed to start.
      throw Error(ErrorCode::PROCESS_SPAWN_FAILED,
                  "'" + command_[0] + "' exited before the handshake");
    }
    throw;
  }
  nlohmann::json hello;
  try {
    hello = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    violation("bad handshake line '" + line + "'");
  }
  if (!hello.is_object() || hello.value("protocol", "") != kScorerProtocol) {
    violation("handshake must declare protocol scorer/1, got '" + line + "'");
  }
  if (hello.contains("concurrency")) {
    if (!hello["concurrency"].is_number_integer() || hello["concurrency"].get<long long>() < 1) {
      violation("handshake concurrency must be a positive integer");
    }
    concurrency_ = static_cast<int>(std::min<long long>(hello["concurrency"].get<long long>(), 1024));
  }
}

void ExternalScorer::send_line(const std::string& payload, const std::string& id) const {
  std::string data = payload + "\n";
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::write(write_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      violation("child closed its input while sending request " + id + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string ExternalScorer::read_line(Clock::time_point deadline, const std::string& context) const {
  while (true) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return line;
    }
    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      throw Error(ErrorCode::TIMEOUT, "no reply within " + std::to_string(timeout_.count()) + " ms (" +
                                          context + ")");
    }
    pollfd pfd{read_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      violation(std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;
    char chunk[4096];
    const auto n = ::read(read_fd_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      violation(std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) violation("child exited mid-stream (" + context + ")");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void ExternalScorer::shutdown() noexcept {
  if (write_fd_ >= 0) {
    ::close(write_fd_);
    write_fd_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      ::usleep(2000);
    }
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }
  if (read_fd_ >= 0) {
    ::close(read_fd_);
    read_fd_ = -1;
  }
}

}  // namespace debias
