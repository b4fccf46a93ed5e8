#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/classifier.hpp"

namespace debias {

inline constexpr std::string_view kScorerProtocol = "scorer/1";

// Scorer backed by a child process speaking line-delimited JSON on stdio:
//   child -> {"protocol":"scorer/1","concurrency":K}      (once, at start)
//   parent -> {"id":"7","tokens":["a","b"]}
//   child -> {"id":"7","p_fake":0.42}
// Up to K requests are kept in flight and responses may come back in any
// order. Calls are serialized by an internal mutex.
class ExternalScorer final : public Scorer {
 public:
  using Clock = std::chrono::steady_clock;

  explicit ExternalScorer(std::vector<std::string> command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  ~ExternalScorer() override;

  int concurrency() const { return concurrency_; }

  double score(std::span<const std::string_view> tokens) const override {
    std::vector<std::vector<std::string_view>> one{{tokens.begin(), tokens.end()}};
    return score_batch(one).front();
  }
  using Scorer::score;

  std::vector<double> score_batch(const std::vector<std::vector<std::string_view>>& batch) const override;

 private:
  std::vector<double> exchange(const std::vector<std::vector<std::string_view>>& batch) const;
  [[noreturn]] static void violation(const std::string& what);
  void spawn();
  void handshake();
  void send_line(const std::string& payload, const std::string& id) const;
  std::string read_line(Clock::time_point deadline, const std::string& context) const;
  void shutdown() noexcept;

  std::vector<std::string> command_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  int concurrency_ = 1;
  mutable std::string buffer_;
  mutable std::mutex mutex_;
  mutable std::uint64_t request_counter_ = 0;
  mutable bool broken_ = false;
};

inline std::unique_ptr<ExternalScorer> open_external_scorer(std::vector<std::string> command,
                                                            std::chrono::milliseconds timeout =
                                                                std::chrono::seconds(30)) {
  return std::make_unique<ExternalScorer>(std::move(command), timeout);
}

}  // namespace debias
