#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipguard/error.hpp"
#include "ipguard/oracle.hpp"

namespace ipguard {

struct RemoteOracleConfig {
  std::vector<std::string> command;  // argv of the child process
  std::size_t input_dim = 0;         // 0 lets the peer adapt dimensions
  int timeout_ms = 5000;
  int retries = 2;
};

/// Oracle served by a child process speaking line-delimited JSON on stdin/stdout:
/// request {"point":[...]} and response {"label":int}. Queries are serialized.
class SubprocessOracle final : public ClassifierOracle {
 public:
  explicit SubprocessOracle(RemoteOracleConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.command.empty()) throw InputError("remote oracle command is empty");
    signal(SIGPIPE, SIG_IGN);
  }

  ~SubprocessOracle() override { stop(); }

  SubprocessOracle(const SubprocessOracle&) = delete;
  SubprocessOracle& operator=(const SubprocessOracle&) = delete;

  std::size_t input_dim() const override { return cfg_.input_dim; }
  bool concurrent_queries() const override { return false; }

  OracleDescriptor descriptor() const override {
    std::string cmd;
    for (const auto& a : cfg_.command) cmd += (cmd.empty() ? "" : " ") + a;
    return {"remote", cmd};
  }

  std::size_t query(std::span<const double> x) const override {
    std::lock_guard lock(mutex_);
    const std::string request = nlohmann::json{{"point", std::vector<double>(x.begin(), x.end())}}.dump() + "\n";
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      try {
        if (pid_ <= 0) start();
        write_all(request);
        const auto response = nlohmann::json::parse(read_line());
        const long long label = response.at("label").get<long long>();
        if (label < 0) throw Error(ErrorKind::query, "negative label from remote oracle");
        return static_cast<std::size_t>(label);
      } catch (const std::exception& e) {
        last_error = e.what();
        stop();
      }
    }
    throw Error(ErrorKind::query, "remote oracle failed after " + std::to_string(cfg_.retries + 1) +
                                      " attempts: " + last_error);
  }

 private:
  void start() const {
    int to_child[2];
    int from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) throw Error(ErrorKind::query, "pipe() failed");
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw Error(ErrorKind::query, "pipe() failed");
    }
    std::vector<char*> argv;
    for (const auto& a : cfg_.command) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const pid_t pid = fork();
    if (pid < 0) throw Error(ErrorKind::query, "fork() failed");
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execvp(argv[0], argv.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    buffer_.clear();
  }

  void stop() const {
    if (write_fd_ >= 0) close(write_fd_);
    if (read_fd_ >= 0) close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
  }

  void write_all(const std::string& s) const {
    std::size_t done = 0;
    while (done < s.size()) {
      const ssize_t w = write(write_fd_, s.data() + done, s.size() - done);
      if (w <= 0) throw Error(ErrorKind::query, "write to remote oracle failed");
      done += static_cast<std::size_t>(w);
    }
  }

  std::string read_line() const {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.timeout_ms);
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Error(ErrorKind::query, "remote oracle timed out");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready == 0) throw Error(ErrorKind::query, "remote oracle timed out");
      if (ready < 0) throw Error(ErrorKind::query, "poll() failed");
      char chunk[4096];
      const ssize_t r = read(read_fd_, chunk, sizeof chunk);
      if (r <= 0) throw Error(ErrorKind::query, "remote oracle closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(r));
    }
  }

  RemoteOracleConfig cfg_;
  mutable std::mutex mutex_;
  mutable pid_t pid_ = -1;
  mutable int write_fd_ = -1;
  mutable int read_fd_ = -1;
  mutable std::string buffer_;
};

}  // namespace ipguard
