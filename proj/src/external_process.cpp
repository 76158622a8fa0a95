#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "triage/classifier.hpp"
#include "triage/error.hpp"

namespace triage {

using Clock = std::chrono::steady_clock;

struct ExternalProcessClassifier::Child {
  pid_t pid = -1;
  int fd = -1;  // our end of the socketpair; the child's stdin and stdout are the other end
  std::string buffer;

  ~Child() {
    if (fd >= 0) ::close(fd);
    if (pid > 0) {
      int status = 0;
      if (::waitpid(pid, &status, WNOHANG) == 0) {
        ::kill(pid, SIGTERM);
        ::waitpid(pid, &status, 0);
      }
    }
  }

  void send_line(const std::string& line, Clock::time_point deadline) {
    std::size_t sent = 0;
    while (sent < line.size()) {
      wait_for(POLLOUT, deadline);
      const ssize_t n = ::send(fd, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw BackendError(BackendFailure::process_failure,
                           fmt::format("external process closed its input ({})",
                                       std::strerror(errno)));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(Clock::time_point deadline) {
    while (true) {
      const auto newline = buffer.find('\n');
      if (newline != std::string::npos) {
        std::string line = buffer.substr(0, newline);
        buffer.erase(0, newline + 1);
        return line;
      }
      wait_for(POLLIN, deadline);
      char chunk[65536];
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw BackendError(BackendFailure::process_failure,
                           fmt::format("reading from external process failed ({})",
                                       std::strerror(errno)));
      }
      if (n == 0) {
        throw BackendError(BackendFailure::process_failure,
                           "external process exited before answering");
      }
      buffer.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void wait_for(short events, Clock::time_point deadline) {
    while (true) {
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (remaining.count() <= 0) {
        throw BackendError(BackendFailure::timeout, "external process timed out");
      }
      pollfd p{fd, events, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(remaining.count()));
      if (rc > 0) return;
      if (rc == 0) throw BackendError(BackendFailure::timeout, "external process timed out");
      if (errno != EINTR) {
        throw BackendError(BackendFailure::process_failure,
                           fmt::format("poll failed ({})", std::strerror(errno)));
      }
    }
  }
};

ExternalProcessClassifier::ExternalProcessClassifier(ExternalProcessOptions options)
    : options_(std::move(options)) {
  if (options_.command.empty()) throw ConfigError("external backend needs a command");
  if (options_.class_count < 2) throw ConfigError("external backend needs class_count >= 2");
  if (options_.input_shape.pixel_count() == 0) {
    throw ConfigError("external backend needs a nonzero input shape");
  }

  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw BackendError(BackendFailure::process_failure,
                       fmt::format("socketpair failed ({})", std::strerror(errno)));
  }
  std::vector<char*> argv;
  for (auto& arg : options_.command) argv.push_back(arg.data());
  argv.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    throw BackendError(BackendFailure::process_failure,
                       fmt::format("fork failed ({})", std::strerror(errno)));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }
  ::close(fds[1]);
  child_ = std::make_unique<Child>();
  child_->pid = pid;
  child_->fd = fds[0];
}

ExternalProcessClassifier::~ExternalProcessClassifier() = default;

std::string ExternalProcessClassifier::descriptor() const {
  std::string cmd;
  for (const auto& arg : options_.command) {
    if (!cmd.empty()) cmd += ' ';
    cmd += arg;
  }
  return fmt::format("external-process:{}", cmd);
}

std::vector<PredictionVector> ExternalProcessClassifier::predict_batch(
    std::span<const Query> queries) const {
  const std::lock_guard lock(mutex_);
  const auto deadline = Clock::now() + options_.batch_timeout;
  std::vector<PredictionVector> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Query& q = queries[i];
    check_input(q, i);
    try {
      const auto& shape = q.image->shape();
      const nlohmann::json request = {
          {"id", std::string(q.id)},
          {"shape", {shape.height, shape.width, shape.channels}},
          {"pixels", std::vector<double>(q.image->pixels().begin(), q.image->pixels().end())},
      };
      child_->send_line(request.dump() + "\n", deadline);
      const std::string line = child_->read_line(deadline);
      const auto response = nlohmann::json::parse(line, nullptr, false);
      if (response.is_discarded() || !response.is_object()) {
        throw BackendError(BackendFailure::protocol,
                           fmt::format("malformed response for '{}'", q.id));
      }
      if (response.value("id", std::string()) != q.id) {
        throw BackendError(BackendFailure::protocol,
                           fmt::format("response id mismatch: expected '{}'", q.id));
      }
      if (response.contains("error")) {
        throw BackendError(BackendFailure::process_failure,
                           fmt::format("external model failed on '{}': {}", q.id,
                                       response["error"].dump()));
      }
      if (!response.contains("probs") || !response["probs"].is_array()) {
        throw BackendError(BackendFailure::protocol,
                           fmt::format("response for '{}' has no probs", q.id));
      }
      auto probs = response["probs"].get<std::vector<double>>();
      if (probs.size() != options_.class_count) {
        throw BackendError(BackendFailure::protocol,
                           fmt::format("response for '{}' has {} probabilities, expected {}",
                                       q.id, probs.size(), options_.class_count));
      }
      try {
        out.emplace_back(std::move(probs));
      } catch (const ValidationError& e) {
        throw BackendError(BackendFailure::protocol,
                           fmt::format("response for '{}': {}", q.id, e.what()));
      }
    } catch (const BackendError& e) {
      throw BackendError(e.failure(), e.what(), i);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(BackendFailure::protocol,
                         fmt::format("response for '{}': {}", q.id, e.what()), i);
    }
  }
  return out;
}

}  // namespace triage
