#ifndef TRIAGE_TRANSPORT_HPP
#define TRIAGE_TRANSPORT_HPP

// Out-of-process stage-2 transports.
//
// Subprocess: the child gets requests as JSON Lines on stdin and answers one
// line per request, in order, on stdout. Closing its stdin asks it to exit.
// HTTP: POST <base>/v1/classify with the request object; 200 + response.

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "triage/cascade.hpp"
#include "triage/error.hpp"

extern char** environ;

namespace triage {

namespace detail {

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::pair<UniqueFd, UniqueFd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
  return {UniqueFd(fds[0]), UniqueFd(fds[1])};
}

}  // namespace detail

class SubprocessStage2 final : public Stage2Classifier {
 public:
  // Runs `command` through /bin/sh -c. The child inherits stderr.
  SubprocessStage2(std::string command, double timeout_seconds)
      : command_(std::move(command)), timeout_ms_(static_cast<int>(timeout_seconds * 1000.0)) {
    // Writes to a dead child must surface as EPIPE, not kill the process.
    ::signal(SIGPIPE, SIG_IGN);
    spawn();
  }

  ~SubprocessStage2() override { shutdown(); }

  SubprocessStage2(const SubprocessStage2&) = delete;
  SubprocessStage2& operator=(const SubprocessStage2&) = delete;

  std::vector<Stage2Result> classify(std::span<const Stage2Request> requests, std::size_t max_in_flight) override {
    std::lock_guard lock(mutex_);
    std::vector<Stage2Result> results(requests.size());
    const std::size_t window = std::max<std::size_t>(max_in_flight, 1);

    std::size_t next_send = 0, done = 0;
    std::deque<std::size_t> in_flight;
    std::string out;
    std::size_t out_pos = 0;

    auto fail_rest = [&](const std::string& why) {
      for (auto i : in_flight) results[i].error = why;
      for (std::size_t i = next_send; i < requests.size(); ++i) results[i].error = why;
      in_flight.clear();
      done = requests.size();
    };
    if (!broken_.empty()) {
      fail_rest(broken_);
      return results;
    }

    while (done < requests.size()) {
      if (out_pos == out.size() && next_send < requests.size() && in_flight.size() < window) {
        out = request_to_json(requests[next_send]).dump() + "\n";
        out_pos = 0;
        in_flight.push_back(next_send++);
      }
      pollfd fds[2];
      nfds_t nfds = 0;
      int write_slot = -1, read_slot = -1;
      if (out_pos < out.size()) {
        fds[nfds] = {to_child_.get(), POLLOUT, 0};
        write_slot = static_cast<int>(nfds++);
      }
      if (!in_flight.empty()) {
        fds[nfds] = {from_child_.get(), POLLIN, 0};
        read_slot = static_cast<int>(nfds++);
      }
      const int rc = ::poll(fds, nfds, timeout_ms_);
      if (rc < 0) {
        if (errno == EINTR) continue;
        mark_broken(std::string("poll: ") + std::strerror(errno));
        fail_rest(broken_);
        break;
      }
      if (rc == 0) {
        mark_broken("stage-2 subprocess timed out");
        fail_rest(broken_);
        break;
      }
      if (write_slot >= 0 && (fds[write_slot].revents & (POLLOUT | POLLERR | POLLHUP))) {
        const ssize_t n = ::write(to_child_.get(), out.data() + out_pos, out.size() - out_pos);
        if (n < 0 && errno != EAGAIN && errno != EINTR) {
          mark_broken(std::string("stage-2 subprocess closed its input: ") + std::strerror(errno));
          fail_rest(broken_);
          break;
        }
        if (n > 0) out_pos += static_cast<std::size_t>(n);
      }
      if (read_slot >= 0 && (fds[read_slot].revents & (POLLIN | POLLERR | POLLHUP))) {
        char buf[65536];
        const ssize_t n = ::read(from_child_.get(), buf, sizeof buf);
        if (n < 0 && (errno == EAGAIN || errno == EINTR)) continue;
        if (n <= 0) {
          mark_broken("stage-2 subprocess exited before answering");
          fail_rest(broken_);
          break;
        }
        pending_.append(buf, static_cast<std::size_t>(n));
        std::size_t eol;
        while (!in_flight.empty() && (eol = pending_.find('\n')) != std::string::npos) {
          const std::string line = pending_.substr(0, eol);
          pending_.erase(0, eol + 1);
          const auto i = in_flight.front();
          in_flight.pop_front();
          ++done;
          try {
            results[i].response = response_from_json(nlohmann::json::parse(line), requests[i].id);
          } catch (const std::exception& e) {
            results[i].error = std::string("malformed stage-2 response: ") + e.what();
          }
        }
      }
    }
    return results;
  }

  std::string describe() const override { return "cmd:" + command_; }

 private:
  void spawn() {
    auto [child_in, to_child] = detail::make_pipe();
    auto [from_child, child_out] = detail::make_pipe();
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, child_in.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, child_out.get(), STDOUT_FILENO);
    std::string sh = "/bin/sh", dash_c = "-c";
    char* argv[] = {sh.data(), dash_c.data(), command_.data(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw Stage2Error("cannot start stage-2 command '" + command_ + "': " + std::strerror(rc));
    to_child_ = std::move(to_child);
    from_child_ = std::move(from_child);
  }

  void mark_broken(std::string why) {
    broken_ = std::move(why);
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
    to_child_.reset();
    from_child_.reset();
  }

  void shutdown() {
    to_child_.reset();  // EOF on the child's stdin
    if (pid_ <= 0) return;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (std::chrono::steady_clock::now() < deadline) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }

  std::string command_;
  int timeout_ms_;
  pid_t pid_ = -1;
  detail::UniqueFd to_child_;
  detail::UniqueFd from_child_;
  std::string pending_;
  std::string broken_;
  std::mutex mutex_;
};

struct HttpTarget {
  std::string host_port;  // scheme://host:port
  std::string path_prefix;

  static HttpTarget parse(const std::string& url) {
    if (!url.starts_with("http://")) throw InvalidArgument("only http:// URLs are supported: '" + url + "'");
    const auto slash = url.find('/', 7);
    HttpTarget t;
    t.host_port = url.substr(0, slash);
    if (slash != std::string::npos) {
      t.path_prefix = url.substr(slash);
      while (!t.path_prefix.empty() && t.path_prefix.back() == '/') t.path_prefix.pop_back();
    }
    return t;
  }
};

class HttpStage2 final : public Stage2Classifier {
 public:
  HttpStage2(std::string base_url, double timeout_seconds)
      : base_url_(std::move(base_url)), target_(HttpTarget::parse(base_url_)), timeout_seconds_(timeout_seconds) {}

  std::vector<Stage2Result> classify(std::span<const Stage2Request> requests, std::size_t max_in_flight) override {
    std::vector<Stage2Result> results(requests.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      httplib::Client client(target_.host_port);
      const auto secs = static_cast<time_t>(timeout_seconds_);
      const auto usecs = static_cast<time_t>((timeout_seconds_ - static_cast<double>(secs)) * 1e6);
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      client.set_keep_alive(true);
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        results[i] = post_one(client, requests[i]);
      }
    };
    const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(max_in_flight, 1), requests.size());
    if (workers <= 1) {
      if (!requests.empty()) work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    }
    return results;
  }

  std::string describe() const override { return base_url_; }

 private:
  Stage2Result post_one(httplib::Client& client, const Stage2Request& request) const {
    Stage2Result r;
    auto res = client.Post(target_.path_prefix + "/v1/classify", request_to_json(request).dump(), "application/json");
    if (!res) {
      r.error = "HTTP request failed: " + httplib::to_string(res.error());
      return r;
    }
    if (res->status != 200) {
      r.error = "HTTP status " + std::to_string(res->status);
      return r;
    }
    try {
      r.response = response_from_json(nlohmann::json::parse(res->body), request.id);
    } catch (const std::exception& e) {
      r.error = std::string("malformed stage-2 response: ") + e.what();
    }
    return r;
  }

  std::string base_url_;
  HttpTarget target_;
  double timeout_seconds_;
};

// Builds the classifier an endpoint names. Builtin needs `builtin_model`.
inline std::unique_ptr<Stage2Classifier> make_stage2(const Stage2Endpoint& endpoint, double timeout_seconds,
                                                     std::shared_ptr<const ModelBundle> builtin_model = nullptr) {
  switch (endpoint.kind) {
    case Stage2Endpoint::Kind::kBuiltin:
      if (!builtin_model) throw InvalidArgument("builtin stage 2 needs a multiclass model");
      return std::make_unique<BuiltinStage2>(std::move(builtin_model));
    case Stage2Endpoint::Kind::kSubprocess:
      return std::make_unique<SubprocessStage2>(endpoint.target, timeout_seconds);
    case Stage2Endpoint::Kind::kHttp:
      return std::make_unique<HttpStage2>(endpoint.target, timeout_seconds);
  }
  throw InvalidArgument("unknown stage-2 endpoint kind");
}

}  // namespace triage

#endif  // TRIAGE_TRANSPORT_HPP
