#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "linex/blackbox.hpp"

namespace linex {

using json = nlohmann::json;

namespace {

void ignore_sigpipe() {
  static const bool once = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

}  // namespace

SubprocessBlackBox::SubprocessBlackBox(std::vector<std::string> command, SubprocessOptions options)
    : options_(options) {
  if (command.empty()) throw SpawnError("empty command");
  if (options_.max_batch_rows == 0) throw ConfigError("max_batch_rows must be positive");
  ignore_sigpipe();

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (pipe(in_pipe) != 0) throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  }
  // Reports exec failure from the child: closes on successful exec.
  if (pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw SpawnError(std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<char*> argv;
  for (auto& s : command) argv.push_back(s.data());
  argv.push_back(nullptr);

  pid_ = fork();
  if (pid_ < 0) throw SpawnError(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0]}) close(fd);
    execvp(argv[0], argv.data());
    int err = errno;
    ssize_t ignored = write(err_pipe[1], &err, sizeof err);
    (void)ignored;
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];

  int child_errno = 0;
  ssize_t got = read(err_pipe[0], &child_errno, sizeof child_errno);
  close(err_pipe[0]);
  if (got == static_cast<ssize_t>(sizeof child_errno)) {
    shutdown();
    throw SpawnError("cannot execute '" + command.front() + "': " + std::strerror(child_errno));
  }

  try {
    send_line(json{{"op", "meta"}}.dump());
    json meta = json::parse(read_line());
    if (!meta.is_object() || !meta.contains("d") || !meta["d"].is_number_integer() || meta["d"].get<long>() < 1)
      throw ProtocolError("handshake reply lacks a positive integer 'd'");
    if (!meta.contains("task") || !meta["task"].is_string()) throw ProtocolError("handshake reply lacks 'task'");
    dim_ = meta["d"].get<std::size_t>();
    auto task = meta["task"].get<std::string>();
    if (task == "classification")
      task_ = Task::classification;
    else if (task == "regression")
      task_ = Task::regression;
    else
      throw ProtocolError("handshake task must be classification or regression, got '" + task + "'");
    if (meta.contains("classes")) {
      if (!meta["classes"].is_number_integer()) throw ProtocolError("handshake 'classes' must be an integer");
      classes_ = meta["classes"].get<std::size_t>();
    }
  } catch (const json::exception& e) {
    shutdown();
    throw ProtocolError(std::string("malformed handshake reply: ") + e.what());
  } catch (...) {
    shutdown();
    throw;
  }
}

SubprocessBlackBox::~SubprocessBlackBox() { shutdown(); }

void SubprocessBlackBox::shutdown() noexcept {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    // give the child a moment to exit on EOF before killing it
    for (int i = 0; i < 50; ++i) {
      if (waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return;
      }
      usleep(2000);
    }
    kill(pid_, SIGKILL);
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

void SubprocessBlackBox::send_line(const std::string& line) const {
  std::string msg = line + "\n";
  std::size_t off = 0;
  while (off < msg.size()) {
    ssize_t w = write(to_child_, msg.data() + off, msg.size() - off);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("write to child failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(w);
  }
}

std::string SubprocessBlackBox::read_line() const {
  auto deadline = std::chrono::steady_clock::now() + options_.timeout;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimeoutError("child did not reply within timeout");
    pollfd pfd{from_child_, POLLIN, 0};
    int r = poll(&pfd, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (r == 0) throw TimeoutError("child did not reply within timeout");
    char chunk[65536];
    ssize_t got = read(from_child_, chunk, sizeof chunk);
    if (got < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("read from child failed: ") + std::strerror(errno));
    }
    if (got == 0) throw ProtocolError("child closed its stdout");
    buffer_.append(chunk, static_cast<std::size_t>(got));
  }
}

std::vector<double> SubprocessBlackBox::predict_batch(const Matrix& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != dim_)
    throw ConfigError("subprocess black-box expects " + std::to_string(dim_) + " features");
  std::lock_guard lock(mu_);
  if (broken_) throw ProtocolError("subprocess black-box is unusable after an earlier protocol failure");

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  try {
    for (Eigen::Index start = 0; start < rows.rows(); start += static_cast<Eigen::Index>(options_.max_batch_rows)) {
      Eigen::Index count = std::min<Eigen::Index>(static_cast<Eigen::Index>(options_.max_batch_rows), rows.rows() - start);
      json x = json::array();
      for (Eigen::Index i = start; i < start + count; ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < rows.cols(); ++j) row.push_back(rows(i, j));
        x.push_back(std::move(row));
      }
      const std::int64_t id = next_id_++;
      send_line(json{{"op", "predict"}, {"id", id}, {"x", std::move(x)}}.dump());

      json reply;
      try {
        reply = json::parse(read_line());
      } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed reply: ") + e.what());
      }
      if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer())
        throw ProtocolError("reply lacks an integer 'id'");
      if (reply["id"].get<std::int64_t>() != id)
        throw ProtocolError("reply id " + reply["id"].dump() + " does not match request id " + std::to_string(id));
      if (!reply.contains("y") || !reply["y"].is_array()) throw ProtocolError("reply lacks array 'y'");
      const auto& y = reply["y"];
      if (static_cast<Eigen::Index>(y.size()) != count)
        throw ProtocolError("reply has " + std::to_string(y.size()) + " values for " + std::to_string(count) + " rows");
      for (const auto& v : y) {
        if (!v.is_number()) throw ProtocolError("reply value is not a number");
        double d = v.get<double>();
        if (!std::isfinite(d)) throw ProtocolError("reply value is not finite");
        out.push_back(d);
      }
    }
  } catch (...) {
    broken_ = true;
    throw;
  }
  return out;
}

BlackBoxPtr subprocess_blackbox(std::vector<std::string> command, SubprocessOptions options) {
  return std::make_shared<SubprocessBlackBox>(std::move(command), options);
}

}  // namespace linex
