#include "mbfte/adapter.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

#include "mbfte/error.hpp"

namespace mbfte {

namespace {

using json = nlohmann::json;

constexpr int kReplyTimeoutMs = 60000;

[[noreturn]] void fail(const std::string& what) { throw Error(Errc::provider_failure, "adapter: " + what); }

json parse_reply(const std::string& line) {
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::exception& e) {
    fail(std::string("malformed reply: ") + e.what());
  }
  if (!reply.is_object()) fail("reply is not a JSON object");
  if (reply.contains("error")) fail("error reply: " + reply["error"].dump());
  return reply;
}

}  // namespace

ExternalAdapterProvider::ExternalAdapterProvider(std::vector<std::string> argv) {
  if (argv.empty()) fail("empty command");
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) fail(std::strerror(errno));

  std::vector<char*> cargs;
  for (auto& a : argv) cargs.push_back(a.data());
  cargs.push_back(nullptr);

  pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    fail(std::strerror(errno));
  }
  if (pid == 0) {
    dup2(fds[1], STDIN_FILENO);
    dup2(fds[1], STDOUT_FILENO);
    execvp(cargs[0], cargs.data());
    _exit(127);
  }
  close(fds[1]);
  pid_ = pid;
  to_child_ = fds[0];
  from_child_ = fds[0];

  try {
    json hello = {{"op", "hello"}, {"protocol_version", kAdapterProtocolVersion}};
    json reply = parse_reply(exchange(hello.dump()));
    if (reply.value("protocol_version", -1) != kAdapterProtocolVersion) fail("protocol version mismatch");
    tokens_ = reply.at("tokens").get<std::vector<std::string>>();
    fingerprint_ = reply.value("fingerprint", "");
    if (tokens_.empty()) fail("hello returned no tokens");
  } catch (const json::exception& e) {
    shutdown_child();
    fail(std::string("bad hello reply: ") + e.what());
  } catch (...) {
    shutdown_child();
    throw;
  }
}

ExternalAdapterProvider::~ExternalAdapterProvider() { shutdown_child(); }

void ExternalAdapterProvider::shutdown_child() {
  if (to_child_ >= 0) {
    shutdown(to_child_, SHUT_RDWR);
    close(to_child_);
    to_child_ = from_child_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string ExternalAdapterProvider::exchange(const std::string& request) const {
  std::string line = request + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    ssize_t n = send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(std::string("write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return reply;
    }
    pollfd pfd{from_child_, POLLIN, 0};
    int ready = poll(&pfd, 1, kReplyTimeoutMs);
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail(std::string("poll failed: ") + std::strerror(errno));
    }
    if (ready == 0) fail("timed out waiting for a reply");
    char chunk[4096];
    ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(std::string("read failed: ") + std::strerror(errno));
    }
    if (n == 0) fail("process closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::vector<std::int64_t> ExternalAdapterProvider::raw_logits(std::string_view seed) const {
  std::lock_guard lock(mu_);
  std::string key(seed);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  json req = {{"op", "logits"}, {"protocol_version", kAdapterProtocolVersion}, {"seed", key}};
  json reply = parse_reply(exchange(req.dump()));
  std::vector<std::int64_t> z;
  try {
    z = reply.at("logits").get<std::vector<std::int64_t>>();
  } catch (const json::exception& e) {
    fail(std::string("bad logits reply: ") + e.what());
  }
  if (z.size() != tokens_.size()) {
    fail("logits length " + std::to_string(z.size()) + " does not match " + std::to_string(tokens_.size()) + " tokens");
  }
  cache_.emplace(std::move(key), z);
  return z;
}

std::vector<double> ExternalAdapterProvider::logits(std::string_view seed) const {
  auto raw = raw_logits(seed);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<double>(raw[i]) / 1e6;
  return out;
}

std::vector<std::string> ExternalAdapterProvider::native_tokens(std::string_view text) const {
  std::lock_guard lock(mu_);
  json req = {{"op", "tokens"}, {"protocol_version", kAdapterProtocolVersion}, {"text", std::string(text)}};
  json reply = parse_reply(exchange(req.dump()));
  try {
    return reply.at("tokens").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(std::string("bad tokens reply: ") + e.what());
  }
}

}  // namespace mbfte
