#include "vsem/provider.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>
#include <map>
#include <nlohmann/json.hpp>

#include "vsem/codec.hpp"

namespace vsem {

using json = nlohmann::json;

std::vector<EmbeddingVector> EmbeddingProvider::embed_texts(std::span<const TextItem> items) {
  std::vector<EmbeddingVector> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(embed_text(item.text, item.lang));
  return out;
}

// ---- MockProvider -----------------------------------------------------------

MockProvider::MockProvider(std::size_t dim, std::map<std::string, EmbeddingVector> text_table,
                           std::map<std::string, EmbeddingVector> image_table)
    : dim_(dim), normalized_(true), text_table_(std::move(text_table)),
      image_table_(std::move(image_table)) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidValue, "provider dim must be positive");
  for (const auto* table : {&text_table_, &image_table_}) {
    for (const auto& [key, v] : *table) {
      if (v.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch, "table entry '" + key + "' has dim " +
                                                      std::to_string(v.dim()));
      }
      if (std::abs(v.norm() - 1.0) > kUnitNormTolerance) normalized_ = false;
    }
  }
}

EmbeddingVector MockProvider::hash_vector(std::string_view domain,
                                          std::span<const std::uint8_t> input, std::size_t dim) {
  std::vector<std::uint8_t> buf(domain.begin(), domain.end());
  buf.push_back(0);
  buf.insert(buf.end(), input.begin(), input.end());
  const std::size_t counter_at = buf.size();
  buf.resize(buf.size() + 4);

  std::vector<double> raw;
  raw.reserve(dim);
  for (std::uint32_t block = 0; raw.size() < dim; ++block) {
    for (int i = 0; i < 4; ++i) buf[counter_at + i] = static_cast<std::uint8_t>(block >> (24 - 8 * i));
    const auto digest = sha256(buf);
    for (std::size_t w = 0; w < 8 && raw.size() < dim; ++w) {
      const std::uint32_t u = (std::uint32_t{digest[4 * w]} << 24) |
                              (std::uint32_t{digest[4 * w + 1]} << 16) |
                              (std::uint32_t{digest[4 * w + 2]} << 8) | digest[4 * w + 3];
      raw.push_back(static_cast<double>(u) / 4294967296.0 * 2.0 - 1.0);
    }
  }
  const double n = l2_norm(std::span<const double>(raw));
  std::vector<float> values(dim);
  for (std::size_t i = 0; i < dim; ++i) values[i] = static_cast<float>(raw[i] / n);
  return EmbeddingVector(std::move(values));
}

EmbeddingVector MockProvider::embed_text(std::string_view text, std::string_view /*lang*/) {
  if (auto it = text_table_.find(std::string(text)); it != text_table_.end()) return it->second;
  return hash_vector("text", as_bytes(text), dim_);
}

EmbeddingVector MockProvider::embed_image(std::span<const std::uint8_t> bytes) {
  if (!image_table_.empty()) {
    if (auto it = image_table_.find(sha1_hex(bytes)); it != image_table_.end()) return it->second;
  }
  return hash_vector("image", bytes, dim_);
}

// ---- ExternalProvider -------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

EmbeddingVector parse_vector(const json& arr, std::size_t dim, const std::string& id) {
  if (!arr.is_array()) throw Error(ErrorCode::ProtocolError, "response " + id + ": vector is not an array");
  std::vector<float> values;
  values.reserve(arr.size());
  for (const auto& x : arr) {
    if (!x.is_number()) throw Error(ErrorCode::ProtocolError, "response " + id + ": non-numeric component");
    values.push_back(x.get<float>());
  }
  if (values.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "response " + id + " has " +
                                                  std::to_string(values.size()) + " values, expected " +
                                                  std::to_string(dim));
  }
  try {
    return EmbeddingVector(std::move(values));
  } catch (const Error& e) {
    throw Error(ErrorCode::ProtocolError, "response " + id + ": " + e.what());
  }
}

}  // namespace

ExternalProvider::ExternalProvider(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  int sv[2];
  if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw Error(ErrorCode::ProviderCrash, std::string("socketpair: ") + std::strerror(errno));
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(sv[0]);
    close(sv[1]);
    throw Error(ErrorCode::ProviderCrash, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    // Own process group, so shutdown also reaches grandchildren of the shell.
    setpgid(0, 0);
    dup2(sv[1], STDIN_FILENO);
    dup2(sv[1], STDOUT_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(sv[1]);
  fd_ = sv[0];
  pid_ = pid;

  try {
    const std::string line = read_line();
    json hello;
    try {
      hello = json::parse(line).at("hello");
      dim_ = hello.at("dim").get<std::size_t>();
      normalized_ = hello.value("normalized", false);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ProtocolError, "bad handshake line: " + line);
    }
    if (dim_ == 0) throw Error(ErrorCode::ProtocolError, "handshake declares dim 0");
  } catch (...) {
    shutdown_child();
    throw;
  }
}

ExternalProvider::~ExternalProvider() { shutdown_child(); }

void ExternalProvider::shutdown_child() noexcept {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_WR);
    close(fd_);
    fd_ = -1;
  }
  if (pid_ > 0) {
    int status = 0;
    bool exited = false;
    for (int i = 0; i < 50 && !exited; ++i) {
      exited = waitpid(pid_, &status, WNOHANG) == pid_;
      if (!exited) usleep(10000);
    }
    kill(-pid_, SIGKILL);
    if (exited) {
      pid_ = -1;
      return;
    }
    waitpid(pid_, &status, 0);
    pid_ = -1;
  }
}

std::string ExternalProvider::read_line() {
  const auto deadline = Clock::now() + timeout_;
  while (true) {
    if (auto nl = read_buffer_.find('\n'); nl != std::string::npos) {
      std::string line = read_buffer_.substr(0, nl);
      read_buffer_.erase(0, nl + 1);
      return line;
    }
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = poll(&pfd, 1, remaining_ms(deadline));
    if (rc == 0) throw Error(ErrorCode::Timeout, "no response from provider");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ProviderCrash, std::string("poll: ") + std::strerror(errno));
    }
    char buf[65536];
    const ssize_t n = recv(fd_, buf, sizeof(buf), 0);
    if (n == 0) throw Error(ErrorCode::ProviderCrash, "provider closed its output");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::ProviderCrash, std::string("recv: ") + std::strerror(errno));
    }
    read_buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

std::vector<EmbeddingVector> ExternalProvider::exchange(std::vector<std::string> request_lines,
                                                        const std::vector<std::string>& ids) {
  std::string outgoing;
  for (auto& line : request_lines) {
    outgoing += line;
    outgoing += '\n';
  }
  std::map<std::string, std::size_t> pending;
  for (std::size_t i = 0; i < ids.size(); ++i) pending.emplace(ids[i], i);
  std::vector<std::optional<EmbeddingVector>> results(ids.size());
  std::optional<Error> first_error;

  // Interleave writes and reads so a provider that answers before it has
  // consumed all input cannot deadlock us on a full socket buffer.
  std::size_t written = 0;
  auto deadline = Clock::now() + timeout_;
  while (!pending.empty()) {
    if (auto nl = read_buffer_.find('\n'); nl != std::string::npos) {
      const std::string line = read_buffer_.substr(0, nl);
      read_buffer_.erase(0, nl + 1);
      json resp;
      try {
        resp = json::parse(line);
      } catch (const json::exception&) {
        throw Error(ErrorCode::ProtocolError, "malformed response line: " + line);
      }
      if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_string()) {
        throw Error(ErrorCode::ProtocolError, "response without string id: " + line);
      }
      const std::string id = resp["id"].get<std::string>();
      auto it = pending.find(id);
      if (it == pending.end()) throw Error(ErrorCode::ProtocolError, "unexpected response id " + id);
      // Per-request failures leave the stream usable: remember the first one
      // and keep draining so later calls do not see stale responses.
      if (resp.contains("error")) {
        if (!first_error) {
          first_error = Error(ErrorCode::ProviderError,
                              "request " + id + ": " +
                                  (resp["error"].is_string() ? resp["error"].get<std::string>()
                                                             : resp["error"].dump()));
        }
      } else if (!resp.contains("vector")) {
        throw Error(ErrorCode::ProtocolError, "response " + id + " has no vector");
      } else {
        try {
          results[it->second] = parse_vector(resp["vector"], dim_, id);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DimensionMismatch) throw;
          if (!first_error) first_error = e;
        }
      }
      pending.erase(it);
      deadline = Clock::now() + timeout_;
      continue;
    }

    pollfd pfd{fd_, static_cast<short>(POLLIN | (written < outgoing.size() ? POLLOUT : 0)), 0};
    const int rc = poll(&pfd, 1, remaining_ms(deadline));
    if (rc == 0) throw Error(ErrorCode::Timeout, "provider did not answer within timeout");
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ProviderCrash, std::string("poll: ") + std::strerror(errno));
    }
    if ((pfd.revents & POLLOUT) && written < outgoing.size()) {
      const ssize_t n = send(fd_, outgoing.data() + written, outgoing.size() - written,
                             MSG_NOSIGNAL | MSG_DONTWAIT);
      if (n < 0 && errno != EAGAIN && errno != EINTR) {
        throw Error(ErrorCode::ProviderCrash, std::string("send: ") + std::strerror(errno));
      }
      if (n > 0) written += static_cast<std::size_t>(n);
    }
    if (pfd.revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[65536];
      const ssize_t n = recv(fd_, buf, sizeof(buf), MSG_DONTWAIT);
      if (n == 0) throw Error(ErrorCode::ProviderCrash, "provider exited mid-request");
      if (n < 0 && errno != EAGAIN && errno != EINTR) {
        throw Error(ErrorCode::ProviderCrash, std::string("recv: ") + std::strerror(errno));
      }
      if (n > 0) read_buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }
  if (first_error) throw *first_error;
  std::vector<EmbeddingVector> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

std::vector<EmbeddingVector> ExternalProvider::exchange_or_stop(std::vector<std::string> request_lines,
                                                                const std::vector<std::string>& ids) {
  try {
    return exchange(std::move(request_lines), ids);
  } catch (const Error& e) {
    // After a timeout, crash or protocol violation the stream position is
    // unknown, so the child is retired and later calls fail fast.
    if (e.code() != ErrorCode::ProviderError && e.code() != ErrorCode::DimensionMismatch) shutdown_child();
    throw;
  }
}

EmbeddingVector ExternalProvider::embed_text(std::string_view text, std::string_view lang) {
  TextItem item{std::string(text), std::string(lang)};
  return embed_texts(std::span<const TextItem>(&item, 1)).front();
}

std::vector<EmbeddingVector> ExternalProvider::embed_texts(std::span<const TextItem> items) {
  std::lock_guard lock(mutex_);
  if (fd_ < 0) throw Error(ErrorCode::ProviderCrash, "provider is not running");
  std::vector<std::string> lines;
  std::vector<std::string> ids;
  for (const auto& item : items) {
    const std::string id = std::to_string(next_id_++);
    json req = {{"id", id}, {"kind", "text"}, {"payload", item.text}};
    if (!item.lang.empty()) req["lang"] = item.lang;
    lines.push_back(req.dump());
    ids.push_back(id);
  }
  return exchange_or_stop(std::move(lines), ids);
}

EmbeddingVector ExternalProvider::embed_image(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mutex_);
  if (fd_ < 0) throw Error(ErrorCode::ProviderCrash, "provider is not running");
  const std::string id = std::to_string(next_id_++);
  json req = {{"id", id}, {"kind", "image"}, {"payload_b64", base64_encode(bytes)}};
  return exchange_or_stop({req.dump()}, {id}).front();
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec) {
  if (spec == "mock") return std::make_unique<MockProvider>(512);
  if (spec.starts_with("mock:")) {
    std::size_t dim = 0;
    try {
      dim = std::stoul(spec.substr(5));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad mock provider spec '" + spec + "'");
    }
    return std::make_unique<MockProvider>(dim);
  }
  return std::make_unique<ExternalProvider>(spec);
}

}  // namespace vsem
