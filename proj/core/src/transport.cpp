#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "s2g/stream.hpp"

namespace s2g {

namespace {

std::string last_error() { return std::strerror(errno); }

void close_fd(int& fd) {
  if (fd >= 0) ::close(fd);
  fd = -1;
}

}  // namespace

TcpSink::TcpSink(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw IoError(fmt::format("cannot resolve {}:{}: {}", host, port, ::gai_strerror(rc)));
  }
  std::string error = "no addresses";
  for (addrinfo* a = found; a != nullptr; a = a->ai_next) {
    fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd_ < 0) {
      error = last_error();
      continue;
    }
    if (::connect(fd_, a->ai_addr, a->ai_addrlen) == 0) break;
    error = last_error();
    close_fd(fd_);
  }
  ::freeaddrinfo(found);
  if (fd_ < 0) throw IoError(fmt::format("cannot connect to {}:{}: {}", host, port, error));
}

TcpSink::~TcpSink() { close_fd(fd_); }

void TcpSink::send(const PoseFrameMessage& message) {
  if (fd_ < 0) throw IoError("send on a closed TCP sink");
  const auto bytes = encode_frame(message);
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(fmt::format("TCP send failed: {}", last_error()));
    }
    sent += static_cast<std::size_t>(n);
  }
}

void TcpSink::close() { close_fd(fd_); }

TcpFrameListener::TcpFrameListener(std::uint16_t port, const std::string& bind_address) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw IoError(fmt::format("cannot create socket: {}", last_error()));
  const int yes = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    close_fd(fd_);
    throw InvalidArgument(fmt::format("invalid bind address {}", bind_address));
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 1) != 0) {
    const std::string error = last_error();
    close_fd(fd_);
    throw IoError(fmt::format("cannot listen on {}:{}: {}", bind_address, port, error));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpFrameListener::~TcpFrameListener() { close_fd(fd_); }

std::vector<PoseFrameMessage> TcpFrameListener::receive_all() {
  int conn = ::accept(fd_, nullptr, nullptr);
  if (conn < 0) throw IoError(fmt::format("accept failed: {}", last_error()));
  FrameReader reader;
  std::vector<PoseFrameMessage> out;
  std::array<std::uint8_t, 4096> buf{};
  for (;;) {
    const ssize_t n = ::recv(conn, buf.data(), buf.size(), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string error = last_error();
      close_fd(conn);
      throw IoError(fmt::format("TCP receive failed: {}", error));
    }
    if (n == 0) break;
    reader.feed(std::span(buf).first(static_cast<std::size_t>(n)));
    while (auto m = reader.next()) out.push_back(std::move(*m));
  }
  close_fd(conn);
  if (reader.buffered() != 0) throw FrameError(FrameErrorKind::kShortBuffer, "connection closed mid-frame");
  return out;
}

}  // namespace s2g
