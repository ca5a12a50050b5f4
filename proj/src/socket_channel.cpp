// Copyright 2026 The voltsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "voltsim/socket_channel.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>
#include <thread>

namespace voltsim {

namespace {

[[noreturn]] void sys_fail(const char* what) {
  throw Error(Errc::DeliveryFailure, std::string(what) + ": " + std::strerror(errno));
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }

 private:
  int fd_;
};

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    auto w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      sys_fail("send");
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

}  // namespace

SocketChannel::SocketChannel() {
  Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.get() < 0) sys_fail("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) sys_fail("bind");
  if (::listen(listener.get(), 1) != 0) sys_fail("listen");
  socklen_t len = sizeof addr;
  if (::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    sys_fail("getsockname");
  }
  port_ = ntohs(addr.sin_port);

  Fd tx(::socket(AF_INET, SOCK_STREAM, 0));
  if (tx.get() < 0) sys_fail("socket");
  if (::connect(tx.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) sys_fail("connect");
  Fd rx(::accept(listener.get(), nullptr, nullptr));
  if (rx.get() < 0) sys_fail("accept");
  int one = 1;
  ::setsockopt(tx.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  tx_ = tx.release();
  rx_ = rx.release();
}

SocketChannel::~SocketChannel() {
  if (tx_ >= 0) ::close(tx_);
  if (rx_ >= 0) ::close(rx_);
}

void SocketChannel::read_exact(std::uint8_t* out, std::size_t n) {
  while (n > 0) {
    auto r = ::recv(rx_, out, n, 0);
    if (r == 0) throw Error(Errc::DeliveryFailure, "peer closed mid-frame");
    if (r < 0) {
      if (errno == EINTR) continue;
      sys_fail("recv");
    }
    out += r;
    n -= static_cast<std::size_t>(r);
  }
}

Frame SocketChannel::roundtrip(ByteView frame_bytes) {
  auto writer = std::async(std::launch::async, [this, frame_bytes] {
    write_all(tx_, frame_bytes.data(), frame_bytes.size());
  });
  std::uint8_t header[kFrameHeader];
  Frame out;
  try {
    read_exact(header, kFrameHeader);
    ByteReader r(ByteView(header, kFrameHeader), Errc::MalformedFrame);
    auto length = r.u32();
    auto tag = r.u8();
    if (tag == 0 || tag > kMaxMessageKind) throw Error(Errc::MalformedFrame, "unregistered tag");
    out.kind = static_cast<MessageKind>(tag);
    out.payload.resize(length);
    read_exact(out.payload.data(), length);
  } catch (...) {
    writer.wait();
    throw;
  }
  writer.get();
  moved_ += frame_bytes.size();
  return out;
}

}  // namespace voltsim
