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

// A connected pair of loopback TCP sockets. Frames written on one end are
// read back, frame by frame, on the other.

#pragma once

#include "voltsim/transport.hpp"

namespace voltsim {

class SocketChannel {
 public:
  SocketChannel();
  ~SocketChannel();
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;

  std::uint16_t port() const { return port_; }

  /// Writes `frame_bytes` on the sending end (from a writer thread, so large
  /// frames cannot deadlock on socket buffers) and returns the frame read
  /// back on the receiving end.
  Frame roundtrip(ByteView frame_bytes);
  std::uint64_t bytes_moved() const { return moved_; }

 private:
  void read_exact(std::uint8_t* out, std::size_t n);

  int tx_ = -1;
  int rx_ = -1;
  std::uint16_t port_ = 0;
  std::uint64_t moved_ = 0;
};

}  // namespace voltsim
