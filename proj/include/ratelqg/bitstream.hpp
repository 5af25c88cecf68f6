// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <iterator>
#include <ostream>
#include <vector>

#include "ratelqg/coding.hpp"
#include "ratelqg/errors.hpp"

namespace ratelqg {

// File layout: "RLQG", one version byte, then per step a 32-bit big-endian
// bit count followed by the codeword bits, MSB first, zero-padded to a byte.
inline constexpr char kBitstreamMagic[4] = {'R', 'L', 'Q', 'G'};
inline constexpr std::uint8_t kBitstreamVersion = 1;

inline void write_bitstream(std::ostream& os, const std::vector<Codeword>& frames) {
  os.write(kBitstreamMagic, 4);
  os.put(static_cast<char>(kBitstreamVersion));
  for (const auto& cw : frames) {
    const auto len = static_cast<std::uint32_t>(cw.size());
    const char header[4] = {static_cast<char>(len >> 24), static_cast<char>(len >> 16),
                            static_cast<char>(len >> 8), static_cast<char>(len)};
    os.write(header, 4);
    std::uint8_t byte = 0;
    for (std::size_t i = 0; i < cw.size(); ++i) {
      byte = static_cast<std::uint8_t>((byte << 1) | (cw[i] ? 1 : 0));
      if (i % 8 == 7) {
        os.put(static_cast<char>(byte));
        byte = 0;
      }
    }
    if (cw.size() % 8 != 0) os.put(static_cast<char>(byte << (8 - cw.size() % 8)));
  }
}

/// Parses a bitstream file. Errors report the bit offset into the file.
inline std::vector<Codeword> read_bitstream(std::istream& is) {
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (data.size() < 5 || !std::equal(kBitstreamMagic, kBitstreamMagic + 4, data.begin())) {
    throw DecodeError("bad magic bytes", 0);
  }
  if (data[4] != kBitstreamVersion) throw DecodeError("unsupported bitstream version", 32);
  std::vector<Codeword> frames;
  std::size_t pos = 5;
  while (pos < data.size()) {
    if (pos + 4 > data.size()) throw DecodeError("truncated frame header", pos * 8);
    const std::uint32_t len = (std::uint32_t{data[pos]} << 24) | (std::uint32_t{data[pos + 1]} << 16) |
                              (std::uint32_t{data[pos + 2]} << 8) | std::uint32_t{data[pos + 3]};
    pos += 4;
    const std::size_t nbytes = (len + 7) / 8;
    if (pos + nbytes > data.size()) throw DecodeError("frame length exceeds remaining data", pos * 8);
    Codeword cw;
    for (std::uint32_t i = 0; i < len; ++i) cw.push_back(((data[pos + i / 8] >> (7 - i % 8)) & 1u) != 0);
    if (len % 8 != 0) {
      const auto pad_mask = static_cast<std::uint8_t>((1u << (8 - len % 8)) - 1);
      if ((data[pos + nbytes - 1] & pad_mask) != 0) throw DecodeError("nonzero padding", (pos + nbytes) * 8 - 8 + len % 8);
    }
    pos += nbytes;
    frames.push_back(std::move(cw));
  }
  return frames;
}

}  // namespace ratelqg
