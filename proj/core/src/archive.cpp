/*
 * Copyright 2026 The qlower Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "archive.hpp"

#include <zlib.h>

#include <fstream>

#include "qlower/error.hpp"

namespace fs = std::filesystem;

namespace qlower::detail {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kDosDate1980 = 0x21;

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

std::uint32_t get(const std::vector<std::uint8_t>& b, std::size_t at, int n) {
  require(at + static_cast<std::size_t>(n) <= b.size(), ErrorKind::kParse,
          "truncated zip archive");
  std::uint32_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint32_t{b[at + i]} << (8 * i);
  return v;
}

std::vector<std::uint8_t> inflate_raw(const std::uint8_t* data, std::size_t n,
                                      std::size_t out_size) {
  std::vector<std::uint8_t> out(out_size);
  z_stream zs{};
  require(inflateInit2(&zs, -MAX_WBITS) == Z_OK, ErrorKind::kParse,
          "zlib init failed");
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  require(rc == Z_STREAM_END, ErrorKind::kParse, "corrupt deflate stream in zip");
  return out;
}

}  // namespace

std::vector<std::uint8_t> zip_encode(const FileMap& files) {
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> central;
  std::uint16_t count = 0;
  for (const auto& [name, data] : files) {
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, data.data(), static_cast<uInt>(data.size())));
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto size = static_cast<std::uint32_t>(data.size());
    put32(out, kLocalSig);
    put16(out, 20);
    put16(out, 0);
    put16(out, 0);  // stored
    put16(out, 0);
    put16(out, kDosDate1980);
    put32(out, crc);
    put32(out, size);
    put32(out, size);
    put16(out, static_cast<std::uint16_t>(name.size()));
    put16(out, 0);
    out.insert(out.end(), name.begin(), name.end());
    out.insert(out.end(), data.begin(), data.end());

    put32(central, kCentralSig);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, kDosDate1980);
    put32(central, crc);
    put32(central, size);
    put32(central, size);
    put16(central, static_cast<std::uint16_t>(name.size()));
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put16(central, 0);
    put32(central, 0);
    put32(central, offset);
    central.insert(central.end(), name.begin(), name.end());
    ++count;
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out.insert(out.end(), central.begin(), central.end());
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, count);
  put16(out, count);
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

FileMap zip_decode(const std::vector<std::uint8_t>& b) {
  require(b.size() >= 22, ErrorKind::kParse, "file too small to be a zip archive");
  std::size_t end = b.size() - 22;
  while (get(b, end, 4) != kEndSig) {
    require(end > 0 && b.size() - end < 22 + 65536, ErrorKind::kParse,
            "zip end-of-central-directory record not found");
    --end;
  }
  const auto entries = get(b, end + 10, 2);
  std::size_t at = get(b, end + 16, 4);
  FileMap files;
  for (std::uint32_t i = 0; i < entries; ++i) {
    require(get(b, at, 4) == kCentralSig, ErrorKind::kParse,
            "bad zip central directory entry");
    const auto method = get(b, at + 10, 2);
    const auto comp = get(b, at + 20, 4);
    const auto plain = get(b, at + 24, 4);
    const auto name_len = get(b, at + 28, 2);
    const auto extra_len = get(b, at + 30, 2);
    const auto comment_len = get(b, at + 32, 2);
    const auto local = get(b, at + 42, 4);
    require(at + 46 + name_len <= b.size(), ErrorKind::kParse, "truncated zip");
    std::string name(b.begin() + static_cast<std::ptrdiff_t>(at + 46),
                     b.begin() + static_cast<std::ptrdiff_t>(at + 46 + name_len));
    at += 46 + name_len + extra_len + comment_len;

    require(get(b, local, 4) == kLocalSig, ErrorKind::kParse,
            "bad zip local header for '" + name + "'");
    const std::size_t data_at =
        local + 30 + get(b, local + 26, 2) + get(b, local + 28, 2);
    require(data_at + comp <= b.size(), ErrorKind::kParse,
            "truncated zip entry '" + name + "'");
    if (!name.empty() && name.back() == '/') continue;
    if (method == 0) {
      files[name] = std::vector<std::uint8_t>(
          b.begin() + static_cast<std::ptrdiff_t>(data_at),
          b.begin() + static_cast<std::ptrdiff_t>(data_at + comp));
    } else if (method == 8) {
      files[name] = inflate_raw(b.data() + data_at, comp, plain);
    } else {
      fail(ErrorKind::kParse, "unsupported zip compression method " +
                                  std::to_string(method) + " for '" + name + "'");
    }
  }
  return files;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo,
          "cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo,
          "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo,
          "write failed for '" + path.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_container(const fs::path& path, const FileMap& files) {
  if (path.extension() == ".zip") {
    write_file(path, zip_encode(files));
    return;
  }
  std::error_code ec;
  fs::create_directories(path, ec);
  require(fs::is_directory(path), ErrorKind::kIo,
          "cannot create directory '" + path.string() + "'");
  for (const auto& [rel, data] : files) write_file(path / rel, data);
}

FileMap read_container(const fs::path& path) {
  require(fs::exists(path), ErrorKind::kIo,
          "path '" + path.string() + "' does not exist");
  if (fs::is_regular_file(path)) return zip_decode(read_file(path));
  FileMap files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    files[fs::relative(entry.path(), path).generic_string()] =
        read_file(entry.path());
  }
  return files;
}

}  // namespace qlower::detail
