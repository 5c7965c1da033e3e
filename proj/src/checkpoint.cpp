#include "bundleforge/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "bundleforge/errors.hpp"

namespace bundleforge::checkpoint {

namespace {

void append_u32(std::string& buf, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  buf.append(b, 4);
}

std::uint32_t read_u32(const std::string& buf, std::size_t& pos) {
  if (pos + 4 > buf.size()) throw ParseError("checkpoint: truncated file");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  pos += 4;
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t payload_crc(const std::string& buf, std::size_t len) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(len)));
}

}  // namespace

void save(const std::string& path, const NamedTensors& params) {
  std::string buf;
  buf.append("BNDC", 4);
  append_u32(buf, kFormatVersion);
  append_u32(buf, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    append_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    append_u32(buf, static_cast<std::uint32_t>(t.rows()));
    append_u32(buf, static_cast<std::uint32_t>(t.cols()));
    static_assert(sizeof(float) == 4);
    const std::size_t bytes = t.size() * 4;
    const std::size_t off = buf.size();
    buf.resize(off + bytes);
    std::memcpy(buf.data() + off, t.values().data(), bytes);
  }
  append_u32(buf, payload_crc(buf, buf.size()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PrerequisiteError("cannot write checkpoint '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

NamedTensors load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw PrerequisiteError("cannot open checkpoint '" + path +
                            "'; run the producing train command first");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 16 || buf.compare(0, 4, "BNDC") != 0)
    throw ParseError("checkpoint '" + path + "': bad magic");
  std::size_t pos = buf.size() - 4;
  const std::uint32_t stored_crc = read_u32(buf, pos);
  if (payload_crc(buf, buf.size() - 4) != stored_crc)
    throw ParseError("checkpoint '" + path + "': CRC mismatch, file corrupted");
  pos = 4;
  const std::uint32_t version = read_u32(buf, pos);
  if (version != kFormatVersion)
    throw ParseError("checkpoint '" + path + "': unsupported format version " +
                     std::to_string(version));
  const std::uint32_t count = read_u32(buf, pos);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(buf, pos);
    if (pos + name_len > buf.size() - 4)
      throw ParseError("checkpoint '" + path + "': truncated name");
    std::string name = buf.substr(pos, name_len);
    pos += name_len;
    const int rows = static_cast<int>(read_u32(buf, pos));
    const int cols = static_cast<int>(read_u32(buf, pos));
    const std::size_t bytes = static_cast<std::size_t>(rows) * cols * 4;
    if (pos + bytes > buf.size() - 4)
      throw ParseError("checkpoint '" + path + "': truncated tensor data");
    std::vector<float> vals(static_cast<std::size_t>(rows) * cols);
    std::memcpy(vals.data(), buf.data() + pos, bytes);
    pos += bytes;
    out.emplace_back(std::move(name),
                     num::Tensor<float>::from_values(rows, cols, std::move(vals)));
  }
  return out;
}

}  // namespace bundleforge::checkpoint
