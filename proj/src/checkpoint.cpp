#include "tfnk/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "tfnk/errors.hpp"

namespace tfnk {

namespace {

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  size_t left;
  std::string path;

  void need(size_t n) const {
    if (left < n) throw config_error(path + ": truncated checkpoint");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    p += 4;
    left -= 4;
    return v;
  }
  void bytes(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

}  // namespace

int64_t checkpoint_byte_size(const std::vector<CheckpointEntry>& entries) {
  int64_t size = 4 + 4 + 4;  // magic, version, count
  for (const auto& e : entries) {
    size += 2 + static_cast<int64_t>(e.name.size()) + 1 + 4 * static_cast<int64_t>(e.dims.size()) +
            4 * static_cast<int64_t>(e.values.size());
  }
  return size;
}

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::string buf;
  buf.reserve(static_cast<size_t>(checkpoint_byte_size(entries)));
  buf.append("TFNK");
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff) throw config_error("checkpoint: name too long: " + e.name);
    if (e.dims.size() > 0xff) throw config_error("checkpoint: rank too large for " + e.name);
    int64_t n = 1;
    for (int d : e.dims) {
      if (d <= 0) throw config_error("checkpoint: bad dim for " + e.name);
      n *= d;
    }
    if (n != static_cast<int64_t>(e.values.size())) {
      throw config_error("checkpoint: dims do not match data size for " + e.name);
    }
    put_u16(buf, static_cast<uint16_t>(e.name.size()));
    buf.append(e.name);
    buf.push_back(static_cast<char>(e.dims.size()));
    for (int d : e.dims) put_u32(buf, static_cast<uint32_t>(d));
    static_assert(sizeof(float) == 4);
    const size_t off = buf.size();
    buf.resize(off + 4 * e.values.size());
    std::memcpy(buf.data() + off, e.values.data(), 4 * e.values.size());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw config_error(path + ": write failed");
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path + ": cannot open");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(buf.data()), buf.size(), path};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "TFNK", 4) != 0) throw config_error(path + ": bad checkpoint magic");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw config_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t count = r.u32();
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const uint16_t name_len = r.u16();
    e.name.resize(name_len);
    r.bytes(e.name.data(), name_len);
    r.need(1);
    const int rank = *r.p;
    r.p += 1;
    r.left -= 1;
    int64_t n = 1;
    e.dims.resize(rank);
    for (int d = 0; d < rank; ++d) {
      e.dims[d] = static_cast<int>(r.u32());
      n *= e.dims[d];
    }
    e.values.resize(static_cast<size_t>(n));
    r.bytes(e.values.data(), 4 * static_cast<size_t>(n));
    entries.push_back(std::move(e));
  }
  if (r.left != 0) throw config_error(path + ": trailing bytes in checkpoint");
  return entries;
}

}  // namespace tfnk
