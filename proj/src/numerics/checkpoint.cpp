#include "blastoseg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace blastoseg::numerics {
namespace {

bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char ch : s) {
    if (ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r') return false;
  }
  return true;
}

void put_le32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
}

float get_le32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::optional<std::string> Checkpoint::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  std::ostringstream header;
  header << kCheckpointMagic << " v" << kCheckpointVersion << '\n';
  for (const auto& [key, value] : checkpoint.metadata) {
    if (!valid_token(key) || value.find('\n') != std::string::npos) {
      throw CheckpointError("metadata key/value not representable: '" + key + "'");
    }
    header << "meta " << key << ' ' << value << '\n';
  }
  std::size_t offset = 0;
  for (const auto& t : checkpoint.tensors) {
    if (!valid_token(t.name)) throw CheckpointError("tensor name not representable: '" + t.name + "'");
    const Shape4& s = t.value.shape();
    header << "tensor " << t.name << ' ' << s.n << ' ' << s.c << ' ' << s.h << ' ' << s.w << ' '
           << offset << '\n';
    offset += t.value.size() * 4;
  }
  header << "end " << offset << '\n';
  std::string out = header.str();
  out.reserve(out.size() + offset);
  for (const auto& t : checkpoint.tensors) {
    for (float v : t.value.data()) put_le32(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError("truncated manifest");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  {
    std::istringstream first(next_line());
    std::string magic, version;
    first >> magic >> version;
    if (magic != kCheckpointMagic) throw CheckpointError("not a checkpoint file (bad magic header)");
    if (version != "v" + std::to_string(kCheckpointVersion)) {
      throw CheckpointError("incompatible checkpoint version '" + version + "', expected v" +
                            std::to_string(kCheckpointVersion));
    }
  }

  Checkpoint ck;
  struct Pending {
    std::string name;
    Shape4 shape;
    std::size_t offset;
  };
  std::vector<Pending> pending;
  std::size_t payload_bytes = 0;
  for (;;) {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    if (kind == "meta") {
      std::string key;
      in >> key;
      std::string value;
      std::getline(in >> std::ws, value);
      ck.metadata.emplace_back(key, value);
    } else if (kind == "tensor") {
      Pending p;
      if (!(in >> p.name >> p.shape.n >> p.shape.c >> p.shape.h >> p.shape.w >> p.offset)) {
        throw CheckpointError("malformed tensor line: " + line);
      }
      pending.push_back(p);
    } else if (kind == "end") {
      if (!(in >> payload_bytes)) throw CheckpointError("malformed end line");
      break;
    } else {
      throw CheckpointError("unexpected manifest line: " + line);
    }
  }
  if (bytes.size() - pos != payload_bytes) {
    throw CheckpointError("payload size " + std::to_string(bytes.size() - pos) +
                          " does not match manifest " + std::to_string(payload_bytes));
  }
  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (const auto& p : pending) {
    const std::size_t count = p.shape.size();
    if (p.offset + count * 4 > payload_bytes) {
      throw CheckpointError("tensor '" + p.name + "' extends past the payload");
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = get_le32(payload + p.offset + 4 * i);
    ck.tensors.push_back({p.name, Tensor<float>(p.shape, std::move(data))});
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace blastoseg::numerics
