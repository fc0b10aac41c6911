#include "fusionet/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace fusionet {
namespace {

static_assert(sizeof(float) == 4);

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T value) {
    std::uint8_t buf[sizeof(T)];
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
    U u;
    std::memcpy(&u, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<std::uint8_t>(u >> (8 * i));
    bytes(buf, sizeof(T));
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::size_t end) : data_(data), end_(end) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > end_) {
      throw CorruptCheckpoint(std::string("truncated checkpoint while reading ") + what + ": expected " +
                                  std::to_string(pos_ + n + 4) + " bytes or more, file has " +
                                  std::to_string(data_.size()),
                              pos_);
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, &u, sizeof(T));
    return value;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes("FNET", 4);
  w.le<std::uint32_t>(kVersion);
  const std::string json = meta.dump();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  w.bytes(json.data(), json.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::length_error("tensor name too long: " + t.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
    for (Index d : t.shape) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.values) w.le<float>(v);
  }
  w.le<std::uint32_t>(crc_of(w.data().data(), w.data().size()));
  return std::move(w.data());
}

Checkpoint Checkpoint::parse(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "FNET", 4) != 0) {
    throw CorruptCheckpoint("not a checkpoint: bad magic", 0);
  }
  if (bytes.size() < 16) {
    throw CorruptCheckpoint("truncated checkpoint: expected at least 16 bytes, file has " + std::to_string(bytes.size()),
                            bytes.size());
  }
  Reader r(bytes, bytes.size() - 4);  // last 4 bytes are the CRC
  r.str(4, "magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion) {
    throw CorruptCheckpoint("unsupported checkpoint version " + std::to_string(version), 4);
  }
  Checkpoint ckpt;
  const auto json_len = r.le<std::uint32_t>("config length");
  const std::size_t json_at = r.pos();
  const std::string json = r.str(json_len, "config");
  try {
    ckpt.meta = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptCheckpoint(std::string("invalid config JSON: ") + e.what(), json_at);
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.le<std::uint16_t>("name length"), "tensor name");
    const auto rank = r.le<std::uint8_t>("rank");
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.le<std::uint32_t>("dimension"));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    r.need(n * 4, "tensor values");
    t.values.resize(n);
    for (auto& v : t.values) v = r.le<float>("tensor values");
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pos() != bytes.size() - 4) {
    throw CorruptCheckpoint("unexpected trailing bytes: expected " + std::to_string(r.pos() + 4) +
                                " bytes, file has " + std::to_string(bytes.size()),
                            r.pos());
  }
  const std::uint32_t expected = crc_of(bytes.data(), r.pos());
  std::uint32_t trailer = 0;
  for (int i = 0; i < 4; ++i) trailer |= static_cast<std::uint32_t>(bytes[r.pos() + i]) << (8 * i);
  if (trailer != expected) throw CorruptCheckpoint("CRC mismatch", r.pos());
  return ckpt;
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = ckpt.serialize();
  // Write-then-rename so a crash never leaves a half-written best checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Checkpoint::parse(bytes);
}

Checkpoint capture(Model<float>& model, nlohmann::json meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  model.visit([&](const std::string& name, Tensor<float>& t) {
    const auto& m = t.data();
    ckpt.tensors.push_back({name, t.shape(), std::vector<float>(m.data(), m.data() + m.size())});
  });
  return ckpt;
}

void restore(Model<float>& model, const Checkpoint& ckpt) {
  std::set<std::string> seen;
  for (const auto& t : ckpt.tensors) {
    if (!seen.insert(t.name).second) throw CheckpointMismatch("checkpoint lists tensor '" + t.name + "' twice");
  }
  std::set<std::string> used;
  model.visit([&](const std::string& name, Tensor<float>& param) {
    const NamedTensor* t = ckpt.find(name);
    if (!t) {
      throw CheckpointMismatch("checkpoint has no tensor '" + name + "' required by a " +
                               std::string(to_string(model.kind())) + " model");
    }
    if (t->shape != param.shape()) {
      throw CheckpointMismatch("tensor '" + name + "' has shape " + to_string(t->shape) + " in the checkpoint but " +
                               to_string(param.shape()) + " in the model");
    }
    std::memcpy(param.data().data(), t->values.data(), t->values.size() * sizeof(float));
    used.insert(name);
  });
  for (const auto& t : ckpt.tensors) {
    if (!used.count(t.name)) {
      throw CheckpointMismatch("checkpoint tensor '" + t.name + "' has no counterpart in a " +
                               std::string(to_string(model.kind())) + " model");
    }
  }
}

}  // namespace fusionet
