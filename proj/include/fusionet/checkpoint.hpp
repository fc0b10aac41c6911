#pragma once

#include "fusionet/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusionet {

/// Raised for unreadable bytes: bad magic or version, truncation, CRC mismatch.
class CorruptCheckpoint : public std::runtime_error {
 public:
  CorruptCheckpoint(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Raised when a well-formed checkpoint does not fit the model it is loaded into.
class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;  // row-major
};

/// Layout: "FNET" | u32 version | u32 n | n bytes of JSON | u32 count |
/// count x (u16 n, name, u8 rank, u32 dims[rank], f32 values) | u32 CRC32.
/// Integers and floats are little-endian; the CRC covers every earlier byte.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  /// Holds "config" (TrainConfig JSON), "vocabulary" (id-ordered tokens) and
  /// "best" ({epoch, validation_accuracy, ...}).
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(const std::vector<std::uint8_t>& bytes);

  const NamedTensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter in visit order.
Checkpoint capture(Model<float>& model, nlohmann::json meta);

/// Copies tensors into `model`. Every parameter must be present exactly once
/// with a matching shape; extra tensors are also an error.
void restore(Model<float>& model, const Checkpoint& ckpt);

}  // namespace fusionet
