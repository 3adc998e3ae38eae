#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcbd/nn.hpp"

namespace pcbd {

/// On-disk model format shared by the autoencoder and the victims:
///
///   "PCBD1\n"
///   <decimal byte length of the metadata>\n
///   <metadata JSON>\n
///   <raw little-endian float64 arrays, in the order listed in
///    metadata["arrays"] as {name, shape}>
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<nn::NamedArray> arrays;

  nn::ArrayMap array_map() const;
};

inline constexpr std::string_view kCheckpointMagic = "PCBD1";

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Git blob id: lower-case hex SHA-1 of "blob <size>\0" + bytes.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace pcbd
