#include "pcbd/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "pcbd/error.hpp"

namespace pcbd {

namespace {

void append_le(std::string& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) {
    out.push_back(char(bits & 0xffu));
    bits >>= 8;
  }
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | std::uint64_t(static_cast<unsigned char>(p[i]));
  return std::bit_cast<double>(bits);
}

}  // namespace

nn::ArrayMap Checkpoint::array_map() const {
  nn::ArrayMap m;
  for (const auto& a : arrays) m[a.name] = a.data;
  return m;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta = ckpt.meta;
  auto& listing = meta["arrays"] = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& a : ckpt.arrays) {
    listing.push_back({{"name", a.name}, {"shape", {a.data.rows(), a.data.cols()}}});
    total += std::size_t(a.data.size());
  }
  const std::string text = meta.dump();
  std::string out;
  out.reserve(text.size() + 32 + total * 8);
  out += kCheckpointMagic;
  out += '\n';
  out += std::to_string(text.size());
  out += '\n';
  out += text;
  out += '\n';
  for (const auto& a : ckpt.arrays) {
    for (Eigen::Index i = 0; i < a.data.size(); ++i) append_le(out, a.data.data()[i]);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const std::string magic = std::string(kCheckpointMagic) + "\n";
  if (bytes.compare(0, magic.size(), magic) != 0) {
    throw Error(ErrorKind::ParseError, "checkpoint missing PCBD1 header");
  }
  std::size_t pos = magic.size();
  const std::size_t eol = bytes.find('\n', pos);
  if (eol == std::string::npos) throw Error(ErrorKind::ParseError, "checkpoint truncated header");
  std::size_t meta_len = 0;
  try {
    meta_len = std::stoul(bytes.substr(pos, eol - pos));
  } catch (...) {
    throw Error(ErrorKind::ParseError, "checkpoint metadata length is not a number");
  }
  pos = eol + 1;
  if (pos + meta_len + 1 > bytes.size()) throw Error(ErrorKind::ParseError, "checkpoint truncated metadata");
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(bytes.substr(pos, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("checkpoint metadata: ") + e.what());
  }
  pos += meta_len + 1;
  for (const auto& entry : ckpt.meta.at("arrays")) {
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const std::size_t count = std::size_t(rows * cols);
    if (pos + count * 8 > bytes.size()) throw Error(ErrorKind::ParseError, "checkpoint truncated arrays");
    nn::Tensor t(rows, cols);
    for (std::size_t i = 0; i < count; ++i) t.data()[i] = read_le(bytes.data() + pos + 8 * i);
    pos += count * 8;
    ckpt.arrays.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  if (pos != bytes.size()) throw Error(ErrorKind::ParseError, "checkpoint has trailing bytes");
  ckpt.meta.erase("arrays");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string content_hash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || !EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) ||
      !EVP_DigestUpdate(ctx.get(), header.data(), header.size()) ||
      !EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) || !EVP_DigestFinal_ex(ctx.get(), digest, &len)) {
    throw Error(ErrorKind::IoError, "SHA-1 digest failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return ss.str();
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace pcbd
