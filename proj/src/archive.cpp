#include "seedloop/archive.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace seedloop {

namespace {

std::string padded_magic(std::string_view magic) {
  if (magic.size() > 8) throw std::invalid_argument("archive magic longer than 8 bytes");
  std::string m(magic);
  m.resize(8, '\0');
  return m;
}

} // namespace

void write_archive(const std::filesystem::path& path, std::string_view magic, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write archive '" + path.string() + "'");
  const std::string header = archive.header.dump();
  const std::uint64_t header_len = header.size();
  const std::uint64_t count = archive.weights.size();
  out.write(padded_magic(magic).data(), 8);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(archive.weights.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!out) throw std::runtime_error("write failed for archive '" + path.string() + "'");
}

Archive read_archive(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive '" + path.string() + "'");
  std::string m(8, '\0');
  in.read(m.data(), 8);
  if (!in || m != padded_magic(magic))
    throw std::runtime_error("'" + path.string() + "' is not a " + std::string(magic) + " archive");
  std::uint64_t header_len = 0, count = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in || header_len > (1u << 24)) throw std::runtime_error("corrupt archive header in '" + path.string() + "'");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw std::runtime_error("truncated archive '" + path.string() + "'");
  Archive a;
  a.header = nlohmann::json::parse(header);
  a.weights.resize(count);
  in.read(reinterpret_cast<char*>(a.weights.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw std::runtime_error("truncated archive '" + path.string() + "'");
  return a;
}

} // namespace seedloop
