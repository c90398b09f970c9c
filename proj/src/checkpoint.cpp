#include "mlcak/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "mlcak/error.hpp"

namespace mlcak {

namespace {

constexpr std::array<char, 6> kMagic{'M', 'L', 'C', 'A', 'K', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (std::size_t i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return is;
}

ViTConfig read_header(std::istream& is, const std::filesystem::path& path) {
  std::array<char, 6> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ParseError(path.string() + ": not an MLCAK1 checkpoint");
  const auto len = get_u64(is);
  if (!is || len > (1u << 20)) throw ParseError(path.string() + ": corrupt config header");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw ParseError(path.string() + ": truncated config header");
  try {
    return vit_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": config is not valid JSON: " + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const ViTModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  const auto text = to_json(model.config()).dump();
  os.write(kMagic.data(), kMagic.size());
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.named_parameters()) {
    for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

ViTConfig read_checkpoint_config(const std::filesystem::path& path) {
  auto is = open_for_read(path);
  return read_header(is, path);
}

ViTModel load_checkpoint(const std::filesystem::path& path, const std::optional<ViTConfig>& expected) {
  auto is = open_for_read(path);
  const auto config = read_header(is, path);
  if (expected && !(*expected == config)) {
    throw ConfigError("checkpoint " + path.string() + " config " + to_json(config).dump() +
                      " does not match expected " + to_json(*expected).dump());
  }
  ViTModel model(config);
  for (auto& [name, t] : model.named_parameters()) {
    for (auto& v : t.mutable_data()) v = std::bit_cast<double>(get_u64(is));
    if (!is) throw ParseError(path.string() + ": truncated while reading parameter " + name);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError(path.string() + ": trailing bytes after parameters");
  return model;
}

}  // namespace mlcak
