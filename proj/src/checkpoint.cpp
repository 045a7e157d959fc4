#include "piconv/checkpoint.hpp"

#include "piconv/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace piconv {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'C', 'O', 'N', 'V', 'C', 'K'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(char((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(const std::string& in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= U(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"convlstm_layers", c.convlstm_layers},
          {"conv_layers", c.conv_layers},
          {"filters", c.filters},
          {"kernel_size", c.kernel_size},
          {"window", c.window},
          {"horizon", c.horizon},
          {"input_channels", c.input_channels},
          {"flux_channels", c.flux_channels},
          {"t_min", c.t_min},
          {"t_max", c.t_max},
          {"flux_norm", c.flux_norm}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.convlstm_layers = j.at("convlstm_layers").get<Index>();
  c.conv_layers = j.at("conv_layers").get<Index>();
  c.filters = j.at("filters").get<Index>();
  c.kernel_size = j.at("kernel_size").get<Index>();
  c.window = j.at("window").get<Index>();
  c.horizon = j.at("horizon").get<Index>();
  c.input_channels = j.at("input_channels").get<Index>();
  c.flux_channels = j.at("flux_channels").get<Index>();
  c.t_min = j.at("t_min").get<double>();
  c.t_max = j.at("t_max").get<double>();
  c.flux_norm = j.at("flux_norm").get<double>();
  return c;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = config_to_json(ck.config);
  header["seed"] = ck.seed;
  header["epochs"] = ck.epochs;
  header["use_pi_loss"] = ck.use_pi_loss;
  header["use_pi_input"] = ck.use_pi_input;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const NamedArray& a : ck.params.arrays) {
    table.push_back({{"name", a.name},
                     {"shape", a.shape},
                     {"offset", offset},
                     {"count", a.value.size()}});
    offset += std::uint64_t(a.value.size());
  }
  header["arrays"] = table;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * 8);
  for (const NamedArray& a : ck.params.arrays) {
    for (Index i = 0; i < a.value.size(); ++i) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(a.value[i]));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  constexpr std::size_t fixed = sizeof kMagic + 4 + 8;
  if (bytes.size() < fixed) throw CorruptError("checkpoint truncated: missing preamble");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptError("checkpoint has bad magic bytes");
  }
  const auto version = get_le<std::uint32_t>(bytes, sizeof kMagic);
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(bytes, sizeof kMagic + 4);
  if (header_len > bytes.size() - fixed) {
    throw CorruptError("checkpoint truncated: header runs past end of file");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(fixed, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  std::size_t payload = fixed + header_len;
  try {
    ck.config = config_from_json(header.at("config"));
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.epochs = header.at("epochs").get<Index>();
    ck.use_pi_loss = header.value("use_pi_loss", false);
    ck.use_pi_input = header.value("use_pi_input", false);
    std::uint64_t expected_offset = 0;
    for (const auto& entry : header.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      a.shape = entry.at("shape").get<Shape>();
      const auto off = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (off != expected_offset || Index(count) != shape_size(a.shape)) {
        throw CorruptError("checkpoint array table inconsistent at '" + a.name + "'");
      }
      if ((bytes.size() - payload) / 8 < off + count) {
        throw CorruptError("checkpoint truncated: array '" + a.name +
                           "' runs past end of file");
      }
      a.value.resize(Index(count));
      for (std::uint64_t i = 0; i < count; ++i) {
        a.value[Index(i)] = std::bit_cast<double>(
            get_le<std::uint64_t>(bytes, payload + 8 * (off + i)));
      }
      expected_offset = off + count;
      ck.params.arrays.push_back(std::move(a));
    }
    if (bytes.size() - payload != expected_offset * 8) {
      throw CorruptError("checkpoint has trailing bytes after payload");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptError(std::string("checkpoint header malformed: ") + e.what());
  }

  const auto layout = parameter_layout(ck.config);
  if (layout.size() != ck.params.arrays.size()) {
    throw CorruptError("checkpoint array count does not match its configuration");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].first != ck.params.arrays[i].name ||
        layout[i].second != ck.params.arrays[i].shape) {
      throw CorruptError("checkpoint array '" + ck.params.arrays[i].name +
                         "' does not match its configuration");
    }
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_checkpoint(ck);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint ck = decode_checkpoint(bytes);
  if (expected) {
    if (auto field = config_difference(*expected, ck.config)) {
      throw ValidationError("checkpoint configuration mismatch in field '" + *field + "'");
    }
  }
  return ck;
}

}  // namespace piconv
