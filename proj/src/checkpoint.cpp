#include "memesent/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "json.hpp"
#include "memesent/error.hpp"

namespace memesent {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[4] = {'M', 'S', 'C', 'K'};

template <typename T>
void put(std::vector<char>& buf, T value) {
  const char* p = reinterpret_cast<const char*>(&value);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<char>& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw DataError("checkpoint is truncated");
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, int epoch) {
  nlohmann::ordered_json header;
  header["variant"] = std::string(variant_name(params.variant));
  header["d_t"] = params.config.dims.text;
  header["d_v"] = params.config.dims.visual;
  header["d_f"] = params.config.dims.face;
  header["hidden_size"] = params.config.hidden_size;
  header["mask_pads"] = params.config.mask_pads;
  header["seed"] = params.seed;
  header["epoch"] = epoch;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  params.for_each_tensor([&](const std::string& name, const double*, Eigen::Index r, Eigen::Index c) {
    tensors.push_back({{"name", name}, {"rows", r}, {"cols", c}});
  });
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  std::vector<char> buf(kMagic, kMagic + 4);
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint64_t>(buf, header_text.size());
  buf.insert(buf.end(), header_text.begin(), header_text.end());
  params.for_each_tensor([&](const std::string&, const double* data, Eigen::Index r, Eigen::Index c) {
    const char* p = reinterpret_cast<const char*>(data);
    buf.insert(buf.end(), p, p + sizeof(double) * static_cast<std::size_t>(r * c));
  });

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(buf, pos);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(buf, pos);
  if (pos + header_len > buf.size()) throw DataError("checkpoint is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                   buf.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;

  Checkpoint ck;
  try {
    ModelConfig config;
    config.dims = EncoderDims{header.at("d_t").get<int>(), header.at("d_v").get<int>(),
                              header.at("d_f").get<int>()};
    config.hidden_size = header.at("hidden_size").get<int>();
    config.mask_pads = header.at("mask_pads").get<bool>();
    const ModelVariant variant = parse_variant(header.at("variant").get<std::string>());
    ck.params = init_params(variant, config, header.at("seed").get<std::uint64_t>());
    ck.epoch = header.at("epoch").get<int>();

    const auto& tensors = header.at("tensors");
    std::size_t t = 0;
    ck.params.for_each_tensor([&](const std::string& name, double* data, Eigen::Index r, Eigen::Index c) {
      if (t >= tensors.size() || tensors[t].at("name") != name || tensors[t].at("rows") != r ||
          tensors[t].at("cols") != c) {
        throw DataError("checkpoint tensor layout does not match variant wiring at " + name);
      }
      const std::size_t bytes = sizeof(double) * static_cast<std::size_t>(r * c);
      if (pos + bytes > buf.size()) throw DataError("checkpoint is truncated");
      std::memcpy(data, buf.data() + pos, bytes);
      pos += bytes;
      ++t;
    });
    if (t != tensors.size()) throw DataError("checkpoint holds extra tensors");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  if (pos != buf.size()) throw DataError("checkpoint has trailing bytes");
  return ck;
}

} // namespace memesent
