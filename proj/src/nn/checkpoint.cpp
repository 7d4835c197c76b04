#include "petsr/nn/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "petsr/error.hpp"
#include "petsr/json_io.hpp"

namespace petsr::nn {

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

std::filesystem::path strip(const std::filesystem::path& p) {
  const auto ext = p.extension();
  if (ext == ".json" || ext == ".bin") return std::filesystem::path(p).replace_extension();
  return p;
}

std::filesystem::path with_ext(std::filesystem::path base, const char* ext) {
  base += ext;
  return base;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network<float>& net,
                     std::uint64_t seed, int epoch) {
  const auto base = strip(path);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  const NetworkSpec& spec = net.spec();
  Json j;
  j["format"] = "petsr-checkpoint";
  j["version"] = 1;
  Json s;
  s["variant"] = std::string(to_string(spec.variant));
  s["depth"] = spec.depth;
  s["filters"] = spec.filters;
  s["fusion_depth"] = spec.fusion_depth;
  s["inputs"] = Json::array();
  for (auto c : spec.inputs) s["inputs"].push_back(std::string(to_string(c)));
  j["spec"] = s;
  j["layers"] = Json::array();
  for (const auto& l : net.layers())
    j["layers"].push_back({{"name", l.name},
                           {"weight_shape", {l.out_ch, l.in_ch, kKernel, kKernel}},
                           {"bias_shape", {l.out_ch}},
                           {"weight_offset_bytes", l.weight_offset * sizeof(float)},
                           {"bias_offset_bytes", l.bias_offset * sizeof(float)},
                           {"relu", l.relu}});
  j["parameter_count"] = net.parameter_count();
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["blob"] = with_ext(base, ".bin").filename().string();
  j["seed"] = seed;
  j["epoch"] = epoch;

  std::vector<std::uint32_t> words(net.parameter_count());
  for (std::size_t i = 0; i < words.size(); ++i) {
    require(std::isfinite(net.params()[i]), ErrorKind::NonFinite,
            "refusing to save a checkpoint with non-finite parameters");
    words[i] = to_le(std::bit_cast<std::uint32_t>(net.params()[i]));
  }
  const auto blob = with_ext(base, ".bin");
  std::ofstream out(blob, std::ios::binary);
  require(bool(out), ErrorKind::Io, "cannot write " + blob.string());
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  require(bool(out), ErrorKind::Io, "short write to " + blob.string());
  write_json_file(j, with_ext(base, ".json"));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto base = strip(path);
  const Json j = read_json_file(with_ext(base, ".json"));
  Checkpoint ck;
  NetworkSpec spec;
  try {
    require(j.at("format").get<std::string>() == "petsr-checkpoint", ErrorKind::Format,
            "not a petsr checkpoint manifest");
    require(j.at("dtype").get<std::string>() == "float32", ErrorKind::Format,
            "checkpoint dtype must be float32");
    const Json& s = j.at("spec");
    spec.variant = variant_from_string(s.at("variant").get<std::string>());
    spec.depth = s.at("depth").get<int>();
    spec.filters = s.at("filters").get<int>();
    spec.fusion_depth = s.at("fusion_depth").get<int>();
    spec.inputs.clear();
    for (const auto& c : s.at("inputs")) spec.inputs.push_back(input_channel_from_string(c.get<std::string>()));
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.epoch = j.at("epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "malformed checkpoint manifest: " + std::string(e.what()));
  }
  ck.net = Network<float>(spec);
  const std::size_t n = ck.net.parameter_count();
  require(j.at("parameter_count").get<std::size_t>() == n, ErrorKind::ShapeMismatch,
          "checkpoint parameter count does not match its spec");

  const auto blob = base.parent_path() / j.at("blob").get<std::string>();
  std::ifstream in(blob, std::ios::binary | std::ios::ate);
  require(bool(in), ErrorKind::Io, "cannot open " + blob.string());
  require(static_cast<std::size_t>(in.tellg()) == n * sizeof(float), ErrorKind::ShapeMismatch,
          "checkpoint blob size does not match the parameter count");
  in.seekg(0);
  std::vector<std::uint32_t> words(n);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n * sizeof(float)));
  require(bool(in), ErrorKind::Io, "short read from " + blob.string());
  for (std::size_t i = 0; i < n; ++i) {
    const float v = std::bit_cast<float>(to_le(words[i]));
    require(std::isfinite(v), ErrorKind::NonFinite, "checkpoint contains non-finite parameters");
    ck.net.params()[i] = v;
  }
  return ck;
}

}  // namespace petsr::nn
