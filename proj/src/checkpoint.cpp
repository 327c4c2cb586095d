#include "remaster/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "remaster/error.hpp"

namespace remaster {
namespace {

constexpr char kMagic[8] = {'R', 'M', 'K', 'T', 'C', 'K', 'P', 'T'};

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <class T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw IoError("truncated checkpoint: " + path.string());
  return value;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::uint64_t config_hash(const nlohmann::json& config) {
  const std::string text = config.dump();
  return nn::fnv1a(text.data(), text.size());
}

std::uint64_t Checkpoint::config_hash() const { return remaster::config_hash(config); }

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["config"] = ckpt.config;
  header["config_hash"] = hex(ckpt.config_hash());
  header["step"] = ckpt.step;
  header["seed"] = ckpt.seed;
  header["extra"] = ckpt.extra;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, values] : ckpt.tensors) index.push_back({{"name", name}, {"size", values.size()}});
  header["tensors"] = index;
  const std::string text = header.dump();

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, values] : ckpt.tensors)
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind,
                           std::optional<std::uint64_t> expected_config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                  ", expected " + std::to_string(kCheckpointVersion));
  const auto length = read_pod<std::uint64_t>(in, path);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw IoError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.extra = header.at("extra");
    if (header.at("config_hash").get<std::string>() != hex(ckpt.config_hash()))
      throw IoError("checkpoint " + path.string() + " is corrupt: config does not match its stored hash");
    for (const auto& entry : header.at("tensors")) {
      std::vector<double> values(entry.at("size").get<std::size_t>());
      in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
      if (!in) throw IoError("truncated checkpoint data: " + path.string());
      ckpt.tensors.emplace(entry.at("name").get<std::string>(), std::move(values));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }

  if (!expected_kind.empty() && ckpt.kind != expected_kind)
    throw IoError("checkpoint " + path.string() + " holds a " + ckpt.kind + " model, expected " + expected_kind);
  if (expected_config_hash && *expected_config_hash != ckpt.config_hash())
    throw IoError("config hash mismatch for " + path.string() + ": checkpoint has " + hex(ckpt.config_hash()) +
                  ", current config has " + hex(*expected_config_hash));
  return ckpt;
}

void store_params(const nn::ParamSet& params, const std::string& prefix, Checkpoint& ckpt) {
  for (const auto* list : {&params.parameters(), &params.buffers()})
    for (const auto& e : *list)
      ckpt.tensors[prefix + e.name] = std::vector<double>(e.tensor.values().begin(), e.tensor.values().end());
}

void restore_params(nn::ParamSet& params, const std::string& prefix, const Checkpoint& ckpt) {
  for (const auto* list : {&params.parameters(), &params.buffers()})
    for (const auto& e : *list) {
      auto it = ckpt.tensors.find(prefix + e.name);
      if (it == ckpt.tensors.end()) throw IoError("checkpoint lacks tensor " + prefix + e.name);
      nn::Tensor t = e.tensor;
      auto dst = t.mutable_values();
      if (it->second.size() != dst.size())
        throw IoError("checkpoint tensor " + prefix + e.name + " has " + std::to_string(it->second.size()) +
                      " values, model expects " + std::to_string(dst.size()));
      std::copy(it->second.begin(), it->second.end(), dst.begin());
    }
}

void store_adam(const nn::Adam& adam, const std::string& prefix, Checkpoint& ckpt) {
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    ckpt.tensors[prefix + "m." + std::to_string(i)] = adam.first_moments()[i];
    ckpt.tensors[prefix + "v." + std::to_string(i)] = adam.second_moments()[i];
  }
  ckpt.extra[prefix + "steps"] = adam.steps();
}

void restore_adam(nn::Adam& adam, const std::string& prefix, const Checkpoint& ckpt) {
  auto fetch = [&](const std::string& name, std::vector<double>& dst) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end() || it->second.size() != dst.size())
      throw IoError("checkpoint optimizer state " + name + " missing or mis-sized");
    dst = it->second;
  };
  for (std::size_t i = 0; i < adam.first_moments().size(); ++i) {
    fetch(prefix + "m." + std::to_string(i), adam.first_moments()[i]);
    fetch(prefix + "v." + std::to_string(i), adam.second_moments()[i]);
  }
  adam.set_steps(ckpt.extra.at(prefix + "steps").get<std::uint64_t>());
}

}  // namespace remaster
