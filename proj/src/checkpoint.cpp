#include "kehrl/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kehrl/digest.hpp"

namespace kehrl {

namespace {
using nlohmann::json;
}

void save_checkpoint(const std::string& prefix,
                     const std::vector<std::pair<std::string, const ParamSet*>>& groups,
                     const std::string& config_json_text) {
  const std::string bin_path = prefix + ".bin";
  const std::string man_path = prefix + ".json";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + bin_path);

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [gname, ps] : groups) {
    for (int i = 0; i < ps->size(); ++i) {
      const Tensor& t = ps->tensor(i);
      bin.write(reinterpret_cast<const char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
      tensors.push_back({{"name", gname + ps->name(i)},
                         {"rows", t.rows},
                         {"cols", t.cols},
                         {"offset", offset}});
      offset += t.v.size() * sizeof(double);
    }
  }
  bin.close();
  if (!bin) throw std::runtime_error("write failed for " + bin_path);

  json manifest;
  manifest["dtype"] = "f64";
  manifest["bytes"] = offset;
  manifest["fnv64"] = hex64(fnv1a64_file(bin_path));
  manifest["tensors"] = tensors;
  json cfg = json::parse(config_json_text, nullptr, false);
  manifest["config"] = cfg.is_discarded() ? json(config_json_text) : cfg;
  std::ofstream man(man_path, std::ios::binary);
  if (!man) throw std::runtime_error("cannot write " + man_path);
  man << manifest.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
  const std::string bin_path = prefix + ".bin";
  const std::string man_path = prefix + ".json";
  std::ifstream man(man_path);
  if (!man) throw std::runtime_error("cannot open " + man_path);
  json manifest = json::parse(man, nullptr, false);
  if (manifest.is_discarded()) throw std::runtime_error("broken manifest " + man_path);

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path);

  LoadedCheckpoint out;
  out.config_json = manifest.contains("config") ? manifest["config"].dump() : "{}";
  for (const auto& entry : manifest["tensors"]) {
    const std::string name = entry["name"].get<std::string>();
    Tensor t(entry["rows"].get<int>(), entry["cols"].get<int>());
    bin.seekg(static_cast<std::streamoff>(entry["offset"].get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("truncated checkpoint binary " + bin_path + " at " + name);
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

void restore_params(ParamSet& ps, const std::string& group, const LoadedCheckpoint& ck) {
  for (int i = 0; i < ps.size(); ++i) {
    const std::string key = group + ps.name(i);
    auto it = ck.tensors.find(key);
    if (it == ck.tensors.end()) throw std::runtime_error("checkpoint missing tensor " + key);
    if (!it->second.same_shape(ps.tensor(i)))
      throw std::runtime_error("checkpoint shape mismatch for " + key + ": " +
                               it->second.shape_str() + " vs " + ps.tensor(i).shape_str());
    ps.tensor(i) = it->second;
  }
}

}  // namespace kehrl
