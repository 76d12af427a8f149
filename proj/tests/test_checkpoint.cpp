#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "kehrl/checkpoint.hpp"
#include "kehrl/digest.hpp"
#include "kehrl/encoder.hpp"
#include "kehrl/params.hpp"
#include "kehrl/rng.hpp"

using namespace kehrl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("kehrl_ckpt_" + std::to_string(static_cast<unsigned long long>(
                                std::hash<const void*>{}(static_cast<const void*>(this)))));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.max_len = 6;
  cfg.vocab_size = 10;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint round-trips multiple parameter groups bitwise") {
  TempDir dir;
  Encoder enc(small_config());
  Rng rng(31);
  enc.init_params(rng);
  ParamSet aux;
  aux.add("w", Tensor::full(2, 3, 0.25));
  aux.add("b", Tensor::row({1.0, -2.0, 3.5}));

  const std::string prefix = dir.file("step10");
  save_checkpoint(prefix, {{"encoder.", &enc.params()}, {"aux.", &aux}},
                  R"({"seed": 7, "note": "round trip"})");

  const LoadedCheckpoint ck = load_checkpoint(prefix);
  CHECK(ck.tensors.count("encoder.tok_emb") == 1);
  CHECK(ck.tensors.count("aux.w") == 1);
  CHECK(ck.config_json.find("round trip") != std::string::npos);

  Encoder enc2(small_config());  // zero-initialized
  restore_params(enc2.params(), "encoder.", ck);
  for (int i = 0; i < enc.params().size(); ++i) {
    const Tensor& a = enc.params().tensor(i);
    const Tensor& b = enc2.params().tensor(i);
    REQUIRE(a.same_shape(b));
    for (std::size_t e = 0; e < a.v.size(); ++e) CHECK(a.v[e] == b.v[e]);
  }

  const std::vector<int> tokens{3, 1, 4, 1, 5};
  const Tensor ha = enc.encode(tokens);
  const Tensor hb = enc2.encode(tokens);
  for (std::size_t e = 0; e < ha.v.size(); ++e) CHECK(ha.v[e] == hb.v[e]);
}

TEST_CASE("checkpoint manifest digest matches the binary on disk") {
  TempDir dir;
  ParamSet ps;
  ps.add("m", Tensor::full(3, 3, 1.5));
  const std::string prefix = dir.file("digest");
  save_checkpoint(prefix, {{"", &ps}}, "{}");

  std::ifstream man(prefix + ".json");
  std::string text((std::istreambuf_iterator<char>(man)), std::istreambuf_iterator<char>());
  const std::string want = hex64(fnv1a64_file(prefix + ".bin"));
  CHECK(text.find(want) != std::string::npos);
  CHECK(fs::file_size(prefix + ".bin") == 3 * 3 * sizeof(double));
}

TEST_CASE("restore rejects missing tensors and shape mismatches") {
  TempDir dir;
  ParamSet ps;
  ps.add("w", Tensor::full(2, 2, 1.0));
  const std::string prefix = dir.file("bad");
  save_checkpoint(prefix, {{"g.", &ps}}, "{}");
  const LoadedCheckpoint ck = load_checkpoint(prefix);

  ParamSet other;
  other.add("w", Tensor(2, 2));
  other.add("extra", Tensor(1, 1));
  CHECK_THROWS_AS(restore_params(other, "g.", ck), std::runtime_error);

  ParamSet wrong;
  wrong.add("w", Tensor(2, 3));
  CHECK_THROWS_AS(restore_params(wrong, "g.", ck), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint(dir.file("nonexistent")), std::runtime_error);
}

TEST_CASE("two saves of identical params produce identical binaries") {
  TempDir dir;
  Encoder enc(small_config());
  Rng rng(42);
  enc.init_params(rng);
  save_checkpoint(dir.file("a"), {{"e.", &enc.params()}}, "{}");
  save_checkpoint(dir.file("b"), {{"e.", &enc.params()}}, "{}");
  CHECK(fnv1a64_file(dir.file("a") + ".bin") == fnv1a64_file(dir.file("b") + ".bin"));
}
