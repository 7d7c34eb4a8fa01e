#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "triplane/config.hpp"
#include "triplane/error.hpp"
#include "triplane/vxg.hpp"

using namespace triplane;
namespace fs = std::filesystem;

namespace {

VxgVolume random_volume(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> dim(1, 9), ch(1, 3);
  VxgVolume v;
  v.channels = ch(rng);
  v.dims = {dim(rng), dim(rng), dim(rng)};
  v.values.resize(v.numel());
  // Arbitrary bit patterns, excluding NaNs so operator== is meaningful.
  for (auto& x : v.values) {
    do {
      x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    } while (x != x);
  }
  return v;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return std::uint32_t(b[off]) | std::uint32_t(b[off + 1]) << 8 | std::uint32_t(b[off + 2]) << 16 |
         std::uint32_t(b[off + 3]) << 24;
}

}  // namespace

TEST_SUITE("vxg") {
  TEST_CASE("byte layout of a hand-built file") {
    VxgVolume v{2, {1, 1, 2}, {1.0f, -2.0f, 0.5f, 0.0f}};
    auto b = encode_vxg(v);
    REQUIRE(b.size() == 24 + 16);
    CHECK(std::memcmp(b.data(), "VXG1", 4) == 0);
    CHECK(read_u32(b, 4) == 1);
    CHECK(read_u32(b, 8) == 2);
    CHECK(read_u32(b, 12) == 1);
    CHECK(read_u32(b, 16) == 1);
    CHECK(read_u32(b, 20) == 2);
    CHECK(read_u32(b, 24) == 0x3f800000u);
    CHECK(read_u32(b, 28) == 0xc0000000u);
  }

  TEST_CASE("bit-exact round trip on 50 random volumes") {
    const fs::path dir = fs::temp_directory_path() / "triplane_test_vxg";
    fs::create_directories(dir);
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto v = random_volume(s);
      const auto path = (dir / ("v" + std::to_string(s) + ".vxg")).string();
      write_vxg(path, v);
      CHECK(fs::file_size(path) == 24 + 4 * v.numel());
      const auto r = read_vxg(path);
      CHECK(r.channels == v.channels);
      CHECK(r.dims == v.dims);
      CHECK(std::memcmp(r.values.data(), v.values.data(), 4 * v.numel()) == 0);
    }
  }

  TEST_CASE("malformed input") {
    auto b = encode_vxg(VxgVolume{1, {2, 2, 2}, std::vector<float>(8, 1.f)});
    auto bad_magic = b;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_vxg(bad_magic), IoError);
    auto bad_version = b;
    bad_version[4] = 2;
    CHECK_THROWS_AS(decode_vxg(bad_version), IoError);
    auto short_file = b;
    short_file.pop_back();
    CHECK_THROWS_AS(decode_vxg(short_file), IoError);
    auto long_file = b;
    long_file.push_back(0);
    CHECK_THROWS_AS(decode_vxg(long_file), IoError);
    CHECK_THROWS_AS(decode_vxg({'V', 'X'}), IoError);
    CHECK_THROWS_AS(read_vxg("/nonexistent/dir/x.vxg"), IoError);
    CHECK_THROWS_AS(encode_vxg(VxgVolume{1, {2, 2, 2}, std::vector<float>(7)}), IoError);
  }
}

TEST_SUITE("model config") {
  TEST_CASE("JSON round trip for every variant") {
    for (Variant v : {Variant::backbone, Variant::hybrid, Variant::dense3d}) {
      auto c = ModelConfig::defaults(v);
      c.seed = 42;
      c.dims = {16, 24, 32};
      CHECK(model_config_from_json(to_json(c)) == c);
      CHECK(model_config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);
    }
  }

  TEST_CASE("file round trip and hash") {
    const auto path = (fs::temp_directory_path() / "triplane_test_cfg.json").string();
    auto c = ModelConfig::defaults(Variant::hybrid);
    c.branch.ratio = 0.25;
    save_model_config(c, path);
    auto r = load_model_config(path);
    CHECK(r == c);
    CHECK(config_hash(r) == config_hash(c));
    CHECK(config_hash(c) != config_hash(ModelConfig::defaults(Variant::hybrid)));
  }

  TEST_CASE("partial files start from the variant defaults") {
    auto c = model_config_from_json(nlohmann::json{{"variant", "hybrid"}, {"dims", 64}, {"branch", {{"ratio", 0.25}}}});
    CHECK(c.dims == std::array<std::size_t, 3>{64, 64, 64});
    CHECK(c.branch.ratio == 0.25);
    CHECK(c.branch.enabled);
    CHECK(c.pe.mode == PEMode::transformer);
  }

  TEST_CASE("rejections") {
    using nlohmann::json;
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "hybrid"}, {"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "hybrid"}, {"pe", {{"bogus", 1}}}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"dims", 32}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "voxnet"}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "hybrid"}, {"dims", {1, 2}}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "hybrid"}, {"feature_channels", -1}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "hybrid"}, {"pe", {{"model_dim", 30}}}}), ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "backbone"}, {"pe", {{"mode", "transformer"}}}}),
                    ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json{{"variant", "hybrid"}, {"branch", {{"ratio", 0.0}}}}),
                    ConfigError);
    CHECK_THROWS_AS(model_config_from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(load_model_config("/nonexistent/cfg.json"), IoError);
  }
}
