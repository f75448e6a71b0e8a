#include "cvfi/config.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace cvfi;
using nlohmann::json;

namespace {

std::string rejection(const json& j)
{
    try {
        config_from_json(j);
    } catch (const std::invalid_argument& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults are valid and match the desk recipe")
{
    const PipelineConfig c;
    CHECK_NOTHROW(validate(c));
    CHECK(c.data.height == 64);
    CHECK(c.data.width == 64);
    CHECK(c.chunk_len == 8);
    CHECK(c.codec.spatial_stride == 4);
    CHECK(c.codec.temporal_stride == 2);
    CHECK(c.training.shift_train == 4.0);
    CHECK(c.training.s_min == 2);
    CHECK(c.training.s_max == 4);
    CHECK(c.inference.steps == 16);
    CHECK(c.inference.shift_infer == 8.0);
    CHECK(c.inference.mode == InferenceMode::skip_concat);
}

TEST_CASE("json round trip")
{
    PipelineConfig c;
    c.tile = 48;
    c.tile_stride = 16;
    c.data.spec.speed_range = {0.25, 3.0};
    c.inference.mode = InferenceMode::causal;
    c.training.seed = 99;
    const json j = config_to_json(c);
    const PipelineConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.inference.mode == InferenceMode::causal);
    CHECK(back.data.spec.speed_range.second == 3.0);
    CHECK(config_from_json(json::object()).tile == PipelineConfig{}.tile);
}

TEST_CASE("divisibility violations name the offending keys")
{
    CHECK(rejection({{"tiles", {{"stride", 18}}}}).find("tiles.stride") != std::string::npos);
    CHECK(rejection({{"tiles", {{"tile", 30}}}}).find("tiles.tile") != std::string::npos);
    CHECK(rejection({{"chunks", {{"len", 7}}}}).find("chunks.len") != std::string::npos);
    CHECK(rejection({{"tiles", {{"tile", 128}}}}).find("tiles.tile") != std::string::npos);
    CHECK(rejection({{"data", {{"height", 72}}}}).find("tiles.stride") != std::string::npos);
    CHECK(rejection({{"denoiser", {{"token_patch", 3}}}}).find("token_patch") != std::string::npos);
    CHECK(rejection({{"training", {{"s_min", 5}}}}).find("s_min") != std::string::npos);
    CHECK(rejection({{"inference", {{"mode", "sideways"}}}}) != "");
    CHECK(rejection({{"inference", {{"max_chunks_per_invocation", 2}}}}).find("max_chunks_per_invocation") != std::string::npos);
    CHECK(rejection({{"data", {{"speed_range", {1.0}}}}}).find("speed_range") != std::string::npos);
    CHECK(rejection({{"data", {{"frames", "many"}}}}).find("data.frames") != std::string::npos);
}

TEST_CASE("unknown keys are rejected by path")
{
    CHECK(rejection({{"tiles", {{"overlap", 16}}}}).find("tiles.overlap") != std::string::npos);
    CHECK(rejection({{"optimizer", 1}}).find("optimizer") != std::string::npos);
}

TEST_CASE("overrides")
{
    json j = config_to_json(PipelineConfig{});
    j = apply_overrides(j, {"tiles.stride=32", "inference.mode=causal", "data.speed_range=[1,2]"});
    CHECK(j["tiles"]["stride"] == 32);
    CHECK(j["inference"]["mode"] == "causal");
    const PipelineConfig c = config_from_json(j);
    CHECK(c.tile_stride == 32);
    CHECK(c.inference.mode == InferenceMode::causal);
    CHECK(c.data.spec.speed_range.first == 1.0);
    CHECK_THROWS_AS(apply_overrides(j, {"tiles.stride"}), std::invalid_argument);
    CHECK_THROWS_AS(apply_overrides(j, {"=3"}), std::invalid_argument);
}

TEST_CASE("load_config reads files and reports parse errors")
{
    const cvfi::test::TempDir dir("config");
    {
        std::ofstream(dir / "ok.json") << R"({"training": {"steps": 7}})";
        std::ofstream(dir / "bad.json") << "{ nope";
    }
    CHECK(load_config(dir / "ok.json").training.steps == 7);
    CHECK_THROWS_AS(load_config(dir / "bad.json"), std::invalid_argument);
    CHECK_THROWS(load_config(dir / "absent.json"));
}
