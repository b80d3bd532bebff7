#include <doctest.h>

#include <filesystem>

#include "dodnet/checkpoint.hpp"
#include "dodnet/error.hpp"
#include "dodnet/gradsuite.hpp"

using namespace dodnet;

namespace {
CheckpointData sample(TransDoDNet<float>& model, AdamW<float>& opt) {
  Rng rng(5);
  for (auto& e : model.params().entries())
    for (auto& g : e.tensor.mutable_grad()) g = static_cast<float>(rng.normal());
  opt.step(1e-3);
  return capture_checkpoint(model, &opt, TrainConfig{}, TrainState{7, 99, 3});
}
}  // namespace

TEST_CASE("checkpoints round-trip parameters, moments and state") {
  const auto cfg = micro_config();
  TransDoDNet<float> model(cfg, 1);
  AdamW<float> opt(model.params(), AdamWConfig{});
  const auto ck = sample(model, opt);
  const auto bytes = encode_checkpoint(ck);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.model == cfg);
  CHECK(back.state == TrainState{7, 99, 3});
  CHECK(back.adam_steps == 1);
  CHECK(back.names == ck.names);
  CHECK(encode_checkpoint(back) == bytes);

  TransDoDNet<float> other(cfg, 2);
  AdamW<float> opt2(other.params(), AdamWConfig{});
  restore_checkpoint(back, other, &opt2);
  CHECK(opt2.steps() == 1);
  for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
    const auto a = model.params().entries()[i].tensor.data();
    const auto b = other.params().entries()[i].tensor.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
    CHECK(opt.first_moments()[i] == opt2.first_moments()[i]);
    CHECK(opt.second_moments()[i] == opt2.second_moments()[i]);
  }
}

TEST_CASE("corrupt checkpoints are format errors") {
  TransDoDNet<float> model(micro_config(), 1);
  AdamW<float> opt(model.params(), AdamWConfig{});
  const auto bytes = encode_checkpoint(sample(model, opt));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + cut)), FormatError);
  }
  auto bad = bytes;
  bad[3] ^= 0xff;
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  auto extra = bytes;
  extra.push_back(1);
  CHECK_THROWS_AS(decode_checkpoint(extra), FormatError);
}

TEST_CASE("restoring into a different architecture names the differing fields") {
  auto cfg = micro_config();
  TransDoDNet<float> model(cfg, 1);
  const auto ck = capture_checkpoint<float>(model, nullptr, TrainConfig{}, TrainState{});
  cfg.head_depth = 4;
  cfg.points = 3;
  TransDoDNet<float> other(cfg, 1);
  try {
    restore_checkpoint<float>(ck, other, nullptr);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("head_depth") != std::string::npos);
    CHECK(msg.find("points") != std::string::npos);
  }
}

TEST_CASE("checkpoint files") {
  const auto path = (std::filesystem::temp_directory_path() / "dodnet_test.ckpt").string();
  TransDoDNet<float> model(micro_config(), 1);
  const auto ck = capture_checkpoint<float>(model, nullptr, TrainConfig{}, TrainState{1, 2, 3});
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(!back.has_moments);
  CHECK(back.values == ck.values);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
