#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dodnet/error.hpp"
#include "dodnet/gradsuite.hpp"
#include "dodnet/train.hpp"

using namespace dodnet;

namespace {
TrainConfig small_train() {
  TrainConfig t;
  t.max_steps = 4;
  t.batch_size = 1;
  t.patch = {16, 16, 16};
  t.window = {16, 16, 16};
  t.steps_per_epoch = 2;
  t.flip = true;
  t.seed = 9;
  return t;
}

Dataset small_data() { return synthetic_dataset({0, 1}, 1, 1, {16, 16, 16}, 3); }

std::vector<std::vector<float>> snapshot(const TransDoDNet<float>& m) {
  std::vector<std::vector<float>> out;
  for (const auto& e : m.params().entries()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}
}  // namespace

TEST_CASE("case seeds differ across tasks, indices and splits") {
  CHECK(case_seed(1, 0, 0, false) != case_seed(1, 1, 0, false));
  CHECK(case_seed(1, 0, 0, false) != case_seed(1, 0, 1, false));
  CHECK(case_seed(1, 0, 0, false) != case_seed(1, 0, 0, true));
  const auto d = small_data();
  CHECK(d.train.size() == 2);
  CHECK(d.val.size() == 2);
  CHECK(d.train[1].task_id == 1);
}

TEST_CASE("training is deterministic and alternates tasks") {
  TransDoDNet<float> a(micro_config(), 2), b(micro_config(), 2);
  Trainer ta(a, small_train(), small_data()), tb(b, small_train(), small_data());
  ta.run();
  tb.run();
  REQUIRE(ta.history().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ta.history()[i].task == i % 2);
    CHECK(ta.history()[i].total() == tb.history()[i].total());
  }
  CHECK(snapshot(a) == snapshot(b));
  CHECK(ta.history()[0].lr == small_train().lr_init);
}

TEST_CASE("resuming from a mid-run checkpoint matches an uninterrupted run") {
  TransDoDNet<float> full(micro_config(), 2);
  Trainer tf(full, small_train(), small_data());
  tf.run();

  TransDoDNet<float> first(micro_config(), 2);
  Trainer t1(first, small_train(), small_data());
  t1.step();
  t1.step();
  const auto ck = decode_checkpoint(encode_checkpoint(capture_checkpoint(first, &t1.optimizer(), small_train(), t1.state())));

  TransDoDNet<float> second(micro_config(), 77);
  Trainer t2(second, small_train(), small_data());
  restore_checkpoint(ck, second, &t2.optimizer());
  t2.set_state(ck.state);
  t2.run();
  CHECK(snapshot(second) == snapshot(full));
}

TEST_CASE("trainer rejects patches that do not fit") {
  TransDoDNet<float> m(micro_config(), 0);
  auto t = small_train();
  t.patch = {16, 15, 16};
  CHECK_THROWS_AS(Trainer(m, t, small_data()), ConfigError);
  t.patch = {16, 32, 16};
  CHECK_THROWS_AS(Trainer(m, t, small_data()), ConfigError);
  CHECK_THROWS_AS(Trainer(m, small_train(), Dataset{}), ConfigError);
  CHECK_THROWS_AS(Trainer(m, small_train(), synthetic_dataset({4}, 1, 0, {16, 16, 16}, 1)), TaskError);
}

TEST_CASE("metrics csv header and empty fields for missing dice") {
  const auto path = (std::filesystem::temp_directory_path() / "dodnet_metrics.csv").string();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  write_metrics_csv(path, {{1, 4, -0.5, 0.25, nan, 0.75}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "epoch,task,loss_dice,loss_ce,val_dice_organ,val_dice_tumor");
  CHECK(row.rfind("1,4,", 0) == 0);
  CHECK(row.find(",,") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("mean dice skips unlabeled channels") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(mean_dice({{0, 0.8, 0.6}, {4, nan, 0.4}, {6, 1.0, nan}}) == doctest::Approx(0.7));
}
