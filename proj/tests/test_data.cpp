#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "dodnet/error.hpp"
#include "dodnet/synth.hpp"
#include "dodnet/tasks.hpp"
#include "dodnet/volume_io.hpp"

using namespace dodnet;

TEST_CASE("task registry carries the partial-label flags") {
  const auto& t = default_tasks();
  REQUIRE(t.size() == 7);
  for (std::size_t i = 0; i < 4; ++i) CHECK((t[i].organ_labeled && t[i].tumor_labeled));
  CHECK((!t[4].organ_labeled && t[4].tumor_labeled));
  CHECK((!t[5].organ_labeled && t[5].tumor_labeled));
  CHECK((t[6].organ_labeled && !t[6].tumor_labeled));
  CHECK(task_by_id(4).name == "Colon");
  CHECK_THROWS_AS(task_by_id(7), TaskError);
}

TEST_CASE("CT preprocessing clamps and scales") {
  CHECK(preprocess_ct(0.0) == 0.0f);
  CHECK(preprocess_ct(325.0) == 1.0f);
  CHECK(preprocess_ct(1000.0) == 1.0f);
  CHECK(preprocess_ct(-1000.0) == -1.0f);
  CHECK(preprocess_ct(kOrganHu) == doctest::Approx(0.3));
}

TEST_CASE("generated cases are deterministic and respect the task's labels") {
  const Extent3 shape{16, 32, 32};
  for (const auto& task : default_tasks()) {
    const auto a = generate_case(task, 42, shape), b = generate_case(task, 42, shape);
    CHECK(a.x == b.x);
    CHECK(a.y == b.y);
    CHECK(generate_case(task, 43, shape).x != a.x);
    std::size_t organ = 0, tumor = 0;
    for (auto v : a.y) {
      organ += v == 1;
      tumor += v == 2;
    }
    CHECK((organ > 0) == task.organ_labeled);
    CHECK((tumor > 0) == task.tumor_labeled);
    for (float v : a.x) CHECK((v >= -1.0f && v <= 1.0f));
  }
}

TEST_CASE("label classes carry their intensities") {
  // Tumor overrides organ in the label map, so check the intensity classes.
  const auto c = generate_case(task_by_id(0), 7, {16, 48, 48});
  double so = 0, st = 0;
  std::size_t no = 0, nt = 0;
  for (std::size_t i = 0; i < c.voxels(); ++i) {
    if (c.y[i] == 1) so += c.x[i], ++no;
    if (c.y[i] == 2) st += c.x[i], ++nt;
  }
  REQUIRE(no > 0);
  REQUIRE(nt > 0);
  CHECK(so / double(no) == doctest::Approx(0.3).epsilon(0.05));
  CHECK(st / double(nt) == doctest::Approx(-0.2).epsilon(0.05));
}

TEST_CASE("ellipsoid rasterisation tests voxel centres") {
  const auto m = rasterize_ellipsoid({5, 5, 5}, {2, 2, 2}, {1, 1, 1});
  std::size_t n = 0;
  for (auto v : m) n += v;
  CHECK(n == 7);  // centre plus its six neighbours
  CHECK_THROWS_AS(generate_case(task_by_id(0), 1, {8, 32, 32}), ConfigError);
}

TEST_CASE("volume codec round-trips bit-exactly and reports bad input with offsets") {
  const auto c = generate_case(task_by_id(2), 5, {16, 20, 24});
  const auto bytes = encode_volume(c);
  CHECK(bytes.size() == kVolumeHeaderBytes + c.voxels() * 5);
  const auto d = decode_volume(bytes);
  CHECK(d.shape == c.shape);
  CHECK(d.task_id == c.task_id);
  CHECK(d.seed == c.seed);
  CHECK(std::memcmp(d.x.data(), c.x.data(), c.x.size() * 4) == 0);
  CHECK(d.y == c.y);
  CHECK(encode_volume(d) == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_volume(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  auto cut = bytes;
  cut.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_volume(cut), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_volume(extra), FormatError);
  CHECK_THROWS_AS(decode_volume(std::vector<std::uint8_t>(10, 0)), FormatError);
}

TEST_CASE("files and manifests round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "dodnet_test_data";
  std::filesystem::remove_all(dir);
  const auto c = generate_case(task_by_id(6), 9, {16, 16, 16});
  write_volume(c, (dir / "a" / "case.vol").string());
  CHECK(read_volume((dir / "a" / "case.vol").string()).y == c.y);
  const std::vector<ManifestEntry> m{{"a/case.vol", 6, "train"}, {"b.vol", 1, "val"}};
  write_manifest((dir / "manifest.json").string(), m);
  const auto back = read_manifest((dir / "manifest.json").string());
  REQUIRE(back.size() == 2);
  CHECK(back[1].path == "b.vol");
  CHECK(back[1].split == "val");
  CHECK_THROWS_AS(read_volume((dir / "missing.vol").string()), IoError);
  std::filesystem::remove_all(dir);
}
