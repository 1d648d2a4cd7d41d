#include "lvmark/data.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace lvmark;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lvmark_data_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<ManifestRecord> write_fixture(const fs::path& dir, int count) {
  std::vector<ManifestRecord> records;
  for (int i = 0; i < count; ++i) {
    const EchoSample s = generate_phantom(100 + i, 32);
    ManifestRecord rec;
    rec.id = s.id;
    rec.image_path = rec.id + ".pgm";
    rec.points = s.landmarks.points;
    rec.spacing_mm = s.landmarks.spacing_mm;
    rec.split = i == 0 ? Split::kTrain : i == 1 ? Split::kVal : Split::kTest;
    write_pgm(s.image, dir / rec.image_path);
    records.push_back(rec);
  }
  write_manifest(dir / "manifest.csv", records);
  return records;
}

}  // namespace

TEST_CASE("manifest round-trip keeps coordinates bit-exact") {
  const auto dir = fresh_dir("roundtrip");
  const auto records = write_fixture(dir, 3);
  const auto samples = load_manifest(dir / "manifest.csv");
  REQUIRE(samples.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(samples[i].id == records[i].id);
    for (int p = 0; p < 4; ++p) {
      CHECK(samples[i].landmarks.points[p].h == records[i].points[p].h);
      CHECK(samples[i].landmarks.points[p].w == records[i].points[p].w);
    }
    CHECK(samples[i].landmarks.spacing_mm == records[i].spacing_mm);
    CHECK(samples[i].image.h == 32);
  }
  CHECK(samples[0].split == Split::kTrain);
  CHECK(samples[1].split == Split::kVal);
  CHECK(samples[2].split == Split::kTest);

  const auto train_only = filter_split(samples, Split::kTrain);
  REQUIRE(train_only.size() == 1);
  CHECK(train_only[0].id == samples[0].id);
}

TEST_CASE("empty manifest loads as an empty list") {
  const auto dir = fresh_dir("empty");
  write_manifest(dir / "manifest.csv", {});
  CHECK(load_manifest(dir / "manifest.csv").empty());
}

TEST_CASE("manifest validation failures carry context") {
  const auto dir = fresh_dir("bad");
  write_fixture(dir, 1);

  SECTION("landmark on the frame edge is rejected") {
    std::ofstream os(dir / "manifest.csv");
    os << kManifestHeader << "\n";
    os << "s1,phantom_100.pgm,32,1,2,2,3,3,4,4,0.5,train\n";  // h1 == H
    os.close();
    CHECK_THROWS_WITH(load_manifest(dir / "manifest.csv"),
                      Catch::Matchers::ContainsSubstring("outside frame"));
  }

  SECTION("missing image file names the record") {
    std::ofstream os(dir / "manifest.csv");
    os << kManifestHeader << "\n";
    os << "s9,nope.pgm,1,1,2,2,3,3,4,4,0.5,train\n";
    os.close();
    CHECK_THROWS_WITH(load_manifest(dir / "manifest.csv"),
                      Catch::Matchers::ContainsSubstring("'s9'"));
  }

  SECTION("malformed row reports the line number") {
    std::ofstream os(dir / "manifest.csv");
    os << kManifestHeader << "\n";
    os << "s1,phantom_100.pgm,1,1,2,2,3,3,4,4,0.5,train\n";
    os << "s2,phantom_100.pgm,1,oops,2,2,3,3,4,4,0.5,train\n";
    os.close();
    CHECK_THROWS_WITH(load_manifest(dir / "manifest.csv"),
                      Catch::Matchers::ContainsSubstring("line 3"));
  }

  SECTION("wrong field count reports the line number") {
    std::ofstream os(dir / "manifest.csv");
    os << kManifestHeader << "\n";
    os << "s1,phantom_100.pgm,1,1\n";
    os.close();
    CHECK_THROWS_WITH(load_manifest(dir / "manifest.csv"),
                      Catch::Matchers::ContainsSubstring("line 2"));
  }

  SECTION("duplicate ids are rejected") {
    std::ofstream os(dir / "manifest.csv");
    os << kManifestHeader << "\n";
    os << "s1,phantom_100.pgm,1,1,2,2,3,3,4,4,0.5,train\n";
    os << "s1,phantom_100.pgm,1,1,2,2,3,3,4,4,0.5,val\n";
    os.close();
    CHECK_THROWS_WITH(load_manifest(dir / "manifest.csv"),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  }

  SECTION("bad header is rejected") {
    std::ofstream os(dir / "manifest.csv");
    os << "id,image\n";
    os.close();
    CHECK_THROWS_WITH(load_manifest(dir / "manifest.csv"),
                      Catch::Matchers::ContainsSubstring("header"));
  }
}

TEST_CASE("phantom generation is deterministic per seed") {
  const EchoSample a = generate_phantom(42, 64);
  const EchoSample b = generate_phantom(42, 64);
  CHECK(a.image.px == b.image.px);
  for (int p = 0; p < 4; ++p) {
    CHECK(a.landmarks.points[p].h == b.landmarks.points[p].h);
    CHECK(a.landmarks.points[p].w == b.landmarks.points[p].w);
  }
  const EchoSample c = generate_phantom(43, 64);
  CHECK(a.image.px != c.image.px);
}

TEST_CASE("phantom landmarks are valid and ordered along the measurement line") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const EchoSample s = generate_phantom(seed, 64);
    s.landmarks.validate();
    // order along the downward measurement direction
    CHECK(s.landmarks.points[0].h < s.landmarks.points[1].h);
    CHECK(s.landmarks.points[1].h < s.landmarks.points[2].h);
    CHECK(s.landmarks.points[2].h < s.landmarks.points[3].h);
    // wall thicknesses and chamber gap are nonzero
    const MeasurementTriple m = measurements_from_landmarks(s.landmarks);
    CHECK(m.ivs_mm > 0.0);
    CHECK(m.lvid_mm > m.ivs_mm * 0.5);
    CHECK(m.lvpw_mm > 0.0);
  }
}

TEST_CASE("phantom image has bright walls against a dark chamber") {
  const EchoSample s = generate_phantom(7, 64);
  // sample intensity midway inside each wall vs the chamber midpoint
  auto at_point = [&](double h, double w) {
    return s.image.at(static_cast<int>(h), static_cast<int>(w));
  };
  const auto& p = s.landmarks.points;
  const double wall1 = at_point((p[0].h + p[1].h) / 2, (p[0].w + p[1].w) / 2);
  const double chamber = at_point((p[1].h + p[2].h) / 2, (p[1].w + p[2].w) / 2);
  const double wall2 = at_point((p[2].h + p[3].h) / 2, (p[2].w + p[3].w) / 2);
  CHECK(wall1 > chamber + 0.2);
  CHECK(wall2 > chamber + 0.2);
}

TEST_CASE("phantom labels nest across the first two levels") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const EchoSample s = generate_phantom(seed, 64);
    const LevelLabels l1 = induce_level_labels(s.landmarks, 1);
    const LevelLabels l2 = induce_level_labels(s.landmarks, 2);
    for (int p = 0; p < 4; ++p) {
      int coarse = -1, fine = -1;
      for (int i = 0; i < 4; ++i) {
        if (l1.values(i, p) == 1.0) coarse = i;
      }
      for (int i = 0; i < 16; ++i) {
        if (l2.values(i, p) == 1.0) fine = i;
      }
      REQUIRE(coarse >= 0);
      REQUIRE(fine >= 0);
      CHECK(coarse == (fine / 4 / 2) * 2 + (fine % 4) / 2);
    }
  }
}

TEST_CASE("resize_sample rescales image, landmarks and spacing together") {
  const EchoSample s = generate_phantom(3, 64);

  const EchoSample same = resize_sample(s, 64, 64);
  CHECK(same.image.px == s.image.px);
  CHECK(same.landmarks.spacing_mm == s.landmarks.spacing_mm);

  const EchoSample half = resize_sample(s, 32, 32);
  CHECK(half.image.h == 32);
  CHECK(half.landmarks.frame_h == 32);
  CHECK(half.landmarks.spacing_mm == Catch::Approx(s.landmarks.spacing_mm * 2.0));
  for (int p = 0; p < 4; ++p) {
    CHECK(half.landmarks.points[p].h == Catch::Approx(s.landmarks.points[p].h / 2.0));
  }

  const MeasurementTriple before = measurements_from_landmarks(s.landmarks);
  const MeasurementTriple after = measurements_from_landmarks(half.landmarks);
  CHECK(after.ivs_mm == Catch::Approx(before.ivs_mm).epsilon(1e-12));
  CHECK(after.lvid_mm == Catch::Approx(before.lvid_mm).epsilon(1e-12));
  CHECK(after.lvpw_mm == Catch::Approx(before.lvpw_mm).epsilon(1e-12));

  CHECK_THROWS_AS(resize_sample(s, 32, 16), std::invalid_argument);
}
