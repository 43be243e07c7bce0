#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "surfake/common/error.hpp"
#include "surfake/common/hash.hpp"
#include "surfake/common/image.hpp"
#include "surfake/common/json_io.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/common/tensor.hpp"

namespace fs = std::filesystem;
using namespace surfake;

TEST(Hash, KnownDigests) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string_view("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hash, FileMatchesBytes) {
  const fs::path p = fs::temp_directory_path() / "surfake_hash_test.txt";
  write_text(p, "abc");
  EXPECT_EQ(sha256_file(p), sha256_hex(std::string_view("abc")));
  fs::remove(p);
  EXPECT_THROW(sha256_file(p), MissingArtifactError);
}

TEST(Rng, EngineMatchesStandardSequence) {
  // The standard pins the 10000th output of a default-seeded mt19937_64.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(Rng, DrawsStayInRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.uniform_below(13), 13u);
  }
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Rng, ShuffleIsPermutationAndRepeatable) {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[i] = i;
  b = a;
  Rng r1(3), r2(3);
  r1.shuffle(a);
  r2.shuffle(b);
  EXPECT_EQ(a, b);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, DerivedSeedsDifferPerStream) {
  std::set<std::uint64_t> seen;
  for (const char* s : {"split", "init", "shuffle", "embedding", "dropout"}) seen.insert(derive_seed(0, s));
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_EQ(derive_seed(42, "split"), derive_seed(42, "split"));
  EXPECT_NE(derive_seed(42, "split"), derive_seed(43, "split"));
}

TEST(Tensor, ShapeAndReshape) {
  Tensor t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(shape_string(t.shape()), "[2x3x4]");
  const Tensor r = t.reshaped({6, 4});
  EXPECT_EQ(r.dim(0), 6);
  EXPECT_EQ(r[23], 1.5f);
  EXPECT_THROW(t.reshaped({5, 5}), InvalidInputError);
}

TEST(Image, PngRoundTrip) {
  Image8 img(5, 7, 3);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(y * 40 + x * 3 + c * 80);
  const fs::path p = fs::temp_directory_path() / "surfake_image_test.png";
  write_png(p, img);
  EXPECT_EQ(read_image(p), img);
  fs::remove(p);
}

TEST(JsonIo, RoundTrip) {
  const fs::path p = fs::temp_directory_path() / "surfake_json_test.json";
  const Json j = {{"a", 1}, {"b", {1.5, 2.5}}, {"c", "x"}};
  write_json(p, j);
  EXPECT_EQ(read_json(p), j);
  fs::remove(p);
  EXPECT_THROW(read_json(p), MissingArtifactError);
}
