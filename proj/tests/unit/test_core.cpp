#include <fbm/core/config.hpp>
#include <fbm/core/container.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace fbm;

TEST(Config, ParsesSectionsListsAndComments) {
  const Config c = Config::parse(R"(
# leading comment
top = 1
[env]
kind = "gridworld"   # trailing comment
grid_size = 5
[occlusion]
mode = noisy
sigma_noise = 0.2
[sweep]
values = [0.05, 0.1, 0.2]
names = [a, "b c"]
flag = true
)");
  EXPECT_EQ(c.get_int("top", 0), 1);
  EXPECT_EQ(c.get_string("env.kind", ""), "gridworld");
  EXPECT_EQ(c.get_int("env.grid_size", 0), 5);
  EXPECT_DOUBLE_EQ(c.get_double("occlusion.sigma_noise", 0), 0.2);
  EXPECT_EQ(c.get_doubles("sweep.values", {}), (std::vector<double>{0.05, 0.1, 0.2}));
  EXPECT_EQ(c.get_strings("sweep.names", {}), (std::vector<std::string>{"a", "b c"}));
  EXPECT_TRUE(c.get_bool("sweep.flag", false));
  EXPECT_EQ(c.get_int("missing.key", 9), 9);
}

TEST(Config, TypeErrorsAreUsageErrors) {
  const Config c = Config::parse("[a]\nx = notanumber\n");
  EXPECT_THROW(c.get_double("a.x", 0), UsageError);
  EXPECT_THROW(c.get_int("a.x", 0), UsageError);
  EXPECT_THROW(c.get_bool("a.x", false), UsageError);
  EXPECT_THROW(Config::parse("[a]\nno equals sign\n"), UsageError);
}

TEST(Config, MergeOverridesAndRoundTrips) {
  Config base = Config::parse("[train]\nlr = 0.001\nbatch = 64\n");
  const Config over = Config::parse("[train]\nbatch = 128\n");
  base.merge(over);
  EXPECT_EQ(base.get_int("train.batch", 0), 128);
  EXPECT_DOUBLE_EQ(base.get_double("train.lr", 0), 0.001);
  const Config again = Config::parse(base.to_text());
  EXPECT_EQ(again.get_int("train.batch", 0), 128);
  EXPECT_DOUBLE_EQ(again.get_double("train.lr", 0), 0.001);
}

TEST(Container, RoundTripIsBitwise) {
  io::Container c;
  c.header["name"] = "x";
  Matrix a(2, 3);
  a << 1.0, -0.0, 3.5, 1e-300, std::nextafter(1.0, 2.0), -7.25;
  c.blocks.push_back(a);
  c.blocks.push_back(Matrix::Zero(0, 4));
  const std::string path = (std::filesystem::temp_directory_path() / "fbm_container.bin").string();
  io::write_container(path, "TESTMAG1", c);
  const io::Container back = io::read_container(path, "TESTMAG1");
  EXPECT_EQ(back.header.at("name"), "x");
  ASSERT_EQ(back.blocks.size(), 2u);
  EXPECT_EQ(std::memcmp(back.blocks[0].data(), a.data(), sizeof(double) * 6), 0);
  EXPECT_EQ(back.blocks[1].cols(), 4);
  EXPECT_THROW(io::read_container(path, "OTHERMAG"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Seeds, DerivedStreamsDifferAndAreStable) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
}
