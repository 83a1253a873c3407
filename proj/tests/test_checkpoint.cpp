#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "pabee/checkpoint.hpp"

namespace pabee {
namespace {

bool bit_identical(const ModelParams& a, const ModelParams& b) {
  const auto x = flatten(a);
  const auto y = flatten(b);
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    StackConfig c;
    c.num_layers = 3 + seed;
    c.hidden_dim = 5;
    c.num_classes = 2 + seed % 3;
    c.task = seed == 4 ? Task::regression : Task::classification;
    c.nonlinearity = seed % 2 ? Nonlinearity::relu : Nonlinearity::tanh;
    c.seed = seed;
    auto p = init_params(c);
    p.heads[0].bias[0] = -0.1;
    p.layers[0].bias[1] = std::numeric_limits<double>::denorm_min();
    p.layers[0].bias[2] = -0.0;
    std::stringstream ss;
    write_checkpoint(ss, p);
    const auto q = read_checkpoint(ss);
    EXPECT_EQ(q.config, p.config);
    EXPECT_TRUE(bit_identical(p, q)) << "seed " << seed;
    EXPECT_TRUE(std::signbit(q.layers[0].bias[2]));
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pabee_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.ckpt";
  const auto p = init_params(StackConfig{});
  save_checkpoint(path, p);
  EXPECT_TRUE(bit_identical(p, load_checkpoint(path)));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingFileThrows) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/m.ckpt"), IoError);
  EXPECT_THROW(save_checkpoint("/nonexistent/dir/m.ckpt", init_params(StackConfig{})), IoError);
}

TEST(Checkpoint, CorruptInputsThrow) {
  std::stringstream good;
  write_checkpoint(good, init_params(StackConfig{}));
  const std::string text = good.str();

  auto fails = [](const std::string& s) {
    std::istringstream is(s);
    EXPECT_THROW(read_checkpoint(is), IoError) << s.substr(0, 80);
  };
  fails("");
  fails("hello world\n");
  fails("pabee-checkpoint 99\n");
  fails(text.substr(0, text.size() / 2));
  fails(text.substr(0, text.size() - 4));

  std::string wrong_count = text;
  wrong_count.replace(wrong_count.find("array embedding.weight 64"), 25, "array embedding.weight 63");
  fails(wrong_count);

  std::string bad_value = text;
  const auto pos = bad_value.find('\n', bad_value.find("array layer.0.bias"));
  bad_value.insert(pos + 1, "zz");
  fails(bad_value);

  std::string bad_task = text;
  bad_task.replace(bad_task.find("classification"), 14, "clustering");
  fails(bad_task);
}

}  // namespace
}  // namespace pabee
