#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lesion/config.hpp"
#include "lesion/error.hpp"

using namespace lesion;
namespace fs = std::filesystem;

namespace {

fs::path write_cfg(const std::string& name, const std::string& text) {
  const fs::path dir = fs::path(::testing::TempDir()) / "lesion_cfg";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

RunConfig parse(const std::string& text) {
  KeyValues kv;
  kv.load_file(write_cfg("t.cfg", text));
  return RunConfig::from(kv);
}

}  // namespace

TEST(Config, Defaults) {
  const RunConfig c = RunConfig::from(KeyValues{});
  EXPECT_EQ(c.loss.mode, LossMode::weighted_bootstrap);
  EXPECT_EQ(c.loss.beta, 0.9);
  EXPECT_EQ(c.schedule.epochs, 15u);
  EXPECT_EQ(c.schedule.lr_drop_epoch, 12u);
  EXPECT_EQ(c.network.channels.size(), 5u);
  EXPECT_EQ(c.eval.k, 5u);
}

TEST(Config, ParsesValuesAndComments) {
  const RunConfig c = parse(
      "# header\n"
      "net.channels = 4, 8,8   # trailing\n"
      "net.roi_stages = lesion,whole,whole\n"
      "net.roi_grid = 3x4\n"
      "loss.mode = plain\n"
      "train.lr = 2.5e-3\n"
      "eval.labels = mined\n"
      "threads = 2\n");
  EXPECT_EQ(c.network.channels, (std::vector<std::size_t>{4, 8, 8}));
  EXPECT_EQ(c.network.roi[1], RoiSource::whole);
  EXPECT_EQ(c.network.grid_h, 3u);
  EXPECT_EQ(c.network.grid_w, 4u);
  EXPECT_EQ(c.loss.mode, LossMode::plain);
  EXPECT_EQ(c.schedule.lr, 2.5e-3);
  EXPECT_FALSE(c.eval.use_truth);
  EXPECT_EQ(c.schedule.threads, 2u);
}

TEST(Config, RelativePathsFollowTheFile) {
  const fs::path p = write_cfg("paths.cfg", "lexicon = data/lex.tsv\ntest_corpus = /abs/t.jsonl\n");
  KeyValues kv;
  kv.load_file(p);
  const RunConfig c = RunConfig::from(kv);
  EXPECT_EQ(c.lexicon, (p.parent_path() / "data/lex.tsv").lexically_normal());
  EXPECT_EQ(c.test_corpus, fs::path("/abs/t.jsonl"));
}

TEST(Config, OverridesWin) {
  KeyValues kv;
  kv.load_file(write_cfg("o.cfg", "train.epochs = 3\n"));
  kv.set_override("train.epochs=7");
  EXPECT_EQ(RunConfig::from(kv).schedule.epochs, 7u);
  EXPECT_THROW(kv.set_override("no_equals"), ConfigError);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse("nonsense.key = 1\n"), ConfigError);
  EXPECT_THROW(parse("train.epochs = three\n"), ConfigError);
  EXPECT_THROW(parse("train.epochs = 0\n"), ConfigError);
  EXPECT_THROW(parse("loss.mode = focal\n"), ConfigError);
  EXPECT_THROW(parse("loss.beta = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("split.test_fraction = 1\n"), ConfigError);
  EXPECT_THROW(parse("net.roi_stages = lesion,middle\n"), ConfigError);
  EXPECT_THROW(parse("just a line\n"), ConfigError);
  EXPECT_THROW(parse("threads = 0\n"), ConfigError);
  KeyValues kv;
  EXPECT_THROW(kv.load_file("/nonexistent/x.cfg"), ConfigError);
}

TEST(Config, CanonicalTextRoundTrips) {
  const RunConfig a = parse("train.lr = 0.1\nloss.beta = 0.85\nnet.channels = 2,2\nnet.roi_stages = lesion,whole\n");
  const std::string text = a.to_text();
  const RunConfig b = parse(text);
  EXPECT_EQ(b.to_text(), text);
  EXPECT_EQ(b.schedule.lr, 0.1);
  EXPECT_EQ(b.loss.beta, 0.85);
}
