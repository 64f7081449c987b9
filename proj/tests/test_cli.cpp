#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "patchbag/bag_io.hpp"
#include "patchbag/checkpoint.hpp"
#include "patchbag/image.hpp"
#include "patchbag/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace patchbag;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string log;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class Workspace {
 public:
  Run run(const std::string& args, const std::string& env = "PATCHBAG_LOG=warn") const {
    const fs::path log = dir_.path() / "stderr.txt";
    const std::string cmd = "cd '" + dir_.path().string() + "' && " + env + " '" PATCHBAG_CLI "' " + args +
                            " > /dev/null 2> '" + log.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  fs::path operator/(const std::string& name) const { return dir_.path() / name; }

  // Small but well-formed dataset so that training stays fast.
  void small_synth(const std::string& out, const std::string& extra = "") const {
    spit(*this / "small.json",
         R"({"synth": {"bags": 60, "dim": 16, "patches": 12},
             "model": {"head_hidden": 8, "tag_hidden": 8},
             "train": {"epochs": 2, "lr": 0.001})" +
             extra + "}");
    REQUIRE(run("synth --config small.json --out " + out).code == 0);
  }

 private:
  testing::TempDir dir_;
};

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  if (files.size() != other) return false;
  for (const auto& f : files)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

// Dark textured tissue on the left, white glass on the right.
Image slide_image(std::size_t w, std::size_t h, std::size_t tissue_width) {
  Image img(w, h, 3, 250);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < tissue_width; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>(120 + (x * 13 + y * 7) % 40);
      img.at(x, y, 1) = static_cast<std::uint8_t>(60 + (x * 5 + y * 11) % 30);
      img.at(x, y, 2) = static_cast<std::uint8_t>(130 + (x + y) % 20);
    }
  return img;
}

}  // namespace

TEST_CASE("synth is deterministic and uses the default schema") {
  Workspace ws;
  ws.small_synth("a");
  REQUIRE(ws.run("synth --config small.json --out b").code == 0);
  CHECK(same_tree(ws / "a" / "train", ws / "b" / "train"));
  CHECK(same_tree(ws / "a" / "test", ws / "b" / "test"));
  CHECK(slurp(ws / "a" / "train" / "manifest") == slurp(ws / "b" / "train" / "manifest"));

  const auto train = read_bags(ws / "a" / "train");
  const auto schema = TagSchema::histology();
  CHECK(train.schema == schema);
  CHECK(train.size() + read_bags(ws / "a" / "val").size() + read_bags(ws / "a" / "test").size() == 60);

  REQUIRE(ws.run("synth --config small.json --seed 8 --out c").code == 0);
  CHECK_FALSE(slurp(ws / "a" / "train" / "features.bin") == slurp(ws / "c" / "train" / "features.bin"));
}

TEST_CASE("configuration errors exit with 2 and name the field") {
  Workspace ws;
  SUBCASE("split ratios") {
    spit(ws / "bad.json", R"({"split": {"train": 0.5, "val": 0.1, "test": 0.1}})");
    const auto r = ws.run("synth --config bad.json --out x");
    CHECK(r.code == 2);
    CHECK(r.log.find("split") != std::string::npos);
  }
  SUBCASE("negative ratio") {
    spit(ws / "bad.json", R"({"split": {"train": 1.2, "val": -0.2, "test": 0.0}})");
    const auto r = ws.run("synth --config bad.json --out x");
    CHECK(r.code == 2);
    CHECK(r.log.find("split.train") != std::string::npos);
  }
  SUBCASE("unknown key") {
    spit(ws / "bad.json", R"({"train": {"learning_rate": 0.1}})");
    const auto r = ws.run("synth --config bad.json --out x");
    CHECK(r.code == 2);
    CHECK(r.log.find("train.learning_rate") != std::string::npos);
  }
  SUBCASE("wrong type") {
    spit(ws / "bad.json", R"({"synth": {"bags": -3}})");
    const auto r = ws.run("synth --config bad.json --out x");
    CHECK(r.code == 2);
    CHECK(r.log.find("synth.bags") != std::string::npos);
  }
  SUBCASE("invalid JSON") {
    spit(ws / "bad.json", "{");
    CHECK(ws.run("synth --config bad.json --out x").code == 2);
  }
  SUBCASE("bad variant flag") { CHECK(ws.run("synth --variant dense --out x").code == 2); }
  SUBCASE("unknown flag") { CHECK(ws.run("synth --nope").code == 2); }
  SUBCASE("bad log level") { CHECK(ws.run("synth --out x", "PATCHBAG_LOG=loud").code == 2); }
  SUBCASE("missing data directory") {
    const auto r = ws.run("train --data nowhere --out t");
    CHECK(r.code == 2);
    CHECK(r.log.find("nowhere") != std::string::npos);
  }
}

TEST_CASE("flags override the config file") {
  Workspace ws;
  spit(ws / "c.json", R"({"seed": 1, "synth": {"bags": 30, "dim": 16, "patches": 12}})");
  REQUIRE(ws.run("synth --config c.json --seed 5 --out a").code == 0);
  CHECK(slurp(ws / "a" / "config.json").find("\"seed\": 5") != std::string::npos);
  spit(ws / "d.json", R"({"seed": 5, "synth": {"bags": 30, "dim": 16, "patches": 12}})");
  REQUIRE(ws.run("synth --config d.json --out b").code == 0);
  CHECK(same_tree(ws / "a" / "train", ws / "b" / "train"));
}

TEST_CASE("train, eval and export") {
  Workspace ws;
  ws.small_synth("data");

  REQUIRE(ws.run("train --config small.json --data data --out run1").code == 0);
  REQUIRE(ws.run("train --config small.json --data data --out run2").code == 0);
  CHECK(same_tree(ws / "run1" / "checkpoint", ws / "run2" / "checkpoint"));
  CHECK(slurp(ws / "run1" / "history.csv") == slurp(ws / "run2" / "history.csv"));
  CHECK(slurp(ws / "run1" / "history.csv").rfind("epoch,train_loss,val_macro_f1_stain", 0) == 0);

  SUBCASE("ablation arms map onto model dimensions") {
    REQUIRE(ws.run("train --config small.json --data data --heads 0 --out mta").code == 0);
    const auto mta = load_checkpoint(ws / "mta" / "checkpoint");
    CHECK(mta.dims.heads == 0);
    CHECK(mta.gated_heads.empty());
    const auto pt = load_checkpoint(ws / "run1" / "checkpoint");
    CHECK(pt.dims.heads == 3);
    CHECK(pt.dims.variant == Variant::gated);
    REQUIRE(ws.run("train --config small.json --data data --heads 2 --variant sdpa --out sdpa").code == 0);
    const auto sdpa = load_checkpoint(ws / "sdpa" / "checkpoint");
    CHECK(sdpa.dims.variant == Variant::sdpa);
    CHECK(sdpa.sdpa_heads.size() == 2);
  }
  SUBCASE("eval writes the report and confusion plots") {
    REQUIRE(ws.run("eval --checkpoint run1/checkpoint --data data --out ev").code == 0);
    const auto report = slurp(ws / "ev" / "metrics.json");
    for (const char* key : {"\"macro_f1\"", "\"micro_f1\"", "\"average\"", "\"stain\"", "\"species\"", "\"organ\""})
      CHECK(report.find(key) != std::string::npos);
    for (const char* task : {"stain", "species", "organ"})
      CHECK(fs::exists(ws / "ev" / (std::string("confusion_") + task + ".svg")));
    REQUIRE(ws.run("eval --checkpoint run1/checkpoint --data data/train --out ev_train").code == 0);
    CHECK(fs::exists(ws / "ev_train" / "metrics.json"));
  }
  SUBCASE("eval rejects a checkpoint trained on another schema") {
    spit(ws / "other.json", R"({"schema": [{"name": "grade", "classes": ["low", "high"]}],
                                "synth": {"bags": 20, "dim": 16, "patches": 12}})");
    REQUIRE(ws.run("synth --config other.json --out other").code == 0);
    const auto r = ws.run("eval --checkpoint run1/checkpoint --data other --out ev");
    CHECK(r.code == 2);
    CHECK(r.log.find("grade") != std::string::npos);
    CHECK(r.log.find("organ") != std::string::npos);
  }
  SUBCASE("missing checkpoint is an I/O failure") {
    CHECK(ws.run("eval --checkpoint nothing --data data --out ev").code == 3);
  }
  SUBCASE("corrupted bags are an integrity failure") {
    const fs::path blob = ws / "data" / "test" / "features.bin";
    fs::resize_file(blob, fs::file_size(blob) - 8);
    CHECK(ws.run("eval --checkpoint run1/checkpoint --data data --out ev").code == 4);
  }
  SUBCASE("export writes rankings") {
    REQUIRE(ws.run("export-attention --checkpoint run1/checkpoint --data data --out att").code == 0);
    CHECK(slurp(ws / "att" / "attention.csv").rfind("bag_id,task,rank,patch,weight\n", 0) == 0);
  }
}

TEST_CASE("export on a uniform-attention checkpoint ranks patches in natural order") {
  Workspace ws;
  ws.small_synth("data");
  ModelDims dims;
  dims.feature_dim = 16;
  dims.head_hidden = 8;
  dims.tag_hidden = 8;
  auto params = ModelParams::initialize(dims, TagSchema::histology(), 3);
  for (auto& tag : params.tags)
    for (auto& v : tag.score.mutable_data()) v = 0.0;
  save_checkpoint(params, ws / "uniform");
  REQUIRE(ws.run("export-attention --checkpoint uniform --data data/val --out att").code == 0);

  std::ifstream in(ws / "att" / "attention.csv");
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, task, rank, patch;
    std::getline(ss, id, ',');
    std::getline(ss, task, ',');
    std::getline(ss, rank, ',');
    std::getline(ss, patch, ',');
    CHECK(rank == patch);
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("preprocess") {
  Workspace ws;
  SUBCASE("emits exactly M patches per slide") {
    write_pnm(slide_image(320, 300, 260), ws / "s1.ppm");
    write_pnm(slide_image(300, 300, 300), ws / "s2.ppm");
    spit(ws / "slides.tsv", "# id\timage\tstain\tspecies\torgan\n"
                            "s1\ts1.ppm\tH&E\tMouse\tLiver\n"
                            "s2\ts2.ppm\tIHC\tRat\tSkin Dorsal\n");
    spit(ws / "pre.json", R"({"preprocess": {"patches": 32, "window": 240}})");
    REQUIRE(ws.run("preprocess --config pre.json --data slides.tsv --out bags").code == 0);
    const auto bags = read_bags(ws / "bags");
    REQUIRE(bags.size() == 2);
    for (const auto& b : bags.bags) CHECK(b.patches == 32);
    CHECK(bags.dim == 790);
    CHECK(bags.bags[1].labels == std::vector<std::size_t>{1, 4, 7});

    REQUIRE(ws.run("preprocess --config pre.json --data slides.tsv --out again").code == 0);
    CHECK(same_tree(ws / "bags", ws / "again"));
  }
  SUBCASE("an all-white slide has no foreground") {
    write_pnm(Image(300, 300, 3, 255), ws / "white.ppm");
    spit(ws / "slides.tsv", "w\twhite.ppm\tH&E\tMouse\tLiver\n");
    const auto r = ws.run("preprocess --data slides.tsv --out bags");
    CHECK(r.code == 4);
    CHECK(r.log.find("slide w") != std::string::npos);
  }
  SUBCASE("unknown class name") {
    write_pnm(slide_image(300, 300, 300), ws / "s.ppm");
    spit(ws / "slides.tsv", "s\ts.ppm\tH&E\tCat\tLiver\n");
    CHECK(ws.run("preprocess --data slides.tsv --out bags").code == 2);
  }
  SUBCASE("missing image") {
    spit(ws / "slides.tsv", "s\tgone.ppm\tH&E\tMouse\tLiver\n");
    CHECK(ws.run("preprocess --data slides.tsv --out bags").code == 3);
  }
}
