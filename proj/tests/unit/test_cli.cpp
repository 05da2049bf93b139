#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "relprop/cli.hpp"
#include "relprop/csv.hpp"
#include "relprop/nnwb.hpp"
#include "relprop/pgm.hpp"

using namespace relprop;
using relprop::testing::read_text;
using relprop::testing::TempDir;
using relprop::testing::write_text_file;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Process {
  int status = -1;
  std::string err;
};

// Runs the installed binary, capturing stderr.
Process run_binary(const std::string& args, const fs::path& scratch) {
  const auto err = scratch / "stderr.txt";
  const std::string cmd =
      std::string(RELPROP_BINARY) + " " + args + " >/dev/null 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, fs::exists(err) ? read_text(err) : ""};
}

int run(std::vector<std::string> args) { return cli::run(args); }

json read_json(const fs::path& p) { return json::parse(read_text(p)); }

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("forward") {
  TempDir dir;
  nnwb::save_weights(testing::toynet(1, true, true), dir / "toynet.nnwb");
  pgm::save(Tensor::zeros({8, 8}), dir / "zero.pgm");
  Rng rng(3);
  pgm::save(testing::random_tensor({8, 8}, rng, 0, 255), dir / "noise.pgm");

  REQUIRE(run({"forward", "--model", (dir / "toynet.nnwb").string(), "--image",
               (dir / "zero.pgm").string(), "--image", (dir / "noise.pgm").string(), "--out-dir",
               (dir / "out").string()}) == 0);
  const auto text = read_text(dir / "out" / "prediction.json");
  CHECK(text.back() == '\n');
  const auto pred = read_json(dir / "out" / "prediction.json");
  CHECK(pred["model_id"] == "toynet");
  REQUIRE(pred["predictions"].size() == 2);
  for (double p : pred["predictions"][0]["probabilities"]) CHECK(p == doctest::Approx(1.0 / 3));
  CHECK(pred["predictions"][0]["predicted_class"] == 0);
  CHECK(pred["predictions"][0]["predicted_label"] == "a");
  double total = 0.0;
  for (double p : pred["predictions"][1]["probabilities"]) total += p;
  CHECK(std::fabs(total - 1.0) < 1e-5);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("errors exit nonzero with a message on stderr") {
  TempDir dir;
  pgm::save(Tensor::zeros({8, 8}), dir / "zero.pgm");
  auto p = run_binary("forward --model " + (dir / "missing.nnwb").string() + " --image " +
                          (dir / "zero.pgm").string(),
                      dir.path());
  CHECK(p.status != 0);
  CHECK(p.err.find("relprop: error:") != std::string::npos);
  CHECK(p.err.find("missing.nnwb") != std::string::npos);

  write_text_file(dir / "bad.nnwb", "NOPE");
  p = run_binary("forward --model " + (dir / "bad.nnwb").string() + " --image " +
                     (dir / "zero.pgm").string(),
                 dir.path());
  CHECK(p.status != 0);

  p = run_binary("frobnicate", dir.path());
  CHECK(p.status != 0);
  p = run_binary("--version", dir.path());
  CHECK(p.status == 0);
}

TEST_CASE("relevance files, digests and rendering") {
  TempDir dir;
  nnwb::save_weights(testing::toynet(2), dir / "toynet.nnwb");
  Rng rng(9);
  pgm::save(testing::random_tensor({8, 8}, rng, 0, 255), dir / "face.pgm");
  const auto model = (dir / "toynet.nnwb").string(), image = (dir / "face.pgm").string();

  REQUIRE(run({"relevance", "--model", model, "--image", image, "--render", "--out-dir",
               (dir / "a").string()}) == 0);
  REQUIRE(run({"relevance", "--model", model, "--image", image, "--render", "--out-dir",
               (dir / "b").string(), "--conv-epsilon", "0.3"}) == 0);
  REQUIRE(run({"relevance", "--model", model, "--image", image, "--out-dir", (dir / "c").string(),
               "--class", "c"}) == 0);

  const auto side_a = read_json(dir / "a" / "face.relevance.json");
  const auto side_b = read_json(dir / "b" / "face.relevance.json");
  const auto side_c = read_json(dir / "c" / "face.relevance.json");
  const std::string digest = side_a["config_digest"];
  CHECK(digest.size() == 64);
  CHECK(side_a["config_digest"] != side_b["config_digest"]);
  CHECK(side_a["config_digest"] == side_c["config_digest"]);
  CHECK(side_a["model_id"] == "toynet");
  CHECK(side_a["normalized"] == true);
  CHECK(side_c["target_class"] == 2);
  CHECK(side_c["target_label"] == "c");
  CHECK(side_a["rules"].size() == 6);

  const auto map = nnwb::load_tensor(dir / "a" / "face.relevance.bin");
  CHECK(map.shape() == Shape{8, 8});
  const auto img = pgm::load(dir / "a" / "face.relevance.pgm");
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] == 0.0f) {
      ++zeros;
      CHECK(img[i] == 128.0f);
    }
  }
  float peak = 0;
  for (float v : map.values()) peak = std::max(peak, std::fabs(v));
  CHECK(peak == 1.0f);

  // Zero-bias toynet on a zero image: nothing to distribute, all gray.
  nnwb::save_weights(testing::toynet(2, true, true), dir / "flat.nnwb");
  pgm::save(Tensor::zeros({8, 8}), dir / "zero.pgm");
  REQUIRE(run({"relevance", "--model", (dir / "flat.nnwb").string(), "--image",
               (dir / "zero.pgm").string(), "--render", "--out-dir", (dir / "d").string()}) == 0);
  CHECK(pgm::load(dir / "d" / "zero.relevance.pgm") == Tensor::filled({8, 8, 1}, 128.0f));

  CHECK(run({"relevance", "--model", model, "--image", image, "--out-dir", (dir / "e").string(),
             "--class", "zebra"}) != 0);
}

TEST_CASE("sweep") {
  TempDir dir;
  SUBCASE("single-model registry") {
    const auto corpus = testing::write_toy_corpus(dir.path(), 6, false);
    write_text_file(dir / "solo.json",
                    "[{\"model_id\": \"solo\", \"pretrain\": \"alpha\", \"task\": \"quadrant\", "
                    "\"init_seed\": 1, \"weights_path\": \"models/alpha-quadrant-1.nnwb\"}]");
    REQUIRE(run({"sweep", "--registry", (dir / "solo.json").string(), "--dataset",
                 corpus.quadrant_manifest.string(), "--samples-per-bin", "3", "--out-dir",
                 (dir / "out").string()}) == 0);
    const auto table = csv::read(dir / "out" / "sweep.csv");
    CHECK(table.header ==
          std::vector<std::string>{"destination", "source", "bin", "percentile", "accuracy"});
    CHECK(table.rows.size() == 3 * 10);
    for (const auto& row : table.rows) CHECK(row[2] == "SameInit");
    CHECK(csv::read(dir / "out" / "auc_summary.csv").rows.size() == 3);
    const auto manifest = read_json(dir / "out" / "manifest.json");
    CHECK(manifest["warnings"].size() == 4);
    CHECK(fs::exists(dir / "out" / "curves_solo.svg"));
  }

  SUBCASE("multi-task registry: counts, determinism, thread independence") {
    const auto corpus = testing::write_toy_corpus(dir.path(), 8, true);
    auto sweep = [&](const std::string& out, const std::string& threads) {
      return run({"sweep", "--registry", corpus.registry.string(), "--dataset",
                  "quadrant=" + corpus.quadrant_manifest.string(), "--dataset",
                  "side=" + corpus.side_manifest.string(), "--samples-per-bin", "4", "--schedule",
                  "linear:5", "--seed", "17", "--threads", threads, "--out-dir",
                  (dir / out).string()});
    };
    REQUIRE(sweep("one", "1") == 0);
    REQUIRE(sweep("again", "1") == 0);
    REQUIRE(sweep("many", "4") == 0);

    const auto table = csv::read(dir / "one" / "sweep.csv");
    std::map<std::string, std::size_t> per_bin;
    for (const auto& row : table.rows) ++per_bin[row[2]];
    REQUIRE(per_bin.size() == 5);
    for (const auto& [bin, n] : per_bin) {
      CAPTURE(bin);
      CHECK(n == 4 * 8 * 6);  // samples x destinations x schedule length
    }
    for (const auto* f : {"sweep.csv", "auc_summary.csv", "manifest.json"}) {
      CHECK(read_text(dir / "one" / f) == read_text(dir / "again" / f));
    }
    for (const auto* f : {"sweep.csv", "auc_summary.csv"}) {
      CHECK(read_text(dir / "one" / f) == read_text(dir / "many" / f));
    }
    const auto svg = read_text(dir / "one" / "curves_alpha-quadrant-1.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("SamePretrainDiffTask") != std::string::npos);

    const auto manifest = read_json(dir / "one" / "manifest.json");
    CHECK(manifest["command"] == "sweep");
    CHECK(manifest["seeds"]["seed"] == 17);
    CHECK(manifest["options"]["samples_per_bin"] == 4);
    for (const auto& [path, entry] : manifest["inputs"].items()) {
      CHECK(entry["sha256"].get<std::string>().size() == 64);
    }
    CHECK(manifest["inputs"].size() == 1 + 8 + 2 + 8);  // registry, models, manifests, images
  }

  SUBCASE("mismatched datasets are rejected") {
    const auto corpus = testing::write_toy_corpus(dir.path(), 6, true);
    write_text_file(dir / "short.csv", "path,label\nimages/img100.pgm,left\n");
    CHECK(run({"sweep", "--registry", corpus.registry.string(), "--dataset",
               "quadrant=" + corpus.quadrant_manifest.string(), "--dataset",
               "side=" + (dir / "short.csv").string(), "--out-dir", (dir / "x").string()}) != 0);
    CHECK(run({"sweep", "--registry", corpus.registry.string(), "--dataset",
               "quadrant=" + corpus.quadrant_manifest.string(), "--out-dir",
               (dir / "y").string()}) != 0);
  }
}

TEST_CASE("similarity") {
  TempDir dir;
  const auto corpus = testing::write_toy_corpus(dir.path(), 5, false);
  write_text_file(dir / "dup.json",
                  "[{\"model_id\": \"x\", \"pretrain\": \"p\", \"task\": \"quadrant\", "
                  "\"init_seed\": 1, \"weights_path\": \"models/alpha-quadrant-1.nnwb\"},"
                  " {\"model_id\": \"y\", \"pretrain\": \"p\", \"task\": \"quadrant\", "
                  "\"init_seed\": 2, \"weights_path\": \"models/alpha-quadrant-1.nnwb\"}]");
  REQUIRE(run({"similarity", "--registry", (dir / "dup.json").string(), "--dataset",
               corpus.quadrant_manifest.string(), "--out-dir", (dir / "dup").string()}) == 0);
  const auto dup = csv::read(dir / "dup" / "similarity.csv");
  CHECK(dup.header == std::vector<std::string>{"model_id", "x", "y"});
  for (const auto& row : dup.rows) {
    CHECK(row[1] == "1");
    CHECK(row[2] == "1");
  }
  CHECK(fs::exists(dir / "dup" / "similarity.svg"));

  REQUIRE(run({"similarity", "--registry", corpus.registry.string(), "--dataset",
               corpus.quadrant_manifest.string(), "--out-dir", (dir / "two").string()}) == 0);
  const auto two = csv::read(dir / "two" / "similarity.csv");
  REQUIRE(two.rows.size() == 2);
  CHECK(two.rows[0][1] == "1");
  CHECK(two.rows[0][2] == two.rows[1][1]);
}

TEST_CASE("rank2 and human preference") {
  TempDir dir;
  const auto corpus = testing::write_toy_corpus(dir.path(), 6, false);
  const auto a = corpus.models[0].string(), b = corpus.models[1].string();

  REQUIRE(run({"rank2", "--model-a", a, "--model-b", a, "--image",
               corpus.quadrant_manifest.string(), "--out-dir", (dir / "same").string()}) == 0);
  CHECK(read_text(dir / "same" / "rank2_disagreement.csv") ==
        "image,rank2_a,rank2_b,label_a,label_b\n");
  const auto summary = read_json(dir / "same" / "rank2_summary.json");
  CHECK(summary["disagreements"] == 0);
  CHECK(summary.contains("note"));

  // Every subject always picks A.
  std::string all_a = "subject,image,choice\n";
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 4; ++i) all_a += "s" + std::to_string(s) + ",img" + std::to_string(i) + ",A\n";
  write_text_file(dir / "all_a.csv", all_a);
  REQUIRE(run({"rank2", "--model-a", a, "--model-b", b, "--image",
               corpus.quadrant_manifest.string(), "--human", (dir / "all_a.csv").string(),
               "--out-dir", (dir / "ab").string()}) == 0);
  const auto pref = read_json(dir / "ab" / "preference.json");
  CHECK(pref["preference_for_a"] == 1.0);
  CHECK(pref["test"]["degenerate_flag"] == true);
  CHECK(csv::read(dir / "ab" / "rank2_disagreement.csv").header.size() == 5);

  // 46 subjects, 500 choices each: 19 pairs at 259 +/- 26 and 4 pairs at
  // 259 +/- 25 A-choices give mean rate 0.518 and sem 0.00770.
  std::string human = "subject,image,choice\n";
  int subject = 0;
  auto add = [&](int k) {
    for (int i = 0; i < 500; ++i) {
      human += "p" + std::to_string(subject) + ",img" + std::to_string(i) + (i < k ? ",A\n" : ",B\n");
    }
    ++subject;
  };
  for (int i = 0; i < 19; ++i) {
    add(259 + 26);
    add(259 - 26);
  }
  for (int i = 0; i < 4; ++i) {
    add(259 + 25);
    add(259 - 25);
  }
  write_text_file(dir / "human46.csv", human);
  REQUIRE(run({"rank2", "--model-a", a, "--model-b", b, "--image",
               corpus.quadrant_manifest.string(), "--human", (dir / "human46.csv").string(),
               "--out-dir", (dir / "h46").string()}) == 0);
  const auto p46 = read_json(dir / "h46" / "preference.json");
  CHECK(p46["subjects"] == 46);
  CHECK(p46["preference_for_a"].get<double>() == doctest::Approx(0.518));
  CHECK(p46["sem"].get<double>() == doctest::Approx(0.0077).epsilon(0.01));
  CHECK(std::fabs(p46["test"]["statistic"].get<double>() - 2.34) <= 0.02);
  CHECK(std::fabs(p46["test"]["p_value"].get<double>() - 0.023) <= 0.002);
  CHECK(p46["test"]["df"] == 45);

  write_text_file(dir / "bad.csv", "subject,image,choice\ns,i,C\n");
  CHECK(run({"rank2", "--model-a", a, "--model-b", b, "--image",
             corpus.quadrant_manifest.string(), "--human", (dir / "bad.csv").string(),
             "--out-dir", (dir / "bad").string()}) != 0);
}

TEST_CASE("stats") {
  TempDir dir;
  Rng rng(4);
  std::string two_way = "factorA,factorB,replicate,value\n";
  for (std::string a : {"imagenet", "faces"})
    for (std::string b : {"same", "diff"})
      for (int r = 0; r < 5; ++r)
        two_way += a + "," + b + "," + std::to_string(r) + "," +
                   std::to_string(rng.uniform(0.4, 0.9)) + "\n";
  write_text_file(dir / "two.csv", two_way);
  REQUIRE(run({"stats", "--input", (dir / "two.csv").string(), "--out-dir",
               (dir / "two").string()}) == 0);
  const auto anova = read_json(dir / "two" / "anova.json");
  REQUIRE(anova.size() == 3);
  for (const auto& rec : anova) {
    CHECK(rec["df"] == json::array({1, 16}));
    CHECK(rec["p_value"].get<double>() >= 0.0);
    CHECK(rec["p_value"].get<double>() <= 1.0);
    CHECK(rec["degenerate_flag"] == false);
  }

  std::string one_way = "factorA,factorB,replicate,value\n";
  for (std::string a : {"g1", "g2", "g3", "g4"})
    for (int r = 0; r < 5; ++r)
      one_way += a + ",x," + std::to_string(r) + "," + std::to_string(rng.uniform(0, 1)) + "\n";
  write_text_file(dir / "one.csv", one_way);
  // The design comes from a TOML config file.
  write_text_file(dir / "stats.toml", "design = \"one-way\"\n");
  REQUIRE(run({"stats", "--input", (dir / "one.csv").string(), "--config",
               (dir / "stats.toml").string(), "--out-dir", (dir / "one").string()}) == 0);
  const auto one = read_json(dir / "one" / "anova.json");
  REQUIRE(one.size() == 1);
  CHECK(one[0]["df"] == json::array({3, 16}));
  CHECK(read_json(dir / "one" / "manifest.json")["options"]["design"] == "one-way");

  write_text_file(dir / "dupe.csv", "factorA,factorB,replicate,value\na,b,1,0.5\na,b,1,0.6\n");
  CHECK(run({"stats", "--input", (dir / "dupe.csv").string(), "--out-dir",
             (dir / "dupe").string()}) != 0);
  CHECK(run({"stats", "--input", (dir / "two.csv").string(), "--design", "three-way",
             "--out-dir", (dir / "bad").string()}) != 0);
}

TEST_CASE("finetune") {
  TempDir dir;
  const auto corpus = testing::write_toy_corpus(dir.path(), 20, false);
  REQUIRE(run({"finetune", "--model", corpus.models[0].string(), "--manifest",
               corpus.quadrant_manifest.string(), "--epochs", "3", "--lr", "0.5", "--batch-size",
               "4", "--seed", "5", "--model-id", "tuned", "--topology-json", "--out-dir",
               (dir / "ft").string()}) == 0);
  const auto history = read_text(dir / "ft" / "history.csv");
  CHECK(history.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);
  CHECK(count_lines(history) == 4);

  const auto base = nnwb::load_model(corpus.models[0]);
  const auto tuned = nnwb::load_model(dir / "ft" / "tuned.nnwb");
  CHECK(tuned.id() == "tuned");
  CHECK(tuned.class_labels() == base.class_labels());
  CHECK(bit_identical(tuned.params("conv1").weights, base.params("conv1").weights));
  CHECK_FALSE(bit_identical(tuned.params("readout").weights, base.params("readout").weights));
  const auto from_json = nnwb::load_model(dir / "ft" / "tuned.json");
  CHECK(bit_identical(from_json.params("readout").weights, tuned.params("readout").weights));

  // Same seeds reproduce the model byte for byte.
  REQUIRE(run({"finetune", "--model", corpus.models[0].string(), "--manifest",
               corpus.quadrant_manifest.string(), "--epochs", "3", "--lr", "0.5", "--batch-size",
               "4", "--seed", "5", "--model-id", "tuned", "--no-cache", "--out-dir",
               (dir / "ft2").string()}) == 0);
  CHECK(read_text(dir / "ft" / "tuned.nnwb") == read_text(dir / "ft2" / "tuned.nnwb"));

  // Backbone weights near FLT_MAX overflow the features; training must stop.
  auto params = base.all_params();
  const auto& w1 = params["conv1"].weights;
  params["conv1"].weights = Tensor(w1.shape(), std::vector<float>(w1.size(), 3e38f));
  const auto huge =
      NetworkModel::create(base.layers(), params, base.input_shape(), base.class_labels());
  nnwb::save_weights(huge, dir / "huge.nnwb");
  CHECK(run({"finetune", "--model", (dir / "huge.nnwb").string(), "--manifest",
             corpus.quadrant_manifest.string(), "--out-dir", (dir / "nan").string()}) != 0);
}
