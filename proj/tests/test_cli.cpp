#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <sys/wait.h>

#include "s2d4d/io.hpp"

namespace fs = std::filesystem;
using s2d4d::read_file;
using s2d4d::write_file;

namespace {

std::string cli() {
  const char* p = std::getenv("S2D4D_CLI");
  return p ? p : "s2d4d";
}

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "s2d4d_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(const std::string& args) {
  const fs::path o = work() / "stdout.txt", e = work() / "stderr.txt";
  const std::string cmd = "cd '" + work().string() + "' && '" + cli() + "' " + args + " > '" + o.string() + "' 2> '" +
                          e.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(o);
  r.err = read_file(e);
  return r;
}

bool same_file(const fs::path& a, const fs::path& b) { return read_file(a) == read_file(b); }

// Tiny corpus and models shared by the pipeline checks.
void ensure_models() {
  static bool done = false;
  if (done) return;
  write_file(work() / "spec.json",
             R"({"resolution": 300, "identities": 4, "classes": 3, "sequences_per_class": 2, "frames": 10, "seed": 3})");
  write_file(work() / "cfg.json", R"({"held_out_classes": 1, "validation_identities": 1, "pca_components": 20,
    "decoder": {"channels": [16, 8, 3]}, "s2d_train": {"epochs": 3},
    "gan": {"noise": 16, "generator_hidden": [32], "critic_hidden": [32]},
    "gan_train": {"epochs": 3, "batch": 8, "critic_steps": 2}})");
  REQUIRE(run("synth --spec spec.json --out corpus").code == 0);
  REQUIRE(run("train-s2d --corpus corpus --config cfg.json --out s2d").code == 0);
  REQUIRE(run("train-gan --corpus corpus --config cfg.json --out gan").code == 0);
  done = true;
}

const std::string kNeutral = "corpus/id_000/smile/r0/frame_0000.obj";

}  // namespace

TEST_CASE("version and usage") {
  const Run v = run("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find("s2d4d 0.1.0") != std::string::npos);
  CHECK(v.out.find("S2D4DCK1") != std::string::npos);
  CHECK(run("").code == 2);
  CHECK(run("no-such-command").code == 2);
  CHECK(run("generate --label 0").code == 2);
  const Run j = run("--error-json synth --out x --spec missing.json");
  CHECK(j.code == 2);
  const auto e = nlohmann::json::parse(j.err);
  CHECK(e.at("exit_code") == 2);
  CHECK(e.at("error") == "usage");
}

TEST_CASE("training writes checkpoints and logs") {
  ensure_models();
  CHECK(fs::exists(work() / "corpus/meta.json"));
  CHECK(fs::exists(work() / "s2d/s2d.ckpt"));
  CHECK(read_file(work() / "s2d/s2d_log.csv").rfind("epoch,train_loss,validation_error\n", 0) == 0);
  CHECK(fs::exists(work() / "gan/gan.ckpt"));
  CHECK(read_file(work() / "gan/gan_log.csv").rfind("epoch,wasserstein_estimate,l_r,penalty\n", 0) == 0);
  // unknown config keys are rejected
  write_file(work() / "bad_cfg.json", R"({"s2d_train": {"epochz": 3}})");
  CHECK(run("train-s2d --corpus corpus --config bad_cfg.json --out s2d_bad").code == 2);
  // a mismatched corpus check is an input error
  write_file(work() / "hash_cfg.json", R"({"topology_hash": "0123456789abcdef"})");
  CHECK(run("train-s2d --corpus corpus --config hash_cfg.json --out s2d_hash").code == 2);
}

TEST_CASE("generate is deterministic and starts at the neutral") {
  ensure_models();
  const std::string base = "generate --gan gan/gan.ckpt --s2d s2d/s2d.ckpt --neutral " + kNeutral + " --label smile --seed 5";
  REQUIRE(run(base + " --out g1").code == 0);
  REQUIRE(run(base + " --out g2").code == 0);
  for (const auto& e : fs::directory_iterator(work() / "g1")) {
    CHECK(same_file(e.path(), work() / "g2" / e.path().filename()));
  }
  int frames = 0;
  for (const auto& e : fs::directory_iterator(work() / "g1")) frames += e.path().extension() == ".obj";
  CHECK(frames == 10);
  const auto manifest = nlohmann::json::parse(read_file(work() / "g1/manifest.json"));
  CHECK(manifest.at("frames") == 10);
  const double eps0 = manifest.at("frame0_max_deviation").get<double>();
  const s2d4d::Mesh f0 = s2d4d::read_mesh(work() / "g1/frame_0000.obj");
  const s2d4d::Mesh n = s2d4d::read_mesh(work() / kNeutral);
  CHECK((f0.positions - n.positions).rowwise().norm().maxCoeff() <= eps0);

  // refuses to overwrite without --force
  CHECK(run(base + " --out g1").code == 2);
  CHECK(run(base + " --out g1 --force").code == 0);
  CHECK(same_file(work() / "g1/frame_0004.obj", work() / "g2/frame_0004.obj"));
  CHECK(run("generate --gan gan/gan.ckpt --s2d s2d/s2d.ckpt --neutral " + kNeutral + " --label 7 --out g3").code == 2);
}

TEST_CASE("interpolation endpoints equal the decoded inputs") {
  ensure_models();
  const std::string base = "generate --gan gan/gan.ckpt --s2d s2d/s2d.ckpt --neutral " + kNeutral;
  REQUIRE(run(base + " --label 0 --seed 1 --out ia").code == 0);
  REQUIRE(run(base + " --label 1 --seed 2 --out ib").code == 0);
  REQUIRE(run("interpolate --a ia/sample.ckpt --b ib/sample.ckpt --steps 2 --s2d s2d/s2d.ckpt --neutral " + kNeutral +
              " --out it")
              .code == 0);
  for (int t : {0, 4, 9}) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.obj", t);
    CHECK(same_file(work() / "it/step_000" / name, work() / "ia" / name));
    CHECK(same_file(work() / "it/step_001" / name, work() / "ib" / name));
  }
  CHECK(run("interpolate --a ia/sample.ckpt --b ib/sample.ckpt --steps 1 --s2d s2d/s2d.ckpt --neutral " + kNeutral +
            " --out it1")
            .code == 2);
}

TEST_CASE("transfer, neutralize, fit-pca and eval") {
  ensure_models();
  CHECK(run("transfer --source corpus/id_001/sad/r0 --target " + kNeutral + " --s2d s2d/s2d.ckpt --out tr").code == 0);
  CHECK(fs::exists(work() / "tr/frame_0009.obj"));
  CHECK(run("neutralize --input corpus/id_000/smile/r0/frame_0009.obj --template tr/landmarks.csv --s2d s2d/s2d.ckpt "
            "--out neu")
            .code == 0);
  CHECK(fs::exists(work() / "neu/neutral.obj"));
  CHECK(run("fit-pca --corpus corpus --config cfg.json --components 12 --out pca").code == 0);
  const Run ev = run("eval --corpus corpus --config cfg.json --s2d s2d/s2d.ckpt --pca pca/pca.ckpt --out ev");
  CHECK(ev.code == 0);
  const std::string csv = read_file(work() / "ev/report.csv");
  CHECK(csv.rfind("method,split,mean_mm,std_mm\n", 0) == 0);
  CHECK(csv.find("\nours,") != std::string::npos);
  CHECK(csv.find("\npca-12,") != std::string::npos);
}

TEST_CASE("error exit codes") {
  ensure_models();
  write_file(work() / "garbage.ckpt", "not a checkpoint");
  const Run r = run("--error-json interpolate --a garbage.ckpt --b garbage.ckpt --s2d s2d/s2d.ckpt --neutral " + kNeutral +
                    " --out bad1");
  CHECK(r.code == 3);
  CHECK(nlohmann::json::parse(r.err).at("error") == "format");
  write_file(work() / "broken.obj", "v 1 2 3\nv 1 2\n");
  CHECK(run("neutralize --input broken.obj --template tr/landmarks.csv --s2d s2d/s2d.ckpt --out bad2").code == 3);
  // wrong vertex count for the decoder
  write_file(work() / "tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK(run("generate --gan gan/gan.ckpt --s2d s2d/s2d.ckpt --neutral tri.obj --label 0 --out bad3").code == 3);
  fs::remove_all(work() / "corpus_copy");
  fs::create_directories(work() / "corpus_copy");
  CHECK(run("fit-pca --corpus corpus_copy --out bad4").code == 3);
}
