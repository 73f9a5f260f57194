#include <catch_amalgamated.hpp>

#include <cstring>

#include "s2d4d/checkpoint.hpp"
#include "s2d4d/errors.hpp"
#include "s2d4d/nn.hpp"

using namespace s2d4d;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  Matrix a(2, 3);
  a << 1.5, -2.25, 3.0, 1e-300, -0.0, 6.02e23;
  ck.tensors["a"] = a;
  ck.tensors["empty"] = Matrix(0, 4);
  ck.tensors["b.c"] = Matrix::Constant(1, 1, 0.1);
  ck.meta = {{"note", "x"}, {"n", 3}};
  return ck;
}

}  // namespace

TEST_CASE("checkpoint roundtrip is bit exact") {
  const Checkpoint ck = sample_checkpoint();
  const std::string bytes = serialize_checkpoint(ck);
  CHECK(bytes.compare(0, 8, "S2D4DCK1") == 0);
  const Checkpoint back = parse_checkpoint(bytes, "mem");
  REQUIRE(back.tensors.size() == 3);
  for (const auto& [name, m] : ck.tensors) {
    const Matrix& r = back.tensor(name);
    REQUIRE(r.rows() == m.rows());
    REQUIRE(r.cols() == m.cols());
    CHECK(std::memcmp(r.data(), m.data(), sizeof(double) * static_cast<std::size_t>(m.size())) == 0);
  }
  CHECK(back.meta == ck.meta);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.has("a"));
  CHECK_FALSE(back.has("zzz"));
  CHECK_THROWS_AS(back.tensor("zzz"), FormatError);
}

TEST_CASE("corrupted checkpoints raise FormatError") {
  const std::string good = serialize_checkpoint(sample_checkpoint());
  CHECK_THROWS_AS(parse_checkpoint("", "e"), FormatError);
  CHECK_THROWS_AS(parse_checkpoint("S2D4DCK2" + good.substr(8), "magic"), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(good.substr(0, 12), "short"), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(good.substr(0, good.size() - 1), "truncated blob"), FormatError);
  std::string huge = good;
  huge[15] = '\x7f';  // manifest length far beyond the file
  CHECK_THROWS_AS(parse_checkpoint(huge, "len"), FormatError);
  std::string bad_json = good;
  bad_json[16] = '#';
  CHECK_THROWS_AS(parse_checkpoint(bad_json, "json"), FormatError);
  std::string bad_dtype = good;
  const auto pos = bad_dtype.find("\"f64\"");
  REQUIRE(pos != std::string::npos);
  bad_dtype.replace(pos, 5, "\"f32\"");
  CHECK_THROWS_AS(parse_checkpoint(bad_dtype, "dtype"), FormatError);
}

TEST_CASE("mlp store and load") {
  Rng rng(5);
  const nn::Mlp net = nn::make_mlp({4, 7, 3}, rng, 0.2);
  Checkpoint ck;
  nn::store(net, "net", ck);
  const Checkpoint back = parse_checkpoint(serialize_checkpoint(ck), "mem");
  const nn::Mlp loaded = nn::load_mlp(back, "net", 0.2);
  Matrix x = Matrix::Random(5, 4);
  CHECK((nn::forward(net, ad::constant(x)).value() - nn::forward(loaded, ad::constant(x)).value()).norm() == 0.0);
  CHECK_THROWS_AS(nn::load_mlp(back, "other", 0.2), FormatError);
  Checkpoint broken = back;
  broken.tensors["net.1.weight"] = Matrix::Zero(6, 3);
  CHECK_THROWS_AS(nn::load_mlp(broken, "net", 0.2), FormatError);
}
