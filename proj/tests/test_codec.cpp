#include "doctest.h"

#include <string>

#include "helpers.hpp"
#include "vtg/rng.hpp"
#include "vtg/sample.hpp"

using namespace vtg;

namespace {

GroundingSample example_sample() {
  GroundingSample s;
  s.id = "demo-000001";
  s.duration_s = 64.0;
  s.features = {0.25, 0.5, 0.1, 0.25, -1.5, 0.0, 2.25, 0.125};
  s.gt = TimeInterval(16.0, 32.0);
  s.difficulty = 0.1;
  s.meta = {{"source", "unit"}, {"split", "train"}};
  return s;
}

}  // namespace

TEST_CASE("round trip is the identity field for field") {
  const GroundingSample s = example_sample();
  const GroundingSample back = decode_sample(encode_sample(s));
  CHECK(back.id == s.id);
  CHECK(back.duration_s == s.duration_s);
  CHECK(back.features == s.features);
  CHECK(back.gt == s.gt);
  CHECK(back.difficulty == s.difficulty);
  CHECK(back.meta == s.meta);
}

TEST_CASE("round trip with awkward doubles and empty meta") {
  GroundingSample s = example_sample();
  s.meta.clear();
  s.features = {0.1, 1.0 / 3.0, 6.1e-5, 0.30000000000000004};
  s.gt = TimeInterval(0.1 + 0.2, 33.333333333333336);
  const GroundingSample back = decode_sample(encode_sample(s));
  CHECK(back.features == s.features);
  CHECK(back.gt == s.gt);
  CHECK(back.meta.empty());
}

TEST_CASE("distinct samples encode to distinct lines") {
  GroundingSample a = example_sample();
  GroundingSample b = example_sample();
  b.id = "demo-000002";
  CHECK(encode_sample(a) != encode_sample(b));
}

TEST_CASE("decode rejects malformed and invalid records") {
  const std::string good = encode_sample(example_sample());

  CHECK_THROWS_WITH_AS(decode_sample(good.substr(0, good.size() / 2)),
                       doctest::Contains("decode error"), std::runtime_error);

  CHECK_THROWS_WITH_AS(
      decode_sample(R"({"id":"x","duration_s":10,"features":[0.1],"gt":[5,3],)"
                    R"("difficulty":0.5,"meta":{}})"),
      doctest::Contains("start > end"), std::runtime_error);

  // unknown field
  CHECK_THROWS_WITH_AS(
      decode_sample(R"({"id":"x","duration_s":10,"features":[0.1],"gt":[1,3],)"
                    R"("difficulty":0.5,"meta":{},"bogus":1})"),
      doctest::Contains("bogus"), std::runtime_error);

  // missing field
  CHECK_THROWS_WITH_AS(
      decode_sample(R"({"id":"x","duration_s":10,"features":[0.1],"gt":[1,3],"meta":{}})"),
      doctest::Contains("difficulty"), std::runtime_error);

  // wrong type
  CHECK_THROWS_WITH_AS(
      decode_sample(R"({"id":"x","duration_s":"ten","features":[0.1],"gt":[1,3],)"
                    R"("difficulty":0.5,"meta":{}})"),
      doctest::Contains("duration_s"), std::runtime_error);

  // gt outside the video
  CHECK_THROWS_WITH_AS(
      decode_sample(R"({"id":"x","duration_s":10,"features":[0.1],"gt":[1,30],)"
                    R"("difficulty":0.5,"meta":{}})"),
      doctest::Contains("gt outside"), std::runtime_error);

  // meta values must be strings
  CHECK_THROWS_WITH_AS(
      decode_sample(R"({"id":"x","duration_s":10,"features":[0.1],"gt":[1,3],)"
                    R"("difficulty":0.5,"meta":{"k":1}})"),
      doctest::Contains("meta"), std::runtime_error);
}

TEST_CASE("sample files round trip through disk") {
  testing::TempDir tmp("codec");
  Rng rng(5);
  std::vector<GroundingSample> samples;
  for (int i = 0; i < 25; ++i) {
    GroundingSample s = example_sample();
    s.id = "demo-" + std::to_string(i);
    s.gt = testing::random_interval(rng, 0.0, 64.0);
    samples.push_back(std::move(s));
  }
  const auto path = tmp.path() / "samples.jsonl";
  write_samples(path, samples);
  const auto back = read_samples(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].id == samples[i].id);
    CHECK(back[i].gt == samples[i].gt);
    CHECK(back[i].features == samples[i].features);
  }
}
