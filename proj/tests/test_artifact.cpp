#include <doctest.h>

#include <cstring>
#include <fstream>

#include "iotnat/artifact.hpp"
#include "iotnat/error.hpp"
#include "support/fixtures.hpp"
#include "support/model_fixture.hpp"

using namespace iotnat;
using namespace iotnat::iforest;

namespace {

std::string error_code(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize_artifact(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

void reseal(std::vector<std::uint8_t>& bytes) {
  const auto body = std::span<const std::uint8_t>(bytes).first(bytes.size() - 8);
  const auto sum = fnv1a64(body);
  for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = static_cast<std::uint8_t>(sum >> (8 * i));
}

}  // namespace

TEST_SUITE("artifact") {

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64({}) == 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  CHECK(fnv1a64(a) == 0xaf63dc4c8601ec8cULL);
  const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  CHECK(fnv1a64(foobar) == 0x85944171f73967e8ULL);
}

TEST_CASE("serialize/deserialize round-trips and scores identically") {
  const auto artifact = testsupport::small_artifact();
  const auto bytes = serialize_artifact(artifact);
  const auto back = deserialize_artifact(bytes);
  CHECK(back == artifact);
  for (const auto& lf : testsupport::small_dataset().flows) {
    const auto x = preprocess::transform(artifact.schema, lf.flow);
    CHECK(back.forest.normality_score(x) == artifact.forest.normality_score(x));
  }
  testsupport::TempDir dir("artifact");
  save_artifact(artifact, dir / "m.iotnat");
  CHECK(load_artifact(dir / "m.iotnat") == artifact);
}

TEST_CASE("corruption is detected") {
  const auto good = serialize_artifact(testsupport::small_artifact());
  SUBCASE("every truncation") {
    for (std::size_t n = 0; n < good.size(); n += 1 + n / 50) {
      std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
      CHECK(error_code(cut) == "corrupt-artifact");
    }
  }
  SUBCASE("bit flips") {
    for (std::size_t i = 0; i < good.size(); i += 97) {
      auto bad = good;
      bad[i] ^= 0x10;
      CHECK(error_code(bad) == "corrupt-artifact");
    }
  }
  SUBCASE("bad magic even with a valid checksum") {
    auto bad = good;
    bad[0] = 'X';
    reseal(bad);
    CHECK(error_code(bad) == "corrupt-artifact");
  }
  SUBCASE("trailing bytes") {
    auto bad = good;
    bad.insert(bad.end() - 8, std::uint8_t{0});
    reseal(bad);
    CHECK(error_code(bad) == "corrupt-artifact");
  }
  SUBCASE("unknown format version") {
    auto bad = good;
    bad[8] = 2;
    reseal(bad);
    CHECK(error_code(bad) == "unsupported-artifact-version");
  }
  SUBCASE("missing file is an io error") {
    try {
      load_artifact("/nonexistent/dir/m.iotnat");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
    }
  }
}

TEST_CASE("digest ignores trained_at and tracks model content") {
  auto a = testsupport::small_artifact();
  auto b = a;
  b.trained_at_ms += 123456;
  CHECK(artifact_digest(a) == artifact_digest(b));
  CHECK(serialize_artifact(a) != serialize_artifact(b));
  b.calibrated_thresholds[10] += 1e-9;
  CHECK(artifact_digest(a) != artifact_digest(b));
}

TEST_CASE("retraining with the same seed gives the same digest") {
  const auto a = testsupport::small_artifact();
  const auto b = testsupport::small_artifact();
  CHECK(artifact_digest(a) == artifact_digest(b));
}

}  // TEST_SUITE
