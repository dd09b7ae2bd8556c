#include <doctest.h>

#include "iotnat/error.hpp"
#include "iotnat/netflow_v9.hpp"
#include "support/fixtures.hpp"
#include "support/netflow_encoder.hpp"
#include "support/netflow_random.hpp"

using namespace iotnat;
using namespace iotnat::ingest::netflow;
using testsupport::DatagramBuilder;

namespace {

std::vector<FlowRecord> sample_records(std::size_t n) {
  std::vector<FlowRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto f = testsupport::flow(1'600'000'000'000 + std::int64_t(i) * 1000, 1'600'000'000'500 + std::int64_t(i) * 1000,
                               static_cast<std::uint16_t>(443 + i), 100 + i, 200 + i);
    f.l7_proto_name = "unknown";
    f.key.ingress_interface = 3;
    f.src_tos = f.key.tos = 4;
    f.dst_tos = 8;
    out.push_back(f);
  }
  return out;
}

std::string error_code(const std::vector<std::uint8_t>& bytes, TemplateCache& cache) {
  try {
    decode_netflow_v9(bytes, cache);
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_SUITE("netflow") {

TEST_CASE("template then data in one datagram decodes and re-encodes identically") {
  const auto tmpl = testsupport::full_template();
  const auto records = sample_records(3);
  DatagramBuilder b;
  b.templates({tmpl}).data(tmpl, records);
  TemplateCache cache;
  const auto r = decode_netflow_v9(b.bytes(), cache);
  CHECK(r.records == records);
  CHECK(r.templates_changed == 1);
  REQUIRE(cache.find(0, 256) != nullptr);
  CHECK(*cache.find(0, 256) == tmpl);

  DatagramBuilder again;
  again.templates({tmpl}).data(tmpl, r.records);
  CHECK(again.bytes() == b.bytes());
}

TEST_CASE("data before its template is buffered, then decoded") {
  const auto tmpl = testsupport::full_template(300);
  const auto records = sample_records(4);
  TemplateCache cache;
  DatagramBuilder data;
  data.data(tmpl, records);
  const auto first = decode_netflow_v9(data.bytes(), cache);
  CHECK(first.records.empty());
  CHECK(first.flowsets_buffered == 1);
  CHECK(cache.pending_flowsets() == 1);

  DatagramBuilder t;
  t.templates({tmpl});
  const auto second = decode_netflow_v9(t.bytes(), cache);
  CHECK(second.records == records);
  CHECK(cache.pending_flowsets() == 0);
}

TEST_CASE("pending buffer drops the oldest flowset on overflow") {
  const auto tmpl = testsupport::full_template();
  TemplateCache cache(2);
  for (std::size_t i = 0; i < 3; ++i) {
    DatagramBuilder d;
    d.data(tmpl, sample_records(i + 1));
    decode_netflow_v9(d.bytes(), cache);
  }
  CHECK(cache.pending_flowsets() == 2);
  CHECK(cache.dropped_flowsets() == 1);
  DatagramBuilder t;
  t.templates({tmpl});
  CHECK(decode_netflow_v9(t.bytes(), cache).records.size() == 2 + 3);
}

TEST_CASE("templates are keyed by source id") {
  const auto tmpl = testsupport::full_template();
  TemplateCache cache;
  PacketHeader h1;
  h1.source_id = 1;
  PacketHeader h2;
  h2.source_id = 2;
  DatagramBuilder t(h1);
  t.templates({tmpl});
  decode_netflow_v9(t.bytes(), cache);
  DatagramBuilder d(h2);
  d.data(tmpl, sample_records(1));
  CHECK(decode_netflow_v9(d.bytes(), cache).records.empty());
  CHECK(cache.pending_flowsets() == 1);
}

TEST_CASE("template cache: identical resend is a no-op, changed template replaces") {
  auto tmpl = testsupport::full_template();
  TemplateCache cache;
  DatagramBuilder a;
  a.templates({tmpl});
  CHECK(decode_netflow_v9(a.bytes(), cache).templates_changed == 1);
  CHECK(decode_netflow_v9(a.bytes(), cache).templates_changed == 0);
  tmpl.fields.pop_back();
  DatagramBuilder b;
  b.templates({tmpl});
  CHECK(decode_netflow_v9(b.bytes(), cache).templates_changed == 1);
  CHECK(cache.template_count() == 1);
  CHECK(*cache.find(0, 256) == tmpl);
}

TEST_CASE("malformed datagrams are rejected and leave the cache unchanged") {
  const auto tmpl = testsupport::full_template();
  TemplateCache cache;
  DatagramBuilder good;
  good.templates({tmpl});
  decode_netflow_v9(good.bytes(), cache);

  SUBCASE("version 5") {
    PacketHeader h;
    h.version = 5;
    DatagramBuilder b(h);
    CHECK(error_code(b.bytes(), cache) == "unsupported-version");
  }
  SUBCASE("short header") {
    CHECK(error_code({0, 9, 0, 1}, cache) == "truncated-datagram");
  }
  SUBCASE("flowset length past the end") {
    auto other = tmpl;
    other.template_id = 999;
    DatagramBuilder b;
    b.templates({other}).data(tmpl, sample_records(2));
    auto bytes = b.bytes();
    bytes.resize(bytes.size() - 3);
    CHECK(error_code(bytes, cache) == "truncated-flowset");
    // The valid template flowset before the truncation was not applied.
    CHECK(cache.find(0, 999) == nullptr);
    CHECK(cache.template_count() == 1);
    CHECK(cache.pending_flowsets() == 0);
  }
  SUBCASE("template id below 256") {
    auto bad = tmpl;
    bad.template_id = 100;
    DatagramBuilder b;
    b.templates({bad});
    CHECK(error_code(b.bytes(), cache) == "invalid-template");
    CHECK(cache.template_count() == 1);
  }
}

TEST_CASE("uptime-relative timestamps are converted via the header") {
  PacketHeader h;
  h.sys_uptime_ms = 100'000;
  h.unix_secs = 1'700'000'000;
  const Template tmpl{256, {{8, 4}, {22, 4}, {21, 4}}};
  DatagramBuilder b(h);
  std::vector<std::uint8_t> body;
  testsupport::put_be(body, 0x0a000001, 4);
  testsupport::put_be(body, 40'000, 4);  // first switched
  testsupport::put_be(body, 90'000, 4);  // last switched
  b.templates({tmpl}).flowset(256, body);
  TemplateCache cache;
  const auto r = decode_netflow_v9(b.bytes(), cache);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].flow_start_ms == 1'700'000'000'000 - 60'000);
  CHECK(r.records[0].flow_end_ms == 1'700'000'000'000 - 10'000);
  CHECK(r.records[0].l7_proto_name == "unknown");
}

TEST_CASE("randomized templates round-trip bit-exactly") {
  Rng rng(20240901);
  for (int i = 0; i < 300; ++i) {
    const auto c = testsupport::random_case(rng, static_cast<std::uint16_t>(256 + rng.below(100)));
    DatagramBuilder b(c.header);
    b.templates({c.tmpl}).data(c.tmpl, c.records);
    TemplateCache cache;
    const auto r = decode_netflow_v9(b.bytes(), cache);
    REQUIRE(r.records == c.records);
    DatagramBuilder again(c.header);
    again.templates({c.tmpl}).data(c.tmpl, r.records);
    CHECK(again.bytes() == b.bytes());
  }
}

}  // TEST_SUITE
