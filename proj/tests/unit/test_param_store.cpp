// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "cml/errors.hpp"
#include "cml/param_store.hpp"
#include "test_util.hpp"

using namespace cml;

namespace {
NamedParamStore sample() {
  NamedParamStore s;
  s.add("enc.w", Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}), ParamGroup::base());
  s.add("enc.ln", Tensor({2}, 1.0), ParamGroup::layer_norm());
  s.add("head.w", Tensor({2}, 0.5), ParamGroup::head());
  s.add("adapter.x.w", Tensor({3}, 0.25), ParamGroup::adapter("x"));
  return s;
}
}  // namespace

TEST_CASE("group tags round-trip and wildcard coverage") {
  for (const auto& g : {ParamGroup::base(), ParamGroup::head(), ParamGroup::layer_norm(), ParamGroup::adapter("de")}) {
    CHECK(ParamGroup::parse(g.to_string()) == g);
  }
  CHECK(ParamGroup::any_adapter().covers(ParamGroup::adapter("de")));
  CHECK_FALSE(ParamGroup::adapter("en").covers(ParamGroup::adapter("de")));
  CHECK_FALSE(ParamGroup::base().covers(ParamGroup::head()));
}

TEST_CASE("store bookkeeping") {
  auto s = sample();
  CHECK_THROWS_AS(s.add("enc.w", Tensor({1}), ParamGroup::base()), InputError);
  CHECK(s.parameter_count() == 4 + 2 + 2 + 3);
  CHECK(s.parameter_count(filters::encoder()) == 6);
  CHECK(s.names(filters::adapters_of("x")) == std::vector<std::string>{"adapter.x.w"});
  const auto v0 = s.version();
  s.mutable_value("head.w")[0] = 1.0;
  CHECK(s.version() > v0);
  s.remove("adapter.x.w");
  CHECK_FALSE(s.contains("adapter.x.w"));
}

TEST_CASE("fingerprint sees values, bits, names and groups") {
  const auto s = sample();
  const auto fp = fingerprint(s);
  CHECK(fingerprint(sample()) == fp);
  auto t = sample();
  t.mutable_value("enc.w")[0] = 1.0000000000000002;
  CHECK(fingerprint(t) != fp);
  auto z = sample();
  z.mutable_value("head.w")[0] = 0.0;
  auto nz = sample();
  nz.mutable_value("head.w")[0] = -0.0;
  CHECK(fingerprint(z) != fingerprint(nz));
  CHECK(fingerprint(s, filters::encoder()) == fingerprint(z, filters::encoder()));
  CHECK(parse_fingerprint_hex(fingerprint_hex(fp)) == fp);
  CHECK_THROWS_AS(parse_fingerprint_hex("xyz"), InputError);
}

TEST_CASE("snapshots restore exactly and deltas need matching layouts") {
  auto s = sample();
  const Snapshot snap = snapshot_params(s);
  s.mutable_value("enc.w")[3] = 9.0;
  const auto d = param_delta(s, snap, filters::encoder());
  CHECK(d.at("enc.w")[3] == 5.0);
  CHECK(d.at("enc.ln")[0] == 0.0);
  snap.restore(s);
  CHECK(fingerprint(s) == snap.fingerprint());
  s.remove("head.w");
  CHECK_THROWS_AS(param_delta(s, snap), IncompatibleSnapshot);
}
