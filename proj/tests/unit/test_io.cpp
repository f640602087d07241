#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "degsde/io.hpp"

using namespace degsde;
using io::json;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST_CASE("non-finite numbers become strings") {
  CHECK(io::num(1.5) == json(1.5));
  CHECK(io::num(std::numeric_limits<double>::infinity()) == json("inf"));
  CHECK(io::num(-std::numeric_limits<double>::infinity()) == json("-inf"));
  CHECK(io::num(std::nan("")) == json("nan"));
  const std::vector<double> v{0.0, std::numeric_limits<double>::infinity()};
  CHECK(io::nums(v).dump() == R"([0.0,"inf"])");
}

TEST_CASE("fmt17 round-trips doubles") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5e-324}) CHECK(std::strtod(io::fmt17(v).c_str(), nullptr) == v);
  CHECK(io::fmt17(0.1) == "0.10000000000000001");
}

TEST_CASE("json dump round-trips doubles") {
  const std::vector<double> v{0.1, 1.0 / 3.0, 0.010000000000000004, 123456.789e-10};
  const json j = io::nums(v);
  const json back = json::parse(j.dump());
  for (std::size_t k = 0; k < v.size(); ++k) CHECK(back[k].get<double>() == v[k]);
}

TEST_CASE("documents carry the format version") {
  const json d = io::document("check", json{{"a", 1}});
  CHECK(d["format_version"] == io::kFormatVersion);
  CHECK(d["kind"] == "check");
  CHECK(d["report"]["a"] == 1);
  CHECK(d.begin().key() == "format_version");
}

TEST_CASE("condition reports nest their parts") {
  ConditionReport part;
  part.assumption = "A3(i)";
  part.verdict = Verdict::Fail;
  part.margin = -0.5;
  part.witnesses = {{0.01, 2.0}};
  ConditionReport top;
  top.assumption = "A3";
  top.verdict = Verdict::Fail;
  top.margin = -std::numeric_limits<double>::infinity();
  top.config = {{"delta", 0.1}};
  top.parts = {part};
  const json j = io::to_json(top);
  CHECK(j["verdict"] == "fail");
  CHECK(j["margin"] == "-inf");
  CHECK(j["config"]["delta"] == 0.1);
  REQUIRE(j["parts"].size() == 1);
  CHECK(j["parts"][0]["assumption"] == "A3(i)");
  CHECK(j["parts"][0]["witnesses"][0][1] == 2.0);
  CHECK_FALSE(j.contains("note"));
}

TEST_CASE("boundary verdict json") {
  const auto v = classify(ball_dominating_diffusion(2, 2), Endpoint::Right);
  const json j = io::to_json(v);
  CHECK(j["endpoint"] == "r");
  CHECK(j["classification"] == "unattainable");
  CHECK(j["distances"].size() == 7);
  CHECK(j["distances"][0].dump() == "0.01");
  BoundaryVerdict none;
  CHECK(io::to_json(none)["exponent"].is_null());
}

TEST_CASE("trajectory csv") {
  const Model m("ode", 2, Domain::FullSpace, constant_drift({1, -1}), identity_diffusion(2));
  const std::vector<double> x0{0.1, 0.2};
  const std::vector<double> dW(20, 0.0);
  const auto tr = integrate(m, x0, 1.0, 0.1, dW);
  std::ostringstream os;
  io::write_trajectory_csv(os, tr);
  const auto ls = lines(os.str());
  REQUIRE(ls.size() == 2 + tr.size());
  CHECK(ls[0] == "# format_version=1");
  CHECK(ls[1] == "t,x1,x2");
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto cells = split(ls[k + 2], ',');
    REQUIRE(cells.size() == 3);
    CHECK(std::strtod(cells[0].c_str(), nullptr) == tr.t[k]);
    CHECK(std::strtod(cells[1].c_str(), nullptr) == tr.state(k)[0]);
    CHECK(std::strtod(cells[2].c_str(), nullptr) == tr.state(k)[1]);
  }
}

TEST_CASE("coupling csv") {
  CouplingReport r;
  r.t = {0.0, 0.5};
  r.p = {1.0, 2.0};
  r.z = {0.5, 0.25};
  std::ostringstream os;
  io::write_coupling_csv(os, r);
  CHECK(os.str() == "# format_version=1\nt,p,z\n0,1,0.5\n0.5,2,0.25\n");
}

TEST_CASE("modulus csv") {
  const ModulusLadder l(sqrt_modulus(), LadderOptions{2, 256});
  std::ostringstream os;
  io::write_modulus_csv(os, l, 5, 1.0);
  const auto ls = lines(os.str());
  REQUIRE(ls.size() == 2 + 3 + 1 + 1 + 10);
  CHECK(ls[1] == "k,s_k");
  CHECK(ls[2] == "0,1");
  CHECK(ls[6] == "k,t,phi,phi_prime,phi_second");
  CHECK(split(ls[9], ',')[1] == "0");
  CHECK(split(ls[9], ',')[2] == "0");
}
