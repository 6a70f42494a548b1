#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "exactmeta/errors.hpp"
#include "exactmeta/io.hpp"

using namespace exactmeta;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& body = "")
      : path("/tmp/exactmeta_io_" + name) {
    if (!body.empty()) {
      std::ofstream out(path);
      out << body;
    }
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("univariate csv round trip") {
  uni::UnivariateData d{{-0.25, 1.5, 0.0625}, {0.1, 0.2, 0.30000000000000004}};
  TempFile f("uni_rt.csv");
  io::write_uni_csv(f.path, d);
  auto back = io::read_uni_csv(f.path);
  REQUIRE(back.k() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.y[i] == d.y[i]);
    CHECK(back.sigma2[i] == d.sigma2[i]);
  }
}

TEST_CASE("univariate csv errors carry file and line") {
  TempFile f("uni_bad.csv", "y,variance\n0.1,0.2\noops,0.3\n");
  CHECK_THROWS_WITH_AS(io::read_uni_csv(f.path),
                       doctest::Contains("uni_bad.csv:3"), input_error);

  TempFile g("uni_hdr.csv", "effect,var\n0.1,0.2\n");
  CHECK_THROWS_AS(io::read_uni_csv(g.path), input_error);

  TempFile h("uni_negv.csv", "y,variance\n0.1,-0.2\n0.0,0.1\n");
  CHECK_THROWS_AS(io::read_uni_csv(h.path), input_error);

  CHECK_THROWS_AS(io::read_uni_csv("/tmp/exactmeta_io_does_not_exist.csv"),
                  input_error);
}

TEST_CASE("dta csv accepts counts and applies the 0.5 correction") {
  TempFile f("dta_counts.csv", "tp,fp,fn,tn\n20,5,3,60\n15,0,4,70\n");
  auto data = io::read_dta_csv(f.path);
  REQUIRE(data.size() == 2);
  CHECK(data[0].yA == doctest::Approx(std::log(20.0 / 3.0)));
  CHECK(data[0].sA2 == doctest::Approx(1.0 / 20 + 1.0 / 3));
  CHECK(data[0].yB == doctest::Approx(std::log(60.0 / 5.0)));
  // zero cell in study 2: every cell shifted by 0.5
  CHECK(data[1].yB == doctest::Approx(std::log(70.5 / 0.5)));
  CHECK(data[1].sB2 == doctest::Approx(1.0 / 70.5 + 1.0 / 0.5));
}

TEST_CASE("dta csv summary schema round trips") {
  dta::Data d;
  d.push_back({1.9, 2.2, 0.21, 0.09});
  d.push_back({0.7, 1.4, 0.5, 0.125});
  TempFile f("dta_rt.csv");
  io::write_dta_csv(f.path, d);
  auto back = io::read_dta_csv(f.path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].yA == d[1].yA);
  CHECK(back[1].sB2 == d[1].sB2);
}

TEST_CASE("dta csv rejects bad headers and negative counts") {
  TempFile f("dta_hdr.csv", "a,b,c,d\n1,2,3,4\n");
  CHECK_THROWS_AS(io::read_dta_csv(f.path), input_error);
  TempFile g("dta_neg.csv", "tp,fp,fn,tn\n20,5,-3,60\n");
  CHECK_THROWS_WITH_AS(io::read_dta_csv(g.path),
                       doctest::Contains("dta_neg.csv:2"), input_error);
}

TEST_CASE("nma arm-level csv parses and validates") {
  TempFile f("nma_arm.csv",
             "study,treatment,events,n\n"
             "1,0,12,50\n1,1,20,50\n"
             "2,0,8,40\n2,2,15,40\n");
  auto in = io::read_nma_csv(f.path);
  CHECK(in.arm_level);
  CHECK(in.p == 2);
  REQUIRE(in.arms.size() == 4);
  CHECK(in.arms[3].treatment == 2);

  TempFile g("nma_arm_bad.csv", "study,treatment,events,n\n1,0,60,50\n");
  CHECK_THROWS_WITH_AS(io::read_nma_csv(g.path),
                       doctest::Contains("nma_arm_bad.csv:2"), input_error);
}

TEST_CASE("nma contrast csv round trips multi-arm blocks") {
  std::vector<net::ContrastStudy> studies(2);
  studies[0].treatments = {1};
  studies[0].y.resize(1);
  studies[0].y << 0.4;
  studies[0].S.resize(1, 1);
  studies[0].S << 0.09;
  studies[1].treatments = {1, 3};
  studies[1].y.resize(2);
  studies[1].y << 0.2, 0.9;
  studies[1].S.resize(2, 2);
  studies[1].S << 0.2, 0.05, 0.05, 0.3;

  TempFile f("nma_rt.csv");
  io::write_nma_contrast_csv(f.path, studies);
  auto in = io::read_nma_csv(f.path);
  CHECK(!in.arm_level);
  CHECK(in.p == 3);
  REQUIRE(in.studies.size() == 2);
  CHECK(in.studies[1].treatments == std::vector<int>{1, 3});
  CHECK(in.studies[1].y(1) == 0.9);
  CHECK(in.studies[1].S(0, 1) == 0.05);
  CHECK(in.studies[1].S(1, 0) == 0.05);
}

TEST_CASE("nma contrast csv checks list lengths") {
  TempFile f("nma_len.csv", "study,treatments,y,s\n1,1;2,0.3;0.4,0.1;0.2\n");
  CHECK_THROWS_WITH_AS(io::read_nma_csv(f.path),
                       doctest::Contains("nma_len.csv:2"), input_error);
}

TEST_CASE("headers are case-insensitive") {
  TempFile f("uni_case.csv", "Y,Variance\n0.1,0.2\n-0.3,0.4\n");
  auto d = io::read_uni_csv(f.path);
  CHECK(d.k() == 2);
  TempFile g("dta_case.csv", "TP,FP,FN,TN\n10,2,3,40\n8,1,2,30\n");
  CHECK(io::read_dta_csv(g.path).size() == 2);
}
