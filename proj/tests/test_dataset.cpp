#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "mkd/dataset.hpp"

using testutil::TempFile;

TEST_CASE("csv without header loads rows in source order") {
  TempFile f("1.0,2.0\n3.0,4.0");
  const mkd::Dataset ds = mkd::load_csv(f.path());
  REQUIRE(ds.rows() == 2);
  REQUIRE(ds.cols() == 2);
  CHECK(ds.samples()(0, 0) == 1.0);
  CHECK(ds.samples()(0, 1) == 2.0);
  CHECK(ds.samples()(1, 0) == 3.0);
  CHECK(ds.samples()(1, 1) == 4.0);
}

TEST_CASE("csv header line is skipped when requested") {
  TempFile f("x\n5.5");
  const mkd::Dataset ds = mkd::load_csv(f.path(), true);
  REQUIRE(ds.rows() == 1);
  REQUIRE(ds.cols() == 1);
  CHECK(ds.samples()(0, 0) == 5.5);
}

TEST_CASE("non-numeric csv cell reports its position") {
  TempFile f("1.0\nabc");
  try {
    mkd::load_csv(f.path());
    FAIL("expected a parse failure");
  } catch (const mkd::ParseError& e) {
    CHECK(e.row == 2);
    CHECK(e.col == 1);
  }
}

TEST_CASE("nan and inf cells are rejected at ingestion") {
  TempFile f("1.0\nnan");
  CHECK_THROWS_AS(mkd::load_csv(f.path()), mkd::ParseError);
  TempFile g("inf,2.0");
  CHECK_THROWS_AS(mkd::load_csv(g.path()), mkd::ParseError);
}

TEST_CASE("ragged csv rows are rejected") {
  TempFile f("1.0,2.0\n3.0");
  CHECK_THROWS_AS(mkd::load_csv(f.path()), mkd::ShapeError);
}

TEST_CASE("csv with no data rows is rejected") {
  TempFile f("x,y\n");
  CHECK_THROWS_AS(mkd::load_csv(f.path(), true), mkd::EmptyError);
}

TEST_CASE("missing file is an io failure") {
  CHECK_THROWS_AS(mkd::load_csv("/nonexistent/nowhere.csv"), mkd::IoError);
}

TEST_CASE("csv round-trip is bit-exact") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  mkd::SampleMatrix m(40, 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = std::ldexp(uni(rng), static_cast<int>(i) * 20 - 300);
  m(0, 0) = 1.0 / 3.0;
  m(0, 1) = -0.0;
  m(0, 2) = 1e-300;
  const mkd::Dataset original(m);

  TempFile f("");
  mkd::save_csv(original, f.path());
  const mkd::Dataset reloaded = mkd::load_csv(f.path());
  REQUIRE(reloaded.rows() == original.rows());
  REQUIRE(reloaded.cols() == original.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      CHECK(reloaded.samples()(i, j) == original.samples()(i, j));
}

TEST_CASE("json array of arrays loads") {
  TempFile f("[[1.0, 2.0], [3.0, 4.0]]", ".json");
  const mkd::Dataset ds = mkd::load_json(f.path());
  REQUIRE(ds.rows() == 2);
  REQUIRE(ds.cols() == 2);
  CHECK(ds.samples()(1, 0) == 3.0);
}

TEST_CASE("json failures map to typed errors") {
  TempFile ragged("[[1.0], [2.0, 3.0]]", ".json");
  CHECK_THROWS_AS(mkd::load_json(ragged.path()), mkd::ShapeError);
  TempFile nonnum("[[1.0], [\"a\"]]", ".json");
  CHECK_THROWS_AS(mkd::load_json(nonnum.path()), mkd::ParseError);
  TempFile scalar("12", ".json");
  CHECK_THROWS_AS(mkd::load_json(scalar.path()), mkd::ShapeError);
  TempFile broken("[[1.0,", ".json");
  CHECK_THROWS_AS(mkd::load_json(broken.path()), mkd::ParseError);
  TempFile empty("[]", ".json");
  CHECK_THROWS_AS(mkd::load_json(empty.path()), mkd::EmptyError);
}

TEST_CASE("dataset construction rejects non-finite entries") {
  mkd::SampleMatrix m(1, 2);
  m << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(mkd::Dataset{std::move(m)}, mkd::DomainError);
  mkd::SampleMatrix empty(0, 2);
  CHECK_THROWS_AS(mkd::Dataset{std::move(empty)}, mkd::EmptyError);
}

TEST_CASE("split into contiguous equal blocks") {
  const mkd::Dataset ds = testutil::column({10, 20, 30, 40});
  const std::vector<mkd::Dataset> parts = mkd::split_replicates(ds, 2);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].samples()(0, 0) == 10);
  CHECK(parts[0].samples()(1, 0) == 20);
  CHECK(parts[1].samples()(0, 0) == 30);
  CHECK(parts[1].samples()(1, 0) == 40);

  const std::vector<mkd::Dataset> whole = mkd::split_replicates(ds, 1);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].samples() == ds.samples());

  CHECK_THROWS_AS(mkd::split_replicates(testutil::column({1, 2, 3}), 2),
                  mkd::ShapeError);
}

TEST_CASE("split then concatenate reproduces the row sequence") {
  std::mt19937_64 rng(7);
  const mkd::Dataset ds = testutil::random_normal(12, 2, rng);
  const std::vector<mkd::Dataset> parts = mkd::split_replicates(ds, 4);
  Eigen::Index row = 0;
  for (const mkd::Dataset& part : parts)
    for (Eigen::Index i = 0; i < part.rows(); ++i, ++row)
      CHECK(part.row(i) == ds.row(row));
  CHECK(row == ds.rows());
}
