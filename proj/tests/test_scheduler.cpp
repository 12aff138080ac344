#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "tvmf/errors.hpp"
#include "tvmf/scheduler.hpp"

using namespace tvmf;

TEST_CASE("schedule starts at zero") {
  const auto s = init_schedule(4, 32);
  CHECK(s.kappas() == std::vector<double>{0, 0, 0, 0});
  CHECK(s.history().empty());
  for (std::size_t c = 0; c < 4; ++c) CHECK(s.kappa_for_class(c) == 0.0);

  const auto t = init_schedule(3, 128);
  CHECK(t.kappas() == std::vector<double>{0, 0, 0});
  CHECK(t.history().empty());

  CHECK_THROWS_AS(init_schedule(4, -1), ConfigError);
  CHECK_THROWS_AS(init_schedule(1, 32), ConfigError);
}

TEST_CASE("zero cap keeps every kappa at zero") {
  auto s = init_schedule(2, 0);
  s.update_from_validation({0.9, 0.3});
  s.update_from_validation({1.0, 1.0});
  CHECK(s.kappas() == std::vector<double>{0, 0});
}

TEST_CASE("update multiplies validation DSC by lambda") {
  auto a = init_schedule(2, 32);
  a.update_from_validation({1.0, 1.0});
  CHECK(a.kappas() == std::vector<double>{32, 32});

  auto b = init_schedule(2, 32);
  b.update_from_validation({0.5, 0.25});
  CHECK(b.kappas() == std::vector<double>{16, 8});
  CHECK(b.history().size() == 1);
  CHECK(b.history()[0].dsc == std::vector<double>{0.5, 0.25});
  CHECK(b.history()[0].kappas == std::vector<double>{16, 8});

  auto c = init_schedule(2, 128);
  c.update_from_validation({0.0, 0.9});
  CHECK(c.kappa_for_class(0) == 0.0);
  CHECK(c.kappa_for_class(1) == doctest::Approx(115.2).epsilon(1e-15));
  CHECK_THROWS_AS(c.kappa_for_class(2), ConfigError);
}

TEST_CASE("update rejects bad scores") {
  auto s = init_schedule(3, 32);
  CHECK_THROWS_AS(s.update_from_validation({0.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(s.update_from_validation({0.5, 1.5, 0.1}), DomainError);
  CHECK_THROWS_AS(s.update_from_validation({0.5, -0.1, 0.1}), DomainError);
  CHECK(s.history().empty());
  CHECK(s.kappas() == std::vector<double>{0, 0, 0});
}

TEST_CASE("schedule properties over random update sequences") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng() % 6;
    const double lambda = testing::uniform(rng, 0.5, 256);
    auto s = init_schedule(classes, lambda);
    const int epochs = 1 + static_cast<int>(rng() % 10);
    std::vector<double> last;
    for (int e = 0; e < epochs; ++e) {
      last.clear();
      for (std::size_t c = 0; c < classes; ++c) last.push_back(testing::uniform(rng, 0, 1));
      s.update_from_validation(last);
      for (std::size_t c = 0; c < classes; ++c) {
        CHECK(s.kappas()[c] >= 0.0);
        CHECK(s.kappas()[c] <= lambda);
        // only the latest scores matter
        CHECK(s.kappas()[c] == lambda * last[c]);
        for (std::size_t d = 0; d < classes; ++d) {
          if (last[c] > last[d]) CHECK(s.kappas()[c] > s.kappas()[d]);
        }
      }
    }
    CHECK(s.history().size() == static_cast<std::size_t>(epochs));
  }
}
