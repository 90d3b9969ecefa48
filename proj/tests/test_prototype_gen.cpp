#include <doctest.h>

#include <cmath>

#include "uapatch/errors.hpp"
#include "uapatch/prototype_gen.hpp"
#include "uapatch/rng.hpp"

using namespace uapatch;

TEST_CASE("margin loss matches the hand oracle on the tabulated cases") {
    CHECK(margin_loss({20.0, 0.0, 0.0}, 0, 10.0, 1) == doctest::Approx(0.0));
    CHECK(margin_loss({0.0, 0.0, 0.0}, 0, 10.0, 1) == doctest::Approx(20.0 / 3.0).epsilon(1e-12));
    CHECK(margin_loss({5.0, 0.0}, 0, 10.0, 2) == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("margin loss input validation") {
    CHECK_THROWS_AS(margin_loss({1.0, 2.0}, 5, 10.0, 1), ValidationError);
    CHECK_THROWS_AS(margin_loss({1.0, 2.0}, 0, -1.0, 1), ValidationError);
    CHECK_THROWS_AS(margin_loss({1.0, 2.0}, 0, 10.0, 3), ValidationError);
    CHECK_THROWS_AS(margin_loss({1.0}, 0, 10.0, 1), ValidationError);
}

TEST_CASE("margin loss properties over random logits") {
    Rng rng(17);
    for (int trial = 0; trial < 10000; ++trial) {
        const int C = rng.uniform_int(2, 8);
        std::vector<double> z(C);
        for (double& v : z) v = rng.normal(0.0, 8.0);
        const int t = rng.uniform_int(0, C - 1);
        const double margin = rng.uniform(0.5, 12.0);
        const int p = rng.uniform_int(1, 2);

        const double loss = margin_loss(z, t, margin, p);
        CHECK(loss >= 0.0);

        bool satisfied = true;
        for (int c = 0; c < C; ++c)
            if (c != t && z[t] - z[c] < margin) satisfied = false;
        CHECK((loss == 0.0) == satisfied);

        // invariant under adding a constant to all logits
        std::vector<double> shifted = z;
        const double shift = rng.normal(0.0, 5.0);
        for (double& v : shifted) v += shift;
        CHECK(margin_loss(shifted, t, margin, p) == doctest::Approx(loss).epsilon(1e-9));
    }
}

TEST_CASE("margin loss hinge vanishes as soon as the target leads, for margin -> 0+") {
    std::vector<double> z = {1.0, 0.999, -3.0};
    CHECK(margin_loss(z, 0, 1e-9, 1) == doctest::Approx(0.0));
    CHECK(margin_loss(z, 1, 1e-9, 1) > 0.0);
}

TEST_CASE("margin loss gradient matches finite differences") {
    Rng rng(23);
    for (int p : {1, 2}) {
        std::vector<double> z(5);
        for (double& v : z) v = rng.normal(0.0, 4.0);
        const int t = 2;
        const double margin = 3.0;
        std::vector<double> g = margin_loss_grad(z, t, margin, p);
        const double h = 1e-6;
        for (std::size_t j = 0; j < z.size(); ++j) {
            std::vector<double> zp = z, zm = z;
            zp[j] += h;
            zm[j] -= h;
            const double fd =
                (margin_loss(zp, t, margin, p) - margin_loss(zm, t, margin, p)) / (2.0 * h);
            CHECK(std::fabs(fd - g[j]) < 1e-5 * std::max(1.0, std::fabs(fd)));
        }
    }
}
