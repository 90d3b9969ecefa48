#include <doctest.h>

#include <cmath>

#include "uapatch/boundary_probe.hpp"
#include "uapatch/errors.hpp"

using namespace uapatch;

namespace {

// Linear two-class model over a (3, 2, 2) input with hand-set weights, so
// every probe quantity can be derived on paper.
Classifier linear_fixture() {
    LayerSpec dense;
    dense.type = LayerType::Dense;
    dense.out_c = 2;
    dense.relu = false;
    Network net("linear", 3, 2, 2, {dense});
    // logit0 = sum(x) * 0.5, logit1 = sum(x) * 0.25 => class 0 wins on any
    // positive image; pushing toward class 1 must fight a fixed margin.
    auto& w = net.layer_weights(0);
    const int n = 12;
    for (int i = 0; i < n; ++i) {
        w[i] = 0.5;       // row 0
        w[n + i] = 0.25;  // row 1
    }
    net.layer_bias(0)[0] = 0.0;
    net.layer_bias(0)[1] = 0.0;
    return Classifier(std::move(net), {});
}

}  // namespace

TEST_CASE("one sufficiently large step crosses the linear boundary") {
    Classifier m = linear_fixture();
    Tensor x(3, 2, 2, 0.5);  // sum = 6: logits (3.0, 1.5), prediction 0

    // The probe ascends logit1 with gradient w1 (constant). A step of size
    // alpha moves x by alpha * w1 / |w1|; the margin logit0 - logit1 =
    // 0.25 * sum(x) shrinks by 0.25 * alpha * sum(w1) / |w1|.
    // sum(w1)/|w1| = 12*0.25 / sqrt(12*0.0625) = 3/0.866 = sqrt(12).
    // One step crosses iff alpha * 0.25 * sqrt(12) > 1.5, i.e. alpha > 1.732.
    ProbeOptions big;
    big.step_size = 2.0;
    big.max_steps = 10;
    BoundaryReport rep = boundary_distance(m, x, "fixture", {1}, big);
    REQUIRE(rep.per_class_steps.count(1) == 1);
    CHECK(rep.per_class_steps.at(1) == 1);

    ProbeOptions small;
    small.step_size = 1.0;
    small.max_steps = 10;
    BoundaryReport rep2 = boundary_distance(m, x, "fixture", {1}, small);
    REQUIRE(rep2.per_class_steps.count(1) == 1);
    CHECK(rep2.per_class_steps.at(1) == 2);
}

TEST_CASE("a vanishing step size saturates every direction") {
    Classifier m = linear_fixture();
    Tensor x(3, 2, 2, 0.5);
    ProbeOptions opts;
    opts.step_size = 1e-7;
    opts.max_steps = 5;
    BoundaryReport rep = boundary_distance(m, x, "fixture", {}, opts);
    CHECK(rep.per_class_steps.empty());
    CHECK(rep.saturated_directions.size() == 1);  // only class 1 exists as a direction
}

TEST_CASE("doubling the step size never increases the step count on the linear fixture") {
    Classifier m = linear_fixture();
    Tensor x(3, 2, 2, 0.45);
    for (double alpha : {0.05, 0.1, 0.2, 0.4, 0.8}) {
        ProbeOptions a, b;
        a.step_size = alpha;
        a.max_steps = 400;
        b.step_size = 2.0 * alpha;
        b.max_steps = 400;
        BoundaryReport ra = boundary_distance(m, x, "fx", {1}, a);
        BoundaryReport rb = boundary_distance(m, x, "fx", {1}, b);
        REQUIRE(ra.per_class_steps.count(1));
        REQUIRE(rb.per_class_steps.count(1));
        CHECK(rb.per_class_steps.at(1) <= ra.per_class_steps.at(1));
    }
}

TEST_CASE("probe re-verifies the flip and warns on label disagreement") {
    Classifier m = linear_fixture();
    Tensor x(3, 2, 2, 0.5);
    ProbeOptions opts;
    opts.step_size = 0.5;
    opts.max_steps = 50;
    BoundaryReport rep = boundary_distance(m, x, "fx", {1}, opts, 1);
    CHECK(rep.warning.has_value());  // model says 0, caller said 1
    CHECK(rep.original_prediction == 0);

    // steps >= 1 for the non-saturated direction
    for (const auto& [cls, steps] : rep.per_class_steps) CHECK(steps >= 1);
}

TEST_CASE("compare_priors: duplicates tie, tiny perturbations do not move step counts") {
    Classifier m = linear_fixture();
    Tensor a(3, 2, 2, 0.5);
    Tensor b = a;
    b.v[3] += 1e-8;

    ProbeOptions opts;
    opts.step_size = 0.3;
    opts.max_steps = 100;
    auto rows = compare_priors(m, {{"a", a}, {"a_again", a}, {"a_eps", b}}, opts);
    REQUIRE(rows.size() == 3);
    // All three are the same point up to 1e-8: identical mean step counts.
    CHECK(rows[0].mean_steps == rows[1].mean_steps);
    CHECK(rows[1].mean_steps == rows[2].mean_steps);

    CHECK_THROWS_AS(compare_priors(m, {{"only", a}}, opts),

                    ValidationError);
}

TEST_CASE("boundary report serialization carries steps and saturation") {
    Classifier m = linear_fixture();
    Tensor x(3, 2, 2, 0.5);
    ProbeOptions opts;
    opts.step_size = 0.5;
    opts.max_steps = 50;
    BoundaryReport rep = boundary_distance(m, x, "fx", {}, opts);
    const std::string j = boundary_report_json(rep);
    CHECK(j.find("per_class_steps") != std::string::npos);
    CHECK(j.find("mean_steps") != std::string::npos);
}
