#include <doctest.h>

#include <cmath>

#include "uapatch/errors.hpp"
#include "uapatch/evaluator.hpp"
#include "uapatch/rng.hpp"

using namespace uapatch;

namespace {

Classifier toy_model() { return Classifier::make_toy("cnn_a", 10, 32, 4242); }

std::vector<LabeledImage> toy_split(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledImage> out;
    for (int i = 0; i < n; ++i) {
        Tensor img(3, 32, 32);
        for (double& v : img.v) v = rng.uniform();
        out.push_back({std::move(img), i % 10});
    }
    return out;
}

}  // namespace

TEST_CASE("evaluating the white patch against itself gives identical paired metrics") {
    Classifier m = toy_model();
    auto split = toy_split(40, 7);
    Patch white = make_white_patch(3, 3, m.input_size(), 0.01);
    EvalOptions opts;
    opts.seed = 11;
    AttackReport r = evaluate_attack(m, white, split, "toy", opts);
    CHECK(r.adversarial.top1 == r.control.top1);
    CHECK(r.adversarial.top3 == r.control.top3);
    CHECK(r.adversarial.top5 == r.control.top5);
    for (const auto& [cls, acc] : r.adversarial.per_class_top1)
        CHECK(acc == r.control.per_class_top1.at(cls));
}

TEST_CASE("empty-mask placement override reproduces clean accuracy") {
    Classifier m = toy_model();
    auto split = toy_split(50, 8);
    Patch white = make_white_patch(3, 3, m.input_size(), 0.01);
    EvalOptions opts;
    opts.placement_override = Placement::empty_placement(m.input_size());
    AttackReport r = evaluate_attack(m, white, split, "toy", opts);

    // Clean macro top-1 computed directly.
    std::map<int, int> n, hit;
    for (const auto& item : split) {
        n[item.label]++;
        if (m.predict(item.pixels).label == item.label) hit[item.label]++;
    }
    double macro = 0.0;
    for (const auto& [cls, cnt] : n) macro += static_cast<double>(hit[cls]) / cnt;
    macro /= static_cast<double>(n.size());
    CHECK(r.adversarial.top1 == doctest::Approx(macro).epsilon(1e-12));
    CHECK(r.control.top1 == doctest::Approx(macro).epsilon(1e-12));
}

TEST_CASE("top-k ordering invariant and paired draw logs hold on random patches") {
    Classifier m = toy_model();
    auto split = toy_split(30, 9);
    Rng rng(12);
    Patch noisy = make_gaussian_patch(3, 3, m.input_size(), rng, 0.01);
    EvalOptions opts;
    opts.placement_policy = PlacementPolicy::UniformRandom;
    opts.transforms = TransformConfig{};
    opts.seed = 99;
    AttackReport r = evaluate_attack(m, noisy, split, "toy", opts);
    CHECK(r.adversarial.top1 <= r.adversarial.top3);
    CHECK(r.adversarial.top3 <= r.adversarial.top5);
    CHECK(r.control.top1 <= r.control.top3);
    CHECK(r.control.top3 <= r.control.top5);
    CHECK_FALSE(r.draw_log_hash.empty());

    // Same seed with a different patch consumes identical draws.
    Patch white = make_white_patch(3, 3, m.input_size(), 0.01);
    AttackReport r2 = evaluate_attack(m, white, split, "toy", opts);
    CHECK(r.draw_log_hash == r2.draw_log_hash);
}

TEST_CASE("identical seeds give identical reports") {
    Classifier m = toy_model();
    auto split = toy_split(30, 10);
    Rng rng(13);
    Patch noisy = make_gaussian_patch(3, 3, m.input_size(), rng, 0.01);
    EvalOptions opts;
    opts.placement_policy = PlacementPolicy::UniformRandom;
    opts.seed = 123;
    AttackReport a = evaluate_attack(m, noisy, split, "toy", opts);
    AttackReport b = evaluate_attack(m, noisy, split, "toy", opts);
    CHECK(attack_report_json(a) == attack_report_json(b));

    CHECK_THROWS_AS(evaluate_attack(m, noisy, {}, "empty", opts), ValidationError);
}

TEST_CASE("single-cell transfer matrix equals evaluate_attack") {
    Classifier m = toy_model();
    auto split = toy_split(20, 14);
    Patch white = make_white_patch(3, 3, m.input_size(), 0.01);
    EvalOptions opts;
    opts.seed = 5;
    auto matrix = transfer_matrix({{white, m.model_id()}}, {&m}, split, "toy", opts);
    REQUIRE(matrix.size() == 1);
    REQUIRE(matrix[0].size() == 1);
    CHECK(matrix[0][0].white_box);
    AttackReport direct = evaluate_attack(m, white, split, "toy", opts);
    CHECK(attack_report_json(matrix[0][0].report) == attack_report_json(direct));
}

TEST_CASE("split plans validate coverage, disjointness, and leakage") {
    SplitPlan plan = make_unseen_half_plan(10, 77);
    CHECK(plan.train_classes.size() == 5);
    CHECK(plan.eval_classes.size() == 5);
    CHECK_NOTHROW(plan.validate(10));
    for (int c : plan.train_classes) CHECK(plan.eval_classes.count(c) == 0);

    SplitPlan overlap = plan;
    overlap.eval_classes.insert(*plan.train_classes.begin());
    CHECK_THROWS_AS(overlap.validate(10), ProtocolError);

    SplitPlan hole = plan;
    hole.eval_classes.erase(*hole.eval_classes.begin());
    CHECK_THROWS_AS(hole.validate(10), ProtocolError);
}

TEST_CASE("unseen evaluation: degenerate plan equals evaluate_attack, leakage raises") {
    Classifier m = toy_model();
    auto split = toy_split(30, 21);
    Patch white = make_white_patch(3, 3, m.input_size(), 0.01);

    TrainRun run;
    run.patch = white;
    run.trained_classes = {0, 1, 2, 3, 4};

    SplitPlan all;
    all.mode = SplitPlanMode::All;
    EvalOptions opts;
    opts.seed = 3;
    AttackReport via_plan = unseen_class_eval(m, all, run, split, "toy", opts);
    AttackReport direct = evaluate_attack(m, white, split, "toy", opts);
    CHECK(attack_report_json(via_plan) == attack_report_json(direct));

    SplitPlan plan;
    plan.mode = SplitPlanMode::UnseenHalf;
    plan.train_classes = {0, 1, 2, 3, 4};
    plan.eval_classes = {5, 6, 7, 8, 9};
    TrainRun leaky = run;
    leaky.trained_classes.push_back(7);
    CHECK_THROWS_AS(unseen_class_eval(m, plan, leaky, split, "toy", opts), ProtocolError);

    AttackReport unseen = unseen_class_eval(m, plan, run, split, "toy", opts);
    CHECK(unseen.n_samples == 15);  // only eval-class samples remain
    for (const auto& [cls, acc] : unseen.adversarial.per_class_top1)
        CHECK(plan.eval_classes.count(cls) == 1);
}

TEST_CASE("attack report json round trip") {
    AttackReport r;
    r.patch_id = "p";
    r.model_id = "m";
    r.split_id = "s";
    r.n_samples = 5;
    r.adversarial.top1 = 0.2;
    r.adversarial.top3 = 0.5;
    r.adversarial.top5 = 0.7;
    r.adversarial.per_class_top1[3] = 0.25;
    r.control = r.adversarial;
    r.draw_log_hash = "abc";
    r.config_fingerprint = "def";
    AttackReport back = attack_report_from_json(attack_report_json(r));
    CHECK(back.patch_id == "p");
    CHECK(back.n_samples == 5);
    CHECK(back.adversarial.per_class_top1.at(3) == 0.25);
    CHECK(attack_report_json(back) == attack_report_json(r));
}
