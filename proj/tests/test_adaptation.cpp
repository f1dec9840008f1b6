#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dadet/adaptation.hpp"
#include "dadet/errors.hpp"
#include "test_util.hpp"

using namespace dadet;
using dadet::testing::central_difference;
using dadet::testing::random_tensor;
using dadet::testing::rel_err;

namespace {

constexpr DanKind kAllKinds[] = {DanKind::Baseline, DanKind::Pfr, DanKind::Uc, DanKind::Integrated};

FeaturePyramid random_taps(Rng& rng, int batch, int c, int side) {
    return {random_tensor({batch, c, side, side}, rng), random_tensor({batch, 2 * c, side / 2, side / 2}, rng),
            random_tensor({batch, 4 * c, side / 4, side / 4}, rng)};
}

// Eq. 1 by explicit summation.
double bce_oracle(const Tensor& p, const std::vector<int>& t) {
    double s = 0.0;
    for (int i = 0; i < p.n(); ++i)
        for (int y = 0; y < p.h(); ++y)
            for (int x = 0; x < p.w(); ++x) {
                const double q = p.at(i, 0, y, x);
                s += t[i] * std::log(q) + (1 - t[i]) * std::log(1.0 - q);
            }
    return -s / (p.n() * p.h() * p.w());
}

double loss_of(const DomainAdaptationNetwork& dan, const FeaturePyramid& taps, const DomainLabelVector& labels) {
    return domain_classification_loss(dan.infer(taps), labels);
}

}  // namespace

TEST_CASE("grl is identity forward and -lambda backward") {
    Rng rng = make_rng(1, 0);
    const GrlConfig grl{0.1};
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    x[0] = 0.0;
    x[1] = -5.0;
    CHECK(bitwise_equal(grl_forward(x, grl), x));
    CHECK(bitwise_equal(grl_forward(grl_forward(x, grl), grl), x));

    const Tensor ones(Shape{1, 2, 3, 3}, 1.0);
    const Tensor g = grl_backward(ones, grl);
    for (double v : g.span()) CHECK(v == -0.1);
    const Tensor up = random_tensor({2, 3, 4, 4}, rng);
    const Tensor rev = grl_backward(up, grl);
    for (std::size_t i = 0; i < up.size(); ++i) CHECK(std::abs(rev[i] + 0.1 * up[i]) <= 1e-12);
    CHECK(grl_backward(up, GrlConfig{0.0}).all_zero());
    CHECK(grl_backward(Tensor(Shape{1, 1, 2, 2}), grl).all_zero());

    CHECK_THROWS_AS((GrlConfig{-0.1}.validate()), ConfigError);
    CHECK_THROWS_AS((GrlConfig{NAN}.validate()), ConfigError);
}

TEST_CASE("domain loss reference values") {
    DomainProbMap half{Tensor(Shape{4, 1, 3, 3}, 0.5), DomainMapScale::F1};
    CHECK(domain_map_loss(half, DomainLabelVector{{1, 0, 1, 0}}) == doctest::Approx(0.693147).epsilon(1e-6));
    DomainProbMap nine{Tensor(Shape{2, 1, 2, 2}, 0.9), DomainMapScale::F2};
    CHECK(domain_map_loss(nine, DomainLabelVector{{1, 1}}) == doctest::Approx(0.105361).epsilon(1e-5));
    DomainProbMap near{Tensor(Shape{2, 1, 2, 2}, 1.0 - 1e-12), DomainMapScale::F3};
    const double l = domain_map_loss(near, DomainLabelVector{{1, 1}});
    CHECK(l >= 0.0);
    CHECK(l < 1e-6);
    DomainProbMap zero{Tensor(Shape{1, 1, 1, 1}, 0.0), DomainMapScale::F3};
    CHECK(std::isfinite(domain_map_loss(zero, DomainLabelVector{{1}})));
}

TEST_CASE("domain loss matches the summation oracle") {
    Rng rng = make_rng(2, 0);
    std::uniform_int_distribution<int> nb(1, 4), side(1, 8), bit(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = nb(rng), s = side(rng);
        DomainProbMap m{random_tensor({n, 1, s, s}, rng, 0.01, 0.99), DomainMapScale::Unified};
        DomainLabelVector t;
        for (int i = 0; i < n; ++i) t.t.push_back(bit(rng));
        CHECK(rel_err(domain_map_loss(m, t), bce_oracle(m.probs, t.t), 1e-300) < 1e-10);
    }
}

TEST_CASE("multi-map loss is the mean of per-map losses") {
    Rng rng = make_rng(3, 0);
    const DomainLabelVector t{{1, 0}};
    std::vector<DomainProbMap> maps{{random_tensor({2, 1, 4, 4}, rng, 0.1, 0.9), DomainMapScale::F1},
                                    {random_tensor({2, 1, 2, 2}, rng, 0.1, 0.9), DomainMapScale::F2}};
    const double expected = (bce_oracle(maps[0].probs, t.t) + bce_oracle(maps[1].probs, t.t)) / 2.0;
    CHECK(domain_classification_loss(maps, t) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(total_backbone_objective(2.0, 0.5, GrlConfig{0.1}) == doctest::Approx(2.05));
}

TEST_CASE("label vectors") {
    const DomainLabelVector v = DomainLabelVector::half_split(6);
    CHECK(v.t == std::vector<int>{1, 1, 1, 0, 0, 0});
    CHECK_THROWS_AS(v.validate(5), DimensionError);
    CHECK_THROWS_AS((DomainLabelVector{{1, 2}}.validate(2)), ValidationError);
}

TEST_CASE("baseline halves channels then predicts one map per scale") {
    DomainAdaptationNetwork dan({DanKind::Baseline, ScaleSet::all()}, 256);
    CHECK(dan.path_schedule(Scale::F1) == std::vector<int>{128, 1});
    CHECK(dan.path_schedule(Scale::F2) == std::vector<int>{256, 1});
    CHECK(dan.path_schedule(Scale::F3) == std::vector<int>{512, 1});
    Rng rng = make_rng(4, 2);
    dan.init(rng);
    const auto maps = dan.infer(random_taps(rng, 1, 256, 4));
    REQUIRE(maps.size() == 3);
    CHECK(maps[0].probs.shape() == Shape{1, 1, 4, 4});
    CHECK(maps[2].scale == DomainMapScale::F3);
}

TEST_CASE("progressive reduction stage counts and monotone schedules") {
    for (DanKind k : {DanKind::Pfr, DanKind::Integrated}) {
        DomainAdaptationNetwork dan({k, ScaleSet::all()}, 32);
        CHECK(dan.stage_count(Scale::F1) == 4);
        CHECK(dan.stage_count(Scale::F2) == 4);
        CHECK(dan.stage_count(Scale::F3) == 5);
        for (Scale s : ScaleSet::all().scales()) {
            const auto sched = dan.path_schedule(s);
            CHECK(sched.back() == 1);
            int prev = 32 << static_cast<int>(s);
            for (int c : sched) {
                CHECK(c < prev);
                prev = c;
            }
        }
    }
    DomainAdaptationNetwork pfr({DanKind::Pfr, ScaleSet::all()}, 32);
    CHECK(pfr.path_schedule(Scale::F1) == std::vector<int>{16, 8, 2, 1});
    CHECK(pfr.path_schedule(Scale::F2) == std::vector<int>{32, 8, 2, 1});
    CHECK(pfr.path_schedule(Scale::F3) == std::vector<int>{64, 32, 16, 4, 1});
}

TEST_CASE("unified variants emit one map at the F3 grid with equal branch widths") {
    for (DanKind k : {DanKind::Uc, DanKind::Integrated}) {
        DomainAdaptationNetwork dan({k, ScaleSet::all()}, 32);
        Rng rng = make_rng(5, 2);
        dan.init(rng);
        const auto maps = dan.infer(random_taps(rng, 3, 32, 8));
        REQUIRE(maps.size() == 1);
        CHECK(maps[0].scale == DomainMapScale::Unified);
        CHECK(maps[0].probs.shape() == Shape{3, 1, 2, 2});
        const auto widths = dan.branch_output_channels();
        REQUIRE(widths.size() == 3);
        CHECK(widths[0] == widths[1]);
        CHECK(widths[1] == widths[2]);
    }
    DomainAdaptationNetwork uc({DanKind::Uc, ScaleSet::all()}, 32);
    CHECK(uc.branch_output_channels()[0] == 16);
}

TEST_CASE("variant validation") {
    CHECK_THROWS_AS((DanVariant{DanKind::Uc, {Scale::F1, Scale::F2}}.validate()), ConfigError);
    CHECK_THROWS_AS((DanVariant{DanKind::Integrated, {Scale::F3}}.validate()), ConfigError);
    CHECK_THROWS_AS((DanVariant{DanKind::Baseline, ScaleSet{}}.validate()), ConfigError);
    CHECK_NOTHROW((DanVariant{DanKind::Baseline, {Scale::F2}}.validate()));
    CHECK_THROWS_AS(DomainAdaptationNetwork({DanKind::Pfr, ScaleSet::all()}, 8), ConfigError);
    CHECK(parse_dan_kind("integrated") == DanKind::Integrated);
    CHECK_FALSE(parse_dan_kind("INTEGRATED?").has_value());
}

TEST_CASE("scale set text round trip") {
    for (unsigned m = 0; m < 8; ++m) {
        const ScaleSet s = ScaleSet::from_mask(m);
        CHECK(ScaleSet::parse(s.str()) == s);
    }
    CHECK(ScaleSet::parse("F3,F1") == ScaleSet{Scale::F1, Scale::F3});
    CHECK(ScaleSet::parse("") == ScaleSet{});
    CHECK_FALSE(ScaleSet::parse("F4").has_value());
    CHECK(ScaleSet::from_mask(5).str() == "F1+F3");
}

TEST_CASE("dan gradients match finite differences for every variant") {
    for (DanKind k : kAllKinds) {
        CAPTURE(dan_kind_name(k));
        DomainAdaptationNetwork dan({k, ScaleSet::all()}, 32);
        Rng rng = make_rng(6, 2);
        dan.init(rng);
        FeaturePyramid taps = random_taps(rng, 2, 32, 4);
        const DomainLabelVector labels = DomainLabelVector::half_split(2);

        zero_grads(dan.parameters());
        const auto maps = dan.forward(taps);
        const FeaturePyramid g = dan.backward_unreversed(domain_classification_logit_grads(maps, labels));

        auto f = [&] { return loss_of(dan, taps, labels); };
        for (Parameter* p : dan.parameters())
            for (std::size_t i = 0; i < p->value.size(); i += 97) {
                CHECK(rel_err(central_difference(p->value[i], f), p->grad[i], 1e-6) < 1e-4);
            }
        for (Scale s : ScaleSet::all().scales())
            for (std::size_t i = 0; i < taps[s].size(); i += 13) {
                CHECK(rel_err(central_difference(taps[s][i], f), g[s][i], 1e-6) < 1e-4);
            }
    }
}

TEST_CASE("reversed tap gradient is exactly -lambda times the plain gradient") {
    Rng rng = make_rng(7, 2);
    DomainAdaptationNetwork dan({DanKind::Integrated, ScaleSet::all()}, 32);
    dan.init(rng);
    const FeaturePyramid taps = random_taps(rng, 4, 32, 8);
    const DomainLabelVector labels = DomainLabelVector::half_split(4);
    const auto maps = dan.forward(taps);
    const auto lg = domain_classification_logit_grads(maps, labels);
    const FeaturePyramid plain = dan.backward_unreversed(lg);
    const FeaturePyramid pos = dan.backward(lg, GrlConfig{0.1});
    const FeaturePyramid neg = dan.backward(lg, GrlConfig{0.3});
    for (Scale s : ScaleSet::all().scales())
        for (std::size_t i = 0; i < plain[s].size(); ++i) {
            CHECK(std::abs(pos[s][i] + 0.1 * plain[s][i]) <= 1e-12 * std::max(1.0, std::abs(plain[s][i])));
            CHECK(std::abs(neg[s][i] + 0.3 * plain[s][i]) <= 1e-12 * std::max(1.0, std::abs(plain[s][i])));
        }
}

TEST_CASE("a small DAN step decreases the domain loss") {
    for (DanKind k : kAllKinds) {
        DomainAdaptationNetwork dan({k, ScaleSet::all()}, 32);
        Rng rng = make_rng(8, 2);
        dan.init(rng);
        const FeaturePyramid taps = random_taps(rng, 4, 32, 4);
        const DomainLabelVector labels = DomainLabelVector::half_split(4);
        zero_grads(dan.parameters());
        const double before = domain_classification_loss(dan.forward(taps), labels);
        dan.backward(domain_classification_logit_grads(dan.forward(taps), labels), GrlConfig{0.1});
        for (Parameter* p : dan.parameters())
            for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= 1e-2 * p->grad[i];
        CHECK(loss_of(dan, taps, labels) < before);
    }
}

TEST_CASE("inactive scales get zero gradients") {
    Rng rng = make_rng(9, 2);
    for (unsigned mask = 1; mask < 8; ++mask) {
        const ScaleSet active = ScaleSet::from_mask(mask);
        DomainAdaptationNetwork dan({DanKind::Baseline, active}, 32);
        dan.init(rng);
        const FeaturePyramid taps = random_taps(rng, 2, 32, 4);
        zero_grads(dan.parameters());
        const auto maps = dan.forward(taps);
        CHECK(static_cast<int>(maps.size()) == active.size());
        const auto g = dan.backward(domain_classification_logit_grads(maps, DomainLabelVector::half_split(2)),
                                    GrlConfig{0.1});
        for (Scale s : ScaleSet::all().scales()) {
            if (active.contains(s)) continue;
            CHECK(g[s].all_zero());
            CHECK(g[s].shape() == taps[s].shape());
            for (Parameter* p : dan.branch_parameters(s)) CHECK(p->grad.all_zero());
        }
    }
}

TEST_CASE("all variants stay finite under fuzzing") {
    Rng rng = make_rng(10, 2);
    std::uniform_real_distribution<double> mag(0.0, 50.0);
    for (int trial = 0; trial < 100; ++trial) {
        const DanKind k = kAllKinds[trial % 4];
        DomainAdaptationNetwork dan({k, ScaleSet::all()}, 32);
        dan.init(rng);
        const double m = mag(rng);
        const FeaturePyramid taps = random_taps(rng, 2, 32, 4);
        FeaturePyramid scaled = taps;
        for (Scale s : ScaleSet::all().scales())
            for (double& v : scaled[s].span()) v *= m;
        zero_grads(dan.parameters());
        const auto maps = dan.forward(scaled);
        const DomainLabelVector labels = DomainLabelVector::half_split(2);
        CHECK(std::isfinite(domain_classification_loss(maps, labels)));
        const auto g = dan.backward(domain_classification_logit_grads(maps, labels), GrlConfig{0.1});
        bool finite = true;
        for (Scale s : ScaleSet::all().scales())
            for (double v : g[s].span()) finite = finite && std::isfinite(v);
        for (Parameter* p : dan.parameters())
            for (double v : p->grad.span()) finite = finite && std::isfinite(v);
        CHECK(finite);
    }
}
