#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "placefuse/nn/checkpoint.hpp"
#include "placefuse/nn/kernels.hpp"
#include "placefuse/nn/ops.hpp"
#include "placefuse/nn/sgd.hpp"

#include "helpers/gradcheck.hpp"

using namespace placefuse::nn;
using pf_test::fill_uniform;
using pf_test::gradcheck;

TEST(Linear, IdentityWeights) {
    auto x = make_tensor({1, 2}, {1.0, 2.0});
    auto w = make_tensor({2, 2}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_tensor({2}, {0.0, 0.0});
    auto y = linear(nullptr, x, w, b);
    EXPECT_EQ(y->data[0], 1.0);
    EXPECT_EQ(y->data[1], 2.0);
}

TEST(Linear, ZeroWeightsBiasOnly) {
    auto x = make_tensor({1, 2}, {1.0, 2.0});
    auto w = make_tensor({2, 2}, {0.0, 0.0, 0.0, 0.0});
    auto b = make_tensor({2}, {3.0, 4.0});
    auto y = linear(nullptr, x, w, b);
    EXPECT_EQ(y->data[0], 3.0);
    EXPECT_EQ(y->data[1], 4.0);
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
    auto x = make_tensor({1, 3});
    auto w = make_tensor({2, 2});
    try {
        linear(nullptr, x, w, nullptr);
        FAIL() << "expected dimension error";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[1,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2,2]"), std::string::npos) << msg;
    }
}

TEST(Linear, GradientMatchesFiniteDifferences) {
    Rng rng(7);
    auto x = make_tensor({3, 4});
    auto w = make_tensor({4, 5});
    auto b = make_tensor({5});
    for (auto& t : {x, w, b}) {
        fill_uniform(t, rng);
        t->requires_grad = true;
    }
    auto proj = make_tensor({3, 5});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) { return sum_all(tape, mul(tape, linear(tape, x, w, b), proj)); };
    auto res = gradcheck(fn, {x, w, b});
    EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Conv2d, OneByOneIdentity) {
    Rng rng(3);
    auto x = make_tensor({2, 4, 5});
    fill_uniform(x, rng);
    auto k = make_tensor({2, 2, 1, 1}, {1.0, 0.0, 0.0, 1.0});
    auto b = make_tensor({2}, {0.0, 0.0});
    auto y = conv2d(nullptr, x, k, b, 0);
    for (std::int64_t i = 0; i < x->size(); ++i) EXPECT_EQ(y->data[i], x->data[i]);
}

TEST(Conv2d, AveragingKernelOnConstantMap) {
    const double c = 2.5;
    auto x = make_tensor({1, 6, 6}, c);
    auto k = make_tensor({1, 1, 3, 3}, 1.0 / 9.0);
    auto b = make_tensor({1}, {0.0});
    auto y = conv2d(nullptr, x, k, b, 1);
    // direct convolution oracle: padded taps are zero, interior averages to c
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            int live = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (i + dy >= 0 && i + dy < 6 && j + dx >= 0 && j + dx < 6) ++live;
            EXPECT_NEAR(y->data[i * 6 + j], c * live / 9.0, 1e-12);
        }
    }
}

TEST(Conv2d, EvenKernelRejected) {
    auto x = make_tensor({1, 4, 4});
    auto k = make_tensor({1, 1, 2, 2});
    EXPECT_THROW(conv2d(nullptr, x, k, nullptr, 0), std::invalid_argument);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
    Rng rng(11);
    auto x = make_tensor({2, 5, 4});
    auto k = make_tensor({3, 2, 3, 3});
    auto b = make_tensor({3});
    for (auto& t : {x, k, b}) {
        fill_uniform(t, rng);
        t->requires_grad = true;
    }
    auto proj = make_tensor({3, 5, 4});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) { return sum_all(tape, mul(tape, conv2d(tape, x, k, b, 1), proj)); };
    auto res = gradcheck(fn, {x, k, b});
    EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Conv2d, StridedGradient) {
    Rng rng(12);
    auto x = make_tensor({1, 6, 8});
    auto k = make_tensor({2, 1, 3, 3});
    auto b = make_tensor({2});
    for (auto& t : {x, k, b}) {
        fill_uniform(t, rng);
        t->requires_grad = true;
    }
    auto y0 = conv2d(nullptr, x, k, b, 1, 2);
    ASSERT_EQ(y0->dim(1), 3);
    ASSERT_EQ(y0->dim(2), 4);
    auto proj = make_tensor(y0->shape);
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) {
        return sum_all(tape, mul(tape, conv2d(tape, x, k, b, 1, 2), proj));
    };
    EXPECT_LT(gradcheck(fn, {x, k, b}).max_rel_err, 1e-6);
}

TEST(Softmax, UniformOnEqualInputs) {
    auto x = make_tensor({3}, {0.0, 0.0, 0.0});
    auto y = softmax(nullptr, x, 0);
    for (double v : y->data) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, StableOnLargeInputs) {
    auto x = make_tensor({3}, {1000.0, 0.0, 0.0});
    auto y = softmax(nullptr, x, 0);
    EXPECT_NEAR(y->data[0], 1.0, 1e-12);
    EXPECT_NEAR(y->data[1], 0.0, 1e-12);
    for (double v : y->data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Softmax, SumsToOneWithinTolerance) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = make_tensor({4, 7});
        fill_uniform(x, rng, -50.0, 50.0);
        auto y = softmax(nullptr, x, 1);
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 7; ++j) s += y->data[i * 7 + j];
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
    Rng rng(13);
    auto x = make_tensor({2, 3, 4});
    fill_uniform(x, rng);
    x->requires_grad = true;
    auto proj = make_tensor({2, 3, 4});
    fill_uniform(proj, rng);
    for (int axis = 0; axis < 3; ++axis) {
        auto fn = [&, axis](Tape* tape) {
            return sum_all(tape, mul(tape, softmax(tape, x, axis), proj));
        };
        EXPECT_LT(gradcheck(fn, {x}).max_rel_err, 1e-6) << "axis " << axis;
    }
}

TEST(BilinearSample, ExactAtIntegerCells) {
    Rng rng(17);
    auto f = make_tensor({3, 4, 6});
    fill_uniform(f, rng);
    auto pts = make_tensor({2, 2}, {2.0, 1.0, 5.0, 3.0});
    auto y = bilinear_sample(nullptr, f, pts);
    for (int ch = 0; ch < 3; ++ch) {
        EXPECT_EQ(y->data[0 * 3 + ch], f->data[ch * 24 + 1 * 6 + 2]);
        EXPECT_EQ(y->data[1 * 3 + ch], f->data[ch * 24 + 3 * 6 + 5]);
    }
}

TEST(BilinearSample, MidpointAverages) {
    auto f = make_tensor({1, 1, 2}, {0.0, 2.0});
    auto pts = make_tensor({1, 2}, {0.5, 0.0});
    auto y = bilinear_sample(nullptr, f, pts);
    EXPECT_DOUBLE_EQ(y->data[0], 1.0);
}

TEST(BilinearSample, OutOfRangeReturnsZero) {
    auto f = make_tensor({1, 3, 3}, 5.0);
    auto pts = make_tensor({2, 2}, {-7.0, 1.0, 1.0, 12.0});
    auto y = bilinear_sample(nullptr, f, pts);
    EXPECT_EQ(y->data[0], 0.0);
    EXPECT_EQ(y->data[1], 0.0);
}

TEST(BilinearSample, GradientBothArguments) {
    Rng rng(19);
    auto f = make_tensor({2, 5, 5});
    fill_uniform(f, rng);
    f->requires_grad = true;
    // keep sample points away from integer coordinates where d/dpos kinks
    auto pts = make_tensor({4, 2});
    for (int i = 0; i < 4; ++i) {
        pts->data[2 * i] = rng.uniform(0.2, 3.8) + 0.13;
        pts->data[2 * i + 1] = rng.uniform(0.2, 3.8) + 0.17;
    }
    pts->requires_grad = true;
    auto proj = make_tensor({4, 2});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) {
        return sum_all(tape, mul(tape, bilinear_sample(tape, f, pts), proj));
    };
    EXPECT_LT(gradcheck(fn, {f, pts}).max_rel_err, 1e-5);
}

TEST(Sgd, PlainStep) {
    ParamStore store(1);
    auto p = store.create("w", {1}, 1, ParamInit::Zeros);
    p->tensor->data[0] = 1.0;
    p->tensor->ensure_grad();
    p->tensor->grad[0] = 1.0;
    SgdConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    sgd_step(store.all(), cfg, 0);
    EXPECT_DOUBLE_EQ(p->tensor->data[0], 0.9);
    EXPECT_EQ(p->tensor->grad[0], 0.0);  // zeroed after step
}

TEST(Sgd, LrDecaySchedule) {
    SgdConfig cfg;  // defaults: lr 0.001, decay 0.5 every 5
    EXPECT_DOUBLE_EQ(effective_lr(cfg, 0), 0.001);
    EXPECT_DOUBLE_EQ(effective_lr(cfg, 4), 0.001);
    EXPECT_DOUBLE_EQ(effective_lr(cfg, 5), 0.0005);
    EXPECT_DOUBLE_EQ(effective_lr(cfg, 10), 0.00025);
}

TEST(Sgd, MomentumBufferRecurrence) {
    ParamStore store(1);
    auto p = store.create("w", {1}, 1, ParamInit::Zeros);
    p->tensor->data[0] = 5.0;
    SgdConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    p->tensor->ensure_grad();
    p->tensor->grad[0] = 1.0;
    sgd_step(store.all(), cfg, 0);  // buffer 1.0
    p->tensor->grad[0] = 1.0;
    sgd_step(store.all(), cfg, 0);  // buffer 1.9
    EXPECT_NEAR(p->tensor->data[0], 5.0 - 0.1 * (1.0 + 1.9), 1e-15);
}

TEST(Sgd, MissingGradientIsStateError) {
    ParamStore store(1);
    store.create("w", {2}, 2);
    SgdConfig cfg;
    EXPECT_THROW(sgd_step(store.all(), cfg, 0), std::runtime_error);
}

TEST(Sgd, WeightDecayExemption) {
    ParamStore store(1);
    auto a = store.create("a", {1}, 1, ParamInit::Zeros, false);
    auto b = store.create("b", {1}, 1, ParamInit::Zeros, true);
    a->tensor->data[0] = b->tensor->data[0] = 1.0;
    a->tensor->ensure_grad();
    b->tensor->ensure_grad();
    SgdConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.5;
    sgd_step(store.all(), cfg, 0);
    EXPECT_DOUBLE_EQ(a->tensor->data[0], 1.0 - 0.1 * 0.5);
    EXPECT_DOUBLE_EQ(b->tensor->data[0], 1.0);
}

TEST(ParamStore, SeededInitIsNameKeyed) {
    ParamStore s1(42), s2(42), s3(43);
    auto a1 = s1.create("m.w", {4, 4}, 4);
    auto a2 = s2.create("m.w", {4, 4}, 4);
    auto a3 = s3.create("m.w", {4, 4}, 4);
    EXPECT_EQ(a1->tensor->data, a2->tensor->data);
    EXPECT_NE(a1->tensor->data, a3->tensor->data);
    EXPECT_THROW(s1.create("m.w", {1}, 1), std::invalid_argument);
    const double bound = 1.0 / 2.0;
    for (double v : a1->tensor->data) {
        EXPECT_GE(v, -bound);
        EXPECT_LE(v, bound);
    }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
    Rng rng(23);
    auto x = make_tensor({3, 6});
    auto g = make_tensor({6});
    auto b = make_tensor({6});
    for (auto& t : {x, g, b}) {
        fill_uniform(t, rng);
        t->requires_grad = true;
    }
    auto proj = make_tensor({3, 6});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) {
        return sum_all(tape, mul(tape, layer_norm_rows(tape, x, g, b), proj));
    };
    EXPECT_LT(gradcheck(fn, {x, g, b}).max_rel_err, 1e-5);
}

TEST(SegmentMax, ForwardAndGradRouting) {
    auto x = make_tensor({4, 2}, {1.0, 5.0, 3.0, 2.0, -1.0, 0.0, 7.0, -2.0});
    x->requires_grad = true;
    std::vector<int> seg = {0, 0, 1, 1};
    Tape tape;
    auto y = segment_max(&tape, x, seg, 2);
    EXPECT_DOUBLE_EQ(y->data[0], 3.0);
    EXPECT_DOUBLE_EQ(y->data[1], 5.0);
    EXPECT_DOUBLE_EQ(y->data[2], 7.0);
    EXPECT_DOUBLE_EQ(y->data[3], 0.0);
    auto loss = sum_all(&tape, y);
    tape.backward(loss);
    EXPECT_DOUBLE_EQ(x->grad[0], 0.0);  // lost the max in channel 0
    EXPECT_DOUBLE_EQ(x->grad[1], 1.0);
    EXPECT_DOUBLE_EQ(x->grad[2], 1.0);
    EXPECT_DOUBLE_EQ(x->grad[3], 0.0);
}

TEST(ScatterAndSplat, Gradients) {
    Rng rng(29);
    auto x = make_tensor({3, 2});
    fill_uniform(x, rng);
    x->requires_grad = true;
    std::vector<int> cells = {0, 5, 3};
    auto proj = make_tensor({2, 2, 3});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) {
        return sum_all(tape, mul(tape, scatter_rows(tape, x, cells, 2, 3), proj));
    };
    EXPECT_LT(gradcheck(fn, {x}).max_rel_err, 1e-6);

    auto feat = make_tensor({3, 2});
    auto alpha = make_tensor({3, 4});
    fill_uniform(feat, rng);
    fill_uniform(alpha, rng, 0.0, 1.0);
    feat->requires_grad = alpha->requires_grad = true;
    std::vector<int> scell = {0, 1, 2, -1, 3, 3, 2, 0, -1, -1, 1, 5};
    auto proj2 = make_tensor({2, 2, 3});
    fill_uniform(proj2, rng);
    auto fn2 = [&](Tape* tape) {
        return sum_all(tape, mul(tape, splat(tape, feat, alpha, scell, 2, 3), proj2));
    };
    EXPECT_LT(gradcheck(fn2, {feat, alpha}).max_rel_err, 1e-6);
}

TEST(SplatStats, TracksDroppedMass) {
    auto feat = make_tensor({1, 1}, {2.0});
    auto alpha = make_tensor({1, 2}, {0.25, 0.75});
    std::vector<int> cells = {0, -1};
    SplatStats st;
    auto y = splat(nullptr, feat, alpha, cells, 1, 1, &st);
    EXPECT_DOUBLE_EQ(st.total_mass, 2.0);
    EXPECT_DOUBLE_EQ(st.dropped_mass, 1.5);
    EXPECT_DOUBLE_EQ(y->data[0], 0.5);
}

TEST(DeformSampleAgg, GradientMatchesFiniteDifferences) {
    Rng rng(31);
    const int heads = 2, points = 3, c = 3, h = 6, w = 5, p = 4;
    auto vmap = make_tensor({c, h, w});
    fill_uniform(vmap, rng);
    vmap->requires_grad = true;
    auto ol = make_tensor({p, heads * points * 3});
    for (std::int64_t i = 0; i < ol->size(); ++i) ol->data[i] = rng.uniform(-0.8, 0.8) + 0.037;
    ol->requires_grad = true;
    auto base = std::make_shared<std::vector<double>>();
    for (int i = 0; i < p; ++i) {
        base->push_back(rng.uniform(1.0, 3.5) + 0.21);
        base->push_back(rng.uniform(1.0, 4.5) + 0.19);
    }
    auto proj = make_tensor({p, heads * c});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) {
        return sum_all(tape, mul(tape, deform_sample_agg(tape, vmap, ol, base, heads, points), proj));
    };
    EXPECT_LT(gradcheck(fn, {vmap, ol}).max_rel_err, 1e-5);
}

TEST(SoftMaskOp, GradientWrtRadius) {
    auto dmin = std::make_shared<std::vector<double>>(
        std::vector<double>{0.0, 1.0, 2.0, HUGE_VAL, 0.5, 3.0});
    auto r = make_tensor({1}, {0.7});
    r->requires_grad = true;
    auto proj = make_tensor({2, 3});
    Rng rng(37);
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) {
        return sum_all(tape, mul(tape, soft_mask(tape, dmin, 2, 3, r, 0.25), proj));
    };
    EXPECT_LT(gradcheck(fn, {r}).max_rel_err, 1e-6);
    auto m = soft_mask(nullptr, dmin, 2, 3, r, 0.25);
    EXPECT_DOUBLE_EQ(m->data[3], 1.0);  // no dynamic cell anywhere near
}

TEST(DftMag, MatchesNaiveDftAndGradient) {
    Rng rng(41);
    const int rows = 4, cols = 8;
    auto x = make_tensor({1, rows, cols});
    fill_uniform(x, rng);
    x->requires_grad = true;
    auto y = dft_mag2d(nullptr, x);
    // naive O(n^2) DFT oracle
    for (int u = 0; u < rows; ++u) {
        for (int v = 0; v < cols; ++v) {
            double re = 0.0, im = 0.0;
            for (int a = 0; a < rows; ++a)
                for (int b = 0; b < cols; ++b) {
                    const double ang = -2.0 * M_PI * (double(u) * a / rows + double(v) * b / cols);
                    re += x->data[a * cols + b] * std::cos(ang);
                    im += x->data[a * cols + b] * std::sin(ang);
                }
            EXPECT_NEAR(y->data[u * cols + v], std::hypot(re, im), 1e-10);
        }
    }
    auto proj = make_tensor({1, rows, cols});
    fill_uniform(proj, rng);
    auto fn = [&](Tape* tape) { return sum_all(tape, mul(tape, dft_mag2d(tape, x), proj)); };
    EXPECT_LT(gradcheck(fn, {x}).max_rel_err, 1e-5);
}

TEST(VectorOps, NormalizeAndDistanceGradients) {
    Rng rng(43);
    auto a = make_tensor({6});
    auto b = make_tensor({6});
    fill_uniform(a, rng);
    fill_uniform(b, rng);
    a->requires_grad = b->requires_grad = true;
    auto fn = [&](Tape* tape) {
        return l2_distance(tape, l2_normalize(tape, a), l2_normalize(tape, b));
    };
    EXPECT_LT(gradcheck(fn, {a, b}).max_rel_err, 1e-5);

    bool degenerate = false;
    auto z = make_tensor({4});
    auto nz = l2_normalize(nullptr, z, &degenerate);
    EXPECT_TRUE(degenerate);
    for (double v : nz->data) EXPECT_EQ(v, 0.0);
}

TEST(Checkpoint, BitExactRoundTrip) {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "pf_ckpt_test.bin";
    ParamStore s1(99);
    s1.create("enc.w", {3, 4}, 3);
    s1.create("enc.b", {4}, 3);
    s1.create("r", {1}, 1, ParamInit::Zeros, true);
    s1.get("r")->tensor->data[0] = 0.5;
    save_checkpoint(path.string(), s1, 1234);

    ParamStore s2(7);  // different seed: values must come from the file
    s2.create("enc.w", {3, 4}, 3);
    s2.create("enc.b", {4}, 3);
    s2.create("r", {1}, 1, ParamInit::Zeros, true);
    load_checkpoint(path.string(), s2, 1234);
    for (size_t i = 0; i < s1.size(); ++i) {
        const auto& a = s1.all()[i]->tensor->data;
        const auto& b = s2.all()[i]->tensor->data;
        ASSERT_EQ(a.size(), b.size());
        for (size_t j = 0; j < a.size(); ++j)
            EXPECT_EQ(std::memcmp(&a[j], &b[j], 8), 0) << s1.all()[i]->name;
    }
    EXPECT_THROW(load_checkpoint(path.string(), s2, 4321), std::runtime_error);
    EXPECT_EQ(checkpoint_config_hash(path.string()), 1234u);
    fs::remove(path);
}

TEST(Tape, DeterministicForward) {
    Rng rng(51);
    auto x = make_tensor({4, 4});
    fill_uniform(x, rng);
    auto run = [&] {
        Tape tape;
        auto y = softmax(&tape, linear(&tape, x, x, nullptr), 1);
        return y->data;
    };
    EXPECT_EQ(run(), run());
}
