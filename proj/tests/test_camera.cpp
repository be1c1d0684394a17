#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "placefuse/camera/stream.hpp"

#include "helpers/gradcheck.hpp"

using namespace placefuse;
using namespace placefuse::cam;

namespace {

CameraRig tiny_rig(int n_views, int h, int w) {
    CameraRig rig;
    rig.image_h = h;
    rig.image_w = w;
    for (int v = 0; v < n_views; ++v) {
        CameraRig::View view;
        const double yaw0 = 2.0 * M_PI * v / n_views;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double az = yaw0 + (x + 0.5) / w * (2.0 * M_PI / n_views) - M_PI / n_views;
                view.pixel_rays.push_back({std::cos(az), std::sin(az)});
            }
        rig.views.push_back(view);
    }
    rig.validate();
    return rig;
}

void zero_biases(nn::ParamStore& store) {
    for (const auto& p : store.all())
        if (p->name.ends_with(".b")) std::fill(p->tensor->data.begin(), p->tensor->data.end(), 0.0);
}

}  // namespace

TEST(DepthBins, BinAssignment) {
    DepthBins bins;  // 32 bins over [1.0, 51.2]
    EXPECT_EQ(bins.bin_of(0.5), -1);
    EXPECT_EQ(bins.bin_of(60.0), -1);
    EXPECT_EQ(bins.bin_of(1.0), 0);
    EXPECT_EQ(bins.bin_of(51.2), 31);
    EXPECT_NEAR(bins.center(0), 1.0 + 0.5 * (50.2 / 32.0), 1e-12);
}

TEST(ViewEncoder, ZeroImagesZeroBiasGiveZeroFeatures) {
    nn::ParamStore store(3);
    ViewEncoder enc(store, 1, 4, 8);
    zero_biases(store);
    MultiViewImages imgs;
    imgs.views.push_back(nn::make_tensor({1, 16, 16}));
    auto feats = enc.encode_views(nullptr, imgs);
    for (double v : feats[0].feat->data) EXPECT_EQ(v, 0.0);
    for (double v : feats[0].depth_logits->data) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(feats[0].feat->dim(1), 4);  // x4 downsampling
    EXPECT_EQ(feats[0].feat->dim(2), 4);
}

TEST(ViewEncoder, SharedWeightsGiveIdenticalViewOutputs) {
    nn::ParamStore store(5);
    ViewEncoder enc(store, 1, 4, 8);
    nn::Rng rng(7);
    auto img = nn::make_tensor({1, 16, 24});
    pf_test::fill_uniform(img, rng);
    MultiViewImages imgs;
    imgs.views.push_back(img);
    imgs.views.push_back(std::make_shared<nn::Tensor>(*img));
    auto feats = enc.encode_views(nullptr, imgs);
    EXPECT_EQ(feats[0].feat->data, feats[1].feat->data);
    EXPECT_EQ(feats[0].depth_logits->data, feats[1].depth_logits->data);
}

TEST(ViewEncoder, GradientMatchesFiniteDifferences) {
    nn::ParamStore store(11);
    ViewEncoder enc(store, 1, 3, 4, 4);
    nn::Rng rng(13);
    auto img = nn::make_tensor({1, 8, 8});
    pf_test::fill_uniform(img, rng);
    img->requires_grad = true;
    auto proj_f = nn::make_tensor({3, 2, 2});
    auto proj_d = nn::make_tensor({4, 2, 2});
    pf_test::fill_uniform(proj_f, rng);
    pf_test::fill_uniform(proj_d, rng);
    auto fn = [&](nn::Tape* tape) {
        auto f = enc.encode_view(tape, img);
        return nn::add(tape, nn::sum_all(tape, nn::mul(tape, f.feat, proj_f)),
                       nn::sum_all(tape, nn::mul(tape, f.depth_logits, proj_d)));
    };
    std::vector<nn::TensorPtr> leaves = {img};
    for (const auto& p : store.all()) leaves.push_back(p->tensor);
    EXPECT_LT(pf_test::gradcheck(fn, leaves).max_rel_err, 1e-4);
}

TEST(LiftSplat, SingleRayMassConcentratesInOneCell) {
    const auto spec = geo::BevGridSpec::standard();
    DepthBins bins;
    CameraRig rig;
    rig.image_h = 4;
    rig.image_w = 4;
    CameraRig::View view;
    for (int i = 0; i < 16; ++i) view.pixel_rays.push_back({1.0, 0.0});  // all rays +x
    rig.views.push_back(view);

    ViewFeatures vf;
    vf.feat = nn::make_tensor({1, 1, 1}, {2.0});
    vf.depth_logits = nn::make_tensor({32, 1, 1});
    const int hot_bin = 7;
    for (int d = 0; d < 32; ++d) vf.depth_logits->data[d] = d == hot_bin ? 500.0 : 0.0;

    auto lift = lift_splat(nullptr, {vf}, rig, bins, spec);
    const double depth = bins.center(hot_bin);
    const auto g = geo::world_to_grid(spec, depth, 0.0);
    const int cell = geo::grid_cell(g.y) * 128 + geo::grid_cell(g.x);
    EXPECT_NEAR(lift.bev->data[cell], 2.0, 1e-9);
    double elsewhere = 0.0;
    for (std::int64_t i = 0; i < lift.bev->size(); ++i)
        if (i != cell) elsewhere += std::fabs(lift.bev->data[i]);
    EXPECT_LT(elsewhere, 1e-9);
}

TEST(LiftSplat, ZeroFeaturesGiveZeroBev) {
    const auto spec = geo::BevGridSpec::standard();
    DepthBins bins;
    auto rig = tiny_rig(2, 8, 8);
    std::vector<ViewFeatures> feats;
    for (int v = 0; v < 2; ++v) {
        ViewFeatures vf;
        vf.feat = nn::make_tensor({3, 2, 2});
        vf.depth_logits = nn::make_tensor({32, 2, 2});
        nn::Rng rng(17 + v);
        pf_test::fill_uniform(vf.depth_logits, rng, -3, 3);
        feats.push_back(vf);
    }
    auto lift = lift_splat(nullptr, feats, rig, bins, spec);
    for (double v : lift.bev->data) EXPECT_EQ(v, 0.0);
}

TEST(LiftSplat, MassConservation) {
    const auto spec = geo::BevGridSpec::standard();
    DepthBins bins;
    auto rig = tiny_rig(3, 8, 8);
    nn::Rng rng(19);
    std::vector<ViewFeatures> feats;
    for (int v = 0; v < 3; ++v) {
        ViewFeatures vf;
        vf.feat = nn::make_tensor({2, 2, 2});
        vf.depth_logits = nn::make_tensor({32, 2, 2});
        pf_test::fill_uniform(vf.feat, rng);
        pf_test::fill_uniform(vf.depth_logits, rng, -2, 2);
        feats.push_back(vf);
    }
    auto lift = lift_splat(nullptr, feats, rig, bins, spec);
    double input_mass = 0.0;
    for (const auto& vf : feats)
        for (double v : vf.feat->data) input_mass += v;
    EXPECT_NEAR(lift.stats.total_mass, input_mass, 1e-9);  // depth mass sums to 1 per pixel
    double scattered = 0.0;
    for (double v : lift.bev->data) scattered += v;
    EXPECT_NEAR(scattered, lift.stats.total_mass - lift.stats.dropped_mass, 1e-9);
}

TEST(DepthLoss, OneHotUniformAndOutOfRange) {
    DepthBins bins;
    auto logits = nn::make_tensor({2, 32});
    std::vector<double> gt = {bins.center(4), bins.center(9)};
    // near-one-hot prediction on the correct bins
    logits->data[4] = 400.0;
    logits->data[32 + 9] = 400.0;
    auto res = depth_loss(nullptr, logits, gt, bins);
    EXPECT_EQ(res.supervised, 2);
    EXPECT_NEAR(res.loss->data[0], 0.0, 1e-9);

    auto uniform = nn::make_tensor({3, 32}, 0.25);
    std::vector<double> gt2 = {2.0, 20.0, 40.0};
    auto res2 = depth_loss(nullptr, uniform, gt2, bins);
    EXPECT_NEAR(res2.loss->data[0], std::log(32.0), 1e-12);

    std::vector<double> gt3 = {0.1, 99.0, 55.5};
    auto res3 = depth_loss(nullptr, uniform, gt3, bins);
    EXPECT_TRUE(res3.empty_supervision);
    EXPECT_EQ(res3.loss->data[0], 0.0);
}

TEST(DepthLoss, DistributionSumsToOne) {
    nn::Rng rng(23);
    auto logits = nn::make_tensor({5, 32});
    pf_test::fill_uniform(logits, rng, -30, 30);
    auto alpha = nn::softmax(nullptr, logits, 1);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 32; ++j) s += alpha->data[i * 32 + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(CameraStream, EndToEndGradientToImagePixels) {
    const auto spec = geo::BevGridSpec::standard();
    DepthBins bins;
    bins.n_bins = 6;
    auto rig = tiny_rig(2, 8, 8);
    nn::ParamStore store(29);
    ViewEncoder enc(store, 1, 2, 6, 4);
    nn::Rng rng(31);
    MultiViewImages imgs;
    for (int v = 0; v < 2; ++v) {
        auto img = nn::make_tensor({1, 8, 8});
        pf_test::fill_uniform(img, rng);
        img->requires_grad = true;
        imgs.views.push_back(img);
    }
    auto proj = nn::make_tensor({2, 128, 128});
    pf_test::fill_uniform(proj, rng);
    auto fn = [&](nn::Tape* tape) {
        auto feats = enc.encode_views(tape, imgs);
        auto lift = lift_splat(tape, feats, rig, bins, spec);
        return nn::sum_all(tape, nn::mul(tape, lift.bev, proj));
    };
    EXPECT_LT(pf_test::gradcheck(fn, {imgs.views[0], imgs.views[1]}).max_rel_err, 1e-3);
}

TEST(TensorFile, RoundTripAtF32Precision) {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "pf_tensor_test.bin";
    nn::Rng rng(37);
    auto t = nn::make_tensor({2, 3, 4});
    for (double& v : t->data) v = static_cast<float>(rng.uniform(-5, 5));  // f32-representable
    write_tensor_f32(path.string(), t);
    auto back = read_tensor_f32(path.string());
    EXPECT_EQ(back->shape, t->shape);
    EXPECT_EQ(back->data, t->data);
    fs::remove(path);
}

TEST(RigFile, RoundTrip) {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "pf_rig_test.json";
    auto rig = tiny_rig(2, 4, 6);
    write_rig_json(path.string(), rig);
    auto back = read_rig_json(path.string());
    EXPECT_EQ(back.image_h, 4);
    EXPECT_EQ(back.image_w, 6);
    ASSERT_EQ(back.views.size(), 2u);
    for (size_t v = 0; v < 2; ++v)
        for (size_t i = 0; i < back.views[v].pixel_rays.size(); ++i) {
            EXPECT_DOUBLE_EQ(back.views[v].pixel_rays[i][0], rig.views[v].pixel_rays[i][0]);
            EXPECT_DOUBLE_EQ(back.views[v].pixel_rays[i][1], rig.views[v].pixel_rays[i][1]);
        }
    fs::remove(path);
}
