#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "errors.hpp"
#include "trainer.hpp"

using namespace smac;

namespace {

Sample make_sample(int h, int w) {
    Sample s;
    s.height = h;
    s.width = w;
    s.rgb.resize(static_cast<size_t>(h) * w * 3);
    s.depth.resize(static_cast<size_t>(h) * w);
    s.gt.resize(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            const bool fg = y >= h / 4 && y < 3 * h / 4 && x >= w / 4 && x < 3 * w / 4;
            s.rgb[i * 3] = static_cast<uint8_t>((fg ? 160 : 10) + x * 2); // asymmetric ramp
            s.rgb[i * 3 + 1] = fg ? 210 : 45;
            s.rgb[i * 3 + 2] = fg ? 190 : 60;
            s.depth[i] = fg ? 60 : 200;
            s.gt[i] = fg ? 255 : 0;
        }
    return s;
}

NetworkConfig small_net() {
    NetworkConfig cfg;
    cfg.stage_channels = {4, 6, 6, 8, 8};
    cfg.top_channels = 8;
    cfg.aspp_compress = 8;
    cfg.aspp_branch_channels = 4;
    cfg.input_size = 32;
    cfg.fc6_dilation = 2;
    return cfg;
}

} // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.lr0 == 0.01);
    CHECK(cfg.weight_decay == 0.0005);
    CHECK(cfg.momentum == 0.9);
    cfg.decay_point1 = 0.8; // not before decay_point2
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("preprocess") {
    SUBCASE("constant depth becomes all-zero after mean subtraction") {
        Sample s = make_sample(8, 8);
        std::fill(s.depth.begin(), s.depth.end(), static_cast<uint8_t>(77));
        PreprocessedSample p = preprocess(s, false);
        for (int64_t i = 0; i < p.depth.numel(); ++i) CHECK(p.depth[i] == 0.0);
    }
    SUBCASE("depth inversion happens before min-max rescale") {
        Sample s = make_sample(2, 2);
        s.depth = {0, 255, 100, 100};
        PreprocessedSample plain = preprocess(s, false);
        PreprocessedSample inverted = preprocess(s, true);
        // full-span input: inversion flips every value around the span center,
        // so after mean removal the tensors are exact negations
        for (int64_t i = 0; i < plain.depth.numel(); ++i)
            CHECK(plain.depth[i] == doctest::Approx(-inverted.depth[i]).epsilon(1e-12));
        // the far pixel (255) becomes the closest after inversion
        CHECK(plain.depth[1] > plain.depth[0]);
        CHECK(inverted.depth[1] < inverted.depth[0]);
    }
    SUBCASE("gt binarizes at 128") {
        Sample s = make_sample(2, 2);
        s.gt = {255, 127, 128, 0};
        PreprocessedSample p = preprocess(s, false);
        CHECK(p.gt[0] == 1.0);
        CHECK(p.gt[1] == 0.0);
        CHECK(p.gt[2] == 1.0);
        CHECK(p.gt[3] == 0.0);
    }
    SUBCASE("rgb channel means are removed per image") {
        Sample s = make_sample(8, 8);
        PreprocessedSample p = preprocess(s, false);
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (int i = 0; i < 64; ++i) mean += p.rgb[c * 64 + i];
            CHECK(std::fabs(mean / 64.0) < 1e-12);
        }
    }
    SUBCASE("mismatched planes raise a data error") {
        Sample s = make_sample(4, 4);
        s.depth.pop_back();
        CHECK_THROWS_AS(preprocess(s, false), DataError);
    }
}

TEST_CASE("augment") {
    Sample s = make_sample(40, 40);
    SUBCASE("double forced flip is the identity") {
        Rng rng(1);
        Sample once = augment(s, 32, 1.0, 1.0, rng); // crop_from 1: deterministic geometry
        Rng rng3(99);
        Sample twice = augment(once, 32, 1.0, 1.0, rng3);
        Rng rng4(100);
        Sample plain = augment(s, 32, 1.0, 0.0, rng4);
        CHECK(twice.rgb == plain.rgb);
        CHECK(twice.depth == plain.depth);
        CHECK(twice.gt == plain.gt);
        CHECK(once.rgb != plain.rgb); // a single flip differs
    }
    SUBCASE("fixed seed reproduces the augmented sample exactly") {
        Rng a(7), b(7);
        Sample s1 = augment(s, 32, 1.125, 0.5, a);
        Sample s2 = augment(s, 32, 1.125, 0.5, b);
        CHECK(s1.rgb == s2.rgb);
        CHECK(s1.depth == s2.depth);
        CHECK(s1.gt == s2.gt);
    }
    SUBCASE("1000 fuzzed crops stay inside bounds and sized correctly") {
        Rng rng(11);
        for (int i = 0; i < 1000; ++i) {
            const int size = 8 + rng.uniform_int(24);
            const double crop_from = 1.0 + rng.uniform() * 0.5;
            Sample out = augment(s, size, crop_from, 0.5, rng);
            CHECK(out.width == size);
            CHECK(out.height == size);
            CHECK(out.rgb.size() == static_cast<size_t>(size) * size * 3);
            CHECK(out.gt.size() == static_cast<size_t>(size) * size);
        }
    }
}

TEST_CASE("lr schedule") {
    TrainConfig cfg;
    cfg.lr0 = 0.01;
    cfg.total_iters = 40000;
    CHECK(lr_schedule(0, cfg) == 0.01);
    CHECK(lr_schedule(19999, cfg) == 0.01);
    CHECK(lr_schedule(20000, cfg) == doctest::Approx(0.001));
    CHECK(lr_schedule(25000, cfg) == doctest::Approx(0.001));
    CHECK(lr_schedule(29999, cfg) == doctest::Approx(0.001));
    CHECK(lr_schedule(30000, cfg) == doctest::Approx(0.0001));
    CHECK(lr_schedule(39999, cfg) == doctest::Approx(0.0001));
}

TEST_CASE("sgd_step") {
    TrainConfig cfg;
    cfg.lr0 = 0.01;
    cfg.total_iters = 100;

    SUBCASE("zero grads and zero momentum leave parameters fixed when wd=0") {
        cfg.weight_decay = 0.0;
        Parameter p("p", Tensor({2}, {1.5, -2.0}));
        sgd_step({&p}, cfg, 0);
        CHECK(p.value[0] == 1.5);
        CHECK(p.value[1] == -2.0);
    }
    SUBCASE("plain sgd step decreases by lr") {
        cfg.weight_decay = 0.0;
        cfg.momentum = 0.0;
        Parameter p("p", Tensor::scalar(1.0));
        p.grad[0] = 1.0;
        sgd_step({&p}, cfg, 0);
        CHECK(p.value[0] == doctest::Approx(0.99));
        CHECK(p.grad[0] == 0.0); // grads zeroed by the step
    }
    SUBCASE("two momentum steps with constant unit gradient") {
        cfg.weight_decay = 0.0;
        cfg.momentum = 0.9;
        Parameter p("p", Tensor::scalar(0.0));
        p.grad[0] = 1.0;
        sgd_step({&p}, cfg, 0);
        p.grad[0] = 1.0;
        sgd_step({&p}, cfg, 1);
        // v1 = 1, v2 = 1.9; total decrease = lr * (1 + 1.9)
        CHECK(p.value[0] == doctest::Approx(-0.01 * 2.9).epsilon(1e-12));
    }
    SUBCASE("weight decay shrinks the value with zero gradient") {
        cfg.weight_decay = 0.1;
        Parameter p("p", Tensor::scalar(2.0));
        sgd_step({&p}, cfg, 0);
        CHECK(p.value[0] < 2.0);
        CHECK(p.value[0] == doctest::Approx(2.0 * (1.0 - 0.01 * 0.1)));
    }
    SUBCASE("NaN gradient aborts naming the parameter") {
        Parameter p("enc.w", Tensor::scalar(1.0));
        p.grad[0] = std::nan("");
        CHECK_THROWS_WITH_AS(sgd_step({&p}, cfg, 0), doctest::Contains("enc.w"), NumericError);
    }
    SUBCASE("non-trainable parameters are skipped") {
        Parameter p("p", Tensor::scalar(1.0));
        p.trainable = false;
        p.grad[0] = 5.0;
        sgd_step({&p}, cfg, 0);
        CHECK(p.value[0] == 1.0);
    }
}

TEST_CASE("train_loop") {
    namespace fs = std::filesystem;
    NetworkConfig net = small_net();
    std::vector<Sample> data{make_sample(40, 40)};

    SUBCASE("empty dataset is a data error") {
        TwoStreamState model(net, 3);
        TrainConfig cfg;
        CHECK_THROWS_AS(train_loop(model, {}, cfg, ""), DataError);
    }
    SUBCASE("loss curve has exactly total_iters rows and repeats bitwise under one seed") {
        const std::string curve1 = (fs::temp_directory_path() / "smac_curve1.csv").string();
        const std::string curve2 = (fs::temp_directory_path() / "smac_curve2.csv").string();
        TrainConfig cfg;
        cfg.total_iters = 6;
        cfg.batch = 2;
        cfg.seed = 7;
        {
            TwoStreamState model(net, cfg.seed);
            train_loop(model, data, cfg, curve1);
        }
        {
            TwoStreamState model(net, cfg.seed);
            train_loop(model, data, cfg, curve2);
        }
        std::ifstream f1(curve1), f2(curve2);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2); // bitwise-identical loss curves
        int rows = 0;
        for (char c : s1)
            if (c == '\n') ++rows;
        CHECK(rows == cfg.total_iters);
        fs::remove(curve1);
        fs::remove(curve2);
    }
    SUBCASE("lr=0 keeps every trainable parameter bitwise fixed") {
        TrainConfig cfg;
        cfg.lr0 = 0.0;
        cfg.total_iters = 3;
        cfg.batch = 1;
        TwoStreamState model(net, 5);
        std::vector<Tensor> snapshot;
        for (Parameter* p : model.registry.params) snapshot.push_back(p->value);
        train_loop(model, data, cfg, "");
        for (size_t i = 0; i < snapshot.size(); ++i) {
            const Parameter* p = model.registry.params[i];
            bool same = p->value.numel() == snapshot[i].numel();
            for (int64_t j = 0; same && j < p->value.numel(); ++j)
                same = p->value[j] == snapshot[i][j];
            CAPTURE(p->name);
            CHECK(same);
        }
    }
    SUBCASE("a short run drives the loss down on one image") {
        TrainConfig cfg;
        cfg.total_iters = 30;
        cfg.batch = 1;
        cfg.crop_from = 1.0; // deterministic geometry for the smoke test
        cfg.hflip_prob = 0.0;
        TwoStreamState model(net, 9);
        TrainResult res = train_loop(model, data, cfg, "");
        CHECK(res.final_loss < res.initial_loss);
    }
}
