#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;

namespace smac {

namespace {

std::vector<Sample> load_all(const std::vector<DatasetEntry>& entries) {
    std::vector<Sample> out;
    out.reserve(entries.size());
    for (const DatasetEntry& e : entries) out.push_back(load_sample(e));
    return out;
}

Tensor gray_to_unit(const ImageBytes& img) {
    Tensor t({img.height, img.width});
    for (int64_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<double>(img.pixels[static_cast<size_t>(i)]) / 255.0;
    return t;
}

} // namespace

TrainRunResult run_train(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& out_stem, const std::string& loss_curve_path,
                         const std::function<void(int, double)>& progress) {
    cfg.validate();
    const std::string& root = data_dir.empty() ? cfg.data_dir : data_dir;
    if (root.empty()) throw ConfigError("no dataset directory given (--data or data_dir)");
    const std::vector<Sample> data = load_all(scan_dataset(root, true));
    TwoStreamState model(cfg.net, cfg.train.seed);
    TrainResult res = train_loop(model, data, cfg.train, loss_curve_path, progress);
    if (!out_stem.empty()) save_checkpoint(out_stem, model.registry);
    return {res.initial_loss, res.final_loss, static_cast<int>(res.losses.size())};
}

void run_infer(const RunConfig& cfg, const std::string& ckpt_stem, const std::string& data_dir,
               const std::string& out_dir) {
    cfg.net.validate();
    TwoStreamState model(cfg.net, cfg.train.seed);
    if (!ckpt_stem.empty()) load_checkpoint(ckpt_stem, model.registry);
    const std::vector<DatasetEntry> entries = scan_dataset(data_dir, false);
    fs::create_directories(out_dir);
    for (const DatasetEntry& e : entries) {
        Sample raw = load_sample(e);
        Sample sized = resize_sample(raw, cfg.net.input_size);
        PreprocessedSample pre = preprocess(sized, cfg.train.depth_invert);
        Tape tape;
        ForwardOptions opts; // eval mode
        ForwardResult fwd = two_stream_forward(tape, model, pre.rgb, pre.depth, opts);
        const Tensor& map = tape.val(fwd.final_map); // [1 x S x S]
        Tensor flat({map.dim(1), map.dim(2)});
        for (int64_t i = 0; i < flat.numel(); ++i) flat[i] = map[i];
        Tensor full = resize_bilinear_2d(flat, raw.height, raw.width);
        save_gray((fs::path(out_dir) / (e.stem + ".pgm")).string(), full);
    }
}

namespace {

std::vector<std::pair<std::string, std::string>> pair_dirs(const std::string& pred_dir,
                                                           const std::string& gt_dir) {
    auto index = [](const std::string& dir) {
        std::vector<std::pair<std::string, std::string>> out;
        if (!fs::is_directory(dir)) throw DataError("directory not found: " + dir);
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string ext = entry.path().extension().string();
            if (ext != ".pgm" && ext != ".png" && ext != ".ppm") continue;
            out.emplace_back(entry.path().stem().string(), entry.path().string());
        }
        std::sort(out.begin(), out.end());
        return out;
    };
    auto preds = index(pred_dir);
    auto gts = index(gt_dir);
    if (preds.empty()) throw DataError("no predictions under " + pred_dir);
    std::vector<std::pair<std::string, std::string>> pairs; // pred_path, gt_path
    size_t gi = 0;
    for (const auto& [stem, path] : preds) {
        while (gi < gts.size() && gts[gi].first < stem) ++gi;
        if (gi == gts.size() || gts[gi].first != stem)
            throw DataError("prediction '" + stem + "' has no ground truth in " + gt_dir);
        pairs.emplace_back(path, gts[gi].second);
    }
    return pairs;
}

} // namespace

MetricsReport run_eval(const std::string& pred_dir, const std::string& gt_dir,
                       const std::string& report_path, const std::string& detail_path) {
    std::vector<ImageMetrics> rows;
    for (const auto& [pred_path, gt_path] : pair_dirs(pred_dir, gt_dir)) {
        const ImageBytes pred_img = load_image(pred_path);
        const ImageBytes gt_img = load_image(gt_path);
        if (pred_img.channels != 1)
            throw DataError(pred_path + ": predictions must be single-channel");
        if (gt_img.channels != 1) throw DataError(gt_path + ": ground truth must be single-channel");
        Tensor pred = gray_to_unit(pred_img);
        Tensor gt({gt_img.height, gt_img.width});
        for (int64_t i = 0; i < gt.numel(); ++i)
            gt[i] = gt_img.pixels[static_cast<size_t>(i)] >= 128 ? 1.0 : 0.0;
        if (!pred.same_shape(gt)) pred = resize_bilinear_2d(pred, gt.dim(0), gt.dim(1));

        ImageMetrics m;
        m.name = fs::path(pred_path).stem().string();
        m.sm = s_measure(pred, gt);
        m.max_f = max_f_measure(pred, gt);
        m.e = e_measure(pred, gt);
        m.mae = mae(pred, gt);
        rows.push_back(std::move(m));
    }
    MetricsReport rep = aggregate(std::move(rows));

    char line[256];
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) throw DataError("cannot write report to " + report_path);
        out << "dataset, n_images, Sm, maxF, E, MAE\n";
        std::snprintf(line, sizeof(line), "%s, %d, %.6f, %.6f, %.6f, %.6f\n",
                      fs::path(pred_dir).filename().string().c_str(), rep.n_images, rep.mean_sm,
                      rep.mean_maxf, rep.mean_e, rep.mean_mae);
        out << line;
        if (rep.n_undefined_maxf > 0)
            out << "# maxF undefined (empty gt) for " << rep.n_undefined_maxf << " image(s)\n";
    }
    if (!detail_path.empty()) {
        std::ofstream out(detail_path, std::ios::trunc);
        if (!out) throw DataError("cannot write detail file to " + detail_path);
        out << "name, Sm, maxF, E, MAE\n";
        for (const ImageMetrics& m : rep.per_image) {
            if (m.max_f)
                std::snprintf(line, sizeof(line), "%s, %.6f, %.6f, %.6f, %.6f\n", m.name.c_str(),
                              m.sm, *m.max_f, m.e, m.mae);
            else
                std::snprintf(line, sizeof(line), "%s, %.6f, undefined, %.6f, %.6f\n",
                              m.name.c_str(), m.sm, m.e, m.mae);
            out << line;
        }
    }
    return rep;
}

StatsReport run_stats(const std::string& data_dir, const StatsOptions& opt,
                      const std::string& report_path, const std::string& aam_path) {
    const std::vector<Sample> samples = load_all(scan_dataset(data_dir, true));
    StatsReport rep = dataset_stats(samples, opt);

    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) throw DataError("cannot write report to " + report_path);
        char line[512];
        out << "dataset, n_images, DQ, RGC, DGC, RIC, DIC, CBI, OS\n";
        std::snprintf(line, sizeof(line), "%s, %d, %.4f, %.4f, %.4f, %.4f, %.4f, %.2f, %.4f\n",
                      fs::path(data_dir).filename().string().c_str(), rep.n_images, rep.dq, rep.rgc,
                      rep.dgc, rep.ric, rep.dic, rep.cbi, rep.os);
        out << line;
        std::snprintf(line, sizeof(line),
                      "# gaussian fit: mu_offset=(%.2f, %.2f) sigma=(%.2f, %.2f) converged=%s\n",
                      rep.mu_off_x, rep.mu_off_y, rep.sigma_x, rep.sigma_y,
                      rep.fit_converged ? "yes" : "no");
        out << line;
        if (rep.n_contrast_excluded > 0)
            out << "# contrast stats exclude " << rep.n_contrast_excluded
                << " image(s) lacking fg or bg pixels\n";
        if (rep.n_dq_degenerate > 0)
            out << "# depth quality degenerate (no depth edges) for " << rep.n_dq_degenerate
                << " image(s)\n";
    }
    if (!aam_path.empty()) save_gray(aam_path, rep.aam);
    return rep;
}

// ---------------------------------------------------------------------------
// Gradient suite
// ---------------------------------------------------------------------------

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

void randomize(Parameter& p, Rng& rng) {
    for (int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = rng.uniform(-1.0, 1.0);
}

// Scalar probe: sum(out * fixed_random_weights). Breaks symmetries that a
// plain sum would hide (softmax rows, attention normalization).
struct Probe {
    std::vector<Tensor> weights;
    Var apply(Tape& t, const std::vector<Var>& outs) {
        Var loss;
        for (size_t i = 0; i < outs.size(); ++i) {
            const Tensor& o = t.val(outs[i]);
            if (weights.size() <= i) {
                Rng wrng(1234567 + i);
                weights.push_back(rand_tensor(o.shape(), wrng));
            }
            Var term = t.sum(t.mul(outs[i], t.leaf(weights[i])));
            loss = loss.valid() ? t.add(loss, term) : term;
        }
        return loss;
    }
};

struct SuiteCase {
    std::string name;
    // builds inputs for one seed and returns (params to check, forward closure)
    std::function<GradCheckReport(uint64_t seed, double h, double tol)> run;
};

using Forward = std::function<std::vector<Var>(Tape&)>;

GradCheckReport check(const Forward& fwd, const std::vector<Parameter*>& params, double h,
                      double tol) {
    auto probe = std::make_shared<Probe>();
    auto run = [fwd, probe](bool with_grad) {
        Tape t;
        std::vector<Var> outs = fwd(t);
        Var loss = probe->apply(t, outs);
        const double v = t.val(loss)[0];
        if (with_grad) t.backward(loss);
        return v;
    };
    return gradcheck(run, params, h, tol, 64);
}

} // namespace

GradcheckSummary run_gradcheck_suite(double tol, double fd_step, int seeds) {
    std::vector<SuiteCase> cases;

    auto add_case = [&](const std::string& name,
                        std::function<GradCheckReport(uint64_t, double, double)> fn) {
        cases.push_back({name, std::move(fn)});
    };

    add_case("matmul", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter a("a", rand_tensor({3, 4}, rng)), b("b", rand_tensor({4, 2}, rng));
        return check([&](Tape& t) { return std::vector<Var>{t.matmul(t.param(a), t.param(b))}; },
                     {&a, &b}, h, tol);
    });
    add_case("transpose2d", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter a("a", rand_tensor({3, 5}, rng));
        return check([&](Tape& t) { return std::vector<Var>{t.transpose2d(t.param(a))}; }, {&a}, h,
                     tol);
    });
    add_case("softmax_rows", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter a("a", rand_tensor({4, 6}, rng));
        return check([&](Tape& t) { return std::vector<Var>{t.softmax_rows(t.param(a))}; }, {&a}, h,
                     tol);
    });
    add_case("linear", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({7}, rng)), w("w", rand_tensor({3, 7}, rng)),
            b("b", rand_tensor({3}, rng));
        return check(
            [&](Tape& t) { return std::vector<Var>{t.linear(t.param(x), t.param(w), t.param(b))}; },
            {&x, &w, &b}, h, tol);
    });
    auto conv_case = [](uint64_t seed, double h, double tol, int k, int stride, int dil) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({3, 5, 5}, rng)), w("w", rand_tensor({2, 3, k, k}, rng)),
            b("b", rand_tensor({2}, rng));
        return check(
            [&](Tape& t) {
                return std::vector<Var>{t.conv2d(t.param(x), t.param(w), t.param(b), stride, dil)};
            },
            {&x, &w, &b}, h, tol);
    };
    add_case("conv2d_k3", [=](uint64_t s, double h, double t) { return conv_case(s, h, t, 3, 1, 1); });
    add_case("conv2d_k3_s2", [=](uint64_t s, double h, double t) { return conv_case(s, h, t, 3, 2, 1); });
    add_case("conv2d_k1", [=](uint64_t s, double h, double t) { return conv_case(s, h, t, 1, 1, 1); });
    add_case("conv2d_dil2", [=](uint64_t s, double h, double t) { return conv_case(s, h, t, 3, 1, 2); });
    add_case("maxpool", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({2, 4, 4}, rng));
        return check([&](Tape& t) { return std::vector<Var>{t.maxpool(t.param(x), 2, 2)}; }, {&x},
                     h, tol);
    });
    add_case("avgpool", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({2, 4, 4}, rng));
        return check([&](Tape& t) { return std::vector<Var>{t.avgpool(t.param(x), 2, 2)}; }, {&x},
                     h, tol);
    });
    add_case("global_avgpool", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({3, 4, 4}, rng));
        return check([&](Tape& t) { return std::vector<Var>{t.global_avgpool(t.param(x))}; }, {&x},
                     h, tol);
    });
    add_case("upsample_bilinear", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({2, 3, 3}, rng));
        return check(
            [&](Tape& t) { return std::vector<Var>{t.upsample_bilinear(t.param(x), 5, 7)}; }, {&x},
            h, tol);
    });
    add_case("batchnorm_train", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({3, 4, 4}, rng)), g("g", rand_tensor({3}, rng)),
            b("b", rand_tensor({3}, rng));
        auto rm = std::make_shared<Tensor>(Tensor::zeros({3}));
        auto rv = std::make_shared<Tensor>(Tensor::full({3}, 1.0));
        return check(
            [&, rm, rv](Tape& t) {
                Tensor m = *rm, v = *rv; // forward must not drift the stats between probes
                return std::vector<Var>{
                    t.batchnorm(t.param(x), t.param(g), t.param(b), m, v, true)};
            },
            {&x, &g, &b}, h, tol);
    });
    add_case("batchnorm_eval", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({3, 4, 4}, rng)), g("g", rand_tensor({3}, rng)),
            b("b", rand_tensor({3}, rng));
        auto rm = std::make_shared<Tensor>(rand_tensor({3}, rng));
        auto rv = std::make_shared<Tensor>(Tensor::full({3}, 0.8));
        return check(
            [&, rm, rv](Tape& t) {
                return std::vector<Var>{
                    t.batchnorm(t.param(x), t.param(g), t.param(b), *rm, *rv, false)};
            },
            {&x, &g, &b}, h, tol);
    });
    add_case("elementwise", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter a("a", rand_tensor({3, 4}, rng)), b("b", rand_tensor({3, 4}, rng)),
            s("s", rand_tensor({1}, rng));
        return check(
            [&](Tape& t) {
                Var sum = t.add(t.param(a), t.param(b));
                Var diff = t.sub(t.param(a), t.param(b));
                Var prod = t.mul(sum, diff);
                Var act = t.add(t.relu(prod), t.sigmoid(t.scale(prod, 0.5)));
                return std::vector<Var>{t.scale_by(t.exp(t.scale(act, 0.1)), t.param(s))};
            },
            {&a, &b, &s}, h, tol);
    });
    add_case("concat_ch", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter a("a", rand_tensor({2, 3, 3}, rng)), b("b", rand_tensor({1, 3, 3}, rng));
        return check(
            [&](Tape& t) { return std::vector<Var>{t.concat_ch({t.param(a), t.param(b)})}; },
            {&a, &b}, h, tol);
    });
    add_case("bce_mean", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({1, 4, 4}, rng));
        auto gt = std::make_shared<Tensor>(Tensor({1, 4, 4}));
        for (int64_t i = 0; i < gt->numel(); ++i) (*gt)[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        return check([&, gt](Tape& t) { return std::vector<Var>{t.bce_mean(t.sigmoid(t.param(x)), *gt)}; },
                     {&x}, h, tol);
    });

    // attention blocks
    add_case("nl_block", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        const int c = 4, ce = 2;
        NlParams p("nl", c, ce, rng);
        randomize(p.w_z, rng);
        Parameter x("x", rand_tensor({c, 3, 3}, rng));
        return check([&](Tape& t) {
            NlBlockOut out = nl_block(t, t.param(x), p);
            return std::vector<Var>{out.z, out.attention};
        }, {&x, &p.w_theta, &p.w_phi, &p.w_g, &p.w_z}, h, tol);
    });
    add_case("mutual_attention", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        const int c = 4, ce = 2;
        MacParams p("mac", c, ce, rng);
        Parameter xr("xr", rand_tensor({c, 3, 3}, rng)), xd("xd", rand_tensor({c, 3, 3}, rng));
        return check([&](Tape& t) {
            MutualAttentionOut out = mutual_attention(t, t.param(xr), t.param(xd), p);
            return std::vector<Var>{out.y_r, out.y_d};
        }, {&xr, &xd, &p.rgb.w_theta, &p.rgb.w_phi, &p.rgb.w_g, &p.depth.w_theta, &p.depth.w_phi,
            &p.depth.w_g}, h, tol);
    });
    add_case("contrast_attention", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        Parameter f("f", rand_tensor({4, 4}, rng)), traw("t_raw", rand_tensor({1}, rng));
        return check(
            [&](Tape& t) { return std::vector<Var>{contrast_attention(t, t.param(f), t.param(traw))}; },
            {&f, &traw}, h, tol);
    });
    auto mac_like = [](uint64_t seed, double h, double tol, bool selective) {
        Rng rng(seed);
        const int c = 4, ce = 2;
        MacParams p("mac", c, ce, rng);
        randomize(p.rgb.w_z, rng);
        randomize(p.depth.w_z, rng);
        randomize(p.w_c_r, rng);
        randomize(p.w_c_d, rng);
        randomize(p.t_raw, rng);
        const int hw = selective ? 4 : 3;
        SelectiveHeadParams sel("sel", c, hw, hw, rng);
        Parameter xr("xr", rand_tensor({c, hw, hw}, rng)), xd("xd", rand_tensor({c, hw, hw}, rng));
        std::vector<Parameter*> params{&xr, &xd, &p.rgb.w_theta, &p.rgb.w_phi, &p.rgb.w_g,
                                       &p.rgb.w_z, &p.depth.w_theta, &p.depth.w_phi, &p.depth.w_g,
                                       &p.depth.w_z, &p.w_c_r, &p.w_c_d, &p.t_raw};
        if (selective) {
            params.insert(params.end(),
                          {&sel.est1.w, &sel.est2.w, &sel.est2.b, &sel.est1_bn.gamma,
                           &sel.est1_bn.beta, &sel.down1.w, &sel.down2.w, &sel.down1_bn.gamma,
                           &sel.down1_bn.beta, &sel.down2_bn.gamma, &sel.down2_bn.beta, &sel.fc1.w,
                           &sel.fc1.b, &sel.fc2.w, &sel.fc2.b});
        }
        return check(
            [&, selective](Tape& t) {
                if (selective) {
                    SmacBlockOut out = smac_block(t, t.param(xr), t.param(xd), p, sel, false);
                    return std::vector<Var>{out.z_r, out.z_d, out.alpha};
                }
                MacBlockOut out = mac_block(t, t.param(xr), t.param(xd), p);
                return std::vector<Var>{out.z_r, out.z_d};
            },
            params, h, tol);
    };
    add_case("mac_block", [=](uint64_t s, double h, double t) { return mac_like(s, h, t, false); });
    add_case("smac_block", [=](uint64_t s, double h, double t) { return mac_like(s, h, t, true); });
    add_case("selective_alpha", [](uint64_t seed, double h, double tol) {
        Rng rng(seed);
        const int c = 3;
        SelectiveHeadParams sel("sel", c, 4, 4, rng);
        Parameter xr("xr", rand_tensor({c, 4, 4}, rng)), xd("xd", rand_tensor({c, 4, 4}, rng));
        return check(
            [&](Tape& t) {
                return std::vector<Var>{selective_alpha(t, t.param(xr), t.param(xd), sel, false)};
            },
            {&xr, &xd, &sel.est1.w, &sel.est2.w, &sel.est2.b, &sel.est1_bn.gamma,
             &sel.est1_bn.beta, &sel.down1.w, &sel.down2.w, &sel.down1_bn.gamma,
             &sel.down1_bn.beta, &sel.down2_bn.gamma, &sel.down2_bn.beta, &sel.fc1.w, &sel.fc1.b,
             &sel.fc2.w, &sel.fc2.b},
            h, tol);
    });
    auto sma_case = [](uint64_t seed, double h, double tol, bool pooled) {
        Rng rng(seed);
        const int c = 4, ce = 2;
        SmaParams p("sma", c, ce, rng);
        randomize(p.rgb.w_z, rng);
        randomize(p.depth.w_z, rng);
        Parameter xr("xr", rand_tensor({c, 4, 4}, rng)), xd("xd", rand_tensor({c, 4, 4}, rng));
        Parameter alpha("alpha", Tensor::scalar(0.7));
        return check(
            [&, pooled](Tape& t) {
                SmaBlockOut out = sma_block(t, t.param(xr), t.param(xd), p, t.param(alpha), pooled);
                return std::vector<Var>{out.z_r, out.z_d};
            },
            {&xr, &xd, &alpha, &p.rgb.w_theta, &p.rgb.w_phi, &p.rgb.w_g, &p.rgb.w_z,
             &p.depth.w_theta, &p.depth.w_phi, &p.depth.w_g, &p.depth.w_z},
            h, tol);
    };
    add_case("sma_block", [=](uint64_t s, double h, double t) { return sma_case(s, h, t, false); });
    add_case("sma_block_pooled", [=](uint64_t s, double h, double t) { return sma_case(s, h, t, true); });

    GradcheckSummary summary;
    summary.all_pass = true;
    std::string table = "case                      seeds   max_rel_err  result\n";
    for (SuiteCase& c : cases) {
        double worst = 0.0;
        bool pass = true;
        for (int s = 0; s < seeds; ++s) {
            GradCheckReport rep = c.run(static_cast<uint64_t>(s + 1), fd_step, tol);
            worst = std::max(worst, rep.max_rel_err);
            pass = pass && rep.pass;
        }
        summary.rows.push_back({c.name, worst, pass});
        summary.all_pass = summary.all_pass && pass;
        char line[128];
        std::snprintf(line, sizeof(line), "%-24s %6d  %12.3e  %s\n", c.name.c_str(), seeds, worst,
                      pass ? "pass" : "FAIL");
        table += line;
    }
    summary.table = std::move(table);
    return summary;
}

double run_dump_attention(const RunConfig& cfg, const std::string& ckpt_stem,
                          const std::string& rgb_path, const std::string& depth_path,
                          int query_y, int query_x, const std::string& out_dir) {
    cfg.net.validate();
    TwoStreamState model(cfg.net, cfg.train.seed);
    if (!ckpt_stem.empty()) load_checkpoint(ckpt_stem, model.registry);

    const ImageBytes rgb_img = load_image(rgb_path);
    const ImageBytes depth_img = load_image(depth_path);
    if (rgb_img.channels != 3) throw DataError(rgb_path + ": expected a 3-channel image");
    if (depth_img.channels != 1) throw DataError(depth_path + ": expected a single-channel image");
    if (rgb_img.width != depth_img.width || rgb_img.height != depth_img.height)
        throw DataError("rgb and depth sizes differ");

    Sample s;
    s.width = rgb_img.width;
    s.height = rgb_img.height;
    s.rgb = rgb_img.pixels;
    s.depth = depth_img.pixels;
    const int size = cfg.net.input_size;
    Sample sized = resize_sample(s, size);
    PreprocessedSample pre = preprocess(sized, cfg.train.depth_invert);

    Tape tape;
    EncoderOut er = encoder_forward(tape, tape.leaf(pre.rgb), model.enc_r, false);
    EncoderOut ed = encoder_forward(tape, tape.leaf(pre.depth), model.enc_d, false);
    Var top_r = dense_aspp(tape, er.top, model.aspp_r, false);
    Var top_d = dense_aspp(tape, ed.top, model.aspp_d, false);
    SmacBlockOut out = smac_block(tape, top_r, top_d, model.smac, model.sel, false);

    const int grid = size / 8;
    const int qy = std::clamp(query_y, 0, size - 1) * grid / size;
    const int qx = std::clamp(query_x, 0, size - 1) * grid / size;
    const int q = qy * grid + qx;

    fs::create_directories(out_dir);
    auto render = [&](Var map, const std::string& name) {
        const Tensor& m = tape.val(map);
        Tensor row({grid, grid});
        double peak = 0.0;
        for (int i = 0; i < grid * grid; ++i) {
            row[i] = m.at2(q, i);
            peak = std::max(peak, row[i]);
        }
        if (peak > 0)
            for (int64_t i = 0; i < row.numel(); ++i) row[i] /= peak;
        Tensor big = resize_bilinear_2d(row, size, size);
        big.at2(std::clamp(query_y, 0, size - 1), std::clamp(query_x, 0, size - 1)) = 1.0;
        save_gray((fs::path(out_dir) / (name + ".pgm")).string(), big);
    };
    render(out.a_r, "a_r");
    render(out.a_d, "a_d");
    render(out.c_r, "c_r");
    render(out.c_d, "c_d");
    return tape.val(out.alpha)[0];
}

} // namespace smac
