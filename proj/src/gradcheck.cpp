#include "quadtrack/gradcheck.hpp"

#include <cmath>

#include "quadtrack/descriptor.hpp"
#include "quadtrack/losses.hpp"
#include "quadtrack/recurrent.hpp"

namespace quadtrack::gradcheck {

namespace {

using dvec = std::vector<double>;

dvec as_double(const Tensor& t) {
    dvec out(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = t[i];
    return out;
}

// row-major [m x k] * [k] in double
dvec dmatvec(const Tensor& w, const dvec& x) {
    const int m = w.dim(0), k = w.dim(1);
    dvec out(static_cast<size_t>(m), 0.0);
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t) acc += static_cast<double>(w.at(i, t)) * x[static_cast<size_t>(t)];
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

dvec dadd(const dvec& a, const Tensor& b) {
    dvec out = a;
    for (size_t i = 0; i < out.size(); ++i) out[i] += b[static_cast<int64_t>(i)];
    return out;
}

double dsigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double drelu(double v) { return v > 0.0 ? v : 0.0; }

double ddist(const dvec& a, const dvec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// double transcription of the GRU cell over current param contents
dvec dgru(const Tensor& w_z, const Tensor& w_r, const Tensor& w_h, const Tensor& b_z, const Tensor& b_r,
          const Tensor& b_h, const dvec& x, const dvec& h_prev) {
    dvec xh = x;
    xh.insert(xh.end(), h_prev.begin(), h_prev.end());
    dvec z = dadd(dmatvec(w_z, xh), b_z);
    dvec r = dadd(dmatvec(w_r, xh), b_r);
    for (double& v : z) v = dsigmoid(v);
    for (double& v : r) v = dsigmoid(v);
    dvec xrh = x;
    for (size_t i = 0; i < h_prev.size(); ++i) xrh.push_back(r[i] * h_prev[i]);
    dvec cand = dadd(dmatvec(w_h, xrh), b_h);
    for (double& v : cand) v = std::tanh(v);
    dvec h(h_prev.size());
    for (size_t i = 0; i < h.size(); ++i) h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * cand[i];
    return h;
}

dvec dgeometry(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2, const dvec& g) {
    dvec hidden = dadd(dmatvec(w1, g), b1);
    for (double& v : hidden) v = drelu(v);
    return dadd(dmatvec(w2, hidden), b2);
}

double vec_max_norm(const Tensor& t) {
    double m = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) m = std::max(m, std::fabs(static_cast<double>(t[i])));
    return m;
}

}  // namespace

double fd_max_rel_error(FdProblem& problem, double eps) {
    ad::Tape tape;
    std::vector<ad::NodeId> ids;
    const ad::Value root = problem.build(tape, ids);
    if (ids.size() != problem.params.size()) {
        throw UsageError("fd_max_rel_error: build must register every parameter");
    }
    const auto grads = tape.backward(root.id);

    double worst = 0.0;
    for (size_t p = 0; p < problem.params.size(); ++p) {
        Tensor& param = *problem.params[p];
        const Tensor& analytic = grads[static_cast<size_t>(ids[p])];
        Tensor fd(param.shape());
        for (int64_t i = 0; i < param.numel(); ++i) {
            const float saved = param[i];
            const float hi = static_cast<float>(saved + eps);
            const float lo = static_cast<float>(saved - eps);
            param[i] = hi;
            const double up = problem.eval();
            param[i] = lo;
            const double down = problem.eval();
            param[i] = saved;
            fd[i] = static_cast<float>((up - down) / (static_cast<double>(hi) - static_cast<double>(lo)));
        }
        const double scale = std::max(vec_max_norm(analytic), vec_max_norm(fd));
        if (scale < 1e-10) continue;  // both flat: agreement by silence
        for (int64_t i = 0; i < param.numel(); ++i) {
            worst = std::max(worst, std::fabs(static_cast<double>(analytic[i]) - fd[i]) / scale);
        }
    }
    return worst;
}

namespace {

using kernels::Activation;

// sum of squares of a traced vector
ad::Value sq_sum(ad::Tape& t, ad::Value x) { return ad::sum(&t, ad::mul(&t, x, x)); }

CheckRow run_one(const std::string& name, FdProblem& problem) {
    const double err = fd_max_rel_error(problem);
    return CheckRow{name, err, err < kTolerance};
}

CheckRow check_matmul(Rng rng) {
    Tensor a = Tensor::uniform({4, 5}, rng);
    Tensor b = Tensor::uniform({5, 3}, rng);
    FdProblem prob;
    prob.params = {&a, &b};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value va = ad::leaf(t, a), vb = ad::leaf(t, b);
        ids = {va.id, vb.id};
        return sq_sum(t, ad::matmul(&t, va, vb));
    };
    prob.eval = [&]() {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 3; ++j) {
                double c = 0.0;
                for (int k = 0; k < 5; ++k) c += static_cast<double>(a.at(i, k)) * b.at(k, j);
                acc += c * c;
            }
        }
        return acc;
    };
    return run_one("op.matmul", prob);
}

CheckRow check_elementwise(const std::string& name, Rng rng, int which) {
    Tensor x = Tensor::uniform({7}, rng);
    Tensor y = Tensor::uniform({7}, rng);
    FdProblem prob;
    prob.params = {&x, &y};
    prob.build = [&, which](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x), vy = ad::leaf(t, y);
        ids = {vx.id, vy.id};
        ad::Value z = which == 0   ? ad::add(&t, vx, vy)
                      : which == 1 ? ad::sub(&t, vx, vy)
                                   : ad::mul(&t, vx, vy);
        return sq_sum(t, z);
    };
    prob.eval = [&, which]() {
        double acc = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            const double a = x[i], b = y[i];
            const double z = which == 0 ? a + b : which == 1 ? a - b : a * b;
            acc += z * z;
        }
        return acc;
    };
    return run_one(name, prob);
}

CheckRow check_affine(Rng rng) {
    Tensor x = Tensor::uniform({9}, rng);
    FdProblem prob;
    prob.params = {&x};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x);
        ids = {vx.id};
        return sq_sum(t, ad::affine(&t, vx, 2.5f, -0.7f));
    };
    prob.eval = [&]() {
        double acc = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            const double z = 2.5 * x[i] - 0.7;
            acc += z * z;
        }
        return acc;
    };
    return run_one("op.affine", prob);
}

CheckRow check_activation(const std::string& name, Rng rng, Activation kind) {
    Tensor x = Tensor::uniform({9}, rng);
    if (kind == Activation::Relu) {
        // keep pre-activations away from the kink so central differences are clean
        for (int64_t i = 0; i < x.numel(); ++i) {
            if (std::fabs(x[i]) < 0.05f) x[i] += 0.1f;
        }
    }
    FdProblem prob;
    prob.params = {&x};
    prob.build = [&, kind](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x);
        ids = {vx.id};
        return sq_sum(t, ad::activation(&t, vx, kind));
    };
    prob.eval = [&, kind]() {
        double acc = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            const double v = x[i];
            const double z = kind == Activation::Sigmoid ? dsigmoid(v) : kind == Activation::Tanh ? std::tanh(v) : drelu(v);
            acc += z * z;
        }
        return acc;
    };
    return run_one(name, prob);
}

CheckRow check_concat(Rng rng) {
    Tensor x = Tensor::uniform({5}, rng);
    Tensor y = Tensor::uniform({3}, rng);
    FdProblem prob;
    prob.params = {&x, &y};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x), vy = ad::leaf(t, y);
        ids = {vx.id, vy.id};
        return sq_sum(t, ad::concat(&t, {vx, vy}));
    };
    prob.eval = [&]() {
        double acc = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]) * x[i];
        for (int64_t i = 0; i < y.numel(); ++i) acc += static_cast<double>(y[i]) * y[i];
        return acc;
    };
    return run_one("op.concat", prob);
}

CheckRow check_norm(Rng rng) {
    Tensor x = Tensor::uniform({6}, rng);
    x[0] += 1.5f;  // keep the norm clear of zero
    FdProblem prob;
    prob.params = {&x};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x);
        ids = {vx.id};
        ad::Value n = ad::norm(&t, vx);
        return ad::mul(&t, n, ad::affine(&t, n, 1.0f, 0.5f));  // n * (n + 0.5)
    };
    prob.eval = [&]() {
        double s = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) s += static_cast<double>(x[i]) * x[i];
        const double n = std::sqrt(s);
        return n * (n + 0.5);
    };
    return run_one("op.norm", prob);
}

CheckRow check_sum(Rng rng) {
    Tensor x = Tensor::uniform({8}, rng);
    FdProblem prob;
    prob.params = {&x};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x);
        ids = {vx.id};
        ad::Value s = ad::sum(&t, vx);
        return ad::mul(&t, s, s);
    };
    prob.eval = [&]() {
        double s = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
        return s * s;
    };
    return run_one("op.sum", prob);
}

double ddice(const Tensor& pred, const Tensor& gt) {
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        inter += static_cast<double>(pred[i]) * gt[i];
        sp += pred[i];
        sg += gt[i];
    }
    return 1.0 - 2.0 * inter / (sp + sg + 1e-6);
}

CheckRow check_dice(Rng rng) {
    Tensor pred({6, 6});
    Tensor gt({6, 6});
    for (int64_t i = 0; i < pred.numel(); ++i) {
        pred[i] = rng.uniform(0.05f, 0.95f);
        gt[i] = rng.uniform() < 0.4f ? 1.0f : 0.0f;
    }
    FdProblem prob;
    prob.params = {&pred};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vp = ad::leaf(t, pred);
        ids = {vp.id};
        return losses::dice_loss(&t, vp, gt);
    };
    prob.eval = [&]() { return ddice(pred, gt); };
    return run_one("loss.dice", prob);
}

double dsmooth_l1(const Tensor& pred, const Tensor& gt, const Tensor& norm) {
    const int p = pred.dim(1);
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
        for (int i = 0; i < p; ++i) {
            const double d = (static_cast<double>(pred.at(c, i)) - gt.at(c, i)) / norm[i];
            acc += std::fabs(d) < 1.0 ? 0.5 * d * d : std::fabs(d) - 0.5;
        }
    }
    return acc / static_cast<double>(pred.numel());
}

CheckRow check_smooth_l1(Rng rng) {
    const int p = 5;
    Tensor pred = Tensor::uniform({8, p}, rng, -2.0f, 2.0f);
    Tensor gt = Tensor::uniform({8, p}, rng, -2.0f, 2.0f);
    Tensor norm({p});
    for (int i = 0; i < p; ++i) norm[i] = rng.uniform(0.5f, 2.0f);
    FdProblem prob;
    prob.params = {&pred};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vp = ad::leaf(t, pred);
        ids = {vp.id};
        return losses::smooth_l1_offsets(&t, vp, gt, norm);
    };
    prob.eval = [&]() { return dsmooth_l1(pred, gt, norm); };
    return run_one("loss.smooth_l1", prob);
}

CheckRow check_detection_loss(Rng rng) {
    Tensor pred_cls({5, 5});
    Tensor gt_cls({5, 5});
    for (int64_t i = 0; i < pred_cls.numel(); ++i) {
        pred_cls[i] = rng.uniform(0.05f, 0.95f);
        gt_cls[i] = rng.uniform() < 0.5f ? 1.0f : 0.0f;
    }
    const int p = 4;
    Tensor pred_off = Tensor::uniform({8, p}, rng, -2.0f, 2.0f);
    Tensor gt_off = Tensor::uniform({8, p}, rng, -2.0f, 2.0f);
    Tensor norm({p});
    for (int i = 0; i < p; ++i) norm[i] = rng.uniform(0.5f, 2.0f);
    losses::LossWeights w;
    FdProblem prob;
    prob.params = {&pred_cls, &pred_off};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vc = ad::leaf(t, pred_cls);
        ad::Value vo = ad::leaf(t, pred_off);
        ids = {vc.id, vo.id};
        return losses::detection_loss(&t, losses::dice_loss(&t, vc, gt_cls),
                                      losses::smooth_l1_offsets(&t, vo, gt_off, norm), w);
    };
    prob.eval = [&]() { return ddice(pred_cls, gt_cls) + 5.0 * dsmooth_l1(pred_off, gt_off, norm); };
    return run_one("loss.detection", prob);
}

CheckRow check_contrastive(Rng rng) {
    const int k = 5, width = 9;
    std::vector<Tensor> prev(k), cur(k);
    for (int i = 0; i < k; ++i) {
        prev[static_cast<size_t>(i)] = Tensor::uniform({width}, rng);
        cur[static_cast<size_t>(i)] = Tensor::uniform({width}, rng);
    }
    losses::PairLabels labels(k, k);
    for (int i = 0; i < k; i += 2) labels.mark_positive(i, (i + 1) % k);
    losses::LossWeights w;
    FdProblem prob;
    for (int i = 0; i < k; ++i) prob.params.push_back(&prev[static_cast<size_t>(i)]);
    for (int i = 0; i < k; ++i) prob.params.push_back(&cur[static_cast<size_t>(i)]);
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        std::vector<ad::Value> vp, vc;
        for (int i = 0; i < k; ++i) {
            vp.push_back(ad::leaf(t, prev[static_cast<size_t>(i)]));
            ids.push_back(vp.back().id);
        }
        for (int i = 0; i < k; ++i) {
            vc.push_back(ad::leaf(t, cur[static_cast<size_t>(i)]));
        }
        for (const auto& v : vc) ids.push_back(v.id);
        return losses::contrastive_track_loss(&t, vp, vc, labels, w);
    };
    prob.eval = [&]() {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                const double d = ddist(as_double(prev[static_cast<size_t>(i)]), as_double(cur[static_cast<size_t>(j)]));
                if (labels.positive(i, j)) {
                    acc += d * d;
                } else {
                    const double h = 1.0 - d;
                    if (h > 0.0) acc += h * h;
                }
            }
        }
        return acc / (static_cast<double>(k) * k);
    };
    return run_one("loss.contrastive", prob);
}

CheckRow check_total_loss(Rng rng) {
    const int n = 3;
    std::vector<Tensor> det(n), trk(n);
    for (int i = 0; i < n; ++i) {
        det[static_cast<size_t>(i)] = Tensor::uniform({4}, rng);
        trk[static_cast<size_t>(i)] = Tensor::uniform({4}, rng);
    }
    losses::LossWeights w;
    FdProblem prob;
    for (int i = 0; i < n; ++i) prob.params.push_back(&det[static_cast<size_t>(i)]);
    for (int i = 0; i < n; ++i) prob.params.push_back(&trk[static_cast<size_t>(i)]);
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        std::vector<ad::Value> dl, tl;
        for (int i = 0; i < n; ++i) {
            ad::Value v = ad::leaf(t, det[static_cast<size_t>(i)]);
            ids.push_back(v.id);
            dl.push_back(sq_sum(t, v));
        }
        for (int i = 0; i < n; ++i) {
            ad::Value v = ad::leaf(t, trk[static_cast<size_t>(i)]);
            ids.push_back(v.id);
            tl.push_back(sq_sum(t, v));
        }
        return losses::total_loss(&t, dl, tl, w);
    };
    prob.eval = [&]() {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = 0.0, tr = 0.0;
            for (int64_t j = 0; j < 4; ++j) {
                d += static_cast<double>(det[static_cast<size_t>(i)][j]) * det[static_cast<size_t>(i)][j];
                tr += static_cast<double>(trk[static_cast<size_t>(i)][j]) * trk[static_cast<size_t>(i)][j];
            }
            acc += d + 0.1 * tr;
        }
        return acc / n;
    };
    return run_one("loss.total", prob);
}

bool relu_inputs_safe(const Tensor& w1, const Tensor& b1, const Tensor& g, double margin) {
    const dvec pre = dadd(dmatvec(w1, as_double(g)), b1);
    for (double v : pre) {
        if (std::fabs(v) < margin) return false;
    }
    return true;
}

CheckRow check_geometry_embed(Rng rng) {
    descriptor::GeometryEmbedParams params;
    Tensor g({8});
    for (int attempt = 0; attempt < 20; ++attempt) {
        Rng local = rng.fork(static_cast<uint64_t>(attempt));
        params = descriptor::GeometryEmbedParams::seeded(local, 6, 4);
        for (int64_t i = 0; i < params.b1.numel(); ++i) params.b1[i] = local.uniform(-0.3f, 0.3f);
        g = Tensor::uniform({8}, local, 0.0f, 1.0f);
        if (relu_inputs_safe(params.w1, params.b1, g, 0.02)) break;
    }
    FdProblem prob;
    prob.params = {&params.w1, &params.b1, &params.w2, &params.b2};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        auto nodes = descriptor::GeometryEmbedNodes::bind(&t, params);
        ids = {nodes.w1.id, nodes.b1.id, nodes.w2.id, nodes.b2.id};
        return sq_sum(t, descriptor::geometry_feature(&t, ad::constant(g), nodes));
    };
    prob.eval = [&]() {
        const dvec f = dgeometry(params.w1, params.b1, params.w2, params.b2, as_double(g));
        double acc = 0.0;
        for (double v : f) acc += v * v;
        return acc;
    };
    return run_one("path.geometry_embed", prob);
}

CheckRow check_gru(Rng rng) {
    const int d_in = 4, d = 6;
    recurrent::GruParams params = recurrent::GruParams::seeded(d_in, d, rng, 0.4f);
    for (Tensor* b : {&params.b_z, &params.b_r, &params.b_h}) {
        for (int64_t i = 0; i < b->numel(); ++i) (*b)[i] = rng.uniform(-0.2f, 0.2f);
    }
    Tensor x = Tensor::uniform({d_in}, rng);
    Tensor h0 = Tensor::uniform({d}, rng, -0.5f, 0.5f);
    FdProblem prob;
    prob.params = {&params.w_z, &params.w_r, &params.w_h, &params.b_z, &params.b_r, &params.b_h};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        auto nodes = recurrent::GruNodes::bind(&t, params);
        ids = {nodes.w_z.id, nodes.w_r.id, nodes.w_h.id, nodes.b_z.id, nodes.b_r.id, nodes.b_h.id};
        auto s = recurrent::gru_step(&t, ad::constant(x), ad::constant(h0), nodes);
        return sq_sum(t, s.h);
    };
    prob.eval = [&]() {
        const dvec h = dgru(params.w_z, params.w_r, params.w_h, params.b_z, params.b_r, params.b_h, as_double(x),
                            as_double(h0));
        double acc = 0.0;
        for (double v : h) acc += v * v;
        return acc;
    };
    return run_one("path.gru", prob);
}

// the full trainable path: geometry embedding into AGD, one GRU advance,
// contrastive loss between estimated and next-frame descriptors
CheckRow check_tracking_path(Rng rng) {
    const int k = 2, app_w = 3, geo_hidden = 5, geo_out = 4;
    const int width = app_w + geo_out;
    descriptor::GeometryEmbedParams geo;
    recurrent::GruParams gru = recurrent::GruParams::zeros(width, width);
    std::vector<Tensor> app0(k), app1(k), g0(k), g1(k);
    bool safe = false;
    for (int attempt = 0; attempt < 20 && !safe; ++attempt) {
        Rng local = rng.fork(900 + static_cast<uint64_t>(attempt));
        geo = descriptor::GeometryEmbedParams::seeded(local, geo_hidden, geo_out);
        for (int64_t i = 0; i < geo.b1.numel(); ++i) geo.b1[i] = local.uniform(-0.3f, 0.3f);
        gru = recurrent::GruParams::seeded(width, width, local, 0.4f);
        safe = true;
        for (int i = 0; i < k; ++i) {
            app0[static_cast<size_t>(i)] = Tensor::uniform({app_w}, local);
            app1[static_cast<size_t>(i)] = Tensor::uniform({app_w}, local);
            g0[static_cast<size_t>(i)] = Tensor::uniform({8}, local, 0.0f, 1.0f);
            g1[static_cast<size_t>(i)] = Tensor::uniform({8}, local, 0.0f, 1.0f);
            safe = safe && relu_inputs_safe(geo.w1, geo.b1, g0[static_cast<size_t>(i)], 0.02) &&
                   relu_inputs_safe(geo.w1, geo.b1, g1[static_cast<size_t>(i)], 0.02);
        }
    }
    losses::PairLabels labels(k, k);
    for (int i = 0; i < k; ++i) labels.mark_positive(i, i);
    losses::LossWeights w;

    FdProblem prob;
    prob.params = {&geo.w1, &geo.b1, &geo.w2, &geo.b2, &gru.w_z, &gru.w_r, &gru.w_h, &gru.b_z, &gru.b_r, &gru.b_h};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        auto geo_nodes = descriptor::GeometryEmbedNodes::bind(&t, geo);
        auto gru_nodes = recurrent::GruNodes::bind(&t, gru);
        ids = {geo_nodes.w1.id, geo_nodes.b1.id, geo_nodes.w2.id, geo_nodes.b2.id, gru_nodes.w_z.id,
               gru_nodes.w_r.id, gru_nodes.w_h.id, gru_nodes.b_z.id, gru_nodes.b_r.id, gru_nodes.b_h.id};
        std::vector<ad::Value> eagd, agd1;
        for (int i = 0; i < k; ++i) {
            ad::Value a0 = ad::concat(
                &t, {ad::constant(app0[static_cast<size_t>(i)]),
                     descriptor::geometry_feature(&t, ad::constant(g0[static_cast<size_t>(i)]), geo_nodes)});
            auto s = recurrent::gru_step(&t, a0, ad::constant(Tensor({width})), gru_nodes);
            eagd.push_back(s.out);
            agd1.push_back(ad::concat(
                &t, {ad::constant(app1[static_cast<size_t>(i)]),
                     descriptor::geometry_feature(&t, ad::constant(g1[static_cast<size_t>(i)]), geo_nodes)}));
        }
        return losses::contrastive_track_loss(&t, eagd, agd1, labels, w);
    };
    prob.eval = [&]() {
        std::vector<dvec> eagd, agd1;
        for (int i = 0; i < k; ++i) {
            dvec a0 = as_double(app0[static_cast<size_t>(i)]);
            const dvec f0 = dgeometry(geo.w1, geo.b1, geo.w2, geo.b2, as_double(g0[static_cast<size_t>(i)]));
            a0.insert(a0.end(), f0.begin(), f0.end());
            eagd.push_back(dgru(gru.w_z, gru.w_r, gru.w_h, gru.b_z, gru.b_r, gru.b_h, a0, dvec(width, 0.0)));
            dvec a1 = as_double(app1[static_cast<size_t>(i)]);
            const dvec f1 = dgeometry(geo.w1, geo.b1, geo.w2, geo.b2, as_double(g1[static_cast<size_t>(i)]));
            a1.insert(a1.end(), f1.begin(), f1.end());
            agd1.push_back(a1);
        }
        double acc = 0.0;
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) {
                const double d = ddist(eagd[static_cast<size_t>(i)], agd1[static_cast<size_t>(j)]);
                if (labels.positive(i, j)) {
                    acc += d * d;
                } else {
                    const double h = 1.0 - d;
                    if (h > 0.0) acc += h * h;
                }
            }
        }
        return acc / (static_cast<double>(k) * k);
    };
    return run_one("path.geometry_gru_contrastive", prob);
}

CheckRow check_negative_control(Rng rng) {
    Tensor x = Tensor::uniform({6}, rng, 0.5f, 1.0f);
    FdProblem prob;
    prob.params = {&x};
    prob.build = [&](ad::Tape& t, std::vector<ad::NodeId>& ids) {
        ad::Value vx = ad::leaf(t, x);
        ids = {vx.id};
        // analytic path deliberately computes the gradient of sum((1.02 x)^2)
        ad::Value scaled = ad::affine(&t, vx, 1.02f, 0.0f);
        return sq_sum(t, scaled);
    };
    prob.eval = [&]() {
        // oracle evaluates sum(x^2): the 4% disagreement must be reported
        double acc = 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]) * x[i];
        return acc;
    };
    CheckRow row = run_one("fixture.negative_control", prob);
    return row;
}

}  // namespace

std::vector<CheckRow> run_all(uint64_t seed, bool negative_control) {
    Rng rng(seed);
    std::vector<CheckRow> rows;
    rows.push_back(check_matmul(rng.fork(1)));
    rows.push_back(check_elementwise("op.add", rng.fork(2), 0));
    rows.push_back(check_elementwise("op.sub", rng.fork(3), 1));
    rows.push_back(check_elementwise("op.mul", rng.fork(4), 2));
    rows.push_back(check_affine(rng.fork(5)));
    rows.push_back(check_activation("op.sigmoid", rng.fork(6), kernels::Activation::Sigmoid));
    rows.push_back(check_activation("op.tanh", rng.fork(7), kernels::Activation::Tanh));
    rows.push_back(check_activation("op.relu", rng.fork(8), kernels::Activation::Relu));
    rows.push_back(check_concat(rng.fork(9)));
    rows.push_back(check_norm(rng.fork(10)));
    rows.push_back(check_sum(rng.fork(11)));
    rows.push_back(check_dice(rng.fork(12)));
    rows.push_back(check_smooth_l1(rng.fork(13)));
    rows.push_back(check_detection_loss(rng.fork(14)));
    rows.push_back(check_contrastive(rng.fork(15)));
    rows.push_back(check_total_loss(rng.fork(16)));
    rows.push_back(check_geometry_embed(rng.fork(17)));
    rows.push_back(check_gru(rng.fork(18)));
    rows.push_back(check_tracking_path(rng.fork(19)));
    if (negative_control) rows.push_back(check_negative_control(rng.fork(20)));
    return rows;
}

}  // namespace quadtrack::gradcheck
