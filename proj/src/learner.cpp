#include "atn/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace atn {

// ---------------------------------------------------------------------------
// Scaler

void Scaler::fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw TooFewRows("cannot fit a scaler on zero rows");
    const std::size_t d = rows.front().size();
    min_.assign(d, std::numeric_limits<double>::infinity());
    max_.assign(d, -std::numeric_limits<double>::infinity());
    for (const auto& row : rows) {
        if (row.size() != d) throw ModelMismatch("inconsistent row width while fitting scaler");
        for (std::size_t j = 0; j < d; ++j) {
            min_[j] = std::min(min_[j], row[j]);
            max_[j] = std::max(max_[j], row[j]);
        }
    }
}

std::vector<double> Scaler::transform(std::span<const double> x) const {
    if (x.size() != min_.size()) throw ModelMismatch("scaler fitted on a different width");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double span = max_[j] - min_[j];
        out[j] = span > 0.0 ? (x[j] - min_[j]) / span : 0.0;
    }
    return out;
}

std::vector<double> Scaler::inverse(std::span<const double> x) const {
    if (x.size() != min_.size()) throw ModelMismatch("scaler fitted on a different width");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = min_[j] + x[j] * (max_[j] - min_[j]);
    return out;
}

void Scaler::set(std::vector<double> mins, std::vector<double> maxes) {
    if (mins.size() != maxes.size()) throw ModelMismatch("scaler min/max width mismatch");
    min_ = std::move(mins);
    max_ = std::move(maxes);
}

// ---------------------------------------------------------------------------
// k-means

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace

int ClusterModel::assign_scaled(std::span<const double> point) const {
    if (centroids.empty() || point.size() != centroids.front().size())
        throw ModelMismatch("point width differs from centroids");
    int best = 0;
    double best_d = sq_dist(point, centroids.front());
    for (int c = 1; c < static_cast<int>(centroids.size()); ++c) {
        const double d = sq_dist(point, centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

int ClusterModel::assign(std::span<const double> raw) const {
    const std::vector<double> scaled = scaler.transform(raw);
    return assign_scaled(scaled);
}

std::vector<double> ClusterModel::centroid_raw(int cluster) const {
    return scaler.inverse(centroids.at(static_cast<std::size_t>(cluster)));
}

ClusterModel fit_clusters(const std::vector<std::vector<double>>& rows, int k,
                          std::uint64_t seed) {
    if (k < 1) throw TooFewRows("k must be >= 1");
    if (static_cast<int>(rows.size()) < k)
        throw TooFewRows("need at least k=" + std::to_string(k) + " rows, got " +
                         std::to_string(rows.size()));

    ClusterModel cm;
    cm.k = k;
    cm.scaler.fit(rows);
    std::vector<std::vector<double>> pts;
    pts.reserve(rows.size());
    for (const auto& r : rows) pts.push_back(cm.scaler.transform(r));
    const std::size_t n = pts.size();

    // Distance-weighted seeding: each further centroid is drawn with
    // probability proportional to the squared distance from the ones
    // already chosen.
    Rng rng(derive_seed(seed, "kmeans-init"));
    cm.centroids.clear();
    cm.centroids.push_back(pts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1))]);
    std::vector<double> d2(n);
    while (static_cast<int>(cm.centroids.size()) < k) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = sq_dist(pts[i], cm.centroids.front());
            for (std::size_t c = 1; c < cm.centroids.size(); ++c)
                best = std::min(best, sq_dist(pts[i], cm.centroids[c]));
            d2[i] = best;
        }
        cm.centroids.push_back(pts[static_cast<std::size_t>(rng.weighted_index(d2))]);
    }

    cm.assignments.assign(n, -1);
    std::vector<int> prev(n, -2);
    for (int iter = 0; iter < 300; ++iter) {
        for (std::size_t i = 0; i < n; ++i) cm.assignments[i] = cm.assign_scaled(pts[i]);

        // Repair empty clusters with the farthest point of the largest one.
        std::vector<int> population(static_cast<std::size_t>(k), 0);
        for (int a : cm.assignments) population[static_cast<std::size_t>(a)] += 1;
        for (int c = 0; c < k; ++c) {
            if (population[static_cast<std::size_t>(c)] > 0) continue;
            int largest = static_cast<int>(std::max_element(population.begin(), population.end()) -
                                           population.begin());
            double far_d = -1.0;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (cm.assignments[i] != largest) continue;
                const double d = sq_dist(pts[i], cm.centroids[static_cast<std::size_t>(largest)]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            cm.assignments[far_i] = c;
            population[static_cast<std::size_t>(c)] += 1;
            population[static_cast<std::size_t>(largest)] -= 1;
        }

        const std::size_t dims = pts.front().size();
        for (int c = 0; c < k; ++c)
            cm.centroids[static_cast<std::size_t>(c)].assign(dims, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& cen = cm.centroids[static_cast<std::size_t>(cm.assignments[i])];
            for (std::size_t j = 0; j < dims; ++j) cen[j] += pts[i][j];
        }
        for (int c = 0; c < k; ++c) {
            auto& cen = cm.centroids[static_cast<std::size_t>(c)];
            for (double& v : cen) v /= static_cast<double>(population[static_cast<std::size_t>(c)]);
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += sq_dist(pts[i], cm.centroids[static_cast<std::size_t>(cm.assignments[i])]);
        cm.inertia = inertia;
        cm.inertia_history.push_back(inertia);

        if (cm.assignments == prev) break;
        prev = cm.assignments;
    }
    return cm;
}

std::vector<LabeledRow> label_dataset(const std::vector<DatasetRow>& rows,
                                      const ClusterModel& cm) {
    if (cm.scaler.n_features() != 18)
        throw ModelMismatch("cluster model was not fitted on 18-value parameter rows");
    std::vector<LabeledRow> out;
    out.reserve(rows.size());
    for (const DatasetRow& r : rows) {
        LabeledRow lr;
        lr.scenario_id = r.scenario_id;
        lr.env = r.env;
        lr.cluster = cm.assign(r.params);
        out.push_back(lr);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feed-forward network

namespace {

double activate(Activation act, double a, double s) {
    switch (act) {
    case Activation::Linear: return a * s;
    case Activation::Step: return s >= 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: return std::tanh(s);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-s));
    case Activation::Relu: return s > 0.0 ? s : 0.0;
    }
    return 0.0;
}

double activate_prime(Activation act, double a, double s) {
    switch (act) {
    case Activation::Linear: return a;
    case Activation::Step:
        throw UntrainableActivation("step activation has no usable gradient");
    case Activation::Tanh: {
        const double t = std::tanh(s);
        return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
        const double sig = 1.0 / (1.0 + std::exp(-s));
        return sig * (1.0 - sig);
    }
    case Activation::Relu: return s > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

std::vector<double> softmax(const std::vector<double>& z) {
    std::vector<double> p(z.size());
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

struct ForwardCache {
    std::vector<std::vector<double>> z;    ///< pre-activations per layer
    std::vector<std::vector<double>> a;    ///< a[0] is the input
    std::vector<std::vector<double>> mask; ///< dropout masks per hidden layer
};

void forward_pass(const MlpModel& m, std::span<const double> x, bool training,
                  Rng* dropout_rng, ForwardCache& cache) {
    if (static_cast<int>(x.size()) != m.input_dim())
        throw ModelMismatch("input width " + std::to_string(x.size()) + " differs from model input " +
                            std::to_string(m.input_dim()));
    cache.z.assign(m.layers.size(), {});
    cache.a.assign(m.layers.size() + 1, {});
    cache.mask.assign(m.layers.size(), {});
    cache.a[0].assign(x.begin(), x.end());

    const bool drop = training && m.dropout_rate > 0.0 && dropout_rng;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Layer& layer = m.layers[l];
        auto& z = cache.z[l];
        z.assign(static_cast<std::size_t>(layer.out), 0.0);
        const auto& in = cache.a[l];
        for (int r = 0; r < layer.out; ++r) {
            double s = layer.bias[static_cast<std::size_t>(r)];
            const double* wrow = layer.weights.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in);
            for (int c = 0; c < layer.in; ++c) s += wrow[c] * in[static_cast<std::size_t>(c)];
            z[static_cast<std::size_t>(r)] = s;
        }
        auto& a = cache.a[l + 1];
        a.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(layer.act, layer.a, z[i]);

        const bool hidden = l + 1 < m.layers.size();
        if (hidden && drop) {
            auto& mask = cache.mask[l];
            mask.resize(a.size());
            const double keep = 1.0 - m.dropout_rate;
            for (std::size_t i = 0; i < a.size(); ++i) {
                mask[i] = dropout_rng->next_double() >= m.dropout_rate ? 1.0 / keep : 0.0;
                a[i] *= mask[i];
            }
        }
    }
}

} // namespace

double neuron_forward(std::span<const double> x, std::span<const double> w,
                      Activation act, double a) {
    if (x.size() != w.size())
        throw DimensionMismatch("input has " + std::to_string(x.size()) + " values, weights " +
                                std::to_string(w.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
    return activate(act, a, s);
}

std::vector<double> MlpModel::probabilities(std::span<const double> x) const {
    ForwardCache cache;
    forward_pass(*this, x, false, nullptr, cache);
    return softmax(cache.a.back());
}

int MlpModel::predict(std::span<const double> x) const {
    const std::vector<double> p = probabilities(x);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

MlpModel make_mlp(const std::vector<int>& topology, Activation hidden_act, std::uint64_t seed,
                  double dropout_rate) {
    if (topology.size() < 2) throw ModelMismatch("topology needs at least input and output sizes");
    for (int w : topology)
        if (w < 1) throw ModelMismatch("layer widths must be >= 1");
    MlpModel m;
    m.dropout_rate = dropout_rate;
    for (std::size_t l = 1; l < topology.size(); ++l) {
        Layer layer;
        layer.in = topology[l - 1];
        layer.out = topology[l];
        layer.act = (l + 1 < topology.size()) ? hidden_act : Activation::Linear;
        layer.a = 1.0;
        Rng rng(derive_seed(seed, "layer-init", static_cast<std::uint64_t>(l)));
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        layer.weights.resize(static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out));
        for (double& w : layer.weights) w = rng.uniform(-limit, limit);
        layer.bias.assign(static_cast<std::size_t>(layer.out), 0.0);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

double batch_loss(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                  const std::vector<int>& labels) {
    if (xs.size() != labels.size() || xs.empty())
        throw ModelMismatch("batch inputs and labels must align and be nonempty");
    double loss = 0.0;
    ForwardCache cache;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        forward_pass(model, xs[i], false, nullptr, cache);
        const std::vector<double> p = softmax(cache.a.back());
        loss += -std::log(std::max(p[static_cast<std::size_t>(labels[i])], 1e-300));
    }
    return loss / static_cast<double>(xs.size());
}

MlpGradients batch_gradients(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                             const std::vector<int>& labels, bool training, Rng* dropout_rng) {
    if (xs.size() != labels.size() || xs.empty())
        throw ModelMismatch("batch inputs and labels must align and be nonempty");
    for (const Layer& l : model.layers)
        if (l.act == Activation::Step)
            throw UntrainableActivation("step activation has no usable gradient");

    MlpGradients g;
    g.weights.resize(model.layers.size());
    g.bias.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        g.weights[l].assign(model.layers[l].weights.size(), 0.0);
        g.bias[l].assign(model.layers[l].bias.size(), 0.0);
    }

    const double inv_batch = 1.0 / static_cast<double>(xs.size());
    ForwardCache cache;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        forward_pass(model, xs[i], training, dropout_rng, cache);
        const std::vector<double> p = softmax(cache.a.back());

        // delta of the softmax cross-entropy w.r.t. the last layer's
        // pre-activation, then walk backwards.
        const std::size_t last = model.layers.size() - 1;
        std::vector<double> delta(p.size());
        for (std::size_t c = 0; c < p.size(); ++c) {
            const double grad_a = (p[c] - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0)) * inv_batch;
            delta[c] = grad_a * activate_prime(model.layers[last].act, model.layers[last].a,
                                               cache.z[last][c]);
        }

        for (std::size_t l = model.layers.size(); l-- > 0;) {
            const Layer& layer = model.layers[l];
            const auto& in = cache.a[l];
            auto& gw = g.weights[l];
            auto& gb = g.bias[l];
            for (int r = 0; r < layer.out; ++r) {
                const double d = delta[static_cast<std::size_t>(r)];
                gb[static_cast<std::size_t>(r)] += d;
                double* grow = gw.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in);
                for (int c = 0; c < layer.in; ++c) grow[c] += d * in[static_cast<std::size_t>(c)];
            }
            if (l == 0) break;

            std::vector<double> up(static_cast<std::size_t>(layer.in), 0.0);
            for (int c = 0; c < layer.in; ++c) {
                double s = 0.0;
                for (int r = 0; r < layer.out; ++r)
                    s += layer.weights[static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in) +
                                       static_cast<std::size_t>(c)] *
                         delta[static_cast<std::size_t>(r)];
                up[static_cast<std::size_t>(c)] = s;
            }
            // Through the dropout mask of the layer below, then its
            // activation derivative.
            if (!cache.mask[l - 1].empty())
                for (std::size_t c = 0; c < up.size(); ++c) up[c] *= cache.mask[l - 1][c];
            const Layer& below = model.layers[l - 1];
            delta.assign(up.size(), 0.0);
            for (std::size_t c = 0; c < up.size(); ++c)
                delta[c] = up[c] * activate_prime(below.act, below.a, cache.z[l - 1][c]);
        }
    }
    return g;
}

TrainOutput train_mlp(const std::vector<LabeledRow>& rows, const std::vector<int>& topology,
                      Activation hidden_act, const TrainHyper& hyper, std::uint64_t seed) {
    if (topology.size() < 2 || topology.front() != EnvVector::kDims)
        throw ModelMismatch("topology must start at the 11 environment inputs");
    if (hidden_act == Activation::Step)
        throw UntrainableActivation("step activation has no usable gradient");
    if (!(hyper.test_fraction > 0.0 && hyper.test_fraction < 1.0))
        throw DegenerateSplit("test fraction must lie in (0,1)");
    if (hyper.batch_size < 1 || hyper.epochs < 0 || !(hyper.learning_rate >= 0.0))
        throw ModelMismatch("invalid hyperparameters");
    if (!(hyper.dropout_rate >= 0.0 && hyper.dropout_rate < 1.0))
        throw ModelMismatch("dropout rate must lie in [0,1)");

    const int k = topology.back();
    std::vector<std::vector<std::size_t>> by_cluster(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int c = rows[i].cluster;
        if (c < 0 || c >= k)
            throw ModelMismatch("row labeled with cluster " + std::to_string(c) +
                                " outside 0.." + std::to_string(k - 1));
        by_cluster[static_cast<std::size_t>(c)].push_back(i);
    }

    // Stratified split: every represented cluster contributes at least one
    // row to each side.
    std::vector<std::size_t> train_idx, test_idx;
    for (int c = 0; c < k; ++c) {
        auto& idx = by_cluster[static_cast<std::size_t>(c)];
        if (idx.empty()) continue;
        if (idx.size() < 2)
            throw DegenerateSplit("cluster " + std::to_string(c) + " has fewer than 2 rows");
        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
        for (std::size_t i = idx.size(); i-- > 1;)
            std::swap(idx[i], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        auto want = static_cast<std::size_t>(
            std::lround(hyper.test_fraction * static_cast<double>(idx.size())));
        want = std::clamp<std::size_t>(want, 1, idx.size() - 1);
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(want));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(want), idx.end());
    }
    if (train_idx.empty() || test_idx.empty()) throw DegenerateSplit("no rows to split");
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    TrainOutput out;
    std::vector<std::vector<double>> train_raw;
    train_raw.reserve(train_idx.size());
    for (std::size_t i : train_idx)
        train_raw.emplace_back(rows[i].env.begin(), rows[i].env.end());
    out.env_scaler.fit(train_raw);

    std::vector<std::vector<double>> train_x, test_x;
    std::vector<int> train_y, test_y;
    for (std::size_t i : train_idx) {
        train_x.push_back(out.env_scaler.transform(rows[i].env));
        train_y.push_back(rows[i].cluster);
    }
    for (std::size_t i : test_idx) {
        test_x.push_back(out.env_scaler.transform(rows[i].env));
        test_y.push_back(rows[i].cluster);
    }

    out.model = make_mlp(topology, hidden_act, derive_seed(seed, "init"), hyper.dropout_rate);
    Rng dropout_rng(derive_seed(seed, "dropout"));

    std::vector<std::vector<double>> velocity_w, velocity_b;
    for (const Layer& l : out.model.layers) {
        velocity_w.emplace_back(l.weights.size(), 0.0);
        velocity_b.emplace_back(l.bias.size(), 0.0);
    }

    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i-- > 1;)
            std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
            std::vector<std::vector<double>> bx;
            std::vector<int> by;
            bx.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(train_x[order[i]]);
                by.push_back(train_y[order[i]]);
            }
            const MlpGradients g = batch_gradients(out.model, bx, by, true, &dropout_rng);
            for (std::size_t l = 0; l < out.model.layers.size(); ++l) {
                Layer& layer = out.model.layers[l];
                for (std::size_t j = 0; j < layer.weights.size(); ++j) {
                    velocity_w[l][j] = hyper.momentum * velocity_w[l][j] + g.weights[l][j];
                    layer.weights[j] -= hyper.learning_rate * velocity_w[l][j];
                }
                for (std::size_t j = 0; j < layer.bias.size(); ++j) {
                    velocity_b[l][j] = hyper.momentum * velocity_b[l][j] + g.bias[l][j];
                    layer.bias[j] -= hyper.learning_rate * velocity_b[l][j];
                }
            }
        }
    }

    TrainReport& rep = out.report;
    rep.epochs = hyper.epochs;
    rep.split_seed = seed;
    rep.final_loss = batch_loss(out.model, train_x, train_y);
    rep.per_cluster_success.assign(static_cast<std::size_t>(k), 0.0);
    rep.per_cluster_count.assign(static_cast<std::size_t>(k), 0);
    int correct = 0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        const int pred = out.model.predict(test_x[i]);
        rep.per_cluster_count[static_cast<std::size_t>(test_y[i])] += 1;
        if (pred == test_y[i]) {
            rep.per_cluster_success[static_cast<std::size_t>(test_y[i])] += 1.0;
            ++correct;
        }
    }
    for (int c = 0; c < k; ++c) {
        if (rep.per_cluster_count[static_cast<std::size_t>(c)] > 0)
            rep.per_cluster_success[static_cast<std::size_t>(c)] /=
                static_cast<double>(rep.per_cluster_count[static_cast<std::size_t>(c)]);
    }
    rep.test_accuracy = static_cast<double>(correct) / static_cast<double>(test_x.size());
    return out;
}

// ---------------------------------------------------------------------------
// Execution mode

ControllerParams predict_params(const MlpModel& mlp, const Scaler& env_scaler,
                                const ClusterModel& cm, const EnvVector& env) {
    env.validate();
    if (env_scaler.n_features() != EnvVector::kDims)
        throw ModelMismatch("environment scaler width is not 11");
    if (mlp.input_dim() != EnvVector::kDims || mlp.output_dim() != cm.k)
        throw ModelMismatch("network topology does not match scaler/cluster model");
    const auto flat = env.flat();
    const std::vector<double> x = env_scaler.transform(flat);
    const int cluster = mlp.predict(x);
    const std::vector<double> raw = cm.centroid_raw(cluster);
    if (raw.size() != 18) throw ModelMismatch("cluster centroids are not 18-dimensional");
    std::array<double, 18> arr{};
    std::copy(raw.begin(), raw.end(), arr.begin());
    return ControllerParams::from_flat(arr);
}

ControllerParams predict_params(const LearnerModel& model, const EnvVector& env) {
    return predict_params(model.mlp, model.env_scaler, model.clusters, env);
}

std::vector<NoisePoint> noise_success_curve(const MlpModel& mlp, const Scaler& env_scaler,
                                            const ClusterModel& cm,
                                            const std::vector<LabeledRow>& test_rows,
                                            const std::vector<double>& sigmas, int trials,
                                            std::uint64_t seed) {
    if (test_rows.empty()) throw TooFewRows("noise curve needs at least one test row");
    if (trials < 1) throw TooFewRows("trials must be >= 1");
    if (mlp.input_dim() != EnvVector::kDims || mlp.output_dim() != cm.k)
        throw ModelMismatch("network topology does not match scaler/cluster model");

    std::vector<std::vector<const LabeledRow*>> by_cluster(static_cast<std::size_t>(cm.k));
    for (const LabeledRow& r : test_rows) {
        if (r.cluster < 0 || r.cluster >= cm.k)
            throw ModelMismatch("test row labeled outside the cluster range");
        by_cluster[static_cast<std::size_t>(r.cluster)].push_back(&r);
    }

    // One-hot selector components sit at positions 7..10 of the flat
    // environment layout.
    constexpr std::size_t kOdFirst = 7, kOdLast = 10;

    std::vector<NoisePoint> out;
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        const double sigma = sigmas[si];
        if (!(sigma >= 0.0)) throw ModelMismatch("noise levels must be >= 0");
        for (int c = 0; c < cm.k; ++c) {
            const auto& rows = by_cluster[static_cast<std::size_t>(c)];
            if (rows.empty()) continue;
            Rng rng(derive_seed(seed, "noise", si * 1000003ULL + static_cast<std::uint64_t>(c)));
            int successes = 0;
            for (int t = 0; t < trials; ++t) {
                const LabeledRow& row = *rows[static_cast<std::size_t>(t) % rows.size()];
                std::vector<double> x = env_scaler.transform(row.env);
                for (double& v : x) v += sigma * rng.normal();
                std::size_t hot = kOdFirst;
                for (std::size_t j = kOdFirst + 1; j <= kOdLast; ++j)
                    if (x[j] > x[hot]) hot = j;
                for (std::size_t j = kOdFirst; j <= kOdLast; ++j) x[j] = (j == hot) ? 1.0 : 0.0;
                if (mlp.predict(x) == c) ++successes;
            }
            out.push_back(NoisePoint{c, sigma, static_cast<double>(successes) / trials, trials});
        }
    }
    return out;
}

std::array<double, 18> default_finetune_steps() {
    std::array<double, 18> s{};
    for (int half = 0; half < 2; ++half) {
        double* p = s.data() + half * 9;
        p[0] = p[1] = p[2] = p[3] = 0.5; // weights
        p[4] = p[5] = p[6] = 1.0;        // count thresholds
        p[7] = 0.1;                      // t_nd
        p[8] = 1.0;                      // t_total
    }
    return s;
}

ControllerParams online_finetune(const ControllerParams& incumbent, const Scenario& scenario,
                                 const std::array<double, 18>& step_sizes, int iterations,
                                 std::uint64_t seed, int replications) {
    if (iterations < 0) throw ModelMismatch("iterations must be >= 0");
    if (iterations == 0) return incumbent;

    ControllerParams current = incumbent;
    double current_objective = evaluate(scenario, current, replications);
    Rng rng(derive_seed(seed, "finetune"));
    for (int it = 0; it < iterations; ++it) {
        const auto idx = static_cast<std::size_t>(rng.uniform_int(0, 17));
        const double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
        std::array<double, 18> flat = current.to_flat();
        flat[idx] += sign * step_sizes[idx];
        ControllerParams candidate;
        try {
            candidate = ControllerParams::from_flat(flat);
        } catch (const InvalidParams&) {
            continue; // perturbation left the valid region
        }
        const double obj = evaluate(scenario, candidate, replications);
        if (obj < current_objective) {
            current = candidate;
            current_objective = obj;
        }
    }
    return current;
}

} // namespace atn
