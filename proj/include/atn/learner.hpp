#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "atn/tuner.hpp"

namespace atn {

struct TooFewRows : ValidationError {
    using ValidationError::ValidationError;
};
struct ModelMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct DimensionMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct UntrainableActivation : ValidationError {
    using ValidationError::ValidationError;
};
struct DegenerateSplit : ValidationError {
    using ValidationError::ValidationError;
};

/// Per-feature min-max scaler. transform maps the fitted minimum to 0 and
/// maximum to 1; constant features map to 0 and invert back to their
/// fitted value.
class Scaler {
public:
    Scaler() = default;

    void fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> transform(std::span<const double> x) const;
    std::vector<double> inverse(std::span<const double> x) const;

    std::size_t n_features() const { return min_.size(); }
    const std::vector<double>& mins() const { return min_; }
    const std::vector<double>& maxes() const { return max_; }
    void set(std::vector<double> mins, std::vector<double> maxes);

private:
    std::vector<double> min_, max_;
};

/// k-means over min-max-scaled points. Centroids live in scaled
/// coordinates; the embedded scaler maps them back to raw units.
struct ClusterModel {
    int k = 0;
    Scaler scaler;
    std::vector<std::vector<double>> centroids; ///< scaled coordinates
    std::vector<int> assignments;               ///< row -> cluster
    double inertia = 0.0;
    std::vector<double> inertia_history;        ///< after each Lloyd iteration

    /// Nearest centroid of an already-scaled point; ties go to the lower
    /// index.
    int assign_scaled(std::span<const double> point) const;
    /// Nearest centroid of a raw point.
    int assign(std::span<const double> raw) const;
    /// Centroid in raw units.
    std::vector<double> centroid_raw(int cluster) const;
};

/// Lloyd's algorithm with distance-weighted seeding. Runs until the
/// assignment reaches a fixpoint or 300 iterations; empty clusters are
/// repaired by stealing the farthest point of the largest cluster.
ClusterModel fit_clusters(const std::vector<std::vector<double>>& rows, int k,
                          std::uint64_t seed);

struct LabeledRow {
    int scenario_id = 0;
    std::array<double, EnvVector::kDims> env{};
    int cluster = 0;
};

/// Labels every dataset row with the cluster of its parameter set.
std::vector<LabeledRow> label_dataset(const std::vector<DatasetRow>& rows,
                                      const ClusterModel& cm);

enum class Activation { Linear, Step, Tanh, Sigmoid, Relu };

/// Single-neuron response: f(sum of x_i * w_i). Linear uses slope a;
/// step fires 1 at input >= 0.
double neuron_forward(std::span<const double> x, std::span<const double> w,
                      Activation act, double a = 1.0);

struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> weights; ///< row-major, out x in
    std::vector<double> bias;    ///< out
    Activation act = Activation::Tanh;
    double a = 1.0; ///< slope of the linear activation
};

/// Feed-forward classifier. The final layer's activations go through a
/// softmax readout; argmax picks the class. Dropout (inverted scaling)
/// applies to hidden activations during training only.
struct MlpModel {
    std::vector<Layer> layers;
    double dropout_rate = 0.0;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

    /// Inference-mode class probabilities (softmax of the last layer).
    std::vector<double> probabilities(std::span<const double> x) const;
    /// Inference-mode argmax class.
    int predict(std::span<const double> x) const;
};

/// Fresh network with seeded uniform init: hidden layers use hidden_act,
/// the output layer is linear with unit slope.
MlpModel make_mlp(const std::vector<int>& topology, Activation hidden_act, std::uint64_t seed,
                  double dropout_rate = 0.0);

/// Mean softmax cross-entropy over a batch, inference mode.
double batch_loss(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                  const std::vector<int>& labels);

struct MlpGradients {
    std::vector<std::vector<double>> weights; ///< per layer, row-major
    std::vector<std::vector<double>> bias;
};

/// Exact loss gradients by backpropagation. When training is true and the
/// model has a positive dropout rate, hidden activations are masked from
/// dropout_rng and the gradients match the masked loss.
MlpGradients batch_gradients(const MlpModel& model, const std::vector<std::vector<double>>& xs,
                             const std::vector<int>& labels, bool training = false,
                             Rng* dropout_rng = nullptr);

struct TrainHyper {
    double learning_rate = 0.5;
    int epochs = 500;
    int batch_size = 16;
    double momentum = 0.0;
    double dropout_rate = 0.0;
    double test_fraction = 0.2; ///< stratified held-out share
};

struct TrainReport {
    int epochs = 0;
    double final_loss = 0.0;   ///< mean cross-entropy on the training split
    double test_accuracy = 0.0;
    std::vector<double> per_cluster_success; ///< indexed by cluster
    std::vector<int> per_cluster_count;      ///< test rows per cluster
    std::uint64_t split_seed = 0;
};

struct TrainOutput {
    MlpModel model;
    Scaler env_scaler; ///< fitted on the training split only
    TrainReport report;
};

/// Supervised training: stratified split, min-max scaling fitted on the
/// training split, minibatch gradient descent on softmax cross-entropy.
/// `topology` lists layer widths input..output; hidden layers use
/// `hidden_act` and the output layer is linear. Step activations are not
/// trainable.
TrainOutput train_mlp(const std::vector<LabeledRow>& rows, const std::vector<int>& topology,
                      Activation hidden_act, const TrainHyper& hyper, std::uint64_t seed);

/// Everything the execution mode needs, as stored in a model file.
struct LearnerModel {
    Scaler env_scaler;
    ClusterModel clusters;
    MlpModel mlp;
    std::uint64_t seed = 0;
};

/// Execution mode: classify the environment, return the chosen cluster's
/// centroid as controller parameters (integer thresholds rounded).
ControllerParams predict_params(const MlpModel& mlp, const Scaler& env_scaler,
                                const ClusterModel& cm, const EnvVector& env);
ControllerParams predict_params(const LearnerModel& model, const EnvVector& env);

struct NoisePoint {
    int cluster = 0;
    double sigma = 0.0;
    double success_rate = 0.0;
    int trials = 0;
};

/// Per-cluster recognition rate under Gaussian perturbation of the scaled
/// environment features. The one-hot selector components are re-projected
/// to a valid one-hot by argmax after the noise is added. Each (cluster,
/// sigma) cell runs `trials` trials cycling through that cluster's rows.
std::vector<NoisePoint> noise_success_curve(const MlpModel& mlp, const Scaler& env_scaler,
                                            const ClusterModel& cm,
                                            const std::vector<LabeledRow>& test_rows,
                                            const std::vector<double>& sigmas, int trials,
                                            std::uint64_t seed);

/// Per-parameter perturbation sizes for online fine-tuning, in the flat
/// 18-value layout.
std::array<double, 18> default_finetune_steps();

/// Feedback fine-tuning: hill climbing that perturbs one randomly chosen
/// parameter per iteration and keeps the change only on strict objective
/// improvement.
ControllerParams online_finetune(const ControllerParams& incumbent, const Scenario& scenario,
                                 const std::array<double, 18>& step_sizes, int iterations,
                                 std::uint64_t seed, int replications = 1);

} // namespace atn
