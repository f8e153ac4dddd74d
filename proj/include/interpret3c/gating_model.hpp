#pragma once

#include "interpret3c/features.hpp"
#include "interpret3c/nn_core.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace i3c::gating {

// Initial gate-logit bias: gates start open so every subnet receives early
// gradient; the annealed penalty closes them later.
inline constexpr double kGateBiasInit = 2.0;

// Discriminator over the flattened (features x weeks) slice producing one gate
// logit per feature, plus one BiLSTM-and-head predictor per feature. The
// overall prediction is the activation-weighted mean of subnet predictions.
struct GatingModel {
    std::vector<std::string> feature_names;
    int weeks = 0;
    int disc_hidden = 64;
    int lstm_hidden = 16;
    // Fixed input magnitude normalizer (1 / RMS of the training cube), stored
    // with the parameters; unit-norm slab scaling leaves entries of order
    // 1/sqrt(students * weeks), too small for stable optimization otherwise.
    double input_gain = 1.0;

    nn::DenseLayer disc_hidden_layer; // (F * weeks) -> disc_hidden, tanh
    nn::DenseLayer disc_logit_layer;  // disc_hidden -> F

    struct Subnet {
        nn::BiLSTMCell lstm;
        nn::DenseLayer head; // 2 * lstm_hidden -> 1, sigmoid
    };
    std::vector<Subnet> subnets;

    size_t n_features() const { return feature_names.size(); }
    int slice_len() const { return static_cast<int>(n_features()) * weeks; }

    static GatingModel create(std::vector<std::string> feature_names, int weeks, uint64_t seed,
                              int disc_hidden = 64, int lstm_hidden = 16, double input_gain = 1.0,
                              double gate_bias_init = kGateBiasInit);

    void zero_grad();
    size_t param_count() const;
    // Fixed-order visitation over (name, shape, params, grads); the order
    // defines the Adam state layout and the parameter file layout.
    void visit(const std::function<void(const std::string&, std::vector<size_t>,
                                        nn::Vec&, nn::Vec&)>& fn);

    nn::Vec pack_params() const;
    void unpack_params(std::span<const double> flat);
    nn::Vec pack_grads() const;

    // Gate logits for one student slice (zero-noise path shares this).
    nn::Vec discriminator_logits(std::span<const double> slice) const;

    void save(const std::string& path) const;
    static GatingModel load(const std::string& path);
};

struct ForwardResult {
    double prediction = 0.5;
    nn::Vec per_feature;  // subnet predictions
    nn::Vec activations;  // gate values used in the weighted average
};

// Aggregation per the weighted-average rule; prediction falls back to 0.5 when
// every activation is zero.
ForwardResult model_forward(const GatingModel& model, std::span<const double> slice,
                            const nn::GateSample& gate);

// Inference path: zero-noise hard gates.
ForwardResult predict(const GatingModel& model, std::span<const double> slice);

// Reusable buffers for one training sample's forward/backward pass.
struct SampleWorkspace {
    nn::Vec x;        // gain-scaled input slice
    nn::Vec h1, dh1;  // discriminator hidden activations
    nn::Vec logits;
    std::vector<nn::LstmCache> lstm_fwd, lstm_bwd;
    std::vector<nn::Vec> lstm_out;
    nn::Vec head_pre;
    nn::Vec per_feature;
};

struct SampleStats {
    double loss = 0;
    double bce = 0;
    double penalty = 0;
    double prediction = 0.5;
    double soft_density = 0;
};

// Forward/backward over one sample: weighted BCE + sparsity penalty. Noise
// pairs may be empty for the zero-noise path.
SampleStats train_sample(GatingModel& model, std::span<const double> slice, int label,
                         std::span<const std::pair<double, double>> noise,
                         double temperature, bool hard_gates, double lambda, double bce_weight,
                         SampleWorkspace& ws, bool accumulate_grads,
                         std::span<const double> jitter = {}, double gate_value_weight = 0.0,
                         bool force_open = false);

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    uint64_t seed = 0; // callers must set; config loader enforces presence
    double temperature_start = 1.0;
    double temperature_end = 0.5;
    double lambda_start = 0.0;
    double lambda_end = 1.0;
    // Fraction of epochs at lambda_start before the ramp to lambda_end. Under
    // Adam any nonzero penalty shuts gates at full step speed regardless of
    // lambda's size, so the prediction loss needs a penalty-free head start.
    double lambda_warmup = 0.5;
    // Fraction of epochs held at lambda_end after the ramp, letting gate
    // boundaries settle before masks are extracted.
    double lambda_plateau = 0.0;
    // Two-phase training: experts stop updating once the penalty ramp starts,
    // so the ramp searches gate structure over a fixed expert pool. Experts
    // that converged to the base rate during warmup cannot re-specialize into
    // archetype-conditional constants to dodge the penalty.
    bool freeze_experts = true;
    double validation_fraction = 0.2;
    bool class_weighting = false;
    bool soft_gates = false; // train on soft activations instead of straight-through
    int disc_hidden = 64;
    int lstm_hidden = 16;
    double gate_bias_init = kGateBiasInit;
    // L2 pull on subnet weight matrices. Hash-random feature series are
    // easily memorized at desk scale; decay erodes weights that the
    // prediction loss does not actively restore, so only genuinely predictive
    // subnets keep defending their gates against the sparsity penalty.
    double weight_decay = 1e-3;
    // Gentler pull on the discriminator's weight matrices: shrinks gate-logit
    // dependence on uninformative input columns, keeping masks consistent
    // within behavioral groups without flattening the gate policy itself.
    double disc_weight_decay = 1e-4;
    // Train-time Gaussian noise on the gain-scaled inputs. Memorizing exact
    // series values stops paying once the values wobble; archetype-scale
    // structure survives the jitter.
    double input_jitter = 0.3;
    // Optional gate reward: pulls each soft gate up in proportion to its
    // expert's excess value over chance, ln(2) - BCE(p_f, y). Off by default.
    // With few features the per-gate penalty 2*lambda*s/F is strong and a
    // student's last open gate has no aggregation defense (p equals p_f
    // there); the reward keeps genuinely predictive single gates alive.
    double gate_value_weight = 0.0;

    void validate() const;
};

struct TrainHistory {
    std::vector<int> epoch;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::vector<double> val_accuracy;
    std::vector<double> mask_density; // mean soft gate over training passes
    std::vector<double> temperature;
    std::vector<double> lambda;

    void save(const std::string& path) const;
    static TrainHistory load(const std::string& path);
    bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
    GatingModel model;
    TrainHistory history;
};

TrainResult train(const features::FeatureCube& cube, const std::map<std::string, int>& labels,
                  const TrainConfig& config);

struct MaskMatrix {
    std::vector<std::string> student_ids;
    std::vector<std::string> feature_names;
    std::vector<uint8_t> values; // [student][feature]

    uint8_t at(size_t s, size_t f) const { return values[s * feature_names.size() + f]; }
    uint8_t& at(size_t s, size_t f) { return values[s * feature_names.size() + f]; }
    double density() const;
    // Fraction of students with mask = 1, per feature.
    std::vector<double> selection_rates() const;

    void save(const std::string& path) const;
    static MaskMatrix load(const std::string& path);
    bool operator==(const MaskMatrix&) const = default;
};

// Zero-noise discriminator pass; activated = sigmoid(logit) >= 0.5, which is
// exactly logit >= 0.
MaskMatrix extract_masks(const GatingModel& model, const features::FeatureCube& cube,
                         int threads = 1);

} // namespace i3c::gating
