#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace i3c {
class Rng;
}

namespace i3c::nn {

using Vec = std::vector<double>;

double sigmoid(double x);

// Fully connected layer, y = W x + b. Gradients accumulate into dW/db until
// zero_grad(); backward returns dL/dx.
struct DenseLayer {
    int in = 0, out = 0;
    Vec W; // out x in, row-major
    Vec b;
    Vec dW, db;

    void init(int in_dim, int out_dim, Rng& rng);
    void zero_grad();
    Vec forward(std::span<const double> x) const;
    Vec backward(std::span<const double> x, std::span<const double> dy);
};

// One LSTM direction with gates packed [input, forget, cell, output] along
// rows, so pre-activations come from two mat-vecs per step.
struct LstmParams {
    int input = 0, hidden = 0;
    Vec W; // 4H x input
    Vec U; // 4H x H
    Vec b; // 4H
    Vec dW, dU, db;

    void init(int input_dim, int hidden_dim, Rng& rng);
    void zero_grad();
};

struct LstmCache {
    int T = 0;
    std::vector<Vec> x;     // inputs per step (in traversal order)
    std::vector<Vec> gates; // post-activation [i f g o] per step
    std::vector<Vec> c;     // cell states, c[0] = 0 state, c[t] after step t
    std::vector<Vec> h;
};

struct BiLSTMCell {
    LstmParams forward_dir;
    LstmParams backward_dir;

    int hidden() const { return forward_dir.hidden; }
    int input() const { return forward_dir.input; }
    void init(int input_dim, int hidden_dim, Rng& rng);
    void zero_grad();

    // sequence: T x d row-major. Returns concat(final forward h, final backward h).
    Vec forward(std::span<const double> sequence, int T, LstmCache& fwd_cache,
                LstmCache& bwd_cache) const;
    Vec forward(std::span<const double> sequence, int T) const;

    // d_out: gradient w.r.t. the concatenated output (length 2H).
    void backward(const LstmCache& fwd_cache, const LstmCache& bwd_cache,
                  std::span<const double> d_out);
};

struct GateSample {
    Vec logits;
    double temperature = 1.0;
    bool straight_through = true; // forward reads hard values when set
    Vec soft;                     // in (0,1)
    std::vector<uint8_t> hard;    // hard[i] = soft[i] >= 0.5

    double activation(size_t f) const {
        return straight_through ? static_cast<double>(hard[f]) : soft[f];
    }
    // d soft_i / d logit_i; also the straight-through gradient of hard_i.
    double dsoft_dlogit(size_t f) const;
};

// soft_i = sigmoid((logit_i + g(u_i) - g(u'_i)) / temperature), g = -log(-log u).
GateSample gumbel_sigmoid_gate(const Vec& logits, double temperature,
                               std::span<const std::pair<double, double>> draws, bool hard);
// Evaluation path: zero noise.
GateSample gate_without_noise(const Vec& logits, double temperature, bool hard = true);

struct LossGrad {
    double value = 0;
    double d_prediction = 0;
};

// Binary cross-entropy with the prediction clamped to [1e-7, 1 - 1e-7].
LossGrad bce_loss(double prediction, int label);

// lambda * mean(soft_i^2): mean-squared error of the mask against zero.
double mask_sparsity_penalty(std::span<const double> soft_mask, double lambda);
// d penalty / d soft_i
double mask_sparsity_grad(double soft_i, double lambda, size_t n_features);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    long step = 0;
    Vec m, v;

    explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
    void ensure_size(size_t n);
};

// Standard bias-corrected Adam update over flat parameter/gradient spans.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Max over coordinates of |analytic - central difference| / max(1, |central difference|).
double grad_check(const std::function<double(std::span<const double>)>& loss,
                  std::span<const double> point, std::span<const double> analytic_grad,
                  double step);

// Named-tensor parameter file: line-oriented text, values at 17 significant
// digits so round-trips are bit-exact at double precision.
struct NamedTensor {
    std::string name;
    std::vector<size_t> shape;
    std::span<double> data;
};

void save_tensors(const std::string& path, const std::vector<std::pair<std::string, std::string>>& meta,
                  const std::vector<NamedTensor>& tensors);
std::vector<std::pair<std::string, std::string>>
load_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);

} // namespace i3c::nn
