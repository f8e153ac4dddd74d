#include "interpret3c/nn_core.hpp"

#include "interpret3c/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace i3c::nn {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

// y += M x, M is rows x cols row-major
void matvec_acc(std::span<const double> M, std::span<const double> x, std::span<double> y,
                int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* row = M.data() + static_cast<size_t>(r) * cols;
        double acc = 0;
        for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// x_grad += M^T dy; M_grad += dy x^T
void matvec_backward(std::span<const double> M, std::span<double> M_grad,
                     std::span<const double> x, std::span<double> x_grad,
                     std::span<const double> dy, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double g = dy[r];
        if (g == 0.0) continue;
        const double* row = M.data() + static_cast<size_t>(r) * cols;
        double* grow = M_grad.data() + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            grow[c] += g * x[c];
            x_grad[c] += g * row[c];
        }
    }
}

void init_uniform(Vec& v, double radius, Rng& rng) {
    for (auto& x : v) x = rng.uniform(-radius, radius);
}

} // namespace

void DenseLayer::init(int in_dim, int out_dim, Rng& rng) {
    in = in_dim;
    out = out_dim;
    W.assign(static_cast<size_t>(out) * in, 0.0);
    b.assign(out, 0.0);
    dW.assign(W.size(), 0.0);
    db.assign(b.size(), 0.0);
    init_uniform(W, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

void DenseLayer::zero_grad() {
    std::fill(dW.begin(), dW.end(), 0.0);
    std::fill(db.begin(), db.end(), 0.0);
}

Vec DenseLayer::forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != in)
        throw ShapeMismatch("dense_forward: input length " + std::to_string(x.size()) +
                            " != " + std::to_string(in));
    Vec y(b);
    matvec_acc(W, x, y, out, in);
    return y;
}

Vec DenseLayer::backward(std::span<const double> x, std::span<const double> dy) {
    if (static_cast<int>(x.size()) != in || static_cast<int>(dy.size()) != out)
        throw ShapeMismatch("dense backward: shape mismatch");
    Vec dx(in, 0.0);
    matvec_backward(W, dW, x, dx, dy, out, in);
    for (int r = 0; r < out; ++r) db[r] += dy[r];
    return dx;
}

void LstmParams::init(int input_dim, int hidden_dim, Rng& rng) {
    input = input_dim;
    hidden = hidden_dim;
    W.assign(static_cast<size_t>(4) * hidden * input, 0.0);
    U.assign(static_cast<size_t>(4) * hidden * hidden, 0.0);
    b.assign(static_cast<size_t>(4) * hidden, 0.0);
    dW.assign(W.size(), 0.0);
    dU.assign(U.size(), 0.0);
    db.assign(b.size(), 0.0);
    init_uniform(W, 1.0 / std::sqrt(static_cast<double>(input)), rng);
    init_uniform(U, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
}

void LstmParams::zero_grad() {
    std::fill(dW.begin(), dW.end(), 0.0);
    std::fill(dU.begin(), dU.end(), 0.0);
    std::fill(db.begin(), db.end(), 0.0);
}

namespace {

void resize_steps(std::vector<Vec>& v, size_t count, size_t len) {
    v.resize(count);
    for (auto& e : v) e.assign(len, 0.0);
}

// One direction over cache.x (already in traversal order); returns final h.
// Buffers are reused across calls to keep allocation out of the training loop.
Vec lstm_run(const LstmParams& p, LstmCache& cache) {
    const int H = p.hidden;
    const int T = cache.T;
    resize_steps(cache.gates, T, 4 * H);
    resize_steps(cache.c, T + 1, H);
    resize_steps(cache.h, T + 1, H);

    Vec pre(4 * H);
    for (int t = 0; t < T; ++t) {
        pre = p.b;
        matvec_acc(p.W, cache.x[t], pre, 4 * H, p.input);
        matvec_acc(p.U, cache.h[t], pre, 4 * H, H);
        Vec& g = cache.gates[t];
        for (int j = 0; j < H; ++j) {
            double i_g = sigmoid(pre[j]);
            double f_g = sigmoid(pre[H + j]);
            double c_g = std::tanh(pre[2 * H + j]);
            double o_g = sigmoid(pre[3 * H + j]);
            g[j] = i_g;
            g[H + j] = f_g;
            g[2 * H + j] = c_g;
            g[3 * H + j] = o_g;
            cache.c[t + 1][j] = f_g * cache.c[t][j] + i_g * c_g;
            cache.h[t + 1][j] = o_g * std::tanh(cache.c[t + 1][j]);
        }
    }
    return cache.h[T];
}

// BPTT from d(final h) only; earlier outputs are unused by the model.
void lstm_backward(LstmParams& p, const LstmCache& cache, std::span<const double> d_final_h) {
    const int H = p.hidden;
    const int T = cache.T;
    Vec dh(d_final_h.begin(), d_final_h.end());
    Vec dc(H, 0.0);
    Vec dpre(4 * H);
    Vec dx_unused(p.input); // input gradients are not propagated further

    for (int t = T - 1; t >= 0; --t) {
        const Vec& g = cache.gates[t];
        for (int j = 0; j < H; ++j) {
            double i_g = g[j], f_g = g[H + j], c_g = g[2 * H + j], o_g = g[3 * H + j];
            double tc = std::tanh(cache.c[t + 1][j]);
            double do_g = dh[j] * tc;
            double dct = dc[j] + dh[j] * o_g * (1.0 - tc * tc);
            double di = dct * c_g;
            double dg = dct * i_g;
            double df = dct * cache.c[t][j];
            dc[j] = dct * f_g;
            dpre[j] = di * i_g * (1.0 - i_g);
            dpre[H + j] = df * f_g * (1.0 - f_g);
            dpre[2 * H + j] = dg * (1.0 - c_g * c_g);
            dpre[3 * H + j] = do_g * o_g * (1.0 - o_g);
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        std::fill(dx_unused.begin(), dx_unused.end(), 0.0);
        matvec_backward(p.W, p.dW, cache.x[t], dx_unused, dpre, 4 * H, p.input);
        matvec_backward(p.U, p.dU, cache.h[t], dh, dpre, 4 * H, H);
        for (int r = 0; r < 4 * H; ++r) p.db[r] += dpre[r];
    }
}

void fill_steps(std::span<const double> sequence, int T, int d, bool reversed, LstmCache& cache) {
    cache.T = T;
    cache.x.resize(T);
    for (int t = 0; t < T; ++t) {
        int src = reversed ? T - 1 - t : t;
        cache.x[t].assign(sequence.begin() + static_cast<size_t>(src) * d,
                          sequence.begin() + static_cast<size_t>(src + 1) * d);
    }
}

} // namespace

void BiLSTMCell::init(int input_dim, int hidden_dim, Rng& rng) {
    forward_dir.init(input_dim, hidden_dim, rng);
    backward_dir.init(input_dim, hidden_dim, rng);
}

void BiLSTMCell::zero_grad() {
    forward_dir.zero_grad();
    backward_dir.zero_grad();
}

Vec BiLSTMCell::forward(std::span<const double> sequence, int T, LstmCache& fwd_cache,
                        LstmCache& bwd_cache) const {
    const int d = input();
    if (T < 1 || sequence.size() != static_cast<size_t>(T) * d)
        throw ShapeMismatch("bilstm_forward: sequence shape mismatch");
    fill_steps(sequence, T, d, false, fwd_cache);
    fill_steps(sequence, T, d, true, bwd_cache);
    Vec hf = lstm_run(forward_dir, fwd_cache);
    Vec hb = lstm_run(backward_dir, bwd_cache);
    hf.insert(hf.end(), hb.begin(), hb.end());
    return hf;
}

Vec BiLSTMCell::forward(std::span<const double> sequence, int T) const {
    LstmCache f, b;
    return forward(sequence, T, f, b);
}

void BiLSTMCell::backward(const LstmCache& fwd_cache, const LstmCache& bwd_cache,
                          std::span<const double> d_out) {
    const int H = hidden();
    if (static_cast<int>(d_out.size()) != 2 * H)
        throw ShapeMismatch("bilstm backward: gradient length mismatch");
    lstm_backward(forward_dir, fwd_cache, d_out.subspan(0, H));
    lstm_backward(backward_dir, bwd_cache, d_out.subspan(H, H));
}

double GateSample::dsoft_dlogit(size_t f) const {
    return soft[f] * (1.0 - soft[f]) / temperature;
}

namespace {
GateSample make_gate(const Vec& logits, double temperature, const Vec& noise, bool straight_through) {
    if (temperature <= 0) throw InvalidSpec("gate temperature must be positive");
    GateSample s;
    s.logits = logits;
    s.temperature = temperature;
    s.straight_through = straight_through;
    s.soft.resize(logits.size());
    s.hard.resize(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        s.soft[i] = sigmoid((logits[i] + noise[i]) / temperature);
        s.hard[i] = s.soft[i] >= 0.5 ? 1 : 0;
    }
    return s;
}
} // namespace

GateSample gumbel_sigmoid_gate(const Vec& logits, double temperature,
                               std::span<const std::pair<double, double>> draws, bool hard) {
    if (draws.size() != logits.size())
        throw ShapeMismatch("gumbel_sigmoid_gate: one uniform pair required per logit");
    Vec noise(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        auto [u, v] = draws[i];
        if (!(u > 0 && u < 1) || !(v > 0 && v < 1))
            throw InvalidDraw("gumbel_sigmoid_gate: draws must lie in (0,1)");
        noise[i] = -std::log(-std::log(u)) + std::log(-std::log(v));
    }
    return make_gate(logits, temperature, noise, hard);
}

GateSample gate_without_noise(const Vec& logits, double temperature, bool hard) {
    Vec zero(logits.size(), 0.0);
    return make_gate(logits, temperature, zero, hard);
}

LossGrad bce_loss(double prediction, int label) {
    if (label != 0 && label != 1) throw InvalidSpec("bce_loss: label must be 0 or 1");
    constexpr double eps = 1e-7;
    double p = std::min(1.0 - eps, std::max(eps, prediction));
    LossGrad out;
    out.value = label == 1 ? -std::log(p) : -std::log(1.0 - p);
    out.d_prediction = label == 1 ? -1.0 / p : 1.0 / (1.0 - p);
    return out;
}

double mask_sparsity_penalty(std::span<const double> soft_mask, double lambda) {
    if (lambda < 0) throw InvalidSpec("mask_sparsity_penalty: lambda must be >= 0");
    if (soft_mask.empty()) return 0.0;
    double sq = 0;
    for (double m : soft_mask) sq += m * m;
    return lambda * sq / static_cast<double>(soft_mask.size());
}

double mask_sparsity_grad(double soft_i, double lambda, size_t n_features) {
    return 2.0 * lambda * soft_i / static_cast<double>(n_features);
}

void AdamState::ensure_size(size_t n) {
    if (m.empty()) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    } else if (m.size() != n) {
        throw ShapeMismatch("adam state sized for a different parameter count");
    }
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw ShapeMismatch("adam_step: params/grads mismatch");
    state.ensure_size(params.size());
    state.step += 1;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
}

double grad_check(const std::function<double(std::span<const double>)>& loss,
                  std::span<const double> point, std::span<const double> analytic_grad,
                  double step) {
    if (point.size() != analytic_grad.size()) throw ShapeMismatch("grad_check: size mismatch");
    if (step <= 0) throw InvalidSpec("grad_check: step must be positive");
    Vec probe(point.begin(), point.end());
    double worst = 0;
    for (size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + step;
        double up = loss(probe);
        probe[i] = saved - step;
        double down = loss(probe);
        probe[i] = saved;
        double numeric = (up - down) / (2.0 * step);
        double err = std::abs(analytic_grad[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

void save_tensors(const std::string& path, const std::vector<std::pair<std::string, std::string>>& meta,
                  const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "interpret3c-params v1\n";
    for (const auto& [k, v] : meta) out << "meta " << k << ' ' << v << '\n';
    for (const auto& t : tensors) {
        out << "tensor " << t.name;
        out << ' ' << t.shape.size();
        size_t n = 1;
        for (size_t d : t.shape) {
            out << ' ' << d;
            n *= d;
        }
        out << '\n';
        if (n != t.data.size()) throw ShapeMismatch("save_tensors: shape/data mismatch for " + t.name);
        for (size_t i = 0; i < n; ++i) out << (i ? " " : "") << format_double(t.data[i]);
        out << '\n';
    }
}

std::vector<std::pair<std::string, std::string>>
load_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "interpret3c-params v1")
        throw MalformedRow(path + ": not a parameter file");
    std::vector<std::pair<std::string, std::string>> meta;
    size_t next_tensor = 0;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        std::istringstream ss(t);
        std::string tag;
        ss >> tag;
        if (tag == "meta") {
            std::string key;
            ss >> key;
            std::string rest;
            std::getline(ss, rest);
            meta.emplace_back(key, trim(rest));
        } else if (tag == "tensor") {
            if (next_tensor >= tensors.size())
                throw ShapeMismatch(path + ": more tensors than expected");
            const NamedTensor& want = tensors[next_tensor++];
            std::string name;
            size_t rank = 0;
            ss >> name >> rank;
            if (name != want.name) throw ShapeMismatch(path + ": expected tensor " + want.name +
                                                       ", found " + name);
            std::vector<size_t> shape(rank);
            size_t n = 1;
            for (auto& d : shape) {
                ss >> d;
                n *= d;
            }
            if (shape != want.shape || n != want.data.size())
                throw ShapeMismatch(path + ": shape mismatch for " + name);
            if (!std::getline(in, line)) throw MalformedRow(path + ": missing values for " + name);
            std::istringstream values(line);
            for (size_t i = 0; i < n; ++i) {
                std::string v;
                if (!(values >> v)) throw MalformedRow(path + ": short value row for " + name);
                want.data[i] = parse_double(v, name);
            }
        } else {
            throw MalformedRow(path + ": unknown line tag '" + tag + "'");
        }
    }
    if (next_tensor != tensors.size()) throw ShapeMismatch(path + ": missing tensors");
    return meta;
}

} // namespace i3c::nn
