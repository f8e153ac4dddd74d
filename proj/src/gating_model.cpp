#include "interpret3c/gating_model.hpp"

#include "interpret3c/common.hpp"
#include "interpret3c/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace i3c::gating {

using nn::Vec;

GatingModel GatingModel::create(std::vector<std::string> feature_names, int weeks, uint64_t seed,
                                int disc_hidden, int lstm_hidden, double input_gain,
                                double gate_bias_init) {
    if (feature_names.empty() || weeks < 1)
        throw InvalidSpec("gating model needs at least one feature and one week");
    GatingModel m;
    m.feature_names = std::move(feature_names);
    m.weeks = weeks;
    m.disc_hidden = disc_hidden;
    m.lstm_hidden = lstm_hidden;
    m.input_gain = input_gain;
    Rng rng = Rng::derive(seed, 7);
    const int F = static_cast<int>(m.n_features());
    m.disc_hidden_layer.init(F * weeks, disc_hidden, rng);
    m.disc_logit_layer.init(disc_hidden, F, rng);
    // Gates open at the start: the sparsity penalty has to earn closures after
    // the subnets have had gradient signal, not before.
    std::fill(m.disc_logit_layer.b.begin(), m.disc_logit_layer.b.end(), gate_bias_init);
    m.subnets.resize(m.n_features());
    for (auto& s : m.subnets) {
        s.lstm.init(1, lstm_hidden, rng);
        s.head.init(2 * lstm_hidden, 1, rng);
    }
    return m;
}

void GatingModel::zero_grad() {
    disc_hidden_layer.zero_grad();
    disc_logit_layer.zero_grad();
    for (auto& s : subnets) {
        s.lstm.zero_grad();
        s.head.zero_grad();
    }
}

void GatingModel::visit(const std::function<void(const std::string&, std::vector<size_t>,
                                                 Vec&, Vec&)>& fn) {
    auto dense = [&](const std::string& prefix, nn::DenseLayer& l) {
        fn(prefix + ".W", {static_cast<size_t>(l.out), static_cast<size_t>(l.in)}, l.W, l.dW);
        fn(prefix + ".b", {static_cast<size_t>(l.out)}, l.b, l.db);
    };
    auto lstm_dir = [&](const std::string& prefix, nn::LstmParams& p) {
        fn(prefix + ".W", {static_cast<size_t>(4 * p.hidden), static_cast<size_t>(p.input)}, p.W, p.dW);
        fn(prefix + ".U", {static_cast<size_t>(4 * p.hidden), static_cast<size_t>(p.hidden)}, p.U, p.dU);
        fn(prefix + ".b", {static_cast<size_t>(4 * p.hidden)}, p.b, p.db);
    };
    dense("disc_hidden", disc_hidden_layer);
    dense("disc_logits", disc_logit_layer);
    for (size_t f = 0; f < subnets.size(); ++f) {
        const std::string base = "subnet" + std::to_string(f);
        lstm_dir(base + ".fwd", subnets[f].lstm.forward_dir);
        lstm_dir(base + ".bwd", subnets[f].lstm.backward_dir);
        dense(base + ".head", subnets[f].head);
    }
}

size_t GatingModel::param_count() const {
    size_t n = 0;
    const_cast<GatingModel*>(this)->visit(
        [&](const std::string&, std::vector<size_t>, Vec& p, Vec&) { n += p.size(); });
    return n;
}

Vec GatingModel::pack_params() const {
    Vec flat;
    flat.reserve(param_count());
    const_cast<GatingModel*>(this)->visit(
        [&](const std::string&, std::vector<size_t>, Vec& p, Vec&) {
            flat.insert(flat.end(), p.begin(), p.end());
        });
    return flat;
}

void GatingModel::unpack_params(std::span<const double> flat) {
    size_t off = 0;
    visit([&](const std::string&, std::vector<size_t>, Vec& p, Vec&) {
        if (off + p.size() > flat.size()) throw ShapeMismatch("unpack_params: flat vector too short");
        std::copy(flat.begin() + off, flat.begin() + off + p.size(), p.begin());
        off += p.size();
    });
    if (off != flat.size()) throw ShapeMismatch("unpack_params: flat vector too long");
}

Vec GatingModel::pack_grads() const {
    Vec flat;
    flat.reserve(param_count());
    const_cast<GatingModel*>(this)->visit(
        [&](const std::string&, std::vector<size_t>, Vec&, Vec& g) {
            flat.insert(flat.end(), g.begin(), g.end());
        });
    return flat;
}

Vec GatingModel::discriminator_logits(std::span<const double> slice) const {
    if (static_cast<int>(slice.size()) != slice_len())
        throw ShapeMismatch("discriminator: slice length mismatch");
    Vec x(slice.begin(), slice.end());
    for (auto& v : x) v *= input_gain;
    Vec h = disc_hidden_layer.forward(x);
    for (auto& v : h) v = std::tanh(v);
    return disc_logit_layer.forward(h);
}

namespace {

double subnet_prediction(const GatingModel::Subnet& s, std::span<const double> series, int weeks,
                         nn::LstmCache& cf, nn::LstmCache& cb, double& head_pre) {
    Vec out = s.lstm.forward(series, weeks, cf, cb);
    head_pre = s.head.forward(out)[0];
    return nn::sigmoid(head_pre);
}

} // namespace

ForwardResult model_forward(const GatingModel& model, std::span<const double> slice,
                            const nn::GateSample& gate) {
    if (static_cast<int>(slice.size()) != model.slice_len())
        throw ShapeMismatch("model_forward: slice length mismatch");
    if (gate.soft.size() != model.n_features())
        throw ShapeMismatch("model_forward: gate width mismatch");
    const size_t F = model.n_features();
    const int W = model.weeks;

    ForwardResult r;
    r.per_feature.resize(F);
    r.activations.resize(F);
    Vec series(W);
    nn::LstmCache cf, cb;
    double act_sum = 0, weighted = 0;
    for (size_t f = 0; f < F; ++f) {
        for (int w = 0; w < W; ++w) series[w] = slice[f * W + w] * model.input_gain;
        double pre = 0;
        r.per_feature[f] = subnet_prediction(model.subnets[f], series, W, cf, cb, pre);
        r.activations[f] = gate.activation(f);
        act_sum += r.activations[f];
        weighted += r.activations[f] * r.per_feature[f];
    }
    r.prediction = act_sum > 0 ? weighted / act_sum : 0.5;
    return r;
}

ForwardResult predict(const GatingModel& model, std::span<const double> slice) {
    nn::GateSample gate = nn::gate_without_noise(model.discriminator_logits(slice), 1.0, true);
    return model_forward(model, slice, gate);
}

SampleStats train_sample(GatingModel& model, std::span<const double> slice, int label,
                         std::span<const std::pair<double, double>> noise,
                         double temperature, bool hard_gates, double lambda, double bce_weight,
                         SampleWorkspace& ws, bool accumulate_grads,
                         std::span<const double> jitter, double gate_value_weight,
                         bool force_open) {
    const size_t F = model.n_features();
    const int W = model.weeks;
    if (static_cast<int>(slice.size()) != model.slice_len())
        throw ShapeMismatch("train_sample: slice length mismatch");
    if (!jitter.empty() && jitter.size() != slice.size())
        throw ShapeMismatch("train_sample: jitter length mismatch");

    ws.x.resize(slice.size());
    for (size_t i = 0; i < slice.size(); ++i)
        ws.x[i] = slice[i] * model.input_gain + (jitter.empty() ? 0.0 : jitter[i]);

    // Discriminator: dense -> tanh -> dense -> gate logits.
    ws.h1 = model.disc_hidden_layer.forward(ws.x);
    for (auto& v : ws.h1) v = std::tanh(v);
    ws.logits = model.disc_logit_layer.forward(ws.h1);

    nn::GateSample gate = noise.empty()
                              ? nn::gate_without_noise(ws.logits, temperature, hard_gates)
                              : nn::gumbel_sigmoid_gate(ws.logits, temperature, noise, hard_gates);
    if (force_open) {
        // Warmup: every expert sees every student; the discriminator still
        // receives the straight-through aggregation gradient.
        gate.straight_through = true;
        std::fill(gate.hard.begin(), gate.hard.end(), uint8_t{1});
    }

    ws.lstm_fwd.resize(F);
    ws.lstm_bwd.resize(F);
    ws.lstm_out.resize(F);
    ws.head_pre.resize(F);
    ws.per_feature.resize(F);

    Vec series(W);
    double act_sum = 0, weighted = 0;
    for (size_t f = 0; f < F; ++f) {
        for (int w = 0; w < W; ++w) series[w] = ws.x[f * W + w];
        ws.lstm_out[f] = model.subnets[f].lstm.forward(series, W, ws.lstm_fwd[f], ws.lstm_bwd[f]);
        ws.head_pre[f] = model.subnets[f].head.forward(ws.lstm_out[f])[0];
        ws.per_feature[f] = nn::sigmoid(ws.head_pre[f]);
        double a = gate.activation(f);
        act_sum += a;
        weighted += a * ws.per_feature[f];
    }
    const double prediction = act_sum > 0 ? weighted / act_sum : 0.5;
    const double ln2 = 0.6931471805599453;

    nn::LossGrad bce = nn::bce_loss(prediction, label);
    double penalty = nn::mask_sparsity_penalty(gate.soft, lambda);
    // Per-expert excess value over chance, paid out through the soft gate.
    double reward = 0;
    std::vector<nn::LossGrad> expert_bce(F);
    for (size_t f = 0; f < F; ++f) {
        expert_bce[f] = nn::bce_loss(ws.per_feature[f], label);
        reward += gate.soft[f] * (ln2 - expert_bce[f].value);
    }
    reward *= gate_value_weight / static_cast<double>(F);

    SampleStats stats;
    stats.bce = bce.value;
    stats.penalty = penalty;
    stats.loss = bce_weight * bce.value + penalty - reward;
    stats.prediction = prediction;
    stats.soft_density = std::accumulate(gate.soft.begin(), gate.soft.end(), 0.0) /
                         static_cast<double>(F);
    if (!accumulate_grads) return stats;

    const double dp = act_sum > 0 ? bce_weight * bce.d_prediction : 0.0;
    const double aux = gate_value_weight / static_cast<double>(F);
    Vec dlogits(F, 0.0);
    Vec d_out(2 * model.lstm_hidden);
    Vec d_head_pre(1);
    for (size_t f = 0; f < F; ++f) {
        double a = gate.activation(f);
        // Gate logit gradient: aggregation path, sparsity penalty, and gate
        // value reward, each through the soft relaxation (straight-through
        // when gates are hard).
        double d_a = act_sum > 0 ? dp * (ws.per_feature[f] - prediction) / act_sum : 0.0;
        double d_soft = d_a + nn::mask_sparsity_grad(gate.soft[f], lambda, F) -
                        aux * (ln2 - expert_bce[f].value);
        dlogits[f] = d_soft * gate.dsoft_dlogit(f);

        double d_pf = (act_sum > 0 ? dp * a / act_sum : 0.0) +
                      aux * gate.soft[f] * expert_bce[f].d_prediction;
        if (d_pf != 0.0) {
            d_head_pre[0] = d_pf * ws.per_feature[f] * (1.0 - ws.per_feature[f]);
            Vec d_lstm = model.subnets[f].head.backward(ws.lstm_out[f], d_head_pre);
            std::copy(d_lstm.begin(), d_lstm.end(), d_out.begin());
            model.subnets[f].lstm.backward(ws.lstm_fwd[f], ws.lstm_bwd[f], d_out);
        }
    }
    ws.dh1 = model.disc_logit_layer.backward(ws.h1, dlogits);
    for (size_t i = 0; i < ws.dh1.size(); ++i) ws.dh1[i] *= 1.0 - ws.h1[i] * ws.h1[i];
    model.disc_hidden_layer.backward(ws.x, ws.dh1);
    return stats;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidSpec("train: epochs must be >= 1");
    if (batch_size < 1) throw InvalidSpec("train: batch_size must be >= 1");
    if (!(validation_fraction > 0 && validation_fraction < 1))
        throw InvalidSpec("train: validation_fraction must lie in (0,1)");
    if (temperature_start <= 0 || temperature_end <= 0)
        throw InvalidSpec("train: temperatures must be positive");
    if (lambda_start < 0 || lambda_end < 0) throw InvalidSpec("train: lambda must be >= 0");
    if (!(lambda_warmup >= 0 && lambda_warmup < 1))
        throw InvalidSpec("train: lambda_warmup must lie in [0,1)");
    if (!(lambda_plateau >= 0 && lambda_warmup + lambda_plateau < 1))
        throw InvalidSpec("train: lambda_plateau must leave room for the ramp");
    if (learning_rate <= 0) throw InvalidSpec("train: learning rate must be positive");
    if (weight_decay < 0) throw InvalidSpec("train: weight_decay must be >= 0");
    if (disc_weight_decay < 0) throw InvalidSpec("train: disc_weight_decay must be >= 0");
    if (input_jitter < 0) throw InvalidSpec("train: input_jitter must be >= 0");
    if (gate_value_weight < 0) throw InvalidSpec("train: gate_value_weight must be >= 0");
    if (disc_hidden < 1 || lstm_hidden < 1) throw InvalidSpec("train: hidden sizes must be >= 1");
}

namespace {

double input_gain_for(const features::FeatureCube& cube) {
    double sq = 0;
    for (double v : cube.values) sq += v * v;
    if (sq <= 0) return 1.0;
    double rms = std::sqrt(sq / static_cast<double>(cube.values.size()));
    return 1.0 / rms;
}

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
}

} // namespace

TrainResult train(const features::FeatureCube& cube, const std::map<std::string, int>& labels,
                  const TrainConfig& config) {
    config.validate();
    if (!cube.scaled) throw InvalidSpec("train: cube must be scaled");
    cube.check_finite();
    const size_t S = cube.n_students();
    if (S < 2) throw InvalidSpec("train: need at least two students");

    std::vector<int> y(S);
    for (size_t s = 0; s < S; ++s) {
        auto it = labels.find(cube.student_ids[s]);
        if (it == labels.end())
            throw LabelMismatch("train: no label for student '" + cube.student_ids[s] + "'");
        if (it->second != 0 && it->second != 1)
            throw LabelMismatch("train: label must be 0 or 1");
        y[s] = it->second;
    }

    GatingModel model = GatingModel::create(cube.feature_names, cube.weeks_used, config.seed,
                                            config.disc_hidden, config.lstm_hidden,
                                            input_gain_for(cube), config.gate_bias_init);

    // Stratified split, deterministic in (seed, student order).
    std::vector<size_t> by_class[2];
    for (size_t s = 0; s < S; ++s) by_class[y[s]].push_back(s);
    Rng split_rng = Rng::derive(config.seed, 101);
    std::vector<size_t> train_idx, val_idx;
    for (auto& cls : by_class) {
        shuffle_indices(cls, split_rng);
        size_t n = cls.size();
        size_t take = static_cast<size_t>(std::floor(config.validation_fraction *
                                                     static_cast<double>(n) + 0.5));
        if (n >= 2) take = std::clamp<size_t>(take, 1, n - 1);
        else take = 0;
        for (size_t i = 0; i < n; ++i) (i < take ? val_idx : train_idx).push_back(cls[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    if (train_idx.empty() || val_idx.empty())
        throw InvalidSpec("train: split produced an empty partition");

    double class_weight[2] = {1.0, 1.0};
    if (config.class_weighting) {
        double n0 = 0, n1 = 0;
        for (size_t s : train_idx) (y[s] == 1 ? n1 : n0) += 1;
        if (n0 > 0 && n1 > 0) {
            double n = n0 + n1;
            class_weight[0] = n / (2.0 * n0);
            class_weight[1] = n / (2.0 * n1);
        }
    }

    nn::AdamState adam(nn::AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});
    // Weight-matrix spans inside the packed layout; biases are never decayed
    // (gate biases must drift freely, expert base rates carry calibration).
    struct DecaySpan {
        size_t offset, length;
        double rate;
    };
    std::vector<DecaySpan> decay_ranges;
    {
        size_t off = 0;
        model.visit([&](const std::string& name, std::vector<size_t>, nn::Vec& p, nn::Vec&) {
            bool is_matrix = name.size() > 2 && (name.compare(name.size() - 2, 2, ".W") == 0 ||
                                                 name.compare(name.size() - 2, 2, ".U") == 0);
            if (is_matrix) {
                double rate = name.rfind("subnet", 0) == 0 ? config.weight_decay
                                                           : config.disc_weight_decay;
                if (rate > 0) decay_ranges.push_back({off, p.size(), rate});
            }
            off += p.size();
        });
    }
    std::vector<std::pair<size_t, size_t>> subnet_spans;
    {
        size_t off = 0;
        model.visit([&](const std::string& name, std::vector<size_t>, nn::Vec& p, nn::Vec&) {
            if (name.rfind("subnet", 0) == 0) subnet_spans.push_back({off, p.size()});
            off += p.size();
        });
    }
    Rng order_rng = Rng::derive(config.seed, 202);
    Rng noise_rng = Rng::derive(config.seed, 303);

    TrainHistory history;
    SampleWorkspace ws;
    std::vector<std::pair<double, double>> draws(model.n_features());
    std::vector<double> jitter(cube.n_features() * cube.weeks_used);
    const size_t n_train = train_idx.size();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double t = config.epochs > 1
                       ? static_cast<double>(epoch) / static_cast<double>(config.epochs - 1)
                       : 1.0;
        double temperature = config.temperature_start +
                             (config.temperature_end - config.temperature_start) * t;
        double lambda = config.lambda_start;
        if (t >= config.lambda_warmup) {
            double ramp_span = 1.0 - config.lambda_warmup - config.lambda_plateau;
            double ramp_pos = ramp_span > 0 ? (t - config.lambda_warmup) / ramp_span : 1.0;
            lambda += (config.lambda_end - config.lambda_start) * std::min(1.0, ramp_pos);
        }

        const bool warmup_phase = t < config.lambda_warmup;
        std::vector<size_t> order = train_idx;
        shuffle_indices(order, order_rng);

        double loss_sum = 0, density_sum = 0;
        for (size_t start = 0; start < n_train; start += config.batch_size) {
            size_t stop = std::min(n_train, start + config.batch_size);
            model.zero_grad();
            for (size_t i = start; i < stop; ++i) {
                size_t s = order[i];
                for (auto& d : draws) d = {noise_rng.uniform(), noise_rng.uniform()};
                for (auto& j : jitter) j = config.input_jitter * noise_rng.gaussian();
                SampleStats st = train_sample(model, cube.student_slice(s), y[s], draws,
                                              temperature, !config.soft_gates, lambda,
                                              class_weight[y[s]], ws, true,
                                              config.input_jitter > 0 ? std::span<const double>(jitter)
                                                                      : std::span<const double>(),
                                              config.gate_value_weight, warmup_phase);
                loss_sum += st.loss;
                density_sum += st.soft_density;
            }
            Vec grads = model.pack_grads();
            double inv = 1.0 / static_cast<double>(stop - start);
            for (auto& g : grads) g *= inv;
            Vec params = model.pack_params();
            for (const auto& span : decay_ranges)
                for (size_t i = span.offset; i < span.offset + span.length; ++i)
                    grads[i] += span.rate * params[i];
            if (config.freeze_experts && !warmup_phase)
                for (auto [off, len] : subnet_spans)
                    std::fill(grads.begin() + off, grads.begin() + off + len, 0.0);
            nn::adam_step(adam, params, grads);
            model.unpack_params(params);
        }

        double train_loss = loss_sum / static_cast<double>(n_train);
        double val_loss = 0, correct = 0;
        for (size_t s : val_idx) {
            ForwardResult r = predict(model, cube.student_slice(s));
            val_loss += nn::bce_loss(r.prediction, y[s]).value;
            correct += (r.prediction >= 0.5 ? 1 : 0) == y[s] ? 1.0 : 0.0;
        }
        val_loss /= static_cast<double>(val_idx.size());
        double val_acc = correct / static_cast<double>(val_idx.size());

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw NonFinite("train: loss diverged at epoch " + std::to_string(epoch));

        history.epoch.push_back(epoch);
        history.train_loss.push_back(train_loss);
        history.val_loss.push_back(val_loss);
        history.val_accuracy.push_back(val_acc);
        history.mask_density.push_back(density_sum / static_cast<double>(n_train));
        history.temperature.push_back(temperature);
        history.lambda.push_back(lambda);
    }
    return {std::move(model), std::move(history)};
}

double MaskMatrix::density() const {
    if (values.empty()) return 0;
    double on = 0;
    for (uint8_t v : values) on += v;
    return on / static_cast<double>(values.size());
}

std::vector<double> MaskMatrix::selection_rates() const {
    std::vector<double> rates(feature_names.size(), 0.0);
    for (size_t s = 0; s < student_ids.size(); ++s)
        for (size_t f = 0; f < feature_names.size(); ++f) rates[f] += at(s, f);
    for (auto& r : rates) r /= static_cast<double>(student_ids.size());
    return rates;
}

MaskMatrix extract_masks(const GatingModel& model, const features::FeatureCube& cube, int threads) {
    if (cube.feature_names != model.feature_names || cube.weeks_used != model.weeks)
        throw ShapeMismatch("extract_masks: cube does not match model layout");
    MaskMatrix m;
    m.student_ids = cube.student_ids;
    m.feature_names = cube.feature_names;
    m.values.assign(cube.n_students() * cube.n_features(), 0);
    parallel_for(cube.n_students(), threads, [&](size_t s) {
        Vec logits = model.discriminator_logits(cube.student_slice(s));
        for (size_t f = 0; f < cube.n_features(); ++f)
            m.values[s * cube.n_features() + f] = logits[f] >= 0.0 ? 1 : 0;
    });
    return m;
}

void MaskMatrix::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    std::vector<std::string> header = {"student_id"};
    header.insert(header.end(), feature_names.begin(), feature_names.end());
    csv::write_row(out, header);
    for (size_t s = 0; s < student_ids.size(); ++s) {
        std::vector<std::string> row = {student_ids[s]};
        for (size_t f = 0; f < feature_names.size(); ++f)
            row.push_back(at(s, f) ? "1" : "0");
        csv::write_row(out, row);
    }
}

MaskMatrix MaskMatrix::load(const std::string& path) {
    std::vector<std::string> header;
    auto rows = csv::read_file(path, header);
    if (header.empty() || header[0] != "student_id")
        throw MalformedRow(path + ": expected student_id header");
    MaskMatrix m;
    m.feature_names.assign(header.begin() + 1, header.end());
    for (const auto& row : rows) {
        if (row.fields.size() != header.size())
            throw MalformedRow(path + " row " + std::to_string(row.line_number) + ": width mismatch");
        m.student_ids.push_back(trim(row.fields[0]));
        for (size_t f = 1; f < row.fields.size(); ++f) {
            long v = parse_long(row.fields[f], path);
            if (v != 0 && v != 1) throw MalformedRow(path + ": mask entries must be 0/1");
            m.values.push_back(static_cast<uint8_t>(v));
        }
    }
    return m;
}

void TrainHistory::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    csv::write_row(out, {"epoch", "train_loss", "val_loss", "val_accuracy", "mask_density",
                         "temperature", "lambda"});
    for (size_t i = 0; i < epoch.size(); ++i)
        csv::write_row(out, {std::to_string(epoch[i]), format_double(train_loss[i]),
                             format_double(val_loss[i]), format_double(val_accuracy[i]),
                             format_double(mask_density[i]), format_double(temperature[i]),
                             format_double(lambda[i])});
}

TrainHistory TrainHistory::load(const std::string& path) {
    std::vector<std::string> header;
    auto rows = csv::read_file(path, header);
    TrainHistory h;
    for (const auto& row : rows) {
        if (row.fields.size() != 7) throw MalformedRow(path + ": expected 7 columns");
        h.epoch.push_back(static_cast<int>(parse_long(row.fields[0], "epoch")));
        h.train_loss.push_back(parse_double(row.fields[1], "train_loss"));
        h.val_loss.push_back(parse_double(row.fields[2], "val_loss"));
        h.val_accuracy.push_back(parse_double(row.fields[3], "val_accuracy"));
        h.mask_density.push_back(parse_double(row.fields[4], "mask_density"));
        h.temperature.push_back(parse_double(row.fields[5], "temperature"));
        h.lambda.push_back(parse_double(row.fields[6], "lambda"));
    }
    return h;
}

namespace {
std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (size_t i = 0; i < names.size(); ++i) {
        if (i) out += ',';
        out += names[i];
    }
    return out;
}
} // namespace

void GatingModel::save(const std::string& path) const {
    auto* self = const_cast<GatingModel*>(this);
    std::vector<std::pair<std::string, std::string>> meta = {
        {"features", join_names(feature_names)},
        {"weeks", std::to_string(weeks)},
        {"disc_hidden", std::to_string(disc_hidden)},
        {"lstm_hidden", std::to_string(lstm_hidden)},
        {"input_gain", format_double(input_gain)},
    };
    std::vector<nn::NamedTensor> tensors;
    self->visit([&](const std::string& name, std::vector<size_t> shape, Vec& p, Vec&) {
        tensors.push_back({name, std::move(shape), std::span<double>(p)});
    });
    nn::save_tensors(path, meta, tensors);
}

GatingModel GatingModel::load(const std::string& path) {
    // First pass over meta to size the model, second pass to fill tensors.
    std::ifstream probe(path);
    if (!probe) throw IoError("cannot open " + path);
    std::string line;
    std::map<std::string, std::string> meta;
    while (std::getline(probe, line)) {
        std::istringstream ss(trim(line));
        std::string tag;
        ss >> tag;
        if (tag != "meta") continue;
        std::string key;
        ss >> key;
        std::string rest;
        std::getline(ss, rest);
        meta[key] = trim(rest);
    }
    for (const char* k : {"features", "weeks", "disc_hidden", "lstm_hidden", "input_gain"})
        if (!meta.count(k)) throw MalformedRow(path + ": missing meta key " + k);

    std::vector<std::string> names;
    for (const auto& n : split(meta["features"], ',')) names.push_back(trim(n));
    GatingModel m = create(names, static_cast<int>(parse_long(meta["weeks"], "weeks")), 0,
                           static_cast<int>(parse_long(meta["disc_hidden"], "disc_hidden")),
                           static_cast<int>(parse_long(meta["lstm_hidden"], "lstm_hidden")),
                           parse_double(meta["input_gain"], "input_gain"));
    std::vector<nn::NamedTensor> tensors;
    m.visit([&](const std::string& name, std::vector<size_t> shape, Vec& p, Vec&) {
        tensors.push_back({name, std::move(shape), std::span<double>(p)});
    });
    nn::load_tensors(path, tensors);
    return m;
}

} // namespace i3c::gating
