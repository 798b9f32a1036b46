#include "mgk/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "mgk/rng.hpp"

namespace mgk::train {

namespace {

constexpr double kPiFloor = 1e-6;
constexpr double kLnEps = 1e-5;

int draw_token(SplitMix64& rng, std::size_t vocab) {
    return static_cast<int>(rng.next_below(vocab));
}

Example recall_example(SplitMix64& rng, const TaskSpec& spec) {
    const std::size_t pairs = (spec.length - 1) / 2;
    Example ex;
    ex.tokens.resize(spec.length);
    std::vector<int> keys(pairs), values(pairs);
    for (std::size_t p = 0; p < pairs; ++p) {
        keys[p] = draw_token(rng, spec.vocab);
        values[p] = draw_token(rng, spec.vocab);
        ex.tokens[2 * p] = keys[p];
        ex.tokens[2 * p + 1] = values[p];
    }
    if (spec.length % 2 == 0) ex.tokens[spec.length - 2] = draw_token(rng, spec.vocab);
    const std::size_t query = rng.next_below(pairs);
    const int query_key = keys[query];
    ex.tokens[spec.length - 1] = query_key;
    for (std::size_t p = 0; p < pairs; ++p)
        if (keys[p] == query_key) ex.label = values[p];
    return ex;
}

Example majority_example(SplitMix64& rng, const TaskSpec& spec) {
    Example ex;
    ex.tokens.resize(spec.length);
    std::vector<std::size_t> counts(spec.vocab, 0);
    for (auto& t : ex.tokens) {
        t = draw_token(rng, spec.vocab);
        ++counts[static_cast<std::size_t>(t)];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < spec.vocab; ++c)
        if (counts[c] > counts[best]) best = c;
    ex.label = static_cast<int>(best);
    return ex;
}

Tensor normal_matrix(std::size_t rows, std::size_t cols, double scale, SplitMix64& rng) {
    Tensor t(rows, cols);
    for (double& v : t.mutable_data()) v = scale * rng.next_normal();
    return t;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const double inv_c = 1.0 / static_cast<double>(x.cols());
    const Tensor mean = mul(row_sums(x), inv_c);
    const Tensor centered = sub(x, mean);
    const Tensor var = mul(row_sums(mul(centered, centered)), inv_c);
    const Tensor normed = div(centered, sqrt(add(var, kLnEps)));
    return add(mul(normed, gain), bias);
}

void collect_head_params(MixtureKeyParams& keys, std::vector<ParamRef>& out) {
    for (auto& w : keys.w_kr) out.push_back({"keys", &w});
    for (auto& b : keys.b_r) out.push_back({"b_r", &b});
    out.push_back({"pi", &keys.pi});
}

Model track_model(Tape& tape, const Model& model) {
    Model t = model;
    t.embedding = tape.leaf(model.embedding);
    t.positional = tape.leaf(model.positional);
    for (auto& block : t.blocks) {
        for (auto& head : block.attn.heads) {
            head.w_q = tape.leaf(head.w_q);
            head.w_v = tape.leaf(head.w_v);
            for (auto& w : head.keys.w_kr) w = tape.leaf(w);
            for (auto& b : head.keys.b_r) b = tape.leaf(b);
            head.keys.pi = tape.leaf(head.keys.pi);
        }
        block.attn.w_o = tape.leaf(block.attn.w_o);
        block.ln1_gain = tape.leaf(block.ln1_gain);
        block.ln1_bias = tape.leaf(block.ln1_bias);
        block.w_ff1 = tape.leaf(block.w_ff1);
        block.b_ff1 = tape.leaf(block.b_ff1);
        block.w_ff2 = tape.leaf(block.w_ff2);
        block.b_ff2 = tape.leaf(block.b_ff2);
        block.ln2_gain = tape.leaf(block.ln2_gain);
        block.ln2_bias = tape.leaf(block.ln2_bias);
    }
    t.w_cls = tape.leaf(model.w_cls);
    t.b_cls = tape.leaf(model.b_cls);
    return t;
}

int argmax_row(const Tensor& row) {
    int best = 0;
    for (std::size_t c = 1; c < row.cols(); ++c)
        if (row.at(0, c) > row.at(0, best)) best = static_cast<int>(c);
    return best;
}

bool uses_mstep_prior(const ModelSpec& spec) {
    return spec.attention.variant == Variant::MGK &&
           spec.attention.estep == EStep::SoftMStepPrior;
}

// Batch responsibility average -> new floored, normalized prior.
void apply_mstep_priors(Model& model, const std::vector<Forward>& forwards) {
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
        auto& heads = model.blocks[l].attn.heads;
        for (std::size_t h = 0; h < heads.size(); ++h) {
            auto& pi = heads[h].keys.pi;
            const std::size_t m = pi.cols();
            std::vector<double> counts(m, 0.0);
            double total = 0.0;
            for (const auto& fw : forwards) {
                const auto& resp = fw.layers[l][h].responsibilities;
                if (!resp) throw contract_error("m-step: responsibilities not materialized");
                for (std::size_t i = 0; i < resp->rows(); ++i)
                    for (std::size_t r = 0; r < m; ++r) {
                        counts[r] += resp->at(i, r);
                        total += resp->at(i, r);
                    }
            }
            if (total <= 0.0) throw numeric_error("m-step: zero responsibility mass");
            double floored_sum = 0.0;
            for (auto& c : counts) {
                c = std::max(c / total, kPiFloor);
                floored_sum += c;
            }
            for (std::size_t r = 0; r < m; ++r) pi.mutable_data()[r] = counts[r] / floored_sum;
        }
    }
}

void floor_learned_priors(Model& model) {
    for (auto& block : model.blocks)
        for (auto& head : block.attn.heads)
            for (double& w : head.keys.pi.mutable_data()) w = std::max(w, kPiFloor);
}

struct AdamState {
    std::vector<double> m, v;
};

}  // namespace

const char* to_string(TaskKind kind) {
    return kind == TaskKind::AssociativeRecall ? "associative-recall" : "majority-class";
}

const char* to_string(Variant v) {
    switch (v) {
        case Variant::Softmax: return "softmax";
        case Variant::Gaussian: return "gaussian";
        case Variant::MGK: return "mgk";
        case Variant::Linear: return "linear";
        case Variant::MLK: return "mlk";
    }
    return "?";
}

const char* to_string(Kernel k) {
    return k == Kernel::DotProduct ? "dot" : "distance";
}

const char* to_string(EStep e) {
    switch (e) {
        case EStep::SoftLearnedPrior: return "soft-learned-prior";
        case EStep::SoftMStepPrior: return "soft-mstep-prior";
        case EStep::HardAssign: return "hard-assign";
    }
    return "?";
}

const char* to_string(KeyMode m) {
    return m == KeyMode::IndependentProjections ? "independent-projections" : "shared-shifted";
}

Dataset generate_task(const TaskSpec& spec) {
    if (spec.vocab < 2)
        throw config_error("task: vocab must be at least 2, got " + std::to_string(spec.vocab));
    if (spec.length < 4)
        throw config_error("task: sequence length must be at least 4, got " +
                           std::to_string(spec.length));
    SplitMix64 rng(spec.seed);
    const auto make = [&] {
        return spec.kind == TaskKind::AssociativeRecall ? recall_example(rng, spec)
                                                        : majority_example(rng, spec);
    };
    Dataset data;
    data.train.reserve(spec.train_examples);
    data.test.reserve(spec.test_examples);
    for (std::size_t i = 0; i < spec.train_examples; ++i) data.train.push_back(make());
    for (std::size_t i = 0; i < spec.test_examples; ++i) data.test.push_back(make());
    return data;
}

void write_token_csv(std::ostream& os, const std::vector<Example>& examples) {
    for (const auto& ex : examples) {
        for (int t : ex.tokens) os << t << ',';
        os << ex.label << '\n';
    }
}

void validate(const ModelSpec& model, const TaskSpec& task) {
    if (task.vocab < 2 || task.length < 4) throw config_error("model: invalid task dimensions");
    if (model.layers < 1) throw config_error("model: need at least one block");
    if (model.width < 1 || model.ffn_hidden < 1) throw config_error("model: zero width");
    mgk::validate(model.attention);
    if (model.attention.d_x != model.width)
        throw config_error("model: attention expects inputs of dim " +
                           std::to_string(model.attention.d_x) + " but the model width is " +
                           std::to_string(model.width));
    const std::size_t concat = model.attention.heads * model.attention.value_dim();
    if (concat != model.width)
        throw config_error("model: heads * value dim (" + std::to_string(concat) +
                           ") must equal the model width (" + std::to_string(model.width) + ")");
}

OptimParams warmup_preset() {
    OptimParams p;
    p.lr = 2.5e-4;
    p.warmup_steps = 2000;
    return p;
}

Model init_model(const ModelSpec& spec, const TaskSpec& task, std::uint64_t seed) {
    validate(spec, task);
    SplitMix64 rng(seed);
    Model model;
    model.spec = spec;
    model.classes = spec.classes == 0 ? task.vocab : spec.classes;
    model.length = task.length;

    const std::size_t width = spec.width;
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(width));
    model.embedding = normal_matrix(task.vocab, width, 0.5, rng);
    model.positional = normal_matrix(task.length, width, 0.1, rng);

    const auto& att = spec.attention;
    const bool mixture = att.variant == Variant::MGK || att.variant == Variant::MLK;
    const std::size_t components = mixture ? att.components : 1;
    for (std::size_t l = 0; l < spec.layers; ++l) {
        Block block;
        for (std::size_t h = 0; h < att.heads; ++h) {
            HeadParams head;
            head.w_q = normal_matrix(att.d, width, w_scale, rng);
            head.w_v = normal_matrix(att.value_dim(), width, w_scale, rng);
            head.keys.mode = att.key_mode;
            head.keys.sigma2 = att.resolved_sigma2();
            if (att.key_mode == KeyMode::IndependentProjections) {
                for (std::size_t r = 0; r < components; ++r)
                    head.keys.w_kr.push_back(normal_matrix(att.d, width, w_scale, rng));
            } else {
                head.keys.w_kr.push_back(normal_matrix(att.d, width, w_scale, rng));
                for (std::size_t r = 0; r < components; ++r)
                    head.keys.b_r.push_back(normal_matrix(1, att.d, 0.1, rng));
            }
            head.keys.pi = Tensor(1, components, 1.0);
            block.attn.heads.push_back(std::move(head));
        }
        const std::size_t concat = att.heads * att.value_dim();
        block.attn.w_o = normal_matrix(concat, concat, w_scale, rng);
        block.ln1_gain = Tensor(1, width, 1.0);
        block.ln1_bias = Tensor(1, width, 0.0);
        block.w_ff1 = normal_matrix(spec.ffn_hidden, width, w_scale, rng);
        block.b_ff1 = Tensor(1, spec.ffn_hidden, 0.0);
        block.w_ff2 = normal_matrix(width, spec.ffn_hidden,
                                    1.0 / std::sqrt(static_cast<double>(spec.ffn_hidden)), rng);
        block.b_ff2 = Tensor(1, width, 0.0);
        block.ln2_gain = Tensor(1, width, 1.0);
        block.ln2_bias = Tensor(1, width, 0.0);
        model.blocks.push_back(std::move(block));
    }
    model.w_cls = normal_matrix(model.classes, width, w_scale, rng);
    model.b_cls = Tensor(1, model.classes, 0.0);
    return model;
}

std::vector<ParamRef> parameters(Model& model) {
    std::vector<ParamRef> out;
    out.push_back({"embedding", &model.embedding});
    out.push_back({"positional", &model.positional});
    for (auto& block : model.blocks) {
        for (auto& head : block.attn.heads) {
            out.push_back({"w_q", &head.w_q});
            out.push_back({"w_v", &head.w_v});
            collect_head_params(head.keys, out);
        }
        out.push_back({"w_o", &block.attn.w_o});
        out.push_back({"ln", &block.ln1_gain});
        out.push_back({"ln", &block.ln1_bias});
        out.push_back({"ffn", &block.w_ff1});
        out.push_back({"ffn", &block.b_ff1});
        out.push_back({"ffn", &block.w_ff2});
        out.push_back({"ffn", &block.b_ff2});
        out.push_back({"ln", &block.ln2_gain});
        out.push_back({"ln", &block.ln2_bias});
    }
    out.push_back({"classifier", &model.w_cls});
    out.push_back({"classifier", &model.b_cls});
    return out;
}

Forward forward_example(const Model& model, const std::vector<int>& tokens) {
    if (tokens.size() != model.length)
        throw shape_error("forward: expected " + std::to_string(model.length) + " tokens, got " +
                          std::to_string(tokens.size()));
    for (int t : tokens)
        if (t < 0 || static_cast<std::size_t>(t) >= model.embedding.rows())
            throw config_error("forward: token " + std::to_string(t) + " outside the vocabulary");

    Forward fw;
    Tensor x = add(select_rows(model.embedding, tokens), model.positional);
    for (const auto& block : model.blocks) {
        MultiHeadResult att = multi_head(x, block.attn, model.spec.attention);
        x = layer_norm(add(x, att.output), block.ln1_gain, block.ln1_bias);
        fw.layers.push_back(std::move(att.heads));
        const Tensor hidden = relu(add(matmul(x, transpose(block.w_ff1)), block.b_ff1));
        const Tensor ff = add(matmul(hidden, transpose(block.w_ff2)), block.b_ff2);
        x = layer_norm(add(x, ff), block.ln2_gain, block.ln2_bias);
    }
    const Tensor pooled = mul(col_sums(x), 1.0 / static_cast<double>(model.length));
    fw.logits = add(matmul(pooled, transpose(model.w_cls)), model.b_cls);
    return fw;
}

EvalResult evaluate(const Model& model, const std::vector<Example>& examples) {
    if (examples.empty()) throw config_error("evaluate: empty dataset");
    double loss = 0.0;
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        const Forward fw = forward_example(model, ex.tokens);
        const Tensor lsm = log_softmax_rows(fw.logits);
        loss -= lsm.at(0, static_cast<std::size_t>(ex.label));
        if (argmax_row(fw.logits) == ex.label) ++correct;
    }
    EvalResult res;
    res.loss = loss / static_cast<double>(examples.size());
    res.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
    return res;
}

TrainReport train_model(Model& model, const Dataset& dataset, std::size_t epochs,
                        const OptimParams& optim, std::uint64_t shuffle_seed) {
    if (dataset.train.empty()) throw config_error("train: empty training set");
    if (optim.batch < 1) throw config_error("train: batch size must be at least 1");
    if (optim.lr < 0.0 || optim.beta1 < 0.0 || optim.beta1 >= 1.0 || optim.beta2 < 0.0 ||
        optim.beta2 >= 1.0 || optim.eps <= 0.0)
        throw config_error("train: invalid optimizer parameters");

    const auto started = std::chrono::steady_clock::now();
    TrainReport report;
    report.model = model.spec;
    report.optim = optim;

    auto params = parameters(model);
    const bool mstep = uses_mstep_prior(model.spec);
    const bool learned_pi = model.spec.attention.variant == Variant::MGK
                                ? model.spec.attention.estep == EStep::SoftLearnedPrior
                                : model.spec.attention.variant == Variant::MLK;
    std::vector<AdamState> state(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        state[p].m.assign(params[p].value->size(), 0.0);
        state[p].v.assign(params[p].value->size(), 0.0);
    }

    SplitMix64 shuffle(shuffle_seed);
    std::vector<std::size_t> order(dataset.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.next_below(i)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += optim.batch) {
            const std::size_t end = std::min(begin + optim.batch, order.size());
            const double batch_size = static_cast<double>(end - begin);

            Tape tape;
            Model tracked = track_model(tape, model);
            auto tracked_params = parameters(tracked);

            const auto diverged = [&](const std::string& cause) {
                report.wall_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                        .count();
                return training_failure("train: non-finite state at epoch " +
                                            std::to_string(epoch) + ", step " +
                                            std::to_string(step) + ": " + cause,
                                        report);
            };

            std::vector<Forward> forwards;
            forwards.reserve(end - begin);
            Tensor loss_total;
            try {
                for (std::size_t i = begin; i < end; ++i) {
                    const Example& ex = dataset.train[order[i]];
                    Forward fw = forward_example(tracked, ex.tokens);
                    const Tensor picked = gather_rowwise(log_softmax_rows(fw.logits), {ex.label});
                    const Tensor neg = mul(picked, -1.0);
                    loss_total = (i == begin) ? neg : add(loss_total, neg);
                    if (argmax_row(fw.logits) == ex.label) ++correct;
                    forwards.push_back(std::move(fw));
                }
            } catch (const numeric_error& e) {
                throw diverged(e.what());
            }
            const Tensor batch_loss = mul(loss_total, 1.0 / batch_size);
            const double loss_value = batch_loss.item();
            if (!std::isfinite(loss_value)) throw diverged("loss is not finite");
            loss_sum += loss_value * batch_size;
            tape.backward(batch_loss);

            ++step;
            double lr = optim.lr;
            if (optim.warmup_steps > 0)
                lr *= std::min(1.0, static_cast<double>(step) /
                                        static_cast<double>(optim.warmup_steps));
            const double corr1 = 1.0 - std::pow(optim.beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(optim.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < params.size(); ++p) {
                if (mstep && params[p].group == "pi") continue;
                const Tensor g = tape.grad(*tracked_params[p].value);
                auto& data = params[p].value->mutable_data();
                auto& st = state[p];
                for (std::size_t e = 0; e < data.size(); ++e) {
                    const double grad = g.data()[e];
                    st.m[e] = optim.beta1 * st.m[e] + (1.0 - optim.beta1) * grad;
                    st.v[e] = optim.beta2 * st.v[e] + (1.0 - optim.beta2) * grad * grad;
                    const double mhat = st.m[e] / corr1;
                    const double vhat = st.v[e] / corr2;
                    data[e] -= lr * mhat / (std::sqrt(vhat) + optim.eps);
                }
            }
            // At zero learning rate the whole step is a no-op, prior updates
            // included, so frozen runs really are frozen.
            if (optim.lr != 0.0) {
                if (mstep) apply_mstep_priors(model, forwards);
                if (learned_pi) floor_learned_priors(model);
            }
        }
        EpochStats stats;
        stats.loss = loss_sum / static_cast<double>(order.size());
        stats.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        report.epochs.push_back(stats);
    }

    if (!dataset.test.empty()) {
        const EvalResult res = evaluate(model, dataset.test);
        report.test_loss = res.loss;
        report.test_accuracy = res.accuracy;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

TrainReport train(const ModelSpec& model, const TaskSpec& task, std::size_t epochs,
                  const OptimParams& optim, Model* trained, Dataset* data_out) {
    validate(model, task);
    Dataset data = generate_task(task);
    Model net = init_model(model, task, task.seed ^ 0x9e3779b97f4a7c15ull);
    TrainReport report = train_model(net, data, epochs, optim, task.seed ^ 0x5851f42d4c957f2dull);
    report.task = task;
    report.seed = task.seed;
    if (trained) *trained = std::move(net);
    if (data_out) *data_out = std::move(data);
    return report;
}

TrainReport train(const ModelSpec& model, const TaskSpec& task, std::size_t epochs,
                  const OptimParams& optim) {
    return train(model, task, epochs, optim, nullptr, nullptr);
}

namespace {

nlohmann::json attention_json(const AttentionConfig& cfg) {
    return {{"variant", to_string(cfg.variant)},
            {"heads", cfg.heads},
            {"components", cfg.components},
            {"d", cfg.d},
            {"d_x", cfg.d_x},
            {"d_v", cfg.value_dim()},
            {"kernel", to_string(cfg.kernel)},
            {"estep", to_string(cfg.estep)},
            {"key_mode", to_string(cfg.key_mode)},
            {"causal", cfg.causal},
            {"sigma2", cfg.resolved_sigma2()}};
}

}  // namespace

nlohmann::json payload_json(const TrainReport& report) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : report.epochs)
        epochs.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
    return {{"task",
             {{"kind", to_string(report.task.kind)},
              {"vocab", report.task.vocab},
              {"length", report.task.length},
              {"train_examples", report.task.train_examples},
              {"test_examples", report.task.test_examples},
              {"seed", report.task.seed}}},
            {"model",
             {{"layers", report.model.layers},
              {"width", report.model.width},
              {"ffn_hidden", report.model.ffn_hidden},
              {"classes", report.model.classes},
              {"attention", attention_json(report.model.attention)}}},
            {"optim",
             {{"lr", report.optim.lr},
              {"beta1", report.optim.beta1},
              {"beta2", report.optim.beta2},
              {"eps", report.optim.eps},
              {"warmup_steps", report.optim.warmup_steps},
              {"batch", report.optim.batch}}},
            {"seed", report.seed},
            {"epochs", epochs},
            {"test", {{"loss", report.test_loss}, {"accuracy", report.test_accuracy}}}};
}

nlohmann::json meta_json(const TrainReport& report) {
    return {{"wall_seconds", report.wall_seconds}};
}

Tensor tokens_tensor(const Example& example) {
    Tensor t(1, example.tokens.size());
    for (std::size_t i = 0; i < example.tokens.size(); ++i)
        t.mutable_data()[i] = static_cast<double>(example.tokens[i]);
    return t;
}

diag::ScoreSource model_score_source(const Model& model) {
    return [model](const Tensor& row) {
        std::vector<int> tokens(row.cols());
        for (std::size_t i = 0; i < row.cols(); ++i)
            tokens[i] = static_cast<int>(std::lround(row.at(0, i)));
        const Forward fw = forward_example(model, tokens);
        std::vector<std::vector<Tensor>> grid;
        grid.reserve(fw.layers.size());
        for (const auto& layer : fw.layers) {
            std::vector<Tensor> heads;
            heads.reserve(layer.size());
            for (const auto& head : layer) {
                if (!head.scores)
                    throw contract_error("score source: variant does not materialize scores");
                heads.push_back(*head.scores);
            }
            grid.push_back(std::move(heads));
        }
        return grid;
    };
}

}  // namespace mgk::train
