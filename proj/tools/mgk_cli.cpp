// Batch experiment runner: one JSON config in, reports and CSVs out.
//
// Commands: train, sweep-complexity, diagnose, gradcheck, equivalence.
// Exit codes: 0 success, 1 config or validation error, 2 runtime failure.
// Report payloads are deterministic for a fixed config and seed; wall time
// and write timestamps live in the per-command *_meta.json files.
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mgk/attention.hpp"
#include "mgk/complexity.hpp"
#include "mgk/diagnostics.hpp"
#include "mgk/errors.hpp"
#include "mgk/gradcheck.hpp"
#include "mgk/reference.hpp"
#include "mgk/rng.hpp"
#include "mgk/tensor.hpp"
#include "mgk/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string field_path(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

void check_fields(const json& obj, const std::string& where,
                  const std::vector<std::string>& required,
                  const std::vector<std::string>& optional) {
    const std::string label = where.empty() ? "config" : "config: \"" + where + "\"";
    if (!obj.is_object()) throw mgk::config_error(label + " must be a JSON object");
    for (const auto& item : obj.items()) {
        const std::string& key = item.key();
        bool known = false;
        for (const auto& r : required) known = known || key == r;
        for (const auto& o : optional) known = known || key == o;
        if (!known)
            throw mgk::config_error("config: unknown field \"" + field_path(where, key) + "\"");
    }
    for (const auto& r : required)
        if (!obj.contains(r))
            throw mgk::config_error("config: missing required field \"" + field_path(where, r) +
                                    "\"");
}

const json* find(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

std::uint64_t get_u64(const json& obj, const std::string& where, const std::string& key,
                      std::uint64_t dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number_unsigned())
        throw mgk::config_error("config: field \"" + field_path(where, key) +
                                "\" must be a non-negative integer");
    return v->get<std::uint64_t>();
}

std::size_t get_size(const json& obj, const std::string& where, const std::string& key,
                     std::size_t dflt) {
    return static_cast<std::size_t>(get_u64(obj, where, key, dflt));
}

double get_double(const json& obj, const std::string& where, const std::string& key, double dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_number())
        throw mgk::config_error("config: field \"" + field_path(where, key) +
                                "\" must be a number");
    return v->get<double>();
}

bool get_bool(const json& obj, const std::string& where, const std::string& key, bool dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_boolean())
        throw mgk::config_error("config: field \"" + field_path(where, key) +
                                "\" must be a boolean");
    return v->get<bool>();
}

std::string get_string(const json& obj, const std::string& where, const std::string& key,
                       const std::string& dflt) {
    const json* v = find(obj, key);
    if (!v) return dflt;
    if (!v->is_string())
        throw mgk::config_error("config: field \"" + field_path(where, key) +
                                "\" must be a string");
    return v->get<std::string>();
}

std::vector<mgk::complexity::Count> get_count_list(const json& obj, const std::string& key) {
    const json* v = find(obj, key);
    if (!v || !v->is_array())
        throw mgk::config_error("config: field \"" + key + "\" must be an array of integers");
    std::vector<mgk::complexity::Count> out;
    for (const auto& e : *v) {
        if (!e.is_number_unsigned())
            throw mgk::config_error("config: field \"" + key +
                                    "\" must contain non-negative integers");
        out.push_back(static_cast<mgk::complexity::Count>(e.get<std::uint64_t>()));
    }
    return out;
}

[[noreturn]] void bad_enum(const std::string& path, const std::string& allowed) {
    throw mgk::config_error("config: field \"" + path + "\" must be one of " + allowed);
}

mgk::train::TaskKind parse_kind(const std::string& s, const std::string& path) {
    if (s == "associative-recall") return mgk::train::TaskKind::AssociativeRecall;
    if (s == "majority-class") return mgk::train::TaskKind::MajorityClass;
    bad_enum(path, "\"associative-recall\", \"majority-class\"");
}

mgk::Variant parse_variant(const std::string& s, const std::string& path) {
    if (s == "softmax") return mgk::Variant::Softmax;
    if (s == "gaussian") return mgk::Variant::Gaussian;
    if (s == "mgk") return mgk::Variant::MGK;
    if (s == "linear") return mgk::Variant::Linear;
    if (s == "mlk") return mgk::Variant::MLK;
    bad_enum(path, "\"softmax\", \"gaussian\", \"mgk\", \"linear\", \"mlk\"");
}

mgk::Kernel parse_kernel(const std::string& s, const std::string& path) {
    if (s == "dot") return mgk::Kernel::DotProduct;
    if (s == "distance") return mgk::Kernel::GaussianDistance;
    bad_enum(path, "\"dot\", \"distance\"");
}

mgk::EStep parse_estep(const std::string& s, const std::string& path) {
    if (s == "soft-learned-prior") return mgk::EStep::SoftLearnedPrior;
    if (s == "soft-mstep-prior") return mgk::EStep::SoftMStepPrior;
    if (s == "hard-assign") return mgk::EStep::HardAssign;
    bad_enum(path, "\"soft-learned-prior\", \"soft-mstep-prior\", \"hard-assign\"");
}

mgk::KeyMode parse_key_mode(const std::string& s, const std::string& path) {
    if (s == "independent-projections") return mgk::KeyMode::IndependentProjections;
    if (s == "shared-shifted") return mgk::KeyMode::SharedShifted;
    bad_enum(path, "\"independent-projections\", \"shared-shifted\"");
}

mgk::train::TaskSpec parse_task(const json& obj, std::uint64_t seed) {
    check_fields(obj, "task", {}, {"kind", "vocab", "length", "train_examples", "test_examples"});
    mgk::train::TaskSpec t;
    t.kind = parse_kind(get_string(obj, "task", "kind", "associative-recall"), "task.kind");
    t.vocab = get_size(obj, "task", "vocab", t.vocab);
    t.length = get_size(obj, "task", "length", t.length);
    t.train_examples = get_size(obj, "task", "train_examples", t.train_examples);
    t.test_examples = get_size(obj, "task", "test_examples", t.test_examples);
    t.seed = seed;
    return t;
}

mgk::AttentionConfig parse_attention(const json& obj, std::size_t width) {
    const std::string w = "model.attention";
    check_fields(obj, w, {},
                 {"variant", "heads", "components", "d", "d_x", "d_v", "kernel", "estep",
                  "key_mode", "causal", "sigma2"});
    mgk::AttentionConfig a;
    a.variant = parse_variant(get_string(obj, w, "variant", "mgk"), w + ".variant");
    a.heads = get_size(obj, w, "heads", 1);
    const bool mixture = a.variant == mgk::Variant::MGK || a.variant == mgk::Variant::MLK;
    a.components = get_size(obj, w, "components", mixture ? 2 : 1);
    const std::size_t d_default =
        (a.heads > 0 && width % a.heads == 0) ? width / a.heads : std::size_t{8};
    a.d = get_size(obj, w, "d", d_default);
    a.d_x = get_size(obj, w, "d_x", width);
    a.d_v = get_size(obj, w, "d_v", 0);
    a.kernel = parse_kernel(get_string(obj, w, "kernel", "distance"), w + ".kernel");
    a.estep = parse_estep(get_string(obj, w, "estep", "soft-learned-prior"), w + ".estep");
    a.key_mode = parse_key_mode(
        get_string(obj, w, "key_mode", "independent-projections"), w + ".key_mode");
    a.causal = get_bool(obj, w, "causal", false);
    if (const json* v = find(obj, "sigma2")) {
        if (!v->is_array())
            throw mgk::config_error("config: field \"" + w +
                                    ".sigma2\" must be an array of numbers");
        for (const auto& e : *v) {
            if (!e.is_number())
                throw mgk::config_error("config: field \"" + w +
                                        ".sigma2\" must contain numbers");
            a.sigma2.push_back(e.get<double>());
        }
    }
    return a;
}

mgk::train::ModelSpec parse_model(const json& obj) {
    check_fields(obj, "model", {}, {"layers", "width", "ffn_hidden", "classes", "attention"});
    mgk::train::ModelSpec m;
    m.layers = get_size(obj, "model", "layers", m.layers);
    m.width = get_size(obj, "model", "width", m.width);
    m.ffn_hidden = get_size(obj, "model", "ffn_hidden", m.ffn_hidden);
    m.classes = get_size(obj, "model", "classes", m.classes);
    const json* att = find(obj, "attention");
    m.attention = parse_attention(att ? *att : json::object(), m.width);
    return m;
}

mgk::train::OptimParams parse_optim(const json& obj) {
    check_fields(obj, "optim", {},
                 {"preset", "lr", "beta1", "beta2", "eps", "warmup_steps", "batch"});
    mgk::train::OptimParams o;
    const std::string preset = get_string(obj, "optim", "preset", "");
    if (preset == "warmup")
        o = mgk::train::warmup_preset();
    else if (!preset.empty())
        bad_enum("optim.preset", "\"warmup\"");
    o.lr = get_double(obj, "optim", "lr", o.lr);
    o.beta1 = get_double(obj, "optim", "beta1", o.beta1);
    o.beta2 = get_double(obj, "optim", "beta2", o.beta2);
    o.eps = get_double(obj, "optim", "eps", o.eps);
    o.warmup_steps = get_size(obj, "optim", "warmup_steps", o.warmup_steps);
    o.batch = get_size(obj, "optim", "batch", o.batch);
    return o;
}

std::string now_utc() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sig17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw mgk::io_error("cannot open '" + path.string() + "' for writing");
    os << content;
    os.flush();
    if (!os) throw mgk::io_error("failed writing '" + path.string() + "'");
}

void report_written(const std::vector<fs::path>& paths) {
    for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
}

json tensor_json(const mgk::Tensor& t) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
        rows.push_back(row);
    }
    return rows;
}

// ---- commands ----

int cmd_train(const json& cfg, const fs::path& out, std::uint64_t seed) {
    check_fields(cfg, "", {"command", "seed", "task", "model"},
                 {"out", "optim", "epochs", "export_dataset"});
    const mgk::train::TaskSpec task = parse_task(cfg.at("task"), seed);
    const mgk::train::ModelSpec model = parse_model(cfg.at("model"));
    const json* opt = find(cfg, "optim");
    const mgk::train::OptimParams optim =
        opt ? parse_optim(*opt) : mgk::train::OptimParams{};
    const std::size_t epochs = get_size(cfg, "", "epochs", 10);
    const bool export_dataset = get_bool(cfg, "", "export_dataset", false);

    mgk::train::Dataset data;
    const mgk::train::TrainReport report =
        mgk::train::train(model, task, epochs, optim, nullptr, &data);

    std::vector<fs::path> written;
    write_text(out / "train_report.json", mgk::train::payload_json(report).dump(2) + "\n");
    written.push_back(out / "train_report.json");

    json meta = mgk::train::meta_json(report);
    meta["written_at"] = now_utc();
    write_text(out / "train_meta.json", meta.dump(2) + "\n");
    written.push_back(out / "train_meta.json");

    if (export_dataset) {
        std::ostringstream tr, te;
        mgk::train::write_token_csv(tr, data.train);
        mgk::train::write_token_csv(te, data.test);
        write_text(out / "dataset_train.csv", tr.str());
        write_text(out / "dataset_test.csv", te.str());
        written.push_back(out / "dataset_train.csv");
        written.push_back(out / "dataset_test.csv");
    }

    std::cout << "train: " << report.epochs.size() << " epochs";
    if (!report.epochs.empty())
        std::cout << ", loss " << report.epochs.front().loss << " -> "
                  << report.epochs.back().loss;
    std::cout << ", test accuracy " << report.test_accuracy << "\n";
    report_written(written);
    return 0;
}

int cmd_sweep(const json& cfg, const fs::path& out) {
    check_fields(cfg, "", {"command", "seed", "ns", "ds", "h", "d_x", "m"},
                 {"out", "instrumented"});
    const auto ns = get_count_list(cfg, "ns");
    const auto ds = get_count_list(cfg, "ds");
    const auto h = static_cast<mgk::complexity::Count>(get_u64(cfg, "", "h", 0));
    const auto d_x = static_cast<mgk::complexity::Count>(get_u64(cfg, "", "d_x", 0));
    const auto m = static_cast<mgk::complexity::Count>(get_u64(cfg, "", "m", 0));
    const bool instrumented = get_bool(cfg, "", "instrumented", false);

    const auto rows = mgk::complexity::ratio_sweep(ns, ds, h, d_x, m, instrumented);
    std::ostringstream csv;
    mgk::complexity::write_csv(csv, rows);
    write_text(out / "complexity.csv", csv.str());
    write_text(out / "complexity_meta.json",
               json{{"written_at", now_utc()}}.dump(2) + "\n");

    std::cout << "sweep-complexity: " << rows.size() << " rows\n";
    report_written({out / "complexity.csv", out / "complexity_meta.json"});
    return 0;
}

int cmd_diagnose(const json& cfg, const fs::path& out, std::uint64_t seed) {
    check_fields(cfg, "", {"command", "seed", "task", "model"},
                 {"out", "optim", "epochs", "count", "threshold", "example"});
    const mgk::train::TaskSpec task = parse_task(cfg.at("task"), seed);
    const mgk::train::ModelSpec model = parse_model(cfg.at("model"));
    const json* opt = find(cfg, "optim");
    const mgk::train::OptimParams optim =
        opt ? parse_optim(*opt) : mgk::train::OptimParams{};
    const std::size_t epochs = get_size(cfg, "", "epochs", 0);
    const std::size_t count = get_size(cfg, "", "count", 32);
    const double threshold = get_double(cfg, "", "threshold", 1e-6);
    const std::size_t example = get_size(cfg, "", "example", 0);

    mgk::train::Model net;
    mgk::train::Dataset data;
    const mgk::train::TrainReport report =
        mgk::train::train(model, task, epochs, optim, &net, &data);
    const auto& pool = data.test.empty() ? data.train : data.test;
    if (example >= pool.size())
        throw mgk::config_error("config: field \"example\" is out of range (have " +
                                std::to_string(pool.size()) + " examples)");

    std::vector<mgk::Tensor> sample;
    sample.reserve(pool.size());
    for (const auto& ex : pool) sample.push_back(mgk::train::tokens_tensor(ex));
    const mgk::diag::ScoreSource source = mgk::train::model_score_source(net);

    const auto histograms = mgk::diag::rank_distribution(source, sample, count, threshold, seed);
    std::ostringstream ranks;
    mgk::diag::write_rank_report(ranks, histograms);
    std::vector<fs::path> written;
    write_text(out / "rank_report.json", ranks.str());
    written.push_back(out / "rank_report.json");

    const auto grid = source(sample[example]);
    json layers = json::array();
    for (std::size_t l = 0; l < grid.size(); ++l) {
        if (grid[l].size() < 2) continue;
        layers.push_back(
            {{"layer", l}, {"mean_abs_diff", tensor_json(mgk::diag::head_similarity(grid[l]))}});
    }
    const json similarity = {{"example", example}, {"layers", layers}};
    write_text(out / "head_similarity.json", similarity.dump(2) + "\n");
    written.push_back(out / "head_similarity.json");

    for (std::size_t l = 0; l < grid.size(); ++l) {
        for (std::size_t h = 0; h < grid[l].size(); ++h) {
            mgk::AttentionOutput head;
            head.scores = grid[l][h];
            const fs::path p = out / ("attention_l" + std::to_string(l) + "_head" +
                                      std::to_string(h) + ".csv");
            mgk::diag::dump_attention(head, p.string());
            written.push_back(p);
        }
    }

    if (epochs > 0) {
        write_text(out / "train_report.json", mgk::train::payload_json(report).dump(2) + "\n");
        written.push_back(out / "train_report.json");
    }
    json meta = {{"written_at", now_utc()}, {"wall_seconds", report.wall_seconds}};
    write_text(out / "diagnose_meta.json", meta.dump(2) + "\n");
    written.push_back(out / "diagnose_meta.json");

    std::cout << "diagnose: " << histograms.size() << " rank histograms over " << count
              << " draws\n";
    report_written(written);
    return 0;
}

int cmd_gradcheck(const json& cfg, const fs::path& out, std::uint64_t seed) {
    check_fields(cfg, "", {"command", "seed"}, {"out", "tolerance"});
    const double tolerance = get_double(cfg, "", "tolerance", 1e-4);
    if (!(tolerance > 0.0))
        throw mgk::config_error("config: field \"tolerance\" must be positive");

    const auto rows = mgk::standard_gradcheck(seed);
    json results = json::array();
    bool all_pass = true;
    double worst = 0.0;
    for (const auto& r : rows) {
        results.push_back({{"variant", r.variant},
                           {"group", r.group},
                           {"max_rel_error", r.max_rel_error}});
        all_pass = all_pass && r.max_rel_error < tolerance;
        worst = std::max(worst, r.max_rel_error);
    }
    const json payload = {{"seed", seed},
                          {"tolerance", tolerance},
                          {"all_pass", all_pass},
                          {"results", results}};
    write_text(out / "gradcheck_report.json", payload.dump(2) + "\n");
    write_text(out / "gradcheck_meta.json",
               json{{"written_at", now_utc()}}.dump(2) + "\n");

    std::cout << "gradcheck: " << rows.size() << " parameter groups, max relative error "
              << sig17(worst) << ", all under " << tolerance << ": "
              << (all_pass ? "yes" : "NO") << "\n";
    report_written({out / "gradcheck_report.json", out / "gradcheck_meta.json"});
    return 0;
}

// ---- equivalence checks ----

mgk::Tensor rand_mat(std::size_t rows, std::size_t cols, double scale, mgk::SplitMix64& rng) {
    mgk::Tensor t(rows, cols);
    for (double& v : t.mutable_data()) v = scale * rng.next_normal();
    return t;
}

mgk::Tensor rand_unit_rows(std::size_t rows, std::size_t cols, mgk::SplitMix64& rng) {
    mgk::Tensor t = rand_mat(rows, cols, 1.0, rng);
    auto& data = t.mutable_data();
    for (std::size_t i = 0; i < rows; ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < cols; ++j) norm += data[i * cols + j] * data[i * cols + j];
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            data[i * cols] = 1.0;
            norm = 1.0;
        }
        for (std::size_t j = 0; j < cols; ++j) data[i * cols + j] /= norm;
    }
    return t;
}

double max_abs_diff(const mgk::Tensor& a, const mgk::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

double max_rel_diff(const mgk::Tensor& a, const mgk::Tensor& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double denom = std::max(std::abs(b.data()[i]), 1e-12);
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / denom);
    }
    return worst;
}

struct EqCheck {
    std::string name;
    double tolerance = 0.0;
    double deviation = 0.0;
};

// Unit-normalized inputs, one component, sigma2 = sqrt(D): mixture scores
// must reproduce plain softmax scores. `perturb` scales sigma2 away from the
// identity point as a negative control.
EqCheck check_reduction(std::size_t instances, std::size_t n, std::size_t d, double perturb,
                        mgk::SplitMix64& rng) {
    EqCheck c{"reduction-identity", 1e-12, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
        const bool causal = i % 2 == 1;
        const mgk::Tensor q = rand_unit_rows(n, d, rng);
        const mgk::Tensor k = rand_unit_rows(n, d, rng);
        const mgk::Tensor v = rand_mat(n, d, 1.0, rng);
        const auto soft = mgk::softmax_attention(q, k, v, causal);
        const std::vector<double> sigma2 = {std::sqrt(static_cast<double>(d)) *
                                            (1.0 + perturb)};
        const auto mix =
            mgk::mgk_attention(q, {k}, v, mgk::Tensor(1, 1, 1.0), sigma2,
                               mgk::EStep::SoftLearnedPrior, mgk::Kernel::GaussianDistance,
                               causal);
        c.deviation = std::max(c.deviation, max_abs_diff(*soft.scores, *mix.scores));
    }
    return c;
}

// One-component mixtures must collapse onto the single-kernel variants:
// MGK(M=1) onto Gaussian scores, MLK(M=1) onto linear outputs.
EqCheck check_nesting(std::size_t instances, std::size_t n, std::size_t d,
                      mgk::SplitMix64& rng) {
    EqCheck c{"nesting", 1e-12, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
        const bool causal = i % 2 == 1;
        const mgk::Tensor q = rand_mat(n, d, 0.8, rng);
        const mgk::Tensor k = rand_mat(n, d, 0.8, rng);
        const mgk::Tensor v = rand_mat(n, d, 1.0, rng);
        const double sigma2 = 0.5 + 2.0 * rng.next_double();
        const auto gauss = mgk::gaussian_attention(q, k, v, sigma2, causal);
        const auto mix =
            mgk::mgk_attention(q, {k}, v, mgk::Tensor(1, 1, 1.0), {sigma2},
                               mgk::EStep::SoftLearnedPrior, mgk::Kernel::GaussianDistance,
                               causal);
        c.deviation = std::max(c.deviation, max_abs_diff(*gauss.scores, *mix.scores));

        const auto lin = mgk::linear_attention(q, k, v, causal);
        const auto mlk = mgk::mlk_attention(q, {k}, v, mgk::Tensor(1, 1, 1.0), causal);
        c.deviation = std::max(c.deviation, max_abs_diff(lin.output, mlk.output));
    }
    return c;
}

// Separated lattice keys and a vanishing variance collapse both the soft and
// the hard mixture onto the same nearest-key attention.
EqCheck check_hard_soft(std::size_t instances, std::size_t n, std::size_t d,
                        mgk::SplitMix64& rng) {
    EqCheck c{"hard-soft-limit", 1e-6, 0.0};
    const std::size_t m = 2;
    for (std::size_t i = 0; i < instances; ++i) {
        const bool causal = i % 2 == 1;
        std::vector<mgk::Tensor> keys;
        for (std::size_t r = 0; r < m; ++r) {
            mgk::Tensor k(n, d);
            for (std::size_t j = 0; j < n; ++j)
                k.mutable_data()[j * d] = 1.5 * static_cast<double>(j * m + r);
            keys.push_back(k);
        }
        const mgk::Tensor q = rand_mat(n, d, 2.0, rng);
        const mgk::Tensor v = rand_mat(n, d, 1.0, rng);
        mgk::Tensor pi(1, m);
        for (double& p : pi.mutable_data()) p = 0.5 + rng.next_double();
        const std::vector<double> sigma2(m, 1e-6);
        const auto soft =
            mgk::mgk_attention(q, keys, v, pi, sigma2, mgk::EStep::SoftLearnedPrior,
                               mgk::Kernel::GaussianDistance, causal);
        const auto hard = mgk::mgk_attention(q, keys, v, pi, sigma2, mgk::EStep::HardAssign,
                                             mgk::Kernel::GaussianDistance, causal);
        c.deviation = std::max(c.deviation, max_abs_diff(*soft.scores, *hard.scores));
    }
    return c;
}

// Factorized linear-time mixture outputs against the direct quadratic-form
// oracle, relative per entry.
EqCheck check_mlk_quadratic(std::size_t instances, std::size_t n, std::size_t d,
                            mgk::SplitMix64& rng) {
    EqCheck c{"mlk-quadratic", 1e-10, 0.0};
    const std::size_t m = 2;
    for (std::size_t i = 0; i < instances; ++i) {
        const bool causal = i % 2 == 1;
        const mgk::Tensor q = rand_mat(n, d, 0.8, rng);
        const mgk::Tensor v = rand_mat(n, d, 1.0, rng);
        std::vector<mgk::Tensor> keys;
        for (std::size_t r = 0; r < m; ++r) keys.push_back(rand_mat(n, d, 0.8, rng));
        mgk::Tensor pi(1, m);
        std::vector<double> pi_values;
        for (double& p : pi.mutable_data()) {
            p = 0.5 + rng.next_double();
            pi_values.push_back(p);
        }
        const auto fast = mgk::mlk_attention(q, keys, v, pi, causal);
        const mgk::Tensor direct = mgk::ref::mlk_attention_quadratic(q, keys, v, pi_values,
                                                                     causal);
        c.deviation = std::max(c.deviation, max_rel_diff(fast.output, direct));
    }
    return c;
}

int cmd_equivalence(const json& cfg, const fs::path& out, std::uint64_t seed) {
    check_fields(cfg, "", {"command", "seed"},
                 {"out", "instances", "n", "d", "perturb_sigma2"});
    const std::size_t instances = get_size(cfg, "", "instances", 20);
    const std::size_t n = get_size(cfg, "", "n", 16);
    const std::size_t d = get_size(cfg, "", "d", 8);
    const double perturb = get_double(cfg, "", "perturb_sigma2", 0.0);
    if (instances < 1) throw mgk::config_error("config: field \"instances\" must be positive");
    if (n < 2 || d < 1)
        throw mgk::config_error("config: fields \"n\" and \"d\" are too small");
    if (perturb <= -1.0)
        throw mgk::config_error("config: field \"perturb_sigma2\" must exceed -1");

    mgk::SplitMix64 rng(seed);
    std::vector<EqCheck> checks;
    checks.push_back(check_reduction(instances, n, d, perturb, rng));
    checks.push_back(check_nesting(instances, n, d, rng));
    checks.push_back(check_hard_soft(instances, n, d, rng));
    checks.push_back(check_mlk_quadratic(instances, n, d, rng));

    json rows = json::array();
    bool all_pass = true;
    for (const auto& c : checks) {
        const bool pass = c.deviation <= c.tolerance;
        all_pass = all_pass && pass;
        rows.push_back({{"name", c.name},
                        {"tolerance", c.tolerance},
                        {"max_deviation", c.deviation},
                        {"max_deviation_str", sig17(c.deviation)},
                        {"pass", pass}});
        std::cout << (pass ? "PASS" : "FAIL") << " " << c.name << ": max deviation "
                  << sig17(c.deviation) << " (tolerance " << c.tolerance << ")\n";
    }
    const json payload = {{"seed", seed},       {"instances", instances},
                          {"n", n},             {"d", d},
                          {"perturb_sigma2", perturb}, {"all_pass", all_pass},
                          {"checks", rows}};
    write_text(out / "equivalence_report.json", payload.dump(2) + "\n");
    write_text(out / "equivalence_meta.json",
               json{{"written_at", now_utc()}}.dump(2) + "\n");

    std::cout << (all_pass ? "all equivalence checks pass"
                           : "equivalence check failures recorded")
              << "\n";
    report_written({out / "equivalence_report.json", out / "equivalence_meta.json"});
    return 0;
}

int run(const std::string& config_path, const std::string& out_flag, bool seed_given,
        std::uint64_t seed_flag) {
    std::ifstream is(config_path, std::ios::binary);
    if (!is) throw mgk::config_error("config: cannot read file '" + config_path + "'");
    json cfg;
    try {
        cfg = json::parse(is);
    } catch (const json::parse_error& e) {
        throw mgk::config_error(std::string("config: ") + e.what());
    }
    if (!cfg.is_object()) throw mgk::config_error("config: top level must be a JSON object");
    if (!cfg.contains("command"))
        throw mgk::config_error("config: missing required field \"command\"");
    if (!cfg.contains("seed"))
        throw mgk::config_error("config: missing required field \"seed\"");
    const std::string command = get_string(cfg, "", "command", "");
    std::uint64_t seed = get_u64(cfg, "", "seed", 0);
    if (seed_given) seed = seed_flag;

    fs::path out = out_flag.empty() ? fs::path(get_string(cfg, "", "out", "out"))
                                    : fs::path(out_flag);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw mgk::io_error("cannot create output directory '" + out.string() + "': " +
                                ec.message());

    if (command == "train") return cmd_train(cfg, out, seed);
    if (command == "sweep-complexity") return cmd_sweep(cfg, out);
    if (command == "diagnose") return cmd_diagnose(cfg, out, seed);
    if (command == "gradcheck") return cmd_gradcheck(cfg, out, seed);
    if (command == "equivalence") return cmd_equivalence(cfg, out, seed);
    throw mgk::config_error(
        "config: field \"command\" must be one of \"train\", \"sweep-complexity\", "
        "\"diagnose\", \"gradcheck\", \"equivalence\"");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-Gaussian-keys attention experiments"};
    std::string config_path;
    std::string out_flag;
    std::uint64_t seed_flag = 0;
    app.add_option("--config", config_path, "JSON experiment config")->required();
    auto* out_opt = app.add_option("--out", out_flag, "output directory (overrides config)");
    auto* seed_opt = app.add_option("--seed", seed_flag, "seed (overrides config)");
    (void)out_opt;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        return run(config_path, out_flag, seed_opt->count() > 0, seed_flag);
    } catch (const mgk::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const mgk::shape_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const mgk::contract_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
