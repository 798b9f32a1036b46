// Desk-scale training: deterministic synthetic classification tasks, a small
// post-norm transformer over any attention variant, an Adam loop, and
// evaluation. Everything is seeded and single-threaded so identical specs
// reproduce identical reports bit for bit.
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgk/attention.hpp"
#include "mgk/diagnostics.hpp"
#include "mgk/errors.hpp"
#include "mgk/tensor.hpp"

namespace mgk::train {

enum class TaskKind { AssociativeRecall, MajorityClass };

struct TaskSpec {
    TaskKind kind = TaskKind::AssociativeRecall;
    std::size_t vocab = 16;
    std::size_t length = 64;  // sequence length N
    std::size_t train_examples = 512;
    std::size_t test_examples = 128;
    std::uint64_t seed = 42;
};

struct Example {
    std::vector<int> tokens;  // length N, all in [0, vocab)
    int label = 0;
};

struct Dataset {
    std::vector<Example> train;
    std::vector<Example> test;
};

// AssociativeRecall: (key, value) token pairs followed by a trailing query
// key drawn from the keys present; label = the value of the last pair
// carrying the query key. MajorityClass: iid tokens; label = the most
// frequent token, ties to the smallest. One splitmix64 stream per dataset.
Dataset generate_task(const TaskSpec& spec);

// One line per example: the N tokens then the label, comma-separated.
void write_token_csv(std::ostream& os, const std::vector<Example>& examples);

struct ModelSpec {
    std::size_t layers = 2;
    std::size_t width = 64;       // embedding dim; must equal heads * head value dim
    std::size_t ffn_hidden = 128;
    std::size_t classes = 0;      // 0 = task vocab
    AttentionConfig attention;    // attention.d_x must equal width
};

void validate(const ModelSpec& model, const TaskSpec& task);

struct OptimParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t warmup_steps = 0;  // linear warm-up on the learning rate
    std::size_t batch = 32;
};

// Learning rate 2.5e-4 with 2000 warm-up steps.
OptimParams warmup_preset();

struct Block {
    ProjectionParams attn;
    Tensor ln1_gain, ln1_bias;  // 1 x width
    Tensor w_ff1, b_ff1;        // hidden x width, 1 x hidden
    Tensor w_ff2, b_ff2;        // width x hidden, 1 x width
    Tensor ln2_gain, ln2_bias;  // 1 x width
};

struct Model {
    ModelSpec spec;
    std::size_t classes = 0;
    std::size_t length = 0;
    Tensor embedding;   // vocab x width
    Tensor positional;  // length x width
    std::vector<Block> blocks;
    Tensor w_cls;  // classes x width
    Tensor b_cls;  // 1 x classes
};

Model init_model(const ModelSpec& spec, const TaskSpec& task, std::uint64_t seed);

// Named parameter groups in a fixed traversal order; `value` points into the
// model. Group names: embedding, positional, w_q, w_v, keys, b_r, pi, w_o,
// ln, ffn, classifier.
struct ParamRef {
    std::string group;
    Tensor* value = nullptr;
};
std::vector<ParamRef> parameters(Model& model);

// Forward pass over one token sequence. `layers[l]` holds the per-head
// attention outputs of block l (scores, responsibilities).
struct Forward {
    Tensor logits;  // 1 x classes
    std::vector<std::vector<AttentionOutput>> layers;
};
Forward forward_example(const Model& model, const std::vector<int>& tokens);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(const Model& model, const std::vector<Example>& examples);

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double test_loss = 0.0;
    double test_accuracy = 0.0;
    std::uint64_t seed = 0;
    TaskSpec task;
    ModelSpec model;
    OptimParams optim;
    double wall_seconds = 0.0;  // meta only, never part of the payload
};

// Loss became non-finite; carries everything recorded up to the last finite
// step.
struct training_failure : numeric_error {
    explicit training_failure(const std::string& msg, TrainReport partial_report)
        : numeric_error(msg), partial(std::move(partial_report)) {}
    TrainReport partial;
};

// Trains `model` in place over dataset.train and fills a report (test metrics
// from dataset.test when present). The mixture prior is gradient-learned
// under SoftLearnedPrior, frozen under HardAssign, and replaced once per
// optimizer step by the batch responsibility average under SoftMStepPrior.
// `shuffle_seed` drives the per-epoch example order.
TrainReport train_model(Model& model, const Dataset& dataset, std::size_t epochs,
                        const OptimParams& optim, std::uint64_t shuffle_seed);

// generate_task + init_model + train_model, seeded from task.seed.
TrainReport train(const ModelSpec& model, const TaskSpec& task, std::size_t epochs,
                  const OptimParams& optim);

// As above, additionally handing back the trained model and the dataset for
// post-training analysis. Either pointer may be null.
TrainReport train(const ModelSpec& model, const TaskSpec& task, std::size_t epochs,
                  const OptimParams& optim, Model* trained, Dataset* data_out);

// Deterministic report content: everything except wall time.
nlohmann::json payload_json(const TrainReport& report);
// The non-deterministic remainder.
nlohmann::json meta_json(const TrainReport& report);

// Adapter for rank analysis: encodes an example's tokens as a 1xN tensor row
// and back, returning per-layer per-head score matrices.
Tensor tokens_tensor(const Example& example);
diag::ScoreSource model_score_source(const Model& model);

const char* to_string(TaskKind kind);
const char* to_string(Variant v);
const char* to_string(Kernel k);
const char* to_string(EStep e);
const char* to_string(KeyMode m);

}  // namespace mgk::train
