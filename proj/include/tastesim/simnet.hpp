#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tastesim/common.hpp"
#include "tastesim/ingest.hpp"
#include "tastesim/pairs.hpp"

namespace tastesim::simnet {

struct ConvLayerSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel_width = 5;
    int pool_width = 2;

    bool operator==(const ConvLayerSpec&) const = default;
};

enum class OutputActivation { Identity, Relu };

struct NetworkArchitecture {
    int input_channels = 1;
    int input_length = 1;
    std::vector<ConvLayerSpec> conv_layers;
    std::vector<int> fc_hidden;  // hidden widths, e.g. {800, 600}
    int output_units = 20;
    OutputActivation output_activation = OutputActivation::Identity;
    bool pool_before_conv = true;  // pool-then-convolve as stated; false swaps the order

    // Per-layer output lengths; throws ConfigError naming the offending layer.
    std::vector<int> conv_output_lengths() const;
    int flattened_size() const;
    void validate() const;

    bool operator==(const NetworkArchitecture&) const = default;
};

struct ConvParams {
    std::vector<double> kernel;  // [out][in][dt]
    std::vector<double> bias;    // [out]
};

struct FcParams {
    int in = 0;
    int out = 0;
    std::vector<double> weight;  // [in][out]; applied as W^T v
    std::vector<double> bias;    // [out]
};

// One parameter set serves both branches; sharing is structural.
struct NetworkParams {
    NetworkArchitecture arch;
    std::vector<ConvParams> conv;
    std::vector<FcParams> fc;  // hidden layers then the output layer

    std::size_t parameter_count() const;
    std::vector<double*> flat();  // stable order across conv then fc layers
    std::vector<const double*> flat() const;
    std::uint64_t checksum() const;
};

// Scaled uniform fan-in initialization (ReLU gain), zero biases.
NetworkParams init_params(const NetworkArchitecture& arch, std::uint64_t seed);

// Gradients shaped like the parameters.
NetworkParams zero_like(const NetworkParams& params);

struct ConvLayerTrace {
    std::vector<double> input;  // values entering the layer
    int input_length = 0;
    std::vector<double> pooled;  // pool output (or post-activation pool input values)
    int pooled_length = 0;
    std::vector<int> argmax;  // absolute time index routed by each pool cell
    std::vector<double> pre;  // pre-activation conv output
    int out_length = 0;
    std::vector<double> out;  // layer output
};

struct BranchTrace {
    std::vector<ConvLayerTrace> conv;
    std::vector<std::vector<double>> fc_inputs;  // input vector of each fc layer
    std::vector<std::vector<double>> fc_pre;     // pre-activation of each fc layer
    std::vector<double> output;
};

struct ForwardTrace {
    BranchTrace x;
    BranchTrace y;
    double similarity = 0.0;
    bool zero_norm_flagged = false;
    std::uint64_t params_checksum = 0;
};

inline constexpr double kCosineEps = 1e-12;

// Temporal max pooling with window = stride = pool (remainder dropped).
// argmax, when given, receives the winning absolute time index per cell.
std::vector<double> temporal_max_pool(std::span<const double> values, int channels, int length,
                                      int pool, std::vector<int>* argmax = nullptr);

// One conv layer: pool, valid 1-D cross-correlation, bias, ReLU (order per
// pool_before_conv). Input shape must match the layer spec.
ingest::FeatureTensor conv_forward(const ingest::FeatureTensor& x, const ConvLayerSpec& spec,
                                   const ConvParams& params, bool pool_before_conv = true,
                                   ConvLayerTrace* trace = nullptr);

std::vector<double> fc_forward(std::span<const double> v, const FcParams& params, bool relu);

std::vector<double> branch_forward(const ingest::FeatureTensor& x, const NetworkParams& params,
                                   BranchTrace* trace = nullptr);

// Both branches under the same parameters, then cosine of the two outputs.
double forward_pair(const ingest::FeatureTensor& x, const ingest::FeatureTensor& y,
                    const NetworkParams& params, ForwardTrace* trace = nullptr);

double predict(const NetworkParams& params, const ingest::FeatureTensor& x,
               const ingest::FeatureTensor& y);

struct PairItem {
    const ingest::FeatureTensor* x = nullptr;
    const ingest::FeatureTensor* y = nullptr;
    double label = 0.0;
};

// Mean squared difference between predicted and taste similarity.
double batch_loss(std::span<const PairItem> batch, const NetworkParams& params);

// Analytic gradients of the batch MSE; traces must come from forward_pair
// under the current parameters (stale traces are rejected).
NetworkParams backward(std::span<const PairItem> batch, std::span<const ForwardTrace> traces,
                       const NetworkParams& params, double* loss_out = nullptr);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central differences over every parameter; rel error uses max(1, |analytic|).
GradCheckResult gradient_check(const NetworkParams& params, std::span<const PairItem> batch,
                               double step = 1e-5);

enum class Optimizer { Sgd, Momentum, Adam };
Optimizer optimizer_from_name(const std::string& name);
const char* optimizer_name(Optimizer optimizer);

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_size = 32;
    int epochs = 100;
    Optimizer optimizer = Optimizer::Sgd;
    double momentum = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int early_stop_patience = 0;  // 0 disables

    void validate() const;
};

struct OptimizerState {
    Optimizer type = Optimizer::Sgd;
    std::vector<double> momentum_buf;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::int64_t step = 0;
};

struct EpochLoss {
    int epoch = 0;
    double train_mse = 0.0;
    double validation_mse = 0.0;
};

struct TrainResult {
    NetworkParams params;  // best-validation snapshot
    std::vector<EpochLoss> history;
    double best_validation = 0.0;
    int best_epoch = 0;
    OptimizerState optimizer;
};

using TensorMap = std::map<std::string, ingest::FeatureTensor>;

// Mini-batch gradient descent over the train split; per-epoch train and
// validation MSE recorded. Aborts with DataError on NaN loss.
TrainResult train(std::span<const pairs::PairSample> dataset, const TensorMap& tensors,
                  const NetworkArchitecture& arch, const TrainConfig& config);

double evaluate_mse(const NetworkParams& params, std::span<const pairs::PairSample> samples,
                    const TensorMap& tensors, pairs::Split split);

struct Checkpoint {
    NetworkParams params;
    OptimizerState optimizer;
    std::uint64_t seed = 0;
    int epoch = 0;
    double best_validation_loss = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
void write_loss_history_csv(std::span<const EpochLoss> history, std::ostream& out);

}  // namespace tastesim::simnet
