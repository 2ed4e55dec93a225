#include "tastesim/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "tastesim/csv.hpp"
#include "tastesim/mathutil.hpp"
#include "tastesim/rng.hpp"

namespace tastesim::simnet {

std::vector<int> NetworkArchitecture::conv_output_lengths() const {
    std::vector<int> lengths;
    int channels = input_channels;
    int length = input_length;
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
        const auto& layer = conv_layers[i];
        if (layer.in_channels != channels) {
            throw ConfigError("conv layer " + std::to_string(i) + ": expects " +
                              std::to_string(layer.in_channels) + " channels, gets " +
                              std::to_string(channels));
        }
        if (layer.kernel_width < 1 || layer.pool_width < 1 || layer.out_channels < 1) {
            throw ConfigError("conv layer " + std::to_string(i) + ": invalid spec");
        }
        int out_len;
        if (pool_before_conv) {
            int pooled = length / layer.pool_width;
            out_len = pooled - layer.kernel_width + 1;
        } else {
            int conv_len = length - layer.kernel_width + 1;
            out_len = conv_len / layer.pool_width;
        }
        if (out_len < 1) {
            throw ConfigError("conv layer " + std::to_string(i) + ": input length " +
                              std::to_string(length) + " too short for pool " +
                              std::to_string(layer.pool_width) + " and kernel " +
                              std::to_string(layer.kernel_width));
        }
        lengths.push_back(out_len);
        channels = layer.out_channels;
        length = out_len;
    }
    return lengths;
}

int NetworkArchitecture::flattened_size() const {
    auto lengths = conv_output_lengths();
    if (conv_layers.empty()) return input_channels * input_length;
    return conv_layers.back().out_channels * lengths.back();
}

void NetworkArchitecture::validate() const {
    if (input_channels < 1 || input_length < 1) {
        throw ConfigError("network input shape must be positive");
    }
    if (output_units < 1) throw ConfigError("network needs at least one output unit");
    for (int w : fc_hidden) {
        if (w < 1) throw ConfigError("fc widths must be positive");
    }
    conv_output_lengths();  // throws on bad conv shapes
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : conv) n += c.kernel.size() + c.bias.size();
    for (const auto& f : fc) n += f.weight.size() + f.bias.size();
    return n;
}

std::vector<double*> NetworkParams::flat() {
    std::vector<double*> out;
    out.reserve(parameter_count());
    for (auto& c : conv) {
        for (auto& v : c.kernel) out.push_back(&v);
        for (auto& v : c.bias) out.push_back(&v);
    }
    for (auto& f : fc) {
        for (auto& v : f.weight) out.push_back(&v);
        for (auto& v : f.bias) out.push_back(&v);
    }
    return out;
}

std::vector<const double*> NetworkParams::flat() const {
    std::vector<const double*> out;
    out.reserve(parameter_count());
    for (const auto& c : conv) {
        for (const auto& v : c.kernel) out.push_back(&v);
        for (const auto& v : c.bias) out.push_back(&v);
    }
    for (const auto& f : fc) {
        for (const auto& v : f.weight) out.push_back(&v);
        for (const auto& v : f.bias) out.push_back(&v);
    }
    return out;
}

std::uint64_t NetworkParams::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over parameter bytes
    auto mix = [&h](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (i * 8)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    for (const double* p : flat()) mix(*p);
    return h;
}

NetworkParams init_params(const NetworkArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    NetworkParams params;
    params.arch = arch;
    SplitMix64 rng(seed);
    auto uniform = [&rng](double limit) { return (rng.next_unit() * 2.0 - 1.0) * limit; };
    for (const auto& layer : arch.conv_layers) {
        ConvParams c;
        c.kernel.resize(static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                        layer.kernel_width);
        c.bias.assign(layer.out_channels, 0.0);
        double limit = std::sqrt(6.0 / (layer.in_channels * layer.kernel_width));
        for (auto& v : c.kernel) v = uniform(limit);
        params.conv.push_back(std::move(c));
    }
    int in = arch.flattened_size();
    std::vector<int> widths = arch.fc_hidden;
    widths.push_back(arch.output_units);
    for (int out : widths) {
        FcParams f;
        f.in = in;
        f.out = out;
        f.weight.resize(static_cast<std::size_t>(in) * out);
        f.bias.assign(out, 0.0);
        double limit = std::sqrt(6.0 / in);
        for (auto& v : f.weight) v = uniform(limit);
        params.fc.push_back(std::move(f));
        in = out;
    }
    return params;
}

NetworkParams zero_like(const NetworkParams& params) {
    NetworkParams z = params;
    for (auto& c : z.conv) {
        std::fill(c.kernel.begin(), c.kernel.end(), 0.0);
        std::fill(c.bias.begin(), c.bias.end(), 0.0);
    }
    for (auto& f : z.fc) {
        std::fill(f.weight.begin(), f.weight.end(), 0.0);
        std::fill(f.bias.begin(), f.bias.end(), 0.0);
    }
    return z;
}

std::vector<double> temporal_max_pool(std::span<const double> values, int channels, int length,
                                      int pool, std::vector<int>* argmax) {
    if (pool < 1) throw ConfigError("pool width must be positive");
    int out_len = length / pool;
    std::vector<double> out(static_cast<std::size_t>(channels) * out_len);
    if (argmax) argmax->assign(out.size(), 0);
    for (int c = 0; c < channels; ++c) {
        const double* row = values.data() + static_cast<std::size_t>(c) * length;
        for (int t = 0; t < out_len; ++t) {
            int start = t * pool;
            int best = start;
            double best_v = row[start];
            for (int i = 1; i < pool; ++i) {
                if (row[start + i] > best_v) {
                    best_v = row[start + i];
                    best = start + i;
                }
            }
            out[static_cast<std::size_t>(c) * out_len + t] = best_v;
            if (argmax) (*argmax)[static_cast<std::size_t>(c) * out_len + t] = best;
        }
    }
    return out;
}

namespace {

// Valid 1-D cross-correlation plus bias; out[o][t] = b[o] + sum K[o][ic][dt] * in[ic][t+dt].
void correlate(std::span<const double> input, int in_channels, int in_len,
               const ConvLayerSpec& spec, const ConvParams& params, std::vector<double>& pre,
               int out_len) {
    pre.assign(static_cast<std::size_t>(spec.out_channels) * out_len, 0.0);
    for (int o = 0; o < spec.out_channels; ++o) {
        double* out_row = pre.data() + static_cast<std::size_t>(o) * out_len;
        for (int t = 0; t < out_len; ++t) out_row[t] = params.bias[o];
        for (int ic = 0; ic < in_channels; ++ic) {
            const double* in_row = input.data() + static_cast<std::size_t>(ic) * in_len;
            const double* k = params.kernel.data() +
                              (static_cast<std::size_t>(o) * in_channels + ic) * spec.kernel_width;
            for (int t = 0; t < out_len; ++t) {
                double acc = 0.0;
                for (int dt = 0; dt < spec.kernel_width; ++dt) acc += k[dt] * in_row[t + dt];
                out_row[t] += acc;
            }
        }
    }
}

void relu_into(const std::vector<double>& pre, std::vector<double>& out) {
    out.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

ConvLayerTrace run_conv_layer(std::span<const double> input, int in_len,
                              const ConvLayerSpec& spec, const ConvParams& params,
                              bool pool_before_conv) {
    ConvLayerTrace trace;
    trace.input.assign(input.begin(), input.end());
    trace.input_length = in_len;
    if (pool_before_conv) {
        trace.pooled_length = in_len / spec.pool_width;
        trace.pooled =
            temporal_max_pool(input, spec.in_channels, in_len, spec.pool_width, &trace.argmax);
        trace.out_length = trace.pooled_length - spec.kernel_width + 1;
        if (trace.out_length < 1) throw ConfigError("conv layer input too short");
        correlate(trace.pooled, spec.in_channels, trace.pooled_length, spec, params, trace.pre,
                  trace.out_length);
        relu_into(trace.pre, trace.out);
    } else {
        int conv_len = in_len - spec.kernel_width + 1;
        if (conv_len < 1) throw ConfigError("conv layer input too short");
        correlate(input, spec.in_channels, in_len, spec, params, trace.pre, conv_len);
        std::vector<double> act;
        relu_into(trace.pre, act);
        trace.pooled = act;  // post-activation map feeding the pool
        trace.pooled_length = conv_len;
        trace.out_length = conv_len / spec.pool_width;
        if (trace.out_length < 1) throw ConfigError("conv layer input too short");
        trace.out = temporal_max_pool(act, spec.out_channels, conv_len, spec.pool_width,
                                      &trace.argmax);
    }
    return trace;
}

}  // namespace

ingest::FeatureTensor conv_forward(const ingest::FeatureTensor& x, const ConvLayerSpec& spec,
                                   const ConvParams& params, bool pool_before_conv,
                                   ConvLayerTrace* trace) {
    if (static_cast<int>(x.channels) != spec.in_channels) {
        throw DataError("conv_forward: input has " + std::to_string(x.channels) +
                        " channels, layer expects " + std::to_string(spec.in_channels));
    }
    ConvLayerTrace t = run_conv_layer(x.values, static_cast<int>(x.length), spec, params,
                                      pool_before_conv);
    ingest::FeatureTensor out;
    out.channels = static_cast<std::size_t>(spec.out_channels);
    out.length = static_cast<std::size_t>(t.out_length);
    out.values = t.out;
    if (trace) *trace = std::move(t);
    return out;
}

std::vector<double> fc_forward(std::span<const double> v, const FcParams& params, bool relu) {
    if (static_cast<int>(v.size()) != params.in) {
        throw DataError("fc_forward: input size " + std::to_string(v.size()) +
                        " does not match layer fan-in " + std::to_string(params.in));
    }
    std::vector<double> out(params.bias.begin(), params.bias.end());
    for (int i = 0; i < params.in; ++i) {
        const double* w_row = params.weight.data() + static_cast<std::size_t>(i) * params.out;
        double vi = v[i];
        if (vi == 0.0) continue;
        for (int j = 0; j < params.out; ++j) out[j] += w_row[j] * vi;
    }
    if (relu) {
        for (auto& x : out) x = x > 0.0 ? x : 0.0;
    }
    return out;
}

std::vector<double> branch_forward(const ingest::FeatureTensor& x, const NetworkParams& params,
                                   BranchTrace* trace) {
    const auto& arch = params.arch;
    if (static_cast<int>(x.channels) != arch.input_channels ||
        static_cast<int>(x.length) != arch.input_length) {
        throw DataError("branch input shape (" + std::to_string(x.channels) + "x" +
                        std::to_string(x.length) + ") does not match network input (" +
                        std::to_string(arch.input_channels) + "x" +
                        std::to_string(arch.input_length) + ")");
    }
    std::vector<double> cur(x.values.begin(), x.values.end());
    int cur_len = arch.input_length;
    for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
        ConvLayerTrace t = run_conv_layer(cur, cur_len, arch.conv_layers[i], params.conv[i],
                                          arch.pool_before_conv);
        cur = t.out;
        cur_len = t.out_length;
        if (trace) trace->conv.push_back(std::move(t));
    }
    // cur is now the flattened conv output
    for (std::size_t l = 0; l < params.fc.size(); ++l) {
        bool is_output = l + 1 == params.fc.size();
        bool relu = is_output ? arch.output_activation == OutputActivation::Relu : true;
        std::vector<double> pre(params.fc[l].bias.begin(), params.fc[l].bias.end());
        const auto& f = params.fc[l];
        if (static_cast<int>(cur.size()) != f.in) {
            throw DataError("fc layer " + std::to_string(l) + ": fan-in mismatch");
        }
        for (int i = 0; i < f.in; ++i) {
            double vi = cur[i];
            if (vi == 0.0) continue;
            const double* w_row = f.weight.data() + static_cast<std::size_t>(i) * f.out;
            for (int j = 0; j < f.out; ++j) pre[j] += w_row[j] * vi;
        }
        if (trace) {
            trace->fc_inputs.push_back(cur);
            trace->fc_pre.push_back(pre);
        }
        if (relu) {
            cur.resize(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) cur[i] = pre[i] > 0.0 ? pre[i] : 0.0;
        } else {
            cur = pre;
        }
    }
    if (trace) trace->output = cur;
    return cur;
}

double forward_pair(const ingest::FeatureTensor& x, const ingest::FeatureTensor& y,
                    const NetworkParams& params, ForwardTrace* trace) {
    BranchTrace tx, ty;
    std::vector<double> ox = branch_forward(x, params, trace ? &tx : nullptr);
    std::vector<double> oy = branch_forward(y, params, trace ? &ty : nullptr);
    double sim = cosine_similarity(ox, oy, kCosineEps);
    sim = std::clamp(sim, -1.0, 1.0);
    if (trace) {
        trace->x = std::move(tx);
        trace->y = std::move(ty);
        trace->x.output = std::move(ox);
        trace->y.output = std::move(oy);
        trace->similarity = sim;
        trace->zero_norm_flagged = norm2(trace->x.output) < kCosineEps ||
                                   norm2(trace->y.output) < kCosineEps;
        trace->params_checksum = params.checksum();
    }
    return sim;
}

double predict(const NetworkParams& params, const ingest::FeatureTensor& x,
               const ingest::FeatureTensor& y) {
    return forward_pair(x, y, params);
}

double batch_loss(std::span<const PairItem> batch, const NetworkParams& params) {
    if (batch.empty()) throw DataError("loss over an empty batch");
    double total = 0.0;
    for (const auto& item : batch) {
        double sim = forward_pair(*item.x, *item.y, params);
        double diff = sim - item.label;
        total += diff * diff;
    }
    return total / static_cast<double>(batch.size());
}

namespace {

// d(cosine)/d(a) with the max(norm, eps) guard; `sim` is the unclamped cosine.
std::vector<double> cosine_grad_wrt(const std::vector<double>& a, const std::vector<double>& b,
                                    double sim) {
    double na = std::max(norm2(a), kCosineEps);
    double nb = std::max(norm2(b), kCosineEps);
    std::vector<double> g(a.size());
    bool clamped = norm2(a) < kCosineEps;
    for (std::size_t i = 0; i < a.size(); ++i) {
        g[i] = b[i] / (na * nb);
        if (!clamped) g[i] -= sim * a[i] / (na * na);
    }
    return g;
}

// Backpropagates d(loss)/d(output) through one branch, accumulating into the
// shared gradient buffers.
void branch_backward(const BranchTrace& trace, const NetworkParams& params,
                     std::vector<double> g_out, NetworkParams& grads) {
    const auto& arch = params.arch;
    // FC stack, output layer first.
    for (int l = static_cast<int>(params.fc.size()) - 1; l >= 0; --l) {
        const auto& f = params.fc[l];
        auto& gf = grads.fc[l];
        bool is_output = l + 1 == static_cast<int>(params.fc.size());
        bool relu = is_output ? arch.output_activation == OutputActivation::Relu : true;
        const auto& pre = trace.fc_pre[l];
        if (relu) {
            for (int j = 0; j < f.out; ++j) {
                if (pre[j] <= 0.0) g_out[j] = 0.0;
            }
        }
        const auto& input = trace.fc_inputs[l];
        std::vector<double> g_in(f.in, 0.0);
        for (int i = 0; i < f.in; ++i) {
            const double* w_row = f.weight.data() + static_cast<std::size_t>(i) * f.out;
            double* gw_row = gf.weight.data() + static_cast<std::size_t>(i) * f.out;
            double vi = input[i];
            double acc = 0.0;
            for (int j = 0; j < f.out; ++j) {
                double gj = g_out[j];
                gw_row[j] += vi * gj;
                acc += w_row[j] * gj;
            }
            g_in[i] = acc;
        }
        for (int j = 0; j < f.out; ++j) gf.bias[j] += g_out[j];
        g_out = std::move(g_in);
    }
    // Conv stack, deepest layer first; g_out holds the flattened gradient.
    for (int li = static_cast<int>(params.conv.size()) - 1; li >= 0; --li) {
        const auto& spec = arch.conv_layers[li];
        const auto& t = trace.conv[li];
        auto& gc = grads.conv[li];
        if (arch.pool_before_conv) {
            // g_out -> relu gate -> conv grads -> scatter through pool
            for (std::size_t i = 0; i < g_out.size(); ++i) {
                if (t.pre[i] <= 0.0) g_out[i] = 0.0;
            }
            std::vector<double> g_pooled(
                static_cast<std::size_t>(spec.in_channels) * t.pooled_length, 0.0);
            for (int o = 0; o < spec.out_channels; ++o) {
                const double* g_row = g_out.data() + static_cast<std::size_t>(o) * t.out_length;
                for (int tt = 0; tt < t.out_length; ++tt) gc.bias[o] += g_row[tt];
                for (int ic = 0; ic < spec.in_channels; ++ic) {
                    const double* pooled_row =
                        t.pooled.data() + static_cast<std::size_t>(ic) * t.pooled_length;
                    double* gp_row =
                        g_pooled.data() + static_cast<std::size_t>(ic) * t.pooled_length;
                    const double* k =
                        params.conv[li].kernel.data() +
                        (static_cast<std::size_t>(o) * spec.in_channels + ic) * spec.kernel_width;
                    double* gk =
                        gc.kernel.data() +
                        (static_cast<std::size_t>(o) * spec.in_channels + ic) * spec.kernel_width;
                    for (int tt = 0; tt < t.out_length; ++tt) {
                        double g = g_row[tt];
                        if (g == 0.0) continue;
                        for (int dt = 0; dt < spec.kernel_width; ++dt) {
                            gk[dt] += g * pooled_row[tt + dt];
                            gp_row[tt + dt] += g * k[dt];
                        }
                    }
                }
            }
            if (li > 0) {
                std::vector<double> g_input(
                    static_cast<std::size_t>(spec.in_channels) * t.input_length, 0.0);
                for (int ic = 0; ic < spec.in_channels; ++ic) {
                    for (int tp = 0; tp < t.pooled_length; ++tp) {
                        std::size_t cell = static_cast<std::size_t>(ic) * t.pooled_length + tp;
                        g_input[static_cast<std::size_t>(ic) * t.input_length + t.argmax[cell]] +=
                            g_pooled[cell];
                    }
                }
                g_out = std::move(g_input);
            }
        } else {
            // g_out -> scatter through pool -> relu gate -> conv grads
            std::vector<double> g_act(
                static_cast<std::size_t>(spec.out_channels) * t.pooled_length, 0.0);
            for (int oc = 0; oc < spec.out_channels; ++oc) {
                for (int tp = 0; tp < t.out_length; ++tp) {
                    std::size_t cell = static_cast<std::size_t>(oc) * t.out_length + tp;
                    g_act[static_cast<std::size_t>(oc) * t.pooled_length + t.argmax[cell]] +=
                        g_out[cell];
                }
            }
            for (std::size_t i = 0; i < g_act.size(); ++i) {
                if (t.pre[i] <= 0.0) g_act[i] = 0.0;
            }
            std::vector<double> g_input;
            if (li > 0) {
                g_input.assign(static_cast<std::size_t>(spec.in_channels) * t.input_length, 0.0);
            }
            int conv_len = t.pooled_length;  // pre-pool conv output length
            for (int o = 0; o < spec.out_channels; ++o) {
                const double* g_row = g_act.data() + static_cast<std::size_t>(o) * conv_len;
                for (int tt = 0; tt < conv_len; ++tt) gc.bias[o] += g_row[tt];
                for (int ic = 0; ic < spec.in_channels; ++ic) {
                    const double* in_row =
                        t.input.data() + static_cast<std::size_t>(ic) * t.input_length;
                    const double* k =
                        params.conv[li].kernel.data() +
                        (static_cast<std::size_t>(o) * spec.in_channels + ic) * spec.kernel_width;
                    double* gk =
                        gc.kernel.data() +
                        (static_cast<std::size_t>(o) * spec.in_channels + ic) * spec.kernel_width;
                    double* gi_row =
                        li > 0 ? g_input.data() + static_cast<std::size_t>(ic) * t.input_length
                               : nullptr;
                    for (int tt = 0; tt < conv_len; ++tt) {
                        double g = g_row[tt];
                        if (g == 0.0) continue;
                        for (int dt = 0; dt < spec.kernel_width; ++dt) {
                            gk[dt] += g * in_row[tt + dt];
                            if (gi_row) gi_row[tt + dt] += g * k[dt];
                        }
                    }
                }
            }
            if (li > 0) g_out = std::move(g_input);
        }
    }
}

}  // namespace

NetworkParams backward(std::span<const PairItem> batch, std::span<const ForwardTrace> traces,
                       const NetworkParams& params, double* loss_out) {
    if (batch.empty()) throw DataError("backward over an empty batch");
    if (batch.size() != traces.size()) {
        throw DataError("backward: trace count does not match batch size");
    }
    const std::uint64_t current = params.checksum();
    NetworkParams grads = zero_like(params);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& trace = traces[i];
        if (trace.params_checksum != current) {
            throw DataError("backward: stale forward trace (parameters changed)");
        }
        double diff = trace.similarity - batch[i].label;
        loss += diff * diff;
        double dloss_dsim = 2.0 * diff * inv_n;
        auto gx = cosine_grad_wrt(trace.x.output, trace.y.output, trace.similarity);
        auto gy = cosine_grad_wrt(trace.y.output, trace.x.output, trace.similarity);
        for (auto& v : gx) v *= dloss_dsim;
        for (auto& v : gy) v *= dloss_dsim;
        branch_backward(trace.x, params, std::move(gx), grads);
        branch_backward(trace.y, params, std::move(gy), grads);
    }
    if (loss_out) *loss_out = loss * inv_n;
    return grads;
}

GradCheckResult gradient_check(const NetworkParams& params, std::span<const PairItem> batch,
                               double step) {
    std::vector<ForwardTrace> traces(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        forward_pair(*batch[i].x, *batch[i].y, params, &traces[i]);
    }
    NetworkParams analytic = backward(batch, traces, params);
    NetworkParams probe = params;
    auto probe_flat = probe.flat();
    auto grad_flat = analytic.flat();
    GradCheckResult result;
    result.checked = probe_flat.size();
    for (std::size_t i = 0; i < probe_flat.size(); ++i) {
        double saved = *probe_flat[i];
        *probe_flat[i] = saved + step;
        double plus = batch_loss(batch, probe);
        *probe_flat[i] = saved - step;
        double minus = batch_loss(batch, probe);
        *probe_flat[i] = saved;
        double fd = (plus - minus) / (2.0 * step);
        double analytic_v = *grad_flat[i];
        double rel = std::abs(analytic_v - fd) / std::max(1.0, std::abs(analytic_v));
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = i;
        }
    }
    return result;
}

Optimizer optimizer_from_name(const std::string& name) {
    if (name == "sgd") return Optimizer::Sgd;
    if (name == "momentum") return Optimizer::Momentum;
    if (name == "adam") return Optimizer::Adam;
    throw ConfigError("unknown optimizer: " + name);
}

const char* optimizer_name(Optimizer optimizer) {
    switch (optimizer) {
        case Optimizer::Sgd: return "sgd";
        case Optimizer::Momentum: return "momentum";
        case Optimizer::Adam: return "adam";
    }
    return "sgd";
}

void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (epochs < 1) throw ConfigError("epoch count must be positive");
    if (early_stop_patience < 0) throw ConfigError("patience must be non-negative");
}

namespace {

void apply_update(NetworkParams& params, const NetworkParams& grads, OptimizerState& state,
                  const TrainConfig& config) {
    auto p = params.flat();
    std::vector<const double*> g = grads.flat();
    ++state.step;
    switch (state.type) {
        case Optimizer::Sgd:
            for (std::size_t i = 0; i < p.size(); ++i) *p[i] -= config.learning_rate * *g[i];
            break;
        case Optimizer::Momentum:
            if (state.momentum_buf.size() != p.size()) state.momentum_buf.assign(p.size(), 0.0);
            for (std::size_t i = 0; i < p.size(); ++i) {
                state.momentum_buf[i] = config.momentum * state.momentum_buf[i] + *g[i];
                *p[i] -= config.learning_rate * state.momentum_buf[i];
            }
            break;
        case Optimizer::Adam: {
            if (state.adam_m.size() != p.size()) {
                state.adam_m.assign(p.size(), 0.0);
                state.adam_v.assign(p.size(), 0.0);
            }
            double b1 = config.adam_beta1, b2 = config.adam_beta2;
            double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
            double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
            for (std::size_t i = 0; i < p.size(); ++i) {
                state.adam_m[i] = b1 * state.adam_m[i] + (1.0 - b1) * *g[i];
                state.adam_v[i] = b2 * state.adam_v[i] + (1.0 - b2) * *g[i] * *g[i];
                double mhat = state.adam_m[i] / bc1;
                double vhat = state.adam_v[i] / bc2;
                *p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
            }
            break;
        }
    }
}

std::vector<PairItem> items_for_split(std::span<const pairs::PairSample> dataset,
                                      const TensorMap& tensors, pairs::Split split) {
    std::vector<PairItem> items;
    for (const auto& s : dataset) {
        if (s.split != split) continue;
        auto ix = tensors.find(s.song_x);
        auto iy = tensors.find(s.song_y);
        if (ix == tensors.end() || iy == tensors.end()) {
            throw DataError("no attribute tensor for pair (" + s.song_x + ", " + s.song_y + ")");
        }
        items.push_back({&ix->second, &iy->second, s.label});
    }
    return items;
}

double mean_loss_over(std::span<const PairItem> items, const NetworkParams& params) {
    if (items.empty()) return 0.0;
    double total = 0.0;
    for (const auto& item : items) {
        double diff = forward_pair(*item.x, *item.y, params) - item.label;
        total += diff * diff;
    }
    return total / static_cast<double>(items.size());
}

}  // namespace

TrainResult train(std::span<const pairs::PairSample> dataset, const TensorMap& tensors,
                  const NetworkArchitecture& arch, const TrainConfig& config) {
    config.validate();
    arch.validate();
    auto train_items = items_for_split(dataset, tensors, pairs::Split::Train);
    auto val_items = items_for_split(dataset, tensors, pairs::Split::Validation);
    if (train_items.empty()) throw DataError("train split is empty");

    NetworkParams params = init_params(arch, config.seed);
    OptimizerState opt_state;
    opt_state.type = config.optimizer;

    TrainResult result;
    result.best_validation = std::numeric_limits<double>::infinity();
    result.best_epoch = 0;
    NetworkParams best = params;

    SplitMix64 rng(config.seed ^ 0x5deece66dULL);
    std::vector<std::size_t> order(train_items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int since_best = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        std::vector<PairItem> batch;
        std::vector<ForwardTrace> traces;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_items[order[i]]);
            traces.assign(batch.size(), ForwardTrace{});
            for (std::size_t i = 0; i < batch.size(); ++i) {
                forward_pair(*batch[i].x, *batch[i].y, params, &traces[i]);
            }
            double loss = 0.0;
            NetworkParams grads = backward(batch, traces, params, &loss);
            if (!std::isfinite(loss)) {
                throw DataError("training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch));
            }
            epoch_loss += loss * static_cast<double>(batch.size());
            seen += batch.size();
            apply_update(params, grads, opt_state, config);
        }
        EpochLoss entry;
        entry.epoch = epoch;
        entry.train_mse = epoch_loss / static_cast<double>(seen);
        entry.validation_mse =
            val_items.empty() ? entry.train_mse : mean_loss_over(val_items, params);
        result.history.push_back(entry);

        if (entry.validation_mse < result.best_validation) {
            result.best_validation = entry.validation_mse;
            result.best_epoch = epoch;
            best = params;
            since_best = 0;
        } else {
            ++since_best;
            if (config.early_stop_patience > 0 && since_best >= config.early_stop_patience) break;
        }
    }
    result.params = std::move(best);
    result.optimizer = std::move(opt_state);
    return result;
}

double evaluate_mse(const NetworkParams& params, std::span<const pairs::PairSample> samples,
                    const TensorMap& tensors, pairs::Split split) {
    auto items = items_for_split(samples, tensors, split);
    if (items.empty()) throw DataError("no samples in the requested split");
    return mean_loss_over(items, params);
}

namespace {

constexpr const char* kCheckpointFormat = "tastesim-net";
constexpr int kCheckpointVersion = 1;

nlohmann::json arch_to_json(const NetworkArchitecture& arch) {
    nlohmann::json j;
    j["input_channels"] = arch.input_channels;
    j["input_length"] = arch.input_length;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& c : arch.conv_layers) {
        layers.push_back({{"in", c.in_channels},
                          {"out", c.out_channels},
                          {"kernel", c.kernel_width},
                          {"pool", c.pool_width}});
    }
    j["conv_layers"] = std::move(layers);
    j["fc_hidden"] = arch.fc_hidden;
    j["output_units"] = arch.output_units;
    j["output_activation"] =
        arch.output_activation == OutputActivation::Relu ? "relu" : "identity";
    j["pool_before_conv"] = arch.pool_before_conv;
    return j;
}

NetworkArchitecture arch_from_json(const nlohmann::json& j) {
    NetworkArchitecture arch;
    arch.input_channels = j.at("input_channels").get<int>();
    arch.input_length = j.at("input_length").get<int>();
    for (const auto& c : j.at("conv_layers")) {
        arch.conv_layers.push_back({c.at("in").get<int>(), c.at("out").get<int>(),
                                    c.at("kernel").get<int>(), c.at("pool").get<int>()});
    }
    arch.fc_hidden = j.at("fc_hidden").get<std::vector<int>>();
    arch.output_units = j.at("output_units").get<int>();
    arch.output_activation = j.at("output_activation").get<std::string>() == "relu"
                                 ? OutputActivation::Relu
                                 : OutputActivation::Identity;
    arch.pool_before_conv = j.at("pool_before_conv").get<bool>();
    return arch;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["arch"] = arch_to_json(ckpt.params.arch);
    nlohmann::json conv = nlohmann::json::array();
    for (const auto& c : ckpt.params.conv) {
        conv.push_back({{"kernel", c.kernel}, {"bias", c.bias}});
    }
    j["conv"] = std::move(conv);
    nlohmann::json fc = nlohmann::json::array();
    for (const auto& f : ckpt.params.fc) {
        fc.push_back({{"in", f.in}, {"out", f.out}, {"weight", f.weight}, {"bias", f.bias}});
    }
    j["fc"] = std::move(fc);
    j["optimizer"] = {{"type", optimizer_name(ckpt.optimizer.type)},
                      {"momentum_buf", ckpt.optimizer.momentum_buf},
                      {"adam_m", ckpt.optimizer.adam_m},
                      {"adam_v", ckpt.optimizer.adam_v},
                      {"step", ckpt.optimizer.step}};
    j["seed"] = ckpt.seed;
    j["epoch"] = ckpt.epoch;
    j["best_validation_loss"] = ckpt.best_validation_loss;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << j.dump();
    if (!out) throw IoError("write failure: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path + ": " + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat) {
        throw DataError("not a network checkpoint: " + path);
    }
    if (j.value("version", 0) != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version in " + path);
    }
    Checkpoint ckpt;
    ckpt.params.arch = arch_from_json(j.at("arch"));
    for (const auto& c : j.at("conv")) {
        ConvParams p;
        p.kernel = c.at("kernel").get<std::vector<double>>();
        p.bias = c.at("bias").get<std::vector<double>>();
        ckpt.params.conv.push_back(std::move(p));
    }
    for (const auto& f : j.at("fc")) {
        FcParams p;
        p.in = f.at("in").get<int>();
        p.out = f.at("out").get<int>();
        p.weight = f.at("weight").get<std::vector<double>>();
        p.bias = f.at("bias").get<std::vector<double>>();
        ckpt.params.fc.push_back(std::move(p));
    }
    const auto& opt = j.at("optimizer");
    ckpt.optimizer.type = optimizer_from_name(opt.at("type").get<std::string>());
    ckpt.optimizer.momentum_buf = opt.at("momentum_buf").get<std::vector<double>>();
    ckpt.optimizer.adam_m = opt.at("adam_m").get<std::vector<double>>();
    ckpt.optimizer.adam_v = opt.at("adam_v").get<std::vector<double>>();
    ckpt.optimizer.step = opt.at("step").get<std::int64_t>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.epoch = j.at("epoch").get<int>();
    ckpt.best_validation_loss = j.at("best_validation_loss").get<double>();
    return ckpt;
}

void write_loss_history_csv(std::span<const EpochLoss> history, std::ostream& out) {
    out << "epoch,train_mse,validation_mse\n";
    for (const auto& entry : history) {
        out << entry.epoch << ',' << format_double(entry.train_mse) << ','
            << format_double(entry.validation_mse) << '\n';
    }
}

}  // namespace tastesim::simnet
