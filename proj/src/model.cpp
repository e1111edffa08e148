#include "layoutflow/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "layoutflow/errors.hpp"

namespace layoutflow {

namespace {

using RowVector = Eigen::RowVectorXd;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const RowVector>;
using RowMap = Eigen::Map<RowVector>;

constexpr double kLayerNormEps = 1e-5;

double gelu(double z)
{
    return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
}

double gelu_derivative(double z)
{
    const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + z * pdf;
}

double sigmoid(double z)
{
    return 1.0 / (1.0 + std::exp(-z));
}

double silu(double z)
{
    return z * sigmoid(z);
}

double silu_derivative(double z)
{
    const double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

Matrix layer_norm(const Matrix& x, ConstRowMap gain, ConstRowMap bias, LayerNormCache& cache)
{
    const auto rows = x.rows();
    const auto cols = static_cast<double>(x.cols());
    cache.xhat.resize(rows, x.cols());
    cache.rstd.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = x.row(r).sum() / cols;
        const double var = (x.row(r).array() - mean).square().sum() / cols;
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.rstd[r] = rstd;
        cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
    }
    Matrix y = cache.xhat.array().rowwise() * gain.array();
    y.rowwise() += bias;
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, ConstRowMap gain, RowMap dgain,
                           RowMap dbias)
{
    dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    dbias += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * gain.array();
    const double cols = static_cast<double>(dy.cols());
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double sum = dxhat.row(r).sum();
        const double dot = dxhat.row(r).dot(cache.xhat.row(r));
        dx.row(r) = (cache.rstd[r] / cols) *
                    (cols * dxhat.row(r).array() - sum - cache.xhat.row(r).array() * dot);
    }
    return dx;
}

Matrix affine(const Matrix& x, ConstMatrixMap w, ConstRowMap b)
{
    Matrix y = x * w.transpose();
    y.rowwise() += b;
    return y;
}

} // namespace

void ModelConfig::validate() const
{
    if (layers < 1 || heads < 1 || dim < 2 || ff_dim < 1 || nmax < 1 || bits < 1 || time_embed_dim < 2) {
        throw ContractError("model configuration values must be positive");
    }
    if (dim % heads != 0) {
        throw ContractError("model dim must be divisible by the head count");
    }
    if (dim % 2 != 0 || time_embed_dim % 2 != 0) {
        throw ContractError("model dim and time embedding dim must be even");
    }
}

Vector time_features(double t, int dim)
{
    const int half = dim / 2;
    Vector out(dim);
    for (int i = 0; i < half; ++i) {
        const double frac = half == 1 ? 0.0 : static_cast<double>(i) / (half - 1);
        const double omega = std::pow(1000.0, frac);
        out[i] = std::sin(omega * t);
        out[half + i] = std::cos(omega * t);
    }
    return out;
}

int VectorFieldNet::add_slot(const std::string& name, int rows, int cols)
{
    ParamSlot s{name, m_params.size(), rows, cols};
    m_params.resize(m_params.size() + s.size(), 0.0);
    m_slots.push_back(std::move(s));
    return static_cast<int>(m_slots.size()) - 1;
}

VectorFieldNet::VectorFieldNet(const ModelConfig& cfg) : m_cfg(cfg)
{
    cfg.validate();
    const int d = cfg.dim;
    const int half = d / 2;
    m_ids.geom_w = add_slot("embed.geometry.weight", half, kGeometryDims);
    m_ids.geom_b = add_slot("embed.geometry.bias", 1, half);
    m_ids.type_w = add_slot("embed.type.weight", half, cfg.bits);
    m_ids.type_b = add_slot("embed.type.bias", 1, half);
    m_ids.pos_mask = add_slot("embed.geometry_mask", 2 * kGeometryDims, half);
    m_ids.type_mask = add_slot("embed.type_mask", 2, half);
    m_ids.side_w = add_slot("embed.side.weight", d, cfg.stride());
    m_ids.side_b = add_slot("embed.side.bias", 1, d);
    m_ids.fuse_w = add_slot("embed.fuse.weight", d, d);
    m_ids.fuse_b = add_slot("embed.fuse.bias", 1, d);
    m_ids.time1_w = add_slot("time.fc1.weight", d, cfg.time_embed_dim);
    m_ids.time1_b = add_slot("time.fc1.bias", 1, d);
    m_ids.time2_w = add_slot("time.fc2.weight", d, d);
    m_ids.time2_b = add_slot("time.fc2.bias", 1, d);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        LayerIds ids{};
        ids.ln1_g = add_slot(p + "ln1.gain", 1, d);
        ids.ln1_b = add_slot(p + "ln1.bias", 1, d);
        ids.qkv_w = add_slot(p + "attn.qkv.weight", 3 * d, d);
        ids.qkv_b = add_slot(p + "attn.qkv.bias", 1, 3 * d);
        ids.attn_out_w = add_slot(p + "attn.out.weight", d, d);
        ids.attn_out_b = add_slot(p + "attn.out.bias", 1, d);
        ids.time_w = add_slot(p + "time.weight", d, d);
        ids.time_b = add_slot(p + "time.bias", 1, d);
        ids.ln2_g = add_slot(p + "ln2.gain", 1, d);
        ids.ln2_b = add_slot(p + "ln2.bias", 1, d);
        ids.ff1_w = add_slot(p + "ff.fc1.weight", cfg.ff_dim, d);
        ids.ff1_b = add_slot(p + "ff.fc1.bias", 1, cfg.ff_dim);
        ids.ff2_w = add_slot(p + "ff.fc2.weight", d, cfg.ff_dim);
        ids.ff2_b = add_slot(p + "ff.fc2.bias", 1, d);
        m_ids.layers.push_back(ids);
    }
    m_ids.lnf_g = add_slot("final_ln.gain", 1, d);
    m_ids.lnf_b = add_slot("final_ln.bias", 1, d);
    m_ids.out_w = add_slot("out.weight", cfg.stride(), d);
    m_ids.out_b = add_slot("out.bias", 1, cfg.stride());
}

VectorFieldNet VectorFieldNet::initialized(const ModelConfig& cfg, std::uint64_t seed)
{
    VectorFieldNet net(cfg);
    std::mt19937_64 rng(seed);
    for (const auto& s : net.m_slots) {
        double* p = net.m_params.data() + s.offset;
        const bool is_gain = s.name.ends_with(".gain");
        const bool is_bias = s.name.ends_with(".bias");
        const bool is_mask = s.name.ends_with("_mask");
        if (is_gain) {
            std::fill_n(p, s.size(), 1.0);
        } else if (is_bias) {
            std::fill_n(p, s.size(), 0.0);
        } else {
            // Mask embeddings are lookup tables with one active row per token.
            const double fan_in = is_mask ? 1.0 : static_cast<double>(s.cols);
            std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
            for (std::size_t i = 0; i < s.size(); ++i) {
                p[i] = dist(rng);
            }
        }
    }
    return net;
}

const ParamSlot& VectorFieldNet::slot(const std::string& name) const
{
    for (const auto& s : m_slots) {
        if (s.name == name) {
            return s;
        }
    }
    throw ContractError("no parameter named '" + name + "'");
}

std::vector<double> VectorFieldNet::forward(const FlowVector& x, double t, const ConditionMask& mask) const
{
    const NetInput in{&x, t, &mask};
    return std::move(forward(std::span<const NetInput>(&in, 1)).front());
}

std::vector<std::vector<double>> VectorFieldNet::forward(std::span<const NetInput> batch, ForwardCache* cache) const
{
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};

    const int stride = m_cfg.stride();
    const int d = m_cfg.dim;
    const int half = d / 2;
    const int heads = m_cfg.heads;
    const int head_dim = d / heads;
    const int samples = static_cast<int>(batch.size());
    c.stride = stride;
    c.nmax = m_cfg.nmax;

    auto W = [&](int id) {
        const auto& s = m_slots[id];
        return ConstMatrixMap(m_params.data() + s.offset, s.rows, s.cols);
    };
    auto Bv = [&](int id) {
        const auto& s = m_slots[id];
        return ConstRowMap(m_params.data() + s.offset, s.cols);
    };

    int rows = 0;
    for (const auto& in : batch) {
        if (!in.x || !in.mask) {
            throw ContractError("network input is missing state or mask");
        }
        if (in.x->nmax() != m_cfg.nmax || in.x->stride() != stride || in.mask->nmax() != m_cfg.nmax ||
            in.mask->stride != stride) {
            throw ContractError("network input shape does not match model configuration");
        }
        c.row_offsets.push_back(rows);
        std::vector<int> elems;
        for (int k = 0; k < m_cfg.nmax; ++k) {
            if (in.x->pad_mask[k]) {
                elems.push_back(k);
            }
        }
        rows += static_cast<int>(elems.size());
        c.element_of_row.push_back(std::move(elems));
        c.times.push_back(in.t);
    }
    c.row_offsets.push_back(rows);

    c.geometry.resize(rows, kGeometryDims);
    c.bits.resize(rows, m_cfg.bits);
    c.pos_state.resize(rows);
    c.type_state.resize(rows);
    c.side_row.assign(rows, 0);
    c.side_values = Matrix::Zero(rows, stride);
    std::vector<int> sample_of_row(rows);
    for (int s = 0; s < samples; ++s) {
        const auto& in = batch[s];
        for (std::size_t i = 0; i < c.element_of_row[s].size(); ++i) {
            const int r = c.row_offsets[s] + static_cast<int>(i);
            const int k = c.element_of_row[s][i];
            sample_of_row[r] = s;
            const double* slot = in.x->slot(k);
            for (int j = 0; j < kGeometryDims; ++j) {
                c.geometry(r, j) = slot[j];
                c.pos_state[r][j] = in.mask->is_given(k, j) ? 1 : 0;
            }
            for (int j = 0; j < m_cfg.bits; ++j) {
                c.bits(r, j) = slot[kGeometryDims + j];
            }
            c.type_state[r] = in.mask->type_given(k) ? 1 : 0;
            if (in.mask->has_side_input()) {
                c.side_row[r] = 1;
                for (int j = 0; j < stride; ++j) {
                    c.side_values(r, j) = in.mask->values[static_cast<std::size_t>(k) * stride + j];
                }
            }
        }
    }

    // Element embedding.
    c.embed.resize(rows, d);
    {
        Matrix eg = affine(c.geometry, W(m_ids.geom_w), Bv(m_ids.geom_b));
        Matrix ea = affine(c.bits, W(m_ids.type_w), Bv(m_ids.type_b));
        const auto pos_table = W(m_ids.pos_mask);
        const auto type_table = W(m_ids.type_mask);
        for (int r = 0; r < rows; ++r) {
            for (int j = 0; j < kGeometryDims; ++j) {
                eg.row(r) += pos_table.row(2 * j + c.pos_state[r][j]);
            }
            ea.row(r) += type_table.row(c.type_state[r]);
        }
        c.embed.leftCols(half) = eg;
        c.embed.rightCols(half) = ea;
    }
    Matrix h = affine(c.embed, W(m_ids.fuse_w), Bv(m_ids.fuse_b));
    {
        const auto side_w = W(m_ids.side_w);
        const auto side_b = Bv(m_ids.side_b);
        for (int r = 0; r < rows; ++r) {
            if (c.side_row[r]) {
                h.row(r) += c.side_values.row(r) * side_w.transpose() + side_b;
            }
        }
    }

    // Time conditioning shared by all layers.
    c.time_feat.resize(samples, m_cfg.time_embed_dim);
    for (int s = 0; s < samples; ++s) {
        c.time_feat.row(s) = time_features(c.times[s], m_cfg.time_embed_dim).transpose();
    }
    c.time_pre = affine(c.time_feat, W(m_ids.time1_w), Bv(m_ids.time1_b));
    c.time_act = c.time_pre.unaryExpr(&silu);
    c.tau = affine(c.time_act, W(m_ids.time2_w), Bv(m_ids.time2_b));

    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    c.layers.resize(m_cfg.layers);
    for (int l = 0; l < m_cfg.layers; ++l) {
        const LayerIds& ids = m_ids.layers[l];
        LayerCache& lc = c.layers[l];
        lc.ln1_out = layer_norm(h, Bv(ids.ln1_g), Bv(ids.ln1_b), lc.ln1);
        lc.qkv = affine(lc.ln1_out, W(ids.qkv_w), Bv(ids.qkv_b));
        lc.attn = Matrix::Zero(rows, d);
        lc.probs.resize(static_cast<std::size_t>(samples) * heads);
        for (int s = 0; s < samples; ++s) {
            const int r0 = c.row_offsets[s];
            const int n = c.row_offsets[s + 1] - r0;
            if (n == 0) {
                continue;
            }
            for (int hd = 0; hd < heads; ++hd) {
                const auto q = lc.qkv.block(r0, hd * head_dim, n, head_dim);
                const auto k = lc.qkv.block(r0, d + hd * head_dim, n, head_dim);
                const auto v = lc.qkv.block(r0, 2 * d + hd * head_dim, n, head_dim);
                Matrix p = (q * k.transpose()) * scale;
                for (int i = 0; i < n; ++i) {
                    const double mx = p.row(i).maxCoeff();
                    p.row(i) = (p.row(i).array() - mx).exp();
                    p.row(i) /= p.row(i).sum();
                }
                lc.attn.block(r0, hd * head_dim, n, head_dim) = p * v;
                lc.probs[static_cast<std::size_t>(s) * heads + hd] = std::move(p);
            }
        }
        const Matrix time_shift = affine(c.tau, W(ids.time_w), Bv(ids.time_b));
        h += affine(lc.attn, W(ids.attn_out_w), Bv(ids.attn_out_b));
        for (int r = 0; r < rows; ++r) {
            h.row(r) += time_shift.row(sample_of_row[r]);
        }
        lc.ln2_out = layer_norm(h, Bv(ids.ln2_g), Bv(ids.ln2_b), lc.ln2);
        lc.ff_pre = affine(lc.ln2_out, W(ids.ff1_w), Bv(ids.ff1_b));
        lc.ff_act = lc.ff_pre.unaryExpr(&gelu);
        h += affine(lc.ff_act, W(ids.ff2_w), Bv(ids.ff2_b));
    }
    c.lnf_out = layer_norm(h, Bv(m_ids.lnf_g), Bv(m_ids.lnf_b), c.lnf);
    const Matrix out = affine(c.lnf_out, W(m_ids.out_w), Bv(m_ids.out_b));

    std::vector<std::vector<double>> outputs(samples,
                                             std::vector<double>(static_cast<std::size_t>(m_cfg.nmax) * stride, 0.0));
    for (int s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < c.element_of_row[s].size(); ++i) {
            const int r = c.row_offsets[s] + static_cast<int>(i);
            const int k = c.element_of_row[s][i];
            for (int j = 0; j < stride; ++j) {
                outputs[s][static_cast<std::size_t>(k) * stride + j] = out(r, j);
            }
        }
    }
    c.valid = cache != nullptr;
    return outputs;
}

void VectorFieldNet::backward(const ForwardCache& c, std::span<const std::vector<double>> output_grads,
                              std::span<double> grad) const
{
    if (!c.valid) {
        throw StateError("backward called without a retained forward pass");
    }
    const int samples = static_cast<int>(c.times.size());
    if (static_cast<int>(output_grads.size()) != samples) {
        throw ContractError("backward received a gradient batch of the wrong size");
    }
    if (grad.size() != m_params.size()) {
        throw ContractError("gradient buffer does not match parameter count");
    }
    const int stride = c.stride;
    const int d = m_cfg.dim;
    const int half = d / 2;
    const int heads = m_cfg.heads;
    const int head_dim = d / heads;
    const int rows = c.row_offsets.back();
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    auto W = [&](int id) {
        const auto& s = m_slots[id];
        return ConstMatrixMap(m_params.data() + s.offset, s.rows, s.cols);
    };
    auto Bv = [&](int id) {
        const auto& s = m_slots[id];
        return ConstRowMap(m_params.data() + s.offset, s.cols);
    };
    // accumulate into aligned scratch, then add to the caller's buffer
    ParameterVector local(m_params.size(), 0.0);
    auto GW = [&](int id) {
        const auto& s = m_slots[id];
        return MatrixMap(local.data() + s.offset, s.rows, s.cols);
    };
    auto GB = [&](int id) {
        const auto& s = m_slots[id];
        return RowMap(local.data() + s.offset, s.cols);
    };

    Matrix d_out(rows, stride);
    std::vector<int> sample_of_row(rows);
    for (int s = 0; s < samples; ++s) {
        if (output_grads[s].size() != static_cast<std::size_t>(m_cfg.nmax) * stride) {
            throw ContractError("output gradient has the wrong length");
        }
        for (std::size_t i = 0; i < c.element_of_row[s].size(); ++i) {
            const int r = c.row_offsets[s] + static_cast<int>(i);
            const int k = c.element_of_row[s][i];
            sample_of_row[r] = s;
            for (int j = 0; j < stride; ++j) {
                d_out(r, j) = output_grads[s][static_cast<std::size_t>(k) * stride + j];
            }
        }
    }

    GW(m_ids.out_w).noalias() += d_out.transpose() * c.lnf_out;
    GB(m_ids.out_b) += d_out.colwise().sum();
    Matrix dh = layer_norm_backward(d_out * W(m_ids.out_w), c.lnf, Bv(m_ids.lnf_g), GB(m_ids.lnf_g),
                                    GB(m_ids.lnf_b));

    Matrix d_tau = Matrix::Zero(samples, d);
    for (int l = m_cfg.layers - 1; l >= 0; --l) {
        const LayerIds& ids = m_ids.layers[l];
        const LayerCache& lc = c.layers[l];

        // Feed-forward residual.
        GW(ids.ff2_w).noalias() += dh.transpose() * lc.ff_act;
        GB(ids.ff2_b) += dh.colwise().sum();
        Matrix d_pre = (dh * W(ids.ff2_w)).array() * lc.ff_pre.unaryExpr(&gelu_derivative).array();
        GW(ids.ff1_w).noalias() += d_pre.transpose() * lc.ln2_out;
        GB(ids.ff1_b) += d_pre.colwise().sum();
        dh += layer_norm_backward(d_pre * W(ids.ff1_w), lc.ln2, Bv(ids.ln2_g), GB(ids.ln2_g), GB(ids.ln2_b));

        // Time shift.
        Matrix d_shift = Matrix::Zero(samples, d);
        for (int r = 0; r < rows; ++r) {
            d_shift.row(sample_of_row[r]) += dh.row(r);
        }
        GW(ids.time_w).noalias() += d_shift.transpose() * c.tau;
        GB(ids.time_b) += d_shift.colwise().sum();
        d_tau.noalias() += d_shift * W(ids.time_w);

        // Attention residual.
        GW(ids.attn_out_w).noalias() += dh.transpose() * lc.attn;
        GB(ids.attn_out_b) += dh.colwise().sum();
        const Matrix d_attn = dh * W(ids.attn_out_w);
        Matrix d_qkv = Matrix::Zero(rows, 3 * d);
        for (int s = 0; s < samples; ++s) {
            const int r0 = c.row_offsets[s];
            const int n = c.row_offsets[s + 1] - r0;
            if (n == 0) {
                continue;
            }
            for (int hd = 0; hd < heads; ++hd) {
                const Matrix& p = lc.probs[static_cast<std::size_t>(s) * heads + hd];
                const auto q = lc.qkv.block(r0, hd * head_dim, n, head_dim);
                const auto k = lc.qkv.block(r0, d + hd * head_dim, n, head_dim);
                const auto v = lc.qkv.block(r0, 2 * d + hd * head_dim, n, head_dim);
                const auto d_o = d_attn.block(r0, hd * head_dim, n, head_dim);
                d_qkv.block(r0, 2 * d + hd * head_dim, n, head_dim) = p.transpose() * d_o;
                const Matrix d_p = d_o * v.transpose();
                Matrix d_s(n, n);
                for (int i = 0; i < n; ++i) {
                    const double dot = d_p.row(i).dot(p.row(i));
                    d_s.row(i) = p.row(i).array() * (d_p.row(i).array() - dot);
                }
                d_s *= scale;
                d_qkv.block(r0, hd * head_dim, n, head_dim) = d_s * k;
                d_qkv.block(r0, d + hd * head_dim, n, head_dim) = d_s.transpose() * q;
            }
        }
        GW(ids.qkv_w).noalias() += d_qkv.transpose() * lc.ln1_out;
        GB(ids.qkv_b) += d_qkv.colwise().sum();
        dh += layer_norm_backward(d_qkv * W(ids.qkv_w), lc.ln1, Bv(ids.ln1_g), GB(ids.ln1_g), GB(ids.ln1_b));
    }

    // Time MLP.
    GW(m_ids.time2_w).noalias() += d_tau.transpose() * c.time_act;
    GB(m_ids.time2_b) += d_tau.colwise().sum();
    const Matrix d_time_pre =
        (d_tau * W(m_ids.time2_w)).array() * c.time_pre.unaryExpr(&silu_derivative).array();
    GW(m_ids.time1_w).noalias() += d_time_pre.transpose() * c.time_feat;
    GB(m_ids.time1_b) += d_time_pre.colwise().sum();

    // Side input for refinement rows.
    {
        auto gw = GW(m_ids.side_w);
        auto gb = GB(m_ids.side_b);
        for (int r = 0; r < rows; ++r) {
            if (c.side_row[r]) {
                gw.noalias() += dh.row(r).transpose() * c.side_values.row(r);
                gb += dh.row(r);
            }
        }
    }

    // Fusion and element embeddings.
    GW(m_ids.fuse_w).noalias() += dh.transpose() * c.embed;
    GB(m_ids.fuse_b) += dh.colwise().sum();
    const Matrix d_embed = dh * W(m_ids.fuse_w);
    const Matrix d_geom = d_embed.leftCols(half);
    const Matrix d_type = d_embed.rightCols(half);
    GW(m_ids.geom_w).noalias() += d_geom.transpose() * c.geometry;
    GB(m_ids.geom_b) += d_geom.colwise().sum();
    GW(m_ids.type_w).noalias() += d_type.transpose() * c.bits;
    GB(m_ids.type_b) += d_type.colwise().sum();
    auto g_pos = GW(m_ids.pos_mask);
    auto g_type = GW(m_ids.type_mask);
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < kGeometryDims; ++j) {
            g_pos.row(2 * j + c.pos_state[r][j]) += d_geom.row(r);
        }
        g_type.row(c.type_state[r]) += d_type.row(r);
    }
    for (std::size_t i = 0; i < local.size(); ++i) grad[i] += local[i];
}

} // namespace layoutflow
