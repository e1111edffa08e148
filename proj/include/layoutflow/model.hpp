#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "layoutflow/conditioning.hpp"
#include "layoutflow/layout.hpp"

namespace layoutflow {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int dim = 64;
    int ff_dim = 256;
    int nmax = 8;
    int bits = 2;
    int time_embed_dim = 64;

    int stride() const noexcept { return kGeometryDims + bits; }
    /// Throws ContractError when inconsistent.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One named tensor inside the flat parameter buffer (row-major).
/// Parameter storage. A fixed base alignment keeps Eigen's vectorized
/// reductions over parameter slices bit-reproducible from run to run.
using ParameterVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct ParamSlot {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * cols; }
};

/// Sinusoidal features [sin(w_i t)..., cos(w_i t)...] with w_i geometric in [1, 1000].
Vector time_features(double t, int dim);

/// Input of one network evaluation.
struct NetInput {
    const FlowVector* x = nullptr;
    double t = 0.0;
    const ConditionMask* mask = nullptr;
};

/// Activations retained by forward() for backward().
struct ForwardCache;

/// Transformer vector field u_theta(t, x).
///
/// Elements are tokens; padded slots are never packed into the token matrix,
/// so they cannot influence real tokens and their outputs are zero. There is no
/// positional encoding, which makes the network permutation-equivariant over
/// elements.
class VectorFieldNet {
public:
    VectorFieldNet() = default;
    explicit VectorFieldNet(const ModelConfig& cfg);

    /// linear weights ~ N(0, 1/fan_in), biases 0, layer-norm gains 1.
    static VectorFieldNet initialized(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return m_cfg; }
    const std::vector<ParamSlot>& slots() const noexcept { return m_slots; }
    const ParamSlot& slot(const std::string& name) const;
    ParameterVector& parameters() noexcept { return m_params; }
    const ParameterVector& parameters() const noexcept { return m_params; }
    std::size_t parameter_count() const noexcept { return m_params.size(); }

    /// Evaluates a batch; each output has (4+B)*Nmax entries.
    std::vector<std::vector<double>> forward(std::span<const NetInput> batch, ForwardCache* cache = nullptr) const;
    std::vector<double> forward(const FlowVector& x, double t, const ConditionMask& mask) const;

    /// Accumulates dL/dtheta into `grad` given dL/doutput for the batch that
    /// filled `cache`. Throws StateError when the cache is empty.
    void backward(const ForwardCache& cache, std::span<const std::vector<double>> output_grads,
                  std::span<double> grad) const;

private:
    struct LayerIds {
        int ln1_g, ln1_b, qkv_w, qkv_b, attn_out_w, attn_out_b, time_w, time_b;
        int ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
    };
    struct Ids {
        int geom_w, geom_b, type_w, type_b, pos_mask, type_mask, side_w, side_b, fuse_w, fuse_b;
        int time1_w, time1_b, time2_w, time2_b;
        std::vector<LayerIds> layers;
        int lnf_g, lnf_b, out_w, out_b;
    };

    int add_slot(const std::string& name, int rows, int cols);

    ModelConfig m_cfg;
    std::vector<ParamSlot> m_slots;
    ParameterVector m_params;
    Ids m_ids{};

    friend struct ForwardCache;
};

struct LayerNormCache {
    Matrix xhat;
    Vector rstd;
};

struct LayerCache {
    LayerNormCache ln1;
    Matrix ln1_out;
    Matrix qkv;
    std::vector<Matrix> probs; // per sample, per head: [sample * heads + head]
    Matrix attn;
    LayerNormCache ln2;
    Matrix ln2_out;
    Matrix ff_pre;
    Matrix ff_act;
};

struct ForwardCache {
    bool valid = false;
    std::vector<int> row_offsets;  // per sample, start row in the packed matrix
    std::vector<std::vector<int>> element_of_row; // per sample, slot index for each row
    std::vector<double> times;
    Matrix geometry;
    Matrix bits;
    std::vector<std::array<int, 4>> pos_state;
    std::vector<int> type_state;
    std::vector<char> side_row;
    Matrix side_values;
    Matrix embed;     // [geom | type] before fusion
    Matrix time_feat; // samples x time_embed_dim
    Matrix time_pre;
    Matrix time_act;
    Matrix tau;
    std::vector<LayerCache> layers;
    LayerNormCache lnf;
    Matrix lnf_out;
    int stride = 0;
    int nmax = 0;
};

} // namespace layoutflow
