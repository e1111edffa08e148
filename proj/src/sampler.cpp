#include "layoutflow/sampler.hpp"

#include <cmath>

#include <json.hpp>

#include "layoutflow/errors.hpp"
#include "layoutflow/parallel.hpp"

namespace layoutflow {

FieldFn net_field(const VectorFieldNet& net, int workers)
{
    // Shards have a fixed size so outputs do not depend on the thread count.
    constexpr std::size_t shard = 16;
    return [&net, workers](std::span<const NetInput> batch) {
        std::vector<std::vector<double>> out(batch.size());
        const int chunks = static_cast<int>((batch.size() + shard - 1) / shard);
        parallel_chunks(batch.size(), chunks, [&](int, std::size_t begin, std::size_t end) {
            auto part = net.forward(batch.subspan(begin, end - begin));
            for (std::size_t i = begin; i < end; ++i) {
                out[i] = std::move(part[i - begin]);
            }
        }, std::max(1, workers));
        return out;
    };
}

std::string to_string(Solver solver)
{
    return solver == Solver::Heun ? "heun" : "euler";
}

Solver parse_solver(std::string_view name)
{
    if (name == "euler") return Solver::Euler;
    if (name == "heun") return Solver::Heun;
    throw FormatError("unknown solver '" + std::string(name) + "'");
}

void pin_conditions(FlowVector& x, const ConditionMask& mask)
{
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (mask.given[i]) {
            x.data[i] = mask.values[i];
        }
    }
    x.apply_padding();
}

FlowVector euler_step(const FlowVector& x, std::span<const double> u, double h, const ConditionMask& mask)
{
    if (!(h > 0.0)) {
        throw DomainError("step size must be positive");
    }
    if (u.size() != x.data.size()) {
        throw ContractError("vector field has the wrong length");
    }
    FlowVector out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += h * u[i];
    }
    pin_conditions(out, mask);
    return out;
}

ConditionMask sample_ungen_mask(std::span<const std::int64_t> histogram, int nmax, int bits, Rng& rng)
{
    std::vector<double> weights(histogram.begin(), histogram.end());
    if (weights.size() > static_cast<std::size_t>(nmax) + 1) {
        weights.resize(static_cast<std::size_t>(nmax) + 1);
    }
    if (!weights.empty()) {
        weights[0] = 0.0;
    }
    double total = 0.0;
    for (double w : weights) total += w;
    int n = 1;
    if (total > 0.0) {
        std::discrete_distribution<int> dist(weights.begin(), weights.end());
        n = dist(rng);
    }
    std::vector<bool> pad(nmax, false);
    for (int k = 0; k < n; ++k) pad[k] = true;
    return unconditional_mask(pad, bits);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
    std::uint64_t out[1];
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return out[0];
}

std::vector<SampleResult> sample_flow(const FieldFn& field, PriorKind prior, const CategorySet& categories,
                                      std::span<const ConditionMask> masks, const SampleConfig& cfg)
{
    if (cfg.steps < 1) {
        throw DomainError("sampling needs at least one step");
    }
    const std::size_t n = masks.size();
    std::vector<FlowVector> states(n);
    std::vector<ConditionMask> net_masks;
    net_masks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ConditionMask& m = masks[i];
        if (m.bits() != categories.bits()) {
            throw ContractError("condition mask bit count does not match the category set");
        }
        Rng rng(sample_seed(cfg.seed, i));
        states[i] = sample_prior(prior, m.nmax(), m.bits(), rng);
        states[i].pad_mask = m.pad_mask;
        if (cfg.trajectory_conditioning) {
            states[i].apply_padding();
            net_masks.push_back(unconditional_mask(m.pad_mask, m.bits()));
        } else {
            pin_conditions(states[i], m);
            net_masks.push_back(m);
        }
    }

    std::vector<SampleResult> results(n);
    if (cfg.record_trace) {
        for (std::size_t i = 0; i < n; ++i) {
            results[i].trace.emplace();
            results[i].trace->states.push_back(states[i]);
            results[i].trace->times.push_back(0.0);
        }
    }

    const double h = 1.0 / cfg.steps;
    std::vector<NetInput> inputs(n);
    auto evaluate = [&](const std::vector<FlowVector>& xs, double t) {
        for (std::size_t i = 0; i < n; ++i) {
            inputs[i] = NetInput{&xs[i], t, &net_masks[i]};
        }
        return field(inputs);
    };
    auto advance = [&](const FlowVector& x, std::span<const double> u, std::size_t i, int step) {
        if (cfg.trajectory_conditioning) {
            const auto steered = inference_condition_update(u, x, masks[i], step, cfg.steps);
            FlowVector out = x;
            for (std::size_t j = 0; j < out.data.size(); ++j) {
                out.data[j] += h * steered[j];
            }
            out.apply_padding();
            return out;
        }
        return euler_step(x, u, h, masks[i]);
    };

    for (int step = 0; step < cfg.steps; ++step) {
        const double t = static_cast<double>(step) / cfg.steps;
        auto u = evaluate(states, t);
        if (cfg.solver == Solver::Heun) {
            std::vector<FlowVector> predicted(n);
            for (std::size_t i = 0; i < n; ++i) {
                predicted[i] = advance(states[i], u[i], i, step);
            }
            const double t_next = static_cast<double>(step + 1) / cfg.steps;
            const auto u2 = evaluate(predicted, t_next);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < u[i].size(); ++j) {
                    u[i][j] = 0.5 * (u[i][j] + u2[i][j]);
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            states[i] = advance(states[i], u[i], i, step);
            if (cfg.record_trace) {
                results[i].trace->states.push_back(states[i]);
                results[i].trace->times.push_back(static_cast<double>(step + 1) / cfg.steps);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        results[i].layout = vector_to_layout(states[i], categories);
        results[i].final_state = std::move(states[i]);
    }
    return results;
}

SampleResult sample_flow(const FieldFn& field, PriorKind prior, const CategorySet& categories,
                         const ConditionMask& mask, const SampleConfig& cfg)
{
    return std::move(sample_flow(field, prior, categories, std::span<const ConditionMask>(&mask, 1), cfg).front());
}

TrajectoryStats trajectory_stats(const TrajectoryTrace& trace, const ConditionMask* mask)
{
    if (trace.states.size() < 2) {
        throw DomainError("trajectory needs at least two states");
    }
    const FlowVector& first = trace.states.front();
    std::vector<char> free(first.data.size(), 0);
    const int stride = first.stride();
    for (std::size_t i = 0; i < free.size(); ++i) {
        const bool real = first.pad_mask[i / stride];
        const bool given = mask && mask->given[i];
        free[i] = real && !given;
    }
    auto distance = [&](const FlowVector& a, const FlowVector& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < free.size(); ++i) {
            if (free[i]) {
                const double d = a.data[i] - b.data[i];
                s += d * d;
            }
        }
        return std::sqrt(s);
    };
    TrajectoryStats stats;
    for (std::size_t i = 1; i < trace.states.size(); ++i) {
        stats.path_length += distance(trace.states[i], trace.states[i - 1]);
    }
    if (stats.path_length == 0.0) {
        throw DomainError("trajectory has zero length");
    }
    stats.straightness = distance(trace.states.back(), first) / stats.path_length;
    return stats;
}

std::string trace_to_json(const TrajectoryTrace& trace)
{
    nlohmann::json doc = nlohmann::json::array();
    for (std::size_t i = 0; i < trace.states.size(); ++i) {
        const FlowVector& s = trace.states[i];
        nlohmann::json pad = nlohmann::json::array();
        for (bool b : s.pad_mask) pad.push_back(b);
        doc.push_back({{"t", trace.times[i]}, {"data", s.data}, {"pad_mask", pad}});
    }
    return doc.dump();
}

TrajectoryTrace trace_from_json(const std::string& text)
{
    TrajectoryTrace trace;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("trace: ") + e.what());
    }
    if (!doc.is_array()) {
        throw FormatError("trace must be a JSON array");
    }
    for (const auto& entry : doc) {
        if (!entry.contains("t") || !entry.contains("data") || !entry.contains("pad_mask")) {
            throw FormatError("trace entries need t, data and pad_mask");
        }
        FlowVector s;
        s.data = entry.at("data").get<std::vector<double>>();
        s.pad_mask = entry.at("pad_mask").get<std::vector<bool>>();
        if (s.pad_mask.empty() || s.data.size() % s.pad_mask.size() != 0) {
            throw FormatError("trace state has inconsistent shape");
        }
        trace.times.push_back(entry.at("t").get<double>());
        trace.states.push_back(std::move(s));
    }
    return trace;
}

} // namespace layoutflow
