#include "layoutflow/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "layoutflow/errors.hpp"

namespace layoutflow {

UnconditionalEval evaluate_unconditional(const Checkpoint& ckpt, const Dataset& reference, std::size_t count,
                                         int steps, std::uint64_t seed, DiffusionSampler sampler, int workers)
{
    const auto masks = make_condition_masks(ckpt, TaskSpec{TaskKind::UnGen}, {}, count, seed);
    SampleConfig sc;
    sc.steps = steps;
    sc.seed = seed;
    sc.record_trace = true;
    const auto results = generate(ckpt, masks, sc, sampler, workers);
    UnconditionalEval out;
    std::vector<double> straightness;
    for (std::size_t i = 0; i < results.size(); ++i) {
        out.layouts.push_back(results[i].layout);
        try {
            straightness.push_back(trajectory_stats(*results[i].trace, &masks[i]).straightness);
        } catch (const DomainError&) {
        }
    }
    if (!straightness.empty()) {
        auto mid = straightness.begin() + static_cast<std::ptrdiff_t>(straightness.size() / 2);
        std::nth_element(straightness.begin(), mid, straightness.end());
        out.median_straightness = *mid;
    }
    out.report = evaluate(out.layouts, reference.layouts,
                          FeatureMap(reference.nmax, reference.categories.count()));
    return out;
}

std::vector<AblationRow> run_ablation(std::string_view what, const AblationSettings& s)
{
    struct Variant {
        std::string label;
        TrainConfig cfg;
        DiffusionSampler sampler = DiffusionSampler::Ddim;
    };
    std::vector<Variant> variants;
    if (what == "trajectory") {
        for (auto kind : {TrajectoryKind::Linear, TrajectoryKind::SineCosine, TrajectoryKind::Sine}) {
            Variant v{to_string(kind), s.base};
            v.cfg.trajectory = kind;
            variants.push_back(v);
        }
    } else if (what == "prior") {
        for (auto kind : {PriorKind::Gaussian, PriorKind::Uniform, PriorKind::Mixture}) {
            Variant v{to_string(kind), s.base};
            v.cfg.prior = kind;
            variants.push_back(v);
        }
    } else if (what == "lambda") {
        for (double lambda : {0.0, 0.1, 0.2, 0.3, 0.4}) {
            char label[32];
            std::snprintf(label, sizeof(label), "lambda=%.1f", lambda);
            Variant v{label, s.base};
            v.cfg.lambda = lambda;
            variants.push_back(v);
        }
    } else if (what == "head") {
        Variant ddpm{"diffusion-ddpm", s.base, DiffusionSampler::Ddpm};
        ddpm.cfg.head = HeadKind::Diffusion;
        Variant ddim{"diffusion-ddim", s.base, DiffusionSampler::Ddim};
        ddim.cfg.head = HeadKind::Diffusion;
        Variant flow{"flow", s.base};
        flow.cfg.head = HeadKind::Flow;
        variants = {ddpm, ddim, flow};
    } else {
        throw DomainError("unknown ablation '" + std::string(what) + "'");
    }

    std::vector<AblationRow> rows;
    const Checkpoint* diffusion_model = nullptr;
    TrainResult diffusion_trained;
    for (const auto& v : variants) {
        TrainResult trained;
        const Checkpoint* model = nullptr;
        if (v.cfg.head == HeadKind::Diffusion && diffusion_model) {
            model = diffusion_model; // DDPM and DDIM share one trained network
        } else {
            trained = train(s.train, s.model, v.cfg);
            if (v.cfg.head == HeadKind::Diffusion) {
                diffusion_trained = std::move(trained);
                diffusion_model = &diffusion_trained.checkpoint;
                model = diffusion_model;
            } else {
                model = &trained.checkpoint;
            }
        }
        const auto eval = evaluate_unconditional(*model, s.heldout, s.samples, s.sample_steps, s.seed, v.sampler,
                                                 v.cfg.workers);
        rows.push_back({v.label, eval.report, eval.median_straightness});
    }
    return rows;
}

std::string format_ablation_table(std::string_view what, const std::vector<AblationRow>& rows)
{
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof(line), "%-18s %10s %10s %10s %10s %12s\n", std::string(what).c_str(), "frechet",
                  "alignment", "overlap", "miou", "straightness");
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-18s %10.4f %10.4f %10.4f %10.4f %12.4f\n", r.label.c_str(),
                      r.report.frechet, r.report.alignment, r.report.overlap, r.report.miou,
                      r.median_straightness);
        os << line;
    }
    return os.str();
}

} // namespace layoutflow
