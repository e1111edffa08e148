// layoutflow command-line entry point.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "layoutflow/ablation.hpp"
#include "layoutflow/errors.hpp"
#include "layoutflow/parallel.hpp"
#include "layoutflow/render.hpp"
#include "layoutflow/trainer.hpp"

using namespace layoutflow;

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write " + path);
    }
    out << text;
}

Dataset results_as_dataset(const std::vector<SampleResult>& results, const Checkpoint& ckpt)
{
    Dataset ds;
    ds.categories = ckpt.categories;
    ds.nmax = ckpt.net.config().nmax;
    for (const auto& r : results) ds.layouts.push_back(r.layout);
    ds.rebuild_histogram();
    return ds;
}

struct SynthArgs {
    std::string out;
    SyntheticConfig cfg;
};

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out = "model.ckpt";
    std::string log;
    std::string resume;
    int nmax = 0;
    ModelConfig model;
    std::int64_t steps = -1;
    std::int64_t seed = -1;
    double lambda = -1.0;
    int batch_size = 0;
    std::string trajectory;
    std::string prior;
    std::string head;
};

struct SampleArgs {
    std::string checkpoint;
    std::string task = "un-gen";
    std::string condition;
    std::string out = "samples.json";
    std::string trace_out;
    std::string solver = "euler";
    std::string sampler = "ddim";
    int num = 16;
    int steps = 100;
    std::uint64_t seed = 0;
    bool trajectory_conditioning = false;
};

struct EvalArgs {
    std::string generated;
    std::string reference;
    std::string out;
    int nmax = 0;
};

struct RenderArgs {
    std::string layout;
    std::string out = "layout.svg";
    std::string trace;
    int index = 0;
    int width = 360;
    int height = 640;
};

struct TraceArgs {
    std::string checkpoint;
    std::string out = "trace.svg";
    std::string trace_out;
    std::string task = "un-gen";
    std::string condition;
    std::string sampler = "ddim";
    int steps = 100;
    std::uint64_t seed = 0;
};

struct AblateArgs {
    std::string what;
    std::string data;
    int train_steps = 2000;
    int samples = 200;
    int sample_steps = 100;
    int batch_size = 64;
    double holdout = 0.2;
    std::uint64_t seed = 0;
    ModelConfig model;
};

int run_synth(const SynthArgs& a)
{
    const Dataset ds = generate_synthetic_dataset(a.cfg);
    save_dataset(ds, a.out);
    std::cout << "wrote " << ds.size() << " layouts to " << a.out << '\n';
    return 0;
}

int run_train(TrainArgs a)
{
    const LoadResult loaded = load_dataset(a.data, a.nmax);
    if (loaded.skipped > 0) {
        std::cerr << "skipped " << loaded.skipped << " layouts with more than " << loaded.dataset.nmax
                  << " elements\n";
    }
    TrainConfig cfg;
    if (!a.config.empty()) {
        auto j = nlohmann::json::parse(read_file(a.config));
        for (const char* key : {"layers", "heads", "dim", "ff_dim", "time_embed_dim"}) {
            if (j.contains(key)) {
                const int v = j.at(key).get<int>();
                std::string k = key;
                if (k == "layers") a.model.layers = v;
                if (k == "heads") a.model.heads = v;
                if (k == "dim") a.model.dim = v;
                if (k == "ff_dim") a.model.ff_dim = v;
                if (k == "time_embed_dim") a.model.time_embed_dim = v;
                j.erase(key);
            }
        }
        cfg = train_config_from_json(j);
    }
    if (a.steps >= 0) cfg.steps = a.steps;
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (a.lambda >= 0.0) cfg.lambda = a.lambda;
    if (a.batch_size > 0) cfg.batch_size = a.batch_size;
    if (!a.trajectory.empty()) cfg.trajectory = parse_trajectory_kind(a.trajectory);
    if (!a.prior.empty()) cfg.prior = parse_prior_kind(a.prior);
    if (!a.head.empty()) cfg.head = parse_head_kind(a.head);
    cfg.workers = worker_count();
    a.model.nmax = loaded.dataset.nmax;
    a.model.bits = loaded.dataset.categories.bits();

    std::ofstream log_file;
    TrainOptions opts;
    if (!a.log.empty()) {
        log_file.open(a.log);
        opts.log = &log_file;
    }
    opts.checkpoint = a.out;
    Checkpoint resume;
    if (!a.resume.empty()) {
        resume = load_checkpoint(a.resume);
        opts.resume = &resume;
        a.model = resume.net.config();
    }
    const auto result = train(loaded.dataset, a.model, cfg, opts);
    const auto& log = result.log;
    if (!log.empty()) {
        std::cout << "step " << log.back().step + 1 << " loss " << log.back().loss << '\n';
    }
    std::cout << "checkpoint written to " << a.out << '\n';
    return 0;
}

std::vector<Layout> condition_layouts(const std::string& path, int nmax)
{
    if (path.empty()) {
        return {};
    }
    return load_dataset(path, nmax).dataset.layouts;
}

int run_sample(const SampleArgs& a)
{
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const TaskSpec task = parse_task(a.task);
    const auto conditions = condition_layouts(a.condition, ckpt.net.config().nmax);
    const auto masks = make_condition_masks(ckpt, task, conditions, static_cast<std::size_t>(a.num), a.seed);
    SampleConfig sc;
    sc.steps = a.steps;
    sc.seed = a.seed;
    sc.solver = parse_solver(a.solver);
    sc.trajectory_conditioning = a.trajectory_conditioning;
    sc.record_trace = !a.trace_out.empty();
    const auto sampler = a.sampler == "ddpm" ? DiffusionSampler::Ddpm : DiffusionSampler::Ddim;
    if (a.sampler != "ddpm" && a.sampler != "ddim") {
        throw FormatError("unknown sampler '" + a.sampler + "'");
    }
    const auto results = generate(ckpt, masks, sc, sampler, worker_count());
    save_dataset(results_as_dataset(results, ckpt), a.out);
    if (sc.record_trace && !results.empty()) {
        write_file(a.trace_out, trace_to_json(*results.front().trace));
    }
    std::cout << "wrote " << results.size() << " layouts to " << a.out << '\n';
    return 0;
}

int run_eval(const EvalArgs& a)
{
    const Dataset gen = load_dataset(a.generated, a.nmax).dataset;
    const Dataset ref = load_dataset(a.reference, a.nmax).dataset;
    if (gen.categories.count() != ref.categories.count()) {
        throw ContractError("generated and reference sets use different category sets");
    }
    const FeatureMap features(std::max(gen.nmax, ref.nmax), ref.categories.count());
    const MetricsReport report = evaluate(gen.layouts, ref.layouts, features);
    const std::string text = report.to_json();
    std::cout << text << '\n';
    if (!a.out.empty()) {
        write_file(a.out, text + "\n");
    }
    return 0;
}

int run_render(const RenderArgs& a)
{
    const Dataset ds = load_dataset(a.layout).dataset;
    if (a.index < 0 || static_cast<std::size_t>(a.index) >= ds.size()) {
        throw DomainError("layout index out of range");
    }
    RenderStyle style;
    style.width = a.width;
    style.height = a.height;
    TrajectoryTrace trace;
    if (!a.trace.empty()) {
        trace = trace_from_json(read_file(a.trace));
    }
    write_file(a.out, render_svg(ds.layouts[a.index], style, a.trace.empty() ? nullptr : &trace));
    std::cout << "wrote " << a.out << '\n';
    return 0;
}

int run_trace(const TraceArgs& a)
{
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const TaskSpec task = parse_task(a.task);
    const auto conditions = condition_layouts(a.condition, ckpt.net.config().nmax);
    const auto masks = make_condition_masks(ckpt, task, conditions, 1, a.seed);
    SampleConfig sc;
    sc.steps = a.steps;
    sc.seed = a.seed;
    sc.record_trace = true;
    const auto sampler = a.sampler == "ddpm" ? DiffusionSampler::Ddpm : DiffusionSampler::Ddim;
    const auto results = generate(ckpt, masks, sc, sampler, 1);
    const SampleResult& r = results.front();
    const TrajectoryStats stats = trajectory_stats(*r.trace, &masks.front());
    write_file(a.out, render_svg(r.layout, RenderStyle{}, &*r.trace));
    if (!a.trace_out.empty()) {
        write_file(a.trace_out, trace_to_json(*r.trace));
    }
    std::cout << "path_length " << stats.path_length << "\nstraightness " << stats.straightness << '\n';
    return 0;
}

int run_ablate(const AblateArgs& a)
{
    Dataset full;
    if (a.data.empty()) {
        SyntheticConfig sc;
        sc.num_layouts = 625;
        sc.seed = a.seed + 7;
        full = generate_synthetic_dataset(sc);
    } else {
        full = load_dataset(a.data).dataset;
    }
    auto [train_set, heldout] = split_dataset(full, a.holdout, a.seed);
    AblationSettings s;
    s.train = std::move(train_set);
    s.heldout = std::move(heldout);
    s.model = a.model;
    s.model.nmax = full.nmax;
    s.model.bits = full.categories.bits();
    s.base.steps = a.train_steps;
    s.base.batch_size = a.batch_size;
    s.base.seed = a.seed;
    s.base.workers = worker_count();
    s.samples = static_cast<std::size_t>(a.samples);
    s.sample_steps = a.sample_steps;
    s.seed = a.seed;
    const auto rows = run_ablation(a.what, s);
    std::cout << format_ablation_table(a.what, rows);
    return 0;
}

void add_model_flags(CLI::App* cmd, ModelConfig& m)
{
    cmd->add_option("--layers", m.layers, "Transformer layers")->capture_default_str();
    cmd->add_option("--heads", m.heads, "Attention heads")->capture_default_str();
    cmd->add_option("--dim", m.dim, "Model dimension")->capture_default_str();
    cmd->add_option("--ff-dim", m.ff_dim, "Feed-forward dimension")->capture_default_str();
    cmd->add_option("--time-embed-dim", m.time_embed_dim, "Sinusoidal time feature size")->capture_default_str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Flow-matching layout generation"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic grid-layout dataset");
    synth_cmd->add_option("--out", synth.out, "Output dataset JSON")->required();
    synth_cmd->add_option("--num", synth.cfg.num_layouts, "Number of layouts")->capture_default_str();
    synth_cmd->add_option("--categories", synth.cfg.categories, "Category count")->capture_default_str();
    synth_cmd->add_option("--nmax", synth.cfg.nmax, "Maximum elements per layout")->capture_default_str();
    synth_cmd->add_option("--grid", synth.cfg.grid, "Lattice resolution")->capture_default_str();
    synth_cmd->add_option("--seed", synth.cfg.seed, "Random seed")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--data", train_args.data, "Dataset JSON")->required();
    train_cmd->add_option("--config", train_args.config, "Flat JSON train config");
    train_cmd->add_option("--out", train_args.out, "Checkpoint path")->capture_default_str();
    train_cmd->add_option("--log", train_args.log, "JSON-lines training log");
    train_cmd->add_option("--resume", train_args.resume, "Checkpoint to resume from");
    train_cmd->add_option("--nmax", train_args.nmax, "Maximum elements (default: file or 20)");
    train_cmd->add_option("--steps", train_args.steps, "Training steps");
    train_cmd->add_option("--seed", train_args.seed, "Random seed");
    train_cmd->add_option("--lambda", train_args.lambda, "L1 geometry weight");
    train_cmd->add_option("--batch-size", train_args.batch_size, "Batch size");
    train_cmd->add_option("--trajectory", train_args.trajectory, "linear | sincos | sine");
    train_cmd->add_option("--prior", train_args.prior, "gaussian | uniform | mixture");
    train_cmd->add_option("--head", train_args.head, "flow | diffusion");
    add_model_flags(train_cmd, train_args.model);

    SampleArgs sample;
    auto* sample_cmd = app.add_subcommand("sample", "Generate layouts from a checkpoint");
    sample_cmd->add_option("--checkpoint", sample.checkpoint, "Checkpoint path")->required();
    sample_cmd->add_option("--task", sample.task,
                           "un-gen | gen-type | gen-typesize | completion | completion80 | refinement")
        ->capture_default_str();
    sample_cmd->add_option("--condition", sample.condition, "Dataset JSON with condition layouts");
    sample_cmd->add_option("--num", sample.num, "Number of layouts")->capture_default_str();
    sample_cmd->add_option("--steps", sample.steps, "Solver steps")->capture_default_str();
    sample_cmd->add_option("--seed", sample.seed, "Random seed")->capture_default_str();
    sample_cmd->add_option("--solver", sample.solver, "euler | heun")->capture_default_str();
    sample_cmd->add_option("--sampler", sample.sampler, "Diffusion sampler: ddpm | ddim")->capture_default_str();
    sample_cmd->add_flag("--trajectory-conditioning", sample.trajectory_conditioning,
                         "Steer condition dims during inference instead of pinning");
    sample_cmd->add_option("--out", sample.out, "Output dataset JSON")->capture_default_str();
    sample_cmd->add_option("--trace-out", sample.trace_out, "Write the first sample's trace JSON");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score generated layouts against a reference set");
    eval_cmd->add_option("--generated", eval_args.generated, "Generated dataset JSON")->required();
    eval_cmd->add_option("--reference", eval_args.reference, "Reference dataset JSON")->required();
    eval_cmd->add_option("--nmax", eval_args.nmax, "Maximum elements (default: file or 20)");
    eval_cmd->add_option("--out", eval_args.out, "Write the report JSON here as well");

    RenderArgs render;
    auto* render_cmd = app.add_subcommand("render", "Render a layout to SVG");
    render_cmd->add_option("--layout", render.layout, "Dataset JSON")->required();
    render_cmd->add_option("--index", render.index, "Layout index")->capture_default_str();
    render_cmd->add_option("--trace", render.trace, "Trace JSON to overlay");
    render_cmd->add_option("--width", render.width, "Canvas width in px")->capture_default_str();
    render_cmd->add_option("--height", render.height, "Canvas height in px")->capture_default_str();
    render_cmd->add_option("--out", render.out, "SVG output")->capture_default_str();

    TraceArgs trace;
    auto* trace_cmd = app.add_subcommand("trace", "Render a sampling trajectory and print its statistics");
    trace_cmd->add_option("--checkpoint", trace.checkpoint, "Checkpoint path")->required();
    trace_cmd->add_option("--out", trace.out, "SVG output")->capture_default_str();
    trace_cmd->add_option("--trace-out", trace.trace_out, "Trace JSON output");
    trace_cmd->add_option("--task", trace.task, "Conditioning task")->capture_default_str();
    trace_cmd->add_option("--condition", trace.condition, "Dataset JSON with condition layouts");
    trace_cmd->add_option("--sampler", trace.sampler, "Diffusion sampler: ddpm | ddim")->capture_default_str();
    trace_cmd->add_option("--steps", trace.steps, "Solver steps")->capture_default_str();
    trace_cmd->add_option("--seed", trace.seed, "Random seed")->capture_default_str();

    AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation grid at desk scale");
    ablate_cmd->add_option("--what", ablate.what, "trajectory | prior | lambda | head")
        ->required()
        ->check(CLI::IsMember({"trajectory", "prior", "lambda", "head"}));
    ablate_cmd->add_option("--data", ablate.data, "Dataset JSON (default: synthetic)");
    ablate_cmd->add_option("--train-steps", ablate.train_steps, "Training steps per variant")->capture_default_str();
    ablate_cmd->add_option("--batch-size", ablate.batch_size, "Batch size")->capture_default_str();
    ablate_cmd->add_option("--samples", ablate.samples, "Generated layouts per variant")->capture_default_str();
    ablate_cmd->add_option("--sample-steps", ablate.sample_steps, "Solver steps")->capture_default_str();
    ablate_cmd->add_option("--holdout", ablate.holdout, "Held-out fraction")->capture_default_str();
    ablate_cmd->add_option("--seed", ablate.seed, "Random seed")->capture_default_str();
    add_model_flags(ablate_cmd, ablate.model);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*synth_cmd) return run_synth(synth);
        if (*train_cmd) return run_train(train_args);
        if (*sample_cmd) return run_sample(sample);
        if (*eval_cmd) return run_eval(eval_args);
        if (*render_cmd) return run_render(render);
        if (*trace_cmd) return run_trace(trace);
        if (*ablate_cmd) return run_ablate(ablate);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
