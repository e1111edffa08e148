#include "layoutflow/trainer.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "layoutflow/errors.hpp"
#include "layoutflow/parallel.hpp"

namespace layoutflow {

void TrainConfig::validate() const
{
    if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
    if (batch_size < 1) throw DomainError("batch size must be at least 1");
    if (steps < 0) throw DomainError("step count must be non-negative");
    if (!(lambda >= 0.0)) throw DomainError("lambda must be non-negative");
    if (workers < 1) throw DomainError("worker count must be at least 1");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg)
{
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : cfg.tasks) tasks.push_back(to_string(t));
    return {{"lr", cfg.lr},
            {"weight_decay", cfg.weight_decay},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"eps", cfg.eps},
            {"batch_size", cfg.batch_size},
            {"steps", cfg.steps},
            {"lambda", cfg.lambda},
            {"trajectory", to_string(cfg.trajectory)},
            {"prior", to_string(cfg.prior)},
            {"seed", cfg.seed},
            {"eval_every", cfg.eval_every},
            {"checkpoint_every", cfg.checkpoint_every},
            {"head", to_string(cfg.head)},
            {"train_refinement", cfg.train_refinement},
            {"tasks", tasks},
            {"workers", cfg.workers}};
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw FormatError("train config must be a JSON object");
    }
    static const std::set<std::string> known{"lr",    "weight_decay", "beta1",      "beta2",
                                             "eps",   "batch_size",   "steps",      "lambda",
                                             "trajectory", "prior",   "seed",       "eval_every",
                                             "checkpoint_every", "head", "train_refinement", "tasks",
                                             "workers"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw FormatError("unknown train config key '" + key + "'");
        }
    }
    TrainConfig cfg;
    try {
        cfg.lr = j.value("lr", cfg.lr);
        cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
        cfg.beta1 = j.value("beta1", cfg.beta1);
        cfg.beta2 = j.value("beta2", cfg.beta2);
        cfg.eps = j.value("eps", cfg.eps);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.steps = j.value("steps", cfg.steps);
        cfg.lambda = j.value("lambda", cfg.lambda);
        if (j.contains("trajectory")) cfg.trajectory = parse_trajectory_kind(j.at("trajectory").get<std::string>());
        if (j.contains("prior")) cfg.prior = parse_prior_kind(j.at("prior").get<std::string>());
        cfg.seed = j.value("seed", cfg.seed);
        cfg.eval_every = j.value("eval_every", cfg.eval_every);
        cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
        if (j.contains("head")) cfg.head = parse_head_kind(j.at("head").get<std::string>());
        cfg.train_refinement = j.value("train_refinement", cfg.train_refinement);
        if (j.contains("tasks")) {
            for (const auto& t : j.at("tasks")) cfg.tasks.push_back(parse_task(t.get<std::string>()));
        }
        cfg.workers = j.value("workers", cfg.workers);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string LogEntry::to_json() const
{
    nlohmann::json j{{"step", step}, {"loss", loss}, {"mse", mse}, {"l1_geo", l1_geo}, {"wall_ms", wall_ms}};
    if (metrics) {
        j["metrics"] = nlohmann::json::parse(metrics->to_json());
    }
    return j.dump();
}

std::vector<BatchItem> draw_training_batch(const Dataset& data, const TrainConfig& cfg, const NoiseSchedule& schedule,
                                           std::int64_t step)
{
    if (data.layouts.empty()) {
        throw DomainError("training dataset is empty");
    }
    std::vector<BatchItem> batch;
    batch.reserve(cfg.batch_size);
    const int bits = data.categories.bits();
    for (int i = 0; i < cfg.batch_size; ++i) {
        Rng rng(sample_seed(cfg.seed, static_cast<std::size_t>(step) * 1000003ull + static_cast<std::size_t>(i)));
        std::uniform_int_distribution<std::size_t> pick(0, data.layouts.size() - 1);
        BatchItem item;
        item.layout_index = pick(rng);
        const FlowVector x1 = layout_to_vector(data.layouts[item.layout_index], data.categories, data.nmax);
        TaskSpec task;
        if (cfg.tasks.empty()) {
            task.kind = sample_training_task(rng, cfg.train_refinement);
        } else {
            std::uniform_int_distribution<std::size_t> which(0, cfg.tasks.size() - 1);
            task = cfg.tasks[which(rng)];
        }
        item.task = task.kind;
        ConditionMask mask = build_mask(task, x1, rng);
        if (cfg.head == HeadKind::Flow) {
            FlowVector x0 = sample_prior(cfg.prior, data.nmax, bits, rng);
            x0.pad_mask = x1.pad_mask;
            x0.apply_padding();
            std::uniform_real_distribution<double> time(0.0, 1.0);
            const double t = time(rng);
            item.sample = make_training_sample(x0, x1, t, std::move(mask), cfg.trajectory);
        } else {
            std::uniform_int_distribution<int> index(1, schedule.steps());
            auto ds = make_diffusion_sample(x1, index(rng), std::move(mask), schedule, rng);
            item.sample = std::move(ds.sample);
            item.l1_scale = ds.x0_scale;
        }
        batch.push_back(std::move(item));
    }
    return batch;
}

namespace {

struct StepOutcome {
    LossTerms loss;
    std::vector<double> grad;
};

bool any_loss_dim(const BatchItem& item)
{
    for (char c : item.sample.loss_mask) {
        if (c) return true;
    }
    return false;
}

constexpr std::size_t kGradientShard = 8;

StepOutcome compute_step(const VectorFieldNet& net, const std::vector<BatchItem>& batch, double lambda, int workers)
{
    std::vector<const BatchItem*> active;
    for (const auto& item : batch) {
        if (any_loss_dim(item)) active.push_back(&item);
    }
    StepOutcome out;
    out.grad.assign(net.parameter_count(), 0.0);
    if (active.empty()) {
        return out;
    }
    const double weight = 1.0 / static_cast<double>(active.size());
    // fixed shard size keeps the reduction order independent of the thread count
    const int chunks = static_cast<int>((active.size() + kGradientShard - 1) / kGradientShard);
    std::vector<std::vector<double>> chunk_grads(chunks);
    std::vector<LossTerms> chunk_loss(chunks);

    parallel_chunks(active.size(), chunks, [&](int chunk, std::size_t begin, std::size_t end) {
        std::vector<NetInput> inputs;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& s = active[i]->sample;
            inputs.push_back({&s.x_t, s.t, &s.mask});
        }
        ForwardCache cache;
        const auto preds = net.forward(inputs, &cache);
        std::vector<std::vector<double>> dout(preds.size());
        LossTerms acc;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const BatchItem& item = *active[begin + i];
            dout[i].assign(preds[i].size(), 0.0);
            const LossTerms l = regression_loss(preds[i], item.sample.v_target, item.sample.loss_mask,
                                                item.sample.x_t.stride(), lambda, item.l1_scale, dout[i]);
            for (double& g : dout[i]) g *= weight;
            acc.total += l.total * weight;
            acc.mse += l.mse * weight;
            acc.l1_geo += l.l1_geo * weight;
        }
        chunk_grads[chunk].assign(net.parameter_count(), 0.0);
        net.backward(cache, dout, chunk_grads[chunk]);
        chunk_loss[chunk] = acc;
    }, workers);
    for (int c = 0; c < chunks; ++c) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += chunk_grads[c][i];
        out.loss.total += chunk_loss[c].total;
        out.loss.mse += chunk_loss[c].mse;
        out.loss.l1_geo += chunk_loss[c].l1_geo;
    }
    return out;
}

MetricsReport quick_metrics(const Checkpoint& ckpt, const Dataset& data, std::uint64_t seed, int workers)
{
    const std::size_t count = std::min<std::size_t>(64, data.layouts.size());
    const auto masks = make_condition_masks(ckpt, TaskSpec{TaskKind::UnGen}, {}, count, seed);
    SampleConfig sc;
    sc.steps = 50;
    sc.seed = seed;
    const auto results = generate(ckpt, masks, sc, DiffusionSampler::Ddim, workers);
    std::vector<Layout> gen;
    for (const auto& r : results) gen.push_back(r.layout);
    const std::span<const Layout> ref(data.layouts.data(), count);
    return evaluate(gen, ref, FeatureMap(data.nmax, data.categories.count()));
}

} // namespace

TrainResult train(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOptions& options)
{
    cfg.validate();
    if (data.layouts.empty()) {
        throw DomainError("training dataset is empty");
    }
    if (model_cfg.nmax != data.nmax || model_cfg.bits != data.categories.bits()) {
        throw ContractError("model configuration does not match the dataset (nmax/bits)");
    }

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;
    if (options.resume) {
        ckpt = *options.resume;
        if (!(ckpt.net.config() == model_cfg)) {
            throw ContractError("resume checkpoint has a different model configuration");
        }
    } else {
        ckpt.net = VectorFieldNet::initialized(model_cfg, cfg.seed);
        ckpt.step = 0;
    }
    ckpt.head = cfg.head;
    ckpt.prior = cfg.prior;
    ckpt.trajectory = cfg.trajectory;
    ckpt.categories = data.categories;
    ckpt.element_histogram = data.element_histogram;
    ckpt.train_config = train_config_to_json(cfg);
    ckpt.train_config.erase("workers"); // results do not depend on it
    if (!ckpt.optimizer) {
        ckpt.optimizer.emplace();
    }
    const NoiseSchedule schedule = ckpt.diffusion.schedule();
    const AdamWConfig opt = cfg.optimizer();

    const auto start = std::chrono::steady_clock::now();
    for (std::int64_t step = ckpt.step; step < cfg.steps; ++step) {
        const auto batch = draw_training_batch(data, cfg, schedule, step);
        StepOutcome outcome = compute_step(ckpt.net, batch, cfg.lambda, cfg.workers);
        if (!std::isfinite(outcome.loss.total)) {
            throw NumericError("non-finite loss at step " + std::to_string(step));
        }
        try {
            adamw_step(ckpt.net.parameters(), outcome.grad, *ckpt.optimizer, opt);
        } catch (const NumericError& e) {
            throw NumericError("step " + std::to_string(step) + ": " + e.what());
        }
        ckpt.step = step + 1;

        LogEntry entry;
        entry.step = step;
        entry.loss = outcome.loss.total;
        entry.mse = outcome.loss.mse;
        entry.l1_geo = outcome.loss.l1_geo;
        entry.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (cfg.eval_every > 0 && ckpt.step % cfg.eval_every == 0) {
            entry.metrics = quick_metrics(ckpt, data, cfg.seed + static_cast<std::uint64_t>(step), cfg.workers);
        }
        if (options.log) {
            *options.log << entry.to_json() << '\n';
        }
        if (options.on_step) {
            options.on_step(entry);
        }
        result.log.push_back(std::move(entry));
        if (options.checkpoint && cfg.checkpoint_every > 0 && ckpt.step % cfg.checkpoint_every == 0) {
            save_checkpoint(ckpt, *options.checkpoint);
        }
    }
    if (options.checkpoint) {
        save_checkpoint(ckpt, *options.checkpoint);
    }
    return result;
}

std::vector<ConditionMask> make_condition_masks(const Checkpoint& ckpt, const TaskSpec& task,
                                                std::span<const Layout> conditions, std::size_t count,
                                                std::uint64_t seed)
{
    const int nmax = ckpt.net.config().nmax;
    const int bits = ckpt.net.config().bits;
    std::vector<ConditionMask> masks;
    masks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(sample_seed(seed ^ 0xc0d1ull, i));
        if (task.kind == TaskKind::UnGen) {
            masks.push_back(sample_ungen_mask(ckpt.element_histogram, nmax, bits, rng));
            continue;
        }
        if (conditions.empty()) {
            throw DomainError("task '" + to_string(task) + "' needs condition layouts");
        }
        const Layout& l = conditions[i % conditions.size()];
        masks.push_back(build_mask(task, layout_to_vector(l, ckpt.categories, nmax), rng));
    }
    return masks;
}

std::vector<SampleResult> generate(const Checkpoint& ckpt, std::span<const ConditionMask> masks,
                                   const SampleConfig& cfg, DiffusionSampler sampler, int workers)
{
    const FieldFn field = net_field(ckpt.net, workers);
    if (ckpt.head == HeadKind::Diffusion) {
        return sample_diffusion(field, sampler, ckpt.diffusion.schedule(), ckpt.categories, masks, cfg);
    }
    return sample_flow(field, ckpt.prior, ckpt.categories, masks, cfg);
}

} // namespace layoutflow
