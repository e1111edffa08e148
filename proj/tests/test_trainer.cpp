#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "layoutflow/checkpoint.hpp"
#include "layoutflow/errors.hpp"
#include "layoutflow/optim.hpp"
#include "layoutflow/trainer.hpp"

using namespace layoutflow;

namespace {

ModelConfig small_model()
{
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.dim = 32;
    cfg.ff_dim = 64;
    cfg.nmax = 8;
    cfg.bits = 2;
    cfg.time_embed_dim = 16;
    return cfg;
}

Dataset small_data(int n = 200, std::uint64_t seed = 7)
{
    SyntheticConfig s;
    s.num_layouts = n;
    s.seed = seed;
    return generate_synthetic_dataset(s);
}

TrainConfig quick(std::int64_t steps)
{
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 16;
    cfg.lr = 1e-3;
    cfg.seed = 3;
    return cfg;
}

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("layoutflow_unit_" + name);
}

std::string file_bytes(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

double mean_loss(const std::vector<LogEntry>& log, std::size_t from, std::size_t to)
{
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += log[i].loss;
    return s / static_cast<double>(to - from);
}

} // namespace

TEST_CASE("adamw single-step examples")
{
    std::vector<double> p{1.0};
    const std::vector<double> g{0.5};
    AdamWState st;
    adamw_step(p, g, st, {0.1, 0.0, 0.9, 0.999, 1e-8});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(st.step == 1);
    CHECK(st.m[0] == doctest::Approx(0.05));
    CHECK(st.v[0] == doctest::Approx(0.00025));

    std::vector<double> q{1.0};
    AdamWState sq;
    adamw_step(q, g, sq, {0.1, 0.01, 0.9, 0.999, 1e-8});
    CHECK(q[0] == doctest::Approx(1.0 - 0.1 * 0.01 - 0.1).epsilon(1e-7));

    std::vector<double> z{2.0};
    AdamWState sz;
    adamw_step(z, std::vector<double>{0.0}, sz, {0.1, 0.0, 0.9, 0.999, 1e-8});
    CHECK(z[0] == 2.0);

    std::vector<double> bad{1.0, 1.0};
    AdamWState sb;
    CHECK_THROWS_AS(adamw_step(bad, std::vector<double>{0.0, std::numeric_limits<double>::quiet_NaN()}, sb, {}),
                    NumericError);
}

TEST_CASE("train config json")
{
    TrainConfig cfg;
    cfg.lr = 0.003;
    cfg.steps = 77;
    cfg.trajectory = TrajectoryKind::Sine;
    cfg.prior = PriorKind::Mixture;
    cfg.head = HeadKind::Diffusion;
    cfg.tasks = {TaskSpec{TaskKind::Completion, CompletionMode::Missing80}};
    const TrainConfig back = train_config_from_json(train_config_to_json(cfg));
    CHECK(back.lr == cfg.lr);
    CHECK(back.steps == 77);
    CHECK(back.trajectory == TrajectoryKind::Sine);
    CHECK(back.prior == PriorKind::Mixture);
    CHECK(back.head == HeadKind::Diffusion);
    REQUIRE(back.tasks.size() == 1);
    CHECK(back.tasks[0].completion == CompletionMode::Missing80);
    CHECK(train_config_from_json(nlohmann::json::object()).batch_size == 64);
    CHECK_THROWS(train_config_from_json(nlohmann::json{{"learning_rate", 0.1}}));
}

TEST_CASE("training time distribution is uniform")
{
    const Dataset data = small_data(50);
    TrainConfig cfg = quick(1);
    cfg.batch_size = 1000;
    const NoiseSchedule s = NoiseSchedule::linear();
    double sum = 0.0;
    int n = 0;
    for (int step = 0; step < 100; ++step) {
        for (const BatchItem& b : draw_training_batch(data, cfg, s, step)) {
            CHECK(b.sample.t >= 0.0);
            CHECK(b.sample.t <= 1.0);
            sum += b.sample.t;
            ++n;
        }
    }
    CHECK(n == 100000);
    CHECK(sum / n >= 0.49);
    CHECK(sum / n <= 0.51);
    const auto a = draw_training_batch(data, cfg, s, 5);
    const auto b = draw_training_batch(data, cfg, s, 5);
    CHECK(a[17].sample.x_t.data == b[17].sample.x_t.data);
}

TEST_CASE("checkpoint roundtrip is exact")
{
    const Dataset data = small_data();
    const TrainResult r = train(data, small_model(), quick(5));
    const auto path = temp_path("roundtrip.ckpt");
    save_checkpoint(r.checkpoint, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.net.parameters() == r.checkpoint.net.parameters());
    CHECK(back.net.config() == r.checkpoint.net.config());
    CHECK(back.categories == r.checkpoint.categories);
    CHECK(back.element_histogram == r.checkpoint.element_histogram);
    CHECK(back.step == 5);
    REQUIRE(back.optimizer);
    CHECK(*back.optimizer == *r.checkpoint.optimizer);
    const auto path2 = temp_path("roundtrip2.ckpt");
    save_checkpoint(back, path2);
    CHECK(file_bytes(path) == file_bytes(path2));

    std::ofstream(path2, std::ios::binary) << "NOTACKPT";
    CHECK_THROWS_AS(load_checkpoint(path2), FormatError);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("resumed training matches uninterrupted training")
{
    const Dataset data = small_data();
    const TrainResult full = train(data, small_model(), quick(20));
    const TrainResult first = train(data, small_model(), quick(10));
    TrainOptions opt;
    opt.resume = &first.checkpoint;
    const TrainResult second = train(data, small_model(), quick(20), opt);
    CHECK(second.checkpoint.step == 20);
    CHECK(second.checkpoint.net.parameters() == full.checkpoint.net.parameters());

    TrainConfig other = quick(20);
    other.workers = 3;
    CHECK(train(data, small_model(), other).checkpoint.net.parameters() == full.checkpoint.net.parameters());
}

TEST_CASE("short training reduces the flow loss")
{
    const Dataset data = small_data();
    TrainConfig cfg = quick(300);
    std::ostringstream log;
    TrainOptions opt;
    opt.log = &log;
    const TrainResult r = train(data, small_model(), cfg, opt);
    REQUIRE(r.log.size() == 300);
    CHECK(mean_loss(r.log, 250, 300) < 0.7 * mean_loss(r.log, 0, 50));
    std::istringstream lines(log.str());
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("loss"));
        ++count;
    }
    CHECK(count == 300);
}

TEST_CASE("short training reduces the diffusion loss")
{
    const Dataset data = small_data();
    TrainConfig cfg = quick(300);
    cfg.head = HeadKind::Diffusion;
    const TrainResult r = train(data, small_model(), cfg);
    CHECK(mean_loss(r.log, 250, 300) < 0.9 * mean_loss(r.log, 0, 50));
}

TEST_CASE("non-finite loss aborts training")
{
    const Dataset data = small_data(20);
    TrainConfig cfg = quick(5);
    cfg.lr = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train(data, small_model(), cfg), NumericError);
}

TEST_CASE("condition masks for sampling")
{
    const Dataset data = small_data();
    const TrainResult r = train(data, small_model(), quick(2));
    const auto un = make_condition_masks(r.checkpoint, TaskSpec{TaskKind::UnGen}, {}, 50, 1);
    CHECK(un.size() == 50);
    for (const auto& m : un) {
        const int real = static_cast<int>(std::count(m.pad_mask.begin(), m.pad_mask.end(), true));
        CHECK(real >= 1);
        CHECK(r.checkpoint.element_histogram[real] > 0);
    }
    const auto typed = make_condition_masks(r.checkpoint, TaskSpec{TaskKind::GenType},
                                            std::span<const Layout>(data.layouts.data(), 3), 7, 1);
    CHECK(typed.size() == 7);
    CHECK(typed[3].values == typed[0].values);
    CHECK_THROWS(make_condition_masks(r.checkpoint, TaskSpec{TaskKind::GenType}, {}, 3, 1));
}

TEST_CASE("refinement output is closer to the truth than its noisy input" * doctest::may_fail())
{
    const Dataset data = small_data(500);
    TrainConfig cfg = quick(1500);
    cfg.batch_size = 32;
    cfg.train_refinement = true;
    const TrainResult r = train(data, small_model(), cfg);
    const Dataset held = small_data(100, 8);
    const auto masks = make_condition_masks(r.checkpoint, TaskSpec{TaskKind::Refinement}, held.layouts, 100, 2);
    SampleConfig sc;
    sc.steps = 50;
    const auto out = generate(r.checkpoint, masks, sc);
    double noisy = 0.0, refined = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const FlowVector truth = layout_to_vector(held.layouts[i], r.checkpoint.categories, 8);
        for (int k = 0; k < truth.nmax(); ++k) {
            if (!truth.pad_mask[k]) continue;
            for (int d = 0; d < kGeometryDims; ++d) {
                noisy += std::abs(masks[i].values[k * truth.stride() + d] - truth.slot(k)[d]);
                refined += std::abs(out[i].final_state.slot(k)[d] - truth.slot(k)[d]);
                ++n;
            }
        }
    }
    MESSAGE("noisy input error " << noisy / n << ", refined error " << refined / n);
    CHECK(refined < noisy);
}
