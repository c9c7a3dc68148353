#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "rbfvae/error.hpp"
#include "rbfvae/scenario.hpp"

using namespace rbfvae;
using namespace rbfvae::scenario;

namespace {

struct Setup {
    dataset::HourlyPanel panel;
    dataset::ProfileStore profiles;
    vae::VaeModel model;
};

// Untrained pure model over a small synthetic panel with random posteriors over all weeks.
// Decoder biases are pushed up so some solar peaks clip.
Setup setup(std::uint64_t seed = 3, double decoder_bias = 0.0) {
    dataset::SynthSpec spec;
    spec.n_plants = 4;
    spec.n_weeks = 12;
    spec.seed = seed;
    spec.solar_fraction = 0.5;
    Setup s;
    s.panel = dataset::synth_panel(spec);
    const auto weekly = dataset::aggregate_weekly(s.panel);
    s.profiles = dataset::extract_profiles(s.panel, weekly);

    vae::TrainConfig cfg;
    cfg.d_latent = 3;
    cfg.hidden = {5};
    cfg.seed = seed;
    s.model = vae::build_model(vae::Variant::pure, s.panel.plant_ids, std::nullopt, std::nullopt, cfg);
    s.model.decoder.back().biases.array() += decoder_bias;
    std::mt19937_64 rng(seed);
    const Matrix mus = testing::uniform_matrix(rng, 12, 3, -1.5, 1.5);
    const Matrix vars = testing::uniform_matrix(rng, 12, 3, 0.2, 2.0);
    std::vector<std::size_t> refs(12);
    for (std::size_t i = 0; i < refs.size(); ++i) refs[i] = i;
    s.model.posteriors = latent::LatentPosteriorStore(mus, vars, refs);
    return s;
}

GenerateOptions opts(std::size_t scenarios, std::size_t weeks, std::uint64_t seed = 5, std::size_t threads = 1) {
    GenerateOptions o;
    o.n_scenarios = scenarios;
    o.horizon_weeks = weeks;
    o.seed = seed;
    o.threads = threads;
    return o;
}

bool same_set(const ScenarioSet& a, const ScenarioSet& b) {
    return a.weekly == b.weekly && a.hourly == b.hourly && a.profile_indices == b.profile_indices &&
           a.clipped == b.clipped && a.selection_distances == b.selection_distances;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("zero epsilon decodes the prior mean deterministically") {
    const auto s = setup();
    const std::vector<double> eps(3, 0.0);
    const auto a = generate_week_from_epsilon(s.model, s.model.posteriors, s.profiles, eps);
    const auto b = generate_week_from_epsilon(s.model, s.model.posteriors, s.profiles, eps);
    CHECK(a.z.isZero(0.0));
    const Matrix expected = vae::decode(s.model, Matrix::Zero(1, 3));
    CHECK(a.weekly.transpose() == expected.row(0));
    CHECK(a.hourly == b.hourly);
    CHECK(a.selection.index == latent::select_profile(s.model.posteriors, eps).index);
}

TEST_CASE("flat profiles give constant hours equal to the weekly value") {
    const auto s = setup();
    const dataset::ProfileStore flat(12, s.panel.plant_ids, std::vector<double>(12 * 4 * 168, 1.0),
                                     dataset::default_mean_floor);
    Rng rng(11);
    const auto week = generate_week(s.model, s.model.posteriors, flat, rng);
    for (Eigen::Index p = 0; p < 4; ++p)
        for (Eigen::Index h = 0; h < 168; ++h) CHECK(week.hourly(h, p) == week.weekly(p));
}

TEST_CASE("unclipped weeks keep their weekly mean; clipped ones are flagged") {
    for (double bias : {0.0, 1.5}) {
        const auto s = setup(3, bias);
        const auto set = generate_set(s.model, s.model.posteriors, s.profiles, opts(20, 6));
        CHECK(set.hourly.minCoeff() >= 0.0);
        CHECK(set.hourly.maxCoeff() <= 1.0);
        std::size_t flagged = 0;
        for (std::size_t sc = 0; sc < 20; ++sc)
            for (std::size_t w = 0; w < 6; ++w)
                for (std::size_t p = 0; p < 4; ++p) {
                    double sum = 0.0;
                    bool hit_bound = false;
                    const auto& prof = s.profiles.profile(set.profile_indices[set.row(sc, w)], p);
                    for (std::size_t h = 0; h < 168; ++h) {
                        sum += set.hourly_value(sc, w, h, p);
                        hit_bound = hit_bound || set.weekly_value(sc, w, p) * prof[h] > 1.0;
                    }
                    CHECK(set.is_clipped(sc, w, p) == hit_bound);
                    if (set.is_clipped(sc, w, p)) {
                        ++flagged;
                        continue;
                    }
                    CHECK(std::abs(sum / 168.0 - set.weekly_value(sc, w, p)) <= 1e-9);
                }
        CHECK(set.clipped_count() == flagged);
        CHECK(set.clipped_fraction() == doctest::Approx(static_cast<double>(flagged) / 480.0));
        if (bias > 0.0) CHECK(flagged > 0);
    }
}

TEST_CASE("generation is reproducible, thread invariant and prefix stable") {
    const auto s = setup();
    const auto a = generate_set(s.model, s.model.posteriors, s.profiles, opts(6, 3));
    const auto b = generate_set(s.model, s.model.posteriors, s.profiles, opts(6, 3));
    const auto threaded = generate_set(s.model, s.model.posteriors, s.profiles, opts(6, 3, 5, 4));
    CHECK(same_set(a, b));
    CHECK(same_set(a, threaded));

    const auto more = generate_set(s.model, s.model.posteriors, s.profiles, opts(9, 3));
    CHECK(more.weekly.topRows(18) == a.weekly);
    CHECK(more.hourly.topRows(18 * 168) == a.hourly);

    const auto other = generate_set(s.model, s.model.posteriors, s.profiles, opts(6, 3, 6));
    CHECK_FALSE(other.weekly == a.weekly);
}

TEST_CASE("minimal shapes and metadata") {
    const auto s = setup();
    const auto set = generate_set(s.model, s.model.posteriors, s.profiles, opts(1, 1));
    CHECK(set.weekly.rows() == 1);
    CHECK(set.weekly.cols() == 4);
    CHECK(set.hourly.rows() == 168);
    CHECK(set.profile_indices.size() == 1);
    CHECK(set.profile_indices[0] < 12);
    const auto meta = metadata(set, "abc");
    CHECK(meta.at("model_hash") == "abc");
    CHECK(meta.at("seed") == 5);
    CHECK(meta.at("clipped").at("total") == 4);
}

TEST_CASE("errors") {
    auto s = setup();
    auto expect_kind = [&](ErrorKind kind, auto&& fn) {
        try {
            fn();
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == kind);
        }
    };
    expect_kind(ErrorKind::usage, [&] { generate_set(s.model, s.model.posteriors, s.profiles, opts(0, 3)); });
    expect_kind(ErrorKind::usage, [&] { generate_set(s.model, s.model.posteriors, s.profiles, opts(3, 0)); });
    auto big = opts(200, 52);
    big.memory_budget = 1024;
    expect_kind(ErrorKind::size, [&] { generate_set(s.model, s.model.posteriors, s.profiles, big); });

    auto renamed = s.panel.plant_ids;
    renamed[0] = "elsewhere";
    const dataset::ProfileStore foreign(12, renamed, std::vector<double>(12 * 4 * 168, 1.0), 1e-6);
    expect_kind(ErrorKind::config, [&] { generate_set(s.model, s.model.posteriors, foreign, opts(1, 1)); });
    expect_kind(ErrorKind::usage,
                [&] { generate_set(s.model, latent::LatentPosteriorStore{}, s.profiles, opts(1, 1)); });
    const latent::LatentPosteriorStore wide(Matrix::Zero(2, 5), Matrix::Ones(2, 5), {0, 1});
    expect_kind(ErrorKind::dimension, [&] { generate_set(s.model, wide, s.profiles, opts(1, 1)); });
    const latent::LatentPosteriorStore dangling(Matrix::Zero(1, 3), Matrix::Ones(1, 3), {40});
    expect_kind(ErrorKind::lookup, [&] { generate_set(s.model, dangling, s.profiles, opts(1, 1)); });
}

TEST_CASE("CSV round trip") {
    const auto s = setup();
    const auto set = generate_set(s.model, s.model.posteriors, s.profiles, opts(3, 2));
    const auto dir = testing::scratch_dir("scenario-csv");
    write_weekly_csv(set, dir / "weekly.csv");
    write_hourly_csv(set, dir / "hourly.csv");
    const auto weekly = read_weekly_csv(dir / "weekly.csv");
    const auto hourly = read_hourly_csv(dir / "hourly.csv");
    CHECK(weekly.plant_ids == set.plant_ids);
    CHECK(weekly.values == set.weekly);
    CHECK(hourly.values == set.hourly);
}

}
