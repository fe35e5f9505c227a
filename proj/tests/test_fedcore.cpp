#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fspn/fedcore.hpp"

using namespace fspn;

namespace {

dsp::FeatureBundle random_bundle(const model::ModelProfile& p, uint64_t seed,
                                 float shift = 0.0f) {
    Rng rng(seed);
    dsp::FeatureBundle b;
    auto fill = [&](Tensor& t) {
        for (auto& v : t.v) v = static_cast<float>(rng.normal()) + shift;
    };
    for (int c = 0; c < p.n_channels; ++c) {
        b.signals.emplace_back(
            std::vector<int>{1, p.signal_len[static_cast<size_t>(c)]});
        fill(b.signals.back());
        b.spectra.emplace_back(
            std::vector<int>{1, p.spectrum_len[static_cast<size_t>(c)]});
        fill(b.spectra.back());
        auto [s, t] = p.scalo_size[static_cast<size_t>(c)];
        b.scalograms.emplace_back(std::vector<int>{1, s, t});
        fill(b.scalograms.back());
    }
    return b;
}

// toy agent store: separable 2-task data per agent
struct ToyData {
    std::vector<dsp::FeatureBundle> bundles;
    std::vector<std::vector<uint8_t>> labels;

    ToyData(const model::ModelProfile& p, uint64_t seed, int n) {
        for (int i = 0; i < n; ++i) {
            uint8_t pos = static_cast<uint8_t>(i % 2);
            bundles.push_back(
                random_bundle(p, derive_seed(seed, static_cast<uint64_t>(i)),
                              pos ? 1.5f : 0.0f));
            labels.push_back({pos, static_cast<uint8_t>(1 - pos)});
        }
    }

    fedcore::AgentSpec spec(int factory, int group) const {
        fedcore::AgentSpec s;
        s.factory_id = factory;
        s.group_id = group;
        for (size_t i = 0; i < bundles.size(); ++i) {
            s.data.bundles.push_back(&bundles[i]);
            s.data.labels.push_back(labels[i].data());
        }
        return s;
    }
};

fedcore::FederationConfig toy_config(fedcore::Mode mode, int rounds) {
    fedcore::FederationConfig c;
    c.mode = mode;
    c.local_epochs = 2;
    c.max_rounds = rounds;
    c.patience = 50;
    c.lr = 0.05;
    c.batch_size = 4;
    c.seed = 99;
    return c;
}

ParamSet scalar_set(float v) {
    ParamSet p;
    p.add("w", Partition::common, -1, {1}).v = {v};
    return p;
}

}  // namespace

TEST_CASE("adaptive weights: hand arithmetic of the aggregation rate") {
    auto c = fedcore::adaptive_weights({0.5, 1.0});
    CHECK(c[0] == doctest::Approx(6.0));
    CHECK(c[1] == doctest::Approx(1.5));
    double s = c[0] + c[1];
    CHECK(c[0] / s == doctest::Approx(0.8));
    CHECK(c[1] / s == doctest::Approx(0.2));
}

TEST_CASE("adaptive weights: symmetry, scaling, monotonicity, floor") {
    auto eq = fedcore::adaptive_weights({0.7, 0.7, 0.7, 0.7});
    double s = 0;
    for (double v : eq) s += v;
    for (double v : eq) CHECK(v / s == doctest::Approx(0.25));

    // uniform scaling of all F1 leaves normalized weights unchanged
    auto a = fedcore::adaptive_weights({0.3, 0.6, 0.9});
    auto b = fedcore::adaptive_weights({0.1, 0.2, 0.3});
    double sa = a[0] + a[1] + a[2], sb = b[0] + b[1] + b[2];
    for (size_t k = 0; k < 3; ++k)
        CHECK(a[k] / sa == doctest::Approx(b[k] / sb).epsilon(1e-12));

    // strictly decreasing in its own F1
    auto lo = fedcore::adaptive_weights({0.4, 0.5});
    auto hi = fedcore::adaptive_weights({0.6, 0.5});
    CHECK(hi[0] < lo[0]);

    // floor: zero behaves as the F1 floor
    auto fl = fedcore::adaptive_weights({0.0, 1.0});
    CHECK(fl[0] == doctest::Approx(1.05 / (0.05 * 0.05)));
}

TEST_CASE("aggregate: weighted mean, idempotence, FedAvg case, errors") {
    auto a = scalar_set(0.0f);
    auto b = scalar_set(10.0f);
    auto out = fedcore::aggregate({&a, &b}, {1.0, 3.0});
    CHECK(out.at("w").v[0] == doctest::Approx(7.5));

    auto same = fedcore::aggregate({&b, &b, &b}, {0.2, 0.5, 0.3});
    CHECK(same.at("w").v[0] == doctest::Approx(10.0));

    auto avg = fedcore::aggregate({&a, &b}, {1.0, 1.0});
    CHECK(avg.at("w").v[0] == doctest::Approx(5.0));

    // permutation invariance
    auto fwd = fedcore::aggregate({&a, &b}, {1.0, 3.0});
    auto rev = fedcore::aggregate({&b, &a}, {3.0, 1.0});
    CHECK(fwd.at("w").v[0] == doctest::Approx(rev.at("w").v[0]));

    ParamSet other;
    other.add("x", Partition::common, -1, {1});
    CHECK_THROWS_AS(fedcore::aggregate({&a, &other}, {1.0, 1.0}),
                    ProtocolError);
    CHECK_THROWS_AS(fedcore::aggregate({&a, &b}, {0.0, 0.0}), ProtocolError);
    CHECK_THROWS_AS(fedcore::aggregate({&a, &b}, {-1.0, 2.0}), ProtocolError);
}

TEST_CASE("broadcast: identical w everywhere, identical theta per group") {
    auto prof = model::tiny_profile();
    ToyData d0(prof, 1, 8), d1(prof, 2, 8), d2(prof, 3, 8), d3(prof, 4, 8);
    std::vector<fedcore::AgentSpec> agents = {d0.spec(0, 0), d1.spec(0, 1),
                                              d2.spec(1, 0), d3.spec(1, 1)};
    fedcore::Federation fed(prof, 2, 2, std::move(agents),
                            toy_config(fedcore::Mode::personalized, 1));
    fed.run_round();
    fed.broadcast();

    auto common = [&](size_t i) {
        return fed.agent_model(i).params.filtered(Partition::common);
    };
    auto head = [&](size_t i) {
        return fed.agent_model(i).params.filtered(Partition::head);
    };
    CHECK(common(0) == common(1));
    CHECK(common(0) == common(2));
    CHECK(common(0) == common(3));
    // agents were sorted by (factory, group): groups are 0,1,0,1
    CHECK(head(0) == head(2));
    CHECK(head(1) == head(3));
    CHECK_FALSE(head(0) == head(1));
}

TEST_CASE("single agent: aggregation is the identity") {
    auto prof = model::tiny_profile();
    ToyData d(prof, 5, 10);
    std::vector<fedcore::AgentSpec> agents = {d.spec(0, 0)};
    fedcore::Federation fed(prof, 2, 1, std::move(agents),
                            toy_config(fedcore::Mode::personalized, 1));
    fed.run_round();
    CHECK(fed.server().w_global ==
          fed.agent_model(0).params.filtered(Partition::common));
    CHECK(fed.server().theta_group[0] ==
          fed.agent_model(0).params.filtered(Partition::head));
}

TEST_CASE("run_training: max_rounds=1, improvement, bitwise determinism") {
    auto prof = model::tiny_profile();
    auto build = [&](int rounds) {
        ToyData* d0 = new ToyData(prof, 11, 10);
        ToyData* d1 = new ToyData(prof, 12, 10);
        static std::vector<std::unique_ptr<ToyData>> keep;
        keep.emplace_back(d0);
        keep.emplace_back(d1);
        std::vector<fedcore::AgentSpec> agents = {d0->spec(0, 0),
                                                  d1->spec(1, 0)};
        return fedcore::Federation(prof, 2, 1, std::move(agents),
                                   toy_config(fedcore::Mode::personalized,
                                              rounds));
    };

    auto one = build(1);
    one.run_training();
    CHECK(one.log().size() == 2);  // one round, two agents

    auto m = build(12);
    auto state = m.run_training();
    double first_mean = 0.5 * (m.log()[0].mean_f1 + m.log()[1].mean_f1);
    size_t n = m.log().size();
    double last_mean = 0.5 * (m.log()[n - 2].mean_f1 + m.log()[n - 1].mean_f1);
    CHECK(last_mean > first_mean);

    auto m2 = build(12);
    auto state2 = m2.run_training();
    CHECK(state.w_global == state2.w_global);
    REQUIRE(state.theta_group.size() == state2.theta_group.size());
    for (size_t g = 0; g < state.theta_group.size(); ++g)
        CHECK(state.theta_group[g] == state2.theta_group[g]);
    CHECK(m.deployed_params(0) == m2.deployed_params(0));
}

TEST_CASE("clustering mode keeps groups fully independent") {
    auto prof = model::tiny_profile();
    ToyData d0(prof, 21, 8), d1(prof, 22, 8), d2(prof, 23, 8), d3(prof, 24, 8);
    std::vector<fedcore::AgentSpec> agents = {d0.spec(0, 0), d1.spec(0, 1),
                                              d2.spec(1, 0), d3.spec(1, 1)};
    fedcore::Federation fed(prof, 2, 2, std::move(agents),
                            toy_config(fedcore::Mode::clustering, 2));
    fed.run_training();
    auto p0 = fed.deployed_params(0);
    auto p1 = fed.deployed_params(1);
    // different data per group and no cross-group mixing -> different commons
    CHECK_FALSE(p0.filtered(Partition::common) == p1.filtered(Partition::common));
}

TEST_CASE("personalized mode shares one common block across groups") {
    auto prof = model::tiny_profile();
    ToyData d0(prof, 31, 8), d1(prof, 32, 8);
    std::vector<fedcore::AgentSpec> agents = {d0.spec(0, 0), d1.spec(0, 1)};
    fedcore::Federation fed(prof, 2, 2, std::move(agents),
                            toy_config(fedcore::Mode::personalized, 2));
    fed.run_training();
    auto p0 = fed.deployed_params(0);
    auto p1 = fed.deployed_params(1);
    CHECK(p0.filtered(Partition::common) == p1.filtered(Partition::common));
    CHECK_FALSE(p0.filtered(Partition::head) == p1.filtered(Partition::head));
}

TEST_CASE("agents without data are rejected") {
    auto prof = model::tiny_profile();
    std::vector<fedcore::AgentSpec> agents(1);
    CHECK_THROWS_AS(fedcore::Federation(prof, 2, 1, std::move(agents),
                                        toy_config(fedcore::Mode::vanilla, 1)),
                    ProtocolError);
}
