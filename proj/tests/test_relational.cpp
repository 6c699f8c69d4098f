#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsqair/relational.hpp"
#include "test_util.hpp"

using namespace rsqair;
using test::add_random;
using test::fill_uniform;

namespace {

ModelConfig tiny_config(const std::string& rel, int k) {
    ModelConfig mc;
    mc.relational = rel;
    mc.k_slots = k;
    mc.d_what = 3;  // latent_dim = 8
    mc.in_embed = 3;
    mc.in_hidden = 5;
    mc.rmc_heads = 2;
    mc.rmc_head_dim = 4;  // m_dim = 8
    return mc;
}

Tensor rand_mat(int r, int c, Rng& g, double lo = -1.0, double hi = 1.0) {
    Tensor t(Shape::mat(r, c));
    fill_uniform(t, g, lo, hi);
    return t;
}

Tensor rand_vec(int n, Rng& g, double lo, double hi) {
    Tensor t(Shape::vec(n));
    fill_uniform(t, g, lo, hi);
    return t;
}

// applies a row permutation to a matrix tensor
Tensor permute_rows(const Tensor& m, const std::vector<int>& perm) {
    Tensor out(m.shape());
    int c = m.shape().cols();
    for (int i = 0; i < static_cast<int>(perm.size()); ++i)
        for (int j = 0; j < c; ++j) out(i, j) = m(perm[i], j);
    return out;
}

Tensor permute_vec(const Tensor& v, const std::vector<int>& perm) {
    Tensor out(v.shape());
    for (int i = 0; i < static_cast<int>(perm.size()); ++i) out[i] = v[perm[i]];
    return out;
}

}  // namespace

TEST_CASE("hstack and vstack lay rows out correctly") {
    ad::ParamStore ps;
    ad::Tape t(&ps, false);
    Rng g = Rng::derive(11, "stack");
    Tensor a = rand_mat(3, 2, g), b = rand_mat(3, 4, g), c = rand_mat(2, 4, g);
    Tensor h = ad::materialize(hstack(t.constant(a), t.constant(b)));
    CHECK(h.shape() == Shape::mat(3, 6));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) CHECK(h(i, j) == a(i, j));
        for (int j = 0; j < 4; ++j) CHECK(h(i, 2 + j) == b(i, j));
    }
    Tensor v = ad::materialize(vstack(t.constant(b), t.constant(c)));
    CHECK(v.shape() == Shape::mat(5, 4));
    for (int j = 0; j < 4; ++j) {
        CHECK(v(1, j) == b(1, j));
        CHECK(v(4, j) == c(1, j));
    }
}

TEST_CASE("identity module is an exact pass-through with zero parameters") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("identity", 3);
    auto gm = make_gamma("identity", ps, mc, 5);
    CHECK(gm->effect_dim() == 0);
    CHECK(gm->param_count(ps) == 0);
    CHECK(ps.count() == 0);

    ad::Tape t(&ps, false);
    Rng g = Rng::derive(5, "id");
    Tensor lat = rand_mat(3, 8, g);
    ad::Var lv = t.constant(lat);
    GammaResult r = gm->apply(t, lv, t.constant(rand_vec(3, g, 0.0, 1.0)), ad::Var{});
    CHECK(r.gamma.v == lv.v);  // same storage, not merely equal values
}

TEST_CASE("interaction effects are permutation equivariant") {
    for (int k : {2, 3, 4}) {
        ad::ParamStore ps;
        ModelConfig mc = tiny_config("in", k);
        auto gm = make_gamma("in", ps, mc, 9);
        Rng g = Rng::derive(100 + k, "perm");
        Tensor lat = rand_mat(k, 8, g);
        Tensor pres = rand_vec(k, g, 0.05, 0.95);
        std::vector<int> perm(k);
        for (int i = 0; i < k; ++i) perm[i] = (i + 1) % k;

        ad::Tape t(&ps, false);
        Tensor out = ad::materialize(
            gm->apply(t, t.constant(lat), t.constant(pres), ad::Var{}).gamma);
        Tensor out_p = ad::materialize(
            gm->apply(t, t.constant(permute_rows(lat, perm)),
                      t.constant(permute_vec(pres, perm)), ad::Var{})
                .gamma);
        Tensor expect = permute_rows(out, perm);
        double worst = 0.0;
        for (int i = 0; i < out.size(); ++i)
            worst = std::max(worst, std::abs(out_p[i] - expect[i]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("a single present object receives exactly zero effect") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("in", 1);
    auto gm = make_gamma("in", ps, mc, 3);
    ad::Tape t(&ps, false);
    Rng g = Rng::derive(77, "single");
    Tensor lat = rand_mat(1, 8, g);
    Tensor out = ad::materialize(
        gm->apply(t, t.constant(lat), t.constant(Tensor(Shape::vec(1), 1.0)), ad::Var{}).gamma);
    CHECK(out.shape() == Shape::mat(1, 11));
    for (int j = 0; j < 8; ++j) CHECK(out(0, j) == lat(0, j));
    for (int j = 8; j < 11; ++j) CHECK(out(0, j) == 0.0);
}

TEST_CASE("hard-absent partners contribute exactly zero effect") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("in", 3);
    auto gm = make_gamma("in", ps, mc, 3);
    ad::Tape t(&ps, false);
    Rng g = Rng::derive(78, "absent");
    Tensor lat = rand_mat(3, 8, g);
    Tensor pres(Shape::vec(3));
    pres[0] = 1.0;
    pres[1] = 0.0;
    pres[2] = 0.0;
    Tensor out = ad::materialize(
        gm->apply(t, t.constant(lat), t.constant(pres), ad::Var{}).gamma);
    // every pair touches an absent object, so all effect columns vanish
    for (int i = 0; i < 3; ++i)
        for (int j = 8; j < 11; ++j) CHECK(out(i, j) == 0.0);
}

TEST_CASE("module parameter counts are independent of slot count") {
    for (const std::string& rel : {std::string("in"), std::string("rmc")}) {
        std::vector<int64_t> counts;
        for (int k : {2, 4, 8}) {
            ad::ParamStore ps;
            ModelConfig mc = tiny_config(rel, k);
            auto gm = make_gamma(rel, ps, mc, 1);
            counts.push_back(gm->param_count(ps));
        }
        CHECK(counts[0] > 0);
        CHECK(counts[0] == counts[1]);
        CHECK(counts[1] == counts[2]);
    }
}

TEST_CASE("rmc pairs each slot with its memory row") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("rmc", 3);
    auto gm = make_gamma("rmc", ps, mc, 13);
    CHECK(gm->uses_memory());
    ad::Tape t(&ps, false);
    Rng g = Rng::derive(13, "rmc");
    Tensor lat = rand_mat(3, 8, g);
    Tensor pres = rand_vec(3, g, 0.1, 0.9);
    Tensor mem = rand_mat(3, 8, g, -0.5, 0.5);
    GammaResult r = gm->apply(t, t.constant(lat), t.constant(pres), t.constant(mem));
    Tensor gamma = ad::materialize(r.gamma);
    Tensor nm = ad::materialize(r.new_memory);
    CHECK(gamma.shape() == Shape::mat(3, 16));
    CHECK(nm.shape() == Shape::mat(3, 8));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 8; ++j) CHECK(gamma(i, j) == lat(i, j));
        for (int j = 0; j < 8; ++j) CHECK(gamma(i, 8 + j) == nm(i, j));
    }
    // gates keep the update bounded: |m'| <= |m| + 1
    for (int i = 0; i < nm.size(); ++i) CHECK(std::abs(nm[i]) <= std::abs(mem[i]) + 1.0);
}

TEST_CASE("rmc is permutation equivariant when memory rows follow slots") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("rmc", 4);
    auto gm = make_gamma("rmc", ps, mc, 21);
    Rng g = Rng::derive(21, "rmcperm");
    Tensor lat = rand_mat(4, 8, g);
    Tensor pres = rand_vec(4, g, 0.05, 0.95);
    Tensor mem = rand_mat(4, 8, g, -0.5, 0.5);
    std::vector<int> perm = {2, 0, 3, 1};

    ad::Tape t(&ps, false);
    Tensor out = ad::materialize(
        gm->apply(t, t.constant(lat), t.constant(pres), t.constant(mem)).gamma);
    Tensor out_p = ad::materialize(gm->apply(t, t.constant(permute_rows(lat, perm)),
                                             t.constant(permute_vec(pres, perm)),
                                             t.constant(permute_rows(mem, perm)))
                                       .gamma);
    Tensor expect = permute_rows(out, perm);
    double worst = 0.0;
    for (int i = 0; i < out.size(); ++i)
        worst = std::max(worst, std::abs(out_p[i] - expect[i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("interaction module gradients match finite differences") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("in", 3);
    auto gm = make_gamma("in", ps, mc, 41);
    Rng g = Rng::derive(41, "ingrad");
    ad::ParamRef lat = add_random(ps, "probe/lat", Shape::mat(3, 8), g);
    ad::ParamRef pre = add_random(ps, "probe/pre", Shape::vec(3), g);
    auto build = [&](ad::Tape& t) {
        ad::Var latents = t.param(lat);
        ad::Var pres = ad::sigmoid_(t.param(pre));
        ad::Var gamma = gm->apply(t, latents, pres, ad::Var{}).gamma;
        return ad::sum_(ad::mul(gamma, gamma));
    };
    CHECK(test::gradcheck(ps, build) < 2e-6);
}

TEST_CASE("memory module gradients match finite differences") {
    ad::ParamStore ps;
    ModelConfig mc = tiny_config("rmc", 2);
    auto gm = make_gamma("rmc", ps, mc, 43);
    Rng g = Rng::derive(43, "rmcgrad");
    ad::ParamRef lat = add_random(ps, "probe/lat", Shape::mat(2, 8), g);
    ad::ParamRef pre = add_random(ps, "probe/pre", Shape::vec(2), g);
    ad::ParamRef mem = add_random(ps, "probe/mem", Shape::mat(2, 8), g, -0.5, 0.5);
    auto build = [&](ad::Tape& t) {
        ad::Var latents = t.param(lat);
        ad::Var pres = ad::sigmoid_(t.param(pre));
        GammaResult r = gm->apply(t, latents, pres, t.param(mem));
        return ad::add(ad::sum_(ad::mul(r.gamma, r.gamma)), ad::sum_(r.new_memory));
    };
    CHECK(test::gradcheck(ps, build) < 2e-6);
}
