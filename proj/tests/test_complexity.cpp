#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mgk/attention.hpp"
#include "mgk/complexity.hpp"
#include "mgk/errors.hpp"

using mgk::AttentionConfig;
using mgk::Variant;
using namespace mgk::complexity;

TEST_CASE("closed-form counts match the worked examples") {
    CHECK(softmax_flops(1, 1, 1, 1) == 6);
    CHECK(softmax_flops(2, 1, 1, 1) == 18);
    CHECK(mgk_flops(1, 2, 1, 1, 2) == 10);
    CHECK(mgk_flops_paper(1, 2, 1, 1) == 9);
    CHECK(softmax_params(8, 32, 64) == 114688);
    CHECK(mgk_params(8, 32, 64) == 65544);
    CHECK(softmax_params(8, 32, 64) - mgk_params(8, 32, 64) == 49144);
    CHECK(mgk_params(2, 1, 1) == 8);
}

TEST_CASE("parameter saving identity holds exactly") {
    for (Count h : {2, 4, 8}) {
        for (Count d : {1, 3, 32}) {
            for (Count d_x : {1, 7, 64}) {
                for (Count n : {1, 5, 128}) {
                    const Count lhs = softmax_flops(n, h, d, d_x) - mgk_flops_paper(n, h, d, d_x);
                    const Count rhs = n * n * (h * d - h / 2) + n * h * d * (2 * d_x + h * d - 1);
                    INFO("n=", n, " h=", h, " d=", d, " d_x=", d_x);
                    CHECK(lhs == rhs);
                }
            }
        }
    }
}

TEST_CASE("single-component mixture count collapses to the softmax count") {
    for (Count h : {1, 2, 5}) {
        for (Count d : {1, 2, 8}) {
            for (Count n : {1, 3, 17}) {
                INFO("n=", n, " h=", h, " d=", d);
                CHECK(mgk_flops(n, h, d, 4, 1) == softmax_flops(n, h, d, 4));
            }
        }
    }
}

TEST_CASE("component form exceeds the simplified form by NHD/2") {
    for (Count h : {2, 4, 6}) {
        for (Count d : {1, 3, 16}) {
            for (Count n : {1, 2, 50}) {
                const Count gap = mgk_flops(n, h, d, 5, 2) - mgk_flops_paper(n, h, d, 5);
                CHECK(gap == n * h * d / 2);
            }
        }
    }
}

TEST_CASE("count domain errors") {
    CHECK_THROWS_AS((void)softmax_flops(0, 1, 1, 1), mgk::config_error);
    CHECK_THROWS_AS((void)softmax_flops(1, 1, -2, 1), mgk::config_error);
    CHECK_THROWS_AS((void)mgk_flops(1, 3, 1, 1, 2), mgk::config_error);
    CHECK_THROWS_AS((void)mgk_flops_paper(1, 3, 1, 1), mgk::config_error);
    CHECK_THROWS_AS((void)mgk_params(3, 1, 1), mgk::config_error);
    CHECK_THROWS_AS((void)mgk_params(2, 0, 1), mgk::config_error);
}

namespace {

AttentionConfig mixture_config(std::size_t h, std::size_t m, std::size_t d, std::size_t d_x) {
    AttentionConfig cfg;
    cfg.variant = Variant::MGK;
    cfg.heads = h;
    cfg.components = m;
    cfg.d = d;
    cfg.d_x = d_x;
    return cfg;
}

}  // namespace

TEST_CASE("instrumented softmax pass reproduces the closed form exactly") {
    for (std::size_t n : {1u, 2u, 5u}) {
        for (std::size_t h : {1u, 2u, 3u}) {
            for (std::size_t d : {1u, 2u, 3u}) {
                for (std::size_t d_x : {1u, 2u, 4u}) {
                    AttentionConfig cfg;
                    cfg.variant = Variant::Softmax;
                    cfg.heads = h;
                    cfg.components = 1;
                    cfg.d = d;
                    cfg.d_x = d_x;
                    INFO("n=", n, " h=", h, " d=", d, " d_x=", d_x);
                    CHECK(instrumented_count(cfg, n) ==
                          softmax_flops(Count(n), Count(h), Count(d), Count(d_x)));
                }
            }
        }
    }
}

TEST_CASE("instrumented mixture pass reproduces the component form exactly") {
    const std::vector<std::pair<std::size_t, std::size_t>> head_grid = {
        {2, 2}, {4, 2}, {3, 3}, {4, 4}, {2, 1}};
    for (std::size_t n : {1u, 3u, 4u}) {
        for (auto [h, m] : head_grid) {
            for (std::size_t d : {1u, 2u, 3u}) {
                for (std::size_t d_x : {1u, 3u}) {
                    const auto cfg = mixture_config(h, m, d, d_x);
                    INFO("n=", n, " h=", h, " m=", m, " d=", d, " d_x=", d_x);
                    CHECK(instrumented_count(cfg, n) ==
                          mgk_flops(Count(n), Count(h), Count(d), Count(d_x), Count(m)));
                }
            }
        }
    }
}

TEST_CASE("instrumented count ignores kernel, assignment, and masking choices") {
    const Count expected = mgk_flops(4, 4, 3, 2, 2);
    for (auto kernel : {mgk::Kernel::GaussianDistance, mgk::Kernel::DotProduct}) {
        for (auto estep : {mgk::EStep::SoftLearnedPrior, mgk::EStep::HardAssign}) {
            for (bool causal : {false, true}) {
                auto cfg = mixture_config(4, 2, 3, 2);
                cfg.kernel = kernel;
                cfg.estep = estep;
                cfg.causal = causal;
                CHECK(instrumented_count(cfg, 4) == expected);
            }
        }
    }
}

TEST_CASE("instrumented gaussian pass costs the same as softmax") {
    AttentionConfig cfg;
    cfg.variant = Variant::Gaussian;
    cfg.heads = 2;
    cfg.components = 1;
    cfg.d = 3;
    cfg.d_x = 2;
    CHECK(instrumented_count(cfg, 5) == softmax_flops(5, 2, 3, 2));
}

TEST_CASE("zero-length sequence costs nothing") {
    AttentionConfig soft;
    soft.variant = Variant::Softmax;
    soft.components = 1;
    soft.heads = 2;
    soft.d = 3;
    soft.d_x = 2;
    CHECK(instrumented_count(soft, 0) == 0);
    CHECK(instrumented_count(mixture_config(4, 2, 3, 2), 0) == 0);
}

TEST_CASE("flop ratio shrinks as the head dimension grows") {
    double prev = 1.0;
    for (Count d : {16, 32, 64, 128, 256}) {
        const auto r = analyze(64, 8, d, 32, 2, false);
        INFO("d=", d);
        CHECK(r.flops_ratio < 1.0);
        CHECK(r.flops_ratio < prev);
        CHECK(r.params_ratio < 1.0);
        CHECK(r.flops_ratio * static_cast<double>(r.softmax_flops) ==
              doctest::Approx(static_cast<double>(r.mgk_flops)).epsilon(1e-12));
        prev = r.flops_ratio;
    }
}

TEST_CASE("parameter ratio does not depend on sequence length") {
    const auto a = analyze(16, 8, 32, 64, 2, false);
    const auto b = analyze(64, 8, 32, 64, 2, false);
    const auto c = analyze(256, 8, 32, 64, 2, false);
    CHECK(a.params_ratio == b.params_ratio);
    CHECK(b.params_ratio == c.params_ratio);
}

TEST_CASE("ratio sweep walks the grid in row order") {
    const auto rows = ratio_sweep({8, 16}, {4, 8, 16}, 2, 4, 2);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].n == 8);
    CHECK(rows[0].d == 4);
    CHECK(rows[2].d == 16);
    CHECK(rows[3].n == 16);
    CHECK(rows[5].d == 16);
    CHECK_THROWS_AS((void)ratio_sweep({}, {4}, 2, 4, 2), mgk::config_error);
    CHECK_THROWS_AS((void)ratio_sweep({8}, {}, 2, 4, 2), mgk::config_error);
}

TEST_CASE("csv report round-trips the counts") {
    const auto rows = ratio_sweep({1}, {1}, 2, 1, 2, true);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].instrumented_flops.has_value());
    CHECK(*rows[0].instrumented_flops == 10);
    std::ostringstream os;
    write_csv(os, rows);
    std::istringstream is(os.str());
    std::string header, line;
    REQUIRE(std::getline(is, header));
    CHECK(header ==
          "N,H,D,D_x,M,softmax_flops,mgk_flops,mgk_flops_paper,softmax_params,"
          "mgk_params,flops_ratio,params_ratio,instrumented_flops");
    REQUIRE(std::getline(is, line));
    CHECK(line.substr(0, line.find(",0.")) == "1,2,1,1,2,16,10,9,10,8");
    CHECK(line.substr(line.rfind(',') + 1) == "10");
    CHECK_FALSE(std::getline(is, line));
}
