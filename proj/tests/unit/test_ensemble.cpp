#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>

#include "smf/config.hpp"
#include "smf/ensemble.hpp"

using namespace smf;

namespace {

RunConfig small(std::size_t n, double t_max = 0.12) {
    RunConfig c = preset("fig1_weak");
    c.integrator.t_max = t_max;
    c.output_stride = 10;
    c.n_traj = n;
    c.master_seed = 77;
    return c;
}

double mean_err(const EnsembleResult& r) {
    double s = 0.0;
    for (std::size_t k = 1; k < r.times.size(); ++k) s += r.err[2][k];
    return s / static_cast<double>(r.times.size() - 1);
}

}  // namespace

TEST_CASE("Welford accumulation and Chan merging agree") {
    Moments all, left, right;
    for (int i = 0; i < 1000; ++i) {
        double x = std::sin(0.37 * i) * 3.0 + 0.01 * i;
        all.add(x);
        (i < 400 ? left : right).add(x);
    }
    left.merge(right);
    CHECK(left.n == all.n);
    CHECK(left.mean == doctest::Approx(all.mean).epsilon(1e-13));
    CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
    Moments one;
    one.add(2.0);
    CHECK(one.variance() == 0.0);
}

TEST_CASE("result bytes do not depend on worker count") {
    RunConfig c = small(300);
    c.workers = 1;
    std::string one = to_csv(run_ensemble(c));
    for (unsigned w : {2u, 3u, 8u}) {
        c.workers = w;
        CHECK(to_csv(run_ensemble(c)) == one);
    }
    c.workers = 3;
    CHECK(to_csv(run_ensemble(c, Method::SSE)) == [&] {
        c.workers = 1;
        return to_csv(run_ensemble(c, Method::SSE));
    }());
}

TEST_CASE("a single trajectory has zero error and equals the trajectory") {
    RunConfig c = small(1);
    auto r = run_ensemble(c);
    auto table = build_kernel_table(c.bath, c.integrator.t_max, c.integrator.dt);
    auto plan = make_plan(table, c.integrator.dt, c.integrator.steps(), c.integrator.convolution);
    Rng rng = trajectory_stream(c.master_seed, 0);
    auto tr = run_trajectory(c.params, plan, c.integrator, c.output_stride, rng);
    REQUIRE(r.times.size() == tr.samples.size());
    for (std::size_t k = 0; k < r.times.size(); ++k)
        for (int i = 0; i < 3; ++i) {
            CHECK(r.err[i][k] == 0.0);
            CHECK(r.mean[i][k] == tr.samples[k][i]);
        }
}

TEST_CASE("independent halves agree") {
    RunConfig a = small(20000), b = small(20000);
    b.master_seed = 78;
    auto ra = run_ensemble(a), rb = run_ensemble(b);
    REQUIRE(!ra.failed);
    REQUIRE(!rb.failed);
    CHECK(compare_runs(ra, rb).max_z <= 3.0);
}

TEST_CASE("standard error falls as one over root N") {
    std::vector<double> logn, loge;
    for (std::size_t n : {1000u, 4000u, 16000u}) {
        auto r = run_ensemble(small(n));
        REQUIRE(!r.failed);
        logn.push_back(std::log(static_cast<double>(n)));
        loge.push_back(std::log(mean_err(r)));
    }
    double mx = (logn[0] + logn[1] + logn[2]) / 3, my = (loge[0] + loge[1] + loge[2]) / 3;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < 3; ++i) {
        sxy += (logn[i] - mx) * (loge[i] - my);
        sxx += (logn[i] - mx) * (logn[i] - mx);
    }
    double slope = sxy / sxx;
    CHECK(std::abs(slope + 0.5) <= 0.15 * 0.5);
}

TEST_CASE("divergent trajectories are counted and fail the run past the threshold") {
    RunConfig c = small(200, 1.2);
    c.integrator.divergence_bound = 1.05;
    auto r = run_ensemble(c);
    CHECK(r.n_divergent > 0);
    CHECK(r.failed);
    CHECK(!r.message.empty());
    c.divergence_threshold = 1.0;
    auto ok = run_ensemble(c);
    CHECK(!ok.failed);
    CHECK(ok.n_divergent == r.n_divergent);
}

TEST_CASE("CSV schema and round trip") {
    CHECK(csv_header() ==
          "t,mean_sx_re,mean_sx_im,err_sx,mean_sy_re,mean_sy_im,err_sy,mean_sz_re,mean_sz_im,err_sz");
    auto r = run_ensemble(small(64));
    auto dir = std::filesystem::temp_directory_path() / "smf_csv_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "r.csv").string();
    write_csv(path, r);
    auto back = read_csv(path);
    REQUIRE(back.times.size() == r.times.size());
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        CHECK(back.times[k] == r.times[k]);
        for (int i = 0; i < 3; ++i) {
            CHECK(back.mean[i][k] == r.mean[i][k]);
            CHECK(back.err[i][k] == r.err[i][k]);
        }
    }
    std::ofstream(dir / "bad.csv") << "t,a,b\n0,1,2\n";
    CHECK_THROWS(read_csv((dir / "bad.csv").string()));
}

TEST_CASE("compare_runs") {
    auto r = run_ensemble(small(64));
    auto same = compare_runs(r, r);
    CHECK(same.max_deviation == 0.0);
    auto other = run_ensemble(small(64, 0.24));
    CHECK_THROWS_AS(compare_runs(r, other), ConfigError);

    // zero stderr on both sides: roundoff passes, a real gap does not
    EnsembleResult x = r, y = r;
    for (int o = 0; o < 3; ++o)
        for (std::size_t k = 0; k < x.times.size(); ++k) x.err[o][k] = y.err[o][k] = 0.0;
    y.mean[2][0] += 4e-16;
    CHECK(compare_runs(x, y).max_z == 0.0);
    y.mean[2][0] += 1e-6;
    CHECK(std::isinf(compare_runs(x, y).max_z));
    y.mean[2][0] = std::numeric_limits<double>::quiet_NaN();
    CHECK(std::isinf(compare_runs(x, y).max_z));
}

TEST_CASE("configuration checks") {
    RunConfig c = small(10);
    c.output_stride = 7;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = small(10);
    c.n_traj = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("worker resolution") {
    CHECK(resolve_workers(5) == 5);
    setenv("SMF_SIM_THREADS", "3", 1);
    CHECK(resolve_workers(0) == 3);
    unsetenv("SMF_SIM_THREADS");
    CHECK(resolve_workers(0) >= 1);
}
