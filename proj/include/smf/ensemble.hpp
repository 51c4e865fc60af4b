// Parallel, bit-reproducible trajectory averaging

#pragma once

#include <array>
#include <cstdint>
#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <string>
#include <vector>

#include "smf/engine.hpp"
#include "smf/kernels.hpp"

namespace smf {

enum class Method { Density, SSE };

struct RunConfig {
    std::string name{"run"};
    SpinBosonParams params;
    BathParams bath;
    IntegratorConfig integrator;
    std::size_t n_traj{1};
    std::uint64_t master_seed{1};
    std::size_t output_stride{1};
    unsigned workers{0};                 // 0 = SMF_SIM_THREADS or hardware concurrency
    double divergence_threshold{1e-3};   // tolerated divergent fraction
};

void validate(const RunConfig& c);

struct EnsembleResult {
    std::vector<double> times;
    std::array<std::vector<cplx>, 3> mean;     // sx, sy, sz
    std::array<std::vector<double>, 3> err;    // max(sd(Re), sd(Im)) / sqrt(n)
    std::size_t n_traj{0};
    std::size_t n_divergent{0};
    std::uint64_t master_seed{0};
    bool failed{false};
    std::string message;
};

// Streaming mean/M2 of one real series, merged in a fixed order
struct Moments {
    double n{0.0};
    double mean{0.0};
    double m2{0.0};

    void add(double x);
    void merge(const Moments& o);
    double variance() const;  // sample variance, 0 for n < 2
};

// Per-output-time accumulators for the three observables (re and im)
struct SeriesAccumulator {
    std::vector<std::array<Moments, 6>> slots;

    explicit SeriesAccumulator(std::size_t n_out = 0) : slots(n_out) {}
    void add(const std::vector<Bloch>& samples);
    void merge(const SeriesAccumulator& o);
};

unsigned resolve_workers(unsigned requested);

inline constexpr std::size_t block_size = 64;

// Runs body(index, acc) for index in [0, n) over fixed blocks of block_size indices.
// Each block fills its own accumulator from make(); finished blocks are merged in index
// order as soon as all earlier blocks are done, so the result does not depend on worker
// count or scheduling and only out-of-order blocks are held in memory.
template <class Acc, class Make, class Body>
Acc run_blocks(std::size_t n, unsigned workers, Make make, Body body) {
    std::size_t n_blocks = (n + block_size - 1) / block_size;
    Acc total = make();
    std::vector<std::optional<Acc>> pending(n_blocks);
    std::size_t merged = 0;
    std::mutex merge_mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    auto work = [&] {
        for (;;) {
            std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                Acc acc = make();
                std::size_t end = std::min(n, (b + 1) * block_size);
                for (std::size_t i = b * block_size; i < end; ++i) body(i, acc);
                std::lock_guard<std::mutex> lock(merge_mu);
                pending[b].emplace(std::move(acc));
                while (merged < n_blocks && pending[merged]) {
                    total.merge(*pending[merged]);
                    pending[merged].reset();
                    ++merged;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(merge_mu);
                if (!error) error = std::current_exception();
                next = n_blocks;
            }
        }
    };
    unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_blocks, 1))));
    if (w == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < w; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return total;
}

EnsembleResult finish(const RunConfig& cfg, const SeriesAccumulator& acc, std::size_t n_divergent);

EnsembleResult run_ensemble(const RunConfig& cfg, Method method = Method::Density);

// Same, with a prebuilt convolution plan (shared across repeated runs)
EnsembleResult run_ensemble(const RunConfig& cfg, const ConvolutionPlan& plan, Method method);

struct CompareReport {
    std::vector<double> deviation;  // max over observables of |Re a - Re b| per time
    std::vector<double> z;          // deviation / combined stderr
    double max_deviation{0.0};
    double max_z{0.0};
    double t_at_max{0.0};
};

// Compares real parts of the means, restricted to t <= t_limit and the selected observables
CompareReport compare_runs(const EnsembleResult& a, const EnsembleResult& b,
                           std::array<bool, 3> use = {true, true, true}, double t_limit = 1e300);

std::string csv_header();
void write_csv(const std::string& path, const EnsembleResult& r);
std::string to_csv(const EnsembleResult& r);
EnsembleResult read_csv(const std::string& path);

}  // namespace smf
