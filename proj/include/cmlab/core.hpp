#pragma once
/// Shared error types, small-matrix aliases and a deterministic parallel loop.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cmlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad parameters, bad inputs, violated preconditions.
struct ConfigError : Error {
    using Error::Error;
};

// Geometric preconditions on data: a disk leaving the grid, a slope bound, a graph leaving a ball.
struct DomainError : Error {
    using Error::Error;
};

// Iterations that did not converge.
struct NumericalError : Error {
    using Error::Error;
};

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
// Heap-free matrices for the per-point work (m+n <= 6).
using SMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 6, 6>;
using SVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 6, 1>;

inline double omega(int m) {
    return std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

inline int binomial(int a, int b) {
    if (b < 0 || b > a) return 0;
    long r = 1;
    for (int i = 1; i <= b; ++i) r = r * (a - b + i) / i;
    return static_cast<int>(r);
}

// All size-k subsets of {0..N-1} in lexicographic order.
inline std::vector<std::vector<int>> subsets(int N, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> s(k);
    for (int i = 0; i < k; ++i) s[i] = i;
    if (k > N) return out;
    while (true) {
        out.push_back(s);
        int i = k - 1;
        while (i >= 0 && s[i] == N - k + i) --i;
        if (i < 0) break;
        ++s[i];
        for (int j = i + 1; j < k; ++j) s[j] = s[j - 1] + 1;
    }
    return out;
}

inline unsigned worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Runs body(i) for i in [0, count). Each index must only write its own output slot,
// so the result does not depend on the thread count.
template <class F>
void parallel_for(std::size_t count, F&& body, std::size_t grain = 64) {
    unsigned workers = worker_count();
    if (workers <= 1 || count < 2 * grain) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count / grain));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                std::size_t lo = count * w / workers, hi = count * (w + 1) / workers;
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace cmlab
