#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include "iid/rng.hpp"
#include "iid/tensor.hpp"

namespace testutil {

inline iid::Tensor<double> random_tensor(std::vector<int> shape, iid::Pcg32& rng, double lo = -2.0,
                                         double hi = 2.0) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return iid::Tensor<double>::from_data(std::move(shape), std::move(data), true);
}

inline iid::Tensor<float> random_tensor_f(std::vector<int> shape, iid::Pcg32& rng, float lo = -2.f,
                                          float hi = 2.f) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<float> data(static_cast<size_t>(n));
    for (auto& v : data) v = rng.uniformf(lo, hi);
    return iid::Tensor<float>::from_data(std::move(shape), std::move(data), true);
}

struct GradCheckResult {
    double max_err = 0;          // worst |analytic - fd| / max(|analytic|, |fd|, atol-scale)
    double worst_analytic = 0;
    double worst_fd = 0;
    std::string worst_where;
    size_t checked = 0;
    size_t skipped = 0;  // coordinates where the FD probe itself does not converge
};

// Central finite differences at 64-bit against the analytic gradients of a
// scalar-valued function of the given leaf tensors. `fn` must rebuild its
// graph from the leaves' current data on every call. Checks every element
// when stride == 1, a deterministic subsample for larger strides, and about
// three coordinates per leaf when stride == 0.
inline GradCheckResult grad_check(const std::function<iid::Tensor<double>()>& fn,
                                  std::vector<iid::Tensor<double>> leaves, double h = 1e-5,
                                  size_t stride = 1, bool filter_kinks = false) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    iid::Tensor<double> loss = fn();
    iid::backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) analytic.push_back(leaf.has_grad() ? leaf.grad() : std::vector<double>(leaf.data().size(), 0.0));

    // Below this magnitude a central difference of fn is rounding noise, so
    // the oracle cannot distinguish such gradients from zero.
    const double fd_noise = 200 * 2.22e-16 * std::max(1.0, std::abs(loss.item())) / h;

    GradCheckResult result;
    iid::NoGradGuard guard;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        const size_t leaf_stride = stride ? stride : std::max<size_t>(1, leaf.data().size() / 3);
        for (size_t i = 0; i < leaf.data().size(); i += leaf_stride) {
            const double saved = leaf.data()[i];
            auto central = [&](double step) {
                leaf.data()[i] = saved + step;
                const double up = fn().item();
                leaf.data()[i] = saved - step;
                const double down = fn().item();
                leaf.data()[i] = saved;
                return (up - down) / (2 * step);
            };
            double fd = central(h);
            if (filter_kinks) {
                // A probe that straddles a kink (pooling argmax switch, ReLU
                // zero, clip boundary) is not a gradient estimate at all:
                // halving the step must reproduce it, otherwise skip.
                const double fd_half = central(h / 2);
                if (std::abs(fd - fd_half) > 0.05 * std::max({std::abs(fd), std::abs(fd_half), 1e-3})) {
                    ++result.skipped;
                    continue;
                }
                fd = fd_half;
            }
            ++result.checked;
            const double a = analytic[li][i];
            if (std::abs(a) < fd_noise && std::abs(fd) < fd_noise) continue;  // both zero at FD resolution
            const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
            if (err > result.max_err) {
                result.max_err = err;
                result.worst_analytic = a;
                result.worst_fd = fd;
                result.worst_where = "leaf " + std::to_string(li) + " index " + std::to_string(i);
            }
        }
    }
    return result;
}

// Unique scratch directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("iid_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace testutil
