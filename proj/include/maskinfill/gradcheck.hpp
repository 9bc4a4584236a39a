#pragma once

// Central finite-difference verification of reverse-mode gradients. The
// computation under test is a callable that rebuilds the forward graph from
// scratch on a given tape, so the numeric side never reuses analytic state.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "maskinfill/rng.hpp"
#include "maskinfill/tape.hpp"

namespace maskinfill {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

// fn(tape, leaf_vars) must return a scalar Var and be a pure, deterministic
// function of the leaf values. Coordinates are subsampled per tensor when a
// tensor exceeds max_coords (seeded, reproducible).
inline GradCheckReport gradient_check(
    std::vector<Tensor> params,
    const std::function<Var(Tape&, const std::vector<Var>&)>& fn,
    double eps = 1e-5,
    std::size_t max_coords = 200,
    std::uint64_t seed = 0) {

    auto eval = [&](const std::vector<Tensor>& ps) {
        Tape tape;
        std::vector<Var> leafs;
        leafs.reserve(ps.size());
        for (const Tensor& p : ps) leafs.push_back(tape.leaf(p));
        Var out = fn(tape, leafs);
        if (out.value().size() != 1)
            throw std::invalid_argument("gradient_check: computation output is not scalar");
        return out.value().item();
    };

    // Analytic gradients.
    Tape tape;
    std::vector<Var> leafs;
    leafs.reserve(params.size());
    for (const Tensor& p : params) leafs.push_back(tape.leaf(p));
    Var out = fn(tape, leafs);
    if (out.value().size() != 1)
        throw std::invalid_argument("gradient_check: computation output is not scalar");
    tape.backward(out);

    GradCheckReport report;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor& analytic = leafs[pi].grad();
        std::vector<std::size_t> coords;
        if (params[pi].size() <= max_coords) {
            coords.resize(params[pi].size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < max_coords; ++i)
                coords.push_back(static_cast<std::size_t>(rng.uniform_index(params[pi].size())));
        }
        for (std::size_t c : coords) {
            const double orig = params[pi][c];
            params[pi][c] = orig + eps;
            const double f_plus = eval(params);
            params[pi][c] = orig - eps;
            const double f_minus = eval(params);
            params[pi][c] = orig;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = analytic[c];
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_err) report.max_rel_err = rel;
            ++report.coords_checked;
        }
    }
    return report;
}

}  // namespace maskinfill
