#pragma once

#include <vector>

namespace maskgrad {

// Retained-unit budget for the feasible set C = {sum constraint} ∩ [0,1]^n.
// K counts *retained* units: in unit_count mode C = {1ᵀs ≤ K} with K = ρ·n,
// ρ the retained fraction; in param_weighted mode C = {wᵀs ≤ K} with w the
// per-unit parameter counts and K = ρ·Σw.
struct Budget {
    enum class Mode { unit_count, param_weighted };
    double K = 0.0;
    Mode mode = Mode::unit_count;
    std::vector<double> weights;  // param_weighted only; all > 0

    static Budget units(double K) { return Budget{K, Mode::unit_count, {}}; }
    static Budget params(double K, std::vector<double> w) {
        return Budget{K, Mode::param_weighted, std::move(w)};
    }
};

// Euclidean projection onto C. Componentwise min(1, max(0, z_i - nu*)) with
// nu* = max(0, nu1*) and nu1* the bisection root of the constraint residual
// on [min(z) - 1, max(z)]; residual tolerance 1e-10, at most 200 iterations.
std::vector<double> project(const std::vector<double>& z, double K);
std::vector<double> project(const std::vector<double>& z, const Budget& budget);

// Weighted generalization: min(1, max(0, z_i - nu w_i)), nu ≥ 0 by bisection
// on the residual wᵀ s(nu) - K. With w = 1 this reduces exactly to project.
std::vector<double> project_weighted(const std::vector<double>& z, double K,
                                     const std::vector<double>& w);

}  // namespace maskgrad
