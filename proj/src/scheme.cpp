#include "driftfv/scheme.hpp"

#include <algorithm>
#include <cmath>

#include "driftfv/flux.hpp"

namespace driftfv {

namespace {

double sup_diff(const CellField& a, const CellField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// (L1 psi)_K = -sum_{sigma not Neumann} tau DPsi_{K,sigma}, traces included
CellField laplacian_action(const Mesh& mesh, const AugmentedField& psi) {
    CellField out(mesh.cells.size(), 0.0);
    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;
        if (e.kind == EdgeKind::Interior) {
            const double d = psi.cell_values[e.cell_k] - psi.cell_values[e.cell_l];
            out[e.cell_k] += e.tau * d;
            out[e.cell_l] -= e.tau * d;
        } else {
            out[e.cell_k] += e.tau * (psi.cell_values[e.cell_k] - psi.dirichlet_values[e.dirichlet_index]);
        }
    }
    return out;
}

struct DampingState {
    double previous_increment = std::numeric_limits<double>::max();
    int consecutive_growth = 0;
    bool triggered = false;

    // returns the blend factor to apply to this update (1 = full step)
    double update(double increment) {
        if (increment > previous_increment) {
            if (++consecutive_growth >= 3) {
                consecutive_growth = 0;
                triggered = true;
                previous_increment = increment;
                return 0.5;
            }
        } else {
            consecutive_growth = 0;
        }
        previous_increment = increment;
        return 1.0;
    }
};

void blend(CellField& next, const CellField& current, double factor) {
    if (factor >= 1.0) return;
    for (std::size_t i = 0; i < next.size(); ++i)
        next[i] = current[i] + factor * (next[i] - current[i]);
}

}  // namespace

void SchemeParams::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("SchemeParams: dt must be positive");
    if (!(t_final >= dt)) throw std::invalid_argument("SchemeParams: t_final must be at least dt");
    if (!(m_bound > 0.0) || !(m_bound <= M_bound))
        throw std::invalid_argument("SchemeParams: need 0 < m_bound <= M_bound");
    if (!(lambda_sq >= 0.0)) throw std::invalid_argument("SchemeParams: lambda^2 must be nonnegative");
    if (mu && !(*mu > 0.0)) throw std::invalid_argument("SchemeParams: mu must be positive");
    if (!(fp_tol > 0.0) || fp_max_iter < 1)
        throw std::invalid_argument("SchemeParams: invalid fixed-point controls");
}

void validate_problem_data(const Mesh& mesh, const ProblemData& data, const SchemeParams& params) {
    const auto ncells = mesh.cells.size();
    const auto ndir = static_cast<std::size_t>(mesh.dirichlet_count);
    if (data.N0.size() != ncells || data.P0.size() != ncells || data.C.size() != ncells)
        throw std::invalid_argument("ProblemData: cell field sizes do not match the mesh");
    if (data.ND.size() != ndir || data.PD.size() != ndir || data.PsiD.size() != ndir)
        throw std::invalid_argument("ProblemData: Dirichlet trace sizes do not match the mesh");

    const double m = params.m_bound, M = params.M_bound;
    for (std::size_t k = 0; k < ncells; ++k) {
        if (data.N0[k] < m - 1e-14 || data.N0[k] > M + 1e-14 || data.P0[k] < m - 1e-14 ||
            data.P0[k] > M + 1e-14)
            throw std::invalid_argument("ProblemData: initial data violate the m..M bounds in cell " +
                                        std::to_string(k));
    }
    for (std::size_t s = 0; s < ndir; ++s) {
        if (data.ND[s] < m - 1e-14 || data.ND[s] > M + 1e-14 || data.PD[s] < m - 1e-14 ||
            data.PD[s] > M + 1e-14)
            throw std::invalid_argument("ProblemData: boundary data violate the m..M bounds");
    }
    if (params.lambda_sq == 0.0) {
        for (std::size_t k = 0; k < ncells; ++k) {
            if (std::abs(data.P0[k] - data.N0[k]) > 1e-12)
                throw std::invalid_argument("ProblemData: lambda = 0 requires quasi-neutral initial data (P0 = N0)");
            if (std::abs(data.C[k]) > 1e-12)
                throw std::invalid_argument(
                    "ProblemData: lambda = 0 with nonzero doping is not supported; use a small "
                    "positive lambda^2 instead");
        }
        for (std::size_t s = 0; s < ndir; ++s)
            if (std::abs(data.PD[s] - data.ND[s]) > 1e-12)
                throw std::invalid_argument("ProblemData: lambda = 0 requires quasi-neutral boundary data (PD = ND)");
    }
}

CellField sg_flux_divergence(const Mesh& mesh, const AugmentedField& psi,
                             const AugmentedField& u, Species species) {
    const double sign = species == Species::Electron ? 1.0 : -1.0;
    CellField out(mesh.cells.size(), 0.0);
    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;  // flux vanishes
        if (e.kind == EdgeKind::Interior) {
            const double dpsi = sign * (psi.cell_values[e.cell_l] - psi.cell_values[e.cell_k]);
            const double f = e.tau * (bernoulli(-dpsi) * u.cell_values[e.cell_k] -
                                      bernoulli(dpsi) * u.cell_values[e.cell_l]);
            out[e.cell_k] += f;
            out[e.cell_l] -= f;  // F_{L,sigma} = -F_{K,sigma}
        } else {
            const int di = e.dirichlet_index;
            const double dpsi = sign * (psi.dirichlet_values[di] - psi.cell_values[e.cell_k]);
            out[e.cell_k] += e.tau * (bernoulli(-dpsi) * u.cell_values[e.cell_k] -
                                      bernoulli(dpsi) * u.dirichlet_values[di]);
        }
    }
    return out;
}

double scheme_residual(const Mesh& mesh, const ProblemData& data, const SchemeParams& params,
                       const State& previous, const State& next) {
    const AugmentedField psi(next.Psi, data.PsiD);
    const AugmentedField nf(next.N, data.ND);
    const AugmentedField pf(next.P, data.PD);
    const auto divN = sg_flux_divergence(mesh, psi, nf, Species::Electron);
    const auto divP = sg_flux_divergence(mesh, psi, pf, Species::Hole);

    double worst = 0.0;
    for (int k = 0; k < mesh.cell_count(); ++k) {
        const double mk = mesh.cells[k].measure;
        const double rn = mk / params.dt * (next.N[k] - previous.N[k]) + divN[k];
        const double rp = mk / params.dt * (next.P[k] - previous.P[k]) + divP[k];
        worst = std::max({worst, std::abs(rn) * params.dt / mk, std::abs(rp) * params.dt / mk});
    }
    if (params.lambda_sq > 0.0) {
        const auto lpsi = laplacian_action(mesh, psi);
        for (int k = 0; k < mesh.cell_count(); ++k) {
            const double mk = mesh.cells[k].measure;
            const double rpsi =
                params.lambda_sq * lpsi[k] - mk * (next.P[k] - next.N[k] + data.C[k]);
            worst = std::max(worst, std::abs(rpsi) / mk);
        }
    } else {
        // quasi-neutral scheme: algebraic relation P = N plus the potential
        // equation with density weights (relative to its right-hand side)
        for (int k = 0; k < mesh.cell_count(); ++k)
            worst = std::max(worst, std::abs(next.P[k] - next.N[k]));
        const auto qn = assemble_qn_potential(mesh, next.N, data.ND, data.PsiD);
        const auto ax = qn.multiply(next.Psi);
        double rhs_scale = 1.0;
        for (int k = 0; k < mesh.cell_count(); ++k)
            rhs_scale = std::max(rhs_scale, std::abs(qn.rhs[k]));
        for (int k = 0; k < mesh.cell_count(); ++k)
            worst = std::max(worst, std::abs(ax[k] - qn.rhs[k]) / rhs_scale);
    }
    return worst;
}

State init_state(const Mesh& mesh, const ProblemData& data, const SchemeParams& params) {
    params.validate();
    validate_problem_data(mesh, data, params);
    State st;
    st.n = 0;
    st.N = data.N0;
    st.P = data.P0;
    if (params.lambda_sq > 0.0) {
        auto sys = assemble_poisson(mesh, params.lambda_sq, st.N, st.P, data.C, data.PsiD);
        st.Psi = solve(sys, params.lin_tol, true).first;
    } else {
        auto sys = assemble_qn_potential(mesh, st.N, data.ND, data.PsiD);
        st.Psi = solve(sys, params.lin_tol, true).first;
    }
    return st;
}

namespace {

std::pair<State, FixedPointReport> step_relaxed_picard(const State& state, const Mesh& mesh,
                                                       const ProblemData& data,
                                                       const SchemeParams& params) {
    const auto stab = Stabilization::mu_over_lambda_sq(params.effective_mu(), params.lambda_sq);
    State next;
    next.n = state.n + 1;
    next.N = state.N;
    next.P = state.P;

    FixedPointReport rep;
    rep.path = FixedPointReport::Path::RelaxedPicard;
    DampingState damping;
    const int budget = params.fp_max_iter + params.polish_max_iter;
    bool increments_converged = false;

    for (int it = 0; it < budget; ++it) {
        auto psi_sys = assemble_poisson(mesh, params.lambda_sq, next.N, next.P, data.C, data.PsiD);
        CellField psi = solve(psi_sys, params.lin_tol, true).first;
        const AugmentedField psi_aug(psi, data.PsiD);

        auto n_sys = assemble_linearized_density(mesh, Species::Electron, psi_aug, params.dt, stab,
                                                 state.N, next.N, data.ND);
        auto p_sys = assemble_linearized_density(mesh, Species::Hole, psi_aug, params.dt, stab,
                                                 state.P, next.P, data.PD);
        CellField n_hat = solve(n_sys, params.lin_tol, false).first;
        CellField p_hat = solve(p_sys, params.lin_tol, false).first;

        double inc = std::max(sup_diff(n_hat, next.N), sup_diff(p_hat, next.P));
        const double factor = damping.update(inc);
        if (factor < 1.0) {
            blend(n_hat, next.N, factor);
            blend(p_hat, next.P, factor);
            inc *= factor;
        }
        next.N = std::move(n_hat);
        next.P = std::move(p_hat);
        rep.iterations = it + 1;
        rep.last_increment = inc;

        if (inc <= params.fp_tol) {
            increments_converged = true;
            auto final_sys =
                assemble_poisson(mesh, params.lambda_sq, next.N, next.P, data.C, data.PsiD);
            next.Psi = solve(final_sys, params.lin_tol, true).first;
            rep.scheme_residual = scheme_residual(mesh, data, params, state, next);
            if (rep.scheme_residual <= params.residual_target || it + 1 >= budget) break;
        } else if (it + 1 >= params.fp_max_iter && !increments_converged) {
            throw StepFailure("fixed point did not converge within " +
                                  std::to_string(params.fp_max_iter) +
                                  " iterations (last increment " + std::to_string(inc) + ")",
                              next.n, it + 1, inc);
        }
    }
    if (!increments_converged)
        throw StepFailure("fixed point did not converge", next.n, rep.iterations,
                          rep.last_increment);
    rep.damped = damping.triggered;
    return {std::move(next), rep};
}

std::pair<State, FixedPointReport> step_charge_slaved(const State& state, const Mesh& mesh,
                                                      const ProblemData& data,
                                                      const SchemeParams& params) {
    const int ncells = mesh.cell_count();
    std::vector<double> sD(mesh.dirichlet_count), dD(mesh.dirichlet_count);
    for (int s = 0; s < mesh.dirichlet_count; ++s) {
        sD[s] = data.ND[s] + data.PD[s];
        dD[s] = data.PD[s] - data.ND[s];
    }
    CellField s_prev(ncells), s_cur(ncells);
    for (int k = 0; k < ncells; ++k) s_prev[k] = s_cur[k] = state.N[k] + state.P[k];

    State next;
    next.n = state.n + 1;
    next.N = state.N;
    next.P = state.P;
    next.Psi = state.Psi;
    const AugmentedField psi_prev_aug(state.Psi, data.PsiD);

    FixedPointReport rep;
    rep.path = FixedPointReport::Path::ChargeSlaved;
    DampingState damping;
    const int budget = params.fp_max_iter + params.polish_max_iter;
    bool increments_converged = false;

    for (int it = 0; it < budget; ++it) {
        const AugmentedField psi_frozen(next.Psi, data.PsiD);
        auto psi_sys = assemble_ap_potential(mesh, params.lambda_sq, params.dt, s_cur, sD,
                                             psi_frozen, psi_prev_aug, data.C, dD, data.PsiD);
        CellField psi = solve(psi_sys, params.lin_tol, false).first;
        const AugmentedField psi_aug(psi, data.PsiD);

        // charge difference slaved to the Poisson relation at n+1
        const auto lpsi = laplacian_action(mesh, psi_aug);
        CellField d_hat(ncells);
        for (int k = 0; k < ncells; ++k)
            d_hat[k] = params.lambda_sq * lpsi[k] / mesh.cells[k].measure - data.C[k];

        auto s_sys = assemble_linearized_density(mesh, Species::Electron, psi_aug, params.dt,
                                                 Stabilization::none(), s_prev, s_cur, sD,
                                                 DensityForm::EffectiveDiffusion);
        add_sum_drift_correction(s_sys, mesh, psi_aug, d_hat, dD);
        CellField s_hat = solve(s_sys, params.lin_tol, true).first;

        CellField n_hat(ncells), p_hat(ncells);
        for (int k = 0; k < ncells; ++k) {
            n_hat[k] = 0.5 * (s_hat[k] - d_hat[k]);
            p_hat[k] = 0.5 * (s_hat[k] + d_hat[k]);
        }
        double inc = std::max(sup_diff(n_hat, next.N), sup_diff(p_hat, next.P));
        const double factor = damping.update(inc);
        if (factor < 1.0) {
            blend(n_hat, next.N, factor);
            blend(p_hat, next.P, factor);
            inc *= factor;
        }
        next.N = std::move(n_hat);
        next.P = std::move(p_hat);
        next.Psi = std::move(psi);
        for (int k = 0; k < ncells; ++k) s_cur[k] = next.N[k] + next.P[k];
        rep.iterations = it + 1;
        rep.last_increment = inc;

        if (inc <= params.fp_tol) {
            increments_converged = true;
            rep.scheme_residual = scheme_residual(mesh, data, params, state, next);
            if (rep.scheme_residual <= params.residual_target || it + 1 >= budget) break;
        } else if (it + 1 >= params.fp_max_iter && !increments_converged) {
            throw StepFailure("fixed point did not converge within " +
                                  std::to_string(params.fp_max_iter) +
                                  " iterations (last increment " + std::to_string(inc) + ")",
                              next.n, it + 1, inc);
        }
    }
    if (!increments_converged)
        throw StepFailure("fixed point did not converge", next.n, rep.iterations,
                          rep.last_increment);
    rep.damped = damping.triggered;
    return {std::move(next), rep};
}

}  // namespace

std::pair<State, FixedPointReport> step_lambda_positive(const State& state, const Mesh& mesh,
                                                        const ProblemData& data,
                                                        const SchemeParams& params) {
    if (!(params.lambda_sq > 0.0))
        throw std::invalid_argument("step_lambda_positive: lambda^2 must be positive");
    switch (params.path) {
        case FixedPointPath::RelaxedPicard:
            return step_relaxed_picard(state, mesh, data, params);
        case FixedPointPath::ChargeSlaved:
            return step_charge_slaved(state, mesh, data, params);
        case FixedPointPath::Auto:
        default:
            // the relaxed map contracts like theta/(1+theta) per iteration,
            // so hand over to the charge-slaved form once theta > 1
            return params.theta() <= 1.0 ? step_relaxed_picard(state, mesh, data, params)
                                         : step_charge_slaved(state, mesh, data, params);
    }
}

std::pair<State, FixedPointReport> step_quasi_neutral(const State& state, const Mesh& mesh,
                                                      const ProblemData& data,
                                                      const SchemeParams& params) {
    if (params.lambda_sq != 0.0)
        throw std::invalid_argument("step_quasi_neutral: lambda^2 must be zero");
    for (double v : state.N)
        if (!(v > 0.0))
            throw StepFailure("step_quasi_neutral: nonpositive density in the current state",
                              state.n, 0, 0.0);

    State next;
    next.n = state.n + 1;
    next.N = state.N;

    FixedPointReport rep;
    rep.path = FixedPointReport::Path::QuasiNeutral;
    DampingState damping;
    const int budget = params.fp_max_iter + params.polish_max_iter;
    bool increments_converged = false;

    for (int it = 0; it < budget; ++it) {
        auto psi_sys = assemble_qn_potential(mesh, next.N, data.ND, data.PsiD);
        CellField psi = solve(psi_sys, params.lin_tol, true).first;
        const AugmentedField psi_aug(psi, data.PsiD);

        auto n_sys = assemble_linearized_density(mesh, Species::Electron, psi_aug, params.dt,
                                                 Stabilization::none(), state.N, next.N, data.ND,
                                                 DensityForm::EffectiveDiffusion);
        CellField n_hat = solve(n_sys, params.lin_tol, true).first;

        double inc = sup_diff(n_hat, next.N);
        const double factor = damping.update(inc);
        if (factor < 1.0) {
            blend(n_hat, next.N, factor);
            inc *= factor;
        }
        next.N = std::move(n_hat);
        next.Psi = std::move(psi);
        rep.iterations = it + 1;
        rep.last_increment = inc;

        if (inc <= params.fp_tol) {
            increments_converged = true;
            next.P = next.N;
            auto final_sys = assemble_qn_potential(mesh, next.N, data.ND, data.PsiD);
            next.Psi = solve(final_sys, params.lin_tol, true).first;
            rep.scheme_residual = scheme_residual(mesh, data, params, state, next);
            if (rep.scheme_residual <= params.residual_target || it + 1 >= budget) break;
        } else if (it + 1 >= params.fp_max_iter && !increments_converged) {
            throw StepFailure("fixed point did not converge within " +
                                  std::to_string(params.fp_max_iter) +
                                  " iterations (last increment " + std::to_string(inc) + ")",
                              next.n, it + 1, inc);
        }
    }
    if (!increments_converged)
        throw StepFailure("fixed point did not converge", next.n, rep.iterations,
                          rep.last_increment);
    next.P = next.N;
    rep.damped = damping.triggered;
    return {std::move(next), rep};
}

RunSummary run(const Mesh& mesh, const ProblemData& data, const SchemeParams& params,
               const std::vector<StepObserver>& observers) {
    const double ratio = params.t_final / params.dt;
    const int n_steps = static_cast<int>(std::floor(ratio + 1e-9 * std::max(1.0, ratio)));

    RunSummary summary;
    summary.final_state = init_state(mesh, data, params);
    for (const auto& obs : observers) obs(mesh, summary.final_state, FixedPointReport{});

    for (int n = 0; n < n_steps; ++n) {
        std::pair<State, FixedPointReport> result;
        try {
            result = params.lambda_sq > 0.0
                         ? step_lambda_positive(summary.final_state, mesh, data, params)
                         : step_quasi_neutral(summary.final_state, mesh, data, params);
        } catch (const StepFailure& f) {
            throw StepFailure(std::string(f.what()) + " at step " + std::to_string(n + 1), n + 1,
                              f.iterations, f.last_increment);
        }
        summary.final_state = std::move(result.first);
        summary.reports.push_back(result.second);
        ++summary.steps;
        for (const auto& obs : observers) obs(mesh, summary.final_state, result.second);
    }
    return summary;
}

}  // namespace driftfv
