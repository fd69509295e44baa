#include "driftfv/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftfv {

double entropy_H(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("entropy_H: argument must be positive");
    return x * std::log(x) - x + 1.0;
}

namespace {

double relative_entropy_part(const Mesh& mesh, const CellField& u, const CellField& uD_cells) {
    double sum = 0.0;
    for (int k = 0; k < mesh.cell_count(); ++k) {
        if (!(u[k] > 0.0))
            throw std::invalid_argument("discrete_entropy: nonpositive density in cell " +
                                        std::to_string(k));
        sum += mesh.cells[k].measure *
               (entropy_H(u[k]) - entropy_H(uD_cells[k]) -
                std::log(uD_cells[k]) * (u[k] - uD_cells[k]));
    }
    return sum;
}

}  // namespace

double discrete_entropy(const Mesh& mesh, const State& state, const ProblemData& data,
                        double lambda_sq) {
    double e = relative_entropy_part(mesh, state.N, data.ND_cells) +
               relative_entropy_part(mesh, state.P, data.PD_cells);
    if (lambda_sq > 0.0) {
        // Psi - Psi^D with vanishing Dirichlet traces
        CellField diff(mesh.cells.size());
        for (int k = 0; k < mesh.cell_count(); ++k) diff[k] = state.Psi[k] - data.PsiD_cells[k];
        const AugmentedField field(std::move(diff),
                                   std::vector<double>(mesh.dirichlet_count, 0.0));
        e += 0.5 * lambda_sq * h1_seminorm_sq(mesh, field);
    }
    return e;
}

double discrete_production(const Mesh& mesh, const State& state, const ProblemData& data) {
    std::vector<double> wN_d(mesh.dirichlet_count), wP_d(mesh.dirichlet_count);
    for (int s = 0; s < mesh.dirichlet_count; ++s) {
        if (!(data.ND[s] > 0.0) || !(data.PD[s] > 0.0))
            throw std::invalid_argument("discrete_production: nonpositive boundary density");
        wN_d[s] = std::log(data.ND[s]) - data.PsiD[s];
        wP_d[s] = std::log(data.PD[s]) + data.PsiD[s];
    }
    CellField wN(mesh.cells.size()), wP(mesh.cells.size());
    for (int k = 0; k < mesh.cell_count(); ++k) {
        if (!(state.N[k] > 0.0) || !(state.P[k] > 0.0))
            throw std::invalid_argument("discrete_production: nonpositive density in cell " +
                                        std::to_string(k));
        wN[k] = std::log(state.N[k]) - state.Psi[k];
        wP[k] = std::log(state.P[k]) + state.Psi[k];
    }
    const AugmentedField fN(wN, wN_d), fP(wP, wP_d);
    const AugmentedField nf(state.N, data.ND), pf(state.P, data.PD);

    double sum = 0.0;
    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;  // D(.) = 0
        const auto tn = edge_trace(mesh, nf, e.cell_k, e.id);
        const auto tp = edge_trace(mesh, pf, e.cell_k, e.id);
        const auto dn = edge_trace(mesh, fN, e.cell_k, e.id);
        const auto dp = edge_trace(mesh, fP, e.cell_k, e.id);
        sum += e.tau * (std::min(nf.cell_values[e.cell_k], tn.value) * dn.diff * dn.diff +
                        std::min(pf.cell_values[e.cell_k], tp.value) * dp.diff * dp.diff);
    }
    return sum;
}

double entropy_rhs_constant(const Mesh& mesh, const ProblemData& data, double m_bound,
                            double M_bound) {
    const int nd = mesh.dirichlet_count;
    std::vector<double> nD(nd), pD(nd);
    for (int s = 0; s < nd; ++s) {
        if (!(data.ND[s] > 0.0) || !(data.PD[s] > 0.0))
            throw std::invalid_argument("entropy_rhs_constant: nonpositive boundary density trace");
        nD[s] = std::log(data.ND[s]) - data.PsiD[s];
        pD[s] = std::log(data.PD[s]) + data.PsiD[s];
    }
    CellField nC(mesh.cells.size()), pC(mesh.cells.size());
    for (int k = 0; k < mesh.cell_count(); ++k) {
        if (!(data.ND_cells[k] > 0.0) || !(data.PD_cells[k] > 0.0))
            throw std::invalid_argument("entropy_rhs_constant: nonpositive boundary extension average");
        nC[k] = std::log(data.ND_cells[k]) - data.PsiD_cells[k];
        pC[k] = std::log(data.PD_cells[k]) + data.PsiD_cells[k];
    }
    const double prefactor = M_bound * M_bound / (2.0 * m_bound);
    return prefactor * (h1_seminorm_sq(mesh, AugmentedField(nC, nD)) +
                        h1_seminorm_sq(mesh, AugmentedField(pC, pD)));
}

DiagnosticsRecord compute_record(const Mesh& mesh, const State& state, const ProblemData& data,
                                 const SchemeParams& params, int fp_iterations) {
    DiagnosticsRecord rec;
    rec.n = state.n;
    rec.t = state.n * params.dt;
    rec.fp_iterations = fp_iterations;
    rec.entropy = discrete_entropy(mesh, state, data, params.lambda_sq);
    rec.production = discrete_production(mesh, state, data);
    rec.entropy_rhs_bound = entropy_rhs_constant(mesh, data, params.m_bound, params.M_bound);

    rec.min_N = *std::min_element(state.N.begin(), state.N.end());
    rec.max_N = *std::max_element(state.N.begin(), state.N.end());
    rec.min_P = *std::min_element(state.P.begin(), state.P.end());
    rec.max_P = *std::max_element(state.P.begin(), state.P.end());

    const AugmentedField nf(state.N, data.ND), pf(state.P, data.PD), psif(state.Psi, data.PsiD);
    rec.h1_N = h1_seminorm_sq(mesh, nf);
    rec.h1_P = h1_seminorm_sq(mesh, pf);
    rec.h1_Psi = h1_seminorm_sq(mesh, psif);

    double bv = 0.0;
    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;
        const auto dn = edge_trace(mesh, nf, e.cell_k, e.id);
        const auto dp = edge_trace(mesh, pf, e.cell_k, e.id);
        const auto ds = edge_trace(mesh, psif, e.cell_k, e.id);
        bv += e.tau * std::abs(ds.diff) * (dn.diff * dn.diff + dp.diff * dp.diff);
    }
    rec.weak_bv_increment = bv;
    return rec;
}

EntropyInequalityReport check_entropy_inequality(const std::vector<DiagnosticsRecord>& records,
                                                 double dt, double slack) {
    EntropyInequalityReport rep;
    for (std::size_t i = 0; i + 1 < records.size(); ++i) {
        const auto& cur = records[i];
        const auto& nxt = records[i + 1];
        const double lhs = (nxt.entropy - cur.entropy) / dt + 0.5 * nxt.production;
        const double excess = lhs - nxt.entropy_rhs_bound;
        ++rep.checked_steps;
        if (excess > slack) {
            ++rep.violations;
            rep.per_step_ok = false;
        }
        rep.max_violation = std::max(rep.max_violation, excess);
        rep.summed_production += dt * nxt.production;
    }
    return rep;
}

AprioriSums apriori_sums(const std::vector<DiagnosticsRecord>& records, double dt) {
    AprioriSums sums;
    for (std::size_t i = 1; i < records.size(); ++i) {
        sums.weak_bv += dt * records[i].weak_bv_increment;
        sums.l2h1_N += dt * records[i].h1_N;
        sums.l2h1_P += dt * records[i].h1_P;
        sums.l2h1_Psi += dt * records[i].h1_Psi;
    }
    return sums;
}

}  // namespace driftfv
