#include "driftfv/linsolve.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "driftfv/flux.hpp"

namespace driftfv {

namespace {

// Beyond this size direct factorization gives way to Krylov iterations.
constexpr int kIterativeThreshold = 10000;
constexpr int kDenseFallbackLimit = 4096;

Eigen::SparseMatrix<double> to_eigen(const SparseSystem& sys) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(sys.entries.size());
    for (const auto& e : sys.entries) trips.emplace_back(e.row, e.col, e.value);
    Eigen::SparseMatrix<double> A(sys.n, sys.n);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

double rel_residual(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& b) {
    const double bn = b.norm();
    const double rn = (A * x - b).norm();
    return bn > 0.0 ? rn / bn : rn;
}

}  // namespace

void SparseSystem::finalize() {
    std::map<std::pair<int, int>, double> acc;
    for (const auto& e : entries) acc[{e.row, e.col}] += e.value;
    entries.clear();
    entries.reserve(acc.size());
    for (const auto& [rc, v] : acc) entries.push_back({rc.first, rc.second, v});
    assembled = true;
}

std::vector<double> SparseSystem::multiply(const std::vector<double>& x) const {
    std::vector<double> y(n, 0.0);
    for (const auto& e : entries) y[e.row] += e.value * x[e.col];
    return y;
}

bool SparseSystem::is_symmetric(double rel_tol) const {
    std::map<std::pair<int, int>, double> m;
    double scale = 0.0;
    for (const auto& e : entries) {
        m[{e.row, e.col}] = e.value;
        scale = std::max(scale, std::abs(e.value));
    }
    for (const auto& [rc, v] : m) {
        auto it = m.find({rc.second, rc.first});
        const double vt = it == m.end() ? 0.0 : it->second;
        if (std::abs(v - vt) > rel_tol * std::max(1.0, scale)) return false;
    }
    return true;
}

SparseSystem assemble_poisson(const Mesh& mesh, double lambda_sq, const CellField& N,
                              const CellField& P, const CellField& C,
                              const std::vector<double>& psiD) {
    if (!(lambda_sq > 0.0))
        throw std::invalid_argument("assemble_poisson: lambda^2 must be positive (use the quasi-neutral potential otherwise)");
    if (mesh.dirichlet_count == 0)
        throw std::invalid_argument("assemble_poisson: Dirichlet edge set is empty");

    SparseSystem sys(mesh.cell_count());
    for (int k = 0; k < mesh.cell_count(); ++k)
        sys.rhs[k] = mesh.cells[k].measure * (P[k] - N[k] + C[k]);
    for (const auto& e : mesh.edges) {
        const double t = lambda_sq * e.tau;
        switch (e.kind) {
            case EdgeKind::Interior:
                sys.add(e.cell_k, e.cell_k, t);
                sys.add(e.cell_l, e.cell_l, t);
                sys.add(e.cell_k, e.cell_l, -t);
                sys.add(e.cell_l, e.cell_k, -t);
                break;
            case EdgeKind::DirichletBoundary:
                sys.add(e.cell_k, e.cell_k, t);
                sys.rhs[e.cell_k] += t * psiD.at(e.dirichlet_index);
                break;
            case EdgeKind::NeumannBoundary:
                break;
        }
    }
    sys.finalize();
    return sys;
}

SparseSystem assemble_qn_potential(const Mesh& mesh, const CellField& N,
                                   const std::vector<double>& ND,
                                   const std::vector<double>& psiD) {
    if (mesh.dirichlet_count == 0)
        throw std::invalid_argument("assemble_qn_potential: Dirichlet edge set is empty");
    for (int k = 0; k < mesh.cell_count(); ++k)
        if (!(N[k] > 0.0))
            throw std::invalid_argument("assemble_qn_potential: nonpositive density in cell " +
                                        std::to_string(k));
    for (double v : ND)
        if (!(v > 0.0))
            throw std::invalid_argument("assemble_qn_potential: nonpositive Dirichlet density trace");

    SparseSystem sys(mesh.cell_count());
    for (const auto& e : mesh.edges) {
        switch (e.kind) {
            case EdgeKind::Interior: {
                const double w = e.tau * (N[e.cell_k] + N[e.cell_l]);
                sys.add(e.cell_k, e.cell_k, w);
                sys.add(e.cell_l, e.cell_l, w);
                sys.add(e.cell_k, e.cell_l, -w);
                sys.add(e.cell_l, e.cell_k, -w);
                break;
            }
            case EdgeKind::DirichletBoundary: {
                const double w = e.tau * (N[e.cell_k] + ND.at(e.dirichlet_index));
                sys.add(e.cell_k, e.cell_k, w);
                sys.rhs[e.cell_k] += w * psiD.at(e.dirichlet_index);
                break;
            }
            case EdgeKind::NeumannBoundary:
                break;
        }
    }
    sys.finalize();
    return sys;
}

Stabilization Stabilization::mu_over_lambda_sq(double mu, double lambda_sq) {
    if (!(mu > 0.0) || !(lambda_sq > 0.0))
        throw std::invalid_argument("Stabilization: mu and lambda^2 must be positive");
    Stabilization s;
    s.mu = mu;
    s.lambda_sq = lambda_sq;
    s.enabled = true;
    return s;
}

SparseSystem assemble_linearized_density(const Mesh& mesh, Species species,
                                         const AugmentedField& psi, double dt,
                                         const Stabilization& stab, const CellField& previous,
                                         const CellField& relaxation_source,
                                         const std::vector<double>& uD, DensityForm form) {
    if (!(dt > 0.0)) throw std::invalid_argument("assemble_linearized_density: dt must be positive");
    const double theta = stab.theta();
    const double sign = species == Species::Electron ? 1.0 : -1.0;

    SparseSystem sys(mesh.cell_count());
    for (int k = 0; k < mesh.cell_count(); ++k) {
        const double mk_dt = mesh.cells[k].measure / dt;
        sys.add(k, k, mk_dt * (1.0 + theta));
        sys.rhs[k] = mk_dt * (previous[k] + theta * relaxation_source[k]);
    }
    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;
        if (e.kind == EdgeKind::Interior) {
            const double dpsi_k = psi.cell_values[e.cell_l] - psi.cell_values[e.cell_k];
            if (form == DensityForm::Exponential) {
                // row K: tau (B(-s dpsi) u_K - B(s dpsi) u_L); row L mirrored
                sys.add(e.cell_k, e.cell_k, e.tau * bernoulli(-sign * dpsi_k));
                sys.add(e.cell_k, e.cell_l, -e.tau * bernoulli(sign * dpsi_k));
                sys.add(e.cell_l, e.cell_l, e.tau * bernoulli(sign * dpsi_k));
                sys.add(e.cell_l, e.cell_k, -e.tau * bernoulli(-sign * dpsi_k));
            } else {
                const double w = e.tau * effective_diffusion(dpsi_k);
                sys.add(e.cell_k, e.cell_k, w);
                sys.add(e.cell_l, e.cell_l, w);
                sys.add(e.cell_k, e.cell_l, -w);
                sys.add(e.cell_l, e.cell_k, -w);
            }
        } else {  // Dirichlet
            const double dpsi = psi.dirichlet_values[e.dirichlet_index] - psi.cell_values[e.cell_k];
            if (form == DensityForm::Exponential) {
                sys.add(e.cell_k, e.cell_k, e.tau * bernoulli(-sign * dpsi));
                sys.rhs[e.cell_k] += e.tau * bernoulli(sign * dpsi) * uD.at(e.dirichlet_index);
            } else {
                const double w = e.tau * effective_diffusion(dpsi);
                sys.add(e.cell_k, e.cell_k, w);
                sys.rhs[e.cell_k] += w * uD.at(e.dirichlet_index);
            }
        }
    }
    sys.finalize();
    return sys;
}

SparseSystem assemble_ap_potential(const Mesh& mesh, double lambda_sq, double dt,
                                   const CellField& s, const std::vector<double>& sD,
                                   const AugmentedField& deff_psi,
                                   const AugmentedField& psi_prev, const CellField& C,
                                   const std::vector<double>& dD,
                                   const std::vector<double>& psiD) {
    if (!(lambda_sq >= 0.0) || !(dt > 0.0))
        throw std::invalid_argument("assemble_ap_potential: need lambda^2 >= 0 and dt > 0");
    const int n = mesh.cell_count();
    const double a = lambda_sq / dt;

    // unit-weight operator L1 (matrix part) and its Dirichlet vector b1
    std::vector<Eigen::Triplet<double>> l1t, ldt;
    Eigen::VectorXd b1 = Eigen::VectorXd::Zero(n);
    SparseSystem sys(n);

    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;
        double de;
        if (e.kind == EdgeKind::Interior) {
            const double dpsi = deff_psi.cell_values[e.cell_l] - deff_psi.cell_values[e.cell_k];
            de = effective_diffusion(dpsi);
            const double ws = 0.5 * (s[e.cell_k] + s[e.cell_l]);
            l1t.emplace_back(e.cell_k, e.cell_k, e.tau);
            l1t.emplace_back(e.cell_l, e.cell_l, e.tau);
            l1t.emplace_back(e.cell_k, e.cell_l, -e.tau);
            l1t.emplace_back(e.cell_l, e.cell_k, -e.tau);
            ldt.emplace_back(e.cell_k, e.cell_k, e.tau * de);
            ldt.emplace_back(e.cell_l, e.cell_l, e.tau * de);
            ldt.emplace_back(e.cell_k, e.cell_l, -e.tau * de);
            ldt.emplace_back(e.cell_l, e.cell_k, -e.tau * de);
            // (lambda^2/dt + s-weight) Laplacian into the final matrix
            sys.add(e.cell_k, e.cell_k, (a + ws) * e.tau);
            sys.add(e.cell_l, e.cell_l, (a + ws) * e.tau);
            sys.add(e.cell_k, e.cell_l, -(a + ws) * e.tau);
            sys.add(e.cell_l, e.cell_k, -(a + ws) * e.tau);
        } else {
            const int di = e.dirichlet_index;
            const double dpsi = deff_psi.dirichlet_values[di] - deff_psi.cell_values[e.cell_k];
            de = effective_diffusion(dpsi);
            const double ws = 0.5 * (s[e.cell_k] + sD.at(di));
            l1t.emplace_back(e.cell_k, e.cell_k, e.tau);
            b1[e.cell_k] += e.tau * psiD.at(di);
            ldt.emplace_back(e.cell_k, e.cell_k, e.tau * de);
            sys.add(e.cell_k, e.cell_k, (a + ws) * e.tau);
            sys.rhs[e.cell_k] += (a + ws) * e.tau * psiD.at(di);
            // Dirichlet trace of the charge difference enters directly
            sys.rhs[e.cell_k] += e.tau * de * dD.at(di);
        }
    }

    Eigen::SparseMatrix<double> L1(n, n), LD(n, n);
    L1.setFromTriplets(l1t.begin(), l1t.end());
    LD.setFromTriplets(ldt.begin(), ldt.end());
    Eigen::VectorXd minv(n);
    for (int k = 0; k < n; ++k) minv[k] = 1.0 / mesh.cells[k].measure;

    // composed operator lambda^2 LD M^-1 L1 (the implicit charge slaving)
    if (lambda_sq > 0.0) {
        Eigen::SparseMatrix<double> comp = LD * minv.asDiagonal() * L1;
        for (int col = 0; col < comp.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(comp, col); it; ++it)
                sys.add(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        lambda_sq * it.value());
        Eigen::VectorXd extra = lambda_sq * (LD * minv.asDiagonal() * b1);
        for (int k = 0; k < n; ++k) sys.rhs[k] += extra[k];
    }

    // + LD C on the rhs
    Eigen::VectorXd cvec(n);
    for (int k = 0; k < n; ++k) cvec[k] = C[k];
    Eigen::VectorXd ldc = LD * cvec;
    for (int k = 0; k < n; ++k) sys.rhs[k] += ldc[k];

    // memory term (lambda^2/dt) (L1 psi^n) with boundary traces
    if (a > 0.0) {
        for (const auto& e : mesh.edges) {
            if (e.kind == EdgeKind::NeumannBoundary) continue;
            if (e.kind == EdgeKind::Interior) {
                const double d = psi_prev.cell_values[e.cell_k] - psi_prev.cell_values[e.cell_l];
                sys.rhs[e.cell_k] += a * e.tau * d;
                sys.rhs[e.cell_l] -= a * e.tau * d;
            } else {
                const double d =
                    psi_prev.cell_values[e.cell_k] - psi_prev.dirichlet_values[e.dirichlet_index];
                sys.rhs[e.cell_k] += a * e.tau * d;
            }
        }
    }
    sys.finalize();
    return sys;
}

void add_sum_drift_correction(SparseSystem& sys, const Mesh& mesh, const AugmentedField& psi,
                              const CellField& d, const std::vector<double>& dD) {
    for (const auto& e : mesh.edges) {
        if (e.kind == EdgeKind::NeumannBoundary) continue;
        if (e.kind == EdgeKind::Interior) {
            const double dpsi = psi.cell_values[e.cell_l] - psi.cell_values[e.cell_k];
            const double c = e.tau * 0.5 * dpsi * (d[e.cell_k] + d[e.cell_l]);
            sys.rhs[e.cell_k] += c;
            sys.rhs[e.cell_l] -= c;
        } else {
            const int di = e.dirichlet_index;
            const double dpsi = psi.dirichlet_values[di] - psi.cell_values[e.cell_k];
            sys.rhs[e.cell_k] += e.tau * 0.5 * dpsi * (d[e.cell_k] + dD.at(di));
        }
    }
}

std::pair<CellField, SolveReport> solve(const SparseSystem& sys, double tol, bool symmetric_hint) {
    if (!sys.assembled) throw std::invalid_argument("solve: system not finalized");
    const auto A = to_eigen(sys);
    Eigen::VectorXd b(sys.n);
    for (int i = 0; i < sys.n; ++i) b[i] = sys.rhs[i];

    SolveReport rep;
    Eigen::VectorXd x;

    if (sys.n <= kIterativeThreshold) {
        rep.method = SolveReport::Method::Direct;
        bool ok = false;
        if (symmetric_hint) {
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
            if (ldlt.info() == Eigen::Success) {
                x = ldlt.solve(b);
                ok = ldlt.info() == Eigen::Success;
            }
        }
        if (!ok) {
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
            if (lu.info() == Eigen::Success) {
                x = lu.solve(b);
                ok = lu.info() == Eigen::Success;
            }
        }
        if (ok) rep.residual = rel_residual(A, x, b);
        if (!ok || rep.residual > tol || !x.allFinite()) {
            bool dense_ok = false;
            if (sys.n <= kDenseFallbackLimit) {
                Eigen::MatrixXd Ad(A);
                x = Ad.fullPivLu().solve(b);
                rep.residual = rel_residual(A, x, b);
                dense_ok = x.allFinite() && rep.residual <= tol;
            }
            if (!dense_ok)
                throw SolveFailure("solve: direct factorization failed (relative residual " +
                                       std::to_string(rep.residual) + " > tolerance)",
                                   rep.residual);
        }
    } else {
        rep.method = SolveReport::Method::Iterative;
        if (symmetric_hint) {
            Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg(A);
            cg.setTolerance(tol);
            cg.setMaxIterations(20 * sys.n);
            x = cg.solve(b);
            rep.iterations = static_cast<int>(cg.iterations());
        } else {
            Eigen::BiCGSTAB<Eigen::SparseMatrix<double>> bicg(A);
            bicg.setTolerance(tol);
            bicg.setMaxIterations(20 * sys.n);
            x = bicg.solve(b);
            rep.iterations = static_cast<int>(bicg.iterations());
        }
        rep.residual = rel_residual(A, x, b);
        if (rep.residual > tol || !x.allFinite())
            throw SolveFailure("solve: iteration did not reach tolerance (relative residual " +
                                   std::to_string(rep.residual) + ")",
                               rep.residual);
    }

    CellField out(sys.n);
    for (int i = 0; i < sys.n; ++i) out[i] = x[i];
    return {std::move(out), rep};
}

MMatrixReport check_m_matrix(const SparseSystem& sys) {
    MMatrixReport rep;
    std::vector<double> col_diag(sys.n, 0.0), col_off(sys.n, 0.0), col_scale(sys.n, 0.0);
    for (const auto& e : sys.entries) {
        if (e.row == e.col) {
            if (!(e.value > 0.0)) {
                rep.diagonal_positive = false;
                rep.violating_row = e.row;
                rep.violating_col = e.col;
            }
            col_diag[e.col] += e.value;
        } else {
            if (e.value > 0.0) {
                rep.offdiagonal_nonpositive = false;
                rep.violating_row = e.row;
                rep.violating_col = e.col;
            }
            col_off[e.col] += std::abs(e.value);
        }
        col_scale[e.col] = std::max(col_scale[e.col], std::abs(e.value));
    }
    for (int c = 0; c < sys.n; ++c) {
        const double slack = col_diag[c] - col_off[c];
        const double tol = 1e-13 * std::max(1.0, col_scale[c]);
        if (slack > tol)
            ++rep.strict_columns;
        else if (slack >= -tol)
            ++rep.weak_columns;
        else {
            ++rep.violating_columns;
            if (rep.violating_col < 0) rep.violating_col = c;
        }
    }
    return rep;
}

void dump_system(const SparseSystem& sys, const std::string& path) {
    std::ofstream out(path);
    out.precision(17);
    for (const auto& e : sys.entries) out << e.row << " " << e.col << " " << e.value << "\n";
}

}  // namespace driftfv
