#include "driftfv/mesh.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace driftfv {

namespace {

constexpr double kOrthogonalityTol = 1e-10;

void finalize(Mesh& mesh) {
    mesh.cell_edges.assign(mesh.cells.size(), {});
    mesh.dirichlet_count = 0;
    for (auto& e : mesh.edges) {
        if (e.kind == EdgeKind::DirichletBoundary)
            e.dirichlet_index = mesh.dirichlet_count++;
        mesh.cell_edges[e.cell_k].push_back(e.id);
        if (e.kind == EdgeKind::Interior) mesh.cell_edges[e.cell_l].push_back(e.id);
    }
    mesh.size = 0.0;
    for (const auto& c : mesh.cells) mesh.size = std::max(mesh.size, c.diameter);
}

double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

double Mesh::domain_measure() const {
    double s = 0.0;
    for (const auto& c : cells) s += c.measure;
    return s;
}

Mesh build_1d_uniform(int n_cells, double length, EdgeKind left, EdgeKind right) {
    if (n_cells < 2) throw std::invalid_argument("build_1d_uniform: need at least 2 cells");
    if (!(length > 0.0)) throw std::invalid_argument("build_1d_uniform: length must be positive");
    if (left == EdgeKind::Interior || right == EdgeKind::Interior)
        throw std::invalid_argument("build_1d_uniform: boundary kind cannot be Interior");
    if (left != EdgeKind::DirichletBoundary && right != EdgeKind::DirichletBoundary)
        throw std::invalid_argument("build_1d_uniform: Dirichlet part of the boundary must be nonempty");

    Mesh mesh;
    mesh.dimension = 1;
    const double dx = length / n_cells;
    mesh.cells.resize(n_cells);
    for (int i = 0; i < n_cells; ++i) {
        auto& c = mesh.cells[i];
        c.id = i;
        c.measure = dx;
        c.center = {(i + 0.5) * dx, 0.0};
        c.diameter = dx;
    }
    // edge measure convention m(sigma) = 1 in 1D, so tau = 1/d_sigma
    int eid = 0;
    Edge lb;
    lb.id = eid++;
    lb.kind = left;
    lb.measure = 1.0;
    lb.d_sigma = dx / 2.0;
    lb.tau = 1.0 / lb.d_sigma;
    lb.cell_k = 0;
    lb.midpoint = {0.0, 0.0};
    mesh.edges.push_back(lb);
    for (int i = 0; i + 1 < n_cells; ++i) {
        Edge e;
        e.id = eid++;
        e.kind = EdgeKind::Interior;
        e.measure = 1.0;
        e.d_sigma = dx;
        e.tau = 1.0 / dx;
        e.cell_k = i;
        e.cell_l = i + 1;
        e.midpoint = {(i + 1) * dx, 0.0};
        mesh.edges.push_back(e);
    }
    Edge rb;
    rb.id = eid++;
    rb.kind = right;
    rb.measure = 1.0;
    rb.d_sigma = dx / 2.0;
    rb.tau = 1.0 / rb.d_sigma;
    rb.cell_k = n_cells - 1;
    rb.midpoint = {length, 0.0};
    mesh.edges.push_back(rb);

    finalize(mesh);
    mesh.xi = 0.5;  // d(x_K,sigma) = dx/2, diam = dx
    return mesh;
}

namespace {

// Resolve the boundary kind at coordinate t along a side.
EdgeKind side_kind_at(const SideSpec& side, double t0, double t1, double h,
                      const char* side_name) {
    EdgeKind kind = side.base;
    const double mid = 0.5 * (t0 + t1);
    for (const auto& iv : side.overrides) {
        const double snap = 1e-9 * std::max(1.0, std::abs(iv.lo) + std::abs(iv.hi));
        // interval endpoints must coincide with edge endpoints (multiples of h)
        auto aligned = [&](double v) {
            const double r = std::remainder(v, h);
            return std::abs(r) <= snap;
        };
        if (!aligned(iv.lo) || !aligned(iv.hi)) {
            std::ostringstream os;
            os << "build_2d_rect: boundary interval [" << iv.lo << ", " << iv.hi
               << "] on side " << side_name << " does not align with edge endpoints (h="
               << h << "); offending edge spans [" << t0 << ", " << t1 << "]";
            throw std::invalid_argument(os.str());
        }
        if (mid > iv.lo && mid < iv.hi) kind = iv.kind;
    }
    return kind;
}

}  // namespace

Mesh build_2d_rect(int nx, int ny, double Lx, double Ly, const RectBoundarySpec& spec) {
    if (nx < 2 || ny < 2) throw std::invalid_argument("build_2d_rect: need nx, ny >= 2");
    if (!(Lx > 0.0) || !(Ly > 0.0)) throw std::invalid_argument("build_2d_rect: degenerate dimensions");

    Mesh mesh;
    mesh.dimension = 2;
    const double hx = Lx / nx, hy = Ly / ny;
    const double diam = std::sqrt(hx * hx + hy * hy);
    mesh.cells.resize(static_cast<std::size_t>(nx) * ny);
    auto cid = [&](int i, int j) { return j * nx + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            auto& c = mesh.cells[cid(i, j)];
            c.id = cid(i, j);
            c.measure = hx * hy;
            c.center = {(i + 0.5) * hx, (j + 0.5) * hy};
            c.diameter = diam;
        }

    int eid = 0;
    auto add_interior = [&](int k, int l, double m_sigma, double d, double mx, double my) {
        Edge e;
        e.id = eid++;
        e.kind = EdgeKind::Interior;
        e.measure = m_sigma;
        e.d_sigma = d;
        e.tau = m_sigma / d;
        e.cell_k = k;
        e.cell_l = l;
        e.midpoint = {mx, my};
        mesh.edges.push_back(e);
    };
    auto add_boundary = [&](int k, EdgeKind kind, double m_sigma, double d, double mx, double my) {
        Edge e;
        e.id = eid++;
        e.kind = kind;
        e.measure = m_sigma;
        e.d_sigma = d;
        e.tau = m_sigma / d;
        e.cell_k = k;
        e.midpoint = {mx, my};
        mesh.edges.push_back(e);
    };

    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i)
            add_interior(cid(i, j), cid(i + 1, j), hy, hx, (i + 1) * hx, (j + 0.5) * hy);
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i < nx; ++i)
            add_interior(cid(i, j), cid(i, j + 1), hx, hy, (i + 0.5) * hx, (j + 1) * hy);

    for (int i = 0; i < nx; ++i) {
        add_boundary(cid(i, 0), side_kind_at(spec.bottom, i * hx, (i + 1) * hx, hx, "bottom"),
                     hx, hy / 2.0, (i + 0.5) * hx, 0.0);
        add_boundary(cid(i, ny - 1), side_kind_at(spec.top, i * hx, (i + 1) * hx, hx, "top"),
                     hx, hy / 2.0, (i + 0.5) * hx, Ly);
    }
    for (int j = 0; j < ny; ++j) {
        add_boundary(cid(0, j), side_kind_at(spec.left, j * hy, (j + 1) * hy, hy, "left"),
                     hy, hx / 2.0, 0.0, (j + 0.5) * hy);
        add_boundary(cid(nx - 1, j), side_kind_at(spec.right, j * hy, (j + 1) * hy, hy, "right"),
                     hy, hx / 2.0, Lx, (j + 0.5) * hy);
    }

    finalize(mesh);
    if (mesh.dirichlet_count == 0)
        throw std::invalid_argument("build_2d_rect: Dirichlet part of the boundary must be nonempty");
    mesh.xi = std::min(hx, hy) / (2.0 * diam);
    return mesh;
}

Mesh load_triangle_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_triangle_mesh: cannot open " + path);
    std::string tag, version;
    in >> tag >> version;
    if (tag != "tri-mesh" || version != "v1")
        throw std::runtime_error("load_triangle_mesh: expected header 'tri-mesh v1'");

    std::string word;
    std::size_t nv = 0;
    in >> word >> nv;
    if (word != "vertices") throw std::runtime_error("load_triangle_mesh: expected 'vertices <n>'");
    std::vector<std::array<double, 2>> verts(nv);
    for (auto& v : verts) in >> v[0] >> v[1];

    std::size_t nt = 0;
    in >> word >> nt;
    if (word != "triangles") throw std::runtime_error("load_triangle_mesh: expected 'triangles <m>'");
    std::vector<std::array<int, 3>> tris(nt);
    for (auto& t : tris) in >> t[0] >> t[1] >> t[2];

    std::size_t nb = 0;
    in >> word >> nb;
    if (word != "boundary") throw std::runtime_error("load_triangle_mesh: expected 'boundary <b>'");
    std::map<std::pair<int, int>, EdgeKind> bkinds;
    for (std::size_t b = 0; b < nb; ++b) {
        int i, j;
        char k;
        in >> i >> j >> k;
        if (k != 'D' && k != 'N')
            throw std::runtime_error("load_triangle_mesh: boundary kind must be D or N");
        bkinds[{std::min(i, j), std::max(i, j)}] =
            k == 'D' ? EdgeKind::DirichletBoundary : EdgeKind::NeumannBoundary;
    }
    if (!in) throw std::runtime_error("load_triangle_mesh: truncated file " + path);

    Mesh mesh;
    mesh.dimension = 2;
    mesh.cells.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto& a = verts.at(tris[t][0]);
        const auto& b = verts.at(tris[t][1]);
        const auto& c = verts.at(tris[t][2]);
        const double area =
            0.5 * std::abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
        if (!(area > 0.0))
            throw std::runtime_error("load_triangle_mesh: degenerate triangle " + std::to_string(t));
        // circumcenter
        const double d = 2.0 * ((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]));
        const double na = (a[0] - c[0]) * (a[0] + c[0]) + (a[1] - c[1]) * (a[1] + c[1]);
        const double nbv = (b[0] - c[0]) * (b[0] + c[0]) + (b[1] - c[1]) * (b[1] + c[1]);
        const double ux = (na * (b[1] - c[1]) - nbv * (a[1] - c[1])) / d;
        const double uy = (nbv * (a[0] - c[0]) - na * (b[0] - c[0])) / d;
        auto& cell = mesh.cells[t];
        cell.id = static_cast<int>(t);
        cell.measure = area;
        cell.center = {ux, uy};
        cell.diameter = std::max({dist(a, b), dist(b, c), dist(c, a)});
    }

    // shared-edge table
    std::map<std::pair<int, int>, std::vector<int>> edge_tris;
    for (std::size_t t = 0; t < nt; ++t)
        for (int s = 0; s < 3; ++s) {
            int i = tris[t][s], j = tris[t][(s + 1) % 3];
            edge_tris[{std::min(i, j), std::max(i, j)}].push_back(static_cast<int>(t));
        }

    double xi = std::numeric_limits<double>::max();
    int eid = 0;
    for (const auto& [vidx, owners] : edge_tris) {
        if (owners.size() > 2)
            throw std::runtime_error("load_triangle_mesh: non-conforming mesh at edge (" +
                                     std::to_string(vidx.first) + "," + std::to_string(vidx.second) + ")");
        const auto& va = verts[vidx.first];
        const auto& vb = verts[vidx.second];
        const double m_sigma = dist(va, vb);
        const std::array<double, 2> tang = {(vb[0] - va[0]) / m_sigma, (vb[1] - va[1]) / m_sigma};
        const std::array<double, 2> mid = {0.5 * (va[0] + vb[0]), 0.5 * (va[1] + vb[1])};

        // signed distance from a cell center to the edge line, positive on the
        // side of the third vertex of that triangle
        auto center_distance = [&](int t) {
            const auto& xc = mesh.cells[t].center;
            // normal pointing into the triangle: orient by the third vertex
            int third = -1;
            for (int s = 0; s < 3; ++s) {
                int v = tris[t][s];
                if (v != vidx.first && v != vidx.second) third = v;
            }
            std::array<double, 2> nrm = {-tang[1], tang[0]};
            const double side = (verts[third][0] - va[0]) * nrm[0] + (verts[third][1] - va[1]) * nrm[1];
            const double sgn = side >= 0 ? 1.0 : -1.0;
            return sgn * ((xc[0] - va[0]) * nrm[0] + (xc[1] - va[1]) * nrm[1]);
        };

        Edge e;
        e.id = eid;
        e.measure = m_sigma;
        e.midpoint = mid;
        if (owners.size() == 2) {
            const int k = owners[0], l = owners[1];
            const auto& xk = mesh.cells[k].center;
            const auto& xl = mesh.cells[l].center;
            const double dkl = dist(xk, xl);
            if (!(dkl > 0.0))
                throw std::runtime_error(
                    "load_triangle_mesh: coincident circumcenters at triangles " +
                    std::to_string(k) + "," + std::to_string(l) + " (non-admissible)");
            const double ortho =
                std::abs((xl[0] - xk[0]) * tang[0] + (xl[1] - xk[1]) * tang[1]) / dkl;
            if (ortho > kOrthogonalityTol)
                throw std::runtime_error("load_triangle_mesh: center segment not orthogonal to edge between triangles " +
                                         std::to_string(k) + "," + std::to_string(l));
            const double dk = center_distance(k), dl = center_distance(l);
            if (!(dk > 0.0))
                throw std::runtime_error("load_triangle_mesh: non-admissible triangle " +
                                         std::to_string(k) + " (circumcenter distance d(x_K,sigma) <= 0)");
            if (!(dl > 0.0))
                throw std::runtime_error("load_triangle_mesh: non-admissible triangle " +
                                         std::to_string(l) + " (circumcenter distance d(x_K,sigma) <= 0)");
            e.kind = EdgeKind::Interior;
            e.cell_k = k;
            e.cell_l = l;
            e.d_sigma = dkl;
            xi = std::min({xi, dk / mesh.cells[k].diameter, dl / mesh.cells[l].diameter});
        } else {
            const int k = owners[0];
            auto it = bkinds.find(vidx);
            if (it == bkinds.end())
                throw std::runtime_error("load_triangle_mesh: boundary edge (" +
                                         std::to_string(vidx.first) + "," + std::to_string(vidx.second) +
                                         ") missing from boundary list");
            const double dk = center_distance(k);
            if (!(dk > 0.0))
                throw std::runtime_error("load_triangle_mesh: non-admissible triangle " +
                                         std::to_string(k) + " (circumcenter distance d(x_K,sigma) <= 0)");
            e.kind = it->second;
            e.cell_k = k;
            e.d_sigma = dk;
            xi = std::min(xi, dk / mesh.cells[k].diameter);
        }
        e.tau = e.measure / e.d_sigma;
        mesh.edges.push_back(e);
        ++eid;
    }

    finalize(mesh);
    if (mesh.dirichlet_count == 0)
        throw std::runtime_error("load_triangle_mesh: Dirichlet part of the boundary must be nonempty");
    mesh.xi = xi;
    return mesh;
}

EdgeTraceResult edge_trace(const Mesh& mesh, const AugmentedField& u, int cell, int edge) {
    const Edge& e = mesh.edges.at(edge);
    if (e.cell_k != cell && e.cell_l != cell)
        throw std::invalid_argument("edge_trace: edge " + std::to_string(edge) +
                                    " is not incident to cell " + std::to_string(cell));
    const double uk = u.cell_values.at(cell);
    double uks;
    switch (e.kind) {
        case EdgeKind::Interior:
            uks = u.cell_values.at(mesh.neighbor(cell, e));
            break;
        case EdgeKind::DirichletBoundary:
            uks = u.dirichlet_values.at(e.dirichlet_index);
            break;
        case EdgeKind::NeumannBoundary:
        default:
            uks = uk;
            break;
    }
    return {uks, uks - uk};
}

double h1_seminorm_sq(const Mesh& mesh, const AugmentedField& u) {
    if (u.cell_values.size() != mesh.cells.size() ||
        u.dirichlet_values.size() != static_cast<std::size_t>(mesh.dirichlet_count))
        throw std::invalid_argument("h1_seminorm_sq: field sizes do not match the mesh");
    double sum = 0.0;
    for (const auto& e : mesh.edges) {
        const auto tr = edge_trace(mesh, u, e.cell_k, e.id);
        sum += e.tau * tr.diff * tr.diff;
    }
    return sum;
}

namespace {

std::vector<double> cuts_in(double lo, double hi, const std::vector<double>& splits) {
    std::vector<double> pts{lo};
    for (double s : splits)
        if (s > lo + 1e-15 && s < hi - 1e-15) pts.push_back(s);
    pts.push_back(hi);
    std::sort(pts.begin(), pts.end());
    return pts;
}

}  // namespace

CellField project_cell_averages(const Mesh& mesh,
                                const std::function<double(double, double)>& f,
                                const std::vector<double>& split_x,
                                const std::vector<double>& split_y) {
    CellField out(mesh.cells.size(), 0.0);
    if (mesh.dimension == 1) {
        for (const auto& c : mesh.cells) {
            const double lo = c.center[0] - 0.5 * c.measure;
            const double hi = c.center[0] + 0.5 * c.measure;
            const auto xs = cuts_in(lo, hi, split_x);
            double acc = 0.0;
            for (std::size_t i = 0; i + 1 < xs.size(); ++i)
                acc += (xs[i + 1] - xs[i]) * f(0.5 * (xs[i] + xs[i + 1]), 0.0);
            out[c.id] = acc / c.measure;
        }
        return out;
    }
    for (const auto& c : mesh.cells) {
        // rectangular cells: exact sub-cell split; triangles: 3-midpoint rule
        bool is_rect = true;
        // builders produce axis-aligned rectangles with measure = hx*hy; a
        // triangle import is detected by the cell_edges count == 3
        if (mesh.cell_edges[c.id].size() == 3) is_rect = false;
        if (is_rect) {
            // recover half-extents from incident edges
            double hx = 0.0, hy = 0.0;
            for (int eidx : mesh.cell_edges[c.id]) {
                const auto& e = mesh.edges[eidx];
                const double ddx = std::abs(e.midpoint[0] - c.center[0]);
                const double ddy = std::abs(e.midpoint[1] - c.center[1]);
                hx = std::max(hx, ddx);
                hy = std::max(hy, ddy);
            }
            const auto xs = cuts_in(c.center[0] - hx, c.center[0] + hx, split_x);
            const auto ys = cuts_in(c.center[1] - hy, c.center[1] + hy, split_y);
            double acc = 0.0;
            for (std::size_t i = 0; i + 1 < xs.size(); ++i)
                for (std::size_t j = 0; j + 1 < ys.size(); ++j)
                    acc += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]) *
                           f(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
            out[c.id] = acc / c.measure;
        } else {
            // edge-midpoint quadrature, exact for quadratics on triangles
            double acc = 0.0;
            for (int eidx : mesh.cell_edges[c.id]) {
                const auto& e = mesh.edges[eidx];
                acc += f(e.midpoint[0], e.midpoint[1]);
            }
            out[c.id] = acc / 3.0;
        }
    }
    return out;
}

std::vector<int> nesting_map(const Mesh& coarse, const Mesh& fine) {
    if (coarse.dimension != fine.dimension)
        throw std::invalid_argument("nesting_map: dimension mismatch");
    std::vector<int> map(fine.cells.size(), -1);
    if (coarse.dimension == 1) {
        // uniform-like lookup by sorted coarse intervals
        std::vector<std::pair<double, int>> lows;
        lows.reserve(coarse.cells.size());
        for (const auto& c : coarse.cells)
            lows.emplace_back(c.center[0] - 0.5 * c.measure, c.id);
        std::sort(lows.begin(), lows.end());
        for (const auto& cf : fine.cells) {
            const double x = cf.center[0];
            auto it = std::upper_bound(lows.begin(), lows.end(), std::make_pair(x, INT_MAX));
            if (it == lows.begin()) throw std::invalid_argument("nesting_map: meshes are not nested");
            const int cc = std::prev(it)->second;
            const auto& c = coarse.cells[cc];
            if (x < c.center[0] - 0.5 * c.measure - 1e-12 || x > c.center[0] + 0.5 * c.measure + 1e-12)
                throw std::invalid_argument("nesting_map: meshes are not nested");
            map[cf.id] = cc;
        }
    } else {
        for (const auto& cf : fine.cells) {
            int found = -1;
            for (const auto& cc : coarse.cells) {
                double hx = 0.0, hy = 0.0;
                for (int eidx : coarse.cell_edges[cc.id]) {
                    const auto& e = coarse.edges[eidx];
                    hx = std::max(hx, std::abs(e.midpoint[0] - cc.center[0]));
                    hy = std::max(hy, std::abs(e.midpoint[1] - cc.center[1]));
                }
                if (std::abs(cf.center[0] - cc.center[0]) <= hx + 1e-12 &&
                    std::abs(cf.center[1] - cc.center[1]) <= hy + 1e-12) {
                    found = cc.id;
                    break;
                }
            }
            if (found < 0) throw std::invalid_argument("nesting_map: meshes are not nested");
            map[cf.id] = found;
        }
    }
    return map;
}

CellField project_fine_to_coarse(const Mesh& coarse, const Mesh& fine,
                                 const CellField& fine_values) {
    if (fine_values.size() != fine.cells.size())
        throw std::invalid_argument("project_fine_to_coarse: field size mismatch");
    const auto map = nesting_map(coarse, fine);
    CellField out(coarse.cells.size(), 0.0);
    std::vector<double> mass(coarse.cells.size(), 0.0);
    for (const auto& cf : fine.cells) {
        out[map[cf.id]] += cf.measure * fine_values[cf.id];
        mass[map[cf.id]] += cf.measure;
    }
    for (const auto& cc : coarse.cells) {
        if (std::abs(mass[cc.id] - cc.measure) > 1e-10 * cc.measure)
            throw std::invalid_argument("project_fine_to_coarse: meshes are not nested (measure mismatch)");
        out[cc.id] /= mass[cc.id];
    }
    return out;
}

}  // namespace driftfv
