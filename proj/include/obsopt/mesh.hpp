#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace obsopt {

/// Structured P1 triangulation of the unit square.
///
/// Nodes are ordered lexicographically by (row, col), node id = row*(n_sub+1)+col,
/// coordinates (x, y) = (col*h, row*h). Each grid cell is split along the
/// diagonal from its lower-left to its upper-right corner, giving two positively
/// oriented triangles of area h^2/2.
struct Mesh {
    int n_sub = 0;
    double h = 0.0;
    std::vector<Eigen::Vector2d> nodes;
    std::vector<std::array<int, 3>> triangles;
    std::vector<bool> boundary_mask;

    // interior numbering: lexicographic over interior grid points
    std::vector<int> interior_to_node;       // interior index -> node id
    std::vector<int> node_to_interior;       // node id -> interior index or -1

    int n_nodes() const { return static_cast<int>(nodes.size()); }
    int n_interior() const { return static_cast<int>(interior_to_node.size()); }
};

inline Mesh build_structured_mesh(int n_sub) {
    if (n_sub < 2)
        throw std::invalid_argument("build_structured_mesh: n_sub must be >= 2");

    Mesh m;
    m.n_sub = n_sub;
    m.h = 1.0 / n_sub;
    const int np = n_sub + 1;
    m.nodes.reserve(static_cast<std::size_t>(np) * np);
    m.boundary_mask.reserve(m.nodes.capacity());
    for (int row = 0; row < np; ++row) {
        for (int col = 0; col < np; ++col) {
            m.nodes.emplace_back(col * m.h, row * m.h);
            m.boundary_mask.push_back(row == 0 || row == n_sub || col == 0 || col == n_sub);
        }
    }

    auto id = [np](int row, int col) { return row * np + col; };
    m.triangles.reserve(static_cast<std::size_t>(2) * n_sub * n_sub);
    for (int row = 0; row < n_sub; ++row) {
        for (int col = 0; col < n_sub; ++col) {
            // lower triangle, counterclockwise
            m.triangles.push_back({id(row, col), id(row, col + 1), id(row + 1, col + 1)});
            // upper triangle
            m.triangles.push_back({id(row, col), id(row + 1, col + 1), id(row + 1, col)});
        }
    }

    m.node_to_interior.assign(m.nodes.size(), -1);
    for (int row = 1; row < n_sub; ++row) {
        for (int col = 1; col < n_sub; ++col) {
            m.node_to_interior[id(row, col)] = static_cast<int>(m.interior_to_node.size());
            m.interior_to_node.push_back(id(row, col));
        }
    }
    return m;
}

/// Signed double-area of a triangle; positive for counterclockwise orientation.
inline double triangle_double_area(const Mesh& m, const std::array<int, 3>& t) {
    const auto& a = m.nodes[t[0]];
    const auto& b = m.nodes[t[1]];
    const auto& c = m.nodes[t[2]];
    return (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
}

} // namespace obsopt
