#include "restart/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "restart/errors.hpp"

namespace restart {

double gaussian_tail_q(double a) {
    return 0.5 * std::erfc(a / std::numbers::sqrt2);
}

double contraction_factor_lambda(double b, double t_min, double t_max) {
    if (!(b >= 0.0)) throw DomainError("contraction factor requires b >= 0");
    if (!(t_min > 0.0) || !(t_max > t_min))
        throw DomainError("contraction factor requires 0 < t_min < t_max");
    double sigma = std::sqrt(t_max * t_max - t_min * t_min);
    return 2.0 * gaussian_tail_q(b / (2.0 * sigma));
}

// Shortest-augmenting-path assignment (Jonker-Volgenant as described by
// Crouse 2016).  Dual potentials u, v keep reduced costs nonnegative; each
// outer pass grows the matching by one row along a Dijkstra-style path.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ConfigError("assignment needs a square cost matrix");
    if (n == 0) throw ConfigError("assignment needs a nonempty cost matrix");
    if (!cost.allFinite()) throw DomainError("assignment costs must be finite");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n, 0.0);
    std::vector<int> path(n, -1), col4row(n, -1), row4col(n, -1), remaining(n, 0);
    std::vector<char> sr(n, 0), sc(n, 0);

    for (int cur_row = 0; cur_row < n; ++cur_row) {
        double min_val = 0.0;
        int i = cur_row;
        int num_remaining = n;
        for (int it = 0; it < n; ++it) remaining[it] = it;
        std::fill(sr.begin(), sr.end(), 0);
        std::fill(sc.begin(), sc.end(), 0);
        std::fill(shortest.begin(), shortest.end(), inf);

        int sink = -1;
        while (sink == -1) {
            sr[i] = 1;
            int index = -1;
            double lowest = inf;
            for (int it = 0; it < num_remaining; ++it) {
                int j = remaining[it];
                double r = min_val + cost(i, j) - u[i] - v[j];
                if (r < shortest[j]) {
                    path[j] = i;
                    shortest[j] = r;
                }
                if (shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == -1)) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if (!(min_val < inf)) throw DomainError("assignment is infeasible");
            int j = remaining[index];
            if (row4col[j] == -1) sink = j;
            else i = row4col[j];
            sc[j] = 1;
            remaining[index] = remaining[--num_remaining];
        }

        u[cur_row] += min_val;
        for (int k = 0; k < n; ++k) {
            if (sr[k] && k != cur_row) u[k] += min_val - shortest[col4row[k]];
        }
        for (int j = 0; j < n; ++j) {
            if (sc[j]) v[j] -= min_val - shortest[j];
        }

        int j = sink;
        while (true) {
            int r = path[j];
            row4col[j] = r;
            std::swap(col4row[r], j);
            if (r == cur_row) break;
        }
    }
    return col4row;
}

double w1_assignment(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) throw ConfigError("w1_assignment needs equal point counts");
    if (a.cols() != b.cols()) throw ConfigError("w1_assignment needs equal dimensions");
    const int n = static_cast<int>(a.rows());
    if (n == 0) throw ConfigError("w1_assignment needs nonempty point sets");

    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
        cost.row(i) = (b.rowwise() - a.row(i)).rowwise().norm().transpose();

    std::vector<int> match = min_cost_assignment(cost);
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, match[i]);
    return total / static_cast<double>(n);
}

CouplingOutcome maximal_coupling_step(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                      double sigma, RngStream& rng) {
    if (x.size() != y.size()) throw ConfigError("coupling endpoints must share a dimension");
    if (!(sigma > 0.0)) throw DomainError("coupling requires sigma > 0");

    CouplingOutcome out;
    const int d = static_cast<int>(x.size());
    Eigen::VectorXd xi = rng.normal_vec(d);

    double r = (x - y).norm();
    if (r == 0.0) {
        out.x_next = x + sigma * xi;
        out.y_next = out.x_next;
        out.collided = true;
        return out;
    }

    Eigen::VectorXd e = (x - y) / r;
    double a = e.dot(xi);
    double delta = r / sigma;
    out.x_next = x + sigma * xi;

    // Accept with probability phi(a + delta) / phi(a); over the marginal of a
    // this integrates to the overlap 2 Q(delta / 2) of the two kernels.
    double log_accept = -delta * (a + 0.5 * delta);
    if (std::log(1.0 - rng.uniform()) <= log_accept) {
        out.y_next = out.x_next;
        out.collided = true;
    } else {
        out.y_next = y + sigma * (xi - 2.0 * a * e);
        out.collided = false;
    }
    return out;
}

} // namespace restart
