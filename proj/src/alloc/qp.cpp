#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rlalloc/allocators.hpp"
#include "rlalloc/errors.hpp"

namespace rlalloc::alloc {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const QPProblem& p) {
    const auto n = p.q.size();
    if (n == 0) throw ArgumentError("QP has no variables");
    if (p.P.rows() != n || p.P.cols() != n) throw ArgumentError("QP: P must be n x n");
    const double scale = std::max(1.0, p.P.cwiseAbs().maxCoeff());
    if ((p.P - p.P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw ArgumentError("QP: P is not symmetric");
    if (p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != n))
        throw ArgumentError("QP: equality constraint dimensions are inconsistent");
    if (p.G.rows() != p.h.size() || (p.G.rows() > 0 && p.G.cols() != n))
        throw ArgumentError("QP: inequality constraint dimensions are inconsistent");
    if (!p.P.allFinite() || !p.q.allFinite() || !p.A.allFinite() || !p.b.allFinite() || !p.G.allFinite() ||
        !p.h.allFinite())
        throw ArgumentError("QP: non-finite problem data");
}

// Working form: constraints c_j·x ≥ d_j (inequalities) and c_j·x = d_j
// (equalities), stationarity P x + q = N u over the active normals N.
class DualActiveSet {
public:
    explicit DualActiveSet(const QPProblem& p) : p_(p), n_(p.q.size()), me_(p.A.rows()), mi_(p.G.rows()) {
        H_ = p.P;
        Eigen::LLT<MatrixXd> llt(H_);
        if (llt.info() != Eigen::Success) {
            // Semi-definite objective: a tiny ridge keeps every KKT system regular.
            H_ += 1e-12 * std::max(1.0, p.P.diagonal().cwiseAbs().maxCoeff()) * MatrixXd::Identity(n_, n_);
        }
        if (me_ > 0) {
            Eigen::FullPivLU<MatrixXd> lu(p.A);
            if (lu.rank() < me_) throw ArgumentError("QP: equality constraints are linearly dependent");
        }
    }

    QPSolution run(std::size_t max_iterations) {
        for (Eigen::Index j = 0; j < me_; ++j) active_.push_back(j);
        {
            VectorXd u;
            solve(-p_.q, equality_rhs(), x_, u);
            u_.assign(u.data(), u.data() + u.size());
        }
        std::size_t iterations = 0;
        for (;;) {
            const Eigen::Index entering = most_violated();
            if (entering < 0) break;
            double u_p = 0.0;
            const VectorXd np = normal(entering);
            const double d_p = rhs(entering);
            for (;;) {
                if (++iterations > max_iterations) {
                    throw ConvergenceError("QP active-set iteration cap reached", d_p - np.dot(x_));
                }
                VectorXd z, minus_r;
                solve(np, VectorXd::Zero(static_cast<Eigen::Index>(active_.size())), z, minus_r);
                const VectorXd r = -minus_r;

                double t1 = kInf;
                std::size_t drop = 0;
                for (std::size_t k = 0; k < active_.size(); ++k) {
                    if (active_[k] < me_ || r[static_cast<Eigen::Index>(k)] <= 0.0) continue;
                    const double ratio = u_[k] / r[static_cast<Eigen::Index>(k)];
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = k;
                    }
                }
                const double zn = z.dot(np);
                const double zscale = std::max(1.0, np.norm());
                const double t2 = z.norm() <= 1e-14 * zscale || zn <= 0.0 ? kInf : (d_p - np.dot(x_)) / zn;
                const double t = std::min(t1, t2);
                if (t == kInf) throw InfeasibleError("QP is infeasible: constraint " + describe(entering) +
                                                     " cannot be satisfied with the active set");
                if (t2 < kInf) x_ += t * z;
                for (std::size_t k = 0; k < active_.size(); ++k) u_[k] -= t * r[static_cast<Eigen::Index>(k)];
                u_p += t;
                if (t2 <= t1) {
                    active_.push_back(entering);
                    u_.push_back(u_p);
                    break;
                }
                active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(drop));
                u_.erase(u_.begin() + static_cast<std::ptrdiff_t>(drop));
            }
        }
        polish();

        QPSolution out;
        out.x = x_;
        out.eq_multipliers = VectorXd::Zero(me_);
        out.ineq_multipliers = VectorXd::Zero(mi_);
        for (std::size_t k = 0; k < active_.size(); ++k) {
            if (active_[k] < me_) out.eq_multipliers[active_[k]] = u_[k];
            else out.ineq_multipliers[active_[k] - me_] = std::max(0.0, u_[k]);
        }
        out.iterations = iterations;
        out.objective = 0.5 * x_.dot(p_.P * x_) + p_.q.dot(x_);
        return out;
    }

private:
    VectorXd normal(Eigen::Index j) const {
        return j < me_ ? VectorXd(p_.A.row(j).transpose()) : VectorXd(-p_.G.row(j - me_).transpose());
    }
    double rhs(Eigen::Index j) const { return j < me_ ? p_.b[j] : -p_.h[j - me_]; }

    std::string describe(Eigen::Index j) const {
        return j < me_ ? "equality " + std::to_string(j) : "inequality " + std::to_string(j - me_);
    }

    VectorXd equality_rhs() const {
        VectorXd v(static_cast<Eigen::Index>(active_.size()));
        for (std::size_t k = 0; k < active_.size(); ++k) v[static_cast<Eigen::Index>(k)] = rhs(active_[k]);
        return v;
    }

    // Solves H x − N u = top, Nᵀx = bottom.
    void solve(const VectorXd& top, const VectorXd& bottom, VectorXd& x, VectorXd& u) const {
        const auto m = static_cast<Eigen::Index>(active_.size());
        MatrixXd K = MatrixXd::Zero(n_ + m, n_ + m);
        K.topLeftCorner(n_, n_) = H_;
        for (Eigen::Index k = 0; k < m; ++k) {
            const VectorXd c = normal(active_[static_cast<std::size_t>(k)]);
            K.block(0, n_ + k, n_, 1) = -c;
            K.block(n_ + k, 0, 1, n_) = c.transpose();
        }
        VectorXd rhs_all(n_ + m);
        rhs_all << top, bottom;
        const VectorXd sol = K.fullPivLu().solve(rhs_all);
        x = sol.head(n_);
        u = sol.tail(m);
    }

    Eigen::Index most_violated() const {
        Eigen::Index best = -1;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < mi_; ++i) {
            const Eigen::Index j = me_ + i;
            if (std::find(active_.begin(), active_.end(), j) != active_.end()) continue;
            const VectorXd c = normal(j);
            const double slack = c.dot(x_) - rhs(j);
            const double tol = 1e-12 * (1.0 + std::abs(rhs(j)) + c.cwiseAbs().dot(x_.cwiseAbs()));
            if (slack < -tol && slack < worst) {
                worst = slack;
                best = j;
            }
        }
        return best;
    }

    // Re-solves the final active set directly for full accuracy.
    void polish() {
        VectorXd x, u;
        solve(-p_.q, equality_rhs(), x, u);
        if (!x.allFinite() || !u.allFinite()) return;
        x_ = x;
        u_.assign(u.data(), u.data() + u.size());
    }

    const QPProblem& p_;
    Eigen::Index n_, me_, mi_;
    MatrixXd H_;
    VectorXd x_;
    std::vector<Eigen::Index> active_;
    std::vector<double> u_;
};

}  // namespace

QPSolution qp_solve(const QPProblem& problem, std::size_t max_iterations) {
    validate(problem);
    return DualActiveSet(problem).run(max_iterations);
}

KktResiduals kkt_residuals(const QPProblem& p, const QPSolution& s) {
    KktResiduals r;
    const VectorXd& x = s.x;
    if (p.A.rows() > 0) r.primal = (p.A * x - p.b).cwiseAbs().maxCoeff();
    VectorXd grad = p.P * x + p.q;
    if (p.A.rows() > 0) grad -= p.A.transpose() * s.eq_multipliers;
    if (p.G.rows() > 0) {
        const VectorXd slack = p.h - p.G * x;
        r.primal = std::max(r.primal, std::max(0.0, -slack.minCoeff()));
        grad += p.G.transpose() * s.ineq_multipliers;
        r.dual = std::max(0.0, -s.ineq_multipliers.minCoeff());
        r.complementarity = s.ineq_multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    r.stationarity = grad.cwiseAbs().maxCoeff();
    return r;
}

}  // namespace rlalloc::alloc
