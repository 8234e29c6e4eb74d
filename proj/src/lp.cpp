#include "calsens/lp.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <optional>

namespace calsens {

const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::Optimal: return "optimal";
        case LpStatus::Infeasible: return "infeasible";
        case LpStatus::Unbounded: return "unbounded";
        case LpStatus::IterationLimit: return "iteration limit";
        case LpStatus::Singular: return "singular basis";
    }
    return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class State : unsigned char { Basic, AtLower, AtUpper };

class BoundedSimplex {
public:
    BoundedSimplex(const LpProblem& p, const LpOptions& o) : p_(p), opt_(o) {
        rows_ = p.a.rows();
        cols_ = p.a.cols();
        total_ = cols_ + rows_;
        cost_scale_ = std::max(1.0, p.cost.cwiseAbs().maxCoeff());
        b_scale_ = std::max(1.0, rows_ > 0 ? p.b.cwiseAbs().maxCoeff() : 0.0);
    }

    LpSolution run(const std::vector<char>* at_upper) {
        initialise(at_upper);
        phase_ = 1;
        return finish(primal_loop());
    }

    // Empty result: the basis is unusable and the caller should start cold.
    std::optional<LpSolution> run_from_basis(const LpBasis& basis) {
        if (!setup_basis(basis)) return std::nullopt;
        phase_ = 2;
        if (dual_feasible()) {
            const LpStatus st = dual_loop();
            if (st == LpStatus::Infeasible) return finish(st);
            if (st != LpStatus::Optimal || !refactor()) return std::nullopt;
        } else if (!primal_feasible()) {
            return std::nullopt;
        }
        const LpStatus st = primal_loop();
        if (st == LpStatus::Singular || st == LpStatus::IterationLimit) return std::nullopt;
        return finish(st);
    }

    int iterations() const { return iterations_; }

private:
    int limit() const {
        return opt_.max_iterations > 0 ? opt_.max_iterations : static_cast<int>(20 * (rows_ + cols_) + 1000);
    }

    LpStatus primal_loop() {
        while (iterations_ < limit()) {
            const StepResult r = step();
            if (r == StepResult::Singular) return LpStatus::Singular;
            if (r == StepResult::Unbounded) return phase_ == 1 ? LpStatus::Infeasible : LpStatus::Unbounded;
            if (r == StepResult::Optimal) {
                if (!refactor()) return LpStatus::Singular;
                if (phase_ == 1) {
                    double infeas = 0.0;
                    for (Eigen::Index k = 0; k < rows_; ++k) infeas += x_[cols_ + k];
                    if (infeas > opt_.feasibility_tol * b_scale_ * std::max<double>(1.0, rows_))
                        return LpStatus::Infeasible;
                    enter_phase_two();
                    continue;
                }
                // Verify optimality after refactorization; resume if drift created a candidate.
                if (price() >= 0) continue;
                return LpStatus::Optimal;
            }
        }
        return LpStatus::IterationLimit;
    }

    LpSolution finish(LpStatus status) {
        LpSolution sol;
        sol.status = status;
        sol.iterations = iterations_;
        sol.x = x_.head(cols_);
        if (status == LpStatus::Optimal) {
            compute_duals();
            sol.row_duals = y_;
            sol.reduced_costs = p_.cost - p_.a.transpose() * y_;
            sol.objective = p_.cost.dot(sol.x);
            LpBasis b;
            b.basic = basis_;
            b.at_upper.resize(static_cast<std::size_t>(cols_));
            for (Eigen::Index j = 0; j < cols_; ++j)
                b.at_upper[static_cast<std::size_t>(j)] = state_[static_cast<std::size_t>(j)] == State::AtUpper;
            sol.basis = std::move(b);
        }
        return sol;
    }

    bool setup_basis(const LpBasis& basis) {
        if (static_cast<Eigen::Index>(basis.basic.size()) != rows_) return false;
        lo_.resize(total_);
        up_.resize(total_);
        x_.resize(total_);
        art_sign_ = Vector::Ones(rows_);
        state_.assign(static_cast<std::size_t>(total_), State::AtLower);
        for (Eigen::Index j = 0; j < cols_; ++j) {
            lo_[j] = p_.lower[j];
            up_[j] = p_.upper[j];
            if (!std::isfinite(lo_[j])) throw InputError("solve_lp: lower bounds must be finite");
            if (up_[j] < lo_[j]) throw InputError("solve_lp: upper bound below lower bound");
            const bool hi = j < static_cast<Eigen::Index>(basis.at_upper.size()) &&
                            basis.at_upper[static_cast<std::size_t>(j)] && std::isfinite(up_[j]);
            state_[static_cast<std::size_t>(j)] = hi ? State::AtUpper : State::AtLower;
            x_[j] = hi ? up_[j] : lo_[j];
        }
        for (Eigen::Index k = 0; k < rows_; ++k) {
            lo_[cols_ + k] = up_[cols_ + k] = x_[cols_ + k] = 0.0;
        }
        basis_ = basis.basic;
        fresh_ = false;
        for (Eigen::Index j : basis_) {
            if (j < 0 || j >= total_ || state_[static_cast<std::size_t>(j)] == State::Basic) return false;
            state_[static_cast<std::size_t>(j)] = State::Basic;
        }
        return refactor();
    }

    Vector reduced_costs() {
        compute_duals();
        Vector d = p_.cost;
        d.noalias() -= p_.a.transpose() * y_;
        return d;
    }

    bool dual_feasible() {
        const Vector d = reduced_costs();
        const double tol = opt_.optimality_tol * cost_scale_;
        for (Eigen::Index j = 0; j < cols_; ++j) {
            const State s = state_[static_cast<std::size_t>(j)];
            if (s == State::Basic || up_[j] - lo_[j] <= 0.0) continue;
            if (s == State::AtLower && d[j] < -tol) return false;
            if (s == State::AtUpper && d[j] > tol) return false;
        }
        return true;
    }

    bool primal_feasible() const {
        const double ftol = opt_.feasibility_tol * b_scale_;
        for (Eigen::Index j : basis_)
            if (x_[j] < lo_[j] - ftol || x_[j] > up_[j] + ftol) return false;
        return true;
    }

    // Bounded dual simplex with a bound-flipping ratio test. Returns Optimal once
    // the basis is primal feasible, Infeasible when the dual ray proves it.
    LpStatus dual_loop() {
        const double ftol = opt_.feasibility_tol * b_scale_;
        const double dtol = opt_.optimality_tol * cost_scale_;
        const double ptol = opt_.pivot_tol;
        struct Cand {
            Eigen::Index j;
            double t;
            double a;
        };
        std::vector<Cand> cands;
        while (iterations_ < limit()) {
            // Leaving row: largest infeasibility scaled by the row norm of B^{-1}.
            const Vector row_norm = binv_.rowwise().squaredNorm();
            Eigen::Index r = -1;
            double best = 0.0;
            for (Eigen::Index i = 0; i < rows_; ++i) {
                const Eigen::Index j = basis_[static_cast<std::size_t>(i)];
                double inf = 0.0;
                if (x_[j] < lo_[j] - ftol) inf = lo_[j] - x_[j];
                else if (x_[j] > up_[j] + ftol) inf = x_[j] - up_[j];
                if (inf <= 0.0) continue;
                const double score = inf * inf / std::max(row_norm[i], 1e-300);
                if (score > best) {
                    best = score;
                    r = i;
                }
            }
            if (r < 0) return LpStatus::Optimal;
            ++iterations_;
            fresh_ = false;

            const Eigen::Index jr = basis_[static_cast<std::size_t>(r)];
            const bool below = x_[jr] < lo_[jr];
            const double target = below ? lo_[jr] : up_[jr];
            const double sgn = below ? -1.0 : 1.0;
            const Vector arow = p_.a.transpose() * binv_.row(r).transpose();
            const Vector d = reduced_costs();

            cands.clear();
            for (Eigen::Index j = 0; j < cols_; ++j) {
                const State s = state_[static_cast<std::size_t>(j)];
                if (s == State::Basic || up_[j] - lo_[j] <= 0.0) continue;
                const double a = sgn * arow[j];
                if (s == State::AtLower && a > ptol) cands.push_back({j, std::max(d[j], 0.0) / a, a});
                else if (s == State::AtUpper && a < -ptol) cands.push_back({j, std::max(-d[j], 0.0) / -a, a});
            }
            if (cands.empty()) return LpStatus::Infeasible;
            // Breakpoints in increasing order, popped lazily from a min-heap.
            auto later = [](const Cand& u, const Cand& v) { return u.t > v.t; };
            std::make_heap(cands.begin(), cands.end(), later);
            auto heap_end = cands.end();

            // Pass breakpoints while the dual objective keeps improving; passed columns flip bounds.
            // Popped breakpoints collect at the back of the vector in increasing order.
            double slope = std::abs(x_[jr] - target);
            std::size_t k = 0;
            bool stopped = false;
            while (heap_end != cands.begin()) {
                std::pop_heap(cands.begin(), heap_end, later);
                --heap_end;
                const Cand& c = *heap_end;
                const double range = up_[c.j] - lo_[c.j];
                if (!std::isfinite(range) || slope - std::abs(c.a) * range <= 0.0) {
                    stopped = true;
                    break;
                }
                slope -= std::abs(c.a) * range;
                ++k;
            }
            if (!stopped) return LpStatus::Infeasible;
            // Reorder: flipped breakpoints first, then the stopping one, then the unsorted rest.
            std::reverse(heap_end, cands.end());
            std::rotate(cands.begin(), heap_end, cands.end());

            // Harris pass among the remaining breakpoints: largest pivot within the relaxed ratio.
            double bound = kInf;
            for (std::size_t i = k; i < cands.size(); ++i)
                bound = std::min(bound, (std::abs(d[cands[i].j]) + dtol) / std::abs(cands[i].a));
            std::size_t pick = k;
            for (std::size_t i = k; i < cands.size(); ++i)
                if (cands[i].t <= bound && std::abs(cands[i].a) > std::abs(cands[pick].a)) pick = i;
            const Eigen::Index q = cands[pick].j;

            if (k > 0) {
                Vector db = Vector::Zero(rows_);
                for (std::size_t i = 0; i < k; ++i) {
                    const Eigen::Index j = cands[i].j;
                    auto& s = state_[static_cast<std::size_t>(j)];
                    const double next = s == State::AtLower ? up_[j] : lo_[j];
                    db.noalias() += p_.a.col(j) * (next - x_[j]);
                    x_[j] = next;
                    s = s == State::AtLower ? State::AtUpper : State::AtLower;
                }
                const Vector dxb = binv_ * db;
                for (Eigen::Index i = 0; i < rows_; ++i) x_[basis_[static_cast<std::size_t>(i)]] -= dxb[i];
            }

            column(q, col_);
            const Vector alpha = binv_ * col_;
            if (std::abs(alpha[r]) <= ptol) {
                if (!refactor()) return LpStatus::Singular;
                continue;
            }
            const double theta = (x_[jr] - target) / alpha[r];
            x_[q] += theta;
            for (Eigen::Index i = 0; i < rows_; ++i) x_[basis_[static_cast<std::size_t>(i)]] -= theta * alpha[i];
            x_[jr] = target;
            state_[static_cast<std::size_t>(jr)] = below ? State::AtLower : State::AtUpper;
            state_[static_cast<std::size_t>(q)] = State::Basic;
            basis_[static_cast<std::size_t>(r)] = q;

            const Eigen::RowVectorXd pivot_row = binv_.row(r) / alpha[r];
            binv_.noalias() -= alpha * pivot_row;
            binv_.row(r) = pivot_row;
            if (++since_refactor_ >= opt_.refactor_interval) {
                if (!refactor()) return LpStatus::Singular;
            }
        }
        return LpStatus::IterationLimit;
    }

    enum class StepResult { Continue, Optimal, Unbounded, Singular };

    double lower(Eigen::Index j) const { return lo_[j]; }
    double upper(Eigen::Index j) const { return up_[j]; }
    double phase_cost(Eigen::Index j) const {
        if (phase_ == 1) return j >= cols_ ? 1.0 : 0.0;
        return j >= cols_ ? 0.0 : p_.cost[j];
    }

    void column(Eigen::Index j, Vector& out) const {
        if (j < cols_) {
            out = p_.a.col(j);
        } else {
            out.setZero(rows_);
            out[j - cols_] = art_sign_[j - cols_];
        }
    }

    void initialise(const std::vector<char>* at_upper) {
        lo_.resize(total_);
        up_.resize(total_);
        x_.resize(total_);
        state_.assign(static_cast<std::size_t>(total_), State::AtLower);
        for (Eigen::Index j = 0; j < cols_; ++j) {
            lo_[j] = p_.lower[j];
            up_[j] = p_.upper[j];
            if (!std::isfinite(lo_[j])) throw InputError("solve_lp: lower bounds must be finite");
            if (up_[j] < lo_[j]) throw InputError("solve_lp: upper bound below lower bound");
            const bool hi = at_upper && j < static_cast<Eigen::Index>(at_upper->size()) &&
                            (*at_upper)[static_cast<std::size_t>(j)] && std::isfinite(up_[j]);
            state_[static_cast<std::size_t>(j)] = hi ? State::AtUpper : State::AtLower;
            x_[j] = hi ? up_[j] : lo_[j];
        }
        Vector r = p_.b - p_.a * x_.head(cols_);
        art_sign_.resize(rows_);
        basis_.resize(static_cast<std::size_t>(rows_));
        binv_ = Matrix::Zero(rows_, rows_);
        for (Eigen::Index k = 0; k < rows_; ++k) {
            const Eigen::Index j = cols_ + k;
            art_sign_[k] = r[k] >= 0.0 ? 1.0 : -1.0;
            lo_[j] = 0.0;
            up_[j] = kInf;
            x_[j] = std::abs(r[k]);
            state_[static_cast<std::size_t>(j)] = State::Basic;
            basis_[static_cast<std::size_t>(k)] = j;
            binv_(k, k) = art_sign_[k];
        }
    }

    void enter_phase_two() {
        phase_ = 2;
        for (Eigen::Index k = 0; k < rows_; ++k) {
            const Eigen::Index j = cols_ + k;
            up_[j] = 0.0;
            if (state_[static_cast<std::size_t>(j)] != State::Basic) {
                state_[static_cast<std::size_t>(j)] = State::AtLower;
                x_[j] = 0.0;
            }
        }
        degenerate_run_ = 0;
        bland_ = false;
    }

    void compute_duals() {
        Vector cb(rows_);
        for (Eigen::Index k = 0; k < rows_; ++k) cb[k] = phase_cost(basis_[static_cast<std::size_t>(k)]);
        y_ = binv_.transpose() * cb;
    }

    // Returns the entering index or -1 when the current basis is optimal.
    Eigen::Index price() {
        compute_duals();
        const double tol = opt_.optimality_tol * (phase_ == 1 ? 1.0 : cost_scale_);
        Vector d_struct(cols_);
        if (phase_ == 1) {
            d_struct.noalias() = -(p_.a.transpose() * y_);
        } else {
            d_struct = p_.cost;
            d_struct.noalias() -= p_.a.transpose() * y_;
        }
        Eigen::Index best = -1;
        double best_score = 0.0;
        auto consider = [&](Eigen::Index j, double d) {
            const State s = state_[static_cast<std::size_t>(j)];
            if (s == State::Basic) return;
            if (up_[j] - lo_[j] <= 0.0) return;
            double score = 0.0;
            if (s == State::AtLower && d < -tol) score = -d;
            else if (s == State::AtUpper && d > tol) score = d;
            else return;
            if (bland_) {
                if (best < 0) best = j;
                return;
            }
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        };
        for (Eigen::Index j = 0; j < cols_; ++j) {
            consider(j, d_struct[j]);
            if (bland_ && best >= 0) break;
        }
        if (!(bland_ && best >= 0)) {
            for (Eigen::Index k = 0; k < rows_; ++k) {
                const Eigen::Index j = cols_ + k;
                consider(j, phase_cost(j) - art_sign_[k] * y_[k]);
                if (bland_ && best >= 0) break;
            }
        }
        entering_d_ = best >= 0 ? (best < cols_ ? d_struct[best] : phase_cost(best) - art_sign_[best - cols_] * y_[best - cols_]) : 0.0;
        return best;
    }

    StepResult step() {
        const Eigen::Index q = price();
        if (q < 0) return StepResult::Optimal;
        ++iterations_;
        fresh_ = false;

        column(q, col_);
        const Vector alpha = binv_ * col_;
        const double dir = state_[static_cast<std::size_t>(q)] == State::AtLower ? 1.0 : -1.0;
        const double ptol = opt_.pivot_tol;
        const double ftol = opt_.feasibility_tol * b_scale_;

        // Harris pass 1: largest step allowed with bounds relaxed by ftol.
        double theta_relaxed = kInf;
        for (Eigen::Index i = 0; i < rows_; ++i) {
            const double delta = -dir * alpha[i];
            const Eigen::Index j = basis_[static_cast<std::size_t>(i)];
            if (delta < -ptol) {
                theta_relaxed = std::min(theta_relaxed, (x_[j] - lo_[j] + ftol) / (-delta));
            } else if (delta > ptol && std::isfinite(up_[j])) {
                theta_relaxed = std::min(theta_relaxed, (up_[j] - x_[j] + ftol) / delta);
            }
        }
        // Pass 2: among rows blocking within theta_relaxed, the largest pivot.
        Eigen::Index leave = -1;
        double theta = kInf;
        double best_pivot = 0.0;
        if (std::isfinite(theta_relaxed)) {
            for (Eigen::Index i = 0; i < rows_; ++i) {
                const double delta = -dir * alpha[i];
                const Eigen::Index j = basis_[static_cast<std::size_t>(i)];
                double ratio;
                if (delta < -ptol) ratio = (x_[j] - lo_[j]) / (-delta);
                else if (delta > ptol && std::isfinite(up_[j])) ratio = (up_[j] - x_[j]) / delta;
                else continue;
                if (ratio <= theta_relaxed) {
                    const bool better = bland_ ? (leave < 0 || j < basis_[static_cast<std::size_t>(leave)])
                                               : std::abs(alpha[i]) > best_pivot;
                    if (better) {
                        best_pivot = std::abs(alpha[i]);
                        leave = i;
                        theta = std::max(ratio, 0.0);
                    }
                }
            }
        }
        const double flip = up_[q] - lo_[q];
        if (leave < 0 && !std::isfinite(flip)) return StepResult::Unbounded;

        const bool bound_flip = std::isfinite(flip) && (leave < 0 || flip <= theta);
        if (bound_flip) theta = flip;

        if (theta <= 0.0) {
            if (++degenerate_run_ > 50) bland_ = true;
        } else {
            degenerate_run_ = 0;
            bland_ = false;
        }

        // Move along the edge.
        x_[q] += dir * theta;
        for (Eigen::Index i = 0; i < rows_; ++i) x_[basis_[static_cast<std::size_t>(i)]] -= dir * theta * alpha[i];

        if (bound_flip) {
            auto& s = state_[static_cast<std::size_t>(q)];
            s = s == State::AtLower ? State::AtUpper : State::AtLower;
            x_[q] = s == State::AtLower ? lo_[q] : up_[q];
            return StepResult::Continue;
        }

        const Eigen::Index out = basis_[static_cast<std::size_t>(leave)];
        const double delta = -dir * alpha[leave];
        auto& so = state_[static_cast<std::size_t>(out)];
        if (delta < 0.0) {
            so = State::AtLower;
            x_[out] = lo_[out];
        } else {
            so = State::AtUpper;
            x_[out] = up_[out];
        }
        state_[static_cast<std::size_t>(q)] = State::Basic;
        basis_[static_cast<std::size_t>(leave)] = q;

        const Eigen::RowVectorXd pivot_row = binv_.row(leave) / alpha[leave];
        binv_.noalias() -= alpha * pivot_row;
        binv_.row(leave) = pivot_row;

        if (++since_refactor_ >= opt_.refactor_interval) {
            if (!refactor()) return StepResult::Singular;
        }
        return StepResult::Continue;
    }

    bool refactor() {
        if (fresh_) return true;
        since_refactor_ = 0;
        if (rows_ == 0) return true;
        Matrix bmat(rows_, rows_);
        for (Eigen::Index k = 0; k < rows_; ++k) {
            column(basis_[static_cast<std::size_t>(k)], col_);
            bmat.col(k) = col_;
        }
        Eigen::PartialPivLU<Matrix> lu(bmat);
        const Eigen::Index n = rows_;
        binv_ = lu.inverse();
        if (!binv_.allFinite()) return false;
        // Probe B B^{-1} v = v with a fixed +-1 vector; guards against an (almost) singular basis.
        Vector probe(n);
        for (Eigen::Index k = 0; k < n; ++k) probe[k] = (k * 7 + 3) % 5 < 2 ? -1.0 : 1.0;
        const double resid = (bmat * (binv_ * probe) - probe).cwiseAbs().maxCoeff();
        if (!(resid < 1e-6)) return false;

        Vector rhs = p_.b;
        for (Eigen::Index j = 0; j < total_; ++j) {
            if (state_[static_cast<std::size_t>(j)] == State::Basic || x_[j] == 0.0) continue;
            if (j < cols_) rhs.noalias() -= p_.a.col(j) * x_[j];
            else rhs[j - cols_] -= art_sign_[j - cols_] * x_[j];
        }
        const Vector xb = binv_ * rhs;
        for (Eigen::Index k = 0; k < rows_; ++k) x_[basis_[static_cast<std::size_t>(k)]] = xb[k];
        fresh_ = true;
        return true;
    }

    const LpProblem& p_;
    LpOptions opt_;
    Eigen::Index rows_ = 0, cols_ = 0, total_ = 0;
    double cost_scale_ = 1.0, b_scale_ = 1.0;
    int phase_ = 1;
    int iterations_ = 0;
    int since_refactor_ = 0;
    bool fresh_ = false;  // binv_ and x_ are exact for the current basis
    int degenerate_run_ = 0;
    bool bland_ = false;
    double entering_d_ = 0.0;

    Vector lo_, up_, x_, y_, art_sign_, col_;
    std::vector<State> state_;
    std::vector<Eigen::Index> basis_;
    Matrix binv_;
};

}  // namespace

LpSolution solve_lp(const LpProblem& problem, const LpOptions& options, const std::vector<char>* start_at_upper) {
    const auto rows = problem.a.rows();
    const auto cols = problem.a.cols();
    if (problem.b.size() != rows || problem.cost.size() != cols || problem.lower.size() != cols ||
        problem.upper.size() != cols)
        throw InputError("solve_lp: inconsistent problem dimensions");
    BoundedSimplex simplex(problem, options);
    return simplex.run(start_at_upper);
}

LpSolution solve_lp_from_basis(const LpProblem& problem, const LpBasis& basis, const LpOptions& options) {
    const auto rows = problem.a.rows();
    const auto cols = problem.a.cols();
    if (problem.b.size() != rows || problem.cost.size() != cols || problem.lower.size() != cols ||
        problem.upper.size() != cols)
        throw InputError("solve_lp: inconsistent problem dimensions");
    BoundedSimplex warm(problem, options);
    if (auto sol = warm.run_from_basis(basis)) return *sol;
    std::vector<char> at_upper(basis.at_upper);
    at_upper.resize(static_cast<std::size_t>(cols), 0);
    BoundedSimplex cold(problem, options);
    LpSolution sol = cold.run(&at_upper);
    sol.iterations += warm.iterations();
    return sol;
}

}  // namespace calsens
