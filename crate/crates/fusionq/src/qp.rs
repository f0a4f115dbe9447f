//! General-purpose convex QP solver used by every MinCq variant.
//!
//! Operator splitting (ADMM) with over-relaxation on the canonical form
//! `minimize 1/2 z^T P z + c^T z` subject to `lo <= A_all z <= hi`, where
//! `A_all` stacks the equality rows (`lo = hi`), the inequality rows
//! (`lo = -inf`) and one identity row per variable for the box. The KKT
//! system is factored once per penalty setting with a dense LDL^T; the grams
//! here are small enough that dense factorization is the simple, fast choice.
//!
//! Termination is certified against the absolute tolerance: a `Solved`
//! status means both the primal residual `||Az - s||_inf` and the dual
//! residual `||Pz + c + A^T y||_inf` are at or below `eps_abs`. The penalty
//! update uses the relative residual scales, so `eps_rel` steers adaptation
//! rather than loosening the certificate.

use crate::error::{FusionError, Result, SolveStatus};
use crate::linalg::{LdlFactor, Mat};
use crate::num::{dot, inf_norm, Real};
use crate::types::{QpProblem, QpSolution};

/// Solver knobs; the defaults suit the Gram-matrix QPs built in this crate,
/// which are PSD but often rank-deficient when voters correlate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Absolute residual tolerance certifying a solve.
    pub eps_abs: f64,
    /// Relative residual weight used by the penalty adaptation.
    pub eps_rel: f64,
    pub max_iter: usize,
    /// Over-relaxation factor alpha.
    pub relaxation: f64,
    /// Diagonal regularization added to P for factorization stability.
    pub sigma: f64,
    /// Initial ADMM penalty; equality rows are weighted 1000x stiffer.
    pub rho: f64,
    /// Rescale the penalty from the residual balance at fixed intervals.
    pub adaptive_rho: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 20_000,
            relaxation: 1.6,
            sigma: 1e-8,
            rho: 0.1,
            adaptive_rho: true,
        }
    }
}

impl SolverConfig {
    /// Copy of `self` with a tolerance at most `eps`.
    pub fn tightened(&self, eps: f64) -> Self {
        Self {
            eps_abs: self.eps_abs.min(eps),
            eps_rel: self.eps_rel.min(eps),
            ..self.clone()
        }
    }
}

const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_UPDATE_INTERVAL: usize = 50;

/// Stacked single-cone view of the constraints: `lo <= A z <= hi`.
struct Folded<F> {
    a: Mat<F>,
    lo: Vec<F>,
    hi: Vec<F>,
    /// True for rows with `lo == hi` (equalities), which get a stiffer penalty.
    is_eq: Vec<bool>,
}

fn fold_constraints<F: Real>(p: &QpProblem<F>) -> Folded<F> {
    let n = p.n_vars();
    let me = p.eq_matrix.rows();
    let mi = p.ineq_matrix.rows();
    let m = me + mi + n;
    let mut a = Mat::zeros(m, n);
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    let mut is_eq = Vec::with_capacity(m);
    for i in 0..me {
        a.row_mut(i).copy_from_slice(p.eq_matrix.row(i));
        lo.push(p.eq_rhs[i]);
        hi.push(p.eq_rhs[i]);
        is_eq.push(true);
    }
    for i in 0..mi {
        a.row_mut(me + i).copy_from_slice(p.ineq_matrix.row(i));
        lo.push(F::neg_infinity());
        hi.push(p.ineq_rhs[i]);
        is_eq.push(false);
    }
    for j in 0..n {
        a[(me + mi + j, j)] = F::one();
        lo.push(p.lower[j]);
        hi.push(p.upper[j]);
        is_eq.push(p.lower[j] == p.upper[j]);
    }
    Folded { a, lo, hi, is_eq }
}

fn rho_vector<F: Real>(folded: &Folded<F>, rho: f64) -> Vec<F> {
    folded
        .is_eq
        .iter()
        .map(|&eq| F::of(if eq { rho * RHO_EQ_FACTOR } else { rho }))
        .collect()
}

/// Builds and factors the KKT matrix `[[P + sigma I, A^T], [A, -1/rho]]`,
/// raising sigma when a pivot collapses.
fn factor_kkt<F: Real>(
    p: &QpProblem<F>,
    folded: &Folded<F>,
    rho_vec: &[F],
    sigma: f64,
) -> Result<LdlFactor<F>> {
    let n = p.n_vars();
    let m = folded.a.rows();
    let dim = n + m;
    let mut sigma = sigma;
    for _ in 0..4 {
        let mut kkt = Mat::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = p.quadratic[(i, j)];
            }
            kkt[(i, i)] = kkt[(i, i)] + F::of(sigma);
        }
        for i in 0..m {
            for j in 0..n {
                let v = folded.a[(i, j)];
                kkt[(n + i, j)] = v;
                kkt[(j, n + i)] = v;
            }
            kkt[(n + i, n + i)] = -F::one() / rho_vec[i];
        }
        if let Some(f) = LdlFactor::factor(&kkt) {
            return Ok(f);
        }
        sigma *= 100.0;
    }
    Err(FusionError::InvalidProblem(
        "KKT factorization failed; quadratic term may be indefinite".into(),
    ))
}

fn clamp<F: Real>(v: F, lo: F, hi: F) -> F {
    v.max(lo).min(hi)
}

/// Constraint violation and stationarity residual of a candidate point.
fn point_residuals<F: Real>(
    p: &QpProblem<F>,
    folded: &Folded<F>,
    x: &[F],
    y: &[F],
) -> (F, F) {
    let ax = folded.a.matvec(x);
    let r_prim = ax
        .iter()
        .zip(folded.lo.iter().zip(&folded.hi))
        .map(|(&v, (&lo, &hi))| (v - clamp(v, lo, hi)).abs())
        .fold(F::zero(), F::max);
    let px = p.quadratic.matvec(x);
    let aty = folded.a.matvec_t(y);
    let r_dual = (0..p.n_vars())
        .map(|j| (px[j] + p.linear[j] + aty[j]).abs())
        .fold(F::zero(), F::max);
    (r_prim, r_dual)
}

/// Active-set polish: pins the constraints the duals mark active, solves the
/// reduced equality-constrained KKT system with iterative refinement, and
/// returns the candidate only when it is sign-consistent and at least as
/// good as the iterate it started from.
fn polish<F: Real>(
    p: &QpProblem<F>,
    folded: &Folded<F>,
    y: &[F],
    r_prim: F,
    r_dual: F,
) -> Option<(Vec<F>, F, F)> {
    let n = p.n_vars();
    let m = folded.a.rows();
    // Activity threshold scales with the current accuracy so early polish
    // attempts do not chase dual noise.
    let tiny = F::of(1e-9) * (F::one() + inf_norm(y)) + F::of(10.0) * (r_prim + r_dual);

    #[derive(Clone, Copy, PartialEq)]
    enum Side {
        Upper,
        Lower,
        Eq,
    }
    let mut active: Vec<(usize, Side, F)> = Vec::new();
    for i in 0..m {
        let side = if folded.is_eq[i] {
            Some((Side::Eq, folded.hi[i]))
        } else if y[i] > tiny {
            Some((Side::Upper, folded.hi[i]))
        } else if y[i] < -tiny {
            Some((Side::Lower, folded.lo[i]))
        } else {
            None
        };
        if let Some((s, v)) = side {
            if v.is_finite() {
                active.push((i, s, v));
            }
        }
    }
    let k = active.len();
    let dim = n + k;
    let delta = F::of(1e-10);

    let mut kkt = Mat::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = p.quadratic[(i, j)];
        }
        kkt[(i, i)] = kkt[(i, i)] + delta;
    }
    for (a, &(row, _, _)) in active.iter().enumerate() {
        for j in 0..n {
            let v = folded.a[(row, j)];
            kkt[(n + a, j)] = v;
            kkt[(j, n + a)] = v;
        }
        kkt[(n + a, n + a)] = -delta;
    }
    let factor = LdlFactor::factor(&kkt)?;

    // Solve [[P, A_act^T], [A_act, 0]] [x; nu] = [-c; b_act] by refining
    // against the unregularized system.
    let mut sol = vec![F::zero(); dim];
    for _ in 0..4 {
        let mut residual = vec![F::zero(); dim];
        for j in 0..n {
            let mut acc = -p.linear[j];
            for jj in 0..n {
                acc = acc - p.quadratic[(j, jj)] * sol[jj];
            }
            for (a, &(row, _, _)) in active.iter().enumerate() {
                acc = acc - folded.a[(row, j)] * sol[n + a];
            }
            residual[j] = acc;
        }
        for (a, &(row, _, rhs)) in active.iter().enumerate() {
            let mut acc = rhs;
            for j in 0..n {
                acc = acc - folded.a[(row, j)] * sol[j];
            }
            residual[n + a] = acc;
        }
        let update = factor.solve(&residual);
        for (s, u) in sol.iter_mut().zip(update) {
            *s = *s + u;
        }
    }

    let x_new = sol[..n].to_vec();
    let mut y_new = vec![F::zero(); m];
    let sign_slack = F::of(1e-8) * (F::one() + inf_norm(&sol[n..]));
    for (a, &(row, side, _)) in active.iter().enumerate() {
        let nu = sol[n + a];
        match side {
            Side::Upper if nu < -sign_slack => return None,
            Side::Lower if nu > sign_slack => return None,
            _ => {}
        }
        y_new[row] = nu;
    }

    let (pr, dr) = point_residuals(p, folded, &x_new, &y_new);
    if pr <= r_prim.max(F::of(1e-12)) && dr <= r_dual.max(F::of(1e-12)) {
        Some((x_new, pr, dr))
    } else {
        None
    }
}

/// Solves the QP; see the module docs for the method and the certificate.
pub fn solve<F: Real>(p: &QpProblem<F>, cfg: &SolverConfig) -> Result<QpSolution<F>> {
    p.validate()?;
    let n = p.n_vars();
    let folded = fold_constraints(p);
    let m = folded.a.rows();
    let mut rho = cfg.rho.clamp(RHO_MIN, RHO_MAX);
    let mut rho_vec = rho_vector(&folded, rho);
    let mut kkt = factor_kkt(p, &folded, &rho_vec, cfg.sigma)?;

    let alpha = F::of(cfg.relaxation);
    let one_minus_alpha = F::one() - alpha;
    let eps = F::of(cfg.eps_abs);
    let sigma = F::of(cfg.sigma);

    let mut x = vec![F::zero(); n];
    let mut z: Vec<F> = folded
        .lo
        .iter()
        .zip(&folded.hi)
        .map(|(&l, &h)| clamp(F::zero(), l, h))
        .collect();
    let mut y = vec![F::zero(); m];

    let mut r_prim = F::infinity();
    let mut r_dual = F::infinity();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = cfg.max_iter;
    let stall_mark = (cfg.max_iter * 3 / 4).max(1);
    let mut r_prim_at_mark = F::infinity();
    let mut rhs = vec![F::zero(); n + m];
    // Try the active-set polish once the iterates are roughly converged.
    let polish_from = F::of(cfg.eps_abs.max(1e-5) * 10.0);
    let mut last_polish = 0usize;

    for iter in 1..=cfg.max_iter {
        // KKT solve for the (x~, nu) update.
        for j in 0..n {
            rhs[j] = sigma * x[j] - p.linear[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rho_vec[i];
        }
        let sol = kkt.solve(&rhs);
        let x_tilde = &sol[..n];
        let nu = &sol[n..];

        // Over-relaxed primal/dual updates with projection onto [lo, hi].
        for j in 0..n {
            x[j] = alpha * x_tilde[j] + one_minus_alpha * x[j];
        }
        for i in 0..m {
            let z_tilde = z[i] + (nu[i] - y[i]) / rho_vec[i];
            let z_bar = alpha * z_tilde + one_minus_alpha * z[i];
            let z_next = clamp(z_bar + y[i] / rho_vec[i], folded.lo[i], folded.hi[i]);
            y[i] = y[i] + rho_vec[i] * (z_bar - z_next);
            z[i] = z_next;
        }

        // Residuals.
        let ax = folded.a.matvec(&x);
        let px = p.quadratic.matvec(&x);
        let aty = folded.a.matvec_t(&y);
        r_prim = (0..m).map(|i| (ax[i] - z[i]).abs()).fold(F::zero(), F::max);
        r_dual = (0..n)
            .map(|j| (px[j] + p.linear[j] + aty[j]).abs())
            .fold(F::zero(), F::max);

        if iter == stall_mark {
            r_prim_at_mark = r_prim;
        }
        if r_prim <= eps && r_dual <= eps {
            status = SolveStatus::Solved;
            iterations = iter;
            break;
        }
        if r_prim <= polish_from && r_dual <= polish_from && iter - last_polish >= 50 {
            last_polish = iter;
            if let Some((px, pr, dr)) = polish(p, &folded, &y, r_prim, r_dual) {
                if pr <= eps && dr <= eps {
                    x = px;
                    r_prim = pr;
                    r_dual = dr;
                    status = SolveStatus::Solved;
                    iterations = iter;
                    break;
                }
            }
        }

        if cfg.adaptive_rho && iter % RHO_UPDATE_INTERVAL == 0 {
            let floor = F::of(1e-12);
            let s_prim = inf_norm(&ax).max(inf_norm(&z)).max(floor);
            let s_dual = inf_norm(&px)
                .max(inf_norm(&p.linear))
                .max(inf_norm(&aty))
                .max(floor);
            let scaled_p = (r_prim / s_prim).widen();
            let scaled_d = (r_dual / s_dual).widen().max(1e-30);
            let ratio = (scaled_p / scaled_d).sqrt().clamp(1e-2, 1e2);
            if ratio > 5.0 || ratio < 0.2 {
                rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                rho_vec = rho_vector(&folded, rho);
                kkt = factor_kkt(p, &folded, &rho_vec, cfg.sigma)?;
            }
        }
    }

    if status != SolveStatus::Solved {
        // Last polish attempt from wherever the budget left the iterates.
        if let Some((px, pr, dr)) = polish(p, &folded, &y, r_prim, r_dual) {
            if pr <= eps && dr <= eps {
                x = px;
                r_prim = pr;
                r_dual = dr;
                status = SolveStatus::Solved;
            }
        }
    }
    if status != SolveStatus::Solved {
        // Conservative stall test: if the primal residual is still large and
        // did not improve 10x over the last quarter of the budget, call the
        // constraint system infeasible.
        let far = r_prim.widen() > 10.0 * cfg.eps_abs;
        let stalled = r_prim.widen() > 0.1 * r_prim_at_mark.widen();
        if far && stalled {
            status = SolveStatus::Infeasible;
        }
    }

    Ok(QpSolution {
        objective_value: p.objective(&x),
        z_star: x,
        primal_residual: r_prim,
        dual_residual: r_dual,
        iterations,
        status,
    })
}

/// KKT residuals of a candidate point, computed without solver state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<F> {
    /// `||Pz + c + A^T w||_inf` after a least-squares multiplier fit over the
    /// active constraints, with inequality multipliers clamped nonnegative.
    pub stationarity: F,
    /// Worst violation of equalities, inequalities and bounds.
    pub primal: F,
    /// Largest `|multiplier * slack|` over the active inequalities.
    pub complementarity: F,
}

impl<F: Real> KktReport<F> {
    pub fn max_residual(&self) -> F {
        self.stationarity.max(self.primal).max(self.complementarity)
    }
}

/// Evaluates the KKT conditions at `z`. Pure function of its inputs; `tol`
/// only widens the active-set detection band.
pub fn verify_kkt<F: Real>(p: &QpProblem<F>, z: &[F], tol: f64) -> Result<KktReport<F>> {
    p.validate()?;
    let n = p.n_vars();
    if z.len() != n {
        return Err(FusionError::ShapeMismatch {
            what: "candidate dimension vs problem variables",
            expected: n,
            got: z.len(),
        });
    }
    let act_tol = F::of(10.0 * tol.max(0.0) + 1e-9);

    // Primal feasibility.
    let mut primal = F::zero();
    let eq_res = p.eq_matrix.matvec(z);
    for (i, &b) in p.eq_rhs.iter().enumerate() {
        primal = primal.max((eq_res[i] - b).abs());
    }
    let ineq_res = p.ineq_matrix.matvec(z);
    for (i, &h) in p.ineq_rhs.iter().enumerate() {
        primal = primal.max((ineq_res[i] - h).max(F::zero()));
    }
    for j in 0..n {
        primal = primal.max((p.lower[j] - z[j]).max(F::zero()));
        primal = primal.max((z[j] - p.upper[j]).max(F::zero()));
    }

    // Active rows: every equality, plus inequalities/bounds within act_tol.
    // Each row is the constraint gradient in `a^T z <= rhs` orientation,
    // paired with its slack (zero for equalities).
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut sign_constrained = Vec::new();
    let mut slacks = Vec::new();
    for i in 0..p.eq_matrix.rows() {
        rows.push(p.eq_matrix.row(i).to_vec());
        sign_constrained.push(false);
        slacks.push(F::zero());
    }
    for (i, &h) in p.ineq_rhs.iter().enumerate() {
        let slack = h - ineq_res[i];
        if slack <= act_tol {
            rows.push(p.ineq_matrix.row(i).to_vec());
            sign_constrained.push(true);
            slacks.push(slack);
        }
    }
    for j in 0..n {
        if p.lower[j].is_finite() && z[j] - p.lower[j] <= act_tol {
            let mut r = vec![F::zero(); n];
            r[j] = -F::one();
            rows.push(r);
            sign_constrained.push(true);
            slacks.push(z[j] - p.lower[j]);
        }
        if p.upper[j].is_finite() && p.upper[j] - z[j] <= act_tol {
            let mut r = vec![F::zero(); n];
            r[j] = F::one();
            rows.push(r);
            sign_constrained.push(true);
            slacks.push(p.upper[j] - z[j]);
        }
    }

    let mut grad = p.quadratic.matvec(z);
    for (g, &c) in grad.iter_mut().zip(&p.linear) {
        *g = *g + c;
    }

    let k = rows.len();
    let mut multipliers = vec![F::zero(); k];
    if k > 0 {
        // Least-squares fit E E^T w = -E g, then clamp inequality multipliers.
        let e = Mat::from_rows(&rows);
        let mut gram = Mat::zeros(k, k);
        let mut scale = F::zero();
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = dot(e.row(i), e.row(j));
            }
            scale = scale.max(gram[(i, i)]);
        }
        let reg = F::of(1e-12) * scale.max(F::one());
        for i in 0..k {
            gram[(i, i)] = gram[(i, i)] + reg;
        }
        let rhs: Vec<F> = (0..k).map(|i| -dot(e.row(i), &grad)).collect();
        let factor = LdlFactor::factor(&gram)
            .ok_or_else(|| FusionError::InvalidProblem("active-set gram factorization failed".into()))?;
        multipliers = factor.solve(&rhs);
        for (w, &signed) in multipliers.iter_mut().zip(&sign_constrained) {
            if signed && *w < F::zero() {
                *w = F::zero();
            }
        }
        let correction = e.matvec_t(&multipliers);
        for (g, c) in grad.iter_mut().zip(correction) {
            *g = *g + c;
        }
    }
    let stationarity = inf_norm(&grad);

    let complementarity = multipliers
        .iter()
        .zip(&slacks)
        .zip(&sign_constrained)
        .filter(|(_, &signed)| signed)
        .map(|((&w, &s), _)| (w * s).abs())
        .fold(F::zero(), F::max);

    Ok(KktReport {
        stationarity,
        primal,
        complementarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn scalar_box_qp() -> QpProblem<f64> {
        // minimize z^2 - z on [0, 1]: optimum 0.5, objective -0.25
        QpProblem::new(Mat::from_rows(&[vec![2.0]]), vec![-1.0])
            .with_bounds(vec![0.0], vec![1.0])
    }

    #[test]
    fn interior_box_optimum() {
        let sol = solve(&scalar_box_qp(), &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert!((sol.z_star[0] - 0.5).abs() < 1e-5);
        assert!((sol.objective_value + 0.25).abs() < 1e-8);
    }

    #[test]
    fn symmetric_equality_qp() {
        // minimize z1^2 + z2^2 s.t. z1 + z2 = 1 on [0,1]^2: (0.5, 0.5)
        let p: QpProblem<f64> = QpProblem::new(
            Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]),
            vec![0.0, 0.0],
        )
        .with_eq(Mat::from_rows(&[vec![1.0, 1.0]]), vec![1.0])
        .with_bounds(vec![0.0, 0.0], vec![1.0, 1.0]);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert!((sol.z_star[0] - 0.5).abs() < 1e-5);
        assert!((sol.z_star[1] - 0.5).abs() < 1e-5);
    }

    /// Grid oracle: eliminates the last variable through the equality and
    /// scans the rest of the box at the given step.
    fn grid_oracle(p: &QpProblem<f64>, step: f64) -> f64 {
        let n = p.n_vars();
        assert_eq!(p.eq_matrix.rows(), 1);
        let a = p.eq_matrix.row(0).to_vec();
        let b = p.eq_rhs[0];
        assert!(a[n - 1].abs() > 1e-9);
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; n - 1];
        let counts: Vec<usize> = (0..n - 1)
            .map(|j| ((p.upper[j] - p.lower[j]) / step).round() as usize + 1)
            .collect();
        loop {
            let mut z: Vec<f64> = (0..n - 1)
                .map(|j| p.lower[j] + step * idx[j] as f64)
                .collect();
            let partial: f64 = z.iter().zip(&a).map(|(zi, ai)| zi * ai).sum();
            let last = (b - partial) / a[n - 1];
            if last >= p.lower[n - 1] - 1e-12 && last <= p.upper[n - 1] + 1e-12 {
                z.push(last);
                best = best.min(p.objective(&z));
            }
            // odometer increment
            let mut j = 0;
            loop {
                if j == n - 1 {
                    return best;
                }
                idx[j] += 1;
                if idx[j] < counts[j] {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    #[test]
    fn random_qp_matches_grid_oracle() {
        // Fixed 3-variable PSD QP with one equality and box constraints.
        let l = Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.4, 0.8, 0.0],
            vec![-0.3, 0.2, 0.5],
        ]);
        let mut p_mat = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                p_mat[(i, j)] = crate::num::dot(l.row(i), l.row(j));
            }
        }
        let p = QpProblem::new(p_mat, vec![-0.7, 0.3, -0.2])
            .with_eq(Mat::from_rows(&[vec![0.9, 1.1, 1.0]]), vec![0.8])
            .with_bounds(vec![0.0, 0.0, -10.0], vec![1.0, 1.0, 10.0])
        ;
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        let grid = grid_oracle(&p, 1e-3);
        assert!(
            (sol.objective_value - grid).abs() < 1e-4,
            "solver {} vs grid {}",
            sol.objective_value,
            grid
        );
    }

    #[test]
    fn non_symmetric_quadratic_rejected() {
        let p = QpProblem::new(Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]), vec![0.0, 0.0]);
        assert!(matches!(
            solve(&p, &SolverConfig::default()),
            Err(FusionError::InvalidProblem(_))
        ));
    }

    #[test]
    fn unsatisfiable_equality_detected() {
        // 0 * z = 1 cannot be met; the primal residual stalls at 1.
        let p = QpProblem::new(Mat::from_rows(&[vec![2.0]]), vec![0.0])
            .with_eq(Mat::from_rows(&[vec![0.0]]), vec![1.0])
            .with_bounds(vec![-1.0], vec![1.0]);
        let cfg = SolverConfig {
            max_iter: 500,
            ..SolverConfig::default()
        };
        let sol = solve(&p, &cfg).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn solved_problems_pass_kkt_check() {
        let p = scalar_box_qp();
        let cfg = SolverConfig::default();
        let sol = solve(&p, &cfg).unwrap();
        let report = verify_kkt(&p, &sol.z_star, cfg.eps_abs).unwrap();
        assert!(report.max_residual() <= 10.0 * cfg.eps_abs);
    }

    #[test]
    fn kkt_exact_optimum_has_tiny_residuals() {
        let report = verify_kkt(&scalar_box_qp(), &[0.5], 1e-8).unwrap();
        assert!(report.stationarity <= 1e-8);
        assert!(report.primal <= 1e-8);
        assert!(report.complementarity <= 1e-8);
    }

    #[test]
    fn kkt_flags_non_optimal_corner() {
        // z = 0 has gradient -1 pointing into the box: not stationary.
        let report = verify_kkt(&scalar_box_qp(), &[0.0], 1e-8).unwrap();
        assert!(report.stationarity > 0.5);
    }

    #[test]
    fn kkt_primal_residual_is_equality_violation() {
        let p = QpProblem::new(
            Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]),
            vec![0.0, 0.0],
        )
        .with_eq(Mat::from_rows(&[vec![1.0, 1.0]]), vec![1.0])
        .with_bounds(vec![0.0, 0.0], vec![1.0, 1.0]);
        let report = verify_kkt(&p, &[0.7, 0.7], 1e-8).unwrap();
        assert_eq!(report.primal, (0.7f64 + 0.7 - 1.0).abs());
    }

    #[test]
    fn deterministic_bit_identical_solves() {
        let p = scalar_box_qp();
        let cfg = SolverConfig::default();
        let a = solve(&p, &cfg).unwrap();
        let b = solve(&p, &cfg).unwrap();
        assert_eq!(a.z_star[0].to_bits(), b.z_star[0].to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn argmin_invariant_under_objective_scaling() {
        let base: QpProblem<f64> = QpProblem::new(
            Mat::from_rows(&[vec![2.0, 0.4], vec![0.4, 2.0]]),
            vec![-1.0, 0.5],
        )
        .with_bounds(vec![0.0, 0.0], vec![1.0, 1.0]);
        let sol = solve(&base, &SolverConfig::default()).unwrap();
        for scale in [0.05, 20.0] {
            let scaled = QpProblem::new(
                Mat::from_fn(2, 2, |i, j| base.quadratic[(i, j)] * scale),
                base.linear.iter().map(|c| c * scale).collect(),
            )
            .with_bounds(base.lower.clone(), base.upper.clone());
            let sol_scaled = solve(&scaled, &SolverConfig::default()).unwrap();
            for j in 0..2 {
                assert!(
                    (sol.z_star[j] - sol_scaled.z_star[j]).abs() < 1e-6,
                    "scale {scale}"
                );
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let p = QpProblem::new(Mat::from_rows(&[vec![2.0f32]]), vec![-1.0f32])
            .with_bounds(vec![0.0], vec![1.0]);
        let cfg = SolverConfig {
            eps_abs: 1e-4,
            ..SolverConfig::default()
        };
        let sol = solve(&p, &cfg).unwrap();
        assert_eq!(sol.status, SolveStatus::Solved);
        assert!((sol.z_star[0] - 0.5).abs() < 1e-3);
    }
}
