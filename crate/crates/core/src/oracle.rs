//! Exact and high-precision solvers for the convergence targets on linear
//! models. None of these share code with the iterative optimizers; they are
//! the ground truth the optimizers are checked against.

use crate::error::{Error, Result};
use crate::numerics::{dot, norm_inf, solve_linear_system, DenseMatrix, DenseVector};
use crate::potential::PotentialSpec;

const NEWTON_MAX_ITERS: usize = 500;
const NEWTON_MAX_HALVINGS: usize = 80;
const NEWTON_TOL: f64 = 1e-10;
/// Spread allowed on the diagonal of the dual Jacobian `X D Xᵀ`; the inverse
/// mirror map has zero or infinite slope at the origin for `q ≠ 2`.
const DUAL_SLOPE_RATIO: f64 = 1e8;
const DUAL_PHASE_ITERS: usize = 200;
const KKT_STATIONARITY_TOL: f64 = 1e-9;

const REFERENCE_MAX_ITERS: usize = 2_000_000;
const REFERENCE_GRAD_TOL: f64 = 1e-9;
const SUFFICIENT_DECREASE: f64 = 0.5;

/// Linear interpolation constraints `X w = y` with `X` of shape `n × p`,
/// `p ≥ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationProblem {
    pub x: DenseMatrix,
    pub y: DenseVector,
}

impl InterpolationProblem {
    pub fn new(x: DenseMatrix, y: DenseVector) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "interpolation targets",
                expected: x.rows(),
                found: y.len(),
            });
        }
        if x.cols() < x.rows() {
            return Err(Error::InvalidArgument(format!(
                "interpolation needs p >= n, got {}x{}",
                x.rows(),
                x.cols()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    /// `‖X w − y‖∞`
    pub fn residual_inf(&self, w: &[f64]) -> Result<f64> {
        let xw = self.x.matvec(w)?;
        Ok(xw
            .iter()
            .zip(self.y.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// `min_w λ Σ_i ½(y_i − x_iᵀw)² + R(w)` with `R = D_ψ(·, anchor)` when an
/// anchor is given and `R = ψ` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedProblem {
    pub problem: InterpolationProblem,
    pub lambda: f64,
    pub potential: PotentialSpec,
    pub anchor: Option<DenseVector>,
}

impl RegularizedProblem {
    pub fn new(
        problem: InterpolationProblem,
        lambda: f64,
        potential: PotentialSpec,
        anchor: Option<DenseVector>,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if let Some(a) = &anchor {
            if a.len() != problem.p() {
                return Err(Error::DimensionMismatch {
                    context: "anchor",
                    expected: problem.p(),
                    found: a.len(),
                });
            }
            potential.check_domain(a)?;
        }
        Ok(Self {
            problem,
            lambda,
            potential,
            anchor,
        })
    }

    /// `∇ψ` at the reference point: the anchor, or the minimizer of `ψ`
    /// (where it vanishes).
    fn base(&self) -> Result<DenseVector> {
        dual_base(&self.potential, self.anchor.as_ref(), self.problem.p())
    }

    fn start(&self) -> DenseVector {
        self.anchor
            .clone()
            .unwrap_or_else(|| self.potential.minimizer(self.problem.p()))
    }

    /// Objective value at `w`.
    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        let xw = self.problem.x.matvec(w)?;
        let fit: f64 = xw
            .iter()
            .zip(self.problem.y.iter())
            .map(|(a, b)| 0.5 * (b - a) * (b - a))
            .sum();
        let reg = match &self.anchor {
            Some(a) => self.potential.bregman(w, a)?.value(),
            None => self.potential.value(w)?,
        };
        Ok(self.lambda * fit + reg)
    }

    /// `λ Xᵀ(Xw − y) + ∇ψ(w) − ∇ψ(reference)`
    pub fn gradient(&self, w: &[f64]) -> Result<DenseVector> {
        let base = self.base()?;
        self.gradient_with(w, &base)
    }

    fn gradient_with(&self, w: &[f64], base: &[f64]) -> Result<DenseVector> {
        let mut r = self.problem.x.matvec(w)?;
        r.axpy(-1.0, &self.problem.y);
        let mut g = self.problem.x.matvec_t(&r)?;
        g.scale(self.lambda);
        let gp = self.potential.grad(w)?;
        g.axpy(1.0, &gp);
        g.axpy(-1.0, base);
        Ok(g)
    }

    /// `F(w + d) − F(w)` evaluated without cancellation between the two
    /// objective values; `None` if `w + d` leaves the domain.
    fn objective_change(
        &self,
        w: &[f64],
        resid: &[f64],
        xd: &[f64],
        d: &[f64],
        base: &[f64],
    ) -> Option<f64> {
        let fit = self.lambda * (dot(xd, resid) + 0.5 * dot(xd, xd));
        let mut reg = 0.0;
        for ((&x, &dk), &bk) in w.iter().zip(d).zip(base) {
            reg += potential_change(&self.potential, x, dk)? - bk * dk;
        }
        Some(fit + reg)
    }
}

fn dual_base(
    potential: &PotentialSpec,
    anchor: Option<&DenseVector>,
    p: usize,
) -> Result<DenseVector> {
    match anchor {
        Some(a) => potential.grad(a),
        None => Ok(DenseVector::zeros(p)),
    }
}

/// `ψ_k(x + d) − ψ_k(x)` for one coordinate, accurate when `|d| ≪ |x|`.
fn potential_change(potential: &PotentialSpec, x: f64, d: f64) -> Option<f64> {
    let next = x + d;
    match *potential {
        PotentialSpec::SquaredL2 => Some(d * (x + 0.5 * d)),
        PotentialSpec::QNorm(q) => {
            if x == 0.0 || next == 0.0 || next.signum() != x.signum() {
                Some((next.abs().powf(q) - x.abs().powf(q)) / q)
            } else {
                Some(x.abs().powf(q) / q * (q * (d / x).ln_1p()).exp_m1())
            }
        }
        PotentialSpec::NegativeEntropy => {
            if next > 0.0 && next.is_finite() {
                Some(d * next.ln() + x * (d / x).ln_1p())
            } else {
                None
            }
        }
    }
}

/// Minimum-ℓ2-norm interpolant `Xᵀ(XXᵀ)⁻¹y`.
pub fn min_norm_l2(p: &InterpolationProblem) -> Result<DenseVector> {
    let gram = p.x.matmul(&p.x.transpose())?;
    let nu = solve_linear_system(&gram, &p.y)?;
    p.x.matvec_t(&nu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub w: DenseVector,
    /// Multipliers with `∇ψ(w) = ∇ψ(reference) + Xᵀν`.
    pub nu: DenseVector,
    pub iterations: usize,
    pub residual: f64,
}

/// `argmin D_ψ(w, anchor)` (or `ψ(w)` without an anchor) subject to
/// `X w = y`, solved on the dual: find `ν` with
/// `X (∇ψ)⁻¹(∇ψ(anchor) + Xᵀν) = y` by damped Newton, finished with
/// Newton on the primal optimality system when the dual stalls.
pub fn min_potential_dual(
    p: &InterpolationProblem,
    potential: &PotentialSpec,
    anchor: Option<&DenseVector>,
) -> Result<DenseVector> {
    Ok(solve_dual(p, potential, anchor)?.w)
}

pub fn solve_dual(
    p: &InterpolationProblem,
    potential: &PotentialSpec,
    anchor: Option<&DenseVector>,
) -> Result<DualSolution> {
    if let Some(a) = anchor {
        if a.len() != p.p() {
            return Err(Error::DimensionMismatch {
                context: "anchor",
                expected: p.p(),
                found: a.len(),
            });
        }
    }
    let base = dual_base(potential, anchor, p.p())?;
    let tol = NEWTON_TOL * norm_inf(&p.y).max(1.0);
    let primal = |nu: &[f64]| -> Result<(DenseVector, DenseVector, DenseVector)> {
        let mut v = p.x.matvec_t(nu)?;
        v.axpy(1.0, &base);
        let w = potential.grad_inverse(&v);
        let mut f = p.x.matvec(&w)?;
        f.axpy(-1.0, &p.y);
        Ok((v, w, f))
    };
    // convex dual objective ψ*(base + Xᵀν) − yᵀν, whose gradient is f;
    // returned with the magnitude of its terms for a rounding estimate
    let dual_value = |nu: &[f64], v: &[f64], w: &[f64]| -> (f64, f64) {
        match potential.value(w) {
            Ok(psi) => {
                let (a, b) = (dot(v, w), dot(&p.y, nu));
                (a - psi - b, a.abs() + psi.abs() + b.abs())
            }
            Err(_) => (f64::INFINITY, 0.0),
        }
    };

    let mut nu = warm_start(p, potential, &base)?;
    let (mut v, mut w, mut f) = primal(&nu)?;
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITERS {
        let residual = f.norm_inf();
        if residual < tol && w.is_finite() {
            return Ok(DualSolution {
                w,
                nu,
                iterations,
                residual,
            });
        }
        let slopes = clamped_slopes(potential, &v);
        let jac = p.x.weighted_gram(&slopes)?;
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let delta = solve_linear_system(&jac, &neg_f)?;

        let current = f.norm2();
        let (current_dual, magnitude) = dual_value(&nu, &v, &w);
        let slope = dot(&delta, &f);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let mut trial = nu.clone();
            trial.axpy(step, &delta);
            let (tv, tw, tf) = primal(&trial)?;
            let (trial_dual, trial_magnitude) = dual_value(&trial, &tv, &tw);
            let noise = 8.0 * f64::EPSILON * (magnitude + trial_magnitude);
            let sufficient = trial_dual <= current_dual + 1e-4 * step * slope;
            let within_noise = (trial_dual - current_dual).abs() <= noise;
            if tw.is_finite() && (sufficient || (within_noise && tf.norm2() < current)) {
                nu = trial;
                v = tv;
                w = tw;
                f = tf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted || iterations >= DUAL_PHASE_ITERS {
            break;
        }
    }
    if !w.is_finite() {
        return Err(Error::NewtonDivergence {
            iterations,
            residual: f.norm_inf(),
        });
    }
    polish_kkt(p, potential, &base, w, nu, tol, iterations)
}

/// Newton on the full optimality system `∇ψ(w) = base + Xᵀν`, `Xw = y` in
/// the primal variables. Used when `v ≈ 0` coordinates lose precision in the
/// dual parametrization (steep `q`).
fn polish_kkt(
    p: &InterpolationProblem,
    potential: &PotentialSpec,
    base: &[f64],
    mut w: DenseVector,
    mut nu: DenseVector,
    tol: f64,
    mut iterations: usize,
) -> Result<DualSolution> {
    let (n, dim) = (p.n(), p.p());
    let residuals = |w: &[f64], nu: &[f64]| -> Result<(DenseVector, DenseVector)> {
        let mut r1 = potential.grad(w)?;
        r1.axpy(-1.0, base);
        r1.axpy(-1.0, &p.x.matvec_t(nu)?);
        let mut r2 = p.x.matvec(w)?;
        r2.axpy(-1.0, &p.y);
        Ok((r1, r2))
    };
    let merit = |r1: &DenseVector, r2: &DenseVector| dot(r1, r1) + dot(r2, r2);
    let (mut r1, mut r2) = residuals(&w, &nu)?;
    while iterations < NEWTON_MAX_ITERS {
        let stationarity_scale = potential.grad(&w)?.norm_inf().max(1.0);
        if r2.norm_inf() < tol && r1.norm_inf() < KKT_STATIONARITY_TOL * stationarity_scale {
            return Ok(DualSolution {
                residual: r2.norm_inf(),
                w,
                nu,
                iterations,
            });
        }
        // [H  −Xᵀ] [Δw]   [−r1]
        // [X   0 ] [Δν] = [−r2]
        let mut kkt = DenseMatrix::zeros(dim + n, dim + n);
        for k in 0..dim {
            kkt.set(k, k, potential.hessian_scalar(w[k]));
            for i in 0..n {
                let xik = p.x.get(i, k);
                kkt.set(k, dim + i, -xik);
                kkt.set(dim + i, k, xik);
            }
        }
        let rhs: Vec<f64> = r1.iter().chain(r2.iter()).map(|v| -v).collect();
        let step_dir = solve_linear_system(&kkt, &rhs)?;
        let (dw, dnu) = step_dir.split_at(dim);

        let current = merit(&r1, &r2);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let mut tw = w.clone();
            tw.axpy(step, dw);
            let mut tnu = nu.clone();
            tnu.axpy(step, dnu);
            if potential.check_domain(&tw).is_ok() {
                let (t1, t2) = residuals(&tw, &tnu)?;
                if merit(&t1, &t2) < current {
                    (w, nu, r1, r2) = (tw, tnu, t1, t2);
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    Err(Error::NewtonDivergence {
        iterations,
        residual: r2.norm_inf(),
    })
}

/// Multipliers whose mirror image is closest to the ℓ2 interpolant, which
/// puts `v` on the right scale for steep potentials. Entropy starts at zero.
fn warm_start(
    p: &InterpolationProblem,
    potential: &PotentialSpec,
    base: &[f64],
) -> Result<DenseVector> {
    if *potential == PotentialSpec::NegativeEntropy {
        return Ok(DenseVector::zeros(p.n()));
    }
    let mut target = potential.grad(&min_norm_l2(p)?)?;
    target.axpy(-1.0, base);
    let gram = p.x.matmul(&p.x.transpose())?;
    solve_linear_system(&gram, &p.x.matvec(&target)?)
}

/// Slopes of `(∇ψ)⁻¹` kept within a bounded ratio of each other so that
/// `X D Xᵀ` stays invertible where the slope is zero or infinite.
fn clamped_slopes(potential: &PotentialSpec, v: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = v
        .iter()
        .map(|&vk| potential.grad_inverse_derivative_scalar(vk))
        .collect();
    let largest = raw
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(0.0_f64, f64::max);
    let cap = if largest > 0.0 {
        largest * DUAL_SLOPE_RATIO
    } else {
        1.0
    };
    let floor = cap / DUAL_SLOPE_RATIO / DUAL_SLOPE_RATIO;
    raw.into_iter()
        .map(|s| if s.is_nan() { cap } else { s.clamp(floor, cap) })
        .collect()
}

/// Closed-form minimizer of `λ·½‖y − Xw‖² + ½‖w − a‖²`:
/// `w = (λXᵀX + I)⁻¹(λXᵀy + a)`.
pub fn ridge_closed_form(rp: &RegularizedProblem) -> Result<DenseVector> {
    if rp.potential != PotentialSpec::SquaredL2 {
        return Err(Error::InvalidArgument(format!(
            "ridge closed form needs the l2 potential, got {}",
            rp.potential
        )));
    }
    let x = &rp.problem.x;
    let xt = x.transpose();
    let mut system = xt.matmul(x)?;
    let p = x.cols();
    for i in 0..p {
        for j in 0..p {
            let v = rp.lambda * system.get(i, j) + if i == j { 1.0 } else { 0.0 };
            system.set(i, j, v);
        }
    }
    let mut rhs = x.matvec_t(&rp.problem.y)?;
    rhs.scale(rp.lambda);
    if let Some(a) = &rp.anchor {
        rhs.axpy(1.0, a);
    }
    let w = solve_linear_system(&system, &rhs);
    debug_assert!(w.is_ok(), "λXᵀX + I is positive definite");
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub w: DenseVector,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// High-precision minimizer of a [`RegularizedProblem`] for any potential.
pub fn regularized_reference(rp: &RegularizedProblem) -> Result<DenseVector> {
    Ok(solve_reference(rp)?.w)
}

/// Accelerated full-batch gradient descent with backtracking (halving) and a
/// monotone restart, stopped at `‖∇F‖∞ < 1e-9`. A step `s` is
/// accepted when it decreases `F` by at least `s‖∇F‖²/2`, the quadratic
/// upper-bound test that keeps the momentum stable; it implies the usual
/// Armijo condition with parameter `1e-4`.
pub fn solve_reference(rp: &RegularizedProblem) -> Result<ReferenceSolution> {
    let base = rp.base()?;
    let tol = REFERENCE_GRAD_TOL;
    let x = &rp.problem.x;
    let residual = |w: &[f64]| -> Result<DenseVector> {
        let mut r = x.matvec(w)?;
        r.axpy(-1.0, &rp.problem.y);
        Ok(r)
    };

    let mut w = rp.start();
    let mut momentum_point = w.clone();
    let mut t = 1.0_f64;
    let mut step = 1.0 / (rp.lambda * x.as_slice().iter().map(|v| v * v).sum::<f64>() + 1.0);
    let mut grad_norm = f64::INFINITY;

    for iteration in 0..REFERENCE_MAX_ITERS {
        let g_w = rp.gradient_with(&w, &base)?;
        grad_norm = g_w.norm_inf();
        if grad_norm < tol {
            return Ok(ReferenceSolution {
                w,
                iterations: iteration,
                grad_norm,
            });
        }

        let g = rp.gradient_with(&momentum_point, &base)?;
        let g_sq = dot(&g, &g);
        let r = residual(&momentum_point)?;
        let xg = x.matvec(&g)?;
        step *= 2.0;
        let mut next = None;
        while step > 1e-300 {
            let d: Vec<f64> = g.iter().map(|v| -step * v).collect();
            let xd: Vec<f64> = xg.iter().map(|v| -step * v).collect();
            if let Some(change) = rp.objective_change(&momentum_point, &r, &xd, &d, &base) {
                if change <= -SUFFICIENT_DECREASE * step * g_sq {
                    let mut candidate = momentum_point.clone();
                    candidate.axpy(1.0, &d);
                    next = Some(candidate);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(candidate) = next else {
            break;
        };

        // monotone safeguard: restart momentum if the objective went up
        let move_from_w = candidate.sub(&w);
        let r_w = residual(&w)?;
        let x_move = x.matvec(&move_from_w)?;
        let increased = rp
            .objective_change(&w, &r_w, &x_move, &move_from_w, &base)
            .is_none_or(|c| c > 0.0);
        if increased {
            if momentum_point == w {
                break;
            }
            momentum_point = w.clone();
            t = 1.0;
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let mut extrapolated = candidate.clone();
        extrapolated.axpy(beta, &move_from_w);
        momentum_point = if rp.potential.check_domain(&extrapolated).is_ok() {
            extrapolated
        } else {
            candidate.clone()
        };
        w = candidate;
        t = t_next;
    }
    Err(Error::MaxIterations {
        iterations: REFERENCE_MAX_ITERS,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, RngStream};

    fn problem(rows: &[Vec<f64>], y: &[f64]) -> InterpolationProblem {
        InterpolationProblem::new(DenseMatrix::from_rows(rows).unwrap(), y.to_vec().into()).unwrap()
    }

    fn random_problem(n: usize, p: usize, seed: u64) -> InterpolationProblem {
        let mut rng = RngStream::new(seed);
        let x = gaussian_matrix(n, p, &mut rng).unwrap();
        let y = rng.gaussian_vector(n, 1.0);
        InterpolationProblem::new(x, y).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn min_norm_examples() {
        assert_close(
            &min_norm_l2(&problem(&[vec![1.0, 1.0]], &[2.0])).unwrap(),
            &[1.0, 1.0],
            1e-14,
        );
        let w = min_norm_l2(&problem(&[vec![1.0, 2.0]], &[5.0])).unwrap();
        assert_close(&w, &[1.0, 2.0], 1e-14);
        assert!((w[0] + 2.0 * w[1] - 5.0).abs() < 1e-14);
        let id = problem(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[-3.5, 7.25]);
        assert_close(&min_norm_l2(&id).unwrap(), &[-3.5, 7.25], 1e-14);
    }

    #[test]
    fn min_norm_is_feasible_and_in_row_space() {
        let p = random_problem(8, 25, 1);
        let w = min_norm_l2(&p).unwrap();
        assert!(p.residual_inf(&w).unwrap() < 1e-9);
        // w = Xᵀν for the least-squares ν
        let gram = p.x.matmul(&p.x.transpose()).unwrap();
        let nu = solve_linear_system(&gram, &p.x.matvec(&w).unwrap()).unwrap();
        let proj = p.x.matvec_t(&nu).unwrap();
        assert_close(&proj, &w, 1e-9);
    }

    #[test]
    fn rank_deficient_rows_are_singular() {
        let p = problem(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]], &[1.0, 2.0]);
        assert!(matches!(min_norm_l2(&p), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn dual_l2_matches_pseudo_inverse() {
        let p = random_problem(10, 40, 2);
        let a = min_potential_dual(&p, &PotentialSpec::SquaredL2, None).unwrap();
        let b = min_norm_l2(&p).unwrap();
        assert_close(&a, &b, 1e-9);
    }

    #[test]
    fn dual_qnorm_hand_solved() {
        // q = 3: w_k = sign(ν x_k)|ν x_k|^{1/2}; x = (1, 2), y = 5
        // ⇒ √ν (1 + 2√2) = 5
        let p = problem(&[vec![1.0, 2.0]], &[5.0]);
        let w = min_potential_dual(&p, &PotentialSpec::QNorm(3.0), None).unwrap();
        let nu = (5.0 / (1.0 + 2.0 * 2f64.sqrt())).powi(2);
        let expected = [nu.sqrt(), (2.0 * nu).sqrt()];
        assert_close(&w, &expected, 1e-9);
        assert!((w[0] - 1.3060).abs() < 1e-4 && (w[1] - 1.8470).abs() < 1e-4);
        assert!((w[0] + 2.0 * w[1] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn dual_qnorm_symmetric() {
        let p = problem(&[vec![1.0, 1.0]], &[2.0]);
        let w = min_potential_dual(&p, &PotentialSpec::QNorm(3.0), None).unwrap();
        assert_close(&w, &[1.0, 1.0], 1e-10);
    }

    #[test]
    fn dual_feasible_and_stationary_for_every_potential() {
        let p = random_problem(6, 20, 5);
        let mut rng = RngStream::new(6);
        let positive_anchor: DenseVector = (0..20).map(|_| rng.normal(0.0, 0.5).exp()).collect();
        let cases: Vec<(PotentialSpec, Option<DenseVector>)> = vec![
            (PotentialSpec::SquaredL2, None),
            (PotentialSpec::SquaredL2, Some(rng.gaussian_vector(20, 1.0))),
            (PotentialSpec::QNorm(3.0), None),
            (PotentialSpec::QNorm(1.5), None),
            (PotentialSpec::QNorm(10.0), None),
            (PotentialSpec::QNorm(1.1), None),
            (PotentialSpec::NegativeEntropy, None),
            (PotentialSpec::NegativeEntropy, Some(positive_anchor)),
        ];
        let gram = p.x.matmul(&p.x.transpose()).unwrap();
        for (spec, anchor) in cases {
            let sol =
                solve_dual(&p, &spec, anchor.as_ref()).unwrap_or_else(|e| panic!("{spec}: {e}"));
            assert!(p.residual_inf(&sol.w).unwrap() < 1e-9, "{spec}");
            let mut dual = spec.grad(&sol.w).unwrap();
            dual.axpy(-1.0, &dual_base(&spec, anchor.as_ref(), 20).unwrap());
            let mu = solve_linear_system(&gram, &p.x.matvec(&dual).unwrap()).unwrap();
            let proj = p.x.matvec_t(&mu).unwrap();
            let scale = dual.norm_inf().max(1.0);
            assert!(
                proj.sub(&dual).norm_inf() < 1e-7 * scale,
                "{spec}: dual not in row space"
            );
        }
    }

    #[test]
    fn ridge_examples() {
        // λ = 1, X = [1 0], y = 1: (XᵀX + I) w = Xᵀy ⇒ w = (½, 0)
        let rp = RegularizedProblem::new(
            problem(&[vec![1.0, 0.0]], &[1.0]),
            1.0,
            PotentialSpec::SquaredL2,
            None,
        )
        .unwrap();
        let w = ridge_closed_form(&rp).unwrap();
        assert_close(&w, &[0.5, 0.0], 1e-15);
        assert!(rp.gradient(&w).unwrap().norm_inf() < 1e-15);
    }

    #[test]
    fn ridge_small_lambda_returns_to_anchor() {
        let p = random_problem(4, 9, 8);
        let a = RngStream::new(1).gaussian_vector(9, 1.0);
        let rp =
            RegularizedProblem::new(p, 1e-10, PotentialSpec::SquaredL2, Some(a.clone())).unwrap();
        assert!(ridge_closed_form(&rp).unwrap().relative_error(&a) < 1e-8);
    }

    #[test]
    fn ridge_improves_on_min_norm_anchor() {
        let p = random_problem(5, 12, 9);
        let a = min_norm_l2(&p).unwrap();
        let other = RngStream::new(3).gaussian_vector(12, 1.0);
        for lambda in [0.1, 1.0, 10.0] {
            let rp = RegularizedProblem::new(
                p.clone(),
                lambda,
                PotentialSpec::SquaredL2,
                Some(other.clone()),
            )
            .unwrap();
            let w = ridge_closed_form(&rp).unwrap();
            assert!(rp.objective(&w).unwrap() <= rp.objective(&a).unwrap() + 1e-12);
        }
    }

    #[test]
    fn ridge_rejects_other_potentials() {
        let rp = RegularizedProblem::new(
            random_problem(2, 3, 1),
            1.0,
            PotentialSpec::QNorm(3.0),
            None,
        )
        .unwrap();
        assert!(ridge_closed_form(&rp).is_err());
    }

    #[test]
    fn reference_matches_ridge_on_random_instances() {
        for seed in 0..50u64 {
            let mut rng = RngStream::new(100 + seed);
            let n = 1 + rng.below(10);
            let p = n + rng.below(31 - n);
            let prob = InterpolationProblem::new(
                gaussian_matrix(n, p, &mut rng).unwrap(),
                rng.gaussian_vector(n, 1.0),
            )
            .unwrap();
            let lambda = 0.1 + 2.0 * rng.uniform();
            let anchor = (seed % 2 == 0).then(|| rng.gaussian_vector(p, 0.5));
            let rp =
                RegularizedProblem::new(prob, lambda, PotentialSpec::SquaredL2, anchor).unwrap();
            let exact = ridge_closed_form(&rp).unwrap();
            let approx = regularized_reference(&rp).unwrap();
            assert!(approx.relative_error(&exact) < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn reference_large_lambda_approaches_interpolation() {
        let mut p = random_problem(5, 15, 12);
        // targets reachable with positive weights, for the entropy case
        let positive: DenseVector = (0..15).map(|k| 0.2 + 0.05 * k as f64).collect();
        p.y = p.x.matvec(&positive).unwrap();
        for spec in [
            PotentialSpec::SquaredL2,
            PotentialSpec::QNorm(3.0),
            PotentialSpec::NegativeEntropy,
        ] {
            let rp = RegularizedProblem::new(p.clone(), 1e6, spec, None).unwrap();
            let reg = regularized_reference(&rp).unwrap_or_else(|e| panic!("{spec}: {e}"));
            let exact = min_potential_dual(&p, &spec, None).unwrap();
            assert!(
                reg.relative_error(&exact) < 1e-3,
                "{spec}: {}",
                reg.relative_error(&exact)
            );
        }
    }

    #[test]
    fn reference_near_l1_is_sparse() {
        // x = (1, 0.5), y = 1: the cheapest fit in ℓ1 puts all weight on the
        // first coordinate
        let p = problem(&[vec![1.0, 0.5]], &[1.0]);
        let rp = RegularizedProblem::new(p, 10.0, PotentialSpec::QNorm(1.1), None).unwrap();
        let w = regularized_reference(&rp).unwrap();
        assert!(w.iter().any(|v| v.abs() < 0.01), "{w:?}");
    }

    #[test]
    fn objective_change_is_consistent() {
        let p = random_problem(3, 6, 4);
        let mut rng = RngStream::new(10);
        for spec in [
            PotentialSpec::SquaredL2,
            PotentialSpec::QNorm(3.0),
            PotentialSpec::NegativeEntropy,
        ] {
            let rp = RegularizedProblem::new(p.clone(), 0.7, spec, None).unwrap();
            let w: DenseVector = (0..6).map(|_| rng.normal(0.0, 0.3).exp()).collect();
            let d = rng.gaussian_vector(6, 0.1);
            let mut w2 = w.clone();
            w2.axpy(1.0, &d);
            let base = rp.base().unwrap();
            let mut r = p.x.matvec(&w).unwrap();
            r.axpy(-1.0, &p.y);
            let xd = p.x.matvec(&d).unwrap();
            let change = rp.objective_change(&w, &r, &xd, &d, &base).unwrap();
            let direct = rp.objective(&w2).unwrap() - rp.objective(&w).unwrap();
            assert!((change - direct).abs() < 1e-12, "{spec}");
        }
    }
}
