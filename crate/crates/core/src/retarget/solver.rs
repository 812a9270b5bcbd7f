//! Damped Gauss-Newton over keypoint residuals with a Euclidean step ball
//! and box joint limits.

use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::kinematics::{JointConfig, KinematicChain};
use crate::transform::Vec3;

/// One weighted residual block of three rows.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Term {
    /// `f_kp(q) - target`
    Point { kp: usize, target: Vec3, weight: f64 },
    /// `(f_a(q) - f_b(q)) - target`
    Diff { a: usize, b: usize, target: Vec3, weight: f64 },
}

pub(crate) struct Solution {
    pub q: JointConfig,
    pub objective: f64,
    pub converged: bool,
}

pub(crate) struct Problem<'a> {
    pub chain: &'a KinematicChain,
    pub terms: &'a [Term],
    /// Joint indices the solver may move; others stay at their start value.
    pub active: &'a [usize],
    /// Ball center and radius; `None` leaves the step unconstrained.
    pub ball: Option<(&'a JointConfig, f64)>,
}

impl Problem<'_> {
    fn residual(&self, q: &JointConfig) -> (DVector<f64>, f64) {
        let frames = self.chain.frames(q).expect("config has chain dof");
        let mut r = DVector::zeros(3 * self.terms.len());
        for (i, t) in self.terms.iter().enumerate() {
            let (v, w) = match *t {
                Term::Point { kp, target, weight } => (frames.keypoint_position(kp) - target, weight),
                Term::Diff { a, b, target, weight } => {
                    (frames.keypoint_position(a) - frames.keypoint_position(b) - target, weight)
                }
            };
            let s = w.sqrt();
            for k in 0..3 {
                r[3 * i + k] = s * v[k];
            }
        }
        let f = r.norm_squared();
        (r, f)
    }

    fn jacobian(&self, q: &JointConfig) -> DMatrix<f64> {
        let frames = self.chain.frames(q).expect("config has chain dof");
        let mut full = DMatrix::zeros(3 * self.terms.len(), self.chain.dof());
        for (i, t) in self.terms.iter().enumerate() {
            match *t {
                Term::Point { kp, weight, .. } => frames.add_keypoint_jacobian(kp, weight.sqrt(), &mut full, 3 * i),
                Term::Diff { a, b, weight, .. } => {
                    frames.add_keypoint_jacobian(a, weight.sqrt(), &mut full, 3 * i);
                    frames.add_keypoint_jacobian(b, -weight.sqrt(), &mut full, 3 * i);
                }
            }
        }
        full.select_columns(self.active)
    }

    /// Minimizes the objective from `start`, which must satisfy the ball and
    /// limit constraints. Returns the best iterate; `converged` is false only
    /// when the iteration budget ran out first.
    pub fn solve(&self, start: &JointConfig, cfg: &SolverConfig) -> Solution {
        let mut q = start.clone();
        let (mut r, mut f) = self.residual(&q);
        if f <= cfg.residual_tol || self.active.is_empty() {
            return Solution {
                q,
                objective: f,
                converged: true,
            };
        }
        let mut lambda = cfg.damping_init;
        let mut converged = false;
        for _ in 0..cfg.max_iters {
            let jac = self.jacobian(&q);
            let g = jac.tr_mul(&r);
            let h = jac.tr_mul(&jac);
            let mut improved = false;
            while lambda <= 1e12 {
                let delta = self.step(&q, &h, &g, lambda);
                if delta.norm() <= 1e-15 {
                    break;
                }
                let mut cand = q.clone();
                for (k, &j) in self.active.iter().enumerate() {
                    cand.0[j] += delta[k];
                }
                self.project(&mut cand);
                let (r_new, f_new) = self.residual(&cand);
                if f_new < f {
                    let gain = f - f_new;
                    q = cand;
                    r = r_new;
                    f = f_new;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if gain <= 1e-14 * (1.0 + f) {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !improved || f <= cfg.residual_tol {
                // no descent direction left within precision
                converged = true;
            }
            if converged {
                break;
            }
        }
        Solution {
            q,
            objective: f,
            converged,
        }
    }

    /// Final safety projection against rounding: ball, then limits.
    fn project(&self, q: &mut JointConfig) {
        if let Some((center, radius)) = self.ball {
            let mut y: Vec<f64> = self.active.iter().map(|&j| q.0[j] - center.0[j]).collect();
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > radius {
                for v in &mut y {
                    *v *= radius / n;
                }
                for (k, &j) in self.active.iter().enumerate() {
                    q.0[j] = center.0[j] + y[k];
                }
            }
        }
        for &j in self.active {
            q.0[j] = self.chain.joints()[j].clamp(q.0[j]);
        }
    }

    /// Damped model step with box bounds handled by fixing violators at
    /// their bound and the ball by a Lagrange multiplier found by bisection.
    fn step(&self, q: &JointConfig, h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> DVector<f64> {
        let n = self.active.len();
        let joints = self.chain.joints();
        let max_diag = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-12);
        let damp: Vec<f64> = (0..n).map(|i| lambda * h[(i, i)].max(1e-6 * max_diag)).collect();
        let lo: Vec<f64> = self.active.iter().map(|&j| joints[j].limits.0 - q.0[j]).collect();
        let hi: Vec<f64> = self.active.iter().map(|&j| joints[j].limits.1 - q.0[j]).collect();
        let y0: Vec<f64> = match self.ball {
            Some((c, _)) => self.active.iter().map(|&j| q.0[j] - c.0[j]).collect(),
            None => vec![0.0; n],
        };

        let mut fixed: Vec<Option<f64>> = vec![None; n];
        let mut delta = DVector::zeros(n);
        for _ in 0..=n {
            let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
            for i in 0..n {
                if let Some(v) = fixed[i] {
                    delta[i] = v;
                }
            }
            if free.is_empty() {
                break;
            }
            let m = free.len();
            let mut a = DMatrix::zeros(m, m);
            let mut b = DVector::zeros(m);
            for (fi, &i) in free.iter().enumerate() {
                let mut rhs = -g[i];
                for k in 0..n {
                    if let Some(v) = fixed[k] {
                        rhs -= h[(i, k)] * v;
                    }
                }
                b[fi] = rhs;
                for (fk, &k) in free.iter().enumerate() {
                    a[(fi, fk)] = h[(i, k)];
                }
                a[(fi, fi)] += damp[i];
            }
            let yf = DVector::from_iterator(m, free.iter().map(|&i| y0[i]));
            let mut d_free = solve_spd(&a, &b, 0.0, &yf);
            if let Some((_, radius)) = self.ball {
                let used: f64 = (0..n)
                    .filter_map(|i| fixed[i].map(|v| (y0[i] + v).powi(2)))
                    .sum();
                let r_free = (radius * radius - used).max(0.0).sqrt();
                if (&yf + &d_free).norm() > r_free {
                    let mut mu_hi = 1e-6 * max_diag.max(1.0);
                    let mut d_hi = solve_spd(&a, &b, mu_hi, &yf);
                    while (&yf + &d_hi).norm() > r_free && mu_hi < 1e300 {
                        mu_hi *= 4.0;
                        d_hi = solve_spd(&a, &b, mu_hi, &yf);
                    }
                    let mut mu_lo = 0.0;
                    for _ in 0..100 {
                        let mid = 0.5 * (mu_lo + mu_hi);
                        if mid <= mu_lo || mid >= mu_hi {
                            break;
                        }
                        let d_mid = solve_spd(&a, &b, mid, &yf);
                        if (&yf + &d_mid).norm() > r_free {
                            mu_lo = mid;
                        } else {
                            mu_hi = mid;
                            d_hi = d_mid;
                        }
                    }
                    d_free = d_hi;
                    // exact scaling onto the sphere absorbs bisection slack
                    let y = &yf + &d_free;
                    let ny = y.norm();
                    if ny > r_free {
                        d_free = y * (r_free / ny) - &yf;
                    }
                }
            }
            let mut violated = false;
            for (fi, &i) in free.iter().enumerate() {
                let v = d_free[fi];
                if v < lo[i] {
                    fixed[i] = Some(lo[i]);
                    violated = true;
                } else if v > hi[i] {
                    fixed[i] = Some(hi[i]);
                    violated = true;
                }
                delta[i] = v;
            }
            if !violated {
                break;
            }
        }
        for i in 0..n {
            if let Some(v) = fixed[i] {
                delta[i] = v;
            }
        }
        delta
    }
}

/// Solves `(A + mu I) x = b - mu y` for symmetric positive definite `A`.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, mu: f64, y: &DVector<f64>) -> DVector<f64> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += mu;
    }
    let rhs = b - y * mu;
    match m.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => m.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
    }
}
