//! Constrained least-squares state reconstruction.
//!
//! Minimises `f(ρ) = Σ_i (Tr(ρ·Π_i) − q_i)²` over density matrices with
//! FISTA-style accelerated projected gradient. Each step projects onto
//! `{ρ ⪰ 0, Tr ρ = 1}` exactly (eigenvalue simplex projection), the step is
//! `1/L` with `L` from power iteration, and momentum is dropped whenever the
//! accelerated step would raise the objective. The solver only sees the
//! [`Measurement`] trait, so single-photon and coincidence POVMs go through
//! the same code.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, from_hermitian_coordinates, CMat};
use crate::measurement::Measurement;
use crate::state::{project_psd_trace1, DensityMatrix};

/// Power-iteration budget for [`estimate_lipschitz`].
const POWER_STEPS: usize = 50;
const POWER_REL_TOL: f64 = 1e-6;
const LIPSCHITZ_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1/L` with `L` from [`estimate_lipschitz`].
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once `|f_k − f_{k+1}| ≤ rel_obj_tol·f_k`.
    pub rel_obj_tol: f64,
    pub step: StepRule,
    /// Reset momentum when an accelerated step increases the objective.
    pub restart: bool,
    /// Keep the objective value of every iterate in the report.
    pub record_trace: bool,
    /// Starting point; the maximally mixed state when absent.
    #[serde(skip)]
    pub init: Option<DensityMatrix>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_obj_tol: 1e-10,
            step: StepRule::Auto,
            restart: true,
            record_trace: false,
            init: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("solver.max_iters must be >= 1".into()));
        }
        if !(self.rel_obj_tol > 0.0) {
            return Err(Error::InvalidArgument("solver.rel_obj_tol must be > 0".into()));
        }
        if let StepRule::Fixed(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument("solver.step must be a positive number".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub rho_hat: DensityMatrix,
    pub iterations: usize,
    pub objective: f64,
    /// `Tr(ρ̂·Π_i) − q_i`.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub lipschitz: f64,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_trace: Option<Vec<f64>>,
    /// Not serialised, so that reports of identical runs are byte-identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn residual_norm(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

fn residuals<M: Measurement + ?Sized>(rho: &CMat, meas: &M, q: &[f64]) -> Vec<f64> {
    meas.expectations(rho).iter().zip(q).map(|(p, t)| p - t).collect()
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// `f(ρ) = Σ r_i²` and `∇f = 2·Σ r_i·Π_i` with `r_i = Tr(ρ·Π_i) − q_i`.
pub fn objective_and_gradient<M: Measurement + ?Sized>(rho: &CMat, meas: &M, q: &[f64]) -> (f64, CMat) {
    let r = residuals(rho, meas, q);
    let weights: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
    (sum_sq(&r), meas.weighted_sum(&weights))
}

/// Lipschitz constant of `∇f`: `2·λ_max(ρ ↦ Σ Tr(ρΠ_i)Π_i)·1.05`, with the
/// eigenvalue from at most 50 power-iteration steps.
pub fn estimate_lipschitz<M: Measurement + ?Sized>(meas: &M) -> f64 {
    let q = meas.dim();
    let mut x = from_hermitian_coordinates(&vec![1.0; q * q], q);
    x.unscale_mut(frobenius(&x));
    let mut lambda = 0.0;
    for _ in 0..POWER_STEPS {
        let y = meas.weighted_sum(&meas.expectations(&x));
        let norm = frobenius(&y);
        if norm == 0.0 {
            return 0.0;
        }
        let prev = lambda;
        lambda = norm;
        x = y.unscale(norm);
        if (lambda - prev).abs() <= POWER_REL_TOL * lambda {
            break;
        }
    }
    2.0 * lambda * LIPSCHITZ_SAFETY
}

/// Least-squares density matrix for the observed distribution `q`.
pub fn reconstruct<M: Measurement + ?Sized>(meas: &M, q: &[f64], opts: &SolverOptions) -> Result<SolveReport> {
    opts.validate()?;
    if q.len() != meas.n_outcomes() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed values for {} measurement outcomes",
            q.len(),
            meas.n_outcomes()
        )));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("observed distribution contains non-finite values".into()));
    }
    let start = Instant::now();
    let dim = meas.dim();
    let lipschitz = match opts.step {
        StepRule::Auto => estimate_lipschitz(meas),
        StepRule::Fixed(s) => 1.0 / s,
    };
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidArgument("measurement operator is zero".into()));
    }
    let step = 1.0 / lipschitz;

    let mut x = match &opts.init {
        Some(rho) if rho.dim() != dim => {
            return Err(Error::DimensionMismatch(format!("initial state has dim {}, expected {dim}", rho.dim())))
        }
        Some(rho) => rho.clone(),
        None => DensityMatrix::maximally_mixed(dim),
    };
    let mut fx = sum_sq(&residuals(x.matrix(), meas, q));
    let mut y = x.matrix().clone();
    let mut t = 1.0f64;
    let mut trace = opts.record_trace.then(|| vec![fx]);
    let mut converged = fx == 0.0;
    let mut iterations = 0;
    let mut restarts = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let (_, grad) = objective_and_gradient(&y, meas, q);
        let mut x_new = project_psd_trace1(&(&y - grad.scale(step)))?;
        let mut f_new = sum_sq(&residuals(x_new.matrix(), meas, q));
        if opts.restart && f_new > fx {
            // plain projected-gradient step from the last accepted iterate
            restarts += 1;
            t = 1.0;
            let (_, grad_x) = objective_and_gradient(x.matrix(), meas, q);
            x_new = project_psd_trace1(&(x.matrix() - grad_x.scale(step)))?;
            f_new = sum_sq(&residuals(x_new.matrix(), meas, q));
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        y = x_new.matrix() + (x_new.matrix() - x.matrix()).scale(beta);
        let change = (fx - f_new).abs();
        converged = f_new == 0.0 || change <= opts.rel_obj_tol * fx;
        x = x_new;
        fx = f_new;
        t = t_new;
        if let Some(tr) = trace.as_mut() {
            tr.push(fx);
        }
    }

    let r = residuals(x.matrix(), meas, q);
    Ok(SolveReport {
        objective: sum_sq(&r),
        residuals: r,
        rho_hat: x,
        iterations,
        converged,
        lipschitz,
        restarts,
        objective_trace: trace,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupler::{lift_povm, CouplerUnitary, PovmSet};
    use crate::forward::probabilities;
    use crate::linalg::{complex_gaussian, hermitian_part, trace_product, C64};
    use crate::measurement::DesignMatrix;
    use crate::modes::{build_constant_order_basis, BeamGeometry, PixelGrid};
    use crate::seed;
    use crate::state::{fidelity, random_state, DimensionSpec};

    /// Rank-one projectors onto the computational basis vectors listed.
    struct Projectors {
        dim: usize,
        which: Vec<usize>,
        scale: f64,
    }

    impl Measurement for Projectors {
        fn dim(&self) -> usize {
            self.dim
        }
        fn n_outcomes(&self) -> usize {
            self.which.len()
        }
        fn expectations(&self, rho: &CMat) -> Vec<f64> {
            self.which.iter().map(|&k| self.scale * rho[(k, k)].re).collect()
        }
        fn weighted_sum(&self, w: &[f64]) -> CMat {
            let mut m = CMat::zeros(self.dim, self.dim);
            for (&k, &wk) in self.which.iter().zip(w) {
                m[(k, k)] += C64::new(self.scale * wk, 0.0);
            }
            m
        }
        fn element(&self, i: usize) -> CMat {
            let mut m = CMat::zeros(self.dim, self.dim);
            m[(self.which[i], self.which[i])] = C64::new(self.scale, 0.0);
            m
        }
    }

    fn setup(d: usize, m: usize, lifted: usize, side: usize, seed: u64) -> PovmSet {
        let grid = PixelGrid::new(side, 4.5).unwrap();
        let basis = build_constant_order_basis(7, lifted, BeamGeometry::default(), grid).unwrap();
        let dims = DimensionSpec::new(d, m, lifted).unwrap();
        lift_povm(&CouplerUnitary::haar(dims, seed), &basis).unwrap()
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let povm = setup(2, 1, 3, 8, 1);
        let rho = random_state(2, 2, 4).unwrap();
        let q = povm.expectations(rho.matrix());
        let (v, g) = objective_and_gradient(rho.matrix(), &povm, &q);
        assert_eq!(v, 0.0);
        assert_eq!(frobenius(&g), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let povm = setup(2, 2, 5, 8, 2);
        let rho = random_state(4, 4, 5).unwrap();
        let q: Vec<f64> = (0..povm.len()).map(|i| (i as f64 * 0.1).sin().abs() / povm.len() as f64).collect();
        let (_, g) = objective_and_gradient(rho.matrix(), &povm, &q);
        let mut rng = seed::rng(77);
        for _ in 0..5 {
            let h = hermitian_part(&complex_gaussian(4, 4, &mut rng));
            let eps = 1e-5;
            let fp = objective_and_gradient(&(rho.matrix() + h.scale(eps)), &povm, &q).0;
            let fm = objective_and_gradient(&(rho.matrix() - h.scale(eps)), &povm, &q).0;
            let fd = (fp - fm) / (2.0 * eps);
            let an = trace_product(&g, &h);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12), "{fd} vs {an}");
        }
    }

    #[test]
    fn objective_ignores_element_order() {
        let povm = setup(2, 1, 3, 8, 3);
        let rho = random_state(2, 1, 1).unwrap();
        let q: Vec<f64> = (0..povm.len()).map(|i| ((i * 7) % 13) as f64 * 1e-3).collect();
        let perm: Vec<usize> = (0..povm.len()).rev().collect();
        let q_perm: Vec<f64> = perm.iter().map(|&i| q[i]).collect();
        let a = objective_and_gradient(rho.matrix(), &povm, &q).0;
        let b = objective_and_gradient(rho.matrix(), &povm.subset(&perm), &q_perm).0;
        assert!((a - b).abs() <= 1e-15 * a.max(1.0));
    }

    #[test]
    fn lipschitz_of_single_projector() {
        let l = estimate_lipschitz(&Projectors { dim: 3, which: vec![0], scale: 1.0 });
        assert!((l - 2.0 * 1.05).abs() < 1e-9, "{l}");
    }

    #[test]
    fn lipschitz_scales_quadratically() {
        let povm = setup(2, 2, 5, 8, 4);
        let l1 = estimate_lipschitz(&povm);
        let l3 = estimate_lipschitz(&povm.scaled(3.0));
        assert!((l3 / l1 - 9.0).abs() < 1e-6, "{}", l3 / l1);
    }

    #[test]
    fn lipschitz_bounds_dense_spectrum() {
        for (d, m, lifted, s) in [(2, 1, 2, 1u64), (2, 1, 4, 2), (2, 2, 4, 3), (1, 2, 3, 4)] {
            let povm = setup(d, m, lifted, 8, s);
            let a = DesignMatrix::from_measurement(&povm);
            let gram = a.rows().tr_mul(a.rows());
            let top = gram.symmetric_eigen().eigenvalues.iter().copied().fold(0.0, f64::max);
            let est = estimate_lipschitz(&povm);
            assert!(est >= 2.0 * top, "estimate {est} below true {}", 2.0 * top);
            assert!(est <= 2.0 * top * 1.05 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn noiseless_round_trip_on_ic_povm() {
        let povm = setup(2, 2, 8, 24, 5);
        let design = DesignMatrix::from_measurement(&povm);
        for (rank, s) in [(1, 10u64), (4, 11)] {
            let rho = random_state(4, rank, s).unwrap();
            let q = probabilities(&rho, &povm).unwrap();
            let rep = reconstruct(&design, &q.values, &SolverOptions::default()).unwrap();
            let f = fidelity(&rho, &rep.rho_hat).unwrap();
            assert!(f >= 0.999, "rank {rank}: fidelity {f}");
        }
    }

    #[test]
    fn iterates_stay_feasible_and_objective_is_monotone() {
        let povm = setup(2, 2, 6, 24, 6);
        let q: Vec<f64> = {
            let rho = random_state(4, 1, 3).unwrap();
            let p = probabilities(&rho, &povm).unwrap();
            p.values.iter().enumerate().map(|(i, v)| (v + 1e-4 * ((i % 5) as f64)).max(0.0)).collect()
        };
        for iters in [1, 2, 5, 20, 60] {
            let opts = SolverOptions { max_iters: iters, record_trace: true, ..Default::default() };
            let rep = reconstruct(&povm, &q, &opts).unwrap();
            assert!(DensityMatrix::new(rep.rho_hat.matrix().clone()).is_ok());
            let tr = rep.objective_trace.unwrap();
            assert!(tr.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{tr:?}");
        }
    }

    #[test]
    fn rejects_bad_observations() {
        let povm = setup(2, 1, 3, 8, 1);
        let opts = SolverOptions::default();
        assert!(reconstruct(&povm, &[0.5; 3], &opts).is_err());
        let mut q = vec![1.0 / 64.0; 64];
        q[3] = f64::NAN;
        assert!(reconstruct(&povm, &q, &opts).is_err());
        let bad = SolverOptions { max_iters: 0, ..Default::default() };
        assert!(reconstruct(&povm, &[1.0 / 64.0; 64], &bad).is_err());
    }
}
