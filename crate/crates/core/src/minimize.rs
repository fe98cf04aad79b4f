//! Penalized descent for `inf ∫_A |dρ|₂^q` over K-quasiconformal frames
//! with fixed data on `B(r)` and outside `B(R)`.
//!
//! Each stage descends `F_μ = E + μ P` at a fixed `μ` with Armijo
//! backtracking along truncated Newton–CG directions of a convex quadratic
//! model (falling back to the diagonally scaled gradient); when a stage
//! stalls or reaches a stationary point with the violation above tolerance, `μ` is multiplied by ten.

use serde::{Deserialize, Serialize};

use crate::energy::{curl_rms, flatten, unflatten, Objective, QuadraticModel};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::grid::Annulus;

/// Smallest diagonal preconditioner entry relative to the mean.
const DIAGONAL_FLOOR: f64 = 1e-3;
/// Range of the Levenberg–Marquardt damping `λ`.
const MIN_DAMPING: f64 = 1e-6;
const MAX_DAMPING: f64 = 1e8;
/// A stage also ends once the gradient has dropped by this factor.
const STATIONARY: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub q: f64,
    pub k: f64,
    pub inner: f64,
    pub outer: f64,
    /// Initial penalty weight.
    pub mu0: f64,
    pub mu_growth: f64,
    pub max_mu: f64,
    /// Total budget of accepted iterations.
    pub max_iter: usize,
    /// Stall window and relative decrease threshold.
    pub window: usize,
    pub rel_decrease: f64,
    /// Feasibility tolerance relative to `max(1, E)`.
    pub feasibility: f64,
    /// Conjugate-gradient budget and relative tolerance per Newton step.
    pub cg_iterations: usize,
    pub cg_tolerance: f64,
    pub armijo: f64,
}

impl MinimizeOptions {
    pub fn new(q: f64, k: f64, annulus: Annulus) -> Self {
        MinimizeOptions {
            q,
            k,
            inner: annulus.inner,
            outer: annulus.outer,
            mu0: 1.0,
            mu_growth: 10.0,
            max_mu: 1e16,
            max_iter: 20_000,
            window: 50,
            rel_decrease: 1e-8,
            feasibility: 1e-8,
            cg_iterations: 200,
            cg_tolerance: 0.1,
            armijo: 1e-4,
        }
    }

    pub fn annulus(&self) -> Result<Annulus> {
        Annulus::new(self.inner, self.outer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub iter: usize,
    pub mu: f64,
    /// Unsmoothed energy.
    pub energy: f64,
    pub violation: f64,
    pub objective: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// Iteration budget exhausted before the stopping rule fired.
    Budget,
    /// The line search failed at the largest admissible `μ`.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MinimizeRun {
    pub options: MinimizeOptions,
    pub frame: Frame,
    pub status: Status,
    pub history: Vec<Iterate>,
    pub initial_energy: f64,
    /// `I_{q,K}` estimate: unsmoothed energy of the final frame.
    pub energy: f64,
    pub violation: f64,
    pub mu: f64,
    pub eps: f64,
    /// Accepted iterates that increased `F_μ` at fixed `μ` (always zero).
    pub monotonicity_breaks: usize,
}

impl MinimizeRun {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn feasibility_bound(&self) -> f64 {
        self.options.feasibility * self.energy.max(1.0)
    }

    pub fn write_history_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,mu,energy,violation,objective,step,grad_norm")?;
        for it in &self.history {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                it.iter, it.mu, it.energy, it.violation, it.objective, it.step, it.grad_norm
            )?;
        }
        Ok(())
    }
}

/// Builds the objective used by [`minimize`] for a given initial frame.
pub fn objective_for(initial: &Frame, options: &MinimizeOptions) -> Result<Objective> {
    let annulus = options.annulus()?;
    let eps = if options.q < 2.0 {
        1e-8 * curl_rms(initial, annulus)?
    } else {
        0.0
    };
    Objective::new(initial.grid(), options.q, options.k, annulus, eps)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG on `(H + λD) p = −g` with `D = diag H`, truncated at the iteration budget, the
/// relative residual `tol`, or non-positive curvature.
fn newton_direction(
    obj: &Objective,
    model: &QuadraticModel,
    g: &[f64],
    diag: &[f64],
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let len = g.len();
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / ((1.0 + damping) * d)).collect();
    let mut p = vec![0.0; len];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let target = tol * dot(g, g).sqrt();
    let mut hd = vec![0.0; len];
    for k in 0..max_iter {
        obj.apply_model(model, &dir, &mut hd);
        hd.iter_mut()
            .zip(dir.iter().zip(diag))
            .for_each(|(h, (di, dd))| *h += damping * dd * di);
        let curv = dot(&dir, &hd);
        if !(curv > 0.0) {
            if k == 0 {
                return z;
            }
            break;
        }
        let alpha = rz / curv;
        p.iter_mut().zip(&dir).for_each(|(a, b)| *a += alpha * b);
        r.iter_mut().zip(&hd).for_each(|(a, b)| *a -= alpha * b);
        if dot(&r, &r).sqrt() <= target {
            break;
        }
        z.iter_mut()
            .zip(r.iter().zip(&inv_diag))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        dir.iter_mut().zip(&z).for_each(|(d, zi)| *d = zi + beta * *d);
    }
    p
}

/// Minimizes from `initial`, which must satisfy the (QC) bound on the annulus.
pub fn minimize(initial: &Frame, options: &MinimizeOptions) -> Result<MinimizeRun> {
    let obj = objective_for(initial, options)?;
    if !initial.is_finite() {
        return Err(Error::invalid("frame", "initial frame has non-finite entries"));
    }
    let mut x = flatten(initial);
    let mut mu = options.mu0;
    let mut g = vec![0.0; x.len()];
    let (mut v, mut model) = obj.value_gradient_model(&x, mu, &mut g);
    let exact = |x: &[f64]| obj.exact_energy(x);
    let initial_energy = exact(&x);
    let tol = |e: f64| options.feasibility * e.max(1.0);
    if v.violation > tol(initial_energy) {
        return Err(Error::Infeasible {
            violation: v.violation,
            tolerance: tol(initial_energy),
        });
    }
    let mut history = vec![Iterate {
        iter: 0,
        mu,
        energy: initial_energy,
        violation: v.violation,
        objective: v.objective,
        step: 0.0,
        grad_norm: dot(&g, &g).sqrt(),
    }];
    let mut stage_values: Vec<f64> = vec![v.objective];
    let mut stage_grad = dot(&g, &g).sqrt();
    let mut monotonicity_breaks = 0;
    let mut status = Status::Budget;
    let mut iter = 0;
    let mut damping = 1.0;
    loop {
        let gnorm = dot(&g, &g).sqrt();
        let mut stage_done = gnorm <= STATIONARY * stage_grad || stage_stalled(&stage_values, options);
        if !stage_done {
            if iter >= options.max_iter {
                break;
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient(iter));
            }
            let diag = floored_diagonal(&obj, &model);
            let forcing = options.cg_tolerance * (gnorm / stage_grad).sqrt().min(1.0);
            let newton = newton_direction(&obj, &model, &g, &diag, damping, forcing, options.cg_iterations);
            let steepest: Vec<f64> = g.iter().zip(&diag).map(|(a, b)| -a / b).collect();
            let mut accepted = None;
            for (kind, d) in [newton, steepest].into_iter().enumerate() {
                let slope = dot(&g, &d);
                if !(slope < 0.0) {
                    continue;
                }
                let mut t = 1.0;
                for _ in 0..50 {
                    let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                    let tv = obj.value(&trial, mu);
                    if tv.objective.is_finite() && tv.objective <= v.objective + options.armijo * t * slope {
                        accepted = Some((trial, t));
                        break;
                    }
                    t *= 0.5;
                }
                if kind == 0 {
                    damping = match accepted {
                        Some((_, 1.0)) => (damping / 3.0).max(MIN_DAMPING),
                        Some((_, t)) => (damping / t).min(MAX_DAMPING),
                        None => MAX_DAMPING.min(damping * 1e3),
                    };
                }
                if accepted.is_some() {
                    break;
                }
            }
            match accepted {
                Some((trial, t)) => {
                    let (nv, nmodel) = obj.value_gradient_model(&trial, mu, &mut g);
                    if nv.objective > v.objective {
                        monotonicity_breaks += 1;
                    }
                    x = trial;
                    v = nv;
                    model = nmodel;
                    iter += 1;
                    stage_values.push(v.objective);
                    history.push(Iterate {
                        iter,
                        mu,
                        energy: exact(&x),
                        violation: v.violation,
                        objective: v.objective,
                        step: t,
                        grad_norm: dot(&g, &g).sqrt(),
                    });
                    continue;
                }
                None => stage_done = true,
            }
        }
        debug_assert!(stage_done);
        // The stage at this μ is finished.
        let energy = exact(&x);
        if v.violation <= tol(energy) {
            status = Status::Converged;
            break;
        }
        if mu * options.mu_growth > options.max_mu {
            status = Status::Stalled;
            break;
        }
        mu *= options.mu_growth;
        let (nv, nmodel) = obj.value_gradient_model(&x, mu, &mut g);
        v = nv;
        model = nmodel;
        stage_values = vec![v.objective];
        stage_grad = dot(&g, &g).sqrt();
        log::debug!("μ → {mu:e} at iteration {iter}, violation {:e}", v.violation);
    }
    let energy = exact(&x);
    let frame = unflatten(initial.grid(), &x)?;
    Ok(MinimizeRun {
        options: *options,
        frame,
        status,
        history,
        initial_energy,
        energy,
        violation: v.violation,
        mu,
        eps: obj.eps,
        monotonicity_breaks,
    })
}

/// The model diagonal, floored at a small fraction of its mean over free
/// entries.
fn floored_diagonal(obj: &Objective, model: &QuadraticModel) -> Vec<f64> {
    let mut d = obj.model_diagonal(model);
    let len = obj.grid().len();
    let (mut sum, mut count) = (0.0, 0usize);
    for (j, v) in d.iter().enumerate() {
        if obj.is_free(j % len) {
            sum += v;
            count += 1;
        }
    }
    let floor = if count > 0 && sum > 0.0 {
        DIAGONAL_FLOOR * sum / count as f64
    } else {
        1.0
    };
    for v in d.iter_mut() {
        *v = v.max(floor);
    }
    d
}

fn stage_stalled(values: &[f64], options: &MinimizeOptions) -> bool {
    let w = options.window;
    if values.len() <= w {
        return false;
    }
    let now = values[values.len() - 1];
    let then = values[values.len() - 1 - w];
    then - now <= options.rel_decrease * now.abs()
}
