//! LearnRep: finding representation matrices by gradient descent.
//!
//! Candidate generators `T_1..T_t` are optimized to minimize
//!
//! ```text
//! L[T] = max(1, max_i 1/|T_i|_F^2) * sum_{i<j} |[T_i, T_j] - sum_k A_ijk T_k|_1
//! ```
//!
//! The L1 term measures how badly the structure constants are violated; the
//! multiplicative norm penalty keeps the optimizer away from the all-zero
//! solution. Minimization uses Adam from standard-normal initial points. The
//! learning rate is halved whenever the best loss stalls over a window, and
//! an attempt is abandoned (restarted from a new seed) once the loss has
//! stalled with a learning rate tiny compared to the loss.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::algebra::{validate, StructureConstants, DEFAULT_TOLERANCE};
use crate::numerics::{AdamState, CMatrix, Complex64};
use crate::reps::{AlgebraRep, Field};
use crate::{Error, Execution, Result};

/// Ceiling on `1/|T_i|_F^2`; the penalty is unbounded at the zero point.
pub const PENALTY_CEILING: f64 = 1e12;

/// How often (in iterations) an attempt checks whether a lower-indexed
/// attempt has already converged.
const CANCEL_CHECK_INTERVAL: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnRepConfig {
    pub algebra: StructureConstants,
    pub rep_dim: usize,
    pub field: Field,
    pub initial_lr: f64,
    /// An attempt converges once the total loss drops below this.
    pub loss_target: f64,
    /// Restart when stalled and `lr < loss * restart_lr_loss_ratio`.
    pub restart_lr_loss_ratio: f64,
    /// Attempts that may fail to converge after the first one.
    pub max_restarts: usize,
    /// Converged attempts the acceptance check may reject before giving up.
    pub max_rejections: usize,
    pub max_iters_per_attempt: usize,
    pub plateau_window: usize,
    /// Relative improvement of the best loss below which a window counts as
    /// a plateau.
    pub plateau_min_improvement: f64,
    pub decay_factor: f64,
    /// Attempt `k` is seeded with `seed + k`.
    pub seed: u64,
    pub execution: Execution,
}

impl LearnRepConfig {
    pub fn new(algebra: StructureConstants, rep_dim: usize) -> Self {
        Self {
            algebra,
            rep_dim,
            field: Field::Real,
            initial_lr: 0.1,
            loss_target: 1e-9,
            restart_lr_loss_ratio: 1e-4,
            max_restarts: 10,
            max_rejections: 100,
            max_iters_per_attempt: 50_000,
            plateau_window: 200,
            plateau_min_improvement: 0.01,
            decay_factor: 0.5,
            seed: 0,
            execution: Execution::Serial,
        }
    }

    fn check(&self) -> Result<()> {
        if self.rep_dim == 0 {
            return Err(Error::domain("representation dimension must be at least 1"));
        }
        if !(self.loss_target > 0.0) || !(self.initial_lr > 0.0) {
            return Err(Error::domain("loss target and learning rate must be positive"));
        }
        if self.plateau_window == 0 || !(0.0..1.0).contains(&self.decay_factor) {
            return Err(Error::domain("plateau window must be positive and decay in [0, 1)"));
        }
        let report = validate(&self.algebra, DEFAULT_TOLERANCE);
        if !report.is_valid() {
            return Err(Error::domain(format!(
                "structure constants are not a Lie algebra: {:?}",
                report.violations
            )));
        }
        Ok(())
    }
}

/// Loss decomposition at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    /// The factor `max(1, max_i 1/|T_i|_F^2)`.
    pub penalty: f64,
    /// Sum of L1 bracket violations.
    pub violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub loss: f64,
    pub penalty: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Converged,
    /// Converged, but the acceptance check (e.g. irreducibility) failed.
    Rejected,
    /// Stalled with a vanishing learning rate.
    Restarted,
    IterationBudget,
    Diverged,
    /// Abandoned because an earlier attempt already converged.
    Cancelled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub seed: u64,
    pub iterations: usize,
    pub best_loss: f64,
    pub outcome: AttemptOutcome,
}

/// Result of a LearnRep run.
#[derive(Debug, Clone)]
pub struct LearnRepRun {
    /// Final generators of the winning attempt, or of the best attempt when
    /// nothing converged.
    pub rep: AlgebraRep,
    /// Per-iteration trace of that attempt.
    pub trace: Vec<TracePoint>,
    /// Attempts made before the returned one.
    pub restarts: usize,
    /// Converged attempts turned down by the acceptance check.
    pub rejections: usize,
    pub converged: bool,
    pub final_loss: LossValue,
    pub attempts: Vec<AttemptSummary>,
}

/// Bracket `(i, j)` with `i < j` and its nonzero structure constants.
struct Bracket {
    i: usize,
    j: usize,
    terms: Vec<(usize, f64)>,
}

fn brackets(sc: &StructureConstants) -> Vec<Bracket> {
    let t = sc.dim();
    let mut out = Vec::new();
    for i in 0..t {
        for j in (i + 1)..t {
            let terms = (0..t)
                .filter_map(|k| {
                    let a = sc.get(i, j, k);
                    (a != 0.0).then_some((k, a))
                })
                .collect();
            out.push(Bracket { i, j, terms });
        }
    }
    out
}

/// Flat loss kernel over `t` row-major `n x n` matrices stored back to back.
struct Kernel {
    t: usize,
    n: usize,
    brackets: Vec<Bracket>,
    // scratch
    prod: Vec<Complex64>,
    resid: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Kernel {
    fn new(sc: &StructureConstants, n: usize) -> Self {
        let nn = n * n;
        Self {
            t: sc.dim(),
            n,
            brackets: brackets(sc),
            prod: vec![Complex64::ZERO; nn],
            resid: vec![Complex64::ZERO; nn],
            tmp: vec![Complex64::ZERO; nn],
        }
    }

    /// out = a * b
    fn matmul(n: usize, a: &[Complex64], b: &[Complex64], out: &mut [Complex64]) {
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::ZERO;
                for k in 0..n {
                    acc += a[r * n + k] * b[k * n + c];
                }
                out[r * n + c] = acc;
            }
        }
    }

    /// out += g * h^H - h^H * g
    fn add_commutator_with_adjoint(n: usize, g: &[Complex64], h: &[Complex64], out: &mut [Complex64]) {
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::ZERO;
                for k in 0..n {
                    // (g h^H)_{rc} = g_{rk} conj(h_{ck});  (h^H g)_{rc} = conj(h_{kr}) g_{kc}
                    acc += g[r * n + k] * h[c * n + k].conj() - h[k * n + r].conj() * g[k * n + c];
                }
                out[r * n + c] += acc;
            }
        }
    }

    /// Returns the loss; when `grad` is given it receives the subgradient
    /// with respect to real and imaginary parts packed as complex numbers.
    fn eval(&mut self, gens: &[Complex64], mut grad: Option<&mut [Complex64]>) -> LossValue {
        let (n, nn) = (self.n, self.n * self.n);
        if let Some(g) = grad.as_deref_mut() {
            g.fill(Complex64::ZERO);
        }
        let mut violation = 0.0;
        for b in &self.brackets {
            let ti = &gens[b.i * nn..(b.i + 1) * nn];
            let tj = &gens[b.j * nn..(b.j + 1) * nn];
            Self::matmul(n, ti, tj, &mut self.prod);
            Self::matmul(n, tj, ti, &mut self.tmp);
            for e in 0..nn {
                self.resid[e] = self.prod[e] - self.tmp[e];
            }
            for &(k, a) in &b.terms {
                let tk = &gens[k * nn..(k + 1) * nn];
                for e in 0..nn {
                    self.resid[e] -= tk[e] * a;
                }
            }
            for e in 0..nn {
                let m = self.resid[e].norm();
                violation += m;
                // Subgradient of |z|: z/|z|, taken as 0 at z = 0.
                self.resid[e] = if m > 0.0 { self.resid[e] / m } else { Complex64::ZERO };
            }
            if let Some(g) = grad.as_deref_mut() {
                // d<G, [T_i, T_j]> = <[G, T_j^H], dT_i> + <[T_i^H, G], dT_j>
                Self::add_commutator_with_adjoint(n, &self.resid, tj, &mut g[b.i * nn..(b.i + 1) * nn]);
                // [T_i^H, G] = -(G T_i^H - T_i^H G)
                self.tmp.fill(Complex64::ZERO);
                Self::add_commutator_with_adjoint(n, &self.resid, ti, &mut self.tmp);
                for e in 0..nn {
                    g[b.j * nn + e] -= self.tmp[e];
                }
                for &(k, a) in &b.terms {
                    for e in 0..nn {
                        g[k * nn + e] -= self.resid[e] * a;
                    }
                }
            }
        }

        // Norm penalty max(1, max_i 1/|T_i|_F^2) with the ceiling applied.
        let mut worst = (0usize, f64::NEG_INFINITY, false);
        for m in 0..self.t {
            let sq: f64 = gens[m * nn..(m + 1) * nn].iter().map(|z| z.norm_sqr()).sum();
            let (inv, capped) = if sq > 0.0 && 1.0 / sq <= PENALTY_CEILING {
                (1.0 / sq, false)
            } else {
                (PENALTY_CEILING, true)
            };
            if inv > worst.1 {
                worst = (m, inv, capped);
            }
        }
        let (arg, inv, capped) = worst;
        let penalty = inv.max(1.0);
        if let Some(g) = grad {
            for z in g.iter_mut() {
                *z *= penalty;
            }
            if inv > 1.0 && !capped {
                // d(1/|T|^2) = -2 Re<T, dT> / |T|^4
                let scale = -2.0 * inv * inv * violation;
                for e in 0..nn {
                    g[arg * nn + e] += gens[arg * nn + e] * scale;
                }
            }
        }
        LossValue {
            total: penalty * violation,
            penalty,
            violation,
        }
    }
}

fn check_generators(generators: &[CMatrix], sc: &StructureConstants) -> Result<usize> {
    if generators.len() != sc.dim() {
        return Err(Error::domain(format!(
            "{} generators supplied for a {}-dimensional algebra",
            generators.len(),
            sc.dim()
        )));
    }
    let n = generators[0].nrows();
    if generators.iter().any(|g| g.nrows() != n || g.ncols() != n) {
        return Err(Error::domain("generators must share one square shape"));
    }
    Ok(n)
}

fn flatten(generators: &[CMatrix]) -> Vec<Complex64> {
    let mut out = Vec::new();
    for g in generators {
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                out.push(g[(r, c)]);
            }
        }
    }
    out
}

fn unflatten(flat: &[Complex64], t: usize, n: usize) -> Vec<CMatrix> {
    (0..t)
        .map(|m| CMatrix::from_fn(n, n, |r, c| flat[m * n * n + r * n + c]))
        .collect()
}

/// Penalized structure-constant violation.
pub fn loss(generators: &[CMatrix], sc: &StructureConstants) -> Result<LossValue> {
    let n = check_generators(generators, sc)?;
    Ok(Kernel::new(sc, n).eval(&flatten(generators), None))
}

/// Subgradient of [`loss`]. Entry `(r, c)` of matrix `i` holds
/// `dL/dRe T_i[r,c] + i dL/dIm T_i[r,c]`.
pub fn loss_grad(generators: &[CMatrix], sc: &StructureConstants) -> Result<Vec<CMatrix>> {
    let n = check_generators(generators, sc)?;
    let flat = flatten(generators);
    let mut grad = vec![Complex64::ZERO; flat.len()];
    Kernel::new(sc, n).eval(&flat, Some(&mut grad));
    Ok(unflatten(&grad, sc.dim(), n))
}

/// Packs complex values into the real optimization vector.
fn to_params(flat: &[Complex64], field: Field, out: &mut Vec<f64>) {
    out.clear();
    match field {
        Field::Real => out.extend(flat.iter().map(|z| z.re)),
        Field::Complex => out.extend(flat.iter().flat_map(|z| [z.re, z.im])),
    }
}

fn from_params(params: &[f64], field: Field, out: &mut [Complex64]) {
    match field {
        Field::Real => {
            for (z, &p) in out.iter_mut().zip(params) {
                *z = Complex64::new(p, 0.0);
            }
        }
        Field::Complex => {
            for (z, p) in out.iter_mut().zip(params.chunks_exact(2)) {
                *z = Complex64::new(p[0], p[1]);
            }
        }
    }
}

struct AttemptResult {
    summary: AttemptSummary,
    best_generators: Vec<Complex64>,
    best_loss: LossValue,
    trace: Vec<TracePoint>,
}

fn run_attempt(
    config: &LearnRepConfig,
    index: usize,
    winner: &AtomicUsize,
    accept: &(dyn Fn(&AlgebraRep) -> bool + Sync),
) -> AttemptResult {
    let (t, n) = (config.algebra.dim(), config.rep_dim);
    let seed = config.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = t * n * n;
    let mut gens: Vec<Complex64> = (0..count)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = match config.field {
                Field::Real => 0.0,
                Field::Complex => StandardNormal.sample(&mut rng),
            };
            Complex64::new(re, im)
        })
        .collect();

    let mut kernel = Kernel::new(&config.algebra, n);
    let mut grad = vec![Complex64::ZERO; count];
    let mut params = Vec::new();
    let mut grad_params = Vec::new();
    to_params(&gens, config.field, &mut params);
    let mut adam = AdamState::new(params.len(), config.initial_lr);

    let mut trace = Vec::new();
    let mut best = LossValue {
        total: f64::INFINITY,
        penalty: f64::NAN,
        violation: f64::NAN,
    };
    let mut best_generators = gens.clone();
    let mut window_start_best = f64::INFINITY;
    let mut outcome = AttemptOutcome::IterationBudget;
    let mut iterations = 0;

    for it in 0..config.max_iters_per_attempt {
        if it % CANCEL_CHECK_INTERVAL == 0 && winner.load(Ordering::Relaxed) < index {
            outcome = AttemptOutcome::Cancelled;
            break;
        }
        iterations = it + 1;
        let value = kernel.eval(&gens, Some(&mut grad));
        trace.push(TracePoint {
            iteration: it,
            loss: value.total,
            penalty: value.penalty,
            lr: adam.lr,
        });
        if !value.total.is_finite() {
            outcome = AttemptOutcome::Diverged;
            break;
        }
        if value.total < best.total {
            best = value;
            best_generators.copy_from_slice(&gens);
        }
        if value.total < config.loss_target {
            let rep = learned_rep(config, &gens);
            outcome = if accept(&rep) {
                winner.fetch_min(index, Ordering::Relaxed);
                AttemptOutcome::Converged
            } else {
                AttemptOutcome::Rejected
            };
            break;
        }
        if (it + 1) % config.plateau_window == 0 {
            let stalled = best.total > window_start_best * (1.0 - config.plateau_min_improvement);
            if stalled {
                if adam.lr < value.total * config.restart_lr_loss_ratio {
                    outcome = AttemptOutcome::Restarted;
                    break;
                }
                adam.lr *= config.decay_factor;
            }
            window_start_best = best.total;
        }
        to_params(&grad, config.field, &mut grad_params);
        adam.step(&mut params, &grad_params)
            .expect("parameter and gradient vectors share the adam state's length");
        from_params(&params, config.field, &mut gens);
    }

    AttemptResult {
        summary: AttemptSummary {
            seed,
            iterations,
            best_loss: best.total,
            outcome,
        },
        best_generators,
        best_loss: best,
        trace,
    }
}

fn learned_rep(config: &LearnRepConfig, flat: &[Complex64]) -> AlgebraRep {
    let mut generators = unflatten(flat, config.algebra.dim(), config.rep_dim);
    if config.field == Field::Real {
        for g in &mut generators {
            g.iter_mut().for_each(|z| z.im = 0.0);
        }
    }
    AlgebraRep {
        algebra: config.algebra.clone(),
        field: config.field,
        generators,
        label: "learned".to_string(),
        // Every bracket residual is bounded by the violation, which is at
        // most the penalized loss.
        tolerance: config.loss_target,
    }
}

/// Runs LearnRep, accepting the first attempt that converges.
pub fn run(config: &LearnRepConfig) -> Result<LearnRepRun> {
    run_with_acceptance(config, &|_| true)
}

/// Runs LearnRep, restarting whenever a converged attempt's representation
/// fails `accept`. Rejections draw on `max_rejections`, separate from the
/// `max_restarts` budget for attempts that never converge.
///
/// Attempts may run in parallel; the reported winner is always the
/// lowest-indexed accepted attempt, so the result does not depend on the
/// execution mode.
pub fn run_with_acceptance(
    config: &LearnRepConfig,
    accept: &(dyn Fn(&AlgebraRep) -> bool + Sync),
) -> Result<LearnRepRun> {
    config.check()?;
    let winner = AtomicUsize::new(usize::MAX);
    let width = config.execution.width();
    let (mut failures, mut rejections) = (0, 0);
    let mut results: Vec<AttemptResult> = Vec::new();
    // Attempts run in chunks; outcomes are consumed in index order, so the
    // stopping point does not depend on the chunk width.
    'outer: loop {
        let base = results.len();
        let chunk = config
            .execution
            .map(width, |i| run_attempt(config, base + i, &winner, accept));
        for r in chunk {
            let outcome = r.summary.outcome;
            results.push(r);
            match outcome {
                AttemptOutcome::Converged => break 'outer,
                AttemptOutcome::Rejected => rejections += 1,
                _ => failures += 1,
            }
            if failures > config.max_restarts || rejections > config.max_rejections {
                break 'outer;
            }
        }
    }

    let chosen = results
        .iter()
        .position(|r| r.summary.outcome == AttemptOutcome::Converged)
        .or_else(|| {
            results
                .iter()
                .enumerate()
                .filter(|(_, r)| r.best_loss.total.is_finite())
                .min_by(|a, b| a.1.best_loss.total.total_cmp(&b.1.best_loss.total))
                .map(|(i, _)| i)
        })
        .ok_or_else(|| Error::numerical("every LearnRep attempt diverged"))?;
    let converged = results[chosen].summary.outcome == AttemptOutcome::Converged;
    let summaries = results.iter().map(|r| r.summary.clone()).collect();
    let win = results.swap_remove(chosen);
    Ok(LearnRepRun {
        rep: learned_rep(config, &win.best_generators),
        trace: win.trace,
        restarts: chosen,
        rejections,
        converged,
        final_loss: win.best_loss,
        attempts: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{so21_constants, so31_constants, so3_constants};
    use crate::numerics::c64;
    use crate::reps::{rep_so21, spin_rep_so3, Spin};

    /// Direct evaluation of the penalized loss from its definition.
    fn brute_force_loss(gens: &[CMatrix], sc: &StructureConstants) -> f64 {
        let t = sc.dim();
        let mut violation = 0.0;
        for i in 0..t {
            for j in (i + 1)..t {
                let mut r = &gens[i] * &gens[j] - &gens[j] * &gens[i];
                for k in 0..t {
                    r -= &gens[k] * c64(sc.get(i, j, k), 0.0);
                }
                violation += r.iter().map(|z| z.norm()).sum::<f64>();
            }
        }
        let inv = gens
            .iter()
            .map(|g| 1.0 / g.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .fold(1.0, f64::max);
        inv * violation
    }

    fn random_gens(t: usize, n: usize, seed: u64, complex: bool) -> Vec<CMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t)
            .map(|_| {
                CMatrix::from_fn(n, n, |_, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = if complex { StandardNormal.sample(&mut rng) } else { 0.0 };
                    c64(re, im)
                })
            })
            .collect()
    }

    #[test]
    fn analytic_spin_one_has_zero_loss() {
        let rep = spin_rep_so3(Spin::ONE);
        let v = loss(&rep.generators, &rep.algebra).unwrap();
        assert!(v.violation <= 1e-12);
        assert_eq!(v.penalty, 1.0);
        let g = loss_grad(&rep.generators, &rep.algebra).unwrap();
        // Residual entries are exactly zero or round-off; the subgradient
        // there is either 0 or a unit-modulus sign, so only check exact
        // zeros where the residual is exactly zero.
        let exact = AlgebraRep::new(
            so3_constants(),
            Field::Real,
            vec![
                crate::numerics::real_matrix(3, 3, &[0., 0., 0., 0., 0., -1., 0., 1., 0.]),
                crate::numerics::real_matrix(3, 3, &[0., 0., 1., 0., 0., 0., -1., 0., 0.]),
                crate::numerics::real_matrix(3, 3, &[0., -1., 0., 1., 0., 0., 0., 0., 0.]),
            ],
            "rotations",
            0.0,
        )
        .unwrap();
        assert_eq!(exact.closure_residual(), 0.0);
        let g_exact = loss_grad(&exact.generators, &exact.algebra).unwrap();
        assert!(g_exact.iter().all(|m| m.iter().all(|z| *z == Complex64::ZERO)));
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn zero_generators_engage_the_ceiling() {
        let sc = so3_constants();
        let zeros = vec![CMatrix::zeros(3, 3); 3];
        let v = loss(&zeros, &sc).unwrap();
        assert_eq!(v.violation, 0.0);
        assert_eq!(v.penalty, PENALTY_CEILING);
        assert_eq!(v.total, 0.0);
        let g = loss_grad(&zeros, &sc).unwrap();
        assert!(g.iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn scaled_rep_matches_brute_force() {
        let sc = so21_constants();
        let rep = rep_so21(Spin::ONE);
        let scaled: Vec<CMatrix> = rep.generators.iter().map(|g| g * c64(0.1, 0.0)).collect();
        let v = loss(&scaled, &sc).unwrap();
        let oracle = brute_force_loss(&scaled, &sc);
        assert!(v.violation > 0.0);
        assert!((v.total - oracle).abs() <= 1e-12 * oracle.max(1.0));
        // Scaling by s leaves (s^2 - s) times each exact bracket: the
        // violation is |0.01 - 0.1| = 0.09 times the L1 mass of the
        // right-hand sides.
        let rhs: f64 = (0..3)
            .flat_map(|i| ((i + 1)..3).map(move |j| (i, j)))
            .map(|(i, j)| {
                let mut m = CMatrix::zeros(3, 3);
                for k in 0..3 {
                    m += &rep.generators[k] * c64(sc.get(i, j, k), 0.0);
                }
                crate::numerics::l1_norm(&m)
            })
            .sum();
        assert!((v.violation - 0.09 * rhs).abs() <= 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let sc = so3_constants();
        let gens = vec![CMatrix::zeros(2, 2); 2];
        assert!(matches!(loss(&gens, &sc), Err(Error::Domain(_))));
        let gens = vec![CMatrix::zeros(2, 2), CMatrix::zeros(2, 2), CMatrix::zeros(3, 3)];
        assert!(matches!(loss_grad(&gens, &sc), Err(Error::Domain(_))));
    }

    /// Central-difference gradient over every real parameter.
    fn finite_difference(gens: &[CMatrix], sc: &StructureConstants, complex: bool, h: f64) -> Vec<CMatrix> {
        let mut out = Vec::new();
        for m in 0..gens.len() {
            let n = gens[m].nrows();
            let mut g = CMatrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    let parts: &[Complex64] = if complex {
                        &[Complex64::ONE, Complex64::I]
                    } else {
                        &[Complex64::ONE]
                    };
                    for &dir in parts {
                        let mut plus = gens.to_vec();
                        plus[m][(r, c)] += dir * h;
                        let mut minus = gens.to_vec();
                        minus[m][(r, c)] -= dir * h;
                        let d = (brute_force_loss(&plus, sc) - brute_force_loss(&minus, sc)) / (2.0 * h);
                        g[(r, c)] += dir * d;
                    }
                }
            }
            out.push(g);
        }
        out
    }

    fn max_rel_dev(a: &[CMatrix], b: &[CMatrix]) -> f64 {
        let scale = b.iter().flat_map(|m| m.iter()).map(|z| z.norm()).fold(0.0, f64::max);
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).norm()))
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (sc, n, complex, seed) in [
            (so3_constants(), 3, false, 1),
            (so21_constants(), 2, true, 2),
            (so31_constants(), 2, false, 3),
        ] {
            let gens = random_gens(sc.dim(), n, seed, complex);
            let analytic = loss_grad(&gens, &sc).unwrap();
            let fd = finite_difference(&gens, &sc, complex, 1e-6);
            let dev = max_rel_dev(&analytic, &fd);
            assert!(dev <= 1e-5, "dev {dev}");
        }
    }

    #[test]
    fn gradient_with_active_penalty_matches_finite_differences() {
        let sc = so3_constants();
        let gens: Vec<CMatrix> = random_gens(3, 3, 9, false)
            .into_iter()
            .map(|g| g * c64(0.2, 0.0))
            .collect();
        assert!(loss(&gens, &sc).unwrap().penalty > 1.0);
        let dev = max_rel_dev(&loss_grad(&gens, &sc).unwrap(), &finite_difference(&gens, &sc, false, 1e-7));
        assert!(dev <= 1e-5, "dev {dev}");
    }

    #[test]
    fn directional_perturbation_follows_gradient_sign() {
        let sc = so21_constants();
        let gens = random_gens(3, 3, 17, false);
        let g = loss_grad(&gens, &sc).unwrap();
        let base = loss(&gens, &sc).unwrap().total;
        let eps = 1e-7;
        let mut bumped = gens.clone();
        bumped[1][(0, 2)] += c64(eps, 0.0);
        let delta = loss(&bumped, &sc).unwrap().total - base;
        assert_eq!(delta.signum(), g[1][(0, 2)].re.signum());
        assert!((delta / eps - g[1][(0, 2)].re).abs() <= 1e-4 * g[1][(0, 2)].re.abs().max(1.0));
    }

    #[test]
    fn penalty_is_one_when_norms_exceed_one() {
        let gens: Vec<CMatrix> = random_gens(6, 4, 5, true);
        assert!(gens.iter().all(|g| crate::numerics::frobenius_norm(g) >= 1.0));
        assert_eq!(loss(&gens, &so31_constants()).unwrap().penalty, 1.0);
    }

    #[test]
    fn conjugation_preserves_exact_solutions() {
        let rep = spin_rep_so3(Spin::ONE);
        let s = random_gens(1, 3, 21, true).remove(0) + CMatrix::identity(3, 3) * c64(3.0, 0.0);
        let s_inv = s.clone().try_inverse().unwrap();
        let conj: Vec<CMatrix> = rep.generators.iter().map(|g| &s * g * &s_inv).collect();
        assert!(loss(&conj, &rep.algebra).unwrap().violation <= 1e-11);
    }

    #[test]
    fn rejects_invalid_config() {
        let mut bad = so3_constants();
        bad.set(0, 0, 1, 1.0);
        assert!(matches!(run(&LearnRepConfig::new(bad, 3)), Err(Error::Domain(_))));
        assert!(run(&LearnRepConfig::new(so3_constants(), 0)).is_err());
    }

    #[test]
    fn so3_spin_one_converges() {
        let mut config = LearnRepConfig::new(so3_constants(), 3);
        config.seed = 1;
        let run = run(&config).unwrap();
        assert!(run.converged, "{:?}", run.attempts);
        assert!(run.final_loss.total < 1e-9);
        assert!(run.rep.closure_residual() <= config.loss_target);
        assert!(run.trace.last().unwrap().loss < 1e-9);
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let mut config = LearnRepConfig::new(so21_constants(), 3);
        config.seed = 4;
        config.max_iters_per_attempt = 1500;
        config.max_restarts = 1;
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        assert_eq!(a.trace, b.trace);
        config.execution = Execution::Parallel;
        let c = run(&config).unwrap();
        assert_eq!(a.trace, c.trace);
        assert_eq!(a.restarts, c.restarts);
    }

    #[test]
    fn rejections_have_their_own_budget() {
        let mut config = LearnRepConfig::new(so3_constants(), 3);
        config.max_rejections = 2;
        let run = run_with_acceptance(&config, &|_| false).unwrap();
        assert!(!run.converged);
        assert_eq!(run.rejections, 3);
        assert!(run.attempts.iter().all(|a| a.outcome == AttemptOutcome::Rejected));

        let count = AtomicUsize::new(0);
        let run = run_with_acceptance(&config, &|_| count.fetch_add(1, Ordering::SeqCst) >= 1).unwrap();
        assert!(run.converged);
        assert_eq!((run.restarts, run.rejections), (1, 1));
    }

    #[test]
    fn zero_budget_reports_non_convergence() {
        let mut config = LearnRepConfig::new(so31_constants(), 4);
        config.max_restarts = 0;
        config.max_iters_per_attempt = 10;
        let run = run(&config).unwrap();
        assert!(!run.converged);
        assert_eq!(run.attempts.len(), 1);
        assert_eq!(run.attempts[0].outcome, AttemptOutcome::IterationBudget);
    }
}
