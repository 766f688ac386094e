//! Clebsch-Gordan coefficients, the diagnostic ratio and Schur tests.
//!
//! Intertwiners `C: ρ1⊗ρ2 → ρ3` satisfy `C·(ρ1⊗ρ2)(α) = ρ3(α)·C` for every
//! group element `α`. Sampling `K` elements turns this into a homogeneous
//! linear system `𝒞·vec(C) = 0` whose nullspace is read off an SVD. The
//! ratio `r = SV_2/SV_1` of the two smallest singular values is large exactly
//! when the nullspace is one-dimensional.
//!
//! `vec(C)` is row-major: entry `C[r, c]` sits at index `r·(n1·n2) + c`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize, Serializer};

use crate::algebra::StructureConstants;
use crate::numerics::{frobenius_norm, kron, svd, CMatrix, Complex64};
use crate::reps::{analytic_irrep, AlgebraRep};
use crate::{Error, Execution, Result};

/// `r` at or above this is divergent.
pub const DIVERGENT_RATIO: f64 = 1e4;
/// `r` below this is non-divergent.
pub const NON_DIVERGENT_RATIO: f64 = 1e2;
/// Singular values at most this fraction of the largest count as null.
pub const NULLSPACE_REL_TOL: f64 = 1e-6;
/// Held-out bound `|C ρ12 − ρ3 C|_F ≤ HOLDOUT_TOLERANCE·|C|_F`.
pub const HOLDOUT_TOLERANCE: f64 = 1e-6;
/// Largest intertwiner condition number accepted as an isomorphism.
pub const MAX_CONDITION_NUMBER: f64 = 1e6;
/// Infinite ratios are written to JSON as this value.
pub const RATIO_JSON_CEILING: f64 = 1e300;

const MAX_RESAMPLES: u64 = 4;
const RESAMPLE_SEED_STRIDE: u64 = 0x1_0000;
const HOLDOUT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Group elements sampled per constraint matrix (`K`).
    pub samples: usize,
    /// Standard deviation of the algebra coefficients.
    pub scale: f64,
    pub seed: u64,
    /// Fresh elements each basis matrix is checked against.
    pub holdout: usize,
    pub execution: Execution,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            samples: 8,
            scale: 0.5,
            seed: 0,
            holdout: 3,
            execution: Execution::Serial,
        }
    }
}

impl CgOptions {
    fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Mixes a cell index into a base seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A sampled group element `exp(Σ b_i T_i)` in one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub coefficients: Vec<f64>,
    pub matrix: CMatrix,
}

fn coefficients_on_stream(t: usize, count: usize, scale: f64, seed: u64, stream: u64) -> Result<Vec<Vec<f64>>> {
    let normal = Normal::new(0.0, scale)
        .map_err(|e| Error::domain(format!("invalid coefficient scale {scale}: {e}")))?;
    if !(scale > 0.0) {
        return Err(Error::domain(format!("coefficient scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok((0..count)
        .map(|_| (0..t).map(|_| normal.sample(&mut rng)).collect())
        .collect())
}

/// `count` coefficient vectors with i.i.d. `N(0, scale²)` entries.
pub fn sample_coefficients(t: usize, count: usize, scale: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    coefficients_on_stream(t, count, scale, seed, 0)
}

/// Exponentiates given coefficient vectors in `rep`.
pub fn group_elements(rep: &AlgebraRep, coefficients: &[Vec<f64>]) -> Result<Vec<GroupElement>> {
    coefficients
        .iter()
        .map(|b| {
            Ok(GroupElement {
                coefficients: b.clone(),
                matrix: rep.exp(b)?,
            })
        })
        .collect()
}

pub fn sample_group_elements(rep: &AlgebraRep, count: usize, scale: f64, seed: u64) -> Result<Vec<GroupElement>> {
    group_elements(rep, &sample_coefficients(rep.generators.len(), count, scale, seed)?)
}

fn check_aligned(a: &[GroupElement], b: &[GroupElement]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "{} elements paired with {}",
            a.len(),
            b.len()
        )));
    }
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        if x.coefficients != y.coefficients {
            return Err(Error::domain(format!(
                "element {k} was sampled at different algebra coefficients"
            )));
        }
    }
    Ok(())
}

/// Elementwise Kronecker product `(ρ1⊗ρ2)(α) = ρ1(α)⊗ρ2(α)`.
pub fn tensor_elements(a: &[GroupElement], b: &[GroupElement]) -> Result<Vec<GroupElement>> {
    check_aligned(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| GroupElement {
            coefficients: x.coefficients.clone(),
            matrix: kron(&x.matrix, &y.matrix),
        })
        .collect())
}

/// Stacks `vec(C·ρ12(α) − ρ3(α)·C)` over the sampled elements.
///
/// The result has `K·n3·N` rows and `n3·N` columns with `N = n1·n2`.
pub fn build_cg_constraints(rho12: &[GroupElement], rho3: &[GroupElement]) -> Result<CMatrix> {
    check_aligned(rho12, rho3)?;
    let Some(first) = rho12.first() else {
        return Err(Error::domain("no group elements to build constraints from"));
    };
    let n = first.matrix.nrows();
    let n3 = rho3[0].matrix.nrows();
    let bad_shape = rho12.iter().any(|e| e.matrix.shape() != (n, n))
        || rho3.iter().any(|e| e.matrix.shape() != (n3, n3));
    if bad_shape {
        return Err(Error::shape("group elements of one representation differ in shape"));
    }
    let block = n3 * n;
    let mut m = CMatrix::zeros(rho12.len() * block, block);
    for (k, (e12, e3)) in rho12.iter().zip(rho3).enumerate() {
        let base = k * block;
        for r in 0..n3 {
            for cp in 0..n {
                let row = base + r * n + cp;
                // (C ρ12)[r, cp] = Σ_c C[r, c] ρ12[c, cp]
                for c in 0..n {
                    m[(row, r * n + c)] += e12.matrix[(c, cp)];
                }
                // (ρ3 C)[r, cp] = Σ_r' ρ3[r, r'] C[r', cp]
                for rp in 0..n3 {
                    m[(row, rp * n + cp)] -= e3.matrix[(r, rp)];
                }
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Divergent,
    NonDivergent,
    Inconclusive,
}

pub fn classify_ratio(r: f64) -> Divergence {
    if r >= DIVERGENT_RATIO {
        Divergence::Divergent
    } else if r < NON_DIVERGENT_RATIO {
        Divergence::NonDivergent
    } else {
        Divergence::Inconclusive
    }
}

/// `SV_2/SV_1`; infinite with fewer than two values or `SV_1 = 0 < SV_2`,
/// and 1 when both vanish.
pub fn diagnostic_ratio(ascending: &[f64]) -> f64 {
    match ascending {
        [_, s2, ..] if *s2 == 0.0 => 1.0,
        [s1, s2, ..] => s2 / s1,
        _ => f64::INFINITY,
    }
}

/// Number of singular values at most `NULLSPACE_REL_TOL` times the largest.
pub fn nullspace_dimension(ascending: &[f64]) -> usize {
    let top = ascending.last().copied().unwrap_or(0.0);
    ascending.iter().take_while(|&&s| s <= NULLSPACE_REL_TOL * top).count()
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    /// `(n1, n2, n3)`.
    pub dims: (usize, usize, usize),
    pub constraint_shape: (usize, usize),
    /// Ascending.
    pub singular_values: Vec<f64>,
    pub ratio: f64,
    pub nullspace_dim: usize,
    /// Unit-norm `n3 × (n1·n2)` coefficient matrices spanning the nullspace.
    pub basis: Vec<CMatrix>,
    /// Worst relative held-out residual of each basis matrix.
    pub holdout_residuals: Vec<f64>,
    pub samples: usize,
    /// Seed of the sample set this solution came from.
    pub seed: u64,
}

impl CgSolution {
    /// Classification of `r`. With two or more null directions both `SV_1`
    /// and `SV_2` are round-off and `r` carries no information, so such
    /// solutions are reported as non-divergent.
    pub fn divergence(&self) -> Divergence {
        if self.nullspace_dim >= 2 {
            Divergence::NonDivergent
        } else {
            classify_ratio(self.ratio)
        }
    }

    pub fn holdout_ok(&self) -> bool {
        self.holdout_residuals.iter().all(|&r| r <= HOLDOUT_TOLERANCE)
    }
}

/// `max_α |C ρ12(α) − ρ3(α) C|_F / |C|_F`.
pub fn intertwiner_residual(c: &CMatrix, rho12: &[GroupElement], rho3: &[GroupElement]) -> Result<f64> {
    check_aligned(rho12, rho3)?;
    let norm = frobenius_norm(c);
    Ok(rho12
        .iter()
        .zip(rho3)
        .map(|(a, b)| frobenius_norm(&(c * &a.matrix - &b.matrix * c)) / norm)
        .fold(0.0, f64::max))
}

/// Intertwiners `ρ1⊗ρ2 → ρ3` from one sample set.
pub fn cg_solve(rep1: &AlgebraRep, rep2: &AlgebraRep, rep3: &AlgebraRep, opts: &CgOptions) -> Result<CgSolution> {
    rep1.check_same_algebra(rep2)?;
    rep1.check_same_algebra(rep3)?;
    if opts.samples == 0 {
        return Err(Error::domain("at least one group element must be sampled"));
    }
    let t = rep1.generators.len();
    let (n1, n2, n3) = (rep1.dim(), rep2.dim(), rep3.dim());
    let n = n1 * n2;

    let elements = |coeffs: &[Vec<f64>]| -> Result<(Vec<GroupElement>, Vec<GroupElement>)> {
        let e12 = tensor_elements(&group_elements(rep1, coeffs)?, &group_elements(rep2, coeffs)?)?;
        Ok((e12, group_elements(rep3, coeffs)?))
    };
    let (e12, e3) = elements(&sample_coefficients(t, opts.samples, opts.scale, opts.seed)?)?;
    let constraints = build_cg_constraints(&e12, &e3)?;
    let decomposition = svd(&constraints)?;
    let values = decomposition.values.clone();
    let nullspace_dim = nullspace_dimension(&values);
    let basis: Vec<CMatrix> = (0..nullspace_dim)
        .map(|i| {
            let v = decomposition.vector(i);
            CMatrix::from_fn(n3, n, |r, c| v[r * n + c])
        })
        .collect();

    let holdout = coefficients_on_stream(t, opts.holdout, opts.scale, opts.seed, HOLDOUT_STREAM)?;
    let (h12, h3) = elements(&holdout)?;
    let holdout_residuals = basis
        .iter()
        .map(|c| intertwiner_residual(c, &h12, &h3))
        .collect::<Result<_>>()?;

    Ok(CgSolution {
        dims: (n1, n2, n3),
        constraint_shape: constraints.shape(),
        ratio: diagnostic_ratio(&values),
        singular_values: values,
        nullspace_dim,
        basis,
        holdout_residuals,
        samples: opts.samples,
        seed: opts.seed,
    })
}

/// [`cg_solve`], drawing a fresh sample set while `r` is inconclusive.
pub fn cg_solve_resampling(
    rep1: &AlgebraRep,
    rep2: &AlgebraRep,
    rep3: &AlgebraRep,
    opts: &CgOptions,
) -> Result<CgSolution> {
    let mut solution = cg_solve(rep1, rep2, rep3, opts)?;
    for attempt in 1..=MAX_RESAMPLES {
        if solution.divergence() != Divergence::Inconclusive {
            break;
        }
        let seed = opts.seed.wrapping_add(attempt * RESAMPLE_SEED_STRIDE);
        solution = cg_solve(rep1, rep2, rep3, &opts.with_seed(seed))?;
    }
    Ok(solution)
}

/// Spectral condition number `σ_max/σ_min` of a square matrix.
pub fn condition_number(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Ok(f64::INFINITY);
    }
    let values = svd(m)?.values;
    Ok(values[values.len() - 1] / values[0])
}

fn serialize_ratio<S: Serializer>(r: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(r.min(RATIO_JSON_CEILING))
}

fn serialize_ratio_grid<S: Serializer>(grid: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let clamped: Vec<Vec<f64>> = grid
        .iter()
        .map(|row| row.iter().map(|r| r.min(RATIO_JSON_CEILING)).collect())
        .collect();
    clamped.serialize(s)
}

fn serialize_condition<S: Serializer>(c: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    c.map(|v| v.min(RATIO_JSON_CEILING)).serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SchurCandidate {
    pub label: String,
    #[serde(serialize_with = "serialize_ratio")]
    pub r: f64,
    pub nullspace_dim: usize,
    pub divergence: Divergence,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchurResult {
    pub candidates: Vec<SchurCandidate>,
    /// Index of the isomorphic candidate.
    pub matched: Option<usize>,
    #[serde(skip)]
    pub intertwiner: Option<CMatrix>,
    /// Of the unique divergent candidate's intertwiner, when there is one.
    #[serde(serialize_with = "serialize_condition")]
    pub condition_number: Option<f64>,
    /// Some candidate admits more than one independent intertwiner.
    pub multiplicity: bool,
}

impl SchurResult {
    pub fn matched_label(&self) -> Option<&str> {
        self.matched.map(|i| self.candidates[i].label.as_str())
    }
}

/// Looks for the candidate isomorphic to `learned` via intertwiners
/// `trivial⊗learned → candidate`.
///
/// A match needs exactly one divergent candidate, of the learned dimension,
/// whose intertwiner is invertible (condition number at most
/// [`MAX_CONDITION_NUMBER`]).
pub fn schur_isomorphism_test(learned: &AlgebraRep, candidates: &[AlgebraRep], opts: &CgOptions) -> Result<SchurResult> {
    let trivial = AlgebraRep::trivial(&learned.algebra, 1);
    let solutions = opts
        .execution
        .map(candidates.len(), |i| {
            let cell = opts.with_seed(derive_seed(opts.seed, i as u64));
            cg_solve_resampling(&trivial, learned, &candidates[i], &cell)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let summaries: Vec<SchurCandidate> = candidates
        .iter()
        .zip(&solutions)
        .map(|(c, s)| SchurCandidate {
            label: c.label.clone(),
            r: s.ratio,
            nullspace_dim: s.nullspace_dim,
            divergence: s.divergence(),
        })
        .collect();
    let multiplicity = solutions.iter().any(|s| s.nullspace_dim > 1);
    let divergent: Vec<usize> = (0..solutions.len())
        .filter(|&i| solutions[i].divergence() == Divergence::Divergent)
        .collect();

    let mut result = SchurResult {
        candidates: summaries,
        matched: None,
        intertwiner: None,
        condition_number: None,
        multiplicity,
    };
    if let [i] = divergent[..] {
        if let Some(c) = solutions[i].basis.first() {
            let cond = condition_number(c)?;
            result.condition_number = Some(cond);
            result.intertwiner = Some(c.clone());
            if candidates[i].dim() == learned.dim() && cond <= MAX_CONDITION_NUMBER {
                result.matched = Some(i);
            }
        }
    }
    Ok(result)
}

/// Diagnostic grid for `ρ⊗ρ1 → ρ2` over known `ρ1` (rows) and `ρ2` (columns).
#[derive(Debug, Clone, Serialize)]
pub struct TensorStructureReport {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    #[serde(serialize_with = "serialize_ratio_grid")]
    pub r_values: Vec<Vec<f64>>,
    pub nullspace_dims: Vec<Vec<usize>>,
    /// Divergence pattern predicted by the matched analytic representation;
    /// absent when no candidate matched.
    pub expected_divergent: Option<Vec<Vec<bool>>>,
    pub expected_nullspace_dims: Option<Vec<Vec<usize>>>,
    /// Worst held-out residual over every coefficient matrix in the grid.
    pub max_holdout_residual: f64,
    pub schur: SchurResult,
    #[serde(rename = "match")]
    pub is_match: bool,
}

impl TensorStructureReport {
    pub fn matched_label(&self) -> Option<&str> {
        self.schur.matched_label()
    }
}

fn grid_solutions(
    rep: &AlgebraRep,
    rho1s: &[AlgebraRep],
    rho2s: &[AlgebraRep],
    opts: &CgOptions,
) -> Result<Vec<Vec<CgSolution>>> {
    let cols = rho2s.len();
    let flat = opts
        .execution
        .map(rho1s.len() * cols, |cell| {
            let cell_opts = opts.with_seed(derive_seed(opts.seed, cell as u64));
            cg_solve_resampling(rep, &rho1s[cell / cols], &rho2s[cell % cols], &cell_opts)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut it = flat.into_iter();
    Ok((0..rho1s.len())
        .map(|_| it.by_ref().take(cols).collect())
        .collect())
}

/// Computes the `r` grid of `learned⊗ρ1 → ρ2` and compares its divergence
/// pattern with the one obtained from the analytic representation that the
/// Schur test (against `rho2s`) matches.
///
/// `is_match` holds when every expected cell has `r ≥ 1e4` and every other
/// cell has `r < 1e2`.
pub fn tensor_structure_report(
    learned: &AlgebraRep,
    rho1s: &[AlgebraRep],
    rho2s: &[AlgebraRep],
    opts: &CgOptions,
) -> Result<TensorStructureReport> {
    for r in rho1s.iter().chain(rho2s) {
        learned.check_same_algebra(r)?;
    }
    let schur = schur_isomorphism_test(learned, rho2s, opts)?;
    let grid = grid_solutions(learned, rho1s, rho2s, opts)?;
    let map_grid = |g: &[Vec<CgSolution>], f: &dyn Fn(&CgSolution) -> f64| -> Vec<Vec<f64>> {
        g.iter().map(|row| row.iter().map(f).collect()).collect()
    };
    let r_values = map_grid(&grid, &|s| s.ratio);
    let nullspace_dims: Vec<Vec<usize>> = grid
        .iter()
        .map(|row| row.iter().map(|s| s.nullspace_dim).collect())
        .collect();
    let max_holdout_residual = grid
        .iter()
        .flatten()
        .flat_map(|s| s.holdout_residuals.iter().copied())
        .fold(0.0, f64::max);

    let (mut expected_divergent, mut expected_nullspace_dims) = (None, None);
    let mut is_match = false;
    if let Some(i) = schur.matched {
        let expected = grid_solutions(&rho2s[i], rho1s, rho2s, opts)?;
        let dims: Vec<Vec<usize>> = expected
            .iter()
            .map(|row| row.iter().map(|s| s.nullspace_dim).collect())
            .collect();
        let divergent: Vec<Vec<bool>> = dims
            .iter()
            .map(|row| row.iter().map(|&d| d == 1).collect())
            .collect();
        is_match = r_values.iter().flatten().zip(divergent.iter().flatten()).all(|(&r, &e)| {
            if e {
                r >= DIVERGENT_RATIO
            } else {
                r < NON_DIVERGENT_RATIO
            }
        });
        expected_divergent = Some(divergent);
        expected_nullspace_dims = Some(dims);
    }

    Ok(TensorStructureReport {
        rows: rho1s.iter().map(|r| r.label.clone()).collect(),
        cols: rho2s.iter().map(|r| r.label.clone()).collect(),
        r_values,
        nullspace_dims,
        expected_divergent,
        expected_nullspace_dims,
        max_holdout_residual,
        schur,
        is_match,
    })
}

/// Known representations used to verify a learned one: tensor factors
/// (rows, trivial first) and projection targets (columns).
pub fn verification_reps(algebra: &StructureConstants) -> Result<(Vec<AlgebraRep>, Vec<AlgebraRep>)> {
    let labels = |ls: &[&str]| -> Result<Vec<AlgebraRep>> { ls.iter().map(|l| analytic_irrep(algebra, l)).collect() };
    match algebra.name() {
        Some("so3") | Some("so21") => Ok((
            labels(&["0", "1/2", "1"])?,
            labels(&["0", "1/2", "1", "3/2", "2"])?,
        )),
        Some("so31") => Ok((
            labels(&["(0,0)", "(1/2,0)", "(0,1/2)", "(1/2,1/2)"])?,
            labels(&[
                "(0,0)", "(1/2,0)", "(0,1/2)", "(1/2,1/2)", "(1,0)", "(0,1)", "(1,1/2)", "(1/2,1)", "(1,1)",
            ])?,
        )),
        _ => Err(Error::domain("verification lists exist only for built-in algebras")),
    }
}

/// Scalar multiple test: `a = λ b` for some complex `λ`, up to `tol`
/// relative to `|a|_F`.
pub fn proportional(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    let bb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if bb == 0.0 {
        return frobenius_norm(a) <= tol;
    }
    let lambda: Complex64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>() / bb;
    frobenius_norm(&(a - b * lambda)) <= tol * frobenius_norm(a)
}
