use nalgebra::DMatrix;
use serde::Serialize;

use crate::clebsch::{cg_solve_resampling, derive_seed, CgOptions};
use crate::numerics::{c64, max_abs_diff, CMatrix, Complex64};
use crate::reps::{spacetime_rep, AlgebraRep};
use crate::{Error, Result};

/// Number of independent intertwiners found for one `(q, l, m)` triple.
#[derive(Debug, Clone, Serialize)]
pub struct CgBlock {
    pub q: usize,
    pub l: usize,
    pub m: usize,
    pub count: usize,
    pub max_holdout_residual: f64,
}

/// The representations a network's activations live in, with all
/// Clebsch-Gordan tensors `C_{g,qr,ls,mt}` between them.
///
/// Activations of every representation are concatenated into one index of
/// length [`RepCatalog::total_dim`]; [`RepCatalog::cg_entries`] lists the
/// nonzero entries of `C` in that flat index, zero-padded up to the
/// largest degeneracy.
#[derive(Debug, Clone)]
pub struct RepCatalog {
    pub reps: Vec<AlgebraRep>,
    /// `q'`: the representation carrying point coordinates.
    pub embedding: usize,
    /// The one-dimensional trivial representation used by the readout.
    pub trivial: usize,
    pub spatial_dims: usize,
    /// Maps spacetime coordinates `(t, x⃗)` into the `q'` representation
    /// space.
    pub embed: CMatrix,
    /// The defining representation on `(t, x⃗)`.
    pub spacetime: AlgebraRep,
    pub blocks: Vec<CgBlock>,
    offsets: Vec<usize>,
    owner: Vec<usize>,
    degeneracy: usize,
    cg_entries: Vec<(usize, usize, usize, usize, Complex64)>,
}

fn spatial_dims_of(rep: &AlgebraRep) -> Result<usize> {
    match rep.algebra.name() {
        Some("so21") => Ok(2),
        Some("so31") => Ok(3),
        _ => Err(Error::domain("network representations must belong to so21 or so31")),
    }
}

impl RepCatalog {
    /// Builds the catalog, solving for every CG tensor with `opts`.
    pub fn new(reps: Vec<AlgebraRep>, embedding: usize, opts: &CgOptions) -> Result<Self> {
        let first = reps.first().ok_or_else(|| Error::domain("empty representation catalog"))?;
        let spatial_dims = spatial_dims_of(first)?;
        let spacetime = spacetime_rep(spatial_dims)?;
        for r in &reps {
            r.check_same_algebra(&spacetime)?;
        }
        let q_prime = reps
            .get(embedding)
            .ok_or_else(|| Error::domain(format!("embedding index {embedding} out of range")))?;
        if q_prime.dim() != spatial_dims + 1 {
            return Err(Error::domain(format!(
                "embedding representation has dimension {}, expected {}",
                q_prime.dim(),
                spatial_dims + 1
            )));
        }
        let trivial = reps
            .iter()
            .position(|r| r.dim() == 1 && r.generators.iter().all(|g| g[(0, 0)] == Complex64::ZERO))
            .ok_or_else(|| Error::domain("catalog needs a one-dimensional trivial representation"))?;

        let same = q_prime
            .generators
            .iter()
            .zip(&spacetime.generators)
            .all(|(a, b)| max_abs_diff(a, b) <= 1e-14);
        let embed = if same {
            CMatrix::identity(spatial_dims + 1, spatial_dims + 1)
        } else {
            let one = AlgebraRep::trivial(&spacetime.algebra, 1);
            let sol = cg_solve_resampling(&one, &spacetime, q_prime, opts)?;
            if sol.nullspace_dim != 1 || !sol.holdout_ok() {
                return Err(Error::domain(
                    "embedding representation is not isomorphic to the spacetime vector representation",
                ));
            }
            &sol.basis[0] * c64((q_prime.dim() as f64).sqrt(), 0.0)
        };

        let mut offsets = Vec::with_capacity(reps.len());
        let mut owner = Vec::new();
        for (q, r) in reps.iter().enumerate() {
            offsets.push(owner.len());
            owner.extend(std::iter::repeat_n(q, r.dim()));
        }

        let n = reps.len();
        let triples: Vec<(usize, usize, usize)> = (0..n)
            .flat_map(|q| (0..n).flat_map(move |l| (0..n).map(move |m| (q, l, m))))
            .collect();
        let solutions = opts
            .execution
            .map(triples.len(), |k| {
                let (q, l, m) = triples[k];
                let cell = CgOptions {
                    seed: derive_seed(opts.seed, k as u64),
                    ..*opts
                };
                cg_solve_resampling(&reps[l], &reps[m], &reps[q], &cell)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let mut blocks = Vec::new();
        let mut cg_entries = Vec::new();
        let mut degeneracy = 1;
        for (&(q, l, m), sol) in triples.iter().zip(&solutions) {
            if !sol.holdout_ok() {
                return Err(Error::numerical(format!(
                    "CG tensor for ({l} ⊗ {m} → {q}) fails the held-out check: {:?}",
                    sol.holdout_residuals
                )));
            }
            let nm = reps[m].dim();
            for (g, c) in sol.basis.iter().enumerate() {
                for r in 0..reps[q].dim() {
                    for s in 0..reps[l].dim() {
                        for t in 0..nm {
                            let v = c[(r, s * nm + t)];
                            if v != Complex64::ZERO {
                                cg_entries.push((g, offsets[q] + r, offsets[l] + s, offsets[m] + t, v));
                            }
                        }
                    }
                }
            }
            degeneracy = degeneracy.max(sol.nullspace_dim);
            blocks.push(CgBlock {
                q,
                l,
                m,
                count: sol.nullspace_dim,
                max_holdout_residual: sol.holdout_residuals.iter().copied().fold(0.0, f64::max),
            });
        }

        Ok(Self {
            reps,
            embedding,
            trivial,
            spatial_dims,
            embed,
            spacetime,
            blocks,
            offsets,
            owner,
            degeneracy,
            cg_entries,
        })
    }

    /// Trivial representation plus the defining representation on
    /// `(t, x⃗)`.
    pub fn spacetime(spatial_dims: usize) -> Result<Self> {
        let vector = spacetime_rep(spatial_dims)?;
        let trivial = AlgebraRep::trivial(&vector.algebra, 1);
        Self::new(vec![trivial, vector], 1, &CgOptions::default())
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    /// Length of the concatenated representation index.
    pub fn total_dim(&self) -> usize {
        self.owner.len()
    }

    pub fn offset(&self, q: usize) -> usize {
        self.offsets[q]
    }

    /// Representation owning flat index `r`.
    pub fn owner(&self, r: usize) -> usize {
        self.owner[r]
    }

    /// Largest number of intertwiners of any triple (the extent of `g`).
    pub fn degeneracy(&self) -> usize {
        self.degeneracy
    }

    /// Nonzero `(g, R, S, T, C)` over flat indices.
    pub fn cg_entries(&self) -> &[(usize, usize, usize, usize, Complex64)] {
        &self.cg_entries
    }

    /// Dense `C[g][R][S][T]`.
    pub fn cg_dense(&self) -> Vec<Complex64> {
        let d = self.total_dim();
        let mut out = vec![Complex64::ZERO; self.degeneracy * d * d * d];
        for &(g, r, s, t, v) in &self.cg_entries {
            out[((g * d + r) * d + s) * d + t] = v;
        }
        out
    }

    /// The group element `exp(Σ b_i T_i)` in the spacetime representation
    /// (real) and in each catalog representation.
    pub fn group_action(&self, coeffs: &[f64]) -> Result<(DMatrix<f64>, Vec<CMatrix>)> {
        let lambda = self.spacetime.exp(coeffs)?.map(|z| z.re);
        let per_rep = self.reps.iter().map(|r| r.exp(coeffs)).collect::<Result<_>>()?;
        Ok((lambda, per_rep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clebsch::{group_elements, intertwiner_residual, sample_coefficients, tensor_elements};
    use crate::reps::{rep_so21, rep_so31, Spin};

    #[test]
    fn spacetime_catalog_blocks() {
        let cat = RepCatalog::spacetime(2).unwrap();
        assert_eq!(cat.total_dim(), 4);
        assert_eq!(cat.degeneracy(), 1);
        let count = |q, l, m| cat.blocks.iter().find(|b| (b.q, b.l, b.m) == (q, l, m)).unwrap().count;
        // 0⊗0→0, 0⊗v→v, v⊗0→v, v⊗v→0 (metric), v⊗v→v (cross product).
        assert_eq!(count(0, 0, 0), 1);
        assert_eq!(count(1, 0, 1), 1);
        assert_eq!(count(1, 1, 0), 1);
        assert_eq!(count(0, 1, 1), 1);
        assert_eq!(count(1, 1, 1), 1);
        assert_eq!(count(0, 0, 1), 0);
        let cat3 = RepCatalog::spacetime(3).unwrap();
        let count3 = |q, l, m| cat3.blocks.iter().find(|b| (b.q, b.l, b.m) == (q, l, m)).unwrap().count;
        assert_eq!(count3(1, 1, 1), 0);
        assert_eq!(count3(0, 1, 1), 1);
    }

    #[test]
    fn stored_tensors_intertwine() {
        let cat = RepCatalog::spacetime(3).unwrap();
        let coeffs = sample_coefficients(6, 3, 0.5, 77).unwrap();
        let d = cat.total_dim();
        let dense = cat.cg_dense();
        for b in cat.blocks.iter().filter(|b| b.count > 0) {
            let (nq, nl, nm) = (cat.reps[b.q].dim(), cat.reps[b.l].dim(), cat.reps[b.m].dim());
            let e12 = tensor_elements(
                &group_elements(&cat.reps[b.l], &coeffs).unwrap(),
                &group_elements(&cat.reps[b.m], &coeffs).unwrap(),
            )
            .unwrap();
            let e3 = group_elements(&cat.reps[b.q], &coeffs).unwrap();
            for g in 0..b.count {
                let c = CMatrix::from_fn(nq, nl * nm, |r, st| {
                    let (s, t) = (st / nm, st % nm);
                    dense[((g * d + cat.offset(b.q) + r) * d + cat.offset(b.l) + s) * d + cat.offset(b.m) + t]
                });
                assert!(intertwiner_residual(&c, &e12, &e3).unwrap() <= 1e-6);
            }
        }
    }

    #[test]
    fn analytic_vector_needs_embedding() {
        let v = rep_so21(Spin::ONE);
        let cat = RepCatalog::new(vec![AlgebraRep::trivial(&v.algebra, 1), v.clone()], 1, &CgOptions::default()).unwrap();
        let coeffs = [0.3, -0.2, 0.4];
        let (lambda, per_rep) = cat.group_action(&coeffs).unwrap();
        let lambda_c = lambda.map(|x| c64(x, 0.0));
        // E Λ = ρ(β) E
        assert!(max_abs_diff(&(&cat.embed * lambda_c), &(&per_rep[1] * &cat.embed)) <= 1e-10);
    }

    #[test]
    fn rejects_bad_catalogs() {
        let v = rep_so31(Spin::HALF, Spin::HALF);
        let t = AlgebraRep::trivial(&v.algebra, 1);
        assert!(RepCatalog::new(vec![t.clone(), v.clone()], 0, &CgOptions::default()).is_err());
        assert!(RepCatalog::new(vec![v.clone()], 0, &CgOptions::default()).is_err());
        let wrong = rep_so31(Spin::HALF, Spin::ZERO);
        assert!(RepCatalog::new(vec![t, wrong], 1, &CgOptions::default()).is_err());
        assert!(RepCatalog::spacetime(4).is_err());
    }
}
