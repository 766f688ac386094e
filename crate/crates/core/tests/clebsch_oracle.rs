//! Clebsch-Gordan solutions checked against the infinitesimal constraint
//! `C (T⊗1 + 1⊗T) = T₃ C` solved by nalgebra's SVD.

use lierep::clebsch::{cg_solve, proportional, tensor_structure_report, verification_reps, CgOptions};
use lierep::numerics::{identity, kron, CMatrix};
use lierep::reps::{rep_so21, rep_so31, spin_rep_so3, AlgebraRep, Spin};

/// Nullspace of the generator-level constraints, as `n3 × n1n2` matrices.
fn algebra_nullspace(r1: &AlgebraRep, r2: &AlgebraRep, r3: &AlgebraRep) -> Vec<CMatrix> {
    let (n1, n2, n3) = (r1.dim(), r2.dim(), r3.dim());
    let n = n1 * n2;
    let mut blocks = Vec::new();
    for ((a, b), c) in r1.generators.iter().zip(&r2.generators).zip(&r3.generators) {
        let t12 = kron(a, &identity(n2)) + kron(&identity(n1), b);
        // vec_row(C X) = (I ⊗ Xᵀ) vec_row(C); vec_row(Y C) = (Y ⊗ I) vec_row(C).
        blocks.push(kron(&identity(n3), &t12.transpose()) - kron(c, &identity(n)));
    }
    let rows = blocks.len() * n3 * n;
    let mut stacked = CMatrix::zeros(rows, n3 * n);
    for (k, b) in blocks.iter().enumerate() {
        stacked.view_mut((k * n3 * n, 0), (n3 * n, n3 * n)).copy_from(b);
    }
    let gram = stacked.adjoint() * &stacked;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1.0);
    (0..n3 * n)
        .filter(|&k| eig.eigenvalues[k] <= 1e-10 * scale)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            CMatrix::from_fn(n3, n, |r, c| v[r * n + c])
        })
        .collect()
}

#[test]
fn spin_one_squared_to_spin_two_matches_oracle() {
    let one = spin_rep_so3(Spin::ONE);
    let two = spin_rep_so3(Spin::from_twice(4));
    let sol = cg_solve(&one, &one, &two, &CgOptions::default()).unwrap();
    assert_eq!(sol.nullspace_dim, 1);
    let oracle = algebra_nullspace(&one, &one, &two);
    assert_eq!(oracle.len(), 1);
    assert!(proportional(&sol.basis[0], &oracle[0], 1e-8));
    assert!(sol.holdout_ok());
}

#[test]
fn nullspace_dimensions_match_oracle_across_grids() {
    let cases: Vec<(AlgebraRep, AlgebraRep, AlgebraRep)> = vec![
        (spin_rep_so3(Spin::ONE), spin_rep_so3(Spin::ONE), spin_rep_so3(Spin::ZERO)),
        (spin_rep_so3(Spin::ONE), spin_rep_so3(Spin::ONE), spin_rep_so3(Spin::ONE)),
        (spin_rep_so3(Spin::HALF), spin_rep_so3(Spin::ONE), spin_rep_so3(Spin::ONE)),
        (spin_rep_so3(Spin::HALF), spin_rep_so3(Spin::HALF), spin_rep_so3(Spin::from_twice(4))),
        (rep_so21(Spin::ONE), rep_so21(Spin::ONE), rep_so21(Spin::ONE)),
        (rep_so21(Spin::HALF), rep_so21(Spin::HALF), rep_so21(Spin::ONE)),
        (rep_so31(Spin::HALF, Spin::ZERO), rep_so31(Spin::ZERO, Spin::HALF), rep_so31(Spin::HALF, Spin::HALF)),
        (rep_so31(Spin::HALF, Spin::HALF), rep_so31(Spin::HALF, Spin::HALF), rep_so31(Spin::ONE, Spin::ZERO)),
        (rep_so31(Spin::HALF, Spin::ZERO), rep_so31(Spin::HALF, Spin::ZERO), rep_so31(Spin::ZERO, Spin::HALF)),
    ];
    for (a, b, c) in &cases {
        let oracle = algebra_nullspace(a, b, c);
        let sol = cg_solve(a, b, c, &CgOptions::default()).unwrap();
        assert_eq!(sol.nullspace_dim, oracle.len(), "{} ⊗ {} → {}", a.label, b.label, c.label);
        if oracle.len() == 1 {
            assert!(proportional(&sol.basis[0], &oracle[0], 1e-8));
        }
    }
}

#[test]
fn analytic_irreps_pass_their_own_verification() {
    for (rep, name) in [
        (spin_rep_so3(Spin::ONE), "1"),
        (rep_so21(Spin::ONE), "1"),
        (rep_so31(Spin::HALF, Spin::HALF), "(1/2,1/2)"),
    ] {
        let (rows, cols) = verification_reps(&rep.algebra).unwrap();
        let report = tensor_structure_report(&rep, &rows, &cols, &CgOptions::default()).unwrap();
        assert!(report.is_match, "{name}");
        assert_eq!(report.matched_label(), Some(name));
    }
}

#[test]
fn trivial_constraints_vanish() {
    let t = AlgebraRep::trivial(&spin_rep_so3(Spin::ONE).algebra, 1);
    let sol = cg_solve(&t, &t, &t, &CgOptions::default()).unwrap();
    assert_eq!(sol.nullspace_dim, 1);
    assert_eq!(sol.basis[0][(0, 0)].norm(), 1.0);
}
