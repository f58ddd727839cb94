//! Shared helpers for the integration tests: random instances with a known
//! feasible point and an independent constrained KL minimizer.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use purfit::constraints::ConstraintSet;
use purfit::{Feature, JointTable, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Schema with `ny` labels, protected features of the given sizes and
/// unprotected features of the given sizes.
pub fn schema(ny: usize, protected: &[usize], unprotected: &[usize]) -> Arc<Schema> {
    let cats = |n: usize| (0..n).map(|i| format!("c{i}")).collect::<Vec<_>>();
    Arc::new(
        Schema::new(
            Feature::new("y", cats(ny)),
            protected
                .iter()
                .enumerate()
                .map(|(i, &n)| Feature::new(format!("s{i}"), cats(n)))
                .collect(),
            unprotected
                .iter()
                .enumerate()
                .map(|(i, &n)| Feature::new(format!("x{i}"), cats(n)))
                .collect(),
        )
        .unwrap(),
    )
}

/// Dirichlet(1) draw (normalized exponentials), floored at `floor`.
pub fn dirichlet<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + floor).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// A strictly positive random table.
pub fn random_positive<R: Rng>(rng: &mut R, schema: &Arc<Schema>) -> JointTable {
    JointTable::new(schema.clone(), dirichlet(rng, schema.n_cells(), 0.05)).unwrap()
}

/// A biased empirical table `f` together with a strictly positive point `p`
/// of its PUR set.
///
/// `p = a(y) b(s) c(x | y, s)` satisfies parity. `f = p + eps e(x) D(y, s)`
/// with `D` double-centered keeps `f`'s `(y, x)`, `(s, x)`, `y` and `s`
/// marginals equal to `p`'s while biasing `f(y, s)`.
pub struct FeasibleInstance {
    pub f: JointTable,
    pub interior: JointTable,
}

pub fn feasible_instance<R: Rng>(rng: &mut R, schema: &Arc<Schema>) -> FeasibleInstance {
    let (ny, ns, nx) = (schema.n_labels(), schema.n_sensitive(), schema.n_unprotected());
    let a = dirichlet(rng, ny, 0.2);
    let b = dirichlet(rng, ns, 0.2);
    let mut p = vec![0.0; schema.n_cells()];
    for y in 0..ny {
        for s in 0..ns {
            let c = dirichlet(rng, nx, 0.1);
            for x in 0..nx {
                p[schema.join(y, s, x)] = a[y] * b[s] * c[x];
            }
        }
    }
    // double-centered D
    let mut d = vec![vec![0.0; ns]; ny];
    for row in d.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
    }
    let row_means: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / ns as f64).collect();
    let col_means: Vec<f64> = (0..ns).map(|s| d.iter().map(|r| r[s]).sum::<f64>() / ny as f64).collect();
    let grand = row_means.iter().sum::<f64>() / ny as f64;
    for y in 0..ny {
        for s in 0..ns {
            d[y][s] += grand - row_means[y] - col_means[s];
        }
    }
    let e: Vec<f64> = (0..nx).map(|_| 0.5 + rng.random::<f64>()).collect();
    // largest eps keeping f >= 0.2 p
    let mut eps = f64::INFINITY;
    for y in 0..ny {
        for s in 0..ns {
            for x in 0..nx {
                let delta = e[x] * d[y][s];
                if delta < 0.0 {
                    eps = eps.min(0.8 * p[schema.join(y, s, x)] / -delta);
                }
            }
        }
    }
    let eps = if eps.is_finite() { eps } else { 1.0 };
    let f: Vec<f64> = (0..p.len())
        .map(|i| {
            let (y, s, x) = schema.split(i);
            p[i] + eps * e[x] * d[y][s]
        })
        .collect();
    FeasibleInstance {
        f: JointTable::from_weights(schema.clone(), f).unwrap(),
        interior: JointTable::from_weights(schema.clone(), p).unwrap(),
    }
}

/// Dense 0/1 matrix of the active constraint rows and their targets.
pub fn constraint_matrix(set: &ConstraintSet) -> (DMatrix<f64>, DVector<f64>) {
    let n = set.schema().n_cells();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut b = Vec::new();
    for c in set.constraints() {
        for m in 0..c.target().len() {
            if !c.is_active(m) {
                continue;
            }
            rows.push((0..n).map(|i| if c.cell_map()[i] == m { 1.0 } else { 0.0 }).collect());
            b.push(c.target().values()[m]);
        }
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    (a, DVector::from_vec(b))
}

fn objective(p: &DVector<f64>, q0: &DVector<f64>) -> f64 {
    p.iter().zip(q0.iter()).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

/// Minimizes `D(p || q0)` over `{p : A p = b}` by damped Newton steps in the
/// null space of `A`, starting from the strictly positive feasible `start`.
/// All cells must be free (no forced zeros) and `q0` strictly positive.
pub fn kl_oracle(q0: &JointTable, set: &ConstraintSet, start: &JointTable) -> Vec<f64> {
    assert_eq!(set.n_forced_zero(), 0, "oracle handles full support only");
    let (a, b) = constraint_matrix(set);
    let n = q0.len();
    let q0 = DVector::from_column_slice(q0.values());
    let mut p = DVector::from_column_slice(start.values());
    assert!((&a * &p - &b).amax() < 1e-12, "start point must be feasible");
    assert!(p.iter().all(|&v| v > 0.0));

    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let scale = eig.eigenvalues.amax().max(1.0);
    let null: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() < 1e-9 * scale).collect();
    if null.is_empty() {
        return p.iter().copied().collect();
    }
    let z = DMatrix::from_fn(n, null.len(), |i, j| eig.eigenvectors[(i, null[j])]);

    for _ in 0..200 {
        let w = p.zip_map(&q0, |pi, qi| (pi / qi).ln() + 1.0);
        let g = z.transpose() * &w;
        if g.amax() < 1e-15 {
            break;
        }
        let inv_p = DMatrix::from_diagonal(&p.map(|v| 1.0 / v));
        let h = z.transpose() * inv_p * &z;
        let dz = h.cholesky().expect("hessian is positive definite").solve(&(-&g));
        let dp = &z * &dz;
        let mut t = 1.0;
        while (0..n).any(|i| p[i] + t * dp[i] <= 0.0) {
            t *= 0.5;
        }
        if g.amax() > 1e-8 {
            let f0 = objective(&p, &q0);
            let slope = g.dot(&dz);
            while t > 1e-12 && objective(&(&p + t * &dp), &q0) > f0 + 1e-4 * t * slope {
                t *= 0.5;
            }
        }
        let next = &p + t * &dp;
        let moved = (&next - &p).amax();
        p = next;
        if moved < 1e-17 {
            break;
        }
    }
    p.iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
