//! Reference solver: cyclic block coordinate descent with exact block updates.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::measure::Vec3;

/// Largest problem the oracle accepts, in scalar unknowns.
pub const ORACLE_MAX_UNKNOWNS: usize = 50;
const MAX_SWEEPS: usize = 2_000_000;

/// Exact minimizer of `mᵀHm − 2bᵀm + λ|m|` for symmetric positive
/// semidefinite `H`.
///
/// Zero when `|b| ≤ λ/2`. Otherwise `m = (H + uI)⁻¹ b` where `u = λ/(2|m|)`
/// solves `Σ_i β_i² u²/(σ_i + u)² = λ²/4` in the eigenbasis of `H`; the left
/// side increases in `u`, so bisection finds the root to machine precision.
pub fn block_minimize(h: &Matrix3<f64>, b: &Vec3, lambda: f64) -> Vec3 {
    let half = 0.5 * lambda;
    if b.norm() <= half {
        return Vec3::zeros();
    }
    let eig = SymmetricEigen::new(*h);
    let sigma_max = eig.eigenvalues.iter().fold(0.0f64, |a, &s| a.max(s));
    let mut sigma = [0.0; 3];
    let mut beta = [0.0; 3];
    for i in 0..3 {
        let s = eig.eigenvalues[i];
        let q = eig.eigenvectors.column(i);
        if s > 1e-13 * sigma_max {
            sigma[i] = s;
            beta[i] = q.dot(b);
        }
    }
    let target = half * half;
    let psi = |u: f64| -> f64 {
        (0..3)
            .map(|i| {
                let r = u / (sigma[i] + u);
                beta[i] * beta[i] * r * r
            })
            .sum()
    };
    if beta.iter().map(|v| v * v).sum::<f64>() <= target {
        return Vec3::zeros();
    }
    let mut lo = 0.0;
    let mut hi = sigma_max.max(f64::MIN_POSITIVE);
    while psi(hi) <= target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if psi(mid) > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    let mut m = Vec3::zeros();
    for i in 0..3 {
        if beta[i] != 0.0 {
            m += eig.eigenvectors.column(i) * (beta[i] / (sigma[i] + u));
        }
    }
    m
}

/// Cyclic block coordinate descent, node by node, with exact block
/// minimization; runs until a sweep lowers the objective by less than
/// `1e-14 (1 + |F|)`. Deterministic. Refuses problems larger than
/// [`ORACLE_MAX_UNKNOWNS`].
pub fn oracle_solve(model: &ForwardModel, f: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = model.num_unknowns();
    if n > ORACLE_MAX_UNKNOWNS {
        return Err(Error::OracleTooLarge { unknowns: n, limit: ORACLE_MAX_UNKNOWNS });
    }
    super::check_inputs(model, f, lambda)?;
    let w = model.sensors().weights();
    let nodes = model.num_nodes();
    let blocks: Vec<[Vec<f64>; 3]> = (0..nodes).map(|k| model.node_columns(k)).collect();
    let grams: Vec<Matrix3<f64>> = blocks
        .iter()
        .map(|cols| {
            Matrix3::from_fn(|i, j| cols[i].iter().zip(&cols[j]).zip(w).map(|((a, b), w)| a * b * w).sum())
        })
        .collect();

    let mut m = vec![0.0; n];
    let mut r = f.to_vec();
    let objective = |r: &[f64], m: &[f64]| model.inner(r, r) + lambda * super::block_norms_sum(m);
    let mut prev = objective(&r, &m);
    for _ in 0..MAX_SWEEPS {
        for k in 0..nodes {
            let cols = &blocks[k];
            let old = Vec3::new(m[3 * k], m[3 * k + 1], m[3 * k + 2]);
            let mut b = grams[k] * old;
            for c in 0..3 {
                b[c] += cols[c].iter().zip(&r).zip(w).map(|((a, r), w)| a * r * w).sum::<f64>();
            }
            let new = block_minimize(&grams[k], &b, lambda);
            let d = new - old;
            if d != Vec3::zeros() {
                for c in 0..3 {
                    for (ri, a) in r.iter_mut().zip(&cols[c]) {
                        *ri -= d[c] * a;
                    }
                }
                m[3 * k..3 * k + 3].copy_from_slice(new.as_slice());
            }
        }
        r = super::residual(model, f, &m)?;
        let cur = objective(&r, &m);
        if prev - cur < 1e-14 * (1.0 + cur.abs()) {
            break;
        }
        prev = cur;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_minimize_isotropic_closed_form() {
        // H = h I gives m = soft(b, λ/2) / h.
        let h = 2.5;
        let b = Vec3::new(1.0, -2.0, 0.5);
        let lambda = 1.2;
        let m = block_minimize(&(Matrix3::identity() * h), &b, lambda);
        let expected = crate::solver::block_soft_threshold(&b, 0.5 * lambda) / h;
        assert!((m - expected).norm() <= 1e-14);
    }

    #[test]
    fn block_minimize_satisfies_stationarity() {
        let a = Matrix3::new(1.0, 0.2, -0.3, 0.0, 0.7, 0.1, 0.4, 0.0, 0.2);
        let h = a.transpose() * a;
        let b = Vec3::new(0.3, -1.1, 0.8);
        let lambda = 0.4;
        let m = block_minimize(&h, &b, lambda);
        assert!(m.norm() > 0.0);
        // 2(Hm − b) + λ m/|m| = 0
        let g = 2.0 * (h * m - b) + lambda * m / m.norm();
        assert!(g.norm() <= 1e-12, "stationarity residual {}", g.norm());
        assert_eq!(block_minimize(&h, &(b * 0.1), 1.0), Vec3::zeros());
    }

    #[test]
    fn block_minimize_rank_one() {
        let k = Vec3::new(0.3, -0.5, 0.8);
        let h = k * k.transpose() * 2.0;
        let b = k * 3.0;
        let lambda = 0.5;
        let m = block_minimize(&h, &b, lambda);
        let g = 2.0 * (h * m - b) + lambda * m / m.norm();
        assert!(g.norm() <= 1e-12, "stationarity residual {}", g.norm());
    }
}
