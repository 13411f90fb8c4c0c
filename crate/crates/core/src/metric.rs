//! Distances between measures and between point sets.

use rayon::prelude::*;
use serde::Serialize;

use crate::measure::{DiscreteVectorMeasure, Point3, Vec3};
use crate::partition::Aabb;

/// Tensor-product cosine test functions `Φ_n = φ_{j}(x) e_c` on a box, with
/// `φ_j(x) = Π_axis cos(π j_axis (x_axis − lo)/len)`, enumerated by total
/// degree `j_x + j_y + j_z`, then lexicographically, then by component `c`.
/// Every `Φ_n` has sup-norm exactly 1.
#[derive(Debug, Clone)]
pub struct TestFunctionFamily {
    region: Aabb,
    terms: Vec<([u32; 3], usize)>,
}

impl TestFunctionFamily {
    pub const DEFAULT_SIZE: usize = 64;

    /// Panics if `size == 0`.
    pub fn new(region: Aabb, size: usize) -> Self {
        assert!(size > 0, "test function family must be nonempty");
        let mut terms = Vec::with_capacity(size);
        let mut degree = 0u32;
        'outer: loop {
            for jx in 0..=degree {
                for jy in 0..=(degree - jx) {
                    let jz = degree - jx - jy;
                    for c in 0..3 {
                        terms.push(([jx, jy, jz], c));
                        if terms.len() == size {
                            break 'outer;
                        }
                    }
                }
            }
            degree += 1;
        }
        TestFunctionFamily { region, terms }
    }

    pub fn with_default_size(region: Aabb) -> Self {
        Self::new(region, Self::DEFAULT_SIZE)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Φ_n(p)`, 0-based `n`.
    pub fn eval(&self, n: usize, p: &Point3) -> Vec3 {
        let (j, c) = self.terms[n];
        let len = self.region.lengths();
        let mut phi = 1.0;
        for a in 0..3 {
            phi *= (std::f64::consts::PI * j[a] as f64 * (p[a] - self.region.min[a]) / len[a]).cos();
        }
        let mut v = Vec3::zeros();
        v[c] = phi;
        v
    }

    /// `⟨Φ_n, μ⟩ = Σ_k Φ_n(x_k)·m_k`.
    pub fn pair(&self, n: usize, mu: &DiscreteVectorMeasure) -> f64 {
        mu.atoms().iter().map(|a| self.eval(n, &a.location).dot(&a.moment)).sum()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RDistance {
    /// Truncated weak-star metric term.
    pub weak: f64,
    /// `| ‖μ‖_TV − ‖ν‖_TV |`.
    pub tv_gap: f64,
    /// Upper bound on the omitted tail of the weak-star series.
    pub truncation_bound: f64,
}

impl RDistance {
    pub fn value(&self) -> f64 {
        self.weak + self.tv_gap
    }
}

/// Proxy for the R-distance `𝔡(μ,ν) + |‖μ‖_TV − ‖ν‖_TV|`, with the weak-star
/// metric `Σ_n 2^{-n} |⟨Φ_n, μ−ν⟩| / (1 + |⟨Φ_n, μ−ν⟩|)` truncated to the
/// family. Terms are computed as `⟨Φ_n, μ⟩ − ⟨Φ_n, ν⟩`, so the result is
/// exactly symmetric.
pub fn r_distance(mu: &DiscreteVectorMeasure, nu: &DiscreteVectorMeasure, phi: &TestFunctionFamily) -> RDistance {
    let mut weak = 0.0;
    let mut weight = 0.5;
    for n in 0..phi.len() {
        let t = (phi.pair(n, mu) - phi.pair(n, nu)).abs();
        weak += weight * t / (1.0 + t);
        weight *= 0.5;
    }
    let (a, b) = (mu.tv_norm(), nu.tv_norm());
    let tail = 0.5f64.powi(phi.len() as i32);
    RDistance {
        weak,
        tv_gap: (a - b).abs(),
        truncation_bound: tail * (a + b).min(1.0),
    }
}

pub fn r_distance_proxy(mu: &DiscreteVectorMeasure, nu: &DiscreteVectorMeasure, phi: &TestFunctionFamily) -> f64 {
    r_distance(mu, nu, phi).value()
}

/// `sup_{x∈X} inf_{y∈Y} |x − y|`; 0 for empty `X`, +∞ for nonempty `X` and
/// empty `Y`.
pub fn directed_hausdorff(x: &[Point3], y: &[Point3]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    if y.is_empty() {
        return f64::INFINITY;
    }
    x.par_iter()
        .map(|p| y.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// `d_H(X, Y)`. Both empty gives 0, exactly one empty gives +∞.
pub fn hausdorff_distance(x: &[Point3], y: &[Point3]) -> f64 {
    directed_hausdorff(x, y).max(directed_hausdorff(y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff_distance(&[p(0.0, 0.0, 0.0)], &[p(0.0, 0.0, 0.0)]), 0.0);
        assert_eq!(hausdorff_distance(&[p(0.0, 0.0, 0.0)], &[p(1.0, 0.0, 0.0)]), 1.0);
        assert_eq!(hausdorff_distance(&[p(0.0, 0.0, 0.0), p(2.0, 0.0, 0.0)], &[p(1.0, 0.0, 0.0)]), 1.0);
        assert_eq!(hausdorff_distance(&[], &[]), 0.0);
        assert_eq!(hausdorff_distance(&[p(0.0, 0.0, 0.0)], &[]), f64::INFINITY);
    }

    #[test]
    fn family_has_unit_sup_norm_and_requested_size() {
        let region = Aabb::new([0.0, 0.0, -1.0], [2.0, 1.0, 0.0]).unwrap();
        let phi = TestFunctionFamily::with_default_size(region);
        assert_eq!(phi.len(), 64);
        for n in 0..phi.len() {
            // Every term attains |Φ_n| = 1 at the min corner.
            assert!((phi.eval(n, &p(0.0, 0.0, -1.0)).norm() - 1.0).abs() < 1e-15);
            assert!(phi.eval(n, &p(0.3, 0.7, -0.2)).norm() <= 1.0);
        }
    }

    #[test]
    fn r_distance_examples() {
        let region = Aabb::new([0.0; 3], [1.0; 3]).unwrap();
        let phi = TestFunctionFamily::with_default_size(region);
        let a = DiscreteVectorMeasure::new(vec![Atom::new(p(0.2, 0.3, 0.4), Vec3::x())]).unwrap();
        let b = DiscreteVectorMeasure::new(vec![Atom::new(p(0.2, 0.3, 0.4), 2.0 * Vec3::x())]).unwrap();
        assert_eq!(r_distance_proxy(&a, &a, &phi), 0.0);
        let d = r_distance(&a, &b, &phi);
        assert_eq!(d.tv_gap, 1.0);
        assert!(d.weak > 0.0);
        assert!(d.value() >= 1.0);
        assert_eq!(r_distance_proxy(&a, &b, &phi), r_distance_proxy(&b, &a, &phi));
    }
}
