//! Atomic vector measures `μ = Σ_k m_k δ_{x_k}`.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// A point dipole: location and moment (A·m² in SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: Point3,
    pub moment: Vec3,
}

impl Atom {
    pub fn new(location: Point3, moment: Vec3) -> Self {
        Atom { location, moment }
    }
}

/// Bit-level key for exact location matching; `-0.0` and `0.0` collapse.
pub(crate) fn location_key(p: &Point3) -> [u64; 3] {
    let norm = |v: f64| if v == 0.0 { 0.0f64.to_bits() } else { v.to_bits() };
    [norm(p.x), norm(p.y), norm(p.z)]
}

/// Finite list of atoms at pairwise distinct locations, none with zero moment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteVectorMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteVectorMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates the atoms, dropping those with zero moment. Duplicate
    /// locations and non-finite coordinates are rejected.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(atoms.len());
        let mut kept = Vec::with_capacity(atoms.len());
        for atom in atoms {
            let p = atom.location;
            if !(p.coords.iter().all(|v| v.is_finite()) && atom.moment.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite(format!("atom at ({}, {}, {})", p.x, p.y, p.z)));
            }
            if !seen.insert(location_key(&p)) {
                return Err(Error::DuplicateLocation { x: p.x, y: p.y, z: p.z });
            }
            if atom.moment != Vec3::zeros() {
                kept.push(atom);
            }
        }
        Ok(DiscreteVectorMeasure { atoms: kept })
    }

    /// Builds a measure by summing moments of atoms that share a location.
    pub fn merged(atoms: impl IntoIterator<Item = Atom>) -> Result<Self> {
        let mut order: Vec<Point3> = Vec::new();
        let mut sums: HashMap<[u64; 3], Vec3> = HashMap::new();
        for atom in atoms {
            let key = location_key(&atom.location);
            sums.entry(key)
                .and_modify(|m| *m += atom.moment)
                .or_insert_with(|| {
                    order.push(atom.location);
                    atom.moment
                });
        }
        let atoms = order
            .into_iter()
            .map(|p| Atom::new(p, sums[&location_key(&p)]))
            .collect();
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn tv_norm(&self) -> f64 {
        tv_norm(self)
    }

    pub fn scaled(&self, t: f64) -> Self {
        if t == 0.0 {
            return Self::empty();
        }
        DiscreteVectorMeasure {
            atoms: self.atoms.iter().map(|a| Atom::new(a.location, a.moment * t)).collect(),
        }
    }

    /// `self + other`, merging atoms at equal locations.
    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::merged(self.atoms.iter().chain(other.atoms.iter()).copied())
    }

    /// `self − other`, merging atoms at equal locations.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }
}

/// `‖μ‖_TV = Σ_k |m_k|` with Euclidean moment norms.
pub fn tv_norm(mu: &DiscreteVectorMeasure) -> f64 {
    mu.atoms.iter().map(|a| a.moment.norm()).fold(0.0, |s, n| s + n)
}

/// Atom locations of `μ`; duplicate-free by construction.
pub fn support_points(mu: &DiscreteVectorMeasure) -> Vec<Point3> {
    mu.atoms.iter().map(|a| a.location).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(p: [f64; 3], m: [f64; 3]) -> Atom {
        Atom::new(Point3::new(p[0], p[1], p[2]), Vec3::new(m[0], m[1], m[2]))
    }

    #[test]
    fn tv_norm_examples() {
        let mu = DiscreteVectorMeasure::new(vec![
            atom([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            atom([1.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(tv_norm(&mu), 3.0);
        assert_eq!(tv_norm(&DiscreteVectorMeasure::empty()), 0.0);
        assert!(tv_norm(&DiscreteVectorMeasure::empty()).is_sign_positive());
        let mu = DiscreteVectorMeasure::new(vec![atom([0.0, 0.0, 0.0], [3.0, 4.0, 0.0])]).unwrap();
        assert_eq!(tv_norm(&mu), 5.0);
    }

    #[test]
    fn zero_moments_are_dropped() {
        let mu = DiscreteVectorMeasure::new(vec![
            atom([0.0, 0.0, 0.0], [0.0, 0.0, 0.0]),
            atom([1.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(mu.len(), 1);
    }

    #[test]
    fn duplicates_and_nan_rejected() {
        let err = DiscreteVectorMeasure::new(vec![
            atom([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            atom([-0.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
        ]);
        assert!(matches!(err, Err(Error::DuplicateLocation { .. })));
        let err = DiscreteVectorMeasure::new(vec![atom([f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0])]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn support_points_examples() {
        assert!(support_points(&DiscreteVectorMeasure::empty()).is_empty());
        let mu = DiscreteVectorMeasure::new(vec![atom([1.0, 2.0, 3.0], [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(support_points(&mu), vec![Point3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn merge_cancels_opposite_moments() {
        let mu = DiscreteVectorMeasure::merged(vec![
            atom([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            atom([0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]),
        ])
        .unwrap();
        assert!(mu.is_empty());
    }
}
