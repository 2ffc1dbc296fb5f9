//! Product quadrature on the unit sphere `S^{N-1}` for `N ∈ {2, 3}`.
//!
//! In three dimensions the nodes are Gauss–Legendre in `μ = cos(polar)`
//! times a uniform azimuthal grid; in two dimensions a uniform angular grid.
//! Azimuthal nodes sit at cell midpoints, `φ_k = 2π(k + ½)/N_φ`, which keeps
//! every node off the coordinate planes.

use crate::{Error, Real, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Tensor-product sphere quadrature.
///
/// Node `(j, k)` has flat index `j * azimuth + k`; in two dimensions
/// `polar == 1`.
#[derive(Clone, Debug)]
pub struct SphereGrid<T, const N: usize> {
    pub polar: usize,
    pub azimuth: usize,
    /// `cos(polar angle)` per ring (three dimensions only).
    pub mu: Vec<T>,
    /// Azimuthal angle per column.
    pub phi: Vec<T>,
    pub nodes: Vec<[T; N]>,
    pub weights: Vec<T>,
}

impl<T: Real, const N: usize> SphereGrid<T, N> {
    /// Builds the grid. `polar` is ignored for `N = 2`.
    pub fn new(polar: usize, azimuth: usize) -> Result<Self> {
        if azimuth < 4 {
            return Err(Error::Precondition(format!("azimuthal resolution must be at least 4, got {azimuth}")));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let phi_f: Vec<f64> = (0..azimuth).map(|k| two_pi * (k as f64 + 0.5) / azimuth as f64).collect();
        let dphi = two_pi / azimuth as f64;
        match N {
            2 => {
                let mut nodes = Vec::with_capacity(azimuth);
                for &p in &phi_f {
                    let mut v = [T::zero(); N];
                    v[0] = T::of(p.cos());
                    v[1] = T::of(p.sin());
                    nodes.push(v);
                }
                Ok(Self {
                    polar: 1,
                    azimuth,
                    mu: vec![T::zero()],
                    phi: phi_f.iter().map(|&p| T::of(p)).collect(),
                    nodes,
                    weights: vec![T::of(dphi); azimuth],
                })
            }
            3 => {
                if polar < 4 {
                    return Err(Error::Precondition(format!("polar resolution must be at least 4, got {polar}")));
                }
                let (mu, wmu) = gauss_legendre(polar);
                let mut nodes = Vec::with_capacity(polar * azimuth);
                let mut weights = Vec::with_capacity(polar * azimuth);
                for j in 0..polar {
                    let st = (1.0 - mu[j] * mu[j]).max(0.0).sqrt();
                    for &p in &phi_f {
                        let mut v = [T::zero(); N];
                        v[0] = T::of(st * p.cos());
                        v[1] = T::of(st * p.sin());
                        v[2] = T::of(mu[j]);
                        nodes.push(v);
                        weights.push(T::of(wmu[j] * dphi));
                    }
                }
                Ok(Self {
                    polar,
                    azimuth,
                    mu: mu.iter().map(|&m| T::of(m)).collect(),
                    phi: phi_f.iter().map(|&p| T::of(p)).collect(),
                    nodes,
                    weights,
                })
            }
            _ => Err(Error::Precondition(format!("sphere quadrature supports dimensions 2 and 3, got {N}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.azimuth + k
    }

    /// `Σ w_a f(θ_a)`.
    pub fn integrate<F: Fn(&[T; N]) -> T>(&self, f: F) -> T {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| *w * f(x)).sum()
    }

    /// Like [`SphereGrid::integrate`] with a fallible integrand.
    pub fn try_integrate<F: Fn(&[T; N]) -> Result<T>>(&self, f: F) -> Result<T> {
        let mut s = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s = s + *w * f(x)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(6);
        for deg in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn sphere_area() {
        let g = SphereGrid::<f64, 3>::new(8, 16).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        let c = SphereGrid::<f64, 2>::new(0, 16).unwrap();
        assert!((c.weights.iter().sum::<f64>() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
