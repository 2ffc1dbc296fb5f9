//! Wulff-ball geometry and the fundamental solution of the anisotropic
//! p-Laplacian.

use serde::Serialize;

use crate::linalg::{self, Vector};
use crate::norms::Norm;
use crate::sphere::SphereGrid;
use crate::{Error, Real, Result};

/// Volume and perimeter constant of the unit Wulff ball `W = {F° < 1}`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WulffData {
    pub volume: f64,
    /// `κ_{n−1} = n |W|`, the anisotropic area of `∂W`.
    pub kappa: f64,
    pub polar: usize,
    pub azimuth: usize,
}

/// `|W| = (1/n) ∫_{S^{n−1}} F°(θ)^{−n} dθ`.
pub fn wulff_volume<T: Real, const N: usize>(norm: &Norm<T, N>, grid: &SphereGrid<T, N>) -> Result<T> {
    let n = T::of_usize(N);
    let s = grid.try_integrate(|th| Ok(norm.dual_value(th)?.powi(-(N as i32))))?;
    Ok(s / n)
}

/// `κ_{n−1} = n |W|`.
pub fn kappa<T: Real, const N: usize>(norm: &Norm<T, N>, grid: &SphereGrid<T, N>) -> Result<T> {
    Ok(T::of_usize(N) * wulff_volume(norm, grid)?)
}

/// Volume and `κ` at the given sphere resolution.
pub fn wulff_data<T: Real, const N: usize>(norm: &Norm<T, N>, polar: usize, azimuth: usize) -> Result<WulffData> {
    let grid = SphereGrid::<T, N>::new(polar, azimuth)?;
    let v = wulff_volume(norm, &grid)?;
    Ok(WulffData { volume: v.f64(), kappa: (T::of_usize(N) * v).f64(), polar: grid.polar, azimuth })
}

/// The point `F_ξ(θ)` of `∂W` whose outward normal is parallel to `θ`.
pub fn wulff_boundary_point<T: Real, const N: usize>(norm: &Norm<T, N>, theta: &Vector<T, N>) -> Result<Vector<T, N>> {
    norm.gradient(theta)
}

/// Decay exponent `k = (n − p)/(p − 1)` of capacitary potentials.
pub fn decay_exponent<T: Real>(n: usize, p: T) -> T {
    (T::of_usize(n) - p) / (p - T::one())
}

/// `Cap_{F,p}(W_R) = κ_{n−1} k^{p−1} R^{n−p}`.
pub fn wulff_capacity<T: Real>(kappa: T, n: usize, p: T, radius: T) -> T {
    kappa * decay_exponent(n, p).powf(p - T::one()) * radius.powf(T::of_usize(n) - p)
}

/// `Γ_{F,p}(x) = ((p−1)/(n−p)) κ_{n−1}^{−1/(p−1)} F°(x)^{(p−n)/(p−1)}`.
#[derive(Clone, Debug)]
pub struct FundamentalSolution<T, const N: usize> {
    norm: Norm<T, N>,
    p: T,
    k: T,
    coefficient: T,
}

impl<T: Real, const N: usize> FundamentalSolution<T, N> {
    /// Requires `1 < p < n` and `κ_{n−1} > 0`.
    pub fn new(norm: Norm<T, N>, p: T, kappa: T) -> Result<Self> {
        let n = T::of_usize(N);
        if !(p > T::one() && p < n) {
            return Err(Error::Precondition(format!("fundamental solution requires 1 < p < n = {N}, got p = {p}")));
        }
        if !(kappa > T::zero()) {
            return Err(Error::Precondition("kappa must be positive".into()));
        }
        let k = decay_exponent(N, p);
        let coefficient = kappa.powf(-T::one() / (p - T::one())) / k;
        Ok(Self { norm, p, k, coefficient })
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// `(Γ(x), ∇Γ(x))`.
    pub fn value_gradient(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>)> {
        let (fo, go) = self.norm.dual_first_order(x)?;
        let v = self.coefficient * fo.powf(-self.k);
        let g = linalg::scale(&go, -self.k * v / fo);
        Ok((v, g))
    }

    pub fn value(&self, x: &Vector<T, N>) -> Result<T> {
        Ok(self.value_gradient(x)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::NormSpec;

    #[test]
    fn euclidean_constants() {
        let n3 = Norm::<f64, 3>::new(NormSpec::euclidean()).unwrap();
        let d = wulff_data(&n3, 16, 32).unwrap();
        assert!((d.volume - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        assert!((d.kappa - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        let n2 = Norm::<f64, 2>::new(NormSpec::euclidean()).unwrap();
        assert!((wulff_data(&n2, 0, 32).unwrap().kappa - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn newtonian_potential() {
        let n = Norm::<f64, 3>::new(NormSpec::euclidean()).unwrap();
        let g = FundamentalSolution::new(n, 2.0, 4.0 * std::f64::consts::PI).unwrap();
        let v = g.value(&[0.0, 3.0, 4.0]).unwrap();
        assert!((v - 1.0 / (4.0 * std::f64::consts::PI * 5.0)).abs() < 1e-15);
    }
}
