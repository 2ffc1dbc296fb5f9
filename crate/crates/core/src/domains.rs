//! Star-shaped domains `Ω = {x : |x| < ρ(x/|x|)}` and boundary geometry.
//!
//! Each profile `ρ` is extended 0-homogeneously to `ρ̂(x) = ρ(x/|x|)` and the
//! boundary is the zero set of `φ(x) = |x| − ρ̂(x)`, so `∇φ` points outward.
//! Derivatives of `ρ̂` are propagated exactly with [`Jet`], a value together
//! with its gradient and Hessian.

use serde::Serialize;

use crate::linalg::{self, Matrix, Vector};
use crate::norms::Norm;
use crate::sphere::{legendre_with_derivative, SphereGrid};
use crate::{Error, Real, Result};

/// A scalar with exact gradient and Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T, const N: usize> {
    pub v: T,
    pub g: Vector<T, N>,
    pub h: Matrix<T, N>,
}

impl<T: Real, const N: usize> Jet<T, N> {
    pub fn constant(v: T) -> Self {
        Self { v, g: linalg::zeros(), h: linalg::zero_matrix() }
    }

    /// The coordinate function `x ↦ x_i`.
    pub fn coordinate(x: &Vector<T, N>, i: usize) -> Self {
        let mut g = linalg::zeros();
        g[i] = T::one();
        Self { v: x[i], g, h: linalg::zero_matrix() }
    }

    /// The Euclidean length `|x|`, for `x ≠ 0`.
    pub fn length(x: &Vector<T, N>) -> Self {
        let r = linalg::norm(x);
        let u = linalg::scale(x, T::one() / r);
        let h = linalg::mat_scale(&linalg::mat_sub(&linalg::identity(), &linalg::outer(&u, &u)), T::one() / r);
        Self { v: r, g: u, h }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self { v: self.v + o.v, g: linalg::add(&self.g, &o.g), h: linalg::mat_add(&self.h, &o.h) }
    }

    pub fn scale(&self, c: T) -> Self {
        Self { v: self.v * c, g: linalg::scale(&self.g, c), h: linalg::mat_scale(&self.h, c) }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut h = linalg::zero_matrix();
        for i in 0..N {
            for j in 0..N {
                h[i][j] = self.h[i][j] * o.v + o.h[i][j] * self.v + self.g[i] * o.g[j] + self.g[j] * o.g[i];
            }
        }
        Self { v: self.v * o.v, g: linalg::add(&linalg::scale(&self.g, o.v), &linalg::scale(&o.g, self.v)), h }
    }

    /// `f ∘ self` given `(f, f', f'')` at `self.v`.
    pub fn compose(&self, f: T, df: T, d2f: T) -> Self {
        let mut h = linalg::zero_matrix();
        for i in 0..N {
            for j in 0..N {
                h[i][j] = df * self.h[i][j] + d2f * self.g[i] * self.g[j];
            }
        }
        Self { v: f, g: linalg::scale(&self.g, df), h }
    }

    pub fn recip(&self) -> Self {
        let inv = T::one() / self.v;
        self.compose(inv, -inv * inv, T::of(2.0) * inv * inv * inv)
    }

    pub fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }

    pub fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.compose(s, T::of(0.5) / s, -T::of(0.25) / (s * self.v))
    }
}

/// Built-in radial profiles.
#[derive(Clone, Debug)]
pub enum DomainShape<T, const N: usize> {
    /// Euclidean ball of the given radius.
    Ball { radius: T },
    /// `∂W_R`: `ρ(θ) = R/F°(θ)`.
    WulffRadial { radius: T, norm: Norm<T, N> },
    /// Axis-aligned ellipsoid `Σ x_i²/a_i² < 1`.
    Ellipsoid { semi_axes: Vector<T, N> },
    /// `ρ(θ) = (R/F°(θ))·(1 + ε·Y(θ))` with `Y` the zonal mode of degree
    /// `mode`: `P_mode(θ_N)` in three dimensions, `T_mode(θ_N)` (Chebyshev) in
    /// two.
    PerturbedWulff { radius: T, amplitude: T, mode: usize, norm: Norm<T, N> },
}

/// A point of `∂Ω` with its quadrature weight and local geometry.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceSample<T, const N: usize> {
    /// Direction `θ` on the unit sphere.
    pub theta: Vector<T, N>,
    /// `x = ρ(θ) θ`.
    pub point: Vector<T, N>,
    /// Outward Euclidean unit normal.
    pub normal: Vector<T, N>,
    /// Euclidean area element `ρ^{n−1}/(θ·ν) w_θ`.
    pub weight: T,
    /// `∇φ(x)`.
    pub grad_phi: Vector<T, N>,
    /// `∇²φ(x)`.
    pub hess_phi: Matrix<T, N>,
}

/// A bounded domain star-shaped with respect to the origin.
#[derive(Clone, Debug)]
pub struct StarDomain<T, const N: usize> {
    shape: DomainShape<T, N>,
}

fn zonal<T: Real>(n: usize, mode: usize, c: T) -> (T, T, T) {
    if n == 3 {
        let cf = c.f64().clamp(-1.0, 1.0);
        let (p, dp) = legendre_with_derivative(mode, cf);
        // Legendre ODE: (1−c²)P'' − 2cP' + l(l+1)P = 0
        let l = mode as f64;
        let d2 = if (1.0 - cf * cf).abs() > 1e-12 {
            (2.0 * cf * dp - l * (l + 1.0) * p) / (1.0 - cf * cf)
        } else {
            0.0
        };
        (T::of(p), T::of(dp), T::of(d2))
    } else {
        // T_m(c) = cos(m acos c) with the Chebyshev recurrence for derivatives
        let (mut t0, mut t1) = (T::one(), c);
        let (mut d0, mut d1) = (T::zero(), T::one());
        let (mut s0, mut s1) = (T::zero(), T::zero());
        if mode == 0 {
            return (T::one(), T::zero(), T::zero());
        }
        for _ in 1..mode {
            let two = T::of(2.0);
            let t2 = two * c * t1 - t0;
            let d2 = two * t1 + two * c * d1 - d0;
            let s2 = T::of(4.0) * d1 + two * c * s1 - s0;
            t0 = t1;
            t1 = t2;
            d0 = d1;
            d1 = d2;
            s0 = s1;
            s1 = s2;
        }
        (t1, d1, s1)
    }
}

impl<T: Real, const N: usize> StarDomain<T, N> {
    pub fn new(shape: DomainShape<T, N>) -> Result<Self> {
        if N != 2 && N != 3 {
            return Err(Error::InvalidSpec(format!("domains support dimensions 2 and 3, got {N}")));
        }
        let positive = |r: T, what: &str| {
            if r > T::zero() && r.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{what} must be positive and finite")))
            }
        };
        match &shape {
            DomainShape::Ball { radius } | DomainShape::WulffRadial { radius, .. } => positive(*radius, "radius")?,
            DomainShape::Ellipsoid { semi_axes } => {
                for a in semi_axes {
                    positive(*a, "semi-axis")?;
                }
            }
            DomainShape::PerturbedWulff { radius, amplitude, .. } => {
                positive(*radius, "radius")?;
                // |P_l| and |T_m| are bounded by 1 on [−1, 1]
                if !(amplitude.abs() < T::one()) {
                    return Err(Error::InvalidSpec("perturbation amplitude must satisfy |ε| < 1".into()));
                }
            }
        }
        Ok(Self { shape })
    }

    pub fn ball(radius: T) -> Result<Self> {
        Self::new(DomainShape::Ball { radius })
    }

    pub fn wulff(radius: T, norm: Norm<T, N>) -> Result<Self> {
        Self::new(DomainShape::WulffRadial { radius, norm })
    }

    pub fn ellipsoid(semi_axes: Vector<T, N>) -> Result<Self> {
        Self::new(DomainShape::Ellipsoid { semi_axes })
    }

    pub fn perturbed_wulff(radius: T, amplitude: T, mode: usize, norm: Norm<T, N>) -> Result<Self> {
        Self::new(DomainShape::PerturbedWulff { radius, amplitude, mode, norm })
    }

    pub fn shape(&self) -> &DomainShape<T, N> {
        &self.shape
    }

    pub fn label(&self) -> String {
        match &self.shape {
            DomainShape::Ball { radius } => format!("ball(R={})", radius.f64()),
            DomainShape::WulffRadial { radius, norm } => format!("wulff(R={}, {})", radius.f64(), norm.label()),
            DomainShape::Ellipsoid { semi_axes } => {
                let a: Vec<String> = semi_axes.iter().map(|v| format!("{}", v.f64())).collect();
                format!("ellipsoid({})", a.join(","))
            }
            DomainShape::PerturbedWulff { radius, amplitude, mode, norm } => format!(
                "perturbed_wulff(R={}, eps={}, mode={}, {})",
                radius.f64(),
                amplitude.f64(),
                mode,
                norm.label()
            ),
        }
    }

    /// Jet of the 0-homogeneous extension `ρ̂` at `x ≠ 0`.
    pub fn radial_jet(&self, x: &Vector<T, N>) -> Result<Jet<T, N>> {
        if x.iter().all(|c| *c == T::zero()) {
            return Err(Error::ZeroVector);
        }
        let wulff_jet = |radius: T, norm: &Norm<T, N>| -> Result<Jet<T, N>> {
            let (v, g, h) = norm.dual_second_order(x)?;
            Ok(Jet::length(x).scale(radius).div(&Jet { v, g, h }))
        };
        Ok(match &self.shape {
            DomainShape::Ball { radius } => Jet::constant(*radius),
            DomainShape::WulffRadial { radius, norm } => wulff_jet(*radius, norm)?,
            DomainShape::Ellipsoid { semi_axes } => {
                let mut q = Jet::constant(T::zero());
                for i in 0..N {
                    let c = Jet::coordinate(x, i).scale(T::one() / semi_axes[i]);
                    q = q.add(&c.mul(&c));
                }
                Jet::length(x).div(&q.sqrt())
            }
            DomainShape::PerturbedWulff { radius, amplitude, mode, norm } => {
                let base = wulff_jet(*radius, norm)?;
                let c = Jet::coordinate(x, N - 1).div(&Jet::length(x));
                let (y, dy, d2y) = zonal(N, *mode, c.v);
                let bump = c.compose(y, dy, d2y).scale(*amplitude).add(&Jet::constant(T::one()));
                base.mul(&bump)
            }
        })
    }

    /// `ρ(θ)` for a direction `θ` (any nonzero vector).
    pub fn radius(&self, theta: &Vector<T, N>) -> Result<T> {
        match &self.shape {
            DomainShape::Ball { radius } => Ok(*radius),
            DomainShape::WulffRadial { radius, norm } => Ok(*radius * linalg::norm(theta) / norm.dual_value(theta)?),
            _ => Ok(self.radial_jet(theta)?.v),
        }
    }

    /// `(φ, ∇φ, ∇²φ)` with `φ(x) = |x| − ρ̂(x)`.
    pub fn defining_function(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>, Matrix<T, N>)> {
        let r = Jet::length(x);
        let rho = self.radial_jet(x)?;
        let phi = r.add(&rho.scale(-T::one()));
        Ok((phi.v, phi.g, phi.h))
    }

    /// Boundary sample in direction `theta` (unit) with sphere weight `w`.
    pub fn sample(&self, theta: &Vector<T, N>, w: T) -> Result<SurfaceSample<T, N>> {
        let rho = self.radius(theta)?;
        let point = linalg::scale(theta, rho);
        let (_, grad_phi, hess_phi) = self.defining_function(&point)?;
        let normal = linalg::normalize(&grad_phi);
        let cos = linalg::dot(theta, &normal);
        let weight = w * rho.powi(N as i32 - 1) / cos;
        Ok(SurfaceSample { theta: *theta, point, normal, weight, grad_phi, hess_phi })
    }

    /// Boundary samples on the product sphere grid.
    pub fn boundary_quadrature(&self, polar: usize, azimuth: usize) -> Result<Vec<SurfaceSample<T, N>>> {
        let grid = SphereGrid::<T, N>::new(polar, azimuth)?;
        self.boundary_quadrature_on(&grid)
    }

    pub fn boundary_quadrature_on(&self, grid: &SphereGrid<T, N>) -> Result<Vec<SurfaceSample<T, N>>> {
        grid.nodes.iter().zip(&grid.weights).map(|(t, w)| self.sample(t, *w)).collect()
    }

    /// `|Ω| = (1/n) ∫ ρ(θ)^n dθ`.
    pub fn volume(&self, grid: &SphereGrid<T, N>) -> Result<T> {
        Ok(grid.try_integrate(|t| Ok(self.radius(t)?.powi(N as i32)))? / T::of_usize(N))
    }

    /// `(min ρ, max ρ)` over the grid directions.
    pub fn radius_range(&self, grid: &SphereGrid<T, N>) -> Result<(T, T)> {
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for t in &grid.nodes {
            let r = self.radius(t)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok((lo, hi))
    }

    /// Euclidean convexity test: the tangential Hessian of `φ` is positive
    /// semidefinite (up to `tol`) at every sample.
    pub fn is_convex(&self, samples: &[SurfaceSample<T, N>], tol: T) -> bool {
        samples.iter().all(|s| euclidean_principal_curvatures(s).iter().all(|k| *k >= -tol))
    }
}

/// Euclidean principal curvatures at a sample (outward normal, positive on
/// convex bodies), ascending.
pub fn euclidean_principal_curvatures<T: Real, const N: usize>(s: &SurfaceSample<T, N>) -> Vec<T> {
    let nu = s.normal;
    let g = linalg::norm(&s.grad_phi);
    let proj = linalg::mat_sub(&linalg::identity(), &linalg::outer(&nu, &nu));
    let w = linalg::mat_scale(&linalg::matmul(&proj, &linalg::matmul(&s.hess_phi, &proj)), T::one() / g);
    // Shift the normal direction far above the tangential spectrum and drop it.
    let shift = linalg::frobenius_norm(&w) + T::one();
    let m = linalg::mat_add(&w, &linalg::mat_scale(&linalg::outer(&nu, &nu), T::of(10.0) * shift));
    let (vals, _) = linalg::symmetric_eigen(&linalg::symmetrize(&m));
    vals[..N - 1].to_vec()
}

/// `|∂Ω|_F = Σ F(ν) dσ`.
pub fn anisotropic_area<T: Real, const N: usize>(samples: &[SurfaceSample<T, N>], norm: &Norm<T, N>) -> T {
    samples.iter().map(|s| norm.first_order(&s.normal).0 * s.weight).sum()
}

/// Euclidean surface area `Σ dσ`.
pub fn euclidean_area<T: Real, const N: usize>(samples: &[SurfaceSample<T, N>]) -> T {
    samples.iter().map(|s| s.weight).sum()
}

/// `B = F_ξξ(∇φ) ∇²φ`, whose nonzero eigenvalues are the anisotropic
/// principal curvatures.
fn curvature_operator<T: Real, const N: usize>(norm: &Norm<T, N>, s: &SurfaceSample<T, N>) -> Matrix<T, N> {
    let (_, _, fxx) = norm.second_order(&s.grad_phi);
    linalg::matmul(&fxx, &s.hess_phi)
}

/// `H_F = div F_ξ(∇φ) = tr(F_ξξ(∇φ) ∇²φ)` with respect to the outward
/// normal; positive on convex bodies.
pub fn anisotropic_mean_curvature<T: Real, const N: usize>(norm: &Norm<T, N>, s: &SurfaceSample<T, N>) -> T {
    linalg::trace(&curvature_operator(norm, s))
}

/// `σ₁(κ_F)` and `σ₂(κ_F)` from the traces of `B`.
pub fn curvature_symmetric_functions<T: Real, const N: usize>(norm: &Norm<T, N>, s: &SurfaceSample<T, N>) -> (T, T) {
    let b = curvature_operator(norm, s);
    let s1 = linalg::trace(&b);
    let s2 = T::of(0.5) * (s1 * s1 - linalg::trace(&linalg::matmul(&b, &b)));
    (s1, s2)
}

/// `((n−2)/(n−1)) σ₁² − 2σ₂`, the squared norm of the traceless part of the
/// anisotropic second fundamental form; zero exactly at umbilic points.
pub fn anisotropic_pinch<T: Real, const N: usize>(norm: &Norm<T, N>, s: &SurfaceSample<T, N>) -> T {
    let (s1, s2) = curvature_symmetric_functions(norm, s);
    let n = T::of_usize(N);
    (n - T::of(2.0)) / (n - T::one()) * s1 * s1 - T::of(2.0) * s2
}

/// Boundary integrals used by the inequality harness.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BoundaryIntegrals {
    pub euclidean_area: f64,
    pub anisotropic_area: f64,
    pub volume: f64,
    /// `∫ H_F F(ν) dσ`.
    pub total_mean_curvature: f64,
    /// Smallest `H_F` over the samples.
    pub min_mean_curvature: f64,
    pub min_pinch: f64,
    pub convex: bool,
}

/// `∫_{∂Ω} g(H_F) F(ν) dσ` for an arbitrary function of the curvature.
pub fn curvature_integral<T: Real, const N: usize, G: Fn(T) -> T>(
    norm: &Norm<T, N>,
    samples: &[SurfaceSample<T, N>],
    g: G,
) -> T {
    samples
        .iter()
        .map(|s| g(anisotropic_mean_curvature(norm, s)) * norm.first_order(&s.normal).0 * s.weight)
        .sum()
}

/// Area, volume and curvature summaries of a domain under a norm.
pub fn boundary_integrals<T: Real, const N: usize>(
    domain: &StarDomain<T, N>,
    norm: &Norm<T, N>,
    grid: &SphereGrid<T, N>,
) -> Result<BoundaryIntegrals> {
    let samples = domain.boundary_quadrature_on(grid)?;
    let mut min_h = f64::INFINITY;
    let mut min_pinch = f64::INFINITY;
    for s in &samples {
        min_h = min_h.min(anisotropic_mean_curvature(norm, s).f64());
        min_pinch = min_pinch.min(anisotropic_pinch(norm, s).f64());
    }
    Ok(BoundaryIntegrals {
        euclidean_area: euclidean_area(&samples).f64(),
        anisotropic_area: anisotropic_area(&samples, norm).f64(),
        volume: domain.volume(grid)?.f64(),
        total_mean_curvature: curvature_integral(norm, &samples, |h| h).f64(),
        min_mean_curvature: min_h,
        min_pinch,
        convex: domain.is_convex(&samples, T::of(1e-9)),
    })
}
