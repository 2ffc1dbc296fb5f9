//! Smooth Minkowski norms, their duals and the derived tensors.
//!
//! A [`Norm`] is built from a [`NormSpec`] and then evaluated through two
//! layers of API:
//!
//! * checked accessors ([`Norm::value`], [`Norm::gradient`], ...) that reject
//!   the zero vector, and
//! * allocation-free hot-path kernels ([`Norm::first_order`],
//!   [`Norm::second_order`]) used by the solver, which map the zero vector to
//!   zero output instead of failing.
//!
//! Every family has closed-form first and second derivatives. The dual norm
//! is closed form for the Euclidean, ellipsoidal and power families; for the
//! smoothed polytope it is computed by maximizing the concave function
//! `⟨ξ, x⟩ − F(ξ)²/2`, whose maximizer `ξ*` satisfies `F(ξ*) = F°(x)` and
//! `ξ* = F°(x) F°_x(x)`. The dual Hessian follows from the fact that the
//! gradients of `F²/2` and `F°²/2` are inverse maps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Real, Result};

/// The built-in norm families.
#[derive(Clone, Debug, PartialEq)]
pub enum NormFamily<T, const N: usize> {
    /// `F(ξ) = |ξ|`.
    Euclidean,
    /// `F(ξ) = √(ξᵀ A ξ)` with `A` symmetric positive definite.
    Ellipsoid { matrix: Matrix<T, N> },
    /// `F(ξ) = (Σ |ξ_i|^q)^{1/q}` with `1 < q < ∞`.
    Power { exponent: T },
    /// `F(ξ) = √(G(ξ)² + ε²|ξ|²)` where `G(ξ) = (Σ_k (w_k·ξ)^s)^{1/s}`.
    ///
    /// `G` is the `s`-power mean of the support functionals `w_k`, which tends
    /// to the crystalline norm `max_k |w_k·ξ|` as `s → ∞`. The Euclidean blend
    /// `ε` bounds `∇²(F²/2)` below by `ε²`.
    SmoothedPolytope {
        directions: Vec<Vector<T, N>>,
        power: u32,
        blend: T,
    },
}

/// Specification of a norm in dimension `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormSpec<T, const N: usize> {
    pub family: NormFamily<T, N>,
}

impl<T: Real, const N: usize> NormSpec<T, N> {
    pub fn euclidean() -> Self {
        Self { family: NormFamily::Euclidean }
    }

    pub fn ellipsoid(matrix: Matrix<T, N>) -> Self {
        Self { family: NormFamily::Ellipsoid { matrix } }
    }

    /// Ellipsoidal norm with a diagonal matrix.
    pub fn ellipsoid_diag(diag: Vector<T, N>) -> Self {
        let mut m = linalg::zero_matrix::<T, N>();
        for i in 0..N {
            m[i][i] = diag[i];
        }
        Self::ellipsoid(m)
    }

    pub fn power(exponent: T) -> Self {
        Self { family: NormFamily::Power { exponent } }
    }

    pub fn smoothed_polytope(directions: Vec<Vector<T, N>>, power: u32, blend: T) -> Self {
        Self { family: NormFamily::SmoothedPolytope { directions, power, blend } }
    }

    /// Smoothed polytope whose directions are the coordinate axes, i.e. a
    /// smoothed cube-dual (cross-polytope gauge for the Wulff shape).
    pub fn cube(power: u32, blend: T) -> Self {
        let dirs = (0..N)
            .map(|i| {
                let mut e = linalg::zeros::<T, N>();
                e[i] = T::one();
                e
            })
            .collect();
        Self::smoothed_polytope(dirs, power, blend)
    }

    pub fn dimension(&self) -> usize {
        N
    }

    /// Short human-readable identifier.
    pub fn label(&self) -> String {
        match &self.family {
            NormFamily::Euclidean => "euclidean".to_string(),
            NormFamily::Ellipsoid { matrix } => {
                let diag: Vec<String> = (0..N).map(|i| format!("{}", matrix[i][i].f64())).collect();
                format!("ellipsoid(diag={})", diag.join(","))
            }
            NormFamily::Power { exponent } => format!("power(q={})", exponent.f64()),
            NormFamily::SmoothedPolytope { directions, power, blend } => format!(
                "smoothed_polytope(k={},s={},eps={})",
                directions.len(),
                power,
                blend.f64()
            ),
        }
    }
}

#[derive(Clone, Debug)]
enum Kind<T, const N: usize> {
    Euclidean,
    Ellipsoid { a: Matrix<T, N>, a_inv: Matrix<T, N> },
    Power { q: T, q_int: Option<i32>, q_dual: T, q_dual_int: Option<i32> },
    Polytope { dirs: Vec<Vector<T, N>>, s: i32, eps: T },
}

/// Options for the numerical dual maximization.
#[derive(Clone, Copy, Debug)]
pub struct DualOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self { starts: 8, max_iterations: 200, tolerance: 1e-10 }
    }
}

/// An immutable, validated Minkowski norm evaluator.
#[derive(Clone, Debug)]
pub struct Norm<T, const N: usize> {
    spec: NormSpec<T, N>,
    kind: Kind<T, N>,
    dual_options: DualOptions,
}

fn integer_exponent<T: Real>(q: T) -> Option<i32> {
    let r = q.round();
    if (q - r).abs() <= T::epsilon() * T::of(8.0) * q.abs() && r.abs() < T::of(64.0) {
        r.to_i32()
    } else {
        None
    }
}

#[inline(always)]
fn pow_abs<T: Real>(x: T, e: T, e_int: Option<i32>) -> T {
    match e_int {
        Some(k) => x.abs().powi(k),
        None => x.abs().powf(e),
    }
}

impl<T: Real, const N: usize> Norm<T, N> {
    /// Builds an evaluator, checking the family invariants.
    pub fn new(spec: NormSpec<T, N>) -> Result<Self> {
        if N < 2 {
            return Err(Error::InvalidSpec("dimension must be at least 2".into()));
        }
        let kind = match &spec.family {
            NormFamily::Euclidean => Kind::Euclidean,
            NormFamily::Ellipsoid { matrix } => {
                let tol = T::of(1e-12) * linalg::frobenius_norm(matrix).max(T::one());
                if linalg::asymmetry(matrix) > tol {
                    return Err(Error::InvalidSpec("ellipsoid matrix is not symmetric".into()));
                }
                let a = linalg::symmetrize(matrix);
                if !a.iter().flatten().all(|v| v.is_finite()) {
                    return Err(Error::InvalidSpec("ellipsoid matrix has non-finite entries".into()));
                }
                let a_inv = linalg::inverse_spd(&a).ok_or_else(|| {
                    Error::InvalidSpec("ellipsoid matrix is not positive definite".into())
                })?;
                if linalg::min_eigenvalue(&a) <= T::zero() {
                    return Err(Error::InvalidSpec("ellipsoid matrix is not positive definite".into()));
                }
                Kind::Ellipsoid { a, a_inv }
            }
            NormFamily::Power { exponent } => {
                let q = *exponent;
                if !(q > T::one()) || !q.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "power norm exponent must satisfy 1 < q < inf, got {}",
                        q
                    )));
                }
                let q_dual = q / (q - T::one());
                Kind::Power { q, q_int: integer_exponent(q), q_dual, q_dual_int: integer_exponent(q_dual) }
            }
            NormFamily::SmoothedPolytope { directions, power, blend } => {
                if *power < 4 || power % 2 != 0 {
                    return Err(Error::InvalidSpec(format!(
                        "polytope smoothing exponent must be an even integer >= 4, got {}",
                        power
                    )));
                }
                if !(*blend >= T::zero()) || !blend.is_finite() {
                    return Err(Error::InvalidSpec("polytope blend must be finite and >= 0".into()));
                }
                if directions.iter().any(|w| w.iter().any(|c| !c.is_finite())) {
                    return Err(Error::InvalidSpec("polytope direction has non-finite entries".into()));
                }
                let mut gram = linalg::zero_matrix::<T, N>();
                for w in directions {
                    gram = linalg::mat_add(&gram, &linalg::outer(w, w));
                }
                let (vals, _) = linalg::symmetric_eigen(&gram);
                let top = vals[N - 1];
                if directions.len() < N || !(top > T::zero()) || vals[0] <= T::of(1e-12) * top {
                    return Err(Error::InvalidSpec("polytope directions do not span the space".into()));
                }
                Kind::Polytope { dirs: directions.clone(), s: *power as i32, eps: *blend }
            }
        };
        Ok(Self { spec, kind, dual_options: DualOptions::default() })
    }

    /// Replaces the numerical dual options.
    pub fn with_dual_options(mut self, options: DualOptions) -> Self {
        self.dual_options = options;
        self
    }

    pub fn spec(&self) -> &NormSpec<T, N> {
        &self.spec
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    /// Whether the dual norm is available in closed form.
    pub fn has_closed_form_dual(&self) -> bool {
        !matches!(self.kind, Kind::Polytope { .. })
    }

    /// `F(ξ)` and `F_ξ(ξ)`; returns zeros for `ξ = 0`.
    #[inline]
    pub fn first_order(&self, xi: &Vector<T, N>) -> (T, Vector<T, N>) {
        match &self.kind {
            Kind::Euclidean => {
                let f = linalg::norm_scaled(xi);
                if f == T::zero() {
                    return (T::zero(), linalg::zeros());
                }
                (f, linalg::scale(xi, T::one() / f))
            }
            Kind::Ellipsoid { a, .. } => quad_first(a, xi),
            Kind::Power { q, q_int, .. } => power_first(xi, *q, *q_int),
            Kind::Polytope { dirs, s, eps } => {
                let r = linalg::norm_scaled(xi);
                if r == T::zero() {
                    return (T::zero(), linalg::zeros());
                }
                let e = linalg::scale(xi, T::one() / r);
                let (f, g, _) = polytope_unit(dirs, *s, *eps, &e, false);
                (f * r, g)
            }
        }
    }

    /// `F(ξ)`, `F_ξ(ξ)` and `F_ξξ(ξ)`; returns zeros for `ξ = 0`.
    #[inline]
    pub fn second_order(&self, xi: &Vector<T, N>) -> (T, Vector<T, N>, Matrix<T, N>) {
        match &self.kind {
            Kind::Euclidean => {
                let f = linalg::norm_scaled(xi);
                if f == T::zero() {
                    return (T::zero(), linalg::zeros(), linalg::zero_matrix());
                }
                let g = linalg::scale(xi, T::one() / f);
                let h = linalg::mat_scale(&linalg::mat_sub(&linalg::identity(), &linalg::outer(&g, &g)), T::one() / f);
                (f, g, h)
            }
            Kind::Ellipsoid { a, .. } => quad_second(a, xi),
            Kind::Power { q, q_int, .. } => power_second(xi, *q, *q_int),
            Kind::Polytope { dirs, s, eps } => {
                let r = linalg::norm_scaled(xi);
                if r == T::zero() {
                    return (T::zero(), linalg::zeros(), linalg::zero_matrix());
                }
                let e = linalg::scale(xi, T::one() / r);
                let (f1, g, a) = polytope_unit(dirs, *s, *eps, &e, true);
                let f = f1 * r;
                let h = linalg::mat_scale(&linalg::mat_sub(&a, &linalg::outer(&g, &g)), T::one() / f);
                (f, g, h)
            }
        }
    }

    fn nonzero(xi: &Vector<T, N>) -> Result<()> {
        if xi.iter().all(|c| *c == T::zero()) {
            Err(Error::ZeroVector)
        } else if xi.iter().any(|c| !c.is_finite()) {
            Err(Error::Precondition("non-finite vector".into()))
        } else {
            Ok(())
        }
    }

    /// `F(ξ)`.
    pub fn value(&self, xi: &Vector<T, N>) -> Result<T> {
        Self::nonzero(xi)?;
        Ok(self.first_order(xi).0)
    }

    /// `F_ξ(ξ)`.
    pub fn gradient(&self, xi: &Vector<T, N>) -> Result<Vector<T, N>> {
        Self::nonzero(xi)?;
        Ok(self.first_order(xi).1)
    }

    /// `F_ξξ(ξ)`.
    pub fn hessian(&self, xi: &Vector<T, N>) -> Result<Matrix<T, N>> {
        Self::nonzero(xi)?;
        Ok(self.second_order(xi).2)
    }

    /// `V(ξ) = F(ξ)^p / p`.
    pub fn potential(&self, xi: &Vector<T, N>, p: T) -> Result<T> {
        Ok(self.value(xi)?.powf(p) / p)
    }

    /// `a_ij = F_i F_j + F F_ij = ∇²(F²/2)`.
    pub fn a_matrix(&self, xi: &Vector<T, N>) -> Result<Matrix<T, N>> {
        Self::nonzero(xi)?;
        let (f, g, h) = self.second_order(xi);
        Ok(a_from(f, &g, &h))
    }

    /// `a_ij,p = F^{p−2}(a_ij + (p−2) F_i F_j)`, the linearization of the
    /// anisotropic p-Laplacian.
    pub fn a_p_matrix(&self, xi: &Vector<T, N>, p: T) -> Result<Matrix<T, N>> {
        if !(p > T::one()) {
            return Err(Error::Precondition(format!("p must exceed 1, got {}", p)));
        }
        Self::nonzero(xi)?;
        let (f, g, h) = self.second_order(xi);
        Ok(a_p_from(f, &g, &h, p))
    }

    /// `F°(x)`.
    pub fn dual_value(&self, x: &Vector<T, N>) -> Result<T> {
        Ok(self.dual_first_order(x)?.0)
    }

    /// `F°_x(x)`.
    pub fn dual_gradient(&self, x: &Vector<T, N>) -> Result<Vector<T, N>> {
        Ok(self.dual_first_order(x)?.1)
    }

    /// `F°(x)` and `F°_x(x)`.
    pub fn dual_first_order(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>)> {
        Self::nonzero(x)?;
        match &self.kind {
            Kind::Euclidean => {
                let f = linalg::norm_scaled(x);
                Ok((f, linalg::scale(x, T::one() / f)))
            }
            Kind::Ellipsoid { a_inv, .. } => Ok(quad_first(a_inv, x)),
            Kind::Power { q_dual, q_dual_int, .. } => Ok(power_first(x, *q_dual, *q_dual_int)),
            Kind::Polytope { .. } => {
                let (v, g, _) = self.numerical_dual(x)?;
                Ok((v, g))
            }
        }
    }

    /// `F°(x)`, `F°_x(x)` and `F°_xx(x)`.
    pub fn dual_second_order(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>, Matrix<T, N>)> {
        Self::nonzero(x)?;
        match &self.kind {
            Kind::Euclidean => {
                let f = linalg::norm_scaled(x);
                let g = linalg::scale(x, T::one() / f);
                let h = linalg::mat_scale(&linalg::mat_sub(&linalg::identity(), &linalg::outer(&g, &g)), T::one() / f);
                Ok((f, g, h))
            }
            Kind::Ellipsoid { a_inv, .. } => Ok(quad_second(a_inv, x)),
            Kind::Power { q_dual, q_dual_int, .. } => Ok(power_second(x, *q_dual, *q_dual_int)),
            Kind::Polytope { .. } => {
                let (v, g, xi_star) = self.numerical_dual(x)?;
                let a = self.a_matrix(&xi_star)?;
                let a_inv = linalg::inverse_spd(&a).ok_or_else(|| {
                    Error::Precondition("dual Hessian undefined where the norm is degenerate".into())
                })?;
                let h = linalg::mat_scale(&linalg::mat_sub(&a_inv, &linalg::outer(&g, &g)), T::one() / v);
                Ok((v, g, h))
            }
        }
    }

    /// Dual norm by numerical maximization, available for every family.
    ///
    /// Returns `(F°(x), F°_x(x), ξ*)` where `ξ*` maximizes
    /// `⟨ξ, x⟩ − F(ξ)²/2`.
    pub fn numerical_dual(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>, Vector<T, N>)> {
        Self::nonzero(x)?;
        let extra: Vec<Vector<T, N>> = match &self.kind {
            Kind::Polytope { dirs, .. } => dirs.clone(),
            _ => Vec::new(),
        };
        let eval = |xi: &Vector<T, N>| {
            let (f, g, h) = self.second_order(xi);
            (f, g, a_from(f, &g, &h))
        };
        conjugate_maximize(eval, x, &extra, self.dual_options)
    }

    /// Samples the identities `⟨F_ξ(ξ),ξ⟩ = F(ξ)`, `F_ξξ(ξ)ξ = 0`,
    /// `F(F°_x(x)) = F°(F_ξ(ξ)) = 1` and the two inversion identities over
    /// random unit directions, and records the smallest eigenvalue of
    /// `∇²(F²/2)`.
    ///
    /// For polytope norms the normalized directions `w_k` are added as probes
    /// because that is where a vanishing blend makes the norm degenerate.
    pub fn validate(&self, sample_count: usize, seed: u64) -> Result<NormValidationReport> {
        if sample_count == 0 {
            return Err(Error::Precondition("sample_count must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points: Vec<Vector<T, N>> = Vec::with_capacity(sample_count + 8);
        while points.len() < sample_count {
            let v: Vector<T, N> = std::array::from_fn(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z)
            });
            let r = linalg::norm(&v);
            if r > T::of(1e-8) {
                points.push(linalg::scale(&v, T::one() / r));
            }
        }
        if let Kind::Polytope { dirs, .. } = &self.kind {
            for w in dirs {
                points.push(linalg::normalize(w));
            }
        }
        let tolerance = if self.has_closed_form_dual() { 1e-9 } else { 1e-6 };
        let mut rep = NormValidationReport {
            norm: self.label(),
            samples: points.len(),
            euler_residual: 0.0,
            hessian_kernel_residual: 0.0,
            unit_sphere_residual: 0.0,
            inversion_residual: 0.0,
            min_ellipticity: f64::INFINITY,
            tolerance,
            pass: false,
        };
        let bump = |slot: &mut f64, v: f64| {
            *slot = if v.is_nan() { f64::INFINITY } else { slot.max(v) };
        };
        for xi in &points {
            let (f, g, h) = self.second_order(xi);
            bump(&mut rep.euler_residual, ((linalg::dot(&g, xi) - f).abs() / f).f64());
            bump(&mut rep.hessian_kernel_residual, linalg::norm(&linalg::matvec(&h, xi)).f64());
            let a = a_from(f, &g, &h);
            let lam = linalg::min_eigenvalue(&a).f64();
            rep.min_ellipticity = if lam.is_nan() { f64::NEG_INFINITY } else { rep.min_ellipticity.min(lam) };

            // x plays the role of a dual-side sample; reuse the direction.
            let x = xi;
            match self.dual_first_order(x) {
                Ok((fo, go)) => {
                    let unit_a = (self.first_order(&go).0 - T::one()).abs().f64();
                    let gx = self.first_order(&go).1;
                    let inv_a = (linalg::norm(&linalg::sub(&linalg::scale(&gx, fo), x)) / linalg::norm(x)).f64();
                    bump(&mut rep.unit_sphere_residual, unit_a);
                    bump(&mut rep.inversion_residual, inv_a);
                }
                Err(_) => {
                    rep.unit_sphere_residual = f64::INFINITY;
                    rep.inversion_residual = f64::INFINITY;
                }
            }
            match self.dual_first_order(&g) {
                Ok((fo_g, go_g)) => {
                    bump(&mut rep.unit_sphere_residual, (fo_g - T::one()).abs().f64());
                    let back = linalg::scale(&go_g, f);
                    bump(
                        &mut rep.inversion_residual,
                        (linalg::norm(&linalg::sub(&back, xi)) / linalg::norm(xi)).f64(),
                    );
                }
                Err(_) => {
                    rep.unit_sphere_residual = f64::INFINITY;
                    rep.inversion_residual = f64::INFINITY;
                }
            }
        }
        let t = rep.tolerance;
        rep.pass = rep.euler_residual < t
            && rep.hessian_kernel_residual < t
            && rep.unit_sphere_residual < t
            && rep.inversion_residual < t
            && rep.min_ellipticity > 0.0;
        Ok(rep)
    }
}

/// Residuals of the norm self-check.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NormValidationReport {
    pub norm: String,
    pub samples: usize,
    /// `max |⟨F_ξ(ξ),ξ⟩ − F(ξ)| / F(ξ)`.
    pub euler_residual: f64,
    /// `max |F_ξξ(ξ) ξ|` on unit directions.
    pub hessian_kernel_residual: f64,
    /// `max` of `|F(F°_x(x)) − 1|` and `|F°(F_ξ(ξ)) − 1|`.
    pub unit_sphere_residual: f64,
    /// `max` of the relative errors in `F°(x) F_ξ(F°_x(x)) = x` and
    /// `F(ξ) F°_x(F_ξ(ξ)) = ξ`.
    pub inversion_residual: f64,
    /// Smallest eigenvalue of `∇²(F²/2)` over the samples.
    pub min_ellipticity: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `a = F_ξ F_ξᵀ + F F_ξξ`.
#[inline]
pub fn a_from<T: Real, const N: usize>(f: T, g: &Vector<T, N>, h: &Matrix<T, N>) -> Matrix<T, N> {
    let mut a = linalg::zero_matrix::<T, N>();
    for i in 0..N {
        for j in 0..N {
            a[i][j] = g[i] * g[j] + f * h[i][j];
        }
    }
    a
}

/// `a_p = F^{p−2}(a + (p−2) F_ξ F_ξᵀ)`.
#[inline]
pub fn a_p_from<T: Real, const N: usize>(f: T, g: &Vector<T, N>, h: &Matrix<T, N>, p: T) -> Matrix<T, N> {
    let fp = f.powf(p - T::of(2.0));
    let c = p - T::one();
    let mut a = linalg::zero_matrix::<T, N>();
    for i in 0..N {
        for j in 0..N {
            a[i][j] = fp * (c * g[i] * g[j] + f * h[i][j]);
        }
    }
    a
}

#[inline]
fn quad_first<T: Real, const N: usize>(a: &Matrix<T, N>, xi: &Vector<T, N>) -> (T, Vector<T, N>) {
    let m = linalg::max_abs(xi);
    if m == T::zero() {
        return (T::zero(), linalg::zeros());
    }
    let e = linalg::scale(xi, T::one() / m);
    let ae = linalg::matvec(a, &e);
    let f1 = linalg::dot(&e, &ae).sqrt();
    (f1 * m, linalg::scale(&ae, T::one() / f1))
}

#[inline]
fn quad_second<T: Real, const N: usize>(a: &Matrix<T, N>, xi: &Vector<T, N>) -> (T, Vector<T, N>, Matrix<T, N>) {
    let (f, g) = quad_first(a, xi);
    if f == T::zero() {
        return (f, g, linalg::zero_matrix());
    }
    let h = linalg::mat_scale(&linalg::mat_sub(a, &linalg::outer(&g, &g)), T::one() / f);
    (f, g, h)
}

#[inline]
fn power_first<T: Real, const N: usize>(xi: &Vector<T, N>, q: T, q_int: Option<i32>) -> (T, Vector<T, N>) {
    let m = linalg::max_abs(xi);
    if m == T::zero() {
        return (T::zero(), linalg::zeros());
    }
    let qm1 = q - T::one();
    let qm1_int = q_int.map(|k| k - 1);
    let mut s = T::zero();
    let mut a = linalg::zeros::<T, N>();
    for i in 0..N {
        let e = xi[i] / m;
        let ai = pow_abs(e, qm1, qm1_int);
        a[i] = if e < T::zero() { -ai } else { ai };
        s = s + ai * e.abs();
    }
    let g1 = s.powf(T::one() / q);
    let denom = s / g1; // G^{q-1}
    (g1 * m, linalg::scale(&a, T::one() / denom))
}

#[inline]
fn power_second<T: Real, const N: usize>(xi: &Vector<T, N>, q: T, q_int: Option<i32>) -> (T, Vector<T, N>, Matrix<T, N>) {
    let (f, g) = power_first(xi, q, q_int);
    if f == T::zero() {
        return (f, g, linalg::zero_matrix());
    }
    let c = (q - T::one()) / f;
    let qm2 = q - T::of(2.0);
    let qm2_int = q_int.map(|k| k - 2);
    let mut h = linalg::zero_matrix::<T, N>();
    for i in 0..N {
        let d = pow_abs(xi[i] / f, qm2, qm2_int);
        for j in 0..N {
            h[i][j] = -c * g[i] * g[j];
        }
        h[i][i] = h[i][i] + c * d;
    }
    (f, g, h)
}

/// Polytope norm at a unit vector: `(F, F_ξ, a)` with `a = ∇²(F²/2)`.
#[inline]
fn polytope_unit<T: Real, const N: usize>(
    dirs: &[Vector<T, N>],
    s: i32,
    eps: T,
    e: &Vector<T, N>,
    want_a: bool,
) -> (T, Vector<T, N>, Matrix<T, N>) {
    let mut sum = T::zero();
    let mut gnum = linalg::zeros::<T, N>();
    let mut hnum = linalg::zero_matrix::<T, N>();
    for w in dirs {
        let c = linalg::dot(w, e);
        let c2 = c.powi(s - 2);
        let c1 = c2 * c;
        sum = sum + c1 * c;
        gnum = linalg::axpy(&gnum, c1, w);
        if want_a {
            for i in 0..N {
                for j in 0..N {
                    hnum[i][j] = hnum[i][j] + c2 * w[i] * w[j];
                }
            }
        }
    }
    let st = T::of(s as f64);
    let g = sum.powf(T::one() / st);
    let eps2 = eps * eps;
    if g == T::zero() {
        // Only possible when the directions do not span; guarded at construction.
        return (eps, linalg::scale(e, eps), linalg::mat_scale(&linalg::identity(), eps2));
    }
    let gs1 = sum / g; // G^{s-1}
    let gg = linalg::scale(&gnum, T::one() / gs1);
    let f = (g * g + eps2).sqrt();
    let grad = linalg::scale(&linalg::axpy(&linalg::scale(&gg, g), eps2, e), T::one() / f);
    let mut a = linalg::zero_matrix::<T, N>();
    if want_a {
        let gs2 = gs1 / g; // G^{s-2}
        let coef = (st - T::one()) / g;
        for i in 0..N {
            for j in 0..N {
                let gxx = coef * (hnum[i][j] / gs2 - gg[i] * gg[j]);
                a[i][j] = gg[i] * gg[j] + g * gxx;
            }
            a[i][i] = a[i][i] + eps2;
        }
    }
    (f, grad, a)
}

/// Maximizes the concave function `⟨ξ, x⟩ − F(ξ)²/2` by damped Newton
/// ascent from several starting points.
///
/// `eval` returns `(F, F_ξ, a)` with `a = ∇²(F²/2)`. Returns
/// `(F°(x), F°_x(x), ξ*)`.
pub fn conjugate_maximize<T: Real, const N: usize, E>(
    eval: E,
    x: &Vector<T, N>,
    extra_starts: &[Vector<T, N>],
    opts: DualOptions,
) -> Result<(T, Vector<T, N>, Vector<T, N>)>
where
    E: Fn(&Vector<T, N>) -> (T, Vector<T, N>, Matrix<T, N>),
{
    let xn = linalg::norm_scaled(x);
    let xhat = linalg::scale(x, T::one() / xn);
    let mut dirs: Vec<Vector<T, N>> = vec![xhat];
    let mut ranked: Vec<(T, Vector<T, N>)> = extra_starts
        .iter()
        .map(|w| {
            let w = linalg::normalize(w);
            let c = linalg::dot(&w, &xhat);
            (c.abs(), if c < T::zero() { linalg::scale(&w, -T::one()) } else { w })
        })
        .collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    for (_, w) in ranked.into_iter().take(3) {
        dirs.push(w);
    }
    let mut k = 0usize;
    while dirs.len() < opts.starts.max(1) {
        let mut e = linalg::zeros::<T, N>();
        e[k % N] = if (k / N) % 2 == 0 { T::of(0.5) } else { T::of(-0.5) };
        dirs.push(linalg::normalize(&linalg::add(&xhat, &e)));
        k += 1;
    }
    dirs.truncate(opts.starts.max(1));

    let tol = T::of(opts.tolerance);
    let half = T::of(0.5);
    let objective = |xi: &Vector<T, N>, f: T| linalg::dot(xi, x) - half * f * f;
    let mut best: Option<(T, Vector<T, N>)> = None;
    let mut best_residual = T::infinity();
    let mut iterations_used = 0usize;
    for d in dirs {
        let (fd, _, _) = eval(&d);
        let c = linalg::dot(&d, x);
        if !(c > T::zero()) || !(fd > T::zero()) {
            continue;
        }
        let mut xi = linalg::scale(&d, c / (fd * fd));
        let (mut f, mut g, mut a) = eval(&xi);
        let mut obj = objective(&xi, f);
        let mut converged = false;
        for it in 0..opts.max_iterations {
            iterations_used = iterations_used.max(it + 1);
            let r = linalg::sub(x, &linalg::scale(&g, f));
            let rn = linalg::norm(&r) / xn;
            if rn <= tol {
                converged = true;
                best_residual = best_residual.min(rn);
                break;
            }
            let step = newton_direction(&a, &r);
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                let trial = linalg::axpy(&xi, t, &step);
                let (ft, gt, at) = eval(&trial);
                let ot = objective(&trial, ft);
                if ot >= obj || (ot - obj).abs() <= T::epsilon() * T::of(16.0) * obj.abs() {
                    xi = trial;
                    f = ft;
                    g = gt;
                    a = at;
                    obj = ot;
                    accepted = true;
                    break;
                }
                t = t * half;
            }
            if !accepted {
                best_residual = best_residual.min(rn);
                break;
            }
        }
        if !converged {
            let r = linalg::sub(x, &linalg::scale(&g, f));
            let rn = linalg::norm(&r) / xn;
            if rn <= tol {
                converged = true;
            }
            best_residual = best_residual.min(rn);
        }
        if converged && f > T::zero() {
            let value = linalg::dot(&xi, x) / f;
            match &best {
                Some((bv, _)) if *bv >= value => {}
                _ => best = Some((value, xi)),
            }
        }
    }
    match best {
        Some((value, xi)) => {
            let (f, _, _) = eval(&xi);
            Ok((value, linalg::scale(&xi, T::one() / f), xi))
        }
        None => Err(Error::DualNotConverged { iterations: iterations_used, residual: best_residual.f64() }),
    }
}

fn newton_direction<T: Real, const N: usize>(a: &Matrix<T, N>, r: &Vector<T, N>) -> Vector<T, N> {
    let tr = linalg::trace(a).abs().max(T::min_positive_value());
    let mut mu = T::zero();
    for _ in 0..40 {
        let mut m = *a;
        for i in 0..N {
            m[i][i] = m[i][i] + mu;
        }
        if let Some(l) = linalg::cholesky(&m) {
            let d = linalg::cholesky_solve(&l, r);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        mu = if mu == T::zero() { tr * T::of(1e-14) } else { mu * T::of(10.0) };
    }
    linalg::scale(r, T::one() / tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_examples() {
        let n = Norm::<f64, 3>::new(NormSpec::euclidean()).unwrap();
        assert_eq!(n.value(&[3.0, 4.0, 0.0]).unwrap(), 5.0);
        let g = n.gradient(&[3.0, 4.0, 0.0]).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15 && g[2] == 0.0);
        let h = n.hessian(&[1.0, 0.0, 0.0]).unwrap();
        let expect = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(n.dual_value(&[0.0, 0.0, 2.0]).unwrap(), 2.0);
        assert_eq!(n.value(&[0.0, 0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn construction_rejections() {
        assert!(Norm::<f64, 2>::new(NormSpec::ellipsoid([[1.0, 2.0], [2.0, 1.0]])).is_err());
        assert!(Norm::<f64, 2>::new(NormSpec::ellipsoid([[1.0, 0.5], [0.0, 1.0]])).is_err());
        assert!(Norm::<f64, 2>::new(NormSpec::power(1.0)).is_err());
        assert!(Norm::<f64, 2>::new(NormSpec::power(0.5)).is_err());
        assert!(Norm::<f64, 3>::new(NormSpec::smoothed_polytope(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 4, 0.05)).is_err());
        assert!(Norm::<f64, 2>::new(NormSpec::smoothed_polytope(vec![[1.0, 0.0], [0.0, 1.0]], 3, 0.05)).is_err());
    }

    #[test]
    fn power_four_value_at_diagonal() {
        let n = Norm::<f64, 3>::new(NormSpec::power(4.0)).unwrap();
        let f = n.value(&[1.0, 1.0, 1.0]).unwrap();
        assert!((f - 3f64.powf(0.25)).abs() < 1e-15);
        let d = n.dual_value(&[1.0, 1.0, 1.0]).unwrap();
        assert!((d - 3f64.powf(0.75)).abs() < 1e-14);
    }

    #[test]
    fn ellipsoid_dual_example() {
        let n = Norm::<f64, 3>::new(NormSpec::ellipsoid_diag([1.0, 4.0, 9.0])).unwrap();
        assert!((n.dual_value(&[0.0, 2.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    }
}
