//! Pointwise verification of the algebra behind the monotonicity argument.
//!
//! Everything here works on a *state*: a gradient surrogate `ξ` (playing
//! `∇u`) and a symmetric matrix `U` (playing `∇²u`) constrained by
//! `a_ij,p(ξ) U_ij = 0`, i.e. `Δ_{F,p} u = 0` at a point. From a state we
//! assemble the level-set quantities (anisotropic mean curvature, `σ₂`, the
//! umbilicity "pinch", the two `a_F`-norms of `∇F(∇u)`) and compare direct
//! tensor contractions against their curvature forms. Differential
//! identities are checked by finite differences on closed-form p-harmonic
//! fields, never on solver output.
//!
//! Notation: `f = F_ξ(ξ)`, `G = F_ξξ(ξ)`, `a = ffᵀ + F G`, `v = U f`
//! (`= ∇(F(∇u))`), `A = fᵀ U f`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::functionals::PhiParams;
use crate::linalg::{self, Matrix, Vector};
use crate::norms::{self, Norm};
use crate::{wulff, Error, Real, Result};

/// A constrained second-order state at one point.
#[derive(Clone, Debug)]
pub struct HessianState<'a, T, const N: usize> {
    pub norm: &'a Norm<T, N>,
    pub p: T,
    /// Plays `∇u`; nonzero.
    pub xi: Vector<T, N>,
    /// Plays `∇²u`; symmetric.
    pub hess: Matrix<T, N>,
}

impl<'a, T: Real, const N: usize> HessianState<'a, T, N> {
    /// Wraps a state without projecting it; use
    /// [`HessianState::constraint_residual`] to see how well it satisfies
    /// `Δ_{F,p} u = 0`.
    pub fn new(norm: &'a Norm<T, N>, p: T, xi: Vector<T, N>, hess: Matrix<T, N>) -> Result<Self> {
        if !(p > T::one()) {
            return Err(Error::Precondition(format!("p must exceed 1, got {p}")));
        }
        norm.value(&xi)?;
        let size = linalg::frobenius_norm(&hess);
        if linalg::asymmetry(&hess) > T::of(1e-12) * size {
            return Err(Error::Precondition("the Hessian surrogate must be symmetric".into()));
        }
        Ok(Self { norm, p, xi, hess })
    }

    /// `|a_p : U| / (|a_p| |U|)`, zero for `U = 0`.
    pub fn constraint_residual(&self) -> T {
        let ap = self.a_p();
        let size = linalg::frobenius_norm(&ap) * linalg::frobenius_norm(&self.hess);
        if size == T::zero() {
            T::zero()
        } else {
            linalg::frobenius_dot(&ap, &self.hess).abs() / size
        }
    }

    fn a_p(&self) -> Matrix<T, N> {
        let (f, g, h) = self.norm.second_order(&self.xi);
        norms::a_p_from(f, &g, &h, self.p)
    }

    /// `W = a_p U`, whose trace is `Δ_{F,p} u`.
    pub fn w_matrix(&self) -> Matrix<T, N> {
        linalg::matmul(&self.a_p(), &self.hess)
    }

    pub fn algebra(&self) -> LevelSetAlgebra<T> {
        LevelSetAlgebra::new(self)
    }
}

/// Projects a random symmetric matrix onto `{a_ij,p(ξ) U_ij = 0}` along
/// `a_p`. Deterministic per seed.
pub fn sample_constrained_hessian<T: Real, const N: usize>(
    norm: &Norm<T, N>,
    p: T,
    xi: Vector<T, N>,
    seed: u64,
) -> Result<HessianState<'_, T, N>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    project_random(norm, p, xi, &mut rng)
}

fn project_random<'a, T: Real, const N: usize>(
    norm: &'a Norm<T, N>,
    p: T,
    xi: Vector<T, N>,
    rng: &mut ChaCha8Rng,
) -> Result<HessianState<'a, T, N>> {
    let mut u = linalg::zero_matrix::<T, N>();
    for i in 0..N {
        for j in i..N {
            let z: f64 = StandardNormal.sample(rng);
            u[i][j] = T::of(z);
            u[j][i] = u[i][j];
        }
    }
    let state = HessianState::new(norm, p, xi, u)?;
    let ap = state.a_p();
    let c = linalg::frobenius_dot(&ap, &u) / linalg::frobenius_dot(&ap, &ap);
    HessianState::new(norm, p, xi, linalg::mat_sub(&u, &linalg::mat_scale(&ap, c)))
}

/// Random states with `ξ` uniformly distributed in direction and
/// log-uniform in magnitude over `[0.1, 10]`.
pub fn sample_states<T: Real, const N: usize>(
    norm: &Norm<T, N>,
    p: T,
    count: usize,
    seed: u64,
) -> Result<Vec<HessianState<'_, T, N>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let d: Vector<T, N> = std::array::from_fn(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(z)
        });
        let r = linalg::norm(&d);
        if r < T::of(1e-6) {
            continue;
        }
        let magnitude = T::of(10f64.powf(rng.random_range(-1.0..1.0)));
        out.push(project_random(norm, p, linalg::scale(&d, magnitude / r), &mut rng)?);
    }
    Ok(out)
}

/// Level-set quantities derived from a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelSetAlgebra<T> {
    pub n: usize,
    pub p: T,
    /// `F(ξ)`.
    pub f: T,
    /// `A = F_i F_j U_ij`.
    pub normal_second: T,
    /// `H_F = (p−1) A / F`, valid for p-harmonic states.
    pub mean_curvature: T,
    /// `H_F = −F_ij U_ij`, valid for any state.
    pub mean_curvature_trace: T,
    /// `σ₂(κ_F) = S₂(G U)`.
    pub sigma2: T,
    /// `(n−2)/(n−1) σ₁² − 2σ₂` with `σ₁ = H_F`.
    pub pinch: T,
    /// `G_ij G_kl U_ik U_jl − (G_ij U_ij)²/(n−1)`.
    pub pinch_direct: T,
    /// `|∇(F(∇u))|²_{a_F} = a_ij v_i v_j`.
    pub grad_f_sq: T,
    /// `|∇ᵀ(F(∇u))|²_{a_F} = F G_ij v_i v_j`.
    pub tangential_sq: T,
}

impl<T: Real> LevelSetAlgebra<T> {
    pub fn new<const N: usize>(s: &HessianState<'_, T, N>) -> Self {
        let (f, g, h) = s.norm.second_order(&s.xi);
        let a = norms::a_from(f, &g, &h);
        let v = linalg::matvec(&s.hess, &g);
        let gu = linalg::matmul(&h, &s.hess);
        let tr = linalg::trace(&gu);
        let tr_sq = linalg::trace(&linalg::matmul(&gu, &gu));
        let nm1 = T::of_usize(N - 1);
        let normal_second = linalg::dot(&g, &v);
        let mean_curvature = (s.p - T::one()) * normal_second / f;
        let sigma2 = (tr * tr - tr_sq) / T::of(2.0);
        Self {
            n: N,
            p: s.p,
            f,
            normal_second,
            mean_curvature,
            mean_curvature_trace: -tr,
            sigma2,
            pinch: (nm1 - T::one()) / nm1 * mean_curvature * mean_curvature - T::of(2.0) * sigma2,
            pinch_direct: tr_sq - tr * tr / nm1,
            grad_f_sq: linalg::bilinear(&a, &v, &v),
            tangential_sq: f * linalg::bilinear(&h, &v, &v),
        }
    }
}

fn relative<T: Real>(lhs: T, rhs: T, scale: T) -> f64 {
    let d = (lhs - rhs).abs();
    if scale > T::zero() {
        (d / scale).f64()
    } else {
        d.f64()
    }
}

/// Relative residuals of the Kato-type identity and its companions at one
/// state. Each compares a direct contraction with the curvature form and is
/// normalized by the sum of magnitudes of the terms involved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct KatoResiduals {
    /// `a_ij a_kl U_ik U_jl` against `F² pinch + (1 + c)|∇F|² + (1 − c)|∇ᵀF|²`,
    /// `c = (p−1)²/(n−1)`.
    pub kato: f64,
    /// `F^{2−p} a_p(v, v)` against `|∇ᵀF|² + H_F² F²/(p−1)`.
    pub gradient_form: f64,
    /// `F^{4−2p} tr(a_p U a_p U)` against
    /// `n/(n−1) H_F² F² + 2(p−1)|∇ᵀF|² + F² pinch`.
    pub w_square: f64,
    /// `|∇F|² = |∇ᵀF|² + A²`.
    pub orthogonal: f64,
    /// The two expressions for `H_F`.
    pub mean_curvature: f64,
    /// Pinch from `σ₁, σ₂` against the direct contraction.
    pub pinch: f64,
}

impl KatoResiduals {
    pub fn max(&self) -> f64 {
        [self.kato, self.gradient_form, self.w_square, self.orthogonal, self.mean_curvature, self.pinch]
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn merge(&mut self, o: &Self) {
        self.kato = self.kato.max(o.kato);
        self.gradient_form = self.gradient_form.max(o.gradient_form);
        self.w_square = self.w_square.max(o.w_square);
        self.orthogonal = self.orthogonal.max(o.orthogonal);
        self.mean_curvature = self.mean_curvature.max(o.mean_curvature);
        self.pinch = self.pinch.max(o.pinch);
    }
}

/// Evaluates the Kato-type identity and its two companions at a state.
pub fn check_kato<T: Real, const N: usize>(s: &HessianState<'_, T, N>) -> KatoResiduals {
    let alg = s.algebra();
    let (f, g, h) = s.norm.second_order(&s.xi);
    let a = norms::a_from(f, &g, &h);
    let ap = norms::a_p_from(f, &g, &h, s.p);
    let u = &s.hess;
    let v = linalg::matvec(u, &g);
    let p = s.p;
    let n = T::of_usize(N);
    let two = T::of(2.0);
    let f2 = f * f;
    let hf2 = alg.mean_curvature * alg.mean_curvature * f2;

    // a_ij a_kl u_ik u_jl by explicit index contraction.
    let mut lhs = T::zero();
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                for l in 0..N {
                    lhs = lhs + a[i][j] * a[k][l] * u[i][k] * u[j][l];
                }
            }
        }
    }
    let c = (p - T::one()).powi(2) / (n - T::one());
    let terms = [f2 * alg.pinch, (T::one() + c) * alg.grad_f_sq, (T::one() - c) * alg.tangential_sq];
    let rhs = terms[0] + terms[1] + terms[2];
    let kato = relative(lhs, rhs, lhs.abs() + terms.iter().map(|t| t.abs()).sum::<T>());

    let lhs = f.powf(two - p) * linalg::bilinear(&ap, &v, &v);
    let rhs = alg.tangential_sq + hf2 / (p - T::one());
    let gradient_form = relative(lhs, rhs, lhs.abs() + alg.tangential_sq.abs() + (hf2 / (p - T::one())).abs());

    let mut lhs = T::zero();
    for i in 0..N {
        for j in 0..N {
            for k in 0..N {
                for l in 0..N {
                    lhs = lhs + ap[j][k] * ap[i][l] * u[i][k] * u[l][j];
                }
            }
        }
    }
    lhs = lhs * f.powf(T::of(4.0) - two * p);
    let terms = [n / (n - T::one()) * hf2, two * (p - T::one()) * alg.tangential_sq, f2 * alg.pinch];
    let rhs = terms[0] + terms[1] + terms[2];
    let w_square = relative(lhs, rhs, lhs.abs() + terms.iter().map(|t| t.abs()).sum::<T>());

    let a2 = alg.normal_second * alg.normal_second;
    let orthogonal = relative(alg.grad_f_sq, alg.tangential_sq + a2, alg.grad_f_sq.abs() + alg.tangential_sq.abs() + a2);

    // Both curvature forms are bounded by F|G||U|; cancellations below that
    // scale are round-off.
    let gu_scale = linalg::frobenius_norm(&h) * linalg::frobenius_norm(u);
    let mean_curvature = relative(alg.mean_curvature, alg.mean_curvature_trace, gu_scale);
    let pinch = relative(alg.pinch, alg.pinch_direct, gu_scale * gu_scale);

    KatoResiduals { kato, gradient_form, w_square, orthogonal, mean_curvature, pinch }
}

/// Largest residuals over a batch of states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KatoSummary {
    pub norm: String,
    pub p: f64,
    pub samples: usize,
    pub max_constraint_residual: f64,
    pub residuals: KatoResiduals,
}

impl KatoSummary {
    pub fn max(&self) -> f64 {
        self.residuals.max()
    }
}

/// Samples `count` constrained states and records the largest residuals.
pub fn kato_suite<T: Real, const N: usize>(norm: &Norm<T, N>, p: T, count: usize, seed: u64) -> Result<KatoSummary> {
    let states = sample_states(norm, p, count, seed)?;
    let mut residuals = KatoResiduals::default();
    let mut constraint = 0.0f64;
    for s in &states {
        residuals.merge(&check_kato(s));
        constraint = constraint.max(s.constraint_residual().f64());
    }
    Ok(KatoSummary { norm: norm.label(), p: p.f64(), samples: count, max_constraint_residual: constraint, residuals })
}

/// `X^j = −(q−1) u^{2−(q−1)p*} F^{q(p−1)−1} ((a_p v)_j F^{1−p} − p* F f_j / u)`.
pub fn x_field<T: Real, const N: usize>(norm: &Norm<T, N>, params: &PhiParams, u: T, xi: &Vector<T, N>, hess: &Matrix<T, N>) -> Vector<T, N> {
    let (p, q, ps) = (T::of(params.p), T::of(params.q), T::of(params.p_star()));
    let (f, g, h) = norm.second_order(xi);
    let ap = norms::a_p_from(f, &g, &h, p);
    let apv = linalg::matvec(&ap, &linalg::matvec(hess, &g));
    let c = -(q - T::one()) * u.powf(T::of(2.0) - (q - T::one()) * ps) * f.powf(q * (p - T::one()) - T::one());
    std::array::from_fn(|j| c * (apv[j] * f.powf(T::one() - p) - ps * f * g[j] / u))
}

/// Sum of the magnitudes of the two terms of `X`. On Wulff potentials they
/// cancel exactly, so this, not `|X|`, sets the scale of `div X`.
fn x_term_scale<T: Real, const N: usize>(norm: &Norm<T, N>, params: &PhiParams, u: T, xi: &Vector<T, N>, hess: &Matrix<T, N>) -> T {
    let (p, q, ps) = (T::of(params.p), T::of(params.q), T::of(params.p_star()));
    let (f, g, h) = norm.second_order(xi);
    let ap = norms::a_p_from(f, &g, &h, p);
    let apv = linalg::matvec(&ap, &linalg::matvec(hess, &g));
    let c = (q - T::one()) * u.powf(T::of(2.0) - (q - T::one()) * ps) * f.powf(q * (p - T::one()) - T::one());
    c * (linalg::norm(&apv) * f.powf(T::one() - p) + ps * f * linalg::norm(&g) / u)
}

/// `Y_λ = (u^{−1} − λ) X − F^{q(p−1)} u^{−(q−1)p*} F_ξ`.
pub fn y_field<T: Real, const N: usize>(
    norm: &Norm<T, N>,
    params: &PhiParams,
    lambda: T,
    u: T,
    xi: &Vector<T, N>,
    hess: &Matrix<T, N>,
) -> Vector<T, N> {
    let (p, q, ps) = (T::of(params.p), T::of(params.q), T::of(params.p_star()));
    let x = x_field(norm, params, u, xi, hess);
    let (f, g) = norm.first_order(xi);
    let c = f.powf(q * (p - T::one())) * u.powf(-(q - T::one()) * ps);
    std::array::from_fn(|j| (T::one() / u - lambda) * x[j] - c * g[j])
}

/// Sign-definite quantities at one state with a synthetic value `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignSample {
    /// `Θ` from its sum-of-squares form.
    pub theta: f64,
    /// `Θ = ⟨X, ∇(u^{−(q−1)p*} F^{(q−1)(p−1)})⟩` by direct contraction.
    pub theta_direct: f64,
    /// `div X` from its sum-of-squares form.
    pub div_x: f64,
    /// `div Y_λ = (u^{−1} − λ) div X`.
    pub div_y: f64,
    /// Magnitude against which the signs are judged: the prefactors times
    /// the sum of absolute values of the bracketed terms.
    pub theta_scale: f64,
    pub div_scale: f64,
}

/// Evaluates `Θ`, `div X` and `div Y_λ` at a state.
pub fn sign_sample<T: Real, const N: usize>(s: &HessianState<'_, T, N>, params: &PhiParams, lambda: T, u: T) -> SignSample {
    let alg = s.algebra();
    let (p, q, ps) = (T::of(params.p), T::of(params.q), T::of(params.p_star()));
    let one = T::one();
    let f = alg.f;
    let f2 = f * f;
    let gap = alg.mean_curvature - ps * f / u;
    let gap2 = gap * gap;

    let theta_pre = (q - one).powi(2) * u.powf(T::of(2.0) - T::of(2.0) * (q - one) * ps) * f.powf((T::of(2.0) * q - one) * (p - one) - one);
    let theta_terms = [gap2, (p - one) * alg.tangential_sq / f2];
    let theta = -theta_pre * (theta_terms[0] + theta_terms[1]);
    let theta_scale = theta_pre * (theta_terms[0].abs() + theta_terms[1].abs());

    let x = x_field(s.norm, params, u, &s.xi, &s.hess);
    let a = (q - one) * ps;
    let b = (q - one) * (p - one);
    let (_, g) = s.norm.first_order(&s.xi);
    let v = linalg::matvec(&s.hess, &g);
    let grad: Vector<T, N> =
        std::array::from_fn(|j| -a * u.powf(-a - one) * f.powf(b) * s.xi[j] + b * u.powf(-a) * f.powf(b - one) * v[j]);
    let theta_direct = linalg::dot(&x, &grad);

    let x_pre = (q - one) * u.powf(T::of(2.0) - (q - one) * ps) * f.powf(q * (p - one) - one);
    let x_terms = [alg.pinch, (q * (p - one) - one) * alg.tangential_sq / f2, (q - one - one / ps) * gap2];
    let div_x = -x_pre * (x_terms[0] + x_terms[1] + x_terms[2]);
    let div_scale = x_pre * x_terms.iter().map(|t| t.abs()).sum::<T>();
    SignSample {
        theta: theta.f64(),
        theta_direct: theta_direct.f64(),
        div_x: div_x.f64(),
        div_y: ((one / u - lambda) * div_x).f64(),
        theta_scale: theta_scale.f64(),
        div_scale: div_scale.f64(),
    }
}

/// Sign statistics over random constrained states.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignReport {
    pub norm: String,
    pub params: PhiParams,
    pub lambda: f64,
    pub samples: usize,
    /// Largest `Θ / scale`; at most round-off above zero.
    pub max_theta: f64,
    pub max_div_x: f64,
    pub max_div_y: f64,
    /// Samples where a quantity exceeds `tolerance · scale`.
    pub theta_violations: usize,
    pub div_x_violations: usize,
    pub div_y_violations: usize,
    pub tolerance: f64,
    /// Largest relative gap between the two expressions of `Θ`.
    pub theta_consistency: f64,
}

/// Relative round-off allowance for the sign checks.
pub const SIGN_TOLERANCE: f64 = 1e-12;

/// Samples `count` states with `u` uniform in `(0, 1)` and checks
/// `Θ ≤ 0`, `div X ≤ 0` and `div Y_λ ≤ 0`.
pub fn check_sign_fields<T: Real, const N: usize>(
    norm: &Norm<T, N>,
    params: &PhiParams,
    lambda: f64,
    count: usize,
    seed: u64,
) -> Result<SignReport> {
    if params.n != N {
        return Err(Error::Precondition("parameters are for a different dimension".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Precondition(format!("λ must lie in (0, 1), got {lambda}")));
    }
    let states = sample_states(norm, T::of(params.p), count, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut r = SignReport {
        norm: norm.label(),
        params: *params,
        lambda,
        samples: count,
        max_theta: f64::NEG_INFINITY,
        max_div_x: f64::NEG_INFINITY,
        max_div_y: f64::NEG_INFINITY,
        theta_violations: 0,
        div_x_violations: 0,
        div_y_violations: 0,
        tolerance: SIGN_TOLERANCE,
        theta_consistency: 0.0,
    };
    for s in &states {
        let u: f64 = rng.random_range(1e-3..1.0);
        let smp = sign_sample(s, params, T::of(lambda), T::of(u));
        let norm_of = |x: f64, scale: f64| if scale > 0.0 { x / scale } else { x };
        let (t, dx, dy) = (
            norm_of(smp.theta, smp.theta_scale),
            norm_of(smp.div_x, smp.div_scale),
            norm_of(smp.div_y, smp.div_scale * (1.0 / u - lambda)),
        );
        r.max_theta = r.max_theta.max(t);
        r.max_div_x = r.max_div_x.max(dx);
        r.max_div_y = r.max_div_y.max(dy);
        r.theta_violations += (t > SIGN_TOLERANCE) as usize;
        r.div_x_violations += (dx > SIGN_TOLERANCE) as usize;
        r.div_y_violations += (dy > SIGN_TOLERANCE) as usize;
        let gap = (smp.theta - smp.theta_direct).abs() / (smp.theta_scale + smp.theta_direct.abs()).max(f64::MIN_POSITIVE);
        r.theta_consistency = r.theta_consistency.max(gap);
    }
    Ok(r)
}

/// A closed-form p-harmonic function with value, gradient and Hessian.
pub trait AnalyticField<T: Real, const N: usize> {
    fn jet(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>, Matrix<T, N>)>;
}

/// `u = (F°(x)/R)^{−k}`, the capacitary potential of the Wulff ball `W_R`.
#[derive(Clone, Debug)]
pub struct WulffPotential<T, const N: usize> {
    pub norm: Norm<T, N>,
    pub p: T,
    pub radius: T,
}

impl<T: Real, const N: usize> AnalyticField<T, N> for WulffPotential<T, N> {
    fn jet(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>, Matrix<T, N>)> {
        let k = wulff::decay_exponent(N, self.p);
        let (r, g, h) = self.norm.dual_second_order(x)?;
        let s = r / self.radius;
        let u = s.powf(-k);
        let d1 = -k * u / r;
        let d2 = k * (k + T::one()) * u / (r * r);
        let grad = linalg::scale(&g, d1);
        let hess = linalg::mat_add(&linalg::mat_scale(&linalg::outer(&g, &g), d2), &linalg::mat_scale(&h, d1));
        Ok((u, grad, hess))
    }
}

/// `u = Σ_i c_i |x − y_i|^{2−n}`: harmonic, so p-harmonic for the Euclidean
/// norm with `p = 2` only. Unlike Wulff potentials its level sets are not
/// umbilic, so every term of the curvature identities is active.
#[derive(Clone, Debug)]
pub struct PointCharges<T, const N: usize> {
    pub charges: Vec<(Vector<T, N>, T)>,
}

impl<T: Real, const N: usize> AnalyticField<T, N> for PointCharges<T, N> {
    fn jet(&self, x: &Vector<T, N>) -> Result<(T, Vector<T, N>, Matrix<T, N>)> {
        if N < 3 {
            return Err(Error::Precondition("point charges need n ≥ 3".into()));
        }
        let m = T::of_usize(N) - T::of(2.0);
        let mut u = T::zero();
        let mut grad = linalg::zeros();
        let mut hess = linalg::zero_matrix();
        for (y, c) in &self.charges {
            let d = linalg::sub(x, y);
            let r = linalg::norm(&d);
            if r == T::zero() {
                return Err(Error::ZeroVector);
            }
            let e = linalg::scale(&d, T::one() / r);
            let phi = *c * r.powf(-m);
            u = u + phi;
            grad = linalg::axpy(&grad, -m * phi / r, &e);
            let radial = linalg::mat_scale(&linalg::outer(&e, &e), m * (m + T::one()) * phi / (r * r));
            let iso = linalg::mat_scale(&linalg::mat_sub(&linalg::identity(), &linalg::outer(&e, &e)), -m * phi / (r * r));
            hess = linalg::mat_add(&hess, &linalg::mat_add(&radial, &iso));
        }
        Ok((u, grad, hess))
    }
}

/// Finite-difference checks at one probe point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivProbe {
    pub point: Vec<f64>,
    pub u: f64,
    /// Relative `Δ_{F,p} u` of the field at the probe.
    pub pde_residual: f64,
    /// `max_i |∂_j S₂^{ij}(W)|`, relative to the individual terms.
    pub divergence_free: f64,
    /// `∂_j(S₂^{ij}(W) V_{ξ_i})` against `2 S₂(W)`.
    pub contracted: f64,
    /// Finite-difference `div X` against its sum-of-squares form.
    pub div_x: f64,
    /// Finite-difference `div Y_λ` against `(u^{−1} − λ) div X`.
    pub div_y: f64,
    /// `div X` from its sum-of-squares form.
    pub div_x_value: f64,
    /// Whether the steps `h` and `h/2` agree.
    pub richardson_ok: bool,
}

/// Finite-difference verification of the divergence identities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivReport {
    pub params: PhiParams,
    pub lambda: f64,
    pub probes: Vec<DivProbe>,
    pub max_divergence_free: f64,
    pub max_contracted: f64,
    pub max_div_x: f64,
    pub max_div_y: f64,
    pub richardson_ok: bool,
}

impl DivReport {
    pub fn max(&self) -> f64 {
        self.max_divergence_free.max(self.max_contracted).max(self.max_div_x).max(self.max_div_y)
    }
}

/// Relative step `h = STEP·|x|` of the difference quotients.
pub const FD_STEP: f64 = 1e-4;
/// Largest relative disagreement between steps `h` and `h/2`.
pub const RICHARDSON_GATE: f64 = 1e-7;

/// Fourth-order central difference of a vector-valued map along each axis:
/// returns `D[j][c] = ∂_j g_c(x)`.
fn jacobian<T: Real, const N: usize>(
    g: &dyn Fn(&Vector<T, N>) -> Result<Vec<T>>,
    x: &Vector<T, N>,
    h: T,
) -> Result<Vec<Vec<T>>> {
    (0..N)
        .map(|j| {
            let at = |s: T| {
                let mut y = *x;
                y[j] = y[j] + s * h;
                g(&y)
            };
            let (p1, m1, p2, m2) = (at(T::one())?, at(-T::one())?, at(T::of(2.0))?, at(T::of(-2.0))?);
            Ok((0..p1.len())
                .map(|c| (T::of(8.0) * (p1[c] - m1[c]) - (p2[c] - m2[c])) / (T::of(12.0) * h))
                .collect())
        })
        .collect()
}

/// Value and absolute-term scale of `Σ_j ∂_j g_j` for a vector field.
fn divergence<T: Real>(jac: &[Vec<T>]) -> (T, T) {
    let n = jac.len();
    (0..n).fold((T::zero(), T::zero()), |(s, a), j| (s + jac[j][j], a + jac[j][j].abs()))
}

/// Checks the divergence identities at `probes` on a p-harmonic field:
/// `∂_j S₂^{ij}(W) = 0`, `∂_j(S₂^{ij}(W) V_{ξ_i}) = 2S₂(W)`, and the
/// sum-of-squares forms of `div X` and `div Y_λ`.
pub fn check_div_identities<T: Real, const N: usize>(
    field: &dyn AnalyticField<T, N>,
    norm: &Norm<T, N>,
    params: &PhiParams,
    lambda: f64,
    probes: &[Vector<T, N>],
) -> Result<DivReport> {
    if params.n != N {
        return Err(Error::Precondition("parameters are for a different dimension".into()));
    }
    let p = T::of(params.p);
    let lam = T::of(lambda);
    let s2_tensor = |x: &Vector<T, N>| -> Result<Vec<T>> {
        let (_, xi, hess) = field.jet(x)?;
        let st = HessianState::new(norm, p, xi, hess)?;
        let w = st.w_matrix();
        let tr = linalg::trace(&w);
        let mut out = vec![T::zero(); N * N];
        for i in 0..N {
            for j in 0..N {
                out[i * N + j] = if i == j { tr } else { T::zero() } - w[j][i];
            }
        }
        Ok(out)
    };
    // S₂^{ij} V_{ξ_i}, indexed by j.
    let contracted = |x: &Vector<T, N>| -> Result<Vec<T>> {
        let (_, xi, _) = field.jet(x)?;
        let s = s2_tensor(x)?;
        let (f, g) = norm.first_order(&xi);
        let fp = f.powf(p - T::one());
        Ok((0..N).map(|j| (0..N).map(|i| s[i * N + j] * fp * g[i]).sum()).collect())
    };
    let x_at = |x: &Vector<T, N>| -> Result<Vec<T>> {
        let (u, xi, hess) = field.jet(x)?;
        Ok(x_field(norm, params, u, &xi, &hess).to_vec())
    };
    let y_at = |x: &Vector<T, N>| -> Result<Vec<T>> {
        let (u, xi, hess) = field.jet(x)?;
        Ok(y_field(norm, params, lam, u, &xi, &hess).to_vec())
    };

    let mut report = DivReport {
        params: *params,
        lambda,
        probes: Vec::with_capacity(probes.len()),
        max_divergence_free: 0.0,
        max_contracted: 0.0,
        max_div_x: 0.0,
        max_div_y: 0.0,
        richardson_ok: true,
    };
    for x in probes {
        let (u, xi, hess) = field.jet(x)?;
        let state = HessianState::new(norm, p, xi, hess)?;
        let step = T::of(FD_STEP) * linalg::norm(x);
        let mut gate = true;
        let radius = linalg::norm(x);
        let pair = |g: &dyn Fn(&Vector<T, N>) -> Result<Vec<T>>, magnitude: T| -> Result<(T, T, bool)> {
            let (d1, s1) = divergence(&jacobian(g, x, step)?);
            let (d2, _) = divergence(&jacobian(g, x, step / T::of(2.0))?);
            let scale = s1.max(d1.abs()) + magnitude / radius;
            Ok((d1, scale, (d1 - d2).abs() <= T::of(RICHARDSON_GATE) * scale))
        };

        // ∂_j S^{ij} for each i, as a divergence of the i-th row field.
        let mut divergence_free = 0.0f64;
        let jac_s = jacobian(&s2_tensor, x, step)?;
        let jac_s2 = jacobian(&s2_tensor, x, step / T::of(2.0))?;
        for i in 0..N {
            let (mut d, mut sc, mut d2) = (T::zero(), T::zero(), T::zero());
            for j in 0..N {
                d = d + jac_s[j][i * N + j];
                d2 = d2 + jac_s2[j][i * N + j];
                sc = sc + jac_s[j][i * N + j].abs();
            }
            if (d - d2).abs() > T::of(RICHARDSON_GATE) * sc {
                gate = false;
            }
            divergence_free = divergence_free.max(relative(d, T::zero(), sc));
        }

        let w = state.w_matrix();
        let tr = linalg::trace(&w);
        let two_s2 = tr * tr - linalg::trace(&linalg::matmul(&w, &w));
        let (dc, sc, ok_c) = pair(&contracted, T::zero())?;
        let contracted_res = relative(dc, two_s2, sc + two_s2.abs());

        let sample = sign_sample(&state, params, lam, u);
        let div_x_closed = T::of(sample.div_x);
        let x_mag = x_term_scale(norm, params, u, &state.xi, &state.hess);
        let (dx, sx, ok_x) = pair(&x_at, x_mag)?;
        let div_x = relative(dx, div_x_closed, sx + div_x_closed.abs());
        let div_y_closed = T::of(sample.div_y);
        let (f, g) = norm.first_order(&state.xi);
        let y_mag = (T::one() / u - lam).abs() * x_mag
            + f.powf(p * T::of(params.q) - p) * u.powf(-T::of((params.q - 1.0) * params.p_star())) * linalg::norm(&g);
        let (dy, sy, ok_y) = pair(&y_at, y_mag)?;
        gate &= ok_c && ok_x && ok_y;
        let div_y = relative(dy, div_y_closed, sy + div_y_closed.abs());

        report.max_divergence_free = report.max_divergence_free.max(divergence_free);
        report.max_contracted = report.max_contracted.max(contracted_res);
        report.max_div_x = report.max_div_x.max(div_x);
        report.max_div_y = report.max_div_y.max(div_y);
        report.richardson_ok &= gate;
        report.probes.push(DivProbe {
            point: x.iter().map(|c| c.f64()).collect(),
            u: u.f64(),
            pde_residual: state.constraint_residual().f64(),
            divergence_free,
            contracted: contracted_res,
            div_x,
            div_y,
            div_x_value: sample.div_x,
            richardson_ok: gate,
        });
    }
    Ok(report)
}

/// Probe points `r R θ` on the unit Wulff boundary directions `θ`, for each
/// `r` in `radii`, with `count` pseudo-random directions per radius.
pub fn wulff_probes<T: Real, const N: usize>(
    norm: &Norm<T, N>,
    radius: T,
    radii: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vector<T, N>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(radii.len() * count);
    for &r in radii {
        let mut made = 0;
        while made < count {
            let d: Vector<T, N> = std::array::from_fn(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z)
            });
            if linalg::norm(&d) < T::of(1e-6) {
                continue;
            }
            let fd = norm.dual_value(&d)?;
            out.push(linalg::scale(&d, T::of(r) * radius / fd));
            made += 1;
        }
    }
    Ok(out)
}
