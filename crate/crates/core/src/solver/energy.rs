//! Discrete energy, its derivatives, and the radial line-block preconditioner.
//!
//! The discrete energy of a P1 field `u` is
//!
//! ```text
//! E_δ(u) = Σ_T |T| [(F(∇u)² + δ²)^{p/2} − δ^p] + Σ_a c_a [(u_a² + η²)^{p/2} − η^p]
//! ```
//!
//! where the second sum runs over outer-sphere vertices and replaces the
//! unbounded exterior of `B_{R_out}` by the exact energy of the Wulff-radial
//! continuation, `c_a = k^{p−1} R^{n−p} F°(θ_a)^{−p} w_a` with `w_a` the
//! lumped solid angle of vertex `a` in the spherical triangulation,
//! regularized at scale `η = R δ / k`.
//!
//! Element loops run in two colours over radial layers so that scattered
//! writes never alias; partial sums are reduced in layer order, which keeps
//! results independent of the thread count.

use rayon::prelude::*;

use super::mesh::{AnnularGrid, Element};
use crate::linalg;
use crate::norms::Norm;
use crate::Real;

/// Upper-triangular slot of the symmetric element matrix entry `(v, w)`.
const SLOT: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

pub(crate) struct Problem<'a, T, const N: usize> {
    pub grid: &'a AnnularGrid<T, N>,
    pub norm: &'a Norm<T, N>,
    pub p: T,
    pub k: T,
    /// Exterior coefficient per ray in the outer layer.
    pub outer: Vec<T>,
}

/// Element matrices and outer diagonal of the Hessian at a fixed state.
pub(crate) struct Hessian<T> {
    ke: Vec<[T; 10]>,
    outer_diag: Vec<T>,
}

/// `LDLᵀ` factors of the Hessian restricted to each ray.
pub(crate) struct LinePreconditioner<T> {
    d: Vec<T>,
    l: Vec<T>,
}

/// Runs `f(layer, base, chunk)` over element layers in two colours, where
/// `chunk` holds vertex rows `layer` and `layer + 1` starting at flat index
/// `base`. Returns the per-layer results in layer order.
fn two_colour<E, R, F>(out: &mut [E], rays: usize, layers: usize, f: F) -> Vec<R>
where
    E: Send,
    R: Send + Default + Clone,
    F: Fn(usize, usize, &mut [E]) -> R + Sync,
{
    let mut partial = vec![R::default(); layers];
    for colour in 0..2 {
        let start = colour * rays;
        if start >= out.len() {
            continue;
        }
        let res: Vec<(usize, R)> = out[start..]
            .par_chunks_mut(2 * rays)
            .enumerate()
            .filter_map(|(c, chunk)| {
                let layer = 2 * c + colour;
                (layer < layers).then(|| (layer, f(layer, layer * rays, chunk)))
            })
            .collect();
        for (layer, r) in res {
            partial[layer] = r;
        }
    }
    partial
}

#[inline]
fn local_gradient<T: Real, const N: usize>(e: &Element<T, N>, u: &[T]) -> [T; N] {
    let mut g = [T::zero(); N];
    for v in 0..=N {
        let uv = u[e.v[v] as usize];
        for d in 0..N {
            g[d] = g[d] + uv * e.grad[v][d];
        }
    }
    g
}

impl<'a, T: Real, const N: usize> Problem<'a, T, N> {
    fn layers(&self) -> usize {
        self.grid.n_radial - 1
    }

    fn layer_elements(&self, layer: usize) -> &[Element<T, N>] {
        &self.grid.elements[self.grid.layer_start[layer]..self.grid.layer_start[layer + 1]]
    }

    fn outer_base(&self) -> usize {
        (self.grid.n_radial - 1) * self.grid.rays
    }

    #[inline]
    fn density(&self, f2: T, delta: T) -> T {
        let half = self.p / T::of(2.0);
        (f2 + delta * delta).powf(half) - delta.powf(self.p)
    }

    fn outer_delta(&self, delta: T) -> T {
        self.grid.r_out * delta / self.k
    }

    /// Energy split into the interior (mesh) part and the exterior part.
    pub fn energy_parts(&self, u: &[T], delta: T) -> (T, T) {
        let parts: Vec<T> = (0..self.layers())
            .into_par_iter()
            .map(|layer| {
                let mut acc = T::zero();
                for e in self.layer_elements(layer) {
                    let g = local_gradient(e, u);
                    let f = self.norm.first_order(&g).0;
                    acc = acc + e.vol * self.density(f * f, delta);
                }
                acc
            })
            .collect();
        let interior = parts.into_iter().fold(T::zero(), |a, b| a + b);
        let eta = self.outer_delta(delta);
        let base = self.outer_base();
        let mut exterior = T::zero();
        for (a, c) in self.outer.iter().enumerate() {
            if *c > T::zero() {
                let v = u[base + a];
                exterior = exterior + *c * self.density(v * v, eta);
            }
        }
        (interior, exterior)
    }

    pub fn energy(&self, u: &[T], delta: T) -> T {
        let (i, e) = self.energy_parts(u, delta);
        i + e
    }

    /// Energy and gradient; the gradient vanishes on the inner layer.
    pub fn energy_gradient(&self, u: &[T], delta: T, grad: &mut [T]) -> T {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let half = self.p / T::of(2.0);
        let parts = two_colour(grad, self.grid.rays, self.layers(), |layer, base, chunk| {
            let mut acc = T::zero();
            for e in self.layer_elements(layer) {
                let g = local_gradient(e, u);
                let (f, fx) = self.norm.first_order(&g);
                let q = f * f + delta * delta;
                acc = acc + e.vol * (q.powf(half) - delta.powf(self.p));
                // ∇_ξ W = p q^{p/2−1} F F_ξ
                let s = e.vol * self.p * q.powf(half - T::one()) * f;
                for v in 0..=N {
                    let idx = e.v[v] as usize - base;
                    chunk[idx] = chunk[idx] + s * linalg::dot(&fx, &e.grad[v]);
                }
            }
            acc
        });
        let mut energy = parts.into_iter().fold(T::zero(), |a, b| a + b);
        let eta = self.outer_delta(delta);
        let base = self.outer_base();
        for (a, c) in self.outer.iter().enumerate() {
            if *c > T::zero() {
                let v = u[base + a];
                let q = v * v + eta * eta;
                energy = energy + *c * (q.powf(half) - eta.powf(self.p));
                grad[base + a] = grad[base + a] + *c * self.p * q.powf(half - T::one()) * v;
            }
        }
        grad[..self.grid.rays].iter_mut().for_each(|g| *g = T::zero());
        energy
    }

    /// Element matrices of the Hessian at `u`.
    pub fn hessian(&self, u: &[T], delta: T) -> Hessian<T> {
        let half = self.p / T::of(2.0);
        let p = self.p;
        let per_layer = self.grid.layer_start[1];
        let mut ke = vec![[T::zero(); 10]; self.grid.elements.len()];
        ke.par_chunks_mut(per_layer).zip(self.grid.elements.par_chunks(per_layer)).for_each(|(kc, ec)| {
            for (k, e) in kc.iter_mut().zip(ec) {
                let g = local_gradient(e, u);
                let (f, fx, fxx) = self.norm.second_order(&g);
                let q = f * f + delta * delta;
                let scale = e.vol * p * q.powf(half - T::one());
                let radial = T::one() + (p - T::of(2.0)) * f * f / q;
                // D²W = p q^{p/2−1} [(1 + (p−2)F²/q) F_ξF_ξᵀ + F F_ξξ]
                let mut dw = [[T::zero(); N]; N];
                for r in 0..N {
                    for c in 0..N {
                        dw[r][c] = scale * (radial * fx[r] * fx[c] + f * fxx[r][c]);
                    }
                }
                for v in 0..=N {
                    let dv = linalg::matvec(&dw, &e.grad[v]);
                    for w in v..=N {
                        k[SLOT[v][w]] = linalg::dot(&dv, &e.grad[w]);
                    }
                }
            }
        });
        let eta = self.outer_delta(delta);
        let base = self.outer_base();
        let outer_diag = self
            .outer
            .iter()
            .enumerate()
            .map(|(a, c)| {
                if *c > T::zero() {
                    let v = u[base + a];
                    let q = v * v + eta * eta;
                    *c * p * q.powf(half - T::of(2.0)) * ((p - T::one()) * v * v + eta * eta)
                } else {
                    T::zero()
                }
            })
            .collect();
        Hessian { ke, outer_diag }
    }

    /// `out = H v` on free vertices; zero on the inner layer.
    pub fn hess_vec(&self, h: &Hessian<T>, v: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        let ls = &self.grid.layer_start;
        two_colour(out, self.grid.rays, self.layers(), |layer, base, chunk| {
            let range = ls[layer]..ls[layer + 1];
            for (e, k) in self.grid.elements[range.clone()].iter().zip(&h.ke[range]) {
                let mut loc = [T::zero(); 4];
                for a in 0..=N {
                    loc[a] = v[e.v[a] as usize];
                }
                for a in 0..=N {
                    let mut acc = T::zero();
                    for b in 0..=N {
                        acc = acc + k[SLOT[a][b]] * loc[b];
                    }
                    let idx = e.v[a] as usize - base;
                    chunk[idx] = chunk[idx] + acc;
                }
            }
        });
        let base = self.outer_base();
        for (a, d) in h.outer_diag.iter().enumerate() {
            out[base + a] = out[base + a] + *d * v[base + a];
        }
        out[..self.grid.rays].iter_mut().for_each(|o| *o = T::zero());
    }

    /// Factorizes the tridiagonal Hessian blocks along each ray.
    pub fn line_preconditioner(&self, h: &Hessian<T>) -> LinePreconditioner<T> {
        let rays = self.grid.rays;
        let nv = self.grid.vertex_count();
        let mut band = vec![[T::zero(); 2]; nv];
        let ls = &self.grid.layer_start;
        two_colour(&mut band, rays, self.layers(), |layer, base, chunk| {
            let range = ls[layer]..ls[layer + 1];
            for (e, k) in self.grid.elements[range.clone()].iter().zip(&h.ke[range]) {
                for a in 0..=N {
                    let va = e.v[a] as usize;
                    chunk[va - base][0] = chunk[va - base][0] + k[SLOT[a][a]];
                    for b in 0..=N {
                        let vb = e.v[b] as usize;
                        if vb == va + rays {
                            chunk[va - base][1] = chunk[va - base][1] + k[SLOT[a][b]];
                        }
                    }
                }
            }
        });
        let base = self.outer_base();
        for (a, d) in h.outer_diag.iter().enumerate() {
            band[base + a][0] = band[base + a][0] + *d;
        }
        let mut d = vec![T::zero(); nv];
        let mut l = vec![T::zero(); nv];
        let tiny = T::min_positive_value().sqrt();
        for i in 1..self.grid.n_radial {
            for a in 0..rays {
                let idx = i * rays + a;
                let mut di = band[idx][0];
                if i > 1 {
                    let prev = idx - rays;
                    di = di - l[prev] * band[prev][1];
                }
                d[idx] = di.max(tiny);
                l[idx] = band[idx][1] / d[idx];
            }
        }
        LinePreconditioner { d, l }
    }
}

impl<T: Real> LinePreconditioner<T> {
    /// `z = M⁻¹ r`, with `z = 0` on the inner layer.
    pub fn apply(&self, rays: usize, r: &[T], z: &mut [T]) {
        let layers = r.len() / rays;
        z[..rays].iter_mut().for_each(|v| *v = T::zero());
        z[rays..2 * rays].copy_from_slice(&r[rays..2 * rays]);
        for i in 2..layers {
            for a in 0..rays {
                let idx = i * rays + a;
                z[idx] = r[idx] - self.l[idx - rays] * z[idx - rays];
            }
        }
        for a in 0..rays {
            let idx = (layers - 1) * rays + a;
            z[idx] = z[idx] / self.d[idx];
        }
        for i in (1..layers - 1).rev() {
            for a in 0..rays {
                let idx = i * rays + a;
                z[idx] = z[idx] / self.d[idx] - self.l[idx] * z[idx + rays];
            }
        }
    }
}
