//! Annular simplicial mesh between `∂Ω` and the sphere of radius `R_out`.
//!
//! Vertices sit on rays: one ray per sphere-quadrature node, plus the two
//! poles in three dimensions. Along every ray the radius is
//! `r = (1 − s) ρ(θ) + s R_out` for a shared sequence `0 = s_0 < … < s_{M} = 1`.
//! Vertex `(i, a)` (layer `i`, ray `a`) has flat index `i * rays + a`, so a
//! radial layer is a contiguous block.
//!
//! Hexahedral cells in `(s, ring, azimuth)` index space are cut into six
//! Kuhn tetrahedra; the triangular prisms around the poles into three
//! tetrahedra with matching face diagonals. In two dimensions each
//! quadrilateral becomes two triangles.

use crate::domains::StarDomain;
use crate::linalg::{self, Vector};
use crate::sphere::SphereGrid;
use crate::{Error, Real, Result};

/// Resolution and extent of an annular grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec<T> {
    /// Nodes per ray, including both ends.
    pub n_radial: usize,
    /// Gauss–Legendre rings (ignored in two dimensions).
    pub n_polar: usize,
    /// Azimuthal nodes per ring; must be even.
    pub n_azimuth: usize,
    pub r_out: T,
    /// Expected decay exponent `k` of the potential along rays; concentrates
    /// radial nodes where `r^{−k}` varies. `None` gives log-uniform spacing.
    pub decay: Option<T>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Element<T, const N: usize> {
    pub v: [u32; 4],
    /// Gradients of the barycentric coordinates (first `N + 1` used).
    pub grad: [[T; N]; 4],
    pub vol: T,
}

/// Where a meridian stencil point takes its value from.
#[derive(Clone, Copy, Debug)]
enum Src {
    Ring(usize, bool),
    North,
    South,
}

/// The annular mesh with precomputed element geometry.
#[derive(Clone, Debug)]
pub struct AnnularGrid<T, const N: usize> {
    pub sphere: SphereGrid<T, N>,
    pub n_radial: usize,
    pub s: Vec<T>,
    pub r_out: T,
    /// Vertices per layer: sphere nodes, then north and south poles in 3D.
    pub rays: usize,
    pub ray_dirs: Vec<Vector<T, N>>,
    pub rho: Vec<T>,
    /// Tangential gradient of `ρ̂` at each ray direction.
    pub rho_grad: Vec<Vector<T, N>>,
    /// Outward unit normal of `∂Ω` at each quadrature ray.
    pub inner_normal: Vec<Vector<T, N>>,
    /// Euclidean area element of `∂Ω` at each quadrature ray.
    pub inner_area: Vec<T>,
    pub positions: Vec<Vector<T, N>>,
    /// Lumped solid-angle weight of each ray: a third (half in 2D) of the
    /// spherical simplices of the outer triangulation that contain it.
    pub outer_weights: Vec<T>,
    pub(crate) elements: Vec<Element<T, N>>,
    /// `elements[layer_start[i]..layer_start[i + 1]]` lie between layers `i`
    /// and `i + 1`.
    pub(crate) layer_start: Vec<usize>,
    pub domain_label: String,
    pub rho_min: T,
    pub rho_max: T,
    ds_weights: Vec<([usize; 5], [T; 5])>,
    meridian: Vec<[(Src, T); 5]>,
}

/// Weights `w_m` with `f'(x0) ≈ Σ w_m f(x_m)`.
pub fn lagrange_derivative_weights(nodes: &[f64], x0: f64) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|m| {
            let mut total = 0.0;
            for l in 0..n {
                if l == m {
                    continue;
                }
                let mut prod = 1.0 / (nodes[m] - nodes[l]);
                for q in 0..n {
                    if q != m && q != l {
                        prod *= (x0 - nodes[q]) / (nodes[m] - nodes[q]);
                    }
                }
                total += prod;
            }
            total
        })
        .collect()
}

/// Weights `w_m` with `f(x0) ≈ Σ w_m f(x_m)`.
pub fn lagrange_weights(nodes: &[f64], x0: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|m| {
            let mut prod = 1.0;
            for q in 0..nodes.len() {
                if q != m {
                    prod *= (x0 - nodes[q]) / (nodes[m] - nodes[q]);
                }
            }
            prod
        })
        .collect()
}

/// Radial parameter nodes on the reference ray `[ρ_ref, R]`.
///
/// Log-uniform spacing; when a decay exponent `k` is given and
/// `ln(R/ρ_ref) > 12/k`, three quarters of the intervals cover
/// `ln r ∈ [ln ρ_ref, ln ρ_ref + 12/k]` (where `r^{−k}` drops by `e^{−12}`)
/// and the rest grow geometrically out to `R`.
pub fn radial_parameters(n_radial: usize, rho_ref: f64, r_out: f64, decay: Option<f64>) -> Vec<f64> {
    let m = n_radial - 1;
    let total = (r_out / rho_ref).ln();
    let core = decay.map(|k| 12.0 / k).unwrap_or(f64::INFINITY);
    let mut logs = Vec::with_capacity(n_radial);
    if core >= total || m < 8 {
        for i in 0..=m {
            logs.push(total * i as f64 / m as f64);
        }
    } else {
        let m1 = ((0.75 * m as f64).round() as usize).clamp(1, m - 1);
        let m2 = m - m1;
        let h = core / m1 as f64;
        for i in 0..=m1 {
            logs.push(h * i as f64);
        }
        let rest = total - core;
        // h Σ_{j=1}^{m2} g^j = rest
        let sum = |g: f64| (1..=m2).map(|j| h * g.powi(j as i32)).sum::<f64>();
        let (mut lo, mut hi) = (1.0, 2.0);
        while sum(hi) < rest {
            hi *= 2.0;
        }
        if sum(lo) > rest {
            // already wide enough with uniform steps; shrink uniformly
            let hh = rest / m2 as f64;
            for j in 1..=m2 {
                logs.push(core + hh * j as f64);
            }
        } else {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sum(mid) < rest {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let g = 0.5 * (lo + hi);
            let mut acc = core;
            for j in 1..=m2 {
                acc += h * g.powi(j as i32);
                logs.push(acc);
            }
        }
    }
    let last = *logs.last().unwrap();
    logs.iter()
        .map(|l| {
            let t = rho_ref * (l * total / last).exp();
            ((t - rho_ref) / (r_out - rho_ref)).clamp(0.0, 1.0)
        })
        .collect()
}

impl<T: Real, const N: usize> AnnularGrid<T, N> {
    /// Builds the mesh between `∂Ω` and the sphere of radius `spec.r_out`.
    pub fn build(domain: &StarDomain<T, N>, spec: &GridSpec<T>) -> Result<Self> {
        if N != 2 && N != 3 {
            return Err(Error::Precondition(format!("annular grids support dimensions 2 and 3, got {N}")));
        }
        if spec.n_radial < 6 {
            return Err(Error::Precondition("at least 6 radial nodes are required".into()));
        }
        if spec.n_azimuth % 2 != 0 {
            return Err(Error::Precondition("the azimuthal resolution must be even".into()));
        }
        let sphere = SphereGrid::<T, N>::new(spec.n_polar, spec.n_azimuth)?;
        let n_ang = sphere.len();
        let mut ray_dirs = sphere.nodes.clone();
        if N == 3 {
            let mut north = linalg::zeros::<T, N>();
            north[N - 1] = T::one();
            let mut south = linalg::zeros::<T, N>();
            south[N - 1] = -T::one();
            ray_dirs.push(north);
            ray_dirs.push(south);
        }
        let rays = ray_dirs.len();
        let mut rho = Vec::with_capacity(rays);
        let mut rho_grad = Vec::with_capacity(rays);
        for d in &ray_dirs {
            let j = domain.radial_jet(d)?;
            rho.push(j.v);
            rho_grad.push(j.g);
        }
        let rho_min = rho.iter().fold(T::infinity(), |m, v| m.min(*v));
        let rho_max = rho.iter().fold(T::zero(), |m, v| m.max(*v));
        if !(spec.r_out > T::of(2.0) * rho_max) {
            return Err(Error::Precondition(format!(
                "R_out = {} must exceed twice the maximal boundary radius {}",
                spec.r_out,
                rho_max
            )));
        }
        let mut inner_normal = Vec::with_capacity(n_ang);
        let mut inner_area = Vec::with_capacity(n_ang);
        for (t, w) in sphere.nodes.iter().zip(&sphere.weights) {
            let smp = domain.sample(t, *w)?;
            inner_normal.push(smp.normal);
            inner_area.push(smp.weight);
        }
        let s: Vec<T> = radial_parameters(spec.n_radial, rho_min.f64(), spec.r_out.f64(), spec.decay.map(|k| k.f64()))
            .into_iter()
            .map(T::of)
            .collect();
        let n_radial = spec.n_radial;
        let mut positions = Vec::with_capacity(n_radial * rays);
        for si in &s {
            for a in 0..rays {
                let r = (T::one() - *si) * rho[a] + *si * spec.r_out;
                positions.push(linalg::scale(&ray_dirs[a], r));
            }
        }

        let mut grid = Self {
            sphere,
            n_radial,
            s,
            r_out: spec.r_out,
            rays,
            ray_dirs,
            rho,
            rho_grad,
            inner_normal,
            inner_area,
            positions,
            outer_weights: Vec::new(),
            elements: Vec::new(),
            layer_start: Vec::new(),
            domain_label: domain.label(),
            rho_min,
            rho_max,
            ds_weights: Vec::new(),
            meridian: Vec::new(),
        };
        grid.build_elements()?;
        grid.build_outer_weights();
        grid.build_stencils();
        Ok(grid)
    }

    /// Number of ray nodes `n_radial × (quadrature directions)`.
    pub fn node_count(&self) -> usize {
        self.n_radial * self.sphere.len()
    }

    /// Number of mesh vertices, including pole rays.
    pub fn vertex_count(&self) -> usize {
        self.n_radial * self.rays
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Number of sphere-quadrature rays (excludes poles).
    pub fn angular_count(&self) -> usize {
        self.sphere.len()
    }

    #[inline]
    pub fn vertex(&self, layer: usize, ray: usize) -> usize {
        layer * self.rays + ray
    }

    /// Radius of vertex `(layer, ray)`.
    #[inline]
    pub fn radius(&self, layer: usize, ray: usize) -> T {
        (T::one() - self.s[layer]) * self.rho[ray] + self.s[layer] * self.r_out
    }

    /// Sum of element volumes.
    pub fn mesh_volume(&self) -> T {
        self.elements.iter().map(|e| e.vol).sum()
    }

    fn push_simplex(&mut self, v: &[usize]) -> Result<()> {
        let x0 = self.positions[v[0]];
        let mut m = linalg::zero_matrix::<T, N>();
        for c in 0..N {
            let d = linalg::sub(&self.positions[v[c + 1]], &x0);
            for r in 0..N {
                m[r][c] = d[r];
            }
        }
        let (inv, det) = linalg::inverse_det(&m)
            .ok_or_else(|| Error::InvalidSpec("degenerate mesh element; increase the resolution".into()))?;
        let mut grad = [[T::zero(); N]; 4];
        let mut g0 = linalg::zeros::<T, N>();
        for c in 0..N {
            grad[c + 1] = inv[c];
            g0 = linalg::sub(&g0, &inv[c]);
        }
        grad[0] = g0;
        let fact: usize = (1..=N).product();
        let mut vv = [0u32; 4];
        for (slot, idx) in vv.iter_mut().zip(v) {
            *slot = *idx as u32;
        }
        if N == 2 {
            vv[3] = vv[2];
        }
        self.elements.push(Element { v: vv, grad, vol: det.abs() / T::of_usize(fact) });
        Ok(())
    }

    fn build_elements(&mut self) -> Result<()> {
        let n_phi = self.sphere.azimuth;
        let n_th = self.sphere.polar;
        let rays = self.rays;
        self.layer_start.push(0);
        for i in 0..self.n_radial - 1 {
            let node = |layer: usize, a: usize| layer * rays + a;
            if N == 2 {
                for k in 0..n_phi {
                    let k1 = (k + 1) % n_phi;
                    let (a, b, c, d) = (node(i, k), node(i, k1), node(i + 1, k), node(i + 1, k1));
                    self.push_simplex(&[a, b, d])?;
                    self.push_simplex(&[a, c, d])?;
                }
            } else {
                let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                for j in 0..n_th - 1 {
                    for k in 0..n_phi {
                        let at = |d: [usize; 3]| node(i + d[0], (j + d[1]) * n_phi + (k + d[2]) % n_phi);
                        for p in &perms {
                            let mut d = [0usize; 3];
                            let mut vs = [at(d); 4];
                            for (step, axis) in p.iter().enumerate() {
                                d[*axis] = 1;
                                vs[step + 1] = at(d);
                            }
                            self.push_simplex(&vs)?;
                        }
                    }
                }
                let caps = [(n_th - 1, self.sphere.len()), (0, self.sphere.len() + 1)];
                for (ring, pole) in caps {
                    for k in 0..n_phi {
                        let k1 = (k + 1) % n_phi;
                        let (a, aa) = (node(i, pole), node(i + 1, pole));
                        let (b, c) = (node(i, ring * n_phi + k), node(i, ring * n_phi + k1));
                        let (bb, cc) = (node(i + 1, ring * n_phi + k), node(i + 1, ring * n_phi + k1));
                        self.push_simplex(&[a, aa, bb, cc])?;
                        self.push_simplex(&[a, b, c, cc])?;
                        self.push_simplex(&[a, b, cc, bb])?;
                    }
                }
            }
            self.layer_start.push(self.elements.len());
        }
        Ok(())
    }

    fn build_outer_weights(&mut self) {
        let n_phi = self.sphere.azimuth;
        let mut w = vec![T::zero(); self.rays];
        let dirs = &self.ray_dirs;
        // exact solid angle of the spherical simplex spanned by the rays
        let facet = |w: &mut Vec<T>, ids: &[usize]| {
            let x: Vec<Vector<T, N>> = ids.iter().map(|&a| dirs[a]).collect();
            let measure = if N == 2 {
                linalg::dot(&x[0], &x[1]).max(-T::one()).min(T::one()).acos()
            } else {
                let (a, b, c) = (&x[0], &x[1], &x[2]);
                let triple = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0]);
                let den = T::one() + linalg::dot(a, b) + linalg::dot(b, c) + linalg::dot(c, a);
                T::of(2.0) * triple.abs().atan2(den)
            };
            let share = measure / T::of_usize(ids.len());
            for &a in ids {
                w[a] = w[a] + share;
            }
        };
        if N == 2 {
            for k in 0..n_phi {
                facet(&mut w, &[k, (k + 1) % n_phi]);
            }
        } else {
            let n_th = self.sphere.polar;
            for j in 0..n_th - 1 {
                for k in 0..n_phi {
                    let k1 = (k + 1) % n_phi;
                    let (a, b, c, d) = (j * n_phi + k, j * n_phi + k1, (j + 1) * n_phi + k, (j + 1) * n_phi + k1);
                    facet(&mut w, &[a, c, d]);
                    facet(&mut w, &[a, b, d]);
                }
            }
            let len = self.sphere.len();
            for (ring, pole) in [(n_th - 1, len), (0, len + 1)] {
                for k in 0..n_phi {
                    facet(&mut w, &[pole, ring * n_phi + k, ring * n_phi + (k + 1) % n_phi]);
                }
            }
        }
        self.outer_weights = w;
    }

    fn build_stencils(&mut self) {
        let m = self.n_radial;
        let s: Vec<f64> = self.s.iter().map(|v| v.f64()).collect();
        self.ds_weights = (0..m)
            .map(|i| {
                let start = i.saturating_sub(2).min(m - 5);
                let idx = [start, start + 1, start + 2, start + 3, start + 4];
                let nodes: Vec<f64> = idx.iter().map(|&q| s[q]).collect();
                let w = lagrange_derivative_weights(&nodes, s[i]);
                (idx, std::array::from_fn(|q| T::of(w[q])))
            })
            .collect();
        if N == 3 {
            let n_th = self.sphere.polar;
            let theta: Vec<f64> = self.sphere.mu.iter().map(|mu| mu.f64().clamp(-1.0, 1.0).acos()).collect();
            // ψ along the meridian pair through φ_k and φ_k + π
            let mut line: Vec<(f64, Src)> = Vec::new();
            for j in 0..n_th {
                line.push((theta[j], Src::Ring(j, false)));
                line.push((-theta[j], Src::Ring(j, true)));
                line.push((2.0 * std::f64::consts::PI - theta[j], Src::Ring(j, true)));
            }
            line.push((0.0, Src::North));
            line.push((std::f64::consts::PI, Src::South));
            line.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            self.meridian = (0..n_th)
                .map(|j| {
                    let pos = line
                        .iter()
                        .position(|(_, src)| matches!(src, Src::Ring(jj, false) if *jj == j))
                        .unwrap();
                    let sel = &line[pos - 2..=pos + 2];
                    let nodes: Vec<f64> = sel.iter().map(|(x, _)| *x).collect();
                    let w = lagrange_derivative_weights(&nodes, theta[j]);
                    std::array::from_fn(|q| (sel[q].1, T::of(w[q])))
                })
                .collect();
        }
    }

    /// Cartesian gradients at every quadrature-ray vertex, reconstructed from
    /// nodal values by fourth-order differences in the mapped coordinates.
    ///
    /// The result has layout `layer * angular_count() + ray`.
    pub fn nodal_gradients(&self, u: &[T]) -> Vec<Vector<T, N>> {
        let n_ang = self.sphere.len();
        let n_phi = self.sphere.azimuth;
        let dphi = T::of(2.0 * std::f64::consts::PI / n_phi as f64);
        let twelve = T::of(12.0);
        let eight = T::of(8.0);
        let mut out = Vec::with_capacity(self.n_radial * n_ang);
        for i in 0..self.n_radial {
            let row = &u[i * self.rays..(i + 1) * self.rays];
            let (sidx, sw) = &self.ds_weights[i];
            for a in 0..n_ang {
                let (j, k) = (a / n_phi, a % n_phi);
                let mut u_s = T::zero();
                for q in 0..5 {
                    u_s = u_s + sw[q] * u[sidx[q] * self.rays + a];
                }
                let at = |kk: isize| row[j * n_phi + kk.rem_euclid(n_phi as isize) as usize];
                let ki = k as isize;
                let u_phi = (-at(ki + 2) + eight * at(ki + 1) - eight * at(ki - 1) + at(ki - 2)) / (twelve * dphi);
                let theta = self.ray_dirs[a];
                let si = self.s[i];
                let r = self.radius(i, a);
                let x_s = linalg::scale(&theta, self.r_out - self.rho[a]);
                let phi = self.sphere.phi[k];
                let (cp, sp) = (phi.cos(), phi.sin());
                let mut jac = linalg::zero_matrix::<T, N>();
                let mut d = linalg::zeros::<T, N>();
                if N == 2 {
                    let mut t_phi = linalg::zeros::<T, N>();
                    t_phi[0] = -sp;
                    t_phi[1] = cp;
                    let rho_phi = linalg::dot(&self.rho_grad[a], &t_phi);
                    let x_phi = linalg::add(&linalg::scale(&theta, (T::one() - si) * rho_phi), &linalg::scale(&t_phi, r));
                    for rr in 0..N {
                        jac[rr][0] = x_s[rr];
                        jac[rr][1] = x_phi[rr];
                    }
                    d[0] = u_s;
                    d[1] = u_phi;
                } else {
                    let mut u_th = T::zero();
                    for (src, w) in &self.meridian[j] {
                        let val = match *src {
                            Src::Ring(jj, false) => row[jj * n_phi + k],
                            Src::Ring(jj, true) => row[jj * n_phi + (k + n_phi / 2) % n_phi],
                            Src::North => row[n_ang],
                            Src::South => row[n_ang + 1],
                        };
                        u_th = u_th + *w * val;
                    }
                    let ct = theta[N - 1];
                    let st = (T::one() - ct * ct).max(T::zero()).sqrt();
                    let mut t_th = linalg::zeros::<T, N>();
                    t_th[0] = ct * cp;
                    t_th[1] = ct * sp;
                    t_th[2] = -st;
                    let mut t_phi = linalg::zeros::<T, N>();
                    t_phi[0] = -st * sp;
                    t_phi[1] = st * cp;
                    let rho_th = linalg::dot(&self.rho_grad[a], &t_th);
                    let rho_phi = linalg::dot(&self.rho_grad[a], &t_phi);
                    let x_th = linalg::add(&linalg::scale(&theta, (T::one() - si) * rho_th), &linalg::scale(&t_th, r));
                    let x_phi = linalg::add(&linalg::scale(&theta, (T::one() - si) * rho_phi), &linalg::scale(&t_phi, r));
                    for rr in 0..N {
                        jac[rr][0] = x_s[rr];
                        jac[rr][1] = x_th[rr];
                        jac[rr][2] = x_phi[rr];
                    }
                    d[0] = u_s;
                    d[1] = u_th;
                    d[2] = u_phi;
                }
                // Jᵀ ∇u = d
                let g = linalg::solve(&linalg::transpose(&jac), &d).unwrap_or_else(linalg::zeros);
                out.push(g);
            }
        }
        out
    }

    /// `∂u/∂r` along each quadrature ray at the inner boundary, by one-sided
    /// fourth-order differences in `s`.
    pub fn inner_radial_derivative(&self, u: &[T]) -> Vec<T> {
        let (idx, w) = &self.ds_weights[0];
        (0..self.sphere.len())
            .map(|a| {
                let mut d = T::zero();
                for q in 0..5 {
                    d = d + w[q] * u[idx[q] * self.rays + a];
                }
                d / (self.r_out - self.rho[a])
            })
            .collect()
    }
}
