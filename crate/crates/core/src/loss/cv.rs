//! Control volumes as surface quadrature rules.
//!
//! A [`ControlVolume`] holds nodes `x_s` on the surface of a small region
//! around a center, outward unit normals `n_s`, and weights `w_s` already
//! divided by the region's volume, so that
//!
//! ```text
//! sum_s w_s (-A grad u . n_s)(x_s)  ~  (1/|V|) \oint (-A grad u . n) dS  =  mean_V (-div(A grad u))
//! ```
//!
//! Only the first `ds` coordinates (space) are perturbed; any trailing time
//! coordinate is copied from the center.

use crate::divest::{Diffusion, ScalarField};
use crate::sampling::{cube_face_points_axes, CubeFaces, Points, SamplingError, Sobol};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlVolume {
    pub center: Vec<f64>,
    /// Surface nodes, full input dimension.
    pub points: Points,
    /// Outward normals, spatial dimension.
    pub normals: Points,
    /// Surface weights divided by the volume.
    pub weights: Vec<f64>,
    /// Volume (may underflow to zero in very high dimension; only used to
    /// recover unnormalized sums).
    pub volume: f64,
    /// Spatial bounding box `[lo, hi]` for cubes.
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
}

fn unit_ball_volume(d: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} 2 pi / d
    let mut v = [1.0, 2.0];
    for k in 2..=d {
        v[k % 2] *= 2.0 * std::f64::consts::PI / k as f64;
    }
    v[d % 2]
}

impl ControlVolume {
    /// Ball of radius `eps` sampled along the given unit directions
    /// (`dirs.dim() == ds`); weight `ds / (eps k)` each.
    pub fn sphere(center: &[f64], eps: f64, dirs: &Points) -> Self {
        let ds = dirs.dim();
        let k = dirs.len();
        let mut points = Points::with_capacity(center.len(), k);
        let mut x = center.to_vec();
        for n in dirs.rows() {
            for j in 0..ds {
                x[j] = center[j] + eps * n[j];
            }
            points.push(&x);
        }
        Self {
            center: center.to_vec(),
            points,
            normals: dirs.clone(),
            weights: vec![ds as f64 / (eps * k as f64); k],
            volume: unit_ball_volume(ds) * eps.powi(ds as i32),
            bounds: None,
        }
    }

    /// Cube `center ± eps` over the first `ds` coordinates with
    /// `ppf` points per face; weight `1 / (2 eps ppf)` each.
    pub fn cube(
        center: &[f64],
        ds: usize,
        eps: f64,
        ppf: usize,
        qmc: bool,
        seed: u64,
    ) -> Result<Self, SamplingError> {
        let faces = cube_face_points_axes(center, ds, eps, ppf, qmc, seed)?;
        let mut normals = Points::with_capacity(ds, faces.points.len());
        let mut n = vec![0.0; ds];
        for f in 0..faces.num_faces() {
            n.fill(0.0);
            n[CubeFaces::axis(f)] = CubeFaces::sign(f);
            for _ in 0..ppf {
                normals.push(&n);
            }
        }
        let count = faces.points.len();
        Ok(Self {
            center: center.to_vec(),
            points: faces.points,
            normals,
            weights: vec![1.0 / (2.0 * eps * ppf as f64); count],
            volume: (2.0 * eps).powi(ds as i32),
            bounds: Some((
                center[..ds].iter().map(|c| c - eps).collect(),
                center[..ds].iter().map(|c| c + eps).collect(),
            )),
        })
    }

    /// Cube of half-width `h` with one node at each face center: the
    /// central difference of the flux `A grad u` along every axis.
    pub fn central_difference(center: &[f64], ds: usize, h: f64) -> Self {
        let mut points = Points::with_capacity(center.len(), 2 * ds);
        let mut normals = Points::with_capacity(ds, 2 * ds);
        let mut x = center.to_vec();
        let mut n = vec![0.0; ds];
        for j in 0..ds {
            for s in [1.0, -1.0] {
                x[j] = center[j] + s * h;
                points.push(&x);
                n[j] = s;
                normals.push(&n);
                n[j] = 0.0;
            }
            x[j] = center[j];
        }
        Self {
            center: center.to_vec(),
            points,
            normals,
            weights: vec![1.0 / (2.0 * h); 2 * ds],
            volume: (2.0 * h).powi(ds as i32),
            bounds: Some((
                center[..ds].iter().map(|c| c - h).collect(),
                center[..ds].iter().map(|c| c + h).collect(),
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn spatial_dim(&self) -> usize {
        self.normals.dim()
    }

    /// Per-node `(A n)(x_s)`, padded with zeros to the full input dimension.
    pub fn flux_directions(&self, a: &Diffusion) -> Points {
        let (d, ds) = (self.points.dim(), self.spatial_dim());
        let mut out = Points::with_capacity(d, self.len());
        let mut t = vec![0.0; d];
        for (x, n) in self.points.rows().zip(self.normals.rows()) {
            a.apply(x, n, &mut t[..ds]);
            out.push(&t);
        }
        out
    }

    /// Volume-normalized outward flux of `-A grad u`, using input gradients.
    pub fn flux(&self, u: &impl ScalarField, a: &Diffusion) -> f64 {
        let d = self.points.dim();
        let mut g = vec![0.0; d];
        let dirs = self.flux_directions(a);
        let mut total = 0.0;
        for ((x, t), w) in self.points.rows().zip(dirs.rows()).zip(&self.weights) {
            u.gradient(x, &mut g);
            total -= w * g.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    }

    /// Like [`ControlVolume::flux`] with each `grad u . A n` replaced by a
    /// central difference of step `delta` along `A n`.
    pub fn flux_by_differences(&self, u: &impl ScalarField, a: &Diffusion, delta: f64) -> f64 {
        let dirs = self.flux_directions(a);
        let mut p = vec![0.0; self.points.dim()];
        let mut total = 0.0;
        for ((x, t), w) in self.points.rows().zip(dirs.rows()).zip(&self.weights) {
            for ((o, a), b) in p.iter_mut().zip(x).zip(t) {
                *o = a + delta * b;
            }
            let plus = u.value(&p);
            for ((o, a), b) in p.iter_mut().zip(x).zip(t) {
                *o = a - delta * b;
            }
            total -= w * (plus - u.value(&p)) / (2.0 * delta);
        }
        total
    }

    /// Total (not volume-normalized) outward flux.
    pub fn surface_flux(&self, u: &impl ScalarField, a: &Diffusion) -> f64 {
        self.volume * self.flux(u, a)
    }

    /// Splits a cube at its midplane normal to `axis`. Existing nodes go to
    /// the half containing them (ties to the upper half); both halves gain
    /// the same `shared` nodes on the midplane, with opposite normals. The
    /// shared nodes are `m` digitally shifted Sobol points.
    pub fn bisect(&self, axis: usize, m: usize, seed: u64) -> Result<(Self, Self), SamplingError> {
        let (lo, hi) = self
            .bounds
            .clone()
            .ok_or_else(|| SamplingError::Domain("only cubes can be bisected".into()))?;
        let ds = self.spatial_dim();
        let mid = 0.5 * (lo[axis] + hi[axis]);
        let half_volume = 0.5 * self.volume;
        let mut halves: [Self; 2] = std::array::from_fn(|_| Self {
            center: self.center.clone(),
            points: Points::new(self.points.dim()),
            normals: Points::new(ds),
            weights: Vec::new(),
            volume: half_volume,
            bounds: None,
        });
        for i in 0..self.len() {
            let x = self.points.row(i);
            let n = self.normals.row(i);
            let side = usize::from(x[axis] >= mid);
            let h = &mut halves[side];
            h.points.push(x);
            h.normals.push(n);
            // same absolute weight, renormalized by the half volume
            h.weights.push(self.weights[i] * self.volume / half_volume);
        }

        let face_measure: f64 = (0..ds)
            .filter(|&j| j != axis)
            .map(|j| hi[j] - lo[j])
            .product();
        let w = face_measure / m as f64 / half_volume;
        let mut unit = vec![0.5; ds.saturating_sub(1)];
        let mut gen = if ds > 1 {
            let mut r = crate::rng::rng(seed);
            use rand::Rng;
            Some(Sobol::with_shift(
                ds - 1,
                (0..ds - 1).map(|_| r.random()).collect(),
            )?)
        } else {
            None
        };
        let mut x = self.center.clone();
        for _ in 0..m {
            if let Some(g) = gen.as_mut() {
                g.next_into(&mut unit);
            }
            let mut free = unit.iter();
            for j in 0..ds {
                x[j] = if j == axis {
                    mid
                } else {
                    lo[j] + (hi[j] - lo[j]) * free.next().expect("free coordinate")
                };
            }
            for (side, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                let mut n = vec![0.0; ds];
                n[axis] = sign;
                halves[side].points.push(&x);
                halves[side].normals.push(&n);
                halves[side].weights.push(w);
            }
        }
        let [mut a, mut b] = halves;
        let mut hi_a = hi.clone();
        hi_a[axis] = mid;
        let mut lo_b = lo.clone();
        lo_b[axis] = mid;
        a.bounds = Some((lo, hi_a));
        b.bounds = Some((lo_b, hi));
        Ok((a, b))
    }
}
