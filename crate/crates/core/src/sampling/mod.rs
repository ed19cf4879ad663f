//! Collocation, boundary and control-volume surface samplers.
//!
//! All samplers are pure functions of their seed. Point sets are stored
//! row-major in [`Points`].

mod sobol;

pub use sobol::{sobol, Sobol, MAX_DIM as SOBOL_MAX_DIM};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("margin {margin} leaves no room in a domain of half-extent {half}")]
    Margin { margin: f64, half: f64 },
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("Sobol dimension {dim} outside 1..={max}")]
    SobolDimension { dim: usize, max: usize },
    #[error("antithetic sampling needs an even direction count, got {0}")]
    OddAntithetic(usize),
    #[error("need at least one sample")]
    Empty,
}

/// Row-major set of points in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(
            dim > 0 && data.len() % dim == 0,
            "flat data is not a whole number of rows"
        );
        Self { dim, data }
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DomainKind {
    Hypercube {
        lo: f64,
        hi: f64,
        dim: usize,
    },
    /// `(-1,1)^d \ [0,1)^d`.
    Lshape {
        dim: usize,
    },
    /// `spatial x (t0, t_end)`; the last coordinate is time.
    Spacetime {
        spatial: Box<DomainKind>,
        t0: f64,
        t_end: f64,
    },
}

impl DomainKind {
    pub fn validate(&self) -> Result<(), SamplingError> {
        match self {
            Self::Hypercube { lo, hi, dim } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(SamplingError::Domain(format!(
                        "need lo < hi, got {lo}, {hi}"
                    )));
                }
                if *dim == 0 {
                    return Err(SamplingError::Domain("dimension must be positive".into()));
                }
            }
            Self::Lshape { dim } => {
                if *dim == 0 {
                    return Err(SamplingError::Domain("dimension must be positive".into()));
                }
            }
            Self::Spacetime { spatial, t0, t_end } => {
                if matches!(**spatial, Self::Spacetime { .. }) {
                    return Err(SamplingError::Domain("nested spacetime".into()));
                }
                if !(t0 < t_end) {
                    return Err(SamplingError::Domain(format!(
                        "need t0 < T, got {t0}, {t_end}"
                    )));
                }
                spatial.validate()?;
            }
        }
        Ok(())
    }

    /// Number of coordinates of a point (spatial plus time).
    pub fn dim(&self) -> usize {
        match self {
            Self::Hypercube { dim, .. } | Self::Lshape { dim } => *dim,
            Self::Spacetime { spatial, .. } => spatial.dim() + 1,
        }
    }

    pub fn spatial_dim(&self) -> usize {
        match self {
            Self::Spacetime { spatial, .. } => spatial.dim(),
            _ => self.dim(),
        }
    }

    pub fn is_spacetime(&self) -> bool {
        matches!(self, Self::Spacetime { .. })
    }

    /// Open-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Hypercube { lo, hi, .. } => x.iter().all(|v| lo < v && v < hi),
            Self::Lshape { .. } => x.iter().all(|v| v.abs() < 1.0) && x.iter().any(|&v| v < 0.0),
            Self::Spacetime { spatial, t0, t_end } => {
                let (s, t) = x.split_at(x.len() - 1);
                spatial.contains(s) && *t0 < t[0] && t[0] < *t_end
            }
        }
    }

    /// Membership in the closure.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Hypercube { lo, hi, .. } => x.iter().all(|v| lo <= v && v <= hi),
            Self::Lshape { .. } => x.iter().all(|v| v.abs() <= 1.0) && x.iter().any(|&v| v <= 0.0),
            Self::Spacetime { spatial, t0, t_end } => {
                let (s, t) = x.split_at(x.len() - 1);
                spatial.contains_closed(s) && *t0 <= t[0] && t[0] <= *t_end
            }
        }
    }

    /// Whether the spatial cube `center ± eps` lies in the closed domain.
    /// Equivalent to testing every corner, without enumerating `2^d` of them.
    /// The time coordinate, if any, is checked as a point.
    pub fn embeds_cube(&self, center: &[f64], eps: f64) -> bool {
        if center.len() != self.dim() {
            return false;
        }
        match self {
            Self::Hypercube { lo, hi, .. } => {
                center.iter().all(|c| *lo <= c - eps && c + eps <= *hi)
            }
            Self::Lshape { .. } => {
                center.iter().all(|c| -1.0 <= c - eps && c + eps <= 1.0)
                    && center.iter().any(|c| c + eps <= 0.0)
            }
            Self::Spacetime { spatial, t0, t_end } => {
                let (s, t) = center.split_at(center.len() - 1);
                spatial.embeds_cube(s, eps) && *t0 <= t[0] && t[0] <= *t_end
            }
        }
    }

    fn half_extent(&self) -> f64 {
        match self {
            Self::Hypercube { lo, hi, .. } => 0.5 * (hi - lo),
            // each arm of the L has width 1
            Self::Lshape { .. } => 0.5,
            Self::Spacetime { spatial, .. } => spatial.half_extent(),
        }
    }
}

/// Domain with the margin used to keep control volumes inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub margin: f64,
}

impl Domain {
    pub fn new(kind: DomainKind, margin: f64) -> Self {
        Self { kind, margin }
    }

    pub fn hypercube(lo: f64, hi: f64, dim: usize) -> Self {
        Self::new(DomainKind::Hypercube { lo, hi, dim }, 0.0)
    }

    pub fn lshape(dim: usize) -> Self {
        Self::new(DomainKind::Lshape { dim }, 0.0)
    }

    pub fn spacetime(spatial: DomainKind, t0: f64, t_end: f64) -> Self {
        Self::new(
            DomainKind::Spacetime {
                spatial: Box::new(spatial),
                t0,
                t_end,
            },
            0.0,
        )
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn spatial_dim(&self) -> usize {
        self.kind.spatial_dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.kind.contains(x)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        self.kind.validate()?;
        let half = self.kind.half_extent();
        if !(self.margin >= 0.0) || self.margin >= half {
            return Err(SamplingError::Margin {
                margin: self.margin,
                half,
            });
        }
        Ok(())
    }
}

/// `n` i.i.d. uniform points in the domain shrunk by its margin.
pub fn sample_interior(domain: &Domain, n: usize, seed: u64) -> Result<Points, SamplingError> {
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    domain.validate()?;
    let mut r = rng(seed);
    let mut out = Points::with_capacity(domain.dim(), n);
    let mut x = vec![0.0; domain.dim()];
    for _ in 0..n {
        interior_point(&domain.kind, domain.margin, &mut r, &mut x);
        out.push(&x);
    }
    Ok(out)
}

fn interior_point(kind: &DomainKind, m: f64, r: &mut crate::rng::Rng, x: &mut [f64]) {
    match kind {
        DomainKind::Hypercube { lo, hi, .. } => {
            for v in x.iter_mut() {
                *v = r.random_range(lo + m..hi - m);
            }
        }
        DomainKind::Lshape { .. } => loop {
            for v in x.iter_mut() {
                *v = r.random_range(-1.0 + m..1.0 - m);
            }
            if x.iter().any(|&v| v < -m) {
                break;
            }
        },
        DomainKind::Spacetime { spatial, t0, t_end } => {
            let (s, t) = x.split_at_mut(x.len() - 1);
            interior_point(spatial, m, r, s);
            t[0] = r.random_range(*t0..*t_end);
        }
    }
}

/// `n` points uniformly distributed over the boundary; for spacetime
/// domains, points on the terminal slice `t = T`.
pub fn sample_boundary(domain: &Domain, n: usize, seed: u64) -> Result<Points, SamplingError> {
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    domain.kind.validate()?;
    let mut r = rng(seed);
    let mut out = Points::with_capacity(domain.dim(), n);
    let mut x = vec![0.0; domain.dim()];
    for _ in 0..n {
        boundary_point(&domain.kind, &mut r, &mut x);
        out.push(&x);
    }
    Ok(out)
}

fn boundary_point(kind: &DomainKind, r: &mut crate::rng::Rng, x: &mut [f64]) {
    let d = x.len();
    match kind {
        DomainKind::Hypercube { lo, hi, .. } => {
            let face = r.random_range(0..2 * d);
            for v in x.iter_mut() {
                *v = r.random_range(*lo..=*hi);
            }
            x[face / 2] = if face % 2 == 0 { *lo } else { *hi };
        }
        DomainKind::Lshape { .. } => {
            // Faces: x_j = -1 (measure 2^{d-1}), x_j = +1 minus the removed
            // corner (2^{d-1} - 1), and the cut faces x_j = 0 over [0,1)^{d-1} (1).
            let full = (1u64 << (d - 1)) as f64;
            let per_axis = full + (full - 1.0) + 1.0;
            let pick = r.random_range(0.0..per_axis * d as f64);
            let j = ((pick / per_axis) as usize).min(d - 1);
            let w = pick - j as f64 * per_axis;
            if w < full {
                fill_uniform(r, x, -1.0, 1.0);
                x[j] = -1.0;
            } else if w < 2.0 * full - 1.0 {
                loop {
                    fill_uniform(r, x, -1.0, 1.0);
                    x[j] = 1.0;
                    if x.iter().enumerate().any(|(i, &v)| i != j && v < 0.0) {
                        break;
                    }
                }
            } else {
                fill_uniform(r, x, 0.0, 1.0);
                x[j] = 0.0;
            }
        }
        DomainKind::Spacetime { spatial, t_end, .. } => {
            let (s, t) = x.split_at_mut(d - 1);
            interior_point(spatial, 0.0, r, s);
            t[0] = *t_end;
        }
    }
}

fn fill_uniform(r: &mut crate::rng::Rng, x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = r.random_range(lo..hi);
    }
}

/// `k` unit vectors in `R^d`, uniform on the sphere. With `antithetic`,
/// consecutive rows are `(n, -n)` pairs.
pub fn sphere_directions(
    d: usize,
    k: usize,
    antithetic: bool,
    seed: u64,
) -> Result<Points, SamplingError> {
    if k == 0 || d == 0 {
        return Err(SamplingError::Empty);
    }
    if antithetic && k % 2 == 1 {
        return Err(SamplingError::OddAntithetic(k));
    }
    let mut r = rng(seed);
    let mut out = Points::with_capacity(d, k);
    let mut v = vec![0.0; d];
    let draws = if antithetic { k / 2 } else { k };
    for _ in 0..draws {
        random_unit(&mut r, &mut v);
        out.push(&v);
        if antithetic {
            let neg: Vec<f64> = v.iter().map(|c| -c).collect();
            out.push(&neg);
        }
    }
    Ok(out)
}

fn random_unit(r: &mut crate::rng::Rng, v: &mut [f64]) {
    loop {
        for c in v.iter_mut() {
            *c = r.sample(StandardNormal);
        }
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-300 {
            v.iter_mut().for_each(|c| *c /= norm);
            return;
        }
    }
}

/// Sample points on the `2d` faces of the cube `center ± eps`.
///
/// Faces are ordered by axis, then `+` before `-`; face `f` has normal
/// `sign(f) * e_axis(f)` and owns rows `f*ppf .. (f+1)*ppf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFaces {
    pub points: Points,
    pub points_per_face: usize,
}

impl CubeFaces {
    pub fn num_faces(&self) -> usize {
        self.points.len() / self.points_per_face
    }

    pub fn axis(face: usize) -> usize {
        face / 2
    }

    pub fn sign(face: usize) -> f64 {
        if face % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Outward unit normal of the face owning row `i`.
    pub fn normal(&self, i: usize) -> Vec<f64> {
        let face = i / self.points_per_face;
        let mut n = vec![0.0; self.points.dim()];
        n[Self::axis(face)] = Self::sign(face);
        n
    }
}

/// Face samples for the cube `center ± eps` over every coordinate.
pub fn cube_face_points(
    center: &[f64],
    eps: f64,
    points_per_face: usize,
    qmc: bool,
    seed: u64,
) -> Result<CubeFaces, SamplingError> {
    cube_face_points_axes(center, center.len(), eps, points_per_face, qmc, seed)
}

/// Like [`cube_face_points`] but the cube spans only the first `axes`
/// coordinates; the rest (e.g. time) are copied from `center`.
pub fn cube_face_points_axes(
    center: &[f64],
    axes: usize,
    eps: f64,
    points_per_face: usize,
    qmc: bool,
    seed: u64,
) -> Result<CubeFaces, SamplingError> {
    if points_per_face == 0 || axes == 0 {
        return Err(SamplingError::Empty);
    }
    let mut unit = vec![0.0; points_per_face * (axes - 1)];
    let mut out = Points::with_capacity(center.len(), 2 * axes * points_per_face);
    let mut r = rng(seed);
    let mut x = center.to_vec();
    for j in 0..axes {
        face_unit_points(axes - 1, qmc, &mut r, &mut unit)?;
        for s in [1.0, -1.0] {
            for p in 0..points_per_face {
                let u = &unit[p * (axes - 1)..(p + 1) * (axes - 1)];
                let mut free = u.iter();
                for i in 0..axes {
                    x[i] = if i == j {
                        center[i] + s * eps
                    } else {
                        center[i] - eps + 2.0 * eps * free.next().expect("free coordinate")
                    };
                }
                out.push(&x);
            }
        }
    }
    Ok(CubeFaces {
        points: out,
        points_per_face,
    })
}

/// Fills `out` with points in `[0,1)^dim`: the centered Sobol set (one
/// point per face lands on the face center) or i.i.d. uniform draws.
fn face_unit_points(
    dim: usize,
    qmc: bool,
    r: &mut crate::rng::Rng,
    out: &mut [f64],
) -> Result<(), SamplingError> {
    if dim == 0 {
        return Ok(());
    }
    if qmc {
        out.copy_from_slice(&sobol(dim, out.len() / dim)?);
    } else {
        for v in out.iter_mut() {
            *v = r.random::<f64>();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(d: usize) -> Domain {
        Domain::hypercube(0.0, 1.0, d)
    }

    #[test]
    fn interior_respects_margin() {
        let p = sample_interior(&unit_square(2).with_margin(0.1), 2000, 1).unwrap();
        assert_eq!(p.len(), 2000);
        assert!(p.as_flat().iter().all(|&v| (0.1..=0.9).contains(&v)));
    }

    #[test]
    fn lshape_interior_avoids_removed_quadrant() {
        let dom = Domain::lshape(2).with_margin(1e-3);
        let p = sample_interior(&dom, 5000, 2).unwrap();
        for x in p.rows() {
            assert!(!(x[0] >= 0.0 && x[1] >= 0.0));
            assert!(dom.contains(x));
            assert!(dom.kind.embeds_cube(x, 1e-3));
        }
    }

    #[test]
    fn interior_mean_is_centered() {
        let d = 3;
        let n = 100_000;
        let p = sample_interior(&unit_square(d), n, 3).unwrap();
        for j in 0..d {
            let mean = p.rows().map(|x| x[j]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn margin_too_large_is_an_error() {
        assert!(matches!(
            sample_interior(&unit_square(2).with_margin(0.5), 1, 0),
            Err(SamplingError::Margin { .. })
        ));
        assert!(sample_interior(&Domain::lshape(2).with_margin(0.5), 1, 0).is_err());
    }

    #[test]
    fn one_dimensional_boundary_is_endpoints() {
        let p = sample_boundary(&unit_square(1), 100, 4).unwrap();
        assert!(p.as_flat().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn square_boundary_edges_are_balanced() {
        let n = 10_000;
        let p = sample_boundary(&unit_square(2), n, 5).unwrap();
        let mut counts = [0usize; 4];
        for x in p.rows() {
            let edge = if x[0] == 0.0 {
                0
            } else if x[0] == 1.0 {
                1
            } else if x[1] == 0.0 {
                2
            } else {
                assert_eq!(x[1], 1.0);
                3
            };
            counts[edge] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn lshape_boundary_edges_follow_length() {
        // Six edges of total length 8: x=-1 and y=-1 (length 2), x=1 and y=1
        // (length 1), and the two cut edges (length 1).
        let n = 40_000;
        let p = sample_boundary(&Domain::lshape(2), n, 6).unwrap();
        let mut counts = [0usize; 6];
        for x in p.rows() {
            let e = if x[0] == -1.0 {
                0
            } else if x[1] == -1.0 {
                1
            } else if x[0] == 1.0 {
                assert!(x[1] < 0.0);
                2
            } else if x[1] == 1.0 {
                assert!(x[0] < 0.0);
                3
            } else if x[0] == 0.0 {
                assert!((0.0..1.0).contains(&x[1]));
                4
            } else {
                assert_eq!(x[1], 0.0);
                assert!((0.0..1.0).contains(&x[0]));
                5
            };
            counts[e] += 1;
        }
        let expected = [0.25, 0.25, 0.125, 0.125, 0.125, 0.125];
        for (c, e) in counts.iter().zip(expected) {
            assert!((*c as f64 / n as f64 - e).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn spacetime_boundary_is_terminal() {
        let dom = Domain::spacetime(
            DomainKind::Hypercube {
                lo: 0.0,
                hi: 2.0,
                dim: 2,
            },
            0.0,
            1.0,
        );
        let p = sample_boundary(&dom, 500, 7).unwrap();
        assert_eq!(p.dim(), 3);
        for x in p.rows() {
            assert_eq!(x[2], 1.0);
            assert!((0.0..=2.0).contains(&x[0]) && (0.0..=2.0).contains(&x[1]));
        }
    }

    #[test]
    fn directions_are_unit_and_antithetic_sums_vanish() {
        let dirs = sphere_directions(5, 20, true, 8).unwrap();
        let mut sum = [0.0; 5];
        for v in dirs.rows() {
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            for (s, c) in sum.iter_mut().zip(v) {
                *s += c;
            }
        }
        assert!(sum.iter().all(|s| s.abs() < 1e-12));
        assert!(matches!(
            sphere_directions(5, 3, true, 8),
            Err(SamplingError::OddAntithetic(3))
        ));
    }

    #[test]
    fn directions_have_zero_mean() {
        let n = 100_000;
        let dirs = sphere_directions(3, n, false, 9).unwrap();
        let mean = dirs.rows().map(|v| v[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn one_dimensional_cube_faces_are_endpoints() {
        let f = cube_face_points(&[0.3], 0.1, 1, true, 0).unwrap();
        assert_eq!(f.points.as_flat(), &[0.3 + 0.1, 0.3 - 0.1]);
        assert_eq!(f.normal(0), vec![1.0]);
        assert_eq!(f.normal(1), vec![-1.0]);
    }

    #[test]
    fn cube_face_points_lie_on_faces_with_outward_normals() {
        let c = [0.2, -0.4, 0.7];
        let eps = 0.05;
        for qmc in [true, false] {
            let f = cube_face_points(&c, eps, 16, qmc, 10).unwrap();
            assert_eq!(f.num_faces(), 6);
            for (i, x) in f.points.rows().enumerate() {
                let n = f.normal(i);
                let axis = CubeFaces::axis(i / 16);
                for k in 0..3 {
                    assert!((x[k] - c[k]).abs() <= eps * (1.0 + 1e-12));
                }
                assert!(((x[axis] - c[axis]).abs() - eps).abs() < 1e-15);
                let dot: f64 = x
                    .iter()
                    .zip(&c)
                    .zip(&n)
                    .map(|((a, b), m)| (a - b) * m)
                    .sum();
                assert!(dot > 0.0);
            }
        }
    }

    #[test]
    fn qmc_face_mean_is_centered() {
        let eps = 0.01;
        let f = cube_face_points(&[0.5, 0.5], eps, 256, true, 11).unwrap();
        for face in 0..4 {
            let free = 1 - CubeFaces::axis(face);
            let mean = (face * 256..(face + 1) * 256)
                .map(|i| f.points.row(i)[free])
                .sum::<f64>()
                / 256.0;
            assert!((mean - 0.5).abs() <= 2e-3 * 2.0 * eps);
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let dom = Domain::lshape(3).with_margin(0.01);
        assert_eq!(
            sample_interior(&dom, 50, 12).unwrap(),
            sample_interior(&dom, 50, 12).unwrap()
        );
        assert_eq!(
            sample_boundary(&dom, 50, 12).unwrap(),
            sample_boundary(&dom, 50, 12).unwrap()
        );
        assert_ne!(
            sample_interior(&dom, 50, 12).unwrap(),
            sample_interior(&dom, 50, 13).unwrap()
        );
    }

    #[test]
    fn membership_is_exact_on_lshape_edges() {
        let k = DomainKind::Lshape { dim: 2 };
        assert!(!k.contains(&[0.0, 0.0]));
        assert!(k.contains(&[-1e-300, 0.5]));
        assert!(!k.contains(&[0.5, 0.0]));
        assert!(k.contains_closed(&[0.5, 0.0]));
        assert!(!k.contains_closed(&[0.5, 1e-300]));
    }
}
