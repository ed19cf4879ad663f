//! Batched loss assembly on the tape.
//!
//! Collocation points are processed in chunks. Each chunk records one tape:
//! the network over all surface nodes with tangent `A n` (or over the
//! `x ± eps A n` pairs for the difference estimator), the network over the
//! lower-order rows with tangent `(B, s_t)`, then the group sums that turn
//! node values into per-point residuals. One reverse sweep per chunk gives
//! its share of the parameter gradient.

use std::time::{Duration, Instant};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::network::{accumulate_gradient, record_forward, record_params, ParamSet};
use crate::problems::Problem;
use crate::sampling::Points;

use super::{
    control_volume, FluxEstimator, LossConfig, LossError, LowerOrderRule, Method, ResidualBatch,
};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTimings {
    /// Building rows and recording tapes.
    pub forward: Duration,
    /// Reverse sweeps and gradient accumulation.
    pub backward: Duration,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub batch: ResidualBatch,
    /// Gradient with respect to the flat parameter vector.
    pub gradient: Option<Vec<f64>>,
    pub timings: LossTimings,
}

impl LossOutput {
    pub fn loss(&self) -> f64 {
        self.batch.loss
    }
}

/// DFVM loss of `params`; `cfg.method` must be a DFVM variant.
pub fn dfvm_loss(
    params: &ParamSet,
    problem: &Problem,
    cfg: &LossConfig,
    interior: &Points,
    boundary: &Points,
    seed: u64,
) -> Result<LossOutput, LossError> {
    if cfg.method == Method::Pinn {
        return Err(LossError::Config {
            field: "method",
            reason: "dfvm_loss needs dfvm-cube or dfvm-sphere".into(),
        });
    }
    loss_and_gradient(params, problem, cfg, interior, boundary, seed, true)
}

/// PINN baseline loss with boundary weight `lambda` and default difference step.
pub fn pinn_loss(
    params: &ParamSet,
    problem: &Problem,
    interior: &Points,
    boundary: &Points,
    lambda: f64,
) -> Result<LossOutput, LossError> {
    let mut cfg = LossConfig::new(Method::Pinn, problem.defaults.eps);
    cfg.lambda = lambda;
    loss_and_gradient(params, problem, &cfg, interior, boundary, 0, true)
}

/// Rows of one interior chunk.
struct ChunkRows {
    points: usize,
    /// Surface evaluation rows, tangents and coefficients.
    surf_x: Vec<f64>,
    surf_t: Vec<f64>,
    surf_c: Vec<f64>,
    /// Lower-order rows, first-order tangents and `-f`.
    low_x: Vec<f64>,
    low_t: Vec<f64>,
    low_f: Vec<f64>,
}

/// Loss, residuals and (optionally) the parameter gradient.
pub fn loss_and_gradient(
    params: &ParamSet,
    problem: &Problem,
    cfg: &LossConfig,
    interior: &Points,
    boundary: &Points,
    seed: u64,
    want_grad: bool,
) -> Result<LossOutput, LossError> {
    cfg.validate()?;
    let d = problem.dim();
    let ds = problem.spatial_dim();
    for got in [params.config().input_dim, interior.dim(), boundary.dim()] {
        if got != d {
            return Err(LossError::Dimension { expected: d, got });
        }
    }
    let config = *params.config();
    let mut timings = LossTimings::default();
    let mut gradient = want_grad.then(|| vec![0.0; params.len()]);

    let dfvm = cfg.method != Method::Pinn;
    let differences = dfvm && cfg.estimator == FluxEstimator::Difference;
    let delta = cfg.cv.eps;
    let need_lower = problem.has_first_order() || problem.reaction != 0.0;
    let n_int = interior.len();

    // Keep every activation block small (about 100 KB) so it stays in cache
    // and below the allocator's mmap threshold.
    let width = config.width.max(d);
    let target_rows = cfg.chunk_rows.min((12_000 / width).max(1));
    let basis_rows = if problem.nonlinear.is_some() { ds } else { 0 };

    let mut residuals = Vec::with_capacity(n_int);
    let mut start = 0;
    let mut dir = vec![0.0; d];
    while start < n_int {
        let t0 = Instant::now();
        let mut rows = ChunkRows {
            points: 0,
            surf_x: Vec::new(),
            surf_t: Vec::new(),
            surf_c: Vec::new(),
            low_x: Vec::new(),
            low_t: Vec::new(),
            low_f: Vec::new(),
        };
        let mut group = 0;
        let mut lower_group = 1;
        let mut i = start;
        while i < n_int
            && (rows.points == 0
                || rows.surf_c.len() + rows.low_f.len() * (1 + basis_rows) < target_rows)
        {
            let x = interior.row(i);
            if dfvm && !problem.domain.embeds_cube(x, cfg.cv.eps) {
                return Err(LossError::NotEmbedded {
                    index: i,
                    point: x.to_vec(),
                });
            }
            let cv = control_volume(problem, cfg, x, seed)?;
            let dirs = cv.flux_directions(&problem.diffusion);
            group = cv.len();
            for ((p, t), w) in cv.points.rows().zip(dirs.rows()).zip(&cv.weights) {
                if differences {
                    for s in [1.0, -1.0] {
                        rows.surf_x
                            .extend(p.iter().zip(t).map(|(a, b)| a + s * delta * b));
                        rows.surf_c.push(-s * w / (2.0 * delta));
                    }
                } else {
                    rows.surf_x.extend_from_slice(p);
                    rows.surf_t.extend_from_slice(t);
                    rows.surf_c.push(-w);
                }
            }
            let lower: Vec<&[f64]> = match cfg.lower_order {
                LowerOrderRule::CenterPoint => vec![x],
                LowerOrderRule::CvAverage => cv.points.rows().collect(),
            };
            lower_group = lower.len();
            for p in lower {
                rows.low_x.extend_from_slice(p);
                problem.first_order_direction(p, &mut dir);
                rows.low_t.extend_from_slice(&dir);
                rows.low_f.push(-problem.source(p));
            }
            rows.points += 1;
            i += 1;
        }
        if differences {
            group *= 2;
        }

        let mut tape = Tape::new();
        let nodes = record_params(&mut tape, params, want_grad);
        let col = |v: Vec<f64>| Tensor::from_parts(vec![v.len(), 1], v);
        let mat = |v: Vec<f64>| {
            let n = v.len() / d;
            Tensor::from_parts(vec![n, d], v)
        };

        let n_surf = rows.surf_c.len();
        let xs = tape.constant(mat(rows.surf_x));
        let cs = tape.constant(col(rows.surf_c));
        let flux = if differences {
            let (us, _) = record_forward(&mut tape, &config, &nodes, xs, None)?;
            let weighted = tape.mul(us, cs)?;
            tape.group_sum(weighted, group)?
        } else {
            let ts = tape.constant(Tensor::from_parts(vec![n_surf, d], rows.surf_t));
            let (_, dus) = record_forward(&mut tape, &config, &nodes, xs, Some(ts))?;
            let weighted = tape.mul(dus.expect("tangent requested"), cs)?;
            tape.group_sum(weighted, group)?
        };

        let n_low = rows.low_f.len();
        let mut term: NodeId = tape.constant(col(rows.low_f));
        if need_lower {
            let xl = tape.constant(mat(rows.low_x.clone()));
            let tl = problem
                .has_first_order()
                .then(|| tape.constant(Tensor::from_parts(vec![n_low, d], rows.low_t)));
            let (ul, dul) = record_forward(&mut tape, &config, &nodes, xl, tl)?;
            if let Some(dul) = dul {
                term = tape.add(term, dul)?;
            }
            if problem.reaction != 0.0 {
                let cu = tape.scale(ul, problem.reaction)?;
                term = tape.add(term, cu)?;
            }
        }
        if problem.nonlinear.is_some() {
            let mut bx = Vec::with_capacity(n_low * ds * d);
            let mut bt = vec![0.0; n_low * ds * d];
            for (r, p) in rows.low_x.chunks(d).enumerate() {
                for j in 0..ds {
                    bx.extend_from_slice(p);
                    bt[(r * ds + j) * d + j] = 1.0;
                }
            }
            let xb = tape.constant(mat(bx));
            let tb = tape.constant(mat(bt));
            let (_, db) = record_forward(&mut tape, &config, &nodes, xb, Some(tb))?;
            let sq = tape.square(db.expect("tangent requested"))?;
            let norm = tape.group_sum(sq, ds)?;
            let half = tape.scale(norm, 0.5)?;
            term = tape.add(term, half)?;
        }
        if lower_group > 1 {
            let total = tape.group_sum(term, lower_group)?;
            term = tape.scale(total, 1.0 / lower_group as f64)?;
        }
        let int = tape.add(flux, term)?;
        residuals.extend_from_slice(tape.value(int).data());
        timings.forward += t0.elapsed();

        if let Some(g) = gradient.as_mut() {
            let t1 = Instant::now();
            let sq = tape.square(int)?;
            let total = tape.sum(sq)?;
            let loss = tape.scale(total, 1.0 / n_int as f64)?;
            let mut grads = tape.backward(loss)?;
            accumulate_gradient(&mut grads, &nodes, params, g);
            timings.backward += t1.elapsed();
        }
        start = i;
    }

    let n_bnd = boundary.len();
    let mut bnd = Vec::with_capacity(n_bnd);
    let per_chunk = target_rows;
    for first in (0..n_bnd).step_by(per_chunk) {
        let t0 = Instant::now();
        let last = (first + per_chunk).min(n_bnd);
        let x = &boundary.as_flat()[first * d..last * d];
        let g: Vec<f64> = boundary
            .rows()
            .skip(first)
            .take(last - first)
            .map(|p| problem.boundary_value(p))
            .collect();
        let mut tape = Tape::new();
        let nodes = record_params(&mut tape, params, want_grad);
        let xb = tape.constant(Tensor::from_parts(vec![last - first, d], x.to_vec()));
        let gb = tape.constant(Tensor::from_parts(vec![last - first, 1], g));
        let (ub, _) = record_forward(&mut tape, &config, &nodes, xb, None)?;
        let r = tape.sub(ub, gb)?;
        bnd.extend_from_slice(tape.value(r).data());
        timings.forward += t0.elapsed();

        if let Some(grad) = gradient.as_mut() {
            if cfg.lambda != 0.0 {
                let t1 = Instant::now();
                let sq = tape.square(r)?;
                let total = tape.sum(sq)?;
                let loss = tape.scale(total, cfg.lambda / n_bnd as f64)?;
                let mut grads = tape.backward(loss)?;
                accumulate_gradient(&mut grads, &nodes, params, grad);
                timings.backward += t1.elapsed();
            }
        }
    }

    Ok(LossOutput {
        batch: ResidualBatch::new(residuals, bnd, cfg.lambda),
        gradient,
        timings,
    })
}
