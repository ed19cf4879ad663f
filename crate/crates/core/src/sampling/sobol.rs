//! Sobol low-discrepancy sequence (Gray-code ordering) with the Joe–Kuo
//! `new-joe-kuo-6` direction numbers for the first 256 dimensions.
//!
//! The raw generator ([`Sobol`]) starts at the origin. [`sobol`] returns the
//! first `n` points centered in their cells: with `2^m >= n`, every
//! coordinate is offset by `2^-(m+1)`, so a single point sits at `0.5` and a
//! full `2^m` net has exactly mean `0.5` per coordinate. An optional digital
//! shift (XOR with a fixed random word per dimension) randomizes the point
//! set while keeping its net structure.

use std::sync::OnceLock;

use super::SamplingError;

const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

/// Number of dimensions covered by the embedded direction-number table.
pub const MAX_DIM: usize = 256;

static TABLE: &str = include_str!("joe_kuo_256.txt");

fn directions() -> &'static [[u32; BITS]] {
    static DIRS: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    DIRS.get_or_init(|| {
        let mut all = Vec::with_capacity(MAX_DIM);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        all.push(first);
        for line in TABLE.lines().filter(|l| !l.trim().is_empty()) {
            let fields: Vec<u32> = line
                .split_whitespace()
                .map(|f| f.parse().expect("direction table is numeric"))
                .collect();
            let (s, a) = (fields[1] as usize, fields[2]);
            let m = &fields[3..3 + s];
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for i in 1..s {
                        if (a >> (s - 1 - i)) & 1 == 1 {
                            x ^= v[k - i];
                        }
                    }
                    x
                };
            }
            all.push(v);
        }
        all
    })
}

/// Incremental generator.
#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: &'static [[u32; BITS]],
    state: Vec<u32>,
    shift: Vec<u32>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self, SamplingError> {
        Self::with_shift(dim, vec![0; dim])
    }

    /// Sequence XOR-shifted by `shift` (one word per dimension).
    pub fn with_shift(dim: usize, shift: Vec<u32>) -> Result<Self, SamplingError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SamplingError::SobolDimension { dim, max: MAX_DIM });
        }
        assert_eq!(shift.len(), dim);
        Ok(Self {
            dirs: &directions()[..dim],
            state: vec![0; dim],
            shift,
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// Writes the next point into `out` (values in `[0, 1)`).
    pub fn next_into(&mut self, out: &mut [f64]) {
        for ((o, s), sh) in out.iter_mut().zip(&self.state).zip(&self.shift) {
            *o = f64::from(s ^ sh) * SCALE;
        }
        let c = self.index.trailing_ones() as usize;
        assert!(c < BITS, "Sobol sequence exhausted");
        for (s, v) in self.state.iter_mut().zip(self.dirs) {
            *s ^= v[c];
        }
        self.index += 1;
    }
}

/// First `n` points, centered as described in the module docs, row-major `n x dim`.
pub fn sobol(dim: usize, n: usize) -> Result<Vec<f64>, SamplingError> {
    let mut gen = Sobol::new(dim)?;
    let m = n.max(1).next_power_of_two().trailing_zeros();
    let offset = 0.5f64.powi(m as i32 + 1);
    let mut out = vec![0.0; n * dim];
    for row in out.chunks_exact_mut(dim) {
        gen.next_into(row);
        row.iter_mut().for_each(|v| *v += offset);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_sequence_starts_at_origin() {
        let mut g = Sobol::new(3).unwrap();
        let mut x = [1.0; 3];
        g.next_into(&mut x);
        assert_eq!(x, [0.0; 3]);
        g.next_into(&mut x);
        assert_eq!(x, [0.5; 3]);
        // Second dimension continues 0.25, 0.75.
        g.next_into(&mut x);
        assert_eq!(x[1], 0.25);
        g.next_into(&mut x);
        assert_eq!(x[1], 0.75);
    }

    #[test]
    fn centered_points() {
        assert_eq!(sobol(2, 1).unwrap(), vec![0.5, 0.5]);
        let p = sobol(1, 4).unwrap();
        assert_eq!(p, vec![0.125, 0.625, 0.875, 0.375]);
        assert!(sobol(5, 3000)
            .unwrap()
            .iter()
            .all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn deterministic() {
        assert_eq!(sobol(7, 100).unwrap(), sobol(7, 100).unwrap());
    }

    #[test]
    fn rejects_too_many_dimensions() {
        assert!(sobol(MAX_DIM, 2).is_ok());
        assert!(matches!(
            sobol(MAX_DIM + 1, 2),
            Err(SamplingError::SobolDimension { .. })
        ));
        assert!(sobol(0, 2).is_err());
    }

    #[test]
    fn coordinate_means_are_balanced() {
        let n = 1 << 10;
        let p = sobol(2, n).unwrap();
        for j in 0..2 {
            let mean: f64 = p.iter().skip(j).step_by(2).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 1e-3, "{mean}");
        }
    }

    #[test]
    fn integrates_product_accurately() {
        let n = 1 << 12;
        let p = sobol(2, n).unwrap();
        let est: f64 = p.chunks(2).map(|x| x[0] * x[1]).sum::<f64>() / n as f64;
        assert!((est - 0.25).abs() < 1e-4, "{est}");
    }

    #[test]
    fn every_dimension_is_a_permutation_of_the_dyadic_grid() {
        // Each 1-D projection of the first 2^m points hits every cell of width 2^-m once.
        let m = 8;
        let n = 1usize << m;
        let dim = 64;
        let p = sobol(dim, n).unwrap();
        for j in 0..dim {
            let mut seen = vec![false; n];
            for i in 0..n {
                let cell = (p[i * dim + j] * n as f64) as usize;
                assert!(!seen[cell], "dim {j} repeats cell {cell}");
                seen[cell] = true;
            }
        }
    }
}
