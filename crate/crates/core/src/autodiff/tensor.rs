use super::AdError;

/// Dense row-major `f64` array.
///
/// Rank 0 (`shape == []`) is a scalar holding one value. Rank 1 and rank 2
/// cover everything the networks need: bias vectors, weight matrices and
/// `(batch, features)` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AdError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AdError::Length {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Like [`Tensor::new`] but also rejects NaN and infinite entries.
    pub fn checked(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, AdError> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(AdError::NonFinite { index });
        }
        Self::new(shape, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// `rows x cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AdError> {
        Self::new(vec![rows, cols], data)
    }

    /// Column of per-row scalars, shape `(n, 1)`.
    pub fn column(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len(), 1],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// True for any single-element tensor.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        if self.is_scalar() {
            Some(self.data[0])
        } else {
            None
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(AdError::Length { .. })
        ));
    }

    #[test]
    fn checked_rejects_nan_and_inf() {
        assert!(matches!(
            Tensor::checked(vec![2], vec![1.0, f64::NAN]),
            Err(AdError::NonFinite { index: 1 })
        ));
        assert!(Tensor::checked(vec![1], vec![f64::INFINITY]).is_err());
        assert!(Tensor::checked(vec![1], vec![1.0]).is_ok());
    }

    #[test]
    fn scalar_has_empty_shape() {
        let s = Tensor::scalar(3.0);
        assert_eq!(s.rank(), 0);
        assert_eq!(s.item(), Some(3.0));
    }
}
