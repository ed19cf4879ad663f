use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{NetworkConfig, NetworkError};
use crate::rng;

/// Location of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

/// All weights and biases of a network as one flat vector, with the layout
/// needed to slice it back into layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    config: NetworkConfig,
    layers: Vec<LayerShape>,
    values: Vec<f64>,
}

fn layout(config: &NetworkConfig) -> Vec<LayerShape> {
    let mut offset = 0;
    config
        .layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let shape = LayerShape {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            shape
        })
        .collect()
}

impl ParamSet {
    pub fn zeros(config: NetworkConfig) -> Result<Self, NetworkError> {
        Self::from_values(config, vec![0.0; config.param_count()])
    }

    /// Rebuilds a parameter set from a flat vector (inverse of [`ParamSet::values`]).
    pub fn from_values(config: NetworkConfig, values: Vec<f64>) -> Result<Self, NetworkError> {
        config.validate()?;
        let expected = config.param_count();
        if values.len() != expected {
            return Err(NetworkError::ParamCount {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            layers: layout(&config),
            config,
            values,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let s = self.layers[layer];
        &self.values[s.weight_offset..s.bias_offset]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = self.layers[layer];
        &self.values[s.bias_offset..s.bias_offset + s.fan_out]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers[layer];
        &mut self.values[s.weight_offset..s.bias_offset]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.layers[layer];
        &mut self.values[s.bias_offset..s.bias_offset + s.fan_out]
    }
}

/// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
pub fn init_params(config: NetworkConfig, seed: u64) -> Result<ParamSet, NetworkError> {
    let mut params = ParamSet::zeros(config)?;
    let mut r = rng::rng(seed);
    for i in 0..params.layers.len() {
        let bound = 1.0 / (params.layers[i].fan_in as f64).sqrt();
        for w in params.weight_mut(i) {
            *w = r.random_range(-bound..bound);
        }
    }
    Ok(params)
}
