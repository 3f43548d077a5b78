//! JSON model files: head kind plus, per layer, the activation, an explicit
//! `[rows, cols]` shape and row-major weights. Floats are written in
//! shortest round-trip form, so save → load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Dense, DenseNetwork, Head, LayerSpec};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ModelFile {
    head: Head,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    activation: Activation,
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseNetwork {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            head: self.head,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    activation: l.activation,
                    shape: [l.fan_out, l.fan_in],
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let specs: Vec<LayerSpec> = file
            .layers
            .iter()
            .map(|l| LayerSpec::new(l.shape[1], l.shape[0], l.activation))
            .collect();
        let mut net = DenseNetwork::zeros(file.head, &specs)?;
        for (dst, src) in net.layers.iter_mut().zip(file.layers) {
            check_len(dst, &src)?;
            dst.weights = src.weights;
            dst.bias = src.bias;
        }
        Ok(net)
    }
}

fn check_len(dst: &Dense, src: &LayerFile) -> Result<()> {
    if src.weights.len() != dst.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: dst.weights.len(),
            got: src.weights.len(),
        });
    }
    if src.bias.len() != dst.bias.len() {
        return Err(Error::DimensionMismatch {
            expected: dst.bias.len(),
            got: src.bias.len(),
        });
    }
    Ok(())
}

pub fn save_model(net: &DenseNetwork, path: &Path) -> Result<()> {
    fs::write(path, net.to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DenseNetwork> {
    DenseNetwork::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = DenseNetwork::regressor(7, &[5, 3], 42).unwrap();
        let back = DenseNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(net, back);
        let x = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7];
        let a = net.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = DenseNetwork::classifier(3, &[2], 1).unwrap();
        let text = net.to_json().unwrap().replacen("\"shape\": [\n        2,\n        3\n      ]", "\"shape\": [2, 4]", 1);
        assert!(DenseNetwork::from_json(&text).is_err());
    }
}
