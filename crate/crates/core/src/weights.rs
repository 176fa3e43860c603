//! Named parameter tensors, deterministic initialization and persistence.

use std::collections::BTreeMap;
use std::path::Path;

use crate::container::{self, StoredTensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::RealTensor;

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-b, b]`, `b = sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

impl Init {
    pub fn glorot(fan_in: usize, fan_out: usize) -> Self {
        Init::Glorot { fan_in, fan_out }
    }

    /// Fans of a `[k, k, cin, cout]` kernel.
    pub fn glorot_conv(k: usize, cin: usize, cout: usize) -> Self {
        Init::Glorot {
            fan_in: k * k * cin,
            fan_out: k * k * cout,
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            Init::Glorot { fan_in, fan_out } => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::Zeros => 0.0,
            Init::Ones => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl WeightSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }
}

/// Batch-norm parameters in inference mode: scale, shift, running mean and
/// running variance.
pub fn batch_norm_specs(prefix: &str, c: usize) -> Vec<WeightSpec> {
    vec![
        WeightSpec::new(format!("{prefix}.scale"), vec![c], Init::Ones),
        WeightSpec::new(format!("{prefix}.shift"), vec![c], Init::Zeros),
        WeightSpec::new(format!("{prefix}.mean"), vec![c], Init::Zeros),
        WeightSpec::new(format!("{prefix}.var"), vec![c], Init::Ones),
    ]
}

/// Parameter tensors keyed by `module.parameter` path. Values are held in
/// f64 and stored as f32.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightBundle {
    tensors: BTreeMap<String, RealTensor>,
}

impl WeightBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Result<&RealTensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: RealTensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RealTensor)> {
        self.tensors.iter()
    }

    /// Checks that every spec'd tensor is present with the right shape.
    pub fn check(&self, specs: &[WeightSpec]) -> Result<()> {
        for s in specs {
            let t = self.get(&s.name)?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::shape(format!(
                    "weight `{}` has shape {:?}, expected {:?}",
                    s.name,
                    t.shape(),
                    s.shape
                )));
            }
            t.ensure_finite(&s.name)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries: Vec<_> = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), StoredTensor::F32(v.clone())))
            .collect();
        container::encode(&entries)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut bundle = Self::new();
        for (name, tensor) in container::decode(bytes)? {
            let t = match tensor {
                StoredTensor::F32(t) | StoredTensor::F64(t) => t,
                StoredTensor::C64(_) => {
                    return Err(Error::InvalidInput(format!("weight `{name}` is complex")));
                }
            };
            bundle.insert(name, t);
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Fills every spec from one SplitMix64 stream in manifest order. Values are
/// rounded through f32 so a saved bundle reloads bit-identically.
pub fn init_from_specs(specs: &[WeightSpec], seed: u64) -> WeightBundle {
    let mut rng = SeededRng::new(seed);
    let mut bundle = WeightBundle::new();
    for s in specs {
        let len: usize = s.shape.iter().product();
        let data: Vec<f64> = match s.init {
            Init::Glorot { .. } => {
                let b = s.init.bound();
                (0..len)
                    .map(|_| f64::from(rng.uniform(-b, b) as f32).clamp(-b, b))
                    .collect()
            }
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
        };
        bundle.insert(s.name.clone(), RealTensor::new(s.shape.clone(), data).expect("spec shapes are positive"));
    }
    bundle
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<WeightSpec> {
        let mut v = vec![
            WeightSpec::new("a.w", vec![4, 3], Init::glorot(4, 3)),
            WeightSpec::new("a.b", vec![3], Init::Zeros),
        ];
        v.extend(batch_norm_specs("a.bn", 3));
        v
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = init_from_specs(&specs(), 11);
        assert_eq!(a, init_from_specs(&specs(), 11));
        assert_ne!(a, init_from_specs(&specs(), 12));
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.get("a.w").unwrap().data().iter().all(|v| v.abs() <= bound));
        assert_eq!(a.get("a.bn.var").unwrap().data(), &[1.0; 3]);
        assert_eq!(a.get("a.bn.mean").unwrap().data(), &[0.0; 3]);
        a.check(&specs()).unwrap();
    }

    #[test]
    fn save_load_is_lossless() {
        let a = init_from_specs(&specs(), 3);
        assert_eq!(WeightBundle::from_bytes(&a.to_bytes().unwrap()).unwrap(), a);
    }

    #[test]
    fn check_reports_missing_and_misshapen() {
        let mut a = init_from_specs(&specs(), 3);
        a.insert("a.b", RealTensor::zeros(&[4]).unwrap());
        assert!(matches!(a.check(&specs()), Err(Error::Shape(_))));
        let empty = WeightBundle::new();
        assert!(matches!(empty.check(&specs()), Err(Error::MissingWeight(_))));
    }
}
