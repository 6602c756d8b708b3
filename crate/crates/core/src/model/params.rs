//! Named parameter tensors and their initialization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimulatorConfig;
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Graph, Tensor, Var};

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.tensors[i] = t;
            return;
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Parameters of one model instance together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: SimulatorConfig,
    pub store: ParamStore,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    Tensor::new(
        &[fan_in, fan_out],
        (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect(),
    )
    .expect("shape")
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, Gaussian raw lift matrices.
    pub fn init(config: &SimulatorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.hidden;
        let mut store = ParamStore::new();
        let linear = |store: &mut ParamStore, name: &str, i: usize, o: usize, rng: &mut ChaCha8Rng| {
            store.insert(format!("{name}.w"), glorot(rng, i, o));
            store.insert(format!("{name}.b"), Tensor::zeros(&[o]));
        };
        linear(&mut store, "enc.patch", config.patch_feature_len(), d, &mut rng);
        linear(&mut store, "enc.body", config.body_feature_len(), d, &mut rng);
        linear(&mut store, "enc.wind", 4, d, &mut rng);
        linear(&mut store, "enc.gravity", 4, d, &mut rng);
        for l in 0..config.layers {
            for w in ["wq", "wr", "ws"] {
                store.insert(format!("layer{l}.{w}"), glorot(&mut rng, d, d));
            }
            store.insert(format!("layer{l}.lift"), gaussian(&mut rng, d, 3));
            linear(&mut store, &format!("layer{l}.psi0"), d, d, &mut rng);
            linear(&mut store, &format!("layer{l}.psi1"), d, d, &mut rng);
            linear(&mut store, &format!("layer{l}.ffn0"), d, d, &mut rng);
            linear(&mut store, &format!("layer{l}.ffn1"), d, d, &mut rng);
        }
        store.insert("dec.lift", gaussian(&mut rng, d, 3));
        linear(&mut store, "dec.g0", 3 + 2 * d, d, &mut rng);
        linear(&mut store, "dec.g1", d, d, &mut rng);
        linear(&mut store, "dec.g2", d, d, &mut rng);
        linear(&mut store, "dec.g3", d, 3, &mut rng);
        Ok(Self {
            config: config.clone(),
            store,
        })
    }

    /// Checks that `store` holds exactly the tensors `config` calls for.
    pub fn from_parts(config: SimulatorConfig, store: ParamStore) -> Result<Self> {
        let reference = Self::init(&config)?;
        for (name, t) in reference.store.iter() {
            match store.get(name) {
                Some(s) if s.shape() == t.shape() => {}
                Some(s) => {
                    return Err(Error::ShapeMismatch {
                        op: "checkpoint",
                        lhs: t.shape().to_vec(),
                        rhs: s.shape().to_vec(),
                    })
                }
                None => return Err(Error::InvalidConfig(format!("missing parameter {name}"))),
            }
        }
        if store.len() != reference.store.len() {
            return Err(Error::InvalidConfig("unexpected parameters in store".into()));
        }
        Ok(Self { config, store })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(&[r, c], (0..r * c).map(|_| math::gaussian(rng)).collect()).expect("shape")
}

/// Parameter leaves of one graph, addressable by name.
pub struct ParamVars<'g> {
    vars: Vec<Var<'g>>,
    index: BTreeMap<String, usize>,
}

impl<'g> ParamVars<'g> {
    /// Registers every parameter; `trainable` decides whether they collect gradients.
    pub fn new(graph: &'g Graph, store: &ParamStore, trainable: bool) -> Self {
        let vars = store
            .tensors
            .iter()
            .map(|t| if trainable { graph.param(t.clone()) } else { graph.constant(t.clone()) })
            .collect();
        Self {
            vars,
            index: store.index.clone(),
        }
    }

    /// Wraps leaves created elsewhere; `vars` must follow the store order.
    pub fn from_vars(vars: Vec<Var<'g>>, store: &ParamStore) -> Self {
        assert_eq!(vars.len(), store.len(), "parameter count");
        Self {
            vars,
            index: store.index.clone(),
        }
    }

    pub fn get(&self, name: &str) -> Var<'g> {
        match self.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn vars(&self) -> &[Var<'g>] {
        &self.vars
    }

    /// `x W + b` for the linear layer `name`.
    pub fn linear(&self, name: &str, x: Var<'g>) -> Result<Var<'g>> {
        let rows = x.shape()[0];
        let w = self.get(&format!("{name}.w"));
        let b = self.get(&format!("{name}.b"));
        x.matmul(w)?.add(b.broadcast_rows(rows))
    }

    /// Linear layers `prefix0..prefix{n-1}` with ReLU between them.
    pub fn mlp(&self, prefix: &str, n: usize, x: Var<'g>) -> Result<Var<'g>> {
        let mut h = x;
        for k in 0..n {
            h = self.linear(&format!("{prefix}{k}"), h)?;
            if k + 1 < n {
                h = h.relu();
            }
        }
        Ok(h)
    }
}
