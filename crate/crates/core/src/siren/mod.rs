//! Sine-activated coordinate network `f(x, y, t) -> (R, G, B)`.
//!
//! Every hidden layer applies `u -> sin(omega * u)` to its affine
//! pre-activation; the last layer is affine only. Alongside the primal pass
//! the network can push forward tangents (directional input derivatives),
//! and the backward pass differentiates through both, so losses built on
//! the exact input Jacobian can be minimised over the parameters.

mod io;
mod trace;

use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

pub use io::{load_model, load_model_expecting, model_from_bytes, model_to_bytes, save_model, CheckpointError};
pub(crate) use trace::{backward, propagate};

/// Input coordinates: (x, y, t).
pub const IN_DIM: usize = 3;
/// Output channels: (R, G, B).
pub const OUT_DIM: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input coordinate at batch index {index}")]
    NonFiniteInput { index: usize },
    #[error("{what} has {found} rows, expected {expected}")]
    SeedShape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer} has shape {found:?}, expected {expected:?}")]
    LayerShape {
        layer: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
}

/// Architecture of a sine network. `depth` counts every affine layer,
/// including the output one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirenConfig {
    depth: usize,
    width: usize,
    omega: f64,
}

impl SirenConfig {
    pub fn new(depth: usize, width: usize, omega: f64) -> Result<Self, ModelError> {
        if depth < 2 {
            return Err(ModelError::InvalidConfig(format!("depth must be >= 2, got {depth}")));
        }
        if width < 1 {
            return Err(ModelError::InvalidConfig("width must be >= 1".into()));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(ModelError::InvalidConfig(format!("omega must be > 0, got {omega}")));
        }
        Ok(Self { depth, width, omega })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `(out, in)` for each layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let fan_in = if l == 0 { IN_DIM } else { self.width };
                let fan_out = if l + 1 == self.depth { OUT_DIM } else { self.width };
                (fan_out, fan_in)
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// One affine layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    fn shape(&self) -> (usize, usize) {
        self.weight.dim()
    }
}

/// Value and input derivatives of the network at one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianResult {
    pub value: [f64; 3],
    pub d_dx: [f64; 3],
    pub d_dy: [f64; 3],
    pub d_dt: [f64; 3],
}

impl JacobianResult {
    /// Per-channel directional derivative `D f . dir`.
    pub fn directional(&self, dir: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|c| self.d_dx[c] * dir[0] + self.d_dy[c] * dir[1] + self.d_dt[c] * dir[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirenModel {
    config: SirenConfig,
    seed: u64,
    layers: Vec<Layer>,
}

/// Sample a fresh network. First layer weights are uniform in
/// `[-1/3, 1/3]`, later ones in `[-sqrt(6/fan_in)/omega, +sqrt(6/fan_in)/omega]`,
/// biases start at zero.
/// Per-sample directions and the loss sensitivity to the derivative
/// along each one.
pub type TangentSeed<'a> = (&'a [[f64; 3]], &'a [[f64; 3]]);

pub fn init_siren(config: SirenConfig, seed: u64) -> SirenModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layer_shapes()
        .into_iter()
        .enumerate()
        .map(|(l, (out, inp))| {
            let bound = if l == 0 {
                1.0 / IN_DIM as f64
            } else {
                (6.0 / inp as f64).sqrt() / config.omega
            };
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weight = Array2::from_shape_fn((out, inp), |_| dist.sample(&mut rng));
            Layer {
                weight,
                bias: Array1::zeros(out),
            }
        })
        .collect();
    SirenModel { config, seed, layers }
}

impl SirenModel {
    pub fn init(config: SirenConfig, seed: u64) -> Self {
        init_siren(config, seed)
    }

    /// Build from explicit layers, checking the shape chain.
    pub fn from_layers(config: SirenConfig, seed: u64, layers: Vec<Layer>) -> Result<Self, ModelError> {
        let shapes = config.layer_shapes();
        if layers.len() != shapes.len() {
            return Err(ModelError::InvalidConfig(format!(
                "{} layers for depth {}",
                layers.len(),
                config.depth
            )));
        }
        for (l, (layer, &expected)) in layers.iter().zip(&shapes).enumerate() {
            if layer.shape() != expected || layer.bias.len() != expected.0 {
                return Err(ModelError::LayerShape {
                    layer: l,
                    expected,
                    found: layer.shape(),
                });
            }
        }
        Ok(Self { config, seed, layers })
    }

    pub fn config(&self) -> &SirenConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.config.num_params()
    }

    /// Parameters flattened layer by layer: weight (row-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.num_params() {
            return Err(ModelError::ParamCount {
                expected: self.num_params(),
                found: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.weight.iter_mut().chain(layer.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Evaluate the network at each coordinate.
    pub fn forward(&self, coords: &[[f64; 3]]) -> Result<Vec<[f64; 3]>, ModelError> {
        check_finite(coords)?;
        let parts = par::map_chunks(coords, par::CHUNK, |chunk| {
            let trace = propagate(self, to_matrix(chunk), Vec::new(), false);
            from_matrix(&trace.output)
        });
        Ok(parts.concat())
    }

    /// Values plus exact derivatives with respect to x, y and t.
    ///
    /// The value channel is computed by the same primal pass as
    /// [`forward`](Self::forward) and is bit-identical to it.
    pub fn forward_with_jacobian(&self, coords: &[[f64; 3]]) -> Result<Vec<JacobianResult>, ModelError> {
        check_finite(coords)?;
        let parts = par::map_chunks(coords, par::CHUNK, |chunk| {
            let n = chunk.len();
            let dirs = (0..IN_DIM)
                .map(|k| Array2::from_shape_fn((n, IN_DIM), |(_, j)| if j == k { 1.0 } else { 0.0 }))
                .collect();
            let trace = propagate(self, to_matrix(chunk), dirs, false);
            (0..n)
                .map(|i| {
                    let row = |m: &Array2<f64>| [m[[i, 0]], m[[i, 1]], m[[i, 2]]];
                    JacobianResult {
                        value: row(&trace.output),
                        d_dx: row(&trace.tangent_outputs[0]),
                        d_dy: row(&trace.tangent_outputs[1]),
                        d_dt: row(&trace.tangent_outputs[2]),
                    }
                })
                .collect::<Vec<_>>()
        });
        Ok(parts.concat())
    }

    /// Values and per-channel directional derivatives `D f . dir` for one
    /// direction per coordinate.
    #[allow(clippy::type_complexity)]
    pub fn directional(
        &self,
        coords: &[[f64; 3]],
        dirs: &[[f64; 3]],
    ) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>), ModelError> {
        check_finite(coords)?;
        check_rows("directions", coords.len(), dirs.len())?;
        let idx: Vec<usize> = (0..coords.len()).collect();
        let parts = par::map_chunks(&idx, par::CHUNK, |chunk| {
            let (lo, hi) = (chunk[0], chunk[chunk.len() - 1] + 1);
            let trace = propagate(
                self,
                to_matrix(&coords[lo..hi]),
                vec![to_matrix(&dirs[lo..hi])],
                false,
            );
            (from_matrix(&trace.output), from_matrix(&trace.tangent_outputs[0]))
        });
        let (values, tangents): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        Ok((values.concat(), tangents.concat()))
    }

    /// Gradient of a scalar loss with respect to every weight and bias.
    ///
    /// The loss is described by its sensitivities: `value_seed[i]` is
    /// dL/df(x_i), and the optional `(dirs, seed)` pair gives
    /// `seed[i]` = dL/d(D f(x_i) . dirs[i]). The
    /// second term is differentiated through the input Jacobian, giving the
    /// mixed second-order path. Row counts must match the coordinates.
    pub fn parameter_gradients(
        &self,
        coords: &[[f64; 3]],
        value_seed: &[[f64; 3]],
        tangent: Option<TangentSeed<'_>>,
    ) -> Result<Gradients, ModelError> {
        check_finite(coords)?;
        check_rows("value seed", coords.len(), value_seed.len())?;
        if let Some((dirs, seed)) = tangent {
            check_rows("directions", coords.len(), dirs.len())?;
            check_rows("tangent seed", coords.len(), seed.len())?;
        }
        let idx: Vec<usize> = (0..coords.len()).collect();
        let parts = par::map_chunks(&idx, par::CHUNK, |chunk| {
            let (lo, hi) = (chunk[0], chunk[chunk.len() - 1] + 1);
            let dirs = tangent.map(|(d, _)| vec![to_matrix(&d[lo..hi])]).unwrap_or_default();
            let trace = propagate(self, to_matrix(&coords[lo..hi]), dirs, true);
            let tangent_seed = tangent.map(|(_, s)| vec![to_matrix(&s[lo..hi])]).unwrap_or_default();
            let mut grads = Gradients::zeros_like(self);
            backward(self, &trace, to_matrix(&value_seed[lo..hi]), tangent_seed, &mut grads);
            grads
        });
        Ok(Gradients::sum_in_order(self, parts))
    }
}

/// Parameter-shaped accumulator for dL/dtheta.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &SirenModel) -> Self {
        Self {
            layers: model
                .config
                .layer_shapes()
                .into_iter()
                .map(|(o, i)| Layer::zeros(o, i))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub(crate) fn sum_in_order(model: &SirenModel, parts: Vec<Gradients>) -> Gradients {
        let mut total = Gradients::zeros_like(model);
        for p in &parts {
            total.add_assign(p);
        }
        total
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    /// Index of the first layer holding a NaN or infinite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn shapes_match(&self, model: &SirenModel) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, p)| g.weight.dim() == p.weight.dim() && g.bias.len() == p.bias.len())
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn check_finite(coords: &[[f64; 3]]) -> Result<(), ModelError> {
    match coords.iter().position(|c| !c.iter().all(|v| v.is_finite())) {
        Some(index) => Err(ModelError::NonFiniteInput { index }),
        None => Ok(()),
    }
}

fn check_rows(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::SeedShape { what, expected, found })
    }
}

pub(crate) fn to_matrix(rows: &[[f64; 3]]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), 3), |(i, j)| rows[i][j])
}

pub(crate) fn from_matrix(m: &Array2<f64>) -> Vec<[f64; 3]> {
    m.outer_iter().map(|r| [r[0], r[1], r[2]]).collect()
}
