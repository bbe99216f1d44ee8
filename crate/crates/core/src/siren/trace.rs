//! Primal + tangent propagation through the sine layers and the matching
//! reverse pass.
//!
//! For a hidden layer with `z = h W^T + b`, `h' = sin(w z)` and tangent
//! `zd = hd W^T`, `hd' = w cos(w z) * zd`. Given adjoints `g` (of `h'`)
//! and `gd` (of `hd'`):
//!
//! ```text
//! dL/dz  = g * w cos(w z) - gd * w^2 sin(w z) * zd
//! dL/dzd = gd * w cos(w z)
//! dL/dW += (dL/dz)^T h + (dL/dzd)^T hd
//! ```

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};

use super::{Gradients, SirenModel};

pub(crate) struct Trace {
    /// Input to each layer (recorded passes only).
    inputs: Vec<Array2<f64>>,
    /// Tangent inputs to each layer, one matrix per direction.
    tangent_inputs: Vec<Vec<Array2<f64>>>,
    sines: Vec<Array2<f64>>,
    cosines: Vec<Array2<f64>>,
    /// Tangent pre-activations of each hidden layer.
    tangent_pre: Vec<Vec<Array2<f64>>>,
    pub output: Array2<f64>,
    pub tangent_outputs: Vec<Array2<f64>>,
}

/// Push `coords` (n x 3) and any number of tangent directions (n x 3 each)
/// through the network. With `record` the intermediates needed by
/// [`backward`] are kept.
pub(crate) fn propagate(model: &SirenModel, coords: Array2<f64>, dirs: Vec<Array2<f64>>, record: bool) -> Trace {
    let omega = model.config.omega;
    let last = model.layers.len() - 1;
    let mut trace = Trace {
        inputs: Vec::new(),
        tangent_inputs: Vec::new(),
        sines: Vec::new(),
        cosines: Vec::new(),
        tangent_pre: Vec::new(),
        output: Array2::zeros((0, 0)),
        tangent_outputs: Vec::new(),
    };
    let mut h = coords;
    let mut hd = dirs;
    for (l, layer) in model.layers.iter().enumerate() {
        let wt = layer.weight.t();
        let mut z = h.dot(&wt);
        z += &layer.bias;
        let zd: Vec<Array2<f64>> = hd.iter().map(|d| d.dot(&wt)).collect();
        if l == last {
            if record {
                trace.inputs.push(h);
                trace.tangent_inputs.push(hd);
            }
            trace.output = z;
            trace.tangent_outputs = zd;
            break;
        }
        let s = z.mapv(|u| (omega * u).sin());
        let next_hd: Vec<Array2<f64>> = if zd.is_empty() && !record {
            Vec::new()
        } else {
            let c = z.mapv(|u| (omega * u).cos());
            let wc = &c * omega;
            let next = zd.iter().map(|d| d * &wc).collect();
            if record {
                trace.cosines.push(c);
            }
            next
        };
        if record {
            trace.inputs.push(h);
            trace.tangent_inputs.push(hd);
            trace.sines.push(s.clone());
            trace.tangent_pre.push(zd);
        }
        h = s;
        hd = next_hd;
    }
    trace
}

/// Accumulate dL/dtheta into `grads` given the loss sensitivity to the
/// outputs (`value_seed`, n x 3) and to the tangent outputs (one n x 3
/// matrix per direction, or none).
pub(crate) fn backward(
    model: &SirenModel,
    trace: &Trace,
    value_seed: Array2<f64>,
    tangent_seed: Vec<Array2<f64>>,
    grads: &mut Gradients,
) {
    assert!(!trace.inputs.is_empty(), "backward needs a recorded trace");
    let omega = model.config.omega;
    let last = model.layers.len() - 1;
    let mut g = value_seed;
    let mut gd = tangent_seed;
    for l in (0..=last).rev() {
        let (gz, gzd) = if l == last {
            (g, gd)
        } else {
            let s = &trace.sines[l];
            let c = &trace.cosines[l];
            let wc = c * omega;
            let mut gz = &g * &wc;
            for (gdk, zdk) in gd.iter().zip(&trace.tangent_pre[l]) {
                let curv = gdk * s * zdk;
                gz.scaled_add(-omega * omega, &curv);
            }
            let gzd: Vec<Array2<f64>> = gd.iter().map(|gdk| gdk * &wc).collect();
            (gz, gzd)
        };
        let out = &mut grads.layers[l];
        general_mat_mul(1.0, &gz.t(), &trace.inputs[l], 1.0, &mut out.weight);
        for (gzdk, hdk) in gzd.iter().zip(&trace.tangent_inputs[l]) {
            general_mat_mul(1.0, &gzdk.t(), hdk, 1.0, &mut out.weight);
        }
        out.bias += &gz.sum_axis(Axis(0));
        if l > 0 {
            let w = &model.layers[l].weight;
            g = gz.dot(w);
            gd = gzd.iter().map(|x| x.dot(w)).collect();
        } else {
            break;
        }
    }
}
