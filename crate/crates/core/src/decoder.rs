//! RGB decoder: a small ReLU MLP with a logistic output, plus the density
//! activation. Forward and backward passes are hand-written.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Fully connected layer. `weight` is stored input-major: row `j` holds the
/// weights from input `j` to every output.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    #[inline]
    pub fn w(&self, input: usize, output: usize) -> T {
        self.weight[input * self.outputs + output]
    }
}

/// Decoder weights. Hidden layers use a rectifier, the last layer a logistic
/// with three outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Dense<T>>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Input("decoder needs at least one layer".into()));
        };
        if last.outputs != 3 {
            return Err(Error::Input(format!(
                "decoder output width must be 3, got {}",
                last.outputs
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Input(format!("decoder layer {i} has inconsistent shapes")));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Input(format!(
                    "decoder layers do not chain: {} outputs feed {} inputs",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Zero weights for layer widths `[input, hidden.., 3]`.
    pub fn zeros(input: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(3);
        Self {
            layers: dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect(),
        }
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut mlp = Self::zeros(input, hidden);
        for layer in &mut mlp.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = T::cast(rng.random_range(-bound..bound));
            }
        }
        mlp
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    /// Length of the activation cache: the input, every hidden activation and the output.
    pub fn cache_len(&self) -> usize {
        self.layers[0].inputs + self.layers.iter().map(|l| l.outputs).sum::<usize>()
    }

    fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.inputs.max(l.outputs)).max().unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Runs the network on `cache[..input_len]`, filling the rest of the cache.
    pub fn forward_in_place(&self, cache: &mut [T]) -> [T; 3] {
        let mut offset = 0;
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (head, tail) = cache.split_at_mut(offset + layer.inputs);
            let x = &head[offset..];
            let out = &mut tail[..layer.outputs];
            out.copy_from_slice(&layer.bias);
            for (j, &xj) in x.iter().enumerate() {
                if xj == T::zero() {
                    continue;
                }
                let row = &layer.weight[j * layer.outputs..(j + 1) * layer.outputs];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += xj * w;
                }
            }
            if li == last {
                for o in out.iter_mut() {
                    *o = sigmoid(*o);
                }
            } else {
                for o in out.iter_mut() {
                    if *o < T::zero() {
                        *o = T::zero();
                    }
                }
            }
            offset += layer.inputs;
        }
        let y = &cache[offset..offset + 3];
        [y[0], y[1], y[2]]
    }

    /// Accumulates the gradients of `upstream · rgb` into `grads` and, when
    /// requested, writes the input gradient.
    pub fn backward_in_place(
        &self,
        cache: &[T],
        upstream: [T; 3],
        grads: &mut Mlp<T>,
        mut grad_input: Option<&mut [T]>,
        scratch: &mut Vec<T>,
    ) {
        let width = self.max_width();
        scratch.clear();
        scratch.resize(2 * width, T::zero());
        let (g_out, g_in) = scratch.split_at_mut(width);

        let mut offset = self.cache_len() - 3;
        for c in 0..3 {
            let y = cache[offset + c];
            g_out[c] = upstream[c] * y * (T::one() - y);
        }
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let x_off = offset - layer.inputs;
            let x = &cache[x_off..offset];
            let g = &g_out[..layer.outputs];
            let grad = &mut grads.layers[li];
            for (gb, &gi) in grad.bias.iter_mut().zip(g) {
                *gb += gi;
            }
            let need_input = li > 0 || grad_input.is_some();
            for (j, &xj) in x.iter().enumerate() {
                let row = j * layer.outputs..(j + 1) * layer.outputs;
                if xj != T::zero() {
                    for (gw, &gi) in grad.weight[row.clone()].iter_mut().zip(g) {
                        *gw += xj * gi;
                    }
                }
                if need_input {
                    // ReLU mask: a hidden activation of exactly zero passes no gradient.
                    g_in[j] = if li > 0 && xj <= T::zero() {
                        T::zero()
                    } else {
                        dot(&layer.weight[row], g)
                    };
                }
            }
            if li == 0 {
                if let Some(gi) = grad_input.as_deref_mut() {
                    gi[..layer.inputs].copy_from_slice(&g_in[..layer.inputs]);
                }
            } else {
                g_out[..layer.inputs].copy_from_slice(&g_in[..layer.inputs]);
            }
            offset = x_off;
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Cached activations from [`mlp_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpCache<T>(pub Vec<T>);

pub fn mlp_forward<T: Real>(w: &Mlp<T>, x: &[T]) -> Result<([T; 3], MlpCache<T>)> {
    if x.len() != w.input_len() {
        return Err(Error::Input(format!(
            "decoder expects {} inputs, got {}",
            w.input_len(),
            x.len()
        )));
    }
    let mut cache = vec![T::zero(); w.cache_len()];
    cache[..x.len()].copy_from_slice(x);
    let rgb = w.forward_in_place(&mut cache);
    Ok((rgb, MlpCache(cache)))
}

/// Returns `(input gradient, weight gradients)` of `upstream · rgb`.
pub fn mlp_backward<T: Real>(w: &Mlp<T>, cache: &MlpCache<T>, upstream: [T; 3]) -> (Vec<T>, Mlp<T>) {
    let mut grads = Mlp::zeros(w.input_len(), &w.hidden());
    let mut gin = vec![T::zero(); w.input_len()];
    let mut scratch = Vec::new();
    w.backward_in_place(&cache.0, upstream, &mut grads, Some(&mut gin), &mut scratch);
    (gin, grads)
}

/// Softplus `ln(1 + eʳ)`, evaluated without overflow.
#[inline]
pub fn density_activation(raw: f64) -> f64 {
    if raw > 0.0 {
        raw + (-raw).exp().ln_1p()
    } else {
        raw.exp().ln_1p()
    }
}

/// Derivative of [`density_activation`].
#[inline]
pub fn density_activation_grad(raw: f64) -> f64 {
    sigmoid(raw)
}
