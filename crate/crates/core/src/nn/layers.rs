//! Deterministic building blocks. Sequence tensors are `[batch, time, channels]`.

use candle_core::{Tensor, D};
use rand::RngCore;
use rand_distr::{Bernoulli, Distribution};

use super::params::{device, Init, ParamStore, DTYPE};
use crate::error::{Error, Result};

/// Per-forward context: training mode toggles dropout, `rng` feeds every
/// stochastic choice made during the pass.
pub struct Pass<'a> {
    pub training: bool,
    pub rng: &'a mut dyn RngCore,
}

impl<'a> Pass<'a> {
    pub fn eval(rng: &'a mut dyn RngCore) -> Self {
        Self { training: false, rng }
    }

    pub fn train(rng: &'a mut dyn RngCore) -> Self {
        Self { training: true, rng }
    }
}

/// `log(1 + exp(x))`, evaluated without overflow.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = x.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

/// Inverted dropout; identity outside training or when `p == 0`.
pub fn dropout(x: &Tensor, p: f64, pass: &mut Pass<'_>) -> Result<Tensor> {
    if !pass.training || p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = Bernoulli::new(1.0 - p).map_err(|e| Error::config(e.to_string()))?;
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.elem_count())
        .map(|_| if keep.sample(&mut *pass.rng) { scale } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.dims(), &device())?;
    Ok((x * mask)?)
}

fn apply_last_dim<F>(x: &Tensor, in_dim: usize, f: F) -> Result<Tensor>
where
    F: FnOnce(&Tensor) -> Result<Tensor>,
{
    let dims = x.dims().to_vec();
    if dims.last() != Some(&in_dim) {
        return Err(Error::Shape {
            expected: format!("last dim {in_dim}"),
            got: format!("{dims:?}"),
        });
    }
    let rows: usize = dims[..dims.len() - 1].iter().product();
    let y = f(&x.reshape((rows, in_dim))?)?;
    let mut out_dims = dims;
    *out_dims.last_mut().unwrap() = y.dim(1)?;
    Ok(y.reshape(out_dims)?)
}

/// Fully connected layer over the last dimension.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    in_dim: usize,
    out_dim: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let weight = store.var(
            format!("{name}.weight"),
            &[in_dim, out_dim],
            Init::Glorot {
                fan_in: in_dim,
                fan_out: out_dim,
            },
        )?;
        let bias = store.var(format!("{name}.bias"), &[out_dim], Init::Zeros)?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// A layer whose weights start at zero, so its output starts at the bias.
    pub fn zeroed(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let weight = store.var(format!("{name}.weight"), &[in_dim, out_dim], Init::Zeros)?;
        let bias = store.var(format!("{name}.bias"), &[out_dim], Init::Zeros)?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        apply_last_dim(x, self.in_dim, |rows| {
            Ok(rows.matmul(&self.weight)?.broadcast_add(&self.bias)?)
        })
    }
}

/// Causal dilated 1-D convolution: output at step `t` sees inputs
/// `t, t - d, ..., t - (k - 1) d` only (zero padding on the left).
#[derive(Debug, Clone)]
pub struct CausalConv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    dilation: usize,
}

impl CausalConv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
    ) -> Result<Self> {
        if kernel == 0 || dilation == 0 {
            return Err(Error::config("convolution kernel and dilation must be positive"));
        }
        let weight = store.var(
            format!("{name}.weight"),
            &[kernel * in_ch, out_ch],
            Init::Glorot {
                fan_in: kernel * in_ch,
                fan_out: kernel * out_ch,
            },
        )?;
        let bias = store.var(format!("{name}.bias"), &[out_ch], Init::Zeros)?;
        Ok(Self {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            dilation,
        })
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t, c) = x.dims3()?;
        if c != self.in_ch {
            return Err(Error::Shape {
                expected: format!("{} input channels", self.in_ch),
                got: c.to_string(),
            });
        }
        let taps = if self.kernel == 1 {
            x.clone()
        } else {
            let pad = (self.kernel - 1) * self.dilation;
            let padded = x.pad_with_zeros(1, pad, 0)?;
            let shifted = (0..self.kernel)
                .map(|j| padded.narrow(1, j * self.dilation, t))
                .collect::<candle_core::Result<Vec<_>>>()?;
            Tensor::cat(&shifted, 2)?
        };
        let y = taps
            .reshape((n * t, self.kernel * self.in_ch))?
            .matmul(&self.weight)?
            .broadcast_add(&self.bias)?;
        Ok(y.reshape((n, t, self.out_ch))?)
    }
}

/// Single-layer LSTM returning the final hidden state.
#[derive(Debug, Clone)]
pub struct Lstm {
    input_kernel: Tensor,
    recurrent_kernel: Tensor,
    bias: Tensor,
    in_dim: usize,
    hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        let input_kernel = store.var(
            format!("{name}.input_kernel"),
            &[in_dim, 4 * hidden],
            Init::Glorot {
                fan_in: in_dim,
                fan_out: 4 * hidden,
            },
        )?;
        let recurrent_kernel = store.var(
            format!("{name}.recurrent_kernel"),
            &[hidden, 4 * hidden],
            Init::Glorot {
                fan_in: hidden,
                fan_out: 4 * hidden,
            },
        )?;
        // Gate order i, f, g, o; forget-gate bias starts at one.
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let bias = store.var(format!("{name}.bias"), &[4 * hidden], Init::Zeros)?;
        let init = Tensor::from_vec(b, 4 * hidden, &device())?;
        store
            .get(&format!("{name}.bias"))
            .expect("just registered")
            .set(&init)?;
        Ok(Self {
            input_kernel,
            recurrent_kernel,
            bias,
            in_dim,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t, c) = x.dims3()?;
        if c != self.in_dim {
            return Err(Error::Shape {
                expected: format!("{} LSTM inputs", self.in_dim),
                got: c.to_string(),
            });
        }
        let hd = self.hidden;
        let projected = x
            .reshape((n * t, c))?
            .matmul(&self.input_kernel)?
            .broadcast_add(&self.bias)?
            .reshape((n, t, 4 * hd))?;
        let mut h = Tensor::zeros((n, hd), DTYPE, &device())?;
        let mut cell = Tensor::zeros((n, hd), DTYPE, &device())?;
        for step in 0..t {
            let gates = (projected.narrow(1, step, 1)?.squeeze(1)? + h.matmul(&self.recurrent_kernel)?)?;
            let i = sigmoid(&gates.narrow(1, 0, hd)?)?;
            let f = sigmoid(&gates.narrow(1, hd, hd)?)?;
            let g = gates.narrow(1, 2 * hd, hd)?.tanh()?;
            let o = sigmoid(&gates.narrow(1, 3 * hd, hd)?)?;
            cell = ((f * &cell)? + (i * g)?)?;
            h = (o * cell.tanh()?)?;
        }
        Ok(h)
    }
}

/// Layer normalization over the last dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            gamma: store.var(format!("{name}.gamma"), &[dim], Init::Const(1.0))?,
            beta: store.var(format!("{name}.beta"), &[dim], Init::Zeros)?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&var.affine(1.0, self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Multi-head scaled dot-product self-attention.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    query: Dense,
    key: Dense,
    value: Dense,
    output: Dense,
    heads: usize,
    key_dim: usize,
    dropout: f64,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        heads: usize,
        key_dim: usize,
        dropout: f64,
    ) -> Result<Self> {
        let inner = heads * key_dim;
        Ok(Self {
            query: Dense::new(store, &format!("{name}.query"), model_dim, inner)?,
            key: Dense::new(store, &format!("{name}.key"), model_dim, inner)?,
            value: Dense::new(store, &format!("{name}.value"), model_dim, inner)?,
            output: Dense::new(store, &format!("{name}.output"), inner, model_dim)?,
            heads,
            key_dim,
            dropout,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (n, t, _) = x.dims3()?;
        Ok(x.reshape((n, t, self.heads, self.key_dim))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// Returns the attended sequence and the attention weights `[batch, heads, query, key]`.
    pub fn forward(&self, x: &Tensor, pass: &mut Pass<'_>) -> Result<(Tensor, Tensor)> {
        let (n, t, _) = x.dims3()?;
        let q = self.split_heads(&self.query.forward(x)?)?;
        let k = self.split_heads(&self.key.forward(x)?)?;
        let v = self.split_heads(&self.value.forward(x)?)?;
        let scores = q
            .matmul(&k.transpose(2, 3)?.contiguous()?)?
            .affine(1.0 / (self.key_dim as f64).sqrt(), 0.0)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let dropped = dropout(&weights, self.dropout, pass)?;
        let attended = dropped
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((n, t, self.heads * self.key_dim))?;
        Ok((self.output.forward(&attended)?, weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec3(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
        t.to_vec3::<f64>().unwrap()
    }

    #[test]
    fn softplus_is_stable() {
        let x = tensor(vec![-800.0, -1.0, 0.0, 1.0, 800.0], &[5]).unwrap();
        let y = softplus(&x).unwrap().to_vec1::<f64>().unwrap();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((y[2] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(y[4], 800.0);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut store = ParamStore::new(4);
        let conv = CausalConv1d::new(&mut store, "c", 2, 3, 3, 2).unwrap();
        let data: Vec<f64> = (0..2 * 7 * 2).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = tensor(data.clone(), &[2, 7, 2]).unwrap();
        let y = vec3(&conv.forward(&x).unwrap());
        let w = conv.weight.to_vec2::<f64>().unwrap();
        let b = conv.bias.to_vec1::<f64>().unwrap();
        let at = |n: usize, t: isize, c: usize| {
            if t < 0 {
                0.0
            } else {
                data[n * 14 + t as usize * 2 + c]
            }
        };
        for n in 0..2 {
            for t in 0..7 {
                for o in 0..3 {
                    let mut acc = b[o];
                    for j in 0..3 {
                        let src = t as isize - ((2 - j) * 2) as isize;
                        for c in 0..2 {
                            acc += w[j * 2 + c][o] * at(n, src, c);
                        }
                    }
                    assert!((y[n][t][o] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::ones((4, 50), DTYPE, &device()).unwrap();
        let same = dropout(&x, 0.5, &mut Pass::eval(&mut rng)).unwrap();
        assert_eq!(same.to_vec2::<f64>().unwrap(), x.to_vec2::<f64>().unwrap());
        let dropped = dropout(&x, 0.5, &mut Pass::train(&mut rng)).unwrap();
        let v = dropped.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|e| *e == 0.0 || *e == 2.0));
        assert!(v.contains(&0.0));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut store = ParamStore::new(1);
        let mha = MultiHeadAttention::new(&mut store, "a", 4, 2, 3, 0.1).unwrap();
        let x = tensor((0..2 * 5 * 4).map(|i| (i as f64).cos()).collect(), &[2, 5, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, w) = mha.forward(&x, &mut Pass::eval(&mut rng)).unwrap();
        assert_eq!(w.dims(), &[2, 2, 5, 5]);
        let sums = w.sum(D::Minus1).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-5));
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let mut store = ParamStore::new(1);
        let ln = LayerNorm::new(&mut store, "ln", 6, 1e-6).unwrap();
        let x = tensor((0..12).map(|i| (i * i) as f64).collect(), &[2, 6]).unwrap();
        let y = ln.forward(&x).unwrap().to_vec2::<f64>().unwrap();
        for row in y {
            let m = row.iter().sum::<f64>() / 6.0;
            let v = row.iter().map(|r| (r - m).powi(2)).sum::<f64>() / 6.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn lstm_output_shape() {
        let mut store = ParamStore::new(1);
        let lstm = Lstm::new(&mut store, "l", 3, 5).unwrap();
        let x = Tensor::ones((4, 6, 3), DTYPE, &device()).unwrap();
        assert_eq!(lstm.forward(&x).unwrap().dims(), &[4, 5]);
    }
}
