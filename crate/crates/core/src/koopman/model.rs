use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const MODEL_VERSION: &str = "epiwarn-koopman/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Window length in days.
    pub k: usize,
    /// Observables per day.
    pub m: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Dims {
    pub fn input(&self) -> usize {
        self.k * self.m
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            k: 5,
            m: 9,
            hidden: 64,
            latent: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub rec: f64,
    pub lin: f64,
    pub pred: f64,
    pub ar: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rec: 1.0,
            lin: 1.0,
            pred: 1.0,
            ar: 1.0,
            cls: 0.1,
        }
    }
}

/// Offsets of one affine layer inside the flat parameter vector. Weights are
/// row-major `n_out x n_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    fn end(&self) -> usize {
        self.b + self.n_out
    }

    pub fn forward(&self, p: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &p[self.w + o * self.n_in..self.w + (o + 1) * self.n_in];
            let mut acc = p[self.b + o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }

    /// Accumulates parameter gradients for upstream gradient `go` and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, p: &[f64], grad: &mut [f64], x: &[f64], go: &[f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.n_in];
        for (o, &g) in go.iter().enumerate() {
            grad[self.b + o] += g;
            if g == 0.0 {
                continue;
            }
            let base = self.w + o * self.n_in;
            for i in 0..self.n_in {
                grad[base + i] += g * x[i];
                gx[i] += p[base + i] * g;
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub enc: [Dense; 3],
    /// Latent operator, row-major `latent x latent`.
    pub a: usize,
    pub dec: [Dense; 2],
    pub ar_head: Dense,
    pub cls_head: Dense,
    pub len: usize,
}

impl Layout {
    pub fn new(d: Dims) -> Self {
        let mut at = 0;
        let mut dense = |n_in: usize, n_out: usize| {
            let l = Dense {
                w: at,
                b: at + n_in * n_out,
                n_in,
                n_out,
            };
            at = l.end();
            l
        };
        let enc = [
            dense(d.input(), d.hidden),
            dense(d.hidden, d.hidden),
            dense(d.hidden, d.latent),
        ];
        let dec = [dense(d.latent, d.hidden), dense(d.hidden, d.m)];
        let ar_head = dense(d.latent, 1);
        let cls_head = dense(d.latent, 1);
        let a = at;
        let len = a + d.latent * d.latent;
        Self {
            enc,
            a,
            dec,
            ar_head,
            cls_head,
            len,
        }
    }

    pub fn dense_layers(&self) -> [Dense; 7] {
        [
            self.enc[0],
            self.enc[1],
            self.enc[2],
            self.dec[0],
            self.dec[1],
            self.ar_head,
            self.cls_head,
        ]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Encoder, latent operator, decoder and the two outcome heads, with all
/// parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub dims: Dims,
    pub horizon: usize,
    pub weights: LossWeights,
    /// Per-observable divisors applied before encoding.
    pub scale: Vec<f64>,
    pub params: Vec<f64>,
    pub layout: Layout,
}

impl KoopmanModel {
    /// All-zero parameters.
    pub fn zeros(dims: Dims, horizon: usize, weights: LossWeights, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != dims.m {
            return Err(Error::Shape {
                expected: dims.m,
                got: scale.len(),
            });
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::config("koopman.scale", "normalization constants must be positive"));
        }
        if horizon == 0 {
            return Err(Error::config("koopman.horizon", "must be at least 1"));
        }
        let layout = Layout::new(dims);
        Ok(Self {
            dims,
            horizon,
            weights,
            scale,
            params: vec![0.0; layout.len],
            layout,
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero, `A` the identity
    /// plus uniform noise in `±0.01`.
    pub fn init(
        dims: Dims,
        horizon: usize,
        weights: LossWeights,
        scale: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(dims, horizon, weights, scale)?;
        let mut rng = SimRng::from_seed(seed);
        for l in model.layout.dense_layers() {
            let bound = 1.0 / (l.n_in as f64).sqrt();
            for w in &mut model.params[l.w..l.b] {
                *w = rng.uniform(-bound, bound);
            }
        }
        let r = dims.latent;
        for i in 0..r {
            for j in 0..r {
                let eye = if i == j { 1.0 } else { 0.0 };
                model.params[model.layout.a + i * r + j] = eye + rng.uniform(-0.01, 0.01);
            }
        }
        Ok(model)
    }

    pub fn a_matrix(&self) -> &[f64] {
        let r = self.dims.latent;
        &self.params[self.layout.a..self.layout.a + r * r]
    }

    pub fn set_a(&mut self, a: &[f64]) -> Result<()> {
        let r = self.dims.latent;
        if a.len() != r * r {
            return Err(Error::Shape {
                expected: r * r,
                got: a.len(),
            });
        }
        self.params[self.layout.a..self.layout.a + r * r].copy_from_slice(a);
        Ok(())
    }

    pub fn normalize_window(&self, raw: &[f64]) -> Vec<f64> {
        let m = self.dims.m;
        raw.iter()
            .enumerate()
            .map(|(i, v)| v / self.scale[i % m])
            .collect()
    }

    pub fn denormalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    pub(crate) fn check_window(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.dims.input() {
            return Err(Error::Shape {
                expected: self.dims.input(),
                got: raw.len(),
            });
        }
        Ok(())
    }

    /// Latent state of a raw (count-scale) flattened window.
    pub fn encode(&self, raw_window: &[f64]) -> Result<Vec<f64>> {
        self.check_window(raw_window)?;
        Ok(self.encode_normalized(&self.normalize_window(raw_window)))
    }

    pub fn encode_normalized(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let [e1, e2, e3] = self.layout.enc;
        let mut h1 = Vec::new();
        let mut h2 = Vec::new();
        let mut z = Vec::new();
        e1.forward(p, x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        e2.forward(p, &h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        e3.forward(p, &h2, &mut z);
        z
    }

    pub fn apply_a(&self, z: &[f64]) -> Vec<f64> {
        let r = self.dims.latent;
        let a = self.a_matrix();
        (0..r)
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..r {
                    acc += a[i * r + j] * z[j];
                }
                acc
            })
            .collect()
    }

    /// `A` applied `steps` times.
    pub fn advance(&self, z: &[f64], steps: usize) -> Vec<f64> {
        let mut out = z.to_vec();
        for _ in 0..steps {
            out = self.apply_a(&out);
        }
        out
    }

    /// Decoded observables on the normalized scale.
    pub fn decode_normalized(&self, z: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let [d1, d2] = self.layout.dec;
        let mut g = Vec::new();
        let mut y = Vec::new();
        d1.forward(p, z, &mut g);
        g.iter_mut().for_each(|v| *v = v.tanh());
        d2.forward(p, &g, &mut y);
        y
    }

    /// Count-scale forecasts for the `h` days after the window.
    pub fn forecast(&self, raw_window: &[f64], h: usize) -> Result<Vec<Vec<f64>>> {
        let mut z = self.encode(raw_window)?;
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            z = self.apply_a(&z);
            out.push(self.denormalize_row(&self.decode_normalized(&z)));
        }
        Ok(out)
    }

    /// Pre-activations of the attack-rate and outbreak heads.
    pub fn head_logits(&self, z: &[f64]) -> (f64, f64) {
        let p = &self.params;
        let mut a = Vec::new();
        let mut c = Vec::new();
        self.layout.ar_head.forward(p, z, &mut a);
        self.layout.cls_head.forward(p, z, &mut c);
        (a[0], c[0])
    }

    /// (attack-rate estimate, outbreak probability), both in `[0, 1]`.
    pub fn predict_heads(&self, z: &[f64]) -> (f64, f64) {
        let (a, c) = self.head_logits(z);
        (sigmoid(a), sigmoid(c))
    }

    pub fn outbreak_probability(&self, raw_window: &[f64]) -> Result<f64> {
        Ok(self.predict_heads(&self.encode(raw_window)?).1)
    }

    pub fn to_file(&self) -> ModelFile {
        let p = &self.params;
        let layer = |l: Dense| LayerFile {
            weights: (0..l.n_out)
                .map(|o| p[l.w + o * l.n_in..l.w + (o + 1) * l.n_in].to_vec())
                .collect(),
            bias: p[l.b..l.b + l.n_out].to_vec(),
        };
        let r = self.dims.latent;
        ModelFile {
            version: MODEL_VERSION.to_string(),
            dims: self.dims,
            horizon: self.horizon,
            loss_weights: self.weights,
            normalization: self.scale.clone(),
            encoder: self.layout.enc.iter().map(|&l| layer(l)).collect(),
            a: self.a_matrix().chunks(r).map(<[f64]>::to_vec).collect(),
            decoder: self.layout.dec.iter().map(|&l| layer(l)).collect(),
            attack_rate_head: layer(self.layout.ar_head),
            outbreak_head: layer(self.layout.cls_head),
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        if f.version != MODEL_VERSION {
            return Err(Error::parse("koopman model", format!("unsupported version {}", f.version)));
        }
        let mut model = Self::zeros(f.dims, f.horizon, f.loss_weights, f.normalization.clone())?;
        let bad = |what: &str| Error::parse("koopman model", format!("{what} has the wrong shape"));
        let mut put = |l: Dense, lf: &LayerFile, what: &str| -> Result<()> {
            if lf.weights.len() != l.n_out
                || lf.bias.len() != l.n_out
                || lf.weights.iter().any(|row| row.len() != l.n_in)
            {
                return Err(bad(what));
            }
            for (o, row) in lf.weights.iter().enumerate() {
                model.params[l.w + o * l.n_in..l.w + (o + 1) * l.n_in].copy_from_slice(row);
            }
            model.params[l.b..l.b + l.n_out].copy_from_slice(&lf.bias);
            Ok(())
        };
        let layout = Layout::new(f.dims);
        if f.encoder.len() != 3 || f.decoder.len() != 2 {
            return Err(bad("layer list"));
        }
        for (l, lf) in layout.enc.iter().zip(&f.encoder) {
            put(*l, lf, "encoder")?;
        }
        for (l, lf) in layout.dec.iter().zip(&f.decoder) {
            put(*l, lf, "decoder")?;
        }
        put(layout.ar_head, &f.attack_rate_head, "attack-rate head")?;
        put(layout.cls_head, &f.outbreak_head, "outbreak head")?;
        let r = f.dims.latent;
        if f.a.len() != r || f.a.iter().any(|row| row.len() != r) {
            return Err(bad("latent operator"));
        }
        let flat: Vec<f64> = f.a.iter().flatten().copied().collect();
        model.set_a(&flat)?;
        if model.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse("koopman model", "non-finite parameter"));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    /// Row-major, `n_out` rows of `n_in` values.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// On-disk form of a model. Floats are written in shortest round-trip form,
/// so a write/read cycle reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub dims: Dims,
    pub horizon: usize,
    pub loss_weights: LossWeights,
    pub normalization: Vec<f64>,
    pub encoder: Vec<LayerFile>,
    pub a: Vec<Vec<f64>>,
    pub decoder: Vec<LayerFile>,
    pub attack_rate_head: LayerFile,
    pub outbreak_head: LayerFile,
}
