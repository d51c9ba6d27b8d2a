//! Portable serialized MLP used by the neural scheduling policy.
//!
//! All values are little-endian. Floats are IEEE-754 binary32.
//!
//! ```text
//! magic "RWPN" | version u16 | n_ues u32 | layout u8 (0 throughput, 1 video)
//! cqi_scale f32 | backlog_scale f32 | media_buffer_scale f32
//! n_layers u32
//! per layer: rows u32 | cols u32 | activation u8 (0 tanh, 1 relu, 2 linear)
//!            rows*cols f32 weights, row-major | rows f32 bias
//! ```
//!
//! A layer maps `x` (length `cols`) to `act(W x + b)` (length `rows`). The
//! first layer reads the state vector (2 or 3 values per UE, interleaved by
//! UE in ascending rnti order) and the last layer yields one logit per UE.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"RWPN";
pub const FORMAT_VERSION: u16 = 1;

/// Hidden layer widths of freshly initialized networks.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StateLayout {
    /// Per UE: backlog, cqi.
    Throughput = 0,
    /// Per UE: backlog, cqi, media buffer.
    Video = 1,
}

impl StateLayout {
    pub fn features_per_ue(self) -> usize {
        match self {
            StateLayout::Throughput => 2,
            StateLayout::Video => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(StateLayout::Throughput),
            1 => Some(StateLayout::Video),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Activation {
    Tanh = 0,
    Relu = 1,
    Linear = 2,
}

impl Activation {
    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }
}

/// Divisors applied to raw state values before the forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub cqi_scale: f32,
    /// Queue capacity in bytes.
    pub backlog_scale: f32,
    /// Media buffer cap in seconds.
    pub media_buffer_scale: f32,
}

impl Normalization {
    pub fn new(backlog_scale: f32) -> Self {
        Normalization {
            cqi_scale: 15.0,
            backlog_scale,
            media_buffer_scale: 6.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    /// Row-major `rows x cols`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("file truncated at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown state layout tag {0}")]
    UnknownLayout(u8),
    #[error("layer {layer}: unknown activation tag {tag}")]
    UnknownActivation { layer: usize, tag: u8 },
    #[error("network must serve at least one UE")]
    NoUes,
    #[error("network has no layers")]
    NoLayers,
    #[error("layer {layer}: expected {expected} inputs, found {found}")]
    InputMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("last layer yields {found} outputs for {expected} UEs")]
    OutputMismatch { expected: usize, found: usize },
    #[error("layer {layer}: {rows}x{cols} is empty or too large")]
    BadShape {
        layer: usize,
        rows: usize,
        cols: usize,
    },
    #[error("layer {layer}: stored sizes do not match {rows}x{cols}")]
    ParamLength {
        layer: usize,
        rows: usize,
        cols: usize,
    },
    #[error("non-finite value at offset {offset}")]
    NonFinite { offset: usize },
    #[error("normalization constant {name} = {value} is not positive and finite")]
    BadNormalization { name: &'static str, value: f32 },
    #[error("{0} trailing bytes after the last layer")]
    TrailingBytes(usize),
    #[error("state vector has {found} values, network expects {expected}")]
    StateLength { expected: usize, found: usize },
}

/// Upper bound on any single layer dimension accepted from a file.
const MAX_DIM: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    n_ues: usize,
    layout: StateLayout,
    norm: Normalization,
    layers: Vec<Layer>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PolicyFileError> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(PolicyFileError::Truncated {
                offset: self.pos,
                needed: n - remaining,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PolicyFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, PolicyFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, PolicyFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, PolicyFileError> {
        let offset = self.pos;
        let v = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(PolicyFileError::NonFinite { offset });
        }
        Ok(v)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, PolicyFileError> {
        // check the length up front so a corrupt count fails before allocating
        let start = self.pos;
        self.take(n * 4)?;
        self.pos = start;
        (0..n).map(|_| self.f32()).collect()
    }
}

impl PolicyNetwork {
    pub fn new(
        n_ues: usize,
        layout: StateLayout,
        norm: Normalization,
        layers: Vec<Layer>,
    ) -> Result<Self, PolicyFileError> {
        let net = PolicyNetwork {
            n_ues,
            layout,
            norm,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), PolicyFileError> {
        if self.n_ues == 0 {
            return Err(PolicyFileError::NoUes);
        }
        for (name, value) in [
            ("cqi_scale", self.norm.cqi_scale),
            ("backlog_scale", self.norm.backlog_scale),
            ("media_buffer_scale", self.norm.media_buffer_scale),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PolicyFileError::BadNormalization { name, value });
            }
        }
        if self.layers.is_empty() {
            return Err(PolicyFileError::NoLayers);
        }
        let mut expected = self.input_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 || l.rows > MAX_DIM || l.cols > MAX_DIM {
                return Err(PolicyFileError::BadShape {
                    layer: i,
                    rows: l.rows,
                    cols: l.cols,
                });
            }
            if l.cols != expected {
                return Err(PolicyFileError::InputMismatch {
                    layer: i,
                    expected,
                    found: l.cols,
                });
            }
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(PolicyFileError::ParamLength {
                    layer: i,
                    rows: l.rows,
                    cols: l.cols,
                });
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(PolicyFileError::NonFinite { offset: 0 });
            }
            expected = l.rows;
        }
        if expected != self.n_ues {
            return Err(PolicyFileError::OutputMismatch {
                expected: self.n_ues,
                found: expected,
            });
        }
        Ok(())
    }

    /// Network with the given hidden widths, tanh hidden activations, a
    /// linear output layer and uniform Glorot initialization.
    pub fn random<R: Rng + ?Sized>(
        n_ues: usize,
        layout: StateLayout,
        norm: Normalization,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, PolicyFileError> {
        let mut dims = vec![n_ues * layout.features_per_ue()];
        dims.extend_from_slice(hidden);
        dims.push(n_ues);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let (cols, rows) = (d[0], d[1]);
                let limit = (6.0 / (rows + cols) as f64).sqrt() as f32;
                Layer {
                    rows,
                    cols,
                    activation: if i + 2 == dims.len() {
                        Activation::Linear
                    } else {
                        Activation::Tanh
                    },
                    weights: (0..rows * cols)
                        .map(|_| rng.gen_range(-limit..=limit))
                        .collect(),
                    bias: (0..rows).map(|_| rng.gen_range(-0.1..=0.1)).collect(),
                }
            })
            .collect();
        Self::new(n_ues, layout, norm, layers)
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.n_ues * self.layout.features_per_ue()
    }

    /// Forward pass in f64 arithmetic; returns one logit per UE.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>, PolicyFileError> {
        if state.len() != self.input_dim() {
            return Err(PolicyFileError::StateLength {
                expected: self.input_dim(),
                found: state.len(),
            });
        }
        let mut x = state.to_vec();
        let mut y = Vec::new();
        for l in &self.layers {
            y.clear();
            y.extend(
                l.weights
                    .chunks_exact(l.cols)
                    .zip(&l.bias)
                    .map(|(row, &b)| {
                        let dot: f64 = row.iter().zip(&x).map(|(&w, &v)| w as f64 * v).sum();
                        l.activation.apply(dot + b as f64)
                    }),
            );
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.n_ues as u32).to_le_bytes());
        b.push(self.layout as u8);
        for v in [
            self.norm.cqi_scale,
            self.norm.backlog_scale,
            self.norm.media_buffer_scale,
        ] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            b.extend_from_slice(&(l.rows as u32).to_le_bytes());
            b.extend_from_slice(&(l.cols as u32).to_le_bytes());
            b.push(l.activation as u8);
            for v in l.weights.iter().chain(&l.bias) {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyFileError> {
        let mut c = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = c.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(PolicyFileError::BadMagic(magic));
        }
        let version = c.u16()?;
        if version != FORMAT_VERSION {
            return Err(PolicyFileError::UnsupportedVersion(version));
        }
        let n_ues = c.u32()? as usize;
        let tag = c.u8()?;
        let layout = StateLayout::from_tag(tag).ok_or(PolicyFileError::UnknownLayout(tag))?;
        let norm = Normalization {
            cqi_scale: c.f32()?,
            backlog_scale: c.f32()?,
            media_buffer_scale: c.f32()?,
        };
        let n_layers = c.u32()? as usize;
        if n_layers == 0 {
            return Err(PolicyFileError::NoLayers);
        }
        let mut layers = Vec::new();
        let mut expected = n_ues * layout.features_per_ue();
        for i in 0..n_layers {
            let rows = c.u32()? as usize;
            let cols = c.u32()? as usize;
            if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
                return Err(PolicyFileError::BadShape {
                    layer: i,
                    rows,
                    cols,
                });
            }
            if cols != expected {
                return Err(PolicyFileError::InputMismatch {
                    layer: i,
                    expected,
                    found: cols,
                });
            }
            let tag = c.u8()?;
            let activation = Activation::from_tag(tag)
                .ok_or(PolicyFileError::UnknownActivation { layer: i, tag })?;
            let weights = c.f32s(rows * cols)?;
            let bias = c.f32s(rows)?;
            layers.push(Layer {
                rows,
                cols,
                activation,
                weights,
                bias,
            });
            expected = rows;
        }
        if c.pos != bytes.len() {
            return Err(PolicyFileError::TrailingBytes(bytes.len() - c.pos));
        }
        Self::new(n_ues, layout, norm, layers)
    }

    pub fn load(path: &Path) -> Result<Self, PolicyFileError> {
        let bytes = fs::read(path).map_err(|source| PolicyFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyFileError> {
        fs::write(path, self.to_bytes()).map_err(|source| PolicyFileError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
