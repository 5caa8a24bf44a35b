use std::fmt;

use crate::error::{Error, Result};
use crate::fnv1a64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Valid, stride-1 convolution with `filters` square kernels of side `size`.
    Conv {
        filters: usize,
        size: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    Fc {
        outputs: usize,
    },
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Fc { .. })
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Conv { filters, size } => write!(f, "conv:{filters}x{size}"),
            LayerKind::Relu => f.write_str("relu"),
            LayerKind::MaxPool2 => f.write_str("pool2"),
            LayerKind::Flatten => f.write_str("flatten"),
            LayerKind::Fc { outputs } => write!(f, "fc:{outputs}"),
        }
    }
}

/// Ordered layer list plus the `[C, H, W]` input shape. Softmax is implied
/// after the last layer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    input: [usize; 3],
    layers: Vec<LayerKind>,
}

pub const NUM_CLASSES: usize = 2;

impl Default for LayerSpec {
    fn default() -> Self {
        Self::lenet5(500)
    }
}

impl LayerSpec {
    /// conv(20, 5×5) → relu → pool → conv(50, 5×5) → relu → pool → flatten →
    /// fc(hidden) → relu → fc(2) on a 1×28×28 input.
    pub fn lenet5(hidden: usize) -> Self {
        use LayerKind::*;
        Self {
            input: [1, 28, 28],
            layers: vec![
                Conv { filters: 20, size: 5 },
                Relu,
                MaxPool2,
                Conv { filters: 50, size: 5 },
                Relu,
                MaxPool2,
                Flatten,
                Fc { outputs: hidden },
                Relu,
                Fc { outputs: NUM_CLASSES },
            ],
        }
    }

    pub fn new(input: [usize; 3], layers: Vec<LayerKind>) -> Result<Self> {
        let spec = Self { input, layers };
        spec.shapes()?;
        Ok(spec)
    }

    pub fn input(&self) -> [usize; 3] {
        self.input
    }

    pub fn layers(&self) -> &[LayerKind] {
        &self.layers
    }

    /// Output shape of every layer, validating that consecutive layers compose
    /// and that the final width is the class count.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.contains(&0) {
            return Err(Error::InvalidArgument(format!("input shape {:?}", self.input)));
        }
        let mut cur = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |why: String| Error::InvalidArgument(format!("layer {i} ({layer}): {why}"));
            cur = match (*layer, cur.as_slice()) {
                (LayerKind::Conv { filters, size }, &[_, h, w]) => {
                    if filters == 0 || size == 0 || h < size || w < size {
                        return Err(bad(format!("cannot apply to {h}x{w}")));
                    }
                    vec![filters, h - size + 1, w - size + 1]
                }
                (LayerKind::MaxPool2, &[c, h, w]) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(bad(format!("odd spatial size {h}x{w}")));
                    }
                    vec![c, h / 2, w / 2]
                }
                (LayerKind::Relu, s) => s.to_vec(),
                (LayerKind::Flatten, s) => vec![s.iter().product()],
                (LayerKind::Fc { outputs }, &[_]) if outputs > 0 => vec![outputs],
                (_, s) => return Err(bad(format!("incompatible input shape {s:?}"))),
            };
            out.push(cur.clone());
        }
        if cur != [NUM_CLASSES] {
            return Err(Error::InvalidArgument(format!(
                "final layer must output {NUM_CLASSES} classes, got {cur:?}"
            )));
        }
        Ok(out)
    }

    /// Canonical text form; the fingerprint hashes exactly these bytes.
    pub fn serialize(&self) -> String {
        let [c, h, w] = self.input;
        let mut s = format!("input={c}x{h}x{w}");
        for l in &self.layers {
            s.push(' ');
            s.push_str(&l.to_string());
        }
        s
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.serialize().as_bytes())
    }
}
