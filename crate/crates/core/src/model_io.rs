//! Versioned binary model files.
//!
//! Layout: the 8-byte magic `LCZPIPE\0`, a kind byte (1 CNN, 2 ANN,
//! 3 forest, 4 SVM), a little-endian `u32` format version, then the
//! kind-specific body. All integers are `u32` and all weights `f32`,
//! little-endian, in parameter order:
//!
//! * CNN: `k`, then `(k, c_in, c_out)` for both convolutions and
//!   `(n_in, n_out)` for both dense layers, the two dropout rates as `f64`,
//!   then conv1 kernel and bias, conv2 kernel and bias, dense1 weights and
//!   bias, dense2 weights and bias.
//! * ANN: `(n_in, n_out)` of the three layers, the dropout rate as `f64`,
//!   then weights and bias of each layer.
//! * Forest: tree count; per tree its node count and nodes. A node is a tag
//!   byte, then either `feature: u8, threshold: f32, left: u32, right: u32`
//!   (tag 0) or 14 `u32` class counts (tag 1).
//! * SVM: 14 x 10 weights row by row, then 14 biases.
//!
//! Dense weights are stored input-major (`w[i * n_out + o]`) as in memory.

use std::fs;
use std::path::Path;

use crate::baselines::{AnnModel, DecisionTree, Forest, LinearSvmOvr, PixelModel, TreeNode};
use crate::error::{Error, Result};
use crate::nn::{CnnModel, ConvLayer, DenseLayer};
use crate::{NUM_BANDS, NUM_CLASSES};

pub const MAGIC: &[u8; 8] = b"LCZPIPE\0";
pub const FORMAT_VERSION: u32 = 1;

const KIND_CNN: u8 = 1;
const KIND_ANN: u8 = 2;
const KIND_FOREST: u8 = 3;
const KIND_SVM: u8 = 4;

/// Any model the pipeline can train.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Cnn(CnnModel<f32>),
    Pixel(PixelModel),
}

impl SavedModel {
    /// `cnn`, `ann`, `rf` or `svm`.
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Cnn(_) => "cnn",
            SavedModel::Pixel(p) => p.kind(),
        }
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0
            .extend_from_slice(&u32::try_from(v).expect("size fits u32").to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::BadModel("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::BadModel("size overflow".into()))?,
        )?;
        let vs: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if vs.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadModel("non-finite weight".into()));
        }
        Ok(vs)
    }
    fn dense(&mut self) -> Result<DenseLayer<f32>> {
        let (n_in, n_out) = (self.u32()?, self.u32()?);
        Ok(DenseLayer {
            n_in,
            n_out,
            weights: Vec::new(),
            bias: Vec::new(),
        })
    }
    fn fill_dense(&mut self, d: &mut DenseLayer<f32>) -> Result<()> {
        d.weights = self.f32s(d.n_in * d.n_out)?;
        d.bias = self.f32s(d.n_out)?;
        Ok(())
    }
}

pub fn to_bytes(model: &SavedModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    match model {
        SavedModel::Cnn(m) => {
            w.u8(KIND_CNN);
            w.u32(FORMAT_VERSION as usize);
            w.u32(m.kernel_size());
            for c in [&m.conv1, &m.conv2] {
                w.u32(c.k);
                w.u32(c.c_in);
                w.u32(c.c_out);
            }
            for d in [&m.dense1, &m.dense2] {
                w.u32(d.n_in);
                w.u32(d.n_out);
            }
            w.f64(m.dropout_pool);
            w.f64(m.dropout_dense);
            m.params().iter().for_each(|p| w.f32s(p));
        }
        SavedModel::Pixel(PixelModel::Ann(m)) => {
            w.u8(KIND_ANN);
            w.u32(FORMAT_VERSION as usize);
            for d in [&m.hidden1, &m.hidden2, &m.output] {
                w.u32(d.n_in);
                w.u32(d.n_out);
            }
            w.f64(m.dropout);
            for d in [&m.hidden1, &m.hidden2, &m.output] {
                w.f32s(&d.weights);
                w.f32s(&d.bias);
            }
        }
        SavedModel::Pixel(PixelModel::Forest(f)) => {
            w.u8(KIND_FOREST);
            w.u32(FORMAT_VERSION as usize);
            w.u32(f.trees().len());
            for t in f.trees() {
                w.u32(t.nodes().len());
                for node in t.nodes() {
                    match *node {
                        TreeNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(0);
                            w.u8(feature);
                            w.f32s(&[threshold]);
                            w.u32(left as usize);
                            w.u32(right as usize);
                        }
                        TreeNode::Leaf { counts } => {
                            w.u8(1);
                            counts.iter().for_each(|&c| w.u32(c as usize));
                        }
                    }
                }
            }
        }
        SavedModel::Pixel(PixelModel::Svm(s)) => {
            w.u8(KIND_SVM);
            w.u32(FORMAT_VERSION as usize);
            s.weights.iter().for_each(|r| w.f32s(r));
            w.f32s(&s.bias);
        }
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::BadModel("not a model file (bad magic)".into()));
    }
    let kind = r.u8()?;
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::BadModel(format!("unsupported model version {version}")));
    }
    let model = match kind {
        KIND_CNN => {
            let k = r.u32()?;
            let mut conv = || -> Result<ConvLayer<f32>> {
                let (ck, c_in, c_out) = (r.u32()?, r.u32()?, r.u32()?);
                if ck != k || c_in > 4096 || c_out > 4096 || ck > 11 {
                    return Err(Error::BadModel("inconsistent convolution header".into()));
                }
                Ok(ConvLayer::zeros(ck, c_in, c_out))
            };
            let (mut c1, mut c2) = (conv()?, conv()?);
            let (mut d1, mut d2) = (r.dense()?, r.dense()?);
            let (p_pool, p_dense) = (r.f64()?, r.f64()?);
            for c in [&mut c1, &mut c2] {
                c.kernel = r.f32s(c.kernel.len())?;
                c.bias = r.f32s(c.c_out)?;
            }
            r.fill_dense(&mut d1)?;
            r.fill_dense(&mut d2)?;
            SavedModel::Cnn(CnnModel::from_layers(c1, c2, d1, d2, p_pool, p_dense)?)
        }
        KIND_ANN => {
            let mut layers = [r.dense()?, r.dense()?, r.dense()?];
            let dropout = r.f64()?;
            for d in &mut layers {
                r.fill_dense(d)?;
            }
            let [h1, h2, out] = layers;
            SavedModel::Pixel(PixelModel::Ann(AnnModel::from_layers(h1, h2, out, dropout)?))
        }
        KIND_FOREST => {
            let n_trees = r.u32()?;
            let mut trees = Vec::with_capacity(n_trees.min(1024));
            for _ in 0..n_trees {
                let n_nodes = r.u32()?;
                let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => TreeNode::Split {
                            feature: r.u8()?,
                            threshold: r.f32()?,
                            left: r.u32()? as u32,
                            right: r.u32()? as u32,
                        },
                        1 => {
                            let mut counts = [0u32; NUM_CLASSES];
                            for c in &mut counts {
                                *c = r.u32()? as u32;
                            }
                            TreeNode::Leaf { counts }
                        }
                        t => return Err(Error::BadModel(format!("unknown node tag {t}"))),
                    });
                }
                trees.push(DecisionTree::from_nodes(nodes)?);
            }
            SavedModel::Pixel(PixelModel::Forest(Forest::from_trees(trees)?))
        }
        KIND_SVM => {
            let mut s = LinearSvmOvr::zeros();
            for row in &mut s.weights {
                row.copy_from_slice(&r.f32s(NUM_BANDS)?);
            }
            s.bias.copy_from_slice(&r.f32s(NUM_CLASSES)?);
            SavedModel::Pixel(PixelModel::Svm(s))
        }
        other => return Err(Error::BadModel(format!("unknown model kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::BadModel("trailing bytes after model".into()));
    }
    Ok(model)
}

pub fn save_model(model: &SavedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{train_rf, ForestConfig, PixelRow};
    use crate::nn::build_model;

    fn roundtrip(m: SavedModel) {
        let bytes = to_bytes(&m);
        assert_eq!(&bytes[..8], MAGIC);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn cnn_roundtrip_and_size() {
        let m = build_model(3, 4).unwrap();
        let bytes = to_bytes(&SavedModel::Cnn(m.clone()));
        // header + k + 2x3 + 2x2 dims + 2 f64 rates + weights
        assert_eq!(bytes.len(), 8 + 1 + 4 + 4 + 24 + 16 + 16 + 4 * m.param_count());
        assert_eq!(bytes[8], 1);
        roundtrip(SavedModel::Cnn(m));
        roundtrip(SavedModel::Cnn(build_model(5, 1).unwrap()));
    }

    #[test]
    fn baseline_roundtrips() {
        let mut ann = AnnModel::zeros();
        ann.output.bias[3] = 1.5;
        roundtrip(SavedModel::Pixel(PixelModel::Ann(ann)));

        let mut svm = LinearSvmOvr::zeros();
        svm.weights[13][9] = -0.25;
        svm.bias[0] = 2.0;
        roundtrip(SavedModel::Pixel(PixelModel::Svm(svm)));

        let rows: Vec<PixelRow> = (0..60)
            .map(|i| PixelRow {
                features: [i as f32 / 60.0; 10],
                label: (i % 3) as u8,
            })
            .collect();
        let forest = train_rf(&rows, &ForestConfig { trees: 3, seed: 1 }).unwrap();
        roundtrip(SavedModel::Pixel(PixelModel::Forest(forest)));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = to_bytes(&SavedModel::Pixel(PixelModel::Svm(LinearSvmOvr::zeros())));
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(from_bytes(&magic).is_err());
        let mut version = bytes.clone();
        version[9] = 2;
        assert!(from_bytes(&version).is_err());
        let mut kind = bytes;
        kind[8] = 9;
        assert!(from_bytes(&kind).is_err());
        assert!(from_bytes(b"").is_err());
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let m = SavedModel::Cnn(build_model(3, 0).unwrap());
        save_model(&m, &p).unwrap();
        assert_eq!(load_model(&p).unwrap().kind(), "cnn");
        assert!(matches!(load_model(dir.path().join("none.bin")), Err(Error::Io { .. })));
    }
}
