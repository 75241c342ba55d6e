use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::{classify_map_pixel, regularize, ModelKind, PipelineConfig};
use crate::baselines::{train_ann, train_rf, train_svm, PixelClassifier, PixelModel, PixelRow};
use crate::error::{Error, Result};
use crate::metrics::{confusion, MetricsReport};
use crate::model_io::SavedModel;
use crate::nn::{predict_patch, CnnModel};
use crate::raster::RasterStack;
use crate::sampling::{extract_patch, PointSample};
use crate::spatial::{modal_class, LabelMap};
use crate::{NUM_CLASSES, PATCH_RADIUS};

/// How a baseline's test sample is read off its classified map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Readout {
    /// The label at the sample's center pixel.
    CenterPixel,
    /// The most frequent label in the sample's 11x11 window.
    PatchVote,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::CenterPixel => "center",
            Readout::PatchVote => "patch-vote",
        })
    }
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Readout::CenterPixel),
            "patch-vote" => Ok(Readout::PatchVote),
            other => Err(Error::invalid(format!(
                "unknown readout `{other}` (center or patch-vote)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolOptions {
    pub mv_kernel: usize,
    pub readout: Readout,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            mv_kernel: 11,
            readout: Readout::CenterPixel,
        }
    }
}

/// Test-set metrics of one model. For baselines `metrics` is measured on
/// the majority-vote map and `raw` on the unregularized map.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub model: String,
    pub metrics: MetricsReport,
    pub raw: Option<MetricsReport>,
}

fn require_samples(test: &[PointSample]) -> Result<()> {
    if test.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    Ok(())
}

/// Classifies each test patch directly.
pub fn evaluate_cnn(model: &CnnModel<f32>, stack: &RasterStack, test: &[PointSample]) -> Result<MetricsReport> {
    require_samples(test)?;
    let predicted: Vec<u8> = test
        .par_iter()
        .map(|s| predict_patch(model, &extract_patch(stack, s)?).map(|(c, _)| c))
        .collect::<Result<_>>()?;
    let truth: Vec<u8> = test.iter().map(|s| s.class_id).collect();
    MetricsReport::from_confusion(&confusion(&predicted, &truth)?)
}

fn read_samples(map: &LabelMap, test: &[PointSample], readout: Readout) -> Result<Vec<u8>> {
    test.iter()
        .map(|s| {
            s.validate(map.width(), map.height())?;
            Ok(match readout {
                Readout::CenterPixel => map.get(s.row, s.col),
                Readout::PatchVote => {
                    let mut counts = [0u32; NUM_CLASSES];
                    for r in s.row - PATCH_RADIUS..=s.row + PATCH_RADIUS {
                        for &l in &map.row(r)[s.col - PATCH_RADIUS..=s.col + PATCH_RADIUS] {
                            counts[l as usize] += 1;
                        }
                    }
                    modal_class(&counts)
                }
            })
        })
        .collect()
}

/// Classifies the whole raster pixel by pixel, regularizes the map by
/// majority vote and reads each test sample from both maps.
pub fn evaluate_pixel<M: PixelClassifier + ?Sized>(
    model: &M,
    stack: &RasterStack,
    test: &[PointSample],
    options: &ProtocolOptions,
) -> Result<(MetricsReport, MetricsReport)> {
    require_samples(test)?;
    let raw_map = classify_map_pixel(model, stack)?;
    let mv_map = regularize(&raw_map, options.mv_kernel)?;
    let truth: Vec<u8> = test.iter().map(|s| s.class_id).collect();
    let score = |map: &LabelMap| -> Result<MetricsReport> {
        let predicted = read_samples(map, test, options.readout)?;
        MetricsReport::from_confusion(&confusion(&predicted, &truth)?)
    };
    Ok((score(&mv_map)?, score(&raw_map)?))
}

/// Test metrics following each model family's protocol.
pub fn evaluate_protocol(
    model: &SavedModel,
    stack: &RasterStack,
    test: &[PointSample],
    options: &ProtocolOptions,
) -> Result<ProtocolReport> {
    match model {
        SavedModel::Cnn(m) => Ok(ProtocolReport {
            model: "cnn".into(),
            metrics: evaluate_cnn(m, stack, test)?,
            raw: None,
        }),
        SavedModel::Pixel(p) => {
            let (metrics, raw) = evaluate_pixel(p, stack, test, options)?;
            Ok(ProtocolReport {
                model: p.kind().into(),
                metrics,
                raw: Some(raw),
            })
        }
    }
}

/// Trains the baseline named by `kind` on pixel rows.
pub fn train_baseline(kind: ModelKind, rows: &[PixelRow], config: &PipelineConfig) -> Result<PixelModel> {
    Ok(match kind {
        ModelKind::Ann => PixelModel::Ann(train_ann(rows, &config.ann_config())?),
        ModelKind::Rf => PixelModel::Forest(train_rf(rows, &config.forest_config())?),
        ModelKind::Svm => PixelModel::Svm(train_svm(rows, &config.svm_config())?),
        ModelKind::Cnn => return Err(Error::invalid("the CNN is not a pixel baseline")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::LinearSvmOvr;

    /// Two-class raster: band 0 is 1 on the left half and 0 on the right.
    fn halves(w: usize, h: usize) -> (RasterStack, Vec<PointSample>) {
        let mut data = vec![0.2f32; w * h * 10];
        for r in 0..h {
            for c in 0..w / 2 {
                data[r * w + c] = 1.0;
            }
        }
        let stack = RasterStack::new(w, h, 10, data).unwrap();
        let mut samples = Vec::new();
        for r in (5..h - 5).step_by(4) {
            samples.push(PointSample::new(r, 6, 0));
            samples.push(PointSample::new(r, w - 7, 1));
        }
        (stack, samples)
    }

    fn halves_svm() -> LinearSvmOvr {
        let mut svm = LinearSvmOvr::zeros();
        svm.weights[0][0] = 1.0;
        svm.bias[0] = -0.5;
        svm
    }

    #[test]
    fn perfect_predictions_score_one() {
        let (stack, test) = halves(40, 30);
        let model = SavedModel::Pixel(PixelModel::Svm(halves_svm()));
        let report = evaluate_protocol(&model, &stack, &test, &ProtocolOptions::default()).unwrap();
        assert_eq!(report.model, "svm");
        assert_eq!(report.metrics.oa, 1.0);
        assert_eq!(report.metrics.kappa, 1.0);
        assert_eq!(report.raw.unwrap().oa, 1.0);
    }

    #[test]
    fn mv_removes_isolated_errors() {
        let (mut stack, test) = halves(40, 30);
        // Flip band 0 at each class-0 sample center: raw reads the wrong
        // class there, the 11x11 vote restores it.
        let mut data = stack.data().to_vec();
        for s in test.iter().filter(|s| s.class_id == 0) {
            data[s.row * 40 + s.col] = 0.0;
        }
        stack = RasterStack::new(40, 30, 10, data).unwrap();
        let (mv, raw) = evaluate_pixel(&halves_svm(), &stack, &test, &ProtocolOptions::default()).unwrap();
        assert_eq!(raw.oa, 0.5);
        assert_eq!(mv.oa, 1.0);
        assert!(mv.oa >= raw.oa);

        let vote = ProtocolOptions {
            mv_kernel: 1,
            readout: Readout::PatchVote,
        };
        let (v, r) = evaluate_pixel(&halves_svm(), &stack, &test, &vote).unwrap();
        assert_eq!(v.oa, 1.0);
        assert_eq!(r.oa, 1.0);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let (stack, _) = halves(20, 20);
        assert!(evaluate_pixel(&halves_svm(), &stack, &[], &ProtocolOptions::default()).is_err());
        let cnn = crate::nn::build_model(3, 0).unwrap();
        assert!(evaluate_cnn(&cnn, &stack, &[]).is_err());
    }

    #[test]
    fn readout_names() {
        for r in [Readout::CenterPixel, Readout::PatchVote] {
            assert_eq!(r.to_string().parse::<Readout>().unwrap(), r);
        }
    }
}
