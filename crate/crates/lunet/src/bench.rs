//! Dataset x method comparison in the layout of the results tables.

use serde::{Deserialize, Serialize};

use crate::baselines::{fuzzy_cmeans_segment, kmeans_segment, threshold_segment, ClusterConfig, LinkNetConfig, ThresholdConfig};
use crate::error::{Error, Result};
use crate::metrics::{binarize, report_csv_row, ClassMode, ConfusionAccumulator, MetricsReport, REPORT_CSV_HEADER};
use crate::model::{Architecture, SegmentationModel};
use crate::trainer::{predict, train, TrainConfig, TrainOutcome, TrainSink};
use crate::unet::UNetConfig;
use crate::volume::{resize_nearest, SliceDataset, SliceImage, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Thresholding,
    KMeans,
    FuzzyC,
    LinkNet,
    UNet,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Thresholding, Method::KMeans, Method::FuzzyC, Method::LinkNet, Method::UNet];

    pub fn label(self) -> &'static str {
        match self {
            Method::Thresholding => "Thresholding",
            Method::KMeans => "K-Means",
            Method::FuzzyC => "Fuzzy C",
            Method::LinkNet => "LinkNet",
            Method::UNet => "U-Net",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Method::Thresholding => "threshold",
            Method::KMeans => "kmeans",
            Method::FuzzyC => "fcm",
            Method::LinkNet => "linknet",
            Method::UNet => "unet",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, Method::LinkNet | Method::UNet)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub train: TrainConfig,
    pub unet: UNetConfig,
    pub linknet: LinkNetConfig,
    pub threshold: ThresholdConfig,
    pub cluster: ClusterConfig,
    pub class_mode: ClassMode,
    /// Network input size; slices are resized to it and predictions resized back.
    pub input_hw: (usize, usize),
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            train: TrainConfig::default(),
            unet: UNetConfig::default(),
            linknet: LinkNetConfig::default(),
            threshold: ThresholdConfig::default(),
            cluster: ClusterConfig::default(),
            class_mode: ClassMode::TwoClass,
            input_hw: (128, 128),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub method: Method,
    pub report: MetricsReport,
}

/// Items scored by the benchmark: the Test split, or every item when the
/// dataset has no Test split.
pub fn eval_indices(data: &SliceDataset) -> Vec<usize> {
    match data.indices(Split::Test) {
        v if v.is_empty() => (0..data.len()).collect(),
        v => v,
    }
}

/// Accumulates predicted binary masks against their truths.
pub fn score_masks(preds: &[SliceImage], truths: &[&SliceImage], mode: ClassMode) -> Result<MetricsReport> {
    if preds.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} truth masks",
            preds.len(),
            truths.len()
        )));
    }
    let mut acc = ConfusionAccumulator::new();
    for (p, t) in preds.iter().zip(truths) {
        if (p.height, p.width) != (t.height, t.width) {
            return Err(Error::ShapeMismatch(format!(
                "prediction {}x{} vs truth {}x{}",
                p.height, p.width, t.height, t.width
            )));
        }
        acc.accumulate(&p.pixels, &t.pixels)?;
    }
    acc.compute(mode)
}

/// Binary mask from one classical method.
pub fn classical_mask(method: Method, img: &SliceImage, cfg: &BenchConfig) -> Result<SliceImage> {
    Ok(match method {
        Method::Thresholding => threshold_segment(img, &cfg.threshold)?.mask,
        Method::KMeans => kmeans_segment(img, &cfg.cluster)?.mask,
        Method::FuzzyC => fuzzy_cmeans_segment(img, &cfg.cluster)?.mask,
        other => return Err(Error::InvalidConfig(format!("{} is not a classical method", other.label()))),
    })
}

/// Predicted binary masks at each item's own resolution. `model` runs on
/// `input_hw` copies of the images.
pub fn network_masks<M: SegmentationModel<f32> + ?Sized>(
    model: &mut M,
    data: &SliceDataset,
    idx: &[usize],
    input_hw: (usize, usize),
    batch_size: usize,
    threshold: f32,
) -> Result<Vec<SliceImage>> {
    let resized = data.resized(input_hw.0, input_hw.1);
    let probs = predict(model, &resized, idx, batch_size)?;
    Ok(idx
        .iter()
        .zip(probs)
        .map(|(&i, p)| {
            let small = resized.items[i].mask.with_pixels(input_hw.0, input_hw.1, binarize(p.data(), threshold));
            let orig = &data.items[i].mask;
            resize_nearest(&small, orig.height, orig.width)
        })
        .collect())
}

pub fn network_architecture(method: Method, cfg: &BenchConfig) -> Result<Architecture> {
    Ok(match method {
        Method::UNet => Architecture::Unet(UNetConfig {
            input_hw: cfg.input_hw,
            ..cfg.unet.clone()
        }),
        Method::LinkNet => Architecture::Linknet(LinkNetConfig {
            input_hw: cfg.input_hw,
            ..cfg.linknet.clone()
        }),
        other => return Err(Error::InvalidConfig(format!("{} is not a network", other.label()))),
    })
}

/// Trains a network for `method` on `data` (at `cfg.input_hw`) and scores it.
pub fn train_and_score(
    method: Method,
    data: &SliceDataset,
    cfg: &BenchConfig,
    sinks: &mut [&mut dyn TrainSink],
) -> Result<(MetricsReport, TrainOutcome)> {
    let mut model = network_architecture(method, cfg)?.build::<f32>()?;
    let resized = data.resized(cfg.input_hw.0, cfg.input_hw.1);
    let outcome = train(&mut model, &resized, &cfg.train, sinks)?;
    let idx = eval_indices(data);
    let preds = network_masks(&mut model, data, &idx, cfg.input_hw, cfg.train.batch_size, cfg.train.threshold)?;
    let truths: Vec<&SliceImage> = idx.iter().map(|&i| &data.items[i].mask).collect();
    Ok((score_masks(&preds, &truths, cfg.class_mode)?, outcome))
}

pub fn score_method(method: Method, data: &SliceDataset, cfg: &BenchConfig) -> Result<MetricsReport> {
    if method.is_network() {
        return Ok(train_and_score(method, data, cfg, &mut [])?.0);
    }
    let idx = eval_indices(data);
    let preds = idx
        .iter()
        .map(|&i| classical_mask(method, &data.items[i].image, cfg))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<&SliceImage> = idx.iter().map(|&i| &data.items[i].mask).collect();
    score_masks(&preds, &truths, cfg.class_mode)
}

/// One row per (dataset, method), datasets in the given order and methods in
/// table order.
pub fn run_benchmark(datasets: &[(String, SliceDataset)], methods: &[Method], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::with_capacity(datasets.len() * methods.len());
    for (name, data) in datasets {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for &m in &methods {
            rows.push(BenchRow {
                dataset: name.clone(),
                method: m,
                report: score_method(m, data, cfg)?,
            });
        }
    }
    Ok(rows)
}

pub fn benchmark_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&report_csv_row(&r.dataset, r.method.label(), &r.report));
        s.push('\n');
    }
    s
}
