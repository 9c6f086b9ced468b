//! Browser bindings: synthetic phantom slices, the classical baselines with
//! their scores, and a small U-Net trained a minibatch at a time.

use lunet::baselines::{fuzzy_cmeans_segment, kmeans_segment, threshold_segment, ClusterConfig, ThresholdConfig};
use lunet::metrics::binarize;
use lunet::synth::ellipse_slices;
use lunet::trainer::{bce_loss, AdamHyper, AdamState};
use lunet::volume::{SliceDataset, SliceImage, Split};
use lunet::{ClassMode, ConfusionAccumulator, MetricsReport, Mode, Result, SegmentationModel, Tensor, UNet, UNetConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: lunet::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One phantom slice and its tumor mask, both `size x size`.
#[wasm_bindgen]
pub struct Phantom {
    image: SliceImage,
    truth: SliceImage,
}

impl Phantom {
    pub fn generate(size: usize, contrast: f64, noise: f64, seed: u32) -> Result<Phantom> {
        let pair = ellipse_slices(1, size, size, contrast, noise, seed as u64)?.remove(0);
        Ok(Phantom {
            image: pair.image,
            truth: pair.mask,
        })
    }
}

#[wasm_bindgen]
impl Phantom {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, contrast: f64, noise: f64, seed: u32) -> std::result::Result<Phantom, JsError> {
        Phantom::generate(size, contrast, noise, seed).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.image.width
    }

    /// Intensities in `[0, 1]`, row-major.
    pub fn image(&self) -> Vec<f32> {
        self.image.pixels.clone()
    }

    pub fn truth(&self) -> Vec<f32> {
        self.truth.pixels.clone()
    }

    /// Segments with `threshold`, `kmeans` or `fcm`.
    pub fn segment(&self, method: &str, clusters: usize) -> std::result::Result<Segmentation, JsError> {
        self.segment_with(method, clusters).map_err(js)
    }
}

impl Phantom {
    pub fn segment_with(&self, method: &str, clusters: usize) -> Result<Segmentation> {
        let cluster = ClusterConfig {
            k: clusters,
            ..ClusterConfig::default()
        };
        let mask = match method {
            "threshold" => threshold_segment(&self.image, &ThresholdConfig::default())?.mask,
            "kmeans" => kmeans_segment(&self.image, &cluster)?.mask,
            "fcm" => fuzzy_cmeans_segment(&self.image, &cluster)?.mask,
            other => return Err(lunet::Error::InvalidConfig(format!("unknown method {other:?}"))),
        };
        Segmentation::score(mask.pixels, &self.truth.pixels)
    }
}

/// A binary mask with its scores against the phantom's truth.
#[wasm_bindgen]
pub struct Segmentation {
    mask: Vec<f32>,
    report: MetricsReport,
}

impl Segmentation {
    fn score(mask: Vec<f32>, truth: &[f32]) -> Result<Segmentation> {
        let mut acc = ConfusionAccumulator::new();
        acc.accumulate(&mask, truth)?;
        Ok(Segmentation {
            report: acc.compute(ClassMode::TwoClass)?,
            mask,
        })
    }
}

#[wasm_bindgen]
impl Segmentation {
    pub fn mask(&self) -> Vec<f32> {
        self.mask.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn pixel_acc(&self) -> f64 {
        self.report.pixel_acc
    }

    #[wasm_bindgen(getter)]
    pub fn mean_acc(&self) -> f64 {
        self.report.mean_acc
    }

    #[wasm_bindgen(getter)]
    pub fn mean_iou(&self) -> f64 {
        self.report.mean_iou
    }

    #[wasm_bindgen(getter)]
    pub fn fwiou(&self) -> f64 {
        self.report.fwiou
    }
}

/// U-Net trained on generated phantoms, one Adam step per call to `step`.
#[wasm_bindgen]
pub struct Trainer {
    model: UNet<f32>,
    adam: AdamState,
    data: SliceDataset,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    batch_size: usize,
    learning_rate: f64,
    steps: usize,
}

impl Trainer {
    pub fn build(n_slices: usize, size: usize, base_filters: usize, seed: u32) -> Result<Trainer> {
        let items = ellipse_slices(n_slices, size, size, 0.45, 0.05, seed as u64)?;
        let model = UNet::build(UNetConfig {
            base_filters,
            filter_step: base_filters,
            depth: 2,
            input_hw: (size, size),
            seed: seed as u64,
            ..UNetConfig::default()
        })?;
        Ok(Trainer {
            model,
            adam: AdamState::new(AdamHyper::default()),
            data: SliceDataset {
                split: vec![Split::Train; items.len()],
                items,
                seed: seed as u64,
            },
            order: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed as u64),
            batch_size: 4,
            learning_rate: 1e-3,
            steps: 0,
        })
    }

    pub fn train_step(&mut self) -> Result<f64> {
        if self.cursor >= self.order.len() {
            self.order = self.data.indices(Split::Train);
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let (x, y) = self.data.batch(&self.order[self.cursor..end])?;
        self.cursor = end;
        self.model.zero_grad();
        let p = self.model.forward(&x, Mode::Train)?;
        let (loss, grad) = bce_loss(&p, &y)?;
        self.model.backward(&grad)?;
        self.adam.step(&mut self.model.params_mut(), self.learning_rate)?;
        self.steps += 1;
        Ok(loss)
    }

    pub fn probabilities(&mut self, phantom: &Phantom) -> Result<Vec<f32>> {
        let img = &phantom.image;
        let x = Tensor::new(&[1, 1, img.height, img.width], img.pixels.clone())?;
        Ok(self.model.forward(&x, Mode::Eval)?.data().to_vec())
    }

    pub fn segment_phantom(&mut self, phantom: &Phantom) -> Result<Segmentation> {
        let p = self.probabilities(phantom)?;
        Segmentation::score(binarize(&p, 0.5), &phantom.truth.pixels)
    }
}

#[wasm_bindgen]
impl Trainer {
    #[wasm_bindgen(constructor)]
    pub fn new(n_slices: usize, size: usize, base_filters: usize, seed: u32) -> std::result::Result<Trainer, JsError> {
        Trainer::build(n_slices, size, base_filters, seed).map_err(js)
    }

    #[wasm_bindgen(setter)]
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One minibatch update; returns its loss.
    pub fn step(&mut self) -> std::result::Result<f64, JsError> {
        self.train_step().map_err(js)
    }

    /// Thresholded prediction for `phantom`, scored against its truth.
    pub fn predict(&mut self, phantom: &Phantom) -> std::result::Result<Segmentation, JsError> {
        self.segment_phantom(phantom).map_err(js)
    }
}
