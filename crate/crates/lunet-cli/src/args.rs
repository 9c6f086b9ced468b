use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lunet::bench::Method;
use lunet::volume::PlaneLabel;
use lunet::{ClassMode, UpsampleMode};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "lunet", version, about = "Tumor segmentation on planar slices of volumetric scans")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat `key = value` file; its keys become long flags of the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Generate synthetic volumes with ellipsoidal tumors and their masks.
    Synth(SynthArgs),
    /// Cut volumes into per-plane slice datasets.
    Extract(ExtractArgs),
    /// Train a network on a slice dataset.
    Train(TrainArgs),
    /// Predict binary masks with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predicted masks against a dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Compare methods across datasets in one table.
    Benchmark(BenchmarkArgs),
    /// Plot loss and IoU per step from a training log.
    Curves(CurvesArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Benchmark(_) => "benchmark",
            Command::Curves(_) => "curves",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Synth(a) => Some(a.seed),
            Command::Extract(a) => Some(a.seed),
            Command::Train(a) => Some(a.net.seed),
            Command::Benchmark(a) => Some(a.net.seed),
            _ => None,
        }
    }

    pub fn out_dir(&self) -> Option<&PathBuf> {
        match self {
            Command::Synth(a) => Some(&a.out),
            Command::Extract(a) => Some(&a.out),
            Command::Train(a) => Some(&a.out),
            Command::Predict(a) => Some(&a.out),
            Command::Evaluate(a) => Some(&a.out),
            Command::Benchmark(a) => Some(&a.out),
            Command::Curves(a) => Some(&a.out),
            Command::Replay(_) => None,
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Synth(a) => a.out = dir,
            Command::Extract(a) => a.out = dir,
            Command::Train(a) => a.out = dir,
            Command::Predict(a) => a.out = dir,
            Command::Evaluate(a) => a.out = dir,
            Command::Benchmark(a) => a.out = dir,
            Command::Curves(a) => a.out = dir,
            Command::Replay(_) => {}
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneArg {
    Coronal,
    Sagittal,
    Transversal,
    Full,
}

impl PlaneArg {
    pub fn planes(self) -> Vec<PlaneLabel> {
        match self {
            PlaneArg::Coronal => vec![PlaneLabel::Coronal],
            PlaneArg::Sagittal => vec![PlaneLabel::Sagittal],
            PlaneArg::Transversal => vec![PlaneLabel::Transversal],
            PlaneArg::Full => PlaneLabel::ALL.to_vec(),
        }
    }

    pub fn single(self) -> Option<PlaneLabel> {
        match self {
            PlaneArg::Full => None,
            p => Some(p.planes()[0]),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Unet,
    Linknet,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleArg {
    Tconv,
    Unpool,
}

impl From<UpsampleArg> for UpsampleMode {
    fn from(u: UpsampleArg) -> Self {
        match u {
            UpsampleArg::Tconv => UpsampleMode::TransposedConv,
            UpsampleArg::Unpool => UpsampleMode::MaxUnpool,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassModeArg {
    Two,
    Fg,
}

impl From<ClassModeArg> for ClassMode {
    fn from(c: ClassModeArg) -> Self {
        match c {
            ClassModeArg::Two => ClassMode::TwoClass,
            ClassModeArg::Fg => ClassMode::ForegroundOnly,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    /// The Test split, or every item when there is none.
    Test,
    Train,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Native,
    Nifti,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Threshold,
    Kmeans,
    Fcm,
    Linknet,
    Unet,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Threshold => Method::Thresholding,
            MethodArg::Kmeans => Method::KMeans,
            MethodArg::Fcm => Method::FuzzyC,
            MethodArg::Linknet => Method::LinkNet,
            MethodArg::Unet => Method::UNet,
        }
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("{p:?} is not a size")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected D,H,W, got {s:?}"))
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub n_volumes: usize,
    /// Volume size as D,H,W.
    #[arg(long, value_parser = parse_dims, default_value = "64,64,64")]
    pub dims: [usize; 3],
    #[arg(long, default_value_t = 1)]
    pub min_tumors: usize,
    #[arg(long, default_value_t = 3)]
    pub max_tumors: usize,
    /// Smallest tumor semi-axis in voxels.
    #[arg(long, default_value_t = 3.0)]
    pub min_axis: f64,
    #[arg(long, default_value_t = 8.0)]
    pub max_axis: f64,
    #[arg(long, default_value_t = 0.45)]
    pub contrast: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Native)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synth")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ExtractArgs {
    /// Scan volumes (`.nii` or native `.luv`); the file stem is the source id.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub volumes: Vec<PathBuf>,
    /// Ground-truth masks, one per volume and in the same order.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub masks: Vec<PathBuf>,
    /// `full` writes the three planes plus the combined dataset.
    #[arg(long, value_enum, default_value_t = PlaneArg::Full)]
    pub plane: PlaneArg,
    /// Source ids to leave out.
    #[arg(long, value_delimiter = ',')]
    pub exclude_ids: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    /// Skip slices whose mask has no foreground.
    #[arg(long)]
    pub drop_empty: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "slices")]
    pub out: PathBuf,
}

/// Network and optimizer settings shared by `train` and `benchmark`.
#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct NetArgs {
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    /// Epochs without validation-loss improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 16)]
    pub base_filters: usize,
    #[arg(long, default_value_t = 16)]
    pub filter_step: usize,
    /// U-Net encoder levels.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = UpsampleArg::Tconv)]
    pub upsample: UpsampleArg,
    /// Side of the square network input; slices are resized to it.
    #[arg(long, default_value_t = 128)]
    pub input_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
    #[arg(long, value_enum, default_value_t = ClassModeArg::Two)]
    pub class_mode: ClassModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Unet)]
    pub model: ModelArg,
    /// Train on one plane of a combined dataset.
    #[arg(long, value_enum, default_value_t = PlaneArg::Full)]
    pub plane: PlaneArg,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub manifest: Option<PathBuf>,
    /// A single PGM image instead of a dataset.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Must match the size the checkpoint was trained at.
    #[arg(long, default_value_t = 128)]
    pub input_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Also write images with the predicted boundary burned in.
    #[arg(long)]
    pub overlay: bool,
    #[arg(long, default_value = "pred")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Truth datasets; each is paired with the `--pred-dir` at the same position.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub pred_dir: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = ClassModeArg::Two)]
    pub class_mode: ClassModeArg,
    /// Method label written in the table.
    #[arg(long, default_value = "U-Net")]
    pub method: String,
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    /// One dataset per manifest, named after its directory.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1..,
          default_values_t = [MethodArg::Threshold, MethodArg::Kmeans, MethodArg::Fcm, MethodArg::Linknet, MethodArg::Unet])]
    pub methods: Vec<MethodArg>,
    /// Clusters for k-means and fuzzy c-means.
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value = "bench")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CurvesArgs {
    /// Step log written by `train`.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 480)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    #[arg(long, default_value = "curves")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
