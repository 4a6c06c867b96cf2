use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specsense::frcnn::Family;
use specsense::synth::SnrSpec;

#[derive(Debug, Parser)]
#[command(
    name = "specsense",
    version,
    about = "Spectrum sensing on 1D FFT frames"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (`<out>.idx` + `<out>.f32`).
    Synth(SynthArgs),
    /// Train the detector or the modulation classifier.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Score a method on one dataset or an SNR sweep and write a CSV report.
    Eval(EvalArgs),
    /// Compare per-frame inference time of the detectors.
    Bench(BenchArgs),
    /// Print how many samples and how much air time one input needs.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Records per output file.
    #[arg(long)]
    pub n: usize,
    /// `V` (fixed), `LO:HI` (uniform per record) or `START:STEP:END` (one file per value).
    #[arg(long, allow_hyphen_values = true)]
    pub snr: SnrSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; sweeps append `_snr<value>`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also store the time-domain samples (needed to train or run the classifier).
    #[arg(long)]
    pub with_baseband: bool,
    #[arg(long, default_value_t = specsense::FFT_SIZE)]
    pub fft_size: usize,
    #[arg(long, default_value_t = specsense::SAMPLE_RATE_HZ)]
    pub sample_rate: f64,
}

#[derive(Debug, Subcommand)]
pub enum TrainCommand {
    /// Alternating two-step training of the 1D Faster R-CNN detector.
    Frcnn(TrainFrcnnArgs),
    /// Train the modulation classifier on clips cut from a baseband dataset.
    Amc(TrainAmcArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlternationArg {
    PerSample,
    PerEpoch,
}

#[derive(Debug, Args)]
pub struct TrainFrcnnArgs {
    /// Training dataset prefix.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Frames per epoch, cycling through the reshuffled dataset.
    #[arg(long, default_value_t = 10_000)]
    pub epoch_len: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "vgg")]
    pub family: Family,
    #[arg(long, default_value_t = 16)]
    pub stride: usize,
    /// Narrow proposal (128) and classifier (2048) layers.
    #[arg(long)]
    pub downscaled: bool,
    #[arg(long, value_enum, default_value_t = AlternationArg::PerSample)]
    pub alternation: AlternationArg,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainAmcArgs {
    /// Dataset prefix; records must carry baseband samples.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of clips held out for per-epoch validation accuracy.
    #[arg(long, default_value_t = 0.0625)]
    pub val_fraction: f64,
    /// Per-epoch history CSV; defaults to `<out>.history.csv`.
    #[arg(long)]
    pub history_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Energy,
    Frcnn,
    #[value(name = "frcnn+amc")]
    FrcnnAmc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Energy => "energy",
            Method::Frcnn => "frcnn",
            Method::FrcnnAmc => "frcnn+amc",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Dataset prefix. With `--snr`, the prefix of a sweep written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// SNR values to read, as `V` or `START:STEP:END`.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<SnrSpec>,
    /// Detector checkpoint (frcnn methods).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Classifier checkpoint (frcnn+amc).
    #[arg(long)]
    pub amc: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub p_min: f64,
    #[arg(long, default_value_t = specsense::metrics::DEFAULT_IOU_MIN)]
    pub iou_min: f64,
    /// Count a detection only when its class matches the truth's.
    #[arg(long)]
    pub classful: bool,
    /// Add the mean per-frame inference time as a column.
    #[arg(long)]
    pub with_timing: bool,
    /// Worker threads for frame fan-out.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Report CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the precision/recall points.
    #[arg(long)]
    pub pr_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Frames timed per method (taken from the start of the dataset).
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    /// Timing passes; more than one adds a standard deviation.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, default_value_t = specsense::SAMPLE_RATE_HZ)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = specsense::FFT_SIZE)]
    pub fft_size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
