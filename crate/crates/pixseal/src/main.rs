//! Command-line tool for localized invisible image watermarking: key
//! management, embedding, extraction, detection, decoding, localization,
//! perceptual maps, mask generation, augmentation, threshold calibration,
//! and batch evaluation.
//!
//! Diagnostics go to stderr; data goes to files or to stdout as JSON. Exit
//! codes: 0 success, 1 usage error, 2 data error, 3 I/O error. Subcommands
//! that read an extraction (`detect`, `decode`, `decode-multi`, `locate`)
//! accept either an image or a saved `.wamd` tensor.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use pixseal::augment::{self, AugmentKind, AugmentSpec};
use pixseal::carrier::WatermarkKey;
use pixseal::cluster::DbscanParams;
use pixseal::codec::{
    embed, embed_highres, extract, EmbedConfig, ExtractConfig, ExtractorOutput,
};
use pixseal::config::ConfigFile;
use pixseal::corpus::{self, CorpusPreset};
use pixseal::detect::{
    calibrate_tau, decode, decode_multi, detect, detection_mask, PixelAssignment,
    DEFAULT_TAU_IMAGE,
};
use pixseal::error::{Error, Result};
use pixseal::harness;
use pixseal::jnd::{jnd_map, JndParams};
use pixseal::maskgen::{protocol_squares, sample_mask_of_kind, MaskGenConfig, MaskKind};
use pixseal::metrics::{psnr, EvalReport};
use pixseal::raster::{load_image, load_mask, save_image, save_level_gray, save_mask, ImageBuffer, MaskMap, Message};

#[derive(Parser)]
#[command(name = "pixseal", version, about = "Localized invisible image watermarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Arguments shared by subcommands that resolve settings from an optional
/// configuration file; explicit flags always win over file values.
#[derive(Args)]
struct ConfigArg {
    /// Plain-text key=value configuration file.
    #[arg(long, global = false)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ConfigFile> {
        match &self.config {
            Some(path) => ConfigFile::load(path),
            None => Ok(ConfigFile::empty("")),
        }
    }
}

#[derive(Args)]
struct ExtractionArgs {
    /// Watermark key file.
    #[arg(long)]
    key: Option<PathBuf>,
    /// Correlation window side in pixels.
    #[arg(long)]
    window: Option<usize>,
    /// Processing size WIDTHxHEIGHT: resample to this size for extraction.
    #[arg(long, value_name = "WxH")]
    proc: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random watermark key file.
    GenKey {
        /// Output key file.
        #[arg(long)]
        out: PathBuf,
        /// Message length in bits.
        #[arg(long, default_value_t = 32)]
        n_bits: usize,
        /// Carrier tile side in pixels.
        #[arg(long, default_value_t = 8)]
        tile: usize,
        /// Derive the key deterministically from this seed instead of OS entropy.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Embed a message into an image, optionally only inside a mask.
    Embed {
        /// Input image.
        #[arg(long, value_name = "IMAGE")]
        input: PathBuf,
        /// Output image.
        #[arg(long)]
        out: PathBuf,
        /// Watermark key file.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Message as hex (big-endian, bit 0 is the most significant bit).
        #[arg(long)]
        msg: String,
        /// Embedding mask image; the whole frame when omitted.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Strength multiplier on the perceptual heatmap.
        #[arg(long)]
        alpha: Option<f64>,
        /// Generate the modulation at WIDTHxHEIGHT and upsample (for large images).
        #[arg(long, value_name = "WxH")]
        proc: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run the extractor and save its output planes as a .wamd tensor.
    Extract {
        /// Input image.
        #[arg(long, value_name = "IMAGE")]
        input: PathBuf,
        /// Output tensor file (.wamd).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        extraction: ExtractionArgs,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Image-level watermark detection; prints JSON.
    Detect {
        /// Input image or .wamd tensor.
        #[arg(long, value_name = "IMAGE|WAMD")]
        input: PathBuf,
        /// Pixel detection threshold.
        #[arg(long)]
        tau: Option<f64>,
        /// Watermarked-pixel fraction above which the image is flagged.
        #[arg(long)]
        tau_image: Option<f64>,
        #[command(flatten)]
        extraction: ExtractionArgs,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Decode the single most likely message; prints hex.
    Decode {
        /// Input image or .wamd tensor.
        #[arg(long, value_name = "IMAGE|WAMD")]
        input: PathBuf,
        /// Pixel detection threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        extraction: ExtractionArgs,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Separate and decode multiple messages by clustering; prints JSON.
    DecodeMulti {
        /// Input image or .wamd tensor.
        #[arg(long, value_name = "IMAGE|WAMD")]
        input: PathBuf,
        /// Pixel detection threshold.
        #[arg(long, default_value_t = harness::PROTOCOL_TAU)]
        tau: f64,
        /// Maximum Hamming distance for cluster neighborhood.
        #[arg(long, default_value_t = 1)]
        epsilon: usize,
        /// Minimum neighborhood weight for a core point.
        #[arg(long, default_value_t = 1000)]
        min_samples: usize,
        /// Report medoid words alongside centroids.
        #[arg(long)]
        medoid: bool,
        /// Write the per-pixel cluster assignment as a gray image
        /// (cluster index, 254 = not watermarked, 255 = noise).
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[command(flatten)]
        extraction: ExtractionArgs,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Predict the watermarked region as a binary mask image.
    Locate {
        /// Input image or .wamd tensor.
        #[arg(long, value_name = "IMAGE|WAMD")]
        input: PathBuf,
        /// Output mask image.
        #[arg(long)]
        out: PathBuf,
        /// Pixel detection threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[command(flatten)]
        extraction: ExtractionArgs,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Write the perceptual heatmap of an image as a gray image in 8-bit units.
    JndMap {
        /// Input image.
        #[arg(long, value_name = "IMAGE")]
        input: PathBuf,
        /// Output gray image.
        #[arg(long)]
        out: PathBuf,
        /// Channel plane to write: 0 red, 1 green, 2 blue.
        #[arg(long, default_value_t = 1)]
        channel: usize,
        /// Overlapping-effect exponent of the heatmap.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Generate masks: random boxes, brush strokes, full frame, or the
    /// five-square protocol layout.
    GenMask {
        /// Mask width in pixels.
        #[arg(long, required_unless_present = "like")]
        width: Option<usize>,
        /// Mask height in pixels.
        #[arg(long, required_unless_present = "like")]
        height: Option<usize>,
        /// Take dimensions from this image instead of --width/--height.
        #[arg(long)]
        like: Option<PathBuf>,
        /// Output mask image; protocol masks get an index suffix.
        #[arg(long)]
        out: PathBuf,
        /// One of box, full, irregular, external, protocol.
        #[arg(long, default_value = "box")]
        kind: String,
        /// Number of protocol squares (1 to 5).
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// External mask file for --kind external.
        #[arg(long)]
        external: Option<PathBuf>,
        /// Invert the sampled mask.
        #[arg(long)]
        invert: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply one transformation or a chain to an image (and its mask).
    Augment {
        /// Input image.
        #[arg(long, value_name = "IMAGE")]
        input: PathBuf,
        /// Output image.
        #[arg(long)]
        out: PathBuf,
        /// Single transformation kind (see --chain for the list).
        #[arg(long, conflicts_with = "chain")]
        op: Option<String>,
        /// Parameter of --op.
        #[arg(long, default_value_t = 0.0)]
        param: f64,
        /// Comma-separated chain like "jpeg:80,brightness:1.5,crop:0.5".
        #[arg(long)]
        chain: Option<String>,
        /// Mask to transform alongside the image.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Where to write the co-transformed mask.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Background image for splice_collage.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Calibrate the pixel threshold on a directory of unwatermarked images
    /// and record it in the configuration file.
    Calibrate {
        /// Directory of negative (unwatermarked) images.
        #[arg(long)]
        dir: PathBuf,
        /// Target per-pixel false-positive rate.
        #[arg(long, default_value_t = 1e-3)]
        target_fpr: f64,
        /// Configuration file to write tau into.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        extraction: ExtractionArgs,
    },
    /// Run an evaluation scenario over a corpus and write a report.
    Eval {
        /// Scenario: localization, multiwm, robustness, or dbscan-grid.
        #[arg(long)]
        scenario: String,
        /// Directory of corpus images; a synthetic corpus is generated when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Number of synthetic corpus images.
        #[arg(long, default_value_t = 20)]
        synthetic: usize,
        /// Synthetic image side in pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Synthetic preset: photographic or synthetic.
        #[arg(long, default_value = "photographic")]
        preset: String,
        /// Report JSON output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Mask area fractions for the localization scenario.
        #[arg(long, default_value = "0.1,0.25,0.5,1.0")]
        fractions: String,
        /// Add crop-and-restore rows to the localization scenario.
        #[arg(long)]
        with_crop: bool,
        /// Number of messages for multiwm and dbscan-grid.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Augmentation chain applied before extraction (multiwm scenario).
        #[arg(long)]
        chain: Option<String>,
        /// Message for the robustness scenario; random when omitted.
        #[arg(long)]
        msg: Option<String>,
        /// Pixel threshold for robustness; calibrated on the corpus when omitted.
        #[arg(long)]
        tau: Option<f64>,
        /// Image-flagging threshold for robustness.
        #[arg(long, default_value_t = DEFAULT_TAU_IMAGE)]
        tau_image: f64,
        /// Epsilon values for dbscan-grid.
        #[arg(long, default_value = "0,1,2,3")]
        epsilons: String,
        /// min_samples values for dbscan-grid.
        #[arg(long, default_value = "250,500,1000,2000")]
        min_samples: String,
        /// Worker threads; defaults to the number of logical cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Watermark key file; a fixed test key is derived from --seed when omitted.
        #[arg(long)]
        key: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout and usage errors to stderr.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Parses "WIDTHxHEIGHT".
fn parse_size(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    let err = || Error::BadParam(format!("expected WIDTHxHEIGHT, got {s:?}"));
    if parts.len() != 2 {
        return Err(err());
    }
    let w: usize = parts[0].parse().map_err(|_| err())?;
    let h: usize = parts[1].parse().map_err(|_| err())?;
    if w == 0 || h == 0 {
        return Err(Error::BadParam("processing size must be nonzero".into()));
    }
    Ok((w, h))
}

/// Parses one "kind" or "kind:param" chain element.
fn parse_chain_element(s: &str, seed: u64) -> Result<AugmentSpec> {
    let (kind_str, param_str) = match s.split_once(':') {
        Some((k, p)) => (k.trim(), Some(p.trim())),
        None => (s.trim(), None),
    };
    let kind: AugmentKind = kind_str.parse()?;
    let param = match param_str {
        Some(p) => p
            .parse::<f64>()
            .map_err(|_| Error::BadParam(format!("bad parameter {p:?} for {kind_str}")))?,
        None => match kind {
            AugmentKind::Identity | AugmentKind::Hflip => 0.0,
            other => {
                return Err(Error::BadParam(format!(
                    "{other} needs a parameter, e.g. {other}:VALUE"
                )))
            }
        },
    };
    let spec = AugmentSpec { kind, param, seed };
    spec.validate()?;
    Ok(spec)
}

/// Parses "kind:param,kind:param,..." into a chain.
fn parse_chain(s: &str, seed: u64) -> Result<Vec<AugmentSpec>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_chain_element(p, seed))
        .collect()
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::BadParam(format!("bad {what} value {p:?}")))
        })
        .collect()
}

fn require_key(key: &Option<PathBuf>, cfg: &ConfigFile) -> Result<WatermarkKey> {
    let path = match key {
        Some(p) => p.clone(),
        None => match cfg.get("key_file") {
            Some(p) => PathBuf::from(p),
            None => {
                return Err(Error::BadParam(
                    "no key: pass --key or set key_file in the config".into(),
                ))
            }
        },
    };
    WatermarkKey::load(path)
}

fn extract_config(args: &ExtractionArgs, cfg: &ConfigFile) -> Result<ExtractConfig> {
    let mut xcfg = ExtractConfig::default();
    if let Some(w) = args.window.or(cfg.get_usize("window")?) {
        xcfg.window = w;
    }
    if let Some(s) = &args.proc {
        xcfg.proc_size = Some(parse_size(s)?);
    } else if let (Some(w), Some(h)) = (cfg.get_usize("proc_width")?, cfg.get_usize("proc_height")?) {
        xcfg.proc_size = Some((w, h));
    }
    Ok(xcfg)
}

/// Loads an extractor output: directly from a .wamd tensor, or by running
/// the extractor on an image.
fn load_output(input: &Path, args: &ExtractionArgs, cfg: &ConfigFile) -> Result<ExtractorOutput> {
    let is_tensor = input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wamd"));
    if is_tensor {
        ExtractorOutput::load(input)
    } else {
        let key = require_key(&args.key, cfg)?;
        let xcfg = extract_config(args, cfg)?;
        extract(&load_image(input)?, &key, &xcfg)
    }
}

/// Fallback pixel threshold when neither --tau nor a config value is given.
/// Conservative on purpose: clean-image detection outputs concentrate around
/// 0.5 with a tail that stays below roughly 0.92 at the default window, so
/// 0.95 keeps uncalibrated false positives rare. Calibrate for guarantees.
const UNCALIBRATED_TAU: f64 = 0.95;

fn resolve_tau(flag: Option<f64>, cfg: &ConfigFile) -> Result<f64> {
    Ok(flag.or(cfg.get_f64("tau")?).unwrap_or(UNCALIBRATED_TAU))
}

fn write_report(report: &EvalReport, out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    if let Some(path) = csv {
        std::fs::write(path, report.to_csv()).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let json = report.to_json();
    match out {
        Some(path) => std::fs::write(path, json).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn eval_corpus(
    corpus: &Option<PathBuf>,
    synthetic: usize,
    size: usize,
    preset: &str,
    seed: u64,
) -> Result<Vec<ImageBuffer>> {
    match corpus {
        Some(dir) => Ok(corpus::load_dir(dir)?.into_iter().map(|(_, img)| img).collect()),
        None => {
            let preset = match preset {
                "photographic" => CorpusPreset::PhotographicStyle,
                "synthetic" => CorpusPreset::Synthetic,
                other => {
                    return Err(Error::BadParam(format!(
                        "unknown preset {other:?}: use photographic or synthetic"
                    )))
                }
            };
            if synthetic == 0 {
                return Err(Error::BadParam("synthetic corpus size must be nonzero".into()));
            }
            Ok(corpus::generate(seed ^ 0xC0FFEE, synthetic, size, size, preset))
        }
    }
}

/// The default robustness benchmark: valuemetric edits, geometric edits,
/// and one combined chain.
fn default_robustness_chains(seed: u64) -> Vec<Vec<AugmentSpec>> {
    let single = |kind: AugmentKind, param: f64| -> Vec<AugmentSpec> {
        vec![AugmentSpec { kind, param, seed }]
    };
    vec![
        single(AugmentKind::Identity, 0.0),
        single(AugmentKind::Brightness, 1.5),
        single(AugmentKind::Contrast, 1.5),
        single(AugmentKind::Saturation, 1.5),
        single(AugmentKind::Hue, 0.1),
        single(AugmentKind::GaussianBlur, 3.0),
        single(AugmentKind::MedianFilter, 3.0),
        single(AugmentKind::Jpeg, 80.0),
        single(AugmentKind::Hflip, 0.0),
        single(AugmentKind::Crop, 0.71),
        single(AugmentKind::Resize, 0.71),
        single(AugmentKind::Rotate, 5.0),
        single(AugmentKind::Perspective, 0.3),
        vec![
            AugmentSpec { kind: AugmentKind::Jpeg, param: 80.0, seed },
            AugmentSpec { kind: AugmentKind::Brightness, param: 1.5, seed },
            AugmentSpec { kind: AugmentKind::Crop, param: 0.5, seed },
        ],
    ]
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenKey { out, n_bits, tile, seed } => {
            let key = match seed {
                Some(s) => WatermarkKey::generate(&mut ChaCha12Rng::seed_from_u64(s), n_bits, tile)?,
                None => WatermarkKey::generate(&mut rand::rng(), n_bits, tile)?,
            };
            key.save(&out)?;
            println!(
                "{}",
                serde_json::json!({"key": out, "n_bits": n_bits, "tile": tile})
            );
            Ok(())
        }

        Command::Embed { input, out, key, msg, mask, alpha, proc, config } => {
            let cfg = config.load()?;
            let key = require_key(&key, &cfg)?;
            let msg = Message::from_hex(&msg, key.n_bits())?;
            let img = load_image(&input)?;
            let mask = match mask {
                Some(path) => load_mask(&path)?,
                None => MaskMap::ones(img.width(), img.height()),
            };
            let mut ecfg = EmbedConfig::default();
            if let Some(a) = alpha.or(cfg.get_f64("alpha")?) {
                ecfg.alpha = a;
            }
            let wm = match proc {
                Some(s) => {
                    let (pw, ph) = parse_size(&s)?;
                    embed_highres(&img, &mask, &key, &msg, &ecfg, pw, ph)?
                }
                None => embed(&img, &mask, &key, &msg, &ecfg)?,
            };
            save_image(&wm, &out)?;
            println!("{}", serde_json::json!({"out": out, "psnr": psnr(&img, &wm)?}));
            Ok(())
        }

        Command::Extract { input, out, extraction, config } => {
            let cfg = config.load()?;
            let key = require_key(&extraction.key, &cfg)?;
            let xcfg = extract_config(&extraction, &cfg)?;
            let output = extract(&load_image(&input)?, &key, &xcfg)?;
            output.save(&out)?;
            println!(
                "{}",
                serde_json::json!({
                    "out": out,
                    "n_bits": output.n_bits(),
                    "width": output.width(),
                    "height": output.height(),
                })
            );
            Ok(())
        }

        Command::Detect { input, tau, tau_image, extraction, config } => {
            let cfg = config.load()?;
            let output = load_output(&input, &extraction, &cfg)?;
            let tau = resolve_tau(tau, &cfg)?;
            let tau_image = tau_image
                .or(cfg.get_f64("tau_image")?)
                .unwrap_or(DEFAULT_TAU_IMAGE);
            let d = detect(&output, tau, tau_image);
            println!(
                "{}",
                serde_json::json!({"s_det": d.score, "flagged": d.flagged})
            );
            Ok(())
        }

        Command::Decode { input, tau, extraction, config } => {
            let cfg = config.load()?;
            let output = load_output(&input, &extraction, &cfg)?;
            let msg = decode(&output, resolve_tau(tau, &cfg)?)?;
            println!("{}", msg.to_hex());
            Ok(())
        }

        Command::DecodeMulti {
            input,
            tau,
            epsilon,
            min_samples,
            medoid,
            assignment,
            extraction,
            config,
        } => {
            let cfg = config.load()?;
            let output = load_output(&input, &extraction, &cfg)?;
            let params = DbscanParams {
                epsilon,
                min_samples,
                compute_medoid: medoid,
            };
            let md = decode_multi(&output, tau, &params)?;
            if let Some(path) = assignment {
                if md.clusters.len() > 254 {
                    return Err(Error::BadParam(format!(
                        "assignment map cannot encode {} clusters (254 maximum)",
                        md.clusters.len()
                    )));
                }
                let gray: Vec<f64> = md
                    .assignment
                    .iter()
                    .map(|a| match a {
                        PixelAssignment::Cluster(i) => *i as f64,
                        PixelAssignment::Unmarked => 254.0,
                        PixelAssignment::Noise => 255.0,
                    })
                    .collect();
                save_level_gray(&gray, output.width(), output.height(), &path)?;
            }
            let rows: Vec<serde_json::Value> = md
                .clusters
                .iter()
                .map(|c| {
                    let mut row = serde_json::json!({
                        "msg": c.centroid.to_hex(),
                        "pixels": c.pixel_count,
                    });
                    if let Some(m) = &c.medoid {
                        row["medoid"] = serde_json::Value::String(m.to_hex());
                    }
                    row
                })
                .collect();
            println!("{}", serde_json::Value::Array(rows));
            Ok(())
        }

        Command::Locate { input, out, tau, extraction, config } => {
            let cfg = config.load()?;
            let output = load_output(&input, &extraction, &cfg)?;
            let mask = detection_mask(&output, resolve_tau(tau, &cfg)?);
            save_mask(&mask, &out)?;
            println!(
                "{}",
                serde_json::json!({"out": out, "pixels": mask.count_ones()})
            );
            Ok(())
        }

        Command::JndMap { input, out, channel, gamma, config } => {
            let cfg = config.load()?;
            if channel > 2 {
                return Err(Error::BadParam(format!(
                    "channel must be 0, 1, or 2, got {channel}"
                )));
            }
            let mut params = JndParams::default();
            if let Some(g) = gamma.or(cfg.get_f64("gamma")?) {
                params.gamma = g;
            }
            let img = load_image(&input)?;
            let map = jnd_map(&img, &params);
            save_level_gray(map.plane(channel), map.width(), map.height(), &out)?;
            let n = (map.width() * map.height()) as f64;
            let mean = map.plane(channel).iter().sum::<f64>() / n;
            println!("{}", serde_json::json!({"out": out, "mean_levels": mean}));
            Ok(())
        }

        Command::GenMask {
            width,
            height,
            like,
            out,
            kind,
            count,
            external,
            invert,
            seed,
        } => {
            let (w, h) = match like {
                Some(path) => {
                    let img = load_image(&path)?;
                    (img.width(), img.height())
                }
                None => (width.unwrap(), height.unwrap()),
            };
            if kind == "protocol" {
                let masks = protocol_squares(h, w, count)?;
                let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("mask");
                let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("png");
                let mut paths = Vec::new();
                for (i, m) in masks.iter().enumerate() {
                    let path = out.with_file_name(format!("{stem}_{i}.{ext}"));
                    let m = if invert { m.invert() } else { m.clone() };
                    save_mask(&m, &path)?;
                    paths.push(path);
                }
                println!("{}", serde_json::json!({"out": paths}));
                return Ok(());
            }
            let mask_kind = match kind.as_str() {
                "box" => MaskKind::Box,
                "full" => MaskKind::Full,
                "irregular" => MaskKind::Irregular,
                "external" => MaskKind::External,
                other => {
                    return Err(Error::BadParam(format!(
                        "unknown mask kind {other:?}: use box, full, irregular, external, or protocol"
                    )))
                }
            };
            let gen_cfg = MaskGenConfig {
                seed,
                external: external.into_iter().collect(),
                ..MaskGenConfig::default()
            }
            .validated()?;
            let mut rng = gen_cfg.rng();
            let mask = sample_mask_of_kind(h, w, mask_kind, &gen_cfg, &mut rng)?;
            let mask = if invert { mask.invert() } else { mask };
            save_mask(&mask, &out)?;
            println!(
                "{}",
                serde_json::json!({"out": out, "pixels": mask.count_ones()})
            );
            Ok(())
        }

        Command::Augment {
            input,
            out,
            op,
            param,
            chain,
            mask,
            mask_out,
            background,
            seed,
        } => {
            let img = load_image(&input)?;
            let mask_img = mask.map(|p| load_mask(&p)).transpose()?;

            // Splicing takes a second image (the unwatermarked original for
            // splice_proportion, an unrelated one for splice_collage) and
            // produces its own mask instead of transforming an input mask.
            if let Some(op_name) = op.as_deref() {
                if op_name == "splice_collage" || op_name == "splice_proportion" {
                    let bg = match background {
                        Some(path) => load_image(&path)?,
                        None => {
                            return Err(Error::BadParam(format!(
                                "{op_name} needs --background"
                            )))
                        }
                    };
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let (spliced, splice_mask) = augment::splice(&img, &bg, param, &mut rng)?;
                    save_image(&spliced, &out)?;
                    if let Some(path) = mask_out {
                        save_mask(&splice_mask, &path)?;
                    }
                    println!(
                        "{}",
                        serde_json::json!({"out": out, "pixels": splice_mask.count_ones()})
                    );
                    return Ok(());
                }
            }

            let specs = match (op, chain) {
                (Some(op), None) => {
                    let kind: AugmentKind = op.parse()?;
                    let spec = AugmentSpec { kind, param, seed };
                    spec.validate()?;
                    vec![spec]
                }
                (None, Some(chain)) => parse_chain(&chain, seed)?,
                (None, None) => return Err(Error::BadParam("pass --op or --chain".into())),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let (result, result_mask) = augment::apply_chain(&img, mask_img.as_ref(), &specs)?;
            save_image(&result, &out)?;
            if let (Some(path), Some(m)) = (&mask_out, &result_mask) {
                save_mask(m, path)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "out": out,
                    "width": result.width(),
                    "height": result.height(),
                })
            );
            Ok(())
        }

        Command::Calibrate { dir, target_fpr, config, extraction } => {
            let images = corpus::load_dir(&dir)?;
            let mut cfg = if config.exists() {
                ConfigFile::load(&config)?
            } else {
                ConfigFile::empty(&config)
            };
            let key = require_key(&extraction.key, &cfg)?;
            let xcfg = extract_config(&extraction, &cfg)?;
            let pools: Vec<Vec<f64>> = images
                .par_iter()
                .map(|(_, img)| extract(img, &key, &xcfg).map(|o| o.det().to_vec()))
                .collect::<Result<_>>()?;
            let pool: Vec<f64> = pools.into_iter().flatten().collect();
            let tau = calibrate_tau(&pool, target_fpr)?;
            cfg.set("tau", tau);
            cfg.save()?;
            println!(
                "{}",
                serde_json::json!({
                    "tau": tau,
                    "pixels": pool.len(),
                    "target_fpr": target_fpr,
                    "config": config,
                })
            );
            Ok(())
        }

        Command::Eval {
            scenario,
            corpus,
            synthetic,
            size,
            preset,
            out,
            csv,
            fractions,
            with_crop,
            k,
            chain,
            msg,
            tau,
            tau_image,
            epsilons,
            min_samples,
            jobs,
            seed,
            key,
        } => {
            if let Some(n) = jobs {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let images = eval_corpus(&corpus, synthetic, size, &preset, seed)?;
            let key = match key {
                Some(path) => WatermarkKey::load(path)?,
                None => WatermarkKey::generate(&mut ChaCha12Rng::seed_from_u64(seed), 32, 8)?,
            };
            let report = match scenario.as_str() {
                "localization" => {
                    let fractions: Vec<f64> = parse_list(&fractions, "fraction")?;
                    harness::run_localization(&images, &key, &fractions, with_crop, seed)?
                }
                "multiwm" => {
                    let chain = match chain {
                        Some(s) => parse_chain(&s, seed)?,
                        None => Vec::new(),
                    };
                    harness::run_multiwm(&images, &key, k, &chain, seed)?
                }
                "robustness" => {
                    let half = images.len() / 2;
                    if half == 0 {
                        return Err(Error::BadParam(
                            "robustness needs at least two corpus images".into(),
                        ));
                    }
                    let (positives, negatives) = images.split_at(half);
                    let msg = match msg {
                        Some(hex) => Message::from_hex(&hex, key.n_bits())?,
                        None => Message::random(&mut ChaCha12Rng::seed_from_u64(seed), key.n_bits()),
                    };
                    let tau = match tau {
                        Some(t) => t,
                        None => {
                            let pools: Vec<Vec<f64>> = images
                                .par_iter()
                                .map(|img| {
                                    extract(img, &key, &ExtractConfig::default())
                                        .map(|o| o.det().to_vec())
                                })
                                .collect::<Result<_>>()?;
                            let pool: Vec<f64> = pools.into_iter().flatten().collect();
                            calibrate_tau(&pool, 1e-3)?
                        }
                    };
                    harness::run_robustness(
                        positives,
                        negatives,
                        &key,
                        &msg,
                        &default_robustness_chains(seed),
                        tau,
                        tau_image,
                    )?
                }
                "dbscan-grid" => {
                    let eps: Vec<usize> = parse_list(&epsilons, "epsilon")?;
                    let mins: Vec<usize> = parse_list(&min_samples, "min_samples")?;
                    let chain = match chain {
                        Some(s) => parse_chain(&s, seed)?,
                        None => Vec::new(),
                    };
                    harness::run_dbscan_grid(&images, &key, k, &chain, &eps, &mins, seed)?
                }
                other => {
                    return Err(Error::BadParam(format!(
                        "unknown scenario {other:?}: use localization, multiwm, robustness, or dbscan-grid"
                    )))
                }
            };
            write_report(&report, out.as_deref(), csv.as_deref())
        }
    }
}
