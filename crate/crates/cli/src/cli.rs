//! Command-line surface and dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use ccpl_core::cross_channel::{nmcc_from_features, nmcc_loss, ChannelFeatures};
use ccpl_core::features::{
    feature_distillation_loss, load_features, save_features, FeatureExtractor, FeatureSet,
    FeatureVector, ToyExtractor,
};
use ccpl_core::fit::{apply_model, fit, AffineOdModel, FitTrace, TrainingPair};
use ccpl_core::fod::{channel_fod, FodChannel};
use ccpl_core::metrics::frechet_distance;
use ccpl_core::perception::dual_perception_loss;
use ccpl_core::stain::{isolate_channel, separate_stains};
use ccpl_core::{CcplConfig, RgbImage, Stain, StainMatrix};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::error::HarnessError;
use crate::imageio::{fod_scale, list_files, read_rgb_png, write_fod_png, write_rgb_png};
use crate::manifest::{match_pairs, PairManifest};
use crate::report::{run_eval, run_report, write_outputs, Selection};
use crate::settings::{load_config, FitArgs, LossArgs};

#[derive(Parser, Debug)]
#[command(name = "ccpl", version, about = "Stain-aware losses and metrics for virtual IHC staining")]
pub struct Cli {
    /// JSON config file; command-line flags override its values
    #[arg(long, global = true, env = "CCPL_CONFIG")]
    pub config: Option<PathBuf>,
    /// JSON file with a "stain_matrix" key (rows H, E, D)
    #[arg(long, global = true)]
    pub stain_matrix: Option<PathBuf>,
    /// Worker threads for batch commands
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for sampling-based tooling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write single-stain H, E and D renderings of an image
    Separate(SeparateArgs),
    /// Write the focal optical density map of one stain channel
    Fod(FodArgs),
    /// Dual-channel perception loss between two images
    DcpLoss(PairArgs),
    /// Feature distillation loss between two images or feature rows
    FdLoss(FdLossArgs),
    /// Cross-channel consistency loss
    Nmcc(NmccArgs),
    /// Extract toy features for one image or a directory
    Features(FeaturesArgs),
    /// PSNR, SSIM and PCC per pair, with optional Fréchet distance
    Eval(EvalArgs),
    /// Fit an affine OD-space stain transfer to paired patches
    Fit(FitCmdArgs),
    /// Every loss and metric per pair
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SeparateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "UPPER")]
pub enum ChannelArg {
    H,
    D,
}

impl From<ChannelArg> for FodChannel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::H => FodChannel::H,
            ChannelArg::D => FodChannel::D,
        }
    }
}

#[derive(Args, Debug)]
pub struct FodArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, ignore_case = true)]
    pub channel: ChannelArg,
    /// 16-bit PNG output; the sidecar goes to the same path plus ".json"
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Args, Debug)]
pub struct PairArgs {
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub real: PathBuf,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Args, Debug)]
pub struct FdLossArgs {
    #[arg(long, required_unless_present = "features_gen")]
    pub gen: Option<PathBuf>,
    #[arg(long, required_unless_present = "features_real")]
    pub real: Option<PathBuf>,
    #[arg(long, requires = "features_real")]
    pub features_gen: Option<PathBuf>,
    #[arg(long, requires = "features_gen")]
    pub features_real: Option<PathBuf>,
    /// Row to read from the feature files; optional when each holds one row
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Args, Debug)]
pub struct NmccArgs {
    #[arg(long, required_unless_present = "features_gen")]
    pub gen: Option<PathBuf>,
    #[arg(long, required_unless_present = "features_real")]
    pub real: Option<PathBuf>,
    /// Feature file with rows "H" and "D" (or "<id>:H" and "<id>:D")
    #[arg(long, requires = "features_real", conflicts_with = "toy_extractor")]
    pub features_gen: Option<PathBuf>,
    #[arg(long, requires = "features_gen", conflicts_with = "toy_extractor")]
    pub features_real: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
    /// Extract channel features with the built-in toy extractor (default)
    #[arg(long)]
    pub toy_extractor: bool,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    #[arg(long, conflicts_with = "input_dir", required_unless_present = "input_dir")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub input_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Describe the isolated H and D renderings instead of the image itself
    #[arg(long)]
    pub stain_channels: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub gen_dir: PathBuf,
    #[arg(long)]
    pub real_dir: PathBuf,
    #[arg(long, requires = "real_features")]
    pub gen_features: Option<PathBuf>,
    #[arg(long, requires = "gen_features")]
    pub real_features: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_json: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitCmdArgs {
    /// Directory holding source/ and target/ images matched by file name
    #[arg(long)]
    pub pairs_dir: PathBuf,
    #[arg(long)]
    pub out_model: PathBuf,
    /// CSV with one row per accepted step
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Starting model (JSON with "A" and "b"); identity when absent
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Write the fitted model's rendering of every source image here
    #[arg(long)]
    pub emit_dir: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub loss: LossArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Group {
    Dual,
    Fd,
    Nmcc,
    Metrics,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub gen_dir: PathBuf,
    #[arg(long)]
    pub real_dir: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_json: PathBuf,
    /// Column groups to leave empty
    #[arg(long, value_enum, value_delimiter = ',')]
    pub skip: Vec<Group>,
    #[command(flatten)]
    pub loss: LossArgs,
}

/// How a run ended when no fatal error occurred.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some pairs failed; their rows carry the errors.
    PairFailures,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::PairFailures => 2,
        }
    }

    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Success
        } else {
            Outcome::PairFailures
        }
    }
}

fn resolve(cli: &Cli, loss: Option<&LossArgs>, fit: Option<&FitArgs>) -> anyhow::Result<CcplConfig> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(p) = &cli.stain_matrix {
        cfg.stain_matrix = StainMatrix::from_json_file(p)
            .with_context(|| format!("loading stain matrix from {}", p.display()))?;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(l) = loss {
        l.apply(&mut cfg);
    }
    if let Some(f) = fit {
        f.apply(&mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(out: &mut dyn Write, v: &Value) -> anyhow::Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Separate(a) => separate(cli, a, out),
        Command::Fod(a) => fod(cli, a, out),
        Command::DcpLoss(a) => dcp_loss(cli, a, out),
        Command::FdLoss(a) => fd_loss(cli, a, out),
        Command::Nmcc(a) => nmcc(cli, a, out),
        Command::Features(a) => features(cli, a, out),
        Command::Eval(a) => eval(cli, a, out),
        Command::Fit(a) => fit_cmd(cli, a, out),
        Command::Report(a) => report(cli, a, out),
    }
}

fn separate(cli: &Cli, a: &SeparateArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, None, None)?;
    let (m, i0) = (&cfg.stain_matrix, cfg.reference_intensity);
    let img = read_rgb_png(&a.input)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;

    let conc = separate_stains(&img, m, i0);
    let n = (conc.values.len() / 3) as f64;
    let mut means = serde_json::Map::new();
    let mut outputs = Vec::new();
    for stain in Stain::ALL {
        let k = stain.index();
        let mean = conc.values.iter().skip(k).step_by(3).sum::<f64>() / n;
        means.insert(stain.short_name().into(), json!(mean));
        let path = a.out_dir.join(format!("{}_{}.png", stem(&a.input), stain.short_name()));
        write_rgb_png(&path, &isolate_channel(&img, stain, m, i0))?;
        outputs.push(path);
    }
    print_json(out, &json!({ "mean_concentration": means, "outputs": outputs }))?;
    Ok(Outcome::Success)
}

fn fod(cli: &Cli, a: &FodArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, Some(&a.loss), None)?;
    let img = read_rgb_png(&a.input)?;
    let params = match FodChannel::from(a.channel) {
        FodChannel::H => cfg.fod_h,
        FodChannel::D => cfg.fod_d,
    };
    let map = channel_fod(&img, &cfg.stain_matrix, &params, cfg.reference_intensity);
    let scale = fod_scale(params.exponent, cfg.reference_intensity);
    let sidecar = write_fod_png(&a.out, &map, scale)?;
    let n = map.values.len() as f64;
    let mean = map.values.iter().sum::<f64>() / n;
    let coverage = map.values.iter().filter(|v| **v > 0.0).count() as f64 / n;
    print_json(
        out,
        &json!({ "sidecar": sidecar, "mean": mean, "coverage": coverage, "out": a.out }),
    )?;
    Ok(Outcome::Success)
}

fn dcp_loss(cli: &Cli, a: &PairArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, Some(&a.loss), None)?;
    let (gen, real) = (read_rgb_png(&a.gen)?, read_rgb_png(&a.real)?);
    let b = dual_perception_loss(
        &gen,
        &real,
        &cfg.dcp,
        &cfg.fod_h,
        &cfg.fod_d,
        &cfg.stain_matrix,
        cfg.reference_intensity,
    )?;
    print_json(out, &serde_json::to_value(b)?)?;
    Ok(Outcome::Success)
}

fn feature_row(set: &FeatureSet, path: &Path, id: &str) -> Result<FeatureVector, HarnessError> {
    set.find(id).ok_or_else(|| HarnessError::MissingFeature {
        path: path.to_path_buf(),
        id: id.to_string(),
    })
}

fn only_or_named(set: &FeatureSet, path: &Path, id: Option<&str>) -> anyhow::Result<FeatureVector> {
    match id {
        Some(id) => Ok(feature_row(set, path, id)?),
        None if set.len() == 1 => Ok(set.vector(0)?),
        None => bail!(
            "{} holds {} rows; pick one with --id",
            path.display(),
            set.len()
        ),
    }
}

fn fd_loss(cli: &Cli, a: &FdLossArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, Some(&a.loss), None)?;
    let (f_g, f_r) = match (&a.features_gen, &a.features_real) {
        (Some(pg), Some(pr)) => (
            only_or_named(&load_features(pg)?, pg, a.id.as_deref())?,
            only_or_named(&load_features(pr)?, pr, a.id.as_deref())?,
        ),
        _ => {
            let (g, r) = (a.gen.as_ref().unwrap(), a.real.as_ref().unwrap());
            (
                ToyExtractor.extract(&read_rgb_png(g)?)?,
                ToyExtractor.extract(&read_rgb_png(r)?)?,
            )
        }
    };
    let b = feature_distillation_loss(&f_g, &f_r, &cfg.fd)?;
    print_json(out, &serde_json::to_value(b)?)?;
    Ok(Outcome::Success)
}

fn channel_rows(path: &Path, id: Option<&str>) -> anyhow::Result<ChannelFeatures> {
    let set = load_features(path)?;
    let name = |c: &str| id.map_or_else(|| c.to_string(), |id| format!("{id}:{c}"));
    Ok(ChannelFeatures {
        h: feature_row(&set, path, &name("H"))?,
        d: feature_row(&set, path, &name("D"))?,
    })
}

fn nmcc(cli: &Cli, a: &NmccArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, Some(&a.loss), None)?;
    let b = match (&a.features_gen, &a.features_real) {
        (Some(pg), Some(pr)) => nmcc_from_features(
            &channel_rows(pg, a.id.as_deref())?,
            &channel_rows(pr, a.id.as_deref())?,
            &cfg.nmcc,
        )?,
        _ => {
            let (g, r) = (a.gen.as_ref().unwrap(), a.real.as_ref().unwrap());
            nmcc_loss(
                &read_rgb_png(g)?,
                &read_rgb_png(r)?,
                &ToyExtractor,
                &cfg.stain_matrix,
                &cfg.nmcc,
                cfg.reference_intensity,
            )?
        }
    };
    print_json(out, &serde_json::to_value(b)?)?;
    Ok(Outcome::Success)
}

fn describe(
    img: &RgbImage,
    id: &str,
    channels: bool,
    cfg: &CcplConfig,
    rows: &mut Vec<(String, FeatureVector)>,
) -> anyhow::Result<()> {
    if channels {
        let c = ChannelFeatures::extract(img, &ToyExtractor, &cfg.stain_matrix, cfg.reference_intensity)?;
        let name = |s: &str| if id.is_empty() { s.to_string() } else { format!("{id}:{s}") };
        rows.push((name("H"), c.h));
        rows.push((name("D"), c.d));
    } else {
        rows.push((id.to_string(), ToyExtractor.extract(img)?));
    }
    Ok(())
}

fn features(cli: &Cli, a: &FeaturesArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, None, None)?;
    let mut rows = Vec::new();
    match (&a.input, &a.input_dir) {
        (Some(path), _) => {
            let id = if a.stain_channels { String::new() } else { stem(path) };
            describe(&read_rgb_png(path)?, &id, a.stain_channels, &cfg, &mut rows)?;
        }
        (None, Some(dir)) => {
            for name in list_files(dir)? {
                let img = read_rgb_png(dir.join(&name))?;
                describe(&img, &name, a.stain_channels, &cfg, &mut rows)?;
            }
            ensure!(!rows.is_empty(), "no images in {}", dir.display());
        }
        (None, None) => unreachable!("clap requires an input"),
    }
    let (ids, vectors): (Vec<String>, Vec<FeatureVector>) = rows.into_iter().unzip();
    let set = FeatureSet::from_vectors(ids, &vectors)?;
    save_features(&set, &a.out)?;
    print_json(
        out,
        &json!({ "count": set.len(), "dim": set.dim(), "out": a.out }),
    )?;
    Ok(Outcome::Success)
}

fn matched(gen: &Path, real: &Path) -> anyhow::Result<PairManifest> {
    let m = match_pairs(gen, real)?;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    Ok(m.manifest)
}

fn eval(cli: &Cli, a: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, None, None)?;
    let manifest = matched(&a.gen_dir, &a.real_dir)?;
    let table = run_eval(&manifest, cfg.workers)?;
    let frechet = match (&a.gen_features, &a.real_features) {
        (Some(g), Some(r)) => Some(frechet_distance(&load_features(g)?, &load_features(r)?)?),
        _ => None,
    };
    let mut summary = table.summary(&cfg);
    summary["frechet"] = json!(frechet);
    write_outputs(&table, &summary, &a.out_csv, &a.out_json)?;
    print_json(
        out,
        &json!({ "pairs": table.rows.len(), "failed": table.failed(), "means": summary["means"], "frechet": frechet }),
    )?;
    Ok(Outcome::from_failures(table.failed()))
}

fn write_trace(path: &Path, trace: &FitTrace) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["iteration", "step", "total", "mse", "dual", "fd", "cross", "ssim"])?;
    for r in &trace.rows {
        let o = &r.objective;
        w.write_record([
            r.iteration.to_string(),
            r.step.to_string(),
            o.total.to_string(),
            o.mse.to_string(),
            o.dual.to_string(),
            o.fd.to_string(),
            o.cross.to_string(),
            o.ssim.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn fit_cmd(cli: &Cli, a: &FitCmdArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, Some(&a.loss), Some(&a.fit))?;
    let manifest = matched(&a.pairs_dir.join("source"), &a.pairs_dir.join("target"))?;
    let pairs = manifest
        .entries()
        .iter()
        .map(|e| -> anyhow::Result<TrainingPair> {
            TrainingPair::new(read_rgb_png(&e.gen)?, read_rgb_png(&e.real)?)
                .with_context(|| format!("pair {}", e.id))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let init = match &a.init {
        Some(p) => serde_json::from_str(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing {}", p.display()))?,
        None => AffineOdModel::identity(),
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let (model, trace) = pool.install(|| fit(&pairs, &init, &cfg))?;

    std::fs::write(&a.out_model, serde_json::to_string_pretty(&model)? + "\n")
        .with_context(|| format!("writing {}", a.out_model.display()))?;
    if let Some(p) = &a.trace {
        write_trace(p, &trace)?;
    }
    if let Some(dir) = &a.emit_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (e, p) in manifest.entries().iter().zip(&pairs) {
            write_rgb_png(dir.join(&e.id), &apply_model(&model, &p.source, cfg.reference_intensity))?;
        }
    }
    print_json(
        out,
        &json!({
            "pairs": pairs.len(),
            "accepted_steps": trace.rows.len() - 1,
            "stop": trace.stop,
            "objective": trace.last(),
            "model": model,
        }),
    )?;
    Ok(Outcome::Success)
}

fn report(cli: &Cli, a: &ReportArgs, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    let cfg = resolve(cli, Some(&a.loss), None)?;
    let manifest = matched(&a.gen_dir, &a.real_dir)?;
    let sel = Selection {
        dual: !a.skip.contains(&Group::Dual),
        fd: !a.skip.contains(&Group::Fd),
        nmcc: !a.skip.contains(&Group::Nmcc),
        metrics: !a.skip.contains(&Group::Metrics),
    };
    let table = run_report(&manifest, &cfg, sel)?;
    let summary = table.summary(&cfg);
    write_outputs(&table, &summary, &a.out_csv, &a.out_json)?;
    print_json(
        out,
        &json!({ "pairs": table.rows.len(), "failed": table.failed(), "means": summary["means"] }),
    )?;
    Ok(Outcome::from_failures(table.failed()))
}
