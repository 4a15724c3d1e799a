use std::fs;
use std::path::{Path, PathBuf};

use innmf::experiments::{normalized_matrix_kl, write_table};
use innmf::factorize::{
    innmf_fit, kl_pointwise, nmf_multiplicative, refit_activations, save_loss_curve, ActivationKind, Architecture,
    FitOptions, InnmfModel, Optimizer, TrainConfig, KL_FLOOR,
};
use innmf::inr::{load_model, save_model, DEFAULT_ENCODING_FREQS, DEFAULT_HIDDEN, DEFAULT_OMEGA0};
use innmf::separate::{bss_metrics, run_separation, write_metrics_csv, MetricsRow, SeparationJob};
use innmf::tfpoints::{load_points, save_points, TFPointSet};
use innmf::transforms::{stft, AudioBuffer, TransformSpec};
use innmf::{Error, Result};

use crate::config::ConfigFile;
use crate::{Cli, Command, TrainArgs};

const CONFIG_KEYS: &[&str] = &[
    "learning-rate",
    "epochs",
    "batch-size",
    "optimizer",
    "momentum",
    "kl-floor",
    "activations",
    "spectral-freqs",
    "activation-freqs",
    "hidden",
];

struct Ctx<'a> {
    cli: &'a Cli,
    config: ConfigFile,
}

impl Ctx<'_> {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out_dir.join(name)
    }

    fn create_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.cli.out_dir).map_err(|e| Error::Io { path: self.cli.out_dir.clone(), source: e })
    }

    fn training(&self, args: &TrainArgs, default_activations: ActivationKind) -> Result<(TrainConfig, FitOptions)> {
        let c = &self.config;
        let base = TrainConfig::default();
        let optimizer = match c.resolve(args.optimizer.clone(), "optimizer", "momentum".to_string())?.as_str() {
            "sgd" => Optimizer::Sgd,
            "momentum" => Optimizer::Momentum { beta: c.resolve(args.momentum, "momentum", 0.9)? },
            "adam" => Optimizer::ADAM,
            other => return Err(Error::InvalidArgument(format!("unknown optimizer `{other}`"))),
        };
        let config = TrainConfig {
            learning_rate: c.resolve(args.learning_rate, "learning-rate", base.learning_rate)?,
            epochs: c.resolve(args.epochs, "epochs", base.epochs)?,
            batch_size: c.resolve(args.batch_size, "batch-size", base.batch_size)?,
            seed: self.cli.seed,
            kl_floor: c.resolve(args.kl_floor, "kl-floor", base.kl_floor)?,
            optimizer,
        };
        config.validate()?;
        let default_kind = match default_activations {
            ActivationKind::Functions => "functions",
            ActivationKind::Table => "table",
        };
        let activations = match c.resolve(args.activations.clone(), "activations", default_kind.to_string())?.as_str() {
            "functions" => ActivationKind::Functions,
            "table" => ActivationKind::Table,
            other => return Err(Error::InvalidArgument(format!("unknown activation kind `{other}`"))),
        };
        let hidden_text = c.resolve(
            args.hidden.clone(),
            "hidden",
            DEFAULT_HIDDEN.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        )?;
        let hidden = hidden_text
            .split(',')
            .map(|h| h.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidArgument(format!("bad hidden sizes `{hidden_text}`")))?;
        let arch = |freqs| Architecture { encoding_freqs: freqs, hidden: hidden.clone(), omega0: DEFAULT_OMEGA0 };
        let options = FitOptions {
            activations,
            spectral_arch: arch(c.resolve(args.spectral_freqs, "spectral-freqs", DEFAULT_ENCODING_FREQS)?),
            activation_arch: arch(c.resolve(args.activation_freqs, "activation-freqs", 6)?),
        };
        Ok((config, options))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let unknown = config.unknown_keys(CONFIG_KEYS);
    if !unknown.is_empty() {
        return Err(Error::InvalidArgument(format!("unknown config keys: {}", unknown.join(", "))));
    }
    let ctx = Ctx { cli, config };
    match &cli.command {
        Command::Transform { input, spec, output } => transform(&ctx, input, spec, output),
        Command::Fit { points, k, nyquist, train } => fit(&ctx, points, *k, *nyquist, train),
        Command::Refit { points, model, freeze_spectral, train } => refit(&ctx, points, model, *freeze_spectral, train),
        Command::Baseline { input, k, iterations, window, hop } => {
            baseline(&ctx, input, *k, *iterations, *window, *hop)
        }
        Command::Separate { mixture, dict1, dict2, window, hop, ref1, ref2, train } => {
            separate(&ctx, mixture, [dict1, dict2], *window, *hop, ref1.as_deref().zip(ref2.as_deref()), train)
        }
        Command::Eval { estimate, reference, interference } => eval(estimate, reference, interference),
        Command::Render { points, model, t_range, f_range, resolution, output } => {
            render(&ctx, points.as_deref(), model.as_deref(), t_range, f_range, resolution, output)
        }
    }
}

fn transform(ctx: &Ctx, input: &Path, spec: &str, output: &str) -> Result<()> {
    let spec: TransformSpec = spec.parse()?;
    let audio = AudioBuffer::read_wav(input)?;
    let points = spec.points(&audio)?;
    ctx.create_out_dir()?;
    save_points(&points, ctx.out(output))?;
    ctx.say(format!("wrote {} points ({})", points.len(), points.source_tag));
    Ok(())
}

fn fit(ctx: &Ctx, points: &Path, k: usize, nyquist: Option<f64>, train: &TrainArgs) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let (config, options) = ctx.training(train, ActivationKind::Functions)?;
    let pts = load_points(points)?;
    let nyquist = match nyquist {
        Some(n) => n,
        None => pts.iter().map(|p| p.f).fold(0.0, f64::max),
    };
    if !(nyquist > 0.0 && nyquist.is_finite()) {
        return Err(Error::InvalidArgument("frequency scale must be positive; pass --nyquist".into()));
    }
    ctx.say(format!("fitting K={k} to {} points for {} epochs", pts.len(), config.epochs));
    let (model, report) = innmf_fit(&pts, k, nyquist, &config, &options)?;
    ctx.create_out_dir()?;
    save_model(&model.to_file()?, ctx.out("model.json"))?;
    save_loss_curve(&report.loss_curve, ctx.out("loss_curve.csv"))?;
    ctx.say(format!("final mean KL {}", report.final_loss));
    Ok(())
}

fn refit(ctx: &Ctx, points: &Path, model: &Path, freeze: bool, train: &TrainArgs) -> Result<()> {
    if !freeze {
        return Err(Error::InvalidArgument("only activation refits are supported; pass --freeze-spectral".into()));
    }
    let (config, options) = ctx.training(train, ActivationKind::Functions)?;
    let pts = load_points(points)?;
    let dict = InnmfModel::from_file(load_model(model)?)?.dictionary()?;
    let (refit, report) = refit_activations(&pts, &dict, &config, &options)?;
    ctx.create_out_dir()?;
    save_model(&refit.to_file()?, ctx.out("refit_model.json"))?;
    save_loss_curve(&report.loss_curve, ctx.out("loss_curve.csv"))?;
    ctx.say(format!("final mean KL {}", report.final_loss));
    Ok(())
}

/// Magnitudes on a complete regular grid: `(freqs, times, bins x frames)`.
fn grid_from_points(points: &TFPointSet) -> Result<(Vec<f64>, Vec<f64>, ndarray::Array2<f64>)> {
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let freqs = sorted(points.iter().map(|p| p.f).collect());
    let times = sorted(points.iter().map(|p| p.t).collect());
    if freqs.len() * times.len() != points.len() {
        return Err(Error::InvalidArgument(format!(
            "{} points do not form a complete {}x{} grid",
            points.len(),
            freqs.len(),
            times.len()
        )));
    }
    let mut v = ndarray::Array2::from_elem((freqs.len(), times.len()), f64::NAN);
    for p in points.iter() {
        let i = freqs.binary_search_by(|x| x.total_cmp(&p.f)).expect("present");
        let j = times.binary_search_by(|x| x.total_cmp(&p.t)).expect("present");
        if !v[(i, j)].is_nan() {
            return Err(Error::InvalidArgument(format!("duplicate point at t={}, f={}", p.t, p.f)));
        }
        v[(i, j)] = p.m;
    }
    Ok((freqs, times, v))
}

fn baseline(
    ctx: &Ctx,
    input: &Path,
    k: usize,
    iterations: usize,
    window: Option<usize>,
    hop: Option<usize>,
) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (freqs, times, v) = if is_csv {
        grid_from_points(&load_points(input)?)?
    } else {
        let n = window.ok_or_else(|| Error::InvalidArgument("--window is required for WAV input".into()))?;
        let grid = stft(&AudioBuffer::read_wav(input)?, n, hop.unwrap_or(n / 4))?;
        (grid.bin_freqs(), grid.frame_times(), grid.magnitude_matrix())
    };
    let (model, curve) = nmf_multiplicative(&v, k, iterations, ctx.cli.seed)?;
    let unit = v.mean().unwrap_or(1.0) * v.len() as f64;
    let curve: Vec<f64> = curve.into_iter().map(|c| c / unit).collect();
    ctx.create_out_dir()?;
    let header = |first: &str| -> Vec<String> {
        std::iter::once(first.to_string()).chain((1..=k).map(|c| format!("c{c}"))).collect()
    };
    let rows = |coords: &[f64], m: ndarray::ArrayView2<f64>| -> Vec<Vec<String>> {
        coords
            .iter()
            .zip(m.rows())
            .map(|(c, r)| std::iter::once(c.to_string()).chain(r.iter().map(|x| x.to_string())).collect())
            .collect()
    };
    let wh = header("f_hz");
    write_table(&ctx.out("W.csv"), &wh.iter().map(String::as_str).collect::<Vec<_>>(), rows(&freqs, model.w.view()))?;
    let hh = header("t_sec");
    write_table(&ctx.out("H.csv"), &hh.iter().map(String::as_str).collect::<Vec<_>>(), rows(&times, model.h.t()))?;
    save_loss_curve(&curve, ctx.out("loss_curve.csv"))?;
    ctx.say(format!("final mean KL {}", normalized_matrix_kl(&v, &model.reconstruct())));
    Ok(())
}

fn separate(
    ctx: &Ctx,
    mixture: &Path,
    dicts: [&PathBuf; 2],
    window: usize,
    hop: Option<usize>,
    refs: Option<(&Path, &Path)>,
    train: &TrainArgs,
) -> Result<()> {
    let (config, options) = ctx.training(train, ActivationKind::Table)?;
    let mixture = AudioBuffer::read_wav(mixture)?;
    let load = |p: &Path| InnmfModel::from_file(load_model(p)?)?.dictionary();
    let dictionaries = [load(dicts[0])?, load(dicts[1])?];
    let references = match refs {
        Some((a, b)) => {
            let (a, b) = (AudioBuffer::read_wav(a)?, AudioBuffer::read_wav(b)?);
            if a.len() != mixture.len() || b.len() != mixture.len() {
                return Err(Error::InvalidArgument("references must match the mixture length".into()));
            }
            Some([a, b])
        }
        None => None,
    };
    let job =
        SeparationJob { mixture, dictionaries, window_size: window, hop: hop.unwrap_or(window / 4), config, options };
    job.validate()?;
    let result = run_separation(&job, references.as_ref().map(|[a, b]| [a, b]))?;
    ctx.create_out_dir()?;
    result.estimates[0].write_wav(ctx.out("source1.wav"))?;
    result.estimates[1].write_wav(ctx.out("source2.wav"))?;
    save_loss_curve(&result.loss_curve, ctx.out("loss_curve.csv"))?;
    if let Some(metrics) = result.metrics {
        let rows: Vec<MetricsRow> =
            metrics.iter().enumerate().map(|(i, m)| MetricsRow::new("innmf", window, i + 1, *m)).collect();
        let path = ctx.out("metrics.csv");
        let file = fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        write_metrics_csv(&rows, file)?;
        for r in &rows {
            ctx.say(format!(
                "source {}: SDR {:.2} dB, SIR {:.2} dB, SAR {:.2} dB",
                r.source, r.sdr_db, r.sir_db, r.sar_db
            ));
        }
    }
    Ok(())
}

fn eval(estimate: &Path, reference: &Path, interference: &Path) -> Result<()> {
    let m = bss_metrics(
        &AudioBuffer::read_wav(estimate)?,
        &AudioBuffer::read_wav(reference)?,
        &AudioBuffer::read_wav(interference)?,
    )?;
    println!("sdr_db,sir_db,sar_db");
    println!("{},{},{}", m.sdr_db, m.sir_db, m.sar_db);
    Ok(())
}

fn parse_range(text: &str, what: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidArgument(format!("{what} must be `start,end` with start < end, got `{text}`"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(bad());
    }
    Ok((a, b))
}

/// Cell centers of `n` equal cells over `[a, b)`.
fn centers((a, b): (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (i as f64 + 0.5) * (b - a) / n as f64).collect()
}

fn cell((a, b): (f64, f64), n: usize, x: f64) -> Option<usize> {
    if x < a || x >= b {
        return None;
    }
    Some((((x - a) / (b - a) * n as f64) as usize).min(n - 1))
}

fn render(
    ctx: &Ctx,
    points: Option<&Path>,
    model: Option<&Path>,
    t_range: &str,
    f_range: &str,
    resolution: &str,
    output: &str,
) -> Result<()> {
    let tr = parse_range(t_range, "--t-range")?;
    let fr = parse_range(f_range, "--f-range")?;
    let bad_res = || Error::InvalidArgument(format!("--resolution must be `TxF` with both >= 1, got `{resolution}`"));
    let (nt, nf) = resolution.split_once('x').ok_or_else(bad_res)?;
    let nt: usize = nt.trim().parse().map_err(|_| bad_res())?;
    let nf: usize = nf.trim().parse().map_err(|_| bad_res())?;
    if nt == 0 || nf == 0 {
        return Err(bad_res());
    }
    if points.is_none() && model.is_none() {
        return Err(Error::InvalidArgument("render needs --points and/or --model".into()));
    }
    let (ts, fs) = (centers(tr, nt), centers(fr, nf));

    let binned = match points {
        Some(p) => {
            let pts = load_points(p)?;
            let mut grid = vec![None::<f64>; nt * nf];
            for p in pts.iter() {
                if let (Some(i), Some(j)) = (cell(tr, nt, p.t), cell(fr, nf, p.f)) {
                    let slot = &mut grid[i * nf + j];
                    *slot = Some(slot.map_or(p.m, |m: f64| m.max(p.m)));
                }
            }
            Some(grid)
        }
        None => None,
    };
    let predicted = match model {
        Some(m) => {
            let model = InnmfModel::from_file(load_model(m)?)?;
            let w = model.sample_spectral(&fs)?;
            let h = model.sample_activations(&ts)?;
            let v = h.dot(&w.t()) * model.norm.m_scale;
            Some(v.iter().copied().collect::<Vec<f64>>())
        }
        None => None,
    };
    let values: Vec<f64> = match (&predicted, &binned) {
        (Some(p), _) => p.clone(),
        (None, Some(b)) => b.iter().map(|v| v.unwrap_or(0.0)).collect(),
        (None, None) => unreachable!("checked above"),
    };
    ctx.create_out_dir()?;
    write_table(
        &ctx.out(output),
        &["t", "f", "value"],
        (0..nt).flat_map(|i| {
            let (ts, fs, values) = (&ts, &fs, &values);
            (0..nf).map(move |j| vec![ts[i].to_string(), fs[j].to_string(), values[i * nf + j].to_string()])
        }),
    )?;
    if let (Some(p), Some(b)) = (&predicted, &binned) {
        let pairs: Vec<(f64, f64)> = b.iter().zip(p).filter_map(|(b, p)| b.map(|b| (b, *p))).collect();
        let scale = pairs.iter().map(|x| x.0).sum::<f64>() / pairs.len().max(1) as f64;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let kl = pairs.iter().map(|(m, q)| kl_pointwise(m / scale, q / scale, KL_FLOOR)).sum::<f64>()
            / pairs.len().max(1) as f64;
        println!("mean_kl_vs_points,{kl}");
    }
    Ok(())
}
