use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lunet::baselines::{ClusterConfig, LinkNetConfig};
use lunet::bench::{benchmark_csv, eval_indices, network_masks, run_benchmark, score_masks, BenchConfig, Method};
use lunet::metrics::{report_csv_row, REPORT_CSV_HEADER};
use lunet::synth::SyntheticSpec;
use lunet::trainer::{infer_architecture, read_records, read_step_log, restore, save_checkpoint, train, CsvSink, TrainConfig};
use lunet::volume::*;
use lunet::{Architecture, ClassMode, Error, SegmentationModel, UNetConfig};

use crate::args::*;
use crate::manifest::{unix_now, RunManifest};
use crate::plot::{line_plot, overlay};

/// Runs `cmd`, writing its run manifest into the output directory before
/// any work starts and again, with artifacts, when it finishes.
pub fn run(cmd: Command, argv: Vec<String>, config_file: Option<PathBuf>) -> Result<()> {
    if let Command::Replay(r) = cmd {
        return replay(&r);
    }
    let out = cmd.out_dir().expect("every command but replay has an output directory").clone();
    let mut manifest = RunManifest::new(cmd.clone(), argv, config_file, settings(&cmd)?);
    manifest.write(&out)?;
    let artifacts = match &cmd {
        Command::Synth(a) => synth(a)?,
        Command::Extract(a) => extract(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Benchmark(a) => benchmark(a)?,
        Command::Curves(a) => curves(a)?,
        Command::Replay(_) => unreachable!(),
    };
    manifest.artifacts = artifacts;
    manifest.finished_unix = Some(unix_now());
    manifest.write(&out)?;
    Ok(())
}

fn replay(r: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::read(&r.manifest)?;
    let mut cmd = recorded.resolved;
    if let Command::Replay(_) = cmd {
        return Err(Error::InvalidConfig("a replay manifest cannot itself be replayed".into()).into());
    }
    if let Some(out) = &r.out {
        cmd.set_out_dir(out.clone());
    }
    let argv = std::env::args().collect();
    run(cmd, argv, None)
}

fn settings(cmd: &Command) -> Result<serde_json::Value> {
    Ok(match cmd {
        Command::Synth(a) => serde_json::to_value(synth_spec(a)?)?,
        Command::Train(a) => serde_json::json!({
            "architecture": architecture(a.model, &a.net),
            "train": train_config(&a.net),
        }),
        Command::Benchmark(a) => serde_json::to_value(bench_config(a))?,
        _ => serde_json::Value::Null,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth_spec(a: &SynthArgs) -> Result<SyntheticSpec> {
    let spec = SyntheticSpec {
        n_volumes: a.n_volumes,
        dims: (a.dims[0], a.dims[1], a.dims[2]),
        tumors: (a.min_tumors, a.max_tumors),
        axes: (a.min_axis, a.max_axis),
        contrast: a.contrast,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn synth(a: &SynthArgs) -> Result<Vec<PathBuf>> {
    let spec = synth_spec(a)?;
    let (format, ext) = match a.format {
        FormatArg::Native => (VolumeFormat::Native, "luv"),
        FormatArg::Nifti => (VolumeFormat::Nifti1, "nii"),
    };
    let (vdir, mdir) = (a.out.join("volumes"), a.out.join("masks"));
    create_dir(&vdir)?;
    create_dir(&mdir)?;
    let mut artifacts = Vec::new();
    for i in 0..spec.n_volumes {
        let v = spec.generate_one(i)?;
        let name = format!("{}.{ext}", v.id);
        write_volume(&v.volume, &vdir.join(&name), format)?;
        write_volume(&v.mask, &mdir.join(&name), format)?;
        let fg = v.mask.voxels.iter().filter(|&&x| x > 0.5).count();
        println!("{}: {} tumors, {fg} tumor voxels", v.id, v.tumors.len());
        artifacts.push(vdir.join(&name));
        artifacts.push(mdir.join(&name));
    }
    Ok(artifacts)
}

fn source_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn extract(a: &ExtractArgs) -> Result<Vec<PathBuf>> {
    if a.volumes.len() != a.masks.len() {
        return Err(Error::InvalidConfig(format!("{} volumes but {} masks", a.volumes.len(), a.masks.len())).into());
    }
    let planes = a.plane.planes();
    let mut per_plane: Vec<Vec<SlicePair>> = vec![Vec::new(); planes.len()];
    for (vp, mp) in a.volumes.iter().zip(&a.masks) {
        let id = source_id(vp);
        if a.exclude_ids.contains(&id) {
            println!("skipping excluded source {id}");
            continue;
        }
        let vol = read_volume(vp, VolumeFormat::from_path(vp))?;
        let mut mask = read_volume(mp, VolumeFormat::from_path(mp))?;
        if mask.dims != vol.dims {
            mask = resample_mask(&mask, &vol)?;
        }
        for (items, &plane) in per_plane.iter_mut().zip(&planes) {
            items.extend(extract_slices(&vol, &mask, plane, &id)?);
        }
    }
    let prepare = |items: Vec<SlicePair>| {
        let items = exclude_sources(items, &a.exclude_ids);
        if a.drop_empty {
            drop_empty_masks(items)
        } else {
            items
        }
    };
    let mut datasets: Vec<(String, Vec<SlicePair>)> = planes
        .iter()
        .zip(per_plane)
        .map(|(p, items)| (p.as_str().to_string(), prepare(items)))
        .collect();
    if a.plane == PlaneArg::Full {
        let all = datasets.iter().flat_map(|(_, items)| items.iter().cloned()).collect();
        datasets.push(("full".into(), all));
    }
    let mut artifacts = Vec::new();
    for (name, items) in datasets {
        if items.is_empty() {
            return Err(Error::EmptyDataset.into());
        }
        let ds = split_dataset(items, a.test_fraction, a.seed)?;
        let path = write_dataset(&ds, &a.out.join(&name), "manifest.tsv")?;
        println!(
            "{name}: {} slices ({} train, {} test)",
            ds.len(),
            ds.count(Split::Train),
            ds.count(Split::Test)
        );
        artifacts.push(path);
    }
    Ok(artifacts)
}

fn train_config(n: &NetArgs) -> TrainConfig {
    TrainConfig {
        learning_rate: n.learning_rate,
        epochs: n.epochs,
        batch_size: n.batch_size,
        early_stop_patience: n.patience,
        seed: n.seed,
        threshold: n.threshold,
        class_mode: n.class_mode.into(),
        ..TrainConfig::default()
    }
}

fn unet_config(n: &NetArgs) -> UNetConfig {
    UNetConfig {
        base_filters: n.base_filters,
        filter_step: n.filter_step,
        depth: n.depth,
        upsample_mode: n.upsample.into(),
        input_hw: (n.input_size, n.input_size),
        seed: n.seed,
        ..UNetConfig::default()
    }
}

fn linknet_config(n: &NetArgs) -> LinkNetConfig {
    LinkNetConfig {
        base_filters: n.base_filters,
        filter_step: n.filter_step,
        input_hw: (n.input_size, n.input_size),
        seed: n.seed,
        ..LinkNetConfig::default()
    }
}

fn architecture(model: ModelArg, n: &NetArgs) -> Architecture {
    match model {
        ModelArg::Unet => Architecture::Unet(unet_config(n)),
        ModelArg::Linknet => Architecture::Linknet(linknet_config(n)),
    }
}

fn load_dataset(manifest: &Path, plane: PlaneArg) -> Result<SliceDataset> {
    let ds = SliceDataset::load(manifest)?;
    let ds = match plane.single() {
        Some(p) => ds.plane_subset(p),
        None => ds,
    };
    if ds.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    Ok(ds)
}

fn train_cmd(a: &TrainArgs) -> Result<Vec<PathBuf>> {
    let cfg = train_config(&a.net);
    cfg.validate()?;
    let ds = load_dataset(&a.manifest, a.plane)?;
    let arch = architecture(a.model, &a.net);
    let mut model = arch.build::<f32>()?;
    let resized = ds.resized(a.net.input_size, a.net.input_size);
    let (steps_path, epochs_path, ckpt) = (a.out.join("steps.csv"), a.out.join("epochs.csv"), a.out.join("model.lunt"));
    let open = |p: &Path| File::create(p).map(BufWriter::new).with_context(|| format!("creating {}", p.display()));
    let mut sink = CsvSink::new(open(&steps_path)?, Some(open(&epochs_path)?));
    println!(
        "training {} ({} parameters) on {} train / {} test slices",
        arch.name(),
        model.param_count(),
        resized.count(Split::Train),
        resized.count(Split::Test)
    );
    let outcome = train(&mut model, &resized, &cfg, &mut [&mut sink])?;
    let (mut s, e) = sink.into_inner();
    s.flush()?;
    e.expect("epoch log was requested").flush()?;
    save_checkpoint(&model, &ckpt)?;
    for h in &outcome.history {
        println!(
            "epoch {:>3}  train loss {:.4}  train IoU {:.4}  val loss {:.4}  val IoU {:.4}",
            h.epoch, h.train_loss, h.train_iou, h.val_loss, h.val_iou
        );
    }
    println!(
        "best epoch {} with val IoU {:.4}{}",
        outcome.best_epoch,
        outcome.best_val_iou,
        if outcome.stopped_early { " (stopped early)" } else { "" }
    );
    Ok(vec![ckpt, steps_path, epochs_path])
}

/// File name shared by `predict` outputs and `evaluate` lookups.
pub fn slice_file_name(img: &SliceImage) -> String {
    format!("{}_{}_{:04}.pgm", img.source_id, img.plane, img.slice_index)
}

fn split_indices(ds: &SliceDataset, split: SplitArg) -> Vec<usize> {
    match split {
        SplitArg::Test => eval_indices(ds),
        SplitArg::Train => ds.indices(Split::Train),
        SplitArg::All => (0..ds.len()).collect(),
    }
}

fn predict(a: &PredictArgs) -> Result<Vec<PathBuf>> {
    let file = File::open(&a.checkpoint).with_context(|| format!("opening {}", a.checkpoint.display()))?;
    let records = read_records(BufReader::new(file))?;
    let hw = (a.input_size, a.input_size);
    let mut model = infer_architecture(&records, hw)?.build::<f32>()?;
    restore(&mut model, &records)?;
    let (ds, idx, names) = match (&a.manifest, &a.image) {
        (Some(m), _) => {
            let ds = SliceDataset::load(m)?;
            let idx = split_indices(&ds, a.split);
            let names = idx.iter().map(|&i| slice_file_name(&ds.items[i].image)).collect();
            (ds, idx, names)
        }
        (None, Some(p)) => {
            let image = read_raster(p)?;
            let mask = image.with_pixels(image.height, image.width, vec![0.0; image.pixels.len()]);
            let ds = SliceDataset {
                items: vec![SlicePair { image, mask }],
                split: vec![Split::Test],
                seed: 0,
            };
            let name = p.file_name().map_or("image.pgm".into(), |n| n.to_string_lossy().into_owned());
            (ds, vec![0], vec![name])
        }
        (None, None) => bail!(Error::InvalidConfig("give --manifest or --image".into())),
    };
    if idx.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let masks = network_masks(&mut model, &ds, &idx, hw, a.batch_size, a.threshold)?;
    create_dir(&a.out)?;
    let odir = a.out.join("overlays");
    if a.overlay {
        create_dir(&odir)?;
    }
    let mut artifacts = Vec::new();
    for ((&i, mask), name) in idx.iter().zip(&masks).zip(&names) {
        let path = a.out.join(name);
        write_raster(mask, &path)?;
        artifacts.push(path);
        if a.overlay {
            let path = odir.join(name);
            write_raster(&overlay(&ds.items[i].image, mask), &path)?;
            artifacts.push(path);
        }
    }
    println!("wrote {} masks to {}", masks.len(), a.out.display());
    Ok(artifacts)
}

/// Table name for the dataset a manifest describes: the plane title for
/// per-plane directories, `Full` for the combined one, else the directory.
pub fn dataset_name(manifest: &Path) -> String {
    let dir = manifest
        .parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| manifest.display().to_string(), |n| n.to_string_lossy().into_owned());
    match dir.parse::<PlaneLabel>() {
        Ok(p) => p.title().to_string(),
        Err(_) if dir.eq_ignore_ascii_case("full") => "Full".into(),
        Err(_) => dir,
    }
}

fn dataset_rank(name: &str) -> usize {
    ["Coronal", "Sagittal", "Transversal", "Full"].iter().position(|&n| n == name).unwrap_or(4)
}

fn mode_label(mode: ClassMode) -> &'static str {
    match mode {
        ClassMode::TwoClass => "two",
        ClassMode::ForegroundOnly => "fg",
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<Vec<PathBuf>> {
    if a.manifest.len() != a.pred_dir.len() {
        return Err(Error::InvalidConfig(format!(
            "{} manifests but {} prediction directories",
            a.manifest.len(),
            a.pred_dir.len()
        ))
        .into());
    }
    let mode: ClassMode = a.class_mode.into();
    let mut csv = format!("# class_mode={}\n{REPORT_CSV_HEADER}\n", mode_label(mode));
    for (m, dir) in a.manifest.iter().zip(&a.pred_dir) {
        let ds = SliceDataset::load(m)?;
        let idx = split_indices(&ds, a.split);
        if idx.is_empty() {
            return Err(Error::EmptyDataset.into());
        }
        let preds = idx
            .iter()
            .map(|&i| read_raster(&dir.join(slice_file_name(&ds.items[i].image))))
            .collect::<lunet::Result<Vec<_>>>()?;
        let truths: Vec<&SliceImage> = idx.iter().map(|&i| &ds.items[i].mask).collect();
        let report = score_masks(&preds, &truths, mode)?;
        let row = report_csv_row(&dataset_name(m), &a.method, &report);
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    create_dir(&a.out)?;
    let path = a.out.join("metrics.csv");
    write_text(&path, &csv)?;
    Ok(vec![path])
}

fn bench_config(a: &BenchmarkArgs) -> BenchConfig {
    let n = &a.net;
    BenchConfig {
        train: train_config(n),
        unet: unet_config(n),
        linknet: linknet_config(n),
        cluster: ClusterConfig {
            k: a.clusters,
            seed: n.seed,
            ..ClusterConfig::default()
        },
        class_mode: n.class_mode.into(),
        input_hw: (n.input_size, n.input_size),
        ..BenchConfig::default()
    }
}

fn benchmark(a: &BenchmarkArgs) -> Result<Vec<PathBuf>> {
    let cfg = bench_config(a);
    let methods: Vec<Method> = a.methods.iter().map(|&m| m.into()).collect();
    if methods.iter().any(|m| m.is_network()) {
        cfg.train.validate()?;
    }
    let mut datasets = a
        .manifests
        .iter()
        .map(|m| Ok((dataset_name(m), SliceDataset::load(m)?)))
        .collect::<Result<Vec<_>>>()?;
    datasets.sort_by(|x, y| dataset_rank(&x.0).cmp(&dataset_rank(&y.0)).then_with(|| x.0.cmp(&y.0)));
    let rows = run_benchmark(&datasets, &methods, &cfg)?;
    let table = benchmark_csv(&rows);
    print!("{table}");
    create_dir(&a.out)?;
    let path = a.out.join("benchmark.csv");
    write_text(&path, &format!("# class_mode={}\n{table}", mode_label(cfg.class_mode)))?;
    Ok(vec![path])
}

fn curves(a: &CurvesArgs) -> Result<Vec<PathBuf>> {
    let file = File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?;
    let logs = read_step_log(BufReader::new(file))?;
    if logs.is_empty() {
        return Err(Error::MalformedLog {
            line: 1,
            reason: "log holds no steps".into(),
        }
        .into());
    }
    create_dir(&a.out)?;
    let mut csv = String::from("step,loss,iou\n");
    for l in &logs {
        csv.push_str(&format!("{},{},{}\n", l.step, l.loss, l.iou));
    }
    let data = a.out.join("curves.csv");
    write_text(&data, &csv)?;
    let mut artifacts = vec![data];
    for (name, values) in [
        ("loss.pgm", logs.iter().map(|l| l.loss).collect::<Vec<_>>()),
        ("iou.pgm", logs.iter().map(|l| l.iou).collect()),
    ] {
        let path = a.out.join(name);
        write_raster(&line_plot(&values, a.width, a.height), &path)?;
        artifacts.push(path);
    }
    println!("{} steps plotted to {}", logs.len(), a.out.display());
    Ok(artifacts)
}
