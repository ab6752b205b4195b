use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use lagcl::dataset::{generate_synthetic, load_interactions, split_dataset};
use lagcl::eval::{degree_group_report, metrics, uniformity_report};
use lagcl::trainer::{k_sweep, run_variant, train, VariantResult};
use lagcl::{Checkpoint, Hyperparams, SplitDataset, SyntheticConfig};
use log::info;
use serde::Serialize;

use crate::args::{AblateArgs, AnalyzeArgs, ConfigArgs, EvaluateArgs, Mode, PrepareArgs, Side, SynthArgs, TrainArgs};
use crate::manifest::{fingerprint, RunManifest};

pub const EPOCH_LOG: &str = "epoch_log.jsonl";

/// Context shared by every command for its manifest.
pub struct Run {
    pub command: &'static str,
    pub argv: Vec<String>,
    pub started: Instant,
}

impl Run {
    fn manifest(&self, config: Option<&Hyperparams>, seed: Option<u64>, dataset_fingerprint: String) -> Result<RunManifest> {
        Ok(RunManifest {
            command: self.command.to_string(),
            args: self.argv.clone(),
            config: config.map(serde_json::to_value).transpose()?,
            seed,
            dataset_fingerprint,
            artifacts: Vec::new(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        })
    }
}

fn ratios(v: &[f64]) -> Result<[f64; 3]> {
    match v {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("invalid value for `--split`: expected three comma-separated ratios"),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn load_split(dir: &Path) -> Result<(SplitDataset, String)> {
    let split = SplitDataset::load(dir).with_context(|| format!("cannot load dataset from {}", dir.display()))?;
    let fp = fingerprint(&SplitDataset::files(dir))?;
    Ok((split, fp))
}

fn hyperparams(args: &ConfigArgs) -> Result<Hyperparams> {
    let mut hp = match &args.config {
        Some(path) => Hyperparams::load(path).with_context(|| format!("invalid config {}", path.display()))?,
        None => Hyperparams::default(),
    };
    for assignment in &args.overrides {
        let (key, value) = assignment
            .split_once('=')
            .with_context(|| format!("invalid value for `--set`: `{assignment}` is not KEY=VALUE"))?;
        hp.set(key.trim(), value)?;
    }
    hp.validate()?;
    Ok(hp)
}

fn load_checkpoint(dir: &Path, split: &SplitDataset) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(dir).with_context(|| format!("cannot load checkpoint from {}", dir.display()))?;
    if ckpt.num_users != split.num_users || ckpt.num_items != split.num_items {
        bail!(
            "checkpoint covers {}x{} users x items but the dataset has {}x{}",
            ckpt.num_users,
            ckpt.num_items,
            split.num_users,
            split.num_items
        );
    }
    Ok(ckpt)
}

fn check_k(k: usize, split: &SplitDataset) -> Result<()> {
    if k < 1 || k > split.num_items {
        bail!("invalid value for `--k`: {k} must lie in 1..={} (the item count)", split.num_items);
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn prepare(run: &Run, args: &PrepareArgs) -> Result<()> {
    let ratios = ratios(&args.split)?;
    let ds = load_interactions(&args.input, args.min_rating)?;
    let split = split_dataset(&ds, ratios, args.seed)?;
    info!(
        "{} users, {} items, {} train / {} val / {} test edges",
        split.num_users,
        split.num_items,
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    create_dir(&args.out)?;
    let written = split.save(&args.out)?;
    let fp = fingerprint(&[args.input.clone()])?;
    run.manifest(None, Some(args.seed), fp)?.write(&args.out, &written)?;
    Ok(())
}

pub fn synth(run: &Run, args: &SynthArgs) -> Result<()> {
    let ratios = ratios(&args.split)?;
    let defaults = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        num_users: args.users,
        num_items: args.items,
        power_exponent: args.exponent,
        num_blocks: args.blocks.unwrap_or(defaults.num_blocks),
        edges_target: args.edges,
        seed: args.seed,
    };
    let ds = generate_synthetic(&cfg)?;
    let split = split_dataset(&ds, ratios, args.seed)?;
    info!("{} interactions generated", ds.edges.len());
    create_dir(&args.out)?;
    let mut written = split.save(&args.out)?;
    written.push(write_json(&args.out.join("synthetic_config.json"), &cfg)?);
    let fp = fingerprint(&SplitDataset::files(&args.out))?;
    run.manifest(None, Some(args.seed), fp)?.write(&args.out, &written)?;
    Ok(())
}

pub fn train_cmd(run: &Run, args: &TrainArgs) -> Result<()> {
    let hp = hyperparams(&args.config)?;
    let (split, fp) = load_split(&args.data)?;
    create_dir(&args.out)?;
    let log_path = args.out.join(EPOCH_LOG);
    let mut log_file = fs::File::create(&log_path).with_context(|| format!("cannot write {}", log_path.display()))?;
    let mut log_error = None;
    let outcome = train::<f32>(&split, &hp, |record| {
        info!(
            "epoch {} loss {:.4} val recall {:?}",
            record.epoch, record.loss.total, record.val_recall
        );
        let line = serde_json::to_string(record).expect("record serializes");
        if let Err(e) = writeln!(log_file, "{line}") {
            log_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_error {
        return Err(e).with_context(|| format!("cannot write {}", log_path.display()));
    }
    drop(log_file);
    let ckpt = outcome.checkpoint(&hp, split.num_users, split.num_items);
    let mut written: Vec<PathBuf> = ckpt.save(&args.out)?.to_vec();
    written.push(log_path);
    info!(
        "best epoch {} (validation Recall@{} {:?})",
        outcome.summary.best_epoch, hp.eval_k, outcome.summary.best_val_recall
    );
    run.manifest(Some(&hp), Some(hp.seed), fp)?.write(&args.out, &written)?;
    Ok(())
}

pub fn evaluate(run: &Run, args: &EvaluateArgs) -> Result<()> {
    let (split, fp) = load_split(&args.data)?;
    check_k(args.k, &split)?;
    let ckpt = load_checkpoint(&args.ckpt, &split)?;
    let report = metrics(&split, &ckpt.embeddings, args.k, args.target.into())?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        let written = vec![write_json(&out.join("metrics.json"), &report)?];
        run.manifest(Some(&ckpt.hyperparams), Some(ckpt.hyperparams.seed), fp)?
            .write(out, &written)?;
    }
    #[derive(Serialize)]
    struct Summary {
        k: usize,
        recall: f64,
        ndcg: f64,
        evaluated_users: usize,
    }
    print_json(&Summary {
        k: report.k,
        recall: report.recall,
        ndcg: report.ndcg,
        evaluated_users: report.evaluated_users,
    })
}

pub fn analyze(run: &Run, args: &AnalyzeArgs) -> Result<()> {
    let (split, fp) = load_split(&args.data)?;
    let ckpt = load_checkpoint(&args.ckpt, &split)?;
    let (json, csv, stem) = match args.mode {
        Mode::DegreeGroups => {
            check_k(args.k, &split)?;
            let report = degree_group_report(&split, &ckpt.embeddings, args.groups, args.k, args.target.into())?;
            (serde_json::to_value(&report)?, report.to_csv(), "degree_groups")
        }
        Mode::Uniformity => {
            let rows = match args.side {
                Side::Users => 0..split.num_users,
                Side::Items => split.num_users..split.num_users + split.num_items,
            };
            let table = ckpt.embeddings.slice(ndarray::s![rows, ..]).to_owned();
            let report = uniformity_report(&table, args.pairs, ckpt.hyperparams.seed)?;
            (serde_json::to_value(&report)?, report.to_csv(), "uniformity")
        }
    };
    if let Some(out) = &args.out {
        create_dir(out)?;
        let written = vec![
            write_json(&out.join(format!("{stem}.json")), &json)?,
            write_text(&out.join(format!("{stem}.csv")), &csv)?,
        ];
        run.manifest(Some(&ckpt.hyperparams), Some(ckpt.hyperparams.seed), fp)?
            .write(out, &written)?;
    }
    print_json(&json)
}

pub fn ablate(run: &Run, args: &AblateArgs) -> Result<()> {
    let hp = hyperparams(&args.config)?;
    let (split, fp) = load_split(&args.data)?;
    if args.variant.is_empty() {
        bail!("invalid value for `--variant`: no variant given");
    }
    let mut rows: Vec<VariantResult> = Vec::new();
    for &variant in &args.variant {
        match &args.k_sweep {
            Some(ks) => {
                if ks.is_empty() || ks.contains(&0) {
                    bail!("invalid value for `--k-sweep`: thresholds must be positive");
                }
                info!("{}: sweeping k over {ks:?}", variant.name());
                rows.extend(k_sweep(&split, &hp, variant, ks)?);
            }
            None => {
                info!("{}: training", variant.name());
                rows.push(run_variant(&split, &hp, variant)?.0);
            }
        }
    }
    let mut csv = String::from(VariantResult::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    create_dir(&args.out)?;
    let written = vec![
        write_text(&args.out.join("ablation.csv"), &csv)?,
        write_json(&args.out.join("ablation.json"), &rows)?,
    ];
    print!("{csv}");
    run.manifest(Some(&hp), Some(hp.seed), fp)?.write(&args.out, &written)?;
    Ok(())
}
