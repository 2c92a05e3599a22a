use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use streamfact_core::eval::{evaluate, predict_many};
use streamfact_core::tensor::{
    parse_coo, parse_index_lines, partition_stream, split_train_test, synth_generate, write_coo,
    GeneratorSpec,
};
use streamfact_core::verify::{run_all, VerifyPlan};
use streamfact_core::{
    process_batch, running_eval, Activation, EntryBatch, Error, ModelState, ObservedEntry, Prediction,
    TensorShape, ValueKind,
};

use crate::config::{ConfigFlags, RunConfig};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_entries(path: &Path, shape: &TensorShape, kind: ValueKind) -> Result<Vec<ObservedEntry>> {
    parse_coo(open(path)?, shape, kind).with_context(|| format!("reading {}", path.display()))
}

/// Writes through a sibling temp file so a crash never leaves a torn file.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    let file = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    let mut w = BufWriter::new(file);
    fill(&mut w)?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_state(path: &Path) -> Result<ModelState> {
    ModelState::load_checkpoint(open(path)?).with_context(|| format!("loading {}", path.display()))
}

pub fn metric_name(kind: ValueKind) -> &'static str {
    match kind {
        ValueKind::Continuous => "rmse",
        ValueKind::Binary => "auc",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorKind {
    /// Sum over rank of products of embedding coordinates.
    Cp,
    /// Random network over the concatenated embeddings.
    Mlp,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Mode sizes, e.g. 50,50,50.
    #[arg(long, value_delimiter = ',', required = true)]
    pub shape: Vec<usize>,
    #[arg(long, default_value = "continuous")]
    pub kind: ValueKind,
    /// True embedding rank.
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Cp)]
    pub generator: GeneratorKind,
    /// Hidden widths of the random generator network.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub gen_hidden: Vec<usize>,
    #[arg(long, default_value = "tanh")]
    pub gen_activation: Activation,
    /// Fraction of generator weights set to exactly zero.
    #[arg(long, default_value_t = 0.0)]
    pub sparsity: f64,
    /// Gaussian noise sd for continuous values.
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    /// Distinct cells to draw, train and test together.
    #[arg(long)]
    pub entries: usize,
    /// Size of the test side; defaults to a tenth of the entries.
    #[arg(long)]
    pub test_entries: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for train.coo, test.coo and truth.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let shape = TensorShape::new(a.shape.clone())?;
    let generator = match a.generator {
        GeneratorKind::Cp => GeneratorSpec::MultilinearCp,
        GeneratorKind::Mlp => {
            if !a.gen_activation.is_user_facing() {
                return Err(Error::Argument("generator activation must be relu or tanh".into()).into());
            }
            GeneratorSpec::RandomMlp {
                hidden: a.gen_hidden.clone(),
                activation: a.gen_activation,
                sparsity: a.sparsity,
            }
        }
    };
    let n_test = a.test_entries.unwrap_or(a.entries / 10);
    if n_test == 0 || n_test >= a.entries {
        return Err(Error::Argument(format!("test entries {n_test} must be in 1..{}", a.entries)).into());
    }
    let out = synth_generate(&shape, a.rank, a.kind, &generator, a.noise_sd, a.entries, a.seed)?;
    let split = split_train_test(&out.entries, n_test as f64 / a.entries as f64, a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_atomic(&a.out.join("train.coo"), |w| Ok(write_coo(w, &split.train)?))?;
    write_atomic(&a.out.join("test.coo"), |w| Ok(write_coo(w, &split.test)?))?;
    write_atomic(&a.out.join("truth.json"), |w| Ok(out.truth.save(w)?))?;
    println!(
        "synth train={} test={} out={}",
        split.train.len(),
        split.test.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: ConfigFlags,
    /// Continue from this checkpoint instead of a fresh prior.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&a.flags)?;
    if a.dump_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    train(&cfg, a.resume.as_deref())
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let shape = cfg.tensor_shape()?;
    let engine = cfg.engine()?;
    let train_path = cfg.train.as_deref().ok_or_else(|| Error::Argument("no training file given (--train)".into()))?;
    if cfg.metrics.is_some() && cfg.test.is_none() {
        return Err(Error::Argument("--metrics needs --test".into()).into());
    }
    let mut state = match resume {
        Some(p) => {
            let s = load_state(p)?;
            if s.shape() != &shape || s.kind() != cfg.kind {
                return Err(Error::Argument(format!(
                    "checkpoint {} holds a {:?} {:?} tensor, config asks for {:?} {:?}",
                    p.display(),
                    s.kind(),
                    s.shape().dims(),
                    cfg.kind,
                    shape.dims()
                ))
                .into());
            }
            s
        }
        None => {
            let hyper = cfg.hyperparams(shape.mode_count())?;
            let net = cfg.network(&hyper.ranks)?;
            ModelState::init(shape.clone(), cfg.kind, net, hyper, cfg.seed)?
        }
    };
    let test = match &cfg.test {
        Some(p) => Some(read_entries(p, &shape, cfg.kind)?),
        None => None,
    };
    let entries = read_entries(train_path, &shape, cfg.kind)?;
    if entries.is_empty() {
        return Err(Error::Argument(format!("{} holds no entries", train_path.display())).into());
    }
    let offset = state.batches_seen();
    let batches: Vec<EntryBatch> = partition_stream(&entries, cfg.batch_size, cfg.seed)?
        .into_iter()
        .map(|b| EntryBatch { ordinal: b.ordinal + offset, entries: b.entries })
        .collect();
    log::info!("training on {} entries in {} batches", entries.len(), batches.len());

    let final_metric = match &test {
        Some(test) => {
            let series = running_eval(&mut state, &batches, test, &engine, cfg.record_timing)?;
            if let Some(path) = &cfg.metrics {
                let append = resume.is_some() && path.exists();
                if append {
                    let f = OpenOptions::new().append(true).open(path)?;
                    let mut w = BufWriter::new(f);
                    series.write_csv(&mut w, false)?;
                    w.flush()?;
                } else {
                    write_atomic(path, |w| Ok(series.write_csv(w, true)?))?;
                }
            }
            series.last().map(|r| r.metric)
        }
        None => {
            for b in &batches {
                process_batch(&mut state, b, &engine)?;
            }
            None
        }
    };
    if let Some(path) = &cfg.checkpoint {
        write_atomic(path, |w| Ok(state.save_checkpoint(w)?))?;
    }
    let d = state.diagnostics();
    match final_metric {
        Some(m) => println!(
            "final {}={} batches={} seen={} skipped={}",
            metric_name(cfg.kind),
            m,
            state.batches_seen(),
            state.entries_seen(),
            d.skipped_entries
        ),
        None => println!(
            "final batches={} seen={} skipped={}",
            state.batches_seen(),
            state.entries_seen(),
            d.skipped_entries
        ),
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Index tuples, one per line; a trailing value column is ignored.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Add the predictive variance column (continuous only).
    #[arg(long)]
    pub variance: bool,
}

pub fn write_predictions<W: Write>(
    mut w: W,
    indices: &[Vec<usize>],
    preds: &[Prediction],
    modes: usize,
    variance: bool,
) -> Result<()> {
    let mut header: Vec<String> = (1..=modes).map(|k| format!("i_{k}")).collect();
    header.push("prediction".into());
    if variance {
        header.push("variance".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (idx, p) in indices.iter().zip(preds) {
        for i in idx {
            write!(w, "{i},")?;
        }
        match (p, variance) {
            (Prediction::Continuous { mean, var }, true) => writeln!(w, "{mean},{var}")?,
            _ => writeln!(w, "{}", p.point())?,
        }
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let state = load_state(&a.checkpoint)?;
    if a.variance && state.kind() == ValueKind::Binary {
        return Err(Error::Argument("--variance applies to continuous tensors only".into()).into());
    }
    let indices = parse_index_lines(open(&a.input)?, state.shape())
        .with_context(|| format!("reading {}", a.input.display()))?;
    let preds = predict_many(&state, &indices)?;
    let modes = state.shape().mode_count();
    match &a.output {
        Some(p) => write_atomic(p, |w| write_predictions(w, &indices, &preds, modes, a.variance)),
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_predictions(&mut w, &indices, &preds, modes, a.variance)?;
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled entries to score.
    #[arg(long)]
    pub test: PathBuf,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let state = load_state(&a.checkpoint)?;
    let test = read_entries(&a.test, state.shape(), state.kind())?;
    let m = evaluate(&state, &test)?;
    println!("{}={} entries={}", metric_name(state.kind()), m, test.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Fewer cases per check.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let plan = if a.quick { VerifyPlan::quick() } else { VerifyPlan::full() };
    let checks = run_all(&plan, a.seed)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(Error::Oracle(format!("{failed} of {} checks failed", checks.len())).into());
    }
    Ok(())
}
