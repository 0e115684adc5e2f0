use std::error::Error as StdError;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wfprecision::classifiers::{self, ClassifierKind, TrainedModel};
use wfprecision::defenses::{defend_dataset, measure_overhead, DefenseConfig};
use wfprecision::harness::{
    append_results, build_pool, calibrate_identify, estimate_rows, identify_client, openworld_size_curve,
    run_experiment, selection_scenario, synth_dataset, ExperimentConfig, PoChoice, SelectionMode, SweepRow,
};
use wfprecision::metrics::{precision_estimate_z, tally, ConfusionCounts};
use wfprecision::optimizers::{confidence_po, scale_matches};
use wfprecision::reporting::{render, BoundSpec, ReportKind, ReportSpec};
use wfprecision::traces::{load_dataset_dir, parse_spec, stratified_folds, subset, write_dataset_dir, Dataset, Label};

type CliResult<T = ()> = Result<T, Box<dyn StdError>>;

/// Open-world website-fingerprinting experiments.
#[derive(Parser)]
#[command(name = "wfp", version)]
struct Cli {
    /// Master seed for every random step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a trace directory and write it back in canonical form.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop unmonitored traces whose host repeats an earlier one.
        #[arg(long)]
        dedup_hosts: bool,
        /// Keep only a sample of this shape, e.g. `50x50+2000`.
        #[arg(long)]
        subset: Option<String>,
    },
    /// Generate a synthetic dataset of the given shape.
    Synth {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write stratified folds as `fold-<i>/{train,test}` directories.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one classifier and save the model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        classifier: ClassifierKind,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config supplying classifier settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a dataset with a saved model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Per-element decisions as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        po: PoArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 1000.0])]
        r: Vec<f64>,
    },
    /// Cross-validated sweep over classifiers and optimizers.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Baseline precision against the number of unmonitored training traces.
    Curve {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        classifier: ClassifierKind,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success rate of singling out one sensitive access among S.
    Select {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        classifier: ClassifierKind,
        #[arg(long, value_delimiter = ',', required = true)]
        s: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Detection and false-identification rates for client identification.
    Identify {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        classifier: ClassifierKind,
        /// Rate at which a sensitive client visits the target page.
        #[arg(long)]
        b: f64,
        #[arg(long)]
        n_obs: usize,
        /// Fixed threshold; without it the threshold is calibrated.
        #[arg(long)]
        m_identify: Option<usize>,
        /// Target false-identification rate for calibration.
        #[arg(long, default_value_t = 0.01)]
        max_false: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[command(flatten)]
        po: PoArgs,
    },
    /// Apply a padding defense to every trace of a directory.
    Defend {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Render tables and plot data from result files.
    Report {
        #[arg(long)]
        kind: ReportKind,
        #[arg(long = "in")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classifier: Option<String>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0.9)]
        m_match: f64,
        #[arg(long)]
        dist: Option<String>,
        /// N_P and N_N for the bound curve.
        #[arg(long, default_value_t = 50_000)]
        n_p: u64,
        #[arg(long, default_value_t = 50_000)]
        n_n: u64,
    },
}

/// Where an experiment's data and settings come from.
#[derive(Args)]
struct Source {
    /// Experiment config file (`key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace directory; overrides the config.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic dataset shape; overrides the config.
    #[arg(long)]
    synth: Option<String>,
}

impl Source {
    fn load(&self, seed: Option<u64>) -> CliResult<(ExperimentConfig, Dataset)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.data {
            cfg.dataset_dir = Some(d.clone());
            cfg.synth = None;
        }
        if let Some(s) = &self.synth {
            cfg.synth = Some(s.clone());
            cfg.dataset_dir = None;
        }
        cfg.validate()?;
        let data = cfg.load_dataset()?;
        Ok((cfg, data))
    }
}

/// Confidence optimizer settings; without `--m-match` no optimizer runs.
#[derive(Args)]
struct PoArgs {
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    m_match: Option<f64>,
}

impl PoArgs {
    fn choice(&self) -> PoChoice {
        match self.m_match {
            Some(m_match) => PoChoice::Confidence { k: self.k, m_match },
            None => PoChoice::Baseline,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn describe(d: &Dataset) -> String {
    format!("{} ({} traces)", d.shape(), d.len())
}

fn estimate_lines(counts: &ConfusionCounts, r_values: &[f64], z: f64) -> String {
    let mut out = format!(
        "N_P={} N_N={} TP={} WP={} FP={}\n",
        counts.n_p, counts.n_n, counts.n_tp, counts.n_wp, counts.n_fp
    );
    for &r in r_values {
        let e = precision_estimate_z(counts, r, z);
        let show = |v: &Result<f64, _>| match v {
            Ok(x) => format!("{x:.4}"),
            Err(a) => format!("NA:{a}"),
        };
        writeln!(out, "r={r} method={} point={} lower={} upper={}", e.method, show(&e.point), show(&e.lower), show(&e.upper))
            .unwrap();
    }
    out
}

fn run(cli: Cli) -> CliResult {
    let seed = cli.seed;
    let seed0 = seed.unwrap_or(0);
    match cli.command {
        Command::Ingest { input, out, dedup_hosts, subset: spec } => {
            let mut data = load_dataset_dir(&input, dedup_hosts)?;
            if let Some(s) = spec {
                data = subset(&data, &parse_spec(&s)?, seed0)?;
            }
            write_dataset_dir(&data, &out)?;
            println!("ingested {}", describe(&data));
        }
        Command::Synth { spec, out } => {
            let data = synth_dataset(&parse_spec(&spec)?, seed0)?;
            write_dataset_dir(&data, &out)?;
            println!("wrote {} to {}", describe(&data), out.display());
        }
        Command::Split { data, folds, out } => {
            let data = load_dataset_dir(&data, false)?;
            for (i, fold) in stratified_folds(&data, folds, seed0)?.iter().enumerate() {
                let dir = out.join(format!("fold-{i}"));
                write_dataset_dir(&fold.train, &dir.join("train"))?;
                write_dataset_dir(&fold.test, &dir.join("test"))?;
                println!("fold {i}: train {} test {}", describe(&fold.train), describe(&fold.test));
            }
        }
        Command::Train { data, classifier, out, config } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let mut ccfg = cfg.classifier_config(0);
            ccfg.seed = seed.unwrap_or(cfg.seed);
            let data = load_dataset_dir(&data, cfg.dedup_hosts)?;
            let model = classifiers::train(classifier, &data, &ccfg)?;
            model.save(&out)?;
            println!(
                "trained {} on {}: {} units, config {}",
                classifier.name(),
                describe(&data),
                model.unit_count(),
                model.config_hash()
            );
        }
        Command::Score { model, data, out, po, r } => score(&model, &data, out.as_deref(), &po, &r)?,
        Command::Sweep { source, out, workers } => {
            let (mut cfg, data) = source.load(seed)?;
            if workers.is_some() {
                cfg.workers = workers;
            }
            let res = run_experiment(&cfg, &data)?;
            let records = res.records(&cfg);
            append_results(&out, &records)?;
            let best = records.iter().filter(|r| r.best).count();
            println!("{} rows ({} best) from {} written to {}", records.len(), best, describe(&data), out.display());
        }
        Command::Curve { source, classifier, n, out } => {
            let (cfg, data) = source.load(seed)?;
            let points = openworld_size_curve(&cfg, &data, classifier, &n)?;
            let rows: Vec<SweepRow> = points
                .iter()
                .map(|p| SweepRow {
                    classifier: classifier.name().to_string(),
                    po: "openworld_size".into(),
                    params: format!("N={}", p.n),
                    counts: p.counts,
                })
                .collect();
            for p in points.iter().filter(|p| p.degenerate) {
                eprintln!("note: N={} trains no background class", p.n);
            }
            append_results(&out, &estimate_rows(&rows, &cfg.r_values, cfg.recall_floor, cfg.z))?;
            println!("{} curve points written to {}", rows.len(), out.display());
        }
        Command::Select { source, classifier, s, trials } => {
            let (cfg, data) = source.load(seed)?;
            let pool = build_pool(&cfg, &data, classifier, PoChoice::Baseline)?;
            println!("S,po,no_po,random");
            for s in s {
                let po = selection_scenario(&pool.truths, &pool, SelectionMode::Po, s, trials, cfg.seed)?;
                let no = selection_scenario(&pool.truths, &pool, SelectionMode::NoPo, s, trials, cfg.seed)?;
                println!("{s},{po},{no},{}", 1.0 / s as f64);
            }
        }
        Command::Identify { source, classifier, b, n_obs, m_identify, max_false, trials, po } => {
            let (cfg, data) = source.load(seed)?;
            let pool = build_pool(&cfg, &data, classifier, po.choice())?;
            let (m, o) = match m_identify {
                Some(m) => (m, identify_client(&pool.truths, &pool, b, n_obs, m, trials, cfg.seed)?),
                None => calibrate_identify(&pool.truths, &pool, b, n_obs, max_false, trials, cfg.seed)?,
            };
            println!("m_identify,detection,false_identification");
            println!("{m},{},{}", o.detection, o.false_identification);
        }
        Command::Defend { input, out, config } => {
            let cfg = DefenseConfig::load(&config)?;
            let data = load_dataset_dir(&input, false)?;
            let defended = defend_dataset(&data, &cfg, seed0)?;
            let (mut bw, mut time, mut timed) = (0.0, 0.0, 0usize);
            for ((_, a), (_, b)) in data.elements().zip(defended.elements()) {
                let o = measure_overhead(a, b);
                bw += o.bandwidth;
                if let Some(t) = o.time {
                    time += t;
                    timed += 1;
                }
            }
            write_dataset_dir(&defended, &out)?;
            let n = data.len().max(1) as f64;
            println!(
                "{} applied to {}: mean bandwidth overhead {:.4}, mean time overhead {:.4}",
                cfg.name(),
                describe(&data),
                bw / n,
                if timed > 0 { time / timed as f64 } else { 0.0 }
            );
        }
        Command::Report { kind, inputs, out, classifier, r, k, m_match, dist, n_p, n_n } => {
            let mut spec = ReportSpec::new(kind, inputs, out);
            spec.classifier = classifier;
            spec.r = r;
            spec.k = k;
            spec.m_match = m_match;
            spec.dist = dist;
            spec.bound = BoundSpec { n_p, n_n, r: r.unwrap_or(1000.0), ..BoundSpec::default() };
            for f in render(&spec)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn score(model: &Path, data: &Path, out: Option<&Path>, po: &PoArgs, r_values: &[f64]) -> CliResult {
    let model = TrainedModel::load(model)?;
    let data = load_dataset_dir(data, false)?;
    let elements: Vec<_> = data.elements().collect();
    let seqs: Vec<_> = elements.iter().map(|e| e.1).collect();
    let matches = model.match_many(&seqs);
    let mut csv = String::from("element,origin,truth,top,decision\n");
    let mut pairs = Vec::with_capacity(elements.len());
    for (i, ((truth, seq), m)) in elements.iter().zip(&matches).enumerate() {
        let top = m.top();
        let decision = match (po.m_match, top) {
            (Some(mm), Label::Monitored(_)) => confidence_po(&scale_matches(m)?, po.k, mm)?.label(),
            _ => top,
        };
        writeln!(csv, "{i},{},{truth},{top},{decision}", seq.origin().unwrap_or("-")).unwrap();
        pairs.push((*truth, decision));
    }
    if let Some(path) = out {
        fs::write(path, csv)?;
    }
    print!("{}", estimate_lines(&tally(pairs), r_values, wfprecision::metrics::Z95));
    Ok(())
}
