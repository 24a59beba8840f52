use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use interleave::eval::{self, CommandJudge, EvalRecord, FluencyJudge, HeuristicJudge, Report};
use interleave::format;
use interleave::grpo::{self, ToyConfig};
use interleave::latency::{self, MaskingReport, RateConfig, SimSummary, Timeline};
use interleave::pipeline::{PairingConfig, Pipeline, RawSample};
use interleave::reward::{GroupSample, LqConfig, RewardBreakdown, RewardConfig, RewardEngine, RewardWeights, TaConfig};
use interleave::scorer::NGramModel;

const CONFIG_ENV: &str = "INTERLEAVE_CONFIG";

#[derive(Parser)]
#[command(name = "interleave", version, about = "Build, score and analyse interleaved thinking/answer streams")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the format of every `sequence_raw` in a JSONL file.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Turn reasoning chains and summaries into interleaved sequences.
    Build(BuildArgs),
    /// Reference language model.
    Scorer {
        #[command(subcommand)]
        command: ScorerCommand,
    },
    /// Compute rewards for groups of sampled responses.
    Score(ScoreArgs),
    /// Train the toy length policy.
    TrainToy(TrainToyArgs),
    /// Simulate playback timelines.
    Simulate(SimulateArgs),
    /// Aggregate evaluation records into a report.
    Eval(EvalArgs),
    /// Render a JSON report as markdown.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum ScorerCommand {
    /// Train an n-gram model on a text corpus, one sentence per line.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scorer: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainToyArgs {
    #[arg(long)]
    l_target: Option<usize>,
    #[arg(long)]
    group: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace output; written as `<stem>.csv` and `<stem>.json`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    gen_rate: Option<f64>,
    #[arg(long)]
    play_rate: Option<f64>,
    #[arg(long)]
    overhead: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeKind {
    Heuristic,
    External,
    None,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = JudgeKind::Heuristic)]
    judge: JudgeKind,
    /// Add a latency section using the configured rates.
    #[arg(long)]
    latency: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GrpoSettings {
    group_size: usize,
    iterations: usize,
    lr: f64,
    seed: u64,
    epsilon: f64,
}

impl Default for GrpoSettings {
    fn default() -> Self {
        let t = ToyConfig::default();
        GrpoSettings {
            group_size: t.group_size,
            iterations: t.iterations,
            lr: t.lr,
            seed: t.seed,
            epsilon: t.epsilon,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PathSettings {
    scorer_model: Option<PathBuf>,
    corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AppConfig {
    pairing: PairingConfig,
    ta: TaConfig,
    lq: LqConfig,
    weights: RewardWeights,
    rates: RateConfig,
    grpo: GrpoSettings,
    paths: PathSettings,
    judge: CommandJudge,
}

impl AppConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(AppConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: AppConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.pairing.validate()?;
        self.ta.validate()?;
        self.lq.validate()?;
        self.weights.validate()?;
        self.rates.validate()?;
        self.toy_config().validate()?;
        Ok(())
    }

    fn toy_config(&self) -> ToyConfig {
        ToyConfig {
            l_target: self.ta.l_target,
            group_size: self.grpo.group_size,
            iterations: self.grpo.iterations,
            lr: self.grpo.lr,
            seed: self.grpo.seed,
            epsilon: self.grpo.epsilon,
            ..ToyConfig::default()
        }
    }
}

/// Failure classes, mapped to exit codes 2 and 1.
enum Failure {
    Config(anyhow::Error),
    Input(anyhow::Error),
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn input(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn distinct_output(input: &Path, out: &Path) -> Result<()> {
    let same = match (fs::canonicalize(input), fs::canonicalize(out)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        bail!("output {} would overwrite the input", out.display());
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct StreamRecord {
    #[serde(default)]
    id: String,
    sequence_raw: String,
}

fn validate_cmd(input: &Path) -> Result<(), Failure> {
    let records: Vec<StreamRecord> = read_jsonl(input).input()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut bad = 0;
    for (i, r) in records.iter().enumerate() {
        let id = if r.id.is_empty() { format!("#{}", i + 1) } else { r.id.clone() };
        let report = format::validate(&r.sequence_raw);
        if report.is_valid() {
            writeln!(out, "OK {id}").input()?;
        } else {
            bad += 1;
            writeln!(out, "INVALID {id}: {report}").input()?;
        }
    }
    if bad > 0 {
        return Err(Failure::Input(anyhow!("{bad} of {} records are malformed", records.len())));
    }
    Ok(())
}

fn build_cmd(cfg: &AppConfig, args: &BuildArgs) -> Result<(), Failure> {
    let mut pairing = cfg.pairing.clone();
    if let Some(r) = args.ratio {
        pairing.target_ratio = r;
    }
    if let Some(t) = args.tolerance {
        pairing.ratio_tolerance = t;
    }
    let pipeline = Pipeline::new(pairing).config()?;
    distinct_output(&args.input, &args.out).config()?;
    let samples: Vec<RawSample> = read_jsonl(&args.input).input()?;
    let mut built = Vec::with_capacity(samples.len());
    let mut failed = 0;
    for s in &samples {
        match pipeline.build(s) {
            Ok(b) => {
                if !b.ratio_report.within_tolerance {
                    eprintln!(
                        "{}: ratio {:.2} outside tolerance (short pairs {:?})",
                        s.id, b.ratio_report.global_ratio, b.ratio_report.shortfall_pairs
                    );
                }
                built.push(b);
            }
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", s.id);
            }
        }
    }
    write_jsonl(&args.out, &built).input()?;
    if failed > 0 {
        return Err(Failure::Input(anyhow!("{failed} of {} samples could not be built", samples.len())));
    }
    Ok(())
}

fn scorer_train_cmd(
    cfg: &AppConfig,
    corpus: Option<&Path>,
    order: usize,
    alpha: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let corpus = corpus
        .or(cfg.paths.corpus.as_deref())
        .ok_or_else(|| anyhow!("no corpus given (--corpus or paths.corpus)"))
        .config()?;
    let out = out
        .or(cfg.paths.scorer_model.as_deref())
        .ok_or_else(|| anyhow!("no output path given (--out or paths.scorer_model)"))
        .config()?;
    distinct_output(corpus, out).config()?;
    let text = fs::read_to_string(corpus).with_context(|| format!("reading {}", corpus.display())).input()?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let model = NGramModel::train(&lines, order, alpha).input()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).input()?;
    }
    model.save(out).input()?;
    eprintln!("trained order-{order} model on {} sentences, vocabulary {}", lines.len(), model.vocab_size());
    Ok(())
}

#[derive(Deserialize)]
struct ScoreRecord {
    id: String,
    question: String,
    sequence_raw: String,
    ground_truth: String,
    /// Samples sharing a group are compared with each other; defaults to
    /// the question text.
    #[serde(default)]
    group: Option<String>,
}

#[derive(Serialize)]
struct ScoredRecord<'a> {
    id: &'a str,
    group: &'a str,
    question: &'a str,
    sequence_raw: &'a str,
    ground_truth: &'a str,
    format_valid: bool,
    predicted: Option<&'a str>,
    normalized_loglik: Option<f64>,
    rewards: &'a RewardBreakdown,
}

fn score_cmd(cfg: &AppConfig, args: &ScoreArgs) -> Result<(), Failure> {
    let path = args
        .scorer
        .as_deref()
        .or(cfg.paths.scorer_model.as_deref())
        .ok_or_else(|| anyhow!("no scorer model given (--scorer or paths.scorer_model)"))
        .config()?;
    distinct_output(&args.input, &args.out).config()?;
    let model = NGramModel::load(path).input()?;
    let reward_cfg = RewardConfig {
        weights: cfg.weights,
        ta: cfg.ta,
        lq: cfg.lq,
    };
    let engine = RewardEngine::new(reward_cfg, &model).config()?;
    let records: Vec<ScoreRecord> = read_jsonl(&args.input).input()?;

    let key = |r: &ScoreRecord| r.group.clone().unwrap_or_else(|| r.question.clone());
    let mut order: Vec<String> = Vec::new();
    let mut members: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let k = key(r);
        members
            .entry(k.clone())
            .or_insert_with(|| {
                order.push(k);
                Vec::new()
            })
            .push(i);
    }

    let mut scored: Vec<Option<GroupSample>> = vec![None; records.len()];
    for k in &order {
        let idx = &members[k];
        let mut group: Vec<GroupSample> = idx
            .iter()
            .map(|&i| GroupSample::new(&records[i].id, &records[i].sequence_raw, &records[i].ground_truth))
            .collect();
        if group.len() < 2 {
            eprintln!("warning: group `{k}` has one sample; its quality reward is 0");
            let rewards = engine.score_single(&group[0]);
            group[0].rewards = Some(rewards);
        } else {
            engine.score_group(&records[idx[0]].question, &mut group).input()?;
        }
        for (&i, s) in idx.iter().zip(group) {
            scored[i] = Some(s);
        }
    }

    let rows: Vec<ScoredRecord> = records
        .iter()
        .zip(&scored)
        .map(|(r, s)| {
            let s = s.as_ref().expect("every record belongs to a group");
            ScoredRecord {
                id: &r.id,
                group: r.group.as_deref().unwrap_or(&r.question),
                question: &r.question,
                sequence_raw: &r.sequence_raw,
                ground_truth: &r.ground_truth,
                format_valid: s.parsed.is_some(),
                predicted: s.predicted.as_deref(),
                normalized_loglik: s.normalized_loglik,
                rewards: s.rewards.as_ref().expect("scored"),
            }
        })
        .collect();
    write_jsonl(&args.out, &rows).input()
}

fn train_toy_cmd(cfg: &AppConfig, args: &TrainToyArgs) -> Result<(), Failure> {
    let mut toy = cfg.toy_config();
    if let Some(v) = args.l_target {
        toy.l_target = v;
    }
    if let Some(v) = args.group {
        toy.group_size = v;
    }
    if let Some(v) = args.iters {
        toy.iterations = v;
    }
    if let Some(v) = args.lr {
        toy.lr = v;
    }
    if let Some(v) = args.seed {
        toy.seed = v;
    }
    toy.validate().config()?;
    let (policy, trace) = grpo::train_toy(&toy).input()?;

    if let Some(path) = &args.trace {
        let mut w = csv::Writer::from_writer(create(&path.with_extension("csv")).input()?);
        for r in &trace.records {
            w.serialize(r).input()?;
        }
        w.flush().input()?;
        write_json(&path.with_extension("json"), &trace).input()?;
    }

    #[derive(Serialize)]
    struct Summary {
        l_target: usize,
        iterations: usize,
        final_mu: f64,
        final_sigma: f64,
        running_mean_mu: f64,
        final_mean_reward: f64,
    }
    let summary = Summary {
        l_target: toy.l_target,
        iterations: toy.iterations,
        final_mu: policy.mu,
        final_sigma: policy.sigma(),
        running_mean_mu: trace.running_mean_mu(100),
        final_mean_reward: trace.records.last().map_or(0.0, |r| r.mean_reward),
    };
    println!("{}", serde_json::to_string(&summary).input()?);
    Ok(())
}

#[derive(Serialize)]
struct SimulatedSample {
    id: String,
    timeline: Timeline,
    masking: MaskingReport,
}

#[derive(Serialize)]
struct SimulationOutput {
    rates: RateConfig,
    max_maskable_ratio: f64,
    samples: Vec<SimulatedSample>,
    skipped: Vec<String>,
    summary: Option<SimSummary>,
}

fn simulate_cmd(cfg: &AppConfig, args: &SimulateArgs) -> Result<(), Failure> {
    let mut rates = cfg.rates;
    if let Some(v) = args.gen_rate {
        rates.gen_rate = v;
    }
    if let Some(v) = args.play_rate {
        rates.playback_rate = v;
    }
    if let Some(v) = args.overhead {
        rates.ttft_overhead = v;
    }
    rates.validate().config()?;
    distinct_output(&args.input, &args.out).config()?;
    let records: Vec<StreamRecord> = read_jsonl(&args.input).input()?;

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let id = if r.id.is_empty() { format!("#{}", i + 1) } else { r.id.clone() };
        match format::parse(&r.sequence_raw) {
            Ok(seq) => samples.push(SimulatedSample {
                id,
                timeline: latency::simulate(&seq, &rates),
                masking: latency::check_masking(&seq, &rates),
            }),
            Err(report) => {
                eprintln!("{id}: skipped, {report}");
                skipped.push(id);
            }
        }
    }
    let timelines: Vec<Timeline> = samples.iter().map(|s| s.timeline.clone()).collect();
    let summary = latency::summarize(&timelines);

    println!("| id | ttft | total_stall | stalls | fully_masked |");
    println!("|---|---:|---:|---:|---|");
    for s in &samples {
        println!(
            "| {} | {:.3} | {:.3} | {} | {} |",
            s.id,
            s.timeline.ttft,
            s.timeline.total_stall(),
            s.timeline.stalls.len(),
            s.masking.fully_masked
        );
    }
    if let Some(sum) = &summary {
        println!(
            "\n{} samples, mean ttft {:.3}s, mean stall {:.3}s, max stall {:.3}s, fully masked {:.1}%",
            sum.samples,
            sum.mean_ttft,
            sum.mean_total_stall,
            sum.max_total_stall,
            100.0 * sum.fully_masked_fraction
        );
    }
    let n_skipped = skipped.len();
    let output = SimulationOutput {
        max_maskable_ratio: latency::max_maskable_ratio(&rates),
        rates,
        samples,
        skipped,
        summary,
    };
    write_json(&args.out, &output).input()?;
    if n_skipped > 0 {
        return Err(Failure::Input(anyhow!("{n_skipped} malformed sequences skipped")));
    }
    Ok(())
}

fn eval_cmd(cfg: &AppConfig, args: &EvalArgs) -> Result<(), Failure> {
    let records: Vec<EvalRecord> = read_jsonl(&args.input).input()?;
    let heuristic = HeuristicJudge::default();
    let judge: Option<&dyn FluencyJudge> = match args.judge {
        JudgeKind::Heuristic => Some(&heuristic),
        JudgeKind::External => {
            if cfg.judge.program.is_empty() {
                return Err(Failure::Config(anyhow!("external judge selected but `judge.program` is not configured")));
            }
            Some(&cfg.judge)
        }
        JudgeKind::None => None,
    };
    let rates = args.latency.then_some(&cfg.rates);
    let report = eval::evaluate(&records, judge, rates).input()?;
    fs::create_dir_all(&args.out).input()?;
    fs::write(args.out.join("report.json"), eval::render_json(&report).input()?).input()?;
    fs::write(args.out.join("report.md"), eval::render_markdown(&report)).input()?;
    Ok(())
}

fn report_cmd(input: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display())).input()?;
    let report: Report = serde_json::from_str(&text).input()?;
    let md = eval::render_markdown(&report);
    match out {
        Some(path) => {
            distinct_output(input, path).config()?;
            fs::write(path, md).input()
        }
        None => io::stdout().write_all(md.as_bytes()).input(),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = AppConfig::load(cli.config.as_deref()).config()?;
    match &cli.command {
        Command::Validate { input } => validate_cmd(input),
        Command::Build(args) => build_cmd(&cfg, args),
        Command::Scorer {
            command: ScorerCommand::Train { corpus, order, alpha, out },
        } => scorer_train_cmd(&cfg, corpus.as_deref(), *order, *alpha, out.as_deref()),
        Command::Score(args) => score_cmd(&cfg, args),
        Command::TrainToy(args) => train_toy_cmd(&cfg, args),
        Command::Simulate(args) => simulate_cmd(&cfg, args),
        Command::Eval(args) => eval_cmd(&cfg, args),
        Command::Report { input, out } => report_cmd(input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
