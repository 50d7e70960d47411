//! The `tokprobe` command line.
//!
//! Exit codes: 0 on success, 1 when a computation or input-data error occurs,
//! 2 on usage errors (bad flags, missing paths, invalid simulation specs).

mod svg;

pub use svg::{plot_data_from_report, render_svg_lines, PlotData, PlotValue, Series};

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::alignment::{parse_segments_csv, write_segments_csv, WordSegment};
use crate::error::ProbeError;
use crate::lexicon::{build_pairs, parse_cmudict, parse_synonyms_tsv, PairConfig, PairSet, PairSets, Setting};
use crate::metrics::{CcaParams, DEFAULT_EPS, DEFAULT_PERMUTATIONS, DEFAULT_VAR_KEEP};
use crate::probe::{
    report_bytes, run_cka_probe, run_distance_probe, run_vtd_probe_speakers, CkaConfig, DistanceProvenance,
    FeatureDescriptor, Report, ReportFormat, VtdConfig, VtdTrack,
};
use crate::rvq_sim::{synth_corpus, SynthSpec};
use crate::tensor_io::{read_fmx_file, read_stack_file, stack_files};

#[derive(Debug, Parser)]
#[command(
    name = "tokprobe",
    version,
    about = "Semantic/phonetic probing of speech-tokenizer layers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build synonym / near-homophone / speaker / random word pairs as JSONL.
    Pairs(PairsArgs),
    /// Run a probing protocol and write its report.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Generate a synthetic bundle (features, segments, lexicon, synonyms).
    Simulate(SimulateArgs),
    /// Render a distance or PWCCA report as an SVG line plot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct PairResources {
    #[arg(long)]
    pub cmudict: PathBuf,
    #[arg(long)]
    pub synonyms: PathBuf,
    #[arg(long)]
    pub segments: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_pairs: usize,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[command(flatten)]
    pub resources: PairResources,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the output file extension, else JSON.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

impl OutputArgs {
    fn format(&self) -> ReportFormat {
        match self.format {
            Some(FormatArg::Csv) => ReportFormat::Csv,
            Some(FormatArg::Json) => ReportFormat::Json,
            None if self.out.extension().is_some_and(|e| e == "csv") => ReportFormat::Csv,
            None => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Word-pair Euclidean distance probe.
    Distance(DistanceArgs),
    /// PWCCA between codec layers and VTD tracks.
    Pwcca(PwccaArgs),
    /// Linear CKA between paired speech and text features.
    Cka(CkaArgs),
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// Layer-stack manifest(s); segments resolve by utterance_id == source_id.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Pairs JSONL from `tokprobe pairs`.
    #[arg(long, conflicts_with_all = ["cmudict", "synonyms", "segments"])]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub cmudict: Option<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long, default_value_t = 0.4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_pairs: usize,
    /// Required when pairs are built from resources.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PwccaArgs {
    /// One manifest per speaker, matched positionally with --vtd.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub vtd: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VAR_KEEP)]
    pub var_keep: f64,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    /// Also report pwcca with the VTD track as the weighting side.
    #[arg(long)]
    pub both_directions: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CkaArgs {
    #[arg(long)]
    pub speech: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// A distance or PWCCA report (JSON or CSV).
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Which distance curve to draw.
    #[arg(long, value_enum, default_value = "normalized")]
    pub value: PlotValue,
}

/// A failed command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn compute(context: impl std::fmt::Display) -> impl FnOnce(ProbeError) -> CliError {
    move |e| match e {
        ProbeError::InvalidSpec { .. } => CliError::Usage(format!("{context}: {e}")),
        other => CliError::Compute(format!("{context}: {other}")),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn require_out_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::Usage(format!(
            "output directory does not exist: {}",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Compute(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Compute(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.flush().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    setting: Setting,
    a: WordSegment,
    b: WordSegment,
}

fn load_pair_resources(r: &PairResources, seed: u64) -> CliResult<(Vec<WordSegment>, PairSets, PairConfig)> {
    let lexicon = parse_cmudict(&read_text(&r.cmudict)?).map_err(compute(r.cmudict.display()))?;
    let synonyms = parse_synonyms_tsv(&read_text(&r.synonyms)?).map_err(compute(r.synonyms.display()))?;
    let segments = parse_segments_csv(&read_text(&r.segments)?).map_err(compute(r.segments.display()))?;
    let config = PairConfig {
        homophone_threshold: r.threshold,
        max_pairs_per_setting: r.max_pairs,
        random_seed: seed,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let pairs = build_pairs(&lexicon, &synonyms, &segments, &config).map_err(compute("building pairs"))?;
    Ok((segments, pairs, config))
}

fn pairs_jsonl(segments: &[WordSegment], pairs: &PairSets) -> Vec<u8> {
    let mut out = Vec::new();
    for set in pairs.sets.values() {
        for &(a, b) in &set.pairs {
            let record = PairRecord {
                setting: set.setting,
                a: segments[a].clone(),
                b: segments[b].clone(),
            };
            serde_json::to_writer(&mut out, &record).expect("pair serializes");
            out.push(b'\n');
        }
    }
    out
}

fn read_pairs_jsonl(path: &Path) -> CliResult<(Vec<WordSegment>, PairSets)> {
    let text = read_text(path)?;
    let mut segments: Vec<WordSegment> = Vec::new();
    let mut index: HashMap<(String, String, u64, u64, String), usize> = HashMap::new();
    let mut sets: BTreeMap<Setting, PairSet> = Setting::ALL
        .into_iter()
        .map(|s| {
            (
                s,
                PairSet {
                    setting: s,
                    pairs: Vec::new(),
                    candidates: 0,
                },
            )
        })
        .collect();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Compute(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let mut id = |s: WordSegment| -> CliResult<usize> {
            s.validate()
                .map_err(|e| CliError::Compute(format!("{} line {}: {e}", path.display(), i + 1)))?;
            let key = (
                s.utterance_id.clone(),
                s.word.clone(),
                s.start_s.to_bits(),
                s.end_s.to_bits(),
                s.speaker_id.clone(),
            );
            Ok(*index.entry(key).or_insert_with(|| {
                segments.push(s);
                segments.len() - 1
            }))
        };
        let (a, b) = (id(record.a)?, id(record.b)?);
        sets.get_mut(&record.setting).unwrap().pairs.push((a, b));
    }
    for set in sets.values_mut() {
        set.candidates = set.pairs.len();
    }
    Ok((
        segments,
        PairSets {
            sets,
            excluded_words: 0,
            excluded_segments: 0,
        },
    ))
}

fn cmd_pairs(args: &PairsArgs) -> CliResult<()> {
    let r = &args.resources;
    require_file(&r.cmudict, "cmudict")?;
    require_file(&r.synonyms, "synonyms")?;
    require_file(&r.segments, "segments")?;
    require_out_parent(&args.out)?;
    let (segments, pairs, _) = load_pair_resources(r, args.seed)?;
    write_atomic(&args.out, &pairs_jsonl(&segments, &pairs))?;
    for set in pairs.sets.values() {
        println!("{}\t{}", set.setting, set.pairs.len());
    }
    if pairs.excluded_words > 0 {
        println!("excluded_words\t{}", pairs.excluded_words);
    }
    for s in pairs.empty_settings() {
        eprintln!("warning: setting {s} has no eligible pairs");
    }
    Ok(())
}

fn write_report_file(report: &Report, output: &OutputArgs) -> CliResult<()> {
    write_atomic(&output.out, &report_bytes(report, output.format()))
}

fn cmd_distance(args: &DistanceArgs) -> CliResult<()> {
    for m in &args.manifest {
        require_file(m, "manifest")?;
    }
    require_out_parent(&args.output.out)?;
    let (segments, pairs, provenance) = if let Some(path) = &args.pairs {
        require_file(path, "pairs")?;
        let (segments, pairs) = read_pairs_jsonl(path)?;
        (segments, pairs, DistanceProvenance::default())
    } else {
        let missing = |what: &str| CliError::Usage(format!("--{what} is required unless --pairs is given"));
        let resources = PairResources {
            cmudict: args.cmudict.clone().ok_or_else(|| missing("cmudict"))?,
            synonyms: args.synonyms.clone().ok_or_else(|| missing("synonyms"))?,
            segments: args.segments.clone().ok_or_else(|| missing("segments"))?,
            threshold: args.threshold,
            max_pairs: args.max_pairs,
        };
        let seed = args.seed.ok_or_else(|| missing("seed"))?;
        require_file(&resources.cmudict, "cmudict")?;
        require_file(&resources.synonyms, "synonyms")?;
        require_file(&resources.segments, "segments")?;
        let (segments, pairs, config) = load_pair_resources(&resources, seed)?;
        (
            segments,
            pairs,
            DistanceProvenance {
                pair_config: Some(config),
            },
        )
    };
    let stacks = args
        .manifest
        .iter()
        .map(|m| read_stack_file(m).map_err(compute(m.display())))
        .collect::<CliResult<Vec<_>>>()?;
    let report = run_distance_probe(&stacks, &segments, &pairs, &provenance).map_err(compute("distance probe"))?;
    write_report_file(&Report::Distance(report), &args.output)
}

fn cmd_pwcca(args: &PwccaArgs) -> CliResult<()> {
    if args.manifest.len() != args.vtd.len() {
        return Err(CliError::Usage(format!(
            "{} --manifest values but {} --vtd values",
            args.manifest.len(),
            args.vtd.len()
        )));
    }
    for (m, v) in args.manifest.iter().zip(&args.vtd) {
        require_file(m, "manifest")?;
        require_file(v, "vtd")?;
    }
    require_out_parent(&args.output.out)?;
    let config = VtdConfig {
        cca: CcaParams {
            var_keep: args.var_keep,
            eps: args.eps,
        },
        both_directions: args.both_directions,
    };
    let mut units = Vec::with_capacity(args.manifest.len());
    for (m, v) in args.manifest.iter().zip(&args.vtd) {
        let stack = read_stack_file(m).map_err(compute(m.display()))?;
        let matrix = read_fmx_file(v).map_err(compute(v.display()))?;
        let track = VtdTrack::new(matrix, stack.source_id.clone()).map_err(compute(v.display()))?;
        units.push((stack, track));
    }
    let report = run_vtd_probe_speakers(&units, &config).map_err(compute("pwcca probe"))?;
    write_report_file(&Report::Pwcca(report), &args.output)
}

fn cmd_cka(args: &CkaArgs) -> CliResult<()> {
    require_file(&args.speech, "speech features")?;
    require_file(&args.text, "text features")?;
    require_out_parent(&args.output.out)?;
    if args.permutations == 0 {
        return Err(CliError::Usage("--permutations must be at least 1".into()));
    }
    let speech = read_fmx_file(&args.speech)
        .map_err(compute(args.speech.display()))?
        .to_dmatrix();
    let text = read_fmx_file(&args.text)
        .map_err(compute(args.text.display()))?
        .to_dmatrix();
    let descriptors = (
        FeatureDescriptor::of(args.speech.display().to_string(), &speech),
        FeatureDescriptor::of(args.text.display().to_string(), &text),
    );
    let config = CkaConfig {
        permutations: args.permutations,
        seed: args.seed,
    };
    let report = run_cka_probe(&speech, &text, descriptors, &config).map_err(compute("cka probe"))?;
    write_report_file(&Report::Cka(report), &args.output)
}

pub const SIM_MANIFEST: &str = "manifest.json";
pub const SIM_SEGMENTS: &str = "segments.csv";
pub const SIM_CMUDICT: &str = "cmudict.txt";
pub const SIM_SYNONYMS: &str = "synonyms.tsv";

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    require_file(&args.spec, "spec")?;
    let spec = SynthSpec::from_json(&read_text(&args.spec)?).map_err(compute(args.spec.display()))?;
    let corpus = synth_corpus(&spec, args.seed).map_err(compute(args.spec.display()))?;

    let mut files = stack_files(&corpus.stack, SIM_MANIFEST);
    files.push((SIM_SEGMENTS.into(), write_segments_csv(&corpus.segments).into_bytes()));
    files.push((SIM_CMUDICT.into(), corpus.lexicon.to_cmudict().into_bytes()));
    files.push((SIM_SYNONYMS.into(), corpus.synonyms.to_tsv().into_bytes()));

    fs::create_dir_all(&args.out).map_err(|e| CliError::Compute(format!("creating {}: {e}", args.out.display())))?;
    for (name, bytes) in &files {
        write_atomic(&args.out.join(name), bytes)?;
    }
    println!(
        "wrote {} files to {} ({} layers, {} segments)",
        files.len(),
        args.out.display(),
        corpus.stack.num_layers(),
        corpus.segments.len()
    );
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> CliResult<()> {
    require_file(&args.report, "report")?;
    require_out_parent(&args.out)?;
    let text = read_text(&args.report)?;
    let data = plot_data_from_report(&text, args.value).map_err(compute(args.report.display()))?;
    write_atomic(&args.out, render_svg_lines(&data).as_bytes())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Pairs(a) => cmd_pairs(a),
        Command::Probe(ProbeCommand::Distance(a)) => cmd_distance(a),
        Command::Probe(ProbeCommand::Pwcca(a)) => cmd_pwcca(a),
        Command::Probe(ProbeCommand::Cka(a)) => cmd_cka(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\nFor usage, run `tokprobe --help`.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
