//! Command-line front end. Every subcommand reads an optional JSON run
//! config (`--config`) and applies its flags on top of it.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use diachron::categorize::{fit_log_curve, trajectory, write_trajectory_csv};
use diachron::change::{
    average_series, fit_mixed_model, normalize_changes, semantic_change, write_change_csv, FrequencySource,
    SliceFrequencies,
};
use diachron::compass::{load_model, DiachronicModel, TrainingMode};
use diachron::corpus::{ingest_transcripts, load_proper_nouns, AgeRange, IngestOptions, SpeakerFilter};
use diachron::pipeline::{compare_modes, run_pipeline, write_mode_comparison, AnalysisToggles, RunConfig, RunManifest};
use diachron::probes::{common_vocabulary, intersect_probes, Family, ProbeLexicon};
use diachron::rsa::{nearest_neighbors, rsa_compare_averaged, write_rsa_csv};
use diachron::viz::{project, write_centroid_csv, write_projection_csv, TsneInit};
use diachron::warning::Warning;
use diachron::{Error, Result};

#[derive(Parser)]
#[command(
    name = "diachron",
    version,
    about = "Diachronic word embeddings for month-sliced child-language corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and slice transcripts; prints a per-speaker corpus summary.
    Ingest(Common),
    /// Train and save models for every speaker, mode and seed.
    Train(Common),
    /// Balanced-accuracy trajectories and log fits for saved models.
    Categorize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Semantic change and the frequency mixed model.
    Change {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: SpeakerPair,
        /// Model whose change is measured (several seeds are averaged).
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
    },
    /// Child-vs-adult representational similarity per month.
    Rsa {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: SpeakerPair,
    },
    /// Nearest probe words of query words.
    Neighbors {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "word", required = true)]
        words: Vec<String>,
        /// Defaults to the last trained month.
        #[arg(long)]
        month: Option<u32>,
    },
    /// t-SNE projection of the probe words at one month.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        month: Option<u32>,
    },
    /// The full ingest, train, analyze workflow with a manifest.
    Pipeline(Common),
    /// Incremental vs. non-incremental balanced accuracy for a finished run.
    CompareModes {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Saved model directory; repeat for several models.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
}

#[derive(Args)]
struct SpeakerPair {
    /// Child-speech model directory; repeat for several seeds.
    #[arg(long = "child-model", required = true)]
    child: Vec<PathBuf>,
    /// Child-directed-speech model directory; repeat for several seeds.
    #[arg(long = "adult-model", required = true)]
    adult: Vec<PathBuf>,
}

/// Flags mirroring run-config keys.
#[derive(Args)]
struct Common {
    /// JSON run config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    proper_nouns: Option<PathBuf>,
    #[arg(long)]
    probes: Option<PathBuf>,
    /// child, adult or combined.
    #[arg(long, value_delimiter = ',')]
    speakers: Vec<SpeakerFilter>,
    #[arg(long)]
    min_age: Option<u32>,
    #[arg(long)]
    max_age: Option<u32>,
    /// incremental or non_incremental.
    #[arg(long, value_delimiter = ',')]
    modes: Vec<TrainingMode>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    slice_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    subsample_threshold: Option<f64>,
    /// Training threads per model; above 1 training is not reproducible.
    #[arg(long)]
    workers: Option<usize>,
    /// Enabled analyses, e.g. `categorize,change`; `none` disables all.
    #[arg(long, value_delimiter = ',')]
    analyses: Vec<String>,
    #[arg(long)]
    per_slice_min_count: Option<u64>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    rsa_seed: Option<u64>,
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    tsne_iterations: Option<usize>,
    #[arg(long)]
    tsne_seed: Option<u64>,
    #[arg(long)]
    pca_init: bool,
    #[arg(long)]
    clip_k: Option<f64>,
    #[arg(long)]
    neighbor_k: Option<usize>,
    /// Run or output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if !self.corpus.is_empty() {
            c.corpus = self.corpus.clone();
        }
        if self.proper_nouns.is_some() {
            c.proper_nouns = self.proper_nouns.clone();
        }
        if self.probes.is_some() {
            c.probes = self.probes.clone();
        }
        if !self.speakers.is_empty() {
            c.speakers = self.speakers.clone();
        }
        if self.min_age.is_some() || self.max_age.is_some() {
            c.age_range = AgeRange::new(
                self.min_age.unwrap_or(c.age_range.min_months),
                self.max_age.unwrap_or(c.age_range.max_months),
            )?;
        }
        if !self.modes.is_empty() {
            c.modes = self.modes.clone();
        }
        if !self.seeds.is_empty() {
            c.seeds = self.seeds.clone();
        }
        let t = &mut c.compass.train;
        set(&mut t.dim, self.dim);
        set(&mut t.window, self.window);
        set(&mut t.negatives, self.negatives);
        set(&mut t.epochs, self.epochs);
        set(&mut t.initial_learning_rate, self.learning_rate);
        set(&mut t.min_count, self.min_count);
        set(&mut t.subsample_threshold, self.subsample_threshold);
        set(&mut t.workers, self.workers);
        if self.slice_epochs.is_some() {
            c.compass.slice_epochs = self.slice_epochs;
        }
        if !self.analyses.is_empty() {
            c.analyses = parse_toggles(&self.analyses)?;
        }
        let a = &mut c.analysis;
        set(&mut a.per_slice_min_count, self.per_slice_min_count);
        set(&mut a.rsa.permutations, self.permutations);
        set(&mut a.rsa.seed, self.rsa_seed);
        set(&mut a.tsne.perplexity, self.perplexity);
        set(&mut a.tsne.iterations, self.tsne_iterations);
        set(&mut a.tsne.seed, self.tsne_seed);
        if self.pca_init {
            a.tsne.init = TsneInit::Pca;
        }
        set(&mut a.clip_k, self.clip_k);
        set(&mut a.neighbor_k, self.neighbor_k);
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        set(&mut c.jobs, self.jobs);
        Ok(c)
    }

    fn families(&self) -> Vec<Family> {
        match self.family {
            Some(f) => vec![f],
            None => Family::ALL.to_vec(),
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_toggles(names: &[String]) -> Result<AnalysisToggles> {
    let mut t = AnalysisToggles::none();
    for name in names {
        match name.as_str() {
            "none" => {}
            "all" => t = AnalysisToggles::default(),
            "categorize" => t.categorize = true,
            "change" => t.change = true,
            "rsa" => t.rsa = true,
            "viz" => t.viz = true,
            "neighbors" => t.neighbors = true,
            other => return Err(Error::Config(format!("unknown analysis {other:?}"))),
        }
    }
    Ok(t)
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<DiachronicModel>> {
    dirs.iter().map(|d| load_model(d)).collect()
}

/// The lexicon restricted to words frequent in every slice of every model.
fn probe_set(config: &RunConfig, models: &[&DiachronicModel], warnings: &mut Vec<Warning>) -> Result<ProbeLexicon> {
    let path = config
        .probes
        .as_deref()
        .ok_or_else(|| Error::Config("--probes is required".into()))?;
    let lexicon = ProbeLexicon::load_csv(path)?;
    let mut common: Option<BTreeSet<String>> = None;
    for m in models {
        let words = common_vocabulary(m, config.analysis.per_slice_min_count);
        common = Some(match common {
            Some(c) => c.intersection(&words).cloned().collect(),
            None => words,
        });
    }
    let (probes, w) = intersect_probes(&lexicon, &common.unwrap_or_default());
    warnings.extend(w);
    Ok(probes)
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output_dir()?;
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    Ok(dir)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| io_error(path, e))?;
    std::fs::write(path, buf).map_err(|e| io_error(path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, |out| writeln!(out, "{text}"))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn last_month(model: &DiachronicModel) -> Result<u32> {
    model
        .trained_months()
        .last()
        .copied()
        .ok_or_else(|| Error::Model("model has no trained slices".into()))
}

fn stem(model: &DiachronicModel) -> String {
    let mode = model.mode().map_or("untrained", TrainingMode::as_str);
    format!("{}_{}_seed{}", model.speaker(), mode, model.seed())
}

fn run(command: Command) -> Result<Vec<Warning>> {
    let mut warnings = Vec::new();
    match command {
        Command::Ingest(common) => {
            let config = common.run_config()?;
            if config.corpus.is_empty() {
                return Err(Error::Config("no corpus files given".into()));
            }
            let proper_nouns = match &config.proper_nouns {
                Some(p) => load_proper_nouns(p)?,
                None => BTreeSet::new(),
            };
            let summaries = config
                .speakers
                .iter()
                .map(|&speaker| {
                    let options = IngestOptions {
                        speaker_filter: speaker,
                        age_range: config.age_range,
                        proper_nouns: proper_nouns.clone(),
                    };
                    Ok(ingest_transcripts(&config.corpus, &options)?.summary())
                })
                .collect::<Result<Vec<_>>>()?;
            print_json(&summaries)?;
        }
        Command::Train(common) => {
            let mut config = common.run_config()?;
            config.analyses = AnalysisToggles::none();
            report(&run_pipeline(&config)?, &config)?;
        }
        Command::Pipeline(common) => {
            let config = common.run_config()?;
            report(&run_pipeline(&config)?, &config)?;
        }
        Command::Categorize { common, models } => {
            let config = common.run_config()?;
            let models = load_all(&models.models)?;
            let probes = probe_set(&config, &models.iter().collect::<Vec<_>>(), &mut warnings)?;
            let mut rows = Vec::new();
            let mut fits = Vec::new();
            for model in &models {
                for family in common.families() {
                    let t = trajectory(model, family, probes.family(family))?;
                    fits.push(serde_json::json!({
                        "family": family,
                        "speaker": t.speaker,
                        "mode": t.mode,
                        "seed": t.seed,
                        "fit": fit_log_curve(&t)?,
                    }));
                    rows.push(t);
                }
            }
            let dir = output_dir(&config)?;
            write_file(&dir.join("trajectories.csv"), |out| write_trajectory_csv(out, &rows))?;
            write_json(&dir.join("fits.json"), &fits)?;
        }
        Command::Change { common, pair, models } => {
            let config = common.run_config()?;
            let (children, adults) = (load_all(&pair.child)?, load_all(&pair.adult)?);
            let targets = load_all(&models)?;
            let child = SliceFrequencies::from_model(&children[0]);
            let adult = SliceFrequencies::from_model(&adults[0]);
            let all: Vec<&DiachronicModel> = children.iter().chain(&adults).chain(&targets).collect();
            let probes = probe_set(&config, &all, &mut warnings)?;
            let dir = output_dir(&config)?;
            let mut fits = Vec::new();
            for family in common.families() {
                let words: BTreeSet<String> = probes.family(family).keys().cloned().collect();
                let mut records = Vec::new();
                for m in &targets {
                    let (series, w) = semantic_change(m, &words, &child, &adult)?;
                    warnings.extend(w);
                    records.push(series);
                }
                let series = normalize_changes(average_series(records))?;
                write_file(&dir.join(format!("change_{family}.csv")), |out| {
                    write_change_csv(out, &series)
                })?;
                for source in [FrequencySource::Child, FrequencySource::Adult] {
                    let fit = fit_mixed_model(&series, source)?;
                    if fit.dropped_zero_frequency > 0 {
                        warnings.push(Warning::ZeroFrequency {
                            dropped: fit.dropped_zero_frequency,
                        });
                    }
                    fits.push(serde_json::json!({ "family": family, "fit": fit }));
                }
            }
            write_json(&dir.join("change_fits.json"), &fits)?;
        }
        Command::Rsa { common, pair } => {
            let config = common.run_config()?;
            let (children, adults) = (load_all(&pair.child)?, load_all(&pair.adult)?);
            let c: Vec<&DiachronicModel> = children.iter().collect();
            let a: Vec<&DiachronicModel> = adults.iter().collect();
            let probes = probe_set(&config, &[c.as_slice(), a.as_slice()].concat(), &mut warnings)?;
            let trajectories = common
                .families()
                .into_iter()
                .map(|family| {
                    let words = probes.family(family).keys().cloned().collect();
                    rsa_compare_averaged(&c, &a, family, &words, &config.analysis.rsa)
                })
                .collect::<Result<Vec<_>>>()?;
            let dir = output_dir(&config)?;
            write_file(&dir.join("rsa.csv"), |out| write_rsa_csv(out, &trajectories))?;
        }
        Command::Neighbors {
            common,
            model,
            words,
            month,
        } => {
            let config = common.run_config()?;
            let model = load_model(&model)?;
            let candidates: BTreeSet<String> = if config.probes.is_some() {
                let probes = probe_set(&config, &[&model], &mut warnings)?;
                common
                    .families()
                    .into_iter()
                    .flat_map(|f| probes.family(f).keys().cloned().collect::<Vec<_>>())
                    .collect()
            } else {
                model.vocabulary().words().iter().cloned().collect()
            };
            let month = month.map_or_else(|| last_month(&model), Ok)?;
            let reports = words
                .iter()
                .map(|w| nearest_neighbors(&model, w, month, config.analysis.neighbor_k, &candidates))
                .collect::<Result<Vec<_>>>()?;
            print_json(&reports)?;
        }
        Command::Project { common, model, month } => {
            let config = common.run_config()?;
            let model = load_model(&model)?;
            let probes = probe_set(&config, &[&model], &mut warnings)?;
            let month = month.map_or_else(|| last_month(&model), Ok)?;
            let dir = output_dir(&config)?;
            let settings = &config.analysis;
            for family in common.families() {
                let p = project(&model, month, probes.family(family), &settings.tsne, settings.clip_k)?;
                let name = format!("{}_{family}_{month}", stem(&model));
                write_file(&dir.join(format!("{name}_points.csv")), |out| {
                    write_projection_csv(out, &p)
                })?;
                write_file(&dir.join(format!("{name}_centroids.csv")), |out| {
                    write_centroid_csv(out, &p)
                })?;
            }
        }
        Command::CompareModes { run } => {
            let comparison = compare_modes(&run)?;
            let dir = run.join("analysis");
            write_mode_comparison(&dir, &comparison)?;
            print_json(&comparison.summary)?;
        }
    }
    Ok(warnings)
}

fn report(manifest: &RunManifest, config: &RunConfig) -> Result<()> {
    eprintln!(
        "run {} complete: {} artifacts in {:.1}s",
        config.output_dir()?.display(),
        manifest.artifacts.len(),
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {}", w.to_json_line());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
