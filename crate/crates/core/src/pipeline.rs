//! End-to-end runs: ingest, train, persist, analyze, export.
//!
//! A run directory looks like
//!
//! ```text
//! run/
//!   config.json
//!   manifest.json
//!   warnings.jsonl
//!   models/<speaker>/<mode>/seed_<s>/
//!   analysis/probes.json
//!   analysis/categorize/{trajectories.csv, fits.json}
//!   analysis/change/{<speaker>_<mode>_<family>.csv, fits.json}
//!   analysis/rsa/<mode>.csv
//!   analysis/viz/<speaker>_<mode>_<family>_<month>_{points,centroids}.csv
//!   analysis/neighbors/<speaker>_<mode>.json
//! ```
//!
//! Analyses read the persisted models back from disk. Metrics from several
//! seeds are averaged per month (balanced accuracy, change), RSA compares
//! seed-averaged dissimilarity matrices, and the projection and neighbor
//! reports use the first seed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::categorize::{
    average_trajectories, fit_log_curve, read_trajectory_csv, trajectory, write_trajectory_csv, BATrajectory,
    TrajectoryFit,
};
use crate::change::{
    average_series, fit_mixed_model, normalize_changes, semantic_change, write_change_csv, FrequencySource,
    MixedModelFit, SliceFrequencies,
};
use crate::compass::{
    load_model, save_model, train_compass, train_slices, CompassConfig, DiachronicModel, TrainingMode, FORMAT_VERSION,
};
use crate::corpus::{ingest_transcripts, load_proper_nouns, AgeRange, IngestOptions, SlicedCorpus, SpeakerFilter};
use crate::error::{Error, Result};
use crate::probes::{
    combined_common_vocabulary, common_vocabulary, intersect_probes, CombinedRule, Family, ProbeLexicon,
};
use crate::rsa::{nearest_neighbors, rsa_compare_averaged, write_rsa_csv, RsaConfig};
use crate::viz::{project, write_centroid_csv, write_projection_csv, TsneConfig, DEFAULT_CLIP_K};
use crate::warning::{write_json_lines, Warning};

/// Environment variable naming the default parent of run directories.
pub const OUTPUT_ROOT_ENV: &str = "DIACHRON_OUTPUT_ROOT";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisToggles {
    pub categorize: bool,
    pub change: bool,
    pub rsa: bool,
    pub viz: bool,
    pub neighbors: bool,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        AnalysisToggles {
            categorize: true,
            change: true,
            rsa: true,
            viz: true,
            neighbors: true,
        }
    }
}

impl AnalysisToggles {
    pub fn none() -> Self {
        AnalysisToggles {
            categorize: false,
            change: false,
            rsa: false,
            viz: false,
            neighbors: false,
        }
    }

    pub fn any(&self) -> bool {
        self.categorize || self.change || self.rsa || self.viz || self.neighbors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    /// A probe word must occur at least this often in every month.
    pub per_slice_min_count: u64,
    pub combined_rule: CombinedRule,
    pub rsa: RsaConfig,
    pub tsne: TsneConfig,
    pub clip_k: f64,
    /// Months to project; empty means the last trained month.
    pub viz_months: Vec<u32>,
    /// Query words; empty means every probe word.
    pub neighbor_queries: Vec<String>,
    pub neighbor_k: usize,
    /// Month for neighbor queries; defaults to the last trained month.
    pub neighbor_month: Option<u32>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            per_slice_min_count: 1,
            combined_rule: CombinedRule::default(),
            rsa: RsaConfig::default(),
            tsne: TsneConfig::default(),
            clip_k: DEFAULT_CLIP_K,
            viz_months: Vec::new(),
            neighbor_queries: Vec::new(),
            neighbor_k: 3,
            neighbor_month: None,
        }
    }
}

/// Everything a run needs. `compass.train.seed` is replaced by each entry
/// of `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Vec<PathBuf>,
    pub proper_nouns: Option<PathBuf>,
    pub probes: Option<PathBuf>,
    pub speakers: Vec<SpeakerFilter>,
    pub age_range: AgeRange,
    pub compass: CompassConfig,
    pub modes: Vec<TrainingMode>,
    pub seeds: Vec<u64>,
    pub analyses: AnalysisToggles,
    pub analysis: AnalysisSettings,
    pub output: Option<PathBuf>,
    /// Upper bound on concurrently trained (speaker, seed) jobs.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: Vec::new(),
            proper_nouns: None,
            probes: None,
            speakers: vec![SpeakerFilter::ChildSpeech, SpeakerFilter::ChildDirectedSpeech],
            age_range: AgeRange::default(),
            compass: CompassConfig::default(),
            modes: vec![TrainingMode::Incremental],
            seeds: vec![1, 2, 3],
            analyses: AnalysisToggles::default(),
            analysis: AnalysisSettings::default(),
            output: None,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    fn has(&self, s: SpeakerFilter) -> bool {
        self.speakers.contains(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.is_empty() {
            return Err(Error::Config("no corpus files given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.speakers.is_empty() || self.modes.is_empty() {
            return Err(Error::Config("speakers and modes must be nonempty".into()));
        }
        let distinct = |n: usize, set: usize, what: &str| {
            if n != set {
                Err(Error::Config(format!("duplicate {what}")))
            } else {
                Ok(())
            }
        };
        distinct(
            self.seeds.len(),
            self.seeds.iter().collect::<BTreeSet<_>>().len(),
            "seeds",
        )?;
        distinct(
            self.speakers.len(),
            self.speakers.iter().collect::<BTreeSet<_>>().len(),
            "speakers",
        )?;
        distinct(
            self.modes.len(),
            self.modes.iter().map(|m| m.as_str()).collect::<BTreeSet<_>>().len(),
            "modes",
        )?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.analyses.any() && self.probes.is_none() {
            return Err(Error::Config("analyses need a probe lexicon (probes)".into()));
        }
        let both = self.has(SpeakerFilter::ChildSpeech) && self.has(SpeakerFilter::ChildDirectedSpeech);
        if (self.analyses.change || self.analyses.rsa) && !both {
            return Err(Error::Config(
                "change and rsa analyses need both the child and adult speakers".into(),
            ));
        }
        self.compass.train.validate()
    }

    /// `output`, or a directory named after the config hash under
    /// `$DIACHRON_OUTPUT_ROOT`.
    pub fn output_dir(&self) -> Result<PathBuf> {
        if let Some(dir) = &self.output {
            return Ok(dir.clone());
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => Ok(PathBuf::from(root).join(format!("run-{}", &self.sha256()[..12]))),
            None => Err(Error::Config(format!(
                "no output directory: set output or {OUTPUT_ROOT_ENV}"
            ))),
        }
    }
}

pub fn model_dir(root: &Path, speaker: SpeakerFilter, mode: TrainingMode, seed: u64) -> PathBuf {
    root.join("models")
        .join(speaker.as_str())
        .join(mode.as_str())
        .join(format!("seed_{seed}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub error: Option<String>,
    pub config_sha256: String,
    pub version: String,
    pub model_format_version: u32,
    pub wall_clock_seconds: f64,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    write_file(path, &buf)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Every file under `root` except the manifest, sorted by path.
pub fn collect_artifacts(root: &Path) -> Result<Vec<Artifact>> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<Artifact>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).expect("under root");
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.push(Artifact {
                path: rel,
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
            });
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Runs the whole workflow. On failure the artifacts written so far are
/// kept and the manifest is marked incomplete.
pub fn run_pipeline(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let root = config.output_dir()?;
    if root.join(MANIFEST).exists() {
        return Err(Error::Config(format!(
            "{} already holds a run; choose a new output directory",
            root.display()
        )));
    }
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let started = Instant::now();
    let outcome =
        write_file(&root.join("config.json"), config.to_json().as_bytes()).and_then(|()| execute(config, &root));
    let manifest = RunManifest {
        status: if outcome.is_ok() {
            RunStatus::Complete
        } else {
            RunStatus::Incomplete
        },
        error: outcome.as_ref().err().map(|e| e.to_string()),
        config_sha256: config.sha256(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        model_format_version: FORMAT_VERSION,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        artifacts: collect_artifacts(&root)?,
    };
    write_json(&root.join(MANIFEST), &manifest)?;
    outcome.map(|()| manifest)
}

fn execute(config: &RunConfig, root: &Path) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let corpora = ingest(config).map_err(|e| e.in_stage("ingest"))?;
        train_all(config, root, &corpora).map_err(|e| e.in_stage("train"))?;
        let mut warnings = Vec::new();
        if config.analyses.any() {
            analyze(config, root, &mut warnings)?;
        }
        write_with(&root.join("warnings.jsonl"), |out| write_json_lines(out, &warnings))
    })
}

fn ingest(config: &RunConfig) -> Result<Vec<(SpeakerFilter, SlicedCorpus)>> {
    let proper_nouns = match &config.proper_nouns {
        Some(path) => load_proper_nouns(path)?,
        None => BTreeSet::new(),
    };
    config
        .speakers
        .iter()
        .map(|&speaker| {
            let options = IngestOptions {
                speaker_filter: speaker,
                age_range: config.age_range,
                proper_nouns: proper_nouns.clone(),
            };
            Ok((speaker, ingest_transcripts(&config.corpus, &options)?))
        })
        .collect()
}

fn train_all(config: &RunConfig, root: &Path, corpora: &[(SpeakerFilter, SlicedCorpus)]) -> Result<()> {
    let jobs: Vec<(&SpeakerFilter, &SlicedCorpus, u64)> = corpora
        .iter()
        .flat_map(|(s, c)| config.seeds.iter().map(move |&seed| (s, c, seed)))
        .collect();
    jobs.par_iter()
        .map(|&(&speaker, corpus, seed)| {
            let mut compass_config = config.compass.clone();
            compass_config.train.seed = seed;
            let compass = train_compass(corpus, &compass_config.train)?;
            let base = DiachronicModel::from_compass(compass, corpus, compass_config);
            for &mode in &config.modes {
                let model = train_slices(base.clone(), corpus, mode)?;
                save_model(&model, &model_dir(root, speaker, mode, seed))?;
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

/// Loaded models keyed by speaker and mode, one per seed in seed order.
type Models = BTreeMap<(SpeakerFilter, &'static str), Vec<DiachronicModel>>;

fn load_models(config: &RunConfig, root: &Path) -> Result<Models> {
    let mut models = Models::new();
    for &speaker in &config.speakers {
        for &mode in &config.modes {
            let loaded = config
                .seeds
                .par_iter()
                .map(|&seed| load_model(&model_dir(root, speaker, mode, seed)))
                .collect::<Result<Vec<_>>>()?;
            models.insert((speaker, mode.as_str()), loaded);
        }
    }
    Ok(models)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCounts {
    pub semantic: usize,
    pub syntactic: usize,
}

impl ProbeCounts {
    fn of(lex: &ProbeLexicon) -> Self {
        ProbeCounts {
            semantic: lex.len(Family::Semantic),
            syntactic: lex.len(Family::Syntactic),
        }
    }
}

/// Contents of `analysis/probes.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub per_slice_min_count: u64,
    pub combined_rule: CombinedRule,
    /// Probe counts per speaker and, with both speakers, `combined`.
    pub counts: BTreeMap<String, ProbeCounts>,
    /// The probe set every analysis uses.
    pub probes: ProbeLexicon,
}

fn probe_set(
    config: &RunConfig,
    models: &Models,
    lexicon: &ProbeLexicon,
    warnings: &mut Vec<Warning>,
) -> Result<ProbeReport> {
    let settings = &config.analysis;
    let first_mode = config.modes[0].as_str();
    let first = |s: SpeakerFilter| &models[&(s, first_mode)][0];
    let mut counts = BTreeMap::new();
    let mut commons = Vec::new();
    for &speaker in &config.speakers {
        let common = common_vocabulary(first(speaker), settings.per_slice_min_count);
        counts.insert(
            speaker.as_str().to_string(),
            ProbeCounts::of(&intersect_probes(lexicon, &common).0),
        );
        commons.push(common);
    }
    let (child, adult) = (SpeakerFilter::ChildSpeech, SpeakerFilter::ChildDirectedSpeech);
    let mut common = if config.has(child) && config.has(adult) {
        let combined = combined_common_vocabulary(
            first(child),
            first(adult),
            settings.per_slice_min_count,
            settings.combined_rule,
        )?;
        counts.insert(
            "combined".into(),
            ProbeCounts::of(&intersect_probes(lexicon, &combined).0),
        );
        combined
    } else {
        commons
            .into_iter()
            .reduce(|a, b| a.intersection(&b).cloned().collect())
            .unwrap_or_default()
    };
    // Every analysed word needs a vector in every model.
    for &speaker in &config.speakers {
        let vocab = first(speaker).vocabulary();
        common.retain(|w| vocab.id(w).is_some());
    }
    let (probes, w) = intersect_probes(lexicon, &common);
    warnings.extend(w);
    Ok(ProbeReport {
        per_slice_min_count: settings.per_slice_min_count,
        combined_rule: settings.combined_rule,
        counts,
        probes,
    })
}

/// Families with enough probe words and categories for the analysis.
fn usable_families(
    probes: &ProbeLexicon,
    analysis: &str,
    min_words: usize,
    warnings: &mut Vec<Warning>,
) -> Vec<Family> {
    Family::ALL
        .into_iter()
        .filter(|&family| {
            let words = probes.len(family);
            let categories = probes.categories(family).len();
            let ok = words >= min_words && categories >= 2;
            if !ok {
                warnings.push(Warning::SkippedAnalysis {
                    analysis: analysis.to_string(),
                    family,
                    reason: format!("{words} probe words in {categories} categories"),
                });
            }
            ok
        })
        .collect()
}

fn analyze(config: &RunConfig, root: &Path, warnings: &mut Vec<Warning>) -> Result<()> {
    let models = load_models(config, root).map_err(|e| e.in_stage("load"))?;
    let lexicon =
        ProbeLexicon::load_csv(config.probes.as_deref().expect("validated")).map_err(|e| e.in_stage("probes"))?;
    let report = probe_set(config, &models, &lexicon, warnings).map_err(|e| e.in_stage("probes"))?;
    let dir = root.join("analysis");
    write_json(&dir.join("probes.json"), &report)?;
    let probes = &report.probes;

    if config.analyses.categorize {
        run_categorize(&models, probes, &dir.join("categorize"), warnings).map_err(|e| e.in_stage("categorize"))?;
    }
    if config.analyses.change {
        run_change(config, &models, probes, &dir.join("change"), warnings).map_err(|e| e.in_stage("change"))?;
    }
    if config.analyses.rsa {
        run_rsa(config, &models, probes, &dir.join("rsa"), warnings).map_err(|e| e.in_stage("rsa"))?;
    }
    if config.analyses.viz {
        run_viz(config, &models, probes, &dir.join("viz"), warnings).map_err(|e| e.in_stage("viz"))?;
    }
    if config.analyses.neighbors {
        run_neighbors(config, &models, probes, &dir.join("neighbors")).map_err(|e| e.in_stage("neighbors"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub family: Family,
    pub speaker: SpeakerFilter,
    pub mode: String,
    /// Seed, or `"mean"` for the seed average.
    pub seed: String,
    #[serde(flatten)]
    pub fit: TrajectoryFit,
}

fn run_categorize(models: &Models, probes: &ProbeLexicon, dir: &Path, warnings: &mut Vec<Warning>) -> Result<()> {
    let families = usable_families(probes, "categorize", 3, warnings);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for seeds in models.values() {
        for &family in &families {
            let runs = seeds
                .par_iter()
                .map(|m| trajectory(m, family, probes.family(family)))
                .collect::<Result<Vec<_>>>()?;
            let mean = average_trajectories(&runs)?;
            for t in runs.iter().chain(std::iter::once(&mean)) {
                if t.points.len() >= 2 {
                    fits.push(FitEntry {
                        family,
                        speaker: t.speaker,
                        mode: t.mode.clone(),
                        seed: t.seed.map_or_else(|| "mean".into(), |s| s.to_string()),
                        fit: fit_log_curve(t)?,
                    });
                }
            }
            rows.extend(runs);
            rows.push(mean);
        }
    }
    write_with(&dir.join("trajectories.csv"), |out| write_trajectory_csv(out, &rows))?;
    write_json(&dir.join("fits.json"), &fits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeFitEntry {
    pub family: Family,
    pub speaker: SpeakerFilter,
    pub mode: String,
    pub fit: MixedModelFit,
}

fn run_change(
    config: &RunConfig,
    models: &Models,
    probes: &ProbeLexicon,
    dir: &Path,
    warnings: &mut Vec<Warning>,
) -> Result<()> {
    let first_mode = config.modes[0].as_str();
    let child = SliceFrequencies::from_model(&models[&(SpeakerFilter::ChildSpeech, first_mode)][0]);
    let adult = SliceFrequencies::from_model(&models[&(SpeakerFilter::ChildDirectedSpeech, first_mode)][0]);
    let families = usable_families(probes, "change", 2, warnings);
    let mut fits = Vec::new();
    for (&(speaker, mode), seeds) in models {
        for &family in &families {
            let words: BTreeSet<String> = probes.family(family).keys().cloned().collect();
            let mut runs = Vec::with_capacity(seeds.len());
            for m in seeds {
                let (series, w) = semantic_change(m, &words, &child, &adult)?;
                warnings.extend(w);
                runs.push(series);
            }
            let averaged = average_series(runs);
            let name = format!("{}_{}_{}.csv", speaker.as_str(), mode, family);
            let series = match normalize_changes(averaged.clone()) {
                Ok(series) => series,
                Err(Error::Degenerate(reason)) => {
                    // Too few changes survive the filter; keep the raw deltas.
                    warnings.push(Warning::SkippedAnalysis {
                        analysis: format!("change fit ({} {mode})", speaker.as_str()),
                        family,
                        reason,
                    });
                    write_with(&dir.join(name), |out| write_change_csv(out, &averaged))?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            write_with(&dir.join(name), |out| write_change_csv(out, &series))?;
            for source in [FrequencySource::Child, FrequencySource::Adult] {
                let fit = fit_mixed_model(&series, source)?;
                if fit.dropped_zero_frequency > 0 {
                    warnings.push(Warning::ZeroFrequency {
                        dropped: fit.dropped_zero_frequency,
                    });
                }
                fits.push(ChangeFitEntry {
                    family,
                    speaker,
                    mode: mode.to_string(),
                    fit,
                });
            }
        }
    }
    write_json(&dir.join("fits.json"), &fits)
}

fn run_rsa(
    config: &RunConfig,
    models: &Models,
    probes: &ProbeLexicon,
    dir: &Path,
    warnings: &mut Vec<Warning>,
) -> Result<()> {
    let families = usable_families(probes, "rsa", 3, warnings);
    for &mode in &config.modes {
        let group = |s: SpeakerFilter| models[&(s, mode.as_str())].iter().collect::<Vec<_>>();
        let (children, adults) = (
            group(SpeakerFilter::ChildSpeech),
            group(SpeakerFilter::ChildDirectedSpeech),
        );
        let trajectories = families
            .iter()
            .map(|&family| {
                let words = probes.family(family).keys().cloned().collect();
                rsa_compare_averaged(&children, &adults, family, &words, &config.analysis.rsa)
            })
            .collect::<Result<Vec<_>>>()?;
        write_with(&dir.join(format!("{}.csv", mode.as_str())), |out| {
            write_rsa_csv(out, &trajectories)
        })?;
    }
    Ok(())
}

fn run_viz(
    config: &RunConfig,
    models: &Models,
    probes: &ProbeLexicon,
    dir: &Path,
    warnings: &mut Vec<Warning>,
) -> Result<()> {
    let settings = &config.analysis;
    for (&(speaker, mode), seeds) in models {
        let model = &seeds[0];
        let months = if settings.viz_months.is_empty() {
            model.trained_months().last().copied().into_iter().collect()
        } else {
            settings.viz_months.clone()
        };
        for family in Family::ALL {
            let n = probes.len(family);
            if let Err(e) = settings.tsne.validate(n) {
                warnings.push(Warning::SkippedAnalysis {
                    analysis: "viz".into(),
                    family,
                    reason: e.to_string(),
                });
                continue;
            }
            for &month in &months {
                let p = project(model, month, probes.family(family), &settings.tsne, settings.clip_k)?;
                let stem = format!("{}_{}_{}_{}", speaker.as_str(), mode, family, month);
                write_with(&dir.join(format!("{stem}_points.csv")), |out| {
                    write_projection_csv(out, &p)
                })?;
                write_with(&dir.join(format!("{stem}_centroids.csv")), |out| {
                    write_centroid_csv(out, &p)
                })?;
            }
        }
    }
    Ok(())
}

fn run_neighbors(config: &RunConfig, models: &Models, probes: &ProbeLexicon, dir: &Path) -> Result<()> {
    let settings = &config.analysis;
    let candidates: BTreeSet<String> = Family::ALL
        .iter()
        .flat_map(|&f| probes.family(f).keys().cloned())
        .collect();
    let queries: Vec<String> = if settings.neighbor_queries.is_empty() {
        candidates.iter().cloned().collect()
    } else {
        settings.neighbor_queries.clone()
    };
    for (&(speaker, mode), seeds) in models {
        let model = &seeds[0];
        let month = match settings.neighbor_month {
            Some(m) => m,
            None => *model
                .trained_months()
                .last()
                .ok_or_else(|| Error::Model("model has no trained slices".into()))?,
        };
        let reports = queries
            .iter()
            .map(|q| nearest_neighbors(model, q, month, settings.neighbor_k, &candidates))
            .collect::<Result<Vec<_>>>()?;
        write_json(&dir.join(format!("{}_{}.json", speaker.as_str(), mode)), &reports)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparisonRow {
    pub family: Family,
    pub speaker: SpeakerFilter,
    pub month: u32,
    pub incremental: f64,
    pub non_incremental: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub family: Family,
    pub speaker: SpeakerFilter,
    pub final_month: u32,
    pub incremental: f64,
    pub non_incremental: f64,
    /// `(incremental - non_incremental) / non_incremental * 100`.
    pub percent_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub rows: Vec<ModeComparisonRow>,
    pub summary: Vec<ModeSummary>,
}

pub const MODE_COMPARISON_HEADER: &str = "family,speaker,month,incremental,non_incremental,delta";

/// Balanced-accuracy differences between the two training modes. Seed
/// averages are used when present, otherwise the runs are averaged here.
pub fn compare_trajectories(trajectories: &[BATrajectory]) -> Result<ModeComparison> {
    let has_mean = trajectories.iter().any(|t| t.seed.is_none());
    let mut groups: BTreeMap<(Family, SpeakerFilter, String), Vec<BATrajectory>> = BTreeMap::new();
    for t in trajectories.iter().filter(|t| !has_mean || t.seed.is_none()) {
        groups
            .entry((t.family, t.speaker, t.mode.clone()))
            .or_default()
            .push(t.clone());
    }
    let mut averaged = BTreeMap::new();
    for ((family, speaker, mode), runs) in groups {
        averaged.insert((family, speaker, mode), average_trajectories(&runs)?);
    }
    let inc = TrainingMode::Incremental.as_str();
    let non = TrainingMode::NonIncremental.as_str();
    let keys: BTreeSet<(Family, SpeakerFilter)> = averaged.keys().map(|(f, s, _)| (*f, *s)).collect();
    if keys.is_empty() {
        return Err(Error::Config("no trajectories to compare".into()));
    }
    let mut out = ModeComparison {
        rows: Vec::new(),
        summary: Vec::new(),
    };
    for (family, speaker) in keys {
        let get = |mode: &str| {
            averaged
                .get(&(family, speaker, mode.to_string()))
                .ok_or_else(|| Error::Config(format!("no {mode} trajectory for {family} {speaker}")))
        };
        let (a, b) = (get(inc)?, get(non)?);
        if a.months() != b.months() {
            return Err(Error::Degenerate(format!(
                "{family} {speaker}: modes cover different months"
            )));
        }
        for (p, q) in a.points.iter().zip(&b.points) {
            out.rows.push(ModeComparisonRow {
                family,
                speaker,
                month: p.month,
                incremental: p.balanced_accuracy,
                non_incremental: q.balanced_accuracy,
                delta: p.balanced_accuracy - q.balanced_accuracy,
            });
        }
        if let (Some(p), Some(q)) = (a.final_point(), b.final_point()) {
            out.summary.push(ModeSummary {
                family,
                speaker,
                final_month: p.month,
                incremental: p.balanced_accuracy,
                non_incremental: q.balanced_accuracy,
                percent_improvement: (p.balanced_accuracy - q.balanced_accuracy) / q.balanced_accuracy * 100.0,
            });
        }
    }
    Ok(out)
}

/// Mode comparison of a finished run directory.
pub fn compare_modes(run_dir: &Path) -> Result<ModeComparison> {
    let path = run_dir.join("analysis").join("categorize").join("trajectories.csv");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    compare_trajectories(&read_trajectory_csv(&path)?)
}

pub fn write_mode_comparison_csv<W: Write>(out: &mut W, c: &ModeComparison) -> std::io::Result<()> {
    writeln!(out, "{MODE_COMPARISON_HEADER}")?;
    for r in &c.rows {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?}",
            r.family, r.speaker, r.month, r.incremental, r.non_incremental, r.delta
        )?;
    }
    Ok(())
}

/// Writes `mode_comparison.csv` and `mode_comparison.json` into `dir`.
pub fn write_mode_comparison(dir: &Path, c: &ModeComparison) -> Result<()> {
    write_with(&dir.join("mode_comparison.csv"), |out| {
        write_mode_comparison_csv(out, c)
    })?;
    write_json(&dir.join("mode_comparison.json"), &c.summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut c = RunConfig {
            corpus: vec!["a.txt".into()],
            probes: Some("p.csv".into()),
            seeds: vec![4, 9],
            ..Default::default()
        };
        c.compass.slice_epoch_overrides.insert(18, 7);
        c.analysis.viz_months = vec![20, 24];
        let back = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.sha256(), c.sha256());
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig {
            corpus: vec!["a.txt".into()],
            probes: Some("p.csv".into()),
            ..Default::default()
        };
        ok.validate().unwrap();
        for bad in [
            RunConfig {
                seeds: vec![],
                ..ok.clone()
            },
            RunConfig {
                seeds: vec![1, 1],
                ..ok.clone()
            },
            RunConfig {
                probes: None,
                ..ok.clone()
            },
            RunConfig { jobs: 0, ..ok.clone() },
            RunConfig {
                speakers: vec![SpeakerFilter::ChildSpeech],
                ..ok.clone()
            },
            RunConfig {
                corpus: vec![],
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
        let models_only = RunConfig {
            probes: None,
            speakers: vec![SpeakerFilter::ChildSpeech],
            analyses: AnalysisToggles::none(),
            ..ok
        };
        models_only.validate().unwrap();
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
