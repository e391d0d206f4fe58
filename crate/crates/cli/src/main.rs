//! `hosid`: feature extraction, synthetic corpora, enrollment,
//! identification and evaluation from the command line.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hosid::corpus::{generate_synthetic_corpus, load_manifest, read_wav, CorpusManifest, SynthSpec, UtteranceKey, UtteranceRecord};
use hosid::eval::{accuracy_table, compare_classifiers, render_report, AccuracyTable, ComparisonScope, ReportFormat};
use hosid::features::{read_feature_file, FeatureSequence, MfccExtractor};
use hosid::fsutil::write_atomic;
use hosid::speaker::{
    batch_identify, enroll_speakers, load_registry, save_registry, training_sets, ClassifierKind, REGISTRY_INDEX,
};
use hosid::{Features, Registry};
use rayon::prelude::*;

use config::CliConfig;
use output::{provenance_fields, provenance_line, read_results, stamp_dir, write_results, ResultRow};

/// Extension of per-utterance feature files.
const FEATURE_EXT: &str = "feat";

#[derive(Parser)]
#[command(name = "hosid", version, about = "Speaker identification with higher-order hidden Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract MFCC features for every record of a manifest.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for feature files.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate a synthetic corpus (manifest plus features).
    Synth {
        /// JSON synthetic corpus specification; defaults apply otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        speakers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one model per speaker from the enrollment utterances.
    Enroll {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features_dir: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        /// Classifier kind; defaults to the HMM of the configured order.
        #[arg(long, conflicts_with = "order")]
        kind: Option<ClassifierKind>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Identify every test utterance and write a results CSV.
    Identify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features_dir: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Accuracy tables and t tests from one results file per classifier.
    Evaluate {
        /// Results CSV files, one per classifier.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Output directory for the report.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    mixtures: Option<usize>,
    #[arg(long)]
    scope: Option<ComparisonScope>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.order {
            cfg.model.order = v;
        }
        if let Some(v) = self.states {
            cfg.model.num_states = v;
        }
        if let Some(v) = self.mixtures {
            cfg.model.num_mixtures = v;
        }
        if let Some(v) = self.scope {
            cfg.eval.scope = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Features { manifest, out, cfg } => cmd_features(&manifest, &out, &cfg.resolve()?),
        Command::Synth {
            spec,
            speakers,
            out,
            cfg,
        } => cmd_synth(spec.as_deref(), speakers, cfg.seed, &out, &cfg.resolve()?),
        Command::Enroll {
            manifest,
            features_dir,
            registry,
            kind,
            cfg,
        } => {
            let cfg = cfg.resolve()?;
            let kind = match kind {
                Some(k) => k,
                None => ClassifierKind::from_order(cfg.model.order).expect("order validated"),
            };
            cmd_enroll(&manifest, &features_dir, &registry, kind, &cfg)
        }
        Command::Identify {
            manifest,
            features_dir,
            registry,
            out,
            cfg,
        } => cmd_identify(&manifest, &features_dir, &registry, &out, &cfg.resolve()?),
        Command::Evaluate { results, out, cfg } => cmd_evaluate(&results, &out, &cfg.resolve()?),
    }
}

fn feature_path(dir: &Path, key: &UtteranceKey) -> PathBuf {
    dir.join(format!("{}.{FEATURE_EXT}", key.file_stem()))
}

/// Audio paths are relative to the manifest's directory.
fn audio_path(manifest: &Path, record: &UtteranceRecord) -> PathBuf {
    let p = Path::new(&record.audio_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new("")).join(p)
    }
}

fn cmd_features(manifest_path: &Path, out: &Path, cfg: &CliConfig) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let extractor = MfccExtractor::new(&cfg.feature)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let outcomes: Vec<Result<usize>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let path = audio_path(manifest_path, r);
            let (samples, rate) = read_wav(&path)?;
            if rate != r.sample_rate_hz {
                bail!(
                    "{}: file is {rate} Hz but the manifest says {} Hz",
                    path.display(),
                    r.sample_rate_hz
                );
            }
            let seq = extractor
                .extract(&samples, rate)
                .with_context(|| format!("{}", path.display()))?;
            write_atomic(feature_path(out, &r.key()), &seq.to_bytes())?;
            Ok(seq.num_frames())
        })
        .collect();

    let (mut frames, mut failures) = (0usize, 0usize);
    for o in outcomes {
        match o {
            Ok(n) => frames += n,
            Err(e) => {
                failures += 1;
                eprintln!("error: {e:#}");
            }
        }
    }
    stamp_dir(out, cfg, "features", &[("fingerprint", cfg.feature.fingerprint().to_hex())])?;
    println!(
        "processed {} records, {frames} frames",
        manifest.records.len() - failures
    );
    if failures > 0 {
        bail!("{failures} of {} records failed", manifest.records.len());
    }
    Ok(())
}

fn cmd_synth(spec_path: Option<&Path>, speakers: Option<usize>, seed: Option<u64>, out: &Path, cfg: &CliConfig) -> Result<()> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthSpec>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = speakers {
        spec.num_speakers = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let corpus = generate_synthetic_corpus(&spec)?;
    let features_dir = out.join("features");
    std::fs::create_dir_all(&features_dir).with_context(|| format!("creating {}", features_dir.display()))?;
    corpus
        .features
        .par_iter()
        .try_for_each(|(key, seq)| write_atomic(feature_path(&features_dir, key), &seq.to_bytes()))?;
    write_atomic(out.join("manifest.jsonl"), corpus.manifest.to_jsonl().as_bytes())?;
    write_atomic(out.join("spec.json"), serde_json::to_string_pretty(&spec)?.as_bytes())?;
    stamp_dir(out, cfg, "synth", &[("synth_seed", spec.seed.to_string())])?;
    println!("wrote {} records to {}", corpus.manifest.len(), out.display());
    Ok(())
}

fn load_features<'a>(
    records: impl IntoIterator<Item = &'a UtteranceRecord>,
    dir: &Path,
) -> Result<BTreeMap<UtteranceKey, Features>> {
    let keys: Vec<UtteranceKey> = records.into_iter().map(UtteranceRecord::key).collect();
    keys.into_par_iter()
        .map(|k| {
            let path = feature_path(dir, &k);
            let seq = read_feature_file(&path).with_context(|| format!("features for {k}"))?;
            Ok((k, seq))
        })
        .collect()
}

fn cmd_enroll(manifest_path: &Path, features_dir: &Path, registry_dir: &Path, kind: ClassifierKind, cfg: &CliConfig) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let training: Vec<&UtteranceRecord> = manifest.training_records().collect();
    if training.is_empty() {
        bail!("{} has no enrollment records (neutral, sentences 1-4)", manifest_path.display());
    }
    let features = load_features(training.iter().copied(), features_dir)?;
    let sets: BTreeMap<String, Vec<FeatureSequence<f64>>> = training_sets(training.iter().copied(), &features)?;
    let fingerprint = features.values().next().expect("training is nonempty").fingerprint();

    let mut registry: Registry = if registry_dir.join(REGISTRY_INDEX).exists() {
        let existing = load_registry(registry_dir)?;
        existing.check_kind(kind)?;
        existing.check_fingerprint(fingerprint)?;
        existing
    } else {
        Registry::new(kind, fingerprint)
    };

    let outcomes = enroll_speakers(&mut registry, &sets, kind, &cfg.enroll_options());
    let mut traces = String::from("speaker_id,iteration,log_likelihood\n");
    let mut failures = 0;
    for (id, outcome) in &outcomes {
        match outcome {
            Ok(trace) => {
                for (i, ll) in trace.iter().enumerate() {
                    traces.push_str(&format!("{id},{i},{ll}\n"));
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("error: speaker {id}: {e}");
            }
        }
    }
    save_registry(&registry, registry_dir)?;
    let extra = [("kind", kind.to_string())];
    let header = provenance_line(&provenance_fields(cfg, &extra));
    write_atomic(registry_dir.join("traces.csv"), format!("# {header}\n{traces}").as_bytes())?;
    stamp_dir(registry_dir, cfg, "enroll", &extra)?;
    println!(
        "enrolled {} speakers ({kind}); registry holds {}",
        outcomes.len() - failures,
        registry.len()
    );
    if failures > 0 {
        bail!("{failures} speakers failed to enroll");
    }
    Ok(())
}

fn cmd_identify(manifest_path: &Path, features_dir: &Path, registry_dir: &Path, out: &Path, cfg: &CliConfig) -> Result<()> {
    let manifest: CorpusManifest = load_manifest(manifest_path)?;
    let registry: Registry = load_registry(registry_dir)?;
    let test: Vec<&UtteranceRecord> = manifest.test_records().collect();
    if test.is_empty() {
        bail!("{} has no test records (sentences 5-8)", manifest_path.display());
    }
    let features = load_features(test.iter().copied(), features_dir)?;
    let results = batch_identify(&registry, test.iter().copied(), &features)?;
    let rows: Vec<ResultRow> = results.iter().map(|(r, res)| ResultRow::new(r, res)).collect();
    let correct = rows.iter().filter(|r| r.correct).count();

    let extra = [("kind", registry.kind().to_string())];
    let header = provenance_line(&provenance_fields(cfg, &extra));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_results(out, &header, &rows)?;
    println!(
        "identified {} utterances, {correct} correct ({:.1}%)",
        rows.len(),
        100.0 * correct as f64 / rows.len() as f64
    );
    Ok(())
}

/// Pairs to test: the third-order HMM against every lower-order HMM when
/// present, otherwise the first table against each of the others.
fn comparison_pairs(labels: &[String]) -> Vec<(usize, usize)> {
    let pos = |k: ClassifierKind| labels.iter().position(|l| l == k.as_str());
    if let Some(h3) = pos(ClassifierKind::Hmm3) {
        let lower: Vec<(usize, usize)> = [ClassifierKind::Hmm1, ClassifierKind::Hmm2]
            .into_iter()
            .filter_map(|k| pos(k).map(|j| (h3, j)))
            .collect();
        if !lower.is_empty() {
            return lower;
        }
    }
    (1..labels.len()).map(|j| (0, j)).collect()
}

fn cmd_evaluate(paths: &[PathBuf], out: &Path, cfg: &CliConfig) -> Result<()> {
    let mut tables: Vec<AccuracyTable> = Vec::with_capacity(paths.len());
    for path in paths {
        let file = read_results(path)?;
        let label = file.fields.get("kind").cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let pairs: Vec<_> = file.rows.into_iter().map(ResultRow::into_pair).collect();
        tables.push(accuracy_table(&pairs)?.with_label(label));
    }
    let labels: Vec<String> = tables.iter().map(|t| t.label.clone()).collect();
    let tests = comparison_pairs(&labels)
        .into_iter()
        .map(|(a, b)| {
            compare_classifiers(&tables[a], &tables[b], cfg.eval.scope, cfg.eval.critical_value)
                .map_err(|e| anyhow!("{} vs {}: {e}", paths[a].display(), paths[b].display()))
        })
        .collect::<Result<Vec<_>>>()?;

    let header = provenance_line(&provenance_fields(cfg, &[]));
    let md = render_report(&tables, &tests, ReportFormat::Markdown);
    let csv = render_report(&tables, &tests, ReportFormat::Csv);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(out.join("report.md"), format!("<!-- {header} -->\n{md}").as_bytes())?;
    write_atomic(out.join("report.csv"), format!("# {header}\n{csv}").as_bytes())?;
    stamp_dir(out, cfg, "evaluate", &[])?;
    print!("{md}");
    Ok(())
}
