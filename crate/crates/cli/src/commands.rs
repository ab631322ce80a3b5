//! Pipeline commands. Each one reads files, writes files into the output
//! directory plus a manifest, and returns a short text summary for stdout.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use lanechange::evaluation::{split_train_test, write_cv_long, write_cv_reports};
use lanechange::labeling::{read_samples, write_samples, LabelingOutcome};
use lanechange::learners::{read_predictor, write_predictor};
use lanechange::runtime::{
    evaluate_runtime, write_event_outcomes, write_runtime_reports, write_series, RuntimeEvaluation,
};
use lanechange::scenario::{scenario_census, task_events, write_events};
use lanechange::{
    detect_lane_changes, generate, kfold_cv, label_events, labeling_sweep, load_dataset,
    preprocess, write_dataset, CvReport, Dataset, LaneChangeEvent, Predictor, Schema, SynthConfig,
};

use crate::config::{DataSource, RunConfig};
use crate::manifest::{sha256_hex, Manifest, Seeds};

pub const DATASET_FILE: &str = "dataset.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const CENSUS_FILE: &str = "census.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const LABEL_SUMMARY_FILE: &str = "label_summary.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const SPLIT_FILE: &str = "split.csv";
pub const CV_REPORT_FILE: &str = "cv_report.csv";
pub const CV_LONG_FILE: &str = "cv_long.csv";
pub const RUNTIME_REPORT_FILE: &str = "runtime_report.csv";
pub const RUNTIME_EVENTS_FILE: &str = "runtime_events.csv";
pub const RUNTIME_SERIES_FILE: &str = "runtime_series.csv";
pub const REPORT_FILE: &str = "report.md";

/// Raw and preprocessed dataset with the events detected on the raw one.
struct Prepared {
    ds: Dataset,
    events: Vec<LaneChangeEvent>,
    data_sha256: String,
    synth_seed: Option<u64>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn read_synth_config(path: &Path) -> Result<(SynthConfig, Vec<u8>)> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("{} is not UTF-8", path.display()))?;
    let cfg = toml::from_str(text).with_context(|| format!("invalid synth config {}", path.display()))?;
    Ok((cfg, bytes))
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (raw, bytes, synth_seed) = match cfg.source()? {
        DataSource::Csv(path) => {
            let bytes = read_file(&path)?;
            let ds = load_dataset(bytes.as_slice(), &cfg.schema()?)
                .with_context(|| format!("cannot load {}", path.display()))?;
            (ds, bytes, None)
        }
        DataSource::Synth(path) => {
            let (synth, bytes) = read_synth_config(&path)?;
            let ds = generate(&synth)?;
            (ds, bytes, Some(synth.seed))
        }
    };
    let events = detect_lane_changes(&raw)?;
    Ok(Prepared {
        ds: preprocess(&raw, cfg.task.direction),
        events,
        data_sha256: sha256_hex(&bytes),
        synth_seed,
    })
}

/// Hash of the effective settings. The data section is left out; the data
/// itself is hashed separately.
fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.data = Default::default();
    Ok(sha256_hex(toml::to_string(&c)?.as_bytes()))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.data.output_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn finish(mut manifest: Manifest, dir: &Path, files: &[&str]) -> Result<String> {
    let mut summary = String::new();
    for f in files {
        manifest.add_output(dir, f)?;
        writeln!(summary, "wrote {}", dir.join(f).display())?;
    }
    let name = manifest.write(dir)?;
    writeln!(summary, "wrote {}", dir.join(name).display())?;
    Ok(summary)
}

/// Generates a dataset from a synthesizer config.
pub fn cmd_synth(config: &Path, out: &Path) -> Result<String> {
    let (synth, bytes) = read_synth_config(config)?;
    let ds = generate(&synth)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut w = create(out, DATASET_FILE)?;
    write_dataset(&ds, &mut w, &Schema::default())?;
    w.flush()?;
    let hash = sha256_hex(&bytes);
    let seeds = Seeds {
        synth: Some(synth.seed),
        ..Seeds::default()
    };
    let manifest = Manifest::new("synth", hash.clone(), hash, seeds);
    let mut summary = format!(
        "{} records, {} vehicles, {} frames\n",
        ds.len(),
        ds.vehicle_count(),
        synth.frame_count()
    );
    summary += &finish(manifest, out, &[DATASET_FILE])?;
    Ok(summary)
}

/// Detects lane changes and counts neighbor scenarios.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<String> {
    let p = prepare(cfg)?;
    let dir = output_dir(cfg)?;
    let direction = cfg.task.direction;
    let task = task_events(&p.events, direction);
    let mut w = create(&dir, EVENTS_FILE)?;
    write_events(&p.events, &mut w)?;
    w.flush()?;
    let mut w = create(&dir, CENSUS_FILE)?;
    scenario_census(&p.ds, &task, direction).write(&mut w)?;
    w.flush()?;

    let seeds = Seeds {
        synth: p.synth_seed,
        ..Seeds::default()
    };
    let manifest = Manifest::new("ingest", config_hash(cfg)?, p.data_sha256, seeds);
    let mut summary = format!(
        "{} records and {} vehicles after preprocessing; {} lane changes, {} {direction} task events\n",
        p.ds.len(),
        p.ds.vehicle_count(),
        p.events.len(),
        task.len()
    );
    summary += &finish(manifest, &dir, &[EVENTS_FILE, CENSUS_FILE])?;
    Ok(summary)
}

fn write_label_summary<W: Write>(
    events: &[LaneChangeEvent],
    outcome: &LabelingOutcome,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["event_index", "vehicle_id", "t_lc", "from_lane", "to_lane", "status"])?;
    let mut rows: Vec<(usize, &str)> = outcome.kept.iter().map(|&i| (i, "kept")).collect();
    rows.extend(outcome.skipped.iter().map(|&(i, r)| (i, r.as_str())));
    rows.sort_unstable();
    for (i, status) in rows {
        let e = &events[i];
        out.write_record([
            i.to_string(),
            e.vehicle_id.to_string(),
            e.t_lc.to_string(),
            e.from_lane.to_string(),
            e.to_lane.to_string(),
            status.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn outcome_counts(outcome: &LabelingOutcome) -> String {
    let mut reasons: Vec<(&str, usize)> = Vec::new();
    for (_, r) in &outcome.skipped {
        match reasons.iter_mut().find(|(n, _)| *n == r.as_str()) {
            Some((_, c)) => *c += 1,
            None => reasons.push((r.as_str(), 1)),
        }
    }
    reasons.sort_unstable();
    let mut s = format!(
        "{} events kept, {} skipped",
        outcome.kept.len(),
        outcome.skipped.len()
    );
    for (name, count) in reasons {
        write!(s, ", {name}: {count}").ok();
    }
    write!(
        s,
        "; {} samples ({} positive, {} negative)",
        outcome.samples.len(),
        outcome.positives(),
        outcome.negatives()
    )
    .ok();
    s
}

/// Labels the task events with the configured scheme.
pub fn cmd_label(cfg: &RunConfig) -> Result<String> {
    let p = prepare(cfg)?;
    let dir = output_dir(cfg)?;
    let scheme = cfg.scheme()?;
    let outcome = label_events(&p.ds, &p.events, scheme, &cfg.labeling_options(1))?;
    if outcome.kept.is_empty() && outcome.skipped.is_empty() {
        eprintln!(
            "warning: no {} lane changes in the data; writing empty outputs",
            cfg.task.direction
        );
    }
    let mut w = create(&dir, SAMPLES_FILE)?;
    write_samples(&outcome.samples, &mut w)?;
    w.flush()?;
    let mut w = create(&dir, LABEL_SUMMARY_FILE)?;
    write_label_summary(&p.events, &outcome, &mut w)?;
    w.flush()?;

    let seeds = Seeds {
        synth: p.synth_seed,
        ..Seeds::default()
    };
    let manifest = Manifest::new("label", config_hash(cfg)?, p.data_sha256, seeds);
    let mut summary = format!("{scheme}: {}\n", outcome_counts(&outcome));
    summary += &finish(manifest, &dir, &[SAMPLES_FILE, LABEL_SUMMARY_FILE])?;
    Ok(summary)
}

fn split(cfg: &RunConfig, ds: &Dataset) -> Result<(Vec<u32>, Vec<u32>)> {
    let ids: Vec<u32> = ds.vehicle_ids().collect();
    Ok(split_train_test(&ids, cfg.eval.test_fraction, cfg.eval.seed)?)
}

fn events_of(events: &[LaneChangeEvent], vehicles: &[u32]) -> Vec<LaneChangeEvent> {
    let set: BTreeSet<u32> = vehicles.iter().copied().collect();
    events.iter().filter(|e| set.contains(&e.vehicle_id)).copied().collect()
}

/// Fits the configured model on the training vehicles.
fn fit(cfg: &RunConfig, p: &Prepared, train: &[u32]) -> Result<(Predictor, LabelingOutcome)> {
    let spec = cfg.model_spec(cfg.model.kind);
    let options = cfg.labeling_options(spec.seq_len);
    let events = events_of(&p.events, train);
    let outcome = label_events(&p.ds, &events, cfg.scheme()?, &options)?;
    ensure!(
        !outcome.samples.is_empty(),
        "no labeled samples among the training vehicles"
    );
    let predictor = Predictor::train(&spec, &outcome.samples, options)?;
    Ok((predictor, outcome))
}

fn write_split<W: Write>(train: &[u32], test: &[u32], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["vehicle_id", "set"])?;
    let mut rows: Vec<(u32, &str)> = train.iter().map(|&v| (v, "train")).collect();
    rows.extend(test.iter().map(|&v| (v, "test")));
    rows.sort_unstable();
    for (v, set) in rows {
        out.write_record([v.to_string(), set.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn write_model(dir: &Path, predictor: &Predictor) -> Result<()> {
    let mut w = create(dir, MODEL_FILE)?;
    write_predictor(predictor, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Trains on a seeded 4:1 vehicle split and saves the model.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let p = prepare(cfg)?;
    let dir = output_dir(cfg)?;
    let (train, test) = split(cfg, &p.ds)?;
    let (predictor, outcome) = fit(cfg, &p, &train)?;
    write_model(&dir, &predictor)?;
    let mut w = create(&dir, SPLIT_FILE)?;
    write_split(&train, &test, &mut w)?;
    w.flush()?;

    let seeds = Seeds {
        synth: p.synth_seed,
        eval: Some(cfg.eval.seed),
        model: Some(cfg.model.seed),
    };
    let manifest = Manifest::new("train", config_hash(cfg)?, p.data_sha256, seeds);
    let mut summary = format!(
        "{} trained on {} vehicles ({} held out); {}\n",
        cfg.model.kind,
        train.len(),
        test.len(),
        outcome_counts(&outcome)
    );
    summary += &finish(manifest, &dir, &[MODEL_FILE, SPLIT_FILE])?;
    Ok(summary)
}

fn cv_table(reports: &[CvReport]) -> String {
    let mut s = String::from("scheme  model   tpr     fpr     precision  f1      accuracy\n");
    for r in reports {
        let scheme = r.scheme.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let [tpr, fpr, prec, f1, acc] = r.mean.values().map(short);
        writeln!(s, "{scheme:<7} {:<7} {tpr:<7} {fpr:<7} {prec:<10} {f1:<7} {acc}", r.model.as_str()).ok();
    }
    s
}

fn short(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
}

/// Cross-validates every (scheme, model) pair of the sweep, or every model on
/// an exported sample file.
pub fn cmd_crossval(cfg: &RunConfig, samples: Option<&Path>) -> Result<String> {
    let cv = cfg.cv_config();
    let specs: Vec<_> = cfg.eval.models.iter().map(|&k| cfg.model_spec(k)).collect();
    let (reports, data_sha256, synth_seed) = match samples {
        Some(path) => {
            let bytes = read_file(path)?;
            let samples = read_samples(bytes.as_slice(), cfg.task.encoding)
                .with_context(|| format!("cannot read samples {}", path.display()))?;
            let mut reports = Vec::with_capacity(specs.len());
            for spec in &specs {
                if spec.seq_len != 1 {
                    bail!(
                        "{} needs {}-frame sequences; cross-validate it from the dataset",
                        spec.kind,
                        spec.seq_len
                    );
                }
                reports.push(kfold_cv(&samples, spec, &cv)?);
            }
            (reports, sha256_hex(&bytes), None)
        }
        None => {
            let p = prepare(cfg)?;
            let schemes = cfg.sweep_schemes()?;
            let reports =
                labeling_sweep(&p.ds, &p.events, &schemes, &specs, &cfg.labeling_options(1), &cv)?;
            (reports, p.data_sha256, p.synth_seed)
        }
    };
    let dir = output_dir(cfg)?;
    let mut w = create(&dir, CV_REPORT_FILE)?;
    write_cv_reports(&reports, &mut w)?;
    w.flush()?;
    let mut w = create(&dir, CV_LONG_FILE)?;
    write_cv_long(&reports, &mut w)?;
    w.flush()?;

    let seeds = Seeds {
        synth: synth_seed,
        eval: Some(cfg.eval.seed),
        model: Some(cfg.model.seed),
    };
    let manifest = Manifest::new("crossval", config_hash(cfg)?, data_sha256, seeds);
    let mut summary = cv_table(&reports);
    summary += &finish(manifest, &dir, &[CV_REPORT_FILE, CV_LONG_FILE])?;
    Ok(summary)
}

fn runtime_table(eval: &RuntimeEvaluation) -> String {
    let mut s = String::from("approach      tpr     fpr     accuracy  advanced_time_s\n");
    for r in &eval.reports {
        writeln!(
            s,
            "{:<13} {:<7} {:<7} {:<9} {}",
            r.approach.as_str(),
            short(r.tpr),
            short(r.fpr),
            short(r.prediction_accuracy),
            short(r.mean_advanced_time)
        )
        .ok();
    }
    s
}

/// Replays a model over the held-out vehicles once per second and scores the
/// plain, aggressive and conservative predictions.
pub fn cmd_runtime(cfg: &RunConfig, model: Option<&Path>) -> Result<String> {
    let p = prepare(cfg)?;
    let params = cfg.runtime_params()?;
    let dir = output_dir(cfg)?;
    let (train, test) = split(cfg, &p.ds)?;
    let mut files = Vec::new();
    let predictor = match model {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let predictor = read_predictor(BufReader::new(file))
                .with_context(|| format!("cannot load model {}", path.display()))?;
            ensure!(
                predictor.options.direction == cfg.task.direction,
                "model was trained for {} changes, the task is {}",
                predictor.options.direction,
                cfg.task.direction
            );
            predictor
        }
        None => {
            let (predictor, _) = fit(cfg, &p, &train)?;
            write_model(&dir, &predictor)?;
            files.push(MODEL_FILE);
            predictor
        }
    };
    let events = task_events(&p.events, cfg.task.direction);
    let eval = evaluate_runtime(&predictor, &p.ds, &test, &events, &params)?;

    let mut w = create(&dir, RUNTIME_REPORT_FILE)?;
    write_runtime_reports(&eval.reports, &mut w)?;
    w.flush()?;
    let mut w = create(&dir, RUNTIME_EVENTS_FILE)?;
    write_event_outcomes(&eval.reports, &mut w)?;
    w.flush()?;
    let mut w = create(&dir, RUNTIME_SERIES_FILE)?;
    let all: Vec<_> = eval.series.iter().flatten().cloned().collect();
    write_series(&all, &mut w)?;
    w.flush()?;
    files.extend([RUNTIME_REPORT_FILE, RUNTIME_EVENTS_FILE, RUNTIME_SERIES_FILE]);

    let seeds = Seeds {
        synth: p.synth_seed,
        eval: Some(cfg.eval.seed),
        model: Some(predictor.seed),
    };
    let manifest = Manifest::new("runtime", config_hash(cfg)?, p.data_sha256, seeds);
    let scored = eval.reports[0].events.len();
    let mut summary = format!(
        "{} test vehicles, {scored} scored events, {} stamps without features\n",
        test.len(),
        eval.reports[0].dropped_stamps
    );
    summary += &runtime_table(&eval);
    summary += &finish(manifest, &dir, &files)?;
    Ok(summary)
}

/// Header and rows of a CSV file.
type Table = (Vec<String>, Vec<Vec<String>>);

fn read_rows(path: &Path) -> Result<Option<Table>> {
    if !path.is_file() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| Ok(r?.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Some((header, rows)))
}

fn markdown_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let cell = |s: &String| -> String {
        match s.parse::<f64>() {
            Ok(v) if s.contains('.') => format!("{v:.3}"),
            _ => s.clone(),
        }
    };
    writeln!(out, "| {} |", header.join(" | ")).ok();
    writeln!(out, "|{}", "---|".repeat(header.len())).ok();
    for r in rows {
        writeln!(out, "| {} |", r.iter().map(cell).collect::<Vec<_>>().join(" | ")).ok();
    }
}

/// Renders the cross-validation and run-time reports found in the output
/// directory as Markdown.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let dir = cfg.data.output_dir.clone();
    let cv = read_rows(&dir.join(CV_REPORT_FILE))?;
    let rt = read_rows(&dir.join(RUNTIME_REPORT_FILE))?;
    if cv.is_none() && rt.is_none() {
        bail!(
            "nothing to report in {}: run crossval or runtime first",
            dir.display()
        );
    }
    let mut md = String::from("# Lane-change prediction report\n");
    if let Some((header, rows)) = cv {
        let fold = header.iter().position(|h| h == "fold").context("cv report lacks a fold column")?;
        let means: Vec<Vec<String>> = rows
            .into_iter()
            .filter(|r| r.get(fold).map(String::as_str) == Some("mean"))
            .map(|mut r| {
                r.remove(fold);
                r
            })
            .collect();
        let mut header = header;
        header.remove(fold);
        md += "\n## Cross-validation (mean over folds)\n\n";
        markdown_table(&mut md, &header, &means);
    }
    if let Some((header, rows)) = rt {
        md += "\n## Run-time prediction\n\n";
        markdown_table(&mut md, &header, &rows);
        md += "\nTPR and FPR count 1 Hz stamps. A stamp is positive when it lies within \
               the labeling window before a change of the same vehicle. Accuracy counts \
               changes whose last predictions were all positive.\n";
    }
    md += "\nNA marks a metric whose denominator is zero.\n";
    fs::write(dir.join(REPORT_FILE), &md)
        .with_context(|| format!("cannot write {}", dir.join(REPORT_FILE).display()))?;
    Ok(md)
}
