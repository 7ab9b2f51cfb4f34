//! Subcommand implementations. Each command resolves its configuration,
//! does its work through the library, and writes a run manifest next to its
//! outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use explicar_core::backend::{
    apply_freeze_plan, load_encoder_backend, load_model_dir, probe_from_model, FreezePlan,
    TokenizerSettings, TrainableModel,
};
use explicar_core::corpus::{self, Corpus, DataFormat};
use explicar_core::error::Error as CoreError;
use explicar_core::limex::{self, RenderFormat, TargetClass};
use explicar_core::metrics::{self, ComparisonRow, EvalReport};
use explicar_core::textclean::{self, CleanConfig};
use explicar_core::trainer;

use crate::config::{Profile, RunConfig};
use crate::manifest::RunManifest;

fn argument_error(msg: impl Into<String>) -> anyhow::Error {
    CoreError::Argument(msg.into()).into()
}

fn load_data(path: &Path, format: Option<DataFormat>) -> Result<Corpus> {
    let format = format.unwrap_or_else(|| DataFormat::from_path(path));
    Ok(corpus::load_corpus(path, format)?)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    }
}

/// `stats`: distribution report plus chart artifacts for a dataset file.
pub fn cmd_stats(data: &Path, out: &Path) -> Result<()> {
    let corpus = load_data(data, None)?;
    let report = corpus::distribution_report(&corpus)?;
    let written = corpus::emit_distribution_artifacts(&report, out)?;

    let mut manifest = RunManifest::start(
        "stats",
        json!({"data": data.display().to_string(), "out": out.display().to_string()}),
        0,
    );
    manifest.add_input(data)?;
    for path in &written {
        manifest.add_artifact(path);
    }
    manifest.write(out)?;

    println!("total examples: {}", report.total);
    println!("languages: {}", serde_json::to_string(&report.languages)?);
    println!("labels: {}", serde_json::to_string(&report.labels)?);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// `preprocess`: apply the cleaning pipeline to a dataset file.
pub fn cmd_preprocess(input: &Path, out: &Path, config_path: Option<&Path>) -> Result<()> {
    let config = RunConfig::load_or_default(config_path)?;
    let clean_config = config.clean.to_clean_config();
    let corpus = load_data(input, config.data.format)?;
    let (cleaned, excluded) = textclean::clean_corpus(&corpus, &clean_config);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    corpus::save_jsonl(&cleaned, out)?;

    let mut manifest = RunManifest::start(
        "preprocess",
        json!({
            "in": input.display().to_string(),
            "out": out.display().to_string(),
            "clean": config.clean,
            "excluded_count": excluded,
        }),
        0,
    );
    manifest.add_input(input)?;
    manifest.add_artifact(out);
    manifest.write(&parent_dir(out))?;

    println!("cleaned {} examples ({} excluded as empty) -> {}", cleaned.len(), excluded, out.display());
    Ok(())
}

fn model_with_tokenizer(backend_id: &str, max_length: usize) -> Result<TrainableModel> {
    let mut model = load_encoder_backend(backend_id, 3)?;
    model.tokenizer = TokenizerSettings::new(max_length)?;
    if model.tokenizer.max_length > model.config.max_position {
        return Err(CoreError::Capability(format!(
            "max_length {} exceeds backend positions {}",
            max_length, model.config.max_position
        ))
        .into());
    }
    Ok(model)
}

/// `train`: fine-tune a backend on train.jsonl/val.jsonl in a data dir.
pub fn cmd_train(
    backend_id: &str,
    freeze: &str,
    data_dir: &Path,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let config = RunConfig::load_or_default(config_path)?;
    let model = model_with_tokenizer(backend_id, config.model.max_length)?;
    let plan = FreezePlan::parse(freeze, model.config.num_layers)?;

    let train_path = data_dir.join("train.jsonl");
    let val_path = data_dir.join("val.jsonl");
    let train_set = load_data(&train_path, Some(DataFormat::Jsonl))?;
    let val_set = if val_path.is_file() {
        load_data(&val_path, Some(DataFormat::Jsonl))?
    } else {
        Corpus::new(vec![], "missing-val")
    };

    let (_, history) = trainer::train(model, &plan, &train_set, &val_set, &config.train, out)?;

    let mut manifest = RunManifest::start(
        "train",
        json!({
            "model": backend_id,
            "freeze": freeze,
            "data": data_dir.display().to_string(),
            "train": config.train,
            "max_length": config.model.max_length,
        }),
        config.train.seed,
    );
    manifest.add_input(&train_path)?;
    if val_path.is_file() {
        manifest.add_input(&val_path)?;
    }
    for record in &history.records {
        manifest.add_artifact(Path::new(&record.checkpoint_path));
    }
    manifest.add_artifact(&out.join("history.jsonl"));
    manifest.write(out)?;

    for record in &history.records {
        println!(
            "epoch {}: loss {:.6}{}",
            record.epoch,
            record.train_loss,
            record
                .eval
                .as_ref()
                .map(|e| format!(", val accuracy {:.4}", e.overall.accuracy))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut body = serde_json::to_string_pretty(report).context("serialize report")?;
    body.push('\n');
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// `evaluate`: score a checkpoint on a dataset file. The input is cleaned
/// with the default pipeline first (cleaning is idempotent, so already
/// clean data is unaffected).
pub fn cmd_evaluate(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let model = load_model_dir(checkpoint)?;
    let raw = load_data(data, None)?;
    let (test_set, _) = textclean::clean_corpus(&raw, &CleanConfig::default());
    let probe = probe_from_model(&model, model.tokenizer)?;
    let report = metrics::evaluate(&probe, &test_set)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    write_report(&report, out)?;

    let mut manifest = RunManifest::start(
        "evaluate",
        json!({
            "checkpoint": checkpoint.display().to_string(),
            "data": data.display().to_string(),
            "out": out.display().to_string(),
        }),
        0,
    );
    manifest.add_input(data)?;
    manifest.add_upstream(&checkpoint.join("model.json"))?;
    manifest.add_artifact(out);
    manifest.write(&parent_dir(out))?;

    println!(
        "n={} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} (macro)",
        report.n,
        report.overall.accuracy,
        report.overall.precision,
        report.overall.recall,
        report.overall.f1
    );
    Ok(())
}

/// `explain`: attribute one prediction to its words. The text is cleaned
/// with the default pipeline so word units match what the model saw in
/// training.
#[allow(clippy::too_many_arguments)]
pub fn cmd_explain(
    checkpoint: &Path,
    text: &str,
    class: &str,
    samples: Option<usize>,
    seed: Option<u64>,
    format: &str,
    out: &Path,
) -> Result<()> {
    let model = load_model_dir(checkpoint)?;
    let probe = probe_from_model(&model, model.tokenizer)?;
    let cleaned = textclean::clean(text, &CleanConfig::default());
    if cleaned.is_empty() {
        return Err(argument_error("text is empty after cleaning"));
    }
    let target = TargetClass::parse(class)?;
    let render = RenderFormat::parse(format)?;
    let mut lime = limex::LimeConfig::default();
    if let Some(n) = samples {
        lime.n_samples = n;
    }
    if let Some(s) = seed {
        lime.seed = s;
    }
    let explanation = limex::explain(&probe, &cleaned, target, &lime)?;
    let document = limex::render_explanation(&explanation, render);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    fs::write(out, &document).with_context(|| format!("cannot write {}", out.display()))?;

    let mut manifest = RunManifest::start(
        "explain",
        json!({
            "checkpoint": checkpoint.display().to_string(),
            "text": text,
            "class": class,
            "format": format,
            "lime": lime,
        }),
        lime.seed,
    );
    manifest.add_upstream(&checkpoint.join("model.json"))?;
    manifest.add_artifact(out);
    manifest.write(&parent_dir(out))?;

    println!("target {} p={:.4}", explanation.target_class, explanation.probe_probability);
    for a in &explanation.attributions {
        println!("  {:+.6}  {}", a.weight, a.token);
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// `compare`: render a comparison table from named report.json files.
pub fn cmd_compare(reports: &[(String, PathBuf)], out: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(argument_error("compare needs at least one --report name=path"));
    }
    let mut rows = Vec::new();
    let mut manifest = RunManifest::start(
        "compare",
        json!({
            "reports": reports
                .iter()
                .map(|(n, p)| json!({"name": n, "path": p.display().to_string()}))
                .collect::<Vec<_>>(),
            "out": out.display().to_string(),
        }),
        0,
    );
    for (name, path) in reports {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read report {}", path.display()))?;
        let report: EvalReport = serde_json::from_str(&raw)
            .with_context(|| format!("invalid report {}", path.display()))?;
        rows.push(ComparisonRow::from_report(name.clone(), &report));
        manifest.add_input(path)?;
    }
    let table = metrics::comparison_table(&rows)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let md_path = out.join("comparison.md");
    let json_path = out.join("comparison.json");
    fs::write(&md_path, &table.markdown)?;
    fs::write(&json_path, table.to_json())?;
    manifest.add_artifact(&md_path);
    manifest.add_artifact(&json_path);
    manifest.write(out)?;
    print!("{}", table.markdown);
    Ok(())
}

fn freeze_label(freeze: &str) -> &str {
    match freeze {
        "first8" => "Frozen",
        "none" => "Unfrozen",
        other => other,
    }
}

/// `pipeline`: preprocess -> split -> train -> evaluate -> explain, with
/// per-stage manifests chained by content digest.
pub fn cmd_pipeline(
    config_path: &Path,
    profile: Option<Profile>,
    out_override: Option<PathBuf>,
    dry_run: bool,
) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(p) = profile {
        config.apply_profile(p);
    }
    let out_dir = out_override
        .or_else(|| config.pipeline.out_dir.clone())
        .ok_or_else(|| argument_error("pipeline needs --out or [pipeline].out_dir"))?;
    let snapshot = serde_json::to_value(&config).context("serialize config")?;

    if dry_run {
        let mut manifest = RunManifest::start("pipeline", snapshot, config.train.seed);
        manifest.status = "resolved".to_string();
        let path = manifest.write(&out_dir)?;
        println!("resolved configuration written to {}", path.display());
        return Ok(());
    }

    match run_pipeline(&config, &out_dir, &snapshot) {
        Ok(artifacts) => {
            let mut manifest =
                RunManifest::start("pipeline", snapshot, config.train.seed);
            if let Some(data) = &config.data.path {
                manifest.add_input(data)?;
            }
            for artifact in &artifacts {
                manifest.add_artifact(artifact);
            }
            manifest.write(&out_dir)?;
            println!("pipeline complete: {}", out_dir.display());
            Ok(())
        }
        Err((stage, err)) => {
            // partial outputs stay on disk; the marker names the stage
            let _ = fs::create_dir_all(&out_dir);
            let _ = fs::write(
                out_dir.join("FAILED"),
                format!("stage {stage} failed: {err:#}\n"),
            );
            let manifest = RunManifest::start("pipeline", snapshot, config.train.seed)
                .fail(&format!("stage {stage}: {err:#}"));
            let _ = manifest.write(&out_dir);
            Err(err.context(format!("pipeline stage {stage} failed")))
        }
    }
}

type StageResult<T> = std::result::Result<T, (String, anyhow::Error)>;

fn stage<T>(name: &str, result: Result<T>) -> StageResult<T> {
    result.map_err(|e| (name.to_string(), e))
}

fn run_pipeline(
    config: &RunConfig,
    out_dir: &Path,
    snapshot: &serde_json::Value,
) -> StageResult<Vec<PathBuf>> {
    let data_path = stage(
        "preprocess",
        config
            .data
            .path
            .clone()
            .ok_or_else(|| argument_error("config is missing [data].path")),
    )?;
    let seed = config.train.seed;
    let mut artifacts = Vec::new();

    // stage 1: preprocess
    let preprocess_dir = out_dir.join("01_preprocess");
    let cleaned_path = preprocess_dir.join("cleaned.jsonl");
    let clean_config = config.clean.to_clean_config();
    let (cleaned, excluded) = stage("preprocess", (|| -> Result<(Corpus, usize)> {
        let raw = load_data(&data_path, config.data.format)?;
        fs::create_dir_all(&preprocess_dir)
            .with_context(|| format!("cannot create {}", preprocess_dir.display()))?;
        let (cleaned, excluded) = textclean::clean_corpus(&raw, &clean_config);
        corpus::save_jsonl(&cleaned, &cleaned_path)?;
        Ok((cleaned, excluded))
    })())?;
    stage("preprocess", (|| -> Result<()> {
        let mut manifest = RunManifest::start(
            "pipeline:preprocess",
            json!({"excluded_count": excluded, "clean": config.clean}),
            seed,
        );
        manifest.add_input(&data_path)?;
        manifest.add_artifact(&cleaned_path);
        manifest.write(&preprocess_dir)?;
        Ok(())
    })())?;
    artifacts.push(cleaned_path.clone());

    // stage 2: split
    let split_dir = out_dir.join("02_split");
    let ratios = config.split.ratios;
    let (train_set, val_set, test_set) = stage(
        "split",
        corpus::split_corpus(&cleaned, (ratios[0], ratios[1], ratios[2]), seed)
            .map_err(anyhow::Error::from),
    )?;
    let split_paths = [
        split_dir.join("train.jsonl"),
        split_dir.join("val.jsonl"),
        split_dir.join("test.jsonl"),
    ];
    stage("split", (|| -> Result<()> {
        fs::create_dir_all(&split_dir)
            .with_context(|| format!("cannot create {}", split_dir.display()))?;
        corpus::save_jsonl(&train_set, &split_paths[0])?;
        corpus::save_jsonl(&val_set, &split_paths[1])?;
        corpus::save_jsonl(&test_set, &split_paths[2])?;
        let mut manifest = RunManifest::start(
            "pipeline:split",
            json!({"ratios": ratios, "seed": seed,
                   "sizes": [train_set.len(), val_set.len(), test_set.len()]}),
            seed,
        );
        manifest.add_upstream(&cleaned_path)?;
        for p in &split_paths {
            manifest.add_artifact(p);
        }
        manifest.write(&split_dir)?;
        Ok(())
    })())?;
    artifacts.extend(split_paths.iter().cloned());

    // stage 3: train
    let train_dir = out_dir.join("03_train");
    let (model, plan) = stage("train", (|| -> Result<(TrainableModel, FreezePlan)> {
        let model = model_with_tokenizer(&config.model.backend_id, config.model.max_length)?;
        let plan = FreezePlan::parse(&config.model.freeze, model.config.num_layers)?;
        Ok((model, plan))
    })())?;
    let (trained, history) = stage(
        "train",
        trainer::train(model, &plan, &train_set, &val_set, &config.train, &train_dir)
            .map_err(anyhow::Error::from),
    )?;
    stage("train", (|| -> Result<()> {
        let mut summary_model = trained.clone();
        let summary = apply_freeze_plan(&mut summary_model, &plan)?;
        let mut manifest = RunManifest::start(
            "pipeline:train",
            json!({
                "backend_id": config.model.backend_id,
                "freeze": config.model.freeze,
                "train": config.train,
                "frozen_param_count": summary.frozen_param_count,
                "trainable_param_count": summary.trainable_param_count,
            }),
            seed,
        );
        manifest.add_upstream(&split_paths[0])?;
        manifest.add_upstream(&split_paths[1])?;
        for record in &history.records {
            manifest.add_artifact(Path::new(&record.checkpoint_path));
        }
        manifest.add_artifact(&train_dir.join("history.jsonl"));
        manifest.write(&train_dir)?;
        Ok(())
    })())?;
    artifacts.push(train_dir.join("history.jsonl"));
    let final_checkpoint = PathBuf::from(
        &history
            .records
            .last()
            .map(|r| r.checkpoint_path.clone())
            .unwrap_or_else(|| train_dir.display().to_string()),
    );

    // stage 4: evaluate
    let eval_dir = out_dir.join("04_evaluate");
    let report_path = eval_dir.join("report.json");
    let report = stage("evaluate", (|| -> Result<EvalReport> {
        let probe = probe_from_model(&trained, trained.tokenizer)?;
        let report = metrics::evaluate(&probe, &test_set)?;
        fs::create_dir_all(&eval_dir)
            .with_context(|| format!("cannot create {}", eval_dir.display()))?;
        write_report(&report, &report_path)?;
        let row = ComparisonRow::from_report(
            format!("{} ({})", config.model.backend_id, freeze_label(&config.model.freeze)),
            &report,
        );
        let table = metrics::comparison_table(&[row])?;
        fs::write(eval_dir.join("comparison.md"), &table.markdown)?;
        fs::write(eval_dir.join("comparison.json"), table.to_json())?;
        let mut manifest = RunManifest::start("pipeline:evaluate", snapshot.clone(), seed);
        manifest.add_upstream(&split_paths[2])?;
        manifest.add_upstream(&final_checkpoint.join("model.json"))?;
        manifest.add_artifact(&report_path);
        manifest.add_artifact(&eval_dir.join("comparison.md"));
        manifest.add_artifact(&eval_dir.join("comparison.json"));
        manifest.write(&eval_dir)?;
        Ok(report)
    })())?;
    artifacts.push(report_path);
    artifacts.push(eval_dir.join("comparison.md"));

    // stage 5: explain one sentence
    let explain_dir = out_dir.join("05_explain");
    stage("explain", (|| -> Result<()> {
        let text = match &config.lime.explain_text {
            Some(raw) => textclean::clean(raw, &clean_config),
            None => test_set
                .examples()
                .first()
                .map(|ex| ex.text.clone())
                .unwrap_or_default(),
        };
        if text.is_empty() {
            return Err(argument_error("no usable sentence to explain"));
        }
        let probe = probe_from_model(&trained, trained.tokenizer)?;
        let target = TargetClass::parse(&config.lime.target_class)?;
        let explanation = limex::explain(&probe, &text, target, &config.lime.to_lime_config())?;
        fs::create_dir_all(&explain_dir)
            .with_context(|| format!("cannot create {}", explain_dir.display()))?;
        fs::write(
            explain_dir.join("explanation.json"),
            limex::render_explanation(&explanation, RenderFormat::Json),
        )?;
        fs::write(
            explain_dir.join("explanation.html"),
            limex::render_explanation(&explanation, RenderFormat::Html),
        )?;
        let mut manifest = RunManifest::start(
            "pipeline:explain",
            json!({"text": text, "lime": config.lime}),
            config.lime.seed,
        );
        manifest.add_upstream(&final_checkpoint.join("model.json"))?;
        manifest.add_artifact(&explain_dir.join("explanation.json"));
        manifest.add_artifact(&explain_dir.join("explanation.html"));
        manifest.write(&explain_dir)?;
        Ok(())
    })())?;
    artifacts.push(explain_dir.join("explanation.json"));

    println!(
        "evaluate: n={} accuracy {:.4} f1 {:.4} (macro)",
        report.n, report.overall.accuracy, report.overall.f1
    );
    Ok(artifacts)
}
