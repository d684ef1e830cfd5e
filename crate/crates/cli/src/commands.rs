use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rubricbench::dataset::{
    dataset_stats, export_jsonl, import_five_way_jsonl, import_jsonl, split_train_val, Dataset, RubricKind, Split,
};
use rubricbench::evaluation::{
    rubric_similarity_report, sample_annotation_sheet, summarize_annotations, AnnotationSheet, BootstrapOptions,
    EvalReport,
};
use rubricbench::grading::{grade_samples, GradingOptions, GradingRecord};
use rubricbench::llm::ModelConfig;
use rubricbench::manifest::RunManifest;
use rubricbench::meta::{generate_meta_dataset, MetaDatasetOptions, RubricMode};
use rubricbench::prompting::PromptMode;
use rubricbench::synthesis::{
    diversity_enhanced_generate, generate_labeled_responses, relabel_dataset, SynthesisMethod, SynthesisPlan,
};
use rubricbench::LabelScheme;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, dataset_path, out_dir, require_file, ModelFlags};
use crate::{
    build_client, AnnotateSampleArgs, AnnotateSummarizeArgs, EvalArgs, GradeArgs, ImportArgs, MetaModeArg,
    PromptModeArg, RelabelArgs, RunConfig, SimilarityArgs, SplitArg, SplitArgs, SynthDataArgs, SynthMetaArgs,
    UsageError,
};

const DEFAULT_PER_LABEL: usize = 4;

pub(crate) fn load(path: &Path, scheme: LabelScheme) -> anyhow::Result<Dataset> {
    let (ds, _) = import_jsonl(path, scheme).with_context(|| format!("reading {}", path.display()))?;
    if ds.is_empty() {
        return Err(UsageError(format!("{} contains no samples", path.display())).into());
    }
    Ok(ds)
}

pub(crate) fn create_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_dataset(path: &Path, ds: &Dataset) -> anyhow::Result<()> {
    export_jsonl(path, ds).with_context(|| format!("writing {}", path.display()))
}

/// Write `manifest.json` into `dir` after digesting the listed outputs.
fn finish_manifest(mut manifest: RunManifest, dir: &Path, outputs: &[PathBuf]) -> anyhow::Result<()> {
    for p in outputs {
        manifest.add_output(p)?;
    }
    manifest.write(dir.join("manifest.json"))?;
    Ok(())
}

pub(crate) fn read_results(path: &Path) -> anyhow::Result<Vec<GradingRecord>> {
    require_file(path)?;
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GradingRecord = serde_json::from_str(&line)
            .map_err(|e| UsageError(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(UsageError(format!("{} contains no results", path.display())).into());
    }
    Ok(out)
}

fn write_results(path: &Path, records: &[GradingRecord]) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn resolve_mode(mode: Option<PromptModeArg>, k: Option<u8>, run: &RunConfig) -> anyhow::Result<PromptMode> {
    let mode = match (mode, k) {
        (Some(PromptModeArg::Rubric), Some(_)) => {
            return Err(UsageError("--k applies only to --mode examples".into()).into())
        }
        (Some(PromptModeArg::Rubric), None) => PromptMode::Rubric,
        (Some(PromptModeArg::Examples), k) => PromptMode::examples(k.unwrap_or(0))?,
        (None, Some(k)) => PromptMode::examples(k)?,
        (None, None) => match &run.mode {
            Some(m) => m.parse()?,
            None => PromptMode::Rubric,
        },
    };
    Ok(mode)
}

pub fn import(a: ImportArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "dataset")?;
    let scheme = config::scheme(a.scheme, run);
    let (ds, report) = if a.five_way {
        import_five_way_jsonl(&path, scheme)
    } else {
        import_jsonl(&path, scheme)
    }
    .with_context(|| format!("reading {}", path.display()))?;
    let stats = dataset_stats(&ds)?;
    let counts = ds.label_counts();
    let mut splits: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &ds.samples {
        *splits
            .entry(match s.split {
                Split::Train => "train",
                Split::Val => "val",
                Split::Test => "test",
            })
            .or_default() += 1;
    }
    println!("dataset    {} ({scheme})", ds.name);
    println!("samples    {}", stats.n_responses);
    println!("questions  {}", stats.n_questions);
    println!("rubrics    {}", serde_json::to_value(ds.rubric_kind)?.as_str().unwrap_or("?"));
    for &label in scheme.labels() {
        println!("  {:<18} {}", label.display_name(), counts.get(&label).copied().unwrap_or(0));
    }
    for (split, n) in &splits {
        println!("  split {split:<12} {n}");
    }
    println!(
        "response length (whitespace tokens): mean {:.1}, median {:.1}, min {}, max {}",
        stats.mean, stats.median, stats.min, stats.max
    );
    println!("note: lengths count whitespace-separated tokens, not subword tokens");
    if !report.warnings.is_empty() {
        println!("warnings   {}", report.warnings.len());
    }
    if let Some(dir) = a.out.as_ref().or(run.out.as_ref()) {
        create_out(dir)?;
        let out = dir.join("dataset.jsonl");
        write_dataset(&out, &ds)?;
        let mut m = RunManifest::new(
            "import",
            json!({"dataset": path_str(&path), "scheme": scheme, "five_way": a.five_way}),
        );
        m.add_input(&path)?;
        m.stats = json!({"stats": stats, "warnings": report.warnings});
        finish_manifest(m, dir, &[out])?;
    }
    Ok(())
}

pub fn split(a: SplitArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "dataset")?;
    let scheme = config::scheme(a.scheme, run);
    let seed = config::seed(a.seed, run);
    let ds = load(&path, scheme)?;
    let (train, val) = split_train_val(&ds, a.fraction, seed)?;
    let val_ids: std::collections::HashSet<&str> = val.samples.iter().map(|s| s.id.as_str()).collect();
    let mut all = ds.samples.clone();
    for s in &mut all {
        if val_ids.contains(s.id.as_str()) {
            s.split = Split::Val;
        }
    }
    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let outputs = [dir.join("dataset.jsonl"), dir.join("train.jsonl"), dir.join("val.jsonl")];
    write_dataset(&outputs[0], &ds.with_samples(all)?)?;
    write_dataset(&outputs[1], &train)?;
    write_dataset(&outputs[2], &val)?;
    let mut m = RunManifest::new(
        "split",
        json!({"dataset": path_str(&path), "scheme": scheme, "fraction": a.fraction, "seed": seed}),
    );
    m.add_input(&path)?;
    m.stats = json!({"train": train.len(), "val": val.len()});
    finish_manifest(m, &dir, &outputs)?;
    println!("train {} / val {} -> {}", train.len(), val.len(), dir.display());
    Ok(())
}

pub fn synth_meta(a: SynthMetaArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "base dataset")?;
    let seed = config::seed(a.seed, run);
    let base = load(&path, LabelScheme::TwoWay)?;
    let mode = match a.mode {
        MetaModeArg::Random => RubricMode::Random,
        MetaModeArg::Fixed => RubricMode::Fixed,
    };
    let mut opts = MetaDatasetOptions::new(a.n, mode, seed);
    opts.include_rubric = !a.no_rubric;
    let generation = generate_meta_dataset(&base, &opts)?;
    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let out = dir.join("dataset.jsonl");
    write_dataset(&out, &generation.dataset)?;
    let counts = generation.dataset.label_counts();
    let mut m = RunManifest::new(
        "synth-meta",
        json!({
            "dataset": path_str(&path), "n": a.n, "mode": mode, "seed": seed,
            "include_rubric": opts.include_rubric, "split": opts.split,
        }),
    );
    m.add_input(&path)?;
    m.stats = json!({
        "label_counts": counts,
        "uncovered_responses": generation.uncovered.len(),
        "coverage_repairs": generation.repairs,
    });
    finish_manifest(m, &dir, std::slice::from_ref(&out))?;
    let fmt: Vec<String> = counts.iter().map(|(l, n)| format!("{}={n}", l.short_code())).collect();
    println!("{} meta samples ({}) -> {}", generation.dataset.len(), fmt.join(" "), out.display());
    if !generation.uncovered.is_empty() {
        println!("{} base responses could not be covered", generation.uncovered.len());
    }
    Ok(())
}

pub fn grade(a: GradeArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "dataset")?;
    let scheme = config::scheme(a.tier, run);
    let mode = resolve_mode(a.mode, a.k, run)?;
    let seed = config::seed(a.seed, run);
    let ds = load(&path, scheme)?;
    let train_path = a.train.clone().or_else(|| run.train.clone());
    let train = match &train_path {
        Some(p) => {
            require_file(p)?;
            Some(load(p, scheme)?)
        }
        None => None,
    };
    let samples: Vec<_> = ds
        .samples
        .iter()
        .filter(|s| match a.split {
            SplitArg::All => true,
            SplitArg::Train => s.split == Split::Train,
            SplitArg::Val => s.split == Split::Val,
            SplitArg::Test => s.split == Split::Test,
        })
        .cloned()
        .collect();
    if samples.is_empty() {
        return Err(UsageError(format!("no samples in split {:?} of {}", a.split, path.display())).into());
    }
    let cfg = config::grading_model(run, &a.model)?;
    let setup = build_client(&a.transport, run)?;
    let mut opts = GradingOptions::new(mode, scheme, seed);
    opts.feedback = a.feedback;
    let result = grade_samples(&setup.client, &cfg, &samples, Some(train.as_ref().unwrap_or(&ds)), &opts);
    setup.finish()?;
    let graded = result?;

    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let out = dir.join("results.jsonl");
    write_results(&out, &graded.records)?;
    let mut m = RunManifest::new(
        "grade",
        json!({
            "dataset": path_str(&path),
            "train": train_path.as_deref().map(path_str),
            "scheme": scheme, "mode": mode, "split": format!("{:?}", a.split).to_lowercase(),
            "feedback": a.feedback, "seed": seed, "model": cfg,
            "replay": setup.replay.as_deref().map(path_str),
            "cache_dir": a.transport.cache_dir.as_deref().or(run.cache_dir.as_deref()).map(path_str),
        }),
    );
    m.add_input(&path)?;
    if let Some(p) = &train_path {
        m.add_input(p)?;
    }
    if let Some(p) = &setup.replay {
        m.add_input(p)?;
    }
    let stats = setup.client.stats();
    m.stats = json!({
        "n": graded.records.len(),
        "n_unscored": graded.n_unscored(),
        "retried": graded.records.iter().filter(|r| r.attempts > 1).count(),
    });
    finish_manifest(m, &dir, std::slice::from_ref(&out))?;
    println!(
        "graded {} samples ({} unscored, {} requests, {} cache hits) -> {}",
        graded.records.len(),
        graded.n_unscored(),
        stats.transport_calls,
        stats.cache_hits,
        out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs, run: &RunConfig) -> anyhow::Result<()> {
    let records = read_results(&a.results)?;
    let scheme = records[0].scheme;
    let opts = BootstrapOptions {
        resamples: a.resamples,
        alpha: a.alpha,
        seed: config::seed(a.seed, run),
    };
    let report = EvalReport::compute(&records, scheme, opts)?;
    let md = report.to_markdown(a.by_question);
    print!("{md}");
    if let Some(dir) = a.out.as_ref().or(run.out.as_ref()) {
        create_out(dir)?;
        let json_out = dir.join("eval.json");
        let md_out = dir.join("report.md");
        write_json(&json_out, &report)?;
        write_text(&md_out, &md)?;
        let mut m = RunManifest::new(
            "eval",
            json!({"results": path_str(&a.results), "bootstrap": opts, "by_question": a.by_question}),
        );
        m.add_input(&a.results)?;
        m.stats = json!({"n": report.n, "n_unscored": report.n_unscored});
        finish_manifest(m, dir, &[json_out, md_out])?;
    }
    Ok(())
}

pub fn relabel(a: RelabelArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "dataset")?;
    let scheme = config::scheme(a.scheme, run);
    let mode = resolve_mode(a.mode, a.k, run)?;
    let seed = config::seed(a.seed, run);
    let ds = load(&path, scheme)?;
    let cfg = config::grading_model(run, &a.model)?;
    let setup = build_client(&a.transport, run)?;
    let result = relabel_dataset(&setup.client, &cfg, &ds, mode, Some(&ds), seed);
    setup.finish()?;
    let out_ds = result?;
    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let out = dir.join("dataset.jsonl");
    write_dataset(&out, &out_ds.dataset)?;
    let mut m = RunManifest::new(
        "relabel",
        json!({"dataset": path_str(&path), "scheme": scheme, "mode": mode, "seed": seed, "model": cfg,
               "replay": setup.replay.as_deref().map(path_str)}),
    );
    m.add_input(&path)?;
    m.stats = serde_json::to_value(&out_ds.report)?;
    finish_manifest(m, &dir, std::slice::from_ref(&out))?;
    println!(
        "relabeled {} samples ({} changed, {} dropped as unscored) -> {}",
        out_ds.dataset.len(),
        out_ds.report.disagreements,
        out_ds.report.n_unscored_dropped,
        out.display()
    );
    Ok(())
}

fn generation_model(a: &SynthDataArgs, run: &RunConfig) -> anyhow::Result<ModelConfig> {
    let flags = ModelFlags {
        api_key_env: a.model.api_key_env.clone(),
        max_tokens: a.model.max_tokens,
        ..ModelFlags::default()
    };
    config::resolve_model(
        run.generation_model.as_ref(),
        ModelConfig::generation(config::DEFAULT_BASE_URL, config::DEFAULT_GENERATION_MODEL),
        a.gen_base_url.as_deref().or(a.model.base_url.as_deref()),
        &flags,
        a.gen_model.as_deref(),
        a.gen_temperature,
    )
}

pub fn synth_data(a: SynthDataArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "dataset")?;
    let scheme = config::scheme(a.scheme, run);
    let seed = config::seed(a.seed, run);
    let synth_cfg = run.synthesis.clone().unwrap_or_default();
    let method = a
        .method
        .or(synth_cfg.method)
        .ok_or_else(|| UsageError("--method is required (labels-only, labels-and-responses or diversity)".into()))?;
    let ds = load(&path, scheme)?;
    let train_samples: Vec<_> = ds.samples.iter().filter(|s| s.split == Split::Train).cloned().collect();
    let source = if train_samples.is_empty() {
        ds.clone()
    } else {
        ds.with_samples(train_samples)?
    };

    let mut plan = SynthesisPlan::new(
        method,
        scheme,
        generation_model(&a, run)?,
        config::grading_model(run, &a.model)?,
        a.per_label.or(synth_cfg.per_label).unwrap_or(DEFAULT_PER_LABEL),
        seed,
    );
    if let Some(c) = a.cases.or(synth_cfg.cases_per_question) {
        plan.cases_per_question = c;
    }
    plan.target_total = a.target_total.or(synth_cfg.target_total);
    if let Some(r) = synth_cfg.length_range {
        plan.length_range = r;
    }
    plan.validate()?;

    let setup = build_client(&a.transport, run)?;
    let name = format!("{}-{method}", ds.name);
    let questions = source.questions();
    let relabel_mode = if source.rubric_kind == RubricKind::QuestionSpecific {
        PromptMode::Rubric
    } else {
        PromptMode::Examples { k: 0 }
    };
    let result = match method {
        SynthesisMethod::LabelsOnly => {
            relabel_dataset(&setup.client, &plan.grading_cfg, &source, relabel_mode, None, seed)
        }
        SynthesisMethod::LabelsAndResponses => generate_labeled_responses(&setup.client, &questions, &plan, &name),
        SynthesisMethod::DiversityEnhanced => diversity_enhanced_generate(&setup.client, &questions, &plan, &name),
    };
    setup.finish()?;
    let mut output = result?;
    if output.report.method.is_none() {
        output.report.method = Some(method);
    }

    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let out = dir.join("dataset.jsonl");
    write_dataset(&out, &output.dataset)?;
    let mut config_echo = serde_json::to_value(&plan)?;
    if let Value::Object(obj) = &mut config_echo {
        obj.insert("dataset".into(), json!(path_str(&path)));
        obj.insert("replay".into(), json!(setup.replay.as_deref().map(path_str)));
        if method == SynthesisMethod::LabelsOnly {
            obj.insert("relabel_mode".into(), json!(relabel_mode));
        }
    }
    let mut m = RunManifest::new("synth-data", config_echo);
    m.add_input(&path)?;
    if let Some(p) = &setup.replay {
        m.add_input(p)?;
    }
    m.stats = json!({"report": output.report, "label_counts": output.dataset.label_counts()});
    finish_manifest(m, &dir, std::slice::from_ref(&out))?;
    println!(
        "{method}: {} samples from {} questions ({} skipped, {} relabel disagreements) -> {}",
        output.dataset.len(),
        questions.len(),
        output.report.skipped_questions.len(),
        output.report.disagreements,
        out.display()
    );
    Ok(())
}

pub fn similarity(a: SimilarityArgs, run: &RunConfig) -> anyhow::Result<()> {
    let path = dataset_path(a.dataset.as_ref(), run.dataset.as_ref(), "dataset")?;
    let scheme = config::scheme(a.scheme, run);
    let ds = load(&path, scheme)?;
    let cfg = config::resolve_model(
        run.embedding_model.as_ref(),
        ModelConfig::new(config::DEFAULT_BASE_URL, config::DEFAULT_EMBEDDING_MODEL),
        a.model.base_url.as_deref(),
        &a.model,
        a.embed_model.as_deref().or(a.model.model.as_deref()),
        None,
    )?;
    let setup = build_client(&a.transport, run)?;
    let result = rubric_similarity_report(&setup.client, &cfg, &ds);
    setup.finish()?;
    let report = result?;
    let md = report.to_markdown();
    print!("{md}");
    println!("note: values depend on the embedding endpoint and model");
    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let json_out = dir.join("similarity.json");
    let md_out = dir.join("report.md");
    write_json(&json_out, &report)?;
    write_text(&md_out, &md)?;
    let mut m = RunManifest::new(
        "similarity",
        json!({"dataset": path_str(&path), "scheme": scheme, "model": cfg,
               "replay": setup.replay.as_deref().map(path_str)}),
    );
    m.add_input(&path)?;
    m.stats = json!({"n_questions": report.n_questions, "n_answer_pairs": report.n_answer_pairs});
    finish_manifest(m, &dir, &[json_out, md_out])?;
    Ok(())
}

pub fn annotate_sample(a: AnnotateSampleArgs, run: &RunConfig) -> anyhow::Result<()> {
    let records = read_results(&a.results)?;
    let seed = config::seed(a.seed, run);
    let sheet = sample_annotation_sheet(&records, a.condition, a.n, seed)?;
    let dir = out_dir(a.out.as_ref(), run);
    create_out(&dir)?;
    let out = dir.join("annotation_sheet.csv");
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    sheet.write_csv(file)?;
    let mut m = RunManifest::new(
        "annotate-sample",
        json!({"results": path_str(&a.results), "condition": a.condition, "n": a.n, "seed": seed}),
    );
    m.add_input(&a.results)?;
    m.stats = json!({"rows": sheet.rows.len()});
    finish_manifest(m, &dir, std::slice::from_ref(&out))?;
    println!("{} rows -> {}", sheet.rows.len(), out.display());
    Ok(())
}

pub fn annotate_summarize(a: AnnotateSummarizeArgs) -> anyhow::Result<()> {
    require_file(&a.sheet)?;
    let file = fs::File::open(&a.sheet).with_context(|| format!("opening {}", a.sheet.display()))?;
    let sheet = AnnotationSheet::read_csv(file).with_context(|| format!("reading {}", a.sheet.display()))?;
    let s = summarize_annotations(&sheet)?;
    let pct = |p: &rubricbench::evaluation::Proportion| format!("{:.0}% ({}/{})", p.fraction * 100.0, p.count, p.total);
    println!("| Dimension | Value | Share |");
    println!("|---|---|---|");
    println!("| Label correctness | Human | {} |", pct(&s.label_correct_human));
    println!("| Label correctness | LLM | {} |", pct(&s.label_correct_llm));
    println!("| Explainability | Yes | {} |", pct(&s.explainability_yes));
    println!("| Explainability | No | {} |", pct(&s.explainability_no));
    println!("| Subjectivity | Yes | {} |", pct(&s.subjectivity_yes));
    println!("| Subjectivity | No | {} |", pct(&s.subjectivity_no));
    if let Some(dir) = &a.out {
        create_out(dir)?;
        write_json(&dir.join("summary.json"), &s)?;
    }
    Ok(())
}
