//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits nonzero if any failed. Offline: replay fixtures only.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rubricbench::dataset::{import_jsonl, Split};
use rubricbench::evaluation::{accuracy, bootstrap_ci, cosine_similarity, macro_f1};
use rubricbench::grading::{grading_prompt, GradingOptions};
use rubricbench::meta::{evaluate_rubric, fixed_rubric, generate_meta_rubric, CorrectnessVector, LevelCriterion, MetaRubric};
use rubricbench::prompting::{parse_score, render_score, PromptMode, ScoreError};
use rubricbench::{Label, LabelScheme};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// sha256 of `eval.json` from `grade --mode rubric` then `eval` on the grading fixture.
const EVAL_REPORT_DIGEST: &str = "6551179e6402f2ef5c625bd353ced2cd28f70ff614dacd40393ea96b339a3cd3";
/// sha256 of `dataset.jsonl` from `synth-data --method diversity --target-total 24`.
const DIVERSITY_DATASET_DIGEST: &str = "64ae9d506b99cafed3dd1bb2325a02cba3e6e3e9b2f4b3fc9471a11c62e3480f";

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rubricbench"))
        .args(args)
        .env_remove("RUBRICBENCH_API_KEY")
        .output()
        .expect("binary runs")
}

fn cli_ok(args: &[&str]) -> Result<Output, String> {
    let out = cli(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`rubricbench {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn sha256_file(path: &Path) -> Result<String, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mask_vector(mask: u8) -> CorrectnessVector {
    let mut bits = [false; 5];
    for (i, b) in bits.iter_mut().enumerate() {
        *b = mask & (1 << i) != 0;
    }
    CorrectnessVector(bits)
}

/// Direct re-check of the rubric conditions, written without the crate's
/// criterion helpers.
fn recheck(r: &MetaRubric, bits: &[bool; 5]) -> Label {
    let count = bits.iter().filter(|&&b| b).count();
    let meets = |min: u8, required: &BTreeSet<u8>| {
        count >= min as usize && required.iter().all(|&q| bits[q as usize - 1])
    };
    if meets(r.correct.min, &r.correct.required) {
        Label::Correct
    } else if meets(r.partially_correct.min, &r.partially_correct.required) {
        Label::PartiallyCorrect
    } else {
        Label::Incorrect
    }
}

fn rank(l: Label) -> u8 {
    match l {
        Label::Incorrect => 0,
        Label::PartiallyCorrect => 1,
        Label::Correct => 2,
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let r = generate_meta_rubric(&mut rng);
        for mask in 0..32u8 {
            let v = mask_vector(mask);
            if evaluate_rubric(&r, &v) != recheck(&r, &v.0) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(mismatches == 0, || format!("{mismatches} mismatches"))?;
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 rubrics x 32 vectors, 0 mismatches in {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let r = fixed_rubric();
    let mut census: BTreeMap<u8, usize> = BTreeMap::new();
    for mask in 0..32u8 {
        *census.entry(rank(recheck(&r, &mask_vector(mask).0))).or_default() += 1;
        check(evaluate_rubric(&r, &mask_vector(mask)) == recheck(&r, &mask_vector(mask).0), || {
            format!("fixed rubric disagrees with recheck on mask {mask:05b}")
        })?;
    }
    let got = (census.get(&2).copied().unwrap_or(0), census.get(&1).copied().unwrap_or(0), census.get(&0).copied().unwrap_or(0));
    check(got == (3, 4, 25), || format!("census C/P/I = {got:?}"))?;

    let figure = MetaRubric::new(LevelCriterion::new(4, [2, 3, 4]), LevelCriterion::new(2, [2])).map_err(|e| e.to_string())?;
    let cases = [
        ([true, true, true, true, false], Label::Correct),
        ([false, true, false, true, false], Label::PartiallyCorrect),
        ([true, false, false, false, false], Label::Incorrect),
    ];
    for (bits, want) in cases {
        let got = evaluate_rubric(&figure, &CorrectnessVector(bits));
        check(got == want, || format!("{bits:?} graded {got:?}, expected {want:?}"))?;
    }
    Ok("census 3/4/25; three example meta-answers grade I/P/C".into())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    for i in 0..10_000 {
        let r = generate_meta_rubric(&mut rng);
        let (c, p) = (&r.correct, &r.partially_correct);
        if c.min <= p.min {
            violations.push(format!("#{i}: count hierarchy"));
        }
        if !(p.required.is_subset(&c.required) && c.required.len() > p.required.len()) {
            violations.push(format!("#{i}: required components not a proper superset"));
        }
        if usize::from(c.min) <= c.required.len() || usize::from(p.min) <= p.required.len() {
            violations.push(format!("#{i}: count not above component count"));
        }
        let labels: Vec<Label> = (0..32u8).map(|m| evaluate_rubric(&r, &mask_vector(m))).collect();
        for want in [Label::Correct, Label::PartiallyCorrect, Label::Incorrect] {
            if !labels.contains(&want) {
                violations.push(format!("#{i}: empty {want:?} bucket"));
            }
        }
        for a in 0..32u8 {
            for b in 0..32u8 {
                if a & b == a && rank(labels[b as usize]) < rank(labels[a as usize]) {
                    violations.push(format!("#{i}: monotonicity {a:05b} -> {b:05b}"));
                }
            }
        }
    }
    check(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    Ok("10000 rubrics, 0 violations".into())
}

fn criterion_4(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let base = fixture("toy_base_2way.jsonl");
    let (a, b) = (tmp.join("meta-a"), tmp.join("meta-b"));
    for dir in [&a, &b] {
        cli_ok(&["synth-meta", &base, "--n", "3000", "--seed", "11", "--out", dir.to_str().unwrap()])?;
    }
    let out_a = fs::read(a.join("dataset.jsonl")).map_err(|e| e.to_string())?;
    let out_b = fs::read(b.join("dataset.jsonl")).map_err(|e| e.to_string())?;
    check(out_a == out_b, || "repeated seed produced different bytes".into())?;

    let rows = read_jsonl(&a.join("dataset.jsonl"))?;
    check(rows.len() == 3000, || format!("{} samples", rows.len()))?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    for row in &rows {
        let label: Label = serde_json::from_value(row["label"].clone()).map_err(|e| e.to_string())?;
        *counts.entry(format!("{label:?}")).or_default() += 1;
        let rubric: MetaRubric = serde_json::from_value(row["meta"]["rubric"].clone()).map_err(|e| e.to_string())?;
        let bits: [bool; 5] = serde_json::from_value(row["meta"]["vector"].clone()).map_err(|e| e.to_string())?;
        let oracle = recheck(&rubric, &bits);
        check(oracle == label, || format!("{} stored {label:?}, oracle {oracle:?}", row["id"]))?;
        for id in row["meta"]["source_sample_ids"].as_array().into_iter().flatten() {
            used.insert(id.as_str().unwrap_or_default().to_string());
        }
    }
    for (label, n) in &counts {
        check(n.abs_diff(1000) <= 1, || format!("{label}: {n}"))?;
    }
    let base_ids: BTreeSet<String> = read_jsonl(Path::new(&base))?
        .iter()
        .map(|r| r["id"].as_str().unwrap_or_default().to_string())
        .collect();
    let missing = base_ids.difference(&used).count();
    check(missing == 0, || format!("{missing} base responses never used"))?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("3000 samples {counts:?}, full coverage, oracle labels, byte-identical, {elapsed:.2?}"))
}

fn criterion_5() -> Outcome {
    for scheme in [LabelScheme::TwoWay, LabelScheme::ThreeWay] {
        for &label in scheme.labels() {
            let text = render_score(label, scheme);
            let back = parse_score(&text, scheme).map_err(|e| e.to_string())?;
            check(back == label, || format!("{text} parsed as {back:?} under {scheme}"))?;
        }
    }
    let three = LabelScheme::ThreeWay;
    check(parse_score("[[2]]", three) == Ok(Label::Correct), || "[[2]]".into())?;
    check(parse_score("I think [[1]]. Final: [[0]]", three) == Ok(Label::Incorrect), || "last occurrence".into())?;
    check(parse_score("no score here", three) == Err(ScoreError::NoScoreFound), || "no score".into())?;
    check(parse_score("[[7]]", three) == Err(ScoreError::OutOfRange(7)), || "out of range".into())?;

    let (ds, _) = import_jsonl(fixtures().join("grading_3way.jsonl"), three).map_err(|e| e.to_string())?;
    let count = |text: &str| text.lines().filter(|l| l.starts_with("  Example ")).count();
    for sample in ds.samples.iter().filter(|s| s.split == Split::Test) {
        let opts = GradingOptions::new(PromptMode::Rubric, three, 0);
        let (prompt, n) = grading_prompt(sample, Some(&ds), &opts).map_err(|e| e.to_string())?;
        check(n == 0 && count(&prompt.user()) == 0, || format!("rubric prompt for {} has examples", sample.id))?;
        for k in 0..=5u8 {
            let opts = GradingOptions::new(PromptMode::examples(k).map_err(|e| e.to_string())?, three, 0);
            let (prompt, n) = grading_prompt(sample, Some(&ds), &opts).map_err(|e| e.to_string())?;
            let rendered = count(&prompt.user());
            let want = 3 * usize::from(k);
            check(n == want && rendered == want, || format!("k={k}: {rendered} rendered, {n} reported, want {want}"))?;
        }
    }
    Ok("round trip in both tiers, 4 parse examples, 0 / 3k examples per prompt".into())
}

/// Confusion-matrix oracle: rows are gold, columns predicted.
fn oracle_metrics(preds: &[Label], golds: &[Label], scheme: LabelScheme) -> (f64, f64) {
    let idx = |l: Label| scheme.labels().iter().position(|&x| x == l).unwrap();
    let k = scheme.labels().len();
    let mut m = vec![vec![0u64; k]; k];
    for (&p, &g) in preds.iter().zip(golds) {
        m[idx(g)][idx(p)] += 1;
    }
    let diag: u64 = (0..k).map(|i| m[i][i]).sum();
    let acc = diag as f64 / preds.len() as f64;
    let mut f1s = Vec::new();
    for i in 0..k {
        let row: u64 = m[i].iter().sum();
        let col: u64 = (0..k).map(|j| m[j][i]).sum();
        if row + col > 0 {
            f1s.push((2 * m[i][i]) as f64 / (row + col) as f64);
        }
    }
    let mut sum = 0.0;
    for f in &f1s {
        sum += f;
    }
    (acc, sum / f1s.len() as f64)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let scheme = if rng.gen_bool(0.5) { LabelScheme::TwoWay } else { LabelScheme::ThreeWay };
        let labels = scheme.labels();
        let n = rng.gen_range(1..=40u32) as usize;
        let draw = |rng: &mut ChaCha8Rng| labels[rng.gen_range(0..labels.len() as u32) as usize];
        let golds: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let preds: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let (acc, f1) = oracle_metrics(&preds, &golds, scheme);
        let got_acc = accuracy(&preds, &golds).map_err(|e| e.to_string())?;
        let got_f1 = macro_f1(&preds, &golds, scheme).map_err(|e| e.to_string())?;
        check(got_acc == acc && got_f1 == f1, || {
            format!("instance {i}: accuracy {got_acc} vs {acc}, macro-F1 {got_f1} vs {f1}")
        })?;
    }
    use Label::{Correct as C, Incorrect as I, PartiallyCorrect as P};
    let f1 = macro_f1(&[C, P, P, I, I, C], &[C, C, P, P, I, I], LabelScheme::ThreeWay).map_err(|e| e.to_string())?;
    check(f1 == 0.5, || format!("fixture macro-F1 {f1}"))?;

    let all = vec![C; 40];
    let ci = bootstrap_ci(&all, &all, accuracy, 2000, 0.05, 9).map_err(|e| e.to_string())?;
    check(ci == (1.0, 1.0), || format!("all-correct CI {ci:?}"))?;
    let mixed: Vec<Label> = (0..40).map(|i| [C, P, I][i % 3]).collect();
    let golds: Vec<Label> = (0..40).map(|i| [C, P, I][(i * 7 / 5) % 3]).collect();
    let a = bootstrap_ci(&mixed, &golds, accuracy, 2000, 0.05, 9).map_err(|e| e.to_string())?;
    let b = bootstrap_ci(&mixed, &golds, accuracy, 2000, 0.05, 9).map_err(|e| e.to_string())?;
    check(a == b, || format!("same seed gave {a:?} and {b:?}"))?;
    Ok("1000 instances exact, fixture 0.5, all-correct CI (1, 1), seed-reproducible".into())
}

fn criterion_7(tmp: &Path) -> Outcome {
    let data = fixture("grading_3way.jsonl");
    let replay = fixture("grading_replay.json");
    let mut digests = Vec::new();
    for run in ["a", "b"] {
        let g = tmp.join(format!("grade-{run}"));
        let e = tmp.join(format!("eval-{run}"));
        cli_ok(&["grade", &data, "--mode", "rubric", "--seed", "5", "--replay", &replay, "--out", g.to_str().unwrap()])?;
        cli_ok(&["eval", g.join("results.jsonl").to_str().unwrap(), "--seed", "5", "--out", e.to_str().unwrap()])?;
        digests.push(sha256_file(&e.join("eval.json"))?);
    }
    check(digests[0] == digests[1], || "eval.json differs between identical runs".into())?;
    check(digests[0] == EVAL_REPORT_DIGEST, || format!("eval.json digest {} != committed {EVAL_REPORT_DIGEST}", digests[0]))?;

    let div_replay = fixture("diversity_replay.json");
    let s = tmp.join("synth");
    cli_ok(&[
        "synth-data", &data, "--method", "diversity", "--target-total", "24", "--seed", "5",
        "--replay", &div_replay, "--out", s.to_str().unwrap(),
    ])?;
    let ds_digest = sha256_file(&s.join("dataset.jsonl"))?;
    check(ds_digest == DIVERSITY_DATASET_DIGEST, || {
        format!("dataset digest {ds_digest} != committed {DIVERSITY_DATASET_DIGEST}")
    })?;

    // Grades the fixture's grader gives each generated response.
    let fixture: Value = serde_json::from_str(&fs::read_to_string(&div_replay).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut grades: HashMap<String, Label> = HashMap::new();
    for entry in fixture["entries"].as_array().into_iter().flatten() {
        let Some(key) = entry["contains"][0].as_str().and_then(|c| c.strip_prefix("Student Answer: ")) else {
            continue;
        };
        let reply = entry["replies"][0]["content"].as_str().unwrap_or_default();
        let label = match reply {
            "[[2]]" => Label::Correct,
            "[[1]]" => Label::PartiallyCorrect,
            _ => Label::Incorrect,
        };
        grades.insert(key.trim_end_matches('\n').to_string(), label);
    }
    let rows = read_jsonl(&s.join("dataset.jsonl"))?;
    check(rows.len() == 24, || format!("{} synthesized samples", rows.len()))?;
    let mut differs = 0;
    for row in &rows {
        let label: Label = serde_json::from_value(row["label"].clone()).map_err(|e| e.to_string())?;
        let target: Label = serde_json::from_value(row["meta"]["target_label"].clone()).map_err(|e| e.to_string())?;
        let text = row["response_text"].as_str().unwrap_or_default();
        let graded = grades.get(text).copied();
        check(graded == Some(label), || format!("{}: stored {label:?}, relabel pass gave {graded:?}", row["id"]))?;
        differs += usize::from(label != target);
    }
    check(differs > 0, || "no sample where the relabel pass overrides the case target".into())?;
    Ok(format!("eval digest frozen, diversity digest frozen, {differs}/24 labels overridden by relabel pass"))
}

fn criterion_8(tmp: &Path) -> Outcome {
    let cos = |a: &[f64], b: &[f64]| cosine_similarity(a, b).map_err(|e| e.to_string());
    let v = [0.3, -1.2, 4.0];
    check((cos(&v, &v)? - 1.0).abs() < 1e-12, || "identity".into())?;
    check(cos(&[1.0, 0.0], &[0.0, 2.0])?.abs() < 1e-12, || "orthogonal".into())?;
    // 32 / sqrt(14 * 77)
    let hand = 0.974_631_846_197_076_2;
    let got = cos(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])?;
    check((got - hand).abs() < 1e-9, || format!("{got} vs {hand}"))?;

    let out = tmp.join("similarity");
    cli_ok(&[
        "similarity", &fixture("similarity_toy.jsonl"), "--replay", &fixture("similarity_replay.json"),
        "--out", out.to_str().unwrap(),
    ])?;
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("similarity.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let avg = report["avg_rubric_vs_solution"].as_f64().unwrap_or(f64::NAN);
    check((avg - 1.0).abs() < 1e-12, || format!("rubric vs solution {avg}"))?;
    Ok(format!("identity, orthogonal, {got:.5}, toy rubric vs solution {avg}"))
}

fn criterion_9(tmp: &Path) -> Outcome {
    let out = tmp.join("annotate");
    cli_ok(&[
        "annotate", "sample", &fixture("results_60_disagreements.jsonl"), "--condition", "disagreement",
        "--n", "50", "--seed", "4", "--out", out.to_str().unwrap(),
    ])?;
    let sheet = out.join("annotation_sheet.csv");
    let mut reader = csv::Reader::from_path(&sheet).map_err(|e| e.to_string())?;
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let mut rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let ids: BTreeSet<&str> = rows.iter().map(|r| &r[0]).collect();
    check(rows.len() == 50 && ids.len() == 50, || format!("{} rows, {} distinct", rows.len(), ids.len()))?;

    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (lc, ex, su) = (col("label_correctness"), col("explainability"), col("subjectivity"));
    let fill = |rows: &mut Vec<csv::StringRecord>, blank_one: bool| -> Result<PathBuf, String> {
        let path = tmp.join(if blank_one { "blank.csv" } else { "filled.csv" });
        let mut w = csv::Writer::from_path(&path).map_err(|e| e.to_string())?;
        w.write_record(&headers).map_err(|e| e.to_string())?;
        for (i, r) in rows.iter_mut().enumerate() {
            let mut f: Vec<String> = r.iter().map(str::to_string).collect();
            f[lc] = if i % 2 == 0 { "Human" } else { "LLM" }.into();
            f[ex] = if i < 48 { "Yes" } else { "No" }.into();
            f[su] = if i < 10 { "Yes" } else { "No" }.into();
            if blank_one && i == 17 {
                f[ex] = String::new();
            }
            w.write_record(&f).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
        Ok(path)
    };
    let filled = fill(&mut rows, false)?;
    let summary = tmp.join("summary");
    let shown = cli_ok(&["annotate", "summarize", filled.to_str().unwrap(), "--out", summary.to_str().unwrap()])?;
    let stdout = String::from_utf8_lossy(&shown.stdout);
    check(stdout.contains("| Explainability | Yes | 96% (48/50) |"), || format!("summary table:\n{stdout}"))?;
    let json: Value = serde_json::from_str(&fs::read_to_string(summary.join("summary.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let frac = json["explainability_yes"]["fraction"].as_f64().unwrap_or(f64::NAN);
    check(frac == 0.96, || format!("explainability fraction {frac}"))?;

    let blank = fill(&mut rows, true)?;
    let rejected = cli(&["annotate", "summarize", blank.to_str().unwrap()]);
    check(rejected.status.code() == Some(1), || format!("blank sheet exited {:?}", rejected.status.code()))?;
    Ok("50 distinct rows, 48/50 -> 96%, blank sheet exit 1".into())
}

fn main() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("1 oracle brute-force equivalence", Box::new(criterion_1)),
        ("2 fixed-rubric census", Box::new(criterion_2)),
        ("3 rubric-constraint invariants", Box::new(criterion_3)),
        ("4 meta dataset generation", Box::new(|| criterion_4(tmp.path()))),
        ("5 prompt/parse round trip", Box::new(criterion_5)),
        ("6 metrics oracle equivalence", Box::new(criterion_6)),
        ("7 end-to-end replay determinism", Box::new(|| criterion_7(tmp.path()))),
        ("8 similarity properties", Box::new(|| criterion_8(tmp.path()))),
        ("9 annotation workflow", Box::new(|| criterion_9(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed < Duration::from_secs(120) {
        println!("PASS runtime bound: suite finished in {elapsed:.2?} (limit 120s)");
    } else {
        failed += 1;
        println!("FAIL runtime bound: suite took {elapsed:.2?} (limit 120s)");
    }
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
