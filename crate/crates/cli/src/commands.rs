use std::collections::HashSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use crowdvet::agreement::{self, krippendorff_alpha, AgreementOptions};
use crowdvet::ingest::{build_matrix, parse_answer_key, write_batch, write_tasks, MatrixFilter};
use crowdvet::llmjudge::{self, Direction, Http, JudgeConfig, Replay, Transport};
use crowdvet::mace::{self, MaceConfig};
use crowdvet::pipeline::{self, CostInputs, PipelineConfig, Registry, WorkerFlag, WorkerMetadata};
use crowdvet::stats::{bootstrap_pass_rate, median_grouping, pass_rate_model, permutation_test, stability_report};
use crowdvet::synth::{self, PipelineSpec, PopulationSpec};
use crowdvet::timing::{self, analyze_all, baseline_filter, flag_rushers, timeline_csv, timeline_svg};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;
use crate::io::{self, emit, envelope, read, write_atomic};

fn pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    path.map(io::json).transpose().map(Option::unwrap_or_default)
}

fn metadata(path: Option<&Path>) -> Result<Option<Vec<WorkerMetadata>>> {
    path.map(io::json).transpose()
}

/// Accepts a bare registry or any output document carrying one.
fn load_registry(path: &Path) -> Result<Registry> {
    let v: serde_json::Value = io::json(path)?;
    let node = v
        .pointer("/result/registry")
        .or_else(|| v.get("registry"))
        .cloned()
        .unwrap_or(v);
    serde_json::from_value(node).with_context(|| format!("{} does not hold a registry", path.display()))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn single_row_csv(header: &[&str], row: &[String]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    w.write_record(row)?;
    Ok(w.into_inner()?)
}

pub fn qualify(a: &QualifyArgs) -> Result<()> {
    let records = io::records(&a.records)?;
    let key = parse_answer_key(&read(&a.key)?).with_context(|| format!("parsing {}", a.key.display()))?;
    let config = pipeline_config(a.config.as_deref())?;
    let meta = metadata(a.metadata.as_deref())?;
    let (registry, ineligible, warnings) = pipeline::qualify(&records, &key, &config, meta.as_deref())?;
    warn_all(&warnings);
    let stages = pipeline::stage_report(&registry);
    if let Some(p) = &a.stages {
        write_atomic(p, &stages.to_csv()?)?;
    }
    let bytes = match a.output.format {
        Format::Csv => stages.to_csv()?,
        Format::Json => envelope(
            "qualify",
            &json!({"args": a, "pipeline": config}),
            json!({"registry": registry, "stages": stages, "ineligible": ineligible, "warnings": warnings}),
        )?,
    };
    emit(a.output.out.as_deref(), &bytes)
}

pub fn endurance(a: &EnduranceArgs) -> Result<()> {
    let mut registry = load_registry(&a.registry)?;
    let records = io::records(&a.records)?;
    let mut config = pipeline_config(a.config.as_deref())?;
    config.thresholds = registry.thresholds;
    if a.config.is_none() {
        config.required_hits = registry.required_hits;
    }
    if let Some(n) = a.required_hits {
        config.required_hits = n;
    }
    config.active_workers.extend(a.active.iter().cloned());
    let (statuses, survival, warnings) = pipeline::apply_endurance(&mut registry, &records, &config)?;
    warn_all(&warnings);
    let survival_csv = survival.as_ref().map(|s| s.to_csv()).transpose()?;
    if let (Some(p), Some(csv)) = (&a.survival, &survival_csv) {
        write_atomic(p, csv)?;
    }
    let stages = pipeline::stage_report(&registry);
    let bytes = match a.output.format {
        Format::Csv => survival_csv.unwrap_or_default(),
        Format::Json => envelope(
            "endurance",
            &json!({"args": a, "pipeline": config}),
            json!({
                "registry": registry,
                "endurance": statuses,
                "survival": survival,
                "stages": stages,
                "warnings": warnings,
            }),
        )?,
    };
    emit(a.output.out.as_deref(), &bytes)
}

pub fn agreement(a: &AgreementArgs) -> Result<()> {
    let matrix = io::matrix(&a.input)?;
    let opts = AgreementOptions { metric: a.metric, kappa_weights: a.weights, spearman: a.spearman, ci_level: a.ci_level };
    let report = agreement::agreement_report(&matrix, &opts)?;
    let heatmap = report.kappa_heatmap_csv()?;
    if let Some(p) = &a.heatmap {
        write_atomic(p, &heatmap)?;
    }
    let bytes = match a.output.format {
        Format::Csv => heatmap,
        Format::Json => envelope("agreement", a, &report)?,
    };
    emit(a.output.out.as_deref(), &bytes)
}

pub fn mace(a: &MaceArgs) -> Result<()> {
    let matrix = io::matrix(&a.input)?;
    let config = MaceConfig {
        iterations: a.iterations,
        restarts: a.restarts,
        smoothing: a.smoothing,
        seed: a.seed,
        ..MaceConfig::default()
    };
    let result = mace::em_fit(&matrix, &config)?;
    let table = mace::competence_table(&result, &matrix, &a.threshold, a.metric)?;
    if let Some(p) = &a.filtered {
        let t = *a.threshold.first().context("at least one threshold is needed")?;
        let (_, filtered) = mace::filter_by_competence(&result, &matrix, t)?;
        write_atomic(p, &filtered.to_csv()?)?;
    }
    let bytes = match a.output.format {
        Format::Csv => mace::competence_table_csv(&table)?,
        Format::Json => {
            let labels: Vec<_> = matrix
                .items()
                .iter()
                .zip(mace::posterior_labels(&result))
                .map(|(item, label)| json!({"hit_id": item.hit_id, "question_id": item.question_id, "label": label}))
                .collect();
            envelope(
                "mace",
                &json!({"args": a, "mace": config}),
                json!({"competence": result, "thresholds": table, "posterior_labels": labels}),
            )?
        }
    };
    emit(a.output.out.as_deref(), &bytes)
}

pub fn timing(a: &TimingArgs) -> Result<()> {
    let records = io::records(&a.records)?;
    let tasks = io::tasks(&a.tasks)?;
    let (analyses, skipped) = analyze_all(&records, &tasks, a.wpm);
    for (assignment, reason) in &skipped {
        eprintln!("warning: assignment {assignment} skipped: {reason}");
    }
    let rushers = flag_rushers(&records, &tasks, a.policy, a.wpm)?;
    let baseline = baseline_filter(&records, &tasks, a.min_hits, a.rule, a.wpm);
    if let Some(p) = &a.svg {
        let chosen: Vec<_> = analyses
            .iter()
            .filter(|x| a.worker.as_ref().is_none_or(|w| &x.worker_id == w))
            .cloned()
            .collect();
        write_atomic(p, timeline_svg(&chosen).as_bytes())?;
    }
    let bytes = match a.output.format {
        Format::Csv => timeline_csv(&analyses)?,
        Format::Json => {
            let skipped: Vec<_> = skipped.iter().map(|(id, r)| json!({"assignment_id": id, "reason": r})).collect();
            envelope(
                "timing",
                a,
                json!({"timelines": analyses, "skipped": skipped, "rushers": rushers, "baseline": baseline}),
            )?
        }
    };
    emit(a.output.out.as_deref(), &bytes)
}

pub fn stats(cmd: &StatsCommand) -> Result<()> {
    match cmd {
        StatsCommand::Bootstrap(a) => {
            let s = bootstrap_pass_rate(&io::outcomes(&a.outcomes)?, a.iterations, a.seed)?;
            let bytes = match a.output.format {
                Format::Csv => single_row_csv(
                    &["statistic", "n", "point_estimate", "mean", "std", "iterations", "seed"],
                    &[
                        s.statistic.clone(),
                        s.n.to_string(),
                        format!("{:.6}", s.point_estimate),
                        format!("{:.6}", s.mean),
                        format!("{:.6}", s.std),
                        s.iterations.to_string(),
                        s.seed.to_string(),
                    ],
                )?,
                Format::Json => envelope("stats bootstrap", a, &s)?,
            };
            emit(a.output.out.as_deref(), &bytes)
        }
        StatsCommand::Permutation(a) => {
            let r = permutation_test(&io::outcomes(&a.a)?, &io::outcomes(&a.b)?, a.iterations, a.seed)?;
            let bytes = match a.output.format {
                Format::Csv => single_row_csv(
                    &["n_a", "passes_a", "n_b", "passes_b", "statistic", "count", "iterations", "p_value"],
                    &[
                        r.n_a.to_string(),
                        r.passes_a.to_string(),
                        r.n_b.to_string(),
                        r.passes_b.to_string(),
                        format!("{:.6}", r.statistic),
                        r.count_at_least.to_string(),
                        r.iterations.to_string(),
                        format!("{:.6}", r.p_value),
                    ],
                )?,
                Format::Json => envelope("stats permutation", a, &r)?,
            };
            emit(a.output.out.as_deref(), &bytes)
        }
        StatsCommand::MedianGrouping(a) => {
            let matrix = io::matrix(&a.input)?;
            let grouped = median_grouping(&matrix, a.group_size, a.groups, a.seed)?;
            let bytes = match a.output.format {
                Format::Csv => grouped.to_csv()?,
                Format::Json => envelope(
                    "stats median-grouping",
                    a,
                    json!({
                        "alpha_raw": krippendorff_alpha(&matrix, a.metric).ok(),
                        "alpha_grouped": krippendorff_alpha(&grouped, a.metric).ok(),
                        "matrix": grouped,
                    }),
                )?,
            };
            emit(a.output.out.as_deref(), &bytes)
        }
        StatsCommand::Stability(a) => {
            let registry = load_registry(&a.registry)?;
            let model = pass_rate_model(&registry)?;
            let report = stability_report(&model, a.iterations, a.seed)?;
            if let Some(p) = &a.pairs {
                write_atomic(p, &report.pairs_csv()?)?;
            }
            let bytes = match a.output.format {
                Format::Csv => report.to_csv()?,
                Format::Json => envelope("stats stability", a, json!({"pass_rates": model, "stability": report}))?,
            };
            emit(a.output.out.as_deref(), &bytes)
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let dir = &a.out_dir;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
        Ok(())
    };
    if let Some(spec_path) = &a.spec {
        let spec: PopulationSpec = io::json(spec_path)?;
        let data = synth::generate(&spec, a.seed)?;
        put("batch.csv", write_batch(&data.records)?)?;
        put("tasks.json", write_tasks(&data.tasks)?)?;
        put("latent.json", pretty(&data.latent)?)?;
    } else if let Some(spec_path) = &a.pipeline {
        let spec: PipelineSpec = io::json(spec_path)?;
        let p = synth::generate_pipeline(&spec, a.seed)?;
        let config = PipelineConfig { required_hits: spec.required_hits, rounds: p.rounds.clone(), ..Default::default() };
        put("qualification.csv", write_batch(&p.qualification)?)?;
        put("endurance.csv", write_batch(&p.endurance)?)?;
        put("key.json", pretty(&p.key)?)?;
        put("config.json", pretty(&config)?)?;
        put("expected.json", pretty(&p.expected)?)?;
    } else {
        bail!("give --spec or --pipeline");
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Deserialize)]
struct PairInput {
    id: String,
    reference: String,
    candidate: String,
}

pub fn judge(a: &JudgeArgs) -> Result<()> {
    let pairs: Vec<PairInput> = io::json(&a.pairs)?;
    let mut config: JudgeConfig = a.config.as_deref().map(io::json).transpose()?.unwrap_or_default();
    if a.replay {
        config.replay = true;
    }
    if let Some(f) = &a.fixtures {
        config.fixture_path = Some(f.clone());
    }
    if let Some(r) = a.runs {
        config.runs = r;
    }
    if let Some(t) = a.temperature {
        config.temperature = t;
    }
    config.validate()?;
    let transport: Box<dyn Transport> = if config.replay {
        let path = config.fixture_path.as_deref().expect("validated");
        Box::new(Replay::new(llmjudge::load_fixtures(&read(path)?)?))
    } else {
        Box::new(Http::new(&config))
    };
    let mut bundles = Vec::with_capacity(pairs.len() * 2);
    for p in &pairs {
        for d in [Direction::Can2Ref, Direction::Ref2Can] {
            bundles.push(llmjudge::render_prompt(&p.reference, &p.candidate, d).with_context(|| format!("pair {}", p.id))?);
        }
    }
    let scores = llmjudge::score_all(&bundles, &config, transport.as_ref())?;
    let mut failures = 0;
    let mut results = Vec::with_capacity(pairs.len());
    for (p, two) in pairs.iter().zip(scores.chunks(2)) {
        let mut entry = serde_json::Map::new();
        entry.insert("id".into(), json!(p.id));
        for s in two {
            match s {
                Ok(s) => {
                    entry.insert(serde_json::to_value(s.direction)?.as_str().unwrap().to_string(), json!(s));
                }
                Err(e) => {
                    failures += 1;
                    entry.insert("error".into(), json!(e.to_string()));
                }
            }
        }
        results.push(serde_json::Value::Object(entry));
    }
    if let Some(p) = &a.record_fixtures {
        let ok: Vec<_> = scores.iter().filter_map(|s| s.as_ref().ok().cloned()).collect();
        write_atomic(p, &llmjudge::write_fixtures(&llmjudge::fixtures_from(&ok))?)?;
    }
    let bytes = match a.output.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["id", "can2ref", "ref2can"])?;
            for (p, two) in pairs.iter().zip(scores.chunks(2)) {
                let cell = |s: &crowdvet::Result<llmjudge::JudgeScore>| s.as_ref().map(|s| s.score.to_string()).unwrap_or_default();
                w.write_record([p.id.clone(), cell(&two[0]), cell(&two[1])])?;
            }
            w.into_inner()?
        }
        Format::Json => envelope(
            "judge",
            &json!({"args": a, "judge": config, "template": llmjudge::TEMPLATE_VERSION}),
            results,
        )?,
    };
    emit(a.output.out.as_deref(), &bytes)?;
    if failures > 0 {
        bail!(crowdvet::Error::Judge(format!("{failures} prompt(s) could not be scored")));
    }
    Ok(())
}

pub fn cost(a: &CostArgs) -> Result<()> {
    let inputs: CostInputs = io::json(&a.inputs)?;
    let model = pipeline::pipeline_cost(&inputs)?;
    let bytes = match a.output.format {
        Format::Csv => model.to_csv()?,
        Format::Json => envelope("cost", &json!({"args": a, "inputs": inputs}), &model)?,
    };
    emit(a.output.out.as_deref(), &bytes)
}

pub fn report(a: &ReportArgs) -> Result<()> {
    let qualification = io::records(&a.qualification)?;
    let endurance = io::records(&a.endurance)?;
    let key = parse_answer_key(&read(&a.key)?).with_context(|| format!("parsing {}", a.key.display()))?;
    let config = pipeline_config(a.config.as_deref())?;
    let meta = metadata(a.metadata.as_deref())?;
    let mut run = pipeline::run_pipeline(&qualification, &endurance, &key, &config, meta.as_deref())?;
    warn_all(&run.warnings);

    let annotations = match (&a.annotations, &a.tasks) {
        (Some(r), Some(t)) => {
            let records = io::records(r)?;
            let tasks = io::tasks(t)?;
            let rushers = flag_rushers(&records, &tasks, a.policy, timing::DEFAULT_WPM)?;
            let known: HashSet<String> = run.registry.workers.iter().map(|w| w.worker_id.clone()).collect();
            for w in rushers.flagged() {
                if known.contains(&w) {
                    run.registry.flag(&w, WorkerFlag::Rusher);
                }
            }
            let baseline = baseline_filter(&records, &tasks, 3, timing::ReadingRule::All, timing::DEFAULT_WPM);
            let matrix = build_matrix(&records, &tasks, &MatrixFilter::all())?;
            let opts = AgreementOptions { metric: a.metric, ..Default::default() };
            let agreement = agreement::agreement_report(&matrix, &opts)?;
            let competence = mace::em_fit(&matrix, &MaceConfig { seed: a.seed, ..Default::default() })?;
            let table = mace::competence_table(&competence, &matrix, &a.threshold, a.metric)?;
            Some(json!({
                "agreement": agreement,
                "competence": {"raters": competence.raters, "competence": competence.competence, "warnings": competence.warnings},
                "competence_thresholds": table,
                "rushers": rushers,
                "baseline": baseline,
            }))
        }
        _ => None,
    };

    let model = pass_rate_model(&run.registry)?;
    let stability = stability_report(&model, a.iterations, a.seed)?;
    let cost = match &a.cost {
        Some(p) => {
            let mut inputs: CostInputs = io::json(p)?;
            if inputs.qualified_workers == 0 {
                inputs.qualified_workers = run.registry.maintained().len() as u64;
            }
            Some(pipeline::pipeline_cost(&inputs)?)
        }
        None => None,
    };
    let bytes = envelope(
        "report",
        &json!({"args": a, "pipeline": config}),
        json!({
            "stages": pipeline::stage_report(&run.registry),
            "registry": run.registry,
            "endurance": run.endurance,
            "survival": run.survival,
            "ineligible": run.ineligible,
            "pass_rates": model,
            "stability": stability,
            "cost": cost,
            "annotations": annotations,
            "warnings": run.warnings,
        }),
    )?;
    emit(a.out.as_deref(), &bytes)
}
