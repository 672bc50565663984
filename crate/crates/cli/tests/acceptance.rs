//! Acceptance run: one PASS/FAIL line per criterion.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use crowdvet::agreement::{cohen_kappa, krippendorff_alpha, AlphaMetric};
use crowdvet::ingest::{build_matrix, MatrixFilter};
use crowdvet::llmjudge::{self, Direction, JudgeConfig};
use crowdvet::mace::{em_fit, filter_by_competence, posterior_labels, MaceConfig};
use crowdvet::pipeline::{
    categorize, kaplan_meier, pipeline_cost, run_pipeline, CategoryThresholds, CostInputs, PipelineConfig, Registry,
    SurvivalObservation, WorkerCategory, WorkerProfile,
};
use crowdvet::rng::substream;
use crowdvet::stats::{bootstrap_pass_rate, median_grouping, outcomes, pass_rate_model, permutation_test};
use crowdvet::synth::{generate, generate_pipeline, Archetype, ArchetypeCount, PipelineSpec, PopulationSpec};
use crowdvet::timing::{flag_rushers, suggested_reading_seconds, DEFAULT_WPM};
use crowdvet::{Item, RatingMatrix, ScaleDescriptor, ScaleKind};
use rand::Rng;

type Check = Result<String, String>;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn ordinal() -> ScaleDescriptor {
    ScaleDescriptor::new(ScaleKind::Ordinal, 1, 5).unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {:.2}s, limit {}s", t.as_secs_f64(), limit.as_secs()))
}

fn population(workers: Vec<ArchetypeCount>, hits: usize, questions: usize, raters: Option<usize>) -> PopulationSpec {
    PopulationSpec {
        workers,
        hits,
        questions_per_hit: questions,
        word_count: 520,
        scale: ordinal(),
        raters_per_hit: raters,
        truth_weights: None,
    }
}

fn matrix_of(d: &crowdvet::synth::SyntheticData) -> RatingMatrix {
    build_matrix(&d.records, &d.tasks, &MatrixFilter::all()).unwrap()
}

fn c1_bootstrap() -> Check {
    let start = Instant::now();
    let q = bootstrap_pass_rate(&outcomes(200, 26), 10_000, crowdvet::rng::DEFAULT_SEED).map_err(|e| e.to_string())?;
    let e = bootstrap_pass_rate(&outcomes(200, 12), 10_000, crowdvet::rng::DEFAULT_SEED).map_err(|e| e.to_string())?;
    within_time(start, Duration::from_secs(5))?;
    let detail = format!("q mean {:.4} std {:.4}; e mean {:.4} std {:.4}", q.mean, q.std, e.mean, e.std);
    ensure((q.mean - 0.1302).abs() <= 0.003 && (q.std - 0.0236).abs() <= 0.003, detail.clone())?;
    ensure((e.mean - 0.0602).abs() <= 0.003 && (e.std - 0.0168).abs() <= 0.003, detail.clone())?;
    Ok(detail)
}

fn c2_cost() -> Check {
    let inputs: CostInputs = serde_json::from_slice(&fs::read(data("cost.json")).unwrap()).unwrap();
    let m = pipeline_cost(&inputs).map_err(|e| e.to_string())?;
    let per = m.cost_per_qualified.ok_or("no cost per qualified worker")?;
    let detail = format!("total ${:.2}, per qualified ${per:.2}", m.total_cost.dollars());
    ensure(m.total_cost.micros() == 514_000_000, detail.clone())?;
    ensure((per * 100.0).round() == 4283.0 && per == 514.0 / 12.0, detail.clone())?;
    Ok(detail)
}

fn profile(i: usize, round: usize, category: WorkerCategory, e: bool) -> WorkerProfile {
    let (mistakes, attention) = match category {
        WorkerCategory::Gold => (0, true),
        WorkerCategory::Silver => (1, true),
        WorkerCategory::Bronze => (3, true),
        WorkerCategory::Block => (0, false),
    };
    WorkerProfile {
        worker_id: format!("w{i}"),
        round: format!("Round {round}"),
        category,
        mistakes,
        attention_passed: attention,
        endurance_completed: if e { 10 } else { 0 },
        endurance_passed: e,
        flags: Default::default(),
    }
}

fn c3_pass_rates() -> Check {
    let spec: PipelineSpec = serde_json::from_slice(&fs::read(data("pipeline.json")).unwrap()).unwrap();
    let p = generate_pipeline(&spec, 3).map_err(|e| e.to_string())?;
    let config = PipelineConfig { required_hits: spec.required_hits, rounds: p.rounds.clone(), ..Default::default() };
    let run = run_pipeline(&p.qualification, &p.endurance, &p.key, &config, None).map_err(|e| e.to_string())?;
    let model = pass_rate_model(&run.registry).map_err(|e| e.to_string())?;
    let pooled = &model.pooled;
    let q = (pooled.qualification.successes, pooled.qualification.trials);
    let j = (pooled.joint.successes, pooled.joint.trials);
    ensure(q == (26, 200) && j == (12, 200), format!("counts q {q:?} joint {j:?}"))?;
    ensure(q.0 * 100 == 13 * q.1 && j.0 * 100 == 6 * j.1, "rates not exact")?;
    ensure(model.rounds.iter().chain([pooled]).all(|r| r.joint_identity_holds()), "identity fails on fixture")?;

    let t = CategoryThresholds::default();
    let categories = [WorkerCategory::Gold, WorkerCategory::Silver, WorkerCategory::Bronze, WorkerCategory::Block];
    for seed in 0..1000 {
        let mut g = substream(seed, 77);
        let n = g.random_range(0..300);
        let workers: Vec<WorkerProfile> = (0..n)
            .map(|i| {
                let c = categories[g.random_range(0..4)];
                let e = c.advances() && g.random_bool(0.5);
                profile(i, g.random_range(1..=4), c, e)
            })
            .collect();
        let registry = Registry { rounds: vec![], required_hits: 10, thresholds: t, workers };
        let m = pass_rate_model(&registry).map_err(|e| e.to_string())?;
        ensure(m.rounds.iter().chain([&m.pooled]).all(|r| r.joint_identity_holds()), format!("identity fails, seed {seed}"))?;
    }
    Ok("P(q)=13/100, joint=3/50; identity exact on 1000 registries".into())
}

fn random_matrix(seed: u64) -> RatingMatrix {
    let mut g = substream(seed, 0);
    let items = g.random_range(1..=12);
    let raters = g.random_range(2..=6);
    let cells: Vec<Vec<Option<i64>>> = (0..items)
        .map(|_| (0..raters).map(|_| (!g.random_bool(0.2)).then(|| g.random_range(1..=5))).collect())
        .collect();
    RatingMatrix::new(
        (0..items).map(|i| Item::new("h", format!("q{i}"))).collect(),
        (0..raters).map(|j| format!("r{j}")).collect(),
        cells,
        ordinal(),
    )
    .unwrap()
}

fn c4_oracles() -> Check {
    let start = Instant::now();
    let (mut kappas, mut alphas, mut worst) = (0, 0, 0.0f64);
    for seed in 0..500 {
        let m = random_matrix(seed);
        for a in 0..m.n_raters() {
            for b in 0..m.n_raters() {
                let (ca, cb) = (m.column(a), m.column(b));
                match (cohen_kappa(&ca, &cb), oracle::kappa(&ca, &cb)) {
                    (Ok(x), Some(y)) => {
                        worst = worst.max((x - y).abs());
                        kappas += 1;
                    }
                    (Err(_), None) => {}
                    _ => return Err(format!("kappa definedness differs, seed {seed}")),
                }
            }
        }
        for (metric, om) in [
            (AlphaMetric::Nominal, oracle::Metric::Nominal),
            (AlphaMetric::Ordinal, oracle::Metric::Ordinal),
            (AlphaMetric::Interval, oracle::Metric::Interval),
        ] {
            match (krippendorff_alpha(&m, metric), oracle::alpha(m.rows(), om)) {
                (Ok(x), Some(y)) => {
                    worst = worst.max((x - y).abs());
                    alphas += 1;
                }
                (Err(_), None) => {}
                _ => return Err(format!("alpha definedness differs, seed {seed}")),
            }
        }
    }
    within_time(start, Duration::from_secs(30))?;
    let detail = format!("{kappas} kappas, {alphas} alphas, max deviation {worst:.1e}");
    ensure(worst <= 1e-12, detail.clone())?;
    Ok(detail)
}

fn c5_hand_values() -> Check {
    let k = cohen_kappa(&[Some(1), Some(1), Some(2), Some(2)], &[Some(1), Some(2), Some(2), Some(2)]).map_err(|e| e.to_string())?;
    ensure(k == 0.5, format!("kappa {k}"))?;
    let obs = [(1.0, false), (1.5, true), (2.0, false), (3.0, true), (3.0, true)]
        .map(|(time, censored)| SurvivalObservation { time, censored });
    let curve = kaplan_meier(&obs).map_err(|e| e.to_string())?;
    let (s1, s2) = (curve.survival_at(1.0), curve.survival_at(2.0));
    ensure((s1 - 0.8).abs() <= 1e-12 && (s2 - 8.0 / 15.0).abs() <= 1e-12, format!("S(1)={s1} S(2)={s2}"))?;
    let r = suggested_reading_seconds(650, DEFAULT_WPM).map_err(|e| e.to_string())?;
    ensure(r == 300.0, format!("reading {r}"))?;
    Ok(format!("kappa {k}, S(1)={s1}, S(2)={s2:.6}, reading {r}s"))
}

fn c6_mace_separation() -> Check {
    let start = Instant::now();
    let spec = population(
        vec![
            ArchetypeCount { count: 10, archetype: Archetype::Competent { accuracy: 1.0, jitter: 0.0 } },
            ArchetypeCount { count: 10, archetype: Archetype::Spammer },
        ],
        50,
        1,
        None,
    );
    let (mut separated, mut correct, mut eligible) = (0, 0usize, 0usize);
    for seed in 0..100u64 {
        let d = generate(&spec, seed).map_err(|e| e.to_string())?;
        let m = matrix_of(&d);
        let fit = em_fit(&m, &MaceConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let copiers = d.workers_of("competent");
        let theta = |ids: &[String]| ids.iter().map(|w| fit.competence_of(w).unwrap()).collect::<Vec<_>>();
        let c = theta(&copiers);
        let s = theta(&d.workers_of("spammer"));
        if c.iter().cloned().fold(f64::INFINITY, f64::min) > s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) {
            separated += 1;
        }
        let labels = posterior_labels(&fit);
        let truth: BTreeMap<(&str, &str), i64> =
            d.latent.ground_truth.iter().map(|t| ((t.hit_id.as_str(), t.question_id.as_str()), t.label)).collect();
        let cols: Vec<usize> = copiers.iter().map(|w| m.rater_index(w).unwrap()).collect();
        for (i, item) in m.items().iter().enumerate() {
            if cols.iter().filter(|&&j| m.get(i, j).is_some()).count() >= 3 {
                eligible += 1;
                correct += usize::from(labels[i] == truth[&(item.hit_id.as_str(), item.question_id.as_str())]);
            }
        }
    }
    within_time(start, Duration::from_secs(60))?;
    let recovery = correct as f64 / eligible as f64;
    let detail = format!("separated in {separated}/100 seeds, label recovery {:.2}% of {eligible} items", recovery * 100.0);
    ensure(separated >= 95 && recovery >= 0.95, detail.clone())?;
    Ok(detail)
}

fn c7_mace_monotone() -> Check {
    let thresholds: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
    let mut violations: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for seed in 0..100u64 {
        let mut g = substream(seed, 71);
        let competent = g.random_range(2..10);
        let spammers = g.random_range(0..6);
        let biased = g.random_range(0..3);
        let total = competent + spammers + biased;
        let spec = population(
            vec![
                ArchetypeCount { count: competent, archetype: Archetype::Competent { accuracy: g.random_range(0.4..0.95), jitter: 0.6 } },
                ArchetypeCount { count: spammers, archetype: Archetype::Spammer },
                ArchetypeCount { count: biased, archetype: Archetype::Biased { offset: 1 } },
            ],
            g.random_range(3..10),
            g.random_range(1..5),
            Some(g.random_range(2..=total)),
        );
        let d = generate(&spec, seed).map_err(|e| e.to_string())?;
        let m = matrix_of(&d);
        let fit = em_fit(&m, &MaceConfig { seed, restarts: 3, ..Default::default() }).map_err(|e| e.to_string())?;
        let rows: Vec<_> =
            thresholds.iter().map(|&t| filter_by_competence(&fit, &m, t).map(|r| r.0)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        for w in rows.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            if hi.kept_fraction > lo.kept_fraction {
                violations.entry("kept fraction").or_default().push(seed);
            }
            if hi.hit_coverage > lo.hit_coverage {
                violations.entry("HIT coverage").or_default().push(seed);
            }
            if hi.avg_raters_per_covered_item > lo.avg_raters_per_covered_item + 1e-12 {
                if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
                    eprintln!("seed {seed}: {lo:?}\n  -> {hi:?}");
                }
                violations.entry("avg raters per covered item").or_default().push(seed);
            }
        }
    }
    if violations.is_empty() {
        return Ok("all three quantities non-increasing on 100 datasets".into());
    }
    let msg: Vec<String> = violations
        .iter_mut()
        .map(|(k, v)| {
            v.dedup();
            format!("{k} increases in {} datasets (first seed {})", v.len(), v[0])
        })
        .collect();
    Err(msg.join("; "))
}

fn c8_median_grouping() -> Check {
    let spec = population(
        vec![
            ArchetypeCount { count: 20, archetype: Archetype::Competent { accuracy: 0.6, jitter: 1.0 } },
            ArchetypeCount { count: 10, archetype: Archetype::Spammer },
        ],
        10,
        4,
        Some(20),
    );
    let mut wins = 0;
    let mut gap = 0.0;
    for seed in 0..100u64 {
        let d = generate(&spec, seed).map_err(|e| e.to_string())?;
        let m = matrix_of(&d);
        let raw = krippendorff_alpha(&m, AlphaMetric::Interval).map_err(|e| e.to_string())?;
        let grouped = median_grouping(&m, 5, 4, seed).map_err(|e| e.to_string())?;
        let a = krippendorff_alpha(&grouped, AlphaMetric::Interval).map_err(|e| e.to_string())?;
        wins += usize::from(a > raw);
        gap += a - raw;
    }
    let detail = format!("grouped alpha higher in {wins}/100 seeds, mean gain {:.3}", gap / 100.0);
    ensure(wins >= 90, detail.clone())?;
    Ok(detail)
}

fn c9_rushers() -> Check {
    let spec = population(
        vec![
            ArchetypeCount { count: 10, archetype: Archetype::Competent { accuracy: 0.8, jitter: 0.6 } },
            ArchetypeCount { count: 3, archetype: Archetype::Rusher },
        ],
        8,
        4,
        Some(8),
    );
    let mut worst = f64::INFINITY;
    for seed in 0..100u64 {
        let d = generate(&spec, seed).map_err(|e| e.to_string())?;
        let m = matrix_of(&d);
        let flagged = flag_rushers(&d.records, &d.tasks, 0.5, DEFAULT_WPM).map_err(|e| e.to_string())?.flagged();
        let before = krippendorff_alpha(&m, AlphaMetric::Interval).map_err(|e| e.to_string())?;
        let after = krippendorff_alpha(&m.without_raters(&flagged), AlphaMetric::Interval).map_err(|e| e.to_string())?;
        worst = worst.min(after - before);
        ensure(after >= before, format!("seed {seed}: alpha {before:.4} -> {after:.4}"))?;
    }

    let solo = population(
        vec![ArchetypeCount { count: 1, archetype: Archetype::Competent { accuracy: 0.9, jitter: 0.5 } }],
        10,
        4,
        None,
    );
    let mut d = generate(&solo, 42).map_err(|e| e.to_string())?;
    let reading = chrono::Duration::seconds(suggested_reading_seconds(solo.word_count, DEFAULT_WPM).unwrap() as i64);
    for r in d.records.iter_mut().take(9) {
        r.submit_time = r.accept_time + reading / 3;
        r.events = None;
    }
    let report = flag_rushers(&d.records, &d.tasks, 0.5, DEFAULT_WPM).map_err(|e| e.to_string())?;
    let w = &report.workers[0];
    ensure(w.rushed == 9 && w.analyzed == 10 && w.flagged, format!("fixture: {}/{} rushed, flagged {}", w.rushed, w.analyzed, w.flagged))?;
    Ok(format!("alpha never drops over 100 populations (min change {worst:+.3}); 9/10 fixture flagged"))
}

fn c10_permutation() -> Check {
    let r = permutation_test(&outcomes(50, 5), &outcomes(50, 8), 10_000, crowdvet::rng::DEFAULT_SEED).map_err(|e| e.to_string())?;
    ensure(r.p_value > 0.05, format!("round 1 vs 2 p = {:.4}", r.p_value))?;
    let mut rejections = 0;
    for seed in 0..1000u64 {
        let mut g = substream(seed, 1010);
        let a: Vec<bool> = (0..50).map(|_| g.random_bool(0.13)).collect();
        let b: Vec<bool> = (0..50).map(|_| g.random_bool(0.13)).collect();
        let t = permutation_test(&a, &b, 2_000, seed).map_err(|e| e.to_string())?;
        rejections += usize::from(t.p_value <= 0.05);
    }
    let rate = rejections as f64 / 1000.0;
    let detail = format!("5/50 vs 8/50 p = {:.4}; null rejection rate {rate:.3}", r.p_value);
    ensure(rate <= 0.07, detail.clone())?;
    Ok(detail)
}

fn c11_categories() -> Check {
    let t = CategoryThresholds::default();
    for mistakes in 0..=18 {
        for attention in [true, false] {
            let expected = match (attention, mistakes) {
                (false, _) => WorkerCategory::Block,
                (true, 0) => WorkerCategory::Gold,
                (true, 1) => WorkerCategory::Silver,
                (true, _) => WorkerCategory::Bronze,
            };
            let got = categorize(mistakes, attention, &t);
            ensure(got == expected, format!("({mistakes}, {attention}) -> {got:?}, expected {expected:?}"))?;
        }
    }
    Ok("38 cells match".into())
}

fn crowdvet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_crowdvet")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("crowdvet {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn judge_fixtures(path: &Path) {
    #[derive(serde::Deserialize)]
    struct Pair {
        reference: String,
        candidate: String,
    }
    let pairs: Vec<Pair> = serde_json::from_slice(&fs::read(data("pairs.json")).unwrap()).unwrap();
    let config = JudgeConfig::default();
    let mut map = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        for d in [Direction::Can2Ref, Direction::Ref2Can] {
            let bundle = llmjudge::render_prompt(&p.reference, &p.candidate, d).unwrap();
            for run in 0..config.runs {
                map.insert(llmjudge::request_digest(&config, &bundle.prompt, run), format!("Score: {}", 1 + (i + run) % 5));
            }
        }
    }
    fs::write(path, llmjudge::write_fixtures(&map).unwrap()).unwrap();
}

fn c12_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let d = |s: &str| data(s).to_string_lossy().into_owned();

    fs::write(root.join("a.csv"), "outcome\n".to_string() + &"1\n".repeat(5) + &"0\n".repeat(45)).unwrap();
    fs::write(root.join("b.csv"), "outcome\n".to_string() + &"1\n".repeat(8) + &"0\n".repeat(42)).unwrap();
    let crowd = population(
        vec![
            ArchetypeCount { count: 20, archetype: Archetype::Competent { accuracy: 0.6, jitter: 1.0 } },
            ArchetypeCount { count: 10, archetype: Archetype::Spammer },
        ],
        4,
        2,
        Some(20),
    );
    fs::write(root.join("crowd.json"), serde_json::to_vec(&crowd).unwrap()).unwrap();
    judge_fixtures(&root.join("fixtures.json"));

    // `@x` is an output of this run, suffixed by pass; `#x` is the first
    // pass's output of an earlier command, so both passes read the same path.
    let (pop, pipe, grp) = (|f: &str| format!("#pop/{f}"), |f: &str| format!("#pipe/{f}"), |f: &str| format!("#crowd/{f}"));
    let commands: Vec<Vec<String>> = [
        vec!["simulate", "--spec", &d("population.json"), "--seed", "11", "--out-dir", "@pop"],
        vec!["simulate", "--pipeline", &d("pipeline.json"), "--seed", "11", "--out-dir", "@pipe"],
        vec!["simulate", "--spec", &p("crowd.json"), "--out-dir", "@crowd"],
        vec!["qualify", "--records", &pipe("qualification.csv"), "--key", &pipe("key.json"), "--config", &pipe("config.json"), "--stages", "@stages.csv", "--out", "@registry.json"],
        vec!["endurance", "--registry", "#registry.json", "--records", &pipe("endurance.csv"), "--config", &pipe("config.json"), "--survival", "@survival.csv", "--out", "@endurance.json"],
        vec!["agreement", "--records", &pop("batch.csv"), "--tasks", &pop("tasks.json"), "--spearman", "--heatmap", "@heatmap.csv", "--out", "@agreement.json"],
        vec!["mace", "--records", &pop("batch.csv"), "--tasks", &pop("tasks.json"), "--filtered", "@filtered.csv", "--out", "@mace.json"],
        vec!["mace", "--records", &pop("batch.csv"), "--tasks", &pop("tasks.json"), "--format", "csv", "--out", "@mace.csv"],
        vec!["timing", "--records", &pop("batch.csv"), "--tasks", &pop("tasks.json"), "--svg", "@timeline.svg", "--out", "@timing.json"],
        vec!["stats", "bootstrap", "--outcomes", &p("a.csv"), "--out", "@bootstrap.json"],
        vec!["stats", "permutation", "--a", &p("a.csv"), "--b", &p("b.csv"), "--out", "@permutation.json"],
        vec!["stats", "median-grouping", "--records", &grp("batch.csv"), "--tasks", &grp("tasks.json"), "--out", "@grouping.json"],
        vec!["stats", "stability", "--registry", "#endurance.json", "--iterations", "2000", "--pairs", "@pairs.csv", "--out", "@stability.json"],
        vec!["judge", "--pairs", &d("pairs.json"), "--replay", "--fixtures", &p("fixtures.json"), "--out", "@judge.json"],
        vec!["cost", "--inputs", &d("cost.json"), "--out", "@cost.json"],
        vec!["cost", "--inputs", &d("cost.json"), "--format", "csv", "--out", "@cost.csv"],
        vec![
            "report", "--qualification", &pipe("qualification.csv"), "--endurance", &pipe("endurance.csv"), "--key", &pipe("key.json"),
            "--config", &pipe("config.json"), "--cost", &d("cost.json"), "--annotations", &pop("batch.csv"), "--tasks", &pop("tasks.json"),
            "--iterations", "2000", "--out", "@report.json",
        ],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(String::from).collect())
    .collect();

    for pass in ["1", "2"] {
        fs::create_dir_all(root.join(pass)).unwrap();
    }
    for command in &commands {
        for pass in 1..=2 {
            let args: Vec<String> = command
                .iter()
                .map(|a| match (a.strip_prefix('@'), a.strip_prefix('#')) {
                    (Some(out), _) => p(&format!("{pass}/{out}")),
                    (_, Some(input)) => p(&format!("1/{input}")),
                    _ => a.clone(),
                })
                .collect();
            crowdvet(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
    }

    let mut files = Vec::new();
    let mut stack = vec![root.join("1")];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(root.join("1")).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    for rel in &files {
        let a = fs::read(root.join("1").join(rel)).unwrap();
        let b = fs::read(root.join("2").join(rel)).map_err(|_| format!("{} missing on second run", rel.display()))?;
        ensure(a == b, format!("{} differs between runs", rel.display()))?;
    }
    ensure(files.len() >= 25, format!("only {} outputs compared", files.len()))?;
    Ok(format!("{} invocations, {} output files byte-identical across runs", commands.len(), files.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("bootstrap reproduction", c1_bootstrap),
        ("cost reproduction", c2_cost),
        ("pass-rate model", c3_pass_rates),
        ("agreement oracle equivalence", c4_oracles),
        ("hand-derived values", c5_hand_values),
        ("competence separation", c6_mace_separation),
        ("competence filter monotonicity", c7_mace_monotone),
        ("median grouping", c8_median_grouping),
        ("rusher detection", c9_rushers),
        ("permutation-test validity", c10_permutation),
        ("categorization totality", c11_categories),
        ("determinism", c12_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name}: {detail} [{secs:.2}s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    println!("{}/12 criteria pass", 12 - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?} (set ACCEPTANCE_STRICT=1 to turn failures into a non-zero exit)");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
