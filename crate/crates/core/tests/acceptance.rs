//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. Criteria whose external data is absent are skipped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use culr::corpus::{Document, Split};
use culr::difficulty::{count_inversions, rank_and_bucket, DifficultyScore, Metric};
use culr::label_curriculum::TargetMatrix;
use culr::labeler::{forward_backward, loss_and_gradient, viterbi, Head, Targets, Transitions};
use culr::orchestrator::{
    confusion_matrix, encode_documents, train, CurriculumInputs, Mode, StrategyConfig, TrainOutcome,
};
use culr::pacing::BabyStepSchedule;
use culr::synthetic::{generate, SyntheticConfig};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn off_diag(row: &[f64], i: usize) -> f64 {
    row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| x).sum()
}

fn rc_dynamics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_sum = 0.0f64;
    let mut worst_mass = 0.0f64;
    for trial in 0..50 {
        let n = rng.gen_range(2..=13);
        let eps = [0.8, 0.9, 0.95, 0.99, 0.999, rng.gen_range(0.01..1.0)][trial % 6];
        let v0 = random_stochastic(&mut rng, n);
        let mut expected: Vec<f64> = (0..n).map(|i| off_diag(&v0[i], i)).collect();
        let mut v = TargetMatrix::from_rows(v0, eps).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            v.update();
            for s in &mut expected {
                *s = eps * *s / (1.0 + eps * *s);
            }
            for (i, row) in v.rows().iter().enumerate() {
                worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
                worst_mass = worst_mass.max((off_diag(row, i) - expected[i]).abs());
            }
        }
    }
    ensure(worst_sum <= 1e-12, || format!("row sum drift {worst_sum:e}"))?;
    ensure(worst_mass <= 1e-12, || format!("off-diagonal mass drift {worst_mass:e}"))?;

    let v = vec![vec![0.5, 0.25, 0.25], vec![0.3, 0.5, 0.2], vec![0.1, 0.4, 0.5]];
    let mut v = TargetMatrix::from_rows(v, 0.9).map_err(|e| e.to_string())?;
    v.update();
    let s1 = v.off_diagonal_mass();
    ensure(s1.iter().all(|s| (s - 0.310345).abs() <= 1e-6), || format!("S1 = {s1:?}"))?;
    Ok(format!(
        "50 matrices x 100 updates, max row-sum error {worst_sum:.1e}, max mass error {worst_mass:.1e}, S1 = {:.6}",
        s1[0]
    ))
}

fn inversion_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let m = rng.gen_range(0..=50);
        let labels = rng.gen_range(1..=13);
        let seq: Vec<usize> = (0..m).map(|_| rng.gen_range(0..labels)).collect();
        let mut brute = 0u64;
        for i in 0..m {
            for j in i + 1..m {
                brute += u64::from(seq[i] > seq[j]);
            }
        }
        let fast = count_inversions(&seq);
        ensure(fast == brute, || format!("case {case}: {seq:?} gave {fast}, brute force {brute}"))?;
    }
    Ok("1000 random sequences match brute force".into())
}

struct Instance {
    emissions: Vec<Vec<f64>>,
    trans: Transitions,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.gen_range(1..=6);
    let n = rng.gen_range(1..=4);
    let emissions = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let trans = Transitions::from_scores(n, (0..(n + 1) * (n + 1)).map(|_| rng.gen_range(-2.0..2.0)).collect());
    Instance { emissions, trans }
}

fn score_of(inst: &Instance, path: &[usize]) -> f64 {
    let t = &inst.trans;
    let mut s = t.start(path[0]);
    for (i, &y) in path.iter().enumerate() {
        s += inst.emissions[i][y];
        if i > 0 {
            s += t.pair(path[i - 1], y);
        }
    }
    s + t.stop(*path.last().unwrap())
}

fn all_paths(m: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

fn crf_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_prob = 0.0f64;
    let mut worst_grad = 0.0f64;
    let mut gradients = 0usize;
    for case in 0..200 {
        let inst = random_instance(&mut rng);
        let (m, n) = (inst.emissions.len(), inst.trans.num_labels());
        let paths = all_paths(m, n);
        let scores: Vec<f64> = paths.iter().map(|p| score_of(&inst, p)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        let mut marg = vec![vec![0.0; n]; m];
        for (p, s) in paths.iter().zip(&scores) {
            let w = (s - log_z).exp();
            for (i, &y) in p.iter().enumerate() {
                marg[i][y] += w;
            }
        }

        let fb = forward_backward(&inst.emissions, &inst.trans);
        worst_prob = worst_prob.max((fb.log_z - log_z).abs());
        for i in 0..m {
            for y in 0..n {
                worst_prob = worst_prob.max((fb.marginals[i][y] - marg[i][y]).abs());
            }
        }

        let (best, best_score) = viterbi(&inst.emissions, &inst.trans);
        ensure((best_score - max).abs() < 1e-9 && (score_of(&inst, &best) - max).abs() < 1e-9, || {
            format!("case {case}: Viterbi score {best_score} vs exhaustive {max}")
        })?;
        let ties = scores.iter().filter(|&&s| s > max - 1e-9).count();
        if ties == 1 {
            let argmax = &paths[scores.iter().position(|&s| s == max).unwrap()];
            ensure(&best == argmax, || format!("case {case}: Viterbi {best:?} vs exhaustive {argmax:?}"))?;
        }

        let gold: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
        let soft: Vec<Vec<f64>> = (0..m).map(|_| random_stochastic(&mut rng, n).swap_remove(0)).collect();
        for head in [Head::Crf, Head::Softmax] {
            for targets in [Targets::Hard(gold.clone()), Targets::Soft(soft.clone())] {
                let g = loss_and_gradient(head, &inst.emissions, &inst.trans, targets.clone())
                    .map_err(|e| format!("case {case}: {e}"))?;
                let loss = |e: &[Vec<f64>], t: &Transitions| {
                    loss_and_gradient(head, e, t, targets.clone()).unwrap().loss
                };
                let h = 1e-5;
                let rel = |a: f64, num: f64| (a - num).abs() / a.abs().max(num.abs()).max(1e-3);
                for i in 0..m {
                    for y in 0..n {
                        let mut up = inst.emissions.clone();
                        let mut down = inst.emissions.clone();
                        up[i][y] += h;
                        down[i][y] -= h;
                        let num = (loss(&up, &inst.trans) - loss(&down, &inst.trans)) / (2.0 * h);
                        worst_grad = worst_grad.max(rel(g.emissions[i][y], num));
                        gradients += 1;
                    }
                }
                if head == Head::Crf {
                    for k in 0..inst.trans.scores().len() {
                        let mut up = inst.trans.clone();
                        let mut down = inst.trans.clone();
                        up.scores_mut()[k] += h;
                        down.scores_mut()[k] -= h;
                        let num = (loss(&inst.emissions, &up) - loss(&inst.emissions, &down)) / (2.0 * h);
                        worst_grad = worst_grad.max(rel(g.transitions[k], num));
                        gradients += 1;
                    }
                }
            }
        }
    }
    ensure(worst_prob <= 1e-8, || format!("log Z / marginal error {worst_prob:e}"))?;
    ensure(worst_grad <= 1e-4, || format!("gradient relative error {worst_grad:e}"))?;
    Ok(format!(
        "200 instances, max log Z/marginal error {worst_prob:.1e}, {gradients} gradient entries, max relative error {worst_grad:.1e}"
    ))
}

fn trace(run: &TrainOutcome) -> Result<String, String> {
    let epochs = serde_json::to_string(&run.epochs).map_err(|e| e.to_string())?;
    let report = serde_json::to_string(&run.report()).map_err(|e| e.to_string())?;
    Ok(epochs + &report)
}

fn small_config(mode: Mode, seed: u64) -> StrategyConfig {
    StrategyConfig {
        mode,
        seed,
        total_epochs: 6,
        ..StrategyConfig::default()
    }
}

fn reductions() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let inst = random_instance(&mut rng);
        let (m, n) = (inst.emissions.len(), inst.trans.num_labels());
        let gold: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
        let v = TargetMatrix::identity(n, 0.9).map_err(|e| e.to_string())?;
        let soft = Targets::Soft(gold.iter().map(|&y| v.soft_targets(y).to_vec()).collect());
        for head in [Head::Crf, Head::Softmax] {
            let a = loss_and_gradient(head, &inst.emissions, &inst.trans, Targets::Hard(gold.clone()));
            let b = loss_and_gradient(head, &inst.emissions, &inst.trans, soft.clone());
            let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
            ensure(a.loss.to_bits() == b.loss.to_bits() && a == b, || {
                format!("case {case}: identity targets changed the loss ({} vs {})", a.loss, b.loss)
            })?;
        }
    }

    let corpus = generate(&SyntheticConfig {
        num_docs: 60,
        seed: 4,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let train_ids: HashSet<String> = corpus.train_docs().iter().map(|d| d.id.clone()).collect();
    let inputs = CurriculumInputs::default();
    let dc = train(
        &corpus,
        &StrategyConfig {
            num_buckets: 1,
            ..small_config(Mode::DcOnly, 4)
        },
        &inputs,
    )
    .map_err(|e| e.to_string())?;
    let schedule = dc.schedule.as_ref().ok_or("no schedule for DC run")?;
    let stage: HashSet<String> = schedule.stage_documents(0).map_err(|e| e.to_string())?.iter().cloned().collect();
    ensure(schedule.num_stages() == 1 && stage == train_ids, || {
        format!("B=1 gave {} stages", schedule.num_stages())
    })?;
    ensure(dc.epochs.iter().all(|e| e.active_docs == train_ids.len()), || {
        "B=1 run trained on a partial set".into()
    })?;

    let baseline = trace(&train(&corpus, &small_config(Mode::Baseline, 4), &inputs).map_err(|e| e.to_string())?)?;
    for mode in Mode::ALL {
        let cfg = StrategyConfig {
            num_buckets: 1,
            eta: 0.0,
            ..small_config(mode, 4)
        };
        let t = trace(&train(&corpus, &cfg, &inputs).map_err(|e| e.to_string())?)?;
        ensure(t == baseline, || format!("{mode} with B=1, eta=0 diverges from baseline"))?;
    }
    Ok("identity targets bit-identical on 200 instances; B=1 is one full stage; all 7 modes reduce to baseline".into())
}

fn scheduler() -> Check {
    let scores: Vec<DifficultyScore> = (0..10)
        .map(|i| DifficultyScore {
            doc_id: format!("d{i}"),
            metric: Metric::Shifts,
            value: ((i * 7) % 10) as f64,
            raw_inversions: None,
        })
        .collect();
    let assignment = rank_and_bucket(&scores, 3).map_err(|e| e.to_string())?;
    ensure(assignment.sizes() == [4, 3, 3], || format!("bucket sizes {:?}", assignment.sizes()))?;
    let schedule = BabyStepSchedule::build(assignment, 2).map_err(|e| e.to_string())?;
    ensure(schedule.stage_sizes() == [4, 7, 10], || format!("stage sizes {:?}", schedule.stage_sizes()))?;
    for w in schedule.stages.windows(2) {
        let next: HashSet<&String> = w[1].iter().collect();
        ensure(w[0].iter().all(|d| next.contains(d)), || "stages are not nested".into())?;
    }
    let all: HashSet<&String> = scores.iter().map(|s| &s.doc_id).collect();
    ensure(schedule.stages[2].iter().collect::<HashSet<_>>() == all, || "final stage incomplete".into())?;

    let corpus = generate(&SyntheticConfig {
        num_docs: 14,
        seed: 5,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure(corpus.train_docs().len() == 10, || format!("{} training docs", corpus.train_docs().len()))?;
    let val = corpus.docs_in(Split::Val);
    let base = train(&corpus, &small_config(Mode::Baseline, 5), &CurriculumInputs::default()).map_err(|e| e.to_string())?;
    let conf = val_confusion(&base, &val)?;
    let inputs = CurriculumInputs {
        confusion: Some(&conf),
        ..CurriculumInputs::default()
    };
    let mut epochs = 0;
    for mode in Mode::ALL.into_iter().filter(|m| m.uses_dc()) {
        let cfg = StrategyConfig {
            num_buckets: 3,
            epochs_per_stage: 2,
            rc_interval: 1,
            max_rc_steps: Some(2),
            batch_size: 3,
            ..small_config(mode, 5)
        };
        let run = train(&corpus, &cfg, &inputs).map_err(|e| e.to_string())?;
        let schedule = run.schedule.as_ref().ok_or("missing schedule")?;
        ensure(schedule.stage_sizes() == [4, 7, 10], || format!("{mode}: stage sizes {:?}", schedule.stage_sizes()))?;
        for rec in &run.epochs {
            let k = rec.stage.unwrap_or(schedule.num_stages() - 1);
            let allowed: HashSet<&String> = schedule.stages[k].iter().collect();
            ensure(rec.documents.iter().all(|d| allowed.contains(d)), || {
                format!("{mode}: epoch {} visited a document outside stage {k}", rec.epoch)
            })?;
            epochs += 1;
        }
    }
    Ok(format!("stages 4/7/10 nested and complete; {epochs} logged epochs stay inside their stage"))
}

fn val_confusion(run: &TrainOutcome, val: &[&Document]) -> Result<Vec<Vec<u64>>, String> {
    let x = encode_documents(run.model.encoder(), val, None).map_err(|e| e.to_string())?;
    let refs: Vec<_> = x.iter().map(Vec::as_slice).collect();
    confusion_matrix(&run.model, val, &refs).map_err(|e| e.to_string())
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let corpus = generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?;
    let cfg = StrategyConfig::default();
    let run = train(&corpus, &cfg, &CurriculumInputs::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let test = run.test.as_ref().ok_or("no test split")?;
    ensure(run.epochs.len() == 40, || format!("{} epochs", run.epochs.len()))?;
    ensure(test.micro_f1 >= 0.90, || format!("test micro-F1 {:.4}", test.micro_f1))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "test micro-F1 {:.4} (macro {:.4}) after 40 epochs in {elapsed:.1?}",
        test.micro_f1, test.macro_f1
    ))
}

fn directional() -> Check {
    let seeds = 0..5u64;
    let (mut base_sum, mut cur_sum) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in seeds.clone() {
        let corpus = generate(&SyntheticConfig {
            seed,
            shuffled_fraction: 0.5,
            ..SyntheticConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let base = train(
            &corpus,
            &StrategyConfig {
                seed,
                ..StrategyConfig::default()
            },
            &CurriculumInputs::default(),
        )
        .map_err(|e| e.to_string())?;
        let conf = val_confusion(&base, &corpus.docs_in(Split::Val))?;
        let cfg = StrategyConfig {
            mode: Mode::Hierarchical,
            epsilon: 0.8,
            rc_interval: 1,
            num_buckets: 3,
            epochs_per_stage: 1,
            seed,
            ..StrategyConfig::default()
        };
        let inputs = CurriculumInputs {
            confusion: Some(&conf),
            ..CurriculumInputs::default()
        };
        let cur = train(&corpus, &cfg, &inputs).map_err(|e| e.to_string())?;
        let b = base.test.as_ref().ok_or("no test split")?.macro_f1;
        let c = cur.test.as_ref().ok_or("no test split")?.macro_f1;
        base_sum += b;
        cur_sum += c;
        per_seed.push(format!("{c:.3}/{b:.3}"));
    }
    let k = seeds.count() as f64;
    let (b, c) = (base_sum / k, cur_sum / k);
    let detail = format!(
        "mean test macro-F1 curriculum {c:.4} vs baseline {b:.4} over {k} seeds (per seed {})",
        per_seed.join(" ")
    );
    if c >= b - 0.005 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_culr"))
        .current_dir(dir)
        .args(args)
        .env_remove("CULR_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn ingest_stats(dir: &Path, args: &[&str]) -> Result<(u64, u64, u64), String> {
    let stats: serde_json::Value = serde_json::from_str(&run_cli(dir, args)?).map_err(|e| e.to_string())?;
    let get = |k: &str| stats[k].as_u64().ok_or(format!("stats lack `{k}`"));
    Ok((get("roles")?, get("sentences")?, get("documents")?))
}

fn data_check() -> Outcome {
    let build = std::env::var("CULR_BUILD_TRAIN").ok().zip(std::env::var("CULR_BUILD_DEV").ok());
    let paheli = std::env::var("CULR_PAHELI_CORPUS").ok();
    if build.is_none() && paheli.is_none() {
        return Outcome::Skip("set CULR_BUILD_TRAIN and CULR_BUILD_DEV, or CULR_PAHELI_CORPUS".into());
    }
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mut notes = Vec::new();
    let mut check = || -> Result<(), String> {
        if let Some((train_path, dev_path)) = &build {
            let args = ["ingest", "--in", train_path, "--val-in", dev_path, "--format", "build", "--out", "build.jsonl"];
            let (roles, sentences, docs) = ingest_stats(dir.path(), &args)?;
            ensure(roles == 13 && sentences == 31_865, || {
                format!("Build: {roles} roles, {sentences} sentences")
            })?;
            notes.push(format!("Build {docs} docs, {roles} roles, {sentences} sentences"));
        }
        if let Some(path) = &paheli {
            let (_, sentences, docs) = ingest_stats(dir.path(), &["ingest", "--in", path, "--out", "paheli.jsonl"])?;
            ensure(sentences == 9_380 && docs == 50, || format!("Paheli: {docs} docs, {sentences} sentences"))?;
            notes.push(format!("Paheli {docs} docs, {sentences} sentences"));
        }
        Ok(())
    };
    match check() {
        Ok(()) => Outcome::Pass(notes.join("; ")),
        Err(e) => Outcome::Fail(e),
    }
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    run_cli(d, &["synth", "--docs", "60", "--seed", "9", "--out", "c.jsonl", "--splits-out", "s.jsonl"])?;
    let common = ["--corpus", "c.jsonl", "--splits", "s.jsonl", "--seed", "9", "--epochs", "6"];
    let train_twice = |name: &str, extra: &[&str]| -> Result<(), String> {
        let mut outs = Vec::new();
        for run in ["a", "b"] {
            let out = format!("{name}-{run}");
            let mut args = vec!["train"];
            args.extend(common);
            args.extend(extra);
            args.extend(["--out", &out]);
            run_cli(d, &args)?;
            outs.push(fs::read(d.join(&out).join("metrics.json")).map_err(|e| e.to_string())?);
        }
        ensure(outs[0] == outs[1], || format!("{name}: metrics differ between runs"))
    };
    train_twice("baseline", &["--strategy", "baseline"])?;
    run_cli(d, &["confusion", "--model", "baseline-a/model.json", "--corpus", "c.jsonl", "--splits", "s.jsonl", "--out", "conf.json"])?;
    train_twice(
        "hiculr",
        &["--strategy", "hiculr", "--confusion", "conf.json", "--num-buckets", "3", "--epochs-per-stage", "1", "--rc-interval", "1", "--max-rc-steps", "4"],
    )?;
    train_twice("dc", &["--strategy", "dc", "--dc-metric", "data-inv", "--num-buckets", "3", "--epochs-per-stage", "1"])?;
    Ok("baseline, hierarchical and DC runs produce byte-identical metrics JSON".into())
}

fn as_outcome(r: Check) -> Outcome {
    match r {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("1 target annealing dynamics", Box::new(|| as_outcome(rc_dynamics()))),
        ("2 inversion count vs brute force", Box::new(|| as_outcome(inversion_oracle()))),
        ("3 CRF inference and gradients vs enumeration", Box::new(|| as_outcome(crf_oracle()))),
        ("4 reduction identities", Box::new(|| as_outcome(reductions()))),
        ("5 baby-step scheduler", Box::new(|| as_outcome(scheduler()))),
        ("6 end-to-end synthetic baseline", Box::new(|| as_outcome(end_to_end()))),
        ("7 directional curriculum check", Box::new(|| as_outcome(directional()))),
        ("8 public corpus statistics", Box::new(data_check)),
        ("9 CLI determinism", Box::new(|| as_outcome(determinism()))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let t = start.elapsed();
        match outcome {
            Outcome::Pass(d) => println!("[PASS] {name} ({t:.1?}): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("[FAIL] {name} ({t:.1?}): {d}");
            }
            Outcome::Skip(d) => println!("[SKIP] {name}: {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
