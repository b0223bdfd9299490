//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prosody_rl::dataset::load_prompts;
use prosody_rl::eval::evaluate;
use prosody_rl::feedback::{generate_dataset, judge_labels, simulate_asr, AsrNoiseConfig, JudgeConfig, TemplateBank};
use prosody_rl::grpo::{
    bernoulli_kl, compute_advantages, fixed_policy_gradients, grpo_loss, kl_divergence, loss_and_gradient,
    rollout_group, train, AdvantageMode, FeedbackEnv, GroupRollout, GrpoHyper, MetricsRow, RolloutBatch,
    TrainSettings,
};
use prosody_rl::harness::cmd_train;
use prosody_rl::policy::{grad_log_prob, log_prob, sample};
use prosody_rl::rewards::{composite_reward, RewardWeights};
use prosody_rl::textmetrics::{edit_counts, wer, TokenSequence};
use prosody_rl::{Dimension, PolicyParams, ProsodyLabels, PromptRecord, SpeechSample, Speed};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/prompts_200.jsonl")
}

fn random_params(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> PolicyParams {
    let mut p = PolicyParams::zeros(dim);
    for v in p.iter_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    p
}

fn random_prompts(rng: &mut ChaCha8Rng, n: usize) -> Vec<PromptRecord> {
    let mut inner = prosody_rl::rng::stream(rng.gen(), &[]);
    generate_dataset(n, &mut inner, &TemplateBank::default())
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn central_difference(params: &PolicyParams, h: f64, f: impl Fn(&PolicyParams) -> f64) -> Vec<f64> {
    let base = params.to_flat();
    let dim = params.feature_dim();
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += h;
            minus[k] -= h;
            (f(&PolicyParams::from_flat(dim, &plus)) - f(&PolicyParams::from_flat(dim, &minus))) / (2.0 * h)
        })
        .collect()
}

// ---------------------------------------------------------------- 1

fn oracle_distance(r: &[u8], h: &[u8]) -> usize {
    match (r.split_first(), h.split_first()) {
        (None, _) => h.len(),
        (_, None) => r.len(),
        (Some((a, rt)), Some((b, ht))) => {
            let sub = oracle_distance(rt, ht) + usize::from(a != b);
            let del = oracle_distance(rt, h) + 1;
            let ins = oracle_distance(r, ht) + 1;
            sub.min(del).min(ins)
        }
    }
}

fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..3u8).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn wer_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let seqs = all_sequences(4);
    let symbols = ["a", "b", "c"];
    let tokens = |s: &[u8]| TokenSequence::from_tokens(s.iter().map(|&c| symbols[c as usize]));
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for r in &seqs {
        let rt = tokens(r);
        for h in &seqs {
            let counts = edit_counts(&rt, &tokens(h));
            let consistent = counts.reference_length == r.len()
                && counts.reference_length - counts.deletions + counts.insertions == h.len();
            if counts.errors() != oracle_distance(r, h) || !consistent {
                mismatches += 1;
            }
            pairs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("{pairs} pairs, {mismatches} mismatches, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 2

fn worked_wer_values() -> Outcome {
    let cases = [
        ("a b c", "a b c", 0.0 / 3.0),
        ("the cat sat on the mat", "the cat sat mat", 2.0 / 6.0),
        ("a", "b c", 2.0 / 1.0),
    ];
    let got: Vec<f64> = cases.iter().map(|(r, h, _)| wer(r, h)).collect();
    let pass = cases.iter().zip(&got).all(|((_, _, want), g)| g == want);
    outcome(pass, format!("{got:?}"))
}

// ---------------------------------------------------------------- 3

fn reward_arithmetic() -> Outcome {
    let w = RewardWeights::default();
    let defaults_ok = w.alpha1 == 0.3 && w.alpha2 == 0.7;
    let cases = [(0.0, 1.0, 0.7), (1.0, 0.0, -0.3), (0.2, 0.75, 0.465)];
    let got: Vec<f64> = cases.iter().map(|&(e, l, _)| composite_reward(e, l, &w).total).collect();
    let exact: Vec<bool> = cases.iter().zip(&got).map(|(c, g)| *g == c.2).collect();
    outcome(
        defaults_ok && exact.iter().all(|&b| b),
        format!("got {got:?}, exact {exact:?}"),
    )
}

// ---------------------------------------------------------------- 4

fn probability_mass() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let texts = ["hello", "Go!", "Alas, rain.", "what now?"];
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let params = random_params(&mut rng, 8, 0.2 + 0.3 * trial as f64);
        for text in texts {
            let prompt = PromptRecord {
                id: "p".into(),
                text: text.into(),
                target: ProsodyLabels::from_indices([0; 4]).unwrap(),
            };
            let words = prosody_rl::textmetrics::normalize_tokens(text);
            let n = words.len();
            let mut mass = 0.0;
            for labels in ProsodyLabels::all() {
                for mask in 0..(1u32 << n) {
                    let s = SpeechSample {
                        labels,
                        words: words.clone(),
                        articulated: (0..n).map(|i| mask >> i & 1 == 1).collect(),
                    };
                    mass += log_prob(&params, &prompt, &s).exp();
                }
            }
            worst = worst.max((mass - 1.0).abs());
        }
    }
    outcome(worst < 1e-9, format!("max |mass - 1| = {worst:.3e}"))
}

// ---------------------------------------------------------------- 5

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut worst_lp = 0.0f64;
    for _ in 0..50 {
        let dim = [4, 8, 16][rng.gen_range(0..3)];
        let scale = rng.gen_range(0.1..2.0);
        let params = random_params(&mut rng, dim, scale);
        let prompt = random_prompts(&mut rng, 1).remove(0);
        let mut srng = prosody_rl::rng::stream(rng.gen(), &[]);
        let s = sample(&params, &prompt, &mut srng).unwrap();
        let analytic = grad_log_prob(&params, &prompt, &s).to_flat();
        let numeric = central_difference(&params, h, |p| log_prob(p, &prompt, &s));
        worst_lp = worst_lp.max(rel_err(&analytic, &numeric));
    }

    let mut worst_loss = 0.0f64;
    let modes = [AdvantageMode::Standardized, AdvantageMode::Centered, AdvantageMode::Raw];
    for trial in 0..50u64 {
        let dim = [4, 8][rng.gen_range(0..2)];
        let scale = rng.gen_range(0.1..1.0);
        let old = random_params(&mut rng, dim, scale);
        let mut params = old.clone();
        params.axpy(1.0, &random_params(&mut rng, dim, 0.3));
        let n = rng.gen_range(1..4);
        let prompts = random_prompts(&mut rng, n);
        let groups: Vec<GroupRollout> = prompts
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let g = rng.gen_range(2..6);
                let env = FeedbackEnv::default();
                let mut group =
                    rollout_group(&old, p, g, &env, &RewardWeights::default(), trial, (trial, j as u64)).unwrap();
                group.assign_advantages(modes[trial as usize % 3]);
                group
            })
            .collect();
        let batch = RolloutBatch { params_old: old, groups };
        let hyper = GrpoHyper { beta: rng.gen_range(0.0..1.0), ..GrpoHyper::default() };
        let (_, grad) = loss_and_gradient(&params, &batch, hyper.beta).unwrap();
        let numeric = central_difference(&params, h, |p| grpo_loss(p, &batch, &hyper).unwrap());
        worst_loss = worst_loss.max(rel_err(&grad.to_flat(), &numeric));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_lp < 1e-4 && worst_loss < 1e-4 && secs < 30.0,
        format!("log-prob max rel err {worst_lp:.2e}, loss max rel err {worst_loss:.2e}, {secs:.2}s"),
    )
}

// ---------------------------------------------------------------- 6

fn kl_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let prompts = random_prompts(&mut rng, 16);
    let mut worst_self = 0.0f64;
    let mut min_kl = f64::INFINITY;
    for _ in 0..1000 {
        let scale = rng.gen_range(0.01..3.0);
        let a = random_params(&mut rng, 8, scale);
        let b = random_params(&mut rng, 8, scale);
        let batch = &prompts[..rng.gen_range(1..prompts.len())];
        worst_self = worst_self.max(kl_divergence(&a, &a, batch).abs());
        min_kl = min_kl.min(kl_divergence(&a, &b, batch));
    }
    let bern = bernoulli_kl(0.75, 0.5);
    let closed = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
    let pass = worst_self <= 1e-12 && min_kl >= 0.0 && (bern - closed).abs() < 1e-5 && (bern - 0.13081).abs() < 1e-5;
    outcome(
        pass,
        format!("max KL(a,a) {worst_self:.1e}, min KL(a,b) {min_kl:.3e}, Bernoulli {bern:.6}"),
    )
}

// ---------------------------------------------------------------- 7

fn advantage_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_mean = 0.0f64;
    for _ in 0..1000 {
        let g = rng.gen_range(2..17);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for mode in [AdvantageMode::Standardized, AdvantageMode::Centered] {
            let a = compute_advantages(&rewards, mode);
            worst_mean = worst_mean.max((a.iter().sum::<f64>() / g as f64).abs());
        }
    }

    let within = |got: &[f64], want: &[f64]| got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-3);
    let a1 = compute_advantages(&[1.0, 0.0, 1.0, 0.0], AdvantageMode::Standardized);
    let a2 = compute_advantages(&[1.0, 0.0, 0.0, 0.0], AdvantageMode::Standardized);
    let s3 = 3f64.sqrt();
    let worked = within(&a1, &[1.0, -1.0, 1.0, -1.0])
        && within(&a2, &[1.7321, -0.5774, -0.5774, -0.5774])
        && within(&a2, &[s3, -1.0 / s3, -1.0 / s3, -1.0 / s3]);

    let mut worst_shift = 0.0f64;
    let prompts = random_prompts(&mut rng, 8);
    for trial in 0..40u64 {
        let params = random_params(&mut rng, 8, 1.0);
        let mode = [AdvantageMode::Standardized, AdvantageMode::Centered][trial as usize % 2];
        let shift = rng.gen_range(-5.0..5.0);
        let group = rollout_group(
            &params,
            &prompts[trial as usize % 8],
            8,
            &FeedbackEnv::default(),
            &RewardWeights::default(),
            trial,
            (trial, 0),
        )
        .unwrap();
        let direction = |rewards: Vec<f64>| {
            let mut g = group.clone();
            g.advantages = compute_advantages(&rewards, mode);
            g.rewards = rewards;
            let batch = RolloutBatch { params_old: params.clone(), groups: vec![g] };
            loss_and_gradient(&params, &batch, 0.0).unwrap().1.to_flat()
        };
        let base = direction(group.rewards.clone());
        let shifted = direction(group.rewards.iter().map(|r| r + shift).collect());
        worst_shift = worst_shift.max(rel_err(&base, &shifted));
    }
    outcome(
        worst_mean < 1e-9 && worked && worst_shift < 1e-6,
        format!(
            "max |mean A| {worst_mean:.1e}, worked vectors {a1:.4?} {a2:.4?}, max shift rel diff {worst_shift:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 8 and 9

const BUDGET: usize = 500;

fn regression_overrides(out: &Path, extra: &[(&str, &str)]) -> BTreeMap<String, String> {
    let mut o: BTreeMap<String, String> = [
        ("dataset_path", fixture().display().to_string()),
        ("output_dir", out.display().to_string()),
        ("seed", "20240917".into()),
        ("group_size", "8".into()),
        ("flip_prob", "0.05".into()),
        ("epochs", "30".into()),
        ("prompts_per_step", "16".into()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    for (k, v) in extra {
        o.insert(k.to_string(), v.to_string());
    }
    o
}

struct RunSummary {
    steps: usize,
    final_match: f64,
    final_wer: f64,
    tail_match: f64,
    tail_wer: f64,
    secs: f64,
    metrics: Vec<u8>,
}

fn regression_run(dir: &Path, extra: &[(&str, &str)]) -> RunSummary {
    let start = Instant::now();
    let report = cmd_train(None, &regression_overrides(dir, extra)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let metrics = fs::read(&report.metrics_path).unwrap();
    let rows: Vec<MetricsRow> = String::from_utf8_lossy(&metrics)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let tail = &rows[rows.len().saturating_sub(20)..];
    let n = tail.len() as f64;
    let config = report.config;
    let params = prosody_rl::checkpoint::load(&report.checkpoint_path).unwrap();
    let prompts = load_prompts(&config.dataset_path).unwrap();
    let eval = evaluate(&params, &prompts, &config.env(), &config.weights(), 8, config.seed).unwrap();
    RunSummary {
        steps: rows.len(),
        final_match: eval.label_match_rate,
        final_wer: eval.mean_wer,
        tail_match: tail.iter().map(|r| r.label_match_rate).sum::<f64>() / n,
        tail_wer: tail.iter().map(|r| r.mean_wer).sum::<f64>() / n,
        secs,
        metrics,
    }
}

fn convergence_regression() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let a = regression_run(&tmp.path().join("a"), &[]);
    let b = regression_run(&tmp.path().join("b"), &[]);
    let identical = a.metrics == b.metrics;
    let pass = a.steps <= BUDGET
        && a.final_match >= 0.9
        && a.tail_match >= 0.9
        && a.final_wer <= 0.05
        && a.tail_wer <= 0.05
        && identical
        && a.secs < 60.0;
    outcome(
        pass,
        format!(
            "{} steps, label match {:.3} (last 20 steps {:.3}), WER {:.4} (last 20 steps {:.4}), identical reruns {identical}, {:.2}s",
            a.steps, a.final_match, a.tail_match, a.final_wer, a.tail_wer, a.secs
        ),
    )
}

fn gradient_variance(grads: &[PolicyParams]) -> f64 {
    let n = grads.len() as f64;
    let mut mean = PolicyParams::zeros(grads[0].feature_dim());
    for g in grads {
        mean.axpy(1.0 / n, g);
    }
    let spread = grads
        .iter()
        .map(|g| {
            let mut d = g.clone();
            d.axpy(-1.0, &mean);
            d.norm().powi(2)
        })
        .sum::<f64>()
        / (n - 1.0);
    spread / mean.norm().powi(2)
}

fn ablations() -> Outcome {
    let chance: f64 = Dimension::ALL.iter().map(|d| 1.0 / d.size() as f64).sum::<f64>() / 4.0;
    let tmp = tempfile::tempdir().unwrap();
    let no_label = regression_run(&tmp.path().join("no_label"), &[("use_label_reward", "false")]);
    let a_pass = (no_label.final_match - chance).abs() <= 0.1
        && (no_label.final_match - 0.2833).abs() <= 0.1
        && no_label.final_wer <= 0.05;

    let raw = regression_run(&tmp.path().join("raw"), &[("use_group_norm", "false")]);
    let raw_fails = raw.final_match < 0.9 || raw.final_wer > 0.05;

    let prompts = load_prompts(&fixture()).unwrap();
    let settings = TrainSettings {
        seed: 20240917,
        feature_dim: 32,
        hyper: GrpoHyper::default(),
        weights: RewardWeights::default(),
        env: FeedbackEnv::default(),
    };
    let snapshot = train(
        &prompts,
        &TrainSettings { hyper: GrpoHyper { epochs: 1, ..settings.hyper }, ..settings },
        &mut |_| Ok(()),
    )
    .unwrap()
    .params;
    let var = |mode| gradient_variance(&fixed_policy_gradients(&snapshot, &prompts, 100, &settings, mode).unwrap());
    let (v_std, v_raw) = (var(AdvantageMode::Standardized), var(AdvantageMode::Raw));
    let ratio = v_raw / v_std;

    outcome(
        a_pass && raw_fails && ratio >= 2.0,
        format!(
            "no label reward: match {:.3} vs chance {chance:.4}, WER {:.4}; raw advantages: match {:.3}, WER {:.4}, relative gradient variance {v_raw:.3} vs {v_std:.3} ({ratio:.2}x)",
            no_label.final_match, no_label.final_wer, raw.final_match, raw.final_wer
        ),
    )
}

// ---------------------------------------------------------------- 10

fn within_3_sigma(hits: usize, n: usize, p: f64) -> (bool, f64) {
    let observed = hits as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let z = if sigma == 0.0 {
        if observed == p { 0.0 } else { f64::INFINITY }
    } else {
        (observed - p) / sigma
    };
    (z.abs() <= 3.0, z)
}

fn environment_calibration() -> Outcome {
    const N: usize = 100_000;
    const SEED: u64 = 20240917;
    let asr = AsrNoiseConfig::default();
    let mut worst_z = 0.0f64;
    let mut pass = true;
    let mut check = |hits: usize, p: f64| {
        let (ok, z) = within_3_sigma(hits, N, p);
        pass &= ok;
        worst_z = worst_z.max(z.abs());
    };

    for (k, &speed) in Speed::ALL.iter().enumerate() {
        let m = asr.speed_multiplier[speed.index()];
        for articulated in [true, false] {
            let s = SpeechSample {
                labels: ProsodyLabels { speed, ..ProsodyLabels::from_indices([0; 4]).unwrap() },
                words: TokenSequence::from_tokens(["word"]),
                articulated: vec![articulated],
            };
            let mut rng = prosody_rl::rng::stream(SEED, &[k as u64, u64::from(articulated)]);
            let (mut subs, mut dels) = (0, 0);
            for _ in 0..N {
                match simulate_asr(&s, &asr, &mut rng).as_str() {
                    "" => dels += 1,
                    "word" => {}
                    _ => subs += 1,
                }
            }
            if articulated {
                check(subs, (asr.clean_err * m).min(1.0));
                check(dels, 0.0);
            } else {
                let sub = (asr.base_sub * m).min(1.0);
                check(subs, sub);
                check(dels, (asr.base_del * m).min(1.0 - sub));
            }
        }
    }

    let judge = JudgeConfig::default();
    let s = SpeechSample {
        labels: ProsodyLabels::from_indices([1, 2, 0, 2]).unwrap(),
        words: TokenSequence::from_tokens(["word"]),
        articulated: vec![true],
    };
    let mut rng = prosody_rl::rng::stream(SEED, &[99]);
    let mut flips = [0usize; 4];
    for _ in 0..N {
        let j = judge_labels(&s, &judge, &mut rng);
        for d in Dimension::ALL {
            flips[d.index()] += usize::from(j.get(d) != s.labels.get(d));
        }
    }
    for hits in flips {
        check(hits, judge.flip_prob);
    }
    outcome(pass, format!("max |z| = {worst_z:.2} over ASR and judge rates at {N} draws"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("WER oracle equivalence", wer_oracle_equivalence),
        ("worked WER values", worked_wer_values),
        ("reward arithmetic", reward_arithmetic),
        ("policy normalization", probability_mass),
        ("gradient checks", gradient_checks),
        ("KL properties", kl_properties),
        ("advantage properties", advantage_properties),
        ("convergence regression", convergence_regression),
        ("ablation directions", ablations),
        ("environment calibration", environment_calibration),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {:>2} {:<24} {} | {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
