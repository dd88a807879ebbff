//! Acceptance checks, one line per criterion. Runs with its own harness so
//! the summary is always printed; the process fails if any criterion fails.
//! Everything runs on a single worker thread.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steertest::artifact::read_jsonl;
use steertest::config::PipelineConfig;
use steertest::detector::{
    cross_entropy_loss, kl_consistency_loss, total_loss, train_detector, DetectorModel, EncoderConfig, Objective,
    TrainingConfig, Vocab,
};
use steertest::locator::{train_locator, LocatorSample};
use steertest::metrics::{f1, trigger_stats};
use steertest::nn::Matrix;
use steertest::pipeline::{self, files};
use steertest::profiler::{profile_heads, LikelihoodScorer, ProfilingItem, ProfilingSet};
use steertest::steer::{
    generate_candidates, reweight_row, steered_head_output, DecoderConfig, GenerationConfig, HeadId, HeadSet,
    SteeringSpec, ToyDecoder,
};
use steertest::synth::{detector_corpus, locator_corpus, SynthConfig};
use steertest::validator::{
    classify, validate_candidates, CandidateTest, Classification, RunResult, ValidationConfig, Verdict,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_secs as f64 {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit_secs} s"))
    }
}

// ----- 1. reweighting against a brute-force evaluator ---------------------

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> BTreeSet<usize> {
    let size = rng.gen_range(1..=n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.into_iter().take(size).collect()
}

fn random_alpha(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen_range(0.0..1.0),
    }
}

/// Weight `a_t` by 1 inside the set and alpha outside, then divide by the
/// total of the weighted row.
fn brute_reweight(row: &[f64], set: &BTreeSet<usize>, alpha: f64) -> Vec<f64> {
    let weighted: Vec<f64> = row
        .iter()
        .enumerate()
        .map(|(t, a)| if set.contains(&t) { *a } else { alpha * a })
        .collect();
    let z: f64 = weighted.iter().sum();
    weighted.iter().map(|w| w / z).collect()
}

fn steering_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let (rows, n, d) = (rng.gen_range(1..5), rng.gen_range(1..13), rng.gen_range(1..6));
        let set = random_subset(&mut rng, n);
        let alpha = random_alpha(&mut rng);
        let a: Vec<Vec<f64>> = (0..rows).map(|_| random_row(&mut rng, n)).collect();
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut expected_w = Vec::new();
        for row in &a {
            let got = reweight_row(row, &set, alpha).map_err(|e| e.to_string())?;
            let want = brute_reweight(row, &set, alpha);
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
            worst_sum = worst_sum.max((got.iter().sum::<f64>() - 1.0).abs());
            expected_w.push(want);
        }
        let out = steered_head_output(&Matrix::from_rows(&a), &Matrix::from_rows(&v), &set, alpha)
            .map_err(|e| e.to_string())?;
        for (r, w) in expected_w.iter().enumerate() {
            for c in 0..d {
                let want: f64 = (0..n).map(|t| w[t] * v[t][c]).sum();
                worst = worst.max((out.row(r)[c] - want).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    ensure!(worst_sum <= 1e-9, "row sum off by {worst_sum:e}");
    within(elapsed, 10)?;
    Ok(format!("10000 instances, max deviation {worst:.1e}, max |sum-1| {worst_sum:.1e}, {elapsed:.2?}"))
}

// ----- 2. identity and concentration limits -------------------------------

fn steering_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_mass = 0.0f64;
    for _ in 0..1_000 {
        let n = rng.gen_range(1..33);
        let row = random_row(&mut rng, n);
        let set = random_subset(&mut rng, n);
        let same = reweight_row(&row, &set, 1.0).map_err(|e| e.to_string())?;
        ensure!(
            same.iter().zip(&row).all(|(a, b)| (a - b).abs() <= 1e-15),
            "alpha = 1 changed {row:?}"
        );
        let focused = reweight_row(&row, &set, 0.0).map_err(|e| e.to_string())?;
        let mass: f64 = set.iter().map(|&t| focused[t]).sum();
        worst_mass = worst_mass.max((mass - 1.0).abs());
        ensure!(
            focused.iter().enumerate().all(|(t, w)| set.contains(&t) || *w == 0.0),
            "alpha = 0 left mass outside the set"
        );
    }
    ensure!(worst_mass <= 1e-9, "mass on the set off by {worst_mass:e}");
    Ok(format!("1000 rows, alpha=1 identical, alpha=0 mass within {worst_mass:.1e}"))
}

// ----- 3. profiling recovers planted heads --------------------------------

fn toy_decoder(n_layers: usize, n_heads: usize, seed: u64) -> ToyDecoder {
    let vocab = ToyDecoder::build_vocab(&["int a = b + c ; return a ; assertEquals ( a , b ) ;"], 64);
    let cfg = DecoderConfig {
        n_layers,
        n_heads,
        model_dim: 4 * n_heads,
        ff_dim: 16,
        context: 64,
        max_vocab: 64,
    };
    ToyDecoder::new(cfg, vocab, seed).expect("valid decoder")
}

fn profiling_set(n: usize) -> ProfilingSet {
    ProfilingSet {
        items: (0..n)
            .map(|i| ProfilingItem {
                id: format!("item-{i}"),
                prompt: "int a = b + c ; return a ;".into(),
                highlighted: [1 + i % 3].into_iter().collect(),
                reference_test: "assertEquals ( a , b ) ;".into(),
            })
            .collect(),
    }
}

fn profiling_recovery() -> Outcome {
    let start = Instant::now();
    let model = toy_decoder(4, 4, 3);
    let set = profiling_set(4);
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let k = rng.gen_range(1..=6);
        let mut all = HeadSet::all(4, 4).heads().to_vec();
        all.shuffle(&mut rng);
        let planted: BTreeSet<HeadId> = all.into_iter().take(k).collect();
        let noise: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let scorer = |_: &ToyDecoder, h: HeadId, _: &ProfilingSet, _: f64| -> Result<f64, String> {
            let base = noise[(h.layer - 1) * 4 + (h.head - 1)];
            Ok(if planted.contains(&h) { base + 2.0 } else { base })
        };
        let report = profile_heads(&model, &set, 0.01, &scorer, k).map_err(|e| e.to_string())?;
        let got: BTreeSet<HeadId> = report.selected.heads().iter().copied().collect();
        ensure!(got == planted, "trial {trial}: selected {got:?}, planted {planted:?}");
    }
    // Equal scores: the lowest (layer, head) ids win, identically every time.
    let flat = |_: &ToyDecoder, _: HeadId, _: &ProfilingSet, _: f64| -> Result<f64, String> { Ok(0.5) };
    let first = profile_heads(&model, &set, 0.01, &flat, 5).map_err(|e| e.to_string())?;
    let expected: Vec<HeadId> = [(1, 1), (1, 2), (1, 3), (1, 4), (2, 1)]
        .iter()
        .map(|&(l, h)| HeadId::new(l, h))
        .collect();
    ensure!(first.selected.heads() == expected.as_slice(), "ties broke as {:?}", first.selected);
    for _ in 0..5 {
        let again = profile_heads(&model, &set, 0.01, &flat, 5).map_err(|e| e.to_string())?;
        ensure!(again == first, "tie-breaking is not stable");
    }
    let elapsed = start.elapsed();
    within(elapsed, 30)?;
    Ok(format!("100/100 planted subsets recovered, ties deterministic, {elapsed:.2?}"))
}

// ----- 4. analytic gradients against central differences ------------------

fn small_detector(seed: u64) -> DetectorModel {
    let cfg = EncoderConfig {
        embed_dim: 4,
        n_layers: 1,
        n_heads: 2,
        ff_dim: 6,
        max_len: 16,
        dropout: 0.0,
        max_vocab: 16,
    };
    let vocab = Vocab::from(["<unk>", "int", "x", "=", "a", "[", "]", ";"].map(String::from).to_vec());
    DetectorModel::new(cfg, vocab, seed)
}

fn numeric_objective(model: &DetectorModel, ids: &[usize], label: bool, r: &Matrix, beta: f64, which: Objective) -> f64 {
    let p = model.distribution(ids, None);
    let q = model.distribution(ids, Some(r));
    let y = if label { [0.0, 1.0] } else { [1.0, 0.0] };
    let ce = cross_entropy_loss(&p, &y);
    let kl = kl_consistency_loss(&p, &q);
    match which {
        Objective::CrossEntropy => ce,
        Objective::Consistency => kl,
        Objective::Total => total_loss(ce, kl, beta),
    }
}

fn gradient_checks() -> Outcome {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..3u64 {
        let mut model = small_detector(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(40 + seed);
        let ids: Vec<usize> = (0..rng.gen_range(3..8)).map(|_| rng.gen_range(0..8)).collect();
        let label = seed % 2 == 0;
        let r = Matrix::from_vec(ids.len(), 4, (0..ids.len() * 4).map(|_| rng.gen_range(-0.5..0.5)).collect());
        let beta = rng.gen_range(0.5..2.0);
        for which in [Objective::CrossEntropy, Objective::Consistency, Objective::Total] {
            let (value, grads) = model.objective(&ids, label, &r, beta, which);
            let numeric = numeric_objective(&model, &ids, label, &r, beta, which);
            ensure!((value - numeric).abs() <= 1e-10, "{which:?} value {value} vs {numeric}");
            for (pid, grad) in grads.iter().enumerate() {
                for i in 0..grad.data.len() {
                    let orig = model.params.get(pid).data[i];
                    model.params.get_mut(pid).data[i] = orig + H;
                    let up = numeric_objective(&model, &ids, label, &r, beta, which);
                    model.params.get_mut(pid).data[i] = orig - H;
                    let down = numeric_objective(&model, &ids, label, &r, beta, which);
                    model.params.get_mut(pid).data[i] = orig;
                    let fd = (up - down) / (2.0 * H);
                    let analytic = grad.data[i];
                    let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
                    if rel >= 1e-4 {
                        return Err(format!("{which:?} param {pid}[{i}]: analytic {analytic:e}, numeric {fd:e}"));
                    }
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} partials over cross-entropy, consistency and total, max relative error {worst:.1e}"))
}

// ----- 5. desk-scale learning ---------------------------------------------

fn desk_learning() -> Outcome {
    let start = Instant::now();
    let corpus = detector_corpus(&SynthConfig { samples: 200, seed: 1, ..SynthConfig::default() });
    let data: Vec<_> = corpus.iter().map(|s| (s.method.clone(), s.label)).collect();
    let cfg = TrainingConfig::default();
    let (_, det_report) = train_detector(&data, &cfg).map_err(|e| e.to_string())?;

    let locs: Vec<LocatorSample> = locator_corpus(&SynthConfig { samples: 200, seed: 2, ..SynthConfig::default() })
        .into_iter()
        .map(|s| LocatorSample { id: s.id, method: s.method, defect_lines: s.defect_lines })
        .collect();
    let (_, loc_report) = train_locator(&locs, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    ensure!(cfg.max_epochs <= 200, "epoch budget {}", cfg.max_epochs);
    ensure!(det_report.best_val_accuracy >= 0.95, "detection accuracy {}", det_report.best_val_accuracy);
    ensure!(loc_report.best_val_top1 >= 0.90, "top-1 localization {}", loc_report.best_val_top1);
    within(elapsed, 120)?;

    // Same seed, same parameters: repeated on a short budget.
    let short = TrainingConfig { max_epochs: 2, ..cfg.clone() };
    let a = train_detector(&data, &short).map_err(|e| e.to_string())?.0.checksum();
    let b = train_detector(&data, &short).map_err(|e| e.to_string())?.0.checksum();
    ensure!(a == b, "detector training is not deterministic");
    let a = train_locator(&locs, &short).map_err(|e| e.to_string())?.0.checksum();
    let b = train_locator(&locs, &short).map_err(|e| e.to_string())?.0.checksum();
    ensure!(a == b, "locator training is not deterministic");
    Ok(format!(
        "detection accuracy {:.3} ({} epochs), top-1 localization {:.3} ({} epochs), {elapsed:.2?}",
        det_report.best_val_accuracy,
        det_report.epochs.len(),
        loc_report.best_val_top1,
        loc_report.epochs.len()
    ))
}

// ----- 6. metric arithmetic -----------------------------------------------

fn metric_rows() -> Outcome {
    let mut got = Vec::new();
    for (p, r, want) in [(0.272, 0.502, 0.353), (0.160, 0.406, 0.230)] {
        let value = f1(p, r).ok_or("undefined F1")?;
        ensure!((value - want).abs() <= 0.001, "F1({p}, {r}) = {value}, expected {want}");
        got.push(format!("F1({p}, {r}) = {value:.4}"));
    }
    Ok(got.join(", "))
}

// ----- 7. verdict taxonomy ------------------------------------------------

fn verdict(defective: RunResult, fixed: RunResult) -> Verdict {
    Verdict {
        candidate_id: format!("{defective:?}-{fixed:?}"),
        defect_id: "d".into(),
        defective_result: defective,
        fixed_result: fixed,
        classification: classify(defective, fixed),
    }
}

fn verdict_taxonomy() -> Outcome {
    use Classification::*;
    use RunResult::*;
    for (d, f, want) in [(Fail, Pass, TP), (Fail, Fail, FP), (Pass, Pass, TN), (Pass, Fail, FN)] {
        ensure!(classify(d, f) == want, "({d:?}, {f:?}) classified {:?}", classify(d, f));
    }
    let all = [Pass, Fail, CompileError, Timeout];
    let mut invalid = 0;
    for d in all {
        for f in all {
            let broken = matches!(d, CompileError | Timeout) || matches!(f, CompileError | Timeout);
            ensure!((classify(d, f) == Invalid) == broken, "({d:?}, {f:?}) classified {:?}", classify(d, f));
            invalid += usize::from(broken);
        }
    }
    let mut verdicts = vec![verdict(Fail, Pass), verdict(Fail, Fail)];
    verdicts.extend([verdict(CompileError, Pass), verdict(Fail, Timeout), verdict(Timeout, CompileError)]);
    let (_, precision) = trigger_stats(&verdicts);
    ensure!(precision == Some(0.5), "precision {precision:?} counts invalid candidates");
    Ok(format!("4 pass/fail pairs match, {invalid}/16 pairs with a compile error or timeout are invalid, precision ignores them"))
}

// ----- 8. validator fixture and end-to-end run ----------------------------

fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

const TRIGGER: &str = "@Test
public void testLastOfThree() {
    Calc calc = new Calc(ArrayUtils.of(4, 5, 6));
    List<Integer> values = calc.toList();
    assertEquals(6, calc.last());
}";

const SPAN: &str = "@Test
public void testSpanOfCalc() {
    Calc calc = new Calc(new int[] {1, 2});
    Range range = new Range(calc.first(), 2);
    assertEquals(1, range.width());
}";

fn pipeline_config(out: &Path) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::load(&fixture_root().join("pipeline.toml")).map_err(|e| e.to_string())?;
    cfg.output_dir = out.to_path_buf();
    cfg.validation.runner.runner = env!("CARGO_BIN_EXE_steertest-stub-runner").into();
    Ok(cfg)
}

fn validator_fixture() -> Outcome {
    let project = fixture_root().join("mini-project");
    let mut vcfg = ValidationConfig::default();
    vcfg.runner.runner = env!("CARGO_BIN_EXE_steertest-stub-runner").into();
    let tests = [
        CandidateTest::new("trigger", TRIGGER).map_err(|e| e.to_string())?,
        CandidateTest::new("span", SPAN).map_err(|e| e.to_string())?,
    ];
    let out = validate_candidates(&tests, "calc-last", &project.join("defective"), &project.join("fixed"), &vcfg, None)
        .map_err(|e| e.to_string())?;
    let out: Vec<_> = out.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let trigger = &out[0];
    ensure!(trigger.plan.test_class == "com.example.calc.CalcTest", "injected into {}", trigger.plan.test_class);
    ensure!(
        trigger.plan.added_imports == ["import com.example.util.ArrayUtils;", "import java.util.List;"],
        "imports {:?}",
        trigger.plan.added_imports
    );
    ensure!(
        out[1].plan.added_imports == ["import com.example.geo.Range;"],
        "ambiguous Range resolved as {:?}",
        out[1].plan.added_imports
    );
    ensure!(trigger.verdict.classification == Classification::TP, "verdict {:?}", trigger.verdict);

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    let mut slowest = Duration::ZERO;
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let start = Instant::now();
        pipeline::run_pipeline(&pipeline_config(&dir)?).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        let verdicts: Vec<Verdict> = read_jsonl(&dir.join(files::VERDICTS)).map_err(|e| e.to_string())?;
        let candidates = std::fs::read(dir.join(files::CANDIDATES)).map_err(|e| e.to_string())?;
        runs.push((verdicts, candidates));
    }
    within(slowest, 60)?;
    ensure!(runs[0] == runs[1], "two runs with the same seed differ");
    let tps = runs[0].0.iter().filter(|v| v.classification == Classification::TP).count();
    ensure!(tps >= 1, "end-to-end run produced no TP verdict");
    Ok(format!(
        "CalcTest chosen, unique and prevalence imports resolved; pipeline: {tps} TP of {} candidates, reproducible, {slowest:.2?} per run",
        runs[0].0.len()
    ))
}

// ----- 9. constructed-weights decoder -------------------------------------

/// One layer, one head, one-hot token embeddings and value vectors, uniform
/// attention (zero query/key weights), no feed-forward contribution, and an
/// identity read-out, so the next-token argmax is the dominant attended token.
fn constructed_decoder() -> ToyDecoder {
    let vocab = Vocab::from(["<unk>", "<eos>", "a", "b", "c"].map(String::from).to_vec());
    let (v, d) = (5, 6);
    let cfg = DecoderConfig { n_layers: 1, n_heads: 1, model_dim: d, ff_dim: 2, context: 8, max_vocab: 8 };
    let mut m = ToyDecoder::new(cfg, vocab, 0).expect("valid decoder");
    let identity = |rows: usize, cols: usize, scale: f64| {
        let mut x = Matrix::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            x.data[i * cols + i] = scale;
        }
        x
    };
    *m.params.get_mut(m.tok_emb) = identity(v, d, 1.0);
    *m.params.get_mut(m.pos_emb) = Matrix::zeros(8, d);
    let b = m.blocks[0];
    *m.params.get_mut(b.wq) = Matrix::zeros(d, d);
    *m.params.get_mut(b.wk) = Matrix::zeros(d, d);
    // Layer norm maps e_i to c (e_i - 1/d); this map sends it back to e_i,
    // using the always-zero last coordinate to cancel the shift.
    let var = (1.0 / d as f64) * (1.0 - 1.0 / d as f64);
    let c = 1.0 / (var + 1e-5).sqrt();
    let mut wv = identity(d, d, 1.0 / c);
    for j in 0..d {
        wv.data[(d - 1) * d + j] -= 1.0 / c;
    }
    *m.params.get_mut(b.wv) = wv;
    *m.params.get_mut(b.wo) = identity(d, d, 10.0);
    *m.params.get_mut(b.w1) = Matrix::zeros(d, 2);
    *m.params.get_mut(b.w2) = Matrix::zeros(2, d);
    *m.params.get_mut(m.lm_head) = identity(d, v, 1.0);
    m
}

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |best, i| if xs[i] > xs[best] { i } else { best })
}

fn constructed_steering() -> Outcome {
    let m = constructed_decoder();
    let ids = [2usize, 3, 4, 3]; // a b c b
    let head = HeadSet::single(HeadId::new(1, 1));
    let plain = m.trace_last(&ids, &head, &SteeringSpec::new([], 1.0).unwrap()).map_err(|e| e.to_string())?;
    ensure!(argmax(&plain.logits) == 3, "unsteered argmax {}", argmax(&plain.logits));
    for j in 0..ids.len() {
        let spec = SteeringSpec::new([j], 0.0).map_err(|e| e.to_string())?;
        let trace = m.trace_last(&ids, &head, &spec).map_err(|e| e.to_string())?;
        let h = &trace.layers[0][0];
        let vj = h.values.row(j);
        for (c, &x) in vj.iter().enumerate() {
            let want = if c == ids[j] { 1.0 } else { 0.0 };
            ensure!((x - want).abs() <= 1e-9, "value row {j} is not one-hot: {vj:?}");
        }
        ensure!(h.output.as_slice() == vj, "steered output {:?} != V_{j} {vj:?}", h.output);
        ensure!(argmax(&trace.logits) == ids[j], "steering to {j} gave argmax {}", argmax(&trace.logits));
    }
    Ok("alpha=0 toward each position j: head output equals V_j exactly and the argmax follows token j".into())
}

// ----- 10. non-mutation ---------------------------------------------------

fn non_mutation() -> Outcome {
    let model = toy_decoder(2, 2, 11);
    let before = model.checksum();
    let set = profiling_set(3);
    let report = profile_heads(&model, &set, 0.01, &LikelihoodScorer, 2).map_err(|e| e.to_string())?;
    ensure!(model.checksum() == before, "profiling changed the parameters");
    let prompt = model.encode("int a = b + c ; return a ;");
    let spec = SteeringSpec::new([1, 3], 0.01).map_err(|e| e.to_string())?;
    let cfg = GenerationConfig { max_new_tokens: 12, ..GenerationConfig::default() };
    let out = generate_candidates(&model, &prompt, &report.selected, &spec, 6, 5, &cfg).map_err(|e| e.to_string())?;
    ensure!(out.len() == 6, "{} candidates", out.len());
    ensure!(model.checksum() == before, "generation changed the parameters");
    Ok(format!("checksum {}... unchanged by profiling and steered generation", &before[..12]))
}

fn main() {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().ok();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("reweighting matches a brute-force evaluator", steering_oracle),
        ("identity and concentration limits", steering_limits),
        ("profiling recovers planted heads", profiling_recovery),
        ("analytic gradients match central differences", gradient_checks),
        ("detector and locator learn the planted corpora", desk_learning),
        ("F1 arithmetic reproduces the reported rows", metric_rows),
        ("verdict taxonomy", verdict_taxonomy),
        ("validator fixture and end-to-end run", validator_fixture),
        ("constructed-weights steering", constructed_steering),
        ("models are not mutated", non_mutation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
