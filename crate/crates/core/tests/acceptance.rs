//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line on
//! stderr (bypassing the test harness capture) and then asserts.
//! Tests hold a global lock so the measured runtimes do not overlap.

mod common;

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use netsym::collapse::pairwise_mi;
use netsym::metrics::{
    accuracy, aupr, brier, ece, fpr_at_95_tpr, kendall_tau, kendall_tau_quadratic, ks_two_sample, mutual_information,
    pearson_rho, OodScoreSet, PredictionBatch, DEFAULT_ECE_BINS,
};
use netsym::minmass::{apply_minmass, mass_terms, minmass_objective, solve_minmass, solve_minmass_from, SolverConfig};
use netsym::mmd::{layerwise_permutation_test, mmd2, quantile, Estimator, KernelSpec, MmdConfig};
use netsym::symmetry::{
    apply_permutation, apply_scaling, apply_softmax_shift, canonicalize, random_symmetry, remove_permutations,
    verify_equivalence, CanonicalizeConfig, SortKey,
};
use netsym::training::{
    equivariance_check, gen_task, grid_2d, sgd_train, toy_ood_inputs, toy_spec, track_permutations, train_posterior_dataset,
    CheckpointDataset, Dataset, PermutationTracking, StepDecay, SyntheticTask, TrainConfig,
};
use netsym::{build_network, LayerParams, Network, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SCALING_TOL: f64 = 1e-9;
const PERMUTATION_TOL: f64 = 1e-10;
const IDEMPOTENCE_TOL: f64 = 1e-12;
const PRECOMPOSITION_TOL: f64 = 1e-9;
const EQUIVARIANCE_TOL: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;
const MULTISTART_TOL: f64 = 1e-4;
const GRID_MASS_TOL: f64 = 1e-3;
const MASS_DECREASE_MIN: usize = 95;
const ACCEPT_RATE_MIN: f64 = 0.99;
const RAW_KS_P_MIN: f64 = 0.05;
const SORTED_KS_P_MAX: f64 = 0.01;
const FUNCTIONAL_TOL: f64 = 1e-9;
const MMD_ZERO_TOL: f64 = 1e-12;
const TWO_POINT_MMD: f64 = 0.786939;
const TWO_POINT_TOL: f64 = 1e-6;
const NULL_PERMUTATIONS: usize = 200;
const KS_NULL_RATE: (f64, f64) = (0.02, 0.08);
const TAU_RUNS_MIN: usize = 45;
const COLLAPSE_TOL: f64 = 1e-9;

const TOY_COUNT: usize = 1000;

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

struct Criterion {
    id: &'static str,
    parts: Vec<(bool, String)>,
    start: Instant,
    budget: Duration,
}

impl Criterion {
    fn new(id: &'static str, budget_secs: u64) -> Self {
        Criterion {
            id,
            parts: Vec::new(),
            start: Instant::now(),
            budget: Duration::from_secs(budget_secs),
        }
    }

    fn part(&mut self, pass: bool, text: impl Into<String>) {
        self.parts.push((pass, text.into()));
    }

    fn finish(mut self, extra: Duration) {
        let elapsed = self.start.elapsed() + extra;
        self.part(
            elapsed < self.budget,
            format!("runtime {:.1}s < {}s", elapsed.as_secs_f64(), self.budget.as_secs()),
        );
        let pass = self.parts.iter().all(|(p, _)| *p);
        let detail: Vec<String> = self
            .parts
            .iter()
            .map(|(p, t)| if *p { t.clone() } else { format!("{t} [FAILED]") })
            .collect();
        let line = format!("criterion {}: {} | {}", self.id, if pass { "PASS" } else { "FAIL" }, detail.join("; "));
        let _ = writeln!(std::io::stderr(), "{line}");
        assert!(pass, "{line}");
    }
}

struct Toy {
    _dir: tempfile::TempDir,
    data: Dataset,
    dataset: CheckpointDataset,
    accepted: Vec<Network>,
    train_time: Duration,
}

/// The 1000-member toy posterior, trained once per test binary.
fn toy() -> &'static Toy {
    static TOY: OnceLock<Toy> = OnceLock::new();
    TOY.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let task = SyntheticTask::two_gaussians(200, 0);
        let data = gen_task(&task).unwrap();
        let dataset = train_posterior_dataset(
            &toy_spec(),
            serde_json::to_value(&task).unwrap(),
            &data,
            &TrainConfig::toy(0),
            TOY_COUNT,
            dir.path(),
        )
        .unwrap();
        let accepted = dataset.load_accepted().unwrap();
        Toy {
            _dir: dir,
            data,
            dataset,
            accepted,
            train_time: start.elapsed(),
        }
    })
}

fn max_param_diff(a: &Network, b: &Network) -> f64 {
    a.max_abs_param_diff(b).expect("same architecture")
}

#[test]
fn c1_symmetry_invariance() {
    let _g = serial();
    let mut c = Criterion::new("1 symmetry invariance", 30);
    let (mut worst_scale, mut worst_perm, mut worst_shift) = (0.0f64, 0.0f64, 0.0f64);
    let mut convs = 0;
    for n in 0..50u64 {
        let net = common::random_network(n);
        convs += usize::from(net.spec().input_image.is_some());
        for k in 0..20u64 {
            let (perm, scaling) = random_symmetry(net.spec(), 1000 * n + k).unwrap();
            let mut r = common::rng(7 + 1000 * n + k);
            let input_seed = r.random();
            let scaled = apply_scaling(&net, &scaling).unwrap();
            worst_scale = worst_scale.max(verify_equivalence(&net, &scaled, 128, input_seed, SCALING_TOL).unwrap().max_rel);
            let permuted = apply_permutation(&net, &perm).unwrap();
            worst_perm = worst_perm.max(verify_equivalence(&net, &permuted, 128, input_seed, PERMUTATION_TOL).unwrap().max_rel);
            let mut all = apply_permutation(&scaled, &perm).unwrap();
            if net.spec().output_activation == OutputActivation::Softmax {
                all = apply_softmax_shift(&all, r.random_range(-5.0..5.0)).unwrap();
            }
            worst_shift = worst_shift.max(verify_equivalence(&net, &all, 128, input_seed, SCALING_TOL).unwrap().max_rel);
        }
    }
    c.part(convs > 0 && convs < 50, format!("{convs}/50 conv nets"));
    c.part(worst_scale <= SCALING_TOL, format!("scaling max rel {worst_scale:.2e} <= {SCALING_TOL:e}"));
    c.part(worst_perm <= PERMUTATION_TOL, format!("permutation max rel {worst_perm:.2e} <= {PERMUTATION_TOL:e}"));
    c.part(worst_shift <= SCALING_TOL, format!("scale+perm+shift max rel {worst_shift:.2e} <= {SCALING_TOL:e}"));
    c.finish(Duration::ZERO);
}

#[test]
fn c2_canonicalization() {
    let _g = serial();
    let mut c = Criterion::new("2 canonicalization", 30);
    let cfg = CanonicalizeConfig::default();
    let (mut worst_idem, mut worst_pre) = (0.0f64, 0.0f64);
    for n in 0..50u64 {
        let net = common::random_network(100 + n);
        let (canon, _) = canonicalize(&net, &cfg).unwrap();
        let (again, _) = canonicalize(&canon, &cfg).unwrap();
        worst_idem = worst_idem.max(max_param_diff(&canon, &again));
        for k in 0..20u64 {
            let (perm, scaling) = random_symmetry(net.spec(), 5000 + 1000 * n + k).unwrap();
            let mut t = apply_permutation(&apply_scaling(&net, &scaling).unwrap(), &perm).unwrap();
            if net.spec().output_activation == OutputActivation::Softmax {
                t = apply_softmax_shift(&t, k as f64 - 10.0).unwrap();
            }
            let (tc, _) = canonicalize(&t, &cfg).unwrap();
            worst_pre = worst_pre.max(max_param_diff(&canon, &tc));
        }
    }
    c.part(worst_idem <= IDEMPOTENCE_TOL, format!("idempotence {worst_idem:.2e} <= {IDEMPOTENCE_TOL:e}"));
    c.part(worst_pre <= PRECOMPOSITION_TOL, format!("pre-composition {worst_pre:.2e} <= {PRECOMPOSITION_TOL:e}"));
    c.finish(Duration::ZERO);
}

#[test]
fn c3_sgd_permutation_equivariance() {
    let _g = serial();
    let mut c = Criterion::new("3 SGD permutation equivariance", 120);
    let mut worst = 0.0f64;
    let mut nontrivial = 0;
    for n in 0..20u64 {
        let mut r = common::rng(300 + n);
        let spec = common::random_spec(&mut r, true);
        let init = common::randomize_batchnorm(&build_network(&spec, n).unwrap(), &mut r);
        let data = common::random_dataset(&spec, 24, &mut r);
        let (perm, _) = random_symmetry(&spec, 900 + n).unwrap();
        nontrivial += usize::from(!perm.is_identity());
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 6,
            learning_rate: 0.05,
            weight_decay: if n % 2 == 0 { 1e-3 } else { 0.0 },
            momentum: if n % 3 == 0 { 0.9 } else { 0.0 },
            loss: common::loss_for(&spec),
            ..TrainConfig::toy(n)
        };
        let report = equivariance_check(&init, &data, &cfg, &perm).unwrap();
        worst = worst.max(report.max_weight_dev);
    }
    c.part(nontrivial >= 15, format!("{nontrivial}/20 non-identity permutations"));
    c.part(worst <= EQUIVARIANCE_TOL, format!("max weight deviation {worst:.2e} <= {EQUIVARIANCE_TOL:e}"));
    c.finish(Duration::ZERO);
}

fn random_log_scales(net: &Network, r: &mut ChaCha8Rng, half_width: f64) -> Vec<Vec<f64>> {
    let terms = mass_terms(net).unwrap();
    terms.layers[..terms.layers.len() - 1]
        .iter()
        .map(|m| (0..m.rows).map(|_| r.random_range(-half_width..half_width)).collect())
        .collect()
}

#[test]
fn c4_minmass() {
    let toy = toy();
    let _g = serial();
    let mut c = Criterion::new("4 min-mass", 120);

    let mut worst_fd = 0.0f64;
    for n in 0..50u64 {
        let mut r = common::rng(400 + n);
        let spec = common::random_spec(&mut r, false);
        let net = build_network(&spec, n).unwrap();
        let terms = mass_terms(&net).unwrap();
        let u = random_log_scales(&net, &mut r, 0.5);
        let (_, g) = minmass_objective(&terms, &u).unwrap();
        let mut err = 0.0f64;
        for l in 0..u.len() {
            for k in 0..u[l].len() {
                let mut up = u.clone();
                up[l][k] += FD_STEP;
                let mut down = u.clone();
                down[l][k] -= FD_STEP;
                let fd = (minmass_objective(&terms, &up).unwrap().0 - minmass_objective(&terms, &down).unwrap().0) / (2.0 * FD_STEP);
                err = err.max((fd - g[l][k]).abs());
            }
        }
        let scale = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_fd = worst_fd.max(err / scale);
    }
    c.part(worst_fd <= FD_REL_TOL, format!("(a) gradient rel err {worst_fd:.2e} <= {FD_REL_TOL:e}"));

    let cfg = SolverConfig::default();
    let mut worst_start = 0.0f64;
    let mut unconverged = 0;
    for n in 0..10u64 {
        let mut r = common::rng(450 + n);
        let spec = common::random_spec(&mut r, false);
        let net = build_network(&spec, n).unwrap();
        let base = solve_minmass(&net, &cfg).unwrap();
        unconverged += usize::from(!base.converged);
        for _ in 0..10 {
            let s = solve_minmass_from(&net, random_log_scales(&net, &mut r, 2.0), &cfg).unwrap();
            unconverged += usize::from(!s.converged);
            let d = s.log_scales.iter().flatten().zip(base.log_scales.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_start = worst_start.max(d);
        }
    }
    c.part(unconverged == 0, format!("(b) {unconverged} of 110 solves unconverged"));
    c.part(worst_start <= MULTISTART_TOL, format!("(b) 10-start spread {worst_start:.2e} <= {MULTISTART_TOL:e}"));

    let mut worst_grid = 0.0f64;
    let side = 400;
    let axis: Vec<f64> = (0..side).map(|i| -3.0 + 6.0 * i as f64 / (side - 1) as f64).collect();
    for s in 0..10u64 {
        let net = build_network(&toy_spec(), s).unwrap();
        let terms = mass_terms(&net).unwrap();
        let best = solve_minmass(&net, &cfg).unwrap();
        let mut grid_min = f64::INFINITY;
        for &a in &axis {
            for &b in &axis {
                grid_min = grid_min.min(minmass_objective(&terms, &[vec![a, b]]).unwrap().0);
            }
        }
        worst_grid = worst_grid.max((grid_min - best.mass_after).abs());
    }
    c.part(worst_grid <= GRID_MASS_TOL, format!("(c) grid oracle gap {worst_grid:.2e} <= {GRID_MASS_TOL:e}"));

    let mut decreased = 0;
    for s in 0..100u64 {
        let cfg = TrainConfig {
            weight_decay: 1e-4,
            ..TrainConfig::toy(s)
        };
        let trained = sgd_train(&build_network(&toy_spec(), s).unwrap(), &toy.data, &cfg).unwrap().network;
        if let Ok((_, report)) = apply_minmass(&trained, &SolverConfig::default()) {
            decreased += usize::from(report.solution.mass_after < report.solution.mass_before);
        }
    }
    c.part(decreased >= MASS_DECREASE_MIN, format!("(d) mass decreased on {decreased}/100 >= {MASS_DECREASE_MIN}"));
    c.finish(Duration::ZERO);
}

fn last_layer_pair(nets: &[Network]) -> (Vec<f64>, Vec<f64>) {
    nets.iter().map(|n| (n.layer(1).weight()[0], n.layer(1).weight()[1])).unzip()
}

#[test]
fn c5_toy_posterior() {
    let toy = toy();
    let _g = serial();
    let mut c = Criterion::new("5 toy posterior", 300);
    let rate = toy.dataset.acceptance_rate();
    c.part(rate >= ACCEPT_RATE_MIN, format!("(a) accepted {:.1}% >= {:.0}%", 100.0 * rate, 100.0 * ACCEPT_RATE_MIN));
    let (a, b) = last_layer_pair(&toy.accepted);
    let raw = ks_two_sample(&a, &b).unwrap();
    c.part(raw.p_value > RAW_KS_P_MIN, format!("(b) raw KS p {:.3} > {RAW_KS_P_MIN}", raw.p_value));
    let sorted: Vec<Network> = toy.accepted.iter().map(|n| remove_permutations(n, SortKey::FirstParam).unwrap().0).collect();
    let (a, b) = last_layer_pair(&sorted);
    let after = ks_two_sample(&a, &b).unwrap();
    c.part(after.p_value < SORTED_KS_P_MAX, format!("(c) sorted KS p {:.1e} < {SORTED_KS_P_MAX}", after.p_value));
    let mut worst = 0.0f64;
    for (i, net) in toy.accepted.iter().enumerate().take(50) {
        let (canon, _) = canonicalize(net, &CanonicalizeConfig::default()).unwrap();
        worst = worst.max(verify_equivalence(net, &canon, 128, i as u64, FUNCTIONAL_TOL).unwrap().max_rel);
    }
    c.part(worst <= FUNCTIONAL_TOL, format!("(d) canonical max rel {worst:.2e} <= {FUNCTIONAL_TOL:e}"));
    c.finish(toy.train_time);
}

fn shifted(net: &Network, by: f64) -> Network {
    net.map_layers(|layers| {
        for lp in layers {
            if let LayerParams::Weighted { weight, bias } = lp {
                weight.iter_mut().chain(bias.iter_mut().flatten()).for_each(|w| *w += by);
            }
        }
    })
    .unwrap()
}

#[test]
fn c6_mmd() {
    let toy = toy();
    let _g = serial();
    let mut c = Criterion::new("6 MMD", 180);
    let mut r = common::rng(6);
    let x: Vec<Vec<f64>> = (0..50).map(|_| vec![r.sample(StandardNormal), r.sample(StandardNormal)]).collect();
    let same = mmd2(&x, &x, &KernelSpec::gaussian(1.0), Estimator::Biased).unwrap();
    c.part(same.abs() <= MMD_ZERO_TOL, format!("(a) identical {same:.1e}"));
    let two = mmd2(&[vec![0.0]], &[vec![1.0]], &KernelSpec::gaussian(1.0), Estimator::Biased).unwrap();
    c.part((two - TWO_POINT_MMD).abs() <= TWO_POINT_TOL, format!("(a) two-point {two:.6}"));

    let cfg = MmdConfig::default();
    let first = &toy.accepted[..100];
    let second = &toy.accepted[100..200];
    let (same, null) = layerwise_permutation_test(first, second, &cfg, None, NULL_PERMUTATIONS, 1).unwrap();
    let q95 = quantile(&null, 0.95);
    c.part(same.weighted_median < q95, format!("(c) halves {:.2e} < q95 {q95:.2e}", same.weighted_median));
    let moved: Vec<Network> = second.iter().map(|n| shifted(n, 1.0)).collect();
    let (far, null) = layerwise_permutation_test(first, &moved, &cfg, None, NULL_PERMUTATIONS, 2).unwrap();
    let q99 = quantile(&null, 0.99);
    c.part(far.weighted_median > q99, format!("(c) +1 shift {:.2e} > q99 {q99:.2e}", far.weighted_median));

    let transformed: Vec<Network> = first
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let (perm, scaling) = random_symmetry(n.spec(), 600 + i as u64).unwrap();
            apply_permutation(&apply_scaling(n, &scaling).unwrap(), &perm).unwrap()
        })
        .collect();
    let (raw, null) = layerwise_permutation_test(first, &transformed, &cfg, None, NULL_PERMUTATIONS, 3).unwrap();
    let raw_q99 = quantile(&null, 0.99);
    c.part(raw.weighted_median > raw_q99, format!("(d) raw {:.2e} > q99 {raw_q99:.2e}", raw.weighted_median));
    let canon = CanonicalizeConfig::default();
    let (ns, null) = layerwise_permutation_test(first, &transformed, &cfg, Some(&canon), NULL_PERMUTATIONS, 4).unwrap();
    let ns_q95 = quantile(&null, 0.95);
    c.part(ns.weighted_median <= ns_q95, format!("(d) canonical {:.2e} <= q95 {ns_q95:.2e}", ns.weighted_median));
    c.finish(Duration::ZERO);
}

fn batch(rows: &[[f64; 2]], labels: Option<Vec<usize>>) -> PredictionBatch {
    PredictionBatch::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), labels).unwrap()
}

fn fpr95_oracle(pos: &[f64], neg: &[f64]) -> f64 {
    pos.iter()
        .chain(neg)
        .filter(|&&t| pos.iter().filter(|&&p| p >= t).count() as f64 >= 0.95 * pos.len() as f64)
        .map(|&t| neg.iter().filter(|&&n| n >= t).count() as f64 / neg.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn c7_metrics() {
    let _g = serial();
    let mut c = Criterion::new("7 metrics", 60);
    let mut ok = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, tol: f64| {
        if (got - want).abs() > tol {
            ok.push(format!("{name}: {got} != {want}"));
        }
    };
    let onehot = batch(&[[1.0, 0.0], [0.0, 1.0]], Some(vec![0, 1]));
    let wrong = batch(&[[1.0, 0.0], [0.0, 1.0]], Some(vec![1, 0]));
    check("acc perfect", accuracy(&onehot).unwrap(), 1.0, 0.0);
    check("acc wrong", accuracy(&wrong).unwrap(), 0.0, 0.0);
    let three = batch(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]], Some(vec![0, 1, 0, 1]));
    check("acc 3/4", accuracy(&three).unwrap(), 0.75, 0.0);
    check("brier perfect", brier(&onehot).unwrap(), 0.0, 0.0);
    check("brier uniform", brier(&batch(&[[0.5, 0.5]], Some(vec![1]))).unwrap(), 0.5, 0.0);
    check("brier confident wrong", brier(&batch(&[[1.0, 0.0]], Some(vec![1]))).unwrap(), 2.0, 0.0);
    check("ece perfect", ece(&onehot, DEFAULT_ECE_BINS).unwrap(), 0.0, 0.0);
    check("ece half", ece(&batch(&[[1.0, 0.0], [1.0, 0.0]], Some(vec![0, 1])), DEFAULT_ECE_BINS).unwrap(), 0.5, 0.0);
    let calibrated = batch(&[[0.8, 0.2]; 10], Some(vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1]));
    check("ece calibrated", ece(&calibrated, DEFAULT_ECE_BINS).unwrap(), 0.0, 1e-12);

    let perfect = OodScoreSet::from_split(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
    check("aupr perfect", aupr(&perfect).unwrap(), 1.0, 0.0);
    check("aupr 5/6", aupr(&OodScoreSet::new(vec![3.0, 1.0, 2.0], vec![true, true, false]).unwrap()).unwrap(), 5.0 / 6.0, 1e-12);
    let mut r = common::rng(7);
    let scores: Vec<f64> = (0..10_000).map(|_| r.random()).collect();
    let labels: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
    check("aupr random", aupr(&OodScoreSet::new(scores, labels).unwrap()).unwrap(), 0.5, 0.05);
    check("fpr95 perfect", fpr_at_95_tpr(&perfect).unwrap(), 0.0, 0.0);
    check("fpr95 constant", fpr_at_95_tpr(&OodScoreSet::from_split(&[1.0; 4], &[1.0; 4]).unwrap()).unwrap(), 1.0, 0.0);
    let pos: Vec<f64> = (0..20).map(|i| 100.0 - i as f64).collect();
    let mut neg: Vec<f64> = (0..19).map(|i| i as f64).collect();
    neg.push(82.5);
    let got = fpr_at_95_tpr(&OodScoreSet::from_split(&neg, &pos).unwrap()).unwrap();
    check("fpr95 20x20", got, fpr95_oracle(&pos, &neg), 0.0);

    let a = batch(&[[1.0, 0.0]], None);
    let b = batch(&[[0.0, 1.0]], None);
    check("mi identical", mutual_information(&[a.clone(), a.clone()]).unwrap().mean, 0.0, 0.0);
    check("mi opposite", mutual_information(&[a.clone(), b]).unwrap().mean, std::f64::consts::LN_2, 1e-12);
    check("mi single", mutual_information(&[a]).unwrap().mean, 0.0, 0.0);

    check("tau identical", kendall_tau(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 1.0, 0.0);
    check("tau reversed", kendall_tau(&[1, 2, 3, 4], &[4, 3, 2, 1]).unwrap(), -1.0, 0.0);
    check("tau one swap", kendall_tau(&[1, 2, 3, 4], &[1, 3, 2, 4]).unwrap(), 2.0 / 3.0, 1e-12);
    let mut worst_tau = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(2..60);
        let x: Vec<u8> = (0..n).map(|_| r.random_range(0..6)).collect();
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..6)).collect();
        if let (Ok(fast), Ok(slow)) = (kendall_tau(&x, &y), kendall_tau_quadratic(&x, &y)) {
            worst_tau = worst_tau.max((fast - slow).abs());
        } else {
            assert_eq!(kendall_tau(&x, &y).is_ok(), kendall_tau_quadratic(&x, &y).is_ok());
        }
    }
    check("tau fast vs oracle", worst_tau, 0.0, 1e-12);

    let same = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    check("ks same D", same.statistic, 0.0, 0.0);
    check("ks same p", same.p_value, 1.0, 0.0);
    check("ks disjoint", ks_two_sample(&[0.1, 0.5, 0.9], &[10.2, 10.7]).unwrap().statistic, 1.0, 0.0);
    let mut rejections = 0;
    for seed in 0..200u64 {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..500).map(|_| g.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..500).map(|_| g.sample(StandardNormal)).collect();
        rejections += usize::from(ks_two_sample(&x, &y).unwrap().p_value < 0.05);
    }
    let rate = rejections as f64 / 200.0;

    check("pearson affine", pearson_rho(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap().0, 1.0, 1e-12);
    check("pearson negated", pearson_rho(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap().0, -1.0, 1e-12);
    check("pearson hand", pearson_rho(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap().0, 0.5, 1e-12);

    c.part(ok.is_empty(), if ok.is_empty() { "all worked examples hold".to_string() } else { ok.join(", ") });
    c.part(worst_tau <= 1e-12, format!("Kendall fast = quadratic on 1000 pairs (max diff {worst_tau:.1e})"));
    c.part(
        (KS_NULL_RATE.0..=KS_NULL_RATE.1).contains(&rate),
        format!("KS null rejection rate {rate:.3} in [{}, {}]", KS_NULL_RATE.0, KS_NULL_RATE.1),
    );
    c.finish(Duration::ZERO);
}

#[test]
fn c8_permutation_tracking() {
    let toy = toy();
    let _g = serial();
    let mut c = Criterion::new("8 permutation tracking", 180);
    let mut good = 0;
    for s in 0..50u64 {
        let cfg = TrainConfig {
            lr_decay: Some(StepDecay {
                every_epochs: 3,
                divisor: 2.0,
            }),
            permutation_tracking: PermutationTracking::PerStep(SortKey::FirstParam),
            ..TrainConfig::toy(s)
        };
        let trace = sgd_train(&build_network(&toy_spec(), s).unwrap(), &toy.data, &cfg).unwrap();
        let tau = track_permutations(&trace).unwrap();
        let last = tau.epochs() - 1;
        if let (Some(first), Some(final_)) = (tau.epoch_mean(0), tau.epoch_mean(last)) {
            good += usize::from(final_ >= first);
        }
    }
    c.part(good >= TAU_RUNS_MIN, format!("final-epoch tau >= first-epoch tau in {good}/50 >= {TAU_RUNS_MIN}"));
    c.finish(Duration::ZERO);
}

#[test]
fn c9_collapse() {
    let toy = toy();
    let _g = serial();
    let mut c = Criterion::new("9 collapse", 60);
    let id = grid_2d(-4.0, 4.0, 20);
    let ood = toy_ood_inputs(&id);
    let net = &toy.accepted[0];
    let twin = pairwise_mi(&[net.clone(), net.clone()], &id, &ood, 1, 0).unwrap();
    let zero = twin.pairs[0].id_mi == 0.0 && twin.pairs[0].ood_mi == 0.0;
    c.part(zero, format!("identical pair MI {} / {}", twin.pairs[0].id_mi, twin.pairs[0].ood_mi));
    let mut worst = 0.0f64;
    for n in toy.accepted.iter().take(20) {
        let (canon, _) = canonicalize(n, &CanonicalizeConfig::default()).unwrap();
        let p = &pairwise_mi(&[n.clone(), canon], &id, &ood, 1, 0).unwrap().pairs[0];
        worst = worst.max(p.id_mi).max(p.ood_mi);
    }
    c.part(worst <= COLLAPSE_TOL, format!("canonicalized pair MI {worst:.1e} <= {COLLAPSE_TOL:e}"));
    let members = &toy.accepted[..30];
    let a = pairwise_mi(members, &id, &ood, 100, 9).unwrap();
    let b = pairwise_mi(members, &id, &ood, 100, 9).unwrap();
    c.part(a == b, "report identical for a repeated seed");
    c.finish(Duration::ZERO);
}
