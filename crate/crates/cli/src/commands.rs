use std::fs;
use std::io::Write;
use std::path::Path;

use netsym::marginals::{marginals, MarginalSelection, MarginalsReport};
use netsym::metrics::{summarize, PredictionBatch};
use netsym::minmass::{apply_minmass, SolverConfig};
use netsym::mmd::{layerwise_permutation_test, layerwise_posterior_mmd, quantile, Estimator, MmdConfig};
use netsym::symmetry::{canonicalize, count_symmetries, random_symmetry, verify_equivalence, CanonicalizeConfig, SortKey};
use netsym::training::{
    equivariance_check, gen_task, grid_2d, sgd_train, toy_ood_inputs, toy_spec, track_permutations, train_posterior_dataset,
    CheckpointDataset, Loss, PermutationTracking, StepDecay, SyntheticTask, TaskKind, TrainConfig,
};
use netsym::{build_network, load_checkpoint, save_checkpoint, Error, Network, PermutationSet};
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io::*;
use crate::stamp::Stamp;

pub fn train_config(t: &TrainingFlags, seed: u64) -> CliResult<TrainConfig> {
    let loss: Loss = t.loss.parse().map_err(usage)?;
    Ok(TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch,
        learning_rate: t.lr,
        lr_decay: t.lr_decay_every.map(|every_epochs| StepDecay {
            every_epochs,
            divisor: t.lr_decay_divisor,
        }),
        weight_decay: t.weight_decay,
        momentum: t.momentum,
        loss,
        seed,
        loss_threshold: t.threshold,
        permutation_tracking: PermutationTracking::Off,
    })
}

fn parse_rows<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<Vec<T>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<T>().map_err(|_| usage(format!("bad {what} entry {v:?}"))))
                .collect()
        })
        .collect()
}

pub fn gen_data(a: &GenDataArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let body = match a.task {
        TaskName::TwoGaussians | TaskName::KGaussians => {
            let mut task = SyntheticTask::two_gaussians(a.n, seed);
            task.separability_check = !a.no_separability_check;
            if let Some(m) = &a.means {
                task.means = parse_rows(m, "mean")?;
            }
            if a.task == TaskName::KGaussians {
                task.kind = TaskKind::KGaussians;
                if a.means.is_none() {
                    return Err(usage("k-gaussians needs --means"));
                }
            }
            let data = gen_task(&task)?;
            let mut v = serde_json::to_value(&data)?;
            v["task"] = serde_json::to_value(&task)?;
            v
        }
        TaskName::Grid | TaskName::GridOod => {
            if a.side == 0 || !(a.hi > a.lo) {
                return Err(usage("grid needs --side >= 1 and --hi > --lo"));
            }
            let mut inputs = grid_2d(a.lo, a.hi, a.side);
            if a.task == TaskName::GridOod {
                inputs = toy_ood_inputs(&inputs);
            }
            json!({ "input_dim": 2, "inputs": inputs, "task": { "kind": format!("{:?}", a.task), "lo": a.lo, "hi": a.hi, "side": a.side } })
        }
    };
    write_json(&a.out, &body, stamp)
}

pub fn train(a: &TrainArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let spec = read_spec(&a.spec)?;
    let data = read_dataset(&a.data)?;
    let cfg = train_config(&a.training, seed)?;
    let trace = sgd_train(&build_network(&spec, seed)?, &data, &cfg)?;
    ensure_parent(&a.out)?;
    save_checkpoint(&trace.network, &a.out)?;
    let body = json!({
        "checkpoint": a.out,
        "final_loss": trace.final_loss,
        "accepted": trace.final_loss <= cfg.loss_threshold,
        "steps": trace.losses.len(),
        "config": cfg,
    });
    write_json(&sidecar(&a.out), &body, stamp)
}

pub fn train_ensemble(a: &TrainEnsembleArgs, seed: u64, stamp: &Stamp) -> CliResult<CheckpointDataset> {
    let spec = read_spec(&a.spec)?;
    let data = read_dataset(&a.data)?;
    let cfg = train_config(&a.training, seed)?;
    let ds = train_posterior_dataset(&spec, read_task(&a.data)?, &data, &cfg, a.count, &a.out)?;
    let failed = ds.manifest.entries.iter().filter(|e| e.error.is_some()).count();
    let body = json!({
        "count": a.count,
        "accepted": ds.accepted().count(),
        "acceptance_rate": ds.acceptance_rate(),
        "failed": failed,
    });
    write_json(&a.out.join("stamp.json"), &body, stamp)?;
    Ok(ds)
}

pub fn canonicalize_cmd(a: &CanonicalizeArgs, stamp: &Stamp) -> CliResult<()> {
    let key: SortKey = a.key.parse().map_err(usage)?;
    let net = load_checkpoint(&a.checkpoint)?;
    let cfg = CanonicalizeConfig {
        key,
        target_norm: a.target_norm,
        include_bias_in_norm: a.include_bias,
        skip_scaling: a.skip_scaling,
        skip_permutation: a.skip_permutation,
        skip_shift: a.skip_shift,
        ..CanonicalizeConfig::default()
    };
    let (canon, record) = canonicalize(&net, &cfg)?;
    ensure_parent(&a.out)?;
    save_checkpoint(&canon, &a.out)?;
    write_json(&sidecar(&a.out), &json!({ "record": record }), stamp)
}

fn emit(out: Option<&Path>, body: &serde_json::Value, stamp: &Stamp) -> CliResult<()> {
    match out {
        Some(p) => write_json(p, body, stamp),
        None => {
            let mut v = body.clone();
            v["stamp"] = serde_json::to_value(stamp)?;
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", serde_json::to_string_pretty(&v)?) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

pub fn verify(a: &VerifyArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let (x, y) = (load_checkpoint(&a.a)?, load_checkpoint(&a.b)?);
    let report = verify_equivalence(&x, &y, a.inputs, seed, a.tol)?;
    emit(a.out.as_deref(), &serde_json::to_value(&report)?, stamp)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("relative deviation {} exceeds {}", report.max_rel, report.tol)))
    }
}

pub fn count(a: &CountArgs, stamp: &Stamp) -> CliResult<()> {
    let spec = read_spec(&a.spec)?;
    let c = count_symmetries(&spec)?;
    emit(a.out.as_deref(), &serde_json::to_value(&c)?, stamp)
}

pub fn minmass(a: &MinmassArgs, stamp: &Stamp) -> CliResult<()> {
    let net = load_checkpoint(&a.checkpoint)?;
    let cfg = SolverConfig {
        tol: a.tol,
        max_iters: a.max_iters,
        ..SolverConfig::default()
    };
    let (scaled, report) = apply_minmass(&net, &cfg)?;
    if let Some(p) = &a.out_checkpoint {
        ensure_parent(p)?;
        save_checkpoint(&scaled, p)?;
    }
    write_json(&a.out, &report, stamp)
}

fn load_dataset_dir(dir: &Path, include_rejected: bool) -> CliResult<Vec<Network>> {
    let ds = CheckpointDataset::open(dir)?;
    if include_rejected {
        Ok(ds
            .manifest
            .entries
            .iter()
            .filter(|e| e.error.is_none())
            .map(|e| load_checkpoint(dir.join(&e.file)))
            .collect::<netsym::Result<_>>()?)
    } else {
        Ok(ds.load_accepted()?)
    }
}

pub fn mmd(a: &MmdArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let estimator: Estimator = a.estimator.parse().map_err(usage)?;
    let xa = load_dataset_dir(&a.a, false)?;
    let xb = load_dataset_dir(&a.b, false)?;
    let cfg = MmdConfig {
        estimator,
        seed,
        ..MmdConfig::default()
    };
    let canon = CanonicalizeConfig::default();
    let canon = a.canonicalize.then_some(&canon);
    let mut body = if a.permutations > 0 {
        let (report, null) = layerwise_permutation_test(&xa, &xb, &cfg, canon, a.permutations, seed)?;
        let exceed = null.iter().filter(|&&v| v >= report.weighted_median).count();
        let mut v = serde_json::to_value(&report)?;
        v["null"] = json!({
            "replicates": a.permutations,
            "q95": quantile(&null, 0.95),
            "q99": quantile(&null, 0.99),
            "p_value": (exceed + 1) as f64 / (null.len() + 1) as f64,
        });
        v
    } else {
        serde_json::to_value(layerwise_posterior_mmd(&xa, &xb, &cfg, canon)?)?
    };
    body["statistic"] = json!("mmd2; root values reported per layer as root_*");
    write_json(&a.out, &body, stamp)
}

pub fn metrics(a: &MetricsArgs, stamp: &Stamp) -> CliResult<()> {
    let labels = read_labels(&a.labels)?;
    let id = a
        .preds
        .iter()
        .map(|p| Ok(PredictionBatch::from_rows(&read_float_rows(p)?, Some(labels.clone()))?))
        .collect::<CliResult<Vec<_>>>()?;
    let ood = a
        .ood_preds
        .iter()
        .map(|p| Ok(PredictionBatch::from_rows(&read_float_rows(p)?, None)?))
        .collect::<CliResult<Vec<_>>>()?;
    let summary = summarize(&id, (!ood.is_empty()).then_some(ood.as_slice()))?;
    write_json(&a.out, &summary, stamp)
}

pub fn collapse(a: &CollapseArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let nets = load_dataset_dir(&a.checkpoints, false)?;
    let id = read_inputs(&a.id)?;
    let ood = read_inputs(&a.ood)?;
    let report = netsym::collapse::pairwise_mi(&nets, &id, &ood, a.pairs, seed)?;
    ensure_parent(&a.out)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["i", "j", "id_mi", "ood_mi"])?;
    for p in &report.pairs {
        w.write_record([p.i.to_string(), p.j.to_string(), p.id_mi.to_string(), p.ood_mi.to_string()])?;
    }
    w.flush()?;
    let body = json!({
        "pairs": report.pairs.len(),
        "id_mean": report.id_mean,
        "ood_mean": report.ood_mean,
        "id_var": report.id_var,
        "ood_var": report.ood_var,
        "rho": report.rho,
        "p_value": report.p_value,
    });
    write_json(&with_suffix(&a.out, ".summary.json"), &body, stamp)
}

pub fn track(a: &TrackArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let key: SortKey = a.key.parse().map_err(usage)?;
    let spec = read_spec(&a.spec)?;
    let data = read_dataset(&a.data)?;
    let cfg = TrainConfig {
        permutation_tracking: PermutationTracking::PerStep(key),
        ..train_config(&a.training, seed)?
    };
    let trace = sgd_train(&build_network(&spec, seed)?, &data, &cfg)?;
    let tau = track_permutations(&trace)?;
    ensure_parent(&a.out)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    let mut header = vec!["step".to_string(), "epoch".into(), "mean_tau".into()];
    header.extend(tau.interfaces.iter().map(|k| format!("tau_interface_{k}")));
    w.write_record(&header)?;
    for (s, m) in tau.mean.iter().enumerate() {
        // Transition s ends at step s + 1.
        let mut row = vec![(s + 1).to_string(), ((s + 1) / tau.steps_per_epoch).to_string(), m.to_string()];
        row.extend(tau.per_interface.iter().map(|v| v[s].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    let epoch_means: Vec<Option<f64>> = (0..tau.epochs()).map(|e| tau.epoch_mean(e)).collect();
    write_json(&sidecar(&a.out), &json!({ "epoch_mean_tau": epoch_means, "final_loss": trace.final_loss }), stamp)
}

pub fn equivariance(a: &EquivarianceArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    let spec = read_spec(&a.spec)?;
    let data = read_dataset(&a.data)?;
    let perm = match &a.perm {
        Some(s) => PermutationSet { perms: parse_rows(s, "permutation")? },
        None => random_symmetry(&spec, seed)?.0,
    };
    let init = build_network(&spec, seed)?;
    let report = equivariance_check(&init, &data, &train_config(&a.training, seed)?, &perm)?;
    let mut body = serde_json::to_value(&report)?;
    body["permutation"] = serde_json::to_value(&perm)?;
    emit(a.out.as_deref(), &body, stamp)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("weight deviation {} exceeds {}", report.max_weight_dev, report.tol)))
    }
}

pub fn write_marginals(report: &MarginalsReport, out: &Path, stamp: &Stamp) -> CliResult<()> {
    fs::create_dir_all(out)?;
    let mut values = csv::Writer::from_path(out.join("values.csv"))?;
    values.write_record(["variant", "coordinate", "checkpoint", "value"])?;
    let mut hist = csv::Writer::from_path(out.join("histograms.csv"))?;
    hist.write_record(["variant", "coordinate", "bin", "lo", "hi", "count"])?;
    let mut ks = csv::Writer::from_path(out.join("ks.csv"))?;
    ks.write_record(["variant", "a", "b", "statistic", "p_value"])?;
    for v in &report.variants {
        let name = v.variant.name();
        for c in &v.coordinates {
            for (n, x) in c.values.iter().enumerate() {
                values.write_record([name, &c.name, &n.to_string(), &x.to_string()])?;
            }
            let h = &c.histogram;
            let width = (h.hi - h.lo) / h.counts.len() as f64;
            for (b, count) in h.counts.iter().enumerate() {
                let lo = h.lo + b as f64 * width;
                hist.write_record([name, &c.name, &b.to_string(), &lo.to_string(), &(lo + width).to_string(), &count.to_string()])?;
            }
        }
        for p in &v.ks {
            ks.write_record([name, &p.a, &p.b, &p.statistic.to_string(), &p.p_value.to_string()])?;
        }
    }
    values.flush()?;
    hist.flush()?;
    ks.flush()?;
    let summary: Vec<_> = report
        .variants
        .iter()
        .map(|v| json!({ "variant": v.variant.name(), "min_ks_p_value": v.ks.iter().map(|p| p.p_value).fold(f64::INFINITY, f64::min) }))
        .collect();
    write_json(&out.join("stamp.json"), &json!({ "selection": report.selection, "target_norm": report.target_norm, "variants": summary }), stamp)
}

pub fn marginals_cmd(a: &MarginalsArgs, stamp: &Stamp) -> CliResult<()> {
    let nets = load_dataset_dir(&a.checkpoints, a.all)?;
    let sel = MarginalSelection {
        layer: a.layer,
        tensor: a.tensor.clone(),
        coords: (!a.coords.is_empty()).then(|| a.coords.clone()),
    };
    let report = marginals(&nets, &sel, a.bins, a.norm)?;
    write_marginals(&report, &a.out, stamp)
}

#[derive(serde::Serialize)]
struct StageStatus {
    stage: &'static str,
    ok: bool,
    error: Option<String>,
}

/// Toy experiment: data, ensemble, marginals, symmetry count, min-mass.
/// Stages after a failure are skipped; finished stages stay on disk.
pub fn pipeline_toy(a: &PipelineArgs, seed: u64, stamp: &Stamp) -> CliResult<()> {
    fs::create_dir_all(&a.out)?;
    let out = &a.out;
    let mut stages: Vec<StageStatus> = Vec::new();
    let mut first_error: Option<CliError> = None;
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> CliResult<()>| {
        if first_error.is_some() {
            stages.push(StageStatus {
                stage: name,
                ok: false,
                error: Some("skipped".into()),
            });
            return;
        }
        let r = f();
        stages.push(StageStatus {
            stage: name,
            ok: r.is_ok(),
            error: r.as_ref().err().map(|e| e.to_string()),
        });
        if let Err(e) = r {
            log::error!("stage {name} failed: {e}");
            first_error = Some(e);
        }
    };

    let data_path = out.join("data.json");
    let spec_path = out.join("spec.json");
    let ens_dir = out.join("ensemble");
    let training = TrainingFlags {
        epochs: 10,
        lr: 2.0,
        batch: 10,
        loss: "bce".into(),
        weight_decay: 0.0,
        momentum: 0.0,
        lr_decay_every: None,
        lr_decay_divisor: 10.0,
        threshold: 0.1,
    };
    run("gen-data", &mut || {
        fs::write(&spec_path, toy_spec().to_json())?;
        gen_data(
            &GenDataArgs {
                task: TaskName::TwoGaussians,
                n: 200,
                means: None,
                no_separability_check: false,
                side: 0,
                lo: 0.0,
                hi: 0.0,
                out: data_path.clone(),
            },
            seed,
            &stamp.stage("gen-data"),
        )
    });
    let ens_args = TrainEnsembleArgs {
        spec: spec_path.clone(),
        data: data_path.clone(),
        count: a.count,
        training,
        out: ens_dir.clone(),
    };
    run("train-ensemble", &mut || train_ensemble(&ens_args, seed, &stamp.stage("train-ensemble")).map(|_| ()));
    run("marginals", &mut || {
        marginals_cmd(
            &MarginalsArgs {
                checkpoints: ens_dir.clone(),
                layer: 1,
                tensor: "weight".into(),
                coords: Vec::new(),
                bins: 30,
                norm: 3.0,
                all: false,
                out: out.join("marginals"),
            },
            &stamp.stage("marginals"),
        )
    });
    run("count-symmetries", &mut || {
        count(
            &CountArgs {
                spec: spec_path.clone(),
                out: Some(out.join("symmetries.json")),
            },
            &stamp.stage("count-symmetries"),
        )
    });
    run("minmass", &mut || {
        let ds = CheckpointDataset::open(&ens_dir)?;
        let path = out.join("minmass.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["file", "mass_before", "mass_after", "iterations", "converged"])?;
        let (mut decreased, mut total) = (0usize, 0usize);
        for e in ds.accepted() {
            let net = load_checkpoint(ens_dir.join(&e.file))?;
            let r = match apply_minmass(&net, &SolverConfig::default()) {
                Ok((_, r)) => r,
                Err(err @ Error::Degenerate { .. }) => {
                    log::warn!("{}: {err}", e.file);
                    continue;
                }
                Err(err) => return Err(err.into()),
            };
            let s = &r.solution;
            total += 1;
            decreased += usize::from(s.mass_after < s.mass_before);
            w.write_record([
                e.file.clone(),
                s.mass_before.to_string(),
                s.mass_after.to_string(),
                s.iterations.to_string(),
                s.converged.to_string(),
            ])?;
        }
        w.flush()?;
        write_json(
            &out.join("minmass.json"),
            &json!({ "solved": total, "mass_decreased": decreased }),
            &stamp.stage("minmass"),
        )
    });
    write_json(&out.join("pipeline.json"), &json!({ "stages": stages }), stamp)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
