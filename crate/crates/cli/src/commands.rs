use std::fs;
use std::path::Path;

use dynenvwalk_core::clt_harness::{
    self, annealed_ensemble, axis_directions, calibrate, delta_m, functional_checks, intersection_diagnostic,
    ks_rows, quenched_variance_curve, trend_test, CoinSharing, Functional,
};
use dynenvwalk_core::estimators::estimate_all;
use dynenvwalk_core::model::{find_constants as solve_constants, gamma_exponent, quenched_condition, validate_assumptions};
use dynenvwalk_core::regeneration::{
    read_blocks_csv, tau_tail_stats, write_blocks_csv, write_tau_samples_csv, RenewalBlock, MIN_TAU_SAMPLES,
};
use dynenvwalk_core::walk::{run_walk, Mode, WalkRun};
use dynenvwalk_core::Error;
use rayon::prelude::*;
use serde_json::json;

use crate::output::{io_err, load_model, print_json, require_valid, CliError, OutDir};
use crate::{
    AnnealedArgs, ConditionArgs, ConstantsArgs, EstimateArgs, FunctionalArg, ModeArg, ModelArgs, QuenchedArgs,
    SimulateArgs,
};

/// Tail fit window for `tau` survival curves.
const TAU_FIT_RANGE: (u64, u64) = (10, 1000);
/// Walks sharing the calibration budget.
const CALIBRATION_WALKS: u64 = 64;

fn gamma_of(spec: &dynenvwalk_core::model::ModelSpec) -> Option<f64> {
    gamma_exponent(spec.kappa(), spec.epsilon()).ok()
}

pub fn validate(model: &ModelArgs, out: Option<&Path>, threads: usize) -> Result<(), CliError> {
    let m = load_model(model)?;
    let report = validate_assumptions(&m.spec);
    let failures = report.failures();
    let body = json!({
        "model": m.source,
        "dimension": m.spec.dimension(),
        "kappa": m.spec.kappa(),
        "epsilon": m.spec.epsilon(),
        "gamma": gamma_of(&m.spec),
        "report": report,
        "failures": failures,
    });
    print_json(&body);
    if let Some(dir) = out {
        let mut o = OutDir::create(dir)?;
        o.write_json("validation.json", &body)?;
        o.finish("validate", model, None, Some(&m), threads)?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Domain {
            kind: "assumption_failed",
            message: format!("failed: {}", failures.join(", ")),
        })
    }
}

pub fn simulate(a: &SimulateArgs, threads: usize) -> Result<(), CliError> {
    let m = load_model(&a.model)?;
    require_valid(&m)?;
    if a.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    if a.log_stride == Some(0) {
        return Err(CliError::Usage("--log-stride must be at least 1".into()));
    }
    let mode = match a.mode {
        ModeArg::AnnealedLazy => Mode::AnnealedLazy,
        ModeArg::QuenchedShared => Mode::QuenchedShared,
    };
    let d = m.spec.dimension();
    let runs: Vec<WalkRun> = (0..a.replicas)
        .into_par_iter()
        .map(|r| run_walk(&m.spec, a.seed, r, a.steps, mode, a.log_stride))
        .collect::<Result<_, Error>>()?;

    let mut o = OutDir::create(&a.out)?;
    let blocks: Vec<Vec<RenewalBlock>> = runs.iter().map(|r| r.blocks()).collect();
    let tagged: Vec<(u64, &[RenewalBlock])> = blocks.iter().enumerate().map(|(i, b)| (i as u64, b.as_slice())).collect();
    o.write_with("blocks.csv", |w| Ok(write_blocks_csv(w, &tagged, d)?))?;
    let tau1: Vec<(u64, u64)> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.taus.first().map(|t| (i as u64, *t)))
        .collect();
    o.write_with("tau_samples.csv", |w| Ok(write_tau_samples_csv(w, &tau1)?))?;
    for (i, r) in runs.iter().enumerate() {
        if let Some(log) = &r.log {
            let name = format!("trajectory_r{i}.jsonl");
            let p = o.path(&name);
            let f = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
            log.write_jsonl(std::io::BufWriter::new(f)).map_err(|e| io_err(&p, e))?;
        }
    }

    // Blocks are i.i.d. copies of tau_1, so their lengths feed the tail summary.
    let dtau: Vec<u64> = blocks.iter().flatten().map(|b| b.dtau).collect();
    let tail = if dtau.len() >= MIN_TAU_SAMPLES {
        Some(tau_tail_stats(&dtau, gamma_of(&m.spec), TAU_FIT_RANGE)?)
    } else {
        None
    };
    let summary = json!({
        "replicas": a.replicas,
        "steps": a.steps,
        "mode": a.mode,
        "n_blocks": dtau.len(),
        "regenerations_per_replica": runs.iter().map(|r| r.taus.len()).collect::<Vec<_>>(),
        "final_positions": runs.iter().map(|r| r.final_position.clone()).collect::<Vec<_>>(),
        "gamma": gamma_of(&m.spec),
        "tau_tail_stats": tail,
    });
    o.write_json("summary.json", &summary)?;
    o.finish("simulate", a, Some(a.seed), Some(&m), threads)
}

pub fn estimate(a: &EstimateArgs, threads: usize) -> Result<(), CliError> {
    let f = fs::File::open(&a.blocks).map_err(|e| io_err(&a.blocks, e))?;
    let (_, rows) = read_blocks_csv(std::io::BufReader::new(f)).map_err(|e| CliError::Parse {
        path: a.blocks.display().to_string(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    let blocks: Vec<RenewalBlock> = rows.into_iter().map(|(_, b)| b).collect();
    if blocks.len() < 2 {
        return Err(CliError::Domain {
            kind: "insufficient_data",
            message: format!("insufficient regenerations: {} blocks, need at least 2", blocks.len()),
        });
    }
    let est = estimate_all(&blocks)?;
    let mut o = OutDir::create(&a.out)?;
    o.write_json("estimates.json", &est)?;
    o.finish("estimate", a, None, None, threads)
}

pub fn annealed(a: &AnnealedArgs, threads: usize) -> Result<(), CliError> {
    let m = load_model(&a.model)?;
    require_valid(&m)?;
    let calib = calibrate(&m.spec, a.seed, a.calibration_steps, CALIBRATION_WALKS)?;
    let dirs = axis_directions(m.spec.dimension());
    let labels: Vec<String> = dirs.iter().map(|d| d.0.clone()).collect();
    let vecs: Vec<Vec<f64>> = dirs.iter().map(|d| d.1.clone()).collect();
    let samples = annealed_ensemble(&m.spec, a.seed, a.n, a.replicas, &vecs, &calib)?;
    let ks = ks_rows(&labels, &samples)?;
    // At n = 1 the law is far from Gaussian; the test should reject here.
    let ctl_samples = annealed_ensemble(&m.spec, a.seed, 1, a.replicas, &vecs, &calib)?;
    let control = ks_rows(&labels, &ctl_samples)?;
    let functional = functional_checks(&m.spec, a.seed, a.n, a.replicas, &a.times, &vecs[0], &calib)?;

    let mut o = OutDir::create(&a.out)?;
    o.write_with("clt_samples.csv", |w| Ok(clt_harness::write_clt_samples_csv(w, &labels, &samples)?))?;
    let diag = json!({
        "n": a.n,
        "replicas": a.replicas,
        "calibration": calib,
        "ks": ks,
        "ks_min_p": ks.iter().map(|r| r.p_value).fold(1.0, f64::min),
        "control_n1": control,
        "functional": functional,
    });
    o.write_json("diagnostics.json", &diag)?;
    o.finish("annealed", a, Some(a.seed), Some(&m), threads)
}

pub fn quenched(a: &QuenchedArgs, threads: usize) -> Result<(), CliError> {
    let m = load_model(&a.model)?;
    require_valid(&m)?;
    let d = m.spec.dimension();
    if a.m_min > a.m_max {
        return Err(CliError::Usage("--m-min must not exceed --m-max".into()));
    }
    if a.axis == 0 || a.axis > d {
        return Err(CliError::Usage(format!("--axis must be in 1..={d}")));
    }
    let f = match a.functional {
        FunctionalArg::Projection => {
            let mut dir = vec![0.0; d];
            dir[a.axis - 1] = 1.0;
            Functional::ClippedProjection {
                direction: dir,
                clip: a.clip,
                horizon: 1.0,
            }
        }
        FunctionalArg::SupNorm => Functional::ClippedSupNorm {
            clip: a.clip,
            horizon: 1.0,
        },
    };
    let calib = calibrate(&m.spec, a.seed, a.calibration_steps, CALIBRATION_WALKS)?;
    let curve = quenched_variance_curve(
        &m.spec,
        a.seed,
        a.b,
        a.m_min..=a.m_max,
        a.env_replicas,
        a.walk_replicas,
        &f,
        &calib.v,
    )?;
    let mut o = OutDir::create(&a.out)?;
    o.write_with("variance_curve.csv", |w| Ok(clt_harness::write_variance_curve_csv(w, &curve)?))?;

    let mut diag = json!({
        "functional": f,
        "calibration": calib,
        "condition": quenched_condition(d, m.spec.kappa(), m.spec.epsilon()).ok(),
        "variance_curve": curve,
    });
    if a.pairs > 0 {
        let rows = (a.m_min..=a.m_max)
            .map(|mm| delta_m(&m.spec, a.seed, a.b, mm, a.pairs, &f, &calib.v))
            .collect::<Result<Vec<_>, Error>>()?;
        o.write_with("delta_m.csv", |w| Ok(clt_harness::write_delta_csv(w, &rows)?))?;
        diag["delta_m"] = json!(rows);
        diag["trend"] = match trend_test(&rows) {
            Ok(s) => json!(s),
            Err(e) => json!({"error": e.to_string()}),
        };
    }
    if a.intersection_pairs > 0 {
        let n = a.intersection_steps;
        let rep = intersection_diagnostic(
            &m.spec,
            a.seed,
            a.intersection_pairs,
            n,
            a.run_length,
            CoinSharing::Independent,
        )?;
        diag["intersection"] = json!(rep);
    }
    o.write_json("diagnostics.json", &diag)?;
    o.finish("quenched", a, Some(a.seed), Some(&m), threads)
}

pub fn check_conditions(a: &ConditionArgs) -> Result<(), CliError> {
    let c = quenched_condition(a.dimension, a.kappa, a.epsilon)?;
    print_json(&c);
    Ok(())
}

pub fn find_constants(a: &ConstantsArgs) -> Result<(), CliError> {
    let gamma = match (a.gamma, a.kappa, a.epsilon) {
        (Some(g), None, None) => g,
        (None, Some(k), Some(e)) => gamma_exponent(k, e)?,
        _ => return Err(CliError::Usage("give --gamma, or both --kappa and --epsilon".into())),
    };
    let c = solve_constants(a.dimension, gamma)?;
    print_json(&json!({
        "dimension": a.dimension,
        "gamma": gamma,
        "constants": c,
        "violations": c.violations(a.dimension),
    }));
    Ok(())
}
