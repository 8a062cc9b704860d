//! Independent reference implementations for the integration tests.
//!
//! Nothing here calls the library's likelihood or design code: design rows,
//! densities and the enumeration of segmentations are rebuilt from the model
//! definition in the most direct form available.

#![allow(dead_code)]

use std::f64::consts::PI;

use hsmm_core::model::{ColumnTransform, DesignColumn, DesignSpec, Standardization};
use hsmm_core::{ModelParams, TimeSeriesData};
use rand::Rng;

pub const WINDOW: usize = 3;

/// A small random problem together with a duration cap.
#[derive(Debug, Clone)]
pub struct Instance {
    pub data: TimeSeriesData,
    pub spec: DesignSpec,
    pub params: ModelParams,
    pub d_max: usize,
}

pub fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn random_simplex<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| 0.2 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Random instance with `n <= n_max`, `M <= m_max`, one or two sessions, an
/// instantaneous covariate, a trailing-mean covariate and (sometimes) the
/// session indicator with interactions.
pub fn random_instance<R: Rng>(rng: &mut R, n_max: usize, m_max: usize, d_max_max: usize) -> Instance {
    let n = rng.random_range(2..=n_max);
    let m = rng.random_range(1..=m_max);
    let split = if rng.random_bool(0.5) { Some(rng.random_range(1..n)) } else { None };
    let session: Vec<usize> = (0..n).map(|t| usize::from(split.is_some_and(|s| t >= s))).collect();
    let n_sessions = 1 + usize::from(split.is_some());
    let x: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let x0 = vec![std_normal(rng), rng.random_range(0.0..2.0)];

    let with_session = rng.random_bool(0.5);
    let column = |name: &str, transform| DesignColumn {
        name: name.into(),
        transform,
        standardization: Standardization::IDENTITY,
    };
    let spec = DesignSpec {
        columns: vec![
            column("x", ColumnTransform::Instantaneous),
            column("w", ColumnTransform::TrailingMean { window: WINDOW }),
        ],
        session_indicator: with_session,
        session_interactions: with_session,
    };
    let width = 3 + if with_session { 3 } else { 0 };

    let mut mu: Vec<f64> = (0..m).map(|_| 3.0 * std_normal(rng)).collect();
    mu.sort_by(f64::total_cmp);
    for j in 1..m {
        if mu[j] <= mu[j - 1] {
            mu[j] = mu[j - 1] + 0.1;
        }
    }
    let sigma2 = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let rho = (0..n_sessions).map(|_| random_simplex(rng, m)).collect();
    let p = (0..m)
        .map(|j| {
            if m == 1 {
                return vec![0.0];
            }
            let off = random_simplex(rng, m - 1);
            let mut row = vec![0.0; m];
            let mut it = off.into_iter();
            for (k, v) in row.iter_mut().enumerate() {
                if k != j {
                    *v = it.next().unwrap();
                }
            }
            row
        })
        .collect();
    let b = (0..m)
        .map(|_| {
            let mut row: Vec<f64> = (0..width).map(|_| 0.3 * std_normal(rng)).collect();
            row[0] = rng.random_range(0.0..1.5);
            row
        })
        .collect();
    let params = ModelParams { mu, sigma2, rho, p, b };

    // observations from a random state path
    let y = (0..n)
        .map(|_| {
            let j = rng.random_range(0..m);
            params.mu[j] + params.sigma2[j].sqrt() * std_normal(rng)
        })
        .collect();
    let data = TimeSeriesData::new(y, vec![x, w], vec!["x".into(), "w".into()], session, Some(x0)).unwrap();
    let d_max = rng.random_range(1..=d_max_max.min(n));
    Instance { data, spec, params, d_max }
}

/// Design row for a segment whose first point is `start` (zero-based).
pub fn oracle_design_row(inst: &Instance, start: usize) -> Vec<f64> {
    let d = &inst.data;
    let (x, w) = if start == 0 {
        (d.x0[0], d.x0[1])
    } else {
        let lo = start.saturating_sub(WINDOW);
        let window = &d.covariates[1][lo..start];
        (d.covariates[0][start - 1], window.iter().sum::<f64>() / window.len() as f64)
    };
    let mut row = vec![1.0, x, w];
    if inst.spec.session_indicator {
        let h = d.session[start] as f64;
        row.extend([h, x * h, w * h]);
    }
    row
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn oracle_ztp_pmf(k: usize, phi: f64) -> f64 {
    phi.powi(k as i32) * (-phi).exp() / (factorial(k) * (1.0 - (-phi).exp()))
}

pub fn oracle_normal_pdf(y: f64, mu: f64, var: f64) -> f64 {
    (-(y - mu) * (y - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Sum of the logs of every factor of the complete likelihood, each factor
/// evaluated in probability space.
pub fn oracle_complete_loglik(inst: &Instance, states: &[usize], durations: &[usize]) -> f64 {
    let d = &inst.data;
    let p = &inst.params;
    let mut total = 0.0;
    let mut start = 0;
    for (q, (&j, &tau)) in states.iter().zip(durations).enumerate() {
        let opens = q == 0 || d.session[start] != d.session[start - 1];
        total += if opens { p.rho[d.session[start]][j].ln() } else { p.p[states[q - 1]][j].ln() };
        let row = oracle_design_row(inst, start);
        let eta: f64 = row.iter().zip(&p.b[j]).map(|(a, b)| a * b).sum();
        total += oracle_ztp_pmf(tau, eta.exp()).ln();
        for t in start..start + tau {
            total += oracle_normal_pdf(d.y[t], p.mu[j], p.sigma2[j]).ln();
        }
        start += tau;
    }
    total
}

/// Oracle for the emission part alone.
pub fn oracle_emission_loglik(inst: &Instance, states: &[usize], durations: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut start = 0;
    for (&j, &tau) in states.iter().zip(durations) {
        for t in start..start + tau {
            total += oracle_normal_pdf(inst.data.y[t], inst.params.mu[j], inst.params.sigma2[j]).ln();
        }
        start += tau;
    }
    total
}

/// Every valid segmentation with durations `<= d_max`, as (states, durations).
pub fn enumerate_segmentations(inst: &Instance) -> Vec<(Vec<usize>, Vec<usize>)> {
    let m = inst.params.n_states();
    let mut sessions: Vec<usize> = Vec::new();
    for (t, &s) in inst.data.session.iter().enumerate() {
        if t == 0 || s != inst.data.session[t - 1] {
            sessions.push(0);
        }
        *sessions.last_mut().unwrap() += 1;
    }
    let mut out = vec![(Vec::new(), Vec::new())];
    for len in sessions {
        let mut pieces = Vec::new();
        session_pieces(len, inst.d_max, m, None, &mut Vec::new(), &mut Vec::new(), &mut pieces);
        let mut next = Vec::new();
        for (s0, d0) in &out {
            for (s1, d1) in &pieces {
                let mut s = s0.clone();
                s.extend(s1);
                let mut d = d0.clone();
                d.extend(d1);
                next.push((s, d));
            }
        }
        out = next;
    }
    out
}

fn session_pieces(
    remaining: usize,
    d_max: usize,
    m: usize,
    prev: Option<usize>,
    states: &mut Vec<usize>,
    durations: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, Vec<usize>)>,
) {
    if remaining == 0 {
        out.push((states.clone(), durations.clone()));
        return;
    }
    for j in (0..m).filter(|&j| Some(j) != prev) {
        for d in 1..=d_max.min(remaining) {
            states.push(j);
            durations.push(d);
            session_pieces(remaining - d, d_max, m, Some(j), states, durations, out);
            states.pop();
            durations.pop();
        }
    }
}

/// Random valid segmentation without a duration cap.
pub fn random_segmentation<R: Rng>(rng: &mut R, inst: &Instance) -> (Vec<usize>, Vec<usize>) {
    let m = inst.params.n_states();
    let mut states = Vec::new();
    let mut durations = Vec::new();
    let n = inst.data.len();
    let mut t = 0;
    while t < n {
        let session = inst.data.session[t];
        let end = (t..n).find(|&u| inst.data.session[u] != session).unwrap_or(n);
        let mut prev = None;
        while t < end {
            let choices: Vec<usize> = (0..m).filter(|&j| Some(j) != prev).collect();
            let j = choices[rng.random_range(0..choices.len())];
            let d = if m == 1 { end - t } else { rng.random_range(1..=end - t) };
            states.push(j);
            durations.push(d);
            prev = Some(j);
            t += d;
        }
    }
    (states, durations)
}

/// Compares `complete_loglik` and its parts against the oracle on `count`
/// random instances. Returns the largest absolute discrepancy.
pub fn likelihood_discrepancy(seed: u64, count: usize) -> f64 {
    use hsmm_core::model::{chain_loglik, complete_loglik, emission_loglik};
    use hsmm_core::{Model, Segmentation};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let inst = random_instance(&mut rng, 12, 3, 5);
        let model = Model::new(inst.data.clone(), inst.spec.clone()).unwrap();
        let (states, durations) = random_segmentation(&mut rng, &inst);
        let seg = Segmentation::new(states.clone(), durations.clone()).unwrap();
        seg.validate(&inst.data, inst.params.n_states()).unwrap();
        let complete = complete_loglik(&model, &seg, &inst.params).unwrap();
        let emission = emission_loglik(&inst.data, &seg, &inst.params.mu, &inst.params.sigma2, None).unwrap();
        let chain = chain_loglik(&model, &seg, &inst.params).unwrap();
        let oracle = oracle_complete_loglik(&inst, &states, &durations);
        let oracle_emission = oracle_emission_loglik(&inst, &states, &durations);
        worst = worst
            .max((complete - oracle).abs())
            .max((emission - oracle_emission).abs())
            .max((chain - (oracle - oracle_emission)).abs());
    }
    worst
}

/// Outcome of comparing the MAP decoder against exhaustive enumeration.
#[derive(Debug, Default)]
pub struct ViterbiReport {
    pub instances: usize,
    pub infeasible: usize,
    pub score_gap: f64,
    pub argmax_mismatches: usize,
    pub unique_optima: usize,
}

pub fn viterbi_report(seed: u64, count: usize) -> ViterbiReport {
    use hsmm_core::decoding::viterbi_decode;
    use hsmm_core::{HsmmError, Model};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = ViterbiReport::default();
    for _ in 0..count {
        let inst = random_instance(&mut rng, 12, 3, 5);
        let model = Model::new(inst.data.clone(), inst.spec.clone()).unwrap();
        let all = enumerate_segmentations(&inst);
        report.instances += 1;
        let decoded = viterbi_decode(&model, &inst.params, inst.d_max);
        if all.is_empty() {
            assert!(matches!(decoded, Err(HsmmError::Infeasible(_))), "expected infeasibility, got {decoded:?}");
            report.infeasible += 1;
            continue;
        }
        let decoded = decoded.unwrap();
        decoded.segmentation.validate(&inst.data, inst.params.n_states()).unwrap();
        let scored: Vec<f64> = all.iter().map(|(s, d)| oracle_complete_loglik(&inst, s, d)).collect();
        let best = scored.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let attained = oracle_complete_loglik(&inst, decoded.segmentation.states(), decoded.segmentation.durations());
        report.score_gap = report.score_gap.max((best - attained).abs()).max((best - decoded.log_score).abs());
        let near: Vec<usize> = (0..all.len()).filter(|&i| scored[i] > best - 1e-9).collect();
        if near.len() == 1 {
            report.unique_optima += 1;
            let (s, d) = &all[near[0]];
            if s.as_slice() != decoded.segmentation.states() || d.as_slice() != decoded.segmentation.durations() {
                report.argmax_mismatches += 1;
            }
        }
    }
    report
}
