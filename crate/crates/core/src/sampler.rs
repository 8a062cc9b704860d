//! Metropolis-within-Gibbs sampler with per-iteration data subsampling.
//!
//! One iteration updates, in order: the initial distributions, the rows of
//! the transition matrix, the duration coefficients of every state
//! (random-walk Metropolis), the state sequence (MAP decode, or a posterior
//! draw when `stochastic_states` is set), a fresh subsample of time points,
//! the emission means and the emission variances. States are then relabeled
//! so that the means increase.
//!
//! Each block draws from its own random stream (see [`crate::rng`]).

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::{default_d_max, ffbs_sample, truncated_mass, viterbi_decode};
use crate::dist::{dirichlet_sample, inv_gamma_sample, normal_sample, ztp_sample};
use crate::error::{HsmmError, Result};
use crate::model::{complete_loglik, duration_rate, segment_duration_loglik, Model, ModelParams, Segmentation};
use crate::rng::{block_rng, Block, ChainRng};

/// Prior hyperparameters.
///
/// Empty `theta_rho` / `theta_p` mean "all ones" and are filled in by
/// [`Priors::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub theta_mu: f64,
    pub lambda2_mu: f64,
    /// Inverse-gamma shape.
    pub theta_sigma2: f64,
    /// Inverse-gamma scale.
    pub lambda_sigma2: f64,
    pub theta_b: f64,
    pub lambda2_b: f64,
    /// Dirichlet concentration of each session's initial distribution (length `M`).
    pub theta_rho: Vec<f64>,
    /// Dirichlet concentration of the off-diagonal entries of each transition row (length `M - 1`).
    pub theta_p: Vec<f64>,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            theta_mu: 0.0,
            lambda2_mu: 10_000.0,
            theta_sigma2: 3.0,
            lambda_sigma2: 3.0,
            theta_b: 0.0,
            lambda2_b: 10_000.0,
            theta_rho: Vec::new(),
            theta_p: Vec::new(),
        }
    }
}

impl Priors {
    /// Expands defaulted concentrations for `m` states and checks positivity.
    pub fn resolve(&self, m: usize) -> Result<Self> {
        let mut out = self.clone();
        if out.theta_rho.is_empty() {
            out.theta_rho = vec![1.0; m];
        }
        if out.theta_p.is_empty() {
            out.theta_p = vec![1.0; m.saturating_sub(1)];
        }
        if out.theta_rho.len() != m {
            return Err(HsmmError::Config(format!("theta_rho needs {m} entries, got {}", out.theta_rho.len())));
        }
        if out.theta_p.len() != m.saturating_sub(1) {
            return Err(HsmmError::Config(format!("theta_p needs {} entries, got {}", m - 1, out.theta_p.len())));
        }
        let positive = [out.lambda2_mu, out.theta_sigma2, out.lambda_sigma2, out.lambda2_b]
            .into_iter()
            .chain(out.theta_rho.iter().copied())
            .chain(out.theta_p.iter().copied())
            .all(|v| v.is_finite() && v > 0.0);
        if !positive || !out.theta_mu.is_finite() || !out.theta_b.is_finite() {
            return Err(HsmmError::Config("prior variances, scales, shapes and concentrations must be > 0".into()));
        }
        Ok(out)
    }
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_iter: usize,
    /// Leading iterations used to tune the proposal scales; not recorded.
    pub n_adapt: usize,
    pub subsample_rate: f64,
    /// Initial proposal standard deviation per state, or one value for all.
    pub kappa_beta: Vec<f64>,
    /// Duration cap for decoding; the longest session when absent.
    pub d_max: Option<usize>,
    pub seed: u64,
    pub target_accept: f64,
    pub thin: usize,
    /// Condition the variance update on the mean drawn in the same iteration
    /// rather than the previous one.
    pub sigma2_uses_current_mu: bool,
    /// Draw the state sequence from its full conditional instead of taking the MAP.
    pub stochastic_states: bool,
    pub relabel: bool,
    /// Expected duration implied by the initial coefficients.
    pub init_duration: f64,
    pub update_rho: bool,
    pub update_transition: bool,
    pub update_beta: bool,
    pub update_states: bool,
    /// Report progress every this many iterations (0 disables).
    pub progress_every: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iter: 10_000,
            n_adapt: 2_000,
            subsample_rate: 1.0,
            kappa_beta: vec![0.1],
            d_max: None,
            seed: 1,
            target_accept: 0.234,
            thin: 1,
            sigma2_uses_current_mu: false,
            stochastic_states: false,
            relabel: true,
            init_duration: 20.0,
            update_rho: true,
            update_transition: true,
            update_beta: true,
            update_states: true,
            progress_every: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HsmmError::Config(m.into()));
        if self.n_adapt >= self.n_iter {
            return bad("n_adapt must be smaller than n_iter");
        }
        if !(self.subsample_rate > 0.0 && self.subsample_rate <= 1.0) {
            return bad("subsample_rate must lie in (0, 1]");
        }
        if self.kappa_beta.is_empty() || self.kappa_beta.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return bad("kappa_beta must hold positive values");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.d_max == Some(0) {
            return bad("d_max must be at least 1");
        }
        if !(self.init_duration.is_finite() && self.init_duration > 0.0) {
            return bad("init_duration must be > 0");
        }
        Ok(())
    }

    fn kappa_for(&self, m: usize) -> Result<Vec<f64>> {
        match self.kappa_beta.len() {
            1 => Ok(vec![self.kappa_beta[0]; m]),
            l if l == m => Ok(self.kappa_beta.clone()),
            l => Err(HsmmError::Config(format!("kappa_beta has {l} entries for {m} states"))),
        }
    }
}

/// Mean, minimum and maximum realized duration rate over the segments of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// One recorded iteration. Blocks that the chain does not sample are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub segment_counts: Vec<usize>,
    /// `None` for a state without segments.
    pub rates: Vec<Option<RateStats>>,
    pub log_lik: f64,
}

/// Output of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub draws: Vec<Draw>,
    /// Post-adaptation acceptance rate of each state's coefficient proposals.
    pub acceptance: Vec<f64>,
    /// Proposal scales after adaptation.
    pub kappa: Vec<f64>,
    pub clamp_events: usize,
    /// Largest duration pmf mass beyond `d_max` seen at recorded iterations.
    pub max_truncated_mass: f64,
    pub d_max: usize,
    pub final_params: ModelParams,
    pub final_segmentation: Segmentation,
}

impl PosteriorDraws {
    pub fn n_states(&self) -> usize {
        self.final_params.n_states()
    }

    /// Trace of one scalar extracted from every draw.
    pub fn trace(&self, f: impl Fn(&Draw) -> f64) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }
}

/// Snapshot passed to the progress callback.
#[derive(Debug, Clone)]
pub struct Progress {
    pub iteration: usize,
    pub log_lik: f64,
    /// Running acceptance rate of each state's coefficient proposals.
    pub acceptance: Vec<f64>,
}

/// Forward simulation of an initial segmentation followed by per-state moments.
pub fn initialize<R: Rng + ?Sized>(
    model: &Model,
    m: usize,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<(ModelParams, Segmentation)> {
    let data = model.data();
    let (rho, p) = ModelParams::uniform_chain(m, data.n_sessions());
    let mut b = vec![vec![0.0; model.n_coefficients()]; m];
    for row in &mut b {
        row[0] = config.init_duration.ln();
    }
    let mut states = Vec::new();
    let mut durations = Vec::new();
    for range in data.session_ranges() {
        let mut t = range.start;
        let mut prev: Option<usize> = None;
        while t < range.end {
            let probs = match prev {
                None => &rho[data.session[t]],
                Some(k) => &p[k],
            };
            let j = categorical(probs, rng);
            let rate = duration_rate(model.design().row(t), &b[j])?;
            let tau = if m == 1 { range.end - t } else { (ztp_sample(rate.phi, rng) as usize).min(range.end - t) };
            states.push(j);
            durations.push(tau);
            t += tau;
            prev = Some(j);
        }
    }
    let seg = Segmentation::new(states, durations)?;
    let (mu, sigma2) = state_moments(&data.y, &seg, m);
    Ok((ModelParams { mu, sigma2, rho, p, b }, seg))
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Per-state sample means and variances, with the pooled variance and
/// evenly spread pooled quantiles for states that have too few points.
pub fn state_moments(y: &[f64], seg: &Segmentation, m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = y.len() as f64;
    let pooled_mean = y.iter().sum::<f64>() / n;
    let pooled_var = (y.iter().map(|v| (v - pooled_mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).max(1e-6);
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = vec![0.0; m];
    let mut sq = vec![0.0; m];
    let mut count = vec![0usize; m];
    for s in seg.segments() {
        for v in &y[s.start..s.end()] {
            sum[s.state] += v;
            sq[s.state] += v * v;
            count[s.state] += 1;
        }
    }
    let mut mu = Vec::with_capacity(m);
    let mut sigma2 = Vec::with_capacity(m);
    for j in 0..m {
        let c = count[j] as f64;
        if count[j] == 0 {
            mu.push(sorted[((j as f64 + 0.5) / m as f64 * (sorted.len() - 1) as f64).round() as usize]);
        } else {
            mu.push(sum[j] / c);
        }
        let var = if count[j] >= 2 { (sq[j] - sum[j] * sum[j] / c) / (c - 1.0) } else { pooled_var };
        sigma2.push(if var > 1e-12 { var } else { pooled_var });
    }
    (mu, sigma2)
}

/// Draws each session's initial distribution given its first state.
pub fn update_rho<R: Rng + ?Sized>(
    model: &Model,
    seg: &Segmentation,
    theta_rho: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let data = model.data();
    let mut firsts = vec![None; data.n_sessions()];
    for (q, s) in seg.segments().enumerate() {
        if seg.opens_session(q, data) {
            firsts[data.session[s.start]] = Some(s.state);
        }
    }
    firsts
        .into_iter()
        .map(|first| {
            let alpha: Vec<f64> =
                theta_rho.iter().enumerate().map(|(j, a)| a + f64::from(u8::from(first == Some(j)))).collect();
            dirichlet_sample(&alpha, rng)
        })
        .collect()
}

/// Within-session transition counts `n[j][k]`.
pub fn transition_counts(model: &Model, seg: &Segmentation, m: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; m]; m];
    let mut prev: Option<usize> = None;
    for (q, s) in seg.segments().enumerate() {
        if !seg.opens_session(q, model.data()) {
            if let Some(k) = prev {
                counts[k][s.state] += 1;
            }
        }
        prev = Some(s.state);
    }
    counts
}

/// Draws the off-diagonal part of every transition row; the diagonal stays 0.
pub fn update_p<R: Rng + ?Sized>(
    model: &Model,
    seg: &Segmentation,
    m: usize,
    theta_p: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if m == 1 {
        return Ok(vec![vec![0.0]]);
    }
    let counts = transition_counts(model, seg, m);
    (0..m)
        .map(|j| {
            let others: Vec<usize> = (0..m).filter(|&k| k != j).collect();
            let alpha: Vec<f64> = others.iter().zip(theta_p).map(|(&k, a)| counts[j][k] as f64 + a).collect();
            let draw = dirichlet_sample(&alpha, rng)?;
            let mut row = vec![0.0; m];
            for (&k, v) in others.iter().zip(draw) {
                row[k] = v;
            }
            Ok(row)
        })
        .collect()
}

/// Log Metropolis ratio for replacing state `j`'s coefficients by `proposal`.
pub fn beta_log_ratio(
    model: &Model,
    seg: &Segmentation,
    params: &ModelParams,
    j: usize,
    proposal: &[f64],
    priors: &Priors,
) -> Result<f64> {
    let data = model.data();
    let mut proposed = params.clone();
    proposed.b[j] = proposal.to_vec();
    let mut ratio = 0.0;
    for s in seg.segments().filter(|s| s.state == j) {
        let closes = s.end() == data.len() || data.session[s.end()] != data.session[s.start];
        ratio += segment_duration_loglik(model, &proposed, j, s.start, s.duration, closes)?
            - segment_duration_loglik(model, params, j, s.start, s.duration, closes)?;
    }
    let prior = |b: &[f64]| -> f64 {
        -b.iter().map(|v| (v - priors.theta_b).powi(2)).sum::<f64>() / (2.0 * priors.lambda2_b)
    };
    Ok(ratio + prior(proposal) - prior(&params.b[j]))
}

/// One random-walk Metropolis step for state `j`; returns whether it accepted.
pub fn update_beta<R: Rng + ?Sized>(
    model: &Model,
    seg: &Segmentation,
    params: &mut ModelParams,
    j: usize,
    kappa: f64,
    priors: &Priors,
    rng: &mut R,
) -> Result<bool> {
    let proposal: Vec<f64> = params.b[j].iter().map(|b| normal_sample(*b, kappa * kappa, rng)).collect();
    let log_ratio = beta_log_ratio(model, seg, params, j, &proposal, priors)?;
    let u: f64 = rng.random();
    let accept = u.ln() < log_ratio;
    if accept {
        params.b[j] = proposal;
    }
    Ok(accept)
}

/// Simple random sample without replacement of `round(rate * n)` indices, sorted.
pub fn subsample_indices<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(HsmmError::Config(format!("subsample rate must lie in (0, 1], got {rate}")));
    }
    if rate == 1.0 {
        return Ok((0..n).collect());
    }
    let k = ((rate * n as f64).round() as usize).min(n);
    let mut idx = index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Mean and variance of the normal full conditional of an emission mean.
pub fn mu_full_conditional(sum: f64, count: usize, sigma2: f64, priors: &Priors) -> (f64, f64) {
    let precision = count as f64 / sigma2 + 1.0 / priors.lambda2_mu;
    ((sum / sigma2 + priors.theta_mu / priors.lambda2_mu) / precision, 1.0 / precision)
}

/// Conjugate draws of the emission means, then the variances, from the
/// subsampled points. `per_time` holds the state of every time point.
#[allow(clippy::too_many_arguments)]
pub fn update_mu_sigma2(
    y: &[f64],
    per_time: &[usize],
    indices: &[usize],
    params: &mut ModelParams,
    priors: &Priors,
    sigma2_uses_current_mu: bool,
    mu_rng: &mut ChainRng,
    sigma2_rng: &mut ChainRng,
) -> Result<()> {
    let m = params.n_states();
    let mut sum = vec![0.0; m];
    let mut count = vec![0usize; m];
    for &i in indices {
        sum[per_time[i]] += y[i];
        count[per_time[i]] += 1;
    }
    let previous_mu = params.mu.clone();
    for j in 0..m {
        let (mean, var) = mu_full_conditional(sum[j], count[j], params.sigma2[j], priors);
        params.mu[j] = normal_sample(mean, var, mu_rng);
    }
    let centre = if sigma2_uses_current_mu { &params.mu } else { &previous_mu };
    let mut ss = vec![0.0; m];
    for &i in indices {
        ss[per_time[i]] += (y[i] - centre[per_time[i]]).powi(2);
    }
    for j in 0..m {
        params.sigma2[j] =
            inv_gamma_sample(priors.theta_sigma2 + count[j] as f64 / 2.0, priors.lambda_sigma2 + ss[j] / 2.0, sigma2_rng)?;
    }
    Ok(())
}

/// Relabels states so that the means increase. Returns the applied order
/// (old state `order[i]` becomes `i`), or `None` if already ordered.
pub fn relabel(params: &mut ModelParams, seg: &mut Segmentation) -> Option<Vec<usize>> {
    let order = params.ordering_permutation()?;
    params.permute(&order);
    let mut new_label = vec![0; order.len()];
    for (i, &o) in order.iter().enumerate() {
        new_label[o] = i;
    }
    seg.relabel(&new_label);
    Some(order)
}

struct Streams {
    rho: ChainRng,
    transition: ChainRng,
    beta: Vec<ChainRng>,
    states: ChainRng,
    subsample: ChainRng,
    mu: ChainRng,
    sigma2: ChainRng,
}

impl Streams {
    fn new(seed: u64, m: usize) -> Self {
        Self {
            rho: block_rng(seed, Block::Rho),
            transition: block_rng(seed, Block::Transition),
            beta: (0..m).map(|j| block_rng(seed, Block::Beta(j))).collect(),
            states: block_rng(seed, Block::States),
            subsample: block_rng(seed, Block::Subsample),
            mu: block_rng(seed, Block::Mu),
            sigma2: block_rng(seed, Block::Sigma2),
        }
    }
}

fn rate_stats(model: &Model, params: &ModelParams, seg: &Segmentation) -> Result<(Vec<usize>, Vec<Option<RateStats>>)> {
    let m = params.n_states();
    let mut counts = vec![0usize; m];
    let mut acc: Vec<(f64, f64, f64)> = vec![(0.0, f64::INFINITY, f64::NEG_INFINITY); m];
    for s in seg.segments() {
        let phi = duration_rate(model.design().row(s.start), &params.b[s.state])?.phi.get();
        counts[s.state] += 1;
        let a = &mut acc[s.state];
        a.0 += phi;
        a.1 = a.1.min(phi);
        a.2 = a.2.max(phi);
    }
    let stats = acc
        .into_iter()
        .zip(&counts)
        .map(|((sum, min, max), &c)| (c > 0).then(|| RateStats { mean: sum / c as f64, min, max }))
        .collect();
    Ok((counts, stats))
}

/// Runs a full chain with `m` states, starting from a forward-simulated state sequence.
pub fn run_chain(model: &Model, m: usize, priors: &Priors, config: &McmcConfig) -> Result<PosteriorDraws> {
    run_chain_from(model, m, priors, config, None, &mut |_| {})
}

/// Runs a full chain, optionally from a given starting point, reporting progress.
pub fn run_chain_from(
    model: &Model,
    m: usize,
    priors: &Priors,
    config: &McmcConfig,
    init: Option<(ModelParams, Segmentation)>,
    progress: &mut dyn FnMut(&Progress),
) -> Result<PosteriorDraws> {
    config.validate()?;
    let priors = priors.resolve(m)?;
    let data = model.data();
    let d_max = config.d_max.unwrap_or_else(|| default_d_max(data));
    let (mut params, mut seg) = match init {
        Some(start) => start,
        None => initialize(model, m, config, &mut block_rng(config.seed, Block::Init))?,
    };
    params.validate_shapes(data.n_sessions(), model.n_coefficients())?;
    seg.validate(data, m)?;
    let mut kappa = config.kappa_for(m)?;
    if config.relabel {
        if let Some(order) = relabel(&mut params, &mut seg) {
            kappa = order.iter().map(|&o| kappa[o]).collect();
        }
    }

    let mut rngs = Streams::new(config.seed, m);
    let mut accepted = vec![0usize; m];
    let mut accepted_total = vec![0usize; m];
    let mut clamp_events = 0;
    let mut max_truncated_mass = 0.0f64;
    let mut draws = Vec::with_capacity((config.n_iter - config.n_adapt) / config.thin);
    let mut per_time = seg.per_time();

    for l in 1..=config.n_iter {
        if config.update_rho {
            params.rho = update_rho(model, &seg, &priors.theta_rho, &mut rngs.rho)?;
        }
        if config.update_transition {
            params.p = update_p(model, &seg, m, &priors.theta_p, &mut rngs.transition)?;
        }
        if config.update_beta {
            for j in 0..m {
                let ok = update_beta(model, &seg, &mut params, j, kappa[j], &priors, &mut rngs.beta[j])?;
                accepted_total[j] += usize::from(ok);
                if l <= config.n_adapt {
                    let step = (f64::from(u8::from(ok)) - config.target_accept) / l.div_ceil(50) as f64;
                    kappa[j] *= step.exp();
                } else {
                    accepted[j] += usize::from(ok);
                }
            }
        }
        if config.update_states {
            let decoded = if config.stochastic_states {
                ffbs_sample(model, &params, d_max, &mut rngs.states)
            } else {
                viterbi_decode(model, &params, d_max)
            }
            .map_err(|e| match e {
                HsmmError::Infeasible(msg) => HsmmError::Infeasible(format!("iteration {l}: {msg}")),
                other => other,
            })?;
            clamp_events += decoded.clamp_events;
            seg = decoded.segmentation;
            per_time = seg.per_time();
        }
        let indices = subsample_indices(data.len(), config.subsample_rate, &mut rngs.subsample)?;
        update_mu_sigma2(
            &data.y,
            &per_time,
            &indices,
            &mut params,
            &priors,
            config.sigma2_uses_current_mu,
            &mut rngs.mu,
            &mut rngs.sigma2,
        )?;
        if config.relabel {
            if let Some(order) = relabel(&mut params, &mut seg) {
                kappa = order.iter().map(|&o| kappa[o]).collect();
                accepted = order.iter().map(|&o| accepted[o]).collect();
                accepted_total = order.iter().map(|&o| accepted_total[o]).collect();
                per_time = seg.per_time();
            }
        }

        let keep = l > config.n_adapt && (l - config.n_adapt) % config.thin == 0;
        let report = config.progress_every > 0 && l % config.progress_every == 0;
        if keep || report {
            let log_lik = complete_loglik(model, &seg, &params)?;
            if report {
                progress(&Progress {
                    iteration: l,
                    log_lik,
                    acceptance: accepted_total.iter().map(|&a| a as f64 / l as f64).collect(),
                });
            }
            if keep {
                max_truncated_mass = max_truncated_mass.max(truncated_mass(model, &params, &seg, d_max)?);
                let (segment_counts, rates) = rate_stats(model, &params, &seg)?;
                draws.push(Draw {
                    iteration: l,
                    mu: params.mu.clone(),
                    sigma2: params.sigma2.clone(),
                    rho: params.rho.clone(),
                    p: params.p.clone(),
                    b: params.b.clone(),
                    segment_counts,
                    rates,
                    log_lik,
                });
            }
        }
    }
    let kept = (config.n_iter - config.n_adapt) as f64;
    Ok(PosteriorDraws {
        draws,
        acceptance: accepted.iter().map(|&a| a as f64 / kept).collect(),
        kappa,
        clamp_events,
        max_truncated_mass,
        d_max,
        final_params: params,
        final_segmentation: seg,
    })
}

/// Samples only the emission parameters with the states held at `true_seg`.
///
/// Starts from the per-state sample moments and uses the same random streams
/// as [`run_chain`], so a full chain with every other block disabled, no
/// relabeling and the same start produces identical emission traces.
pub fn run_fixed_state_chain(
    model: &Model,
    true_seg: &Segmentation,
    m: usize,
    priors: &Priors,
    config: &McmcConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let priors = priors.resolve(m)?;
    let data = model.data();
    true_seg.validate(data, m)?;
    let (mu, sigma2) = state_moments(&data.y, true_seg, m);
    let (rho, p) = ModelParams::uniform_chain(m, data.n_sessions());
    let mut params = ModelParams { mu, sigma2, rho, p, b: vec![vec![0.0; model.n_coefficients()]; m] };
    let per_time = true_seg.per_time();
    let mut rngs = Streams::new(config.seed, m);
    let mut draws = Vec::with_capacity((config.n_iter - config.n_adapt) / config.thin);
    for l in 1..=config.n_iter {
        let indices = subsample_indices(data.len(), config.subsample_rate, &mut rngs.subsample)?;
        update_mu_sigma2(
            &data.y,
            &per_time,
            &indices,
            &mut params,
            &priors,
            config.sigma2_uses_current_mu,
            &mut rngs.mu,
            &mut rngs.sigma2,
        )?;
        if l > config.n_adapt && (l - config.n_adapt) % config.thin == 0 {
            draws.push(Draw {
                iteration: l,
                mu: params.mu.clone(),
                sigma2: params.sigma2.clone(),
                rho: Vec::new(),
                p: Vec::new(),
                b: Vec::new(),
                segment_counts: Vec::new(),
                rates: Vec::new(),
                log_lik: f64::NAN,
            });
        }
    }
    Ok(PosteriorDraws {
        draws,
        acceptance: Vec::new(),
        kappa: Vec::new(),
        clamp_events: 0,
        max_truncated_mass: 0.0,
        d_max: config.d_max.unwrap_or_else(|| default_d_max(data)),
        final_params: params,
        final_segmentation: true_seg.clone(),
    })
}
