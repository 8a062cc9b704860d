use super::{duration_rate, Model, ModelParams, Segmentation, TimeSeriesData};
use crate::dist::{normal_logpdf, ztp_log_survival, ztp_logpmf};
use crate::error::{structure, Result};

/// Gaussian emission log-likelihood over the points selected by `mask`
/// (all points when `mask` is `None`).
pub fn emission_loglik(
    data: &TimeSeriesData,
    seg: &Segmentation,
    mu: &[f64],
    sigma2: &[f64],
    mask: Option<&[bool]>,
) -> Result<f64> {
    if seg.total_len() != data.len() {
        return Err(structure(format!("segmentation covers {} points, data has {}", seg.total_len(), data.len())));
    }
    if mask.is_some_and(|m| m.len() != data.len()) {
        return Err(structure("inclusion mask length differs from the data length"));
    }
    let mut total = 0.0;
    for s in seg.segments() {
        if s.state >= mu.len() || s.state >= sigma2.len() {
            return Err(structure(format!("state {} has no emission parameters", s.state)));
        }
        let (m, v) = (mu[s.state], sigma2[s.state]);
        for t in s.start..s.end() {
            if mask.is_none_or(|mk| mk[t]) {
                total += normal_logpdf(data.y[t], m, v);
            }
        }
    }
    Ok(total)
}

/// Log-likelihood of the semi-Markov chain: initial states, durations and
/// transitions. Each session restarts from its own initial distribution.
/// Forbidden moves yield `-inf` rather than an error.
pub fn chain_loglik(model: &Model, seg: &Segmentation, params: &ModelParams) -> Result<f64> {
    let data = model.data();
    if seg.total_len() != data.len() {
        return Err(structure(format!("segmentation covers {} points, data has {}", seg.total_len(), data.len())));
    }
    let m = params.n_states();
    let mut total = 0.0;
    let mut prev_state: Option<usize> = None;
    for (q, s) in seg.segments().enumerate() {
        if s.state >= m {
            return Err(structure(format!("state {} outside 0..{m}", s.state)));
        }
        let opens = seg.opens_session(q, data);
        total += if opens {
            params.rho[data.session[s.start]][s.state].ln()
        } else {
            params.p[prev_state.expect("not the first segment")][s.state].ln()
        };
        total += segment_duration_loglik(model, params, s.state, s.start, s.duration, seg_closes_session(model, s.end()))?;
        prev_state = Some(s.state);
    }
    Ok(total)
}

/// Emission plus chain log-likelihood.
pub fn complete_loglik(model: &Model, seg: &Segmentation, params: &ModelParams) -> Result<f64> {
    Ok(emission_loglik(model.data(), seg, &params.mu, &params.sigma2, None)? + chain_loglik(model, seg, params)?)
}

fn seg_closes_session(model: &Model, end: usize) -> bool {
    let session = &model.data().session;
    end == session.len() || session[end] != session[end - 1]
}

/// Duration term of one segment; the survival function replaces the pmf for
/// a session-closing segment when right censoring is enabled.
pub(crate) fn segment_duration_loglik(
    model: &Model,
    params: &ModelParams,
    state: usize,
    start: usize,
    duration: usize,
    closes_session: bool,
) -> Result<f64> {
    let rate = duration_rate(model.design().row(start), &params.b[state])?;
    if model.censor_last() && closes_session {
        ztp_log_survival(duration as u64, rate.phi)
    } else {
        ztp_logpmf(duration as u64, rate.phi)
    }
}
