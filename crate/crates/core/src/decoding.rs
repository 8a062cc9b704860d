//! Explicit-duration dynamic programming over segmentations.
//!
//! For each session the forward pass computes, for every end time `t` and
//! state `j`, the best (or log-summed) score of a partial segmentation whose
//! last segment is in `j` and ends at `t`:
//!
//! ```text
//! delta(t, j) = max_{d <= d_max} [ enter(t - d, j) + ln h_j(d | phi_j(t - d)) + E_j(t - d, t) ]
//! enter(s, j) = ln rho_j                              if s opens the session
//!             = max_{k != j} delta(s, k) + ln p_{k,j}  otherwise
//! ```
//!
//! `E_j` is read from per-state prefix sums of emission log-densities, so a
//! pass costs `O(n M d_max + n M^2)`. Sessions are independent passes.

use rand::Rng;

use crate::dist::{ln_factorial, log_sum_exp, normal_logpdf, ztp_log_survival, ztp_tail_mass, ZtpParam};
use crate::error::{HsmmError, Result};
use crate::model::{duration_rate, Model, ModelParams, Segmentation, TimeSeriesData};

/// Per-state, per-start-time duration log-pmf, evaluated lazily.
///
/// Entry `(j, t, d)` is `ln ZTP(d | phi_j(t))` where `phi_j(t)` uses the
/// design row of a segment starting after `t` observed points.
#[derive(Debug, Clone)]
pub struct DurationGrid {
    d_max: usize,
    n: usize,
    phi: Vec<f64>,
    ln_phi: Vec<f64>,
    ln_norm: Vec<f64>,
    ln_fact: Vec<f64>,
    clamp_events: usize,
}

impl DurationGrid {
    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// Number of (state, start) pairs whose rate exponent hit the clamp.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn phi(&self, j: usize, t: usize) -> f64 {
        self.phi[j * self.n + t]
    }

    /// `ln h_j(d | phi_j(t))`; `-inf` outside `1..=d_max`.
    #[inline]
    pub fn entry(&self, j: usize, t: usize, d: usize) -> f64 {
        if d == 0 || d > self.d_max {
            return f64::NEG_INFINITY;
        }
        let i = j * self.n + t;
        d as f64 * self.ln_phi[i] - self.phi[i] - self.ln_fact[d] - self.ln_norm[i]
    }

    fn survival(&self, j: usize, t: usize, d: usize) -> f64 {
        let phi = ZtpParam::new(self.phi(j, t)).expect("positive by construction");
        ztp_log_survival(d as u64, phi).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Builds the duration table for the current coefficients.
pub fn duration_pmf_table(model: &Model, params: &ModelParams, d_max: usize) -> Result<DurationGrid> {
    if d_max == 0 {
        return Err(HsmmError::Config("d_max must be at least 1".into()));
    }
    let n = model.data().len();
    let m = params.n_states();
    let mut grid = DurationGrid {
        d_max,
        n,
        phi: Vec::with_capacity(m * n),
        ln_phi: Vec::with_capacity(m * n),
        ln_norm: Vec::with_capacity(m * n),
        ln_fact: (0..=d_max as u64).map(ln_factorial).collect(),
        clamp_events: 0,
    };
    for beta in &params.b {
        for t in 0..n {
            let rate = duration_rate(model.design().row(t), beta)?;
            grid.clamp_events += usize::from(rate.clamped);
            grid.phi.push(rate.phi.get());
            grid.ln_phi.push(rate.phi.get().ln());
            grid.ln_norm.push(rate.phi.log_normalizer());
        }
    }
    Ok(grid)
}

/// Default duration cap: the longest session.
///
/// The 0.9999 quantile of the zero-truncated Poisson at the largest rate the
/// clamp admits (`e^30`) dwarfs any realistic session, so the session length
/// is always the binding bound.
pub fn default_d_max(data: &TimeSeriesData) -> usize {
    data.session_ranges().iter().map(|r| r.len()).max().unwrap_or(1)
}

/// Largest pmf mass lost to the duration cap across the segments of `seg`.
pub fn truncated_mass(model: &Model, params: &ModelParams, seg: &Segmentation, d_max: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in seg.segments() {
        let rate = duration_rate(model.design().row(s.start), &params.b[s.state])?;
        worst = worst.max(ztp_tail_mass(d_max as u64, rate.phi));
    }
    Ok(worst)
}

/// Result of a decoding pass.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub segmentation: Segmentation,
    /// Complete log-likelihood of the returned segmentation (for the MAP
    /// decode, the maximum over all segmentations with durations `<= d_max`).
    pub log_score: f64,
    pub clamp_events: usize,
}

#[derive(Clone, Copy)]
enum Pass {
    Max,
    Sum,
}

struct Forward {
    /// `score[(t - a) * m + j]` for end offsets `0..=len`; row 0 unused.
    score: Vec<f64>,
    /// Log weight of entering state `j` at start offset `s`.
    enter: Vec<f64>,
    enter_from: Vec<usize>,
    best_d: Vec<usize>,
}

struct SessionView<'a> {
    grid: &'a DurationGrid,
    params: &'a ModelParams,
    /// Emission prefix sums, `cum[j * (len + 1) + i]` over the session.
    cum: Vec<f64>,
    start: usize,
    len: usize,
    session: usize,
    censor: bool,
}

impl SessionView<'_> {
    fn m(&self) -> usize {
        self.params.n_states()
    }

    #[inline]
    fn emission(&self, j: usize, from: usize, to: usize) -> f64 {
        let base = j * (self.len + 1);
        self.cum[base + to] - self.cum[base + from]
    }

    #[inline]
    fn duration(&self, j: usize, from: usize, d: usize, closes: bool) -> f64 {
        let t = self.start + from;
        if closes && self.censor {
            if d > self.grid.d_max {
                f64::NEG_INFINITY
            } else {
                self.grid.survival(j, t, d)
            }
        } else {
            self.grid.entry(j, t, d)
        }
    }

    fn segment_score(&self, enter: f64, j: usize, from: usize, to: usize) -> f64 {
        if enter == f64::NEG_INFINITY {
            return enter;
        }
        enter + self.duration(j, from, to - from, to == self.len) + self.emission(j, from, to)
    }

    fn forward(&self, pass: Pass) -> Forward {
        let (m, len) = (self.m(), self.len);
        let d_cap = self.grid.d_max.min(len);
        let mut f = Forward {
            score: vec![f64::NEG_INFINITY; (len + 1) * m],
            enter: vec![f64::NEG_INFINITY; len * m],
            enter_from: vec![usize::MAX; len * m],
            best_d: vec![0; (len + 1) * m],
        };
        let mut buf = Vec::with_capacity(d_cap.max(m));
        let mut lead = vec![f64::NEG_INFINITY; m * len];
        for t in 0..len {
            // entry weights for segments starting at offset t
            for j in 0..m {
                let i = t * m + j;
                if t == 0 {
                    f.enter[i] = self.params.rho[self.session][j].ln();
                    continue;
                }
                match pass {
                    Pass::Max => {
                        for k in (0..m).filter(|&k| k != j) {
                            let v = f.score[t * m + k] + self.params.p[k][j].ln();
                            if v > f.enter[i] {
                                f.enter[i] = v;
                                f.enter_from[i] = k;
                            }
                        }
                    }
                    Pass::Sum => {
                        buf.clear();
                        buf.extend((0..m).filter(|&k| k != j).map(|k| f.score[t * m + k] + self.params.p[k][j].ln()));
                        f.enter[i] = log_sum_exp(&buf);
                    }
                }
            }
            for j in 0..m {
                let g = self.grid;
                let i = j * g.n + self.start + t;
                lead[j * len + t] = f.enter[t * m + j] - g.phi[i] - g.ln_norm[i] - self.cum[j * (len + 1) + t];
            }
            // segments ending at offset t + 1
            let end = t + 1;
            for j in 0..m {
                let i = end * m + j;
                let lo = end.saturating_sub(d_cap);
                match pass {
                    Pass::Max if !(self.censor && end == len) => {
                        // per-start terms are folded into `lead`; ties keep the shortest duration
                        let g = self.grid;
                        let row = j * g.n + self.start;
                        let tail = self.cum[j * (len + 1) + end];
                        for from in (lo..end).rev() {
                            let d = end - from;
                            let v = lead[j * len + from] + d as f64 * g.ln_phi[row + from] - g.ln_fact[d] + tail;
                            if v > f.score[i] {
                                f.score[i] = v;
                                f.best_d[i] = d;
                            }
                        }
                    }
                    Pass::Max => {
                        for from in (lo..end).rev() {
                            let v = self.segment_score(f.enter[from * m + j], j, from, end);
                            if v > f.score[i] {
                                f.score[i] = v;
                                f.best_d[i] = end - from;
                            }
                        }
                    }
                    Pass::Sum => {
                        buf.clear();
                        buf.extend((lo..end).map(|from| self.segment_score(f.enter[from * m + j], j, from, end)));
                        f.score[i] = log_sum_exp(&buf);
                    }
                }
            }
        }
        f
    }
}

fn session_views<'a>(
    model: &Model,
    params: &'a ModelParams,
    grid: &'a DurationGrid,
) -> impl Iterator<Item = SessionView<'a>> + 'a {
    let data = model.data();
    let m = params.n_states();
    let censor = model.censor_last();
    let y = data.y.clone();
    data.session_ranges().into_iter().enumerate().map(move |(session, range)| {
        let len = range.len();
        let mut cum = vec![0.0; m * (len + 1)];
        for j in 0..m {
            let base = j * (len + 1);
            for (i, t) in range.clone().enumerate() {
                cum[base + i + 1] = cum[base + i] + normal_logpdf(y[t], params.mu[j], params.sigma2[j]);
            }
        }
        SessionView { grid, params, cum, start: range.start, len, session, censor }
    })
}

fn infeasible(params: &ModelParams, d_max: usize, session: usize, len: usize) -> HsmmError {
    let binding = if params.n_states() == 1 && len > d_max {
        format!("a single state cannot cover session {session} of length {len} with d_max = {d_max}")
    } else if params.rho[session].iter().all(|r| *r == 0.0) {
        format!("initial distribution of session {session} has no mass")
    } else {
        format!(
            "no segmentation of session {session} (length {len}, d_max = {d_max}, {} states) has finite likelihood",
            params.n_states()
        )
    };
    HsmmError::Infeasible(binding)
}

fn check_inputs(model: &Model, params: &ModelParams, d_max: usize) -> Result<()> {
    if d_max == 0 {
        return Err(HsmmError::Config("d_max must be at least 1".into()));
    }
    params.validate_shapes(model.data().n_sessions(), model.n_coefficients())
}

/// MAP segmentation with all durations `<= d_max`.
///
/// Ties go to the smallest final state, then within each segment to the
/// shortest duration and the smallest previous state.
pub fn viterbi_decode(model: &Model, params: &ModelParams, d_max: usize) -> Result<Decoded> {
    check_inputs(model, params, d_max)?;
    let grid = duration_pmf_table(model, params, d_max)?;
    let m = params.n_states();
    let mut states = Vec::new();
    let mut durations = Vec::new();
    let mut total = 0.0;
    for view in session_views(model, params, &grid) {
        let f = view.forward(Pass::Max);
        let len = view.len;
        let (mut best_j, mut best) = (0, f64::NEG_INFINITY);
        for j in 0..m {
            if f.score[len * m + j] > best {
                best = f.score[len * m + j];
                best_j = j;
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(infeasible(params, d_max, view.session, len));
        }
        total += best;
        let mut session_segments = Vec::new();
        let (mut t, mut j) = (len, best_j);
        while t > 0 {
            let d = f.best_d[t * m + j];
            session_segments.push((j, d));
            t -= d;
            if t > 0 {
                j = f.enter_from[t * m + j];
            }
        }
        for (j, d) in session_segments.into_iter().rev() {
            states.push(j);
            durations.push(d);
        }
    }
    Ok(Decoded {
        segmentation: Segmentation::new(states, durations)?,
        log_score: total,
        clamp_events: grid.clamp_events(),
    })
}

fn sample_index<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let norm = log_sum_exp(log_w);
    if norm == f64::NEG_INFINITY {
        return None;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in log_w.iter().enumerate() {
        if *w == f64::NEG_INFINITY {
            continue;
        }
        acc += (w - norm).exp();
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

/// Draws a segmentation from its full conditional by forward filtering and
/// backward sampling, with durations capped at `d_max`.
pub fn ffbs_sample<R: Rng + ?Sized>(
    model: &Model,
    params: &ModelParams,
    d_max: usize,
    rng: &mut R,
) -> Result<Decoded> {
    check_inputs(model, params, d_max)?;
    let grid = duration_pmf_table(model, params, d_max)?;
    let m = params.n_states();
    let mut states = Vec::new();
    let mut durations = Vec::new();
    for view in session_views(model, params, &grid) {
        let f = view.forward(Pass::Sum);
        let len = view.len;
        let d_cap = grid.d_max().min(len);
        let j_end = sample_index(&f.score[len * m..(len + 1) * m], rng)
            .ok_or_else(|| infeasible(params, d_max, view.session, len))?;
        let mut session_segments = Vec::new();
        let (mut t, mut j) = (len, j_end);
        let mut w = Vec::with_capacity(d_cap.max(m));
        while t > 0 {
            w.clear();
            let lo = t.saturating_sub(d_cap);
            w.extend((lo..t).map(|from| view.segment_score(f.enter[from * m + j], j, from, t)));
            let from = lo + sample_index(&w, rng).expect("reachable state has a feasible predecessor");
            session_segments.push((j, t - from));
            t = from;
            if t > 0 {
                w.clear();
                w.extend((0..m).map(|k| if k == j { f64::NEG_INFINITY } else { f.score[t * m + k] + params.p[k][j].ln() }));
                j = sample_index(&w, rng).expect("reachable state has a feasible predecessor");
            }
        }
        for (j, d) in session_segments.into_iter().rev() {
            states.push(j);
            durations.push(d);
        }
    }
    let segmentation = Segmentation::new(states, durations)?;
    let log_score = crate::model::complete_loglik(model, &segmentation, params)?;
    Ok(Decoded { segmentation, log_score, clamp_events: grid.clamp_events() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ztp_logpmf;
    use crate::model::{complete_loglik, DesignSpec, TimeSeriesData};

    fn two_state(y: Vec<f64>) -> (Model, ModelParams) {
        let model = Model::new(TimeSeriesData::from_observations(y).unwrap(), DesignSpec::intercept_only()).unwrap();
        let (rho, p) = ModelParams::uniform_chain(2, 1);
        let params = ModelParams {
            mu: vec![-100.0, 100.0],
            sigma2: vec![1.0, 1.0],
            rho,
            p,
            b: vec![vec![5f64.ln()], vec![5f64.ln()]],
        };
        (model, params)
    }

    #[test]
    fn overwhelming_emission_evidence() {
        let y = vec![-100.3, -99.8, -100.1, -100.0, -99.6, 100.2, 99.9, 100.4, 100.0, 99.7];
        let (model, params) = two_state(y);
        let dec = viterbi_decode(&model, &params, 10).unwrap();
        assert_eq!(dec.segmentation.states(), &[0, 1]);
        assert_eq!(dec.segmentation.durations(), &[5, 5]);
        let direct = complete_loglik(&model, &dec.segmentation, &params).unwrap();
        assert!((dec.log_score - direct).abs() < 1e-9);
    }

    #[test]
    fn single_state_covers_the_series_or_is_infeasible() {
        let model = Model::new(TimeSeriesData::from_observations(vec![0.1; 6]).unwrap(), DesignSpec::intercept_only()).unwrap();
        let params = ModelParams {
            mu: vec![0.0],
            sigma2: vec![1.0],
            rho: vec![vec![1.0]],
            p: vec![vec![0.0]],
            b: vec![vec![1.0]],
        };
        let dec = viterbi_decode(&model, &params, 6).unwrap();
        assert_eq!(dec.segmentation.durations(), &[6]);
        let err = viterbi_decode(&model, &params, 5).unwrap_err();
        assert!(matches!(err, HsmmError::Infeasible(ref msg) if msg.contains("d_max")), "{err}");
    }

    #[test]
    fn unit_cap_forces_unit_segments() {
        let (model, params) = two_state(vec![-100.0, 100.0, -100.0, 100.0]);
        let dec = viterbi_decode(&model, &params, 1).unwrap();
        assert_eq!(dec.segmentation.durations(), &[1, 1, 1, 1]);
    }

    #[test]
    fn grid_entries_match_direct_composition() {
        let data = TimeSeriesData::new(
            vec![0.0; 5],
            vec![vec![0.3, -1.0, 2.0, 0.5, 0.1]],
            vec!["x".into()],
            vec![0; 5],
            None,
        )
        .unwrap();
        let model = Model::new(data.clone(), DesignSpec::instantaneous(&data)).unwrap();
        let (rho, p) = ModelParams::uniform_chain(2, 1);
        let params = ModelParams { mu: vec![0.0, 1.0], sigma2: vec![1.0, 1.0], rho, p, b: vec![vec![1.0, 0.4], vec![2.0, -0.7]] };
        let grid = duration_pmf_table(&model, &params, 4).unwrap();
        for j in 0..2 {
            for t in 0..5 {
                let row = crate::model::build_design(&data, t, model.spec()).unwrap();
                let phi = duration_rate(&row, &params.b[j]).unwrap().phi;
                for d in 1..=4 {
                    assert_eq!(grid.entry(j, t, d), ztp_logpmf(d as u64, phi).unwrap());
                }
                assert_eq!(grid.entry(j, t, 5), f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn constant_covariates_give_time_constant_grid() {
        let data = TimeSeriesData::new(vec![0.0; 6], vec![vec![1.5; 6]], vec!["x".into()], vec![0; 6], None).unwrap();
        let model = Model::new(data.clone(), DesignSpec::instantaneous(&data)).unwrap();
        let (rho, p) = ModelParams::uniform_chain(2, 1);
        let params = ModelParams { mu: vec![0.0, 1.0], sigma2: vec![1.0, 1.0], rho, p, b: vec![vec![1.0, 0.4], vec![2.0, -0.7]] };
        let grid = duration_pmf_table(&model, &params, 3).unwrap();
        for j in 0..2 {
            for d in 1..=3 {
                assert!((0..6).all(|t| grid.entry(j, t, d) == grid.entry(j, 0, d)));
            }
        }
    }

    #[test]
    fn truncation_mass_reports_the_cap() {
        let (model, params) = two_state(vec![-100.0, 100.0]);
        let seg = Segmentation::new(vec![0, 1], vec![1, 1]).unwrap();
        let tm = truncated_mass(&model, &params, &seg, 3).unwrap();
        let phi = ZtpParam::new(5.0).unwrap();
        assert!((tm - ztp_tail_mass(3, phi)).abs() < 1e-15);
        assert!(tm > 0.5);
    }
}
