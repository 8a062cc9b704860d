use serde::{Deserialize, Serialize};

use super::TimeSeriesData;
use crate::error::{structure, Result};

/// One run of a single latent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub state: usize,
    /// Zero-based index of the first time point; equals the number of
    /// points observed before the segment starts.
    pub start: usize,
    pub duration: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }
}

/// Ordered list of (state, duration) segments covering the series.
///
/// States are zero-based. Consecutive segments carry different states except
/// across a session break, where the chain restarts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SegmentationRepr", into = "SegmentationRepr")]
pub struct Segmentation {
    states: Vec<usize>,
    durations: Vec<usize>,
    boundaries: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SegmentationRepr {
    states: Vec<usize>,
    durations: Vec<usize>,
}

impl TryFrom<SegmentationRepr> for Segmentation {
    type Error = crate::HsmmError;

    fn try_from(r: SegmentationRepr) -> Result<Self> {
        Segmentation::new(r.states, r.durations)
    }
}

impl From<Segmentation> for SegmentationRepr {
    fn from(s: Segmentation) -> Self {
        SegmentationRepr { states: s.states, durations: s.durations }
    }
}

impl Segmentation {
    pub fn new(states: Vec<usize>, durations: Vec<usize>) -> Result<Self> {
        if states.is_empty() || states.len() != durations.len() {
            return Err(structure("segmentation needs equally many (>= 1) states and durations"));
        }
        if durations.contains(&0) {
            return Err(structure("segment durations must be positive"));
        }
        let boundaries = durations
            .iter()
            .scan(0usize, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        Ok(Self { states, durations, boundaries })
    }

    /// Collapses a per-time state sequence into segments, splitting at session breaks.
    pub fn from_state_sequence(per_time: &[usize], session: &[usize]) -> Result<Self> {
        if per_time.len() != session.len() || per_time.is_empty() {
            return Err(structure("state sequence and session labels must be non-empty and equally long"));
        }
        let mut states = Vec::new();
        let mut durations = Vec::new();
        for t in 0..per_time.len() {
            if t > 0 && per_time[t] == per_time[t - 1] && session[t] == session[t - 1] {
                *durations.last_mut().expect("non-empty") += 1;
            } else {
                states.push(per_time[t]);
                durations.push(1);
            }
        }
        Self::new(states, durations)
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn durations(&self) -> &[usize] {
        &self.durations
    }

    /// Cumulative end points `T_q`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n_segments(&self) -> usize {
        self.states.len()
    }

    pub fn total_len(&self) -> usize {
        *self.boundaries.last().expect("non-empty")
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.states.iter().zip(&self.durations).zip(&self.boundaries).map(|((&state, &duration), &end)| Segment {
            state,
            start: end - duration,
            duration,
        })
    }

    /// State of every time point.
    pub fn per_time(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total_len());
        for s in self.segments() {
            out.extend(std::iter::repeat_n(s.state, s.duration));
        }
        out
    }

    /// Checks every invariant against the data and the number of states.
    pub fn validate(&self, data: &TimeSeriesData, n_states: usize) -> Result<()> {
        if self.total_len() != data.len() {
            return Err(structure(format!(
                "segment durations sum to {} but the series has {} points",
                self.total_len(),
                data.len()
            )));
        }
        if let Some(s) = self.states.iter().find(|&&s| s >= n_states) {
            return Err(structure(format!("state label {s} outside 0..{n_states}")));
        }
        let mut prev: Option<Segment> = None;
        for seg in self.segments() {
            let first = data.session[seg.start];
            if data.session[seg.end() - 1] != first {
                return Err(structure(format!("segment starting at {} straddles a session break", seg.start)));
            }
            if let Some(p) = prev {
                let same_session = data.session[p.start] == first;
                if same_session && p.state == seg.state {
                    return Err(structure(format!(
                        "consecutive segments at {} and {} share state {}",
                        p.start, seg.start, seg.state
                    )));
                }
            }
            prev = Some(seg);
        }
        Ok(())
    }

    /// Applies a relabeling: new label of old state `s` is `new_label[s]`.
    pub fn relabel(&mut self, new_label: &[usize]) {
        self.states.iter_mut().for_each(|s| *s = new_label[*s]);
    }

    /// Whether segment `q` opens a session (and so carries no transition term).
    pub fn opens_session(&self, q: usize, data: &TimeSeriesData) -> bool {
        q == 0 || {
            let start = self.boundaries[q - 1];
            data.session[start] != data.session[start - 1]
        }
    }
}
