//! The merged timeline: state breakpoints and event times on one sorted
//! grid, so that both the state value and the set of past events are
//! constant on each segment. All exact integrals run over its segments.

use crate::error::{Error, Result};
use crate::model::{EventStream, StateTrajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct MergedTimeline {
    horizon: f64,
    starts: Vec<f64>,
    state_index: Vec<usize>,
    opening_event: Vec<Option<usize>>,
    event_segment: Vec<usize>,
}

impl MergedTimeline {
    /// Merge `events` into the breakpoints of `state`. Events must have
    /// distinct timestamps and share the state's horizon.
    pub fn build(events: &EventStream, state: &StateTrajectory) -> Result<Self> {
        check_horizons(events, state)?;
        events.require_strict()?;

        let bps = state.breakpoints();
        let n_state = state.n_segments();
        let evs = events.events();
        let cap = n_state + evs.len();
        let mut starts = Vec::with_capacity(cap);
        let mut state_index = Vec::with_capacity(cap);
        let mut opening_event = Vec::with_capacity(cap);
        let mut event_segment = Vec::with_capacity(evs.len());

        let mut j = 0; // next state breakpoint to merge (index into bps[..n_state])
        let mut i = 0; // next event
        let mut current_state = 0;
        while j < n_state || i < evs.len() {
            let tb = if j < n_state { bps[j] } else { f64::INFINITY };
            let te = if i < evs.len() { evs[i].time } else { f64::INFINITY };
            if tb <= te {
                current_state = j;
                starts.push(tb);
                state_index.push(current_state);
                if tb == te {
                    opening_event.push(Some(i));
                    event_segment.push(starts.len() - 1);
                    i += 1;
                } else {
                    opening_event.push(None);
                }
                j += 1;
            } else {
                starts.push(te);
                state_index.push(current_state);
                opening_event.push(Some(i));
                event_segment.push(starts.len() - 1);
                i += 1;
            }
        }
        Ok(Self {
            horizon: state.horizon(),
            starts,
            state_index,
            opening_event,
            event_segment,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_segments(&self) -> usize {
        self.starts.len()
    }

    pub fn start(&self, k: usize) -> f64 {
        self.starts[k]
    }

    pub fn end(&self, k: usize) -> f64 {
        self.starts.get(k + 1).copied().unwrap_or(self.horizon)
    }

    pub fn duration(&self, k: usize) -> f64 {
        self.end(k) - self.start(k)
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Index of the [`StateTrajectory`] segment covering segment `k`.
    pub fn state_index(&self, k: usize) -> usize {
        self.state_index[k]
    }

    /// Event whose time is the left end of segment `k`, if any.
    pub fn opening_event(&self, k: usize) -> Option<usize> {
        self.opening_event[k]
    }

    /// Event whose time is the right end of segment `k`, if any.
    pub fn closing_event(&self, k: usize) -> Option<usize> {
        self.opening_event.get(k + 1).copied().flatten()
    }

    /// Segment opened by event `i`.
    pub fn event_segment(&self, i: usize) -> usize {
        self.event_segment[i]
    }

    /// State segment supplying `X_{t-}` for event `i`.
    pub fn pre_event_state(&self, i: usize) -> usize {
        self.state_index[self.event_segment[i] - 1]
    }

    /// All segment boundaries including `0` and `T`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.starts.clone();
        if b.last() != Some(&self.horizon) {
            b.push(self.horizon);
        }
        b
    }
}

pub(crate) fn check_horizons(events: &EventStream, state: &StateTrajectory) -> Result<()> {
    if events.horizon() != state.horizon() {
        return Err(Error::HorizonMismatch {
            events: events.horizon(),
            state: state.horizon(),
        });
    }
    Ok(())
}
