use std::io::Write;

use serde::Serialize;

use super::{EnvError, StepResult};

#[derive(Serialize)]
struct StepRecord<'a> {
    episode: usize,
    t: usize,
    actions: &'a [usize],
    rewards: &'a [f64],
    events: &'a [super::EventCounts],
    done: bool,
}

/// Line-delimited JSON log of every environment step, for debugging.
pub struct TrajectoryDump<W: Write> {
    out: W,
    episode: usize,
    t: usize,
}

impl<W: Write> TrajectoryDump<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            episode: 0,
            t: 0,
        }
    }

    pub fn record(&mut self, actions: &[usize], result: &StepResult) -> Result<(), EnvError> {
        let rec = StepRecord {
            episode: self.episode,
            t: self.t,
            actions,
            rewards: &result.rewards,
            events: &result.events,
            done: result.done,
        };
        serde_json::to_writer(&mut self.out, &rec).map_err(|e| EnvError::Io(e.into()))?;
        self.out.write_all(b"\n")?;
        self.t += 1;
        if result.done {
            self.episode += 1;
            self.t = 0;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
