//! The coupled walk: an `eps` coin chooses between the fixed kernel `q` and the
//! residual law of the local environment state.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice_env::{Environment, LazyEnvironment, SharedEnvironment, Site};
use crate::model::{move_displacement, LocalLaw, ModelSpec, EXACT_TOL};
use crate::regeneration::{extract_blocks, RegenTracker, RenewalBlock};
use crate::rng::{categorical, derive_seed, sequential_rng, RandomTag, StreamLabel};

/// `(s - eps q) / (1 - eps)`.
pub fn residual_law(s: &LocalLaw, q: &LocalLaw, epsilon: f64) -> Result<LocalLaw> {
    residual_probs(s.probs(), q.probs(), epsilon)
        .map_err(|(mv, value)| Error::EllipticityViolation { state: 0, mv, value })
        .and_then(LocalLaw::new)
}

fn residual_probs(s: &[f64], q: &[f64], epsilon: f64) -> std::result::Result<Vec<f64>, (usize, f64)> {
    if !(0.0..1.0).contains(&epsilon) || s.len() != q.len() {
        return Err((usize::MAX, f64::NAN));
    }
    let mut r = Vec::with_capacity(s.len());
    for (y, (a, b)) in s.iter().zip(q).enumerate() {
        let v = (a - epsilon * b) / (1.0 - epsilon);
        if v < -EXACT_TOL {
            return Err((y, v));
        }
        r.push(v.max(0.0));
    }
    let total: f64 = r.iter().sum();
    r.iter_mut().for_each(|x| *x /= total);
    Ok(r)
}

/// Residual laws of every state of `spec`, by state index.
pub fn residual_laws(spec: &ModelSpec) -> Result<Vec<LocalLaw>> {
    spec.states()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            residual_probs(s.probs(), spec.q().probs(), spec.epsilon())
                .map_err(|(mv, value)| Error::EllipticityViolation { state: i, mv, value })
                .and_then(LocalLaw::new)
        })
        .collect()
}

/// `eps_t` of walker `walk_id` (`t >= 1`): 1 means the step uses `q`.
#[inline]
pub fn eps_coin(coin_seed: u64, walk_id: u64, t: u64, epsilon: f64) -> bool {
    RandomTag::walker(coin_seed, StreamLabel::Eps, walk_id, t).uniform() < epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    AnnealedLazy,
    QuenchedShared,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annealed_lazy" | "annealed-lazy" => Ok(Mode::AnnealedLazy),
            "quenched_shared" | "quenched-shared" => Ok(Mode::QuenchedShared),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRecord {
    /// Time before the move.
    pub t: u64,
    /// `eps_{t+1}`.
    pub eps: bool,
    pub mv: usize,
    /// Environment state consulted at a proper visit.
    pub state: Option<usize>,
    /// `t + 1` is a regeneration time.
    pub regenerated: bool,
}

pub struct Walker<'a, E> {
    spec: &'a ModelSpec,
    env: E,
    residuals: Vec<LocalLaw>,
    coin_seed: u64,
    walk_id: u64,
    eps_threshold: f64,
    position: Site,
    time: u64,
    tracker: RegenTracker,
    taus: Vec<u64>,
    tau_positions: Vec<i64>,
}

impl<'a, E: Environment> Walker<'a, E> {
    pub fn new(spec: &'a ModelSpec, env: E, coin_seed: u64, walk_id: u64) -> Result<Self> {
        Ok(Walker {
            spec,
            env,
            residuals: residual_laws(spec)?,
            coin_seed,
            walk_id,
            eps_threshold: spec.epsilon(),
            position: Site::from_elem(0, spec.dimension()),
            time: 0,
            tracker: RegenTracker::new(),
            taus: Vec::new(),
            tau_positions: Vec::new(),
        })
    }

    /// Pins every `eps` coin to `value`; `None` restores the model's law.
    pub fn force_eps(&mut self, value: Option<bool>) {
        self.eps_threshold = match value {
            None => self.spec.epsilon(),
            Some(true) => 1.0,
            Some(false) => 0.0,
        };
    }

    pub fn position(&self) -> &[i64] {
        &self.position
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn taus(&self) -> &[u64] {
        &self.taus
    }

    pub fn tau_positions(&self) -> &[i64] {
        &self.tau_positions
    }

    pub fn tracker(&self) -> &RegenTracker {
        &self.tracker
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn into_env(self) -> E {
        self.env
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.time;
        let u_eps = RandomTag::walker(self.coin_seed, StreamLabel::Eps, self.walk_id, t + 1).uniform();
        let u_step = RandomTag::walker(self.coin_seed, StreamLabel::Step, self.walk_id, t + 1).uniform();
        let eps = u_eps < self.eps_threshold;
        let (mv, state) = if eps {
            (categorical(self.spec.q().probs(), u_step), None)
        } else {
            let record = self.tracker.record(&self.position).copied();
            let state = self.env.state_for_visit(&self.position, t, record.as_ref())?;
            let mv = categorical(self.residuals[state].probs(), u_step);
            let (env, pos) = (&mut self.env, &self.position);
            self.tracker
                .note_proper_visit(pos, t, state, |t| env.clearance_after(pos, t))?;
            (mv, Some(state))
        };
        if let Some((c, s)) = move_displacement(mv) {
            self.position[c] += s;
        }
        self.time = t + 1;
        let regenerated = self.tracker.check_regeneration(self.time);
        if regenerated {
            self.tracker.regenerate(self.time);
            self.taus.push(self.time);
            self.tau_positions.extend_from_slice(&self.position);
        }
        Ok(StepRecord {
            t,
            eps,
            mv,
            state,
            regenerated,
        })
    }

    /// Steps until the first regeneration after the current time and returns it.
    pub fn run_to_regeneration(&mut self, max_steps: u64) -> Result<u64> {
        let start = self.taus.len();
        for _ in 0..max_steps {
            self.step()?;
            if self.taus.len() > start {
                return Ok(self.time);
            }
        }
        Err(Error::Horizon { scanned: max_steps })
    }

    pub fn blocks(&self) -> Vec<RenewalBlock> {
        extract_blocks(&self.taus, &self.tau_positions, self.spec.dimension())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: u64,
    pub eps: u8,
    #[serde(rename = "move")]
    pub mv: usize,
    pub pos: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub stride: u64,
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn new(stride: u64) -> Self {
        TrajectoryLog {
            stride: stride.max(1),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, step: &StepRecord, pos: &[i64]) {
        if step.t.is_multiple_of(self.stride) {
            self.records.push(LogRecord {
                t: step.t,
                eps: step.eps as u8,
                mv: step.mv,
                pos: pos.to_vec(),
            });
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkRun {
    pub dimension: usize,
    pub n_steps: u64,
    pub final_position: Vec<i64>,
    pub taus: Vec<u64>,
    pub tau_positions: Vec<i64>,
    pub log: Option<TrajectoryLog>,
}

impl WalkRun {
    pub fn blocks(&self) -> Vec<RenewalBlock> {
        extract_blocks(&self.taus, &self.tau_positions, self.dimension)
    }
}

/// Seed of the walkers' coin streams under master `seed`.
pub fn coin_seed(seed: u64) -> u64 {
    derive_seed(seed, "coins", &[])
}

/// Seed of the shared environment under master `seed`.
pub fn env_seed(seed: u64) -> u64 {
    derive_seed(seed, "env", &[])
}

fn drive<E: Environment>(mut w: Walker<'_, E>, n_steps: u64, log_stride: Option<u64>) -> Result<WalkRun> {
    let mut log = log_stride.map(TrajectoryLog::new);
    for _ in 0..n_steps {
        let s = w.step()?;
        if let Some(l) = &mut log {
            l.push(&s, w.position());
        }
    }
    Ok(WalkRun {
        dimension: w.spec.dimension(),
        n_steps,
        final_position: w.position.to_vec(),
        taus: w.taus,
        tau_positions: w.tau_positions,
        log,
    })
}

/// One walk of `n_steps`. Walks with the same `seed` and different `walk_id`
/// share the environment in quenched mode and have independent coins.
pub fn run_walk(
    spec: &ModelSpec,
    seed: u64,
    walk_id: u64,
    n_steps: u64,
    mode: Mode,
    log_stride: Option<u64>,
) -> Result<WalkRun> {
    let coins = coin_seed(seed);
    match mode {
        Mode::AnnealedLazy => {
            let env = LazyEnvironment::new(spec, sequential_rng(seed, "annealed-env", &[walk_id]));
            drive(Walker::new(spec, env, coins, walk_id)?, n_steps, log_stride)
        }
        Mode::QuenchedShared => {
            let env = SharedEnvironment::new(spec, env_seed(seed));
            drive(Walker::new(spec, env, coins, walk_id)?, n_steps, log_stride)
        }
    }
}

/// `tau_1` of walk `walk_id` in annealed mode.
pub fn sample_tau1(spec: &ModelSpec, seed: u64, walk_id: u64, mode: Mode) -> Result<u64> {
    const MAX: u64 = 1 << 40;
    let coins = coin_seed(seed);
    match mode {
        Mode::AnnealedLazy => {
            let env = LazyEnvironment::new(spec, sequential_rng(seed, "annealed-env", &[walk_id]));
            Walker::new(spec, env, coins, walk_id)?.run_to_regeneration(MAX)
        }
        Mode::QuenchedShared => {
            let env = SharedEnvironment::new(spec, derive_seed(seed, "env", &[walk_id]));
            Walker::new(spec, env, coins, walk_id)?.run_to_regeneration(MAX)
        }
    }
}
