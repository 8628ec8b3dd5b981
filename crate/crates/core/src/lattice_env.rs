//! Per-site environment chains, materialised lazily.
//!
//! Each site runs the chain "with probability kappa redraw from pi, otherwise
//! take a residual-kernel step". Two exact representations are provided:
//!
//! * [`LazyEnvironment`] serves a single annealed walk. It never stores coin
//!   histories: a refresh time is sampled when the walker leaves a site
//!   ([`sample_clearance`]) and the state at the next visit is drawn from the
//!   right power of the residual kernel ([`fast_forward`]).
//! * [`SharedEnvironment`] is a pure function of `(seed, site, time)`
//!   ([`env_state_replay`]) so several walkers can share one realisation.

use rand::{Rng, RngExt};
use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, StochasticMatrix};
use crate::rng::categorical;
pub use crate::rng::{RandomTag, StreamLabel};

/// Lattice site key.
pub type Site = SmallVec<[i64; 8]>;

/// Largest fast-forward gap is `2^POWER_CEILING`.
pub const POWER_CEILING: u32 = 40;

/// Per-site bookkeeping for sites the walker has learned about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteRecord {
    /// Time of the last proper visit.
    pub gamma: u64,
    /// First refresh strictly after `gamma`.
    pub clearance: u64,
    pub state_at_gamma: usize,
}

/// Refresh coin `alpha_t(x)`, defined for `t >= 1`.
#[inline]
pub fn alpha_coin(seed: u64, kappa: f64, site: &[i64], t: u64) -> bool {
    RandomTag::env(seed, StreamLabel::Alpha, site, t).uniform() < kappa
}

#[inline]
fn pi_draw(spec: &ModelSpec, seed: u64, label: StreamLabel, site: &[i64], t: u64) -> usize {
    categorical(spec.pi(), RandomTag::env(seed, label, site, t).uniform())
}

#[inline]
fn ktilde_step(spec: &ModelSpec, seed: u64, site: &[i64], t: u64, state: usize) -> usize {
    let row = spec.ktilde().row(state);
    if row[state] == 1.0 {
        return state;
    }
    categorical(row, RandomTag::env(seed, StreamLabel::Ktilde, site, t).uniform())
}

/// Outcome of a replay, with the number of alpha coins inspected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replay {
    pub state: usize,
    pub scanned: u64,
}

/// State of site `x` at time `t` in the environment labelled `seed`.
pub fn env_state_replay(seed: u64, spec: &ModelSpec, site: &[i64], t: u64) -> usize {
    replay_from(seed, spec, site, t, None).state
}

/// Replay that may resume from a known `(time, state)` of the same site with
/// `time <= t`. The result is identical to a replay from scratch.
pub fn replay_from(
    seed: u64,
    spec: &ModelSpec,
    site: &[i64],
    t: u64,
    known: Option<(u64, usize)>,
) -> Replay {
    let known = known.filter(|&(t0, _)| t0 <= t);
    if let Some((t0, s0)) = known {
        if t0 == t {
            return Replay {
                state: s0,
                scanned: 0,
            };
        }
    }
    let floor = known.map_or(0, |(t0, _)| t0);
    let kappa = spec.kappa();
    let mut u = t;
    let mut scanned = 0;
    while u > floor {
        scanned += 1;
        if alpha_coin(seed, kappa, site, u) {
            break;
        }
        u -= 1;
    }
    let (start, mut state) = if u > floor {
        (u, pi_draw(spec, seed, StreamLabel::Pi, site, u))
    } else {
        match known {
            Some(k) => k,
            None => (0, pi_draw(spec, seed, StreamLabel::Init, site, 0)),
        }
    };
    for w in start + 1..=t {
        state = ktilde_step(spec, seed, site, w, state);
    }
    Replay { state, scanned }
}

/// First `u > t` with `alpha_u(x) = 1`.
pub fn next_refresh(seed: u64, kappa: f64, site: &[i64], t: u64) -> Result<u64> {
    let limit = t.saturating_add(1u64 << POWER_CEILING);
    let mut u = t + 1;
    while !alpha_coin(seed, kappa, site, u) {
        u += 1;
        if u > limit {
            return Err(Error::Horizon { scanned: u - t });
        }
    }
    Ok(u)
}

/// `t_visit + G`, `G` geometric on `{1, 2, ...}` with success probability `kappa`.
pub fn sample_clearance<R: Rng + ?Sized>(t_visit: u64, kappa: f64, rng: &mut R) -> Result<u64> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Domain(format!("kappa = {kappa} outside (0, 1]")));
    }
    if kappa == 1.0 {
        return Ok(t_visit + 1);
    }
    // 1 - U lies in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    let g = (u.ln() / (1.0 - kappa).ln()).floor();
    if g >= (1u64 << 62) as f64 {
        return Err(Error::Config("geometric draw overflows".into()));
    }
    Ok(t_visit + 1 + g as u64)
}

/// Binary powers `K~^(2^j)`, built on demand.
#[derive(Debug, Clone)]
pub struct PowerCache {
    powers: Vec<StochasticMatrix>,
}

impl PowerCache {
    pub fn new(ktilde: &StochasticMatrix) -> Self {
        PowerCache {
            powers: vec![ktilde.clone()],
        }
    }

    pub fn power(&mut self, j: u32) -> &StochasticMatrix {
        while self.powers.len() <= j as usize {
            let last = self.powers.last().expect("non-empty");
            let next = last.mul(last);
            self.powers.push(next);
        }
        &self.powers[j as usize]
    }

    /// Row `state` of `K~^gap`.
    pub fn row_after(&mut self, state: usize, gap: u64) -> Result<Vec<f64>> {
        if gap > 1u64 << POWER_CEILING {
            return Err(Error::Config(format!(
                "fast-forward gap {gap} exceeds 2^{POWER_CEILING}"
            )));
        }
        let n = self.powers[0].size();
        let mut v = vec![0.0; n];
        v[state] = 1.0;
        let mut j = 0;
        let mut g = gap;
        while g > 0 {
            if g & 1 == 1 {
                v = self.power(j).left_apply(&v);
            }
            g >>= 1;
            j += 1;
        }
        Ok(v)
    }
}

/// State at `t_target` of a site last seen at `record.gamma`.
pub fn fast_forward<R: Rng + ?Sized>(
    record: &SiteRecord,
    t_target: u64,
    spec: &ModelSpec,
    cache: &mut PowerCache,
    rng: &mut R,
) -> Result<usize> {
    if t_target <= record.gamma {
        return Err(Error::ContractViolation(format!(
            "fast_forward target {t_target} not after last visit {}",
            record.gamma
        )));
    }
    if t_target >= record.clearance {
        return Ok(categorical(spec.pi(), rng.random()));
    }
    let row = cache.row_after(record.state_at_gamma, t_target - record.gamma)?;
    Ok(categorical(&row, rng.random()))
}

/// What the walker needs from an environment at a proper visit.
pub trait Environment {
    /// `omega_t(x)` as a state index. `record` is the walker's bookkeeping
    /// for `x` since the last regeneration, if any.
    fn state_for_visit(&mut self, site: &[i64], t: u64, record: Option<&SiteRecord>)
        -> Result<usize>;

    /// First refresh of `x` strictly after `t`.
    fn clearance_after(&mut self, site: &[i64], t: u64) -> Result<u64>;
}

/// Deferred-decision environment for one annealed walk.
pub struct LazyEnvironment<'a, R> {
    spec: &'a ModelSpec,
    cache: PowerCache,
    rng: R,
}

impl<'a, R: Rng> LazyEnvironment<'a, R> {
    pub fn new(spec: &'a ModelSpec, rng: R) -> Self {
        LazyEnvironment {
            spec,
            cache: PowerCache::new(spec.ktilde()),
            rng,
        }
    }
}

impl<R: Rng> Environment for LazyEnvironment<'_, R> {
    fn state_for_visit(
        &mut self,
        _site: &[i64],
        t: u64,
        record: Option<&SiteRecord>,
    ) -> Result<usize> {
        match record {
            // unseen since the last regeneration: stationary and independent
            None => Ok(categorical(self.spec.pi(), self.rng.random())),
            Some(r) => fast_forward(r, t, self.spec, &mut self.cache, &mut self.rng),
        }
    }

    fn clearance_after(&mut self, _site: &[i64], t: u64) -> Result<u64> {
        sample_clearance(t, self.spec.kappa(), &mut self.rng)
    }
}

/// A replayable environment realisation, shareable between walkers by seed.
pub struct SharedEnvironment<'a> {
    spec: &'a ModelSpec,
    seed: u64,
    memo: Option<FxHashMap<Site, (u64, usize)>>,
    log: Option<Vec<(Site, u64, usize)>>,
}

impl<'a> SharedEnvironment<'a> {
    pub fn new(spec: &'a ModelSpec, seed: u64) -> Self {
        SharedEnvironment {
            spec,
            seed,
            memo: Some(FxHashMap::default()),
            log: None,
        }
    }

    /// Every query answered from scratch.
    pub fn without_memo(mut self) -> Self {
        self.memo = None;
        self
    }

    /// Record every `(site, time, state)` answered.
    pub fn with_query_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn query_log(&self) -> &[(Site, u64, usize)] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&mut self, site: &[i64], t: u64) -> usize {
        let state = match &mut self.memo {
            None => env_state_replay(self.seed, self.spec, site, t),
            Some(memo) => {
                let known = memo.get(site).copied();
                let r = replay_from(self.seed, self.spec, site, t, known);
                if known.is_none_or(|(t0, _)| t0 < t) {
                    memo.insert(Site::from_slice(site), (t, r.state));
                }
                r.state
            }
        };
        if let Some(log) = &mut self.log {
            log.push((Site::from_slice(site), t, state));
        }
        state
    }
}

impl Environment for SharedEnvironment<'_> {
    fn state_for_visit(
        &mut self,
        site: &[i64],
        t: u64,
        _record: Option<&SiteRecord>,
    ) -> Result<usize> {
        Ok(self.state(site, t))
    }

    fn clearance_after(&mut self, site: &[i64], t: u64) -> Result<u64> {
        next_refresh(self.seed, self.spec.kappa(), site, t)
    }
}
