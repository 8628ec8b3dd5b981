//! Online regeneration detection and renewal blocks.
//!
//! Convention: at integer time `t` the tracker is asked whether `t` is a
//! regeneration time *before* the departure coin `eps_{t+1}` is drawn. A proper
//! visit at `s` (departure coin `eps_{s+1} = 0`) counts towards every check at
//! times `t > s`, and `t` is a regeneration time iff it exceeds the clearance
//! of every site properly visited since the previous regeneration. The check
//! at `t` never looks at `eps_{t+1}`, so every block, the first included,
//! starts from the same law.

use std::io::Write;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice_env::{Site, SiteRecord};
use crate::stats;

#[derive(Debug, Clone, Default)]
pub struct RegenTracker {
    records: FxHashMap<Site, SiteRecord>,
    max_clearance: u64,
    last_tau: u64,
}

impl RegenTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, site: &[i64]) -> Option<&SiteRecord> {
        self.records.get(site)
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn max_clearance(&self) -> u64 {
        self.max_clearance
    }

    pub fn last_tau(&self) -> u64 {
        self.last_tau
    }

    /// Records a proper visit to `site` at `t` where the walker saw `state`.
    /// `fresh_clearance(t)` is called only when no refresh is pending after `t`.
    pub fn note_proper_visit<F>(
        &mut self,
        site: &[i64],
        t: u64,
        state: usize,
        fresh_clearance: F,
    ) -> Result<()>
    where
        F: FnOnce(u64) -> Result<u64>,
    {
        if t < self.last_tau {
            return Err(Error::OrderingViolation {
                t,
                last_tau: self.last_tau,
            });
        }
        let pending = match self.records.get(site) {
            Some(r) if r.gamma > t => {
                return Err(Error::ContractViolation(format!(
                    "proper visit at {t} precedes recorded visit at {}",
                    r.gamma
                )))
            }
            Some(r) if r.clearance > t => Some(r.clearance),
            _ => None,
        };
        let clearance = match pending {
            Some(c) => c,
            None => {
                let c = fresh_clearance(t)?;
                if c <= t {
                    return Err(Error::ContractViolation(format!(
                        "clearance {c} not after visit {t}"
                    )));
                }
                c
            }
        };
        self.max_clearance = self.max_clearance.max(clearance);
        self.records.insert(
            Site::from_slice(site),
            SiteRecord {
                gamma: t,
                clearance,
                state_at_gamma: state,
            },
        );
        Ok(())
    }

    /// Whether `t` is a regeneration time given the visits noted so far.
    pub fn check_regeneration(&self, t: u64) -> bool {
        t > self.last_tau && t > self.max_clearance
    }

    /// Forget all site records and restart at `t`.
    pub fn regenerate(&mut self, t: u64) {
        self.records.clear();
        self.last_tau = t;
        self.max_clearance = t;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewalBlock {
    pub dtau: u64,
    pub dx: Vec<i64>,
}

/// Cuts `[0, tau_N]` into blocks. `positions` holds `X_{tau_k}` flattened,
/// `d` coordinates per regeneration time.
pub fn extract_blocks(taus: &[u64], positions: &[i64], d: usize) -> Vec<RenewalBlock> {
    assert_eq!(positions.len(), taus.len() * d, "one position per tau");
    let mut out = Vec::with_capacity(taus.len());
    let mut prev_t = 0;
    let mut prev_x = vec![0i64; d];
    for (k, &t) in taus.iter().enumerate() {
        let x = &positions[k * d..(k + 1) * d];
        out.push(RenewalBlock {
            dtau: t - prev_t,
            dx: x.iter().zip(&prev_x).map(|(a, b)| a - b).collect(),
        });
        prev_t = t;
        prev_x.copy_from_slice(x);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub p: f64,
    pub full: f64,
    pub half: f64,
    /// `|half - full| <= 0.1 * full`.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTailStats {
    pub n: usize,
    /// `(t, P(tau > t))` at every distinct sample value.
    pub survival: Vec<(u64, f64)>,
    /// Minus the least-squares slope of `ln P(tau > t)` on `ln t` over the fit
    /// range; infinite if fewer than two integer points have positive survival.
    pub tail_exponent: f64,
    pub fit_range: (u64, u64),
    pub moments: Vec<MomentRow>,
}

pub const MIN_TAU_SAMPLES: usize = 1000;

/// Tail and moment summary of i.i.d. `tau_1` samples. `gamma` adds the
/// `p = gamma - 1/2` moment when finite and above 1/2.
pub fn tau_tail_stats(samples: &[u64], gamma: Option<f64>, fit_range: (u64, u64)) -> Result<TauTailStats> {
    if samples.len() < MIN_TAU_SAMPLES {
        return Err(Error::InsufficientData {
            what: "tau samples",
            needed: MIN_TAU_SAMPLES,
            got: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let exceed = |t: u64| (sorted.len() - sorted.partition_point(|&s| s <= t)) as f64 / n;

    let mut survival = Vec::new();
    for (i, &t) in sorted.iter().enumerate() {
        if i + 1 == sorted.len() || sorted[i + 1] != t {
            survival.push((t, exceed(t)));
        }
    }

    let pts: Vec<(f64, f64)> = (fit_range.0..=fit_range.1)
        .filter_map(|t| {
            let s = exceed(t);
            (s > 0.0).then(|| ((t as f64).ln(), s.ln()))
        })
        .collect();
    let tail_exponent = if pts.len() < 2 {
        f64::INFINITY
    } else {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        -sxy / sxx
    };

    let mut ps = vec![1.0, 2.0];
    if let Some(g) = gamma.filter(|g| g.is_finite() && *g > 0.5) {
        ps.push(g - 0.5);
    }
    let moment = |xs: &[u64], p: f64| xs.iter().map(|&x| (x as f64).powf(p)).sum::<f64>() / xs.len() as f64;
    let half = &samples[..samples.len() / 2];
    let moments = ps
        .into_iter()
        .map(|p| {
            let full = moment(samples, p);
            let h = moment(half, p);
            MomentRow {
                p,
                full,
                half: h,
                stable: (h - full).abs() <= 0.1 * full,
            }
        })
        .collect();

    Ok(TauTailStats {
        n: samples.len(),
        survival,
        tail_exponent,
        fit_range,
        moments,
    })
}

/// `dtau` followed by each `dx` coordinate, as float series.
pub fn block_series(blocks: &[RenewalBlock]) -> Vec<Vec<f64>> {
    let d = blocks.first().map_or(0, |b| b.dx.len());
    let mut out = vec![blocks.iter().map(|b| b.dtau as f64).collect::<Vec<_>>()];
    for c in 0..d {
        out.push(blocks.iter().map(|b| b.dx[c] as f64).collect());
    }
    out
}

pub fn write_blocks_csv<W: Write>(w: W, replicas: &[(u64, &[RenewalBlock])], d: usize) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["replica".to_string(), "block_index".into(), "dtau".into()];
    header.extend((1..=d).map(|i| format!("dx_{i}")));
    wr.write_record(&header).map_err(io_err)?;
    for (replica, blocks) in replicas {
        for (k, b) in blocks.iter().enumerate() {
            let mut row = vec![replica.to_string(), k.to_string(), b.dtau.to_string()];
            row.extend(b.dx.iter().map(|x| x.to_string()));
            wr.write_record(&row).map_err(io_err)?;
        }
    }
    wr.flush().map_err(|e| Error::Config(e.to_string()))
}

/// Reads `blocks.csv` back as `(replica, block)` pairs in file order.
pub fn read_blocks_csv<R: std::io::Read>(r: R) -> Result<(usize, Vec<(u64, RenewalBlock)>)> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(io_err)?.clone();
    let d = headers.iter().filter(|h| h.starts_with("dx_")).count();
    if headers.len() != 3 + d || &headers[0] != "replica" || &headers[2] != "dtau" {
        return Err(Error::Config(format!("unexpected blocks.csv header {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(io_err)?;
        let parse = |i: usize| -> Result<i64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("bad integer {:?} in blocks.csv", &rec[i])))
        };
        let dtau = parse(2)?;
        if dtau <= 0 {
            return Err(Error::Config(format!("non-positive dtau {dtau}")));
        }
        out.push((
            parse(0)? as u64,
            RenewalBlock {
                dtau: dtau as u64,
                dx: (3..3 + d).map(parse).collect::<Result<_>>()?,
            },
        ));
    }
    Ok((d, out))
}

/// `(replica, tau_1)` rows.
pub fn write_tau_samples_csv<W: Write>(w: W, taus: &[(u64, u64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["replica", "tau1"]).map_err(io_err)?;
    for (i, t) in taus {
        wr.write_record([i.to_string(), t.to_string()]).map_err(io_err)?;
    }
    wr.flush().map_err(|e| Error::Config(e.to_string()))
}

fn io_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Lag-1 autocorrelation of every block series, for quick checks.
pub fn lag1(blocks: &[RenewalBlock]) -> Vec<f64> {
    block_series(blocks)
        .iter()
        .map(|s| stats::autocorrelation(s, 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn never(_: u64) -> Result<u64> {
        panic!("no fresh clearance expected")
    }

    #[test]
    fn pending_refresh_retained() {
        let mut tr = RegenTracker::new();
        tr.note_proper_visit(&[0], 3, 0, |_| Ok(12)).unwrap();
        tr.note_proper_visit(&[0], 8, 1, never).unwrap();
        let r = tr.record(&[0]).unwrap();
        assert_eq!((r.gamma, r.clearance, r.state_at_gamma), (8, 12, 1));
    }

    #[test]
    fn expired_refresh_resampled() {
        let mut tr = RegenTracker::new();
        tr.note_proper_visit(&[0], 3, 0, |_| Ok(12)).unwrap();
        tr.note_proper_visit(&[0], 15, 0, |t| Ok(t + 4)).unwrap();
        assert_eq!(tr.record(&[0]).unwrap().clearance, 19);
        assert_eq!(tr.max_clearance(), 19);
    }

    #[test]
    fn first_visit_creates_record() {
        let mut tr = RegenTracker::new();
        assert!(tr.record(&[2, -1]).is_none());
        tr.note_proper_visit(&[2, -1], 5, 1, |t| Ok(t + 1)).unwrap();
        assert_eq!(tr.record(&[2, -1]).unwrap().gamma, 5);
    }

    #[test]
    fn check_against_max_clearance() {
        let mut tr = RegenTracker::new();
        tr.note_proper_visit(&[0], 1, 0, |_| Ok(5)).unwrap();
        tr.note_proper_visit(&[1], 2, 0, |_| Ok(9)).unwrap();
        assert!(tr.check_regeneration(10));
        assert!(!tr.check_regeneration(9));
        assert!(RegenTracker::new().check_regeneration(1));
        assert!(!RegenTracker::new().check_regeneration(0));
    }

    #[test]
    fn regenerate_resets() {
        let mut tr = RegenTracker::new();
        tr.note_proper_visit(&[0], 1, 0, |_| Ok(5)).unwrap();
        tr.regenerate(6);
        assert_eq!(tr.n_records(), 0);
        assert_eq!(tr.max_clearance(), 6);
        assert!(!tr.check_regeneration(6));
        assert!(tr.check_regeneration(7));
        // a proper visit at the regeneration time itself is allowed
        tr.note_proper_visit(&[0], 6, 0, |t| Ok(t + 1)).unwrap();
        assert_eq!(
            tr.note_proper_visit(&[0], 5, 0, |t| Ok(t + 1)),
            Err(Error::OrderingViolation { t: 5, last_tau: 6 })
        );
    }

    #[test]
    fn bad_clearance_rejected() {
        let mut tr = RegenTracker::new();
        assert!(matches!(
            tr.note_proper_visit(&[0], 4, 0, |t| Ok(t)),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn block_partition_examples() {
        let b = extract_blocks(&[3, 7], &[1, 1], 1);
        assert_eq!(
            b,
            vec![
                RenewalBlock { dtau: 3, dx: vec![1] },
                RenewalBlock { dtau: 4, dx: vec![0] }
            ]
        );
        let b = extract_blocks(&[1], &[-1, 0], 2);
        assert_eq!(b, vec![RenewalBlock { dtau: 1, dx: vec![-1, 0] }]);
        assert!(extract_blocks(&[], &[], 3).is_empty());
    }

    #[test]
    fn tail_stats_for_constant_samples() {
        let s = tau_tail_stats(&[1; 1000], None, (10, 100)).unwrap();
        assert_eq!(s.tail_exponent, f64::INFINITY);
        assert!(s.moments.iter().all(|m| m.full == 1.0 && m.stable));
        assert_eq!(s.survival, vec![(1, 0.0)]);
        assert!(tau_tail_stats(&[1; 999], None, (10, 100)).is_err());
    }

    #[test]
    fn tail_exponent_of_pareto_like_samples() {
        // P(tau > t) = t^-3 exactly on a grid of quantiles
        let n = 100_000;
        let xs: Vec<u64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                u.powf(-1.0 / 3.0).ceil() as u64
            })
            .collect();
        let s = tau_tail_stats(&xs, Some(4.0), (2, 20)).unwrap();
        assert!((s.tail_exponent - 3.0).abs() < 0.1, "{}", s.tail_exponent);
        assert_eq!(s.moments.len(), 3);
        assert_eq!(s.moments[2].p, 3.5);
    }

    #[test]
    fn csv_round_trip() {
        let blocks = vec![
            RenewalBlock { dtau: 3, dx: vec![1, -2] },
            RenewalBlock { dtau: 1, dx: vec![0, 0] },
        ];
        let mut buf = Vec::new();
        write_blocks_csv(&mut buf, &[(0, &blocks), (4, &blocks[..1])], 2).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("replica,block_index,dtau,dx_1,dx_2\n0,0,3,1,-2\n"));
        let (d, back) = read_blocks_csv(&buf[..]).unwrap();
        assert_eq!(d, 2);
        assert_eq!(back.len(), 3);
        assert_eq!(back[2], (4, blocks[0].clone()));

        let mut buf = Vec::new();
        write_tau_samples_csv(&mut buf, &[(0, 2), (3, 5)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "replica,tau1\n0,2\n3,5\n");
    }
}
