//! Synthetic event-log generation with planted communities.
//!
//! Scenarios plant harvester communities with dedicated spam-server
//! pools, per-community temporal activity profiles, phisher roles, and
//! optionally coordinated groups that emit emails from one shared
//! schedule (small per-event jitter) and live inside one /24 prefix.
//! The generator is fully deterministic given the seed, so scenario
//! outputs serve as reproducible ground-truth oracles.
//!
//! All addresses come from reserved benchmarking ranges (198.18.0.0/15),
//! never from allocated space.

use crate::ingest::{EmailEvent, YearMonth};
use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: u32,
    pub max: u32,
}

impl IntRange {
    pub fn fixed(v: u32) -> Self {
        Self { min: v, max: v }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> u32 {
        rng.gen_range(self.min..=self.max)
    }
}

fn default_jitter_secs() -> u32 {
    60
}

/// A subset of one community emitting emails on a shared schedule from a
/// common /24 prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatedGroup {
    pub community: usize,
    pub size: usize,
    /// Per-event timestamp jitter bound in seconds (at most 300).
    #[serde(default = "default_jitter_secs")]
    pub jitter_secs: u32,
}

fn default_global_servers() -> usize {
    50
}

fn default_month() -> YearMonth {
    "2006-10".parse().expect("static month")
}

/// Scenario description; see [`ScenarioConfig::validate`] for the
/// invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Number of planted communities.
    pub communities: usize,
    pub harvesters_per_community: IntRange,
    /// Dedicated spam-server pool size per community.
    pub servers_per_community: usize,
    /// Shared pool used with probability 1 - p_in - p_out.
    #[serde(default = "default_global_servers")]
    pub global_servers: usize,
    /// Probability an email uses the harvester's own community pool.
    pub p_in: f64,
    /// Probability of borrowing another community's pool.
    pub p_out: f64,
    pub phisher_communities: Vec<usize>,
    pub emails_per_harvester: IntRange,
    /// Per-community hour-of-day activity weights (24 entries each,
    /// cycled if fewer profiles than communities). Empty selects
    /// built-in staggered diurnal profiles.
    #[serde(default)]
    pub temporal_profile: Vec<Vec<f64>>,
    #[serde(default)]
    pub coordinated_groups: Vec<CoordinatedGroup>,
    pub seed: u64,
    #[serde(default = "default_month")]
    pub month: YearMonth,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            communities: 5,
            harvesters_per_community: IntRange::fixed(40),
            servers_per_community: 25,
            global_servers: 50,
            p_in: 0.8,
            p_out: 0.05,
            phisher_communities: vec![0, 1],
            emails_per_harvester: IntRange::fixed(200),
            temporal_profile: Vec::new(),
            coordinated_groups: vec![CoordinatedGroup {
                community: 2,
                size: 10,
                jitter_secs: default_jitter_secs(),
            }],
            seed: 20061001,
            month: default_month(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.communities == 0 || self.communities > 64 {
            return err(format!("communities {} outside 1..=64", self.communities));
        }
        for (name, r) in [
            ("harvesters_per_community", self.harvesters_per_community),
            ("emails_per_harvester", self.emails_per_harvester),
        ] {
            if r.min == 0 || r.min > r.max {
                return err(format!("{name} range {}..={} is empty or zero", r.min, r.max));
            }
        }
        if self.harvesters_per_community.max > 254 {
            return err("harvesters_per_community.max exceeds 254 (one /24 per community)".into());
        }
        if self.servers_per_community == 0 || self.servers_per_community > 254 {
            return err(format!(
                "servers_per_community {} outside 1..=254",
                self.servers_per_community
            ));
        }
        if self.global_servers > 254 {
            return err(format!("global_servers {} exceeds 254", self.global_servers));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return err("p_in and p_out must lie in [0, 1]".into());
        }
        if self.p_in + self.p_out > 1.0 {
            return err(format!(
                "p_in + p_out = {} exceeds 1",
                self.p_in + self.p_out
            ));
        }
        if self.p_in + self.p_out < 1.0 && self.global_servers == 0 {
            return err("residual server mass requires global_servers >= 1".into());
        }
        if self.communities == 1 && self.p_out > 0.0 {
            return err("p_out > 0 needs at least 2 communities".into());
        }
        for &c in &self.phisher_communities {
            if c >= self.communities {
                return err(format!("phisher community {c} out of range"));
            }
        }
        if self.coordinated_groups.len() > 54 {
            return err("at most 54 coordinated groups supported".into());
        }
        let mut taken = vec![0usize; self.communities];
        for g in &self.coordinated_groups {
            if g.community >= self.communities {
                return err(format!("coordinated group community {} out of range", g.community));
            }
            if g.size < 2 {
                return err("coordinated group needs at least 2 members".into());
            }
            if g.jitter_secs > 300 {
                return err(format!(
                    "coordinated jitter {}s exceeds the 300s bound",
                    g.jitter_secs
                ));
            }
            taken[g.community] += g.size;
            if taken[g.community] > self.harvesters_per_community.min as usize {
                return err(format!(
                    "coordinated members ({}) exceed the guaranteed community size ({})",
                    taken[g.community], self.harvesters_per_community.min
                ));
            }
        }
        for (i, profile) in self.temporal_profile.iter().enumerate() {
            if profile.len() != 24 {
                return err(format!("temporal_profile[{i}] must have 24 hour weights"));
            }
            if profile.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return err(format!("temporal_profile[{i}] has a negative or non-finite weight"));
            }
            if profile.iter().sum::<f64>() <= 0.0 {
                return err(format!("temporal_profile[{i}] has no positive weight"));
            }
        }
        Ok(())
    }
}

/// Planted truth for one harvester.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvesterTruth {
    pub community: usize,
    pub phisher: bool,
    pub coordinated_group: Option<usize>,
}

/// Ground truth emitted next to a generated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub month: YearMonth,
    pub communities: usize,
    pub harvesters: BTreeMap<Ipv4Addr, HarvesterTruth>,
}

impl GroundTruth {
    /// Planted community ids aligned with the given harvester order.
    pub fn communities_for(&self, ips: &[Ipv4Addr]) -> Option<Vec<usize>> {
        ips.iter()
            .map(|ip| self.harvesters.get(ip).map(|t| t.community))
            .collect()
    }

    /// Phisher flags aligned with the given harvester order.
    pub fn phishers_for(&self, ips: &[Ipv4Addr]) -> Option<Vec<bool>> {
        ips.iter()
            .map(|ip| self.harvesters.get(ip).map(|t| t.phisher))
            .collect()
    }

    /// Members of each coordinated group, keyed by group id.
    pub fn coordinated_members(&self) -> BTreeMap<usize, Vec<Ipv4Addr>> {
        let mut out: BTreeMap<usize, Vec<Ipv4Addr>> = BTreeMap::new();
        for (ip, t) in &self.harvesters {
            if let Some(g) = t.coordinated_group {
                out.entry(g).or_default().push(*ip);
            }
        }
        out
    }
}

/// Subjects guaranteed to trip the default phishing keywords.
const PHISHING_SUBJECTS: &[&str] = &[
    "Verify your PayPal account",
    "Your account has been suspended",
    "Password reset required",
    "Chase online banking alert",
    "Confirm your bank details",
    "Account verification needed",
    "PayPal security notice",
    "Update your password now",
];

/// Subjects free of every default phishing keyword.
const BENIGN_SUBJECTS: &[&str] = &[
    "Cheap watches for sale",
    "Hot stock tips inside",
    "You won the lottery",
    "Limited time offer",
    "Best meds online",
    "Work from home today",
    "New replica catalog",
    "Lose weight fast",
];

/// Per-email probability of a phishing subject for harvesters in phisher
/// communities (and its complement's counterpart below). The split keeps
/// realized phishing levels pinned near 1 and 0 respectively.
const PHISHER_SUBJECT_P: f64 = 0.97;
const NON_PHISHER_SUBJECT_P: f64 = 0.03;

fn harvester_ip(community: usize, member: usize) -> Ipv4Addr {
    Ipv4Addr::new(198, 18, community as u8, member as u8 + 1)
}

fn coordinated_ip(group: usize, member: usize) -> Ipv4Addr {
    Ipv4Addr::new(198, 18, 200 + group as u8, member as u8 + 1)
}

fn community_server_ip(community: usize, server: usize) -> Ipv4Addr {
    Ipv4Addr::new(198, 19, community as u8, server as u8 + 1)
}

fn global_server_ip(server: usize) -> Ipv4Addr {
    Ipv4Addr::new(198, 19, 254, server as u8 + 1)
}

/// Built-in diurnal profile with a community-specific peak hour.
fn default_profile(community: usize) -> Vec<f64> {
    let peak = (3 + 5 * community) % 24;
    (0..24)
        .map(|h| {
            let d = (h as i64 - peak as i64).rem_euclid(24).min((peak as i64 - h as i64).rem_euclid(24)) as f64;
            1.0 + 6.0 * (-d * d / 18.0).exp()
        })
        .collect()
}

fn sample_weighted(weights: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        target -= w;
        if target <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

fn sample_instant(
    month: &YearMonth,
    profile: &[f64],
    rng: &mut ChaCha20Rng,
) -> DateTime<Utc> {
    let day = rng.gen_range(0..month.days());
    let hour = sample_weighted(profile, rng) as u32;
    let minute = rng.gen_range(0..60u32);
    let second = rng.gen_range(0..60u32);
    month.start()
        + Duration::days(day as i64)
        + Duration::hours(hour as i64)
        + Duration::minutes(minute as i64)
        + Duration::seconds(second as i64)
}

fn clamp_to_month(ts: DateTime<Utc>, month: &YearMonth) -> DateTime<Utc> {
    let lo = month.start();
    let hi = month.end_exclusive() - Duration::seconds(1);
    ts.max(lo).min(hi)
}

struct HarvesterPlan {
    ip: Ipv4Addr,
    community: usize,
    phisher: bool,
    coordinated_group: Option<usize>,
}

/// Generates a scenario's event log and ground truth. Deterministic for
/// a given config (including the seed); events come out sorted by
/// timestamp with tie-breaking on harvester, server, and subject.
pub fn generate_scenario(
    config: &ScenarioConfig,
) -> Result<(Vec<EmailEvent>, GroundTruth), SynthError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);

    let profiles: Vec<Vec<f64>> = (0..config.communities)
        .map(|c| {
            if config.temporal_profile.is_empty() {
                default_profile(c)
            } else {
                config.temporal_profile[c % config.temporal_profile.len()].clone()
            }
        })
        .collect();

    // community sizes first, then a deterministic member layout
    let sizes: Vec<usize> = (0..config.communities)
        .map(|_| config.harvesters_per_community.sample(&mut rng) as usize)
        .collect();

    let mut plans: Vec<HarvesterPlan> = Vec::new();
    let mut coordinated_taken = vec![0usize; config.communities];
    let mut group_assignment: Vec<Vec<(usize, usize)>> = vec![Vec::new(); config.communities];
    for (gid, group) in config.coordinated_groups.iter().enumerate() {
        let start = coordinated_taken[group.community];
        group_assignment[group.community].push((gid, start));
        coordinated_taken[group.community] += group.size;
    }
    for c in 0..config.communities {
        let phisher = config.phisher_communities.contains(&c);
        let mut member_group = vec![None; sizes[c]];
        let mut group_member_idx = vec![0usize; config.coordinated_groups.len()];
        for &(gid, start) in &group_assignment[c] {
            for m in 0..config.coordinated_groups[gid].size {
                member_group[start + m] = Some(gid);
            }
        }
        for m in 0..sizes[c] {
            let (ip, coordinated_group) = match member_group[m] {
                Some(gid) => {
                    let idx = group_member_idx[gid];
                    group_member_idx[gid] += 1;
                    (coordinated_ip(gid, idx), Some(gid))
                }
                None => (harvester_ip(c, m), None),
            };
            plans.push(HarvesterPlan {
                ip,
                community: c,
                phisher,
                coordinated_group,
            });
        }
    }

    // shared schedules for coordinated groups
    let mut templates: Vec<Vec<DateTime<Utc>>> = Vec::new();
    for group in &config.coordinated_groups {
        let len = config.emails_per_harvester.sample(&mut rng) as usize;
        let mut instants: Vec<DateTime<Utc>> = (0..len)
            .map(|_| sample_instant(&config.month, &profiles[group.community], &mut rng))
            .collect();
        instants.sort_unstable();
        templates.push(instants);
    }

    let mut events: Vec<EmailEvent> = Vec::new();
    for plan in &plans {
        let subject_p = if plan.phisher {
            PHISHER_SUBJECT_P
        } else {
            NON_PHISHER_SUBJECT_P
        };
        let schedule: Vec<DateTime<Utc>> = match plan.coordinated_group {
            Some(gid) => {
                let jitter = config.coordinated_groups[gid].jitter_secs as i64;
                templates[gid]
                    .iter()
                    .map(|&t| {
                        let offset = if jitter == 0 {
                            0
                        } else {
                            rng.gen_range(-jitter..=jitter)
                        };
                        clamp_to_month(t + Duration::seconds(offset), &config.month)
                    })
                    .collect()
            }
            None => {
                let n = config.emails_per_harvester.sample(&mut rng) as usize;
                (0..n)
                    .map(|_| sample_instant(&config.month, &profiles[plan.community], &mut rng))
                    .collect()
            }
        };

        for ts in schedule {
            let r: f64 = rng.gen();
            let server_ip = if r < config.p_in {
                community_server_ip(
                    plan.community,
                    rng.gen_range(0..config.servers_per_community),
                )
            } else if r < config.p_in + config.p_out {
                let mut other = rng.gen_range(0..config.communities - 1);
                if other >= plan.community {
                    other += 1;
                }
                community_server_ip(other, rng.gen_range(0..config.servers_per_community))
            } else {
                global_server_ip(rng.gen_range(0..config.global_servers))
            };
            let subject = if rng.gen::<f64>() < subject_p {
                PHISHING_SUBJECTS[rng.gen_range(0..PHISHING_SUBJECTS.len())]
            } else {
                BENIGN_SUBJECTS[rng.gen_range(0..BENIGN_SUBJECTS.len())]
            };
            events.push(EmailEvent {
                timestamp: ts,
                harvester_ip: plan.ip,
                server_ip,
                subject: subject.to_string(),
                addresses_acquired_delta: 0,
            });
        }
    }

    events.sort_by(|a, b| {
        (a.timestamp, a.harvester_ip, a.server_ip, &a.subject)
            .cmp(&(b.timestamp, b.harvester_ip, b.server_ip, &b.subject))
    });

    let truth = GroundTruth {
        month: config.month,
        communities: config.communities,
        harvesters: plans
            .iter()
            .map(|p| {
                (
                    p.ip,
                    HarvesterTruth {
                        community: p.community,
                        phisher: p.phisher,
                        coordinated_group: p.coordinated_group,
                    },
                )
            })
            .collect(),
    };
    Ok((events, truth))
}

/// Writes events in the ingest CSV schema (without the optional delta
/// column).
pub fn write_events_csv<W: Write>(events: &[EmailEvent], out: W) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["timestamp", "harvester_ip", "server_ip", "subject"])?;
    for ev in events {
        wtr.write_record([
            ev.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            ev.harvester_ip.to_string(),
            ev.server_ip.to_string(),
            ev.subject.clone(),
        ])?;
    }
    wtr.flush()
}
