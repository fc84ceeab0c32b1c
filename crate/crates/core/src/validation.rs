//! Partition validation: pair-counting agreement indices, temporal
//! correlation of harvester groups, IP-prefix grouping, and per-cluster
//! phishing purity.
//!
//! The Rand index is computed from exhaustive pair counts; the adjusted
//! Rand index is corrected for chance under the permutation model via
//! the contingency table. Both have exact rational forms so independent
//! computation routes can be compared bit-for-bit.

use crate::phishing::PhisherLabel;
use crate::similarity::CoincidenceMatrix;
use crate::spectral::Partition;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::net::Ipv4Addr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("labels cover {labels} nodes but partition covers {clusters}")]
    LengthMismatch { labels: usize, clusters: usize },
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("group needs at least 2 rows with nonzero variance, {usable} usable of {total}")]
    GroupTooSmall { usable: usize, total: usize },
    #[error("prefix bits {0} outside 1..=32")]
    InvalidPrefixBits(u8),
    #[error("group member {0} outside matrix rows")]
    RowOutOfRange(usize),
}

/// Pair classification counts between a labeling and a clustering:
/// `a` same label + same cluster, `b` same label + different cluster,
/// `c` different label + same cluster, `d` different label + different
/// cluster. They always total M(M-1)/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

fn check_lengths<L>(labels: &[L], clusters: &[usize]) -> Result<(), ValidationError> {
    if labels.len() != clusters.len() {
        return Err(ValidationError::LengthMismatch {
            labels: labels.len(),
            clusters: clusters.len(),
        });
    }
    if labels.len() < 2 {
        return Err(ValidationError::TooFewNodes(labels.len()));
    }
    Ok(())
}

fn choose2(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Contingency table of label class vs cluster id, with marginals.
struct Contingency {
    cells: Vec<u64>,
    label_marginals: Vec<u64>,
    cluster_marginals: Vec<u64>,
    n: u64,
}

fn contingency<L: Eq + Hash>(labels: &[L], clusters: &[usize]) -> Contingency {
    let mut label_ids: HashMap<&L, usize> = HashMap::new();
    let mut label_of = Vec::with_capacity(labels.len());
    for l in labels {
        let next = label_ids.len();
        label_of.push(*label_ids.entry(l).or_insert(next));
    }
    let mut cluster_ids: HashMap<usize, usize> = HashMap::new();
    let mut cluster_of = Vec::with_capacity(clusters.len());
    for &c in clusters {
        let next = cluster_ids.len();
        cluster_of.push(*cluster_ids.entry(c).or_insert(next));
    }
    let (nl, nc) = (label_ids.len(), cluster_ids.len());
    let mut cells = vec![0u64; nl * nc];
    let mut label_marginals = vec![0u64; nl];
    let mut cluster_marginals = vec![0u64; nc];
    for (&l, &c) in label_of.iter().zip(&cluster_of) {
        cells[l * nc + c] += 1;
        label_marginals[l] += 1;
        cluster_marginals[c] += 1;
    }
    Contingency {
        cells,
        label_marginals,
        cluster_marginals,
        n: labels.len() as u64,
    }
}

/// Pair counts via the contingency table (the fast path).
pub fn pair_counts<L: Eq + Hash>(
    labels: &[L],
    clusters: &[usize],
) -> Result<PairCounts, ValidationError> {
    check_lengths(labels, clusters)?;
    let t = contingency(labels, clusters);
    let a: u64 = t.cells.iter().map(|&n| choose2(n)).sum();
    let same_label: u64 = t.label_marginals.iter().map(|&n| choose2(n)).sum();
    let same_cluster: u64 = t.cluster_marginals.iter().map(|&n| choose2(n)).sum();
    let total = choose2(t.n);
    let b = same_label - a;
    let c = same_cluster - a;
    let d = total - a - b - c;
    Ok(PairCounts { a, b, c, d })
}

/// Pair counts by O(M^2) enumeration of every unordered pair; the
/// reference path the fast one must agree with.
pub fn pair_counts_enumerated<L: Eq>(
    labels: &[L],
    clusters: &[usize],
) -> Result<PairCounts, ValidationError> {
    check_lengths(labels, clusters)?;
    let mut counts = PairCounts { a: 0, b: 0, c: 0, d: 0 };
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            let same_label = labels[i] == labels[j];
            let same_cluster = clusters[i] == clusters[j];
            match (same_label, same_cluster) {
                (true, true) => counts.a += 1,
                (true, false) => counts.b += 1,
                (false, true) => counts.c += 1,
                (false, false) => counts.d += 1,
            }
        }
    }
    Ok(counts)
}

/// Rand index (a + d) / (a + b + c + d).
pub fn rand_index(counts: &PairCounts) -> Result<f64, ValidationError> {
    let total = counts.total();
    if total == 0 {
        return Err(ValidationError::TooFewNodes(1));
    }
    Ok((counts.a + counts.d) as f64 / total as f64)
}

/// Exact rational adjusted Rand index via the contingency table:
/// numerator / denominator with the convention 0/0 -> 1/1 (two trivial
/// partitions agree perfectly).
pub fn adjusted_rand_rational<L: Eq + Hash>(
    labels: &[L],
    clusters: &[usize],
) -> Result<(i128, i128), ValidationError> {
    check_lengths(labels, clusters)?;
    let t = contingency(labels, clusters);
    let sum_cells: i128 = t.cells.iter().map(|&n| choose2(n) as i128).sum();
    let sum_labels: i128 = t.label_marginals.iter().map(|&n| choose2(n) as i128).sum();
    let sum_clusters: i128 = t.cluster_marginals.iter().map(|&n| choose2(n) as i128).sum();
    let pairs = choose2(t.n) as i128;
    // ARI = (sum_cells - E) / (max - E) with E = sum_labels*sum_clusters/pairs
    // and max = (sum_labels + sum_clusters)/2; scaled through by 2*pairs.
    let num = 2 * pairs * sum_cells - 2 * sum_labels * sum_clusters;
    let den = pairs * (sum_labels + sum_clusters) - 2 * sum_labels * sum_clusters;
    if den == 0 {
        debug_assert_eq!(num, 0);
        return Ok((1, 1));
    }
    Ok((num, den))
}

/// Exact rational adjusted Rand index from pair counts:
/// 2(ad - bc) / ((a+b)(b+d) + (a+c)(c+d)). The independent second route.
pub fn adjusted_rand_from_pair_counts(counts: &PairCounts) -> (i128, i128) {
    let (a, b, c, d) = (
        counts.a as i128,
        counts.b as i128,
        counts.c as i128,
        counts.d as i128,
    );
    let num = 2 * (a * d - b * c);
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0 {
        debug_assert_eq!(num, 0);
        return (1, 1);
    }
    (num, den)
}

/// Adjusted Rand index in floating point.
pub fn adjusted_rand_index<L: Eq + Hash>(
    labels: &[L],
    clusters: &[usize],
) -> Result<f64, ValidationError> {
    let (num, den) = adjusted_rand_rational(labels, clusters)?;
    Ok(num as f64 / den as f64)
}

/// Average Pearson correlation over a group's temporal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCorrelation {
    pub rho_avg: f64,
    /// Number of unordered pairs averaged.
    pub pairs: usize,
    /// Rows excluded for zero variance.
    pub excluded: Vec<usize>,
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Mean Pearson correlation over all unordered pairs of the group's
/// rows in a temporal coincidence matrix. Rows with zero variance are
/// excluded; the group must retain at least two rows.
pub fn temporal_correlation_group(
    h: &CoincidenceMatrix,
    group: &[usize],
) -> Result<GroupCorrelation, ValidationError> {
    if group.len() < 2 {
        return Err(ValidationError::GroupTooSmall {
            usable: group.len(),
            total: group.len(),
        });
    }
    let n_bins = h.column_count();
    let mut rows = Vec::with_capacity(group.len());
    let mut excluded = Vec::new();
    for &g in group {
        if g >= h.harvester_count() {
            return Err(ValidationError::RowOutOfRange(g));
        }
        let row = h.dense_row(g);
        let mean = row.iter().sum::<f64>() / n_bins as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
        if var <= 0.0 {
            excluded.push(g);
        } else {
            rows.push(row);
        }
    }
    if rows.len() < 2 {
        return Err(ValidationError::GroupTooSmall {
            usable: rows.len(),
            total: group.len(),
        });
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            sum += pearson(&rows[i], &rows[j]);
            pairs += 1;
        }
    }
    Ok(GroupCorrelation {
        rho_avg: sum / pairs as f64,
        pairs,
        excluded,
    })
}

/// Groups addresses by their top `prefix_bits` bits. Keys render as the
/// masked network with prefix length, e.g. `208.66.195.0/24`. Singleton
/// groups are included.
pub fn ip_prefix_groups(
    ips: &[Ipv4Addr],
    prefix_bits: u8,
) -> Result<BTreeMap<String, Vec<Ipv4Addr>>, ValidationError> {
    if prefix_bits == 0 || prefix_bits > 32 {
        return Err(ValidationError::InvalidPrefixBits(prefix_bits));
    }
    let mask: u32 = if prefix_bits == 32 {
        u32::MAX
    } else {
        !(u32::MAX >> prefix_bits)
    };
    let mut groups: BTreeMap<String, Vec<Ipv4Addr>> = BTreeMap::new();
    for &ip in ips {
        let net = Ipv4Addr::from(u32::from(ip) & mask);
        groups
            .entry(format!("{net}/{prefix_bits}"))
            .or_default()
            .push(ip);
    }
    Ok(groups)
}

/// Per-cluster phishing composition. A cluster is a phishing cluster iff
/// it holds strictly more phishers than non-phishers (ties resolve to
/// non-phishing); purity is the majority-class fraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPhishing {
    pub cluster_id: usize,
    pub size: usize,
    pub phisher_count: usize,
    pub majority_label: PhisherLabel,
    pub purity: f64,
}

pub fn cluster_phishing_purity(
    partition: &Partition,
    phisher: &[bool],
) -> Vec<ClusterPhishing> {
    let mut size = vec![0usize; partition.k()];
    let mut phishers = vec![0usize; partition.k()];
    for (i, &c) in partition.assignments().iter().enumerate() {
        size[c] += 1;
        if phisher[i] {
            phishers[c] += 1;
        }
    }
    (0..partition.k())
        .map(|c| {
            let non = size[c] - phishers[c];
            ClusterPhishing {
                cluster_id: c,
                size: size[c],
                phisher_count: phishers[c],
                majority_label: if phishers[c] > non {
                    PhisherLabel::Phisher
                } else {
                    PhisherLabel::NonPhisher
                },
                purity: phishers[c].max(non) as f64 / size[c] as f64,
            }
        })
        .collect()
}

/// The JSON validation report:
/// `{rand, adjusted_rand, clusters: [...], prefix_groups: {...}, rho_avg: {...}}`.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub rand: Option<f64>,
    pub adjusted_rand: Option<f64>,
    pub clusters: Vec<ClusterPhishing>,
    pub prefix_groups: BTreeMap<String, Vec<Ipv4Addr>>,
    pub rho_avg: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::{CoincidenceKind, ColumnMeta};
    use crate::linalg::SparseMatrix;
    use chrono::{TimeZone, Utc};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pair_counts_perfect_agreement() {
        let counts = pair_counts(&['A', 'A', 'B', 'B'], &[1, 1, 2, 2]).unwrap();
        assert_eq!(counts, PairCounts { a: 2, b: 0, c: 0, d: 4 });
        assert!((rand_index(&counts).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_counts_three_node_enumeration() {
        // pairs: (0,1) same label diff cluster; (0,2) diff/diff; (1,2) diff/same
        let counts = pair_counts(&['A', 'A', 'B'], &[1, 2, 2]).unwrap();
        assert_eq!(counts, PairCounts { a: 0, b: 1, c: 1, d: 1 });
        assert!((rand_index(&counts).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pair_counts_trivial_partitions() {
        let labels = vec!['X'; 6];
        let clusters = vec![0usize; 6];
        let counts = pair_counts(&labels, &clusters).unwrap();
        assert_eq!(counts.a, 15); // M(M-1)/2
        assert_eq!((counts.b, counts.c, counts.d), (0, 0, 0));
    }

    #[test]
    fn pair_counts_length_mismatch() {
        assert!(matches!(
            pair_counts(&['A'], &[0, 1]),
            Err(ValidationError::LengthMismatch { .. })
        ));
        assert!(matches!(
            pair_counts(&['A'], &[0]),
            Err(ValidationError::TooFewNodes(1))
        ));
    }

    #[test]
    fn identical_partitions_have_unit_ari() {
        let labels = [0, 0, 1, 1, 2, 2];
        let clusters = [5, 5, 9, 9, 7, 7];
        assert!((adjusted_rand_index(&labels, &clusters).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn anti_correlated_partition_has_negative_ari() {
        // hand contingency: all cells 1, ARI = -0.5
        let ari = adjusted_rand_index(&['A', 'A', 'B', 'B'], &[1, 2, 1, 2]).unwrap();
        assert!((ari - (-0.5)).abs() < 1e-15);
        // and the pair-count route agrees exactly
        let counts = pair_counts(&['A', 'A', 'B', 'B'], &[1, 2, 1, 2]).unwrap();
        assert_eq!(counts, PairCounts { a: 0, b: 2, c: 2, d: 2 });
        let (num, den) = adjusted_rand_from_pair_counts(&counts);
        assert_eq!(num * 2, -den); // -1/2
    }

    #[test]
    fn ari_of_both_trivial_partitions_is_one() {
        let labels = vec![7u32; 5];
        let clusters = vec![3usize; 5];
        assert_eq!(adjusted_rand_index(&labels, &clusters).unwrap(), 1.0);
        // all-singletons on both sides
        let labels: Vec<u32> = (0..5).collect();
        let clusters: Vec<usize> = (0..5).collect();
        assert_eq!(adjusted_rand_index(&labels, &clusters).unwrap(), 1.0);
    }

    #[test]
    fn random_relabelings_have_near_zero_mean_ari() {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let m = 30;
        let labels: Vec<usize> = (0..m).map(|i| i % 3).collect();
        let clusters: Vec<usize> = (0..m).map(|i| (i / 10) % 3).collect();
        let mut sum = 0.0;
        for _ in 0..200 {
            let mut shuffled = labels.clone();
            for i in (1..m).rev() {
                let j = rng.gen_range(0..=i);
                shuffled.swap(i, j);
            }
            sum += adjusted_rand_index(&shuffled, &clusters).unwrap();
        }
        let mean = sum / 200.0;
        assert!(mean.abs() <= 0.05, "mean ARI over relabelings = {mean}");
    }

    #[test]
    fn indices_are_symmetric_and_relabel_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(555);
        for _ in 0..20 {
            let m = rng.gen_range(2..40);
            let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..4)).collect();
            let clusters: Vec<usize> = (0..m).map(|_| rng.gen_range(0..5)).collect();

            let ari_ab = adjusted_rand_index(&labels, &clusters).unwrap();
            let ari_ba = adjusted_rand_index(&clusters, &labels).unwrap();
            assert!((ari_ab - ari_ba).abs() < 1e-12);

            let rand_ab = rand_index(&pair_counts(&labels, &clusters).unwrap()).unwrap();
            let rand_ba = rand_index(&pair_counts(&clusters, &labels).unwrap()).unwrap();
            assert!((rand_ab - rand_ba).abs() < 1e-12);

            // relabel clusters through an arbitrary injection
            let relabeled: Vec<usize> = clusters.iter().map(|&c| 17 + 3 * c).collect();
            let ari_rel = adjusted_rand_index(&labels, &relabeled).unwrap();
            assert!((ari_ab - ari_rel).abs() < 1e-15);
        }
    }

    #[test]
    fn contingency_and_pair_count_ari_agree_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(808);
        for _ in 0..100 {
            let m = rng.gen_range(2..=50);
            let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..5)).collect();
            let clusters: Vec<usize> = (0..m).map(|_| rng.gen_range(0..6)).collect();
            let fast = pair_counts(&labels, &clusters).unwrap();
            let slow = pair_counts_enumerated(&labels, &clusters).unwrap();
            assert_eq!(fast, slow);
            assert_eq!(fast.total(), (m as u64) * (m as u64 - 1) / 2);

            let (n1, d1) = adjusted_rand_rational(&labels, &clusters).unwrap();
            let (n2, d2) = adjusted_rand_from_pair_counts(&slow);
            // equal as reduced rationals: cross-multiply
            assert_eq!(n1 * d2, n2 * d1, "ARI routes disagree: {n1}/{d1} vs {n2}/{d2}");
        }
    }

    fn temporal_matrix(rows: &[Vec<f64>]) -> CoincidenceMatrix {
        let nrows = rows.len();
        let ncols = rows[0].len();
        let mut entries = SparseMatrix::zeros(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    entries.set(i, j, v);
                }
            }
        }
        CoincidenceMatrix {
            kind: CoincidenceKind::Temporal,
            entries,
            harvesters: (0..nrows).map(|i| Ipv4Addr::new(10, 0, 0, i as u8 + 1)).collect(),
            columns: ColumnMeta::TimeBins {
                start: Utc.with_ymd_and_hms(2006, 10, 1, 0, 0, 0).unwrap(),
                bin_secs: 3600,
                count: ncols,
            },
        }
    }

    #[test]
    fn identical_rows_have_unit_correlation() {
        let h = temporal_matrix(&[vec![1.0, 2.0, 0.0, 3.0], vec![1.0, 2.0, 0.0, 3.0]]);
        let g = temporal_correlation_group(&h, &[0, 1]).unwrap();
        assert!((g.rho_avg - 1.0).abs() < 1e-12);
        assert_eq!(g.pairs, 1);
    }

    #[test]
    fn orthogonal_impulses_anticorrelate() {
        // hand Pearson on 4-bin impulse vectors: rho = -1/3
        let h = temporal_matrix(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]]);
        let g = temporal_correlation_group(&h, &[0, 1]).unwrap();
        assert!((g.rho_avg - (-1.0 / 3.0)).abs() < 1e-12);
        assert!(g.rho_avg < 0.0);
    }

    #[test]
    fn zero_variance_rows_are_excluded() {
        let h = temporal_matrix(&[
            vec![1.0, 0.0, 2.0],
            vec![5.0, 5.0, 5.0], // constant: zero variance
            vec![1.0, 0.0, 2.0],
        ]);
        let g = temporal_correlation_group(&h, &[0, 1, 2]).unwrap();
        assert_eq!(g.excluded, vec![1]);
        assert_eq!(g.pairs, 1);
        assert!((g.rho_avg - 1.0).abs() < 1e-12);
        // excluding down to fewer than 2 usable rows is an error
        let h2 = temporal_matrix(&[vec![1.0, 1.0], vec![2.0, 0.0]]);
        assert!(matches!(
            temporal_correlation_group(&h2, &[0, 1]),
            Err(ValidationError::GroupTooSmall { usable: 1, total: 2 })
        ));
    }

    #[test]
    fn correlation_invariant_to_shift_and_scale() {
        let base = vec![0.0, 3.0, 1.0, 4.0, 1.0, 5.0];
        let other = vec![2.0, 2.5, 0.5, 4.0, 0.0, 5.0];
        let h1 = temporal_matrix(&[base.clone(), other.clone()]);
        let shifted: Vec<f64> = base.iter().map(|v| 2.5 * v + 7.0).collect();
        let h2 = temporal_matrix(&[shifted, other]);
        let g1 = temporal_correlation_group(&h1, &[0, 1]).unwrap();
        let g2 = temporal_correlation_group(&h2, &[0, 1]).unwrap();
        assert!((g1.rho_avg - g2.rho_avg).abs() < 1e-12);
    }

    #[test]
    fn group_of_one_is_an_error() {
        let h = temporal_matrix(&[vec![1.0, 0.0]]);
        assert!(temporal_correlation_group(&h, &[0]).is_err());
    }

    #[test]
    fn prefix_groups_collect_shared_slash24() {
        let ips: Vec<Ipv4Addr> = vec![
            "208.66.195.10".parse().unwrap(),
            "208.66.195.77".parse().unwrap(),
        ];
        let groups = ip_prefix_groups(&ips, 24).unwrap();
        assert_eq!(groups.len(), 1);
        let (key, members) = groups.iter().next().unwrap();
        assert_eq!(key, "208.66.195.0/24");
        assert_eq!(members.len(), 2);
    }

    #[test]
    fn prefix_32_makes_singletons() {
        let ips: Vec<Ipv4Addr> = vec![
            "10.0.0.1".parse().unwrap(),
            "10.0.0.2".parse().unwrap(),
            "10.0.0.2".parse().unwrap(),
        ];
        let groups = ip_prefix_groups(&ips, 32).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups["10.0.0.2/32"].len(), 2);
    }

    #[test]
    fn prefix_bits_control_granularity() {
        let ips: Vec<Ipv4Addr> = vec!["10.0.0.1".parse().unwrap(), "10.0.1.1".parse().unwrap()];
        assert_eq!(ip_prefix_groups(&ips, 24).unwrap().len(), 2);
        assert_eq!(ip_prefix_groups(&ips, 16).unwrap().len(), 1);
        assert!(matches!(
            ip_prefix_groups(&ips, 0),
            Err(ValidationError::InvalidPrefixBits(0))
        ));
        assert!(matches!(
            ip_prefix_groups(&ips, 33),
            Err(ValidationError::InvalidPrefixBits(33))
        ));
    }

    #[test]
    fn purity_of_pure_phisher_cluster() {
        let p = Partition::new(vec![0; 5], 1).unwrap();
        let report = cluster_phishing_purity(&p, &[true; 5]);
        assert_eq!(report[0].majority_label, PhisherLabel::Phisher);
        assert_eq!(report[0].purity, 1.0);
        assert_eq!(report[0].phisher_count, 5);
    }

    #[test]
    fn tie_resolves_to_non_phishing() {
        let p = Partition::new(vec![0; 6], 1).unwrap();
        let report = cluster_phishing_purity(&p, &[true, true, true, false, false, false]);
        assert_eq!(report[0].majority_label, PhisherLabel::NonPhisher);
        assert_eq!(report[0].purity, 0.5);
    }

    #[test]
    fn minority_phishers_give_non_phishing_majority() {
        let p = Partition::new(vec![0; 7], 1).unwrap();
        let labels = [true, true, false, false, false, false, false];
        let report = cluster_phishing_purity(&p, &labels);
        assert_eq!(report[0].majority_label, PhisherLabel::NonPhisher);
        assert!((report[0].purity - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn purity_sizes_sum_to_m() {
        let p = Partition::new(vec![0, 1, 0, 2, 1, 0], 3).unwrap();
        let report = cluster_phishing_purity(&p, &[true, false, true, false, true, false]);
        let total: usize = report.iter().map(|c| c.size).sum();
        assert_eq!(total, 6);
    }

    #[test]
    fn report_serializes_with_stable_keys() {
        let p = Partition::new(vec![0, 0, 1], 2).unwrap();
        let report = ValidationReport {
            rand: Some(0.5),
            adjusted_rand: Some(0.25),
            clusters: cluster_phishing_purity(&p, &[true, true, false]),
            prefix_groups: ip_prefix_groups(
                &["10.0.0.1".parse().unwrap(), "10.0.0.9".parse().unwrap()],
                24,
            )
            .unwrap(),
            rho_avg: BTreeMap::from([("coordinated:0".to_string(), 0.98)]),
        };
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("rand").is_some());
        assert!(json.get("adjusted_rand").is_some());
        assert!(json.get("clusters").unwrap().is_array());
        assert!(json.get("prefix_groups").unwrap().is_object());
        assert!(json.get("rho_avg").unwrap().is_object());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fast_pair_counts_equal_enumeration(
                labels in proptest::collection::vec(0usize..4, 2..40),
                seed in 0u64..1000,
            ) {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let clusters: Vec<usize> =
                    labels.iter().map(|_| rand::Rng::gen_range(&mut rng, 0..5)).collect();
                let fast = pair_counts(&labels, &clusters).unwrap();
                let slow = pair_counts_enumerated(&labels, &clusters).unwrap();
                prop_assert_eq!(fast, slow);
                let m = labels.len() as u64;
                prop_assert_eq!(fast.total(), m * (m - 1) / 2);
            }
        }
    }
}
