//! Coincidence matrices and the normalized pairwise-similarity matrix.
//!
//! A coincidence matrix H links harvesters (rows) to resources (columns):
//! spam servers or 1-hour UTC time bins. Its row inner products give the
//! unnormalized similarity S = HHᵀ, which is rescaled so every
//! harvester's self-similarity is 1:
//!
//!   S′ = D_S^{-1/2} S D_S^{-1/2},  D_S = diag(S).
//!
//! Off-diagonal S′ entries are exactly the cosine similarities of rows
//! of H.

use crate::ingest::EventWindow;
use crate::linalg::SparseMatrix;
use chrono::{DateTime, Utc};
use nalgebra::{DMatrix, DVector};
use std::io::{self, Write};
use std::net::Ipv4Addr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("bin width {0}s does not divide 24 hours evenly")]
    InvalidBinWidth(u32),
    #[error("harvester {ip} (row {row}) has an all-zero coincidence row")]
    ZeroRow { row: usize, ip: Ipv4Addr },
}

/// Default temporal bin width: one hour.
pub const DEFAULT_BIN_SECS: u32 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoincidenceKind {
    ServerUsage,
    Temporal,
}

/// What the columns of a coincidence matrix stand for.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnMeta {
    Servers(Vec<Ipv4Addr>),
    TimeBins {
        start: DateTime<Utc>,
        bin_secs: u32,
        count: usize,
    },
    /// Columns of a matrix re-loaded from a dump, provenance unknown.
    Unlabeled { count: usize },
}

/// Harvester-by-resource matrix H.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMatrix {
    pub kind: CoincidenceKind,
    pub entries: SparseMatrix,
    pub harvesters: Vec<Ipv4Addr>,
    pub columns: ColumnMeta,
}

impl CoincidenceMatrix {
    pub fn harvester_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn column_count(&self) -> usize {
        self.entries.ncols()
    }

    /// Row `i` densified over all columns.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.entries.ncols()];
        for &(j, v) in self.entries.row(i) {
            row[j] = v;
        }
        row
    }
}

/// Spam-server usage coincidence: h_ij = p_ij / (d_j e_i), where p_ij is
/// the number of emails harvester i sent through server j, d_j the total
/// through server j, and e_i the addresses harvester i acquired.
pub fn server_coincidence(window: &EventWindow) -> CoincidenceMatrix {
    let m = window.harvester_count();
    let n = window.server_count();
    let mut counts = SparseMatrix::zeros(m, n);
    let mut server_totals = vec![0u64; n];
    for (h, s, _) in window.indexed_events() {
        counts.add(h, s, 1.0);
        server_totals[s] += 1;
    }
    let mut entries = SparseMatrix::zeros(m, n);
    for (i, j, p_ij) in counts.iter() {
        let d_j = server_totals[j] as f64;
        let e_i = window.addresses_acquired(i) as f64;
        entries.set(i, j, p_ij / (d_j * e_i));
    }
    CoincidenceMatrix {
        kind: CoincidenceKind::ServerUsage,
        entries,
        harvesters: window.harvester_ips().to_vec(),
        columns: ColumnMeta::Servers(window.server_ips().to_vec()),
    }
}

/// Temporal coincidence: columns are consecutive UTC bins spanning the
/// whole month; h_ij = s_ij / e_i with s_ij the emails harvester i sent
/// in bin j.
pub fn temporal_coincidence(
    window: &EventWindow,
    bin_secs: u32,
) -> Result<CoincidenceMatrix, SimilarityError> {
    if bin_secs == 0 || 86_400 % bin_secs != 0 {
        return Err(SimilarityError::InvalidBinWidth(bin_secs));
    }
    let start = window.month().start();
    let n = (window.month().days() as usize) * (86_400 / bin_secs as usize);
    let m = window.harvester_count();
    let mut entries = SparseMatrix::zeros(m, n);
    for (h, _, ev) in window.indexed_events() {
        let offset = (ev.timestamp - start).num_seconds();
        debug_assert!(offset >= 0);
        let bin = (offset as u64 / bin_secs as u64) as usize;
        let e_i = window.addresses_acquired(h) as f64;
        entries.add(h, bin, 1.0 / e_i);
    }
    Ok(CoincidenceMatrix {
        kind: CoincidenceKind::Temporal,
        entries,
        harvesters: window.harvester_ips().to_vec(),
        columns: ColumnMeta::TimeBins {
            start,
            bin_secs,
            count: n,
        },
    })
}

/// Unnormalized and normalized pairwise similarities over harvesters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    /// S = HHᵀ.
    pub s: DMatrix<f64>,
    /// S′ = D_S^{-1/2} S D_S^{-1/2}; unit diagonal.
    pub s_prime: DMatrix<f64>,
    /// Diagonal of S.
    pub d_s: DVector<f64>,
}

/// Projects a coincidence matrix into pairwise similarities. Fails if
/// any row of H is all-zero (such harvesters must be dropped at ingest).
pub fn similarity_from_coincidence(
    h: &CoincidenceMatrix,
) -> Result<SimilarityMatrix, SimilarityError> {
    let m = h.entries.nrows();
    let mut d_s = DVector::zeros(m);
    for i in 0..m {
        let self_dot = h.entries.row_dot(i, i);
        if self_dot <= 0.0 {
            return Err(SimilarityError::ZeroRow {
                row: i,
                ip: h.harvesters[i],
            });
        }
        d_s[i] = self_dot;
    }
    let mut s = DMatrix::zeros(m, m);
    for i in 0..m {
        s[(i, i)] = d_s[i];
        for k in (i + 1)..m {
            let v = h.entries.row_dot(i, k);
            s[(i, k)] = v;
            s[(k, i)] = v;
        }
    }
    let inv_sqrt: Vec<f64> = (0..m).map(|i| 1.0 / d_s[i].sqrt()).collect();
    let mut s_prime = DMatrix::zeros(m, m);
    for i in 0..m {
        s_prime[(i, i)] = 1.0;
        for k in (i + 1)..m {
            let v = s[(i, k)] * inv_sqrt[i] * inv_sqrt[k];
            s_prime[(i, k)] = v;
            s_prime[(k, i)] = v;
        }
    }
    Ok(SimilarityMatrix { s, s_prime, d_s })
}

/// Writes a sparse matrix in coordinate format: `i j value` per line,
/// 0-based, preceded by a `# rows cols` comment carrying the dimensions.
pub fn write_coordinate<W: Write>(m: &SparseMatrix, out: &mut W) -> io::Result<()> {
    writeln!(out, "# {} {}", m.nrows(), m.ncols())?;
    for (i, j, v) in m.iter() {
        if v != 0.0 {
            writeln!(out, "{i} {j} {v}")?;
        }
    }
    Ok(())
}

/// Dense counterpart of [`write_coordinate`]; zero entries are skipped.
pub fn write_coordinate_dense<W: Write>(m: &DMatrix<f64>, out: &mut W) -> io::Result<()> {
    writeln!(out, "# {} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{i} {j} {v}")?;
            }
        }
    }
    Ok(())
}

/// Reads a coordinate-format file produced by the writers above.
pub fn read_coordinate(text: &str) -> Result<SparseMatrix, String> {
    let mut dims: Option<(usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_row = 0usize;
    let mut max_col = 0usize;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if dims.is_none() {
                let mut it = rest.split_whitespace();
                if let (Some(r), Some(c)) = (it.next(), it.next()) {
                    if let (Ok(r), Ok(c)) = (r.parse(), c.parse()) {
                        dims = Some((r, c));
                    }
                }
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<f64, String> {
            tok.ok_or_else(|| format!("line {}: expected `i j value`", ln + 1))?
                .parse()
                .map_err(|e| format!("line {}: {e}", ln + 1))
        };
        let i = parse(it.next())? as usize;
        let j = parse(it.next())? as usize;
        let v = parse(it.next())?;
        max_row = max_row.max(i + 1);
        max_col = max_col.max(j + 1);
        triplets.push((i, j, v));
    }
    let (nrows, ncols) = dims.unwrap_or((max_row, max_col));
    if nrows < max_row || ncols < max_col {
        return Err(format!(
            "declared shape {nrows}x{ncols} smaller than entries ({max_row}x{max_col})"
        ));
    }
    let mut m = SparseMatrix::zeros(nrows, ncols);
    for (i, j, v) in triplets {
        m.set(i, j, v);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{window_by_month, EmailEvent};
    use chrono::TimeZone;

    fn ev_at(h: &str, s: &str, day: u32, hour: u32, min: u32, delta: u64) -> EmailEvent {
        EmailEvent {
            timestamp: Utc.with_ymd_and_hms(2006, 10, day, hour, min, 0).unwrap(),
            harvester_ip: h.parse().unwrap(),
            server_ip: s.parse().unwrap(),
            subject: "x".into(),
            addresses_acquired_delta: delta,
        }
    }

    fn window(events: Vec<EmailEvent>) -> EventWindow {
        window_by_month(&events, "2006-10".parse().unwrap()).unwrap()
    }

    #[test]
    fn server_usage_entry_halved_by_address_count() {
        // p_ij = 4, d_j = 4, e_i = 2 -> h_ij = 0.5
        let mut events = Vec::new();
        for m in 0..4 {
            events.push(ev_at("1.1.1.1", "9.9.9.9", 1, 0, m, if m == 0 { 2 } else { 0 }));
        }
        let w = window(events);
        let h = server_coincidence(&w);
        assert!((h.entries.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sole_user_with_one_address_has_unit_entry() {
        let w = window(vec![ev_at("1.1.1.1", "9.9.9.9", 1, 0, 0, 0)]);
        let h = server_coincidence(&w);
        assert_eq!(h.entries.get(0, 0), 1.0);
    }

    #[test]
    fn busy_server_weakens_the_connection() {
        // harvester 0 sends 4 of the 1000 emails through the server
        let mut events = Vec::new();
        for i in 0..4u32 {
            events.push(ev_at("1.1.1.1", "9.9.9.9", 1, 0, i % 60, 0));
        }
        for i in 0..996u32 {
            events.push(ev_at("2.2.2.2", "9.9.9.9", 2, (i / 60) % 24, i % 60, 0));
        }
        let w = window(events);
        let h = server_coincidence(&w);
        let row = w.harvester_index("1.1.1.1".parse().unwrap()).unwrap();
        assert!((h.entries.get(row, 0) - 0.004).abs() < 1e-15);
    }

    #[test]
    fn temporal_bins_count_events_per_hour() {
        let events = vec![
            ev_at("1.1.1.1", "9.9.9.9", 1, 14, 5, 0),
            ev_at("1.1.1.1", "9.9.9.9", 1, 14, 30, 0),
            ev_at("1.1.1.1", "9.9.9.9", 1, 15, 10, 0),
        ];
        let w = window(events);
        let h = temporal_coincidence(&w, DEFAULT_BIN_SECS).unwrap();
        assert_eq!(h.entries.get(0, 14), 2.0);
        assert_eq!(h.entries.get(0, 15), 1.0);
        let total: f64 = h.entries.row(0).iter().map(|&(_, v)| v).sum();
        assert_eq!(total, 3.0, "bin counts partition the events");
        assert_eq!(h.column_count(), 744); // October: 31 * 24
    }

    #[test]
    fn temporal_rows_divided_by_address_count() {
        let events = vec![
            ev_at("1.1.1.1", "9.9.9.9", 1, 14, 5, 2),
            ev_at("1.1.1.1", "9.9.9.9", 1, 14, 30, 0),
            ev_at("1.1.1.1", "9.9.9.9", 1, 15, 10, 0),
        ];
        let w = window(events);
        let h = temporal_coincidence(&w, DEFAULT_BIN_SECS).unwrap();
        // e_i = 2 halves every entry of the row
        assert!((h.entries.get(0, 14) - 1.0).abs() < 1e-15);
        assert!((h.entries.get(0, 15) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bin_width_must_divide_a_day() {
        let w = window(vec![ev_at("1.1.1.1", "9.9.9.9", 1, 0, 0, 0)]);
        assert!(matches!(
            temporal_coincidence(&w, 7000),
            Err(SimilarityError::InvalidBinWidth(7000))
        ));
        assert!(temporal_coincidence(&w, 1800).is_ok());
    }

    fn coincidence_from_rows(rows: &[&[f64]]) -> CoincidenceMatrix {
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
            kind: CoincidenceKind::ServerUsage,
            entries,
            harvesters: (0..nrows)
                .map(|i| Ipv4Addr::new(10, 0, 0, i as u8 + 1))
                .collect(),
            columns: ColumnMeta::Servers(
                (0..ncols).map(|j| Ipv4Addr::new(10, 0, 1, j as u8 + 1)).collect(),
            ),
        }
    }

    #[test]
    fn identical_rows_have_unit_normalized_similarity() {
        let h = coincidence_from_rows(&[&[0.2, 0.4, 0.0], &[0.2, 0.4, 0.0]]);
        let sim = similarity_from_coincidence(&h).unwrap();
        assert!((sim.s_prime[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports_have_zero_similarity() {
        let h = coincidence_from_rows(&[&[1.0, 0.0], &[0.0, 3.0]]);
        let sim = similarity_from_coincidence(&h).unwrap();
        assert_eq!(sim.s_prime[(0, 1)], 0.0);
    }

    #[test]
    fn hand_worked_two_by_two_projection() {
        // H = [[1,0],[1,1]] -> S = [[1,1],[1,2]], S' = [[1,1/sqrt(2)],[1/sqrt(2),1]]
        let h = coincidence_from_rows(&[&[1.0, 0.0], &[1.0, 1.0]]);
        let sim = similarity_from_coincidence(&h).unwrap();
        assert_eq!(sim.s[(0, 0)], 1.0);
        assert_eq!(sim.s[(0, 1)], 1.0);
        assert_eq!(sim.s[(1, 1)], 2.0);
        let expected = 1.0 / 2.0_f64.sqrt();
        assert!((sim.s_prime[(0, 1)] - expected).abs() < 1e-15);
        assert!((sim.s_prime[(1, 0)] - expected).abs() < 1e-15);
        assert_eq!(sim.s_prime[(0, 0)], 1.0);
    }

    #[test]
    fn zero_row_is_reported_with_harvester() {
        let mut entries = SparseMatrix::zeros(2, 2);
        entries.set(0, 0, 1.0);
        let h = CoincidenceMatrix {
            kind: CoincidenceKind::ServerUsage,
            entries,
            harvesters: vec![Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2)],
            columns: ColumnMeta::Servers(vec![Ipv4Addr::new(10, 0, 1, 1), Ipv4Addr::new(10, 0, 1, 2)]),
        };
        match similarity_from_coincidence(&h) {
            Err(SimilarityError::ZeroRow { row, ip }) => {
                assert_eq!(row, 1);
                assert_eq!(ip, Ipv4Addr::new(10, 0, 0, 2));
            }
            other => panic!("expected zero-row error, got {other:?}"),
        }
    }

    #[test]
    fn s_is_entrywise_row_inner_products_and_s_prime_their_cosines() {
        let h = coincidence_from_rows(&[&[0.5, 0.1, 0.0, 0.3], &[0.2, 0.0, 0.4, 0.3], &[0.0, 0.9, 0.1, 0.0]]);
        let sim = similarity_from_coincidence(&h).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                let a = h.dense_row(i);
                let b = h.dense_row(k);
                let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                assert!((sim.s[(i, k)] - dot).abs() < 1e-12);
                if i != k {
                    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                    assert!((sim.s_prime[(i, k)] - dot / (na * nb)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn coordinate_round_trip() {
        let h = coincidence_from_rows(&[&[0.5, 0.0], &[0.25, 1.5]]);
        let mut buf = Vec::new();
        write_coordinate(&h.entries, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# 2 2\n"));
        let back = read_coordinate(&text).unwrap();
        assert_eq!(back, h.entries);
    }

    #[test]
    fn coordinate_header_preserves_trailing_zero_columns() {
        let mut m = SparseMatrix::zeros(2, 10);
        m.set(0, 0, 1.0);
        m.set(1, 1, 2.0);
        let mut buf = Vec::new();
        write_coordinate(&m, &mut buf).unwrap();
        let back = read_coordinate(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(back.ncols(), 10);
    }

    mod properties {
        use super::*;
        use crate::linalg::dense_symmetric_top;
        use proptest::prelude::*;

        fn arb_h() -> impl Strategy<Value = Vec<Vec<f64>>> {
            // nonnegative rows, each guaranteed a positive entry
            (2usize..8, 1usize..6).prop_flat_map(|(m, n)| {
                proptest::collection::vec(
                    proptest::collection::vec(0.0f64..1.0, n).prop_map(move |mut row| {
                        if row.iter().all(|&v| v == 0.0) {
                            row[0] = 0.5;
                        }
                        row
                    }),
                    m,
                )
            })
        }

        proptest! {
            #[test]
            fn s_prime_is_symmetric_unit_diagonal_and_bounded(rows in arb_h()) {
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                let h = coincidence_from_rows(&refs);
                let sim = similarity_from_coincidence(&h).unwrap();
                let m = rows.len();
                for i in 0..m {
                    prop_assert!((sim.s_prime[(i, i)] - 1.0).abs() < 1e-12);
                    for k in 0..m {
                        prop_assert!((sim.s_prime[(i, k)] - sim.s_prime[(k, i)]).abs() < 1e-12);
                        prop_assert!(sim.s_prime[(i, k)] >= 0.0);
                        prop_assert!(sim.s_prime[(i, k)] <= 1.0 + 1e-12);
                        prop_assert!((sim.s[(i, k)] - sim.s[(k, i)]).abs() < 1e-12);
                    }
                }
                // S is PSD up to tolerance
                let eig = dense_symmetric_top(&sim.s, m).unwrap();
                for v in eig.values {
                    prop_assert!(v >= -1e-9);
                }
            }

            #[test]
            fn row_scaling_leaves_s_prime_unchanged(rows in arb_h(), scale in 0.1f64..10.0) {
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                let h = coincidence_from_rows(&refs);
                let base = similarity_from_coincidence(&h).unwrap();

                let mut scaled_rows = rows.clone();
                for v in scaled_rows[0].iter_mut() {
                    *v *= scale;
                }
                let refs: Vec<&[f64]> = scaled_rows.iter().map(|r| r.as_slice()).collect();
                let scaled = similarity_from_coincidence(&coincidence_from_rows(&refs)).unwrap();

                let m = rows.len();
                for i in 0..m {
                    for k in 0..m {
                        prop_assert!((base.s_prime[(i, k)] - scaled.s_prime[(i, k)]).abs() < 1e-9,
                            "entry ({}, {}): {} vs {}", i, k, base.s_prime[(i, k)], scaled.s_prime[(i, k)]);
                    }
                }
            }
        }
    }

    #[test]
    fn e_i_normalization_is_inert_for_s_prime_but_not_for_d_j() {
        // Two identical harvesters except one has e_i = 5: their S' rows agree
        // because cosine absorbs row scaling, but the d_j denominator depends
        // on raw email counts, so a third harvester flooding a server changes
        // everyone's entries for that server.
        let mut events = Vec::new();
        for m in 0..4 {
            events.push(ev_at("1.1.1.1", "9.9.9.9", 1, 0, m, if m == 0 { 5 } else { 0 }));
            events.push(ev_at("2.2.2.2", "9.9.9.9", 1, 1, m, 0));
        }
        let w = window(events.clone());
        let h = server_coincidence(&w);
        // rows differ by the factor e_0 = 5
        assert!((h.entries.get(0, 0) * 5.0 - h.entries.get(1, 0)).abs() < 1e-15);
        let sim = similarity_from_coincidence(&h).unwrap();
        assert!((sim.s_prime[(0, 1)] - 1.0).abs() < 1e-12);

        // add a flood of emails through the same server: d_j grows, entries shrink
        for i in 0..100u32 {
            events.push(ev_at("3.3.3.3", "9.9.9.9", 2, (i / 60) % 24, i % 60, 0));
        }
        let w2 = window(events);
        let h2 = server_coincidence(&w2);
        assert!(h2.entries.get(0, 0) < h.entries.get(0, 0));
    }
}
