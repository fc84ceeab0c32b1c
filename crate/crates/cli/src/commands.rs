//! Subcommand implementations.

use crate::args::*;
use crate::config::*;
use crate::manifest::write_manifest;
use crate::{CliError, CliResult};
use harvnet::graph::{default_k, ensure_connectivity_k, knn_graph, write_edge_list, AdjacencyGraph};
use harvnet::ingest::{
    monthly_volume_report, parse_event_log, window_by_month, EmailEvent, EventWindow, LogFormat,
    YearMonth,
};
use harvnet::phishing::{default_keywords, phishing_profiles, KeywordList, PhisherLabel};
use harvnet::similarity::{
    read_coordinate, server_coincidence, similarity_from_coincidence, temporal_coincidence,
    write_coordinate, write_coordinate_dense, CoincidenceKind, CoincidenceMatrix, ColumnMeta,
    SimilarityMatrix, DEFAULT_BIN_SECS,
};
use harvnet::spectral::{
    cluster, write_assignments, ClusterOutcome, EigenOptions, KChoice, Partition, SpectralConfig,
};
use harvnet::synth::{generate_scenario, write_events_csv, GroundTruth, ScenarioConfig};
use harvnet::validation::{
    adjusted_rand_index, cluster_phishing_purity, ip_prefix_groups, pair_counts, rand_index,
    temporal_correlation_group, ValidationReport,
};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::net::Ipv4Addr;
use std::path::Path;

fn load_events(path: &Path, format: LogFormat) -> CliResult<Vec<EmailEvent>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Pipeline(format!("cannot open {}: {e}", path.display())))?;
    let parsed = parse_event_log(std::io::BufReader::new(file), format)?;
    if !parsed.malformed.is_empty() {
        eprintln!(
            "harvnet: warning: skipped {} malformed line(s); first at line {}",
            parsed.malformed.len(),
            parsed.malformed[0].line
        );
    }
    Ok(parsed.events)
}

fn load_keywords(path: Option<&Path>) -> CliResult<KeywordList> {
    match path {
        None => Ok(default_keywords()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read keywords {}: {e}", p.display())))?;
            KeywordList::parse(&text).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn build_similarity(
    window: &EventWindow,
    kind: SimilarityKind,
) -> CliResult<(CoincidenceMatrix, SimilarityMatrix)> {
    let h = match kind {
        SimilarityKind::ServerUsage => server_coincidence(window),
        SimilarityKind::Temporal => temporal_coincidence(window, DEFAULT_BIN_SECS)?,
    };
    let sim = similarity_from_coincidence(&h)?;
    Ok((h, sim))
}

fn resolve_neighbor_count(
    s_prime: &nalgebra::DMatrix<f64>,
    choice: AutoOrInt,
) -> CliResult<(usize, bool)> {
    let m = s_prime.nrows();
    match choice {
        AutoOrInt::Auto => {
            let k0 = default_k(m)?;
            let found = ensure_connectivity_k(s_prime, k0, m - 1)?;
            if !found.reached_target {
                eprintln!(
                    "harvnet: warning: no k <= {} reproduces the full similarity components; using k = {}",
                    m - 1,
                    found.k
                );
            }
            Ok((found.k, true))
        }
        AutoOrInt::Fixed(k) => {
            if m < 2 || k > m - 1 {
                return Err(CliError::Pipeline(format!(
                    "k = {k} out of range for {m} harvesters"
                )));
            }
            Ok((k, false))
        }
    }
}

fn dump_matrix_files(
    dir: &Path,
    h: &CoincidenceMatrix,
    s_prime: &nalgebra::DMatrix<f64>,
) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let mut hw = BufWriter::new(fs::File::create(dir.join("H.txt"))?);
    write_coordinate(&h.entries, &mut hw)?;
    let mut sw = BufWriter::new(fs::File::create(dir.join("S_prime.txt"))?);
    write_coordinate_dense(s_prime, &mut sw)?;
    Ok(())
}

fn spectral_config(settings: &PipelineSettings) -> SpectralConfig {
    SpectralConfig {
        k_choice: match settings.big_k {
            AutoOrInt::Auto => KChoice::Auto,
            AutoOrInt::Fixed(k) => KChoice::Fixed(k),
        },
        min_component_size: settings.min_component_size,
        lambda_floor: settings.lambda_floor,
        eigen: EigenOptions {
            tol: settings.eig_tol,
            ..EigenOptions::default()
        },
        ..SpectralConfig::default()
    }
}

fn settings_json(settings: &PipelineSettings, log: &Path) -> serde_json::Value {
    serde_json::json!({
        "log": log.display().to_string(),
        "format": match settings.format { LogFormat::Csv => "csv", LogFormat::Jsonl => "jsonl" },
        "month": settings.month.to_string(),
        "similarity": settings.similarity.as_str(),
        "k": settings.k.to_string(),
        "K": settings.big_k.to_string(),
        "keywords": settings.keywords.as_ref().map(|p| p.display().to_string()),
        "min_component_size": settings.min_component_size,
        "lambda_floor": settings.lambda_floor,
        "eig_tol": settings.eig_tol,
        "out": settings.out.display().to_string(),
        "dump_matrices": settings.dump_matrices.as_ref().map(|p| p.display().to_string()),
    })
}

fn per_cluster_rho(
    h: &CoincidenceMatrix,
    partition: &Partition,
) -> BTreeMap<String, f64> {
    let mut rho = BTreeMap::new();
    for (cid, members) in partition.members().iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        if let Ok(corr) = temporal_correlation_group(h, members) {
            rho.insert(format!("cluster:{cid}"), corr.rho_avg);
        }
    }
    rho
}

pub fn cmd_cluster(a: ClusterArgs) -> CliResult<()> {
    let file_cfg = KeyValueConfig::load(a.config.as_deref())?;
    let settings = RawSettings {
        file: &file_cfg,
        format: a.format.as_deref(),
        month: a.month.as_deref(),
        similarity: a.similarity.as_deref(),
        k: a.k.as_deref(),
        big_k: a.big_k.as_deref(),
        keywords: a.keywords.as_deref(),
        min_component_size: a.min_component_size,
        lambda_floor: a.lambda_floor,
        eig_tol: a.eig_tol,
        out: a.out.as_deref(),
        dump_matrices: a.dump_matrices.as_deref(),
    }
    .resolve()?;

    let events = load_events(&a.log, settings.format)?;
    let window = window_by_month(&events, settings.month)?;
    let (h, sim) = build_similarity(&window, settings.similarity)?;
    let (k, k_auto) = resolve_neighbor_count(&sim.s_prime, settings.k)?;
    let graph = knn_graph(&sim.s_prime, k)?;
    let outcome = cluster(&graph, &spectral_config(&settings))?;

    let keywords = load_keywords(settings.keywords.as_deref())?;
    let profiles = phishing_profiles(&window, &keywords);
    let phisher: Vec<bool> = profiles
        .iter()
        .map(|p| p.label == PhisherLabel::Phisher)
        .collect();

    let counts = pair_counts(&phisher, outcome.partition.assignments())?;
    let report = ValidationReport {
        rand: Some(rand_index(&counts)?),
        adjusted_rand: Some(adjusted_rand_index(&phisher, outcome.partition.assignments())?),
        clusters: cluster_phishing_purity(&outcome.partition, &phisher),
        prefix_groups: ip_prefix_groups(window.harvester_ips(), 24)?,
        rho_avg: if settings.similarity == SimilarityKind::Temporal {
            per_cluster_rho(&h, &outcome.partition)
        } else {
            BTreeMap::new()
        },
    };

    fs::create_dir_all(&settings.out)?;
    write_cluster_artifacts(&settings.out, &outcome, &graph, &window, &report)?;
    if let Some(dir) = &settings.dump_matrices {
        dump_matrix_files(dir, &h, &sim.s_prime)?;
    }

    let mut config_json = settings_json(&settings, &a.log);
    config_json["resolved"] = serde_json::json!({
        "k": k,
        "k_auto": k_auto,
        "harvesters": window.harvester_count(),
        "components": outcome.components.count(),
        "clusters": outcome.partition.k(),
    });
    let mut inputs: Vec<&Path> = vec![&a.log];
    if let Some(p) = settings.keywords.as_deref() {
        inputs.push(p);
    }
    if let Some(p) = a.config.as_deref() {
        inputs.push(p);
    }
    write_manifest(
        &settings.out,
        "cluster",
        config_json,
        &inputs,
        &["clusters.csv", "edges.tsv", "validation.json"],
    )?;

    println!(
        "clustered {} harvesters: {} components, {} clusters (k = {k}); artifacts in {}",
        window.harvester_count(),
        outcome.components.count(),
        outcome.partition.k(),
        settings.out.display()
    );
    Ok(())
}

fn write_cluster_artifacts(
    out: &Path,
    outcome: &ClusterOutcome,
    graph: &AdjacencyGraph,
    window: &EventWindow,
    report: &ValidationReport,
) -> CliResult<()> {
    let mut cw = BufWriter::new(fs::File::create(out.join("clusters.csv"))?);
    write_assignments(outcome, window.harvester_ips(), &mut cw)?;
    let mut ew = BufWriter::new(fs::File::create(out.join("edges.tsv"))?);
    write_edge_list(graph, window.harvester_ips(), &mut ew)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Pipeline(format!("report serialization: {e}")))?;
    fs::write(out.join("validation.json"), json + "\n")?;
    Ok(())
}

pub fn cmd_export(a: ExportArgs) -> CliResult<()> {
    let file_cfg = KeyValueConfig::load(a.config.as_deref())?;
    let settings = RawSettings {
        file: &file_cfg,
        format: a.format.as_deref(),
        month: a.month.as_deref(),
        similarity: a.similarity.as_deref(),
        k: a.k.as_deref(),
        big_k: None,
        keywords: None,
        min_component_size: None,
        lambda_floor: None,
        eig_tol: None,
        out: a.out.as_deref(),
        dump_matrices: a.dump_matrices.as_deref(),
    }
    .resolve()?;

    let events = load_events(&a.log, settings.format)?;
    let window = window_by_month(&events, settings.month)?;
    let (h, sim) = build_similarity(&window, settings.similarity)?;
    let (k, k_auto) = resolve_neighbor_count(&sim.s_prime, settings.k)?;
    let graph = knn_graph(&sim.s_prime, k)?;

    fs::create_dir_all(&settings.out)?;
    let mut ew = BufWriter::new(fs::File::create(settings.out.join("edges.tsv"))?);
    write_edge_list(&graph, window.harvester_ips(), &mut ew)?;
    if let Some(dir) = &settings.dump_matrices {
        dump_matrix_files(dir, &h, &sim.s_prime)?;
    }

    let mut config_json = settings_json(&settings, &a.log);
    config_json["resolved"] = serde_json::json!({
        "k": k,
        "k_auto": k_auto,
        "harvesters": window.harvester_count(),
        "components": graph.components.count(),
    });
    let mut inputs: Vec<&Path> = vec![&a.log];
    if let Some(p) = a.config.as_deref() {
        inputs.push(p);
    }
    write_manifest(&settings.out, "export", config_json, &inputs, &["edges.tsv"])?;

    println!(
        "exported {} harvesters, {} components, k = {k}; artifacts in {}",
        window.harvester_count(),
        graph.components.count(),
        settings.out.display()
    );
    Ok(())
}

pub fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let mut config = match &a.scenario {
        None => ScenarioConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read scenario {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid scenario config: {e}")))?
        }
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let (events, truth) = generate_scenario(&config).map_err(|e| CliError::Usage(e.to_string()))?;

    fs::create_dir_all(&a.out)?;
    let file = fs::File::create(a.out.join("events.csv"))?;
    write_events_csv(&events, BufWriter::new(file))?;
    let truth_json = serde_json::to_string_pretty(&truth)
        .map_err(|e| CliError::Pipeline(format!("ground truth serialization: {e}")))?;
    fs::write(a.out.join("ground_truth.json"), truth_json + "\n")?;

    let config_json = serde_json::to_value(&config)
        .map_err(|e| CliError::Pipeline(format!("config serialization: {e}")))?;
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = a.scenario.as_deref() {
        inputs.push(p);
    }
    write_manifest(
        &a.out,
        "synth",
        config_json,
        &inputs,
        &["events.csv", "ground_truth.json"],
    )?;

    println!(
        "generated {} events for {} harvesters in {}; artifacts in {}",
        events.len(),
        truth.harvesters.len(),
        config.month,
        a.out.display()
    );
    Ok(())
}

/// Rows of a cluster assignment CSV, in file order.
struct ClusterCsv {
    ips: Vec<Ipv4Addr>,
    partition: Partition,
}

fn read_cluster_csv(path: &Path) -> CliResult<ClusterCsv> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Pipeline(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut ips = Vec::new();
    let mut raw_ids: Vec<u64> = Vec::new();
    for record in rdr.records() {
        let record =
            record.map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))?;
        let ip: Ipv4Addr = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| CliError::Pipeline(format!("bad harvester_ip in {}", path.display())))?;
        let cluster: u64 = record
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|_| CliError::Pipeline(format!("bad cluster_id in {}", path.display())))?;
        ips.push(ip);
        raw_ids.push(cluster);
    }
    if ips.len() < 2 {
        return Err(CliError::Pipeline(format!(
            "{} holds {} assignment rows; need at least 2",
            path.display(),
            ips.len()
        )));
    }
    // densify arbitrary cluster ids in first-appearance order
    let mut dense: BTreeMap<u64, usize> = BTreeMap::new();
    let mut assignments = Vec::with_capacity(raw_ids.len());
    for id in raw_ids {
        let next = dense.len();
        assignments.push(*dense.entry(id).or_insert(next));
    }
    let k = dense.len();
    let partition = Partition::new(assignments, k)?;
    Ok(ClusterCsv { ips, partition })
}

fn read_label_csv(path: &Path) -> CliResult<BTreeMap<Ipv4Addr, String>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Pipeline(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record =
            record.map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))?;
        let ip: Ipv4Addr = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| CliError::Pipeline(format!("bad harvester_ip in {}", path.display())))?;
        out.insert(ip, record.get(1).unwrap_or("").to_string());
    }
    Ok(out)
}

pub fn cmd_validate(a: ValidateArgs) -> CliResult<()> {
    let assignment = read_cluster_csv(&a.clusters)?;
    let truth: Option<GroundTruth> = match &a.ground_truth {
        None => None,
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Pipeline(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| {
                CliError::Pipeline(format!("invalid ground truth {}: {e}", p.display()))
            })?)
        }
    };
    let label_file = match &a.labels {
        None => None,
        Some(p) => Some(read_label_csv(p)?),
    };
    if truth.is_none() && label_file.is_none() {
        return Err(CliError::Usage(
            "validate needs --ground-truth or --labels".into(),
        ));
    }

    let missing_err = |ip: Ipv4Addr, what: &str| {
        CliError::Pipeline(format!("node-set mismatch: {ip} missing from {what}"))
    };

    // reference labels for the agreement indices
    let (labels, phisher): (Vec<String>, Option<Vec<bool>>) = if let Some(gt) = &truth {
        for ip in &assignment.ips {
            if !gt.harvesters.contains_key(ip) {
                return Err(missing_err(*ip, "ground truth"));
            }
        }
        let labels = gt
            .communities_for(&assignment.ips)
            .expect("membership checked")
            .iter()
            .map(|c| format!("community:{c}"))
            .collect();
        let phisher = gt.phishers_for(&assignment.ips).expect("membership checked");
        (labels, Some(phisher))
    } else {
        let table = label_file.as_ref().expect("checked above");
        let mut labels = Vec::with_capacity(assignment.ips.len());
        for ip in &assignment.ips {
            labels.push(
                table
                    .get(ip)
                    .ok_or_else(|| missing_err(*ip, "labels file"))?
                    .clone(),
            );
        }
        let phisher = if labels.iter().all(|l| l == "phisher" || l == "non-phisher") {
            Some(labels.iter().map(|l| l == "phisher").collect())
        } else {
            None
        };
        (labels, phisher)
    };

    let counts = pair_counts(&labels, assignment.partition.assignments())?;
    let mut rho_avg = BTreeMap::new();
    if let Some(dump) = &a.temporal_dump {
        let text = fs::read_to_string(dump)
            .map_err(|e| CliError::Pipeline(format!("cannot read {}: {e}", dump.display())))?;
        let entries = read_coordinate(&text).map_err(CliError::Pipeline)?;
        if entries.nrows() != assignment.ips.len() {
            return Err(CliError::Pipeline(format!(
                "temporal dump has {} rows but the cluster CSV has {}",
                entries.nrows(),
                assignment.ips.len()
            )));
        }
        let count = entries.ncols();
        let h = CoincidenceMatrix {
            kind: CoincidenceKind::Temporal,
            entries,
            harvesters: assignment.ips.clone(),
            columns: ColumnMeta::Unlabeled { count },
        };
        if let Some(gt) = &truth {
            let index: BTreeMap<Ipv4Addr, usize> = assignment
                .ips
                .iter()
                .enumerate()
                .map(|(i, ip)| (*ip, i))
                .collect();
            for (gid, members) in gt.coordinated_members() {
                let rows: Vec<usize> = members.iter().filter_map(|ip| index.get(ip).copied()).collect();
                if rows.len() < 2 {
                    continue;
                }
                if let Ok(corr) = temporal_correlation_group(&h, &rows) {
                    rho_avg.insert(format!("coordinated:{gid}"), corr.rho_avg);
                }
            }
        }
        rho_avg.extend(per_cluster_rho(&h, &assignment.partition));
    }

    let report = ValidationReport {
        rand: Some(rand_index(&counts)?),
        adjusted_rand: Some(adjusted_rand_index(&labels, assignment.partition.assignments())?),
        clusters: phisher
            .as_deref()
            .map(|flags| cluster_phishing_purity(&assignment.partition, flags))
            .unwrap_or_default(),
        prefix_groups: ip_prefix_groups(&assignment.ips, 24)?,
        rho_avg,
    };

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Pipeline(format!("report serialization: {e}")))?;
    println!("{json}");
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("validation.json"), json.clone() + "\n")?;
        let mut inputs: Vec<&Path> = vec![&a.clusters];
        if let Some(p) = a.ground_truth.as_deref() {
            inputs.push(p);
        }
        if let Some(p) = a.labels.as_deref() {
            inputs.push(p);
        }
        if let Some(p) = a.temporal_dump.as_deref() {
            inputs.push(p);
        }
        let config_json = serde_json::json!({
            "clusters": a.clusters.display().to_string(),
            "ground_truth": a.ground_truth.as_ref().map(|p| p.display().to_string()),
            "labels": a.labels.as_ref().map(|p| p.display().to_string()),
            "temporal_dump": a.temporal_dump.as_ref().map(|p| p.display().to_string()),
        });
        write_manifest(out, "validate", config_json, &inputs, &["validation.json"])?;
    }
    Ok(())
}

pub fn cmd_ingest_report(a: IngestReportArgs) -> CliResult<()> {
    let format = match a.format.as_deref() {
        Some(raw) => parse_format(raw)?,
        None => LogFormat::Csv,
    };
    let events = load_events(&a.log, format)?;

    let addresses: BTreeMap<YearMonth, u64> = match &a.addresses {
        Some(p) => {
            let file = fs::File::open(p)
                .map_err(|e| CliError::Pipeline(format!("cannot open {}: {e}", p.display())))?;
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            let mut map = BTreeMap::new();
            for record in rdr.records() {
                let record =
                    record.map_err(|e| CliError::Pipeline(format!("{}: {e}", p.display())))?;
                let month: YearMonth = record
                    .get(0)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| CliError::Pipeline(format!("bad month in {}", p.display())))?;
                let count: u64 = record.get(1).unwrap_or("").parse().map_err(|_| {
                    CliError::Pipeline(format!("bad address count in {}", p.display()))
                })?;
                map.insert(month, count);
            }
            map
        }
        None => {
            // fall back to per-event address deltas
            let mut map: BTreeMap<YearMonth, u64> = BTreeMap::new();
            for ev in &events {
                *map.entry(YearMonth::of(&ev.timestamp)).or_insert(0) +=
                    ev.addresses_acquired_delta;
            }
            map
        }
    };

    let rows = monthly_volume_report(&events, &addresses)?;
    println!("month\temails\taddresses\tratio");
    for row in &rows {
        println!("{}\t{}\t{}\t{}", row.month, row.emails, row.addresses, row.ratio);
    }

    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        let mut text = String::from("month,emails,addresses,ratio\n");
        for row in &rows {
            text.push_str(&format!(
                "{},{},{},{}\n",
                row.month, row.emails, row.addresses, row.ratio
            ));
        }
        fs::write(out.join("volume_report.csv"), text)?;
        let mut inputs: Vec<&Path> = vec![&a.log];
        if let Some(p) = a.addresses.as_deref() {
            inputs.push(p);
        }
        let config_json = serde_json::json!({
            "log": a.log.display().to_string(),
            "addresses": a.addresses.as_ref().map(|p| p.display().to_string()),
        });
        write_manifest(out, "ingest-report", config_json, &inputs, &["volume_report.csv"])?;
    }
    Ok(())
}
