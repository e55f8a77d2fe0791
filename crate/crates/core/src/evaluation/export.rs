use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, RoleMatrix};
use crate::envs::{EventCounts, EventKind};

pub const RESULTS_HEADER: [&str; 10] = [
    "partner",
    "role",
    "episodes",
    "mean_collective",
    "std_collective",
    "mean_individual",
    "beams",
    "cleans",
    "harvests",
    "deliveries",
];

/// One raw per-episode line of a run's `records.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    /// `crossplay` or `rolematrix`.
    pub kind: String,
    pub partner: String,
    pub role: String,
    pub episode: usize,
    /// Raw return of every agent; the focal agent is first.
    pub rewards: Vec<f64>,
    /// Focal agent's event counts.
    pub events: EventCounts,
}

/// Aggregate over the records of one (partner, role) pair. Counters are
/// per-episode means for the focal agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub partner: String,
    pub role: String,
    pub episodes: usize,
    pub mean_collective: f64,
    pub std_collective: f64,
    pub mean_individual: f64,
    pub beams: f64,
    pub cleans: f64,
    pub harvests: f64,
    pub deliveries: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses a JSONL record log. Blank lines are skipped; anything else that
/// fails to parse is reported with its 1-based line number.
pub fn read_records(text: &str) -> Result<Vec<EpisodeRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(line).map_err(|e| EvalError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.rewards.is_empty() || rec.rewards.iter().any(|r| !r.is_finite()) {
            return Err(EvalError::Corrupt {
                line: i + 1,
                message: "rewards must be a nonempty list of finite numbers".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Groups records by (partner, role) in order of first appearance.
pub fn summarize_records(records: &[EpisodeRecord]) -> Vec<ResultRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in records {
        let k = (r.partner.as_str(), r.role.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(partner, role)| {
            let group: Vec<&EpisodeRecord> = records.iter().filter(|r| r.partner == partner && r.role == role).collect();
            let n = group.len() as f64;
            let coll: Vec<f64> = group.iter().map(|r| r.rewards.iter().sum()).collect();
            let mean = coll.iter().sum::<f64>() / n;
            let std = (coll.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
            let ev = |k: EventKind| group.iter().map(|r| f64::from(r.events[k.index()])).sum::<f64>() / n;
            ResultRow {
                partner: partner.to_string(),
                role: role.to_string(),
                episodes: group.len(),
                mean_collective: mean,
                std_collective: std,
                mean_individual: group.iter().map(|r| r.rewards[0]).sum::<f64>() / n,
                beams: ev(EventKind::Beam),
                cleans: ev(EventKind::Clean),
                harvests: ev(EventKind::Harvest),
                deliveries: ev(EventKind::Delivery),
            }
        })
        .collect()
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wr.write_record([
            r.partner.clone(),
            r.role.clone(),
            r.episodes.to_string(),
            r.mean_collective.to_string(),
            r.std_collective.to_string(),
            r.mean_individual.to_string(),
            r.beams.to_string(),
            r.cleans.to_string(),
            r.harvests.to_string(),
            r.deliveries.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Long format, one row per ordered role pair.
pub fn role_matrix_csv(labels: &[String], means: &[Vec<f64>]) -> String {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["role", "partner", "mean_reward"]).expect("in-memory write");
    for (i, row) in means.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            wr.write_record([labels[i].as_str(), labels[j].as_str(), &v.to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(wr.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Behavioural counters of the spotlight roles, averaged over partners.
pub fn spotlight_csv(matrix: &RoleMatrix) -> String {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["role".to_string(), "mean_reward".to_string()];
    header.extend(EventKind::ALL.iter().map(|k| k.name().to_string()));
    wr.write_record(&header).expect("in-memory write");
    for i in matrix.spotlight_rows() {
        let pairs = &matrix.pairs[i];
        let k = pairs.len() as f64;
        let mut row = vec![
            matrix.labels[i].clone(),
            (matrix.means[i].iter().sum::<f64>() / k).to_string(),
        ];
        for e in EventKind::ALL {
            row.push((pairs.iter().map(|p| p.event_mean(e)).sum::<f64>() / k).to_string());
        }
        wr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wr.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Hex SHA-256 of a resolved config text.
pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn summary_json(config_text: &str, rows: &[ResultRow]) -> String {
    let v = serde_json::json!({
        "config_sha256": config_hash(config_text),
        "rows": rows,
    });
    serde_json::to_string_pretty(&v).expect("summary serializes") + "\n"
}

/// Rebuilds `results.csv` and `summary.json` (plus `role_matrix.csv` when
/// role-matrix records are present) from `records.jsonl` in `run_dir`.
/// A missing record log counts as an empty run.
pub fn export_run(run_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let rec_path = run_dir.join("records.jsonl");
    let text = match fs::read_to_string(&rec_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io_err(&rec_path)(e)),
    };
    let records = read_records(&text)?;
    let rows = summarize_records(&records);
    let mut written = Vec::new();

    let csv_path = run_dir.join("results.csv");
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf).map_err(|e| EvalError::Invalid(e.to_string()))?;
    fs::write(&csv_path, buf).map_err(io_err(&csv_path))?;
    written.push(csv_path);

    let matrix: Vec<&EpisodeRecord> = records.iter().filter(|r| r.kind == "rolematrix").collect();
    if !matrix.is_empty() {
        let mut labels: Vec<String> = Vec::new();
        for r in &matrix {
            if !labels.contains(&r.role) {
                labels.push(r.role.clone());
            }
        }
        let k = labels.len();
        let mut sums = vec![vec![0.0; k]; k];
        let mut counts = vec![vec![0usize; k]; k];
        for r in &matrix {
            let i = labels.iter().position(|l| *l == r.role).expect("collected");
            let j = labels.iter().position(|l| *l == r.partner).ok_or_else(|| EvalError::Corrupt {
                line: 0,
                message: format!("role matrix partner {:?} is not a role", r.partner),
            })?;
            sums[i][j] += r.rewards[0];
            counts[i][j] += 1;
        }
        let means: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(s, c)| s.iter().zip(c).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect())
            .collect();
        let p = run_dir.join("role_matrix.csv");
        fs::write(&p, role_matrix_csv(&labels, &means)).map_err(io_err(&p))?;
        written.push(p);
    }

    let cfg_path = run_dir.join("config.resolved.toml");
    let cfg_text = fs::read_to_string(&cfg_path).unwrap_or_default();
    let p = run_dir.join("summary.json");
    fs::write(&p, summary_json(&cfg_text, &rows)).map_err(io_err(&p))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(partner: &str, role: &str, r: [f64; 2], cleans: u32) -> EpisodeRecord {
        let mut events = [0; EventKind::COUNT];
        events[EventKind::Clean.index()] = cleans;
        EpisodeRecord {
            kind: "crossplay".into(),
            partner: partner.into(),
            role: role.into(),
            episode: 0,
            rewards: r.to_vec(),
            events,
        }
    }

    #[test]
    fn empty_run_gives_header_only() {
        let mut buf = Vec::new();
        write_results_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn summary_groups_by_pair() {
        let recs = vec![
            rec("a", "x", [1.0, 1.0], 2),
            rec("a", "x", [3.0, 1.0], 0),
            rec("b", "x", [0.0, 0.0], 0),
        ];
        let rows = summarize_records(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].episodes, 2);
        assert_eq!(rows[0].mean_collective, 3.0);
        assert_eq!(rows[0].std_collective, 1.0);
        assert_eq!(rows[0].mean_individual, 2.0);
        assert_eq!(rows[0].cleans, 1.0);
    }

    #[test]
    fn corrupt_line_is_located() {
        let good = serde_json::to_string(&rec("a", "x", [1.0, 0.0], 0)).unwrap();
        let text = format!("{good}\n{{not json\n");
        match read_records(&text) {
            Err(EvalError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corrupt-line error, got {other:?}"),
        }
    }

    #[test]
    fn role_matrix_long_format() {
        let labels: Vec<String> = ["p", "q", "r"].iter().map(|s| s.to_string()).collect();
        let means = vec![vec![0.0; 3]; 3];
        assert_eq!(role_matrix_csv(&labels, &means).lines().count(), 1 + 9);
    }
}
