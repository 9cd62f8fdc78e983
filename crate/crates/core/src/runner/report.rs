//! JSONL/CSV persistence, SVG figures and the plain-text report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::runner::exec::{matched_pairs, MatchedPair, RunRecord, RunStatus};
use crate::runner::plot;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PAIRS_FILE: &str = "pairs.csv";

pub fn write_jsonl(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    run_id: usize,
    dataset: &'a str,
    model: &'a str,
    family: String,
    size: String,
    widths: String,
    degree: usize,
    activation: String,
    init: String,
    optimizer: String,
    lr: f64,
    batch_size: usize,
    max_epochs: usize,
    trainer: String,
    seed: u64,
    sweep_axis: Option<&'a str>,
    sweep_value: Option<&'a str>,
    status: &'static str,
    best_test_acc: Option<f64>,
    best_epoch: Option<usize>,
    params: usize,
    intrinsic_dim: Option<f64>,
    efficiency: Option<f64>,
    gap: Option<f64>,
    wall_seconds: f64,
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Ok => "ok",
        RunStatus::Diverged => "diverged",
        RunStatus::Failed => "failed",
    }
}

pub fn write_summary_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in records {
        w.serialize(SummaryRow {
            run_id: r.run_id,
            dataset: &r.dataset,
            model: &r.model,
            family: r.family.to_string(),
            size: r.size.to_string(),
            widths: r.widths.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            degree: r.degree,
            activation: r.activation.to_string(),
            init: r.scheme.init.to_string(),
            optimizer: r.scheme.optimizer.to_string(),
            lr: r.scheme.lr,
            batch_size: r.scheme.batch_size,
            max_epochs: r.scheme.max_epochs,
            trainer: r.scheme.trainer.to_string(),
            seed: r.seed,
            sweep_axis: r.sweep.as_ref().map(|t| t.axis.as_str()),
            sweep_value: r.sweep.as_ref().map(|t| t.value.as_str()),
            status: status_name(r.status),
            best_test_acc: r.best_test_acc,
            best_epoch: r.best_epoch,
            params: r.params,
            intrinsic_dim: r.intrinsic_dim,
            efficiency: r.efficiency,
            gap: r.gap,
            wall_seconds: r.wall_seconds,
        })
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pairs_csv(pairs: &[MatchedPair], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for p in pairs {
        w.serialize(p).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes `results.jsonl`, `summary.csv` and, when the records contain a
/// degree/width sweep, `pairs.csv` into `dir`.
pub fn write_results(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Contract("no records to write".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![dir.join(RESULTS_FILE), dir.join(SUMMARY_FILE)];
    write_jsonl(records, &files[0])?;
    write_summary_csv(records, &files[1])?;
    let pairs = matched_pairs(records);
    if !pairs.is_empty() {
        let p = dir.join(PAIRS_FILE);
        write_pairs_csv(&pairs, &p)?;
        files.push(p);
    }
    Ok(files)
}

/// Ordered `dataset → model → records` grouping used by the figures.
fn by_dataset_model(records: &[RunRecord]) -> Vec<(String, Vec<(String, Vec<&RunRecord>)>)> {
    let mut map: BTreeMap<&str, Vec<(String, Vec<&RunRecord>)>> = BTreeMap::new();
    for r in records {
        let models = map.entry(&r.dataset).or_default();
        match models.iter_mut().find(|(m, _)| *m == r.model) {
            Some((_, v)) => v.push(r),
            None => models.push((r.model.clone(), vec![r])),
        }
    }
    map.into_iter().map(|(d, m)| (d.to_string(), m)).collect()
}

/// Per-dataset box plot groups: one box per model holding the best test
/// accuracy of every backprop scheme.
pub fn boxplot_groups(records: &[RunRecord]) -> Vec<(String, Vec<(String, Vec<f64>)>)> {
    by_dataset_model(records)
        .into_iter()
        .map(|(d, models)| {
            let boxes = models
                .into_iter()
                .map(|(m, rs)| {
                    let vals = rs
                        .iter()
                        .filter(|r| r.sweep.is_none() && r.scheme.trainer == crate::runner::Trainer::Backprop)
                        .filter_map(|r| r.best_test_acc)
                        .collect();
                    (m, vals)
                })
                .collect();
            (d, boxes)
        })
        .collect()
}

/// Writes the SVG figures into `dir/plots` and returns their paths.
pub fn emit_plots(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Contract("no records to plot".into()));
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut files = Vec::new();
    let mut save = |name: &str, svg: String| -> Result<()> {
        let p = plots.join(name);
        fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
        files.push(p);
        Ok(())
    };

    let bars: Vec<(String, Vec<(String, f64)>)> = by_dataset_model(records)
        .into_iter()
        .map(|(d, models)| {
            let vals = models
                .into_iter()
                .map(|(m, rs)| {
                    let best = rs.iter().filter_map(|r| r.best_test_acc).fold(0.0, f64::max);
                    (m, best)
                })
                .collect();
            (d, vals)
        })
        .collect();
    save("accuracy_bars.svg", plot::grouped_bars("Best test accuracy", "test accuracy", &bars))?;
    save(
        "scheme_boxplot.svg",
        plot::boxplots("Test accuracy across training schemes", "best test accuracy", &boxplot_groups(records)),
    )?;

    let mut families: BTreeMap<String, (Vec<(f64, f64)>, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.params > 0) {
        let e = families.entry(r.family.to_string()).or_default();
        if let Some(ef) = r.efficiency {
            e.0.push((r.params as f64, ef));
        }
        if let Some(g) = r.gap {
            e.1.push((r.params as f64, g));
        }
    }
    let ef: Vec<_> = families.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect();
    let gap: Vec<_> = families.iter().map(|(k, v)| (k.clone(), v.1.clone())).collect();
    save("ef_vs_size.svg", plot::scatter("Efficiency vs model size", "parameters", "EF", &ef, true))?;
    save(
        "gap_vs_size.svg",
        plot::scatter("Generalization gap vs model size", "parameters", "train - test accuracy", &gap, true),
    )?;

    let sweep = |axis: &str| -> Vec<(f64, f64)> {
        records
            .iter()
            .filter(|r| r.sweep.as_ref().is_some_and(|t| t.axis == axis))
            .filter_map(|r| Some((r.params as f64, r.best_test_acc?)))
            .collect()
    };
    let (deg, wid) = (sweep("degree"), sweep("width"));
    if !deg.is_empty() || !wid.is_empty() {
        let series = vec![("degree".to_string(), deg), ("width".to_string(), wid)];
        save(
            "degree_vs_width.svg",
            plot::scatter("Degree vs width at matched size", "parameters", "best test accuracy", &series, true),
        )?;
    }
    Ok(files)
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |a| format!("{:.2}%", 100.0 * a))
}

/// Plain-text digest: best run per dataset/model, status counts, matched
/// degree/width pairs and activation comparisons.
pub fn report_text(records: &[RunRecord]) -> String {
    let mut s = String::new();
    let count = |st| records.iter().filter(|r| r.status == st).count();
    let _ = writeln!(
        s,
        "{} runs: {} ok, {} diverged, {} failed",
        records.len(),
        count(RunStatus::Ok),
        count(RunStatus::Diverged),
        count(RunStatus::Failed)
    );
    for (d, models) in by_dataset_model(records) {
        let _ = writeln!(s, "\n[{d}]");
        for (m, rs) in models {
            let best = rs
                .iter()
                .filter(|r| r.best_test_acc.is_some())
                .max_by(|a, b| a.best_test_acc.partial_cmp(&b.best_test_acc).unwrap_or(std::cmp::Ordering::Equal));
            match best {
                Some(b) => {
                    let _ = writeln!(
                        s,
                        "  {m:<20} P={:<8} best {} at epoch {} ({}), EF {}, gap {}",
                        b.params,
                        pct(b.best_test_acc),
                        b.best_epoch.unwrap_or(0),
                        b.scheme_label(),
                        b.efficiency.map_or("-".into(), |e| format!("{e:.4}")),
                        b.gap.map_or("-".into(), |g| format!("{g:+.4}"))
                    );
                }
                None => {
                    let _ = writeln!(s, "  {m:<20} no completed runs");
                }
            }
        }
    }

    let pairs = matched_pairs(records);
    if !pairs.is_empty() {
        let _ = writeln!(s, "\nDegree vs width (matched parameter counts):");
        let mut wins = 0;
        for p in &pairs {
            let _ = writeln!(
                s,
                "  degree {:<2} P={:<8} {:>8}   |   width {:<4} P={:<8} {:>8}   (size mismatch {:.1}%)",
                p.degree,
                p.degree_params,
                pct(p.degree_acc),
                p.width,
                p.width_params,
                pct(p.width_acc),
                100.0 * p.param_mismatch
            );
            if p.width_wins() == Some(true) {
                wins += 1;
            }
        }
        let _ = writeln!(
            s,
            "  wider layer beats higher degree in {wins} of {} pairs{}",
            pairs.len(),
            if 2 * wins > pairs.len() {
                " (width and degree are not interchangeable here)"
            } else {
                ""
            }
        );
    }

    let acts: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.sweep.as_ref().is_some_and(|t| t.axis == "activation"))
        .collect();
    if !acts.is_empty() {
        let _ = writeln!(s, "\nActivation sweep:");
        for r in &acts {
            let _ = writeln!(s, "  {:<8} {}", r.activation, pct(r.best_test_acc));
        }
        if let Some(best) = acts
            .iter()
            .filter(|r| r.best_test_acc.is_some())
            .max_by(|a, b| a.best_test_acc.partial_cmp(&b.best_test_acc).unwrap_or(std::cmp::Ordering::Equal))
        {
            let _ = writeln!(s, "  best activation: {}", best.activation);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::{expand_grid, ExperimentConfig};
    use crate::runner::exec::{run_experiment, PreparedData};

    fn records(n_lr: usize) -> Vec<RunRecord> {
        let mut cfg = ExperimentConfig::from_toml(
            r#"
            version = 1
            [dataset]
            source = "synthetic"
            kind = "gaussian-blobs"
            train = 90
            test = 30
            dim = 2
            classes = 3
            [[models]]
            family = "mlp"
            widths = [4]
            [grid]
            batch-size = 30
            max-epochs = 1
            "#,
        )
        .unwrap();
        cfg.grid.learning_rates.truncate(n_lr);
        let data = PreparedData::load(&cfg, Path::new(".")).unwrap();
        assert_eq!(expand_grid(&cfg, 2, 3).unwrap().len(), 9 * n_lr);
        run_experiment(&cfg, &data, &|_| {}).unwrap()
    }

    #[test]
    fn jsonl_and_csv_are_bijective() {
        let recs = records(3);
        assert_eq!(recs.len(), 27);
        let dir = tempfile::tempdir().unwrap();
        let files = write_results(&recs, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 27);
        let mut rdr = csv::Reader::from_path(&files[1]).unwrap();
        assert_eq!(rdr.records().count(), 27);
        assert_eq!(read_jsonl(&files[0]).unwrap(), recs);
    }

    #[test]
    fn bad_jsonl_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let recs = records(1);
        write_jsonl(&recs, &p).unwrap();
        let mut text = fs::read_to_string(&p).unwrap();
        text.push_str("{oops\n");
        fs::write(&p, text).unwrap();
        match read_jsonl(&p) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, recs.len() + 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let recs = records(1);
        assert!(matches!(write_results(&recs, &blocker.join("sub")), Err(Error::Io { .. })));
        assert!(matches!(write_results(&[], dir.path()), Err(Error::Contract(_))));
    }

    #[test]
    fn boxplots_group_by_dataset() {
        let mut recs = records(1);
        let mut other = recs.clone();
        for r in &mut other {
            r.dataset = "fashion".into();
            r.model = "kan-small".into();
        }
        recs.extend(other);
        let groups = boxplot_groups(&recs);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, "fashion");
        assert_eq!(groups[1].1.len(), 1);
        assert_eq!(groups[1].1[0].1.len(), 9);

        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&recs, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let box_svg = fs::read_to_string(dir.path().join("plots/scheme_boxplot.svg")).unwrap();
        assert_eq!(box_svg.matches(r#"class="box""#).count(), 2);
        assert!(report_text(&recs).contains("[fashion]"));
    }
}
