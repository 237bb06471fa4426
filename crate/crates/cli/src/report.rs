//! Strategy × ratio table from a bench directory's `aggregate.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::harness::{AggregateRow, AGGREGATE_HEADER};

/// Strict reader for the aggregate file written by `bench`.
pub fn read_aggregate(path: &Path) -> CliResult<Vec<AggregateRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == AGGREGATE_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("unexpected header '{h}'"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(err(n, format!("expected 8 fields, found {}", fields.len())));
        }
        let num = |col: usize| -> CliResult<f64> {
            fields[col]
                .parse()
                .map_err(|_| err(n, format!("column {} ('{}') is not a number", col + 1, fields[col])))
        };
        rows.push(AggregateRow {
            strategy: fields[0].to_string(),
            ratio: num(1)?,
            seeds: fields[2]
                .parse()
                .map_err(|_| err(n, format!("column 3 ('{}') is not a count", fields[2])))?,
            final_acc_mean: num(3)?,
            final_acc_std: num(4)?,
            total_forwards_mean: num(5)?,
            total_forwards_std: num(6)?,
            train_forwards_mean: num(7)?,
        });
    }
    Ok(rows)
}

/// Rows in file order of first appearance, ratio columns ascending. Each
/// cell shows accuracy (percent, mean ± std) and mean total forwards.
pub fn render(rows: &[AggregateRow]) -> String {
    let mut strategies: Vec<&str> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    for r in rows {
        if !strategies.contains(&r.strategy.as_str()) {
            strategies.push(&r.strategy);
        }
        if !ratios.contains(&r.ratio) {
            ratios.push(r.ratio);
        }
    }
    ratios.sort_by(f64::total_cmp);

    const CELL: usize = 30;
    let mut s = format!("{:<14}", "strategy");
    for r in &ratios {
        write!(s, "{:>CELL$}", format!("ratio {r}: acc% / forwards")).unwrap();
    }
    s.push('\n');
    for st in strategies {
        write!(s, "{st:<14}").unwrap();
        for &ratio in &ratios {
            let cell = match rows.iter().find(|r| r.strategy == st && r.ratio == ratio) {
                Some(r) => format!(
                    "{:.2} ± {:.2} / {:.0}",
                    100.0 * r.final_acc_mean,
                    100.0 * r.final_acc_std,
                    r.total_forwards_mean
                ),
                None => "-".to_string(),
            };
            write!(s, "{cell:>CELL$}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn report(dir: &Path) -> CliResult<String> {
    Ok(render(&read_aggregate(&dir.join("aggregate.csv"))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, ratio: f64, acc: f64) -> AggregateRow {
        AggregateRow {
            strategy: strategy.into(),
            ratio,
            seeds: 2,
            final_acc_mean: acc,
            final_acc_std: 0.01,
            total_forwards_mean: 1000.0,
            total_forwards_std: 0.0,
            train_forwards_mean: 1000.0,
        }
    }

    #[test]
    fn table_shape_and_order() {
        let rows = [row("agent", 0.5, 0.9), row("agent", 0.3, 0.8), row("full", 0.5, 0.95)];
        let t = render(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].find("ratio 0.3").unwrap() < lines[0].find("ratio 0.5").unwrap());
        assert!(lines[1].starts_with("agent") && lines[1].contains("80.00 ± 1.00 / 1000"));
        assert!(lines[2].starts_with("full") && lines[2].contains('-'));
    }

    #[test]
    fn corrupt_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aggregate.csv");
        let good = row("full", 0.5, 0.9).to_csv();
        fs::write(&path, format!("{AGGREGATE_HEADER}\n{good}\nfull,0.5,2,x,0,0,0,0\n")).unwrap();
        match read_aggregate(&path) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&path, format!("{AGGREGATE_HEADER}\n{good}\n")).unwrap();
        assert_eq!(read_aggregate(&path).unwrap(), vec![row("full", 0.5, 0.9)]);
    }
}
