//! Trajectory CSV files: header `t,node_0,...`, one row per time level.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hevi_core::Trajectory;

use crate::error::{CliError, CliResult};

pub fn format_trajectory(y: &Trajectory) -> String {
    let mut out = String::from("t");
    for i in 0..y.dim() {
        let _ = write!(out, ",node_{i}");
    }
    out.push('\n');
    for (t, row) in y.times().iter().zip(y.rows()) {
        let _ = write!(out, "{t:?}");
        for v in row {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, y: &Trajectory) -> CliResult<()> {
    fs::write(path, format_trajectory(y)).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_trajectory(path: &Path, text: &str) -> CliResult<Trajectory> {
    let err = |line: usize, message: String| CliError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(err(1, "header must read t,node_0,...".into()));
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(err(idx + 1, format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let mut nums = Vec::with_capacity(dim + 1);
        for f in fields {
            let v: f64 = f.parse().map_err(|_| err(idx + 1, format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(err(idx + 1, format!("non-finite value {f}")));
            }
            nums.push(v);
        }
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    if values.is_empty() {
        return Err(err(2, "no data rows".into()));
    }
    Trajectory::new(times, values).map_err(|e| err(1, e.to_string()))
}

pub fn read_trajectory(path: &Path) -> CliResult<Trajectory> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectory(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let y = Trajectory::new(vec![0.0, 0.1], vec![vec![1.0 / 3.0, -2e-300], vec![1e20, 0.1 + 0.2]]).unwrap();
        let text = format_trajectory(&y);
        assert!(text.starts_with("t,node_0,node_1\n"));
        assert_eq!(parse_trajectory(Path::new("x"), &text).unwrap(), y);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "t,node_0\n0,1\n0.5,abc\n";
        match parse_trajectory(Path::new("x.csv"), text) {
            Err(CliError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_trajectory(Path::new("x.csv"), "t,node_0\n0,1,2\n"),
            Err(CliError::Csv { line: 2, .. })
        ));
        assert!(matches!(parse_trajectory(Path::new("x.csv"), "time,a\n"), Err(CliError::Csv { line: 1, .. })));
    }
}
