//! Plain-text serialization of series and phase-space fields.
//!
//! CSV files start with a `# schema=1` comment line followed by a header
//! row. Numbers are written in scientific notation with 17 significant
//! digits so that files are byte-reproducible.

use std::fmt::Write as _;

use crate::fokker_planck::PhaseSpaceField;

/// CSV schema version written in the first comment line.
pub const CSV_SCHEMA: u32 = 1;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column-oriented table rendered as CSV.
pub fn series_csv(headers: &[&str], columns: &[Vec<f64>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema={CSV_SCHEMA}");
    let _ = writeln!(out, "{}", headers.join(","));
    let rows = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    for r in 0..rows {
        let line: Vec<String> = columns
            .iter()
            .map(|c| c.get(r).map(|v| fmt_f64(*v)).unwrap_or_default())
            .collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Long-format CSV of a phase-space field: `q,p,value`.
pub fn field_csv(field: &PhaseSpaceField) -> String {
    let l = &field.lattice;
    let mut out = String::new();
    let _ = writeln!(out, "# schema={CSV_SCHEMA}");
    let _ = writeln!(out, "q,p,value");
    for i in 0..l.n_q {
        let q = fmt_f64(l.q_center(i));
        for k in 0..l.n_p {
            let _ = writeln!(out, "{},{},{}", q, fmt_f64(l.p_center(k)), fmt_f64(field.get(i, k)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn series_has_schema_line() {
        let s = series_csv(&["t", "x"], &[vec![0.0, 1.0], vec![2.0, 3.0]]);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("# schema=1"));
        assert_eq!(lines.next(), Some("t,x"));
        assert_eq!(lines.count(), 2);
    }
}
