//! CSV and JSON writers.

use std::io::Write;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{ExperimentResult, Row};

pub const CSV_COLUMNS: [&str; 13] = [
    "trial",
    "sweep_name",
    "sweep_value",
    "method",
    "user_index_or_blank",
    "rate_bits",
    "utility",
    "harvested_uW",
    "interference_uW",
    "outer_iters",
    "inner_iters",
    "wall_ms",
    "status",
];

/// Header line always, then one line per row; missing values are empty cells.
pub fn write_csv<W: Write>(rows: &[Row], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    config: &'a ExperimentConfig,
    rows: &'a [Row],
}

/// `{ "config": ..., "rows": [...] }`; floats round-trip exactly.
pub fn write_json<W: Write>(res: &ExperimentResult, out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, &JsonDoc { config: &res.config, rows: &res.rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> Row {
        Row {
            trial: 3,
            sweep_name: "e_th".into(),
            sweep_value: Some(0.1),
            method: "alg1-wsr".into(),
            user_index_or_blank: None,
            rate_bits: Some(1.0 / 3.0),
            utility: None,
            harvested_uw: Some(2.5),
            interference_uw: None,
            outer_iters: Some(7),
            inner_iters: Some(120),
            wall_ms: Some(1.5),
            status: "converged".into(),
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn csv_blanks_and_roundtrip() {
        let mut buf = Vec::new();
        write_csv(&[row()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "3,e_th,0.1,alg1-wsr,,0.3333333333333333,,2.5,,7,120,1.5,converged");
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let back: Row = rd.deserialize().next().unwrap().unwrap();
        assert_eq!(back, row());
    }

    #[test]
    fn json_floats_roundtrip() {
        let r = Row { rate_bits: Some(0.1 + 0.2), ..row() };
        let text = serde_json::to_string(&r).unwrap();
        let back: Row = serde_json::from_str(&text).unwrap();
        assert_eq!(back.rate_bits.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    }
}
