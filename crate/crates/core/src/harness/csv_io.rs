use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{SimColumns, SweepRow};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "lambda",
    "model_per",
    "model_per1",
    "valid",
    "sim_per",
    "sim_per_ci",
    "sim_per1",
    "sim_per1_ci",
];

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// Writes the header and one line per row. Sim columns are blank when the
/// simulator did not run or counted no attempts.
pub fn write_csv_to<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidSweep("no rows to write".into()));
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        let mut record = vec![
            num(row.lambda),
            num(row.model_per),
            num(row.model_per1),
            row.valid.to_string(),
        ];
        match &row.sim {
            Some(s) => record.extend([s.per, s.per_ci, s.per1, s.per1_ci].map(num)),
            None => record.extend(std::iter::repeat_n(String::new(), 4)),
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    write_csv_to(rows, std::io::BufWriter::new(file))
}

pub fn read_csv_from<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidSweep(format!("unexpected header {header:?}")));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidSweep(format!("bad number {s:?}")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let sim = if record[4].is_empty() {
            None
        } else {
            Some(SimColumns {
                per: parse(&record[4])?,
                per_ci: parse(&record[5])?,
                per1: parse(&record[6])?,
                per1_ci: parse(&record[7])?,
            })
        };
        rows.push(SweepRow {
            lambda: parse(&record[0])?,
            model_per: parse(&record[1])?,
            model_per1: parse(&record[2])?,
            valid: record[3]
                .parse()
                .map_err(|_| Error::InvalidSweep(format!("bad flag {:?}", &record[3])))?,
            sim,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    read_csv_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(lambda: f64, sim: bool) -> SweepRow {
        SweepRow {
            lambda,
            model_per: 0.1234567891234,
            model_per1: 0.05,
            valid: lambda < 0.07,
            sim: sim.then_some(SimColumns {
                per: 0.2,
                per_ci: 0.01,
                per1: 0.1,
                per1_ci: 0.005,
            }),
        }
    }

    fn to_string(rows: &[SweepRow]) -> String {
        let mut buf = Vec::new();
        write_csv_to(rows, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn one_row_two_lines() {
        let text = to_string(&[row(0.01, true)]);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    }

    #[test]
    fn model_only_rows_leave_sim_blank() {
        let text = to_string(&[row(0.01, false)]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert!(lines.next().unwrap().ends_with(",true,,,,"));
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(write_csv_to(&[], Vec::new()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let rows = vec![row(0.001, false), row(0.1, true)];
        write_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
    }

    proptest! {
        #[test]
        fn round_trip_within_1e9(
            values in proptest::collection::vec((1e-6..1e2f64, 0.0..=1.0f64, 0.0..=1.0f64, any::<bool>(), proptest::option::of((0.0..=1.0f64, 0.0..0.5f64))), 1..20)
        ) {
            let rows: Vec<SweepRow> = values.iter().map(|&(lambda, a, b, valid, sim)| SweepRow {
                lambda,
                model_per: a,
                model_per1: b,
                valid,
                sim: sim.map(|(p, ci)| SimColumns { per: p, per_ci: ci, per1: p / 2.0, per1_ci: ci / 2.0 }),
            }).collect();
            let back = read_csv_from(to_string(&rows).as_bytes()).unwrap();
            prop_assert_eq!(back.len(), rows.len());
            for (x, y) in rows.iter().zip(&back) {
                prop_assert!((x.lambda - y.lambda).abs() <= 1e-9 * x.lambda.max(1.0));
                prop_assert!((x.model_per - y.model_per).abs() <= 1e-9);
                prop_assert!((x.model_per1 - y.model_per1).abs() <= 1e-9);
                prop_assert_eq!(x.valid, y.valid);
                prop_assert_eq!(x.sim.is_some(), y.sim.is_some());
                if let (Some(a), Some(b)) = (&x.sim, &y.sim) {
                    prop_assert!((a.per - b.per).abs() <= 1e-9 && (a.per1_ci - b.per1_ci).abs() <= 1e-9);
                }
            }
        }
    }
}
