use std::io::{Read, Write};

use thiserror::Error;

use super::{EventKind, PeriodDiagnostics, Trajectory};

#[derive(Debug, Error)]
pub enum TrajectoryFileError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("events file has no Z columns")]
    NoQueueColumns,
    #[error("row {row}: {detail}")]
    BadRow { row: usize, detail: String },
}

/// `t,type,index,Z_<buffer>...,W,I_W,cost`, one row per sample.
pub fn write_events_csv<W: Write>(traj: &Trajectory, buffer_names: &[String], out: W) -> Result<(), TrajectoryFileError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "type".into(), "index".into()];
    header.extend(buffer_names.iter().map(|b| format!("Z_{b}")));
    header.extend(["W".into(), "I_W".into(), "cost".into()]);
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![s.t.to_string(), s.kind.as_str().into(), s.index.map_or(String::new(), |i| i.to_string())];
        row.extend(s.z.iter().map(|z| z.to_string()));
        row.extend([s.w.to_string(), s.i_w.to_string(), s.cost.to_string()]);
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn flag(b: Option<bool>) -> String {
    b.map_or(String::new(), |b| (b as u8).to_string())
}

/// `k,tau,case,idle,Texe,stretch,A,B,C,D,E,N`; flags are blank for the
/// period still open at the horizon.
pub fn write_periods_csv<W: Write>(traj: &Trajectory, diags: &[PeriodDiagnostics], out: W) -> Result<(), TrajectoryFileError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "tau", "case", "idle", "Texe", "stretch", "A", "B", "C", "D", "E", "N"])?;
    for p in &traj.periods {
        let d = diags.iter().find(|d| d.k == p.k);
        w.write_record([
            p.k.to_string(),
            p.tau.to_string(),
            u8::from(p.plan.case_tag).to_string(),
            p.plan.idle_time.to_string(),
            p.plan.exec_time.to_string(),
            p.plan.stretch.to_string(),
            flag(d.map(|d| d.a)),
            flag(d.map(|d| d.b)),
            flag(d.map(|d| d.c)),
            flag(d.map(|d| d.d)),
            flag(d.map(|d| d.e)),
            flag(d.map(|d| d.n)),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row of an events file.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub t: f64,
    pub kind: EventKind,
    pub z: Vec<i64>,
    pub w: f64,
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRow>, TrajectoryFileError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let z_cols: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("Z_")).collect();
    if z_cols.is_empty() {
        return Err(TrajectoryFileError::NoQueueColumns);
    }
    let col = |name: &str| header.iter().position(|h| h == name);
    let (t_col, kind_col, w_col) = match (col("t"), col("type"), col("W")) {
        (Some(t), Some(k), Some(w)) => (t, k, w),
        _ => return Err(TrajectoryFileError::BadRow { row: 0, detail: "missing t, type or W column".into() }),
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |detail: String| TrajectoryFileError::BadRow { row: i + 1, detail };
        let num = |c: usize| rec[c].parse::<f64>().map_err(|e| bad(format!("column {c}: {e}")));
        let kind = EventKind::parse(&rec[kind_col]).ok_or_else(|| bad(format!("unknown event type `{}`", &rec[kind_col])))?;
        let z = z_cols
            .iter()
            .map(|&c| rec[c].parse::<i64>().map_err(|e| bad(format!("column {c}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(EventRow { t: num(t_col)?, kind, z, w: num(w_col)? });
    }
    Ok(rows)
}
