use std::fmt::Write as _;

use thiserror::Error;

use super::{fd_scores_weighted, select_optimal, MeasureError, Selection, FD_WEIGHT_D, FD_WEIGHT_F};

const HEADER: &str = "# photoscore model-family ledger v1";
const COLUMNS: [&str; 10] =
    ["iteration", "f_all_raw", "d_measure", "f_hat", "d_hat", "fd", "fd_online", "train_size", "model", "per_class_f"];

/// One re-trained model in a family.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRecord {
    pub iteration: usize,
    pub f_all_raw: f64,
    pub d_measure: f64,
    /// F_all divided by the family maximum.
    pub f_hat: f64,
    /// D-measure divided by the family maximum.
    pub d_hat: f64,
    pub fd: f64,
    /// FD as it was when this record was appended (normalized over the
    /// family so far).
    pub fd_online: f64,
    pub train_size: usize,
    pub model: Option<String>,
    pub per_class_f: Vec<f64>,
}

impl LedgerRecord {
    pub fn new(iteration: usize, f_all_raw: f64, d_measure: f64) -> Self {
        Self {
            iteration,
            f_all_raw,
            d_measure,
            f_hat: 0.0,
            d_hat: 0.0,
            fd: 0.0,
            fd_online: 0.0,
            train_size: 0,
            model: None,
            per_class_f: Vec::new(),
        }
    }
}

/// Append-only record of a model family with family-wide normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamilyLedger {
    pub records: Vec<LedgerRecord>,
    pub threshold: f64,
    pub w1: f64,
    pub w2: f64,
    pub selection: Option<Selection>,
}

#[derive(Debug, Error)]
pub enum ParseLedgerError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

impl ModelFamilyLedger {
    pub fn new(threshold: f64) -> Self {
        Self { records: Vec::new(), threshold, w1: FD_WEIGHT_F, w2: FD_WEIGHT_D, selection: None }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record, renormalizes the family and returns the new record's
    /// FD under that normalization.
    pub fn push(&mut self, mut record: LedgerRecord) -> Result<f64, MeasureError> {
        record.iteration = self.records.len();
        self.records.push(record);
        if let Err(e) = self.renormalize() {
            self.records.pop();
            return Err(e);
        }
        let last = self.records.last_mut().expect("just pushed");
        last.fd_online = last.fd;
        self.selection = None;
        Ok(last.fd_online)
    }

    pub fn renormalize(&mut self) -> Result<(), MeasureError> {
        let f: Vec<f64> = self.records.iter().map(|r| r.f_all_raw).collect();
        let d: Vec<f64> = self.records.iter().map(|r| r.d_measure).collect();
        let scores = fd_scores_weighted(&f, &d, self.w1, self.w2)?;
        for (i, r) in self.records.iter_mut().enumerate() {
            r.f_hat = scores.f_hat[i];
            r.d_hat = scores.d_hat[i];
            r.fd = scores.fd[i];
        }
        Ok(())
    }

    pub fn apply_selection(&mut self) -> Result<Selection, MeasureError> {
        let sel = select_optimal(self)?;
        self.selection = Some(sel);
        Ok(sel)
    }

    /// Line-oriented text report. `generated_unix` adds a timestamp comment;
    /// pass `None` for byte-stable output.
    pub fn to_report(&self, generated_unix: Option<u64>) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        if let Some(ts) = generated_unix {
            let _ = writeln!(out, "# generated_unix {ts}");
        }
        let _ = writeln!(out, "threshold\t{:?}", self.threshold);
        let _ = writeln!(out, "weights\t{:?}\t{:?}", self.w1, self.w2);
        let _ = writeln!(out, "columns\t{}", COLUMNS.join("\t"));
        for r in &self.records {
            let per_class = if r.per_class_f.is_empty() { "-".to_string() } else { join_floats(&r.per_class_f) };
            let _ = writeln!(
                out,
                "record\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\t{}\t{}",
                r.iteration,
                r.f_all_raw,
                r.d_measure,
                r.f_hat,
                r.d_hat,
                r.fd,
                r.fd_online,
                r.train_size,
                r.model.as_deref().unwrap_or("-"),
                per_class,
            );
        }
        if let Some(sel) = &self.selection {
            out.push_str(&format_selection(sel));
            out.push('\n');
        }
        out
    }

    /// Parses a report produced by [`ModelFamilyLedger::to_report`]. Stored
    /// normalized values are kept as written; call `renormalize` to recompute.
    pub fn parse_report(text: &str) -> Result<Self, ParseLedgerError> {
        let mut ledger = ModelFamilyLedger::new(super::DEFAULT_FD_THRESHOLD);
        let mut saw_columns = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let bad = |msg: String| ParseLedgerError::Malformed { line, msg };
            let trimmed = raw.trim_end();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}")));
            match fields[0] {
                "threshold" if fields.len() == 2 => ledger.threshold = num(fields[1])?,
                "weights" if fields.len() == 3 => {
                    ledger.w1 = num(fields[1])?;
                    ledger.w2 = num(fields[2])?;
                }
                "columns" => {
                    if fields[1..] != COLUMNS {
                        return Err(bad("unexpected column layout".into()));
                    }
                    saw_columns = true;
                }
                "record" if fields.len() == COLUMNS.len() + 1 => {
                    if !saw_columns {
                        return Err(bad("record before columns line".into()));
                    }
                    let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad integer {s:?}: {e}")));
                    let per_class_f = if fields[10] == "-" {
                        Vec::new()
                    } else {
                        fields[10].split(',').map(num).collect::<Result<_, _>>()?
                    };
                    let rec = LedgerRecord {
                        iteration: int(fields[1])?,
                        f_all_raw: num(fields[2])?,
                        d_measure: num(fields[3])?,
                        f_hat: num(fields[4])?,
                        d_hat: num(fields[5])?,
                        fd: num(fields[6])?,
                        fd_online: num(fields[7])?,
                        train_size: int(fields[8])?,
                        model: (fields[9] != "-").then(|| fields[9].to_string()),
                        per_class_f,
                    };
                    if rec.iteration != ledger.records.len() {
                        return Err(bad(format!(
                            "expected iteration {}, found {}",
                            ledger.records.len(),
                            rec.iteration
                        )));
                    }
                    ledger.records.push(rec);
                }
                "selection" => {}
                other => return Err(bad(format!("unrecognized line kind {other:?}"))),
            }
        }
        if !ledger.records.is_empty() {
            ledger.apply_selection()?;
        }
        Ok(ledger)
    }
}

pub(crate) fn format_selection(sel: &Selection) -> String {
    match *sel {
        Selection::Optimal { index, fd, by_f, by_d, by_fd } => {
            format!("selection\toptimal\t{index}\tfd\t{fd:?}\tby_f\t{by_f}\tby_d\t{by_d}\tby_fd\t{by_fd}")
        }
        Selection::NotConverged { by_f, by_d, by_fd, fd_at_by_f } => {
            format!("selection\tnot_converged\t-\tfd\t{fd_at_by_f:?}\tby_f\t{by_f}\tby_d\t{by_d}\tby_fd\t{by_fd}")
        }
    }
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelFamilyLedger {
        let mut l = ModelFamilyLedger::new(0.95);
        for (f, d) in [(3.1, 1.2), (3.5, 1.1), (3.4, 1.25)] {
            let mut r = LedgerRecord::new(0, f, d);
            r.train_size = 100;
            r.per_class_f = vec![0.1, 0.25];
            l.push(r).unwrap();
        }
        l.apply_selection().unwrap();
        l
    }

    #[test]
    fn push_tracks_online_fd() {
        let mut l = ModelFamilyLedger::new(0.95);
        assert_eq!(l.push(LedgerRecord::new(0, 2.0, 1.0)).unwrap(), 1.0);
        let online = l.push(LedgerRecord::new(0, 1.0, 2.0)).unwrap();
        assert_eq!(online, 0.75);
        assert_eq!(l.records[0].fd, 0.75);
        assert_eq!(l.records[0].fd_online, 1.0);
        assert_eq!(l.records[1].iteration, 1);
    }

    #[test]
    fn report_round_trip() {
        let l = sample();
        let text = l.to_report(None);
        let back = ModelFamilyLedger::parse_report(&text).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.to_report(None), text);
        assert!(l.to_report(Some(7)).contains("# generated_unix 7"));
    }

    #[test]
    fn parse_rejects_garbage() {
        let err = ModelFamilyLedger::parse_report("threshold\tabc\n").unwrap_err();
        assert!(matches!(err, ParseLedgerError::Malformed { line: 1, .. }));
        let err = ModelFamilyLedger::parse_report("bogus\n").unwrap_err();
        assert!(matches!(err, ParseLedgerError::Malformed { .. }));
    }
}
