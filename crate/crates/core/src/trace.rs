//! Per-evaluation progress records and their CSV form.
//!
//! Header: `rep,n,x1..xd,f,c1..cm,valid,best_valid_f,lambda1..lambdam,rho,k,decision`.
//! Floats are written in shortest round-trip form; missing values are `NA`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::auglag::AlParams;
use crate::error::{Error, Result};
use crate::problem::Evaluation;

const NA: &str = "NA";

/// What produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// Space-filling initial design.
    Init,
    /// Chosen by the predictive mean of the composite.
    Ey,
    /// Chosen by expected improvement.
    Ei,
    Sann,
    Oic,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Init => "init",
            Decision::Ey => "EY",
            Decision::Ei => "EI",
            Decision::Sann => "SANN",
            Decision::Oic => "OIC",
        })
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "init" => Decision::Init,
            "EY" => Decision::Ey,
            "EI" => Decision::Ei,
            "SANN" => Decision::Sann,
            "OIC" => Decision::Oic,
            _ => return Err(Error::invalid(format!("unknown decision `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub c: Vec<f64>,
    pub valid: bool,
    /// Running minimum of `f` over strictly valid rows; `None` until one exists.
    pub best_valid_f: Option<f64>,
    /// AL state in force when the point was chosen; `None` for methods
    /// outside the AL framework.
    pub al: Option<AlParams>,
    pub decision: Decision,
}

impl TraceRow {
    pub fn evaluation(&self) -> Evaluation {
        Evaluation {
            index: self.n,
            x: self.x.clone(),
            f: self.f,
            c: self.c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressTrace {
    dim: usize,
    m: usize,
    rows: Vec<TraceRow>,
}

impl ProgressTrace {
    pub fn new(dim: usize, m: usize) -> Self {
        ProgressTrace {
            dim,
            m,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_constraints(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, eval: &Evaluation, al: Option<&AlParams>, decision: Decision) {
        let valid = eval.is_valid();
        let prev = self.rows.last().and_then(|r| r.best_valid_f);
        let best_valid_f = match (prev, valid) {
            (Some(b), true) => Some(b.min(eval.f)),
            (None, true) => Some(eval.f),
            (b, false) => b,
        };
        self.rows.push(TraceRow {
            n: self.rows.len() + 1,
            x: eval.x.clone(),
            f: eval.f,
            c: eval.c.clone(),
            valid,
            best_valid_f,
            al: al.cloned(),
            decision,
        });
    }

    /// Best strictly valid objective among the first `n` rows.
    pub fn best_valid_at(&self, n: usize) -> Option<f64> {
        self.rows.get(n.checked_sub(1)?).and_then(|r| r.best_valid_f)
    }

    /// Best objective among the first `n` rows whose constraint violation
    /// `max_j max(0, c_j)` is at most `tol`.
    pub fn best_relaxed_at(&self, n: usize, tol: f64) -> Option<f64> {
        self.rows
            .iter()
            .take(n)
            .filter(|r| r.c.iter().all(|c| *c <= tol))
            .map(|r| r.f)
            .fold(None, |b: Option<f64>, f| Some(b.map_or(f, |b| b.min(f))))
    }

    pub fn evaluations(&self) -> Vec<Evaluation> {
        self.rows.iter().map(TraceRow::evaluation).collect()
    }

    pub fn header(dim: usize, m: usize) -> Vec<String> {
        let mut h = vec!["rep".to_string(), "n".to_string()];
        h.extend((1..=dim).map(|i| format!("x{i}")));
        h.push("f".into());
        h.extend((1..=m).map(|j| format!("c{j}")));
        h.push("valid".into());
        h.push("best_valid_f".into());
        h.extend((1..=m).map(|j| format!("lambda{j}")));
        h.extend(["rho", "k", "decision"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, writer: W, rep: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header(self.dim, self.m))?;
        for row in &self.rows {
            let mut rec = vec![rep.to_string(), row.n.to_string()];
            rec.extend(row.x.iter().map(f64::to_string));
            rec.push(row.f.to_string());
            rec.extend(row.c.iter().map(f64::to_string));
            rec.push(if row.valid { "1" } else { "0" }.to_string());
            rec.push(fmt_opt(row.best_valid_f));
            match &row.al {
                Some(al) => {
                    rec.extend(al.lambda.iter().map(f64::to_string));
                    rec.push(al.rho.to_string());
                    rec.push(al.k.to_string());
                }
                None => rec.extend(std::iter::repeat_n(NA.to_string(), self.m + 2)),
            }
            rec.push(row.decision.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a trace written by [`write_csv`](Self::write_csv). Returns the
    /// repetition index with the trace.
    pub fn read_csv<R: Read>(reader: R) -> Result<(usize, ProgressTrace)> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let dim = header.iter().filter(|h| is_indexed(h, "x")).count();
        let m = header.iter().filter(|h| is_indexed(h, "c")).count();
        if header != Self::header(dim, m) {
            return Err(Error::invalid(format!("unexpected trace header {header:?}")));
        }
        let mut trace = ProgressTrace::new(dim, m);
        let mut rep = 0;
        for rec in r.records() {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().collect();
            let mut it = fields.into_iter();
            let mut next = || it.next().ok_or_else(|| Error::invalid("short trace record"));
            rep = parse_num(next()?)?;
            let n: usize = parse_num(next()?)?;
            let x = (0..dim).map(|_| parse_num(next()?)).collect::<Result<Vec<f64>>>()?;
            let f = parse_num(next()?)?;
            let c = (0..m).map(|_| parse_num(next()?)).collect::<Result<Vec<f64>>>()?;
            let valid = match next()? {
                "1" => true,
                "0" => false,
                other => return Err(Error::invalid(format!("bad valid flag `{other}`"))),
            };
            let best_valid_f = parse_opt(next()?)?;
            let lambda = (0..m).map(|_| parse_opt(next()?)).collect::<Result<Vec<_>>>()?;
            let rho = parse_opt(next()?)?;
            let k = next()?;
            let al = match rho {
                Some(rho) => Some(AlParams {
                    lambda: lambda
                        .into_iter()
                        .map(|l| l.ok_or_else(|| Error::invalid("missing multiplier")))
                        .collect::<Result<_>>()?,
                    rho,
                    k: parse_num(k)?,
                }),
                None => None,
            };
            let decision = next()?.parse()?;
            if n != trace.rows.len() + 1 {
                return Err(Error::invalid(format!("trace rows out of order at n = {n}")));
            }
            trace.rows.push(TraceRow {
                n,
                x,
                f,
                c,
                valid,
                best_valid_f,
                al,
                decision,
            });
        }
        Ok((rep, trace))
    }
}

fn is_indexed(h: &str, prefix: &str) -> bool {
    h.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::invalid(format!("cannot parse trace field `{s}`")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == NA {
        Ok(None)
    } else {
        parse_num(s).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(f: f64, c: Vec<f64>) -> Evaluation {
        Evaluation {
            index: 0,
            x: vec![0.25, 1.0 / 3.0],
            f,
            c,
        }
    }

    #[test]
    fn best_valid_is_running_min_over_valid_rows() {
        let mut t = ProgressTrace::new(2, 1);
        t.push(&ev(0.5, vec![0.1]), None, Decision::Init);
        t.push(&ev(0.9, vec![-0.1]), None, Decision::Init);
        t.push(&ev(0.4, vec![0.2]), None, Decision::Ei);
        t.push(&ev(0.7, vec![0.0]), None, Decision::Ei);
        let best: Vec<_> = t.rows().iter().map(|r| r.best_valid_f).collect();
        assert_eq!(best, vec![None, Some(0.9), Some(0.9), Some(0.7)]);
        assert_eq!(t.best_valid_at(0), None);
        assert_eq!(t.best_valid_at(4), Some(0.7));
        assert_eq!(t.best_relaxed_at(3, 0.15), Some(0.5));
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            ProgressTrace::header(2, 2).join(","),
            "rep,n,x1,x2,f,c1,c2,valid,best_valid_f,lambda1,lambda2,rho,k,decision"
        );
    }

    #[test]
    fn csv_round_trip_with_and_without_al() {
        let mut t = ProgressTrace::new(2, 2);
        let al = AlParams {
            lambda: vec![0.1 + 0.2, 0.0],
            rho: 0.125,
            k: 3,
        };
        t.push(&ev(0.1 + 0.7, vec![1e-17, -2.5]), Some(&al), Decision::Ey);
        t.push(&ev(0.6, vec![-1e-3, -2.5]), None, Decision::Sann);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, 7).unwrap();
        let (rep, back) = ProgressTrace::read_csv(&buf[..]).unwrap();
        assert_eq!(rep, 7);
        assert_eq!(back, t);
    }
}
